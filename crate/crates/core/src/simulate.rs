//! Time integration of the decoupled reaction-diffusion system on an
//! interval, plus run-time monitors that watch the invariant region and the
//! Lyapunov functional along the trajectory.
//!
//! Everything here works in the coordinates where diffusion is diagonal:
//! `m` scalar heat equations coupled only through the reaction term. The
//! grid covers the closed interval with nodes `x_i = i*dx` for
//! `i = 0..=n_x+1` and `dx = length/(n_x+1)`, so both endpoints carry
//! nodes. Fields are stored component-major, `state[l*n + i]` with
//! `n = n_x + 2` points per component.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;
use crate::lyapunov::LyapunovPolynomial;
use crate::reaction::ReactionSpec;
use crate::regions::{self, RegionSpec};
use crate::spectral::{diagonalizing_transform, DiagonalizingTransform, ToeplitzDiffusion};
use crate::tridiag;

/// A state whose sup-norm passes this limit ends the run as a finite-time
/// blow-up; the report keeps everything recorded up to the last finite state.
pub const BLOW_UP_LIMIT: f64 = 1e12;

/// Reaction-driven step cap: `dt <= 1 / (REACTION_DT_FACTOR * L)` where `L`
/// is the sampled Lipschitz estimate. Forward Euler on the reaction term is
/// the accuracy bottleneck of the split scheme, so the cap scales with the
/// reaction alone.
pub const REACTION_DT_FACTOR: f64 = 10.0;

/// Points drawn when estimating the reaction's Lipschitz constant. The
/// estimate samples the Jacobian on a box around the initial data; it is a
/// step-size heuristic, not a certified bound.
pub const LIPSCHITZ_SAMPLES: usize = 64;

/// Diffusion stability cap for the fully explicit scheme:
/// `dt <= EXPLICIT_DIFFUSION_CFL * dx^2 / lambda_max`.
pub const EXPLICIT_DIFFUSION_CFL: f64 = 0.5;

/// The pointwise form-sign check accepts eigenvalues down to
/// `-FORM_SIGN_TOL` times the form's largest entry, absorbing the rounding
/// of the Jacobi eigensolver on forms that are exactly singular.
pub const FORM_SIGN_TOL: f64 = 1e-10;

/// Hard ceiling on the number of time steps one run may take, so a
/// pathological Lipschitz estimate fails loudly instead of spinning.
const MAX_STEPS: usize = 1_000_000_000;

/// Nodes handled per work chunk when evaluating the reaction field.
const REACT_BLOCK: usize = 512;

/// Uniform grid on `[0, length]` with `n_x` interior nodes. Both endpoints
/// are nodes, so a field has `n_x + 2` values per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n_x: usize,
    pub length: f64,
}

impl GridSpec {
    pub fn n_points(&self) -> usize {
        self.n_x + 2
    }

    pub fn dx(&self) -> f64 {
        self.length / (self.n_x + 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.dx() * i as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n_x == 0 {
            return Err(Error::InvalidInput(
                "grid needs at least one interior node".into(),
            ));
        }
        if !self.length.is_finite() || self.length <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "interval length must be positive and finite, got {}",
                self.length
            )));
        }
        Ok(())
    }
}

/// How the two endpoints close the stencil. Both ends share one condition.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryKind {
    /// `w = data` on both ends. Boundary nodes are pinned and drop out of
    /// the solve; initial data at the endpoints is overwritten by the
    /// boundary values.
    Dirichlet,
    /// `alpha*w + (1-alpha)*dw/dnu = data` with `nu` the outward normal and
    /// `0 <= alpha < 1` (use [`BoundaryKind::Dirichlet`] for `alpha = 1`).
    /// `alpha = 0` prescribes the flux itself. With `diffusion_weighted`
    /// the condition constrains the diffusive flux `lambda_l * dw/dnu`
    /// instead of the bare normal derivative.
    Robin { alpha: f64, diffusion_weighted: bool },
}

/// Boundary data and the kind of condition it feeds. `values` has one entry
/// per component and is given in the original species coordinates; it is
/// mapped through the same linear change of variables as the state.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    pub values: Vec<f64>,
}

impl BoundarySpec {
    pub fn dirichlet(values: Vec<f64>) -> Self {
        Self {
            kind: BoundaryKind::Dirichlet,
            values,
        }
    }

    /// Zero-flux ends: nothing enters or leaves the interval.
    pub fn insulated(m: usize) -> Self {
        Self::neumann(vec![0.0; m])
    }

    /// Prescribed normal derivative on both ends.
    pub fn neumann(values: Vec<f64>) -> Self {
        Self {
            kind: BoundaryKind::Robin {
                alpha: 0.0,
                diffusion_weighted: false,
            },
            values,
        }
    }

    pub fn robin(alpha: f64, diffusion_weighted: bool, values: Vec<f64>) -> Self {
        Self {
            kind: BoundaryKind::Robin {
                alpha,
                diffusion_weighted,
            },
            values,
        }
    }
}

/// Initial field, in the diagonal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// One constant per component.
    Const(Vec<f64>),
    /// `offset + amplitude * sin(pi x / length)` in every component; the
    /// sine vanishes at both endpoints.
    Sin { offset: f64, amplitude: f64 },
    /// Full field, component-major, length `m * (n_x + 2)`.
    Field(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Backward Euler on diffusion (unconditionally stable), forward Euler
    /// on the reaction. The step cap comes from the reaction alone.
    Imex,
    /// Forward Euler on everything. Adds the `dx^2` diffusion cap, but a
    /// step is a single linear pass, so it commutes exactly with linear
    /// changes of variables.
    Explicit,
}

/// Everything a run needs besides the problem ingredients themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSetup {
    pub grid: GridSpec,
    pub boundary: BoundarySpec,
    pub initial: InitialData,
    pub scheme: Scheme,
    /// Requested step; the run may shrink it to satisfy the caps and then
    /// divides the horizon evenly so the final time is hit exactly.
    pub dt: f64,
    pub t_end: f64,
    /// Steps between monitor rows; 0 is treated as 1. The initial and final
    /// states are always monitored.
    pub monitor_every: usize,
    /// Full-field snapshots, spread evenly over the run (first at t = 0,
    /// last at t_end). 0 disables snapshots, 1 keeps only the final state.
    pub n_snapshots: usize,
}

/// One monitor sample. `mass` and the Lyapunov integral use the trapezoid
/// rule, whose weight vector is exactly stationary for the insulated
/// ghost-node closure.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    /// Integral of the Lyapunov density over the interval.
    pub lyapunov: f64,
    /// `max(lyapunov, 0)^(1/degree)`, the scale-invariant envelope variable.
    pub z: f64,
    /// Smallest region slack over all nodes, measured after mapping back to
    /// the original coordinates, so it also exercises the transform.
    pub min_slack: f64,
    /// Per-component minimum over the grid.
    pub min_w: Vec<f64>,
    /// Per-component trapezoid integral over the grid.
    pub mass: Vec<f64>,
}

/// Full state capture, component-major like the evolving field.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub state: Vec<f64>,
}

/// Least-squares fit of `degree * dZ/dt = slope * Z + intercept` over
/// consecutive monitor rows, the discrete form of the growth envelope the
/// Lyapunov argument predicts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Number of row pairs behind the fit.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub m: usize,
    pub n_points: usize,
    pub dx: f64,
    /// The uniform step actually taken, after the caps.
    pub dt_effective: f64,
    /// Accepted steps. Smaller than planned exactly when the run blew up.
    pub steps_taken: usize,
    pub rows: Vec<MonitorRow>,
    pub snapshots: Vec<Snapshot>,
    /// Time at which the state left the finite range, if it did. The run
    /// still returns `Ok`; everything recorded before that step is kept.
    pub blow_up: Option<f64>,
    /// Present when the run finished and produced at least three rows.
    pub envelope: Option<EnvelopeFit>,
    /// Last finite state, component-major.
    pub final_state: Vec<f64>,
    pub final_t: f64,
}

/// Integrates the system and returns the full report. Blow-up is a regular
/// outcome (`Ok` with `blow_up` set); errors are reserved for inconsistent
/// inputs and capacity limits.
pub fn run(
    diffusion: &ToeplitzDiffusion,
    region: &RegionSpec,
    reaction: &ReactionSpec,
    poly: &LyapunovPolynomial,
    setup: &SimSetup,
) -> Result<SimReport> {
    let m = diffusion.m();
    if region.m() != m || reaction.m() != m || poly.m() != m {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: diffusion m = {}, region m = {}, reaction m = {}, polynomial m = {}",
            m,
            region.m(),
            reaction.m(),
            poly.m()
        )));
    }
    setup.grid.validate()?;
    if !setup.dt.is_finite() || setup.dt <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "time step must be positive and finite, got {}",
            setup.dt
        )));
    }
    if !setup.t_end.is_finite() || setup.t_end <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "final time must be positive and finite, got {}",
            setup.t_end
        )));
    }
    let parabolicity = diffusion.parabolicity();
    if !parabolicity.holds {
        return Err(Error::InvalidInput(format!(
            "diffusion is not parabolic (margin {:e}); the split scheme needs every decoupled diffusivity positive",
            parabolicity.margin
        )));
    }
    if setup.boundary.values.len() != m {
        return Err(Error::InvalidInput(format!(
            "boundary data has {} entries, the system has {} components",
            setup.boundary.values.len(),
            m
        )));
    }
    if setup.boundary.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("boundary data must be finite".into()));
    }
    if let BoundaryKind::Robin { alpha, .. } = setup.boundary.kind {
        if !(0.0..1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in [0, 1), got {alpha}; alpha = 1 is the Dirichlet kind"
            )));
        }
    }

    let spectrum = diffusion.spectrum();
    let transform = diagonalizing_transform(&spectrum, region)?;
    let lambdas = spectrum.lambdas().to_vec();
    let n = setup.grid.n_points();
    let dx = setup.grid.dx();
    // Boundary data expressed in the diagonal coordinates.
    let bc_diag = transform.to_diag(&setup.boundary.values);

    // Ghost-node closure coefficients per component. Eliminating the ghost
    // value from the centered second difference at an endpoint gives the row
    //   2/dx^2 * w_inner - (2 + 2 dx sigma)/dx^2 * w_end + 2 gamma / dx
    // with sigma = alpha/(1-alpha) and gamma = data/(1-alpha); the
    // diffusion-weighted form divides both by lambda_l.
    let (sigma, gamma): (Vec<f64>, Vec<f64>) = match setup.boundary.kind {
        BoundaryKind::Dirichlet => (vec![0.0; m], vec![0.0; m]),
        BoundaryKind::Robin {
            alpha,
            diffusion_weighted,
        } => (0..m)
            .map(|l| {
                let weight = if diffusion_weighted { lambdas[l] } else { 1.0 };
                (
                    alpha / (1.0 - alpha) / weight,
                    bc_diag[l] / (1.0 - alpha) / weight,
                )
            })
            .unzip(),
    };

    let mut state = build_initial(m, &setup.grid, &setup.initial)?;
    let dirichlet = matches!(setup.boundary.kind, BoundaryKind::Dirichlet);
    if dirichlet {
        for l in 0..m {
            state[l * n] = bc_diag[l];
            state[l * n + n - 1] = bc_diag[l];
        }
    }

    // Step caps. The reaction cap uses a sampled Lipschitz estimate on a box
    // around the initial data; the explicit scheme additionally respects the
    // diffusion stability limit of the stiffest component.
    let w0_sup = state.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    let lip = lipschitz_estimate(reaction, w0_sup);
    let mut dt_cap = setup.dt;
    if lip > 0.0 {
        dt_cap = dt_cap.min(1.0 / (REACTION_DT_FACTOR * lip));
    }
    if setup.scheme == Scheme::Explicit {
        dt_cap = dt_cap.min(EXPLICIT_DIFFUSION_CFL * dx * dx / spectrum.lambda_max());
    }
    // Divide the horizon evenly so the last step lands on t_end exactly; the
    // small slack keeps an exact division from picking up a spurious step.
    let steps_f = (setup.t_end / dt_cap - 1e-9).ceil().max(1.0);
    if !steps_f.is_finite() || steps_f > MAX_STEPS as f64 {
        return Err(Error::Capacity {
            what: "time steps",
            requested: if steps_f.is_finite() {
                steps_f as u128
            } else {
                u128::MAX
            },
            limit: MAX_STEPS as u128,
        });
    }
    let n_steps = steps_f as usize;
    let dt = setup.t_end / n_steps as f64;

    // Implicit factors are constant in time, one tridiagonal per component.
    let factors = match setup.scheme {
        Scheme::Imex => Some(build_implicit_factors(
            m, n, dx, dt, &lambdas, &sigma, dirichlet,
        )),
        Scheme::Explicit => None,
    };

    let snap_steps = snapshot_steps(setup.n_snapshots, n_steps);
    let monitor_every = setup.monitor_every.max(1);

    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut snap_cursor = 0;
    let monitor = |t: f64, field: &[f64]| -> MonitorRow {
        monitor_row(t, field, m, n, dx, poly, &transform, &spectrum, region)
    };
    rows.push(monitor(0.0, &state));
    if snap_steps.first() == Some(&0) {
        snapshots.push(Snapshot {
            t: 0.0,
            state: state.clone(),
        });
        snap_cursor = 1;
    }

    let mut next = vec![0.0_f64; m * n];
    let mut fbuf = vec![0.0_f64; n * m];
    let mut blow_up = None;
    let mut steps_taken = 0;
    let mut last_row_step = 0;

    for step in 1..=n_steps {
        reaction_field(reaction, &state, m, n, &mut fbuf);
        match setup.scheme {
            Scheme::Imex => {
                let f = factors.as_ref().expect("factors exist for the implicit scheme");
                imex_step(
                    &state, &fbuf, &mut next, m, n, dx, dt, &lambdas, &gamma, &bc_diag, dirichlet,
                    f,
                );
            }
            Scheme::Explicit => {
                explicit_step(
                    &state, &fbuf, &mut next, m, n, dx, dt, &lambdas, &sigma, &gamma, &bc_diag,
                    dirichlet,
                );
            }
        }
        std::mem::swap(&mut state, &mut next);
        let t = step as f64 * dt;

        let sup = state.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
        if !sup.is_finite() || sup > BLOW_UP_LIMIT {
            // `next` holds the pre-step state after the swap; report that as
            // the final field and stamp the blow-up at the failed step.
            blow_up = Some(t);
            std::mem::swap(&mut state, &mut next);
            break;
        }
        steps_taken = step;

        while snap_cursor < snap_steps.len() && snap_steps[snap_cursor] == step {
            snapshots.push(Snapshot {
                t,
                state: state.clone(),
            });
            snap_cursor += 1;
        }
        if step % monitor_every == 0 || step == n_steps {
            rows.push(monitor(t, &state));
            last_row_step = step;
        }
    }
    if blow_up.is_none() && last_row_step != n_steps {
        // Unreachable with the schedule above, kept as a guard for future
        // schedule edits: the final state must always be monitored.
        rows.push(monitor(n_steps as f64 * dt, &state));
    }

    let envelope = if blow_up.is_none() {
        envelope_fit(&rows, poly.degree() as f64)
    } else {
        None
    };
    let final_t = steps_taken as f64 * dt;
    Ok(SimReport {
        m,
        n_points: n,
        dx,
        dt_effective: dt,
        steps_taken,
        rows,
        snapshots,
        blow_up,
        envelope,
        final_state: state,
        final_t,
    })
}

fn build_initial(m: usize, grid: &GridSpec, data: &InitialData) -> Result<Vec<f64>> {
    let n = grid.n_points();
    let mut state = vec![0.0_f64; m * n];
    match data {
        InitialData::Const(values) => {
            if values.len() != m {
                return Err(Error::InvalidInput(format!(
                    "initial constants have {} entries for {} components",
                    values.len(),
                    m
                )));
            }
            for (l, &v) in values.iter().enumerate() {
                state[l * n..(l + 1) * n].fill(v);
            }
        }
        InitialData::Sin { offset, amplitude } => {
            for i in 0..n {
                let v = offset
                    + amplitude * (std::f64::consts::PI * grid.x(i) / grid.length).sin();
                for l in 0..m {
                    state[l * n + i] = v;
                }
            }
        }
        InitialData::Field(field) => {
            if field.len() != m * n {
                return Err(Error::InvalidInput(format!(
                    "initial field has {} values, the grid wants {} ({} components x {} points)",
                    field.len(),
                    m * n,
                    m,
                    n
                )));
            }
            state.copy_from_slice(field);
        }
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial data must be finite".into()));
    }
    Ok(state)
}

/// Largest sampled Jacobian row sum on the box `[0, 2*sup|W0| + 1]^m`.
/// The box covers moderate transient growth above the initial data; the
/// fixed seed keeps reruns byte-identical.
fn lipschitz_estimate(reaction: &ReactionSpec, w0_sup: f64) -> f64 {
    let m = reaction.m();
    let hi = 2.0 * w0_sup + 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(exec::mix64(0x4C1F_0E57_1A7E));
    let mut lip = 0.0_f64;
    let mut w = vec![0.0_f64; m];
    for _ in 0..LIPSCHITZ_SAMPLES {
        for x in w.iter_mut() {
            *x = rng.gen::<f64>() * hi;
        }
        // max ignores NaN rows, so a sample outside an expression's good
        // range cannot poison the estimate.
        lip = lip.max(reaction.jacobian(&w).norm_inf());
    }
    lip
}

/// Node-major reaction values: `fbuf[i*m + l] = f_l(W(x_i))`. Node-major
/// keeps each work chunk contiguous while the state stays component-major.
fn reaction_field(reaction: &ReactionSpec, state: &[f64], m: usize, n: usize, fbuf: &mut [f64]) {
    exec::for_each_chunk_mut(fbuf, REACT_BLOCK * m, |chunk_idx, chunk| {
        let base = chunk_idx * REACT_BLOCK;
        let mut w = vec![0.0_f64; m];
        let mut f = vec![0.0_f64; m];
        for (j, node_out) in chunk.chunks_mut(m).enumerate() {
            let i = base + j;
            for l in 0..m {
                w[l] = state[l * n + i];
            }
            reaction.eval_poly(&w, &mut f);
            node_out.copy_from_slice(&f);
        }
    });
}

struct ImplicitFactors {
    /// One (sub, diag, sup) triple per component; Dirichlet factors cover
    /// only the interior nodes.
    sub: Vec<Vec<f64>>,
    diag: Vec<Vec<f64>>,
    sup: Vec<Vec<f64>>,
}

fn build_implicit_factors(
    m: usize,
    n: usize,
    dx: f64,
    dt: f64,
    lambdas: &[f64],
    sigma: &[f64],
    dirichlet: bool,
) -> ImplicitFactors {
    let mut sub = Vec::with_capacity(m);
    let mut diag = Vec::with_capacity(m);
    let mut sup = Vec::with_capacity(m);
    for l in 0..m {
        let r = dt * lambdas[l] / (dx * dx);
        if dirichlet {
            let inner = n - 2;
            sub.push(vec![-r; inner.saturating_sub(1)]);
            diag.push(vec![1.0 + 2.0 * r; inner]);
            sup.push(vec![-r; inner.saturating_sub(1)]);
        } else {
            let mut d = vec![1.0 + 2.0 * r; n];
            let end = 1.0 + r * (2.0 + 2.0 * dx * sigma[l]);
            d[0] = end;
            d[n - 1] = end;
            let mut s = vec![-r; n - 1];
            s[0] = -2.0 * r;
            let mut b = vec![-r; n - 1];
            b[n - 2] = -2.0 * r;
            sub.push(b);
            diag.push(d);
            sup.push(s);
        }
    }
    ImplicitFactors { sub, diag, sup }
}

#[allow(clippy::too_many_arguments)]
fn imex_step(
    state: &[f64],
    fbuf: &[f64],
    next: &mut [f64],
    m: usize,
    n: usize,
    dx: f64,
    dt: f64,
    lambdas: &[f64],
    gamma: &[f64],
    bc_diag: &[f64],
    dirichlet: bool,
    factors: &ImplicitFactors,
) {
    exec::for_each_chunk_mut(next, n, |l, out| {
        let w = &state[l * n..(l + 1) * n];
        let r = dt * lambdas[l] / (dx * dx);
        let ok = if dirichlet {
            out[0] = bc_diag[l];
            out[n - 1] = bc_diag[l];
            for i in 1..n - 1 {
                out[i] = w[i] + dt * fbuf[i * m + l];
            }
            // Pinned neighbors enter the interior rows as data.
            out[1] += r * bc_diag[l];
            out[n - 2] += r * bc_diag[l];
            let mut scratch = vec![0.0_f64; n - 2];
            tridiag::solve_into(
                &factors.sub[l],
                &factors.diag[l],
                &factors.sup[l],
                &mut scratch,
                &mut out[1..n - 1],
            )
        } else {
            for i in 0..n {
                out[i] = w[i] + dt * fbuf[i * m + l];
            }
            let flux = dt * lambdas[l] * 2.0 * gamma[l] / dx;
            out[0] += flux;
            out[n - 1] += flux;
            let mut scratch = vec![0.0_f64; n];
            tridiag::solve_into(
                &factors.sub[l],
                &factors.diag[l],
                &factors.sup[l],
                &mut scratch,
                out,
            )
        };
        if !ok {
            // The factors are strictly diagonally dominant, so a failed
            // pivot means the right-hand side already went non-finite.
            // Poison the component and let the blow-up check catch it.
            out.fill(f64::NAN);
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn explicit_step(
    state: &[f64],
    fbuf: &[f64],
    next: &mut [f64],
    m: usize,
    n: usize,
    dx: f64,
    dt: f64,
    lambdas: &[f64],
    sigma: &[f64],
    gamma: &[f64],
    bc_diag: &[f64],
    dirichlet: bool,
) {
    let inv = 1.0 / (dx * dx);
    exec::for_each_chunk_mut(next, n, |l, out| {
        let w = &state[l * n..(l + 1) * n];
        let lam = lambdas[l];
        for i in 1..n - 1 {
            let lap = (w[i - 1] - 2.0 * w[i] + w[i + 1]) * inv;
            out[i] = w[i] + dt * (lam * lap + fbuf[i * m + l]);
        }
        if dirichlet {
            out[0] = bc_diag[l];
            out[n - 1] = bc_diag[l];
        } else {
            let edge = 2.0 + 2.0 * dx * sigma[l];
            let flux = 2.0 * gamma[l] / dx;
            let lap0 = (2.0 * w[1] - edge * w[0]) * inv + flux;
            out[0] = w[0] + dt * (lam * lap0 + fbuf[l]);
            let lap1 = (2.0 * w[n - 2] - edge * w[n - 1]) * inv + flux;
            out[n - 1] = w[n - 1] + dt * (lam * lap1 + fbuf[(n - 1) * m + l]);
        }
    });
}

fn snapshot_steps(n_snapshots: usize, n_steps: usize) -> Vec<usize> {
    match n_snapshots {
        0 => Vec::new(),
        1 => vec![n_steps],
        k => {
            let mut steps: Vec<usize> = (0..k)
                .map(|j| {
                    ((j * n_steps) as f64 / (k - 1) as f64).round() as usize
                })
                .collect();
            steps.dedup();
            steps
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn monitor_row(
    t: f64,
    field: &[f64],
    m: usize,
    n: usize,
    dx: f64,
    poly: &LyapunovPolynomial,
    transform: &DiagonalizingTransform,
    spectrum: &crate::spectral::Spectrum,
    region: &RegionSpec,
) -> MonitorRow {
    let mut lyapunov = 0.0_f64;
    let mut min_slack = f64::INFINITY;
    let mut min_w = vec![f64::INFINITY; m];
    let mut mass = vec![0.0_f64; m];
    let mut w = vec![0.0_f64; m];
    for i in 0..n {
        let weight = if i == 0 || i == n - 1 { 0.5 * dx } else { dx };
        for l in 0..m {
            let v = field[l * n + i];
            w[l] = v;
            if v < min_w[l] {
                min_w[l] = v;
            }
            mass[l] += weight * v;
        }
        // The density can overflow near blow-up; an infinite integral is
        // still an honest monitor value.
        lyapunov += weight * poly.eval(&w).unwrap_or(f64::INFINITY);
        let u = transform.from_diag(&w);
        let report = regions::membership(region, spectrum, &u, None);
        let slack = report.slacks[report.worst_index];
        if slack < min_slack {
            min_slack = slack;
        }
    }
    let z = lyapunov.max(0.0).powf(1.0 / poly.degree() as f64);
    MonitorRow {
        t,
        lyapunov,
        z,
        min_slack,
        min_w,
        mass,
    }
}

/// Fits `degree * dZ/dt = slope * Z + intercept` by least squares, using
/// midpoint Z values and forward differences between consecutive rows.
/// Returns `None` when fewer than two usable pairs exist or the Z values
/// carry no spread to identify a slope.
fn envelope_fit(rows: &[MonitorRow], degree: f64) -> Option<EnvelopeFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.t - a.t;
        if dt <= 0.0 || !a.z.is_finite() || !b.z.is_finite() {
            continue;
        }
        xs.push(0.5 * (a.z + b.z));
        ys.push(degree * (b.z - a.z) / dt);
    }
    let k = xs.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = kf * sxx - sx * sx;
    if denom.abs() <= 1e-12 * (kf * sxx).abs().max(f64::MIN_POSITIVE) {
        return None;
    }
    let slope = (kf * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / kf;
    Some(EnvelopeFit {
        slope,
        intercept,
        points: k,
    })
}

/// Outcome of the pointwise second-order form check.
#[derive(Debug, Clone, PartialEq)]
pub struct FormSignReport {
    pub holds: bool,
    /// Smallest eigenvalue seen, relative to its form's largest entry.
    pub worst_ratio: f64,
    /// Node where `worst_ratio` occurred.
    pub worst_node: usize,
    pub nodes_checked: usize,
}

/// Checks, at every node of a field, that the matrix with entries
/// `(lambda_l + lambda_k)/2 * Hess(H)_{lk}` is positive semidefinite up to
/// [`FORM_SIGN_TOL`]. This is the pointwise form whose sign makes the
/// diffusion contribution to `dL/dt` dissipative.
pub fn verify_form_sign(
    lambdas: &[f64],
    poly: &LyapunovPolynomial,
    field: &[f64],
    n_points: usize,
) -> Result<FormSignReport> {
    let m = poly.m();
    if lambdas.len() != m {
        return Err(Error::InvalidInput(format!(
            "{} diffusivities for an m = {} polynomial",
            lambdas.len(),
            m
        )));
    }
    if n_points == 0 || field.len() != m * n_points {
        return Err(Error::InvalidInput(format!(
            "field has {} values, expected {} components x {} points",
            field.len(),
            m,
            n_points
        )));
    }
    let per_node: Vec<Result<(f64, f64)>> = exec::map_indexed(n_points, 16 * m * m, |i| {
        let w: Vec<f64> = (0..m).map(|l| field[l * n_points + i]).collect();
        let mut form = poly.hessian(&w)?;
        for l in 0..m {
            for k in 0..m {
                form[(l, k)] *= 0.5 * (lambdas[l] + lambdas[k]);
            }
        }
        let scale = form.max_abs();
        if scale == 0.0 {
            // Zero form (degree > 2 at the origin): vacuously semidefinite.
            return Ok((0.0, 1.0));
        }
        let eigs = linalg::sym_eigenvalues(&form)?;
        Ok((eigs[0], scale))
    });
    let mut worst_ratio = f64::INFINITY;
    let mut worst_node = 0;
    for (i, entry) in per_node.into_iter().enumerate() {
        let (min_eig, scale) = entry?;
        let ratio = min_eig / scale;
        if ratio < worst_ratio {
            worst_ratio = ratio;
            worst_node = i;
        }
    }
    Ok(FormSignReport {
        holds: worst_ratio >= -FORM_SIGN_TOL,
        worst_ratio,
        worst_node,
        nodes_checked: n_points,
    })
}
