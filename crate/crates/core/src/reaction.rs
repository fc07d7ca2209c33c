//! Reaction terms in the diagonal coordinates, and the statistical audit
//! that probes whether a term behaves the way the invariance and dissipation
//! arguments assume.
//!
//! Three structural assumptions matter downstream:
//!
//! * quasi-positivity: on the face `w_l = 0` of the positive orthant the
//!   component `f_l` must not point outward (`f_l >= 0` up to rounding);
//! * polynomial growth: `|f|` grows no faster than its syntactic degree;
//! * combination control: for the combination vector `S` (last entry one),
//!   `<S, f(w)> <= C (1 + sum w)` on the orthant, so the weighted total mass
//!   grows at most exponentially.
//!
//! [`ReactionSpec::audit`] samples all three on deterministic pseudo-random
//! batches and reports margins rather than just booleans. A clean audit is
//! evidence, not proof; a failed one pinpoints which assumption broke and
//! where.
//!
//! Two evaluation entry points with different contracts: [`ReactionSpec::
//! eval`] enforces the orthant domain (small negative undershoot from time
//! stepping is tolerated relative to the point's size), while
//! [`ReactionSpec::eval_poly`] is the total polynomial extension used inside
//! solver loops, where transient undershoots are the solver's business, not
//! a domain error.

use crate::error::{Error, Result};
use crate::exec;
use crate::expr::Expr;
use crate::linalg::DMat;
use crate::spectral::DiagonalizingTransform;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative undershoot below the orthant that checked evaluation forgives.
pub const DOMAIN_UNDERSHOOT_TOL: f64 = 1e-9;

/// Decade radii shared by the growth and combination probes.
pub const AUDIT_RADII: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

#[derive(Clone, Debug)]
pub enum ReactionKind {
    /// No reaction; pure diffusion.
    Zero,
    /// Competitive chain dynamics `f_l = w_l (r_l - sum_j c_{l,j} w_j)`.
    /// Nonnegative couplings keep the combination control satisfiable.
    LotkaChain { rates: Vec<f64>, couplings: DMat },
    /// `f_l = coef * w_l^2`: quasi-positive but, for positive `coef`, in
    /// violation of combination control. The canonical blow-up source.
    Quadratic { coef: f64 },
    /// One parsed expression per component.
    Expressions { exprs: Vec<Expr> },
}

#[derive(Clone, Debug)]
pub struct ReactionSpec {
    m: usize,
    kind: ReactionKind,
    /// Combination vector `S`; validated to end in exactly one.
    combination: Vec<f64>,
    /// Exact partial derivatives, cached for expression reactions where
    /// differentiation allocates.
    jacobian_exprs: Option<Vec<Vec<Expr>>>,
}

impl ReactionSpec {
    /// Builds with the default combination vector of all ones.
    pub fn new(m: usize, kind: ReactionKind) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "reaction needs at least 2 components, got m = {m}"
            )));
        }
        match &kind {
            ReactionKind::Zero => {}
            ReactionKind::LotkaChain { rates, couplings } => {
                if rates.len() != m {
                    return Err(Error::InvalidInput(format!(
                        "got {} rates for m = {m}",
                        rates.len()
                    )));
                }
                if couplings.n_rows() != m || couplings.n_cols() != m {
                    return Err(Error::InvalidInput(format!(
                        "coupling matrix is {}x{}, expected {m}x{m}",
                        couplings.n_rows(),
                        couplings.n_cols()
                    )));
                }
                if !rates.iter().all(|r| r.is_finite()) || !couplings.max_abs().is_finite() {
                    return Err(Error::InvalidInput(
                        "rates and couplings must be finite".into(),
                    ));
                }
            }
            ReactionKind::Quadratic { coef } => {
                if !coef.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "quadratic coefficient must be finite, got {coef}"
                    )));
                }
            }
            ReactionKind::Expressions { exprs } => {
                if exprs.len() != m {
                    return Err(Error::InvalidInput(format!(
                        "got {} expressions for m = {m}",
                        exprs.len()
                    )));
                }
                for (l, e) in exprs.iter().enumerate() {
                    if let Some(v) = e.max_var() {
                        if v >= m {
                            return Err(Error::InvalidInput(format!(
                                "expression for component {} uses w{}, but m = {m}",
                                l + 1,
                                v + 1
                            )));
                        }
                    }
                }
            }
        }
        let jacobian_exprs = match &kind {
            ReactionKind::Expressions { exprs } => Some(
                exprs
                    .iter()
                    .map(|e| (0..m).map(|v| e.derivative(v)).collect())
                    .collect(),
            ),
            _ => None,
        };
        Ok(ReactionSpec {
            m,
            kind,
            combination: vec![1.0; m],
            jacobian_exprs,
        })
    }

    /// Replaces the combination vector; it must have length `m` and end in
    /// exactly one, which pins its normalization.
    pub fn with_combination(mut self, s: Vec<f64>) -> Result<Self> {
        if s.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "combination vector has {} entries for m = {}",
                s.len(),
                self.m
            )));
        }
        if !s.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput(
                "combination vector must be finite".into(),
            ));
        }
        if s[self.m - 1] != 1.0 {
            return Err(Error::InvalidInput(format!(
                "combination vector must end in 1, got {}",
                s[self.m - 1]
            )));
        }
        self.combination = s;
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn kind(&self) -> &ReactionKind {
        &self.kind
    }
    pub fn combination(&self) -> &[f64] {
        &self.combination
    }

    /// Syntactic degree bound of the polynomial right-hand side.
    pub fn degree_bound(&self) -> usize {
        match &self.kind {
            ReactionKind::Zero => 0,
            ReactionKind::LotkaChain { .. } => 2,
            ReactionKind::Quadratic { .. } => 2,
            ReactionKind::Expressions { exprs } => {
                exprs.iter().map(|e| e.degree_bound()).max().unwrap_or(0)
            }
        }
    }

    /// Total polynomial evaluation into a caller buffer; no domain checks,
    /// no allocation. This is the solver-facing entry point.
    pub fn eval_poly(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.m);
        debug_assert_eq!(out.len(), self.m);
        match &self.kind {
            ReactionKind::Zero => out.fill(0.0),
            ReactionKind::LotkaChain { rates, couplings } => {
                for l in 0..self.m {
                    let mut pressure = 0.0;
                    for j in 0..self.m {
                        pressure += couplings[(l, j)] * w[j];
                    }
                    out[l] = w[l] * (rates[l] - pressure);
                }
            }
            ReactionKind::Quadratic { coef } => {
                for l in 0..self.m {
                    out[l] = coef * w[l] * w[l];
                }
            }
            ReactionKind::Expressions { exprs } => {
                for l in 0..self.m {
                    out[l] = exprs[l].eval(w);
                }
            }
        }
    }

    /// Domain-checked evaluation on the (slightly relaxed) positive orthant.
    /// Components below `-DOMAIN_UNDERSHOOT_TOL * (1 + |w|_inf)` are outside
    /// the reaction's meaningful domain and reported as such.
    pub fn eval(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates for m = {}",
                w.len(),
                self.m
            )));
        }
        let scale = 1.0 + w.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        for (l, &x) in w.iter().enumerate() {
            if !x.is_finite() || x < -DOMAIN_UNDERSHOOT_TOL * scale {
                return Err(Error::Domain(format!(
                    "component w{} = {x} lies outside the positive orthant",
                    l + 1
                )));
            }
        }
        let mut out = vec![0.0; self.m];
        self.eval_poly(w, &mut out);
        Ok(out)
    }

    /// Exact Jacobian at `w`.
    pub fn jacobian(&self, w: &[f64]) -> DMat {
        debug_assert_eq!(w.len(), self.m);
        let m = self.m;
        let mut j = DMat::zeros(m, m);
        match &self.kind {
            ReactionKind::Zero => {}
            ReactionKind::LotkaChain { rates, couplings } => {
                for l in 0..m {
                    let mut pressure = 0.0;
                    for k in 0..m {
                        pressure += couplings[(l, k)] * w[k];
                    }
                    for k in 0..m {
                        j[(l, k)] = -w[l] * couplings[(l, k)];
                    }
                    j[(l, l)] += rates[l] - pressure;
                }
            }
            ReactionKind::Quadratic { coef } => {
                for l in 0..m {
                    j[(l, l)] = 2.0 * coef * w[l];
                }
            }
            ReactionKind::Expressions { .. } => {
                let jac = self.jacobian_exprs.as_ref().expect("cached at construction");
                for l in 0..m {
                    for k in 0..m {
                        j[(l, k)] = jac[l][k].eval(w);
                    }
                }
            }
        }
        j
    }

    /// The reaction as seen from the pre-transform coordinates:
    /// `g(u) = (P^T)^{-1} f(P^T u)`.
    pub fn eval_pulled_back(&self, transform: &DiagonalizingTransform, u: &[f64]) -> Vec<f64> {
        let w = transform.to_diag(u);
        let mut f = vec![0.0; self.m];
        self.eval_poly(&w, &mut f);
        transform.from_diag(&f)
    }

    /// Runs the three-part assumption audit; see [`AuditReport`].
    pub fn audit(&self, config: &AuditConfig) -> AuditReport {
        audit_assumptions(self, config)
    }
}

// ═══════════════════════════════════════════════════════════════════════════
// The audit
// ═══════════════════════════════════════════════════════════════════════════

#[derive(Clone, Copy, Debug)]
pub struct AuditConfig {
    /// Total sample points per probe.
    pub samples: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            samples: 4096,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AuditReport {
    /// Worst face slack `f_l / (1 + |w|_inf)^N` seen with `w_l = 0`; the
    /// quasi-positivity verdict compares it against `-1e-12`.
    pub worst_face_slack: f64,
    pub quasi_positive: bool,
    /// Least-squares slope of `log10 max|f|` against `log10 R` over the
    /// decade radii.
    pub fitted_slope: f64,
    /// Syntactic degree bound `N` the slopes are judged against.
    pub degree_bound: usize,
    pub growth_ok: bool,
    /// Per-decade maxima of `<S, f> / (1 + sum w)`, aligned with
    /// [`AUDIT_RADII`].
    pub combination_per_decade: Vec<f64>,
    /// Largest consecutive-decade growth ratio after flooring.
    pub trend_ratio: f64,
    pub combination_bounded: bool,
}

impl AuditReport {
    pub fn all_hold(&self) -> bool {
        self.quasi_positive && self.growth_ok && self.combination_bounded
    }
}

/// Face slack below which quasi-positivity is considered violated.
const FACE_SLACK_TOL: f64 = 1e-12;
/// Slack added to the degree bound before judging the fitted slope.
const SLOPE_MARGIN: f64 = 0.1;
/// Consecutive decades may grow by at most this factor before the
/// combination control is considered broken.
const TREND_FACTOR: f64 = 1.5;
/// Values below this floor are treated as "effectively zero" in the trend.
const TREND_FLOOR: f64 = 1e-9;
/// Samples per parallel batch.
const AUDIT_BATCH: usize = 256;

struct BatchStats {
    face_slack_min: f64,
    f_max: [f64; 4],
    combo_max: [f64; 4],
}

fn audit_assumptions(spec: &ReactionSpec, config: &AuditConfig) -> AuditReport {
    let m = spec.m;
    let degree = spec.degree_bound();
    let n_batches = config.samples.div_ceil(AUDIT_BATCH).max(1);

    let stats = exec::map_indexed(n_batches, AUDIT_BATCH * m * 16, |b| {
        // One self-seeding stream per batch, so the sample set is a pure
        // function of (seed, batch index) no matter how batches are
        // scheduled.
        let golden = 0x9E37_79B9_7F4A_7C15_u64;
        let mut rng = ChaCha8Rng::seed_from_u64(exec::mix64(
            config.seed.wrapping_add((b as u64).wrapping_mul(golden)),
        ));
        let in_batch = AUDIT_BATCH.min(config.samples - (b * AUDIT_BATCH).min(config.samples));
        let mut stats = BatchStats {
            face_slack_min: f64::INFINITY,
            f_max: [0.0; 4],
            combo_max: [f64::NEG_INFINITY; 4],
        };
        let mut w = vec![0.0_f64; m];
        let mut f = vec![0.0_f64; m];
        for s in 0..in_batch {
            // Quasi-positivity probe on a cycled face at a log-uniform scale.
            let face = (b * AUDIT_BATCH + s) % m;
            let radius = 10.0_f64.powf(-2.0 + 5.0 * rng.gen::<f64>());
            for x in w.iter_mut() {
                *x = radius * rng.gen::<f64>();
            }
            w[face] = 0.0;
            spec.eval_poly(&w, &mut f);
            let norm = 1.0 + w.iter().fold(0.0_f64, |a, x| a.max(*x));
            let slack = f[face] / norm.powi(degree as i32);
            stats.face_slack_min = stats.face_slack_min.min(slack);

            // Growth and combination probes share one direction, swept
            // through the decade radii.
            let mut dir = vec![0.0_f64; m];
            let mut dmax = 0.0_f64;
            for x in dir.iter_mut() {
                *x = rng.gen::<f64>();
                dmax = dmax.max(*x);
            }
            if dmax <= 0.0 {
                dir.fill(1.0);
                dmax = 1.0;
            }
            for (ri, &r) in AUDIT_RADII.iter().enumerate() {
                for (x, d) in w.iter_mut().zip(&dir) {
                    *x = r * d / dmax;
                }
                spec.eval_poly(&w, &mut f);
                let fmax = f.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
                stats.f_max[ri] = stats.f_max[ri].max(fmax);
                let dot: f64 = spec.combination.iter().zip(&f).map(|(a, b)| a * b).sum();
                let total: f64 = w.iter().sum();
                stats.combo_max[ri] = stats.combo_max[ri].max(dot / (1.0 + total));
            }
        }
        stats
    });

    let mut worst_face_slack = f64::INFINITY;
    let mut f_max = [0.0_f64; 4];
    let mut combo = [f64::NEG_INFINITY; 4];
    for s in stats {
        worst_face_slack = worst_face_slack.min(s.face_slack_min);
        for i in 0..4 {
            f_max[i] = f_max[i].max(s.f_max[i]);
            combo[i] = combo[i].max(s.combo_max[i]);
        }
    }

    // Log-log slope by least squares over the upper three decades. The
    // smallest radius still feels sub-leading terms (their partial
    // cancellation depresses that point and tilts the fit), so the
    // asymptotic rate is read off where the leading term dominates.
    let xs: Vec<f64> = AUDIT_RADII[1..].iter().map(|r| r.log10()).collect();
    let ys: Vec<f64> = f_max[1..].iter().map(|v| v.max(1e-300).log10()).collect();
    let n = xs.len() as f64;
    let x_bar = xs.iter().sum::<f64>() / n;
    let y_bar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_bar) * (y - y_bar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - x_bar) * (x - x_bar)).sum();
    let fitted_slope = sxy / sxx;

    let mut trend_ratio = 0.0_f64;
    for k in 0..3 {
        let lo = combo[k].max(TREND_FLOOR);
        let hi = combo[k + 1].max(TREND_FLOOR);
        trend_ratio = trend_ratio.max(hi / lo);
    }

    AuditReport {
        worst_face_slack,
        quasi_positive: worst_face_slack >= -FACE_SLACK_TOL,
        fitted_slope,
        degree_bound: degree,
        growth_ok: fitted_slope <= degree as f64 + SLOPE_MARGIN,
        combination_per_decade: combo.to_vec(),
        trend_ratio,
        combination_bounded: trend_ratio <= TREND_FACTOR,
    }
}

// ═══════════════════════════════════════════════════════════════════════════

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ThresholdGuard;
    use crate::expr::parse;
    use crate::regions::RegionSpec;
    use crate::spectral::{diagonalizing_transform, ToeplitzDiffusion};
    use approx::assert_relative_eq;

    fn lotka(m: usize) -> ReactionSpec {
        let rates: Vec<f64> = (0..m).map(|l| 1.0 + 0.3 * l as f64).collect();
        let mut couplings = DMat::zeros(m, m);
        for l in 0..m {
            couplings[(l, l)] = 1.0;
            if l + 1 < m {
                couplings[(l, l + 1)] = 0.4;
            }
        }
        ReactionSpec::new(m, ReactionKind::LotkaChain { rates, couplings }).unwrap()
    }

    #[test]
    fn family_values_match_hand_formulas() {
        let spec = lotka(2);
        let f = spec.eval(&[2.0, 3.0]).unwrap();
        // f_1 = 2 (1.0 - (2 + 0.4*3)), f_2 = 3 (1.3 - 3).
        assert_relative_eq!(f[0], 2.0 * (1.0 - 3.2));
        assert_relative_eq!(f[1], 3.0 * (1.3 - 3.0));

        let q = ReactionSpec::new(2, ReactionKind::Quadratic { coef: 0.5 }).unwrap();
        assert_eq!(q.eval(&[2.0, 4.0]).unwrap(), vec![2.0, 8.0]);

        let z = ReactionSpec::new(3, ReactionKind::Zero).unwrap();
        assert_eq!(z.eval(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);

        let e = ReactionSpec::new(
            2,
            ReactionKind::Expressions {
                exprs: vec![parse("w2 - w1^2").unwrap(), parse("0.5*w1").unwrap()],
            },
        )
        .unwrap();
        let f = e.eval(&[2.0, 1.0]).unwrap();
        assert_relative_eq!(f[0], -3.0);
        assert_relative_eq!(f[1], 1.0);
    }

    #[test]
    fn checked_eval_polices_the_orthant_with_relative_slack() {
        let spec = lotka(2);
        assert!(spec.eval(&[1.0, -1e-11]).is_ok());
        match spec.eval(&[1.0, -0.1]) {
            Err(Error::Domain(msg)) => assert!(msg.contains("w2")),
            other => panic!("expected domain error, got {other:?}"),
        }
        // The polynomial extension answers anyway.
        let mut out = [0.0; 2];
        spec.eval_poly(&[1.0, -0.1], &mut out);
        assert!(out.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let specs = [
            lotka(3),
            ReactionSpec::new(
                3,
                ReactionKind::Expressions {
                    exprs: vec![
                        parse("w1*w2 - w3^2").unwrap(),
                        parse("w2^3 - 2*w1").unwrap(),
                        parse("w1 + w2*w3").unwrap(),
                    ],
                },
            )
            .unwrap(),
            ReactionSpec::new(3, ReactionKind::Quadratic { coef: -0.7 }).unwrap(),
        ];
        let w = [0.8, 1.3, 0.4];
        for spec in &specs {
            let jac = spec.jacobian(&w);
            for k in 0..3 {
                let h = 1e-6;
                let mut wp = w;
                let mut wm = w;
                wp[k] += h;
                wm[k] -= h;
                let mut fp = [0.0; 3];
                let mut fm = [0.0; 3];
                spec.eval_poly(&wp, &mut fp);
                spec.eval_poly(&wm, &mut fm);
                for l in 0..3 {
                    let fd = (fp[l] - fm[l]) / (2.0 * h);
                    assert_relative_eq!(jac[(l, k)], fd, max_relative = 1e-6, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn pulled_back_identity_reaction_is_the_identity() {
        let d = ToeplitzDiffusion::new(3, 2.0, 1.0, 1.0).unwrap();
        let spectrum = d.spectrum();
        let tr = diagonalizing_transform(&spectrum, &RegionSpec::all_plus(3)).unwrap();
        let spec = ReactionSpec::new(
            3,
            ReactionKind::Expressions {
                exprs: vec![
                    parse("w1").unwrap(),
                    parse("w2").unwrap(),
                    parse("w3").unwrap(),
                ],
            },
        )
        .unwrap();
        let u = [0.3, -1.2, 2.5];
        let g = spec.eval_pulled_back(&tr, &u);
        for l in 0..3 {
            assert_relative_eq!(g[l], u[l], max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn combination_vector_is_validated() {
        let spec = lotka(3);
        assert!(spec.clone().with_combination(vec![2.0, 1.0, 1.0]).is_ok());
        assert!(spec.clone().with_combination(vec![1.0, 1.0]).is_err());
        assert!(spec.clone().with_combination(vec![1.0, 1.0, 2.0]).is_err());
        assert!(spec
            .clone()
            .with_combination(vec![f64::NAN, 1.0, 1.0])
            .is_err());
    }

    #[test]
    fn audit_separates_the_families() {
        let cfg = AuditConfig::default();

        let report = lotka(3).audit(&cfg);
        assert!(report.quasi_positive, "slack {}", report.worst_face_slack);
        assert!(report.growth_ok, "slope {}", report.fitted_slope);
        assert!(report.combination_bounded, "trend {}", report.trend_ratio);
        assert!(report.all_hold());

        // Pure squares: inward on every face and polynomially bounded, but
        // the combination grows a full decade per decade.
        let q = ReactionSpec::new(2, ReactionKind::Quadratic { coef: 1.0 }).unwrap();
        let report = q.audit(&cfg);
        assert!(report.quasi_positive);
        assert!(report.growth_ok);
        assert!(!report.combination_bounded, "trend {}", report.trend_ratio);
        assert!(!report.all_hold());

        let z = ReactionSpec::new(4, ReactionKind::Zero).unwrap();
        assert!(z.audit(&cfg).all_hold());

        // An expression that drains component 1 on its own face breaks
        // quasi-positivity and nothing else.
        let bad = ReactionSpec::new(
            2,
            ReactionKind::Expressions {
                exprs: vec![parse("-w2").unwrap(), parse("0").unwrap()],
            },
        )
        .unwrap();
        let report = bad.audit(&cfg);
        assert!(!report.quasi_positive);
    }

    #[test]
    fn audit_is_deterministic_and_schedule_independent() {
        let cfg = AuditConfig {
            samples: 2048,
            seed: 42,
        };
        let spec = lotka(3);
        let a = {
            let _g = ThresholdGuard::force(usize::MAX);
            spec.audit(&cfg)
        };
        let b = {
            let _g = ThresholdGuard::force(0);
            spec.audit(&cfg)
        };
        assert_eq!(
            a.worst_face_slack.to_bits(),
            b.worst_face_slack.to_bits()
        );
        assert_eq!(a.fitted_slope.to_bits(), b.fitted_slope.to_bits());
        for (x, y) in a
            .combination_per_decade
            .iter()
            .zip(&b.combination_per_decade)
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
