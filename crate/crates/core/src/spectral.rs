//! Closed-form spectral data for tri-diagonal Toeplitz diffusion matrices.
//!
//! The diffusion matrix has constant diagonals
//!
//! ```text
//!         | a  b          |
//!         | c  a  b       |
//!     D = |    c  a  b    |      a, b, c > 0,
//!         |       c  a  b |
//!         |          c  a |
//! ```
//!
//! and its transpose diagonalizes in closed form. With `mu = b/c` and
//! `m` components, for `l = 1..m`
//!
//! ```text
//!     lambda_l = a + 2 sqrt(bc) cos((m+1-l) pi / (m+1))        (ascending)
//!     v_l[k]   = mu^(k/2) sin(k (m+1-l) pi / (m+1)),  k = 1..m
//! ```
//!
//! are the eigenvalues and eigenvectors of `D^T`. The cosine arguments are
//! distinct points of `(0, pi)`, so the eigenvalues are simple and strictly
//! ordered. Ellipticity of the operator `D d^2/dx^2` (all eigenvalues of the
//! symmetric part positive) is equivalent to
//!
//! ```text
//!     cos(pi / (m+1)) < a / (b + c),
//! ```
//!
//! which also pins `lambda_1` above zero because `b + c >= 2 sqrt(bc)`.
//!
//! [`numerical_spectrum`] recomputes the same spectrum by bisection on the
//! symmetrized similarity transform plus inverse iteration, sharing no code
//! with the closed form; it exists to keep the formulas honest and to price
//! their accuracy in tests and reports.

use crate::error::{Error, Result};
use crate::linalg::{self, DMat};
use crate::regions::RegionSpec;

use std::f64::consts::PI;

/// Condition-estimate ceiling past which the eigenbasis is treated as
/// numerically unusable (extreme `mu` or large `m`).
pub const TRANSFORM_CONDITION_LIMIT: f64 = 1e12;

// ═══════════════════════════════════════════════════════════════════════════
// Diffusion matrix
// ═══════════════════════════════════════════════════════════════════════════

#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzDiffusion {
    m: usize,
    a: f64,
    b: f64,
    c: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct ParabolicityReport {
    pub holds: bool,
    /// `a/(b+c) - cos(pi/(m+1))`; positive iff the system is parabolic.
    pub margin: f64,
}

impl ToeplitzDiffusion {
    pub fn new(m: usize, a: f64, b: f64, c: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 components, got m = {m}"
            )));
        }
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "diagonal constant {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(ToeplitzDiffusion { m, a, b, c })
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Super- to sub-diagonal ratio `b/c`; skews the eigenvector scaling.
    pub fn mu(&self) -> f64 {
        self.b / self.c
    }

    pub fn matrix(&self) -> DMat {
        let mut d = DMat::zeros(self.m, self.m);
        for i in 0..self.m {
            d[(i, i)] = self.a;
            if i + 1 < self.m {
                d[(i, i + 1)] = self.b;
                d[(i + 1, i)] = self.c;
            }
        }
        d
    }

    pub fn matrix_transpose(&self) -> DMat {
        self.matrix().transpose()
    }

    pub fn parabolicity(&self) -> ParabolicityReport {
        let margin = self.a / (self.b + self.c) - (PI / (self.m as f64 + 1.0)).cos();
        ParabolicityReport {
            holds: margin > 0.0,
            margin,
        }
    }

    /// Closed-form spectrum of `D^T`, eigenvalues ascending.
    pub fn spectrum(&self) -> Spectrum {
        let m = self.m;
        let mf = m as f64 + 1.0;
        let mu = self.mu();
        let two_root = 2.0 * (self.b * self.c).sqrt();
        let mut lambdas = Vec::with_capacity(m);
        let mut vectors = Vec::with_capacity(m);
        for l in 1..=m {
            // Angle index m+1-l makes the sequence ascending in l.
            let j = (m + 1 - l) as f64;
            lambdas.push(self.a + two_root * (j * PI / mf).cos());
            let v: Vec<f64> = (1..=m)
                .map(|k| mu.powf(0.5 * k as f64) * (k as f64 * j * PI / mf).sin())
                .collect();
            vectors.push(v);
        }
        Spectrum {
            m,
            mu,
            lambdas,
            vectors,
        }
    }
}

// ═══════════════════════════════════════════════════════════════════════════
// Spectrum
// ═══════════════════════════════════════════════════════════════════════════

/// Eigenvalues (ascending) and matching eigenvectors of `D^T`.
///
/// Closed-form construction keeps the natural `mu^(k/2)` scaling of the
/// eigenvectors; [`numerical_spectrum`] normalizes to unit length instead.
/// All sign tests downstream are invariant under positive rescaling.
#[derive(Clone, Debug)]
pub struct Spectrum {
    m: usize,
    mu: f64,
    lambdas: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Eigenvalue by 0-based index, ascending order.
    pub fn lambda(&self, l: usize) -> f64 {
        self.lambdas[l]
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambdas[self.m - 1]
    }

    /// Eigenvector for `lambda(l)`.
    pub fn vector(&self, l: usize) -> &[f64] {
        &self.vectors[l]
    }

    /// Arithmetic-to-geometric mean ratio of an eigenvalue pair,
    /// `(lambda_i + lambda_j) / (2 sqrt(lambda_i lambda_j))`. NaN when the
    /// product is not positive; callers guard on parabolicity first.
    pub fn am_gm_ratio(&self, i: usize, j: usize) -> f64 {
        let (li, lj) = (self.lambdas[i], self.lambdas[j]);
        (li + lj) / (2.0 * (li * lj).sqrt())
    }

    /// Default absolute tolerance for cone-membership sign tests at state `x`:
    /// `1e-12 * |x|_inf * max_k mu^(k/2)`. The last factor tracks how much the
    /// skewed eigenvector scaling can amplify rounding in the inner products.
    pub fn membership_eps(&self, x: &[f64]) -> f64 {
        let x_inf = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let amp = self
            .mu
            .powf(0.5)
            .max(self.mu.powf(0.5 * self.m as f64))
            .max(1e-300);
        1e-12 * x_inf * amp
    }

    /// Residual `|D^T v - lambda v|_inf`, normalized by `|v|_inf`.
    pub fn residual(&self, d: &ToeplitzDiffusion, l: usize) -> f64 {
        let v = &self.vectors[l];
        let lambda = self.lambdas[l];
        let m = self.m;
        let mut worst = 0.0_f64;
        for k in 0..m {
            let mut t = d.a * v[k] - lambda * v[k];
            if k > 0 {
                t += d.b * v[k - 1];
            }
            if k + 1 < m {
                t += d.c * v[k + 1];
            }
            worst = worst.max(t.abs());
        }
        let v_inf = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        worst / v_inf.max(1e-300)
    }
}

// ═══════════════════════════════════════════════════════════════════════════
// Independent eigensolver (bisection + inverse iteration)
// ═══════════════════════════════════════════════════════════════════════════

/// Eigenvalues of `D^T` by Sturm bisection, ascending, without the closed
/// form. `D^T` shares its spectrum with the symmetric tridiagonal similarity
/// transform (diagonal `a`, off-diagonal `sqrt(bc)`), whose leading-pivot
/// sign count brackets each eigenvalue.
pub fn numerical_eigenvalues(d: &ToeplitzDiffusion) -> Result<Vec<f64>> {
    let m = d.m;
    let off = (d.b * d.c).sqrt();
    let scale = d.a.abs() + 2.0 * off;

    // Count of pivots below zero in the LDL^T factorization of T - xI. A
    // pivot that lands exactly on zero is clamped to a tiny negative value
    // BEFORE it is counted, so the count and the propagated sign agree;
    // counting it as nonnegative while propagating it as negative loses an
    // eigenvalue whenever a bisection midpoint hits a singular leading minor
    // (the very first midpoint is x = a, where the 1x1 minor vanishes).
    let count_below = |x: f64| -> usize {
        let tiny = 1e-300 * scale.max(1.0);
        let mut q = 1.0;
        let mut count = 0;
        for k in 0..m {
            let coupling = if k == 0 { 0.0 } else { off * off / q };
            q = d.a - x - coupling;
            if q.abs() < tiny {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };

    const MAX_BISECTIONS: usize = 500;
    let tol = 1e-14 * scale.max(1.0);
    let mut lambdas = Vec::with_capacity(m);
    for j in 0..m {
        let mut lo = d.a - 2.0 * off - tol;
        let mut hi = d.a + 2.0 * off + tol;
        let mut iterations = 0;
        while hi - lo > tol {
            iterations += 1;
            if iterations > MAX_BISECTIONS {
                return Err(Error::NonConvergence {
                    what: "eigenvalue bisection",
                    budget: MAX_BISECTIONS,
                });
            }
            let mid = 0.5 * (lo + hi);
            if count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lambdas.push(0.5 * (lo + hi));
    }
    Ok(lambdas)
}

/// Spectrum of `D^T` computed without the closed form: eigenvalues from
/// [`numerical_eigenvalues`], eigenvectors by inverse iteration on `D^T`
/// itself. Eigenvectors come back unit-norm with the largest-magnitude entry
/// positive.
pub fn numerical_spectrum(d: &ToeplitzDiffusion) -> Result<Spectrum> {
    let m = d.m;
    let off = (d.b * d.c).sqrt();
    let scale = d.a.abs() + 2.0 * off;
    let lambdas = numerical_eigenvalues(d)?;

    // Inverse iteration on D^T (sub-diagonal b, super-diagonal c). The
    // shifted matrix is indefinite, so the solves use pivoted dense LU; the
    // shift offset keeps the factorization off exact singularity, and simple
    // eigenvalues make one or two iterations plenty. The start vector must
    // carry a component along every eigenvector: a constant start is exactly
    // orthogonal to the mid-spectrum modes, and the solve's mirrored rounding
    // keeps it that way, so the entries come from a hash instead.
    const MAX_INVERSE_ITERATIONS: usize = 8;
    let dt_matrix = d.matrix_transpose();
    let mut vectors = Vec::with_capacity(m);
    for (idx, &lambda) in lambdas.iter().enumerate() {
        let mut shift_offset = 1e-12 * scale.max(1.0);
        let mut accepted = None;
        'attempt: for attempt in 0..6u64 {
            // The solve inverts A - (lambda + shift) I, so the achievable
            // residual for A - lambda I is floored by the shift itself.
            let residual_tol = (1e-11 * scale.max(1.0)).max(8.0 * shift_offset);
            let mut shifted = dt_matrix.clone();
            for k in 0..m {
                shifted[(k, k)] -= lambda + shift_offset;
            }
            let factors = linalg::lu(&shifted);
            if factors.is_singular() {
                shift_offset *= 16.0;
                continue 'attempt;
            }
            let mut v: Vec<f64> = (0..m)
                .map(|k| {
                    let h = crate::exec::mix64((idx as u64) << 40 | attempt << 32 | k as u64);
                    0.5 + (h >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect();
            let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm0;
            }
            for _ in 0..MAX_INVERSE_ITERATIONS {
                let Some(next) = factors.solve(&v) else {
                    shift_offset *= 16.0;
                    continue 'attempt;
                };
                let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    shift_offset *= 16.0;
                    continue 'attempt;
                }
                v = next;
                for x in v.iter_mut() {
                    *x /= norm;
                }
                let mut res = 0.0_f64;
                for k in 0..m {
                    let mut t = (d.a - lambda) * v[k];
                    if k > 0 {
                        t += d.b * v[k - 1];
                    }
                    if k + 1 < m {
                        t += d.c * v[k + 1];
                    }
                    res = res.max(t.abs());
                }
                if res <= residual_tol {
                    accepted = Some(v);
                    break 'attempt;
                }
            }
            shift_offset *= 16.0;
        }
        let mut v = accepted.ok_or(Error::NonConvergence {
            what: "inverse iteration for an eigenvector",
            budget: MAX_INVERSE_ITERATIONS,
        })?;
        let lead = v
            .iter()
            .cloned()
            .max_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap())
            .unwrap();
        if lead < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        vectors.push(v);
    }

    Ok(Spectrum {
        m,
        mu: d.mu(),
        lambdas,
        vectors,
    })
}

// ═══════════════════════════════════════════════════════════════════════════
// Diagonalizing transform
// ═══════════════════════════════════════════════════════════════════════════

/// The change of coordinates `W = P^T U` where P's columns are the signed
/// eigenvectors of the chosen cone: column l is `s_l v_l`. Inside the cone
/// the transformed field is componentwise nonnegative and the diffusion
/// operator acts diagonally with coefficients `lambda_l`.
#[derive(Clone, Debug)]
pub struct DiagonalizingTransform {
    m: usize,
    p_t: DMat,
    p_t_inv: DMat,
    condition: f64,
    lambdas: Vec<f64>,
}

pub fn diagonalizing_transform(
    spectrum: &Spectrum,
    region: &RegionSpec,
) -> Result<DiagonalizingTransform> {
    let m = spectrum.m();
    if region.m() != m {
        return Err(Error::InvalidInput(format!(
            "region has {} sign entries, spectrum has m = {}",
            region.m(),
            m
        )));
    }
    let mut p_t = DMat::zeros(m, m);
    for l in 0..m {
        let s = region.sign(l);
        for k in 0..m {
            p_t[(l, k)] = s * spectrum.vector(l)[k];
        }
    }
    let p_t_inv = linalg::invert(&p_t).ok_or(Error::SingularTransform {
        cond: f64::INFINITY,
    })?;
    let condition = p_t.norm_one() * p_t_inv.norm_one();
    if !condition.is_finite() || condition > TRANSFORM_CONDITION_LIMIT {
        return Err(Error::SingularTransform { cond: condition });
    }
    Ok(DiagonalizingTransform {
        m,
        p_t,
        p_t_inv,
        condition,
        lambdas: spectrum.lambdas().to_vec(),
    })
}

impl DiagonalizingTransform {
    pub fn m(&self) -> usize {
        self.m
    }

    /// `W = P^T U`.
    pub fn to_diag(&self, u: &[f64]) -> Vec<f64> {
        self.p_t.matvec(u)
    }

    /// `U = (P^T)^-1 W`.
    pub fn from_diag(&self, w: &[f64]) -> Vec<f64> {
        self.p_t_inv.matvec(w)
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn p_transpose(&self) -> &DMat {
        &self.p_t
    }

    pub fn p_transpose_inv(&self) -> &DMat {
        &self.p_t_inv
    }
}
