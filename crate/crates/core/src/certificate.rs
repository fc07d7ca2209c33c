//! Positive-definiteness certificates for the quadratic forms that control
//! dissipation of the chain polynomial along the diffusion semigroup.
//!
//! Each chain `q` in the Hessian lattice of a [`LyapunovPolynomial`] of
//! degree `p` (so the lattice degree is `p - 2`) contributes the symmetric
//! matrix
//!
//! ```text
//!   a_{l,j}(q) = (lambda_l + lambda_j) / 2 * prod_k theta_k^((q_k + s_k)^2),
//!   s_k = [k >= l] + [k >= j],
//! ```
//!
//! and the certificate holds when every one of those matrices is positive
//! definite. Rescaling by the square roots of the diagonal collapses the
//! chain dependence entirely: the scaled matrix has unit diagonal and
//!
//! ```text
//!   a_hat_{l,j} = (lambda_l + lambda_j) / (2 sqrt(lambda_l lambda_j))
//!                 / (theta_l theta_{l+1} ... theta_{j-1}),    l < j,
//! ```
//!
//! the arithmetic-geometric mean ratio of the eigenvalue pair divided by the
//! weights spanning the gap. [`check_certificate`] still sweeps the whole
//! lattice and tests every raw matrix, because the raw matrices are what the
//! dissipation argument actually bounds and the sweep is what the capacity
//! guard meters; the scaled matrix rides along as a chain-independent margin.
//!
//! Positivity of a single matrix is decided by the pivots of its `L D L^T`
//! factorization. [`DetRecursion`] additionally materializes the two-index
//! determinant tables whose closed recurrence
//!
//! ```text
//!   K[l][r] = K[r-1][r-1] K[l][r-1] - H[l][r-1]^2
//! ```
//!
//! reproduces scaled principal minors; its `K[l][l]` column ties back to the
//! leading minors through an exact product identity that [`DetRecursion::
//! validate`] checks numerically. The cascade squares its own entries level
//! by level, so those tables are a diagnostic and cross-check object; the
//! pass/fail decision never routes through them.

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{self, DMat};
use crate::lyapunov::{chain_count, shifted_theta_product, ChainIter, LyapunovPolynomial};

/// Chains tested per work item in the sweep; small enough to balance load,
/// large enough that seeking by rank is amortized away.
const SWEEP_CHUNK: usize = 4096;

// ═══════════════════════════════════════════════════════════════════════════
// Form matrices
// ═══════════════════════════════════════════════════════════════════════════

/// Raw quadratic-form matrix for one chain, symmetric `m x m` with entries
/// `(lambda_l + lambda_j)/2` times the shifted weight product of the chain.
pub fn form_matrix(lambdas: &[f64], thetas: &[f64], chain: &[usize]) -> DMat {
    let m = lambdas.len();
    let mut a = DMat::zeros(m, m);
    for l in 1..=m {
        for j in l..=m {
            let v = 0.5
                * (lambdas[l - 1] + lambdas[j - 1])
                * shifted_theta_product(thetas, chain, l, j);
            a[(l - 1, j - 1)] = v;
            a[(j - 1, l - 1)] = v;
        }
    }
    a
}

/// Chain-independent scaled form matrix: unit diagonal, off-diagonal entries
/// `am_gm(lambda_l, lambda_j) / prod_{k=l..j-1} theta_k`. Exists only when
/// every eigenvalue is positive; otherwise the diagonal scaling is undefined
/// and the caller falls back to the raw matrices.
pub fn scaled_form_matrix(lambdas: &[f64], thetas: &[f64]) -> Option<DMat> {
    let m = lambdas.len();
    if lambdas.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let mut a = DMat::identity(m);
    for l in 0..m {
        let mut gap = 1.0;
        for j in l + 1..m {
            gap *= thetas[j - 1];
            let am_gm = 0.5 * (lambdas[l] + lambdas[j]) / (lambdas[l] * lambdas[j]).sqrt();
            a[(l, j)] = am_gm / gap;
            a[(j, l)] = a[(l, j)];
        }
    }
    Some(a)
}

// ═══════════════════════════════════════════════════════════════════════════
// Determinant cascade
// ═══════════════════════════════════════════════════════════════════════════

/// The two-index determinant tables of a symmetric matrix, with the exact
/// identity tying the cascade's diagonal to leading principal minors.
///
/// Indices are 1-based to match the algebra: `K[l][r]` is defined for
/// `2 <= r <= l <= n` and `H[l][r]` for `2 <= r < l <= n`. Entries grow (or
/// shrink) doubly exponentially with `r`, so for larger matrices the tables
/// can leave `f64` range; they stay meaningful as diagnostics wherever they
/// are finite.
#[derive(Clone, Debug)]
pub struct DetRecursion {
    n: usize,
    k: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    leading: Vec<f64>,
}

/// `base^(2^e)` by repeated squaring; overflow saturates to infinity, which
/// the consumers treat as "out of diagnostic range".
fn power_of_two_exponent(base: f64, e: usize) -> f64 {
    let mut v = base;
    for _ in 0..e {
        v *= v;
    }
    v
}

impl DetRecursion {
    pub fn new(a: &DMat) -> Result<Self> {
        let n = a.n_rows();
        if n < 2 || a.n_cols() != n {
            return Err(Error::InvalidInput(format!(
                "determinant cascade needs a square matrix of size >= 2, got {}x{}",
                n,
                a.n_cols()
            )));
        }
        let leading = linalg::leading_minors(a);

        // Tables are stored 1-based with unused cells left as NaN, so a bad
        // index in downstream code shows up as NaN rather than a stale value.
        let mut k = vec![vec![f64::NAN; n + 1]; n + 1];
        let mut h = vec![vec![f64::NAN; n + 1]; n + 1];

        for l in 2..=n {
            k[l][2] = a[(0, 0)] * a[(l - 1, l - 1)] - a[(0, l - 1)] * a[(0, l - 1)];
        }
        for l in 3..=n {
            h[l][2] = a[(0, 0)] * a[(1, l - 1)] - a[(0, 1)] * a[(0, l - 1)];
        }
        // H[l][r] borders the leading (r-1)-block with row r and column l,
        // then scales by the minor product that keeps the recurrence for K
        // polynomial (no denominators).
        for l in 4..=n {
            for r in 3..l {
                let rows: Vec<usize> = (0..r).collect();
                let cols: Vec<usize> = (0..r - 1).chain(std::iter::once(l - 1)).collect();
                let bordered = linalg::determinant(&a.gather(&rows, &cols));
                let mut scale = 1.0;
                for kk in 1..=r - 2 {
                    scale *= power_of_two_exponent(leading[kk - 1], r - kk - 2);
                }
                h[l][r] = bordered * scale;
            }
        }
        for l in 3..=n {
            for r in 3..=l {
                k[l][r] = k[r - 1][r - 1] * k[l][r - 1] - h[l][r - 1] * h[l][r - 1];
            }
        }

        Ok(DetRecursion { n, k, h, leading })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `K[l][r]`, `2 <= r <= l <= n`.
    pub fn k(&self, l: usize, r: usize) -> f64 {
        assert!((2..=l).contains(&r) && l <= self.n, "K[{l}][{r}] undefined");
        self.k[l][r]
    }

    /// `H[l][r]`, `2 <= r < l <= n`.
    pub fn h(&self, l: usize, r: usize) -> f64 {
        assert!((2..l).contains(&r) && l <= self.n, "H[{l}][{r}] undefined");
        self.h[l][r]
    }

    /// Leading principal minors `det[1..=n]`, computed independently by LU.
    pub fn leading_minors(&self) -> &[f64] {
        &self.leading
    }

    /// The cascade diagonal `K[2][2], ..., K[n][n]`.
    pub fn cascade_diagonal(&self) -> Vec<f64> {
        (2..=self.n).map(|l| self.k[l][l]).collect()
    }

    /// What the identity says `K[l][l]` must equal:
    /// `det[l] * prod_{k=1}^{l-2} det[k]^(2^(l-k-2))`.
    pub fn predicted_diagonal(&self, l: usize) -> f64 {
        let mut v = self.leading[l - 1];
        for kk in 1..=l.saturating_sub(2) {
            v *= power_of_two_exponent(self.leading[kk - 1], l - kk - 2);
        }
        v
    }

    /// Checks the diagonal identity entry by entry at the given relative
    /// tolerance. Entries that have left `f64` range on either side are
    /// reported as inconsistent, since the identity can no longer be
    /// confirmed there.
    pub fn validate(&self, rel_tol: f64) -> Result<()> {
        for l in 2..=self.n {
            let actual = self.k[l][l];
            let expected = self.predicted_diagonal(l);
            if !actual.is_finite() || !expected.is_finite() {
                return Err(Error::Inconsistency(format!(
                    "cascade diagonal K[{l}][{l}] left f64 range \
                     (got {actual}, predicted {expected})"
                )));
            }
            let denom = expected.abs().max(actual.abs()).max(f64::MIN_POSITIVE);
            let rel = (actual - expected).abs() / denom;
            if rel > rel_tol {
                return Err(Error::Inconsistency(format!(
                    "cascade diagonal K[{l}][{l}] = {actual} disagrees with \
                     minor product {expected} (relative error {rel:.3e})"
                )));
            }
        }
        Ok(())
    }
}

// ═══════════════════════════════════════════════════════════════════════════
// The certificate sweep
// ═══════════════════════════════════════════════════════════════════════════

/// First failing chain, in enumeration order, with its diagnostics.
#[derive(Clone, Debug)]
pub struct Witness {
    /// The chain whose form matrix failed.
    pub chain: Vec<usize>,
    /// Its rank in the enumeration.
    pub rank: u128,
    /// 1-based index of the first nonpositive factorization pivot, which is
    /// also the index of the first nonpositive leading minor.
    pub minor_index: usize,
    /// Value of that pivot (nonpositive, or non-finite if the matrix left
    /// `f64` range).
    pub pivot: f64,
    /// Cascade diagonal `K[2][2].. K[m][m]` of the failing matrix, for
    /// cross-inspection against the pivot story.
    pub cascade_diagonal: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CertificateReport {
    /// True when every chain's form matrix is positive definite.
    pub holds: bool,
    pub chains_checked: u128,
    /// Smallest factorization pivot seen across all raw matrices; negative
    /// infinity stands in for matrices that left `f64` range.
    pub min_pivot: f64,
    /// Smallest pivot of the chain-independent scaled matrix, when all
    /// eigenvalues are positive. Unit-normalized, so comparable across
    /// configurations; this is the margin the weight search steers by.
    pub scaled_margin: Option<f64>,
    pub witness: Option<Witness>,
}

/// Outcome of testing one block of chains: running minimum pivot plus the
/// first failure, if any. Folding these in rank order keeps the sweep's
/// result identical however the blocks were scheduled.
struct BlockOutcome {
    min_pivot: f64,
    failure: Option<(u128, Vec<usize>, usize, f64)>,
}

/// Tests positive definiteness of every chain's form matrix at the
/// polynomial's weights against the given diffusion eigenvalues.
pub fn check_certificate(
    lambdas: &[f64],
    poly: &LyapunovPolynomial,
) -> Result<CertificateReport> {
    let m = poly.m();
    if lambdas.len() != m {
        return Err(Error::InvalidInput(format!(
            "got {} eigenvalues for a polynomial on {} components",
            lambdas.len(),
            m
        )));
    }
    if let Some(bad) = lambdas.iter().find(|l| !l.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "eigenvalue {bad} is not finite"
        )));
    }
    let top = poly.degree() - 2;
    let count = chain_count(m, top)?;
    // Constructing the iterator enforces the enumeration cap up front.
    ChainIter::new(m, top)?;

    let thetas = poly.thetas().to_vec();
    let lambdas_owned = lambdas.to_vec();
    let n_blocks = count.div_ceil(SWEEP_CHUNK as u128) as usize;

    let outcomes = exec::map_indexed(n_blocks, SWEEP_CHUNK * m * m * m, |bi| {
        let start = bi as u128 * SWEEP_CHUNK as u128;
        let mut iter =
            ChainIter::from_rank(m, top, start).expect("block start below checked count");
        let mut outcome = BlockOutcome {
            min_pivot: f64::INFINITY,
            failure: None,
        };
        let mut offset = 0u128;
        iter.visit(SWEEP_CHUNK, |chain| {
            let rank = start + offset;
            offset += 1;
            if outcome.failure.is_some() {
                return;
            }
            let a = form_matrix(&lambdas_owned, &thetas, chain);
            let pivots = linalg::symmetric_pivots(&a);
            let last = *pivots.last().expect("m >= 2 so at least one pivot");
            let ok = pivots.len() == m && last > 0.0 && last.is_finite();
            let low = if last.is_finite() {
                pivots.iter().cloned().fold(f64::INFINITY, f64::min)
            } else {
                f64::NEG_INFINITY
            };
            outcome.min_pivot = outcome.min_pivot.min(low);
            if !ok {
                outcome.failure = Some((rank, chain.to_vec(), pivots.len(), last));
            }
        });
        outcome
    });

    let mut min_pivot = f64::INFINITY;
    let mut first_failure = None;
    for outcome in outcomes {
        min_pivot = min_pivot.min(outcome.min_pivot);
        if first_failure.is_none() {
            first_failure = outcome.failure;
        }
    }

    let scaled_margin = scaled_form_matrix(lambdas, poly.thetas()).map(|s| {
        let pivots = linalg::symmetric_pivots(&s);
        pivots.iter().cloned().fold(f64::INFINITY, f64::min)
    });

    let witness = match first_failure {
        None => None,
        Some((rank, chain, minor_index, pivot)) => {
            let a = form_matrix(lambdas, poly.thetas(), &chain);
            let cascade_diagonal = DetRecursion::new(&a)
                .map(|r| r.cascade_diagonal())
                .unwrap_or_default();
            Some(Witness {
                chain,
                rank,
                minor_index,
                pivot,
                cascade_diagonal,
            })
        }
    };

    Ok(CertificateReport {
        holds: witness.is_none(),
        chains_checked: count,
        min_pivot,
        scaled_margin,
        witness,
    })
}

// ═══════════════════════════════════════════════════════════════════════════
// Weight search
// ═══════════════════════════════════════════════════════════════════════════

#[derive(Clone, Copy, Debug)]
pub struct SearchBudget {
    /// Total coordinate doublings allowed while hunting for any passing
    /// weight vector.
    pub doublings: usize,
    /// Bisection steps spent tightening each coordinate afterwards.
    pub bisection_steps: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            doublings: 60,
            bisection_steps: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub thetas: Vec<f64>,
    /// Fresh certificate report for the returned weights; `holds` is true.
    pub report: CertificateReport,
    pub doublings_used: usize,
}

/// Finds coupling weights that make the certificate hold, then tightens them
/// coordinate by coordinate toward the infeasible boundary.
///
/// Deterministic throughout: the start vector comes from the
/// arithmetic-geometric mean ratios of the eigenvalues (each gap weight one
/// unit above the largest ratio that has to cross it), growth is
/// round-robin doubling, and tightening is plain bisection that always keeps
/// the passing endpoint. Fails with the best margin seen when the growth
/// budget runs out, which is the generic outcome whenever some eigenvalue is
/// nonpositive.
pub fn search_weights(
    lambdas: &[f64],
    degree: usize,
    budget: &SearchBudget,
) -> Result<SearchOutcome> {
    let m = lambdas.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "weight search needs at least 2 components, got {m}"
        )));
    }
    let all_positive = lambdas.iter().all(|&l| l > 0.0);
    let mut thetas = vec![2.0; m - 1];
    if all_positive {
        for l in 0..m - 1 {
            let mut worst: f64 = 1.0;
            for i in 0..m {
                for j in i + 1..m {
                    if i <= l && l < j {
                        let am_gm =
                            0.5 * (lambdas[i] + lambdas[j]) / (lambdas[i] * lambdas[j]).sqrt();
                        worst = worst.max(am_gm);
                    }
                }
            }
            thetas[l] = 1.0 + worst;
        }
    }

    let margin_of = |report: &CertificateReport| report.scaled_margin.unwrap_or(report.min_pivot);

    let check =
        |thetas: &[f64]| -> Result<CertificateReport> {
            let poly = LyapunovPolynomial::new(m, degree, thetas.to_vec())?;
            check_certificate(lambdas, &poly)
        };

    let mut report = check(&thetas)?;
    let mut best_margin = margin_of(&report);
    let mut doublings_used = 0;
    while !report.holds {
        if doublings_used == budget.doublings {
            return Err(Error::Infeasible {
                best_margin,
                doublings: doublings_used,
            });
        }
        thetas[doublings_used % (m - 1)] *= 2.0;
        doublings_used += 1;
        report = check(&thetas)?;
        best_margin = best_margin.max(margin_of(&report));
    }

    // Tighten one coordinate at a time. The passing endpoint is always kept,
    // so the vector stays feasible through every intermediate state.
    for l in 0..m - 1 {
        let mut hi = thetas[l];
        let mut lo = 0.0;
        for _ in 0..budget.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if mid <= 0.0 || mid == hi {
                break;
            }
            let mut candidate = thetas.clone();
            candidate[l] = mid;
            if check(&candidate)?.holds {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        thetas[l] = hi;
    }

    let report = check(&thetas)?;
    debug_assert!(report.holds);
    Ok(SearchOutcome {
        thetas,
        report,
        doublings_used,
    })
}

// ═══════════════════════════════════════════════════════════════════════════
