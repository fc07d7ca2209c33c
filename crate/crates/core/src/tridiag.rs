//! Tridiagonal solves via the Thomas algorithm.
//!
//! The implicit diffusion steps in this crate produce strictly diagonally
//! dominant systems, for which forward elimination without pivoting is
//! backward stable. The solver refuses to limp past a vanishing pivot and
//! reports failure instead.

/// Solves `A x = rhs` where A has sub-diagonal `sub`, diagonal `diag`, and
/// super-diagonal `sup` (lengths n-1, n, n-1). Returns `None` on a zero or
/// non-finite pivot.
pub fn solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut scratch = vec![0.0; n];
    let mut x = rhs.to_vec();
    if solve_into(sub, diag, sup, &mut scratch, &mut x) {
        Some(x)
    } else {
        None
    }
}

/// Allocation-free variant for hot loops: `x` holds the right-hand side on
/// entry and the solution on exit; `scratch` is caller-provided storage of
/// length n. Returns false on a zero or non-finite pivot, leaving `x`
/// unspecified.
pub fn solve_into(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    scratch: &mut [f64],
    x: &mut [f64],
) -> bool {
    let n = diag.len();
    debug_assert_eq!(sub.len(), n - 1);
    debug_assert_eq!(sup.len(), n - 1);
    debug_assert_eq!(scratch.len(), n);
    debug_assert_eq!(x.len(), n);

    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return false;
    }
    scratch[0] = sup.first().map_or(0.0, |&s| s / pivot);
    x[0] /= pivot;

    for i in 1..n {
        pivot = diag[i] - sub[i - 1] * scratch[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return false;
        }
        scratch[i] = if i < n - 1 { sup[i] / pivot } else { 0.0 };
        x[i] = (x[i] - sub[i - 1] * x[i - 1]) / pivot;
    }

    for i in (0..n - 1).rev() {
        x[i] -= scratch[i] * x[i + 1];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_system_returns_rhs() {
        let diag = vec![1.0; 5];
        let off = vec![0.0; 4];
        let rhs = vec![3.0, -1.0, 2.0, 0.5, 7.0];
        let x = solve(&off, &diag, &off, &rhs).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn solution_satisfies_discrete_laplacian_system() {
        // (2, -1) second-difference matrix, verify A x = rhs by residual.
        let n = 40;
        let sub = vec![-1.0; n - 1];
        let diag = vec![2.0; n];
        let sup = vec![-1.0; n - 1];
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = solve(&sub, &diag, &sup, &rhs).unwrap();
        for i in 0..n {
            let mut ax = 2.0 * x[i];
            if i > 0 {
                ax -= x[i - 1];
            }
            if i < n - 1 {
                ax -= x[i + 1];
            }
            assert_abs_diff_eq!(ax, rhs[i], epsilon = 1e-11);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        assert!(solve(&[1.0], &[0.0, 1.0], &[1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn solve_into_matches_allocating_solve() {
        let sub = vec![0.5, -0.25, 1.0];
        let diag = vec![4.0, 5.0, 6.0, 7.0];
        let sup = vec![-1.0, 2.0, 0.125];
        let rhs = vec![1.0, 2.0, 3.0, 4.0];
        let expected = solve(&sub, &diag, &sup, &rhs).unwrap();
        let mut scratch = vec![0.0; 4];
        let mut x = rhs.clone();
        assert!(solve_into(&sub, &diag, &sup, &mut scratch, &mut x));
        for (a, b) in x.iter().zip(&expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }
}
