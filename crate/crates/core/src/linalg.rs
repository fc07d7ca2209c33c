//! Dense helpers sized for the small matrices this crate works with
//! (component counts up to a few dozen). Row-major storage, partial-pivot LU,
//! leading principal minors, and a cyclic Jacobi eigensolver for symmetric
//! input. Clarity and testability win over blocking here; nothing is tuned
//! for large dimensions.

use crate::error::{Error, Result};

// ═══════════════════════════════════════════════════════════════════════════
// Dense row-major matrix
// ═══════════════════════════════════════════════════════════════════════════

#[derive(Clone, Debug, PartialEq)]
pub struct DMat {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DMat {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DMat {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from row slices; every row must have the same length.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n_rows = rows.len();
        let n_cols = if n_rows == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            data.extend_from_slice(row);
        }
        DMat {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn transpose(&self) -> DMat {
        let mut t = DMat::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &DMat) -> DMat {
        assert_eq!(self.n_cols, rhs.n_rows, "inner dimensions must agree");
        let mut out = DMat::zeros(self.n_rows, rhs.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..rhs.n_cols {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n_cols, x.len(), "dimension mismatch");
        (0..self.n_rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.n_cols)
            .map(|j| (0..self.n_rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Leading principal k-by-k submatrix.
    pub fn leading(&self, k: usize) -> DMat {
        let mut out = DMat::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                out[(i, j)] = self[(i, j)];
            }
        }
        out
    }

    /// Submatrix gathered from the given row and column index lists.
    pub fn gather(&self, rows: &[usize], cols: &[usize]) -> DMat {
        let mut out = DMat::zeros(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out[(i, j)] = self[(r, c)];
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DMat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

// ═══════════════════════════════════════════════════════════════════════════
// LU with partial pivoting: determinants, solves, inverses, minors
// ═══════════════════════════════════════════════════════════════════════════

pub struct Lu {
    lu: DMat,
    /// Row permutation applied to the input; `perm[i]` is the original row
    /// now sitting at position i.
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

pub fn lu(a: &DMat) -> Lu {
    assert_eq!(a.n_rows(), a.n_cols(), "LU needs a square matrix");
    let n = a.n_rows();
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    let mut singular = false;

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = m[(col, col)].abs();
        for r in col + 1..n {
            let v = m[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val == 0.0 {
            singular = true;
            continue;
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = tmp;
            }
            perm.swap(col, pivot_row);
            sign = -sign;
        }
        let inv_p = 1.0 / m[(col, col)];
        for r in col + 1..n {
            let factor = m[(r, col)] * inv_p;
            m[(r, col)] = factor;
            for j in col + 1..n {
                m[(r, j)] -= factor * m[(col, j)];
            }
        }
    }

    Lu {
        lu: m,
        perm,
        sign,
        singular,
    }
}

impl Lu {
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        let n = self.lu.n_rows();
        (0..n).fold(self.sign, |acc, i| acc * self.lu[(i, i)])
    }

    /// Solves `A x = b`; `None` when elimination met an exactly zero pivot.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        if self.singular {
            return None;
        }
        let n = self.lu.n_rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        Some(x)
    }
}

pub fn determinant(a: &DMat) -> f64 {
    lu(a).det()
}

pub fn solve(a: &DMat, b: &[f64]) -> Option<Vec<f64>> {
    lu(a).solve(b)
}

pub fn invert(a: &DMat) -> Option<DMat> {
    let n = a.n_rows();
    let f = lu(a);
    if f.is_singular() {
        return None;
    }
    let mut inv = DMat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = f.solve(&e)?;
        e[j] = 0.0;
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Some(inv)
}

/// Determinants of the leading principal blocks, sizes 1..=n. Each block gets
/// its own pivoted factorization; at these dimensions robustness beats reuse.
pub fn leading_minors(a: &DMat) -> Vec<f64> {
    (1..=a.n_rows())
        .map(|k| determinant(&a.leading(k)))
        .collect()
}

/// Pivot sequence of the unpivoted `L D L^T` factorization of a symmetric
/// matrix, i.e. the ratios of consecutive leading principal minors. The
/// factorization stops at the first pivot that is nonpositive or not finite,
/// so the returned vector may be shorter than the dimension; a symmetric
/// matrix is positive definite exactly when all `n` pivots come back
/// positive. Only the coefficients on and below the diagonal are read.
pub fn symmetric_pivots(a: &DMat) -> Vec<f64> {
    let n = a.n_rows();
    debug_assert_eq!(n, a.n_cols());
    // l holds the unit lower factor columns scaled by their pivot, which is
    // all the updates need: a_ij - sum_k l_ik l_jk d_k with l_jk d_k cached.
    let mut l = vec![0.0_f64; n * n];
    let mut d = Vec::with_capacity(n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[j * n + k] * l[j * n + k] * d[k];
        }
        d.push(pivot);
        if pivot <= 0.0 || !pivot.is_finite() {
            return d;
        }
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k] * d[k];
            }
            l[i * n + j] = v / pivot;
        }
    }
    d
}

/// One-norm condition estimate `|A|_1 |A^-1|_1`; infinite for singular input.
pub fn condition_est(a: &DMat) -> f64 {
    match invert(a) {
        Some(inv) => a.norm_one() * inv.norm_one(),
        None => f64::INFINITY,
    }
}

// ═══════════════════════════════════════════════════════════════════════════
// Symmetric eigenvalues by cyclic Jacobi
// ═══════════════════════════════════════════════════════════════════════════

/// Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.
///
/// Off-diagonal mass decays quadratically once the sweeps settle, so the cap
/// of 100 sweeps is far beyond what these dimensions need; hitting it means
/// the input was not symmetric (or not finite) and is reported as such.
pub fn sym_eigenvalues(a: &DMat) -> Result<Vec<f64>> {
    let n = a.n_rows();
    assert_eq!(n, a.n_cols(), "symmetric eigensolve needs a square matrix");
    if n == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let mut m = a.clone();
    // Work on the symmetrized copy; callers pass matrices that are symmetric
    // up to rounding and the average removes the ambiguity.
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let scale = m.max_abs();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if !scale.is_finite() {
        return Err(Error::Domain(
            "symmetric eigensolve on non-finite input".into(),
        ));
    }

    const MAX_SWEEPS: usize = 100;
    let tol = 1e-14 * scale;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off <= tol {
            let mut eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
            eigs.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
            return Ok(eigs);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 0.1 * tol {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let tau = (aqq - app) / (2.0 * apq);
                // Smaller-magnitude root of t^2 + 2 tau t - 1 = 0 keeps the
                // rotation angle below pi/4 and the iteration stable.
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    Err(Error::NonConvergence {
        what: "Jacobi eigenvalue sweeps",
        budget: MAX_SWEEPS,
    })
}
