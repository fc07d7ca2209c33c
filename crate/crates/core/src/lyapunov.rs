//! Homogeneous barrier polynomials built from weighted chain sums.
//!
//! The polynomial of degree `p` in the diagonal coordinates `w_1..w_m` is
//!
//! ```text
//!   H(w) = sum over chains 0 <= q_1 <= ... <= q_{m-1} <= p of
//!          [ prod_k C(q_{k+1}, q_k) ] C(p, q_{m-1})
//!          [ prod_k theta_k^(q_k^2) ]
//!          w_1^{q_1} w_2^{q_2-q_1} ... w_{m-1}^{q_{m-1}-q_{m-2}} w_m^{p-q_{m-1}},
//! ```
//!
//! a binomial-weighted interpolation between the pure powers `w_1^p` and
//! `w_m^p` whose couplings are damped by the weights `theta_k > 0`. On the
//! closed positive orthant every term is nonnegative, so `H` vanishes only
//! at the origin there.
//!
//! Differentiation never leaves the family. Dropping the degree by one and
//! shifting the weight exponent from `q_k^2` to `(q_k + s_k)^2`, with
//! `s_k = [k >= l]` counting one unit per derivative taken at component `l`,
//! reproduces the partial derivatives exactly:
//!
//! ```text
//!   dH/dw_l        = p       * chain sum at degree p-1, shifts [k >= l]
//!   d2H/dw_l dw_j  = p (p-1) * chain sum at degree p-2, shifts [k>=l]+[k>=j]
//! ```
//!
//! [`LyapunovPolynomial`] carries the cached binomial table and exposes
//! evaluation, gradient, and Hessian through that one rule. [`ChainIter`]
//! walks the chain lattice in a fixed order and can seek by rank, which is
//! what lets downstream sweeps split the lattice into contiguous blocks.

use crate::error::{Error, Result};
use crate::linalg::DMat;

/// Hard ceiling on the number of chains any single enumeration may visit.
/// `C(p + m - 1, m - 1)` grows combinatorially, and everything downstream
/// (evaluation, definiteness sweeps) walks the full lattice.
pub const CHAIN_ENUMERATION_CAP: u128 = 10_000_000;

/// Largest accepted polynomial degree. Binomial coefficients at the center
/// of row 1025 already exceed the finite range of `f64`, so higher degrees
/// could only ever evaluate to infinity.
pub const MAX_DEGREE: usize = 1024;

// ═══════════════════════════════════════════════════════════════════════════
// Chain lattice
// ═══════════════════════════════════════════════════════════════════════════

/// Number of monotone chains `0 <= q_1 <= ... <= q_{m-1} <= top`, which is
/// `C(top + m - 1, m - 1)`. Errors only if the exact count overflows `u128`;
/// the enumeration cap is enforced by [`ChainIter::new`], not here.
pub fn chain_count(m: usize, top: usize) -> Result<u128> {
    debug_assert!(m >= 2);
    let k = (m - 1) as u128;
    let n = top as u128 + k;
    let mut count: u128 = 1;
    for i in 1..=k {
        // Multiply before dividing so every intermediate stays an exact
        // binomial times an integer.
        count = count
            .checked_mul(n - k + i)
            .ok_or(Error::Capacity {
                what: "chain lattice",
                requested: u128::MAX,
                limit: CHAIN_ENUMERATION_CAP,
            })?
            / i;
    }
    Ok(count)
}

/// Iterator over the chain lattice in colexicographic order: the sequence is
/// sorted by `q_{m-1}` first, then `q_{m-2}`, and so on, with `q_1` varying
/// fastest among chains that share a tail. For `m = 3, top = 2` the order is
/// `[0,0], [0,1], [1,1], [0,2], [1,2], [2,2]`.
///
/// Yields freshly allocated `Vec<usize>` items through [`Iterator`]; hot
/// loops should prefer [`ChainIter::visit`], which reuses one buffer.
#[derive(Clone, Debug)]
pub struct ChainIter {
    top: usize,
    /// Next chain to yield; `None` once exhausted.
    chain: Option<Vec<usize>>,
    remaining: u128,
}

impl ChainIter {
    /// Starts at rank zero (the all-zeros chain). Errors if the lattice
    /// exceeds [`CHAIN_ENUMERATION_CAP`].
    pub fn new(m: usize, top: usize) -> Result<Self> {
        Self::from_rank(m, top, 0)
    }

    /// Starts mid-sequence at the given rank, so a sweep can be split into
    /// contiguous blocks that each seek once and then step. Rank `count`
    /// (one past the end) yields an immediately exhausted iterator.
    pub fn from_rank(m: usize, top: usize, rank: u128) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "chain lattice needs at least 2 components, got m = {m}"
            )));
        }
        let count = chain_count(m, top)?;
        if count > CHAIN_ENUMERATION_CAP {
            return Err(Error::Capacity {
                what: "chain lattice",
                requested: count,
                limit: CHAIN_ENUMERATION_CAP,
            });
        }
        if rank > count {
            return Err(Error::InvalidInput(format!(
                "chain rank {rank} out of range, lattice has {count} chains"
            )));
        }
        if rank == count {
            return Ok(ChainIter {
                top,
                chain: None,
                remaining: 0,
            });
        }

        // Colex rank decodes through the combinadic: with r_k = q_k + k - 1
        // strictly increasing, rank = sum_k C(r_k, k). Peel off the largest
        // coordinate first by finding the greatest r with C(r, k) <= rest.
        let mut chain = vec![0usize; m - 1];
        let mut rest = rank;
        for k in (1..m).rev() {
            let mut r = k - 1; // smallest legal r_k, where C(r, k) = 0
            let mut binom: u128 = 0;
            loop {
                // C(r + 1, k) from C(r, k); both fit easily below the cap.
                let next = if r + 1 < k {
                    0
                } else if r + 1 == k {
                    1
                } else {
                    binom * (r as u128 + 1) / (r as u128 + 1 - k as u128)
                };
                if next > rest || r + 1 > top + k - 1 {
                    break;
                }
                r += 1;
                binom = next;
            }
            chain[k - 1] = r - (k - 1);
            rest -= binom;
        }
        debug_assert_eq!(rest, 0);

        Ok(ChainIter {
            top,
            chain: Some(chain),
            remaining: count - rank,
        })
    }

    /// Remaining number of chains.
    pub fn remaining(&self) -> u128 {
        self.remaining
    }

    /// Applies `f` to up to `limit` chains in order without allocating,
    /// returning how many were visited. The borrow ends with each call, so
    /// callers copy out whatever they need.
    pub fn visit<F: FnMut(&[usize])>(&mut self, limit: usize, mut f: F) -> usize {
        let mut seen = 0;
        while seen < limit {
            let Some(chain) = self.chain.as_mut() else {
                break;
            };
            f(chain);
            seen += 1;
            self.remaining -= 1;
            if !advance_chain(chain, self.top) {
                self.chain = None;
            }
        }
        seen
    }
}

/// Steps the odometer one position in colex order; false when exhausted.
/// The first coordinate that can grow without breaking monotonicity does,
/// and everything to its left resets to zero.
fn advance_chain(chain: &mut [usize], top: usize) -> bool {
    let len = chain.len();
    for k in 0..len {
        let bound = if k + 1 < len { chain[k + 1] } else { top };
        if chain[k] < bound {
            chain[k] += 1;
            for slot in chain.iter_mut().take(k) {
                *slot = 0;
            }
            return true;
        }
    }
    false
}

impl Iterator for ChainIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let chain = self.chain.as_ref()?.clone();
        self.remaining -= 1;
        let exhausted = !advance_chain(self.chain.as_mut().unwrap(), self.top);
        if exhausted {
            self.chain = None;
        }
        Some(chain)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for ChainIter {}

/// Weight factor `prod_k theta_k^((q_k + s_k)^2)` for a chain, where
/// `s_k = [k >= l1] + [k >= l2]` with 1-based `k` and derivative components
/// `l1, l2` in `1..=m`. Passing `m` (or anything above `m - 1`) for a slot
/// leaves every exponent unshifted, matching a derivative in the last
/// component, whose chain reindexing happens entirely in the degree.
pub fn shifted_theta_product(thetas: &[f64], chain: &[usize], l1: usize, l2: usize) -> f64 {
    let mut product = 1.0;
    for (k0, (&theta, &q)) in thetas.iter().zip(chain).enumerate() {
        let k = k0 + 1;
        let e = q + usize::from(k >= l1) + usize::from(k >= l2);
        if e > 0 {
            product *= theta.powi((e * e) as i32);
        }
    }
    product
}

// ═══════════════════════════════════════════════════════════════════════════
// The polynomial
// ═══════════════════════════════════════════════════════════════════════════

#[derive(Clone, Debug)]
pub struct LyapunovPolynomial {
    m: usize,
    degree: usize,
    thetas: Vec<f64>,
    /// Pascal's triangle rows `0..=degree` in `f64`; exact through row 52's
    /// worst entry and correctly rounded far beyond, which is all the
    /// evaluation needs.
    binomials: Vec<Vec<f64>>,
}

impl LyapunovPolynomial {
    pub fn new(m: usize, degree: usize, thetas: Vec<f64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!(
                "polynomial needs at least 2 components, got m = {m}"
            )));
        }
        if degree < 2 {
            return Err(Error::InvalidInput(format!(
                "degree must be at least 2 so the Hessian exists, got {degree}"
            )));
        }
        if degree > MAX_DEGREE {
            return Err(Error::InvalidInput(format!(
                "degree {degree} exceeds {MAX_DEGREE}, the largest with binomial \
                 rows representable in f64"
            )));
        }
        if thetas.len() != m - 1 {
            return Err(Error::InvalidInput(format!(
                "need {} coupling weights for m = {m}, got {}",
                m - 1,
                thetas.len()
            )));
        }
        for (k, &theta) in thetas.iter().enumerate() {
            if !theta.is_finite() || theta <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "coupling weight theta_{} must be finite and positive, got {theta}",
                    k + 1
                )));
            }
        }
        // The widest lattice any derivative visits is the one at full degree.
        ChainIter::new(m, degree)?;

        let mut binomials = Vec::with_capacity(degree + 1);
        binomials.push(vec![1.0]);
        for n in 1..=degree {
            let prev: &Vec<f64> = &binomials[n - 1];
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = prev[k - 1] + prev[k];
            }
            binomials.push(row);
        }

        Ok(LyapunovPolynomial {
            m,
            degree,
            thetas,
            binomials,
        })
    }

    /// All coupling weights equal; the common case in searches and examples.
    pub fn uniform(m: usize, degree: usize, theta: f64) -> Result<Self> {
        Self::new(m, degree, vec![theta; m.saturating_sub(1)])
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    fn binom(&self, n: usize, k: usize) -> f64 {
        self.binomials[n][k]
    }

    /// Chain sum at the given degree with derivative shifts `l1, l2`
    /// (`m` means no shift in the weights; see [`shifted_theta_product`]).
    /// The degree-lowering prefactors `p`, `p(p-1)` are the caller's.
    fn chain_form_sum(&self, top: usize, l1: usize, l2: usize, w: &[f64]) -> Result<f64> {
        let m = self.m;
        let mut sum = 0.0_f64;
        let mut iter = ChainIter::new(m, top)?;
        iter.visit(usize::MAX, |chain| {
            let mut term = self.binom(top, chain[m - 2]);
            for k in 0..m.saturating_sub(2) {
                term *= self.binom(chain[k + 1], chain[k]);
            }
            term *= shifted_theta_product(&self.thetas, chain, l1, l2);
            term *= w[0].powi(chain[0] as i32);
            for j in 1..m - 1 {
                term *= w[j].powi((chain[j] - chain[j - 1]) as i32);
            }
            term *= w[m - 1].powi((top - chain[m - 2]) as i32);
            sum += term;
        });
        if !sum.is_finite() {
            return Err(Error::Overflow {
                context: "chain sum evaluation",
                log10: self.magnitude_bound_log10(top, w),
            });
        }
        Ok(sum)
    }

    /// Crude upper estimate of the largest term's magnitude, for overflow
    /// diagnostics only.
    fn magnitude_bound_log10(&self, top: usize, w: &[f64]) -> f64 {
        let shift = (top + 2) as f64;
        let theta_part: f64 = self
            .thetas
            .iter()
            .map(|t| shift * shift * t.log10().abs())
            .sum();
        let w_max = w.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
        let coeff_part = top as f64 * std::f64::consts::LOG10_2 * self.m as f64;
        theta_part + top as f64 * w_max.log10() + coeff_part
    }

    fn check_point(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.m {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, polynomial has m = {}",
                w.len(),
                self.m
            )));
        }
        if let Some(bad) = w.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point coordinate {bad} is not finite"
            )));
        }
        Ok(())
    }

    /// Value of `H` at `w`. The polynomial extends off the positive orthant;
    /// nothing here restricts signs.
    pub fn eval(&self, w: &[f64]) -> Result<f64> {
        self.check_point(w)?;
        self.chain_form_sum(self.degree, self.m, self.m, w)
    }

    /// Gradient of `H` at `w`.
    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_point(w)?;
        let p = self.degree as f64;
        (1..=self.m)
            .map(|l| Ok(p * self.chain_form_sum(self.degree - 1, l, self.m, w)?))
            .collect()
    }

    /// Hessian of `H` at `w`, symmetric `m x m`.
    pub fn hessian(&self, w: &[f64]) -> Result<DMat> {
        self.check_point(w)?;
        let p = self.degree as f64;
        let factor = p * (p - 1.0);
        let mut h = DMat::zeros(self.m, self.m);
        for l in 1..=self.m {
            for j in l..=self.m {
                let v = factor * self.chain_form_sum(self.degree - 2, l, j, w)?;
                h[(l - 1, j - 1)] = v;
                h[(j - 1, l - 1)] = v;
            }
        }
        Ok(h)
    }
}

// ═══════════════════════════════════════════════════════════════════════════

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn poly(m: usize, degree: usize, thetas: &[f64]) -> LyapunovPolynomial {
        LyapunovPolynomial::new(m, degree, thetas.to_vec()).unwrap()
    }

    #[test]
    fn chain_order_matches_colex_for_three_components() {
        let chains: Vec<Vec<usize>> = ChainIter::new(3, 2).unwrap().collect();
        assert_eq!(
            chains,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![1, 1],
                vec![0, 2],
                vec![1, 2],
                vec![2, 2]
            ]
        );
    }

    #[test]
    fn chain_count_matches_enumeration() {
        for (m, top) in [(2, 5), (3, 4), (4, 3), (5, 6)] {
            let count = chain_count(m, top).unwrap();
            let seen = ChainIter::new(m, top).unwrap().count();
            assert_eq!(count, seen as u128, "m={m} top={top}");
        }
    }

    #[test]
    fn seeking_by_rank_agrees_with_stepping() {
        let all: Vec<Vec<usize>> = ChainIter::new(4, 5).unwrap().collect();
        for rank in [0usize, 1, 7, 25, all.len() - 1] {
            let mut iter = ChainIter::from_rank(4, 5, rank as u128).unwrap();
            assert_eq!(iter.next().unwrap(), all[rank], "rank {rank}");
        }
        let mut past_end = ChainIter::from_rank(4, 5, all.len() as u128).unwrap();
        assert!(past_end.next().is_none());
    }

    #[test]
    fn visit_honors_its_limit_and_resumes() {
        let mut iter = ChainIter::new(3, 3).unwrap();
        let mut first = Vec::new();
        iter.visit(4, |c| first.push(c.to_vec()));
        let mut rest = Vec::new();
        iter.visit(usize::MAX, |c| rest.push(c.to_vec()));
        let all: Vec<Vec<usize>> = ChainIter::new(3, 3).unwrap().collect();
        assert_eq!(first.len(), 4);
        first.extend(rest);
        assert_eq!(first, all);
    }

    #[test]
    fn lattice_over_the_cap_is_refused() {
        // C(49, 19) is about 2e13.
        let err = ChainIter::new(20, 30).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }), "got {err:?}");
        let err = LyapunovPolynomial::uniform(20, 30, 1.0).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }), "got {err:?}");
    }

    #[test]
    fn two_component_values_match_hand_expansion() {
        // H = w2^2 + 2 theta w1 w2 + theta^4 w1^2 at degree 2.
        let p1 = poly(2, 2, &[1.0]);
        assert_relative_eq!(p1.eval(&[1.0, 1.0]).unwrap(), 4.0);
        let p2 = poly(2, 2, &[2.0]);
        assert_relative_eq!(p2.eval(&[1.0, 1.0]).unwrap(), 21.0);
        assert_relative_eq!(p2.eval(&[0.5, -1.0]).unwrap(), 1.0 - 2.0 + 4.0);
    }

    #[test]
    fn two_component_gradient_and_hessian_match_closed_forms() {
        let theta: f64 = 1.3;
        let p = poly(2, 2, &[theta]);
        for w in [[0.7, 2.1], [1.0, -0.4], [0.0, 3.0]] {
            let g = p.gradient(&w).unwrap();
            assert_relative_eq!(
                g[0],
                2.0 * theta * w[1] + 2.0 * theta.powi(4) * w[0],
                max_relative = 1e-14
            );
            assert_relative_eq!(g[1], 2.0 * w[1] + 2.0 * theta * w[0], max_relative = 1e-14);
            let h = p.hessian(&w).unwrap();
            assert_relative_eq!(h[(0, 0)], 2.0 * theta.powi(4), max_relative = 1e-14);
            assert_relative_eq!(h[(0, 1)], 2.0 * theta, max_relative = 1e-14);
            assert_relative_eq!(h[(1, 1)], 2.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn value_on_the_last_axis_is_a_pure_power() {
        for (m, degree) in [(2, 3), (3, 4), (5, 2)] {
            let p = poly(m, degree, &vec![1.7; m - 1]);
            let mut w = vec![0.0; m];
            w[m - 1] = 1.9;
            assert_relative_eq!(
                p.eval(&w).unwrap(),
                1.9_f64.powi(degree as i32),
                max_relative = 1e-14
            );
            assert_relative_eq!(p.eval(&vec![0.0; m]).unwrap(), 0.0);
        }
    }

    #[test]
    fn euler_identity_holds() {
        let cases = [
            (2, 2, vec![0.8], vec![1.2, 0.4]),
            (3, 3, vec![1.5, 0.6], vec![0.3, 2.0, 1.1]),
            (5, 4, vec![1.0, 2.0, 0.5, 1.2], vec![0.9, 0.2, 1.4, 0.7, 2.2]),
        ];
        for (m, degree, thetas, w) in cases {
            let p = poly(m, degree, &thetas);
            let h = p.eval(&w).unwrap();
            let g = p.gradient(&w).unwrap();
            let dot: f64 = g.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert_relative_eq!(dot, degree as f64 * h, max_relative = 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = poly(3, 3, &[1.4, 0.7]);
        let w = [0.8, 1.6, 0.5];
        let g = p.gradient(&w).unwrap();
        let hess = p.hessian(&w).unwrap();
        let scale = w.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        let hg = 1e-6 * scale;
        let hh = 1e-4 * scale;
        for l in 0..3 {
            let mut wp = w;
            let mut wm = w;
            wp[l] += hg;
            wm[l] -= hg;
            let fd = (p.eval(&wp).unwrap() - p.eval(&wm).unwrap()) / (2.0 * hg);
            assert_relative_eq!(g[l], fd, max_relative = 1e-6);
            for j in 0..3 {
                let mut wpp = w;
                let mut wpm = w;
                let mut wmp = w;
                let mut wmm = w;
                wpp[l] += hh;
                wpp[j] += hh;
                wpm[l] += hh;
                wpm[j] -= hh;
                wmp[l] -= hh;
                wmp[j] += hh;
                wmm[l] -= hh;
                wmm[j] -= hh;
                let fd2 = (p.eval(&wpp).unwrap() - p.eval(&wpm).unwrap()
                    - p.eval(&wmp).unwrap()
                    + p.eval(&wmm).unwrap())
                    / (4.0 * hh * hh);
                assert_relative_eq!(hess[(l, j)], fd2, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn enormous_weights_report_overflow() {
        let p = poly(2, 4, &[1e30]);
        let err = p.eval(&[1.0, 1.0]).unwrap_err();
        match err {
            Error::Overflow { log10, .. } => assert!(log10 > 300.0, "log10 = {log10}"),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn construction_rejects_bad_arguments() {
        assert!(LyapunovPolynomial::new(1, 2, vec![]).is_err());
        assert!(LyapunovPolynomial::new(2, 1, vec![1.0]).is_err());
        assert!(LyapunovPolynomial::new(2, 2, vec![1.0, 1.0]).is_err());
        assert!(LyapunovPolynomial::new(2, 2, vec![-1.0]).is_err());
        assert!(LyapunovPolynomial::new(2, 2, vec![f64::NAN]).is_err());
        assert!(LyapunovPolynomial::new(2, MAX_DEGREE + 1, vec![1.0]).is_err());
        let p = poly(2, 2, &[1.0]);
        assert!(p.eval(&[1.0]).is_err());
        assert!(p.eval(&[1.0, f64::INFINITY]).is_err());
    }
}
