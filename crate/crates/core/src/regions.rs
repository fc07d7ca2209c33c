//! Sign-pattern cones of the diagonalizing eigenbasis.
//!
//! Each sign vector `s` in `{+1,-1}^m` defines the closed cone
//!
//! ```text
//!     { x : s_l <v_l, x> >= 0  for all l }
//! ```
//!
//! where `v_l` are the eigenvectors of `D^T`. There are `2^m` of them, they
//! tile state space, and each is invariant under the diagonalized dynamics
//! because the transformed field `W = P^T U` (with P's columns signed by `s`)
//! is componentwise nonnegative exactly on the cone. Membership is a batch of
//! inner-product sign tests; the slack values, not just the verdict, are
//! reported because the simulator tracks their worst-case drift over time.

use crate::error::{Error, Result};
use crate::spectral::Spectrum;

/// Largest m for which the full `2^m` cone family may be enumerated at all.
pub const ENUMERATION_CAP: usize = 20;
/// Largest m for which enumeration will materialize a `Vec`; past this, use
/// the streaming [`region_iter`].
pub const MATERIALIZE_CAP: usize = 12;

// ═══════════════════════════════════════════════════════════════════════════
// Region specification
// ═══════════════════════════════════════════════════════════════════════════

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionSpec {
    signs: Vec<i8>,
}

impl RegionSpec {
    /// The cone containing the positive orthant image; all signs `+1`.
    pub fn all_plus(m: usize) -> Self {
        RegionSpec {
            signs: vec![1; m],
        }
    }

    pub fn from_signs(signs: Vec<i8>) -> Result<Self> {
        if signs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 sign entries, got {}",
                signs.len()
            )));
        }
        if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput(format!(
                "region signs must be +1 or -1, got {bad}"
            )));
        }
        Ok(RegionSpec { signs })
    }

    /// Region by enumeration index: bit `l` of `index` set means component
    /// `l` carries a minus sign (bit 0 is the first component).
    pub fn from_index(m: usize, index: u64) -> Result<Self> {
        if !(2..=ENUMERATION_CAP).contains(&m) {
            return Err(Error::Capacity {
                what: "region enumeration dimension",
                requested: m as u128,
                limit: ENUMERATION_CAP as u128,
            });
        }
        if index >> m != 0 {
            return Err(Error::InvalidInput(format!(
                "region index {index} out of range for m = {m}"
            )));
        }
        let signs = (0..m)
            .map(|l| if index >> l & 1 == 1 { -1 } else { 1 })
            .collect();
        Ok(RegionSpec { signs })
    }

    pub fn index(&self) -> u64 {
        self.signs
            .iter()
            .enumerate()
            .map(|(l, &s)| if s < 0 { 1 << l } else { 0 })
            .sum()
    }

    pub fn m(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign(&self, l: usize) -> f64 {
        f64::from(self.signs[l])
    }

    /// Same cone with one sign toggled; the two cones share a facet.
    pub fn flip(&self, l: usize) -> RegionSpec {
        let mut signs = self.signs.clone();
        signs[l] = -signs[l];
        RegionSpec { signs }
    }

    /// Display form like `(+,-,+)`.
    pub fn label(&self) -> String {
        let inner: Vec<&str> = self
            .signs
            .iter()
            .map(|&s| if s > 0 { "+" } else { "-" })
            .collect();
        format!("({})", inner.join(","))
    }
}

// ═══════════════════════════════════════════════════════════════════════════
// Enumeration
// ═══════════════════════════════════════════════════════════════════════════

/// Streams all `2^m` regions in index order without materializing them.
pub fn region_iter(m: usize) -> Result<RegionIter> {
    if !(2..=ENUMERATION_CAP).contains(&m) {
        return Err(Error::Capacity {
            what: "region enumeration dimension",
            requested: m as u128,
            limit: ENUMERATION_CAP as u128,
        });
    }
    Ok(RegionIter {
        m,
        next: 0,
        total: 1u64 << m,
    })
}

/// Materializes all `2^m` regions in index order. Capped harder than the
/// streaming iterator; beyond [`MATERIALIZE_CAP`] use [`region_iter`].
pub fn enumerate_regions(m: usize) -> Result<Vec<RegionSpec>> {
    if m > MATERIALIZE_CAP {
        return Err(Error::Capacity {
            what: "materialized region enumeration",
            requested: m as u128,
            limit: MATERIALIZE_CAP as u128,
        });
    }
    Ok(region_iter(m)?.collect())
}

pub struct RegionIter {
    m: usize,
    next: u64,
    total: u64,
}

impl Iterator for RegionIter {
    type Item = RegionSpec;

    fn next(&mut self) -> Option<RegionSpec> {
        if self.next >= self.total {
            return None;
        }
        let r = RegionSpec::from_index(self.m, self.next).expect("index in range");
        self.next += 1;
        Some(r)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = (self.total - self.next) as usize;
        (rem, Some(rem))
    }
}

impl ExactSizeIterator for RegionIter {}

// ═══════════════════════════════════════════════════════════════════════════
// Membership
// ═══════════════════════════════════════════════════════════════════════════

#[derive(Clone, Debug)]
pub struct MembershipReport {
    pub in_region: bool,
    /// `s_l <v_l, x>` per component; nonnegative inside the cone.
    pub slacks: Vec<f64>,
    /// 0-based index of the smallest slack (ties resolve to the smallest
    /// index, keeping reports deterministic).
    pub worst_index: usize,
    /// Absolute tolerance the verdict used.
    pub tolerance: f64,
}

/// Tests `x` against a cone. `eps` overrides the default tolerance from
/// [`Spectrum::membership_eps`]; boundary points count as inside.
pub fn membership(
    region: &RegionSpec,
    spectrum: &Spectrum,
    x: &[f64],
    eps: Option<f64>,
) -> MembershipReport {
    let m = spectrum.m();
    assert_eq!(region.m(), m, "region/spectrum dimension mismatch");
    assert_eq!(x.len(), m, "state vector has wrong length");
    let tolerance = eps.unwrap_or_else(|| spectrum.membership_eps(x));

    let slacks: Vec<f64> = (0..m)
        .map(|l| {
            let inner: f64 = spectrum.vector(l).iter().zip(x).map(|(v, u)| v * u).sum();
            region.sign(l) * inner
        })
        .collect();
    let mut worst_index = 0;
    for l in 1..m {
        if slacks[l] < slacks[worst_index] {
            worst_index = l;
        }
    }
    let in_region = slacks[worst_index] >= -tolerance;
    MembershipReport {
        in_region,
        slacks,
        worst_index,
        tolerance,
    }
}

/// Compatibility of boundary data with a cone: the same sign test applied to
/// the boundary vector. Homogeneous data is compatible with every cone.
pub fn boundary_compatibility(
    region: &RegionSpec,
    spectrum: &Spectrum,
    boundary_data: &[f64],
) -> MembershipReport {
    membership(region, spectrum, boundary_data, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ToeplitzDiffusion;
    use approx::assert_abs_diff_eq;

    fn spectrum2(mu_b: f64, mu_c: f64) -> Spectrum {
        ToeplitzDiffusion::new(2, 3.0, mu_b, mu_c).unwrap().spectrum()
    }

    #[test]
    fn enumeration_order_and_labels_for_two_components() {
        let regions = enumerate_regions(2).unwrap();
        let labels: Vec<String> = regions.iter().map(|r| r.label()).collect();
        assert_eq!(labels, ["(+,+)", "(-,+)", "(+,-)", "(-,-)"]);
        for (i, r) in regions.iter().enumerate() {
            assert_eq!(r.index(), i as u64);
        }
    }

    #[test]
    fn capacity_guards_fire() {
        assert!(matches!(
            enumerate_regions(13),
            Err(Error::Capacity { .. })
        ));
        assert!(matches!(region_iter(21), Err(Error::Capacity { .. })));
        // Streaming is fine between the two caps.
        assert_eq!(region_iter(13).unwrap().count(), 8192);
    }

    #[test]
    fn all_plus_contains_dominant_first_component() {
        let s = spectrum2(1.0, 1.0);
        let r = RegionSpec::all_plus(2);
        // u1 >= |u2| puts the state in the all-plus cone for mu = 1.
        let rep = membership(&r, &s, &[2.0, 1.0], None);
        assert!(rep.in_region);
        let r3h = 3.0_f64.sqrt() / 2.0;
        assert_abs_diff_eq!(rep.slacks[0], r3h, epsilon = 1e-14);
        assert_abs_diff_eq!(rep.slacks[1], 3.0 * r3h, epsilon = 1e-14);
        assert_eq!(rep.worst_index, 0);
    }

    #[test]
    fn second_cone_catches_dominant_second_component() {
        let s = spectrum2(1.0, 1.0);
        let x = [0.5, 1.0];
        // Not in the all-plus cone: the first slack goes negative.
        let rep_pp = membership(&RegionSpec::all_plus(2), &s, &x, None);
        assert!(!rep_pp.in_region);
        assert_eq!(rep_pp.worst_index, 0);
        // In the (-,+) cone: sqrt(mu) u2 >= |u1| with mu = 1.
        let r_mp = RegionSpec::from_index(2, 1).unwrap();
        let rep_mp = membership(&r_mp, &s, &x, None);
        assert!(rep_mp.in_region);
    }

    #[test]
    fn explicit_inequalities_match_for_skewed_mu() {
        // For m = 2 the four cones reduce to explicit inequalities in
        // (u1, u2) with the skew sqrt(mu):
        //   (+,+):  u1 >= sqrt(mu) |u2|      (-,+):  sqrt(mu) u2 >= |u1|
        //   (-,-): -u1 >= sqrt(mu) |u2|      (+,-): -sqrt(mu) u2 >= |u1|
        for (b, c) in [(1.0, 4.0), (1.0, 1.0), (4.0, 1.0)] {
            let s = spectrum2(b, c);
            let root_mu = (b / c).sqrt();
            type Cone<'a> = (u64, &'a dyn Fn(f64, f64) -> bool);
            let cases: &[Cone] = &[
                (0, &|u1, u2| u1 >= root_mu * u2.abs()),
                (1, &|u1, u2| root_mu * u2 >= u1.abs()),
                (2, &|u1, u2| -root_mu * u2 >= u1.abs()),
                (3, &|u1, u2| -u1 >= root_mu * u2.abs()),
            ];
            let points = [
                [2.0, 1.0],
                [0.5, 1.0],
                [-1.5, 0.3],
                [0.1, -2.0],
                [-0.4, -0.7],
                [3.0, -2.9],
            ];
            for (idx, check) in cases {
                let region = RegionSpec::from_index(2, *idx).unwrap();
                for p in &points {
                    let rep = membership(&region, &s, p, None);
                    // Skip points sitting on a cone facet at rounding scale.
                    if rep.slacks[rep.worst_index].abs() <= rep.tolerance {
                        continue;
                    }
                    assert_eq!(
                        rep.in_region,
                        check(p[0], p[1]),
                        "b={b} c={c} region {} point {p:?}",
                        region.label()
                    );
                }
            }
        }
    }

    #[test]
    fn flipping_a_sign_negates_that_slack() {
        let s = spectrum2(2.0, 0.5);
        let r = RegionSpec::all_plus(2);
        let x = [1.3, -0.4];
        let rep = membership(&r, &s, &x, None);
        let rep_flipped = membership(&r.flip(1), &s, &x, None);
        assert_abs_diff_eq!(rep.slacks[1], -rep_flipped.slacks[1], epsilon = 1e-15);
        assert_abs_diff_eq!(rep.slacks[0], rep_flipped.slacks[0], epsilon = 1e-15);
    }

    #[test]
    fn zero_boundary_data_is_compatible_with_every_cone() {
        let s = spectrum2(1.0, 1.0);
        for region in enumerate_regions(2).unwrap() {
            let rep = boundary_compatibility(&region, &s, &[0.0, 0.0]);
            assert!(rep.in_region);
            assert_eq!(rep.slacks, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn near_boundary_point_counts_as_inside_within_tolerance() {
        let s = spectrum2(1.0, 1.0);
        let r = RegionSpec::all_plus(2);
        // On the facet u1 = u2 the first slack vanishes; nudge just below.
        let x = [1.0, 1.0 + 1e-14];
        let rep = membership(&r, &s, &x, None);
        assert!(rep.slacks[0] < 0.0);
        assert!(rep.in_region, "within default tolerance");
        let strict = membership(&r, &s, &x, Some(0.0));
        assert!(!strict.in_region);
    }

    #[test]
    fn worst_index_breaks_ties_toward_smaller_index() {
        let s = spectrum2(1.0, 1.0);
        let r = RegionSpec::all_plus(2);
        // The origin ties every slack at exactly zero.
        let rep = membership(&r, &s, &[0.0, 0.0], None);
        assert_eq!(rep.slacks, vec![0.0, 0.0]);
        assert_eq!(rep.worst_index, 0);
    }
}
