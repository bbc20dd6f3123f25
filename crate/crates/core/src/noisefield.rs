//! Counter-based sources of ±1 increments.
//!
//! Every cell of the space-time lattice gets its arrow from a keyed hash of
//! `(stream key, t, x)`, so fields are never stored and can be queried in any
//! order. Streams (web field, auxiliary walk, each resampled region) are
//! separated by mixing a tag into the key.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAG_WEB: u64 = 0x7765_622d_6669_656c; // "web-fiel"
const TAG_AUX: u64 = 0x6175_782d_7761_6c6b; // "aux-walk"
const TAG_RESAMPLE: u64 = 0x7265_7361_6d70_6c65; // "resample"
const TAG_SCATTER: u64 = 0x7363_6174_7465_7273; // "scatters"
const TAG_DERIVE: u64 = 0x6465_7269_7665_2d73; // "derive-s"

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const ODD_T: u64 = 0xd6e8_feb8_6659_fd93;
const ODD_X: u64 = 0xa076_1d64_78bd_642f;

/// SplitMix64 finalizer.
#[inline]
pub fn fmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn stream_key(seed: u64, tag: u64) -> u64 {
    fmix64(fmix64(seed ^ tag).wrapping_add(GOLDEN))
}

/// Keyed hash of a two-dimensional counter.
#[inline]
pub fn hash2(key: u64, a: i64, b: i64) -> u64 {
    let h = fmix64(key ^ (a as u64).wrapping_mul(ODD_T));
    fmix64(h.wrapping_add(GOLDEN) ^ (b as u64).wrapping_mul(ODD_X))
}

#[inline]
fn hash1(key: u64, a: i64) -> u64 {
    fmix64(key ^ (a as u64).wrapping_mul(ODD_T).wrapping_add(GOLDEN))
}

/// Per-trial seed derived from `(master, experiment tag, trial index)`.
///
/// Any single trial can be rerun in isolation from these three values.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    // FNV-1a over the tag bytes, then keyed mixing.
    let mut tag_hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        tag_hash ^= u64::from(b);
        tag_hash = tag_hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash2(stream_key(master, TAG_DERIVE), tag_hash as i64, index as i64)
}

/// A point `(t, x)` of the bipartite space-time lattice (`t + x` even).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    t: i64,
    x: i64,
}

impl LatticePoint {
    pub fn new(t: i64, x: i64) -> Result<Self> {
        if (t + x).rem_euclid(2) != 0 {
            return Err(Error::Parity { t, x });
        }
        Ok(Self { t, x })
    }

    pub fn origin() -> Self {
        Self { t: 0, x: 0 }
    }

    pub fn t(&self) -> i64 {
        self.t
    }

    pub fn x(&self) -> i64 {
        self.x
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.t, self.x)
    }
}

/// Anything that assigns a ±1 arrow to lattice cells.
///
/// Callers are responsible for only asking about cells on the sublattice.
pub trait ArrowSource {
    fn arrow(&self, t: i64, x: i64) -> i64;
}

/// Sources of ±1 increments indexed by time only.
pub trait AuxSource {
    fn increment(&self, t: i64) -> i64;
}

impl<T: ArrowSource + ?Sized> ArrowSource for &T {
    #[inline]
    fn arrow(&self, t: i64, x: i64) -> i64 {
        (**self).arrow(t, x)
    }
}

impl<T: AuxSource + ?Sized> AuxSource for &T {
    #[inline]
    fn increment(&self, t: i64) -> i64 {
        (**self).increment(t)
    }
}

/// A field whose every arrow is the same value. Test fixture.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub i64);

impl ArrowSource for ConstantField {
    fn arrow(&self, _t: i64, _x: i64) -> i64 {
        self.0
    }
}

impl AuxSource for ConstantField {
    fn increment(&self, _t: i64) -> i64 {
        self.0
    }
}

/// Set of lattice cells whose arrows are redrawn by [`ArrowField::resample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Whole rows `x = const`, all times.
    Rows(BTreeSet<i64>),
    /// Half-open rectangle `[t_lo, t_hi) × [x_lo, x_hi)`.
    Rect { t_lo: i64, t_hi: i64, x_lo: i64, x_hi: i64 },
    /// Rows selected independently with probability `numerator / denominator`
    /// by hashing the row index under `key`.
    ScatteredRows { numerator: u64, denominator: u64, key: u64 },
}

/// Largest rectangle width scanned cell-by-cell when checking overlap with a
/// scattered-row region; wider rectangles are treated as overlapping.
const SCATTER_SCAN_LIMIT: i64 = 1 << 20;

impl Region {
    pub fn rows<I: IntoIterator<Item = i64>>(rows: I) -> Self {
        Region::Rows(rows.into_iter().collect())
    }

    pub fn rect(t_lo: i64, t_hi: i64, x_lo: i64, x_hi: i64) -> Self {
        Region::Rect { t_lo, t_hi, x_lo, x_hi }
    }

    pub fn scattered_rows(numerator: u64, denominator: u64, key: u64) -> Result<Self> {
        if denominator == 0 || numerator > denominator {
            return Err(Error::invalid(format!(
                "scattered row fraction {numerator}/{denominator} is not in [0, 1]"
            )));
        }
        Ok(Region::ScatteredRows { numerator, denominator, key })
    }

    fn validate(&self) -> Result<()> {
        match self {
            Region::Rect { t_lo, t_hi, x_lo, x_hi } if t_lo > t_hi || x_lo > x_hi => {
                Err(Error::invalid(format!("malformed rectangle [{t_lo},{t_hi})x[{x_lo},{x_hi})")))
            }
            Region::ScatteredRows { numerator, denominator, .. }
                if *denominator == 0 || numerator > denominator =>
            {
                Err(Error::invalid("scattered row fraction outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Region::Rows(rows) => rows.is_empty(),
            Region::Rect { t_lo, t_hi, x_lo, x_hi } => t_lo >= t_hi || x_lo >= x_hi,
            Region::ScatteredRows { numerator, .. } => *numerator == 0,
        }
    }

    #[inline]
    fn contains_row(&self, x: i64) -> bool {
        match self {
            Region::Rows(rows) => rows.contains(&x),
            Region::Rect { t_lo, t_hi, x_lo, x_hi } => t_lo < t_hi && (*x_lo..*x_hi).contains(&x),
            Region::ScatteredRows { numerator, denominator, key } => {
                let h = hash1(stream_key(*key, TAG_SCATTER), x);
                u128::from(h) * u128::from(*denominator) < (u128::from(*numerator) << 64)
            }
        }
    }

    #[inline]
    pub fn contains(&self, t: i64, x: i64) -> bool {
        match self {
            Region::Rect { t_lo, t_hi, .. } => (*t_lo..*t_hi).contains(&t) && self.contains_row(x),
            _ => self.contains_row(x),
        }
    }

    fn overlaps(&self, other: &Region) -> bool {
        use Region::*;
        if self.is_empty() || other.is_empty() {
            return false;
        }
        match (self, other) {
            (Rows(a), Rows(b)) => a.intersection(b).next().is_some(),
            (Rows(rows), r @ Rect { .. }) | (r @ Rect { .. }, Rows(rows)) => {
                rows.iter().any(|&x| r.contains_row(x))
            }
            (Rect { t_lo: a0, t_hi: a1, x_lo: b0, x_hi: b1 }, Rect { t_lo: c0, t_hi: c1, x_lo: d0, x_hi: d1 }) => {
                a0.max(c0) < a1.min(c1) && b0.max(d0) < b1.min(d1)
            }
            (Rows(rows), s @ ScatteredRows { .. }) | (s @ ScatteredRows { .. }, Rows(rows)) => {
                rows.iter().any(|&x| s.contains_row(x))
            }
            (Rect { x_lo, x_hi, .. }, s @ ScatteredRows { .. })
            | (s @ ScatteredRows { .. }, Rect { x_lo, x_hi, .. }) => {
                if x_hi - x_lo > SCATTER_SCAN_LIMIT {
                    true
                } else {
                    (*x_lo..*x_hi).any(|x| s.contains_row(x))
                }
            }
            // Two nonempty scattered sets cannot be shown disjoint cheaply.
            (ScatteredRows { .. }, ScatteredRows { .. }) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub region: Region,
    pub seed: u64,
    #[serde(skip)]
    key: u64,
}

/// Deterministic random-access ±1 field on the space-time lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrowField {
    seed: u64,
    key: u64,
    overrides: Vec<Override>,
}

#[inline]
fn sign_of_top_bit(h: u64) -> i64 {
    ((h >> 63) as i64) * 2 - 1
}

impl ArrowField {
    pub fn new(seed: u64) -> Self {
        Self { seed, key: stream_key(seed, TAG_WEB), overrides: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn overrides(&self) -> &[Override] {
        &self.overrides
    }

    /// Arrow at a validated lattice point.
    #[inline]
    pub fn at(&self, p: LatticePoint) -> i64 {
        self.arrow(p.t, p.x)
    }

    /// Arrow at `(t, x)`, rejecting cells off the sublattice.
    pub fn try_arrow(&self, t: i64, x: i64) -> Result<i64> {
        LatticePoint::new(t, x).map(|p| self.at(p))
    }

    /// A new field equal to `self` outside `region` and drawn from
    /// `fresh_seed` inside it.
    pub fn resample(&self, region: Region, fresh_seed: u64) -> Result<ArrowField> {
        region.validate()?;
        if let Some(existing) = self.overrides.iter().find(|o| o.region.overlaps(&region)) {
            return Err(Error::OverlappingRegions(format!(
                "{:?} intersects existing override {:?}",
                region, existing.region
            )));
        }
        let mut next = self.clone();
        if !region.is_empty() {
            let key = stream_key(fresh_seed ^ (self.overrides.len() as u64).wrapping_mul(GOLDEN), TAG_RESAMPLE);
            next.overrides.push(Override { region, seed: fresh_seed, key });
        }
        Ok(next)
    }
}

impl ArrowSource for ArrowField {
    #[inline]
    fn arrow(&self, t: i64, x: i64) -> i64 {
        debug_assert!((t + x).rem_euclid(2) == 0, "arrow queried off the sublattice at ({t}, {x})");
        for o in &self.overrides {
            if o.region.contains(t, x) {
                return sign_of_top_bit(hash2(o.key, t, x));
            }
        }
        sign_of_top_bit(hash2(self.key, t, x))
    }
}

/// Independent ±1 walk indexed by time. One hash serves 64 consecutive steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuxiliaryWalk {
    seed: u64,
    key: u64,
}

impl AuxiliaryWalk {
    pub fn new(seed: u64) -> Self {
        Self { seed, key: stream_key(seed, TAG_AUX) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// 64 increments for times `64 * block .. 64 * block + 64`; bit set means +1.
    #[inline]
    pub fn block(&self, block: i64) -> u64 {
        hash1(self.key, block)
    }

    /// Sum of increments over times `from..to`.
    pub fn partial_sum(&self, from: i64, to: i64) -> i64 {
        if to <= from {
            return 0;
        }
        let mut ups: i64 = 0;
        let mut t = from;
        while t < to {
            let b = t >> 6;
            let lo = (t & 63) as u32;
            let hi = if (b + 1) << 6 <= to { 64 } else { (to & 63) as u32 };
            let word = self.block(b);
            let span = hi - lo;
            let mask = if span == 64 { u64::MAX } else { ((1u64 << span) - 1) << lo };
            ups += (word & mask).count_ones() as i64;
            t = (b << 6) + hi as i64;
        }
        2 * ups - (to - from)
    }
}

impl AuxSource for AuxiliaryWalk {
    #[inline]
    fn increment(&self, t: i64) -> i64 {
        ((self.block(t >> 6) >> (t & 63)) & 1) as i64 * 2 - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_is_enforced() {
        assert!(LatticePoint::new(0, 0).is_ok());
        assert!(LatticePoint::new(-3, 1).is_ok());
        assert_eq!(LatticePoint::new(1, 0), Err(Error::Parity { t: 1, x: 0 }));
        assert!(ArrowField::new(1).try_arrow(2, -1).is_err());
    }

    #[test]
    fn arrows_are_deterministic() {
        let f = ArrowField::new(42);
        let p = LatticePoint::origin();
        assert_eq!(f.at(p), f.at(p));
        assert_eq!(f.at(p), ArrowField::new(42).at(p));
        let a = AuxiliaryWalk::new(42);
        assert_eq!(a.increment(5), a.increment(5));
    }

    #[test]
    fn different_seeds_disagree_somewhere() {
        let f1 = ArrowField::new(1);
        let f2 = ArrowField::new(2);
        let disagree = (0..64).filter(|&i| f1.arrow(i, i) != f2.arrow(i, i)).count();
        assert!(disagree > 0);
    }

    #[test]
    fn web_and_aux_streams_are_separated() {
        // Same integer seed, different streams.
        let f = ArrowField::new(7);
        let a = AuxiliaryWalk::new(7);
        let disagree = (0..256).filter(|&t| f.arrow(t, t) != a.increment(t)).count();
        assert!(disagree > 64, "only {disagree} of 256 probes differ");
    }

    #[test]
    fn arrow_mean_and_chi_square() {
        let f = ArrowField::new(0x5eed);
        let n = 1_000_000i64;
        let ups = (0..n).filter(|&i| f.arrow(i / 1000 * 2, (i % 1000) * 2) > 0).count() as f64;
        let mean = (2.0 * ups - n as f64) / n as f64;
        assert!(mean.abs() <= 0.004, "mean {mean}");
        // Two-cell chi-square with one degree of freedom; 10.83 is the 1e-3 critical value.
        let expected = n as f64 / 2.0;
        let chi2 = 2.0 * (ups - expected).powi(2) / expected;
        assert!(chi2 < 10.83, "chi2 {chi2}");
    }

    #[test]
    fn aux_is_uncorrelated_with_arrows() {
        let f = ArrowField::new(99);
        let a = AuxiliaryWalk::new(99);
        let n = 1_000_000i64;
        let s: i64 = (0..n).map(|t| f.arrow(t, t % 2) * a.increment(t)).sum();
        let rho = s as f64 / n as f64;
        assert!(rho.abs() <= 0.004, "rho {rho}");
    }

    #[test]
    fn partial_sum_matches_stepwise_sum() {
        let a = AuxiliaryWalk::new(3);
        for &(from, to) in &[(0, 0), (0, 1), (0, 64), (5, 200), (-130, 70), (63, 65), (-64, 0)] {
            let direct: i64 = (from..to).map(|t| a.increment(t)).sum();
            assert_eq!(a.partial_sum(from, to), direct, "[{from}, {to})");
        }
    }

    #[test]
    fn resample_empty_region_is_identity() {
        let f = ArrowField::new(11);
        let g = f.resample(Region::rows([]), 12).unwrap();
        assert!((0..1000).all(|i| f.arrow(i, i % 2) == g.arrow(i, i % 2)));
    }

    #[test]
    fn resample_row_changes_only_that_row() {
        let f = ArrowField::new(11);
        let g = f.resample(Region::rows([7]), 12).unwrap();
        let row_disagree = (0..64).filter(|&k| f.arrow(2 * k + 1, 7) != g.arrow(2 * k + 1, 7)).count();
        assert!(row_disagree > 0);
        for x in -20..20i64 {
            if x == 7 {
                continue;
            }
            for t in 0..40i64 {
                if (t + x) % 2 == 0 {
                    assert_eq!(f.arrow(t, x), g.arrow(t, x));
                }
            }
        }
    }

    #[test]
    fn overlapping_overrides_are_rejected() {
        let f = ArrowField::new(1).resample(Region::rows([3, 4]), 2).unwrap();
        assert!(matches!(f.resample(Region::rows([4]), 3), Err(Error::OverlappingRegions(_))));
        assert!(matches!(f.resample(Region::rect(0, 10, 0, 5), 3), Err(Error::OverlappingRegions(_))));
        assert!(f.resample(Region::rect(0, 10, 5, 9), 3).is_ok());
        let g = f.resample(Region::rect(0, 10, 5, 9), 3).unwrap();
        assert!(matches!(g.resample(Region::rect(9, 20, 8, 9), 4), Err(Error::OverlappingRegions(_))));
        assert!(g.resample(Region::rect(10, 20, 8, 9), 4).is_ok());
        let s = Region::scattered_rows(1, 1, 5).unwrap();
        assert!(matches!(f.resample(s, 4), Err(Error::OverlappingRegions(_))));
    }

    #[test]
    fn malformed_regions_are_rejected() {
        let f = ArrowField::new(1);
        assert!(f.resample(Region::rect(5, 0, 0, 1), 2).is_err());
        assert!(Region::scattered_rows(3, 2, 0).is_err());
    }

    #[test]
    fn scattered_rows_hit_requested_fraction() {
        let r = Region::scattered_rows(1, 16, 77).unwrap();
        let n = 200_000;
        let hits = (0..n).filter(|&x| r.contains(0, x)).count() as f64 / n as f64;
        assert!((hits - 1.0 / 16.0).abs() < 4.0 * (1.0f64 / 16.0 * 15.0 / 16.0 / n as f64).sqrt());
        let all = Region::scattered_rows(1, 1, 77).unwrap();
        assert!((0..1000).all(|x| all.contains(0, x)));
    }

    #[test]
    fn derived_seeds_separate_tags_and_indices() {
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(2, "a", 0));
        assert_eq!(derive_seed(1, "a", 5), derive_seed(1, "a", 5));
    }
}
