//! Martingale and scale-invariance checks on the rotated process
//! `z = ((x+y)/2, (x-y)/2)`.

use serde::{Deserialize, Serialize};

use super::decompose::{sample_excursion, Mode, Targets};
use super::estimate::{tally, Counts, MIN_TRIALS};
use super::joint::{JointState, JointWalker};
use crate::error::{Error, Result};
use crate::noisefield::{derive_seed, ArrowField, AuxiliaryWalk, LatticePoint};
use crate::oracle::gambler_ruin;
use crate::perturb::FollowState;
use crate::stats::HitEstimate;
use crate::web::WebWalker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimPoint {
    pub epsilon: i64,
    pub estimate: HitEstimate,
    /// Exact value where one is known.
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub delta: i64,
    /// Probability of coalescing before `|x - y|` reaches ε, from `x = y = 0`.
    pub together: Vec<ClaimPoint>,
    /// Probability that `|x - y|` climbs from ε to δ before returning to 0.
    pub escape: Vec<ClaimPoint>,
    /// Probability that an excursion reaches the segment `z2 = ε`,
    /// `0 <= z1 <= ε` before it ends. No value is asserted.
    pub segment: Vec<ClaimPoint>,
    /// Largest pairwise gap between the `together` estimates, and whether
    /// every gap is below the sum of the two CI half-widths.
    pub together_max_gap: f64,
    pub together_consistent: bool,
    pub escape_consistent: bool,
}

/// Claim 1 trial: from the origin, does `Y` coalesce before `|x - y| >= ε`?
pub fn together_trial(seed: u64, epsilon: i64, cap: u64) -> Result<(bool, bool)> {
    let r = sample_excursion(seed, epsilon, Targets::new(Some(epsilon), None)?, Mode::FirstAbsorption, cap, true)?;
    Ok((!r.hit_band && !r.censored, r.censored))
}

/// Claim 2 trial: from `X^ε = ε` following the web and `X = 0`, does
/// `|x - y|` reach δ before `x = y`?
pub fn escape_trial(seed: u64, epsilon: i64, delta: i64, cap: u64) -> Result<(bool, bool)> {
    let field = ArrowField::new(seed);
    let aux = AuxiliaryWalk::new(seed);
    let start = LatticePoint::new(0, epsilon)?;
    let mut w = JointWalker::from_points(&field, &aux, epsilon, start, FollowState::FollowWeb, 0)?;
    for _ in 0..cap {
        w.step()?;
        let d = (w.x_perturbed() - w.x_true()).abs();
        if d >= delta {
            return Ok((true, false));
        }
        if d == 0 {
            return Ok((false, false));
        }
    }
    Ok((false, true))
}

/// Step cap for [`segment_trial`] in units of ε².
pub const SEGMENT_CAP: u64 = 10_000;

/// Does an excursion from the origin reach `z2 = ε` with `0 <= z1 <= ε`
/// before the pair coalesces? Once coalesced the pair moves together until
/// it is back at the origin.
pub fn segment_trial(seed: u64, epsilon: i64, cap: u64) -> Result<(bool, bool)> {
    let field = ArrowField::new(seed);
    let aux = AuxiliaryWalk::new(seed);
    let mut w = JointWalker::new(&field, &aux, epsilon)?;
    for _ in 0..cap {
        w.step()?;
        let (x, y) = (w.x_perturbed(), w.x_true());
        if x - y == 2 * epsilon && (0..=2 * epsilon).contains(&(x + y)) {
            return Ok((true, false));
        }
        if w.state() == JointState::OneDWeb {
            return Ok((false, false));
        }
    }
    Ok((false, true))
}

pub fn claim_checks(seed: u64, epsilons: &[i64], delta: i64, trials: u64, cap: u64) -> Result<ClaimReport> {
    if trials < MIN_TRIALS {
        return Err(Error::config(format!("at least {MIN_TRIALS} trials are needed, got {trials}")));
    }
    if epsilons.is_empty() {
        return Err(Error::config("empty epsilon list"));
    }
    for &e in epsilons {
        if e < 2 || e % 2 != 0 {
            return Err(Error::config(format!("claim checks need even epsilon >= 2, got {e}")));
        }
        if e >= delta {
            return Err(Error::config(format!("need epsilon < delta, got {e} >= {delta}")));
        }
    }
    if delta % 2 != 0 {
        return Err(Error::config(format!("delta must be even, got {delta}")));
    }
    let mut together = Vec::new();
    let mut escape = Vec::new();
    let mut segment = Vec::new();
    for &eps in epsilons {
        let c = tally(0..trials, |i| together_trial(derive_seed(seed, "claim-together", i), eps, cap))?;
        together.push(ClaimPoint { epsilon: eps, estimate: c.estimate()?, expected: None });
        let c = tally(0..trials, |i| escape_trial(derive_seed(seed, "claim-escape", i), eps, delta, cap))?;
        escape.push(ClaimPoint { epsilon: eps, estimate: c.estimate()?, expected: Some(eps as f64 / delta as f64) });
        let c = tally(0..trials, |i| {
            segment_trial(derive_seed(seed, "claim-segment", i), eps, SEGMENT_CAP * (eps * eps) as u64)
        })?;
        segment.push(ClaimPoint { epsilon: eps, estimate: c.estimate()?, expected: None });
    }
    let mut max_gap: f64 = 0.0;
    let mut consistent = true;
    for (i, a) in together.iter().enumerate() {
        for b in &together[i + 1..] {
            let gap = (a.estimate.p_hat - b.estimate.p_hat).abs();
            max_gap = max_gap.max(gap);
            consistent &= gap <= half_width(&a.estimate) + half_width(&b.estimate);
        }
    }
    let escape_consistent = escape.iter().all(|c| c.estimate.contains(c.expected.unwrap_or(f64::NAN)));
    Ok(ClaimReport { delta, together, escape, segment, together_max_gap: max_gap, together_consistent: consistent, escape_consistent })
}

fn half_width(e: &HitEstimate) -> f64 {
    e.width() / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuinCheck {
    pub start: i64,
    pub p: i64,
    pub estimate: HitEstimate,
    pub expected: f64,
}

/// Web trajectory from `(0, start)` absorbed at `{0, p}`: probability of
/// reaching `p` first.
pub fn ruin_check(seed: u64, start: i64, p: i64, trials: u64) -> Result<RuinCheck> {
    let expected = gambler_ruin(start, p)?;
    let origin = LatticePoint::new(0, start)?;
    let counts: Counts = tally(0..trials, |i| {
        let field = ArrowField::new(derive_seed(seed, "ruin", i));
        let mut w = WebWalker::new(&field, origin);
        while w.position() > 0 && w.position() < p {
            w.step();
        }
        Ok((w.position() == p, false))
    })?;
    Ok(RuinCheck { start, p, estimate: counts.estimate()?, expected })
}
