//! Per-excursion and per-run hitting probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decompose::{sample_excursion, ExcursionRecord, Mode, Targets};
use crate::error::{Error, Result};
use crate::noisefield::derive_seed;
use crate::stats::HitEstimate;

/// Fewest trials for which an interval estimate is reported.
pub const MIN_TRIALS: u64 = 1000;

/// Largest number of excursions in one band-before-diagonal run before the
/// run is declared censored.
pub const MAX_RUN_EXCURSIONS: u64 = 1_000_000;

/// One row of `estimates.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionEstimate {
    pub epsilon: i64,
    pub delta: Option<i64>,
    #[serde(rename = "P")]
    pub p: Option<i64>,
    pub mode: Mode,
    pub trials: u64,
    pub successes: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub censored_count: u64,
    pub seed_base: u64,
}

impl ExcursionEstimate {
    fn from_counts(epsilon: i64, targets: Targets, mode: Mode, counts: Counts, seed_base: u64) -> Result<Self> {
        let est = counts.estimate()?;
        Ok(Self {
            epsilon,
            delta: targets.band,
            p: targets.diag,
            mode,
            trials: est.trials,
            successes: est.successes,
            p_hat: est.p_hat,
            ci_lo: est.ci_lo,
            ci_hi: est.ci_hi,
            censored_count: est.censored,
            seed_base,
        })
    }

    pub fn estimate(&self) -> Result<HitEstimate> {
        HitEstimate::new(self.successes, self.trials, self.censored_count)
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored_count as f64 / (self.trials + self.censored_count) as f64
    }
}

/// Success/decided/censored tallies; merging is associative and
/// commutative, so parallel reduction order does not matter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub successes: u64,
    pub decided: u64,
    pub censored: u64,
}

impl Counts {
    fn merge(self, o: Counts) -> Counts {
        Counts {
            successes: self.successes + o.successes,
            decided: self.decided + o.decided,
            censored: self.censored + o.censored,
        }
    }

    fn one(success: bool, censored: bool) -> Counts {
        if censored {
            Counts { censored: 1, ..Default::default() }
        } else {
            Counts { successes: success as u64, decided: 1, censored: 0 }
        }
    }

    pub fn estimate(&self) -> Result<HitEstimate> {
        if self.decided == 0 {
            return Err(Error::invalid("every trial was censored"));
        }
        HitEstimate::new(self.successes, self.decided, self.censored)
    }
}

/// Runs `trial(i)` for `i` in `range` in parallel and tallies the results.
pub(crate) fn tally<T>(range: std::ops::Range<u64>, trial: T) -> Result<Counts>
where
    T: Fn(u64) -> Result<(bool, bool)> + Sync,
{
    range
        .into_par_iter()
        .map(|i| trial(i).map(|(s, c)| Counts::one(s, c)))
        .try_reduce(Counts::default, |a, b| Ok(a.merge(b)))
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::config(format!("at least {MIN_TRIALS} trials are needed, got {trials}")));
    }
    Ok(())
}

fn check_epsilons(epsilons: &[i64]) -> Result<()> {
    if epsilons.is_empty() {
        return Err(Error::config("empty epsilon list"));
    }
    if let Some(e) = epsilons.iter().find(|&&e| e < 1) {
        return Err(Error::config(format!("epsilon must be >= 1, got {e}")));
    }
    Ok(())
}

/// `trials` independent excursions, in index order. First-absorption
/// excursions stop once no target is reachable.
pub fn sample_excursions(
    seed: u64,
    epsilon: i64,
    targets: Targets,
    mode: Mode,
    trials: u64,
    cap: u64,
) -> Result<Vec<ExcursionRecord>> {
    check_epsilons(&[epsilon])?;
    let settle = mode == Mode::FirstAbsorption;
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = sample_excursion(derive_seed(seed, "excursions", i), epsilon, targets, mode, cap, settle)?;
            r.index = i;
            Ok(r)
        })
        .collect()
}

/// Band-hit and diagonal-hit estimates from a sample of excursions, one per
/// target that is set.
pub fn summarize_excursions(
    seed: u64,
    epsilon: i64,
    targets: Targets,
    mode: Mode,
    records: &[ExcursionRecord],
) -> Result<Vec<ExcursionEstimate>> {
    let mut out = Vec::new();
    let mut add = |only: Targets, hit: fn(&ExcursionRecord) -> bool| -> Result<()> {
        let counts = records.iter().fold(Counts::default(), |c, r| c.merge(Counts::one(hit(r), r.censored)));
        out.push(ExcursionEstimate::from_counts(epsilon, only, mode, counts, seed)?);
        Ok(())
    };
    if targets.band.is_some() {
        add(Targets { diag: None, ..targets }, |r| r.hit_band)?;
    }
    if targets.diag.is_some() {
        add(Targets { band: None, ..targets }, |r| r.hit_diag)?;
    }
    Ok(out)
}

/// Per-excursion probability of reaching `|x - y| >= delta` before the
/// excursion ends.
pub fn estimate_band_hit(seed: u64, epsilons: &[i64], delta: i64, trials: u64, cap: u64) -> Result<Vec<ExcursionEstimate>> {
    check_trials(trials)?;
    check_epsilons(epsilons)?;
    let targets = Targets::new(Some(delta), None)?;
    if let Some(e) = epsilons.iter().find(|&&e| e >= delta) {
        return Err(Error::config(format!("need epsilon < delta, got epsilon {e} and delta {delta}")));
    }
    epsilons
        .iter()
        .map(|&eps| {
            let counts = tally(0..trials, |i| {
                let r = sample_excursion(derive_seed(seed, "band-hit", i), eps, targets, Mode::FirstAbsorption, cap, true)?;
                Ok((r.hit_band, r.censored))
            })?;
            ExcursionEstimate::from_counts(eps, targets, Mode::FirstAbsorption, counts, seed)
        })
        .collect()
}

/// Per-excursion probability of reaching `(P, P)` before the excursion ends.
///
/// Excursions are drawn in batches of `trials` until `min_successes` is
/// reached or `max_trials` excursions have been drawn.
pub fn estimate_diag_hit(
    seed: u64,
    epsilons: &[i64],
    p: i64,
    trials: u64,
    cap: u64,
    min_successes: u64,
    max_trials: u64,
) -> Result<Vec<ExcursionEstimate>> {
    check_trials(trials)?;
    check_epsilons(epsilons)?;
    let targets = Targets::new(None, Some(p))?;
    if let Some(e) = epsilons.iter().find(|&&e| e >= p) {
        return Err(Error::config(format!("need epsilon < P, got epsilon {e} and P {p}")));
    }
    epsilons
        .iter()
        .map(|&eps| {
            let mut counts = Counts::default();
            let mut drawn = 0;
            while drawn < max_trials.max(trials) && (drawn == 0 || counts.successes < min_successes) {
                let batch = tally(drawn..drawn + trials, |i| {
                    let r =
                        sample_excursion(derive_seed(seed, "diag-hit", i), eps, targets, Mode::FirstAbsorption, cap, true)?;
                    Ok((r.hit_diag, r.censored))
                })?;
                counts = counts.merge(batch);
                drawn += trials;
            }
            ExcursionEstimate::from_counts(eps, targets, Mode::FirstAbsorption, counts, seed)
        })
        .collect()
}

/// Outcome of a run of consecutive excursions until one of them hits the
/// band or the diagonal point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunOutcome {
    Band,
    Diag,
    Censored,
}

/// Excursions are independent and identically distributed, so a run of `Y`
/// is a sequence of independent excursions; the first one that is not a
/// plain return decides the run.
pub fn band_before_diag_run(
    run_seed: u64,
    epsilon: i64,
    targets: Targets,
    cap: u64,
) -> Result<(RunOutcome, Vec<ExcursionRecord>)> {
    let mut records = Vec::new();
    for k in 0..MAX_RUN_EXCURSIONS {
        let mut r = sample_excursion(derive_seed(run_seed, "excursion", k), epsilon, targets, Mode::FirstAbsorption, cap, true)?;
        r.index = k;
        records.push(r);
        let outcome = match (r.hit_band, r.hit_diag, r.censored) {
            (true, _, _) => RunOutcome::Band,
            (_, true, _) => RunOutcome::Diag,
            (_, _, true) => RunOutcome::Censored,
            _ => continue,
        };
        return Ok((outcome, records));
    }
    Ok((RunOutcome::Censored, records))
}

/// Probability that `Y` reaches the band `|x - y| >= delta` before `(P, P)`.
pub fn estimate_band_before_diag(
    seed: u64,
    epsilons: &[i64],
    delta: i64,
    p: i64,
    trials: u64,
    cap: u64,
) -> Result<Vec<ExcursionEstimate>> {
    check_trials(trials)?;
    check_epsilons(epsilons)?;
    let targets = Targets::new(Some(delta), Some(p))?;
    if delta >= 2 * p {
        return Err(Error::config(format!("delta {delta} >= 2P = {}: degenerate geometry", 2 * p)));
    }
    if let Some(e) = epsilons.iter().find(|&&e| e >= delta || delta >= p) {
        return Err(Error::config(format!("need epsilon < delta < P, got {e} < {delta} < {p}")));
    }
    epsilons
        .iter()
        .map(|&eps| {
            let counts = tally(0..trials, |i| {
                let (outcome, _) = band_before_diag_run(derive_seed(seed, "band-before-diag", i), eps, targets, cap)?;
                Ok((outcome == RunOutcome::Band, outcome == RunOutcome::Censored))
            })?;
            ExcursionEstimate::from_counts(eps, targets, Mode::FirstAbsorption, counts, seed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guards() {
        assert!(estimate_band_hit(1, &[4], 512, 999, 100).is_err());
        assert!(estimate_band_hit(1, &[16], 8, 1000, 100).is_err());
        assert!(estimate_band_hit(1, &[], 8, 1000, 100).is_err());
        assert!(estimate_diag_hit(1, &[8], 8, 1000, 100, 0, 1000).is_err());
        assert!(estimate_band_before_diag(1, &[4], 64, 32, 1000, 100).is_err());
        assert!(estimate_band_before_diag(1, &[4], 32, 16, 1000, 100).is_err());
    }

    #[test]
    fn summaries_match_the_band_estimator() {
        let targets = Targets::new(Some(8), Some(16)).unwrap();
        let recs = sample_excursions(3, 2, targets, Mode::FirstAbsorption, 2000, 1_000_000).unwrap();
        assert!(recs.iter().enumerate().all(|(i, r)| r.index == i as u64));
        let est = summarize_excursions(3, 2, targets, Mode::FirstAbsorption, &recs).unwrap();
        assert_eq!(est.len(), 2);
        assert_eq!((est[0].delta, est[0].p), (Some(8), None));
        assert_eq!((est[1].delta, est[1].p), (None, Some(16)));
        let band = recs.iter().filter(|r| r.hit_band).count() as u64;
        assert_eq!(est[0].successes, band);
    }

    #[test]
    fn band_hit_is_deterministic() {
        let a = estimate_band_hit(3, &[2], 8, 1000, 100_000).unwrap();
        let b = estimate_band_hit(3, &[2], 8, 1000, 100_000).unwrap();
        assert_eq!(a, b);
        assert!(a[0].successes > 0 && a[0].successes < 1000);
    }

    #[test]
    fn runs_end_decisively() {
        let t = Targets::new(Some(8), Some(16)).unwrap();
        for s in 0..20 {
            let (outcome, recs) = band_before_diag_run(s, 2, t, 1_000_000).unwrap();
            assert_ne!(outcome, RunOutcome::Censored);
            let last = recs.last().unwrap();
            assert!(last.hit_band || last.hit_diag);
            assert!(recs[..recs.len() - 1].iter().all(|r| !r.hit_band && !r.hit_diag && !r.censored));
        }
    }
}
