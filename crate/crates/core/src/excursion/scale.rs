//! Diffusive scaling: `Y(ε)/ε` should not depend on ε.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decompose::{sample_excursion, Mode, Targets};
use super::estimate::{estimate_band_before_diag, ExcursionEstimate};
use crate::error::{Error, Result};
use crate::noisefield::derive_seed;
use crate::stats::ks_two_sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub seed: u64,
    pub epsilon: i64,
    pub factor: i64,
    pub delta: i64,
    #[serde(rename = "P")]
    pub p: i64,
    pub trials: u64,
    pub cap: u64,
    pub duration_samples: u64,
    /// Durations are capped at `duration_cap · ε²` steps.
    pub duration_cap: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub base: ExcursionEstimate,
    pub scaled: ExcursionEstimate,
    pub overlap: bool,
    pub duration_ks: f64,
    pub duration_censored: (u64, u64),
}

/// Full-return excursion durations divided by ε², capped at
/// `duration_cap · ε²`; censored durations sit at the cap. Returns the
/// scaled durations and the censored count.
pub fn scaled_durations(seed: u64, epsilon: i64, samples: u64, duration_cap: u64) -> Result<(Vec<f64>, u64)> {
    let e2 = (epsilon * epsilon) as u64;
    let cap = duration_cap
        .checked_mul(e2)
        .ok_or_else(|| Error::config("duration cap overflows"))?;
    let recs: Vec<_> = (0..samples)
        .into_par_iter()
        .map(|i| sample_excursion(derive_seed(seed, "duration", i), epsilon, Targets::default(), Mode::FullReturn, cap, false))
        .collect::<Result<_>>()?;
    let censored = recs.iter().filter(|r| r.censored).count() as u64;
    Ok((recs.iter().map(|r| r.duration as f64 / e2 as f64).collect(), censored))
}

pub fn scale_invariance_check(cfg: &ScaleConfig) -> Result<ScaleReport> {
    if cfg.factor < 1 {
        return Err(Error::config(format!("scale factor must be a positive integer, got {}", cfg.factor)));
    }
    let c = cfg.factor;
    let base = estimate_band_before_diag(cfg.seed, &[cfg.epsilon], cfg.delta, cfg.p, cfg.trials, cfg.cap)?.remove(0);
    let scaled =
        estimate_band_before_diag(cfg.seed, &[c * cfg.epsilon], c * cfg.delta, c * cfg.p, cfg.trials, cfg.cap)?.remove(0);
    let overlap = base.estimate()?.overlaps(&scaled.estimate()?);
    let (a, ca) = scaled_durations(cfg.seed, cfg.epsilon, cfg.duration_samples, cfg.duration_cap)?;
    let (b, cb) = scaled_durations(cfg.seed, c * cfg.epsilon, cfg.duration_samples, cfg.duration_cap)?;
    let duration_ks = ks_two_sample(&a, &b)?;
    Ok(ScaleReport { base, scaled, overlap, duration_ks, duration_censored: (ca, cb) })
}
