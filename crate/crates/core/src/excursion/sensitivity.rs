//! How much a web observable remembers after a scattered set of rows is
//! redrawn.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisefield::{derive_seed, ArrowField, ArrowSource, LatticePoint, Region};
use crate::stats::{correlation_test, Correlation};
use crate::web::WebWalker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub numerator: u64,
    pub denominator: u64,
    pub fraction: f64,
    pub correlation: Correlation,
}

/// Indicator that the trajectory from the origin is above 0 after `steps`.
pub fn ends_above<F: ArrowSource>(field: &F, steps: i64) -> f64 {
    let mut w = WebWalker::new(field, LatticePoint::origin());
    for _ in 0..steps {
        w.step();
    }
    f64::from(u8::from(w.position() > 0))
}

/// Correlation between the observable on a field and on the same field with
/// a scattered fraction of its rows resampled, for each fraction.
///
/// A fraction of 0 leaves the field unchanged and gives correlation 1.
pub fn resampling_sensitivity(
    seed: u64,
    fractions: &[(u64, u64)],
    trials: u64,
    steps: i64,
) -> Result<Vec<SensitivityPoint>> {
    if fractions.is_empty() {
        return Err(Error::config("empty fraction list"));
    }
    if steps < 1 {
        return Err(Error::config("steps must be positive"));
    }
    fractions
        .iter()
        .map(|&(num, den)| {
            Region::scattered_rows(num, den, 0).map_err(|e| Error::Config(e.to_string()))?;
            let pairs: Vec<(f64, f64)> = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let s = derive_seed(seed, "sensitivity", i);
                    let field = ArrowField::new(s);
                    let region = Region::scattered_rows(num, den, derive_seed(s, "rows", 0))?;
                    let redrawn = field.resample(region, derive_seed(s, "fresh", 0))?;
                    Ok((ends_above(&field, steps), ends_above(&redrawn, steps)))
                })
                .collect::<Result<_>>()?;
            Ok(SensitivityPoint {
                numerator: num,
                denominator: den,
                fraction: num as f64 / den as f64,
                correlation: correlation_test(&pairs)?,
            })
        })
        .collect()
}
