//! Closed-form reference values and exact small-instance oracles.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisefield::{derive_seed, AuxiliaryWalk};
use crate::stats::{ks_statistic, median_ci, DEFAULT_LEVEL};

/// Probability that a symmetric walk on `[0, p]` started at `x` reaches
/// `p` before `0`.
pub fn gambler_ruin(x: i64, p: i64) -> Result<f64> {
    if p <= 0 {
        return Err(Error::invalid(format!("absorbing level must be positive, got {p}")));
    }
    if !(0..=p).contains(&x) {
        return Err(Error::invalid(format!("start {x} outside [0, {p}]")));
    }
    Ok(x as f64 / p as f64)
}

/// Density of the Cauchy law with the given scale.
pub fn cauchy_hit_density(scale: f64, x: f64) -> Result<f64> {
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::invalid(format!("Cauchy scale must be positive, got {scale}")));
    }
    Ok(1.0 / (PI * scale) / (1.0 + (x / scale).powi(2)))
}

pub fn cauchy_cdf(scale: f64, x: f64) -> f64 {
    0.5 + (x / scale).atan() / PI
}

/// Lower bound on the probability that an excursion reaches the diagonal
/// point, in units where that point sits at distance `p`:
/// `eps / (2π p) · ln((1 + eps⁻²) / 2)`.
///
/// The bound carries an unquantified constant factor in front, so only its
/// shape is meaningful when compared against simulation.
pub fn excursion_lower_bound(eps: f64, p: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    if p.is_nan() || p <= 0.0 {
        return Err(Error::invalid(format!("P must be positive, got {p}")));
    }
    Ok(eps / (2.0 * PI * p) * ((1.0 + eps.powi(-2)) / 2.0).ln())
}

/// `cdf[t]` = probability that two independent walkers started `d` apart
/// have met by time `t`, for `t = 0..=t_max`.
///
/// Their half-distance performs a lazy walk (−1, 0, +1 with probabilities
/// ¼, ½, ¼) absorbed at 0.
pub fn meeting_time_cdf(d: i64, t_max: usize) -> Result<Vec<f64>> {
    if d <= 0 || d % 2 != 0 {
        return Err(Error::invalid(format!("initial distance must be a positive even integer, got {d}")));
    }
    let k0 = (d / 2) as usize;
    let width = k0 + t_max + 2;
    let mut mass = vec![0.0f64; width];
    let mut next = vec![0.0f64; width];
    mass[k0] = 1.0;
    let mut absorbed = 0.0;
    let mut cdf = Vec::with_capacity(t_max + 1);
    cdf.push(0.0);
    for t in 1..=t_max {
        let hi = (k0 + t).min(width - 2);
        let lo = k0.saturating_sub(t).max(1);
        next[lo.saturating_sub(1)..=hi + 1].iter_mut().for_each(|v| *v = 0.0);
        for k in lo.saturating_sub(1).max(1)..=hi {
            let m = mass[k];
            if m == 0.0 {
                continue;
            }
            next[k - 1] += 0.25 * m;
            next[k] += 0.5 * m;
            next[k + 1] += 0.25 * m;
        }
        absorbed += next[0];
        next[0] = 0.0;
        std::mem::swap(&mut mass, &mut next);
        cdf.push(absorbed.min(1.0));
    }
    Ok(cdf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyCheck {
    pub height: i64,
    pub samples: usize,
    pub ks: f64,
    /// Samples whose vertical walk had not reached 0 by the cap; their
    /// abscissa at the cap stands in for the hitting abscissa.
    pub censored: usize,
    pub median_abs_ratio: f64,
    pub median_ci: (f64, f64),
}

/// Default step cap for the hitting simulation: `256 · height²`.
pub fn default_cauchy_cap(height: i64) -> u64 {
    256 * (height * height) as u64
}

/// Abscissa where a walk with independent ±1 coordinates, started at
/// `(0, height)`, first meets the horizontal axis. Returns the abscissa and
/// whether the cap was hit first.
pub fn cauchy_hit_sample(seed: u64, height: i64, cap: u64) -> (i64, bool) {
    let vertical = AuxiliaryWalk::new(derive_seed(seed, "cauchy-vertical", 0));
    let horizontal = AuxiliaryWalk::new(derive_seed(seed, "cauchy-horizontal", 0));
    let mut h = height;
    let mut t: i64 = 0;
    let cap = cap as i64;
    'blocks: loop {
        let word = vertical.block(t >> 6);
        for bit in 0..64 {
            if t >= cap {
                break 'blocks;
            }
            h += ((word >> bit) & 1) as i64 * 2 - 1;
            t += 1;
            if h == 0 {
                return (horizontal.partial_sum(0, t), false);
            }
        }
    }
    (horizontal.partial_sum(0, t), true)
}

/// KS distance between simulated axis-hitting abscissae from height
/// `height` and the Cauchy law of scale `height`.
pub fn cauchy_hit_sampler_check(height: i64, samples: usize, seed: u64) -> Result<CauchyCheck> {
    if height < 1 {
        return Err(Error::invalid("height must be positive"));
    }
    let cap = default_cauchy_cap(height);
    let draws: Vec<(i64, bool)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| cauchy_hit_sample(derive_seed(seed, "cauchy", i), height, cap))
        .collect();
    let xs: Vec<f64> = draws.iter().map(|&(x, _)| x as f64).collect();
    let censored = draws.iter().filter(|d| d.1).count();
    let scale = height as f64;
    let ks = ks_statistic(&xs, |x| cauchy_cdf(scale, x))?;
    let ratios: Vec<f64> = xs.iter().map(|x| x.abs() / scale).collect();
    let (median, lo, hi) = median_ci(&ratios, DEFAULT_LEVEL)?;
    Ok(CauchyCheck { height, samples, ks, censored, median_abs_ratio: median, median_ci: (lo, hi) })
}

/// Exact first-excursion law of the joint process for small ε and band δ,
/// truncated at `depth` steps.
///
/// `hit_by[t]` is the probability that the band `|x - y| >= δ` is reached
/// at or before step `t`; `coalesced_by[t]` that the pair coalesced first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDp {
    pub hit_by: Vec<f64>,
    pub coalesced_by: Vec<f64>,
}

impl BandDp {
    /// Mass still undecided after the last step.
    pub fn undecided(&self) -> f64 {
        1.0 - self.hit_by.last().copied().unwrap_or(0.0) - self.coalesced_by.last().copied().unwrap_or(0.0)
    }
}

/// Dynamic program over `(x_perturbed, x_true, following aux)`.
///
/// Each time row of the field is fresh, so while the two coordinates sit at
/// different sites (or one follows the auxiliary walk) their steps are
/// independent fair ±1 steps: the pair is a Markov chain and the program is
/// an exact summary of every step sequence.
pub fn excursion_band_dp(epsilon: i64, delta: i64, depth: usize) -> Result<BandDp> {
    use std::collections::BTreeMap;
    if epsilon < 1 {
        return Err(Error::invalid(format!("epsilon must be >= 1, got {epsilon}")));
    }
    if delta < 2 || delta % 2 != 0 {
        return Err(Error::invalid(format!("delta must be a positive even integer, got {delta}")));
    }
    let mut mass: BTreeMap<(i64, i64, bool), f64> = BTreeMap::new();
    mass.insert((0, 0, true), 1.0);
    let (mut hit, mut together) = (0.0, 0.0);
    let mut out = BandDp { hit_by: vec![0.0], coalesced_by: vec![0.0] };
    for _ in 0..depth {
        let mut next = BTreeMap::new();
        for (&(x, y, aux), &m) in &mass {
            for dx in [-1i64, 1] {
                for dy in [-1i64, 1] {
                    let (nx, ny) = (x + dx, y + dy);
                    let naux = if aux { nx.abs() != epsilon } else { nx == 0 };
                    let q = 0.25 * m;
                    if (nx - ny).abs() >= delta {
                        hit += q;
                    } else if !naux && nx == ny {
                        together += q;
                    } else {
                        *next.entry((nx, ny, naux)).or_insert(0.0) += q;
                    }
                }
            }
        }
        mass = next;
        out.hit_by.push(hit);
        out.coalesced_by.push(together);
    }
    Ok(out)
}

/// One row of the oracle self-check table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleCheck {
    fn new(name: &str, expected: f64, actual: f64, tolerance: f64) -> Self {
        let pass = (expected - actual).abs() <= tolerance;
        Self { name: name.to_string(), expected, actual, tolerance, pass }
    }
}

/// Self-checks of every closed form against independently known values.
pub fn validate_oracles() -> Result<Vec<OracleCheck>> {
    let mut rows = vec![
        OracleCheck::new("gambler_ruin(256, 1024)", 0.25, gambler_ruin(256, 1024)?, 0.0),
        OracleCheck::new("gambler_ruin(0, 64)", 0.0, gambler_ruin(0, 64)?, 0.0),
        OracleCheck::new("gambler_ruin(64, 64)", 1.0, gambler_ruin(64, 64)?, 0.0),
        OracleCheck::new("cauchy_hit_density(2, 0)", 1.0 / (2.0 * PI), cauchy_hit_density(2.0, 0.0)?, 1e-15),
        OracleCheck::new("excursion_lower_bound(1, 1)", 0.0, excursion_lower_bound(1.0, 1.0)?, 1e-15),
        OracleCheck::new("excursion_lower_bound(0.1, 1)", 0.062_420_144_314_378_34, excursion_lower_bound(0.1, 1.0)?, 1e-12),
    ];
    let cdf = meeting_time_cdf(2, 4)?;
    rows.push(OracleCheck::new("meeting_time_cdf(2, t=0)", 0.0, cdf[0], 0.0));
    rows.push(OracleCheck::new("meeting_time_cdf(2, t=1)", 0.25, cdf[1], 0.0));
    // Two steps: ¼ + ½·¼ = 0.375.
    rows.push(OracleCheck::new("meeting_time_cdf(2, t=2)", 0.375, cdf[2], 1e-15));
    let integral = integrate_cauchy(3.0);
    rows.push(OracleCheck::new("integral of cauchy_hit_density(3, .)", 1.0, integral, 1e-9));
    Ok(rows)
}

/// ∫ density over ℝ by adaptive Simpson quadrature after mapping ℝ onto
/// (−1, 1) with x = s·u / (1 − u²).
fn integrate_cauchy(scale: f64) -> f64 {
    let g = |u: f64| {
        let w = 1.0 - u * u;
        if w <= 0.0 {
            return 0.0;
        }
        let x = scale * u / w;
        let jac = scale * (1.0 + u * u) / (w * w);
        cauchy_hit_density(scale, x).unwrap_or(0.0) * jac
    };
    adaptive_simpson(&g, -1.0, 1.0, 1e-12, 50)
}

fn adaptive_simpson<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson<G: Fn(f64) -> f64>(g: &G, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = g(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<G: Fn(f64) -> f64>(
        g: &G,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(g, a, fa, m, fm);
        let (rm, frm, right) = simpson(g, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(g, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(g, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (g(a), g(b));
    let (m, fm, whole) = simpson(g, a, fa, b, fb);
    recurse(g, a, fa, b, fb, whole, m, fm, tol, depth)
}
