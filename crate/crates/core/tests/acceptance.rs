//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p coalweb-core --test acceptance -- 4 6` runs a subset.
//! The binary exits 0 regardless of outcome unless `ACCEPTANCE_STRICT=1`.

use std::time::Instant;

use coalweb::excursion::{
    audit_joint_run, claim_checks, estimate_band_before_diag, estimate_band_hit, estimate_diag_hit, joint_run,
    scale_invariance_check, resampling_sensitivity, ExcursionEstimate, JointState, ScaleConfig, DEFAULT_CAP,
};
use coalweb::oracle::cauchy_hit_sampler_check;
use coalweb::perturb::{audited_replay, convergence_curve, ConvergenceConfig};
use coalweb::stats::loglog_slope;
use coalweb::web::{meeting_time_check, strip_independence};
use coalweb::excursion::ruin_check;
use coalweb::{derive_seed, ArrowField, AuxiliaryWalk, Result};
use rayon::prelude::*;

const SEED: u64 = 0x00c0_a1e5_ce00_0001;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn seed(n: u64) -> u64 {
    derive_seed(SEED, "criterion", n)
}

fn fmt_est(e: &ExcursionEstimate) -> String {
    format!("eps={} p={:.5} [{:.5},{:.5}] n={} cens={}", e.epsilon, e.p_hat, e.ci_lo, e.ci_hi, e.trials, e.censored_count)
}

fn gamblers_ruin() -> Result<Verdict> {
    let r = ruin_check(seed(1), 8, 64, 100_000)?;
    let e = &r.estimate;
    verdict(e.contains(0.125), format!("p={:.5} [{:.5},{:.5}] expected 0.125", e.p_hat, e.ci_lo, e.ci_hi))
}

fn claim_two() -> Result<Verdict> {
    let r = claim_checks(seed(2), &[8], 512, 100_000, DEFAULT_CAP)?;
    let e = &r.escape[0].estimate;
    verdict(e.contains(8.0 / 512.0), format!("p={:.5} [{:.5},{:.5}] expected 0.015625", e.p_hat, e.ci_lo, e.ci_hi))
}

fn cauchy() -> Result<Verdict> {
    let checks = [16, 32, 64]
        .iter()
        .map(|&h| cauchy_hit_sampler_check(h, 100_000, seed(3)))
        .collect::<Result<Vec<_>>>()?;
    let ks: Vec<f64> = checks.iter().map(|c| c.ks).collect();
    let decreasing = ks.windows(2).all(|w| w[1] < w[0]);
    let detail = checks
        .iter()
        .map(|c| format!("h={} ks={:.4} cens={}", c.height, c.ks, c.censored))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(ks[1] <= 0.05 && decreasing, detail)
}

fn band_hit() -> Result<Verdict> {
    let est = estimate_band_hit(seed(4), &[4, 8, 16, 32], 512, 100_000, DEFAULT_CAP)?;
    let pts: Vec<(f64, f64)> = est.iter().map(|e| (e.epsilon as f64, e.p_hat)).collect();
    let fit = loglog_slope(&pts)?;
    let worst_cens = est.iter().map(|e| e.censored_fraction()).fold(0.0, f64::max);
    let pass = (0.8..=1.2).contains(&fit.slope) && worst_cens < 0.01;
    let detail = format!(
        "slope={:.3} max censored={:.5}; {}",
        fit.slope,
        worst_cens,
        est.iter().map(fmt_est).collect::<Vec<_>>().join("; ")
    );
    verdict(pass, detail)
}

fn diag_hit() -> Result<Verdict> {
    let p = 4096;
    let est = estimate_diag_hit(seed(5), &[4, 16, 64], p, 10_000, DEFAULT_CAP, 200, 100_000_000)?;
    let ratios: Vec<f64> =
        est.iter().map(|e| e.p_hat / (e.epsilon as f64 * (p as f64 / e.epsilon as f64).ln())).collect();
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let enough = est.iter().all(|e| e.successes >= 200);
    let detail = format!(
        "ratio spread={spread:.3}; {}",
        est.iter().map(|e| format!("{} hits={}", fmt_est(e), e.successes)).collect::<Vec<_>>().join("; ")
    );
    verdict(enough && spread <= 2.0, detail)
}

fn band_before_diag() -> Result<Verdict> {
    let p = 4096;
    let est = estimate_band_before_diag(seed(6), &[4, 16, 64], 512, p, 4_000, DEFAULT_CAP)?;
    let increasing = est.windows(2).all(|w| w[1].p_hat > w[0].p_hat);
    let separated = est[0].ci_hi < est[2].ci_lo;
    let scaled: Vec<f64> = est.iter().map(|e| e.p_hat * (p as f64 / e.epsilon as f64).ln()).collect();
    let spread = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let detail = format!(
        "increasing={increasing} separated={separated} p*log spread={spread:.3}; {}",
        est.iter().map(fmt_est).collect::<Vec<_>>().join("; ")
    );
    verdict(increasing && separated && spread <= 2.0, detail)
}

fn convergence() -> Result<Verdict> {
    let cfg = ConvergenceConfig {
        seed: seed(7),
        epsilons: vec![4, 16, 64, 256],
        delta: 500,
        window: (0, 1_000_000),
        horizon: 1_000_000,
        trials: 2_000,
    };
    let pts = convergence_curve(&cfg)?;
    // Listed by increasing ε: nonincreasing as ε decreases means nondecreasing here.
    let monotone = pts.windows(2).all(|w| w[0].p_hat <= w[1].p_hat);
    let small = pts[0].p_hat <= 0.05;
    let detail = format!(
        "monotone={monotone}; {}",
        pts.iter()
            .map(|p| format!("eps={} p={:.4} [{:.4},{:.4}]", p.epsilon, p.p_hat, p.ci_lo, p.ci_hi))
            .collect::<Vec<_>>()
            .join("; ")
    );
    verdict(monotone && small, detail)
}

fn measurability() -> Result<Verdict> {
    let runs = 10_000u64;
    let (violations, queries) = (0..runs)
        .into_par_iter()
        .map(|i| {
            let eps = [4, 16, 64][(i % 3) as usize];
            let a = audited_replay(derive_seed(seed(8), "run", i), eps, 10_000)?;
            Ok((a.violations(), a.queries as u64))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    verdict(violations == 0, format!("{runs} runs, {queries} arrow queries, {violations} violations"))
}

fn state_machine() -> Result<Verdict> {
    let runs = 10_000u64;
    let (violations, edges) = (0..runs)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed(9), "run", i);
            let eps = [2, 4, 8][(i % 3) as usize];
            let run = joint_run(&ArrowField::new(s), &AuxiliaryWalk::new(s), eps, 10_000)?;
            let mut bad = u64::from(audit_joint_run(&run).is_err());
            bad += run.transitions.iter().filter(|t| !JointState::is_legal_edge(t.from, t.to)).count() as u64;
            bad += run
                .samples
                .iter()
                .filter(|s| s.state == JointState::OneDWeb && s.x_perturbed != s.x_true)
                .count() as u64;
            Ok((bad, run.transitions.len() as u64))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    verdict(violations == 0, format!("{runs} runs, {edges} transitions, {violations} violations"))
}

fn coalescence() -> Result<Verdict> {
    let m = meeting_time_check(seed(10), 2, 100_000, 4_096)?;
    verdict(
        m.ks <= 0.01 && m.crossing_violations == 0,
        format!("ks={:.5} unmet by {}={} crossings={}", m.ks, m.t_max, m.unmet, m.crossing_violations),
    )
}

fn claim_one() -> Result<Verdict> {
    let r = claim_checks(seed(11), &[8, 32], 512, 100_000, DEFAULT_CAP)?;
    let detail = format!(
        "gap={:.5}; {}",
        r.together_max_gap,
        r.together
            .iter()
            .map(|c| format!("eps={} p={:.5} [{:.5},{:.5}]", c.epsilon, c.estimate.p_hat, c.estimate.ci_lo, c.estimate.ci_hi))
            .collect::<Vec<_>>()
            .join("; ")
    );
    verdict(r.together_consistent, detail)
}

fn scale_invariance() -> Result<Verdict> {
    let cfg = ScaleConfig {
        seed: seed(12),
        epsilon: 4,
        factor: 4,
        delta: 128,
        p: 1024,
        trials: 20_000,
        cap: DEFAULT_CAP,
        duration_samples: 10_000,
        duration_cap: 10_000,
    };
    let r = scale_invariance_check(&cfg)?;
    verdict(
        r.overlap && r.duration_ks <= 0.05,
        format!(
            "overlap={} duration ks={:.4} censored={:?}; {}; {}",
            r.overlap,
            r.duration_ks,
            r.duration_censored,
            fmt_est(&r.base),
            fmt_est(&r.scaled)
        ),
    )
}

fn independence() -> Result<Verdict> {
    let c = strip_independence(seed(13), 10_000, 2, 10_000)?;
    verdict(c.rho_hat.abs() <= 0.04, format!("rho={:.4} [{:.4},{:.4}] n={}", c.rho_hat, c.ci_lo, c.ci_hi, c.n))
}

fn sensitivity() -> Result<Verdict> {
    let pts = resampling_sensitivity(seed(14), &[(1, 64), (1, 16), (1, 4)], 10_000, 10_000)?;
    let monotone = pts.windows(2).all(|w| w[1].correlation.rho_hat <= w[0].correlation.rho_hat);
    let detail = pts
        .iter()
        .map(|p| format!("{}/{}: rho={:.4}", p.numerator, p.denominator, p.correlation.rho_hat))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(monotone, detail)
}

type Criterion = (u32, &'static str, fn() -> Result<Verdict>);

fn main() {
    let criteria: [Criterion; 14] = [
        (1, "gambler's ruin", gamblers_ruin),
        (2, "escape probability eps/delta", claim_two),
        (3, "Cauchy hitting law", cauchy),
        (4, "band hit is O(eps)", band_hit),
        (5, "diagonal hit lower bound", diag_hit),
        (6, "band before diagonal", band_before_diag),
        (7, "convergence of X^eps", convergence),
        (8, "measurability and replay", measurability),
        (9, "joint state machine", state_machine),
        (10, "meeting-time law", coalescence),
        (11, "coalescence before band is eps-free", claim_one),
        (12, "scale invariance", scale_invariance),
        (13, "half-plane independence", independence),
        (14, "resampling sensitivity", sensitivity),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {n:>2}: {} {name}: {detail} ({secs:.1} s)", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(n);
        }
    }
    println!("acceptance: {} failed {:?}", failed.len(), failed);
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
