use coalweb::excursion::{
    claim_checks, estimate_band_before_diag, sample_excursions, scale_invariance_check, summarize_excursions,
    resampling_sensitivity, ExcursionEstimate, Mode, ScaleConfig, Targets, DEFAULT_CAP, MIN_TRIALS,
};
use coalweb::oracle::validate_oracles;
use coalweb::perturb::{convergence_curve, perturbed_from_field, sup_distance, ConvergenceConfig, FollowState};
use coalweb::web::{coalescing_system, restrict, strip_independence, trajectory};
use coalweb::{derive_seed, ArrowField, AuxiliaryWalk, LatticePoint, Strip};
use serde_json::{json, Value};

use crate::config::{check_geometry, check_window, Settings};
use crate::output::Csv;
use crate::report::Check;
use crate::CliError;

/// What a subcommand produced, before anything is written.
pub struct Outcome {
    pub json_name: &'static str,
    pub results: Value,
    pub censored: u64,
    pub checks: Vec<Check>,
    pub csvs: Vec<Csv>,
}

impl Outcome {
    fn new(json_name: &'static str, results: Value) -> Self {
        Self { json_name, results, censored: 0, checks: Vec::new(), csvs: Vec::new() }
    }
}

pub fn run(subcommand: &str, s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    match subcommand {
        "simulate-web" => simulate_web(s, seed),
        "perturb" => perturb(s, seed),
        "convergence" => convergence(s, seed),
        "excursions" => excursions(s, seed),
        "band-before-diag" => band_before_diag(s, seed),
        "claims" => claims(s, seed),
        "scale-check" => scale_check(s, seed),
        "sensitivity" => sensitivity(s, seed),
        "independence" => independence(s, seed),
        "validate-oracles" => oracles(),
        other => Err(CliError::Config(format!("unknown subcommand {other:?}"))),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn single_epsilon(s: &Settings, default: i64) -> Result<i64, CliError> {
    match s.list("epsilon", &[default])?[..] {
        [e] => Ok(e),
        _ => Err(CliError::Config("epsilon: this subcommand takes a single value".into())),
    }
}

fn min_trials(trials: u64) -> Result<(), CliError> {
    if trials < MIN_TRIALS {
        return Err(CliError::Config(format!("trials: at least {MIN_TRIALS} are needed, got {trials}")));
    }
    Ok(())
}

fn simulate_web(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let runs: u64 = s.get("runs", 1)?;
    let starts: i64 = s.get("starts", 20)?;
    let spacing: i64 = s.get("spacing", 20)?;
    let horizon: i64 = s.get("horizon", 10_000)?;
    let lower: Option<i64> = s.optional("strip_lower")?;
    let upper: Option<i64> = s.optional("strip_upper")?;
    if starts < 1 || spacing < 2 || spacing % 2 != 0 {
        return Err(CliError::Config("need starts >= 1 and a positive even spacing".into()));
    }
    if horizon < 0 {
        return Err(CliError::Config("horizon must be nonnegative".into()));
    }
    let strip = Strip::new(lower, upper)?;
    let points = (0..starts)
        .map(|i| LatticePoint::new(0, (i - starts / 2) * spacing))
        .collect::<Result<Vec<_>, _>>()?;

    let mut csv = Csv::new("trajectories.csv", &["run_id", "path_id", "t", "x", "stopped"]);
    let mut per_run = Vec::new();
    let mut checks = Vec::new();
    for run in 0..runs {
        let field_seed = derive_seed(seed, "web", run);
        let field = ArrowField::new(field_seed);
        let sys = coalescing_system(&field, &points, horizon)?;
        let crossing = sys.check_no_crossing();
        for (id, path) in sys.paths().iter().enumerate() {
            let shown = restrict(path, strip);
            let stop = shown.stop_time().unwrap_or(horizon);
            for (t, x) in shown.positions().iter().enumerate().take(stop as usize + 1) {
                let stopped = u8::from(shown.stop_time() == Some(t as i64));
                csv.row(&[&run, &id, &t, x, &stopped]);
            }
        }
        let (initial, last) = (sys.class_count_at(0), sys.class_count_at(horizon));
        checks.push(Check::new(
            &format!("run {run}: no crossing, classes nonincreasing"),
            crossing.is_ok() && last <= initial,
            format!("classes {initial} -> {last}"),
        ));
        per_run.push(json!({
            "run_id": run,
            "field_seed": field_seed,
            "initial_classes": initial,
            "final_classes": last,
            "coalescence_events": sys.events().len(),
        }));
    }
    let mut out = Outcome::new("report.json", json!({ "strip": strip, "runs": per_run }));
    out.checks = checks;
    out.csvs.push(csv);
    Ok(out)
}

fn perturb(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let eps = single_epsilon(s, 4)?;
    let runs: u64 = s.get("runs", 1)?;
    let horizon: i64 = s.get("horizon", 10_000)?;
    check_geometry(&[eps], None, None)?;
    if horizon < 1 {
        return Err(CliError::Config("horizon must be positive".into()));
    }
    let mut csv = Csv::new("perturbed.csv", &["run_id", "t", "x_true", "x_perturbed", "state"]);
    let mut per_run = Vec::new();
    for run in 0..runs {
        let run_seed = derive_seed(seed, "perturb", run);
        let field = ArrowField::new(run_seed);
        let aux = AuxiliaryWalk::new(run_seed);
        let truth = trajectory(&field, LatticePoint::origin(), horizon)?;
        let pert = perturbed_from_field(&field, &aux, eps, LatticePoint::origin(), horizon)?;
        pert.check_invariants()?;
        let mut last = FollowState::FollowWeb;
        for t in 0..=horizon {
            let state = pert.state_at(t).unwrap_or(last);
            last = state;
            let code = if state == FollowState::FollowAux { "A" } else { "W" };
            let (y, x) = (truth.positions()[t as usize], pert.path.positions()[t as usize]);
            csv.row(&[&run, &t, &y, &x, &code]);
        }
        per_run.push(json!({
            "run_id": run,
            "run_seed": run_seed,
            "epsilon": eps,
            "sup_distance": sup_distance(&pert.path, &truth, (0, horizon))?,
            "segments": pert.segments.len(),
        }));
    }
    let mut out = Outcome::new("report.json", json!({ "runs": per_run }));
    out.csvs.push(csv);
    Ok(out)
}

fn convergence(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let epsilons = s.list("epsilon", &[4i64, 16, 64, 256])?;
    let delta: i64 = s.get("delta", 500)?;
    let horizon: i64 = s.get("horizon", 1_000_000)?;
    let window = s.pair("window", (0, horizon))?;
    let trials: u64 = s.get("trials", 2_000)?;
    check_geometry(&epsilons, None, None)?;
    check_window(window, horizon)?;
    let mut sorted = epsilons.clone();
    sorted.sort_unstable();
    let cfg = ConvergenceConfig { seed, epsilons: sorted, delta, window, horizon, trials };
    let points = convergence_curve(&cfg)?;
    Ok(Outcome::new("convergence.json", json!({ "points": points })))
}

fn mode(s: &Settings) -> Result<Mode, CliError> {
    let name = s.raw("mode").unwrap_or("first-absorption").to_string();
    let m = match name.as_str() {
        "first-absorption" => Mode::FirstAbsorption,
        "full-return" => Mode::FullReturn,
        other => return Err(CliError::Config(format!("mode: expected first-absorption or full-return, got {other:?}"))),
    };
    s.get("mode", name)?;
    Ok(m)
}

fn censored(est: &[ExcursionEstimate]) -> u64 {
    est.iter().map(|e| e.censored_count).sum()
}

fn excursions(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let epsilons = s.list("epsilon", &[4i64])?;
    let delta: Option<i64> = s.optional("delta")?;
    let p: Option<i64> = s.optional("P")?;
    let mode = mode(s)?;
    let trials: u64 = s.get("trials", 1_000)?;
    let cap: u64 = s.get("cap", DEFAULT_CAP)?;
    check_geometry(&epsilons, delta, p)?;
    if delta.is_none() && p.is_none() {
        return Err(CliError::Config("excursions need delta, P or both".into()));
    }
    let targets = Targets::new(delta, p)?;
    let mut out = Outcome::new("estimates.json", Value::Null);
    let mut estimates = Vec::new();
    for &eps in &epsilons {
        let records = sample_excursions(seed, eps, targets, mode, trials, cap)?;
        let name =
            if epsilons.len() == 1 { "excursions.csv".to_string() } else { format!("eps{eps}/excursions.csv") };
        let mut csv = Csv::new(name, &["index", "duration", "hit_band", "hit_diag", "censored", "max_band"]);
        for r in &records {
            let flags = [r.hit_band, r.hit_diag, r.censored].map(u8::from);
            csv.row(&[&r.index, &r.duration, &flags[0], &flags[1], &flags[2], &r.max_band]);
        }
        out.csvs.push(csv);
        out.censored += records.iter().filter(|r| r.censored).count() as u64;
        estimates.extend(summarize_excursions(seed, eps, targets, mode, &records)?);
    }
    out.results = json!({ "estimates": estimates });
    Ok(out)
}

fn band_before_diag(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let epsilons = s.list("epsilon", &[4i64, 16, 64])?;
    let delta: i64 = s.get("delta", 512)?;
    let p: i64 = s.get("P", 4096)?;
    let trials: u64 = s.get("trials", 1_000)?;
    let cap: u64 = s.get("cap", DEFAULT_CAP)?;
    check_geometry(&epsilons, Some(delta), Some(p))?;
    min_trials(trials)?;
    let est = estimate_band_before_diag(seed, &epsilons, delta, p, trials, cap)?;
    let mut out = Outcome::new("estimates.json", json!({ "estimates": est }));
    out.censored = censored(&est);
    Ok(out)
}

fn claims(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let epsilons = s.list("epsilon", &[8i64, 32])?;
    let delta: i64 = s.get("delta", 512)?;
    let trials: u64 = s.get("trials", 10_000)?;
    let cap: u64 = s.get("cap", DEFAULT_CAP)?;
    check_geometry(&epsilons, Some(delta), None)?;
    min_trials(trials)?;
    let r = claim_checks(seed, &epsilons, delta, trials, cap)?;
    let mut out = Outcome::new("report.json", to_value(&r));
    out.censored = r.together.iter().chain(&r.escape).map(|c| c.estimate.censored).sum();
    out.checks.push(Check::new(
        "coalescence-before-band probability is the same for every epsilon",
        r.together_consistent,
        format!("largest gap {:.5}", r.together_max_gap),
    ));
    out.checks.push(Check::new("escape probability matches epsilon/delta", r.escape_consistent, ""));
    Ok(out)
}

fn scale_check(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let eps = single_epsilon(s, 4)?;
    let factor: i64 = s.get("factor", 4)?;
    let delta: i64 = s.get("delta", 128)?;
    let p: i64 = s.get("P", 1024)?;
    let trials: u64 = s.get("trials", 2_000)?;
    let cap: u64 = s.get("cap", DEFAULT_CAP)?;
    let duration_samples: u64 = s.get("duration_samples", 2_000)?;
    let duration_cap: u64 = s.get("duration_cap", 10_000)?;
    check_geometry(&[eps], Some(delta), Some(p))?;
    min_trials(trials)?;
    if factor < 1 {
        return Err(CliError::Config(format!("factor must be a positive integer, got {factor}")));
    }
    let cfg = ScaleConfig { seed, epsilon: eps, factor, delta, p, trials, cap, duration_samples, duration_cap };
    let r = scale_invariance_check(&cfg)?;
    let mut out = Outcome::new("report.json", to_value(&r));
    out.censored = r.base.censored_count + r.scaled.censored_count + r.duration_censored.0 + r.duration_censored.1;
    out.checks.push(Check::new("band-before-diagonal intervals overlap", r.overlap, ""));
    out.checks.push(Check::new(
        "scaled durations agree",
        r.duration_ks <= 0.05,
        format!("two-sample KS {:.4}", r.duration_ks),
    ));
    Ok(out)
}

fn sensitivity(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let fractions = s.fractions("fractions", &[(1, 64), (1, 16), (1, 4)])?;
    let trials: u64 = s.get("trials", 10_000)?;
    let steps: i64 = s.get("steps", 10_000)?;
    let pts = resampling_sensitivity(seed, &fractions, trials, steps)?;
    let mut order: Vec<_> = pts.iter().collect();
    order.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    let monotone = order.windows(2).all(|w| w[1].correlation.rho_hat <= w[0].correlation.rho_hat);
    let mut out = Outcome::new("report.json", json!({ "points": pts }));
    out.checks.push(Check::new("correlation nonincreasing in resampled fraction", monotone, ""));
    Ok(out)
}

fn independence(s: &Settings, seed: u64) -> Result<Outcome, CliError> {
    let trials: u64 = s.get("trials", 10_000)?;
    let offset: i64 = s.get("offset", 2)?;
    let window: i64 = s.get("horizon", 10_000)?;
    let c = strip_independence(seed, trials as usize, offset, window)?;
    let mut out = Outcome::new("report.json", to_value(&c));
    out.checks.push(Check::new(
        "upper and lower strip functionals uncorrelated",
        c.rho_hat.abs() <= 0.04,
        format!("rho {:.4}", c.rho_hat),
    ));
    Ok(out)
}

fn oracles() -> Result<Outcome, CliError> {
    let rows = validate_oracles()?;
    let mut out = Outcome::new("report.json", json!({ "oracles": rows }));
    out.checks = rows
        .iter()
        .map(|r| Check::new(&r.name, r.pass, format!("expected {} got {} tol {}", r.expected, r.actual, r.tolerance)))
        .collect();
    Ok(out)
}
