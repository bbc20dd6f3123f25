//! The perturbed process: follows the web inside the current half-plane,
//! switches to an independent walk on hitting 0, and back to the web on
//! reaching distance ε from 0.
//!
//! The walker is constructed from the two half-plane views and the
//! auxiliary walk only, so a perturbed trajectory cannot depend on arrows of
//! the row `x = 0`, nor on arrows of the half-plane it is not currently in.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisefield::{derive_seed, ArrowField, AuxSource, AuxiliaryWalk, LatticePoint};
use crate::stats::HitEstimate;
use crate::web::{
    AuditedAux, AuditedView, AuxRecord, Path, RecordedAux, RecordedView, Strip, StripAccess, StripRecord, StripView,
    WebWalker,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FollowState {
    /// Following the web field through the current half-plane view.
    FollowWeb,
    /// Following the auxiliary walk.
    FollowAux,
}

impl FollowState {
    pub fn code(self) -> char {
        match self {
            FollowState::FollowWeb => 'W',
            FollowState::FollowAux => 'A',
        }
    }
}

/// Steps `from_t..to_t` taken in `state`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub state: FollowState,
    pub from_t: i64,
    pub to_t: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbedTrajectory {
    pub path: Path,
    pub epsilon: i64,
    pub segments: Vec<Segment>,
}

impl PerturbedTrajectory {
    /// State governing the step taken at time `t`.
    pub fn state_at(&self, t: i64) -> Option<FollowState> {
        self.segments.iter().find(|s| (s.from_t..s.to_t).contains(&t)).map(|s| s.state)
    }

    /// Checks tiling, alternation and the boundary conditions of every
    /// segment switch.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invariant(m));
        let first = self.segments.first().ok_or_else(|| Error::Invariant("no segments".into()))?;
        if first.state != FollowState::FollowWeb || first.from_t != self.path.start().t() {
            return bad("first segment must be FollowWeb from the start time".into());
        }
        if self.segments.last().map(|s| s.to_t) != Some(self.path.horizon()) {
            return bad("segments do not reach the horizon".into());
        }
        for (i, w) in self.segments.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if a.to_t != b.from_t || a.state == b.state {
                return bad(format!("segments {i} and {} do not tile/alternate", i + 1));
            }
            if b.from_t == b.to_t && i + 2 != self.segments.len() {
                return bad(format!("interior segment {} is empty", i + 1));
            }
            let x = self.path.position(b.from_t).unwrap_or(i64::MIN);
            let ok = match b.state {
                FollowState::FollowAux => x == 0,
                FollowState::FollowWeb => x.abs() == self.epsilon,
            };
            if !ok {
                return bad(format!("switch to {:?} at t={} with position {x}", b.state, b.from_t));
            }
        }
        Ok(())
    }
}

/// Streaming form of the perturbed process.
#[derive(Debug, Clone)]
pub struct PerturbedWalker<U, L, A> {
    upper: U,
    lower: L,
    aux: A,
    epsilon: i64,
    t: i64,
    x: i64,
    state: FollowState,
    switched: bool,
}

impl<U: StripAccess, L: StripAccess, A: AuxSource> PerturbedWalker<U, L, A> {
    /// Starts in `FollowWeb` at `start` and applies the switching rule there.
    pub fn new(upper: U, lower: L, aux: A, epsilon: i64, start: LatticePoint) -> Result<Self> {
        Self::with_state(upper, lower, aux, epsilon, start, FollowState::FollowWeb)
    }

    /// Starts in an arbitrary state. `FollowAux` requires `|x| < ε`.
    pub fn with_state(
        upper: U,
        lower: L,
        aux: A,
        epsilon: i64,
        start: LatticePoint,
        state: FollowState,
    ) -> Result<Self> {
        if epsilon < 1 {
            return Err(Error::invalid(format!("epsilon must be >= 1, got {epsilon}")));
        }
        if upper.strip() != Strip::upper_half() || lower.strip() != Strip::lower_half() {
            return Err(Error::invalid(format!(
                "perturbed walker needs the half-plane views (0, inf) and (-inf, 0), got {} and {}",
                upper.strip(),
                lower.strip()
            )));
        }
        if state == FollowState::FollowAux && start.x().abs() > epsilon {
            return Err(Error::invalid("auxiliary state must start within [-eps, eps]"));
        }
        let mut w = Self { upper, lower, aux, epsilon, t: start.t(), x: start.x(), state, switched: false };
        w.switch()?;
        Ok(w)
    }

    fn switch(&mut self) -> Result<()> {
        self.switched = false;
        match self.state {
            FollowState::FollowWeb if self.x == 0 => {
                self.state = FollowState::FollowAux;
                self.switched = true;
            }
            FollowState::FollowAux if self.x.abs() == self.epsilon => {
                self.state = FollowState::FollowWeb;
                self.switched = true;
            }
            _ => {}
        }
        // A single step moves by 1, so at most one switch applies per time.
        let again = match self.state {
            FollowState::FollowWeb => self.x == 0,
            FollowState::FollowAux => self.x.abs() >= self.epsilon,
        };
        if again {
            return Err(Error::Invariant(format!("conflicting switches at t={} x={}", self.t, self.x)));
        }
        Ok(())
    }

    /// One step; returns the new position.
    #[inline]
    pub fn step(&mut self) -> Result<i64> {
        let d = match self.state {
            FollowState::FollowWeb if self.x > 0 => self.upper.arrow(self.t, self.x)?,
            FollowState::FollowWeb => self.lower.arrow(self.t, self.x)?,
            FollowState::FollowAux => self.aux.increment(self.t),
        };
        self.x += d;
        self.t += 1;
        self.switch()?;
        Ok(self.x)
    }

    pub fn time(&self) -> i64 {
        self.t
    }

    pub fn position(&self) -> i64 {
        self.x
    }

    /// State that governs the next step.
    pub fn state(&self) -> FollowState {
        self.state
    }

    /// Whether the state changed at the current time.
    pub fn just_switched(&self) -> bool {
        self.switched
    }

    pub fn epsilon(&self) -> i64 {
        self.epsilon
    }
}

/// Runs the perturbed process from `start` to `horizon`.
///
/// Only the upper view `(0, ∞)`, the lower view `(-∞, 0)` and the auxiliary
/// walk are available here; any attempt to read other cells is an error.
pub fn perturbed_trajectory<U, L, A>(
    upper: U,
    lower: L,
    aux: A,
    epsilon: i64,
    start: LatticePoint,
    horizon: i64,
) -> Result<PerturbedTrajectory>
where
    U: StripAccess,
    L: StripAccess,
    A: AuxSource,
{
    if horizon < start.t() {
        return Err(Error::invalid(format!("horizon {horizon} precedes start time {}", start.t())));
    }
    let mut walker = PerturbedWalker::new(upper, lower, aux, epsilon, start)?;
    let mut positions = Vec::with_capacity((horizon - start.t() + 1) as usize);
    positions.push(start.x());
    let mut segments = Vec::new();
    let mut current = Segment { state: FollowState::FollowWeb, from_t: start.t(), to_t: start.t() };
    let mut note_switch = |w: &PerturbedWalker<U, L, A>, current: &mut Segment| {
        if w.just_switched() {
            current.to_t = w.time();
            segments.push(*current);
            *current = Segment { state: w.state(), from_t: w.time(), to_t: w.time() };
        }
    };
    note_switch(&walker, &mut current);
    while walker.time() < horizon {
        positions.push(walker.step()?);
        note_switch(&walker, &mut current);
    }
    current.to_t = horizon;
    segments.push(current);
    let path = Path::from_positions(start, positions, None)?;
    Ok(PerturbedTrajectory { path, epsilon, segments })
}

/// Perturbed trajectory built from the standard half-plane views of `field`.
pub fn perturbed_from_field(
    field: &ArrowField,
    aux: &AuxiliaryWalk,
    epsilon: i64,
    start: LatticePoint,
    horizon: i64,
) -> Result<PerturbedTrajectory> {
    perturbed_trajectory(StripView::upper(field), StripView::lower(field), aux, epsilon, start, horizon)
}

/// `max |a(t) - b(t)|` over lattice times in `window`.
pub fn sup_distance(a: &Path, b: &Path, window: (i64, i64)) -> Result<u64> {
    let (s, u) = window;
    if s > u {
        return Err(Error::invalid(format!("empty window [{s}, {u}]")));
    }
    let mut best = 0u64;
    for t in s..=u {
        match (a.position(t), b.position(t)) {
            (Some(x), Some(y)) => best = best.max(x.abs_diff(y)),
            _ => return Err(Error::invalid(format!("window [{s}, {u}] outside a path's domain"))),
        }
    }
    Ok(best)
}

/// Everything a perturbed run read: the cells of both half-plane views and
/// the auxiliary increments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbedRecord {
    pub upper: StripRecord,
    pub lower: StripRecord,
    pub aux: AuxRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayAudit {
    pub queries: usize,
    /// Queries refused by a view.
    pub denied: u64,
    /// Queries on the row `x = 0`.
    pub zero_row: u64,
    /// Queries to the upper view below the axis or to the lower view above.
    pub cross_half_plane: u64,
    /// Rerunning from the JSON-serialized record gave the same trajectory.
    pub replay_identical: bool,
}

impl ReplayAudit {
    pub fn violations(&self) -> u64 {
        self.denied + self.zero_row + self.cross_half_plane + u64::from(!self.replay_identical)
    }
}

/// Runs the perturbed process from the origin through audited views,
/// serializes what it read to JSON, and replays it from that record alone.
pub fn audited_replay(seed: u64, epsilon: i64, horizon: i64) -> Result<ReplayAudit> {
    let field = ArrowField::new(seed);
    let aux = AuxiliaryWalk::new(seed);
    let up = AuditedView::new(StripView::upper(&field));
    let down = AuditedView::new(StripView::lower(&field));
    let logged_aux = AuditedAux::new(&aux);
    let origin = LatticePoint::origin();
    let original = perturbed_trajectory(&up, &down, &logged_aux, epsilon, origin, horizon)?;
    let record = PerturbedRecord { upper: up.record(), lower: down.record(), aux: logged_aux.record() };
    let cross_half_plane = record.upper.cells.iter().filter(|c| c[1] <= 0).count()
        + record.lower.cells.iter().filter(|c| c[1] >= 0).count();
    let json = serde_json::to_string(&record).map_err(|e| Error::Invariant(e.to_string()))?;
    let back: PerturbedRecord = serde_json::from_str(&json).map_err(|e| Error::Invariant(e.to_string()))?;
    let replayed = perturbed_trajectory(
        RecordedView::from_record(&back.upper)?,
        RecordedView::from_record(&back.lower)?,
        RecordedAux::from_record(&back.aux),
        epsilon,
        origin,
        horizon,
    )?;
    Ok(ReplayAudit {
        queries: up.query_count() + down.query_count(),
        denied: up.denied() + down.denied(),
        zero_row: up.zero_row_queries() + down.zero_row_queries(),
        cross_half_plane: cross_half_plane as u64,
        replay_identical: replayed == original,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub seed: u64,
    pub epsilons: Vec<i64>,
    pub delta: i64,
    pub window: (i64, i64),
    pub horizon: i64,
    pub trials: u64,
}

/// One row of the convergence results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub epsilon: i64,
    pub delta: i64,
    pub window: (i64, i64),
    pub trials: u64,
    pub exceed_count: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed_base: u64,
}

impl ConvergencePoint {
    pub fn estimate(&self) -> Result<HitEstimate> {
        HitEstimate::new(self.exceed_count, self.trials, 0)
    }
}

/// Whether the perturbed and the true trajectory from the origin differ by
/// more than `delta` somewhere in `window`.
pub fn deviation_exceeds(
    field: &ArrowField,
    aux: &AuxiliaryWalk,
    epsilon: i64,
    delta: i64,
    window: (i64, i64),
) -> Result<bool> {
    let origin = LatticePoint::origin();
    let mut pert = PerturbedWalker::new(StripView::upper(field), StripView::lower(field), aux, epsilon, origin)?;
    let mut truth = WebWalker::new(field, origin);
    let (s, u) = window;
    loop {
        let t = truth.time();
        if t >= s && (pert.position() - truth.position()).abs() > delta {
            return Ok(true);
        }
        if t >= u {
            return Ok(false);
        }
        pert.step()?;
        truth.step();
    }
}

/// Probability that the perturbed process strays more than `delta` from the
/// true trajectory within the window, for each ε.
///
/// Trial `i` uses the same field and auxiliary walk for every ε.
pub fn convergence_curve(config: &ConvergenceConfig) -> Result<Vec<ConvergencePoint>> {
    if config.epsilons.is_empty() {
        return Err(Error::config("empty epsilon list"));
    }
    if config.delta < 0 || config.delta % 2 != 0 {
        return Err(Error::config(format!("delta must be a nonnegative even integer, got {}", config.delta)));
    }
    let (s, u) = config.window;
    if s < 0 || s > u || u > config.horizon {
        return Err(Error::config(format!("window [{s}, {u}] not within [0, {}]", config.horizon)));
    }
    if config.trials == 0 {
        return Err(Error::config("trials must be positive"));
    }
    let mut out = Vec::with_capacity(config.epsilons.len());
    for &eps in &config.epsilons {
        let exceed = (0..config.trials)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(config.seed, "convergence", i);
                let field = ArrowField::new(seed);
                let aux = AuxiliaryWalk::new(seed);
                deviation_exceeds(&field, &aux, eps, config.delta, config.window).map(u64::from)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let est = HitEstimate::new(exceed, config.trials, 0)?;
        out.push(ConvergencePoint {
            epsilon: eps,
            delta: config.delta,
            window: config.window,
            trials: config.trials,
            exceed_count: exceed,
            p_hat: est.p_hat,
            ci_lo: est.ci_lo,
            ci_hi: est.ci_hi,
            seed_base: config.seed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noisefield::ConstantField;
    use crate::web::{trajectory, AuditedView};

    fn pt(t: i64, x: i64) -> LatticePoint {
        LatticePoint::new(t, x).unwrap()
    }

    #[test]
    fn constant_upper_view_never_switches() {
        let f = ConstantField(1);
        let p = perturbed_trajectory(StripView::upper(f), StripView::lower(f), ConstantField(-1), 2, pt(0, 2), 4)
            .unwrap();
        assert_eq!(p.path.positions(), &[2, 3, 4, 5, 6]);
        assert_eq!(p.segments, vec![Segment { state: FollowState::FollowWeb, from_t: 0, to_t: 4 }]);
        p.check_invariants().unwrap();
    }

    #[test]
    fn start_at_origin_switches_immediately() {
        let f = ArrowField::new(1);
        let aux = AuxiliaryWalk::new(1);
        let p = perturbed_from_field(&f, &aux, 3, pt(0, 0), 50).unwrap();
        assert_eq!(p.segments[0], Segment { state: FollowState::FollowWeb, from_t: 0, to_t: 0 });
        assert_eq!(p.segments[1].state, FollowState::FollowAux);
        assert_eq!(p.segments[1].from_t, 0);
        p.check_invariants().unwrap();
    }

    #[test]
    fn aux_segment_ends_at_epsilon() {
        // Aux always +1: leaves 0, reaches eps, then the web takes over.
        let p = perturbed_trajectory(
            StripView::upper(ConstantField(1)),
            StripView::lower(ConstantField(1)),
            ConstantField(1),
            3,
            pt(0, 0),
            6,
        )
        .unwrap();
        assert_eq!(p.path.positions(), &[0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(p.segments[1], Segment { state: FollowState::FollowAux, from_t: 0, to_t: 3 });
        assert_eq!(p.segments[2], Segment { state: FollowState::FollowWeb, from_t: 3, to_t: 6 });
    }

    #[test]
    fn wrong_views_are_rejected() {
        let f = ArrowField::new(1);
        let aux = AuxiliaryWalk::new(1);
        let whole = StripView::new(&f, Strip::whole());
        assert!(perturbed_trajectory(&whole, StripView::lower(&f), aux, 2, pt(0, 0), 10).is_err());
        assert!(perturbed_from_field(&f, &aux, 0, pt(0, 0), 10).is_err());
    }

    #[test]
    fn audit_sees_no_boundary_queries() {
        for seed in 0..100 {
            let f = ArrowField::new(seed);
            let aux = AuxiliaryWalk::new(seed);
            let up = AuditedView::new(StripView::upper(&f));
            let down = AuditedView::new(StripView::lower(&f));
            let p = perturbed_trajectory(&up, &down, aux, 4, pt(0, 0), 2000).unwrap();
            p.check_invariants().unwrap();
            assert_eq!(up.denied() + down.denied(), 0);
            assert_eq!(up.zero_row_queries() + down.zero_row_queries(), 0);
        }
    }

    #[test]
    fn replay_from_record_is_exact() {
        for seed in 0..20 {
            let a = audited_replay(seed, 4, 3000).unwrap();
            assert_eq!(a.violations(), 0, "{a:?}");
            assert!(a.queries > 0);
        }
    }

    #[test]
    fn sup_distance_examples() {
        let f = ArrowField::new(4);
        let a = trajectory(&f, pt(0, 0), 100).unwrap();
        assert_eq!(sup_distance(&a, &a, (0, 100)).unwrap(), 0);
        let shifted = Path::from_positions(pt(0, 2), a.positions().iter().map(|x| x + 2).collect(), None).unwrap();
        assert_eq!(sup_distance(&a, &shifted, (0, 100)).unwrap(), 2);
        assert!(sup_distance(&a, &a, (0, 101)).is_err());
        assert!(sup_distance(&a, &a, (5, 4)).is_err());
    }

    #[test]
    fn convergence_degenerate_cases() {
        let base = ConvergenceConfig { seed: 1, epsilons: vec![2, 8], delta: 4, window: (0, 0), horizon: 0, trials: 50 };
        for p in convergence_curve(&base).unwrap() {
            assert_eq!(p.exceed_count, 0);
        }
        let far = ConvergenceConfig { delta: 202, window: (0, 200), horizon: 200, ..base.clone() };
        for p in convergence_curve(&far).unwrap() {
            assert_eq!(p.exceed_count, 0);
        }
        assert!(convergence_curve(&ConvergenceConfig { epsilons: vec![], ..base.clone() }).is_err());
        assert!(convergence_curve(&ConvergenceConfig { delta: 3, ..base.clone() }).is_err());
        assert!(convergence_curve(&ConvergenceConfig { window: (0, 5), ..base }).is_err());
    }
}
