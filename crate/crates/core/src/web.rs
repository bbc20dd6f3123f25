//! Web trajectories, coalescing systems, the strip restriction operator and
//! strip-limited access to the arrow field.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisefield::{derive_seed, ArrowField, ArrowSource, AuxSource, LatticePoint};
use crate::oracle::meeting_time_cdf;
use crate::stats::{correlation_test, Correlation};

/// Open horizontal strip `lower < x < upper`; `None` stands for ∓∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Strip {
    pub lower: Option<i64>,
    pub upper: Option<i64>,
}

impl Strip {
    pub fn new(lower: Option<i64>, upper: Option<i64>) -> Result<Self> {
        if let (Some(lo), Some(hi)) = (lower, upper) {
            if lo >= hi {
                return Err(Error::invalid(format!("strip bounds {lo} >= {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub const fn whole() -> Self {
        Self { lower: None, upper: None }
    }

    /// Sites `x >= 1`.
    pub const fn upper_half() -> Self {
        Self { lower: Some(0), upper: None }
    }

    /// Sites `x <= -1`.
    pub const fn lower_half() -> Self {
        Self { lower: None, upper: Some(0) }
    }

    #[inline]
    pub fn contains(&self, x: i64) -> bool {
        self.lower.is_none_or(|lo| x > lo) && self.upper.is_none_or(|hi| x < hi)
    }

    pub fn is_disjoint(&self, other: &Strip) -> bool {
        // Largest site of one below smallest site of the other.
        let below = |a: &Strip, b: &Strip| match (a.upper, b.lower) {
            (Some(hi), Some(lo)) => hi - 1 <= lo,
            _ => false,
        };
        below(self, other) || below(other, self)
    }
}

impl fmt::Display for Strip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lower {
            Some(lo) => write!(f, "({lo}, ")?,
            None => write!(f, "(-inf, ")?,
        }
        match self.upper {
            Some(hi) => write!(f, "{hi})"),
            None => write!(f, "inf)"),
        }
    }
}

/// Lattice trajectory from `start` to a horizon, optionally stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    start: LatticePoint,
    positions: Vec<i64>,
    stop_time: Option<i64>,
}

impl Path {
    /// Builds a path after checking the step and stopping invariants.
    pub fn from_positions(start: LatticePoint, positions: Vec<i64>, stop_time: Option<i64>) -> Result<Self> {
        if positions.first() != Some(&start.x()) {
            return Err(Error::invalid("first position must equal the start site"));
        }
        let horizon = start.t() + positions.len() as i64 - 1;
        if let Some(s) = stop_time {
            if s < start.t() || s > horizon {
                return Err(Error::invalid(format!("stop time {s} outside [{}, {horizon}]", start.t())));
            }
        }
        let stop_idx = stop_time.map(|s| (s - start.t()) as usize);
        for (i, w) in positions.windows(2).enumerate() {
            let d = w[1] - w[0];
            let frozen = stop_idx.is_some_and(|s| i >= s);
            if (frozen && d != 0) || (!frozen && d.abs() != 1) {
                return Err(Error::invalid(format!("illegal step {} -> {} at index {i}", w[0], w[1])));
            }
        }
        Ok(Self { start, positions, stop_time })
    }

    pub fn start(&self) -> LatticePoint {
        self.start
    }

    pub fn horizon(&self) -> i64 {
        self.start.t() + self.positions.len() as i64 - 1
    }

    pub fn stop_time(&self) -> Option<i64> {
        self.stop_time
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    /// Position at time `t`, if `t` lies in `[start.t, horizon]`.
    pub fn position(&self, t: i64) -> Option<i64> {
        let i = t.checked_sub(self.start.t())?;
        usize::try_from(i).ok().and_then(|i| self.positions.get(i).copied())
    }

    pub fn is_stopped_at(&self, t: i64) -> bool {
        self.stop_time.is_some_and(|s| t >= s)
    }

    /// `(t, position)` pairs over the whole domain.
    pub fn iter(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let t0 = self.start.t();
        self.positions.iter().enumerate().map(move |(i, &x)| (t0 + i as i64, x))
    }
}

/// Stateful walker following the arrows of a field.
#[derive(Debug, Clone)]
pub struct WebWalker<F> {
    field: F,
    t: i64,
    x: i64,
}

impl<F: ArrowSource> WebWalker<F> {
    pub fn new(field: F, start: LatticePoint) -> Self {
        Self { field, t: start.t(), x: start.x() }
    }

    #[inline]
    pub fn step(&mut self) -> i64 {
        self.x += self.field.arrow(self.t, self.x);
        self.t += 1;
        self.x
    }

    pub fn time(&self) -> i64 {
        self.t
    }

    pub fn position(&self) -> i64 {
        self.x
    }
}

/// The trajectory `t ↦ φ_{s,t}(x)` from `start` up to `horizon`.
pub fn trajectory<F: ArrowSource>(field: &F, start: LatticePoint, horizon: i64) -> Result<Path> {
    if horizon < start.t() {
        return Err(Error::invalid(format!("horizon {horizon} precedes start time {}", start.t())));
    }
    let mut walker = WebWalker::new(field, start);
    let mut positions = Vec::with_capacity((horizon - start.t() + 1) as usize);
    positions.push(start.x());
    while walker.time() < horizon {
        positions.push(walker.step());
    }
    Ok(Path { start, positions, stop_time: None })
}

/// `path` stopped at its first time outside `strip` (or left as is if it
/// never leaves before its own stop time).
pub fn restrict(path: &Path, strip: Strip) -> Path {
    let t0 = path.start.t();
    let limit = path.stop_time.map_or(path.positions.len(), |s| (s - t0) as usize + 1);
    let exit = path.positions[..limit].iter().position(|&x| !strip.contains(x));
    match exit {
        None => path.clone(),
        Some(i) => {
            let mut positions = path.positions.clone();
            let frozen = positions[i];
            positions[i..].iter_mut().for_each(|p| *p = frozen);
            Path { start: path.start, positions, stop_time: Some(t0 + i as i64) }
        }
    }
}

/// Convenience wrapper taking raw bounds; fails when `lower >= upper`.
pub fn restrict_between(path: &Path, lower: Option<i64>, upper: Option<i64>) -> Result<Path> {
    Ok(restrict(path, Strip::new(lower, upper)?))
}

/// Read access to arrows of one strip; queries elsewhere fail.
pub trait StripAccess {
    fn strip(&self) -> Strip;
    fn arrow(&self, t: i64, x: i64) -> Result<i64>;
}

impl<V: StripAccess + ?Sized> StripAccess for &V {
    fn strip(&self) -> Strip {
        (**self).strip()
    }
    #[inline]
    fn arrow(&self, t: i64, x: i64) -> Result<i64> {
        (**self).arrow(t, x)
    }
}

/// Live view of a field restricted to an open strip.
#[derive(Debug, Clone)]
pub struct StripView<F> {
    field: F,
    strip: Strip,
}

impl<F: ArrowSource> StripView<F> {
    pub fn new(field: F, strip: Strip) -> Self {
        Self { field, strip }
    }

    pub fn upper(field: F) -> Self {
        Self::new(field, Strip::upper_half())
    }

    pub fn lower(field: F) -> Self {
        Self::new(field, Strip::lower_half())
    }
}

/// View of `field` over the open strip `(lower, upper)`.
pub fn strip_view<F: ArrowSource>(field: F, lower: Option<i64>, upper: Option<i64>) -> Result<StripView<F>> {
    Ok(StripView::new(field, Strip::new(lower, upper)?))
}

impl<F: ArrowSource> StripAccess for StripView<F> {
    fn strip(&self) -> Strip {
        self.strip
    }

    #[inline]
    fn arrow(&self, t: i64, x: i64) -> Result<i64> {
        if self.strip.contains(x) {
            Ok(self.field.arrow(t, x))
        } else {
            Err(Error::AccessDenied { t, x, strip: self.strip })
        }
    }
}

/// One consumed arrow: `[t, x, arrow]`.
pub type CellRecord = [i64; 3];

/// Serializable record of the arrows read through one strip view.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripRecord {
    pub strip: Option<Strip>,
    pub cells: Vec<CellRecord>,
}

/// Wraps a view and logs every query, successful or denied.
#[derive(Debug)]
pub struct AuditedView<V> {
    inner: V,
    cells: RefCell<Vec<CellRecord>>,
    denied: Cell<u64>,
    zero_row: Cell<u64>,
}

impl<V: StripAccess> AuditedView<V> {
    pub fn new(inner: V) -> Self {
        Self { inner, cells: RefCell::default(), denied: Cell::new(0), zero_row: Cell::new(0) }
    }

    /// Queries refused by the underlying view.
    pub fn denied(&self) -> u64 {
        self.denied.get()
    }

    /// Queries (allowed or not) on the row `x = 0`.
    pub fn zero_row_queries(&self) -> u64 {
        self.zero_row.get()
    }

    pub fn query_count(&self) -> usize {
        self.cells.borrow().len()
    }

    pub fn record(&self) -> StripRecord {
        StripRecord { strip: Some(self.inner.strip()), cells: self.cells.borrow().clone() }
    }
}

impl<V: StripAccess> StripAccess for AuditedView<V> {
    fn strip(&self) -> Strip {
        self.inner.strip()
    }

    fn arrow(&self, t: i64, x: i64) -> Result<i64> {
        if x == 0 {
            self.zero_row.set(self.zero_row.get() + 1);
        }
        match self.inner.arrow(t, x) {
            Ok(a) => {
                self.cells.borrow_mut().push([t, x, a]);
                Ok(a)
            }
            Err(e) => {
                self.denied.set(self.denied.get() + 1);
                Err(e)
            }
        }
    }
}

/// A view backed only by previously recorded cells.
#[derive(Debug, Clone)]
pub struct RecordedView {
    strip: Strip,
    cells: HashMap<(i64, i64), i64>,
}

impl RecordedView {
    pub fn from_record(record: &StripRecord) -> Result<Self> {
        let strip = record.strip.ok_or_else(|| Error::invalid("strip record without bounds"))?;
        let mut cells = HashMap::with_capacity(record.cells.len());
        for &[t, x, a] in &record.cells {
            if !strip.contains(x) {
                return Err(Error::AccessDenied { t, x, strip });
            }
            if let Some(prev) = cells.insert((t, x), a) {
                if prev != a {
                    return Err(Error::invalid(format!("conflicting recorded arrows at ({t}, {x})")));
                }
            }
        }
        Ok(Self { strip, cells })
    }
}

impl StripAccess for RecordedView {
    fn strip(&self) -> Strip {
        self.strip
    }

    fn arrow(&self, t: i64, x: i64) -> Result<i64> {
        if !self.strip.contains(x) {
            return Err(Error::AccessDenied { t, x, strip: self.strip });
        }
        self.cells.get(&(t, x)).copied().ok_or(Error::NotRecorded { t, x })
    }
}

/// Walks `field` through `view` from `start`, stopping on the first exit
/// from the view's strip. Never queries outside the strip, so the result is
/// a function of the strip's arrows alone; equals
/// `restrict(trajectory(field, start, horizon), strip)`.
pub fn restricted_trajectory<V: StripAccess>(view: &V, start: LatticePoint, horizon: i64) -> Result<Path> {
    if horizon < start.t() {
        return Err(Error::invalid(format!("horizon {horizon} precedes start time {}", start.t())));
    }
    let strip = view.strip();
    let mut positions = Vec::with_capacity((horizon - start.t() + 1) as usize);
    let mut x = start.x();
    let mut stop_time = None;
    positions.push(x);
    for t in start.t()..horizon {
        if stop_time.is_none() && !strip.contains(x) {
            stop_time = Some(t);
        }
        if stop_time.is_none() {
            x += view.arrow(t, x)?;
        }
        positions.push(x);
    }
    if stop_time.is_none() && !strip.contains(x) {
        stop_time = Some(horizon);
    }
    Ok(Path { start, positions, stop_time })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    classes: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n], classes: n }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Merges the classes of `a` and `b`; false if they were already one.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.classes -= 1;
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalescenceEvent {
    pub time: i64,
    pub a: usize,
    pub b: usize,
}

/// Finitely many web trajectories driven by one field, with the record of
/// which of them have coalesced and when.
#[derive(Debug, Clone)]
pub struct CoalescingSystem {
    paths: Vec<Path>,
    classes: UnionFind,
    events: Vec<CoalescenceEvent>,
}

pub fn coalescing_system<F: ArrowSource>(field: &F, starts: &[LatticePoint], horizon: i64) -> Result<CoalescingSystem> {
    let paths = starts.iter().map(|&s| trajectory(field, s, horizon)).collect::<Result<Vec<_>>>()?;
    let mut classes = UnionFind::new(paths.len());
    let mut events = Vec::new();
    let Some(t0) = starts.iter().map(|s| s.t()).min() else {
        return Ok(CoalescingSystem { paths, classes, events });
    };
    let mut occupant: HashMap<i64, usize> = HashMap::new();
    for t in t0..=horizon {
        occupant.clear();
        for (i, p) in paths.iter().enumerate() {
            let Some(x) = p.position(t) else { continue };
            match occupant.get(&x) {
                Some(&j) => {
                    if classes.union(j, i) {
                        events.push(CoalescenceEvent { time: t, a: j, b: i });
                    }
                }
                None => {
                    occupant.insert(x, i);
                }
            }
        }
    }
    Ok(CoalescingSystem { paths, classes, events })
}

impl CoalescingSystem {
    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn events(&self) -> &[CoalescenceEvent] {
        &self.events
    }

    pub fn same_class(&mut self, a: usize, b: usize) -> bool {
        self.classes.same(a, b)
    }

    pub fn final_class_count(&self) -> usize {
        self.classes.class_count()
    }

    /// Number of classes after all merges up to and including time `t`.
    pub fn class_count_at(&self, t: i64) -> usize {
        self.paths.len() - self.events.iter().filter(|e| e.time <= t).count()
    }

    /// First time paths `a` and `b` share a site.
    pub fn meeting_time(&self, a: usize, b: usize) -> Option<i64> {
        first_meeting(&self.paths[a], &self.paths[b])
    }

    /// Checks order preservation and post-meeting agreement for every pair.
    pub fn check_no_crossing(&self) -> Result<()> {
        for i in 0..self.paths.len() {
            for j in i + 1..self.paths.len() {
                check_pair(&self.paths[i], &self.paths[j])?;
            }
        }
        Ok(())
    }
}

pub fn first_meeting(a: &Path, b: &Path) -> Option<i64> {
    let t0 = a.start.t().max(b.start.t());
    let t1 = a.horizon().min(b.horizon());
    (t0..=t1).find(|&t| a.position(t) == b.position(t))
}

fn check_pair(a: &Path, b: &Path) -> Result<()> {
    let t0 = a.start.t().max(b.start.t());
    let t1 = a.horizon().min(b.horizon());
    let mut sign = 0i64;
    let mut met = false;
    for t in t0..=t1 {
        let d = a.position(t).unwrap_or_default() - b.position(t).unwrap_or_default();
        if met && d != 0 {
            return Err(Error::Invariant(format!("paths separated at t={t} after meeting")));
        }
        if d == 0 {
            met = true;
        } else if sign != 0 && d.signum() != sign {
            return Err(Error::Invariant(format!("paths crossed without meeting at t={t}")));
        }
        if d != 0 {
            sign = d.signum();
        }
    }
    Ok(())
}

/// Bounded functional of a restricted path: sign of its displacement.
fn displacement_sign(p: &Path) -> f64 {
    let last = *p.positions.last().expect("paths are nonempty");
    (last - p.start.x()).signum() as f64
}

/// Correlation between displacement signs of trajectories confined to the
/// upper and lower half-planes, over independent fields.
///
/// Each trajectory starts `offset` sites away from the boundary and runs for
/// `window` steps through its own half-plane view.
pub fn strip_independence(seed: u64, trials: usize, offset: i64, window: i64) -> Result<Correlation> {
    if offset < 1 || offset % 2 != 0 {
        return Err(Error::invalid("offset must be a positive even integer"));
    }
    let pairs = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let field = ArrowField::new(derive_seed(seed, "strip-independence", i));
            let upper = StripView::upper(&field);
            let lower = StripView::lower(&field);
            let up = restricted_trajectory(&upper, LatticePoint::new(0, offset)?, window)?;
            let down = restricted_trajectory(&lower, LatticePoint::new(0, -offset)?, window)?;
            Ok((displacement_sign(&up), displacement_sign(&down)))
        })
        .collect::<Result<Vec<_>>>()?;
    correlation_test(&pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingCheck {
    pub distance: i64,
    pub trials: u64,
    pub t_max: i64,
    /// Largest gap between the empirical and exact meeting-time CDFs on
    /// `0..=t_max`.
    pub ks: f64,
    /// Pairs that had not met by `t_max`.
    pub unmet: u64,
    pub crossing_violations: u64,
}

/// Meeting times of two walkers started `distance` apart in one field,
/// against the exact law.
pub fn meeting_time_check(seed: u64, distance: i64, trials: u64, t_max: i64) -> Result<MeetingCheck> {
    if t_max < 1 {
        return Err(Error::invalid("t_max must be positive"));
    }
    let exact = meeting_time_cdf(distance, t_max as usize)?;
    let starts = [LatticePoint::origin(), LatticePoint::new(0, distance)?];
    let (hist, crossings) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let field = ArrowField::new(derive_seed(seed, "meeting", i));
            let sys = coalescing_system(&field, &starts, t_max)?;
            let bad = u64::from(sys.check_no_crossing().is_err());
            let mut h = vec![0u64; t_max as usize + 2];
            h[sys.meeting_time(0, 1).map_or(t_max as usize + 1, |t| t as usize)] += 1;
            Ok((h, bad))
        })
        .try_reduce(
            || (vec![0u64; t_max as usize + 2], 0),
            |(mut a, x), (b, y)| {
                a.iter_mut().zip(&b).for_each(|(p, q)| *p += q);
                Ok((a, x + y))
            },
        )?;
    let mut met = 0u64;
    let mut ks: f64 = 0.0;
    for (t, &f) in exact.iter().enumerate() {
        met += hist[t];
        ks = ks.max((met as f64 / trials as f64 - f).abs());
    }
    Ok(MeetingCheck {
        distance,
        trials,
        t_max,
        ks,
        unmet: hist[t_max as usize + 1],
        crossing_violations: crossings,
    })
}

/// A trivially-recorded auxiliary stream, used to replay perturbed runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxRecord {
    pub increments: Vec<[i64; 2]>,
}

/// Auxiliary source that logs every increment it hands out.
#[derive(Debug)]
pub struct AuditedAux<A> {
    inner: A,
    log: RefCell<Vec<[i64; 2]>>,
}

impl<A: AuxSource> AuditedAux<A> {
    pub fn new(inner: A) -> Self {
        Self { inner, log: RefCell::default() }
    }

    pub fn record(&self) -> AuxRecord {
        AuxRecord { increments: self.log.borrow().clone() }
    }
}

impl<A: AuxSource> AuxSource for AuditedAux<A> {
    fn increment(&self, t: i64) -> i64 {
        let v = self.inner.increment(t);
        self.log.borrow_mut().push([t, v]);
        v
    }
}

/// Replays increments from an [`AuxRecord`].
#[derive(Debug, Clone)]
pub struct RecordedAux {
    increments: HashMap<i64, i64>,
}

impl RecordedAux {
    pub fn from_record(record: &AuxRecord) -> Self {
        Self { increments: record.increments.iter().map(|&[t, v]| (t, v)).collect() }
    }

    pub fn get(&self, t: i64) -> Option<i64> {
        self.increments.get(&t).copied()
    }
}

impl AuxSource for RecordedAux {
    fn increment(&self, t: i64) -> i64 {
        self.get(t).unwrap_or_else(|| panic!("auxiliary increment at t={t} was not recorded"))
    }
}
