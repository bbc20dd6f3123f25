//! The pair `Y = (X^ε, X)` and its three-state labelling.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisefield::{ArrowSource, AuxSource, LatticePoint};
use crate::perturb::{FollowState, PerturbedWalker};
use crate::web::{StripView, WebWalker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointState {
    /// Both coordinates follow the web and are equal.
    OneDWeb,
    /// Both follow the web, at different sites.
    TwoDWeb,
    /// The perturbed coordinate follows the auxiliary walk.
    TwoDAux,
}

impl JointState {
    /// Label of a configuration; `follow` is the state of the perturbed
    /// process after any switch at the current time.
    pub fn label(follow: FollowState, x: i64, y: i64) -> Self {
        match follow {
            FollowState::FollowAux => JointState::TwoDAux,
            FollowState::FollowWeb if x == y => JointState::OneDWeb,
            FollowState::FollowWeb => JointState::TwoDWeb,
        }
    }

    pub fn is_legal_edge(from: JointState, to: JointState) -> bool {
        use JointState::*;
        matches!(
            (from, to),
            (OneDWeb, TwoDAux) | (TwoDAux, TwoDWeb) | (TwoDWeb, OneDWeb) | (TwoDWeb, TwoDAux)
        )
    }

    pub fn code(self) -> &'static str {
        match self {
            JointState::OneDWeb => "1W",
            JointState::TwoDWeb => "2W",
            JointState::TwoDAux => "2A",
        }
    }
}

impl fmt::Display for JointState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointSample {
    pub t: i64,
    pub x_perturbed: i64,
    pub x_true: i64,
    pub state: JointState,
    pub follow: FollowState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub t: i64,
    pub from: JointState,
    pub to: JointState,
}

/// Streaming joint process.
///
/// When the auxiliary walk reaches `±ε` exactly at the site of `X`, the
/// perturbed process switches to the web and is coalesced at the same
/// instant. That jump is reported as two transitions at one time,
/// `TwoDAux → TwoDWeb → OneDWeb`, so every reported edge is one of the four
/// legal ones.
pub struct JointWalker<'a, F: ArrowSource, A: AuxSource> {
    perturbed: PerturbedWalker<StripView<&'a F>, StripView<&'a F>, &'a A>,
    truth: WebWalker<&'a F>,
    state: JointState,
    pending: [Option<Transition>; 2],
}

impl<'a, F: ArrowSource, A: AuxSource> JointWalker<'a, F, A> {
    /// Both coordinates at the origin.
    pub fn new(field: &'a F, aux: &'a A, epsilon: i64) -> Result<Self> {
        let o = LatticePoint::origin();
        Self::from_points(field, aux, epsilon, o, FollowState::FollowWeb, o.x())
    }

    /// Perturbed coordinate at `start` in state `follow`, true coordinate at
    /// `(start.t, x_true)`.
    pub fn from_points(
        field: &'a F,
        aux: &'a A,
        epsilon: i64,
        start: LatticePoint,
        follow: FollowState,
        x_true: i64,
    ) -> Result<Self> {
        let truth_start = LatticePoint::new(start.t(), x_true)?;
        // Label before the perturbed process applies its switching rule.
        let before = JointState::label(follow, start.x(), x_true);
        let perturbed = PerturbedWalker::with_state(
            StripView::upper(field),
            StripView::lower(field),
            aux,
            epsilon,
            start,
            follow,
        )?;
        let truth = WebWalker::new(field, truth_start);
        let mut w = Self { perturbed, truth, state: before, pending: [None, None] };
        w.relabel()?;
        Ok(w)
    }

    fn relabel(&mut self) -> Result<()> {
        let t = self.time();
        let next = JointState::label(self.perturbed.state(), self.perturbed.position(), self.truth.position());
        self.pending = [None, None];
        if next == self.state {
            return Ok(());
        }
        if JointState::is_legal_edge(self.state, next) {
            self.pending[0] = Some(Transition { t, from: self.state, to: next });
        } else if self.state == JointState::TwoDAux && next == JointState::OneDWeb {
            self.pending[0] = Some(Transition { t, from: JointState::TwoDAux, to: JointState::TwoDWeb });
            self.pending[1] = Some(Transition { t, from: JointState::TwoDWeb, to: JointState::OneDWeb });
        } else {
            return Err(Error::Invariant(format!("illegal joint transition {} -> {next} at t={t}", self.state)));
        }
        self.state = next;
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        self.perturbed.step()?;
        self.truth.step();
        self.relabel()
    }

    pub fn time(&self) -> i64 {
        self.truth.time()
    }

    pub fn x_perturbed(&self) -> i64 {
        self.perturbed.position()
    }

    pub fn x_true(&self) -> i64 {
        self.truth.position()
    }

    pub fn state(&self) -> JointState {
        self.state
    }

    pub fn follow(&self) -> FollowState {
        self.perturbed.state()
    }

    /// Transitions that happened at the current time, in order.
    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        self.pending.iter().flatten().copied()
    }

    pub fn sample(&self) -> JointSample {
        JointSample {
            t: self.time(),
            x_perturbed: self.x_perturbed(),
            x_true: self.x_true(),
            state: self.state,
            follow: self.follow(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointRun {
    pub epsilon: i64,
    pub samples: Vec<JointSample>,
    pub transitions: Vec<Transition>,
}

/// Runs `Y` from the origin up to `horizon`.
pub fn joint_run<F: ArrowSource, A: AuxSource>(field: &F, aux: &A, epsilon: i64, horizon: i64) -> Result<JointRun> {
    if horizon < 0 {
        return Err(Error::invalid(format!("negative horizon {horizon}")));
    }
    let mut w = JointWalker::new(field, aux, epsilon)?;
    let mut samples = Vec::with_capacity(horizon as usize + 1);
    let mut transitions = Vec::new();
    loop {
        samples.push(w.sample());
        transitions.extend(w.transitions());
        if w.time() >= horizon {
            break;
        }
        w.step()?;
    }
    Ok(JointRun { epsilon, samples, transitions })
}

/// Checks a run against the labelling rules and the transition table.
pub fn audit_joint_run(run: &JointRun) -> Result<()> {
    let eps = run.epsilon;
    for s in &run.samples {
        if JointState::label(s.follow, s.x_perturbed, s.x_true) != s.state {
            return Err(Error::Invariant(format!("t={}: label {} does not match configuration", s.t, s.state)));
        }
        if s.state == JointState::OneDWeb && s.x_perturbed != s.x_true {
            return Err(Error::Invariant(format!("t={}: OneDWeb with x != y", s.t)));
        }
        if s.state == JointState::TwoDAux && s.x_perturbed.abs() >= eps {
            return Err(Error::Invariant(format!("t={}: TwoDAux outside (-eps, eps)", s.t)));
        }
    }
    for w in run.samples.windows(2) {
        if (w[1].x_perturbed - w[0].x_perturbed).abs() != 1 || (w[1].x_true - w[0].x_true).abs() != 1 {
            return Err(Error::Invariant(format!("t={}: non-unit step", w[1].t)));
        }
    }
    let mut state = JointState::OneDWeb;
    let mut edges = run.transitions.iter().peekable();
    for s in &run.samples {
        while let Some(tr) = edges.next_if(|tr| tr.t == s.t) {
            if tr.from != state || !JointState::is_legal_edge(tr.from, tr.to) {
                return Err(Error::Invariant(format!("t={}: bad edge {} -> {}", tr.t, tr.from, tr.to)));
            }
            state = tr.to;
        }
        if state != s.state {
            return Err(Error::Invariant(format!("t={}: transitions do not replay to {}", s.t, s.state)));
        }
    }
    if edges.next().is_some() {
        return Err(Error::Invariant("transitions beyond the last sample".into()));
    }
    Ok(())
}

/// Rotated coordinates `z1 = (x+y)/2`, `z2 = (x-y)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rotated {
    pub t: i64,
    pub z1: i64,
    pub z2: i64,
}

pub fn rotate_point(x: i64, y: i64) -> Result<(i64, i64)> {
    if (x - y).rem_euclid(2) != 0 {
        return Err(Error::Invariant(format!("rotation of ({x}, {y}) is not integral")));
    }
    Ok(((x + y) / 2, (x - y) / 2))
}

pub fn unrotate_point(z1: i64, z2: i64) -> (i64, i64) {
    (z1 + z2, z1 - z2)
}

pub fn rotate(run: &JointRun) -> Result<Vec<Rotated>> {
    run.samples
        .iter()
        .map(|s| {
            let (z1, z2) = rotate_point(s.x_perturbed, s.x_true)?;
            Ok(Rotated { t: s.t, z1, z2 })
        })
        .collect()
}
