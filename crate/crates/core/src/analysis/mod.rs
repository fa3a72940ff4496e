//! Quantitative analysis of built state spaces: reachability probabilities,
//! deadline curves, expected total rewards and outcome summaries.
//!
//! Every query first pins the states whose answer is exactly 0 or 1 by graph
//! analysis, then runs Jacobi value iteration on the remainder.

mod curve;
pub mod graph;
mod iterate;
mod reward;
mod summary;

use std::fmt;

use fixedbitset::FixedBitSet;
use serde::Serialize;
use thiserror::Error;

pub use curve::{deadline_curve, deadline_series, CurvePoint, CurveRange, DeadlineCurve};
pub use reward::{expected_reward, RewardStructure};
pub use summary::{outcome_summary, OutcomeSummary};

use crate::model::ModelError;
use crate::scalar::Scalar;
use crate::statespace::{ClassifyError, StateSpace, TransitionMatrix};
use graph::Predecessors;

/// How non-determinism is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
    /// No non-determinism: the state space must be a DTMC.
    Fixed,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Min => "min",
            Direction::Max => "max",
            Direction::Fixed => "fixed",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min" => Ok(Direction::Min),
            "max" => Ok(Direction::Max),
            "fixed" => Ok(Direction::Fixed),
            _ => Err(format!("unknown direction `{s}` (min, max, fixed)")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop once the largest relative change of a sweep is below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Convergence {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("direction `fixed` needs a DTMC, but the state space has non-deterministic choices")]
    NotDtmc,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("label `{0}` holds in no state")]
    EmptyTarget(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("monotonicity-violation: `{var}` decreases from state {state} to state {successor}")]
    Monotonicity {
        var: String,
        state: String,
        successor: String,
    },
    #[error("target state {state} of label `{label}` is not absorbing")]
    NotAbsorbing { label: String, state: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown reward `{0}`")]
    UnknownReward(String),
    #[error("reward-divergence: `{target}` is not reached with probability 1 under every scheduler from state {state}")]
    RewardDivergence { target: String, state: String },
    #[error("state {0} does not reach an absorbing state with probability 1")]
    NotAlmostSurelyAbsorbing(String),
    #[error("invalid curve range: {0}")]
    InvalidRange(String),
    #[error("deadline curves of a non-deterministic model need the uniform build for the uniform series")]
    MissingUniform,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

/// What a [`ValueVector`] holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Objective {
    pub description: String,
    pub direction: Direction,
}

/// Per-state result of a query.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector<S> {
    pub values: Vec<S>,
    pub objective: Objective,
    pub convergence: Convergence,
    pub initial: Vec<u32>,
}

impl<S: Scalar> ValueVector<S> {
    pub fn value(&self, state: u32) -> S {
        self.values[state as usize]
    }

    /// Value at the initial states: the largest for `max`, the smallest
    /// otherwise.
    pub fn initial_value(&self) -> S {
        let vals = self.initial.iter().map(|&s| self.values[s as usize]);
        match self.objective.direction {
            Direction::Max => vals.fold(S::neg_infinity(), S::max),
            _ => vals.fold(S::infinity(), S::min),
        }
    }
}

pub(crate) fn check_direction<P>(ss: &StateSpace<P>, dir: Direction) -> Result<(), AnalysisError> {
    if dir == Direction::Fixed && !ss.is_dtmc() {
        return Err(AnalysisError::NotDtmc);
    }
    Ok(())
}

pub(crate) fn label_set<'a, P>(
    ss: &'a StateSpace<P>,
    label: &str,
) -> Result<&'a FixedBitSet, AnalysisError> {
    ss.label(label)
        .ok_or_else(|| AnalysisError::UnknownLabel(label.to_string()))
}

/// Probability of eventually reaching `label`, per state.
pub fn reach<S: Scalar>(
    ss: &StateSpace<S>,
    label: &str,
    dir: Direction,
    opts: &SolveOptions,
) -> Result<ValueVector<S>, AnalysisError> {
    check_direction(ss, dir)?;
    let target = label_set(ss, label)?;
    if target.is_clear() {
        return Err(AnalysisError::EmptyTarget(label.to_string()));
    }
    let (values, convergence) = reach_set(ss.matrix(), target, dir, opts)?;
    Ok(ValueVector {
        values,
        objective: Objective {
            description: format!("P{}[F {label}]", dir.name()),
            direction: dir,
        },
        convergence,
        initial: ss.initial().to_vec(),
    })
}

/// Reachability probabilities of a state set. `Fixed` is treated like
/// `Min`; on a DTMC both coincide.
pub fn reach_set<S: Scalar>(
    m: &TransitionMatrix<S>,
    target: &FixedBitSet,
    dir: Direction,
    opts: &SolveOptions,
) -> Result<(Vec<S>, Convergence), AnalysisError> {
    let pred = Predecessors::new(m);
    reach_with(m, &pred, target, dir, opts)
}

pub(crate) fn reach_with<S: Scalar>(
    m: &TransitionMatrix<S>,
    pred: &Predecessors,
    target: &FixedBitSet,
    dir: Direction,
    opts: &SolveOptions,
) -> Result<(Vec<S>, Convergence), AnalysisError> {
    let n = m.state_count();
    let mut target = target.clone();
    target.grow(n);
    let (no, yes) = match dir {
        Direction::Max => (
            graph::prob0a(pred, &target),
            graph::prob1e(m, pred, &target),
        ),
        Direction::Min | Direction::Fixed => {
            let no = graph::prob0e(m, pred, &target);
            let yes = graph::prob1a(pred, &target, &no);
            (no, yes)
        }
    };
    let mut values = vec![S::zero(); n];
    let mut maybe = Vec::new();
    for (s, v) in values.iter_mut().enumerate() {
        if yes.contains(s) {
            *v = S::one();
        } else if !no.contains(s) {
            maybe.push(s as u32);
        }
    }
    let conv = iterate::jacobi(m, &maybe, &mut values, None, dir, opts)?;
    Ok((values, conv))
}
