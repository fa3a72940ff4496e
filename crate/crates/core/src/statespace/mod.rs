//! Explicit state spaces.
//!
//! [`build`] explores the reachable valuations of a [`Machine`] breadth first
//! and records, per state, one probability row per choice. An autonomous
//! build resolves every state to the argmax action and yields a DTMC. An
//! interval build keeps one choice per lo/hi corner of the interval
//! constants read by that action (an MDP); a uniform build averages those
//! corners into a single row.

mod build;
mod table;
mod terminal;

use std::fmt;
use std::io::{self, Write};
use std::ops::Range;

use fixedbitset::FixedBitSet;
use serde::Serialize;
use thiserror::Error;

pub use build::{build, BuildOptions, DEFAULT_STATE_BUDGET, STATE_BUDGET_ENV};
pub use table::{Layout, StateTable};
pub use terminal::{classify_terminals, ClassifyError, TerminalPartition};

use crate::model::{CommandId, ModelError};
use crate::scalar::Probability;

/// Label attached to states without an enabled action.
pub const DEADLOCK: &str = "deadlock";
/// Label attached to states whose every choice is a probability-one self-loop.
pub const ABSORBING: &str = "absorbing";
/// Label attached to initial states.
pub const INIT: &str = "init";

const NO_COMMAND: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildMode {
    /// Argmax action, point values only: a DTMC.
    Autonomous,
    /// Argmax action, one choice per interval corner: an MDP.
    Interval,
    /// Argmax action, interval corners averaged uniformly: a DTMC.
    Uniform,
}

impl BuildMode {
    pub fn name(self) -> &'static str {
        match self {
            BuildMode::Autonomous => "autonomous",
            BuildMode::Interval => "interval",
            BuildMode::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for BuildMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "autonomous" => Ok(BuildMode::Autonomous),
            "interval" => Ok(BuildMode::Interval),
            "uniform" => Ok(BuildMode::Uniform),
            _ => Err(format!(
                "unknown build mode `{s}` (autonomous, interval, uniform)"
            )),
        }
    }
}

impl fmt::Display for BuildMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state-budget-exceeded: more than {limit} states")]
    StateBudget { limit: usize },
    #[error("row {choice} of state {state} sums to {sum}, not 1")]
    NonStochastic {
        state: String,
        choice: usize,
        sum: f64,
    },
    #[error("row of state {state} has target {target} but there are {states} states")]
    BadTarget {
        state: usize,
        target: u32,
        states: usize,
    },
    #[error("state space has no states")]
    Empty,
}

/// Sparse rows in compressed form: states own a contiguous range of choices,
/// choices own a contiguous range of entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<P> {
    choice_start: Vec<usize>,
    entry_start: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<P>,
}

impl<P> Default for TransitionMatrix<P> {
    fn default() -> Self {
        Self {
            choice_start: vec![0],
            entry_start: vec![0],
            targets: Vec::new(),
            probs: Vec::new(),
        }
    }
}

impl<P> TransitionMatrix<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_entry(&mut self, target: u32, prob: P) {
        self.targets.push(target);
        self.probs.push(prob);
    }

    pub fn finish_choice(&mut self) {
        self.entry_start.push(self.targets.len());
    }

    pub fn finish_state(&mut self) {
        self.choice_start.push(self.entry_start.len() - 1);
    }

    /// Builds from `rows[state][choice] = [(target, prob), ...]`.
    pub fn from_rows(rows: Vec<Vec<Vec<(u32, P)>>>) -> Self {
        let mut m = Self::new();
        for choices in rows {
            for row in choices {
                for (t, p) in row {
                    m.push_entry(t, p);
                }
                m.finish_choice();
            }
            m.finish_state();
        }
        m
    }

    pub fn state_count(&self) -> usize {
        self.choice_start.len() - 1
    }

    pub fn choice_count(&self) -> usize {
        self.entry_start.len() - 1
    }

    pub fn transition_count(&self) -> usize {
        self.targets.len()
    }

    /// Global choice indices of `state`.
    pub fn choices(&self, state: usize) -> Range<usize> {
        self.choice_start[state]..self.choice_start[state + 1]
    }

    pub fn row(&self, choice: usize) -> (&[u32], &[P]) {
        let r = self.entry_start[choice]..self.entry_start[choice + 1];
        (&self.targets[r.clone()], &self.probs[r])
    }

    /// Exactly one choice per state.
    pub fn is_deterministic(&self) -> bool {
        self.choice_count() == self.state_count()
    }

    pub fn max_choices(&self) -> usize {
        self.choice_start
            .windows(2)
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }

    pub fn map<Q>(&self, f: impl Fn(&P) -> Q) -> TransitionMatrix<Q> {
        TransitionMatrix {
            choice_start: self.choice_start.clone(),
            entry_start: self.entry_start.clone(),
            targets: self.targets.clone(),
            probs: self.probs.iter().map(f).collect(),
        }
    }

    fn memory_bytes(&self) -> usize {
        (self.choice_start.capacity() + self.entry_start.capacity()) * std::mem::size_of::<usize>()
            + self.targets.capacity() * 4
            + self.probs.capacity() * std::mem::size_of::<P>()
    }
}

impl<P: Probability> TransitionMatrix<P> {
    /// Every choice is a single probability-one self-loop.
    pub fn is_absorbing(&self, state: usize) -> bool {
        self.choices(state).all(|c| {
            let (t, p) = self.row(c);
            t.len() == 1 && t[0] as usize == state && p[0].is_one()
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildStats {
    pub states: usize,
    pub choices: usize,
    pub transitions: usize,
    pub max_choices: usize,
    pub initial_states: usize,
    pub deadlocks: usize,
    pub seconds: f64,
    pub memory_bytes: usize,
}

/// An explicit DTMC or MDP over the reachable valuations of a model.
#[derive(Debug, Clone)]
pub struct StateSpace<P> {
    mode: BuildMode,
    var_names: Vec<String>,
    table: StateTable,
    matrix: TransitionMatrix<P>,
    choice_command: Vec<u32>,
    choice_corner: Vec<u32>,
    labels: Vec<(String, FixedBitSet)>,
    initial: Vec<u32>,
    stats: BuildStats,
}

impl<P: Probability> StateSpace<P> {
    /// A state space given directly by its rows. States are valuations of a
    /// single variable `s`; `labels` lists the members of each label.
    pub fn from_rows(
        rows: Vec<Vec<Vec<(u32, P)>>>,
        labels: Vec<(String, Vec<u32>)>,
        initial: Vec<u32>,
    ) -> Result<Self, BuildError> {
        let n = rows.len();
        if n == 0 {
            return Err(BuildError::Empty);
        }
        let mut table = StateTable::new(&[(0, n as i64 - 1)]);
        for s in 0..n {
            table.insert(&[s as i64]);
        }
        let matrix = TransitionMatrix::from_rows(rows);
        for s in 0..n {
            for c in matrix.choices(s) {
                let (targets, probs) = matrix.row(c);
                if let Some(&t) = targets.iter().find(|&&t| t as usize >= n) {
                    return Err(BuildError::BadTarget {
                        state: s,
                        target: t,
                        states: n,
                    });
                }
                let sum = P::row_sum(probs);
                if !P::is_stochastic(&sum) {
                    return Err(BuildError::NonStochastic {
                        state: s.to_string(),
                        choice: c - matrix.choices(s).start,
                        sum: sum.as_f64(),
                    });
                }
            }
        }
        let choices = matrix.choice_count();
        let labels = labels
            .into_iter()
            .map(|(name, members)| {
                let mut set = FixedBitSet::with_capacity(n);
                for m in members {
                    set.insert(m as usize);
                }
                (name, set)
            })
            .collect();
        let mut ss = StateSpace {
            mode: if matrix.is_deterministic() {
                BuildMode::Autonomous
            } else {
                BuildMode::Interval
            },
            var_names: vec!["s".to_string()],
            table,
            matrix,
            choice_command: vec![0; choices],
            choice_corner: vec![0; choices],
            labels,
            initial,
            stats: BuildStats::default(),
        };
        ss.finish(FixedBitSet::with_capacity(n), 0.0);
        Ok(ss)
    }

    /// Adds the builtin labels and fills in statistics.
    fn finish(&mut self, deadlocks: FixedBitSet, seconds: f64) {
        let n = self.state_count();
        let mut absorbing = FixedBitSet::with_capacity(n);
        for s in 0..n {
            if self.matrix.is_absorbing(s) {
                absorbing.insert(s);
            }
        }
        let mut init = FixedBitSet::with_capacity(n);
        for &s in &self.initial {
            init.insert(s as usize);
        }
        self.stats = BuildStats {
            states: n,
            choices: self.matrix.choice_count(),
            transitions: self.matrix.transition_count(),
            max_choices: self.matrix.max_choices(),
            initial_states: self.initial.len(),
            deadlocks: deadlocks.count_ones(..),
            seconds,
            memory_bytes: 0,
        };
        self.labels
            .retain(|(name, _)| ![DEADLOCK, ABSORBING, INIT].contains(&name.as_str()));
        self.labels.push((DEADLOCK.to_string(), deadlocks));
        self.labels.push((ABSORBING.to_string(), absorbing));
        self.labels.push((INIT.to_string(), init));
        self.stats.memory_bytes = self.memory_bytes();
    }

    fn memory_bytes(&self) -> usize {
        self.table.memory_bytes()
            + self.matrix.memory_bytes()
            + (self.choice_command.capacity() + self.choice_corner.capacity()) * 4
            + self.labels.iter().map(|(_, s)| s.len() / 8).sum::<usize>()
    }
}

impl<P> StateSpace<P> {
    pub fn mode(&self) -> BuildMode {
        self.mode
    }

    pub fn matrix(&self) -> &TransitionMatrix<P> {
        &self.matrix
    }

    pub fn state_count(&self) -> usize {
        self.matrix.state_count()
    }

    pub fn choice_count(&self) -> usize {
        self.matrix.choice_count()
    }

    pub fn transition_count(&self) -> usize {
        self.matrix.transition_count()
    }

    /// A DTMC: one choice per state.
    pub fn is_dtmc(&self) -> bool {
        self.matrix.is_deterministic()
    }

    pub fn initial(&self) -> &[u32] {
        &self.initial
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|v| v == name)
    }

    pub fn table(&self) -> &StateTable {
        &self.table
    }

    pub fn state(&self, id: u32) -> Vec<i64> {
        self.table.state(id)
    }

    pub fn value(&self, id: u32, var: usize) -> i64 {
        self.table.value(id, var)
    }

    pub fn find(&self, values: &[i64]) -> Option<u32> {
        self.table.get(values)
    }

    /// Declared labels in declaration order, then `deadlock`, `absorbing`
    /// and `init`.
    pub fn labels(&self) -> &[(String, FixedBitSet)] {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<&FixedBitSet> {
        self.labels.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    /// Command behind a choice; `None` for the self-loop of a deadlock.
    pub fn choice_command(&self, choice: usize) -> Option<CommandId> {
        let c = self.choice_command[choice];
        (c != NO_COMMAND).then_some(CommandId(c as usize))
    }

    /// Corner mask of an interval-mode choice.
    pub fn choice_corner(&self, choice: usize) -> u32 {
        self.choice_corner[choice]
    }

    /// `name=value` pairs of a state.
    pub fn render_state(&self, id: u32) -> String {
        let values = self.state(id);
        crate::model::DisplayValuation {
            names: self.var_names.iter().map(String::as_str).collect(),
            values: &values,
        }
        .to_string()
    }

    /// Labels holding at a state, in label order.
    pub fn state_labels(&self, id: u32) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|(_, s)| s.contains(id as usize))
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

impl<P: Probability> StateSpace<P> {
    /// Writes the plain-text dump: a header, one `state` line per state and
    /// one `row` line per choice.
    pub fn dump(&self, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "apfsm-ss v1")?;
        for id in 0..self.state_count() as u32 {
            writeln!(
                out,
                "state {id} {} [{}]",
                self.render_state(id),
                self.state_labels(id).join(",")
            )?;
        }
        for s in 0..self.state_count() {
            for (k, c) in self.matrix.choices(s).enumerate() {
                write!(out, "row {s} {k}")?;
                let (targets, probs) = self.matrix.row(c);
                for (t, p) in targets.iter().zip(probs) {
                    write!(out, " {t}:{}", p.render())?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_error(&self) -> f64 {
        (0..self.matrix.choice_count())
            .map(|c| (P::row_sum(self.matrix.row(c).1).as_f64() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Converts the probabilities to another representation.
    pub fn convert<Q: Probability>(&self, f: impl Fn(&P) -> Q) -> StateSpace<Q> {
        StateSpace {
            mode: self.mode,
            var_names: self.var_names.clone(),
            table: self.table.clone(),
            matrix: self.matrix.map(f),
            choice_command: self.choice_command.clone(),
            choice_corner: self.choice_corner.clone(),
            labels: self.labels.clone(),
            initial: self.initial.clone(),
            stats: self.stats.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_half() -> StateSpace<f64> {
        StateSpace::from_rows(
            vec![
                vec![vec![(1, 0.5), (2, 0.5)]],
                vec![vec![(1, 1.0)]],
                vec![vec![(2, 1.0)]],
            ],
            vec![("goal".into(), vec![1])],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn rows_and_builtin_labels() {
        let ss = half_half();
        assert!(ss.is_dtmc());
        assert_eq!(ss.transition_count(), 4);
        assert_eq!(ss.matrix().row(0), (&[1u32, 2][..], &[0.5, 0.5][..]));
        let absorbing = ss.label(ABSORBING).unwrap();
        assert_eq!(absorbing.ones().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(ss.state_labels(1), vec!["goal", ABSORBING]);
        assert_eq!(ss.state_labels(0), vec![INIT]);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = StateSpace::<f64>::from_rows(vec![vec![vec![(0, 0.4)]]], vec![], vec![0]);
        assert!(matches!(bad, Err(BuildError::NonStochastic { .. })));
        let bad = StateSpace::<f64>::from_rows(vec![vec![vec![(3, 1.0)]]], vec![], vec![0]);
        assert!(matches!(bad, Err(BuildError::BadTarget { target: 3, .. })));
    }

    #[test]
    fn dump_format() {
        let mut out = Vec::new();
        half_half().dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "apfsm-ss v1\nstate 0 s=0 [init]\nstate 1 s=1 [goal,absorbing]\nstate 2 s=2 [absorbing]\n\
             row 0 0 1:0.5 2:0.5\nrow 1 0 1:1\nrow 2 0 2:1\n"
        );
    }
}
