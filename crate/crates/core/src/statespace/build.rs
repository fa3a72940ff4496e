use std::time::Instant;

use fixedbitset::FixedBitSet;

use super::{BuildError, BuildMode, StateSpace, StateTable, TransitionMatrix, NO_COMMAND};
use crate::model::{CommandId, Machine, ModelError};
use crate::scalar::Probability;

/// Environment variable capping the number of states a build may create.
pub const STATE_BUDGET_ENV: &str = "APFSM_STATE_BUDGET";
pub const DEFAULT_STATE_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub mode: BuildMode,
    pub state_budget: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            mode: BuildMode::Autonomous,
            state_budget: DEFAULT_STATE_BUDGET,
        }
    }
}

impl BuildOptions {
    pub fn new(mode: BuildMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Options for `mode` with the budget taken from `APFSM_STATE_BUDGET`
    /// when it is set to a number.
    pub fn from_env(mode: BuildMode) -> Self {
        let state_budget = std::env::var(STATE_BUDGET_ENV)
            .ok()
            .and_then(|v| parse_budget(&v))
            .unwrap_or(DEFAULT_STATE_BUDGET);
        Self { mode, state_budget }
    }
}

/// Accepts plain integers and scientific notation such as `5e7`.
fn parse_budget(text: &str) -> Option<usize> {
    let text = text.trim().replace('_', "");
    text.parse::<usize>().ok().or_else(|| {
        let f: f64 = text.parse().ok()?;
        (f.is_finite() && f >= 0.0).then_some(f as usize)
    })
}

struct Builder<'a, P> {
    machine: &'a Machine,
    mode: BuildMode,
    budget: usize,
    table: StateTable,
    matrix: TransitionMatrix<P>,
    choice_command: Vec<u32>,
    choice_corner: Vec<u32>,
    /// Outcome probabilities per command, converted once.
    probs: Vec<Vec<P>>,
}

/// Explores the reachable state space breadth first. Ids follow discovery
/// order: initial states first, then successors in choice, corner and
/// outcome order.
pub fn build<P: Probability>(
    machine: &Machine,
    opts: &BuildOptions,
) -> Result<StateSpace<P>, BuildError> {
    let start = Instant::now();
    if opts.mode == BuildMode::Autonomous {
        let names = machine.corner_interval_names();
        if !names.is_empty() {
            return Err(ModelError::IntervalsInAutonomous(names).into());
        }
    }
    let probs = (0..machine.command_count())
        .map(|c| {
            (0..machine.outcome_count(CommandId(c)))
                .map(|k| P::from_rational(machine.outcome_prob(CommandId(c), k)))
                .collect()
        })
        .collect();
    let mut b = Builder {
        machine,
        mode: opts.mode,
        budget: opts.state_budget,
        table: StateTable::new(machine.domains()),
        matrix: TransitionMatrix::new(),
        choice_command: Vec::new(),
        choice_corner: Vec::new(),
        probs,
    };
    let mut initial = Vec::new();
    for v in machine.initial_states()? {
        let id = b.intern(v.values())?;
        if !initial.contains(&id) {
            initial.push(id);
        }
    }
    let deadlocks = b.explore()?;

    let labels = labels(machine, &b.table)?;
    let mut ss = StateSpace {
        mode: opts.mode,
        var_names: (0..machine.var_count())
            .map(|i| machine.var_name(crate::model::VarId(i)).to_string())
            .collect(),
        table: b.table,
        matrix: b.matrix,
        choice_command: b.choice_command,
        choice_corner: b.choice_corner,
        labels,
        initial,
        stats: Default::default(),
    };
    ss.finish(deadlocks, start.elapsed().as_secs_f64());
    Ok(ss)
}

impl<P: Probability> Builder<'_, P> {
    fn intern(&mut self, values: &[i64]) -> Result<u32, BuildError> {
        let limit = self.budget;
        match self.table.insert(values) {
            Some((id, fresh)) => {
                if fresh && self.table.len() > limit {
                    return Err(BuildError::StateBudget { limit });
                }
                Ok(id)
            }
            None => Err(BuildError::StateBudget {
                limit: limit.min(u32::MAX as usize),
            }),
        }
    }

    fn explore(&mut self) -> Result<FixedBitSet, BuildError> {
        let machine = self.machine;
        let mut deadlocks = Vec::new();
        let (mut cur, mut next, mut corner) = (Vec::new(), Vec::new(), Vec::new());
        let mut scratch = Vec::new();
        let mut row: Vec<(u32, P)> = Vec::new();
        let mut id = 0u32;
        while (id as usize) < self.table.len() {
            self.table.state_into(id, &mut cur);
            match machine.select(&cur, &mut scratch)? {
                None => {
                    deadlocks.push(id);
                    self.matrix.push_entry(id, P::one());
                    self.matrix.finish_choice();
                    self.choice_command.push(NO_COMMAND);
                    self.choice_corner.push(0);
                }
                Some(cmd) => {
                    let corners = machine.corner_count(cmd);
                    let uniform = self.mode == BuildMode::Uniform;
                    row.clear();
                    for mask in 0..corners {
                        machine.corner_values(cmd, mask, &mut corner);
                        for k in 0..machine.outcome_count(cmd) {
                            machine.apply_outcome(&cur, cmd, k, &corner, &mut next)?;
                            let target = self.intern(&next)?;
                            let p = &self.probs[cmd.0][k];
                            let p = if uniform {
                                p.div_count(corners)
                            } else {
                                p.clone()
                            };
                            match row.iter_mut().find(|(t, _)| *t == target) {
                                Some((_, q)) => *q = q.clone() + p,
                                None => row.push((target, p)),
                            }
                        }
                        if !uniform {
                            self.push_row(&mut row, id, cmd, mask as u32)?;
                        }
                    }
                    if uniform {
                        self.push_row(&mut row, id, cmd, 0)?;
                    }
                }
            }
            self.matrix.finish_state();
            id += 1;
        }
        let mut set = FixedBitSet::with_capacity(self.table.len());
        for d in deadlocks {
            set.insert(d as usize);
        }
        Ok(set)
    }

    fn push_row(
        &mut self,
        row: &mut Vec<(u32, P)>,
        id: u32,
        cmd: CommandId,
        corner: u32,
    ) -> Result<(), BuildError> {
        let sum = P::row_sum(row.iter().map(|(_, p)| p));
        if !P::is_stochastic(&sum) {
            return Err(BuildError::NonStochastic {
                state: self.machine.render(&self.table.state(id)),
                choice: corner as usize,
                sum: sum.as_f64(),
            });
        }
        for (t, p) in row.drain(..) {
            self.matrix.push_entry(t, p);
        }
        self.matrix.finish_choice();
        self.choice_command.push(cmd.0 as u32);
        self.choice_corner.push(corner);
        Ok(())
    }
}

fn labels(machine: &Machine, table: &StateTable) -> Result<Vec<(String, FixedBitSet)>, ModelError> {
    let n = table.len();
    let mut out: Vec<(String, FixedBitSet)> = machine
        .label_names()
        .map(|name| (name.to_string(), FixedBitSet::with_capacity(n)))
        .collect();
    let mut cur = Vec::new();
    for id in 0..n as u32 {
        table.state_into(id, &mut cur);
        for (i, (_, set)) in out.iter_mut().enumerate() {
            if machine.eval_label(i, &cur)? {
                set.insert(id as usize);
            }
        }
    }
    Ok(out)
}
