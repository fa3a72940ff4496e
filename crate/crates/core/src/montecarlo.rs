//! Seeded path sampling on a [`Machine`], used to cross-check exact results.
//!
//! Paths follow the argmax action at every step. Interval corners are drawn
//! by a [`CornerScheduler`]; outcomes by a ChaCha8 generator. Estimates split
//! the `n` samples into fixed batches, each on its own ChaCha stream of the
//! seed, so the result is the same for any worker count.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{CommandId, Machine, ModelError};

/// Samples per batch in [`estimate`].
pub const BATCH: usize = 1000;
pub const DEFAULT_STEP_CAP: usize = 100_000;
/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959963984540054;

pub const ESTIMATE_CSV_HEADER: &str = "event,n,point,lo,hi,seed";

/// Resolution of interval corners while sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CornerScheduler {
    /// Every corner of the selected command equally likely.
    Uniform,
    /// All intervals at their lower endpoint.
    Lo,
    /// All intervals at their upper endpoint.
    Hi,
}

impl CornerScheduler {
    fn corner(self, corners: usize, rng: &mut ChaCha8Rng) -> usize {
        match self {
            _ if corners == 1 => 0,
            CornerScheduler::Uniform => rng.random_range(0..corners),
            CornerScheduler::Lo => 0,
            CornerScheduler::Hi => corners - 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CornerScheduler::Uniform => "uniform",
            CornerScheduler::Lo => "lo",
            CornerScheduler::Hi => "hi",
        }
    }
}

impl std::str::FromStr for CornerScheduler {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(CornerScheduler::Uniform),
            "lo" => Ok(CornerScheduler::Lo),
            "hi" => Ok(CornerScheduler::Hi),
            _ => Err(format!("unknown corner scheduler `{s}` (uniform, lo, hi)")),
        }
    }
}

impl fmt::Display for CornerScheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub state: Vec<i64>,
    pub command: CommandId,
    pub corner: usize,
    pub outcome: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    /// Final state: absorbing, or where the step cap was hit.
    pub last: Vec<i64>,
    /// Outcome category of `last`, when it is absorbing.
    pub category: Option<String>,
    /// Accumulated value of every reward structure, in declaration order.
    pub rewards: Vec<(String, f64)>,
    pub truncated: bool,
}

impl Trace {
    /// States in visiting order, including the last.
    pub fn states(&self) -> impl Iterator<Item = &[i64]> {
        self.steps
            .iter()
            .map(|s| s.state.as_slice())
            .chain(std::iter::once(self.last.as_slice()))
    }

    /// One line per step, `<state> --action[corner]/outcome--> <next>`; the
    /// corner is shown for commands with interval corners only.
    pub fn dump(&self, machine: &Machine) -> String {
        let mut out = String::new();
        let states: Vec<&[i64]> = self.states().collect();
        for (i, step) in self.steps.iter().enumerate() {
            let corner = if machine.corner_count(step.command) > 1 {
                format!("[{}]", step.corner)
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{} --{}{corner}/{}--> {}\n",
                machine.render(states[i]),
                machine.action_of(step.command),
                step.outcome,
                machine.render(states[i + 1]),
            ));
        }
        match (&self.category, self.truncated) {
            (_, true) => out.push_str("# truncated\n"),
            (Some(c), _) => out.push_str(&format!("# {c}\n")),
            (None, _) => out.push_str("# absorbed\n"),
        }
        out
    }
}

struct Walker<'a> {
    machine: &'a Machine,
    scheduler: CornerScheduler,
    step_cap: usize,
    initial: Vec<Vec<i64>>,
    /// Cumulative outcome probabilities per command.
    cumulative: Vec<Vec<f64>>,
    scratch: Vec<CommandId>,
    corner: Vec<i64>,
    next: Vec<i64>,
    probe: Vec<i64>,
}

enum Stop {
    Absorbed,
    Truncated,
}

impl<'a> Walker<'a> {
    fn new(
        machine: &'a Machine,
        scheduler: CornerScheduler,
        step_cap: usize,
    ) -> Result<Self, ModelError> {
        let initial = machine.initial_states()?.into_iter().map(|v| v.0).collect();
        let cumulative = (0..machine.command_count())
            .map(|c| {
                let mut acc = 0.0;
                (0..machine.outcome_count(CommandId(c)))
                    .map(|k| {
                        acc += machine.outcome_prob_f64(CommandId(c), k);
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            machine,
            scheduler,
            step_cap,
            initial,
            cumulative,
            scratch: Vec::new(),
            corner: Vec::new(),
            next: Vec::new(),
            probe: Vec::new(),
        })
    }

    fn start(&self, rng: &mut ChaCha8Rng) -> Vec<i64> {
        let k = if self.initial.len() == 1 {
            0
        } else {
            rng.random_range(0..self.initial.len())
        };
        self.initial[k].clone()
    }

    fn draw_outcome(&self, cmd: CommandId, rng: &mut ChaCha8Rng) -> usize {
        let cum = &self.cumulative[cmd.0];
        let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
        cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
    }

    /// Every corner and outcome of `cmd` leaves `s` unchanged.
    fn is_self_loop(&mut self, s: &[i64], cmd: CommandId) -> Result<bool, ModelError> {
        let m = self.machine;
        for mask in 0..m.corner_count(cmd) {
            m.corner_values(cmd, mask, &mut self.corner);
            for k in 0..m.outcome_count(cmd) {
                m.apply_outcome(s, cmd, k, &self.corner, &mut self.probe)?;
                if self.probe != s {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Walks from `state` until absorption or the step cap, calling `visit`
    /// on each transition before `state` is advanced.
    fn walk(
        &mut self,
        state: &mut Vec<i64>,
        rng: &mut ChaCha8Rng,
        mut visit: impl FnMut(&[i64], CommandId, usize, usize, &[i64]) -> Result<(), ModelError>,
    ) -> Result<Stop, ModelError> {
        let m = self.machine;
        for _ in 0..self.step_cap {
            let Some(cmd) = m.select(state, &mut self.scratch)? else {
                return Ok(Stop::Absorbed);
            };
            let corner = self.scheduler.corner(m.corner_count(cmd), rng);
            let outcome = self.draw_outcome(cmd, rng);
            m.corner_values(cmd, corner, &mut self.corner);
            m.apply_outcome(state, cmd, outcome, &self.corner, &mut self.next)?;
            if self.next == *state && self.is_self_loop(state, cmd)? {
                return Ok(Stop::Absorbed);
            }
            visit(state, cmd, corner, outcome, &self.next)?;
            std::mem::swap(state, &mut self.next);
        }
        match m.select(state, &mut self.scratch)? {
            None => Ok(Stop::Absorbed),
            Some(cmd) if self.is_self_loop(&state.clone(), cmd)? => Ok(Stop::Absorbed),
            Some(_) => Ok(Stop::Truncated),
        }
    }
}

/// One path from an initial state, chosen uniformly when there are several.
pub fn sample_path(
    machine: &Machine,
    scheduler: CornerScheduler,
    seed: u64,
    step_cap: usize,
) -> Result<Trace, ModelError> {
    let mut walker = Walker::new(machine, scheduler, step_cap)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = walker.start(&mut rng);
    let names: Vec<String> = machine.reward_names().map(str::to_string).collect();
    let mut totals = vec![0.0; names.len()];
    let mut steps = Vec::new();
    let stop = walker.walk(&mut state, &mut rng, |s, cmd, corner, outcome, next| {
        for (r, total) in totals.iter_mut().enumerate() {
            *total += machine.transition_reward(r, s, cmd, next)?;
        }
        steps.push(TraceStep {
            state: s.to_vec(),
            command: cmd,
            corner,
            outcome,
        });
        Ok(())
    })?;
    let truncated = matches!(stop, Stop::Truncated);
    let category = if truncated {
        None
    } else {
        machine.classify(&state)?.map(str::to_string)
    };
    Ok(Trace {
        steps,
        last: state,
        category,
        rewards: names.into_iter().zip(totals).collect(),
        truncated,
    })
}

/// Checks every step of `trace` against the model: the recorded command is
/// the argmax choice, and the recorded corner and outcome produce the next
/// state.
pub fn replay(machine: &Machine, trace: &Trace) -> Result<(), String> {
    let states: Vec<&[i64]> = trace.states().collect();
    let initial = machine.initial_states().map_err(|e| e.to_string())?;
    if !initial.iter().any(|v| v.0 == states[0]) {
        return Err(format!("{} is not initial", machine.render(states[0])));
    }
    let (mut scratch, mut corner, mut next) = (Vec::new(), Vec::new(), Vec::new());
    for (i, step) in trace.steps.iter().enumerate() {
        let chosen = machine
            .select(states[i], &mut scratch)
            .map_err(|e| e.to_string())?;
        if chosen != Some(step.command) {
            return Err(format!(
                "step {i}: {} is not the argmax action",
                machine.action_of(step.command)
            ));
        }
        if step.corner >= machine.corner_count(step.command)
            || step.outcome >= machine.outcome_count(step.command)
        {
            return Err(format!("step {i}: corner or outcome out of range"));
        }
        machine.corner_values(step.command, step.corner, &mut corner);
        machine
            .apply_outcome(states[i], step.command, step.outcome, &corner, &mut next)
            .map_err(|e| e.to_string())?;
        if next != states[i + 1] {
            return Err(format!(
                "step {i}: expected {}, trace has {}",
                machine.render(&next),
                machine.render(states[i + 1])
            ));
        }
    }
    Ok(())
}

/// Frequency of paths that visit a state satisfying the event label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub event: String,
    pub n: usize,
    pub successes: usize,
    /// Paths cut at the step cap; they count as non-events.
    pub truncated: usize,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
    pub scheduler: CornerScheduler,
}

impl Estimate {
    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.event, self.n, self.point, self.lo, self.hi, self.seed
        )
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson(successes: usize, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).clamp(0.0, p)
    };
    let hi = if successes == n {
        1.0
    } else {
        (center + half).clamp(p, 1.0)
    };
    (lo, hi)
}

/// Estimates the probability of eventually visiting `event` from `n` paths.
pub fn estimate(
    machine: &Machine,
    event: &str,
    n: usize,
    seed: u64,
    scheduler: CornerScheduler,
    step_cap: usize,
) -> Result<Estimate, SimError> {
    if n == 0 {
        return Err(SimError::NoSamples);
    }
    let label = machine
        .label_index(event)
        .ok_or_else(|| SimError::UnknownLabel(event.to_string()))?;
    let batches = n.div_ceil(BATCH);
    let counts = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut walker = Walker::new(machine, scheduler, step_cap)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let size = BATCH.min(n - b * BATCH);
            let (mut hits, mut cut) = (0usize, 0usize);
            for _ in 0..size {
                let mut state = walker.start(&mut rng);
                let mut hit = machine.eval_label(label, &state)?;
                let stop = walker.walk(&mut state, &mut rng, |_, _, _, _, next| {
                    if !hit {
                        hit = machine.eval_label(label, next)?;
                    }
                    Ok(())
                })?;
                match stop {
                    Stop::Truncated => cut += 1,
                    Stop::Absorbed if hit => hits += 1,
                    Stop::Absorbed => {}
                }
            }
            Ok((hits, cut))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let successes = counts.iter().map(|c| c.0).sum();
    let truncated = counts.iter().map(|c| c.1).sum();
    let (lo, hi) = wilson(successes, n);
    Ok(Estimate {
        event: event.to_string(),
        n,
        successes,
        truncated,
        point: successes as f64 / n as f64,
        lo,
        hi,
        seed,
        scheduler,
    })
}
