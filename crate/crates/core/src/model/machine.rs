use std::collections::BTreeSet;

use thiserror::Error;

use super::eval::{rational_to_f64, Env, Resolved};
use super::{CompiledExpr, DisplayValuation, EvalError, Model, Span, UpdateKind, Valuation};
use crate::scalar::Rational;

/// Index of a variable in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Index of a command in source order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CommandId(pub usize);

/// Upper bound on interval constants one command may depend on.
pub const MAX_CORNER_INTERVALS: usize = 8;

/// Upper bound on the valuations enumerated for an `init` constraint.
const MAX_INIT_ENUMERATION: u128 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("domain violation: {variable}={value} outside [{lo}..{hi}] (action {action}, from state {state})")]
    DomainViolation {
        variable: String,
        value: i64,
        lo: i64,
        hi: i64,
        action: String,
        state: String,
    },
    #[error("weight tie: actions {first} and {second} both have weight {weight} in state {state}")]
    WeightTie {
        first: String,
        second: String,
        weight: f64,
        state: String,
    },
    #[error("action {action} has several enabled commands in state {state}")]
    DuplicateAction { action: String, state: String },
    #[error("weight {weight} of action {action} outside [0,1] in state {state}")]
    WeightRange {
        action: String,
        weight: f64,
        state: String,
    },
    #[error("no enabled action in state {state}")]
    NoAction { state: String },
    #[error("cannot evaluate {context} in state {state}: {source}")]
    Eval {
        context: String,
        state: String,
        source: EvalError,
    },
    #[error("no initial state")]
    NoInitialStates,
    #[error("init constraint ranges over {0} valuations; too many to enumerate")]
    InitTooLarge(u128),
    #[error("autonomous build needs point values, but interval constants {0:?} are non-degenerate; use interval or uniform mode")]
    IntervalsInAutonomous(Vec<String>),
    #[error(
        "action {action} depends on {count} interval constants (limit {MAX_CORNER_INTERVALS})"
    )]
    CornerLimit { action: String, count: usize },
    #[error("negative reward {value} from {reward} in state {state}")]
    NegativeReward {
        reward: String,
        value: f64,
        state: String,
    },
    #[error("unresolved name {0}")]
    Unresolved(String),
}

/// A single `v := e` / `v ± e` update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOp {
    pub var: VarId,
    pub kind: UpdateKind,
    pub amount: CompiledExpr,
}

impl UpdateOp {
    pub fn assign(var: VarId, value: i64) -> Self {
        Self {
            var,
            kind: UpdateKind::Assign,
            amount: CompiledExpr::Const(super::Val::Int(value)),
        }
    }

    /// `v += amount` (or `v -= -amount` for negative amounts).
    pub fn delta(var: VarId, amount: i64) -> Self {
        Self {
            var,
            kind: UpdateKind::Add,
            amount: CompiledExpr::Const(super::Val::Int(amount)),
        }
    }
}

#[derive(Debug, Clone)]
struct CompiledOutcome {
    prob: Rational,
    updates: Vec<UpdateOp>,
}

#[derive(Debug, Clone)]
struct CompiledCommand {
    action: usize,
    guard: CompiledExpr,
    weight: CompiledExpr,
    outcomes: Vec<CompiledOutcome>,
    /// Non-degenerate interval constants read by the updates, ascending.
    corner_intervals: Vec<usize>,
    span: Span,
}

#[derive(Debug, Clone)]
struct CompiledReward {
    action: Option<usize>,
    expr: CompiledExpr,
}

/// One successor of a state under a command and corner.
#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub prob: Rational,
    pub state: Valuation,
    /// Index of the first outcome producing this successor.
    pub outcome: usize,
}

/// Standard outcome categories in priority order.
pub const OUTCOME_CATEGORIES: [&str; 4] = ["success", "emergency", "timeout", "missed"];

/// Executable form of a [`Model`].
#[derive(Debug, Clone)]
pub struct Machine {
    model: Model,
    domains: Vec<(i64, i64)>,
    intervals: Vec<(i64, i64)>,
    actions: Vec<String>,
    commands: Vec<CompiledCommand>,
    labels: Vec<(String, CompiledExpr)>,
    rewards: Vec<(String, Vec<CompiledReward>)>,
    init: Option<CompiledExpr>,
}

impl Machine {
    pub fn new(model: &Model) -> Result<Self, ModelError> {
        let resolve = |name: &str| -> Option<Resolved> {
            if let Some(i) = model.variable_index(name) {
                return Some(Resolved::Var(i));
            }
            if let Some(c) = model.constants.iter().find(|c| c.name.name == name) {
                return Some(Resolved::Const(c.value));
            }
            model
                .intervals
                .iter()
                .position(|i| i.name.name == name)
                .map(|i| {
                    let d = &model.intervals[i];
                    Resolved::Interval(i, d.lo, d.hi)
                })
        };
        let compile = |e| CompiledExpr::compile(e, &resolve).map_err(ModelError::Unresolved);

        let actions: Vec<String> = model.actions().into_iter().map(String::from).collect();
        let mut commands = Vec::with_capacity(model.commands.len());
        for c in &model.commands {
            let mut outcomes = Vec::with_capacity(c.outcomes.len());
            let mut corner_intervals = BTreeSet::new();
            for o in &c.outcomes {
                let mut updates = Vec::with_capacity(o.updates.len());
                for u in &o.updates {
                    let var = model
                        .variable_index(&u.var.name)
                        .ok_or_else(|| ModelError::Unresolved(u.var.name.clone()))?;
                    u.amount.walk_names(&mut |id, use_| {
                        if use_ == super::NameUse::Plain {
                            if let Some(i) =
                                model.intervals.iter().position(|d| d.name.name == id.name)
                            {
                                if !model.intervals[i].is_degenerate() {
                                    corner_intervals.insert(i);
                                }
                            }
                        }
                    });
                    updates.push(UpdateOp {
                        var: VarId(var),
                        kind: u.kind,
                        amount: compile(&u.amount)?,
                    });
                }
                outcomes.push(CompiledOutcome {
                    prob: o.prob.clone(),
                    updates,
                });
            }
            if corner_intervals.len() > MAX_CORNER_INTERVALS {
                return Err(ModelError::CornerLimit {
                    action: c.action.name.clone(),
                    count: corner_intervals.len(),
                });
            }
            commands.push(CompiledCommand {
                action: actions
                    .iter()
                    .position(|a| *a == c.action.name)
                    .unwrap_or(0),
                guard: compile(&c.guard)?,
                weight: compile(&c.weight)?,
                outcomes,
                corner_intervals: corner_intervals.into_iter().collect(),
                span: c.span,
            });
        }
        let labels = model
            .labels
            .iter()
            .map(|l| Ok((l.name.name.clone(), compile(&l.expr)?)))
            .collect::<Result<Vec<_>, ModelError>>()?;
        let mut rewards: Vec<(String, Vec<CompiledReward>)> = Vec::new();
        for r in &model.rewards {
            let item = CompiledReward {
                action: match &r.action {
                    Some(a) => Some(
                        actions
                            .iter()
                            .position(|x| *x == a.name)
                            .ok_or_else(|| ModelError::Unresolved(a.name.clone()))?,
                    ),
                    None => None,
                },
                expr: compile(&r.expr)?,
            };
            match rewards.iter_mut().find(|(n, _)| *n == r.name.name) {
                Some((_, items)) => items.push(item),
                None => rewards.push((r.name.name.clone(), vec![item])),
            }
        }
        let init = model.init.as_ref().map(compile).transpose()?;
        Ok(Self {
            model: model.clone(),
            domains: model.variables.iter().map(|v| (v.lo, v.hi)).collect(),
            intervals: model.intervals.iter().map(|i| (i.lo, i.hi)).collect(),
            actions,
            commands,
            labels,
            rewards,
            init,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn var_count(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[(i64, i64)] {
        &self.domains
    }

    pub fn var_name(&self, var: VarId) -> &str {
        &self.model.variables[var.0].name.name
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.model.variable_index(name).map(VarId)
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn command_count(&self) -> usize {
        self.commands.len()
    }

    pub fn action_of(&self, cmd: CommandId) -> &str {
        &self.actions[self.commands[cmd.0].action]
    }

    pub fn action_index(&self, cmd: CommandId) -> usize {
        self.commands[cmd.0].action
    }

    pub fn command_span(&self, cmd: CommandId) -> Span {
        self.commands[cmd.0].span
    }

    pub fn render(&self, s: &[i64]) -> String {
        DisplayValuation {
            names: self
                .model
                .variables
                .iter()
                .map(|v| v.name.name.as_str())
                .collect(),
            values: s,
        }
        .to_string()
    }

    fn eval_err(
        &self,
        context: impl Into<String>,
        s: &[i64],
    ) -> impl FnOnce(EvalError) -> ModelError + '_ {
        let context = context.into();
        let state = self.render(s);
        move |source| ModelError::Eval {
            context,
            state,
            source,
        }
    }

    /// The set I of initial valuations, in lexicographic order.
    pub fn initial_states(&self) -> Result<Vec<Valuation>, ModelError> {
        let Some(init) = &self.init else {
            let values = self
                .model
                .variables
                .iter()
                .map(|v| v.init.unwrap_or(v.lo))
                .collect();
            return Ok(vec![Valuation(values)]);
        };
        let total: u128 = self
            .domains
            .iter()
            .map(|(lo, hi)| (hi - lo + 1) as u128)
            .product();
        if total > MAX_INIT_ENUMERATION {
            return Err(ModelError::InitTooLarge(total));
        }
        let mut out = Vec::new();
        let mut cur: Vec<i64> = self.domains.iter().map(|d| d.0).collect();
        loop {
            if init
                .eval_bool(&Env::state(&cur))
                .map_err(self.eval_err("init", &cur))?
            {
                out.push(Valuation(cur.clone()));
            }
            // odometer increment, last variable fastest
            let mut i = cur.len();
            loop {
                if i == 0 {
                    return if out.is_empty() {
                        Err(ModelError::NoInitialStates)
                    } else {
                        Ok(out)
                    };
                }
                i -= 1;
                if cur[i] < self.domains[i].1 {
                    cur[i] += 1;
                    break;
                }
                cur[i] = self.domains[i].0;
            }
        }
    }

    /// Commands whose guard holds at `s`, in source order.
    pub fn enabled_commands(&self, s: &[i64], out: &mut Vec<CommandId>) -> Result<(), ModelError> {
        out.clear();
        let env = Env::state(s);
        for (i, c) in self.commands.iter().enumerate() {
            if c.guard
                .eval_bool(&env)
                .map_err(|e| self.eval_err(format!("guard of {}", self.actions[c.action]), s)(e))?
            {
                out.push(CommandId(i));
            }
        }
        Ok(())
    }

    /// A(s): the actions available at `s`.
    pub fn enabled_actions(&self, s: &Valuation) -> Result<BTreeSet<String>, ModelError> {
        let mut cmds = Vec::new();
        self.enabled_commands(&s.0, &mut cmds)?;
        Ok(cmds
            .iter()
            .map(|&c| self.action_of(c).to_string())
            .collect())
    }

    /// w(s, a) for the command's action; validated to lie in [0, 1].
    pub fn weight(&self, s: &[i64], cmd: CommandId) -> Result<f64, ModelError> {
        let c = &self.commands[cmd.0];
        let w = c
            .weight
            .eval_f64(&Env::state(s))
            .map_err(|e| self.eval_err(format!("weight of {}", self.actions[c.action]), s)(e))?;
        if !(0.0..=1.0).contains(&w) {
            return Err(ModelError::WeightRange {
                action: self.actions[c.action].clone(),
                weight: w,
                state: self.render(s),
            });
        }
        Ok(w)
    }

    /// The enabled command with the largest weight, or `None` at a deadlock.
    pub fn select(
        &self,
        s: &[i64],
        scratch: &mut Vec<CommandId>,
    ) -> Result<Option<CommandId>, ModelError> {
        self.enabled_commands(s, scratch)?;
        match scratch.len() {
            0 => return Ok(None),
            1 => {
                self.weight(s, scratch[0])?;
                return Ok(Some(scratch[0]));
            }
            _ => {}
        }
        let mut weights: Vec<f64> = Vec::with_capacity(scratch.len());
        for (k, &cmd) in scratch.iter().enumerate() {
            let action = self.commands[cmd.0].action;
            if scratch[..k]
                .iter()
                .any(|&o| self.commands[o.0].action == action)
            {
                return Err(ModelError::DuplicateAction {
                    action: self.actions[action].clone(),
                    state: self.render(s),
                });
            }
            let w = self.weight(s, cmd)?;
            // w must separate every pair of enabled actions, not only the maximum
            if let Some(j) = weights.iter().position(|&x| x == w) {
                return Err(ModelError::WeightTie {
                    first: self.action_of(scratch[j]).to_string(),
                    second: self.actions[action].clone(),
                    weight: w,
                    state: self.render(s),
                });
            }
            weights.push(w);
        }
        let best = (0..weights.len())
            .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
            .map(|k| scratch[k]);
        Ok(best)
    }

    /// a_{s,w}: the unique enabled action of maximal weight.
    pub fn select_action(&self, s: &Valuation) -> Result<CommandId, ModelError> {
        self.select(&s.0, &mut Vec::new())?
            .ok_or_else(|| ModelError::NoAction {
                state: self.render(&s.0),
            })
    }

    /// Non-degenerate interval constants read by `cmd`'s updates.
    pub fn corner_intervals(&self, cmd: CommandId) -> &[usize] {
        &self.commands[cmd.0].corner_intervals
    }

    pub fn corner_count(&self, cmd: CommandId) -> usize {
        1 << self.commands[cmd.0].corner_intervals.len()
    }

    pub fn interval_name(&self, idx: usize) -> &str {
        &self.model.intervals[idx].name.name
    }

    /// Interval values for corner `mask` of `cmd`: bit `i` selects the upper
    /// endpoint of the command's `i`-th interval; all others sit at `lo`.
    pub fn corner_values(&self, cmd: CommandId, mask: usize, out: &mut Vec<i64>) {
        out.clear();
        out.extend(self.intervals.iter().map(|i| i.0));
        for (bit, &iv) in self.commands[cmd.0].corner_intervals.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                out[iv] = self.intervals[iv].1;
            }
        }
    }

    pub fn outcome_count(&self, cmd: CommandId) -> usize {
        self.commands[cmd.0].outcomes.len()
    }

    pub fn outcome_prob(&self, cmd: CommandId, outcome: usize) -> &Rational {
        &self.commands[cmd.0].outcomes[outcome].prob
    }

    pub fn outcome_prob_f64(&self, cmd: CommandId, outcome: usize) -> f64 {
        rational_to_f64(&self.commands[cmd.0].outcomes[outcome].prob)
    }

    /// Applies every update of one outcome simultaneously: right-hand sides
    /// read `s`, results go to `out`.
    pub fn apply_outcome(
        &self,
        s: &[i64],
        cmd: CommandId,
        outcome: usize,
        corner: &[i64],
        out: &mut Vec<i64>,
    ) -> Result<(), ModelError> {
        out.clear();
        out.extend_from_slice(s);
        let env = Env {
            cur: s,
            next: None,
            corner,
        };
        let c = &self.commands[cmd.0];
        for u in &c.outcomes[outcome].updates {
            let value = self.updated_value(s, u, &env, self.actions[c.action].as_str())?;
            out[u.var.0] = value;
        }
        Ok(())
    }

    fn updated_value(
        &self,
        s: &[i64],
        u: &UpdateOp,
        env: &Env<'_>,
        action: &str,
    ) -> Result<i64, ModelError> {
        let amount = u.amount.eval_int(env).map_err(|e| {
            self.eval_err(format!("update of {} in {action}", self.var_name(u.var)), s)(e)
        })?;
        let old = s[u.var.0];
        let value = match u.kind {
            UpdateKind::Assign => Some(amount),
            UpdateKind::Add => old.checked_add(amount),
            UpdateKind::Sub => old.checked_sub(amount),
        };
        let (lo, hi) = self.domains[u.var.0];
        match value {
            Some(v) if (lo..=hi).contains(&v) => Ok(v),
            _ => Err(ModelError::DomainViolation {
                variable: self.var_name(u.var).to_string(),
                value: value.unwrap_or(if amount < 0 { i64::MIN } else { i64::MAX }),
                lo,
                hi,
                action: action.to_string(),
                state: self.render(s),
            }),
        }
    }

    /// s[v:=x] or s[v±x] for a single update.
    pub fn apply_update(&self, s: &Valuation, u: &UpdateOp) -> Result<Valuation, ModelError> {
        let corner: Vec<i64> = self.intervals.iter().map(|i| i.0).collect();
        let env = Env {
            cur: &s.0,
            next: None,
            corner: &corner,
        };
        let mut out = s.clone();
        out.0[u.var.0] = self.updated_value(&s.0, u, &env, "update")?;
        Ok(out)
    }

    /// T(s, a) under the given corner, with equal successors merged
    /// (first-occurrence order).
    pub fn outcome_distribution(
        &self,
        s: &Valuation,
        cmd: CommandId,
        corner_mask: usize,
    ) -> Result<Vec<Successor>, ModelError> {
        let mut corner = Vec::new();
        self.corner_values(cmd, corner_mask, &mut corner);
        let mut buf = Vec::new();
        let mut out: Vec<Successor> = Vec::new();
        for (k, o) in self.commands[cmd.0].outcomes.iter().enumerate() {
            self.apply_outcome(&s.0, cmd, k, &corner, &mut buf)?;
            match out.iter_mut().find(|x| x.state.0 == buf) {
                Some(x) => x.prob += &o.prob,
                None => out.push(Successor {
                    prob: o.prob.clone(),
                    state: Valuation(buf.clone()),
                    outcome: k,
                }),
            }
        }
        Ok(out)
    }

    pub fn label_names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|(n, _)| n.as_str())
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|(n, _)| n == name)
    }

    pub fn eval_label(&self, idx: usize, s: &[i64]) -> Result<bool, ModelError> {
        let (name, e) = &self.labels[idx];
        e.eval_bool(&Env::state(s))
            .map_err(|err| self.eval_err(format!("label {name}"), s)(err))
    }

    /// Outcome category of an absorbing state: the first of
    /// `success, emergency, timeout, missed` that holds, else the first other
    /// label that holds.
    pub fn classify(&self, s: &[i64]) -> Result<Option<&str>, ModelError> {
        for cat in OUTCOME_CATEGORIES {
            if let Some(i) = self.label_index(cat) {
                if self.eval_label(i, s)? {
                    return Ok(Some(cat));
                }
            }
        }
        for i in 0..self.labels.len() {
            if !OUTCOME_CATEGORIES.contains(&self.labels[i].0.as_str()) && self.eval_label(i, s)? {
                return Ok(Some(&self.labels[i].0));
            }
        }
        Ok(None)
    }

    pub fn reward_names(&self) -> impl Iterator<Item = &str> {
        self.rewards.iter().map(|(n, _)| n.as_str())
    }

    pub fn reward_index(&self, name: &str) -> Option<usize> {
        self.rewards.iter().position(|(n, _)| n == name)
    }

    /// Reward earned by the transition `s --cmd--> next`.
    pub fn transition_reward(
        &self,
        reward: usize,
        s: &[i64],
        cmd: CommandId,
        next: &[i64],
    ) -> Result<f64, ModelError> {
        let (name, items) = &self.rewards[reward];
        let action = self.commands[cmd.0].action;
        let env = Env {
            cur: s,
            next: Some(next),
            corner: &[],
        };
        let mut total = 0.0;
        for item in items {
            if item.action.is_some_and(|a| a != action) {
                continue;
            }
            let v = item
                .expr
                .eval_f64(&env)
                .map_err(|e| self.eval_err(format!("reward {name}"), s)(e))?;
            if v < 0.0 {
                return Err(ModelError::NegativeReward {
                    reward: name.clone(),
                    value: v,
                    state: self.render(s),
                });
            }
            total += v;
        }
        Ok(total)
    }

    /// Names of non-degenerate interval constants read by any command.
    pub fn corner_interval_names(&self) -> Vec<String> {
        let set: BTreeSet<usize> = self
            .commands
            .iter()
            .flat_map(|c| c.corner_intervals.iter().copied())
            .collect();
        set.into_iter()
            .map(|i| self.interval_name(i).to_string())
            .collect()
    }
}
