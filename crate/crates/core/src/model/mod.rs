//! Autonomous probabilistic finite-state machines.
//!
//! A [`Model`] is the tuple of variables with finite integer domains, a set
//! of initial valuations, guarded probabilistic commands, and a weight on
//! every command. At each state the enabled command with the largest weight
//! is executed, which turns the machine into a discrete-time Markov chain.
//! [`Machine`] is the executable (compiled) form used by the builder and the
//! path sampler.

mod eval;
mod machine;

use std::fmt;

pub use eval::{CompiledExpr, EvalError, Val};
pub use machine::{
    CommandId, Machine, ModelError, Successor, UpdateOp, VarId, MAX_CORNER_INTERVALS,
    OUTCOME_CATEGORIES,
};

use crate::scalar::Rational;

/// A source position. Spans never take part in structural equality.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

// all spans are equal, so they must hash alike
impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A name occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            span: Span::default(),
        }
    }

    pub fn at(name: impl Into<String>, span: Span) -> Self {
        Self {
            name: name.into(),
            span,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bound {
    Lo,
    Hi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&",
            BinOp::Or => "|",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 5,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

/// Expression over variables and constants.
///
/// Comparisons yield booleans, which coerce to `0`/`1` in arithmetic.
/// `Dec` is a non-integer decimal literal (always a terminating decimal).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Dec(Rational),
    Bool(bool),
    Name(Ident),
    /// `NAME.lo` / `NAME.hi` of an interval constant.
    Endpoint(Ident, Bound),
    /// `x'`: value of a variable after the transition (reward expressions only).
    Next(Ident),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn name(name: &str) -> Self {
        Expr::Name(Ident::new(name))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Visits every name occurrence (including endpoints and primed names).
    pub fn walk_names<'a>(&'a self, f: &mut dyn FnMut(&'a Ident, NameUse)) {
        match self {
            Expr::Int(_) | Expr::Dec(_) | Expr::Bool(_) => {}
            Expr::Name(id) => f(id, NameUse::Plain),
            Expr::Endpoint(id, _) => f(id, NameUse::Endpoint),
            Expr::Next(id) => f(id, NameUse::Next),
            Expr::Neg(e) | Expr::Not(e) => e.walk_names(f),
            Expr::Binary(_, l, r) | Expr::Call(_, l, r) => {
                l.walk_names(f);
                r.walk_names(f);
            }
            Expr::Ite(c, a, b) => {
                c.walk_names(f);
                a.walk_names(f);
                b.walk_names(f);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NameUse {
    Plain,
    Endpoint,
    Next,
}

/// `v := e`, `v += e` or `v -= e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateKind {
    Assign,
    Add,
    Sub,
}

impl UpdateKind {
    pub fn symbol(self) -> &'static str {
        match self {
            UpdateKind::Assign => ":=",
            UpdateKind::Add => "+=",
            UpdateKind::Sub => "-=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub var: Ident,
    pub kind: UpdateKind,
    pub amount: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub prob: Rational,
    pub updates: Vec<Update>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub action: Ident,
    pub guard: Expr,
    pub weight: Expr,
    pub outcomes: Vec<Outcome>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableDecl {
    pub name: Ident,
    pub lo: i64,
    pub hi: i64,
    pub init: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstDecl {
    pub name: Ident,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalDecl {
    pub name: Ident,
    pub lo: i64,
    pub hi: i64,
}

impl IntervalDecl {
    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDecl {
    pub name: Ident,
    pub expr: Expr,
}

/// One reward item. Items sharing a name add up.
///
/// With an action the item is earned when that action is taken; without one
/// it is earned on every transition. Expressions may read `x'`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardDecl {
    pub name: Ident,
    pub action: Option<Ident>,
    pub expr: Expr,
}

/// A validated model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Model {
    pub constants: Vec<ConstDecl>,
    pub intervals: Vec<IntervalDecl>,
    pub variables: Vec<VariableDecl>,
    /// Initial-state constraint; when absent every variable has an `init` value.
    pub init: Option<Expr>,
    pub labels: Vec<LabelDecl>,
    pub rewards: Vec<RewardDecl>,
    pub commands: Vec<Command>,
}

impl Model {
    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name.name == name)
    }

    pub fn label(&self, name: &str) -> Option<&LabelDecl> {
        self.labels.iter().find(|l| l.name.name == name)
    }

    pub fn interval(&self, name: &str) -> Option<&IntervalDecl> {
        self.intervals.iter().find(|i| i.name.name == name)
    }

    /// Action names in order of first appearance.
    pub fn actions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.commands {
            if !out.contains(&c.action.name.as_str()) {
                out.push(&c.action.name);
            }
        }
        out
    }

    pub fn has_nondegenerate_intervals(&self) -> bool {
        self.intervals.iter().any(|i| !i.is_degenerate())
    }
}

/// Total assignment of values to the model's variables, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Valuation(pub Vec<i64>);

impl Valuation {
    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn get(&self, var: VarId) -> i64 {
        self.0[var.0]
    }

    /// `name=value` pairs, comma separated.
    pub fn display<'a>(&'a self, model: &'a Model) -> impl fmt::Display + 'a {
        DisplayValuation {
            names: model
                .variables
                .iter()
                .map(|v| v.name.name.as_str())
                .collect(),
            values: &self.0,
        }
    }
}

pub(crate) struct DisplayValuation<'a> {
    pub names: Vec<&'a str>,
    pub values: &'a [i64],
}

impl fmt::Display for DisplayValuation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (n, v)) in self.names.iter().zip(self.values).enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}={v}")?;
        }
        Ok(())
    }
}
