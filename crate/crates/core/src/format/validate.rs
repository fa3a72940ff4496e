use std::collections::{BTreeSet, HashMap};

use num_traits::{One, Zero};

use super::diagnostic::{codes, Diagnostic};
use super::parser::{Item, ModelSource};
use crate::model::{BinOp, Expr, Ident, Model, NameUse, Span, MAX_CORNER_INTERVALS};
use crate::scalar::{parse_rational, Rational};

/// Label names the builder attaches on its own.
pub const BUILTIN_LABELS: [&str; 3] = ["deadlock", "absorbing", "init"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Var,
    Const,
    Interval { degenerate: bool },
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Int,
    Real,
    Bool,
}

impl Ty {
    /// Booleans coerce to 0/1, so every type is usable as a number.
    fn numeric(self) -> bool {
        true
    }

    fn integral(self) -> bool {
        self != Ty::Real
    }
}

#[derive(Debug, Clone, Copy)]
struct Ctx {
    corners: bool,
    next: bool,
}

const PLAIN: Ctx = Ctx {
    corners: false,
    next: false,
};

struct Validator {
    names: HashMap<String, Kind>,
    diags: Vec<Diagnostic>,
}

/// Resolves names and checks the static well-formedness rules; collects
/// every violation rather than stopping at the first.
pub fn validate(src: &ModelSource) -> Result<Model, Vec<Diagnostic>> {
    let mut v = Validator {
        names: HashMap::new(),
        diags: Vec::new(),
    };
    let mut model = Model::default();

    for item in &src.items {
        let (id, kind) = match item {
            Item::Const(c) => (&c.name, Kind::Const),
            Item::Interval(i) => (
                &i.name,
                Kind::Interval {
                    degenerate: i.lo == i.hi,
                },
            ),
            Item::Var(x) => (&x.name, Kind::Var),
            Item::Label(l) => (&l.name, Kind::Label),
            _ => continue,
        };
        if kind == Kind::Label && BUILTIN_LABELS.contains(&id.name.as_str()) {
            v.error(
                id.span,
                codes::RESERVED,
                format!("label name `{}` is reserved", id.name),
            );
        }
        if v.names.insert(id.name.clone(), kind).is_some() {
            v.error(
                id.span,
                codes::DUPLICATE,
                format!("`{}` is declared more than once", id.name),
            );
        }
    }

    let mut init_items = 0;
    for item in &src.items {
        match item {
            Item::Const(c) => model.constants.push(c.clone()),
            Item::Interval(i) => {
                if i.lo > i.hi {
                    v.error(
                        i.name.span,
                        codes::INTERVAL,
                        format!(
                            "interval `{}` = [{}..{}] has lo > hi",
                            i.name.name, i.lo, i.hi
                        ),
                    );
                }
                model.intervals.push(i.clone());
            }
            Item::Var(x) => {
                if x.lo > x.hi {
                    v.error(
                        x.name.span,
                        codes::DOMAIN,
                        format!("domain of `{}` is empty: [{}..{}]", x.name.name, x.lo, x.hi),
                    );
                } else if let Some(init) = x.init.filter(|i| !(x.lo..=x.hi).contains(i)) {
                    v.error(
                        x.name.span,
                        codes::DOMAIN,
                        format!(
                            "initial value {init} of `{}` outside [{}..{}]",
                            x.name.name, x.lo, x.hi
                        ),
                    );
                }
                model.variables.push(x.clone());
            }
            Item::Init(e, span) => {
                init_items += 1;
                if init_items > 1 {
                    v.error(*span, codes::INIT, "more than one init constraint");
                }
                v.expect_ty(
                    e,
                    PLAIN,
                    *span,
                    "init constraint",
                    |t| t == Ty::Bool,
                    "a boolean",
                );
                model.init = Some(e.clone());
            }
            Item::Label(l) => {
                v.expect_ty(
                    &l.expr,
                    PLAIN,
                    l.name.span,
                    "label",
                    |t| t == Ty::Bool,
                    "a boolean",
                );
                model.labels.push(l.clone());
            }
            Item::Reward(r) => {
                let ctx = Ctx {
                    corners: false,
                    next: true,
                };
                v.expect_ty(&r.expr, ctx, r.name.span, "reward", Ty::numeric, "a number");
                model.rewards.push(r.clone());
            }
            Item::Command(c) => {
                v.command(c);
                model.commands.push(c.clone());
            }
        }
    }
    if model.init.is_some() {
        for x in &model.variables {
            if x.init.is_some() {
                v.error(
                    x.name.span,
                    codes::INIT,
                    format!(
                        "`{}` has an init value but the model has an init constraint",
                        x.name.name
                    ),
                );
            }
        }
    }
    let actions: BTreeSet<&str> = model
        .commands
        .iter()
        .map(|c| c.action.name.as_str())
        .collect();
    for r in &model.rewards {
        if let Some(a) = &r.action {
            if !actions.contains(a.name.as_str()) {
                v.error(
                    a.span,
                    codes::UNDECLARED,
                    format!("no command has action `{}`", a.name),
                );
            }
        }
    }

    if v.diags.iter().any(Diagnostic::is_error) {
        v.diags.sort_by_key(|d| (d.line, d.col));
        Err(v.diags)
    } else {
        Ok(model)
    }
}

impl Validator {
    fn error(&mut self, span: Span, code: &'static str, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(span, code, msg));
    }

    fn expect_ty(
        &mut self,
        e: &Expr,
        ctx: Ctx,
        fallback: Span,
        what: &str,
        ok: impl Fn(Ty) -> bool,
        wanted: &str,
    ) {
        if let Some(t) = self.ty(e, ctx, fallback) {
            if !ok(t) {
                let span = first_span(e).unwrap_or(fallback);
                self.error(span, codes::TYPE, format!("{what} must be {wanted}"));
            }
        }
    }

    fn command(&mut self, c: &crate::model::Command) {
        let span = c.span;
        let action = &c.action.name;
        self.expect_ty(
            &c.guard,
            PLAIN,
            span,
            &format!("guard of [{action}]"),
            |t| t == Ty::Bool,
            "a boolean",
        );
        self.expect_ty(
            &c.weight,
            PLAIN,
            span,
            &format!("weight of [{action}]"),
            Ty::numeric,
            "a number",
        );

        let eps = parse_rational("0.000000001").expect("literal");
        let mut sum = Rational::zero();
        let mut corners = BTreeSet::new();
        for o in &c.outcomes {
            if o.prob <= Rational::zero() || o.prob > Rational::one() {
                self.error(
                    span,
                    codes::PROB_RANGE,
                    format!("probability {} of [{action}] outside (0, 1]", o.prob),
                );
            }
            sum += &o.prob;
            let mut seen: Vec<&str> = Vec::new();
            for u in &o.updates {
                match self.names.get(&u.var.name) {
                    Some(Kind::Var) => {}
                    Some(_) => self.error(
                        u.var.span,
                        codes::TYPE,
                        format!("`{}` is not a variable and cannot be updated", u.var.name),
                    ),
                    None => self.error(
                        u.var.span,
                        codes::UNDECLARED,
                        format!("undeclared variable `{}`", u.var.name),
                    ),
                }
                if seen.contains(&u.var.name.as_str()) {
                    self.error(
                        u.var.span,
                        codes::DUPLICATE,
                        format!("`{}` updated twice in one outcome", u.var.name),
                    );
                }
                seen.push(&u.var.name);
                let ctx = Ctx {
                    corners: true,
                    next: false,
                };
                let what = format!("update of `{}`", u.var.name);
                self.expect_ty(
                    &u.amount,
                    ctx,
                    u.var.span,
                    &what,
                    Ty::integral,
                    "an integer",
                );
                u.amount.walk_names(&mut |id: &Ident, use_| {
                    if use_ == NameUse::Plain
                        && self.names.get(&id.name) == Some(&Kind::Interval { degenerate: false })
                    {
                        corners.insert(id.name.clone());
                    }
                });
            }
        }
        let diff = sum.clone() - Rational::one();
        if diff > eps || -diff > eps {
            self.error(
                span,
                codes::PROB_SUM,
                format!("outcome probabilities of [{action}] sum to {sum}, not 1"),
            );
        }
        if corners.len() > MAX_CORNER_INTERVALS {
            self.error(
                span,
                codes::CORNERS,
                format!(
                    "[{action}] depends on {} interval constants (limit {MAX_CORNER_INTERVALS})",
                    corners.len()
                ),
            );
        }
    }

    /// Type of `e`, or `None` after reporting an error inside it.
    fn ty(&mut self, e: &Expr, ctx: Ctx, fallback: Span) -> Option<Ty> {
        match e {
            Expr::Int(_) => Some(Ty::Int),
            Expr::Dec(_) => Some(Ty::Real),
            Expr::Bool(_) => Some(Ty::Bool),
            Expr::Name(id) => match self.names.get(&id.name).copied() {
                Some(Kind::Var) | Some(Kind::Const) => Some(Ty::Int),
                Some(Kind::Interval { .. }) if ctx.corners => Some(Ty::Int),
                Some(Kind::Interval { .. }) => {
                    self.error(
                        id.span,
                        codes::INTERVAL_REF,
                        format!(
                            "interval constant `{0}` may only appear in updates; use `{0}.lo` or `{0}.hi`",
                            id.name
                        ),
                    );
                    None
                }
                Some(Kind::Label) => {
                    self.error(
                        id.span,
                        codes::TYPE,
                        format!("label `{}` cannot be used in an expression", id.name),
                    );
                    None
                }
                None => {
                    self.error(
                        id.span,
                        codes::UNDECLARED,
                        format!("undeclared name `{}`", id.name),
                    );
                    None
                }
            },
            Expr::Endpoint(id, _) => match self.names.get(&id.name) {
                Some(Kind::Interval { .. }) => Some(Ty::Int),
                Some(_) => {
                    self.error(
                        id.span,
                        codes::TYPE,
                        format!("`{}` is not an interval constant", id.name),
                    );
                    None
                }
                None => {
                    self.error(
                        id.span,
                        codes::UNDECLARED,
                        format!("undeclared name `{}`", id.name),
                    );
                    None
                }
            },
            Expr::Next(id) => {
                if !ctx.next {
                    self.error(
                        id.span,
                        codes::TYPE,
                        "primed variables are only allowed in rewards",
                    );
                    return None;
                }
                match self.names.get(&id.name) {
                    Some(Kind::Var) => Some(Ty::Int),
                    Some(_) => {
                        self.error(
                            id.span,
                            codes::TYPE,
                            format!("`{}` is not a variable", id.name),
                        );
                        None
                    }
                    None => {
                        self.error(
                            id.span,
                            codes::UNDECLARED,
                            format!("undeclared name `{}`", id.name),
                        );
                        None
                    }
                }
            }
            Expr::Neg(inner) => {
                let t = self.ty(inner, ctx, fallback)?;
                Some(if t == Ty::Real { Ty::Real } else { Ty::Int })
            }
            Expr::Not(inner) => {
                let t = self.ty(inner, ctx, fallback)?;
                self.require(
                    t == Ty::Bool,
                    e,
                    fallback,
                    "operand of `!` must be a boolean",
                )?;
                Some(Ty::Bool)
            }
            Expr::Binary(op, l, r) => {
                let (lt, rt) = (self.ty(l, ctx, fallback), self.ty(r, ctx, fallback));
                let (lt, rt) = (lt?, rt?);
                match op {
                    BinOp::And | BinOp::Or => {
                        self.require(
                            lt == Ty::Bool && rt == Ty::Bool,
                            e,
                            fallback,
                            format!("operands of `{}` must be booleans", op.symbol()),
                        )?;
                        Some(Ty::Bool)
                    }
                    BinOp::Eq | BinOp::Ne => {
                        let both_bool = lt == Ty::Bool && rt == Ty::Bool;
                        let both_num = lt != Ty::Bool && rt != Ty::Bool;
                        self.require(
                            both_bool || both_num,
                            e,
                            fallback,
                            format!(
                                "cannot compare a boolean with a number using `{}`",
                                op.symbol()
                            ),
                        )?;
                        Some(Ty::Bool)
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => Some(Ty::Bool),
                    BinOp::Mod => {
                        self.require(
                            lt.integral() && rt.integral(),
                            e,
                            fallback,
                            "operands of `%` must be integers",
                        )?;
                        Some(Ty::Int)
                    }
                    BinOp::Div => Some(Ty::Real),
                    BinOp::Add | BinOp::Sub | BinOp::Mul => {
                        Some(if lt.integral() && rt.integral() {
                            Ty::Int
                        } else {
                            Ty::Real
                        })
                    }
                }
            }
            Expr::Ite(c, a, b) => {
                let ct = self.ty(c, ctx, fallback);
                let (at, bt) = (self.ty(a, ctx, fallback), self.ty(b, ctx, fallback));
                let (ct, at, bt) = (ct?, at?, bt?);
                self.require(
                    ct == Ty::Bool,
                    e,
                    fallback,
                    "condition of `?:` must be a boolean",
                )?;
                if at == Ty::Bool || bt == Ty::Bool {
                    self.require(
                        at == bt,
                        e,
                        fallback,
                        "branches of `?:` must have the same type",
                    )?;
                    return Some(Ty::Bool);
                }
                Some(if at == Ty::Int && bt == Ty::Int {
                    Ty::Int
                } else {
                    Ty::Real
                })
            }
            Expr::Call(_, a, b) => {
                let (at, bt) = (self.ty(a, ctx, fallback), self.ty(b, ctx, fallback));
                let (at, bt) = (at?, bt?);
                Some(if at.integral() && bt.integral() {
                    Ty::Int
                } else {
                    Ty::Real
                })
            }
        }
    }

    fn require(
        &mut self,
        cond: bool,
        e: &Expr,
        fallback: Span,
        msg: impl Into<String>,
    ) -> Option<()> {
        if cond {
            Some(())
        } else {
            self.error(first_span(e).unwrap_or(fallback), codes::TYPE, msg);
            None
        }
    }
}

/// Location of the first name inside `e`, if any.
fn first_span(e: &Expr) -> Option<Span> {
    let mut out = None;
    e.walk_names(&mut |id, _| {
        if out.is_none() && id.span.line > 0 {
            out = Some(id.span);
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{load_model, parse_model};

    fn errors(text: &str) -> Vec<Diagnostic> {
        let src = parse_model(text).expect("parses");
        validate(&src).expect_err("should be invalid")
    }

    fn codes_of(text: &str) -> Vec<&'static str> {
        errors(text).iter().map(|d| d.code).collect()
    }

    #[test]
    fn undeclared_name_is_located() {
        let d = errors("var x : [0..1] init 0;\n[a] y = 1 -> 1:();");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, codes::UNDECLARED);
        assert_eq!((d[0].line, d[0].col), (2, 5));
    }

    #[test]
    fn probability_sum() {
        assert_eq!(
            codes_of("var x : [0..1] init 0; [a] true -> 0.5:(x:=1) + 0.4:();"),
            vec![codes::PROB_SUM]
        );
        // within the 1e-9 tolerance
        assert!(load_model(
            "var x : [0..1] init 0; [a] true -> 0.3333333333:(x:=1) + 0.6666666667:();"
        )
        .is_ok());
        assert_eq!(
            codes_of("var x : [0..1] init 0; [a] true -> 1.5:(x:=1);"),
            vec![codes::PROB_RANGE, codes::PROB_SUM]
        );
    }

    #[test]
    fn interval_bounds() {
        assert_eq!(
            codes_of("const interval T_ap = [5..3]; var x : [0..1] init 0; [a] true -> 1:();"),
            vec![codes::INTERVAL]
        );
    }

    #[test]
    fn interval_constants_stay_out_of_guards_and_weights() {
        let d = codes_of(
            "const interval T = [3..4]; var t : [0..9] init 0;
             [a] t < T weight 1 -> 1:(t+=T);",
        );
        assert_eq!(d, vec![codes::INTERVAL_REF]);
        assert!(load_model(
            "const interval T = [3..4]; var t : [0..9] init 0;
             [a] t + T.hi <= 9 weight 1 -> 1:(t+=T);"
        )
        .is_ok());
    }

    #[test]
    fn collects_every_error() {
        let d = codes_of(
            "var x : [3..1] init 0; var x : [0..1] init 5; label deadlock = true;
             [a] x -> 1:(x:=0.5, z:=1);",
        );
        assert!(d.contains(&codes::DOMAIN));
        assert!(d.contains(&codes::DUPLICATE));
        assert!(d.contains(&codes::RESERVED));
        assert!(d.contains(&codes::TYPE));
        assert!(d.contains(&codes::UNDECLARED));
        assert!(d.len() >= 6, "{d:?}");
    }

    #[test]
    fn types() {
        assert_eq!(
            codes_of("var x : [0..1] init 0; [a] x + 1 -> 1:();"),
            vec![codes::TYPE]
        );
        assert_eq!(
            codes_of("var x : [0..1] init 0; [a] true -> 1:(x:=x/2);"),
            vec![codes::TYPE]
        );
        assert_eq!(
            codes_of("var x : [0..1] init 0; [a] x' = 1 -> 1:();"),
            vec![codes::TYPE]
        );
        assert!(
            load_model("var x : [0..1] init 0; [a] true weight 1 - (x > 0) -> 1:(x:=x = 0);")
                .is_ok()
        );
    }

    #[test]
    fn init_conflicts() {
        assert_eq!(
            codes_of("var x : [0..1] init 0; init x = 0; [a] true -> 1:();"),
            vec![codes::INIT]
        );
    }

    #[test]
    fn reward_actions_must_exist() {
        assert_eq!(
            codes_of("var x : [0..1] init 0; reward r = [b] 1; [a] true -> 1:();"),
            vec![codes::UNDECLARED]
        );
    }

    #[test]
    fn corner_limit() {
        let mut text = String::from("var t : [0..1000] init 0;\n");
        let mut sum = Vec::new();
        for i in 0..9 {
            text.push_str(&format!("const interval C{i} = [0..1];\n"));
            sum.push(format!("C{i}"));
        }
        text.push_str(&format!("[a] t < 10 -> 1:(t+={});", sum.join(" + ")));
        assert_eq!(codes_of(&text), vec![codes::CORNERS]);
    }
}
