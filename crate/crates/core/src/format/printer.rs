use std::fmt::Write;

use crate::model::{Bound, Expr, Model, Outcome};
use crate::scalar::{format_decimal, format_probability, Rational};

const TERNARY: u8 = 0;
const UNARY: u8 = 6;
const ATOM: u8 = 7;

/// Canonical text of a model. Parsing the output yields a structurally equal
/// model.
pub fn print_model(m: &Model) -> String {
    let mut out = String::new();
    let section = |out: &mut String, lines: Vec<String>| {
        if lines.is_empty() {
            return;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
    };
    section(
        &mut out,
        m.constants
            .iter()
            .map(|c| format!("const {} = {};", c.name.name, c.value))
            .collect(),
    );
    section(
        &mut out,
        m.intervals
            .iter()
            .map(|i| format!("const interval {} = [{}..{}];", i.name.name, i.lo, i.hi))
            .collect(),
    );
    section(
        &mut out,
        m.variables
            .iter()
            .map(|v| match v.init {
                Some(init) => format!("var {} : [{}..{}] init {init};", v.name.name, v.lo, v.hi),
                None => format!("var {} : [{}..{}];", v.name.name, v.lo, v.hi),
            })
            .collect(),
    );
    section(
        &mut out,
        m.init
            .iter()
            .map(|e| format!("init {};", print_expr(e)))
            .collect(),
    );
    section(
        &mut out,
        m.labels
            .iter()
            .map(|l| format!("label {} = {};", l.name.name, print_expr(&l.expr)))
            .collect(),
    );
    section(
        &mut out,
        m.rewards
            .iter()
            .map(|r| match &r.action {
                Some(a) => format!(
                    "reward {} = [{}] {};",
                    r.name.name,
                    a.name,
                    print_expr(&r.expr)
                ),
                None => format!("reward {} = {};", r.name.name, print_expr(&r.expr)),
            })
            .collect(),
    );
    section(
        &mut out,
        m.commands
            .iter()
            .map(|c| {
                let mut line = format!("  [{}] {}", c.action.name, print_expr(&c.guard));
                if c.weight != Expr::Int(1) {
                    let _ = write!(line, " weight {}", print_expr(&c.weight));
                }
                line.push_str(" -> ");
                let outcomes: Vec<String> = c.outcomes.iter().map(print_outcome).collect();
                line.push_str(&outcomes.join(" + "));
                line.push(';');
                line
            })
            .collect(),
    );
    out
}

fn print_outcome(o: &Outcome) -> String {
    let updates: Vec<String> = o
        .updates
        .iter()
        .map(|u| format!("{}{}{}", u.var.name, u.kind.symbol(), print_expr(&u.amount)))
        .collect();
    format!("{}:({})", format_probability(&o.prob), updates.join(", "))
}

/// Expression text with the fewest parentheses that preserve the tree.
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Ite(..) => TERNARY,
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Neg(_) | Expr::Not(_) => UNARY,
        Expr::Int(n) if *n < 0 => UNARY,
        Expr::Dec(d) if *d < Rational::from_integer(0.into()) => UNARY,
        _ => ATOM,
    }
}

fn write_child(s: &mut String, e: &Expr, parens: bool) {
    if parens {
        s.push('(');
        write_expr(s, e);
        s.push(')');
    } else {
        write_expr(s, e);
    }
}

fn write_dec(s: &mut String, d: &Rational) {
    match format_decimal(d) {
        Some(t) if t.contains('.') => s.push_str(&t),
        Some(t) => {
            s.push_str(&t);
            s.push_str(".0");
        }
        None => {
            let _ = write!(s, "({}/{})", d.numer(), d.denom());
        }
    }
}

fn write_expr(s: &mut String, e: &Expr) {
    match e {
        Expr::Int(n) => {
            let _ = write!(s, "{n}");
        }
        Expr::Dec(d) => write_dec(s, d),
        Expr::Bool(b) => s.push_str(if *b { "true" } else { "false" }),
        Expr::Name(id) => s.push_str(&id.name),
        Expr::Endpoint(id, b) => {
            let _ = write!(
                s,
                "{}.{}",
                id.name,
                if *b == Bound::Lo { "lo" } else { "hi" }
            );
        }
        Expr::Next(id) => {
            let _ = write!(s, "{}'", id.name);
        }
        Expr::Neg(inner) => {
            s.push('-');
            // a literal right after `-` would be read back as a signed literal
            let literal = matches!(**inner, Expr::Int(_) | Expr::Dec(_));
            write_child(s, inner, literal || precedence(inner) < UNARY);
        }
        Expr::Not(inner) => {
            s.push('!');
            write_child(s, inner, precedence(inner) < UNARY);
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            let (lp, rp) = (precedence(l), precedence(r));
            let left_parens = if op.is_comparison() { lp <= p } else { lp < p };
            write_child(s, l, left_parens);
            let _ = write!(s, " {} ", op.symbol());
            write_child(s, r, rp <= p);
        }
        Expr::Ite(c, a, b) => {
            write_child(s, c, precedence(c) == TERNARY);
            s.push_str(" ? ");
            write_child(s, a, precedence(a) == TERNARY);
            s.push_str(" : ");
            write_child(s, b, precedence(b) == TERNARY);
        }
        Expr::Call(f, a, b) => {
            let _ = write!(s, "{}({}, {})", f.name(), print_expr(a), print_expr(b));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{load_model, parse_expr};

    fn roundtrip(text: &str) {
        let e = parse_expr(text).unwrap();
        let printed = print_expr(&e);
        assert_eq!(parse_expr(&printed).unwrap(), e, "{text} -> {printed}");
    }

    #[test]
    fn minimal_parentheses() {
        let e = parse_expr("(a + b) * c - (d - e) - f").unwrap();
        assert_eq!(print_expr(&e), "(a + b) * c - (d - e) - f");
        let e = parse_expr("((a & b) | c) & (x = (1 < 2))").unwrap();
        assert_eq!(print_expr(&e), "(a & b | c) & x = (1 < 2)");
        let e = parse_expr("-(3) + -3 - (-x)").unwrap();
        assert_eq!(print_expr(&e), "-(3) + -3 - -x");
    }

    #[test]
    fn expressions_roundtrip() {
        for t in [
            "a ? (b ? 1 : 2) : c ? 3 : 4",
            "(a ? 1 : 2) + 3",
            "-0.5 * -(0.5) + 1.0",
            "!(a & b) | !c",
            "min(x, max(y, T.hi)) % 3",
            "x' - x >= T.lo / 2",
            "1 - (b > 15)",
            "a - (b + c) - (d * e) / (f / g)",
        ] {
            roundtrip(t);
        }
    }

    #[test]
    fn model_roundtrip() {
        let text = "const W = 4;
const interval T = [3..4];
var x : [0..4];
var y : [-2..2];
init x + y = 1;
label done = x = W;
reward steps = 1;
reward time = [a] T.hi;
[a] x < W weight 0.5 -> 1/3:(x+=1, y:=0) + 2/3:(x:=x + T);
[b] x = W -> 1:();";
        let m = load_model(text).unwrap();
        let printed = print_model(&m);
        assert!(printed.contains("  [a] x < W weight 0.5 -> 1/3:(x+=1, y:=0) + 2/3:(x:=x + T);"));
        assert!(printed.contains("  [b] x = W -> 1:();"));
        assert_eq!(load_model(&printed).unwrap(), m);
    }
}
