use super::diagnostic::{codes, Diagnostic};
use super::lexer::{lex, Tok, Token};
use crate::model::{
    BinOp, Bound, Command, ConstDecl, Expr, Func, Ident, IntervalDecl, LabelDecl, Outcome,
    RewardDecl, Span, Update, UpdateKind, VariableDecl,
};
use crate::scalar::parse_rational;

const KEYWORDS: [&str; 11] = [
    "const", "interval", "var", "init", "label", "reward", "weight", "true", "false", "min", "max",
];

/// One top-level statement, in source order.
#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Const(ConstDecl),
    Interval(IntervalDecl),
    Var(VariableDecl),
    Init(Expr, Span),
    Label(LabelDecl),
    Reward(RewardDecl),
    Command(Command),
}

/// Parsed model text: the statements with their source locations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSource {
    pub text: String,
    pub items: Vec<Item>,
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// Parses model text. Fails with every syntax error found; statements after
/// an error are still checked (recovery skips to the next `;`).
pub fn parse_model(text: &str) -> Result<ModelSource, Vec<Diagnostic>> {
    let (toks, mut diags) = lex(text);
    let mut p = Parser { toks, pos: 0 };
    let mut items = Vec::new();
    while p.peek() != &Tok::Eof {
        match p.statement() {
            Ok(item) => items.push(item),
            Err(d) => {
                diags.push(d);
                p.recover();
            }
        }
    }
    if diags.is_empty() && !items.iter().any(|i| matches!(i, Item::Var(_))) {
        diags.push(Diagnostic::error(
            Span::new(1, 1),
            codes::NO_VARS,
            "no variables declared",
        ));
    }
    if diags.is_empty() {
        Ok(ModelSource {
            text: text.to_string(),
            items,
        })
    } else {
        Err(diags)
    }
}

/// Parses a standalone expression (used by tools and tests).
pub fn parse_expr(text: &str) -> Result<Expr, Vec<Diagnostic>> {
    let (toks, diags) = lex(text);
    if !diags.is_empty() {
        return Err(diags);
    }
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr().map_err(|d| vec![d])?;
    if p.peek() != &Tok::Eof {
        return Err(vec![p.unexpected("end of expression")]);
    }
    Ok(e)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        Diagnostic::error(
            self.span(),
            codes::SYNTAX,
            format!("expected {wanted}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> PResult<Span> {
        if self.peek() == &tok {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn recover(&mut self) {
        while !matches!(self.peek(), Tok::Semi | Tok::Eof) {
            self.bump();
        }
        self.eat(&Tok::Semi);
    }

    fn ident(&mut self, what: &str) -> PResult<Ident> {
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                let span = self.bump().span;
                Ok(Ident::at(name, span))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let span = self.span();
        let negative = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Int(text) => {
                self.bump();
                let text = if negative { format!("-{text}") } else { text };
                text.parse().map_err(|_| {
                    Diagnostic::error(
                        span,
                        codes::SYNTAX,
                        format!("integer `{text}` out of range"),
                    )
                })
            }
            _ => Err(self.unexpected("an integer")),
        }
    }

    fn range(&mut self) -> PResult<(i64, i64)> {
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.signed_int()?;
        self.expect(Tok::DotDot, "`..`")?;
        let hi = self.signed_int()?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok((lo, hi))
    }

    fn statement(&mut self) -> PResult<Item> {
        let span = self.span();
        let item = match self.peek().clone() {
            Tok::LBracket => return self.command(),
            Tok::Ident(kw) if kw == "const" => {
                self.bump();
                if self.is_keyword("interval") {
                    self.bump();
                    let name = self.ident("an interval constant name")?;
                    self.expect(Tok::Eq, "`=`")?;
                    let (lo, hi) = self.range()?;
                    Item::Interval(IntervalDecl { name, lo, hi })
                } else {
                    let name = self.ident("a constant name")?;
                    self.expect(Tok::Eq, "`=`")?;
                    let value = self.signed_int()?;
                    Item::Const(ConstDecl { name, value })
                }
            }
            Tok::Ident(kw) if kw == "var" => {
                self.bump();
                let name = self.ident("a variable name")?;
                self.expect(Tok::Colon, "`:`")?;
                let (lo, hi) = self.range()?;
                let init = if self.is_keyword("init") {
                    self.bump();
                    Some(self.signed_int()?)
                } else {
                    None
                };
                Item::Var(VariableDecl { name, lo, hi, init })
            }
            Tok::Ident(kw) if kw == "init" => {
                self.bump();
                Item::Init(self.expr()?, span)
            }
            Tok::Ident(kw) if kw == "label" => {
                self.bump();
                let name = self.ident("a label name")?;
                self.expect(Tok::Eq, "`=`")?;
                Item::Label(LabelDecl {
                    name,
                    expr: self.expr()?,
                })
            }
            Tok::Ident(kw) if kw == "reward" => {
                self.bump();
                let name = self.ident("a reward name")?;
                self.expect(Tok::Eq, "`=`")?;
                let action = if self.eat(&Tok::LBracket) {
                    let a = self.ident("an action name")?;
                    self.expect(Tok::RBracket, "`]`")?;
                    Some(a)
                } else {
                    None
                };
                Item::Reward(RewardDecl {
                    name,
                    action,
                    expr: self.expr()?,
                })
            }
            _ => return Err(self.unexpected("a declaration or `[`")),
        };
        self.expect(Tok::Semi, "`;`")?;
        Ok(item)
    }

    fn command(&mut self) -> PResult<Item> {
        let span = self.expect(Tok::LBracket, "`[`")?;
        let action = self.ident("an action name")?;
        self.expect(Tok::RBracket, "`]`")?;
        let guard = self.expr()?;
        let weight = if self.is_keyword("weight") {
            self.bump();
            self.expr()?
        } else {
            Expr::Int(1)
        };
        self.expect(Tok::Arrow, "`->`")?;
        let mut outcomes = vec![self.outcome()?];
        while self.eat(&Tok::Plus) {
            outcomes.push(self.outcome()?);
        }
        self.expect(Tok::Semi, "`;`")?;
        Ok(Item::Command(Command {
            action,
            guard,
            weight,
            outcomes,
            span,
        }))
    }

    fn number_text(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Int(t) | Tok::Dec(t) => {
                self.bump();
                Ok(t)
            }
            _ => Err(self.unexpected("a probability")),
        }
    }

    fn outcome(&mut self) -> PResult<Outcome> {
        let span = self.span();
        let mut text = self.number_text()?;
        if self.eat(&Tok::Slash) {
            text = format!("{text}/{}", self.number_text()?);
        }
        let prob = parse_rational(&text).ok_or_else(|| {
            Diagnostic::error(span, codes::SYNTAX, format!("invalid probability `{text}`"))
        })?;
        self.expect(Tok::Colon, "`:`")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut updates = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                let var = self.ident("a variable name")?;
                let kind = match self.bump().tok {
                    Tok::Assign => UpdateKind::Assign,
                    Tok::PlusEq => UpdateKind::Add,
                    Tok::MinusEq => UpdateKind::Sub,
                    _ => {
                        self.pos -= 1;
                        return Err(self.unexpected("`:=`, `+=` or `-=`"));
                    }
                };
                updates.push(Update {
                    var,
                    kind,
                    amount: self.expr()?,
                });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(Outcome { prob, updates })
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let cond = self.or()?;
        if self.eat(&Tok::Question) {
            let a = self.expr()?;
            self.expect(Tok::Colon, "`:`")?;
            let b = self.expr()?;
            return Ok(Expr::Ite(Box::new(cond), Box::new(a), Box::new(b)));
        }
        Ok(cond)
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Or) {
            lhs = Expr::binary(BinOp::Or, lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut lhs = self.cmp()?;
        while self.eat(&Tok::And) {
            lhs = Expr::binary(BinOp::And, lhs, self.cmp()?);
        }
        Ok(lhs)
    }

    fn cmp(&mut self) -> PResult<Expr> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add()?;
        if matches!(
            self.peek(),
            Tok::Eq | Tok::Ne | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge
        ) {
            return Err(Diagnostic::error(
                self.span(),
                codes::SYNTAX,
                "comparisons do not chain; add parentheses",
            ));
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.mul()?);
        }
    }

    fn mul(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        match self.peek() {
            Tok::Minus => {
                if matches!(self.peek_at(1), Tok::Int(_)) {
                    return Ok(Expr::Int(self.signed_int()?));
                }
                let literal = matches!(self.peek_at(1), Tok::Dec(_));
                self.bump();
                match self.unary()? {
                    Expr::Dec(d) if literal => Ok(Expr::Dec(-d)),
                    inner => Ok(Expr::Neg(Box::new(inner))),
                }
            }
            Tok::Bang => {
                self.bump();
                Ok(Expr::Not(Box::new(self.unary()?)))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(_) => Ok(Expr::Int(self.signed_int()?)),
            Tok::Dec(text) => {
                self.bump();
                let r = parse_rational(&text).ok_or_else(|| {
                    Diagnostic::error(span, codes::SYNTAX, format!("invalid number `{text}`"))
                })?;
                Ok(Expr::Dec(r))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "true" || name == "false" => {
                self.bump();
                Ok(Expr::Bool(name == "true"))
            }
            Tok::Ident(name) if name == "min" || name == "max" => {
                self.bump();
                let f = if name == "min" { Func::Min } else { Func::Max };
                self.expect(Tok::LParen, "`(`")?;
                let a = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::Call(f, Box::new(a), Box::new(b)))
            }
            Tok::Ident(_) => {
                let id = self.ident("an expression")?;
                if self.eat(&Tok::Prime) {
                    return Ok(Expr::Next(id));
                }
                if self.peek() == &Tok::Dot {
                    self.bump();
                    let bound = match self.peek() {
                        Tok::Ident(s) if s == "lo" => Bound::Lo,
                        Tok::Ident(s) if s == "hi" => Bound::Hi,
                        _ => return Err(self.unexpected("`lo` or `hi`")),
                    };
                    self.bump();
                    return Ok(Expr::Endpoint(id, bound));
                }
                Ok(Expr::Name(id))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    #[test]
    fn minimal_model() {
        let src =
            parse_model("var b : [0..10] init 10;\n[use] b > 0 weight 1 -> 1:(b-=1);").unwrap();
        assert_eq!(src.items.len(), 2);
        let Item::Var(v) = &src.items[0] else {
            panic!()
        };
        assert_eq!((v.lo, v.hi, v.init), (0, 10, Some(10)));
        let Item::Command(c) = &src.items[1] else {
            panic!()
        };
        assert_eq!(c.action.name, "use");
        assert_eq!(c.outcomes[0].updates[0].kind, UpdateKind::Sub);
        assert_eq!((c.span.line, c.span.col), (2, 1));
    }

    #[test]
    fn empty_input_has_no_variables() {
        let d = parse_model("").unwrap_err();
        assert_eq!(d[0].code, codes::NO_VARS);
        assert_eq!(d[0].message, "no variables declared");
        let d = parse_model("  // only a comment\n").unwrap_err();
        assert_eq!(d[0].code, codes::NO_VARS);
    }

    #[test]
    fn precedence_and_ternary() {
        let e = parse_expr("a + b * c = 3 & !d | e ? 1 : 2").unwrap();
        let Expr::Ite(c, _, _) = e else { panic!() };
        let Expr::Binary(BinOp::Or, l, _) = *c else {
            panic!()
        };
        let Expr::Binary(BinOp::And, cmp, _) = *l else {
            panic!()
        };
        let Expr::Binary(BinOp::Eq, sum, _) = *cmp else {
            panic!()
        };
        let Expr::Binary(BinOp::Add, _, prod) = *sum else {
            panic!()
        };
        assert!(matches!(*prod, Expr::Binary(BinOp::Mul, _, _)));
    }

    #[test]
    fn negative_literals_and_endpoints() {
        assert_eq!(parse_expr("-3").unwrap(), Expr::Int(-3));
        assert_eq!(
            parse_expr("-(3)").unwrap(),
            Expr::Neg(Box::new(Expr::Int(3)))
        );
        assert_eq!(
            parse_expr("T.hi").unwrap(),
            Expr::Endpoint(Ident::new("T"), Bound::Hi)
        );
        assert_eq!(parse_expr("x'").unwrap(), Expr::Next(Ident::new("x")));
    }

    #[test]
    fn fraction_probabilities() {
        let src =
            parse_model("var x : [0..2] init 0; [a] true -> 1/3:(x:=1) + 2/3:(x:=2);").unwrap();
        let Item::Command(c) = &src.items[1] else {
            panic!()
        };
        assert_eq!(c.outcomes[0].prob, Rational::new(1.into(), 3.into()));
        assert_eq!(c.weight, Expr::Int(1));
    }

    #[test]
    fn syntax_errors_are_located_and_collected() {
        let d =
            parse_model("var x : [0..2] init 0;\nvar y [0..1];\n[a] x = = 1 -> 1:();").unwrap_err();
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].line, d[0].col), (2, 7));
        assert_eq!(d[1].line, 3);
        assert!(d.iter().all(|d| d.code == codes::SYNTAX));
    }

    #[test]
    fn chained_comparison_rejected() {
        assert!(parse_expr("1 < x < 3").is_err());
    }

    #[test]
    fn parsing_is_deterministic() {
        let text = "var x : [0..2] init 0; [a] x < 2 weight 0.5 -> 0.5:(x+=1) + 0.5:();";
        assert_eq!(parse_model(text), parse_model(text));
    }
}
