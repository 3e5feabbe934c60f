use super::lexer::{tokenize, Tok, Token};
use super::{AggKind, BinaryOp, Expr, Function, Literal, SyntaxError, UnaryOp};
use crate::diag::line_col;

/// Position-tracking view over a token stream. The schema DSL drives the same
/// cursor and hands off to [`Cursor::expr`] for embedded expressions.
pub(crate) struct Cursor<'a> {
    toks: &'a [Token],
    pub pos: usize,
}

/// Parser-internal failure: byte offset plus message.
#[derive(Debug, Clone)]
pub(crate) struct PError {
    pub offset: usize,
    pub message: String,
}

pub(crate) type PResult<T> = Result<T, PError>;

impl<'a> Cursor<'a> {
    pub fn new(toks: &'a [Token]) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> &'a Tok {
        &self.toks[self.pos].tok
    }

    pub fn offset(&self) -> usize {
        self.toks[self.pos].start
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn bump(&mut self) -> &'a Token {
        let t = &self.toks[self.pos];
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    pub fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(PError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    pub fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.error(format!("expected {wanted}, found {}", self.peek().describe()))
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: &Tok) -> PResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            self.unexpected(&tok.describe())
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    pub fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.unexpected(what),
        }
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::Plus => BinaryOp::Add,
            Tok::Minus => BinaryOp::Sub,
            Tok::Star => BinaryOp::Mul,
            Tok::Slash => BinaryOp::Div,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Eq => BinaryOp::Eq,
            Tok::Ne => BinaryOp::Ne,
            Tok::Ge => BinaryOp::Ge,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ident(s) if s == "and" => BinaryOp::And,
            Tok::Ident(s) if s == "or" => BinaryOp::Or,
            _ => return None,
        })
    }

    // Precedence climbing; every level is left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            if let Tok::Number(x) = self.peek() {
                let x = *x;
                self.bump();
                return Ok(Expr::Literal(Literal::Number(-x)));
            }
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)));
        }
        if self.eat_keyword("not") {
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(x) => {
                self.bump();
                Ok(Expr::Literal(Literal::Number(x)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Literal(Literal::Text(s)))
            }
            Tok::Date(d) => {
                self.bump();
                Ok(Expr::Literal(Literal::Date(d)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let start = self.offset();
                self.bump();
                match name.as_str() {
                    "true" => return Ok(Expr::Literal(Literal::Bool(true))),
                    "false" => return Ok(Expr::Literal(Literal::Bool(false))),
                    _ => {}
                }
                if self.peek() == &Tok::LParen {
                    return self.call(&name, start);
                }
                if self.peek() == &Tok::Dot {
                    return self.error(format!(
                        "dotted reference `{name}.…` is only valid inside an aggregate"
                    ));
                }
                Ok(Expr::Attr(name))
            }
            _ => self.unexpected("an expression"),
        }
    }

    fn call(&mut self, name: &str, start: usize) -> PResult<Expr> {
        self.expect(&Tok::LParen)?;
        if let Some(kind) = AggKind::from_name(name) {
            let relationship = self.ident("a relationship name")?;
            let attribute = if self.eat(&Tok::Dot) {
                Some(self.ident("an attribute name")?)
            } else {
                None
            };
            self.expect(&Tok::RParen)?;
            return Ok(Expr::Aggregate {
                kind,
                relationship,
                attribute,
            });
        }
        let Some(func) = Function::from_name(name) else {
            return Err(PError {
                offset: start,
                message: format!("unknown function `{name}`"),
            });
        };
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                args.push(self.expr()?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(&Tok::RParen)?;
                break;
            }
        }
        if args.len() != func.arity() {
            return Err(PError {
                offset: start,
                message: format!(
                    "`{}` takes {} argument(s), got {}",
                    func.name(),
                    func.arity(),
                    args.len()
                ),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

/// Parses a standalone expression.
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let to_err = |offset: usize, message: String| {
        let (line, column) = line_col(text, offset);
        SyntaxError {
            offset,
            line,
            column,
            message,
        }
    };
    let toks = tokenize(text).map_err(|e| to_err(e.offset, e.message))?;
    let mut cur = Cursor::new(&toks);
    let expr = cur.expr().map_err(|e| to_err(e.offset, e.message))?;
    if !cur.at_eof() {
        let msg = format!("unexpected {} after expression", cur.peek().describe());
        return Err(to_err(cur.offset(), msg));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_derivation() {
        let e = parse_expr("years_between(dob, today())").unwrap();
        assert_eq!(
            e,
            Expr::Call(
                Function::YearsBetween,
                vec![Expr::attr("dob"), Expr::Call(Function::Today, vec![])]
            )
        );
    }

    #[test]
    fn multiplication_binds_tighter() {
        let e = parse_expr("1+2*3").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinaryOp::Add,
                Expr::num(1.0),
                Expr::binary(BinaryOp::Mul, Expr::num(2.0), Expr::num(3.0))
            )
        );
    }

    #[test]
    fn aggregate_path() {
        // hand-built AST for the grammar rule agg "(" IDENT ["." IDENT] ")"
        let expected = Expr::Aggregate {
            kind: AggKind::Mean,
            relationship: "PLACES".into(),
            attribute: Some("total".into()),
        };
        assert_eq!(parse_expr("mean(PLACES.total)").unwrap(), expected);
        assert_eq!(
            parse_expr("count(PLACES)").unwrap(),
            Expr::Aggregate {
                kind: AggKind::Count,
                relationship: "PLACES".into(),
                attribute: None
            }
        );
    }

    #[test]
    fn full_precedence_ladder() {
        let e = parse_expr("a or b and c < d + e * -f").unwrap();
        let neg_f = Expr::Unary(UnaryOp::Neg, Box::new(Expr::attr("f")));
        let mul = Expr::binary(BinaryOp::Mul, Expr::attr("e"), neg_f);
        let add = Expr::binary(BinaryOp::Add, Expr::attr("d"), mul);
        let lt = Expr::binary(BinaryOp::Lt, Expr::attr("c"), add);
        let and = Expr::binary(BinaryOp::And, Expr::attr("b"), lt);
        assert_eq!(e, Expr::binary(BinaryOp::Or, Expr::attr("a"), and));
    }

    #[test]
    fn left_associative_subtraction() {
        let e = parse_expr("10 - 3 - 2").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinaryOp::Sub,
                Expr::binary(BinaryOp::Sub, Expr::num(10.0), Expr::num(3.0)),
                Expr::num(2.0)
            )
        );
    }

    #[test]
    fn errors_carry_position() {
        let err = parse_expr("1 +\n  * 2").unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
        assert!(parse_expr("frobnicate(1)").unwrap_err().message.contains("unknown function"));
        assert!(parse_expr("if(a, b)").is_err());
        assert!(parse_expr("PLACES.total").is_err());
        assert!(parse_expr("1 2").is_err());
        assert!(parse_expr("").is_err());
    }
}
