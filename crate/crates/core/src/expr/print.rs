use super::{Expr, Literal, UnaryOp};

const UNARY_PREC: u8 = 6;
const ATOM_PREC: u8 = 7;

/// Canonical text of an expression. Parentheses appear only where the
/// precedence rules require them, so `parse_expr(pretty_print(e)) == e` for
/// every parsed `e`.
pub fn pretty_print(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(expr, &mut out);
    out
}

fn prec(expr: &Expr) -> u8 {
    match expr {
        Expr::Binary(op, ..) => op.precedence(),
        Expr::Unary(..) => UNARY_PREC,
        Expr::Literal(Literal::Number(x)) if x.is_sign_negative() => UNARY_PREC,
        _ => ATOM_PREC,
    }
}

fn write_expr(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Literal(lit) => write_literal(lit, out),
        Expr::Attr(name) => out.push_str(name),
        Expr::Unary(op, inner) => {
            out.push_str(match op {
                UnaryOp::Neg => "-",
                UnaryOp::Not => "not ",
            });
            // `--` lexes as a single token, so a nested negation is wrapped.
            let nested_neg = *op == UnaryOp::Neg && prec(inner) == UNARY_PREC;
            write_operand(inner, prec(inner) < UNARY_PREC || nested_neg, out);
        }
        Expr::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            write_operand(lhs, prec(lhs) < p, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_operand(rhs, prec(rhs) <= p, out);
        }
        Expr::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(a, out);
            }
            out.push(')');
        }
        Expr::Aggregate {
            kind,
            relationship,
            attribute,
        } => {
            out.push_str(kind.name());
            out.push('(');
            out.push_str(relationship);
            if let Some(a) = attribute {
                out.push('.');
                out.push_str(a);
            }
            out.push(')');
        }
    }
}

fn write_operand(expr: &Expr, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        write_expr(expr, out);
        out.push(')');
    } else {
        write_expr(expr, out);
    }
}

fn write_literal(lit: &Literal, out: &mut String) {
    match lit {
        Literal::Number(x) => out.push_str(&x.to_string()),
        Literal::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Literal::Date(d) => {
            out.push('@');
            out.push_str(&d.format("%Y-%m-%d").to_string());
        }
        Literal::Text(s) => {
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_expr, AggKind, BinaryOp, Function};
    use super::*;
    use proptest::prelude::*;

    fn round_trip(src: &str) -> String {
        let e = parse_expr(src).unwrap();
        let printed = pretty_print(&e);
        assert_eq!(parse_expr(&printed).unwrap(), e, "printed: {printed}");
        printed
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(round_trip("(1 + 2) * 3"), "(1 + 2) * 3");
        assert_eq!(round_trip("1 + (2 * 3)"), "1 + 2 * 3");
        assert_eq!(round_trip("10 - (3 - 2)"), "10 - (3 - 2)");
        assert_eq!(round_trip("(10 - 3) - 2"), "10 - 3 - 2");
        assert_eq!(round_trip("- -1"), "-(-1)");
        assert_eq!(round_trip("2 - -1"), "2 - -1");
        assert_eq!(round_trip("not (a and b)"), "not (a and b)");
        assert_eq!(round_trip("if(x > 1, 'a\"', \"b\")"), r#"if(x > 1, "a\"", "b")"#);
        assert_eq!(round_trip("total >= @2019-01-01"), "total >= @2019-01-01");
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-1000i32..1000).prop_map(|n| Expr::num(n as f64 / 4.0)),
            "[a-d]".prop_map(Expr::Attr),
            any::<bool>().prop_map(|b| Expr::Literal(Literal::Bool(b))),
            "[a-z \"]{0,4}".prop_map(|s| Expr::Literal(Literal::Text(s))),
            Just(Expr::Aggregate {
                kind: AggKind::Sum,
                relationship: "R".into(),
                attribute: Some("x".into())
            }),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            let ops = prop_oneof![
                Just(BinaryOp::Add),
                Just(BinaryOp::Sub),
                Just(BinaryOp::Mul),
                Just(BinaryOp::Div),
                Just(BinaryOp::Lt),
                Just(BinaryOp::Eq),
                Just(BinaryOp::And),
                Just(BinaryOp::Or),
            ];
            prop_oneof![
                (ops, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
                inner.clone().prop_map(|e| Expr::Unary(UnaryOp::Neg, Box::new(e))),
                inner.clone().prop_map(|e| Expr::Unary(UnaryOp::Not, Box::new(e))),
                (inner.clone(), inner.clone(), inner)
                    .prop_map(|(a, b, c)| Expr::Call(Function::If, vec![a, b, c])),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_fixed_point(e in arb_expr()) {
            let once = parse_expr(&pretty_print(&e)).unwrap();
            let twice = parse_expr(&pretty_print(&once)).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
