use std::collections::BTreeMap;

use super::{AggKind, BinaryOp, Expr, Function, Literal, UnaryOp};
use crate::eer::AttributeKind;

/// Static environment for type checking: the owning entity's attributes and,
/// per relationship, the attributes of the entity on the other end.
#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    pub attributes: BTreeMap<String, AttributeKind>,
    pub relationships: BTreeMap<String, BTreeMap<String, AttributeKind>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} in `{subexpr}`")]
pub struct TypeError {
    pub message: String,
    /// Canonical text of the offending subexpression.
    pub subexpr: String,
}

fn fail<T>(at: &Expr, message: impl Into<String>) -> Result<T, TypeError> {
    Err(TypeError {
        message: message.into(),
        subexpr: at.to_string(),
    })
}

/// Comparison classes. Identifiers, nominals and text compare as strings.
#[derive(Debug, PartialEq, Eq, Clone, Copy)]
enum Class {
    Number,
    Date,
    Bool,
    Textual,
}

fn class(kind: AttributeKind) -> Class {
    match kind {
        AttributeKind::Numeric => Class::Number,
        AttributeKind::Date => Class::Date,
        AttributeKind::Boolean => Class::Bool,
        AttributeKind::Identifier | AttributeKind::Nominal | AttributeKind::Text => Class::Textual,
    }
}

pub fn type_of(expr: &Expr, env: &TypeEnv) -> Result<AttributeKind, TypeError> {
    use AttributeKind as K;
    match expr {
        Expr::Literal(lit) => Ok(match lit {
            Literal::Number(_) => K::Numeric,
            Literal::Bool(_) => K::Boolean,
            Literal::Date(_) => K::Date,
            Literal::Text(_) => K::Nominal,
        }),
        Expr::Attr(name) => match env.attributes.get(name) {
            Some(k) => Ok(*k),
            None => fail(expr, format!("unknown attribute `{name}`")),
        },
        Expr::Unary(op, inner) => {
            let k = type_of(inner, env)?;
            match (op, k) {
                (UnaryOp::Neg, K::Numeric) => Ok(K::Numeric),
                (UnaryOp::Not, K::Boolean) => Ok(K::Boolean),
                (UnaryOp::Neg, k) => fail(expr, format!("cannot negate a {k} value")),
                (UnaryOp::Not, k) => fail(expr, format!("`not` needs a boolean, found {k}")),
            }
        }
        Expr::Binary(op, lhs, rhs) => {
            let l = type_of(lhs, env)?;
            let r = type_of(rhs, env)?;
            match op {
                BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div => {
                    if l == K::Numeric && r == K::Numeric {
                        Ok(K::Numeric)
                    } else {
                        fail(expr, format!("`{}` needs numeric operands, found {l} and {r}", op.symbol()))
                    }
                }
                BinaryOp::And | BinaryOp::Or => {
                    if l == K::Boolean && r == K::Boolean {
                        Ok(K::Boolean)
                    } else {
                        fail(expr, format!("`{}` needs boolean operands, found {l} and {r}", op.symbol()))
                    }
                }
                BinaryOp::Eq | BinaryOp::Ne => {
                    if class(l) == class(r) {
                        Ok(K::Boolean)
                    } else {
                        fail(expr, format!("cannot compare {l} with {r}"))
                    }
                }
                BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                    if class(l) == class(r) && class(l) != Class::Bool {
                        Ok(K::Boolean)
                    } else {
                        fail(expr, format!("cannot order {l} against {r}"))
                    }
                }
            }
        }
        Expr::Call(func, args) => {
            if args.len() != func.arity() {
                return fail(expr, format!("`{}` takes {} argument(s)", func.name(), func.arity()));
            }
            let kinds = args
                .iter()
                .map(|a| type_of(a, env))
                .collect::<Result<Vec<_>, _>>()?;
            match func {
                Function::YearsBetween | Function::DaysBetween => {
                    if kinds.iter().all(|k| *k == K::Date) {
                        Ok(K::Numeric)
                    } else {
                        fail(expr, format!("`{}` needs two dates", func.name()))
                    }
                }
                Function::Today => Ok(K::Date),
                Function::Abs => {
                    if kinds[0] == K::Numeric {
                        Ok(K::Numeric)
                    } else {
                        fail(expr, "`abs` needs a number")
                    }
                }
                Function::If => {
                    if kinds[0] != K::Boolean {
                        return fail(expr, format!("`if` condition must be boolean, found {}", kinds[0]));
                    }
                    if kinds[1] == kinds[2] {
                        Ok(kinds[1])
                    } else if class(kinds[1]) == Class::Textual && class(kinds[2]) == Class::Textual {
                        Ok(K::Nominal)
                    } else {
                        fail(expr, format!("`if` branches differ: {} vs {}", kinds[1], kinds[2]))
                    }
                }
            }
        }
        Expr::Aggregate {
            kind,
            relationship,
            attribute,
        } => {
            let Some(related) = env.relationships.get(relationship) else {
                return fail(expr, format!("unknown relationship `{relationship}`"));
            };
            match (kind, attribute) {
                (AggKind::Count, None) => Ok(K::Numeric),
                (AggKind::Count, Some(_)) => fail(expr, "`count` takes a relationship, not an attribute"),
                (_, None) => fail(expr, format!("`{kind}` needs an attribute")),
                (_, Some(attr)) => {
                    let Some(ak) = related.get(attr) else {
                        return fail(expr, format!("unknown attribute `{attr}` across `{relationship}`"));
                    };
                    match (kind, ak) {
                        (AggKind::Sum | AggKind::Mean, K::Numeric) => Ok(K::Numeric),
                        (AggKind::Min | AggKind::Max, K::Numeric | K::Date) => Ok(*ak),
                        _ => fail(expr, format!("cannot take `{kind}` of a {ak} attribute")),
                    }
                }
            }
        }
    }
}
