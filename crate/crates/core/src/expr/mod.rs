//! Expression language for derived attributes, applicability predicates and
//! subtype membership predicates.
//!
//! Precedence, loosest first: `or`, `and`, comparisons, `+ -`, `* /`, unary
//! `-`/`not`. Date literals are written `@YYYY-MM-DD`. Aggregates read the
//! rows on the other end of a relationship: `count(PLACES)`,
//! `mean(PLACES.total)`.

mod eval;
pub mod lexer;
pub(crate) mod parser;
mod print;
mod typeck;

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use eval::{eval, Clock, RowContext};
pub use parser::parse_expr;
pub use typeck::{type_of, TypeEnv, TypeError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Bool(bool),
    Date(NaiveDate),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "!=",
            BinaryOp::Ge => ">=",
            BinaryOp::Gt => ">",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Ge | BinaryOp::Gt => 3,
            BinaryOp::Add | BinaryOp::Sub => 4,
            BinaryOp::Mul | BinaryOp::Div => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    YearsBetween,
    DaysBetween,
    Today,
    Abs,
    If,
}

impl Function {
    pub fn name(self) -> &'static str {
        match self {
            Function::YearsBetween => "years_between",
            Function::DaysBetween => "days_between",
            Function::Today => "today",
            Function::Abs => "abs",
            Function::If => "if",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "years_between" => Function::YearsBetween,
            "days_between" => Function::DaysBetween,
            "today" => Function::Today,
            "abs" => Function::Abs,
            "if" => Function::If,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Function::YearsBetween | Function::DaysBetween => 2,
            Function::Today => 0,
            Function::Abs => 1,
            Function::If => 3,
        }
    }
}

/// Aggregate functions, used both inside expressions and as summarization
/// specs on tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggKind {
    Count,
    Mean,
    Sum,
    Min,
    Max,
}

impl AggKind {
    pub const ALL: [AggKind; 5] = [AggKind::Count, AggKind::Mean, AggKind::Sum, AggKind::Min, AggKind::Max];

    pub fn name(self) -> &'static str {
        match self {
            AggKind::Count => "count",
            AggKind::Mean => "mean",
            AggKind::Sum => "sum",
            AggKind::Min => "min",
            AggKind::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        AggKind::ALL.into_iter().find(|a| a.name() == name)
    }
}

impl fmt::Display for AggKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Literal),
    Attr(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Function, Vec<Expr>),
    Aggregate {
        kind: AggKind,
        relationship: String,
        attribute: Option<String>,
    },
}

impl Expr {
    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn num(x: f64) -> Expr {
        Expr::Literal(Literal::Number(x))
    }

    pub fn attr(name: &str) -> Expr {
        Expr::Attr(name.to_string())
    }

    /// Depth-first visit of every node.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, e) => e.walk(f),
            Expr::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
            Expr::Literal(_) | Expr::Attr(_) | Expr::Aggregate { .. } => {}
        }
    }

    /// Attribute names referenced directly (not through aggregates).
    pub fn attribute_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Attr(name) = e {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
        });
        out
    }

    /// `(relationship, attribute)` pairs read through aggregates.
    pub fn aggregate_refs(&self) -> Vec<(&str, Option<&str>)> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Aggregate {
                relationship,
                attribute,
                ..
            } = e
            {
                out.push((relationship.as_str(), attribute.as_deref()));
            }
        });
        out
    }

    pub fn has_aggregate(&self) -> bool {
        !self.aggregate_refs().is_empty()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::pretty_print(self))
    }
}

pub use print::pretty_print;

/// Parse failure with its byte offset and 1-based position.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
}
