use chrono::NaiveDate;

use super::{AggKind, BinaryOp, Expr, Function, Literal, UnaryOp};
use crate::value::{NullKind, Scalar, Value};

const DAYS_PER_YEAR: f64 = 365.2425;

/// Injected "today" so evaluation never reads the wall clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clock {
    pub today: NaiveDate,
}

impl Clock {
    pub fn fixed(today: NaiveDate) -> Self {
        Clock { today }
    }
}

/// What an expression can see while evaluating on one row.
pub trait RowContext {
    /// Value of an attribute on the current row.
    fn attribute(&self, name: &str) -> Value;

    /// One value per related row across `relationship`. With no attribute the
    /// values are placeholders and only their count matters.
    fn related(&self, relationship: &str, attribute: Option<&str>) -> Vec<Value>;
}

/// Evaluates a type-checked expression. Runtime problems (division by zero)
/// yield `null(unknown)` and append a note; evaluation never fails.
pub fn eval(expr: &Expr, ctx: &dyn RowContext, clock: &Clock, notes: &mut Vec<String>) -> Value {
    match expr {
        Expr::Literal(lit) => Value::Present(match lit {
            Literal::Number(x) => Scalar::Number(*x),
            Literal::Bool(b) => Scalar::Bool(*b),
            Literal::Date(d) => Scalar::Date(*d),
            Literal::Text(s) => Scalar::Text(s.clone()),
        }),
        Expr::Attr(name) => ctx.attribute(name),
        Expr::Unary(op, inner) => {
            let v = eval(inner, ctx, clock, notes);
            match (op, v.scalar()) {
                (UnaryOp::Neg, Some(Scalar::Number(x))) => Value::number(-x),
                (UnaryOp::Not, Some(Scalar::Bool(b))) => Value::boolean(!b),
                _ => Value::UNKNOWN,
            }
        }
        Expr::Binary(op, lhs, rhs) => {
            let l = eval(lhs, ctx, clock, notes);
            let r = eval(rhs, ctx, clock, notes);
            let (Some(l), Some(r)) = (l.scalar(), r.scalar()) else {
                return Value::UNKNOWN;
            };
            binary(*op, l, r, expr, notes)
        }
        Expr::Call(func, args) => call(*func, args, ctx, clock, notes),
        Expr::Aggregate {
            kind,
            relationship,
            attribute,
        } => {
            let values = ctx.related(relationship, attribute.as_deref());
            aggregate(*kind, &values)
        }
    }
}

fn binary(op: BinaryOp, l: &Scalar, r: &Scalar, at: &Expr, notes: &mut Vec<String>) -> Value {
    use BinaryOp::*;
    match op {
        Add | Sub | Mul | Div => {
            let (Some(a), Some(b)) = (l.as_f64(), r.as_f64()) else {
                return Value::UNKNOWN;
            };
            match op {
                Add => Value::number(a + b),
                Sub => Value::number(a - b),
                Mul => Value::number(a * b),
                _ if b == 0.0 => {
                    notes.push(format!("division by zero in `{at}`"));
                    Value::UNKNOWN
                }
                _ => Value::number(a / b),
            }
        }
        And | Or => match (l.as_bool(), r.as_bool()) {
            (Some(a), Some(b)) => Value::boolean(if op == And { a && b } else { a || b }),
            _ => Value::UNKNOWN,
        },
        Eq => Value::boolean(l == r),
        Ne => Value::boolean(l != r),
        Lt => Value::boolean(l < r),
        Le => Value::boolean(l <= r),
        Gt => Value::boolean(l > r),
        Ge => Value::boolean(l >= r),
    }
}

fn call(func: Function, args: &[Expr], ctx: &dyn RowContext, clock: &Clock, notes: &mut Vec<String>) -> Value {
    match func {
        Function::Today => Value::date(clock.today),
        Function::If => {
            let cond = eval(&args[0], ctx, clock, notes);
            match cond.scalar().and_then(Scalar::as_bool) {
                Some(true) => eval(&args[1], ctx, clock, notes),
                Some(false) => eval(&args[2], ctx, clock, notes),
                None => Value::UNKNOWN,
            }
        }
        Function::Abs => match eval(&args[0], ctx, clock, notes).as_f64() {
            Some(x) => Value::number(x.abs()),
            None => Value::UNKNOWN,
        },
        Function::YearsBetween | Function::DaysBetween => {
            let a = eval(&args[0], ctx, clock, notes);
            let b = eval(&args[1], ctx, clock, notes);
            let (Some(a), Some(b)) = (
                a.scalar().and_then(Scalar::as_date),
                b.scalar().and_then(Scalar::as_date),
            ) else {
                return Value::UNKNOWN;
            };
            let days = (b - a).num_days();
            if func == Function::DaysBetween {
                Value::number(days as f64)
            } else {
                Value::number((days as f64 / DAYS_PER_YEAR).floor())
            }
        }
    }
}

/// Aggregate over related values. Nulls are skipped; `count` counts rows.
/// Over an empty set `count` and `sum` are 0, the rest are `null(unknown)`.
pub(crate) fn aggregate(kind: AggKind, values: &[Value]) -> Value {
    if kind == AggKind::Count {
        return Value::number(values.len() as f64);
    }
    let present: Vec<&Scalar> = values.iter().filter_map(Value::scalar).collect();
    match kind {
        AggKind::Count => unreachable!(),
        AggKind::Sum => Value::number(present.iter().filter_map(|s| s.as_f64()).sum()),
        AggKind::Mean => {
            let nums: Vec<f64> = present.iter().filter_map(|s| s.as_f64()).collect();
            if nums.is_empty() {
                Value::UNKNOWN
            } else {
                Value::number(nums.iter().sum::<f64>() / nums.len() as f64)
            }
        }
        AggKind::Min => present.iter().min().map_or(Value::UNKNOWN, |s| Value::Present((*s).clone())),
        AggKind::Max => present.iter().max().map_or(Value::UNKNOWN, |s| Value::Present((*s).clone())),
    }
}

impl From<NullKind> for Value {
    fn from(kind: NullKind) -> Self {
        Value::Null(kind)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;

    use super::super::parse_expr;
    use super::*;

    #[derive(Default)]
    struct Row {
        attrs: BTreeMap<String, Value>,
        related: BTreeMap<String, Vec<Value>>,
    }

    impl RowContext for Row {
        fn attribute(&self, name: &str) -> Value {
            self.attrs.get(name).cloned().unwrap_or(Value::UNKNOWN)
        }
        fn related(&self, rel: &str, attr: Option<&str>) -> Vec<Value> {
            let rows = self.related.get(rel).cloned().unwrap_or_default();
            match attr {
                Some(_) => rows,
                None => rows.iter().map(|_| Value::boolean(true)).collect(),
            }
        }
    }

    fn clock() -> Clock {
        Clock::fixed(NaiveDate::from_ymd_opt(2019, 6, 30).unwrap())
    }

    fn run(src: &str, row: &Row) -> (Value, Vec<String>) {
        let mut notes = Vec::new();
        let v = eval(&parse_expr(src).unwrap(), row, &clock(), &mut notes);
        (v, notes)
    }

    #[test]
    fn mean_of_customer_101_orders() {
        let mut row = Row::default();
        row.related.insert(
            "PLACES".into(),
            [100.0, 50.0, 17.0, 25.0].into_iter().map(Value::number).collect(),
        );
        assert_eq!(run("mean(PLACES.total)", &row).0, Value::number(48.0));
        assert_eq!(run("sum(PLACES.total)", &row).0, Value::number(192.0));
        assert_eq!(run("count(PLACES)", &row).0, Value::number(4.0));
    }

    #[test]
    fn empty_set_semantics() {
        let mut row = Row::default();
        row.related.insert("R".into(), vec![]);
        assert_eq!(run("count(R)", &row).0, Value::number(0.0));
        assert_eq!(run("sum(R.x)", &row).0, Value::number(0.0));
        assert_eq!(run("mean(R.x)", &row).0, Value::UNKNOWN);
        assert_eq!(run("min(R.x)", &row).0, Value::UNKNOWN);
        assert_eq!(run("max(R.x)", &row).0, Value::UNKNOWN);
    }

    #[test]
    fn null_propagation() {
        let mut row = Row::default();
        row.attrs.insert("x".into(), Value::number(2.0));
        row.attrs.insert("n".into(), Value::NOT_APPLICABLE);
        assert_eq!(run("x + n", &row).0, Value::UNKNOWN);
        assert_eq!(run("x > n", &row).0, Value::UNKNOWN);
        assert_eq!(run("if(n > 1, 1, 2)", &row).0, Value::UNKNOWN);
        assert_eq!(run("abs(-x)", &row).0, Value::number(2.0));
    }

    #[test]
    fn division_by_zero_is_null_with_note() {
        let row = Row::default();
        let (v, notes) = run("1 / 0", &row);
        assert_eq!(v, Value::UNKNOWN);
        assert_eq!(notes.len(), 1);
    }

    #[test]
    fn age_from_birth_date() {
        let mut row = Row::default();
        let dob = NaiveDate::from_ymd_opt(1997, 1, 15).unwrap();
        row.attrs.insert("dob".into(), Value::date(dob));
        assert_eq!(run("years_between(dob, today())", &row).0, Value::number(22.0));
        // 2019-06-30 minus 1997-01-15
        assert_eq!(run("days_between(dob, today())", &row).0, Value::number(8201.0));
    }

    proptest! {
        #[test]
        fn aggregate_ordering(xs in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let vals: Vec<Value> = xs.iter().copied().map(Value::number).collect();
            let mean = aggregate(AggKind::Mean, &vals).as_f64().unwrap();
            let sum = aggregate(AggKind::Sum, &vals).as_f64().unwrap();
            let min = aggregate(AggKind::Min, &vals).as_f64().unwrap();
            let max = aggregate(AggKind::Max, &vals).as_f64().unwrap();
            let tol = 1e-9 * mean.abs().max(1.0);
            prop_assert!(min <= mean + tol && mean <= max + tol);
            let n = xs.len() as f64;
            prop_assert!((sum - mean * n).abs() <= 1e-9 * sum.abs().max(1.0) * n);
        }

        #[test]
        fn evaluation_is_pure(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let mut row = Row::default();
            row.attrs.insert("a".into(), Value::number(a));
            row.attrs.insert("b".into(), Value::number(b));
            let first = run("if(a < b, a * 2 - b, b / 3)", &row);
            let second = run("if(a < b, a * 2 - b, b / 3)", &row);
            prop_assert_eq!(first, second);
        }
    }
}
