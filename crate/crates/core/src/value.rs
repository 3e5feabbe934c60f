//! Scalar cell values shared by tables, expressions and the engine.

use std::cmp::Ordering;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// A present (non-null) cell value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Bool(bool),
    Date(NaiveDate),
    Text(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_date(&self) -> Option<NaiveDate> {
        match self {
            Scalar::Date(d) => Some(*d),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Scalar::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Scalar::Number(_) => 0,
            Scalar::Bool(_) => 1,
            Scalar::Date(_) => 2,
            Scalar::Text(_) => 3,
        }
    }
}

/// Canonical CSV rendering: shortest round-trip decimal, ISO dates,
/// `true`/`false`.
impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Number(x) => write!(f, "{x}"),
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Scalar::Text(s) => f.write_str(s),
        }
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scalar {}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Total order. Text that parses as an integer on both sides compares
/// numerically first, so identifier keys `9` and `10` sort naturally.
impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Scalar::Number(a), Scalar::Number(b)) => {
                if a == b {
                    Ordering::Equal
                } else {
                    a.total_cmp(b)
                }
            }
            (Scalar::Bool(a), Scalar::Bool(b)) => a.cmp(b),
            (Scalar::Date(a), Scalar::Date(b)) => a.cmp(b),
            (Scalar::Text(a), Scalar::Text(b)) => match (a.parse::<i64>(), b.parse::<i64>()) {
                (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
                (Ok(_), Err(_)) => Ordering::Less,
                (Err(_), Ok(_)) => Ordering::Greater,
                _ => a.cmp(b),
            },
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

/// Why a cell is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullKind {
    /// Applicable but unknown: may be imputed.
    Unknown,
    /// Structurally absent for this instance: never imputed.
    NotApplicable,
}

/// A cell value as seen by expressions and the engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Present(Scalar),
    Null(NullKind),
}

impl Value {
    pub const UNKNOWN: Value = Value::Null(NullKind::Unknown);
    pub const NOT_APPLICABLE: Value = Value::Null(NullKind::NotApplicable);

    pub fn number(x: f64) -> Self {
        Value::Present(Scalar::Number(x))
    }

    pub fn boolean(b: bool) -> Self {
        Value::Present(Scalar::Bool(b))
    }

    pub fn text(s: impl Into<String>) -> Self {
        Value::Present(Scalar::Text(s.into()))
    }

    pub fn date(d: NaiveDate) -> Self {
        Value::Present(Scalar::Date(d))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null(_))
    }

    pub fn scalar(&self) -> Option<&Scalar> {
        match self {
            Value::Present(s) => Some(s),
            Value::Null(_) => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        self.scalar().and_then(Scalar::as_f64)
    }

    pub fn null_kind(&self) -> Option<NullKind> {
        match self {
            Value::Null(k) => Some(*k),
            Value::Present(_) => None,
        }
    }

    /// Drops the null tag; used when writing to a table.
    pub fn into_cell(self) -> Option<Scalar> {
        match self {
            Value::Present(s) => Some(s),
            Value::Null(_) => None,
        }
    }
}

impl From<Scalar> for Value {
    fn from(s: Scalar) -> Self {
        Value::Present(s)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Present(s) => write!(f, "{s}"),
            Value::Null(NullKind::Unknown) => f.write_str("null(unknown)"),
            Value::Null(NullKind::NotApplicable) => f.write_str("null(not_applicable)"),
        }
    }
}

/// Ordered key tuple of an entity instance.
pub type Key = Vec<Scalar>;

pub fn key_to_string(key: &[Scalar]) -> String {
    key.iter().map(ToString::to_string).collect::<Vec<_>>().join("|")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_text_sorts_numerically() {
        let mut keys = [Scalar::Text("400".into()),
            Scalar::Text("101".into()),
            Scalar::Text("9".into()),
            Scalar::Text("abc".into())];
        keys.sort();
        let s: Vec<_> = keys.iter().map(|k| k.to_string()).collect();
        assert_eq!(s, ["9", "101", "400", "abc"]);
    }

    #[test]
    fn leading_zero_ids_stay_distinct() {
        let a = Scalar::Text("01".into());
        let b = Scalar::Text("1".into());
        assert_ne!(a, b);
        assert_ne!(a.cmp(&b), Ordering::Equal);
    }

    #[test]
    fn number_display_is_round_trip() {
        assert_eq!(Scalar::Number(48.0).to_string(), "48");
        assert_eq!(Scalar::Number(59.5).to_string(), "59.5");
        let x = 0.1 + 0.2;
        assert_eq!(Scalar::Number(x).to_string().parse::<f64>().unwrap(), x);
    }
}
