//! Conjunctive predicates over conditioning variables, e.g. `age>=15`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PredicateError {
    #[error("cannot parse condition {0:?}; expected e.g. `age>=15`")]
    Parse(String),
    #[error("predicate references undeclared conditioning variable {0:?}")]
    UnknownConditioningVar(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl CompareOp {
    const ALL: [(&'static str, CompareOp); 6] = [
        (">=", CompareOp::Ge),
        ("<=", CompareOp::Le),
        ("==", CompareOp::Eq),
        ("!=", CompareOp::Ne),
        (">", CompareOp::Gt),
        ("<", CompareOp::Lt),
    ];

    pub fn apply(self, lhs: i32, rhs: i32) -> bool {
        match self {
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Gt => lhs > rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Lt => lhs < rhs,
            CompareOp::Eq => lhs == rhs,
            CompareOp::Ne => lhs != rhs,
        }
    }

    fn symbol(self) -> &'static str {
        Self::ALL.iter().find(|(_, op)| *op == self).unwrap().0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub var: String,
    pub op: CompareOp,
    pub value: i32,
}

/// Conjunction of conditions; the empty predicate accepts everything.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Predicate {
    pub conditions: Vec<Condition>,
}

impl Predicate {
    pub fn always() -> Self {
        Self::default()
    }

    pub fn is_trivial(&self) -> bool {
        self.conditions.is_empty()
    }

    /// Resolve variable names against a column layout. Only names in
    /// `allowed` may be referenced.
    pub fn bind(&self, columns: &[String], allowed: &[String]) -> Result<BoundPredicate, PredicateError> {
        let mut bound = Vec::with_capacity(self.conditions.len());
        for c in &self.conditions {
            if !allowed.contains(&c.var) {
                return Err(PredicateError::UnknownConditioningVar(c.var.clone()));
            }
            let col = columns
                .iter()
                .position(|n| *n == c.var)
                .ok_or_else(|| PredicateError::UnknownConditioningVar(c.var.clone()))?;
            bound.push((col, c.op, c.value));
        }
        Ok(BoundPredicate { conditions: bound })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conditions.is_empty() {
            return write!(f, "true");
        }
        let parts: Vec<String> = self
            .conditions
            .iter()
            .map(|c| format!("{}{}{}", c.var, c.op.symbol(), c.value))
            .collect();
        write!(f, "{}", parts.join(" && "))
    }
}

impl FromStr for Predicate {
    type Err = PredicateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "true" {
            return Ok(Self::always());
        }
        let mut conditions = Vec::new();
        for part in s.split("&&") {
            let part = part.trim();
            let (pos, sym, op) = CompareOp::ALL
                .iter()
                .filter_map(|(sym, op)| part.find(sym).map(|p| (p, *sym, *op)))
                .min_by_key(|(p, sym, _)| (*p, std::cmp::Reverse(sym.len())))
                .ok_or_else(|| PredicateError::Parse(part.into()))?;
            let var = part[..pos].trim();
            let value = part[pos + sym.len()..].trim();
            if var.is_empty() || !var.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(PredicateError::Parse(part.into()));
            }
            let value = value
                .parse()
                .map_err(|_| PredicateError::Parse(part.into()))?;
            conditions.push(Condition {
                var: var.into(),
                op,
                value,
            });
        }
        Ok(Self { conditions })
    }
}

/// A predicate resolved to column indices.
#[derive(Debug, Clone)]
pub struct BoundPredicate {
    conditions: Vec<(usize, CompareOp, i32)>,
}

impl BoundPredicate {
    pub fn eval(&self, code_at: impl Fn(usize) -> i32) -> bool {
        self.conditions
            .iter()
            .all(|&(col, op, v)| op.apply(code_at(col), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let p: Predicate = "age>=15".parse().unwrap();
        assert_eq!(
            p.conditions,
            vec![Condition {
                var: "age".into(),
                op: CompareOp::Ge,
                value: 15
            }]
        );
        assert_eq!(p.to_string(), "age>=15");
        let q: Predicate = " age > 12 && age<20 ".parse().unwrap();
        assert_eq!(q.conditions.len(), 2);
        assert_eq!(q.conditions[0].op, CompareOp::Gt);
        assert_eq!(q.to_string().parse::<Predicate>().unwrap(), q);
        assert!("true".parse::<Predicate>().unwrap().is_trivial());
        assert!("age=>3".parse::<Predicate>().is_err());
        assert!("age>=x".parse::<Predicate>().is_err());
    }

    #[test]
    fn bind_checks_names() {
        let cols = vec!["Q1".to_string(), "age".to_string()];
        let allowed = vec!["age".to_string()];
        let p: Predicate = "age>=15".parse().unwrap();
        let b = p.bind(&cols, &allowed).unwrap();
        assert!(b.eval(|c| if c == 1 { 15 } else { 0 }));
        assert!(!b.eval(|c| if c == 1 { 14 } else { 0 }));
        let bad: Predicate = "Q1>=2".parse().unwrap();
        assert_eq!(
            bad.bind(&cols, &allowed).unwrap_err(),
            PredicateError::UnknownConditioningVar("Q1".into())
        );
    }
}
