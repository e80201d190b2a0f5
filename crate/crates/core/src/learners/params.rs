use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Learner, LearnerError};

/// A hyperparameter value as written in configs and model documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x:?}"),
            ParamValue::Str(s) => write!(f, "{s}"),
        }
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<i32> for ParamValue {
    fn from(v: i32) -> Self {
        ParamValue::Int(v as i64)
    }
}

impl From<usize> for ParamValue {
    fn from(v: usize) -> Self {
        ParamValue::Int(v as i64)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Str(v.to_string())
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// Admissible values of one parameter. Bounds are inclusive unless marked open.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Int { lo: i64, hi: i64 },
    Float { lo: f64, hi: f64, lo_open: bool },
    Bool,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: &'static str,
    pub domain: Domain,
    /// `None` means "derived from the data" (e.g. kernel width `1/d`).
    pub default: Option<ParamValue>,
}

impl ParamDecl {
    pub fn int(name: &'static str, lo: i64, hi: i64, default: i64) -> Self {
        Self {
            name,
            domain: Domain::Int { lo, hi },
            default: Some(ParamValue::Int(default)),
        }
    }

    pub fn float(name: &'static str, lo: f64, hi: f64, default: f64) -> Self {
        Self {
            name,
            domain: Domain::Float { lo, hi, lo_open: false },
            default: Some(ParamValue::Float(default)),
        }
    }

    /// Float in `(lo, hi]`.
    pub fn positive(name: &'static str, lo: f64, hi: f64, default: Option<f64>) -> Self {
        Self {
            name,
            domain: Domain::Float { lo, hi, lo_open: true },
            default: default.map(ParamValue::Float),
        }
    }

    pub fn boolean(name: &'static str, default: bool) -> Self {
        Self {
            name,
            domain: Domain::Bool,
            default: Some(ParamValue::Bool(default)),
        }
    }

    pub fn choice(name: &'static str, values: &'static [&'static str], default: &'static str) -> Self {
        Self {
            name,
            domain: Domain::Choice(values),
            default: Some(ParamValue::Str(default.to_string())),
        }
    }

    fn check(&self, value: &ParamValue) -> Result<ParamValue, LearnerError> {
        let bad = |reason: String| LearnerError::BadParam {
            param: self.name.to_string(),
            reason,
        };
        match (&self.domain, value) {
            (Domain::Int { lo, hi }, ParamValue::Int(v)) => {
                if v < lo || v > hi {
                    return Err(bad(format!("{v} outside [{lo}, {hi}]")));
                }
                Ok(value.clone())
            }
            (Domain::Int { .. }, ParamValue::Float(v)) if v.fract() == 0.0 && v.abs() < 9.0e15 => {
                self.check(&ParamValue::Int(*v as i64))
            }
            (Domain::Float { lo, hi, lo_open }, ParamValue::Float(_) | ParamValue::Int(_)) => {
                let v = match value {
                    ParamValue::Float(v) => *v,
                    ParamValue::Int(i) => *i as f64,
                    _ => unreachable!(),
                };
                let above = if *lo_open { v > *lo } else { v >= *lo };
                if !v.is_finite() || !above || v > *hi {
                    let open = if *lo_open { "(" } else { "[" };
                    return Err(bad(format!("{v} outside {open}{lo}, {hi}]")));
                }
                Ok(ParamValue::Float(v))
            }
            (Domain::Bool, ParamValue::Bool(_)) => Ok(value.clone()),
            (Domain::Choice(values), ParamValue::Str(s)) => {
                if values.contains(&s.as_str()) {
                    Ok(value.clone())
                } else {
                    Err(bad(format!("`{s}` is not one of {values:?}")))
                }
            }
            (domain, v) => Err(bad(format!("{v} has the wrong type for {domain:?}"))),
        }
    }
}

/// Parameters checked against a learner's declarations with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedParams {
    learner: &'static str,
    values: BTreeMap<&'static str, Option<ParamValue>>,
}

impl ResolvedParams {
    pub fn resolve(learner: &dyn Learner, given: &Params) -> Result<Self, LearnerError> {
        let decls = learner.params();
        for name in given.keys() {
            if !decls.iter().any(|d| d.name == name) {
                return Err(LearnerError::UnknownParam {
                    learner: learner.name().to_string(),
                    param: name.clone(),
                });
            }
        }
        let mut values = BTreeMap::new();
        for d in &decls {
            let v = match given.get(d.name) {
                Some(v) => Some(d.check(v)?),
                None => d.default.clone(),
            };
            values.insert(d.name, v);
        }
        Ok(Self {
            learner: learner.name(),
            values,
        })
    }

    fn raw(&self, name: &str) -> Option<&ParamValue> {
        match self.values.get(name) {
            Some(v) => v.as_ref(),
            None => panic!("learner `{}` reads undeclared parameter `{name}`", self.learner),
        }
    }

    pub fn int(&self, name: &str) -> i64 {
        match self.raw(name) {
            Some(ParamValue::Int(v)) => *v,
            other => panic!("parameter `{name}` is not an integer: {other:?}"),
        }
    }

    pub fn usize(&self, name: &str) -> usize {
        self.int(name) as usize
    }

    /// Integer where 0 means "no limit".
    pub fn limit(&self, name: &str) -> Option<usize> {
        match self.int(name) {
            0 => None,
            v => Some(v as usize),
        }
    }

    pub fn float(&self, name: &str) -> f64 {
        self.opt_float(name)
            .unwrap_or_else(|| panic!("parameter `{name}` has no value"))
    }

    pub fn opt_float(&self, name: &str) -> Option<f64> {
        match self.raw(name) {
            Some(ParamValue::Float(v)) => Some(*v),
            Some(ParamValue::Int(v)) => Some(*v as f64),
            None => None,
            other => panic!("parameter `{name}` is not numeric: {other:?}"),
        }
    }

    pub fn boolean(&self, name: &str) -> bool {
        match self.raw(name) {
            Some(ParamValue::Bool(v)) => *v,
            other => panic!("parameter `{name}` is not a bool: {other:?}"),
        }
    }

    pub fn string(&self, name: &str) -> &str {
        match self.raw(name) {
            Some(ParamValue::Str(v)) => v,
            other => panic!("parameter `{name}` is not a string: {other:?}"),
        }
    }
}
