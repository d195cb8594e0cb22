//! Derived binary columns of the form `name = column OP constant`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CompareOp {
    fn symbol(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedColumn {
    pub name: String,
    pub input: String,
    pub op: CompareOp,
    pub constant: String,
}

impl DerivedColumn {
    /// Numeric comparison when both sides parse as numbers; `==` falls back
    /// to case-insensitive text equality. `None` if the value is unusable.
    pub fn eval(&self, raw: &str) -> Option<bool> {
        let raw = raw.trim();
        let lhs = raw.parse::<f64>().ok();
        let rhs = self.constant.parse::<f64>().ok();
        match (lhs, rhs) {
            (Some(a), Some(b)) => Some(match self.op {
                CompareOp::Lt => a < b,
                CompareOp::Le => a <= b,
                CompareOp::Gt => a > b,
                CompareOp::Ge => a >= b,
                CompareOp::Eq => a == b,
            }),
            _ if self.op == CompareOp::Eq && !raw.is_empty() => {
                Some(raw.eq_ignore_ascii_case(&self.constant))
            }
            _ => None,
        }
    }
}

impl fmt::Display for DerivedColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} {} {}", self.name, self.input, self.op.symbol(), self.constant)
    }
}

impl FromStr for DerivedColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Spec(format!("cannot parse derived column `{s}` (expected `name = column OP constant`)"));
        let (name, expr) = s.split_once('=').ok_or_else(bad)?;
        let name = name.trim();
        // two-character operators first so `<=` is not read as `<`
        let ops = [
            ("<=", CompareOp::Le),
            (">=", CompareOp::Ge),
            ("==", CompareOp::Eq),
            ("<", CompareOp::Lt),
            (">", CompareOp::Gt),
        ];
        let (input, op, constant) = ops
            .iter()
            .find_map(|(sym, op)| expr.split_once(sym).map(|(l, r)| (l.trim(), *op, r.trim())))
            .ok_or_else(bad)?;
        let ident = |t: &str| !t.is_empty() && !t.contains(char::is_whitespace);
        if !ident(name) || !ident(input) || constant.is_empty() {
            return Err(bad());
        }
        let constant = constant.trim_matches('"').to_string();
        if op != CompareOp::Eq && constant.parse::<f64>().is_err() {
            return Err(Error::Spec(format!("ordering comparison in `{s}` needs a numeric constant")));
        }
        Ok(Self {
            name: name.to_string(),
            input: input.to_string(),
            op,
            constant,
        })
    }
}
