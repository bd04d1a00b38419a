use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Effect {
    Permit,
    Forbid,
    Escalate,
}

impl Effect {
    pub fn keyword(self) -> &'static str {
        match self {
            Effect::Permit => "permit",
            Effect::Forbid => "forbid",
            Effect::Escalate => "escalate",
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Head constraint on a named attribute of the request (role, action).
/// `Eq` is exact; `In` also admits role groups such as `"Agent"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NameConstraint {
    Any,
    Eq(String),
    In(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceConstraint {
    Any,
    Eq(String),
    Is(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Lit(Value),
    /// `context.<name>`
    Attr(String),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn attributes(&self, out: &mut Vec<String>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Attr(a) => out.push(a.clone()),
            Expr::Not(e) => e.attributes(out),
            Expr::And(l, r) | Expr::Or(l, r) | Expr::Cmp(_, l, r) => {
                l.attributes(out);
                r.attributes(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub rule_id: String,
    pub effect: Effect,
    pub principal: NameConstraint,
    pub action: NameConstraint,
    pub resource: ResourceConstraint,
    pub condition: Option<Expr>,
    /// Free-form `@key("value")` annotations other than `@id`.
    pub annotations: BTreeMap<String, String>,
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
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
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(Value::Str(s)) => f.write_str(&quote(s)),
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Attr(a) => write!(f, "context.{a}"),
            Expr::Not(e) => write!(f, "!({e})"),
            Expr::And(l, r) => write!(f, "({l} && {r})"),
            Expr::Or(l, r) => write!(f, "({l} || {r})"),
            Expr::Cmp(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

fn write_names(f: &mut fmt::Formatter<'_>, var: &str, ns: &str, c: &NameConstraint) -> fmt::Result {
    match c {
        NameConstraint::Any => f.write_str(var),
        NameConstraint::Eq(n) => write!(f, "{var} == {ns}::{}", quote(n)),
        NameConstraint::In(names) if names.len() == 1 => write!(f, "{var} in {ns}::{}", quote(&names[0])),
        NameConstraint::In(names) => {
            let parts: Vec<String> = names.iter().map(|n| format!("{ns}::{}", quote(n))).collect();
            write!(f, "{var} in [{}]", parts.join(", "))
        }
    }
}

impl fmt::Display for PolicyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "@id({})", quote(&self.rule_id))?;
        for (k, v) in &self.annotations {
            writeln!(f, "@{k}({})", quote(v))?;
        }
        write!(f, "{} (\n    ", self.effect)?;
        write_names(f, "principal", "Role", &self.principal)?;
        f.write_str(",\n    ")?;
        write_names(f, "action", "Action", &self.action)?;
        f.write_str(",\n    ")?;
        match &self.resource {
            ResourceConstraint::Any => f.write_str("resource")?,
            ResourceConstraint::Eq(id) => write!(f, "resource == Entity::{}", quote(id))?,
            ResourceConstraint::Is(t) => write!(f, "resource is {t}")?,
        }
        f.write_str("\n)")?;
        if let Some(cond) = &self.condition {
            write!(f, " when {{ {cond} }}")?;
        }
        f.write_str(";")
    }
}
