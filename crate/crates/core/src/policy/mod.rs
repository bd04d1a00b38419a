//! Minimal permit / forbid / escalate policy language.
//!
//! Decisions combine matched rules with fixed precedence:
//! escalate > forbid > permit > default deny.

mod ast;
mod lexer;
mod parser;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::Digest;
use crate::model::{ActorId, EntityId, Role, Value};

pub use ast::{CmpOp, Effect, Expr, NameConstraint, PolicyRule, ResourceConstraint};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("type error at {line}:{col}: {message}")]
    Type { line: usize, col: usize, message: String },
    #[error("duplicate rule id `{0}`")]
    DuplicateRuleId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("rule `{rule_id}` references missing context attribute `{attribute}`")]
    MissingAttribute { rule_id: String, attribute: String },
    #[error("rule `{rule_id}`: {message}")]
    TypeMismatch { rule_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySet {
    pub rules: Vec<PolicyRule>,
    pub source_digest: Digest,
}

impl PolicySet {
    pub fn parse(source: &str) -> Result<PolicySet, ParseError> {
        Ok(PolicySet { rules: parser::parse_rules(source)?, source_digest: Digest::of(source.as_bytes()) })
    }

    pub fn empty() -> PolicySet {
        PolicySet::parse("").expect("empty source parses")
    }

    pub fn load(path: &Path) -> Result<PolicySet, PolicyFileError> {
        let src = std::fs::read_to_string(path)?;
        Ok(PolicySet::parse(&src)?)
    }

    pub fn rule(&self, id: &str) -> Option<&PolicyRule> {
        self.rules.iter().find(|r| r.rule_id == id)
    }

    pub fn evaluate(&self, req: &EvaluationRequest) -> Result<Decision, EvalError> {
        evaluate(self, req)
    }
}

/// Canonical source text; parses back to structurally equal rules.
impl fmt::Display for PolicySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, rule) in self.rules.iter().enumerate() {
            if i > 0 {
                f.write_str("\n\n")?;
            }
            write!(f, "{rule}")?;
        }
        if !self.rules.is_empty() {
            f.write_str("\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub actor_id: ActorId,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRef {
    pub entity_id: EntityId,
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub principal: Principal,
    pub action: String,
    pub resource: ResourceRef,
    pub context: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Approve,
    Reject,
    Escalate,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleEvaluation {
    pub rule_id: String,
    pub matched: bool,
    pub effect: Effect,
    pub annotations: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub evaluated_rules: Vec<RuleEvaluation>,
    /// Matched rule ids, escalate rules first, then forbid, then permit.
    pub explanation: Vec<String>,
}

fn names_match(c: &NameConstraint, actual: &str, group: impl Fn(&str) -> bool) -> bool {
    match c {
        NameConstraint::Any => true,
        NameConstraint::Eq(n) => n == actual,
        NameConstraint::In(ns) => ns.iter().any(|n| group(n)),
    }
}

fn head_matches(rule: &PolicyRule, req: &EvaluationRequest) -> bool {
    let role = req.principal.role;
    names_match(&rule.principal, role.as_str(), |n| role.matches_name(n))
        && names_match(&rule.action, &req.action, |n| n == req.action)
        && match &rule.resource {
            ResourceConstraint::Any => true,
            ResourceConstraint::Eq(id) => id == req.resource.entity_id.as_str(),
            ResourceConstraint::Is(t) => t == &req.resource.entity_type,
        }
}

struct Eval<'a> {
    rule_id: &'a str,
    context: &'a BTreeMap<String, Value>,
}

impl Eval<'_> {
    fn mismatch<T>(&self, message: String) -> Result<T, EvalError> {
        Err(EvalError::TypeMismatch { rule_id: self.rule_id.to_string(), message })
    }

    fn value(&self, e: &Expr) -> Result<Value, EvalError> {
        match e {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Attr(a) => self
                .context
                .get(a)
                .cloned()
                .ok_or_else(|| EvalError::MissingAttribute { rule_id: self.rule_id.to_string(), attribute: a.clone() }),
            other => Ok(Value::Bool(self.truth(other)?)),
        }
    }

    fn truth(&self, e: &Expr) -> Result<bool, EvalError> {
        match e {
            Expr::And(l, r) => Ok(self.truth(l)? && self.truth(r)?),
            Expr::Or(l, r) => Ok(self.truth(l)? || self.truth(r)?),
            Expr::Not(inner) => Ok(!self.truth(inner)?),
            Expr::Cmp(op, l, r) => {
                let (l, r) = (self.value(l)?, self.value(r)?);
                let ord = match compare(&l, &r) {
                    Some(o) => o,
                    None => return self.mismatch(format!("cannot compare {} with {}", l.kind_name(), r.kind_name())),
                };
                if op.is_ordering() && !matches!(l, Value::Int(_) | Value::Dec(_)) {
                    return self.mismatch(format!("`{}` requires numeric operands", op.symbol()));
                }
                Ok(match op {
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::Le => ord != Ordering::Greater,
                    CmpOp::Gt => ord == Ordering::Greater,
                    CmpOp::Ge => ord != Ordering::Less,
                    CmpOp::Eq => ord == Ordering::Equal,
                    CmpOp::Ne => ord != Ordering::Equal,
                })
            }
            leaf => match self.value(leaf)? {
                Value::Bool(b) => Ok(b),
                other => self.mismatch(format!("expected boolean, found {}", other.kind_name())),
            },
        }
    }
}

/// Integer and decimal values compare numerically; other kinds only with
/// themselves.
fn compare(l: &Value, r: &Value) -> Option<Ordering> {
    use crate::fixed::FIXED4_SCALE;
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
        (Value::Dec(a), Value::Dec(b)) => Some(a.cmp(b)),
        (Value::Int(a), Value::Dec(b)) => Some((*a as i128 * FIXED4_SCALE as i128).cmp(&(b.raw() as i128))),
        (Value::Dec(a), Value::Int(b)) => Some((a.raw() as i128).cmp(&(*b as i128 * FIXED4_SCALE as i128))),
        (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
        (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
        _ => None,
    }
}

pub fn evaluate(ps: &PolicySet, req: &EvaluationRequest) -> Result<Decision, EvalError> {
    let mut evaluated_rules = Vec::with_capacity(ps.rules.len());
    for rule in &ps.rules {
        let matched = head_matches(rule, req)
            && match &rule.condition {
                None => true,
                Some(cond) => Eval { rule_id: &rule.rule_id, context: &req.context }.truth(cond)?,
            };
        evaluated_rules.push(RuleEvaluation {
            rule_id: rule.rule_id.clone(),
            matched,
            effect: rule.effect,
            annotations: rule.annotations.clone(),
        });
    }

    let matched_with = |effect: Effect| -> Vec<String> {
        evaluated_rules.iter().filter(|r| r.matched && r.effect == effect).map(|r| r.rule_id.clone()).collect()
    };
    let escalates = matched_with(Effect::Escalate);
    let forbids = matched_with(Effect::Forbid);
    let permits = matched_with(Effect::Permit);

    let outcome = if !escalates.is_empty() {
        Outcome::Escalate
    } else if !forbids.is_empty() {
        Outcome::Reject
    } else if !permits.is_empty() {
        Outcome::Approve
    } else {
        Outcome::Reject
    };
    let explanation = escalates.into_iter().chain(forbids).chain(permits).collect();
    Ok(Decision { outcome, evaluated_rules, explanation })
}

/// Human-readable trace of a decision.
pub fn explain(decision: &Decision) -> String {
    let mut out = format!("decision: {}\n", decision.outcome);
    if decision.explanation.is_empty() {
        out.push_str("  no rule matched (default deny)\n");
    }
    for id in &decision.explanation {
        let Some(rule) = decision.evaluated_rules.iter().find(|r| &r.rule_id == id) else {
            continue;
        };
        out.push_str(&format!("  {} {}", rule.effect, rule.rule_id));
        for (k, v) in &rule.annotations {
            out.push_str(&format!(" @{k}({})", ast::quote(v)));
        }
        out.push('\n');
    }
    let unmatched = decision.evaluated_rules.iter().filter(|r| !r.matched).count();
    if unmatched > 0 {
        out.push_str(&format!("  ({unmatched} rule(s) not matched)\n"));
    }
    out
}

#[cfg(test)]
mod tests;
