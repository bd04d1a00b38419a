//! Recursive-descent parser for `.kpol` policy files.
//!
//! ```text
//! rule      := annotation* effect "(" principal "," action "," resource ")" ["when" "{" expr "}"] ";"
//! effect    := "permit" | "forbid" | "escalate"
//! principal := "principal" [("==" | "in") role-ref | "in" "[" role-ref ("," role-ref)* "]"]
//! action    := "action"    [("==" | "in") action-ref | "in" "[" action-ref ("," action-ref)* "]"]
//! resource  := "resource"  ["==" entity-ref | "is" Ident]
//! expr      := and ("||" and)*
//! and       := unary ("&&" unary)*
//! unary     := "!" unary | cmp
//! cmp       := primary [("<"|"<="|">"|">="|"=="|"!=") primary]
//! primary   := literal | "context" "." Ident | "(" expr ")"
//! ```

use std::collections::{BTreeMap, HashSet};

use crate::model::Value;

use super::ast::{CmpOp, Effect, Expr, NameConstraint, PolicyRule, ResourceConstraint};
use super::lexer::{tokenize, Pos, Tok, Token};
use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Str,
    Bool,
    Unknown,
}

impl Ty {
    fn name(self) -> &'static str {
        match self {
            Ty::Num => "number",
            Ty::Str => "string",
            Ty::Bool => "boolean",
            Ty::Unknown => "attribute",
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    end: Pos,
}

pub(super) fn parse_rules(src: &str) -> Result<Vec<PolicyRule>, ParseError> {
    let toks = tokenize(src)?;
    let end = src.lines().count().max(1);
    let end = Pos { line: end, col: src.lines().last().map_or(1, |l| l.chars().count() + 1) };
    let mut p = Parser { toks, i: 0, end };
    let mut rules = Vec::new();
    let mut ids = HashSet::new();
    while !p.at_end() {
        let rule = p.rule(rules.len())?;
        if !ids.insert(rule.rule_id.clone()) {
            return Err(ParseError::DuplicateRuleId(rule.rule_id));
        }
        rules.push(rule);
    }
    Ok(rules)
}

impl Parser {
    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map_or(self.end, |t| t.pos)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let pos = self.pos();
        Err(ParseError::Syntax { line: pos.line, col: pos.col, message: message.into() })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|t| t.tok.clone());
        self.i += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(w)) if w == word)
    }

    fn keyword(&mut self, word: &str) -> Result<(), ParseError> {
        if self.is_ident(word) {
            self.i += 1;
            Ok(())
        } else {
            self.err(format!("expected `{word}`"))
        }
    }

    fn string(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn rule(&mut self, ordinal: usize) -> Result<PolicyRule, ParseError> {
        let mut annotations = BTreeMap::new();
        let mut rule_id = None;
        while self.eat(&Tok::At) {
            let key = self.ident("annotation name")?;
            self.expect(Tok::LParen, "`(`")?;
            let value = self.string("annotation string")?;
            self.expect(Tok::RParen, "`)`")?;
            if key == "id" {
                rule_id = Some(value);
            } else {
                annotations.insert(key, value);
            }
        }

        let effect = match self.ident("`permit`, `forbid` or `escalate`")?.as_str() {
            "permit" => Effect::Permit,
            "forbid" => Effect::Forbid,
            "escalate" => Effect::Escalate,
            other => {
                self.i -= 1;
                return self.err(format!("unknown effect `{other}`"));
            }
        };
        self.expect(Tok::LParen, "`(`")?;
        self.keyword("principal")?;
        let principal = self.names("Role")?;
        self.expect(Tok::Comma, "`,`")?;
        self.keyword("action")?;
        let action = self.names("Action")?;
        self.expect(Tok::Comma, "`,`")?;
        self.keyword("resource")?;
        let resource = if self.eat(&Tok::Eq) {
            ResourceConstraint::Eq(self.name_ref("Entity")?)
        } else if self.is_ident("is") {
            self.i += 1;
            ResourceConstraint::Is(self.ident("entity type")?)
        } else {
            ResourceConstraint::Any
        };
        self.expect(Tok::RParen, "`)`")?;

        let condition = if self.is_ident("when") {
            self.i += 1;
            self.expect(Tok::LBrace, "`{`")?;
            let pos = self.pos();
            let (expr, ty) = self.expr()?;
            require_bool(ty, pos, "condition")?;
            self.expect(Tok::RBrace, "`}`")?;
            Some(expr)
        } else {
            None
        };
        self.expect(Tok::Semi, "`;`")?;

        Ok(PolicyRule {
            rule_id: rule_id.unwrap_or_else(|| format!("policy{ordinal}")),
            effect,
            principal,
            action,
            resource,
            condition,
            annotations,
        })
    }

    /// `Ns::"name"` or a bare string.
    fn name_ref(&mut self, ns: &str) -> Result<String, ParseError> {
        if let Some(Tok::Ident(found)) = self.peek() {
            if found != ns {
                return self.err(format!("expected `{ns}::` reference, found `{found}`"));
            }
            self.i += 1;
            self.expect(Tok::PathSep, "`::`")?;
        }
        self.string(&format!("{ns} name"))
    }

    fn names(&mut self, ns: &str) -> Result<NameConstraint, ParseError> {
        if self.eat(&Tok::Eq) {
            return Ok(NameConstraint::Eq(self.name_ref(ns)?));
        }
        if !self.is_ident("in") {
            return Ok(NameConstraint::Any);
        }
        self.i += 1;
        if !self.eat(&Tok::LBracket) {
            return Ok(NameConstraint::In(vec![self.name_ref(ns)?]));
        }
        let mut names = vec![self.name_ref(ns)?];
        while self.eat(&Tok::Comma) {
            names.push(self.name_ref(ns)?);
        }
        self.expect(Tok::RBracket, "`]`")?;
        Ok(NameConstraint::In(names))
    }

    fn expr(&mut self) -> Result<(Expr, Ty), ParseError> {
        let pos = self.pos();
        let (mut lhs, mut ty) = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            let op_pos = self.pos();
            self.i += 1;
            let (rhs, rty) = self.and()?;
            require_bool(ty, pos, "`||` operand")?;
            require_bool(rty, op_pos, "`||` operand")?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
            ty = Ty::Bool;
        }
        Ok((lhs, ty))
    }

    fn and(&mut self) -> Result<(Expr, Ty), ParseError> {
        let pos = self.pos();
        let (mut lhs, mut ty) = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            let op_pos = self.pos();
            self.i += 1;
            let (rhs, rty) = self.unary()?;
            require_bool(ty, pos, "`&&` operand")?;
            require_bool(rty, op_pos, "`&&` operand")?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
            ty = Ty::Bool;
        }
        Ok((lhs, ty))
    }

    fn unary(&mut self) -> Result<(Expr, Ty), ParseError> {
        if self.peek() == Some(&Tok::Not) {
            let pos = self.pos();
            self.i += 1;
            let (e, ty) = self.unary()?;
            require_bool(ty, pos, "`!` operand")?;
            return Ok((Expr::Not(Box::new(e)), Ty::Bool));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<(Expr, Ty), ParseError> {
        let (lhs, lty) = self.primary()?;
        let op = match self.peek() {
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Ge) => CmpOp::Ge,
            Some(Tok::Eq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            _ => return Ok((lhs, lty)),
        };
        let pos = self.pos();
        self.i += 1;
        let (rhs, rty) = self.primary()?;
        check_comparison(op, lty, rty, pos)?;
        Ok((Expr::Cmp(op, Box::new(lhs), Box::new(rhs)), Ty::Bool))
    }

    fn primary(&mut self) -> Result<(Expr, Ty), ParseError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Int(v)) => Ok((Expr::Lit(Value::Int(v)), Ty::Num)),
            Some(Tok::Dec(v)) => Ok((Expr::Lit(Value::Dec(v)), Ty::Num)),
            Some(Tok::Str(s)) => Ok((Expr::Lit(Value::Str(s)), Ty::Str)),
            Some(Tok::Ident(w)) if w == "true" || w == "false" => Ok((Expr::Lit(Value::Bool(w == "true")), Ty::Bool)),
            Some(Tok::Ident(w)) if w == "context" => {
                self.expect(Tok::Dot, "`.` after `context`")?;
                Ok((Expr::Attr(self.ident("attribute name")?), Ty::Unknown))
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            _ => {
                self.i -= 1;
                Err(ParseError::Syntax { line: pos.line, col: pos.col, message: "expected expression".into() })
            }
        }
    }
}

fn type_error<T>(pos: Pos, message: String) -> Result<T, ParseError> {
    Err(ParseError::Type { line: pos.line, col: pos.col, message })
}

fn require_bool(ty: Ty, pos: Pos, what: &str) -> Result<(), ParseError> {
    match ty {
        Ty::Bool | Ty::Unknown => Ok(()),
        other => type_error(pos, format!("{what} must be boolean, found {}", other.name())),
    }
}

fn check_comparison(op: CmpOp, l: Ty, r: Ty, pos: Pos) -> Result<(), ParseError> {
    let mismatch = l != Ty::Unknown && r != Ty::Unknown && l != r;
    if mismatch {
        return type_error(pos, format!("cannot compare {} with {}", l.name(), r.name()));
    }
    if op.is_ordering() && [l, r].iter().any(|t| matches!(t, Ty::Str | Ty::Bool)) {
        return type_error(pos, format!("`{}` requires numeric operands", op.symbol()));
    }
    Ok(())
}
