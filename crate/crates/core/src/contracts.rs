//! Execution contracts and the task tokens that enforce them.
//!
//! A contract bounds one approved intent to a single action over an explicit
//! resource set inside a closed tick window. A [`TaskToken`] carries a copy of
//! those bounds; [`TokenRegistry::authorize`] is the enforcement point.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainEntry, ChainError, EvidenceChain};
use crate::event::Payload;
use crate::model::{Action, ActorId, ContractId, EntityId, IntentId, IntentProposal, Tick};
use crate::policy::Outcome;

pub const DEFAULT_TTL: Tick = 300;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionContract {
    pub contract_id: ContractId,
    pub intent_id: IntentId,
    pub action: Action,
    pub resource_scope: BTreeSet<EntityId>,
    pub valid_from: Tick,
    pub valid_until: Tick,
    pub issued_at: Tick,
}

impl ExecutionContract {
    /// Closed-form membership in {action} x scope x [valid_from, valid_until].
    pub fn permits(&self, action: Action, resource: &EntityId, tick: Tick) -> bool {
        action == self.action
            && self.resource_scope.contains(resource)
            && (self.valid_from..=self.valid_until).contains(&tick)
    }

    pub fn scope(&self) -> TokenScope {
        TokenScope {
            action: self.action,
            resource_scope: self.resource_scope.clone(),
            valid_from: self.valid_from,
            valid_until: self.valid_until,
        }
    }
}

impl fmt::Display for ExecutionContract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scope: Vec<&str> = self.resource_scope.iter().map(EntityId::as_str).collect();
        write!(
            f,
            "{} ({}, {{{}}}, [{}, {}])",
            self.contract_id,
            self.action,
            scope.join(", "),
            self.valid_from,
            self.valid_until
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ContractError {
    #[error("intent `{0}` was not approved")]
    NotApproved(IntentId),
    #[error("decision is for intent `{decision}`, proposal is `{proposal}`")]
    IntentMismatch { decision: IntentId, proposal: IntentId },
    #[error("contract expired at tick {valid_until}, now {now}")]
    Expired { now: Tick, valid_until: Tick },
    #[error("unknown token `{0}`")]
    UnknownToken(TokenId),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Compiles an approved decision into a contract and records it.
pub fn compile_contract(
    decision: &ChainEntry,
    proposal: &IntentProposal,
    now: Tick,
    ttl: Tick,
    chain: &mut EvidenceChain,
) -> Result<ExecutionContract, ContractError> {
    let approved = decision.event.as_decision().is_some_and(|d| d.outcome == Outcome::Approve);
    if decision.event.intent_id != proposal.intent_id {
        return Err(ContractError::IntentMismatch {
            decision: decision.event.intent_id.clone(),
            proposal: proposal.intent_id.clone(),
        });
    }
    if !approved {
        return Err(ContractError::NotApproved(proposal.intent_id.clone()));
    }

    let contract = ExecutionContract {
        contract_id: ContractId(format!("ct-{}", proposal.intent_id)),
        intent_id: proposal.intent_id.clone(),
        action: proposal.action,
        resource_scope: proposal.touched_entities(),
        valid_from: now,
        valid_until: now + ttl,
        issued_at: now,
    };
    chain.record(proposal.intent_id.clone(), ActorId::new("system"), now, Payload::ContractIssued(contract.clone()))?;
    Ok(contract)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub String);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenScope {
    pub action: Action,
    pub resource_scope: BTreeSet<EntityId>,
    pub valid_from: Tick,
    pub valid_until: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskToken {
    pub token_id: TokenId,
    pub contract_id: ContractId,
    pub scope: TokenScope,
    pub revoked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DenyReason {
    Revoked,
    WrongAction,
    OutOfScope,
    Expired,
    /// The target was already terminated.
    ResourceTerminated,
    /// The request would drive cluster capacity below zero.
    CapacityFloor,
    UnknownResource,
    /// The request is inapplicable to the resource (wrong kind, missing value).
    InvalidRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuthorizationOutcome {
    Allow,
    Deny(DenyReason),
}

impl AuthorizationOutcome {
    pub fn is_allow(self) -> bool {
        self == AuthorizationOutcome::Allow
    }
}

impl fmt::Display for AuthorizationOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuthorizationOutcome::Allow => f.write_str("Allow"),
            AuthorizationOutcome::Deny(r) => write!(f, "Deny({r:?})"),
        }
    }
}

impl TaskToken {
    /// The scope check alone; revocation is taken from the token's own flag.
    pub fn check(&self, action: Action, resource: &EntityId, now: Tick) -> AuthorizationOutcome {
        use AuthorizationOutcome::*;
        if self.revoked {
            Deny(DenyReason::Revoked)
        } else if now < self.scope.valid_from || now > self.scope.valid_until {
            Deny(DenyReason::Expired)
        } else if action != self.scope.action {
            Deny(DenyReason::WrongAction)
        } else if !self.scope.resource_scope.contains(resource) {
            Deny(DenyReason::OutOfScope)
        } else {
            Allow
        }
    }
}

/// Issuance registry. Single writer; `authorize` only reads.
#[derive(Debug, Clone)]
pub struct TokenRegistry {
    rng: ChaCha20Rng,
    tokens: BTreeMap<TokenId, TaskToken>,
    live: BTreeMap<ContractId, TokenId>,
}

impl TokenRegistry {
    /// Deterministic token ids for reproducible simulation runs.
    pub fn seeded(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed), tokens: BTreeMap::new(), live: BTreeMap::new() }
    }

    pub fn from_entropy() -> Self {
        Self { rng: ChaCha20Rng::from_entropy(), tokens: BTreeMap::new(), live: BTreeMap::new() }
    }

    pub fn get(&self, id: &TokenId) -> Option<&TaskToken> {
        self.tokens.get(id)
    }

    pub fn live_token(&self, contract: &ContractId) -> Option<&TaskToken> {
        self.live.get(contract).and_then(|id| self.tokens.get(id))
    }

    /// Issues a fresh token; a previously live token for the same contract is
    /// revoked first.
    pub fn mint(&mut self, contract: &ExecutionContract, now: Tick) -> Result<TaskToken, ContractError> {
        if now > contract.valid_until {
            return Err(ContractError::Expired { now, valid_until: contract.valid_until });
        }
        if let Some(prev) = self.live.remove(&contract.contract_id) {
            if let Some(t) = self.tokens.get_mut(&prev) {
                t.revoked = true;
            }
        }
        let token_id = loop {
            let candidate = TokenId(format!("{:032x}", self.rng.gen::<u128>()));
            if !self.tokens.contains_key(&candidate) {
                break candidate;
            }
        };
        let token = TaskToken {
            token_id: token_id.clone(),
            contract_id: contract.contract_id.clone(),
            scope: contract.scope(),
            revoked: false,
        };
        self.tokens.insert(token_id.clone(), token.clone());
        self.live.insert(contract.contract_id.clone(), token_id);
        Ok(token)
    }

    /// Unregistered tokens are treated like revoked ones.
    pub fn authorize(&self, token: &TokenId, action: Action, resource: &EntityId, now: Tick) -> AuthorizationOutcome {
        match self.tokens.get(token) {
            Some(t) => t.check(action, resource, now),
            None => AuthorizationOutcome::Deny(DenyReason::Revoked),
        }
    }

    pub fn revoke(&mut self, token: &TokenId) -> Result<(), ContractError> {
        let t = self.tokens.get_mut(token).ok_or_else(|| ContractError::UnknownToken(token.clone()))?;
        t.revoked = true;
        if self.live.get(&t.contract_id) == Some(token) {
            self.live.remove(&t.contract_id);
        }
        Ok(())
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contract() -> ExecutionContract {
        ExecutionContract {
            contract_id: ContractId::new("ct-1"),
            intent_id: IntentId::new("i-1"),
            action: Action::TerminateInstance,
            resource_scope: [EntityId::new("i-042")].into_iter().collect(),
            valid_from: 100,
            valid_until: 400,
            issued_at: 100,
        }
    }

    #[test]
    fn fresh_token_copies_bounds() {
        let mut reg = TokenRegistry::seeded(7);
        let c = contract();
        let t = reg.mint(&c, 100).unwrap();
        assert_eq!(t.scope, c.scope());
        assert_eq!(t.token_id.0.len(), 32);
        assert!(!t.revoked);
    }

    #[test]
    fn mint_after_expiry_fails() {
        let mut reg = TokenRegistry::seeded(7);
        assert!(matches!(reg.mint(&contract(), 401), Err(ContractError::Expired { .. })));
        assert!(reg.mint(&contract(), 400).is_ok());
    }

    #[test]
    fn second_mint_revokes_first() {
        let mut reg = TokenRegistry::seeded(7);
        let c = contract();
        let first = reg.mint(&c, 100).unwrap();
        let i042 = EntityId::new("i-042");
        assert_eq!(reg.authorize(&first.token_id, Action::TerminateInstance, &i042, 150), AuthorizationOutcome::Allow);
        let second = reg.mint(&c, 120).unwrap();
        assert_ne!(first.token_id, second.token_id);
        assert_eq!(
            reg.authorize(&first.token_id, Action::TerminateInstance, &i042, 150),
            AuthorizationOutcome::Deny(DenyReason::Revoked)
        );
        assert_eq!(reg.authorize(&second.token_id, Action::TerminateInstance, &i042, 150), AuthorizationOutcome::Allow);
        assert_eq!(reg.live_count(), 1);
    }

    #[test]
    fn authorize_boundaries() {
        let mut reg = TokenRegistry::seeded(1);
        let t = reg.mint(&contract(), 100).unwrap().token_id;
        let i042 = EntityId::new("i-042");
        let deny = AuthorizationOutcome::Deny;
        assert_eq!(reg.authorize(&t, Action::TerminateInstance, &i042, 100), AuthorizationOutcome::Allow);
        assert_eq!(reg.authorize(&t, Action::TerminateInstance, &i042, 400), AuthorizationOutcome::Allow);
        assert_eq!(reg.authorize(&t, Action::TerminateInstance, &i042, 401), deny(DenyReason::Expired));
        assert_eq!(reg.authorize(&t, Action::TerminateInstance, &i042, 99), deny(DenyReason::Expired));
        assert_eq!(
            reg.authorize(&t, Action::TerminateInstance, &EntityId::new("i-043"), 200),
            deny(DenyReason::OutOfScope)
        );
        assert_eq!(reg.authorize(&t, Action::ScaleCluster, &i042, 200), deny(DenyReason::WrongAction));
    }

    #[test]
    fn revoke_semantics() {
        let mut reg = TokenRegistry::seeded(1);
        let t = reg.mint(&contract(), 100).unwrap().token_id;
        reg.revoke(&t).unwrap();
        assert_eq!(
            reg.authorize(&t, Action::TerminateInstance, &EntityId::new("i-042"), 200),
            AuthorizationOutcome::Deny(DenyReason::Revoked)
        );
        let snapshot = reg.get(&t).cloned();
        reg.revoke(&t).unwrap();
        assert_eq!(reg.get(&t).cloned(), snapshot);
        assert_eq!(reg.live_count(), 0);
        assert!(matches!(reg.revoke(&TokenId("nope".into())), Err(ContractError::UnknownToken(_))));
    }

    #[test]
    fn seeded_registries_agree() {
        let mut a = TokenRegistry::seeded(42);
        let mut b = TokenRegistry::seeded(42);
        assert_eq!(a.mint(&contract(), 100).unwrap(), b.mint(&contract(), 100).unwrap());
    }
}
