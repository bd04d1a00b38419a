//! Lifecycle events recorded in the evidence chain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contracts::ExecutionContract;
use crate::governance::DecisionRecord;
use crate::model::{ActorId, IntentId, IntentProposal, Tick};
use crate::state::ContextSnapshot;
use crate::world::ExecutionOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    IntentProposed,
    ContextSnapshotted,
    DecisionRendered,
    ContractIssued,
    ExecutionOutcome,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Kind-specific event body. The kind tag and the payload shape cannot
/// disagree because both come from the same variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Payload {
    IntentProposed(IntentProposal),
    ContextSnapshotted(ContextSnapshot),
    DecisionRendered(DecisionRecord),
    ContractIssued(ExecutionContract),
    ExecutionOutcome(ExecutionOutcome),
}

impl Payload {
    pub fn kind(&self) -> EventKind {
        match self {
            Payload::IntentProposed(_) => EventKind::IntentProposed,
            Payload::ContextSnapshotted(_) => EventKind::ContextSnapshotted,
            Payload::DecisionRendered(_) => EventKind::DecisionRendered,
            Payload::ContractIssued(_) => EventKind::ContractIssued,
            Payload::ExecutionOutcome(_) => EventKind::ExecutionOutcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleEvent {
    pub event_id: String,
    pub intent_id: IntentId,
    pub logical_time: Tick,
    pub actor_id: ActorId,
    #[serde(flatten)]
    pub payload: Payload,
}

impl LifecycleEvent {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn as_intent(&self) -> Option<&IntentProposal> {
        match &self.payload {
            Payload::IntentProposed(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_decision(&self) -> Option<&DecisionRecord> {
        match &self.payload {
            Payload::DecisionRendered(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_contract(&self) -> Option<&ExecutionContract> {
        match &self.payload {
            Payload::ContractIssued(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_outcome(&self) -> Option<&ExecutionOutcome> {
        match &self.payload {
            Payload::ExecutionOutcome(o) => Some(o),
            _ => None,
        }
    }
}
