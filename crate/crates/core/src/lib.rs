//! Intent governance for autonomous agents.
//!
//! Agents submit declarative [`IntentProposal`]s instead of calling
//! mutating APIs. Each proposal is arbitrated against its concurrent batch,
//! evaluated against a policy set over a context derived from the event
//! log, and, if approved, compiled into a short-lived [`ExecutionContract`]
//! enforced through a scoped task token. Every step lands in a hash-chained
//! [`EvidenceChain`] that can be verified and replayed offline.

pub mod chain;
pub mod cli;
pub mod contracts;
pub mod event;
pub mod fixed;
pub mod governance;
pub mod harness;
pub mod model;
pub mod policy;
pub mod state;
pub mod world;

pub use chain::{
    verify_bytes, verify_chain, ChainEntry, ChainError, Digest, EvidenceChain, FailureKind, VerificationReport,
};
pub use contracts::{
    compile_contract, AuthorizationOutcome, ContractError, DenyReason, ExecutionContract, TaskToken, TokenId,
    TokenRegistry,
};
pub use event::{EventKind, LifecycleEvent, Payload};
pub use fixed::{Fixed4, Score};
pub use governance::{
    arbitrate, detect_conflicts, govern, govern_batch, priority, recency, ArbitrationResult, DecisionReason,
    DecisionRecord, GovernanceConfig, GovernanceError,
};
pub use model::{
    Action, Actor, ActorId, ContractId, EntityId, Fact, FactAssertion, IntentId, IntentProposal, Role, Tick, Value,
};
pub use policy::{evaluate, Decision, EvaluationRequest, Outcome, PolicySet};
pub use state::{fold, replay_at, snapshot_context, ContextSnapshot, DerivedState, StateError};
pub use world::{execute, load_world, ExecRequest, ExecutionOutcome, WorldSpec, WorldState};
