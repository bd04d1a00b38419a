//! Scenario runner: drives proposals through governance, contract
//! compilation, token minting and execution, then checks the resulting log.

mod invariants;
mod scenario;
mod workload;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainEntry, ChainError, Digest, EvidenceChain};
use crate::contracts::{compile_contract, ContractError, TokenRegistry};
use crate::governance::{govern_batch, ArbitrationResult, GovernContext, GovernanceError};
use crate::model::{FactAssertion, IntentId, IntentProposal};
use crate::policy::{Outcome, PolicySet};
use crate::state::{DerivedState, StateError};
use crate::world::{execute, load_world, ExecRequest, WorldState};

pub use invariants::{
    audit_world_containment, check_invariant_1, check_invariant_2, check_invariant_3, conflict_pairs_from_log,
    InvariantResult, InvariantResults,
};
pub use scenario::{
    ActorSpec, ExecCounts, Expectations, ExpectedFact, Hallucination, IntentStatus, Scenario, ScriptStep, StepFact,
};
pub use workload::{generate_workload, ActorMix, WorkloadParams, WORKLOAD_POLICIES};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("bad workload parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub entries: usize,
    pub log_digest: Digest,
    pub state_digest: Digest,
    pub outcomes: BTreeMap<IntentId, IntentStatus>,
    pub invariants: InvariantResults,
    pub expectation_diffs: Vec<String>,
    pub wall_time_ms: u64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.invariants.all_passed() && self.expectation_diffs.is_empty()
    }

    /// Field equality ignoring wall time.
    pub fn same_run_as(&self, other: &RunReport) -> bool {
        let strip = |r: &RunReport| RunReport { wall_time_ms: 0, ..r.clone() };
        serde_json::to_value(strip(self)).ok() == serde_json::to_value(strip(other)).ok()
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: RunReport,
    pub chain: EvidenceChain,
    pub state: DerivedState,
    pub initial_world: WorldState,
    pub world: WorldState,
    pub arbitrations: Vec<ArbitrationResult>,
}

/// Final status of each proposed intent, derived from the log alone.
pub fn intent_outcomes(entries: &[ChainEntry]) -> BTreeMap<IntentId, IntentStatus> {
    let mut out = BTreeMap::new();
    let mut executed = BTreeSet::new();
    for e in entries {
        match &e.event.payload {
            crate::event::Payload::DecisionRendered(d) => {
                let status = match d.outcome {
                    Outcome::Approve => IntentStatus::Denied,
                    Outcome::Reject => IntentStatus::Rejected,
                    Outcome::Escalate => IntentStatus::Escalated,
                };
                out.insert(e.event.intent_id.clone(), status);
            }
            crate::event::Payload::ExecutionOutcome(o) if o.is_effectful() => {
                executed.insert(o.intent_id.clone());
            }
            _ => {}
        }
    }
    for id in executed {
        out.insert(id, IntentStatus::Executed);
    }
    out
}

fn execution_counts(entries: &[ChainEntry]) -> BTreeMap<IntentId, ExecCounts> {
    let mut out: BTreeMap<IntentId, ExecCounts> = BTreeMap::new();
    for o in entries.iter().filter_map(|e| e.event.as_outcome()) {
        let c = out.entry(o.intent_id.clone()).or_insert(ExecCounts { allowed: 0, denied: 0 });
        if o.authorization.is_allow() {
            c.allowed += 1;
        } else {
            c.denied += 1;
        }
    }
    out
}

pub fn check_invariants(entries: &[ChainEntry], before: &WorldState, after: &WorldState) -> InvariantResults {
    InvariantResults {
        execution_event_consistency: check_invariant_1(entries),
        conflict_safety: check_invariant_2(entries, &conflict_pairs_from_log(entries)),
        liveness: check_invariant_3(entries),
        world_containment: audit_world_containment(before, after, entries),
    }
}

fn expectation_diffs(
    expected: &Expectations,
    entries: &[ChainEntry],
    outcomes: &BTreeMap<IntentId, IntentStatus>,
    state: &DerivedState,
    world: &WorldState,
) -> Vec<String> {
    let mut diffs = Vec::new();
    for (id, want) in &expected.outcomes {
        let got = outcomes.get(id);
        if got != Some(want) {
            diffs.push(format!("intent {id}: expected {want:?}, got {got:?}"));
        }
    }
    if !expected.reasons.is_empty() {
        let reasons: BTreeMap<&IntentId, _> =
            entries.iter().filter_map(|e| e.event.as_decision().map(|d| (&e.event.intent_id, d.reason))).collect();
        for (id, want) in &expected.reasons {
            let got = reasons.get(id);
            if got != Some(want) {
                diffs.push(format!("intent {id}: expected reason {want:?}, got {got:?}"));
            }
        }
    }
    for f in &expected.facts {
        let got = state.fact(&f.entity, &f.key).map(|x| &x.value);
        if got != f.value.as_ref() {
            diffs.push(format!("fact {}.{}: expected {:?}, got {got:?}", f.entity, f.key, f.value));
        }
    }
    if !expected.execution.is_empty() {
        let counts = execution_counts(entries);
        for (id, want) in &expected.execution {
            let got = counts.get(id).copied().unwrap_or(ExecCounts { allowed: 0, denied: 0 });
            if got != *want {
                diffs.push(format!(
                    "intent {id}: expected {}/{} allowed/denied, got {}/{}",
                    want.allowed, want.denied, got.allowed, got.denied
                ));
            }
        }
    }
    for (id, want) in &expected.alive {
        let got = world.resources.get(id).map(|r| r.alive);
        if got != Some(*want) {
            diffs.push(format!("resource {id}: expected alive={want}, got {got:?}"));
        }
    }
    diffs
}

fn execution_requests(
    proposal: &IntentProposal,
    step: &ScriptStep,
    scope: &BTreeSet<crate::model::EntityId>,
    world: &WorldState,
    rng: &mut ChaCha20Rng,
    now: u64,
) -> Vec<ExecRequest> {
    let mut requests: Vec<ExecRequest> = scope
        .iter()
        .map(|entity| ExecRequest {
            action: proposal.action,
            resource: entity.clone(),
            facts: proposal.asserted_facts.iter().filter(|f| &f.entity_id == entity).cloned().collect(),
            at: now,
        })
        .collect();

    if let Some(h) = &step.hallucination {
        let candidates: Vec<_> = world
            .resources
            .values()
            .filter(|r| r.kind == h.kind && !scope.contains(&r.entity_id))
            .map(|r| r.entity_id.clone())
            .collect();
        let action = h.action.unwrap_or(proposal.action);
        for _ in 0..h.count {
            let Some(victim) = candidates.choose(rng) else { break };
            let facts = proposal
                .asserted_facts
                .iter()
                .map(|f| FactAssertion { entity_id: victim.clone(), ..f.clone() })
                .collect();
            requests.push(ExecRequest { action, resource: victim.clone(), facts, at: now });
        }
    }
    requests
}

/// Runs a scenario end to end and keeps every artifact.
pub fn execute_scenario(s: &Scenario) -> Result<ScenarioRun, ScenarioError> {
    let started = Instant::now();
    s.validate()?;
    let policies = PolicySet::parse(&s.policies).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let initial_world = load_world(&s.world).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let mut world = initial_world.clone();
    let mut registry = TokenRegistry::seeded(s.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(s.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut chain = EvidenceChain::new();
    let mut state = DerivedState::empty();
    let mut arbitrations = Vec::new();

    for (tick, steps) in s.batches() {
        let proposals = steps.iter().map(|st| s.proposal(st)).collect::<Result<Vec<_>, _>>()?;
        let start = chain.len();
        let governed = {
            let ctx = GovernContext { state: &state, world: &world, policies: &policies, config: &s.config };
            govern_batch(&proposals, &ctx, &mut chain, tick)?
        };

        for (proposal, decision) in &governed.decisions {
            if decision.event.as_decision().map(|d| d.outcome) != Some(Outcome::Approve) {
                continue;
            }
            let step = steps.iter().find(|st| st.intent_id == proposal.intent_id).expect("step for proposal");
            let contract = compile_contract(decision, proposal, tick, s.config.contract_ttl, &mut chain)?;
            let token = registry.mint(&contract, tick)?;
            let requests = execution_requests(proposal, step, &contract.resource_scope, &world, &mut rng, tick);
            execute(
                &contract,
                &token.token_id,
                &registry,
                &requests,
                &mut world,
                &mut chain,
                &proposal.actor.actor_id,
            )?;
            registry.revoke(&token.token_id)?;
        }
        arbitrations.push(governed.arbitration);

        for entry in &chain.entries()[start..] {
            state.apply_mut(entry)?;
        }
    }

    let entries = chain.entries();
    let outcomes = intent_outcomes(entries);
    let invariants = check_invariants(entries, &initial_world, &world);
    let expectation_diffs = expectation_diffs(&s.expected, entries, &outcomes, &state, &world);
    let report = RunReport {
        scenario: s.name.clone(),
        seed: s.seed,
        entries: entries.len(),
        log_digest: chain.head_digest(),
        state_digest: state.state_digest(),
        outcomes,
        invariants,
        expectation_diffs,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    Ok(ScenarioRun { report, chain, state, initial_world, world, arbitrations })
}

pub fn run_scenario(s: &Scenario) -> Result<RunReport, ScenarioError> {
    Ok(execute_scenario(s)?.report)
}

/// Runs a scenario `repetitions` times; passes iff every run yields the same
/// log and state digests.
pub fn determinism_run(s: &Scenario, repetitions: usize) -> Result<bool, ScenarioError> {
    if repetitions < 2 {
        return Err(ScenarioError::BadParams("determinism_run needs at least 2 repetitions".into()));
    }
    let first = run_scenario(s)?;
    for _ in 1..repetitions {
        let next = run_scenario(s)?;
        if next.log_digest != first.log_digest || next.state_digest != first.state_digest {
            return Ok(false);
        }
    }
    Ok(true)
}
