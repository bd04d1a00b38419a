#![allow(dead_code)]

use std::path::PathBuf;

use kedge_core::chain::{ChainEntry, EvidenceChain};
use kedge_core::contracts::{AuthorizationOutcome, DenyReason};
use kedge_core::event::Payload;
use kedge_core::governance::GovernanceConfig;
use kedge_core::harness::Scenario;
use kedge_core::model::{
    Action, ActorId, ContractId, EntityId, Fact, FactAssertion, IntentId, IntentProposal, Role, Value,
};
use kedge_core::world::{Attempt, ExecutionOutcome};
use kedge_core::Fixed4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const OWNER_RULE: &str = r#"forbid (
    principal in Role::"Agent",
    action == Action::"UpdateOperatingStatus",
    resource
)
when {
    context.time_since_owner_update < 3600 &&
    context.trust_score < 0.8
};
"#;

pub const CORPUS: [&str; 8] = [
    "authority_conflict",
    "trust_race",
    "orthogonal_merge",
    "stale_preemption",
    "unsafe_deletion",
    "traffic_blind_scaling",
    "destructive_loop",
    "determinism_10k",
];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

pub fn load_scenario(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name), None).unwrap()
}

pub fn trust(raw: i64) -> Fixed4 {
    Fixed4::from_raw(raw)
}

pub fn proposal(
    id: &str,
    actor: &str,
    role: Role,
    trust_raw: i64,
    action: Action,
    target: &str,
    facts: &[(&str, Value)],
) -> IntentProposal {
    let cfg = GovernanceConfig::default();
    IntentProposal {
        intent_id: IntentId::new(id),
        actor: cfg.actor(actor, role, trust(trust_raw)),
        action,
        target: EntityId::new(target),
        asserted_facts: facts
            .iter()
            .map(|(k, v)| FactAssertion {
                entity_id: EntityId::new(target),
                key: k.to_string(),
                value: v.clone(),
                valid_until: None,
            })
            .collect(),
        origin_tick: 0,
        batch_id: "b".into(),
    }
}

pub fn status(id: &str, actor: &str, role: Role, trust_raw: i64, value: &str) -> IntentProposal {
    proposal(
        id,
        actor,
        role,
        trust_raw,
        Action::UpdateOperatingStatus,
        "store-1",
        &[("operating_status", Value::from(value))],
    )
}

pub fn outcome_payload(intent: &str, target: &str, effect: Vec<Fact>, tick: u64) -> Payload {
    let auth = if effect.is_empty() {
        AuthorizationOutcome::Deny(DenyReason::OutOfScope)
    } else {
        AuthorizationOutcome::Allow
    };
    Payload::ExecutionOutcome(ExecutionOutcome {
        intent_id: IntentId::new(intent),
        contract_id: ContractId(format!("ct-{intent}")),
        attempted: Attempt { action: Action::UpdateMetric, resource: EntityId::new(target) },
        authorization: auth,
        effect,
        completed_at: tick,
    })
}

/// A random structurally valid log: proposals followed by outcomes with
/// random facts, validity windows and roles. Built directly on the chain,
/// bypassing governance, so fold/apply see shapes the pipeline rarely makes.
pub fn fuzz_log(seed: u64, len: usize) -> Vec<ChainEntry> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut chain = EvidenceChain::new();
    let mut tick = rng.gen_range(0..50u64);
    let mut intents: Vec<IntentId> = Vec::new();
    let cfg = GovernanceConfig::default();
    while chain.len() < len {
        tick += rng.gen_range(0..4u64);
        if intents.is_empty() || rng.gen_bool(0.35) {
            let id = IntentId(format!("f{}", intents.len()));
            let role = Role::ALL[rng.gen_range(0..4)];
            let p = IntentProposal {
                intent_id: id.clone(),
                actor: cfg.actor(format!("a{}", rng.gen_range(0..4)), role, trust(rng.gen_range(0..=10_000))),
                action: Action::UpdateMetric,
                target: EntityId(format!("e{}", rng.gen_range(0..5))),
                asserted_facts: Vec::new(),
                origin_tick: tick,
                batch_id: format!("batch-{tick}"),
            };
            chain.record(id.clone(), p.actor.actor_id.clone(), tick, Payload::IntentProposed(p)).unwrap();
            intents.push(id);
        } else {
            let id = intents[rng.gen_range(0..intents.len())].clone();
            let effect: Vec<Fact> = (0..rng.gen_range(0..3))
                .map(|_| Fact {
                    entity_id: EntityId(format!("e{}", rng.gen_range(0..5))),
                    key: ["status", "metric", "owner"][rng.gen_range(0..3)].to_string(),
                    value: Value::Int(rng.gen_range(0..100)),
                    asserted_by: ActorId::new("a"),
                    asserted_at: tick,
                    valid_until: rng.gen_bool(0.4).then(|| tick + rng.gen_range(0..8)),
                })
                .collect();
            let target = effect.first().map_or_else(|| "e0".to_string(), |f| f.entity_id.to_string());
            let payload = outcome_payload(id.as_str(), &target, effect, tick);
            chain.record(id, ActorId::new("a"), tick, payload).unwrap();
        }
    }
    chain.into_entries()
}

pub fn kedge(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("kedge").chain(args.iter().copied());
    let code = kedge_core::cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn last_tick(c: &EvidenceChain) -> u64 {
    c.entries().last().map_or(0, |e| e.event.logical_time)
}

fn effectful(intent: &str, contract: &str, value: &str, tick: u64) -> Payload {
    Payload::ExecutionOutcome(ExecutionOutcome {
        intent_id: IntentId::new(intent),
        contract_id: ContractId::new(contract),
        attempted: Attempt { action: Action::UpdateOperatingStatus, resource: EntityId::new("store-1") },
        authorization: AuthorizationOutcome::Allow,
        effect: vec![Fact {
            entity_id: EntityId::new("store-1"),
            key: "operating_status".into(),
            value: Value::from(value),
            asserted_by: ActorId::new("agent-1"),
            asserted_at: tick,
            valid_until: None,
        }],
        completed_at: tick,
    })
}

/// The authority_conflict log with an effectful outcome for the rejected
/// retry that no contract covers. Returns the log and the forged event id.
pub fn forged_outcome_log() -> (Vec<ChainEntry>, String) {
    let mut c = kedge_core::harness::execute_scenario(&load_scenario("authority_conflict")).unwrap().chain;
    let t = last_tick(&c);
    let id = c
        .record(
            IntentId::new("i-close-retry"),
            ActorId::new("agent-1"),
            t,
            effectful("i-close-retry", "ct-forged", "closed", t),
        )
        .unwrap()
        .event
        .event_id
        .clone();
    (c.into_entries(), id)
}

/// The authority_conflict log in which the arbitration loser also wrote.
pub fn double_write_log() -> Vec<ChainEntry> {
    let mut c = kedge_core::harness::execute_scenario(&load_scenario("authority_conflict")).unwrap().chain;
    let t = last_tick(&c);
    c.record(IntentId::new("i-close"), ActorId::new("agent-1"), t, effectful("i-close", "ct-i-open", "closed", t))
        .unwrap();
    c.into_entries()
}

/// The authority_conflict log cut right after the first contract was issued.
pub fn starved_contract_log() -> Vec<ChainEntry> {
    let run = kedge_core::harness::execute_scenario(&load_scenario("authority_conflict")).unwrap();
    let entries = run.chain.into_entries();
    let cut = entries.iter().position(|e| e.event.as_contract().is_some()).unwrap() + 1;
    entries[..cut].to_vec()
}

pub fn stores(n: usize) -> kedge_core::world::WorldState {
    let spec = kedge_core::world::WorldSpec {
        resources: (0..n)
            .map(|k| kedge_core::world::ResourceSpec {
                id: EntityId(format!("store-{k}")),
                kind: kedge_core::world::ResourceKind::Store,
                attributes: Default::default(),
            })
            .collect(),
        ..kedge_core::world::WorldSpec::default()
    };
    kedge_core::world::load_world(&spec).unwrap()
}

/// Random batch over a handful of stores, keys and values; some proposals
/// stale, some with exact priority ties.
pub fn random_batch(seed: u64) -> Vec<IntentProposal> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let cfg = GovernanceConfig::default();
    let n = rng.gen_range(1..10);
    (0..n)
        .map(|k| {
            let target = EntityId(format!("store-{}", rng.gen_range(0..3)));
            let action = if rng.gen_bool(0.1) { Action::TerminateInstance } else { Action::UpdateMetric };
            let role = Role::ALL[rng.gen_range(0..4)];
            let trust = Fixed4::from_raw(rng.gen_range(0..=4) * 2_500);
            IntentProposal {
                intent_id: IntentId(format!("i-{k:02}")),
                actor: cfg.actor(format!("actor-{}", rng.gen_range(0..5)), role, trust),
                action,
                target: target.clone(),
                asserted_facts: vec![kedge_core::FactAssertion {
                    entity_id: target,
                    key: ["a", "b"][rng.gen_range(0..2)].into(),
                    value: Value::Int(rng.gen_range(0..3)),
                    valid_until: None,
                }],
                origin_tick: rng.gen_range(0..5_000),
                batch_id: "b".into(),
            }
        })
        .collect()
}
