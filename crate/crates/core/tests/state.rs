mod common;

use kedge_core::chain::{ChainEntry, EvidenceChain};
use kedge_core::event::Payload;
use kedge_core::harness::execute_scenario;
use kedge_core::model::{ActorId, EntityId, Fact, IntentId, Role, Value};
use kedge_core::state::{fold, replay_at, snapshot_context, DerivedState, StateError, NO_OWNER_UPDATE};
use kedge_core::world::{load_world, WorldSpec, WorldState};
use proptest::prelude::*;

use common::*;

fn fact(entity: &str, key: &str, value: Value, at: u64, until: Option<u64>) -> Fact {
    Fact {
        entity_id: EntityId::new(entity),
        key: key.into(),
        value,
        asserted_by: ActorId::new("owner"),
        asserted_at: at,
        valid_until: until,
    }
}

/// Proposal by `role` at `tick`, then one outcome carrying `effect`.
fn log_with_outcome(role: Role, tick: u64, effect: Vec<Fact>) -> Vec<ChainEntry> {
    let mut c = EvidenceChain::new();
    let p = status("i-1", "owner", role, 9_000, "open");
    c.record(IntentId::new("i-1"), ActorId::new("owner"), tick, Payload::IntentProposed(p)).unwrap();
    c.record(IntentId::new("i-1"), ActorId::new("owner"), tick, outcome_payload("i-1", "store-1", effect, tick))
        .unwrap();
    c.into_entries()
}

fn apply_all(mut s: DerivedState, entries: &[ChainEntry]) -> DerivedState {
    for e in entries {
        s = s.apply(e).unwrap();
    }
    s
}

#[test]
fn empty_fold() {
    let s = fold(&[]).unwrap();
    assert_eq!(s.fact_count(), 0);
    assert_eq!(s.event_count, 0);
    // SHA-256 of "[]": the canonical serialization of zero facts.
    assert_eq!(s.state_digest().to_hex(), "4f53cda18c2baa0c0354bb5f9a3ecbe5ed12ab4d8e11ba873c2f11161202b945");
}

#[test]
fn single_outcome_fold() {
    let f = fact("store-1", "operating_status", Value::from("open"), 5, None);
    let s = fold(&log_with_outcome(Role::Human, 5, vec![f.clone()])).unwrap();
    assert_eq!(s.fact_count(), 1);
    assert_eq!(s.fact(&EntityId::new("store-1"), "operating_status"), Some(&f));
    assert_eq!(s.last_human_update.get(&EntityId::new("store-1")), Some(&5));
    assert_eq!(s.event_count, 2);
}

#[test]
fn agent_outcomes_do_not_count_as_owner_updates() {
    let f = fact("store-1", "operating_status", Value::from("open"), 5, None);
    let s = fold(&log_with_outcome(Role::VerifiedAgent, 5, vec![f])).unwrap();
    assert!(s.last_human_update.is_empty());
}

#[test]
fn apply_examples() {
    let log = log_with_outcome(Role::Human, 5, vec![fact("store-1", "k", Value::Int(1), 5, None)]);
    let s = DerivedState::empty().apply(&log[0]).unwrap();
    assert_eq!(s.event_count, 1);
    assert_eq!(s.fact_count(), 0);

    let err = DerivedState::empty().apply(&log[1]).unwrap_err();
    assert!(matches!(err, StateError::IndexGap { expected: 0, got: 1 }));
}

#[test]
fn expired_fact_is_not_current() {
    let log = log_with_outcome(Role::Human, 20, vec![fact("store-1", "promo", Value::Int(1), 20, Some(10))]);
    let incremental = apply_all(DerivedState::empty(), &log);
    let batch = fold(&log).unwrap();
    assert_eq!(incremental.fact_count(), 0);
    assert_eq!(batch.fact_count(), 0);
    assert_eq!(incremental.state_digest(), batch.state_digest());
}

#[test]
fn fact_expires_once_time_passes_its_window() {
    let mut c = EvidenceChain::from_entries(log_with_outcome(
        Role::Human,
        10,
        vec![fact("store-1", "promo", Value::Int(1), 10, Some(12))],
    ));
    let p = status("i-2", "owner", Role::Human, 9_000, "open");
    c.record(IntentId::new("i-2"), ActorId::new("owner"), 12, Payload::IntentProposed(p.clone())).unwrap();
    assert_eq!(fold(c.entries()).unwrap().fact_count(), 1);
    c.record(IntentId::new("i-2"), ActorId::new("owner"), 13, outcome_payload("i-2", "store-1", vec![], 13)).unwrap();
    assert_eq!(fold(c.entries()).unwrap().fact_count(), 0);
    assert_eq!(apply_all(DerivedState::empty(), c.entries()).fact_count(), 0);
}

#[test]
fn malformed_outcome_is_refused() {
    let mut c = EvidenceChain::new();
    let p = status("i-1", "owner", Role::Human, 9_000, "open");
    c.record(IntentId::new("i-1"), ActorId::new("owner"), 1, Payload::IntentProposed(p)).unwrap();
    let mut payload = outcome_payload("i-1", "store-1", vec![fact("store-1", "k", Value::Int(1), 1, None)], 1);
    if let Payload::ExecutionOutcome(o) = &mut payload {
        o.authorization = kedge_core::AuthorizationOutcome::Deny(kedge_core::DenyReason::Expired);
    }
    c.record(IntentId::new("i-1"), ActorId::new("owner"), 1, payload).unwrap();
    assert!(matches!(fold(c.entries()), Err(StateError::MalformedEntry { index: 1, .. })));
}

fn world_with_dependents() -> WorldState {
    let spec: WorldSpec = serde_json::from_str(
        r#"{"version":1,
            "resources":[{"id":"i-042","kind":"ComputeInstance"},{"id":"svc-7","kind":"Service"},
                         {"id":"job-3","kind":"Service"},{"id":"store-1","kind":"Store"}],
            "dependencies":[{"dependent":"svc-7","dependency":"i-042"},{"dependent":"job-3","dependency":"i-042"}],
            "traffic":{"i-042":"normal"}}"#,
    )
    .unwrap();
    load_world(&spec).unwrap()
}

#[test]
fn snapshot_examples() {
    let world = world_with_dependents();
    let log =
        log_with_outcome(Role::Human, 100, vec![fact("store-1", "operating_status", Value::from("open"), 100, None)]);
    let state = fold(&log).unwrap();
    let agent = status("i-9", "agent", Role::VerifiedAgent, 6_000, "closed");

    let snap = snapshot_context(&state, &agent, &world, 1000).unwrap();
    assert_eq!(snap.int("time_since_owner_update"), Some(900));
    assert_eq!(snap.attributes["trust_score"], Value::Dec(trust(6_000)));
    assert_eq!(snap.resource_scope, vec![EntityId::new("store-1")]);

    let fresh = snapshot_context(&DerivedState::empty(), &agent, &world, 1000).unwrap();
    assert_eq!(fresh.int("time_since_owner_update"), Some(NO_OWNER_UPDATE));
    assert_eq!(NO_OWNER_UPDATE, (1i64 << 31) - 1);

    let mut term = agent.clone();
    term.target = EntityId::new("i-042");
    term.asserted_facts[0].entity_id = EntityId::new("i-042");
    let s = snapshot_context(&state, &term, &world, 1000).unwrap();
    assert_eq!(s.int("dependency_count"), Some(2));
    assert_eq!(s.attributes["traffic_level"], Value::from("normal"));

    let mut ghost = agent;
    ghost.target = EntityId::new("i-404");
    assert!(matches!(snapshot_context(&state, &ghost, &world, 1000), Err(StateError::UnknownEntity(_))));
}

#[test]
fn replay_examples() {
    let run = execute_scenario(&load_scenario("destructive_loop")).unwrap();
    let entries = run.chain.entries();
    assert!(entries.len() >= 50);

    assert_eq!(replay_at(entries, 0).unwrap(), DerivedState::empty());
    assert_eq!(replay_at(entries, entries.len()).unwrap().state_digest(), fold(entries).unwrap().state_digest());
    assert!(matches!(replay_at(entries, entries.len() + 1), Err(StateError::OutOfBounds { .. })));

    let mut stepwise = DerivedState::empty();
    for n in 0..=entries.len() {
        let replayed = replay_at(entries, n).unwrap();
        assert_eq!(replayed.state_digest(), stepwise.state_digest(), "at {n}");
        assert_eq!(replayed.event_count, stepwise.event_count);
        if n < entries.len() {
            stepwise = stepwise.apply(&entries[n]).unwrap();
        }
    }
    assert_eq!(stepwise.state_digest(), run.state.state_digest());
}

#[test]
fn replayability_over_scenario_logs() {
    for name in ["authority_conflict", "trust_race", "stale_preemption", "traffic_blind_scaling"] {
        let run = execute_scenario(&load_scenario(name)).unwrap();
        let entries = run.chain.entries();
        for n in 0..=entries.len() {
            for m in n..=entries.len() {
                let extended = apply_all(replay_at(entries, n).unwrap(), &entries[n..m]);
                assert_eq!(extended.state_digest(), replay_at(entries, m).unwrap().state_digest(), "{name} {n}..{m}");
            }
        }
    }
}

#[test]
fn fold_is_pure_and_repeatable() {
    let run = execute_scenario(&load_scenario("orthogonal_merge")).unwrap();
    let before = run.chain.head_digest();
    let a = fold(run.chain.entries()).unwrap();
    let b = fold(run.chain.entries()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.state_digest(), b.state_digest());
    assert_eq!(run.chain.head_digest(), before);
    assert_eq!(a.dump(), run.state.dump());
}

#[test]
fn fold_digest_is_stable_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, _) = kedge(&["run", "--scenario", scenario_path("trust_race").to_str().unwrap(), "--out", out]);
    assert_eq!(code, 0);
    let log = dir.path().join("log.jsonl");
    let replay = || {
        let o = std::process::Command::new(env!("CARGO_BIN_EXE_kedge"))
            .args(["--json", "replay", "--log", log.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success());
        o.stdout
    };
    let first = replay();
    assert_eq!(first, replay());
    assert_eq!(first, std::fs::read(dir.path().join("state.json")).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fold_equals_incremental_apply(seed in any::<u64>(), len in 1usize..60, split in any::<prop::sample::Index>()) {
        let entries = fuzz_log(seed, len);
        let n = split.index(entries.len() + 1);
        let head = fold(&entries[..n]).unwrap();
        let incremental = apply_all(head, &entries[n..]);
        let full = fold(&entries).unwrap();
        prop_assert_eq!(incremental.state_digest(), full.state_digest());
        prop_assert_eq!(&incremental, &full);
    }
}
