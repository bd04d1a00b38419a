//! Whole-run safety checks. Every checker is a pure function of the log, so
//! anyone holding a copy of the log can re-derive the results.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::chain::ChainEntry;
use crate::contracts::ExecutionContract;
use crate::event::Payload;
use crate::model::{ContractId, EntityId, IntentId};
use crate::policy::Outcome;
use crate::world::{WorldState, ALIVE_KEY, CAPACITY_KEY};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub passed: bool,
    pub violations: Vec<String>,
}

impl InvariantResult {
    fn from_violations(violations: Vec<String>) -> Self {
        Self { passed: violations.is_empty(), violations }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantResults {
    pub execution_event_consistency: InvariantResult,
    pub conflict_safety: InvariantResult,
    pub liveness: InvariantResult,
    pub world_containment: InvariantResult,
}

impl InvariantResults {
    pub fn all_passed(&self) -> bool {
        self.execution_event_consistency.passed
            && self.conflict_safety.passed
            && self.liveness.passed
            && self.world_containment.passed
    }
}

/// Every effectful outcome lies inside an earlier contract's bounds, and every
/// contract follows an approval of the same intent.
pub fn check_invariant_1(entries: &[ChainEntry]) -> InvariantResult {
    let mut approved: HashSet<&IntentId> = HashSet::new();
    let mut contracts: HashMap<&ContractId, &ExecutionContract> = HashMap::new();
    let mut violations = Vec::new();

    for entry in entries {
        let ev = &entry.event;
        match &ev.payload {
            Payload::DecisionRendered(d) if d.outcome == Outcome::Approve => {
                approved.insert(&ev.intent_id);
            }
            Payload::ContractIssued(c) => {
                if !approved.contains(&c.intent_id) || c.intent_id != ev.intent_id {
                    violations.push(format!("{}: contract {} issued without approval", ev.event_id, c.contract_id));
                }
                contracts.insert(&c.contract_id, c);
            }
            Payload::ExecutionOutcome(o) if o.is_effectful() => {
                let Some(c) = contracts.get(&o.contract_id) else {
                    violations.push(format!("{}: effectful outcome without contract {}", ev.event_id, o.contract_id));
                    continue;
                };
                if c.intent_id != o.intent_id {
                    violations.push(format!("{}: outcome intent differs from contract intent", ev.event_id));
                }
                if !c.permits(o.attempted.action, &o.attempted.resource, ev.logical_time)
                    || o.completed_at != ev.logical_time
                {
                    violations.push(format!(
                        "{}: {} on {} at tick {} outside contract {}",
                        ev.event_id, o.attempted.action, o.attempted.resource, ev.logical_time, c.contract_id
                    ));
                }
                if let Some(f) = o.effect.iter().find(|f| !c.resource_scope.contains(&f.entity_id)) {
                    violations.push(format!("{}: effect on {} outside contract scope", ev.event_id, f.entity_id));
                }
            }
            _ => {}
        }
    }
    InvariantResult::from_violations(violations)
}

/// Conflict pairs recorded in decision payloads, smaller id first.
pub fn conflict_pairs_from_log(entries: &[ChainEntry]) -> Vec<(IntentId, IntentId)> {
    let mut pairs = BTreeSet::new();
    for entry in entries {
        if let Some(d) = entry.event.as_decision() {
            let me = &entry.event.intent_id;
            for other in &d.arbitration.conflicts_with {
                let pair = if me <= other { (me.clone(), other.clone()) } else { (other.clone(), me.clone()) };
                pairs.insert(pair);
            }
        }
    }
    pairs.into_iter().collect()
}

/// At most one member of each conflict pair produced effects.
pub fn check_invariant_2(entries: &[ChainEntry], pairs: &[(IntentId, IntentId)]) -> InvariantResult {
    let effectful: HashSet<&IntentId> = entries
        .iter()
        .filter_map(|e| e.event.as_outcome())
        .filter(|o| o.is_effectful())
        .map(|o| &o.intent_id)
        .collect();
    let violations = pairs
        .iter()
        .filter(|(a, b)| effectful.contains(a) && effectful.contains(b))
        .map(|(a, b)| format!("conflicting intents {a} and {b} both executed"))
        .collect();
    InvariantResult::from_violations(violations)
}

/// Every issued contract has at least one later execution outcome.
pub fn check_invariant_3(entries: &[ChainEntry]) -> InvariantResult {
    let mut pending: BTreeMap<&ContractId, &str> = BTreeMap::new();
    for entry in entries {
        match &entry.event.payload {
            Payload::ContractIssued(c) => {
                pending.insert(&c.contract_id, &entry.event.event_id);
            }
            Payload::ExecutionOutcome(o) => {
                pending.remove(&o.contract_id);
            }
            _ => {}
        }
    }
    let violations =
        pending.into_iter().map(|(c, ev)| format!("{ev}: contract {c} never produced an outcome")).collect();
    InvariantResult::from_violations(violations)
}

/// Every difference between the initial and final world is explained by an
/// allowed outcome that wrote the same (entity, key).
pub fn audit_world_containment(before: &WorldState, after: &WorldState, entries: &[ChainEntry]) -> InvariantResult {
    let mut written: HashSet<(&EntityId, &str)> = HashSet::new();
    for o in entries.iter().filter_map(|e| e.event.as_outcome()).filter(|o| o.is_effectful()) {
        for f in &o.effect {
            written.insert((&f.entity_id, f.key.as_str()));
        }
    }

    let mut violations = Vec::new();
    let ids: BTreeSet<&EntityId> = before.resources.keys().chain(after.resources.keys()).collect();
    for id in ids {
        let (Some(b), Some(a)) = (before.resources.get(id), after.resources.get(id)) else {
            violations.push(format!("resource {id} appeared or vanished"));
            continue;
        };
        let mut changed: BTreeSet<&str> = BTreeSet::new();
        if a.alive != b.alive {
            changed.insert(ALIVE_KEY);
        }
        if before.capacity.get(id) != after.capacity.get(id) {
            changed.insert(CAPACITY_KEY);
        }
        let keys: BTreeSet<&String> = a.attributes.keys().chain(b.attributes.keys()).collect();
        for k in keys {
            if a.attributes.get(k) != b.attributes.get(k) {
                changed.insert(k.as_str());
            }
        }
        for key in changed {
            if !written.contains(&(id, key)) {
                violations.push(format!("{id}.{key} changed without an allowed outcome"));
            }
        }
    }
    if before.dependencies != after.dependencies || before.traffic != after.traffic {
        violations.push("topology or traffic changed during execution".to_string());
    }
    InvariantResult::from_violations(violations)
}
