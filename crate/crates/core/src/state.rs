//! Derived state: a pure projection of the evidence chain.
//!
//! Only effectful `ExecutionOutcome` entries change facts. Every other entry
//! only advances the event counter and the clock. [`fold`] computes the
//! projection in one pass over a prefix; [`DerivedState::apply`] extends an
//! existing projection by one entry. The two paths are kept separate so they
//! can be checked against each other.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainEntry, Digest};
use crate::event::Payload;
use crate::model::{EntityId, Fact, IntentId, IntentProposal, Role, Tick, Value};
use crate::world::{ExecutionOutcome, WorldState};

/// Stand-in for "no human has ever updated this entity".
pub const NO_OWNER_UPDATE: i64 = (1 << 31) - 1;

pub mod attr {
    pub const TIME_SINCE_OWNER_UPDATE: &str = "time_since_owner_update";
    pub const TRUST_SCORE: &str = "trust_score";
    pub const DEPENDENCY_COUNT: &str = "dependency_count";
    pub const TRAFFIC_LEVEL: &str = "traffic_level";
    pub const CAPACITY_DELTA: &str = "capacity_delta";
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StateError {
    #[error("malformed entry at index {index}: {reason}")]
    MalformedEntry { index: u64, reason: String },
    #[error("entry index {got} does not follow state with {expected} folded events")]
    IndexGap { expected: u64, got: u64 },
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error("replay index {at} out of bounds for log of length {len}")]
    OutOfBounds { at: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DerivedState {
    /// entity -> key -> current fact
    pub facts: BTreeMap<EntityId, BTreeMap<String, Fact>>,
    pub last_human_update: BTreeMap<EntityId, Tick>,
    /// Proposing role of every intent seen so far; needed to attribute
    /// outcomes to human owners.
    pub intent_roles: BTreeMap<IntentId, Role>,
    pub event_count: u64,
    pub last_tick: Option<Tick>,
}

/// Serializable view of a state, as written by `kedge run` and `kedge replay`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDump {
    pub event_count: u64,
    pub last_tick: Option<Tick>,
    pub state_digest: Digest,
    pub facts: Vec<Fact>,
    pub last_human_update: BTreeMap<EntityId, Tick>,
}

fn check_outcome(
    entry: &ChainEntry,
    outcome: &ExecutionOutcome,
    roles: &BTreeMap<IntentId, Role>,
) -> Result<Role, StateError> {
    let malformed = |reason: String| StateError::MalformedEntry { index: entry.index, reason };
    if outcome.intent_id != entry.event.intent_id {
        return Err(malformed("outcome intent differs from event intent".into()));
    }
    if !outcome.authorization.is_allow() && !outcome.effect.is_empty() {
        return Err(malformed("denied outcome carries effects".into()));
    }
    roles
        .get(&outcome.intent_id)
        .copied()
        .ok_or_else(|| malformed(format!("outcome for unproposed intent `{}`", outcome.intent_id)))
}

impl DerivedState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn fact(&self, entity: &EntityId, key: &str) -> Option<&Fact> {
        self.facts.get(entity).and_then(|m| m.get(key))
    }

    pub fn fact_count(&self) -> usize {
        self.facts.values().map(BTreeMap::len).sum()
    }

    /// Facts in (entity_id, key) order.
    pub fn sorted_facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.values().flat_map(|m| m.values())
    }

    pub fn knows_entity(&self, entity: &EntityId) -> bool {
        self.facts.contains_key(entity) || self.last_human_update.contains_key(entity)
    }

    pub fn state_digest(&self) -> Digest {
        let facts: Vec<&Fact> = self.sorted_facts().collect();
        Digest::of(&serde_json::to_vec(&facts).expect("facts serialize"))
    }

    pub fn dump(&self) -> StateDump {
        StateDump {
            event_count: self.event_count,
            last_tick: self.last_tick,
            state_digest: self.state_digest(),
            facts: self.sorted_facts().cloned().collect(),
            last_human_update: self.last_human_update.clone(),
        }
    }

    /// Pure single-step extension.
    pub fn apply(&self, entry: &ChainEntry) -> Result<DerivedState, StateError> {
        let mut next = self.clone();
        next.apply_mut(entry)?;
        Ok(next)
    }

    /// In-place form of [`DerivedState::apply`]; leaves `self` untouched on error.
    pub fn apply_mut(&mut self, entry: &ChainEntry) -> Result<(), StateError> {
        if entry.index != self.event_count {
            return Err(StateError::IndexGap { expected: self.event_count, got: entry.index });
        }
        let tick = entry.event.logical_time;
        match &entry.event.payload {
            Payload::IntentProposed(p) => {
                self.intent_roles.insert(p.intent_id.clone(), p.actor.role);
            }
            Payload::ExecutionOutcome(outcome) => {
                let role = check_outcome(entry, outcome, &self.intent_roles)?;
                for fact in &outcome.effect {
                    if role == Role::Human {
                        self.last_human_update.insert(fact.entity_id.clone(), tick);
                    }
                    self.facts.entry(fact.entity_id.clone()).or_default().insert(fact.key.clone(), fact.clone());
                }
            }
            _ => {}
        }
        self.event_count += 1;
        self.last_tick = Some(tick);
        self.prune_expired(tick);
        Ok(())
    }

    fn prune_expired(&mut self, tick: Tick) {
        for facts in self.facts.values_mut() {
            facts.retain(|_, f| !f.is_expired_at(tick));
        }
        self.facts.retain(|_, m| !m.is_empty());
    }
}

/// One-pass projection of a verified chain prefix.
pub fn fold(entries: &[ChainEntry]) -> Result<DerivedState, StateError> {
    let mut roles = BTreeMap::new();
    let mut latest: BTreeMap<(EntityId, String), Fact> = BTreeMap::new();
    let mut human = BTreeMap::new();

    for entry in entries {
        match &entry.event.payload {
            Payload::IntentProposed(p) => {
                roles.insert(p.intent_id.clone(), p.actor.role);
            }
            Payload::ExecutionOutcome(outcome) => {
                let role = check_outcome(entry, outcome, &roles)?;
                for fact in &outcome.effect {
                    if role == Role::Human {
                        human.insert(fact.entity_id.clone(), entry.event.logical_time);
                    }
                    latest.insert((fact.entity_id.clone(), fact.key.clone()), fact.clone());
                }
            }
            _ => {}
        }
    }

    let last_tick = entries.last().map(|e| e.event.logical_time);
    let mut facts: BTreeMap<EntityId, BTreeMap<String, Fact>> = BTreeMap::new();
    for ((entity, key), fact) in latest {
        if last_tick.is_some_and(|t| fact.is_expired_at(t)) {
            continue;
        }
        facts.entry(entity).or_default().insert(key, fact);
    }

    Ok(DerivedState {
        facts,
        last_human_update: human,
        intent_roles: roles,
        event_count: entries.len() as u64,
        last_tick,
    })
}

pub fn replay_at(entries: &[ChainEntry], at: usize) -> Result<DerivedState, StateError> {
    if at > entries.len() {
        return Err(StateError::OutOfBounds { at, len: entries.len() });
    }
    fold(&entries[..at])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    pub intent_id: IntentId,
    pub resource_scope: Vec<EntityId>,
    pub attributes: BTreeMap<String, Value>,
    pub snapshot_tick: Tick,
}

impl ContextSnapshot {
    pub fn int(&self, name: &str) -> Option<i64> {
        match self.attributes.get(name) {
            Some(Value::Int(v)) => Some(*v),
            _ => None,
        }
    }
}

/// Gathers the context a policy sees for one proposal.
pub fn snapshot_context(
    state: &DerivedState,
    proposal: &IntentProposal,
    world: &WorldState,
    now: Tick,
) -> Result<ContextSnapshot, StateError> {
    let target = &proposal.target;
    let (dependency_count, traffic) = if world.contains(target) {
        world.context_signals(target).map_err(|_| StateError::UnknownEntity(target.clone()))?
    } else if state.knows_entity(target) {
        (0, crate::world::TrafficLevel::Low)
    } else {
        return Err(StateError::UnknownEntity(target.clone()));
    };

    let since = match state.last_human_update.get(target) {
        Some(&t) => now.saturating_sub(t) as i64,
        None => NO_OWNER_UPDATE,
    };

    let capacity_delta = match proposal.action {
        crate::model::Action::ScaleCluster => proposal
            .asserted_facts
            .iter()
            .find(|f| &f.entity_id == target && f.key == crate::world::CAPACITY_KEY)
            .and_then(|f| match f.value {
                Value::Int(n) => Some(n - world.capacity_of(target).unwrap_or(0)),
                _ => None,
            })
            .unwrap_or(0),
        _ => 0,
    };

    let mut attributes = BTreeMap::new();
    attributes.insert(attr::TIME_SINCE_OWNER_UPDATE.to_string(), Value::Int(since));
    attributes.insert(attr::TRUST_SCORE.to_string(), Value::Dec(proposal.actor.trust));
    attributes.insert(attr::DEPENDENCY_COUNT.to_string(), Value::Int(dependency_count as i64));
    attributes.insert(attr::TRAFFIC_LEVEL.to_string(), Value::Str(traffic.as_str().to_string()));
    attributes.insert(attr::CAPACITY_DELTA.to_string(), Value::Int(capacity_delta));

    Ok(ContextSnapshot {
        intent_id: proposal.intent_id.clone(),
        resource_scope: proposal.touched_entities().into_iter().collect(),
        attributes,
        snapshot_tick: now,
    })
}
