//! Simulated infrastructure and the contract-bounded execution adapter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainError, EvidenceChain};
use crate::contracts::{AuthorizationOutcome, DenyReason, ExecutionContract, TokenId, TokenRegistry};
use crate::event::Payload;
use crate::model::{Action, ActorId, ContractId, EntityId, Fact, FactAssertion, IntentId, Tick, Value};

pub const WORLD_SCHEMA_VERSION: u32 = 1;
pub const CAPACITY_KEY: &str = "capacity";
pub const ALIVE_KEY: &str = "alive";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    ComputeInstance,
    Cluster,
    Store,
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrafficLevel {
    #[default]
    Low,
    Normal,
    Peak,
}

impl TrafficLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficLevel::Low => "low",
            TrafficLevel::Normal => "normal",
            TrafficLevel::Peak => "peak",
        }
    }
}

impl fmt::Display for TrafficLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub entity_id: EntityId,
    pub kind: ResourceKind,
    pub attributes: BTreeMap<String, Value>,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorldState {
    pub resources: BTreeMap<EntityId, Resource>,
    /// (dependent, dependency)
    pub dependencies: BTreeSet<(EntityId, EntityId)>,
    pub traffic: BTreeMap<EntityId, TrafficLevel>,
    pub capacity: BTreeMap<EntityId, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    pub id: EntityId,
    pub kind: ResourceKind,
    #[serde(default)]
    pub attributes: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependencySpec {
    pub dependent: EntityId,
    pub dependency: EntityId,
}

/// On-disk world description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub version: u32,
    #[serde(default)]
    pub resources: Vec<ResourceSpec>,
    #[serde(default)]
    pub dependencies: Vec<DependencySpec>,
    #[serde(default)]
    pub traffic: BTreeMap<EntityId, TrafficLevel>,
    #[serde(default)]
    pub capacity: BTreeMap<EntityId, i64>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            version: WORLD_SCHEMA_VERSION,
            resources: Vec::new(),
            dependencies: Vec::new(),
            traffic: BTreeMap::new(),
            capacity: BTreeMap::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("world spec: {0}")]
    SpecError(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(EntityId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn load_world(spec: &WorldSpec) -> Result<WorldState, WorldError> {
    let bad = |m: String| WorldError::SpecError(m);
    if spec.version != WORLD_SCHEMA_VERSION {
        return Err(bad(format!("unsupported version {}", spec.version)));
    }
    let mut world = WorldState::default();
    for r in &spec.resources {
        let resource =
            Resource { entity_id: r.id.clone(), kind: r.kind, attributes: r.attributes.clone(), alive: true };
        if world.resources.insert(r.id.clone(), resource).is_some() {
            return Err(bad(format!("duplicate resource id `{}`", r.id)));
        }
    }
    for d in &spec.dependencies {
        for id in [&d.dependent, &d.dependency] {
            if !world.resources.contains_key(id) {
                return Err(bad(format!("dependency edge references unknown id `{id}`")));
            }
        }
        if d.dependent == d.dependency {
            return Err(bad(format!("self-dependency on `{}`", d.dependent)));
        }
        world.dependencies.insert((d.dependent.clone(), d.dependency.clone()));
    }
    for (id, level) in &spec.traffic {
        if !world.resources.contains_key(id) {
            return Err(bad(format!("traffic for unknown id `{id}`")));
        }
        world.traffic.insert(id.clone(), *level);
    }
    for (id, n) in &spec.capacity {
        match world.resources.get(id) {
            None => return Err(bad(format!("capacity for unknown id `{id}`"))),
            Some(r) if r.kind != ResourceKind::Cluster => {
                return Err(bad(format!("capacity declared on non-cluster `{id}`")))
            }
            _ if *n < 0 => return Err(bad(format!("negative capacity for `{id}`"))),
            _ => {
                world.capacity.insert(id.clone(), *n);
            }
        }
    }
    Ok(world)
}

pub fn load_world_file(path: &Path) -> Result<WorldState, WorldError> {
    let spec: WorldSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    load_world(&spec)
}

impl WorldState {
    pub fn contains(&self, id: &EntityId) -> bool {
        self.resources.contains_key(id)
    }

    pub fn capacity_of(&self, id: &EntityId) -> Option<i64> {
        self.capacity.get(id).copied()
    }

    pub fn dependents_of<'a>(&'a self, id: &'a EntityId) -> impl Iterator<Item = &'a EntityId> + 'a {
        self.dependencies.iter().filter(move |(_, dep)| dep == id).map(|(d, _)| d)
    }

    /// (number of dependents, traffic level) for an entity.
    pub fn context_signals(&self, id: &EntityId) -> Result<(usize, TrafficLevel), WorldError> {
        if !self.contains(id) {
            return Err(WorldError::UnknownEntity(id.clone()));
        }
        let traffic = self.traffic.get(id).copied().unwrap_or_default();
        Ok((self.dependents_of(id).count(), traffic))
    }

    /// Applies one authorized request. Returns the facts it made true, or the
    /// world-level reason it could not be applied.
    fn apply_request(&mut self, req: &ExecRequest, actor: &ActorId) -> Result<Vec<Fact>, DenyReason> {
        let resource = self.resources.get(&req.resource).ok_or(DenyReason::UnknownResource)?;
        if !resource.alive {
            return Err(DenyReason::ResourceTerminated);
        }
        let kind = resource.kind;
        let fact = |key: &str, value: Value, valid_until| Fact {
            entity_id: req.resource.clone(),
            key: key.to_string(),
            value,
            asserted_by: actor.clone(),
            asserted_at: req.at,
            valid_until,
        };

        let mut effect = Vec::new();
        match req.action {
            Action::UpdateOperatingStatus | Action::UpdateMetric => {
                if req.facts.is_empty() {
                    return Err(DenyReason::InvalidRequest);
                }
            }
            Action::TerminateInstance => {
                if kind != ResourceKind::ComputeInstance {
                    return Err(DenyReason::InvalidRequest);
                }
                effect.push(fact(ALIVE_KEY, Value::Bool(false), None));
            }
            Action::ScaleCluster => {
                if kind != ResourceKind::Cluster {
                    return Err(DenyReason::InvalidRequest);
                }
                let n = req
                    .facts
                    .iter()
                    .find_map(|f| match (&f.value, f.key.as_str()) {
                        (Value::Int(n), CAPACITY_KEY) => Some(*n),
                        _ => None,
                    })
                    .ok_or(DenyReason::InvalidRequest)?;
                if n < 0 {
                    return Err(DenyReason::CapacityFloor);
                }
            }
        }
        for a in &req.facts {
            if a.key == ALIVE_KEY && req.action != Action::TerminateInstance {
                return Err(DenyReason::InvalidRequest);
            }
            if a.key != ALIVE_KEY {
                effect.push(fact(&a.key, a.value.clone(), a.valid_until));
            }
        }

        let resource = self.resources.get_mut(&req.resource).expect("checked above");
        for f in &effect {
            match f.key.as_str() {
                ALIVE_KEY => resource.alive = false,
                CAPACITY_KEY if req.action == Action::ScaleCluster => {
                    if let Value::Int(n) = f.value {
                        self.capacity.insert(req.resource.clone(), n);
                    }
                }
                _ => {}
            }
            resource.attributes.insert(f.key.clone(), f.value.clone());
        }
        Ok(effect)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecRequest {
    pub action: Action,
    pub resource: EntityId,
    #[serde(default)]
    pub facts: Vec<FactAssertion>,
    pub at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub action: Action,
    pub resource: EntityId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub intent_id: IntentId,
    pub contract_id: ContractId,
    pub attempted: Attempt,
    pub authorization: AuthorizationOutcome,
    pub effect: Vec<Fact>,
    pub completed_at: Tick,
}

impl ExecutionOutcome {
    pub fn is_effectful(&self) -> bool {
        self.authorization.is_allow() && !self.effect.is_empty()
    }
}

/// Runs requests under one contract's token. Every request, allowed or not,
/// produces exactly one recorded outcome.
pub fn execute(
    contract: &ExecutionContract,
    token: &TokenId,
    registry: &TokenRegistry,
    requests: &[ExecRequest],
    world: &mut WorldState,
    chain: &mut EvidenceChain,
    actor: &ActorId,
) -> Result<Vec<ExecutionOutcome>, ChainError> {
    let mut outcomes = Vec::with_capacity(requests.len());
    for req in requests {
        let mut authorization = registry.authorize(token, req.action, &req.resource, req.at);
        if authorization.is_allow() && req.facts.iter().any(|f| f.entity_id != req.resource) {
            authorization = AuthorizationOutcome::Deny(DenyReason::OutOfScope);
        }
        let effect = if authorization.is_allow() {
            match world.apply_request(req, actor) {
                Ok(effect) => effect,
                Err(reason) => {
                    authorization = AuthorizationOutcome::Deny(reason);
                    Vec::new()
                }
            }
        } else {
            Vec::new()
        };
        let outcome = ExecutionOutcome {
            intent_id: contract.intent_id.clone(),
            contract_id: contract.contract_id.clone(),
            attempted: Attempt { action: req.action, resource: req.resource.clone() },
            authorization,
            effect,
            completed_at: req.at,
        };
        chain.record(contract.intent_id.clone(), actor.clone(), req.at, Payload::ExecutionOutcome(outcome.clone()))?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> WorldSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn empty_spec_is_empty_world() {
        let w = load_world(&WorldSpec::default()).unwrap();
        assert_eq!(w, WorldState::default());
    }

    #[test]
    fn dependency_edges_and_signals() {
        let w = load_world(&spec(
            r#"{"version":1,
                "resources":[{"id":"i-042","kind":"ComputeInstance"},{"id":"svc-7","kind":"Service"},
                             {"id":"job-3","kind":"Service"},{"id":"i-099","kind":"ComputeInstance"}],
                "dependencies":[{"dependent":"svc-7","dependency":"i-042"},{"dependent":"job-3","dependency":"i-042"}],
                "traffic":{"i-042":"normal"}}"#,
        ))
        .unwrap();
        assert!(w.dependencies.contains(&(EntityId::new("svc-7"), EntityId::new("i-042"))));
        assert_eq!(w.context_signals(&EntityId::new("i-042")).unwrap(), (2, TrafficLevel::Normal));
        assert_eq!(w.context_signals(&EntityId::new("i-099")).unwrap(), (0, TrafficLevel::Low));
        assert!(matches!(w.context_signals(&EntityId::new("x")), Err(WorldError::UnknownEntity(_))));
    }

    #[test]
    fn spec_errors() {
        let dangling = spec(
            r#"{"version":1,"resources":[{"id":"a","kind":"Store"}],"dependencies":[{"dependent":"a","dependency":"b"}]}"#,
        );
        assert!(matches!(load_world(&dangling), Err(WorldError::SpecError(_))));
        let dup = spec(r#"{"version":1,"resources":[{"id":"a","kind":"Store"},{"id":"a","kind":"Service"}]}"#);
        assert!(matches!(load_world(&dup), Err(WorldError::SpecError(_))));
        let version = spec(r#"{"version":9}"#);
        assert!(matches!(load_world(&version), Err(WorldError::SpecError(_))));
        let cap = spec(r#"{"version":1,"resources":[{"id":"a","kind":"Store"}],"capacity":{"a":3}}"#);
        assert!(matches!(load_world(&cap), Err(WorldError::SpecError(_))));
    }
}
