use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fixed::Fixed4;
use crate::governance::{DecisionReason, GovernanceConfig};
use crate::model::{Action, ActorId, EntityId, FactAssertion, IntentId, IntentProposal, Role, Tick, Value};
use crate::policy::PolicySet;
use crate::world::{load_world, ResourceKind, WorldSpec};

use super::workload::{generate_workload, WorkloadParams};
use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub id: ActorId,
    pub role: Role,
    pub trust: Fixed4,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFact {
    /// Defaults to the step's target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EntityId>,
    pub key: String,
    pub value: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_until: Option<Tick>,
}

/// Scripted misbehaviour after approval: `count` extra requests against
/// random resources outside the contract scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hallucination {
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default = "default_hallucination_kind")]
    pub kind: ResourceKind,
}

fn default_hallucination_kind() -> ResourceKind {
    ResourceKind::ComputeInstance
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub tick: Tick,
    pub actor: ActorId,
    pub intent_id: IntentId,
    pub action: Action,
    pub target: EntityId,
    pub facts: Vec<StepFact>,
    /// Defaults to `tick`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_tick: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hallucination: Option<Hallucination>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntentStatus {
    /// Approved and produced at least one effectful outcome.
    Executed,
    /// Approved, but every execution attempt was denied.
    Denied,
    Rejected,
    Escalated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedFact {
    pub entity: EntityId,
    pub key: String,
    /// `null` asserts the fact is absent.
    pub value: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecCounts {
    pub allowed: usize,
    pub denied: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    pub outcomes: BTreeMap<IntentId, IntentStatus>,
    pub reasons: BTreeMap<IntentId, DecisionReason>,
    pub facts: Vec<ExpectedFact>,
    pub execution: BTreeMap<IntentId, ExecCounts>,
    pub alive: BTreeMap<EntityId, bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    pub world: WorldSpec,
    pub policies: String,
    #[serde(default)]
    pub config: GovernanceConfig,
    pub actors: Vec<ActorSpec>,
    pub script: Vec<ScriptStep>,
    #[serde(default)]
    pub expected: Expectations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratedScenario {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    seed: u64,
    generate: WorkloadParams,
    #[serde(default)]
    expected: Expectations,
}

impl Scenario {
    /// Reads a scenario file. Files with a `generate` section describe a
    /// synthetic workload that is expanded with `seed_override` (or the file's
    /// own seed).
    pub fn from_json(text: &str, seed_override: Option<u64>) -> Result<Scenario, ScenarioError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        if raw.get("generate").is_some() {
            let g: GeneratedScenario = serde_json::from_value(raw)?;
            let mut s = generate_workload(seed_override.unwrap_or(g.seed), &g.generate)?;
            s.name = g.name;
            s.description = g.description;
            s.expected = g.expected;
            return Ok(s);
        }
        let mut s: Scenario = serde_json::from_value(raw)?;
        if let Some(seed) = seed_override {
            s.seed = seed;
        }
        Ok(s)
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(&std::fs::read_to_string(path)?, seed_override)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        self.config.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        PolicySet::parse(&self.policies).map_err(|e| ScenarioError::Invalid(format!("policies: {e}")))?;
        load_world(&self.world).map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let mut actors = HashSet::new();
        for a in &self.actors {
            if !actors.insert(&a.id) {
                return bad(format!("duplicate actor `{}`", a.id));
            }
            if !a.trust.is_unit_interval() {
                return bad(format!("actor `{}` trust {} outside [0, 1]", a.id, a.trust));
            }
        }
        let mut intents = HashSet::new();
        let mut last = 0;
        for step in &self.script {
            if step.tick < last {
                return bad(format!("script tick {} after tick {last}", step.tick));
            }
            last = step.tick;
            if !actors.contains(&step.actor) {
                return bad(format!("step `{}` uses unknown actor `{}`", step.intent_id, step.actor));
            }
            if !intents.insert(&step.intent_id) {
                return bad(format!("duplicate intent id `{}`", step.intent_id));
            }
            if step.facts.is_empty() {
                return bad(format!("step `{}` asserts no facts", step.intent_id));
            }
        }
        Ok(())
    }

    pub fn actor_spec(&self, id: &ActorId) -> Option<&ActorSpec> {
        self.actors.iter().find(|a| &a.id == id)
    }

    pub fn proposal(&self, step: &ScriptStep) -> Result<IntentProposal, ScenarioError> {
        let spec = self
            .actor_spec(&step.actor)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown actor `{}`", step.actor)))?;
        Ok(IntentProposal {
            intent_id: step.intent_id.clone(),
            actor: self.config.actor(spec.id.as_str(), spec.role, spec.trust),
            action: step.action,
            target: step.target.clone(),
            asserted_facts: step
                .facts
                .iter()
                .map(|f| FactAssertion {
                    entity_id: f.entity.clone().unwrap_or_else(|| step.target.clone()),
                    key: f.key.clone(),
                    value: f.value.clone(),
                    valid_until: f.valid_until,
                })
                .collect(),
            origin_tick: step.origin_tick.unwrap_or(step.tick),
            batch_id: format!("batch-{}", step.tick),
        })
    }

    /// Script steps grouped into per-tick batches.
    pub fn batches(&self) -> Vec<(Tick, Vec<&ScriptStep>)> {
        let mut out: Vec<(Tick, Vec<&ScriptStep>)> = Vec::new();
        for step in &self.script {
            match out.last_mut() {
                Some((t, steps)) if *t == step.tick => steps.push(step),
                _ => out.push((step.tick, vec![step])),
            }
        }
        out
    }
}
