//! Seeded synthetic workloads of concurrent proposals.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::fixed::Fixed4;
use crate::governance::GovernanceConfig;
use crate::model::{Action, ActorId, EntityId, IntentId, Role, Value};
use crate::world::{ResourceKind, ResourceSpec, WorldSpec};

use super::scenario::{ActorSpec, Scenario, ScriptStep, StepFact};
use super::ScenarioError;

pub const WORKLOAD_POLICIES: &str = r#"// Agents may not override a recent human update unless highly trusted.
@id("protect-owner-updates")
forbid (
    principal in Role::"Agent",
    action == Action::"UpdateOperatingStatus",
    resource
)
when {
    context.time_since_owner_update < 3600 &&
    context.trust_score < 0.8
};

@id("default-permit")
permit (principal, action, resource);
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorMix {
    pub humans: usize,
    pub automations: usize,
    pub verified_agents: usize,
    pub unverified_agents: usize,
}

impl ActorMix {
    pub fn total(&self) -> usize {
        self.humans + self.automations + self.verified_agents + self.unverified_agents
    }
}

impl Default for ActorMix {
    fn default() -> Self {
        Self { humans: 2, automations: 2, verified_agents: 4, unverified_agents: 4 }
    }
}

fn default_batch_size() -> usize {
    8
}

fn default_stale_rate() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadParams {
    pub n_proposals: usize,
    #[serde(default)]
    pub mix: ActorMix,
    pub conflict_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Fraction of proposals whose origin lies beyond the recency bound.
    #[serde(default = "default_stale_rate")]
    pub stale_rate: f64,
}

impl WorkloadParams {
    pub fn new(n_proposals: usize, mix: ActorMix, conflict_rate: f64) -> Self {
        Self { n_proposals, mix, conflict_rate, batch_size: default_batch_size(), stale_rate: default_stale_rate() }
    }
}

const TICK_STEP: u64 = 10;

/// Builds a reproducible scenario: the same seed and parameters always give a
/// structurally identical script.
///
/// Within a batch, each proposal is "contended" with probability
/// `conflict_rate`. Contended proposals all write distinct values to one shared
/// (entity, key); the others write to entities no other proposal in the batch
/// touches.
pub fn generate_workload(seed: u64, params: &WorkloadParams) -> Result<Scenario, ScenarioError> {
    let bad = |m: &str| Err(ScenarioError::BadParams(m.to_string()));
    if params.n_proposals == 0 {
        return bad("n_proposals must be positive");
    }
    if params.mix.total() == 0 {
        return bad("actor mix must contain at least one actor");
    }
    if params.batch_size == 0 {
        return bad("batch_size must be positive");
    }
    if !(0.0..=1.0).contains(&params.conflict_rate) || !(0.0..=1.0).contains(&params.stale_rate) {
        return bad("rates must lie in [0, 1]");
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let config = GovernanceConfig::default();

    let mut actors = Vec::new();
    let groups = [
        (Role::Human, params.mix.humans, "human"),
        (Role::Automation, params.mix.automations, "auto"),
        (Role::VerifiedAgent, params.mix.verified_agents, "vagent"),
        (Role::UnverifiedAgent, params.mix.unverified_agents, "uagent"),
    ];
    for (role, count, prefix) in groups {
        for k in 0..count {
            actors.push(ActorSpec {
                id: ActorId(format!("{prefix}-{k}")),
                role,
                trust: Fixed4::from_raw(rng.gen_range(5_000..=10_000)),
            });
        }
    }

    let pool = params.batch_size * 4;
    let stores: Vec<EntityId> = (0..pool).map(|k| EntityId(format!("store-{k:03}"))).collect();
    let world = WorldSpec {
        resources: stores
            .iter()
            .map(|id| ResourceSpec { id: id.clone(), kind: ResourceKind::Store, attributes: Default::default() })
            .collect(),
        ..WorldSpec::default()
    };

    let mut script = Vec::with_capacity(params.n_proposals);
    let batches = params.n_proposals.div_ceil(params.batch_size);
    for b in 0..batches {
        let tick = (b as u64 + 1) * TICK_STEP + config.max_recency;
        let size = params.batch_size.min(params.n_proposals - b * params.batch_size);
        let mut order = stores.clone();
        order.shuffle(&mut rng);
        let contended = order.pop().expect("pool is non-empty");

        for slot in order.iter().take(size) {
            let n = script.len();
            let actor = actors.choose(&mut rng).expect("mix is non-empty");
            let is_contended = rng.gen_bool(params.conflict_rate);
            let (action, target, key, value) = if is_contended {
                (Action::UpdateMetric, contended.clone(), "shared_metric", Value::Int(n as i64))
            } else if rng.gen_bool(0.5) {
                let status = if rng.gen_bool(0.5) { "open" } else { "closed" };
                (Action::UpdateOperatingStatus, slot.clone(), "operating_status", Value::from(status))
            } else {
                (Action::UpdateMetric, slot.clone(), "metric", Value::Int(rng.gen_range(0..1000)))
            };
            let stale = rng.gen_bool(params.stale_rate);
            let origin = if stale { tick - config.max_recency - 1 } else { tick - rng.gen_range(0..=3) };
            script.push(ScriptStep {
                tick,
                actor: actor.id.clone(),
                intent_id: IntentId(format!("w{seed}-{n:05}")),
                action,
                target,
                facts: vec![StepFact { entity: None, key: key.to_string(), value, valid_until: None }],
                origin_tick: Some(origin),
                hallucination: None,
            });
        }
    }

    Ok(Scenario {
        name: format!("workload-{seed}-{}", params.n_proposals),
        description: String::new(),
        seed,
        world,
        policies: WORKLOAD_POLICIES.to_string(),
        config,
        actors,
        script,
        expected: Default::default(),
    })
}
