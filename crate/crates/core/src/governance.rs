//! Batch arbitration and policy orchestration.
//!
//! A batch of concurrent proposals is screened for staleness, split into
//! conflict components, and each component is resolved by priority
//! (`alpha * authority + beta * trust`). Near-ties escalate instead of being
//! ordered. Surviving proposals are then evaluated against the policy set and
//! every step is recorded in the evidence chain.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainEntry, ChainError, Digest, EvidenceChain};
use crate::event::Payload;
use crate::fixed::{Fixed4, Score};
use crate::model::{Action, Actor, ActorId, EntityId, IntentId, IntentProposal, Role, Tick};
use crate::policy::{self, EvalError, EvaluationRequest, Outcome, PolicySet, Principal, ResourceRef, RuleEvaluation};
use crate::state::{snapshot_context, ContextSnapshot, DerivedState};
use crate::world::WorldState;

#[derive(Debug, thiserror::Error)]
pub enum GovernanceError {
    #[error("proposal origin tick {origin} is after now ({now})")]
    ClockSkew { origin: Tick, now: Tick },
    #[error("invalid governance config: {0}")]
    InvalidConfig(String),
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn default_authority() -> BTreeMap<Role, Fixed4> {
    [
        (Role::Human, Fixed4::from_raw(10_000)),
        (Role::Automation, Fixed4::from_raw(8_000)),
        (Role::VerifiedAgent, Fixed4::from_raw(6_000)),
        (Role::UnverifiedAgent, Fixed4::from_raw(3_000)),
    ]
    .into_iter()
    .collect()
}

fn default_exclusive() -> Vec<(Action, Action)> {
    Action::ALL.iter().map(|a| (Action::TerminateInstance, *a)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GovernanceConfig {
    pub alpha: Fixed4,
    pub beta: Fixed4,
    pub max_recency: Tick,
    pub priority_epsilon: Fixed4,
    pub authority: BTreeMap<Role, Fixed4>,
    /// Action pairs that conflict whenever they target the same entity.
    pub exclusive_actions: Vec<(Action, Action)>,
    pub contract_ttl: Tick,
}

impl Default for GovernanceConfig {
    fn default() -> Self {
        Self {
            alpha: Fixed4::from_raw(7_000),
            beta: Fixed4::from_raw(3_000),
            max_recency: 3600,
            priority_epsilon: Fixed4::from_raw(1),
            authority: default_authority(),
            exclusive_actions: default_exclusive(),
            contract_ttl: crate::contracts::DEFAULT_TTL,
        }
    }
}

impl GovernanceConfig {
    pub fn load(path: &Path) -> Result<Self, GovernanceError> {
        let cfg: GovernanceConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GovernanceError> {
        let bad = |m: &str| Err(GovernanceError::InvalidConfig(m.to_string()));
        if self.alpha < Fixed4::ZERO || self.beta < Fixed4::ZERO {
            return bad("alpha and beta must be non-negative");
        }
        if self.alpha.raw() + self.beta.raw() <= 0 {
            return bad("alpha + beta must be positive");
        }
        if self.max_recency == 0 {
            return bad("max_recency must be positive");
        }
        if self.priority_epsilon < Fixed4::ZERO {
            return bad("priority_epsilon must be non-negative");
        }
        if Role::ALL.iter().any(|r| !self.authority.contains_key(r)) {
            return bad("authority map must cover every role");
        }
        if self.authority.values().any(|a| !a.is_unit_interval()) {
            return bad("authority values must lie in [0, 1]");
        }
        let distinct: BTreeSet<_> = self.authority.values().collect();
        if distinct.len() != self.authority.len() {
            return bad("authority map must assign distinct values to roles");
        }
        Ok(())
    }

    pub fn authority_of(&self, role: Role) -> Fixed4 {
        self.authority.get(&role).copied().unwrap_or(Fixed4::ZERO)
    }

    pub fn actor(&self, id: impl Into<String>, role: Role, trust: Fixed4) -> Actor {
        Actor { actor_id: ActorId(id.into()), role, authority: self.authority_of(role), trust }
    }

    pub fn actions_exclusive(&self, a: Action, b: Action) -> bool {
        self.exclusive_actions.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
    }
}

pub fn priority(p: &IntentProposal, cfg: &GovernanceConfig) -> Score {
    cfg.alpha.mul_exact(p.actor.authority) + cfg.beta.mul_exact(p.actor.trust)
}

pub fn recency(p: &IntentProposal, now: Tick) -> Result<Tick, GovernanceError> {
    now.checked_sub(p.origin_tick).ok_or(GovernanceError::ClockSkew { origin: p.origin_tick, now })
}

fn pair_conflicts(a: &IntentProposal, b: &IntentProposal, cfg: &GovernanceConfig) -> bool {
    if a.target == b.target && cfg.actions_exclusive(a.action, b.action) {
        return true;
    }
    a.asserted_facts
        .iter()
        .any(|f| b.asserted_facts.iter().any(|g| f.entity_id == g.entity_id && f.key == g.key && f.value != g.value))
}

fn conflict_index_pairs(batch: &[IntentProposal], cfg: &GovernanceConfig) -> BTreeSet<(usize, usize)> {
    let mut by_entity: HashMap<&EntityId, Vec<usize>> = HashMap::new();
    for (i, p) in batch.iter().enumerate() {
        let mut seen = HashSet::new();
        for e in std::iter::once(&p.target).chain(p.asserted_facts.iter().map(|f| &f.entity_id)) {
            if seen.insert(e) {
                by_entity.entry(e).or_default().push(i);
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for members in by_entity.values() {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                let (lo, hi) = (i.min(j), i.max(j));
                if batch[lo].intent_id != batch[hi].intent_id
                    && !pairs.contains(&(lo, hi))
                    && pair_conflicts(&batch[lo], &batch[hi], cfg)
                {
                    pairs.insert((lo, hi));
                }
            }
        }
    }
    pairs
}

fn ordered_pair(a: &IntentId, b: &IntentId) -> (IntentId, IntentId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Symmetric, irreflexive conflict relation over a batch. Pairs are returned
/// with the smaller id first, sorted.
pub fn detect_conflicts(batch: &[IntentProposal], cfg: &GovernanceConfig) -> Vec<(IntentId, IntentId)> {
    let set: BTreeSet<_> = conflict_index_pairs(batch, cfg)
        .into_iter()
        .map(|(i, j)| ordered_pair(&batch[i].intent_id, &batch[j].intent_id))
        .collect();
    set.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    Stale,
    ClockSkew,
    LostArbitration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Disposition {
    Admitted,
    Rejected(RejectReason),
    Escalated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbitrationResult {
    pub admitted: Vec<IntentId>,
    pub rejected: Vec<(IntentId, RejectReason)>,
    pub escalated: Vec<IntentId>,
    pub conflict_pairs: Vec<(IntentId, IntentId)>,
}

impl ArbitrationResult {
    pub fn disposition(&self, id: &IntentId) -> Option<Disposition> {
        if self.admitted.contains(id) {
            Some(Disposition::Admitted)
        } else if self.escalated.contains(id) {
            Some(Disposition::Escalated)
        } else {
            self.rejected.iter().find(|(r, _)| r == id).map(|(_, why)| Disposition::Rejected(*why))
        }
    }

    pub fn conflicts_of(&self, id: &IntentId) -> Vec<IntentId> {
        self.conflict_pairs
            .iter()
            .filter_map(|(a, b)| match (a == id, b == id) {
                (true, _) => Some(b.clone()),
                (_, true) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }
}

/// Indices of `batch` in emission order: priority desc, recency asc,
/// actor id asc, intent id asc.
pub fn deterministic_order(batch: &[IntentProposal], cfg: &GovernanceConfig, now: Tick) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    idx.sort_by(|&a, &b| {
        let (pa, pb) = (&batch[a], &batch[b]);
        priority(pb, cfg)
            .cmp(&priority(pa, cfg))
            .then_with(|| recency(pa, now).unwrap_or(0).cmp(&recency(pb, now).unwrap_or(0)))
            .then_with(|| pa.actor.actor_id.cmp(&pb.actor.actor_id))
            .then_with(|| pa.intent_id.cmp(&pb.intent_id))
    });
    idx
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn arbitrate(batch: &[IntentProposal], cfg: &GovernanceConfig, now: Tick) -> ArbitrationResult {
    let n = batch.len();
    let mut disposition: Vec<Option<Disposition>> = vec![None; n];
    for (i, p) in batch.iter().enumerate() {
        disposition[i] = match recency(p, now) {
            Err(_) => Some(Disposition::Rejected(RejectReason::ClockSkew)),
            Ok(r) if r > cfg.max_recency => Some(Disposition::Rejected(RejectReason::Stale)),
            Ok(_) => None,
        };
    }

    let pairs = conflict_index_pairs(batch, cfg);
    let mut parent: Vec<usize> = (0..n).collect();
    let mut in_conflict = vec![false; n];
    for &(i, j) in &pairs {
        if disposition[i].is_none() && disposition[j].is_none() {
            in_conflict[i] = true;
            in_conflict[j] = true;
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            parent[ri.max(rj)] = ri.min(rj);
        }
    }

    let order = deterministic_order(batch, cfg, now);
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        if disposition[i].is_none() {
            if in_conflict[i] {
                let root = find(&mut parent, i);
                components.entry(root).or_default().push(i);
            } else {
                disposition[i] = Some(Disposition::Admitted);
            }
        }
    }

    let eps = cfg.priority_epsilon.widen();
    for members in components.values() {
        // Members are already in descending priority order.
        let top = priority(&batch[members[0]], cfg);
        let runner_up = priority(&batch[members[1]], cfg);
        let tie = top.abs_diff(runner_up) <= eps;
        for (k, &i) in members.iter().enumerate() {
            disposition[i] = Some(if tie {
                Disposition::Escalated
            } else if k == 0 {
                Disposition::Admitted
            } else {
                Disposition::Rejected(RejectReason::LostArbitration)
            });
        }
    }

    let mut result = ArbitrationResult {
        admitted: Vec::new(),
        rejected: Vec::new(),
        escalated: Vec::new(),
        conflict_pairs: detect_conflicts(batch, cfg),
    };
    for &i in &order {
        let id = batch[i].intent_id.clone();
        match disposition[i].expect("every proposal is decided") {
            Disposition::Admitted => result.admitted.push(id),
            Disposition::Escalated => result.escalated.push(id),
            Disposition::Rejected(why) => result.rejected.push((id, why)),
        }
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionReason {
    /// Outcome produced by policy evaluation.
    Policy,
    Stale,
    ClockSkew,
    LostArbitration,
    PriorityTie,
    MissingAttribute,
    PolicyTypeError,
    UnknownEntity,
}

impl From<RejectReason> for DecisionReason {
    fn from(r: RejectReason) -> Self {
        match r {
            RejectReason::Stale => DecisionReason::Stale,
            RejectReason::ClockSkew => DecisionReason::ClockSkew,
            RejectReason::LostArbitration => DecisionReason::LostArbitration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbitrationNote {
    pub priority: Score,
    pub recency: Option<Tick>,
    pub conflicts_with: Vec<IntentId>,
}

/// Payload of a `DecisionRendered` event: the decision with its full trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub outcome: Outcome,
    pub reason: DecisionReason,
    pub arbitration: ArbitrationNote,
    pub evaluated_rules: Vec<RuleEvaluation>,
    pub explanation: Vec<String>,
    pub policy_digest: Digest,
    pub detail: Option<String>,
}

pub struct GovernContext<'a> {
    pub state: &'a DerivedState,
    pub world: &'a WorldState,
    pub policies: &'a PolicySet,
    pub config: &'a GovernanceConfig,
}

#[derive(Debug, Clone)]
pub struct GovernedBatch {
    pub arbitration: ArbitrationResult,
    /// Proposals in emission order, paired with their decision entry.
    pub decisions: Vec<(IntentProposal, ChainEntry)>,
}

fn validate_batch(batch: &[IntentProposal], chain: &EvidenceChain) -> Result<(), GovernanceError> {
    let bad = |m: String| Err(GovernanceError::InvalidBatch(m));
    let mut ids = HashSet::new();
    for p in batch {
        if p.batch_id != batch[0].batch_id {
            return bad(format!(
                "proposal `{}` is in batch `{}`, expected `{}`",
                p.intent_id, p.batch_id, batch[0].batch_id
            ));
        }
        if p.asserted_facts.is_empty() {
            return bad(format!("proposal `{}` asserts no facts", p.intent_id));
        }
        if !ids.insert(&p.intent_id) || chain.contains_intent(&p.intent_id) {
            return bad(format!("duplicate intent id `{}`", p.intent_id));
        }
    }
    Ok(())
}

/// Arbitrates a batch, evaluates survivors against policy, and appends the
/// intent / context / decision triple for every proposal.
pub fn govern_batch(
    batch: &[IntentProposal],
    ctx: &GovernContext<'_>,
    chain: &mut EvidenceChain,
    now: Tick,
) -> Result<GovernedBatch, GovernanceError> {
    if batch.is_empty() {
        return Ok(GovernedBatch {
            arbitration: ArbitrationResult {
                admitted: vec![],
                rejected: vec![],
                escalated: vec![],
                conflict_pairs: vec![],
            },
            decisions: vec![],
        });
    }
    validate_batch(batch, chain)?;
    let cfg = ctx.config;
    let arbitration = arbitrate(batch, cfg, now);
    let system = ActorId::new("system");
    let mut decisions = Vec::with_capacity(batch.len());

    for i in deterministic_order(batch, cfg, now) {
        let p = &batch[i];
        let id = p.intent_id.clone();
        chain.record(id.clone(), p.actor.actor_id.clone(), now, Payload::IntentProposed(p.clone()))?;

        let snapshot = snapshot_context(ctx.state, p, ctx.world, now);
        let context = match &snapshot {
            Ok(s) => s.clone(),
            Err(_) => ContextSnapshot {
                intent_id: id.clone(),
                resource_scope: Vec::new(),
                attributes: BTreeMap::new(),
                snapshot_tick: now,
            },
        };
        chain.record(id.clone(), system.clone(), now, Payload::ContextSnapshotted(context.clone()))?;

        let note = ArbitrationNote {
            priority: priority(p, cfg),
            recency: recency(p, now).ok(),
            conflicts_with: arbitration.conflicts_of(&id),
        };
        let mut record = DecisionRecord {
            outcome: Outcome::Reject,
            reason: DecisionReason::Policy,
            arbitration: note,
            evaluated_rules: Vec::new(),
            explanation: Vec::new(),
            policy_digest: ctx.policies.source_digest,
            detail: None,
        };
        match arbitration.disposition(&id).expect("arbitrated") {
            Disposition::Rejected(why) => record.reason = why.into(),
            Disposition::Escalated => {
                record.outcome = Outcome::Escalate;
                record.reason = DecisionReason::PriorityTie;
            }
            Disposition::Admitted => match snapshot {
                Err(e) => {
                    record.reason = DecisionReason::UnknownEntity;
                    record.detail = Some(e.to_string());
                }
                Ok(_) => {
                    let request = EvaluationRequest {
                        principal: Principal { actor_id: p.actor.actor_id.clone(), role: p.actor.role },
                        action: p.action.as_str().to_string(),
                        resource: ResourceRef {
                            entity_id: p.target.clone(),
                            entity_type: ctx
                                .world
                                .resources
                                .get(&p.target)
                                .map_or_else(|| "Unknown".to_string(), |r| format!("{:?}", r.kind)),
                        },
                        context: context.attributes.clone(),
                    };
                    match policy::evaluate(ctx.policies, &request) {
                        Ok(d) => {
                            record.outcome = d.outcome;
                            record.evaluated_rules = d.evaluated_rules;
                            record.explanation = d.explanation;
                        }
                        Err(e) => {
                            record.outcome = Outcome::Escalate;
                            record.reason = match e {
                                EvalError::MissingAttribute { .. } => DecisionReason::MissingAttribute,
                                EvalError::TypeMismatch { .. } => DecisionReason::PolicyTypeError,
                            };
                            record.detail = Some(e.to_string());
                        }
                    }
                }
            },
        }
        let entry = chain.record(id, system.clone(), now, Payload::DecisionRendered(record))?.clone();
        decisions.push((p.clone(), entry));
    }
    Ok(GovernedBatch { arbitration, decisions })
}

/// Governs a batch and returns the appended `DecisionRendered` entries.
pub fn govern(
    batch: &[IntentProposal],
    state: &DerivedState,
    world: &WorldState,
    policies: &PolicySet,
    config: &GovernanceConfig,
    chain: &mut EvidenceChain,
    now: Tick,
) -> Result<Vec<ChainEntry>, GovernanceError> {
    let ctx = GovernContext { state, world, policies, config };
    Ok(govern_batch(batch, &ctx, chain, now)?.decisions.into_iter().map(|(_, e)| e).collect())
}
