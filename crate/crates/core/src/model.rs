//! Shared domain vocabulary: identifiers, scalar values, actors, facts and
//! intent proposals.

use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fixed::Fixed4;

/// Logical clock tick. Never derived from wall time.
pub type Tick = u64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(
    /// Causal thread identifier shared by every lifecycle event of one intent.
    IntentId
);
string_id!(EntityId);
string_id!(ActorId);
string_id!(ContractId);

/// Scalar fact / context value.
///
/// Serialized in tagged form (`{"str":"open"}`); bare JSON scalars are also
/// accepted on input so hand-written scenario files stay readable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Dec(Fixed4),
    Str(String),
    Bool(bool),
}

impl Value {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Dec(_) => "dec",
            Value::Str(_) => "str",
            Value::Bool(_) => "bool",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Dec(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(1))?;
        match self {
            Value::Int(v) => m.serialize_entry("int", v)?,
            Value::Dec(v) => m.serialize_entry("dec", v)?,
            Value::Str(v) => m.serialize_entry("str", v)?,
            Value::Bool(v) => m.serialize_entry("bool", v)?,
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Value;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a tagged value or a JSON scalar")
            }
            fn visit_bool<E: de::Error>(self, v: bool) -> Result<Value, E> {
                Ok(Value::Bool(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
                Ok(Value::Int(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
                i64::try_from(v).map(Value::Int).map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
                Ok(Value::Dec(Fixed4::from_f64(v)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
                Ok(Value::Str(v.to_string()))
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Value, A::Error> {
                let tag: String = map.next_key()?.ok_or_else(|| de::Error::custom("empty value object"))?;
                let value = match tag.as_str() {
                    "int" => Value::Int(map.next_value()?),
                    "dec" => Value::Dec(map.next_value()?),
                    "str" => Value::Str(map.next_value()?),
                    "bool" => Value::Bool(map.next_value()?),
                    other => return Err(de::Error::unknown_variant(other, &["int", "dec", "str", "bool"])),
                };
                if map.next_key::<String>()?.is_some() {
                    return Err(de::Error::custom("value object must have exactly one key"));
                }
                Ok(value)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Human,
    Automation,
    VerifiedAgent,
    UnverifiedAgent,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Human, Role::Automation, Role::VerifiedAgent, Role::UnverifiedAgent];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Human => "Human",
            Role::Automation => "Automation",
            Role::VerifiedAgent => "VerifiedAgent",
            Role::UnverifiedAgent => "UnverifiedAgent",
        }
    }

    pub fn is_agent(self) -> bool {
        matches!(self, Role::VerifiedAgent | Role::UnverifiedAgent)
    }

    /// Role-group membership used by policy principal clauses. `"Agent"`
    /// names both agent roles.
    pub fn matches_name(self, name: &str) -> bool {
        name == self.as_str() || (name == "Agent" && self.is_agent())
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The mutation vocabulary of the simulated infrastructure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    UpdateOperatingStatus,
    TerminateInstance,
    ScaleCluster,
    UpdateMetric,
}

impl Action {
    pub const ALL: [Action; 4] =
        [Action::UpdateOperatingStatus, Action::TerminateInstance, Action::ScaleCluster, Action::UpdateMetric];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::UpdateOperatingStatus => "UpdateOperatingStatus",
            Action::TerminateInstance => "TerminateInstance",
            Action::ScaleCluster => "ScaleCluster",
            Action::UpdateMetric => "UpdateMetric",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub actor_id: ActorId,
    pub role: Role,
    pub authority: Fixed4,
    pub trust: Fixed4,
}

/// A fact an intent wants to be true once executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactAssertion {
    pub entity_id: EntityId,
    pub key: String,
    pub value: Value,
    #[serde(default)]
    pub valid_until: Option<Tick>,
}

/// A fact materialized by an execution outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub entity_id: EntityId,
    pub key: String,
    pub value: Value,
    pub asserted_by: ActorId,
    pub asserted_at: Tick,
    pub valid_until: Option<Tick>,
}

impl Fact {
    pub fn is_expired_at(&self, tick: Tick) -> bool {
        matches!(self.valid_until, Some(until) if until < tick)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentProposal {
    pub intent_id: IntentId,
    pub actor: Actor,
    pub action: Action,
    pub target: EntityId,
    pub asserted_facts: Vec<FactAssertion>,
    pub origin_tick: Tick,
    pub batch_id: String,
}

impl IntentProposal {
    /// Every entity touched by the proposal: the target plus asserted entities.
    pub fn touched_entities(&self) -> std::collections::BTreeSet<EntityId> {
        let mut set: std::collections::BTreeSet<EntityId> =
            self.asserted_facts.iter().map(|f| f.entity_id.clone()).collect();
        set.insert(self.target.clone());
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_accepts_bare_and_tagged() {
        let v: Value = serde_json::from_str("\"open\"").unwrap();
        assert_eq!(v, Value::Str("open".into()));
        let v: Value = serde_json::from_str("{\"int\":3}").unwrap();
        assert_eq!(v, Value::Int(3));
        let v: Value = serde_json::from_str("0.8").unwrap();
        assert_eq!(v, Value::Dec(Fixed4::from_raw(8000)));
        assert_eq!(serde_json::to_string(&Value::Bool(true)).unwrap(), "{\"bool\":true}");
        assert!(serde_json::from_str::<Value>("{\"int\":3,\"str\":\"x\"}").is_err());
        assert!(serde_json::from_str::<Value>("{\"float\":3}").is_err());
    }

    #[test]
    fn agent_group_matches_both_agent_roles() {
        assert!(Role::VerifiedAgent.matches_name("Agent"));
        assert!(Role::UnverifiedAgent.matches_name("Agent"));
        assert!(!Role::Human.matches_name("Agent"));
        assert!(Role::Human.matches_name("Human"));
    }
}
