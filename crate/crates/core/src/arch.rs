//! Runtime architecture model: components, connectors, an append-only event
//! log, proposition valuation for the monitors, and the utility function.
//!
//! Every mutation goes through [`Architecture::apply`], which appends one
//! [`ModelEvent`]. Replaying the log onto the freshly loaded model
//! reproduces the current state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltl::{is_ident, Letter};
use crate::templates::TemplateId;

pub const DEFAULT_EXCEPTION_THRESHOLD: u32 = 3;
pub const DEFAULT_FAILURE_THRESHOLD: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{0}` cannot be turned into an identifier")]
    InvalidId(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("unknown connector `{0}`")]
    UnknownConnector(String),
    #[error("component `{component}` has no {role} interface `{interface}`")]
    UnknownInterface {
        component: String,
        interface: String,
        role: &'static str,
    },
    #[error("component `{component}` already binds required interface `{interface}`")]
    DuplicateBinding { component: String, interface: String },
    #[error("{0} must be positive")]
    NonPositiveThreshold(&'static str),
    #[error("criticality of `{0}` must be a finite nonnegative number")]
    BadCriticality(String),
    #[error("component `{0}` was never removed")]
    NeverRemoved(String),
    #[error("connector `{connector}` cannot be reconnected: endpoint `{component}` is absent")]
    EndpointMissing { connector: String, component: String },
    #[error("replayed event {seq} does not match the model: {msg}")]
    ReplayMismatch { seq: u64, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ComponentState {
    Undeployed,
    Deployed,
    Started,
    Unknown,
}

impl fmt::Display for ComponentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentState::Undeployed => "UNDEPLOYED",
            ComponentState::Deployed => "DEPLOYED",
            ComponentState::Started => "STARTED",
            ComponentState::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: String,
    pub name: String,
    pub criticality: f64,
    pub state: ComponentState,
    /// Exceptions since the last (re)start.
    pub exception_count: u32,
    /// Diagnosed failures, never reset.
    pub failure_counter: u32,
    pub provides: BTreeSet<String>,
    pub requires: BTreeSet<String>,
}

/// Wires `source`'s required interface to `target`'s provided interface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connector {
    pub id: String,
    pub source: String,
    pub source_interface: String,
    pub target: String,
    pub target_interface: String,
    pub connected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    StateChanged,
    ExceptionRaised,
    ComponentRemoved,
    ComponentRestored,
    ConnectorBroken,
    ConnectorReconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDetail {
    pub from: ComponentState,
    pub to: ComponentState,
}

/// One entry of the event log. Field order is the JSON-lines column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEvent {
    pub seq: u64,
    #[serde(rename = "loop")]
    pub loop_index: u64,
    pub kind: EventKind,
    pub target: String,
    pub detail: Option<StateDetail>,
}

/// A requested mutation; [`Architecture::apply`] turns it into a logged event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    /// Moving to STARTED is a (re)start and clears the exception count.
    SetState { component: String, to: ComponentState },
    RaiseException { component: String },
    RemoveComponent { component: String },
    RestoreComponent { component: String },
    BreakConnector { connector: String },
    Reconnect { connector: String },
}

impl Change {
    fn from_event(e: &ModelEvent) -> Result<Self, ModelError> {
        let target = e.target.clone();
        Ok(match e.kind {
            EventKind::StateChanged => Change::SetState {
                component: target,
                to: e
                    .detail
                    .ok_or_else(|| ModelError::ReplayMismatch {
                        seq: e.seq,
                        msg: "StateChanged without detail".into(),
                    })?
                    .to,
            },
            EventKind::ExceptionRaised => Change::RaiseException { component: target },
            EventKind::ComponentRemoved => Change::RemoveComponent { component: target },
            EventKind::ComponentRestored => Change::RestoreComponent { component: target },
            EventKind::ConnectorBroken => Change::BreakConnector { connector: target },
            EventKind::ConnectorReconnected => Change::Reconnect { connector: target },
        })
    }
}

// ---------------------------------------------------------------------------
// Description documents (embedded in scenario files)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub name: String,
    pub criticality: f64,
    #[serde(default)]
    pub provides: Vec<String>,
    #[serde(default)]
    pub requires: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConnectorSpec {
    pub id: String,
    pub source: String,
    pub source_interface: String,
    pub target: String,
    pub target_interface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArchitectureSpec {
    pub exception_threshold: i64,
    pub failure_threshold: i64,
    pub components: Vec<ComponentSpec>,
    pub connectors: Vec<ConnectorSpec>,
}

/// Identifier used for grounding: the display name with every character
/// outside `[A-Za-z0-9_]` replaced by `_` ("Query Service" → "Query_Service").
pub fn component_id(name: &str) -> Result<String, ModelError> {
    let id: String = name
        .trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if is_ident(&id) {
        Ok(id)
    } else {
        Err(ModelError::InvalidId(name.to_string()))
    }
}

const DEFAULT_ARCHITECTURE: &str = include_str!("../data/default-architecture.json");

/// The bundled nine-component marketplace topology.
pub fn default_architecture_spec() -> ArchitectureSpec {
    serde_json::from_str(DEFAULT_ARCHITECTURE).expect("bundled architecture is valid JSON")
}

pub fn default_architecture() -> Architecture {
    Architecture::load(&default_architecture_spec()).expect("bundled architecture is valid")
}

// ---------------------------------------------------------------------------
// Architecture
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    components: BTreeMap<String, Component>,
    /// Definitions of removed components, kept for restoration.
    removed: BTreeMap<String, Component>,
    connectors: BTreeMap<String, Connector>,
    exception_threshold: u32,
    failure_threshold: u32,
    events: Vec<ModelEvent>,
}

impl Architecture {
    /// Builds the model with every component STARTED, every connector
    /// connected, zero counters and an empty log.
    pub fn load(spec: &ArchitectureSpec) -> Result<Self, ModelError> {
        let threshold = |v: i64, what| {
            u32::try_from(v)
                .ok()
                .filter(|&t| t > 0)
                .ok_or(ModelError::NonPositiveThreshold(what))
        };
        let exception_threshold = threshold(spec.exception_threshold, "exceptionThreshold")?;
        let failure_threshold = threshold(spec.failure_threshold, "failureThreshold")?;

        let mut components = BTreeMap::new();
        for c in &spec.components {
            let id = component_id(&c.name)?;
            if !c.criticality.is_finite() || c.criticality < 0.0 {
                return Err(ModelError::BadCriticality(c.name.clone()));
            }
            let component = Component {
                id: id.clone(),
                name: c.name.clone(),
                criticality: c.criticality,
                state: ComponentState::Started,
                exception_count: 0,
                failure_counter: 0,
                provides: c.provides.iter().cloned().collect(),
                requires: c.requires.iter().cloned().collect(),
            };
            if components.insert(id.clone(), component).is_some() {
                return Err(ModelError::DuplicateId(id));
            }
        }

        let mut arch = Self {
            components,
            removed: BTreeMap::new(),
            connectors: BTreeMap::new(),
            exception_threshold,
            failure_threshold,
            events: Vec::new(),
        };

        let mut bound = BTreeSet::new();
        for k in &spec.connectors {
            if !is_ident(&k.id) {
                return Err(ModelError::InvalidId(k.id.clone()));
            }
            if arch.connectors.contains_key(&k.id) || arch.components.contains_key(&k.id) {
                return Err(ModelError::DuplicateId(k.id.clone()));
            }
            let source = arch.resolve_component(&k.source)?;
            let target = arch.resolve_component(&k.target)?;
            if !arch.components[&source].requires.contains(&k.source_interface) {
                return Err(ModelError::UnknownInterface {
                    component: source,
                    interface: k.source_interface.clone(),
                    role: "required",
                });
            }
            if !arch.components[&target].provides.contains(&k.target_interface) {
                return Err(ModelError::UnknownInterface {
                    component: target,
                    interface: k.target_interface.clone(),
                    role: "provided",
                });
            }
            if !bound.insert((source.clone(), k.source_interface.clone())) {
                return Err(ModelError::DuplicateBinding {
                    component: source,
                    interface: k.source_interface.clone(),
                });
            }
            arch.connectors.insert(
                k.id.clone(),
                Connector {
                    id: k.id.clone(),
                    source,
                    source_interface: k.source_interface.clone(),
                    target,
                    target_interface: k.target_interface.clone(),
                    connected: true,
                },
            );
        }
        Ok(arch)
    }

    /// Accepts a component id or display name.
    pub fn resolve_component(&self, name_or_id: &str) -> Result<String, ModelError> {
        if self.components.contains_key(name_or_id) || self.removed.contains_key(name_or_id) {
            return Ok(name_or_id.to_string());
        }
        self.components
            .values()
            .chain(self.removed.values())
            .find(|c| c.name == name_or_id)
            .map(|c| c.id.clone())
            .ok_or_else(|| ModelError::UnknownComponent(name_or_id.to_string()))
    }

    pub fn exception_threshold(&self) -> u32 {
        self.exception_threshold
    }

    pub fn failure_threshold(&self) -> u32 {
        self.failure_threshold
    }

    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.components.values()
    }

    pub fn connectors(&self) -> impl Iterator<Item = &Connector> {
        self.connectors.values()
    }

    pub fn component(&self, id: &str) -> Option<&Component> {
        self.components.get(id)
    }

    /// Present or removed.
    pub fn known_component(&self, id: &str) -> Option<&Component> {
        self.components.get(id).or_else(|| self.removed.get(id))
    }

    pub fn connector(&self, id: &str) -> Option<&Connector> {
        self.connectors.get(id)
    }

    pub fn is_present(&self, id: &str) -> bool {
        self.components.contains_key(id)
    }

    pub fn is_removed(&self, id: &str) -> bool {
        self.removed.contains_key(id) && !self.components.contains_key(id)
    }

    /// Connectors with `id` as either endpoint.
    pub fn adjacent_connectors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Connector> + 'a {
        self.connectors.values().filter(move |k| k.source == id || k.target == id)
    }

    /// Connectors through which `id` consumes other components.
    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Connector> + 'a {
        self.connectors.values().filter(move |k| k.source == id)
    }

    /// Connectors bound to interfaces `id` provides.
    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Connector> + 'a {
        self.connectors.values().filter(move |k| k.target == id)
    }

    pub fn events(&self) -> &[ModelEvent] {
        &self.events
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    /// Events with `seq > since`, in order.
    pub fn drain_events(&self, since: u64) -> Vec<ModelEvent> {
        let start = self.events.partition_point(|e| e.seq <= since);
        self.events[start..].to_vec()
    }

    /// Event log as JSON lines.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// Applies one change, appends its event and returns the event's seq.
    pub fn apply(&mut self, loop_index: u64, change: Change) -> Result<u64, ModelError> {
        let (kind, target, detail) = match change {
            Change::SetState { component, to } => {
                let c = self.present_mut(&component)?;
                let from = c.state;
                c.state = to;
                if to == ComponentState::Started {
                    c.exception_count = 0;
                }
                (EventKind::StateChanged, component, Some(StateDetail { from, to }))
            }
            Change::RaiseException { component } => {
                self.present_mut(&component)?.exception_count += 1;
                (EventKind::ExceptionRaised, component, None)
            }
            Change::RemoveComponent { component } => {
                let c = self
                    .components
                    .remove(&component)
                    .ok_or_else(|| ModelError::UnknownComponent(component.clone()))?;
                self.removed.insert(component.clone(), c);
                for k in self.connectors.values_mut() {
                    if k.source == component || k.target == component {
                        k.connected = false;
                    }
                }
                (EventKind::ComponentRemoved, component, None)
            }
            Change::RestoreComponent { component } => {
                if self.components.contains_key(&component) {
                    return Err(ModelError::NeverRemoved(component));
                }
                let mut c = self
                    .removed
                    .remove(&component)
                    .ok_or_else(|| ModelError::NeverRemoved(component.clone()))?;
                c.state = ComponentState::Started;
                c.exception_count = 0;
                self.components.insert(component.clone(), c);
                (EventKind::ComponentRestored, component, None)
            }
            Change::BreakConnector { connector } => {
                self.connector_mut(&connector)?.connected = false;
                (EventKind::ConnectorBroken, connector, None)
            }
            Change::Reconnect { connector } => {
                let k = self.connector_mut(&connector)?;
                let (source, target) = (k.source.clone(), k.target.clone());
                for end in [source, target] {
                    if !self.components.contains_key(&end) {
                        return Err(ModelError::EndpointMissing {
                            connector,
                            component: end,
                        });
                    }
                }
                self.connector_mut(&connector)?.connected = true;
                (EventKind::ConnectorReconnected, connector, None)
            }
        };
        let seq = self.last_seq() + 1;
        self.events.push(ModelEvent {
            seq,
            loop_index,
            kind,
            target,
            detail,
        });
        Ok(seq)
    }

    /// Re-applies logged events (typically from another model's log) in order.
    pub fn replay(&mut self, events: &[ModelEvent]) -> Result<(), ModelError> {
        for e in events {
            if let (EventKind::StateChanged, Some(d)) = (e.kind, e.detail) {
                let current = self.component(&e.target).map(|c| c.state);
                if current != Some(d.from) {
                    return Err(ModelError::ReplayMismatch {
                        seq: e.seq,
                        msg: format!("expected {} in state {}", e.target, d.from),
                    });
                }
            }
            let seq = self.apply(e.loop_index, Change::from_event(e)?)?;
            if seq != e.seq {
                return Err(ModelError::ReplayMismatch {
                    seq: e.seq,
                    msg: format!("replayed as seq {seq}"),
                });
            }
        }
        Ok(())
    }

    /// Equality of everything the event log determines: component states and
    /// exception counts, removals, connector status. Failure counters belong
    /// to the analysis and are excluded.
    pub fn same_state(&self, other: &Architecture) -> bool {
        let strip = |m: &BTreeMap<String, Component>| -> Vec<Component> {
            m.values()
                .map(|c| Component {
                    failure_counter: 0,
                    ..c.clone()
                })
                .collect()
        };
        strip(&self.components) == strip(&other.components)
            && self.removed.keys().eq(other.removed.keys())
            && self.connectors == other.connectors
    }

    /// Increments the diagnosed-failure counter of a present or removed component.
    pub fn record_failure(&mut self, id: &str) -> Result<u32, ModelError> {
        let c = match self.components.get_mut(id) {
            Some(c) => c,
            None => self
                .removed
                .get_mut(id)
                .ok_or_else(|| ModelError::UnknownComponent(id.to_string()))?,
        };
        c.failure_counter += 1;
        Ok(c.failure_counter)
    }

    fn present_mut(&mut self, id: &str) -> Result<&mut Component, ModelError> {
        self.components
            .get_mut(id)
            .ok_or_else(|| ModelError::UnknownComponent(id.to_string()))
    }

    fn connector_mut(&mut self, id: &str) -> Result<&mut Connector, ModelError> {
        self.connectors
            .get_mut(id)
            .ok_or_else(|| ModelError::UnknownConnector(id.to_string()))
    }

    /// STARTED, exceptions within threshold, every outgoing connector connected.
    pub fn is_healthy(&self, id: &str) -> bool {
        match self.components.get(id) {
            Some(c) => {
                c.state == ComponentState::Started
                    && c.exception_count <= self.exception_threshold
                    && self.outgoing(id).all(|k| k.connected)
            }
            None => false,
        }
    }

    /// Sum of criticality over healthy components.
    pub fn utility(&self) -> f64 {
        self.components
            .values()
            .filter(|c| self.is_healthy(&c.id))
            .map(|c| c.criticality)
            .sum()
    }

    pub fn max_utility(&self) -> f64 {
        self.components.values().map(|c| c.criticality).sum()
    }

    /// Grounds `template`'s atoms against `target` and returns the ones that
    /// currently hold.
    pub fn valuation(&self, template: TemplateId, target: &str) -> Result<Letter, ModelError> {
        let mut letter = Letter::empty();
        let started = |id: &str| self.components.get(id).is_some_and(|c| c.state == ComponentState::Started);
        match template {
            TemplateId::Phi1 | TemplateId::Phi2 => {
                let c = self
                    .components
                    .get(target)
                    .ok_or_else(|| ModelError::UnknownComponent(target.to_string()))?;
                if template == TemplateId::Phi1 {
                    if c.state == ComponentState::Unknown {
                        letter.insert(format!("isUnknown@{target}"));
                    }
                } else {
                    if c.state == ComponentState::Started {
                        letter.insert(format!("isStarted@{target}"));
                    }
                    if c.exception_count <= self.exception_threshold {
                        letter.insert(format!("lowException@{target}"));
                    }
                }
            }
            TemplateId::Phi3 => {
                if self.known_component(target).is_none() {
                    return Err(ModelError::UnknownComponent(target.to_string()));
                }
                if self.is_present(target) {
                    letter.insert(format!("present@{target}"));
                }
            }
            TemplateId::Phi4 => {
                let k = self
                    .connectors
                    .get(target)
                    .ok_or_else(|| ModelError::UnknownConnector(target.to_string()))?;
                for end in [&k.source, &k.target] {
                    if started(end) {
                        letter.insert(format!("isStarted@{end}"));
                    }
                }
                if k.connected {
                    letter.insert(format!("connector@{target}"));
                }
            }
        }
        Ok(letter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(criticalities: &[(&str, f64)]) -> ArchitectureSpec {
        ArchitectureSpec {
            exception_threshold: 3,
            failure_threshold: 2,
            components: criticalities
                .iter()
                .map(|(n, c)| ComponentSpec {
                    name: n.to_string(),
                    criticality: *c,
                    provides: vec!["I".into()],
                    requires: vec!["J".into()],
                })
                .collect(),
            connectors: vec![],
        }
    }

    fn pair() -> Architecture {
        let mut s = spec(&[("A", 2.0), ("B", 3.0)]);
        s.connectors.push(ConnectorSpec {
            id: "k".into(),
            source: "A".into(),
            source_interface: "J".into(),
            target: "B".into(),
            target_interface: "I".into(),
        });
        Architecture::load(&s).unwrap()
    }

    #[test]
    fn default_architecture_loads_started() {
        let arch = default_architecture();
        assert_eq!(arch.components().count(), 9);
        assert_eq!(arch.connectors().count(), 8);
        assert!(arch.components().all(|c| c.state == ComponentState::Started && c.exception_count == 0));
        assert!(arch.connectors().all(|k| k.connected));
        assert_eq!(arch.resolve_component("Query Service").unwrap(), "Query_Service");
        assert!(arch.events().is_empty());
        assert_eq!(arch.utility(), arch.max_utility());
    }

    #[test]
    fn empty_architecture() {
        let arch = Architecture::load(&spec(&[])).unwrap();
        assert_eq!(arch.utility(), 0.0);
    }

    #[test]
    fn load_validation() {
        let mut s = spec(&[("A", 1.0), ("B", 1.0)]);
        s.connectors.push(ConnectorSpec {
            id: "k".into(),
            source: "A".into(),
            source_interface: "J".into(),
            target: "B".into(),
            target_interface: "Missing".into(),
        });
        assert!(matches!(Architecture::load(&s), Err(ModelError::UnknownInterface { .. })));

        s.connectors[0].target_interface = "I".into();
        s.connectors.push(ConnectorSpec {
            id: "k2".into(),
            ..s.connectors[0].clone()
        });
        assert!(matches!(Architecture::load(&s), Err(ModelError::DuplicateBinding { .. })));

        s.connectors.truncate(1);
        s.connectors[0].target = "Nope".into();
        assert!(matches!(Architecture::load(&s), Err(ModelError::UnknownComponent(_))));

        assert!(matches!(
            Architecture::load(&spec(&[("A", 1.0), ("A", 2.0)])),
            Err(ModelError::DuplicateId(_))
        ));
        let mut s = spec(&[]);
        s.exception_threshold = 0;
        assert_eq!(Architecture::load(&s), Err(ModelError::NonPositiveThreshold("exceptionThreshold")));
        assert!(matches!(
            Architecture::load(&spec(&[("A", -1.0)])),
            Err(ModelError::BadCriticality(_))
        ));
    }

    #[test]
    fn apply_events() {
        let mut arch = pair();
        arch.apply(
            1,
            Change::SetState {
                component: "A".into(),
                to: ComponentState::Unknown,
            },
        )
        .unwrap();
        assert_eq!(arch.component("A").unwrap().state, ComponentState::Unknown);
        for _ in 0..4 {
            arch.apply(1, Change::RaiseException { component: "B".into() }).unwrap();
        }
        assert_eq!(arch.component("B").unwrap().exception_count, 4);
        arch.apply(2, Change::RemoveComponent { component: "B".into() }).unwrap();
        assert!(!arch.is_present("B"));
        assert!(!arch.connector("k").unwrap().connected);
        assert!(matches!(
            arch.apply(2, Change::Reconnect { connector: "k".into() }),
            Err(ModelError::EndpointMissing { .. })
        ));
        arch.apply(3, Change::RestoreComponent { component: "B".into() }).unwrap();
        let b = arch.component("B").unwrap();
        assert_eq!((b.state, b.exception_count), (ComponentState::Started, 0));
        assert_eq!(
            arch.apply(3, Change::RestoreComponent { component: "A".into() }),
            Err(ModelError::NeverRemoved("A".into()))
        );
        assert!(matches!(
            arch.apply(3, Change::BreakConnector { connector: "zz".into() }),
            Err(ModelError::UnknownConnector(_))
        ));
        let seqs: Vec<u64> = arch.events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, (1..=7).collect::<Vec<_>>());
    }

    #[test]
    fn restart_clears_exceptions() {
        let mut arch = pair();
        arch.apply(1, Change::RaiseException { component: "A".into() }).unwrap();
        arch.apply(
            1,
            Change::SetState {
                component: "A".into(),
                to: ComponentState::Started,
            },
        )
        .unwrap();
        assert_eq!(arch.component("A").unwrap().exception_count, 0);
    }

    #[test]
    fn valuation_examples() {
        let mut arch = pair();
        assert_eq!(
            arch.valuation(TemplateId::Phi2, "A").unwrap(),
            ["isStarted@A", "lowException@A"].into_iter().collect()
        );
        arch.apply(1, Change::BreakConnector { connector: "k".into() }).unwrap();
        assert_eq!(
            arch.valuation(TemplateId::Phi4, "k").unwrap(),
            ["isStarted@A", "isStarted@B"].into_iter().collect()
        );
        arch.apply(
            1,
            Change::SetState {
                component: "A".into(),
                to: ComponentState::Unknown,
            },
        )
        .unwrap();
        assert_eq!(arch.valuation(TemplateId::Phi1, "A").unwrap(), ["isUnknown@A"].into_iter().collect());
        assert_eq!(arch.valuation(TemplateId::Phi2, "A").unwrap(), ["lowException@A"].into_iter().collect());
        arch.apply(1, Change::RemoveComponent { component: "B".into() }).unwrap();
        assert_eq!(arch.valuation(TemplateId::Phi3, "B").unwrap(), Letter::empty());
        assert!(arch.valuation(TemplateId::Phi1, "B").is_err());
        assert!(arch.valuation(TemplateId::Phi3, "Z").is_err());
    }

    #[test]
    fn utility_examples() {
        let mut arch = pair();
        assert_eq!(arch.utility(), 5.0);
        let mut unknown = arch.clone();
        unknown
            .apply(
                1,
                Change::SetState {
                    component: "A".into(),
                    to: ComponentState::Unknown,
                },
            )
            .unwrap();
        assert_eq!(unknown.utility(), 3.0);
        arch.apply(1, Change::BreakConnector { connector: "k".into() }).unwrap();
        assert_eq!(arch.utility(), 3.0);
    }

    #[test]
    fn drain_events_window() {
        let mut arch = pair();
        assert!(arch.drain_events(0).is_empty());
        for _ in 0..3 {
            arch.apply(1, Change::RaiseException { component: "A".into() }).unwrap();
        }
        let tail: Vec<u64> = arch.drain_events(1).iter().map(|e| e.seq).collect();
        assert_eq!(tail, [2, 3]);
        assert!(arch.drain_events(3).is_empty());
        assert!(arch.drain_events(10).is_empty());
    }

    #[test]
    fn jsonl_field_order() {
        let mut arch = pair();
        arch.apply(
            4,
            Change::SetState {
                component: "A".into(),
                to: ComponentState::Unknown,
            },
        )
        .unwrap();
        arch.apply(4, Change::BreakConnector { connector: "k".into() }).unwrap();
        assert_eq!(
            arch.events_jsonl(),
            "{\"seq\":1,\"loop\":4,\"kind\":\"StateChanged\",\"target\":\"A\",\"detail\":{\"from\":\"STARTED\",\"to\":\"UNKNOWN\"}}\n\
             {\"seq\":2,\"loop\":4,\"kind\":\"ConnectorBroken\",\"target\":\"k\",\"detail\":null}\n"
        );
    }

    #[test]
    fn replay_reproduces_state() {
        let base = pair();
        let mut arch = base.clone();
        arch.apply(1, Change::RemoveComponent { component: "A".into() }).unwrap();
        arch.apply(1, Change::RaiseException { component: "B".into() }).unwrap();
        arch.record_failure("A").unwrap();
        arch.apply(2, Change::RestoreComponent { component: "A".into() }).unwrap();
        let mut replayed = base.clone();
        replayed.replay(arch.events()).unwrap();
        assert!(replayed.same_state(&arch));
        assert_eq!(replayed.events(), arch.events());
        assert!(!base.same_state(&arch));
    }
}
