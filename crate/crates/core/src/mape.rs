//! The Monitor / Analyze / Plan / Execute loop over the architecture model.
//!
//! Detection comes in two interchangeable flavours behind [`Detector`]:
//! [`RvDetector`] steps one synthesized three-valued monitor per
//! (template, target) pair, [`BaselineDetector`] evaluates the same
//! conditions directly on the model. Both feed the same classification,
//! planning and execution code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Architecture, Change, ComponentState, ModelError};
use crate::inject::{due_injections, inject, FailureKind, InjectionError, InjectionSpec};
use crate::ltl::{Letter, Verdict};
use crate::monitor::{build_monitor, MooreMonitor, SynthError};
use crate::templates::{TargetKind, TemplateId};

#[derive(Debug, Error)]
pub enum MapeError {
    #[error("monitor synthesis failed: {0}")]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Injection(#[from] InjectionError),
    #[error("loop {got} does not follow loop {last}")]
    LoopOrder { last: u64, got: u64 },
    #[error("healing aborted at {action} after {applied} applied actions: {source}")]
    Execute {
        action: HealingAction,
        applied: usize,
        source: ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Runtime verification: synthesized monitors.
    Rv,
    /// Direct predicate checks on the model.
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rv => "rv",
            Mode::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rv" => Ok(Mode::Rv),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode `{other}` (expected rv or baseline)")),
        }
    }
}

/// A live monitor bound to one model element.
#[derive(Debug, Clone)]
pub struct MonitorInstance {
    pub template: TemplateId,
    pub target: String,
    pub monitor: Arc<MooreMonitor>,
    pub state: usize,
    pub last_verdict: Verdict,
    /// Suspended while the target component is absent.
    pub dormant: bool,
}

impl MonitorInstance {
    pub fn reset(&mut self) {
        self.state = self.monitor.initial();
        self.last_verdict = self.monitor.output(self.state);
        self.dormant = false;
    }

    pub fn key(&self) -> InstanceKey {
        (self.template, self.target.clone())
    }
}

pub type InstanceKey = (TemplateId, String);

/// A monitored condition that has just been violated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub template: TemplateId,
    pub target: String,
    pub letter: Letter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureDiagnosis {
    pub kind: FailureKind,
    pub template: TemplateId,
    pub target: String,
    pub loop_index: u64,
    pub violating_letter: Letter,
    /// Differs from `target` when deep analysis blamed a provider.
    pub root_target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HealingAction {
    Restart(String),
    Recreate(String),
    Reconnect(String),
}

impl fmt::Display for HealingAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HealingAction::Restart(c) => write!(f, "Restart({c})"),
            HealingAction::Recreate(c) => write!(f, "Recreate({c})"),
            HealingAction::Reconnect(k) => write!(f, "Reconnect({k})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HealingPlan {
    pub actions: Vec<HealingAction>,
    pub provoking: Vec<FailureDiagnosis>,
    /// Actions each diagnosis asked for, before merging.
    pub per_diagnosis: Vec<Vec<HealingAction>>,
}

// ---------------------------------------------------------------------------
// Monitor phase
// ---------------------------------------------------------------------------

/// One instance per component for each component template and one per
/// connector for the connector template, ordered by (template, target), all
/// in their initial state.
pub fn instantiate_monitors(arch: &Architecture) -> Result<Vec<MonitorInstance>, MapeError> {
    let mut out = Vec::new();
    for template in TemplateId::ALL {
        let targets: Vec<String> = match template.target_kind() {
            TargetKind::Component => arch.components().map(|c| c.id.clone()).collect(),
            TargetKind::Connector => arch.connectors().map(|k| k.id.clone()).collect(),
        };
        for target in targets {
            let monitor = Arc::new(build_monitor(&template.ground(arch, &target)?)?);
            let state = monitor.initial();
            out.push(MonitorInstance {
                template,
                last_verdict: monitor.output(state),
                monitor,
                state,
                target,
                dormant: false,
            });
        }
    }
    Ok(out)
}

fn is_dormant(arch: &Architecture, template: TemplateId, target: &str) -> bool {
    matches!(template, TemplateId::Phi1 | TemplateId::Phi2) && !arch.is_present(target)
}

/// Samples one letter per live instance from the current model. Component
/// instances whose target has been removed are marked dormant and skipped.
pub fn monitor_phase(arch: &Architecture, instances: &mut [MonitorInstance]) -> Result<BTreeMap<InstanceKey, Letter>, MapeError> {
    let mut letters = BTreeMap::new();
    for inst in instances.iter_mut() {
        if is_dormant(arch, inst.template, &inst.target) {
            inst.dormant = true;
            continue;
        }
        letters.insert(inst.key(), arch.valuation(inst.template, &inst.target)?);
    }
    Ok(letters)
}

/// Steps every fed instance and reports those that just entered BOTTOM.
pub fn step_instances(
    instances: &mut [MonitorInstance],
    letters: &BTreeMap<InstanceKey, Letter>,
) -> Result<Vec<Violation>, MapeError> {
    let mut out = Vec::new();
    for inst in instances.iter_mut() {
        let Some(letter) = letters.get(&inst.key()) else {
            continue;
        };
        let (next, verdict) = inst.monitor.step(inst.state, letter)?;
        let entered_bottom = verdict == Verdict::Bottom && inst.last_verdict != Verdict::Bottom;
        inst.state = next;
        inst.last_verdict = verdict;
        if entered_bottom {
            out.push(Violation {
                template: inst.template,
                target: inst.target.clone(),
                letter: letter.clone(),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Analyze
// ---------------------------------------------------------------------------

/// Steps the monitors, then classifies their fresh violations.
pub fn analyze(
    instances: &mut [MonitorInstance],
    letters: &BTreeMap<InstanceKey, Letter>,
    arch: &mut Architecture,
    loop_index: u64,
) -> Result<Vec<FailureDiagnosis>, MapeError> {
    let violations = step_instances(instances, letters)?;
    classify(violations, arch, loop_index)
}

/// Turns raw violations into diagnoses, one per cause:
///
/// * a PHI2 violation on a component that is UNKNOWN is left to PHI1;
/// * a PHI4 violation on a connector with an endpoint diagnosed in the same
///   loop is left to that endpoint's diagnosis.
///
/// Each component diagnosis bumps the component's failure counter; past the
/// failure threshold, [`deep_analysis`] picks the root target.
pub fn classify(mut violations: Vec<Violation>, arch: &mut Architecture, loop_index: u64) -> Result<Vec<FailureDiagnosis>, MapeError> {
    violations.sort_by(|a, b| (a.template, &a.target).cmp(&(b.template, &b.target)));
    let mut diagnoses = Vec::new();
    let mut diagnosed_components = BTreeSet::new();
    for v in violations.iter().filter(|v| v.template != TemplateId::Phi4) {
        if v.template == TemplateId::Phi2
            && arch.component(&v.target).is_some_and(|c| c.state == ComponentState::Unknown)
        {
            continue;
        }
        diagnosed_components.insert(v.target.clone());
        diagnoses.push(diagnosis(v, loop_index));
    }
    for v in violations.iter().filter(|v| v.template == TemplateId::Phi4) {
        let k = arch
            .connector(&v.target)
            .ok_or_else(|| ModelError::UnknownConnector(v.target.clone()))?;
        if diagnosed_components.contains(&k.source) || diagnosed_components.contains(&k.target) {
            continue;
        }
        diagnoses.push(diagnosis(v, loop_index));
    }
    for d in diagnoses.iter_mut() {
        if d.template.target_kind() != TargetKind::Component {
            continue;
        }
        if arch.record_failure(&d.target)? > arch.failure_threshold() {
            d.root_target = deep_analysis(arch, &d.target);
        }
    }
    Ok(diagnoses)
}

fn diagnosis(v: &Violation, loop_index: u64) -> FailureDiagnosis {
    FailureDiagnosis {
        kind: v.template.failure_kind(),
        template: v.template,
        target: v.target.clone(),
        loop_index,
        violating_letter: v.letter.clone(),
        root_target: v.target.clone(),
    }
}

/// Breadth-first search over the providers `component` requires, nearest
/// first and by id within a level. Returns the first unhealthy provider, or
/// `component` itself when every provider is healthy.
pub fn deep_analysis(arch: &Architecture, component: &str) -> String {
    let mut visited = BTreeSet::from([component.to_string()]);
    let mut frontier = BTreeSet::from([component.to_string()]);
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        for c in &frontier {
            for k in arch.outgoing(c) {
                if visited.insert(k.target.clone()) {
                    next.insert(k.target.clone());
                }
            }
        }
        if let Some(p) = next.iter().find(|p| !arch.is_healthy(p)) {
            return p.clone();
        }
        frontier = next;
    }
    component.to_string()
}

// ---------------------------------------------------------------------------
// Plan / Execute
// ---------------------------------------------------------------------------

/// Disconnected connectors around `c` that can come back once `c` is up.
fn reconnectable(arch: &Architecture, c: &str) -> Vec<HealingAction> {
    arch.adjacent_connectors(c)
        .filter(|k| !k.connected)
        .filter(|k| {
            let other = if k.source == c { &k.target } else { &k.source };
            other == c || arch.is_present(other)
        })
        .map(|k| HealingAction::Reconnect(k.id.clone()))
        .collect()
}

fn revive(arch: &Architecture, c: &str) -> Vec<HealingAction> {
    let mut out = vec![if arch.is_present(c) {
        HealingAction::Restart(c.to_string())
    } else {
        HealingAction::Recreate(c.to_string())
    }];
    out.extend(reconnectable(arch, c));
    out
}

fn actions_for(arch: &Architecture, d: &FailureDiagnosis) -> Vec<HealingAction> {
    let mut out = Vec::new();
    if d.root_target != d.target {
        out.extend(revive(arch, &d.root_target));
    }
    match d.kind {
        FailureKind::CF1 => out.push(HealingAction::Restart(d.target.clone())),
        FailureKind::CF2 => {
            out.push(HealingAction::Restart(d.target.clone()));
            out.extend(reconnectable(arch, &d.target));
        }
        FailureKind::CF3 => {
            out.push(HealingAction::Recreate(d.target.clone()));
            out.extend(reconnectable(arch, &d.target));
        }
        FailureKind::CF4 => out.push(HealingAction::Reconnect(d.target.clone())),
    }
    out
}

/// Maps diagnoses to healing actions:
///
/// | kind | actions |
/// |------|---------|
/// | CF1  | restart |
/// | CF2  | restart, reconnect its broken connectors |
/// | CF3  | recreate, reconnect its dangling connectors |
/// | CF4  | reconnect |
///
/// A retargeted diagnosis first revives its root. Duplicates keep their
/// first position.
pub fn plan(diagnoses: &[FailureDiagnosis], arch: &Architecture) -> HealingPlan {
    let per_diagnosis: Vec<Vec<HealingAction>> = diagnoses.iter().map(|d| actions_for(arch, d)).collect();
    let mut seen = BTreeSet::new();
    let actions = per_diagnosis
        .iter()
        .flatten()
        .filter(|a| seen.insert((*a).clone()))
        .cloned()
        .collect();
    HealingPlan {
        actions,
        provoking: diagnoses.to_vec(),
        per_diagnosis,
    }
}

/// Model elements whose monitors must restart after `action`.
fn touched_by(arch: &Architecture, action: &HealingAction) -> Vec<String> {
    match action {
        HealingAction::Restart(c) | HealingAction::Recreate(c) => std::iter::once(c.clone())
            .chain(arch.adjacent_connectors(c).map(|k| k.id.clone()))
            .collect(),
        HealingAction::Reconnect(k) => vec![k.clone()],
    }
}

/// Applies the plan through the model's event funnel and resets every
/// monitor whose target an action touched. On failure the remaining actions
/// are skipped; applied ones stay applied and their monitors are reset.
pub fn execute(plan: &HealingPlan, arch: &mut Architecture, detector: &mut dyn Detector, loop_index: u64) -> Result<(), MapeError> {
    let mut touched = BTreeSet::new();
    let mut result = Ok(());
    for (applied, action) in plan.actions.iter().enumerate() {
        let change = match action {
            HealingAction::Restart(c) => Change::SetState {
                component: c.clone(),
                to: ComponentState::Started,
            },
            HealingAction::Recreate(c) => Change::RestoreComponent { component: c.clone() },
            HealingAction::Reconnect(k) => Change::Reconnect { connector: k.clone() },
        };
        if let Err(source) = arch.apply(loop_index, change) {
            result = Err(MapeError::Execute {
                action: action.clone(),
                applied,
                source,
            });
            break;
        }
        touched.extend(touched_by(arch, action));
    }
    detector.reset(&touched);
    result
}

// ---------------------------------------------------------------------------
// Detectors
// ---------------------------------------------------------------------------

pub trait Detector: Send {
    /// Monitor and Analyze phases for one loop.
    fn detect(&mut self, arch: &mut Architecture, loop_index: u64) -> Result<Vec<FailureDiagnosis>, MapeError>;

    /// Returns the conditions watching any of `targets` to their initial state.
    fn reset(&mut self, targets: &BTreeSet<String>);

    fn instances(&self) -> Option<&[MonitorInstance]> {
        None
    }
}

pub struct RvDetector {
    instances: Vec<MonitorInstance>,
}

impl RvDetector {
    pub fn new(arch: &Architecture) -> Result<Self, MapeError> {
        Ok(Self {
            instances: instantiate_monitors(arch)?,
        })
    }
}

impl Detector for RvDetector {
    fn detect(&mut self, arch: &mut Architecture, loop_index: u64) -> Result<Vec<FailureDiagnosis>, MapeError> {
        let letters = monitor_phase(arch, &mut self.instances)?;
        analyze(&mut self.instances, &letters, arch, loop_index)
    }

    fn reset(&mut self, targets: &BTreeSet<String>) {
        for inst in self.instances.iter_mut().filter(|i| targets.contains(&i.target)) {
            inst.reset();
        }
    }

    fn instances(&self) -> Option<&[MonitorInstance]> {
        Some(&self.instances)
    }
}

/// The same four conditions evaluated directly on the model, each latched
/// once violated until reset.
pub struct BaselineDetector {
    probes: Vec<(TemplateId, String, bool)>,
}

impl BaselineDetector {
    pub fn new(arch: &Architecture) -> Self {
        let mut probes = Vec::new();
        for template in TemplateId::ALL {
            match template.target_kind() {
                TargetKind::Component => probes.extend(arch.components().map(|c| (template, c.id.clone(), false))),
                TargetKind::Connector => probes.extend(arch.connectors().map(|k| (template, k.id.clone(), false))),
            }
        }
        Self { probes }
    }
}

fn condition_holds(arch: &Architecture, template: TemplateId, target: &str) -> bool {
    let started = |id: &str| arch.component(id).is_some_and(|c| c.state == ComponentState::Started);
    match template {
        TemplateId::Phi1 => arch.component(target).is_some_and(|c| c.state != ComponentState::Unknown),
        TemplateId::Phi2 => {
            started(target) && arch.component(target).is_some_and(|c| c.exception_count <= arch.exception_threshold())
        }
        TemplateId::Phi3 => arch.is_present(target),
        TemplateId::Phi4 => arch
            .connector(target)
            .is_some_and(|k| k.connected && started(&k.source) && started(&k.target)),
    }
}

impl Detector for BaselineDetector {
    fn detect(&mut self, arch: &mut Architecture, loop_index: u64) -> Result<Vec<FailureDiagnosis>, MapeError> {
        let mut violations = Vec::new();
        for (template, target, latched) in self.probes.iter_mut() {
            if *latched || is_dormant(arch, *template, target) {
                continue;
            }
            if !condition_holds(arch, *template, target) {
                *latched = true;
                violations.push(Violation {
                    template: *template,
                    target: target.clone(),
                    letter: arch.valuation(*template, target)?,
                });
            }
        }
        classify(violations, arch, loop_index)
    }

    fn reset(&mut self, targets: &BTreeSet<String>) {
        for (_, target, latched) in self.probes.iter_mut() {
            if targets.contains(target) {
                *latched = false;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Loop driver
// ---------------------------------------------------------------------------

/// Everything one loop tick produced.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub loop_index: u64,
    pub injections: Vec<InjectionSpec>,
    pub diagnoses: Vec<FailureDiagnosis>,
    pub plan: HealingPlan,
    /// Per diagnosis: microseconds from its injection (or from the start of
    /// the Monitor phase when no injection matches) to its emission.
    pub detect_us: Vec<u64>,
    /// Plan + Execute, microseconds.
    pub heal_us: u64,
    pub utility_before: f64,
    pub utility: f64,
}

pub struct Controller {
    arch: Architecture,
    detector: Box<dyn Detector>,
    schedule: Vec<InjectionSpec>,
    last_loop: Option<u64>,
}

impl Controller {
    pub fn new(arch: Architecture, mode: Mode, schedule: Vec<InjectionSpec>) -> Result<Self, MapeError> {
        let detector: Box<dyn Detector> = match mode {
            Mode::Rv => Box::new(RvDetector::new(&arch)?),
            Mode::Baseline => Box::new(BaselineDetector::new(&arch)),
        };
        Ok(Self {
            arch,
            detector,
            schedule,
            last_loop: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Direct access for external event hooks between ticks.
    pub fn architecture_mut(&mut self) -> &mut Architecture {
        &mut self.arch
    }

    pub fn instances(&self) -> Option<&[MonitorInstance]> {
        self.detector.instances()
    }

    /// Injections due this loop, then Monitor, Analyze, Plan, Execute.
    pub fn run_iteration(&mut self, loop_index: u64) -> Result<RunRecord, MapeError> {
        if let Some(last) = self.last_loop {
            if loop_index <= last {
                return Err(MapeError::LoopOrder { last, got: loop_index });
            }
        }
        self.last_loop = Some(loop_index);

        let utility_before = self.arch.utility();
        let mut injected = Vec::new();
        for spec in due_injections(&self.schedule, loop_index) {
            injected.push(inject(&mut self.arch, &spec)?);
        }

        let monitor_start = Instant::now();
        let diagnoses = self.detector.detect(&mut self.arch, loop_index)?;
        let detected = Instant::now();
        let detect_us = diagnoses
            .iter()
            .map(|d| {
                let from = injected
                    .iter()
                    .find(|r| r.spec.kind == d.kind && r.spec.target == d.target)
                    .map_or(monitor_start, |r| r.at);
                detected.duration_since(from).as_micros() as u64
            })
            .collect();

        let heal_start = Instant::now();
        let plan = plan(&diagnoses, &self.arch);
        execute(&plan, &mut self.arch, self.detector.as_mut(), loop_index)?;
        let heal_us = heal_start.elapsed().as_micros() as u64;

        Ok(RunRecord {
            loop_index,
            injections: injected.into_iter().map(|r| r.spec).collect(),
            diagnoses,
            plan,
            detect_us,
            heal_us,
            utility_before,
            utility: self.arch.utility(),
        })
    }
}
