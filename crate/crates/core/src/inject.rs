//! Fault injection for the four failure classes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Architecture, Change, ComponentState, ModelError};

/// Generator behind [`random_schedule`], recorded in run headers.
pub const PRNG_NAME: &str = "ChaCha8Rng(rand_chacha-0.3,seed_from_u64)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    /// Component in unknown state.
    CF1,
    /// Exception count above threshold.
    CF2,
    /// Component removed from the architecture.
    CF3,
    /// Connector broken.
    CF4,
}

impl FailureKind {
    pub const ALL: [FailureKind; 4] = [FailureKind::CF1, FailureKind::CF2, FailureKind::CF3, FailureKind::CF4];

    pub fn targets_connector(self) -> bool {
        self == FailureKind::CF4
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for FailureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CF1" => Ok(FailureKind::CF1),
            "CF2" => Ok(FailureKind::CF2),
            "CF3" => Ok(FailureKind::CF3),
            "CF4" => Ok(FailureKind::CF4),
            other => Err(format!("unknown failure kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionSpec {
    #[serde(rename = "loop")]
    pub loop_index: u64,
    pub kind: FailureKind,
    pub target: String,
}

#[derive(Debug, Clone)]
pub struct InjectionReport {
    pub spec: InjectionSpec,
    pub emitted_events: Vec<u64>,
    pub at: Instant,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InjectionError {
    #[error("injection target `{0}` does not exist")]
    TargetMissing(String),
    #[error("{kind} expects a {expected} target, `{target}` is not one")]
    WrongTargetKind {
        kind: FailureKind,
        target: String,
        expected: &'static str,
    },
    #[error("`{target}` is already in the {kind} failure mode")]
    AlreadyFailed { kind: FailureKind, target: String },
    #[error("{requested} injections do not fit into {slots} (loop, target) slots")]
    TooManyInjections { requested: usize, slots: usize },
    #[error("could not place {requested} non-overlapping injections")]
    ScheduleExhausted { requested: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Breaks the model according to `spec`, routing every change through
/// [`Architecture::apply`].
pub fn inject(arch: &mut Architecture, spec: &InjectionSpec) -> Result<InjectionReport, InjectionError> {
    let already = || InjectionError::AlreadyFailed {
        kind: spec.kind,
        target: spec.target.clone(),
    };
    let target = spec.target.clone();
    if spec.kind.targets_connector() {
        if arch.known_component(&target).is_some() {
            return Err(InjectionError::WrongTargetKind {
                kind: spec.kind,
                target,
                expected: "connector",
            });
        }
    } else if arch.connector(&target).is_some() {
        return Err(InjectionError::WrongTargetKind {
            kind: spec.kind,
            target,
            expected: "component",
        });
    }

    let at = Instant::now();
    let l = spec.loop_index;
    let mut emitted = Vec::new();
    match spec.kind {
        FailureKind::CF1 | FailureKind::CF2 | FailureKind::CF3 => {
            let Some(c) = arch.component(&target) else {
                return Err(if arch.is_removed(&target) {
                    already()
                } else {
                    InjectionError::TargetMissing(target)
                });
            };
            match spec.kind {
                FailureKind::CF1 => {
                    if c.state == ComponentState::Unknown {
                        return Err(already());
                    }
                    emitted.push(arch.apply(
                        l,
                        Change::SetState {
                            component: target,
                            to: ComponentState::Unknown,
                        },
                    )?);
                }
                FailureKind::CF2 => {
                    let threshold = arch.exception_threshold();
                    if c.exception_count > threshold {
                        return Err(already());
                    }
                    // Exactly enough exceptions to land one above the threshold.
                    for _ in c.exception_count..=threshold {
                        emitted.push(arch.apply(
                            l,
                            Change::RaiseException {
                                component: target.clone(),
                            },
                        )?);
                    }
                    // The failing component's provided interfaces go down with it.
                    let incoming: Vec<String> = arch.incoming(&target).filter(|k| k.connected).map(|k| k.id.clone()).collect();
                    for k in incoming {
                        emitted.push(arch.apply(l, Change::BreakConnector { connector: k })?);
                    }
                }
                _ => {
                    emitted.push(arch.apply(l, Change::RemoveComponent { component: target })?);
                }
            }
        }
        FailureKind::CF4 => {
            let k = arch
                .connector(&target)
                .ok_or_else(|| InjectionError::TargetMissing(target.clone()))?;
            if !k.connected {
                return Err(already());
            }
            emitted.push(arch.apply(l, Change::BreakConnector { connector: target })?);
        }
    }
    Ok(InjectionReport {
        spec: spec.clone(),
        emitted_events: emitted,
        at,
    })
}

/// Specs scheduled for `loop_index`, in schedule order.
pub fn due_injections(schedule: &[InjectionSpec], loop_index: u64) -> Vec<InjectionSpec> {
    schedule.iter().filter(|s| s.loop_index == loop_index).cloned().collect()
}

/// Model elements an injection may disturb.
fn footprint(arch: &Architecture, spec: &InjectionSpec) -> BTreeSet<String> {
    let mut out = BTreeSet::from([spec.target.clone()]);
    if let Some(k) = arch.connector(&spec.target) {
        out.insert(k.source.clone());
        out.insert(k.target.clone());
    } else {
        out.extend(arch.adjacent_connectors(&spec.target).map(|k| k.id.clone()));
    }
    out
}

/// Seeded schedule of `count` injections over loops `0..max_loop`.
///
/// Kinds, targets and loops are drawn from [`PRNG_NAME`]. No two specs share
/// a (loop, target) pair, and injections in the same loop never touch the
/// same component or connector, so each one stays individually observable.
/// The result is sorted by loop, then by draw order.
pub fn random_schedule(
    seed: u64,
    arch: &Architecture,
    count: usize,
    max_loop: u64,
) -> Result<Vec<InjectionSpec>, InjectionError> {
    let components: Vec<String> = arch.components().map(|c| c.id.clone()).collect();
    let connectors: Vec<String> = arch.connectors().map(|k| k.id.clone()).collect();
    let slots = (max_loop as usize).saturating_mul(components.len() + connectors.len());
    if count > slots {
        return Err(InjectionError::TooManyInjections { requested: count, slots });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<(InjectionSpec, BTreeSet<String>)> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while chosen.len() < count {
        attempts += 1;
        if attempts > 1000 + 64 * count {
            return Err(InjectionError::ScheduleExhausted { requested: count });
        }
        let kind = FailureKind::ALL[rng.gen_range(0..4)];
        let pool = if kind.targets_connector() { &connectors } else { &components };
        let Some(target) = pool.choose(&mut rng) else {
            continue;
        };
        let spec = InjectionSpec {
            loop_index: rng.gen_range(0..max_loop),
            kind,
            target: target.clone(),
        };
        let fp = footprint(arch, &spec);
        let clash = chosen
            .iter()
            .any(|(s, f)| s.loop_index == spec.loop_index && (s.target == spec.target || !f.is_disjoint(&fp)));
        if !clash {
            chosen.push((spec, fp));
        }
    }
    let mut out: Vec<InjectionSpec> = chosen.into_iter().map(|(s, _)| s).collect();
    out.sort_by_key(|s| s.loop_index);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::default_architecture;
    use crate::templates::TemplateId;

    fn spec(kind: FailureKind, target: &str) -> InjectionSpec {
        InjectionSpec {
            loop_index: 1,
            kind,
            target: target.into(),
        }
    }

    #[test]
    fn cf2_on_query_service() {
        let mut arch = default_architecture();
        let report = inject(&mut arch, &spec(FailureKind::CF2, "Query_Service")).unwrap();
        // 4 exceptions plus the bidbuy_query connector bound to its provided interface.
        assert_eq!(report.emitted_events.len(), 5);
        assert_eq!(arch.component("Query_Service").unwrap().exception_count, 4);
        assert!(!arch.connector("bidbuy_query").unwrap().connected);
        assert!(arch.connector("query_persistence").unwrap().connected);
        let letter = arch.valuation(TemplateId::Phi2, "Query_Service").unwrap();
        assert!(!letter.contains("lowException@Query_Service"));
        assert!(matches!(
            inject(&mut arch, &spec(FailureKind::CF2, "Query_Service")),
            Err(InjectionError::AlreadyFailed { .. })
        ));
    }

    #[test]
    fn cf2_tops_up_existing_exceptions() {
        let mut arch = default_architecture();
        arch.apply(0, Change::RaiseException { component: "Inventory_Service".into() }).unwrap();
        arch.apply(0, Change::RaiseException { component: "Inventory_Service".into() }).unwrap();
        let report = inject(&mut arch, &spec(FailureKind::CF2, "Inventory_Service")).unwrap();
        assert_eq!(arch.component("Inventory_Service").unwrap().exception_count, 4);
        // two exceptions + bidbuy_inventory
        assert_eq!(report.emitted_events.len(), 3);
    }

    #[test]
    fn cf1_cf3_cf4() {
        let mut arch = default_architecture();
        let r = inject(&mut arch, &spec(FailureKind::CF1, "Reputation_Service")).unwrap();
        assert_eq!(r.emitted_events.len(), 1);
        assert_eq!(arch.component("Reputation_Service").unwrap().state, ComponentState::Unknown);

        inject(&mut arch, &spec(FailureKind::CF3, "Inventory_Service")).unwrap();
        assert!(!arch.is_present("Inventory_Service"));
        assert!(matches!(
            inject(&mut arch, &spec(FailureKind::CF3, "Inventory_Service")),
            Err(InjectionError::AlreadyFailed { .. })
        ));

        inject(&mut arch, &spec(FailureKind::CF4, "auth_users")).unwrap();
        assert!(matches!(
            inject(&mut arch, &spec(FailureKind::CF4, "auth_users")),
            Err(InjectionError::AlreadyFailed { .. })
        ));
        assert!(matches!(
            inject(&mut arch, &spec(FailureKind::CF1, "Nobody")),
            Err(InjectionError::TargetMissing(_))
        ));
        assert!(matches!(
            inject(&mut arch, &spec(FailureKind::CF4, "Query_Service")),
            Err(InjectionError::WrongTargetKind { .. })
        ));
        assert!(matches!(
            inject(&mut arch, &spec(FailureKind::CF1, "auth_users")),
            Err(InjectionError::WrongTargetKind { .. })
        ));
    }

    #[test]
    fn due_injections_filters_by_loop() {
        let schedule = vec![
            InjectionSpec { loop_index: 3, kind: FailureKind::CF1, target: "a".into() },
            InjectionSpec { loop_index: 3, kind: FailureKind::CF2, target: "b".into() },
            InjectionSpec { loop_index: 7, kind: FailureKind::CF4, target: "k".into() },
        ];
        assert_eq!(due_injections(&schedule, 3), schedule[..2].to_vec());
        assert!(due_injections(&schedule, 5).is_empty());
        assert_eq!(due_injections(&schedule, 7), schedule[2..].to_vec());
    }

    #[test]
    fn random_schedule_contract() {
        let arch = default_architecture();
        let a = random_schedule(42, &arch, 4, 20).unwrap();
        assert_eq!(a, random_schedule(42, &arch, 4, 20).unwrap());
        assert_ne!(a, random_schedule(43, &arch, 4, 20).unwrap());
        assert!(random_schedule(42, &arch, 0, 20).unwrap().is_empty());
        let slots: BTreeSet<(u64, &str)> = a.iter().map(|s| (s.loop_index, s.target.as_str())).collect();
        assert_eq!(slots.len(), 4);
        assert!(a.iter().all(|s| s.loop_index < 20));
        assert!(matches!(
            random_schedule(1, &arch, 18, 1),
            Err(InjectionError::TooManyInjections { requested: 18, slots: 17 })
        ));
    }
}
