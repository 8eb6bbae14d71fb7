use proptest::prelude::*;
use rvheal_core::arch::{default_architecture, Architecture, Change, ComponentState};
use rvheal_core::inject::{inject, random_schedule, FailureKind, InjectionSpec};
use rvheal_core::mape::{Controller, Mode};
use rvheal_core::templates::TemplateId;

fn component_ids() -> Vec<String> {
    default_architecture().components().map(|c| c.id.clone()).collect()
}

fn connector_ids() -> Vec<String> {
    default_architecture().connectors().map(|k| k.id.clone()).collect()
}

fn change() -> impl Strategy<Value = Change> {
    let c = prop::sample::select(component_ids());
    let k = prop::sample::select(connector_ids());
    let state = prop::sample::select(vec![ComponentState::Started, ComponentState::Unknown]);
    prop_oneof![
        (c.clone(), state).prop_map(|(component, to)| Change::SetState { component, to }),
        c.clone().prop_map(|component| Change::RaiseException { component }),
        c.clone().prop_map(|component| Change::RemoveComponent { component }),
        c.prop_map(|component| Change::RestoreComponent { component }),
        k.clone().prop_map(|connector| Change::BreakConnector { connector }),
        k.prop_map(|connector| Change::Reconnect { connector }),
    ]
}

fn injection() -> impl Strategy<Value = InjectionSpec> {
    let component = (
        prop::sample::select(vec![FailureKind::CF1, FailureKind::CF2, FailureKind::CF3]),
        prop::sample::select(component_ids()),
    );
    let connector = prop::sample::select(connector_ids()).prop_map(|k| (FailureKind::CF4, k));
    prop_oneof![component, connector].prop_map(|(kind, target)| InjectionSpec {
        loop_index: 1,
        kind,
        target,
    })
}

/// Applies the changes the model accepts; rejected ones leave no trace.
fn apply_all(arch: &mut Architecture, changes: &[Change]) {
    for (i, ch) in changes.iter().enumerate() {
        let before = arch.clone();
        if arch.apply(i as u64, ch.clone()).is_err() {
            assert!(arch.same_state(&before));
            assert_eq!(arch.events().len(), before.events().len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn replay_reconstructs_state(changes in prop::collection::vec(change(), 0..40)) {
        let mut arch = default_architecture();
        apply_all(&mut arch, &changes);
        let mut fresh = default_architecture();
        fresh.replay(arch.events()).unwrap();
        prop_assert!(fresh.same_state(&arch));
        prop_assert_eq!(fresh.events_jsonl(), arch.events_jsonl());
    }

    #[test]
    fn event_sequence_numbers_are_dense(changes in prop::collection::vec(change(), 0..40)) {
        let mut arch = default_architecture();
        apply_all(&mut arch, &changes);
        for (i, e) in arch.events().iter().enumerate() {
            prop_assert_eq!(e.seq, i as u64 + 1);
        }
    }

    #[test]
    fn utility_is_bounded(changes in prop::collection::vec(change(), 0..40)) {
        let mut arch = default_architecture();
        apply_all(&mut arch, &changes);
        let u = arch.utility();
        prop_assert!(u >= 0.0 && u <= arch.max_utility());
        let healthy: f64 = arch.components().filter(|c| arch.is_healthy(&c.id)).map(|c| c.criticality).sum();
        prop_assert_eq!(u, healthy);
    }

    #[test]
    fn valuations_only_mention_grounded_atoms(changes in prop::collection::vec(change(), 0..20)) {
        let mut arch = default_architecture();
        apply_all(&mut arch, &changes);
        for c in component_ids() {
            for t in [TemplateId::Phi1, TemplateId::Phi2, TemplateId::Phi3] {
                if t != TemplateId::Phi3 && !arch.is_present(&c) {
                    prop_assert!(arch.valuation(t, &c).is_err());
                    continue;
                }
                let atoms: Vec<String> = t.ground(&arch, &c).unwrap().atoms().iter().map(|p| p.to_string()).collect();
                for a in arch.valuation(t, &c).unwrap().iter() {
                    prop_assert!(atoms.iter().any(|x| x == a));
                }
            }
        }
    }

    #[test]
    fn inject_then_heal_restores_the_model(spec in injection(), mode in prop::sample::select(vec![Mode::Rv, Mode::Baseline])) {
        let arch = default_architecture();
        let before = arch.utility();
        let mut ctl = Controller::new(arch, mode, vec![spec.clone()]).unwrap();
        ctl.run_iteration(0).unwrap();
        let rec = ctl.run_iteration(1).unwrap();
        prop_assert_eq!(rec.diagnoses.len(), 1);
        prop_assert_eq!(rec.diagnoses[0].kind, spec.kind);
        prop_assert_eq!(&rec.diagnoses[0].target, &spec.target);
        prop_assert_eq!(rec.utility, before);
        let a = ctl.architecture();
        prop_assert!(a.components().all(|c| a.is_healthy(&c.id)));
        prop_assert!(a.connectors().all(|k| k.connected));
        let quiet = ctl.run_iteration(2).unwrap();
        prop_assert!(quiet.diagnoses.is_empty());
    }

    #[test]
    fn injection_is_detectable(spec in injection()) {
        let mut arch = default_architecture();
        inject(&mut arch, &spec).unwrap();
        let template = match spec.kind {
            FailureKind::CF1 => TemplateId::Phi1,
            FailureKind::CF2 => TemplateId::Phi2,
            FailureKind::CF3 => TemplateId::Phi3,
            FailureKind::CF4 => TemplateId::Phi4,
        };
        let formula = template.ground(&arch, &spec.target).unwrap();
        let monitor = rvheal_core::monitor::build_monitor(&formula).unwrap();
        let letter = arch.valuation(template, &spec.target).unwrap();
        prop_assert_eq!(monitor.run(&[letter]).unwrap(), rvheal_core::ltl::Verdict::Bottom);
    }

    #[test]
    fn random_schedules_are_deterministic_and_well_formed(seed in any::<u64>(), count in 0usize..8, max_loop in 1u64..30) {
        let arch = default_architecture();
        let a = random_schedule(seed, &arch, count, max_loop);
        let b = random_schedule(seed, &arch, count, max_loop);
        prop_assert_eq!(&a, &b);
        if let Ok(s) = a {
            prop_assert_eq!(s.len(), count);
            prop_assert!(s.windows(2).all(|w| w[0].loop_index <= w[1].loop_index));
            for (i, x) in s.iter().enumerate() {
                prop_assert!(x.loop_index < max_loop);
                prop_assert_eq!(x.kind.targets_connector(), arch.connector(&x.target).is_some());
                for y in &s[i + 1..] {
                    prop_assert!(!(x.loop_index == y.loop_index && x.target == y.target));
                }
            }
        }
    }
}
