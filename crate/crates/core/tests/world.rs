mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use groundplan::planner::apply;
use groundplan::world::{
    situation_catalog, ActionFamily, ExecutionOutcome, Scenario, Simulator, SituationSpec,
    WorldState,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_family_is_exercised_by_the_bundled_plans() {
    let probes = common::probes(&Scenario::default());
    for f in ActionFamily::ALL {
        assert!(
            probes.contains_key(&f),
            "no plan step of family {}",
            f.name()
        );
    }
}

#[test]
fn zero_probability_execution_equals_apply() {
    for ti in 0..5 {
        let (d, p) = common::load(ti);
        let sim = Simulator::new(&d, &p, Scenario::deterministic());
        let mut rng = ChaCha8Rng::seed_from_u64(ti as u64);
        let mut world = WorldState::from_problem(&p);
        for step in common::initial_plan(&d, &p) {
            let expected = apply(&world.truth, &step, sim.universe()).unwrap();
            let (next, outcome) = sim.execute(&world, &step, &mut rng).unwrap();
            assert_eq!(outcome, ExecutionOutcome::CleanSuccess);
            assert_eq!(next.truth, expected);
            world = next;
        }
        assert!(groundplan::world::goal_satisfied(&world, &p.goal));
    }
}

#[test]
fn constraint_failure_leaves_world_and_stream_untouched() {
    let (d, p) = common::load(3);
    let sim = Simulator::new(&d, &p, Scenario::default());
    let world = WorldState::from_problem(&p);
    // Cutting before holding the knife violates the skill constraints.
    let cut = common::initial_plan(&d, &p).pop().unwrap();
    let mut a = ChaCha8Rng::seed_from_u64(9);
    let b = ChaCha8Rng::seed_from_u64(9);
    let (next, outcome) = sim.execute(&world, &cut, &mut a).unwrap();
    assert_eq!(next, world);
    assert!(matches!(outcome, ExecutionOutcome::ConstraintFailure(ref v) if !v.is_empty()));
    assert_eq!(a, b);
}

fn default_probes() -> &'static BTreeMap<ActionFamily, common::Probe> {
    static PROBES: OnceLock<BTreeMap<ActionFamily, common::Probe>> = OnceLock::new();
    PROBES.get_or_init(|| common::probes(&Scenario::default()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Every draw lands in exactly one outcome, and it is the one whose
    /// cumulative interval in the table contains the draw.
    #[test]
    fn outcomes_partition_the_unit_interval(family_ix in 0usize..10, draw in 0.0f64..1.0) {
        let family = ActionFamily::ALL[family_ix];
        let probe = &default_probes()[&family];
        let (_, outcome) = probe.sim.execute_with_draw(&probe.world, &probe.action, draw).unwrap();

        let table = SituationSpec::default();
        let mut lo = 0.0;
        let mut hits = Vec::new();
        for s in table.situations(family) {
            if draw >= lo && draw < lo + s.probability {
                hits.push(ExecutionOutcome::Situation(s.label.clone()));
            }
            lo += s.probability;
        }
        if draw >= lo {
            hits.push(ExecutionOutcome::CleanSuccess);
        }
        prop_assert_eq!(hits.len(), 1);
        prop_assert_eq!(&outcome, &hits[0]);
        if let ExecutionOutcome::Situation(label) = &outcome {
            prop_assert!(situation_catalog(family).iter().any(|(l, _)| l == label));
        }
    }
}
