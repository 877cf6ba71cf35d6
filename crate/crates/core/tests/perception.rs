mod common;

use groundplan::pddl::{Atom, GroundAction, Literal};
use groundplan::perception::{Answer, Perception, PerceptionConfig, PerceptionError, Templates};
use groundplan::planner::{apply, Planner};
use groundplan::world::WorldState;

const N: usize = 10_000;

/// Half-width of the 99.7% normal interval for a binomial proportion.
fn ci(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

fn inview(o: &str) -> Literal {
    Literal::pos(Atom::new("inview", ["agent-n-01", o]))
}

fn boil_water() -> (Planner, WorldState, Vec<GroundAction>) {
    let (d, p) = common::load(0);
    let plan = common::initial_plan(&d, &p);
    (Planner::new(&d, &p), WorldState::from_problem(&p), plan)
}

#[test]
fn skip_frequency_matches_rate() {
    let (_, world, _) = boil_water();
    let q = Templates::default()
        .render(&inview("cabinet-n-01"))
        .unwrap();
    for rate in [0.1, 0.35] {
        let cfg = PerceptionConfig {
            skip_rate: rate,
            ..PerceptionConfig::default()
        };
        let mut p = Perception::new(cfg, 11);
        let skips = (0..N)
            .filter(|_| p.answer(&world, &q).unwrap() == Answer::Skip)
            .count();
        let f = skips as f64 / N as f64;
        assert!((f - rate).abs() <= ci(rate, N), "skip {f} vs {rate}");
    }
}

#[test]
fn flip_frequency_matches_rate() {
    let (_, world, _) = boil_water();
    // Not in view initially, so a truthful answer is No.
    let q = Templates::default()
        .render(&inview("cabinet-n-01"))
        .unwrap();
    let rate = 0.2;
    let cfg = PerceptionConfig {
        flip_rate: rate,
        ..PerceptionConfig::default()
    };
    let mut p = Perception::new(cfg, 5);
    let yes = (0..N)
        .filter(|_| p.answer(&world, &q).unwrap() == Answer::Yes)
        .count();
    let f = yes as f64 / N as f64;
    assert!((f - rate).abs() <= ci(rate, N), "flip {f} vs {rate}");
}

#[test]
fn extreme_rates() {
    let (_, world, _) = boil_water();
    let q = Templates::default()
        .render(&inview("cabinet-n-01"))
        .unwrap();
    let mut always_skip = Perception::new(
        PerceptionConfig {
            skip_rate: 1.0,
            ..PerceptionConfig::default()
        },
        1,
    );
    let mut perfect = Perception::new(PerceptionConfig::default(), 1);
    for _ in 0..100 {
        assert_eq!(always_skip.answer(&world, &q).unwrap(), Answer::Skip);
        assert_eq!(perfect.answer(&world, &q).unwrap(), Answer::No);
    }
}

#[test]
fn non_vision_questions_are_rejected() {
    let (_, world, _) = boil_water();
    let lit = Literal::pos(Atom::new("handempty", ["agent-n-01"]));
    let q = groundplan::perception::Query {
        expected: lit.clone(),
        asked: lit,
        text: "?".into(),
    };
    let mut p = Perception::new(PerceptionConfig::default(), 1);
    assert!(matches!(
        p.answer(&world, &q),
        Err(PerceptionError::NotVisionClass { .. })
    ));
    assert_eq!(p.rejected(), 1);
}

#[test]
fn gating_skips_objects_out_of_view() {
    let (_, world, _) = boil_water();
    let closed = Literal::pos(Atom::new("closed", ["cabinet-n-01"]));
    let q = Templates::default().render(&closed).unwrap();
    let cfg = PerceptionConfig {
        gate_on_inview: true,
        ..PerceptionConfig::default()
    };
    let mut p = Perception::new(cfg, 1).with_agent("agent-n-01");
    assert_eq!(p.answer(&world, &q).unwrap(), Answer::Skip);
    let mut plain = Perception::new(PerceptionConfig::default(), 1).with_agent("agent-n-01");
    assert_eq!(plain.answer(&world, &q).unwrap(), Answer::Yes);
}

#[test]
fn success_and_affordance_for_graspin() {
    let (planner, mut world, plan) = boil_water();
    let u = planner.universe();
    // find cabinet, open it, find mug: graspin is next.
    for step in &plan[..3] {
        world = WorldState::new(apply(&world.truth, step, u).unwrap());
    }
    let graspin = &plan[3];
    assert_eq!(graspin.schema, "graspin");
    let mut p = Perception::new(PerceptionConfig::default(), 1);
    assert_eq!(p.answer_affordance(&world, graspin), Answer::Yes);

    let after = WorldState::new(apply(&world.truth, graspin, u).unwrap());
    assert_eq!(p.answer_success(&world, &after, graspin, u), Answer::Yes);
    // A grasp that left the world unchanged did not succeed.
    assert_eq!(p.answer_success(&world, &world, graspin, u), Answer::No);

    // Mug out of view: the grasp is not afforded.
    let mut hidden = world.clone();
    hidden.truth.remove(&inview("mug-n-04").atom);
    assert_eq!(p.answer_affordance(&hidden, graspin), Answer::No);
}
