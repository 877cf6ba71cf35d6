use groundplan::pddl::{parse_domain, parse_problem, Domain, PddlError, Problem};
use groundplan::tasks::{bundled_domain, BUNDLED_TASKS, OMNIGIBSON_DOMAIN};
use proptest::prelude::*;

#[test]
fn bundled_domain_shape() {
    let d = bundled_domain();
    assert_eq!(d.actions.len(), 13);
    assert_eq!(d.predicates.len(), 17);
    let names: Vec<&str> = d.actions.iter().map(|a| a.name.as_str()).collect();
    for a in [
        "find",
        "openit",
        "closeit",
        "graspon",
        "graspin",
        "placein",
        "placeon",
        "place_on_floor",
        "fillsink",
        "fill",
        "microwave_water",
        "heat_food_with_oven",
        "cut_into_half",
    ] {
        assert!(names.contains(&a), "missing action {a}");
    }
}

#[test]
fn bundled_domain_and_problems_round_trip() {
    let d = bundled_domain();
    assert_eq!(parse_domain(&d.to_string()).unwrap(), d);
    for t in BUNDLED_TASKS {
        let (_, p) = t.load().unwrap();
        assert_eq!(parse_problem(&p.to_string(), &d).unwrap(), p, "{}", t.name);
    }
}

#[test]
fn errors_name_the_offender() {
    let broken = OMNIGIBSON_DOMAIN.replacen("(:action find", "(:action find (", 1);
    assert!(matches!(
        parse_domain(&broken),
        Err(PddlError::Syntax { .. })
    ));

    let d = bundled_domain();
    let bad = BUNDLED_TASKS[0]
        .problem
        .replacen("(:init", "(:init (nosuchpred kitchen)", 1);
    match parse_problem(&bad, &d) {
        Err(PddlError::UnknownPredicate { name, .. }) => assert_eq!(name, "nosuchpred"),
        other => panic!("expected unknown predicate, got {other:?}"),
    }
}

fn sub_domain(keep: &[bool]) -> Domain {
    let mut d = bundled_domain();
    let mut i = 0;
    d.actions.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    d
}

fn sub_problem(task: usize, init_keep: &[bool], goal_keep: &[bool]) -> Problem {
    let (_, mut p) = BUNDLED_TASKS[task].load().unwrap();
    let mut i = 0;
    p.init.retain(|_| {
        i += 1;
        init_keep[(i - 1) % init_keep.len()]
    });
    let mut j = 0;
    p.goal.retain(|_| {
        j += 1;
        goal_keep[(j - 1) % goal_keep.len()]
    });
    p
}

proptest! {
    #[test]
    fn printed_domains_reparse_identically(keep in prop::collection::vec(any::<bool>(), 13)) {
        let d = sub_domain(&keep);
        prop_assert_eq!(parse_domain(&d.to_string()).unwrap(), d);
    }

    #[test]
    fn printed_problems_reparse_identically(
        task in 0usize..5,
        init_keep in prop::collection::vec(any::<bool>(), 1..40),
        goal_keep in prop::collection::vec(any::<bool>(), 1..4),
    ) {
        let d = bundled_domain();
        let p = sub_problem(task, &init_keep, &goal_keep);
        prop_assert_eq!(parse_problem(&p.to_string(), &d).unwrap(), p);
    }
}
