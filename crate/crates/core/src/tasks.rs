//! Bundled domain and the five household task problems.

use crate::pddl::{parse_domain, parse_problem, Domain, PddlError, Problem};

pub const OMNIGIBSON_DOMAIN: &str = include_str!("../data/domains/omnigibson.pddl");

/// A bundled task: its short name, a human label, and its problem text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundledTask {
    pub name: &'static str,
    pub label: &'static str,
    pub problem: &'static str,
}

/// Tasks in report column order.
pub const BUNDLED_TASKS: [BundledTask; 5] = [
    BundledTask {
        name: "boil_water",
        label: "boil water in the microwave",
        problem: include_str!("../data/problems/boil_water.pddl"),
    },
    BundledTask {
        name: "bring_in_empty_bottle",
        label: "bring in empty bottle",
        problem: include_str!("../data/problems/bring_in_empty_bottle.pddl"),
    },
    BundledTask {
        name: "cook_frozen_pie",
        label: "cook a frozen pie",
        problem: include_str!("../data/problems/cook_frozen_pie.pddl"),
    },
    BundledTask {
        name: "halve_an_egg",
        label: "halve an egg",
        problem: include_str!("../data/problems/halve_an_egg.pddl"),
    },
    BundledTask {
        name: "store_firewood",
        label: "store firewood",
        problem: include_str!("../data/problems/store_firewood.pddl"),
    },
];

pub fn bundled_task(name: &str) -> Option<&'static BundledTask> {
    BUNDLED_TASKS.iter().find(|t| t.name == name)
}

pub fn bundled_domain() -> Domain {
    parse_domain(OMNIGIBSON_DOMAIN).expect("bundled domain parses")
}

impl BundledTask {
    pub fn load(&self) -> Result<(Domain, Problem), PddlError> {
        let domain = parse_domain(OMNIGIBSON_DOMAIN)?;
        let problem = parse_problem(self.problem, &domain)?;
        Ok((domain, problem))
    }
}
