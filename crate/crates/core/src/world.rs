//! Ground-truth simulator. Executes ground actions under hidden executability
//! constraints and samples failure situations from a per-family probability
//! table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pddl::{Atom, Domain, GroundAction, Literal, ObjectUniverse, Problem};
use crate::planner::{apply_effects, holds, SymbolicState};

pub const DEFAULT_SCENARIO: &str = include_str!("../data/situations.tsv");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("action `{0}` belongs to no known action family")]
    UnknownFamily(String),
    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },
}

/// The ten executable skill families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionFamily {
    Find,
    Grasp,
    PlaceIn,
    PlaceOn,
    FillSink,
    Fill,
    Open,
    Close,
    TurnOn,
    Cut,
}

impl ActionFamily {
    pub const ALL: [ActionFamily; 10] = [
        ActionFamily::Find,
        ActionFamily::Grasp,
        ActionFamily::PlaceIn,
        ActionFamily::PlaceOn,
        ActionFamily::FillSink,
        ActionFamily::Fill,
        ActionFamily::Open,
        ActionFamily::Close,
        ActionFamily::TurnOn,
        ActionFamily::Cut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionFamily::Find => "find",
            ActionFamily::Grasp => "grasp",
            ActionFamily::PlaceIn => "placein",
            ActionFamily::PlaceOn => "placeon",
            ActionFamily::FillSink => "fillsink",
            ActionFamily::Fill => "fill",
            ActionFamily::Open => "open",
            ActionFamily::Close => "close",
            ActionFamily::TurnOn => "turnon",
            ActionFamily::Cut => "cut",
        }
    }
}

impl fmt::Display for ActionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown action family `{s}`"))
    }
}

/// Which schema parameter plays which part in the simulator's rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRoles {
    pub family: ActionFamily,
    pub agent: usize,
    /// The object acted upon: found, grasped, placed, opened, cut, switched on.
    pub target: usize,
    /// Where the target comes from or goes: source of a grasp, receptacle of a
    /// place, sink of a fill, contents of an appliance.
    pub support: Option<usize>,
    pub tool: Option<usize>,
    pub liquid: Option<usize>,
    pub room: Option<usize>,
}

impl ActionRoles {
    const fn new(family: ActionFamily, target: usize) -> Self {
        ActionRoles {
            family,
            agent: 0,
            target,
            support: None,
            tool: None,
            liquid: None,
            room: None,
        }
    }
}

/// Mapping from schema names to families and roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyMap(BTreeMap<String, ActionRoles>);

impl Default for FamilyMap {
    /// Mapping for the bundled household domain.
    fn default() -> Self {
        use ActionFamily::*;
        let mut m = BTreeMap::new();
        let mut put = |name: &str, roles: ActionRoles| {
            m.insert(name.to_string(), roles);
        };
        put(
            "find",
            ActionRoles {
                room: Some(2),
                ..ActionRoles::new(Find, 1)
            },
        );
        put(
            "graspon",
            ActionRoles {
                support: Some(2),
                ..ActionRoles::new(Grasp, 1)
            },
        );
        put(
            "graspin",
            ActionRoles {
                support: Some(2),
                ..ActionRoles::new(Grasp, 1)
            },
        );
        put(
            "placein",
            ActionRoles {
                support: Some(2),
                ..ActionRoles::new(PlaceIn, 1)
            },
        );
        put(
            "placeon",
            ActionRoles {
                support: Some(2),
                ..ActionRoles::new(PlaceOn, 1)
            },
        );
        put(
            "place_on_floor",
            ActionRoles {
                support: Some(2),
                ..ActionRoles::new(PlaceOn, 1)
            },
        );
        put(
            "fillsink",
            ActionRoles {
                liquid: Some(2),
                ..ActionRoles::new(FillSink, 1)
            },
        );
        put(
            "fill",
            ActionRoles {
                support: Some(2),
                liquid: Some(3),
                ..ActionRoles::new(Fill, 1)
            },
        );
        put(
            "openit",
            ActionRoles {
                room: Some(2),
                ..ActionRoles::new(Open, 1)
            },
        );
        put(
            "closeit",
            ActionRoles {
                room: Some(2),
                ..ActionRoles::new(Close, 1)
            },
        );
        put(
            "microwave_water",
            ActionRoles {
                support: Some(2),
                liquid: Some(3),
                ..ActionRoles::new(TurnOn, 1)
            },
        );
        put(
            "heat_food_with_oven",
            ActionRoles {
                support: Some(2),
                ..ActionRoles::new(TurnOn, 1)
            },
        );
        put(
            "cut_into_half",
            ActionRoles {
                tool: Some(1),
                ..ActionRoles::new(Cut, 2)
            },
        );
        FamilyMap(m)
    }
}

impl FamilyMap {
    pub fn roles(&self, schema: &str) -> Option<&ActionRoles> {
        self.0.get(schema)
    }

    pub fn insert(&mut self, schema: impl Into<String>, roles: ActionRoles) {
        self.0.insert(schema.into(), roles);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ActionRoles)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// A simulator-side executability check. Never shown to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constraint {
    SameRoom,
    TargetInView,
    HandEmpty,
    ObjectInHand,
    ReceptacleInView,
    ReceptacleNotClosed,
    NearSink,
    ContainerEmpty,
    KnifeInHand,
    ObjectAtSupport,
    SinkHasSource,
    SinkFilled,
    ContentsReady,
}

impl Constraint {
    pub fn label(self) -> &'static str {
        match self {
            Constraint::SameRoom => "same-room",
            Constraint::TargetInView => "target-inview",
            Constraint::HandEmpty => "hand-empty",
            Constraint::ObjectInHand => "object-inhand",
            Constraint::ReceptacleInView => "receptacle-inview",
            Constraint::ReceptacleNotClosed => "receptacle-not-closed",
            Constraint::NearSink => "near-sink",
            Constraint::ContainerEmpty => "container-empty",
            Constraint::KnifeInHand => "knife-inhand",
            Constraint::ObjectAtSupport => "object-at-support",
            Constraint::SinkHasSource => "sink-has-source",
            Constraint::SinkFilled => "sink-filled",
            Constraint::ContentsReady => "contents-ready",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSpec(BTreeMap<ActionFamily, Vec<Constraint>>);

impl ConstraintSpec {
    /// Exactly the checks listed per skill in the constraints table.
    pub fn skill_table() -> Self {
        use ActionFamily::*;
        use Constraint::*;
        ConstraintSpec(BTreeMap::from([
            (Find, vec![SameRoom]),
            (Grasp, vec![TargetInView, HandEmpty]),
            (
                PlaceIn,
                vec![ObjectInHand, ReceptacleInView, ReceptacleNotClosed],
            ),
            (PlaceOn, vec![ObjectInHand, ReceptacleInView]),
            (FillSink, vec![TargetInView]),
            (Fill, vec![ObjectInHand, NearSink, ContainerEmpty]),
            (Open, vec![TargetInView]),
            (Close, vec![TargetInView]),
            (TurnOn, vec![TargetInView]),
            (Cut, vec![TargetInView, KnifeInHand]),
        ]))
    }

    pub fn checks(&self, family: ActionFamily) -> &[Constraint] {
        self.0.get(&family).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn push(&mut self, family: ActionFamily, check: Constraint) {
        let list = self.0.entry(family).or_default();
        if !list.contains(&check) {
            list.push(check);
        }
    }
}

impl Default for ConstraintSpec {
    /// The skill table plus the object-location checks a physical simulator
    /// enforces implicitly: you cannot grasp an object from a place it is not
    /// at, fill from a dry sink or heat an empty appliance.
    fn default() -> Self {
        let mut spec = Self::skill_table();
        spec.push(ActionFamily::Grasp, Constraint::ObjectAtSupport);
        spec.push(ActionFamily::FillSink, Constraint::SinkHasSource);
        spec.push(ActionFamily::Fill, Constraint::SinkFilled);
        spec.push(ActionFamily::TurnOn, Constraint::ContentsReady);
        spec
    }
}

/// How a situation changes the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    /// The action has no effect.
    Unchanged,
    /// Nominal effects, but the target does not end up in view.
    NominalWithoutView,
    /// Nominal effects, and whatever the agent holds drops nearby.
    NominalDropHeld,
    /// The grasp fails and the target falls next to its support.
    DropTarget,
    /// The held target falls nearby instead of being placed or filled.
    DropHeld,
    /// The held tool falls nearby.
    DropTool,
}

/// Known situation labels per family with their world mutation.
pub fn situation_catalog(family: ActionFamily) -> &'static [(&'static str, Mutation)] {
    use Mutation::*;
    match family {
        ActionFamily::Find => &[
            ("not-inview", NominalWithoutView),
            ("no-free-space", Unchanged),
            ("drop-held", NominalDropHeld),
        ],
        ActionFamily::Grasp => &[("fail-unchanged", Unchanged), ("fail-drop", DropTarget)],
        ActionFamily::PlaceIn | ActionFamily::PlaceOn => {
            &[("fail-in-hand", Unchanged), ("fail-drop", DropHeld)]
        }
        ActionFamily::FillSink => &[("faucet-fail", Unchanged)],
        ActionFamily::Fill => &[
            ("not-fully-filled", Unchanged),
            ("container-drop", DropHeld),
        ],
        ActionFamily::Open => &[("remains-closed", Unchanged)],
        ActionFamily::Close => &[("remains-open", Unchanged)],
        ActionFamily::TurnOn => &[("remains-off", Unchanged)],
        ActionFamily::Cut => &[
            ("fail-knife-in-hand", Unchanged),
            ("fail-knife-drop", DropTool),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Situation {
    pub label: String,
    pub probability: f64,
    pub mutation: Mutation,
}

/// Situation probabilities per family; the residual mass is clean success.
#[derive(Debug, Clone, PartialEq)]
pub struct SituationSpec(BTreeMap<ActionFamily, Vec<Situation>>);

impl Default for SituationSpec {
    fn default() -> Self {
        SituationSpec::parse(DEFAULT_SCENARIO).expect("bundled scenario parses")
    }
}

impl SituationSpec {
    /// Every situation at probability zero.
    pub fn deterministic() -> Self {
        SituationSpec(
            ActionFamily::ALL
                .into_iter()
                .map(|f| {
                    let list = situation_catalog(f)
                        .iter()
                        .map(|(label, mutation)| Situation {
                            label: label.to_string(),
                            probability: 0.0,
                            mutation: *mutation,
                        })
                        .collect();
                    (f, list)
                })
                .collect(),
        )
    }

    /// Parses `family label probability` rows. `#` starts a comment and
    /// `N/A` reads as probability 0. Families or labels not mentioned keep
    /// probability 0.
    pub fn parse(text: &str) -> Result<Self, WorldError> {
        let mut spec = SituationSpec::deterministic();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| WorldError::Scenario {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [family, label, prob] = fields[..] else {
                return Err(err(format!(
                    "expected `family label probability`, got `{line}`"
                )));
            };
            let family: ActionFamily = family.parse().map_err(err)?;
            let probability = if prob.eq_ignore_ascii_case("n/a") {
                0.0
            } else {
                prob.parse::<f64>()
                    .map_err(|e| err(format!("bad probability `{prob}`: {e}")))?
            };
            if !(0.0..=1.0).contains(&probability) {
                return Err(err(format!("probability {probability} outside [0, 1]")));
            }
            spec.set(family, label, probability).map_err(err)?;
        }
        Ok(spec)
    }

    pub fn set(
        &mut self,
        family: ActionFamily,
        label: &str,
        probability: f64,
    ) -> Result<(), String> {
        let list = self.0.entry(family).or_default();
        let slot = list
            .iter_mut()
            .find(|s| s.label == label)
            .ok_or_else(|| format!("unknown situation `{label}` for `{family}`"))?;
        slot.probability = probability;
        let total: f64 = list.iter().map(|s| s.probability).sum();
        if total > 1.0 + 1e-12 {
            return Err(format!(
                "situation probabilities of `{family}` sum to {total} > 1"
            ));
        }
        Ok(())
    }

    pub fn situations(&self, family: ActionFamily) -> &[Situation] {
        self.0.get(&family).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Table text in the same format [`SituationSpec::parse`] reads.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# family\tsituation\tprobability\n");
        for (family, list) in &self.0 {
            for s in list {
                out.push_str(&format!("{family}\t{}\t{}\n", s.label, s.probability));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecutionOutcome {
    CleanSuccess,
    ConstraintFailure(Vec<Constraint>),
    Situation(String),
}

impl ExecutionOutcome {
    pub fn tag(&self) -> String {
        match self {
            ExecutionOutcome::CleanSuccess => "clean".into(),
            ExecutionOutcome::ConstraintFailure(v) => {
                let labels: Vec<&str> = v.iter().map(|c| c.label()).collect();
                format!("constraint:{}", labels.join("+"))
            }
            ExecutionOutcome::Situation(label) => format!("situation:{label}"),
        }
    }
}

/// The simulator's ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldState {
    pub truth: SymbolicState,
}

impl WorldState {
    pub fn new(truth: SymbolicState) -> Self {
        WorldState { truth }
    }

    pub fn from_problem(problem: &Problem) -> Self {
        WorldState::new(problem.init.iter().cloned().collect())
    }
}

pub fn goal_satisfied(world: &WorldState, goal: &[Literal]) -> bool {
    holds(&world.truth, goal)
}

/// Scenario configuration: family mapping, constraint table and situation
/// probabilities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub families: FamilyMap,
    pub constraints: ConstraintSpec,
    pub situations: SituationSpec,
}

impl Scenario {
    pub fn deterministic() -> Self {
        Scenario {
            situations: SituationSpec::deterministic(),
            ..Scenario::default()
        }
    }
}

pub struct Simulator {
    universe: ObjectUniverse,
    scenario: Scenario,
    floor: Option<String>,
}

fn atom(p: &str, args: &[&str]) -> Atom {
    Atom::new(p, args.iter().copied())
}

impl Simulator {
    pub fn new(domain: &Domain, problem: &Problem, scenario: Scenario) -> Self {
        let universe = ObjectUniverse::new(domain, problem);
        let floor = universe.extension("floor").first().map(|s| s.to_string());
        Simulator {
            universe,
            scenario,
            floor,
        }
    }

    pub fn universe(&self) -> &ObjectUniverse {
        &self.universe
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// The object dropped things land on.
    pub fn floor(&self) -> Option<&str> {
        self.floor.as_deref()
    }

    pub fn roles(&self, action: &GroundAction) -> Result<ActionRoles, WorldError> {
        self.scenario
            .families
            .roles(&action.schema)
            .copied()
            .ok_or_else(|| WorldError::UnknownFamily(action.schema.clone()))
    }

    pub fn check_constraints(
        &self,
        world: &WorldState,
        action: &GroundAction,
    ) -> Result<Vec<Constraint>, WorldError> {
        let roles = self.roles(action)?;
        let arg = |i: Option<usize>| i.and_then(|i| action.args.get(i)).map(String::as_str);
        let agent = action.args[roles.agent].as_str();
        let target = action.args[roles.target].as_str();
        let support = arg(roles.support);
        let truth = &world.truth;
        let has = |p: &str, args: &[&str]| truth.contains(&atom(p, args));
        let inview = |o: Option<&str>| o.is_some_and(|o| has("inview", &[agent, o]));
        let inhand = |o: Option<&str>| o.is_some_and(|o| has("inhand", &[agent, o]));

        let mut violated = Vec::new();
        for &check in self.scenario.constraints.checks(roles.family) {
            let ok = match check {
                Constraint::SameRoom => match arg(roles.room) {
                    Some(room) => has("inroom", &[agent, room]) && has("inroom", &[target, room]),
                    None => truth
                        .matching("inroom", &[agent])
                        .any(|a| has("inroom", &[target, &a.args[1]])),
                },
                Constraint::TargetInView => inview(Some(target)),
                Constraint::HandEmpty => has("handempty", &[agent]),
                Constraint::ObjectInHand => inhand(Some(target)),
                Constraint::ReceptacleInView | Constraint::NearSink => inview(support),
                Constraint::ReceptacleNotClosed => support.is_some_and(|s| !has("closed", &[s])),
                Constraint::ContainerEmpty => truth.matching("filled", &[target]).next().is_none(),
                Constraint::KnifeInHand => inhand(arg(roles.tool)),
                Constraint::ObjectAtSupport => support.is_some_and(|s| {
                    has("ontop", &[target, s])
                        || has("inside", &[target, s])
                        || has("onfloor", &[target, s])
                }),
                Constraint::SinkHasSource => match arg(roles.liquid) {
                    Some(w) => has("insource", &[target, w]),
                    None => truth.matching("insource", &[target]).next().is_some(),
                },
                Constraint::SinkFilled => match (support, arg(roles.liquid)) {
                    (Some(s), Some(w)) => has("filledsink", &[s, w]),
                    _ => false,
                },
                Constraint::ContentsReady => match support {
                    Some(c) => {
                        has("inside", &[c, target])
                            && arg(roles.liquid).is_none_or(|w| has("filled", &[c, w]))
                    }
                    None => true,
                },
            };
            if !ok {
                violated.push(check);
            }
        }
        Ok(violated)
    }

    /// Executes with a fresh uniform draw from `rng`. The draw is consumed
    /// only when the constraints pass.
    pub fn execute<R: Rng + ?Sized>(
        &self,
        world: &WorldState,
        action: &GroundAction,
        rng: &mut R,
    ) -> Result<(WorldState, ExecutionOutcome), WorldError> {
        let violated = self.check_constraints(world, action)?;
        if !violated.is_empty() {
            return Ok((world.clone(), ExecutionOutcome::ConstraintFailure(violated)));
        }
        let draw: f64 = rng.gen();
        self.execute_with_draw(world, action, draw)
    }

    /// Deterministic core of [`Simulator::execute`]: `draw` in [0, 1) picks
    /// the situation whose cumulative probability interval contains it, in
    /// table order, or clean success for the residual mass.
    pub fn execute_with_draw(
        &self,
        world: &WorldState,
        action: &GroundAction,
        draw: f64,
    ) -> Result<(WorldState, ExecutionOutcome), WorldError> {
        let violated = self.check_constraints(world, action)?;
        if !violated.is_empty() {
            return Ok((world.clone(), ExecutionOutcome::ConstraintFailure(violated)));
        }
        let roles = self.roles(action)?;
        let mut cumulative = 0.0;
        for s in self.scenario.situations.situations(roles.family) {
            cumulative += s.probability;
            if draw < cumulative {
                let next = self.mutate(world, action, &roles, s.mutation);
                return Ok((next, ExecutionOutcome::Situation(s.label.clone())));
            }
        }
        let next = WorldState::new(apply_effects(&world.truth, action, &self.universe));
        Ok((next, ExecutionOutcome::CleanSuccess))
    }

    fn mutate(
        &self,
        world: &WorldState,
        action: &GroundAction,
        roles: &ActionRoles,
        mutation: Mutation,
    ) -> WorldState {
        let agent = action.args[roles.agent].as_str();
        let target = action.args[roles.target].as_str();
        let nominal = || apply_effects(&world.truth, action, &self.universe);
        let truth = match mutation {
            Mutation::Unchanged => world.truth.clone(),
            Mutation::NominalWithoutView => {
                let mut s = nominal();
                s.remove(&atom("inview", &[agent, target]));
                s
            }
            Mutation::NominalDropHeld => {
                let mut s = nominal();
                let held: Vec<String> = s
                    .matching("inhand", &[agent])
                    .map(|a| a.args[1].clone())
                    .collect();
                for obj in held {
                    self.drop_nearby(&mut s, agent, &obj);
                }
                s
            }
            Mutation::DropTarget | Mutation::DropHeld => {
                let mut s = world.truth.clone();
                self.drop_nearby(&mut s, agent, target);
                s
            }
            Mutation::DropTool => {
                let mut s = world.truth.clone();
                if let Some(tool) = roles.tool.and_then(|i| action.args.get(i)) {
                    self.drop_nearby(&mut s, agent, tool);
                }
                s
            }
        };
        WorldState::new(truth)
    }

    /// The object leaves the hand and any support, lands on the floor in the
    /// same room and drops out of view.
    fn drop_nearby(&self, s: &mut SymbolicState, agent: &str, obj: &str) {
        let was_held = s.remove(&atom("inhand", &[agent, obj]));
        if was_held && s.matching("inhand", &[agent]).next().is_none() {
            s.insert(atom("handempty", &[agent]));
        }
        let stale: Vec<Atom> = ["ontop", "inside", "onfloor"]
            .iter()
            .flat_map(|p| s.matching(p, &[obj]).cloned().collect::<Vec<_>>())
            .collect();
        for a in &stale {
            s.remove(a);
        }
        s.remove(&atom("inview", &[agent, obj]));
        if let Some(floor) = &self.floor {
            s.insert(atom("ontop", &[obj, floor]));
            s.insert(atom("onfloor", &[obj, floor]));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::bundled_task;

    fn egg_sim() -> (Simulator, WorldState, crate::pddl::Domain) {
        let (d, p) = bundled_task("halve_an_egg").unwrap().load().unwrap();
        let sim = Simulator::new(&d, &p, Scenario::default());
        (sim, WorldState::from_problem(&p), d)
    }

    fn act(d: &crate::pddl::Domain, schema: &str, args: &[&str]) -> GroundAction {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        GroundAction::instantiate(d.action(schema).unwrap(), &args)
    }

    const A: &str = "agent-n-01";
    const KNIFE: &str = "carving_knife-n-01";
    const EGG: &str = "hard__boiled_egg-n-01";
    const TOP: &str = "countertop-n-01";

    #[test]
    fn find_in_same_room_is_executable() {
        let (sim, w, d) = egg_sim();
        let find = act(&d, "find", &[A, KNIFE, "kitchen"]);
        assert_eq!(sim.check_constraints(&w, &find).unwrap(), vec![]);
    }

    #[test]
    fn grasp_needs_view_and_empty_hand() {
        let (sim, w, d) = egg_sim();
        let grasp = act(&d, "graspon", &[A, KNIFE, TOP]);
        assert_eq!(
            sim.check_constraints(&w, &grasp).unwrap(),
            vec![Constraint::TargetInView]
        );
        let mut t = w.truth.clone();
        t.insert(atom("inview", &[A, KNIFE]));
        assert!(sim
            .check_constraints(&WorldState::new(t.clone()), &grasp)
            .unwrap()
            .is_empty());
        t.remove(&atom("handempty", &[A]));
        t.insert(atom("inhand", &[A, EGG]));
        let w2 = WorldState::new(t);
        assert_eq!(
            sim.check_constraints(&w2, &grasp).unwrap(),
            vec![Constraint::HandEmpty]
        );
        let (after, outcome) = sim.execute_with_draw(&w2, &grasp, 0.9).unwrap();
        assert_eq!(
            outcome,
            ExecutionOutcome::ConstraintFailure(vec![Constraint::HandEmpty])
        );
        assert_eq!(after, w2);
    }

    #[test]
    fn cut_without_knife() {
        let (sim, w, d) = egg_sim();
        let mut t = w.truth.clone();
        t.insert(atom("inview", &[A, EGG]));
        let cut = act(&d, "cut_into_half", &[A, KNIFE, EGG]);
        assert_eq!(
            sim.check_constraints(&WorldState::new(t), &cut).unwrap(),
            vec![Constraint::KnifeInHand]
        );
    }

    #[test]
    fn grasp_draw_above_situation_mass_is_clean() {
        let (sim, w, d) = egg_sim();
        let mut t = w.truth.clone();
        t.insert(atom("inview", &[A, KNIFE]));
        let grasp = act(&d, "graspon", &[A, KNIFE, TOP]);
        let (after, outcome) = sim
            .execute_with_draw(&WorldState::new(t), &grasp, 0.7)
            .unwrap();
        assert_eq!(outcome, ExecutionOutcome::CleanSuccess);
        assert!(after.truth.contains(&atom("inhand", &[A, KNIFE])));
        let (after, outcome) = sim
            .execute_with_draw(
                &WorldState::new(after.truth.clone()),
                &act(&d, "find", &[A, EGG, "kitchen"]),
                0.05,
            )
            .unwrap();
        assert_eq!(outcome, ExecutionOutcome::Situation("drop-held".into()));
        assert!(!after.truth.contains(&atom("inhand", &[A, KNIFE])));
        assert!(after
            .truth
            .contains(&atom("onfloor", &[KNIFE, "floor-n-01"])));
        assert!(after.truth.contains(&atom("inroom", &[KNIFE, "kitchen"])));
        assert!(after.truth.contains(&atom("handempty", &[A])));
        assert!(after.truth.contains(&atom("inview", &[A, EGG])));
    }

    #[test]
    fn unknown_family() {
        let (sim, w, _) = egg_sim();
        let bogus = GroundAction {
            schema: "teleport".into(),
            args: vec![A.into()],
            precondition: vec![],
            effects: vec![],
            conditionals: vec![],
        };
        assert_eq!(
            sim.check_constraints(&w, &bogus),
            Err(WorldError::UnknownFamily("teleport".into()))
        );
    }

    #[test]
    fn scenario_rejects_overfull_family() {
        let err =
            SituationSpec::parse("grasp fail-unchanged 0.6\ngrasp fail-drop 0.6\n").unwrap_err();
        assert!(matches!(err, WorldError::Scenario { line: 2, .. }));
        assert!(SituationSpec::parse("grasp levitate 0.1").is_err());
    }

    #[test]
    fn bundled_table_probabilities() {
        let spec = SituationSpec::default();
        let probs = |f: ActionFamily| -> Vec<f64> {
            spec.situations(f).iter().map(|s| s.probability).collect()
        };
        assert_eq!(probs(ActionFamily::Find), vec![0.0, 0.0, 0.1]);
        assert_eq!(probs(ActionFamily::Grasp), vec![0.25, 0.25]);
        assert_eq!(probs(ActionFamily::PlaceIn), vec![0.1, 0.1]);
        assert_eq!(probs(ActionFamily::PlaceOn), vec![0.1, 0.1]);
        assert_eq!(probs(ActionFamily::FillSink), vec![0.1]);
        assert_eq!(probs(ActionFamily::Fill), vec![0.05, 0.05]);
        assert_eq!(probs(ActionFamily::Open), vec![0.1]);
        assert_eq!(probs(ActionFamily::Close), vec![0.1]);
        assert_eq!(probs(ActionFamily::TurnOn), vec![0.1]);
        assert_eq!(probs(ActionFamily::Cut), vec![0.25, 0.25]);
        assert_eq!(SituationSpec::parse(&spec.to_table()).unwrap(), spec);
    }
}
