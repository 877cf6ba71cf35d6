//! Episode loop: plan from belief, check preconditions and effects with
//! perception queries, repair belief and replan.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pddl::{Atom, Domain, GroundAction, Literal, ObjectUniverse, Problem};
use crate::perception::{
    Answer, Perception, PerceptionConfig, PredicateClass, Query, QuestionAnswerer, Templates,
    Visibility,
};
use crate::planner::{effect_delta, holds, Plan, PlanError, Planner, PlannerConfig, SymbolicState};
use crate::world::{goal_satisfied, Scenario, Simulator, WorldError, WorldState};

/// The agent's estimate of the world state.
pub type Belief = SymbolicState;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MonitorError {
    #[error("task `{task}` has no initial plan: {source}")]
    NoInitialPlan { task: String, source: PlanError },
    #[error("problem declares no object of type `agent`")]
    NoAgent,
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Precondition queries before and effect queries after every action.
    DomainPrompt,
    EffOnly,
    PreOnly,
    /// Execute the initial plan open-loop.
    Classical,
    /// Ask whether each action succeeded.
    SucQa,
    /// Ask whether each action is possible before executing it.
    AffQa,
    SucAffQa,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::DomainPrompt,
        Strategy::EffOnly,
        Strategy::PreOnly,
        Strategy::Classical,
        Strategy::SucQa,
        Strategy::AffQa,
        Strategy::SucAffQa,
    ];

    /// Command-line and config name.
    pub fn key(self) -> &'static str {
        match self {
            Strategy::DomainPrompt => "domain-prompt",
            Strategy::EffOnly => "eff-only",
            Strategy::PreOnly => "pre-only",
            Strategy::Classical => "classical",
            Strategy::SucQa => "suc-qa",
            Strategy::AffQa => "aff-qa",
            Strategy::SucAffQa => "suc-aff-qa",
        }
    }

    /// Row label in reports.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::DomainPrompt => "DomainPrompt",
            Strategy::EffOnly => "EffOnly",
            Strategy::PreOnly => "PreOnly",
            Strategy::Classical => "Classical",
            Strategy::SucQa => "SucQA",
            Strategy::AffQa => "AffQA",
            Strategy::SucAffQa => "SucAffQA",
        }
    }

    pub fn checks_preconditions(self) -> bool {
        matches!(self, Strategy::DomainPrompt | Strategy::PreOnly)
    }

    pub fn checks_effects(self) -> bool {
        matches!(self, Strategy::DomainPrompt | Strategy::EffOnly)
    }

    pub fn asks_success(self) -> bool {
        matches!(self, Strategy::SucQa | Strategy::SucAffQa)
    }

    pub fn asks_affordance(self) -> bool {
        matches!(self, Strategy::AffQa | Strategy::SucAffQa)
    }

    pub fn closed_loop(self) -> bool {
        self != Strategy::Classical
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.key() == s || st.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// Where the agent assumes an object is when its belief has lost track of
/// it, e.g. after an unseen drop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationCompletion {
    pub movable_type: String,
    pub floor_type: String,
}

impl Default for LocationCompletion {
    fn default() -> Self {
        LocationCompletion {
            movable_type: "movable".into(),
            floor_type: "floor".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub strategy: Strategy,
    pub perception: PerceptionConfig,
    pub scenario: Scenario,
    /// Absolute step budget; defaults to `step_factor` times the initial
    /// plan length.
    pub max_steps: Option<usize>,
    pub step_factor: usize,
    pub max_replans: usize,
    pub completion: Option<LocationCompletion>,
}

impl EpisodeConfig {
    pub fn new(strategy: Strategy) -> Self {
        EpisodeConfig {
            strategy,
            perception: PerceptionConfig::default(),
            scenario: Scenario::default(),
            max_steps: None,
            step_factor: 10,
            max_replans: 25,
            completion: Some(LocationCompletion::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeSeeds {
    /// Drives situation sampling; shared by strategies compared on one trial.
    pub world: u64,
    pub perception: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Pre,
    Post,
    Success,
    Affordance,
}

impl Phase {
    fn key(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
            Phase::Success => "success",
            Phase::Affordance => "affordance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub phase: Phase,
    pub question: String,
    pub answer: Answer,
}

/// One loop iteration: an action considered, possibly executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvent {
    pub index: usize,
    pub action: String,
    /// Outcome tag, absent when a check stopped the action before execution.
    pub outcome: Option<String>,
    pub queries: Vec<QueryRecord>,
    pub added: Vec<Atom>,
    pub removed: Vec<Atom>,
    pub replanned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GoalReached,
    StepBudget,
    ReplanBudget,
    Unsolvable,
    PlannerLimit,
    /// The plan ran out and the belief claims the goal, but the world
    /// disagrees.
    PlanExhausted,
}

impl Termination {
    pub fn key(self) -> &'static str {
        match self {
            Termination::GoalReached => "goal-reached",
            Termination::StepBudget => "step-budget",
            Termination::ReplanBudget => "replan-budget",
            Termination::Unsolvable => "unsolvable",
            Termination::PlannerLimit => "planner-limit",
            Termination::PlanExhausted => "plan-exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub success: bool,
    pub steps: usize,
    pub replans: usize,
    pub termination: Termination,
    pub events: Vec<StepEvent>,
    /// Questions refused by the oracle because their predicate is not visual.
    pub rejected_queries: usize,
}

impl TrialResult {
    /// Executed actions with their outcome tags.
    pub fn executed(&self) -> Vec<(&str, &str)> {
        self.events
            .iter()
            .filter_map(|e| e.outcome.as_deref().map(|o| (e.action.as_str(), o)))
            .collect()
    }

    /// Line-oriented event log, one event per line.
    pub fn log(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let queries: Vec<String> = e
                .queries
                .iter()
                .map(|q| format!("{}:{}={}", q.phase.key(), q.question, q.answer))
                .collect();
            let delta: Vec<String> = e
                .added
                .iter()
                .map(|a| format!("+{}", a.to_pddl()))
                .chain(e.removed.iter().map(|a| format!("-{}", a.to_pddl())))
                .collect();
            out.push_str(&format!(
                "step\t{}\t{}\t{}\t{}\t{}\t{}\n",
                e.index,
                e.action,
                e.outcome.as_deref().unwrap_or("not-executed"),
                queries.join("|"),
                delta.join(" "),
                if e.replanned { "replan" } else { "-" },
            ));
        }
        out.push_str(&format!(
            "end\tsuccess={}\tsteps={}\treplans={}\ttermination={}\n",
            self.success,
            self.steps,
            self.replans,
            self.termination.key()
        ));
        out
    }
}

/// Vision-class literals of the action's precondition, with question text.
pub fn precondition_queries(
    action: &GroundAction,
    visibility: &Visibility,
    templates: &Templates,
) -> Vec<Query> {
    vision_queries(&action.precondition, visibility, templates)
}

/// Vision-class literals among the action's net effects, conditional effects
/// resolved against the pre-execution belief.
pub fn effect_queries(
    action: &GroundAction,
    belief: &Belief,
    universe: &ObjectUniverse,
    visibility: &Visibility,
    templates: &Templates,
) -> Vec<Query> {
    let effects = effect_delta(belief, action, universe).literals();
    vision_queries(&effects, visibility, templates)
}

fn vision_queries(lits: &[Literal], visibility: &Visibility, templates: &Templates) -> Vec<Query> {
    lits.iter()
        .filter(|l| visibility.classify(&l.atom.predicate) == PredicateClass::Vision)
        .filter_map(|l| templates.render(l).ok())
        .collect()
}

/// Yes makes the asked literal true, No makes it false, Skip changes nothing.
pub fn update_belief(belief: &mut Belief, query: &Query, answer: Answer) {
    match answer {
        Answer::Yes => belief.assert_literal(&query.asked),
        Answer::No => belief.assert_literal(&query.asked.negated()),
        Answer::Skip => {}
    }
}

/// Everything about a task that does not change between episodes: grounded
/// planner, initial plan and a memo of plans per belief state.
pub struct TaskRunner {
    name: String,
    domain: Domain,
    problem: Problem,
    planner: Planner,
    initial_plan: Plan,
    agent: String,
    nonvision_atoms: Vec<Atom>,
    visibility: Visibility,
    templates: Templates,
    plans: Mutex<HashMap<SymbolicState, Result<Plan, PlanError>>>,
}

fn groundings(domain: &Domain, universe: &ObjectUniverse, predicate: &str) -> Vec<Atom> {
    let Some(sig) = domain.predicate(predicate) else {
        return Vec::new();
    };
    let mut out: Vec<Vec<String>> = vec![Vec::new()];
    for param in &sig.params {
        let objs = universe.extension(&param.ty);
        out = out
            .into_iter()
            .flat_map(|prefix| {
                objs.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o.to_string());
                    v
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|args| Atom::new(predicate, args))
        .collect()
}

impl TaskRunner {
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        problem: Problem,
    ) -> Result<Self, MonitorError> {
        Self::with_planner_config(name, domain, problem, PlannerConfig::default())
    }

    pub fn with_planner_config(
        name: impl Into<String>,
        domain: Domain,
        problem: Problem,
        config: PlannerConfig,
    ) -> Result<Self, MonitorError> {
        let name = name.into();
        let planner = Planner::with_config(&domain, &problem, config);
        let agent = planner
            .universe()
            .extension("agent")
            .first()
            .map(|s| s.to_string())
            .ok_or(MonitorError::NoAgent)?;
        let init: SymbolicState = problem.init.iter().cloned().collect();
        let initial_plan =
            planner
                .plan(&init, &problem.goal)
                .map_err(|source| MonitorError::NoInitialPlan {
                    task: name.clone(),
                    source,
                })?;
        let visibility = Visibility::default();
        let nonvision_atoms = domain
            .predicates
            .iter()
            .filter(|p| visibility.classify(&p.name) == PredicateClass::NonVision)
            .flat_map(|p| groundings(&domain, planner.universe(), &p.name))
            .collect();
        let mut plans = HashMap::new();
        plans.insert(init, Ok(initial_plan.clone()));
        Ok(TaskRunner {
            name,
            domain,
            problem,
            planner,
            initial_plan,
            agent,
            nonvision_atoms,
            visibility,
            templates: Templates::default(),
            plans: Mutex::new(plans),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn initial_plan(&self) -> &Plan {
        &self.initial_plan
    }

    pub fn universe(&self) -> &ObjectUniverse {
        self.planner.universe()
    }

    fn plan_from(&self, belief: &Belief) -> Result<Plan, PlanError> {
        if let Some(p) = self.plans.lock().expect("plan memo poisoned").get(belief) {
            return p.clone();
        }
        let result = self.planner.plan(belief, &self.problem.goal);
        self.plans
            .lock()
            .expect("plan memo poisoned")
            .insert(belief.clone(), result.clone());
        result
    }

    /// Runs one episode from the problem's initial state with the simulated
    /// perception oracle.
    pub fn run(&self, cfg: &EpisodeConfig, seeds: EpisodeSeeds) -> TrialResult {
        let world = WorldState::from_problem(&self.problem);
        self.run_with(world, cfg, seeds, None)
    }

    /// Runs one episode from `world`. Vision questions go to `answerer` when
    /// given, otherwise to the simulated oracle.
    pub fn run_with<'a>(
        &'a self,
        world: WorldState,
        cfg: &'a EpisodeConfig,
        seeds: EpisodeSeeds,
        answerer: Option<&'a mut dyn QuestionAnswerer>,
    ) -> TrialResult {
        let sim = Simulator::new(&self.domain, &self.problem, cfg.scenario.clone());
        let perception = Perception::with_tables(
            self.visibility.clone(),
            self.templates.clone(),
            cfg.perception,
            seeds.perception,
        )
        .with_agent(self.agent.clone());
        let floor = cfg.completion.as_ref().and_then(|c| {
            self.universe()
                .extension(&c.floor_type)
                .first()
                .map(|f| f.to_string())
        });
        let movables = cfg
            .completion
            .as_ref()
            .map(|c| {
                self.universe()
                    .extension(&c.movable_type)
                    .into_iter()
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default();
        let mut ep = Episode {
            runner: self,
            cfg,
            sim,
            perception,
            answerer,
            world_rng: ChaCha8Rng::seed_from_u64(seeds.world),
            world,
            belief: self.problem.init.iter().cloned().collect(),
            queue: self.initial_plan.steps.iter().cloned().collect(),
            steps: 0,
            replans: 0,
            events: Vec::new(),
            floor,
            movables,
            assumed: BTreeSet::new(),
            failures: HashMap::new(),
        };
        let termination = ep.run_loop();
        TrialResult {
            success: termination == Termination::GoalReached,
            steps: ep.steps,
            replans: ep.replans,
            termination,
            events: ep.events,
            rejected_queries: ep.perception.rejected(),
        }
    }
}

/// Runs one episode on a freshly grounded task.
pub fn run_episode(
    domain: &Domain,
    problem: &Problem,
    world: WorldState,
    cfg: &EpisodeConfig,
    seeds: EpisodeSeeds,
) -> Result<TrialResult, MonitorError> {
    let runner = TaskRunner::new(problem.name.clone(), domain.clone(), problem.clone())?;
    Ok(runner.run_with(world, cfg, seeds, None))
}

struct Episode<'a> {
    runner: &'a TaskRunner,
    cfg: &'a EpisodeConfig,
    sim: Simulator,
    perception: Perception,
    answerer: Option<&'a mut dyn QuestionAnswerer>,
    world_rng: ChaCha8Rng,
    world: WorldState,
    belief: Belief,
    queue: VecDeque<GroundAction>,
    steps: usize,
    replans: usize,
    events: Vec<StepEvent>,
    floor: Option<String>,
    movables: Vec<String>,
    /// Imperceptible atoms believed only because an action was projected to
    /// add them.
    assumed: BTreeSet<Atom>,
    /// Effect-check failures per ground action.
    failures: HashMap<String, usize>,
}

/// Control flow after a check.
enum Next {
    Continue,
    Replan,
}

impl Episode<'_> {
    fn max_steps(&self) -> usize {
        self.cfg
            .max_steps
            .unwrap_or(self.cfg.step_factor * self.runner.initial_plan.len())
    }

    fn run_loop(&mut self) -> Termination {
        loop {
            if goal_satisfied(&self.world, &self.runner.problem.goal) {
                return Termination::GoalReached;
            }
            if self.steps >= self.max_steps() {
                return Termination::StepBudget;
            }
            let Some(action) = self.queue.front().cloned() else {
                if !self.cfg.strategy.closed_loop()
                    || holds(&self.belief, &self.runner.problem.goal)
                {
                    return Termination::PlanExhausted;
                }
                if let Err(t) = self.replan() {
                    return t;
                }
                continue;
            };
            let before = self.belief.clone();
            let mut event = StepEvent {
                index: self.events.len(),
                action: action.to_pddl(),
                outcome: None,
                queries: Vec::new(),
                added: Vec::new(),
                removed: Vec::new(),
                replanned: false,
            };
            let next = self.step(&action, &mut event);
            let after: BTreeSet<&Atom> = self.belief.iter().collect();
            let prior: BTreeSet<&Atom> = before.iter().collect();
            event.added = after.difference(&prior).map(|a| (*a).clone()).collect();
            event.removed = prior.difference(&after).map(|a| (*a).clone()).collect();
            if let Next::Replan = next {
                event.replanned = true;
                self.events.push(event);
                if let Err(t) = self.replan() {
                    return t;
                }
            } else {
                self.events.push(event);
            }
        }
    }

    fn step(&mut self, action: &GroundAction, event: &mut StepEvent) -> Next {
        let strategy = self.cfg.strategy;
        // Every visual precondition was just confirmed by an answer.
        let mut verified = false;
        if strategy.checks_preconditions() {
            let queries =
                precondition_queries(action, &self.runner.visibility, &self.runner.templates);
            let answered = self.ask(&queries, Phase::Pre, event);
            if !holds(&self.belief, &action.precondition) {
                return Next::Replan;
            }
            verified = answered;
        }
        if strategy.asks_affordance() {
            let answer = self.perception.answer_affordance(&self.world, action);
            event.queries.push(QueryRecord {
                phase: Phase::Affordance,
                question: format!("Is it possible to {} here?", action.to_pddl()),
                answer,
            });
            if answer == Answer::No {
                // The action is known to be impossible but not why: withdraw
                // every visual precondition the belief holds for it.
                for lit in &action.precondition {
                    if self.runner.visibility.classify(&lit.atom.predicate)
                        == PredicateClass::Vision
                    {
                        self.belief.assert_literal(&lit.negated());
                    }
                }
                self.sync_nonvision();
                return Next::Replan;
            }
        }

        let pre_world = self.world.clone();
        let pre_belief = self.belief.clone();
        let (world, outcome) = self
            .sim
            .execute(&self.world, action, &mut self.world_rng)
            .expect("planned actions belong to mapped families");
        self.world = world;
        self.steps += 1;
        self.queue.pop_front();
        event.outcome = Some(outcome.tag());
        if !strategy.closed_loop() {
            return Next::Continue;
        }

        let universe = self.runner.universe();
        let delta = effect_delta(&pre_belief, action, universe);
        let expected = delta.literals();
        for lit in &expected {
            self.belief.assert_literal(lit);
            if lit.positive
                && self.runner.visibility.classify(&lit.atom.predicate)
                    == PredicateClass::Imperceptible
            {
                self.assumed.insert(lit.atom.clone());
            }
        }
        self.sync_nonvision();

        if strategy.checks_effects() {
            let queries = effect_queries(
                action,
                &pre_belief,
                universe,
                &self.runner.visibility,
                &self.runner.templates,
            );
            self.ask(&queries, Phase::Post, event);
            if !holds(&self.belief, &expected) {
                // Imperceptible effects cannot be confirmed; once the action is
                // known to have gone wrong, stop assuming them.
                for lit in &expected {
                    if self.runner.visibility.classify(&lit.atom.predicate)
                        == PredicateClass::Imperceptible
                    {
                        restore(&mut self.belief, &pre_belief, &lit.atom);
                    }
                }
                let failures = self.failures.entry(action.to_pddl()).or_insert(0);
                *failures += 1;
                if verified && *failures >= 2 {
                    self.doubt_assumed_preconditions(action);
                }
                return Next::Replan;
            }
        }
        if strategy.asks_success() {
            let answer = self
                .perception
                .answer_success(&pre_world, &self.world, action, universe);
            event.queries.push(QueryRecord {
                phase: Phase::Success,
                question: format!("Did the robot successfully {}?", action.to_pddl()),
                answer,
            });
            if answer == Answer::No {
                for lit in &expected {
                    restore(&mut self.belief, &pre_belief, &lit.atom);
                }
                self.sync_nonvision();
                return Next::Replan;
            }
        }
        Next::Continue
    }

    /// Asks the queries and updates belief; true when none was skipped.
    fn ask(&mut self, queries: &[Query], phase: Phase, event: &mut StepEvent) -> bool {
        if queries.is_empty() {
            return true;
        }
        let answers = match self.answerer.as_deref_mut() {
            Some(a) => a.answer_batch(&self.world, queries),
            None => self.perception.answer_batch(&self.world, queries),
        };
        let mut answered = true;
        for (q, a) in queries.iter().zip(answers) {
            update_belief(&mut self.belief, q, a);
            answered &= a != Answer::Skip;
            event.queries.push(QueryRecord {
                phase,
                question: q.text.clone(),
                answer: a,
            });
        }
        answered
    }

    fn sync_nonvision(&mut self) {
        for atom in &self.runner.nonvision_atoms {
            if let Some(value) = self.perception.sense(&self.world, atom) {
                if value {
                    self.belief.insert(atom.clone());
                } else {
                    self.belief.remove(atom);
                }
            }
        }
    }

    /// The action failed repeatedly although every visual precondition was
    /// confirmed, so an imperceptible precondition the agent only assumed (e.g. that an
    /// earlier fill worked) may be false. Drop those assumptions unless that
    /// leaves the goal unreachable.
    fn doubt_assumed_preconditions(&mut self, action: &GroundAction) {
        let mut doubted = self.belief.clone();
        let mut changed = false;
        for lit in &action.precondition {
            if lit.positive && self.assumed.contains(&lit.atom) {
                changed |= doubted.remove(&lit.atom);
            }
        }
        if !changed {
            return;
        }
        complete_locations(&mut doubted, self.floor.as_deref(), &self.movables);
        if self.runner.plan_from(&doubted).is_ok() {
            self.belief = doubted;
        }
    }

    fn replan(&mut self) -> Result<(), Termination> {
        if self.replans >= self.cfg.max_replans {
            return Err(Termination::ReplanBudget);
        }
        self.replans += 1;
        complete_locations(&mut self.belief, self.floor.as_deref(), &self.movables);
        match self.runner.plan_from(&self.belief) {
            Ok(plan) => {
                self.queue = plan.steps.into_iter().collect();
                Ok(())
            }
            Err(PlanError::Unsolvable) => Err(Termination::Unsolvable),
            Err(PlanError::ResourceLimit { .. }) => Err(Termination::PlannerLimit),
        }
    }
}

/// Objects the belief has lost track of are assumed to lie on the floor.
fn complete_locations(belief: &mut Belief, floor: Option<&str>, movables: &[String]) {
    let Some(floor) = floor else {
        return;
    };
    for o in movables {
        let located = belief.iter().any(|a| match a.predicate.as_str() {
            "inhand" => a.args.get(1) == Some(o),
            "inside" | "ontop" => a.args.first() == Some(o),
            _ => false,
        });
        if !located {
            belief.insert(Atom::new("ontop", [o.as_str(), floor]));
            belief.insert(Atom::new("onfloor", [o.as_str(), floor]));
        }
    }
}

fn restore(belief: &mut Belief, pre: &Belief, atom: &Atom) {
    if pre.contains(atom) {
        belief.insert(atom.clone());
    } else {
        belief.remove(atom);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::bundled_task;
    use crate::world::{ActionFamily, SituationSpec};

    fn runner(task: &str) -> TaskRunner {
        let (d, p) = bundled_task(task).unwrap().load().unwrap();
        TaskRunner::new(task, d, p).unwrap()
    }

    fn act(r: &TaskRunner, schema: &str, args: &[&str]) -> GroundAction {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        GroundAction::instantiate(r.domain().action(schema).unwrap(), &args)
    }

    fn texts(qs: &[Query]) -> Vec<&str> {
        qs.iter().map(|q| q.text.as_str()).collect()
    }

    const A: &str = "agent-n-01";

    #[test]
    fn precondition_queries_keep_only_visual_literals() {
        let r = runner("boil_water");
        let (v, t) = (Visibility::default(), Templates::default());
        let graspin = act(&r, "graspin", &[A, "mug-n-04", "cabinet-n-01"]);
        assert_eq!(
            texts(&precondition_queries(&graspin, &v, &t)),
            [
                "Is mug-n-04 inview agent-n-01?",
                "Is mug-n-04 inside cabinet-n-01?"
            ]
        );
        let fillsink = act(&r, "fillsink", &[A, "sink-n-01", "water-n-06"]);
        assert_eq!(
            texts(&precondition_queries(&fillsink, &v, &t)),
            ["Is sink-n-01 inview agent-n-01?"]
        );
        let mut bare = fillsink.clone();
        bare.precondition.clear();
        assert!(precondition_queries(&bare, &v, &t).is_empty());
    }

    #[test]
    fn effect_queries_follow_visual_effects() {
        let r = runner("boil_water");
        let (v, t) = (Visibility::default(), Templates::default());
        let init: Belief = r.problem().init.iter().cloned().collect();
        let openit = act(&r, "openit", &[A, "cabinet-n-01", "kitchen"]);
        assert_eq!(
            texts(&effect_queries(&openit, &init, r.universe(), &v, &t)),
            ["Is cabinet-n-01 open?"]
        );
        let mw = act(
            &r,
            "microwave_water",
            &[A, "microwave-n-02", "mug-n-04", "water-n-06"],
        );
        assert_eq!(
            texts(&effect_queries(&mw, &init, r.universe(), &v, &t)),
            ["Is water-n-06 cooked?"]
        );
        let egg = runner("halve_an_egg");
        let cut = act(
            &egg,
            "cut_into_half",
            &[A, "carving_knife-n-01", "hard__boiled_egg-n-01"],
        );
        let init: Belief = egg.problem().init.iter().cloned().collect();
        assert_eq!(
            texts(&effect_queries(&cut, &init, egg.universe(), &v, &t)),
            ["Is hard__boiled_egg-n-01 halved?"]
        );
    }

    #[test]
    fn belief_updates() {
        let t = Templates::default();
        let mut b: Belief = [
            Atom::new("inview", ["agent", "cup"]),
            Atom::new("inside", ["cup", "cabinet"]),
        ]
        .into_iter()
        .collect();
        let q = t
            .render(&Literal::pos(Atom::new("inview", ["agent", "cup"])))
            .unwrap();
        update_belief(&mut b, &q, Answer::No);
        assert!(!b.contains(&Atom::new("inview", ["agent", "cup"])));
        let q = t
            .render(&Literal::neg(Atom::new("closed", ["cabinet"])))
            .unwrap();
        update_belief(&mut b, &q, Answer::No);
        assert!(b.contains(&Atom::new("closed", ["cabinet"])));
        let before = b.clone();
        let q = t
            .render(&Literal::pos(Atom::new("inside", ["cup", "cabinet"])))
            .unwrap();
        update_belief(&mut b, &q, Answer::Skip);
        assert_eq!(b, before);
    }

    #[test]
    fn deterministic_world_runs_initial_plan() {
        for task in ["boil_water", "halve_an_egg"] {
            let r = runner(task);
            for strategy in Strategy::ALL {
                let cfg = EpisodeConfig {
                    scenario: Scenario::deterministic(),
                    ..EpisodeConfig::new(strategy)
                };
                let res = r.run(
                    &cfg,
                    EpisodeSeeds {
                        world: 1,
                        perception: 2,
                    },
                );
                assert!(res.success, "{task} {strategy}");
                assert_eq!(res.steps, r.initial_plan().len());
                assert_eq!(res.replans, 0);
            }
        }
    }

    #[test]
    fn failed_open_is_detected_and_retried() {
        let r = runner("boil_water");
        let mut situations = SituationSpec::deterministic();
        situations
            .set(ActionFamily::Open, "remains-closed", 1.0)
            .unwrap();
        let cfg = EpisodeConfig {
            scenario: Scenario {
                situations,
                ..Scenario::default()
            },
            max_replans: 3,
            ..EpisodeConfig::new(Strategy::DomainPrompt)
        };
        let res = r.run(
            &cfg,
            EpisodeSeeds {
                world: 0,
                perception: 0,
            },
        );
        assert!(!res.success);
        assert_eq!(res.termination, Termination::ReplanBudget);
        let open = "(openit agent-n-01 cabinet-n-01 kitchen)";
        let i = res.events.iter().position(|e| e.action == open).unwrap();
        let failed = &res.events[i];
        assert_eq!(failed.outcome.as_deref(), Some("situation:remains-closed"));
        assert!(failed.replanned);
        assert!(failed.queries.iter().any(|q| q.phase == Phase::Post
            && q.question == "Is cabinet-n-01 open?"
            && q.answer == Answer::No));
        assert_eq!(res.events[i + 1].action, open);
        assert!(res.replans <= cfg.max_replans);
    }

    #[test]
    fn full_skip_matches_classical() {
        let r = runner("halve_an_egg");
        let skip_all = PerceptionConfig {
            skip_rate: 1.0,
            ..PerceptionConfig::default()
        };
        for seed in 0..20 {
            let seeds = EpisodeSeeds {
                world: seed,
                perception: seed + 100,
            };
            let classical = r.run(&EpisodeConfig::new(Strategy::Classical), seeds);
            let cfg = EpisodeConfig {
                perception: skip_all,
                ..EpisodeConfig::new(Strategy::DomainPrompt)
            };
            let dp = r.run(&cfg, seeds);
            assert_eq!(classical.executed(), dp.executed(), "seed {seed}");
            assert_eq!(classical.success, dp.success);
        }
    }

    /// Checks every vision answer against ground truth.
    struct Audited(Perception, usize);

    impl QuestionAnswerer for Audited {
        fn answer_batch(&mut self, world: &WorldState, queries: &[Query]) -> Vec<Answer> {
            let answers = self.0.answer_batch(world, queries);
            for (q, a) in queries.iter().zip(&answers) {
                assert_eq!(
                    *a,
                    Answer::from_bool(world.truth.satisfies(&q.asked)),
                    "{}",
                    q.text
                );
                self.1 += 1;
            }
            answers
        }
    }

    #[test]
    fn perfect_perception_agrees_with_truth() {
        let r = runner("boil_water");
        let cfg = EpisodeConfig::new(Strategy::DomainPrompt);
        let mut audited = Audited(Perception::new(PerceptionConfig::default(), 3), 0);
        for seed in 0..10 {
            let world = WorldState::from_problem(r.problem());
            r.run_with(
                world,
                &cfg,
                EpisodeSeeds {
                    world: seed,
                    perception: seed,
                },
                Some(&mut audited),
            );
        }
        assert!(audited.1 > 0);
    }
}
