//! Closed-world symbolic states, ADL transition semantics, plan validation
//! and a grounded greedy best-first planner.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::pddl::{self, Atom, Domain, GroundAction, Literal, ObjectUniverse, Problem};

/// Set of true ground atoms; anything absent is false.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolicState(BTreeSet<Atom>);

impl SymbolicState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.0.contains(atom)
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        self.0.insert(atom)
    }

    pub fn remove(&mut self, atom: &Atom) -> bool {
        self.0.remove(atom)
    }

    /// Makes `literal` true: adds a positive atom, removes a negative one.
    pub fn assert_literal(&mut self, literal: &Literal) {
        if literal.positive {
            self.0.insert(literal.atom.clone());
        } else {
            self.0.remove(&literal.atom);
        }
    }

    pub fn satisfies(&self, literal: &Literal) -> bool {
        self.0.contains(&literal.atom) == literal.positive
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Atoms of `predicate` whose arguments start with `prefix`.
    pub fn matching<'a>(
        &'a self,
        predicate: &'a str,
        prefix: &'a [&'a str],
    ) -> impl Iterator<Item = &'a Atom> + 'a {
        self.0.iter().filter(move |a| {
            a.predicate == predicate
                && a.args.len() >= prefix.len()
                && a.args.iter().zip(prefix).all(|(x, y)| x == y)
        })
    }
}

impl FromIterator<Atom> for SymbolicState {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        SymbolicState(iter.into_iter().collect())
    }
}

impl fmt::Display for SymbolicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// True iff every literal of the conjunction holds under closed-world reading.
pub fn holds(state: &SymbolicState, condition: &[Literal]) -> bool {
    condition.iter().all(|l| state.satisfies(l))
}

/// Adds and deletes an action produces in `state`, conditional effects
/// resolved against `state` itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EffectDelta {
    pub add: BTreeSet<Atom>,
    pub delete: BTreeSet<Atom>,
    /// Literals in the order the effects list them, first occurrence wins.
    order: Vec<Atom>,
}

impl EffectDelta {
    /// Net effect literals: adds win over deletes.
    pub fn literals(&self) -> Vec<Literal> {
        self.order
            .iter()
            .map(|a| Literal {
                atom: a.clone(),
                positive: self.add.contains(a),
            })
            .collect()
    }

    fn push(&mut self, lit: &Literal) {
        if !self.add.contains(&lit.atom) && !self.delete.contains(&lit.atom) {
            self.order.push(lit.atom.clone());
        }
        if lit.positive {
            self.add.insert(lit.atom.clone());
        } else {
            self.delete.insert(lit.atom.clone());
        }
    }
}

pub fn effect_delta(
    state: &SymbolicState,
    action: &GroundAction,
    universe: &ObjectUniverse,
) -> EffectDelta {
    let mut delta = EffectDelta::default();
    for lit in &action.effects {
        delta.push(lit);
    }
    for cond in &action.conditionals {
        for (condition, consequent) in cond.expand(universe) {
            if holds(state, &condition) {
                for lit in &consequent {
                    delta.push(lit);
                }
            }
        }
    }
    delta
}

/// Delete-then-add application of an action's effects, ignoring its
/// precondition.
pub fn apply_effects(
    state: &SymbolicState,
    action: &GroundAction,
    universe: &ObjectUniverse,
) -> SymbolicState {
    let delta = effect_delta(state, action, universe);
    let mut next = state.clone();
    for a in &delta.delete {
        next.remove(a);
    }
    for a in delta.add {
        next.insert(a);
    }
    next
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("precondition of {action} violated: {unsatisfied:?}")]
pub struct PreconditionViolation {
    pub action: String,
    pub unsatisfied: Vec<Literal>,
}

/// Successor state; calling it on a state where the precondition fails is a
/// caller bug and is reported as [`PreconditionViolation`].
pub fn apply(
    state: &SymbolicState,
    action: &GroundAction,
    universe: &ObjectUniverse,
) -> Result<SymbolicState, PreconditionViolation> {
    let unsatisfied: Vec<Literal> = action
        .precondition
        .iter()
        .filter(|l| !state.satisfies(l))
        .cloned()
        .collect();
    if !unsatisfied.is_empty() {
        return Err(PreconditionViolation {
            action: action.to_pddl(),
            unsatisfied,
        });
    }
    Ok(apply_effects(state, action, universe))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub steps: Vec<GroundAction>,
}

impl Plan {
    pub fn cost(&self) -> usize {
        self.steps.len()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// One `(action arg ...)` per line followed by a unit-cost trailer, the
    /// format Fast Downward writes to `sas_plan`.
    pub fn to_sas_plan(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&s.to_pddl());
            out.push('\n');
        }
        out.push_str(&format!("; cost = {} (unit cost)\n", self.cost()));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validation {
    pub valid: bool,
    /// Index of the first step whose precondition failed, or `plan.len()`
    /// when every step applied but the goal does not hold.
    pub failed_at: Option<usize>,
}

pub fn validate_plan(
    universe: &ObjectUniverse,
    init: &SymbolicState,
    plan: &[GroundAction],
    goal: &[Literal],
) -> Validation {
    let mut state = init.clone();
    for (i, step) in plan.iter().enumerate() {
        match apply(&state, step, universe) {
            Ok(next) => state = next,
            Err(_) => {
                return Validation {
                    valid: false,
                    failed_at: Some(i),
                }
            }
        }
    }
    if holds(&state, goal) {
        Validation {
            valid: true,
            failed_at: None,
        }
    } else {
        Validation {
            valid: false,
            failed_at: Some(plan.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("goal unreachable: search space exhausted")]
    Unsolvable,
    #[error("node budget of {budget} expansions exceeded")]
    ResourceLimit { budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub max_expansions: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_expansions: 1_000_000,
        }
    }
}

type Bits = Box<[u64]>;

struct CompiledCondEffect {
    pos: Vec<u32>,
    neg: Vec<u32>,
    add: Vec<u32>,
    del: Vec<u32>,
}

struct CompiledAction {
    pre_pos: Vec<u32>,
    pre_neg: Vec<u32>,
    add: Vec<u32>,
    del: Vec<u32>,
    conditional: Vec<CompiledCondEffect>,
}

fn test_bit(bits: &[u64], i: u32) -> bool {
    bits[(i / 64) as usize] >> (i % 64) & 1 == 1
}

fn set_bit(bits: &mut [u64], i: u32, value: bool) {
    let word = &mut bits[(i / 64) as usize];
    if value {
        *word |= 1 << (i % 64);
    } else {
        *word &= !(1 << (i % 64));
    }
}

impl CompiledAction {
    fn applicable(&self, s: &[u64]) -> bool {
        self.pre_pos.iter().all(|&i| test_bit(s, i))
            && !self.pre_neg.iter().any(|&i| test_bit(s, i))
    }

    fn successor(&self, s: &[u64]) -> Bits {
        let mut add: Vec<u32> = self.add.clone();
        let mut del: Vec<u32> = self.del.clone();
        for c in &self.conditional {
            if c.pos.iter().all(|&i| test_bit(s, i)) && !c.neg.iter().any(|&i| test_bit(s, i)) {
                add.extend(&c.add);
                del.extend(&c.del);
            }
        }
        let mut next: Bits = s.into();
        for i in del {
            set_bit(&mut next, i, false);
        }
        for i in add {
            set_bit(&mut next, i, true);
        }
        next
    }
}

/// Grounded forward-search planner for one object universe. Construction
/// grounds and compiles the action set once; each [`Planner::plan`] call is a
/// pure search, so one planner serves every replanning step of an episode.
pub struct Planner {
    universe: ObjectUniverse,
    actions: Vec<GroundAction>,
    compiled: Vec<CompiledAction>,
    atom_ids: HashMap<Atom, u32>,
    words: usize,
    config: PlannerConfig,
}

impl Planner {
    pub fn new(domain: &Domain, problem: &Problem) -> Self {
        Self::with_config(domain, problem, PlannerConfig::default())
    }

    pub fn with_config(domain: &Domain, problem: &Problem, config: PlannerConfig) -> Self {
        let universe = ObjectUniverse::new(domain, problem);
        let actions = pddl::ground(domain, problem);
        let mut atom_ids: HashMap<Atom, u32> = HashMap::new();
        let mut intern = |a: &Atom| -> u32 {
            let next = atom_ids.len() as u32;
            *atom_ids.entry(a.clone()).or_insert(next)
        };
        let mut split = |lits: &[Literal]| -> (Vec<u32>, Vec<u32>) {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for l in lits {
                let id = intern(&l.atom);
                if l.positive {
                    pos.push(id)
                } else {
                    neg.push(id)
                }
            }
            (pos, neg)
        };
        let compiled = actions
            .iter()
            .map(|a| {
                let (pre_pos, pre_neg) = split(&a.precondition);
                let (add, del) = split(&a.effects);
                let conditional = a
                    .conditionals
                    .iter()
                    .flat_map(|c| c.expand(&universe))
                    .map(|(cond, cons)| {
                        let (pos, neg) = split(&cond);
                        let (add, del) = split(&cons);
                        CompiledCondEffect { pos, neg, add, del }
                    })
                    .collect();
                CompiledAction {
                    pre_pos,
                    pre_neg,
                    add,
                    del,
                    conditional,
                }
            })
            .collect();
        let words = atom_ids.len().div_ceil(64).max(1);
        Planner {
            universe,
            actions,
            compiled,
            atom_ids,
            words,
            config,
        }
    }

    pub fn universe(&self) -> &ObjectUniverse {
        &self.universe
    }

    /// Ground actions in (schema name, argument tuple) order.
    pub fn actions(&self) -> &[GroundAction] {
        &self.actions
    }

    pub fn config(&self) -> PlannerConfig {
        self.config
    }

    fn encode(&self, state: &SymbolicState) -> Bits {
        let mut bits = vec![0u64; self.words].into_boxed_slice();
        for a in state.iter() {
            if let Some(&id) = self.atom_ids.get(a) {
                set_bit(&mut bits, id, true);
            }
        }
        bits
    }

    /// Greedy best-first search on the number of unsatisfied goal literals,
    /// FIFO among ties; falls back to breadth-first search once half the
    /// expansion budget is spent.
    pub fn plan(&self, init: &SymbolicState, goal: &[Literal]) -> Result<Plan, PlanError> {
        // Atoms no action mentions are constant; settle them against init.
        let mut goal_pos = Vec::new();
        let mut goal_neg = Vec::new();
        for lit in goal {
            match self.atom_ids.get(&lit.atom) {
                Some(&id) if lit.positive => goal_pos.push(id),
                Some(&id) => goal_neg.push(id),
                None if init.satisfies(lit) => {}
                None => return Err(PlanError::Unsolvable),
            }
        }
        let h = |s: &[u64]| -> usize {
            goal_pos.iter().filter(|&&i| !test_bit(s, i)).count()
                + goal_neg.iter().filter(|&&i| test_bit(s, i)).count()
        };
        let start = self.encode(init);
        let budget = self.config.max_expansions;

        match self.search(&start, &h, budget / 2, true) {
            SearchOutcome::Found(p) => Ok(p),
            SearchOutcome::Exhausted => Err(PlanError::Unsolvable),
            SearchOutcome::OutOfBudget(spent) => {
                match self.search(&start, &h, budget.saturating_sub(spent), false) {
                    SearchOutcome::Found(p) => Ok(p),
                    SearchOutcome::Exhausted => Err(PlanError::Unsolvable),
                    SearchOutcome::OutOfBudget(_) => Err(PlanError::ResourceLimit { budget }),
                }
            }
        }
    }

    fn search(
        &self,
        start: &Bits,
        h: &dyn Fn(&[u64]) -> usize,
        budget: usize,
        greedy: bool,
    ) -> SearchOutcome {
        struct Node {
            state: Bits,
            parent: usize,
            action: usize,
        }
        let mut nodes = vec![Node {
            state: start.clone(),
            parent: usize::MAX,
            action: usize::MAX,
        }];
        let mut seen: HashSet<Bits> = HashSet::new();
        seen.insert(start.clone());
        let mut heap: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::new();
        let mut fifo: VecDeque<usize> = VecDeque::new();
        if greedy {
            heap.push(Reverse((h(start), 0)));
        } else {
            fifo.push_back(0);
        }
        let mut expansions = 0usize;

        loop {
            let idx = if greedy {
                match heap.pop() {
                    Some(Reverse((_, i))) => i,
                    None => return SearchOutcome::Exhausted,
                }
            } else {
                match fifo.pop_front() {
                    Some(i) => i,
                    None => return SearchOutcome::Exhausted,
                }
            };
            if h(&nodes[idx].state) == 0 {
                let mut steps = Vec::new();
                let mut cursor = idx;
                while cursor != 0 {
                    steps.push(self.actions[nodes[cursor].action].clone());
                    cursor = nodes[cursor].parent;
                }
                steps.reverse();
                return SearchOutcome::Found(Plan { steps });
            }
            if expansions >= budget {
                return SearchOutcome::OutOfBudget(expansions);
            }
            expansions += 1;
            for (ai, act) in self.compiled.iter().enumerate() {
                if !act.applicable(&nodes[idx].state) {
                    continue;
                }
                let next = act.successor(&nodes[idx].state);
                if !seen.insert(next.clone()) {
                    continue;
                }
                let child = nodes.len();
                let hv = h(&next);
                nodes.push(Node {
                    state: next,
                    parent: idx,
                    action: ai,
                });
                if greedy {
                    heap.push(Reverse((hv, child)));
                } else {
                    fifo.push_back(child);
                }
            }
        }
    }
}

enum SearchOutcome {
    Found(Plan),
    Exhausted,
    OutOfBudget(usize),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_domain, parse_problem};

    fn atom(p: &str, args: &[&str]) -> Atom {
        Atom::new(p, args.iter().copied())
    }

    const DOMAIN: &str = "(define (domain t)
        (:requirements :strips :typing :negative-preconditions :conditional-effects)
        (:types movable furniture agent - object)
        (:predicates (inhand ?a - agent ?o - object) (handempty ?a - agent)
                     (inside ?o1 - object ?o2 - object) (closed ?o - object) (lit))
        (:action placein :parameters (?a - agent ?o1 - movable ?o2 - object)
            :precondition (and (not (handempty ?a)) (inhand ?a ?o1) (not (closed ?o2)))
            :effect (and (handempty ?a) (not (inhand ?a ?o1)) (inside ?o1 ?o2)
                (forall (?oo - object) (when (inside ?oo ?o1) (inside ?oo ?o2)))))
        (:action nothing :parameters () :precondition () :effect ()))";

    fn fixture() -> (Domain, Problem) {
        let d = parse_domain(DOMAIN).unwrap();
        let p = parse_problem(
            "(define (problem p) (:domain t)
               (:objects ag - agent box brownie - movable oven - furniture)
               (:init (inhand ag box) (inside brownie box)) (:goal (inside brownie oven)))",
            &d,
        )
        .unwrap();
        (d, p)
    }

    #[test]
    fn holds_examples() {
        let closed = atom("closed", &["cab"]);
        let s: SymbolicState = [closed.clone()].into_iter().collect();
        assert!(!holds(&s, &[Literal::neg(closed)]));
        assert!(holds(&SymbolicState::new(), &[]));
    }

    #[test]
    fn placein_moves_contents_via_conditional_effect() {
        let (d, p) = fixture();
        let u = ObjectUniverse::new(&d, &p);
        let act = GroundAction::instantiate(
            d.action("placein").unwrap(),
            &["ag".into(), "box".into(), "oven".into()],
        );
        let s: SymbolicState = p.init.iter().cloned().collect();
        let next = apply(&s, &act, &u).unwrap();
        assert!(next.contains(&atom("handempty", &["ag"])));
        assert!(!next.contains(&atom("inhand", &["ag", "box"])));
        assert!(next.contains(&atom("inside", &["box", "oven"])));
        assert!(next.contains(&atom("inside", &["brownie", "oven"])));
        // input untouched
        assert!(s.contains(&atom("inhand", &["ag", "box"])));
    }

    #[test]
    fn apply_rejects_unmet_precondition() {
        let (d, p) = fixture();
        let u = ObjectUniverse::new(&d, &p);
        let act = GroundAction::instantiate(
            d.action("placein").unwrap(),
            &["ag".into(), "brownie".into(), "oven".into()],
        );
        let s: SymbolicState = p.init.iter().cloned().collect();
        let err = apply(&s, &act, &u).unwrap_err();
        assert_eq!(
            err.unsatisfied,
            vec![Literal::pos(atom("inhand", &["ag", "brownie"]))]
        );
    }

    #[test]
    fn empty_effect_list_is_identity() {
        let (d, p) = fixture();
        let u = ObjectUniverse::new(&d, &p);
        let act = GroundAction::instantiate(d.action("nothing").unwrap(), &[]);
        let s: SymbolicState = p.init.iter().cloned().collect();
        assert_eq!(apply(&s, &act, &u).unwrap(), s);
    }

    #[test]
    fn planner_basics() {
        let (d, p) = fixture();
        let planner = Planner::new(&d, &p);
        let init: SymbolicState = p.init.iter().cloned().collect();
        let plan = planner.plan(&init, &p.goal).unwrap();
        assert_eq!(plan.len(), 1);
        assert!(validate_plan(planner.universe(), &init, &plan.steps, &p.goal).valid);

        // init already satisfies goal
        let plan = planner
            .plan(&init, &[Literal::pos(atom("inside", &["brownie", "box"]))])
            .unwrap();
        assert!(plan.is_empty());

        // `lit` is never added by any action
        assert_eq!(
            planner.plan(&init, &[Literal::pos(atom("lit", &[]))]),
            Err(PlanError::Unsolvable)
        );
    }

    #[test]
    fn validate_reports_first_failing_step() {
        let (d, p) = fixture();
        let planner = Planner::new(&d, &p);
        let init: SymbolicState = p.init.iter().cloned().collect();
        let put = GroundAction::instantiate(
            d.action("placein").unwrap(),
            &["ag".into(), "box".into(), "oven".into()],
        );
        let v = validate_plan(planner.universe(), &init, &[put.clone(), put], &p.goal);
        assert_eq!(
            v,
            Validation {
                valid: false,
                failed_at: Some(1)
            }
        );
    }

    #[test]
    fn resource_limit_is_distinct_from_unsolvable() {
        let (d, p) = fixture();
        let planner = Planner::with_config(&d, &p, PlannerConfig { max_expansions: 0 });
        let init: SymbolicState = p.init.iter().cloned().collect();
        assert_eq!(
            planner.plan(&init, &p.goal),
            Err(PlanError::ResourceLimit { budget: 0 })
        );
    }

    #[test]
    fn sas_plan_format() {
        let (d, p) = fixture();
        let planner = Planner::new(&d, &p);
        let init: SymbolicState = p.init.iter().cloned().collect();
        let plan = planner.plan(&init, &p.goal).unwrap();
        assert_eq!(
            plan.to_sas_plan(),
            "(placein ag box oven)\n; cost = 1 (unit cost)\n"
        );
    }
}
