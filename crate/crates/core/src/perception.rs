//! Simulated perception: predicate visibility classes, question templates and
//! a noisy yes/no oracle over the simulator's ground truth.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pddl::{Atom, GroundAction, Literal, ObjectUniverse};
use crate::planner::{effect_delta, holds};
use crate::world::WorldState;

pub const DEFAULT_VISIBILITY: &str = include_str!("../data/visibility.tsv");
pub const DEFAULT_TEMPLATES: &str = include_str!("../data/templates.tsv");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PerceptionError {
    #[error("predicate `{predicate}` is {class}, not answerable by vision")]
    NotVisionClass {
        predicate: String,
        class: PredicateClass,
    },
    #[error("no question template for `{0}`")]
    NoTemplate(String),
    #[error("{file} line {line}: {message}")]
    Table {
        file: &'static str,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredicateClass {
    Vision,
    NonVision,
    Imperceptible,
}

impl fmt::Display for PredicateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredicateClass::Vision => "vision",
            PredicateClass::NonVision => "non-vision",
            PredicateClass::Imperceptible => "imperceptible",
        })
    }
}

impl FromStr for PredicateClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vision" => Ok(PredicateClass::Vision),
            "non-vision" => Ok(PredicateClass::NonVision),
            "imperceptible" => Ok(PredicateClass::Imperceptible),
            _ => Err(format!("unknown predicate class `{s}`")),
        }
    }
}

/// Rows of a tab-separated table with `#` comments stripped.
fn table_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then(|| (i + 1, line.split('\t').map(str::trim).collect()))
    })
}

/// Predicate name to perception class. Unlisted predicates are imperceptible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Visibility(BTreeMap<String, PredicateClass>);

impl Default for Visibility {
    fn default() -> Self {
        Visibility::parse(DEFAULT_VISIBILITY).expect("bundled visibility table parses")
    }
}

impl Visibility {
    pub fn parse(text: &str) -> Result<Self, PerceptionError> {
        let mut map = BTreeMap::new();
        for (line, fields) in table_rows(text) {
            let err = |message: String| PerceptionError::Table {
                file: "visibility",
                line,
                message,
            };
            let [pred, class] = fields[..] else {
                return Err(err("expected `predicate<TAB>class`".into()));
            };
            map.insert(pred.to_lowercase(), class.parse().map_err(err)?);
        }
        Ok(Visibility(map))
    }

    pub fn classify(&self, predicate: &str) -> PredicateClass {
        self.0
            .get(predicate)
            .copied()
            .unwrap_or(PredicateClass::Imperceptible)
    }

    pub fn predicates(&self, class: PredicateClass) -> impl Iterator<Item = &str> {
        self.0
            .iter()
            .filter(move |(_, c)| **c == class)
            .map(|(p, _)| p.as_str())
    }
}

/// A yes/no question about one literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    /// What the agent expects to be true.
    pub expected: Literal,
    /// The literal the question literally asks about; a Yes makes it true.
    pub asked: Literal,
    pub text: String,
}

impl Query {
    /// Whether a Yes answer agrees with the expectation.
    pub fn yes_confirms(&self) -> bool {
        self.expected == self.asked
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates(BTreeMap<(String, bool), String>);

impl Default for Templates {
    fn default() -> Self {
        Templates::parse(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

impl Templates {
    /// Rows are `predicate<TAB>+|-<TAB>template`; `{i}` is the i-th argument.
    pub fn parse(text: &str) -> Result<Self, PerceptionError> {
        let mut map = BTreeMap::new();
        for (line, fields) in table_rows(text) {
            let err = |message: String| PerceptionError::Table {
                file: "templates",
                line,
                message,
            };
            let [pred, polarity, template] = fields[..] else {
                return Err(err("expected `predicate<TAB>polarity<TAB>template`".into()));
            };
            let positive = match polarity {
                "+" => true,
                "-" => false,
                other => return Err(err(format!("bad polarity `{other}`"))),
            };
            map.insert((pred.to_lowercase(), positive), template.to_string());
        }
        Ok(Templates(map))
    }

    /// Phrases a question about `literal`. A negative literal uses its own
    /// template when one exists and otherwise asks about the positive atom.
    pub fn render(&self, literal: &Literal) -> Result<Query, PerceptionError> {
        let pred = &literal.atom.predicate;
        let (asked, template) = match self.0.get(&(pred.clone(), literal.positive)) {
            Some(t) => (literal.clone(), t),
            None => match self.0.get(&(pred.clone(), true)) {
                Some(t) => (Literal::pos(literal.atom.clone()), t),
                None => return Err(PerceptionError::NoTemplate(pred.clone())),
            },
        };
        let mut text = template.clone();
        for (i, arg) in literal.atom.args.iter().enumerate() {
            text = text.replace(&format!("{{{i}}}"), arg);
        }
        Ok(Query {
            expected: literal.clone(),
            asked,
            text,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    Skip,
}

impl Answer {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "yes",
            Answer::No => "no",
            Answer::Skip => "skip",
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Answer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(Answer::Yes),
            "no" => Ok(Answer::No),
            "skip" => Ok(Answer::Skip),
            other => Err(format!("unrecognized answer `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    /// Probability that a vision answer is inverted.
    pub flip_rate: f64,
    /// Probability that any observation is withheld.
    pub skip_rate: f64,
    /// Skip questions about objects the agent does not currently see.
    pub gate_on_inview: bool,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            flip_rate: 0.0,
            skip_rate: 0.0,
            gate_on_inview: false,
        }
    }
}

/// Noisy oracle over ground truth. Every observation draws exactly two
/// uniforms, skip then flip, so the random stream does not depend on the
/// answers given.
pub struct Perception {
    visibility: Visibility,
    templates: Templates,
    config: PerceptionConfig,
    agent: Option<String>,
    rng: ChaCha8Rng,
    rejected: usize,
}

impl Perception {
    pub fn new(config: PerceptionConfig, seed: u64) -> Self {
        Perception::with_tables(Visibility::default(), Templates::default(), config, seed)
    }

    pub fn with_tables(
        visibility: Visibility,
        templates: Templates,
        config: PerceptionConfig,
        seed: u64,
    ) -> Self {
        Perception {
            visibility,
            templates,
            config,
            agent: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rejected: 0,
        }
    }

    /// The agent whose field of view gates questions.
    pub fn with_agent(mut self, agent: impl Into<String>) -> Self {
        self.agent = Some(agent.into());
        self
    }

    pub fn visibility(&self) -> &Visibility {
        &self.visibility
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn config(&self) -> &PerceptionConfig {
        &self.config
    }

    /// Number of questions refused because their predicate is not visual.
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn render(&self, literal: &Literal) -> Result<Query, PerceptionError> {
        self.templates.render(literal)
    }

    fn draws(&mut self) -> (f64, f64) {
        let skip = self.rng.gen::<f64>();
        let flip = self.rng.gen::<f64>();
        (skip, flip)
    }

    fn noisy(&mut self, truth: bool, flippable: bool) -> Answer {
        let (skip, flip) = self.draws();
        if skip < self.config.skip_rate {
            Answer::Skip
        } else if flippable && flip < self.config.flip_rate {
            Answer::from_bool(!truth)
        } else {
            Answer::from_bool(truth)
        }
    }

    fn out_of_view(&self, world: &WorldState, atom: &Atom) -> bool {
        let Some(agent) = &self.agent else {
            return false;
        };
        if !self.config.gate_on_inview || atom.predicate == "inview" {
            return false;
        }
        atom.args.iter().any(|o| {
            o != agent
                && !world
                    .truth
                    .contains(&Atom::new("inview", [agent.as_str(), o.as_str()]))
        })
    }

    /// Answers a vision question from ground truth.
    pub fn answer(&mut self, world: &WorldState, query: &Query) -> Result<Answer, PerceptionError> {
        let predicate = &query.asked.atom.predicate;
        let class = self.visibility.classify(predicate);
        if class != PredicateClass::Vision {
            self.rejected += 1;
            return Err(PerceptionError::NotVisionClass {
                predicate: predicate.clone(),
                class,
            });
        }
        let gated = self.out_of_view(world, &query.asked.atom);
        let answer = self.noisy(world.truth.satisfies(&query.asked), true);
        Ok(if gated { Answer::Skip } else { answer })
    }

    /// Reads a non-visual fact such as the gripper state. Subject to skips
    /// but never inverted. Returns `None` when the reading is withheld.
    pub fn sense(&mut self, world: &WorldState, atom: &Atom) -> Option<bool> {
        match self.noisy(world.truth.contains(atom), false) {
            Answer::Skip => None,
            a => Some(a == Answer::Yes),
        }
    }

    fn perceptible(&self, lits: Vec<Literal>) -> Vec<Literal> {
        lits.into_iter()
            .filter(|l| {
                self.visibility.classify(&l.atom.predicate) != PredicateClass::Imperceptible
            })
            .collect()
    }

    /// "Did the action succeed?": yes when its perceptible net effects,
    /// computed on the pre-action world, hold afterwards. Effects on
    /// imperceptible predicates cannot be judged from observation and are
    /// taken as achieved.
    pub fn answer_success(
        &mut self,
        before: &WorldState,
        after: &WorldState,
        action: &GroundAction,
        universe: &ObjectUniverse,
    ) -> Answer {
        let expected = self.perceptible(effect_delta(&before.truth, action, universe).literals());
        self.noisy(holds(&after.truth, &expected), true)
    }

    /// "Can the action be executed now?": yes when its perceptible
    /// preconditions hold.
    pub fn answer_affordance(&mut self, world: &WorldState, action: &GroundAction) -> Answer {
        let pre = self.perceptible(action.precondition.clone());
        self.noisy(holds(&world.truth, &pre), true)
    }
}

/// Anything that answers a batch of vision questions: the simulated oracle
/// or a remote vision-language model.
pub trait QuestionAnswerer {
    fn answer_batch(&mut self, world: &WorldState, queries: &[Query]) -> Vec<Answer>;
}

impl QuestionAnswerer for Perception {
    fn answer_batch(&mut self, world: &WorldState, queries: &[Query]) -> Vec<Answer> {
        queries
            .iter()
            .map(|q| self.answer(world, q).unwrap_or(Answer::Skip))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::SymbolicState;

    fn lit(p: &str, args: &[&str], positive: bool) -> Literal {
        Literal {
            atom: Atom::new(p, args.iter().copied()),
            positive,
        }
    }

    #[test]
    fn default_classes() {
        let v = Visibility::default();
        for p in [
            "inview", "closed", "inside", "halved", "onfloor", "ontop", "cooked",
        ] {
            assert_eq!(v.classify(p), PredicateClass::Vision, "{p}");
        }
        for p in ["handempty", "inhand", "hot"] {
            assert_eq!(v.classify(p), PredicateClass::NonVision, "{p}");
        }
        for p in [
            "turnedon", "filled", "inroom", "insource", "frozen", "found",
        ] {
            assert_eq!(v.classify(p), PredicateClass::Imperceptible, "{p}");
        }
    }

    #[test]
    fn renders_questions() {
        let t = Templates::default();
        let q = t.render(&lit("inside", &["cup", "cabinet"], true)).unwrap();
        assert_eq!(q.text, "Is cup inside cabinet?");
        assert!(q.yes_confirms());
        let q = t.render(&lit("closed", &["cabinet"], false)).unwrap();
        assert_eq!(q.text, "Is cabinet open?");
        assert_eq!(q.asked, q.expected);
        let q = t.render(&lit("ontop", &["cup", "table"], false)).unwrap();
        assert_eq!(q.text, "Is cup ontop table?");
        assert_eq!(q.asked, lit("ontop", &["cup", "table"], true));
        assert!(!q.yes_confirms());
        let q = t.render(&lit("inview", &["robot", "cup"], true)).unwrap();
        assert_eq!(q.text, "Is cup inview robot?");
        assert!(matches!(
            t.render(&lit("filled", &["cup", "water"], true)),
            Err(PerceptionError::NoTemplate(_))
        ));
    }

    #[test]
    fn noiseless_answers_match_truth_and_counts_misuse() {
        let world = WorldState::new(
            [Atom::new("closed", ["cabinet"]), Atom::new("hot", ["pie"])]
                .into_iter()
                .collect::<SymbolicState>(),
        );
        let mut p = Perception::new(PerceptionConfig::default(), 7);
        let open = p.render(&lit("closed", &["cabinet"], false)).unwrap();
        assert_eq!(p.answer(&world, &open).unwrap(), Answer::No);
        let closed = p.render(&lit("closed", &["cabinet"], true)).unwrap();
        assert_eq!(p.answer(&world, &closed).unwrap(), Answer::Yes);
        let hot = Query {
            expected: lit("hot", &["pie"], true),
            asked: lit("hot", &["pie"], true),
            text: "Is pie hot?".into(),
        };
        assert!(p.answer(&world, &hot).is_err());
        assert_eq!(p.rejected(), 1);
        assert_eq!(p.sense(&world, &Atom::new("hot", ["pie"])), Some(true));
    }

    #[test]
    fn full_skip_and_full_flip() {
        let world = WorldState::new([Atom::new("closed", ["c"])].into_iter().collect());
        let q = Templates::default()
            .render(&lit("closed", &["c"], true))
            .unwrap();
        let cfg = PerceptionConfig {
            skip_rate: 1.0,
            ..PerceptionConfig::default()
        };
        let mut p = Perception::new(cfg, 1);
        assert_eq!(p.answer(&world, &q).unwrap(), Answer::Skip);
        assert_eq!(p.sense(&world, &Atom::new("closed", ["c"])), None);
        let cfg = PerceptionConfig {
            flip_rate: 1.0,
            ..PerceptionConfig::default()
        };
        let mut p = Perception::new(cfg, 1);
        assert_eq!(p.answer(&world, &q).unwrap(), Answer::No);
        assert_eq!(p.sense(&world, &Atom::new("closed", ["c"])), Some(true));
    }

    #[test]
    fn gating_skips_unseen_objects() {
        let world = WorldState::new(
            [
                Atom::new("closed", ["c"]),
                Atom::new("closed", ["d"]),
                Atom::new("inview", ["r", "d"]),
            ]
            .into_iter()
            .collect(),
        );
        let cfg = PerceptionConfig {
            gate_on_inview: true,
            ..PerceptionConfig::default()
        };
        let mut p = Perception::new(cfg, 1).with_agent("r");
        let t = Templates::default();
        let c = t.render(&lit("closed", &["c"], true)).unwrap();
        let d = t.render(&lit("closed", &["d"], true)).unwrap();
        let v = t.render(&lit("inview", &["r", "c"], true)).unwrap();
        assert_eq!(p.answer(&world, &c).unwrap(), Answer::Skip);
        assert_eq!(p.answer(&world, &d).unwrap(), Answer::Yes);
        assert_eq!(p.answer(&world, &v).unwrap(), Answer::No);
    }

    #[test]
    fn flip_rate_frequency() {
        let world = WorldState::new([Atom::new("closed", ["c"])].into_iter().collect());
        let q = Templates::default()
            .render(&lit("closed", &["c"], true))
            .unwrap();
        let cfg = PerceptionConfig {
            flip_rate: 0.2,
            ..PerceptionConfig::default()
        };
        let mut p = Perception::new(cfg, 42);
        let n = 20_000;
        let flips = (0..n)
            .filter(|_| p.answer(&world, &q).unwrap() == Answer::No)
            .count();
        let rate = flips as f64 / n as f64;
        let sigma = (0.2f64 * 0.8 / n as f64).sqrt();
        assert!((rate - 0.2).abs() < 4.0 * sigma, "{rate}");
    }
}
