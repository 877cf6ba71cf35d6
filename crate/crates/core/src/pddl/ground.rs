use std::collections::BTreeMap;
use std::fmt;

use super::{
    ActionSchema, Atom, ConditionalEffect, Domain, Effect, Literal, LiteralSchema, ObjectUniverse,
    Problem, Term,
};

type Binding = BTreeMap<String, String>;

fn instantiate(lit: &LiteralSchema, binding: &Binding) -> Literal {
    Literal {
        atom: Atom {
            predicate: lit.atom.predicate.clone(),
            args: lit
                .atom
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => binding
                        .get(v)
                        .cloned()
                        .unwrap_or_else(|| panic!("unbound variable {v} survived parsing")),
                    Term::Const(c) => c.clone(),
                })
                .collect(),
        },
        positive: lit.positive,
    }
}

/// A conditional effect with the action parameters bound; its own quantified
/// variables stay open until [`ConditionalBinding::expand`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionalBinding {
    pub effect: ConditionalEffect,
    binding: Binding,
}

impl ConditionalBinding {
    /// One (condition, consequent) pair per type-consistent assignment of the
    /// quantified variables over `universe`.
    pub fn expand(&self, universe: &ObjectUniverse) -> Vec<(Vec<Literal>, Vec<Literal>)> {
        let ranges: Vec<Vec<&str>> = self
            .effect
            .vars
            .iter()
            .map(|v| universe.extension(&v.ty))
            .collect();
        let mut out = Vec::new();
        for_each_assignment(&ranges, &mut |choice| {
            let mut binding = self.binding.clone();
            for (var, obj) in self.effect.vars.iter().zip(choice) {
                binding.insert(var.name.clone(), obj.to_string());
            }
            out.push((
                self.effect
                    .condition
                    .iter()
                    .map(|l| instantiate(l, &binding))
                    .collect(),
                self.effect
                    .consequent
                    .iter()
                    .map(|l| instantiate(l, &binding))
                    .collect(),
            ));
        });
        out
    }
}

/// A schema with every parameter bound to an object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub schema: String,
    pub args: Vec<String>,
    pub precondition: Vec<Literal>,
    pub effects: Vec<Literal>,
    pub conditionals: Vec<ConditionalBinding>,
}

impl GroundAction {
    pub fn instantiate(schema: &ActionSchema, args: &[String]) -> Self {
        assert_eq!(
            schema.params.len(),
            args.len(),
            "argument count for {}",
            schema.name
        );
        let binding: Binding = schema
            .params
            .iter()
            .zip(args)
            .map(|(p, a)| (p.name.clone(), a.clone()))
            .collect();
        let mut effects = Vec::new();
        let mut conditionals = Vec::new();
        for e in &schema.effects {
            match e {
                Effect::Literal(l) => effects.push(instantiate(l, &binding)),
                Effect::Conditional(c) => conditionals.push(ConditionalBinding {
                    effect: c.clone(),
                    binding: binding.clone(),
                }),
            }
        }
        GroundAction {
            schema: schema.name.clone(),
            args: args.to_vec(),
            precondition: schema
                .precondition
                .iter()
                .map(|l| instantiate(l, &binding))
                .collect(),
            effects,
            conditionals,
        }
    }

    /// `(name arg1 arg2 ...)`, the line format external planners emit.
    pub fn to_pddl(&self) -> String {
        let mut s = format!("({}", self.schema);
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s.push(')');
        s
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_pddl())
    }
}

fn for_each_assignment<'a>(ranges: &[Vec<&'a str>], visit: &mut dyn FnMut(&[&'a str])) {
    fn rec<'a>(
        ranges: &[Vec<&'a str>],
        prefix: &mut Vec<&'a str>,
        visit: &mut dyn FnMut(&[&'a str]),
    ) {
        match ranges.split_first() {
            None => visit(prefix),
            Some((first, rest)) => {
                for obj in first {
                    prefix.push(obj);
                    rec(rest, prefix, visit);
                    prefix.pop();
                }
            }
        }
    }
    rec(ranges, &mut Vec::new(), visit);
}

/// Every type-consistent grounding of every schema, ordered by
/// (schema name, argument tuple).
pub fn ground(domain: &Domain, problem: &Problem) -> Vec<GroundAction> {
    let universe = ObjectUniverse::new(domain, problem);
    let mut out = Vec::new();
    for schema in &domain.actions {
        let ranges: Vec<Vec<&str>> = schema
            .params
            .iter()
            .map(|p| universe.extension(&p.ty))
            .collect();
        for_each_assignment(&ranges, &mut |choice| {
            let args: Vec<String> = choice.iter().map(|s| s.to_string()).collect();
            out.push(GroundAction::instantiate(schema, &args));
        });
    }
    out.sort_by(|a, b| (&a.schema, &a.args).cmp(&(&b.schema, &b.args)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_domain, parse_problem};

    const DOMAIN: &str = "(define (domain t) (:requirements :typing)
        (:types movable room agent - object mug - movable kitchen - room)
        (:predicates (inroom ?o - object ?r - room) (inview ?a - agent ?o - object) (lit))
        (:action find :parameters (?a - agent ?o - object ?r - room)
            :precondition (and (inroom ?a ?r) (inroom ?o ?r)) :effect (inview ?a ?o))
        (:action noop :parameters () :precondition () :effect (lit)))";

    #[test]
    fn find_grounds_over_object_supertype() {
        let d = parse_domain(DOMAIN).unwrap();
        let p = parse_problem(
            "(define (problem p) (:domain t) (:objects a - agent m - mug k - kitchen) (:init) (:goal (and)))",
            &d,
        )
        .unwrap();
        let actions = ground(&d, &p);
        let finds: Vec<_> = actions.iter().filter(|a| a.schema == "find").collect();
        assert_eq!(finds.len(), 3);
        let targets: Vec<&str> = finds.iter().map(|a| a.args[1].as_str()).collect();
        assert_eq!(targets, ["a", "k", "m"]);
        assert_eq!(actions.iter().filter(|a| a.schema == "noop").count(), 1);
    }
}
