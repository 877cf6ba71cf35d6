use std::fmt::{self, Write};

use super::{ActionSchema, AtomSchema, Domain, Effect, LiteralSchema, Problem, TypedVar};

fn write_vars(out: &mut String, vars: &[TypedVar]) {
    let parts: Vec<String> = vars
        .iter()
        .map(|v| format!("{} - {}", v.name, v.ty))
        .collect();
    out.push_str(&parts.join(" "));
}

fn atom_text(atom: &AtomSchema) -> String {
    let mut s = format!("({}", atom.predicate);
    for arg in &atom.args {
        s.push(' ');
        s.push_str(arg.as_str());
    }
    s.push(')');
    s
}

fn literal_text(lit: &LiteralSchema) -> String {
    if lit.positive {
        atom_text(&lit.atom)
    } else {
        format!("(not {})", atom_text(&lit.atom))
    }
}

fn conjunction_text(lits: &[LiteralSchema]) -> String {
    let parts: Vec<String> = lits.iter().map(literal_text).collect();
    format!("(and {})", parts.join(" "))
}

fn action_text(a: &ActionSchema) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "    (:action {}", a.name);
    out.push_str("        :parameters (");
    write_vars(&mut out, &a.params);
    out.push_str(")\n");
    let _ = writeln!(
        out,
        "        :precondition {}",
        conjunction_text(&a.precondition)
    );
    let effects: Vec<String> = a
        .effects
        .iter()
        .map(|e| match e {
            Effect::Literal(l) => literal_text(l),
            Effect::Conditional(c) => {
                let mut vars = String::new();
                write_vars(&mut vars, &c.vars);
                format!(
                    "(forall ({}) (when {} {}))",
                    vars,
                    conjunction_text(&c.condition),
                    conjunction_text(&c.consequent)
                )
            }
        })
        .collect();
    let _ = writeln!(out, "        :effect (and {}))", effects.join(" "));
    out
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (domain {})", self.name)?;
        if !self.requirements.is_empty() {
            writeln!(f, "    (:requirements {})", self.requirements.join(" "))?;
        }
        if !self.types.decls().is_empty() {
            writeln!(f, "    (:types")?;
            for t in self.types.decls() {
                writeln!(f, "        {} - {}", t.name, t.parent)?;
            }
            writeln!(f, "    )")?;
        }
        writeln!(f, "    (:predicates")?;
        for p in &self.predicates {
            let mut vars = String::new();
            write_vars(&mut vars, &p.params);
            if vars.is_empty() {
                writeln!(f, "        ({})", p.name)?;
            } else {
                writeln!(f, "        ({} {})", p.name, vars)?;
            }
        }
        writeln!(f, "    )")?;
        for a in &self.actions {
            f.write_str(&action_text(a))?;
        }
        writeln!(f, ")")
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "(define (problem {})", self.name)?;
        writeln!(f, "    (:domain {})", self.domain)?;
        writeln!(f, "    (:objects")?;
        for o in &self.objects {
            writeln!(f, "        {} - {}", o.name, o.ty)?;
        }
        writeln!(f, "    )")?;
        writeln!(f, "    (:init")?;
        for a in &self.init {
            writeln!(f, "        {}", a.to_pddl())?;
        }
        writeln!(f, "    )")?;
        let goals: Vec<String> = self
            .goal
            .iter()
            .map(|l| {
                if l.positive {
                    l.atom.to_pddl()
                } else {
                    format!("(not {})", l.atom.to_pddl())
                }
            })
            .collect();
        writeln!(f, "    (:goal (and {}))", goals.join(" "))?;
        writeln!(f, ")")
    }
}
