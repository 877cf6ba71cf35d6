//! PDDL front end: s-expression reader, domain/problem parser, printer and
//! grounding for the typed STRIPS fragment with negative preconditions and
//! conditional effects.

mod ground;
mod parser;
mod printer;
mod sexpr;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use ground::{ground, ConditionalBinding, GroundAction};
pub use parser::{parse_domain, parse_problem};

/// The universal supertype every declared type descends from.
pub const ROOT_TYPE: &str = "object";

/// Requirement flags this front end understands.
pub const SUPPORTED_REQUIREMENTS: [&str; 4] = [
    ":strips",
    ":typing",
    ":negative-preconditions",
    ":conditional-effects",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PddlError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Position, message: String },
    #[error("unknown type `{name}` at {pos}")]
    UnknownType { name: String, pos: Position },
    #[error("unknown predicate `{name}` at {pos}")]
    UnknownPredicate { name: String, pos: Position },
    #[error("unknown object `{name}` at {pos}")]
    UnknownObject { name: String, pos: Position },
    #[error("predicate `{predicate}` expects {expected} argument(s), got {found} at {pos}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
        pos: Position,
    },
    #[error("argument `{argument}` of type `{found}` does not fit slot of type `{expected}` in `{predicate}` at {pos}")]
    TypeMismatch {
        predicate: String,
        argument: String,
        expected: String,
        found: String,
        pos: Position,
    },
    #[error("duplicate {kind} `{name}` at {pos}")]
    Duplicate {
        kind: &'static str,
        name: String,
        pos: Position,
    },
    #[error("unsupported requirement `{flag}` at {pos}")]
    UnsupportedRequirement { flag: String, pos: Position },
    #[error("unbound variable `{name}` at {pos}")]
    UnboundVariable { name: String, pos: Position },
    #[error("init atom is not ground: variable `{name}` at {pos}")]
    NonGroundInit { name: String, pos: Position },
    #[error("type hierarchy has a cycle through `{name}`")]
    TypeCycle { name: String },
    #[error("problem targets domain `{found}` but `{expected}` was supplied")]
    DomainMismatch { expected: String, found: String },
}

/// A declared type and its parent in the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDecl {
    pub name: String,
    pub parent: String,
}

/// Type forest rooted at [`ROOT_TYPE`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeHierarchy {
    decls: Vec<TypeDecl>,
    parents: BTreeMap<String, String>,
}

impl TypeHierarchy {
    pub(crate) fn from_decls(decls: Vec<TypeDecl>) -> Result<Self, PddlError> {
        let parents: BTreeMap<String, String> = decls
            .iter()
            .map(|d| (d.name.clone(), d.parent.clone()))
            .collect();
        let hierarchy = TypeHierarchy { decls, parents };
        for name in hierarchy.parents.keys() {
            let mut cursor = name.as_str();
            let mut hops = 0usize;
            while cursor != ROOT_TYPE {
                cursor = hierarchy.parents[cursor].as_str();
                hops += 1;
                if hops > hierarchy.parents.len() {
                    return Err(PddlError::TypeCycle { name: name.clone() });
                }
            }
        }
        Ok(hierarchy)
    }

    pub fn decls(&self) -> &[TypeDecl] {
        &self.decls
    }

    pub fn contains(&self, name: &str) -> bool {
        name == ROOT_TYPE || self.parents.contains_key(name)
    }

    pub fn parent(&self, name: &str) -> Option<&str> {
        self.parents.get(name).map(String::as_str)
    }

    /// True when `sub` equals `sup` or descends from it.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        let mut cursor = sub;
        loop {
            if cursor == sup {
                return true;
            }
            match self.parents.get(cursor) {
                Some(parent) => cursor = parent,
                None => return false,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypedVar {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSignature {
    pub name: String,
    pub params: Vec<TypedVar>,
}

impl PredicateSignature {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// Argument of a schematic atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn as_str(&self) -> &str {
        match self {
            Term::Var(v) | Term::Const(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtomSchema {
    pub predicate: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LiteralSchema {
    pub atom: AtomSchema,
    pub positive: bool,
}

/// `forall (vars) (when condition consequent)`; an empty variable list is a
/// plain `when`, an empty condition a plain `forall`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalEffect {
    pub vars: Vec<TypedVar>,
    pub condition: Vec<LiteralSchema>,
    pub consequent: Vec<LiteralSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    Literal(LiteralSchema),
    Conditional(ConditionalEffect),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedVar>,
    pub precondition: Vec<LiteralSchema>,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: TypeHierarchy,
    pub predicates: Vec<PredicateSignature>,
    pub actions: Vec<ActionSchema>,
}

impl Domain {
    pub fn predicate(&self, name: &str) -> Option<&PredicateSignature> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }
}

/// A ground predicate instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new<P, I, S>(predicate: P, args: I) -> Self
    where
        P: Into<String>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Atom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    /// PDDL surface form, e.g. `(inside cup cabinet)`.
    pub fn to_pddl(&self) -> String {
        let mut out = format!("({}", self.predicate);
        for arg in &self.args {
            out.push(' ');
            out.push_str(arg);
        }
        out.push(')');
        out
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.predicate, self.args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal {
            atom,
            positive: true,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal {
            atom,
            positive: false,
        }
    }

    pub fn negated(&self) -> Self {
        Literal {
            atom: self.atom.clone(),
            positive: !self.positive,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "¬{}", self.atom)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDecl {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub domain: String,
    pub objects: Vec<ObjectDecl>,
    pub init: Vec<Atom>,
    pub goal: Vec<Literal>,
}

impl Problem {
    pub fn object_type(&self, name: &str) -> Option<&str> {
        self.objects
            .iter()
            .find(|o| o.name == name)
            .map(|o| o.ty.as_str())
    }
}

/// The objects of a problem together with the domain's type hierarchy;
/// answers "which objects inhabit type T".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectUniverse {
    types: TypeHierarchy,
    objects: Vec<ObjectDecl>,
}

impl ObjectUniverse {
    pub fn new(domain: &Domain, problem: &Problem) -> Self {
        ObjectUniverse {
            types: domain.types.clone(),
            objects: problem.objects.clone(),
        }
    }

    pub fn objects(&self) -> &[ObjectDecl] {
        &self.objects
    }

    pub fn types(&self) -> &TypeHierarchy {
        &self.types
    }

    pub fn type_of(&self, object: &str) -> Option<&str> {
        self.objects
            .iter()
            .find(|o| o.name == object)
            .map(|o| o.ty.as_str())
    }

    pub fn is_instance(&self, object: &str, ty: &str) -> bool {
        self.type_of(object)
            .is_some_and(|t| self.types.is_subtype(t, ty))
    }

    /// Objects whose type is `ty` or a descendant, in declaration order.
    pub fn extension(&self, ty: &str) -> Vec<&str> {
        self.objects
            .iter()
            .filter(|o| self.types.is_subtype(&o.ty, ty))
            .map(|o| o.name.as_str())
            .collect()
    }
}
