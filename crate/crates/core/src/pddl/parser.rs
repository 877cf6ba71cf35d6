use std::collections::{BTreeMap, BTreeSet};

use super::sexpr::{read, SExpr};
use super::{
    ActionSchema, Atom, AtomSchema, ConditionalEffect, Domain, Effect, Literal, LiteralSchema,
    ObjectDecl, PddlError, Position, PredicateSignature, Problem, Term, TypeDecl, TypeHierarchy,
    TypedVar, ROOT_TYPE, SUPPORTED_REQUIREMENTS,
};

fn syntax(pos: Position, message: impl Into<String>) -> PddlError {
    PddlError::Syntax {
        pos,
        message: message.into(),
    }
}

fn expect_list<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr], PddlError> {
    e.list()
        .ok_or_else(|| syntax(e.pos(), format!("expected {what} list")))
}

fn expect_symbol<'a>(e: &'a SExpr, what: &str) -> Result<&'a str, PddlError> {
    e.symbol()
        .ok_or_else(|| syntax(e.pos(), format!("expected {what}")))
}

fn expect_keyword(e: &SExpr, keyword: &str) -> Result<(), PddlError> {
    match e.symbol() {
        Some(s) if s == keyword => Ok(()),
        _ => Err(syntax(e.pos(), format!("expected `{keyword}`"))),
    }
}

/// `(define (<kind> <name>) rest...)` → (name, rest)
fn header<'a>(root: &'a SExpr, kind: &str) -> Result<(String, &'a [SExpr]), PddlError> {
    let items = expect_list(root, "top-level")?;
    let first = items
        .first()
        .ok_or_else(|| syntax(root.pos(), "empty top-level list"))?;
    expect_keyword(first, "define")?;
    let head = items
        .get(1)
        .ok_or_else(|| syntax(root.pos(), format!("missing ({kind} <name>)")))?;
    let head_items = expect_list(head, kind)?;
    match head_items {
        [k, name] => {
            expect_keyword(k, kind)?;
            Ok((expect_symbol(name, "name")?.to_string(), &items[2..]))
        }
        _ => Err(syntax(head.pos(), format!("expected ({kind} <name>)"))),
    }
}

/// Typed list `a b - t c - u d`; trailing untyped names default to `object`.
fn typed_list(items: &[SExpr]) -> Result<Vec<(String, String, Position)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<(String, Position)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let sym = expect_symbol(&items[i], "name in typed list")?;
        if sym == "-" {
            let ty_expr = items
                .get(i + 1)
                .ok_or_else(|| syntax(items[i].pos(), "`-` without a type"))?;
            let ty = expect_symbol(ty_expr, "type name")?;
            if pending.is_empty() {
                return Err(syntax(items[i].pos(), "`-` without preceding names"));
            }
            out.extend(pending.drain(..).map(|(n, p)| (n, ty.to_string(), p)));
            i += 2;
        } else {
            pending.push((sym.to_string(), items[i].pos()));
            i += 1;
        }
    }
    out.extend(
        pending
            .into_iter()
            .map(|(n, p)| (n, ROOT_TYPE.to_string(), p)),
    );
    Ok(out)
}

fn typed_vars(items: &[SExpr], types: &TypeHierarchy) -> Result<Vec<TypedVar>, PddlError> {
    let mut seen = BTreeSet::new();
    let mut vars = Vec::new();
    for (name, ty, pos) in typed_list(items)? {
        if !name.starts_with('?') {
            return Err(syntax(pos, format!("expected variable, found `{name}`")));
        }
        if !types.contains(&ty) {
            return Err(PddlError::UnknownType { name: ty, pos });
        }
        if !seen.insert(name.clone()) {
            return Err(PddlError::Duplicate {
                kind: "variable",
                name,
                pos,
            });
        }
        vars.push(TypedVar { name, ty });
    }
    Ok(vars)
}

/// Name resolution for atoms: variables in scope (schemas) or declared
/// objects (problems).
struct Scope<'a> {
    domain_types: &'a TypeHierarchy,
    predicates: &'a [PredicateSignature],
    vars: BTreeMap<String, String>,
    objects: Option<&'a BTreeMap<String, String>>,
}

impl Scope<'_> {
    fn with_vars(&self, extra: &[TypedVar]) -> Self {
        let mut vars = self.vars.clone();
        for v in extra {
            vars.insert(v.name.clone(), v.ty.clone());
        }
        Scope {
            domain_types: self.domain_types,
            predicates: self.predicates,
            vars,
            objects: self.objects,
        }
    }

    fn atom(&self, e: &SExpr) -> Result<AtomSchema, PddlError> {
        let items = expect_list(e, "atom")?;
        let head = items.first().ok_or_else(|| syntax(e.pos(), "empty atom"))?;
        let name = expect_symbol(head, "predicate name")?;
        let sig = self
            .predicates
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| PddlError::UnknownPredicate {
                name: name.to_string(),
                pos: head.pos(),
            })?;
        let args = &items[1..];
        if args.len() != sig.arity() {
            return Err(PddlError::ArityMismatch {
                predicate: name.to_string(),
                expected: sig.arity(),
                found: args.len(),
                pos: e.pos(),
            });
        }
        let mut terms = Vec::with_capacity(args.len());
        for (arg, slot) in args.iter().zip(&sig.params) {
            let sym = expect_symbol(arg, "argument")?;
            let (term, ty) = if sym.starts_with('?') {
                let ty = self
                    .vars
                    .get(sym)
                    .ok_or_else(|| PddlError::UnboundVariable {
                        name: sym.to_string(),
                        pos: arg.pos(),
                    })?;
                (Term::Var(sym.to_string()), ty.clone())
            } else {
                let ty = self.objects.and_then(|objs| objs.get(sym)).ok_or_else(|| {
                    PddlError::UnknownObject {
                        name: sym.to_string(),
                        pos: arg.pos(),
                    }
                })?;
                (Term::Const(sym.to_string()), ty.clone())
            };
            if !self.domain_types.is_subtype(&ty, &slot.ty) {
                return Err(PddlError::TypeMismatch {
                    predicate: name.to_string(),
                    argument: sym.to_string(),
                    expected: slot.ty.clone(),
                    found: ty,
                    pos: arg.pos(),
                });
            }
            terms.push(term);
        }
        Ok(AtomSchema {
            predicate: name.to_string(),
            args: terms,
        })
    }

    fn literal(&self, e: &SExpr) -> Result<LiteralSchema, PddlError> {
        let items = expect_list(e, "literal")?;
        if items.first().and_then(SExpr::symbol) == Some("not") {
            match items {
                [_, inner] => {
                    let inner_items = expect_list(inner, "negated atom")?;
                    if inner_items.first().and_then(SExpr::symbol) == Some("not") {
                        return Err(syntax(inner.pos(), "double negation is not supported"));
                    }
                    Ok(LiteralSchema {
                        atom: self.atom(inner)?,
                        positive: false,
                    })
                }
                _ => Err(syntax(e.pos(), "`not` takes exactly one atom")),
            }
        } else {
            Ok(LiteralSchema {
                atom: self.atom(e)?,
                positive: true,
            })
        }
    }

    /// `(and l*)`, a single literal, or `()`.
    fn conjunction(&self, e: &SExpr) -> Result<Vec<LiteralSchema>, PddlError> {
        let items = expect_list(e, "condition")?;
        match items.first().and_then(SExpr::symbol) {
            None if items.is_empty() => Ok(Vec::new()),
            Some("and") => items[1..].iter().map(|i| self.literal(i)).collect(),
            Some("or" | "imply" | "exists" | "forall") => Err(syntax(
                e.pos(),
                "only conjunctions of literals are supported in conditions",
            )),
            _ => Ok(vec![self.literal(e)?]),
        }
    }

    fn effects(&self, e: &SExpr) -> Result<Vec<Effect>, PddlError> {
        let items = expect_list(e, "effect")?;
        match items.first().and_then(SExpr::symbol) {
            None if items.is_empty() => Ok(Vec::new()),
            Some("and") => {
                let mut out = Vec::new();
                for item in &items[1..] {
                    out.extend(self.effects(item)?);
                }
                Ok(out)
            }
            Some("forall") => {
                let [_, vars, body] = items else {
                    return Err(syntax(e.pos(), "expected (forall (<vars>) <effect>)"));
                };
                let vars = typed_vars(
                    expect_list(vars, "quantified variables")?,
                    self.domain_types,
                )?;
                let inner = self.with_vars(&vars);
                let body_items = expect_list(body, "forall body")?;
                let (condition, consequent) =
                    if body_items.first().and_then(SExpr::symbol) == Some("when") {
                        inner.when_parts(body)?
                    } else {
                        (Vec::new(), inner.literal_effects(body)?)
                    };
                Ok(vec![Effect::Conditional(ConditionalEffect {
                    vars,
                    condition,
                    consequent,
                })])
            }
            Some("when") => {
                let (condition, consequent) = self.when_parts(e)?;
                Ok(vec![Effect::Conditional(ConditionalEffect {
                    vars: Vec::new(),
                    condition,
                    consequent,
                })])
            }
            _ => Ok(vec![Effect::Literal(self.literal(e)?)]),
        }
    }

    fn when_parts(&self, e: &SExpr) -> Result<(Vec<LiteralSchema>, Vec<LiteralSchema>), PddlError> {
        match expect_list(e, "when")? {
            [_, cond, eff] => Ok((self.conjunction(cond)?, self.literal_effects(eff)?)),
            _ => Err(syntax(e.pos(), "expected (when <condition> <effect>)")),
        }
    }

    fn literal_effects(&self, e: &SExpr) -> Result<Vec<LiteralSchema>, PddlError> {
        let items = expect_list(e, "effect")?;
        match items.first().and_then(SExpr::symbol) {
            Some("forall" | "when") => Err(syntax(
                e.pos(),
                "nested conditional effects are not supported",
            )),
            _ => self.conjunction(e),
        }
    }
}

fn section(e: &SExpr) -> Result<(&str, &[SExpr]), PddlError> {
    let items = expect_list(e, "section")?;
    let head = items
        .first()
        .ok_or_else(|| syntax(e.pos(), "empty section"))?;
    Ok((expect_symbol(head, "section keyword")?, &items[1..]))
}

/// Parses a PDDL domain. Identifiers are normalised to lower case.
pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let root = read(text)?;
    let (name, sections) = header(&root, "domain")?;

    let mut requirements = Vec::new();
    let mut type_decls: Vec<TypeDecl> = Vec::new();
    let mut types = TypeHierarchy::default();
    let mut predicates: Vec<PredicateSignature> = Vec::new();
    let mut actions: Vec<ActionSchema> = Vec::new();

    for sec in sections {
        let (keyword, body) = section(sec)?;
        match keyword {
            ":requirements" => {
                for flag in body {
                    let f = expect_symbol(flag, "requirement flag")?;
                    if !SUPPORTED_REQUIREMENTS.contains(&f) {
                        return Err(PddlError::UnsupportedRequirement {
                            flag: f.to_string(),
                            pos: flag.pos(),
                        });
                    }
                    requirements.push(f.to_string());
                }
            }
            ":types" => {
                let entries = typed_list(body)?;
                let declared: BTreeSet<&str> = entries.iter().map(|(n, _, _)| n.as_str()).collect();
                let mut seen = BTreeSet::new();
                for (n, parent, pos) in &entries {
                    if n == ROOT_TYPE || !seen.insert(n.clone()) {
                        return Err(PddlError::Duplicate {
                            kind: "type",
                            name: n.clone(),
                            pos: *pos,
                        });
                    }
                    if parent != ROOT_TYPE && !declared.contains(parent.as_str()) {
                        return Err(PddlError::UnknownType {
                            name: parent.clone(),
                            pos: *pos,
                        });
                    }
                }
                type_decls.extend(
                    entries
                        .into_iter()
                        .map(|(name, parent, _)| TypeDecl { name, parent }),
                );
                types = TypeHierarchy::from_decls(type_decls.clone())?;
            }
            ":predicates" => {
                for p in body {
                    let items = expect_list(p, "predicate signature")?;
                    let head = items
                        .first()
                        .ok_or_else(|| syntax(p.pos(), "empty predicate signature"))?;
                    let pname = expect_symbol(head, "predicate name")?;
                    if predicates.iter().any(|q| q.name == pname) {
                        return Err(PddlError::Duplicate {
                            kind: "predicate",
                            name: pname.to_string(),
                            pos: head.pos(),
                        });
                    }
                    predicates.push(PredicateSignature {
                        name: pname.to_string(),
                        params: typed_vars(&items[1..], &types)?,
                    });
                }
            }
            ":action" => {
                let action = parse_action(sec.pos(), body, &types, &predicates)?;
                if actions.iter().any(|a| a.name == action.name) {
                    return Err(PddlError::Duplicate {
                        kind: "action",
                        name: action.name,
                        pos: sec.pos(),
                    });
                }
                actions.push(action);
            }
            other => {
                return Err(syntax(
                    sec.pos(),
                    format!("unsupported domain section `{other}`"),
                ))
            }
        }
    }

    Ok(Domain {
        name,
        requirements,
        types,
        predicates,
        actions,
    })
}

fn parse_action(
    pos: Position,
    body: &[SExpr],
    types: &TypeHierarchy,
    predicates: &[PredicateSignature],
) -> Result<ActionSchema, PddlError> {
    let name = body
        .first()
        .ok_or_else(|| syntax(pos, "action without a name"))
        .and_then(|e| expect_symbol(e, "action name"))?
        .to_string();
    let mut params = Vec::new();
    let mut precondition = Vec::new();
    let mut effects = Vec::new();
    let mut rest = &body[1..];
    let mut scope = Scope {
        domain_types: types,
        predicates,
        vars: BTreeMap::new(),
        objects: None,
    };
    while let [key, value, tail @ ..] = rest {
        match expect_symbol(key, "action keyword")? {
            ":parameters" => {
                params = typed_vars(expect_list(value, "parameter")?, types)?;
                scope = scope.with_vars(&params);
            }
            ":precondition" => precondition = scope.conjunction(value)?,
            ":effect" => effects = scope.effects(value)?,
            other => {
                return Err(syntax(
                    key.pos(),
                    format!("unknown action keyword `{other}`"),
                ))
            }
        }
        rest = tail;
    }
    if let Some(dangling) = rest.first() {
        return Err(syntax(dangling.pos(), "action keyword without a value"));
    }
    Ok(ActionSchema {
        name,
        params,
        precondition,
        effects,
    })
}

fn ground_literal(lit: LiteralSchema) -> Literal {
    Literal {
        atom: Atom {
            predicate: lit.atom.predicate,
            args: lit
                .atom
                .args
                .into_iter()
                .map(|t| match t {
                    Term::Const(c) | Term::Var(c) => c,
                })
                .collect(),
        },
        positive: lit.positive,
    }
}

/// Parses a problem against an already parsed domain.
pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem, PddlError> {
    let root = read(text)?;
    let (name, sections) = header(&root, "problem")?;
    let mut domain_name = domain.name.clone();
    let mut objects: Vec<ObjectDecl> = Vec::new();
    let mut object_types: BTreeMap<String, String> = BTreeMap::new();
    let mut init = Vec::new();
    let mut goal = Vec::new();

    for sec in sections {
        let (keyword, body) = section(sec)?;
        let scope = Scope {
            domain_types: &domain.types,
            predicates: &domain.predicates,
            vars: BTreeMap::new(),
            objects: Some(&object_types),
        };
        match keyword {
            ":domain" => {
                let [d] = body else {
                    return Err(syntax(sec.pos(), "expected (:domain <name>)"));
                };
                domain_name = expect_symbol(d, "domain name")?.to_string();
                if domain_name != domain.name {
                    return Err(PddlError::DomainMismatch {
                        expected: domain.name.clone(),
                        found: domain_name,
                    });
                }
            }
            ":requirements" => {}
            ":objects" => {
                for (oname, ty, pos) in typed_list(body)? {
                    if !domain.types.contains(&ty) {
                        return Err(PddlError::UnknownType { name: ty, pos });
                    }
                    if object_types.insert(oname.clone(), ty.clone()).is_some() {
                        return Err(PddlError::Duplicate {
                            kind: "object",
                            name: oname,
                            pos,
                        });
                    }
                    objects.push(ObjectDecl { name: oname, ty });
                }
            }
            ":init" => {
                for fact in body {
                    if let Some(items) = fact.list() {
                        if let Some(var) = items[1.min(items.len())..]
                            .iter()
                            .find(|a| a.symbol().is_some_and(|s| s.starts_with('?')))
                        {
                            return Err(PddlError::NonGroundInit {
                                name: var.symbol().unwrap_or_default().to_string(),
                                pos: var.pos(),
                            });
                        }
                    }
                    let lit = scope.literal(fact)?;
                    if !lit.positive {
                        return Err(syntax(fact.pos(), "negative literal in :init"));
                    }
                    init.push(ground_literal(lit).atom);
                }
            }
            ":goal" => {
                let [g] = body else {
                    return Err(syntax(sec.pos(), "expected (:goal <condition>)"));
                };
                goal = scope
                    .conjunction(g)?
                    .into_iter()
                    .map(ground_literal)
                    .collect();
            }
            other => {
                return Err(syntax(
                    sec.pos(),
                    format!("unsupported problem section `{other}`"),
                ))
            }
        }
    }

    Ok(Problem {
        name,
        domain: domain_name,
        objects,
        init,
        goal,
    })
}
