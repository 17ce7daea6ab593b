//! Restricted Datalog: facts plus safe positive rules (unions of conjunctive
//! queries with acyclic layering between derived predicates), the compiler
//! from approved norms to `allowed/6` clauses, and the iff-completion of a
//! predicate's rules.

mod eval;
mod parser;

pub use eval::{evaluate, query, query_fixpoint, FactSet};
pub use parser::{parse_program, parse_query};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::normgen::CandidateNorm;
use crate::schema::{ContextSchema, SubjectRelation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogicError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("arity clash for `{predicate}`: first seen with {expected}, used with {found}")]
    ArityClash {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("unsafe rule: head variable `{variable}` in `{rule}` is not bound by the body")]
    UnsafeRule { rule: String, variable: String },
    #[error("fact `{0}` is not ground")]
    NonGroundFact(String),
    #[error("out-of-fragment construct: {0}")]
    FragmentViolation(String),
    #[error("recursive definition of `{0}` is outside the fragment")]
    RecursiveDefinition(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("completion expects rules for `{expected}`, found head `{found}`")]
    MixedHeads { expected: String, found: String },
}

/// A constant (lowercase token or quoted text) or a variable (leading
/// uppercase or underscore). The variable `_` is a wildcard: every
/// occurrence is independent and never binds.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Constant(String),
    Variable(String),
}

impl Term {
    pub fn constant(text: impl Into<String>) -> Self {
        Term::Constant(text.into())
    }

    pub fn variable(text: impl Into<String>) -> Self {
        Term::Variable(text.into())
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, Term::Variable(v) if v == "_")
    }
}

fn is_plain_constant(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn write_constant(f: &mut fmt::Formatter<'_>, text: &str) -> fmt::Result {
    if is_plain_constant(text) {
        write!(f, "{text}")
    } else {
        write!(f, "\"")?;
        for c in text.chars() {
            match c {
                '"' => write!(f, "\\\"")?,
                '\\' => write!(f, "\\\\")?,
                '\n' => write!(f, "\\n")?,
                _ => write!(f, "{c}")?,
            }
        }
        write!(f, "\"")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Constant(c) => write_constant(f, c),
            Term::Variable(v) => write!(f, "{v}"),
        }
    }
}

/// A predicate applied to terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Variable(v) if v != "_" => Some(v.as_str()),
            _ => None,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.predicate)?;
        if !self.args.is_empty() {
            write!(f, "(")?;
            for (i, arg) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{arg}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// One conjunct of a rule body: a predicate atom or an equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BodyAtom {
    Pred(Atom),
    Eq(Term, Term),
}

impl fmt::Display for BodyAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyAtom::Pred(a) => write!(f, "{a}"),
            BodyAtom::Eq(l, r) => write!(f, "{l} = {r}"),
        }
    }
}

/// A ground fact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Fact {
    pub fn new(predicate: impl Into<String>, args: Vec<String>) -> Self {
        Fact {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn to_atom(&self) -> Atom {
        Atom::new(
            self.predicate.clone(),
            self.args.iter().map(|a| Term::constant(a.clone())).collect(),
        )
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_atom())
    }
}

/// A safe positive rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<BodyAtom>,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        for (i, b) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Facts plus rules, validated to stay inside the fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatalogProgram {
    facts: Vec<Fact>,
    rules: Vec<Rule>,
    arities: BTreeMap<String, usize>,
}

impl DatalogProgram {
    pub fn new(facts: Vec<Fact>, rules: Vec<Rule>) -> Result<Self, LogicError> {
        let mut arities = BTreeMap::new();
        for fact in &facts {
            check_arity(&mut arities, &fact.predicate, fact.args.len())?;
        }
        for rule in &rules {
            check_arity(&mut arities, &rule.head.predicate, rule.head.args.len())?;
            for b in &rule.body {
                if let BodyAtom::Pred(a) = b {
                    check_arity(&mut arities, &a.predicate, a.args.len())?;
                }
            }
        }
        for rule in &rules {
            check_rule_safety(rule)?;
        }
        check_nonrecursive(&rules)?;
        Ok(DatalogProgram {
            facts,
            rules,
            arities,
        })
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn arity(&self, predicate: &str) -> Option<usize> {
        self.arities.get(predicate).copied()
    }
}

impl fmt::Display for DatalogProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in &self.facts {
            writeln!(f, "{fact}.")?;
        }
        for rule in &self.rules {
            writeln!(f, "{rule}.")?;
        }
        Ok(())
    }
}

fn check_arity(
    arities: &mut BTreeMap<String, usize>,
    predicate: &str,
    found: usize,
) -> Result<(), LogicError> {
    match arities.get(predicate) {
        Some(&expected) if expected != found => Err(LogicError::ArityClash {
            predicate: predicate.to_string(),
            expected,
            found,
        }),
        Some(_) => Ok(()),
        None => {
            arities.insert(predicate.to_string(), found);
            Ok(())
        }
    }
}

/// Union-find over the variables of one rule, seeded by its equality atoms.
/// A class is grounded when it holds a constant or a variable that occurs in
/// a positive body atom.
struct EqClasses {
    parent: BTreeMap<String, String>,
    constant: BTreeMap<String, String>,
}

impl EqClasses {
    fn build(rule: &Rule) -> Result<Self, LogicError> {
        let mut classes = EqClasses {
            parent: BTreeMap::new(),
            constant: BTreeMap::new(),
        };
        for b in &rule.body {
            if let BodyAtom::Eq(l, r) = b {
                if l.is_wildcard() || r.is_wildcard() {
                    return Err(LogicError::FragmentViolation(format!(
                        "wildcard in equality `{b}`"
                    )));
                }
                match (l, r) {
                    (Term::Constant(a), Term::Constant(c)) => {
                        return Err(LogicError::FragmentViolation(format!(
                            "equality between constants `{a} = {c}`"
                        )));
                    }
                    (Term::Variable(v), Term::Constant(c))
                    | (Term::Constant(c), Term::Variable(v)) => {
                        classes.bind_constant(v, c);
                    }
                    (Term::Variable(a), Term::Variable(b)) => {
                        classes.union(a, b);
                    }
                }
            }
        }
        Ok(classes)
    }

    fn find(&mut self, v: &str) -> String {
        let p = self
            .parent
            .entry(v.to_string())
            .or_insert_with(|| v.to_string())
            .clone();
        if p == v {
            return p;
        }
        let root = self.find(&p);
        self.parent.insert(v.to_string(), root.clone());
        root
    }

    fn union(&mut self, a: &str, b: &str) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        let ca = self.constant.get(&ra).cloned();
        self.parent.insert(ra.clone(), rb.clone());
        if let Some(c) = ca {
            self.bind_constant(&rb, &c);
        }
    }

    fn bind_constant(&mut self, v: &str, c: &str) {
        let root = self.find(v);
        self.constant.entry(root).or_insert_with(|| c.to_string());
        // A class bound to two distinct constants can never fire; evaluation
        // drops such rules, so no conflict tracking is needed here.
    }

    fn constant_of(&mut self, v: &str) -> Option<String> {
        let root = self.find(v);
        self.constant.get(&root).cloned()
    }

    fn same_class(&mut self, a: &str, b: &str) -> bool {
        self.find(a) == self.find(b)
    }
}

fn check_rule_safety(rule: &Rule) -> Result<(), LogicError> {
    let mut classes = EqClasses::build(rule)?;
    let mut bound: BTreeSet<String> = BTreeSet::new();
    for b in &rule.body {
        if let BodyAtom::Pred(a) = b {
            bound.extend(a.variables().map(|v| v.to_string()));
        }
    }
    for arg in &rule.head.args {
        if let Term::Variable(v) = arg {
            if v == "_" {
                return Err(LogicError::UnsafeRule {
                    rule: rule.to_string(),
                    variable: "_".to_string(),
                });
            }
            let grounded = bound.contains(v)
                || classes.constant_of(v).is_some()
                || bound.iter().any(|b| classes.same_class(v, b));
            if !grounded {
                return Err(LogicError::UnsafeRule {
                    rule: rule.to_string(),
                    variable: v.clone(),
                });
            }
        }
    }
    Ok(())
}

/// The fragment permits derived predicates in rule bodies (the view layer
/// reads the compiled norms) but not recursion through them.
fn check_nonrecursive(rules: &[Rule]) -> Result<(), LogicError> {
    let intensional: BTreeSet<&str> = rules.iter().map(|r| r.head.predicate.as_str()).collect();
    let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for rule in rules {
        for b in &rule.body {
            if let BodyAtom::Pred(a) = b {
                if intensional.contains(a.predicate.as_str()) {
                    edges
                        .entry(rule.head.predicate.as_str())
                        .or_default()
                        .insert(a.predicate.as_str());
                }
            }
        }
    }
    // DFS cycle detection over the dependency graph.
    let mut visiting: BTreeSet<&str> = BTreeSet::new();
    let mut done: BTreeSet<&str> = BTreeSet::new();
    fn visit<'a>(
        node: &'a str,
        edges: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        visiting: &mut BTreeSet<&'a str>,
        done: &mut BTreeSet<&'a str>,
    ) -> Result<(), LogicError> {
        if done.contains(node) {
            return Ok(());
        }
        if !visiting.insert(node) {
            return Err(LogicError::RecursiveDefinition(node.to_string()));
        }
        if let Some(next) = edges.get(node) {
            for n in next {
                visit(n, edges, visiting, done)?;
            }
        }
        visiting.remove(node);
        done.insert(node);
        Ok(())
    }
    for node in intensional.iter() {
        visit(node, &edges, &mut visiting, &mut done)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Norm compilation
// ---------------------------------------------------------------------------

pub const ALLOWED: &str = "allowed";
pub const INROLE: &str = "inrole";

/// Compiles one approved norm into an `allowed/6` clause, mirroring the shape
/// of the survey questions: role atoms for sender and recipient plus the
/// subject constraint.
pub fn compile_norm(norm: &CandidateNorm) -> Rule {
    let ctx = Term::constant(norm.context.clone());
    let head = Atom::new(
        ALLOWED,
        vec![
            ctx.clone(),
            Term::variable("Sndr"),
            Term::variable("Recp"),
            Term::variable("Subj"),
            Term::constant(norm.attribute.clone()),
            Term::constant(norm.transmission_principle.clone()),
        ],
    );
    let mut body = vec![
        BodyAtom::Pred(Atom::new(
            INROLE,
            vec![
                ctx.clone(),
                Term::variable("Sndr"),
                Term::constant(norm.sender_role.clone()),
            ],
        )),
        BodyAtom::Pred(Atom::new(
            INROLE,
            vec![
                ctx.clone(),
                Term::variable("Recp"),
                Term::constant(norm.recipient_role.clone()),
            ],
        )),
    ];
    match &norm.subject_relation {
        SubjectRelation::Recipient => {
            body.push(BodyAtom::Eq(Term::variable("Subj"), Term::variable("Recp")));
        }
        SubjectRelation::Sender => {
            body.push(BodyAtom::Eq(Term::variable("Subj"), Term::variable("Sndr")));
        }
        SubjectRelation::InRole(role) => {
            body.push(BodyAtom::Pred(Atom::new(
                INROLE,
                vec![ctx, Term::variable("Subj"), Term::constant(role.clone())],
            )));
        }
        SubjectRelation::Unconstrained => {
            // The subject may be anyone known to the context; an open role
            // variable keeps the rule safe.
            body.push(BodyAtom::Pred(Atom::new(
                INROLE,
                vec![ctx, Term::variable("Subj"), Term::variable("SubjRole")],
            )));
        }
    }
    Rule { head, body }
}

/// One rule per approved norm, in input order.
pub fn compile_norms(approved: &[CandidateNorm], _schema: &ContextSchema) -> Vec<Rule> {
    approved.iter().map(compile_norm).collect()
}

// ---------------------------------------------------------------------------
// Iff-completion
// ---------------------------------------------------------------------------

/// Canonical universally quantified variable names per known predicate.
fn canonical_head_vars(predicate: &str, arity: usize) -> Vec<String> {
    let named: Option<&[&str]> = match (predicate, arity) {
        ("allowed", 6) => Some(&["Ctx", "Sndr", "Recp", "Subj", "Attr", "Tr"]),
        ("inrole", 3) => Some(&["Ctx", "Actor", "Role"]),
        ("post", 6) => Some(&["Ctx", "PostId", "Author", "Subj", "Attr", "Tr"]),
        ("canView", 3) => Some(&["Ctx", "Viewer", "PostId"]),
        ("consent", 3) => Some(&["Ctx", "Granter", "PostId"]),
        _ => None,
    };
    match named {
        Some(names) => names.iter().map(|s| s.to_string()).collect(),
        None => (1..=arity).map(|i| format!("X{i}")).collect(),
    }
}

/// One disjunct of a completion: existentially quantified body-only
/// variables plus the conjunction of (renamed) body atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disjunct {
    pub exists: Vec<String>,
    pub atoms: Vec<BodyAtom>,
}

/// The biconditional capturing a predicate's rules: head holds iff some
/// rule's body does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionFormula {
    pub predicate: String,
    pub head_vars: Vec<String>,
    pub disjuncts: Vec<Disjunct>,
}

/// Builds the completion of `predicate/arity` from its rules, standardizing
/// each rule's variables apart and renaming them to the canonical head
/// variables.
pub fn iff_completion(
    predicate: &str,
    arity: usize,
    rules: &[Rule],
) -> Result<CompletionFormula, LogicError> {
    let head_vars = canonical_head_vars(predicate, arity);
    let mut disjuncts = Vec::with_capacity(rules.len());
    for rule in rules {
        if rule.head.predicate != predicate || rule.head.args.len() != arity {
            return Err(LogicError::MixedHeads {
                expected: format!("{predicate}/{arity}"),
                found: format!("{}/{}", rule.head.predicate, rule.head.args.len()),
            });
        }
        let mut rename: BTreeMap<String, String> = BTreeMap::new();
        let mut bindings: Vec<BodyAtom> = Vec::new();
        for (i, arg) in rule.head.args.iter().enumerate() {
            let hv = head_vars[i].clone();
            match arg {
                Term::Constant(c) => bindings.push(BodyAtom::Eq(
                    Term::variable(hv),
                    Term::constant(c.clone()),
                )),
                Term::Variable(v) => match rename.get(v) {
                    Some(prev) => bindings.push(BodyAtom::Eq(
                        Term::variable(hv),
                        Term::variable(prev.clone()),
                    )),
                    None => {
                        rename.insert(v.clone(), hv);
                    }
                },
            }
        }
        // Body-only variables become existentials, renamed to avoid any
        // collision with the canonical head variables.
        let mut exists = Vec::new();
        let mut fresh = 0usize;
        let mut rename_term = |t: &Term,
                               rename: &mut BTreeMap<String, String>,
                               exists: &mut Vec<String>|
         -> Term {
            match t {
                Term::Constant(_) => t.clone(),
                Term::Variable(v) if v == "_" => t.clone(),
                Term::Variable(v) => {
                    if let Some(n) = rename.get(v) {
                        return Term::variable(n.clone());
                    }
                    let mut name = v.clone();
                    while head_vars.contains(&name) || rename.values().any(|n| *n == name) {
                        fresh += 1;
                        name = format!("B{fresh}");
                    }
                    rename.insert(v.clone(), name.clone());
                    exists.push(name.clone());
                    Term::variable(name)
                }
            }
        };
        let mut atoms = bindings;
        for b in &rule.body {
            let renamed = match b {
                BodyAtom::Pred(a) => BodyAtom::Pred(Atom::new(
                    a.predicate.clone(),
                    a.args
                        .iter()
                        .map(|t| rename_term(t, &mut rename, &mut exists))
                        .collect(),
                )),
                BodyAtom::Eq(l, r) => BodyAtom::Eq(
                    rename_term(l, &mut rename, &mut exists),
                    rename_term(r, &mut rename, &mut exists),
                ),
            };
            atoms.push(renamed);
        }
        disjuncts.push(Disjunct { exists, atoms });
    }
    Ok(CompletionFormula {
        predicate: predicate.to_string(),
        head_vars,
        disjuncts,
    })
}

impl fmt::Display for CompletionFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "forall {} . {}(", self.head_vars.join(", "), self.predicate)?;
        write!(f, "{})", self.head_vars.join(", "))?;
        write!(f, " <=> ")?;
        if self.disjuncts.is_empty() {
            return write!(f, "false");
        }
        for (i, d) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                write!(f, " \\/ ")?;
            }
            write!(f, "(")?;
            if !d.exists.is_empty() {
                write!(f, "exists {} . ", d.exists.join(", "))?;
            }
            for (j, a) in d.atoms.iter().enumerate() {
                if j > 0 {
                    write!(f, " /\\ ")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn paper_program_text() -> &'static str {
        "inrole(class, bob, student).\n\
         inrole(class, alice, student).\n\
         inrole(class, steve, professor).\n\
         allowed(class, Sndr, Recp, Subj, grade, need) :-\n\
         \x20 inrole(class, Sndr, professor),\n\
         \x20 inrole(class, Recp, student),\n\
         \x20 Subj = Recp.\n"
    }

    #[test]
    fn parses_the_reference_program() {
        let program = parse_program(paper_program_text()).unwrap();
        assert_eq!(program.facts().len(), 3);
        assert_eq!(program.rules().len(), 1);
    }

    #[test]
    fn unsafe_head_variable_rejected() {
        let err = parse_program("p(X, Y) :- q(X).").unwrap_err();
        assert!(matches!(err, LogicError::UnsafeRule { ref variable, .. } if variable == "Y"));
    }

    #[test]
    fn head_variable_equated_to_constant_is_safe() {
        let program = parse_program("p(X, Y) :- q(X), Y = a.").unwrap();
        assert_eq!(program.rules().len(), 1);
    }

    #[test]
    fn head_variable_equated_transitively_is_safe() {
        parse_program("p(X, Y) :- q(X), Y = Z, Z = X.").unwrap();
    }

    #[test]
    fn arity_clash_rejected() {
        let err = parse_program(
            "allowed(class, bob, alice, bob, grade, confidentiality).\nallowed(a, b).",
        )
        .unwrap_err();
        assert!(matches!(err, LogicError::ArityClash { .. }));
    }

    #[test]
    fn recursion_rejected() {
        let err = parse_program("p(X) :- q(X).\nq(X) :- p(X).\nq(a).").unwrap_err();
        assert!(matches!(err, LogicError::RecursiveDefinition(_)));
    }

    #[test]
    fn layered_view_predicate_accepted() {
        let text = "inrole(class, bob, student).\n\
                    allowed(class, Sndr, Recp, Subj, grade, none) :- inrole(class, Sndr, professor), inrole(class, Recp, student), Subj = Recp.\n\
                    canView(class, Viewer, PostId) :- post(class, PostId, Author, Subj, Attr, Tr), allowed(class, Author, Viewer, Subj, Attr, Tr).\n";
        let program = parse_program(text).unwrap();
        assert_eq!(program.rules().len(), 2);
    }

    #[test]
    fn compiles_the_reference_clause() {
        let norm = CandidateNorm::new(
            "class",
            "professor",
            "student",
            SubjectRelation::Recipient,
            "grade",
            "need",
        );
        let rule = compile_norm(&norm);
        assert_eq!(
            rule.to_string(),
            "allowed(class, Sndr, Recp, Subj, grade, need) :- \
             inrole(class, Sndr, professor), inrole(class, Recp, student), Subj = Recp"
        );
    }

    #[test]
    fn empty_approved_set_compiles_to_nothing() {
        let schema = crate::schema::load_schema(
            r#"{"context":"c","roles":["a"],"attributes":["x"],
                "transmission_principles":["none"],"sender_roles":["a"],
                "recipient_roles":["a"],"subject_relations":["unconstrained"],
                "ontology":{}}"#,
        )
        .unwrap();
        assert!(compile_norms(&[], &schema).is_empty());
    }

    #[test]
    fn compiled_in_role_subject_round_trips() {
        let norm = CandidateNorm::new(
            "class",
            "ta",
            "professor",
            SubjectRelation::InRole("student".to_string()),
            "attendance",
            "poor_performance",
        );
        let rule = compile_norm(&norm);
        let role_atoms = rule
            .body
            .iter()
            .filter(|b| matches!(b, BodyAtom::Pred(a) if a.predicate == INROLE))
            .count();
        assert_eq!(role_atoms, 3);
        let text = format!("{rule}.\n");
        let reparsed = parse_program(&text).unwrap();
        assert_eq!(reparsed.rules(), &[rule]);
    }

    #[test]
    fn completion_single_rule_single_disjunct() {
        let program = parse_program(paper_program_text()).unwrap();
        let completion = iff_completion(ALLOWED, 6, program.rules()).unwrap();
        assert_eq!(completion.disjuncts.len(), 1);
        let shown = completion.to_string();
        assert!(shown.contains("<=>"));
        assert!(shown.contains("Ctx = class"));
        assert!(shown.contains("Subj = Recp"));
    }

    #[test]
    fn completion_of_no_rules_is_false() {
        let completion = iff_completion(ALLOWED, 6, &[]).unwrap();
        assert!(completion.disjuncts.is_empty());
        assert!(completion.to_string().ends_with("<=> false"));
    }

    #[test]
    fn completion_keeps_rule_order() {
        let grade = compile_norm(&CandidateNorm::new(
            "class",
            "professor",
            "ta",
            SubjectRelation::InRole("student".to_string()),
            "grade",
            "none",
        ));
        let attendance = compile_norm(&CandidateNorm::new(
            "class",
            "ta",
            "professor",
            SubjectRelation::InRole("student".to_string()),
            "attendance",
            "none",
        ));
        let completion = iff_completion(ALLOWED, 6, &[grade, attendance]).unwrap();
        assert_eq!(completion.disjuncts.len(), 2);
        let first = completion.disjuncts[0]
            .atoms
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        assert!(first.contains("Attr = grade"));
    }

    #[test]
    fn completion_rejects_mixed_heads() {
        let program = parse_program("p(X) :- q(X).\nr(X) :- q(X).\nq(a).").unwrap();
        let err = iff_completion("p", 1, program.rules()).unwrap_err();
        assert!(matches!(err, LogicError::MixedHeads { .. }));
    }

    #[test]
    fn program_print_parse_round_trip() {
        let program = parse_program(paper_program_text()).unwrap();
        let printed = program.to_string();
        let reparsed = parse_program(&printed).unwrap();
        assert_eq!(program, reparsed);
        assert_eq!(printed, reparsed.to_string());
    }

    #[test]
    fn quoted_constants_round_trip() {
        let program = parse_program("payload(p1, \"Grade: A- \\\"final\\\"\").").unwrap();
        assert_eq!(program.facts().len(), 1);
        let printed = program.to_string();
        let reparsed = parse_program(&printed).unwrap();
        assert_eq!(program, reparsed);
    }
}
