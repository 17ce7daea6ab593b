//! Bottom-up semi-naive evaluation to a least fixpoint, and conjunctive
//! query answering over the fixpoint.

use std::collections::{BTreeMap, BTreeSet};

use super::{Atom, BodyAtom, DatalogProgram, Fact, LogicError, Rule, Term};

/// A set of ground facts grouped by predicate, ordered for determinism.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactSet {
    relations: BTreeMap<String, BTreeSet<Vec<String>>>,
    len: usize,
}

impl FactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_facts<'a>(facts: impl IntoIterator<Item = &'a Fact>) -> Self {
        let mut set = FactSet::new();
        for f in facts {
            set.insert(&f.predicate, f.args.clone());
        }
        set
    }

    pub fn insert(&mut self, predicate: &str, args: Vec<String>) -> bool {
        let added = self
            .relations
            .entry(predicate.to_string())
            .or_default()
            .insert(args);
        if added {
            self.len += 1;
        }
        added
    }

    pub fn contains(&self, predicate: &str, args: &[String]) -> bool {
        self.relations
            .get(predicate)
            .map(|rel| rel.contains(args))
            .unwrap_or(false)
    }

    pub fn relation(&self, predicate: &str) -> Option<&BTreeSet<Vec<String>>> {
        self.relations.get(predicate)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vec<String>)> {
        self.relations
            .iter()
            .flat_map(|(p, rel)| rel.iter().map(move |args| (p.as_str(), args)))
    }

    pub fn to_facts(&self) -> Vec<Fact> {
        self.iter()
            .map(|(p, args)| Fact::new(p, args.clone()))
            .collect()
    }
}

/// A rule with its equality atoms substituted away: classes bound to a
/// constant use it, other classes collapse onto one representative variable.
/// Rules whose equalities demand two distinct constants can never fire.
struct ResolvedRule {
    head: Atom,
    body: Vec<Atom>,
}

fn resolve_rule(rule: &Rule) -> Option<ResolvedRule> {
    // Union-find seeded by the equality atoms.
    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    fn find(parent: &mut BTreeMap<String, String>, v: &str) -> String {
        let p = parent
            .entry(v.to_string())
            .or_insert_with(|| v.to_string())
            .clone();
        if p == v {
            return p;
        }
        let root = find(parent, &p);
        parent.insert(v.to_string(), root.clone());
        root
    }
    let mut constants: BTreeMap<String, String> = BTreeMap::new();
    for b in &rule.body {
        if let BodyAtom::Eq(l, r) = b {
            match (l, r) {
                (Term::Variable(a), Term::Variable(b)) => {
                    let ra = find(&mut parent, a);
                    let rb = find(&mut parent, b);
                    if ra != rb {
                        let ca = constants.remove(&ra);
                        parent.insert(ra, rb.clone());
                        if let Some(c) = ca {
                            match constants.get(&rb) {
                                Some(existing) if *existing != c => return None,
                                _ => {
                                    constants.insert(rb.clone(), c);
                                }
                            }
                        }
                    }
                }
                (Term::Variable(v), Term::Constant(c))
                | (Term::Constant(c), Term::Variable(v)) => {
                    let root = find(&mut parent, v);
                    match constants.get(&root) {
                        Some(existing) if existing != c => return None,
                        _ => {
                            constants.insert(root, c.clone());
                        }
                    }
                }
                (Term::Constant(_), Term::Constant(_)) => unreachable!("rejected at validation"),
            }
        }
    }
    let mut subst = |t: &Term| -> Term {
        match t {
            Term::Constant(_) => t.clone(),
            Term::Variable(v) if v == "_" => t.clone(),
            Term::Variable(v) => {
                let root = find(&mut parent, v);
                match constants.get(&root) {
                    Some(c) => Term::Constant(c.clone()),
                    None => Term::Variable(root),
                }
            }
        }
    };
    let head = Atom::new(
        rule.head.predicate.clone(),
        rule.head.args.iter().map(&mut subst).collect(),
    );
    let body = rule
        .body
        .iter()
        .filter_map(|b| match b {
            BodyAtom::Pred(a) => Some(Atom::new(
                a.predicate.clone(),
                a.args.iter().map(&mut subst).collect(),
            )),
            BodyAtom::Eq(_, _) => None,
        })
        .collect();
    Some(ResolvedRule { head, body })
}

type Binding = BTreeMap<String, String>;

fn match_atom(atom: &Atom, fact_args: &[String], binding: &mut Binding) -> Option<Vec<String>> {
    let mut added = Vec::new();
    for (term, value) in atom.args.iter().zip(fact_args) {
        match term {
            Term::Constant(c) => {
                if c != value {
                    for k in added {
                        binding.remove(&k);
                    }
                    return None;
                }
            }
            Term::Variable(v) if v == "_" => {}
            Term::Variable(v) => match binding.get(v) {
                Some(bound) if bound != value => {
                    for k in added {
                        binding.remove(&k);
                    }
                    return None;
                }
                Some(_) => {}
                None => {
                    binding.insert(v.clone(), value.clone());
                    added.push(v.clone());
                }
            },
        }
    }
    Some(added)
}

fn unbind(binding: &mut Binding, added: Vec<String>) {
    for k in added {
        binding.remove(&k);
    }
}

/// Joins the body left to right; the atom at `delta_pos` (when given) draws
/// from the delta relation instead of the full database.
fn join_body(
    body: &[Atom],
    idx: usize,
    delta_pos: Option<usize>,
    db: &FactSet,
    delta: &FactSet,
    binding: &mut Binding,
    emit: &mut dyn FnMut(&Binding),
) {
    if idx == body.len() {
        emit(binding);
        return;
    }
    let atom = &body[idx];
    let source = if Some(idx) == delta_pos { delta } else { db };
    let Some(relation) = source.relation(&atom.predicate) else {
        return;
    };
    // Candidate facts must agree with already-bound prefixes; the scan is
    // linear, which is fine at this scale.
    for fact_args in relation {
        if fact_args.len() != atom.args.len() {
            continue;
        }
        if let Some(added) = match_atom(atom, fact_args, binding) {
            join_body(body, idx + 1, delta_pos, db, delta, binding, emit);
            unbind(binding, added);
        }
    }
}

fn instantiate_head(head: &Atom, binding: &Binding) -> Vec<String> {
    head.args
        .iter()
        .map(|t| match t {
            Term::Constant(c) => c.clone(),
            Term::Variable(v) => binding
                .get(v)
                .expect("safe rule: head variables bound")
                .clone(),
        })
        .collect()
}

/// Least fixpoint of the program's rules over its facts, computed
/// semi-naively: each round only joins tuples that touch the previous
/// round's delta.
pub fn evaluate(program: &DatalogProgram) -> FactSet {
    let mut db = FactSet::from_facts(program.facts());
    let resolved: Vec<ResolvedRule> = program.rules().iter().filter_map(resolve_rule).collect();

    // Rules whose bodies resolved away entirely contribute ground heads once.
    let mut delta = db.clone();
    for rule in resolved.iter().filter(|r| r.body.is_empty()) {
        let args = instantiate_head(&rule.head, &BTreeMap::new());
        if db.insert(&rule.head.predicate, args.clone()) {
            delta.insert(&rule.head.predicate, args);
        }
    }

    loop {
        let mut new_delta = FactSet::new();
        for rule in resolved.iter().filter(|r| !r.body.is_empty()) {
            for pos in 0..rule.body.len() {
                if delta.relation(&rule.body[pos].predicate).is_none() {
                    continue;
                }
                let mut binding = Binding::new();
                join_body(
                    &rule.body,
                    0,
                    Some(pos),
                    &db,
                    &delta,
                    &mut binding,
                    &mut |b| {
                        let args = instantiate_head(&rule.head, b);
                        if !db.contains(&rule.head.predicate, &args) {
                            new_delta.insert(&rule.head.predicate, args);
                        }
                    },
                );
            }
        }
        if new_delta.is_empty() {
            break;
        }
        for (p, args) in new_delta.iter() {
            db.insert(p, args.clone());
        }
        delta = new_delta;
    }
    db
}

/// All substitutions grounding `goals` within an already-computed fixpoint.
/// Equality goals check or extend the binding; both sides unbound is outside
/// the fragment.
pub fn query_fixpoint(
    program: &DatalogProgram,
    fixpoint: &FactSet,
    goals: &[BodyAtom],
) -> Result<BTreeSet<Binding>, LogicError> {
    for g in goals {
        if let BodyAtom::Pred(a) = g {
            match program.arity(&a.predicate) {
                None => return Err(LogicError::UnknownPredicate(a.predicate.clone())),
                Some(expected) if expected != a.args.len() => {
                    return Err(LogicError::ArityClash {
                        predicate: a.predicate.clone(),
                        expected,
                        found: a.args.len(),
                    })
                }
                Some(_) => {}
            }
        }
    }
    let mut results = BTreeSet::new();
    let mut binding = Binding::new();
    solve_goals(goals, 0, fixpoint, &mut binding, &mut results)?;
    Ok(results)
}

fn solve_goals(
    goals: &[BodyAtom],
    idx: usize,
    db: &FactSet,
    binding: &mut Binding,
    results: &mut BTreeSet<Binding>,
) -> Result<(), LogicError> {
    if idx == goals.len() {
        results.insert(binding.clone());
        return Ok(());
    }
    match &goals[idx] {
        BodyAtom::Pred(atom) => {
            let Some(relation) = db.relation(&atom.predicate) else {
                return Ok(());
            };
            for fact_args in relation {
                if fact_args.len() != atom.args.len() {
                    continue;
                }
                if let Some(added) = match_atom(atom, fact_args, binding) {
                    solve_goals(goals, idx + 1, db, binding, results)?;
                    unbind(binding, added);
                }
            }
            Ok(())
        }
        BodyAtom::Eq(l, r) => {
            let value_of = |t: &Term, binding: &Binding| -> Option<String> {
                match t {
                    Term::Constant(c) => Some(c.clone()),
                    Term::Variable(v) => binding.get(v).cloned(),
                }
            };
            match (value_of(l, binding), value_of(r, binding)) {
                (Some(a), Some(b)) => {
                    if a == b {
                        solve_goals(goals, idx + 1, db, binding, results)?;
                    }
                    Ok(())
                }
                (Some(value), None) | (None, Some(value)) => {
                    let var = match (l, r) {
                        (Term::Variable(v), _) if binding.get(v).is_none() => v.clone(),
                        (_, Term::Variable(v)) => v.clone(),
                        _ => unreachable!(),
                    };
                    binding.insert(var.clone(), value);
                    solve_goals(goals, idx + 1, db, binding, results)?;
                    binding.remove(&var);
                    Ok(())
                }
                (None, None) => Err(LogicError::FragmentViolation(format!(
                    "equality `{l} = {r}` with both sides unbound"
                ))),
            }
        }
    }
}

/// Evaluates the program and answers the query against its fixpoint. Ground
/// queries return the empty substitution when they hold and nothing
/// otherwise.
pub fn query(
    program: &DatalogProgram,
    goals: &[BodyAtom],
) -> Result<BTreeSet<Binding>, LogicError> {
    let fixpoint = evaluate(program);
    query_fixpoint(program, &fixpoint, goals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_program, parse_query};

    fn paper_program() -> DatalogProgram {
        parse_program(
            "inrole(class, bob, student).\n\
             inrole(class, alice, student).\n\
             inrole(class, steve, professor).\n\
             allowed(class, Sndr, Recp, Subj, grade, need) :-\n\
               inrole(class, Sndr, professor),\n\
               inrole(class, Recp, student),\n\
               Subj = Recp.\n",
        )
        .unwrap()
    }

    #[test]
    fn derives_exactly_the_two_allowed_flows() {
        let program = paper_program();
        let fixpoint = evaluate(&program);
        let allowed: Vec<&Vec<String>> = fixpoint
            .relation("allowed")
            .map(|rel| rel.iter().collect())
            .unwrap_or_default();
        assert_eq!(allowed.len(), 2);
        assert!(fixpoint.contains(
            "allowed",
            &["class", "steve", "bob", "bob", "grade", "need"].map(String::from)
        ));
        assert!(fixpoint.contains(
            "allowed",
            &["class", "steve", "alice", "alice", "grade", "need"].map(String::from)
        ));
    }

    #[test]
    fn no_rules_means_fixpoint_is_fact_set() {
        let program = parse_program("p(a).\nq(b, c).\n").unwrap();
        let fixpoint = evaluate(&program);
        assert_eq!(fixpoint.len(), 2);
        assert_eq!(fixpoint, FactSet::from_facts(program.facts()));
    }

    #[test]
    fn adding_an_unrelated_fact_preserves_derivations() {
        let program = paper_program();
        let before = evaluate(&program);
        let mut facts = program.facts().to_vec();
        facts.push(Fact::new(
            "inrole",
            vec!["class".into(), "zoe".into(), "registrar".into()],
        ));
        let bigger = DatalogProgram::new(facts, program.rules().to_vec()).unwrap();
        let after = evaluate(&bigger);
        for (p, args) in before.iter() {
            assert!(after.contains(p, args));
        }
    }

    #[test]
    fn ground_query_true_and_false() {
        let program = paper_program();
        let yes = query(
            &program,
            &parse_query("?- allowed(class, steve, bob, bob, grade, need).").unwrap(),
        )
        .unwrap();
        assert_eq!(yes.len(), 1);
        assert!(yes.iter().next().unwrap().is_empty());

        let no = query(
            &program,
            &parse_query("?- allowed(class, steve, alice, bob, grade, need).").unwrap(),
        )
        .unwrap();
        assert!(no.is_empty());
    }

    #[test]
    fn open_query_enumerates_substitutions() {
        let program = paper_program();
        let answers = query(&program, &parse_query("?- inrole(class, X, student).").unwrap())
            .unwrap();
        let names: Vec<&str> = answers.iter().map(|b| b["X"].as_str()).collect();
        assert_eq!(names, vec!["alice", "bob"]);
    }

    #[test]
    fn unknown_predicate_is_an_error() {
        let program = paper_program();
        let err = query(&program, &parse_query("?- nosuch(a).").unwrap()).unwrap_err();
        assert!(matches!(err, LogicError::UnknownPredicate(_)));
    }

    #[test]
    fn contradictory_equalities_never_fire() {
        let program = parse_program("p(X) :- q(X), X = a, X = b.\nq(a).\n").unwrap();
        let fixpoint = evaluate(&program);
        assert!(fixpoint.relation("p").is_none());
    }

    #[test]
    fn equality_to_constant_projects_into_head() {
        let program = parse_program("p(X, Y) :- q(X), Y = tagged.\nq(a).\nq(b).\n").unwrap();
        let fixpoint = evaluate(&program);
        assert!(fixpoint.contains("p", &["a".to_string(), "tagged".to_string()]));
        assert!(fixpoint.contains("p", &["b".to_string(), "tagged".to_string()]));
    }

    #[test]
    fn layered_rules_evaluate_bottom_up() {
        let program = parse_program(
            "edge(a, b).\nedge(b, c).\n\
             hop(X, Y) :- edge(X, Y).\n\
             two(X, Z) :- hop(X, Y), hop(Y, Z).\n",
        )
        .unwrap();
        let fixpoint = evaluate(&program);
        assert!(fixpoint.contains("two", &["a".to_string(), "c".to_string()]));
        assert_eq!(fixpoint.relation("two").unwrap().len(), 1);
    }
}
