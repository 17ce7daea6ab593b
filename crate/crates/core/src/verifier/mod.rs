//! Decides the meta-properties of a compiled norm set by exhaustive search
//! over role profiles: semantic consistency of disapproved norms and
//! transitive-flow closure, each with concrete replayable witnesses. The
//! finite vocabulary makes the search a complete decision procedure at the
//! chosen profile bound; an SMT-LIB export is kept as an optional external
//! cross-check.

mod oracle;
mod semantic;
pub mod smtlib;
mod transitivity;

pub use oracle::{brute_force_oracle, OracleProperty};
pub use semantic::check_semantic_consistency;
pub use smtlib::{export_epr, ExceptionClause, ExclusionProperty, MetaProperty};
pub use transitivity::check_transitivity;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::logic::{evaluate, BodyAtom, DatalogProgram, Fact, LogicError, Rule, Term};
use crate::normgen::{self, CandidateNorm};
use crate::schema::{profile_consistent, role_closure, ContextSchema, SubjectRelation};

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("rule `{0}` does not have the compiled norm shape")]
    SchemaMismatch(String),
    #[error("norm `{norm_id}` references `{value}`, unknown to the schema")]
    UnknownVocabulary { norm_id: String, value: String },
    #[error("profile bound must be at least 1")]
    ZeroBound,
    #[error("oracle universe of {actors} actors exceeds the limit of {max}")]
    UniverseTooLarge { actors: usize, max: usize },
    #[error("SMT script parse error: {0}")]
    SmtParse(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// An implication-closed, conflict-free set of roles one actor may hold.
pub type RoleProfile = BTreeSet<String>;

/// Closures of every conflict-free role subset of size 1..=k, deduplicated,
/// in deterministic order (bases enumerated by size, then by schema role
/// order).
pub fn build_profiles(schema: &ContextSchema, k: usize) -> Result<Vec<RoleProfile>, VerifierError> {
    if k == 0 {
        return Err(VerifierError::ZeroBound);
    }
    let roles: Vec<&str> = schema.roles.iter().map(|r| r.id.as_str()).collect();
    let mut seen: BTreeSet<RoleProfile> = BTreeSet::new();
    let mut profiles = Vec::new();
    for size in 1..=k.min(roles.len()) {
        for base_indices in combinations(roles.len(), size) {
            let base: RoleProfile = base_indices.iter().map(|&i| roles[i].to_string()).collect();
            let closed = role_closure(&schema.ontology, &base).expect("closure is total");
            if profile_consistent(&schema.ontology, &closed) && seen.insert(closed.clone()) {
                profiles.push(closed);
            }
        }
    }
    Ok(profiles)
}

/// All k-element index combinations of 0..n in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] != i + n - k {
                current[i] += 1;
                for j in i + 1..k {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// The norm 5-tuple recovered from a compiled `allowed/6` rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormView {
    pub norm_id: String,
    pub context: String,
    pub sender_role: String,
    pub recipient_role: String,
    pub subject: SubjectRelation,
    pub attribute: String,
    pub tp: String,
}

impl NormView {
    pub fn from_norm(norm: &CandidateNorm) -> Self {
        NormView {
            norm_id: norm.norm_id.clone(),
            context: norm.context.clone(),
            sender_role: norm.sender_role.clone(),
            recipient_role: norm.recipient_role.clone(),
            subject: norm.subject_relation.clone(),
            attribute: norm.attribute.clone(),
            tp: norm.transmission_principle.clone(),
        }
    }
}

/// Recovers the norm tuple behind a compiled rule; the verifier works over
/// these views. Rules that stray from the compiled shape are rejected.
pub fn decompile_rule(rule: &Rule) -> Result<NormView, VerifierError> {
    let mismatch = || VerifierError::SchemaMismatch(rule.to_string());
    let head = &rule.head;
    if head.predicate != "allowed" || head.args.len() != 6 {
        return Err(mismatch());
    }
    let constant = |t: &Term| match t {
        Term::Constant(c) => Some(c.clone()),
        Term::Variable(_) => None,
    };
    let variable = |t: &Term| match t {
        Term::Variable(v) if v != "_" => Some(v.clone()),
        _ => None,
    };
    let context = constant(&head.args[0]).ok_or_else(mismatch)?;
    let sender_var = variable(&head.args[1]).ok_or_else(mismatch)?;
    let recipient_var = variable(&head.args[2]).ok_or_else(mismatch)?;
    let subject_var = variable(&head.args[3]).ok_or_else(mismatch)?;
    let attribute = constant(&head.args[4]).ok_or_else(mismatch)?;
    let tp = constant(&head.args[5]).ok_or_else(mismatch)?;
    if sender_var == recipient_var || sender_var == subject_var || recipient_var == subject_var {
        return Err(mismatch());
    }

    let mut sender_role: Option<String> = None;
    let mut recipient_role: Option<String> = None;
    let mut subject: Option<SubjectRelation> = None;
    for b in &rule.body {
        match b {
            BodyAtom::Pred(a) if a.predicate == "inrole" && a.args.len() == 3 => {
                if constant(&a.args[0]).as_deref() != Some(context.as_str()) {
                    return Err(mismatch());
                }
                let actor = variable(&a.args[1]).ok_or_else(mismatch)?;
                if actor == sender_var {
                    let role = constant(&a.args[2]).ok_or_else(mismatch)?;
                    if sender_role.replace(role).is_some() {
                        return Err(mismatch());
                    }
                } else if actor == recipient_var {
                    let role = constant(&a.args[2]).ok_or_else(mismatch)?;
                    if recipient_role.replace(role).is_some() {
                        return Err(mismatch());
                    }
                } else if actor == subject_var {
                    let relation = match &a.args[2] {
                        Term::Constant(role) => SubjectRelation::InRole(role.clone()),
                        Term::Variable(_) => SubjectRelation::Unconstrained,
                    };
                    if subject.replace(relation).is_some() {
                        return Err(mismatch());
                    }
                } else {
                    return Err(mismatch());
                }
            }
            BodyAtom::Eq(Term::Variable(a), Term::Variable(b)) => {
                let pair = (a.as_str(), b.as_str());
                let relation = if pair == (subject_var.as_str(), recipient_var.as_str())
                    || pair == (recipient_var.as_str(), subject_var.as_str())
                {
                    SubjectRelation::Recipient
                } else if pair == (subject_var.as_str(), sender_var.as_str())
                    || pair == (sender_var.as_str(), subject_var.as_str())
                {
                    SubjectRelation::Sender
                } else {
                    return Err(mismatch());
                };
                if subject.replace(relation).is_some() {
                    return Err(mismatch());
                }
            }
            _ => return Err(mismatch()),
        }
    }
    let sender_role = sender_role.ok_or_else(mismatch)?;
    let recipient_role = recipient_role.ok_or_else(mismatch)?;
    let subject = subject.ok_or_else(mismatch)?;
    let norm_id = normgen::norm_id(
        &context,
        &sender_role,
        &recipient_role,
        &subject,
        &attribute,
        &tp,
    );
    Ok(NormView {
        norm_id,
        context,
        sender_role,
        recipient_role,
        subject,
        attribute,
        tp,
    })
}

pub fn decompile_rules(rules: &[Rule]) -> Result<Vec<NormView>, VerifierError> {
    rules.iter().map(decompile_rule).collect()
}

/// A named actor together with the role profile it holds in a witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorWitness {
    pub name: String,
    pub profile: RoleProfile,
}

/// A concrete flow instantiating a norm: who sends what about whom to whom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowWitness {
    pub context: String,
    pub sender: ActorWitness,
    pub recipient: ActorWitness,
    pub subject: ActorWitness,
    pub attribute: String,
    pub tp: String,
}

impl FlowWitness {
    /// The `inrole` facts grounding this witness (deduplicated by actor).
    pub fn inrole_facts(&self) -> Vec<Fact> {
        let mut facts = BTreeSet::new();
        for actor in [&self.sender, &self.recipient, &self.subject] {
            for role in &actor.profile {
                facts.insert(Fact::new(
                    "inrole",
                    vec![self.context.clone(), actor.name.clone(), role.clone()],
                ));
            }
        }
        facts.into_iter().collect()
    }

    pub fn flow_args(&self) -> Vec<String> {
        vec![
            self.context.clone(),
            self.sender.name.clone(),
            self.recipient.name.clone(),
            self.subject.name.clone(),
            self.attribute.clone(),
            self.tp.clone(),
        ]
    }
}

/// A disapproved norm whose flow the approved rules still derive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticViolation {
    pub disapproved: NormView,
    pub witness: FlowWitness,
    /// Approved norms deriving the witness flow.
    pub implicated: Vec<String>,
}

/// One hop of a transitivity chain, at profile level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainHop {
    pub from: RoleProfile,
    pub to: RoleProfile,
    pub via_norm_id: String,
    pub tp: String,
}

/// A composite flow reachable through permitted hops whose direct flow is
/// not derivable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitivityViolation {
    pub context: String,
    pub sender_profile: RoleProfile,
    pub recipient_profile: RoleProfile,
    pub subject_profile: RoleProfile,
    pub attribute: String,
    /// `None` when transmission principles were ignored for composition.
    pub tp: Option<String>,
    pub chain: Vec<ChainHop>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum Violation {
    Semantic(SemanticViolation),
    Transitivity(TransitivityViolation),
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Semantic(_) => "semantic",
            Violation::Transitivity(_) => "transitivity",
        }
    }

    /// Canonical identity used for sorting and for comparing the symbolic
    /// checker against the brute-force oracle (witnesses may differ).
    pub fn key(&self) -> String {
        match self {
            Violation::Semantic(v) => format!("semantic|{}", v.disapproved.norm_id),
            Violation::Transitivity(v) => format!(
                "transitivity|{}|{}|{}|{}|{}|{}",
                v.context,
                v.attribute,
                v.tp.clone().unwrap_or_default(),
                profile_token(&v.subject_profile),
                profile_token(&v.sender_profile),
                profile_token(&v.recipient_profile),
            ),
        }
    }
}

pub fn profile_token(profile: &RoleProfile) -> String {
    let roles: Vec<&str> = profile.iter().map(|r| r.as_str()).collect();
    format!("{{{}}}", roles.join(","))
}

/// How transmission principles are matched when composing hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpMatchPolicy {
    /// Hops and the direct flow must share one transmission principle.
    Exact,
    /// Transmission principles are ignored during composition.
    Ignore,
}

impl TpMatchPolicy {
    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "exact" => Some(TpMatchPolicy::Exact),
            "ignore" => Some(TpMatchPolicy::Ignore),
            _ => None,
        }
    }
}

/// Replays a semantic violation: its witness facts plus the approved rules
/// must derive the disapproved flow.
pub fn replay_semantic(
    violation: &SemanticViolation,
    approved: &[Rule],
) -> Result<bool, VerifierError> {
    let program = DatalogProgram::new(violation.witness.inrole_facts(), approved.to_vec())?;
    let fixpoint = evaluate(&program);
    Ok(fixpoint.contains("allowed", &violation.witness.flow_args()))
}

/// Replays a transitivity violation: every hop must be derivable and the
/// direct composite flow must not be, for any transmission principle under
/// the ignore policy.
pub fn replay_transitivity(
    violation: &TransitivityViolation,
    approved: &[Rule],
    schema: &ContextSchema,
) -> Result<bool, VerifierError> {
    let ctx = &violation.context;
    let mut nodes: Vec<(String, &RoleProfile)> = Vec::new();
    if let Some(first) = violation.chain.first() {
        nodes.push(("n0".to_string(), &first.from));
    } else {
        return Ok(false);
    }
    for (i, hop) in violation.chain.iter().enumerate() {
        nodes.push((format!("n{}", i + 1), &hop.to));
    }
    let subject = ("subj".to_string(), &violation.subject_profile);
    let mut facts = Vec::new();
    for (name, profile) in nodes.iter().chain(std::iter::once(&subject)) {
        for role in profile.iter() {
            facts.push(Fact::new(
                "inrole",
                vec![ctx.clone(), name.clone(), role.clone()],
            ));
        }
    }
    facts.sort();
    facts.dedup();
    let program = DatalogProgram::new(facts, approved.to_vec())?;
    let fixpoint = evaluate(&program);
    for (i, hop) in violation.chain.iter().enumerate() {
        let args = vec![
            ctx.clone(),
            nodes[i].0.clone(),
            nodes[i + 1].0.clone(),
            subject.0.clone(),
            violation.attribute.clone(),
            hop.tp.clone(),
        ];
        if !fixpoint.contains("allowed", &args) {
            return Ok(false);
        }
    }
    let direct_tps: Vec<String> = match &violation.tp {
        Some(tp) => vec![tp.clone()],
        None => schema
            .transmission_principles
            .iter()
            .map(|t| t.id.clone())
            .collect(),
    };
    let last = nodes.len() - 1;
    for tp in direct_tps {
        let args = vec![
            ctx.clone(),
            nodes[0].0.clone(),
            nodes[last].0.clone(),
            subject.0.clone(),
            violation.attribute.clone(),
            tp,
        ];
        if fixpoint.contains("allowed", &args) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Validates a norm's vocabulary against the schema.
pub(crate) fn check_norm_vocabulary(
    view: &NormView,
    schema: &ContextSchema,
) -> Result<(), VerifierError> {
    let err = |value: &str| VerifierError::UnknownVocabulary {
        norm_id: view.norm_id.clone(),
        value: value.to_string(),
    };
    if view.context != schema.context_id {
        return Err(err(&view.context));
    }
    for role in [&view.sender_role, &view.recipient_role] {
        if !schema.has_role(role) {
            return Err(err(role));
        }
    }
    if let SubjectRelation::InRole(role) = &view.subject {
        if !schema.has_role(role) {
            return Err(err(role));
        }
    }
    if schema.attribute(&view.attribute).is_none() {
        return Err(err(&view.attribute));
    }
    if schema.transmission_principle(&view.tp).is_none() {
        return Err(err(&view.tp));
    }
    Ok(())
}
