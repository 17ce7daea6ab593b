//! SMT-LIB v2 export of the completion formula plus a negated meta-property,
//! so an external solver can cross-check the in-crate decision procedure.
//! A `sat` answer means the property is violated and the model is a witness
//! flow. Artifact correctness never depends on this path.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{TpMatchPolicy, VerifierError};
use crate::logic::{iff_completion, BodyAtom, Rule, Term};
use crate::normgen::CandidateNorm;
use crate::schema::{ContextSchema, SubjectRelation};

/// Exception disjuncts on the right-hand side of an exclusion property.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExceptionClause {
    SubjectIsRecipient,
    RecipientInRole(String),
}

/// "No flow shaped like this is allowed, unless one of the exceptions
/// holds." With an empty exception list this is the exclusion of one
/// disapproved norm; with exceptions it expresses properties like the
/// professor/grade example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionProperty {
    pub context: String,
    pub sender_role: String,
    pub recipient_role: String,
    pub subject: SubjectRelation,
    pub attribute: String,
    /// `None` quantifies over the transmission principle.
    pub tp: Option<String>,
    pub unless: Vec<ExceptionClause>,
}

impl ExclusionProperty {
    pub fn from_disapproved(norm: &CandidateNorm) -> Self {
        ExclusionProperty {
            context: norm.context.clone(),
            sender_role: norm.sender_role.clone(),
            recipient_role: norm.recipient_role.clone(),
            subject: norm.subject_relation.clone(),
            attribute: norm.attribute.clone(),
            tp: Some(norm.transmission_principle.clone()),
            unless: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetaProperty {
    Exclusion(ExclusionProperty),
    TransitiveClosure { policy: TpMatchPolicy },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sort {
    Ctx,
    Actor,
    Role,
    Attr,
    Tp,
}

impl Sort {
    fn name(self) -> &'static str {
        match self {
            Sort::Ctx => "Ctx",
            Sort::Actor => "Actor",
            Sort::Role => "Role",
            Sort::Attr => "Attr",
            Sort::Tp => "Tp",
        }
    }
}

const ALLOWED_SORTS: [Sort; 6] = [Sort::Ctx, Sort::Actor, Sort::Actor, Sort::Actor, Sort::Attr, Sort::Tp];
const INROLE_SORTS: [Sort; 3] = [Sort::Ctx, Sort::Actor, Sort::Role];
const HEAD_SHORT: [&str; 6] = ["C", "Sn", "R", "Su", "A", "T"];

/// Emits the completion of the approved rules, the schema's ontology axioms,
/// and the negated property, as one SMT-LIB script ending in `(check-sat)`.
pub fn export_epr(
    approved: &[Rule],
    property: &MetaProperty,
    schema: &ContextSchema,
) -> Result<String, VerifierError> {
    let completion = iff_completion("allowed", 6, approved)?;
    let mut out = String::new();
    let _ = writeln!(out, "; privacy-logic consistency query");
    let _ = writeln!(out, "; sat = property violated, model = witness flow");
    let _ = writeln!(out, "(set-logic UF)");
    for sort in [Sort::Ctx, Sort::Actor, Sort::Role, Sort::Attr, Sort::Tp] {
        let _ = writeln!(out, "(declare-sort {} 0)", sort.name());
    }
    let _ = writeln!(out, "(declare-fun inrole (Ctx Actor Role) Bool)");
    let _ = writeln!(out, "(declare-fun allowed (Ctx Actor Actor Actor Attr Tp) Bool)");

    // Vocabulary constants, distinct within each sort.
    let _ = writeln!(out, "(declare-const {} Ctx)", schema.context_id);
    let declare_group = |ids: Vec<&str>, sort: Sort, out: &mut String| {
        for id in &ids {
            let _ = writeln!(out, "(declare-const {} {})", id, sort.name());
        }
        if ids.len() > 1 {
            let _ = writeln!(out, "(assert (distinct {}))", ids.join(" "));
        }
    };
    declare_group(
        schema.roles.iter().map(|r| r.id.as_str()).collect(),
        Sort::Role,
        &mut out,
    );
    declare_group(
        schema.attributes.iter().map(|a| a.id.as_str()).collect(),
        Sort::Attr,
        &mut out,
    );
    declare_group(
        schema
            .transmission_principles
            .iter()
            .map(|t| t.id.as_str())
            .collect(),
        Sort::Tp,
        &mut out,
    );

    let _ = writeln!(out, "; role ontology");
    for (sub, sup) in &schema.ontology.implications {
        let _ = writeln!(
            out,
            "(assert (forall ((C Ctx) (X Actor)) (=> (inrole C X {sub}) (inrole C X {sup}))))"
        );
    }
    for (a, b) in &schema.ontology.disjoint_pairs {
        let _ = writeln!(
            out,
            "(assert (forall ((C Ctx) (X Actor)) (not (and (inrole C X {a}) (inrole C X {b})))))"
        );
    }

    let _ = writeln!(out, "; completion of the approved rules");
    let mut completion_text = String::new();
    let binders: Vec<String> = HEAD_SHORT
        .iter()
        .zip(ALLOWED_SORTS)
        .map(|(v, s)| format!("({} {})", v, s.name()))
        .collect();
    let _ = write!(
        completion_text,
        "(assert (forall ({}) (= (allowed {}) ",
        binders.join(" "),
        HEAD_SHORT.join(" ")
    );
    if completion.disjuncts.is_empty() {
        let _ = write!(completion_text, "false");
    } else {
        let rename: BTreeMap<&str, &str> = completion
            .head_vars
            .iter()
            .map(|v| v.as_str())
            .zip(HEAD_SHORT)
            .collect();
        let mut disjunct_texts = Vec::new();
        for d in &completion.disjuncts {
            // Existential variables: keep their names unless they collide
            // with the short head names.
            let mut exists_rename: BTreeMap<&str, String> = BTreeMap::new();
            for (i, v) in d.exists.iter().enumerate() {
                let name = if HEAD_SHORT.contains(&v.as_str()) {
                    format!("E{}", i + 1)
                } else {
                    v.clone()
                };
                exists_rename.insert(v.as_str(), name);
            }
            let term_text = |t: &Term| -> String {
                match t {
                    Term::Constant(c) => c.clone(),
                    Term::Variable(v) => match rename.get(v.as_str()) {
                        Some(short) => short.to_string(),
                        None => exists_rename
                            .get(v.as_str())
                            .cloned()
                            .unwrap_or_else(|| v.clone()),
                    },
                }
            };
            let mut sorts: BTreeMap<String, Sort> = BTreeMap::new();
            let mut conjuncts = Vec::new();
            for atom in &d.atoms {
                match atom {
                    BodyAtom::Pred(a) => {
                        let arg_sorts: &[Sort] = match a.predicate.as_str() {
                            "inrole" => &INROLE_SORTS,
                            "allowed" => &ALLOWED_SORTS,
                            _ => &[],
                        };
                        for (arg, sort) in a.args.iter().zip(arg_sorts) {
                            if let Term::Variable(v) = arg {
                                if let Some(name) = exists_rename.get(v.as_str()) {
                                    sorts.insert(name.clone(), *sort);
                                }
                            }
                        }
                        let args: Vec<String> = a.args.iter().map(&term_text).collect();
                        conjuncts.push(format!("({} {})", a.predicate, args.join(" ")));
                    }
                    BodyAtom::Eq(l, r) => {
                        conjuncts.push(format!("(= {} {})", term_text(l), term_text(r)));
                    }
                }
            }
            let body = match conjuncts.len() {
                0 => "true".to_string(),
                1 => conjuncts[0].clone(),
                _ => format!("(and {})", conjuncts.join(" ")),
            };
            let text = if d.exists.is_empty() {
                body
            } else {
                let binders: Vec<String> = d
                    .exists
                    .iter()
                    .map(|v| {
                        let name = &exists_rename[v.as_str()];
                        let sort = sorts.get(name).copied().unwrap_or(Sort::Actor);
                        format!("({} {})", name, sort.name())
                    })
                    .collect();
                format!("(exists ({}) {})", binders.join(" "), body)
            };
            disjunct_texts.push(text);
        }
        if disjunct_texts.len() == 1 {
            let _ = write!(completion_text, "{}", disjunct_texts[0]);
        } else {
            let _ = write!(completion_text, "(or {})", disjunct_texts.join(" "));
        }
    }
    let _ = writeln!(completion_text, ")))");
    out.push_str(&completion_text);

    let _ = writeln!(out, "; negated property");
    out.push_str(&property_assert(property, schema));
    let _ = writeln!(out, "(check-sat)");
    let _ = writeln!(out, "(get-model)");
    Ok(out)
}

fn property_assert(property: &MetaProperty, schema: &ContextSchema) -> String {
    match property {
        MetaProperty::Exclusion(p) => {
            let ctx = &schema.context_id;
            let mut binders = vec!["(Sn Actor)", "(R Actor)", "(Su Actor)"]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>();
            let tp_term = match &p.tp {
                Some(tp) => tp.clone(),
                None => {
                    binders.push("(T Tp)".to_string());
                    "T".to_string()
                }
            };
            let mut lhs = vec![
                format!("(inrole {ctx} Sn {})", p.sender_role),
                format!("(inrole {ctx} R {})", p.recipient_role),
            ];
            match &p.subject {
                SubjectRelation::Recipient => lhs.push("(= Su R)".to_string()),
                SubjectRelation::Sender => lhs.push("(= Su Sn)".to_string()),
                SubjectRelation::InRole(role) => lhs.push(format!("(inrole {ctx} Su {role})")),
                SubjectRelation::Unconstrained => {}
            }
            lhs.push(format!(
                "(allowed {ctx} Sn R Su {} {})",
                p.attribute, tp_term
            ));
            let rhs = if p.unless.is_empty() {
                "false".to_string()
            } else {
                let clauses: Vec<String> = p
                    .unless
                    .iter()
                    .map(|c| match c {
                        ExceptionClause::SubjectIsRecipient => "(= Su R)".to_string(),
                        ExceptionClause::RecipientInRole(role) => {
                            format!("(inrole {ctx} R {role})")
                        }
                    })
                    .collect();
                if clauses.len() == 1 {
                    clauses[0].clone()
                } else {
                    format!("(or {})", clauses.join(" "))
                }
            };
            format!(
                "(assert (not (forall ({}) (=> (and {}) {}))))\n",
                binders.join(" "),
                lhs.join(" "),
                rhs
            )
        }
        MetaProperty::TransitiveClosure { policy } => {
            let distinct = "(distinct U X) (distinct U Y) (distinct U Z)";
            match policy {
                TpMatchPolicy::Exact => format!(
                    "(assert (not (forall ((C Ctx) (X Actor) (Y Actor) (Z Actor) (U Actor) (A Attr) (T Tp)) \
                     (=> (and (allowed C X Y U A T) (allowed C Y Z U A T) {distinct}) \
                     (allowed C X Z U A T)))))\n"
                ),
                TpMatchPolicy::Ignore => format!(
                    "(assert (not (forall ((C Ctx) (X Actor) (Y Actor) (Z Actor) (U Actor) (A Attr) (T1 Tp) (T2 Tp)) \
                     (=> (and (allowed C X Y U A T1) (allowed C Y Z U A T2) {distinct}) \
                     (exists ((T3 Tp)) (allowed C X Z U A T3))))))\n"
                ),
            }
        }
    }
}

/// S-expression, for reading back exported scripts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

impl std::fmt::Display for SExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SExpr::Atom(a) => write!(f, "{a}"),
            SExpr::List(items) => {
                write!(f, "(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Parses an SMT-LIB script into its top-level forms. Comments (`;` to end
/// of line) are skipped.
pub fn parse_script(text: &str) -> Result<Vec<SExpr>, VerifierError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' => tokens.push("(".to_string()),
            ')' => tokens.push(")".to_string()),
            c if c.is_whitespace() => {}
            c => {
                let mut atom = String::from(c);
                while let Some(&next) = chars.peek() {
                    if next.is_whitespace() || next == '(' || next == ')' || next == ';' {
                        break;
                    }
                    atom.push(next);
                    chars.next();
                }
                tokens.push(atom);
            }
        }
    }
    let mut stack: Vec<Vec<SExpr>> = vec![Vec::new()];
    for token in tokens {
        match token.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack
                    .pop()
                    .ok_or_else(|| VerifierError::SmtParse("unbalanced `)`".to_string()))?;
                let parent = stack
                    .last_mut()
                    .ok_or_else(|| VerifierError::SmtParse("unbalanced `)`".to_string()))?;
                parent.push(SExpr::List(done));
            }
            atom => stack
                .last_mut()
                .expect("stack never empty")
                .push(SExpr::Atom(atom.to_string())),
        }
    }
    if stack.len() != 1 {
        return Err(VerifierError::SmtParse("unbalanced `(`".to_string()));
    }
    Ok(stack.pop().unwrap())
}
