//! Context schemas: role/attribute/transmission-principle vocabularies and
//! the role ontology (implications, disjointness) that generation,
//! compilation, and verification all share.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema parse error: {0}")]
    Parse(String),
    #[error("duplicate {kind} identifier `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("identifier `{id}` is not a lowercase token")]
    BadIdentifier { id: String },
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown transmission principle `{0}`")]
    UnknownTp(String),
    #[error("role implication cycle through `{0}`")]
    ImplicationCycle(String),
    #[error("roles `{0}` and `{1}` are declared disjoint but related by implication")]
    ContradictoryOntology(String, String),
    #[error("invalid subject relation `{0}`")]
    BadSubjectRelation(String),
}

/// How a norm constrains the subject of the information flow.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubjectRelation {
    /// Subject is the recipient of the flow (`Subj = Recp`).
    Recipient,
    /// Subject is the sender of the flow (`Subj = Sndr`).
    Sender,
    /// Subject is any actor holding the given role.
    InRole(String),
    /// Subject is unconstrained.
    Unconstrained,
}

impl SubjectRelation {
    /// Canonical token form used in schema documents and exports.
    pub fn token(&self) -> String {
        match self {
            SubjectRelation::Recipient => "subject_is_recipient".to_string(),
            SubjectRelation::Sender => "subject_is_sender".to_string(),
            SubjectRelation::InRole(r) => format!("subject_in_role:{r}"),
            SubjectRelation::Unconstrained => "unconstrained".to_string(),
        }
    }

    pub fn parse(token: &str) -> Result<Self, SchemaError> {
        match token {
            "subject_is_recipient" => Ok(SubjectRelation::Recipient),
            "subject_is_sender" => Ok(SubjectRelation::Sender),
            "unconstrained" => Ok(SubjectRelation::Unconstrained),
            _ => match token.strip_prefix("subject_in_role:") {
                Some(role) if !role.is_empty() => Ok(SubjectRelation::InRole(role.to_string())),
                _ => Err(SchemaError::BadSubjectRelation(token.to_string())),
            },
        }
    }
}

impl std::fmt::Display for SubjectRelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.token())
    }
}

/// Role implications and disjointness constraints for one context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoleOntology {
    /// Pairs (subrole, superrole): every actor in subrole is also in superrole.
    pub implications: BTreeSet<(String, String)>,
    /// Unordered pairs of roles no actor may hold simultaneously.
    pub disjoint_pairs: BTreeSet<(String, String)>,
}

impl RoleOntology {
    pub fn empty() -> Self {
        Self::default()
    }

    fn add_disjoint(&mut self, a: &str, b: &str) {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        self.disjoint_pairs.insert((x.to_string(), y.to_string()));
    }

    pub fn is_disjoint(&self, a: &str, b: &str) -> bool {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        self.disjoint_pairs
            .contains(&(x.to_string(), y.to_string()))
    }
}

/// A vocabulary item: logic identifier plus its question-rendering fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabItem {
    pub id: String,
    pub render: String,
}

/// A transmission principle: identifier, rendering fragment, and whether the
/// flow is withheld until a consent control message is published.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmissionPrinciple {
    pub id: String,
    pub render: String,
    pub conditional: bool,
}

/// Vocabularies and ontology for a single context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSchema {
    pub context_id: String,
    pub roles: Vec<VocabItem>,
    pub attributes: Vec<VocabItem>,
    pub transmission_principles: Vec<TransmissionPrinciple>,
    pub sender_roles: Vec<String>,
    pub recipient_roles: Vec<String>,
    pub subject_relations: Vec<SubjectRelation>,
    pub ontology: RoleOntology,
}

// ---------------------------------------------------------------------------
// Document format
// ---------------------------------------------------------------------------

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum VocabDoc {
    Bare(String),
    Full { id: String, render: String },
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum TpDoc {
    Bare(String),
    Full {
        id: String,
        render: String,
        #[serde(default)]
        conditional: bool,
    },
}

#[derive(Deserialize, Serialize, Default)]
struct OntologyDoc {
    #[serde(default)]
    implications: Vec<(String, String)>,
    #[serde(default)]
    disjoint: Vec<(String, String)>,
}

#[derive(Deserialize, Serialize)]
struct SchemaDoc {
    context: String,
    roles: Vec<VocabDoc>,
    attributes: Vec<VocabDoc>,
    transmission_principles: Vec<TpDoc>,
    sender_roles: Vec<String>,
    recipient_roles: Vec<String>,
    subject_relations: Vec<String>,
    #[serde(default)]
    ontology: OntologyDoc,
}

fn is_token(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Parses and validates a schema document (JSON).
pub fn load_schema(source_text: &str) -> Result<ContextSchema, SchemaError> {
    let doc: SchemaDoc =
        serde_json::from_str(source_text).map_err(|e| SchemaError::Parse(e.to_string()))?;

    let roles = doc
        .roles
        .into_iter()
        .map(|v| match v {
            VocabDoc::Bare(id) => VocabItem {
                render: id.clone(),
                id,
            },
            VocabDoc::Full { id, render } => VocabItem { id, render },
        })
        .collect::<Vec<_>>();
    let attributes = doc
        .attributes
        .into_iter()
        .map(|v| match v {
            VocabDoc::Bare(id) => VocabItem {
                render: id.clone(),
                id,
            },
            VocabDoc::Full { id, render } => VocabItem { id, render },
        })
        .collect::<Vec<_>>();
    let transmission_principles = doc
        .transmission_principles
        .into_iter()
        .map(|v| match v {
            TpDoc::Bare(id) => TransmissionPrinciple {
                render: id.clone(),
                id,
                conditional: false,
            },
            TpDoc::Full {
                id,
                render,
                conditional,
            } => TransmissionPrinciple {
                id,
                render,
                conditional,
            },
        })
        .collect::<Vec<_>>();

    let mut ontology = RoleOntology::empty();
    for (sub, sup) in doc.ontology.implications {
        ontology.implications.insert((sub, sup));
    }
    for (a, b) in doc.ontology.disjoint {
        ontology.add_disjoint(&a, &b);
    }

    let subject_relations = doc
        .subject_relations
        .iter()
        .map(|t| SubjectRelation::parse(t))
        .collect::<Result<Vec<_>, _>>()?;

    let schema = ContextSchema {
        context_id: doc.context,
        roles,
        attributes,
        transmission_principles,
        sender_roles: doc.sender_roles,
        recipient_roles: doc.recipient_roles,
        subject_relations,
        ontology,
    };
    schema.validate()?;
    Ok(schema)
}

impl ContextSchema {
    pub fn validate(&self) -> Result<(), SchemaError> {
        if !is_token(&self.context_id) {
            return Err(SchemaError::BadIdentifier {
                id: self.context_id.clone(),
            });
        }
        check_unique("role", self.roles.iter().map(|r| r.id.as_str()))?;
        check_unique("attribute", self.attributes.iter().map(|a| a.id.as_str()))?;
        check_unique(
            "transmission principle",
            self.transmission_principles.iter().map(|t| t.id.as_str()),
        )?;
        for id in self
            .roles
            .iter()
            .map(|r| &r.id)
            .chain(self.attributes.iter().map(|a| &a.id))
            .chain(self.transmission_principles.iter().map(|t| &t.id))
        {
            if !is_token(id) {
                return Err(SchemaError::BadIdentifier { id: id.clone() });
            }
        }

        let role_set: BTreeSet<&str> = self.roles.iter().map(|r| r.id.as_str()).collect();
        for r in self.sender_roles.iter().chain(self.recipient_roles.iter()) {
            if !role_set.contains(r.as_str()) {
                return Err(SchemaError::UnknownRole(r.clone()));
            }
        }
        for sr in &self.subject_relations {
            if let SubjectRelation::InRole(r) = sr {
                if !role_set.contains(r.as_str()) {
                    return Err(SchemaError::UnknownRole(r.clone()));
                }
            }
        }
        for (a, b) in self
            .ontology
            .implications
            .iter()
            .chain(self.ontology.disjoint_pairs.iter())
        {
            for r in [a, b] {
                if !role_set.contains(r.as_str()) {
                    return Err(SchemaError::UnknownRole(r.clone()));
                }
            }
        }

        self.check_acyclic_implications()?;

        // A disjoint pair must not be connected by implications in either
        // direction; closure({a}) meeting b (or vice versa) is contradictory.
        for (a, b) in &self.ontology.disjoint_pairs {
            let ca = role_closure(&self.ontology, &[a.clone()].into_iter().collect())
                .expect("roles validated");
            let cb = role_closure(&self.ontology, &[b.clone()].into_iter().collect())
                .expect("roles validated");
            if ca.contains(b) || cb.contains(a) {
                return Err(SchemaError::ContradictoryOntology(a.clone(), b.clone()));
            }
        }
        Ok(())
    }

    fn check_acyclic_implications(&self) -> Result<(), SchemaError> {
        // Self-loops are cycles too.
        let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (sub, sup) in &self.ontology.implications {
            succ.entry(sub.as_str()).or_default().push(sup.as_str());
        }
        // Iterative DFS with colors.
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        let mut color: BTreeMap<&str, Color> = BTreeMap::new();
        for role in self.roles.iter().map(|r| r.id.as_str()) {
            color.insert(role, Color::White);
        }
        for start in self.roles.iter().map(|r| r.id.as_str()) {
            if color[start] != Color::White {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            color.insert(start, Color::Gray);
            while let Some((node, idx)) = stack.pop() {
                let next = succ.get(node).and_then(|s| s.get(idx)).copied();
                match next {
                    Some(n) => {
                        stack.push((node, idx + 1));
                        match color[n] {
                            Color::Gray => return Err(SchemaError::ImplicationCycle(n.to_string())),
                            Color::White => {
                                color.insert(n, Color::Gray);
                                stack.push((n, 0));
                            }
                            Color::Black => {}
                        }
                    }
                    None => {
                        color.insert(node, Color::Black);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn role(&self, id: &str) -> Option<&VocabItem> {
        self.roles.iter().find(|r| r.id == id)
    }

    pub fn attribute(&self, id: &str) -> Option<&VocabItem> {
        self.attributes.iter().find(|a| a.id == id)
    }

    pub fn transmission_principle(&self, id: &str) -> Option<&TransmissionPrinciple> {
        self.transmission_principles.iter().find(|t| t.id == id)
    }

    pub fn has_role(&self, id: &str) -> bool {
        self.role(id).is_some()
    }

    /// Index of a role in the schema's role list (canonical ordering).
    pub fn role_index(&self, id: &str) -> Option<usize> {
        self.roles.iter().position(|r| r.id == id)
    }
}

fn check_unique<'a>(
    kind: &'static str,
    ids: impl Iterator<Item = &'a str>,
) -> Result<(), SchemaError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(SchemaError::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

/// Smallest superset of `base` closed under the ontology's implications.
pub fn role_closure(
    ontology: &RoleOntology,
    base: &BTreeSet<String>,
) -> Result<BTreeSet<String>, SchemaError> {
    let mut closed = base.clone();
    let mut frontier: Vec<String> = base.iter().cloned().collect();
    while let Some(role) = frontier.pop() {
        for (sub, sup) in &ontology.implications {
            if *sub == role && closed.insert(sup.clone()) {
                frontier.push(sup.clone());
            }
        }
    }
    Ok(closed)
}

/// Checked variant: every base role must exist in the schema.
pub fn role_closure_checked(
    schema: &ContextSchema,
    base: &BTreeSet<String>,
) -> Result<BTreeSet<String>, SchemaError> {
    for r in base {
        if !schema.has_role(r) {
            return Err(SchemaError::UnknownRole(r.clone()));
        }
    }
    role_closure(&schema.ontology, base)
}

/// True iff `roles` is implication-closed and contains no disjoint pair.
pub fn profile_consistent(ontology: &RoleOntology, roles: &BTreeSet<String>) -> bool {
    let closed = role_closure(ontology, roles).expect("closure is total");
    if closed != *roles {
        return false;
    }
    for a in roles {
        for b in roles {
            if a < b && ontology.is_disjoint(a, b) {
                return false;
            }
        }
    }
    true
}
