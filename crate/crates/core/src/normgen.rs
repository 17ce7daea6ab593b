//! Candidate-norm enumeration, expert restrictions, question rendering, and
//! survey batching.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{ContextSchema, SchemaError, SubjectRelation};

#[derive(Debug, Error)]
pub enum NormGenError {
    #[error("restriction parse error: {0}")]
    RestrictionParse(String),
    #[error("restriction references unknown {field} value `{value}`")]
    UnknownRestrictionValue { field: String, value: String },
    #[error("unknown restriction field `{0}`")]
    UnknownRestrictionField(String),
    #[error("missing rendering text for `{0}`")]
    MissingRender(String),
    #[error("unknown placeholder `{{{0}}}` in rendering template")]
    UnknownPlaceholder(String),
    #[error("batch count {batch_count} exceeds question count {questions}")]
    TooManyBatches { batch_count: usize, questions: usize },
    #[error("batch count must be at least 1")]
    ZeroBatches,
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// One CI norm candidate: a 5-tuple within a context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CandidateNorm {
    pub context: String,
    pub sender_role: String,
    pub recipient_role: String,
    pub subject_relation: SubjectRelation,
    pub attribute: String,
    pub transmission_principle: String,
    pub norm_id: String,
}

impl CandidateNorm {
    pub fn new(
        context: &str,
        sender_role: &str,
        recipient_role: &str,
        subject_relation: SubjectRelation,
        attribute: &str,
        transmission_principle: &str,
    ) -> Self {
        let norm_id = norm_id(
            context,
            sender_role,
            recipient_role,
            &subject_relation,
            attribute,
            transmission_principle,
        );
        CandidateNorm {
            context: context.to_string(),
            sender_role: sender_role.to_string(),
            recipient_role: recipient_role.to_string(),
            subject_relation,
            attribute: attribute.to_string(),
            transmission_principle: transmission_principle.to_string(),
            norm_id,
        }
    }
}

/// Stable content hash of the canonical field tuple; joins questions with
/// response files across runs.
pub fn norm_id(
    context: &str,
    sender_role: &str,
    recipient_role: &str,
    subject_relation: &SubjectRelation,
    attribute: &str,
    transmission_principle: &str,
) -> String {
    let canonical = format!(
        "{context}|{sender_role}|{recipient_role}|{}|{attribute}|{transmission_principle}",
        subject_relation.token()
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Conjunction of field-value exclusions; a candidate matching every pair is
/// removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restriction {
    pub pairs: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RestrictionsDoc {
    restrictions: Vec<BTreeMap<String, String>>,
}

/// Parses a restrictions document (JSON: `{"restrictions": [{field: value}]}`).
pub fn load_restrictions(source_text: &str) -> Result<Vec<Restriction>, NormGenError> {
    let doc: RestrictionsDoc = serde_json::from_str(source_text)
        .map_err(|e| NormGenError::RestrictionParse(e.to_string()))?;
    Ok(doc
        .restrictions
        .into_iter()
        .map(|pairs| Restriction { pairs })
        .collect())
}

const RESTRICTION_FIELDS: &[&str] = &[
    "context",
    "sender_role",
    "recipient_role",
    "subject_relation",
    "attribute",
    "transmission_principle",
];

fn validate_restriction(r: &Restriction, schema: &ContextSchema) -> Result<(), NormGenError> {
    for (field, value) in &r.pairs {
        if !RESTRICTION_FIELDS.contains(&field.as_str()) {
            return Err(NormGenError::UnknownRestrictionField(field.clone()));
        }
        let known = match field.as_str() {
            "context" => schema.context_id == *value,
            "sender_role" | "recipient_role" => schema.has_role(value),
            "attribute" => schema.attribute(value).is_some(),
            "transmission_principle" => schema.transmission_principle(value).is_some(),
            "subject_relation" => match SubjectRelation::parse(value) {
                Ok(SubjectRelation::InRole(role)) => schema.has_role(&role),
                Ok(_) => true,
                Err(_) => false,
            },
            _ => unreachable!(),
        };
        if !known {
            return Err(NormGenError::UnknownRestrictionValue {
                field: field.clone(),
                value: value.clone(),
            });
        }
    }
    Ok(())
}

fn norm_field(norm: &CandidateNorm, field: &str) -> String {
    match field {
        "context" => norm.context.clone(),
        "sender_role" => norm.sender_role.clone(),
        "recipient_role" => norm.recipient_role.clone(),
        "subject_relation" => norm.subject_relation.token(),
        "attribute" => norm.attribute.clone(),
        "transmission_principle" => norm.transmission_principle.clone(),
        _ => unreachable!(),
    }
}

/// Full cross product over the schema's vocabularies, in lexicographic order
/// following schema list order.
pub fn enumerate_candidates(schema: &ContextSchema) -> Vec<CandidateNorm> {
    let mut out = Vec::new();
    for sender in &schema.sender_roles {
        for recipient in &schema.recipient_roles {
            for subject in &schema.subject_relations {
                for attribute in &schema.attributes {
                    for tp in &schema.transmission_principles {
                        out.push(CandidateNorm::new(
                            &schema.context_id,
                            sender,
                            recipient,
                            subject.clone(),
                            &attribute.id,
                            &tp.id,
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Removes candidates matching any restriction; order preserved.
pub fn apply_restrictions(
    candidates: Vec<CandidateNorm>,
    restrictions: &[Restriction],
    schema: &ContextSchema,
) -> Result<Vec<CandidateNorm>, NormGenError> {
    for r in restrictions {
        validate_restriction(r, schema)?;
    }
    Ok(candidates
        .into_iter()
        .filter(|c| {
            !restrictions.iter().any(|r| {
                r.pairs
                    .iter()
                    .all(|(field, value)| norm_field(c, field) == *value)
            })
        })
        .collect())
}

/// A candidate norm paired with its rendered question text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub norm: CandidateNorm,
    pub text: String,
}

fn subject_render(norm: &CandidateNorm, schema: &ContextSchema) -> Result<String, NormGenError> {
    let role_render = |id: &str| -> Result<String, NormGenError> {
        schema
            .role(id)
            .map(|r| r.render.clone())
            .ok_or_else(|| NormGenError::MissingRender(id.to_string()))
    };
    match &norm.subject_relation {
        SubjectRelation::Recipient => role_render(&norm.recipient_role),
        SubjectRelation::Sender => role_render(&norm.sender_role),
        SubjectRelation::InRole(r) => role_render(r),
        SubjectRelation::Unconstrained => Ok("subject".to_string()),
    }
}

/// Substitutes `{sender}`, `{recipient}`, `{subject}` placeholders inside a
/// transmission-principle fragment.
fn expand_tp_fragment(
    fragment: &str,
    sender: &str,
    recipient: &str,
    subject: &str,
) -> Result<String, NormGenError> {
    let mut out = String::with_capacity(fragment.len());
    let mut rest = fragment;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after
            .find('}')
            .ok_or_else(|| NormGenError::UnknownPlaceholder(after.to_string()))?;
        let name = &after[..end];
        match name {
            "sender" => out.push_str(sender),
            "recipient" => out.push_str(recipient),
            "subject" => out.push_str(subject),
            other => return Err(NormGenError::UnknownPlaceholder(other.to_string())),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Instantiates the question template for one candidate norm.
///
/// Template: `Is it acceptable for the <sender> to share the <subject>'s
/// <attribute> with the <recipient> <transmission principle>?`; an empty
/// principle fragment leaves no trailing space before the question mark.
pub fn render_question(
    norm: &CandidateNorm,
    schema: &ContextSchema,
) -> Result<String, NormGenError> {
    let sender = schema
        .role(&norm.sender_role)
        .map(|r| r.render.clone())
        .ok_or_else(|| NormGenError::MissingRender(norm.sender_role.clone()))?;
    let recipient = schema
        .role(&norm.recipient_role)
        .map(|r| r.render.clone())
        .ok_or_else(|| NormGenError::MissingRender(norm.recipient_role.clone()))?;
    let attribute = schema
        .attribute(&norm.attribute)
        .map(|a| a.render.clone())
        .ok_or_else(|| NormGenError::MissingRender(norm.attribute.clone()))?;
    let tp_fragment = schema
        .transmission_principle(&norm.transmission_principle)
        .map(|t| t.render.clone())
        .ok_or_else(|| NormGenError::MissingRender(norm.transmission_principle.clone()))?;
    let subject = subject_render(norm, schema)?;
    let tp = expand_tp_fragment(&tp_fragment, &sender, &recipient, &subject)?;

    let body = format!(
        "Is it acceptable for the {sender} to share the {subject}'s {attribute} with the {recipient} {tp}"
    );
    Ok(format!("{}?", body.trim_end()))
}

/// Renders every candidate in order.
pub fn render_all(
    candidates: &[CandidateNorm],
    schema: &ContextSchema,
) -> Result<Vec<Question>, NormGenError> {
    candidates
        .iter()
        .map(|norm| {
            Ok(Question {
                norm: norm.clone(),
                text: render_question(norm, schema)?,
            })
        })
        .collect()
}

/// Seeded shuffle followed by a floor/ceil split into `batch_count` batches:
/// sizes differ by at most one and the union equals the input.
pub fn split_batches(
    questions: &[Question],
    batch_count: usize,
    seed: u64,
) -> Result<Vec<Vec<Question>>, NormGenError> {
    if batch_count == 0 {
        return Err(NormGenError::ZeroBatches);
    }
    if batch_count > questions.len() {
        return Err(NormGenError::TooManyBatches {
            batch_count,
            questions: questions.len(),
        });
    }
    let mut shuffled: Vec<Question> = questions.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates, explicit so the permutation is pinned to the seed.
    for i in (1..shuffled.len()).rev() {
        let j = rng.gen_range(0..=i);
        shuffled.swap(i, j);
    }
    let n = shuffled.len();
    let base = n / batch_count;
    let remainder = n % batch_count;
    let mut batches = Vec::with_capacity(batch_count);
    let mut cursor = 0;
    for b in 0..batch_count {
        let size = base + usize::from(b < remainder);
        batches.push(shuffled[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(batches)
}
