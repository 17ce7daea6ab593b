//! Semantic consistency: no disapproved norm's flow may be derivable from
//! the approved rules under the role ontology. Decided by enumerating actor
//! identification patterns and role-profile assignments.

use std::collections::BTreeMap;

use super::{
    build_profiles, check_norm_vocabulary, decompile_rules, ActorWitness, FlowWitness, NormView,
    RoleProfile, SemanticViolation, VerifierError, Violation,
};
use crate::logic::Rule;
use crate::normgen::CandidateNorm;
use crate::schema::{ContextSchema, SubjectRelation};

/// Actor slots of a disapproved norm's flow pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Sender,
    Recipient,
    Subject,
}

/// How the subject slot resolves for a given norm: merged into an endpoint
/// or standing alone.
fn slots_of(subject: &SubjectRelation) -> Vec<Slot> {
    match subject {
        SubjectRelation::Recipient | SubjectRelation::Sender => vec![Slot::Sender, Slot::Recipient],
        _ => vec![Slot::Sender, Slot::Recipient, Slot::Subject],
    }
}

/// Partitions of the slot list into identification blocks, most separated
/// first so the canonical witness prefers distinct actors.
fn partitions(slots: &[Slot]) -> Vec<Vec<Vec<Slot>>> {
    match slots.len() {
        2 => vec![
            vec![vec![slots[0]], vec![slots[1]]],
            vec![vec![slots[0], slots[1]]],
        ],
        3 => vec![
            vec![vec![slots[0]], vec![slots[1]], vec![slots[2]]],
            vec![vec![slots[0], slots[1]], vec![slots[2]]],
            vec![vec![slots[0], slots[2]], vec![slots[1]]],
            vec![vec![slots[1], slots[2]], vec![slots[0]]],
            vec![vec![slots[0], slots[1], slots[2]]],
        ],
        _ => unreachable!("flow patterns have two or three slots"),
    }
}

struct Assignment<'a> {
    /// Block index per slot kind.
    block_of_sender: usize,
    block_of_recipient: usize,
    block_of_subject: usize,
    profiles: Vec<&'a RoleProfile>,
}

impl<'a> Assignment<'a> {
    fn sender_profile(&self) -> &RoleProfile {
        self.profiles[self.block_of_sender]
    }
    fn recipient_profile(&self) -> &RoleProfile {
        self.profiles[self.block_of_recipient]
    }
    fn subject_profile(&self) -> &RoleProfile {
        self.profiles[self.block_of_subject]
    }

    /// Does an approved norm derive this flow?
    fn derivable_via(&self, approved: &NormView) -> bool {
        if !self.sender_profile().contains(&approved.sender_role)
            || !self.recipient_profile().contains(&approved.recipient_role)
        {
            return false;
        }
        match &approved.subject {
            SubjectRelation::Recipient => self.block_of_subject == self.block_of_recipient,
            SubjectRelation::Sender => self.block_of_subject == self.block_of_sender,
            SubjectRelation::InRole(role) => self.subject_profile().contains(role),
            SubjectRelation::Unconstrained => true,
        }
    }
}

/// For each disapproved norm, searches all profile assignments of its flow
/// pattern for one the approved rules derive; reports one violation (with
/// the first witness found, in canonical order) per offending norm.
pub fn check_semantic_consistency(
    approved: &[Rule],
    disapproved: &[CandidateNorm],
    schema: &ContextSchema,
    k: usize,
) -> Result<Vec<Violation>, VerifierError> {
    let profiles = build_profiles(schema, k)?;
    let approved_views = decompile_rules(approved)?;
    for view in &approved_views {
        check_norm_vocabulary(view, schema)?;
    }
    let mut violations = Vec::new();
    for norm in disapproved {
        let view = NormView::from_norm(norm);
        check_norm_vocabulary(&view, schema)?;
        if let Some(violation) = find_witness(&view, &approved_views, &profiles) {
            violations.push(Violation::Semantic(violation));
        }
    }
    violations.sort_by_key(|v| v.key());
    Ok(violations)
}

fn find_witness(
    disapproved: &NormView,
    approved: &[NormView],
    profiles: &[RoleProfile],
) -> Option<SemanticViolation> {
    let candidates: Vec<&NormView> = approved
        .iter()
        .filter(|a| {
            a.context == disapproved.context
                && a.attribute == disapproved.attribute
                && a.tp == disapproved.tp
        })
        .collect();
    if candidates.is_empty() {
        return None;
    }

    let slots = slots_of(&disapproved.subject);
    for partition in partitions(&slots) {
        // Per-block role requirements from the disapproved side.
        let block_of = |slot: Slot| -> usize {
            partition
                .iter()
                .position(|block| block.contains(&slot))
                .expect("slot present")
        };
        let block_of_sender = block_of(Slot::Sender);
        let block_of_recipient = block_of(Slot::Recipient);
        let block_of_subject = match disapproved.subject {
            SubjectRelation::Recipient => block_of_recipient,
            SubjectRelation::Sender => block_of_sender,
            _ => block_of(Slot::Subject),
        };
        let mut required: Vec<Vec<&str>> = vec![Vec::new(); partition.len()];
        required[block_of_sender].push(&disapproved.sender_role);
        required[block_of_recipient].push(&disapproved.recipient_role);
        if let SubjectRelation::InRole(role) = &disapproved.subject {
            required[block_of_subject].push(role);
        }

        // Candidate profiles per block, pruned by the requirements.
        let options: Vec<Vec<&RoleProfile>> = required
            .iter()
            .map(|roles| {
                profiles
                    .iter()
                    .filter(|p| roles.iter().all(|r| p.contains(*r)))
                    .collect()
            })
            .collect();
        if options.iter().any(|o| o.is_empty()) {
            continue;
        }

        let mut pick = vec![0usize; partition.len()];
        'assignments: loop {
            let assignment = Assignment {
                block_of_sender,
                block_of_recipient,
                block_of_subject,
                profiles: pick
                    .iter()
                    .enumerate()
                    .map(|(b, &i)| options[b][i])
                    .collect(),
            };
            let implicated: Vec<String> = candidates
                .iter()
                .filter(|a| assignment.derivable_via(a))
                .map(|a| a.norm_id.clone())
                .collect();
            if !implicated.is_empty() {
                return Some(build_violation(
                    disapproved,
                    &assignment,
                    implicated,
                ));
            }
            // Advance the odometer over profile options.
            for b in (0..pick.len()).rev() {
                pick[b] += 1;
                if pick[b] < options[b].len() {
                    continue 'assignments;
                }
                pick[b] = 0;
            }
            break;
        }
    }
    None
}

fn build_violation(
    disapproved: &NormView,
    assignment: &Assignment<'_>,
    implicated: Vec<String>,
) -> SemanticViolation {
    // One actor name per block, in block order.
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for (i, block) in [
        assignment.block_of_sender,
        assignment.block_of_recipient,
        assignment.block_of_subject,
    ]
    .iter()
    .enumerate()
    {
        let next = format!("a{}", names.len() + 1);
        names.entry(*block).or_insert(next);
        let _ = i;
    }
    let actor = |block: usize, profile: &RoleProfile| ActorWitness {
        name: names[&block].clone(),
        profile: profile.clone(),
    };
    let witness = FlowWitness {
        context: disapproved.context.clone(),
        sender: actor(assignment.block_of_sender, assignment.sender_profile()),
        recipient: actor(
            assignment.block_of_recipient,
            assignment.recipient_profile(),
        ),
        subject: actor(assignment.block_of_subject, assignment.subject_profile()),
        attribute: disapproved.attribute.clone(),
        tp: disapproved.tp.clone(),
    };
    SemanticViolation {
        disapproved: disapproved.clone(),
        witness,
        implicated,
    }
}
