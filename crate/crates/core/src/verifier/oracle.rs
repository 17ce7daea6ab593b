//! Definitional oracle for the symbolic checks: materialize a small universe
//! with named actors for every role profile, run the Datalog engine, and
//! test the properties directly on the enumerated flows.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{
    build_profiles, decompile_rules, ActorWitness, ChainHop, FlowWitness, NormView, RoleProfile,
    SemanticViolation, TpMatchPolicy, TransitivityViolation, VerifierError, Violation,
};
use crate::logic::{evaluate, DatalogProgram, Fact, Rule};
use crate::normgen::CandidateNorm;
use crate::schema::{ContextSchema, SubjectRelation};

const MAX_ACTORS: usize = 240;

#[derive(Debug, Clone)]
pub enum OracleProperty {
    Semantic { disapproved: Vec<CandidateNorm> },
    Transitivity { policy: TpMatchPolicy },
}

struct Universe {
    actors: Vec<String>,
    profile_of: BTreeMap<String, RoleProfile>,
}

fn build_universe(
    profiles: &[RoleProfile],
    copies_per_profile: usize,
) -> Result<Universe, VerifierError> {
    let actors_wanted = profiles.len() * copies_per_profile;
    if copies_per_profile == 0 || copies_per_profile > 3 || actors_wanted > MAX_ACTORS {
        return Err(VerifierError::UniverseTooLarge {
            actors: actors_wanted,
            max: MAX_ACTORS.min(profiles.len() * 3),
        });
    }
    let mut actors = Vec::with_capacity(actors_wanted);
    let mut profile_of = BTreeMap::new();
    for (pi, profile) in profiles.iter().enumerate() {
        for c in 0..copies_per_profile {
            let name = format!("x{pi}_{c}");
            actors.push(name.clone());
            profile_of.insert(name, profile.clone());
        }
    }
    Ok(Universe { actors, profile_of })
}

fn universe_facts(universe: &Universe, context: &str) -> Vec<Fact> {
    let mut facts = Vec::new();
    for actor in &universe.actors {
        for role in &universe.profile_of[actor] {
            facts.push(Fact::new(
                "inrole",
                vec![context.to_string(), actor.clone(), role.clone()],
            ));
        }
    }
    facts
}

/// Instantiates actors for every profile (`copies_per_profile` of each, up
/// to three for sender/recipient/subject distinctness), materializes the
/// `inrole` facts, evaluates the approved rules, and checks the property
/// definitionally against the enumerated flows.
pub fn brute_force_oracle(
    approved: &[Rule],
    property: &OracleProperty,
    schema: &ContextSchema,
    k: usize,
    copies_per_profile: usize,
) -> Result<Vec<Violation>, VerifierError> {
    let profiles = build_profiles(schema, k)?;
    let views = decompile_rules(approved)?;
    let universe = build_universe(&profiles, copies_per_profile)?;
    let context = schema.context_id.clone();
    let program = DatalogProgram::new(universe_facts(&universe, &context), approved.to_vec())?;
    let fixpoint = evaluate(&program);
    let flows: Vec<&Vec<String>> = fixpoint
        .relation("allowed")
        .map(|rel| rel.iter().collect())
        .unwrap_or_default();

    let mut violations = match property {
        OracleProperty::Semantic { disapproved } => {
            semantic_violations(disapproved, &universe, &views, &flows, &context)
        }
        OracleProperty::Transitivity { policy } => {
            transitivity_violations(&universe, &views, &flows, &context, *policy)
        }
    };
    violations.sort_by_key(|v| v.key());
    Ok(violations)
}

fn semantic_violations(
    disapproved: &[CandidateNorm],
    universe: &Universe,
    views: &[NormView],
    flows: &[&Vec<String>],
    context: &str,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for norm in disapproved {
        if norm.context != context {
            continue;
        }
        let witness = flows.iter().find_map(|args| {
            let (ctx, sender, recipient, subject, attr, tp) =
                (&args[0], &args[1], &args[2], &args[3], &args[4], &args[5]);
            if ctx != &norm.context
                || attr != &norm.attribute
                || tp != &norm.transmission_principle
            {
                return None;
            }
            let sender_profile = universe.profile_of.get(sender)?;
            let recipient_profile = universe.profile_of.get(recipient)?;
            let subject_profile = universe.profile_of.get(subject)?;
            if !sender_profile.contains(&norm.sender_role)
                || !recipient_profile.contains(&norm.recipient_role)
            {
                return None;
            }
            let subject_ok = match &norm.subject_relation {
                SubjectRelation::Recipient => subject == recipient,
                SubjectRelation::Sender => subject == sender,
                SubjectRelation::InRole(role) => subject_profile.contains(role),
                SubjectRelation::Unconstrained => true,
            };
            if !subject_ok {
                return None;
            }
            Some(FlowWitness {
                context: ctx.clone(),
                sender: ActorWitness {
                    name: sender.clone(),
                    profile: sender_profile.clone(),
                },
                recipient: ActorWitness {
                    name: recipient.clone(),
                    profile: recipient_profile.clone(),
                },
                subject: ActorWitness {
                    name: subject.clone(),
                    profile: subject_profile.clone(),
                },
                attribute: attr.clone(),
                tp: tp.clone(),
            })
        });
        if let Some(witness) = witness {
            let implicated = views
                .iter()
                .filter(|v| derives_flow(v, universe, &witness))
                .map(|v| v.norm_id.clone())
                .collect();
            out.push(Violation::Semantic(SemanticViolation {
                disapproved: NormView::from_norm(norm),
                witness,
                implicated,
            }));
        }
    }
    out
}

fn derives_flow(view: &NormView, universe: &Universe, flow: &FlowWitness) -> bool {
    if view.context != flow.context || view.attribute != flow.attribute || view.tp != flow.tp {
        return false;
    }
    let profile = |name: &str| universe.profile_of.get(name);
    let Some(sp) = profile(&flow.sender.name) else {
        return false;
    };
    let Some(rp) = profile(&flow.recipient.name) else {
        return false;
    };
    if !sp.contains(&view.sender_role) || !rp.contains(&view.recipient_role) {
        return false;
    }
    match &view.subject {
        SubjectRelation::Recipient => flow.subject.name == flow.recipient.name,
        SubjectRelation::Sender => flow.subject.name == flow.sender.name,
        SubjectRelation::InRole(role) => flow.subject.profile.contains(role),
        SubjectRelation::Unconstrained => true,
    }
}

fn transitivity_violations(
    universe: &Universe,
    views: &[NormView],
    flows: &[&Vec<String>],
    context: &str,
    policy: TpMatchPolicy,
) -> Vec<Violation> {
    // Third-party flows only, grouped by (subject, attribute, tp key).
    type Key = (String, String, Option<String>);
    let index_of: BTreeMap<&str, usize> = universe
        .actors
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let n = universe.actors.len();
    let mut groups: BTreeMap<Key, Vec<Vec<(usize, String)>>> = BTreeMap::new();
    for args in flows {
        let (ctx, sender, recipient, subject, attr, tp) =
            (&args[0], &args[1], &args[2], &args[3], &args[4], &args[5]);
        if ctx != context || subject == sender || subject == recipient {
            continue;
        }
        let (Some(&s), Some(&r)) = (index_of.get(sender.as_str()), index_of.get(recipient.as_str()))
        else {
            continue;
        };
        let tp_key = match policy {
            TpMatchPolicy::Exact => Some(tp.clone()),
            TpMatchPolicy::Ignore => None,
        };
        groups
            .entry((subject.clone(), attr.clone(), tp_key))
            .or_insert_with(|| vec![Vec::new(); n])
            [s]
        .push((r, tp.clone()));
    }

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    for ((subject, attribute, tp_key), edges) in &groups {
        let subject_profile = &universe.profile_of[subject];
        let direct: BTreeSet<(usize, usize)> = edges
            .iter()
            .enumerate()
            .flat_map(|(s, outs)| outs.iter().map(move |(r, _)| (s, *r)))
            .collect();
        for start in 0..n {
            if edges[start].is_empty() {
                continue;
            }
            let mut dist = vec![usize::MAX; n];
            let mut pred: Vec<Option<(usize, String)>> = vec![None; n];
            let mut queue = VecDeque::new();
            dist[start] = 0;
            queue.push_back(start);
            while let Some(p) = queue.pop_front() {
                for (q, tp) in &edges[p] {
                    if dist[*q] == usize::MAX && *q != start {
                        dist[*q] = dist[p] + 1;
                        pred[*q] = Some((p, tp.clone()));
                        queue.push_back(*q);
                    }
                }
            }
            for (end, &d) in dist.iter().enumerate() {
                if end == start || d == usize::MAX || d < 2 {
                    continue;
                }
                if direct.contains(&(start, end)) {
                    continue;
                }
                let violation = TransitivityViolation {
                    context: context.to_string(),
                    sender_profile: universe.profile_of[&universe.actors[start]].clone(),
                    recipient_profile: universe.profile_of[&universe.actors[end]].clone(),
                    subject_profile: subject_profile.clone(),
                    attribute: attribute.clone(),
                    tp: tp_key.clone(),
                    chain: chain_witness(universe, views, &pred, start, end, attribute, tp_key),
                };
                let wrapped = Violation::Transitivity(violation);
                if seen.insert(wrapped.key()) {
                    out.push(wrapped);
                }
            }
        }
    }
    out
}

/// Rebuilds the hop list from BFS predecessors, labeling each hop with a
/// norm that derives it.
fn chain_witness(
    universe: &Universe,
    views: &[NormView],
    pred: &[Option<(usize, String)>],
    start: usize,
    end: usize,
    attribute: &str,
    tp_key: &Option<String>,
) -> Vec<ChainHop> {
    let mut hops = Vec::new();
    let mut cursor = end;
    while let Some((prev, tp)) = &pred[cursor] {
        let from = universe.profile_of[&universe.actors[*prev]].clone();
        let to = universe.profile_of[&universe.actors[cursor]].clone();
        let norm = views
            .iter()
            .find(|v| {
                v.attribute == attribute
                    && match tp_key {
                        Some(k) => v.tp == *k,
                        None => v.tp == *tp,
                    }
                    && from.contains(&v.sender_role)
                    && to.contains(&v.recipient_role)
                    && matches!(
                        v.subject,
                        SubjectRelation::InRole(_) | SubjectRelation::Unconstrained
                    )
            })
            .expect("derivable hop has a deriving norm");
        hops.push(ChainHop {
            from,
            to,
            via_norm_id: norm.norm_id.clone(),
            tp: tp.clone(),
        });
        cursor = *prev;
        if cursor == start {
            break;
        }
    }
    hops.reverse();
    hops
}
