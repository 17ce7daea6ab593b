//! Transitive-flow closure: every flow reachable through a chain of
//! permitted hops (same attribute, fixed third-party subject, transmission
//! principles per policy) must also be permitted directly. Chains live in
//! profile space; breadth-first search yields minimal witness chains, and
//! the pigeonhole bound on profiles caps their length.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{
    build_profiles, check_norm_vocabulary, decompile_rules, ChainHop, NormView, RoleProfile,
    TpMatchPolicy, TransitivityViolation, VerifierError, Violation,
};
use crate::logic::Rule;
use crate::schema::{ContextSchema, SubjectRelation};

/// A norm can carry a hop with a fixed third-party subject iff its subject
/// constraint does not bind the subject to an endpoint.
fn hop_subject_ok(norm: &NormView, subject_profile: &RoleProfile) -> bool {
    match &norm.subject {
        SubjectRelation::InRole(role) => subject_profile.contains(role),
        SubjectRelation::Unconstrained => true,
        SubjectRelation::Recipient | SubjectRelation::Sender => false,
    }
}

pub fn check_transitivity(
    approved: &[Rule],
    schema: &ContextSchema,
    k: usize,
    policy: TpMatchPolicy,
) -> Result<Vec<Violation>, VerifierError> {
    let profiles = build_profiles(schema, k)?;
    let views = decompile_rules(approved)?;
    for view in &views {
        check_norm_vocabulary(view, schema)?;
    }
    let context = schema.context_id.clone();

    let attributes: BTreeSet<&str> = views.iter().map(|v| v.attribute.as_str()).collect();
    let mut violations = Vec::new();
    for attribute in attributes {
        let tp_keys: Vec<Option<String>> = match policy {
            TpMatchPolicy::Exact => views
                .iter()
                .filter(|v| v.attribute == attribute)
                .map(|v| Some(v.tp.clone()))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            TpMatchPolicy::Ignore => vec![None],
        };
        for tp_key in tp_keys {
            let relevant: Vec<&NormView> = views
                .iter()
                .filter(|v| {
                    v.attribute == attribute
                        && match &tp_key {
                            Some(tp) => v.tp == *tp,
                            None => true,
                        }
                })
                .collect();
            // The edge relation depends only on which norms the subject
            // profile activates, so identical activation sets share one
            // search.
            let mut by_activation: BTreeMap<Vec<usize>, Vec<&RoleProfile>> = BTreeMap::new();
            for w in &profiles {
                let active: Vec<usize> = relevant
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| hop_subject_ok(n, w))
                    .map(|(i, _)| i)
                    .collect();
                if !active.is_empty() {
                    by_activation.entry(active).or_default().push(w);
                }
            }
            for (active, subject_profiles) in by_activation {
                let norms: Vec<&NormView> = active.iter().map(|&i| relevant[i]).collect();
                let found = search_violations(&norms, &profiles);
                for (start, end, chain) in found {
                    for w in &subject_profiles {
                        violations.push(Violation::Transitivity(TransitivityViolation {
                            context: context.clone(),
                            sender_profile: profiles[start].clone(),
                            recipient_profile: profiles[end].clone(),
                            subject_profile: (*w).clone(),
                            attribute: attribute.to_string(),
                            tp: tp_key.clone(),
                            chain: chain.clone(),
                        }));
                    }
                }
            }
        }
    }
    violations.sort_by_key(|v| v.key());
    Ok(violations)
}

/// BFS over the profile graph induced by the active norms; returns, per
/// (start, end) pair reachable without a direct edge, the minimal chain.
fn search_violations(
    norms: &[&NormView],
    profiles: &[RoleProfile],
) -> Vec<(usize, usize, Vec<ChainHop>)> {
    let n = profiles.len();
    // edges[p] = (q, norm index); the first matching norm labels the hop.
    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut direct: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (p, from) in profiles.iter().enumerate() {
        for (q, to) in profiles.iter().enumerate() {
            for (ni, norm) in norms.iter().enumerate() {
                if from.contains(&norm.sender_role)
                    && to.contains(&norm.recipient_role)
                    && !direct.contains(&(p, q))
                {
                    edges[p].push((q, ni));
                    direct.insert((p, q));
                }
            }
        }
    }
    let mut out = Vec::new();
    for start in 0..n {
        if edges[start].is_empty() {
            continue;
        }
        let mut pred: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut dist: Vec<usize> = vec![usize::MAX; n];
        // A cycle back to the start is a composite flow too; BFS order makes
        // the first return minimal.
        let mut return_hop: Option<(usize, usize)> = None;
        let mut queue = VecDeque::new();
        dist[start] = 0;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &(q, ni) in &edges[p] {
                if q == start {
                    if return_hop.is_none() && dist[p] >= 1 {
                        return_hop = Some((p, ni));
                    }
                    continue;
                }
                if dist[q] == usize::MAX {
                    dist[q] = dist[p] + 1;
                    pred[q] = Some((p, ni));
                    queue.push_back(q);
                }
            }
        }
        let chain_to = |node: usize| -> Vec<ChainHop> {
            let mut hops = Vec::new();
            let mut cursor = node;
            while let Some((prev, ni)) = pred[cursor] {
                hops.push(ChainHop {
                    from: profiles[prev].clone(),
                    to: profiles[cursor].clone(),
                    via_norm_id: norms[ni].norm_id.clone(),
                    tp: norms[ni].tp.clone(),
                });
                cursor = prev;
                if cursor == start {
                    break;
                }
            }
            hops.reverse();
            hops
        };
        for (end, &d) in dist.iter().enumerate() {
            if d == usize::MAX || d == 0 {
                continue;
            }
            if direct.contains(&(start, end)) {
                continue;
            }
            out.push((start, end, chain_to(end)));
        }
        if let Some((p, ni)) = return_hop {
            if !direct.contains(&(start, start)) {
                let mut hops = chain_to(p);
                hops.push(ChainHop {
                    from: profiles[p].clone(),
                    to: profiles[start].clone(),
                    via_norm_id: norms[ni].norm_id.clone(),
                    tp: norms[ni].tp.clone(),
                });
                out.push((start, start, hops));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::compile_norms;
    use crate::normgen::CandidateNorm;
    use crate::schema::load_schema;
    use crate::verifier::replay_transitivity;

    fn chain_schema() -> ContextSchema {
        load_schema(
            r#"{
            "context": "class",
            "roles": ["ta", "professor", "chair", "student"],
            "attributes": ["attendance"],
            "transmission_principles": ["poor_performance"],
            "sender_roles": ["ta", "professor"],
            "recipient_roles": ["professor", "chair"],
            "subject_relations": ["subject_in_role:student"],
            "ontology": { "disjoint": [
                ["ta","professor"],["ta","chair"],["ta","student"],
                ["professor","chair"],["professor","student"],["chair","student"]
            ] }
        }"#,
        )
        .unwrap()
    }

    fn norm(sender: &str, recipient: &str) -> CandidateNorm {
        CandidateNorm::new(
            "class",
            sender,
            recipient,
            SubjectRelation::InRole("student".to_string()),
            "attendance",
            "poor_performance",
        )
    }

    #[test]
    fn missing_composite_is_reported_with_two_hop_chain() {
        let schema = chain_schema();
        let approved = vec![norm("ta", "professor"), norm("professor", "chair")];
        let rules = compile_norms(&approved, &schema);
        let violations =
            check_transitivity(&rules, &schema, 2, TpMatchPolicy::Exact).unwrap();
        assert_eq!(violations.len(), 1);
        let Violation::Transitivity(v) = &violations[0] else {
            panic!("expected transitivity violation");
        };
        assert_eq!(v.chain.len(), 2);
        assert!(v.sender_profile.contains("ta"));
        assert!(v.recipient_profile.contains("chair"));
        assert!(v.subject_profile.contains("student"));
        assert_eq!(v.chain[0].via_norm_id, approved[0].norm_id);
        assert_eq!(v.chain[1].via_norm_id, approved[1].norm_id);
        assert!(replay_transitivity(v, &rules, &schema).unwrap());
    }

    #[test]
    fn closure_completed_set_is_clean() {
        let schema = chain_schema();
        let approved = vec![
            norm("ta", "professor"),
            norm("professor", "chair"),
            norm("ta", "chair"),
        ];
        let rules = compile_norms(&approved, &schema);
        let violations =
            check_transitivity(&rules, &schema, 2, TpMatchPolicy::Exact).unwrap();
        assert!(violations.is_empty());
    }

    #[test]
    fn single_norm_has_no_chain() {
        let schema = chain_schema();
        let rules = compile_norms(&[norm("ta", "professor")], &schema);
        let violations =
            check_transitivity(&rules, &schema, 2, TpMatchPolicy::Exact).unwrap();
        assert!(violations.is_empty());
    }

    #[test]
    fn exact_policy_does_not_mix_principles() {
        let schema = load_schema(
            r#"{
            "context": "class",
            "roles": ["ta", "professor", "chair", "student"],
            "attributes": ["attendance"],
            "transmission_principles": ["poor_performance", "none"],
            "sender_roles": ["ta", "professor"],
            "recipient_roles": ["professor", "chair"],
            "subject_relations": ["subject_in_role:student"],
            "ontology": { "disjoint": [
                ["ta","professor"],["ta","chair"],["ta","student"],
                ["professor","chair"],["professor","student"],["chair","student"]
            ] }
        }"#,
        )
        .unwrap();
        let hop1 = CandidateNorm::new(
            "class",
            "ta",
            "professor",
            SubjectRelation::InRole("student".to_string()),
            "attendance",
            "poor_performance",
        );
        let hop2 = CandidateNorm::new(
            "class",
            "professor",
            "chair",
            SubjectRelation::InRole("student".to_string()),
            "attendance",
            "none",
        );
        let rules = compile_norms(&[hop1, hop2], &schema);
        let exact = check_transitivity(&rules, &schema, 2, TpMatchPolicy::Exact).unwrap();
        assert!(exact.is_empty());
        let relaxed = check_transitivity(&rules, &schema, 2, TpMatchPolicy::Ignore).unwrap();
        assert_eq!(relaxed.len(), 1);
        let Violation::Transitivity(v) = &relaxed[0] else {
            panic!();
        };
        assert_eq!(v.tp, None);
        assert!(replay_transitivity(v, &rules, &schema).unwrap());
    }
}
