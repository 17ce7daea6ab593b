//! Plain-text report and file-format rendering: questions export, selection
//! and metric reports, the threshold sweep table, and violation reports.
//! Everything here is deterministic so reruns are byte-identical.

use std::fmt::Write as _;

use crate::normgen::Question;
use crate::responses::{
    divergence, norm_approval, norm_disapproval, user_approval, ComparisonMode, Fraction,
    ResponseMatrix, SelectionResult,
};
use crate::schema::SubjectRelation;
use crate::verifier::{profile_token, Violation};

pub const QUESTIONS_HEADER: &str = "norm_id\tcontext\tsender_role\trecipient_role\tsubject_relation\tattribute\ttransmission_principle\tquestion_text";

/// Tab-separated questions export, one row per question.
pub fn render_questions(questions: &[Question]) -> String {
    let mut out = String::from(QUESTIONS_HEADER);
    out.push('\n');
    for q in questions {
        let n = &q.norm;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            n.norm_id,
            n.context,
            n.sender_role,
            n.recipient_role,
            n.subject_relation.token(),
            n.attribute,
            n.transmission_principle,
            q.text
        );
    }
    out
}

/// Parses a questions export back into `Question`s, recomputing and checking
/// each norm id.
pub fn parse_questions(text: &str) -> Result<Vec<Question>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != QUESTIONS_HEADER {
                return Err("unexpected questions file header".to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(format!("line {}: expected 8 columns", i + 1));
        }
        let subject = SubjectRelation::parse(cols[4]).map_err(|e| e.to_string())?;
        let norm = crate::normgen::CandidateNorm::new(cols[1], cols[2], cols[3], subject, cols[5], cols[6]);
        if norm.norm_id != cols[0] {
            return Err(format!(
                "line {}: norm id `{}` does not match fields (expected `{}`)",
                i + 1,
                cols[0],
                norm.norm_id
            ));
        }
        out.push(Question {
            norm,
            text: cols[7].to_string(),
        });
    }
    Ok(out)
}

/// Per-question metrics: counts, approval and disapproval ratios.
pub fn render_question_metrics(matrix: &ResponseMatrix) -> String {
    let mut out = String::from("norm_id\tyes\tno\tdms\ttotal\tna\tnd\n");
    for q in matrix.questions() {
        let counts = matrix.question_counts(q).expect("question known");
        let (na, nd) = if counts.total() == 0 {
            ("-".to_string(), "-".to_string())
        } else {
            (
                format!("{:.6}", norm_approval(matrix, q).expect("answered")),
                format!("{:.6}", norm_disapproval(matrix, q).expect("answered")),
            )
        };
        let _ = writeln!(
            out,
            "{q}\t{}\t{}\t{}\t{}\t{na}\t{nd}",
            counts.yes,
            counts.no,
            counts.dms,
            counts.total()
        );
    }
    out
}

/// Per-respondent metrics: answer count, approvals, divergence at the
/// selection threshold.
pub fn render_respondent_metrics(matrix: &ResponseMatrix, selection: &SelectionResult) -> String {
    let mut out = String::from("respondent_id\tanswered\tyes\tua\tds\n");
    for r in matrix.respondents() {
        let answers = matrix.answers_of(r).expect("respondent known");
        let yes = answers
            .iter()
            .filter(|(_, a)| matches!(a, crate::responses::AnswerKind::Yes))
            .count();
        let ua = user_approval(matrix, r).expect("respondent known");
        let ds = divergence(matrix, selection, r).expect("respondent known");
        let _ = writeln!(out, "{r}\t{}\t{yes}\t{ua:.6}\t{ds}", answers.len());
    }
    out
}

/// Machine-readable selection: one row per question with its bucket.
pub fn render_selection_rows(matrix: &ResponseMatrix, selection: &SelectionResult) -> String {
    let mut out = String::from("norm_id\tbucket\ttie\n");
    for q in matrix.questions() {
        let bucket = if selection.approved.contains(q) {
            "approved"
        } else if selection.disapproved.contains(q) {
            "disapproved"
        } else {
            "undecided"
        };
        let tie = if selection.ties.contains(q) { 1 } else { 0 };
        let _ = writeln!(out, "{q}\t{bucket}\t{tie}");
    }
    out
}

/// Buckets of norm ids: (approved, disapproved, undecided).
pub type SelectionBuckets = (Vec<String>, Vec<String>, Vec<String>);

/// Parses a selection file back into its buckets.
pub fn parse_selection_rows(text: &str) -> Result<SelectionBuckets, String> {
    let mut approved = Vec::new();
    let mut disapproved = Vec::new();
    let mut undecided = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "norm_id\tbucket\ttie" {
                return Err("unexpected selection file header".to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(format!("line {}: expected 3 columns", i + 1));
        }
        match cols[1] {
            "approved" => approved.push(cols[0].to_string()),
            "disapproved" => disapproved.push(cols[0].to_string()),
            "undecided" => undecided.push(cols[0].to_string()),
            other => return Err(format!("line {}: unknown bucket `{other}`", i + 1)),
        }
    }
    Ok((approved, disapproved, undecided))
}

/// Human summary of a selection, in the shape of an approval table.
pub fn render_selection_summary(
    selection: &SelectionResult,
    mode: ComparisonMode,
    threshold: Fraction,
    total: usize,
) -> String {
    let cmp = match mode {
        ComparisonMode::Strict => ">",
        ComparisonMode::NonStrict => ">=",
    };
    let decided = selection.approved.len() + selection.disapproved.len();
    let pct = |n: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * n as f64 / total as f64
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "selection at ratio {cmp} {:.4}", threshold.as_f64());
    let _ = writeln!(out, "questions\t{total}");
    let _ = writeln!(
        out,
        "approved\t{}\t({:.1}%)",
        selection.approved.len(),
        pct(selection.approved.len())
    );
    let _ = writeln!(
        out,
        "disapproved\t{}\t({:.1}%)",
        selection.disapproved.len(),
        pct(selection.disapproved.len())
    );
    let _ = writeln!(out, "decided\t{decided}\t({:.1}%)", pct(decided));
    let _ = writeln!(
        out,
        "undecided\t{}\t({:.1}%)",
        selection.undecided.len(),
        pct(selection.undecided.len())
    );
    let _ = writeln!(
        out,
        "ties (yes = no)\t{}\t({:.1}%)",
        selection.ties.len(),
        pct(selection.ties.len())
    );
    out
}

/// Threshold sweep table: one row per threshold with the normalized total
/// divergence.
pub fn render_sweep(rows: &[(Fraction, f64)]) -> String {
    let mut out = String::from("threshold\tnormalized_ds\n");
    for (t, ds) in rows {
        let _ = writeln!(out, "{:.2}\t{ds:.6}", t.as_f64());
    }
    out
}

/// Violation report: a human narrative plus machine-readable witness facts
/// per violation.
pub fn render_violations(violations: &[Violation]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "violations\t{}", violations.len());
    for (i, v) in violations.iter().enumerate() {
        let _ = writeln!(out);
        let _ = writeln!(out, "violation {}\t{}", i + 1, v.kind());
        match v {
            Violation::Semantic(s) => {
                let d = &s.disapproved;
                let _ = writeln!(
                    out,
                    "  disapproved norm {} ({} -> {}, {}, {}, {})",
                    d.norm_id, d.sender_role, d.recipient_role, d.subject.token(), d.attribute, d.tp
                );
                let w = &s.witness;
                let _ = writeln!(
                    out,
                    "  witness: sender {} {}, recipient {} {}, subject {} {}",
                    w.sender.name,
                    profile_token(&w.sender.profile),
                    w.recipient.name,
                    profile_token(&w.recipient.profile),
                    w.subject.name,
                    profile_token(&w.subject.profile),
                );
                let _ = writeln!(
                    out,
                    "  the flow is derivable from approved norm(s): {}",
                    s.implicated.join(", ")
                );
                let _ = writeln!(out, "  facts:");
                for fact in w.inrole_facts() {
                    let _ = writeln!(out, "    {fact}.");
                }
                let _ = writeln!(
                    out,
                    "    % derivable: allowed({})",
                    w.flow_args().join(", ")
                );
            }
            Violation::Transitivity(t) => {
                let tp = t.tp.clone().unwrap_or_else(|| "any".to_string());
                let _ = writeln!(
                    out,
                    "  composite flow {} -> {} about subject {} ({}, {}) has no direct norm",
                    profile_token(&t.sender_profile),
                    profile_token(&t.recipient_profile),
                    profile_token(&t.subject_profile),
                    t.attribute,
                    tp,
                );
                let _ = writeln!(out, "  chain of {} permitted hop(s):", t.chain.len());
                for (j, hop) in t.chain.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "    hop {}: {} -> {} via norm {} ({})",
                        j + 1,
                        profile_token(&hop.from),
                        profile_token(&hop.to),
                        hop.via_norm_id,
                        hop.tp,
                    );
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normgen::CandidateNorm;
    use crate::responses::{ingest_responses, select_norms};

    #[test]
    fn questions_round_trip() {
        let norm = CandidateNorm::new(
            "class",
            "professor",
            "student",
            SubjectRelation::Recipient,
            "grade",
            "need",
        );
        let questions = vec![Question {
            norm,
            text: "Is it acceptable?".to_string(),
        }];
        let rendered = render_questions(&questions);
        let parsed = parse_questions(&rendered).unwrap();
        assert_eq!(parsed, questions);
    }

    #[test]
    fn tampered_norm_id_is_caught() {
        let norm = CandidateNorm::new(
            "class",
            "professor",
            "student",
            SubjectRelation::Recipient,
            "grade",
            "need",
        );
        let questions = vec![Question {
            norm,
            text: "q".to_string(),
        }];
        let rendered = render_questions(&questions).replace(
            &questions[0].norm.norm_id,
            "0000000000000000",
        );
        assert!(parse_questions(&rendered).is_err());
    }

    #[test]
    fn selection_rows_round_trip() {
        let questions: Vec<String> = vec!["q1".into(), "q2".into(), "q3".into()];
        let text = "respondent_id\tnorm_id\tanswer\nr1\tq1\tY\nr1\tq2\tN\nr1\tq3\tDMS1\n";
        let matrix = ingest_responses(text, &questions).unwrap();
        let selection = select_norms(
            &matrix,
            Fraction::new(1, 2).unwrap(),
            ComparisonMode::Strict,
        );
        let rendered = render_selection_rows(&matrix, &selection);
        let (approved, disapproved, undecided) = parse_selection_rows(&rendered).unwrap();
        assert_eq!(approved, vec!["q1".to_string()]);
        assert_eq!(disapproved, vec!["q2".to_string()]);
        assert_eq!(undecided, vec!["q3".to_string()]);
    }

    #[test]
    fn reports_are_deterministic() {
        let questions: Vec<String> = vec!["q1".into(), "q2".into()];
        let text = "respondent_id\tnorm_id\tanswer\nr1\tq1\tY\nr2\tq1\tN\nr1\tq2\tY\n";
        let matrix = ingest_responses(text, &questions).unwrap();
        let selection = select_norms(
            &matrix,
            Fraction::new(1, 2).unwrap(),
            ComparisonMode::Strict,
        );
        assert_eq!(
            render_question_metrics(&matrix),
            render_question_metrics(&matrix)
        );
        assert_eq!(
            render_respondent_metrics(&matrix, &selection),
            render_respondent_metrics(&matrix, &selection)
        );
    }
}
