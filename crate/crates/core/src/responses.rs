//! Crowd-response ingestion and the three aggregate metrics: norm approval
//! (NA), user approval (UA), and divergence (DS), plus threshold selection
//! and the threshold sweep.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("response file line {line}: expected 3 tab-separated columns")]
    BadRow { line: usize },
    #[error("response file line {line}: malformed answer token `{token}`")]
    MalformedAnswer { line: usize, token: String },
    #[error("unknown norm id `{0}`")]
    UnknownNormId(String),
    #[error("duplicate answer for question `{norm_id}` by respondent `{respondent}`")]
    DuplicateAnswer { norm_id: String, respondent: String },
    #[error("question `{0}` has no answers")]
    NoAnswers(String),
    #[error("unknown respondent `{0}`")]
    UnknownRespondent(String),
    #[error("threshold `{0}` is not a fraction in [0, 1]")]
    BadThreshold(String),
    #[error("response matrix is empty")]
    EmptyMatrix,
}

/// One survey answer. The three DMS kinds are the "does not make sense"
/// options: sender unlikely to have the information, receiver would already
/// have it, question ambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerKind {
    Yes,
    No,
    Dms1,
    Dms2,
    Dms3,
}

impl AnswerKind {
    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "Y" => Some(AnswerKind::Yes),
            "N" => Some(AnswerKind::No),
            "DMS1" => Some(AnswerKind::Dms1),
            "DMS2" => Some(AnswerKind::Dms2),
            "DMS3" => Some(AnswerKind::Dms3),
            _ => None,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            AnswerKind::Yes => "Y",
            AnswerKind::No => "N",
            AnswerKind::Dms1 => "DMS1",
            AnswerKind::Dms2 => "DMS2",
            AnswerKind::Dms3 => "DMS3",
        }
    }

    pub fn is_dms(&self) -> bool {
        matches!(self, AnswerKind::Dms1 | AnswerKind::Dms2 | AnswerKind::Dms3)
    }
}

/// Exact threshold fraction. Selection compares counts by cross
/// multiplication, so `15/30 > 1/2` style comparisons never hit float
/// rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    num: u64,
    den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self, ResponseError> {
        if den == 0 || num > den {
            return Err(ResponseError::BadThreshold(format!("{num}/{den}")));
        }
        Ok(Fraction { num, den })
    }

    /// Parses a decimal string like `0.5` or `0.66` exactly (denominator a
    /// power of ten).
    pub fn parse_decimal(text: &str) -> Result<Self, ResponseError> {
        let bad = || ResponseError::BadThreshold(text.to_string());
        let (int_part, frac_part) = match text.split_once('.') {
            Some((i, f)) => (i, f),
            None => (text, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.len() > 12
        {
            return Err(bad());
        }
        let int_val: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let den = 10u64.pow(frac_part.len() as u32);
        let frac_val: u64 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().map_err(|_| bad())?
        };
        Fraction::new(int_val * den + frac_val, den)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// True iff `count / total` exceeds (strict) or reaches (non-strict) the
    /// threshold.
    pub fn passed_by(&self, count: u64, total: u64, mode: ComparisonMode) -> bool {
        let lhs = u128::from(count) * u128::from(self.den);
        let rhs = u128::from(self.num) * u128::from(total);
        match mode {
            ComparisonMode::Strict => lhs > rhs,
            ComparisonMode::NonStrict => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonMode {
    Strict,
    NonStrict,
}

impl ComparisonMode {
    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "strict" => Some(ComparisonMode::Strict),
            "nonstrict" => Some(ComparisonMode::NonStrict),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnswerCounts {
    pub yes: u64,
    pub no: u64,
    pub dms: u64,
}

impl AnswerCounts {
    pub fn total(&self) -> u64 {
        self.yes + self.no + self.dms
    }
}

/// Per-question, per-respondent answers.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    questions: Vec<String>,
    respondents: Vec<String>,
    question_index: BTreeMap<String, usize>,
    respondent_index: BTreeMap<String, usize>,
    /// Per question: aggregate counts.
    counts: Vec<AnswerCounts>,
    /// Per respondent: (question index, answer), in question order.
    by_respondent: Vec<Vec<(usize, AnswerKind)>>,
}

impl ResponseMatrix {
    pub fn questions(&self) -> &[String] {
        &self.questions
    }

    pub fn respondents(&self) -> &[String] {
        &self.respondents
    }

    pub fn question_counts(&self, norm_id: &str) -> Result<AnswerCounts, ResponseError> {
        let idx = self
            .question_index
            .get(norm_id)
            .ok_or_else(|| ResponseError::UnknownNormId(norm_id.to_string()))?;
        Ok(self.counts[*idx])
    }

    pub fn answers_of(&self, respondent: &str) -> Result<&[(usize, AnswerKind)], ResponseError> {
        let idx = self
            .respondent_index
            .get(respondent)
            .ok_or_else(|| ResponseError::UnknownRespondent(respondent.to_string()))?;
        Ok(&self.by_respondent[*idx])
    }

    pub fn answer_total(&self) -> u64 {
        self.counts.iter().map(|c| c.total()).sum()
    }
}

/// Parses a tab-separated response document (header `respondent_id`,
/// `norm_id`, `answer`) against a known question list.
pub fn ingest_responses(
    source_text: &str,
    questions: &[String],
) -> Result<ResponseMatrix, ResponseError> {
    let question_index: BTreeMap<String, usize> = questions
        .iter()
        .enumerate()
        .map(|(i, q)| (q.clone(), i))
        .collect();

    let mut respondents: Vec<String> = Vec::new();
    let mut respondent_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut counts = vec![AnswerCounts::default(); questions.len()];
    let mut by_respondent: Vec<BTreeMap<usize, AnswerKind>> = Vec::new();

    for (line_no, line) in source_text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if line_no == 0 && cols == ["respondent_id", "norm_id", "answer"] {
            continue;
        }
        if cols.len() != 3 {
            return Err(ResponseError::BadRow { line: line_no + 1 });
        }
        let (respondent, norm_id, token) = (cols[0], cols[1], cols[2]);
        let answer = AnswerKind::parse(token).ok_or_else(|| ResponseError::MalformedAnswer {
            line: line_no + 1,
            token: token.to_string(),
        })?;
        let q_idx = *question_index
            .get(norm_id)
            .ok_or_else(|| ResponseError::UnknownNormId(norm_id.to_string()))?;
        let r_idx = *respondent_index.entry(respondent.to_string()).or_insert_with(|| {
            respondents.push(respondent.to_string());
            by_respondent.push(BTreeMap::new());
            respondents.len() - 1
        });
        if by_respondent[r_idx].insert(q_idx, answer).is_some() {
            return Err(ResponseError::DuplicateAnswer {
                norm_id: norm_id.to_string(),
                respondent: respondent.to_string(),
            });
        }
        match answer {
            AnswerKind::Yes => counts[q_idx].yes += 1,
            AnswerKind::No => counts[q_idx].no += 1,
            _ => counts[q_idx].dms += 1,
        }
    }

    Ok(ResponseMatrix {
        questions: questions.to_vec(),
        respondents,
        question_index,
        respondent_index,
        counts,
        by_respondent: by_respondent
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect(),
    })
}

/// Norm approval: ratio of Yes answers to all answers for the question. All
/// three DMS kinds count in the denominator.
pub fn norm_approval(matrix: &ResponseMatrix, norm_id: &str) -> Result<f64, ResponseError> {
    let counts = matrix.question_counts(norm_id)?;
    if counts.total() == 0 {
        return Err(ResponseError::NoAnswers(norm_id.to_string()));
    }
    Ok(counts.yes as f64 / counts.total() as f64)
}

/// Mirrored No ratio used for the disapproved bucket.
pub fn norm_disapproval(matrix: &ResponseMatrix, norm_id: &str) -> Result<f64, ResponseError> {
    let counts = matrix.question_counts(norm_id)?;
    if counts.total() == 0 {
        return Err(ResponseError::NoAnswers(norm_id.to_string()));
    }
    Ok(counts.no as f64 / counts.total() as f64)
}

/// User approval: fraction of a respondent's answered questions answered Yes.
pub fn user_approval(matrix: &ResponseMatrix, respondent: &str) -> Result<f64, ResponseError> {
    let answers = matrix.answers_of(respondent)?;
    if answers.is_empty() {
        return Err(ResponseError::UnknownRespondent(respondent.to_string()));
    }
    let yes = answers
        .iter()
        .filter(|(_, a)| *a == AnswerKind::Yes)
        .count();
    Ok(yes as f64 / answers.len() as f64)
}

/// Result of thresholding the response matrix into approved, disapproved,
/// and undecided buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionResult {
    pub threshold: Fraction,
    pub mode: ComparisonMode,
    pub approved: Vec<String>,
    pub disapproved: Vec<String>,
    pub undecided: Vec<String>,
    pub ties: Vec<String>,
    approved_mask: Vec<bool>,
}

impl SelectionResult {
    pub fn is_approved(&self, question_index: usize) -> bool {
        self.approved_mask[question_index]
    }
}

/// Buckets every question. A question whose Yes ratio passes the threshold is
/// approved; otherwise, one whose No ratio passes is disapproved; the rest
/// are undecided. Questions with no answers stay undecided. Ties are
/// questions with equal Yes and No counts (and at least one answer).
pub fn select_norms(
    matrix: &ResponseMatrix,
    threshold: Fraction,
    mode: ComparisonMode,
) -> SelectionResult {
    let mut approved = Vec::new();
    let mut disapproved = Vec::new();
    let mut undecided = Vec::new();
    let mut ties = Vec::new();
    let mut approved_mask = vec![false; matrix.questions.len()];
    for (idx, norm_id) in matrix.questions.iter().enumerate() {
        let counts = matrix.counts[idx];
        let total = counts.total();
        if total > 0 && counts.yes == counts.no {
            ties.push(norm_id.clone());
        }
        if total == 0 {
            undecided.push(norm_id.clone());
        } else if threshold.passed_by(counts.yes, total, mode) {
            approved.push(norm_id.clone());
            approved_mask[idx] = true;
        } else if threshold.passed_by(counts.no, total, mode) {
            disapproved.push(norm_id.clone());
        } else {
            undecided.push(norm_id.clone());
        }
    }
    SelectionResult {
        threshold,
        mode,
        approved,
        disapproved,
        undecided,
        ties,
        approved_mask,
    }
}

/// Divergence: number of answered questions where the respondent's bit
/// (1 iff Yes) differs from the community bit (1 iff approved).
pub fn divergence(
    matrix: &ResponseMatrix,
    selection: &SelectionResult,
    respondent: &str,
) -> Result<u64, ResponseError> {
    let answers = matrix.answers_of(respondent)?;
    Ok(answers
        .iter()
        .filter(|(q_idx, answer)| {
            let u = *answer == AnswerKind::Yes;
            let c = selection.is_approved(*q_idx);
            u != c
        })
        .count() as u64)
}

/// For each threshold, the total divergence across respondents normalized by
/// the number of respondents.
pub fn sweep_divergence(
    matrix: &ResponseMatrix,
    thresholds: &[Fraction],
    mode: ComparisonMode,
) -> Result<Vec<(Fraction, f64)>, ResponseError> {
    if matrix.respondents.is_empty() {
        return Err(ResponseError::EmptyMatrix);
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let selection = select_norms(matrix, threshold, mode);
        let total: u64 = matrix
            .respondents
            .iter()
            .map(|r| divergence(matrix, &selection, r).expect("respondent known"))
            .sum();
        out.push((threshold, total as f64 / matrix.respondents.len() as f64));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("q{i}")).collect()
    }

    fn tsv(rows: &[(&str, &str, &str)]) -> String {
        let mut out = String::from("respondent_id\tnorm_id\tanswer\n");
        for (r, q, a) in rows {
            out.push_str(&format!("{r}\t{q}\t{a}\n"));
        }
        out
    }

    /// Builds a matrix from per-question (yes, no, dms) counts, one synthetic
    /// respondent per answer slot.
    fn matrix_from_counts(counts: &[(u64, u64, u64)]) -> ResponseMatrix {
        let questions = ids(counts.len());
        let mut rows = Vec::new();
        for (qi, &(y, n, d)) in counts.iter().enumerate() {
            let mut r = 0;
            for _ in 0..y {
                rows.push((format!("r{r}"), format!("q{}", qi + 1), "Y"));
                r += 1;
            }
            for _ in 0..n {
                rows.push((format!("r{r}"), format!("q{}", qi + 1), "N"));
                r += 1;
            }
            for _ in 0..d {
                rows.push((format!("r{r}"), format!("q{}", qi + 1), "DMS1"));
                r += 1;
            }
        }
        let body: Vec<(&str, &str, &str)> = rows
            .iter()
            .map(|(r, q, a)| (r.as_str(), q.as_str(), *a))
            .collect();
        ingest_responses(&tsv(&body), &questions).unwrap()
    }

    #[test]
    fn ingest_small_matrix() {
        let questions = ids(3);
        let text = tsv(&[
            ("r1", "q1", "Y"),
            ("r1", "q2", "N"),
            ("r1", "q3", "DMS2"),
            ("r2", "q1", "Y"),
            ("r2", "q2", "DMS3"),
            ("r2", "q3", "N"),
        ]);
        let matrix = ingest_responses(&text, &questions).unwrap();
        assert_eq!(matrix.answer_total(), 6);
        assert_eq!(matrix.respondents(), &["r1".to_string(), "r2".to_string()]);
    }

    #[test]
    fn malformed_answer_token_rejected() {
        let err = ingest_responses(&tsv(&[("r1", "q1", "MAYBE")]), &ids(1)).unwrap_err();
        assert!(matches!(err, ResponseError::MalformedAnswer { .. }));
    }

    #[test]
    fn duplicate_answer_rejected() {
        let err =
            ingest_responses(&tsv(&[("r1", "q1", "Y"), ("r1", "q1", "N")]), &ids(1)).unwrap_err();
        assert!(matches!(err, ResponseError::DuplicateAnswer { .. }));
    }

    #[test]
    fn unknown_norm_id_rejected() {
        let err = ingest_responses(&tsv(&[("r1", "q9", "Y")]), &ids(1)).unwrap_err();
        assert!(matches!(err, ResponseError::UnknownNormId(_)));
    }

    #[test]
    fn norm_approval_counts_dms_in_denominator() {
        let matrix = matrix_from_counts(&[(20, 8, 2)]);
        let na = norm_approval(&matrix, "q1").unwrap();
        assert!((na - 20.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn norm_approval_extremes() {
        let matrix = matrix_from_counts(&[(4, 0, 0), (0, 5, 5)]);
        assert_eq!(norm_approval(&matrix, "q1").unwrap(), 1.0);
        assert_eq!(norm_approval(&matrix, "q2").unwrap(), 0.0);
    }

    #[test]
    fn norm_approval_requires_answers() {
        let matrix = ingest_responses(&tsv(&[("r1", "q1", "Y")]), &ids(2)).unwrap();
        assert!(matches!(
            norm_approval(&matrix, "q2"),
            Err(ResponseError::NoAnswers(_))
        ));
    }

    #[test]
    fn user_approval_over_answered_questions() {
        let questions = ids(88);
        let mut rows = Vec::new();
        for i in 1..=88 {
            let a = if i <= 44 { "Y" } else { "N" };
            rows.push(("r1".to_string(), format!("q{i}"), a));
        }
        let body: Vec<(&str, &str, &str)> =
            rows.iter().map(|(r, q, a)| (r.as_str(), q.as_str(), *a)).collect();
        let matrix = ingest_responses(&tsv(&body), &questions).unwrap();
        assert_eq!(user_approval(&matrix, "r1").unwrap(), 0.5);
    }

    #[test]
    fn user_approval_all_no_and_dms_heavy() {
        let matrix = ingest_responses(
            &tsv(&[
                ("r1", "q1", "N"),
                ("r1", "q2", "N"),
                ("r2", "q1", "Y"),
                ("r2", "q2", "DMS1"),
                ("r2", "q3", "DMS2"),
            ]),
            &ids(3),
        )
        .unwrap();
        assert_eq!(user_approval(&matrix, "r1").unwrap(), 0.0);
        assert!((user_approval(&matrix, "r2").unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn select_approves_above_majority() {
        let matrix = matrix_from_counts(&[(20, 8, 2)]);
        let sel = select_norms(&matrix, Fraction::new(1, 2).unwrap(), ComparisonMode::Strict);
        assert_eq!(sel.approved, vec!["q1".to_string()]);
    }

    #[test]
    fn even_split_is_undecided_and_tied() {
        let matrix = matrix_from_counts(&[(10, 10, 10)]);
        let sel = select_norms(&matrix, Fraction::new(1, 2).unwrap(), ComparisonMode::Strict);
        assert_eq!(sel.undecided, vec!["q1".to_string()]);
        assert_eq!(sel.ties, vec!["q1".to_string()]);
        assert!(sel.approved.is_empty() && sel.disapproved.is_empty());
    }

    #[test]
    fn five_question_selection_fixture() {
        // NA = (0.7, 0.6, 0.4, 0.2, 0.5), ND = (0.3, 0.3, 0.6, 0.8, 0.5)
        let matrix = matrix_from_counts(&[(7, 3, 0), (6, 3, 1), (4, 6, 0), (2, 8, 0), (5, 5, 0)]);
        let sel = select_norms(&matrix, Fraction::new(1, 2).unwrap(), ComparisonMode::Strict);
        assert_eq!(sel.approved, vec!["q1".to_string(), "q2".to_string()]);
        assert_eq!(sel.disapproved, vec!["q3".to_string(), "q4".to_string()]);
        assert_eq!(sel.undecided, vec!["q5".to_string()]);
        assert_eq!(sel.ties, vec!["q5".to_string()]);
    }

    #[test]
    fn divergence_is_xor_count() {
        // c = (1, 0, 1), u = (1, 1, 1) -> DS = 1
        let questions = ids(3);
        let text = tsv(&[
            // q1 approved (2Y), q2 disapproved (2N... r1 says Y), q3 approved
            ("r1", "q1", "Y"),
            ("r1", "q2", "Y"),
            ("r1", "q3", "Y"),
            ("r2", "q1", "Y"),
            ("r2", "q2", "N"),
            ("r2", "q3", "Y"),
            ("r3", "q1", "Y"),
            ("r3", "q2", "N"),
            ("r3", "q3", "Y"),
        ]);
        let matrix = ingest_responses(&text, &questions).unwrap();
        let sel = select_norms(&matrix, Fraction::new(1, 2).unwrap(), ComparisonMode::Strict);
        assert_eq!(sel.approved, vec!["q1".to_string(), "q3".to_string()]);
        assert_eq!(divergence(&matrix, &sel, "r1").unwrap(), 1);
        // r2 agrees with the community everywhere.
        assert_eq!(divergence(&matrix, &sel, "r2").unwrap(), 0);
    }

    #[test]
    fn divergence_at_zero_threshold_counts_non_yes() {
        let questions = ids(88);
        let mut rows = Vec::new();
        for i in 1..=88 {
            let a = if i <= 30 { "Y" } else { "N" };
            rows.push(("r1".to_string(), format!("q{i}"), a));
        }
        let body: Vec<(&str, &str, &str)> =
            rows.iter().map(|(r, q, a)| (r.as_str(), q.as_str(), *a)).collect();
        let matrix = ingest_responses(&tsv(&body), &questions).unwrap();
        let sel = select_norms(&matrix, Fraction::new(0, 1).unwrap(), ComparisonMode::NonStrict);
        assert_eq!(sel.approved.len(), 88);
        assert_eq!(divergence(&matrix, &sel, "r1").unwrap(), 58);
    }

    #[test]
    fn sweep_constant_above_max_na() {
        let matrix = matrix_from_counts(&[(3, 7, 0), (6, 4, 0)]); // max NA = 0.6
        let thresholds: Vec<Fraction> = [70u64, 80, 90, 100]
            .iter()
            .map(|p| Fraction::new(*p, 100).unwrap())
            .collect();
        let sweep = sweep_divergence(&matrix, &thresholds, ComparisonMode::Strict).unwrap();
        let first = sweep[0].1;
        assert!(sweep.iter().all(|(_, ds)| *ds == first));
    }

    #[test]
    fn sweep_single_respondent_extremes() {
        let questions = ids(10);
        let mut rows = Vec::new();
        for i in 1..=10 {
            rows.push(("r1".to_string(), format!("q{i}"), "Y"));
        }
        let body: Vec<(&str, &str, &str)> =
            rows.iter().map(|(r, q, a)| (r.as_str(), q.as_str(), *a)).collect();
        let matrix = ingest_responses(&tsv(&body), &questions).unwrap();
        let low = sweep_divergence(
            &matrix,
            &[Fraction::new(0, 1).unwrap()],
            ComparisonMode::NonStrict,
        )
        .unwrap();
        assert_eq!(low[0].1, 0.0); // all approved, all answered Yes
        let high = sweep_divergence(
            &matrix,
            &[Fraction::new(1, 1).unwrap()],
            ComparisonMode::Strict,
        )
        .unwrap();
        assert_eq!(high[0].1, 10.0); // nothing approved
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!(Fraction::parse_decimal("0.5").unwrap(), Fraction::new(5, 10).unwrap());
        assert_eq!(Fraction::parse_decimal("1").unwrap(), Fraction::new(1, 1).unwrap());
        assert_eq!(Fraction::parse_decimal("0.66").unwrap(), Fraction::new(66, 100).unwrap());
        assert!(Fraction::parse_decimal("1.01").is_err());
        assert!(Fraction::parse_decimal("-0.5").is_err());
        assert!(Fraction::parse_decimal("abc").is_err());
    }

    #[test]
    fn exact_boundary_comparison() {
        let half = Fraction::new(1, 2).unwrap();
        assert!(!half.passed_by(15, 30, ComparisonMode::Strict));
        assert!(half.passed_by(15, 30, ComparisonMode::NonStrict));
        assert!(half.passed_by(16, 30, ComparisonMode::Strict));
    }

    fn arb_matrix() -> impl Strategy<Value = ResponseMatrix> {
        (1usize..8, 1usize..8).prop_flat_map(|(nq, nr)| {
            proptest::collection::vec(proptest::option::of(0u8..5), nq * nr).prop_map(
                move |cells| {
                    let questions = ids(nq);
                    let mut rows = Vec::new();
                    for r in 0..nr {
                        for q in 0..nq {
                            if let Some(a) = cells[r * nq + q] {
                                let token = match a {
                                    0 => "Y",
                                    1 => "N",
                                    2 => "DMS1",
                                    3 => "DMS2",
                                    _ => "DMS3",
                                };
                                rows.push((format!("r{r}"), format!("q{}", q + 1), token));
                            }
                        }
                    }
                    let body: Vec<(&str, &str, &str)> = rows
                        .iter()
                        .map(|(r, q, a)| (r.as_str(), q.as_str(), *a))
                        .collect();
                    ingest_responses(&tsv(&body), &questions).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_stay_in_range(matrix in arb_matrix()) {
            for q in matrix.questions() {
                if let Ok(na) = norm_approval(&matrix, q) {
                    prop_assert!((0.0..=1.0).contains(&na));
                }
            }
            for r in matrix.respondents() {
                let ua = user_approval(&matrix, r).unwrap();
                prop_assert!((0.0..=1.0).contains(&ua));
                let sel = select_norms(&matrix, Fraction::new(1, 2).unwrap(), ComparisonMode::Strict);
                let ds = divergence(&matrix, &sel, r).unwrap();
                prop_assert!(ds as usize <= matrix.answers_of(r).unwrap().len());
            }
        }

        #[test]
        fn approved_shrinks_as_threshold_grows(matrix in arb_matrix()) {
            let mut last_approved = usize::MAX;
            let mut last_disapproved = usize::MAX;
            for pct in 0..=20u64 {
                let t = Fraction::new(pct * 5, 100).unwrap();
                let sel = select_norms(&matrix, t, ComparisonMode::Strict);
                prop_assert!(sel.approved.len() <= last_approved);
                // The disapproved bucket is carved out of non-approved
                // questions, so compare the raw No-ratio passes instead.
                let nd_passes = matrix.questions().iter().filter(|q| {
                    let c = matrix.question_counts(q).unwrap();
                    c.total() > 0 && t.passed_by(c.no, c.total(), ComparisonMode::Strict)
                }).count();
                prop_assert!(nd_passes <= last_disapproved);
                last_approved = sel.approved.len();
                last_disapproved = nd_passes;
            }
        }

        #[test]
        fn buckets_partition_and_disjoint_at_majority(matrix in arb_matrix()) {
            let sel = select_norms(&matrix, Fraction::new(1, 2).unwrap(), ComparisonMode::Strict);
            let total = sel.approved.len() + sel.disapproved.len() + sel.undecided.len();
            prop_assert_eq!(total, matrix.questions().len());
            for q in &sel.approved {
                prop_assert!(!sel.disapproved.contains(q));
            }
        }

        #[test]
        fn divergence_symmetric_under_joint_flip(matrix in arb_matrix()) {
            // Flipping every community bit and every user bit leaves the XOR
            // sum unchanged: compare DS against the flipped reconstruction.
            let sel = select_norms(&matrix, Fraction::new(1, 2).unwrap(), ComparisonMode::Strict);
            for r in matrix.respondents() {
                let ds = divergence(&matrix, &sel, r).unwrap();
                let flipped: u64 = matrix.answers_of(r).unwrap().iter().filter(|(q_idx, answer)| {
                    let u = !(*answer == AnswerKind::Yes);
                    let c = !sel.is_approved(*q_idx);
                    u != c
                }).count() as u64;
                prop_assert_eq!(ds, flipped);
            }
        }
    }
}
