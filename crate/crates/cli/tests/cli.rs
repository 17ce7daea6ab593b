//! Command-level behavior: exit codes, file outputs, and the documented
//! space scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ci-norms"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ci_norms_cli_{tag}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

#[test]
fn gen_is_deterministic_and_batches_partition() {
    let dir = tmp_dir("gen");
    let schema = fixtures().join("classroom_mini.schema.json");
    for run_dir in ["a", "b"] {
        let out = run(&[
            "gen",
            "--schema",
            schema.to_str().unwrap(),
            "--batches",
            "5",
            "--seed",
            "3",
            "--out",
            dir.join(run_dir).to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0, "{out:?}");
    }
    let a = fs::read(dir.join("a/questions.tsv")).unwrap();
    let b = fs::read(dir.join("b/questions.tsv")).unwrap();
    assert_eq!(a, b, "questions files differ between runs");

    // The batches partition the questions file.
    let mut batch_ids = Vec::new();
    for i in 1..=5 {
        let text = fs::read_to_string(dir.join(format!("a/batches/batch_{i:02}.tsv"))).unwrap();
        for line in text.lines().skip(1) {
            batch_ids.push(line.split('\t').next().unwrap().to_string());
        }
    }
    let mut all_ids: Vec<String> = String::from_utf8(a)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    batch_ids.sort();
    all_ids.sort();
    assert_eq!(batch_ids, all_ids);
}

#[test]
fn gen_with_missing_schema_names_the_path() {
    let out = run(&["gen", "--schema", "/nonexistent/schema.json", "--out", "/tmp/x"]);
    assert_eq!(exit_code(&out), 3);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("/nonexistent/schema.json"), "{stderr}");
}

#[test]
fn select_writes_reports_and_sweep() {
    let dir = tmp_dir("select");
    let schema = fixtures().join("classroom_mini.schema.json");
    let responses = fixtures().join("classroom_mini_responses.tsv");
    let out = run(&[
        "gen",
        "--schema",
        schema.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let out = run(&[
        "select",
        "--questions",
        dir.join("questions.tsv").to_str().unwrap(),
        "--responses",
        responses.to_str().unwrap(),
        "--threshold",
        "0.5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let sweep = fs::read_to_string(dir.join("sweep.tsv")).unwrap();
    assert_eq!(sweep.lines().count(), 102, "header plus 101 thresholds");
    assert!(dir.join("selection.tsv").exists());
    assert!(dir.join("question_metrics.tsv").exists());
    assert!(dir.join("respondent_metrics.tsv").exists());
}

#[test]
fn select_buckets_match_hand_computation() {
    let dir = tmp_dir("buckets");
    let schema = fixtures().join("classroom_mini.schema.json");
    let out = run(&[
        "gen",
        "--schema",
        schema.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let questions = fs::read_to_string(dir.join("questions.tsv")).unwrap();
    let ids: Vec<&str> = questions
        .lines()
        .skip(1)
        .take(3)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    // q0: 3Y/1N -> approved; q1: 1Y/3N -> disapproved; q2: 1Y/1N/2DMS -> tie.
    let mut responses = String::from("respondent_id\tnorm_id\tanswer\n");
    for (r, answers) in [("Y", "N", "Y"), ("Y", "N", "N"), ("Y", "N", "DMS1"), ("N", "Y", "DMS2")]
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("r{i}"), t))
    {
        responses.push_str(&format!("{r}\t{}\t{}\n", ids[0], answers.0));
        responses.push_str(&format!("{r}\t{}\t{}\n", ids[1], answers.1));
        responses.push_str(&format!("{r}\t{}\t{}\n", ids[2], answers.2));
    }
    fs::write(dir.join("responses.tsv"), responses).unwrap();
    let out = run(&[
        "select",
        "--questions",
        dir.join("questions.tsv").to_str().unwrap(),
        "--responses",
        dir.join("responses.tsv").to_str().unwrap(),
        "--threshold",
        "0.5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let selection = fs::read_to_string(dir.join("selection.tsv")).unwrap();
    assert!(selection.contains(&format!("{}\tapproved\t0", ids[0])));
    assert!(selection.contains(&format!("{}\tdisapproved\t0", ids[1])));
    assert!(selection.contains(&format!("{}\tundecided\t1", ids[2])));
}

#[test]
fn threshold_above_one_is_a_usage_error() {
    let out = run(&[
        "select",
        "--questions",
        "q.tsv",
        "--responses",
        "r.tsv",
        "--threshold",
        "1.01",
    ]);
    assert_eq!(exit_code(&out), 2);
}

fn narrated_schema_json(disjoint: bool) -> String {
    let ontology = if disjoint {
        r#"{"disjoint": [["professor","ta"],["professor","student"],["ta","student"]]}"#
    } else {
        r#"{"implications": [["ta","student"]]}"#
    };
    format!(
        r#"{{
        "context": "class",
        "roles": ["professor", "ta", "student"],
        "attributes": ["test_result"],
        "transmission_principles": ["none"],
        "sender_roles": ["professor"],
        "recipient_roles": ["ta", "student"],
        "subject_relations": ["subject_in_role:student"],
        "ontology": {ontology}
    }}"#
    )
}

/// Marks the professor->ta norm approved and professor->student disapproved.
fn narrated_selection(questions_tsv: &str) -> String {
    let mut rows = String::from("norm_id\tbucket\ttie\n");
    for line in questions_tsv.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let bucket = if cols[3] == "ta" { "approved" } else { "disapproved" };
        rows.push_str(&format!("{}\t{bucket}\t0\n", cols[0]));
    }
    rows
}

#[test]
fn verify_exit_code_reflects_findings() {
    for (disjoint, expected_exit) in [(false, 1), (true, 0)] {
        let dir = tmp_dir(if disjoint { "verify_disjoint" } else { "verify_overlap" });
        let schema_path = dir.join("schema.json");
        fs::write(&schema_path, narrated_schema_json(disjoint)).unwrap();
        let out = run(&[
            "gen",
            "--schema",
            schema_path.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0);
        let questions = fs::read_to_string(dir.join("questions.tsv")).unwrap();
        fs::write(dir.join("selection.tsv"), narrated_selection(&questions)).unwrap();
        let out = run(&[
            "verify",
            "--schema",
            schema_path.to_str().unwrap(),
            "--questions",
            dir.join("questions.tsv").to_str().unwrap(),
            "--selection",
            dir.join("selection.tsv").to_str().unwrap(),
            "--export-epr",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), expected_exit, "disjoint={disjoint} {out:?}");
        let violations = fs::read_to_string(dir.join("violations.txt")).unwrap();
        if disjoint {
            assert!(violations.starts_with("violations\t0"));
        } else {
            assert!(violations.contains("semantic"));
            assert!(violations.contains("{student,ta}"));
        }
        assert!(dir.join("epr/transitivity.smt2").exists());
        let epr_files: Vec<_> = fs::read_dir(dir.join("epr")).unwrap().collect();
        assert!(epr_files.len() >= 2, "per-norm queries plus transitivity");
    }
}

#[test]
fn space_flow_post_view_consent() {
    let dir = tmp_dir("space");
    let schema = fixtures().join("classroom_mini.schema.json");
    let log = dir.join("space.log");
    let rules = dir.join("rules.dl");
    // professor may share a student's grades with the TA; the permission
    // principle is consent-gated.
    fs::write(
        &rules,
        "allowed(classroom, Sndr, Recp, Subj, grades, permission) :- \
         inrole(classroom, Sndr, professor), inrole(classroom, Recp, ta), \
         inrole(classroom, Subj, student).\n",
    )
    .unwrap();
    let base = [
        "space",
        "--schema",
        schema.to_str().unwrap(),
        "--rules",
        rules.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ];
    let run_space = |extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(extra);
        run(&args)
    };
    for (actor, role) in [("tina", "ta"), ("paula", "professor"), ("stu", "student")] {
        let out = run_space(&["role", "--actor", actor, "--role", role]);
        assert_eq!(exit_code(&out), 0, "{out:?}");
    }
    let out = run_space(&[
        "post",
        "--id",
        "p1",
        "--author",
        "paula",
        "--subject",
        "stu",
        "--attribute",
        "grades",
        "--tp",
        "permission",
        "--payload",
        "B+",
    ]);
    assert_eq!(exit_code(&out), 0, "{out:?}");

    // Consent-gated: invisible until the subject consents.
    let out = run_space(&["view", "--viewer", "tina"]);
    assert_eq!(exit_code(&out), 0);
    let listing = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listing.lines().count(), 1, "header only: {listing}");

    let out = run_space(&["consent", "--granter", "stu", "--post", "p1"]);
    assert_eq!(exit_code(&out), 0);
    let out = run_space(&["view", "--viewer", "tina"]);
    let listing = String::from_utf8(out.stdout).unwrap();
    assert!(listing.lines().count() == 2 && listing.contains("p1"), "{listing}");

    // A non-permitted viewer gets an empty listing and success.
    let out = run_space(&["view", "--viewer", "stu"]);
    assert_eq!(exit_code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}

#[test]
fn space_repost_follows_view_rights() {
    let dir = tmp_dir("repost");
    let schema_path = dir.join("schema.json");
    fs::write(
        &schema_path,
        r#"{
        "context": "class",
        "roles": ["ta", "professor", "chair", "student"],
        "attributes": ["attendance"],
        "transmission_principles": ["poor_performance"],
        "sender_roles": ["ta", "professor"],
        "recipient_roles": ["professor", "chair"],
        "subject_relations": ["subject_in_role:student"],
        "ontology": {"disjoint": [
            ["ta","professor"],["ta","chair"],["ta","student"],
            ["professor","chair"],["professor","student"],["chair","student"]
        ]}
    }"#,
    )
    .unwrap();
    let rules = dir.join("rules.dl");
    fs::write(
        &rules,
        "allowed(class, Sndr, Recp, Subj, attendance, poor_performance) :- \
         inrole(class, Sndr, ta), inrole(class, Recp, professor), inrole(class, Subj, student).\n\
         allowed(class, Sndr, Recp, Subj, attendance, poor_performance) :- \
         inrole(class, Sndr, professor), inrole(class, Recp, chair), inrole(class, Subj, student).\n",
    )
    .unwrap();
    let log = dir.join("space.log");
    let base = [
        "space",
        "--schema",
        schema_path.to_str().unwrap(),
        "--rules",
        rules.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ];
    let run_space = |extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(extra);
        run(&args)
    };
    for (actor, role) in [
        ("tina", "ta"),
        ("paula", "professor"),
        ("carl", "chair"),
        ("stu", "student"),
    ] {
        assert_eq!(exit_code(&run_space(&["role", "--actor", actor, "--role", role])), 0);
    }
    assert_eq!(
        exit_code(&run_space(&[
            "post",
            "--id",
            "p1",
            "--author",
            "tina",
            "--subject",
            "stu",
            "--attribute",
            "attendance",
            "--tp",
            "poor_performance",
        ])),
        0
    );
    // The chair cannot repost what the chair cannot see.
    let out = run_space(&["repost", "--reposter", "carl", "--post", "p1", "--id", "p2"]);
    assert_eq!(exit_code(&out), 3);
    // The professor can; afterwards the chair sees the repost only.
    let out = run_space(&["repost", "--reposter", "paula", "--post", "p1", "--id", "p2"]);
    assert_eq!(exit_code(&out), 0, "{out:?}");
    let out = run_space(&["view", "--viewer", "carl"]);
    let listing = String::from_utf8(out.stdout).unwrap();
    assert!(listing.contains("p2") && !listing.contains("p1\t"), "{listing}");
}
