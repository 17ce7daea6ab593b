//! Pipeline driver: generate questions, aggregate responses, select and
//! compile norms, verify consistency, and run the enforcement space.
//!
//! Exit codes: 0 success (verify: no findings), 1 verify findings, 2 usage
//! error, 3 input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ci_norms::acspace::{InformationSpace, ViewFilter};
use ci_norms::logic::{compile_norms, parse_program, Rule};
use ci_norms::normgen::{
    apply_restrictions, enumerate_candidates, load_restrictions, render_all, split_batches,
    CandidateNorm, Question,
};
use ci_norms::report;
use ci_norms::responses::{
    ingest_responses, select_norms, sweep_divergence, ComparisonMode, Fraction, ResponseMatrix,
    SelectionResult,
};
use ci_norms::schema::{load_schema, ContextSchema};
use ci_norms::verifier::{
    check_semantic_consistency, check_transitivity, export_epr, ExclusionProperty, MetaProperty,
    TpMatchPolicy, Violation,
};

#[derive(Parser)]
#[command(name = "ci-norms", version, about = "Contextual-integrity norm pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate candidate norms and survey questions from a schema.
    Gen(GenArgs),
    /// Aggregate crowd responses and select norms at a threshold.
    Select(SelectArgs),
    /// Compile the approved set and check semantic and transitive
    /// consistency. Exits 1 when violations are found.
    Verify(VerifyArgs),
    /// Run every stage: gen, select, compile, verify.
    Pipeline(PipelineArgs),
    /// Operate the enforcement space (post, consent, view, repost, role).
    Space(SpaceArgs),
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "CI_NORMS_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Schema document (JSON).
    #[arg(long)]
    schema: PathBuf,
    /// Restrictions document (JSON), removing nonsensical candidates.
    #[arg(long)]
    restrictions: Option<PathBuf>,
    /// Also split the questions into this many survey batches.
    #[arg(long)]
    batches: Option<usize>,
    /// Shuffle seed for batching.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct SelectArgs {
    /// Questions export produced by `gen`.
    #[arg(long)]
    questions: PathBuf,
    /// Response file (respondent_id, norm_id, answer).
    #[arg(long)]
    responses: PathBuf,
    /// Approval threshold in [0, 1], e.g. 0.5.
    #[arg(long, value_parser = parse_threshold)]
    threshold: Fraction,
    /// Threshold comparison mode.
    #[arg(long, default_value = "strict", value_parser = parse_mode)]
    mode: ComparisonMode,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// Selection file produced by `select`.
    #[arg(long)]
    selection: PathBuf,
    /// Maximum base size when enumerating role profiles.
    #[arg(long, default_value_t = 2)]
    profile_bound: usize,
    /// Transmission-principle matching for chain composition.
    #[arg(long, default_value = "exact", value_parser = parse_tp_match)]
    tp_match: TpMatchPolicy,
    /// Also write SMT-LIB consistency queries for an external solver.
    #[arg(long)]
    export_epr: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    restrictions: Option<PathBuf>,
    #[arg(long)]
    responses: PathBuf,
    #[arg(long, value_parser = parse_threshold)]
    threshold: Fraction,
    #[arg(long, default_value = "strict", value_parser = parse_mode)]
    mode: ComparisonMode,
    #[arg(long, default_value_t = 2)]
    profile_bound: usize,
    #[arg(long, default_value = "exact", value_parser = parse_tp_match)]
    tp_match: TpMatchPolicy,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    export_epr: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct SpaceArgs {
    /// Schema document (JSON).
    #[arg(long)]
    schema: PathBuf,
    /// Compiled privacy logic (`allowed` rules); omit for an empty rule set.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Append-only space log; created on first mutation.
    #[arg(long)]
    log: PathBuf,
    #[command(subcommand)]
    action: SpaceAction,
}

#[derive(Subcommand)]
enum SpaceAction {
    /// Assign a role to an actor.
    Role {
        #[arg(long)]
        actor: String,
        #[arg(long)]
        role: String,
    },
    /// Publish a post into the space.
    Post {
        #[arg(long)]
        id: String,
        #[arg(long)]
        author: String,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        attribute: String,
        #[arg(long)]
        tp: String,
        #[arg(long, default_value = "")]
        payload: String,
    },
    /// Publish a consent control message for a post.
    Consent {
        #[arg(long)]
        granter: String,
        #[arg(long)]
        post: String,
    },
    /// List the posts a viewer is allowed to see.
    View {
        #[arg(long)]
        viewer: String,
        #[arg(long)]
        attribute: Option<String>,
        #[arg(long)]
        author: Option<String>,
        #[arg(long)]
        subject: Option<String>,
    },
    /// Repost an existing post under a new author.
    Repost {
        #[arg(long)]
        reposter: String,
        #[arg(long)]
        post: String,
        #[arg(long)]
        id: String,
    },
}

fn parse_threshold(text: &str) -> Result<Fraction, String> {
    Fraction::parse_decimal(text).map_err(|e| e.to_string())
}

fn parse_mode(text: &str) -> Result<ComparisonMode, String> {
    ComparisonMode::parse(text).ok_or_else(|| "expected `strict` or `nonstrict`".to_string())
}

fn parse_tp_match(text: &str) -> Result<TpMatchPolicy, String> {
    TpMatchPolicy::parse(text).ok_or_else(|| "expected `exact` or `ignore`".to_string())
}

/// An input-level failure: exit code 3 with a diagnostic naming the cause.
struct InputError(String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

type CmdResult = Result<u8, InputError>;

fn read_file(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path)
        .map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), InputError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| InputError(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| InputError(format!("cannot write {}: {e}", path.display())))
}

fn load_schema_file(path: &Path) -> Result<ContextSchema, InputError> {
    Ok(load_schema(&read_file(path)?)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Select(args) => cmd_select(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Space(args) => cmd_space(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(InputError(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}

fn generate_questions(
    schema: &ContextSchema,
    restrictions_path: Option<&Path>,
) -> Result<Vec<Question>, InputError> {
    let candidates = enumerate_candidates(schema);
    let restricted = match restrictions_path {
        Some(path) => {
            let restrictions = load_restrictions(&read_file(path)?)?;
            apply_restrictions(candidates, &restrictions, schema)?
        }
        None => candidates,
    };
    Ok(render_all(&restricted, schema)?)
}

fn write_batches(
    out: &Path,
    questions: &[Question],
    batches: Option<usize>,
    seed: u64,
) -> Result<(), InputError> {
    let Some(count) = batches else {
        return Ok(());
    };
    let split = split_batches(questions, count, seed)?;
    for (i, batch) in split.iter().enumerate() {
        let path = out.join("batches").join(format!("batch_{:02}.tsv", i + 1));
        write_file(&path, &report::render_questions(batch))?;
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let schema = load_schema_file(&args.schema)?;
    let questions = generate_questions(&schema, args.restrictions.as_deref())?;
    write_file(
        &args.out.out.join("questions.tsv"),
        &report::render_questions(&questions),
    )?;
    write_batches(&args.out.out, &questions, args.batches, args.seed)?;
    println!("generated {} questions", questions.len());
    Ok(0)
}

struct SelectionOutput {
    selection: SelectionResult,
}

fn run_selection(
    out: &Path,
    questions: &[Question],
    responses_path: &Path,
    threshold: Fraction,
    mode: ComparisonMode,
) -> Result<SelectionOutput, InputError> {
    let ids: Vec<String> = questions.iter().map(|q| q.norm.norm_id.clone()).collect();
    let matrix: ResponseMatrix = ingest_responses(&read_file(responses_path)?, &ids)?;
    let selection = select_norms(&matrix, threshold, mode);
    write_file(
        &out.join("selection.tsv"),
        &report::render_selection_rows(&matrix, &selection),
    )?;
    write_file(
        &out.join("selection.txt"),
        &report::render_selection_summary(&selection, mode, threshold, matrix.questions().len()),
    )?;
    write_file(
        &out.join("question_metrics.tsv"),
        &report::render_question_metrics(&matrix),
    )?;
    write_file(
        &out.join("respondent_metrics.tsv"),
        &report::render_respondent_metrics(&matrix, &selection),
    )?;
    let thresholds: Vec<Fraction> = (0..=100)
        .map(|p| Fraction::new(p, 100).expect("p <= 100"))
        .collect();
    let sweep = sweep_divergence(&matrix, &thresholds, mode)?;
    write_file(&out.join("sweep.tsv"), &report::render_sweep(&sweep))?;
    Ok(SelectionOutput { selection })
}

fn cmd_select(args: SelectArgs) -> CmdResult {
    let questions = report::parse_questions(&read_file(&args.questions)?)?;
    let output = run_selection(
        &args.out.out,
        &questions,
        &args.responses,
        args.threshold,
        args.mode,
    )?;
    println!(
        "approved {}, disapproved {}, undecided {}",
        output.selection.approved.len(),
        output.selection.disapproved.len(),
        output.selection.undecided.len()
    );
    Ok(0)
}

struct VerifyOutput {
    violations: Vec<Violation>,
}

#[allow(clippy::too_many_arguments)]
fn run_verify(
    out: &Path,
    schema: &ContextSchema,
    questions: &[Question],
    approved_ids: &[String],
    disapproved_ids: &[String],
    profile_bound: usize,
    tp_match: TpMatchPolicy,
    export: bool,
) -> Result<VerifyOutput, InputError> {
    let by_id = |ids: &[String]| -> Result<Vec<CandidateNorm>, InputError> {
        ids.iter()
            .map(|id| {
                questions
                    .iter()
                    .find(|q| q.norm.norm_id == *id)
                    .map(|q| q.norm.clone())
                    .ok_or_else(|| InputError(format!("selection references unknown norm `{id}`")))
            })
            .collect()
    };
    let approved = by_id(approved_ids)?;
    let disapproved = by_id(disapproved_ids)?;
    let rules: Vec<Rule> = compile_norms(&approved, schema);
    let mut compiled = String::new();
    for rule in &rules {
        compiled.push_str(&format!("{rule}.\n"));
    }
    write_file(&out.join("compiled.dl"), &compiled)?;

    let mut violations = check_semantic_consistency(&rules, &disapproved, schema, profile_bound)?;
    violations.extend(check_transitivity(&rules, schema, profile_bound, tp_match)?);
    write_file(
        &out.join("violations.txt"),
        &report::render_violations(&violations),
    )?;

    if export {
        for norm in &disapproved {
            let property = MetaProperty::Exclusion(ExclusionProperty::from_disapproved(norm));
            let text = export_epr(&rules, &property, schema)?;
            let path = out
                .join("epr")
                .join(format!("semantic_{}.smt2", norm.norm_id));
            write_file(&path, &text)?;
        }
        let property = MetaProperty::TransitiveClosure { policy: tp_match };
        let text = export_epr(&rules, &property, schema)?;
        write_file(&out.join("epr").join("transitivity.smt2"), &text)?;
    }
    Ok(VerifyOutput { violations })
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let schema = load_schema_file(&args.schema)?;
    let questions = report::parse_questions(&read_file(&args.questions)?)?;
    let (approved, disapproved, _) = report::parse_selection_rows(&read_file(&args.selection)?)?;
    let output = run_verify(
        &args.out.out,
        &schema,
        &questions,
        &approved,
        &disapproved,
        args.profile_bound,
        args.tp_match,
        args.export_epr,
    )?;
    println!("{} violation(s) found", output.violations.len());
    Ok(u8::from(!output.violations.is_empty()))
}

fn cmd_pipeline(args: PipelineArgs) -> CmdResult {
    let out = &args.out.out;
    let schema = load_schema_file(&args.schema)?;
    let questions = generate_questions(&schema, args.restrictions.as_deref())?;
    write_file(
        &out.join("questions.tsv"),
        &report::render_questions(&questions),
    )?;
    write_batches(out, &questions, args.batches, args.seed)?;
    let selected = run_selection(out, &questions, &args.responses, args.threshold, args.mode)?;
    let verify = run_verify(
        out,
        &schema,
        &questions,
        &selected.selection.approved,
        &selected.selection.disapproved,
        args.profile_bound,
        args.tp_match,
        args.export_epr,
    )?;
    println!(
        "questions {}, approved {}, disapproved {}, undecided {}, violations {}",
        questions.len(),
        selected.selection.approved.len(),
        selected.selection.disapproved.len(),
        selected.selection.undecided.len(),
        verify.violations.len()
    );
    Ok(0)
}

fn cmd_space(args: SpaceArgs) -> CmdResult {
    let schema = load_schema_file(&args.schema)?;
    let rules: Vec<Rule> = match &args.rules {
        Some(path) => {
            let program = parse_program(&read_file(path)?)?;
            if !program.facts().is_empty() {
                return Err(InputError(format!(
                    "rules file {} contains facts; expected rules only",
                    path.display()
                )));
            }
            program.rules().to_vec()
        }
        None => Vec::new(),
    };
    let log_text = if args.log.exists() {
        read_file(&args.log)?
    } else {
        String::new()
    };
    let mut space = InformationSpace::replay(schema, rules, &log_text)?;

    match args.action {
        SpaceAction::Role { actor, role } => {
            space.assign_role(&actor, &role)?;
            write_file(&args.log, &space.to_log())?;
            println!("role {role} assigned to {actor}");
        }
        SpaceAction::Post {
            id,
            author,
            subject,
            attribute,
            tp,
            payload,
        } => {
            space.publish(&id, &author, &subject, &attribute, &tp, &payload)?;
            write_file(&args.log, &space.to_log())?;
            println!("post {id} published");
        }
        SpaceAction::Consent { granter, post } => {
            space.grant_consent(&granter, &post)?;
            write_file(&args.log, &space.to_log())?;
            println!("consent by {granter} recorded for {post}");
        }
        SpaceAction::View {
            viewer,
            attribute,
            author,
            subject,
        } => {
            let filter = ViewFilter {
                attribute,
                author,
                subject,
            };
            let posts = space.view_query(&viewer, &filter)?;
            println!("post_id\tauthor\tsubject\tattribute\ttp\tpayload");
            for post in posts {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    post.post_id, post.author, post.subject, post.attribute, post.tp, post.payload
                );
            }
        }
        SpaceAction::Repost { reposter, post, id } => {
            space.repost(&reposter, &post, &id)?;
            write_file(&args.log, &space.to_log())?;
            println!("post {post} reposted as {id} by {reposter}");
        }
    }
    Ok(0)
}
