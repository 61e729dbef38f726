//! Command-line front-end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use aggrec_core::{
    evaluate_program, parse_program, stratifier, EvalError, EvalMode, EvalOptions, FactSet,
    Predicate,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::facts;
use crate::output::{render_csv, render_table, Format};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_STRATIFY: i32 = 3;
pub const EXIT_EVAL: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "aggrec",
    version,
    about = "Datalog with aggregates in recursion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a program and print query results.
    Run(RunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Completed,
    StratifiedRewrite,
    Naive,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Datalog program.
    #[arg(long, short)]
    program: PathBuf,
    /// CSV fact file, one `predicate,field,...` record per line.
    #[arg(long, short)]
    facts: Vec<PathBuf>,
    /// Whitespace-separated fact file named after its predicate
    /// (`edge.facts`).
    #[arg(long = "pred-facts")]
    pred_facts: Vec<PathBuf>,
    /// Predicate to print; repeatable.
    #[arg(long, short)]
    query: Vec<String>,
    /// Print every derived predicate.
    #[arg(long)]
    all: bool,
    #[arg(long, value_enum, default_value = "completed")]
    mode: Mode,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    /// Tolerance on float columns when testing whether a stage repeats.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Print one line per fixpoint round or stage to stderr.
    #[arg(long)]
    trace: bool,
    /// Keep only the stages still readable by the rules.
    #[arg(long)]
    retain_latest: bool,
    /// Scan staged predicates for max-stage queries instead of reading the
    /// last stage directly.
    #[arg(long)]
    no_final_delta: bool,
    /// Cross-check modes and reference oracles.
    #[arg(long)]
    verify: bool,
    /// Print the stratification and PCC evidence.
    #[arg(long)]
    explain_strata: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match cli.command {
        Command::Run(a) => match run(&a, out, err) {
            Ok(code) => code,
            Err((code, msg)) => {
                let _ = writeln!(err, "error: {msg}");
                code
            }
        },
    }
}

type Failure = (i32, String);

fn eval_code(e: &EvalError) -> i32 {
    match e {
        EvalError::Stratify(_) | EvalError::Rewrite(_) => EXIT_STRATIFY,
        EvalError::EdbConflict(_) | EvalError::EdbArity { .. } => EXIT_PARSE,
        EvalError::InvalidOptions => EXIT_USAGE,
        _ => EXIT_EVAL,
    }
}

fn run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(&a.program)
        .map_err(|e| (EXIT_PARSE, format!("{}: {e}", a.program.display())))?;
    let program =
        parse_program(&text).map_err(|e| (EXIT_PARSE, format!("{}: {e}", a.program.display())))?;
    let plan = stratifier::plan(&program).map_err(|e| (EXIT_STRATIFY, e.to_string()))?;
    if a.explain_strata {
        let _ = write!(out, "{}", plan.explain(&program));
    }

    let mut edb = FactSet::new();
    for f in &a.facts {
        facts::load_csv(f, &mut edb).map_err(|e| (EXIT_PARSE, e.to_string()))?;
    }
    for f in &a.pred_facts {
        facts::load_predicate_file(f, &mut edb).map_err(|e| (EXIT_PARSE, e.to_string()))?;
    }

    let idb = program.idb_predicates();
    let queries: Vec<Predicate> = if a.all {
        idb.iter().cloned().collect()
    } else {
        a.query.iter().map(|q| Predicate::new(q)).collect()
    };
    if queries.is_empty() && !a.verify && !a.explain_strata {
        return Err((
            EXIT_USAGE,
            "nothing to print: give --query, --all, --verify or --explain-strata".into(),
        ));
    }
    if let Some(q) = queries.iter().find(|q| program.arity(q).is_none()) {
        return Err((EXIT_USAGE, format!("unknown predicate {q}")));
    }

    let opts = EvalOptions {
        mode: match a.mode {
            Mode::Completed => EvalMode::Completed,
            Mode::StratifiedRewrite => EvalMode::StratifiedRewrite,
            Mode::Naive => EvalMode::Naive,
        },
        max_iterations: a.max_iterations,
        convergence_epsilon: a.epsilon,
        trace: a.trace,
        retain_latest: a.retain_latest,
        final_delta: !a.no_final_delta,
    };
    if a.epsilon.is_nan() || a.epsilon < 0.0 {
        return Err((EXIT_USAGE, "--epsilon must be a non-negative number".into()));
    }
    let result =
        evaluate_program(&program, &edb, &opts).map_err(|e| (eval_code(&e), e.to_string()))?;
    for line in &result.trace {
        let _ = writeln!(err, "{line}");
    }
    for w in &result.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    if result.limit_reached {
        let _ = writeln!(
            err,
            "warning: stopped after {} iterations; results are partial",
            a.max_iterations
        );
    }

    for q in &queries {
        // extensional predicates print the loaded facts
        let src = if idb.contains(q) { &result.facts } else { &edb };
        let tuples = src.tuples(q.name());
        let text = match a.format {
            Format::Csv => render_csv(q.name(), tuples),
            Format::Table => render_table(q.name(), tuples),
        };
        let _ = write!(out, "{text}");
    }

    if a.verify {
        let base = if opts.mode == EvalMode::Completed {
            result
        } else {
            let o = EvalOptions {
                mode: EvalMode::Completed,
                trace: false,
                ..opts.clone()
            };
            evaluate_program(&program, &edb, &o).map_err(|e| (eval_code(&e), e.to_string()))?
        };
        let checks = verify::verify(&program, &edb, &opts, &base);
        for c in &checks {
            let _ = writeln!(out, "{}", c.line());
        }
        if checks.iter().any(|c| c.failed()) {
            return Ok(EXIT_VERIFY);
        }
    }
    Ok(EXIT_OK)
}
