//! `gsfit detect | fit | bench`.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 detection failure,
//! 3 fitted model above tolerance.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gsfit::benchmark::run_suite;
use gsfit::detect::detect_structure;
use gsfit::pipeline::{run, PipelineConfig, PipelineError};
use gsfit::{DomainBox, Expr, Oracle};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "gsfit", version, about = "Separable structure detection and symbolic fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect repeated variables, blocks and factors.
    Detect(RunArgs),
    /// Detect, fit every factor, and assemble a model.
    Fit(RunArgs),
    /// Run the benchmark cases.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Target expression over x1..xn.
    #[arg(long)]
    target: String,
    /// Number of variables; defaults to the largest index in the target.
    #[arg(long)]
    dims: Option<usize>,
    /// Lower bound, one value or a comma list.
    #[arg(long, default_value = "-3", allow_hyphen_values = true)]
    lo: String,
    /// Upper bound, one value or a comma list.
    #[arg(long, default_value = "3", allow_hyphen_values = true)]
    hi: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol_detect: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_target: f64,
    #[arg(long, default_value_t = 200)]
    samples_per_var: usize,
    #[arg(long, default_value_t = 12)]
    max_nodes: usize,
    #[arg(long, default_value_t = 3)]
    kmax: usize,
    /// Write the JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Case list such as `1-10` or `2,4,11`.
    #[arg(long, default_value = "1-10")]
    cases: String,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    /// Seed of the first repeat; repeat r uses seed + r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run cases concurrently.
    #[arg(long)]
    parallel: bool,
    /// Zero all timing fields so reruns produce identical files.
    #[arg(long)]
    no_timing: bool,
}

/// Everything needed to reproduce a detect or fit run.
#[derive(Serialize)]
struct RunConfig {
    target: String,
    dims: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    seed: u64,
    tol_detect: f64,
    tol_target: f64,
    samples_per_var: usize,
    max_nodes: usize,
    kmax: usize,
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn bounds(text: &str, dims: usize, name: &str) -> Result<Vec<f64>, Failure> {
    let values = text
        .split(',')
        .map(|s| f64::from_str(s.trim()))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| usage(format!("--{name}: {e}")))?;
    match values.len() {
        1 => Ok(vec![values[0]; dims]),
        n if n == dims => Ok(values),
        n => Err(usage(format!("--{name} has {n} values for {dims} variables"))),
    }
}

fn cases(text: &str) -> Result<Vec<usize>, Failure> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| usage(format!("--cases {part}: {e}")));
        match part.split_once('-') {
            Some((a, b)) => out.extend(parse(a)?..=parse(b)?),
            None => out.push(parse(part)?),
        }
    }
    if out.is_empty() || out.iter().any(|&k| !(1..=11).contains(&k)) {
        return Err(usage("--cases must name cases 1 to 11"));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn prepare(args: &RunArgs) -> Result<(RunConfig, Oracle, PipelineConfig), Failure> {
    let parsed: Expr = args.target.parse().map_err(|e| usage(format!("target: {e}")))?;
    let dims = args.dims.unwrap_or(parsed.arity());
    let expr = Expr::parse(&args.target, dims).map_err(|e| usage(format!("target: {e}")))?;
    let lower = bounds(&args.lo, dims, "lo")?;
    let upper = bounds(&args.hi, dims, "hi")?;
    let domain = DomainBox::new(lower.clone(), upper.clone()).map_err(|e| usage(e.to_string()))?;
    let oracle = Oracle::new(expr, domain).map_err(|e| usage(e.to_string()))?;

    let mut pc = PipelineConfig::seeded(args.seed);
    pc.detect.tol = args.tol_detect;
    pc.detect.k_max = args.kmax;
    pc.assemble.target = args.tol_target;
    pc.assemble.samples_per_var = args.samples_per_var;
    pc.max_nodes = args.max_nodes;
    pc.validate().map_err(usage)?;

    let rc = RunConfig {
        target: args.target.clone(),
        dims,
        lower,
        upper,
        seed: args.seed,
        tol_detect: args.tol_detect,
        tol_target: args.tol_target,
        samples_per_var: args.samples_per_var,
        max_nodes: args.max_nodes,
        kmax: args.kmax,
        out: args.out.clone(),
    };
    Ok((rc, oracle, pc))
}

fn emit(value: &serde_json::Value, out: Option<&PathBuf>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => {
            // A closed pipe (e.g. `| head`) is not an error for the caller.
            let _ = writeln!(io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

fn cmd_detect(args: &RunArgs) -> Result<(), Failure> {
    let (rc, oracle, pc) = prepare(args)?;
    let s = detect_structure(&oracle, &pc.detect).map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    emit(&json!({ "config": rc, "structure": s.to_json() }), args.out.as_ref())
}

fn cmd_fit(args: &RunArgs) -> Result<(), Failure> {
    let (rc, oracle, pc) = prepare(args)?;
    let outcome = run(&oracle, &pc).map_err(|e| Failure {
        code: match e {
            PipelineError::Config(_) => 1,
            PipelineError::Detect(_) => 2,
            PipelineError::Assemble(_) => 3,
        },
        message: e.to_string(),
    })?;
    let mut value = outcome.to_json();
    value["config"] = serde_json::to_value(&rc).expect("config serializes");
    emit(&value, args.out.as_ref())?;
    if outcome.model.val_mse > args.tol_target || !outcome.model.val_mse.is_finite() {
        return Err(Failure {
            code: 3,
            message: format!("validation MSE {:e} above {:e}", outcome.model.val_mse, args.tol_target),
        });
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let list = cases(&args.cases)?;
    if args.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let mut report = run_suite(&list, args.repeats, args.seed, args.parallel);
    if args.no_timing {
        report = report.without_timing();
    }
    eprint!("{}", report.table());
    let value = json!({
        "config": {
            "cases": list,
            "repeats": args.repeats,
            "seed": args.seed,
            "parallel": args.parallel,
            "pipeline": PipelineConfig::default(),
        },
        "cases": report.cases,
        "reports": report.reports,
    });
    emit(&value, args.out.as_ref())?;
    if !report.all_structures_match() {
        return Err(Failure {
            code: 2,
            message: "some runs did not recover the expected structure".into(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gsfit: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
