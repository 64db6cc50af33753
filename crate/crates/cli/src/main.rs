mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use ecm_core::bounds::{envelope, envelope_curve, envelope_curve_csv};
use ecm_core::margins::{optimal_margins, weights};
use ecm_core::metrics::{average_precision_with_se, load_scores_csv, pr_curve, ranking_error_with, ranking_error_with_se};
use ecm_core::priors::{all_stats, background_count, load_counts, CountsFormat};
use ecm_core::sandbox::{run_experiment, ExperimentConfig};
use ecm_core::verify::{self, Suite};
use ecm_core::{Error, SlopeMode, TieMode};

use output::{emit, sig12, write_file, Format, Output};

/// Effective class-margin toolkit: AP and ranking-error bounds, class margins,
/// estimators, property verification and a synthetic training sandbox.
#[derive(Debug, Parser)]
#[command(name = "ecm", version, about, propagate_version = true)]
struct Cli {
    /// Seed for randomized commands; overrides both seeds of a `train` config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the primary output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Primary output encoding. CSV carries the command's table with a `# config:` header line.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal per-class margins and surrogate weights from instance counts.
    Margins(MarginsArgs),
    /// AP and detection-error bounds at a ratio and ranking error.
    Bounds(BoundsArgs),
    /// AP, ranking error and the PR curve of a scored sample.
    Metrics(MetricsArgs),
    /// Seeded property suites; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Train and audit a model on the synthetic long-tail sandbox.
    Train(TrainArgs),
}

#[derive(Debug, Args, Serialize)]
struct MarginsArgs {
    /// Class counts as JSON (`categories`) or CSV (`id,name,instance_count`), chosen by extension.
    #[arg(long)]
    counts: PathBuf,
    /// Background-to-foreground ratio; overrides `background_ratio` in the counts file.
    #[arg(long, allow_negative_numbers = true)]
    background_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Unit,
    Lower,
    Upper,
    Meet,
}

impl From<ModeArg> for SlopeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Unit => SlopeMode::Unit,
            ModeArg::Lower => SlopeMode::Lower,
            ModeArg::Upper => SlopeMode::Upper,
            ModeArg::Meet => SlopeMode::Meet,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct BoundsArgs {
    /// Negative-to-positive ratio, positive.
    #[arg(long, allow_negative_numbers = true)]
    alpha: f64,
    /// Ranking error in [0, 1].
    #[arg(long, allow_negative_numbers = true)]
    r: f64,
    /// Slope used for the linear detection-error approximation.
    #[arg(long, value_enum, default_value_t = ModeArg::Upper)]
    mode: ModeArg,
    /// Also write the bound curve over r = 0, 0.01, ..., 1 as plain CSV.
    #[arg(long)]
    emit_curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TiesArg {
    HalfCredit,
    Strict,
}

#[derive(Debug, Args, Serialize)]
struct MetricsArgs {
    /// CSV with header `score,label`, label 1 for positives and 0 for negatives.
    #[arg(long)]
    scores: PathBuf,
    /// Negative-to-positive ratio for precision; defaults to the sample ratio.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// How tied positive/negative pairs count toward the ranking error.
    #[arg(long, value_enum, default_value_t = TiesArg::HalfCredit)]
    ties: TiesArg,
    /// Also write the PR curve as plain CSV.
    #[arg(long)]
    pr_curve: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    /// `all` or one of: bounds, oracles, gradients, estimators, binary, margins, decision, slope.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Random trials per suite.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Experiment JSON with optional `synthetic`, `train` and `holdout_fraction` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the loss curve as plain CSV.
    #[arg(long)]
    loss_curve: Option<PathBuf>,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Malformed flags or input files; exit code 2.
    Usage(String),
    /// A check or computation failed; exit code 1 with this report on standard output.
    Check(Value),
}

fn flag_name(field: &str) -> String {
    match field {
        "ranking_error" => "--r".into(),
        other => format!("--{}", other.replace('_', "-")),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation { field, reason } => {
                Failure::Usage(format!("invalid value for {}: {reason}", flag_name(field)))
            }
            Error::Input { .. } | Error::Io(_) | Error::UnknownClass(_) => Failure::Usage(e.to_string()),
            other => Failure::Check(json!({ "passed": false, "error": other.to_string() })),
        }
    }
}

fn header(cli: &Cli, command: &str, args: impl Serialize) -> Value {
    json!({
        "command": command,
        "seed": cli.seed,
        "format": cli.format,
        "out": cli.out,
        "args": args,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn run_margins(cli: &Cli, args: &MarginsArgs) -> Result<Output, Failure> {
    let counts = load_counts(&args.counts, CountsFormat::from_path(&args.counts))?;
    let ratio = args
        .background_ratio
        .or(counts.background_ratio)
        .ok_or_else(|| Failure::Usage("missing --background-ratio and none in the counts file".into()))?;
    let bg = background_count(&counts, ratio)?;
    let mut classes = Vec::new();
    let mut csv = String::from("id,name,n_plus,n_minus,alpha,gamma_plus,gamma_minus,w_plus,w_minus\n");
    for (id, stats) in all_stats(&counts, bg)? {
        let m = optimal_margins(&stats);
        let w = weights(&m);
        let name = counts.get(id).map(|e| e.name.clone()).unwrap_or_default();
        let row = json!({
            "id": id,
            "name": name,
            "n_plus": stats.n_plus(),
            "n_minus": stats.n_minus(),
            "alpha": sig12(stats.alpha()),
            "gamma_plus": sig12(m.gamma_plus()),
            "gamma_minus": sig12(m.gamma_minus()),
            "w_plus": sig12(w.w_plus()),
            "w_minus": sig12(w.w_minus()),
        });
        csv.push_str(&format!(
            "{id},{},{},{},{},{},{},{},{}\n",
            csv_field(&name),
            row["n_plus"], row["n_minus"], row["alpha"], row["gamma_plus"], row["gamma_minus"], row["w_plus"], row["w_minus"]
        ));
        classes.push(row);
    }
    let resolved = json!({ "counts": args.counts, "background_ratio": ratio, "background_count": bg });
    Ok(Output::new(header(cli, "margins", resolved)).field("classes", classes).csv(csv))
}

fn run_bounds(cli: &Cli, args: &BoundsArgs) -> Result<Output, Failure> {
    let mode = SlopeMode::from(args.mode);
    let point = envelope(args.alpha, args.r, mode)?;
    let curve = envelope_curve(args.alpha, mode)?;
    let csv = envelope_curve_csv(&curve);
    if let Some(path) = &args.emit_curve {
        write_file(path, &csv)?;
    }
    Ok(Output::new(header(cli, "bounds", args)).field("envelope", point).field("curve", curve).csv(csv))
}

fn run_metrics(cli: &Cli, args: &MetricsArgs) -> Result<Output, Failure> {
    let set = load_scores_csv(&args.scores)?;
    let (n_pos, n_neg) = (set.positives().len(), set.negatives().len());
    if n_pos == 0 || n_neg == 0 {
        return Err(Failure::Usage(format!(
            "{} needs at least one positive and one negative (found {n_pos} and {n_neg})",
            args.scores.display()
        )));
    }
    let alpha = args.alpha.unwrap_or(n_neg as f64 / n_pos as f64);
    let ties = match args.ties {
        TiesArg::HalfCredit => TieMode::HalfCredit,
        TiesArg::Strict => TieMode::Strict,
    };
    let ap = average_precision_with_se(&set, alpha)?;
    let r_se = ranking_error_with_se(&set)?;
    let r = ranking_error_with(&set, ties)?;
    let curve = pr_curve(&set, alpha)?;
    let csv = curve.to_csv();
    if let Some(path) = &args.pr_curve {
        write_file(path, &csv)?;
    }
    let resolved = json!({ "scores": args.scores, "alpha": alpha, "ties": args.ties, "pr_curve": args.pr_curve });
    Ok(Output::new(header(cli, "metrics", resolved))
        .field("n_positive", n_pos)
        .field("n_negative", n_neg)
        .field("ap", ap.value)
        .field("ap_std_error", ap.std_error)
        .field("ranking_error", r)
        .field("ranking_error_std_error", r_se.std_error)
        .field("pr_curve", &curve.points)
        .csv(csv))
}

fn run_verify(cli: &Cli, args: &VerifyArgs) -> Result<(Output, bool), Failure> {
    let suites = Suite::parse_list(&args.suite)?;
    if args.trials == 0 {
        return Err(Failure::Usage("invalid value for --trials: must be positive".into()));
    }
    let seed = cli.seed.unwrap_or(0);
    let report = verify::run(&suites, args.trials, seed);
    let mut csv = String::from("suite,checks,failures,passed\n");
    for s in &report.suites {
        csv.push_str(&format!("{},{},{},{}\n", s.suite.name(), s.checks, s.failures, s.passed));
    }
    let resolved = json!({ "suite": args.suite, "trials": args.trials, "seed": seed });
    let passed = report.passed;
    let out = Output::new(header(cli, "verify", resolved))
        .field("passed", report.passed)
        .field("suites", &report.suites)
        .csv(csv);
    Ok((out, passed))
}

fn load_experiment(path: Option<&PathBuf>) -> Result<ExperimentConfig, Failure> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Usage(format!("{} line {} column {}: {e}", path.display(), e.line(), e.column()))
    })
}

fn run_train(cli: &Cli, args: &TrainArgs) -> Result<(Output, bool), Failure> {
    let mut config = load_experiment(args.config.as_ref())?;
    if let Some(seed) = cli.seed {
        config.synthetic.seed = seed;
        config.train.seed = seed;
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Failure::Usage("invalid value for holdout_fraction: must lie in [0, 1)".into()));
    }
    config.synthetic.validate()?;
    config.train.validate()?;
    let result = run_experiment(&config)?;
    let csv = result.report.loss_curve_csv();
    if let Some(path) = &args.loss_curve {
        write_file(path, &csv)?;
    }
    let passed = result.audit.passed && result.checkpoints.iter().all(|c| c.audit.passed);
    let resolved = json!({ "config_file": args.config, "experiment": config, "loss_curve": args.loss_curve });
    let out = Output::new(header(cli, "train", resolved))
        .field("passed", passed)
        .field("background_ratio", result.background_ratio)
        .field("report", &result.report)
        .field("audit", &result.audit)
        .field("checkpoints", &result.checkpoints)
        .csv(csv);
    Ok((out, passed))
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let (output, passed) = match &cli.command {
        Command::Margins(a) => (run_margins(cli, a)?, true),
        Command::Bounds(a) => (run_bounds(cli, a)?, true),
        Command::Metrics(a) => (run_metrics(cli, a)?, true),
        Command::Verify(a) => run_verify(cli, a)?,
        Command::Train(a) => run_train(cli, a)?,
    };
    let text = output.render(cli.format)?;
    emit(cli.out.as_ref(), &text)?;
    if passed {
        return Ok(());
    }
    // Without --out the full report already went to standard output.
    let report = if cli.out.is_some() {
        let mut report = serde_json::Map::new();
        report.insert("config".into(), output.header);
        report.extend(output.body);
        Value::Object(report)
    } else {
        Value::Null
    };
    Err(Failure::Check(report))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Check(report)) => {
            if !report.is_null() {
                println!("{}", serde_json::to_string_pretty(&report).expect("json serializes"));
            }
            ExitCode::from(1)
        }
    }
}
