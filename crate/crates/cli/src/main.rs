use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use fewstab::eval::{self, PredictionSet, SuiteReport};
use fewstab::extract::{self, ExtractOptions};
use fewstab::{
    build_catalog, build_suite, generate_split, load_split, split_stats, write_split, BuildConfig, DatasetSplit,
    FallbackPolicy, Mode, OracleRules, QueryVariant, SplitFormat, SupportVariant, SynthConfig, TaskSpec, TaskSuite,
};

#[derive(Parser)]
#[command(name = "fewstab", version, about = "Few-shot episodes with controlled spurious correlations")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "FEWSTAB_THREADS", default_value_t = 0)]
    threads: usize,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Log as JSON lines.
    #[arg(long, global = true)]
    json_logs: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn captions into an attribute-annotated split.
    Ingest(IngestArgs),
    /// Build a suite of episodes.
    Build(BuildArgs),
    /// Classify and score a suite.
    Evaluate(EvaluateArgs),
    /// Tabulate evaluation reports.
    Report(ReportArgs),
    /// Attribute statistics of a split.
    Stats(StatsArgs),
    /// Agreement of one annotation of a split with a reference annotation.
    Agreement(AgreementArgs),
    /// Generate a synthetic split with planted correlations.
    Synth(SynthArgs),
}

#[derive(Args, Serialize)]
struct IngestArgs {
    /// JSONL of {"id", "caption"}.
    #[arg(long)]
    captions: PathBuf,
    /// JSONL of {"id", "class"}.
    #[arg(long)]
    labels: PathBuf,
    /// TSV of word and NOUN/ADJ tag.
    #[arg(long)]
    lexicon: PathBuf,
    /// Retry unknown tokens ending in `s` without it.
    #[arg(long)]
    strip_plural: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Fewstab,
    Random,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum SupportArg {
    #[value(name = "SC1", alias = "sc1")]
    Sc1,
    #[value(name = "SC2", alias = "sc2")]
    Sc2,
    #[value(name = "SC3", alias = "sc3")]
    Sc3,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum QueryArg {
    #[value(name = "QC1", alias = "qc1")]
    Qc1,
    #[value(name = "QC2", alias = "qc2")]
    Qc2,
    #[value(name = "QC3", alias = "qc3")]
    Qc3,
}

#[derive(Args, Serialize)]
struct BuildArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "fewstab")]
    mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    ways: usize,
    #[arg(long, default_value_t = 5)]
    shots: usize,
    #[arg(long, default_value_t = 15)]
    queries: usize,
    #[arg(long, default_value_t = 3000)]
    num_tasks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "SC3")]
    support_variant: SupportArg,
    #[arg(long, value_enum, default_value = "QC3")]
    query_variant: QueryArg,
    #[arg(long, default_value_t = 100)]
    max_restarts: usize,
    /// Planted-map JSON; only these class/attribute pairs may be selected.
    #[arg(long)]
    restrict: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ClassifierArg {
    Prototype,
    Oracle,
    External,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FallbackArg {
    FixedFirstSlot,
    SeededUniform,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    classifier: ClassifierArg,
    /// Oracle rules: a planted map {"class": "attribute"} or a list of
    /// {"attribute", "class"} in priority order. Without it each task's own
    /// assignments are used.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fixed-first-slot")]
    oracle_fallback: FallbackArg,
    #[arg(long, default_value_t = 0)]
    oracle_seed: u64,
    /// predictions-jsonl for the external classifier.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Method name recorded in the report; defaults to the classifier name.
    #[arg(long)]
    method: Option<String>,
    /// Score only tasks where no slot needed the intra-class fallback.
    #[arg(long)]
    fallback_free_only: bool,
    /// Also write the predictions used, as predictions-jsonl.
    #[arg(long)]
    predictions_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum FormatArg {
    Md,
    Csv,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Serialize)]
struct AgreementArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    /// SynthConfig JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the planted map; defaults to `<out>.planted.json`.
    #[arg(long)]
    planted_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    timestamp: String,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Writes `<out>.manifest.json` beside an output. The output itself stays a
/// pure function of the inputs; the manifest carries the run's context.
fn write_manifest(out: &Path, command: &str, config: &impl Serialize, inputs: &[&Path]) -> Result<()> {
    let mut digests = BTreeMap::new();
    for p in inputs {
        digests.insert(p.display().to_string(), sha256_file(p)?);
    }
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        config: serde_json::to_value(config)?,
        inputs: digests,
    };
    let path = sibling(out, ".manifest.json");
    write_text(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<DatasetSplit> {
    Ok(load_split(path, SplitFormat::AttributeJsonl)?)
}

fn load_planted(path: &Path) -> Result<BTreeMap<String, String>> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing planted map {}", path.display()))
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let captions = extract::load_captions(&args.captions)?;
    let labels = extract::load_labels(&args.labels)?;
    let lexicon = extract::Lexicon::load(&args.lexicon)?;
    let opts = ExtractOptions {
        strip_plural: args.strip_plural,
    };
    let split = extract::annotate_split(&captions, &labels, &lexicon, opts)?;
    let mut buf = Vec::new();
    write_split(&split, &mut buf)?;
    fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;
    write_manifest(&args.out, "ingest", args, &[&args.captions, &args.labels, &args.lexicon])?;
    info!(samples = split.len(), classes = split.classes().len(), "annotated split written");
    Ok(())
}

fn build(args: &BuildArgs, threads: usize) -> Result<()> {
    let split = load_dataset(&args.dataset)?;
    let config = BuildConfig {
        ways: args.ways,
        shots: args.shots,
        queries: args.queries,
        num_tasks: args.num_tasks,
        master_seed: args.seed,
        mode: match args.mode {
            ModeArg::Fewstab => Mode::Fewstab,
            ModeArg::Random => Mode::Random,
        },
        support_variant: match args.support_variant {
            SupportArg::Sc1 => SupportVariant::SC1,
            SupportArg::Sc2 => SupportVariant::SC2,
            SupportArg::Sc3 => SupportVariant::SC3,
        },
        query_variant: match args.query_variant {
            QueryArg::Qc1 => QueryVariant::QC1,
            QueryArg::Qc2 => QueryVariant::QC2,
            QueryArg::Qc3 => QueryVariant::QC3,
        },
        max_restarts: args.max_restarts,
    };
    let mut catalog = build_catalog(&split);
    let mut inputs = vec![args.dataset.as_path()];
    if let Some(path) = &args.restrict {
        catalog = catalog.restrict_to(&load_planted(path)?);
        inputs.push(path);
    }
    let suite = build_suite(&split, &catalog, &config, threads)?;
    for f in &suite.failed {
        warn!(task = f.index, error = %f.error, "task skipped");
    }
    write_text(&args.out, &suite.to_json()?)?;
    write_manifest(&args.out, "build", &config, &inputs)?;
    info!(tasks = suite.tasks.len(), failed = suite.failed.len(), "suite written");
    Ok(())
}

#[derive(Deserialize)]
struct RuleEntry {
    attribute: String,
    class: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RulesFile {
    Planted(BTreeMap<String, String>),
    Ordered(Vec<RuleEntry>),
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let split = load_dataset(&args.dataset)?;
    let suite = TaskSuite::from_json(&read_text(&args.tasks)?)
        .with_context(|| format!("parsing tasks {}", args.tasks.display()))?;
    let mode = suite.config.mode;
    let tasks: Vec<TaskSpec> = if args.fallback_free_only {
        suite.tasks.into_iter().filter(|t| t.fallback_free()).collect()
    } else {
        suite.tasks
    };
    if tasks.is_empty() {
        bail!(fewstab::Error::InvalidConfig("no tasks left to evaluate".into()));
    }

    let mut inputs = vec![args.tasks.as_path(), args.dataset.as_path()];
    let fallback = match args.oracle_fallback {
        FallbackArg::FixedFirstSlot => FallbackPolicy::FixedFirstSlot,
        FallbackArg::SeededUniform => FallbackPolicy::SeededUniform { seed: args.oracle_seed },
    };

    let predictions: PredictionSet = match args.classifier {
        ClassifierArg::Prototype => tasks
            .iter()
            .map(|t| Ok((t.index, eval::prototype_classify(t, &split)?)))
            .collect::<Result<_>>()?,
        ClassifierArg::Oracle => {
            let fixed = match &args.rules {
                Some(path) => {
                    inputs.push(path);
                    let parsed: RulesFile = serde_json::from_str(&read_text(path)?)
                        .with_context(|| format!("parsing rules {}", path.display()))?;
                    Some(match parsed {
                        RulesFile::Planted(map) => OracleRules::from_planted(&map, fallback)?,
                        RulesFile::Ordered(list) => {
                            OracleRules::new(list.into_iter().map(|r| (r.attribute, r.class)).collect(), fallback)?
                        }
                    })
                }
                None => None,
            };
            tasks
                .iter()
                .map(|t| {
                    let rules = match &fixed {
                        Some(r) => r.clone(),
                        None => OracleRules::from_task(t, fallback)?,
                    };
                    Ok((t.index, eval::oracle_classify(t, &rules, &split)?))
                })
                .collect::<Result<_>>()?
        }
        ClassifierArg::External => {
            let Some(path) = &args.predictions else {
                bail!(fewstab::Error::InvalidConfig("--predictions is required for the external classifier".into()));
            };
            inputs.push(path);
            let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
            let mut all = eval::read_predictions(BufReader::new(file))?;
            let keep: std::collections::HashSet<usize> = tasks.iter().map(|t| t.index).collect();
            all.retain(|k, _| keep.contains(k));
            all
        }
    };

    let method = args.method.clone().unwrap_or_else(|| {
        match args.classifier {
            ClassifierArg::Prototype => "prototype",
            ClassifierArg::Oracle => "oracle",
            ClassifierArg::External => "external",
        }
        .to_string()
    });
    let report = eval::score_suite(&tasks, &predictions, &method, mode)?;
    write_text(&args.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if let Some(path) = &args.predictions_out {
        let mut buf = Vec::new();
        eval::write_predictions(&predictions, &mut buf)?;
        fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    write_manifest(&args.out, "evaluate", args, &inputs)?;
    info!(
        tasks = report.n_tasks,
        acc = report.acc_mean,
        wacc = report.wacc_mean,
        metric = %report.metric,
        "report written"
    );
    Ok(())
}

fn load_reports(paths: &[PathBuf]) -> Result<Vec<SuiteReport>> {
    paths
        .iter()
        .map(|p| serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing report {}", p.display())))
        .collect()
}

fn render_csv(reports: &[SuiteReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method", "mode", "metric", "n_tasks", "acc_mean", "acc_ci95", "wacc_mean", "wacc_ci95", "gap",
    ])?;
    let rows = eval::pair_reports(reports);
    for r in reports {
        let gap = rows
            .iter()
            .find(|row| row.method == r.method)
            .and_then(|row| row.gap())
            .map(|g| g.to_string())
            .unwrap_or_default();
        w.write_record([
            r.method.clone(),
            r.mode.to_string(),
            r.metric.clone(),
            r.n_tasks.to_string(),
            r.acc_mean.to_string(),
            r.acc_ci95.to_string(),
            r.wacc_mean.to_string(),
            r.wacc_ci95.to_string(),
            gap,
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn report(args: &ReportArgs) -> Result<()> {
    let reports = load_reports(&args.inputs)?;
    let table = match args.format {
        FormatArg::Md => eval::render_markdown(&reports),
        FormatArg::Csv => render_csv(&reports)?,
    };
    match &args.out {
        Some(path) => {
            write_text(path, &table)?;
            let inputs: Vec<&Path> = args.inputs.iter().map(PathBuf::as_path).collect();
            write_manifest(path, "report", args, &inputs)?;
        }
        None => std::io::stdout().write_all(table.as_bytes())?,
    }
    Ok(())
}

fn stats(args: &StatsArgs) -> Result<()> {
    let split = load_dataset(&args.dataset)?;
    let s = split_stats(&split);
    if args.json {
        println!("{}", serde_json::to_string(&s)?);
    } else {
        println!("samples: {}", split.len());
        println!("classes: {}", split.classes().len());
        println!("unique attributes: {}", s.unique_attribute_count);
        println!("avg attributes per class: {:.2}", s.avg_attributes_per_class);
    }
    Ok(())
}

fn agreement(args: &AgreementArgs) -> Result<()> {
    let query = load_dataset(&args.query)?;
    let reference = load_dataset(&args.reference)?;
    let a = extract::agreement(&query, &reference)?;
    if args.json {
        println!("{}", serde_json::to_string(&a)?);
    } else {
        println!("agreement: {:.4} ({} images scored, {} skipped)", a.value, a.images_scored, a.images_skipped);
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let config: SynthConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => SynthConfig::default(),
    };
    let (split, planted) = generate_split(&config)?;
    let mut buf = Vec::new();
    write_split(&split, &mut buf)?;
    fs::write(&args.out, buf).with_context(|| format!("writing {}", args.out.display()))?;
    let planted_path = args.planted_out.clone().unwrap_or_else(|| sibling(&args.out, ".planted.json"));
    write_text(&planted_path, &(serde_json::to_string_pretty(&planted)? + "\n"))?;
    let inputs: Vec<&Path> = args.config.iter().map(PathBuf::as_path).collect();
    write_manifest(&args.out, "synth", &config, &inputs)?;
    info!(samples = split.len(), classes = split.classes().len(), "synthetic split written");
    Ok(())
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet { "warn" } else { "info" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    if cli.json_logs {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Build(a) => build(a, cli.threads),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Stats(a) => stats(a),
        Command::Agreement(a) => agreement(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<fewstab::Error>() {
                Some(fewstab::Error::SuiteFailed { .. }) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
