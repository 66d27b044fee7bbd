//! `benignspoof` command-line interface.
//!
//! Every successful run writes `run.json` into the output directory with the
//! subcommand, a SHA-256 over the arguments and any config file, and the
//! toolkit version. Exit codes: 0 success, 1 validation or data failure,
//! 2 usage error.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::acoustics::{self, AcousticConfig};
use crate::classifier::{
    expand_to_four_way, init_mlp, load_checkpoint, predict_scores, save_checkpoint, train_with_lr, ClassOrder, LabeledSet, ScoreTable, TrainConfig,
};
use crate::corpus::{self, ProcessingLabel, SourceLabel, Split, SplitConfig, StratifyKey, UtteranceRecord};
use crate::drift;
use crate::embeddings::{concat_sets, read_embfile, write_embfile, EmbeddingSet};
use crate::metrics::{self, MetricsReport};
use crate::report::{build_report, ExperimentRow};
use crate::stats::{self, Family, Measure};

pub const THREADS_ENV: &str = "BENIGNSPOOF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "benignspoof", version, about = "Anti-spoofing evaluation under benign transformations")]
pub struct Cli {
    /// Corpus manifest (JSON lines).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Suppress progress messages on standard error.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a manifest, print the class histogram.
    Validate,
    /// Assign train/val/test splits.
    Split(SplitArgs),
    /// Embedding drift: mean shifts, directional consistency, 2-D projection.
    Drift(DriftArgs),
    /// Train a binary or four-way MLP.
    Train(TrainArgs),
    /// Score embeddings with a trained checkpoint.
    Predict(PredictArgs),
    /// Metrics from a score table and the manifest labels.
    Eval(EvalArgs),
    /// H1-H2 / H1-A3 measures for every manifest utterance.
    Acoustics(AcousticsArgs),
    /// Two-way ANOVA, Tukey HSD and interaction deltas over acoustic measures.
    Anova(AnovaArgs),
    /// Summary table from metrics JSON files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Fixed test count per stratum instead of a proportional share.
    #[arg(long)]
    pub per_class_test: Option<usize>,
    #[arg(long, default_value_t = 0.70)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.15)]
    pub val_fraction: f64,
    /// Comma-separated keys from four_way_label, domain, source, system.
    #[arg(long, value_delimiter = ',', default_value = "four_way_label,domain")]
    pub stratify_by: Vec<String>,
    #[arg(long)]
    pub allow_small: bool,
    #[arg(long, default_value = "manifest.split.jsonl")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    /// EMB1 files, concatenated in the order given.
    #[arg(long, num_args = 1.., required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Conditions to analyze; defaults to every processed condition present.
    #[arg(long)]
    pub condition: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, value_delimiter = ',', default_value = "512,128")]
    pub hidden: Vec<usize>,
    /// Learning rate; continuing a same-head checkpoint defaults to the reduced rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 8)]
    pub patience: usize,
    #[arg(long, default_value_t = 5e-5)]
    pub reduced_lr: f64,
    #[arg(long)]
    pub class_weighting: bool,
    /// Start from a checkpoint; a binary checkpoint with `--classes 4` has its head expanded.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    #[arg(long, default_value = "model")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Split to score: train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value = "scores.csv")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Spoof-probability threshold for binary predictions.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub training_data_tag: Option<String>,
    #[arg(long)]
    pub eval_set_tag: Option<String>,
    #[arg(long, default_value = "metrics.json")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct AcousticsArgs {
    /// Directory that manifest audio paths are relative to; defaults to the manifest's directory.
    #[arg(long)]
    pub audio_root: Option<PathBuf>,
    /// JSON object overriding analysis defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "acoustics.csv")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct AnovaArgs {
    #[arg(long)]
    pub acoustics: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "anova.json")]
    pub output: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub metrics: Vec<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

type CliResult<T> = Result<T, CliError>;

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    args: &'a [String],
    config_hash: String,
    version: &'a str,
}

struct Ctx<'a> {
    cli: &'a Cli,
    /// Arguments after the program name.
    args: Vec<String>,
    /// Extra bytes folded into the config hash (config file contents).
    hashed_inputs: Vec<u8>,
}

impl Ctx<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if !self.cli.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cli.out_dir.join(name)
    }

    fn manifest_path(&self) -> CliResult<&Path> {
        self.cli.manifest.as_deref().ok_or_else(|| CliError::Usage("--manifest is required for this subcommand".into()))
    }

    fn records(&self) -> CliResult<Vec<UtteranceRecord>> {
        corpus::parse_manifest(self.manifest_path()?).map_err(fail)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate => "validate",
        Command::Split(_) => "split",
        Command::Drift(_) => "drift",
        Command::Train(_) => "train",
        Command::Predict(_) => "predict",
        Command::Eval(_) => "eval",
        Command::Acoustics(_) => "acoustics",
        Command::Anova(_) => "anova",
        Command::Report(_) => "report",
    }
}

fn thread_count() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Parse `argv` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = thread_count().and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(fail)?;
        pool.install(|| dispatch(&cli, args))
    });
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(CliError::Failure(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn dispatch(cli: &Cli, args: Vec<String>) -> CliResult<()> {
    fs::create_dir_all(&cli.out_dir).map_err(|e| fail(format!("cannot create {}: {e}", cli.out_dir.display())))?;
    let mut ctx = Ctx { cli, args, hashed_inputs: Vec::new() };
    match &cli.command {
        Command::Validate => validate(&ctx)?,
        Command::Split(a) => split(&ctx, a)?,
        Command::Drift(a) => drift_cmd(&ctx, a)?,
        Command::Train(a) => train_cmd(&ctx, a)?,
        Command::Predict(a) => predict(&ctx, a)?,
        Command::Eval(a) => eval(&ctx, a)?,
        Command::Acoustics(a) => acoustics_cmd(&mut ctx, a)?,
        Command::Anova(a) => anova(&ctx, a)?,
        Command::Report(a) => report(&ctx, a)?,
    }
    write_run_record(&ctx)
}

fn write_run_record(ctx: &Ctx) -> CliResult<()> {
    let mut h = Sha256::new();
    for a in &ctx.args {
        h.update(a.as_bytes());
        h.update([0u8]);
    }
    h.update(&ctx.hashed_inputs);
    let config_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    let rec = RunRecord { command: command_name(&ctx.cli.command), args: &ctx.args, config_hash, version: env!("CARGO_PKG_VERSION") };
    write_json(&ctx.out("run.json"), &rec)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| fail(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(fail)?;
    writeln!(w).and_then(|_| w.flush()).map_err(fail)
}

fn load_embeddings(paths: &[PathBuf]) -> CliResult<EmbeddingSet> {
    let sets = paths
        .iter()
        .map(|p| read_embfile(p).map_err(|e| fail(format!("{}: {e}", p.display()))))
        .collect::<CliResult<Vec<_>>>()?;
    if sets.len() == 1 {
        return Ok(sets.into_iter().next().unwrap());
    }
    concat_sets(&sets).map_err(fail)
}

fn validate(ctx: &Ctx) -> CliResult<()> {
    let records = ctx.records()?;
    let hist = corpus::class_histogram(&records);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (label, n) in crate::corpus::FourWayLabel::ALL.iter().zip(hist) {
        writeln!(out, "{}\t{n}", label.as_str()).map_err(fail)?;
    }
    writeln!(out, "total\t{}", records.len()).map_err(fail)
}

fn split(ctx: &Ctx, a: &SplitArgs) -> CliResult<()> {
    let records = ctx.records()?;
    let stratify_by = a
        .stratify_by
        .iter()
        .map(|s| s.parse::<StratifyKey>().map_err(|_| CliError::Usage(format!("unknown stratify key {s:?}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let cfg = SplitConfig {
        seed: ctx.cli.seed,
        per_class_test: a.per_class_test,
        train_fraction: a.train_fraction,
        val_fraction: a.val_fraction,
        stratify_by,
        allow_small: a.allow_small,
    };
    let assigned = corpus::assign_splits(&records, &cfg).map_err(fail)?;
    let mut w = create(&ctx.out(&a.output))?;
    corpus::write_manifest(&mut w, &assigned).and_then(|_| w.flush()).map_err(fail)?;
    let count = |s: Split| assigned.iter().filter(|r| r.split == s).count();
    ctx.log(format!("train {} / val {} / test {}", count(Split::Train), count(Split::Val), count(Split::Test)));
    Ok(())
}

#[derive(Serialize)]
struct DriftCondition {
    condition: ProcessingLabel,
    shifts: Vec<drift::ShiftStats>,
    consistency: Option<drift::ConsistencyReport>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct DriftReport {
    embeddings: String,
    dim: usize,
    conditions: Vec<DriftCondition>,
    explained_variance: [f64; 2],
    total_variance: f64,
    rank_deficient: bool,
}

fn drift_cmd(ctx: &Ctx, a: &DriftArgs) -> CliResult<()> {
    let records = ctx.records()?;
    let emb = load_embeddings(&a.embeddings)?;
    let conditions: Vec<ProcessingLabel> = if a.condition.is_empty() {
        ProcessingLabel::ALL.into_iter().filter(|p| p.is_processed() && records.iter().any(|r| r.processing == *p)).collect()
    } else {
        a.condition
            .iter()
            .map(|c| c.parse().map_err(|_| CliError::Usage(format!("unknown condition {c:?}"))))
            .collect::<CliResult<_>>()?
    };
    let mut shift_set = EmbeddingSet::new("drift_shifts", emb.dim()).map_err(fail)?;
    let mut out = Vec::new();
    for condition in conditions {
        let mut shifts = Vec::new();
        let mut notes = Vec::new();
        for source in SourceLabel::ALL {
            match drift::shift_stats_for(&emb, &records, condition, source) {
                Ok(s) => {
                    shift_set.push(format!("{}/{}", condition.as_str(), source.as_str()), s.mean_shift.clone()).map_err(fail)?;
                    shifts.push(s);
                }
                Err(e) => notes.push(e.to_string()),
            }
        }
        let consistency = match drift::consistency_by_condition(&emb, &records, condition) {
            Ok(c) => Some(c),
            Err(e) => {
                notes.push(format!("consistency: {e}"));
                None
            }
        };
        out.push(DriftCondition { condition, shifts, consistency, notes });
    }
    let manifest_set = emb.select(records.iter().map(|r| r.utt_id.as_str()));
    let proj = drift::pca_project_2d(&manifest_set).map_err(fail)?;
    let labels: std::collections::HashMap<&str, usize> = records.iter().map(|r| (r.utt_id.as_str(), r.four_way().index())).collect();
    let mut w = create(&ctx.out("drift_projection.csv"))?;
    writeln!(w, "utt_id,x,y,four_way_label").map_err(fail)?;
    for (id, x, y) in &proj.coords {
        writeln!(w, "{id},{x:?},{y:?},{}", labels[id.as_str()]).map_err(fail)?;
    }
    w.flush().map_err(fail)?;
    write_embfile(ctx.out("drift_shifts.emb1"), &shift_set).map_err(fail)?;
    let report = DriftReport {
        embeddings: emb.model_tag().to_string(),
        dim: emb.dim(),
        conditions: out,
        explained_variance: proj.explained_variance,
        total_variance: proj.total_variance,
        rank_deficient: proj.rank_deficient,
    };
    write_json(&ctx.out("drift.json"), &report)?;
    ctx.log(format!("drift: {} conditions, projection of {} utterances", report.conditions.len(), proj.coords.len()));
    Ok(())
}

/// Embeddings and class targets for the records of one split, in manifest order.
fn labeled_split(emb: &EmbeddingSet, records: &[UtteranceRecord], split: Split, order: ClassOrder) -> CliResult<LabeledSet> {
    let chosen: Vec<&UtteranceRecord> = records.iter().filter(|r| r.split == split).collect();
    let missing: Vec<&str> = chosen.iter().filter(|r| !emb.contains(&r.utt_id)).map(|r| r.utt_id.as_str()).take(5).collect();
    if !missing.is_empty() {
        return Err(fail(format!("no embedding for {} (first missing: {})", split.as_str(), missing.join(", "))));
    }
    let set = emb.select(chosen.iter().map(|r| r.utt_id.as_str()));
    let labels = chosen.iter().map(|r| order.target(r.four_way())).collect();
    LabeledSet::new(set, labels).map_err(fail)
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> CliResult<()> {
    let order = ClassOrder::from_n_classes(a.classes).ok_or_else(|| CliError::Usage(format!("--classes must be 2 or 4, got {}", a.classes)))?;
    let records = ctx.records()?;
    let emb = load_embeddings(&a.embeddings)?;
    let cfg = TrainConfig {
        learning_rate: a.lr.unwrap_or(TrainConfig::default().learning_rate),
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        batch_size: a.batch_size,
        patience: a.patience,
        seed: ctx.cli.seed,
        reduced_lr: a.reduced_lr,
        class_weighting: a.class_weighting,
    };
    let (start, lr) = match &a.init_from {
        None => (init_mlp(emb.dim(), &a.hidden, a.classes, ctx.cli.seed).map_err(fail)?, cfg.learning_rate),
        Some(path) => {
            let (model, _) = load_checkpoint(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
            match (model.class_order, order) {
                (ClassOrder::Binary, ClassOrder::FourWay) => (expand_to_four_way(&model).map_err(fail)?, cfg.learning_rate),
                (from, to) if from == to => (model, a.lr.unwrap_or(cfg.reduced_lr)),
                _ => return Err(fail("cannot initialize a binary model from a four-way checkpoint")),
            }
        }
    };
    let train_set = labeled_split(&emb, &records, Split::Train, order)?;
    let val_set = labeled_split(&emb, &records, Split::Val, order)?;
    ctx.log(format!("training {:?} on {} utterances, validating on {}", start.layer_dims(), train_set.len(), val_set.len()));
    let (model, log) = train_with_lr(&start, &train_set, &val_set, &cfg, lr).map_err(fail)?;
    let cfg = TrainConfig { learning_rate: lr, ..cfg };
    save_checkpoint(ctx.out(&format!("{}.ckpt", a.name)), &model, Some(&cfg)).map_err(fail)?;
    write_json(&ctx.out(&format!("{}.train_log.json", a.name)), &log)?;
    ctx.log(format!("best epoch {} (val loss {:.5})", log.best_epoch, log.best_val_loss));
    Ok(())
}

fn predict(ctx: &Ctx, a: &PredictArgs) -> CliResult<()> {
    let records = ctx.records()?;
    let (model, _) = load_checkpoint(&a.checkpoint).map_err(|e| fail(format!("{}: {e}", a.checkpoint.display())))?;
    let emb = load_embeddings(&a.embeddings)?;
    let chosen: Vec<&str> = match a.split.as_str() {
        "all" => records.iter().map(|r| r.utt_id.as_str()).collect(),
        s => {
            let split: Split = s.parse().map_err(|_| CliError::Usage(format!("unknown split {s:?}")))?;
            records.iter().filter(|r| r.split == split).map(|r| r.utt_id.as_str()).collect()
        }
    };
    let missing = chosen.iter().filter(|id| !emb.contains(id)).count();
    if missing > 0 {
        return Err(fail(format!("{missing} selected utterances have no embedding")));
    }
    let scores = predict_scores(&model, &emb.select(chosen)).map_err(fail)?;
    let mut w = create(&ctx.out(&a.output))?;
    scores.write_csv(&mut w).and_then(|_| w.flush()).map_err(fail)?;
    ctx.log(format!("scored {} utterances", scores.rows.len()));
    Ok(())
}

fn eval(ctx: &Ctx, a: &EvalArgs) -> CliResult<()> {
    let records = ctx.records()?;
    let file = File::open(&a.scores).map_err(|e| fail(format!("{}: {e}", a.scores.display())))?;
    let scores = ScoreTable::read_csv(file).map_err(fail)?;
    let mut m: MetricsReport = metrics::evaluate(&scores, &records, a.threshold).map_err(fail)?;
    m.model_id = a.model_id.clone();
    m.training_data_tag = a.training_data_tag.clone();
    m.eval_set_tag = a.eval_set_tag.clone();
    write_json(&ctx.out(&a.output), &m)?;
    let show = |v: Option<f64>| v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_else(|| "n/a".into());
    println!("acc {}  acc_bona {}  eer_src {}  eer_proc {}", show(m.acc), show(m.acc_bona), show(m.eer_src), show(m.eer_proc));
    Ok(())
}

fn acoustics_cmd(ctx: &mut Ctx, a: &AcousticsArgs) -> CliResult<()> {
    let manifest = ctx.manifest_path()?.to_path_buf();
    let records = ctx.records()?;
    let cfg = match &a.config {
        None => AcousticConfig::default(),
        Some(p) => {
            let text = fs::read(p).map_err(|e| fail(format!("{}: {e}", p.display())))?;
            let cfg = serde_json::from_slice(&text).map_err(|e| fail(format!("{}: {e}", p.display())))?;
            ctx.hashed_inputs.extend(text);
            cfg
        }
    };
    let root = a.audio_root.clone().unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
    let report = acoustics::batch_acoustics(&records, &root, &cfg);
    let mut w = create(&ctx.out(&a.output))?;
    acoustics::write_csv(&mut w, &report.rows).and_then(|_| w.flush()).map_err(fail)?;
    for warn in &report.warnings {
        ctx.log(format!("warning: {}: {}", warn.utt_id, warn.message));
    }
    let unreliable = report.rows.iter().filter(|r| !r.measurement.reliable).count();
    ctx.log(format!("analyzed {} utterances ({unreliable} unreliable)", report.rows.len()));
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!("failed: {}: {}", f.utt_id, f.message);
        }
        return Err(fail(format!("{} of {} utterances failed", report.failures.len(), records.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct AnovaReport {
    alpha: f64,
    analyses: Vec<stats::MeasureAnalysis>,
}

fn anova(ctx: &Ctx, a: &AnovaArgs) -> CliResult<()> {
    let file = File::open(&a.acoustics).map_err(|e| fail(format!("{}: {e}", a.acoustics.display())))?;
    let rows = acoustics::read_csv(file).map_err(fail)?;
    let mut analyses = Vec::new();
    for measure in Measure::ALL {
        for family in Family::ALL {
            if let Some(an) = stats::analyze_measure(&rows, measure, family, a.alpha).map_err(|e| fail(format!("{} / {family:?}: {e}", measure.as_str())))? {
                ctx.log(format!("{} / {family:?}: {} used, {} unreliable excluded", measure.as_str(), an.n_used, an.n_excluded_unreliable));
                analyses.push(an);
            }
        }
    }
    if analyses.is_empty() {
        return Err(fail("no processed conditions in the acoustics table"));
    }
    write_json(&ctx.out(&a.output), &AnovaReport { alpha: a.alpha, analyses })
}

fn report(ctx: &Ctx, a: &ReportArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    for p in &a.metrics {
        let text = fs::read_to_string(p).map_err(|e| fail(format!("{}: {e}", p.display())))?;
        let m: MetricsReport = serde_json::from_str(&text).map_err(|e| fail(format!("{}: {e}", p.display())))?;
        rows.push(ExperimentRow::from_metrics(&m));
    }
    let rep = build_report(rows);
    let json = rep.to_json().map_err(fail)?;
    fs::write(ctx.out("report.json"), json + "\n").map_err(fail)?;
    let text = rep.to_text();
    fs::write(ctx.out("report.txt"), &text).map_err(fail)?;
    if !ctx.cli.quiet {
        print!("{text}");
    }
    Ok(())
}
