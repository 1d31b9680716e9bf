//! The `geodyn` command line.
//!
//! ```text
//! geodyn <generate|ingest|train|eval|xval|attention-dump> [flags]
//! ```
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 I/O or file-format
//! error, 4 numeric failure. Files are written to a temporary path and
//! renamed into place.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{
    read_dataset_header, skeleton_covariance_sequence, sliding_window_fc, synth_generate, LabeledDataset, Manifest,
    SkeletonClip, SynthConfig, SynthMode, TimeSeries,
};
use crate::error::GeoError;
use crate::fsutil::write_atomic;
use crate::sequence::LabeledSequence;
use crate::ssm::{attention_trace, Mode, ModelConfig, ModelParams};
use crate::train::{
    cross_validate, evaluate, load_checkpoint, save_checkpoint, train, OptimizerKind, TrainConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: msg.into() }
    }

    fn context(self, ctx: impl std::fmt::Display) -> Self {
        CliError { code: self.code, message: format!("{ctx}: {}", self.message) }
    }
}

impl From<GeoError> for CliError {
    fn from(e: GeoError) -> Self {
        let code = match e {
            GeoError::Io(_) | GeoError::Format(_) | GeoError::Checksum { .. } | GeoError::Json(_) => EXIT_IO,
            GeoError::Numeric(_) | GeoError::Convergence { .. } | GeoError::Domain(_) => EXIT_NUMERIC,
            GeoError::Dimension(_) | GeoError::Parameter(_) | GeoError::Stratification(_) => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "geodyn", version, about = "State-space models on sequences of SPD matrices")]
struct Cli {
    /// Force single-threaded evaluation.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Build a dataset from CSV signals or skeleton clips.
    Ingest(IngestArgs),
    /// Train a model and write a checkpoint plus a JSON report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Stratified k-fold cross-validation.
    Xval(XvalArgs),
    /// Export time-averaged attention masks and their strongest edges.
    AttentionDump(DumpArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    synth_mode: Option<SynthModeArg>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthModeArg {
    Hard,
    Easy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum IngestKind {
    Timeseries,
    Skeleton,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long, value_enum)]
    kind: IngestKind,
    #[arg(long)]
    window: usize,
    /// Shrinkage toward the identity (time series).
    #[arg(long, default_value_t = 0.1)]
    shrinkage: f64,
    /// Covariance floor (skeletons).
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Root joint index (skeletons).
    #[arg(long, default_value_t = 0)]
    root: usize,
    /// CSV of `file,label` rows; paths are relative to this file.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Model and optimizer overrides shared by `train` and `xval`.
#[derive(Args, Debug, Default)]
struct ModelFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    no_attention: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Recurrent,
    Convolutional,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Recurrent => Mode::Recurrent,
            ModeArg::Convolutional => Mode::Convolutional,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Report path; defaults to the checkpoint path with a `.json` extension.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Also write the report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct XvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset item to run.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Everything that determines a training or cross-validation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { mode: Mode::Convolutional, model: ModelConfig::default(), train: TrainConfig::default() }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from(GeoError::from(e)).context(path.display()))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn resolve(flags: &ModelFlags, manifest: &Manifest) -> CliResult<RunConfig> {
    let mut rc: RunConfig = match &flags.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = flags.mode {
        rc.mode = m.into();
    }
    let t = &mut rc.train;
    let m = &mut rc.model;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(t.seed, flags.seed);
    set!(t.epochs, flags.epochs);
    set!(t.lr, flags.lr);
    set!(t.weight_decay, flags.weight_decay);
    set!(t.batch_size, flags.batch_size);
    if let Some(o) = flags.optimizer {
        t.optimizer = match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        };
    }
    set!(m.layers, flags.layers);
    set!(m.lag, flags.lag);
    set!(m.step, flags.step);
    set!(m.eps, flags.eps);
    set!(m.rho, flags.rho);
    if flags.no_attention {
        m.attention = false;
    }
    if m.dim == 0 {
        m.dim = manifest.dim;
    } else if m.dim != manifest.dim {
        return Err(CliError::usage(format!("config dimension {} but data dimension {}", m.dim, manifest.dim)));
    }
    m.classes = manifest.class_names.len();
    m.validate()?;
    t.validate()?;
    Ok(rc)
}

fn load_dataset(path: &Path) -> CliResult<LabeledDataset> {
    let ds = LabeledDataset::read(path).map_err(|e| CliError::from(e).context(path.display()))?;
    if ds.is_empty() {
        return Err(CliError::usage(format!("{}: dataset is empty", path.display())));
    }
    Ok(ds)
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::from(e).context(path.display()))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn cmd_generate(a: GenerateArgs) -> CliResult<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    cfg.classes = a.classes.unwrap_or(cfg.classes);
    cfg.per_class = a.per_class.unwrap_or(cfg.per_class);
    cfg.dim = a.dim.unwrap_or(cfg.dim);
    cfg.length = a.length.unwrap_or(cfg.length);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.noise = a.noise.unwrap_or(cfg.noise);
    if let Some(m) = a.synth_mode {
        cfg.mode = match m {
            SynthModeArg::Hard => SynthMode::Hard,
            SynthModeArg::Easy => SynthMode::Easy,
        };
    }
    if cfg.classes < 2 || cfg.per_class == 0 || cfg.dim == 0 || cfg.length == 0 {
        return Err(CliError::usage("--classes must be at least 2 and --per-class, --dim, --length positive"));
    }
    let ds = synth_generate(&cfg)?;
    ds.write(&a.out).map_err(|e| CliError::from(e).context(a.out.display()))?;
    print_json(&json!({
        "version": VERSION,
        "out": a.out,
        "items": ds.len(),
        "manifest": ds.manifest,
    }));
    Ok(())
}

fn parse_labels(path: &Path) -> CliResult<(Vec<(PathBuf, String)>, PathBuf)> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) })?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) })?;
        if rec.len() != 2 {
            return Err(CliError::usage(format!("{}: row {} needs `file,label`", path.display(), i + 1)));
        }
        if i == 0 && (&rec[0] == "file" || &rec[1] == "label") {
            continue;
        }
        rows.push((base.join(&rec[0]), rec[1].to_string()));
    }
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: no entries", path.display())));
    }
    Ok((rows, base))
}

/// Integer labels are class indices; otherwise names are sorted and indexed.
fn label_indices(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    if let Ok(ix) = raw.iter().map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>() {
        let q = ix.iter().max().map_or(0, |m| m + 1).max(2);
        return (ix, (0..q).map(|c| format!("class{c}")).collect());
    }
    let mut names: Vec<String> = raw.to_vec();
    names.sort();
    names.dedup();
    let ix = raw.iter().map(|s| names.binary_search(s).expect("present")).collect();
    (ix, names)
}

fn cmd_ingest(a: IngestArgs) -> CliResult<()> {
    let (rows, _) = parse_labels(&a.labels)?;
    let raw: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    let (labels, class_names) = label_indices(&raw);
    let mut items = Vec::with_capacity(rows.len());
    let mut warnings = 0;
    let mut files = Vec::with_capacity(rows.len());
    for ((file, _), label) in rows.iter().zip(labels) {
        let ctx = file.display().to_string();
        let built = match a.kind {
            IngestKind::Timeseries => {
                let ts = TimeSeries::from_csv(file).map_err(|e| CliError::from(e).context(&ctx))?;
                sliding_window_fc(&ts, a.window, a.shrinkage)
            }
            IngestKind::Skeleton => {
                let clip = SkeletonClip::from_csv(file, a.root).map_err(|e| CliError::from(e).context(&ctx))?;
                skeleton_covariance_sequence(&clip, a.window, a.eps)
            }
        }
        .map_err(|e| CliError::from(e).context(&ctx))?;
        warnings += built.warnings;
        files.push(ctx);
        items.push(LabeledSequence { seq: built.seq, label });
    }
    let dim = items[0].seq.dim();
    if let Some(bad) = items.iter().position(|i| i.seq.dim() != dim) {
        return Err(CliError::usage(format!("{}: matrices of size {} but expected {dim}", files[bad], items[bad].seq.dim())));
    }
    let construction = match a.kind {
        IngestKind::Timeseries => json!({"kind": a.kind, "window": a.window, "shrinkage": a.shrinkage, "files": files}),
        IngestKind::Skeleton => json!({"kind": a.kind, "window": a.window, "eps": a.eps, "root": a.root, "files": files}),
    };
    let manifest = Manifest {
        class_names,
        dim,
        length: items.iter().map(|i| i.seq.len()).max().unwrap_or(0),
        provenance: format!("ingested from {}", a.labels.display()),
        construction,
        seed: None,
    };
    let ds = LabeledDataset::new(items, manifest)?;
    ds.write(&a.out).map_err(|e| CliError::from(e).context(a.out.display()))?;
    print_json(&json!({
        "version": VERSION,
        "out": a.out,
        "items": ds.len(),
        "warnings": warnings,
        "manifest": ds.manifest,
    }));
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let rc = resolve(&a.model, &ds.manifest)?;
    let start = Instant::now();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(rc.train.seed);
    let mut params = ModelParams::init(&rc.model, &mut rng)?;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let history = train(&mut params, &ds.items, &idx, rc.mode, &rc.train, |e, l| {
        eprintln!("epoch {:>4}  loss {l:.6}", e + 1);
    })?;
    let metrics = evaluate(&params, &ds.items, rc.mode)?;
    save_checkpoint(&a.out, &params).map_err(|e| CliError::from(e).context(a.out.display()))?;
    let report_path = a.report.clone().unwrap_or_else(|| a.out.with_extension("json"));
    let report = json!({
        "version": VERSION,
        "command": "train",
        "data": a.data,
        "checkpoint": a.out,
        "config": rc,
        "final_loss": history.final_loss,
        "epoch_losses": history.epoch_losses,
        "train_metrics": metrics,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    write_json(&report_path, &report)?;
    print_json(&report);
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let params = load_checkpoint(&a.checkpoint).map_err(|e| CliError::from(e).context(a.checkpoint.display()))?;
    let ds = load_dataset(&a.data)?;
    if params.dim != ds.manifest.dim {
        return Err(CliError::usage(format!(
            "checkpoint expects {}x{} matrices, data has {}",
            params.dim, params.dim, ds.manifest.dim
        )));
    }
    let mode: Mode = a.mode.map(Into::into).unwrap_or(Mode::Convolutional);
    let metrics = evaluate(&params, &ds.items, mode)?;
    let report = json!({
        "version": VERSION,
        "command": "eval",
        "data": a.data,
        "checkpoint": a.checkpoint,
        "mode": mode,
        "metrics": metrics,
    });
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    print_json(&report);
    Ok(())
}

fn cmd_xval(a: XvalArgs) -> CliResult<()> {
    let ds = load_dataset(&a.data)?;
    let mut rc = resolve(&a.model, &ds.manifest)?;
    if let Some(k) = a.folds {
        rc.train.folds = k;
    }
    rc.train.validate()?;
    let start = Instant::now();
    let cv = cross_validate(&rc.model, &rc.train, &ds.items, rc.mode, |f| {
        eprintln!("fold {:>3}  acc {:.4}  loss {:.6}", f.fold, f.test.accuracy, f.history.final_loss);
    })?;
    let report = json!({
        "version": VERSION,
        "command": "xval",
        "data": a.data,
        "config": rc,
        "folds": cv.folds,
        "accuracy": cv.accuracy,
        "macro_precision": cv.macro_precision,
        "macro_f1": cv.macro_f1,
        "summary": {
            "accuracy": cv.accuracy.percent(),
            "macro_precision": cv.macro_precision.percent(),
            "macro_f1": cv.macro_f1.percent(),
        },
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    print_json(&report);
    Ok(())
}

/// Upper-triangle edges `(i, j, weight)`, strongest first, ties by index.
pub fn top_edges(mask: &crate::spd::Mat, k: usize) -> Vec<(usize, usize, f64)> {
    let n = mask.nrows();
    let mut edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, mask[(i, j)]))
        .collect();
    edges.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    edges.truncate(k);
    edges
}

fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| CliError { code: EXIT_IO, message: e.to_string() })?;
    }
    w.into_inner().map_err(|e| CliError { code: EXIT_IO, message: e.to_string() })
}

fn cmd_attention_dump(a: DumpArgs) -> CliResult<()> {
    let params = load_checkpoint(&a.checkpoint).map_err(|e| CliError::from(e).context(a.checkpoint.display()))?;
    let ds = load_dataset(&a.data)?;
    let item = ds
        .items
        .get(a.index)
        .ok_or_else(|| CliError::usage(format!("--index {} but the dataset has {} items", a.index, ds.len())))?;
    if params.layers.iter().all(|l| !l.attention) {
        return Err(CliError::usage("the checkpoint has attention disabled in every layer"));
    }
    let trace = attention_trace(&item.seq, &params)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::from(GeoError::from(e)).context(a.out_dir.display()))?;
    let mut written = Vec::new();
    for layer in 0..params.layers.len() {
        let Some(mean) = trace.mean_mask(layer) else { continue };
        let mask_path = a.out_dir.join(format!("layer{layer}_mask.csv"));
        let rows = (0..mean.nrows()).map(|i| (0..mean.ncols()).map(|j| mean[(i, j)].to_string()).collect());
        write_atomic(&mask_path, &csv_bytes(rows)?)?;
        let edge_path = a.out_dir.join(format!("layer{layer}_top{}.csv", a.top_k));
        let header = std::iter::once(vec!["i".to_string(), "j".to_string(), "weight".to_string()]);
        let edges = top_edges(&mean, a.top_k)
            .into_iter()
            .map(|(i, j, w)| vec![i.to_string(), j.to_string(), w.to_string()]);
        write_atomic(&edge_path, &csv_bytes(header.chain(edges))?)?;
        written.push(json!({"layer": layer, "mask": mask_path, "edges": edge_path}));
    }
    print_json(&json!({
        "version": VERSION,
        "command": "attention-dump",
        "data": a.data,
        "checkpoint": a.checkpoint,
        "index": a.index,
        "top_k": a.top_k,
        "guard_checks": trace.guard_checks,
        "guard_fires": trace.guard_fires,
        "files": written,
    }));
    Ok(())
}

/// Header of a dataset file as JSON, without reading the matrices.
pub fn describe_dataset(path: &Path) -> crate::Result<serde_json::Value> {
    let h = read_dataset_header(path)?;
    Ok(json!({"version": h.version, "items": h.item_count, "manifest": h.manifest}))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let go = || match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Xval(a) => cmd_xval(a),
        Command::AttentionDump(a) => cmd_attention_dump(a),
    };
    let result = if cli.deterministic {
        match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
            Ok(pool) => pool.install(go),
            Err(e) => Err(CliError { code: EXIT_NUMERIC, message: e.to_string() }),
        }
    } else {
        go()
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
