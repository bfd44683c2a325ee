//! Command-line interface: argument definitions and one function per
//! subcommand.
//!
//! Every run writes into `<out>/<subcommand>/<tag>/` together with a
//! `manifest.json`; progress goes to standard error.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use protoscope_core::data::LabeledData;
use protoscope_core::evaluation::{cross_generator_row, support_seed, ConfusionMatrix, EvalMatrix, GridAxes, GridCell};
use protoscope_core::explain::{expected_gradients_all_classes, sign_agreement_table, top_k_per_class, ClassAttributions};
use protoscope_core::feature_store::{
    attribution_class_name, sample_attribution_support, sample_support, split_train_val, FeatureSet, Generator,
    ATTRIBUTION_CLASSES,
};
use protoscope_core::knn::{KnnClassifier, ATTRIBUTION_SUPPORT_SIZES, GRID_KS};
use protoscope_core::metrics::DistanceMetric;
use protoscope_core::neural::{linear_probe, train_early_stop, EpochRecord, Mlp, MlpArchitecture, OutputHead, TrainConfig};
use protoscope_core::seed;
use protoscope_core::synthetic::{bayes_oracle, generate, Partition};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{
    attribution_data, detection_domains, load_subsets, read_subsets, real_source, require_all_generators,
    Subset,
};
use crate::error::{AppError, Result};
use crate::manifest::{RunDir, RunManifest};
use crate::report::{self, Format, NamedConfusion};
use crate::{fmlp, fpro, parallel, world_config};

const MODEL_STREAM: u64 = 0x6d_6f_64_65_6c;
const SHUFFLE_STREAM: u64 = 0x73_68_75_66_66_6c;
const EXPLAIN_STREAM: u64 = 0x65_78_70_6c_61_69_6e;

#[derive(Debug, Parser)]
#[command(name = "protoscope", version, about = "Detect and attribute AI-generated images from diffusion U-Net prototypes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split one subset file into stratified train and validation files.
    Split(SplitArgs),
    /// Linear-probe every layer and report cross-generator accuracy per layer.
    ProbeLayers(ProbeArgs),
    /// Exhaustive k-NN detection grid (metric x support size x k).
    GridKnn(GridKnnArgs),
    /// Cross-generator k-NN detection matrix for one configuration.
    Detect(DetectArgs),
    /// Train MLP detectors (one per generator) or a nine-class attributor.
    TrainMlp(TrainMlpArgs),
    /// Evaluate a nine-class attributor and emit its confusion matrix.
    Attribute(AttributeArgs),
    /// k-NN attribution grid over support size x k.
    GridKnnAttrib(GridKnnAttribArgs),
    /// Expected-gradients explanations, top-k features and overlap.
    Explain(ExplainArgs),
    /// Generate a synthetic fingerprint world as FPRO files.
    Synth(SynthArgs),
    /// Render CSV and JSON artifacts from earlier runs into one report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Base seed for every random stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Format of the rendered report artifact; CSV data is always written.
    #[arg(long, value_enum, default_value_t = Format::Md)]
    pub format: Format,
    /// Root output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run directory name under `<out>/<subcommand>/`; defaults to `seed-<seed>`.
    #[arg(long)]
    pub tag: Option<String>,
    /// Suppress progress lines on standard error.
    #[arg(long)]
    pub quiet: bool,
}

impl CommonArgs {
    fn tag(&self) -> String {
        self.tag.clone().unwrap_or_else(|| format!("seed-{}", self.seed))
    }

    fn run_dir(&self, subcommand: &str) -> Result<RunDir> {
        let tag = self.tag();
        if tag.is_empty() || tag.contains(['/', '\\']) || tag == "." || tag == ".." {
            return Err(AppError::Usage(format!("invalid tag {tag:?}")));
        }
        RunDir::create(&self.out, RunManifest::new(subcommand, &tag, self.seed))
    }

    fn progress(&self, subcommand: &str, message: &str) {
        if !self.quiet {
            eprintln!("[{subcommand}] {message}");
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Per-generator subset files (one generator's fakes plus real images each).
    #[arg(long, num_args = 1.., required = true)]
    pub features: Vec<PathBuf>,
    /// Validation files, one per generator; when absent each subset is split.
    #[arg(long, num_args = 1..)]
    pub val: Vec<PathBuf>,
    /// Training share of the internal split.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

fn parse_metric(s: &str) -> std::result::Result<DistanceMetric, String> {
    DistanceMetric::from_str(s).map_err(|e| e.to_string())
}

fn parse_generator(s: &str) -> std::result::Result<Generator, String> {
    Generator::parse(s).ok_or_else(|| format!("unknown generator {s:?}"))
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long, required = true)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 15)]
    pub patience: usize,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
}

impl TrainingArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            patience: self.patience,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// Subset files of every layer; grouped by their layer tag.
    #[arg(long, num_args = 1.., required = true)]
    pub features: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GridKnnArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated metrics [default: all four].
    #[arg(long, visible_alias = "metric", value_delimiter = ',', value_parser = parse_metric)]
    pub metrics: Option<Vec<DistanceMetric>>,
    /// Comma-separated support sizes [default: the 17 detection sizes].
    #[arg(long, visible_alias = "support-size", value_delimiter = ',')]
    pub support_sizes: Option<Vec<usize>>,
    /// Comma-separated k values [default: the 24 grid values].
    #[arg(long, visible_alias = "k", value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 2000)]
    pub support_size: usize,
    #[arg(long, default_value_t = 101)]
    pub k: usize,
    #[arg(long, default_value = "correlation", value_parser = parse_metric)]
    pub metric: DistanceMetric,
    /// Target sets (one generator each) replacing the validation sets.
    #[arg(long, num_args = 1..)]
    pub eval: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Real-vs-fake, one network per generator subset.
    Detect,
    /// Nine-way source attribution.
    Attribute,
}

#[derive(Debug, Clone, Args)]
pub struct TrainMlpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Task::Detect)]
    pub task: Task,
    /// Hidden widths, e.g. "640,320"; empty for a linear model.
    #[arg(long, default_value = "640")]
    pub hidden: String,
    /// Generator subset whose real images form the attribution "Real" class.
    #[arg(long, value_parser = parse_generator)]
    pub real_source: Option<Generator>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AttributeArgs {
    /// Nine-class FMLP checkpoint.
    #[arg(long, required = true)]
    pub model: PathBuf,
    /// Evaluation subsets, one per generator.
    #[arg(long, num_args = 1.., required = true)]
    pub features: Vec<PathBuf>,
    #[arg(long, value_parser = parse_generator)]
    pub real_source: Option<Generator>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GridKnnAttribArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, visible_alias = "metrics", default_value = "correlation", value_delimiter = ',', value_parser = parse_metric)]
    pub metric: Vec<DistanceMetric>,
    /// Comma-separated support sizes [default: the 17 attribution sizes].
    #[arg(long, visible_alias = "support-size", value_delimiter = ',')]
    pub support_sizes: Option<Vec<usize>>,
    #[arg(long, visible_alias = "k", value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_generator)]
    pub real_source: Option<Generator>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[arg(long, required = true)]
    pub model: PathBuf,
    /// Files whose records are explained.
    #[arg(long, num_args = 1.., required = true)]
    pub features: Vec<PathBuf>,
    /// Files the background is drawn from [default: --features].
    #[arg(long, num_args = 1..)]
    pub background_features: Vec<PathBuf>,
    /// Background points.
    #[arg(long, default_value_t = 200)]
    pub background: usize,
    /// Explained samples, shared by every class.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Interpolation draws per (sample, class).
    #[arg(long, default_value_t = 200)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// World config file (key = value lines).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled world: "demo" or "quick".
    #[arg(long)]
    pub preset: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Artifact files or run directories.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run(cli: Cli) -> Result<PathBuf> {
    let jobs = match &cli.command {
        Command::Split(a) => a.common.jobs,
        Command::ProbeLayers(a) => a.common.jobs,
        Command::GridKnn(a) => a.common.jobs,
        Command::Detect(a) => a.common.jobs,
        Command::TrainMlp(a) => a.common.jobs,
        Command::Attribute(a) => a.common.jobs,
        Command::GridKnnAttrib(a) => a.common.jobs,
        Command::Explain(a) => a.common.jobs,
        Command::Synth(a) => a.common.jobs,
        Command::Report(a) => a.common.jobs,
    };
    parallel::pool(jobs)?.install(|| match cli.command {
        Command::Split(a) => split(&a),
        Command::ProbeLayers(a) => probe_layers(&a),
        Command::GridKnn(a) => grid_knn(&a),
        Command::Detect(a) => detect(&a),
        Command::TrainMlp(a) => train_mlp(&a),
        Command::Attribute(a) => attribute(&a),
        Command::GridKnnAttrib(a) => grid_knn_attrib(&a),
        Command::Explain(a) => explain(&a),
        Command::Synth(a) => synth(&a),
        Command::Report(a) => report_cmd(&a),
    })
}

fn record_inputs(dir: &mut RunDir, paths: &[PathBuf]) -> Result<()> {
    paths.iter().try_for_each(|p| dir.manifest.input(p))
}

fn record_data(dir: &mut RunDir, data: &DataArgs) -> Result<()> {
    record_inputs(dir, &data.features)?;
    record_inputs(dir, &data.val)?;
    dir.manifest.param("train_fraction", data.train_fraction);
    Ok(())
}

fn load(data: &DataArgs, seed: u64) -> Result<Vec<Subset>> {
    load_subsets(&data.features, &data.val, data.train_fraction, seed)
}

/// Writes `<stem>.csv` and, unless the format is CSV, `<stem>.<ext>`.
fn write_rendered(dir: &mut RunDir, stem: &str, csv: String, format: Format, render: impl FnOnce(Format) -> Result<String>) -> Result<()> {
    dir.write_text(&format!("{stem}.csv"), &csv)?;
    if format != Format::Csv {
        dir.write_text(&format!("{stem}.{}", format.extension()), &render(format)?)?;
    }
    Ok(())
}

fn write_matrix(dir: &mut RunDir, stem: &str, m: &EvalMatrix, format: Format) -> Result<()> {
    write_rendered(dir, stem, report::matrix_csv(m)?, format, |f| report::render_matrix(m, f))
}

fn write_json(dir: &mut RunDir, name: &str, value: &impl Serialize) -> Result<()> {
    dir.write_text(name, &(serde_json::to_string_pretty(value)? + "\n"))?;
    Ok(())
}

fn stem_of(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".fpro").map(str::to_string).unwrap_or(name)
}

// ------------------------------------------------------------------ split

fn split(a: &SplitArgs) -> Result<PathBuf> {
    let mut dir = a.common.run_dir("split")?;
    dir.manifest.input(&a.features)?;
    dir.manifest.param("train_fraction", a.train_fraction);
    let set = fpro::read_feature_file(&a.features)?;
    let pair = split_train_val(&set, a.train_fraction, a.common.seed)?;
    let stem = stem_of(&a.features);
    fpro::write_feature_file(&pair.train, dir.artifact(&format!("{stem}.train.fpro"))?)?;
    fpro::write_feature_file(&pair.validation, dir.artifact(&format!("{stem}.val.fpro"))?)?;
    a.common.progress(
        "split",
        &format!("{} train / {} validation records", pair.train.len(), pair.validation.len()),
    );
    dir.finish()
}

// ----------------------------------------------------------- probe-layers

#[derive(Debug, Serialize, Deserialize)]
struct LayerRow {
    layer: String,
    accuracy: f64,
}

fn probe_layers(a: &ProbeArgs) -> Result<PathBuf> {
    let mut dir = a.common.run_dir("probe-layers")?;
    record_inputs(&mut dir, &a.features)?;
    dir.manifest.param("train_fraction", a.train_fraction);
    dir.manifest.param("lr", a.training.lr);
    dir.manifest.param("patience", a.training.patience);
    dir.manifest.param("max_epochs", a.training.max_epochs);
    dir.manifest.param("batch_size", a.training.batch_size);

    let mut layers: Vec<(String, Vec<(Generator, FeatureSet)>)> = Vec::new();
    for p in &a.features {
        let set = fpro::read_feature_file(p)?;
        let g = crate::domains::subset_generator(&set, p)?;
        let tag = set.layer_tag().to_string();
        match layers.iter_mut().find(|(t, _)| *t == tag) {
            Some((_, sets)) => {
                if sets.iter().any(|(h, _)| *h == g) {
                    return Err(AppError::Schema(format!("{}: second {g} subset for layer {tag}", p.display())));
                }
                sets.push((g, set));
            }
            None => layers.push((tag, vec![(g, set)])),
        }
    }
    let mut rows = Vec::new();
    for (tag, mut sets) in layers {
        sets.sort_by_key(|(g, _)| *g);
        let subsets = crate::domains::split_subsets(sets, a.train_fraction, a.common.seed)?;
        let vals = subsets
            .iter()
            .map(|s| LabeledData::detection(&s.validation))
            .collect::<protoscope_core::Result<Vec<_>>>()?;
        let val_refs: Vec<&LabeledData> = vals.iter().collect();
        let matrix_rows = subsets
            .par_iter()
            .zip(&vals)
            .map(|(s, own_val)| {
                let train = LabeledData::detection(&s.train)?;
                let cfg = a.training.config(seed::derive(a.common.seed, &[SHUFFLE_STREAM, s.generator.index() as u64]));
                let (probe, _) = linear_probe(&train, own_val, &cfg)?;
                Ok(cross_generator_row(|d| probe.predict(d.features()), &val_refs)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = subsets.iter().map(|s| s.generator.name().to_string()).collect();
        let m = EvalMatrix::from_rows(labels, matrix_rows)?;
        a.common.progress("probe-layers", &format!("{tag}: {:.2}", m.grand_mean()));
        dir.write_text(&format!("matrix-{tag}.csv"), &report::matrix_csv(&m)?)?;
        rows.push(LayerRow {
            layer: tag,
            accuracy: m.grand_mean(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let csv_text = String::from_utf8(w.into_inner().map_err(|e| AppError::Malformed(e.to_string()))?)
        .expect("csv output is UTF-8");
    write_rendered(&mut dir, "layers", csv_text, a.common.format, |f| match f {
        Format::Json => Ok(serde_json::to_string_pretty(&rows)? + "\n"),
        _ => {
            let best = rows.iter().max_by(|x, y| x.accuracy.total_cmp(&y.accuracy)).map(|r| r.layer.clone());
            let mut s = String::from("| Layer | Avg. accuracy |\n|---|---|\n");
            for r in &rows {
                let mark = if Some(&r.layer) == best.as_ref() { " (best)" } else { "" };
                s.push_str(&format!("| {}{mark} | {} |\n", r.layer, report::one_decimal(r.accuracy)));
            }
            Ok(s)
        }
    })?;
    dir.finish()
}

// --------------------------------------------------------------- grid-knn

fn cell_progress<'a>(common: &'a CommonArgs, name: &'a str) -> impl Fn(&[GridCell]) + Sync + 'a {
    move |cells: &[GridCell]| {
        for c in cells {
            let acc = c.accuracy.map_or("skipped".to_string(), |a| format!("{a:.2}"));
            common.progress(name, &format!("{} |S|={} k={}: {acc}", c.metric, c.support_size, c.k));
        }
    }
}

fn grid_knn(a: &GridKnnArgs) -> Result<PathBuf> {
    let mut dir = a.common.run_dir("grid-knn")?;
    record_data(&mut dir, &a.data)?;
    let defaults = GridAxes::detection_default();
    let axes = GridAxes {
        metrics: a.metrics.clone().unwrap_or(defaults.metrics),
        support_sizes: a.support_sizes.clone().unwrap_or(defaults.support_sizes),
        ks: a.ks.clone().unwrap_or(defaults.ks),
    };
    dir.manifest.param("metrics", axes.metrics.iter().map(|m| m.name()).collect::<Vec<_>>());
    dir.manifest.param("support_sizes", &axes.support_sizes);
    dir.manifest.param("ks", &axes.ks);
    let subsets = load(&a.data, a.common.seed)?;
    let domains = detection_domains(&subsets)?;
    a.common.progress("grid-knn", &format!("{} cells over {} generators", axes.cell_count(), domains.len()));
    let grid = parallel::grid_search_knn_detection(&domains, &axes, a.common.seed, &cell_progress(&a.common, "grid-knn"))?;
    write_rendered(&mut dir, "grid", report::grid_csv(&grid)?, a.common.format, |f| report::render_grid(&grid, f))?;
    if let Some(best) = grid.best().copied() {
        let m = detect_matrix(&subsets, &domains, best.metric, best.support_size, best.k, a.common.seed, None)?;
        write_matrix(&mut dir, "best-matrix", &m, a.common.format)?;
        a.common.progress(
            "grid-knn",
            &format!("best {} |S|={} k={}: {:.2}", best.metric, best.support_size, best.k, m.grand_mean()),
        );
    }
    dir.finish()
}

// ----------------------------------------------------------------- detect

/// Cross-generator k-NN matrix with the same supports as the grid search.
fn detect_matrix(
    subsets: &[Subset],
    domains: &[protoscope_core::evaluation::DetectionDomain],
    metric: DistanceMetric,
    size: usize,
    k: usize,
    seed: u64,
    targets: Option<&[(String, LabeledData)]>,
) -> Result<EvalMatrix> {
    let own: Vec<(String, LabeledData)>;
    let targets = match targets {
        Some(t) => t,
        None => {
            own = domains.iter().map(|d| (d.label.clone(), d.validation.clone())).collect();
            &own
        }
    };
    let target_refs: Vec<&LabeledData> = targets.iter().map(|(_, d)| d).collect();
    let rows = subsets
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let support = sample_support(&s.train, size, support_seed(seed, size, i))?;
            if k > support.len() {
                return Err(AppError::Usage(format!("k = {k} exceeds support size {size}")));
            }
            let clf = KnnClassifier::new(&support, metric);
            Ok(cross_generator_row(
                |d| d.rows().map(|r| clf.predict(r, k).map(|p| p.label)).collect(),
                &target_refs,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalMatrix::new(
        subsets.iter().map(|s| s.generator.name().to_string()).collect(),
        targets.iter().map(|(l, _)| l.clone()).collect(),
        rows.concat(),
    )?)
}

fn eval_targets(paths: &[PathBuf]) -> Result<Vec<(String, LabeledData)>> {
    read_subsets(paths)?
        .into_iter()
        .map(|(g, set)| Ok((g.name().to_string(), LabeledData::detection(&set)?)))
        .collect()
}

fn detect(a: &DetectArgs) -> Result<PathBuf> {
    let mut dir = a.common.run_dir("detect")?;
    record_data(&mut dir, &a.data)?;
    record_inputs(&mut dir, &a.eval)?;
    dir.manifest.param("metric", a.metric.name());
    dir.manifest.param("support_size", a.support_size);
    dir.manifest.param("k", a.k);
    let subsets = load(&a.data, a.common.seed)?;
    let domains = detection_domains(&subsets)?;
    let targets = if a.eval.is_empty() { None } else { Some(eval_targets(&a.eval)?) };
    let m = detect_matrix(&subsets, &domains, a.metric, a.support_size, a.k, a.common.seed, targets.as_deref())?;
    a.common.progress("detect", &format!("grand mean {:.2}", m.grand_mean()));
    write_matrix(&mut dir, "matrix", &m, a.common.format)?;
    dir.finish()
}

// -------------------------------------------------------------- train-mlp

fn history_csv(history: &[EpochRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "val_accuracy"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_accuracy.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| AppError::Malformed(e.to_string()))?).expect("UTF-8"))
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    name: String,
    architecture: String,
    best_epoch: usize,
    epochs_run: usize,
    best_val_accuracy: f64,
}

fn train_one(
    a: &TrainMlpArgs,
    hidden: &[usize],
    name: &str,
    stream: u64,
    head: OutputHead,
    train: &LabeledData,
    val: &LabeledData,
) -> Result<(Mlp<f32>, Vec<EpochRecord>, TrainSummary)> {
    let arch = MlpArchitecture::new(train.dim(), hidden, head)?;
    let model = Mlp::<f32>::new(arch.clone(), seed::derive(a.common.seed, &[MODEL_STREAM, stream]));
    let cfg = a.training.config(seed::derive(a.common.seed, &[SHUFFLE_STREAM, stream]));
    let outcome = train_early_stop(model, train, val, &cfg, |r| {
        a.common.progress(
            "train-mlp",
            &format!("{name} epoch {} loss {:.5} val {:.4}", r.epoch, r.train_loss, r.val_accuracy),
        )
    })?;
    let summary = TrainSummary {
        name: name.to_string(),
        architecture: arch.name(),
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.history.len(),
        best_val_accuracy: outcome.best_accuracy,
    };
    Ok((outcome.model, outcome.history, summary))
}

fn train_mlp(a: &TrainMlpArgs) -> Result<PathBuf> {
    let mut dir = a.common.run_dir("train-mlp")?;
    record_data(&mut dir, &a.data)?;
    dir.manifest.param("task", a.task);
    let hidden = parse_list::<usize>(&a.hidden).map_err(|e| AppError::Usage(format!("--hidden {e}")))?;
    dir.manifest.param("hidden", &hidden);
    dir.manifest.param("lr", a.training.lr);
    dir.manifest.param("patience", a.training.patience);
    dir.manifest.param("max_epochs", a.training.max_epochs);
    dir.manifest.param("batch_size", a.training.batch_size);
    dir.manifest.param("weight_decay", a.training.weight_decay);
    let subsets = load(&a.data, a.common.seed)?;
    match a.task {
        Task::Detect => {
            let vals = subsets
                .iter()
                .map(|s| LabeledData::detection(&s.validation))
                .collect::<protoscope_core::Result<Vec<_>>>()?;
            let trained = subsets
                .par_iter()
                .zip(&vals)
                .map(|(s, val)| {
                    let train = LabeledData::detection(&s.train)?;
                    train_one(a, &hidden, s.generator.name(), s.generator.index() as u64, OutputHead::Softmax(2), &train, val)
                })
                .collect::<Result<Vec<_>>>()?;
            let val_refs: Vec<&LabeledData> = vals.iter().collect();
            let mut rows = Vec::new();
            let mut summaries = Vec::new();
            for (s, (model, history, summary)) in subsets.iter().zip(trained) {
                fmlp::write_model_file(&model, dir.artifact(&format!("{}.fmlp", s.generator.slug()))?)?;
                dir.write_text(&format!("history-{}.csv", s.generator.slug()), &history_csv(&history)?)?;
                rows.push(cross_generator_row(|d| model.predict(d.features()), &val_refs)?);
                summaries.push(summary);
            }
            let m = EvalMatrix::from_rows(subsets.iter().map(|s| s.generator.name().to_string()).collect(), rows)?;
            a.common.progress("train-mlp", &format!("validation grand mean {:.2}", m.grand_mean()));
            write_matrix(&mut dir, "matrix", &m, a.common.format)?;
            write_json(&mut dir, "summary.json", &summaries)?;
        }
        Task::Attribute => {
            let gens: Vec<Generator> = subsets.iter().map(|s| s.generator).collect();
            require_all_generators(&gens)?;
            let real = real_source(&gens, a.real_source)?;
            dir.manifest.param("real_source", real.slug());
            let trains: Vec<FeatureSet> = subsets.iter().map(|s| s.train.clone()).collect();
            let vals: Vec<FeatureSet> = subsets.iter().map(|s| s.validation.clone()).collect();
            let (_, train) = attribution_data(&trains, real)?;
            let (_, val) = attribution_data(&vals, real)?;
            let (model, history, summary) =
                train_one(a, &hidden, "attributor", 0xa77, OutputHead::Softmax(ATTRIBUTION_CLASSES), &train, &val)?;
            fmlp::write_model_file(&model, dir.artifact("attributor.fmlp")?)?;
            dir.write_text("history.csv", &history_csv(&history)?)?;
            let confusion = named_confusion(&val, &model.predict(val.features())?)?;
            write_rendered(&mut dir, "confusion", report::confusion_csv(&confusion)?, a.common.format, |f| {
                report::render_confusion(&confusion, f)
            })?;
            a.common.progress("train-mlp", &format!("validation accuracy {:.4}", summary.best_val_accuracy));
            write_json(&mut dir, "summary.json", &[summary])?;
        }
    }
    dir.finish()
}

fn named_confusion(data: &LabeledData, predicted: &[usize]) -> Result<NamedConfusion> {
    Ok(NamedConfusion {
        classes: (0..data.class_count()).map(|c| attribution_class_name(c).to_string()).collect(),
        matrix: ConfusionMatrix::from_predictions(data.class_count(), data.labels(), predicted)?,
    })
}

// -------------------------------------------------------------- attribute

#[derive(Debug, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub accuracy: f64,
    pub samples: u64,
    pub real_source: String,
}

fn attribute(a: &AttributeArgs) -> Result<PathBuf> {
    let mut dir = a.common.run_dir("attribute")?;
    dir.manifest.input(&a.model)?;
    record_inputs(&mut dir, &a.features)?;
    let model = fmlp::read_model_file(&a.model)?;
    if model.architecture().output != OutputHead::Softmax(ATTRIBUTION_CLASSES) {
        return Err(AppError::Schema(format!(
            "{}: not a nine-class attributor ({:?} head)",
            a.model.display(),
            model.architecture().output
        )));
    }
    let sets = read_subsets(&a.features)?;
    let gens: Vec<Generator> = sets.iter().map(|(g, _)| *g).collect();
    require_all_generators(&gens)?;
    let real = real_source(&gens, a.real_source)?;
    dir.manifest.param("real_source", real.slug());
    let sets: Vec<FeatureSet> = sets.into_iter().map(|(_, s)| s).collect();
    let (_, data) = attribution_data(&sets, real)?;
    if data.dim() != model.architecture().input_dim {
        return Err(AppError::Schema(format!(
            "features have dim {}, model expects {}",
            data.dim(),
            model.architecture().input_dim
        )));
    }
    let predicted: Vec<usize> = data
        .features()
        .par_chunks(1024 * data.dim())
        .map(|chunk| model.predict(chunk))
        .collect::<protoscope_core::Result<Vec<_>>>()?
        .concat();
    let confusion = named_confusion(&data, &predicted)?;
    a.common.progress("attribute", &format!("accuracy {:.4}", confusion.matrix.accuracy()));
    write_rendered(&mut dir, "confusion", report::confusion_csv(&confusion)?, a.common.format, |f| {
        report::render_confusion(&confusion, f)
    })?;
    write_json(
        &mut dir,
        "summary.json",
        &AttributionSummary {
            accuracy: confusion.matrix.accuracy(),
            samples: confusion.matrix.total(),
            real_source: real.name().to_string(),
        },
    )?;
    dir.finish()
}

// --------------------------------------------------------- grid-knn-attrib

fn grid_knn_attrib(a: &GridKnnAttribArgs) -> Result<PathBuf> {
    let mut dir = a.common.run_dir("grid-knn-attrib")?;
    record_data(&mut dir, &a.data)?;
    let axes = GridAxes {
        metrics: a.metric.clone(),
        support_sizes: a.support_sizes.clone().unwrap_or_else(|| ATTRIBUTION_SUPPORT_SIZES.to_vec()),
        ks: a.ks.clone().unwrap_or_else(|| GRID_KS.to_vec()),
    };
    dir.manifest.param("metrics", axes.metrics.iter().map(|m| m.name()).collect::<Vec<_>>());
    dir.manifest.param("support_sizes", &axes.support_sizes);
    dir.manifest.param("ks", &axes.ks);
    let subsets = load(&a.data, a.common.seed)?;
    let gens: Vec<Generator> = subsets.iter().map(|s| s.generator).collect();
    require_all_generators(&gens)?;
    let real = real_source(&gens, a.real_source)?;
    dir.manifest.param("real_source", real.slug());
    let trains: Vec<FeatureSet> = subsets.iter().map(|s| s.train.clone()).collect();
    let vals: Vec<FeatureSet> = subsets.iter().map(|s| s.validation.clone()).collect();
    let (classes, _) = attribution_data(&trains, real)?;
    let (_, val) = attribution_data(&vals, real)?;
    let grid = parallel::grid_search_knn_attribution(
        &classes,
        &val,
        &axes,
        a.common.seed,
        &cell_progress(&a.common, "grid-knn-attrib"),
    )?;
    write_rendered(&mut dir, "grid", report::grid_csv(&grid)?, a.common.format, |f| report::render_grid(&grid, f))?;
    if let Some(best) = grid.best().copied() {
        let support = sample_attribution_support(
            &classes,
            best.support_size,
            support_seed(a.common.seed, best.support_size, 0),
        )?;
        let clf = KnnClassifier::new(&support, best.metric);
        let predicted = parallel::knn_predict_rows(&clf, &val, best.k)?;
        let confusion = named_confusion(&val, &predicted)?;
        write_rendered(&mut dir, "best-confusion", report::confusion_csv(&confusion)?, a.common.format, |f| {
            report::render_confusion(&confusion, f)
        })?;
    }
    dir.finish()
}

// ---------------------------------------------------------------- explain

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedJson {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTopJson {
    pub class: String,
    pub top: Vec<RankedJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignAgreementJson {
    pub class_a: String,
    pub class_b: String,
    pub feature: usize,
    pub agreement: f64,
}

/// Contents of `explain.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainJson {
    pub classes: Vec<String>,
    pub top_k: usize,
    pub background: usize,
    pub samples: usize,
    pub n_samples: usize,
    pub top_features: Vec<ClassTopJson>,
    pub overlap: Vec<Vec<f64>>,
    pub sign_agreement: Vec<SignAgreementJson>,
}

fn read_all(paths: &[PathBuf]) -> Result<FeatureSet> {
    let sets = paths.iter().map(fpro::read_feature_file).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = sets.iter().find(|s| s.dim() != sets[0].dim()) {
        return Err(AppError::Schema(format!("mixed dimensions {} and {}", sets[0].dim(), bad.dim())));
    }
    Ok(FeatureSet::concat(&sets.iter().collect::<Vec<_>>())?)
}

/// Rows drawn uniformly without replacement, in their original order.
fn draw_rows(set: &FeatureSet, count: usize, seed: u64) -> Vec<f32> {
    let n = count.min(set.len());
    let mut picked = index::sample(&mut seed::rng(seed), set.len(), n).into_vec();
    picked.sort_unstable();
    picked.iter().flat_map(|&i| set.records()[i].features.iter().copied()).collect()
}

fn class_names(head: OutputHead) -> Vec<String> {
    match head {
        OutputHead::Softmax(ATTRIBUTION_CLASSES) => (0..ATTRIBUTION_CLASSES).map(|c| attribution_class_name(c).to_string()).collect(),
        OutputHead::Sigmoid | OutputHead::Softmax(2) => vec!["Real".into(), "Fake".into()],
        OutputHead::Softmax(n) => (0..n).map(|c| format!("class {c}")).collect(),
    }
}

fn explain(a: &ExplainArgs) -> Result<PathBuf> {
    let mut dir = a.common.run_dir("explain")?;
    dir.manifest.input(&a.model)?;
    record_inputs(&mut dir, &a.features)?;
    record_inputs(&mut dir, &a.background_features)?;
    for (k, v) in [("background", a.background), ("samples", a.samples), ("n_samples", a.n_samples), ("top_k", a.top_k)] {
        dir.manifest.param(k, v);
    }
    if a.background == 0 || a.samples == 0 || a.n_samples == 0 {
        return Err(AppError::Usage("background, samples and n-samples must be positive".into()));
    }
    let model = fmlp::read_model_file(&a.model)?;
    let dim = model.architecture().input_dim;
    let explained_set = read_all(&a.features)?;
    let background_set = if a.background_features.is_empty() {
        explained_set.clone()
    } else {
        read_all(&a.background_features)?
    };
    if explained_set.dim() != dim || background_set.dim() != dim {
        return Err(AppError::Schema(format!("features have dim {}, model expects {dim}", explained_set.dim())));
    }
    let background = draw_rows(&background_set, a.background, seed::derive(a.common.seed, &[EXPLAIN_STREAM, 0]));
    let explained = draw_rows(&explained_set, a.samples, seed::derive(a.common.seed, &[EXPLAIN_STREAM, 1]));
    let n_explained = explained.len() / dim;
    a.common.progress(
        "explain",
        &format!("{n_explained} samples x {} background points x {} draws", background.len() / dim, a.n_samples),
    );
    let started = Instant::now();
    let per_sample = explained
        .par_chunks(dim)
        .enumerate()
        .map(|(i, x)| {
            expected_gradients_all_classes(
                &model,
                x,
                &background,
                a.n_samples,
                seed::derive(a.common.seed, &[EXPLAIN_STREAM, 2, i as u64]),
            )
        })
        .collect::<protoscope_core::Result<Vec<_>>>()?;
    a.common.progress("explain", &format!("attributions done in {:.1}s", started.elapsed().as_secs_f64()));
    let names = class_names(model.architecture().output);
    let per_class = (0..names.len())
        .map(|c| ClassAttributions::new(dim, per_sample.iter().flat_map(|s| s[c].iter().copied()).collect()))
        .collect::<protoscope_core::Result<Vec<_>>>()?;
    let top = top_k_per_class(&per_class, a.top_k)?;
    let agreement = sign_agreement_table(&top, &per_class)?;
    let json = ExplainJson {
        classes: names.clone(),
        top_k: a.top_k,
        background: background.len() / dim,
        samples: n_explained,
        n_samples: a.n_samples,
        top_features: top
            .classes
            .iter()
            .zip(&names)
            .map(|(ranked, name)| ClassTopJson {
                class: name.clone(),
                top: ranked.iter().map(|r| RankedJson { index: r.index, score: r.score }).collect(),
            })
            .collect(),
        overlap: top.overlap.clone(),
        sign_agreement: agreement
            .iter()
            .map(|s| SignAgreementJson {
                class_a: names[s.class_a].clone(),
                class_b: names[s.class_b].clone(),
                feature: s.feature,
                agreement: s.agreement,
            })
            .collect(),
    };
    write_json(&mut dir, "explain.json", &json)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "feature", "sample", "value", "attribution"])?;
    for (c, name) in names.iter().enumerate() {
        for f in top.indices(c) {
            for s in 0..n_explained {
                w.write_record([
                    name.clone(),
                    f.to_string(),
                    s.to_string(),
                    explained[s * dim + f].to_string(),
                    per_class[c].get(s, f).to_string(),
                ])?;
            }
        }
    }
    let beeswarm = String::from_utf8(w.into_inner().map_err(|e| AppError::Malformed(e.to_string()))?).expect("UTF-8");
    dir.write_text("beeswarm.csv", &beeswarm)?;
    if a.common.format == Format::Md {
        dir.write_text("explain.md", &explain_markdown(&json))?;
    }
    dir.finish()
}

pub fn explain_markdown(e: &ExplainJson) -> String {
    let mut s = format!("Top-{} features by mean |attribution|\n\n| Class | Features |\n|---|---|\n", e.top_k);
    for c in &e.top_features {
        let idx: Vec<String> = c.top.iter().map(|r| r.index.to_string()).collect();
        s.push_str(&format!("| {} | {} |\n", c.class, idx.join(", ")));
    }
    s.push_str("\nTop-k overlap (%)\n\n| |");
    for c in &e.classes {
        s.push_str(&format!(" {c} |"));
    }
    s.push_str(&format!("\n|---|{}\n", "---|".repeat(e.classes.len())));
    for (name, row) in e.classes.iter().zip(&e.overlap) {
        s.push_str(&format!("| {name} |"));
        for v in row {
            s.push_str(&format!(" {} |", report::one_decimal(*v)));
        }
        s.push('\n');
    }
    s
}

// ------------------------------------------------------------------ synth

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleSummary {
    /// Bayes real-vs-fake accuracy over every generated subset record.
    pub detection_accuracy: f64,
    /// Bayes nine-way accuracy over the attribution classes of the subsets.
    pub attribution_accuracy: f64,
    pub records: usize,
}

fn synth(a: &SynthArgs) -> Result<PathBuf> {
    let (text, source) = match (&a.config, &a.preset) {
        (Some(p), _) => (fs::read_to_string(p).map_err(|e| AppError::io(p, e))?, p.display().to_string()),
        (None, Some(name)) => (
            world_config::preset(name)
                .ok_or_else(|| AppError::Usage(format!("unknown preset {name:?} (expected demo or quick)")))?
                .to_string(),
            format!("preset:{name}"),
        ),
        (None, None) => return Err(AppError::Usage("synth needs --config or --preset".into())),
    };
    let mut dir = a.common.run_dir("synth")?;
    if let Some(p) = &a.config {
        dir.manifest.input(p)?;
    }
    dir.manifest.param("world", source);
    let layout = world_config::parse_layout(&text)?;
    let spec = layout.build()?;
    dir.write_text("world.conf", &world_config::render_layout(&layout))?;
    let mut partitions = vec![(Partition::Subsets, "subsets")];
    if spec.test_samples_per_class > 0 {
        partitions.push((Partition::Test, "test"));
    }
    let (mut det_correct, mut attr_correct, mut total) = (0usize, 0usize, 0usize);
    for (partition, folder) in partitions {
        let sets = generate(&spec, partition)?;
        for (g, set) in &sets {
            let bytes = fpro::write_feature_file(set, dir.artifact(&format!("{folder}/{}.fpro", g.slug()))?)?;
            a.common.progress("synth", &format!("{folder}/{}.fpro: {} records, {bytes} bytes", g.slug(), set.len()));
        }
        if partition == Partition::Subsets {
            let real = sets[0].0;
            for (g, set) in &sets {
                for r in set.records() {
                    let truth = protoscope_core::feature_store::attribution_label(r.generator);
                    let guess = bayes_oracle(&spec, &r.features)?;
                    let guess_label = protoscope_core::feature_store::attribution_label(spec.classes[guess].source);
                    det_correct += usize::from((guess_label == 0) == (truth == 0));
                    if r.generator.is_some() || *g == real {
                        attr_correct += usize::from(guess_label == truth);
                    }
                    total += 1;
                }
            }
        }
    }
    let attr_total = total - (spec.generators().len() - 1) * spec.samples_per_class;
    write_json(
        &mut dir,
        "oracle.json",
        &OracleSummary {
            detection_accuracy: det_correct as f64 / total.max(1) as f64,
            attribution_accuracy: attr_correct as f64 / attr_total.max(1) as f64,
            records: total,
        },
    )?;
    dir.finish()
}

// ----------------------------------------------------------------- report

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Section {
    Matrix { source: String, data: report::MatrixJson },
    Grid { source: String, data: report::GridJson },
    Confusion { source: String, data: report::ConfusionJson },
    Explain { source: String, data: ExplainJson },
}

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        let meta = fs::metadata(p).map_err(|e| AppError::io(p, e))?;
        if meta.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| AppError::io(p, e))?
                .map(|e| e.map(|e| e.path()).map_err(|err| AppError::io(p, err)))
                .collect::<Result<_>>()?;
            entries.sort();
            files.extend(entries.into_iter().filter(|f| {
                f.extension().is_some_and(|e| e == "csv") || f.file_name().is_some_and(|n| n == "explain.json")
            }));
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn report_cmd(a: &ReportArgs) -> Result<PathBuf> {
    if a.common.format == Format::Csv {
        return Err(AppError::Usage("report renders md or json".into()));
    }
    let mut dir = a.common.run_dir("report")?;
    let files = collect_inputs(&a.inputs)?;
    let mut md = String::from("# protoscope report\n");
    let mut sections = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(|e| AppError::io(f, e))?;
        let source = f.display().to_string();
        let section = if f.extension().is_some_and(|e| e == "json") {
            let data: ExplainJson = serde_json::from_str(&text)
                .map_err(|e| AppError::Schema(format!("{source}: not an explain report ({e})")))?;
            md.push_str(&format!("\n## {source}\n\n{}", explain_markdown(&data)));
            Section::Explain { source, data }
        } else {
            match report::sniff_csv(&text) {
                Some(report::CsvKind::Matrix) => {
                    let m = report::parse_matrix_csv(&text)?;
                    md.push_str(&format!("\n## {source}\n\n{}", report::matrix_markdown(&m)));
                    Section::Matrix { source, data: report::MatrixJson::from(&m) }
                }
                Some(report::CsvKind::Grid) => {
                    let g = report::parse_grid_csv(&text)?;
                    md.push_str(&format!("\n## {source}\n\n{}", report::grid_markdown(&g)));
                    let rendered: report::GridJson = serde_json::from_str(&report::render_grid(&g, Format::Json)?)?;
                    Section::Grid { source, data: rendered }
                }
                Some(report::CsvKind::Confusion) => {
                    let c = report::parse_confusion_csv(&text)?;
                    md.push_str(&format!("\n## {source}\n\n{}", report::confusion_markdown(&c)));
                    let rendered: report::ConfusionJson =
                        serde_json::from_str(&report::render_confusion(&c, Format::Json)?)?;
                    Section::Confusion { source, data: rendered }
                }
                None => {
                    if a.inputs.contains(f) {
                        return Err(AppError::Schema(format!("{source}: unrecognised CSV header")));
                    }
                    continue;
                }
            }
        };
        dir.manifest.input(f)?;
        sections.push(section);
    }
    if sections.is_empty() {
        return Err(AppError::Usage("no reportable artifacts among the inputs".into()));
    }
    match a.common.format {
        Format::Json => write_json(&mut dir, "report.json", &sections)?,
        _ => {
            dir.write_text("report.md", &md)?;
        }
    }
    a.common.progress("report", &format!("{} sections", sections.len()));
    dir.finish()
}
