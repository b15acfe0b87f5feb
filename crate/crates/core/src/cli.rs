//! The `modalign` command line: `generate`, `train`, `eval`, `convert`
//! and `project`.
//!
//! Every command reads an optional TOML experiment file, applies flag
//! overrides, and stamps a hash of the effective configuration into its
//! outputs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{build_split, generate_synthetic, ingest, Dataset, EmbeddingRecord, Split, SplitMode, SplitSpec, SyntheticConfig};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::{convert, embed, load_checkpoint, save_checkpoint, EncoderInit, Modality, ModelConfig, ModelParams};
use crate::retrieval::{build_index, evaluate, project_2d, query_embeddings, write_projection_csv, PointLabel, Relevance, RetrievalReport, Variant, K};
use crate::trainer::{train, TrainConfig, TrainMode};

/// Where records come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// A `#MAEB v1` file; when unset the `[synthetic]` section is used.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Explicit unseen classes; otherwise `unseen_count` are drawn with `seed`.
    pub unseen: Option<Vec<u32>>,
    pub unseen_count: usize,
    pub gzs_seen_fraction: f64,
    pub seed: u64,
    /// Split modes evaluated by `train` and `eval`.
    pub modes: Vec<SplitMode>,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            unseen: None,
            unseen_count: 5,
            gzs_seen_fraction: 0.0,
            seed: 0,
            modes: vec![SplitMode::Zs],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Embedding dimension; defaults to the input dimension.
    pub dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub depth: usize,
    pub table_init_scale: f64,
    /// Learn τ starting from `train.weights.tau`.
    pub learn_temperature: bool,
    pub encoder_init: EncoderInit,
    pub adapter: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            dim: None,
            hidden_dim: None,
            depth: 2,
            table_init_scale: 0.02,
            learn_temperature: false,
            encoder_init: EncoderInit::default(),
            adapter: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub variants: Vec<String>,
    pub ks: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
            ks: ["1", "10", "200", "all"].map(String::from).to_vec(),
        }
    }
}

/// The full experiment description read from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    pub data: DataSection,
    pub synthetic: SyntheticConfig,
    pub split: SplitSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs"),
            data: DataSection::default(),
            synthetic: SyntheticConfig::default(),
            split: SplitSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form,
    /// ignoring the output directory.
    pub fn hash(&self) -> Result<String> {
        let canonical = ExperimentConfig {
            out: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        Ok(digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }

    pub fn dataset(&self) -> Result<Dataset> {
        match &self.data.path {
            Some(p) => ingest(p),
            None => generate_synthetic(&self.synthetic),
        }
    }

    pub fn split_spec(&self, dataset: &Dataset) -> Result<SplitSpec> {
        let s = &self.split;
        match &s.unseen {
            Some(unseen) => {
                let unseen: std::collections::BTreeSet<u32> = unseen.iter().copied().collect();
                let seen = dataset.classes().into_iter().filter(|c| !unseen.contains(c)).collect();
                SplitSpec::new(seen, unseen, s.gzs_seen_fraction, s.seed)
            }
            None => SplitSpec::seeded(&dataset.classes(), s.unseen_count, s.gzs_seen_fraction, s.seed),
        }
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        let m = &self.model;
        let dim = m.dim.unwrap_or(input_dim);
        ModelConfig {
            hidden_dim: m.hidden_dim.unwrap_or(dim),
            depth: m.depth,
            table_init_scale: m.table_init_scale,
            temperature: self.train.weights.tau,
            learn_temperature: m.learn_temperature,
            encoder_init: m.encoder_init,
            adapter: m.adapter,
            ..ModelConfig::new(input_dim, dim)
        }
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        self.eval.variants.iter().map(|v| v.parse()).collect()
    }

    pub fn ks(&self) -> Result<Vec<K>> {
        self.eval.ks.iter().map(|k| k.parse()).collect()
    }
}

/// Named λ and batch-size bundles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Sketchy,
    TuBerlin,
    Quickdraw,
    Fg,
}

impl Preset {
    pub fn apply(self, train: &mut TrainConfig) {
        let (weights, batch) = match self {
            Preset::Sketchy => (LossWeights::sketchy(), 256),
            Preset::TuBerlin => (LossWeights::tu_berlin(), 256),
            Preset::Quickdraw => (LossWeights::quickdraw(), 64),
            Preset::Fg => (LossWeights::fg(), 64),
        };
        train.weights = weights;
        train.batch_size = batch;
        if self == Preset::Fg {
            train.mode = TrainMode::Fg;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightsArg {
    /// Contrastive loss only.
    ClipOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Category,
    Fg,
}

#[derive(Debug, Parser)]
#[command(name = "modalign", version, about = "Modality-aware sketch/photo alignment through text")]
pub struct Cli {
    /// TOML experiment file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// `#MAEB v1` record file; overrides `[data] path`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per seed and evaluate it.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, value_enum)]
        weights: Option<WeightsArg>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Keep the text encoder fixed.
        #[arg(long)]
        freeze_text: bool,
        /// Use the backbone fine-tuning learning rates.
        #[arg(long)]
        paper_rates: bool,
    },
    /// Evaluate a checkpoint on the configured splits.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        splits: Option<Vec<SplitMode>>,
    },
    /// Move every record of one modality to another.
    Convert {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        src: Modality,
        #[arg(long)]
        trg: Modality,
        /// Treat features as embeddings and skip the encoder.
        #[arg(long)]
        pre_embedded: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project photos, sketches and converted sketches of some classes to 2-D.
    Project {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

impl clap::builder::ValueParserFactory for Modality {
    type Parser = clap::builder::ValueParser;
    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<Modality>().map_err(|e| e.to_string()))
    }
}

impl clap::builder::ValueParserFactory for SplitMode {
    type Parser = clap::builder::ValueParser;
    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<SplitMode>().map_err(|e| e.to_string()))
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn meta(entries: &[(&str, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn relevance(mode: SplitMode) -> Relevance {
    match mode {
        SplitMode::Fg => Relevance::Pair,
        SplitMode::Zs | SplitMode::Gzs => Relevance::Class,
    }
}

/// Mean and sample standard deviation; the deviation is `None` for fewer
/// than two values.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn stamp(report: &mut RetrievalReport, seed: u64, hash: &str) {
    report.provenance.insert("seed".into(), seed.to_string());
    report.provenance.insert("config_hash".into(), hash.to_string());
}

/// Evaluates `model` for every configured split mode and variant and
/// writes `<split>-<variant>.txt` reports under `dir`.
fn evaluate_all(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    model: &ModelParams,
    modes: &[SplitMode],
    seed: u64,
    dir: &Path,
) -> Result<Vec<RetrievalReport>> {
    let hash = cfg.hash()?;
    let spec = cfg.split_spec(dataset)?;
    let ks = cfg.ks()?;
    let mut reports = Vec::new();
    for &mode in modes {
        let split = build_split(dataset, &spec, mode)?;
        for variant in cfg.variants()? {
            let mut r = evaluate(model, &split.queries, &split.gallery, variant, relevance(mode), &ks, &mode.to_string())?;
            stamp(&mut r, seed, &hash);
            write(&dir.join(format!("{mode}-{variant}.txt")), r.to_text())?;
            reports.push(r);
        }
    }
    Ok(reports)
}

pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let dataset = generate_synthetic(&cfg.synthetic)?;
    write(out, dataset.to_text_with_comments(&[format!("config_hash = {}", cfg.hash()?)]))?;
    let mut summary = String::from("class\tmodality\tcount\n");
    for ((class, m), n) in dataset.counts() {
        let _ = writeln!(summary, "{class}\t{m}\t{n}");
    }
    Ok(summary)
}

/// Summary rows keyed by (split, variant, metric).
type Summary = BTreeMap<(String, String, String), Vec<f64>>;

fn collect(summary: &mut Summary, reports: &[RetrievalReport]) {
    for r in reports {
        for row in &r.rows {
            let mut push = |name: String, v: f64| {
                summary.entry((r.split.clone(), r.variant.to_string(), name)).or_default().push(v);
            };
            push(format!("map@{}", row.k), row.map);
            push(format!("prec@{}", row.k), row.prec);
            if let Some(a) = row.acc {
                push(format!("acc@{}", row.k), a);
            }
        }
    }
}

fn summary_table(summary: &Summary, seeds: &[u64], hash: &str) -> String {
    let mut out = format!("# config_hash = {hash}\nsplit\tvariant\tmetric\tmean\tstd");
    for s in seeds {
        let _ = write!(out, "\tseed{s}");
    }
    out.push('\n');
    for ((split, variant, metric), values) in summary {
        let (mean, std) = mean_std(values);
        let std = std.map(|s| format!("{s:.6}")).unwrap_or_else(|| "-".into());
        let _ = write!(out, "{split}\t{variant}\t{metric}\t{mean:.6}\t{std}");
        for v in values {
            let _ = write!(out, "\t{v:.6}");
        }
        out.push('\n');
    }
    out
}

/// Trains one model per seed under `cfg.out/seed-<s>/` and writes a
/// mean-over-seeds `summary.tsv`.
pub fn cmd_train(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<String> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    cfg.train.validate()?;
    let dataset = cfg.dataset()?;
    let spec = cfg.split_spec(&dataset)?;
    let train_mode = match cfg.train.mode {
        TrainMode::Category => SplitMode::Zs,
        TrainMode::Fg => SplitMode::Fg,
    };
    let Split { train: train_set, .. } = build_split(&dataset, &spec, train_mode)?;
    let mut summary = Summary::new();
    for &seed in seeds {
        let mut run = cfg.clone();
        run.train.seed = seed;
        let hash = run.hash()?;
        let dir = cfg.out.join(format!("seed-{seed}"));
        let init = ModelParams::init(&run.model_config(dataset.dim()), seed)?;
        let (model, log) = train(&train_set, init, &run.train)?;
        let ckpt = dir.join("checkpoint.bin");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_checkpoint(&model, &ckpt)?;
        write(&meta_path(&ckpt), meta(&[("seed", seed.to_string()), ("config_hash", hash.clone())]))?;
        write(&dir.join("config.toml"), run.to_toml()?)?;
        write(&dir.join("steps.tsv"), log.steps_tsv())?;
        write(&dir.join("evals.tsv"), log.evals_tsv())?;
        let reports = evaluate_all(&run, &dataset, &model, &run.split.modes, seed, &dir)?;
        collect(&mut summary, &reports);
    }
    let table = summary_table(&summary, seeds, &cfg.hash()?);
    write(&cfg.out.join("summary.tsv"), &table)?;
    Ok(table)
}

pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, modes: &[SplitMode], seed: u64) -> Result<String> {
    let model = load_checkpoint(checkpoint)?;
    let dataset = cfg.dataset()?;
    let reports = evaluate_all(cfg, &dataset, &model, modes, seed, &cfg.out)?;
    Ok(reports.iter().map(RetrievalReport::to_table).collect::<Vec<_>>().join(""))
}

pub fn cmd_convert(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    src: Modality,
    trg: Modality,
    pre_embedded: bool,
    out: &Path,
) -> Result<usize> {
    let model = load_checkpoint(checkpoint)?;
    let dataset = cfg.dataset()?;
    let selected: Vec<&EmbeddingRecord> = dataset.of_modality(src).collect();
    let dim = model.dim();
    let mut records = Vec::with_capacity(selected.len());
    if !selected.is_empty() {
        let x = Dataset::features(&selected, dataset.dim())?;
        let z = if pre_embedded {
            if dataset.dim() != dim {
                return Err(Error::ShapeMismatch {
                    expected: vec![dim],
                    got: vec![dataset.dim()],
                });
            }
            x
        } else {
            embed(&model, &x, src)?
        };
        let converted = convert(&z, src, trg, &model.table)?;
        for (i, r) in selected.iter().enumerate() {
            records.push(EmbeddingRecord {
                id: r.id.clone(),
                class_id: r.class_id,
                modality: trg,
                features: converted.row(i).to_vec(),
                pair_id: r.pair_id.clone().filter(|_| trg.is_image()),
            });
        }
    }
    let n = records.len();
    let converted = Dataset::new(dim, records)?;
    write(out, converted.to_text_with_comments(&[format!("config_hash = {}", cfg.hash()?)]))?;
    Ok(n)
}

/// Samples up to `per_class` photos and sketches per requested class and
/// projects photos, sketches and converted sketches together.
pub fn cmd_project(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    classes: &[u32],
    per_class: usize,
    seed: u64,
    out: &Path,
) -> Result<usize> {
    let model = load_checkpoint(checkpoint)?;
    let dataset = cfg.dataset()?;
    let present = dataset.classes();
    if let Some(c) = classes.iter().find(|c| !present.contains(c)) {
        return Err(Error::InvalidConfig(format!("class {c} is not in the dataset")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    for &class in classes {
        for m in [Modality::Photo, Modality::Sketch] {
            let members: Vec<&EmbeddingRecord> = dataset.of_modality(m).filter(|r| r.class_id == class).collect();
            let sample: Vec<&EmbeddingRecord> = members.choose_multiple(&mut rng, per_class).copied().collect();
            if sample.is_empty() {
                continue;
            }
            if m == Modality::Photo {
                let photos = Dataset::new(dataset.dim(), sample.iter().map(|r| (*r).clone()).collect())?;
                rows.extend_from_slice(build_index(&photos, &model, Variant::Original)?.embeddings.data());
                labels.extend(sample.iter().map(|r| PointLabel {
                    class: r.class_id,
                    modality: m,
                    converted: false,
                }));
                continue;
            }
            for (variant, converted) in [(Variant::Original, false), (Variant::Converted, true)] {
                let e = query_embeddings(&sample, dataset.dim(), &model, variant)?;
                rows.extend_from_slice(e.data());
                labels.extend(sample.iter().map(|r| PointLabel {
                    class: r.class_id,
                    modality: m,
                    converted,
                }));
            }
        }
    }
    let embeddings = crate::numerics::Tensor::matrix(labels.len(), model.dim(), rows)?;
    let points = project_2d(&embeddings, &labels)?;
    write(out, write_projection_csv(&points))?;
    write(&meta_path(out), meta(&[("seed", seed.to_string()), ("config_hash", cfg.hash()?)]))?;
    Ok(points.len())
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig> {
    match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_data(cfg: &mut ExperimentConfig, data: &DataArgs) {
    if let Some(p) = &data.data {
        cfg.data.path = Some(p.clone());
    }
}

/// Runs a parsed command line and returns what should be printed.
pub fn execute(cli: Cli) -> Result<String> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Generate { seed, out } => {
            if let Some(s) = seed {
                cfg.synthetic.seed = s;
            }
            cmd_generate(&cfg, &out)
        }
        Command::Train {
            data,
            seeds,
            seed,
            out,
            preset,
            weights,
            mode,
            freeze_text,
            paper_rates,
        } => {
            apply_data(&mut cfg, &data);
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Some(p) = preset {
                p.apply(&mut cfg.train);
            }
            if let Some(WeightsArg::ClipOnly) = weights {
                cfg.train.weights = LossWeights::clip_only();
            }
            if let Some(m) = mode {
                cfg.train.mode = match m {
                    ModeArg::Category => TrainMode::Category,
                    ModeArg::Fg => TrainMode::Fg,
                };
            }
            if paper_rates {
                cfg.train = cfg.train.clone().with_paper_rates();
            }
            cfg.train.freeze_text |= freeze_text;
            let seeds = seeds.or(seed.map(|s| vec![s])).unwrap_or_else(|| vec![cfg.train.seed]);
            cmd_train(&cfg, &seeds)
        }
        Command::Eval {
            data,
            checkpoint,
            seed,
            out,
            variants,
            ks,
            splits,
        } => {
            apply_data(&mut cfg, &data);
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Some(v) = variants {
                cfg.eval.variants = v;
            }
            if let Some(k) = ks {
                cfg.eval.ks = k;
            }
            if let Some(s) = splits {
                cfg.split.modes = s;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let modes = cfg.split.modes.clone();
            cmd_eval(&cfg, &checkpoint, &modes, cfg.train.seed)
        }
        Command::Convert {
            data,
            checkpoint,
            src,
            trg,
            pre_embedded,
            out,
        } => {
            apply_data(&mut cfg, &data);
            let n = cmd_convert(&cfg, &checkpoint, src, trg, pre_embedded, &out)?;
            Ok(format!("converted {n} records from {src} to {trg}\n"))
        }
        Command::Project {
            data,
            checkpoint,
            classes,
            seed,
            per_class,
            out,
        } => {
            apply_data(&mut cfg, &data);
            let seed = seed.unwrap_or(cfg.train.seed);
            let n = cmd_project(&cfg, &checkpoint, &classes, per_class, seed, &out)?;
            Ok(format!("wrote {n} points\n"))
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
