//! Subcommand implementations. Every run writes into a run directory under
//! the run root: the resolved config, outputs, and logs.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;

use ecgfuse::attr;
use ecgfuse::eval::{self, FinetuneConfig, FinetunedModel, LabelEntry};
use ecgfuse::loss::LossWeights;
use ecgfuse::nets::{load_checkpoint, save_checkpoint, ClassifierConfig};
use ecgfuse::pretrain::{self, TrainConfig};
use ecgfuse::signal::{self, ClassEffect, CorpusSpec, EcgRecord, Wave};

use crate::config::{resolve, resolve_opt, ConfigError, ConfigFile, Resolved};
use crate::run_root;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit 2, message carries the key path.
    Config(String),
    /// Missing input file: exit 3.
    MissingFile(String),
    /// Any module failure: exit 1.
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::MissingFile(m) => write!(f, "missing file: {m}"),
            CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingFile(_) => 3,
            CliError::Run(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(io) => CliError::MissingFile(io.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

macro_rules! run_error_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Run(e.to_string())
            }
        }
    )*};
}
run_error_from!(
    ecgfuse::signal::SignalError,
    ecgfuse::nets::NetsError,
    ecgfuse::pretrain::TrainError,
    ecgfuse::eval::EvalError,
    ecgfuse::attr::AttrError,
    std::io::Error
);

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile, CliError> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            if !p.exists() {
                return Err(CliError::MissingFile(p.display().to_string()));
            }
            Ok(ConfigFile::load(p)?)
        }
    }
}

fn make_run_dir(out: &Path) -> Result<PathBuf, CliError> {
    let dir = run_root().join(out);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_resolved(dir: &Path, resolved: &Resolved) -> Result<(), CliError> {
    std::fs::write(dir.join("config.resolved"), resolved.to_text())?;
    Ok(())
}

/// Named lead presets or a comma list.
fn parse_lead_subset(spec: &str) -> Result<Vec<String>, CliError> {
    let leads: Vec<String> = match spec {
        "limb6" => signal::LEADS_LIMB6.iter().map(|s| s.to_string()).collect(),
        "bipolar3" => signal::LEADS_BIPOLAR3.iter().map(|s| s.to_string()).collect(),
        "augmented3" => signal::LEADS_AUGMENTED3.iter().map(|s| s.to_string()).collect(),
        "all12" => signal::LEADS_12.iter().map(|s| s.to_string()).collect(),
        list => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    };
    if leads.is_empty() {
        return Err(CliError::Config(format!("empty lead subset {spec:?}")));
    }
    Ok(leads)
}

/// All .ecgr (and .csv at the given rate) records in a directory, sorted by
/// file name.
fn load_corpus(dir: &Path, csv_rate: f64) -> Result<Vec<EcgRecord>, CliError> {
    if !dir.exists() {
        return Err(CliError::MissingFile(dir.display().to_string()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|s| s.to_str()),
                Some("ecgr") | Some("csv")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Run(format!(
            "no .ecgr or .csv records under {}",
            dir.display()
        )));
    }
    paths
        .into_iter()
        .map(|p| {
            let rec = if p.extension().and_then(|s| s.to_str()) == Some("csv") {
                signal::read_csv(&p, csv_rate)?
            } else {
                signal::read_record(&p)?
            };
            Ok(rec)
        })
        .collect()
}

/// Attach labels/groups from a labels file by record_id.
fn apply_labels(corpus: &mut [EcgRecord], entries: &[LabelEntry]) -> Result<(), CliError> {
    let by_id: std::collections::BTreeMap<&str, &LabelEntry> = entries
        .iter()
        .map(|e| (e.record_id.as_str(), e))
        .collect();
    for rec in corpus.iter_mut() {
        if let Some(entry) = by_id.get(rec.record_id.as_str()) {
            rec.label = Some(entry.label as i32);
            rec.group_tag = entry.group_tag.clone();
        }
    }
    Ok(())
}

fn preprocess_if(records: Vec<EcgRecord>, enabled: bool) -> Result<Vec<EcgRecord>, CliError> {
    if !enabled {
        return Ok(records);
    }
    Ok(signal::preprocess_records(&records)?)
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
pub struct SynthArgs {
    /// Config file (section [synth]); flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory (under ECGFUSE_RUN_ROOT) for records + labels.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of records [default: 200]
    #[arg(long)]
    pub n: Option<usize>,
    /// Samples per lead, multiple of 8 [default: 5000]
    #[arg(long)]
    pub length: Option<usize>,
    /// Sample rate in Hz [default: 500]
    #[arg(long)]
    pub rate: Option<f64>,
    /// Number of standard leads (1-12) [default: 12]
    #[arg(long)]
    pub leads: Option<usize>,
    /// Additive noise standard deviation [default: 0.05]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Class-1 wave-amplitude scaling [default: 0.8]
    #[arg(long)]
    pub class_effect: Option<f64>,
    /// Lead carrying the class effect [default: II]
    #[arg(long)]
    pub class_lead: Option<String>,
    /// Wave carrying the class effect (P/Q/R/S/T) [default: S]
    #[arg(long)]
    pub class_wave: Option<String>,
    /// Fraction of class-1 records [default: 0.5]
    #[arg(long)]
    pub balance: Option<f64>,
    /// Heart-rate range low end, bpm [default: 55]
    #[arg(long)]
    pub hr_low: Option<f64>,
    /// Heart-rate range high end, bpm [default: 85]
    #[arg(long)]
    pub hr_high: Option<f64>,
    /// Two comma-separated group tags, or "none" [default: A,B]
    #[arg(long)]
    pub groups: Option<String>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_wave(s: &str) -> Result<Wave, CliError> {
    match s {
        "P" => Ok(Wave::P),
        "Q" => Ok(Wave::Q),
        "R" => Ok(Wave::R),
        "S" => Ok(Wave::S),
        "T" => Ok(Wave::T),
        other => Err(CliError::Config(format!("synth.class_wave: {other:?}"))),
    }
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let file = load_config(&args.config)?;
    let n = resolve(&file, "synth", "n", args.n, 200)?;
    let length = resolve(&file, "synth", "length", args.length, 5000)?;
    let rate = resolve(&file, "synth", "rate", args.rate, 500.0)?;
    let leads = resolve(&file, "synth", "leads", args.leads, 12)?;
    let noise = resolve(&file, "synth", "noise", args.noise, 0.05)?;
    let class_effect = resolve(
        &file,
        "synth",
        "class_effect",
        args.class_effect,
        signal::DEFAULT_CLASS_EFFECT,
    )?;
    let class_lead = resolve(&file, "synth", "class_lead", args.class_lead, "II".into())?;
    let class_wave = resolve(&file, "synth", "class_wave", args.class_wave, "S".into())?;
    let balance = resolve(&file, "synth", "balance", args.balance, 0.5)?;
    let hr_low = resolve(&file, "synth", "hr_low", args.hr_low, 55.0)?;
    let hr_high = resolve(&file, "synth", "hr_high", args.hr_high, 85.0)?;
    let groups = resolve(&file, "synth", "groups", args.groups, "A,B".into())?;
    let seed = resolve(&file, "synth", "seed", args.seed, 0)?;

    if leads == 0 || leads > 12 {
        return Err(CliError::Config(format!("synth.leads: {leads} outside 1-12")));
    }
    let wave = parse_wave(&class_wave)?;
    let group_tags = match groups.as_str() {
        "none" => None,
        list => {
            let parts: Vec<&str> = list.split(',').map(|s| s.trim()).collect();
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                return Err(CliError::Config(format!(
                    "synth.groups: want two comma-separated tags, got {list:?}"
                )));
            }
            Some((parts[0].to_string(), parts[1].to_string()))
        }
    };

    let dir = make_run_dir(&args.out)?;
    let mut resolved = Resolved::new("synth");
    resolved.record("n", n);
    resolved.record("length", length);
    resolved.record("rate", rate);
    resolved.record("leads", leads);
    resolved.record("noise", noise);
    resolved.record("class_effect", class_effect);
    resolved.record("class_lead", &class_lead);
    resolved.record("class_wave", &class_wave);
    resolved.record("balance", balance);
    resolved.record("hr_low", hr_low);
    resolved.record("hr_high", hr_high);
    resolved.record("groups", &groups);
    resolved.record("seed", seed);
    write_resolved(&dir, &resolved)?;

    let spec = CorpusSpec {
        n,
        length,
        sample_rate_hz: rate,
        lead_scales: signal::default_lead_scales(leads),
        noise_std: noise,
        class_effect: Some(ClassEffect {
            lead: class_lead,
            wave,
            scale: class_effect,
        }),
        class_balance: balance,
        heart_rate_range: (hr_low, hr_high),
        group_tags,
        seed,
    };
    let corpus = signal::synthesize_corpus(&spec)?;
    let records_dir = dir.join("records");
    std::fs::create_dir_all(&records_dir)?;
    let mut labels = Vec::with_capacity(n);
    let mut segments_path = dir.join("segments.tsv");
    let mut all_segments: Vec<(String, signal::WaveSegments)> = Vec::with_capacity(n);
    for (record, segments) in &corpus {
        signal::write_record(record, &records_dir.join(format!("{}.ecgr", record.record_id)))?;
        labels.push(LabelEntry {
            record_id: record.record_id.clone(),
            label: record.label.unwrap_or(0) as u8,
            group_tag: record.group_tag.clone(),
        });
        all_segments.push((record.record_id.clone(), segments.clone()));
    }
    eval::write_labels_file(&labels, &dir.join("labels.tsv"))?;
    // Single segments file covering the corpus.
    {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(&segments_path)?);
        writeln!(w, "record_id\tlead\tbeat\twave\tstart\tend")?;
        for (record_id, segments) in &all_segments {
            for (lead, beats) in &segments.per_lead {
                for (b, beat) in beats.iter().enumerate() {
                    for win in beat {
                        writeln!(
                            w,
                            "{record_id}\t{lead}\t{b}\t{}\t{}\t{}",
                            win.wave, win.start, win.end
                        )?;
                    }
                }
            }
        }
        segments_path = dir.join("segments.tsv");
    }
    let _ = segments_path;
    println!(
        "wrote {} records, labels.tsv, segments.tsv under {}",
        corpus.len(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// pretrain

#[derive(Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of .ecgr/.csv records.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size [default: 128]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate [default: 1e-4]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Weight decay [default: 1e-4]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Latent dimension [default: 256]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Alignment strength gamma [default: 0.1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Comma-separated per-lead reconstruction weights
    /// [default: 5,10,1,5,1,1,1,10,5,1,1,5 for the standard 12 leads]
    #[arg(long)]
    pub lambda: Option<String>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validation holdout fraction; 0 trains on everything [default: 0]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Samples per deterministic parallel chunk [default: 8]
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Preprocess records on load [default: true]
    #[arg(long)]
    pub preprocess: Option<bool>,
}

pub fn pretrain(args: PretrainArgs) -> Result<(), CliError> {
    let file = load_config(&args.config)?;
    let data = resolve_opt::<PathBuf>(&file, "pretrain", "data", args.data)?
        .ok_or_else(|| CliError::Config("pretrain.data is required".into()))?;
    let epochs = resolve(&file, "pretrain", "epochs", args.epochs, 100)?;
    let batch_size = resolve(&file, "pretrain", "batch_size", args.batch_size, 128)?;
    let lr = resolve(&file, "pretrain", "lr", args.lr, 1e-4)?;
    let weight_decay = resolve(&file, "pretrain", "weight_decay", args.weight_decay, 1e-4)?;
    let latent_dim = resolve(&file, "pretrain", "latent_dim", args.latent_dim, 256)?;
    let gamma = resolve(&file, "pretrain", "gamma", args.gamma, 0.1)?;
    let lambda = resolve_opt::<String>(&file, "pretrain", "lambda", args.lambda)?;
    let seed = resolve(&file, "pretrain", "seed", args.seed, 0)?;
    let val_fraction = resolve(&file, "pretrain", "val_fraction", args.val_fraction, 0.0)?;
    let chunk_size = resolve(&file, "pretrain", "chunk_size", args.chunk_size, 8)?;
    let preprocess = resolve(&file, "pretrain", "preprocess", args.preprocess, true)?;

    let corpus = preprocess_if(load_corpus(&data, 500.0)?, preprocess)?;
    let lead_names = corpus
        .first()
        .map(|r| r.lead_names.clone())
        .unwrap_or_default();
    let loss_weights = match &lambda {
        None => LossWeights::default_for(&lead_names),
        Some(spec) => {
            let values: Result<Vec<f64>, _> =
                spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let values = values
                .map_err(|_| CliError::Config(format!("pretrain.lambda: bad list {spec:?}")))?;
            LossWeights::new(values, gamma)
                .map_err(|e| CliError::Config(format!("pretrain.lambda: {e}")))?
        }
    };
    let loss_weights = LossWeights::new(loss_weights.lambda, gamma)
        .map_err(|e| CliError::Config(format!("pretrain.gamma: {e}")))?;

    let dir = make_run_dir(&args.out)?;
    let mut resolved = Resolved::new("pretrain");
    resolved.record("data", data.display());
    resolved.record("epochs", epochs);
    resolved.record("batch_size", batch_size);
    resolved.record("lr", lr);
    resolved.record("weight_decay", weight_decay);
    resolved.record("latent_dim", latent_dim);
    resolved.record("gamma", gamma);
    resolved.record(
        "lambda",
        loss_weights
            .lambda
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    resolved.record("seed", seed);
    resolved.record("val_fraction", val_fraction);
    resolved.record("chunk_size", chunk_size);
    resolved.record("preprocess", preprocess);
    write_resolved(&dir, &resolved)?;

    let cfg = TrainConfig {
        epochs,
        batch_size,
        learning_rate: lr,
        weight_decay,
        latent_dim,
        loss_weights: Some(loss_weights),
        seed,
        val_fraction,
        grad_clip: 100.0,
        chunk_size,
    };
    let output = pretrain::pretrain(&corpus, &cfg)?;
    save_checkpoint(&output.params, &dir.join("checkpoint.eckp"))?;
    pretrain::write_train_log(&output.log, &dir.join("train_log.tsv"))?;
    let last = output.log.last().expect("at least one epoch");
    println!(
        "pretrained {} epochs; final total {:.6}; checkpoint at {}",
        epochs,
        last.total,
        dir.join("checkpoint.eckp").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// finetune

#[derive(Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pre-trained checkpoint (.eckp).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of labeled records.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Labels file (record_id, label, optional group); otherwise embedded
    /// record labels are used.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Lead subset: limb6, bipolar3, augmented3, all12, or a comma list
    /// [default: limb6]
    #[arg(long)]
    pub leads: Option<String>,
    /// Epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate [default: 1e-4]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Weight decay [default: 1e-5]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Classifier hidden size [default: 128]
    #[arg(long)]
    pub fc_size: Option<usize>,
    /// Classifier dropout rate [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Cross-validation folds [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// RNG seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also train the gating network [default: false]
    #[arg(long)]
    pub unfreeze_gate: Option<bool>,
    /// Samples per deterministic parallel chunk [default: 8]
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Preprocess records on load [default: true]
    #[arg(long)]
    pub preprocess: Option<bool>,
}

pub fn finetune(args: FinetuneArgs) -> Result<(), CliError> {
    let file = load_config(&args.config)?;
    let checkpoint = resolve_opt::<PathBuf>(&file, "finetune", "checkpoint", args.checkpoint)?
        .ok_or_else(|| CliError::Config("finetune.checkpoint is required".into()))?;
    let data = resolve_opt::<PathBuf>(&file, "finetune", "data", args.data)?
        .ok_or_else(|| CliError::Config("finetune.data is required".into()))?;
    let labels_path = resolve_opt::<PathBuf>(&file, "finetune", "labels", args.labels)?;
    let leads_spec = resolve(&file, "finetune", "leads", args.leads, "limb6".into())?;
    let epochs = resolve(&file, "finetune", "epochs", args.epochs, 50)?;
    let batch_size = resolve(&file, "finetune", "batch_size", args.batch_size, 32)?;
    let lr = resolve(&file, "finetune", "lr", args.lr, 1e-4)?;
    let weight_decay = resolve(&file, "finetune", "weight_decay", args.weight_decay, 1e-5)?;
    let fc_size = resolve(&file, "finetune", "fc_size", args.fc_size, 128)?;
    let dropout = resolve(&file, "finetune", "dropout", args.dropout, 0.5)?;
    let folds = resolve(&file, "finetune", "folds", args.folds, 5)?;
    let seed = resolve(&file, "finetune", "seed", args.seed, 0)?;
    let unfreeze_gate = resolve(&file, "finetune", "unfreeze_gate", args.unfreeze_gate, false)?;
    let chunk_size = resolve(&file, "finetune", "chunk_size", args.chunk_size, 8)?;
    let preprocess = resolve(&file, "finetune", "preprocess", args.preprocess, true)?;

    if !checkpoint.exists() {
        return Err(CliError::MissingFile(checkpoint.display().to_string()));
    }
    let lead_subset = parse_lead_subset(&leads_spec)?;
    let mut corpus = load_corpus(&data, 500.0)?;
    if let Some(lp) = &labels_path {
        if !lp.exists() {
            return Err(CliError::MissingFile(lp.display().to_string()));
        }
        let entries = eval::read_labels_file(lp)?;
        apply_labels(&mut corpus, &entries)?;
    }
    let corpus = preprocess_if(corpus, preprocess)?;
    let pretrained = load_checkpoint(&checkpoint)?;

    let dir = make_run_dir(&args.out)?;
    let mut resolved = Resolved::new("finetune");
    resolved.record("checkpoint", checkpoint.display());
    resolved.record("data", data.display());
    if let Some(lp) = &labels_path {
        resolved.record("labels", lp.display());
    }
    resolved.record("leads", lead_subset.join(","));
    resolved.record("epochs", epochs);
    resolved.record("batch_size", batch_size);
    resolved.record("lr", lr);
    resolved.record("weight_decay", weight_decay);
    resolved.record("fc_size", fc_size);
    resolved.record("dropout", dropout);
    resolved.record("folds", folds);
    resolved.record("seed", seed);
    resolved.record("unfreeze_gate", unfreeze_gate);
    resolved.record("chunk_size", chunk_size);
    resolved.record("preprocess", preprocess);
    write_resolved(&dir, &resolved)?;

    let cfg = FinetuneConfig {
        lead_subset,
        epochs,
        batch_size,
        learning_rate: lr,
        weight_decay,
        classifier: ClassifierConfig { fc_size, dropout },
        folds,
        seed,
        unfreeze_gate,
        chunk_size,
    };
    let output = eval::finetune(&pretrained, &corpus, &cfg)?;
    for (fold, params) in output.fold_params.iter().enumerate() {
        save_checkpoint(params, &dir.join(format!("fold{fold}.eckp")))?;
    }
    eval::write_report(&output.report, &dir.join("metrics.tsv"))?;
    {
        use std::io::Write;
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(dir.join("predictions.tsv"))?);
        writeln!(w, "record_id\tfold\tscore\tpredicted\tlabel")?;
        for p in &output.predictions {
            writeln!(
                w,
                "{}\t{}\t{:.9}\t{}\t{}",
                corpus[p.record_index].record_id, p.fold, p.score, p.predicted, p.label
            )?;
        }
    }
    print!("{}", output.report.to_text());
    println!("fold checkpoints + metrics.tsv under {}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Fine-tuned checkpoint (e.g. a fold checkpoint).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Labels file; otherwise embedded record labels are used.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Per-group breakdown from record group tags [default: true]
    #[arg(long)]
    pub by_group: Option<bool>,
    /// Preprocess records on load [default: true]
    #[arg(long)]
    pub preprocess: Option<bool>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let file = load_config(&args.config)?;
    let checkpoint = resolve_opt::<PathBuf>(&file, "evaluate", "checkpoint", args.checkpoint)?
        .ok_or_else(|| CliError::Config("evaluate.checkpoint is required".into()))?;
    let data = resolve_opt::<PathBuf>(&file, "evaluate", "data", args.data)?
        .ok_or_else(|| CliError::Config("evaluate.data is required".into()))?;
    let labels_path = resolve_opt::<PathBuf>(&file, "evaluate", "labels", args.labels)?;
    let by_group = resolve(&file, "evaluate", "by_group", args.by_group, true)?;
    let preprocess = resolve(&file, "evaluate", "preprocess", args.preprocess, true)?;

    if !checkpoint.exists() {
        return Err(CliError::MissingFile(checkpoint.display().to_string()));
    }
    let mut corpus = load_corpus(&data, 500.0)?;
    if let Some(lp) = &labels_path {
        if !lp.exists() {
            return Err(CliError::MissingFile(lp.display().to_string()));
        }
        let entries = eval::read_labels_file(lp)?;
        apply_labels(&mut corpus, &entries)?;
    }
    let corpus = preprocess_if(corpus, preprocess)?;
    let labels = eval::corpus_labels(&corpus)?;
    let model = FinetunedModel::from_store(load_checkpoint(&checkpoint)?)?;

    let dir = make_run_dir(&args.out)?;
    let mut resolved = Resolved::new("evaluate");
    resolved.record("checkpoint", checkpoint.display());
    resolved.record("data", data.display());
    if let Some(lp) = &labels_path {
        resolved.record("labels", lp.display());
    }
    resolved.record("by_group", by_group);
    resolved.record("preprocess", preprocess);
    write_resolved(&dir, &resolved)?;

    let mut scores = Vec::with_capacity(corpus.len());
    let mut preds = Vec::with_capacity(corpus.len());
    for rec in &corpus {
        let logits = model.score(rec)?;
        scores.push(eval::prob_positive(logits));
        preds.push(u8::from(logits[1] > logits[0]));
    }
    let acc = eval::accuracy(&preds, &labels)?;
    let auc = eval::auroc(&scores, &labels)?;
    let mcc = eval::mcc(eval::Confusion::from_predictions(&preds, &labels)?);
    let mut text = format!(
        "n\taccuracy\tauroc\tmcc\n{}\t{acc:.6}\t{auc:.6}\t{mcc:.6}\n",
        corpus.len()
    );
    if by_group {
        let groups: Vec<Option<String>> = corpus.iter().map(|r| r.group_tag.clone()).collect();
        let report = eval::subgroup_report(&scores, &preds, &labels, &groups)?;
        text.push('\n');
        text.push_str(&report.to_text());
    }
    std::fs::write(dir.join("metrics.tsv"), &text)?;
    print!("{text}");
    Ok(())
}

// ---------------------------------------------------------------------------
// interpret

#[derive(Args)]
pub struct InterpretArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Fine-tuned checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Salience threshold tau in [0, 1] [default: 0.75]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Integration steps [default: 64]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Also dump per-record attributions [default: false]
    #[arg(long)]
    pub dump: Option<bool>,
    /// Cap on the number of records attributed [default: all]
    #[arg(long)]
    pub max_records: Option<usize>,
    /// Preprocess records on load [default: true]
    #[arg(long)]
    pub preprocess: Option<bool>,
}

pub fn interpret(args: InterpretArgs) -> Result<(), CliError> {
    let file = load_config(&args.config)?;
    let checkpoint = resolve_opt::<PathBuf>(&file, "interpret", "checkpoint", args.checkpoint)?
        .ok_or_else(|| CliError::Config("interpret.checkpoint is required".into()))?;
    let data = resolve_opt::<PathBuf>(&file, "interpret", "data", args.data)?
        .ok_or_else(|| CliError::Config("interpret.data is required".into()))?;
    let tau = resolve(&file, "interpret", "tau", args.tau, attr::TAU_DEFAULT)?;
    let steps = resolve(&file, "interpret", "steps", args.steps, attr::STEPS_DEFAULT)?;
    let dump = resolve(&file, "interpret", "dump", args.dump, false)?;
    let max_records = resolve_opt::<usize>(&file, "interpret", "max_records", args.max_records)?;
    let preprocess = resolve(&file, "interpret", "preprocess", args.preprocess, true)?;

    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Config(format!("interpret.tau: {tau} outside [0, 1]")));
    }
    if !checkpoint.exists() {
        return Err(CliError::MissingFile(checkpoint.display().to_string()));
    }
    let mut corpus = preprocess_if(load_corpus(&data, 500.0)?, preprocess)?;
    if let Some(cap) = max_records {
        corpus.truncate(cap);
    }
    let model = FinetunedModel::from_store(load_checkpoint(&checkpoint)?)?;

    let dir = make_run_dir(&args.out)?;
    let mut resolved = Resolved::new("interpret");
    resolved.record("checkpoint", checkpoint.display());
    resolved.record("data", data.display());
    resolved.record("tau", tau);
    resolved.record("steps", steps);
    resolved.record("dump", dump);
    if let Some(cap) = max_records {
        resolved.record("max_records", cap);
    }
    resolved.record("preprocess", preprocess);
    write_resolved(&dir, &resolved)?;

    let report = attr::igar_report(&model, &corpus, tau, steps)?;
    attr::write_report(&report, &dir.join("igar.tsv"))?;
    if dump {
        let dump_dir = dir.join("attributions");
        std::fs::create_dir_all(&dump_dir)?;
        for rec in &corpus {
            if let Ok(segments) = signal::delineate(rec) {
                let map = attr::attribution_map(&model, rec, &segments, tau, steps)?;
                attr::write_attribution_dump(
                    &map,
                    &dump_dir.join(format!("{}.tsv", rec.record_id)),
                )?;
            }
        }
    }
    print!("{}", report.to_text());
    println!("attribution report under {}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// export-latents

#[derive(Args)]
pub struct ExportLatentsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pre-trained or fine-tuned checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Preprocess records on load [default: true]
    #[arg(long)]
    pub preprocess: Option<bool>,
}

pub fn export_latents(args: ExportLatentsArgs) -> Result<(), CliError> {
    let file = load_config(&args.config)?;
    let checkpoint =
        resolve_opt::<PathBuf>(&file, "export-latents", "checkpoint", args.checkpoint)?
            .ok_or_else(|| CliError::Config("export-latents.checkpoint is required".into()))?;
    let data = resolve_opt::<PathBuf>(&file, "export-latents", "data", args.data)?
        .ok_or_else(|| CliError::Config("export-latents.data is required".into()))?;
    let preprocess = resolve(&file, "export-latents", "preprocess", args.preprocess, true)?;

    if !checkpoint.exists() {
        return Err(CliError::MissingFile(checkpoint.display().to_string()));
    }
    let corpus = preprocess_if(load_corpus(&data, 500.0)?, preprocess)?;
    let store = load_checkpoint(&checkpoint)?;
    let spec = ecgfuse::nets::ModelSpec::infer(&store)?;

    let dir = make_run_dir(&args.out)?;
    let mut resolved = Resolved::new("export-latents");
    resolved.record("checkpoint", checkpoint.display());
    resolved.record("data", data.display());
    resolved.record("preprocess", preprocess);
    write_resolved(&dir, &resolved)?;

    // Restrict each record to the checkpoint's lead set, in corpus order.
    let rows = pretrain::export_latents(&store, &corpus, spec.latent_dim)?;
    pretrain::write_latents(&rows, &dir.join("latents.tsv"))?;
    println!("{} latent rows under {}", rows.len(), dir.display());
    Ok(())
}
