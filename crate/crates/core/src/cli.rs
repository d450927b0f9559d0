//! Command-line surface: generate, train, evaluate, benchmark, ablate.
//! Every command writes a `manifest.json` into its output directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{LearnedScorer, ScanConfig};
use crate::checkpoint::Checkpoint;
use crate::data::{generate_corpus, load_corpus, save_corpus, Corpus, Sample, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{attention_mass, benchmark, evaluate, metric_columns, AttentionMass, EvalReport, DEFAULT_SIGMAS};
use crate::model::{Model, ModelConfig, Variant};
use crate::trainer::{train_with_progress, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";

#[derive(Parser, Debug)]
#[command(
    name = "ablr",
    version,
    about = "Temporal sentence localization by attention based location regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threads {
    One,
    Auto,
}

impl Threads {
    pub fn count(self) -> usize {
        match self {
            Threads::One => 1,
            Threads::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

fn parse_threads(s: &str) -> std::result::Result<Threads, String> {
    match s {
        "1" => Ok(Threads::One),
        "auto" => Ok(Threads::Auto),
        _ => Err(format!("expected `1` or `auto`, got `{s}`")),
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads: `1` or `auto`.
    #[arg(long, default_value = "1", value_parser = parse_threads)]
    pub threads: Threads,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic planted-interval corpus.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train one variant and write a checkpoint plus an epoch log.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on one corpus split.
    Evaluate {
        #[arg(long, required_unless_present = "oracle_gt")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Predict the ground truth itself; checks the metric harness.
        #[arg(long)]
        oracle_gt: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Time model inference against the scan baseline, single-threaded.
    Benchmark {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        #[arg(long, default_value_t = crate::eval::MIN_QUERIES)]
        queries: usize,
        #[arg(long, default_value_t = crate::eval::MIN_WARMUP)]
        warmup: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate every (variant, seed) cell and tabulate mean ± std.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        /// Comma-separated variants; all of them by default.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
        variants: Option<Vec<Variant>>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("expected train, val or test, got `{s}`")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    /// SHA-256 of input artifacts, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of written artifacts, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub metrics: serde_json::Value,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::validation("manifest", e.to_string()))
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// One digest over the vocabulary and the three split files.
pub fn hash_corpus(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let names = std::iter::once("vocab.txt").chain(Split::ALL.iter().map(|s| s.file_name()));
    for name in names {
        let bytes = fs::read(dir.join(name))?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(format!("{:x}", h.finalize()))
}

fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(|p| fs::read_to_string(p).map_err(Error::from)).transpose()
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data")
}

struct Run {
    command: &'static str,
    args: Vec<String>,
    started: f64,
    threads: usize,
}

impl Run {
    fn finish(
        self,
        out: &Path,
        config: serde_json::Value,
        seed: Option<u64>,
        inputs: BTreeMap<String, String>,
        written: &[&str],
        metrics: serde_json::Value,
    ) -> Result<RunManifest> {
        let mut outputs = BTreeMap::new();
        for name in written {
            outputs.insert(name.to_string(), hash_file(&out.join(name))?);
        }
        let m = RunManifest {
            command: self.command.into(),
            args: self.args,
            config,
            seed,
            threads: self.threads,
            inputs,
            outputs,
            started_unix: self.started,
            finished_unix: now(),
            metrics,
        };
        fs::write(
            out.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&m).expect("plain data") + "\n",
        )?;
        Ok(m)
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 2 for usage errors, 1 otherwise.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, argv) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

pub fn run(cli: Cli, args: Vec<String>) -> Result<RunManifest> {
    let (name, threads) = match &cli.command {
        Command::Generate { common } => ("generate", common.threads),
        Command::Train { common, .. } => ("train", common.threads),
        Command::Evaluate { common, .. } => ("evaluate", common.threads),
        Command::Benchmark { .. } => ("benchmark", Threads::One),
        Command::Ablate { common, .. } => ("ablate", common.threads),
    };
    let run = Run {
        command: name,
        args,
        started: now(),
        threads: threads.count(),
    };
    match cli.command {
        Command::Generate { common } => cmd_generate(run, &common),
        Command::Train {
            corpus,
            variant,
            common,
        } => cmd_train(run, &corpus, variant, &common),
        Command::Evaluate {
            checkpoint,
            corpus,
            split,
            oracle_gt,
            common,
        } => cmd_evaluate(run, checkpoint.as_deref(), &corpus, split, oracle_gt, &common),
        Command::Benchmark {
            checkpoint,
            corpus,
            split,
            queries,
            warmup,
            common,
        } => cmd_benchmark(run, &checkpoint, &corpus, split, queries, warmup, &common),
        Command::Ablate {
            corpus,
            seeds,
            variants,
            common,
        } => cmd_ablate(
            run,
            &corpus,
            &seeds,
            variants.unwrap_or_else(|| Variant::ALL.to_vec()),
            &common,
        ),
    }
}

fn cmd_generate(run: Run, common: &Common) -> Result<RunManifest> {
    let mut cfg = match read_config(common.config.as_deref())? {
        Some(text) => SynthConfig::from_toml(&text)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let (corpus, _) = generate_corpus(&cfg)?;
    save_corpus(&corpus, &common.out)?;
    let counts = serde_json::json!({
        "train": corpus.train.len(),
        "val": corpus.val.len(),
        "test": corpus.test.len(),
        "vocab": corpus.vocab.len(),
    });
    println!(
        "wrote {} train, {} val, {} test samples to {}",
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len(),
        common.out.display()
    );
    let written = ["vocab.txt", "train.jsonl", "val.jsonl", "test.jsonl"];
    run.finish(
        &common.out,
        to_json(&cfg),
        Some(cfg.seed),
        BTreeMap::new(),
        &written,
        counts,
    )
}

/// Config file, then `--seed` and `--variant`, then the variant's beta rule.
pub fn resolve_train_config(path: Option<&Path>, seed: Option<u64>, variant: Option<Variant>) -> Result<TrainConfig> {
    let mut cfg = match read_config(path)? {
        Some(text) => TrainConfig::from_toml(&text)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = variant {
        cfg.variant = v;
    }
    cfg.beta = cfg.effective_beta();
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(run: Run, corpus_dir: &Path, variant: Option<Variant>, common: &Common) -> Result<RunManifest> {
    let cfg = resolve_train_config(common.config.as_deref(), common.seed, variant)?;
    let corpus = load_corpus(corpus_dir)?;
    fs::create_dir_all(&common.out)?;
    let mut log = std::io::BufWriter::new(fs::File::create(common.out.join(EPOCH_LOG_FILE))?);
    let mut log_err = None;
    let outcome = train_with_progress(&corpus, &cfg, |r| {
        let line = serde_json::to_string(r).expect("plain data");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
        let val = r.val.as_ref().map_or(String::from("-"), |v| format!("{:.4}", v.miou));
        eprintln!(
            "epoch {:>3}  loss {:.5}  reg {:.5}  cal {:.5}  val mIoU {val}  {:.1}s",
            r.epoch, r.loss.total, r.loss.l_reg, r.loss.l_cal, r.seconds
        );
    });
    drop(log);
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let outcome = outcome?;
    let ck = &outcome.checkpoint;
    ck.save(&common.out.join(CHECKPOINT_FILE))?;
    let best = ck.history.iter().find(|r| r.epoch == ck.epoch);
    let metrics = serde_json::json!({
        "best_epoch": ck.epoch,
        "epochs": outcome.history.len(),
        "best": best.map(to_json),
        "final_loss": outcome.history.last().map(|r| to_json(&r.loss)),
    });
    println!("best epoch {} of {}", ck.epoch, outcome.history.len());
    let inputs = BTreeMap::from([("corpus".to_string(), hash_corpus(corpus_dir)?)]);
    run.finish(
        &common.out,
        to_json(&cfg),
        Some(cfg.seed),
        inputs,
        &[CHECKPOINT_FILE, EPOCH_LOG_FILE],
        metrics,
    )
}

/// The checkpoint's dimensions must agree with the corpus it is scored on.
pub fn check_compatible(model: &ModelConfig, corpus: &Corpus) -> Result<()> {
    let Some((d, m)) = corpus.dims() else {
        return Ok(());
    };
    if (d, m) != (model.feature_dim, model.clips) || corpus.vocab.len() != model.vocab_size {
        return Err(Error::validation(
            "checkpoint/corpus",
            format!(
                "model expects features [{} x {}] and {} tokens, corpus has [{d} x {m}] and {} tokens",
                model.feature_dim,
                model.clips,
                model.vocab_size,
                corpus.vocab.len()
            ),
        ));
    }
    Ok(())
}

/// Predictions, metrics and attention mass on `samples`.
pub fn score_model(model: &Model<f32>, samples: &[Sample]) -> Result<(EvalReport, AttentionMass)> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut attn = Vec::with_capacity(samples.len());
    for s in samples {
        let p = model.predict(s)?;
        preds.push(p.span);
        attn.push(p.attention.video_attention);
    }
    let gts: Vec<_> = samples.iter().map(Sample::gt).collect();
    Ok((evaluate(&preds, &gts, &DEFAULT_SIGMAS)?, attention_mass(&attn, &gts)?))
}

fn split_samples(corpus: &Corpus, split: Split) -> Result<&[Sample]> {
    let samples = corpus.split(split);
    if samples.is_empty() {
        return Err(Error::usage(format!("the {} split is empty", split.file_name())));
    }
    Ok(samples)
}

fn cmd_evaluate(
    run: Run,
    checkpoint: Option<&Path>,
    corpus_dir: &Path,
    split: Split,
    oracle_gt: bool,
    common: &Common,
) -> Result<RunManifest> {
    let corpus = load_corpus(corpus_dir)?;
    let samples = split_samples(&corpus, split)?;
    let mut inputs = BTreeMap::from([("corpus".to_string(), hash_corpus(corpus_dir)?)]);
    let (report, mass, label, config) = if oracle_gt {
        let gts: Vec<_> = samples.iter().map(Sample::gt).collect();
        (
            evaluate(&gts, &gts, &DEFAULT_SIGMAS)?,
            None,
            "oracle-gt".to_string(),
            serde_json::Value::Null,
        )
    } else {
        let path = checkpoint.ok_or_else(|| Error::usage("--checkpoint is required without --oracle-gt"))?;
        let ck = Checkpoint::load(path)?;
        check_compatible(&ck.model_config, &corpus)?;
        inputs.insert("checkpoint".into(), hash_file(path)?);
        let model = ck.model::<f32>()?;
        let (r, m) = score_model(&model, samples)?;
        (
            r,
            Some(m),
            ck.model_config.variant.to_string(),
            to_json(&ck.train_config),
        )
    };
    fs::create_dir_all(&common.out)?;
    let mut f = std::io::BufWriter::new(fs::File::create(common.out.join("predictions.jsonl"))?);
    for (s, r) in samples.iter().zip(&report.records) {
        let line = serde_json::json!({"video_id": s.video_id, "pred": r.pred, "gt": r.gt, "iou": r.iou});
        writeln!(f, "{line}")?;
    }
    f.flush()?;
    drop(f);
    let mut summary: serde_json::Value = serde_json::from_str(&report.summary_json()).expect("valid json");
    summary["attention_mass"] = mass.map_or(serde_json::Value::Null, |m| to_json(&m));
    fs::write(common.out.join("summary.json"), summary.to_string() + "\n")?;
    println!("{}", report.table_header());
    println!("{}", report.table_row(&label));
    if let Some(m) = mass {
        println!(
            "attention mass inside ground truth {:.4} vs window fraction {:.4}",
            m.inside, m.window_fraction
        );
    }
    let seed = config.get("seed").and_then(|s| s.as_u64());
    run.finish(
        &common.out,
        config,
        seed,
        inputs,
        &["predictions.jsonl", "summary.json"],
        summary,
    )
}

/// Lengths of M/16, M/8, M/4 and M/2 clips, stride M/32.
pub fn default_scan_config(clips: usize) -> ScanConfig {
    let mut window_lengths: Vec<usize> = [16, 8, 4, 2].iter().map(|d| clips / d).filter(|&l| l > 0).collect();
    window_lengths.dedup();
    if window_lengths.is_empty() {
        window_lengths.push(clips);
    }
    ScanConfig {
        window_lengths,
        stride: (clips / 32).max(1),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_benchmark(
    run: Run,
    checkpoint: &Path,
    corpus_dir: &Path,
    split: Split,
    queries: usize,
    warmup: usize,
    common: &Common,
) -> Result<RunManifest> {
    let ck = Checkpoint::load(checkpoint)?;
    let corpus = load_corpus(corpus_dir)?;
    check_compatible(&ck.model_config, &corpus)?;
    let samples = split_samples(&corpus, split)?;
    let clips = ck.model_config.clips;
    let scan = match read_config(common.config.as_deref())? {
        Some(text) => toml::from_str::<ScanConfig>(&text).map_err(|e| Error::Config(e.message().to_string()))?,
        None => default_scan_config(clips),
    };
    scan.validate(clips)?;
    let seed = common.seed.unwrap_or(0);
    let model = ck.model::<f32>()?;
    let scorer = LearnedScorer::new(&model, seed);
    let report = benchmark(&model, &scorer, samples, &scan, queries, warmup)?;
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("timing.json"), report.to_json() + "\n")?;
    print!("{}", report.table());
    let inputs = BTreeMap::from([
        ("corpus".to_string(), hash_corpus(corpus_dir)?),
        ("checkpoint".to_string(), hash_file(checkpoint)?),
    ]);
    run.finish(
        &common.out,
        to_json(&scan),
        Some(seed),
        inputs,
        &["timing.json"],
        to_json(&report),
    )
}

/// One trained-and-evaluated ablation cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub variant: Variant,
    pub seed: u64,
    pub best_epoch: usize,
    pub miou: f64,
    pub recall_at: Vec<crate::eval::Recall>,
    pub attention_mass: AttentionMass,
}

impl AblationCell {
    /// Recalls in threshold order, then mIoU.
    pub fn metrics(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.recall_at.iter().map(|r| r.recall).collect();
        v.push(self.miou);
        v
    }
}

/// Trains `cfg` on the corpus and scores the test split.
pub fn run_cell(corpus: &Corpus, cfg: &TrainConfig) -> Result<AblationCell> {
    let samples = split_samples(corpus, Split::Test)?;
    let outcome = train_with_progress(corpus, cfg, |_| {})?;
    let model = outcome.checkpoint.model::<f32>()?;
    let (report, mass) = score_model(&model, samples)?;
    Ok(AblationCell {
        variant: cfg.variant,
        seed: cfg.seed,
        best_epoch: outcome.checkpoint.epoch,
        miou: report.miou,
        recall_at: report.recall_at,
        attention_mass: mass,
    })
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rows are variants in first-seen order; cells are mean ± std over seeds.
pub fn ablation_table(cells: &[AblationCell]) -> String {
    let mut variants: Vec<Variant> = Vec::new();
    for c in cells {
        if !variants.contains(&c.variant) {
            variants.push(c.variant);
        }
    }
    let mut s = format!("{:<10}", "method");
    for col in metric_columns(&DEFAULT_SIGMAS) {
        s.push_str(&format!(" | {col:^15}"));
    }
    s.push('\n');
    for v in variants {
        let rows: Vec<Vec<f64>> = cells
            .iter()
            .filter(|c| c.variant == v)
            .map(AblationCell::metrics)
            .collect();
        s.push_str(&format!("{:<10}", v.name()));
        for j in 0..rows[0].len() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let (m, sd) = mean_std(&col);
            s.push_str(&format!(" | {m:.4} ± {sd:.4}"));
        }
        s.push('\n');
    }
    s
}

/// Runs every (variant, seed) cell, `threads` at a time, in a stable order.
pub fn run_ablation(
    corpus: &Corpus,
    base: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<AblationCell>> {
    let jobs: Vec<TrainConfig> = variants
        .iter()
        .flat_map(|&v| {
            seeds.iter().map(move |&seed| {
                let mut c = base.clone();
                c.variant = v;
                c.seed = seed;
                c.beta = c.effective_beta();
                c
            })
        })
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<AblationCell>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = jobs.get(i) else { break };
                let r = run_cell(corpus, cfg);
                if let Ok(c) = &r {
                    eprintln!("{} seed {}: mIoU {:.4}", c.variant, c.seed, c.miou);
                }
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn cmd_ablate(
    run: Run,
    corpus_dir: &Path,
    seeds: &[u64],
    variants: Vec<Variant>,
    common: &Common,
) -> Result<RunManifest> {
    if seeds.is_empty() || variants.is_empty() {
        return Err(Error::usage("ablate needs at least one seed and one variant"));
    }
    let base = resolve_train_config(common.config.as_deref(), None, None)?;
    let corpus = load_corpus(corpus_dir)?;
    split_samples(&corpus, Split::Test)?;
    let cells = run_ablation(&corpus, &base, &variants, seeds, run.threads)?;
    fs::create_dir_all(&common.out)?;
    let mut f = std::io::BufWriter::new(fs::File::create(common.out.join("cells.jsonl"))?);
    for c in &cells {
        writeln!(f, "{}", serde_json::to_string(c).expect("plain data"))?;
    }
    f.flush()?;
    drop(f);
    let table = ablation_table(&cells);
    fs::write(common.out.join("table.txt"), &table)?;
    print!("{table}");
    let inputs = BTreeMap::from([("corpus".to_string(), hash_corpus(corpus_dir)?)]);
    let config = serde_json::json!({
        "train": to_json(&base),
        "seeds": seeds,
        "variants": variants,
    });
    run.finish(
        &common.out,
        config,
        None,
        inputs,
        &["cells.jsonl", "table.txt"],
        to_json(&cells),
    )
}
