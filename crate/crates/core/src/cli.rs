//! Command-line front end.
//!
//! Every command reads an optional flat config file (`--config`), overlays
//! its own flags, and echoes the resolved settings to
//! `<out>/effective_config.ini` when it has an output directory. Exit codes:
//! 0 on success, 1 on runtime failure, 2 on invalid input or configuration.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{ConfigFile, Settings};
use crate::masking::MaskingPolicy;
use crate::metrics::{self, io as mio, EvalReport, SurfaceOptions};
use crate::model::{self, AdamWConfig, Checkpoint, MlmReduction, ModelConfig, RunConfig};
use crate::par::Exec;
use crate::sampler::{Sampler, SamplerConfig};
use crate::synth::{synthetic_taxonomy, SynthConfig};
use crate::taxonomy::{corpus_stats, ConceptKind, CorpusStats, LoadOptions, TaxonomyStore};
use crate::tokenizer::Vocab;

pub const EFFECTIVE_CONFIG: &str = "effective_config.ini";

#[derive(Debug, Parser)]
#[command(name = "esco-pretrain", version, about = "Taxonomy pair sampling, toy relation pre-training and span evaluation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a taxonomy dump and write the normalized store.
    Ingest(IngestArgs),
    /// Per-language description statistics.
    Stats(StatsArgs),
    /// Draw labeled concept pairs as JSON Lines.
    Sample(SampleArgs),
    /// Toy pre-training run.
    Pretrain(PretrainArgs),
    /// Score predictions against gold annotations.
    Evaluate(EvaluateArgs),
    /// Write a synthetic taxonomy.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// Taxonomy dump (JSONL).
    #[arg(long)]
    taxonomy: Option<String>,
    /// Reject unknown fields instead of warning.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strict: Option<bool>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    taxonomy: Option<String>,
    /// Vocabulary text file; built from the taxonomy when absent.
    #[arg(long)]
    vocab: Option<String>,
    /// Print JSON instead of the table.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    json: Option<bool>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    taxonomy: Option<String>,
    /// Number of pairs.
    #[arg(long)]
    n: Option<usize>,
    /// Random partners share no occupation page and no major group.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strict: Option<bool>,
    #[arg(long)]
    max_retries: Option<usize>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    taxonomy: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    peak_lr: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ffn_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    log_every: Option<usize>,
    /// Stop after this step, leaving a resumable checkpoint.
    #[arg(long)]
    stop_at: Option<usize>,
    /// Continue from a checkpoint; model and run settings come from it.
    #[arg(long)]
    resume: Option<String>,
    /// Disable data parallelism.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    sequential: Option<bool>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// `seq` (BIO files), `mcc` (labels) or `mlc` (rankings).
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    gold: Option<String>,
    #[arg(long)]
    pred: Option<String>,
    /// Compare surface forms ignoring case.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    case_insensitive: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    json: Option<bool>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    occupations: Option<usize>,
    #[arg(long)]
    skills: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    languages: Option<usize>,
    #[arg(long)]
    aliases_per_occupation: Option<usize>,
}

const COMMON_KEYS: [&str; 2] = ["seed", "out"];
const INGEST_KEYS: &[&str] = &["seed", "out", "taxonomy", "strict"];
const STATS_KEYS: &[&str] = &["seed", "out", "taxonomy", "vocab", "json"];
const SAMPLE_KEYS: &[&str] = &["seed", "out", "taxonomy", "n", "strict", "max_retries"];
const PRETRAIN_KEYS: &[&str] = &[
    "seed",
    "out",
    "taxonomy",
    "steps",
    "batch_size",
    "peak_lr",
    "weight_decay",
    "min_freq",
    "dev_fraction",
    "log_every",
    "reduction",
    "max_len",
    "layers",
    "hidden_dim",
    "heads",
    "ffn_dim",
    "dropout",
    "select_rate",
    "mask_frac",
    "random_frac",
    "keep_frac",
    "strict",
    "max_retries",
    "stop_at",
    "resume",
    "sequential",
];
const EVALUATE_KEYS: &[&str] = &["seed", "out", "task", "gold", "pred", "case_insensitive", "json"];
const SYNTH_KEYS: &[&str] = &["seed", "out", "occupations", "skills", "groups", "languages", "aliases_per_occupation"];

enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

trait InputError<T> {
    fn input(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputError<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (program name first) and runs the command; returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Sample(a) => sample(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    }
}

fn settings(
    common: &Common,
    allowed: &'static [&'static str],
    flags: Vec<(&str, Option<String>)>,
) -> Result<Settings, Failure> {
    let mut file = match &common.config {
        Some(p) => ConfigFile::load(p).input()?,
        None => ConfigFile::default(),
    };
    let common_flags = [
        (COMMON_KEYS[0], common.seed.map(|s| s.to_string())),
        (COMMON_KEYS[1], common.out.clone()),
    ];
    for (k, v) in common_flags.into_iter().chain(flags) {
        if let Some(v) = v {
            file.set(k, v);
        }
    }
    Settings::new(file, allowed).input()
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn create_out_dir(out: &str) -> Result<PathBuf, Failure> {
    let dir = PathBuf::from(out);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn echo_config(dir: &Path, cfg: &Settings) -> Outcome {
    write_file(&dir.join(EFFECTIVE_CONFIG), cfg.effective().as_bytes())
}

fn existing_file(path: String) -> Result<PathBuf, Failure> {
    let p = PathBuf::from(path);
    if !p.is_file() {
        return Err(Failure::Input(anyhow!("no such file: {}", p.display())));
    }
    Ok(p)
}

fn load_store(path: &Path, strict: bool) -> Result<TaxonomyStore, Failure> {
    let loaded = TaxonomyStore::load(path, LoadOptions { strict }).input()?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    Ok(loaded.store)
}

fn ingest(a: IngestArgs) -> Outcome {
    let mut cfg = settings(
        &a.common,
        INGEST_KEYS,
        vec![("taxonomy", a.taxonomy.clone()), ("strict", s(&a.strict))],
    )?;
    let taxonomy = existing_file(cfg.require("taxonomy").input()?)?;
    let out: String = cfg.require("out").input()?;
    let strict = cfg.get_or("strict", false).input()?;
    let _: Option<u64> = cfg.get_opt("seed").input()?;
    let loaded = TaxonomyStore::load(&taxonomy, LoadOptions { strict }).input()?;
    let store = &loaded.store;
    let dir = create_out_dir(&out)?;
    write_file(&dir.join("taxonomy.jsonl"), store.to_jsonl_string().as_bytes())?;
    let report = json!({
        "occupations": store.count_kind(ConceptKind::Occupation),
        "skills": store.count_kind(ConceptKind::Skill),
        "aliases": store.count_kind(ConceptKind::Alias),
        "major_groups": store.groups().len(),
        "languages": store.languages(),
        "description_entries": store.entry_count(),
        "warnings": loaded.warnings,
    });
    write_file(&dir.join("validation.json"), format!("{report:#}\n").as_bytes())?;
    echo_config(&dir, &cfg)?;
    println!("occupations           {}", report["occupations"]);
    println!("skills                {}", report["skills"]);
    println!("aliases               {}", report["aliases"]);
    println!("major groups          {}", report["major_groups"]);
    println!("description entries   {}", report["description_entries"]);
    println!("warnings              {}", loaded.warnings.len());
    Ok(())
}

/// Stats with empty languages dropped.
fn nonempty(mut stats: CorpusStats) -> CorpusStats {
    stats.languages.retain(|_, v| v.instance_count > 0);
    stats
}

pub fn stats_table(stats: &CorpusStats) -> String {
    let fmt_mean = |m: Option<f64>| m.map_or_else(|| "-".to_owned(), |m| format!("{m:.4}"));
    let fmt_max = |m: Option<usize>| m.map_or_else(|| "-".to_owned(), |m| m.to_string());
    let mut out = format!("{:<10} {:>12} {:>12} {:>10}\n", "language", "descriptions", "mean_tokens", "max_tokens");
    let rows = stats
        .languages
        .iter()
        .map(|(l, v)| (l.as_str(), v))
        .chain([("total", &stats.total)]);
    for (lang, v) in rows {
        out.push_str(&format!(
            "{:<10} {:>12} {:>12} {:>10}\n",
            lang,
            v.instance_count,
            fmt_mean(v.mean_token_length),
            fmt_max(v.max_token_length)
        ));
    }
    out
}

fn stats(a: StatsArgs) -> Outcome {
    let mut cfg = settings(
        &a.common,
        STATS_KEYS,
        vec![("taxonomy", a.taxonomy.clone()), ("vocab", a.vocab.clone()), ("json", s(&a.json))],
    )?;
    let taxonomy = existing_file(cfg.require("taxonomy").input()?)?;
    let vocab_path = cfg.get_opt::<String>("vocab").input()?.map(existing_file).transpose()?;
    let as_json = cfg.get_or("json", false).input()?;
    let out: Option<String> = cfg.get_opt("out").input()?;
    let _: Option<u64> = cfg.get_opt("seed").input()?;
    let store = load_store(&taxonomy, false)?;
    let vocab = match vocab_path {
        Some(p) => {
            let f = fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            Vocab::read_text(io::BufReader::new(f)).input()?
        }
        None => Vocab::build(&store, 1).input()?,
    };
    let stats = nonempty(corpus_stats(&store, &vocab));
    let json_text = format!("{:#}\n", serde_json::to_value(&stats)?);
    let table = stats_table(&stats);
    if let Some(out) = out {
        let dir = create_out_dir(&out)?;
        write_file(&dir.join("stats.json"), json_text.as_bytes())?;
        write_file(&dir.join("stats.txt"), table.as_bytes())?;
        echo_config(&dir, &cfg)?;
    }
    print!("{}", if as_json { json_text } else { table });
    Ok(())
}

fn sample(a: SampleArgs) -> Outcome {
    let mut cfg = settings(
        &a.common,
        SAMPLE_KEYS,
        vec![
            ("taxonomy", a.taxonomy.clone()),
            ("n", s(&a.n)),
            ("strict", s(&a.strict)),
            ("max_retries", s(&a.max_retries)),
        ],
    )?;
    let taxonomy = existing_file(cfg.require("taxonomy").input()?)?;
    let seed: u64 = cfg.require("seed").input()?;
    let n: usize = cfg.require("n").input()?;
    let defaults = SamplerConfig::default();
    let sampler_cfg = SamplerConfig {
        seed,
        strict_disjoint_random: cfg.get_or("strict", defaults.strict_disjoint_random).input()?,
        max_retries: cfg.get_or("max_retries", defaults.max_retries).input()?,
    };
    let out: Option<String> = cfg.get_opt("out").input()?;
    let store = load_store(&taxonomy, false)?;
    let sampler = Sampler::new(&store, sampler_cfg).input()?;
    let pairs = sampler.sample_batch(n, Exec::default())?;
    let mut text = String::new();
    for p in &pairs {
        text.push_str(&serde_json::to_string(p)?);
        text.push('\n');
    }
    match out {
        Some(out) => {
            let dir = create_out_dir(&out)?;
            write_file(&dir.join("pairs.jsonl"), text.as_bytes())?;
            echo_config(&dir, &cfg)?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_reduction(name: &str) -> Result<MlmReduction, Failure> {
    match name {
        "mean" => Ok(MlmReduction::Mean),
        "sum" => Ok(MlmReduction::Sum),
        other => Err(Failure::Input(anyhow!("reduction must be `mean` or `sum`, got `{other}`"))),
    }
}

fn pretrain(a: PretrainArgs) -> Outcome {
    let flags = vec![
        ("taxonomy", a.taxonomy.clone()),
        ("steps", s(&a.steps)),
        ("batch_size", s(&a.batch_size)),
        ("peak_lr", s(&a.peak_lr)),
        ("max_len", s(&a.max_len)),
        ("layers", s(&a.layers)),
        ("hidden_dim", s(&a.hidden_dim)),
        ("heads", s(&a.heads)),
        ("ffn_dim", s(&a.ffn_dim)),
        ("dropout", s(&a.dropout)),
        ("log_every", s(&a.log_every)),
        ("stop_at", s(&a.stop_at)),
        ("resume", a.resume.clone()),
        ("sequential", s(&a.sequential)),
    ];
    let mut cfg = settings(&a.common, PRETRAIN_KEYS, flags)?;
    let taxonomy = existing_file(cfg.require("taxonomy").input()?)?;
    let out: String = cfg.require("out").input()?;
    let resume_from = cfg.get_opt::<String>("resume").input()?.map(existing_file).transpose()?;
    let stop_at: Option<usize> = cfg.get_opt("stop_at").input()?;
    let exec = if cfg.get_or("sequential", false).input()? {
        Exec::Sequential
    } else {
        Exec::Parallel
    };

    let outcome = match resume_from {
        Some(path) => {
            let ckpt = Checkpoint::load(&path).input()?;
            let store = load_store(&taxonomy, false)?;
            model::resume(&store, ckpt, stop_at, exec)?
        }
        None => {
            let seed: u64 = cfg.require("seed").input()?;
            let rd = RunConfig::default();
            let md = ModelConfig::default();
            let sd = SamplerConfig::default();
            let pd = MaskingPolicy::default();
            let run = RunConfig {
                seed,
                steps: cfg.get_or("steps", rd.steps).input()?,
                batch_size: cfg.get_or("batch_size", rd.batch_size).input()?,
                peak_lr: cfg.get_or("peak_lr", rd.peak_lr).input()?,
                adamw: AdamWConfig {
                    weight_decay: cfg.get_or("weight_decay", rd.adamw.weight_decay).input()?,
                    ..rd.adamw
                },
                min_freq: cfg.get_or("min_freq", rd.min_freq).input()?,
                dev_fraction: cfg.get_or("dev_fraction", rd.dev_fraction).input()?,
                log_every: cfg.get_or("log_every", rd.log_every).input()?,
                masking: MaskingPolicy {
                    select_rate: cfg.get_or("select_rate", pd.select_rate).input()?,
                    mask_frac: cfg.get_or("mask_frac", pd.mask_frac).input()?,
                    random_frac: cfg.get_or("random_frac", pd.random_frac).input()?,
                    keep_frac: cfg.get_or("keep_frac", pd.keep_frac).input()?,
                },
                reduction: parse_reduction(&cfg.get_or("reduction", "mean".to_owned()).input()?)?,
                stop_at,
                exec,
            };
            let model_cfg = ModelConfig {
                vocab_size: 1,
                max_len: cfg.get_or("max_len", md.max_len).input()?,
                layers: cfg.get_or("layers", md.layers).input()?,
                hidden_dim: cfg.get_or("hidden_dim", md.hidden_dim).input()?,
                heads: cfg.get_or("heads", md.heads).input()?,
                ffn_dim: cfg.get_or("ffn_dim", md.ffn_dim).input()?,
                dropout: cfg.get_or("dropout", md.dropout).input()?,
            };
            let sampler_cfg = SamplerConfig {
                seed,
                strict_disjoint_random: cfg.get_or("strict", sd.strict_disjoint_random).input()?,
                max_retries: cfg.get_or("max_retries", sd.max_retries).input()?,
            };
            model_cfg.validate().input()?;
            run.validate().input()?;
            let store = load_store(&taxonomy, false)?;
            model::pretrain(&store, &sampler_cfg, model_cfg, &run)?
        }
    };

    let dir = create_out_dir(&out)?;
    let csv = |name: &str, full: bool| -> Outcome {
        let path = dir.join(name);
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        if full {
            model::write_full_csv(&outcome.logs, &mut w)?;
        } else {
            model::write_metrics_csv(&outcome.logs, &mut w)?;
        }
        w.flush()?;
        Ok(())
    };
    csv("metrics.csv", false)?;
    csv("metrics_full.csv", true)?;
    let mut vocab_text = Vec::new();
    outcome.vocab.write_text(&mut vocab_text)?;
    write_file(&dir.join("vocab.txt"), &vocab_text)?;
    outcome.checkpoint.save(&dir.join("checkpoint.bin"))?;
    echo_config(&dir, &cfg)?;
    if let Some(last) = outcome.logs.last() {
        println!(
            "step {} dev loss {:.4} mlm acc {} erp acc {}",
            last.step,
            last.dev_loss,
            last.mlm_acc.map_or("-".into(), |v| format!("{v:.4}")),
            last.erp_acc.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let mut cfg = settings(
        &a.common,
        EVALUATE_KEYS,
        vec![
            ("task", a.task.clone()),
            ("gold", a.gold.clone()),
            ("pred", a.pred.clone()),
            ("case_insensitive", s(&a.case_insensitive)),
            ("json", s(&a.json)),
        ],
    )?;
    let task: String = cfg.require("task").input()?;
    let gold = existing_file(cfg.require("gold").input()?)?;
    let pred = existing_file(cfg.require("pred").input()?)?;
    let case_insensitive = cfg.get_or("case_insensitive", false).input()?;
    let as_json = cfg.get_or("json", false).input()?;
    let out: Option<String> = cfg.get_opt("out").input()?;
    let _: Option<u64> = cfg.get_opt("seed").input()?;
    let report: EvalReport = match task.as_str() {
        "seq" => {
            let g = mio::read_tagged_file(&gold).input()?;
            let p = mio::read_tagged_file(&pred).input()?;
            let opts = SurfaceOptions {
                case_sensitive: !case_insensitive,
            };
            metrics::evaluate_spans(&g, &p, opts).input()?
        }
        "mcc" => {
            let g = mio::read_labels_file(&gold).input()?;
            let p = mio::read_labels_file(&pred).input()?;
            metrics::evaluate_classification(&g, &p).input()?
        }
        "mlc" => {
            let g = mio::read_lists_file(&gold, "labels").input()?;
            let p = mio::read_lists_file(&pred, "ranking").input()?;
            metrics::evaluate_ranking(&g, &p).input()?
        }
        other => return Err(Failure::Input(anyhow!("task must be seq, mcc or mlc, got `{other}`"))),
    };
    let json_text = format!("{:#}\n", serde_json::to_value(&report)?);
    if let Some(out) = out {
        let dir = create_out_dir(&out)?;
        write_file(&dir.join("report.json"), json_text.as_bytes())?;
        echo_config(&dir, &cfg)?;
    }
    print!("{}", if as_json { json_text } else { report.to_table() });
    Ok(())
}

fn synth(a: SynthArgs) -> Outcome {
    let mut cfg = settings(
        &a.common,
        SYNTH_KEYS,
        vec![
            ("occupations", s(&a.occupations)),
            ("skills", s(&a.skills)),
            ("groups", s(&a.groups)),
            ("languages", s(&a.languages)),
            ("aliases_per_occupation", s(&a.aliases_per_occupation)),
        ],
    )?;
    let d = SynthConfig::default();
    let sc = SynthConfig {
        occupations: cfg.get_or("occupations", d.occupations).input()?,
        skills: cfg.get_or("skills", d.skills).input()?,
        groups: cfg.get_or("groups", d.groups).input()?,
        languages: cfg.get_or("languages", d.languages).input()?,
        aliases_per_occupation: cfg.get_or("aliases_per_occupation", d.aliases_per_occupation).input()?,
        seed: cfg.get_or("seed", d.seed).input()?,
    };
    let out: String = cfg.require("out").input()?;
    if sc.occupations == 0 || sc.groups == 0 || sc.languages == 0 {
        return Err(Failure::Input(anyhow!("occupations, groups and languages must be positive")));
    }
    let store = synthetic_taxonomy(&sc);
    let dir = create_out_dir(&out)?;
    write_file(&dir.join("taxonomy.jsonl"), store.to_jsonl_string().as_bytes())?;
    echo_config(&dir, &cfg)?;
    println!("{}", dir.join("taxonomy.jsonl").display());
    Ok(())
}
