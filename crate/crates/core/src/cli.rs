//! Command-line front end.

use crate::corpus::{timestamp_now, ClusterFilter, CorpusStore, OwnerKind};
use crate::dgc::{kmeans_baseline, predict_partition, read_checkpoint, train, write_checkpoint, write_history_csv, TrainConfig};
use crate::embedding::{augment_prompts, load_dataset, write_dataset, ArtworkRecord, Dataset, EntityLexicon, Modality};
use crate::judgment::{judge, JudgeOptions, JudgmentThresholds, Verdict};
use crate::metrics::{ari, clustering_accuracy, nmi};
use crate::partition::Partition;
use crate::report::{
    build_report_context, mllm::transport_for, mllm_report, render_template_report, MllmClientConfig, RunMetadata,
    DEFAULT_PROMPT_TEMPLATE,
};
use crate::synthetic::{generate, BenchmarkSpec};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Usage errors exit with this status.
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "styleguard", version, about = "Style-protectability triage for AI-generated artwork")]
pub struct Cli {
    /// Overrides the training seed and seeds every other random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with optional `train`, `thresholds`, `judge` and `client` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus store directory.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Head {
    Image,
    Text,
}

impl From<Head> for Modality {
    fn from(h: Head) -> Modality {
        match h {
            Head::Image => Modality::Image,
            Head::Text => Modality::Text,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Owner {
    Human,
    ValidatedAi,
}

impl From<Owner> for OwnerKind {
    fn from(o: Owner) -> OwnerKind {
        match o {
            Owner::Human => OwnerKind::Human,
            Owner::ValidatedAi => OwnerKind::ValidatedAi,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a JSON Lines dataset.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dim: Option<usize>,
        /// Normalized output; omitted means validate only.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rewrite a prompt by entity substitution.
    Augment {
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Write a synthetic paired-embedding benchmark.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 5)]
        styles: usize,
        #[arg(long, default_value_t = 100)]
        per_style: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0.15)]
        noise: f64,
        #[arg(long, default_value_t = 0.10)]
        label_noise: f64,
    },
    /// Train both clustering heads.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss history as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Print hard cluster labels as `id,cluster`.
    Assign {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Head::Image)]
        head: Head,
    },
    /// Score both heads and per-modality k-means against artist labels.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Dataset name for the CSV; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
    },
    /// Judge a candidate set; exit status 0, 2, 3 or 4 encodes the outcome.
    Judge {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Ignore this corpus cluster (repeatable).
        #[arg(long = "exclude-cluster")]
        exclude_cluster: Vec<String>,
        /// Also write the verdict JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a report for a verdict.
    Report {
        #[arg(long)]
        verdict: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Name of the generator that produced the candidates.
        #[arg(long, default_value = "")]
        generator: String,
        /// Prompt template file with a `{context}` placeholder.
        #[arg(long)]
        prompt_template: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manage the reference corpus.
    #[command(subcommand)]
    Corpus(CorpusCommand),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    Create {
        #[arg(long)]
        dim: usize,
    },
    /// Add records as one cluster, or one cluster per artist when `--artist` is omitted.
    Add {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Owner::Human)]
        owner: Owner,
        #[arg(long)]
        artist: Option<String>,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Register the candidates of a Protected verdict.
    Promote {
        #[arg(long)]
        verdict: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
    },
    List {
        #[arg(long, value_enum)]
        owner: Option<Owner>,
        #[arg(long)]
        artist: Option<String>,
    },
    Show {
        cluster_id: String,
    },
    /// Report clusters where one artist holds more than `dominance` of the works.
    Screen {
        #[arg(long, default_value_t = 0.5)]
        dominance: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSection {
    pub context_clusters: Option<usize>,
    pub nearest: Option<usize>,
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub train: TrainConfig,
    pub thresholds: JudgmentThresholds,
    pub judge: JudgeSection,
    pub client: Option<MllmClientConfig>,
}

impl AppConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg: AppConfig = match path {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("parsing {}", p.display()))?,
            None => AppConfig::default(),
        };
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        Ok(cfg)
    }

    /// Hex digest of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    fn judge_options(&self, exclude: Vec<String>) -> JudgeOptions {
        let d = JudgeOptions::default();
        JudgeOptions {
            thresholds: self.thresholds,
            context_clusters: self.judge.context_clusters.unwrap_or(d.context_clusters),
            nearest: self.judge.nearest.unwrap_or(d.nearest),
            exclude,
        }
    }
}

fn open_output(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load(path: &Path, dim: Option<usize>) -> Result<Dataset> {
    load_dataset(path, dim).with_context(|| format!("loading {}", path.display()))
}

fn require_store(store: &Option<PathBuf>) -> Result<&Path> {
    store.as_deref().context("--store is required for this command")
}

fn read_verdict(path: &Path) -> Result<Verdict> {
    let v: Verdict = serde_json::from_str(&std::fs::read_to_string(path)?).with_context(|| format!("parsing {}", path.display()))?;
    if !v.verify_id() {
        bail!("verdict {} does not match its content", v.verdict_id);
    }
    Ok(v)
}

fn truth_partition(dataset: &Dataset) -> Result<Partition> {
    if let Some(r) = dataset.records().iter().find(|r| r.artist_id.is_empty()) {
        bail!("record {} has no artist_id; evaluation needs labels for every record", r.id);
    }
    Ok(Partition::from_keys(dataset.records().iter().map(|r| r.artist_id.as_str())))
}

fn write_scores<W: Write>(out: &mut W, dataset: &str, method: &str, pred: &Partition, truth: &Partition) -> Result<()> {
    writeln!(
        out,
        "{dataset},{method},{:.2},{:.2},{:.2}",
        100.0 * clustering_accuracy(pred, truth),
        100.0 * nmi(pred, truth),
        100.0 * ari(pred, truth)
    )?;
    Ok(())
}

/// Runs one command; returns the process exit status.
pub fn run<W: Write, E: Write>(cli: Cli, out: &mut W, err: &mut E) -> Result<i32> {
    let cfg = AppConfig::load(cli.config.as_deref(), cli.seed)?;
    let seed = cfg.train.seed;
    match cli.command {
        Command::Ingest { input, dim, output } => {
            let ds = load(&input, dim)?;
            if let Some(path) = output {
                write_dataset(open_output(&path)?, ds.records())?;
            }
            writeln!(err, "{} records ({} human, {} ai), dim {}", ds.len(), ds.num_human(), ds.num_ai(), ds.dim())?;
        }
        Command::Augment { prompt, lexicon, count } => {
            if count == 0 {
                bail!("--count must be at least 1");
            }
            let lex = EntityLexicon::from_json_file(&lexicon)?;
            let aug = augment_prompts(&prompt, &lex, count, seed);
            for p in &aug.prompts {
                writeln!(out, "{p}")?;
            }
            if aug.unaugmented {
                writeln!(err, "unaugmented: no substitutable entity found")?;
            }
        }
        Command::Synth { output, styles, per_style, dim, noise, label_noise } => {
            let bench = generate(&BenchmarkSpec { styles, per_style, dim, noise, label_noise, seed });
            write_dataset(open_output(&output)?, bench.dataset.records())?;
        }
        Command::Train { data, out: model_path, history } => {
            let ds = load(&data, None)?;
            let (model, hist) = train(&ds, &cfg.train)?;
            write_checkpoint(&model_path, &model, &cfg.train)?;
            if let Some(path) = history {
                write_history_csv(open_output(&path)?, &hist)?;
            }
            let last = hist.last().expect("history has the initial row");
            writeln!(err, "trained K={} on {} records; final total loss {}", model.clusters(), ds.len(), last.l_total)?;
        }
        Command::Assign { model, data, head } => {
            let (m, _) = read_checkpoint(&model)?;
            let ds = load(&data, Some(m.dim()))?;
            let p = predict_partition(&m, &ds, head.into())?;
            writeln!(out, "id,cluster")?;
            for (r, l) in ds.records().iter().zip(p.labels()) {
                writeln!(out, "{},{l}", r.id)?;
            }
        }
        Command::Evaluate { model, data, name } => {
            let (m, _) = read_checkpoint(&model)?;
            let ds = load(&data, Some(m.dim()))?;
            let truth = truth_partition(&ds)?;
            let name = name.unwrap_or_else(|| data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            writeln!(out, "dataset,method,ACC,NMI,ARI")?;
            for (method, head) in [("dgc-image", Modality::Image), ("dgc-text", Modality::Text)] {
                write_scores(out, &name, method, &predict_partition(&m, &ds, head)?, &truth)?;
            }
            let k = truth.num_clusters().min(ds.len()).max(1);
            for (method, modality) in [("kmeans-image", Modality::Image), ("kmeans-text", Modality::Text)] {
                let points: Vec<&[f64]> = ds.records().iter().map(|r| r.embedding(modality)).collect();
                write_scores(out, &name, method, &kmeans_baseline(&points, k, seed, 300), &truth)?;
            }
        }
        Command::Judge { model, candidates, exclude_cluster, out: verdict_path } => {
            let corpus = CorpusStore::open(require_store(&cli.store)?, None)?;
            let (m, _) = read_checkpoint(&model)?;
            let cands = load(&candidates, Some(corpus.dim()))?;
            let verdict = judge(cands.records(), &corpus, &m, &cfg.judge_options(exclude_cluster))?;
            let text = serde_json::to_string_pretty(&verdict)? + "\n";
            if let Some(path) = verdict_path {
                std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
            out.write_all(text.as_bytes())?;
            writeln!(err, "{}", verdict.outcome.label())?;
            return Ok(verdict.outcome.exit_code());
        }
        Command::Report { verdict, candidates, generator, prompt_template, out: report_path } => {
            let corpus = CorpusStore::open(require_store(&cli.store)?, None)?;
            let v = read_verdict(&verdict)?;
            let cands = load(&candidates, Some(corpus.dim()))?;
            let run = RunMetadata { seed, config_hash: cfg.hash(), timestamp: timestamp_now(), generator_model: generator };
            let ctx = build_report_context(&v, cands.records(), &corpus, run);
            let text = match &cfg.client {
                None => render_template_report(&ctx),
                Some(client) => {
                    let template = match prompt_template {
                        Some(p) => std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                        None => DEFAULT_PROMPT_TEMPLATE.to_string(),
                    };
                    let output = match transport_for(client) {
                        Ok(t) => mllm_report(&ctx, client, t.as_ref(), &template),
                        Err(e) => bail!(e),
                    };
                    if let Some(e) = &output.error {
                        writeln!(err, "report model unavailable ({e}); used template")?;
                    }
                    output.text
                }
            };
            if let Some(path) = report_path {
                std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
            out.write_all(text.as_bytes())?;
        }
        Command::Corpus(cmd) => return run_corpus(cmd, require_store(&cli.store)?, out),
    }
    Ok(0)
}

fn group_by_artist(records: Vec<ArtworkRecord>) -> Vec<(String, Vec<ArtworkRecord>)> {
    let mut groups: Vec<(String, Vec<ArtworkRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(a, _)| *a == r.artist_id) {
            Some((_, g)) => g.push(r),
            None => groups.push((r.artist_id.clone(), vec![r])),
        }
    }
    groups
}

fn run_corpus<W: Write>(cmd: CorpusCommand, root: &Path, out: &mut W) -> Result<i32> {
    match cmd {
        CorpusCommand::Create { dim } => {
            CorpusStore::create(root, dim)?;
            writeln!(out, "created {} (dim {dim})", root.display())?;
        }
        CorpusCommand::Add { input, owner, artist, note } => {
            let mut store = CorpusStore::open(root, None)?;
            let ds = load(&input, Some(store.dim()))?;
            let groups = match artist {
                Some(a) => vec![(a, ds.into_records())],
                None => group_by_artist(ds.into_records()),
            };
            for (artist, records) in groups {
                let id = store.add_cluster(&records, owner.into(), &artist, &note)?;
                writeln!(out, "{id}\t{artist}\t{}", records.len())?;
            }
        }
        CorpusCommand::Promote { verdict, candidates } => {
            let mut store = CorpusStore::open(root, None)?;
            let v = read_verdict(&verdict)?;
            let ds = load(&candidates, Some(store.dim()))?;
            let id = store.promote_verdict(&v, ds.records())?;
            writeln!(out, "{id}")?;
        }
        CorpusCommand::List { owner, artist } => {
            let store = CorpusStore::open(root, None)?;
            let filter = ClusterFilter { owner_kind: owner.map(Into::into), cluster_id: None, artist_id: artist };
            writeln!(out, "{}", serde_json::to_string_pretty(&store.query(&filter))?)?;
        }
        CorpusCommand::Show { cluster_id } => {
            let store = CorpusStore::open(root, None)?;
            let c = store.cluster(&cluster_id).with_context(|| format!("unknown cluster {cluster_id}"))?;
            writeln!(out, "{}", serde_json::to_string_pretty(c)?)?;
        }
        CorpusCommand::Screen { dominance } => {
            let store = CorpusStore::open(root, None)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&store.screen(dominance))?)?;
        }
    }
    Ok(0)
}

/// Parses `args` and runs the command. Usage errors return [`EXIT_USAGE`],
/// other failures [`EXIT_FAILURE`].
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let (mut out, mut err) = (stdout.lock(), stderr.lock());
    match run(cli, &mut out, &mut err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}
