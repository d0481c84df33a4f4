//! The `sentstruct` command.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sentstruct_core::counterfactual::NieSign;
use sentstruct_core::data::{
    pad_or_truncate, segment_sentences, synth_corpus, toy_embed, Corpus, EmbeddedDoc, Label, SynthConfig, VariantKind,
};
use sentstruct_core::encoder::{forward, init_params, AttentionScale, HyperParams, Mode};
use sentstruct_core::real::sigmoid;
use sentstruct_core::train::{evaluate, train_from, EvalFilter, TrainConfig};
use sentstruct_core::Error as CoreError;
use serde::Deserialize;

use crate::report::{EvalReport, Json};
use crate::{checkpoint, history, seb, CliError, ExitCode};

#[derive(Debug, Parser)]
#[command(name = "sentstruct", version, about = "Machine-text detection from sentence-embedding structure")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus with label-dependent sentence coherence.
    Synth(SynthArgs),
    /// Train a detector and write a checkpoint plus its history.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus and write a JSON report.
    Eval(EvalArgs),
    /// Score raw texts from a JSON-lines file.
    Classify(ClassifyArgs),
    /// Summarise a corpus.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub docs: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Maximum sentences per document.
    #[arg(long, default_value_t = 16)]
    pub m: usize,
    #[arg(long, default_value_t = 0.8)]
    pub rho_machine: f64,
    #[arg(long, default_value_t = 0.2)]
    pub rho_human: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Length of a fixed offset added to every machine sentence.
    #[arg(long, default_value_t = 0.0)]
    pub nuisance: f64,
    /// Follow each document with a synonym-substitution variant that lacks the offset.
    #[arg(long)]
    pub variants: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub cf: Switch,
    #[arg(long, default_value_t = 5e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 2)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub heads: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub nie_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub de_weight: f64,
    /// Sign applied to the indirect effect inside its loss.
    #[arg(long, default_value = "-1", allow_hyphen_values = true, value_parser = ["+1", "1", "-1"])]
    pub nie_sign: String,
    /// Sentence slots (longer documents are truncated).
    #[arg(long, default_value_t = 32)]
    pub m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Feed-forward width; defaults to four times the embedding width.
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long, default_value_t = 256)]
    pub mlp_hidden: usize,
    #[arg(long, default_value = "d_head", value_parser = ["d_head", "d_model"])]
    pub attention_scale: String,
    /// Counterfactual draws per example.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    /// Stop gradients through the factual branch of the effect terms.
    #[arg(long)]
    pub detach_factual: bool,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Start from an existing checkpoint instead of a fresh initialisation.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Hc3,
    Substitution,
    Translation,
    Any,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Hc3 => "hc3",
            Task::Substitution => "substitution",
            Task::Translation => "translation",
            Task::Any => "any",
        }
    }

    pub fn filter(self) -> EvalFilter {
        match self {
            Task::Hc3 => EvalFilter::kinds(&[VariantKind::Original]),
            Task::Substitution => EvalFilter::kinds(&[VariantKind::SynonymSub]),
            Task::Translation => EvalFilter::kinds(&[VariantKind::Translated]),
            Task::Any => EvalFilter::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Evaluate one task; without it every non-empty task is reported.
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    #[arg(long)]
    pub by_domain: bool,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// `toy:SEED` embeds sentences with the hash embedder; `seb:PATH` looks
    /// documents up by id in a corpus.
    #[arg(long)]
    pub embedder: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub data: PathBuf,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Errors go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Usage as i32 } else { 0 };
        }
    };
    match execute(cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::Success as i32,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}

pub fn execute(command: Command, stdout: &mut impl Write) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Classify(a) => classify(a),
        Command::Inspect(a) => inspect(a, stdout),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = SynthConfig::new(a.docs, a.dim, a.m, a.rho_machine, a.rho_human, a.seed);
    cfg.nuisance = a.nuisance;
    cfg.variants = a.variants;
    let corpus = synth_corpus(&cfg)?;
    seb::write_seb(&corpus, &a.out)
}

/// Where the history of a checkpoint goes: `model.sdh` gets `model.history.jsonl`.
pub fn history_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("history.jsonl")
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let corpus = seb::read_seb(&a.data)?;
    let val = a.val.as_ref().map(seb::read_seb).transpose()?;

    let mut cfg = TrainConfig {
        batch_size: a.batch,
        epochs: a.epochs,
        grad_clip_norm: a.clip,
        cf_enabled: a.cf == Switch::On,
        seed: a.seed,
        threshold: a.threshold,
        ..Default::default()
    };
    cfg.adam.lr = a.lr;
    cfg.cf.nie_weight = a.nie_weight;
    cfg.cf.de_weight = a.de_weight;
    cfg.cf.nie_sign = if a.nie_sign == "-1" { NieSign::Minus } else { NieSign::Plus };
    cfg.cf.samples = a.samples;
    cfg.cf.detach_factual = a.detach_factual;

    let (hyper, params) = match &a.init {
        Some(path) => checkpoint::load(path)?,
        None => {
            let hyper = HyperParams {
                dim: corpus.dim,
                max_sentences: a.m,
                n_layers: a.layers,
                n_heads: a.heads,
                d_ff: a.d_ff.unwrap_or(4 * corpus.dim),
                mlp_hidden: a.mlp_hidden,
                dropout_rate: a.dropout,
                scale: AttentionScale::from_name(&a.attention_scale).expect("validated by clap"),
            };
            let params = init_params(&hyper, a.seed)?;
            (hyper, params)
        }
    };

    let (params, hist) = train_from(params, &corpus, val.as_ref(), &hyper, &cfg, |_| {})?;
    for e in &hist.epochs {
        let val = e.val.map(|m| format!(" val_acc={:.4} val_f1={:.4}", m.accuracy, m.f1)).unwrap_or_default();
        eprintln!("epoch {} loss={:.6} train_acc={:.4}{val}", e.epoch + 1, e.mean_loss, e.train_accuracy);
    }
    if hist.no_partner > 0 {
        eprintln!("{} examples had no direct-effect partner", hist.no_partner);
    }
    checkpoint::save(&a.out, &hyper, &params)?;
    let hpath = history_path(&a.out);
    let mut w = create(&hpath)?;
    history::write_history(&mut w, &hist)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(format!("writing {}", hpath.display()), e))
}

fn hyper_json(h: &HyperParams) -> Json {
    let r = checkpoint::HyperRecord::from(h);
    Json::obj([
        ("dim", Json::Int(r.dim as i64)),
        ("max_sentences", Json::Int(r.max_sentences as i64)),
        ("n_layers", Json::Int(r.n_layers as i64)),
        ("n_heads", Json::Int(r.n_heads as i64)),
        ("d_ff", Json::Int(r.d_ff as i64)),
        ("mlp_hidden", Json::Int(r.mlp_hidden as i64)),
        ("dropout_rate", Json::Num(r.dropout_rate)),
        ("attention_scale", Json::Str(r.attention_scale)),
    ])
}

/// Builds the report for `eval`. Exposed for tests.
pub fn build_report(
    model_id: String,
    hyper: &HyperParams,
    params: &sentstruct_core::encoder::ModelParams<f32>,
    corpus: &Corpus,
    task: Option<Task>,
    by_domain: bool,
    threshold: f64,
) -> Result<EvalReport, CliError> {
    let mut tasks = BTreeMap::new();
    match task {
        Some(t) => {
            tasks.insert(t.name().to_string(), evaluate(params, hyper, corpus, &t.filter(), threshold)?);
        }
        None => {
            for t in [Task::Hc3, Task::Substitution, Task::Translation, Task::Any] {
                match evaluate(params, hyper, corpus, &t.filter(), threshold) {
                    Ok(m) => {
                        tasks.insert(t.name().to_string(), m);
                    }
                    Err(CoreError::EmptySelection) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }

    let mut per_domain = BTreeMap::new();
    let breakdown_task = task.unwrap_or(Task::Any);
    if by_domain {
        let mut domains: Vec<u32> = corpus.docs.iter().map(|d| d.domain_id).collect();
        domains.sort_unstable();
        domains.dedup();
        for id in domains {
            let filter = breakdown_task.filter().with_domain(id);
            match evaluate(params, hyper, corpus, &filter, threshold) {
                Ok(m) => {
                    per_domain.insert(corpus.domain_name(id), m);
                }
                Err(CoreError::EmptySelection) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    let config = BTreeMap::from([
        ("task".to_string(), Json::Str(task.map_or("all", Task::name).into())),
        ("by_domain".to_string(), Json::Bool(by_domain)),
        ("breakdown_task".to_string(), if by_domain { Json::Str(breakdown_task.name().into()) } else { Json::Null }),
        ("threshold".to_string(), Json::Num(threshold)),
        ("corpus_docs".to_string(), Json::Int(corpus.docs.len() as i64)),
        ("hyper".to_string(), hyper_json(hyper)),
    ]);
    Ok(EvalReport {
        model_id,
        tasks,
        per_domain,
        config,
    })
}

fn eval_cmd(a: EvalArgs) -> Result<(), CliError> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(CliError::Usage("threshold must be in (0, 1)".into()));
    }
    let corpus = seb::read_seb(&a.data)?;
    let bytes = fs::read(&a.ckpt).map_err(|e| CliError::io(format!("reading {}", a.ckpt.display()), e))?;
    let (hyper, params) = checkpoint::decode(&bytes)?;
    if corpus.dim != hyper.dim {
        return Err(CliError::Data(format!(
            "corpus dim {} does not match model dim {}",
            corpus.dim, hyper.dim
        )));
    }
    let report = build_report(
        checkpoint::model_id(&bytes),
        &hyper,
        &params,
        &corpus,
        a.task,
        a.by_domain,
        a.threshold,
    )?;
    fs::write(&a.out, report.render()).map_err(|e| CliError::io(format!("writing {}", a.out.display()), e))
}

#[derive(Debug, Deserialize)]
struct TextRecord {
    id: String,
    #[serde(default)]
    text: Option<String>,
}

enum Embedder {
    Toy(u64),
    Seb(Corpus),
}

fn parse_embedder(spec: &str) -> Result<Embedder, CliError> {
    if let Some(seed) = spec.strip_prefix("toy:") {
        let seed = seed
            .parse()
            .map_err(|_| CliError::Usage(format!("bad toy seed `{seed}`")))?;
        Ok(Embedder::Toy(seed))
    } else if let Some(path) = spec.strip_prefix("seb:") {
        Ok(Embedder::Seb(seb::read_seb(path)?))
    } else {
        Err(CliError::Usage(format!("embedder must be toy:SEED or seb:PATH, got `{spec}`")))
    }
}

fn classify(a: ClassifyArgs) -> Result<(), CliError> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(CliError::Usage("threshold must be in (0, 1)".into()));
    }
    let embedder = parse_embedder(&a.embedder)?;
    let (hyper, params) = checkpoint::load(&a.ckpt)?;
    if let Embedder::Seb(c) = &embedder {
        if c.dim != hyper.dim {
            return Err(CliError::Data(format!("corpus dim {} does not match model dim {}", c.dim, hyper.dim)));
        }
    }
    let input = fs::File::open(&a.input).map_err(|e| CliError::io(format!("opening {}", a.input.display()), e))?;
    let mut out = create(&a.out)?;
    for (n, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(format!("reading {}", a.input.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TextRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("line {}: {e}", n + 1)))?;
        let doc = match &embedder {
            Embedder::Toy(seed) => {
                let text = rec
                    .text
                    .as_deref()
                    .ok_or_else(|| CliError::Data(format!("line {}: missing `text`", n + 1)))?;
                let sentences = segment_sentences(text)
                    .map_err(|e| CliError::Data(format!("line {}: {e}", n + 1)))?;
                let values: Vec<f32> = sentences
                    .sentences()
                    .iter()
                    .flat_map(|s| toy_embed(s, hyper.dim, *seed))
                    .collect();
                EmbeddedDoc::new(rec.id.clone(), Label::Human, 0, 0, VariantKind::Original, sentences.len(), values)?
            }
            Embedder::Seb(corpus) => corpus
                .docs
                .iter()
                .find(|d| d.id == rec.id && d.variant_kind == VariantKind::Original)
                .ok_or_else(|| CliError::Data(format!("line {}: id `{}` not in corpus", n + 1, rec.id)))?
                .clone(),
        };
        let padded = pad_or_truncate(&doc, hyper.max_sentences);
        let logit = forward(&params, &hyper, &padded, Mode::Eval)?.logit as f64;
        let p = sigmoid(logit);
        let label = u8::from(p >= a.threshold);
        let rec = serde_json::json!({ "id": rec.id, "p_machine": p, "label": label });
        writeln!(out, "{rec}").map_err(|e| CliError::io(format!("writing {}", a.out.display()), e))?;
    }
    out.flush().map_err(|e| CliError::io(format!("writing {}", a.out.display()), e))
}

fn inspect(a: InspectArgs, out: &mut impl Write) -> Result<(), CliError> {
    let corpus = seb::read_seb(&a.data)?;
    let w = |e| CliError::io("writing to stdout", e);
    let count = |f: &dyn Fn(&EmbeddedDoc) -> bool| corpus.docs.iter().filter(|d| f(d)).count();

    writeln!(out, "dim: {}", corpus.dim).map_err(w)?;
    writeln!(out, "docs: {}", corpus.docs.len()).map_err(w)?;
    writeln!(out, "by label:").map_err(w)?;
    for (name, label) in [("human", Label::Human), ("machine", Label::Machine)] {
        writeln!(out, "  {name}: {}", count(&|d| d.label == label)).map_err(w)?;
    }
    let mut domains: BTreeMap<u32, usize> = BTreeMap::new();
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for d in &corpus.docs {
        *domains.entry(d.domain_id).or_default() += 1;
        *lengths.entry(d.sent_count()).or_default() += 1;
    }
    writeln!(out, "by domain:").map_err(w)?;
    for (id, n) in &domains {
        writeln!(out, "  {}: {n}", corpus.domain_name(*id)).map_err(w)?;
    }
    writeln!(out, "by variant:").map_err(w)?;
    for kind in VariantKind::ALL {
        writeln!(out, "  {}: {}", kind.name(), count(&|d| d.variant_kind == kind)).map_err(w)?;
    }
    writeln!(out, "sentences per doc:").map_err(w)?;
    for (len, n) in &lengths {
        writeln!(out, "  {len}: {n}").map_err(w)?;
    }
    Ok(())
}

/// Accuracy of `task` in a rendered report.
pub fn task_accuracy(report_json: &str, task: &str) -> Option<f64> {
    let v: serde_json::Value = serde_json::from_str(report_json).ok()?;
    v["tasks"][task]["accuracy"].as_f64()
}
