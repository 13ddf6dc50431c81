//! `fnname`: the function-name prediction pipeline, one stage per subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fnname_core::encoder::EncoderConfig;
use fnname_core::ingest::{normalize_record, parse_function_records, split_by_source, write_function_records, FunctionRecord};
use fnname_core::label_relations::{build_relation_groups, train_skipgram, train_subword_embeddings, EmbedConfig, ExternalRelations, ReviewList};
use fnname_core::metrics::{evaluate, read_label_tsv, EvalOptions};
use fnname_core::name_tokenizer::{read_corpus, Pipeline};
use fnname_core::pretrain_data::{generate, PretrainConfig, Task};
use fnname_core::synthetic::synthetic_dataset;
use fnname_core::tasks::{HeadConfig, NameVocabulary};
use fnname_core::trainer::{load_checkpoint, save_checkpoint, toy_grad_check, train_fold, Ablation, FoldData, LossPath, TrainConfig};
use fnname_core::Exec;

#[derive(Parser)]
#[command(name = "fnname", version, about = "Predict function names for stripped binaries")]
struct Cli {
    /// Seed for every randomized stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-record stages.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate (and optionally normalize) function records, or generate synthetic ones.
    Ingest(IngestArgs),
    /// Split raw function names into labels.
    Tokenize(TokenizeArgs),
    /// Group labels into canonical forms.
    Relate(RelateArgs),
    /// Generate assembly language-model pretraining samples.
    PretrainData(PretrainDataArgs),
    /// Pretrain and fine-tune a model on one fold.
    Train(TrainArgs),
    /// Predict names with a trained model.
    Predict(PredictArgs),
    /// Score two functions with the similarity head.
    Similarity(SimilarityArgs),
    /// Word-level precision, recall and F1 of predictions.
    Evaluate(EvaluateArgs),
    /// Compare analytic and numeric gradients on the toy model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// JSONL function records.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Generate this many synthetic source functions instead of reading input.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Optimization variants per synthetic source.
    #[arg(long, default_value_t = 3)]
    variants: usize,
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write source-grouped folds as JSON.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
}

#[derive(Args)]
struct TokenizeArgs {
    /// One raw name per line.
    #[arg(long)]
    names: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Expand abbreviations and stem the labels.
    #[arg(long)]
    preprocess: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RelateArgs {
    /// Labels, one per line (extra TSV columns ignored).
    #[arg(long)]
    vocab: PathBuf,
    /// Tokenized names for embedding training; the bundled corpus by default.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// TSV pairs treated as related.
    #[arg(long)]
    external: Option<PathBuf>,
    /// Allow/deny list for candidate pairs.
    #[arg(long)]
    review: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Infill,
    Cdi,
    Dui,
}

#[derive(Args)]
struct PretrainDataArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// key=value training config; toy settings when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSONL function records; the synthetic toy dataset when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    sources: usize,
    #[arg(long, default_value_t = 3)]
    variants: usize,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value = "none")]
    ablate: String,
    /// Use the printed ranking-loss sign instead of the goal-consistent one.
    #[arg(long)]
    paper_literal_jcs: bool,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long, default_value = "checkpoint")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Name vocabulary TSV replacing the checkpoint's.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write preprocessed gold labels with arch and opt columns.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct SimilarityArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSONL records holding both functions.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Comma-separated truth columns, e.g. `arch,opt`.
    #[arg(long, value_delimiter = ',')]
    group_by: Vec<String>,
    /// Count duplicate predicted labels separately.
    #[arg(long)]
    literal_counts: bool,
    /// Training label vocabulary for the OOV ratio (first column per line).
    #[arg(long)]
    train_vocab: Option<PathBuf>,
    /// Label TSV of a reference dataset for the KL block.
    #[arg(long)]
    kl_reference: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Loss path, or `all`.
    #[arg(long, default_value = "all")]
    path: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let jobs = cli.jobs;
    match fnname_core::exec::with_jobs(jobs, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = Exec::from_jobs(cli.jobs);
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(a) => ingest(a, seed.unwrap_or(0)),
        Command::Tokenize(a) => tokenize(a, exec),
        Command::Relate(a) => relate(a, seed.unwrap_or(1)),
        Command::PretrainData(a) => pretrain_data(a, seed.unwrap_or(0), exec),
        Command::Train(a) => train(a, seed, exec),
        Command::Predict(a) => predict(a, exec),
        Command::Similarity(a) => similarity(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Gradcheck(a) => gradcheck(a, seed.unwrap_or(1)),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing stdout"),
    }
}

fn ingest(a: IngestArgs, seed: u64) -> Result<()> {
    let mut records = match (&a.input, a.synthetic) {
        (Some(p), _) => parse_function_records(p)?,
        (None, Some(n)) => synthetic_dataset(n, a.variants, seed),
        (None, None) => bail!("give --input or --synthetic"),
    };
    if a.normalize {
        records = records.iter().map(normalize_record).collect();
    }
    write_function_records(&a.out, &records)?;
    log::info!("wrote {} records to {}", records.len(), a.out.display());
    if let Some(p) = &a.splits {
        let splits = split_by_source(&records, a.folds, seed)?;
        fs::write(p, serde_json::to_string_pretty(&splits)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn tokenize(a: TokenizeArgs, exec: Exec) -> Result<()> {
    let pipeline = Pipeline::from_optional_files(a.corpus.as_deref(), a.lexicon.as_deref())?;
    let text = fs::read_to_string(&a.names).with_context(|| format!("reading {}", a.names.display()))?;
    let names: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
    let rows = exec.try_map(&names, |n| {
        let labels = if a.preprocess { pipeline.preprocess(n)? } else { pipeline.tokenize_name(n)?.labels };
        Ok::<_, fnname_core::Error>(format!("{n}\t{}\n", labels.join(" ")))
    })?;
    write_out(a.out.as_deref(), &rows.concat())
}

fn relate(a: RelateArgs, seed: u64) -> Result<()> {
    let text = fs::read_to_string(&a.vocab).with_context(|| format!("reading {}", a.vocab.display()))?;
    let vocab: Vec<String> = text
        .lines()
        .filter_map(|l| l.split('\t').next())
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('<'))
        .map(str::to_string)
        .collect();
    let corpus = match &a.corpus {
        Some(p) => read_corpus(p)?,
        None => fnname_core::name_tokenizer::bundled_corpus(),
    };
    let cfg = EmbedConfig { seed, epochs: a.epochs, ..EmbedConfig::default() };
    let sg = train_skipgram(&corpus, &cfg)?;
    let sw = train_subword_embeddings(&corpus, &cfg)?;
    let external = a.external.as_deref().map(ExternalRelations::load).transpose()?;
    let review = match &a.review {
        Some(p) => {
            let t = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(ReviewList::parse(&t, p)?)
        }
        None => None,
    };
    let lex = build_relation_groups(&vocab, Some((&sg, &sw)), external.as_ref(), review.as_ref())?;
    write_out(Some(&a.out), &lex.to_tsv())
}

fn pretrain_data(a: PretrainDataArgs, seed: u64, exec: Exec) -> Result<()> {
    let records = parse_function_records(&a.input)?;
    let task = match a.task {
        TaskArg::Infill => Task::Infill,
        TaskArg::Cdi => Task::Cdi,
        TaskArg::Dui => Task::Dui,
    };
    let samples = generate(&records, task, &PretrainConfig::default(), seed, exec)?;
    let mut out = String::new();
    for s in &samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    write_out(Some(&a.out), &out)
}

/// Records paired with their preprocessed gold labels; records whose name
/// yields no label are dropped.
fn labelled(records: Vec<FunctionRecord>, pipeline: &Pipeline, exec: Exec) -> Result<(Vec<FunctionRecord>, Vec<Vec<String>>)> {
    let labels = exec.map(&records, |r| pipeline.preprocess(&r.name));
    let mut recs = Vec::new();
    let mut out = Vec::new();
    for (r, l) in records.into_iter().zip(labels) {
        match l {
            Ok(l) if !l.is_empty() => {
                recs.push(r);
                out.push(l);
            }
            _ => log::warn!("skipping `{}`: name `{}` yields no labels", r.id, r.name),
        }
    }
    Ok((recs, out))
}

fn train(a: TrainArgs, seed: Option<u64>, exec: Exec) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::toy(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.paper_literal_jcs |= a.paper_literal_jcs;
    cfg.validate()?;
    if a.fold >= cfg.folds {
        bail!("fold {} out of range for {} folds", a.fold, cfg.folds);
    }
    let ablation: Ablation = a.ablate.parse()?;
    let records = match &a.input {
        Some(p) => parse_function_records(p)?,
        None => synthetic_dataset(a.sources, a.variants, cfg.seed),
    };
    let pipeline = Pipeline::from_optional_files(a.corpus.as_deref(), a.lexicon.as_deref())?;
    let (records, labels) = labelled(records, &pipeline, exec)?;
    let splits = split_by_source(&records, cfg.folds, cfg.seed)?;
    let split = &splits[a.fold];
    let (enc, mut heads) = if cfg.toy { (EncoderConfig::toy(), HeadConfig::toy()) } else { (EncoderConfig::default(), HeadConfig::default()) };
    heads.max_name_len = cfg.max_name_len;
    let data = FoldData { records: &records, labels: &labels, split };
    let (model, store, report) = train_fold(data, enc, heads, &cfg, ablation, exec)?;
    save_checkpoint(&a.out, &model, &store, Some(&cfg))?;
    let rp = a.out.join("report.json");
    fs::write(&rp, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", rp.display()))?;
    let sp = a.out.join("split.json");
    fs::write(&sp, serde_json::to_string_pretty(split)? + "\n").with_context(|| format!("writing {}", sp.display()))?;
    println!(
        "trained fold {} for {} steps; best validation F1 {}; checkpoint in {}",
        a.fold,
        report.multitask.steps,
        report.multitask.best_valid_f1.map_or("n/a".to_string(), |f| format!("{f:.4}")),
        a.out.display()
    );
    Ok(())
}

fn predict(a: PredictArgs, exec: Exec) -> Result<()> {
    let (mut model, store) = load_checkpoint(&a.model)?;
    if let Some(v) = &a.vocab {
        let names = NameVocabulary::load(v)?;
        if names.len() != model.names.len() {
            bail!("vocabulary {} has {} labels, the model was trained with {}", v.display(), names.len(), model.names.len());
        }
        model.names = names;
    }
    let records = parse_function_records(&a.input)?;
    let rows = exec.try_map(&records, |r| {
        let labels = model.predict_name(&store, r, a.max_len)?;
        Ok::<_, fnname_core::Error>(format!("{}\t{}\n", r.id, labels.join(" ")))
    })?;
    write_out(a.out.as_deref(), &format!("id\tlabels\n{}", rows.concat()))?;
    if let Some(p) = &a.truth_out {
        let pipeline = Pipeline::from_optional_files(a.corpus.as_deref(), a.lexicon.as_deref())?;
        let gold = exec.try_map(&records, |r| {
            let l = pipeline.preprocess(&r.name)?;
            Ok::<_, fnname_core::Error>(format!("{}\t{}\t{}\t{}\n", r.id, l.join(" "), r.arch.as_str(), r.opt.as_str()))
        })?;
        write_out(Some(p), &format!("id\tlabels\tarch\topt\n{}", gold.concat()))?;
    }
    Ok(())
}

fn similarity(a: SimilarityArgs) -> Result<()> {
    let (model, store) = load_checkpoint(&a.model)?;
    let records = parse_function_records(&a.input)?;
    let find = |id: &str| records.iter().find(|r| r.id == id).with_context(|| format!("no record `{id}` in {}", a.input.display()));
    let score = model.similarity(&store, find(&a.a)?, find(&a.b)?)?;
    println!("{score:.6}");
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let pred = read_label_tsv(&a.pred)?;
    let truth = read_label_tsv(&a.truth)?;
    let train_vocab: Option<BTreeSet<String>> = match &a.train_vocab {
        Some(p) => {
            let t = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(
                t.lines()
                    .filter_map(|l| l.split('\t').next())
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('<'))
                    .map(str::to_string)
                    .collect(),
            )
        }
        None => None,
    };
    let reference = a.kl_reference.as_deref().map(read_label_tsv).transpose()?;
    let opts = EvalOptions {
        group_by: a.group_by.iter().filter(|g| !g.is_empty()).cloned().collect(),
        literal_counts: a.literal_counts,
        train_vocab: train_vocab.as_ref(),
        kl_reference: reference.as_deref(),
    };
    let report = evaluate(&pred, &truth, &opts)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(p) = &a.out {
        write_out(Some(p), &json)?;
    }
    println!("P {:.4} R {:.4} F1 {:.4} over {} functions", report.overall.precision, report.overall.recall, report.overall.f1, report.functions);
    Ok(())
}

fn gradcheck(a: GradcheckArgs, seed: u64) -> Result<()> {
    let paths: Vec<LossPath> = if a.path == "all" { LossPath::ALL.to_vec() } else { vec![a.path.parse()?] };
    let mut failed = BTreeMap::new();
    for p in paths {
        let r = toy_grad_check(p, seed)?;
        println!(
            "{:<16} coords {:>3}  max rel err {:.3e}  (unfiltered {:.3e}, kinks {}, below resolution {})  {}",
            r.path,
            r.coords_checked,
            r.max_relative_error,
            r.max_relative_error_unfiltered,
            r.kinks_skipped,
            r.below_resolution,
            if r.passed() { "ok" } else { "FAIL" }
        );
        if !r.passed() {
            failed.insert(r.path.clone(), r.max_relative_error);
        }
    }
    if !failed.is_empty() {
        bail!("gradient check failed for {:?}", failed.keys().collect::<Vec<_>>());
    }
    Ok(())
}
