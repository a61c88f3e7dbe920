use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fmgen::corpus::{ingest_jsonl, read_records};
use fmgen::eval::{self, Passages, Qrels, RunFile};
use fmgen::lm::{AnyLm, BridgeLm, BuiltinLm};
use fmgen::toy::{self, read_queries, ToyConfig};
use fmgen::training::{self, SupervisedQuery, DEFAULT_NGRAM_LEN, DEFAULT_SAMPLES};
use fmgen::{Engine, FmIndex, Mode, RetrievalConfig, WordTokenizer};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "fmgen",
    version,
    about = "Generative retrieval over an FM-index"
)]
struct Cli {
    /// Print results and errors as JSON.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a JSONL corpus of {id, title, text, page_id?} records.
    Build(BuildArgs),
    /// Retrieve documents for one query or a file of queries.
    Query(QueryArgs),
    /// Score a run file against relevance judgements.
    Eval(EvalArgs),
    /// Write training pairs for fine-tuning an external model.
    ExportTrain(ExportArgs),
    /// Generate a synthetic corpus with queries and judgements.
    GenToy(GenToyArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output index file.
    #[arg(long, env = "SEAL_INDEX")]
    index: PathBuf,
    /// Keep one suffix array sample every this many text positions.
    #[arg(long, default_value_t = fmgen::fm_index::DEFAULT_SA_RATE)]
    sa_rate: u32,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, env = "SEAL_INDEX")]
    index: PathBuf,
    /// A single query.
    #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
    text: Option<String>,
    /// JSONL file of {query_id, text}; writes a run file.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Run file destination for batch queries (stdout if absent).
    #[arg(long)]
    output: Option<PathBuf>,
    /// TOML file with retrieval settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `builtin` or `bridge:<host:port | unix:/path>`.
    #[arg(long, default_value = "builtin")]
    lm: String,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Mask decoding to attested continuations (`false` decodes freely and
    /// filters afterwards).
    #[arg(long, value_name = "BOOL")]
    constrained: Option<bool>,
    #[arg(long)]
    title_share: Option<f64>,
    /// Batch worker threads (0: one per core).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Corpus JSONL, needed for accuracy and page-level R-precision.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Cutoffs for hits@k and accuracy@k.
    #[arg(short, long, value_delimiter = ',', default_values_t = vec![1, 5, 10, 20, 100])]
    k: Vec<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Supervised queries ({query_id, text}); needs --qrels.
    #[arg(long, requires = "qrels")]
    queries: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Unsupervised pairs per document.
    #[arg(long, default_value_t = 0)]
    unsupervised_per_doc: usize,
    #[arg(long, default_value_t = DEFAULT_NGRAM_LEN)]
    ngram_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenToyArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ToyConfig::default().docs)]
    docs: usize,
    #[arg(long, default_value_t = ToyConfig::default().queries)]
    queries: usize,
    #[arg(long, default_value_t = ToyConfig::default().seed)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                println!("{}", json!({ "error": format!("{e:#}") }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build(a) => build(a, cli.json),
        Command::Query(a) => query(a, cli.json),
        Command::Eval(a) => evaluate(a, cli.json),
        Command::ExportTrain(a) => export(a, cli.json),
        Command::GenToy(a) => gen_toy(a, cli.json),
    }
}

fn build(a: BuildArgs, json: bool) -> Result<()> {
    let start = Instant::now();
    let corpus = ingest_jsonl(&a.corpus, &WordTokenizer, None)?;
    let ix = FmIndex::build(&corpus, a.sa_rate)?;
    ix.save(&a.index)?;
    let bytes = std::fs::metadata(&a.index)?.len();
    if json {
        println!(
            "{}",
            json!({
                "documents": ix.num_docs(),
                "tokens": ix.len(),
                "vocabulary": ix.alphabet_size(),
                "bytes": bytes,
                "seconds": start.elapsed().as_secs_f64(),
            })
        );
    } else {
        eprintln!(
            "indexed {} documents, {} tokens, vocabulary {} into {} ({} bytes) in {:.2?}",
            ix.num_docs(),
            ix.len(),
            ix.alphabet_size(),
            a.index.display(),
            bytes,
            start.elapsed()
        );
    }
    Ok(())
}

fn config_for(a: &QueryArgs) -> Result<RetrievalConfig> {
    let mut c = match &a.config {
        Some(p) => RetrievalConfig::load(p)?,
        None => RetrievalConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { c.$field = v; })* };
    }
    set!(
        k,
        mode,
        beam,
        steps,
        alpha,
        beta,
        constrained,
        title_share,
        threads
    );
    c.validate()?;
    Ok(c)
}

fn language_model(name: &str, ix: &FmIndex, c: &RetrievalConfig) -> Result<AnyLm> {
    if name == "builtin" {
        return Ok(AnyLm::Builtin(BuiltinLm::fit_index(
            ix,
            c.lm_order,
            c.query_boost,
        )?));
    }
    match name.strip_prefix("bridge:") {
        Some(addr) if !addr.is_empty() => {
            Ok(AnyLm::Bridge(BridgeLm::connect(addr, ix.vocabulary())?))
        }
        _ => bail!("unknown language model {name:?}; expected builtin or bridge:<address>"),
    }
}

fn query(a: QueryArgs, json: bool) -> Result<()> {
    let config = config_for(&a)?;
    let ix = FmIndex::load(&a.index)?;
    let lm = language_model(&a.lm, &ix, &config)?;
    let engine = Engine::new(ix, lm, config)?;
    let c = engine.config().clone();

    if let Some(text) = &a.text {
        let ranking = engine.retrieve(text, c.k, c.mode)?;
        let vocab = engine.index().vocabulary();
        let stdout = io::stdout();
        let mut out = stdout.lock();
        if json {
            let rows: Vec<_> = ranking
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let evidence: Vec<_> = d
                        .evidence
                        .iter()
                        .map(|e| json!({ "ngram": vocab.detokenize(&e.tokens), "weight": e.weight, "cover": e.cover }))
                        .collect();
                    json!({ "rank": i + 1, "doc_id": d.doc_id, "score": d.score, "evidence": evidence })
                })
                .collect();
            writeln!(
                out,
                "{}",
                json!({ "query": text, "mode": c.mode.as_str(), "results": rows })
            )?;
        } else {
            for (i, d) in ranking.iter().enumerate() {
                let best = d
                    .evidence
                    .first()
                    .map(|e| vocab.detokenize(&e.tokens))
                    .unwrap_or_default();
                writeln!(out, "{}\t{}\t{:.6}\t{}", i + 1, d.doc_id, d.score, best)?;
            }
        }
        return Ok(());
    }

    let path = a
        .queries
        .as_ref()
        .expect("clap requires --text or --queries");
    let queries: Vec<(String, String)> = read_queries(path)?
        .into_iter()
        .map(|q| (q.query_id, q.text))
        .collect();
    let start = Instant::now();
    let run = engine.retrieve_batch(&queries)?;
    match &a.output {
        Some(p) => run.save(p)?,
        None => run.write_tsv(&mut io::stdout().lock())?,
    }
    if json && a.output.is_some() {
        println!(
            "{}",
            json!({ "queries": queries.len(), "records": run.records.len(), "seconds": start.elapsed().as_secs_f64() })
        );
    } else {
        log::info!("{} queries in {:.2?}", queries.len(), start.elapsed());
    }
    Ok(())
}

fn evaluate(a: EvalArgs, json: bool) -> Result<()> {
    let run = RunFile::load(&a.run)?;
    let qrels = Qrels::load(&a.qrels)?;
    let passages = match &a.corpus {
        Some(p) => Some(Passages::from_records(&read_records(p)?)),
        None => None,
    };
    let report = eval::evaluate(&run, &qrels, passages.as_ref(), &a.k)?;
    if json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn supervised_queries(
    queries: &Path,
    qrels: &Path,
    vocab: &fmgen::Vocabulary,
) -> Result<Vec<SupervisedQuery>> {
    let qrels = Qrels::load(qrels)?;
    let tokenizer = WordTokenizer;
    let mut out = Vec::new();
    for q in read_queries(queries)? {
        let entry = qrels
            .get(&q.query_id)
            .with_context(|| format!("query {:?} has no judgements", q.query_id))?;
        let ids: Vec<_> = fmgen::Tokenizer::tokenize(&tokenizer, &q.text)
            .iter()
            .map(|t| vocab.id_or_unk(t))
            .collect();
        for gold in &entry.gold_doc_ids {
            out.push(SupervisedQuery {
                query: ids.clone(),
                gold_doc_id: gold.clone(),
            });
        }
    }
    Ok(out)
}

fn export(a: ExportArgs, json: bool) -> Result<()> {
    let corpus = ingest_jsonl(&a.corpus, &WordTokenizer, None)?;
    let mut pairs = Vec::new();
    if let (Some(q), Some(r)) = (&a.queries, &a.qrels) {
        let queries = supervised_queries(q, r, corpus.vocabulary())?;
        pairs.extend(training::export_training_pairs(
            &corpus,
            &queries,
            a.samples,
            a.ngram_len,
            a.seed,
        )?);
    }
    if a.unsupervised_per_doc > 0 {
        pairs.extend(training::export_unsupervised_pairs(
            &corpus,
            a.unsupervised_per_doc,
            a.ngram_len,
            a.seed.wrapping_add(1),
        )?);
    }
    if pairs.is_empty() {
        bail!("nothing to export: pass --queries/--qrels or --unsupervised-per-doc");
    }
    let file =
        File::create(&a.output).with_context(|| format!("cannot create {}", a.output.display()))?;
    let mut out = BufWriter::new(file);
    training::write_jsonl(&pairs, &mut out)?;
    out.flush()?;
    // the vocabulary lets a trainer map ids back to words
    let vocab_path = a.output.with_extension("vocab");
    corpus.vocabulary().save(&vocab_path)?;
    if json {
        println!(
            "{}",
            json!({ "pairs": pairs.len(), "vocabulary": vocab_path })
        );
    } else {
        eprintln!("wrote {} pairs to {}", pairs.len(), a.output.display());
    }
    Ok(())
}

fn gen_toy(a: GenToyArgs, json: bool) -> Result<()> {
    let data = toy::generate(&ToyConfig {
        docs: a.docs,
        queries: a.queries,
        seed: a.seed,
        ..Default::default()
    });
    data.write(&a.out)?;
    if json {
        println!(
            "{}",
            json!({ "documents": data.records.len(), "queries": data.queries.len() })
        );
    } else {
        eprintln!(
            "wrote {} documents and {} queries to {}",
            data.records.len(),
            data.queries.len(),
            a.out.display()
        );
    }
    Ok(())
}
