//! Command-line front end. Every subcommand writes its primary output to
//! stdout; the effective configuration and diagnostics go to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::adversarial::{
    adversarial_search, train_discriminator, AsmConfig, DiscTrainConfig, Discriminator, DiscriminatorSpec,
    ExternalDiscriminator, FfnDiscriminator, SearchSpace,
};
use crate::corpus::{compute_corpus_stats, read_corpus, write_corpus, Corpus};
use crate::curation::{curate, GateConfig, PullRequest};
use crate::depgraph::{graph_for_units, DepGraph};
use crate::encoder::{load_model, save_model, Model, SharingMode};
use crate::error::{Error, Result};
use crate::evaluation::{ablate, evaluate, gold_from_corpus, AblationAxes, Retriever};
use crate::retrieval::{aggregate, build_index, load_index, save_index, top_k_with_injection, Granularity, Index, RetrievalConfig};
use crate::synthetic::{self, SyntheticConfig};
use crate::training::{loss_trace_csv, train, TrainConfig};

pub const SEED_ENV: &str = "REPOALIGN_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(name = "repoalign", version, about = "Change-request to code retrieval toolkit")]
struct Cli {
    /// Global seed; overrides the config file and REPOALIGN_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON or TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write templated pull requests as JSONL.
    Synth(SynthArgs),
    /// Filter pull requests and align diffs into a corpus.
    Curate(CurateArgs),
    /// Per-repository patch and problem length statistics.
    Stats(CorpusArg),
    /// Dependency edges among the corpus units.
    Graph(CorpusArg),
    /// Train the dual encoder.
    Train(TrainArgs),
    /// Embed the corpus into a retrieval index.
    Index(IndexArgs),
    /// Rank candidates for one query.
    Retrieve(RetrieveArgs),
    /// Evaluate retrieval against the aligned pairs.
    Eval(EvalArgs),
    /// Train and evaluate a grid of variants.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    noise: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CurateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Minimum complexity change for a pull request to count as non-trivial.
    #[arg(long)]
    threshold: Option<u32>,
}

#[derive(Args, Debug)]
struct CorpusArg {
    #[arg(long)]
    corpus: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Parameter file; the vocabulary, discriminator and loss trace are
    /// written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    mode: Option<SharingMode>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    lambda_align: Option<f64>,
    #[arg(long)]
    lambda_adv: Option<f64>,
    #[arg(long)]
    freeze_token_embeddings: bool,
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = Granularity::Function)]
    granularity: Granularity,
}

#[derive(Args, Debug, Clone)]
struct AdversarialArgs {
    /// Verify candidates with a discriminator.
    #[arg(long)]
    adversarial: bool,
    /// `builtin` or `external:<endpoint>`.
    #[arg(long, default_value = "builtin")]
    disc: String,
    /// Built-in discriminator weights; defaults to `<params>.disc`.
    #[arg(long)]
    disc_params: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    disc_timeout_ms: u64,
}

#[derive(Args, Debug)]
struct RetrieveArgs {
    #[arg(long, required = true)]
    index: PathBuf,
    #[arg(long, required = true)]
    params: PathBuf,
    #[arg(long, required = true)]
    query: String,
    #[arg(long)]
    k: Option<usize>,
    /// Defaults to the index granularity. A coarser granularity needs a
    /// function-level index and `--corpus`.
    #[arg(long)]
    granularity: Option<Granularity>,
    /// Source text and dependency graph for adversarial search.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    adv: AdversarialArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    top_n: Option<usize>,
    #[command(flatten)]
    adv: AdversarialArgs,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Defaults to the 64-pair synthetic suite.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Comma-separated subset of `sharing,adversarial`.
    #[arg(long, value_delimiter = ',', default_value = "sharing")]
    axes: Vec<String>,
    /// Number of seeds; the first is the global seed.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Explicit seeds, overriding `--seeds`.
    #[arg(long, value_delimiter = ',')]
    seed_list: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    lambda_align: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    lambda_adv: Vec<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub cutoff: usize,
    pub top_n: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { cutoff: 10, top_n: 5 }
    }
}

/// Settings merged from defaults, the config file, REPOALIGN_SEED and flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub seed: Option<u64>,
    pub gates: GateConfig,
    pub train: TrainConfig,
    pub retrieval: RetrievalConfig,
    pub asm: AsmConfig,
    pub eval: EvalSettings,
}

impl AppConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        if is_toml {
            toml::from_str(&text).map_err(|e| Error::Parse {
                line: 0,
                message: format!("{}: {e}", path.display()),
            })
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                message: format!("{}: {e}", path.display()),
            })
        }
    }

    /// Resolves the seed: flag, then config file, then the environment, then
    /// the built-in default.
    pub fn resolve_seed(&mut self, flag: Option<u64>, env: Option<&str>) -> Result<u64> {
        let env_seed = env
            .map(|v| {
                v.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::domain(format!("{SEED_ENV} must be an unsigned integer, got {v:?}")))
            })
            .transpose()?;
        let seed = flag.or(self.seed).or(env_seed).unwrap_or(DEFAULT_SEED);
        self.seed = Some(seed);
        self.train.seed = seed;
        Ok(seed)
    }
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Runs the CLI with process stdout and stderr; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Exit codes: 0 success, 1 domain or I/O error, 2 usage error.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = if cli.jobs == 0 {
        Err(Failure::Usage("--jobs must be at least 1".into()))
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
            Ok(pool) => {
                let (mut o, mut e) = (Vec::new(), Vec::new());
                let r = pool.install(|| dispatch(&cli, &mut o, &mut e));
                let _ = out.write_all(&o);
                let _ = err.write_all(&e);
                r
            }
            Err(e) => Err(Failure::Domain(Error::domain(e.to_string()))),
        }
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Domain(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<AppConfig> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::from_file(p)?,
        None => AppConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    cfg.resolve_seed(cli.seed, env.as_deref())?;
    Ok(cfg)
}

fn echo_config(err: &mut dyn Write, cfg: &AppConfig) {
    let _ = writeln!(err, "effective config: {}", serde_json::to_string(cfg).expect("config serializes"));
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth(a) => {
            echo_config(err, &cfg);
            let prs = synthetic::pull_requests(&SyntheticConfig {
                pairs: a.pairs,
                noise: a.noise,
                seed: cfg.train.seed,
            })?;
            let mut text = String::new();
            for pr in &prs {
                text.push_str(&serde_json::to_string(pr).expect("pull request serializes"));
                text.push('\n');
            }
            write_file(&a.out, &text)?;
            write_out(out, &format!("wrote {} pull requests to {}\n", prs.len(), a.out.display()))?;
        }
        Command::Curate(a) => {
            if let Some(t) = a.threshold {
                cfg.gates.complexity_threshold = t;
            }
            echo_config(err, &cfg);
            let prs = read_pull_requests(&a.input)?;
            let result = curate(&prs, &cfg.gates)?;
            write_corpus(&result.corpus, &a.out)?;
            let mut text = String::from("repo,pr_id,passed,stage,units,reason\n");
            for d in &result.decisions {
                text.push_str(&format!("{},{},{},{},{},{}\n", d.repo, d.pr_id, d.passed, d.stage, d.units, d.reason));
            }
            write_out(out, &text)?;
        }
        Command::Stats(a) => {
            echo_config(err, &cfg);
            let corpus = read_corpus(&a.corpus)?;
            write_out(out, &compute_corpus_stats(&corpus).table())?;
        }
        Command::Graph(a) => {
            echo_config(err, &cfg);
            let corpus = read_corpus(&a.corpus)?;
            write_out(out, &graph_for_units(corpus.units()).edge_list())?;
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            macro_rules! set {
                ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { t.$field = v; })* };
            }
            set!(epochs => epochs, lr => lr, batch_size => batch_size, mode => mode, dim => d, layers => layers,
                heads => heads, lambda_align => lambda_align, lambda_adv => lambda_adv);
            if a.freeze_token_embeddings {
                t.freeze_token_embeddings = true;
            }
            echo_config(err, &cfg);
            let corpus = read_corpus(&a.corpus)?;
            let trained = train(&corpus, &cfg.train)?;
            save_model(&trained.model, &a.out)?;
            if let Some(d) = &trained.discriminator {
                d.save(sibling(&a.out, ".disc"))?;
            }
            let csv = loss_trace_csv(&trained.loss_trace);
            write_file(&sibling(&a.out, ".loss.csv"), &csv)?;
            write_out(out, &csv)?;
        }
        Command::Index(a) => {
            echo_config(err, &cfg);
            let corpus = read_corpus(&a.corpus)?;
            let model = load_model(&a.params)?;
            let index = build_index(&corpus, &model, a.granularity)?;
            save_index(&index, &a.out)?;
            write_out(
                out,
                &format!("indexed {} {} candidates into {}\n", index.len(), a.granularity, a.out.display()),
            )?;
        }
        Command::Retrieve(a) => {
            if let Some(k) = a.k {
                cfg.retrieval.k = k;
            }
            echo_config(err, &cfg);
            let model = load_model(&a.params)?;
            let corpus = a.corpus.as_ref().map(read_corpus).transpose()?;
            let index = load_index(&a.index)?;
            let index = regranulate(index, a.granularity, corpus.as_ref())?;
            let ranked = if a.adv.adversarial {
                let corpus = corpus.as_ref().ok_or_else(|| Failure::Usage("--adversarial needs --corpus".into()))?;
                if index.granularity != Granularity::Function {
                    return Err(Failure::Usage("--adversarial works on function-level candidates".into()));
                }
                crate::retrieval::check_fresh(&index, &model)?;
                let graph = graph_for_units(corpus.units());
                let disc = load_discriminator(&a.adv, &a.params, corpus, &model, &graph, cfg.train.seed)?;
                let h_q = model.embed_text(&a.query)?;
                let space = SearchSpace {
                    index: &index,
                    graph: &graph,
                    corpus: Some(corpus),
                };
                adversarial_search(&a.query, &h_q, &space, disc.as_ref(), &cfg.retrieval, &cfg.asm)?.ranked
            } else {
                crate::retrieval::check_fresh(&index, &model)?;
                top_k_with_injection(&model.embed_text(&a.query)?, &index, &cfg.retrieval, &[])?
            };
            let json = serde_json::to_string_pretty(&ranked).expect("ranked list serializes");
            write_out(out, &(json + "\n"))?;
        }
        Command::Eval(a) => {
            if let Some(c) = a.cutoff {
                cfg.eval.cutoff = c;
            }
            if let Some(n) = a.top_n {
                cfg.eval.top_n = n;
            }
            echo_config(err, &cfg);
            let corpus = read_corpus(&a.corpus)?;
            let model = load_model(&a.params)?;
            let index = load_index(&a.index)?;
            let graph = graph_for_units(corpus.units());
            let disc = if a.adv.adversarial {
                if index.granularity != Granularity::Function {
                    return Err(Failure::Usage("--adversarial works on function-level candidates".into()));
                }
                Some(load_discriminator(&a.adv, &a.params, &corpus, &model, &graph, cfg.train.seed)?)
            } else {
                None
            };
            let retriever = Retriever {
                model: &model,
                index: &index,
                config: cfg.retrieval,
                adversarial: disc.as_ref().map(|d| (d.as_ref(), &graph, cfg.asm)),
                corpus: Some(&corpus),
            };
            let gold = gold_from_corpus(&corpus, index.granularity);
            let report = evaluate(
                &corpus,
                &gold,
                |r| retriever.ranked_ids(&r.problem_text),
                cfg.eval.cutoff,
                cfg.eval.top_n,
            )?;
            write_out(out, &report.to_json())?;
            if let Some(qpm) = report.queries_per_minute {
                let _ = writeln!(err, "queries_per_minute: {qpm:.1}");
            }
        }
        Command::Ablate(a) => {
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            echo_config(err, &cfg);
            let mut axes = AblationAxes {
                lambda_align: a.lambda_align.clone(),
                lambda_adv: a.lambda_adv.clone(),
                ..AblationAxes::default()
            };
            for axis in &a.axes {
                match axis.trim() {
                    "sharing" => axes.modes = SharingMode::ALL.to_vec(),
                    "adversarial" => axes.adversarial = vec![true, false],
                    "" => {}
                    other => return Err(Failure::Usage(format!("unknown ablation axis {other:?}; use sharing,adversarial"))),
                }
            }
            let seeds: Vec<u64> = if !a.seed_list.is_empty() {
                a.seed_list.clone()
            } else if a.seeds == 0 {
                return Err(Failure::Usage("--seeds must be at least 1".into()));
            } else {
                let base = cfg.train.seed;
                std::iter::once(base)
                    .chain((1..a.seeds).map(|i| crate::derive_seed(base, &format!("ablation-{i}"))))
                    .collect()
            };
            let corpus = match &a.corpus {
                Some(p) => read_corpus(p)?,
                None => synthetic::corpus(64, cfg.train.seed)?,
            };
            let table = ablate(
                &corpus,
                &axes.variants(),
                &seeds,
                &cfg.train,
                &cfg.retrieval,
                &cfg.asm,
                cfg.eval.cutoff,
                cfg.eval.top_n,
            )?;
            write_out(out, &table.to_csv())?;
        }
    }
    Ok(())
}

fn read_pull_requests(path: &Path) -> Result<Vec<PullRequest>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Rebuilds a function-level index at a coarser granularity.
fn regranulate(index: Index, wanted: Option<Granularity>, corpus: Option<&Corpus>) -> std::result::Result<Index, Failure> {
    let Some(wanted) = wanted.filter(|g| *g != index.granularity) else {
        return Ok(index);
    };
    let Some(corpus) = corpus.filter(|_| index.granularity == Granularity::Function) else {
        return Err(Failure::Usage(format!(
            "index holds {} candidates; --granularity {wanted} needs a function-level index and --corpus",
            index.granularity
        )));
    };
    let units = corpus
        .units()
        .map(|u| {
            index
                .get(&u.id)
                .map(|e| (u, e.clone()))
                .ok_or_else(|| Error::Stale(format!("unit {} is missing from the index", u.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(wanted, &index.params_digest, &units)?)
}

fn load_discriminator(
    a: &AdversarialArgs,
    params: &Path,
    corpus: &Corpus,
    model: &Model,
    graph: &DepGraph,
    seed: u64,
) -> std::result::Result<Box<dyn Discriminator>, Failure> {
    let spec: DiscriminatorSpec = a.disc.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    match spec {
        DiscriminatorSpec::External(endpoint) => Ok(Box::new(ExternalDiscriminator::connect(
            &endpoint,
            Duration::from_millis(a.disc_timeout_ms),
        )?)),
        DiscriminatorSpec::Builtin => {
            let path = a.disc_params.clone().unwrap_or_else(|| sibling(params, ".disc"));
            let disc = if path.exists() {
                FfnDiscriminator::load(&path)?
            } else {
                let cfg = DiscTrainConfig {
                    seed: crate::derive_seed(seed, "discriminator"),
                    ..DiscTrainConfig::default()
                };
                train_discriminator(corpus, model, graph, &cfg)?.0
            };
            Ok(Box::new(disc))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(std::iter::once("repoalign").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        let (code, _, err) = run_capture(&[]);
        assert_eq!(code, 2);
        assert!(err.contains("Usage"));
        let (code, _, err) = run_capture(&["retrieve", "--params", "p", "--query", "q"]);
        assert_eq!(code, 2);
        assert!(err.contains("--index"));
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn domain_errors_exit_one() {
        let (code, _, err) = run_capture(&["stats", "--corpus", "/nonexistent/corpus.jsonl"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("effective config") && err.contains("error:"));
    }

    #[test]
    fn seed_precedence() {
        let mut cfg = AppConfig::default();
        assert_eq!(cfg.resolve_seed(None, None).unwrap(), DEFAULT_SEED);
        let mut cfg = AppConfig::default();
        assert_eq!(cfg.resolve_seed(None, Some("9")).unwrap(), 9);
        let mut cfg = AppConfig {
            seed: Some(5),
            ..AppConfig::default()
        };
        assert_eq!(cfg.clone().resolve_seed(None, Some("9")).unwrap(), 5);
        assert_eq!(cfg.resolve_seed(Some(7), Some("9")).unwrap(), 7);
        assert_eq!(cfg.train.seed, 7);
        assert!(AppConfig::default().resolve_seed(None, Some("x")).is_err());
    }

    #[test]
    fn config_files_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(&toml_path, "seed = 3\n[train]\nepochs = 4\n[eval]\ncutoff = 20\n").unwrap();
        let c = AppConfig::from_file(&toml_path).unwrap();
        assert_eq!((c.seed, c.train.epochs, c.eval.cutoff, c.eval.top_n), (Some(3), 4, 20, 5));
        assert_eq!(c.train.lr, TrainConfig::default().lr);
        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, r#"{"retrieval": {"k": 7}}"#).unwrap();
        let c = AppConfig::from_file(&json_path).unwrap();
        assert_eq!((c.retrieval.k, c.retrieval.tau), (7, 10.0));
        std::fs::write(&json_path, "{").unwrap();
        assert!(AppConfig::from_file(&json_path).is_err());
    }
}
