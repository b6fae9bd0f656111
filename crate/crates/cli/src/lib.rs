//! The `coterm` command line: index building, jobs, the scheduler service,
//! simulation, benchmarks and synthetic corpora.

pub mod bench;
pub mod serve;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use coterm::config::{ConfigError, KvFile};
use coterm::controller::{execute_job, load_pairs, Config, ControllerError};
use coterm::cooccur::PairedTerm;
use coterm::corpus::load_resource;
use coterm::gen::{generate_pairs, render_pairs, write_corpus, CorpusSpec};
use coterm::index::{unique_terms, InvertedIndex};
use coterm::sim::{run_scenario, verify_bounds, Scenario, SimReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DEGRADED: i32 = 1;
pub const EXIT_ABORT: i32 = 2;

pub const SCHEDULER_URL_ENV: &str = "COTERM_SCHEDULER_URL";

#[derive(Parser, Debug)]
#[command(name = "coterm", version, about = "Term co-occurrence search with a shared result scheduler")]
pub struct Cli {
    /// Configuration file (`key = value` lines)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log progress to stderr
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build and cache postings for the terms of a job's pair list
    Index,
    /// Run a job and write its results file
    Run,
    /// Serve the global scheduler
    Serve {
        /// Listen address, overriding the config
        #[arg(long)]
        listen: Option<String>,
        /// Store file, overriding the config
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Run a multi-cluster simulation scenario
    Simulate {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Time indexed evaluation against the naive scan and across worker counts
    Bench,
    /// Write a synthetic corpus with a Zipf vocabulary
    GenCorpus {
        #[arg(long)]
        docs: usize,
        #[arg(long)]
        vocab: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write a pair list drawn from the most frequent words
        #[arg(long)]
        pairs_out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n_pairs: usize,
        #[arg(long, default_value_t = 1000)]
        pair_top: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

fn fail(msg: impl std::fmt::Display) -> i32 {
    eprintln!("coterm: {msg}");
    EXIT_ABORT
}

fn require_config(cli: &Cli) -> Result<&Path, i32> {
    cli.config.as_deref().ok_or_else(|| fail("--config is required for this command"))
}

/// Reads a job config, letting the environment override the scheduler URL.
pub fn load_job_config(path: &Path) -> Result<Config, ConfigError> {
    let mut kv = KvFile::load(path)?;
    if let Ok(url) = std::env::var(SCHEDULER_URL_ENV) {
        if !url.is_empty() {
            kv.set("scheduler_url", url);
        }
    }
    Config::from_kv(&kv)
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ABORT } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match &cli.command {
        Command::Index => cmd_index(&cli),
        Command::Run => cmd_run(&cli),
        Command::Serve { listen, store } => serve::cmd_serve(cli.config.as_deref(), listen.as_deref(), store.as_deref()),
        Command::Simulate { format } => cmd_simulate(&cli, *format),
        Command::Bench => cmd_bench(&cli),
        Command::GenCorpus {
            docs,
            vocab,
            seed,
            out,
            pairs_out,
            n_pairs,
            pair_top,
        } => cmd_gen_corpus(*docs, *vocab, *seed, out, pairs_out.as_deref(), *n_pairs, *pair_top),
    }
}

fn cmd_index(cli: &Cli) -> i32 {
    let path = match require_config(cli) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let result = (|| -> Result<(PathBuf, usize), ControllerError> {
        let config = load_job_config(path)?;
        let corpus = load_resource(&config.resource_path, config.granularity)?;
        let pairs = load_pairs(&config.pair_list_path)?;
        let paired: Vec<PairedTerm> = pairs
            .iter()
            .filter_map(|p| PairedTerm::new(&p.a, &p.b, config.case_mode).ok())
            .collect();
        let terms = unique_terms(&paired);
        let index = InvertedIndex::new(&corpus, config.case_mode);
        index.materialize(&corpus, terms.iter().map(String::as_str), config.workers)?;
        let dir = config.index_dir();
        std::fs::create_dir_all(&dir).map_err(|source| ControllerError::Io {
            path: dir.clone(),
            source,
        })?;
        let out = dir.join(index.cache_file_name());
        index.write_cache(&corpus, &out)?;
        Ok((out, index.len()))
    })();
    match result {
        Ok((out, n)) => {
            println!("{}\t{n} terms", out.display());
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

fn cmd_run(cli: &Cli) -> i32 {
    let path = match require_config(cli) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let config = match load_job_config(path) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match execute_job(&config) {
        Ok(report) => {
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            if report.degraded {
                EXIT_DEGRADED
            } else {
                EXIT_OK
            }
        }
        Err(e) => fail(e),
    }
}

fn cmd_simulate(cli: &Cli, format: Format) -> i32 {
    let scenario = match cli.config.as_deref() {
        Some(path) => match Scenario::load(path) {
            Ok(s) => s,
            Err(e) => return fail(e),
        },
        None => Scenario::default(),
    };
    let report = match run_scenario(&scenario) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
        Format::Tsv => {
            println!("{}", SimReport::tsv_header());
            println!("{}", report.tsv_row());
        }
    }
    match verify_bounds(&report) {
        Ok(()) => EXIT_OK,
        Err(violations) => {
            for v in violations {
                eprintln!("bound violated: {}: {}", v.check, v.detail);
            }
            EXIT_DEGRADED
        }
    }
}

fn cmd_bench(cli: &Cli) -> i32 {
    let cfg = match cli.config.as_deref() {
        Some(path) => match bench::BenchConfig::load(path) {
            Ok(c) => c,
            Err(e) => return fail(e),
        },
        None => bench::BenchConfig::default(),
    };
    match bench::run_bench(&cfg) {
        Ok(rows) => {
            println!("{}", bench::BenchmarkRow::TSV_HEADER);
            for row in rows {
                println!("{}", row.to_tsv());
            }
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

fn cmd_gen_corpus(
    docs: usize,
    vocab: usize,
    seed: u64,
    out: &Path,
    pairs_out: Option<&Path>,
    n_pairs: usize,
    pair_top: usize,
) -> i32 {
    if let Err(e) = write_corpus(&CorpusSpec::new(docs, vocab, seed), out) {
        return fail(e);
    }
    if let Some(pairs_path) = pairs_out {
        let pairs = match generate_pairs(pair_top.min(vocab), n_pairs, seed) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        if let Err(e) = std::fs::write(pairs_path, render_pairs(&pairs)) {
            return fail(format!("{}: {e}", pairs_path.display()));
        }
    }
    let rid = match coterm::corpus::resource_fingerprint(out) {
        Ok(id) => id,
        Err(e) => return fail(e),
    };
    println!("{}\t{rid}", out.display());
    EXIT_OK
}
