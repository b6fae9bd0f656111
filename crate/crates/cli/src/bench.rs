//! Indexed evaluation against the naive per-pair scan, and across worker
//! counts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use coterm::config::{ConfigError, KvFile};
use coterm::controller::{load_pairs, ControllerError};
use coterm::cooccur::{evaluate_pairs, naive_scan, CooccurrenceResult, LocalJobOptions, PairedTerm};
use coterm::corpus::{load_resource, parse_resource, Corpus, Granularity};
use coterm::gen::{generate_corpus, generate_pairs, CorpusSpec, GenError};
use coterm::index::{CaseMode, InvertedIndex};

pub const BENCH_KEYS: &[&str] = &[
    "resource_path",
    "pair_list_path",
    "granularity",
    "case_mode",
    "n_docs",
    "vocab_size",
    "n_pairs",
    "pair_top",
    "seed",
    "worker_counts",
    "repeats",
    "naive",
];

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("{0}")]
    Input(String),
    #[error("indexed ({workers} workers) and naive results differ for {pair}")]
    Mismatch { workers: usize, pair: String },
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub resource_path: Option<PathBuf>,
    pub pair_list_path: Option<PathBuf>,
    pub granularity: Granularity,
    pub case_mode: CaseMode,
    pub n_docs: usize,
    pub vocab_size: usize,
    pub n_pairs: usize,
    /// Generated pairs are drawn from this many most frequent words.
    pub pair_top: usize,
    pub seed: u64,
    pub worker_counts: Vec<usize>,
    pub repeats: usize,
    pub naive: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            resource_path: None,
            pair_list_path: None,
            granularity: Granularity::Abstract,
            case_mode: CaseMode::Insensitive,
            n_docs: 100_000,
            vocab_size: 20_000,
            n_pairs: 100,
            pair_top: 1_000,
            seed: 1,
            worker_counts: vec![1, 2, 4],
            repeats: 1,
            naive: true,
        }
    }
}

fn parse_counts(text: &str) -> Result<Vec<usize>, ConfigError> {
    let invalid = || ConfigError::Invalid {
        key: "worker_counts".into(),
        reason: format!("expected positive integers separated by commas, got {text:?}"),
    };
    let counts: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| invalid()))
        .collect::<Result<_, _>>()?;
    if counts.is_empty() || counts.contains(&0) {
        return Err(invalid());
    }
    Ok(counts)
}

impl BenchConfig {
    pub fn from_kv(kv: &KvFile) -> Result<Self, ConfigError> {
        kv.expect_keys(BENCH_KEYS)?;
        let d = BenchConfig::default();
        Ok(BenchConfig {
            resource_path: kv.path("resource_path"),
            pair_list_path: kv.path("pair_list_path"),
            granularity: kv.get_or("granularity", d.granularity)?,
            case_mode: kv.get_or("case_mode", d.case_mode)?,
            n_docs: kv.get_or("n_docs", d.n_docs)?,
            vocab_size: kv.get_or("vocab_size", d.vocab_size)?,
            n_pairs: kv.get_or("n_pairs", d.n_pairs)?,
            pair_top: kv.get_or("pair_top", d.pair_top)?,
            seed: kv.get_or("seed", d.seed)?,
            worker_counts: match kv.raw("worker_counts") {
                Some(v) => parse_counts(v)?,
                None => d.worker_counts,
            },
            repeats: kv.get_or("repeats", d.repeats)?.max(1),
            naive: kv.bool_or("naive", d.naive)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_kv(&KvFile::load(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Indexed,
    NaiveScan,
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Indexed => "indexed",
            BenchMode::NaiveScan => "naive_scan",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub label: String,
    pub n_pairs: usize,
    pub workers: usize,
    pub wall_time_seconds: f64,
    pub mode: BenchMode,
}

impl BenchmarkRow {
    pub const TSV_HEADER: &'static str = "label\tn_pairs\tworkers\twall_time_seconds\tmode";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{}",
            self.label, self.n_pairs, self.workers, self.wall_time_seconds, self.mode
        )
    }
}

pub struct BenchInput {
    pub label: String,
    pub corpus: Corpus,
    pub pairs: Vec<PairedTerm>,
    pub case_mode: CaseMode,
}

pub fn prepare(cfg: &BenchConfig) -> Result<BenchInput, BenchError> {
    let (label, corpus) = match &cfg.resource_path {
        Some(path) => (
            path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            load_resource(path, cfg.granularity).map_err(|e| BenchError::Input(e.to_string()))?,
        ),
        None => {
            let text = generate_corpus(&CorpusSpec::new(cfg.n_docs, cfg.vocab_size, cfg.seed))?;
            let corpus = parse_resource(text.as_bytes()).map_err(|e| BenchError::Input(e.to_string()))?;
            (format!("gen-{}x{}-s{}", cfg.n_docs, cfg.vocab_size, cfg.seed), corpus)
        }
    };
    let raw = match &cfg.pair_list_path {
        Some(path) => load_pairs(path)?,
        None => generate_pairs(cfg.pair_top.min(cfg.vocab_size), cfg.n_pairs, cfg.seed)?,
    };
    let pairs: Vec<PairedTerm> = raw
        .iter()
        .filter_map(|p| PairedTerm::new(&p.a, &p.b, cfg.case_mode).ok())
        .collect();
    if pairs.is_empty() {
        return Err(BenchError::Input("no usable pairs".into()));
    }
    Ok(BenchInput {
        label,
        corpus,
        pairs,
        case_mode: cfg.case_mode,
    })
}

/// Builds a fresh index and evaluates every pair; index construction is part
/// of the measured time.
pub fn time_indexed(input: &BenchInput, workers: usize) -> Result<(Duration, Vec<CooccurrenceResult>), BenchError> {
    let start = Instant::now();
    let index = InvertedIndex::new(&input.corpus, input.case_mode);
    let opts = LocalJobOptions {
        workers,
        group_column: None,
        co_keys_limit: Some(usize::MAX),
    };
    let results = evaluate_pairs(&index, &input.corpus, &input.pairs, opts).map_err(ControllerError::from)?;
    Ok((start.elapsed(), results))
}

/// One full corpus scan per pair, single-threaded.
pub fn time_naive(input: &BenchInput) -> (Duration, Vec<CooccurrenceResult>) {
    let start = Instant::now();
    let results = input
        .pairs
        .iter()
        .map(|p| naive_scan(&input.corpus, p, input.case_mode))
        .collect();
    (start.elapsed(), results)
}

fn check_same(workers: usize, a: &[CooccurrenceResult], b: &[CooccurrenceResult]) -> Result<(), BenchError> {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return Err(BenchError::Mismatch {
                workers,
                pair: x.pair.canonical_key().replace('\t', " / "),
            });
        }
    }
    Ok(())
}

/// Runs every configuration and returns one row each. Fails before reporting
/// any timing if two configurations disagree on a result.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchmarkRow>, BenchError> {
    let input = prepare(cfg)?;
    let row = |mode, workers, wall: Duration| BenchmarkRow {
        label: input.label.clone(),
        n_pairs: input.pairs.len(),
        workers,
        wall_time_seconds: wall.as_secs_f64().max(1e-9),
        mode,
    };
    let mut rows = Vec::new();
    let mut reference: Option<Vec<CooccurrenceResult>> = None;
    if cfg.naive {
        let mut best = Duration::MAX;
        for _ in 0..cfg.repeats {
            let (wall, results) = time_naive(&input);
            best = best.min(wall);
            reference.get_or_insert(results);
        }
        rows.push(row(BenchMode::NaiveScan, 1, best));
    }
    for &workers in &cfg.worker_counts {
        let mut best = Duration::MAX;
        for _ in 0..cfg.repeats {
            let (wall, results) = time_indexed(&input, workers)?;
            best = best.min(wall);
            match &reference {
                Some(r) => check_same(workers, r, &results)?,
                None => reference = Some(results),
            }
        }
        rows.push(row(BenchMode::Indexed, workers, best));
    }
    Ok(rows)
}
