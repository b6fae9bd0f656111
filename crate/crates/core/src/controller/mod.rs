//! Local job processing: task planning, standalone execution and the
//! co-operation protocol with the global scheduler.

mod config;
mod coop;

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use md5::{Digest, Md5};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use self::config::{Config, Mode, JOB_KEYS};
use crate::config::ConfigError;
use crate::cooccur::{
    evaluate_pairs, format_row, parse_pair_list, CooccurError, CooccurrenceResult, InputPair, LocalJobOptions,
    PairOutcome, PairedTerm, DEFAULT_CO_KEYS_LIMIT,
};
use crate::corpus::{load_resource, Corpus, CorpusError, ResourceId};
use crate::index::{CaseMode, IndexError, InvertedIndex};
use crate::scheduler::{HttpClient, SchedulerApi};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum ControllerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("resource: {0}")]
    Corpus(#[from] CorpusError),
    #[error("pair list {path}: {source}")]
    PairList { path: PathBuf, source: CooccurError },
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("{0}")]
    Cooccur(#[from] CooccurError),
    #[error("scheduler unreachable at job start: {0}")]
    SchedulerUnreachable(String),
    #[error("scheduler rejected the job: {0}")]
    Scheduler(String),
    #[error("invalid counts: T_t={t_t}, T_c={t_c}, T_s={t_s}, L={clusters}")]
    InvalidCounts {
        t_t: usize,
        t_c: usize,
        t_s: usize,
        clusters: usize,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Tasks left after scheduler cache hits, `T_t - T_c`.
pub fn predicted_tasks_to_process(t_t: usize, t_c: usize) -> Result<usize, ControllerError> {
    t_t.checked_sub(t_c).ok_or(ControllerError::InvalidCounts {
        t_t,
        t_c,
        t_s: 0,
        clusters: 1,
    })
}

/// Expected local job size when `t_s` tasks are shared evenly among
/// `clusters` clusters: `T_t - T_c - T_s * (1 - 1/L) + alpha`.
pub fn predicted_job_size(t_t: usize, t_c: usize, t_s: usize, clusters: usize, alpha: usize) -> Result<f64, ControllerError> {
    let invalid = ControllerError::InvalidCounts {
        t_t,
        t_c,
        t_s,
        clusters,
    };
    if clusters == 0 || t_c > t_t || t_s > t_t - t_c {
        return Err(invalid);
    }
    let l = clusters as f64;
    Ok(t_t as f64 - t_c as f64 - t_s as f64 * (1.0 - 1.0 / l) + alpha as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// Result came from the crowdsourced store.
    Cached,
    ExecutedLocal,
    /// Executed locally after another cluster's claim went stale.
    TakenOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TaskState {
    Incomplete = 0,
    Complete = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub pair: PairedTerm,
    pub status: TaskState,
    pub origin: Option<Origin>,
    pub enqueued_at: Option<u64>,
    pub result: Option<CooccurrenceResult>,
}

impl Task {
    fn new(pair: PairedTerm) -> Self {
        Task {
            pair,
            status: TaskState::Incomplete,
            origin: None,
            enqueued_at: None,
            result: None,
        }
    }

    /// Moves to complete exactly once; later calls are ignored.
    fn complete(&mut self, result: CooccurrenceResult, origin: Origin) -> bool {
        if self.status == TaskState::Complete {
            return false;
        }
        self.status = TaskState::Complete;
        self.origin = Some(origin);
        self.result = Some(result.oriented_as(&self.pair));
        true
    }
}

/// Deduplicated tasks in execution order plus the mapping back to input rows.
#[derive(Debug, Clone)]
pub struct TaskPlan {
    pub tasks: Vec<PairedTerm>,
    /// For each input row: the task index, or why the row has no task.
    pub rows: Vec<Result<usize, CooccurError>>,
}

/// Normalizes pairs, collapses duplicate canonical keys and shuffles the
/// distinct tasks with a seeded permutation.
pub fn plan_tasks(pairs: &[InputPair], case_mode: CaseMode, shuffle_seed: u64) -> TaskPlan {
    let mut first_seen: Vec<PairedTerm> = Vec::new();
    let mut by_key: HashMap<String, usize> = HashMap::new();
    let mut rows_pre = Vec::with_capacity(pairs.len());
    for input in pairs {
        match PairedTerm::new(&input.a, &input.b, case_mode) {
            Ok(pair) => {
                let next = first_seen.len();
                let idx = *by_key.entry(pair.canonical_key()).or_insert(next);
                if idx == next {
                    first_seen.push(pair);
                }
                rows_pre.push(Ok(idx));
            }
            Err(e) => rows_pre.push(Err(e)),
        }
    }
    let mut order: Vec<usize> = (0..first_seen.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    let mut position = vec![0; order.len()];
    for (pos, &orig) in order.iter().enumerate() {
        position[orig] = pos;
    }
    TaskPlan {
        tasks: order.iter().map(|&i| first_seen[i].clone()).collect(),
        rows: rows_pre.into_iter().map(|r| r.map(|i| position[i])).collect(),
    }
}

/// Summary of one job, printed as JSON on completion.
#[derive(Debug, Clone, Serialize)]
pub struct JobReport {
    pub job_id: String,
    pub resource_id: ResourceId,
    pub mode: Mode,
    #[serde(rename = "T_t")]
    pub t_t: usize,
    #[serde(rename = "T_c")]
    pub t_c: usize,
    #[serde(rename = "E")]
    pub e: usize,
    #[serde(rename = "P_max")]
    pub p_max: usize,
    pub alpha: usize,
    pub wall_time: f64,
    pub degraded: bool,
    /// Part of `T_c` answered by the first claim.
    pub cached_at_claim: usize,
    /// Part of `T_c` answered while polling pending tasks.
    pub resolved_from_pending: usize,
    pub quota_refusals: usize,
    pub input_rows: usize,
    pub error_rows: usize,
}

/// Execution knobs independent of where inputs come from.
#[derive(Debug, Clone)]
pub struct JobSettings {
    pub case_mode: CaseMode,
    pub workers: usize,
    pub shuffle_seed: u64,
    pub data_transfer: bool,
    pub client_id: String,
    pub pending_poll_interval: Duration,
    pub heartbeat_interval: Duration,
    pub co_keys_limit: Option<usize>,
}

impl Default for JobSettings {
    fn default() -> Self {
        JobSettings {
            case_mode: CaseMode::Insensitive,
            workers: 1,
            shuffle_seed: 0,
            data_transfer: true,
            client_id: format!("coterm-{}", std::process::id()),
            pending_poll_interval: Duration::from_secs(1),
            heartbeat_interval: Duration::from_secs(10),
            co_keys_limit: Some(DEFAULT_CO_KEYS_LIMIT),
        }
    }
}

impl JobSettings {
    pub fn from_config(config: &Config, job_id: &str) -> Self {
        JobSettings {
            case_mode: config.case_mode,
            workers: config.workers,
            shuffle_seed: config.shuffle_seed,
            data_transfer: config.data_transfer,
            client_id: config
                .client_id
                .clone()
                .unwrap_or_else(|| format!("coterm-{}-{}", std::process::id(), &job_id[..12])),
            pending_poll_interval: config.pending_poll_interval,
            heartbeat_interval: config.heartbeat_interval,
            co_keys_limit: Some(DEFAULT_CO_KEYS_LIMIT),
        }
    }
}

/// Fault and timing injection used by the simulator.
#[derive(Debug, Clone, Default)]
pub struct JobHooks {
    /// Extra delay added to every local execution.
    pub task_delay: Duration,
    /// Stop dead, abandoning any claim, once this many local executions have
    /// been submitted and another claim is granted.
    pub crash_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub pair_key: String,
    pub origin: Origin,
}

#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub report: JobReport,
    /// One entry per input row, in input order. Empty if the job crashed.
    pub rows: Vec<PairOutcome>,
    pub executions: Vec<Execution>,
    pub crashed: bool,
}

/// A job ready to run: corpus, input rows and settings.
pub struct Job {
    corpus: Arc<Corpus>,
    pairs: Vec<InputPair>,
    settings: JobSettings,
    job_id: String,
    index: InvertedIndex,
}

/// Stable job identity: digest of resource, case mode and pair rows.
pub fn job_id(resource_id: ResourceId, case_mode: CaseMode, pairs: &[InputPair]) -> String {
    let mut h = Md5::new();
    h.update(resource_id.as_bytes());
    h.update(case_mode.as_str().as_bytes());
    for p in pairs {
        h.update(p.a.as_bytes());
        h.update(b"\t");
        h.update(p.b.as_bytes());
        h.update(b"\n");
    }
    let digest: [u8; 16] = h.finalize().into();
    ResourceId::from_bytes(digest).to_hex()
}

impl Job {
    pub fn new(corpus: Arc<Corpus>, pairs: Vec<InputPair>, settings: JobSettings) -> Self {
        let job_id = job_id(corpus.resource_id(), settings.case_mode, &pairs);
        let index = InvertedIndex::new(&corpus, settings.case_mode);
        Job {
            corpus,
            pairs,
            settings,
            job_id,
            index,
        }
    }

    pub fn with_index(mut self, index: InvertedIndex) -> Self {
        assert_eq!(index.resource_id(), self.corpus.resource_id());
        assert_eq!(index.case_mode(), self.settings.case_mode);
        self.index = index;
        self
    }

    pub fn job_id(&self) -> &str {
        &self.job_id
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn settings(&self) -> &JobSettings {
        &self.settings
    }

    /// Executes every task locally.
    pub fn run_standalone(&self) -> Result<JobOutcome, ControllerError> {
        let start = Instant::now();
        let plan = plan_tasks(&self.pairs, self.settings.case_mode, self.settings.shuffle_seed);
        let results = evaluate_pairs(
            &self.index,
            &self.corpus,
            &plan.tasks,
            LocalJobOptions {
                workers: self.settings.workers,
                group_column: None,
                co_keys_limit: self.settings.co_keys_limit,
            },
        )?;
        let mut tasks: Vec<Task> = plan.tasks.iter().cloned().map(Task::new).collect();
        let mut executions = Vec::with_capacity(tasks.len());
        for (task, result) in tasks.iter_mut().zip(results) {
            executions.push(Execution {
                pair_key: task.pair.canonical_key(),
                origin: Origin::ExecutedLocal,
            });
            task.complete(result, Origin::ExecutedLocal);
        }
        let counters = Counters {
            p_max: 0,
            degraded: false,
            quota_refusals: 0,
            resolved_from_pending: 0,
        };
        Ok(self.finish(Mode::Standalone, &plan, &tasks, executions, counters, start, false))
    }

    /// Runs the job against a global scheduler.
    pub fn run_cooperative(&self, client: &dyn SchedulerApi, hooks: &JobHooks) -> Result<JobOutcome, ControllerError> {
        coop::run(self, client, hooks)
    }

    fn finish(
        &self,
        mode: Mode,
        plan: &TaskPlan,
        tasks: &[Task],
        executions: Vec<Execution>,
        counters: Counters,
        start: Instant,
        crashed: bool,
    ) -> JobOutcome {
        let count = |o: Origin| tasks.iter().filter(|t| t.origin == Some(o)).count();
        let t_c = count(Origin::Cached);
        let rows: Vec<PairOutcome> = if crashed {
            Vec::new()
        } else {
            self
            .pairs
            .iter()
            .zip(&plan.rows)
            .map(|(input, row)| PairOutcome {
                input: input.clone(),
                result: row.clone().map(|t| {
                    let pair = PairedTerm::new(&input.a, &input.b, self.settings.case_mode).expect("planned pair");
                    tasks[t].result.as_ref().expect("all tasks complete").oriented_as(&pair)
                }),
            })
            .collect()
        };
        let report = JobReport {
            job_id: self.job_id.clone(),
            resource_id: self.corpus.resource_id(),
            mode,
            t_t: tasks.len(),
            t_c,
            e: count(Origin::ExecutedLocal) + count(Origin::TakenOver),
            p_max: counters.p_max,
            alpha: count(Origin::TakenOver),
            wall_time: start.elapsed().as_secs_f64(),
            degraded: counters.degraded,
            cached_at_claim: t_c - counters.resolved_from_pending,
            resolved_from_pending: counters.resolved_from_pending,
            quota_refusals: counters.quota_refusals,
            input_rows: self.pairs.len(),
            error_rows: rows.iter().filter(|r| r.result.is_err()).count(),
        };
        JobOutcome {
            report,
            rows,
            executions,
            crashed,
        }
    }
}

struct Counters {
    p_max: usize,
    degraded: bool,
    quota_refusals: usize,
    resolved_from_pending: usize,
}

/// Writes the results file: a `#` header line, then one TSV row per input row.
pub fn write_results(
    path: &Path,
    resource_id: ResourceId,
    case_mode: CaseMode,
    rows: &[PairOutcome],
) -> Result<(), ControllerError> {
    let io_err = |source| ControllerError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    writeln!(out, "# coterm {TOOL_VERSION}\tresource_id={resource_id}\tcase_mode={case_mode}").map_err(io_err)?;
    for row in rows {
        writeln!(out, "{}", format_row(&row.input, &row.result)).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn load_pairs(path: &Path) -> Result<Vec<InputPair>, ControllerError> {
    let bytes = fs::read(path).map_err(|source| ControllerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pair_list(&bytes).map_err(|source| ControllerError::PairList {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads inputs named by `config`, runs the job, writes the results file
/// (and the index cache when `store_intermediate` is set).
pub fn execute_job(config: &Config) -> Result<JobReport, ControllerError> {
    config.validate()?;
    let corpus = Arc::new(load_resource(&config.resource_path, config.granularity)?);
    let pairs = load_pairs(&config.pair_list_path)?;
    let id = job_id(corpus.resource_id(), config.case_mode, &pairs);
    let settings = JobSettings::from_config(config, &id);
    let job = Job::new(corpus.clone(), pairs, settings);
    let outcome = match config.mode {
        Mode::Standalone => job.run_standalone()?,
        Mode::Cooperation => {
            let url = config.scheduler_url.as_deref().expect("validated");
            let client = HttpClient::new(url);
            job.run_cooperative(&client, &JobHooks::default())?
        }
    };
    write_results(&config.output_path, corpus.resource_id(), config.case_mode, &outcome.rows)?;
    if config.store_intermediate {
        let dir = config.index_dir();
        fs::create_dir_all(&dir).map_err(|source| ControllerError::Io {
            path: dir.clone(),
            source,
        })?;
        job.index().write_cache(&corpus, &dir.join(job.index().cache_file_name()))?;
    }
    Ok(outcome.report)
}
