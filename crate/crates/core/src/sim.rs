//! Multi-cluster simulation: several controllers run concurrently against one
//! in-process scheduler, and the measured job sizes are compared with the
//! predicted ones.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, KvFile};
use crate::controller::{predicted_job_size, ControllerError, Job, JobHooks, JobOutcome, JobSettings, Origin};
use crate::cooccur::{naive_scan, InputPair, PairedTerm};
use crate::corpus::{parse_resource, Corpus};
use crate::gen::{generate_corpus, generate_pairs, CorpusSpec, GenError};
use crate::index::CaseMode;
use crate::scheduler::{
    RegisterResource, Scheduler, SchedulerConfig, SchedulerError, SchedulerEvent, SystemClock, TaskKey,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("scheduler: {0}")]
    Scheduler(#[from] SchedulerError),
}

impl From<GenError> for SimError {
    fn from(e: GenError) -> Self {
        SimError::ScenarioInvalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CrashPoint {
    pub cluster: usize,
    /// Crash once this many tasks have been submitted.
    pub after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub clusters: usize,
    pub tasks: usize,
    pub overlap_fraction: f64,
    pub precache_fraction: f64,
    pub crash: Option<CrashPoint>,
    pub task_duration: Duration,
    pub seed: u64,
    pub workers: usize,
    pub n_docs: usize,
    pub case_mode: CaseMode,
    pub stale_timeout: Duration,
    pub heartbeat_interval: Duration,
    pub pending_poll_interval: Duration,
    pub fair_share_limit: u64,
}

pub const SCENARIO_KEYS: &[&str] = &[
    "clusters",
    "tasks",
    "overlap_fraction",
    "precache_fraction",
    "crash_cluster",
    "crash_after",
    "task_duration",
    "seed",
    "workers",
    "n_docs",
    "case_mode",
    "stale_timeout",
    "heartbeat_interval",
    "pending_poll_interval",
    "fair_share_limit",
];

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            clusters: 1,
            tasks: 10,
            overlap_fraction: 1.0,
            precache_fraction: 0.0,
            crash: None,
            task_duration: Duration::from_millis(25),
            seed: 0,
            workers: 1,
            n_docs: 200,
            case_mode: CaseMode::Insensitive,
            stale_timeout: Duration::from_secs(1),
            heartbeat_interval: Duration::from_millis(250),
            pending_poll_interval: Duration::from_millis(100),
            fair_share_limit: 1_000_000,
        }
    }
}

impl Scenario {
    pub fn from_kv(kv: &KvFile) -> Result<Self, SimError> {
        kv.expect_keys(SCENARIO_KEYS)?;
        let d = Scenario::default();
        let crash = match (kv.get::<usize>("crash_cluster")?, kv.get::<usize>("crash_after")?) {
            (Some(cluster), after) => Some(CrashPoint {
                cluster,
                after: after.unwrap_or(0),
            }),
            (None, Some(_)) => return Err(SimError::ScenarioInvalid("crash_after needs crash_cluster".into())),
            (None, None) => None,
        };
        let s = Scenario {
            clusters: kv.get_or("clusters", d.clusters)?,
            tasks: kv.get_or("tasks", d.tasks)?,
            overlap_fraction: kv.get_or("overlap_fraction", d.overlap_fraction)?,
            precache_fraction: kv.get_or("precache_fraction", d.precache_fraction)?,
            crash,
            task_duration: kv.duration_or("task_duration", d.task_duration)?,
            seed: kv.get_or("seed", d.seed)?,
            workers: kv.get_or("workers", d.workers)?,
            n_docs: kv.get_or("n_docs", d.n_docs)?,
            case_mode: kv.get_or("case_mode", d.case_mode)?,
            stale_timeout: kv.duration_or("stale_timeout", d.stale_timeout)?,
            heartbeat_interval: kv.duration_or("heartbeat_interval", d.heartbeat_interval)?,
            pending_poll_interval: kv.duration_or("pending_poll_interval", d.pending_poll_interval)?,
            fair_share_limit: kv.get_or("fair_share_limit", d.fair_share_limit)?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_kv(&KvFile::load(path)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::ScenarioInvalid(m.to_string()));
        if self.clusters == 0 {
            return bad("clusters must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) || !(0.0..=1.0).contains(&self.precache_fraction) {
            return bad("fractions must lie in [0, 1]");
        }
        if let Some(c) = self.crash {
            if c.cluster >= self.clusters {
                return bad("crash_cluster out of range");
            }
        }
        if self.n_docs == 0 {
            return bad("n_docs must be at least 1");
        }
        if self.heartbeat_interval >= self.stale_timeout {
            return bad("heartbeat_interval must be shorter than stale_timeout");
        }
        Ok(())
    }

    fn shared_tasks(&self) -> usize {
        (self.overlap_fraction * self.tasks as f64).round() as usize
    }

    fn universe_size(&self) -> usize {
        let shared = self.shared_tasks();
        shared + self.clusters * (self.tasks - shared)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterReport {
    pub cluster: usize,
    pub client_id: String,
    #[serde(rename = "T_t")]
    pub t_t: usize,
    /// All tasks answered by the store, whether preloaded or produced by
    /// another cluster during the run.
    #[serde(rename = "T_c")]
    pub t_c: usize,
    /// Tasks answered by results present before the run.
    pub t_c_precached: usize,
    #[serde(rename = "T_s")]
    pub t_s: usize,
    #[serde(rename = "E")]
    pub e: usize,
    pub alpha: usize,
    #[serde(rename = "P_max")]
    pub p_max: usize,
    pub predicted_e: f64,
    pub crashed: bool,
    /// Claims this cluster held but never submitted.
    pub abandoned_claims: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecutionRecord {
    pub pair_key: String,
    pub cluster: usize,
    pub origin: Origin,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub scenario: Scenario,
    pub clusters: Vec<ClusterReport>,
    /// Distinct task keys across all clusters.
    pub universe: usize,
    pub precached: usize,
    pub total_executions: usize,
    pub total_distinct_executions: usize,
    pub takeover_duplicates: usize,
    /// Keys with no stored result at the end of the run.
    pub uncovered_keys: usize,
    pub max_records_per_key: usize,
    pub executions_lower: usize,
    pub executions_upper: usize,
    #[serde(skip)]
    pub executions: Vec<ExecutionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub detail: String,
}

struct Workload {
    corpus: Arc<Corpus>,
    lists: Vec<Vec<InputPair>>,
    universe: Vec<PairedTerm>,
    precached: BTreeSet<String>,
}

fn build_workload(s: &Scenario) -> Result<Workload, SimError> {
    let universe_size = s.universe_size();
    let mut words = 2;
    while words * (words - 1) / 2 < universe_size {
        words += 1;
    }
    let text = generate_corpus(&CorpusSpec::new(s.n_docs, words, s.seed))?;
    let corpus = Arc::new(parse_resource(text.as_bytes()).map_err(|e| SimError::ScenarioInvalid(e.to_string()))?);
    let all = generate_pairs(words, universe_size, s.seed)?;
    let shared = s.shared_tasks();
    let own = s.tasks - shared;
    let lists: Vec<Vec<InputPair>> = (0..s.clusters)
        .map(|c| {
            let mut list = all[..shared].to_vec();
            list.extend_from_slice(&all[shared + c * own..shared + (c + 1) * own]);
            list
        })
        .collect();
    let universe: Vec<PairedTerm> = all
        .iter()
        .map(|p| PairedTerm::new(&p.a, &p.b, s.case_mode).expect("generated words are terms"))
        .collect();
    let mut keys: Vec<String> = universe.iter().map(PairedTerm::canonical_key).collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(s.seed ^ 0x5eed));
    let n_pre = (s.precache_fraction * universe_size as f64).round() as usize;
    Ok(Workload {
        corpus,
        lists,
        universe,
        precached: keys.into_iter().take(n_pre).collect(),
    })
}

/// Runs every cluster of the scenario to completion (or crash) and measures
/// the outcome from the controllers' reports and the scheduler's event log.
pub fn run_scenario(s: &Scenario) -> Result<SimReport, SimError> {
    s.validate()?;
    let work = build_workload(s)?;
    let corpus = &work.corpus;
    let scheduler = Scheduler::in_memory(
        SchedulerConfig {
            stale_timeout: s.stale_timeout,
            fair_share_limit: s.fair_share_limit,
            record_events: true,
        },
        Arc::new(SystemClock),
    )?;
    scheduler.register_resource(&RegisterResource {
        resource_id: corpus.resource_id().to_hex(),
        name: "synthetic".into(),
        n_docs: corpus.n_docs(),
        granularity: corpus.granularity(),
        uploader: None,
    })?;
    for pair in work.universe.iter().filter(|p| work.precached.contains(&p.canonical_key())) {
        scheduler.preload(corpus.resource_id(), s.case_mode, &naive_scan(corpus, pair, s.case_mode), "precache")?;
    }

    let client_id = |c: usize| format!("cluster-{c}");
    let outcomes: Vec<Result<JobOutcome, ControllerError>> = thread::scope(|scope| {
        let handles: Vec<_> = work
            .lists
            .iter()
            .enumerate()
            .map(|(c, list)| {
                let settings = JobSettings {
                    case_mode: s.case_mode,
                    workers: s.workers,
                    shuffle_seed: s.seed.wrapping_add(c as u64 + 1),
                    data_transfer: true,
                    client_id: client_id(c),
                    pending_poll_interval: s.pending_poll_interval,
                    heartbeat_interval: s.heartbeat_interval,
                    ..JobSettings::default()
                };
                let hooks = JobHooks {
                    task_delay: s.task_duration,
                    crash_after: s.crash.filter(|p| p.cluster == c).map(|p| p.after),
                };
                let job = Job::new(corpus.clone(), list.clone(), settings);
                let scheduler = &scheduler;
                scope.spawn(move || job.run_cooperative(scheduler, &hooks))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("cluster panicked")).collect()
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let events = scheduler.events();
    let mut claimed: BTreeMap<String, BTreeSet<TaskKey>> = BTreeMap::new();
    let mut recorded: BTreeMap<String, BTreeSet<TaskKey>> = BTreeMap::new();
    let mut records_per_key: BTreeMap<TaskKey, usize> = BTreeMap::new();
    for event in &events {
        match event {
            SchedulerEvent::Claimed { key, client_id, .. } => {
                claimed.entry(client_id.clone()).or_default().insert(key.clone());
            }
            SchedulerEvent::TakenOver { key, to, .. } => {
                claimed.entry(to.clone()).or_default().insert(key.clone());
            }
            SchedulerEvent::Recorded { key, client_id, .. } => {
                recorded.entry(client_id.clone()).or_default().insert(key.clone());
                *records_per_key.entry(key.clone()).or_default() += 1;
            }
            _ => {}
        }
    }

    let t_s_all = s.shared_tasks();
    let shared_keys: BTreeSet<String> = work.universe[..t_s_all].iter().map(PairedTerm::canonical_key).collect();
    let t_s = shared_keys.difference(&work.precached).count();
    let mut clusters = Vec::with_capacity(s.clusters);
    let mut executions = Vec::new();
    for (c, (outcome, list)) in outcomes.iter().zip(&work.lists).enumerate() {
        let r = &outcome.report;
        let id = client_id(c);
        let t_c_precached = list
            .iter()
            .filter(|p| {
                let key = PairedTerm::new(&p.a, &p.b, s.case_mode).expect("term").canonical_key();
                work.precached.contains(&key)
            })
            .count();
        let empty = BTreeSet::new();
        let abandoned = claimed
            .get(&id)
            .unwrap_or(&empty)
            .difference(recorded.get(&id).unwrap_or(&empty))
            .count();
        let shared_here = if s.clusters > 1 { t_s } else { 0 };
        clusters.push(ClusterReport {
            cluster: c,
            client_id: id,
            t_t: r.t_t,
            t_c: r.t_c,
            t_c_precached,
            t_s: shared_here,
            e: r.e,
            alpha: r.alpha,
            p_max: r.p_max,
            predicted_e: predicted_job_size(r.t_t, t_c_precached, shared_here, s.clusters, r.alpha)?,
            crashed: outcome.crashed,
            abandoned_claims: abandoned,
            wall_time: r.wall_time,
        });
        executions.extend(outcome.executions.iter().map(|x| ExecutionRecord {
            pair_key: x.pair_key.clone(),
            cluster: c,
            origin: x.origin,
        }));
    }

    let distinct: BTreeSet<&str> = executions.iter().map(|x| x.pair_key.as_str()).collect();
    let covered: BTreeSet<&str> = records_per_key.keys().map(|k| k.pair_key.as_str()).collect();
    let universe = work.universe.len();
    Ok(SimReport {
        scenario: s.clone(),
        universe,
        precached: work.precached.len(),
        total_executions: executions.len(),
        total_distinct_executions: distinct.len(),
        takeover_duplicates: executions.len() - distinct.len(),
        uncovered_keys: work
            .universe
            .iter()
            .filter(|p| !covered.contains(p.canonical_key().as_str()))
            .count(),
        max_records_per_key: records_per_key.values().copied().max().unwrap_or(0),
        executions_lower: usize::from(universe > 0),
        executions_upper: clusters.iter().map(|c| c.t_t).sum(),
        clusters,
        executions,
    })
}

/// Checks a report against the predicted job sizes and the protocol's
/// bookkeeping identities.
pub fn verify_bounds(report: &SimReport) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let mut fail = |check: &'static str, detail: String| violations.push(Violation { check, detail });
    let l = report.clusters.len();
    let any_crash = report.clusters.iter().any(|c| c.crashed);
    let slack = l.saturating_sub(1) as f64;

    for c in &report.clusters {
        if c.e > c.t_t {
            fail("e_exceeds_t_t", format!("cluster {}: E={} > T_t={}", c.cluster, c.e, c.t_t));
        }
        if c.crashed {
            continue;
        }
        if c.t_c + c.e != c.t_t {
            fail(
                "conservation",
                format!("cluster {}: T_c={} + E={} != T_t={}", c.cluster, c.t_c, c.e, c.t_t),
            );
        }
        // The even split of shared work assumes every cluster stays alive.
        if !any_crash && c.e as f64 > c.predicted_e + slack + 1e-9 {
            fail(
                "job_size_upper",
                format!("cluster {}: E={} > predicted {:.3} + {slack}", c.cluster, c.e, c.predicted_e),
            );
        }
        if !any_crash && c.alpha != 0 {
            fail("alpha_without_crash", format!("cluster {}: alpha={}", c.cluster, c.alpha));
        }
        if c.abandoned_claims != 0 {
            fail(
                "abandoned_by_live_cluster",
                format!("cluster {}: {} claims never submitted", c.cluster, c.abandoned_claims),
            );
        }
    }

    if report.total_executions != report.executions.len() {
        fail(
            "execution_count",
            format!("{} reported, {} listed", report.total_executions, report.executions.len()),
        );
    }
    let sum_e: usize = report.clusters.iter().map(|c| c.e).sum();
    if sum_e != report.total_distinct_executions + report.takeover_duplicates {
        fail(
            "execution_identity",
            format!(
                "sum E={sum_e} != distinct {} + duplicates {}",
                report.total_distinct_executions, report.takeover_duplicates
            ),
        );
    }
    let mut per_key: BTreeMap<&str, Vec<&ExecutionRecord>> = BTreeMap::new();
    for x in &report.executions {
        per_key.entry(&x.pair_key).or_default().push(x);
    }
    for (key, runs) in per_key.iter().filter(|(_, runs)| runs.len() > 1) {
        let plain = runs.iter().filter(|x| x.origin != Origin::TakenOver).count();
        if !any_crash || plain > 1 {
            fail("duplicate_execution", format!("{key:?} executed {} times", runs.len()));
        }
    }
    if report.max_records_per_key > 1 {
        fail("duplicate_record", format!("a key has {} stored results", report.max_records_per_key));
    }
    if !any_crash {
        if report.uncovered_keys != 0 {
            fail("coverage", format!("{} keys never completed", report.uncovered_keys));
        }
        if report.total_distinct_executions + report.precached != report.universe {
            fail(
                "coverage",
                format!(
                    "distinct executions {} + precached {} != universe {}",
                    report.total_distinct_executions, report.precached, report.universe
                ),
            );
        }
    }
    if report.universe < report.executions_lower || sum_e > report.executions_upper {
        fail(
            "total_executions",
            format!(
                "universe {} / total executions {sum_e} outside [{}, {}]",
                report.universe, report.executions_lower, report.executions_upper
            ),
        );
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

impl SimReport {
    pub fn tsv_header() -> &'static str {
        "clusters\ttasks\toverlap\tprecache\tcrash\tsum_E\tE_per_cluster\tpredicted_E\talpha_total\tuniverse\tbounds_ok"
    }

    pub fn tsv_row(&self) -> String {
        let s = &self.scenario;
        let join = |f: &dyn Fn(&ClusterReport) -> String| {
            self.clusters.iter().map(f).collect::<Vec<_>>().join(",")
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.clusters,
            s.tasks,
            s.overlap_fraction,
            s.precache_fraction,
            s.crash.map(|c| format!("{}@{}", c.cluster, c.after)).unwrap_or_else(|| "-".into()),
            self.clusters.iter().map(|c| c.e).sum::<usize>(),
            join(&|c| c.e.to_string()),
            join(&|c| format!("{:.3}", c.predicted_e)),
            self.clusters.iter().map(|c| c.alpha).sum::<usize>(),
            self.universe,
            verify_bounds(self).is_ok(),
        )
    }
}
