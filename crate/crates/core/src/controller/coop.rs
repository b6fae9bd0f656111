//! Co-operation mode: claim every task from the scheduler, execute what is
//! ours, then wait out tasks other clusters are working on.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::{ControllerError, Counters, Execution, Job, JobHooks, JobOutcome, Mode, Origin, Task};
use crate::cooccur::{combine, CooccurrenceResult, PairedTerm};
use crate::scheduler::{
    ClaimRequest, ClaimResponse, ClientError, RegisterResource, SchedulerApi, SchedulerError, StatusQuery,
    SubmitAck, TakeoverOutcome, TaskId,
};

struct Shared<'a> {
    job: &'a Job,
    client: &'a dyn SchedulerApi,
    hooks: &'a JobHooks,
    pairs: Vec<PairedTerm>,
    tasks: Mutex<Vec<Task>>,
    /// Task indices waiting on another cluster, with the time they were queued.
    pending: Mutex<Vec<(usize, Instant)>>,
    p_max: AtomicUsize,
    inflight: Mutex<BTreeSet<TaskId>>,
    executions: Mutex<Vec<Execution>>,
    next: AtomicUsize,
    submitted: AtomicUsize,
    quota_refusals: AtomicUsize,
    resolved_from_pending: AtomicUsize,
    degraded: AtomicBool,
    crashed: AtomicBool,
    done: AtomicBool,
}

pub(super) fn run(job: &Job, client: &dyn SchedulerApi, hooks: &JobHooks) -> Result<JobOutcome, ControllerError> {
    let start = Instant::now();
    let plan = super::plan_tasks(&job.pairs, job.settings.case_mode, job.settings.shuffle_seed);
    let corpus = job.corpus();
    let register = RegisterResource {
        resource_id: corpus.resource_id().to_hex(),
        name: format!("{} documents", corpus.n_docs()),
        n_docs: corpus.n_docs(),
        granularity: corpus.granularity(),
        uploader: Some(job.settings.client_id.clone()),
    };
    match client.register_resource(&register) {
        Ok(_) => {}
        Err(ClientError::Unreachable(e)) => return Err(ControllerError::SchedulerUnreachable(e)),
        Err(e) => return Err(ControllerError::Scheduler(e.to_string())),
    }

    let shared = Shared {
        job,
        client,
        hooks,
        pairs: plan.tasks.clone(),
        tasks: Mutex::new(plan.tasks.iter().cloned().map(Task::new).collect()),
        pending: Mutex::new(Vec::new()),
        p_max: AtomicUsize::new(0),
        inflight: Mutex::new(BTreeSet::new()),
        executions: Mutex::new(Vec::new()),
        next: AtomicUsize::new(0),
        submitted: AtomicUsize::new(0),
        quota_refusals: AtomicUsize::new(0),
        resolved_from_pending: AtomicUsize::new(0),
        degraded: AtomicBool::new(false),
        crashed: AtomicBool::new(false),
        done: AtomicBool::new(false),
    };

    let outcome: Result<(), ControllerError> = thread::scope(|s| {
        s.spawn(|| shared.heartbeat_loop());
        let workers: Vec<_> = (0..job.settings.workers.max(1))
            .map(|_| s.spawn(|| shared.worker_loop()))
            .collect();
        let mut result = Ok(());
        for w in workers {
            if let Err(e) = w.join().expect("worker panicked") {
                shared.crashed.store(true, Ordering::SeqCst);
                result = Err(e);
            }
        }
        if result.is_ok() && !shared.crashed() {
            result = shared.process_pending();
        }
        shared.done.store(true, Ordering::SeqCst);
        result
    });
    outcome?;

    let crashed = shared.crashed();
    let tasks = shared.tasks.into_inner().unwrap();
    let counters = Counters {
        p_max: shared.p_max.load(Ordering::SeqCst),
        degraded: shared.degraded.load(Ordering::SeqCst),
        quota_refusals: shared.quota_refusals.load(Ordering::SeqCst),
        resolved_from_pending: shared.resolved_from_pending.load(Ordering::SeqCst),
    };
    let executions = shared.executions.into_inner().unwrap();
    Ok(job.finish(Mode::Cooperation, &plan, &tasks, executions, counters, start, crashed))
}

impl Shared<'_> {
    fn crashed(&self) -> bool {
        self.crashed.load(Ordering::SeqCst)
    }

    fn degraded(&self) -> bool {
        self.degraded.load(Ordering::SeqCst)
    }

    fn degrade(&self, reason: &dyn std::fmt::Display) {
        if !self.degraded.swap(true, Ordering::SeqCst) {
            log::warn!("scheduler lost ({reason}); finishing the job locally");
        }
    }

    /// True when the injected crash point has been reached.
    fn crash_now(&self) -> bool {
        match self.hooks.crash_after {
            Some(k) if self.submitted.load(Ordering::SeqCst) >= k => {
                self.crashed.store(true, Ordering::SeqCst);
                true
            }
            _ => self.crashed(),
        }
    }

    fn pair_key(&self, i: usize) -> String {
        self.pairs[i].canonical_key()
    }

    fn complete(&self, i: usize, result: CooccurrenceResult, origin: Origin) {
        let mut tasks = self.tasks.lock().unwrap();
        tasks[i].complete(result, origin);
    }

    fn execute(&self, i: usize) -> Result<CooccurrenceResult, ControllerError> {
        let job = self.job;
        let pair = &self.pairs[i];
        job.index.materialize(&job.corpus, [pair.a(), pair.b()], 1)?;
        let a = job.index.get(pair.a()).expect("materialized");
        let b = job.index.get(pair.b()).expect("materialized");
        let result = combine(&job.corpus, pair, &a, &b, job.settings.co_keys_limit);
        if !self.hooks.task_delay.is_zero() {
            thread::sleep(self.hooks.task_delay);
        }
        Ok(result)
    }

    fn execute_untracked(&self, i: usize, origin: Origin) -> Result<(), ControllerError> {
        let result = self.execute(i)?;
        self.record_execution(i, origin);
        self.complete(i, result, origin);
        Ok(())
    }

    fn record_execution(&self, i: usize, origin: Origin) {
        self.executions.lock().unwrap().push(Execution {
            pair_key: self.pair_key(i),
            origin,
        });
    }

    /// Executes a task this cluster holds the claim for and submits it.
    fn execute_owned(&self, i: usize, task_id: TaskId, origin: Origin) -> Result<(), ControllerError> {
        self.inflight.lock().unwrap().insert(task_id);
        let result = self.execute(i);
        if self.crashed() {
            return Ok(());
        }
        let result = match result {
            Ok(r) => r,
            Err(e) => {
                self.inflight.lock().unwrap().remove(&task_id);
                return Err(e);
            }
        };
        let payload = if self.job.settings.data_transfer {
            result.clone()
        } else {
            result.clone().without_keys()
        };
        match self.client.submit_result(task_id, &self.job.settings.client_id, &payload) {
            Ok(SubmitAck::Recorded) => {
                self.submitted.fetch_add(1, Ordering::SeqCst);
            }
            Ok(SubmitAck::AlreadyComplete) => {}
            Err(ClientError::Api(SchedulerError::NotOwner | SchedulerError::AlreadyComplete)) => {}
            Err(ClientError::Api(e)) => log::warn!("submit for task {task_id} rejected: {e}"),
            Err(e) => self.degrade(&e),
        }
        self.inflight.lock().unwrap().remove(&task_id);
        self.record_execution(i, origin);
        self.complete(i, result, origin);
        Ok(())
    }

    fn worker_loop(&self) -> Result<(), ControllerError> {
        loop {
            if self.crashed() {
                return Ok(());
            }
            let i = self.next.fetch_add(1, Ordering::SeqCst);
            if i >= self.pairs.len() {
                return Ok(());
            }
            self.dispatch(i)?;
        }
    }

    fn dispatch(&self, i: usize) -> Result<(), ControllerError> {
        if self.degraded() {
            return self.execute_untracked(i, Origin::ExecutedLocal);
        }
        let settings = &self.job.settings;
        let req = ClaimRequest {
            client_id: settings.client_id.clone(),
            resource_id: self.job.corpus.resource_id(),
            pair_key: self.pair_key(i),
            case_mode: settings.case_mode,
            data_transfer: settings.data_transfer,
        };
        match self.client.claim(&req) {
            Ok(ClaimResponse::Cached { result }) => {
                self.complete(i, result, Origin::Cached);
                Ok(())
            }
            Ok(ClaimResponse::Claimed { task_id, reclaimed }) => {
                if self.crash_now() {
                    return Ok(());
                }
                let origin = if reclaimed { Origin::TakenOver } else { Origin::ExecutedLocal };
                self.execute_owned(i, task_id, origin)
            }
            Ok(ClaimResponse::Pending) => {
                let mut pending = self.pending.lock().unwrap();
                pending.push((i, Instant::now()));
                self.p_max.fetch_max(pending.len(), Ordering::SeqCst);
                Ok(())
            }
            Err(ClientError::Api(SchedulerError::QuotaExceeded)) => {
                self.quota_refusals.fetch_add(1, Ordering::SeqCst);
                self.execute_untracked(i, Origin::ExecutedLocal)
            }
            Err(ClientError::Api(e)) => {
                log::warn!("claim for {:?} rejected: {e}", req.pair_key);
                self.execute_untracked(i, Origin::ExecutedLocal)
            }
            Err(e) => {
                self.degrade(&e);
                self.execute_untracked(i, Origin::ExecutedLocal)
            }
        }
    }

    /// Polls pending tasks oldest first until each is either answered by the
    /// store or taken over after its claim went stale.
    fn process_pending(&self) -> Result<(), ControllerError> {
        let mut queue = std::mem::take(&mut *self.pending.lock().unwrap());
        queue.sort_by_key(|&(_, at)| at);
        let settings = &self.job.settings;
        while !queue.is_empty() {
            if self.crashed() {
                return Ok(());
            }
            if self.degraded() {
                for (i, _) in queue.drain(..) {
                    self.execute_untracked(i, Origin::ExecutedLocal)?;
                }
                return Ok(());
            }
            let mut waiting = Vec::with_capacity(queue.len());
            for (i, at) in queue.drain(..) {
                if self.degraded() || self.crashed() {
                    waiting.push((i, at));
                    continue;
                }
                let query = StatusQuery {
                    resource_id: self.job.corpus.resource_id(),
                    pair_key: self.pair_key(i),
                    case_mode: settings.case_mode,
                };
                let status = match self.client.task_status(&query) {
                    Ok(s) => s,
                    Err(ClientError::Api(e)) => {
                        log::warn!("status for {:?} rejected: {e}", query.pair_key);
                        self.execute_untracked(i, Origin::ExecutedLocal)?;
                        continue;
                    }
                    Err(e) => {
                        self.degrade(&e);
                        waiting.push((i, at));
                        continue;
                    }
                };
                if status.is_complete() {
                    match status.result {
                        Some(result) => {
                            self.resolved_from_pending.fetch_add(1, Ordering::SeqCst);
                            self.complete(i, result, Origin::Cached);
                        }
                        None => self.execute_untracked(i, Origin::ExecutedLocal)?,
                    }
                    continue;
                }
                let Some(task_id) = status.task_id.filter(|_| status.stale) else {
                    waiting.push((i, at));
                    continue;
                };
                match self.client.takeover(task_id, &settings.client_id) {
                    Ok(TakeoverOutcome::Grant) => {
                        if self.crash_now() {
                            return Ok(());
                        }
                        self.execute_owned(i, task_id, Origin::TakenOver)?;
                    }
                    Ok(TakeoverOutcome::Refused) => waiting.push((i, at)),
                    Err(ClientError::Api(_)) => waiting.push((i, at)),
                    Err(e) => {
                        self.degrade(&e);
                        waiting.push((i, at));
                    }
                }
            }
            queue = waiting;
            if !queue.is_empty() && !self.degraded() {
                self.sleep_unless_done(settings.pending_poll_interval);
            }
        }
        Ok(())
    }

    fn sleep_unless_done(&self, total: Duration) {
        let deadline = Instant::now() + total;
        while !self.crashed() && !self.done.load(Ordering::SeqCst) {
            let now = Instant::now();
            if now >= deadline {
                return;
            }
            thread::sleep((deadline - now).min(Duration::from_millis(20)));
        }
    }

    fn heartbeat_loop(&self) {
        let settings = &self.job.settings;
        while !self.done.load(Ordering::SeqCst) && !self.crashed() {
            self.sleep_unless_done(settings.heartbeat_interval);
            if self.done.load(Ordering::SeqCst) || self.crashed() || self.degraded() {
                continue;
            }
            let ids: Vec<TaskId> = self.inflight.lock().unwrap().iter().copied().collect();
            for id in ids {
                if let Err(e) = self.client.heartbeat(id, &settings.client_id) {
                    log::debug!("heartbeat for task {id} failed: {e}");
                }
            }
        }
    }
}
