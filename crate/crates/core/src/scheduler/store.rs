use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rusqlite::{params, Connection, OptionalExtension, Transaction, TransactionBehavior};

use super::api::*;
use super::clock::{Clock, SystemClock};
use crate::cooccur::{CooccurrenceResult, DEFAULT_CO_KEYS_LIMIT};
use crate::corpus::ResourceId;
use crate::index::CaseMode;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS resources (
    resource_id   TEXT PRIMARY KEY,
    name          TEXT NOT NULL,
    n_docs        INTEGER NOT NULL,
    granularity   TEXT NOT NULL,
    uploader      TEXT NOT NULL,
    registered_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS tasks (
    task_id      INTEGER PRIMARY KEY AUTOINCREMENT,
    resource_id  TEXT NOT NULL,
    pair_key     TEXT NOT NULL,
    case_mode    TEXT NOT NULL,
    status       INTEGER NOT NULL,
    owner        TEXT NOT NULL,
    claimed_at   INTEGER NOT NULL,
    heartbeat_at INTEGER NOT NULL,
    UNIQUE (resource_id, pair_key, case_mode)
);
CREATE TABLE IF NOT EXISTS records (
    resource_id TEXT NOT NULL,
    pair_key    TEXT NOT NULL,
    case_mode   TEXT NOT NULL,
    result      TEXT NOT NULL,
    contributor TEXT NOT NULL,
    created_at  INTEGER NOT NULL,
    PRIMARY KEY (resource_id, pair_key, case_mode)
);
CREATE TABLE IF NOT EXISTS quota (
    client_id TEXT PRIMARY KEY,
    delivered INTEGER NOT NULL
);
";

#[derive(Debug, Clone)]
pub struct SchedulerConfig {
    /// A claim whose heartbeat is older than this is takeover-eligible.
    pub stale_timeout: Duration,
    /// Cached deliveries allowed to a client with data transfer disabled.
    pub fair_share_limit: u64,
    /// Keep an in-memory log of state transitions (tests and simulation).
    pub record_events: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            stale_timeout: Duration::from_secs(30),
            fair_share_limit: 100,
            record_events: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskKey {
    pub resource_id: ResourceId,
    pub pair_key: String,
    pub case_mode: CaseMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchedulerEvent {
    Claimed {
        task_id: TaskId,
        key: TaskKey,
        client_id: String,
        at_ms: i64,
        /// Previous owner whose stale claim was overwritten.
        replaced: Option<String>,
    },
    TakenOver {
        task_id: TaskId,
        key: TaskKey,
        from: String,
        to: String,
        at_ms: i64,
    },
    Heartbeat {
        task_id: TaskId,
        client_id: String,
        at_ms: i64,
    },
    Recorded {
        task_id: Option<TaskId>,
        key: TaskKey,
        client_id: String,
        at_ms: i64,
    },
    Delivered {
        key: TaskKey,
        client_id: String,
    },
}

struct Inner {
    conn: Connection,
    events: Vec<SchedulerEvent>,
}

/// The global scheduler: task classification and the shared result store.
///
/// Every public operation runs as one transaction under a single lock, so
/// classifications are linearizable.
pub struct Scheduler {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
    config: SchedulerConfig,
}

struct TaskRow {
    task_id: TaskId,
    key: TaskKey,
    status: i64,
    owner: String,
    heartbeat_at: i64,
}

fn case_str(c: CaseMode) -> &'static str {
    c.as_str()
}

impl Scheduler {
    pub fn in_memory(config: SchedulerConfig, clock: Arc<dyn Clock>) -> Result<Self, SchedulerError> {
        Self::with_connection(Connection::open_in_memory()?, config, clock)
    }

    /// Opens (or creates) a durable store at `path`.
    pub fn open(path: &Path, config: SchedulerConfig, clock: Arc<dyn Clock>) -> Result<Self, SchedulerError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "NORMAL")?;
        Self::with_connection(conn, config, clock)
    }

    pub fn open_default(path: &Path) -> Result<Self, SchedulerError> {
        Self::open(path, SchedulerConfig::default(), Arc::new(SystemClock))
    }

    fn with_connection(conn: Connection, config: SchedulerConfig, clock: Arc<dyn Clock>) -> Result<Self, SchedulerError> {
        conn.execute_batch(SCHEMA)?;
        conn.query_row("PRAGMA integrity_check", [], |r| r.get::<_, String>(0))
            .map_err(SchedulerError::from)
            .and_then(|s| {
                if s == "ok" {
                    Ok(())
                } else {
                    Err(SchedulerError::Store(format!("integrity check failed: {s}")))
                }
            })?;
        Ok(Scheduler {
            inner: Mutex::new(Inner { conn, events: Vec::new() }),
            clock,
            config,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn now_ms(&self) -> i64 {
        self.clock.now_ms()
    }

    fn stale_ms(&self) -> i64 {
        self.config.stale_timeout.as_millis() as i64
    }

    fn is_stale(&self, heartbeat_at: i64, now: i64) -> bool {
        now - heartbeat_at > self.stale_ms()
    }

    /// Runs `f` in an immediate transaction; events it produces are kept only on commit.
    fn transact<T>(
        &self,
        f: impl FnOnce(&Transaction<'_>, i64, &mut Vec<SchedulerEvent>) -> Result<T, SchedulerError>,
    ) -> Result<T, SchedulerError> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let now = self.clock.now_ms();
        let mut events = Vec::new();
        let tx = Transaction::new(&mut inner.conn, TransactionBehavior::Immediate)?;
        let out = f(&tx, now, &mut events)?;
        tx.commit()?;
        if self.config.record_events {
            inner.events.extend(events);
        }
        Ok(out)
    }

    /// Snapshot of the transition log (empty unless `record_events` is set).
    pub fn events(&self) -> Vec<SchedulerEvent> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).events.clone()
    }

    pub fn register_resource(&self, req: &RegisterResource) -> Result<ResourceEntry, SchedulerError> {
        let resource_id: ResourceId = req
            .resource_id
            .parse()
            .map_err(|_| SchedulerError::MalformedResourceId(req.resource_id.clone()))?;
        self.transact(|tx, now, _| {
            tx.execute(
                "INSERT OR IGNORE INTO resources VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![
                    resource_id.to_hex(),
                    req.name,
                    req.n_docs as i64,
                    req.granularity.as_str(),
                    req.uploader.as_deref().unwrap_or("anonymous"),
                    now
                ],
            )?;
            get_resource(tx, &resource_id)?.ok_or_else(|| SchedulerError::Store("resource vanished".into()))
        })
    }

    pub fn list_resources(&self) -> Result<Vec<ResourceEntry>, SchedulerError> {
        self.transact(|tx, _, _| {
            let mut stmt = tx.prepare(
                "SELECT resource_id, name, n_docs, granularity, uploader, registered_at
                 FROM resources ORDER BY registered_at, resource_id",
            )?;
            let rows = stmt.query_map([], resource_from_row)?;
            let mut out = Vec::new();
            for r in rows {
                out.push(r??);
            }
            Ok(out)
        })
    }

    /// Three-way classification of a task request: cached, claimed or pending.
    pub fn claim_task(&self, req: &ClaimRequest) -> Result<ClaimResponse, SchedulerError> {
        let key = TaskKey {
            resource_id: req.resource_id,
            pair_key: req.pair_key.clone(),
            case_mode: req.case_mode,
        };
        check_pair_key(&key.pair_key)?;
        self.transact(|tx, now, events| {
            if get_resource(tx, &key.resource_id)?.is_none() {
                return Err(SchedulerError::UnknownResource(key.resource_id.to_hex()));
            }
            if let Some(result) = get_record(tx, &key)? {
                self.consume_quota(tx, &req.client_id, req.data_transfer)?;
                events.push(SchedulerEvent::Delivered {
                    key: key.clone(),
                    client_id: req.client_id.clone(),
                });
                return Ok(ClaimResponse::Cached { result });
            }
            match get_task(tx, &key)? {
                None => {
                    tx.execute(
                        "INSERT INTO tasks (resource_id, pair_key, case_mode, status, owner, claimed_at, heartbeat_at)
                         VALUES (?1, ?2, ?3, 0, ?4, ?5, ?5)",
                        params![key.resource_id.to_hex(), key.pair_key, case_str(key.case_mode), req.client_id, now],
                    )?;
                    let task_id = tx.last_insert_rowid();
                    events.push(SchedulerEvent::Claimed {
                        task_id,
                        key,
                        client_id: req.client_id.clone(),
                        at_ms: now,
                        replaced: None,
                    });
                    Ok(ClaimResponse::Claimed { task_id, reclaimed: false })
                }
                Some(row) if row.status == 1 => Err(SchedulerError::Store(format!(
                    "task {} complete without a record",
                    row.task_id
                ))),
                Some(row) if row.owner == req.client_id => {
                    tx.execute("UPDATE tasks SET heartbeat_at = ?1 WHERE task_id = ?2", params![now, row.task_id])?;
                    events.push(SchedulerEvent::Heartbeat {
                        task_id: row.task_id,
                        client_id: req.client_id.clone(),
                        at_ms: now,
                    });
                    Ok(ClaimResponse::Claimed {
                        task_id: row.task_id,
                        reclaimed: false,
                    })
                }
                Some(row) if !self.is_stale(row.heartbeat_at, now) => Ok(ClaimResponse::Pending),
                Some(row) => {
                    tx.execute(
                        "UPDATE tasks SET owner = ?1, claimed_at = ?2, heartbeat_at = ?2 WHERE task_id = ?3",
                        params![req.client_id, now, row.task_id],
                    )?;
                    events.push(SchedulerEvent::Claimed {
                        task_id: row.task_id,
                        key: row.key,
                        client_id: req.client_id.clone(),
                        at_ms: now,
                        replaced: Some(row.owner),
                    });
                    Ok(ClaimResponse::Claimed {
                        task_id: row.task_id,
                        reclaimed: true,
                    })
                }
            }
        })
    }

    fn consume_quota(&self, tx: &Transaction<'_>, client_id: &str, data_transfer: bool) -> Result<(), SchedulerError> {
        if data_transfer {
            return Ok(());
        }
        let delivered: i64 = tx
            .query_row("SELECT delivered FROM quota WHERE client_id = ?1", [client_id], |r| r.get(0))
            .optional()?
            .unwrap_or(0);
        if delivered as u64 >= self.config.fair_share_limit {
            return Err(SchedulerError::QuotaExceeded);
        }
        tx.execute(
            "INSERT INTO quota VALUES (?1, 1) ON CONFLICT(client_id) DO UPDATE SET delivered = delivered + 1",
            [client_id],
        )?;
        Ok(())
    }

    /// Consumes one cached-result delivery from the client's fair-share
    /// allowance; contributing clients are never limited.
    pub fn quota_check(&self, client_id: &str, data_transfer: bool) -> Result<(), SchedulerError> {
        self.transact(|tx, _, _| self.consume_quota(tx, client_id, data_transfer))
    }

    pub fn submit_result(
        &self,
        task_id: TaskId,
        client_id: &str,
        result: &CooccurrenceResult,
    ) -> Result<SubmitAck, SchedulerError> {
        result
            .validate()
            .map_err(|e| SchedulerError::BadRequest(format!("inconsistent result: {e}")))?;
        self.transact(|tx, now, events| {
            let row = get_task_by_id(tx, task_id)?.ok_or(SchedulerError::UnknownTask)?;
            if row.status == 1 {
                return Ok(SubmitAck::AlreadyComplete);
            }
            if row.owner != client_id {
                return Err(SchedulerError::NotOwner);
            }
            if result.pair.canonical_key() != row.key.pair_key {
                return Err(SchedulerError::BadRequest(format!(
                    "result is for {:?}, task is {:?}",
                    result.pair.canonical_key(),
                    row.key.pair_key
                )));
            }
            insert_record(tx, &row.key, result, client_id, now)?;
            tx.execute("UPDATE tasks SET status = 1 WHERE task_id = ?1", [task_id])?;
            events.push(SchedulerEvent::Recorded {
                task_id: Some(task_id),
                key: row.key,
                client_id: client_id.to_string(),
                at_ms: now,
            });
            Ok(SubmitAck::Recorded)
        })
    }

    pub fn task_status(&self, query: &StatusQuery) -> Result<TaskStatus, SchedulerError> {
        let key = TaskKey {
            resource_id: query.resource_id,
            pair_key: query.pair_key.clone(),
            case_mode: query.case_mode,
        };
        self.transact(|tx, now, _| {
            let row = get_task(tx, &key)?;
            if let Some(result) = get_record(tx, &key)? {
                return Ok(TaskStatus {
                    status: 1,
                    stale: false,
                    task_id: row.map(|r| r.task_id),
                    result: Some(result),
                });
            }
            let row = row.ok_or(SchedulerError::UnknownTask)?;
            Ok(TaskStatus {
                status: 0,
                stale: self.is_stale(row.heartbeat_at, now),
                task_id: Some(row.task_id),
                result: None,
            })
        })
    }

    pub fn heartbeat(&self, task_id: TaskId, client_id: &str) -> Result<(), SchedulerError> {
        self.transact(|tx, now, events| {
            let row = get_task_by_id(tx, task_id)?.ok_or(SchedulerError::UnknownTask)?;
            if row.status == 1 {
                return Err(SchedulerError::AlreadyComplete);
            }
            if row.owner != client_id {
                return Err(SchedulerError::NotOwner);
            }
            tx.execute("UPDATE tasks SET heartbeat_at = ?1 WHERE task_id = ?2", params![now, task_id])?;
            events.push(SchedulerEvent::Heartbeat {
                task_id,
                client_id: client_id.to_string(),
                at_ms: now,
            });
            Ok(())
        })
    }

    /// Grants ownership of an incomplete task whose claim went stale.
    pub fn takeover(&self, task_id: TaskId, client_id: &str) -> Result<TakeoverOutcome, SchedulerError> {
        self.transact(|tx, now, events| {
            let row = get_task_by_id(tx, task_id)?.ok_or(SchedulerError::UnknownTask)?;
            if row.status == 1 || !self.is_stale(row.heartbeat_at, now) {
                return Ok(TakeoverOutcome::Refused);
            }
            tx.execute(
                "UPDATE tasks SET owner = ?1, claimed_at = ?2, heartbeat_at = ?2 WHERE task_id = ?3",
                params![client_id, now, task_id],
            )?;
            events.push(SchedulerEvent::TakenOver {
                task_id,
                key: row.key,
                from: row.owner,
                to: client_id.to_string(),
                at_ms: now,
            });
            Ok(TakeoverOutcome::Grant)
        })
    }

    /// Stores a result directly in the crowdsourced table, as if contributed
    /// earlier. First write wins; returns whether this call wrote it.
    pub fn preload(
        &self,
        resource_id: ResourceId,
        case_mode: CaseMode,
        result: &CooccurrenceResult,
        contributor: &str,
    ) -> Result<bool, SchedulerError> {
        let key = TaskKey {
            resource_id,
            pair_key: result.pair.canonical_key(),
            case_mode,
        };
        self.transact(|tx, now, events| {
            if get_resource(tx, &resource_id)?.is_none() {
                return Err(SchedulerError::UnknownResource(resource_id.to_hex()));
            }
            if get_record(tx, &key)?.is_some() {
                return Ok(false);
            }
            insert_record(tx, &key, result, contributor, now)?;
            tx.execute(
                "UPDATE tasks SET status = 1 WHERE resource_id = ?1 AND pair_key = ?2 AND case_mode = ?3",
                params![key.resource_id.to_hex(), key.pair_key, case_str(key.case_mode)],
            )?;
            events.push(SchedulerEvent::Recorded {
                task_id: None,
                key,
                client_id: contributor.to_string(),
                at_ms: now,
            });
            Ok(true)
        })
    }

    /// Number of stored crowdsourced records.
    pub fn record_count(&self) -> Result<usize, SchedulerError> {
        self.transact(|tx, _, _| Ok(tx.query_row("SELECT COUNT(*) FROM records", [], |r| r.get::<_, i64>(0))? as usize))
    }

    /// Record contributor for a key, if one exists.
    pub fn contributor(&self, key: &TaskKey) -> Result<Option<String>, SchedulerError> {
        self.transact(|tx, _, _| {
            Ok(tx
                .query_row(
                    "SELECT contributor FROM records WHERE resource_id = ?1 AND pair_key = ?2 AND case_mode = ?3",
                    params![key.resource_id.to_hex(), key.pair_key, case_str(key.case_mode)],
                    |r| r.get(0),
                )
                .optional()?)
        })
    }
}

fn check_pair_key(pair_key: &str) -> Result<(), SchedulerError> {
    match pair_key.split_once('\t') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && a <= b && !b.contains('\t') => Ok(()),
        _ => Err(SchedulerError::BadRequest(format!("pair_key {pair_key:?} is not canonical"))),
    }
}

fn insert_record(
    tx: &Transaction<'_>,
    key: &TaskKey,
    result: &CooccurrenceResult,
    contributor: &str,
    now: i64,
) -> Result<(), SchedulerError> {
    let mut stored = result.canonical();
    if stored.co_keys.as_ref().is_some_and(|k| k.len() > DEFAULT_CO_KEYS_LIMIT) {
        stored.co_keys = None;
    }
    let json = serde_json::to_string(&stored).map_err(|e| SchedulerError::Store(e.to_string()))?;
    tx.execute(
        "INSERT INTO records VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        params![key.resource_id.to_hex(), key.pair_key, case_str(key.case_mode), json, contributor, now],
    )?;
    Ok(())
}

fn resource_from_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<Result<ResourceEntry, SchedulerError>> {
    let id: String = r.get(0)?;
    let granularity: String = r.get(3)?;
    Ok((|| {
        Ok(ResourceEntry {
            resource_id: id.parse().map_err(|_| SchedulerError::Store(format!("bad resource id {id}")))?,
            name: r.get(1)?,
            n_docs: r.get::<_, i64>(2)? as usize,
            granularity: granularity.parse().map_err(SchedulerError::Store)?,
            uploader: r.get(4)?,
            registered_at: r.get(5)?,
        })
    })())
}

fn get_resource(tx: &Transaction<'_>, id: &ResourceId) -> Result<Option<ResourceEntry>, SchedulerError> {
    tx.query_row(
        "SELECT resource_id, name, n_docs, granularity, uploader, registered_at FROM resources WHERE resource_id = ?1",
        [id.to_hex()],
        resource_from_row,
    )
    .optional()?
    .transpose()
}

fn get_record(tx: &Transaction<'_>, key: &TaskKey) -> Result<Option<CooccurrenceResult>, SchedulerError> {
    let json: Option<String> = tx
        .query_row(
            "SELECT result FROM records WHERE resource_id = ?1 AND pair_key = ?2 AND case_mode = ?3",
            params![key.resource_id.to_hex(), key.pair_key, case_str(key.case_mode)],
            |r| r.get(0),
        )
        .optional()?;
    json.map(|j| serde_json::from_str(&j).map_err(|e| SchedulerError::Store(e.to_string())))
        .transpose()
}

fn task_from_row(r: &rusqlite::Row<'_>) -> rusqlite::Result<(TaskId, String, String, String, i64, String, i64)> {
    Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?, r.get(6)?))
}

fn decode_task(raw: (TaskId, String, String, String, i64, String, i64)) -> Result<TaskRow, SchedulerError> {
    let (task_id, rid, pair_key, case_mode, status, owner, heartbeat_at) = raw;
    Ok(TaskRow {
        task_id,
        key: TaskKey {
            resource_id: rid.parse().map_err(|_| SchedulerError::Store(format!("bad resource id {rid}")))?,
            pair_key,
            case_mode: case_mode.parse().map_err(SchedulerError::Store)?,
        },
        status,
        owner,
        heartbeat_at,
    })
}

const TASK_COLUMNS: &str = "task_id, resource_id, pair_key, case_mode, status, owner, heartbeat_at";

fn get_task(tx: &Transaction<'_>, key: &TaskKey) -> Result<Option<TaskRow>, SchedulerError> {
    tx.query_row(
        &format!("SELECT {TASK_COLUMNS} FROM tasks WHERE resource_id = ?1 AND pair_key = ?2 AND case_mode = ?3"),
        params![key.resource_id.to_hex(), key.pair_key, case_str(key.case_mode)],
        task_from_row,
    )
    .optional()?
    .map(decode_task)
    .transpose()
}

fn get_task_by_id(tx: &Transaction<'_>, task_id: TaskId) -> Result<Option<TaskRow>, SchedulerError> {
    tx.query_row(
        &format!("SELECT {TASK_COLUMNS} FROM tasks WHERE task_id = ?1"),
        [task_id],
        task_from_row,
    )
    .optional()?
    .map(decode_task)
    .transpose()
}

impl SchedulerApi for Scheduler {
    fn register_resource(&self, req: &RegisterResource) -> Result<ResourceEntry, ClientError> {
        Ok(Scheduler::register_resource(self, req)?)
    }

    fn list_resources(&self) -> Result<Vec<ResourceEntry>, ClientError> {
        Ok(Scheduler::list_resources(self)?)
    }

    fn claim(&self, req: &ClaimRequest) -> Result<ClaimResponse, ClientError> {
        Ok(self.claim_task(req)?)
    }

    fn task_status(&self, query: &StatusQuery) -> Result<TaskStatus, ClientError> {
        Ok(Scheduler::task_status(self, query)?)
    }

    fn heartbeat(&self, task_id: TaskId, client_id: &str) -> Result<(), ClientError> {
        Ok(Scheduler::heartbeat(self, task_id, client_id)?)
    }

    fn takeover(&self, task_id: TaskId, client_id: &str) -> Result<TakeoverOutcome, ClientError> {
        Ok(Scheduler::takeover(self, task_id, client_id)?)
    }

    fn submit_result(
        &self,
        task_id: TaskId,
        client_id: &str,
        result: &CooccurrenceResult,
    ) -> Result<SubmitAck, ClientError> {
        Ok(Scheduler::submit_result(self, task_id, client_id, result)?)
    }
}
