//! `coterm serve`: the scheduler over HTTP with a durable store.

use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use coterm::config::{ConfigError, KvFile};
use coterm::scheduler::{serve, Scheduler, SchedulerConfig, SystemClock};

use crate::{EXIT_ABORT, EXIT_OK};

pub const SERVE_KEYS: &[&str] = &["listen", "store_path", "stale_timeout", "fair_share_limit"];

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub listen: String,
    pub store_path: PathBuf,
    pub stale_timeout: Duration,
    pub fair_share_limit: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        let d = SchedulerConfig::default();
        ServeConfig {
            listen: "127.0.0.1:7070".into(),
            store_path: PathBuf::from("coterm-scheduler.db"),
            stale_timeout: d.stale_timeout,
            fair_share_limit: d.fair_share_limit,
        }
    }
}

impl ServeConfig {
    pub fn from_kv(kv: &KvFile) -> Result<Self, ConfigError> {
        kv.expect_keys(SERVE_KEYS)?;
        let d = ServeConfig::default();
        Ok(ServeConfig {
            listen: kv.raw("listen").map(str::to_string).unwrap_or(d.listen),
            store_path: kv.path("store_path").unwrap_or(d.store_path),
            stale_timeout: kv.duration_or("stale_timeout", d.stale_timeout)?,
            fair_share_limit: kv.get_or("fair_share_limit", d.fair_share_limit)?,
        })
    }
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = term.recv() => {}
                    _ = tokio::signal::ctrl_c() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

pub fn cmd_serve(config: Option<&Path>, listen: Option<&str>, store: Option<&Path>) -> i32 {
    let mut cfg = match config.map(KvFile::load).transpose() {
        Ok(Some(kv)) => match ServeConfig::from_kv(&kv) {
            Ok(c) => c,
            Err(e) => return crate::fail(e),
        },
        Ok(None) => ServeConfig::default(),
        Err(e) => return crate::fail(e),
    };
    if let Some(l) = listen {
        cfg.listen = l.to_string();
    }
    if let Some(s) = store {
        cfg.store_path = s.to_path_buf();
    }
    let addr: SocketAddr = match cfg.listen.parse() {
        Ok(a) => a,
        Err(e) => return crate::fail(format!("bad listen address {:?}: {e}", cfg.listen)),
    };
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => return crate::fail(e),
    };
    runtime.block_on(async move {
        let listener = match tokio::net::TcpListener::bind(addr).await {
            Ok(l) => l,
            Err(e) if e.kind() == io::ErrorKind::AddrInUse => {
                return crate::fail(format!("AddressInUse: {addr} is already bound"));
            }
            Err(e) => return crate::fail(format!("cannot listen on {addr}: {e}")),
        };
        let scheduler_config = SchedulerConfig {
            stale_timeout: cfg.stale_timeout,
            fair_share_limit: cfg.fair_share_limit,
            record_events: false,
        };
        let scheduler = match Scheduler::open(&cfg.store_path, scheduler_config, Arc::new(SystemClock)) {
            Ok(s) => Arc::new(s),
            Err(e) => return crate::fail(format!("StoreCorrupt: {}: {e}", cfg.store_path.display())),
        };
        let local = listener.local_addr().unwrap_or(addr);
        println!("listening on http://{local}");
        log::info!("store at {}", cfg.store_path.display());
        match serve(listener, scheduler, shutdown_signal()).await {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("coterm: server error: {e}");
                EXIT_ABORT
            }
        }
    })
}
