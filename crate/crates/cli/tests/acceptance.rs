//! Acceptance criteria, run in order with one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the timing criteria do not compete
//! with other tests for CPU.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{coterm, Server};
use coterm::controller::{Job, JobHooks, JobSettings};
use coterm::cooccur::{evaluate_pairs, jaccard, naive_scan, CooccurrenceResult, LocalJobOptions, PairedTerm};
use coterm::corpus::{parse_resource, ResourceId};
use coterm::gen::{generate_corpus, generate_pairs, CorpusSpec};
use coterm::index::{CaseMode, InvertedIndex};
use coterm::scheduler::{
    spawn, ClaimRequest, ClaimResponse, ClientError, HttpClient, ManualClock, RegisterResource, Scheduler,
    SchedulerApi, SchedulerConfig, SchedulerError, SchedulerEvent, StatusQuery, SubmitAck, SystemClock,
    TakeoverOutcome, TaskId,
};
use coterm::sim::{run_scenario, verify_bounds, CrashPoint, Scenario};
use coterm_cli::bench::{run_bench, BenchConfig, BenchMode};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Criterion 1 ---------------------------------------------------------------

const LETTERS: &[char] = &['a', 'b', 'c', 'd', 'e', 'é', 'x', '1', '2'];
const SEPARATORS: &[&str] = &[" ", ", ", ". ", "-", "  ", "/", "; "];

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=5);
    (0..n).map(|_| LETTERS[rng.random_range(0..LETTERS.len())]).collect()
}

fn spelling(rng: &mut ChaCha8Rng, word: &str) -> String {
    match rng.random_range(0..3) {
        0 => word.to_string(),
        1 => {
            let mut chars = word.chars();
            let first = chars.next().map(|c| c.to_uppercase().collect::<String>()).unwrap_or_default();
            first + chars.as_str()
        }
        _ => word.to_uppercase(),
    }
}

/// Independent tokenizer for the oracle.
fn oracle_tokens(text: &str, mode: CaseMode) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| match mode {
            CaseMode::Sensitive => t.to_string(),
            CaseMode::Insensitive => t.to_lowercase(),
        })
        .collect()
}

fn count_runs(tokens: &[String], term: &[String]) -> u64 {
    if tokens.len() < term.len() {
        return 0;
    }
    tokens.windows(term.len()).filter(|w| *w == term).count() as u64
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut compared = 0usize;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mode = if seed % 2 == 0 { CaseMode::Insensitive } else { CaseMode::Sensitive };
        let vocab: Vec<String> = (0..rng.random_range(1..=200)).map(|_| random_word(&mut rng)).collect();
        let n_docs = rng.random_range(1..=1000);
        let mut text = String::new();
        for i in 0..n_docs {
            text.push_str(&format!("d{i}\t"));
            for _ in 0..rng.random_range(0..=30) {
                let w = &vocab[rng.random_range(0..vocab.len())];
                text.push_str(&spelling(&mut rng, w));
                text.push_str(SEPARATORS[rng.random_range(0..SEPARATORS.len())]);
            }
            text.push('\n');
        }
        let term = |rng: &mut ChaCha8Rng| {
            let words = rng.random_range(1..=2);
            (0..words)
                .map(|_| {
                    let w = vocab[rng.random_range(0..vocab.len())].clone();
                    spelling(rng, &w)
                })
                .collect::<Vec<_>>()
                .join(" ")
        };
        let raw_pairs: Vec<(String, String)> = (0..rng.random_range(1..=50))
            .map(|_| (term(&mut rng), term(&mut rng)))
            .collect();

        let corpus = parse_resource(text.as_bytes()).map_err(|e| format!("seed {seed}: {e}"))?;
        let index = InvertedIndex::new(&corpus, mode);
        let pairs: Vec<PairedTerm> = raw_pairs
            .iter()
            .map(|(a, b)| PairedTerm::new(a, b, mode).map_err(|e| format!("seed {seed}: {e}")))
            .collect::<Result<_, _>>()?;
        let opts = LocalJobOptions {
            workers: 1 + (seed as usize % 4),
            group_column: None,
            co_keys_limit: Some(usize::MAX),
        };
        let results = evaluate_pairs(&index, &corpus, &pairs, opts).map_err(|e| format!("seed {seed}: {e}"))?;

        let docs: Vec<(String, Vec<String>)> = text
            .lines()
            .map(|line| {
                let (key, body) = line.split_once('\t').unwrap();
                (key.to_string(), oracle_tokens(body, mode))
            })
            .collect();
        for ((a, b), got) in raw_pairs.iter().zip(&results) {
            let ta = oracle_tokens(a, mode);
            let tb = oracle_tokens(b, mode);
            let (mut n_a, mut n_b, mut tf_a, mut tf_b) = (0usize, 0usize, 0u64, 0u64);
            let mut shared = Vec::new();
            for (key, toks) in &docs {
                let ca = count_runs(toks, &ta);
                let cb = count_runs(toks, &tb);
                tf_a += ca;
                tf_b += cb;
                n_a += usize::from(ca > 0);
                n_b += usize::from(cb > 0);
                if ca > 0 && cb > 0 {
                    shared.push(key.clone());
                }
            }
            shared.sort();
            let n_ab = shared.len();
            let union = n_a + n_b - n_ab;
            let expected_j = if union == 0 { 0.0 } else { n_ab as f64 / union as f64 };
            let same = (got.n_a, got.n_b, got.n_ab, got.tf_a, got.tf_b) == (n_a, n_b, n_ab, tf_a, tf_b)
                && (got.significance - expected_j).abs() <= 1e-12
                && got.co_keys.as_deref() == Some(&shared[..]);
            check(same, || {
                format!("seed {seed}, pair {a:?}/{b:?}: got {got:?}, oracle n_a={n_a} n_b={n_b} n_ab={n_ab} tf_a={tf_a} tf_b={tf_b}")
            })?;
            compared += 1;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("200 scenarios, {compared} pairs match the oracle in {:.1}s", elapsed.as_secs_f64()))
}

// Criterion 2 ---------------------------------------------------------------

fn precache_accounting() -> Outcome {
    let corpus = Arc::new(parse_resource(generate_corpus(&CorpusSpec::new(300, 60, 11)).unwrap().as_bytes()).unwrap());
    let pairs = generate_pairs(60, 10, 11).unwrap();
    let mut seen = Vec::new();
    for t_c in [0usize, 3, 10] {
        let scheduler = Arc::new(Scheduler::in_memory(SchedulerConfig::default(), Arc::new(SystemClock)).unwrap());
        scheduler
            .register_resource(&RegisterResource {
                resource_id: corpus.resource_id().to_hex(),
                name: "acceptance".into(),
                n_docs: corpus.n_docs(),
                granularity: corpus.granularity(),
                uploader: None,
            })
            .map_err(|e| e.to_string())?;
        for p in &pairs[..t_c] {
            let pair = PairedTerm::new(&p.a, &p.b, CaseMode::Insensitive).unwrap();
            scheduler
                .preload(corpus.resource_id(), CaseMode::Insensitive, &naive_scan(&corpus, &pair, CaseMode::Insensitive), "earlier")
                .map_err(|e| e.to_string())?;
        }
        let server = spawn(scheduler.clone(), "127.0.0.1:0".parse().unwrap()).map_err(|e| e.to_string())?;
        let client = HttpClient::new(&server.url());
        let settings = JobSettings {
            client_id: "solo".into(),
            pending_poll_interval: Duration::from_millis(20),
            ..JobSettings::default()
        };
        let out = Job::new(corpus.clone(), pairs.clone(), settings)
            .run_cooperative(&client, &JobHooks::default())
            .map_err(|e| e.to_string())?;
        server.shutdown().map_err(|e| e.to_string())?;
        let r = &out.report;
        check(r.t_t == 10 && r.t_c == t_c && r.e == 10 - t_c, || {
            format!("(T_t, T_c) = (10, {t_c}): measured T_t={} T_c={} E={}", r.t_t, r.t_c, r.e)
        })?;
        seen.push(format!("(10,{t_c})->E={}", r.e));
    }
    Ok(seen.join(", "))
}

// Criterion 3 ---------------------------------------------------------------

fn cooperative_split() -> Outcome {
    let start = Instant::now();
    let symmetric = run_scenario(&Scenario {
        clusters: 3,
        tasks: 30,
        stale_timeout: Duration::from_secs(1),
        ..Scenario::default()
    })
    .map_err(|e| e.to_string())?;
    verify_bounds(&symmetric).map_err(|v| format!("symmetric scenario: {v:?}"))?;
    let es: Vec<usize> = symmetric.clusters.iter().map(|c| c.e).collect();
    check(es.iter().sum::<usize>() == 30, || format!("sum E = {es:?}"))?;
    check(es.iter().all(|&e| e.abs_diff(10) <= 2), || format!("E per cluster {es:?} not within 10 +/- 2"))?;
    check(symmetric.clusters.iter().all(|c| c.alpha == 0), || "nonzero alpha without a crash".into())?;

    let crash = run_scenario(&Scenario {
        clusters: 2,
        tasks: 30,
        crash: Some(CrashPoint { cluster: 0, after: 1 }),
        stale_timeout: Duration::from_secs(1),
        ..Scenario::default()
    })
    .map_err(|e| e.to_string())?;
    verify_bounds(&crash).map_err(|v| format!("crash scenario: {v:?}"))?;
    let (dead, live) = (&crash.clusters[0], &crash.clusters[1]);
    check(dead.crashed, || "cluster 0 did not crash".into())?;
    check(crash.uncovered_keys == 0 && crash.universe == 30, || {
        format!("{} of {} tasks never completed", crash.uncovered_keys, crash.universe)
    })?;
    check(live.alpha == dead.abandoned_claims, || {
        format!("cluster 1 alpha {} != cluster 0 abandoned claims {}", live.alpha, dead.abandoned_claims)
    })?;
    check(crash.max_records_per_key == 1, || format!("a task has {} records", crash.max_records_per_key))?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "E={es:?}; crash: alpha={} abandoned={} in {:.1}s",
        live.alpha,
        dead.abandoned_claims,
        elapsed.as_secs_f64()
    ))
}

// Criterion 4 ---------------------------------------------------------------

const KEYS: usize = 50;
const CLIENTS: usize = 16;
const OPS: usize = 1000;
const STALE_MS: i64 = 1000;

fn contention_result(k: usize, client: usize) -> CooccurrenceResult {
    let pair = PairedTerm::new(&format!("a{k}"), &format!("b{k}"), CaseMode::Insensitive).unwrap();
    let (n_a, n_b, n_ab) = (1 + client % 3, 2, 1);
    CooccurrenceResult {
        pair,
        n_a,
        n_b,
        n_ab,
        tf_a: client as u64 + 1,
        tf_b: 2,
        n_docs: 10,
        significance: jaccard(n_a, n_b, n_ab).unwrap(),
        co_keys: None,
    }
}

fn protocol_safety() -> Outcome {
    let start = Instant::now();
    let clock = Arc::new(ManualClock::new(1_000_000));
    let scheduler = Scheduler::in_memory(
        SchedulerConfig {
            stale_timeout: Duration::from_millis(STALE_MS as u64),
            fair_share_limit: u64::MAX,
            record_events: true,
        },
        clock.clone(),
    )
    .unwrap();
    let rid = ResourceId::of_bytes(b"contention");
    scheduler
        .register_resource(&RegisterResource {
            resource_id: rid.to_hex(),
            name: "contention".into(),
            n_docs: 10,
            granularity: coterm::corpus::Granularity::Abstract,
            uploader: None,
        })
        .unwrap();
    let pair_key = |k: usize| PairedTerm::new(&format!("a{k}"), &format!("b{k}"), CaseMode::Insensitive).unwrap().canonical_key();
    let completed: Vec<AtomicBool> = (0..KEYS).map(|_| AtomicBool::new(false)).collect();
    let counter = AtomicUsize::new(0);
    let cached_seen: Mutex<Vec<(usize, CooccurrenceResult)>> = Mutex::new(Vec::new());
    let client_violations: Mutex<Vec<String>> = Mutex::new(Vec::new());

    std::thread::scope(|s| {
        for c in 0..CLIENTS {
            let (scheduler, clock, completed, counter) = (&scheduler, &clock, &completed, &counter);
            let (cached_seen, client_violations, pair_key) = (&cached_seen, &client_violations, &pair_key);
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + c as u64);
                let me = format!("client-{c}");
                let mut held: Vec<(usize, TaskId)> = Vec::new();
                let api: &dyn SchedulerApi = scheduler;
                while counter.fetch_add(1, Ordering::SeqCst) < OPS {
                    let k = rng.random_range(0..KEYS);
                    let roll = rng.random_range(0..100);
                    if roll < 40 {
                        let was_complete = completed[k].load(Ordering::SeqCst);
                        let resp = api.claim(&ClaimRequest {
                            client_id: me.clone(),
                            resource_id: rid,
                            pair_key: pair_key(k),
                            case_mode: CaseMode::Insensitive,
                            data_transfer: true,
                        });
                        let cached = matches!(resp, Ok(ClaimResponse::Cached { .. }));
                        let shown = format!("{resp:?}");
                        match resp {
                            Ok(ClaimResponse::Cached { result }) => cached_seen.lock().unwrap().push((k, result)),
                            Ok(ClaimResponse::Claimed { task_id, .. }) => {
                                if !held.contains(&(k, task_id)) {
                                    held.push((k, task_id));
                                }
                            }
                            Ok(ClaimResponse::Pending) => {}
                            Err(e) => client_violations.lock().unwrap().push(format!("claim error {e}")),
                        }
                        if was_complete && !cached {
                            client_violations
                                .lock()
                                .unwrap()
                                .push(format!("claim of completed key {k} returned {shown}"));
                        }
                    } else if roll < 65 && !held.is_empty() {
                        let (hk, task_id) = held.swap_remove(rng.random_range(0..held.len()));
                        match api.submit_result(task_id, &me, &contention_result(hk, c)) {
                            Ok(SubmitAck::Recorded) => completed[hk].store(true, Ordering::SeqCst),
                            Ok(SubmitAck::AlreadyComplete) | Err(ClientError::Api(SchedulerError::NotOwner)) => {}
                            Err(e) => client_violations.lock().unwrap().push(format!("submit error {e}")),
                        }
                    } else if roll < 80 && !held.is_empty() {
                        let (_, task_id) = held[rng.random_range(0..held.len())];
                        match api.heartbeat(task_id, &me) {
                            Ok(())
                            | Err(ClientError::Api(SchedulerError::NotOwner | SchedulerError::AlreadyComplete)) => {}
                            Err(e) => client_violations.lock().unwrap().push(format!("heartbeat error {e}")),
                        }
                    } else if roll < 92 {
                        let status = api.task_status(&StatusQuery {
                            resource_id: rid,
                            pair_key: pair_key(k),
                            case_mode: CaseMode::Insensitive,
                        });
                        if let Ok(st) = status {
                            if let (false, Some(task_id)) = (st.is_complete(), st.task_id) {
                                if let Ok(TakeoverOutcome::Grant) = api.takeover(task_id, &me) {
                                    held.push((k, task_id));
                                }
                            }
                        }
                    } else {
                        clock.advance_ms(rng.random_range(100..700));
                    }
                }
            });
        }
    });

    let mut violations = client_violations.into_inner().unwrap();
    let mut task_key: HashMap<TaskId, String> = HashMap::new();
    let mut owner: HashMap<String, (String, i64)> = HashMap::new();
    let mut first_writer: BTreeMap<String, String> = BTreeMap::new();
    let mut records: BTreeMap<String, usize> = BTreeMap::new();
    let events = scheduler.events();
    let mut transfers = 0;
    for event in &events {
        match event {
            SchedulerEvent::Claimed {
                task_id,
                key,
                client_id,
                at_ms,
                ..
            }
            | SchedulerEvent::TakenOver {
                task_id,
                key,
                to: client_id,
                at_ms,
                ..
            } => {
                task_key.insert(*task_id, key.pair_key.clone());
                if records.contains_key(&key.pair_key) {
                    violations.push(format!("{:?} claimed after completion", key.pair_key));
                }
                if let Some((prev, beat)) = owner.get(&key.pair_key) {
                    if prev != client_id {
                        transfers += 1;
                        if at_ms - beat <= STALE_MS {
                            violations.push(format!(
                                "{:?} moved from {prev} to {client_id} while the claim was live",
                                key.pair_key
                            ));
                        }
                    }
                }
                owner.insert(key.pair_key.clone(), (client_id.clone(), *at_ms));
            }
            SchedulerEvent::Heartbeat {
                task_id,
                client_id,
                at_ms,
            } => {
                let key = &task_key[task_id];
                match owner.get_mut(key) {
                    Some((o, beat)) if o == client_id => *beat = *at_ms,
                    _ => violations.push(format!("heartbeat on {key:?} by non-owner {client_id}")),
                }
            }
            SchedulerEvent::Recorded { key, client_id, .. } => {
                *records.entry(key.pair_key.clone()).or_default() += 1;
                if owner.get(&key.pair_key).map(|(o, _)| o) != Some(client_id) {
                    violations.push(format!("{:?} recorded by non-owner {client_id}", key.pair_key));
                }
                first_writer.entry(key.pair_key.clone()).or_insert_with(|| client_id.clone());
            }
            SchedulerEvent::Delivered { key, .. } => {
                if !records.contains_key(&key.pair_key) {
                    violations.push(format!("{:?} delivered before completion", key.pair_key));
                }
            }
        }
    }
    for (key, n) in &records {
        if *n != 1 {
            violations.push(format!("{key:?} has {n} records"));
        }
    }
    if scheduler.record_count().unwrap() != records.len() {
        violations.push("stored record count differs from the event log".into());
    }
    let expected = |k: usize| -> Option<CooccurrenceResult> {
        let writer = first_writer.get(&pair_key(k))?;
        let c: usize = writer.trim_start_matches("client-").parse().unwrap();
        Some(contention_result(k, c).canonical())
    };
    for k in 0..KEYS {
        let status = scheduler
            .task_status(&StatusQuery {
                resource_id: rid,
                pair_key: pair_key(k),
                case_mode: CaseMode::Insensitive,
            })
            .unwrap();
        if status.result.map(|r| r.canonical()) != expected(k) {
            violations.push(format!("key {k}: stored result is not the first write"));
        }
    }
    for (k, result) in cached_seen.into_inner().unwrap() {
        if Some(result.canonical()) != expected(k) {
            violations.push(format!("key {k}: a cached delivery differs from the first write"));
        }
    }
    let elapsed = start.elapsed();
    check(violations.is_empty(), || format!("{} violations, first: {}", violations.len(), violations[0]))?;
    check(records.len() > 0 && transfers > 0, || {
        format!("contention too weak: {} completions, {transfers} stale transfers", records.len())
    })?;
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{OPS} ops by {CLIENTS} clients: {} keys completed, {transfers} stale transfers, {} events checked",
        records.len(),
        events.len()
    ))
}

// Criteria 5 and 6 ----------------------------------------------------------

fn speed_ordering() -> Outcome {
    let cfg = BenchConfig {
        n_docs: 100_000,
        n_pairs: 100,
        worker_counts: vec![1],
        ..BenchConfig::default()
    };
    let rows = run_bench(&cfg).map_err(|e| e.to_string())?;
    let time = |mode| rows.iter().find(|r| r.mode == mode).unwrap().wall_time_seconds;
    let (naive, indexed) = (time(BenchMode::NaiveScan), time(BenchMode::Indexed));
    let ratio = indexed / naive;
    check(ratio <= 0.5, || format!("indexed {indexed:.3}s / naive {naive:.3}s = {ratio:.3} > 0.5"))?;
    Ok(format!("indexed {indexed:.3}s vs naive {naive:.3}s, ratio {ratio:.3}; results identical"))
}

fn scalability_ordering() -> Outcome {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cfg = BenchConfig {
        n_docs: 100_000,
        n_pairs: 200,
        worker_counts: vec![1, 4],
        naive: false,
        repeats: 2,
        ..BenchConfig::default()
    };
    let rows = run_bench(&cfg).map_err(|e| e.to_string())?;
    let time = |w| rows.iter().find(|r| r.workers == w).unwrap().wall_time_seconds;
    let (one, four) = (time(1), time(4));
    let ratio = four / one;
    check(ratio <= 0.6, || {
        format!("4 workers {four:.3}s / 1 worker {one:.3}s = {ratio:.3} > 0.6 ({cores} CPU core(s) available)")
    })?;
    Ok(format!("4 workers {four:.3}s vs 1 worker {one:.3}s, ratio {ratio:.3} on {cores} core(s)"))
}

// Criterion 7 ---------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("corpus.tsv");
    let out = coterm(&["gen-corpus", "--docs", "2000", "--vocab", "300", "--seed", "5", "--out", corpus.to_str().unwrap()]);
    check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let mut pairs = coterm::gen::render_pairs(&generate_pairs(100, 60, 5).unwrap());
    pairs.push_str("t3\tT1\nt1\tt3\nnothing\t--\n");
    fs::write(dir.path().join("pairs.tsv"), pairs).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (name, seed, workers) in [("a", 1, 1), ("b", 987_654_321, 3)] {
        let conf = dir.path().join(format!("{name}.conf"));
        fs::write(
            &conf,
            format!(
                "resource_path = corpus.tsv\npair_list_path = pairs.tsv\noutput_path = {name}.tsv\nshuffle_seed = {seed}\nworkers = {workers}\n"
            ),
        )
        .map_err(|e| e.to_string())?;
        let out = coterm(&["run", "--config", conf.to_str().unwrap()]);
        check(out.status.code() == Some(0), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        outputs.push(fs::read(dir.path().join(format!("{name}.tsv"))).map_err(|e| e.to_string())?);
    }
    check(outputs[0] == outputs[1], || "results files differ".into())?;
    Ok(format!("{} byte results files identical across seeds and worker counts", outputs[0].len()))
}

// Criterion 8 ---------------------------------------------------------------

fn durability() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("scheduler.db");
    let corpus = parse_resource(generate_corpus(&CorpusSpec::new(500, 80, 8)).unwrap().as_bytes()).unwrap();
    let pairs: Vec<PairedTerm> = generate_pairs(60, 10, 8)
        .unwrap()
        .iter()
        .map(|p| PairedTerm::new(&p.a, &p.b, CaseMode::Insensitive).unwrap())
        .collect();
    let claim = |pair: &PairedTerm| ClaimRequest {
        client_id: "durable".into(),
        resource_id: corpus.resource_id(),
        pair_key: pair.canonical_key(),
        case_mode: CaseMode::Insensitive,
        data_transfer: true,
    };

    let mut first = Server::start(&store, &[]);
    let client = HttpClient::new(&first.url);
    client
        .register_resource(&RegisterResource {
            resource_id: corpus.resource_id().to_hex(),
            name: "durable".into(),
            n_docs: corpus.n_docs(),
            granularity: corpus.granularity(),
            uploader: None,
        })
        .map_err(|e| e.to_string())?;
    let mut originals = Vec::new();
    for pair in &pairs {
        let ClaimResponse::Claimed { task_id, .. } = client.claim(&claim(pair)).map_err(|e| e.to_string())? else {
            return Err(format!("{pair:?} was not claimable"));
        };
        let result = naive_scan(&corpus, pair, CaseMode::Insensitive);
        client.submit_result(task_id, "durable", &result).map_err(|e| e.to_string())?;
        originals.push(result);
    }
    first.kill();

    let second = Server::start(&store, &[]);
    let client = HttpClient::new(&second.url);
    let mut cached = 0;
    for (pair, original) in pairs.iter().zip(&originals) {
        match client.claim(&claim(pair)).map_err(|e| e.to_string())? {
            ClaimResponse::Cached { result } if result.canonical() == original.canonical() => cached += 1,
            other => return Err(format!("{pair:?} after restart: {other:?}")),
        }
    }
    Ok(format!("{cached}/10 claims cached with original results after SIGKILL and restart"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("precache accounting", precache_accounting),
        ("cooperative split and takeover", cooperative_split),
        ("protocol safety under contention", protocol_safety),
        ("speed ordering", speed_ordering),
        ("scalability ordering", scalability_ordering),
        ("determinism", determinism),
        ("durability", durability),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("acceptance {} {name}: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
