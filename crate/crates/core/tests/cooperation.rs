use std::sync::Arc;
use std::time::Duration;

use coterm::controller::{Job, JobHooks, JobSettings, Origin};
use coterm::cooccur::{naive_scan, InputPair, PairedTerm};
use coterm::corpus::parse_resource;
use coterm::gen::{generate_corpus, generate_pairs, CorpusSpec};
use coterm::index::CaseMode;
use coterm::scheduler::{RegisterResource, Scheduler, SchedulerConfig, SchedulerEvent, SystemClock};
use coterm::sim::{run_scenario, verify_bounds, CrashPoint, Scenario};

fn fast_settings(client: &str) -> JobSettings {
    JobSettings {
        client_id: client.into(),
        pending_poll_interval: Duration::from_millis(20),
        heartbeat_interval: Duration::from_millis(100),
        ..JobSettings::default()
    }
}

#[test]
fn precached_tasks_are_not_executed() {
    let corpus = Arc::new(parse_resource(generate_corpus(&CorpusSpec::new(60, 30, 4)).unwrap().as_bytes()).unwrap());
    let pairs = generate_pairs(30, 10, 4).unwrap();
    for t_c in [0, 3, 10] {
        let scheduler = Scheduler::in_memory(SchedulerConfig::default(), Arc::new(SystemClock)).unwrap();
        scheduler
            .register_resource(&RegisterResource {
                resource_id: corpus.resource_id().to_hex(),
                name: "gen".into(),
                n_docs: corpus.n_docs(),
                granularity: corpus.granularity(),
                uploader: None,
            })
            .unwrap();
        for p in &pairs[..t_c] {
            let pair = PairedTerm::new(&p.a, &p.b, CaseMode::Insensitive).unwrap();
            let r = naive_scan(&corpus, &pair, CaseMode::Insensitive);
            assert!(scheduler.preload(corpus.resource_id(), CaseMode::Insensitive, &r, "earlier").unwrap());
        }
        let job = Job::new(corpus.clone(), pairs.clone(), fast_settings("solo"));
        let out = job.run_cooperative(&scheduler, &JobHooks::default()).unwrap();
        assert_eq!(out.report.t_t, 10);
        assert_eq!(out.report.t_c, t_c);
        assert_eq!(out.report.e, 10 - t_c);
        assert_eq!(out.rows.len(), 10);
        let standalone = Job::new(corpus.clone(), pairs.clone(), fast_settings("solo")).run_standalone().unwrap();
        for (a, b) in out.rows.iter().zip(&standalone.rows) {
            assert_eq!(a.result, b.result);
        }
    }
}

#[test]
fn two_identical_jobs_split_the_work() {
    let corpus = Arc::new(parse_resource(generate_corpus(&CorpusSpec::new(60, 30, 9)).unwrap().as_bytes()).unwrap());
    let pairs: Vec<InputPair> = generate_pairs(30, 10, 9).unwrap();
    let scheduler = Scheduler::in_memory(
        SchedulerConfig {
            record_events: true,
            ..SchedulerConfig::default()
        },
        Arc::new(SystemClock),
    )
    .unwrap();
    let hooks = JobHooks {
        task_delay: Duration::from_millis(10),
        crash_after: None,
    };
    let outs = std::thread::scope(|s| {
        let handles: Vec<_> = (0..2)
            .map(|c| {
                let mut settings = fast_settings(&format!("c{c}"));
                settings.shuffle_seed = c;
                let job = Job::new(corpus.clone(), pairs.clone(), settings);
                let (scheduler, hooks) = (&scheduler, &hooks);
                s.spawn(move || job.run_cooperative(scheduler, hooks).unwrap())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect::<Vec<_>>()
    });
    assert_eq!(outs.iter().map(|o| o.report.e).sum::<usize>(), 10);
    assert!(outs.iter().all(|o| o.report.alpha == 0));
    assert_eq!(outs[0].rows.iter().map(|r| r.result.clone()).collect::<Vec<_>>(), outs[1].rows.iter().map(|r| r.result.clone()).collect::<Vec<_>>());
    let recorded = scheduler
        .events()
        .iter()
        .filter(|e| matches!(e, SchedulerEvent::Recorded { .. }))
        .count();
    assert_eq!(recorded, 10);
    assert_eq!(scheduler.record_count().unwrap(), 10);
}

#[test]
fn degraded_when_scheduler_disappears() {
    let corpus = Arc::new(parse_resource(b"d1\ta b\nd2\tb c\n").unwrap());
    let job = Job::new(corpus, vec![InputPair::new("a", "b")], fast_settings("x"));
    let client = coterm::scheduler::HttpClient::with_timeout("http://127.0.0.1:9", Duration::from_millis(200));
    let err = job.run_cooperative(&client, &JobHooks::default()).unwrap_err();
    assert!(err.to_string().contains("unreachable"), "{err}");
}

#[test]
fn three_symmetric_clusters_share_evenly() {
    let s = Scenario {
        clusters: 3,
        tasks: 30,
        ..Scenario::default()
    };
    let report = run_scenario(&s).unwrap();
    verify_bounds(&report).unwrap();
    assert_eq!(report.clusters.iter().map(|c| c.e).sum::<usize>(), 30);
    for c in &report.clusters {
        assert!((c.e as f64 - 10.0).abs() <= 2.0, "{:?}", report.clusters);
        assert_eq!(c.alpha, 0);
    }
}

#[test]
fn crashed_cluster_claims_are_taken_over() {
    let s = Scenario {
        clusters: 2,
        tasks: 30,
        crash: Some(CrashPoint { cluster: 0, after: 1 }),
        ..Scenario::default()
    };
    let report = run_scenario(&s).unwrap();
    verify_bounds(&report).unwrap();
    let (dead, live) = (&report.clusters[0], &report.clusters[1]);
    assert!(dead.crashed);
    assert!(dead.abandoned_claims >= 1);
    assert_eq!(live.alpha, dead.abandoned_claims);
    assert_eq!(report.uncovered_keys, 0);
    assert_eq!(report.max_records_per_key, 1);
    assert!(report
        .executions
        .iter()
        .filter(|x| x.cluster == 1)
        .any(|x| x.origin == Origin::TakenOver));
}
