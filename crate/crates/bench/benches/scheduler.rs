use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use coterm::corpus::{Granularity, ResourceId};
use coterm::index::CaseMode;
use coterm::scheduler::{ClaimRequest, RegisterResource, Scheduler, SchedulerConfig, SystemClock};

fn fresh() -> (Scheduler, ResourceId) {
    let scheduler = Scheduler::in_memory(SchedulerConfig::default(), Arc::new(SystemClock)).unwrap();
    let rid = ResourceId::of_bytes(b"bench");
    scheduler
        .register_resource(&RegisterResource {
            resource_id: rid.to_hex(),
            name: "bench".into(),
            n_docs: 1,
            granularity: Granularity::Abstract,
            uploader: None,
        })
        .unwrap();
    (scheduler, rid)
}

fn claims(c: &mut Criterion) {
    let request = |rid, i: usize| ClaimRequest {
        client_id: "bench".into(),
        resource_id: rid,
        pair_key: format!("a{i}\tb{i}"),
        case_mode: CaseMode::Insensitive,
        data_transfer: true,
    };
    c.bench_function("claim 1000 new tasks", |b| {
        b.iter_batched(
            fresh,
            |(scheduler, rid)| {
                for i in 0..1000 {
                    scheduler.claim_task(&request(rid, i)).unwrap();
                }
            },
            BatchSize::PerIteration,
        )
    });
}

criterion_group!(benches, claims);
criterion_main!(benches);
