use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dpledger_bench::sample_draft;
use dpledger_core::dp::{Column, Schema};
use dpledger_core::ledger::{self, Ledger};
use dpledger_core::reuse::HistoryEntry;
use dpledger_core::service::{AccountConfig, BudgetConfig};
use dpledger_core::{
    canonical_key, compute_sigma, decide, gaussian_mechanism, partial_params, Comparator, Dataset,
    FeeSchedule, HistoryIndex, PrivacyParams, QueryDescriptor, QueryRequest, QueryService,
    Sensitivity, ServiceConfig, Sigma,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn mechanism(c: &mut Criterion) {
    let sens = Sensitivity::new(1.0).unwrap();
    let params = PrivacyParams::new(1.0, 1e-5).unwrap();
    c.bench_function("compute_sigma", |b| {
        b.iter(|| compute_sigma(black_box(params), black_box(sens)))
    });
    c.bench_function("partial_params", |b| {
        b.iter(|| partial_params(black_box(3.0), black_box(5.0)))
    });
    let sigma = Sigma::new(4.8448).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    c.bench_function("gaussian_mechanism", |b| {
        b.iter(|| gaussian_mechanism(black_box(10.0), sigma, &mut rng))
    });
}

fn reuse(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let key = canonical_key(&QueryDescriptor::count());
    let mut hist = HistoryIndex::new();
    for i in 0..1000 {
        hist.insert(
            key,
            HistoryEntry {
                record_index: i,
                sigma: rng.random_range(1.0..10.0),
                answer: 0.0,
            },
        );
    }
    let sigmas: Vec<Sigma> = (0..64)
        .map(|_| Sigma::new(rng.random_range(0.5..12.0)).unwrap())
        .collect();
    let mut i = 0;
    c.bench_function("decide/1000_releases", |b| {
        b.iter(|| {
            i = (i + 1) % sigmas.len();
            decide(&key, sigmas[i], black_box(&hist))
        })
    });
}

fn ledger_ops(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut ledger = Ledger::open(dir.path().join("append.jsonl")).unwrap();
    ledger.set_sync(false);
    let mut i = 0;
    c.bench_function("ledger_append/no_fsync", |b| {
        b.iter(|| {
            i += 1;
            let rec = ledger.seal(sample_draft(i));
            ledger.append(rec).unwrap()
        })
    });

    let path = dir.path().join("verify.jsonl");
    let mut ledger = Ledger::open(&path).unwrap();
    ledger.set_sync(false);
    for i in 0..1000 {
        let rec = ledger.seal(sample_draft(i));
        ledger.append(rec).unwrap();
    }
    let bytes = std::fs::read(&path).unwrap();
    c.bench_function("ledger_verify/1000_records", |b| {
        b.iter(|| ledger::verify_bytes(black_box(&bytes)))
    });
}

fn service(c: &mut Criterion) {
    let columns = vec![
        Column::new("age", 0.0, 100.0),
        Column::new("income", 0.0, 1000.0),
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let rows = (0..10_000)
        .map(|_| vec![rng.random_range(0.0..100.0), rng.random_range(0.0..1000.0)])
        .collect();
    let dataset = Dataset::from_rows(Schema::new(columns.clone()).unwrap(), rows).unwrap();
    let payer = "00000000000000000000000000000000000000aa";
    let make_config = |dir: &std::path::Path| ServiceConfig {
        dataset: dir.join("unused.csv"),
        data_dir: dir.join("data"),
        listen: ([127, 0, 0, 1], 0).into(),
        seed: Some(4),
        budget: BudgetConfig {
            epsilon: 1e12,
            delta: 0.5,
        },
        fees: FeeSchedule::default(),
        schema: columns.clone(),
        accounts: vec![AccountConfig {
            id: Some(payer.into()),
            balance: 1e12,
        }],
        sync: false,
    };
    let request = |eps: f64| QueryRequest {
        account_id: payer.into(),
        descriptor: QueryDescriptor::mean("income").filter("age", Comparator::Gt, 30.0),
        epsilon: eps,
        delta: 1e-9,
    };

    let dir = tempfile::tempdir().unwrap();
    let svc =
        QueryService::open_with_dataset(&make_config(dir.path()), dataset.clone(), None).unwrap();
    svc.submit_query(&request(1.0)).unwrap();
    c.bench_function("submit_query/exact_match", |b| {
        b.iter(|| svc.submit_query(&request(1.0)).unwrap())
    });

    c.bench_function("submit_query/fresh_10k_rows", |b| {
        b.iter_batched(
            || {
                let dir = tempfile::tempdir().unwrap();
                let svc = QueryService::open_with_dataset(
                    &make_config(dir.path()),
                    dataset.clone(),
                    None,
                )
                .unwrap();
                (dir, svc)
            },
            |(_dir, svc)| svc.submit_query(&request(1.0)).unwrap(),
            BatchSize::PerIteration,
        )
    });
}

criterion_group!(benches, mechanism, reuse, ledger_ops, service);
criterion_main!(benches);
