//! Acceptance suite. Each test covers one release criterion at its stated
//! tolerance and prints one PASS line; run with `--nocapture` to see them.

mod common;

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use common::DeskFixture;
use dhnsw::bench::{build_index, upload_to_target, Target};
use dhnsw::config::Settings;
use dhnsw::dataset::{generate_mixture, ground_truth, mean_recall, mixture_queries};
use dhnsw::engine::{ExecMode, QueryBatch};
use dhnsw::error::Error;
use dhnsw::hnsw::{HnswGraph, HnswParams, SearchParams, VectorRecord};
use dhnsw::layout::{
    decode_cluster, encode_cluster, overflow_entry_limit, OverflowHeader, OVERFLOW_HEADER_LEN,
};
use dhnsw::memory::{spawn_server, MemoryNode};
use dhnsw::partition::SubCluster;
use dhnsw::transport::{FabricConfig, ReadSpec, Transport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(fx: &DeskFixture, queries: Vec<Vec<f32>>, probes: usize) -> QueryBatch {
    QueryBatch {
        queries,
        k: fx.settings.k,
        probes,
        ef_search: fx.settings.ef_search,
    }
}

/// Criterion 1: recall of the full pipeline on the desk-scale workload, with
/// the whole single-threaded run (build + oracle + queries) under a minute.
#[test]
fn c1_oracle_recall_at_desk_scale() {
    let started = Instant::now();
    let settings = common::desk_settings();
    let base = generate_mixture(&settings.synthetic_spec());
    let queries = mixture_queries(&settings.synthetic_spec(), settings.queries, 1);
    let truth = ground_truth(&base, &queries, settings.k).unwrap();
    let built = build_index(&base, &settings).unwrap();
    let target = Target::Inproc(MemoryNode::new());
    upload_to_target(&built, &target, &settings).unwrap();
    let Target::Inproc(node) = &target else {
        unreachable!()
    };

    let mut engine = dhnsw::engine::ComputeEngine::connect(
        built.meta.clone(),
        Transport::connect_inproc(Arc::clone(node), FabricConfig::default()),
        dhnsw::engine::EngineConfig {
            ef_meta: settings.ef_meta_resolved(),
            cache_clusters: settings.cache_clusters_resolved(built.meta.partition_count()),
        },
    )
    .unwrap();
    let out = engine
        .execute_batch(&QueryBatch {
            queries: queries.clone(),
            k: 10,
            probes: 4,
            ef_search: 48,
        })
        .unwrap();
    let ids: Vec<Vec<u64>> = out
        .results
        .iter()
        .map(|hits| hits.iter().map(|h| h.0).collect())
        .collect();
    let recall = mean_recall(&ids, &truth, 10).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    assert!(recall >= 0.80, "recall@10 {recall:.4} below 0.80");
    assert!(elapsed < 60.0, "single-threaded run took {elapsed:.1}s");
    println!(
        "criterion 1 PASS: recall@10 {recall:.4} >= 0.80 on 20k/64-partition workload in {elapsed:.1}s"
    );
}

/// Criterion 2: exact round-trip identities per mode on a cold cache,
/// asserted on transport stats.
#[test]
fn c2_round_trip_identities() {
    let fx = DeskFixture::get();
    let queries = fx.queries.clone();
    assert_eq!(queries.len(), 2000);

    let mut naive = fx.engine(6, 8);
    let naive_out = naive.execute_naive(&batch(fx, queries.clone(), 2)).unwrap();
    assert_eq!(
        naive_out.stats.round_trips, 4000,
        "naive must cost s*b reads"
    );

    let mut nodoorbell = fx.engine(6, 8);
    let plan = nodoorbell
        .plan_batch(&batch(fx, queries.clone(), 2))
        .unwrap();
    let unique = plan.fetch_list.len() as u64;
    let nd_out = nodoorbell
        .execute_nodoorbell(&batch(fx, queries.clone(), 2))
        .unwrap();
    assert_eq!(nd_out.stats.round_trips, unique);

    let mut full = fx.engine(6, 8);
    let full_out = full.execute_batch(&batch(fx, queries, 2)).unwrap();
    assert_eq!(full_out.stats.round_trips, unique.div_ceil(8) + 1);

    println!(
        "criterion 2 PASS: naive 4000, nodoorbell {unique}, full {} (= ceil({unique}/8) + 1 directory read)",
        full_out.stats.round_trips
    );
}

/// Criterion 3: round-trip reduction of the full mode over naive on the
/// desk-scale workload with a 10% cache.
#[test]
fn c3_round_trip_reduction() {
    let fx = DeskFixture::get();
    let cache = fx.settings.cache_clusters_resolved(64);
    assert_eq!(cache, 6); // 10% of 64 partitions

    let mut naive = fx.engine(cache, 8);
    let naive_out = naive
        .execute_naive(&batch(fx, fx.queries.clone(), 4))
        .unwrap();
    let mut full = fx.engine(cache, 8);
    let full_out = full
        .execute_batch(&batch(fx, fx.queries.clone(), 4))
        .unwrap();

    let n = fx.queries.len() as f64;
    let naive_per_query = naive_out.stats.round_trips as f64 / n;
    let full_per_query = full_out.stats.round_trips as f64 / n;
    let ratio = naive_per_query / full_per_query;
    assert!(
        ratio >= 50.0,
        "round-trip reduction {ratio:.1}x below 50x (naive {naive_per_query:.3}/q, full {full_per_query:.5}/q)"
    );
    println!(
        "criterion 3 PASS: {naive_per_query:.3} vs {full_per_query:.5} round trips per query ({ratio:.0}x reduction)"
    );
}

/// Criterion 4: the three execution modes return identical per-query result
/// id-sets on cold caches. Zero tolerance.
#[test]
fn c4_mode_equivalence() {
    let fx = DeskFixture::get();
    let queries: Vec<Vec<f32>> = fx.queries.iter().take(500).cloned().collect();

    let mut outs = Vec::new();
    for mode in [ExecMode::Naive, ExecMode::NoDoorbell, ExecMode::Full] {
        let mut engine = fx.engine(6, 8);
        outs.push(
            engine
                .execute(mode, &batch(fx, queries.clone(), 4))
                .unwrap(),
        );
    }
    for qi in 0..queries.len() {
        let naive: HashSet<u64> = outs[0].results[qi].iter().map(|h| h.0).collect();
        for out in &outs[1..] {
            let other: HashSet<u64> = out.results[qi].iter().map(|h| h.0).collect();
            assert_eq!(naive, other, "query {qi} differs between modes");
        }
    }
    println!("criterion 4 PASS: identical id-sets across naive/nodoorbell/full on 500 queries");
}

/// Criterion 5: codec round-trip on 1000 seeded clusters (behavioral
/// equality on 20 probes each) and corruption detection. Zero tolerance.
#[test]
fn c5_codec_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for case in 0..1000u64 {
        let n = rng.gen_range(1..40);
        let dim = rng.gen_range(2..12);
        let records: Vec<VectorRecord<f32>> = (0..n)
            .map(|i| {
                VectorRecord::new(
                    case * 1000 + i,
                    (0..dim).map(|_| rng.gen_range(-4.0f32..4.0)).collect(),
                )
            })
            .collect();
        let sub = SubCluster {
            cluster_id: case as u32,
            graph: HnswGraph::build(&records, HnswParams::default().with_seed(case)).unwrap(),
        };
        let blob = encode_cluster(&sub);
        let decoded = decode_cluster(&blob).unwrap();
        assert_eq!(encode_cluster(&decoded), blob, "re-encode differs");

        for _ in 0..20 {
            let q: Vec<f32> = (0..dim).map(|_| rng.gen_range(-4.0f32..4.0)).collect();
            let a = sub.graph.search_knn(&q, SearchParams::new(5, 16)).unwrap();
            let b = decoded
                .graph
                .search_knn(&q, SearchParams::new(5, 16))
                .unwrap();
            assert_eq!(a, b, "decoded cluster answers differently");
        }

        let mut corrupt = blob.clone();
        let pos = rng.gen_range(0..corrupt.len());
        corrupt[pos] ^= 1 << rng.gen_range(0..8);
        assert!(
            decode_cluster(&corrupt).is_err(),
            "single-byte flip at {pos} went undetected"
        );
    }
    println!("criterion 5 PASS: 1000 clusters round-trip exactly; every single-byte flip detected");
}

/// Criterion 6: insertion findability and safety across 8 concurrent
/// workers, exact overflow counts, exact capacity boundary. Zero tolerance.
#[test]
fn c6_insertion_findability_and_safety() {
    // Small planted dataset with 4 partitions and room for 1000 inserts.
    let settings = Settings {
        vectors: 400,
        dim: 4,
        blobs: 4,
        representatives: 4,
        b: 1,
        k: 1,
        // Every insert may classify into one group in the worst case.
        overflow_capacity: Some(OVERFLOW_HEADER_LEN + 1100 * (8 + 16)),
        seed: 7,
        ..Settings::default()
    };
    let base = generate_mixture(&settings.synthetic_spec());
    let built = build_index(&base, &settings).unwrap();
    let target = Target::Inproc(MemoryNode::new());
    upload_to_target(&built, &target, &settings).unwrap();
    let Target::Inproc(node) = &target else {
        unreachable!()
    };

    let make_engine = || {
        dhnsw::engine::ComputeEngine::connect(
            built.meta.clone(),
            Transport::connect_inproc(Arc::clone(node), FabricConfig::default()),
            dhnsw::engine::EngineConfig {
                ef_meta: 4,
                cache_clusters: 2,
            },
        )
        .unwrap()
    };

    // 8 workers, 125 inserts each, vectors drawn from the same mixture.
    let inserted: Vec<VectorRecord<f32>> = mixture_queries(&settings.synthetic_spec(), 1000, 9)
        .into_iter()
        .enumerate()
        .map(|(i, values)| VectorRecord::new(1_000_000 + i as u64, values))
        .collect();
    std::thread::scope(|scope| {
        for chunk in inserted.chunks(125) {
            let mut engine = make_engine();
            scope.spawn(move || {
                for record in chunk {
                    engine.insert_vector(record).unwrap();
                }
            });
        }
    });

    // Every inserted vector is found at distance zero by a fresh worker.
    let mut probe = make_engine();
    for chunk in inserted.chunks(250) {
        let out = probe
            .execute_batch(&QueryBatch {
                queries: chunk.iter().map(|r| r.values.clone()).collect(),
                k: 1,
                probes: 1,
                ef_search: 8,
            })
            .unwrap();
        for (record, hits) in chunk.iter().zip(out.results.iter()) {
            assert_eq!(
                hits.first(),
                Some(&(record.id, 0.0)),
                "lost insert {}",
                record.id
            );
        }
    }

    // Overflow counters across all groups sum to exactly 1000.
    let mut transport = Transport::connect_inproc(Arc::clone(node), FabricConfig::default());
    let directory = dhnsw::engine::read_directory(&mut transport).unwrap();
    let mut total = 0u64;
    let mut seen_groups = HashSet::new();
    for entry in &directory.entries {
        if seen_groups.insert(entry.group_index) {
            let raw = transport
                .read(ReadSpec::new(entry.overflow_offset, OVERFLOW_HEADER_LEN))
                .unwrap();
            let header = OverflowHeader::parse(&raw).unwrap();
            total += header.low_count as u64 + header.high_count as u64;
        }
    }
    assert_eq!(total, 1000, "overflow counters disagree with insert count");

    // Capacity boundary: a region sized for exactly three entries accepts
    // three inserts into one slot and rejects the fourth.
    let dim = 4usize;
    let tiny = Settings {
        overflow_capacity: Some(OVERFLOW_HEADER_LEN + 3 * (8 + 4 * dim as u64)),
        ..settings.clone()
    };
    let tiny_target = Target::Inproc(MemoryNode::new());
    upload_to_target(&built, &tiny_target, &tiny).unwrap();
    let Target::Inproc(tiny_node) = &tiny_target else {
        unreachable!()
    };
    let mut engine = dhnsw::engine::ComputeEngine::connect(
        built.meta.clone(),
        Transport::connect_inproc(Arc::clone(tiny_node), FabricConfig::default()),
        dhnsw::engine::EngineConfig {
            ef_meta: 4,
            cache_clusters: 2,
        },
    )
    .unwrap();
    let probe_vec = built.meta.representatives()[0].values.clone();
    let limit = overflow_entry_limit(tiny.overflow_capacity.unwrap(), dim);
    assert_eq!(limit, 3);
    for i in 0..limit {
        engine
            .insert_vector(&VectorRecord::new(2_000_000 + i, probe_vec.clone()))
            .unwrap();
    }
    let over = engine.insert_vector(&VectorRecord::new(2_000_100, probe_vec));
    assert!(
        matches!(over, Err(Error::CapacityExceeded { .. })),
        "insert past the computed limit must fail with the capacity error"
    );

    println!(
        "criterion 6 PASS: 1000 concurrent inserts all found at distance 0, counters exact, capacity boundary at {limit} entries"
    );
}

/// Criterion 7: a recorded 10k-verb workload replays identically over the
/// in-process and TCP backends. Zero tolerance.
#[test]
fn c7_backend_equivalence() {
    #[derive(Clone)]
    enum Verb {
        Read(ReadSpec),
        Write(u64, Vec<u8>),
        FetchAdd(u64, u32),
        Doorbell(Vec<ReadSpec>),
    }

    let capacity = 65_536u64;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut workload = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        workload.push(match rng.gen_range(0..4) {
            0 => {
                let len = rng.gen_range(1..512);
                Verb::Read(ReadSpec::new(rng.gen_range(0..capacity - len), len))
            }
            1 => {
                let len = rng.gen_range(1..256) as usize;
                let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                Verb::Write(rng.gen_range(0..capacity - len as u64), data)
            }
            2 => Verb::FetchAdd(rng.gen_range(0..capacity / 4 - 1) * 4, rng.gen()),
            _ => {
                let count = rng.gen_range(1..20);
                let specs = (0..count)
                    .map(|_| {
                        let len = rng.gen_range(1..256);
                        ReadSpec::new(rng.gen_range(0..capacity - len), len)
                    })
                    .collect();
                Verb::Doorbell(specs)
            }
        });
    }

    let run = |mut transport: Transport| -> (Vec<Vec<u8>>, u64) {
        let mut responses = Vec::with_capacity(workload.len());
        for verb in &workload {
            match verb {
                Verb::Read(spec) => responses.push(transport.read(*spec).unwrap()),
                Verb::Write(offset, data) => {
                    transport.write(*offset, data).unwrap();
                    responses.push(Vec::new());
                }
                Verb::FetchAdd(offset, delta) => responses.push(
                    transport
                        .fetch_add(*offset, *delta)
                        .unwrap()
                        .to_le_bytes()
                        .to_vec(),
                ),
                Verb::Doorbell(specs) => {
                    responses.push(transport.doorbell_read(specs).unwrap().concat())
                }
            }
        }
        (responses, transport.stats().round_trips)
    };

    let inproc_node = MemoryNode::new();
    inproc_node.register(capacity).unwrap();
    let (inproc_responses, inproc_rts) = run(Transport::connect_inproc(
        Arc::clone(&inproc_node),
        FabricConfig::default(),
    ));

    let tcp_node = MemoryNode::new();
    tcp_node.register(capacity).unwrap();
    let server = spawn_server(Arc::clone(&tcp_node), "127.0.0.1:0").unwrap();
    let (tcp_responses, tcp_rts) =
        run(Transport::connect_tcp(&server.addr().to_string(), FabricConfig::default()).unwrap());

    assert_eq!(
        inproc_responses, tcp_responses,
        "responses diverge between backends"
    );
    assert_eq!(
        inproc_rts, tcp_rts,
        "round-trip counts diverge between backends"
    );
    println!(
        "criterion 7 PASS: 10k verbs byte-identical over inproc and tcp ({inproc_rts} round trips each)"
    );
}

/// Criterion 8: cache retention and the c = 1 degenerate case. Exact.
#[test]
fn c8_cache_behaviour() {
    let fx = DeskFixture::get();
    // A query subset whose required clusters fit the cache.
    let queries: Vec<Vec<f32>> = fx.queries.iter().take(8).cloned().collect();

    let mut engine = fx.engine(64, 8);
    let first = engine
        .execute_nodoorbell(&batch(fx, queries.clone(), 2))
        .unwrap();
    assert!(first.stats.round_trips > 0);
    let second = engine
        .execute_nodoorbell(&batch(fx, queries.clone(), 2))
        .unwrap();
    assert_eq!(
        second.stats.round_trips, 0,
        "warm repeat must fetch nothing"
    );
    // Full mode still pays exactly the directory version check.
    let third = engine
        .execute_batch(&batch(fx, queries.clone(), 2))
        .unwrap();
    assert_eq!(third.stats.round_trips, 1);

    // c = 1 with two required clusters: both cross the fabric every batch.
    let one_query = vec![fx.queries[0].clone()];
    let mut tiny = fx.engine(1, 8);
    let mut fetches = Vec::new();
    for _ in 0..3 {
        let plan = tiny.plan_batch(&batch(fx, one_query.clone(), 2)).unwrap();
        let out = tiny
            .execute_nodoorbell(&batch(fx, one_query.clone(), 2))
            .unwrap();
        fetches.push((plan.fetch_list.len(), out.stats.round_trips));
    }
    assert_eq!(
        fetches,
        vec![(2, 2); 3],
        "c=1 must refetch both clusters every batch"
    );
    println!("criterion 8 PASS: warm repeat fetches zero clusters; c=1 refetches 2 every batch");
}

/// Reference-scale opt-in: latency-recall point on SIFT1M at ef_search 48.
/// Needs the real dataset; point `DHNSW_SIFT_DIR` at a directory holding
/// `sift_base.fvecs`, `sift_query.fvecs`, `sift_groundtruth.ivecs`.
#[test]
#[ignore = "requires the SIFT1M dataset on disk"]
fn sift1m_reference_recall() {
    let dir = std::env::var("DHNSW_SIFT_DIR").expect("set DHNSW_SIFT_DIR");
    let dir = std::path::Path::new(&dir);
    let settings = Settings {
        representatives: 500,
        b: 8,
        k: 10,
        ef_search: 48,
        base_path: Some(dir.join("sift_base.fvecs")),
        query_path: Some(dir.join("sift_query.fvecs")),
        groundtruth_path: Some(dir.join("sift_groundtruth.ivecs")),
        ef_sweep: vec![48],
        modes: vec![ExecMode::Full],
        ..Settings::default()
    };
    let workload = dhnsw::bench::load_workload(&settings).unwrap();
    let built = build_index(&workload.base, &settings).unwrap();
    let target = Target::Inproc(MemoryNode::new());
    upload_to_target(&built, &target, &settings).unwrap();
    let out = dhnsw::bench::run_experiment(
        &settings,
        &target,
        &built.meta,
        &workload.base,
        &workload.queries,
        workload.truth.clone(),
    )
    .unwrap();
    let recall = out.report.rows[0].recall_at_k;
    assert!(
        (0.83..=0.90).contains(&recall),
        "SIFT1M recall@10 {recall:.4} outside 0.86 +/- 0.03"
    );
    println!("SIFT1M reference PASS: recall@10 {recall:.4} at ef_search 48");
}
