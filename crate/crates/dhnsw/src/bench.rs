//! Benchmark harness: index build-and-upload, workload execution across the
//! three transport modes, and latency / recall / round-trip reporting.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::config::Settings;
use crate::dataset::{self, ground_truth, mean_recall};
use crate::engine::{
    upload_index, ComputeEngine, EngineConfig, ExecMode, PhaseTimings, QueryBatch,
};
use crate::error::{Error, Result};
use crate::hnsw::{HnswParams, VectorRecord};
use crate::layout::{
    encode_cluster, encode_empty_cluster, plan_layout, ClusterDirectory, PairingPolicy,
};
use crate::memory::MemoryNode;
use crate::partition::{
    build_meta, partition_dataset, sample_representatives, MetaIndex, PartitionAssignment,
};
use crate::transport::{FabricStats, Transport};

/// A fully built index, ready to upload: the meta index plus one blob per
/// partition (empty partitions carry a header-only blob so their directory
/// slots stay stable).
pub struct BuiltIndex {
    pub meta: MetaIndex<f32>,
    pub assignment: PartitionAssignment,
    pub blobs: Vec<Vec<u8>>,
    pub dim: usize,
}

impl BuiltIndex {
    /// Region bytes a given overflow capacity needs for these blobs.
    pub fn region_len(&self, overflow_capacity: u64) -> Result<u64> {
        let sizes: Vec<u64> = self.blobs.iter().map(|b| b.len() as u64).collect();
        Ok(plan_layout(
            self.dim as u32,
            1,
            &sizes,
            overflow_capacity,
            PairingPolicy::Sequential,
        )?
        .region_len())
    }
}

/// Sample representatives, build the meta index, assign the dataset, and
/// serialize every partition.
pub fn build_index(dataset: &[VectorRecord<f32>], settings: &Settings) -> Result<BuiltIndex> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dim = dataset[0].values.len();
    let reps = sample_representatives(dataset, settings.representatives, settings.seed)?;
    let params = HnswParams {
        m: settings.m,
        ef_construction: settings.ef_construction,
        level_cap: None,
        seed: settings.seed,
    };
    let meta = build_meta(&reps, &params)?;
    let (assignment, clusters) =
        partition_dataset(&meta, dataset, settings.ef_meta_resolved(), &params)?;
    let mut blobs: Vec<Vec<u8>> = (0..meta.partition_count())
        .map(|i| encode_empty_cluster(i as u32, dim as u32))
        .collect();
    for c in &clusters {
        blobs[c.cluster_id as usize] = encode_cluster(c);
    }
    Ok(BuiltIndex {
        meta,
        assignment,
        blobs,
        dim,
    })
}

/// Where the memory pool lives for this run.
#[derive(Clone)]
pub enum Target {
    Inproc(Arc<MemoryNode>),
    Tcp(String),
}

impl Target {
    pub fn from_settings(settings: &Settings) -> Result<Self> {
        match settings.backend.as_str() {
            "inproc" => Ok(Target::Inproc(MemoryNode::new())),
            "tcp" => Ok(Target::Tcp(settings.address.clone())),
            other => Err(Error::Config(format!("unknown backend '{other}'"))),
        }
    }

    pub fn connect(&self, settings: &Settings) -> Result<Transport> {
        match self {
            Target::Inproc(node) => Ok(Transport::connect_inproc(
                Arc::clone(node),
                settings.fabric(),
            )),
            Target::Tcp(address) => Transport::connect_tcp(address, settings.fabric()),
        }
    }
}

/// Upload a built index to the target; for in-process targets this registers
/// a region of exactly the required size first.
pub fn upload_to_target(
    built: &BuiltIndex,
    target: &Target,
    settings: &Settings,
) -> Result<ClusterDirectory> {
    let overflow_capacity = settings.overflow_capacity_resolved();
    if let Target::Inproc(node) = target {
        if node.region().is_err() {
            node.register(built.region_len(overflow_capacity)?)?;
        }
    }
    let mut transport = target.connect(settings)?;
    upload_index(
        &mut transport,
        built.dim as u32,
        &built.blobs,
        overflow_capacity,
    )
}

// ---------------------------------------------------------------------------
// Meta sidecar
// ---------------------------------------------------------------------------

/// Tag for the meta graph when stored in the cluster container format.
pub const META_SIDECAR_ID: u32 = u32::MAX;

/// Persist the meta index as a serialized cluster (node ids are partition
/// indices, so the blob is self-contained).
pub fn save_meta(meta: &MetaIndex<f32>, path: &Path) -> Result<()> {
    let blob = encode_cluster(&crate::partition::SubCluster {
        cluster_id: META_SIDECAR_ID,
        graph: meta.graph().clone(),
    });
    std::fs::write(path, blob)?;
    Ok(())
}

pub fn load_meta(path: &Path) -> Result<MetaIndex<f32>> {
    let bytes = std::fs::read(path)?;
    let sub = crate::layout::decode_cluster(&bytes)?;
    if sub.cluster_id != META_SIDECAR_ID {
        return Err(Error::Corrupt(format!(
            "{} holds cluster {} rather than a meta sidecar",
            path.display(),
            sub.cluster_id
        )));
    }
    MetaIndex::from_graph(sub.graph)
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

/// One (mode, ef_search) sweep point of the report.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub mode: String,
    pub ef_search: usize,
    pub queries: usize,
    pub batch_size: usize,
    pub workers: usize,
    pub recall_at_k: f64,
    pub k: usize,
    pub round_trips: u64,
    pub round_trips_per_query: f64,
    pub bytes_read: u64,
    pub bytes_per_query: f64,
    pub doorbell_ops: u64,
    pub mean_latency_us: f64,
    pub p50_latency_us: f64,
    pub p99_latency_us: f64,
    pub network_us: f64,
    pub sub_hnsw_us: f64,
    pub meta_hnsw_us: f64,
    pub simulated_network_us: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat CSV projection for plotting.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Config(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Raw per-query ids for one sweep point, so recall is re-derivable offline.
#[derive(Debug, Clone, Serialize)]
pub struct ModeRun {
    pub mode: String,
    pub ef_search: usize,
    pub per_query_ids: Vec<Vec<u64>>,
}

pub struct ExperimentOutput {
    pub report: RunReport,
    pub runs: Vec<ModeRun>,
    pub truth: Vec<Vec<u64>>,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

struct WorkerOutcome {
    results: Vec<Vec<(u64, f32)>>,
    stats: FabricStats,
    phases: PhaseTimings,
    latencies: Vec<f64>,
}

fn run_worker(
    target: &Target,
    settings: &Settings,
    meta: &MetaIndex<f32>,
    mode: ExecMode,
    ef_search: usize,
    queries: &[Vec<f32>],
) -> Result<WorkerOutcome> {
    let engine_config = EngineConfig {
        ef_meta: settings.ef_meta_resolved(),
        cache_clusters: settings.cache_clusters_resolved(meta.partition_count()),
    };
    let mut engine =
        ComputeEngine::connect(meta.clone(), target.connect(settings)?, engine_config)?;
    let stats0 = engine.stats();
    let mut results = Vec::with_capacity(queries.len());
    let mut phases = PhaseTimings::default();
    let mut latencies = Vec::with_capacity(queries.len());

    for chunk in queries.chunks(settings.batch_size.max(1)) {
        let batch = QueryBatch {
            queries: chunk.to_vec(),
            k: settings.k,
            probes: settings.b,
            ef_search,
        };
        let started = Instant::now();
        let out = engine.execute(mode, &batch)?;
        let per_query = started.elapsed().as_secs_f64() * 1e6 / chunk.len() as f64;
        latencies.extend(std::iter::repeat_n(per_query, chunk.len()));
        phases.merge(&out.phases);
        results.extend(out.results);
    }

    Ok(WorkerOutcome {
        results,
        stats: engine.stats().delta_since(&stats0),
        phases,
        latencies,
    })
}

/// Run the full sweep: for each mode and each ef_search, execute the query
/// workload in batches on cold engines and record one report row.
pub fn run_experiment(
    settings: &Settings,
    target: &Target,
    meta: &MetaIndex<f32>,
    base: &[VectorRecord<f32>],
    queries: &[Vec<f32>],
    truth: Option<Vec<Vec<u64>>>,
) -> Result<ExperimentOutput> {
    let truth = match truth {
        Some(t) => t,
        None => ground_truth(base, queries, settings.k)?,
    };
    for row in &truth {
        if row.len() < settings.k {
            return Err(Error::InvalidParameter(format!(
                "ground truth rows hold {} ids, recall@{} needs more",
                row.len(),
                settings.k
            )));
        }
    }

    let workers = settings.workers.max(1);
    let chunk_len = queries.len().div_ceil(workers);
    let mut report = RunReport::default();
    let mut runs = Vec::new();

    for &mode in &settings.modes {
        for &ef_search in &settings.ef_sweep {
            let mut outcomes: Vec<WorkerOutcome> = Vec::with_capacity(workers);
            if workers == 1 {
                outcomes.push(run_worker(
                    target, settings, meta, mode, ef_search, queries,
                )?);
            } else {
                let chunks: Vec<&[Vec<f32>]> = queries.chunks(chunk_len.max(1)).collect();
                let results: Vec<Result<WorkerOutcome>> = std::thread::scope(|scope| {
                    let handles: Vec<_> = chunks
                        .iter()
                        .map(|chunk| {
                            scope.spawn(move || {
                                run_worker(target, settings, meta, mode, ef_search, chunk)
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("worker panicked"))
                        .collect()
                });
                for r in results {
                    outcomes.push(r?);
                }
            }

            let mut stats = FabricStats::default();
            let mut phases = PhaseTimings::default();
            let mut per_query_ids: Vec<Vec<u64>> = Vec::with_capacity(queries.len());
            let mut latencies = Vec::with_capacity(queries.len());
            for outcome in outcomes {
                stats.merge(&outcome.stats);
                phases.merge(&outcome.phases);
                latencies.extend(outcome.latencies);
                per_query_ids.extend(
                    outcome
                        .results
                        .iter()
                        .map(|hits| hits.iter().map(|h| h.0).collect::<Vec<u64>>()),
                );
            }

            let recall = mean_recall(&per_query_ids, &truth, settings.k)?;
            let mut sorted = latencies.clone();
            sorted.sort_by(f64::total_cmp);
            let n = queries.len() as f64;
            report.rows.push(RunRow {
                mode: mode.name().into(),
                ef_search,
                queries: queries.len(),
                batch_size: settings.batch_size,
                workers,
                recall_at_k: recall,
                k: settings.k,
                round_trips: stats.round_trips,
                round_trips_per_query: stats.round_trips as f64 / n,
                bytes_read: stats.bytes_read,
                bytes_per_query: stats.bytes_read as f64 / n,
                doorbell_ops: stats.doorbell_ops,
                mean_latency_us: latencies.iter().sum::<f64>() / n,
                p50_latency_us: percentile(&sorted, 0.50),
                p99_latency_us: percentile(&sorted, 0.99),
                network_us: phases.network_us,
                sub_hnsw_us: phases.sub_hnsw_us,
                meta_hnsw_us: phases.meta_hnsw_us,
                simulated_network_us: stats.simulated_time_us,
            });
            runs.push(ModeRun {
                mode: mode.name().into(),
                ef_search,
                per_query_ids,
            });
        }
    }

    Ok(ExperimentOutput {
        report,
        runs,
        truth,
    })
}

/// The vectors an experiment runs over.
pub struct Workload {
    pub base: Vec<VectorRecord<f32>>,
    pub queries: Vec<Vec<f32>>,
    /// Pre-computed truth ids when a ground-truth file was given.
    pub truth: Option<Vec<Vec<u64>>>,
}

/// Load the workload from the configured files, or synthesize the seeded
/// mixture when no paths are set.
pub fn load_workload(settings: &Settings) -> Result<Workload> {
    let base = match &settings.base_path {
        Some(path) => dataset::load_fvecs(path)?
            .into_iter()
            .enumerate()
            .map(|(i, values)| VectorRecord::new(i as u64, values))
            .collect(),
        None => dataset::generate_mixture(&settings.synthetic_spec()),
    };
    let queries = match &settings.query_path {
        Some(path) => dataset::load_fvecs(path)?,
        None => dataset::mixture_queries(&settings.synthetic_spec(), settings.queries, 1),
    };
    let truth = match &settings.groundtruth_path {
        Some(path) => Some(
            dataset::load_ivecs(path)?
                .into_iter()
                .map(|row| row.into_iter().map(|id| id as u64).collect())
                .collect(),
        ),
        None => None,
    };
    Ok(Workload {
        base,
        queries,
        truth,
    })
}
