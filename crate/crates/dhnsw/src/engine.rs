//! The compute-pool engine: a locally cached meta index classifies queries,
//! batches are planned so each required cluster crosses the fabric at most
//! once, fetches are doorbell-grouped, and the most recently loaded clusters
//! are retained for the next batch.
//!
//! Three execution modes share one search path and differ only in transport
//! strategy, so they return identical answers on identical state:
//! - full: per-batch directory version check, deduplicated doorbell fetches;
//! - nodoorbell: same planning, one round trip per fetched cluster;
//! - naive: one read per (query, required cluster), no dedup, no cache.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::hnsw::{HnswGraph, SearchParams, VectorRecord};
use crate::layout::{
    contiguous_read_extent, decode_cluster, parse_overflow, ClusterDirectory, DirectoryEntry,
    OverflowEntry, Slot, DIRECTORY_HEADER_LEN, DIRECTORY_MAGIC, OVERFLOW_HEADER_LEN,
};
use crate::partition::MetaIndex;
use crate::scalar::squared_l2_unchecked;
use crate::transport::{FabricStats, ReadSpec, Transport};

/// Transport strategy for one batch execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecMode {
    Naive,
    NoDoorbell,
    Full,
}

impl ExecMode {
    pub fn name(self) -> &'static str {
        match self {
            ExecMode::Naive => "naive",
            ExecMode::NoDoorbell => "nodoorbell",
            ExecMode::Full => "full",
        }
    }
}

impl std::str::FromStr for ExecMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(ExecMode::Naive),
            "nodoorbell" => Ok(ExecMode::NoDoorbell),
            "full" => Ok(ExecMode::Full),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// A batch of queries and its search shape.
#[derive(Debug, Clone)]
pub struct QueryBatch {
    pub queries: Vec<Vec<f32>>,
    pub k: usize,
    /// Clusters probed per query.
    pub probes: usize,
    pub ef_search: usize,
}

impl QueryBatch {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.queries.is_empty() {
            return Err(Error::EmptyInput);
        }
        if self.probes == 0 || self.k == 0 {
            return Err(Error::InvalidParameter(
                "k and probes must be positive".into(),
            ));
        }
        for q in &self.queries {
            if q.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: q.len(),
                });
            }
        }
        Ok(())
    }
}

/// A cluster resident in compute memory: its decoded graph plus the overflow
/// entries owned by its slot at load time.
#[derive(Debug)]
pub struct LoadedCluster {
    pub cluster_id: u32,
    pub graph: HnswGraph<f32>,
    pub overflow: Vec<OverflowEntry>,
}

/// Retains the `capacity` most recently *loaded* clusters. A cache hit does
/// not refresh an entry's position; eviction order is load order, not use
/// order.
#[derive(Debug)]
pub struct ClusterCache {
    capacity: usize,
    resident: HashMap<u32, Arc<LoadedCluster>>,
    load_order: VecDeque<u32>,
}

impl ClusterCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            resident: HashMap::new(),
            load_order: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn contains(&self, cluster_id: u32) -> bool {
        self.resident.contains_key(&cluster_id)
    }

    pub fn get(&self, cluster_id: u32) -> Option<Arc<LoadedCluster>> {
        self.resident.get(&cluster_id).cloned()
    }

    /// Ids in load order, oldest first.
    pub fn resident_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.load_order.iter().copied()
    }

    pub fn insert(&mut self, cluster: Arc<LoadedCluster>) {
        if self.capacity == 0 {
            return;
        }
        let id = cluster.cluster_id;
        if self.resident.contains_key(&id) {
            self.load_order.retain(|&c| c != id);
        } else {
            while self.resident.len() >= self.capacity {
                if let Some(oldest) = self.load_order.pop_front() {
                    self.resident.remove(&oldest);
                }
            }
        }
        self.load_order.push_back(id);
        self.resident.insert(id, cluster);
    }

    pub fn evict(&mut self, cluster_id: u32) {
        if self.resident.remove(&cluster_id).is_some() {
            self.load_order.retain(|&c| c != cluster_id);
        }
    }
}

/// The per-batch loading plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    /// Per query, the `probes` required partitions, ascending by distance.
    pub required: Vec<Vec<u32>>,
    /// Deduplicated partitions to fetch, in first-needed order.
    pub fetch_list: Vec<u32>,
    /// `fetch_list` chunked by the doorbell width.
    pub doorbell_groups: Vec<Vec<u32>>,
    /// Partitions served from the cache, in first-needed order.
    pub cache_hits: Vec<u32>,
}

/// Plan one batch against the current cache state. Walks the queries'
/// requirements in first-needed order while simulating the cache's
/// load-and-evict behaviour, so a resident cluster that would be evicted
/// before its turn is planned as a fetch, and every cluster is fetched at
/// most once.
pub fn plan_batch(
    meta: &MetaIndex<f32>,
    cache: &ClusterCache,
    batch: &QueryBatch,
    ef_meta: usize,
    doorbell_max: usize,
) -> Result<BatchPlan> {
    batch.validate(meta.dim())?;
    let mut required = Vec::with_capacity(batch.queries.len());
    for q in &batch.queries {
        required.push(meta.classify_topb(q, batch.probes, ef_meta)?);
    }

    let capacity = cache.capacity();
    let mut sim_order: VecDeque<u32> = cache.resident_ids().collect();
    let mut sim_set: HashSet<u32> = sim_order.iter().copied().collect();
    let mut fetch_list = Vec::new();
    let mut fetch_set = HashSet::new();
    let mut cache_hits = Vec::new();
    let mut hit_set = HashSet::new();

    for partitions in &required {
        for &p in partitions {
            if fetch_set.contains(&p) || hit_set.contains(&p) {
                continue;
            }
            if sim_set.contains(&p) {
                hit_set.insert(p);
                cache_hits.push(p);
                continue;
            }
            fetch_list.push(p);
            fetch_set.insert(p);
            if capacity > 0 {
                while sim_order.len() + 1 > capacity {
                    if let Some(evicted) = sim_order.pop_front() {
                        sim_set.remove(&evicted);
                    } else {
                        break;
                    }
                }
                sim_order.push_back(p);
                sim_set.insert(p);
            }
        }
    }

    let doorbell_groups = fetch_list
        .chunks(doorbell_max.max(1))
        .map(|c| c.to_vec())
        .collect();
    Ok(BatchPlan {
        required,
        fetch_list,
        doorbell_groups,
        cache_hits,
    })
}

/// Wall-clock time spent in each phase of a batch, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub network_us: f64,
    pub sub_hnsw_us: f64,
    pub meta_hnsw_us: f64,
}

impl PhaseTimings {
    pub fn merge(&mut self, other: &PhaseTimings) {
        self.network_us += other.network_us;
        self.sub_hnsw_us += other.sub_hnsw_us;
        self.meta_hnsw_us += other.meta_hnsw_us;
    }

    pub fn total(&self) -> f64 {
        self.network_us + self.sub_hnsw_us + self.meta_hnsw_us
    }
}

/// Results of one batch: per-query hits plus the fabric and timing deltas it
/// cost.
#[derive(Debug, Clone)]
pub struct QueryResult {
    /// Per query: (id, squared distance) ascending, at most `k` entries.
    pub results: Vec<Vec<(u64, f32)>>,
    pub stats: FabricStats,
    pub phases: PhaseTimings,
}

/// Engine-level knobs; per-batch shape lives on [`QueryBatch`].
#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    /// Beam width for meta classification.
    pub ef_meta: usize,
    /// Cluster cache capacity (clusters, not bytes).
    pub cache_clusters: usize,
}

/// A compute worker: cached meta index, directory snapshot, fabric handle,
/// and cluster cache. Workers share nothing but the remote region.
#[derive(Debug)]
pub struct ComputeEngine {
    meta: MetaIndex<f32>,
    directory: ClusterDirectory,
    transport: Transport,
    cache: ClusterCache,
    config: EngineConfig,
    inserted_ids: HashSet<u64>,
}

impl ComputeEngine {
    /// Connect to a populated memory region: reads the directory and checks
    /// it against the meta index.
    pub fn connect(
        meta: MetaIndex<f32>,
        mut transport: Transport,
        config: EngineConfig,
    ) -> Result<Self> {
        let directory = read_directory(&mut transport)?;
        if directory.num_clusters() != meta.partition_count() {
            return Err(Error::Corrupt(format!(
                "directory holds {} clusters but the meta index defines {} partitions",
                directory.num_clusters(),
                meta.partition_count()
            )));
        }
        if directory.dim as usize != meta.dim() {
            return Err(Error::DimensionMismatch {
                expected: meta.dim(),
                got: directory.dim as usize,
            });
        }
        Ok(Self {
            meta,
            directory,
            transport,
            cache: ClusterCache::new(config.cache_clusters),
            config,
            inserted_ids: HashSet::new(),
        })
    }

    pub fn meta(&self) -> &MetaIndex<f32> {
        &self.meta
    }

    pub fn directory(&self) -> &ClusterDirectory {
        &self.directory
    }

    pub fn cache(&self) -> &ClusterCache {
        &self.cache
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn stats(&self) -> FabricStats {
        self.transport.stats()
    }

    pub fn plan_batch(&self, batch: &QueryBatch) -> Result<BatchPlan> {
        plan_batch(
            &self.meta,
            &self.cache,
            batch,
            self.config.ef_meta,
            self.transport.doorbell_max(),
        )
    }

    pub fn execute(&mut self, mode: ExecMode, batch: &QueryBatch) -> Result<QueryResult> {
        match mode {
            ExecMode::Naive => self.execute_naive(batch),
            ExecMode::NoDoorbell => self.execute_nodoorbell(batch),
            ExecMode::Full => self.execute_batch(batch),
        }
    }

    /// Full pipeline: directory version check, dedup + doorbell fetching,
    /// retain-last-c caching.
    pub fn execute_batch(&mut self, batch: &QueryBatch) -> Result<QueryResult> {
        let stats0 = self.transport.stats();
        let mut phases = PhaseTimings::default();

        let t = Instant::now();
        self.refresh_directory()?;
        phases.network_us += us_since(t);

        self.run_planned(batch, true, stats0, phases)
    }

    /// Same planning as [`Self::execute_batch`] but every fetched cluster
    /// costs its own round trip.
    pub fn execute_nodoorbell(&mut self, batch: &QueryBatch) -> Result<QueryResult> {
        let stats0 = self.transport.stats();
        self.run_planned(batch, false, stats0, PhaseTimings::default())
    }

    /// Baseline: one read per (query, required cluster), no dedup, no cache
    /// use or update, no doorbell.
    pub fn execute_naive(&mut self, batch: &QueryBatch) -> Result<QueryResult> {
        batch.validate(self.meta.dim())?;
        let stats0 = self.transport.stats();
        let mut phases = PhaseTimings::default();
        let search = SearchParams::new(batch.k, batch.ef_search);
        let mut results = Vec::with_capacity(batch.queries.len());

        for query in &batch.queries {
            let t = Instant::now();
            let required = self
                .meta
                .classify_topb(query, batch.probes, self.config.ef_meta)?;
            phases.meta_hnsw_us += us_since(t);

            let mut pool: Vec<(u64, f32)> = Vec::new();
            for &partition in &required {
                let loaded = self.fetch_one_with_retry(partition, &mut phases)?;
                let t = Instant::now();
                search_cluster(&loaded, query, search, &mut pool);
                phases.sub_hnsw_us += us_since(t);
            }
            let t = Instant::now();
            results.push(top_k(pool, batch.k));
            phases.sub_hnsw_us += us_since(t);
        }

        Ok(QueryResult {
            results,
            stats: self.transport.stats().delta_since(&stats0),
            phases,
        })
    }

    fn run_planned(
        &mut self,
        batch: &QueryBatch,
        doorbell: bool,
        stats0: FabricStats,
        mut phases: PhaseTimings,
    ) -> Result<QueryResult> {
        let t = Instant::now();
        let plan = self.plan_batch(batch)?;
        phases.meta_hnsw_us += us_since(t);

        // Snapshot hit clusters now: later insertions may evict them before
        // their queries run.
        let hits: Vec<Arc<LoadedCluster>> = plan
            .cache_hits
            .iter()
            .map(|&p| self.cache.get(p).expect("planned hit must be resident"))
            .collect();

        let fetched = self.fetch_planned_with_retry(&plan.fetch_list, doorbell, &mut phases)?;

        // Queries needing each cluster, preserving plan order.
        let t = Instant::now();
        let mut queries_of: HashMap<u32, Vec<usize>> = HashMap::new();
        for (qi, partitions) in plan.required.iter().enumerate() {
            for &p in partitions {
                queries_of.entry(p).or_default().push(qi);
            }
        }

        let search = SearchParams::new(batch.k, batch.ef_search);
        let mut pools: Vec<Vec<(u64, f32)>> = vec![Vec::new(); batch.queries.len()];
        for cluster in hits.iter().chain(fetched.iter()) {
            if let Some(query_ids) = queries_of.get(&cluster.cluster_id) {
                for &qi in query_ids {
                    search_cluster(cluster, &batch.queries[qi], search, &mut pools[qi]);
                }
            }
        }
        let results: Vec<Vec<(u64, f32)>> =
            pools.into_iter().map(|pool| top_k(pool, batch.k)).collect();
        phases.sub_hnsw_us += us_since(t);

        // Retain the most recently loaded clusters for the next batch.
        for cluster in fetched {
            self.cache.insert(cluster);
        }

        Ok(QueryResult {
            results,
            stats: self.transport.stats().delta_since(&stats0),
            phases,
        })
    }

    /// Fetch the planned list (doorbell-grouped or one read per cluster).
    /// Any fetch or decode failure is treated as a stale-directory suspicion:
    /// refresh once, recompute extents, retry; a second failure propagates.
    fn fetch_planned_with_retry(
        &mut self,
        fetch_list: &[u32],
        doorbell: bool,
        phases: &mut PhaseTimings,
    ) -> Result<Vec<Arc<LoadedCluster>>> {
        if fetch_list.is_empty() {
            return Ok(Vec::new());
        }
        match self.fetch_planned(fetch_list, doorbell, phases) {
            Ok(loaded) => Ok(loaded),
            Err(first) if is_stale_suspicion(&first) => {
                let t = Instant::now();
                self.force_refresh()?;
                phases.network_us += us_since(t);
                self.fetch_planned(fetch_list, doorbell, phases)
            }
            Err(other) => Err(other),
        }
    }

    fn fetch_planned(
        &mut self,
        fetch_list: &[u32],
        doorbell: bool,
        phases: &mut PhaseTimings,
    ) -> Result<Vec<Arc<LoadedCluster>>> {
        let specs: Vec<ReadSpec> = fetch_list
            .iter()
            .map(|&p| contiguous_read_extent(&self.directory, p).map(|(o, l)| ReadSpec::new(o, l)))
            .collect::<Result<_>>()?;

        let t = Instant::now();
        let raw = if doorbell {
            self.transport.doorbell_read(&specs)?
        } else {
            specs
                .iter()
                .map(|&s| self.transport.read(s))
                .collect::<Result<Vec<_>>>()?
        };
        phases.network_us += us_since(t);

        let t = Instant::now();
        let mut loaded = Vec::with_capacity(fetch_list.len());
        for (&partition, bytes) in fetch_list.iter().zip(raw.iter()) {
            let entry = self.directory.entry(partition)?.clone();
            loaded.push(Arc::new(decode_extent(
                &entry,
                partition,
                self.directory.dim as usize,
                bytes,
            )?));
        }
        phases.sub_hnsw_us += us_since(t);
        Ok(loaded)
    }

    fn fetch_one_with_retry(
        &mut self,
        partition: u32,
        phases: &mut PhaseTimings,
    ) -> Result<LoadedCluster> {
        match self.fetch_one(partition, phases) {
            Ok(loaded) => Ok(loaded),
            Err(first) if is_stale_suspicion(&first) => {
                let t = Instant::now();
                self.force_refresh()?;
                phases.network_us += us_since(t);
                self.fetch_one(partition, phases)
            }
            Err(other) => Err(other),
        }
    }

    fn fetch_one(&mut self, partition: u32, phases: &mut PhaseTimings) -> Result<LoadedCluster> {
        let (offset, len) = contiguous_read_extent(&self.directory, partition)?;
        let t = Instant::now();
        let bytes = self.transport.read(ReadSpec::new(offset, len))?;
        phases.network_us += us_since(t);
        let t = Instant::now();
        let entry = self.directory.entry(partition)?.clone();
        let loaded = decode_extent(&entry, partition, self.directory.dim as usize, &bytes)?;
        phases.sub_hnsw_us += us_since(t);
        Ok(loaded)
    }

    /// Insert one vector into its partition's overflow slot. The slot index
    /// is reserved with a remote fetch-add, so concurrent workers never
    /// double-allocate; the entry is then written with a single write verb.
    pub fn insert_vector(&mut self, record: &VectorRecord<f32>) -> Result<u32> {
        let dim = self.meta.dim();
        if record.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: record.values.len(),
            });
        }
        // Duplicate detection is local to this worker; ids are assumed
        // globally fresh (they are assigned by the ingest path).
        if self.inserted_ids.contains(&record.id) {
            return Err(Error::DuplicateId(record.id));
        }

        let partition = self.meta.classify(&record.values, self.config.ef_meta)?;
        let entry = self.directory.entry(partition)?.clone();
        let entry_len = crate::layout::overflow_entry_len(dim);
        let limit = crate::layout::overflow_entry_limit(entry.overflow_capacity, dim);

        let (own_counter, other_counter) = match entry.slot {
            Slot::Head => (entry.overflow_offset, entry.overflow_offset + 4),
            Slot::Tail => (entry.overflow_offset + 4, entry.overflow_offset),
        };

        let reserved = self.transport.fetch_add(own_counter, 1)?;
        let other_raw = self.transport.read(ReadSpec::new(other_counter, 4))?;
        let other = u32::from_le_bytes(other_raw.try_into().unwrap());
        // The other side's count is read after the reservation; a concurrent
        // insert racing into the opposite slot within that window can slip
        // past this check, so capacity sizing should leave an entry of slack
        // per concurrent writer near the brim.
        if reserved as u64 + 1 + other as u64 > limit {
            self.transport.fetch_add(own_counter, u32::MAX)?; // release the slot
            return Err(Error::CapacityExceeded {
                needed: OVERFLOW_HEADER_LEN + (reserved as u64 + 1 + other as u64) * entry_len,
                available: entry.overflow_capacity,
            });
        }

        let offset = entry.overflow_offset
            + crate::layout::overflow_entry_offset(
                entry.slot,
                reserved,
                entry.overflow_capacity,
                dim,
            );
        let payload = OverflowEntry {
            id: record.id,
            values: record.values.clone(),
        }
        .encode();
        self.transport.write(offset, &payload)?;

        self.inserted_ids.insert(record.id);
        // Our cached copy of this partition no longer includes the new
        // entry; drop it so the next probe reloads the authoritative bytes.
        self.cache.evict(partition);
        Ok(partition)
    }

    /// Read the remote directory version and adopt the directory iff it is
    /// newer. Costs one round trip when nothing changed.
    pub fn refresh_directory(&mut self) -> Result<u64> {
        let header = self
            .transport
            .read(ReadSpec::new(0, DIRECTORY_HEADER_LEN))?;
        let (version, num_clusters) = parse_directory_header(&header)?;
        if version > self.directory.version {
            let full = self.transport.read(ReadSpec::new(
                0,
                ClusterDirectory::byte_len_for(num_clusters),
            ))?;
            self.directory = ClusterDirectory::decode(&full)?;
        }
        Ok(self.directory.version)
    }

    fn force_refresh(&mut self) -> Result<u64> {
        self.directory = read_directory(&mut self.transport)?;
        Ok(self.directory.version)
    }
}

fn us_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e6
}

fn is_stale_suspicion(err: &Error) -> bool {
    matches!(
        err,
        Error::BadMagic { .. }
            | Error::CrcMismatch { .. }
            | Error::Truncated { .. }
            | Error::Corrupt(_)
            | Error::OutOfBounds { .. }
    )
}

fn parse_directory_header(header: &[u8]) -> Result<(u64, usize)> {
    if header.len() < DIRECTORY_HEADER_LEN as usize {
        return Err(Error::Truncated {
            offset: header.len(),
        });
    }
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != DIRECTORY_MAGIC {
        return Err(Error::BadMagic {
            expected: DIRECTORY_MAGIC,
            got: magic,
        });
    }
    let version = u64::from_le_bytes(header[4..12].try_into().unwrap());
    let num_clusters = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
    Ok((version, num_clusters))
}

/// Read and decode the full remote directory (header first, then the exact
/// span).
pub fn read_directory(transport: &mut Transport) -> Result<ClusterDirectory> {
    let header = transport.read(ReadSpec::new(0, DIRECTORY_HEADER_LEN))?;
    let (_, num_clusters) = parse_directory_header(&header)?;
    let full = transport.read(ReadSpec::new(
        0,
        ClusterDirectory::byte_len_for(num_clusters),
    ))?;
    ClusterDirectory::decode(&full)
}

/// Decode one contiguous extent into the cluster and its slot's overflow
/// entries. The decoded cluster id must match the directory's; a mismatch
/// means the offsets were stale.
fn decode_extent(
    entry: &DirectoryEntry,
    partition: u32,
    dim: usize,
    bytes: &[u8],
) -> Result<LoadedCluster> {
    let expected = (entry.cluster_len + entry.overflow_capacity) as usize;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            offset: bytes.len(),
        });
    }
    let cluster_len = entry.cluster_len as usize;
    let (cluster_bytes, overflow_bytes) = match entry.slot {
        Slot::Head => (&bytes[..cluster_len], &bytes[cluster_len..]),
        Slot::Tail => (
            &bytes[entry.overflow_capacity as usize..],
            &bytes[..entry.overflow_capacity as usize],
        ),
    };
    let sub = decode_cluster(cluster_bytes)?;
    if sub.cluster_id != partition {
        return Err(Error::Corrupt(format!(
            "extent for cluster {partition} decoded as cluster {}",
            sub.cluster_id
        )));
    }
    if !sub.graph.is_empty() && sub.graph.dim() != dim {
        return Err(Error::Corrupt(format!(
            "cluster {partition} has dim {} but the directory says {dim}",
            sub.graph.dim()
        )));
    }
    let (low, high) = parse_overflow(overflow_bytes, dim)?;
    let overflow = match entry.slot {
        Slot::Head => low,
        Slot::Tail => high,
    };
    Ok(LoadedCluster {
        cluster_id: partition,
        graph: sub.graph,
        overflow,
    })
}

/// Search one resident cluster for one query: graph search plus an
/// exhaustive scan of the overflow entries appended to its slot.
fn search_cluster(
    cluster: &LoadedCluster,
    query: &[f32],
    params: SearchParams,
    pool: &mut Vec<(u64, f32)>,
) {
    if !cluster.graph.is_empty() {
        if let Ok(hits) = cluster.graph.search_knn(query, params) {
            pool.extend(hits);
        }
    }
    for e in &cluster.overflow {
        pool.push((e.id, squared_l2_unchecked(query, &e.values)));
    }
}

fn top_k(mut pool: Vec<(u64, f32)>, k: usize) -> Vec<(u64, f32)> {
    pool.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    pool.truncate(k);
    pool
}

/// Publish a built index into the remote region: every partition's blob (an
/// empty-cluster blob for partitions without members), zeroed overflow
/// headers, then the directory with a bumped version — written last so a
/// concurrent reader never sees the new directory before its data.
pub fn upload_index(
    transport: &mut Transport,
    dim: u32,
    blobs: &[Vec<u8>],
    overflow_capacity: u64,
) -> Result<ClusterDirectory> {
    let previous_version = probe_version(transport)?;
    let sizes: Vec<u64> = blobs.iter().map(|b| b.len() as u64).collect();
    let directory = crate::layout::plan_layout(
        dim,
        previous_version + 1,
        &sizes,
        overflow_capacity,
        crate::layout::PairingPolicy::Sequential,
    )?;

    for (blob, entry) in blobs.iter().zip(directory.entries.iter()) {
        let mut padded = vec![0u8; entry.cluster_len as usize];
        padded[..blob.len()].copy_from_slice(blob);
        transport.write(entry.cluster_offset, &padded)?;
    }
    let mut zeroed_groups = HashSet::new();
    for entry in &directory.entries {
        if zeroed_groups.insert(entry.group_index) {
            transport.write(entry.overflow_offset, &[0u8; OVERFLOW_HEADER_LEN as usize])?;
        }
    }
    transport.write(0, &directory.encode())?;
    Ok(directory)
}

fn probe_version(transport: &mut Transport) -> Result<u64> {
    let header = transport.read(ReadSpec::new(0, DIRECTORY_HEADER_LEN))?;
    match parse_directory_header(&header) {
        Ok((version, _)) => Ok(version),
        Err(Error::BadMagic { .. }) => Ok(0), // fresh region
        Err(e) => Err(e),
    }
}
