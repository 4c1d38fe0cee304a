//! Dataset partitioning around a small representative index.
//!
//! A capped three-layer graph (the meta index) is built over a uniform sample
//! of the dataset. Each bottom-layer representative defines one partition;
//! every dataset vector is assigned to the partition its greedy descent
//! terminates at, and each non-empty partition gets its own sub-graph.
//!
//! Inside the meta graph, node ids are the partition indices `0..R`, so the
//! classifier's tie-breaks and results are directly in partition space.

use std::collections::HashMap;

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hnsw::{HnswGraph, HnswParams, SearchParams, VectorRecord};
use crate::scalar::Scalar;

/// Layer cap for the meta graph: layers L0..L2.
pub const META_LEVEL_CAP: usize = 2;

/// Default classifier beam width: pure greedy descent (ef = 1) can miss the
/// true nearest representative.
pub fn default_ef_meta(probes: usize) -> usize {
    (2 * probes).max(16)
}

/// The representative index: partition `i` is defined by `representatives[i]`.
#[derive(Debug, Clone)]
pub struct MetaIndex<S: Scalar> {
    representatives: Vec<VectorRecord<S>>,
    /// Graph over the representatives; node id == partition index.
    graph: HnswGraph<S>,
}

/// Vector id -> partition index for a whole dataset.
#[derive(Debug, Clone, Default)]
pub struct PartitionAssignment {
    pub cluster_of: HashMap<u64, u32>,
}

impl PartitionAssignment {
    pub fn len(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_of.is_empty()
    }

    pub fn partition_sizes(&self, partitions: usize) -> Vec<usize> {
        let mut sizes = vec![0usize; partitions];
        for &p in self.cluster_of.values() {
            sizes[p as usize] += 1;
        }
        sizes
    }
}

/// One partition's vectors indexed by their own graph.
#[derive(Debug, Clone)]
pub struct SubCluster<S: Scalar> {
    pub cluster_id: u32,
    pub graph: HnswGraph<S>,
}

impl<S: Scalar> SubCluster<S> {
    /// The partition's representative when it is a member (it is inserted
    /// first), otherwise the first inserted vector.
    pub fn entry_id(&self) -> Option<u64> {
        self.graph.ids().next()
    }
}

/// Uniform sample without replacement, deterministic per seed. The sample is
/// returned in dataset order, so `count == dataset.len()` yields the dataset
/// itself.
pub fn sample_representatives<S: Scalar>(
    dataset: &[VectorRecord<S>],
    count: usize,
    seed: u64,
) -> Result<Vec<VectorRecord<S>>> {
    if count > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot sample {count} representatives from {} vectors",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index_sample(&mut rng, dataset.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| dataset[i].clone()).collect())
}

/// Build the meta index over `representatives`. The graph is capped at
/// [`META_LEVEL_CAP`] and its node ids are partition indices.
pub fn build_meta<S: Scalar>(
    representatives: &[VectorRecord<S>],
    params: &HnswParams,
) -> Result<MetaIndex<S>> {
    if representatives.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut graph_params = params.clone();
    graph_params.level_cap = Some(META_LEVEL_CAP);
    let renumbered: Vec<VectorRecord<S>> = representatives
        .iter()
        .enumerate()
        .map(|(i, r)| VectorRecord::new(i as u64, r.values.clone()))
        .collect();
    let graph = HnswGraph::build(&renumbered, graph_params)?;
    Ok(MetaIndex {
        representatives: representatives.to_vec(),
        graph,
    })
}

impl<S: Scalar> MetaIndex<S> {
    pub fn partition_count(&self) -> usize {
        self.representatives.len()
    }

    pub fn dim(&self) -> usize {
        self.graph.dim()
    }

    pub fn representatives(&self) -> &[VectorRecord<S>] {
        &self.representatives
    }

    pub fn graph(&self) -> &HnswGraph<S> {
        &self.graph
    }

    /// Fixed entry point id (a partition index).
    pub fn entry_id(&self) -> u64 {
        self.graph
            .entry_point_id()
            .expect("meta graph is never empty")
    }

    /// Descend from the fixed entry to a bottom-layer representative with a
    /// candidate list of width `ef_meta`. With `ef_meta >= R` this is exactly
    /// the nearest representative.
    pub fn classify(&self, vector: &[S], ef_meta: usize) -> Result<u32> {
        let hits = self
            .graph
            .search_knn(vector, SearchParams::new(1, ef_meta.max(1)))?;
        Ok(hits[0].0 as u32)
    }

    /// The `probes` closest partitions, ascending by distance, ties to the
    /// smaller partition index.
    pub fn classify_topb(&self, vector: &[S], probes: usize, ef_meta: usize) -> Result<Vec<u32>> {
        if probes > self.partition_count() {
            return Err(Error::InvalidParameter(format!(
                "{} probes requested but only {} partitions exist",
                probes,
                self.partition_count()
            )));
        }
        let hits = self
            .graph
            .search_knn(vector, SearchParams::new(probes, ef_meta.max(probes)))?;
        // Node ids are partition indices and search already tie-breaks on the
        // smaller id, so the order is final.
        Ok(hits.into_iter().map(|(id, _)| id as u32).collect())
    }

    /// Rebuild a `MetaIndex` from a decoded graph whose node ids are
    /// partition indices (the serialized form).
    pub fn from_graph(graph: HnswGraph<S>) -> Result<Self> {
        if graph.is_empty() {
            return Err(Error::EmptyInput);
        }
        let representatives = (0..graph.len() as u32)
            .map(|idx| {
                let pos = graph
                    .ids()
                    .position(|id| id == idx as u64)
                    .ok_or_else(|| Error::Corrupt(format!("missing partition id {idx}")))?;
                Ok(VectorRecord::new(
                    idx as u64,
                    graph.node_vector(pos as u32).to_vec(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetaIndex {
            representatives,
            graph,
        })
    }
}

/// Assign every dataset vector to a partition and build one sub-graph per
/// non-empty partition. Empty partitions are omitted from the returned list;
/// callers keep their indices stable (the directory later records them with
/// an empty blob).
pub fn partition_dataset<S: Scalar>(
    meta: &MetaIndex<S>,
    dataset: &[VectorRecord<S>],
    ef_meta: usize,
    sub_params: &HnswParams,
) -> Result<(PartitionAssignment, Vec<SubCluster<S>>)> {
    let mut assignment = PartitionAssignment::default();
    let mut members: Vec<Vec<&VectorRecord<S>>> = vec![Vec::new(); meta.partition_count()];
    for record in dataset {
        let partition = meta.classify(&record.values, ef_meta)?;
        if assignment.cluster_of.insert(record.id, partition).is_some() {
            return Err(Error::DuplicateId(record.id));
        }
        members[partition as usize].push(record);
    }

    let mut clusters = Vec::new();
    for (partition, group) in members.into_iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        // The representative leads when it is a member, so it becomes the
        // cluster's first node.
        let rep_id = group.iter().position(|r| {
            r.values == meta.representatives[partition].values
                && r.id == meta.representatives[partition].id
        });
        let mut ordered: Vec<VectorRecord<S>> = Vec::with_capacity(group.len());
        if let Some(pos) = rep_id {
            ordered.push(group[pos].clone());
            ordered.extend(
                group
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != pos)
                    .map(|(_, r)| (*r).clone()),
            );
        } else {
            ordered.extend(group.iter().map(|r| (*r).clone()));
        }
        let mut params = sub_params.clone();
        params.seed = sub_params
            .seed
            .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(partition as u64 + 1));
        let graph = HnswGraph::build(&ordered, params)?;
        clusters.push(SubCluster {
            cluster_id: partition as u32,
            graph,
        });
    }
    Ok((assignment, clusters))
}
