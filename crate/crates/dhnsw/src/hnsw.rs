//! Multi-layer proximity graph with greedy top-k search.
//!
//! Construction follows the usual scheme: each node draws a geometric level,
//! links to its closest `m` candidates per layer (2`m` cap on layer 0), and
//! search descends greedily from the entry point before a beam search of
//! width `ef` on layer 0. All orderings tie-break on the smaller vector id so
//! results are fully deterministic for a fixed seed and insertion order.

use std::cmp::Ordering;
use std::collections::HashMap;

use ordered_float::OrderedFloat;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{squared_l2_unchecked, Scalar};

/// A dense vector with a globally unique 64-bit id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord<S> {
    pub id: u64,
    pub values: Vec<S>,
}

impl<S> VectorRecord<S> {
    pub fn new(id: u64, values: Vec<S>) -> Self {
        Self { id, values }
    }
}

/// Construction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HnswParams {
    /// Max neighbors per node per layer (layer 0 allows `2 * m`).
    pub m: usize,
    /// Beam width while inserting.
    pub ef_construction: usize,
    /// Optional hard cap on the level a node may draw.
    pub level_cap: Option<usize>,
    /// Seed for the level-assignment RNG.
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            level_cap: None,
            seed: 0,
        }
    }
}

impl HnswParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_level_cap(mut self, cap: usize) -> Self {
        self.level_cap = Some(cap);
        self
    }

    fn max_neighbors(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m * 2
        } else {
            self.m
        }
    }
}

/// Search parameters: beam width of the dynamic candidate list and the
/// result count. `ef_search` is clamped up to `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    pub k: usize,
    pub ef_search: usize,
}

impl SearchParams {
    pub fn new(k: usize, ef_search: usize) -> Self {
        Self { k, ef_search }
    }

    fn effective_ef(&self) -> usize {
        self.ef_search.max(self.k)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    id: u64,
    level: usize,
    /// `layers[l]` = neighbor local indices at layer `l`; `layers.len() == level + 1`.
    layers: Vec<Vec<u32>>,
}

/// Heap entry ordered by (distance, id) ascending for full determinism.
#[derive(Debug, Clone, Copy)]
struct Candidate<S: Scalar> {
    dist: OrderedFloat<S>,
    idx: u32,
    id: u64,
}

impl<S: Scalar> PartialEq for Candidate<S> {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.id == other.id
    }
}

impl<S: Scalar> Eq for Candidate<S> {}

impl<S: Scalar> PartialOrd for Candidate<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> Ord for Candidate<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// Multi-layer proximity graph over [`VectorRecord`]s.
#[derive(Debug, Clone)]
pub struct HnswGraph<S: Scalar> {
    dim: usize,
    params: HnswParams,
    /// Flat vector storage, `dim` scalars per node.
    data: Vec<S>,
    nodes: Vec<Node>,
    id_to_idx: HashMap<u64, u32>,
    entry_point: Option<u32>,
    max_level: usize,
    rng: ChaCha8Rng,
}

impl<S: Scalar> HnswGraph<S> {
    /// New empty graph. Searches on an empty graph return [`Error::EmptyGraph`].
    pub fn new(dim: usize, params: HnswParams) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Self {
            dim,
            params,
            data: Vec::new(),
            nodes: Vec::new(),
            id_to_idx: HashMap::new(),
            entry_point: None,
            max_level: 0,
            rng,
        }
    }

    /// Build a graph by inserting `records` in order. Deterministic for a
    /// fixed `params.seed` and input order.
    pub fn build(records: &[VectorRecord<S>], params: HnswParams) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyInput)?;
        let mut graph = Self::new(first.values.len(), params);
        for record in records {
            graph.insert(record)?;
        }
        Ok(graph)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn entry_point_index(&self) -> Option<u32> {
        self.entry_point
    }

    pub fn entry_point_id(&self) -> Option<u64> {
        self.entry_point.map(|i| self.nodes[i as usize].id)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.id_to_idx.contains_key(&id)
    }

    pub fn node_id(&self, idx: u32) -> u64 {
        self.nodes[idx as usize].id
    }

    pub fn node_level(&self, idx: u32) -> usize {
        self.nodes[idx as usize].level
    }

    pub fn node_neighbors(&self, idx: u32, layer: usize) -> &[u32] {
        &self.nodes[idx as usize].layers[layer]
    }

    pub fn node_vector(&self, idx: u32) -> &[S] {
        let i = idx as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    /// Ids in insertion (local-index) order.
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    /// Reassemble a graph from decoded parts. Validates index bounds and
    /// structural consistency; used by the cluster codec.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dim: usize,
        params: HnswParams,
        ids: Vec<u64>,
        data: Vec<S>,
        levels: Vec<usize>,
        neighbors: Vec<Vec<Vec<u32>>>,
        entry_point: Option<u32>,
        max_level: usize,
    ) -> Result<Self> {
        let n = ids.len();
        if data.len() != n * dim || levels.len() != n || neighbors.len() != n {
            return Err(Error::Corrupt("inconsistent part lengths".into()));
        }
        let mut id_to_idx = HashMap::with_capacity(n);
        let mut nodes = Vec::with_capacity(n);
        for (i, (&id, level)) in ids.iter().zip(levels.iter()).enumerate() {
            if id_to_idx.insert(id, i as u32).is_some() {
                return Err(Error::DuplicateId(id));
            }
            let layers = &neighbors[i];
            if layers.len() != level + 1 {
                return Err(Error::Corrupt(format!(
                    "node {i}: {} layers for level {level}",
                    layers.len()
                )));
            }
            for (layer, list) in layers.iter().enumerate() {
                for &nb in list {
                    if nb as usize >= n {
                        return Err(Error::Corrupt(format!(
                            "node {i} layer {layer}: neighbor {nb} out of range"
                        )));
                    }
                    if nb == i as u32 {
                        return Err(Error::Corrupt(format!("node {i}: self-loop")));
                    }
                }
            }
            nodes.push(Node {
                id,
                level: *level,
                layers: layers.clone(),
            });
        }
        match entry_point {
            Some(e) if (e as usize) < n => {}
            None if n == 0 => {}
            _ => return Err(Error::Corrupt("entry point out of range".into())),
        }
        Ok(Self {
            dim,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            params,
            data,
            nodes,
            id_to_idx,
            entry_point,
            max_level,
        })
    }

    fn draw_level(&mut self) -> usize {
        // Geometric draw with mL = 1/ln(m); the u64 is mapped onto (0,1].
        let ml = 1.0 / (self.params.m as f64).ln();
        let raw = self.rng.next_u64();
        let uniform = ((raw >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let level = (-uniform.ln() * ml) as usize;
        match self.params.level_cap {
            Some(cap) => level.min(cap),
            None => level,
        }
    }

    #[inline]
    fn dist_to(&self, query: &[S], idx: u32) -> S {
        squared_l2_unchecked(query, self.node_vector(idx))
    }

    fn candidate(&self, query: &[S], idx: u32) -> Candidate<S> {
        Candidate {
            dist: OrderedFloat(self.dist_to(query, idx)),
            idx,
            id: self.nodes[idx as usize].id,
        }
    }

    /// Beam search on one layer. Returns up to `ef` closest nodes sorted by
    /// (distance, id).
    fn search_layer(
        &self,
        query: &[S],
        entries: &[u32],
        ef: usize,
        layer: usize,
    ) -> Vec<Candidate<S>> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        let mut visited = vec![false; self.nodes.len()];
        // Min-heap of candidates to expand; max-heap of current best `ef`.
        let mut frontier: BinaryHeap<Reverse<Candidate<S>>> = BinaryHeap::new();
        let mut best: BinaryHeap<Candidate<S>> = BinaryHeap::new();

        for &e in entries {
            if visited[e as usize] {
                continue;
            }
            visited[e as usize] = true;
            let c = self.candidate(query, e);
            frontier.push(Reverse(c));
            best.push(c);
        }
        while best.len() > ef {
            best.pop();
        }

        while let Some(Reverse(current)) = frontier.pop() {
            if best.len() == ef {
                if let Some(worst) = best.peek() {
                    if current > *worst {
                        break;
                    }
                }
            }
            for &nb in &self.nodes[current.idx as usize].layers[layer] {
                if visited[nb as usize] {
                    continue;
                }
                visited[nb as usize] = true;
                let c = self.candidate(query, nb);
                if best.len() < ef {
                    best.push(c);
                    frontier.push(Reverse(c));
                } else if let Some(worst) = best.peek() {
                    if c < *worst {
                        best.pop();
                        best.push(c);
                        frontier.push(Reverse(c));
                    }
                }
            }
        }

        let mut out = best.into_vec();
        out.sort_unstable();
        out
    }

    /// Greedy single-step descent used on layers above the target.
    fn greedy_descend(&self, query: &[S], start: u32, layer: usize) -> u32 {
        let mut current = self.candidate(query, start);
        loop {
            let mut improved = false;
            for &nb in &self.nodes[current.idx as usize].layers[layer] {
                let c = self.candidate(query, nb);
                if c < current {
                    current = c;
                    improved = true;
                }
            }
            if !improved {
                return current.idx;
            }
        }
    }

    /// Insert one record. Errors on duplicate id or dimension mismatch.
    pub fn insert(&mut self, record: &VectorRecord<S>) -> Result<()> {
        if self.params.m < 2 {
            // mL = 1/ln(m) needs m >= 2.
            return Err(Error::InvalidParameter(format!(
                "m must be at least 2, got {}",
                self.params.m
            )));
        }
        if record.values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: record.values.len(),
            });
        }
        if self.id_to_idx.contains_key(&record.id) {
            return Err(Error::DuplicateId(record.id));
        }

        let level = self.draw_level();
        let idx = self.nodes.len() as u32;
        self.data.extend_from_slice(&record.values);
        self.nodes.push(Node {
            id: record.id,
            level,
            layers: vec![Vec::new(); level + 1],
        });
        self.id_to_idx.insert(record.id, idx);

        let Some(entry) = self.entry_point else {
            self.entry_point = Some(idx);
            self.max_level = level;
            return Ok(());
        };

        let query = &self.data[idx as usize * self.dim..(idx as usize + 1) * self.dim];
        // The borrow checker cannot see that `query` aliases no node we touch,
        // so work on a copy.
        let query = query.to_vec();

        let mut current = entry;
        for layer in ((level + 1)..=self.max_level).rev() {
            current = self.greedy_descend(&query, current, layer);
        }

        let ef = self.params.ef_construction.max(1);
        let top = level.min(self.max_level);
        let mut entries = vec![current];
        for layer in (0..=top).rev() {
            let found = self.search_layer(&query, &entries, ef, layer);
            let selected: Vec<u32> = found.iter().take(self.params.m).map(|c| c.idx).collect();
            for &nb in &selected {
                self.nodes[idx as usize].layers[layer].push(nb);
                self.link_back(nb, idx, layer);
            }
            entries = found.iter().map(|c| c.idx).collect();
            if entries.is_empty() {
                entries = vec![current];
            }
        }

        if level > self.max_level {
            self.max_level = level;
            self.entry_point = Some(idx);
        }
        Ok(())
    }

    /// Add `new` to `node`'s list at `layer`, pruning back to the layer cap by
    /// keeping the closest (ties to smaller id).
    fn link_back(&mut self, node: u32, new: u32, layer: usize) {
        let cap = self.params.max_neighbors(layer);
        let list = &self.nodes[node as usize].layers[layer];
        if list.len() < cap {
            self.nodes[node as usize].layers[layer].push(new);
            return;
        }
        let base = self.node_vector(node).to_vec();
        let mut ranked: Vec<Candidate<S>> = list
            .iter()
            .chain(std::iter::once(&new))
            .map(|&nb| Candidate {
                dist: OrderedFloat(squared_l2_unchecked(&base, self.node_vector(nb))),
                idx: nb,
                id: self.nodes[nb as usize].id,
            })
            .collect();
        ranked.sort_unstable();
        ranked.truncate(cap);
        self.nodes[node as usize].layers[layer] = ranked.into_iter().map(|c| c.idx).collect();
    }

    /// Top-k search. Results are (id, squared distance) sorted ascending,
    /// ties broken by smaller id.
    pub fn search_knn(&self, query: &[S], params: SearchParams) -> Result<Vec<(u64, S)>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let entry = self.entry_point.ok_or(Error::EmptyGraph)?;

        let mut current = entry;
        for layer in (1..=self.max_level).rev() {
            current = self.greedy_descend(query, current, layer);
        }
        let found = self.search_layer(query, &[current], params.effective_ef(), 0);
        Ok(found
            .into_iter()
            .take(params.k)
            .map(|c| (c.id, c.dist.0))
            .collect())
    }

    /// Structural invariant check used by tests: level nesting, no
    /// self-loops or duplicate edges, per-layer caps, entry at max level.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Corrupt(msg));
        if let Some(e) = self.entry_point {
            if self.nodes[e as usize].level != self.max_level {
                return fail(format!(
                    "entry point level {} != max level {}",
                    self.nodes[e as usize].level, self.max_level
                ));
            }
        } else if !self.nodes.is_empty() {
            return fail("populated graph without entry point".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.layers.len() != node.level + 1 {
                return fail(format!("node {i}: layer count != level + 1"));
            }
            for (layer, list) in node.layers.iter().enumerate() {
                if list.len() > self.params.max_neighbors(layer) {
                    return fail(format!(
                        "node {i} layer {layer}: {} neighbors over cap",
                        list.len()
                    ));
                }
                let mut seen = std::collections::HashSet::new();
                for &nb in list {
                    if nb == i as u32 {
                        return fail(format!("node {i} layer {layer}: self-loop"));
                    }
                    if !seen.insert(nb) {
                        return fail(format!("node {i} layer {layer}: duplicate edge to {nb}"));
                    }
                    if nb as usize >= self.nodes.len() {
                        return fail(format!("node {i} layer {layer}: dangling edge"));
                    }
                    if self.nodes[nb as usize].level < layer {
                        return fail(format!(
                            "node {i} layer {layer}: neighbor {nb} not present at this layer"
                        ));
                    }
                }
            }
        }
        // Layer populations must not grow with height.
        let mut population = vec![0usize; self.max_level + 1];
        for node in &self.nodes {
            for slot in population.iter_mut().take(node.level + 1) {
                *slot += 1;
            }
        }
        for w in population.windows(2) {
            if w[1] > w[0] {
                return fail("layer population increases with height".into());
            }
        }
        Ok(())
    }

    /// Adjacency as nested vectors, used by determinism tests and the codec.
    pub fn adjacency(&self) -> Vec<Vec<Vec<u32>>> {
        self.nodes.iter().map(|n| n.layers.clone()).collect()
    }
}
