//! Dataset ingestion and evaluation plumbing: fvecs/ivecs containers, the
//! exhaustive ground-truth oracle, recall, and a seeded Gaussian-mixture
//! generator for self-contained runs.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hnsw::VectorRecord;
use crate::scalar::squared_l2_unchecked;

/// Parse the classic vector container: repeated records of a little-endian
/// `i32` dimension followed by `dim` little-endian 32-bit payloads.
fn load_vecs<T, F: Fn([u8; 4]) -> T>(path: &Path, convert: F) -> Result<Vec<Vec<T>>> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;

    let mut out = Vec::new();
    let mut at = 0usize;
    let mut dim: Option<usize> = None;
    while at < bytes.len() {
        if at + 4 > bytes.len() {
            return Err(Error::Truncated { offset: at });
        }
        let d = i32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        if d <= 0 {
            return Err(Error::Corrupt(format!(
                "record dimension {d} at byte offset {at}"
            )));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::DimensionMismatch { expected, got: d })
            }
            _ => {}
        }
        at += 4;
        let end = at + d * 4;
        if end > bytes.len() {
            return Err(Error::Truncated { offset: at });
        }
        let values: Vec<T> = bytes[at..end]
            .chunks_exact(4)
            .map(|c| convert([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(values);
        at = end;
    }
    Ok(out)
}

/// Load an `.fvecs` file of float vectors.
pub fn load_fvecs(path: &Path) -> Result<Vec<Vec<f32>>> {
    load_vecs(path, f32::from_le_bytes)
}

/// Load an `.ivecs` file of integer vectors (ground-truth id lists).
pub fn load_ivecs(path: &Path) -> Result<Vec<Vec<i32>>> {
    load_vecs(path, i32::from_le_bytes)
}

/// Exhaustive top-k scan: squared L2, ties to the smaller id. This is the
/// oracle every recall number in the harness is measured against.
pub fn ground_truth(
    base: &[VectorRecord<f32>],
    queries: &[Vec<f32>],
    k: usize,
) -> Result<Vec<Vec<u64>>> {
    let dim = base.first().ok_or(Error::EmptyInput)?.values.len();
    let mut truth = Vec::with_capacity(queries.len());
    for q in queries {
        if q.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: q.len(),
            });
        }
        let mut scored: Vec<(f32, u64)> = base
            .iter()
            .map(|r| (squared_l2_unchecked(q, &r.values), r.id))
            .collect();
        scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        truth.push(scored.into_iter().map(|(_, id)| id).collect());
    }
    Ok(truth)
}

/// recall@k for one query: |result ∩ truth[0..k]| / k.
pub fn recall_at_k(result_ids: &[u64], truth_ids: &[u64], k: usize) -> Result<f64> {
    if truth_ids.len() < k {
        return Err(Error::InvalidParameter(format!(
            "ground truth holds {} ids, recall@{k} needs {k}",
            truth_ids.len()
        )));
    }
    let truth: std::collections::HashSet<u64> = truth_ids[..k].iter().copied().collect();
    let hits = result_ids.iter().filter(|id| truth.contains(id)).count();
    Ok(hits as f64 / k as f64)
}

/// Mean recall@k over a batch of queries.
pub fn mean_recall(results: &[Vec<u64>], truth: &[Vec<u64>], k: usize) -> Result<f64> {
    if results.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} result rows against {} truth rows",
            results.len(),
            truth.len()
        )));
    }
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for (r, t) in results.iter().zip(truth.iter()) {
        total += recall_at_k(r, t, k)?;
    }
    Ok(total / results.len() as f64)
}

/// Shape of a seeded Gaussian-mixture dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub vectors: usize,
    pub dim: usize,
    pub blobs: usize,
    /// Component standard deviation.
    pub spread: f32,
    /// Blob centers are uniform in `[-extent, extent]^dim`.
    pub extent: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            vectors: 20_000,
            dim: 32,
            blobs: 16,
            spread: 1.5,
            extent: 4.0,
            seed: 42,
        }
    }
}

fn blob_centers(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    (0..spec.blobs)
        .map(|_| {
            (0..spec.dim)
                .map(|_| rng.gen_range(-spec.extent..spec.extent))
                .collect()
        })
        .collect()
}

/// Generate the base vectors, ids `0..vectors`.
pub fn generate_mixture(spec: &SyntheticSpec) -> Vec<VectorRecord<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = blob_centers(spec, &mut rng);
    let normal = Normal::new(0.0f32, spec.spread).expect("positive spread");
    (0..spec.vectors)
        .map(|i| {
            let center = &centers[rng.gen_range(0..centers.len())];
            let values = center
                .iter()
                .map(|&c| c + normal.sample(&mut rng))
                .collect();
            VectorRecord::new(i as u64, values)
        })
        .collect()
}

/// Draw `count` query vectors from the same mixture (fresh noise, same
/// centers), offset from the base stream by `salt`.
pub fn mixture_queries(spec: &SyntheticSpec, count: usize, salt: u64) -> Vec<Vec<f32>> {
    let mut center_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = blob_centers(spec, &mut center_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(
        spec.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1),
    );
    let normal = Normal::new(0.0f32, spec.spread).expect("positive spread");
    (0..count)
        .map(|_| {
            let center = &centers[rng.gen_range(0..centers.len())];
            center
                .iter()
                .map(|&c| c + normal.sample(&mut rng))
                .collect()
        })
        .collect()
}
