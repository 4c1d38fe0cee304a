//! Partitioned HNSW vector search over a remote memory region.
//!
//! A small representative index (cached compute-side) routes each query to a
//! handful of per-partition graphs stored in one contiguous remote region.
//! Queries are planned in batches so every required partition crosses the
//! fabric at most once, fragmented reads are doorbell-batched into single
//! round trips, and insertions land in shared overflow regions that stay
//! contiguous with their cluster bytes.
//!
//! Distance math and graph construction are generic over the scalar type
//! ([`scalar::Scalar`]: `f32` or `f64`); the remote byte formats pin vectors
//! to little-endian `f32`, and the concrete `f32` aliases below are what the
//! engine pipeline uses.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod hnsw;
pub mod layout;
pub mod memory;
pub mod partition;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};

/// The record type the remote formats store.
pub type VectorRecordF32 = hnsw::VectorRecord<f32>;
/// Graph instantiation used by the engine pipeline.
pub type HnswGraphF32 = hnsw::HnswGraph<f32>;
/// Meta index over `f32` representatives.
pub type MetaIndexF32 = partition::MetaIndex<f32>;
/// Sub-cluster instantiation the codec serializes.
pub type SubClusterF32 = partition::SubCluster<f32>;
