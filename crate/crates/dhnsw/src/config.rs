//! Plain-text `key = value` configuration covering the fabric, engine,
//! build, and benchmark knobs. Unknown keys are rejected; `#` starts a
//! comment. The memory-node address can be overridden with the
//! `DHNSW_MEMORY_ADDR` environment variable.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::engine::ExecMode;
use crate::error::{Error, Result};
use crate::layout::default_overflow_capacity;
use crate::partition::default_ef_meta;
use crate::transport::FabricConfig;

pub const ADDRESS_ENV_VAR: &str = "DHNSW_MEMORY_ADDR";

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    // fabric
    pub backend: String,
    pub address: String,
    pub doorbell_max: usize,
    pub base_rtt_us: f64,
    pub bandwidth_gbps: f64,
    // engine
    pub b: usize,
    pub k: usize,
    pub ef_search: usize,
    pub ef_meta: Option<usize>,
    pub cache_clusters: Option<usize>,
    pub cache_fraction: f64,
    pub batch_size: usize,
    pub workers: usize,
    // index build
    pub m: usize,
    pub ef_construction: usize,
    pub representatives: usize,
    pub seed: u64,
    pub overflow_capacity: Option<u64>,
    pub region_mb: u64,
    // dataset (synthetic unless paths are given)
    pub dim: usize,
    pub vectors: usize,
    pub blobs: usize,
    pub spread: f32,
    pub extent: f32,
    pub queries: usize,
    pub base_path: Option<PathBuf>,
    pub query_path: Option<PathBuf>,
    pub groundtruth_path: Option<PathBuf>,
    pub meta_path: PathBuf,
    // bench
    pub ef_sweep: Vec<usize>,
    pub modes: Vec<ExecMode>,
    pub report_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
    pub results_path: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            backend: "inproc".into(),
            address: "127.0.0.1:7441".into(),
            doorbell_max: 8,
            base_rtt_us: 2.0,
            bandwidth_gbps: 100.0,
            b: 4,
            k: 10,
            ef_search: 48,
            ef_meta: None,
            cache_clusters: None,
            cache_fraction: 0.10,
            batch_size: 2000,
            workers: 1,
            m: 16,
            ef_construction: 200,
            representatives: 64,
            seed: 42,
            overflow_capacity: None,
            region_mb: 64,
            dim: 32,
            vectors: 20_000,
            blobs: 16,
            spread: 1.5,
            extent: 4.0,
            queries: 2000,
            base_path: None,
            query_path: None,
            groundtruth_path: None,
            meta_path: PathBuf::from("meta.dsub"),
            ef_sweep: vec![1, 2, 4, 8, 16, 32, 48],
            modes: vec![ExecMode::Naive, ExecMode::NoDoorbell, ExecMode::Full],
            report_path: None,
            csv_path: None,
            results_path: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl FromStr for Settings {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut settings = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            settings.set(key.trim(), value.trim())?;
        }
        settings.apply_env();
        Ok(settings)
    }
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    /// Environment beats the file for the memory-node address.
    fn apply_env(&mut self) {
        if let Ok(addr) = std::env::var(ADDRESS_ENV_VAR) {
            if !addr.is_empty() {
                self.address = addr;
            }
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "backend" => {
                if value != "inproc" && value != "tcp" {
                    return Err(Error::Config(format!(
                        "backend must be 'inproc' or 'tcp', got '{value}'"
                    )));
                }
                self.backend = value.into();
            }
            "address" => self.address = value.into(),
            "doorbell_max" => self.doorbell_max = parse(key, value)?,
            "base_rtt_us" => self.base_rtt_us = parse(key, value)?,
            "bandwidth_gbps" => self.bandwidth_gbps = parse(key, value)?,
            "b" => self.b = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "ef_search" => self.ef_search = parse(key, value)?,
            "ef_meta" => self.ef_meta = Some(parse(key, value)?),
            "cache_clusters" => self.cache_clusters = Some(parse(key, value)?),
            "cache_fraction" => self.cache_fraction = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "ef_construction" => self.ef_construction = parse(key, value)?,
            "representatives" => self.representatives = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "overflow_capacity" => self.overflow_capacity = Some(parse(key, value)?),
            "region_mb" => self.region_mb = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "vectors" => self.vectors = parse(key, value)?,
            "blobs" => self.blobs = parse(key, value)?,
            "spread" => self.spread = parse(key, value)?,
            "extent" => self.extent = parse(key, value)?,
            "queries" => self.queries = parse(key, value)?,
            "base_path" => self.base_path = Some(PathBuf::from(value)),
            "query_path" => self.query_path = Some(PathBuf::from(value)),
            "groundtruth_path" => self.groundtruth_path = Some(PathBuf::from(value)),
            "meta_path" => self.meta_path = PathBuf::from(value),
            "ef_sweep" => self.ef_sweep = parse_list(key, value)?,
            "modes" => {
                self.modes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(ExecMode::from_str)
                    .collect::<Result<_>>()?
            }
            "report_path" => self.report_path = Some(PathBuf::from(value)),
            "csv_path" => self.csv_path = Some(PathBuf::from(value)),
            "results_path" => self.results_path = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn fabric(&self) -> FabricConfig {
        FabricConfig {
            doorbell_max: self.doorbell_max,
            base_rtt_us: self.base_rtt_us,
            bandwidth_gbps: self.bandwidth_gbps,
        }
    }

    pub fn ef_meta_resolved(&self) -> usize {
        self.ef_meta.unwrap_or_else(|| default_ef_meta(self.b))
    }

    /// Cache capacity in clusters: explicit count wins, otherwise the
    /// configured fraction of the partition count.
    pub fn cache_clusters_resolved(&self, partitions: usize) -> usize {
        self.cache_clusters
            .unwrap_or_else(|| (self.cache_fraction * partitions as f64).floor() as usize)
    }

    pub fn overflow_capacity_resolved(&self) -> u64 {
        self.overflow_capacity
            .unwrap_or_else(|| default_overflow_capacity(self.dim))
    }

    pub fn synthetic_spec(&self) -> crate::dataset::SyntheticSpec {
        crate::dataset::SyntheticSpec {
            vectors: self.vectors,
            dim: self.dim,
            blobs: self.blobs,
            spread: self.spread,
            extent: self.extent,
            seed: self.seed,
        }
    }
}
