//! Shared fixtures for the integration suites.

use std::sync::{Arc, OnceLock};

use dhnsw::bench::{build_index, upload_to_target, BuiltIndex, Target};
use dhnsw::config::Settings;
use dhnsw::dataset::mixture_queries;
use dhnsw::engine::{ComputeEngine, EngineConfig};
use dhnsw::memory::MemoryNode;
use dhnsw::transport::{FabricConfig, Transport};

/// The desk-scale workload: 20k 32-d vectors in 64 partitions, 2000 queries,
/// ground truth at k = 10. Built once per test binary.
pub struct DeskFixture {
    pub settings: Settings,
    pub queries: Vec<Vec<f32>>,
    pub built: BuiltIndex,
    pub node: Arc<MemoryNode>,
}

impl DeskFixture {
    pub fn get() -> &'static DeskFixture {
        static FIXTURE: OnceLock<DeskFixture> = OnceLock::new();
        FIXTURE.get_or_init(|| {
            let settings = desk_settings();
            let base = dhnsw::dataset::generate_mixture(&settings.synthetic_spec());
            let queries = mixture_queries(&settings.synthetic_spec(), settings.queries, 1);
            let built = build_index(&base, &settings).unwrap();
            let target = Target::Inproc(MemoryNode::new());
            upload_to_target(&built, &target, &settings).unwrap();
            let Target::Inproc(node) = target else {
                unreachable!()
            };
            DeskFixture {
                settings,
                queries,
                built,
                node,
            }
        })
    }

    /// A fresh engine over the fixture's region: cold cache, zeroed stats.
    pub fn engine(&self, cache_clusters: usize, doorbell_max: usize) -> ComputeEngine {
        let fabric = FabricConfig {
            doorbell_max,
            ..FabricConfig::default()
        };
        ComputeEngine::connect(
            self.built.meta.clone(),
            Transport::connect_inproc(Arc::clone(&self.node), fabric),
            EngineConfig {
                ef_meta: self.settings.ef_meta_resolved(),
                cache_clusters,
            },
        )
        .unwrap()
    }
}

pub fn desk_settings() -> Settings {
    Settings {
        vectors: 20_000,
        dim: 32,
        blobs: 16,
        representatives: 64,
        queries: 2000,
        batch_size: 2000,
        b: 4,
        k: 10,
        ef_search: 48,
        seed: 42,
        ..Settings::default()
    }
}
