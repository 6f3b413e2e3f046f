//! Training-free visual token pruning.
//!
//! Patch tokens from a frozen vision encoder are scored by a blend of CLS
//! attention (how salient a patch is within the image) and cosine similarity
//! to the prompt's text embedding (how relevant it is to the query). The top
//! `K` survive in their original order, and [`cost`] estimates what the
//! shorter visual prefix saves in language-model prefill FLOPs and kv-cache
//! memory.
//!
//! ```
//! use atp_core::{atp_pipeline, gen_synthetic, PlantedBlock, PruneConfig, SyntheticSpec, Keep};
//!
//! let fx = gen_synthetic(&SyntheticSpec {
//!     grid_rows: 8, grid_cols: 8, dim: 32, heads: 2,
//!     block: PlantedBlock { row0: 2, col0: 2, height: 2, width: 2 },
//!     signal_strength: 0.9, seed: 7,
//! }).unwrap();
//! let cfg = PruneConfig { keep: Keep::Count(4), ..PruneConfig::default() };
//! let res = atp_pipeline(&fx.patches, &fx.attention, &fx.text, None, &cfg).unwrap();
//! assert_eq!(res.kept_indices, vec![18, 19, 26, 27]);
//! ```

pub mod cost;
pub mod error;
pub mod fixtures;
pub mod math;
pub mod pruner;
pub mod rng;
pub mod saliency;

pub use cost::{latency_speedup, relative_report, CostReport, LmShape};
pub use error::{AtpError, Result};
pub use fixtures::{
    gen_synthetic, read_container, write_container, Fixture, PlantedBlock, SyntheticSpec,
};
pub use math::{cosine, dot, l2_norm, minmax_normalize, ScoreVector, Vector};
pub use pruner::{
    apply_prune, atp_pipeline, fuse, jaccard, kept_set_stability, top_k, Keep, PruneConfig,
    PruneResult, StabilitySummary,
};
pub use saliency::{
    inter_scores, intra_cls, intra_rowsum, intra_scores, AttentionMap, Grid, IntraMode,
    PatchTokenSet, ProjectionMatrix, TextEmbedding,
};
