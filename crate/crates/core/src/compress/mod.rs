//! Magnitude pruning, checkpoint serialization, and parameter, FLOP and
//! size accounting.

pub mod checkpoint;
pub mod prune;
pub mod stats;

pub use checkpoint::{
    deserialize, load_checkpoint, save_checkpoint, serialize, Format, Payload, SparseModel,
    StoredTensor,
};
pub use prune::{apply_mask, fine_tune, prune_global_l1, PruneMask, PruneScope};
pub use stats::{count_stats, measure_flops, size_stats, stats_text, LayerStats, ModelStats, SizeStats};
