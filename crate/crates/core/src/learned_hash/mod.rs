//! Order-preserving hash built on a two-stage recursive model.
//!
//! A stage-0 router sends a key to one of `B` leaves; the leaf predicts the
//! key's rank, which is clamped to the leaf's rank interval and scaled into
//! the hash space: `hash = floor(rank * H / N)`. The router is monotone and
//! leaf intervals are ordered and disjoint, so the hash never decreases with
//! the key.

mod leaf;
mod model;
mod router;
mod scout;
mod stats;
mod wire;

pub use leaf::{Anchor, LeafFamily, LeafModel, LeafParams};
pub use model::{
    learned_hash, train_rmi, AnchorStep, RmiModel, TrainConfig, TrainingSet, ANCHOR_SCALE_LEVELS,
};
pub use router::{Router, RouterKind};
pub use scout::{evaluate_candidate, model_scout, ScoutChoice, DEFAULT_SIZE_BUDGET};
pub use stats::{error_stats, prediction_errors, quantile, ModelStats};
pub use wire::{
    apply_segments, decode_segments, deserialize_full, leaf_record_len, serialize_changed_segments,
    serialize_full, ApplyOutcome, BlobHeader, LeafSegment, SegmentBlob, HEADER_LEN,
};
