//! Synthetic scenes, a toy point encoder and the pre-training loop.

mod encoder;
mod eval;
mod render;
mod scene;
mod train;

pub use encoder::{encoder_backward, encoder_forward, EncoderCache, EncoderParams, ENCODER_HIDDEN_DIM, ENCODER_OUT_DIM, STATS_INPUT_SCALE, STATS_INPUT_SHIFT};
pub use eval::{
    expected_uniform_same_class_fraction, ground_precision_recall, match_instances, same_class_fraction, unit_classes,
    InstanceMatch,
};
pub use render::{render_feature_maps, Palette, RenderConfig};
pub use scene::{
    generate_scene, ring_cameras, ObjectRecord, SceneSpec, SemanticClass, SyntheticScene, BLIND_RADIUS_M,
    MAX_PLACEMENT_RETRIES, OBJECT_GAP_M,
};
pub use train::{
    prepare_batches, run_on_batches, run_pretrain, run_pretrain_with, train_step, FinalParams, RunConfig, RunTrace,
    StepRecord, TrainBatch, TrainConfig, TrainMode, TrainState,
};
