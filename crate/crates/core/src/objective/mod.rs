//! Similarity, negative sampling, projection heads and the contrastive loss.

mod loss;
mod matrix;
mod mlp;
mod negatives;

pub use loss::{alignment_score, contrastive_accuracy, infonce, LossOutput, DEFAULT_TAU};
pub use matrix::{dot, norm, FeatureMatrix};
pub use mlp::{head_backward, head_forward, HeadCache, Mlp, MlpCache, MlpGrads, ProjectionHead, HEAD_HIDDEN_DIM, HEAD_OUT_DIM};
pub use negatives::{default_budget, negative_sets, similarity_matrix, NegativeSets, SimilarityMatrix};
