//! Geometric kernels over point clouds.

mod cloud;
mod cluster;
mod fps;
mod ground;
mod kdtree;
mod neighbors;

pub use cloud::{augment, bev_dist2, dist2, AugmentationParams, AugmentationRanges, Point3, PointCloud};
pub use cluster::{filter_clusters, rbnn_cluster, Aabb, Cluster, ClusterFilterConfig, ClusterSet};
pub use fps::{bev_fps, bev_fps_from, bev_fps_start};
pub use ground::{segment_ground, GroundMask, GroundSegConfig};
pub use kdtree::KdTree;
pub use neighbors::{knn_context, pillar_context};
