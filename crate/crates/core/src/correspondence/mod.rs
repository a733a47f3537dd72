//! Camera-LiDAR correspondence: projection, feature sampling, multi-level
//! fusion and multi-camera pooling.

mod camera;
mod featmap;

pub use camera::{pinhole, project_point, visible_in, CameraCalibration, Pixel, PixelLocation, IDENTITY4};
pub use featmap::{fuse_levels, pool_cameras, sample_feature, FeatureMap};
pub(crate) use featmap::check_camera_maps;
