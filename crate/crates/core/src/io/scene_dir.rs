use std::path::{Path, PathBuf};

use super::binary::{read_featmap, write_cloud, write_featmap, write_labels};
use super::json::{write_calib, write_json};
use crate::correspondence::FeatureMap;
use crate::error::Result;
use crate::simulator::SyntheticScene;

pub fn featmap_file_name(camera: usize) -> String {
    format!("featmap_{camera:02}.fmap")
}

/// Files of a synthetic scene directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneFiles {
    pub cloud: PathBuf,
    pub labels: PathBuf,
    pub objects: PathBuf,
    pub calib: PathBuf,
    /// One per camera, in calibration order.
    pub featmaps: Vec<PathBuf>,
}

impl SceneFiles {
    pub fn in_dir(dir: &Path, cameras: usize) -> Self {
        Self {
            cloud: dir.join("cloud.bin"),
            labels: dir.join("labels.bin"),
            objects: dir.join("objects.json"),
            calib: dir.join("calib.json"),
            featmaps: (0..cameras).map(|k| dir.join(featmap_file_name(k))).collect(),
        }
    }

    /// Layout of an existing directory; feature maps are found by name.
    pub fn discover(dir: &Path) -> Result<Self> {
        let mut cameras = 0;
        while dir.join(featmap_file_name(cameras)).is_file() {
            cameras += 1;
        }
        Ok(Self::in_dir(dir, cameras))
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = vec![&self.cloud, &self.labels, &self.objects, &self.calib];
        out.extend(self.featmaps.iter().map(PathBuf::as_path));
        out
    }

    pub fn read_featmaps(&self) -> Result<Vec<FeatureMap>> {
        self.featmaps.iter().map(read_featmap).collect()
    }
}

pub fn write_scene_dir(scene: &SyntheticScene, dir: &Path) -> Result<SceneFiles> {
    std::fs::create_dir_all(dir)?;
    let files = SceneFiles::in_dir(dir, scene.feature_maps.len());
    write_cloud(&scene.cloud, &files.cloud)?;
    write_labels(&scene.labels, &files.labels)?;
    write_json(&scene.objects, &files.objects)?;
    write_calib(&scene.calibs, &files.calib)?;
    for (map, path) in scene.feature_maps.iter().zip(&files.featmaps) {
        write_featmap(map, path)?;
    }
    Ok(files)
}
