//! Contrastive unit construction.
//!
//! Pipeline: sampling space (non-ground, camera-visible) -> BEV farthest point
//! sampling of initial centres -> KNN or pillar context -> radius clustering of
//! all non-ground points -> merge of initial units that share a retained
//! cluster. Each final unit carries point statistics and a pooled image feature.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::correspondence::{check_camera_maps, pool_cameras, visible_in, CameraCalibration, FeatureMap};
use crate::error::{invalid, Error, Result};
use crate::geom::{
    bev_dist2, bev_fps, filter_clusters, knn_context, pillar_context, rbnn_cluster, AugmentationParams,
    ClusterFilterConfig, GroundMask, Point3, PointCloud,
};

/// Length of the per-unit statistics vector.
pub const STATS_DIM: usize = 10;

/// Radius (BEV) of the neighbourhood used to estimate local ground height.
pub const GROUND_Z_RADIUS_M: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    Knn,
    Pillar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitConfig {
    pub n_initial: usize,
    pub context_mode: ContextMode,
    pub k: usize,
    pub pillar_side_m: f64,
    pub cluster_radius_m: f64,
    /// Turns instance-aware merging off (ablation).
    pub merge_clusters: bool,
    pub filter: ClusterFilterConfig,
}

impl Default for UnitConfig {
    fn default() -> Self {
        Self {
            n_initial: 64,
            context_mode: ContextMode::Knn,
            k: 16,
            pillar_side_m: 1.0,
            cluster_radius_m: 0.6,
            merge_clusters: true,
            filter: ClusterFilterConfig::default(),
        }
    }
}

impl UnitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_initial < 2 {
            return Err(invalid("units.n_initial must be >= 2"));
        }
        match self.context_mode {
            ContextMode::Knn if self.k < 1 => return Err(invalid("units.k must be >= 1")),
            ContextMode::Pillar if !(self.pillar_side_m.is_finite() && self.pillar_side_m > 0.0) => {
                return Err(invalid("units.pillar_side_m must be positive"))
            }
            _ => {}
        }
        if !(self.cluster_radius_m.is_finite() && self.cluster_radius_m > 0.0) {
            return Err(invalid("units.cluster_radius_m must be positive"));
        }
        self.filter.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveUnit {
    /// Member point indices, ascending.
    pub members: Vec<usize>,
    /// Centres of the initial units folded into this one, in sampling order.
    pub centers: Vec<usize>,
    pub origin_units: usize,
    pub cluster_id: Option<usize>,
    /// Local ground height used for the height statistics.
    pub ground_z: f64,
    pub point_stats: Vec<f64>,
    pub image_feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSet {
    pub units: Vec<ContrastiveUnit>,
}

impl UnitSet {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn image_dim(&self) -> usize {
        self.units.first().map_or(0, |u| u.image_feature.len())
    }
}

/// Indices that are non-ground and visible in at least one camera.
pub fn sampling_space(cloud: &PointCloud, mask: &GroundMask, calibs: &[CameraCalibration]) -> Result<Vec<usize>> {
    check_mask(cloud, mask)?;
    Ok((0..cloud.len())
        .filter(|&i| !mask.is_ground[i] && !visible_in(&cloud.point(i), calibs).is_empty())
        .collect())
}

fn check_mask(cloud: &PointCloud, mask: &GroundMask) -> Result<()> {
    if mask.len() != cloud.len() {
        return Err(Error::Shape(format!(
            "ground mask has {} entries for {} points",
            mask.len(),
            cloud.len()
        )));
    }
    Ok(())
}

/// Statistics of an arbitrary point set: centroid x, y, z - ground_z; bbox
/// extents x, y, z; ln(1 + count); mean intensity; max height above ground;
/// mean 3D range.
pub fn stats_from_points(points: &[(Point3, f64)], ground_z: f64) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(invalid("unit has no member points"));
    }
    let n = points.len() as f64;
    let mut sum = [0.0; 3];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let (mut intensity, mut range) = (0.0, 0.0);
    for (p, i) in points {
        for a in 0..3 {
            sum[a] += p[a];
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
        intensity += i;
        range += (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    }
    Ok(vec![
        sum[0] / n,
        sum[1] / n,
        sum[2] / n - ground_z,
        hi[0] - lo[0],
        hi[1] - lo[1],
        hi[2] - lo[2],
        n.ln_1p(),
        intensity / n,
        hi[2] - ground_z,
        range / n,
    ])
}

/// Unit statistics over `members` (treated as a set) with local ground height.
pub fn unit_stats(cloud: &PointCloud, members: &[usize], ground_z: f64) -> Result<Vec<f64>> {
    unit_stats_augmented(cloud, members, ground_z, &AugmentationParams::identity())
}

/// [`unit_stats`] evaluated in the frame of an augmented copy of the cloud.
/// The ground height is carried into that frame by the augmentation scale.
pub fn unit_stats_augmented(
    cloud: &PointCloud,
    members: &[usize],
    ground_z: f64,
    aug: &AugmentationParams,
) -> Result<Vec<f64>> {
    let mut set = members.to_vec();
    set.sort_unstable();
    set.dedup();
    if let Some(&bad) = set.last().filter(|&&m| m >= cloud.len()) {
        return Err(invalid(format!("member index {bad} out of range")));
    }
    let identity = *aug == AugmentationParams::identity();
    let pts: Vec<(Point3, f64)> = set
        .iter()
        .map(|&i| {
            let p = cloud.point(i);
            let p = if identity { p } else { aug.apply(&p) };
            (p, cloud.intensities()[i])
        })
        .collect();
    stats_from_points(&pts, ground_z * aug.scale)
}

/// Median height of ground points within [`GROUND_Z_RADIUS_M`] (BEV) of `at`,
/// falling back to all ground points, then to zero.
pub fn local_ground_z(cloud: &PointCloud, ground: &[usize], at: &Point3) -> f64 {
    let r2 = GROUND_Z_RADIUS_M * GROUND_Z_RADIUS_M;
    let mut near: Vec<f64> = ground
        .iter()
        .map(|&i| cloud.point(i))
        .filter(|p| bev_dist2(p, at) <= r2)
        .map(|p| p[2])
        .collect();
    if near.is_empty() {
        near = ground.iter().map(|&i| cloud.point(i)[2]).collect();
    }
    median(&mut near).unwrap_or(0.0)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn centroid(cloud: &PointCloud, members: &[usize]) -> Point3 {
    let mut c = [0.0; 3];
    for &m in members {
        let p = cloud.point(m);
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    let n = members.len() as f64;
    [c[0] / n, c[1] / n, c[2] / n]
}

fn mean_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for r in rows {
        if acc.is_empty() {
            acc = r.to_vec();
        } else {
            acc.iter_mut().zip(r).for_each(|(a, x)| *a += x);
        }
        n += 1;
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    acc
}

/// An initial unit before instance merging.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialUnit {
    pub center: usize,
    pub members: Vec<usize>,
    pub image_feature: Vec<f64>,
}

/// A merged unit: members, constituent centres, cluster id, image feature.
pub type MergedUnit = (Vec<usize>, Vec<usize>, Option<usize>, Vec<f64>);

/// Groups initial units by the retained cluster holding their centre.
///
/// Units sharing a cluster merge into one: members become the union of their
/// contexts and the cluster, the image feature becomes the mean of theirs.
/// Units outside every retained cluster pass through. `cluster_labels[i]` and
/// `cluster_members[c]` describe the retained clusters. Output order follows
/// the first constituent's sampling order.
pub fn merge_initial_units(
    initial: &[InitialUnit],
    cluster_labels: &[Option<usize>],
    cluster_members: &[Vec<usize>],
) -> Vec<MergedUnit> {
    let mut slot_of_cluster: BTreeMap<usize, usize> = BTreeMap::new();
    let mut groups: Vec<(Option<usize>, Vec<usize>)> = Vec::new();
    for (k, unit) in initial.iter().enumerate() {
        match cluster_labels.get(unit.center).copied().flatten() {
            Some(c) => match slot_of_cluster.get(&c) {
                Some(&slot) => groups[slot].1.push(k),
                None => {
                    slot_of_cluster.insert(c, groups.len());
                    groups.push((Some(c), vec![k]));
                }
            },
            None => groups.push((None, vec![k])),
        }
    }

    groups
        .into_iter()
        .map(|(cluster, parts)| {
            let mut members: Vec<usize> = parts.iter().flat_map(|&k| initial[k].members.iter().copied()).collect();
            if let Some(c) = cluster {
                members.extend(cluster_members[c].iter().copied());
            }
            members.sort_unstable();
            members.dedup();
            let centers = parts.iter().map(|&k| initial[k].center).collect();
            let feature = mean_rows(parts.iter().map(|&k| initial[k].image_feature.as_slice()));
            (members, centers, cluster, feature)
        })
        .collect()
}

/// Builds the contrastive units of one frame.
///
/// `maps` holds one (already fused) feature map per camera.
pub fn build_units(
    cloud: &PointCloud,
    mask: &GroundMask,
    calibs: &[CameraCalibration],
    maps: &[FeatureMap],
    cfg: &UnitConfig,
) -> Result<UnitSet> {
    cfg.validate()?;
    check_mask(cloud, mask)?;
    check_camera_maps(calibs, maps)?;

    let space = sampling_space(cloud, mask, calibs)?;
    if space.len() < 2 {
        return Err(Error::InsufficientSamplingSpace { found: space.len() });
    }

    let centers = bev_fps(cloud, &space, cfg.n_initial);
    let contexts: Vec<Vec<usize>> = centers
        .iter()
        .map(|&c| match cfg.context_mode {
            ContextMode::Knn => knn_context(cloud, c, cfg.k, &space),
            ContextMode::Pillar => pillar_context(cloud, c, cfg.pillar_side_m, &space),
        })
        .collect();

    // per-point pooled image features, computed once for every context member
    let mut point_features: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &m in contexts.iter().flatten() {
        if let std::collections::btree_map::Entry::Vacant(e) = point_features.entry(m) {
            if let Some(f) = pool_cameras(&cloud.point(m), calibs, maps)? {
                e.insert(f);
            }
        }
    }

    let initial: Vec<InitialUnit> = centers
        .iter()
        .zip(contexts)
        .map(|(&center, members)| {
            let image_feature = mean_rows(members.iter().filter_map(|m| point_features.get(m).map(Vec::as_slice)));
            InitialUnit {
                center,
                members,
                image_feature,
            }
        })
        .collect();

    let non_ground: Vec<usize> = (0..cloud.len()).filter(|&i| !mask.is_ground[i]).collect();
    let (labels, cluster_members) = if cfg.merge_clusters {
        let clusters = filter_clusters(&rbnn_cluster(cloud, &non_ground, cfg.cluster_radius_m), &cfg.filter);
        let members = clusters.clusters.into_iter().map(|c| c.members).collect();
        (clusters.labels, members)
    } else {
        (vec![None; cloud.len()], Vec::new())
    };

    let ground: Vec<usize> = mask.ground_indices().collect();
    let units = merge_initial_units(&initial, &labels, &cluster_members)
        .into_iter()
        .map(|(members, centers, cluster_id, image_feature)| {
            let ground_z = local_ground_z(cloud, &ground, &centroid(cloud, &members));
            let point_stats = unit_stats(cloud, &members, ground_z)?;
            Ok(ContrastiveUnit {
                origin_units: centers.len(),
                members,
                centers,
                cluster_id,
                ground_z,
                point_stats,
                image_feature,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitSet { units })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::pinhole;

    fn cloud(points: Vec<Point3>, intensity: f64) -> PointCloud {
        let n = points.len();
        PointCloud::new(points, vec![intensity; n]).unwrap()
    }

    #[test]
    fn single_point_stats() {
        let c = cloud(vec![[1.0, 2.0, 3.0]], 0.5);
        let s = unit_stats(&c, &[0], 0.0).unwrap();
        let want = [1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 2f64.ln(), 0.5, 3.0, 14f64.sqrt()];
        assert_eq!(s, want);
    }

    #[test]
    fn two_point_stats() {
        let c = cloud(vec![[0.0; 3], [2.0, 0.0, 0.0]], 0.2);
        let s = unit_stats(&c, &[0, 1], 0.0).unwrap();
        assert_eq!(&s[..4], &[1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn stats_treat_members_as_set() {
        let c = cloud(vec![[0.3, 1.0, 2.0], [2.0, -1.0, 0.5], [4.0, 4.0, 4.0]], 0.7);
        let a = unit_stats(&c, &[0, 1, 2], 0.1).unwrap();
        let b = unit_stats(&c, &[2, 0, 1, 0, 2], 0.1).unwrap();
        assert_eq!(a, b);
        assert!(unit_stats(&c, &[], 0.0).is_err());
    }

    #[test]
    fn merge_averages_image_features() {
        let initial = vec![
            InitialUnit { center: 0, members: vec![0], image_feature: vec![0.0, 2.0] },
            InitialUnit { center: 1, members: vec![1], image_feature: vec![2.0, 0.0] },
            InitialUnit { center: 3, members: vec![3], image_feature: vec![5.0, 5.0] },
        ];
        let labels = vec![Some(0), Some(0), Some(0), None];
        let merged = merge_initial_units(&initial, &labels, &[vec![0, 1, 2]]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].0, vec![0, 1, 2]);
        assert_eq!(merged[0].1, vec![0, 1]);
        assert_eq!(merged[0].2, Some(0));
        assert_eq!(merged[0].3, vec![1.0, 1.0]);
        assert_eq!(merged[1].3, vec![5.0, 5.0]);
    }

    fn forward_camera() -> (Vec<CameraCalibration>, Vec<FeatureMap>) {
        // camera looking along +x from the origin: camera z = lidar x, camera x = -lidar y, camera y = -lidar z
        let e = [
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let cam = CameraCalibration::new(pinhole(50.0, 50.0, 50.0, 50.0), e, 100, 100).unwrap();
        let data: Vec<f32> = (0..25 * 25).flat_map(|i| [1.0, (i % 25) as f32]).collect();
        let map = FeatureMap::new(25, 25, 2, 4, data).unwrap();
        (vec![cam], vec![map])
    }

    #[test]
    fn sampling_space_filters_ground_and_invisible() {
        let (calibs, _) = forward_camera();
        let c = cloud(vec![[10.0, 0.0, 0.0], [-10.0, 0.0, 1.0], [10.0, 1.0, 1.0], [10.0, 2.0, 0.0]], 0.1);
        let mask = GroundMask { is_ground: vec![true, false, false, true] };
        assert_eq!(sampling_space(&c, &mask, &calibs).unwrap(), vec![2]);
        let all_ground = GroundMask { is_ground: vec![true; 4] };
        assert!(sampling_space(&c, &all_ground, &calibs).unwrap().is_empty());
    }

    #[test]
    fn insufficient_space_errors() {
        let (calibs, maps) = forward_camera();
        let c = cloud(vec![[10.0, 0.0, 1.0], [-10.0, 0.0, 1.0]], 0.1);
        let mask = GroundMask { is_ground: vec![false, false] };
        let err = build_units(&c, &mask, &calibs, &maps, &UnitConfig::default()).unwrap_err();
        assert!(err.to_string().contains("insufficient sampling space"));
    }

    #[test]
    fn separated_points_stay_separate() {
        let (calibs, maps) = forward_camera();
        // far-apart single returns: clusters of one point are filtered out, so no merging
        let pts: Vec<Point3> = (0..6).map(|i| [10.0, -4.0 + 1.6 * i as f64, 0.5]).collect();
        let c = cloud(pts, 0.4);
        let mask = GroundMask { is_ground: vec![false; 6] };
        let cfg = UnitConfig { n_initial: 4, k: 1, ..Default::default() };
        let set = build_units(&c, &mask, &calibs, &maps, &cfg).unwrap();
        assert_eq!(set.len(), 4);
        assert!(set.units.iter().all(|u| u.origin_units == 1 && u.cluster_id.is_none()));
        assert!(set.units.iter().all(|u| u.image_feature[0] == 1.0));
    }

    #[test]
    fn dense_blob_merges_into_one_unit() {
        let (calibs, maps) = forward_camera();
        let mut pts = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    pts.push([10.0 + 0.25 * k as f64, -0.5 + 0.25 * i as f64, 0.2 + 0.25 * j as f64]);
                }
            }
        }
        let c = cloud(pts, 0.4);
        let mask = GroundMask { is_ground: vec![false; 64] };
        let cfg = UnitConfig { n_initial: 8, k: 4, ..Default::default() };
        let set = build_units(&c, &mask, &calibs, &maps, &cfg).unwrap();
        assert_eq!(set.len(), 1);
        let unit = &set.units[0];
        assert_eq!(unit.origin_units, 8);
        assert_eq!(unit.cluster_id, Some(0));
        assert_eq!(unit.members.len(), 64);
    }
}
