use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::cloud::{Point3, PointCloud};
use super::kdtree::KdTree;
use crate::error::{invalid, Result};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = Aabb { min: first, max: first };
        for p in it {
            for a in 0..3 {
                bb.min[a] = bb.min[a].min(p[a]);
                bb.max[a] = bb.max[a].max(p[a]);
            }
        }
        Some(bb)
    }

    pub fn extents(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Member point indices, ascending.
    pub members: Vec<usize>,
    pub bbox: Aabb,
}

impl Cluster {
    pub fn point_count(&self) -> usize {
        self.members.len()
    }
}

/// Instance clusters; `labels[i]` is the position in `clusters` of the cluster
/// holding point `i`, or `None` when the point is unclustered.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub labels: Vec<Option<usize>>,
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterFilterConfig {
    pub min_points: usize,
    pub max_extent_m: f64,
    pub max_aspect: f64,
}

impl Default for ClusterFilterConfig {
    fn default() -> Self {
        Self {
            min_points: 5,
            max_extent_m: 12.0,
            max_aspect: 12.0,
        }
    }
}

impl ClusterFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_points < 1 {
            return Err(invalid("filter.min_points must be >= 1"));
        }
        if !(self.max_extent_m.is_finite() && self.max_extent_m > 0.0) {
            return Err(invalid("filter.max_extent_m must be positive"));
        }
        if !(self.max_aspect.is_finite() && self.max_aspect >= 1.0) {
            return Err(invalid("filter.max_aspect must be >= 1"));
        }
        Ok(())
    }

    pub fn accepts(&self, cluster: &Cluster) -> bool {
        let [ex, ey, ez] = cluster.bbox.extents();
        let long = ex.max(ey);
        let short = ex.min(ey).max(0.1);
        cluster.point_count() >= self.min_points
            && ex.max(ey).max(ez) <= self.max_extent_m
            && long / short <= self.max_aspect
    }
}

/// Radially bounded nearest-neighbour clustering: the connected components of
/// the graph joining candidate points at 3D distance <= `radius_m`.
///
/// Components are numbered by their lowest member index, ascending.
pub fn rbnn_cluster(cloud: &PointCloud, candidates: &[usize], radius_m: f64) -> ClusterSet {
    let mut cand = candidates.to_vec();
    cand.sort_unstable();
    cand.dedup();

    let tree = KdTree::build(cloud.points(), &cand);
    let mut labels: Vec<Option<usize>> = vec![None; cloud.len()];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();

    for &seed in &cand {
        if labels[seed].is_some() {
            continue;
        }
        let id = clusters.len();
        labels[seed] = Some(id);
        let mut members = vec![seed];
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            tree.for_each_within(&cloud.point(i), radius_m, |j| {
                if labels[j].is_none() {
                    labels[j] = Some(id);
                    members.push(j);
                    queue.push_back(j);
                }
            });
        }
        members.sort_unstable();
        let bbox = Aabb::from_points(members.iter().map(|&m| &cloud.points()[m])).expect("non-empty");
        clusters.push(Cluster { members, bbox });
    }
    ClusterSet { labels, clusters }
}

/// Drops clusters with anomalous size or shape; their points become
/// unclustered. Retained clusters keep their relative order and are renumbered.
pub fn filter_clusters(set: &ClusterSet, cfg: &ClusterFilterConfig) -> ClusterSet {
    let mut labels = vec![None; set.labels.len()];
    let mut clusters = Vec::new();
    for cluster in set.clusters.iter().filter(|c| cfg.accepts(c)) {
        let id = clusters.len();
        for &m in &cluster.members {
            labels[m] = Some(id);
        }
        clusters.push(cluster.clone());
    }
    ClusterSet { labels, clusters }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(points: Vec<Point3>) -> PointCloud {
        let n = points.len();
        PointCloud::new(points, vec![0.0; n]).unwrap()
    }

    #[test]
    fn single_edge_joins() {
        let c = cloud(vec![[0.0; 3], [0.5, 0.0, 0.0]]);
        assert_eq!(rbnn_cluster(&c, &[0, 1], 1.0).clusters.len(), 1);
    }

    #[test]
    fn distant_points_split() {
        let c = cloud(vec![[0.0; 3], [2.0, 0.0, 0.0]]);
        let set = rbnn_cluster(&c, &[0, 1], 1.0);
        assert_eq!(set.clusters.len(), 2);
        assert_eq!(set.labels, vec![Some(0), Some(1)]);
    }

    #[test]
    fn chain_is_transitive() {
        let c = cloud(vec![[0.0; 3], [0.9, 0.0, 0.0], [1.8, 0.0, 0.0]]);
        let set = rbnn_cluster(&c, &[0, 1, 2], 1.0);
        assert_eq!(set.clusters.len(), 1);
        assert_eq!(set.clusters[0].members, vec![0, 1, 2]);
    }

    #[test]
    fn non_candidates_unlabeled() {
        let c = cloud(vec![[0.0; 3], [0.1, 0.0, 0.0], [0.2, 0.0, 0.0]]);
        let set = rbnn_cluster(&c, &[0, 2], 1.0);
        assert_eq!(set.labels, vec![Some(0), None, Some(0)]);
    }

    fn box_cluster(count: usize, ext: Point3) -> Cluster {
        Cluster {
            members: (0..count).collect(),
            bbox: Aabb { min: [0.0; 3], max: ext },
        }
    }

    #[test]
    fn filter_thresholds() {
        let cfg = ClusterFilterConfig::default();
        let few = ClusterFilterConfig { min_points: 5, ..cfg };
        assert!(!few.accepts(&box_cluster(3, [1.0, 1.0, 1.0])));
        assert!(!cfg.accepts(&box_cluster(500, [40.0, 2.0, 2.0])));
        assert!(cfg.accepts(&box_cluster(120, [4.5, 1.9, 1.6])));
        // thin wall: 8 m by 0.3 m is too elongated
        assert!(!cfg.accepts(&box_cluster(300, [8.0, 0.3, 2.5])));
    }

    #[test]
    fn filter_relabels_removed_points() {
        let c = cloud(vec![[0.0; 3], [0.1, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let set = rbnn_cluster(&c, &[0, 1, 2], 0.5);
        let cfg = ClusterFilterConfig { min_points: 2, ..Default::default() };
        let kept = filter_clusters(&set, &cfg);
        assert_eq!(kept.clusters.len(), 1);
        assert_eq!(kept.labels, vec![Some(0), Some(0), None]);
        assert_eq!(filter_clusters(&kept, &cfg), kept);
    }

    /// Components of the radius graph by union-find over every pair.
    fn oracle(points: &[Point3], r: f64) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut root: Vec<usize> = (0..n).collect();
        fn find(root: &mut [usize], mut x: usize) -> usize {
            while root[x] != x {
                x = root[x];
            }
            x
        }
        for a in 0..n {
            for b in a + 1..n {
                if crate::geom::dist2(&points[a], &points[b]) <= r * r {
                    let (ra, rb) = (find(&mut root, a), find(&mut root, b));
                    root[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut groups = std::collections::BTreeMap::<usize, Vec<usize>>::new();
        for a in 0..n {
            let r = find(&mut root, a);
            groups.entry(r).or_default().push(a);
        }
        groups.into_values().collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn matches_union_find(pts in prop::collection::vec(prop::array::uniform3(-6.0f64..6.0), 1..150), r in 0.2f64..2.0) {
            let all: Vec<usize> = (0..pts.len()).collect();
            let set = rbnn_cluster(&cloud(pts.clone()), &all, r);
            let members: Vec<Vec<usize>> = set.clusters.iter().map(|c| c.members.clone()).collect();
            prop_assert_eq!(members, oracle(&pts, r));
        }

        #[test]
        fn filter_is_idempotent_subset(pts in prop::collection::vec(prop::array::uniform3(-6.0f64..6.0), 1..150),
                                       r in 0.2f64..2.0, min_points in 1usize..6, aspect in 1.0f64..6.0) {
            let all: Vec<usize> = (0..pts.len()).collect();
            let set = rbnn_cluster(&cloud(pts), &all, r);
            let cfg = ClusterFilterConfig { min_points, max_extent_m: 6.0, max_aspect: aspect };
            let once = filter_clusters(&set, &cfg);
            prop_assert!(once.clusters.iter().all(|c| set.clusters.contains(c)));
            prop_assert_eq!(filter_clusters(&once, &cfg), once);
        }
    }
}
