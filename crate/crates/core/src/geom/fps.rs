use super::cloud::{bev_dist2, PointCloud};

fn sorted_unique(indices: &[usize]) -> Vec<usize> {
    let mut v = indices.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Eligible point farthest (in BEV) from the BEV centroid of the eligible set.
/// Ties go to the lowest index. `None` for an empty set.
pub fn bev_fps_start(cloud: &PointCloud, eligible: &[usize]) -> Option<usize> {
    let eligible = sorted_unique(eligible);
    if eligible.is_empty() {
        return None;
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for &i in &eligible {
        let p = cloud.point(i);
        cx += p[0];
        cy += p[1];
    }
    let n = eligible.len() as f64;
    let centroid = [cx / n, cy / n, 0.0];
    let mut best = eligible[0];
    let mut best_d = f64::NEG_INFINITY;
    for &i in &eligible {
        let d = bev_dist2(&cloud.point(i), &centroid);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    Some(best)
}

/// Height-agnostic farthest point sampling over `eligible`.
///
/// Returns `min(n, |eligible|)` distinct indices in selection order.
pub fn bev_fps(cloud: &PointCloud, eligible: &[usize], n: usize) -> Vec<usize> {
    match bev_fps_start(cloud, eligible) {
        Some(first) if n > 0 => bev_fps_from(cloud, eligible, n, first),
        _ => Vec::new(),
    }
}

/// Farthest point sampling with an explicit first pick.
///
/// Every later pick maximizes the minimum BEV distance to the points already
/// chosen; ties go to the lowest index. `first` must be eligible.
pub fn bev_fps_from(cloud: &PointCloud, eligible: &[usize], n: usize, first: usize) -> Vec<usize> {
    let eligible = sorted_unique(eligible);
    let target = n.min(eligible.len());
    if target == 0 {
        return Vec::new();
    }
    let first_slot = eligible
        .binary_search(&first)
        .expect("first pick must be an eligible index");

    let mut selected = vec![false; eligible.len()];
    let mut min_d: Vec<f64> = eligible
        .iter()
        .map(|&i| bev_dist2(&cloud.point(i), &cloud.point(first)))
        .collect();
    selected[first_slot] = true;
    let mut out = Vec::with_capacity(target);
    out.push(first);

    while out.len() < target {
        let mut best_slot = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (slot, &d) in min_d.iter().enumerate() {
            if !selected[slot] && d > best_d {
                best_d = d;
                best_slot = slot;
            }
        }
        selected[best_slot] = true;
        let chosen = eligible[best_slot];
        out.push(chosen);
        let cp = cloud.point(chosen);
        for (slot, &i) in eligible.iter().enumerate() {
            let d = bev_dist2(&cloud.point(i), &cp);
            if d < min_d[slot] {
                min_d[slot] = d;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud(points: Vec<[f64; 3]>) -> PointCloud {
        let n = points.len();
        PointCloud::new(points, vec![0.0; n]).unwrap()
    }

    #[test]
    fn exhaustive_when_n_equals_size() {
        let c = cloud(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0, 5.0, 0.0]]);
        let mut out = bev_fps(&c, &[0, 1, 2, 3], 4);
        out.sort();
        assert_eq!(out, vec![0, 1, 2, 3]);
    }

    #[test]
    fn collinear_endpoints() {
        let c = cloud((0..4).map(|i| [i as f64, 0.0, 0.0]).collect());
        assert_eq!(bev_fps(&c, &[0, 1, 2, 3], 2), vec![0, 3]);
    }

    #[test]
    fn height_is_ignored() {
        let c = cloud(vec![[0.0, 0.0, 0.0], [0.0, 0.0, 5.0], [1.0, 0.0, 0.0]]);
        assert_eq!(bev_fps_from(&c, &[0, 1, 2], 2, 0), vec![0, 2]);
    }

    #[test]
    fn saturates_and_handles_empty() {
        let c = cloud(vec![[0.0; 3], [1.0, 1.0, 0.0]]);
        assert_eq!(bev_fps(&c, &[1, 0], 10).len(), 2);
        assert!(bev_fps(&c, &[], 3).is_empty());
        assert!(bev_fps(&c, &[0, 1], 0).is_empty());
    }

    #[test]
    fn duplicate_positions_stay_distinct() {
        let c = cloud(vec![[1.0, 1.0, 0.0]; 3]);
        let mut out = bev_fps(&c, &[0, 1, 2], 3);
        out.sort();
        assert_eq!(out, vec![0, 1, 2]);
    }

    /// Greedy farthest point sampling recomputing every minimum distance.
    fn oracle(points: &[[f64; 3]], eligible: &[usize], n: usize) -> Vec<usize> {
        let elig = sorted_unique(eligible);
        if elig.is_empty() || n == 0 {
            return Vec::new();
        }
        let d = |a: &[f64; 3], b: &[f64; 3]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        let m = elig.len() as f64;
        let c = [
            elig.iter().map(|&i| points[i][0]).sum::<f64>() / m,
            elig.iter().map(|&i| points[i][1]).sum::<f64>() / m,
            0.0,
        ];
        let mut out: Vec<usize> = Vec::new();
        while out.len() < n.min(elig.len()) {
            let score = |i: usize| {
                if out.is_empty() {
                    d(&points[i], &c)
                } else {
                    out.iter().map(|&s| d(&points[i], &points[s])).fold(f64::INFINITY, f64::min)
                }
            };
            let mut best = None;
            for &i in elig.iter().filter(|i| !out.contains(i)) {
                if best.is_none_or(|(bs, _)| score(i) > bs) {
                    best = Some((score(i), i));
                }
            }
            out.push(best.unwrap().1);
        }
        out
    }

    fn arb_points() -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(
            prop_oneof![
                prop::array::uniform3(-30.0f64..30.0),
                // lattice points produce exact ties
                prop::array::uniform3(-3i32..3).prop_map(|a| a.map(f64::from)),
            ],
            1..120,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn matches_greedy_oracle(pts in arb_points(), n in 0usize..40, keep in prop::collection::vec(any::<bool>(), 120)) {
            let eligible: Vec<usize> = (0..pts.len()).filter(|&i| keep[i]).collect();
            let c = cloud(pts.clone());
            prop_assert_eq!(bev_fps(&c, &eligible, n), oracle(&pts, &eligible, n));
        }

        #[test]
        fn invariant_to_heights(pts in arb_points(), n in 0usize..40, z in prop::collection::vec(-50.0f64..50.0, 120)) {
            let eligible: Vec<usize> = (0..pts.len()).collect();
            let lifted: Vec<[f64; 3]> = pts.iter().zip(&z).map(|(p, &h)| [p[0], p[1], h]).collect();
            prop_assert_eq!(bev_fps(&cloud(pts), &eligible, n), bev_fps(&cloud(lifted), &eligible, n));
        }
    }
}
