use super::cloud::{dist2, PointCloud};

/// The `k` pool points nearest (3D Euclidean) to `center`, center included.
/// Ties are broken by lowest index; the result is sorted by index.
pub fn knn_context(cloud: &PointCloud, center: usize, k: usize, pool: &[usize]) -> Vec<usize> {
    let c = cloud.point(center);
    let mut ranked: Vec<(f64, usize)> = pool
        .iter()
        .map(|&i| (dist2(&cloud.point(i), &c), i))
        .collect();
    ranked.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.dedup_by_key(|e| e.1);
    let mut out: Vec<usize> = ranked.into_iter().take(k.max(1)).map(|(_, i)| i).collect();
    out.sort_unstable();
    out
}

/// Pool points inside the vertical pillar of square footprint `side_m`
/// centred on `center`. Height is ignored. Sorted by index.
pub fn pillar_context(cloud: &PointCloud, center: usize, side_m: f64, pool: &[usize]) -> Vec<usize> {
    let c = cloud.point(center);
    let half = side_m / 2.0;
    let mut out: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| {
            let p = cloud.point(i);
            (p[0] - c[0]).abs() <= half && (p[1] - c[1]).abs() <= half
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: Vec<[f64; 3]>) -> PointCloud {
        let n = points.len();
        PointCloud::new(points, vec![0.0; n]).unwrap()
    }

    #[test]
    fn knn_cases() {
        let c = cloud(vec![[0.0; 3], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
        let pool = [0, 1, 2, 3];
        assert_eq!(knn_context(&c, 0, 1, &pool), vec![0]);
        assert_eq!(knn_context(&c, 0, 2, &pool), vec![0, 1]);
        assert_eq!(knn_context(&c, 2, 10, &pool), vec![0, 1, 2, 3]);
    }

    #[test]
    fn knn_tie_prefers_lower_index() {
        let c = cloud(vec![[0.0; 3], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        assert_eq!(knn_context(&c, 0, 2, &[2, 1, 0]), vec![0, 1]);
    }

    #[test]
    fn pillar_cases() {
        let c = cloud(vec![[0.0; 3], [0.4, 0.0, 7.0], [0.6, 0.0, 0.0], [0.0, -0.5, -3.0]]);
        assert_eq!(pillar_context(&c, 0, 1.0, &[0, 1, 2, 3]), vec![0, 1, 3]);
        assert_eq!(pillar_context(&c, 0, 1.0, &[0]), vec![0]);
    }
}
