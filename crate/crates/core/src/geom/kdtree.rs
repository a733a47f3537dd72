use super::cloud::{dist2, Point3};

const LEAF_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static 3-D k-d tree over a subset of a point slice, for radius queries.
#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Point3], indices: &[usize]) -> Self {
        let mut tree = Self {
            points,
            order: indices.to_vec(),
            nodes: Vec::new(),
        };
        if !tree.order.is_empty() {
            tree.build_node(0, tree.order.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[self.order[mid]][axis];

        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Calls `visit` for every indexed point within `radius` (inclusive) of `query`.
    pub fn for_each_within(&self, query: &Point3, radius: f64, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        if dist2(&self.points[i], query) <= r2 {
                            visit(i);
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    if query[axis] - radius <= value {
                        stack.push(left);
                    }
                    if query[axis] + radius >= value {
                        stack.push(right);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radius_query_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..400)
            .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0)])
            .collect();
        let subset: Vec<usize> = (0..400).filter(|i| i % 3 != 0).collect();
        let tree = KdTree::build(&pts, &subset);
        for q in 0..50 {
            let query = pts[q];
            let mut got = Vec::new();
            tree.for_each_within(&query, 1.1, |i| got.push(i));
            got.sort();
            let want: Vec<usize> = subset
                .iter()
                .copied()
                .filter(|&i| dist2(&pts[i], &query) <= 1.1 * 1.1)
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn empty_tree() {
        let pts: Vec<Point3> = vec![[0.0; 3]];
        let tree = KdTree::build(&pts, &[]);
        let mut hits = 0;
        tree.for_each_within(&[0.0; 3], 10.0, |_| hits += 1);
        assert_eq!(hits, 0);
    }
}
