use serde::{Deserialize, Serialize};

use super::matrix::{dot, FeatureMatrix};
use crate::error::{invalid, Error, Result};

/// Square matrix of pairwise cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!("{} values for a {n}x{n} matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("similarity matrix contains non-finite values"));
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Cosine similarity of every pair of rows.
///
/// Symmetric with a unit diagonal; entries are clamped to [-1, 1].
pub fn similarity_matrix(feats: &FeatureMatrix) -> Result<SimilarityMatrix> {
    let unit = feats.normalized()?;
    let n = unit.rows();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let s = dot(unit.row(i), unit.row(j)).clamp(-1.0, 1.0);
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix { n, data })
}

/// Per-unit negative index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeSets {
    /// Configured budget `L`.
    pub budget: usize,
    /// `sets[i]`: negatives of unit `i`, ascending.
    pub sets: Vec<Vec<usize>>,
}

impl NegativeSets {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn empty(rows: usize) -> Self {
        Self {
            budget: 0,
            sets: vec![Vec::new(); rows],
        }
    }

    /// Every other unit is a negative.
    pub fn all_others(rows: usize) -> Self {
        Self {
            budget: rows.saturating_sub(1),
            sets: (0..rows).map(|i| (0..rows).filter(|&j| j != i).collect()).collect(),
        }
    }

    pub fn validate(&self, rows: usize) -> Result<()> {
        if self.sets.len() != rows {
            return Err(Error::Shape(format!("{} negative sets for {rows} units", self.sets.len())));
        }
        for (i, set) in self.sets.iter().enumerate() {
            if let Some(&j) = set.iter().find(|&&j| j >= rows || j == i) {
                return Err(invalid(format!("negative set {i} contains invalid index {j}")));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!("negative set {i} is not strictly ascending")));
            }
        }
        Ok(())
    }
}

/// Similarity-balanced negatives: for each row, the `budget` other units with
/// the smallest similarity, ties to the lowest index.
pub fn negative_sets(sim: &SimilarityMatrix, budget: usize) -> Result<NegativeSets> {
    if budget < 1 {
        return Err(invalid("negative budget L must be >= 1"));
    }
    let n = sim.len();
    let sets = (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (sim.get(i, j), j)).collect();
            others.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut set: Vec<usize> = others.into_iter().take(budget).map(|(_, j)| j).collect();
            set.sort_unstable();
            set
        })
        .collect();
    Ok(NegativeSets { budget, sets })
}

/// Default negative budget: half the batch, rounded down.
pub fn default_budget(rows: usize) -> usize {
    (rows / 2).max(1)
}
