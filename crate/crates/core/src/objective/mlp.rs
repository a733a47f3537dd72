use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm, FeatureMatrix};
use crate::error::{invalid, Error, Result};

pub const HEAD_HIDDEN_DIM: usize = 32;
pub const HEAD_OUT_DIM: usize = 16;

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn fresh_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// One-hidden-layer perceptron `in -> hidden -> out`, ReLU on the hidden
/// layer, linear output. Weights are row-major `(out, in)`.
///
/// Every parameter change assigns a fresh generation; caches from an older
/// generation are rejected by [`Mlp::backward`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    in_dim: usize,
    hidden_dim: usize,
    out_dim: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    #[serde(skip, default = "fresh_generation")]
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && self.w1 == other.w1
            && self.b1 == other.b1
            && self.w2 == other.w2
            && self.b2 == other.b2
    }
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    generation: u64,
    input: FeatureMatrix,
    /// Post-ReLU hidden activations, `rows x hidden`.
    hidden: Vec<f64>,
}

/// Parameter gradients in the same layout as [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2].into_iter().flatten().copied().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&g| g == 0.0)
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

impl Mlp {
    pub fn new(
        (in_dim, hidden_dim, out_dim): (usize, usize, usize),
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        if in_dim == 0 || hidden_dim == 0 || out_dim == 0 {
            return Err(invalid("perceptron dimensions must be positive"));
        }
        let shapes = [
            (w1.len(), in_dim * hidden_dim, "w1"),
            (b1.len(), hidden_dim, "b1"),
            (w2.len(), hidden_dim * out_dim, "w2"),
            (b2.len(), out_dim, "b2"),
        ];
        if let Some((got, want, name)) = shapes.iter().find(|(g, w, _)| g != w) {
            return Err(Error::Shape(format!("{name} has {got} values, expected {want}")));
        }
        let mlp = Self {
            in_dim,
            hidden_dim,
            out_dim,
            w1,
            b1,
            w2,
            b2,
            generation: fresh_generation(),
        };
        mlp.validate()?;
        Ok(mlp)
    }

    /// He-normal weights, zero biases.
    pub fn random<R: Rng + ?Sized>(dims: (usize, usize, usize), rng: &mut R) -> Result<Self> {
        let (i, h, o) = dims;
        let mut draw = |fan_in: usize, n: usize| -> Vec<f64> {
            let dist = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("positive std");
            (0..n).map(|_| dist.sample(rng)).collect()
        };
        let w1 = draw(i, i * h);
        let w2 = draw(h, h * o);
        Self::new(dims, w1, vec![0.0; h], w2, vec![0.0; o])
    }

    pub fn validate(&self) -> Result<()> {
        if self.params_iter().any(|v| !v.is_finite()) {
            return Err(invalid("perceptron parameters must be finite"));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.in_dim, self.hidden_dim, self.out_dim)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn params_iter(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    /// Flat parameter vector: w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        self.params_iter().copied().collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} parameters for a perceptron with {}",
                flat.len(),
                self.num_params()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(invalid("perceptron parameters must be finite"));
        }
        let mut rest = flat;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        self.generation = fresh_generation();
        Ok(())
    }

    /// Gradient descent update `p -= lr * g`.
    pub fn descend(&mut self, grads: &MlpGrads, lr: f64) {
        if lr == 0.0 {
            return;
        }
        for (p, g) in [
            (&mut self.w1, &grads.w1),
            (&mut self.b1, &grads.b1),
            (&mut self.w2, &grads.w2),
            (&mut self.b2, &grads.b2),
        ] {
            p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
        }
        self.generation = fresh_generation();
    }

    pub fn forward(&self, input: &FeatureMatrix) -> Result<(FeatureMatrix, MlpCache)> {
        if input.dim() != self.in_dim {
            return Err(Error::Shape(format!(
                "input dim {} vs perceptron input {}",
                input.dim(),
                self.in_dim
            )));
        }
        let rows = input.rows();
        let (h, o) = (self.hidden_dim, self.out_dim);
        let mut hidden = vec![0.0; rows * h];
        let mut out = vec![0.0; rows * o];
        for r in 0..rows {
            let x = input.row(r);
            let hr = &mut hidden[r * h..(r + 1) * h];
            for (k, hk) in hr.iter_mut().enumerate() {
                *hk = (dot(&self.w1[k * self.in_dim..(k + 1) * self.in_dim], x) + self.b1[k]).max(0.0);
            }
            for (k, ok) in out[r * o..(r + 1) * o].iter_mut().enumerate() {
                *ok = dot(&self.w2[k * h..(k + 1) * h], hr) + self.b2[k];
            }
        }
        let output = FeatureMatrix::new(rows, o, out)?;
        Ok((
            output,
            MlpCache {
                generation: self.generation,
                input: input.clone(),
                hidden,
            },
        ))
    }

    /// Back-propagates `grad_out` (d loss / d output) to parameters and inputs.
    pub fn backward(&self, cache: &MlpCache, grad_out: &FeatureMatrix) -> Result<(MlpGrads, FeatureMatrix)> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache(
                "cache was produced by different perceptron parameters".into(),
            ));
        }
        let rows = cache.input.rows();
        if grad_out.rows() != rows || grad_out.dim() != self.out_dim {
            return Err(Error::Shape(format!(
                "output gradient {}x{} vs forward output {}x{}",
                grad_out.rows(),
                grad_out.dim(),
                rows,
                self.out_dim
            )));
        }
        let (n, h, o) = self.dims();
        let mut g = MlpGrads {
            w1: vec![0.0; n * h],
            b1: vec![0.0; h],
            w2: vec![0.0; h * o],
            b2: vec![0.0; o],
        };
        let mut grad_in = FeatureMatrix::zeros(rows, n);
        let mut gh = vec![0.0; h];
        for r in 0..rows {
            let go = grad_out.row(r);
            let hr = &cache.hidden[r * h..(r + 1) * h];
            gh.iter_mut().for_each(|v| *v = 0.0);
            for (k, &gk) in go.iter().enumerate() {
                g.b2[k] += gk;
                for j in 0..h {
                    g.w2[k * h + j] += gk * hr[j];
                    gh[j] += gk * self.w2[k * h + j];
                }
            }
            let x = cache.input.row(r);
            let gx = grad_in.row_mut(r);
            for j in 0..h {
                // ReLU gate; the kink at exactly zero takes the zero branch
                if hr[j] <= 0.0 {
                    continue;
                }
                let gj = gh[j];
                g.b1[j] += gj;
                for i in 0..n {
                    g.w1[j * n + i] += gj * x[i];
                    gx[i] += gj * self.w1[j * n + i];
                }
            }
        }
        Ok((g, grad_in))
    }
}

/// Trainable projection head: perceptron followed by row normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub mlp: Mlp,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    mlp: MlpCache,
    /// Normalized outputs.
    output: FeatureMatrix,
    norms: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(mlp: Mlp) -> Self {
        Self { mlp }
    }

    pub fn random<R: Rng + ?Sized>(in_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Self::new(Mlp::random((in_dim, HEAD_HIDDEN_DIM, HEAD_OUT_DIM), rng)?))
    }
}

/// Head forward pass; output rows have unit length.
pub fn head_forward(head: &ProjectionHead, input: &FeatureMatrix) -> Result<(FeatureMatrix, HeadCache)> {
    let (raw, mlp) = head.mlp.forward(input)?;
    let norms: Vec<f64> = (0..raw.rows()).map(|r| norm(raw.row(r))).collect();
    let output = raw.normalized()?;
    Ok((output.clone(), HeadCache { mlp, output, norms }))
}

/// Head backward pass through normalization and the perceptron.
pub fn head_backward(
    head: &ProjectionHead,
    cache: &HeadCache,
    grad_output: &FeatureMatrix,
) -> Result<(MlpGrads, FeatureMatrix)> {
    if !grad_output.same_shape(&cache.output) {
        return Err(Error::Shape("head gradient does not match forward output".into()));
    }
    let raw_grad = normalize_backward(&cache.output, &cache.norms, grad_output);
    head.mlp.backward(&cache.mlp, &raw_grad)
}

/// For `y = z / |z|`: `dz = (g - y (y . g)) / |z|`.
pub(crate) fn normalize_backward(y: &FeatureMatrix, norms: &[f64], g: &FeatureMatrix) -> FeatureMatrix {
    let mut out = FeatureMatrix::zeros(y.rows(), y.dim());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let gr = g.row(r);
        let yg = dot(yr, gr);
        for ((o, &yv), &gv) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *o = (gv - yv * yg) / norms[r];
        }
    }
    out
}
