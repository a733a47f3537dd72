use serde::{Deserialize, Serialize};

use super::matrix::{dot, FeatureMatrix};
use super::negatives::NegativeSets;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_TAU: f64 = 0.07;

/// Loss value plus gradients w.r.t. both (already normalized) feature matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossOutput {
    pub value: f64,
    pub grad_point: FeatureMatrix,
    pub grad_image: FeatureMatrix,
}

fn check_pair(point: &FeatureMatrix, image: &FeatureMatrix, sets: &NegativeSets) -> Result<()> {
    if !point.same_shape(image) {
        return Err(Error::Shape(format!(
            "point features {}x{} vs image features {}x{}",
            point.rows(),
            point.dim(),
            image.rows(),
            image.dim()
        )));
    }
    sets.validate(point.rows())
}

/// One directional term: anchor row `i` of `anchor` against candidate rows
/// `{i} ∪ set` of `cand`. Accumulates gradients scaled by `w` and returns the
/// unscaled term `-log softmax_i`.
#[allow(clippy::too_many_arguments)]
fn directional(
    anchor: &FeatureMatrix,
    cand: &FeatureMatrix,
    i: usize,
    set: &[usize],
    tau: f64,
    w: f64,
    g_anchor: &mut FeatureMatrix,
    g_cand: &mut FeatureMatrix,
) -> f64 {
    let a = anchor.row(i);
    let mut idx = Vec::with_capacity(set.len() + 1);
    idx.push(i);
    idx.extend_from_slice(set);
    let logits: Vec<f64> = idx.iter().map(|&j| dot(a, cand.row(j)) / tau).collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let term = m + z.ln() - logits[0];

    // d term / d logit_k = p_k - [k == positive]
    let scale = w / tau;
    for (k, &j) in idx.iter().enumerate() {
        let coeff = scale * (exps[k] / z - if k == 0 { 1.0 } else { 0.0 });
        if coeff == 0.0 {
            continue;
        }
        let cj = cand.row(j).to_vec();
        for (g, c) in g_anchor.row_mut(i).iter_mut().zip(&cj) {
            *g += coeff * c;
        }
        for (g, x) in g_cand.row_mut(j).iter_mut().zip(a) {
            *g += coeff * x;
        }
    }
    term
}

/// Bidirectional InfoNCE with per-unit negative sets.
///
/// Both directions restrict negatives to `sets[i]`. Inputs are treated as
/// free variables: gradients are w.r.t. the rows as given, so callers feed
/// normalized features and back-propagate through their own normalization.
pub fn infonce(point: &FeatureMatrix, image: &FeatureMatrix, sets: &NegativeSets, tau: f64) -> Result<LossOutput> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("temperature must be positive, got {tau}")));
    }
    check_pair(point, image, sets)?;
    let b = point.rows();
    let w = 1.0 / (2.0 * b as f64);
    let mut grad_point = FeatureMatrix::zeros(b, point.dim());
    let mut grad_image = FeatureMatrix::zeros(b, point.dim());
    let mut sum = 0.0;
    for i in 0..b {
        let set = &sets.sets[i];
        sum += directional(image, point, i, set, tau, w, &mut grad_image, &mut grad_point);
        sum += directional(point, image, i, set, tau, w, &mut grad_point, &mut grad_image);
    }
    Ok(LossOutput {
        value: w * sum,
        grad_point,
        grad_image,
    })
}

/// Fraction of the `2B` directional classifications where the positive pair
/// strictly beats every negative in its set.
pub fn contrastive_accuracy(point: &FeatureMatrix, image: &FeatureMatrix, sets: &NegativeSets) -> Result<f64> {
    check_pair(point, image, sets)?;
    let b = point.rows();
    let mut correct = 0usize;
    for i in 0..b {
        let pos = dot(point.row(i), image.row(i));
        let set = &sets.sets[i];
        if set.iter().all(|&j| pos > dot(point.row(i), image.row(j))) {
            correct += 1;
        }
        if set.iter().all(|&j| pos > dot(image.row(i), point.row(j))) {
            correct += 1;
        }
    }
    Ok(correct as f64 / (2 * b) as f64)
}

/// Mean positive-pair cosine similarity.
pub fn alignment_score(point: &FeatureMatrix, image: &FeatureMatrix) -> Result<f64> {
    if !point.same_shape(image) {
        return Err(Error::Shape("alignment needs equally shaped matrices".into()));
    }
    let b = point.rows();
    Ok((0..b).map(|i| dot(point.row(i), image.row(i))).sum::<f64>() / b as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::negatives::{negative_sets, similarity_matrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_rows(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap().normalized().unwrap()
    }

    fn random_unit(rng: &mut ChaCha8Rng, b: usize, d: usize) -> FeatureMatrix {
        let data = (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureMatrix::new(b, d, data).unwrap().normalized().unwrap()
    }

    fn random_sets(rng: &mut ChaCha8Rng, b: usize) -> NegativeSets {
        let sets = (0..b)
            .map(|i| (0..b).filter(|&j| j != i && rng.random_bool(0.6)).collect())
            .collect();
        NegativeSets { budget: b, sets }
    }

    /// Long-hand scalar recomputation: explicit sums over the formula, no
    /// shared helpers, gradients by explicit softmax weights.
    fn oracle(p: &[Vec<f64>], im: &[Vec<f64>], s: &[Vec<usize>], tau: f64) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let b = p.len();
        let d = p[0].len();
        let ip = |x: &Vec<f64>, y: &Vec<f64>| -> f64 {
            let mut acc = 0.0;
            for k in 0..d {
                acc += x[k] * y[k];
            }
            acc
        };
        let mut loss = 0.0;
        let mut gp = vec![vec![0.0; d]; b];
        let mut gi = vec![vec![0.0; d]; b];
        let c = 1.0 / (2.0 * b as f64 * tau);
        for i in 0..b {
            for dir in 0..2 {
                let (anc, cand) = if dir == 0 { (im, p) } else { (p, im) };
                let pos = (ip(&anc[i], &cand[i]) / tau).exp();
                let mut den = pos;
                for &j in &s[i] {
                    den += (ip(&anc[i], &cand[j]) / tau).exp();
                }
                loss -= (pos / den).ln() / (2.0 * b as f64);
                let mut js = vec![i];
                js.extend(&s[i]);
                for &j in &js {
                    let pj = (ip(&anc[i], &cand[j]) / tau).exp() / den;
                    let coeff = c * (pj - if j == i { 1.0 } else { 0.0 });
                    for k in 0..d {
                        let (ga, gc) = if dir == 0 { (&mut gi, &mut gp) } else { (&mut gp, &mut gi) };
                        ga[i][k] += coeff * cand[j][k];
                        gc[j][k] += coeff * anc[i][k];
                    }
                }
            }
        }
        (loss, gp, gi)
    }

    #[test]
    fn single_unit_without_negatives_is_zero() {
        let f = unit_rows(&[&[0.3, 0.4]]);
        let out = infonce(&f, &f, &NegativeSets::empty(1), 0.07).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad_point.data().iter().chain(out.grad_image.data()).all(|&g| g == 0.0));
    }

    #[test]
    fn identical_pair_gives_log_two() {
        let f = unit_rows(&[&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]]);
        for tau in [0.01, 0.07, 1.0, 50.0] {
            let out = infonce(&f, &f, &NegativeSets::all_others(2), tau).unwrap();
            assert!((out.value - std::f64::consts::LN_2).abs() < 1e-12, "{}", out.value);
        }
    }

    #[test]
    fn identical_features_mean_log_set_size() {
        let f = unit_rows(&[&[0.2, 0.9, -0.1] as &[f64]; 5]);
        let sets = NegativeSets {
            budget: 4,
            sets: vec![vec![1, 2, 3, 4], vec![0], vec![], vec![0, 1], vec![0, 1, 2]],
        };
        let want = sets.sets.iter().map(|s| ((s.len() + 1) as f64).ln()).sum::<f64>() / 5.0;
        let out = infonce(&f, &f, &sets, 0.3).unwrap();
        assert!((out.value - want).abs() < 1e-12);
    }

    #[test]
    fn three_unit_fixture_matches_scalar_oracle() {
        let p = unit_rows(&[
            &[0.61, -0.23, 0.75, 0.11],
            &[-0.42, 0.88, 0.05, -0.19],
            &[0.14, 0.33, -0.57, 0.74],
        ]);
        let im = unit_rows(&[
            &[0.52, -0.08, 0.81, -0.26],
            &[-0.71, 0.49, 0.37, 0.12],
            &[0.29, -0.66, -0.18, 0.67],
        ]);
        let sets = NegativeSets {
            budget: 2,
            sets: vec![vec![1, 2], vec![2], vec![0]],
        };
        let out = infonce(&p, &im, &sets, 0.2).unwrap();
        let (v, gp, gi) = oracle(&p.to_rows(), &im.to_rows(), &sets.sets, 0.2);
        assert!((out.value - v).abs() <= 1e-12);
        for i in 0..3 {
            for k in 0..4 {
                assert!((out.grad_point.row(i)[k] - gp[i][k]).abs() <= 1e-12);
                assert!((out.grad_image.row(i)[k] - gi[i][k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = unit_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let g = unit_rows(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let sets = NegativeSets::all_others(2);
        assert!(infonce(&f, &f, &sets, 0.0).is_err());
        assert!(infonce(&f, &f, &sets, -1.0).is_err());
        assert!(matches!(infonce(&f, &g, &sets, 0.1), Err(Error::Shape(_))));
        let bad = NegativeSets { budget: 1, sets: vec![vec![0], vec![]] };
        assert!(infonce(&f, &f, &bad, 0.1).is_err());
    }

    #[test]
    fn accuracy_examples() {
        // pos 0.9, negatives 0.1 and 0.5
        let p = FeatureMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let im = FeatureMatrix::from_rows(&[[0.9, 0.0, 0.0], [0.1, 0.0, 0.0], [0.5, 0.0, 0.0]]).unwrap();
        let one = |set: Vec<usize>| NegativeSets {
            budget: 2,
            sets: vec![set, vec![], vec![]],
        };
        // row 0 image->point direction: pos 0.9 vs <im_0, p_j> = 0, correct too
        assert_eq!(contrastive_accuracy(&p, &im, &one(vec![1, 2])).unwrap(), 1.0);
        let im2 = FeatureMatrix::from_rows(&[[0.4, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        let acc = contrastive_accuracy(&p, &im2, &one(vec![1])).unwrap();
        assert!((acc - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(contrastive_accuracy(&p, &im, &NegativeSets::empty(3)).unwrap(), 1.0);
    }

    #[test]
    fn alignment_examples() {
        let a = unit_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = unit_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let c = unit_rows(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(alignment_score(&a, &a).unwrap(), 1.0);
        assert_eq!(alignment_score(&a, &b).unwrap(), 0.0);
        assert_eq!(alignment_score(&a, &c).unwrap(), 0.5);
    }

    #[test]
    fn finite_difference_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for case in 0..30 {
            let b = rng.random_range(2..=8);
            let d = rng.random_range(4..=12);
            let tau = [0.07, 0.2, 1.0][case % 3];
            let p = random_unit(&mut rng, b, d);
            let im = random_unit(&mut rng, b, d);
            let sets = random_sets(&mut rng, b);
            let out = infonce(&p, &im, &sets, tau).unwrap();
            for which in 0..2 {
                let (base, grad) = if which == 0 { (&p, &out.grad_point) } else { (&im, &out.grad_image) };
                for k in 0..base.data().len() {
                    let eval = |delta: f64| {
                        let mut m = base.clone();
                        m.data_mut()[k] += delta;
                        let (pp, ii) = if which == 0 { (&m, &im) } else { (&p, &m) };
                        infonce(pp, ii, &sets, tau).unwrap().value
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = grad.data()[k];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1.0);
                    assert!(rel <= 1e-6, "case {case}: fd {fd} vs analytic {an}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_under_swap(seed in any::<u64>(), b in 1usize..10, d in 2usize..8, tau in 0.05f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_unit(&mut rng, b, d);
            let im = random_unit(&mut rng, b, d);
            let sets = random_sets(&mut rng, b);
            let a = infonce(&p, &im, &sets, tau).unwrap();
            let s = infonce(&im, &p, &sets, tau).unwrap();
            prop_assert!((a.value - s.value).abs() <= 1e-12);
            prop_assert!(a.value >= 0.0);
        }

        #[test]
        fn dropping_a_negative_never_increases_loss(seed in any::<u64>(), b in 2usize..10, d in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_unit(&mut rng, b, d);
            let im = random_unit(&mut rng, b, d);
            let sets = NegativeSets::all_others(b);
            let full = infonce(&p, &im, &sets, 0.1).unwrap().value;
            let mut fewer = sets.clone();
            let i = rng.random_range(0..b);
            let k = rng.random_range(0..fewer.sets[i].len());
            fewer.sets[i].remove(k);
            prop_assert!(infonce(&p, &im, &fewer, 0.1).unwrap().value <= full);
        }

        #[test]
        fn zero_iff_all_sets_empty(seed in any::<u64>(), b in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_unit(&mut rng, b, 3);
            let im = random_unit(&mut rng, b, 3);
            prop_assert_eq!(infonce(&p, &im, &NegativeSets::empty(b), 0.07).unwrap().value, 0.0);
            if b > 1 {
                prop_assert!(infonce(&p, &im, &NegativeSets::all_others(b), 0.07).unwrap().value > 0.0);
            }
        }

        #[test]
        fn accuracy_invariant_under_common_rotation(seed in any::<u64>(), b in 2usize..10, angle in -3.1f64..3.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_unit(&mut rng, b, 3);
            let im = random_unit(&mut rng, b, 3);
            let sets = negative_sets(&similarity_matrix(&im).unwrap(), (b / 2).max(1)).unwrap();
            let (s, c) = angle.sin_cos();
            let rot = |m: &FeatureMatrix| {
                let rows: Vec<Vec<f64>> = m.to_rows().iter().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]]).collect();
                FeatureMatrix::from_rows(&rows).unwrap()
            };
            let before = contrastive_accuracy(&p, &im, &sets).unwrap();
            let after = contrastive_accuracy(&rot(&p), &rot(&im), &sets).unwrap();
            prop_assert_eq!(before, after);
            prop_assert!((0.0..=1.0).contains(&before));
        }
    }
}
