use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{encoder_backward, encoder_forward, EncoderCache, EncoderParams};
use super::render::RenderConfig;
use super::scene::{generate_scene, SceneSpec, SyntheticScene};
use crate::error::{Error, Result};
use crate::geom::{segment_ground, AugmentationParams, AugmentationRanges, GroundSegConfig, PointCloud};
use crate::objective::{
    alignment_score, contrastive_accuracy, default_budget, head_backward, head_forward, infonce, negative_sets,
    similarity_matrix, FeatureMatrix, HeadCache, LossOutput, MlpGrads, NegativeSets, ProjectionHead, DEFAULT_TAU,
};
use crate::units::{build_units, unit_stats_augmented, UnitConfig, UnitSet, STATS_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Point features of two augmentations of the same units.
    Single,
    /// Point features against frozen-backbone image features.
    Cross,
    /// Sum of the single and cross losses.
    Multi,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "cross" => Ok(Self::Cross),
            "multi" => Ok(Self::Multi),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub steps: usize,
    pub learning_rate: f64,
    pub tau: f64,
    /// Negative budget `L`; `None` uses half the batch.
    pub negatives: Option<usize>,
    /// Scenes cycled through, one batch per step.
    pub scenes: usize,
    pub freeze_image_head: bool,
    pub augmentation: AugmentationRanges,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Cross,
            steps: 500,
            learning_rate: 0.1,
            tau: DEFAULT_TAU,
            negatives: None,
            scenes: 1,
            freeze_image_head: false,
            augmentation: AugmentationRanges::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("train: {m}")));
        if self.steps < 1 {
            return fail("steps must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail("learning_rate must be finite and non-negative");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return fail("tau must be positive");
        }
        if self.negatives == Some(0) {
            return fail("negatives must be >= 1");
        }
        if self.scenes < 1 {
            return fail("scenes must be >= 1");
        }
        self.augmentation.validate()
    }

    pub fn budget(&self, batch: usize) -> usize {
        self.negatives.unwrap_or_else(|| default_budget(batch))
    }
}

/// One scene prepared for training: units are built once on the original
/// cloud and reused under every augmentation, so positives are exact.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub cloud: PointCloud,
    pub units: UnitSet,
    pub image_features: FeatureMatrix,
}

impl TrainBatch {
    pub fn from_scene(scene: &SyntheticScene, ground: &GroundSegConfig, units: &UnitConfig) -> Result<Self> {
        let mask = segment_ground(&scene.cloud, ground);
        let set = build_units(&scene.cloud, &mask, &scene.calibs, &scene.feature_maps, units)?;
        Self::new(scene.cloud.clone(), set)
    }

    pub fn new(cloud: PointCloud, units: UnitSet) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InsufficientSamplingSpace { found: 0 });
        }
        let rows: Vec<&[f64]> = units.units.iter().map(|u| u.image_feature.as_slice()).collect();
        let image_features = FeatureMatrix::from_rows(&rows)?;
        Ok(Self {
            cloud,
            units,
            image_features,
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// `B x 10` statistics in the frame of an augmented copy of the cloud.
    pub fn stats(&self, aug: &AugmentationParams) -> Result<FeatureMatrix> {
        let mut data = Vec::with_capacity(self.len() * STATS_DIM);
        for u in &self.units.units {
            data.extend(unit_stats_augmented(&self.cloud, &u.members, u.ground_z, aug)?);
        }
        FeatureMatrix::new(self.len(), STATS_DIM, data)
    }
}

/// Trainable parameters plus the training RNG.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub encoder: EncoderParams,
    pub point_head: ProjectionHead,
    pub image_head: ProjectionHead,
    pub step: usize,
    rng: ChaCha8Rng,
}

impl TrainState {
    pub fn init(image_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::random(&mut rng)?;
        let point_head = ProjectionHead::random(encoder.mlp.out_dim(), &mut rng)?;
        let image_head = ProjectionHead::random(image_dim, &mut rng)?;
        Ok(Self {
            encoder,
            point_head,
            image_head,
            step: 0,
            rng,
        })
    }

    pub fn params(&self) -> FinalParams {
        FinalParams {
            encoder: self.encoder.clone(),
            point_head: self.point_head.clone(),
            image_head: self.image_head.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalParams {
    pub encoder: EncoderParams,
    pub point_head: ProjectionHead,
    pub image_head: ProjectionHead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: usize,
    pub loss: f64,
    pub contrastive_accuracy: f64,
    pub alignment_score: f64,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub mode: TrainMode,
    pub records: Vec<StepRecord>,
    pub final_params: FinalParams,
}

impl RunTrace {
    /// First 1-based step whose accuracy reaches `threshold`.
    pub fn first_step_reaching(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.contrastive_accuracy >= threshold).map(|r| r.step)
    }
}

struct PointPass {
    enc: EncoderCache,
    head: HeadCache,
    feats: FeatureMatrix,
}

fn point_pass(state: &TrainState, batch: &TrainBatch, aug: &AugmentationParams) -> Result<PointPass> {
    let stats = batch.stats(aug)?;
    let (e, enc) = encoder_forward(&state.encoder, &stats)?;
    let (feats, head) = head_forward(&state.point_head, &e)?;
    Ok(PointPass { enc, head, feats })
}

fn point_grads(state: &TrainState, pass: &PointPass, grad: &FeatureMatrix) -> Result<(MlpGrads, MlpGrads)> {
    let (gh, ge) = head_backward(&state.point_head, &pass.head, grad)?;
    let (genc, _) = encoder_backward(&state.encoder, &pass.enc, &ge)?;
    Ok((genc, gh))
}

fn add(a: &mut FeatureMatrix, b: &FeatureMatrix) {
    a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
}

/// Negatives from detached features: the `L` least similar units.
fn detached_sets(feats: &FeatureMatrix, budget: usize) -> Result<NegativeSets> {
    negative_sets(&similarity_matrix(feats)?, budget)
}

/// One gradient-descent step on one batch. Metrics describe the parameters
/// before the update. Cross and multi modes report the point-image pair,
/// single mode the two point views.
pub fn train_step(state: &TrainState, batch: &TrainBatch, cfg: &TrainConfig) -> Result<(TrainState, StepRecord)> {
    if batch.image_features.dim() != state.image_head.mlp.in_dim() {
        return Err(Error::Shape(format!(
            "batch image features have {} channels, image head expects {}",
            batch.image_features.dim(),
            state.image_head.mlp.in_dim()
        )));
    }
    let mut next = state.clone();
    let aug1 = cfg.augmentation.sample(&mut next.rng);
    let view1 = point_pass(state, batch, &aug1)?;
    let budget = cfg.budget(batch.len());
    let mut grad_p1 = FeatureMatrix::zeros(batch.len(), view1.feats.dim());
    let mut loss = 0.0;
    let mut metrics = None;

    let mut image_update = None;
    if matches!(cfg.mode, TrainMode::Cross | TrainMode::Multi) {
        let (img, img_cache) = head_forward(&state.image_head, &batch.image_features)?;
        let sets = detached_sets(&img, budget)?;
        let LossOutput {
            value,
            grad_point,
            grad_image,
        } = infonce(&view1.feats, &img, &sets, cfg.tau)?;
        loss += value;
        add(&mut grad_p1, &grad_point);
        metrics = Some((
            contrastive_accuracy(&view1.feats, &img, &sets)?,
            alignment_score(&view1.feats, &img)?,
        ));
        if !cfg.freeze_image_head {
            image_update = Some(head_backward(&state.image_head, &img_cache, &grad_image)?.0);
        }
    }

    let mut view2_update = None;
    if matches!(cfg.mode, TrainMode::Single | TrainMode::Multi) {
        let aug2 = cfg.augmentation.sample(&mut next.rng);
        let view2 = point_pass(state, batch, &aug2)?;
        let sets = detached_sets(&view1.feats, budget)?;
        let out = infonce(&view1.feats, &view2.feats, &sets, cfg.tau)?;
        loss += out.value;
        add(&mut grad_p1, &out.grad_point);
        if metrics.is_none() {
            metrics = Some((
                contrastive_accuracy(&view1.feats, &view2.feats, &sets)?,
                alignment_score(&view1.feats, &view2.feats)?,
            ));
        }
        view2_update = Some(point_grads(state, &view2, &out.grad_image)?);
    }

    let (mut g_enc, mut g_head) = point_grads(state, &view1, &grad_p1)?;
    if let Some((e2, h2)) = view2_update {
        g_enc.add_assign(&e2);
        g_head.add_assign(&h2);
    }
    let lr = cfg.learning_rate;
    next.encoder.mlp.descend(&g_enc, lr);
    next.point_head.mlp.descend(&g_head, lr);
    if let Some(g) = image_update {
        next.image_head.mlp.descend(&g, lr);
    }
    next.step += 1;

    let (acc, align) = metrics.expect("every mode computes metrics");
    Ok((
        next,
        StepRecord {
            step: state.step + 1,
            loss,
            contrastive_accuracy: acc,
            alignment_score: align,
            units: batch.len(),
        },
    ))
}

/// Everything a pre-training run depends on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub ground: GroundSegConfig,
    pub units: UnitConfig,
    pub render: RenderConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.ground.validate()?;
        self.units.validate()?;
        self.render.validate()?;
        self.train.validate()
    }

    /// Seeds of the training scenes followed by the parameter seed.
    pub fn derived_seeds(&self) -> (Vec<u64>, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scenes = (0..self.train.scenes).map(|_| rng.next_u64()).collect();
        (scenes, rng.next_u64())
    }
}

/// Builds the training batches of a run.
pub fn prepare_batches(cfg: &RunConfig) -> Result<Vec<TrainBatch>> {
    let (seeds, _) = cfg.derived_seeds();
    seeds
        .into_iter()
        .map(|s| {
            let scene = generate_scene(&cfg.scene, &cfg.render, s)?;
            TrainBatch::from_scene(&scene, &cfg.ground, &cfg.units)
        })
        .collect()
}

/// Runs pre-training, handing each record to `sink` as it is produced.
pub fn run_pretrain_with(cfg: &RunConfig, mut sink: impl FnMut(&StepRecord)) -> Result<RunTrace> {
    cfg.validate()?;
    let batches = prepare_batches(cfg)?;
    run_on_batches(cfg, &batches, &mut sink)
}

pub fn run_pretrain(cfg: &RunConfig) -> Result<RunTrace> {
    run_pretrain_with(cfg, |_| {})
}

/// Pre-training over already prepared batches, cycled in order.
pub fn run_on_batches(cfg: &RunConfig, batches: &[TrainBatch], sink: &mut dyn FnMut(&StepRecord)) -> Result<RunTrace> {
    cfg.validate()?;
    let first = batches.first().ok_or_else(|| Error::Config("no training batches".into()))?;
    let (_, param_seed) = cfg.derived_seeds();
    let mut state = TrainState::init(first.image_features.dim(), param_seed)?;
    let mut records = Vec::with_capacity(cfg.train.steps);
    for t in 0..cfg.train.steps {
        let (next, rec) = train_step(&state, &batches[t % batches.len()], &cfg.train)?;
        log::debug!(
            "step {} loss {:.6} acc {:.4} align {:.4} B={}",
            rec.step,
            rec.loss,
            rec.contrastive_accuracy,
            rec.alignment_score,
            rec.units
        );
        sink(&rec);
        records.push(rec);
        state = next;
    }
    Ok(RunTrace {
        mode: cfg.train.mode,
        records,
        final_params: state.params(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn small() -> RunConfig {
        RunConfig {
            scene: SceneSpec {
                extent_m: 18.0,
                n_vehicles: 3,
                n_pedestrians: 4,
                n_walls: 1,
                points_per_m2: 10.0,
                ..SceneSpec::default()
            },
            seed: 11,
            ..RunConfig::default()
        }
    }

    fn batch() -> &'static TrainBatch {
        static B: OnceLock<TrainBatch> = OnceLock::new();
        B.get_or_init(|| prepare_batches(&small()).unwrap().remove(0))
    }

    fn state() -> TrainState {
        TrainState::init(batch().image_features.dim(), 3).unwrap()
    }

    fn no_aug() -> AugmentationRanges {
        AugmentationRanges {
            max_rotation_rad: 0.0,
            min_scale: 1.0,
            max_scale: 1.0,
            flip_probability: 0.0,
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        for mode in [TrainMode::Single, TrainMode::Cross, TrainMode::Multi] {
            let cfg = TrainConfig {
                mode,
                learning_rate: 0.0,
                ..TrainConfig::default()
            };
            let s = state();
            let (next, rec) = train_step(&s, batch(), &cfg).unwrap();
            assert_eq!(next.params(), s.params());
            assert_eq!(rec.step, 1);
            assert!(rec.loss.is_finite() && rec.units == batch().len());
        }
    }

    #[test]
    fn step_is_deterministic() {
        let cfg = TrainConfig {
            mode: TrainMode::Multi,
            ..TrainConfig::default()
        };
        let s = state();
        let a = train_step(&s, batch(), &cfg).unwrap();
        let b = train_step(&s, batch(), &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn small_step_descends() {
        let cfg = TrainConfig {
            learning_rate: 1e-4,
            augmentation: no_aug(),
            ..TrainConfig::default()
        };
        let (next, before) = train_step(&state(), batch(), &cfg).unwrap();
        let (_, after) = train_step(&next, batch(), &cfg).unwrap();
        assert!(after.loss < before.loss, "{} !< {}", after.loss, before.loss);
    }

    #[test]
    fn image_head_frozen_when_asked_and_in_single_mode() {
        let s = state();
        let frozen = TrainConfig {
            freeze_image_head: true,
            ..TrainConfig::default()
        };
        let (next, _) = train_step(&s, batch(), &frozen).unwrap();
        assert_eq!(next.image_head, s.image_head);
        assert_ne!(next.point_head, s.point_head);
        let single = TrainConfig {
            mode: TrainMode::Single,
            ..TrainConfig::default()
        };
        assert_eq!(train_step(&s, batch(), &single).unwrap().0.image_head, s.image_head);
        let (cross, _) = train_step(&s, batch(), &TrainConfig::default()).unwrap();
        assert_ne!(cross.image_head, s.image_head);
    }

    #[test]
    fn one_step_run_has_one_record() {
        let mut cfg = small();
        cfg.train.steps = 1;
        let mut seen = 0;
        let trace = run_pretrain_with(&cfg, |_| seen += 1).unwrap();
        assert_eq!((trace.records.len(), seen), (1, 1));
        assert_eq!(trace.records[0].step, 1);
    }

    #[test]
    fn first_step_reaching_threshold() {
        let rec = |step, acc| StepRecord {
            step,
            loss: 0.0,
            contrastive_accuracy: acc,
            alignment_score: 0.0,
            units: 2,
        };
        let trace = RunTrace {
            mode: TrainMode::Cross,
            records: vec![rec(1, 0.2), rec(2, 0.96), rec(3, 0.5)],
            final_params: state().params(),
        };
        assert_eq!(trace.first_step_reaching(0.95), Some(2));
        assert_eq!(trace.first_step_reaching(0.99), None);
    }

    #[test]
    fn rejects_bad_configs_and_shapes() {
        let bad = [
            TrainConfig { steps: 0, ..TrainConfig::default() },
            TrainConfig { tau: 0.0, ..TrainConfig::default() },
            TrainConfig { negatives: Some(0), ..TrainConfig::default() },
            TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
            TrainConfig { scenes: 0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
        let wrong = TrainState::init(batch().image_features.dim() + 1, 0).unwrap();
        assert!(matches!(train_step(&wrong, batch(), &TrainConfig::default()), Err(Error::Shape(_))));
        assert_eq!("multi".parse::<TrainMode>().unwrap(), TrainMode::Multi);
        assert!("both".parse::<TrainMode>().is_err());
    }
}
