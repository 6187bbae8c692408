use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentPolicy};
use super::optim::{adamw_step, clip_global_norm, cosine_lr, AdamState};
use crate::blur::BlurPolicy;
use crate::data::{fingerprint, normalize, preprocess_with_mask, Checkpoint, CropMode, Dataset, PreprocessSize};
use crate::encoder::EncoderHandle;
use crate::error::{Error, Result};
use crate::heads::{HeadConfig, HeadGrads, HeadStack, Role};
use crate::image::Image;
use crate::losses::{argmax_rows, focal_loss, total_loss, BatchViews, LossBreakdown, LossWeights};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: Schedule,
    pub seed: u64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub preprocess: PreprocessSize,
    pub augmentation: AugmentPolicy,
    pub loss_weights: LossWeights,
}

impl PhaseConfig {
    pub fn teacher() -> Self {
        Self {
            epochs: 4,
            base_lr: 1e-4,
            weight_decay: 1e-4,
            batch_size: 32,
            schedule: Schedule::Cosine,
            seed: 0,
            grad_clip: 1.0,
            preprocess: PreprocessSize::default(),
            augmentation: AugmentPolicy::teacher(),
            loss_weights: LossWeights::default(),
        }
    }

    pub fn student() -> Self {
        Self {
            epochs: 15,
            base_lr: 5e-5,
            augmentation: AugmentPolicy::student(),
            ..Self::teacher()
        }
    }

    pub fn validate(&self, role: Role) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("base_lr", "must be finite and >= 0"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay", "must be finite and >= 0"));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::invalid("grad_clip", "must be >= 0"));
        }
        self.preprocess.validate()?;
        self.augmentation.validate(role)?;
        self.loss_weights.validate()
    }
}

/// One optimizer step as written to the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: Role,
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub grad_norm: f64,
    pub clipped: bool,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Continue from a checkpoint of the same configuration.
    pub resume: Option<Checkpoint>,
    /// Stop once this many epochs are done (for staged runs).
    pub stop_after_epochs: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
    /// Accuracy on center-cropped clean views of the training set.
    pub train_accuracy: f64,
}

/// Fingerprint of everything that determines a phase's result.
pub fn phase_fingerprint(
    role: Role,
    encoder: &EncoderHandle,
    cfg: &PhaseConfig,
    dataset_digest: &str,
    teacher_digest: Option<&str>,
) -> Result<String> {
    fingerprint(&serde_json::json!({
        "role": role,
        "encoder": encoder.id(),
        "encoder_digest": encoder.weights_digest(),
        "phase": cfg,
        "dataset": dataset_digest,
        "teacher": teacher_digest,
    }))
}

fn check_encoder_input(encoder: &EncoderHandle, size: PreprocessSize) -> Result<()> {
    if size.crop != encoder.input_size() {
        return Err(Error::invalid(
            "preprocess",
            format!("crop {} does not match encoder input {}", size.crop, encoder.input_size()),
        ));
    }
    Ok(())
}

/// Pooled encoder features for several images, as rows.
pub fn encode_pooled(encoder: &EncoderHandle, images: &[&Image]) -> Result<Array2<f64>> {
    let rows: Vec<Array1<f64>> = images
        .par_iter()
        .map(|im| Ok(encoder.encode(&normalize(im))?.pooled))
        .collect::<Result<_>>()?;
    stack_rows(&rows, encoder.embed_dim())
}

fn stack_rows(rows: &[Array1<f64>], width: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), width));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        if src.len() != width {
            return Err(Error::ShapeMismatch(format!("feature width {} vs {width}", src.len())));
        }
        dst.assign(src);
    }
    Ok(out)
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::tag("shuffle"), epoch as u64]));
    order
}

/// Clean center-crop accuracy of a head on a dataset.
pub fn clean_accuracy(head: &HeadStack, encoder: &EncoderHandle, ds: &Dataset, size: PreprocessSize) -> Result<f64> {
    let crops = ds
        .samples()
        .par_iter()
        .map(|s| preprocess_with_mask(&s.image, None, size, CropMode::EvalCenterCrop, &mut rng::stream(0, &[])).map(|p| p.0))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Image> = crops.iter().collect();
    let h = encode_pooled(encoder, &refs)?;
    let pred = argmax_rows(head.infer(h.view())?.logits.view());
    let correct = pred.iter().zip(ds.samples()).filter(|(p, s)| **p == s.label.index()).count();
    Ok(correct as f64 / ds.len() as f64)
}

struct RunState {
    head: HeadStack,
    optim: AdamState,
    start_epoch: usize,
}

fn start_state(
    role: Role,
    encoder: &EncoderHandle,
    cfg: &PhaseConfig,
    fingerprint: &str,
    resume: Option<&Checkpoint>,
) -> Result<RunState> {
    match resume {
        Some(ck) => {
            if ck.role() != role {
                return Err(Error::invalid("resume", format!("checkpoint is a {}, not a {role}", ck.role())));
            }
            if ck.config_fingerprint != fingerprint {
                return Err(Error::Fingerprint {
                    what: "resume configuration",
                    expected: ck.config_fingerprint.clone(),
                    found: fingerprint.to_string(),
                });
            }
            ck.check_encoder(encoder, false)?;
            let optim = ck
                .optimizer
                .clone()
                .ok_or_else(|| Error::invalid("resume", "checkpoint has no optimizer state"))?;
            Ok(RunState {
                head: ck.head.clone(),
                optim,
                start_epoch: ck.epochs_done,
            })
        }
        None => {
            let mut r = rng::stream(cfg.seed, &[rng::tag("init"), rng::tag(&role.to_string())]);
            let head = HeadStack::init(HeadConfig::for_role(role, encoder.embed_dim()), &mut r)?;
            let optim = AdamState::zeros_like(&head);
            Ok(RunState {
                head,
                optim,
                start_epoch: 0,
            })
        }
    }
}

fn apply_step(
    state: &mut RunState,
    mut grads: HeadGrads,
    cfg: &PhaseConfig,
    step: usize,
    total_steps: usize,
) -> Result<(f64, f64, bool)> {
    let (grad_norm, clipped) = clip_global_norm(&mut grads, cfg.grad_clip);
    if !grad_norm.is_finite() {
        return Err(Error::Numerical(format!("non-finite gradient norm at step {step}")));
    }
    if clipped {
        log::debug!("step {step}: gradient norm {grad_norm:.4} clipped to {}", cfg.grad_clip);
    }
    let lr = cosine_lr(step, total_steps, cfg.base_lr)?;
    adamw_step(&mut state.head, &grads, &mut state.optim, lr, cfg.weight_decay);
    Ok((lr, grad_norm, clipped))
}

/// Trains the teacher head on sharp augmented views with the focal loss.
pub fn train_teacher(
    ds: &Dataset,
    cfg: &PhaseConfig,
    encoder: &EncoderHandle,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    ds.require_both_classes()?;
    cfg.validate(Role::Teacher)?;
    check_encoder_input(encoder, cfg.preprocess)?;
    let fp = phase_fingerprint(Role::Teacher, encoder, cfg, &ds.digest(), None)?;
    let mut state = start_state(Role::Teacher, encoder, cfg, &fp, opts.resume.as_ref())?;

    let n = ds.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * per_epoch;
    let end_epoch = opts.stop_after_epochs.map_or(cfg.epochs, |e| e.min(cfg.epochs));
    let w = &cfg.loss_weights;
    let mut log = Vec::new();

    for epoch in state.start_epoch..end_epoch {
        let order = epoch_order(n, cfg.seed, epoch);
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let step = epoch * per_epoch + bi;
            let views = batch
                .par_iter()
                .map(|&idx| {
                    let s = &ds.samples()[idx];
                    let mut r = rng::stream(cfg.seed, &[rng::tag("teacher-view"), epoch as u64, idx as u64]);
                    let (img, mask) =
                        preprocess_with_mask(&s.image, s.mask.as_ref(), cfg.preprocess, CropMode::TrainRandomCrop, &mut r)?;
                    let v = augment(&img, mask.as_ref(), s.label, &cfg.augmentation, Role::Teacher, &mut r)?;
                    Ok(encoder.encode(&normalize(&v.image))?.pooled)
                })
                .collect::<Result<Vec<_>>>()?;
            let h = stack_rows(&views, encoder.embed_dim())?;
            let labels: Vec<usize> = batch.iter().map(|&i| ds.samples()[i].label.index()).collect();

            let mut dr = rng::stream(cfg.seed, &[rng::tag("dropout"), step as u64]);
            let (out, cache) = state.head.forward(h.view(), Some(&mut dr))?;
            let cls = focal_loss(out.logits.view(), &labels, w.alpha_focal, w.gamma_focal)?;
            let grads = state.head.backward(&cache, None, cls.grad.view());
            let (lr, grad_norm, clipped) = apply_step(&mut state, grads, cfg, step, total_steps)?;
            let loss = LossBreakdown {
                cls: cls.value,
                total: cls.value,
                ..LossBreakdown::default()
            };
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at step {step}")));
            }
            log.push(StepRecord {
                phase: Role::Teacher,
                epoch,
                step,
                lr,
                loss,
                grad_norm,
                clipped,
            });
        }
    }

    let train_accuracy = clean_accuracy(&state.head, encoder, ds, cfg.preprocess)?;
    let epochs_done = end_epoch.max(state.start_epoch);
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            encoder_id: encoder.id().to_string(),
            encoder_digest: encoder.weights_digest(),
            head: state.head,
            config_fingerprint: fp,
            seed: cfg.seed,
            epochs_done,
            steps_done: epochs_done * per_epoch,
            optimizer: Some(state.optim),
            teacher_digest: None,
            train_accuracy: Some(train_accuracy),
        },
        log,
        train_accuracy,
    })
}

/// A sharp view and its blurred partner, both from the sample `id`.
#[derive(Clone, Debug)]
pub struct StudentView {
    pub sharp_id: String,
    pub blurred_id: String,
    pub sharp: Image,
    pub blurred: Image,
    pub severity: f64,
    pub label: usize,
}

/// Builds the paired views for one student batch.
pub fn student_views(ds: &Dataset, batch: &[usize], cfg: &PhaseConfig, epoch: usize) -> Result<Vec<StudentView>> {
    batch
        .par_iter()
        .map(|&idx| {
            let s = &ds.samples()[idx];
            let mut r = rng::stream(cfg.seed, &[rng::tag("student-view"), epoch as u64, idx as u64]);
            let (img, mask) =
                preprocess_with_mask(&s.image, s.mask.as_ref(), cfg.preprocess, CropMode::TrainRandomCrop, &mut r)?;
            let v = augment(&img, mask.as_ref(), s.label, &cfg.augmentation, Role::Student, &mut r)?;
            let pair = v.pair.expect("student phase always pairs");
            debug_assert_eq!(pair.sharp, v.image);
            Ok(StudentView {
                sharp_id: s.id.clone(),
                blurred_id: s.id.clone(),
                severity: pair.degradation.severity(),
                sharp: pair.sharp,
                blurred: pair.blurred,
                label: s.label.index(),
            })
        })
        .collect()
}

/// Distills a student head from a frozen teacher on paired sharp/blurred
/// views. Only the student's parameters change.
pub fn distill_student(
    ds: &Dataset,
    teacher: &Checkpoint,
    cfg: &PhaseConfig,
    encoder: &EncoderHandle,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if teacher.role() != Role::Teacher {
        return Err(Error::invalid("teacher", "checkpoint is not a teacher"));
    }
    teacher.check_encoder(encoder, false)?;
    ds.require_both_classes()?;
    cfg.validate(Role::Student)?;
    check_encoder_input(encoder, cfg.preprocess)?;
    let teacher_digest = teacher.head.digest();
    let encoder_digest = encoder.weights_digest();
    let fp = phase_fingerprint(Role::Student, encoder, cfg, &ds.digest(), Some(&teacher_digest))?;
    let mut state = start_state(Role::Student, encoder, cfg, &fp, opts.resume.as_ref())?;

    let n = ds.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * per_epoch;
    let end_epoch = opts.stop_after_epochs.map_or(cfg.epochs, |e| e.min(cfg.epochs));
    let mut log = Vec::new();

    for epoch in state.start_epoch..end_epoch {
        let order = epoch_order(n, cfg.seed, epoch);
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let step = epoch * per_epoch + bi;
            let views = student_views(ds, batch, cfg, epoch)?;
            let b = views.len();
            let sharp: Vec<&Image> = views.iter().map(|v| &v.sharp).collect();
            let blurred: Vec<&Image> = views.iter().map(|v| &v.blurred).collect();
            let h_sharp = encode_pooled(encoder, &sharp)?;
            let h_blur = encode_pooled(encoder, &blurred)?;
            let labels: Vec<usize> = views.iter().map(|v| v.label).collect();

            let t_out = teacher.head.infer(h_sharp.view())?;
            let mut dr_blur = rng::stream(cfg.seed, &[rng::tag("dropout-blur"), step as u64]);
            let mut dr_sharp = rng::stream(cfg.seed, &[rng::tag("dropout-sharp"), step as u64]);
            let (s_blur, cache_blur) = state.head.forward(h_blur.view(), Some(&mut dr_blur))?;
            let (s_sharp, cache_sharp) = state.head.forward(h_sharp.view(), Some(&mut dr_sharp))?;

            let k = s_blur.z.ncols();
            let mut embeddings = Array2::zeros((2 * b, k));
            embeddings.slice_mut(s![..b, ..]).assign(&s_sharp.z);
            embeddings.slice_mut(s![b.., ..]).assign(&s_blur.z);
            let levels: Vec<f64> = std::iter::repeat_n(0.0, b).chain(views.iter().map(|v| v.severity)).collect();
            let anchors: Vec<usize> = (0..b).collect();

            let batch_views = BatchViews {
                teacher_logits: t_out.logits.view(),
                student_logits: s_blur.logits.view(),
                teacher_features: t_out.z.view(),
                student_features: s_blur.z.view(),
                embeddings: embeddings.view(),
                blur_levels: &levels,
                anchors: &anchors,
                labels: &labels,
            };
            let (loss, g) = total_loss(&batch_views, &cfg.loss_weights)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at step {step}")));
            }

            let gz_blur = &g.student_features + &g.embeddings.slice(s![b.., ..]);
            let mut grads = state.head.backward(&cache_blur, Some(gz_blur.view()), g.student_logits.view());
            let zero_logits = Array2::zeros(s_sharp.logits.dim());
            let g_sharp = state
                .head
                .backward(&cache_sharp, Some(g.embeddings.slice(s![..b, ..])), zero_logits.view());
            for (a, c) in grads.layers.iter_mut().zip(g_sharp.layers) {
                a.weight += &c.weight;
                a.bias += &c.bias;
            }
            let (lr, grad_norm, clipped) = apply_step(&mut state, grads, cfg, step, total_steps)?;
            log.push(StepRecord {
                phase: Role::Student,
                epoch,
                step,
                lr,
                loss,
                grad_norm,
                clipped,
            });
        }
    }

    if teacher.head.digest() != teacher_digest || encoder.weights_digest() != encoder_digest {
        return Err(Error::Numerical("frozen weights changed during distillation".into()));
    }
    let train_accuracy = clean_accuracy(&state.head, encoder, ds, cfg.preprocess)?;
    let epochs_done = end_epoch.max(state.start_epoch);
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            encoder_id: encoder.id().to_string(),
            encoder_digest,
            head: state.head,
            config_fingerprint: fp,
            seed: cfg.seed,
            epochs_done,
            steps_done: epochs_done * per_epoch,
            optimizer: Some(state.optim),
            teacher_digest: Some(teacher_digest),
            train_accuracy: Some(train_accuracy),
        },
        log,
        train_accuracy,
    })
}

/// Mean of the last `window` values of a series, for smoothed curves.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let sl = &values[lo..=i];
            sl.iter().sum::<f64>() / sl.len() as f64
        })
        .collect()
}

/// Blur policy that leaves views effectively sharp.
pub fn identity_blur_policy() -> BlurPolicy {
    BlurPolicy::motion_only(1e-9)
}
