mod common;

use common::*;
use ndarray::{array, Array2};
use proptest::prelude::*;
use sharpblur::losses::*;

#[test]
fn losses_match_brute_force_references() {
    let worst = loss_oracle_errors(50, 11);
    for (name, e) in ["focal", "feat", "kd", "ordcon"].iter().zip(worst) {
        assert!(e < 1e-6, "{name}: {e}");
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let worst = gradient_errors(20, 12, 1e-4);
    for (name, e) in ["focal", "feat", "kd", "ordcon", "total"].iter().zip(worst) {
        assert!(e < 1e-3, "{name}: {e}");
    }
}

#[test]
fn focal_hand_values() {
    let v = focal_loss(array![[0.0, 0.0]].view(), &[1], [1.0, 1.0], 2.0).unwrap().value;
    assert!((v - 0.25 * 2f64.ln()).abs() < 1e-9);
    assert!((v - 0.173287).abs() < 1e-6);
    let v = focal_loss(array![[-50.0, 50.0]].view(), &[1], [1.0, 1.0], 2.0).unwrap().value;
    assert!(v.abs() < 1e-12);
}

#[test]
fn focal_reduces_to_cross_entropy() {
    let mut rng = sharpblur::rng::stream(3, &[]);
    for _ in 0..20 {
        let b = RandomBatch::draw(&mut rng);
        let ce = cross_entropy_ref(&b.student_logits, &b.labels);
        let f0 = focal_loss(b.student_logits.view(), &b.labels, [1.0, 1.0], 0.0).unwrap().value;
        assert!((f0 - ce).abs() < 1e-7);
        let small = focal_loss(b.student_logits.view(), &b.labels, [1.0, 1.0], 1e-9).unwrap().value;
        assert!((small - ce).abs() < 1e-6);
    }
}

#[test]
fn focal_rejects_invalid_labels() {
    assert!(focal_loss(array![[0.0, 1.0]].view(), &[2], [1.0, 1.0], 2.0).is_err());
}

#[test]
fn feature_alignment_extremes_and_scale_invariance() {
    let f = array![[1.0, 2.0, -1.0], [0.5, -0.5, 3.0]];
    assert!(feature_alignment_loss(f.view(), f.view()).unwrap().value.abs() < 1e-12);
    let neg = f.mapv(|v| -v);
    assert!((feature_alignment_loss(neg.view(), f.view()).unwrap().value - 2.0).abs() < 1e-12);
    let g = array![[0.3, -1.0, 2.0], [1.0, 1.0, 0.0]];
    let base = feature_alignment_loss(f.view(), g.view()).unwrap().value;
    let mut scaled = f.clone();
    scaled.row_mut(0).mapv_inplace(|v| v * 7.5);
    scaled.row_mut(1).mapv_inplace(|v| v * 0.01);
    let s = feature_alignment_loss(scaled.view(), (&g * 3.0).view()).unwrap().value;
    assert!((s - base).abs() < 1e-7);
    let zero = Array2::zeros((2, 3));
    assert!(feature_alignment_loss(zero.view(), g.view()).is_err());
}

#[test]
fn kd_properties() {
    let u = array![[1.0, -2.0], [0.3, 0.4]];
    assert!(kd_loss(u.view(), u.view(), 2.0).unwrap().value.abs() < 1e-12);
    let s = array![[0.0, 1.0], [2.0, -1.0]];
    let base = kd_loss(u.view(), s.view(), 2.0).unwrap().value;
    let shifted_u = array![[6.0, 3.0], [-0.7, -0.6]];
    let shifted_s = array![[-4.0, -3.0], [12.0, 9.0]];
    let v = kd_loss(shifted_u.view(), shifted_s.view(), 2.0).unwrap().value;
    assert!((v - base).abs() < 1e-9);
    assert!(kd_loss(u.view(), s.view(), 0.0).is_err());

    let p = 1.0 / (1.0 + (-2.0f64).exp());
    let closed = (2.0 * p - 1.0) * (p / (1.0 - p)).ln();
    let v = kd_loss(array![[2.0, 0.0]].view(), array![[0.0, 2.0]].view(), 1.0).unwrap().value;
    assert!((v - closed).abs() < 1e-9);
    assert!((v - 1.523188).abs() < 1e-6);
}

#[test]
fn kd_gradient_reaches_the_student_only() {
    let mut rng = sharpblur::rng::stream(4, &[]);
    let b = RandomBatch::draw(&mut rng);
    let w = LossWeights::only(0.0, 0.0, 1.0, 0.0);
    let (base, g) = total_loss(&b.views(), &w).unwrap();
    assert!(g.teacher_logits.iter().all(|&v| v == 0.0));
    assert!(g.teacher_features.iter().all(|&v| v == 0.0));
    let moved = &b.teacher_logits + 0.5 * &gauss_matrix(b.teacher_logits.nrows(), 2, 1.0, &mut rng);
    let v = BatchViews {
        teacher_logits: moved.view(),
        ..b.views()
    };
    let (after, g2) = total_loss(&v, &w).unwrap();
    assert_ne!(after.kd, base.kd);
    assert!(g2.teacher_logits.iter().all(|&v| v == 0.0));
}

#[test]
fn ordcon_two_views_is_zero() {
    let e = array![[1.0, 0.0], [0.3, 0.7]];
    let v = ordinal_contrastive_loss(e.view(), &[0.0, 0.6], &[0], 0.1).unwrap().value;
    assert!(v.abs() < 1e-12);
}

#[test]
fn ordcon_equal_levels_is_info_nce() {
    let mut rng = sharpblur::rng::stream(5, &[]);
    for _ in 0..20 {
        let b = RandomBatch::draw(&mut rng);
        let levels = vec![0.4; b.embeddings.nrows()];
        let v = ordinal_contrastive_loss(b.embeddings.view(), &levels, &b.anchors, 0.2).unwrap().value;
        let r = info_nce_ref(&b.embeddings, &b.anchors, 0.2);
        assert!((v - r).abs() < 1e-6, "{v} vs {r}");
    }
}

#[test]
fn ordcon_prefers_closer_mild_views() {
    let anchor = [1.0, 0.0, 0.0];
    let near = [0.9, 0.436, 0.0];
    let far = [0.3, 0.954, 0.0];
    let other = [0.0, 0.0, 1.0];
    let levels = [0.0, 0.2, 0.8, 0.5];
    let good = array![anchor, near, far, other];
    let bad = array![anchor, far, near, other];
    let lg = ordinal_contrastive_loss(good.view(), &levels, &[0], 0.1).unwrap().value;
    let lb = ordinal_contrastive_loss(bad.view(), &levels, &[0], 0.1).unwrap().value;
    assert!(lg < lb, "{lg} !< {lb}");
}

#[test]
fn ordcon_rejects_degenerate_input() {
    let e = array![[1.0, 0.0]];
    assert!(ordinal_contrastive_loss(e.view(), &[0.0], &[0], 0.1).is_err());
    let e = array![[1.0, 0.0], [0.0, 1.0]];
    assert!(ordinal_contrastive_loss(e.view(), &[0.0, 0.1], &[0], 0.0).is_err());
}

#[test]
fn total_loss_recomposes_components() {
    let mut rng = sharpblur::rng::stream(6, &[]);
    let b = RandomBatch::draw(&mut rng);
    let w = LossWeights::default();
    let (bd, _) = total_loss(&b.views(), &w).unwrap();
    let cls = focal_ref(&b.student_logits, &b.labels, w.alpha_focal, w.gamma_focal);
    let feat = feat_ref(&b.student_features, &b.teacher_features);
    let kd = kd_ref(&b.teacher_logits, &b.student_logits, w.temperature);
    let ord = ordcon_ref(&b.embeddings, &b.blur_levels, &b.anchors, w.tau);
    let hand = 1.0 * cls + 0.5 * feat + 1.0 * kd + 0.5 * ord;
    assert!((bd.total - hand).abs() < 1e-7);

    let (zero, g) = total_loss(&b.views(), &LossWeights::only(0.0, 0.0, 0.0, 0.0)).unwrap();
    assert_eq!(zero.total, 0.0);
    assert!(g.embeddings.iter().all(|&v| v == 0.0));
    for (i, w1) in [
        LossWeights::only(1.0, 0.0, 0.0, 0.0),
        LossWeights::only(0.0, 1.0, 0.0, 0.0),
        LossWeights::only(0.0, 0.0, 1.0, 0.0),
        LossWeights::only(0.0, 0.0, 0.0, 1.0),
    ]
    .iter()
    .enumerate()
    {
        let (one, _) = total_loss(&b.views(), w1).unwrap();
        let comp = [one.cls, one.feat, one.kd, one.ordcon][i];
        assert_eq!(one.total, comp);
    }
}

fn batch_strategy() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_non_negative(seed in batch_strategy()) {
        let mut rng = sharpblur::rng::stream(seed, &[]);
        let b = RandomBatch::draw(&mut rng);
        let (bd, _) = total_loss(&b.views(), &LossWeights::default()).unwrap();
        prop_assert!(bd.cls >= 0.0);
        prop_assert!(bd.kd >= -1e-12);
        prop_assert!(bd.ordcon >= 0.0);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&bd.feat));
        prop_assert!(bd.is_finite());
    }

    #[test]
    fn kd_is_shift_invariant(seed in batch_strategy(), c in -5.0f64..5.0, d in -5.0f64..5.0) {
        let mut rng = sharpblur::rng::stream(seed, &[]);
        let b = RandomBatch::draw(&mut rng);
        let base = kd_loss(b.teacher_logits.view(), b.student_logits.view(), 2.0).unwrap().value;
        let v = kd_loss((&b.teacher_logits + c).view(), (&b.student_logits + d).view(), 2.0).unwrap().value;
        prop_assert!((v - base).abs() < 1e-9);
    }
}
