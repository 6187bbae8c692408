mod common;

#[allow(dead_code)]
#[path = "../examples/attention.rs"]
mod attention;
#[allow(dead_code)]
#[path = "../examples/blur_kernels.rs"]
mod blur_kernels;
#[allow(dead_code)]
#[path = "../examples/desk_pipeline.rs"]
mod desk_pipeline;
#[allow(dead_code)]
#[path = "../examples/loss_terms.rs"]
mod loss_terms;
#[allow(dead_code)]
#[path = "../examples/spectrum.rs"]
mod spectrum;
#[allow(dead_code)]
#[path = "../examples/toy_dataset.rs"]
mod toy_dataset;

use common::*;
use sharpblur::blur::{BlurMode, KernelFamily};
use sharpblur::losses::LossWeights;

#[test]
fn blur_kernels_example() {
    let (kernels, pairs) = blur_kernels::run_example(0).unwrap();
    assert_eq!(kernels.len(), KernelFamily::ALL.len() - 1);
    for k in &kernels {
        assert!((k.mass - 1.0).abs() < 1e-9, "{}", k.family.name());
        let expect = if k.family == KernelFamily::Identity { 0.0 } else { 0.5 };
        assert!((k.severity - expect).abs() < 1e-9, "{} {}", k.family.name(), k.severity);
    }
    assert_eq!(pairs[0].mode, BlurMode::Global);
    assert_eq!(pairs[1].mode, BlurMode::Ccmba);
    assert_eq!(pairs[0].length, pairs[1].length);
    assert!(pairs[1].mean_abs_change < pairs[0].mean_abs_change);
}

#[test]
fn loss_terms_example_matches_the_references() {
    let w = LossWeights::default();
    let b = loss_terms::run_example(&w).unwrap();
    let x = loss_terms::ExampleBatch::new();
    let cls = focal_ref(&x.student_logits, &x.labels, w.alpha_focal, w.gamma_focal);
    let feat = feat_ref(&x.student_features, &x.teacher_features);
    let kd = kd_ref(&x.teacher_logits, &x.student_logits, w.temperature);
    let ord = ordcon_ref(&x.embeddings, &x.blur_levels, &x.anchors, w.tau);
    for (got, want) in [(b.cls, cls), (b.feat, feat), (b.kd, kd), (b.ordcon, ord)] {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    let total = w.lambda_cls * cls + w.lambda_feat * feat + w.lambda_kd * kd + w.lambda_ordcon * ord;
    assert!((b.total - total).abs() < 1e-9);
}

#[test]
fn toy_dataset_example() {
    let dir = tempfile::tempdir().unwrap();
    let (summary, ds) = toy_dataset::run_example(dir.path()).unwrap();
    assert_eq!(ds.len(), 40);
    assert_eq!(ds.digest(), summary.dataset_digest);
    let (again, _) = toy_dataset::run_example(&dir.path().join("again")).unwrap();
    assert_eq!(again, summary);
}

#[test]
fn spectrum_example() {
    let r = spectrum::run_example(20, 15.0).unwrap();
    assert!(r.sharp > 0.3, "{}", r.sharp);
    assert!(r.shrink() > 0.5, "{}", r.shrink());
    let none = spectrum::run_example(20, 0.0).unwrap();
    assert!((none.sharp - none.blurred).abs() < 1e-9);
}

#[test]
fn attention_example() {
    let r = attention::run_example(6).unwrap();
    assert_eq!(r.curve.kernel_sizes, attention::KERNEL_SIZES);
    assert!((r.curve.similarity[0] - 1.0).abs() < 1e-6);
    assert!(r.curve.is_non_increasing(0.02));
    assert!((-1.0..=1.0).contains(&r.patch_sim_sharp));
}

#[test]
fn desk_pipeline_example() {
    let dir = tempfile::tempdir().unwrap();
    let d = desk_pipeline::run_example(dir.path()).unwrap();
    assert_eq!(d.rows.len(), 4);
    for r in d.rows.iter().filter(|r| r.condition != "clean") {
        assert!(r.accuracy_b >= r.accuracy_a, "{}: student {} < teacher {}", r.condition, r.accuracy_b, r.accuracy_a);
    }
    let t5 = d.accuracy("motion:5").unwrap().0;
    let t15 = d.accuracy("motion:15").unwrap().0;
    assert!(t15 <= t5);
    assert_eq!(d.encoder_digest.0, d.encoder_digest.1);
    assert_eq!(d.teacher_digest.0, d.teacher_digest.1);
    assert_eq!(d.reload_accuracy.0.to_bits(), d.reload_accuracy.1.to_bits());
    assert!(dir.path().join("student.json").exists());
}
