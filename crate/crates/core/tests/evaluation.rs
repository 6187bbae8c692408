mod common;

use common::*;
use ndarray::Array1;
use sharpblur::blur::KernelFamily;
use sharpblur::data::{toy_dataset, Checkpoint, ToyConfig};
use sharpblur::evaluation::*;
use sharpblur::heads::{HeadConfig, HeadStack, Role};
use sharpblur::training::{train_teacher, TrainOptions};
use sharpblur::Label;

fn constant_checkpoint(t: &Tiny, class: usize) -> Checkpoint {
    let mut r = sharpblur::rng::stream(0, &[]);
    let mut head = HeadStack::init(HeadConfig::for_role(Role::Teacher, t.encoder.embed_dim()), &mut r).unwrap();
    let last = head.layers_mut().last_mut().unwrap();
    last.weight.fill(0.0);
    let mut bias = Array1::zeros(2);
    bias[class] = 1.0;
    last.bias = bias;
    Checkpoint {
        encoder_id: t.encoder.id().to_string(),
        encoder_digest: t.encoder.weights_digest(),
        head,
        config_fingerprint: "constant".into(),
        seed: 0,
        epochs_done: 0,
        steps_done: 0,
        optimizer: None,
        teacher_digest: None,
        train_accuracy: None,
    }
}

fn settings(t: &Tiny) -> EvalSettings {
    EvalSettings { seed: 3, preprocess: t.size }
}

#[test]
fn constant_classifier_scores_one_half() {
    let t = tiny(10, 1);
    for class in [0, 1] {
        let r = evaluate(&constant_checkpoint(&t, class), &t.encoder, &t.train, Condition::Clean, &settings(&t)).unwrap();
        assert_eq!(r.overall_accuracy, 0.5);
        assert_eq!(r.total(), t.train.len());
        assert_eq!(r.per_class[&Label::from_index(class).unwrap()], 1.0);
        assert_eq!(r.per_class[&Label::from_index(1 - class).unwrap()], 0.0);
    }
}

#[test]
fn trained_teacher_properties() {
    let t = tiny(40, 2);
    let teacher = train_teacher(&t.train, &phase(Role::Teacher, t.size, 4), &t.encoder, &TrainOptions::default()).unwrap();
    let ck = teacher.checkpoint.clone();
    let held_out = toy_dataset(&ToyConfig { n_per_class: 40, size: 40, seed: 99 }).unwrap();
    let s = settings(&t);

    let clean = evaluate(&ck, &t.encoder, &held_out, Condition::Clean, &s).unwrap();
    assert!((clean.overall_accuracy - teacher.train_accuracy).abs() <= 0.02, "{} vs {}", clean.overall_accuracy, teacher.train_accuracy);
    let again = evaluate(&ck, &t.encoder, &held_out, Condition::Clean, &s).unwrap();
    assert_eq!(clean, again);
    assert_eq!(ck, teacher.checkpoint);

    let flipped = evaluate(&ck, &t.encoder, &held_out.with_flipped_labels(), Condition::Clean, &s).unwrap();
    assert!((flipped.overall_accuracy - (1.0 - clean.overall_accuracy)).abs() < 1e-12);

    let grid = vec![
        SweepRow { family: KernelFamily::Identity, params: vec![0.0] },
        SweepRow { family: KernelFamily::MotionPsf, params: vec![1.0, 21.0] },
        SweepRow { family: KernelFamily::Gaussian, params: vec![0.5, 5.0] },
    ];
    let sweep = blur_sweep(&ck, &t.encoder, &held_out, &grid, &s).unwrap();
    assert_eq!(sweep.len(), 5);
    assert_eq!(sweep[0].overall_accuracy, clean.overall_accuracy);
    assert_eq!(sweep[0].per_class, clean.per_class);
    assert!(sweep[2].overall_accuracy <= sweep[1].overall_accuracy);
    assert!(sweep[4].overall_accuracy <= sweep[3].overall_accuracy);
    for r in &sweep {
        let weighted: f64 = r.per_condition.values().map(|c| c.accuracy * c.n as f64).sum::<f64>() / r.total() as f64;
        assert!((weighted - r.overall_accuracy).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&r.overall_accuracy));
    }
    let repeat = blur_sweep(&ck, &t.encoder, &held_out, &grid, &s).unwrap();
    assert_eq!(sweep, repeat);

    let csv = sweep_csv(&grid, &sweep).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "family,0,0.5,1,5,21");
    assert!(lines[1].starts_with("identity,"));
    assert_eq!(lines[2].split(',').filter(|c| c.is_empty()).count(), 3);
}

#[test]
fn comparison_is_antisymmetric_and_checks_grids() {
    let t = tiny(10, 3);
    let conds = [Condition::Clean, Condition::blur(KernelFamily::MotionPsf, 9.0)];
    let a = evaluate_conditions(&constant_checkpoint(&t, 0), &t.encoder, &t.train, &conds, &settings(&t)).unwrap();
    let teacher = train_teacher(&t.train, &phase(Role::Teacher, t.size, 2), &t.encoder, &TrainOptions::default()).unwrap();
    let b = evaluate_conditions(&teacher.checkpoint, &t.encoder, &t.train, &conds, &settings(&t)).unwrap();

    assert!(compare_reports(&a, &a).unwrap().iter().all(|r| r.delta == 0.0));
    let ab = compare_reports(&a, &b).unwrap();
    let ba = compare_reports(&b, &a).unwrap();
    for (x, y) in ab.iter().zip(&ba) {
        assert_eq!(x.condition, y.condition);
        assert_eq!(x.delta, -y.delta);
    }
    for (ra, rb) in a.iter().zip(&b) {
        let key = ra.per_condition.keys().next().unwrap();
        let hand = rb.overall_accuracy - ra.overall_accuracy;
        let r = ab.iter().find(|r| &r.condition == key).unwrap();
        assert_eq!(r.delta, hand);
        assert_eq!(r.n_a, t.train.len());
    }
    assert!(compare_reports(&a[..1], &b).is_err());
}

#[test]
fn conditions_parse_and_validate() {
    assert_eq!("clean".parse::<Condition>().unwrap(), Condition::Clean);
    assert!("motion:-1".parse::<Condition>().and_then(|c| c.validate()).is_err());
    assert!("sharpen:2".parse::<Condition>().is_err());
    assert_eq!(severity_bucket(0.0), "[0,1/3)");
    assert_eq!(severity_bucket(0.5), "[1/3,2/3)");
    assert_eq!(severity_bucket(1.0), "[2/3,1]");
}

#[test]
fn empty_dataset_is_rejected() {
    let t = tiny(10, 4);
    let empty = sharpblur::data::Dataset::new(vec![]).unwrap();
    assert!(evaluate(&constant_checkpoint(&t, 0), &t.encoder, &empty, Condition::Clean, &settings(&t)).is_err());
}
