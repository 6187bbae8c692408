//! Teacher then student on the toy set, compared on a motion-blur sweep.
//! Checkpoints are written to disk and reloaded before a final evaluation.
//!
//! ```text
//! cargo run --release --example desk_pipeline
//! ```

use std::path::Path;

use sharpblur::blur::KernelFamily;
use sharpblur::data::{load_checkpoint, save_checkpoint, toy_dataset, PreprocessSize, ToyConfig};
use sharpblur::encoder::{EncoderHandle, ToyVitConfig};
use sharpblur::evaluation::{compare_reports, evaluate, evaluate_conditions, Condition, DeltaRow, EvalSettings};
use sharpblur::training::{distill_student, train_teacher, PhaseConfig, TrainOptions};

pub struct DeskOutcome {
    /// Teacher (`a`) against student (`b`) per condition.
    pub rows: Vec<DeltaRow>,
    pub encoder_digest: (String, String),
    pub teacher_digest: (String, String),
    /// Student accuracy at L = 15 from the in-memory and the reloaded checkpoint.
    pub reload_accuracy: (f64, f64),
}

impl DeskOutcome {
    /// `(teacher, student)` accuracy for a condition label.
    pub fn accuracy(&self, condition: &str) -> Option<(f64, f64)> {
        self.rows.iter().find(|r| r.condition == condition).map(|r| (r.accuracy_a, r.accuracy_b))
    }
}

pub fn run_example(work_dir: &Path) -> sharpblur::Result<DeskOutcome> {
    let train = toy_dataset(&ToyConfig { n_per_class: 200, size: 72, seed: 1 })?;
    let test = toy_dataset(&ToyConfig { n_per_class: 100, size: 72, seed: 2 })?;
    let encoder = EncoderHandle::from_id(
        &ToyVitConfig { image_size: 64, patch_size: 8, embed_dim: 64, heads: 4, seed: 0 }.id(),
    )?;
    let size = PreprocessSize { resize: 72, crop: 64 };

    let mut tcfg = PhaseConfig::teacher();
    tcfg.preprocess = size;
    tcfg.epochs = 8;
    tcfg.base_lr = 1e-3;
    let teacher = train_teacher(&train, &tcfg, &encoder, &TrainOptions::default())?;

    let before = (encoder.weights_digest(), teacher.checkpoint.head.digest());
    let mut scfg = PhaseConfig::student();
    scfg.preprocess = size;
    scfg.epochs = 12;
    scfg.base_lr = 1e-3;
    let student = distill_student(&train, &teacher.checkpoint, &scfg, &encoder, &TrainOptions::default())?;
    let after = (encoder.weights_digest(), teacher.checkpoint.head.digest());

    std::fs::create_dir_all(work_dir).map_err(|e| sharpblur::Error::io(work_dir, e))?;
    let t_path = work_dir.join("teacher.json");
    let s_path = work_dir.join("student.json");
    save_checkpoint(&teacher.checkpoint, &t_path)?;
    save_checkpoint(&student.checkpoint, &s_path)?;
    let t_ck = load_checkpoint(&t_path)?;
    let s_ck = load_checkpoint(&s_path)?;

    let settings = EvalSettings { seed: 7, preprocess: size };
    let mut conds = vec![Condition::Clean];
    conds.extend([5.0, 10.0, 15.0].map(|l| Condition::blur(KernelFamily::MotionPsf, l)));
    let t = evaluate_conditions(&t_ck, &encoder, &test, &conds, &settings)?;
    let s = evaluate_conditions(&s_ck, &encoder, &test, &conds, &settings)?;

    let l15 = Condition::blur(KernelFamily::MotionPsf, 15.0);
    let in_memory = evaluate(&student.checkpoint, &encoder, &test, l15, &settings)?.overall_accuracy;
    let reloaded = evaluate(&s_ck, &encoder, &test, l15, &settings)?.overall_accuracy;

    Ok(DeskOutcome {
        rows: compare_reports(&t, &s)?,
        encoder_digest: (before.0, after.0),
        teacher_digest: (before.1, after.1),
        reload_accuracy: (in_memory, reloaded),
    })
}

fn main() -> sharpblur::Result<()> {
    let dir = std::env::temp_dir().join("sharpblur-desk");
    let out = run_example(&dir)?;
    for r in &out.rows {
        println!("{:>10}  teacher {:.3}  student {:.3}  ({:+.3})", r.condition, r.accuracy_a, r.accuracy_b, r.delta);
    }
    println!("encoder frozen: {}", out.encoder_digest.0 == out.encoder_digest.1);
    println!("teacher frozen: {}", out.teacher_digest.0 == out.teacher_digest.1);
    println!("reload accuracy {:.4} vs {:.4}", out.reload_accuracy.0, out.reload_accuracy.1);
    Ok(())
}
