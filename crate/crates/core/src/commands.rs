//! Command-line front end. Every subcommand writes deterministic files:
//! a fixed seed and fixed inputs give byte-identical outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, plot, RadialSpectrum, HIGH_BAND};
use crate::blur::{synthesize_pair, BlurMode, BlurPolicy, DegradationRecord};
use crate::data::{
    self, fingerprint, load_checkpoint, load_manifest, save_checkpoint, write_manifest, BlurScenario, Checkpoint, Dataset,
    ManifestEntry, PreprocessSize, RunConfig, ToyConfig,
};
use crate::encoder::EncoderHandle;
use crate::error::{Error, Result};
use crate::evaluation::{blur_sweep, compare_reports, evaluate, sweep_csv, Condition, EvalReport, EvalSettings};
use crate::image::Image;
use crate::label::Label;
use crate::losses::LossWeights;
use crate::rng;
use crate::training::{distill_student, train_teacher, StepRecord, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "sharpblur", version, about = "Blur-robust AI-generated image detection by sharp-to-blur distillation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic real/fake texture dataset.
    GenToy(GenToyArgs),
    /// Write blurred partners for every image of a manifest.
    SynthPairs(SynthPairsArgs),
    /// Train the teacher head on sharp views.
    TrainTeacher(TrainArgs),
    /// Distill the student head from a frozen teacher.
    Distill(DistillArgs),
    /// Accuracy of a checkpoint under one condition.
    Evaluate(EvaluateArgs),
    /// Accuracy over the configured blur grid.
    BlurSweep(SweepArgs),
    /// Spectrum, attention and patch-similarity diagnostics.
    Analyze(AnalyzeArgs),
    /// Per-condition accuracy differences between two reports.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthPairsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// TOML file holding a blur policy table.
    #[arg(long, conflicts_with = "config")]
    pub policy: Option<PathBuf>,
    /// Blur policy is read from the student phase of this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub blur: BlurOverrides,
}

#[derive(Debug, Args)]
pub struct BlurOverrides {
    #[arg(long)]
    pub mode: Option<BlurMode>,
    #[arg(long)]
    pub l_max: Option<f64>,
    #[arg(long)]
    pub p_d: Option<f64>,
    #[arg(long)]
    pub p_jpeg: Option<f64>,
    #[arg(long)]
    pub p_noise: Option<f64>,
    #[arg(long)]
    pub p_resample: Option<f64>,
}

impl BlurOverrides {
    fn apply(&self, policy: &mut BlurPolicy) {
        if let Some(m) = self.mode {
            policy.mode = m;
        }
        let fields = [
            (self.l_max, &mut policy.l_max),
            (self.p_d, &mut policy.p_d),
            (self.p_jpeg, &mut policy.p_jpeg),
            (self.p_noise, &mut policy.p_noise),
            (self.p_resample, &mut policy.p_resample),
        ];
        for (value, slot) in fields {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct LossOverrides {
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub lambda_cls: Option<f64>,
    #[arg(long)]
    pub lambda_feat: Option<f64>,
    #[arg(long)]
    pub lambda_kd: Option<f64>,
    #[arg(long)]
    pub lambda_ordcon: Option<f64>,
}

impl LossOverrides {
    fn apply(&self, w: &mut LossWeights) {
        let fields = [
            (self.temperature, &mut w.temperature),
            (self.tau, &mut w.tau),
            (self.lambda_cls, &mut w.lambda_cls),
            (self.lambda_feat, &mut w.lambda_feat),
            (self.lambda_kd, &mut w.lambda_kd),
            (self.lambda_ordcon, &mut w.lambda_ordcon),
        ];
        for (value, slot) in fields {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct PhaseOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Continue from a checkpoint written by an earlier run of this config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: PhaseOverrides,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub allow_mismatch: bool,
    #[command(flatten)]
    pub overrides: PhaseOverrides,
    #[command(flatten)]
    pub blur: BlurOverrides,
    #[command(flatten)]
    pub loss: LossOverrides,
}

#[derive(Debug, Args)]
pub struct EvalInputs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Preprocessing and sweep grid come from the `eval` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluate even if the checkpoint was trained on other encoder weights.
    #[arg(long)]
    pub allow_mismatch: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub inputs: EvalInputs,
    /// `clean`, `identity` or `family:param`, e.g. `motion:15`.
    #[arg(long, default_value = "clean")]
    pub condition: Condition,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub inputs: EvalInputs,
    /// Directory for `sweep.csv` and `sweep.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub kind: AnalyzeKind,
}

#[derive(Debug, Args)]
pub struct AnalyzeInputs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Supplies the encoder; `--encoder` names one directly.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeKind {
    /// Mean radial spectra of real and fake images, sharp and blurred.
    Spectrum {
        #[command(flatten)]
        inputs: AnalyzeInputs,
        #[arg(long, default_value_t = analysis::DEFAULT_BINS)]
        bins: usize,
        /// Straight-line motion length for the blurred comparison.
        #[arg(long, default_value_t = 15.0)]
        blur_length: f64,
    },
    /// Clean-vs-blurred attention similarity per kernel size.
    Attention {
        #[command(flatten)]
        inputs: AnalyzeInputs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 5, 9, 13, 17])]
        kernel_sizes: Vec<usize>,
        /// Use at most this many images.
        #[arg(long, default_value_t = 32)]
        limit: usize,
    },
    /// Patch-token similarity matrices of one image, sharp and blurred.
    Patchsim {
        #[command(flatten)]
        inputs: AnalyzeInputs,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 15.0)]
        blur_length: f64,
    },
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Report or list of reports (`evaluate` or `blur-sweep` output).
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenToy(a) => gen_toy(&a),
        Command::SynthPairs(a) => synth_pairs(&a),
        Command::TrainTeacher(a) => train_teacher_cmd(&a),
        Command::Distill(a) => distill_cmd(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::BlurSweep(a) => sweep_cmd(&a),
        Command::Analyze(a) => analyze_cmd(&a.kind),
        Command::Compare(a) => compare_cmd(&a),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    data::write_atomic(path, text.as_bytes())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    data::write_atomic(path, text.as_bytes())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn load_dataset(manifest: &Path) -> Result<Dataset> {
    Dataset::load(&load_manifest(manifest)?)
}

fn gen_toy(a: &GenToyArgs) -> Result<()> {
    let base = load_config(a.config.as_deref())?.toy;
    let cfg = ToyConfig {
        n_per_class: a.n_per_class.unwrap_or(base.n_per_class),
        size: a.size.unwrap_or(base.size),
        seed: a.seed,
    };
    let summary = data::generate_toy_dataset(&cfg, &a.out)?;
    log::info!(
        "wrote {} images to {} (spectrum gap {:.3})",
        2 * cfg.n_per_class,
        a.out.display(),
        summary.spectrum_gap
    );
    Ok(())
}

/// One line of `degradations.jsonl`.
#[derive(Serialize, Deserialize)]
struct DegradationLine {
    id: String,
    source_id: String,
    degradation: DegradationRecord,
}

fn synth_pairs(a: &SynthPairsArgs) -> Result<()> {
    let mut policy = match &a.policy {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => {
            let aug = load_config(a.config.as_deref())?.student.augmentation;
            BlurPolicy {
                mode: aug.blur_mode.unwrap_or(aug.blur_policy.mode),
                ..aug.blur_policy
            }
        }
    };
    a.blur.apply(&mut policy);
    policy.validate()?;
    let ds = load_dataset(&a.manifest)?;
    let img_dir = a.out.join("blurred");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;

    let out: Vec<(ManifestEntry, DegradationLine)> = ds
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng::stream(a.seed, &[rng::tag("synth-pairs"), i as u64]);
            let pair = synthesize_pair(&s.image, s.label, &policy, s.mask.as_ref(), &mut r)?;
            let id = format!("{}-blur", s.id);
            let rel = PathBuf::from("blurred").join(format!("{id}.png"));
            pair.blurred.save_png(a.out.join(&rel))?;
            let mut entry = ManifestEntry::new(id.clone(), rel, s.label, format!("synth:{}", s.id));
            entry.blur_scenario = Some(BlurScenario::CameraShake);
            entry.severity_b = Some(pair.degradation.severity());
            let line = DegradationLine {
                id,
                source_id: s.id.clone(),
                degradation: pair.degradation,
            };
            Ok((entry, line))
        })
        .collect::<Result<_>>()?;

    let (entries, lines): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    write_manifest(a.out.join("manifest.jsonl"), &entries)?;
    let mut text = String::new();
    for l in &lines {
        text.push_str(&serde_json::to_string(l)?);
        text.push('\n');
    }
    write_text(&a.out.join("degradations.jsonl"), &text)?;
    log::info!("wrote {} blurred views to {}", entries.len(), a.out.display());
    Ok(())
}

fn apply_overrides(cfg: &mut crate::training::PhaseConfig, seed: u64, o: &PhaseOverrides) {
    cfg.seed = seed;
    if let Some(e) = o.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = o.lr {
        cfg.base_lr = lr;
    }
    if let Some(b) = o.batch_size {
        cfg.batch_size = b;
    }
}

fn write_log(path: &Path, log: &[StepRecord]) -> Result<()> {
    let mut text = String::new();
    for r in log {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_text(path, &text)
}

fn resume_options(path: Option<&Path>) -> Result<TrainOptions> {
    Ok(TrainOptions {
        resume: path.map(load_checkpoint).transpose()?,
        stop_after_epochs: None,
    })
}

/// Resolved configuration written next to each training output.
#[derive(Serialize)]
struct RunRecord<'a> {
    config_fingerprint: String,
    checkpoint_fingerprint: &'a str,
    config: &'a RunConfig,
    train_accuracy: f64,
}

fn train_teacher_cmd(a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    apply_overrides(&mut cfg.teacher, a.seed, &a.overrides);
    cfg.validate()?;
    let encoder = EncoderHandle::from_id(&cfg.encoder.id())?;
    let ds = load_dataset(&a.manifest)?;
    let out = train_teacher(&ds, &cfg.teacher, &encoder, &resume_options(a.resume.as_deref())?)?;
    save_checkpoint(&out.checkpoint, a.out.join("teacher.json"))?;
    write_log(&a.out.join("teacher_log.jsonl"), &out.log)?;
    write_json(
        &a.out.join("teacher_run.json"),
        &RunRecord {
            config_fingerprint: cfg.fingerprint()?,
            checkpoint_fingerprint: &out.checkpoint.config_fingerprint,
            config: &cfg,
            train_accuracy: out.train_accuracy,
        },
    )?;
    log::info!("teacher training accuracy {:.4}", out.train_accuracy);
    Ok(())
}

fn distill_cmd(a: &DistillArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    apply_overrides(&mut cfg.student, a.seed, &a.overrides);
    a.blur.apply(&mut cfg.student.augmentation.blur_policy);
    if let Some(m) = a.blur.mode {
        cfg.student.augmentation.blur_mode = Some(m);
    }
    a.loss.apply(&mut cfg.student.loss_weights);
    cfg.validate()?;
    let mut teacher = load_checkpoint(&a.teacher)?;
    let encoder = EncoderHandle::from_id(&teacher.encoder_id)?;
    if encoder.id() != cfg.encoder.id() {
        return Err(Error::Fingerprint {
            what: "encoder id",
            expected: teacher.encoder_id.clone(),
            found: cfg.encoder.id(),
        });
    }
    teacher.check_encoder(&encoder, a.allow_mismatch)?;
    teacher.encoder_digest = encoder.weights_digest();
    let ds = load_dataset(&a.manifest)?;
    let out = distill_student(&ds, &teacher, &cfg.student, &encoder, &resume_options(a.resume.as_deref())?)?;
    save_checkpoint(&out.checkpoint, a.out.join("student.json"))?;
    write_log(&a.out.join("student_log.jsonl"), &out.log)?;
    write_json(
        &a.out.join("student_run.json"),
        &RunRecord {
            config_fingerprint: cfg.fingerprint()?,
            checkpoint_fingerprint: &out.checkpoint.config_fingerprint,
            config: &cfg,
            train_accuracy: out.train_accuracy,
        },
    )?;
    log::info!("student training accuracy {:.4}", out.train_accuracy);
    Ok(())
}

struct EvalContext {
    ckpt: Checkpoint,
    encoder: EncoderHandle,
    ds: Dataset,
    settings: EvalSettings,
    cfg: RunConfig,
}

/// Without a config file the images are resized straight to the encoder
/// input.
fn eval_context(i: &EvalInputs) -> Result<EvalContext> {
    let mut ckpt = load_checkpoint(&i.ckpt)?;
    let encoder = EncoderHandle::from_id(&ckpt.encoder_id)?;
    ckpt.check_encoder(&encoder, i.allow_mismatch)?;
    ckpt.encoder_digest = encoder.weights_digest();
    let cfg = load_config(i.config.as_deref())?;
    let preprocess = match &i.config {
        Some(_) => cfg.eval.settings.preprocess,
        None => PreprocessSize {
            resize: encoder.input_size(),
            crop: encoder.input_size(),
        },
    };
    let settings = EvalSettings { seed: i.seed, preprocess };
    Ok(EvalContext {
        ckpt,
        encoder,
        ds: load_dataset(&i.manifest)?,
        settings,
        cfg,
    })
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let c = eval_context(&a.inputs)?;
    let report = evaluate(&c.ckpt, &c.encoder, &c.ds, a.condition, &c.settings)?;
    write_json(&a.out, &report)?;
    log::info!("{}: accuracy {:.4} on {} images", a.condition, report.overall_accuracy, report.total());
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> Result<()> {
    let c = eval_context(&a.inputs)?;
    let grid = &c.cfg.eval.sweep;
    let reports = blur_sweep(&c.ckpt, &c.encoder, &c.ds, grid, &c.settings)?;
    write_text(&a.out.join("sweep.csv"), &sweep_csv(grid, &reports)?)?;
    write_json(&a.out.join("sweep.json"), &reports)?;
    Ok(())
}

fn analysis_encoder(i: &AnalyzeInputs) -> Result<EncoderHandle> {
    match (&i.ckpt, &i.encoder) {
        (Some(p), _) => EncoderHandle::from_id(&load_checkpoint(p)?.encoder_id),
        (None, Some(id)) => EncoderHandle::from_id(id),
        (None, None) => Err(Error::invalid("encoder", "pass --ckpt or --encoder")),
    }
}

#[derive(Serialize)]
struct SpectrumSide {
    real: RadialSpectrum,
    fake: RadialSpectrum,
    gap: f64,
}

#[derive(Serialize)]
struct SpectrumReport {
    band: (f64, f64),
    blur_length: f64,
    sharp: SpectrumSide,
    blurred: SpectrumSide,
    /// `1 - |blurred gap| / |sharp gap|`
    gap_shrink: f64,
    dataset: String,
}

fn spectrum_side(real: &[Image], fake: &[Image], bins: usize) -> Result<SpectrumSide> {
    let mean = |v: &[Image]| -> Result<RadialSpectrum> {
        let spectra = v.par_iter().map(|im| analysis::radial_spectrum(im, bins)).collect::<Result<Vec<_>>>()?;
        analysis::mean_spectrum(&spectra).ok_or_else(|| Error::Dataset("no images of one class".into()))
    };
    Ok(SpectrumSide {
        real: mean(real)?,
        fake: mean(fake)?,
        gap: analysis::spectrum_gap(real, fake, HIGH_BAND, bins)?,
    })
}

fn analyze_cmd(kind: &AnalyzeKind) -> Result<()> {
    match kind {
        AnalyzeKind::Spectrum { inputs, bins, blur_length } => {
            let ds = load_dataset(&inputs.manifest)?;
            let split = |l: Label| -> Vec<Image> {
                ds.samples().iter().filter(|s| s.label == l).map(|s| s.image.clone()).collect()
            };
            let (real, fake) = (split(Label::Real), split(Label::Fake));
            let sharp = spectrum_side(&real, &fake, *bins)?;
            let blurred = spectrum_side(&analysis::line_blur_each(&real, *blur_length)?, &analysis::line_blur_each(&fake, *blur_length)?, *bins)?;
            let report = SpectrumReport {
                band: HIGH_BAND,
                blur_length: *blur_length,
                gap_shrink: 1.0 - blurred.gap.abs() / sharp.gap.abs().max(f64::MIN_POSITIVE),
                sharp,
                blurred,
                dataset: ds.digest(),
            };
            write_json(&inputs.out.join("spectrum.json"), &report)?;
            let s = &report.sharp;
            let b = &report.blurred;
            let svg = plot::line_chart(
                "radial spectrum (log10 power)",
                &[
                    ("real", &s.real.bin_centers, &s.real.energy),
                    ("fake", &s.fake.bin_centers, &s.fake.energy),
                    ("real blurred", &b.real.bin_centers, &b.real.energy),
                    ("fake blurred", &b.fake.bin_centers, &b.fake.energy),
                ],
            );
            write_text(&inputs.out.join("spectrum.svg"), &svg)
        }
        AnalyzeKind::Attention { inputs, kernel_sizes, limit } => {
            let encoder = analysis_encoder(inputs)?;
            let ds = load_dataset(&inputs.manifest)?;
            let images: Vec<Image> = ds.samples().iter().take(*limit).map(|s| s.image.clone()).collect();
            let curve = analysis::attention_similarity(&encoder, &images, kernel_sizes)?;
            write_json(
                &inputs.out.join("attention.json"),
                &serde_json::json!({
                    "encoder": encoder.id(),
                    "images": images.len(),
                    "curve": curve,
                    "non_increasing_0.02": curve.is_non_increasing(0.02),
                }),
            )?;
            let x: Vec<f64> = curve.kernel_sizes.iter().map(|&k| k as f64).collect();
            let svg = plot::line_chart("attention similarity vs kernel size", &[("clean vs blurred", &x, &curve.similarity)]);
            write_text(&inputs.out.join("attention.svg"), &svg)
        }
        AnalyzeKind::Patchsim { inputs, index, blur_length } => {
            let encoder = analysis_encoder(inputs)?;
            let ds = load_dataset(&inputs.manifest)?;
            let s = ds
                .samples()
                .get(*index)
                .ok_or_else(|| Error::invalid("index", format!("{index} >= {}", ds.len())))?;
            let blurred = analysis::line_blur_each(std::slice::from_ref(&s.image), *blur_length)?.remove(0);
            let clean = analysis::patch_similarity_matrix(&encoder, &s.image)?;
            let blur = analysis::patch_similarity_matrix(&encoder, &blurred)?;
            let rows = |m: &ndarray::Array2<f64>| -> Vec<Vec<f64>> { m.rows().into_iter().map(|r| r.to_vec()).collect() };
            write_json(
                &inputs.out.join("patchsim.json"),
                &serde_json::json!({
                    "id": s.id,
                    "encoder": encoder.id(),
                    "blur_length": blur_length,
                    "clean": rows(&clean),
                    "blurred": rows(&blur),
                }),
            )?;
            write_text(&inputs.out.join("patchsim_clean.svg"), &plot::heatmap(&format!("{} clean", s.id), &clean))?;
            write_text(&inputs.out.join("patchsim_blurred.svg"), &plot::heatmap(&format!("{} blurred", s.id), &blur))
        }
    }
}

fn load_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok(if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    })
}

fn compare_cmd(a: &CompareArgs) -> Result<()> {
    let (ra, rb) = (load_reports(&a.a)?, load_reports(&a.b)?);
    let rows = compare_reports(&ra, &rb)?;
    let fp = |rs: &[EvalReport]| -> Vec<String> { rs.iter().map(|r| r.config_fingerprint.clone()).collect() };
    write_json(
        &a.out,
        &serde_json::json!({
            "a": fp(&ra),
            "b": fp(&rb),
            "fingerprint": fingerprint(&rows)?,
            "rows": rows,
        }),
    )?;
    for r in &rows {
        println!("{:>14}  {:.4} -> {:.4}  ({:+.4}, n={})", r.condition, r.accuracy_a, r.accuracy_b, r.delta, r.n_b);
    }
    Ok(())
}
