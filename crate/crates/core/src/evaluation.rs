//! Accuracy under clean and blurred evaluation conditions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blur::{auto_kernel_size, convolve, motion_line, parametric_kernel, radial_blur, BlurKernel, KernelFamily};
use crate::data::{fingerprint, preprocess, Checkpoint, CropMode, Dataset, PreprocessSize};
use crate::encoder::EncoderHandle;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::label::Label;
use crate::losses::argmax_rows;
use crate::rng;
use crate::training::encode_pooled;

/// What is done to each center-cropped test image before encoding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Condition {
    Clean,
    Blur { family: KernelFamily, param: f64 },
}

impl Condition {
    pub fn blur(family: KernelFamily, param: f64) -> Self {
        Condition::Blur { family, param }
    }

    pub fn validate(&self) -> Result<()> {
        if let Condition::Blur { family, param } = *self {
            let max = family.max_param();
            if family != KernelFamily::Identity && !(0.0..=max).contains(&param) {
                return Err(Error::invalid(
                    "condition",
                    format!("{family} parameter {param} outside [0, {max}]"),
                ));
            }
        }
        Ok(())
    }

    pub fn severity(&self) -> f64 {
        match *self {
            Condition::Clean => 0.0,
            Condition::Blur { family, param } => family.severity(param),
        }
    }

    /// Applies the condition; motion blur takes its angle from `rng`.
    pub fn apply<R: Rng + ?Sized>(&self, image: &Image, rng: &mut R) -> Result<Image> {
        let angle = std::f64::consts::PI * rng.random::<f64>();
        match *self {
            Condition::Clean => Ok(image.clone()),
            Condition::Blur { family, param } => match family {
                KernelFamily::Identity => convolve(image, &BlurKernel::identity()),
                KernelFamily::Radial => radial_blur(image, param),
                KernelFamily::MotionPsf => {
                    let k = motion_line(param, angle, auto_kernel_size(family, param), family.max_param())?;
                    convolve(image, &k)
                }
                _ => convolve(image, &parametric_kernel(family, param, auto_kernel_size(family, param))?),
            },
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Clean => f.write_str("clean"),
            Condition::Blur {
                family: KernelFamily::Identity,
                ..
            } => f.write_str("identity"),
            Condition::Blur { family, param } => write!(f, "{}:{}", family.name(), param),
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    /// `clean`, `identity`, or `family:param` such as `motion:15`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "clean" {
            return Ok(Condition::Clean);
        }
        let unknown = || Error::Unknown {
            kind: "condition",
            name: s.to_string(),
        };
        let (fam, param) = match s.split_once(':') {
            Some((f, p)) => (f, Some(p.parse::<f64>().map_err(|_| unknown())?)),
            None => (s, None),
        };
        let family: KernelFamily = fam.parse().map_err(|_| unknown())?;
        let c = match (family, param) {
            (KernelFamily::Identity, _) => Condition::blur(family, 0.0),
            (_, Some(p)) => Condition::blur(family, p),
            (_, None) => return Err(unknown()),
        };
        c.validate()?;
        Ok(c)
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub accuracy: f64,
    pub n: usize,
}

impl Tally {
    fn from_hits(hits: usize, n: usize) -> Self {
        Self {
            accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_condition: BTreeMap<String, Tally>,
    pub per_class: BTreeMap<Label, f64>,
    /// Grouped by annotated severity; unannotated samples are `unannotated`.
    pub per_severity_bucket: BTreeMap<String, Tally>,
    pub config_fingerprint: String,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.per_condition.values().map(|t| t.n).sum()
    }
}

/// Evaluation knobs shared by every condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct EvalSettings {
    pub seed: u64,
    pub preprocess: PreprocessSize,
}


/// One family with the parameters to sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub family: KernelFamily,
    pub params: Vec<f64>,
}

impl SweepRow {
    pub fn conditions(&self) -> Vec<Condition> {
        self.params.iter().map(|&p| Condition::blur(self.family, p)).collect()
    }
}

pub fn severity_bucket(b: f64) -> &'static str {
    if b < 1.0 / 3.0 {
        "[0,1/3)"
    } else if b < 2.0 / 3.0 {
        "[1/3,2/3)"
    } else {
        "[2/3,1]"
    }
}

/// Accuracy of `ckpt` on `ds` under each condition. Center crops are
/// computed once; image `i` always uses the stream `(seed, i)`, so every
/// condition and every checkpoint sees the same blur draws.
pub fn evaluate_conditions(
    ckpt: &Checkpoint,
    encoder: &EncoderHandle,
    ds: &Dataset,
    conditions: &[Condition],
    settings: &EvalSettings,
) -> Result<Vec<EvalReport>> {
    if ds.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty dataset".into()));
    }
    ckpt.check_encoder(encoder, false)?;
    for c in conditions {
        c.validate()?;
    }
    let size = settings.preprocess;
    let crops = ds
        .samples()
        .par_iter()
        .map(|s| preprocess(&s.image, size, CropMode::EvalCenterCrop, &mut rng::stream(0, &[])))
        .collect::<Result<Vec<_>>>()?;
    let dataset_digest = ds.digest();

    conditions
        .iter()
        .map(|cond| {
            let views = crops
                .par_iter()
                .enumerate()
                .map(|(i, im)| cond.apply(im, &mut rng::stream(settings.seed, &[rng::tag("eval"), i as u64])))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Image> = views.iter().collect();
            let h = encode_pooled(encoder, &refs)?;
            let pred = argmax_rows(ckpt.head.infer(h.view())?.logits.view());
            let fp = fingerprint(&serde_json::json!({
                "checkpoint": ckpt.config_fingerprint,
                "head": ckpt.head.digest(),
                "condition": cond,
                "settings": settings,
                "dataset": dataset_digest,
            }))?;
            Ok(report(cond, &pred, ds, fp))
        })
        .collect()
}

fn report(cond: &Condition, pred: &[usize], ds: &Dataset, config_fingerprint: String) -> EvalReport {
    let hit = |i: usize| pred[i] == ds.samples()[i].label.index();
    let n = ds.len();
    let hits = (0..n).filter(|&i| hit(i)).count();

    let mut per_class = BTreeMap::new();
    for l in [Label::Real, Label::Fake] {
        let idx: Vec<usize> = (0..n).filter(|&i| ds.samples()[i].label == l).collect();
        if !idx.is_empty() {
            per_class.insert(l, idx.iter().filter(|&&i| hit(i)).count() as f64 / idx.len() as f64);
        }
    }
    let mut buckets: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, s) in ds.samples().iter().enumerate() {
        let key = s.severity_b.map_or("unannotated", severity_bucket).to_string();
        let e = buckets.entry(key).or_default();
        e.0 += hit(i) as usize;
        e.1 += 1;
    }
    EvalReport {
        overall_accuracy: Tally::from_hits(hits, n).accuracy,
        per_condition: BTreeMap::from([(cond.to_string(), Tally::from_hits(hits, n))]),
        per_class,
        per_severity_bucket: buckets
            .into_iter()
            .map(|(k, (h, m))| (k, Tally::from_hits(h, m)))
            .collect(),
        config_fingerprint,
    }
}

pub fn evaluate(
    ckpt: &Checkpoint,
    encoder: &EncoderHandle,
    ds: &Dataset,
    condition: Condition,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    Ok(evaluate_conditions(ckpt, encoder, ds, &[condition], settings)?.remove(0))
}

/// One report per `(family, param)` cell, in grid order.
pub fn blur_sweep(
    ckpt: &Checkpoint,
    encoder: &EncoderHandle,
    ds: &Dataset,
    grid: &[SweepRow],
    settings: &EvalSettings,
) -> Result<Vec<EvalReport>> {
    if grid.is_empty() || grid.iter().any(|r| r.params.is_empty()) {
        return Err(Error::invalid("grid", "needs at least one family and parameter"));
    }
    let conditions: Vec<Condition> = grid.iter().flat_map(SweepRow::conditions).collect();
    evaluate_conditions(ckpt, encoder, ds, &conditions, settings)
}

/// CSV with one row per family and one column per distinct parameter;
/// cells absent from the grid are left empty.
pub fn sweep_csv(grid: &[SweepRow], reports: &[EvalReport]) -> Result<String> {
    let n_cells: usize = grid.iter().map(|r| r.params.len()).sum();
    if n_cells != reports.len() {
        return Err(Error::ShapeMismatch(format!("{n_cells} grid cells vs {} reports", reports.len())));
    }
    let mut params: Vec<f64> = grid.iter().flat_map(|r| r.params.iter().copied()).collect();
    params.sort_by(f64::total_cmp);
    params.dedup();
    let mut out = String::from("family");
    for p in &params {
        out.push_str(&format!(",{p}"));
    }
    out.push('\n');
    let mut it = reports.iter();
    for row in grid {
        let cells: BTreeMap<u64, f64> = row
            .params
            .iter()
            .map(|p| (p.to_bits(), it.next().expect("counted").overall_accuracy))
            .collect();
        out.push_str(row.family.name());
        for p in &params {
            match cells.get(&p.to_bits()) {
                Some(a) => out.push_str(&format!(",{a}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub condition: String,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    /// `accuracy_b - accuracy_a`
    pub delta: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Per-condition differences `b - a` over one or more reports per side.
pub fn compare_reports(a: &[EvalReport], b: &[EvalReport]) -> Result<Vec<DeltaRow>> {
    let flatten = |rs: &[EvalReport]| -> BTreeMap<String, Tally> {
        rs.iter().flat_map(|r| r.per_condition.clone()).collect()
    };
    let (ma, mb) = (flatten(a), flatten(b));
    if !ma.keys().eq(mb.keys()) {
        let ka: Vec<&String> = ma.keys().collect();
        let kb: Vec<&String> = mb.keys().collect();
        return Err(Error::ShapeMismatch(format!("condition grids differ: {ka:?} vs {kb:?}")));
    }
    Ok(ma
        .iter()
        .zip(mb.values())
        .map(|((cond, ta), tb)| DeltaRow {
            condition: cond.clone(),
            accuracy_a: ta.accuracy,
            accuracy_b: tb.accuracy,
            delta: tb.accuracy - ta.accuracy,
            n_a: ta.n,
            n_b: tb.n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_strings_round_trip() {
        for s in ["clean", "identity", "motion:15", "gaussian:2", "box:3", "bokeh:2", "defocus:1.5", "radial:4"] {
            let c: Condition = s.parse().unwrap();
            assert_eq!(c.to_string(), s);
        }
        assert!("motion".parse::<Condition>().is_err());
        assert!("swirl:3".parse::<Condition>().is_err());
        assert!("gaussian:50".parse::<Condition>().is_err());
    }

    #[test]
    fn buckets_cover_unit_interval() {
        assert_eq!(severity_bucket(0.0), "[0,1/3)");
        assert_eq!(severity_bucket(0.5), "[1/3,2/3)");
        assert_eq!(severity_bucket(1.0), "[2/3,1]");
    }

    #[test]
    fn csv_layout() {
        let grid = vec![
            SweepRow {
                family: KernelFamily::MotionPsf,
                params: vec![5.0, 10.0],
            },
            SweepRow {
                family: KernelFamily::Gaussian,
                params: vec![1.0],
            },
        ];
        let rep = |a: f64| EvalReport {
            overall_accuracy: a,
            per_condition: BTreeMap::new(),
            per_class: BTreeMap::new(),
            per_severity_bucket: BTreeMap::new(),
            config_fingerprint: String::new(),
        };
        let csv = sweep_csv(&grid, &[rep(0.9), rep(0.7), rep(0.8)]).unwrap();
        assert_eq!(csv, "family,1,5,10\nmotion,,0.9,0.7\ngaussian,0.8,,\n");
    }
}
