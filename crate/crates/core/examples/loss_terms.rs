//! The four training losses and their weighted total on a small batch.
//!
//! ```text
//! cargo run --example loss_terms
//! ```

use ndarray::{array, concatenate, Array2, Axis};
use sharpblur::losses::{total_loss, BatchViews, LossBreakdown, LossWeights};

/// Three samples, two classes, four-dimensional features.
pub struct ExampleBatch {
    pub teacher_logits: Array2<f64>,
    pub student_logits: Array2<f64>,
    pub teacher_features: Array2<f64>,
    pub student_features: Array2<f64>,
    /// Sharp views first, then their blurred partners.
    pub embeddings: Array2<f64>,
    pub blur_levels: Vec<f64>,
    pub anchors: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Default for ExampleBatch {
    fn default() -> Self {
        Self::new()
    }
}

impl ExampleBatch {
    pub fn new() -> Self {
        let teacher_features = array![[1.0, 0.0, 0.5, 0.2], [0.0, 1.0, -0.3, 0.4], [0.6, 0.6, 0.0, -0.2]];
        let student_features = array![[0.8, 0.2, 0.4, 0.0], [0.2, 0.7, -0.1, 0.5], [0.1, 0.9, 0.3, -0.4]];
        Self {
            teacher_logits: array![[2.0, -1.0], [-0.5, 1.5], [1.0, 0.2]],
            student_logits: array![[1.2, -0.4], [0.1, 0.6], [0.3, 0.4]],
            embeddings: concatenate![Axis(0), teacher_features, student_features],
            teacher_features,
            student_features,
            blur_levels: vec![0.0, 0.0, 0.0, 0.2, 0.5, 0.9],
            anchors: vec![0, 1, 2],
            labels: vec![0, 1, 0],
        }
    }

    pub fn views(&self) -> BatchViews<'_> {
        BatchViews {
            teacher_logits: self.teacher_logits.view(),
            student_logits: self.student_logits.view(),
            teacher_features: self.teacher_features.view(),
            student_features: self.student_features.view(),
            embeddings: self.embeddings.view(),
            blur_levels: &self.blur_levels,
            anchors: &self.anchors,
            labels: &self.labels,
        }
    }
}

pub fn run_example(weights: &LossWeights) -> sharpblur::Result<LossBreakdown> {
    let batch = ExampleBatch::new();
    let (breakdown, _grads) = total_loss(&batch.views(), weights)?;
    Ok(breakdown)
}

fn main() -> sharpblur::Result<()> {
    let b = run_example(&LossWeights::default())?;
    println!("cls {:.6}  feat {:.6}  kd {:.6}  ordcon {:.6}  total {:.6}", b.cls, b.feat, b.kd, b.ordcon, b.total);
    Ok(())
}
