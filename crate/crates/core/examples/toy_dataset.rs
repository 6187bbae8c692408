//! Writes the synthetic real/fake dataset to disk and reads it back.
//!
//! ```text
//! cargo run --example toy_dataset -- /tmp/toy
//! ```

use std::path::Path;

use sharpblur::data::{generate_toy_dataset, load_manifest, Dataset, ToyConfig, ToySummary};

pub fn run_example(out_dir: &Path) -> sharpblur::Result<(ToySummary, Dataset)> {
    let summary = generate_toy_dataset(&ToyConfig { n_per_class: 20, size: 48, seed: 0 }, out_dir)?;
    let ds = Dataset::load(&load_manifest(out_dir.join(&summary.manifest))?)?;
    Ok((summary, ds))
}

fn main() -> sharpblur::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("sharpblur-toy").display().to_string());
    let (summary, ds) = run_example(Path::new(&out))?;
    println!("{} images in {out}, spectrum gap {:.3}, digest {}", ds.len(), summary.spectrum_gap, summary.dataset_digest);
    Ok(())
}
