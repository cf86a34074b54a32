// Writes a small synthetic benchmark to disk and reads it back.
//
//     cargo run --example synthetic_benchmark

use std::error::Error;

use consensus_fuse::dataset::load_dataset;
use consensus_fuse::eval::dice;
use consensus_fuse::pgm::read_mask;
use consensus_fuse::synthgen::{generate_benchmark, SynthSpec};

#[derive(Debug)]
pub struct BenchmarkSummary {
    pub cases: usize,
    pub withheld: usize,
    /// Mean Dice of the present expert masks against the ground truth.
    pub expert_dice: f64,
}

pub fn run_example() -> Result<BenchmarkSummary, Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SynthSpec {
        width: 96,
        height: 96,
        ..SynthSpec::default()
    };
    let manifest = generate_benchmark(dir.path(), 8, &spec, 1.0 / 3.0, 7)?;
    let dataset = load_dataset(&dir.path().join("manifest.json"))?;

    let mut scores = Vec::new();
    for (i, slice) in dataset.annotations.slices().iter().enumerate() {
        let truth = read_mask(&dataset.sidecar_path(i, "gt.pgm"))?;
        for mask in slice.present() {
            scores.push(dice(mask, &truth)?);
        }
    }
    Ok(BenchmarkSummary {
        cases: manifest.slices.len(),
        withheld: manifest.n_missing(),
        expert_dice: scores.iter().sum::<f64>() / scores.len() as f64,
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let s = run_example()?;
    println!("{} cases, {} withheld masks", s.cases, s.withheld);
    println!("mean expert Dice vs ground truth: {:.3}", s.expert_dice);
    Ok(())
}
