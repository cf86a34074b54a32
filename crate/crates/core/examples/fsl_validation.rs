// Cross-validates a consensus: a forest trained on the consensus of four
// folds segments the fifth, and the result is compared with the consensus.
//
//     cargo run --release --example fsl_validation

use std::error::Error;

use consensus_fuse::eval::{fsl_validate, FoldReport};
use consensus_fuse::forest::ForestConfig;
use consensus_fuse::synthgen::{generate_cases, SynthSpec};

pub fn run_example() -> Result<Vec<FoldReport>, Box<dyn Error>> {
    let spec = SynthSpec {
        width: 64,
        height: 64,
        noise_sigma: 0.05,
        ..SynthSpec::default()
    };
    let cases = generate_cases(10, &spec, 13)?;
    let images: Vec<_> = cases.iter().map(|c| c.image.clone()).collect();
    let consensus: Vec<_> = cases.iter().map(|c| c.truth.clone()).collect();
    let forest = ForestConfig {
        n_trees: 5,
        max_depth: 10,
        bagging_fraction: 0.2,
        ..ForestConfig::default()
    };
    Ok(fsl_validate(&images, &consensus, 5, &forest, 0.06, 17)?)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    for fold in run_example()? {
        println!("fold {} cases {:?}: mean Dice {:.3}", fold.fold, fold.test_cases, fold.mean_dice());
    }
    Ok(())
}
