// Scores a faithful expert against one that labels pixels at random.
//
//     cargo run --release --example self_consistency

use std::error::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use consensus_fuse::consistency::{self_consistency, ScReport};
use consensus_fuse::features::build_feature_context;
use consensus_fuse::forest::ForestConfig;
use consensus_fuse::fusion::slice_rois;
use consensus_fuse::synthgen::{generate_cases, SynthSpec};
use consensus_fuse::{AnnotatedSlice, AnnotationSet, Mask};

pub fn run_example() -> Result<ScReport, Box<dyn Error>> {
    let spec = SynthSpec {
        width: 64,
        height: 64,
        ..SynthSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let slices = generate_cases(3, &spec, 9)?
        .into_iter()
        .map(|c| {
            let (w, h) = c.truth.dims();
            let random = Mask::from_fn(w, h, |_, _| rng.gen_bool(0.5));
            AnnotatedSlice {
                image: c.image,
                masks: vec![Some(c.truth), Some(random)],
            }
        })
        .collect();
    let annotations = AnnotationSet::new(vec!["faithful".into(), "random".into()], slices)?;
    let rois = slice_rois(&annotations, 10)?;
    let contexts: Vec<_> = annotations.slices().iter().map(|s| build_feature_context(&s.image)).collect();
    let config = ForestConfig {
        n_trees: 5,
        max_depth: 10,
        bagging_fraction: 0.3,
        ..ForestConfig::default()
    };
    Ok(self_consistency(&annotations, &contexts, &rois, &config, 1)?)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let report = run_example()?;
    print!("{}", report.to_json()?);
    Ok(())
}
