// Hides one expert's mask on a few slices and predicts it back with a
// semi-supervised forest.
//
//     cargo run --release --example ssl_imputation

use std::error::Error;

use consensus_fuse::eval::dice;
use consensus_fuse::features::build_feature_context;
use consensus_fuse::forest::{impute_missing, ForestConfig};
use consensus_fuse::fusion::slice_rois;
use consensus_fuse::image::DEFAULT_ROI_MARGIN;
use consensus_fuse::synthgen::{generate_cases, SynthSpec};
use consensus_fuse::{AnnotatedSlice, AnnotationSet};

pub struct ImputationDemo {
    /// Dice of each imputed mask against the mask that was hidden.
    pub vs_hidden: Vec<f64>,
    /// Dice of each imputed mask against the ground truth.
    pub vs_truth: Vec<f64>,
}

pub fn run_example() -> Result<ImputationDemo, Box<dyn Error>> {
    let spec = SynthSpec {
        width: 64,
        height: 64,
        ..SynthSpec::default()
    };
    let cases = generate_cases(6, &spec, 5)?;
    let hidden = |i: usize| (i % 2 == 0).then_some(i % 3);
    let slices = cases
        .iter()
        .enumerate()
        .map(|(i, c)| AnnotatedSlice {
            image: c.image.clone(),
            masks: (0..3)
                .map(|k| (hidden(i) != Some(k)).then(|| c.experts[k].clone()))
                .collect(),
        })
        .collect();
    let annotations = AnnotationSet::new(vec!["a".into(), "b".into(), "c".into()], slices)?;

    let rois = slice_rois(&annotations, DEFAULT_ROI_MARGIN)?;
    let contexts: Vec<_> = annotations.slices().iter().map(|s| build_feature_context(&s.image)).collect();
    let config = ForestConfig {
        n_trees: 8,
        max_depth: 12,
        bagging_fraction: 0.2,
        ..ForestConfig::default()
    };
    let completed = impute_missing(&annotations, &contexts, &rois, &config, 3)?;

    let mut demo = ImputationDemo {
        vs_hidden: Vec::new(),
        vs_truth: Vec::new(),
    };
    for (i, case) in cases.iter().enumerate() {
        if let Some(k) = hidden(i) {
            let imputed = completed.slices()[i].masks[k].as_ref().expect("filled");
            demo.vs_hidden.push(dice(imputed, &case.experts[k])?);
            demo.vs_truth.push(dice(imputed, &case.truth)?);
        }
    }
    Ok(demo)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let d = run_example()?;
    for (h, t) in d.vs_hidden.iter().zip(&d.vs_truth) {
        println!("imputed vs hidden {h:.3}, vs truth {t:.3}");
    }
    Ok(())
}
