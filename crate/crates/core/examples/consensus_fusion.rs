// Runs every fusion method on a few synthetic cases with one expert missing
// on half of them and reports Dice against the ground truth.
//
//     cargo run --release --example consensus_fusion

use std::error::Error;

use consensus_fuse::eval::dice;
use consensus_fuse::forest::ForestConfig;
use consensus_fuse::fusion::{prepare, run_method, FusionConfig, Method};
use consensus_fuse::synthgen::{generate_cases, SynthSpec};
use consensus_fuse::{AnnotatedSlice, AnnotationSet};

#[derive(Debug)]
pub struct MethodScore {
    pub method: Method,
    pub mean_dice: f64,
    pub energy: Option<f64>,
}

pub fn run_example() -> Result<Vec<MethodScore>, Box<dyn Error>> {
    let spec = SynthSpec {
        width: 80,
        height: 80,
        ..SynthSpec::default()
    };
    let cases = generate_cases(6, &spec, 21)?;
    let experts: Vec<String> = (0..3).map(|k| format!("expert_{k}")).collect();
    let build = |drop: bool| {
        let slices = cases
            .iter()
            .enumerate()
            .map(|(i, c)| AnnotatedSlice {
                image: c.image.clone(),
                masks: c
                    .experts
                    .iter()
                    .enumerate()
                    .map(|(k, m)| (!(drop && i % 2 == 0 && k == i % 3)).then(|| m.clone()))
                    .collect(),
            })
            .collect();
        AnnotationSet::new(experts.clone(), slices)
    };
    let partial = build(true)?;
    let complete = build(false)?;

    let fusion = FusionConfig::default();
    let forest = ForestConfig {
        n_trees: 8,
        max_depth: 12,
        bagging_fraction: 0.1,
        ..ForestConfig::default()
    };
    let prepared_partial = prepare(&partial, fusion.roi_margin)?;
    let prepared_complete = prepare(&complete, fusion.roi_margin)?;

    Method::ALL
        .iter()
        .map(|&method| {
            let (annotations, prepared) = match method {
                Method::GcmeAll => (&complete, &prepared_complete),
                _ => (&partial, &prepared_partial),
            };
            let out = run_method(method, annotations, prepared, &fusion, &forest, 4)?;
            let total: f64 = out
                .consensus
                .iter()
                .zip(&cases)
                .map(|(m, c)| dice(m, &c.truth))
                .sum::<consensus_fuse::Result<f64>>()?;
            Ok(MethodScore {
                method,
                mean_dice: total / cases.len() as f64,
                energy: out.fusion.map(|f| f.energy()),
            })
        })
        .collect()
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    for s in run_example()? {
        let energy = s.energy.map_or("-".to_string(), |e| format!("{e:.1}"));
        println!("{:<10} Dice {:.4}  energy {energy}", s.method.name(), s.mean_dice);
    }
    Ok(())
}
