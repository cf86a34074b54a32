// Computes the 181-value descriptor at a few pixels of a synthetic image.
//
//     cargo run --example feature_extraction

use std::error::Error;

use consensus_fuse::features::{
    build_feature_context, feature_vector, write_feature_csv, FeatureVector, CONTEXT_RANGE,
    INTENSITY_RANGE, N_FEATURES,
};
use consensus_fuse::synthgen::{generate_case, SynthSpec};

pub struct FeatureDemo {
    pub inside: FeatureVector,
    pub outside: FeatureVector,
    pub csv: String,
}

pub fn run_example() -> Result<FeatureDemo, Box<dyn Error>> {
    let spec = SynthSpec {
        width: 64,
        height: 64,
        ..SynthSpec::default()
    };
    let case = generate_case(&spec, 11, 0)?;
    let ctx = build_feature_context(&case.image);

    let inside = case.truth.foreground().nth(case.truth.count() / 2).expect("non-empty region");
    let outside = (0, 0);
    let mut csv = Vec::new();
    write_feature_csv(&mut csv, &ctx, [inside, outside])?;
    Ok(FeatureDemo {
        inside: feature_vector(&ctx, inside.0, inside.1),
        outside: feature_vector(&ctx, outside.0, outside.1),
        csv: String::from_utf8(csv)?,
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let d = run_example()?;
    println!("{N_FEATURES} features per pixel");
    println!("patch mean inside {:.3}, outside {:.3}", d.inside[INTENSITY_RANGE.start], d.outside[INTENSITY_RANGE.start]);
    println!("first context feature inside {:.3}", d.inside[CONTEXT_RANGE.start]);
    println!("csv header: {}...", &d.csv[..40]);
    Ok(())
}
