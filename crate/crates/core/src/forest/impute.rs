use rayon::prelude::*;

use super::{train_ssl, ForestConfig, SampleSet, UNLABELED};
use crate::error::{Error, Result};
use crate::features::{FeatureContext, FeatureMatrix};
use crate::image::{AnnotationSet, Mask, Roi};

/// Fills every missing mask with the argmax posterior of one semi-supervised
/// forest trained on all slices at once. Present masks are left untouched;
/// pixels outside the slice ROI are background; ties go to background.
pub fn impute_missing(
    annotations: &AnnotationSet,
    contexts: &[FeatureContext],
    rois: &[Roi],
    config: &ForestConfig,
    seed: u64,
) -> Result<AnnotationSet> {
    check_imputable(annotations)?;
    if annotations.is_complete() {
        return Ok(annotations.clone());
    }
    let matrix = FeatureMatrix::from_rois(contexts, rois)?;
    impute_missing_with_matrix(annotations, &matrix, config, seed)
}

fn check_imputable(annotations: &AnnotationSet) -> Result<()> {
    for (r, name) in annotations.experts().iter().enumerate() {
        if annotations.slices().iter().all(|s| s.masks[r].is_none()) {
            return Err(Error::UnimputableExpert {
                expert: name.clone(),
            });
        }
    }
    Ok(())
}

/// [`impute_missing`] over a precomputed ROI feature matrix (one block per slice).
pub fn impute_missing_with_matrix(
    annotations: &AnnotationSet,
    matrix: &FeatureMatrix,
    config: &ForestConfig,
    seed: u64,
) -> Result<AnnotationSet> {
    check_imputable(annotations)?;
    if annotations.is_complete() {
        return Ok(annotations.clone());
    }
    if matrix.n_slices() != annotations.slices().len() {
        return Err(Error::InvalidInput(format!(
            "feature matrix covers {} slices, annotations have {}",
            matrix.n_slices(),
            annotations.slices().len()
        )));
    }

    let mut samples = SampleSet::new(matrix);
    for (s, slice) in annotations.slices().iter().enumerate() {
        let (rows, roi) = matrix.block(s).expect("block per slice");
        for (r, mask) in slice.masks.iter().enumerate() {
            for (row, (x, y)) in rows.clone().zip(roi.pixels()) {
                let label = mask.as_ref().map_or(UNLABELED, |m| m.get(x, y));
                samples.push(row, label, r as u16);
            }
        }
    }
    log::info!(
        "imputing {} masks from {} labeled and {} unlabeled rows",
        annotations.n_missing(),
        samples.len() - samples.n_unlabeled(),
        samples.n_unlabeled()
    );
    let forest = train_ssl(&samples, config, seed)?;

    // one prediction per slice with gaps; every missing expert on it shares it
    let predicted: Vec<Option<Mask>> = annotations
        .slices()
        .par_iter()
        .enumerate()
        .map(|(s, slice)| {
            if slice.masks.iter().all(Option::is_some) {
                return None;
            }
            let (w, h) = slice.image.dims();
            let (rows, roi) = matrix.block(s).expect("block per slice");
            let mut mask = Mask::zeros(w, h);
            for (row, (x, y)) in rows.zip(roi.pixels()) {
                let p = forest.predict(matrix.row(row));
                mask.set(x, y, p[1] > p[0]);
            }
            Some(mask)
        })
        .collect();

    annotations.with_filled(|s, _| predicted[s].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_feature_context;
    use crate::image::{compute_roi, AnnotatedSlice, ImageGrid};

    fn blob_slice(cx: usize, missing: Option<usize>) -> AnnotatedSlice {
        let (w, h) = (48, 48);
        let inside = |x: usize, y: usize| {
            let (dx, dy) = (x as f64 - cx as f64, y as f64 - 24.0);
            dx * dx + dy * dy < 100.0
        };
        let data = (0..w * h)
            .map(|i| if inside(i % w, i / w) { 0.8 } else { 0.2 })
            .collect();
        let image = ImageGrid::new(w, h, data).unwrap();
        let masks = (0..3)
            .map(|r| (Some(r) != missing).then(|| Mask::from_fn(w, h, inside)))
            .collect();
        AnnotatedSlice { image, masks }
    }

    fn inputs(set: &AnnotationSet) -> (Vec<FeatureContext>, Vec<Roi>) {
        let ctx = set
            .slices()
            .iter()
            .map(|s| build_feature_context(&s.image))
            .collect();
        let rois = set
            .slices()
            .iter()
            .map(|s| compute_roi(s, 6).unwrap())
            .collect();
        (ctx, rois)
    }

    fn cfg() -> ForestConfig {
        ForestConfig {
            n_trees: 5,
            max_depth: 10,
            bagging_fraction: 0.3,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn complete_set_is_returned_unchanged() {
        let set = AnnotationSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![blob_slice(20, None), blob_slice(26, None)],
        )
        .unwrap();
        let (ctx, rois) = inputs(&set);
        assert_eq!(impute_missing(&set, &ctx, &rois, &cfg(), 1).unwrap(), set);
    }

    #[test]
    fn fills_every_gap_and_keeps_present_masks() {
        let set = AnnotationSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![blob_slice(20, Some(1)), blob_slice(26, None), blob_slice(23, Some(0))],
        )
        .unwrap();
        let (ctx, rois) = inputs(&set);
        let out = impute_missing(&set, &ctx, &rois, &cfg(), 1).unwrap();
        assert!(out.is_complete());
        for (a, b) in set.slices().iter().zip(out.slices()) {
            for (ma, mb) in a.masks.iter().zip(&b.masks) {
                if let Some(ma) = ma {
                    assert_eq!(Some(ma), mb.as_ref());
                }
            }
        }
        // the blob is easy: the imputed mask should agree with the truth
        let truth = blob_slice(20, None).masks[0].clone().unwrap();
        let got = out.slices()[0].masks[1].as_ref().unwrap();
        let agree = truth
            .data()
            .iter()
            .zip(got.data())
            .filter(|(a, b)| a == b)
            .count();
        assert!(agree as f64 / (48.0 * 48.0) > 0.97);
    }

    #[test]
    fn expert_missing_everywhere_is_unimputable() {
        let set = AnnotationSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![blob_slice(20, Some(2)), blob_slice(26, Some(2))],
        )
        .unwrap();
        let (ctx, rois) = inputs(&set);
        let err = impute_missing(&set, &ctx, &rois, &cfg(), 1).unwrap_err();
        assert_eq!(err.category(), "unimputable-expert");
    }
}
