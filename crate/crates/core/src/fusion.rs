//! Consensus fusion: SC-weighted penalty costs plus contrast-sensitive
//! Potts smoothness, minimized exactly per slice. Also the majority-vote
//! baseline and the ablation variants used in benchmarks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::{self_consistency_with_matrix, ScReport};
use crate::error::{Error, Result};
use crate::features::{build_feature_context, FeatureMatrix};
use crate::forest::{impute_missing_with_matrix, ForestConfig};
use crate::graphcut::{grid_pairs_8, minimize_binary_mrf, Pairwise};
use crate::image::{compute_roi, AnnotatedSlice, AnnotationSet, Mask, Roi, DEFAULT_ROI_MARGIN};

/// Scale of the intensity term in the smoothness weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sigma {
    /// Standard deviation of neighbor intensity differences in the ROI.
    Auto,
    #[serde(untagged)]
    Fixed(f64),
}

pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub lambda: f64,
    pub sigma: Sigma,
    pub tie_label: u8,
    pub roi_margin: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.06,
            sigma: Sigma::Auto,
            tie_label: 0,
            roi_margin: DEFAULT_ROI_MARGIN,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if let Sigma::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!("sigma must be > 0, got {s}")));
            }
        }
        if self.tie_label > 1 {
            return Err(Error::InvalidInput(format!("tie label must be 0 or 1, got {}", self.tie_label)));
        }
        Ok(())
    }
}

/// Averaged `(D0, D1)` over experts. An expert labelling 1 with score `s`
/// contributes `(s, 1 − s)`; labelling 0 contributes `(1 − s, s)`.
pub fn penalty_costs(labels: &[u8], sc: &[f64]) -> Result<[f64; 2]> {
    if labels.is_empty() || labels.len() != sc.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} scores",
            labels.len(),
            sc.len()
        )));
    }
    let mut d = [0.0; 2];
    for (&y, &s) in labels.iter().zip(sc) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidInput(format!("SC {s} outside [0,1]")));
        }
        let (agree, disagree) = if y == 1 { (1, 0) } else { (0, 1) };
        d[agree] += 1.0 - s;
        d[disagree] += s;
    }
    let r = labels.len() as f64;
    Ok([d[0] / r, d[1] / r])
}

/// `exp(−(i_s − i_t)² / 2σ²) / dist`.
pub fn smoothness_weight(i_s: f64, i_t: f64, dist: f64, sigma: f64) -> f64 {
    let d = i_s - i_t;
    (-d * d / (2.0 * sigma * sigma)).exp() / dist
}

/// Standard deviation of the signed intensity differences over all
/// 8-neighbor pairs inside `roi`, floored at [`SIGMA_FLOOR`].
pub fn auto_sigma(image: &crate::image::ImageGrid, roi: &Roi) -> f64 {
    let (w, h) = (roi.width(), roi.height());
    let mut n = 0.0;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (u, v, _) in grid_pairs_8(w, h) {
        let a = image.get(roi.x0 + u % w, roi.y0 + u / w);
        let b = image.get(roi.x0 + v % w, roi.y0 + v / w);
        let d = a - b;
        n += 1.0;
        sum += d;
        sum_sq += d * d;
    }
    if n == 0.0 {
        return SIGMA_FLOOR;
    }
    let mean = sum / n;
    ((sum_sq / n - mean * mean).max(0.0)).sqrt().max(SIGMA_FLOOR)
}

/// MRF of one slice over its ROI (row-major within the ROI).
#[derive(Debug, Clone)]
pub struct SliceMrf {
    pub roi: Roi,
    pub sigma: f64,
    pub unary: Vec<[f64; 2]>,
    pub pairwise: Vec<Pairwise>,
}

impl SliceMrf {
    /// Energy of a full-image mask restricted to the ROI.
    pub fn energy_of(&self, mask: &Mask) -> f64 {
        let labels: Vec<u8> = self.roi.pixels().map(|(x, y)| mask.get(x, y)).collect();
        crate::graphcut::mrf_energy(&self.unary, &self.pairwise, &labels)
    }
}

/// Penalties from the experts present on `slice`, smoothness from its image.
pub fn build_slice_mrf(
    slice: &AnnotatedSlice,
    roi: Roi,
    sc: &ScReport,
    config: &FusionConfig,
) -> Result<SliceMrf> {
    if sc.scores.len() != slice.masks.len() {
        return Err(Error::InvalidInput(format!(
            "{} SC scores for {} experts",
            sc.scores.len(),
            slice.masks.len()
        )));
    }
    let present: Vec<(&Mask, f64)> = slice
        .masks
        .iter()
        .zip(&sc.scores)
        .filter_map(|(m, &s)| m.as_ref().map(|m| (m, s)))
        .collect();
    if present.is_empty() {
        return Err(Error::InvalidInput("slice has no expert annotation".into()));
    }
    let scores: Vec<f64> = present.iter().map(|p| p.1).collect();
    let mut labels = vec![0u8; present.len()];
    let mut unary = Vec::with_capacity(roi.len());
    for (x, y) in roi.pixels() {
        for (l, (m, _)) in labels.iter_mut().zip(&present) {
            *l = m.get(x, y);
        }
        unary.push(penalty_costs(&labels, &scores)?);
    }

    let image = &slice.image;
    let sigma = match config.sigma {
        Sigma::Auto => auto_sigma(image, &roi),
        Sigma::Fixed(s) => s,
    };
    let w = roi.width();
    let pairwise = grid_pairs_8(w, roi.height())
        .into_iter()
        .map(|(u, v, dist)| {
            let a = image.get(roi.x0 + u % w, roi.y0 + u / w);
            let b = image.get(roi.x0 + v % w, roi.y0 + v / w);
            Pairwise {
                u,
                v,
                weight: config.lambda * smoothness_weight(a, b, dist, sigma),
            }
        })
        .collect();
    Ok(SliceMrf {
        roi,
        sigma,
        unary,
        pairwise,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub consensus: Vec<Mask>,
    pub sc: ScReport,
    pub energy_per_slice: Vec<f64>,
    pub sigma_per_slice: Vec<f64>,
    pub lambda: f64,
}

#[derive(Serialize)]
struct ScEntry<'a> {
    id: &'a str,
    sc: f64,
}

#[derive(Serialize)]
struct FusionReportDoc<'a> {
    lambda: f64,
    sigma: f64,
    sc: Vec<ScEntry<'a>>,
    energy_per_slice: &'a [f64],
}

impl FusionResult {
    pub fn energy(&self) -> f64 {
        self.energy_per_slice.iter().sum()
    }

    /// Mean of the per-slice sigmas.
    pub fn sigma(&self) -> f64 {
        if self.sigma_per_slice.is_empty() {
            return 0.0;
        }
        self.sigma_per_slice.iter().sum::<f64>() / self.sigma_per_slice.len() as f64
    }

    /// `{"lambda", "sigma", "sc": [{"id", "sc"}], "energy_per_slice"}`.
    pub fn report_json(&self) -> Result<String> {
        let doc = FusionReportDoc {
            lambda: self.lambda,
            sigma: self.sigma(),
            sc: self
                .sc
                .experts
                .iter()
                .zip(&self.sc.scores)
                .map(|(id, &sc)| ScEntry { id, sc })
                .collect(),
            energy_per_slice: &self.energy_per_slice,
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }
}

/// ROIs of every slice.
pub fn slice_rois(annotations: &AnnotationSet, margin: usize) -> Result<Vec<Roi>> {
    annotations
        .slices()
        .iter()
        .map(|s| compute_roi(s, margin))
        .collect()
}

/// Minimizes each slice's MRF under the given scores. Missing masks simply
/// drop out of that slice's penalty average.
pub fn fuse_with_scores(
    annotations: &AnnotationSet,
    rois: &[Roi],
    sc: &ScReport,
    config: &FusionConfig,
) -> Result<FusionResult> {
    config.validate()?;
    if rois.len() != annotations.slices().len() {
        return Err(Error::InvalidInput(format!(
            "{} ROIs for {} slices",
            rois.len(),
            annotations.slices().len()
        )));
    }
    let solved: Vec<(Mask, f64, f64)> = annotations
        .slices()
        .par_iter()
        .zip(rois)
        .map(|(slice, &roi)| {
            let mrf = build_slice_mrf(slice, roi, sc, config)?;
            let sol = minimize_binary_mrf(&mrf.unary, &mrf.pairwise)?;
            let (w, h) = slice.image.dims();
            let mut mask = Mask::zeros(w, h);
            for ((x, y), &l) in roi.pixels().zip(&sol.labels) {
                mask.set(x, y, l == 1);
            }
            Ok((mask, sol.energy, mrf.sigma))
        })
        .collect::<Result<_>>()?;
    let mut result = FusionResult {
        consensus: Vec::with_capacity(solved.len()),
        sc: sc.clone(),
        energy_per_slice: Vec::with_capacity(solved.len()),
        sigma_per_slice: Vec::with_capacity(solved.len()),
        lambda: config.lambda,
    };
    for (mask, energy, sigma) in solved {
        result.consensus.push(mask);
        result.energy_per_slice.push(energy);
        result.sigma_per_slice.push(sigma);
    }
    Ok(result)
}

/// ROIs and the ROI feature matrix shared by imputation and SC scoring.
pub struct Prepared {
    pub rois: Vec<Roi>,
    pub matrix: FeatureMatrix,
}

pub fn prepare(annotations: &AnnotationSet, margin: usize) -> Result<Prepared> {
    let rois = slice_rois(annotations, margin)?;
    let contexts: Vec<_> = annotations
        .slices()
        .par_iter()
        .map(|s| build_feature_context(&s.image))
        .collect();
    let matrix = FeatureMatrix::from_rois(&contexts, &rois)?;
    Ok(Prepared { rois, matrix })
}

/// Full pipeline: impute missing masks, score experts, fuse.
pub fn fuse(
    annotations: &AnnotationSet,
    config: &FusionConfig,
    forest: &ForestConfig,
    seed: u64,
) -> Result<FusionResult> {
    let prepared = prepare(annotations, config.roi_margin)?;
    let out = run_method(Method::Gcme, annotations, &prepared, config, forest, seed)?;
    Ok(out.fusion.expect("graph-cut methods produce a fusion result"))
}

/// Per-pixel majority of the present masks; ties take `tie_label`.
pub fn majority_vote(annotations: &AnnotationSet, tie_label: u8) -> Result<Vec<Mask>> {
    annotations
        .slices()
        .iter()
        .enumerate()
        .map(|(i, slice)| {
            let present: Vec<&Mask> = slice.present().collect();
            if present.is_empty() {
                return Err(Error::AllExpertsMissing { slice: i });
            }
            let (w, h) = slice.image.dims();
            Ok(Mask::from_fn(w, h, |x, y| {
                let ones = present.iter().filter(|m| m.get(x, y) == 1).count();
                let zeros = present.len() - ones;
                match ones.cmp(&zeros) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => tie_label == 1,
                }
            }))
        })
        .collect()
}

/// Fusion variants compared in benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Impute, score, fuse.
    Gcme,
    /// As `Gcme`, on a set the caller completed with the original masks.
    GcmeAll,
    /// Score and fuse the present masks only.
    GcmeWssl,
    /// Impute, then fuse with every expert trusted equally.
    GcmeWsc,
    /// Majority vote over the present masks.
    Mv,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Gcme,
        Method::GcmeAll,
        Method::GcmeWssl,
        Method::GcmeWsc,
        Method::Mv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gcme => "gcme",
            Method::GcmeAll => "gcme-all",
            Method::GcmeWssl => "gcme-wssl",
            Method::GcmeWsc => "gcme-wsc",
            Method::Mv => "mv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method {s:?}")))
    }
}

/// Score used for every expert when SC is disabled.
pub const UNIFORM_SC: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub consensus: Vec<Mask>,
    /// Annotations after imputation (the input when the method does not impute).
    pub completed: AnnotationSet,
    pub fusion: Option<FusionResult>,
}

pub fn run_method(
    method: Method,
    annotations: &AnnotationSet,
    prepared: &Prepared,
    config: &FusionConfig,
    forest: &ForestConfig,
    seed: u64,
) -> Result<MethodOutput> {
    let impute = || impute_missing_with_matrix(annotations, &prepared.matrix, forest, seed);
    let (completed, fusion) = match method {
        Method::Mv => {
            let consensus = majority_vote(annotations, config.tie_label)?;
            return Ok(MethodOutput {
                consensus,
                completed: annotations.clone(),
                fusion: None,
            });
        }
        Method::Gcme | Method::GcmeAll => {
            let completed = impute()?;
            let sc = self_consistency_with_matrix(&completed, &prepared.matrix, forest, seed)?;
            let f = fuse_with_scores(&completed, &prepared.rois, &sc, config)?;
            (completed, f)
        }
        Method::GcmeWssl => {
            let sc = self_consistency_with_matrix(annotations, &prepared.matrix, forest, seed)?;
            let f = fuse_with_scores(annotations, &prepared.rois, &sc, config)?;
            (annotations.clone(), f)
        }
        Method::GcmeWsc => {
            let completed = impute()?;
            let sc = ScReport::uniform(completed.experts(), UNIFORM_SC);
            let f = fuse_with_scores(&completed, &prepared.rois, &sc, config)?;
            (completed, f)
        }
    };
    Ok(MethodOutput {
        consensus: fusion.consensus.clone(),
        completed,
        fusion: Some(fusion),
    })
}
