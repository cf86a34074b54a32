//! Self-consistency (SC) scores: how well each expert's labels can be
//! predicted from image features, measured through the information gain a
//! shared probe forest sees for that expert along its root-to-node paths.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureContext, FeatureMatrix};
use crate::forest::gain::gain_from_counts;
use crate::forest::{train_probe, ForestConfig, NodeKind, SampleSet, Tree, UNLABELED};
use crate::image::{AnnotationSet, Roi};

/// Per-expert SC scores plus probe forest metadata.
///
/// `raw` is the mean path performance over all split nodes. Because each
/// node estimate averages the gain of every candidate split, most of which
/// are uninformative, raw values are small in absolute terms; `scores`
/// rescales them so the most consistent expert gets 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScReport {
    pub experts: Vec<String>,
    pub scores: Vec<f64>,
    pub raw: Vec<f64>,
    /// `per_tree_q[r][t]`: mean path performance of expert `r` over the split
    /// nodes of tree `t` (NaN for a tree without splits).
    pub per_tree_q: Vec<Vec<f64>>,
    pub n_nodes: usize,
    pub n_trees: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ExpertScore {
    id: String,
    sc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    experts: Vec<ExpertScore>,
    n_nodes: usize,
    n_trees: usize,
    seed: u64,
}

impl ScReport {
    pub fn score(&self, expert: &str) -> Option<f64> {
        self.experts
            .iter()
            .position(|e| e == expert)
            .map(|i| self.scores[i])
    }

    /// Report with every score fixed to `value` (used by the SC-disabled ablation).
    pub fn uniform(experts: &[String], value: f64) -> Self {
        Self {
            experts: experts.to_vec(),
            scores: vec![value; experts.len()],
            raw: vec![value; experts.len()],
            per_tree_q: vec![Vec::new(); experts.len()],
            n_nodes: 0,
            n_trees: 0,
            seed: 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ReportDoc {
            experts: self
                .experts
                .iter()
                .zip(self.scores.iter().zip(&self.raw))
                .map(|(id, (&sc, &raw))| ExpertScore {
                    id: id.clone(),
                    sc,
                    raw: Some(raw),
                })
                .collect(),
            n_nodes: self.n_nodes,
            n_trees: self.n_trees,
            seed: self.seed,
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    /// Parses the JSON form. Per-tree values are not part of it and come back empty.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ReportDoc = serde_json::from_str(text)?;
        if let Some(e) = doc.experts.iter().find(|e| !(0.0..=1.0).contains(&e.sc)) {
            return Err(Error::InvalidInput(format!(
                "SC of {} is {} (outside [0,1])",
                e.id, e.sc
            )));
        }
        let n = doc.experts.len();
        Ok(Self {
            scores: doc.experts.iter().map(|e| e.sc).collect(),
            raw: doc.experts.iter().map(|e| e.raw.unwrap_or(e.sc)).collect(),
            experts: doc.experts.into_iter().map(|e| e.id).collect(),
            per_tree_q: vec![Vec::new(); n],
            n_nodes: doc.n_nodes,
            n_trees: doc.n_trees,
            seed: doc.seed,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Mean information gain of `expert`'s labels over the candidate splits
/// `(feature, threshold)`, each sending `value <= threshold` left.
pub fn node_gain_estimate(
    samples: &SampleSet<'_>,
    expert: u16,
    candidates: &[(usize, f64)],
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate splits".into()));
    }
    let own: Vec<usize> = (0..samples.len())
        .filter(|&i| samples.experts[i] == expert && samples.labels[i] != UNLABELED)
        .collect();
    if own.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "expert {expert} has {} labeled samples at the node",
            own.len()
        )));
    }
    let total: f64 = candidates
        .iter()
        .map(|&(f, t)| {
            let mut left = [0.0; 2];
            let mut right = [0.0; 2];
            for &i in &own {
                let side = if (samples.features.value(samples.rows[i], f) as f64) <= t {
                    &mut left
                } else {
                    &mut right
                };
                side[samples.labels[i] as usize] += 1.0;
            }
            gain_from_counts(left, right)
        })
        .sum();
    Ok(total / candidates.len() as f64)
}

/// Sample-size weighted mean of `expert`'s stored gain estimates along the
/// path from the root to `node` (inclusive).
pub fn path_performance(tree: &Tree, node: usize, expert: usize) -> Result<f64> {
    if node >= tree.nodes.len() {
        return Err(Error::InvalidInput(format!("node {node} does not exist")));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for id in tree.ancestry(node) {
        let n = &tree.nodes[id];
        let estimate = match &n.kind {
            NodeKind::Split { gain_estimates, .. } => gain_estimates.get(expert),
            NodeKind::Leaf { .. } => None,
        };
        let Some(&e) = estimate else {
            return Err(Error::InvalidInput(format!(
                "node {id} has no gain estimate for expert {expert}"
            )));
        };
        num += n.n_samples as f64 * e;
        den += n.n_samples as f64;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// SC scores from a probe forest grown on the ROI pixels of every slice.
/// Experts whose labels are single-class over the ROI score 0.
pub fn self_consistency(
    annotations: &AnnotationSet,
    contexts: &[FeatureContext],
    rois: &[Roi],
    config: &ForestConfig,
    seed: u64,
) -> Result<ScReport> {
    let matrix = FeatureMatrix::from_rois(contexts, rois)?;
    self_consistency_with_matrix(annotations, &matrix, config, seed)
}

/// [`self_consistency`] over a precomputed ROI feature matrix. A missing
/// mask contributes no labels for its expert on that slice.
pub fn self_consistency_with_matrix(
    annotations: &AnnotationSet,
    matrix: &FeatureMatrix,
    config: &ForestConfig,
    seed: u64,
) -> Result<ScReport> {
    let n_experts = annotations.n_experts();
    if n_experts == 0 {
        return Err(Error::InvalidInput("no experts".into()));
    }
    if matrix.n_slices() != annotations.slices().len() {
        return Err(Error::InvalidInput(format!(
            "feature matrix covers {} slices, annotations have {}",
            matrix.n_slices(),
            annotations.slices().len()
        )));
    }

    let mut rows = Vec::with_capacity(matrix.n_rows());
    let mut labels = Vec::with_capacity(matrix.n_rows() * n_experts);
    for (s, slice) in annotations.slices().iter().enumerate() {
        let (range, roi) = matrix.block(s).expect("block per slice");
        for (row, (x, y)) in range.zip(roi.pixels()) {
            rows.push(row);
            labels.extend(
                slice
                    .masks
                    .iter()
                    .map(|m| m.as_ref().map_or(UNLABELED, |m| m.get(x, y))),
            );
        }
    }

    let mut degenerate = vec![false; n_experts];
    for (r, flag) in degenerate.iter_mut().enumerate() {
        let mut seen = [false; 2];
        for l in labels.iter().skip(r).step_by(n_experts) {
            if *l != UNLABELED {
                seen[*l as usize] = true;
            }
        }
        if !(seen[0] && seen[1]) {
            log::warn!(
                "expert {} is single-class over the ROI; SC set to 0",
                annotations.experts()[r]
            );
            *flag = true;
        }
    }

    let forest = train_probe(matrix, &rows, &labels, n_experts, config, seed)?;

    let mut per_tree_q = vec![Vec::with_capacity(forest.trees.len()); n_experts];
    for tree in &forest.trees {
        let splits: Vec<usize> = (0..tree.nodes.len())
            .filter(|&i| !tree.nodes[i].is_leaf())
            .collect();
        for (r, qs) in per_tree_q.iter_mut().enumerate() {
            if splits.is_empty() {
                qs.push(f64::NAN);
                continue;
            }
            let mut sum = 0.0;
            for &j in &splits {
                sum += path_performance(tree, j, r)?;
            }
            qs.push(sum / splits.len() as f64);
        }
    }

    let raw: Vec<f64> = per_tree_q
        .iter()
        .zip(&degenerate)
        .map(|(qs, &degen)| {
            let valid: Vec<f64> = qs.iter().copied().filter(|q| q.is_finite()).collect();
            if degen || valid.is_empty() {
                0.0
            } else {
                (valid.iter().sum::<f64>() / valid.len() as f64).clamp(0.0, 1.0)
            }
        })
        .collect();
    let top = raw.iter().copied().fold(0.0, f64::max);
    let scores = raw
        .iter()
        .map(|&v| if top > 0.0 { v / top } else { 0.0 })
        .collect();
    if forest.trees.iter().all(|t| t.n_splits() == 0) {
        log::warn!("probe forest made no splits; all SC scores are 0");
    }

    Ok(ScReport {
        experts: annotations.experts().to_vec(),
        scores,
        raw,
        per_tree_q,
        n_nodes: forest.n_nodes(),
        n_trees: forest.trees.len(),
        seed,
    })
}
