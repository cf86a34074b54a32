//! Random forests over pixel features: supervised, single-shot
//! semi-supervised, and the multi-label probe variant used for
//! self-consistency scoring.

pub mod gain;
mod impute;
mod serialize;
pub mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gain::{info_gain, unlabeled_gain};
pub use impute::{impute_missing, impute_missing_with_matrix};
pub use tree::{Node, NodeKind, Tree};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use tree::{bootstrap, grow_tree, tree_rngs, Objective, TrainData};

/// Label value marking a row without annotation.
pub const UNLABELED: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples: usize,
    /// Features drawn per node (`ceil(sqrt(181))` by default).
    pub candidate_features: usize,
    /// Quantile thresholds tried per candidate feature.
    pub thresholds: usize,
    /// Weight of the labeled gain in the semi-supervised objective.
    pub alpha: f64,
    /// Bootstrap size as a fraction of the training set, drawn with replacement.
    pub bagging_fraction: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 20,
            min_samples: 5,
            candidate_features: 14,
            thresholds: 10,
            alpha: 1.0,
            bagging_fraction: 1.0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_trees", self.n_trees),
            ("max_depth", self.max_depth),
            ("min_samples", self.min_samples),
            ("candidate_features", self.candidate_features),
            ("thresholds", self.thresholds),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("forest {name} must be >= 1")));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput("forest alpha must be >= 0".into()));
        }
        if !(self.bagging_fraction > 0.0) || !self.bagging_fraction.is_finite() {
            return Err(Error::InvalidInput(
                "bagging fraction must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Training samples: one row per (pixel, expert label) pair. The same
/// matrix row may appear several times with different labels.
#[derive(Debug, Clone)]
pub struct SampleSet<'a> {
    pub features: &'a FeatureMatrix,
    pub rows: Vec<usize>,
    /// `0`, `1` or [`UNLABELED`].
    pub labels: Vec<u8>,
    /// Expert that produced each label.
    pub experts: Vec<u16>,
}

impl<'a> SampleSet<'a> {
    pub fn new(features: &'a FeatureMatrix) -> Self {
        Self {
            features,
            rows: Vec::new(),
            labels: Vec::new(),
            experts: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, label: u8, expert: u16) {
        self.rows.push(row);
        self.labels.push(label);
        self.experts.push(expert);
    }

    /// One sample per matrix row with the given labels, expert 0.
    pub fn from_labels(features: &'a FeatureMatrix, labels: Vec<u8>) -> Self {
        let n = labels.len();
        Self {
            features,
            rows: (0..n).collect(),
            labels,
            experts: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for &l in &self.labels {
            if l < 2 {
                c[l as usize] += 1;
            }
        }
        c
    }

    pub fn n_unlabeled(&self) -> usize {
        self.labels.iter().filter(|&&l| l == UNLABELED).count()
    }

    fn labeled_only(&self) -> SampleSet<'a> {
        let mut out = SampleSet::new(self.features);
        for i in 0..self.len() {
            if self.labels[i] != UNLABELED {
                out.push(self.rows[i], self.labels[i], self.experts[i]);
            }
        }
        out
    }

    fn check(&self) -> Result<()> {
        if let Some(&r) = self.rows.iter().find(|&&r| r >= self.features.n_rows()) {
            return Err(Error::InvalidInput(format!("sample row {r} out of range")));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l > UNLABELED) {
            return Err(Error::InvalidInput(format!("invalid label {l}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForestKind {
    Supervised,
    SemiSupervised,
    Probe,
}

/// Trained ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub kind: ForestKind,
    pub config: ForestConfig,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean of per-tree leaf posteriors `(p0, p1)`.
    pub fn predict(&self, row: &[f32]) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for t in &self.trees {
            let p = t.posterior(row);
            acc[0] += p[0];
            acc[1] += p[1];
        }
        let n = acc[0] + acc[1];
        [acc[0] / n, acc[1] / n]
    }

    /// Posterior for an `f64` feature vector (rounded to the stored precision).
    pub fn predict_vector(&self, v: &[f64]) -> [f64; 2] {
        let row: Vec<f32> = v.iter().map(|&x| x as f32).collect();
        self.predict(&row)
    }

    /// Out-of-bag accuracy on the samples the forest was trained on: each
    /// labeled sample is scored by the trees whose bootstrap missed it.
    /// Samples in every bootstrap are skipped; `None` if none remain.
    pub fn oob_accuracy(&self, samples: &SampleSet<'_>) -> Option<f64> {
        let train = match self.kind {
            ForestKind::Supervised => samples.labeled_only(),
            _ => samples.clone(),
        };
        let n = train.len();
        let mut votes = vec![[0.0f64; 2]; n];
        for (t, tree) in self.trees.iter().enumerate() {
            let (mut boot_rng, _) = tree_rngs(self.seed, t);
            let mut in_bag = vec![false; n];
            for i in bootstrap(n, self.config.bagging_fraction, &mut boot_rng) {
                in_bag[i as usize] = true;
            }
            for i in (0..n).filter(|&i| !in_bag[i]) {
                let p = tree.posterior(train.features.row(train.rows[i]));
                votes[i][0] += p[0];
                votes[i][1] += p[1];
            }
        }
        let (mut hit, mut total) = (0usize, 0usize);
        for (i, v) in votes.iter().enumerate() {
            let l = train.labels[i];
            if l == UNLABELED || v[0] + v[1] == 0.0 {
                continue;
            }
            total += 1;
            hit += ((v[1] > v[0]) as u8 == l) as usize;
        }
        (total > 0).then(|| hit as f64 / total as f64)
    }

    pub fn n_nodes(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }
}

pub(crate) fn grow_forest(
    data: &TrainData<'_>,
    objective: Objective,
    kind: ForestKind,
    config: &ForestConfig,
    seed: u64,
) -> Result<Forest> {
    config.validate()?;
    if data.n_samples() == 0 {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let (mut boot_rng, node_rng) = tree_rngs(seed, t);
            let idx = bootstrap(data.n_samples(), config.bagging_fraction, &mut boot_rng);
            grow_tree(data, objective, config, idx, node_rng)
        })
        .collect();
    Ok(Forest {
        kind,
        config: config.clone(),
        seed,
        trees,
    })
}

/// Bagged trees maximizing labeled information gain. Unlabeled rows are ignored.
pub fn train_supervised(
    samples: &SampleSet<'_>,
    config: &ForestConfig,
    seed: u64,
) -> Result<Forest> {
    samples.check()?;
    let labeled = samples.labeled_only();
    let counts = labeled.class_counts();
    if labeled.len() < config.min_samples {
        return Err(Error::InvalidInput(format!(
            "{} labeled samples, need at least {}",
            labeled.len(),
            config.min_samples
        )));
    }
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::DegenerateLabels);
    }
    let data = TrainData {
        features: labeled.features,
        rows: &labeled.rows,
        labels: &labeled.labels,
        channels: 1,
    };
    grow_forest(&data, Objective::Supervised, ForestKind::Supervised, config, seed)
}

/// Single-pass semi-supervised forest: node objective is the differential
/// entropy gain of the candidate feature over all rows plus `alpha` times
/// the information gain of the labeled rows. Leaves keep labeled-class
/// histograms and fall back to the nearest labeled ancestor's.
pub fn train_ssl(samples: &SampleSet<'_>, config: &ForestConfig, seed: u64) -> Result<Forest> {
    samples.check()?;
    if samples.n_unlabeled() == 0 {
        log::warn!("semi-supervised training without unlabeled rows; using supervised gain");
        return train_supervised(samples, config, seed);
    }
    let counts = samples.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::DegenerateLabels);
    }
    let data = TrainData {
        features: samples.features,
        rows: &samples.rows,
        labels: &samples.labels,
        channels: 1,
    };
    grow_forest(
        &data,
        Objective::SemiSupervised {
            alpha: config.alpha,
        },
        ForestKind::SemiSupervised,
        config,
        seed,
    )
}

/// Multi-label probe forest. `labels` holds `channels` labels per entry of
/// `rows` (sample-major; [`UNLABELED`] allowed). Splits maximize the mean
/// per-channel information gain and every split node stores the mean gain of
/// each channel over all valid candidates.
pub fn train_probe(
    features: &FeatureMatrix,
    rows: &[usize],
    labels: &[u8],
    channels: usize,
    config: &ForestConfig,
    seed: u64,
) -> Result<Forest> {
    if channels == 0 || labels.len() != rows.len() * channels {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} rows and {} channels",
            labels.len(),
            rows.len(),
            channels
        )));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= features.n_rows()) {
        return Err(Error::InvalidInput(format!("sample row {r} out of range")));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > UNLABELED) {
        return Err(Error::InvalidInput(format!("invalid label {l}")));
    }
    let data = TrainData {
        features,
        rows,
        labels,
        channels,
    };
    grow_forest(&data, Objective::Probe, ForestKind::Probe, config, seed)
}
