//! Decision-tree storage and the shared node-growing engine.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gain::{gain_from_counts, unlabeled_gain_1d, Moments};
use super::{ForestConfig, UNLABELED};
use crate::features::FeatureMatrix;

/// Gains at or below this are treated as zero when deciding to stop.
const ZERO_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Per-channel mean information gain over the node's candidate set.
        /// Filled only by probe forests.
        gain_estimates: Vec<f64>,
    },
    Leaf {
        histogram: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<usize>,
    pub depth: usize,
    pub n_samples: usize,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// Nodes in an arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Leaf reached by a feature row.
    pub fn leaf_for(&self, row: &[f32]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i].kind {
                NodeKind::Leaf { .. } => return i,
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if (row[*feature] as f64) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Normalized leaf histogram for `row`; an empty histogram predicts (0.5, 0.5).
    pub fn posterior(&self, row: &[f32]) -> [f64; 2] {
        match self.nodes[self.leaf_for(row)].kind {
            NodeKind::Leaf { histogram } => {
                let n = histogram[0] + histogram[1];
                if n > 0.0 {
                    [histogram[0] / n, histogram[1] / n]
                } else {
                    [0.5, 0.5]
                }
            }
            NodeKind::Split { .. } => unreachable!("leaf_for returns a leaf"),
        }
    }

    /// Root-to-`node` chain, root first.
    pub fn ancestry(&self, node: usize) -> Vec<usize> {
        let mut chain = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }

    pub fn max_depth(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.depth)
            .max()
            .unwrap_or(0)
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }
}

/// Node objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Objective {
    /// Information gain on channel 0.
    Supervised,
    /// Differential-entropy gain on all rows plus `alpha` × labeled gain.
    SemiSupervised { alpha: f64 },
    /// Mean information gain over all channels; records per-channel estimates.
    Probe,
}

/// Training rows: matrix row indices plus `channels` labels per sample
/// (`0`, `1` or [`UNLABELED`]).
pub(crate) struct TrainData<'a> {
    pub features: &'a FeatureMatrix,
    pub rows: &'a [usize],
    pub labels: &'a [u8],
    pub channels: usize,
}

impl TrainData<'_> {
    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    fn label(&self, sample: usize, channel: usize) -> u8 {
        self.labels[sample * self.channels + channel]
    }
}

/// Seeds for tree `t`: bootstrap and node randomness use separate streams so
/// the bootstrap can be replayed for out-of-bag estimates.
pub(crate) fn tree_rngs(seed: u64, tree: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut boot = ChaCha8Rng::seed_from_u64(seed.wrapping_add(tree as u64));
    let mut nodes = boot.clone();
    boot.set_stream(0);
    nodes.set_stream(1);
    (boot, nodes)
}

/// Bootstrap sample (with replacement) of `round(fraction·n)` indices.
pub(crate) fn bootstrap(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let m = ((fraction * n as f64).round() as usize).max(1);
    (0..m).map(|_| rng.gen_range(0..n) as u32).collect()
}

struct CandidateStats {
    /// Per bucket (T+1 buckets): moments of the feature value.
    moments: Vec<Moments>,
    /// Per bucket, per channel: labeled class counts.
    counts: Vec<[f64; 2]>,
}

struct Grower<'a, 'd> {
    data: &'a TrainData<'d>,
    objective: Objective,
    config: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    values: Vec<f32>,
    sorted: Vec<f32>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_, '_> {
    fn histogram(&self, idx: &[u32]) -> [f64; 2] {
        let mut h = [0.0; 2];
        for &s in idx {
            for c in 0..self.data.channels {
                let l = self.data.label(s as usize, c);
                if l != UNLABELED {
                    h[l as usize] += 1.0;
                }
            }
        }
        h
    }

    fn grow(
        &mut self,
        idx: &mut [u32],
        depth: usize,
        parent: Option<usize>,
        inherited: [f64; 2],
    ) -> usize {
        let id = self.nodes.len();
        let hist = self.histogram(idx);
        let labeled = hist[0] + hist[1] > 0.0;
        let leaf_hist = if labeled { hist } else { inherited };
        self.nodes.push(Node {
            parent,
            depth,
            n_samples: idx.len(),
            kind: NodeKind::Leaf {
                histogram: leaf_hist,
            },
        });

        if depth >= self.config.max_depth || idx.len() < self.config.min_samples.max(2) {
            return id;
        }
        if self.objective == Objective::Supervised && (hist[0] == 0.0 || hist[1] == 0.0) {
            return id;
        }

        let (best, estimates) = self.find_split(idx);
        let Some(best) = best else { return id };
        if best.score <= ZERO_GAIN {
            return id;
        }

        let split = partition(idx, |s| {
            (self.data.features.value(self.data.rows[s as usize], best.feature) as f64)
                <= best.threshold
        });
        let (l_idx, r_idx) = idx.split_at_mut(split);
        let left = self.grow(l_idx, depth + 1, Some(id), leaf_hist);
        let right = self.grow(r_idx, depth + 1, Some(id), leaf_hist);
        self.nodes[id].kind = NodeKind::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            gain_estimates: estimates,
        };
        id
    }

    /// Best candidate split and, for probe forests, the per-channel mean gain
    /// over every valid candidate.
    fn find_split(&mut self, idx: &[u32]) -> (Option<BestSplit>, Vec<f64>) {
        let n_features = self.data.features.n_features();
        let k = self.config.candidate_features.min(n_features);
        let mut features = sample_indices(&mut self.rng, n_features, k).into_vec();
        features.sort_unstable();

        let channels = self.data.channels;
        let mut best: Option<BestSplit> = None;
        let mut estimate_sum = vec![0.0; channels];
        let mut n_candidates = 0usize;

        for &f in &features {
            let thresholds = self.thresholds(idx, f);
            if thresholds.is_empty() {
                continue;
            }
            let stats = self.bucket_stats(idx, &thresholds);
            let buckets = thresholds.len() + 1;
            let mut total = Moments::default();
            stats.moments.iter().for_each(|m| total.add(m));
            let mut total_counts = vec![[0.0; 2]; channels];
            for b in 0..buckets {
                for c in 0..channels {
                    total_counts[c][0] += stats.counts[b * channels + c][0];
                    total_counts[c][1] += stats.counts[b * channels + c][1];
                }
            }

            let mut left = Moments::default();
            let mut left_counts = vec![[0.0; 2]; channels];
            for (j, &t) in thresholds.iter().enumerate() {
                left.add(&stats.moments[j]);
                for c in 0..channels {
                    left_counts[c][0] += stats.counts[j * channels + c][0];
                    left_counts[c][1] += stats.counts[j * channels + c][1];
                }
                let right = total.sub(&left);
                if left.n < 1.0 || right.n < 1.0 {
                    continue;
                }
                let gain_of = |c: usize| {
                    let r = [
                        total_counts[c][0] - left_counts[c][0],
                        total_counts[c][1] - left_counts[c][1],
                    ];
                    gain_from_counts(left_counts[c], r)
                };
                let score = match self.objective {
                    Objective::Supervised => gain_of(0),
                    Objective::SemiSupervised { alpha } => {
                        unlabeled_gain_1d(&left, &right) + alpha * gain_of(0)
                    }
                    Objective::Probe => {
                        n_candidates += 1;
                        let mut mean = 0.0;
                        for (c, acc) in estimate_sum.iter_mut().enumerate() {
                            let g = gain_of(c);
                            *acc += g;
                            mean += g;
                        }
                        mean / channels as f64
                    }
                };
                if best.as_ref().map_or(true, |b| score > b.score) {
                    best = Some(BestSplit {
                        score,
                        feature: f,
                        threshold: t,
                    });
                }
            }
        }

        let estimates = if self.objective == Objective::Probe && n_candidates > 0 {
            estimate_sum
                .into_iter()
                .map(|s| s / n_candidates as f64)
                .collect()
        } else {
            Vec::new()
        };
        (best, estimates)
    }

    /// Uniform-quantile thresholds of feature `f` over the node: the split
    /// point between sorted positions `k·n/(T+1) − 1` and `k·n/(T+1)`.
    fn thresholds(&mut self, idx: &[u32], f: usize) -> Vec<f64> {
        let (features, rows) = (self.data.features, self.data.rows);
        self.values.clear();
        self.values
            .extend(idx.iter().map(|&s| features.value(rows[s as usize], f)));
        self.sorted.clear();
        self.sorted.extend_from_slice(&self.values);
        self.sorted.sort_unstable_by(f32::total_cmp);
        let n = self.sorted.len();
        let t = self.config.thresholds;
        let mut out = Vec::with_capacity(t);
        for k in 1..=t {
            let i = k * n / (t + 1);
            if i == 0 || i >= n {
                continue;
            }
            let (a, b) = (self.sorted[i - 1] as f64, self.sorted[i] as f64);
            out.push(if a < b { 0.5 * (a + b) } else { a });
        }
        out
    }

    /// Per-bucket statistics of the values gathered by [`Self::thresholds`].
    fn bucket_stats(&self, idx: &[u32], thresholds: &[f64]) -> CandidateStats {
        let buckets = thresholds.len() + 1;
        let channels = self.data.channels;
        let mut moments = vec![Moments::default(); buckets];
        let mut counts = vec![[0.0; 2]; buckets * channels];
        let need_moments = matches!(self.objective, Objective::SemiSupervised { .. });
        for (&s, &v) in idx.iter().zip(&self.values) {
            let v = v as f64;
            let b = thresholds.partition_point(|&t| t < v);
            if need_moments {
                moments[b].push(v);
            } else {
                moments[b].n += 1.0;
            }
            for c in 0..channels {
                let l = self.data.label(s as usize, c);
                if l != UNLABELED {
                    counts[b * channels + c][l as usize] += 1.0;
                }
            }
        }
        CandidateStats { moments, counts }
    }
}

/// Moves samples satisfying `pred` to the front; returns their count.
fn partition(idx: &mut [u32], mut pred: impl FnMut(u32) -> bool) -> usize {
    let mut split = 0;
    for i in 0..idx.len() {
        if pred(idx[i]) {
            idx.swap(i, split);
            split += 1;
        }
    }
    split
}

/// Grows one tree on the bootstrap sample `idx`.
pub(crate) fn grow_tree(
    data: &TrainData<'_>,
    objective: Objective,
    config: &ForestConfig,
    mut idx: Vec<u32>,
    rng: ChaCha8Rng,
) -> Tree {
    let mut grower = Grower {
        data,
        objective,
        config,
        rng,
        nodes: Vec::new(),
        values: Vec::new(),
        sorted: Vec::new(),
    };
    grower.grow(&mut idx, 0, None, [0.0, 0.0]);
    Tree {
        nodes: grower.nodes,
    }
}
