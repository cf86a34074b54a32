//! Split criteria: labeled information gain and unlabeled differential-entropy gain.

use crate::error::{Error, Result};

/// Ridge added to node covariances.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Base-2 entropy of a binary class histogram.
#[inline]
pub fn binary_entropy(n0: f64, n1: f64) -> f64 {
    let n = n0 + n1;
    if n <= 0.0 {
        return 0.0;
    }
    let term = |c: f64| {
        if c <= 0.0 {
            0.0
        } else {
            let p = c / n;
            -p * p.log2()
        }
    };
    term(n0) + term(n1)
}

/// Information gain of splitting histogram `parent` into `left` and `right`.
#[inline]
pub fn gain_from_counts(left: [f64; 2], right: [f64; 2]) -> f64 {
    let nl = left[0] + left[1];
    let nr = right[0] + right[1];
    let n = nl + nr;
    if n <= 0.0 {
        return 0.0;
    }
    let g = binary_entropy(left[0] + right[0], left[1] + right[1])
        - nl / n * binary_entropy(left[0], left[1])
        - nr / n * binary_entropy(right[0], right[1]);
    g.max(0.0)
}

fn histogram(labels: &[u8]) -> Result<[f64; 2]> {
    let mut h = [0.0; 2];
    for &l in labels {
        match l {
            0 | 1 => h[l as usize] += 1.0,
            _ => return Err(Error::InvalidInput(format!("label {l} is not binary"))),
        }
    }
    Ok(h)
}

/// `H(parent) − |left|/|parent|·H(left) − |right|/|parent|·H(right)`, base 2.
pub fn info_gain(parent: &[u8], left: &[u8], right: &[u8]) -> Result<f64> {
    if parent.is_empty() {
        return Err(Error::InvalidInput("information gain of an empty node".into()));
    }
    let (p, l, r) = (histogram(parent)?, histogram(left)?, histogram(right)?);
    if p[0] != l[0] + r[0] || p[1] != l[1] + r[1] {
        return Err(Error::InvalidInput(
            "children do not partition the parent".into(),
        ));
    }
    Ok(gain_from_counts(l, r))
}

/// `log|Λ|` of the ridge-regularized covariance of `rows` over `subspace`;
/// sets with fewer than `dim + 1` rows fall back to `ε·I`.
pub fn log_det_covariance(rows: &[Vec<f64>], subspace: &[usize]) -> f64 {
    let d = subspace.len();
    if rows.len() < d + 1 {
        return d as f64 * COVARIANCE_RIDGE.ln();
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = subspace
        .iter()
        .map(|&f| rows.iter().map(|r| r[f]).sum::<f64>() / n)
        .collect();
    let mut cov = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            let di = r[subspace[i]] - mean[i];
            for j in 0..=i {
                cov[i * d + j] += di * (r[subspace[j]] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[i * d + j] /= n;
            cov[j * d + i] = cov[i * d + j];
        }
        cov[i * d + i] += COVARIANCE_RIDGE;
    }
    cholesky_log_det(&mut cov, d)
}

fn cholesky_log_det(a: &mut [f64], d: usize) -> f64 {
    let mut log_det = 0.0;
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        let l = s.max(f64::MIN_POSITIVE).sqrt();
        a[j * d + j] = l;
        log_det += 2.0 * l.ln();
        for i in j + 1..d {
            let mut t = a[i * d + j];
            for k in 0..j {
                t -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = t / l;
        }
    }
    log_det
}

/// Differential-entropy gain over feature rows:
/// `log|Λ(parent)| − Σ_{c∈{left,right}} |c|/|parent|·log|Λ(c)|`.
pub fn unlabeled_gain(
    parent: &[Vec<f64>],
    left: &[Vec<f64>],
    right: &[Vec<f64>],
    subspace: &[usize],
) -> Result<f64> {
    if subspace.is_empty() {
        return Err(Error::InvalidInput("empty feature subspace".into()));
    }
    if parent.len() < 2 {
        return Err(Error::InvalidInput(
            "unlabeled gain needs at least two parent rows".into(),
        ));
    }
    if left.len() + right.len() != parent.len() {
        return Err(Error::InvalidInput(
            "children do not partition the parent".into(),
        ));
    }
    let n = parent.len() as f64;
    Ok(log_det_covariance(parent, subspace)
        - left.len() as f64 / n * log_det_covariance(left, subspace)
        - right.len() as f64 / n * log_det_covariance(right, subspace))
}

/// Running first and second moments of a 1-D sample.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub n: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }

    #[inline]
    pub fn add(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    #[inline]
    pub fn sub(&self, o: &Moments) -> Moments {
        Moments {
            n: self.n - o.n,
            sum: self.sum - o.sum,
            sum_sq: self.sum_sq - o.sum_sq,
        }
    }

    /// `log(var + ε)`, or `log ε` below two samples.
    #[inline]
    pub fn log_var(&self) -> f64 {
        if self.n < 2.0 {
            return COVARIANCE_RIDGE.ln();
        }
        let mean = self.sum / self.n;
        let var = (self.sum_sq / self.n - mean * mean).max(0.0);
        (var + COVARIANCE_RIDGE).ln()
    }
}

/// One-dimensional form of [`unlabeled_gain`] from moment summaries.
#[inline]
pub(crate) fn unlabeled_gain_1d(left: &Moments, right: &Moments) -> f64 {
    let mut parent = *left;
    parent.add(right);
    if parent.n <= 0.0 {
        return 0.0;
    }
    parent.log_var() - left.n / parent.n * left.log_var() - right.n / parent.n * right.log_var()
}
