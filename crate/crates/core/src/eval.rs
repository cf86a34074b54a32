//! Segmentation metrics, paired t-tests, report tables and the
//! train-on-consensus cross-validation harness.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::features::{build_feature_context, FeatureMatrix};
use crate::forest::{train_supervised, ForestConfig, SampleSet};
use crate::fusion::{auto_sigma, smoothness_weight};
use crate::graphcut::{grid_pairs_8, minimize_binary_mrf, Pairwise};
use crate::image::{compute_roi, AnnotatedSlice, ImageGrid, Mask, DEFAULT_ROI_MARGIN};

fn same_dims(a: &Mask, m: &Mask) -> Result<()> {
    if a.dims() != m.dims() {
        return Err(Error::DimensionMismatch {
            expected: m.dims(),
            found: a.dims(),
        });
    }
    Ok(())
}

fn intersection(a: &Mask, m: &Mask) -> usize {
    a.data()
        .iter()
        .zip(m.data())
        .filter(|(x, y)| **x == 1 && **y == 1)
        .count()
}

/// `2|A∩M| / (|A| + |M|)`; two empty masks score 1.
pub fn dice(a: &Mask, m: &Mask) -> Result<f64> {
    same_dims(a, m)?;
    let total = a.count() + m.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * intersection(a, m) as f64 / total as f64)
}

/// Foreground pixels with a 4-neighbor outside the mask or the image.
pub fn boundary(mask: &Mask) -> Vec<(usize, usize)> {
    mask.foreground()
        .filter(|&(x, y)| {
            let (x, y) = (x as isize, y as isize);
            [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .iter()
                .any(|(dx, dy)| mask.get_or_zero(x + dx, y + dy) == 0)
        })
        .collect()
}

const FAR: f64 = 1e20;

/// 1-D squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    v.push(0);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    for q in 1..n {
        loop {
            let p = v[v.len() - 1];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[v.len() - 1] {
                v.pop();
                z.pop();
                if v.is_empty() {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    z.push(f64::INFINITY);
                    break;
                }
            } else {
                v.push(q);
                *z.last_mut().unwrap() = s;
                z.push(f64::INFINITY);
                break;
            }
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest site.
pub fn squared_distance_transform(width: usize, height: usize, sites: &[(usize, usize)]) -> Vec<f64> {
    let mut grid = vec![FAR; width * height];
    for &(x, y) in sites {
        grid[y * width + x] = 0.0;
    }
    let (mut v, mut z) = (Vec::new(), Vec::new());
    let mut col = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = grid[y * width + x];
        }
        edt_1d(&col, &mut col_out, &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; width];
    for y in 0..height {
        let row = &grid[y * width..(y + 1) * width];
        edt_1d(row, &mut row_out, &mut v, &mut z);
        grid[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    grid
}

/// Symmetric Hausdorff distance between the boundaries of two masks.
pub fn hausdorff(a: &Mask, m: &Mask) -> Result<f64> {
    same_dims(a, m)?;
    if a.is_empty() || m.is_empty() {
        return Err(Error::UndefinedHausdorff);
    }
    let (w, h) = a.dims();
    let (ba, bm) = (boundary(a), boundary(m));
    let directed = |from: &[(usize, usize)], to: &[(usize, usize)]| {
        let dt = squared_distance_transform(w, h, to);
        from.iter().map(|&(x, y)| dt[y * w + x]).fold(0.0, f64::max)
    };
    Ok(directed(&ba, &bm).max(directed(&bm, &ba)).sqrt())
}

/// 4-connected component label per pixel (0 = background, then 1, 2, ...).
pub fn label_components(mask: &Mask) -> (Vec<u32>, usize) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut n = 0;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if mask.data()[start] == 0 || labels[start] != 0 {
            continue;
        }
        n += 1;
        labels[start] = n as u32;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let neighbors = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbors.into_iter().flatten() {
                if mask.data()[j] == 1 && labels[j] == 0 {
                    labels[j] = n as u32;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, n)
}

/// Number of 4-connected foreground components.
pub fn count_components(mask: &Mask) -> usize {
    label_components(mask).1
}

/// The largest 4-connected component (the first in raster order on ties).
pub fn largest_component(mask: &Mask) -> Mask {
    let (labels, n) = label_components(mask);
    if n <= 1 {
        return mask.clone();
    }
    let mut sizes = vec![0usize; n + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let best = (1..=n).max_by_key(|&l| (sizes[l], std::cmp::Reverse(l))).expect("n >= 1") as u32;
    let (w, h) = mask.dims();
    Mask::from_fn(w, h, |x, y| labels[y * w + x] == best)
}

pub fn centroid(mask: &Mask) -> Option<(f64, f64)> {
    let n = mask.count();
    if n == 0 {
        return None;
    }
    let (sx, sy) = mask
        .foreground()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x as f64, sy + y as f64));
    Some((sx / n as f64, sy / n as f64))
}

/// Distance from `origin` along `dir` to the farthest point of the ray in the
/// union of the mask's closed unit pixel squares, or `None` if the ray never
/// touches it. Pixel `(i, j)` covers `[i − 0.5, i + 0.5] × [j − 0.5, j + 0.5]`.
pub fn ray_exit(mask: &Mask, origin: (f64, f64), dir: (f64, f64)) -> Option<f64> {
    // the farthest point lies on the union's boundary, so boundary pixels suffice
    let mut best: Option<f64> = None;
    for (x, y) in boundary(mask) {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for (o, d, c) in [(origin.0, dir.0, x as f64), (origin.1, dir.1, y as f64)] {
            let (lo, hi) = (c - 0.5, c + 0.5);
            if d == 0.0 {
                if o < lo || o > hi {
                    t1 = -1.0;
                }
            } else {
                let (a, b) = ((lo - o) / d, (hi - o) / d);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t1 >= t0 {
            best = Some(best.map_or(t1, |b: f64| b.max(t1)));
        }
    }
    best
}

pub const RADIAL_RAYS: usize = 180;

/// Area and radial agreement of a segmentation `a` with a reference `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetinaMetrics {
    pub f: f64,
    pub s: f64,
    pub b: f64,
    /// Rays skipped because one of the masks was never hit.
    pub skipped_rays: usize,
}

/// F score, overlap S and mean radial error B (180 rays from M's centroid).
pub fn retina_metrics(a: &Mask, m: &Mask) -> Result<RetinaMetrics> {
    same_dims(a, m)?;
    for (name, mask) in [("segmentation", a), ("reference", m)] {
        if mask.is_empty() {
            return Err(Error::InvalidInput(format!("{name} mask is empty")));
        }
        let c = count_components(mask);
        if c != 1 {
            return Err(Error::InvalidInput(format!("{name} mask has {c} components")));
        }
    }
    let (f, s) = overlap_scores(a, m);
    let center = centroid(m).expect("non-empty");
    let mut sum = 0.0;
    let mut used = 0usize;
    for k in 0..RADIAL_RAYS {
        let phi = k as f64 * std::f64::consts::TAU / RADIAL_RAYS as f64;
        let dir = (phi.cos(), phi.sin());
        match (ray_exit(a, center, dir), ray_exit(m, center, dir)) {
            (Some(ra), Some(rm)) => {
                sum += (ra - rm).abs();
                used += 1;
            }
            _ => {}
        }
    }
    let b = if used == 0 { f64::NAN } else { sum / used as f64 };
    Ok(RetinaMetrics {
        f,
        s,
        b,
        skipped_rays: RADIAL_RAYS - used,
    })
}

fn overlap_scores(a: &Mask, m: &Mask) -> (f64, f64) {
    let inter = intersection(a, m) as f64;
    let (na, nm) = (a.count() as f64, m.count() as f64);
    let union = na + nm - inter;
    let s = if union == 0.0 { 1.0 } else { inter / union };
    let (p, r) = (
        if na == 0.0 { 0.0 } else { inter / na },
        if nm == 0.0 { 0.0 } else { inter / nm },
    );
    let f = if p + r == 0.0 { if union == 0.0 { 1.0 } else { 0.0 } } else { 2.0 * p * r / (p + r) };
    (f, s)
}

/// Every metric of a segmentation against a reference; undefined entries
/// are `None`. B is measured between the largest components of the masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dice: f64,
    pub hausdorff: Option<f64>,
    pub f: f64,
    pub s: f64,
    pub b: Option<f64>,
    pub both_empty: bool,
}

pub fn evaluate(a: &Mask, m: &Mask) -> Result<MetricReport> {
    let d = dice(a, m)?;
    let hausdorff = match hausdorff(a, m) {
        Ok(h) => Some(h),
        Err(Error::UndefinedHausdorff) => None,
        Err(e) => return Err(e),
    };
    let (f, s) = overlap_scores(a, m);
    let b = if a.is_empty() || m.is_empty() {
        None
    } else {
        retina_metrics(&largest_component(a), &largest_component(m))
            .ok()
            .map(|r| r.b)
            .filter(|b| b.is_finite())
    };
    Ok(MetricReport {
        dice: d,
        hausdorff,
        f,
        s,
        b,
        both_empty: a.is_empty() && m.is_empty(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub p: f64,
    pub t: f64,
    pub df: usize,
    /// Differences have zero spread; `p` is 1 for zero mean difference, else 0.
    pub degenerate: bool,
}

/// Two-sided paired t-test on `x − y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TTest> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "paired t-test needs two equal samples of at least 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = x.len() - 1;
    if var == 0.0 {
        return Ok(TTest {
            p: if mean == 0.0 { 1.0 } else { 0.0 },
            t: if mean == 0.0 { 0.0 } else { mean.signum() * f64::INFINITY },
            df,
            degenerate: true,
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Ok(TTest {
        p,
        t,
        df,
        degenerate: false,
    })
}

/// One CSV row: a case scored for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub case_id: String,
    pub method: String,
    pub report: MetricReport,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

/// `case_id,method,dice,hd,f,s,b`; undefined values are empty fields.
pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "case_id,method,dice,hd,f,s,b")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.case_id,
            r.method,
            r.report.dice,
            fmt_opt(r.report.hausdorff),
            r.report.f,
            r.report.s,
            fmt_opt(r.report.b)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat {
            mean,
            sd,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub dice: Option<Stat>,
    pub hd: Option<Stat>,
    pub f: Option<Stat>,
    pub s: Option<Stat>,
    pub b: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: BTreeMap<String, MethodSummary>,
    pub t_tests: Vec<PairTest>,
}

/// Per-method means and standard deviations plus paired t-tests on Dice and
/// Hausdorff between every pair of methods (over cases both define).
pub fn summarize(rows: &[MetricRow]) -> Summary {
    let mut by_method: BTreeMap<String, BTreeMap<String, MetricReport>> = BTreeMap::new();
    for r in rows {
        by_method
            .entry(r.method.clone())
            .or_default()
            .insert(r.case_id.clone(), r.report);
    }
    let column = |cases: &BTreeMap<String, MetricReport>, pick: &dyn Fn(&MetricReport) -> Option<f64>| {
        cases.values().filter_map(pick).collect::<Vec<_>>()
    };
    let methods = by_method
        .iter()
        .map(|(name, cases)| {
            (
                name.clone(),
                MethodSummary {
                    dice: Stat::of(&column(cases, &|r| Some(r.dice))),
                    hd: Stat::of(&column(cases, &|r| r.hausdorff)),
                    f: Stat::of(&column(cases, &|r| Some(r.f))),
                    s: Stat::of(&column(cases, &|r| Some(r.s))),
                    b: Stat::of(&column(cases, &|r| r.b)),
                },
            )
        })
        .collect();

    let names: Vec<&String> = by_method.keys().collect();
    let mut t_tests = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            for (metric, pick) in [
                ("dice", (|r: &MetricReport| Some(r.dice)) as fn(&MetricReport) -> Option<f64>),
                ("hd", |r: &MetricReport| r.hausdorff),
            ] {
                let (xa, xb): (Vec<f64>, Vec<f64>) = by_method[*a]
                    .iter()
                    .filter_map(|(case, ra)| {
                        let rb = by_method[*b].get(case)?;
                        Some((pick(ra)?, pick(rb)?))
                    })
                    .unzip();
                if let Ok(test) = paired_t_test(&xa, &xb) {
                    t_tests.push(PairTest {
                        a: (*a).clone(),
                        b: (*b).clone(),
                        metric: metric.into(),
                        test,
                    });
                }
            }
        }
    }
    Summary { methods, t_tests }
}

/// Deterministic k-fold partition of `0..n` (shuffled with `seed`).
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidInput(format!("{folds} folds for {n} cases")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (k, chunk) in out.iter_mut().enumerate() {
        let (lo, hi) = (k * n / folds, (k + 1) * n / folds);
        chunk.extend_from_slice(&order[lo..hi]);
        chunk.sort_unstable();
    }
    Ok(out)
}

/// Added to probabilities before taking logs.
pub const PROBABILITY_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub test_cases: Vec<usize>,
    pub predictions: Vec<Mask>,
    pub metrics: Vec<MetricReport>,
}

impl FoldReport {
    pub fn mean_dice(&self) -> f64 {
        self.metrics.iter().map(|m| m.dice).sum::<f64>() / self.metrics.len().max(1) as f64
    }
}

/// Cross-validates a consensus by training a supervised forest on the
/// consensus of the training cases and segmenting each test case with an
/// MRF whose unaries are `−ln(Pr + ε)`.
pub fn fsl_validate(
    images: &[ImageGrid],
    consensus: &[Mask],
    folds: usize,
    forest: &ForestConfig,
    lambda: f64,
    seed: u64,
) -> Result<Vec<FoldReport>> {
    if images.len() != consensus.len() {
        return Err(Error::InvalidInput(format!(
            "{} images for {} consensus masks",
            images.len(),
            consensus.len()
        )));
    }
    let assignment = fold_assignment(images.len(), folds, seed)?;
    let slices: Vec<AnnotatedSlice> = images
        .iter()
        .zip(consensus)
        .map(|(image, mask)| AnnotatedSlice {
            image: image.clone(),
            masks: vec![Some(mask.clone())],
        })
        .collect();
    let rois = slices
        .iter()
        .map(|s| compute_roi(s, DEFAULT_ROI_MARGIN))
        .collect::<Result<Vec<_>>>()?;
    let contexts: Vec<_> = images.par_iter().map(build_feature_context).collect();
    let matrix = FeatureMatrix::from_rois(&contexts, &rois)?;

    assignment
        .iter()
        .enumerate()
        .map(|(fold, test)| {
            let mut samples = SampleSet::new(&matrix);
            for case in (0..images.len()).filter(|c| test.binary_search(c).is_err()) {
                let (rows, roi) = matrix.block(case).expect("block per case");
                for (row, (x, y)) in rows.zip(roi.pixels()) {
                    samples.push(row, consensus[case].get(x, y), 0);
                }
            }
            let model = train_supervised(&samples, forest, seed.wrapping_add(fold as u64))?;
            let mut predictions = Vec::with_capacity(test.len());
            let mut metrics = Vec::with_capacity(test.len());
            for &case in test {
                let (rows, roi) = matrix.block(case).expect("block per case");
                let unary: Vec<[f64; 2]> = rows
                    .map(|r| {
                        let p = model.predict(matrix.row(r));
                        [
                            -(p[0] + PROBABILITY_EPSILON).ln(),
                            -(p[1] + PROBABILITY_EPSILON).ln(),
                        ]
                    })
                    .collect();
                let image = &images[case];
                let sigma = auto_sigma(image, &roi);
                let w = roi.width();
                let pairwise: Vec<Pairwise> = grid_pairs_8(w, roi.height())
                    .into_iter()
                    .map(|(u, v, dist)| {
                        let a = image.get(roi.x0 + u % w, roi.y0 + u / w);
                        let b = image.get(roi.x0 + v % w, roi.y0 + v / w);
                        Pairwise {
                            u,
                            v,
                            weight: lambda * smoothness_weight(a, b, dist, sigma),
                        }
                    })
                    .collect();
                let sol = minimize_binary_mrf(&unary, &pairwise)?;
                let (iw, ih) = image.dims();
                let mut mask = Mask::zeros(iw, ih);
                for ((x, y), &l) in roi.pixels().zip(&sol.labels) {
                    mask.set(x, y, l == 1);
                }
                metrics.push(evaluate(&mask, &consensus[case])?);
                predictions.push(mask);
            }
            Ok(FoldReport {
                fold,
                test_cases: test.clone(),
                predictions,
                metrics,
            })
        })
        .collect()
}

/// `fold,case,dice,hd,f,s,b`.
pub fn write_fold_csv<W: Write>(reports: &[FoldReport], case_ids: &[String], mut out: W) -> std::io::Result<()> {
    writeln!(out, "fold,case_id,dice,hd,f,s,b")?;
    for r in reports {
        for (&case, m) in r.test_cases.iter().zip(&r.metrics) {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.fold,
                case_ids[case],
                m.dice,
                fmt_opt(m.hausdorff),
                m.f,
                m.s,
                fmt_opt(m.b)
            )?;
        }
    }
    Ok(())
}
