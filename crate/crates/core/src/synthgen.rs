//! Synthetic benchmark: noisy two-level images with a known region, and
//! simulated experts who push runs of adjacent boundary points in or out.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, SliceEntry};
use crate::error::{Error, Result};
use crate::image::{ImageGrid, Mask};
use crate::pgm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Rectangle,
    Circle,
    Polygon,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Square, Shape::Rectangle, Shape::Circle, Shape::Polygon];
}

/// Explicit region geometry: a shape of the given bounding size centered at `(cx, cy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: Shape,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    /// Shapes drawn from uniformly when no explicit region is given.
    pub shapes: Vec<Shape>,
    /// Region size as a fraction of the smaller image side.
    pub region_fraction: [f64; 2],
    pub region: Option<Region>,
    pub fg_mean: [f64; 2],
    pub bg_mean: [f64; 2],
    pub noise_sigma: f64,
    pub n_experts: usize,
    pub displacement: [f64; 2],
    pub run_length: usize,
    /// Runs per expert; by default 2 below a 200 px perimeter, else 3.
    pub runs: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            shapes: Shape::ALL.to_vec(),
            region_fraction: [0.3, 0.5],
            region: None,
            fg_mean: [0.6, 0.8],
            bg_mean: [0.1, 0.3],
            noise_sigma: 0.1,
            n_experts: 3,
            displacement: [10.0, 20.0],
            run_length: 15,
            runs: None,
        }
    }
}

pub const MAX_ATTEMPTS: usize = 10;

fn ordered(r: [f64; 2], what: &str) -> Result<()> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} range {r:?} is not ordered")))
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        ordered(self.fg_mean, "foreground mean")?;
        ordered(self.bg_mean, "background mean")?;
        ordered(self.region_fraction, "region fraction")?;
        ordered(self.displacement, "displacement")?;
        if self.fg_mean[0] <= self.bg_mean[1] && self.bg_mean[0] <= self.fg_mean[1] {
            return Err(Error::InvalidInput("foreground and background mean ranges overlap".into()));
        }
        if self.displacement[0] < 0.0 {
            return Err(Error::InvalidInput("displacement bounds must be non-negative".into()));
        }
        if self.width < 4 || self.height < 4 || self.n_experts == 0 || self.run_length == 0 {
            return Err(Error::InvalidInput("degenerate synthetic spec".into()));
        }
        if self.region.is_none() && self.shapes.is_empty() {
            return Err(Error::InvalidInput("no shapes to draw from".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidInput("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Image, ground truth and one mask per simulated expert.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub image: ImageGrid,
    pub truth: Mask,
    pub experts: Vec<Mask>,
}

fn random_region(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Region {
    let side = spec.width.min(spec.height) as f64;
    let size = side * rng.gen_range(spec.region_fraction[0]..=spec.region_fraction[1]);
    let shape = *spec.shapes.choose(rng).expect("validated non-empty");
    let (width, height) = match shape {
        Shape::Rectangle => {
            let short = size * rng.gen_range(0.55..0.8);
            if rng.gen_bool(0.5) {
                (size, short)
            } else {
                (short, size)
            }
        }
        _ => (size, size),
    };
    let margin_x = width / 2.0 + 2.0;
    let margin_y = height / 2.0 + 2.0;
    let cx = rng.gen_range(margin_x..=(spec.width as f64 - 1.0 - margin_x).max(margin_x));
    let cy = rng.gen_range(margin_y..=(spec.height as f64 - 1.0 - margin_y).max(margin_y));
    Region {
        shape,
        cx,
        cy,
        width,
        height,
    }
}

/// Star-shaped polygon vertices around the region center.
fn polygon_vertices(region: &Region, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let n = rng.gen_range(5..=8);
    let mut angles: Vec<f64> = (0..n)
        .map(|k| {
            let base = k as f64 / n as f64 * std::f64::consts::TAU;
            base + rng.gen_range(-0.25..0.25) * std::f64::consts::TAU / n as f64
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
        .into_iter()
        .map(|a| {
            let r = rng.gen_range(0.7..=1.0);
            (
                region.cx + r * region.width / 2.0 * a.cos(),
                region.cy + r * region.height / 2.0 * a.sin(),
            )
        })
        .collect()
}

fn region_mask(spec: &SynthSpec, region: &Region, rng: &mut ChaCha8Rng) -> Result<Mask> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let (hw, hh) = (region.width / 2.0, region.height / 2.0);
    if region.width <= 0.0
        || region.height <= 0.0
        || region.cx - hw < 0.0
        || region.cy - hh < 0.0
        || region.cx + hw > w - 1.0
        || region.cy + hh > h - 1.0
    {
        return Err(Error::InvalidInput(format!(
            "region {region:?} does not fit a {}x{} image",
            spec.width, spec.height
        )));
    }
    let mask = match region.shape {
        Shape::Square | Shape::Rectangle => Mask::from_fn(spec.width, spec.height, |x, y| {
            (x as f64 - region.cx).abs() <= hw - 0.5 && (y as f64 - region.cy).abs() <= hh - 0.5
        }),
        Shape::Circle => Mask::from_fn(spec.width, spec.height, |x, y| {
            let (dx, dy) = ((x as f64 - region.cx) / hw, (y as f64 - region.cy) / hh);
            dx * dx + dy * dy <= 1.0
        }),
        Shape::Polygon => rasterize_polygon(&polygon_vertices(region, rng), spec.width, spec.height),
    };
    if mask.is_empty() {
        return Err(Error::InvalidInput("region covers no pixel".into()));
    }
    Ok(mask)
}

/// Noisy two-level image and its region mask.
pub fn generate_image(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<(ImageGrid, Mask)> {
    spec.validate()?;
    let region = match spec.region {
        Some(r) => r,
        None => random_region(spec, rng),
    };
    let mask = region_mask(spec, &region, rng)?;
    let fg = rng.gen_range(spec.fg_mean[0]..=spec.fg_mean[1]);
    let bg = rng.gen_range(spec.bg_mean[0]..=spec.bg_mean[1]);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let data = mask
        .data()
        .iter()
        .map(|&m| {
            let mu = if m == 1 { fg } else { bg };
            (mu + noise.sample(rng)).clamp(0.0, 1.0)
        })
        .collect();
    Ok((ImageGrid::new(spec.width, spec.height, data)?, mask))
}

const MOORE: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Ordered 8-connected outer boundary of the component containing the
/// first foreground pixel in raster order (clockwise on screen).
pub fn trace_boundary(mask: &Mask) -> Vec<(usize, usize)> {
    let Some(start) = mask.foreground().next() else {
        return Vec::new();
    };
    let fg = |p: (isize, isize)| mask.get_or_zero(p.0, p.1) == 1;
    let step = |p: (isize, isize), d: usize| (p.0 + MOORE[d].0, p.1 + MOORE[d].1);
    let direction = |from: (isize, isize), to: (isize, isize)| {
        MOORE
            .iter()
            .position(|&m| (from.0 + m.0, from.1 + m.1) == to)
            .expect("neighbors")
    };
    let origin = (start.0 as isize, start.1 as isize);
    let mut contour = vec![start];
    let mut cur = origin;
    // the raster scan reached the start from its background west neighbor
    let mut back = 0usize;
    let mut first_next = None;
    loop {
        let Some(d) = (1..=8).map(|k| (back + k) % 8).find(|&d| fg(step(cur, d))) else {
            return contour;
        };
        let next = step(cur, d);
        if cur == origin {
            match first_next {
                None => first_next = Some(next),
                Some(f) if f == next => break,
                _ => {}
            }
        }
        let previous = step(cur, (d + 7) % 8);
        back = direction(next, previous);
        cur = next;
        if cur != origin {
            contour.push((cur.0 as usize, cur.1 as usize));
        }
    }
    contour
}

/// Pixels whose centers lie inside the polygon (even-odd), plus every pixel
/// the polygon's edges pass through.
pub fn rasterize_polygon(points: &[(f64, f64)], width: usize, height: usize) -> Mask {
    let mut mask = Mask::zeros(width, height);
    let n = points.len();
    if n == 0 {
        return mask;
    }
    let mut xs = Vec::new();
    for y in 0..height {
        let py = y as f64;
        xs.clear();
        for i in 0..n {
            let (x0, y0) = points[i];
            let (x1, y1) = points[(i + 1) % n];
            if (y0 > py) != (y1 > py) {
                xs.push(x0 + (py - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let a = pair[0].ceil().max(0.0);
            let b = pair[1].floor().min(width as f64 - 1.0);
            if a > b {
                continue;
            }
            for x in a as usize..=b as usize {
                mask.set(x, y, true);
            }
        }
    }
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (x, y) = ((x0 + t * (x1 - x0)).round(), (y0 + t * (y1 - y0)).round());
            if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
    mask
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let orient = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    };
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// True if two non-adjacent edges of the closed polygon properly cross.
pub fn self_intersects(points: &[(f64, f64)]) -> bool {
    let n = points.len();
    if n < 4 {
        return false;
    }
    let bbox = |i: usize| {
        let (a, b) = (points[i], points[(i + 1) % n]);
        (a.0.min(b.0), a.1.min(b.1), a.0.max(b.0), a.1.max(b.1))
    };
    let boxes: Vec<_> = (0..n).map(bbox).collect();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (p, q) = (boxes[i], boxes[j]);
            if p.2 < q.0 || q.2 < p.0 || p.3 < q.1 || q.3 < p.1 {
                continue;
            }
            if segments_cross(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// Unit outward normals of a closed pixel contour, from a centered
/// difference over `k` points on either side.
fn outward_normals(contour: &[(usize, usize)], truth: &Mask) -> Vec<(f64, f64)> {
    let n = contour.len();
    let k = 2.min(n / 2).max(1);
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let a = contour[(i + n - k) % n];
            let b = contour[(i + k) % n];
            let (tx, ty) = (b.0 as f64 - a.0 as f64, b.1 as f64 - a.1 as f64);
            let len = (tx * tx + ty * ty).sqrt().max(1e-12);
            (ty / len, -tx / len)
        })
        .collect();
    // orient so that most normals point out of the region
    let outside = raw
        .iter()
        .zip(contour)
        .filter(|((nx, ny), &(x, y))| {
            let px = (x as f64 + 2.0 * nx).round() as isize;
            let py = (y as f64 + 2.0 * ny).round() as isize;
            truth.get_or_zero(px, py) == 0
        })
        .count();
    let sign = if 2 * outside >= n { 1.0 } else { -1.0 };
    raw.into_iter().map(|(x, y)| (sign * x, sign * y)).collect()
}

/// Perturbs the boundary of `truth`: disjoint runs of `run_length` adjacent
/// contour points move together along their mean outward normal by a
/// signed magnitude drawn from `±displacement`; the result is the filled
/// polygon through all contour points.
pub fn simulate_expert(truth: &Mask, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Mask> {
    spec.validate()?;
    if truth.is_empty() {
        return Err(Error::InvalidInput("ground truth is empty".into()));
    }
    if spec.displacement[1] == 0.0 {
        return Ok(truth.clone());
    }
    let contour = trace_boundary(truth);
    let n = contour.len();
    let normals = outward_normals(&contour, truth);
    let runs = spec.runs.unwrap_or(if n < 200 { 2 } else { 3 });
    let run_len = spec.run_length.min(n);
    let runs = runs.min(n / run_len).max(1);
    let (w, h) = truth.dims();

    for _ in 0..MAX_ATTEMPTS {
        // disjoint cyclic runs: pick ordered starts with room between them
        let mut starts: Vec<usize> = Vec::with_capacity(runs);
        let mut tries = 0;
        while starts.len() < runs && tries < 1000 {
            tries += 1;
            let s = rng.gen_range(0..n);
            let clash = starts.iter().any(|&t| {
                let gap = (s + n - t) % n;
                gap < run_len || n - gap < run_len
            });
            if !clash {
                starts.push(s);
            }
        }
        // each run moves rigidly along its mean outward normal
        let mut offset = vec![(0.0, 0.0); n];
        for &s in &starts {
            let magnitude = rng.gen_range(spec.displacement[0]..=spec.displacement[1]);
            let signed = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..run_len {
                let (nx, ny) = normals[(s + i) % n];
                mx += nx;
                my += ny;
            }
            let len = (mx * mx + my * my).sqrt().max(1e-12);
            for i in 0..run_len {
                offset[(s + i) % n] = (signed * mx / len, signed * my / len);
            }
        }
        let points: Vec<(f64, f64)> = contour
            .iter()
            .zip(&offset)
            .map(|(&(x, y), &(ox, oy))| {
                (
                    (x as f64 + ox).clamp(0.0, w as f64 - 1.0),
                    (y as f64 + oy).clamp(0.0, h as f64 - 1.0),
                )
            })
            .collect();
        if self_intersects(&points) {
            continue;
        }
        let mask = rasterize_polygon(&points, w, h);
        if !mask.is_empty() {
            return Ok(mask);
        }
    }
    Err(Error::PerturbationFailed {
        attempts: MAX_ATTEMPTS,
    })
}

/// Per-case generator: image stream plus one stream per expert.
fn case_rngs(seed: u64, case: usize, n_experts: usize) -> (ChaCha8Rng, Vec<ChaCha8Rng>) {
    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
        r.set_stream(case as u64);
        r
    };
    (stream(0), (1..=n_experts as u64).map(stream).collect())
}

pub fn generate_case(spec: &SynthSpec, seed: u64, case: usize) -> Result<SynthCase> {
    let (mut rng, expert_rngs) = case_rngs(seed, case, spec.n_experts);
    let (image, truth) = generate_image(spec, &mut rng)?;
    let experts = expert_rngs
        .into_iter()
        .map(|mut r| simulate_expert(&truth, spec, &mut r))
        .collect::<Result<_>>()?;
    Ok(SynthCase {
        image,
        truth,
        experts,
    })
}

pub fn generate_cases(n: usize, spec: &SynthSpec, seed: u64) -> Result<Vec<SynthCase>> {
    (0..n)
        .into_par_iter()
        .map(|i| generate_case(spec, seed, i))
        .collect()
}

/// Expert withheld on each case (`None` for complete cases).
pub fn withheld_experts(n: usize, n_experts: usize, missing_fraction: f64, seed: u64) -> Vec<Option<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..n)
        .map(|_| {
            let drop = rng.gen_bool(missing_fraction);
            let who = rng.gen_range(0..n_experts);
            drop.then_some(who)
        })
        .collect()
}

pub fn case_dir(i: usize) -> String {
    format!("case_{i:04}")
}

pub fn expert_id(k: usize) -> String {
    format!("expert_{k}")
}

/// Writes `n` cases under `out_dir` as `case_XXXX/{image,gt,expert_K,withheld_K}.pgm`
/// plus `manifest.json`, and returns the manifest.
pub fn generate_benchmark(
    out_dir: &Path,
    n: usize,
    spec: &SynthSpec,
    missing_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::InvalidInput("benchmark needs at least one case".into()));
    }
    if !(0.0..1.0).contains(&missing_fraction) {
        return Err(Error::InvalidInput(format!(
            "missing fraction {missing_fraction} outside [0, 1)"
        )));
    }
    spec.validate()?;
    let withheld = withheld_experts(n, spec.n_experts, missing_fraction, seed);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let slices = (0..n)
        .into_par_iter()
        .map(|i| {
            let case = generate_case(spec, seed, i)?;
            let dir_name = case_dir(i);
            let dir = out_dir.join(&dir_name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            pgm::write_image(&case.image, &dir.join("image.pgm"))?;
            pgm::write_mask(&case.truth, &dir.join("gt.pgm"))?;
            let masks = case
                .experts
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    if withheld[i] == Some(k) {
                        pgm::write_mask(m, &dir.join(format!("withheld_{k}.pgm")))?;
                        Ok(None)
                    } else {
                        let name = format!("{}.pgm", expert_id(k));
                        pgm::write_mask(m, &dir.join(&name))?;
                        Ok(Some(format!("{dir_name}/{name}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SliceEntry {
                image: format!("{dir_name}/image.pgm"),
                masks,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        dataset: "synthetic".into(),
        seed,
        experts: (0..spec.n_experts).map(expert_id).collect(),
        slices,
    };
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dice(a: &Mask, b: &Mask) -> f64 {
        let inter = a.data().iter().zip(b.data()).filter(|(x, y)| **x == 1 && **y == 1).count();
        2.0 * inter as f64 / (a.count() + b.count()) as f64
    }

    fn square_spec() -> SynthSpec {
        SynthSpec {
            region: Some(Region {
                shape: Shape::Square,
                cx: 63.5,
                cy: 63.5,
                width: 60.0,
                height: 60.0,
            }),
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_image_thresholds_to_mask() {
        let spec = SynthSpec {
            noise_sigma: 0.0,
            ..SynthSpec::default()
        };
        for seed in 0..8 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (img, mask) = generate_image(&spec, &mut rng).unwrap();
            let thresholded = Mask::from_fn(128, 128, |x, y| img.get(x, y) > 0.45);
            assert_eq!(thresholded, mask);
        }
    }

    #[test]
    fn foreground_mean_in_range() {
        let spec = SynthSpec {
            noise_sigma: 0.05,
            ..square_spec()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (img, mask) = generate_image(&spec, &mut rng).unwrap();
        assert!(mask.count() >= 400);
        let mean = mask.foreground().map(|(x, y)| img.get(x, y)).sum::<f64>() / mask.count() as f64;
        assert!((0.55..=0.85).contains(&mean), "{mean}");
        assert_eq!(mask.count(), 3600);
    }

    #[test]
    fn low_noise_ground_truth_recoverable_by_threshold() {
        let spec = SynthSpec {
            noise_sigma: 0.05,
            ..SynthSpec::default()
        };
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (img, mask) = generate_image(&spec, &mut rng).unwrap();
            let best = (1..20)
                .map(|t| {
                    let t = t as f64 / 20.0;
                    dice(&Mask::from_fn(128, 128, |x, y| img.get(x, y) > t), &mask)
                })
                .fold(0.0, f64::max);
            assert!(best > 0.98, "{best}");
        }
    }

    #[test]
    fn oversized_region_is_rejected() {
        let spec = SynthSpec {
            region: Some(Region {
                shape: Shape::Circle,
                cx: 10.0,
                cy: 10.0,
                width: 40.0,
                height: 40.0,
            }),
            ..SynthSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_image(&spec, &mut rng).is_err());
        let bad = SynthSpec {
            fg_mean: [0.2, 0.5],
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn same_seed_same_case() {
        let spec = SynthSpec::default();
        assert_eq!(generate_case(&spec, 5, 2).unwrap(), generate_case(&spec, 5, 2).unwrap());
        assert_ne!(generate_case(&spec, 5, 2).unwrap(), generate_case(&spec, 5, 3).unwrap());
    }

    #[test]
    fn boundary_trace_visits_every_boundary_pixel_once() {
        let spec = SynthSpec::default();
        for seed in 0..12 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, mask) = generate_image(&spec, &mut rng).unwrap();
            let contour = trace_boundary(&mask);
            for w in contour.windows(2) {
                let (dx, dy) = (w[0].0.abs_diff(w[1].0), w[0].1.abs_diff(w[1].1));
                assert!(dx <= 1 && dy <= 1 && dx + dy > 0);
            }
            let boundary: std::collections::HashSet<_> = mask
                .foreground()
                .filter(|&(x, y)| {
                    let (x, y) = (x as isize, y as isize);
                    [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .any(|(dx, dy)| mask.get_or_zero(x + dx, y + dy) == 0)
                })
                .collect();
            let traced: std::collections::HashSet<_> = contour.iter().copied().collect();
            assert!(boundary.is_subset(&traced), "seed {seed}");
            assert!(contour.len() <= traced.len() + 4, "seed {seed}");
        }
    }

    #[test]
    fn boundary_polygon_rasterizes_back_to_the_region() {
        let spec = SynthSpec::default();
        for seed in 0..12 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (_, mask) = generate_image(&spec, &mut rng).unwrap();
            let points: Vec<(f64, f64)> = trace_boundary(&mask)
                .into_iter()
                .map(|(x, y)| (x as f64, y as f64))
                .collect();
            assert_eq!(rasterize_polygon(&points, 128, 128), mask, "seed {seed}");
        }
    }

    #[test]
    fn zero_displacement_is_identity() {
        let spec = SynthSpec {
            displacement: [0.0, 0.0],
            ..square_spec()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, gt) = generate_image(&spec, &mut rng).unwrap();
        assert_eq!(simulate_expert(&gt, &spec, &mut rng).unwrap(), gt);
    }

    #[test]
    fn expert_dice_in_expected_band() {
        let spec = square_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, gt) = generate_image(&spec, &mut rng).unwrap();
        for seed in 0..100 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let e = simulate_expert(&gt, &spec, &mut r).unwrap();
            let d = dice(&e, &gt);
            assert!(d > 0.6 && d < 0.99, "seed {seed}: {d}");
        }
    }

    #[test]
    fn experts_differ_and_stay_near_the_boundary() {
        let spec = SynthSpec::default();
        for seed in 0..6 {
            let case = generate_case(&spec, seed, 0).unwrap();
            let e = &case.experts;
            assert_ne!(e[0], e[1]);
            assert_ne!(e[1], e[2]);
            assert_ne!(e[0], e[2]);
            let boundary = trace_boundary(&case.truth);
            for expert in e {
                for (i, (&a, &b)) in expert.data().iter().zip(case.truth.data()).enumerate() {
                    if a == b {
                        continue;
                    }
                    let (x, y) = (i % 128, i / 128);
                    let d = boundary
                        .iter()
                        .map(|&(bx, by)| {
                            let (dx, dy) = (bx as f64 - x as f64, by as f64 - y as f64);
                            dx * dx + dy * dy
                        })
                        .fold(f64::INFINITY, f64::min)
                        .sqrt();
                    assert!(d <= 25.0, "seed {seed}: pixel ({x},{y}) differs {d} px away");
                }
            }
        }
    }

    #[test]
    fn polygon_helpers() {
        let square = [(1.0, 1.0), (4.0, 1.0), (4.0, 4.0), (1.0, 4.0)];
        assert_eq!(rasterize_polygon(&square, 6, 6).count(), 16);
        assert!(!self_intersects(&square));
        let bowtie = [(1.0, 1.0), (4.0, 4.0), (4.0, 1.0), (1.0, 4.0)];
        assert!(self_intersects(&bowtie));
    }

    #[test]
    fn benchmark_layout_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            width: 64,
            height: 64,
            displacement: [4.0, 8.0],
            ..SynthSpec::default()
        };
        let m = generate_benchmark(a.path(), 6, &spec, 0.5, 17).unwrap();
        generate_benchmark(b.path(), 6, &spec, 0.5, 17).unwrap();
        assert_eq!(m.slices.len(), 6);
        assert_eq!(m.experts, vec!["expert_0", "expert_1", "expert_2"]);
        for (i, s) in m.slices.iter().enumerate() {
            let dir = a.path().join(case_dir(i));
            assert!(dir.join("gt.pgm").exists());
            for (k, mask) in s.masks.iter().enumerate() {
                let withheld = dir.join(format!("withheld_{k}.pgm"));
                assert_eq!(mask.is_none(), withheld.exists());
            }
        }
        for entry in walk(a.path()) {
            let rel = entry.strip_prefix(a.path()).unwrap();
            assert_eq!(fs::read(&entry).unwrap(), fs::read(b.path().join(rel)).unwrap());
        }
        let none = generate_benchmark(a.path(), 4, &spec, 0.0, 3).unwrap();
        assert_eq!(none.n_missing(), 0);
        assert!(generate_benchmark(a.path(), 4, &spec, 1.0, 3).is_err());
    }

    fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out
    }
}
