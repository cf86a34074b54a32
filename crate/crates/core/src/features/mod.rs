//! Per-pixel 181-dimensional features.
//!
//! Layout of a [`FeatureVector`]:
//!
//! | range       | content                                                    |
//! |-------------|------------------------------------------------------------|
//! | `0..4`      | mean, variance, skewness, kurtosis of the 31×31 patch      |
//! | `4..76`     | sector entropies of the 8 Gabor maps (map-major, 9 each)   |
//! | `76..85`    | sector entropies of the mean-curvature map                 |
//! | `85..181`   | context: 8 rays × 4 radii × (intensity, texture, curvature)|
//!
//! Gabor maps are ordered scale-major (`0.5` then `1`), orientation-minor
//! (`0°, 45°, 90°, 135°`). Borders use mirror padding throughout.

pub mod curvature;
pub mod gabor;

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{mirror_index, normalize_min_max, ImageGrid, Roi};

pub const N_FEATURES: usize = 181;
pub const N_TEXTURE_MAPS: usize = 8;
pub const N_SECTORS: usize = 9;
pub const PATCH_RADIUS: usize = 15;
pub const HISTOGRAM_BINS: usize = 16;
pub const CONTEXT_RADII: [f64; 4] = [3.0, 8.0, 15.0, 22.0];
pub const CONTEXT_RAYS: usize = 8;

pub const INTENSITY_RANGE: std::ops::Range<usize> = 0..4;
pub const TEXTURE_RANGE: std::ops::Range<usize> = 4..76;
pub const CURVATURE_RANGE: std::ops::Range<usize> = 76..85;
pub const CONTEXT_RANGE: std::ops::Range<usize> = 85..181;

/// Texture map used by the context features: 90° at scale 1.
pub const CONTEXT_TEXTURE_MAP: usize = gabor::map_index(1, 2);

// context reaches 22 px plus a 3×3 window; patches reach 15 px
const PAD: usize = 24;

pub type FeatureVector = [f64; N_FEATURES];

/// Anything that can be sampled at signed pixel coordinates.
pub trait Sample {
    fn at(&self, x: isize, y: isize) -> f64;
}

impl Sample for ImageGrid {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        self.get_mirrored(x, y)
    }
}

/// A scalar map stored with a mirrored border of `PAD` pixels.
#[derive(Debug, Clone)]
pub struct PaddedMap {
    width: usize,
    height: usize,
    stride: usize,
    data: Vec<f64>,
}

impl PaddedMap {
    pub fn new(values: &[f64], width: usize, height: usize) -> Self {
        let stride = width + 2 * PAD;
        let mut data = Vec::with_capacity(stride * (height + 2 * PAD));
        for y in 0..(height + 2 * PAD) as isize {
            let sy = mirror_index(y - PAD as isize, height);
            for x in 0..stride as isize {
                data.push(values[sy * width + mirror_index(x - PAD as isize, width)]);
            }
        }
        Self {
            width,
            height,
            stride,
            data,
        }
    }

    /// Unpadded values in raster order.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            let start = (y + PAD) * self.stride + PAD;
            out.extend_from_slice(&self.data[start..start + self.width]);
        }
        out
    }
}

impl Sample for PaddedMap {
    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let (px, py) = (x + PAD as isize, y + PAD as isize);
        if px >= 0 && py >= 0 && (px as usize) < self.stride && (py as usize) < self.height + 2 * PAD {
            self.data[py as usize * self.stride + px as usize]
        } else {
            self.data[(mirror_index(y, self.height) + PAD) * self.stride
                + mirror_index(x, self.width)
                + PAD]
        }
    }
}

/// Nine 40° sectors of the radius-15 disk; the center pixel joins sector 0.
#[derive(Debug, Clone)]
pub struct SectorTemplate {
    sectors: Vec<Vec<(isize, isize)>>,
}

impl SectorTemplate {
    pub fn new(radius: usize, n_sectors: usize) -> Self {
        let r = radius as isize;
        let mut sectors = vec![Vec::new(); n_sectors];
        let width = 2.0 * PI / n_sectors as f64;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let idx = if dx == 0 && dy == 0 {
                    0
                } else {
                    let a = (dy as f64).atan2(dx as f64).rem_euclid(2.0 * PI);
                    ((a / width) as usize).min(n_sectors - 1)
                };
                sectors[idx].push((dx, dy));
            }
        }
        Self { sectors }
    }

    pub fn sectors(&self) -> &[Vec<(isize, isize)>] {
        &self.sectors
    }
}

impl Default for SectorTemplate {
    fn default() -> Self {
        Self::new(PATCH_RADIUS, N_SECTORS)
    }
}

/// Base-2 Shannon entropy of a `bins`-bin histogram of values in `[0, 1]`.
pub fn histogram_entropy(values: impl IntoIterator<Item = f64>, bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    let mut n = 0usize;
    for v in values {
        counts[bin_of(v, bins)] += 1;
        n += 1;
    }
    entropy_of_counts(&counts, n)
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64).max(0.0) as usize).min(bins - 1)
}

fn entropy_of_counts(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Entropy of the map's value histogram in each sector around `(cx, cy)`.
pub fn sector_entropy<M: Sample>(
    map: &M,
    cx: usize,
    cy: usize,
    template: &SectorTemplate,
    bins: usize,
) -> [f64; N_SECTORS] {
    let mut out = [0.0; N_SECTORS];
    let mut counts = vec![0usize; bins];
    for (slot, sector) in out.iter_mut().zip(template.sectors()) {
        counts.iter_mut().for_each(|c| *c = 0);
        for &(dx, dy) in sector {
            counts[bin_of(map.at(cx as isize + dx, cy as isize + dy), bins)] += 1;
        }
        *slot = entropy_of_counts(&counts, sector.len());
    }
    out
}

/// Mean, variance, skewness and kurtosis of the 31×31 patch at `(cx, cy)`.
/// Variance, skewness and kurtosis are 0 when the variance is below `1e-12`.
pub fn intensity_stats<M: Sample>(image: &M, cx: usize, cy: usize) -> [f64; 4] {
    let r = PATCH_RADIUS as isize;
    let (cx, cy) = (cx as isize, cy as isize);
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut sum = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            sum += image.at(cx + dx, cy + dy);
        }
    }
    let mean = sum / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for dy in -r..=r {
        for dx in -r..=r {
            let d = image.at(cx + dx, cy + dy) - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 < 1e-12 {
        return [mean, 0.0, 0.0, 0.0];
    }
    [mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2)]
}

/// Intensity, texture and curvature maps of one image, each in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    image: PaddedMap,
    texture: Vec<PaddedMap>,
    curvature: PaddedMap,
    template: SectorTemplate,
}

impl FeatureContext {
    pub fn dims(&self) -> (usize, usize) {
        (self.image.width, self.image.height)
    }

    pub fn intensity(&self) -> &PaddedMap {
        &self.image
    }

    /// Texture map `i` (see [`gabor::map_index`]).
    pub fn texture(&self, i: usize) -> &PaddedMap {
        &self.texture[i]
    }

    pub fn curvature(&self) -> &PaddedMap {
        &self.curvature
    }

    pub fn template(&self) -> &SectorTemplate {
        &self.template
    }
}

/// Filters the image with the Gabor bank and the curvature operator and
/// min-max normalizes every map.
pub fn build_feature_context(image: &ImageGrid) -> FeatureContext {
    let (w, h) = image.dims();
    let mut texture = Vec::with_capacity(N_TEXTURE_MAPS);
    for &scale in &gabor::SCALES {
        for &orientation in &gabor::ORIENTATIONS_DEG {
            let raw = gabor::gabor_magnitude(image, orientation, scale);
            texture.push(PaddedMap::new(&normalize_min_max(&raw), w, h));
        }
    }
    let curvature = normalize_min_max(&curvature::mean_curvature(image));
    FeatureContext {
        image: PaddedMap::new(image.data(), w, h),
        texture,
        curvature: PaddedMap::new(&curvature, w, h),
        template: SectorTemplate::default(),
    }
}

fn window_mean<M: Sample>(map: &M, x: isize, y: isize) -> f64 {
    let mut s = 0.0;
    for dy in -1..=1 {
        for dx in -1..=1 {
            s += map.at(x + dx, y + dy);
        }
    }
    s / 9.0
}

/// Offsets of the 32 context sample points, ray-major then radius.
pub fn context_offsets() -> [(isize, isize); CONTEXT_RAYS * 4] {
    let mut out = [(0, 0); CONTEXT_RAYS * 4];
    for ray in 0..CONTEXT_RAYS {
        let a = ray as f64 * PI / 4.0;
        for (k, &r) in CONTEXT_RADII.iter().enumerate() {
            out[ray * 4 + k] = ((r * a.cos()).round() as isize, (r * a.sin()).round() as isize);
        }
    }
    out
}

/// 3×3 means of intensity, 90°/scale-1 texture and curvature at the 32
/// context points, ordered ray-major, radius-minor, then channel.
pub fn context_features(ctx: &FeatureContext, cx: usize, cy: usize) -> [f64; 96] {
    let mut out = [0.0; 96];
    let tex = ctx.texture(CONTEXT_TEXTURE_MAP);
    for (i, (dx, dy)) in context_offsets().into_iter().enumerate() {
        let (x, y) = (cx as isize + dx, cy as isize + dy);
        out[3 * i] = window_mean(&ctx.image, x, y);
        out[3 * i + 1] = window_mean(tex, x, y);
        out[3 * i + 2] = window_mean(&ctx.curvature, x, y);
    }
    out
}

/// Full 181-value descriptor of pixel `(cx, cy)`.
pub fn feature_vector(ctx: &FeatureContext, cx: usize, cy: usize) -> FeatureVector {
    let mut v = [0.0; N_FEATURES];
    v[INTENSITY_RANGE].copy_from_slice(&intensity_stats(&ctx.image, cx, cy));
    for (m, map) in ctx.texture.iter().enumerate() {
        let start = TEXTURE_RANGE.start + m * N_SECTORS;
        v[start..start + N_SECTORS].copy_from_slice(&sector_entropy(
            map,
            cx,
            cy,
            &ctx.template,
            HISTOGRAM_BINS,
        ));
    }
    v[CURVATURE_RANGE].copy_from_slice(&sector_entropy(
        &ctx.curvature,
        cx,
        cy,
        &ctx.template,
        HISTOGRAM_BINS,
    ));
    v[CONTEXT_RANGE].copy_from_slice(&context_features(ctx, cx, cy));
    v
}

/// Where a feature row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRef {
    pub slice: u32,
    pub x: u32,
    pub y: u32,
}

/// Dense feature rows (stored as `f32`) with a pixel index map. Rows built
/// from images have [`N_FEATURES`] columns.
#[derive(Debug, Clone, Default)]
pub struct FeatureMatrix {
    width: usize,
    data: Vec<f32>,
    pixels: Vec<PixelRef>,
    /// Row offset of each slice's ROI block, with the ROI used.
    blocks: Vec<(usize, Roi)>,
}

impl FeatureMatrix {
    /// Rows for every ROI pixel of every slice, slice-major, raster order.
    pub fn from_rois(contexts: &[FeatureContext], rois: &[Roi]) -> Result<Self> {
        if contexts.len() != rois.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature contexts for {} ROIs",
                contexts.len(),
                rois.len()
            )));
        }
        let mut pixels = Vec::new();
        let mut blocks = Vec::with_capacity(rois.len());
        for (s, (ctx, roi)) in contexts.iter().zip(rois).enumerate() {
            let (w, h) = ctx.dims();
            if roi.x1 >= w || roi.y1 >= h {
                return Err(Error::InvalidInput(format!("ROI {roi:?} outside image {w}x{h}")));
            }
            blocks.push((pixels.len(), *roi));
            pixels.extend(roi.pixels().map(|(x, y)| PixelRef {
                slice: s as u32,
                x: x as u32,
                y: y as u32,
            }));
        }
        let mut data = vec![0f32; pixels.len() * N_FEATURES];
        data.par_chunks_mut(N_FEATURES)
            .zip(pixels.par_iter())
            .for_each(|(row, p)| {
                let v = feature_vector(&contexts[p.slice as usize], p.x as usize, p.y as usize);
                for (dst, src) in row.iter_mut().zip(v) {
                    *dst = src as f32;
                }
            });
        Ok(Self {
            width: N_FEATURES,
            data,
            pixels,
            blocks,
        })
    }

    /// Builds a matrix from explicit rows (no pixel provenance).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("empty or ragged feature rows".into()));
        }
        Ok(Self {
            width,
            data: rows.iter().flatten().map(|&v| v as f32).collect(),
            pixels: Vec::new(),
            blocks: Vec::new(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.width
    }

    pub fn n_rows(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f32 {
        self.data[row * self.width + feature]
    }

    pub fn pixels(&self) -> &[PixelRef] {
        &self.pixels
    }

    /// Row of pixel `(x, y)` on `slice`, if it lies in that slice's ROI.
    pub fn row_of(&self, slice: usize, x: usize, y: usize) -> Option<usize> {
        let (offset, roi) = self.blocks.get(slice)?;
        roi.contains(x, y).then(|| offset + roi.local_index(x, y))
    }

    /// Row range and ROI of a slice.
    pub fn block(&self, slice: usize) -> Option<(std::ops::Range<usize>, Roi)> {
        let (offset, roi) = *self.blocks.get(slice)?;
        Some((offset..offset + roi.len(), roi))
    }

    pub fn n_slices(&self) -> usize {
        self.blocks.len()
    }
}

/// Writes `px,py,f0,...,f180` rows for the given pixels.
pub fn write_feature_csv<W: Write>(
    out: &mut W,
    ctx: &FeatureContext,
    pixels: impl IntoIterator<Item = (usize, usize)>,
) -> std::io::Result<()> {
    write!(out, "px,py")?;
    for i in 0..N_FEATURES {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for (x, y) in pixels {
        write!(out, "{x},{y}")?;
        for v in feature_vector(ctx, x, y) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ImageGrid {
        let data = (0..w * h).map(|i| f(i % w, i / w)).collect();
        ImageGrid::new(w, h, data).unwrap()
    }

    #[test]
    fn template_partitions_disk_into_nine_sectors() {
        let t = SectorTemplate::default();
        assert_eq!(t.sectors().len(), 9);
        let mut all: Vec<_> = t.sectors().iter().flatten().copied().collect();
        let total = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), total, "sectors overlap");
        let disk = (-15..=15isize)
            .flat_map(|y| (-15..=15isize).map(move |x| (x, y)))
            .filter(|(x, y)| x * x + y * y <= 225)
            .count();
        assert_eq!(total, disk);
        assert!(t.sectors()[0].contains(&(0, 0)));
        // 40° wedges are roughly equal in size
        for s in t.sectors() {
            assert!((s.len() as f64 - disk as f64 / 9.0).abs() < 12.0, "{}", s.len());
        }
    }

    #[test]
    fn entropy_edge_values() {
        assert_eq!(histogram_entropy([0.3; 20], 16), 0.0);
        let uniform = (0..32).map(|i| (i / 2) as f64 / 16.0 + 0.01);
        assert!((histogram_entropy(uniform, 16) - 4.0).abs() < 1e-12);
        let two = (0..10).map(|i| if i % 2 == 0 { 0.05 } else { 0.95 });
        assert!((histogram_entropy(two, 16) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_patch_stats() {
        let img = image(40, 40, |_, _| 0.4);
        let s = intensity_stats(&img, 20, 20);
        assert!((s[0] - 0.4).abs() < 1e-12);
        assert_eq!(&s[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_and_half_patch_matches_bernoulli_moments() {
        // alternating columns: 16 of the 31 patch columns are 1, so the moments
        // sit next to Bernoulli(0.5)'s (0.5, 0.25, 0, 1); checked exactly by
        // direct summation
        let img = image(64, 64, |x, _| (x % 2) as f64);
        let got = intensity_stats(&img, 32, 32);
        let vals: Vec<f64> = (17..=47).flat_map(|x| (0..31).map(move |_| (x % 2) as f64)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let m = |k: i32| vals.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
        let expect = [mean, m(2), m(3) / m(2).powf(1.5), m(4) / (m(2) * m(2))];
        for (g, e) in got.iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!((got[0] - 0.5).abs() < 0.02 && (got[1] - 0.25).abs() < 0.001);
        assert!(got[2].abs() < 0.07 && (got[3] - 1.0).abs() < 0.01);
    }

    #[test]
    fn asymmetric_patch_is_right_skewed() {
        let img = image(64, 64, |x, y| if x % 2 == 0 && y % 2 == 0 { 1.0 } else { 0.0 });
        assert!(intensity_stats(&img, 30, 30)[2] > 0.0);
    }

    #[test]
    fn constant_image_context() {
        let img = image(50, 50, |_, _| 0.7);
        let ctx = build_feature_context(&img);
        for i in 0..N_TEXTURE_MAPS {
            assert!(ctx.texture(i).values().iter().all(|&v| v == 0.0));
        }
        let c = context_features(&ctx, 25, 25);
        for k in 0..32 {
            assert!((c[3 * k] - 0.7).abs() < 1e-12);
            assert_eq!(c[3 * k + 1], 0.0);
            assert_eq!(c[3 * k + 2], 0.0);
        }
    }

    #[test]
    fn corner_pixel_features_are_finite() {
        let img = image(40, 30, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let ctx = build_feature_context(&img);
        for (x, y) in [(0, 0), (39, 0), (0, 29), (39, 29)] {
            assert!(feature_vector(&ctx, x, y).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn step_edge_context_sees_both_halves() {
        let img = image(80, 80, |x, _| if x >= 40 { 0.9 } else { 0.1 });
        let ctx = build_feature_context(&img);
        let c = context_features(&ctx, 40, 40);
        // direct 3×3 averages at the radius-15 points of rays 0 (east) and 4 (west)
        let direct = |px: isize, py: isize| {
            let mut s = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    s += img.get_mirrored(px + dx, py + dy);
                }
            }
            s / 9.0
        };
        let east = c[3 * (2)];
        let west = c[3 * (4 * 4 + 2)];
        assert!((east - direct(55, 40)).abs() < 1e-12);
        assert!((west - direct(25, 40)).abs() < 1e-12);
        assert!(east > west + 0.5);
    }

    #[test]
    fn texture_block_is_map_major_sector_entropies() {
        let img = image(60, 60, |x, y| ((x * x + 3 * y) % 17) as f64 / 16.0);
        let ctx = build_feature_context(&img);
        let v = feature_vector(&ctx, 30, 28);
        assert_eq!(v.len(), 181);
        let mut manual = Vec::new();
        for m in 0..N_TEXTURE_MAPS {
            manual.extend(sector_entropy(ctx.texture(m), 30, 28, ctx.template(), 16));
        }
        assert_eq!(&v[TEXTURE_RANGE], &manual[..]);
        let curv = sector_entropy(ctx.curvature(), 30, 28, ctx.template(), 16);
        assert_eq!(&v[CURVATURE_RANGE], &curv[..]);
        for e in &v[4..85] {
            assert!((0.0..=4.0).contains(e));
        }
    }

    #[test]
    fn identical_images_give_identical_vectors() {
        let img = image(48, 48, |x, y| ((x ^ y) % 5) as f64 / 4.0);
        let a = build_feature_context(&img);
        let b = build_feature_context(&img.clone());
        assert_eq!(feature_vector(&a, 10, 33), feature_vector(&b, 10, 33));
    }

    #[test]
    fn translation_consistency_away_from_borders() {
        // flat canvas with a textured island: map extremes sit on the island,
        // which both crops contain in full
        let canvas = |x: usize, y: usize| {
            if (45..75).contains(&x) && (45..75).contains(&y) {
                0.5 + 0.4 * ((x as f64 * 0.7).sin() * (y as f64 * 0.45).cos())
            } else {
                0.3
            }
        };
        let a = image(100, 100, |x, y| canvas(x + 10, y + 10));
        let b = image(100, 100, |x, y| canvas(x + 4, y + 13));
        let (ca, cb) = (build_feature_context(&a), build_feature_context(&b));
        for (gx, gy) in [(60usize, 60usize), (52, 66), (70, 49)] {
            let va = feature_vector(&ca, gx - 10, gy - 10);
            let vb = feature_vector(&cb, gx - 4, gy - 13);
            for (i, (p, q)) in va.iter().zip(&vb).enumerate() {
                assert!((p - q).abs() < 1e-9, "feature {i}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn matrix_row_lookup() {
        let img = image(40, 40, |x, _| x as f64 / 39.0);
        let ctx = build_feature_context(&img);
        let roi = Roi {
            x0: 5,
            y0: 7,
            x1: 9,
            y1: 8,
        };
        let m = FeatureMatrix::from_rois(&[ctx.clone(), ctx.clone()], &[roi, roi]).unwrap();
        assert_eq!(m.n_rows(), 20);
        let r = m.row_of(1, 6, 8).unwrap();
        assert_eq!(m.pixels()[r], PixelRef { slice: 1, x: 6, y: 8 });
        let v = feature_vector(&ctx, 6, 8);
        assert!(m.row(r).iter().zip(v).all(|(a, b)| *a == b as f32));
        assert_eq!(m.row_of(0, 4, 7), None);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let img = image(32, 32, |x, y| ((x + y) % 3) as f64 / 2.0);
        let ctx = build_feature_context(&img);
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &ctx, [(1, 2), (3, 4)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("px,py,f0,f1,"));
        assert!(lines[0].ends_with(",f180"));
        assert_eq!(lines[1].split(',').count(), 183);
    }
}
