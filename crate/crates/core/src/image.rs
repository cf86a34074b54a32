//! Raster types shared by every stage: grayscale images, binary masks,
//! regions of interest and multi-expert annotation sets.

use crate::error::{Error, Result};

/// Reflects `i` into `0..n`, repeating the edge sample (`.. 1 0 | 0 1 ..`).
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let p = i.rem_euclid(period);
    (if p >= n { period - 1 - p } else { p }) as usize
}

/// Row-major grayscale raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Wraps already-normalized intensities.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image has a zero dimension".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "image data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Min-max normalizes arbitrary finite samples. A constant input maps to 0.
    pub fn from_raw(width: usize, height: usize, raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite intensity".into()));
        }
        Self::new(width, height, normalize_min_max(raw))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with mirror padding outside the raster.
    #[inline]
    pub fn get_mirrored(&self, x: isize, y: isize) -> f64 {
        self.get(mirror_index(x, self.width), mirror_index(y, self.height))
    }
}

/// Rescales to `[0, 1]` via `(v - min) / (max - min)`; all zeros when `max == min`.
pub fn normalize_min_max(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// Row-major binary label raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    /// Builds a mask from a per-pixel predicate `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v as u8;
    }

    /// Label at signed coordinates; outside the raster counts as background.
    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> u8 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0
        } else {
            self.get(x as usize, y as usize)
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Foreground pixel coordinates in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub(crate) fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Roi {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width - 1,
            y1: height - 1,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn len(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    /// Pixels in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| (x, y)))
    }

    /// Position of `(x, y)` within [`Roi::pixels`].
    #[inline]
    pub fn local_index(&self, x: usize, y: usize) -> usize {
        (y - self.y0) * self.width() + (x - self.x0)
    }
}

/// One image with one optional mask per expert.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSlice {
    pub image: ImageGrid,
    pub masks: Vec<Option<Mask>>,
}

impl AnnotatedSlice {
    pub fn present(&self) -> impl Iterator<Item = &Mask> {
        self.masks.iter().flatten()
    }
}

/// Multi-expert annotations over a list of slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    experts: Vec<String>,
    slices: Vec<AnnotatedSlice>,
}

impl AnnotationSet {
    pub fn new(experts: Vec<String>, slices: Vec<AnnotatedSlice>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::InvalidInput("annotation set has no experts".into()));
        }
        for (i, slice) in slices.iter().enumerate() {
            if slice.masks.len() != experts.len() {
                return Err(Error::InvalidInput(format!(
                    "slice {i} lists {} masks for {} experts",
                    slice.masks.len(),
                    experts.len()
                )));
            }
            for mask in slice.present() {
                mask.check_dims(slice.image.dims())?;
            }
            if slice.present().next().is_none() {
                return Err(Error::AllExpertsMissing { slice: i });
            }
        }
        Ok(Self { experts, slices })
    }

    pub fn experts(&self) -> &[String] {
        &self.experts
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn slices(&self) -> &[AnnotatedSlice] {
        &self.slices
    }

    pub fn n_missing(&self) -> usize {
        self.slices
            .iter()
            .map(|s| s.masks.iter().filter(|m| m.is_none()).count())
            .sum()
    }

    pub fn is_complete(&self) -> bool {
        self.n_missing() == 0
    }

    /// Same slices with the absent masks replaced by `fill(slice, expert)`.
    pub fn with_filled(
        &self,
        mut fill: impl FnMut(usize, usize) -> Option<Mask>,
    ) -> Result<Self> {
        let slices = self
            .slices
            .iter()
            .enumerate()
            .map(|(i, s)| AnnotatedSlice {
                image: s.image.clone(),
                masks: s
                    .masks
                    .iter()
                    .enumerate()
                    .map(|(r, m)| m.clone().or_else(|| fill(i, r)))
                    .collect(),
            })
            .collect();
        Self::new(self.experts.clone(), slices)
    }
}

/// Bounding box of the union of all present masks, grown by `margin` and
/// clamped to the image.
pub fn compute_roi(slice: &AnnotatedSlice, margin: usize) -> Result<Roi> {
    let (w, h) = slice.image.dims();
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for mask in slice.present() {
        mask.check_dims((w, h))?;
        for (x, y) in mask.foreground() {
            bounds = Some(match bounds {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
    }
    let (x0, y0, x1, y1) = bounds.ok_or(Error::EmptyAnnotationUnion)?;
    Ok(Roi {
        x0: x0.saturating_sub(margin),
        y0: y0.saturating_sub(margin),
        x1: (x1 + margin).min(w - 1),
        y1: (y1 + margin).min(h - 1),
    })
}

/// Margin used around the annotation union throughout the pipeline.
pub const DEFAULT_ROI_MARGIN: usize = 20;

#[cfg(test)]
mod tests {
    use super::*;

    fn slice_with(masks: Vec<Option<Mask>>, w: usize, h: usize) -> AnnotatedSlice {
        AnnotatedSlice {
            image: ImageGrid::new(w, h, vec![0.0; w * h]).unwrap(),
            masks,
        }
    }

    #[test]
    fn mirror_index_reflects_with_edge_repeat() {
        let got: Vec<_> = (-3..7).map(|i| mirror_index(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(mirror_index(-5, 1), 0);
    }

    #[test]
    fn constant_image_normalizes_to_zero() {
        let img = ImageGrid::from_raw(3, 2, &[7.0; 6]).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_is_idempotent() {
        let raw = [3.0, -1.0, 2.5, 9.0, 4.0, 0.0];
        let once = normalize_min_max(&raw);
        let twice = normalize_min_max(&once);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn roi_single_pixel_with_margin() {
        let mut m = Mask::zeros(400, 400);
        m.set(50, 50, true);
        let roi = compute_roi(&slice_with(vec![Some(m)], 400, 400), 20).unwrap();
        assert_eq!(
            roi,
            Roi {
                x0: 30,
                y0: 30,
                x1: 70,
                y1: 70
            }
        );
    }

    #[test]
    fn roi_clamps_at_border() {
        let mut m = Mask::zeros(100, 100);
        m.set(0, 0, true);
        let roi = compute_roi(&slice_with(vec![Some(m)], 100, 100), 20).unwrap();
        assert_eq!((roi.x0, roi.y0, roi.x1, roi.y1), (0, 0, 20, 20));
    }

    #[test]
    fn roi_of_disjoint_blobs_matches_brute_force_scan() {
        let a = Mask::from_fn(64, 48, |x, y| (5..9).contains(&x) && (30..33).contains(&y));
        let b = Mask::from_fn(64, 48, |x, y| (40..50).contains(&x) && (2..6).contains(&y));
        let slice = slice_with(vec![Some(a.clone()), None, Some(b.clone())], 64, 48);
        let roi = compute_roi(&slice, 3).unwrap();

        // brute force over every pixel of both masks
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..48 {
            for x in 0..64 {
                if a.get(x, y) == 1 || b.get(x, y) == 1 {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        let expect = Roi {
            x0: x0.saturating_sub(3),
            y0: y0.saturating_sub(3),
            x1: (x1 + 3).min(63),
            y1: (y1 + 3).min(47),
        };
        assert_eq!(roi, expect);
    }

    #[test]
    fn roi_of_empty_union_errors() {
        let slice = slice_with(vec![Some(Mask::zeros(5, 5)), None], 5, 5);
        assert!(matches!(
            compute_roi(&slice, 2),
            Err(Error::EmptyAnnotationUnion)
        ));
    }

    #[test]
    fn annotation_set_rejects_slice_without_masks() {
        let s = slice_with(vec![None, None], 4, 4);
        let err = AnnotationSet::new(vec!["a".into(), "b".into()], vec![s]).unwrap_err();
        assert_eq!(err.category(), "all-experts-missing");
    }

    #[test]
    fn annotation_set_rejects_mismatched_mask() {
        let s = slice_with(vec![Some(Mask::zeros(3, 4))], 4, 4);
        let err = AnnotationSet::new(vec!["a".into()], vec![s]).unwrap_err();
        assert_eq!(err.category(), "dimension-mismatch");
    }

    #[test]
    fn mask_rejects_non_binary_values() {
        assert!(Mask::new(2, 1, vec![0, 2]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn roi_is_monotone_under_added_pixels(
            pts in proptest::collection::vec((0usize..40, 0usize..30), 1..20),
            extra in (0usize..40, 0usize..30),
            margin in 0usize..8,
        ) {
            let base = Mask::from_fn(40, 30, |x, y| pts.contains(&(x, y)));
            let mut grown = base.clone();
            grown.set(extra.0, extra.1, true);
            let r0 = compute_roi(&slice_with(vec![Some(base)], 40, 30), margin).unwrap();
            let r1 = compute_roi(&slice_with(vec![Some(grown)], 40, 30), margin).unwrap();
            proptest::prop_assert!(r1.x0 <= r0.x0 && r1.y0 <= r0.y0);
            proptest::prop_assert!(r1.x1 >= r0.x1 && r1.y1 >= r0.y1);
        }
    }
}
