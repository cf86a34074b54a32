//! Quadrature Gabor filter bank.

use std::f64::consts::PI;

use crate::image::ImageGrid;

/// Orientations in degrees. An orientation names the stripe direction the
/// filter responds to, so 90° picks up vertical stripes.
pub const ORIENTATIONS_DEG: [f64; 4] = [0.0, 45.0, 90.0, 135.0];
pub const SCALES: [f64; 2] = [0.5, 1.0];

/// Index of the `(scale, orientation)` map inside the 8-map bank.
pub const fn map_index(scale_idx: usize, orientation_idx: usize) -> usize {
    scale_idx * ORIENTATIONS_DEG.len() + orientation_idx
}

/// Even/odd kernel pair on a `(2h+1)²` grid.
#[derive(Debug, Clone)]
pub struct GaborKernel {
    pub half_width: usize,
    pub even: Vec<f64>,
    pub odd: Vec<f64>,
}

impl GaborKernel {
    /// Envelope sigma `4s`, wavelength `8s`, isotropic envelope, zero phase.
    /// The even part has its DC component removed.
    pub fn new(orientation_deg: f64, scale: f64) -> Self {
        let sigma = 4.0 * scale;
        let wavelength = 8.0 * scale;
        let half_width = (3.0 * sigma).ceil() as usize;
        let h = half_width as isize;
        let theta = orientation_deg.to_radians();
        let (sin_t, cos_t) = theta.sin_cos();

        let side = 2 * half_width + 1;
        let mut envelope = Vec::with_capacity(side * side);
        let mut even = Vec::with_capacity(side * side);
        let mut odd = Vec::with_capacity(side * side);
        for dy in -h..=h {
            for dx in -h..=h {
                let (x, y) = (dx as f64, dy as f64);
                let u = -x * sin_t + y * cos_t;
                let g = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                let phase = 2.0 * PI * u / wavelength;
                envelope.push(g);
                even.push(g * phase.cos());
                odd.push(g * phase.sin());
            }
        }
        let dc = even.iter().sum::<f64>() / envelope.iter().sum::<f64>();
        for (e, g) in even.iter_mut().zip(&envelope) {
            *e -= dc * g;
        }
        Self {
            half_width,
            even,
            odd,
        }
    }
}

/// Magnitude of the quadrature response at every pixel (mirror padding),
/// before any normalization.
pub fn gabor_magnitude(image: &ImageGrid, orientation_deg: f64, scale: f64) -> Vec<f64> {
    let kernel = GaborKernel::new(orientation_deg, scale);
    let (w, h) = image.dims();
    let hw = kernel.half_width as isize;
    let side = 2 * kernel.half_width + 1;

    // pad once so the inner loop is branch-free
    let pw = w + 2 * kernel.half_width;
    let ph = h + 2 * kernel.half_width;
    let mut padded = Vec::with_capacity(pw * ph);
    for y in 0..ph as isize {
        for x in 0..pw as isize {
            padded.push(image.get_mirrored(x - hw, y - hw));
        }
    }

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for ky in 0..side {
                let row = (y + ky) * pw + x;
                let krow = ky * side;
                for kx in 0..side {
                    let v = padded[row + kx];
                    re += kernel.even[krow + kx] * v;
                    im += kernel.odd[krow + kx] * v;
                }
            }
            out.push((re * re + im * im).sqrt());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_sizes_follow_scale() {
        assert_eq!(GaborKernel::new(0.0, 0.5).half_width, 6);
        assert_eq!(GaborKernel::new(0.0, 1.0).half_width, 12);
    }

    #[test]
    fn even_kernel_has_no_dc() {
        for &s in &SCALES {
            for &o in &ORIENTATIONS_DEG {
                let k = GaborKernel::new(o, s);
                assert!(k.even.iter().sum::<f64>().abs() < 1e-9);
                assert!(k.odd.iter().sum::<f64>().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn vertical_stripes_excite_ninety_degrees_most() {
        let (w, h) = (64, 64);
        let data: Vec<f64> = (0..w * h)
            .map(|i| 0.5 + 0.5 * (2.0 * PI * (i % w) as f64 / 8.0).sin())
            .collect();
        let img = ImageGrid::new(w, h, data).unwrap();
        let means: Vec<f64> = ORIENTATIONS_DEG
            .iter()
            .map(|&o| {
                let m = gabor_magnitude(&img, o, 1.0);
                m.iter().sum::<f64>() / m.len() as f64
            })
            .collect();
        let best = means
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(ORIENTATIONS_DEG[best], 90.0, "{means:?}");
    }
}
