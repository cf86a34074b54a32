//! Mean curvature of the intensity surface `z = I(x, y)`.

use crate::image::{mirror_index, ImageGrid};

const SMOOTH_SIGMA: f64 = 1.0;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with mirror padding.
pub fn gaussian_smooth(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * data[y * w + mirror_index(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[mirror_index(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// `H = ((1+Ix²)Iyy − 2·Ix·Iy·Ixy + (1+Iy²)Ixx) / (2(1+Ix²+Iy²)^{3/2})`
/// on the σ=1 smoothed image, central differences, before normalization.
pub fn mean_curvature(image: &ImageGrid) -> Vec<f64> {
    let (w, h) = image.dims();
    let s = gaussian_smooth(image.data(), w, h, SMOOTH_SIGMA);
    let at = |x: isize, y: isize| s[mirror_index(y, h) * w + mirror_index(x, w)];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = at(x, y);
            let ix = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            let iy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
            let ixx = at(x + 1, y) - 2.0 * c + at(x - 1, y);
            let iyy = at(x, y + 1) - 2.0 * c + at(x, y - 1);
            let ixy = (at(x + 1, y + 1) - at(x + 1, y - 1) - at(x - 1, y + 1)
                + at(x - 1, y - 1))
                / 4.0;
            let g = 1.0 + ix * ix + iy * iy;
            out.push(
                ((1.0 + ix * ix) * iyy - 2.0 * ix * iy * ixy + (1.0 + iy * iy) * ixx)
                    / (2.0 * g.powf(1.5)),
            );
        }
    }
    out
}
