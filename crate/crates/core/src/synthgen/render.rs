//! Optical-style rendering of grain maps: dark boundary lines on a bright
//! matrix, Gaussian blur and additive noise.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::Micrograph;
use crate::error::{Error, Result};
use crate::rng::rng;
use crate::synthgen::potts::GrainMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub matrix_gray: u8,
    pub boundary_gray: u8,
    /// Gaussian blur standard deviation in pixels; 0 disables blurring.
    pub blur_sigma: f64,
    /// Additive Gaussian noise standard deviation in gray levels.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            matrix_gray: 200,
            boundary_gray: 40,
            blur_sigma: 0.8,
            noise_sigma: 4.0,
            seed: 0,
        }
    }
}

impl RenderStyle {
    /// Style with blur and noise disabled.
    pub fn clean() -> Self {
        Self {
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            ..Self::default()
        }
    }
}

/// Binary H×W mask of boundary pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMask {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<bool>,
}

impl BoundaryMask {
    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&b| b).count()
    }
}

/// A pixel is on a boundary iff one of its 4-neighbors has a different id.
pub fn boundary_mask(g: &GrainMap) -> BoundaryMask {
    let (h, w) = (g.height(), g.width());
    let mut pixels = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let s = g.get(r, c);
            pixels[r * w + c] = (r > 0 && g.get(r - 1, c) != s)
                || (r + 1 < h && g.get(r + 1, c) != s)
                || (c > 0 && g.get(r, c - 1) != s)
                || (c + 1 < w && g.get(r, c + 1) != s);
        }
    }
    BoundaryMask {
        height: h,
        width: w,
        pixels,
    }
}

pub fn render_micrograph(g: &GrainMap, style: &RenderStyle) -> Result<Micrograph> {
    render_boundaries(&boundary_mask(g), style)
}

/// Renders an explicit boundary mask (e.g. after boundary erasure).
pub fn render_boundaries(mask: &BoundaryMask, style: &RenderStyle) -> Result<Micrograph> {
    if style.matrix_gray <= style.boundary_gray {
        return Err(Error::invalid(
            "matrix gray must be brighter than boundary gray",
        ));
    }
    if !(style.blur_sigma >= 0.0) || !(style.noise_sigma >= 0.0) {
        return Err(Error::invalid("blur and noise sigma must be non-negative"));
    }
    let (h, w) = (mask.height, mask.width);
    let mut img: Vec<f64> = mask
        .pixels
        .iter()
        .map(|&b| f64::from(if b { style.boundary_gray } else { style.matrix_gray }))
        .collect();
    if style.blur_sigma > 0.0 {
        img = gaussian_blur(&img, h, w, style.blur_sigma);
    }
    if style.noise_sigma > 0.0 {
        let mut rng = rng(style.seed);
        let normal = Normal::new(0.0, style.noise_sigma).expect("valid sigma");
        for v in img.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let data = img.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    Micrograph::from_gray("synthetic", h, w, data)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 || i >= n {
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - i - 1;
        }
    }
    i as usize
}

/// Separable Gaussian blur with symmetric (half-sample) edge reflection.
pub(crate) fn gaussian_blur(img: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= sum;
    }
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let cc = reflect(c as isize + ki as isize - radius, w);
                acc += k * img[r * w + cc];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let rr = reflect(r as isize + ki as isize - radius, h);
                acc += k * tmp[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    out
}
