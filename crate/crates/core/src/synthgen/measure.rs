//! Grain-size statistics and the ASTM E112 intercept relation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::potts::GrainMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrainStats {
    pub grain_count: usize,
    /// Mean equivalent circle diameter, pixels.
    pub mean_diameter: f64,
    /// Mean linear intercept, pixels.
    pub mean_intercept: f64,
    /// Pixel area of grain `i + 1`.
    pub areas: Vec<u64>,
}

/// Measures a relabeled grain map.
///
/// The mean intercept averages the lengths of all horizontal and vertical
/// chords that do not touch the image edge. A map with no such chord (a
/// single grain, or grains spanning the image) falls back to all chords.
pub fn measure_grain_size(g: &GrainMap) -> GrainStats {
    let count = g.max_label() as usize;
    let mut areas = vec![0u64; count];
    for &l in g.labels() {
        areas[l as usize - 1] += 1;
    }
    let present: Vec<u64> = areas.iter().copied().filter(|&a| a > 0).collect();
    let mean_diameter = present
        .iter()
        .map(|&a| 2.0 * (a as f64 / std::f64::consts::PI).sqrt())
        .sum::<f64>()
        / present.len() as f64;

    let (h, w) = (g.height(), g.width());
    let mut interior = (0u64, 0u64);
    let mut all = (0u64, 0u64);
    let mut scan = |len: usize, at: &dyn Fn(usize) -> u32| {
        let mut start = 0;
        for i in 1..=len {
            if i == len || at(i) != at(start) {
                let chord = (i - start) as u64;
                all.0 += chord;
                all.1 += 1;
                if start > 0 && i < len {
                    interior.0 += chord;
                    interior.1 += 1;
                }
                start = i;
            }
        }
    };
    for r in 0..h {
        scan(w, &|c| g.get(r, c));
    }
    for c in 0..w {
        scan(h, &|r| g.get(r, c));
    }
    let (sum, n) = if interior.1 > 0 { interior } else { all };
    GrainStats {
        grain_count: present.len(),
        mean_diameter,
        mean_intercept: sum as f64 / n as f64,
        areas,
    }
}

/// ASTM E112 grain size number from a mean lineal intercept in millimeters.
pub fn astm_grain_number(mean_intercept_mm: f64) -> Result<f64> {
    if !(mean_intercept_mm > 0.0) || !mean_intercept_mm.is_finite() {
        return Err(Error::invalid("mean intercept must be positive"));
    }
    Ok(-6.6438 * mean_intercept_mm.log10() - 3.288)
}

/// Mean intercept of circular grains with the given diameter (ℓ = π d / 4).
pub fn circle_intercept(diameter: f64) -> f64 {
    std::f64::consts::FRAC_PI_4 * diameter
}
