use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::dataio::Micrograph;
use crate::error::Result;
use crate::rng::{derive_named, rng};
use crate::segment::mask::SegmentationMask;

/// Two-phase composite: a smooth random interface splits the image into a
/// fine isotropic grain texture (class 0) and a lamellar texture (class 1).
/// Both phases share the same mean gray level.
pub fn two_texture_image(id: &str, size: usize, seed: u64) -> Result<(Micrograph, SegmentationMask)> {
    let mut r = rng(derive_named(seed, "layout"));
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let angle = r.random_range(0.0..PI);
            let freq = r.random_range(0.5..2.0) * 2.0 * PI / size as f64;
            (angle.cos() * freq, angle.sin() * freq, r.random_range(0.0..2.0 * PI), r.random_range(0.5..1.0))
        })
        .collect();
    let field = |row: usize, col: usize| -> f64 {
        waves
            .iter()
            .map(|&(fy, fx, phase, amp)| amp * (fy * row as f64 + fx * col as f64 + phase).sin())
            .sum()
    };
    let mut labels = vec![0u8; size * size];
    for row in 0..size {
        for col in 0..size {
            labels[row * size + col] = u8::from(field(row, col) > 0.0);
        }
    }

    let mut tex = rng(derive_named(seed, "texture"));
    let noise = Normal::new(0.0, 6.0).expect("valid sigma");
    let lamella_angle = tex.random_range(0.0..PI);
    let (ly, lx) = (lamella_angle.sin(), lamella_angle.cos());
    // speckle: independent 2×2 blocks
    let cells = size.div_ceil(2);
    let speckle: Vec<f64> = (0..cells * cells).map(|_| tex.random_range(-60.0..60.0)).collect();
    let mut pixels = vec![0u8; size * size];
    for row in 0..size {
        for col in 0..size {
            let base = if labels[row * size + col] == 0 {
                speckle[(row / 2) * cells + col / 2]
            } else {
                let t = (row as f64 * ly + col as f64 * lx) * 2.0 * PI / 8.0;
                50.0 * t.sin()
            };
            let v = 128.0 + base + noise.sample(&mut tex);
            pixels[row * size + col] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    let m = Micrograph::from_gray(id, size, size, pixels)?;
    let mask = SegmentationMask::new(size, size, labels, vec!["speckle".into(), "lamellar".into()])?;
    Ok((m, mask))
}
