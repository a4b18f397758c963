use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::dataio::Micrograph;
use crate::error::{Error, Result};
use crate::rng::{derive_named, rng};
use crate::segment::SegmentationMask;

/// Bright particles on a dark background, separated by at least two pixels.
/// Shapes range from round to elongated with a lobed, rough outline; the mask
/// holds `background` and `particle`.
pub fn particle_field(id: &str, height: usize, width: usize, count: usize, seed: u64) -> Result<(Micrograph, SegmentationMask)> {
    let mut r = rng(derive_named(seed, "particles"));
    let mut owner = vec![0u32; height * width];
    let mut shade = vec![0.0f64; height * width];
    let mut placed = 0;
    for _ in 0..count * 200 {
        if placed == count {
            break;
        }
        let (ry, rx): (f64, f64) = (r.random_range(5.0..14.0), r.random_range(5.0..14.0));
        let reach = ry.max(rx) * 1.4 + 2.0;
        if 2.0 * reach >= height.min(width) as f64 {
            continue;
        }
        let cy = r.random_range(reach..height as f64 - reach);
        let cx = r.random_range(reach..width as f64 - reach);
        let angle = r.random_range(0.0..PI);
        let lobes = r.random_range(2..7) as f64;
        let rough = r.random_range(0.0..0.35);
        let level = r.random_range(140.0..230.0);
        let (s, c) = angle.sin_cos();
        let inside = |y: usize, x: usize| -> Option<f64> {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let (u, v) = ((dx * c + dy * s) / rx, (-dx * s + dy * c) / ry);
            let radius = 1.0 + rough * (lobes * v.atan2(u)).sin();
            let q = (u * u + v * v).sqrt() / radius;
            (q <= 1.0).then_some(q)
        };
        let (y0, y1) = ((cy - reach).floor() as usize, ((cy + reach).ceil() as usize).min(height - 1));
        let (x0, x1) = ((cx - reach).floor() as usize, ((cx + reach).ceil() as usize).min(width - 1));
        let cells: Vec<(usize, f64)> = (y0..=y1)
            .flat_map(|y| (x0..=x1).map(move |x| (y, x)))
            .filter_map(|(y, x)| inside(y, x).map(|q| (y * width + x, q)))
            .collect();
        if cells.len() < 12 {
            continue;
        }
        let clear = cells.iter().all(|&(p, _)| {
            let (y, x) = ((p / width) as i64, (p % width) as i64);
            (-2..=2).all(|dy| {
                (-2..=2).all(|dx| {
                    let (ny, nx) = (y + dy, x + dx);
                    ny < 0 || nx < 0 || ny >= height as i64 || nx >= width as i64 || owner[ny as usize * width + nx as usize] == 0
                })
            })
        });
        if !clear {
            continue;
        }
        placed += 1;
        for (p, q) in cells {
            owner[p] = placed as u32;
            shade[p] = level * (1.0 - 0.35 * q * q);
        }
    }
    if placed < count {
        return Err(Error::invalid(format!(
            "only {placed} of {count} particles fit in a {height}x{width} field"
        )));
    }
    let noise = Normal::new(0.0, 5.0).expect("valid sigma");
    let mut tex = rng(derive_named(seed, "noise"));
    let pixels: Vec<u8> = (0..height * width)
        .map(|p| {
            let base = if owner[p] > 0 { shade[p] } else { 35.0 };
            (base + noise.sample(&mut tex)).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let m = Micrograph::from_gray(id, height, width, pixels)?;
    let mask = SegmentationMask::new(
        height,
        width,
        owner.iter().map(|&o| u8::from(o > 0)).collect(),
        vec!["background".into(), "particle".into()],
    )?;
    Ok((m, mask))
}
