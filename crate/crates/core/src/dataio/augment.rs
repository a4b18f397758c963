//! Geometric data augmentation: rotation, translation, sub-window sampling and
//! general affine warps.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::dataio::micrograph::Micrograph;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    /// Counter-clockwise rotation about the image center, in degrees.
    Rotate { degrees: f64 },
    /// Shift by whole pixels; positive `dx` moves content right, `dy` down.
    Translate { dx: i64, dy: i64 },
    /// Crop of the window starting at `(row, col)`.
    Subsample {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    /// Forward map `(x', y') = M · (x, y, 1)` with x = column, y = row.
    Affine { matrix: [[f64; 3]; 2] },
}

/// Value used for pixels that map outside the source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Periodic continuation of the source.
    Wrap,
    Constant(u8),
    /// Per-channel median of the source image.
    #[default]
    Median,
}

pub fn augment(m: &Micrograph, op: AugmentOp, fill: FillPolicy) -> Result<Micrograph> {
    let pixels = match op {
        AugmentOp::Rotate { degrees } => rotate(m, degrees, fill)?,
        AugmentOp::Translate { dx, dy } => translate(m, dx, dy, fill),
        AugmentOp::Subsample {
            row,
            col,
            height,
            width,
        } => {
            if height == 0
                || width == 0
                || row.checked_add(height).is_none_or(|e| e > m.height())
                || col.checked_add(width).is_none_or(|e| e > m.width())
            {
                return Err(Error::invalid(format!(
                    "subsample window ({row},{col}) {height}x{width} exceeds {}x{} image",
                    m.height(),
                    m.width()
                )));
            }
            m.pixels()
                .slice(ndarray::s![row..row + height, col..col + width, ..])
                .to_owned()
        }
        AugmentOp::Affine { matrix } => {
            let [[a, b, tx], [c, d, ty]] = matrix;
            let det = a * d - b * c;
            if !det.is_finite() || det.abs() < 1e-12 {
                return Err(Error::invalid("affine matrix is singular"));
            }
            // inverse of the linear part
            let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
            warp(m, fill, |r, c| {
                let x = c - tx;
                let y = r - ty;
                (ic * x + id * y, ia * x + ib * y)
            })
        }
    };
    let mut out = m.with_pixels(pixels)?;
    out.record_augmentation(&describe(op));
    Ok(out)
}

fn describe(op: AugmentOp) -> String {
    match op {
        AugmentOp::Rotate { degrees } => format!("rotate({degrees})"),
        AugmentOp::Translate { dx, dy } => format!("translate({dx},{dy})"),
        AugmentOp::Subsample {
            row,
            col,
            height,
            width,
        } => format!("subsample({row},{col},{height},{width})"),
        AugmentOp::Affine { matrix } => format!(
            "affine({},{},{},{},{},{})",
            matrix[0][0], matrix[0][1], matrix[0][2], matrix[1][0], matrix[1][1], matrix[1][2]
        ),
    }
}

fn fill_values(m: &Micrograph, fill: FillPolicy) -> Vec<u8> {
    match fill {
        FillPolicy::Constant(v) => vec![v; m.channels()],
        FillPolicy::Median | FillPolicy::Wrap => m.median(),
    }
}

fn rotate(m: &Micrograph, degrees: f64, fill: FillPolicy) -> Result<Array3<u8>> {
    if !degrees.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let quarter = degrees / 90.0;
    if quarter == quarter.round() {
        let k = (quarter.round() as i64).rem_euclid(4);
        return Ok(rotate_quarter_turns(m.pixels(), k as usize));
    }
    let theta = degrees.to_radians();
    let (s, co) = theta.sin_cos();
    let cy = (m.height() as f64 - 1.0) / 2.0;
    let cx = (m.width() as f64 - 1.0) / 2.0;
    Ok(warp(m, fill, |r, c| {
        let dy = r - cy;
        let dx = c - cx;
        (cy + s * dx + co * dy, cx + co * dx - s * dy)
    }))
}

/// Exact counter-clockwise rotation by `k` quarter turns.
fn rotate_quarter_turns(src: &Array3<u8>, k: usize) -> Array3<u8> {
    let (h, w, ch) = src.dim();
    match k % 4 {
        0 => src.clone(),
        1 => Array3::from_shape_fn((w, h, ch), |(r, c, z)| src[[c, w - 1 - r, z]]),
        2 => Array3::from_shape_fn((h, w, ch), |(r, c, z)| src[[h - 1 - r, w - 1 - c, z]]),
        _ => Array3::from_shape_fn((w, h, ch), |(r, c, z)| src[[h - 1 - c, r, z]]),
    }
}

fn translate(m: &Micrograph, dx: i64, dy: i64, fill: FillPolicy) -> Array3<u8> {
    let (h, w, ch) = m.pixels().dim();
    let fv = fill_values(m, fill);
    let src = m.pixels();
    Array3::from_shape_fn((h, w, ch), |(r, c, z)| {
        let sr = r as i64 - dy;
        let sc = c as i64 - dx;
        match fill {
            FillPolicy::Wrap => {
                src[[sr.rem_euclid(h as i64) as usize, sc.rem_euclid(w as i64) as usize, z]]
            }
            _ => {
                if sr < 0 || sc < 0 || sr >= h as i64 || sc >= w as i64 {
                    fv[z]
                } else {
                    src[[sr as usize, sc as usize, z]]
                }
            }
        }
    })
}

/// Bilinear resampling; `inverse(row, col)` gives the source position of an
/// output pixel.
fn warp(m: &Micrograph, fill: FillPolicy, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Array3<u8> {
    let (h, w, ch) = m.pixels().dim();
    let fv = fill_values(m, fill);
    let src = m.pixels();
    let fetch = |r: i64, c: i64, z: usize| -> f64 {
        match fill {
            FillPolicy::Wrap => f64::from(
                src[[r.rem_euclid(h as i64) as usize, c.rem_euclid(w as i64) as usize, z]],
            ),
            _ => {
                if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                    f64::from(fv[z])
                } else {
                    f64::from(src[[r as usize, c as usize, z]])
                }
            }
        }
    };
    let mut out = Array3::<u8>::zeros((h, w, ch));
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = inverse(r as f64, c as f64);
            let r0 = sr.floor();
            let c0 = sc.floor();
            let fr = sr - r0;
            let fc = sc - c0;
            let (r0, c0) = (r0 as i64, c0 as i64);
            for z in 0..ch {
                let v = (1.0 - fr) * ((1.0 - fc) * fetch(r0, c0, z) + fc * fetch(r0, c0 + 1, z))
                    + fr * ((1.0 - fc) * fetch(r0 + 1, c0, z) + fc * fetch(r0 + 1, c0 + 1, z));
                out[[r, c, z]] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}
