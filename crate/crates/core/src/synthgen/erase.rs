//! Missing-boundary degradation. Boundaries are removed as whole grain-pair
//! segments, the way unetched boundaries disappear in real micrographs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::rng;
use crate::synthgen::potts::GrainMap;
use crate::synthgen::render::{boundary_mask, BoundaryMask};

/// A maximal 8-connected run of boundary pixels separating one grain pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySegment {
    /// Grain pair `(low, high)`.
    pub pair: (u32, u32),
    /// Linear pixel indices, ascending.
    pub pixels: Vec<usize>,
}

/// Enumerates boundary segments.
///
/// Each boundary pixel is keyed by its own grain and the smallest differing
/// 4-neighbor grain; segments are 8-connected groups of equally keyed pixels,
/// ordered by pair and then by first pixel.
pub fn boundary_segments(g: &GrainMap) -> Vec<BoundarySegment> {
    let (h, w) = (g.height(), g.width());
    let mut key: Vec<Option<(u32, u32)>> = vec![None; h * w];
    for r in 0..h {
        for c in 0..w {
            let s = g.get(r, c);
            let mut other: Option<u32> = None;
            let mut consider = |t: u32| {
                if t != s {
                    other = Some(other.map_or(t, |o| o.min(t)));
                }
            };
            if r > 0 {
                consider(g.get(r - 1, c));
            }
            if r + 1 < h {
                consider(g.get(r + 1, c));
            }
            if c > 0 {
                consider(g.get(r, c - 1));
            }
            if c + 1 < w {
                consider(g.get(r, c + 1));
            }
            key[r * w + c] = other.map(|o| (s.min(o), s.max(o)));
        }
    }

    let mut seen = vec![false; h * w];
    let mut segments = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        let Some(k) = key[start] else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (r, c) = ((p / w) as isize, (p % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr as usize >= h || cc as usize >= w {
                        continue;
                    }
                    let q = rr as usize * w + cc as usize;
                    if !seen[q] && key[q] == Some(k) {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        pixels.sort_unstable();
        segments.push(BoundarySegment { pair: k, pixels });
    }
    segments.sort_by(|a, b| a.pair.cmp(&b.pair).then(a.pixels[0].cmp(&b.pixels[0])));
    segments
}

/// Boundary mask with `round(f·S)` of the `S` segments removed, chosen
/// uniformly without replacement.
pub fn erase_boundaries(g: &GrainMap, fraction: f64, seed: u64) -> Result<BoundaryMask> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "missing-boundary fraction {fraction} outside [0, 1]"
        )));
    }
    let mut mask = boundary_mask(g);
    if fraction == 0.0 {
        return Ok(mask);
    }
    let segments = boundary_segments(g);
    let remove = (fraction * segments.len() as f64).round() as usize;
    let mut rng = rng(seed);
    for i in rand::seq::index::sample(&mut rng, segments.len(), remove) {
        for &p in &segments[i].pixels {
            mask.pixels[p] = false;
        }
    }
    Ok(mask)
}

/// Grain pairs that still have at least one boundary pixel in `mask`.
pub fn visible_pairs(g: &GrainMap, mask: &BoundaryMask) -> BTreeMap<(u32, u32), usize> {
    let mut out = BTreeMap::new();
    for seg in boundary_segments(g) {
        let n = seg.pixels.iter().filter(|&&p| mask.pixels[p]).count();
        if n > 0 {
            *out.entry(seg.pair).or_insert(0) += n;
        }
    }
    out
}
