use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::set::InstanceSet;

pub const DEFAULT_MIN_SEED_DISTANCE: f64 = 5.0;
/// Basins whose peak rises less than this above the saddle to a neighbor are merged.
pub const MERGE_DYNAMIC: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::invalid(format!("connectivity must be 4 or 8, got {v}"))),
        }
    }
}

const N4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
const N8: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

fn offsets(c: Connectivity) -> &'static [(isize, isize)] {
    match c {
        Connectivity::Four => &N4,
        Connectivity::Eight => &N8,
    }
}

fn neighbors(
    p: usize,
    h: usize,
    w: usize,
    c: Connectivity,
) -> impl Iterator<Item = usize> {
    let (r, col) = ((p / w) as isize, (p % w) as isize);
    offsets(c).iter().filter_map(move |&(dr, dc)| {
        let (nr, nc) = (r + dr, col + dc);
        (nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w).then(|| nr as usize * w + nc as usize)
    })
}

fn check(mask: &[bool], h: usize, w: usize) -> Result<()> {
    if mask.len() != h * w {
        return Err(Error::DimensionMismatch {
            expected: h * w,
            actual: mask.len(),
        });
    }
    Ok(())
}

/// Component label per pixel (0 = background), numbered 1.. in raster order
/// of each component's first pixel.
pub fn label_components(mask: &[bool], h: usize, w: usize, connectivity: Connectivity) -> Result<(Vec<u32>, u32)> {
    check(mask, h, w)?;
    let mut labels = vec![0u32; h * w];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbors(p, h, w, connectivity) {
                if mask[q] && labels[q] == 0 {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
    }
    Ok((labels, next))
}

pub fn connected_components(mask: &[bool], h: usize, w: usize, connectivity: Connectivity) -> Result<InstanceSet> {
    let (labels, _) = label_components(mask, h, w, connectivity)?;
    InstanceSet::from_label_image(h, w, &labels)
}

/// Exact squared Euclidean distance to the nearest false pixel of the image.
/// Every entry is `None` when the mask has no false pixel.
pub fn distance_transform_sq(mask: &[bool], h: usize, w: usize) -> Result<Vec<Option<u64>>> {
    check(mask, h, w)?;
    let f: Vec<Option<u64>> = mask.iter().map(|&b| if b { None } else { Some(0) }).collect();
    let mut cols = vec![None; h * w];
    let mut buf = Vec::with_capacity(h.max(w));
    for c in 0..w {
        buf.clear();
        buf.extend((0..h).map(|r| f[r * w + c]));
        for (r, v) in lower_envelope(&buf).into_iter().enumerate() {
            cols[r * w + c] = v;
        }
    }
    let mut out = vec![None; h * w];
    for r in 0..h {
        let row = lower_envelope(&cols[r * w..(r + 1) * w]);
        out[r * w..(r + 1) * w].copy_from_slice(&row);
    }
    Ok(out)
}

/// One-dimensional squared distance transform `min_q f(q) + (p − q)²` by the
/// lower envelope of parabolas; `None` entries are +∞.
fn lower_envelope(f: &[Option<u64>]) -> Vec<Option<u64>> {
    let sites: Vec<(i64, i64)> = f
        .iter()
        .enumerate()
        .filter_map(|(q, v)| v.map(|v| (q as i64, v as i64)))
        .collect();
    if sites.is_empty() {
        return vec![None; f.len()];
    }
    let meet = |a: (i64, i64), b: (i64, i64)| -> f64 {
        ((b.1 + b.0 * b.0) - (a.1 + a.0 * a.0)) as f64 / (2 * (b.0 - a.0)) as f64
    };
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(sites.len());
    let mut bounds: Vec<f64> = Vec::with_capacity(sites.len());
    for &s in &sites {
        while let Some(&top) = hull.last() {
            if meet(top, s) <= *bounds.last().expect("bound per hull entry") {
                hull.pop();
                bounds.pop();
            } else {
                break;
            }
        }
        bounds.push(hull.last().map_or(f64::NEG_INFINITY, |&top| meet(top, s)));
        hull.push(s);
    }
    let mut out = Vec::with_capacity(f.len());
    let mut k = 0;
    for p in 0..f.len() as i64 {
        while k + 1 < hull.len() && bounds[k + 1] < p as f64 {
            k += 1;
        }
        let (q, v) = hull[k];
        out.push(Some((v + (p - q) * (p - q)) as u64));
    }
    out
}

/// Splits touching objects: maxima of the distance transform (suppressed
/// within `min_distance` of a stronger maximum of the same component) seed a
/// flood of the negated distance map; basins whose peak is less than
/// [`MERGE_DYNAMIC`] above their saddle are merged. 8-connected throughout.
pub fn watershed_split(mask: &[bool], h: usize, w: usize, min_distance: f64) -> Result<InstanceSet> {
    if !(min_distance >= 0.0) {
        return Err(Error::invalid("minimum seed distance must be non-negative"));
    }
    let (comp, _) = label_components(mask, h, w, Connectivity::Eight)?;
    let dist2: Vec<u64> = distance_transform_sq(mask, h, w)?
        .into_iter()
        .map(|d| d.unwrap_or(u64::MAX))
        .collect();
    let dist = |p: usize| (dist2[p] as f64).sqrt();

    let mut candidates: Vec<usize> = (0..h * w)
        .filter(|&p| mask[p] && neighbors(p, h, w, Connectivity::Eight).all(|q| dist2[q] <= dist2[p]))
        .collect();
    candidates.sort_by_key(|&p| (Reverse(dist2[p]), p));
    let mut labels = vec![0u32; h * w];
    let mut seeds: Vec<usize> = Vec::new();
    let reach = min_distance.floor() as isize;
    for &p in &candidates {
        let (r, c) = ((p / w) as isize, (p % w) as isize);
        let mut suppressed = false;
        'scan: for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                    continue;
                }
                let q = nr as usize * w + nc as usize;
                if labels[q] != 0 && comp[q] == comp[p] && ((dr * dr + dc * dc) as f64).sqrt() <= min_distance {
                    suppressed = true;
                    break 'scan;
                }
            }
        }
        if !suppressed {
            seeds.push(p);
            labels[p] = seeds.len() as u32;
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for &s in &seeds {
        heap.push((dist2[s], Reverse(seq), s));
        seq += 1;
    }
    while let Some((_, _, p)) = heap.pop() {
        for q in neighbors(p, h, w, Connectivity::Eight) {
            if mask[q] && labels[q] == 0 {
                labels[q] = labels[p];
                heap.push((dist2[q], Reverse(seq), q));
                seq += 1;
            }
        }
    }

    // saddle between two basins: the highest pass connecting them
    let mut saddles: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for p in 0..h * w {
        if labels[p] == 0 {
            continue;
        }
        for q in neighbors(p, h, w, Connectivity::Eight) {
            let (a, b) = (labels[p], labels[q]);
            if b != 0 && a < b {
                let level = dist(p).min(dist(q));
                let e = saddles.entry((a, b)).or_insert(f64::NEG_INFINITY);
                *e = e.max(level);
            }
        }
    }
    let mut order: Vec<((u32, u32), f64)> = saddles.into_iter().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut parent: Vec<u32> = (0..=seeds.len() as u32).collect();
    let mut peak: Vec<f64> = std::iter::once(0.0).chain(seeds.iter().map(|&s| dist(s))).collect();
    fn root(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for ((a, b), saddle) in order {
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        if ra == rb {
            continue;
        }
        let (pa, pb) = (peak[ra as usize], peak[rb as usize]);
        let dynamic = pa.min(pb) - saddle;
        if dynamic < MERGE_DYNAMIC {
            let (keep, drop) = if (pa, Reverse(ra)) >= (pb, Reverse(rb)) { (ra, rb) } else { (rb, ra) };
            parent[drop as usize] = keep;
            peak[keep as usize] = pa.max(pb);
        }
    }

    // renumber by raster order of first pixel
    let mut renumber: BTreeMap<u32, u32> = BTreeMap::new();
    let mut out = vec![0u32; h * w];
    for p in 0..h * w {
        if labels[p] != 0 {
            let r = root(&mut parent, labels[p]);
            let next = renumber.len() as u32 + 1;
            out[p] = *renumber.entry(r).or_insert(next);
        }
    }
    InstanceSet::from_label_image(h, w, &out)
}
