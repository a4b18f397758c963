//! Zero-temperature Potts-model grain growth on a square lattice.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{rng, Rng};

/// 8-neighborhood offsets `(dr, dc)`.
pub(crate) const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Labeled polycrystal grid. Labels are `>= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrainMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl GrainMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                actual: labels.len(),
            });
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid("grain map must be nonempty"));
        }
        if labels.contains(&0) {
            return Err(Error::invalid("grain labels must be >= 1"));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    /// Builds a map from a per-pixel function of `(row, col)`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> u32) -> Result<Self> {
        let labels = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::new(height, width, labels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Largest label value.
    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Relabels 4-connected regions `1..=N` in raster order of their first pixel.
    pub fn relabeled(&self) -> GrainMap {
        let (h, w) = (self.height, self.width);
        let mut out = vec![0u32; h * w];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for start in 0..h * w {
            if out[start] != 0 {
                continue;
            }
            next += 1;
            let spin = self.labels[start];
            out[start] = next;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (r, c) = (p / w, p % w);
                let mut visit = |q: usize| {
                    if out[q] == 0 && self.labels[q] == spin {
                        out[q] = next;
                        stack.push(q);
                    }
                };
                if r > 0 {
                    visit(p - w);
                }
                if r + 1 < h {
                    visit(p + w);
                }
                if c > 0 {
                    visit(p - 1);
                }
                if c + 1 < w {
                    visit(p + 1);
                }
            }
        }
        GrainMap {
            height: h,
            width: w,
            labels: out,
        }
    }

    /// Number of distinct grains, assuming the map is relabeled.
    pub fn grain_count(&self) -> usize {
        self.max_label() as usize
    }

    /// Number of unlike 8-neighbor bonds, each counted once.
    pub fn unlike_bonds(&self) -> u64 {
        let (h, w) = (self.height, self.width);
        let mut n = 0u64;
        for r in 0..h {
            for c in 0..w {
                let s = self.get(r, c);
                // forward half of the neighborhood
                for (dr, dc) in [(0isize, 1isize), (1, -1), (1, 0), (1, 1)] {
                    let rr = r as isize + dr;
                    let cc = c as isize + dc;
                    if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w && self.get(rr as usize, cc as usize) != s {
                        n += 1;
                    }
                }
            }
        }
        n
    }
}

/// Stateful Potts simulation; one [`sweep`](PottsSimulation::sweep) is H·W
/// flip attempts at uniformly drawn sites.
///
/// Each attempt proposes a spin drawn uniformly from the site's unlike
/// 8-neighbors and accepts it when the number of unlike bonds does not grow.
/// The lattice has free (non-periodic) edges.
pub struct PottsSimulation {
    height: usize,
    width: usize,
    spins: Vec<u32>,
    rng: Rng,
    sweeps_done: usize,
}

impl PottsSimulation {
    /// Random initial state: i.i.d. uniform spins in `1..=q`.
    pub fn random(height: usize, width: usize, q: u32, seed: u64) -> Result<Self> {
        if height < 32 || width < 32 {
            return Err(Error::invalid(format!(
                "Potts grid must be at least 32x32, got {height}x{width}"
            )));
        }
        if q < 2 {
            return Err(Error::invalid("Potts model needs at least 2 spins"));
        }
        let mut rng = rng(seed);
        let spins = (0..height * width).map(|_| rng.random_range(1..=q)).collect();
        Ok(Self {
            height,
            width,
            spins,
            rng,
            sweeps_done: 0,
        })
    }

    /// Continues from an explicit spin configuration.
    pub fn from_map(map: &GrainMap, seed: u64) -> Self {
        Self {
            height: map.height,
            width: map.width,
            spins: map.labels.clone(),
            rng: rng(seed),
            sweeps_done: 0,
        }
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn sweep(&mut self) {
        let (h, w) = (self.height, self.width);
        let n = h * w;
        let mut unlike = [0u32; 8];
        let mut neigh = [0u32; 8];
        for _ in 0..n {
            let site = self.rng.random_range(0..n);
            let (r, c) = (site / w, site % w);
            let own = self.spins[site];
            let mut nn = 0;
            let mut nu = 0;
            for (dr, dc) in NEIGHBORS8 {
                let rr = r as isize + dr;
                let cc = c as isize + dc;
                if rr < 0 || cc < 0 || rr as usize >= h || cc as usize >= w {
                    continue;
                }
                let s = self.spins[rr as usize * w + cc as usize];
                neigh[nn] = s;
                nn += 1;
                if s != own {
                    unlike[nu] = s;
                    nu += 1;
                }
            }
            if nu == 0 {
                continue;
            }
            let trial = unlike[self.rng.random_range(0..nu)];
            let trial_unlike = neigh[..nn].iter().filter(|&&s| s != trial).count();
            if trial_unlike <= nu {
                self.spins[site] = trial;
            }
        }
        self.sweeps_done += 1;
    }

    /// Current spins as an un-relabeled map.
    pub fn spins(&self) -> GrainMap {
        GrainMap {
            height: self.height,
            width: self.width,
            labels: self.spins.clone(),
        }
    }

    /// Current state relabeled into grains.
    pub fn grains(&self) -> GrainMap {
        self.spins().relabeled()
    }
}

/// Runs `steps` Monte Carlo sweeps from a random start and returns the
/// relabeled grain map.
pub fn potts_evolve(height: usize, width: usize, q: u32, steps: usize, seed: u64) -> Result<GrainMap> {
    let mut sim = PottsSimulation::random(height, width, q, seed)?;
    for _ in 0..steps {
        sim.sweep();
    }
    Ok(sim.grains())
}

/// Runs `steps` sweeps from the given spins and returns the relabeled map.
pub fn potts_evolve_from(initial: &GrainMap, steps: usize, seed: u64) -> GrainMap {
    let mut sim = PottsSimulation::from_map(initial, seed);
    for _ in 0..steps {
        sim.sweep();
    }
    sim.grains()
}

/// Mean grain area in pixels of a relabeled map.
pub fn mean_grain_area(map: &GrainMap) -> f64 {
    (map.height * map.width) as f64 / map.grain_count() as f64
}
