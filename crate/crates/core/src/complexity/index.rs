//! Uniform grid hash over step-0 coordinates.
//!
//! Cells are at least `eps` wide, so two points in non-adjacent cells are at
//! least `eps` apart at step 0, hence also under every `d_m`. The index only
//! has to produce candidates for *non*-separation.

use std::collections::HashMap;

use smallvec::SmallVec;

use crate::geometry::Metric;

use super::cloud::SampleCloud;

type Key = SmallVec<[i64; 4]>;

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    n: usize,
    metric: Metric,
    cell: f64,
    /// Cells per axis on the torus.
    wrap: i64,
    /// Cell key -> insertion positions.
    cells: HashMap<Key, Vec<u32>>,
    ids: Vec<u32>,
    coords: Vec<f64>,
}

impl SpatialIndex {
    pub fn new(n: usize, metric: Metric, eps: f64) -> Self {
        assert!(eps > 0.0 && eps.is_finite(), "cell size must be positive");
        let (cell, wrap) = match metric {
            Metric::Max => (eps, 0),
            Metric::Torus => {
                let k = ((1.0 / eps).floor() as i64).max(1);
                (1.0 / k as f64, k)
            }
        };
        SpatialIndex {
            n,
            metric,
            cell,
            wrap,
            cells: HashMap::new(),
            ids: Vec::new(),
            coords: Vec::new(),
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn key(&self, x: &[f64]) -> Key {
        x.iter()
            .map(|&c| {
                let k = (c / self.cell).floor() as i64;
                if self.wrap > 0 {
                    k.clamp(0, self.wrap - 1)
                } else {
                    k
                }
            })
            .collect()
    }

    pub fn insert(&mut self, id: u32, x: &[f64]) {
        debug_assert_eq!(x.len(), self.n);
        let key = self.key(x);
        self.cells.entry(key).or_default().push(self.ids.len() as u32);
        self.ids.push(id);
        self.coords.extend_from_slice(x);
    }

    /// Ids in the `3^n` cells around `x`, each once.
    pub fn candidates(&self, x: &[f64], out: &mut Vec<u32>) {
        out.clear();
        self.for_each_candidate(x, |pos| out.push(self.ids[pos as usize]));
    }

    /// Calls `f` with the insertion position of every candidate near `x`.
    fn for_each_candidate(&self, x: &[f64], mut f: impl FnMut(u32)) {
        let base = self.key(x);
        let mut seen: SmallVec<[Key; 27]> = SmallVec::new();
        let total = 3usize.pow(self.n as u32);
        for code in 0..total {
            let mut rem = code;
            let mut key = base.clone();
            for k in key.iter_mut() {
                *k += (rem % 3) as i64 - 1;
                rem /= 3;
                if self.wrap > 0 {
                    *k = k.rem_euclid(self.wrap);
                }
            }
            if self.wrap > 0 && self.wrap < 3 {
                if seen.contains(&key) {
                    continue;
                }
                seen.push(key.clone());
            }
            if let Some(ps) = self.cells.get(&key) {
                ps.iter().for_each(|&p| f(p));
            }
        }
    }

    /// Stored ids strictly within step-0 distance `eps` of `x`.
    pub fn within(&self, x: &[f64], eps: f64) -> Vec<u32> {
        let n = self.n;
        let mut out = Vec::new();
        self.for_each_candidate(x, |pos| {
            let s = pos as usize * n;
            if self.metric.dist_slices(x, &self.coords[s..s + n]) < eps {
                out.push(self.ids[pos as usize]);
            }
        });
        out.sort_unstable();
        out
    }
}

/// Index over the step-0 coordinates of every cloud point.
pub fn build_spatial_index(cloud: &SampleCloud, eps: f64) -> SpatialIndex {
    let mut idx = SpatialIndex::new(cloud.dim(), cloud.metric(), eps);
    for i in 0..cloud.len() {
        idx.insert(i as u32, cloud.start(i));
    }
    idx
}
