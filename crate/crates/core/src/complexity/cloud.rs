use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Metric, Point};
use crate::horseshoe::{itinerary_cell, words, ItineraryMap, MAX_ENUMERATED_WORDS};
use crate::systems::SystemHandle;

/// Where the points of a cloud came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CloudSource {
    Lattice { res: usize },
    Uniform { seed: u64, count: usize },
    ItineraryCells { depth: usize },
    Measure { seed: u64, count: usize },
    Explicit,
}

/// Finite stand-in for the phase space: distinct start points in
/// lexicographic order with their orbits cached to `horizon` steps.
///
/// Repeated start points are merged into integer weights. Counts of
/// separated sets and covers treat each distinct point once; weights only
/// matter for measure-based covering.
#[derive(Debug, Clone)]
pub struct SampleCloud {
    n: usize,
    horizon: usize,
    metric: Metric,
    orbits: Vec<f64>,
    valid: Vec<usize>,
    weights: Vec<u64>,
    source: CloudSource,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl SampleCloud {
    pub fn from_points(sys: &SystemHandle, points: Vec<Point>, horizon: usize, source: CloudSource) -> Result<Self> {
        Self::from_weighted(sys, points.into_iter().map(|p| (p, 1)).collect(), horizon, source)
    }

    pub fn from_weighted(
        sys: &SystemHandle,
        points: Vec<(Point, u64)>,
        horizon: usize,
        source: CloudSource,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParams("cloud needs at least one point".into()));
        }
        if horizon < 1 {
            return Err(Error::InvalidParams("cloud horizon must be >= 1".into()));
        }
        let n = sys.dim();
        let mut pts = Vec::with_capacity(points.len());
        for (mut p, w) in points {
            if p.dim() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: p.dim(),
                });
            }
            sys.normalize(p.coords_mut())?;
            pts.push((p, w));
        }
        pts.sort_by(|a, b| lex(a.0.coords(), b.0.coords()));
        let mut starts: Vec<Point> = Vec::with_capacity(pts.len());
        let mut weights: Vec<u64> = Vec::with_capacity(pts.len());
        for (p, w) in pts {
            match starts.last() {
                Some(last) if lex(last.coords(), p.coords()).is_eq() => *weights.last_mut().unwrap() += w,
                _ => {
                    starts.push(p);
                    weights.push(w);
                }
            }
        }

        let stride = horizon * n;
        let mut orbits = vec![f64::NAN; starts.len() * stride];
        let mut valid = vec![0usize; starts.len()];
        orbits
            .par_chunks_mut(stride)
            .zip(valid.par_iter_mut())
            .zip(starts.par_iter())
            .for_each_init(
                || Vec::with_capacity(stride),
                |buf, ((row, v), p)| {
                    buf.clear();
                    *v = sys.orbit_into(p.coords(), horizon, buf);
                    row[..buf.len()].copy_from_slice(buf);
                },
            );
        Ok(SampleCloud {
            n,
            horizon,
            metric: sys.metric(),
            orbits,
            valid,
            weights,
            source,
        })
    }

    /// `res` points per axis over the system's bounding box. Torus lattices
    /// use `i/res`; cube lattices include both end points.
    pub fn lattice(sys: &SystemHandle, res: usize, horizon: usize) -> Result<Self> {
        if res < 1 {
            return Err(Error::InvalidParams("lattice resolution must be >= 1".into()));
        }
        let n = sys.dim();
        let total = res
            .checked_pow(n as u32)
            .ok_or_else(|| Error::InvalidParams("lattice too large".into()))?;
        let bbox = sys.bounding_box();
        let torus = sys.metric() == Metric::Torus;
        let coord = |a: usize, i: usize| -> f64 {
            if torus {
                i as f64 / res as f64
            } else if res == 1 {
                bbox.center()[a]
            } else if i == res - 1 {
                bbox.hi()[a]
            } else {
                bbox.lo()[a] + bbox.width(a) * i as f64 / (res - 1) as f64
            }
        };
        let points = (0..total)
            .map(|idx| {
                let mut rem = idx;
                Point::new((0..n).map(|a| {
                    let i = rem % res;
                    rem /= res;
                    coord(a, i)
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        SampleCloud::from_points(sys, points, horizon, CloudSource::Lattice { res })
    }

    /// `count` i.i.d. uniform points in the system's bounding box.
    pub fn uniform(sys: &SystemHandle, count: usize, seed: u64, horizon: usize) -> Result<Self> {
        let points = uniform_points(sys, count, seed)?;
        SampleCloud::from_points(sys, points, horizon, CloudSource::Uniform { seed, count })
    }

    /// One point per itinerary word of length `depth`: the cell center. For
    /// chained horseshoes the centers are mapped to ambient coordinates.
    pub fn itinerary_centers(sys: &SystemHandle, depth: usize, horizon: usize) -> Result<Self> {
        let points = itinerary_centers(sys, depth)?;
        SampleCloud::from_points(sys, points, horizon, CloudSource::ItineraryCells { depth })
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn source(&self) -> &CloudSource {
        &self.source
    }

    pub fn start(&self, i: usize) -> &[f64] {
        let s = i * self.horizon * self.n;
        &self.orbits[s..s + self.n]
    }

    pub fn start_point(&self, i: usize) -> Point {
        Point::new(self.start(i).iter().copied()).expect("stored points are finite")
    }

    /// First `m` orbit points, flattened. Panics if fewer are defined.
    pub fn orbit(&self, i: usize, m: usize) -> &[f64] {
        assert!(
            m <= self.valid[i],
            "orbit {i} is defined for {} steps only",
            self.valid[i]
        );
        let s = i * self.horizon * self.n;
        &self.orbits[s..s + m * self.n]
    }

    /// Number of defined orbit points of point `i`.
    pub fn valid_len(&self, i: usize) -> usize {
        self.valid[i]
    }

    pub fn weight(&self, i: usize) -> u64 {
        self.weights[i]
    }

    pub fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    /// Points whose orbit is defined for `m` steps, in cloud order.
    pub fn eligible(&self, m: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.valid[i] >= m).collect()
    }

    pub(crate) fn check_horizon(&self, m: usize) -> Result<()> {
        if m < 1 || m > self.horizon {
            return Err(Error::InvalidParams(format!("m = {m} outside 1..={}", self.horizon)));
        }
        Ok(())
    }

    /// `d_m` between two stored points, stopping early once `stop_at` is reached.
    #[inline]
    pub(crate) fn dyn_dist(&self, i: usize, j: usize, m: usize, stop_at: f64) -> f64 {
        self.metric
            .orbit_dist(self.orbit(i, m), self.orbit(j, m), self.n, m, stop_at)
    }

    /// Compares up to `samples` stored orbits against fresh evaluation.
    pub fn spot_check(&self, sys: &SystemHandle, samples: usize) -> Result<bool> {
        let step = (self.len() / samples.max(1)).max(1);
        for i in (0..self.len()).step_by(step) {
            let o = sys.orbit(&self.start_point(i), self.horizon)?;
            if o.len() != self.valid[i] {
                return Ok(false);
            }
            let flat: Vec<f64> = o.points.iter().flat_map(|p| p.coords().to_vec()).collect();
            if flat.as_slice() != self.orbit(i, self.valid[i]) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Recipe for building a cloud once the horizon is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cloud", rename_all = "snake_case")]
pub enum CloudSpec {
    Lattice { res: usize },
    Uniform { count: usize, seed: u64 },
    ItineraryCells { depth: usize },
}

impl CloudSpec {
    pub fn build(&self, sys: &SystemHandle, horizon: usize) -> Result<SampleCloud> {
        match *self {
            CloudSpec::Lattice { res } => SampleCloud::lattice(sys, res, horizon),
            CloudSpec::Uniform { count, seed } => SampleCloud::uniform(sys, count, seed, horizon),
            CloudSpec::ItineraryCells { depth } => SampleCloud::itinerary_centers(sys, depth, horizon),
        }
    }
}

pub(crate) fn uniform_points(sys: &SystemHandle, count: usize, seed: u64) -> Result<Vec<Point>> {
    if count < 1 {
        return Err(Error::InvalidParams("sample count must be >= 1".into()));
    }
    let bbox = sys.bounding_box();
    let torus = sys.metric() == Metric::Torus;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            Point::new((0..sys.dim()).map(|a| {
                if torus {
                    rng.random::<f64>()
                } else {
                    rng.random_range(bbox.lo()[a]..=bbox.hi()[a])
                }
            }))
        })
        .collect()
}

/// Centers of all itinerary cells of length `depth` for a horseshoe system.
pub(crate) fn itinerary_centers(sys: &SystemHandle, depth: usize) -> Result<Vec<Point>> {
    if let Some(h) = sys.as_horseshoe() {
        return centers_of(h.as_ref(), depth);
    }
    if let Some(h) = sys.as_chained() {
        let chart = h.chart(0);
        return Ok(centers_of(h.as_ref(), depth)?
            .iter()
            .map(|u| chart.to_ambient(u))
            .collect());
    }
    Err(Error::InvalidParams("itinerary cells need a horseshoe system".into()))
}

fn centers_of<H: ItineraryMap + ?Sized>(h: &H, depth: usize) -> Result<Vec<Point>> {
    if depth < 1 {
        return Err(Error::InvalidParams("itinerary depth must be >= 1".into()));
    }
    let nk = h.n_symbols();
    match (nk as u64).checked_pow(depth as u32) {
        Some(t) if t <= MAX_ENUMERATED_WORDS => {}
        _ => {
            return Err(Error::InvalidParams(format!(
                "{nk}^{depth} itinerary cells is too many"
            )))
        }
    }
    words(nk, depth).map(|w| Ok(itinerary_cell(h, &w)?.center())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rectangle;

    #[test]
    fn lattice_is_sorted_and_deduplicated() {
        let sys = SystemHandle::identity_cube(Rectangle::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
        let c = SampleCloud::lattice(&sys, 5, 2).unwrap();
        assert_eq!(c.len(), 25);
        assert!((1..c.len()).all(|i| lex(c.start(i - 1), c.start(i)).is_lt()));
        let p = Point::new([0.5, 0.5]).unwrap();
        let c = SampleCloud::from_points(&sys, vec![p.clone(), p.clone(), p], 1, CloudSource::Explicit).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.weight(0), 3);
    }

    #[test]
    fn stored_orbits_agree_with_system() {
        let sys = SystemHandle::cat_map();
        let c = SampleCloud::uniform(&sys, 200, 4, 6).unwrap();
        assert!(c.spot_check(&sys, 50).unwrap());
        let sys = SystemHandle::doubling(1).unwrap();
        let c = SampleCloud::lattice(&sys, 64, 5).unwrap();
        assert!(c.spot_check(&sys, 64).unwrap());
    }

    #[test]
    fn uniform_is_reproducible() {
        let sys = SystemHandle::doubling(2).unwrap();
        let a = uniform_points(&sys, 4, 7).unwrap();
        let b = uniform_points(&sys, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, uniform_points(&sys, 4, 8).unwrap());
    }
}
