//! Evaluatable self-maps with escape semantics, plus known-answer systems
//! used to calibrate the estimators.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::geometry::{check_dim, Metric, Point, Rectangle};
use crate::horseshoe::{build_chained, build_pseudo_horseshoe, ChainedHorseshoe, HorseshoeParams, PseudoHorseshoe};

/// Phase space of a system.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// A closed box with the max-norm metric.
    Cube(Rectangle),
    /// The unit torus `R^n / Z^n`; coordinates are kept in `[0, 1)`.
    Torus,
}

#[derive(Debug, Clone)]
pub enum SystemKind {
    Identity,
    /// `x ↦ x + α mod 1`.
    Rotation(Vec<f64>),
    /// `x ↦ 2x mod 1` on every coordinate.
    Doubling,
    /// `(x, y) ↦ (2x + y, x + y) mod 1`.
    CatMap,
    /// Pseudo-horseshoe in chart coordinates.
    Horseshoe(Arc<PseudoHorseshoe>),
    /// Chained horseshoe in ambient coordinates.
    Chained(Arc<ChainedHorseshoe>),
    /// `parts[0] ∘ parts[1] ∘ …`, applied right to left.
    Composed(Vec<SystemHandle>),
}

#[derive(Debug, Clone)]
pub struct SystemHandle {
    dimension: usize,
    domain: Domain,
    kind: SystemKind,
}

/// `T^0 x, …, T^{len−1} x`. `escaped_at = Some(i)` means `T^i x` is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSegment {
    pub start: Point,
    pub points: Vec<Point>,
    pub escaped_at: Option<usize>,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[inline]
fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl SystemHandle {
    pub fn identity_cube(domain: Rectangle) -> Self {
        SystemHandle {
            dimension: domain.dim(),
            domain: Domain::Cube(domain),
            kind: SystemKind::Identity,
        }
    }

    pub fn identity_torus(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParams("dimension must be >= 1".into()));
        }
        Ok(SystemHandle {
            dimension: n,
            domain: Domain::Torus,
            kind: SystemKind::Identity,
        })
    }

    pub fn rotation(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() || angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParams("rotation needs finite angles".into()));
        }
        Ok(SystemHandle {
            dimension: angles.len(),
            domain: Domain::Torus,
            kind: SystemKind::Rotation(angles),
        })
    }

    pub fn doubling(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParams("dimension must be >= 1".into()));
        }
        Ok(SystemHandle {
            dimension: n,
            domain: Domain::Torus,
            kind: SystemKind::Doubling,
        })
    }

    pub fn cat_map() -> Self {
        SystemHandle {
            dimension: 2,
            domain: Domain::Torus,
            kind: SystemKind::CatMap,
        }
    }

    pub fn horseshoe(h: Arc<PseudoHorseshoe>) -> Self {
        SystemHandle {
            dimension: h.dim(),
            domain: Domain::Cube(h.chart_cube()),
            kind: SystemKind::Horseshoe(h),
        }
    }

    pub fn chained(h: Arc<ChainedHorseshoe>) -> Self {
        SystemHandle {
            dimension: h.dim(),
            domain: Domain::Cube(h.ambient().clone()),
            kind: SystemKind::Chained(h),
        }
    }

    /// `parts[0] ∘ … ∘ parts[last]`. The input domain is that of the last part.
    pub fn composed(parts: Vec<SystemHandle>) -> Result<Self> {
        let last = parts
            .last()
            .ok_or_else(|| Error::InvalidParams("empty composition".into()))?;
        let (dimension, domain) = (last.dimension, last.domain.clone());
        for p in &parts {
            check_dim(dimension, p.dimension)?;
            if p.metric() != last.metric() {
                return Err(Error::InvalidParams("composition mixes cube and torus domains".into()));
            }
        }
        Ok(SystemHandle {
            dimension,
            domain,
            kind: SystemKind::Composed(parts),
        })
    }

    pub fn dim(&self) -> usize {
        self.dimension
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn metric(&self) -> Metric {
        match self.domain {
            Domain::Cube(_) => Metric::Max,
            Domain::Torus => Metric::Torus,
        }
    }

    /// Bounding box used to place lattices and uniform samples.
    pub fn bounding_box(&self) -> Rectangle {
        match &self.domain {
            Domain::Cube(r) => r.clone(),
            Domain::Torus => Rectangle::from_bounds(&vec![0.0; self.dimension], &vec![1.0; self.dimension])
                .expect("unit box is valid"),
        }
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.dimension
            && match &self.domain {
                Domain::Cube(r) => r.contains_slice(x),
                Domain::Torus => x.iter().all(|c| c.is_finite()),
            }
    }

    /// Pseudo-horseshoe behind this system, if it is one.
    pub fn as_horseshoe(&self) -> Option<&Arc<PseudoHorseshoe>> {
        match &self.kind {
            SystemKind::Horseshoe(h) => Some(h),
            _ => None,
        }
    }

    pub fn as_chained(&self) -> Option<&Arc<ChainedHorseshoe>> {
        match &self.kind {
            SystemKind::Chained(h) => Some(h),
            _ => None,
        }
    }

    /// One step on raw coordinates already in the domain; `false` on escape.
    pub(crate) fn step_slice(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.kind {
            SystemKind::Identity => {
                out.copy_from_slice(x);
                true
            }
            SystemKind::Rotation(a) => {
                for i in 0..x.len() {
                    out[i] = wrap(x[i] + a[i]);
                }
                true
            }
            SystemKind::Doubling => {
                for i in 0..x.len() {
                    out[i] = wrap(2.0 * x[i]);
                }
                true
            }
            SystemKind::CatMap => {
                let (u, v) = (x[0], x[1]);
                out[0] = wrap(2.0 * u + v);
                out[1] = wrap(u + v);
                true
            }
            SystemKind::Horseshoe(h) => h.apply_slice(x, out),
            SystemKind::Chained(h) => h.apply_slice(x, out),
            SystemKind::Composed(parts) => {
                let mut cur: SmallVec<[f64; 4]> = SmallVec::from_slice(x);
                for p in parts.iter().rev() {
                    if !p.in_domain(&cur) || !p.step_slice(&cur, out) {
                        return false;
                    }
                    cur.copy_from_slice(out);
                }
                true
            }
        }
    }

    /// Single application of the map. Escape is reported as
    /// [`Error::EvaluationEscaped`], a point outside the domain as [`Error::Domain`].
    pub fn evaluate(&self, x: &Point) -> Result<Point> {
        check_dim(self.dimension, x.dim())?;
        if !self.in_domain(x.coords()) {
            return Err(Error::Domain);
        }
        let mut out = x.clone();
        if self.step_slice(x.coords(), out.coords_mut()) {
            Ok(out)
        } else {
            Err(Error::EvaluationEscaped)
        }
    }

    /// Torus inputs are reduced into `[0, 1)` first; cube inputs must lie in
    /// the box.
    pub(crate) fn normalize(&self, x: &mut [f64]) -> Result<()> {
        if !self.in_domain(x) {
            return Err(Error::Domain);
        }
        if self.domain == Domain::Torus {
            x.iter_mut().for_each(|c| *c = wrap(*c));
        }
        Ok(())
    }

    /// Orbit segment of length `min(m, escape step)`. Escape is data, not an error.
    pub fn orbit(&self, x: &Point, m: usize) -> Result<OrbitSegment> {
        if m < 1 {
            return Err(Error::InvalidParams("orbit length must be >= 1".into()));
        }
        check_dim(self.dimension, x.dim())?;
        let mut start = x.clone();
        self.normalize(start.coords_mut())?;
        let mut buf = Vec::with_capacity(m * self.dimension);
        let len = self.orbit_into(start.coords(), m, &mut buf);
        let points = buf.chunks_exact(self.dimension).map(Point::from_slice).collect();
        Ok(OrbitSegment {
            start,
            points,
            escaped_at: (len < m).then_some(len),
        })
    }

    /// Appends up to `m` orbit points of a normalized start to `buf`; returns
    /// how many were defined.
    pub(crate) fn orbit_into(&self, x: &[f64], m: usize, buf: &mut Vec<f64>) -> usize {
        let n = self.dimension;
        let base = buf.len();
        buf.extend_from_slice(x);
        let mut out: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, n);
        for i in 1..m {
            let s = base + (i - 1) * n;
            if !self.step_slice(&buf[s..s + n], &mut out) {
                return i;
            }
            buf.extend_from_slice(&out);
        }
        m
    }
}

fn one() -> usize {
    1
}

/// Config-file description of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemDescriptor {
    Identity {
        #[serde(default = "one")]
        dimension: usize,
        #[serde(default)]
        torus: bool,
    },
    Rotation {
        angles: Vec<f64>,
    },
    Doubling {
        #[serde(default = "one")]
        dimension: usize,
    },
    CatMap,
    Horseshoe {
        params: HorseshoeParams,
    },
    Chained {
        params: HorseshoeParams,
        p: usize,
        c: f64,
        #[serde(default)]
        seed: u64,
    },
    Composed {
        parts: Vec<SystemDescriptor>,
    },
}

impl SystemDescriptor {
    pub fn build(&self) -> Result<SystemHandle> {
        match self {
            SystemDescriptor::Identity { dimension, torus: true } => SystemHandle::identity_torus(*dimension),
            SystemDescriptor::Identity {
                dimension,
                torus: false,
            } => {
                if *dimension < 1 {
                    return Err(Error::InvalidParams("dimension must be >= 1".into()));
                }
                Ok(SystemHandle::identity_cube(Rectangle::from_bounds(
                    &vec![0.0; *dimension],
                    &vec![1.0; *dimension],
                )?))
            }
            SystemDescriptor::Rotation { angles } => SystemHandle::rotation(angles.clone()),
            SystemDescriptor::Doubling { dimension } => SystemHandle::doubling(*dimension),
            SystemDescriptor::CatMap => Ok(SystemHandle::cat_map()),
            SystemDescriptor::Horseshoe { params } => {
                Ok(SystemHandle::horseshoe(Arc::new(build_pseudo_horseshoe(params)?)))
            }
            SystemDescriptor::Chained { params, p, c, seed } => {
                Ok(SystemHandle::chained(Arc::new(build_chained(params, *p, *c, *seed)?)))
            }
            SystemDescriptor::Composed { parts } => {
                SystemHandle::composed(parts.iter().map(|p| p.build()).collect::<Result<_>>()?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dyn_distance;

    fn p(c: &[f64]) -> Point {
        Point::new(c.iter().copied()).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let id = SystemHandle::identity_torus(2).unwrap();
        assert_eq!(id.evaluate(&p(&[0.3, 0.7])).unwrap(), p(&[0.3, 0.7]));
        let d = SystemHandle::doubling(1).unwrap();
        assert_eq!(d.evaluate(&p(&[0.3])).unwrap(), p(&[0.6]));
        let cat = SystemHandle::cat_map().evaluate(&p(&[0.2, 0.1])).unwrap();
        // (2·0.2 + 0.1, 0.2 + 0.1)
        assert!((cat[0] - 0.5).abs() < 1e-15 && (cat[1] - 0.3).abs() < 1e-15);
        let cat = SystemHandle::cat_map().evaluate(&p(&[0.5, 0.5])).unwrap();
        assert_eq!(cat, p(&[0.5, 0.0]));
    }

    #[test]
    fn orbit_examples() {
        let id = SystemHandle::identity_torus(1).unwrap();
        let o = id.orbit(&p(&[0.25]), 5).unwrap();
        assert_eq!(o.points, vec![p(&[0.25]); 5]);
        assert_eq!(o.escaped_at, None);

        let d = SystemHandle::doubling(1).unwrap();
        let o = d.orbit(&p(&[0.1]), 4).unwrap();
        let expect = [0.1, 0.2, 0.4, 0.8];
        for (a, b) in o.points.iter().zip(expect) {
            assert!((a[0] - b).abs() < 1e-15);
        }
    }

    #[test]
    fn horseshoe_escape_is_data() {
        let h = build_pseudo_horseshoe(&HorseshoeParams::new(2, 0.25, 1).unwrap()).unwrap();
        let sys = SystemHandle::horseshoe(Arc::new(h));
        let o = sys.orbit(&p(&[0.0, 0.0]), 3).unwrap();
        assert_eq!(o.escaped_at, Some(1));
        assert_eq!(o.len(), 1);
        assert_eq!(sys.evaluate(&p(&[0.0, 0.0])), Err(Error::EvaluationEscaped));
        assert_eq!(sys.evaluate(&p(&[0.9, 0.0])), Err(Error::Domain));
    }

    #[test]
    fn doubling_dyn_distance_matches_table() {
        let d = SystemHandle::doubling(1).unwrap();
        let dist = dyn_distance(&d, 3, &p(&[0.0]), &p(&[0.1])).unwrap();
        // orbit table: 0.1, 0.2, 0.4 against 0, 0, 0
        assert!((dist - 0.4).abs() < 1e-15);
        assert!((dyn_distance(&d, 1, &p(&[0.0]), &p(&[0.1])).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn composition_runs_right_to_left() {
        let rot = SystemHandle::rotation(vec![0.25]).unwrap();
        let dbl = SystemHandle::doubling(1).unwrap();
        // doubling after rotation: 2(0.1 + 0.25) = 0.7
        let c = SystemHandle::composed(vec![dbl.clone(), rot.clone()]).unwrap();
        assert!((c.evaluate(&p(&[0.1])).unwrap()[0] - 0.7).abs() < 1e-15);
        // rotation after doubling: 0.2 + 0.25
        let c = SystemHandle::composed(vec![rot, dbl]).unwrap();
        assert!((c.evaluate(&p(&[0.1])).unwrap()[0] - 0.45).abs() < 1e-15);
        let cube = SystemHandle::identity_cube(Rectangle::cube(1, 1.0).unwrap());
        assert!(SystemHandle::composed(vec![cube, SystemHandle::doubling(1).unwrap()]).is_err());
    }

    #[test]
    fn composition_short_circuits_escape() {
        let h = Arc::new(build_pseudo_horseshoe(&HorseshoeParams::new(2, 0.25, 1).unwrap()).unwrap());
        let sys = SystemHandle::composed(vec![
            SystemHandle::horseshoe(h.clone()),
            SystemHandle::horseshoe(h.clone()),
        ])
        .unwrap();
        let x = h.piece(0, 0).slab_rect().center();
        // the slab center maps to mid-rectangle, which lies between slabs
        assert_eq!(sys.evaluate(&x), Err(Error::EvaluationEscaped));
    }

    #[test]
    fn descriptors_parse_from_toml() {
        let d: SystemDescriptor = toml::from_str("kind = \"doubling\"").unwrap();
        assert_eq!(d, SystemDescriptor::Doubling { dimension: 1 });
        let d: SystemDescriptor =
            toml::from_str("kind = \"chained\"\np = 3\nc = 1.5\n[params]\nn = 2\ndelta = 0.25\nk = 1\n").unwrap();
        let sys = d.build().unwrap();
        assert_eq!(sys.as_chained().unwrap().period(), 3);
        let d: SystemDescriptor = toml::from_str("kind = \"identity\"\ndimension = 2").unwrap();
        assert_eq!(d.build().unwrap().metric(), Metric::Max);
    }
}
