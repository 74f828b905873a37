//! Max-norm geometry of R^n: points, axis-aligned rectangles with labelled
//! faces, and the dynamical metric `d_k`.
//!
//! Cube domains use the max norm. Torus domains (unit period on every axis)
//! use the circle distance per coordinate and then take the max over axes.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::systems::SystemHandle;

/// Default absolute tolerance for float comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A point of R^n. Coordinates are stored inline for n <= 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(SmallVec<[f64; 4]>);

impl Point {
    pub fn new(coords: impl IntoIterator<Item = f64>) -> Result<Self> {
        let coords: SmallVec<[f64; 4]> = coords.into_iter().collect();
        if coords.is_empty() {
            return Err(Error::InvalidParams("point must have dimension >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("point coordinates must be finite".into()));
        }
        Ok(Point(coords))
    }

    /// Builds a point without validation. Callers guarantee finiteness.
    pub(crate) fn from_slice(coords: &[f64]) -> Self {
        Point(SmallVec::from_slice(coords))
    }

    pub fn zeros(n: usize) -> Self {
        Point(SmallVec::from_elem(0.0, n))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Last coordinate, written `π_n(u)` in the Markovian intersection condition.
    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Max norm `‖u‖ = max |u_i|`.
pub fn max_norm(u: &Point) -> f64 {
    u.coords().iter().fold(0.0_f64, |acc, c| acc.max(c.abs()))
}

/// Max-norm distance between two points.
pub fn max_dist(a: &Point, b: &Point) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(max_dist_slices(a.coords(), b.coords()))
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension { expected, found });
    }
    Ok(())
}

#[inline]
pub(crate) fn max_dist_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

#[inline]
pub(crate) fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Ambient metric of a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Max norm on R^n.
    Max,
    /// Unit torus R^n / Z^n with coordinatewise circle distance, max over axes.
    Torus,
}

impl Metric {
    #[inline]
    pub fn dist_slices(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Max => max_dist_slices(a, b),
            Metric::Torus => a
                .iter()
                .zip(b)
                .fold(0.0_f64, |acc, (x, y)| acc.max(circle_dist(*x, *y))),
        }
    }

    pub fn dist(self, a: &Point, b: &Point) -> Result<f64> {
        check_dim(a.dim(), b.dim())?;
        Ok(self.dist_slices(a.coords(), b.coords()))
    }

    /// `d_k` between two cached orbits stored as `k` consecutive points of
    /// dimension `n`. Returns early once `stop_at` is reached, since callers
    /// only compare against a threshold.
    #[inline]
    pub(crate) fn orbit_dist(self, a: &[f64], b: &[f64], n: usize, k: usize, stop_at: f64) -> f64 {
        let mut best = 0.0_f64;
        for i in 0..k {
            let s = i * n;
            best = best.max(self.dist_slices(&a[s..s + n], &b[s..s + n]));
            if best >= stop_at {
                break;
            }
        }
        best
    }
}

/// Closed axis-aligned box `[a_1, b_1] × … × [a_n, b_n]` with `a_i < b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    lo: Point,
    hi: Point,
}

impl Rectangle {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        check_dim(lo.dim(), hi.dim())?;
        if let Some(i) = (0..lo.dim()).find(|&i| lo[i].partial_cmp(&hi[i]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::InvalidParams(format!(
                "rectangle needs a_i < b_i on every axis, axis {} has [{}, {}]",
                i + 1,
                lo[i],
                hi[i]
            )));
        }
        Ok(Rectangle { lo, hi })
    }

    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Rectangle::new(Point::new(lo.iter().copied())?, Point::new(hi.iter().copied())?)
    }

    /// The cube `[-r, r]^n`, i.e. the closed max-norm ball `B^n_r`.
    pub fn cube(n: usize, r: f64) -> Result<Self> {
        Rectangle::from_bounds(&vec![-r; n], &vec![r; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn center(&self) -> Point {
        Point::from_slice(
            &(0..self.dim())
                .map(|i| 0.5 * (self.lo[i] + self.hi[i]))
                .collect::<SmallVec<[f64; 4]>>(),
        )
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.dim() == self.dim() && self.contains_slice(x.coords())
    }

    #[inline]
    pub(crate) fn contains_slice(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &c)| self.lo[i] <= c && c <= self.hi[i])
    }

    /// Intersection of closed boxes; `None` if empty or degenerate.
    pub fn intersection(&self, other: &Rectangle) -> Option<Rectangle> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: SmallVec<[f64; 4]> = (0..self.dim()).map(|i| self.lo[i].max(other.lo[i])).collect();
        let hi: SmallVec<[f64; 4]> = (0..self.dim()).map(|i| self.hi[i].min(other.hi[i])).collect();
        Rectangle::from_bounds(&lo, &hi).ok()
    }

    /// Whether the closed boxes share at least one point.
    pub fn intersects(&self, other: &Rectangle) -> bool {
        self.dim() == other.dim() && (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    pub fn translated(&self, t: &[f64]) -> Result<Rectangle> {
        check_dim(self.dim(), t.len())?;
        let lo: SmallVec<[f64; 4]> = (0..self.dim()).map(|i| self.lo[i] + t[i]).collect();
        let hi: SmallVec<[f64; 4]> = (0..self.dim()).map(|i| self.hi[i] + t[i]).collect();
        Rectangle::from_bounds(&lo, &hi)
    }
}

/// Exact max-norm set distance `inf{‖a − b‖ : a ∈ A, b ∈ B}`.
///
/// The max norm decouples per axis, so the distance is the largest per-axis
/// interval gap. It is zero iff the closed rectangles intersect.
pub fn rect_distance(a: &Rectangle, b: &Rectangle) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok((0..a.dim()).fold(0.0_f64, |acc, i| {
        let gap = (b.lo[i] - a.hi[i]).max(a.lo[i] - b.hi[i]).max(0.0);
        acc.max(gap)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Minus,
    Plus,
}

/// One of the `2n` faces of a rectangle. Axes are 0-based here; the
/// horizontal faces are the two with `axis == n - 1`.
#[derive(Debug, Clone, Copy)]
pub struct Face<'a> {
    pub parent: &'a Rectangle,
    pub axis: usize,
    pub side: Side,
}

impl Face<'_> {
    pub fn is_horizontal(&self) -> bool {
        self.axis + 1 == self.parent.dim()
    }

    /// Coordinate of the face's supporting hyperplane.
    pub fn level(&self) -> f64 {
        match self.side {
            Side::Minus => self.parent.lo[self.axis],
            Side::Plus => self.parent.hi[self.axis],
        }
    }

    /// Whether `x` lies on this (closed) face.
    pub fn contains(&self, x: &Point) -> bool {
        self.parent.contains(x) && x[self.axis] == self.level()
    }

    /// Lattice of `res` points per free axis covering the face. Endpoints are
    /// hit exactly.
    pub fn sample_lattice(&self, res: usize) -> Vec<Point> {
        let n = self.parent.dim();
        let free: Vec<usize> = (0..n).filter(|&i| i != self.axis).collect();
        let mut out = Vec::new();
        let total = res.pow(free.len() as u32);
        for idx in 0..total {
            let mut c: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, n);
            c[self.axis] = self.level();
            let mut rem = idx;
            for &ax in &free {
                let i = rem % res;
                rem /= res;
                c[ax] = if res > 1 && i == res - 1 {
                    self.parent.hi[ax]
                } else {
                    self.parent.lo[ax] + lattice_coord(i, res) * self.parent.width(ax)
                };
            }
            out.push(Point(c));
        }
        out
    }
}

pub(crate) fn lattice_coord(i: usize, res: usize) -> f64 {
    if res <= 1 {
        0.5
    } else {
        i as f64 / (res - 1) as f64
    }
}

/// All `2n` faces: for each axis the minus face then the plus face. The last
/// two entries are the horizontal faces `R⁻`, `R⁺`.
pub fn faces_of(r: &Rectangle) -> Vec<Face<'_>> {
    (0..r.dim())
        .flat_map(|axis| {
            [Side::Minus, Side::Plus]
                .into_iter()
                .map(move |side| Face { parent: r, axis, side })
        })
        .collect()
}

/// Validated `(system, k, ε)` triple defining `d_k` and the dynamical ball
/// `B_(k,ε)(x) = {y : d_k(x, y) < ε}`.
#[derive(Debug, Clone)]
pub struct DynMetricQuery<'a> {
    system: &'a SystemHandle,
    steps: usize,
    radius: f64,
}

impl<'a> DynMetricQuery<'a> {
    pub fn new(system: &'a SystemHandle, steps: usize, radius: f64) -> Result<Self> {
        if steps < 1 {
            return Err(Error::InvalidParams("steps must be >= 1".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParams("radius must be positive".into()));
        }
        Ok(DynMetricQuery { system, steps, radius })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        dyn_distance(self.system, self.steps, x, y)
    }

    /// `y ∈ B_(k,ε)(x)`.
    pub fn in_ball(&self, center: &Point, y: &Point) -> Result<bool> {
        Ok(self.distance(center, y)? < self.radius)
    }
}

/// `d_k(x, y) = max_{0 ≤ i < k} d(T^i x, T^i y)`, iterating each point once.
pub fn dyn_distance(sys: &SystemHandle, k: usize, x: &Point, y: &Point) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidParams("k must be >= 1".into()));
    }
    check_dim(sys.dim(), x.dim())?;
    check_dim(sys.dim(), y.dim())?;
    let ox = sys.orbit(x, k)?;
    let oy = sys.orbit(y, k)?;
    let escaped = [ox.escaped_at, oy.escaped_at].into_iter().flatten().min();
    if let Some(step) = escaped {
        return Err(Error::OrbitEscaped(step));
    }
    let metric = sys.metric();
    Ok(ox.points.iter().zip(&oy.points).fold(0.0_f64, |acc, (a, b)| {
        acc.max(metric.dist_slices(a.coords(), b.coords()))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[f64]) -> Point {
        Point::new(c.iter().copied()).unwrap()
    }

    fn rect(lo: &[f64], hi: &[f64]) -> Rectangle {
        Rectangle::from_bounds(lo, hi).unwrap()
    }

    #[test]
    fn max_norm_examples() {
        assert_eq!(max_norm(&p(&[0.0, 0.0])), 0.0);
        assert_eq!(max_norm(&p(&[0.3, -0.5])), 0.5);
        assert_eq!(max_norm(&p(&[0.25, 0.25, 0.25])), 0.25);
    }

    #[test]
    fn max_dist_dimension_mismatch() {
        let e = max_dist(&p(&[0.0]), &p(&[0.0, 1.0])).unwrap_err();
        assert_eq!(e, Error::Dimension { expected: 1, found: 2 });
    }

    #[test]
    fn point_rejects_non_finite() {
        assert!(Point::new([f64::NAN]).is_err());
        assert!(Point::new(std::iter::empty()).is_err());
    }

    #[test]
    fn rectangle_requires_strict_bounds() {
        assert!(Rectangle::from_bounds(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(Rectangle::from_bounds(&[0.0], &[1.0, 1.0]).is_err());
    }

    /// Brute-force set distance over a lattice on the boundaries of both boxes.
    fn brute_rect_distance(a: &Rectangle, b: &Rectangle, res: usize) -> f64 {
        let sa: Vec<Point> = faces_of(a).iter().flat_map(|f| f.sample_lattice(res)).collect();
        let sb: Vec<Point> = faces_of(b).iter().flat_map(|f| f.sample_lattice(res)).collect();
        let mut best = f64::INFINITY;
        for x in &sa {
            for y in &sb {
                best = best.min(max_dist(x, y).unwrap());
            }
        }
        best
    }

    #[test]
    fn rect_distance_examples() {
        let a = rect(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(rect_distance(&a, &rect(&[0.5, 0.0], &[2.0, 1.0])).unwrap(), 0.0);
        assert_eq!(rect_distance(&a, &rect(&[2.0, 0.0], &[3.0, 1.0])).unwrap(), 1.0);
        let far = rect(&[2.0, 5.0], &[3.0, 6.0]);
        let brute = brute_rect_distance(&a, &far, 21);
        assert_eq!(brute, 4.0);
        assert_eq!(rect_distance(&a, &far).unwrap(), brute);
    }

    #[test]
    fn faces_counts() {
        let sq = rect(&[0.0, 0.0], &[1.0, 1.0]);
        let f = faces_of(&sq);
        assert_eq!(f.len(), 4);
        assert_eq!(f.iter().filter(|f| f.is_horizontal()).count(), 2);
        // bottom/top are the horizontal ones, at y = 0 and y = 1
        let levels: Vec<f64> = f.iter().filter(|f| f.is_horizontal()).map(|f| f.level()).collect();
        assert_eq!(levels, vec![0.0, 1.0]);

        let cube = Rectangle::cube(3, 0.5).unwrap();
        let f = faces_of(&cube);
        assert_eq!(f.len(), 6);
        assert_eq!(f.iter().filter(|f| f.is_horizontal()).count(), 2);

        let seg = rect(&[0.0], &[1.0]);
        let f = faces_of(&seg);
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|f| f.is_horizontal()));
    }

    #[test]
    fn faces_cover_boundary() {
        let r = rect(&[0.0, -1.0, 2.0], &[1.0, 1.0, 3.0]);
        let faces = faces_of(&r);
        // boundary points lie on some face, interior points on none
        for x in faces.iter().flat_map(|f| f.sample_lattice(5)) {
            assert!(faces.iter().any(|f| f.contains(&x)));
        }
        let c = r.center();
        assert!(!faces.iter().any(|f| f.contains(&c)));
    }

    #[test]
    fn torus_metric_wraps() {
        let d = Metric::Torus.dist(&p(&[0.95, 0.1]), &p(&[0.05, 0.2])).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rect_distance_zero_iff_intersect() {
        let a = rect(&[0.0, 0.0], &[1.0, 1.0]);
        let touching = rect(&[1.0, 0.5], &[2.0, 2.0]);
        assert!(a.intersects(&touching));
        assert_eq!(rect_distance(&a, &touching).unwrap(), 0.0);
        let apart = rect(&[1.0 + 1e-6, 0.5], &[2.0, 2.0]);
        assert!(!a.intersects(&apart));
        assert!(rect_distance(&a, &apart).unwrap() > 0.0);
    }
}
