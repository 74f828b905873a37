//! Exact rational boxes and axis-aligned (diagonal) affine maps.
//!
//! Construction and verification happen in rational arithmetic so that
//! `det = 1`, strict disjointness and containment are decided exactly.
//! Evaluation on points uses cached `f64` coefficients.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rectangle};

pub type Q = BigRational;

pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn qi(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// Exact rational value of a finite double.
pub fn q_from_f64(x: f64) -> Result<Q> {
    Q::from_float(x).ok_or_else(|| Error::InvalidParams(format!("{x} is not finite")))
}

pub fn q_to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub(crate) mod q_string {
    //! Rationals serialize as `"p/q"` strings so documents stay exact.
    use super::Q;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &[Q], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(d)?;
        raw.iter()
            .map(|s| Q::from_str(s).map_err(|e| D::Error::custom(format!("bad rational {s:?}: {e}"))))
            .collect()
    }
}

/// A single rational as a `"p/q"` string.
pub(crate) mod q_scalar {
    use super::Q;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};
    use std::str::FromStr;

    pub fn serialize<S: Serializer>(v: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let raw = String::deserialize(d)?;
        Q::from_str(&raw).map_err(|e| D::Error::custom(format!("bad rational {raw:?}: {e}")))
    }
}

/// Closed box with rational bounds, `lo_i <= hi_i` (degenerate axes allowed).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatBox {
    #[serde(with = "q_string")]
    pub lo: Vec<Q>,
    #[serde(with = "q_string")]
    pub hi: Vec<Q>,
}

impl RatBox {
    pub fn new(lo: Vec<Q>, hi: Vec<Q>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidParams("box bounds must satisfy lo <= hi".into()));
        }
        Ok(RatBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, axis: usize) -> Q {
        &self.hi[axis] - &self.lo[axis]
    }

    pub fn volume(&self) -> Q {
        (0..self.dim()).fold(Q::one(), |acc, i| acc * self.width(i))
    }

    pub fn is_proper(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(a, b)| a < b)
    }

    pub fn intersection(&self, other: &RatBox) -> Option<RatBox> {
        let lo: Vec<Q> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(b).clone()).collect();
        let hi: Vec<Q> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(b).clone()).collect();
        RatBox::new(lo, hi).ok()
    }

    pub fn intersects(&self, other: &RatBox) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    /// Exact max-norm distance, the largest per-axis gap.
    pub fn distance(&self, other: &RatBox) -> Q {
        (0..self.dim()).fold(Q::zero(), |acc, i| {
            let g1 = &other.lo[i] - &self.hi[i];
            let g2 = &self.lo[i] - &other.hi[i];
            acc.max(g1).max(g2)
        })
    }

    pub fn contains_box(&self, other: &RatBox) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    pub fn translated(&self, t: &[Q]) -> RatBox {
        RatBox {
            lo: self.lo.iter().zip(t).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(t).map(|(a, b)| a + b).collect(),
        }
    }

    /// Float rectangle. Fails if the box is degenerate after rounding.
    pub fn to_rect(&self) -> Result<Rectangle> {
        let lo: Vec<f64> = self.lo.iter().map(q_to_f64).collect();
        let hi: Vec<f64> = self.hi.iter().map(q_to_f64).collect();
        Rectangle::from_bounds(&lo, &hi)
    }

    pub fn from_rect(r: &Rectangle) -> Result<RatBox> {
        let lo = r.lo().coords().iter().map(|&x| q_from_f64(x)).collect::<Result<_>>()?;
        let hi = r.hi().coords().iter().map(|&x| q_from_f64(x)).collect::<Result<_>>()?;
        RatBox::new(lo, hi)
    }
}

/// `x ↦ diag(scale)·x + shift`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "DiagAffineRepr", into = "DiagAffineRepr")]
pub struct DiagAffine {
    scale: Vec<Q>,
    shift: Vec<Q>,
    scale_f: Vec<f64>,
    shift_f: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DiagAffineRepr {
    #[serde(with = "q_string")]
    scale: Vec<Q>,
    #[serde(with = "q_string")]
    shift: Vec<Q>,
}

impl From<DiagAffineRepr> for DiagAffine {
    fn from(r: DiagAffineRepr) -> Self {
        DiagAffine::new(r.scale, r.shift)
    }
}

impl From<DiagAffine> for DiagAffineRepr {
    fn from(a: DiagAffine) -> Self {
        DiagAffineRepr {
            scale: a.scale,
            shift: a.shift,
        }
    }
}

impl PartialEq for DiagAffine {
    fn eq(&self, other: &Self) -> bool {
        self.scale == other.scale && self.shift == other.shift
    }
}

impl DiagAffine {
    pub fn new(scale: Vec<Q>, shift: Vec<Q>) -> Self {
        assert_eq!(scale.len(), shift.len(), "scale/shift dimension mismatch");
        let scale_f = scale.iter().map(q_to_f64).collect();
        let shift_f = shift.iter().map(q_to_f64).collect();
        DiagAffine {
            scale,
            shift,
            scale_f,
            shift_f,
        }
    }

    pub fn identity(n: usize) -> Self {
        DiagAffine::new(vec![Q::one(); n], vec![Q::zero(); n])
    }

    pub fn translation(t: Vec<Q>) -> Self {
        DiagAffine::new(vec![Q::one(); t.len()], t)
    }

    /// The unique diagonal map with positive scales sending `from` onto `to`.
    pub fn box_to_box(from: &RatBox, to: &RatBox) -> Result<Self> {
        if from.dim() != to.dim() {
            return Err(Error::Dimension {
                expected: from.dim(),
                found: to.dim(),
            });
        }
        if !from.is_proper() {
            return Err(Error::InvalidParams("source box is degenerate".into()));
        }
        let scale: Vec<Q> = (0..from.dim()).map(|i| to.width(i) / from.width(i)).collect();
        let shift: Vec<Q> = (0..from.dim()).map(|i| &to.lo[i] - &scale[i] * &from.lo[i]).collect();
        Ok(DiagAffine::new(scale, shift))
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn scale(&self) -> &[Q] {
        &self.scale
    }

    pub fn shift(&self) -> &[Q] {
        &self.shift
    }

    pub fn scale_f64(&self) -> &[f64] {
        &self.scale_f
    }

    pub fn shift_f64(&self) -> &[f64] {
        &self.shift_f
    }

    pub fn det(&self) -> Q {
        self.scale.iter().fold(Q::one(), |acc, s| acc * s)
    }

    pub fn is_invertible(&self) -> bool {
        self.scale.iter().all(|s| !s.is_zero())
    }

    pub fn apply_exact(&self, x: &[Q]) -> Vec<Q> {
        x.iter()
            .zip(self.scale.iter().zip(&self.shift))
            .map(|(xi, (s, t))| s * xi + t)
            .collect()
    }

    #[inline]
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = self.scale_f[i] * x[i] + self.shift_f[i];
        }
    }

    pub fn apply(&self, x: &Point) -> Point {
        let mut out = x.clone();
        self.apply_slice(x.coords(), out.coords_mut());
        out
    }

    pub fn apply_inverse(&self, y: &Point) -> Point {
        let mut out = y.clone();
        for (i, c) in out.coords_mut().iter_mut().enumerate() {
            *c = (y[i] - self.shift_f[i]) / self.scale_f[i];
        }
        out
    }

    /// Image of a box (a box, possibly degenerate for zero scales).
    pub fn image(&self, b: &RatBox) -> RatBox {
        let mut lo = Vec::with_capacity(b.dim());
        let mut hi = Vec::with_capacity(b.dim());
        for i in 0..b.dim() {
            let u = &self.scale[i] * &b.lo[i] + &self.shift[i];
            let v = &self.scale[i] * &b.hi[i] + &self.shift[i];
            if u <= v {
                lo.push(u);
                hi.push(v);
            } else {
                lo.push(v);
                hi.push(u);
            }
        }
        RatBox { lo, hi }
    }

    pub fn inverse(&self) -> Result<DiagAffine> {
        if !self.is_invertible() {
            return Err(Error::InvalidParams("affine map is singular".into()));
        }
        let scale: Vec<Q> = self.scale.iter().map(|s| s.recip()).collect();
        let shift: Vec<Q> = self.shift.iter().zip(&scale).map(|(t, s)| -(t * s)).collect();
        Ok(DiagAffine::new(scale, shift))
    }

    pub fn preimage(&self, b: &RatBox) -> Result<RatBox> {
        Ok(self.inverse()?.image(b))
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &DiagAffine) -> DiagAffine {
        let scale: Vec<Q> = self.scale.iter().zip(&other.scale).map(|(a, b)| a * b).collect();
        let shift: Vec<Q> = self
            .shift
            .iter()
            .zip(other.scale.iter().zip(&other.shift))
            .map(|(t, (s, u))| s * t + u)
            .collect();
        DiagAffine::new(scale, shift)
    }

    /// Adds `t` to the output.
    pub fn post_translated(&self, t: &[Q]) -> DiagAffine {
        let shift = self.shift.iter().zip(t).map(|(a, b)| a + b).collect();
        DiagAffine::new(self.scale.clone(), shift)
    }

    /// Largest and smallest absolute scale, i.e. the exact max-norm Lipschitz
    /// constants of the map and of its inverse.
    pub fn lipschitz_bounds(&self) -> (Q, Q) {
        let abs: Vec<Q> = self.scale.iter().map(|s| s.abs()).collect();
        let max = abs.iter().cloned().fold(Q::zero(), |a, b| a.max(b));
        let min = abs.iter().cloned().reduce(|a, b| a.min(b)).unwrap_or_else(Q::zero);
        (max, min)
    }
}
