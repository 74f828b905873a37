use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::affine::{q_from_f64, q_to_f64, qi, RatBox, Q};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rectangle};

/// Default cap on stored Markov pieces (`N_k²`).
pub const DEFAULT_MAX_PIECES: usize = 1 << 22;

/// `(n, δ, k)` plus the packing knob `fill`.
///
/// Derived: `ε_k = δ/k` and `N_k = (2k)^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeParams {
    pub n: usize,
    pub delta: f64,
    pub k: usize,
    /// Share of the per-axis slack given to rectangle sides, in (0, 1).
    #[serde(default = "default_fill")]
    pub fill: f64,
    #[serde(default = "default_max_pieces")]
    pub max_pieces: usize,
}

fn default_fill() -> f64 {
    0.95
}

fn default_max_pieces() -> usize {
    DEFAULT_MAX_PIECES
}

impl HorseshoeParams {
    pub fn new(n: usize, delta: f64, k: usize) -> Result<Self> {
        let p = HorseshoeParams {
            n,
            delta,
            k,
            fill: default_fill(),
            max_pieces: default_max_pieces(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_fill(mut self, fill: f64) -> Result<Self> {
        self.fill = fill;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParams(format!("n must be >= 2, got {}", self.n)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidParams(format!(
                "delta must lie in (0, 1/2) so B^n_delta sits strictly inside the unit chart cube, got {}",
                self.delta
            )));
        }
        if self.k < 1 {
            return Err(Error::InvalidParams(format!("k must be >= 1, got {}", self.k)));
        }
        if !(self.fill > 0.0 && self.fill < 1.0) {
            return Err(Error::InvalidParams(format!(
                "fill must lie in (0, 1), got {}",
                self.fill
            )));
        }
        Ok(())
    }

    pub fn eps_k(&self) -> f64 {
        self.delta / self.k as f64
    }

    pub fn eps_k_exact(&self) -> Q {
        self.delta_exact() / qi(self.k as i64)
    }

    pub fn delta_exact(&self) -> Q {
        q_from_f64(self.delta).expect("validated delta is finite")
    }

    /// Rectangles per axis, `2k`.
    pub fn per_axis(&self) -> usize {
        2 * self.k
    }

    /// `N_k = (2k)^n`, or `None` on overflow.
    pub fn checked_n_symbols(&self) -> Option<usize> {
        self.per_axis().checked_pow(self.n as u32)
    }

    pub fn n_symbols(&self) -> Result<usize> {
        self.checked_n_symbols()
            .ok_or_else(|| Error::InfeasibleGrid(format!("N_k = (2·{})^{} overflows", self.k, self.n)))
    }

    /// Symbol count usable for piece storage, enforcing the memory budget.
    pub(crate) fn n_symbols_within_budget(&self) -> Result<usize> {
        let nk = self.n_symbols()?;
        match nk.checked_mul(nk) {
            Some(pieces) if pieces <= self.max_pieces => Ok(nk),
            _ => Err(Error::InfeasibleGrid(format!(
                "N_k = {nk} needs N_k^2 pieces, over the budget of {}",
                self.max_pieces
            ))),
        }
    }
}

/// The `N_k` pairwise ε_k-separated rectangles inside `B^n_δ`.
///
/// Regular lattice of `2k` rectangles per axis spanning `[-δ, δ]`. With side
/// `s = fill·ε_k/(2k)` and gap `g = ε_k + (1 − fill)·ε_k/(2k − 1)` the row
/// exactly fills `2δ = 2k·ε_k`, and every pairwise distance is at least
/// `g > ε_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectGrid {
    per_axis: usize,
    n: usize,
    #[serde(with = "crate::affine::q_scalar")]
    side: Q,
    #[serde(with = "crate::affine::q_scalar")]
    gap: Q,
    #[serde(with = "crate::affine::q_scalar")]
    origin: Q,
    rects_exact: Vec<RatBox>,
    #[serde(skip)]
    rects: Vec<Rectangle>,
    #[serde(skip)]
    side_f: f64,
    #[serde(skip)]
    pitch_f: f64,
    #[serde(skip)]
    origin_f: f64,
}

pub fn build_rect_grid(params: &HorseshoeParams) -> Result<RectGrid> {
    params.validate()?;
    let nk = params.n_symbols_within_budget()?;
    let eps = params.eps_k_exact();
    let fill = q_from_f64(params.fill)?;
    let two_k = qi(params.per_axis() as i64);
    let side = &fill * &eps / &two_k;
    let gap = if params.k == 1 {
        &eps + (Q::one() - &fill) * &eps
    } else {
        &eps + (Q::one() - &fill) * &eps / qi(params.per_axis() as i64 - 1)
    };
    let origin = -params.delta_exact();
    let pitch = &side + &gap;

    let mut rects_exact = Vec::with_capacity(nk);
    for flat in 0..nk {
        let idx = multi_index(flat, params.per_axis(), params.n);
        let lo: Vec<Q> = idx.iter().map(|&i| &origin + qi(i as i64) * &pitch).collect();
        let hi: Vec<Q> = lo.iter().map(|a| a + &side).collect();
        rects_exact.push(RatBox::new(lo, hi)?);
    }
    RectGrid::from_parts(params.per_axis(), params.n, side, gap, origin, rects_exact)
}

/// Axis-0-fastest digits of `flat` in base `base`.
pub(crate) fn multi_index(flat: usize, base: usize, n: usize) -> Vec<usize> {
    let mut rem = flat;
    (0..n)
        .map(|_| {
            let d = rem % base;
            rem /= base;
            d
        })
        .collect()
}

impl RectGrid {
    fn from_parts(per_axis: usize, n: usize, side: Q, gap: Q, origin: Q, rects_exact: Vec<RatBox>) -> Result<Self> {
        let mut g = RectGrid {
            per_axis,
            n,
            side,
            gap,
            origin,
            rects_exact,
            rects: Vec::new(),
            side_f: 0.0,
            pitch_f: 0.0,
            origin_f: 0.0,
        };
        g.refresh_cache()?;
        Ok(g)
    }

    pub(crate) fn refresh_cache(&mut self) -> Result<()> {
        self.rects = self.rects_exact.iter().map(RatBox::to_rect).collect::<Result<_>>()?;
        self.side_f = q_to_f64(&self.side);
        self.pitch_f = q_to_f64(&(&self.side + &self.gap));
        self.origin_f = q_to_f64(&self.origin);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rects_exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects_exact.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rects(&self) -> &[Rectangle] {
        &self.rects
    }

    pub fn rects_exact(&self) -> &[RatBox] {
        &self.rects_exact
    }

    pub fn rect(&self, i: usize) -> &Rectangle {
        &self.rects[i]
    }

    pub fn rect_exact(&self, i: usize) -> &RatBox {
        &self.rects_exact[i]
    }

    pub fn side(&self) -> &Q {
        &self.side
    }

    /// Per-axis gap between neighbouring rectangles; the minimum pairwise distance.
    pub fn gap(&self) -> &Q {
        &self.gap
    }

    /// Index of the rectangle containing `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        let mut stride = 1;
        for (axis, &c) in x.iter().enumerate().take(self.n) {
            let t = (c - self.origin_f) / self.pitch_f;
            if t.is_nan() || t < -1.0 {
                return None;
            }
            let guess = t.floor() as isize;
            // rounding can push a face point into a neighbouring cell
            let hit = [guess, guess + 1, guess - 1].into_iter().find(|&i| {
                i >= 0 && (i as usize) < self.per_axis && {
                    let r = &self.rects[i as usize * stride_of(self.per_axis, axis)];
                    r.lo()[axis] <= c && c <= r.hi()[axis]
                }
            })?;
            flat += hit as usize * stride;
            stride *= self.per_axis;
        }
        Some(flat)
    }

    /// Exact minimum pairwise distance over all rectangle pairs.
    pub fn min_pairwise_distance(&self) -> Option<Q> {
        let mut best: Option<Q> = None;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = self.rects_exact[i].distance(&self.rects_exact[j]);
                best = Some(match best {
                    Some(b) if b <= d => b,
                    _ => d,
                });
            }
        }
        best
    }

    /// Whether every rectangle lies in the closed ball `B^n_δ`.
    pub fn inside_ball(&self, delta: &Q) -> bool {
        let ball = RatBox::new(vec![-delta.clone(); self.n], vec![delta.clone(); self.n]).expect("delta > 0");
        self.rects_exact.iter().all(|r| ball.contains_box(r))
    }

    pub fn center(&self, i: usize) -> Point {
        self.rects[i].center()
    }
}

fn stride_of(per_axis: usize, axis: usize) -> usize {
    per_axis.pow(axis as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::q;

    #[test]
    fn params_derived_values() {
        let p = HorseshoeParams::new(2, 0.25, 2).unwrap();
        assert_eq!(p.eps_k(), 0.125);
        assert_eq!(p.eps_k_exact(), q(1, 8));
        assert_eq!(p.n_symbols().unwrap(), 16);
        assert_eq!(HorseshoeParams::new(3, 0.25, 1).unwrap().n_symbols().unwrap(), 8);
    }

    #[test]
    fn params_reject_invalid() {
        assert!(HorseshoeParams::new(1, 0.25, 1).is_err());
        assert!(HorseshoeParams::new(2, 0.5, 1).is_err());
        assert!(HorseshoeParams::new(2, 0.0, 1).is_err());
        assert!(HorseshoeParams::new(2, 0.25, 0).is_err());
        assert!(HorseshoeParams::new(2, 0.25, 1).unwrap().with_fill(1.0).is_err());
    }

    #[test]
    fn grid_k1_four_rects_gap_above_eps() {
        let p = HorseshoeParams::new(2, 0.25, 1).unwrap();
        let g = build_rect_grid(&p).unwrap();
        assert_eq!(g.len(), 4);
        let d = g.min_pairwise_distance().unwrap();
        assert!(d > q(1, 4));
        assert!(g.inside_ball(&p.delta_exact()));
    }

    #[test]
    fn grid_k2_sixteen_rects() {
        let p = HorseshoeParams::new(2, 0.25, 2).unwrap();
        let g = build_rect_grid(&p).unwrap();
        assert_eq!(g.len(), 16);
        assert!(g.min_pairwise_distance().unwrap() > p.eps_k_exact());
        assert!(g.inside_ball(&p.delta_exact()));
        // the outermost rectangles touch the ball boundary exactly
        assert_eq!(g.rect_exact(0).lo[0], q(-1, 4));
        assert_eq!(g.rect_exact(15).hi[1], q(1, 4));
    }

    #[test]
    fn grid_n3_k1_eight_rects() {
        let p = HorseshoeParams::new(3, 0.25, 1).unwrap();
        let g = build_rect_grid(&p).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.min_pairwise_distance().unwrap() > p.eps_k_exact());
    }

    #[test]
    fn grid_budget_enforced() {
        let mut p = HorseshoeParams::new(2, 0.25, 8).unwrap();
        p.max_pieces = 1000;
        assert!(matches!(build_rect_grid(&p), Err(Error::InfeasibleGrid(_))));
    }

    #[test]
    fn locate_finds_centers_and_rejects_gaps() {
        let p = HorseshoeParams::new(2, 0.3, 3).unwrap();
        let g = build_rect_grid(&p).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.locate(g.center(i).coords()), Some(i));
            let r = g.rect(i);
            assert_eq!(g.locate(r.lo().coords()), Some(i));
            assert_eq!(g.locate(r.hi().coords()), Some(i));
        }
        assert_eq!(g.locate(&[0.0, 0.0]), None);
        assert_eq!(g.locate(&[0.49, 0.49]), None);
    }
}
