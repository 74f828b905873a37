use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::affine::{q_from_f64, q_to_f64, qi, DiagAffine, RatBox, Q};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rectangle};

use super::grid::HorseshoeParams;
use super::pieces::{build_pseudo_horseshoe, PseudoHorseshoe};

/// Diagonal affine chart `ψ(x) = D·(x − o)` from ambient space to chart
/// coordinates, defined on `ψ⁻¹(I^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    map: DiagAffine,
    inverse: DiagAffine,
    domain_exact: RatBox,
    domain: Rectangle,
}

impl Chart {
    pub fn new(map: DiagAffine) -> Result<Self> {
        let n = map.dim();
        let unit = RatBox::new(
            vec![-Q::new(1.into(), 2.into()); n],
            vec![Q::new(1.into(), 2.into()); n],
        )?;
        let domain_exact = map.preimage(&unit)?;
        let domain = domain_exact.to_rect()?;
        let inverse = map.inverse()?;
        Ok(Chart {
            map,
            inverse,
            domain_exact,
            domain,
        })
    }

    pub fn map(&self) -> &DiagAffine {
        &self.map
    }

    pub fn domain(&self) -> &Rectangle {
        &self.domain
    }

    pub fn domain_exact(&self) -> &RatBox {
        &self.domain_exact
    }

    pub fn to_chart(&self, x: &Point) -> Point {
        self.map.apply(x)
    }

    pub fn to_ambient(&self, u: &Point) -> Point {
        self.inverse.apply(u)
    }

    /// Exact `(Lip ψ, Lip ψ⁻¹)` in the max norm.
    pub fn lipschitz(&self) -> (Q, Q) {
        let (max, min) = self.map.lipschitz_bounds();
        (max, min.recip())
    }
}

/// Chained `(N_k, p)`-pseudo-horseshoe: `p` stages linked cyclically through
/// charts, `f = ψ_[i+1]⁻¹ ∘ φ_i ∘ ψ_i` on the stage-`i` chart domain.
#[derive(Debug, Clone)]
pub struct ChainedHorseshoe {
    params: HorseshoeParams,
    c_bound: f64,
    seed: u64,
    charts: Vec<Chart>,
    stages: Vec<PseudoHorseshoe>,
    ambient: Rectangle,
}

pub fn build_chained(params: &HorseshoeParams, p: usize, c_bound: f64, seed: u64) -> Result<ChainedHorseshoe> {
    if p < 1 {
        return Err(Error::InvalidParams("period p must be >= 1".into()));
    }
    if !(c_bound > 1.0 && c_bound.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "chart bound C must be > 1, got {c_bound}"
        )));
    }
    let stage = build_pseudo_horseshoe(params)?;
    let n = params.n;
    let c = q_from_f64(c_bound)?;
    let c_inv = c.recip();
    let spacing = qi(c_bound.ceil() as i64 + 1);
    let log_c = c_bound.ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut charts = Vec::with_capacity(p);
    for i in 0..p {
        let scale: Vec<Q> = (0..n)
            .map(|_| {
                let t: f64 = rng.random_range(-1.0..=1.0);
                let s = q_from_f64((t * log_c).exp()).expect("finite scale");
                s.max(c_inv.clone()).min(c.clone())
            })
            .collect();
        let mut origin = vec![Q::from_integer(0.into()); n];
        origin[0] = qi(i as i64) * &spacing;
        let shift: Vec<Q> = scale.iter().zip(&origin).map(|(s, o)| -(s * o)).collect();
        charts.push(Chart::new(DiagAffine::new(scale, shift))?);
    }

    let half = &spacing / qi(2);
    let mut lo = vec![-half.clone(); n];
    let mut hi = vec![half.clone(); n];
    lo[0] = -half.clone();
    hi[0] = qi(p as i64 - 1) * &spacing + &half;
    let ambient = RatBox::new(lo, hi)?.to_rect()?;

    ChainedHorseshoe::from_parts(params.clone(), c_bound, seed, charts, vec![stage; p], ambient)
}

impl ChainedHorseshoe {
    pub fn from_parts(
        params: HorseshoeParams,
        c_bound: f64,
        seed: u64,
        charts: Vec<Chart>,
        stages: Vec<PseudoHorseshoe>,
        ambient: Rectangle,
    ) -> Result<Self> {
        if charts.is_empty() || charts.len() != stages.len() {
            return Err(Error::Format(format!(
                "{} charts for {} stages",
                charts.len(),
                stages.len()
            )));
        }
        for w in charts.windows(2) {
            if w[0].domain_exact.intersects(&w[1].domain_exact) {
                return Err(Error::InvalidParams("chart domains must be pairwise disjoint".into()));
            }
        }
        Ok(ChainedHorseshoe {
            params,
            c_bound,
            seed,
            charts,
            stages,
            ambient,
        })
    }

    pub fn params(&self) -> &HorseshoeParams {
        &self.params
    }

    pub fn period(&self) -> usize {
        self.stages.len()
    }

    pub fn c_bound(&self) -> f64 {
        self.c_bound
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn chart(&self, i: usize) -> &Chart {
        &self.charts[i % self.period()]
    }

    pub fn stages(&self) -> &[PseudoHorseshoe] {
        &self.stages
    }

    pub fn stage(&self, i: usize) -> &PseudoHorseshoe {
        &self.stages[i % self.period()]
    }

    pub(crate) fn stages_mut(&mut self) -> &mut [PseudoHorseshoe] {
        &mut self.stages
    }

    pub fn dim(&self) -> usize {
        self.params.n
    }

    pub fn ambient(&self) -> &Rectangle {
        &self.ambient
    }

    /// Chart whose domain contains the ambient point.
    pub fn chart_of(&self, x: &[f64]) -> Option<usize> {
        self.charts.iter().position(|c| c.domain.contains_slice(x))
    }

    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) -> bool {
        let Some(i) = self.chart_of(x) else {
            return false;
        };
        let n = self.dim();
        let mut u: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, n);
        let mut v: SmallVec<[f64; 4]> = SmallVec::from_elem(0.0, n);
        self.charts[i].map.apply_slice(x, &mut u);
        if !self.stages[i].apply_slice(&u, &mut v) {
            return false;
        }
        self.chart(i + 1).inverse.apply_slice(&v, out);
        true
    }

    pub fn apply(&self, x: &Point) -> Option<Point> {
        let mut out = x.clone();
        self.apply_slice(x.coords(), out.coords_mut()).then_some(out)
    }

    /// Exact bi-Lipschitz constant over all charts; at most `C`.
    pub fn chart_lipschitz(&self) -> Q {
        self.charts
            .iter()
            .map(|c| {
                let (a, b) = c.lipschitz();
                a.max(b)
            })
            .fold(Q::one(), |a, b| a.max(b))
    }

    pub fn chart_lipschitz_f64(&self) -> f64 {
        self.chart_lipschitz().to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest ambient-side distance between two rectangles of one stage.
    pub fn ambient_min_gap(&self) -> f64 {
        let g = self.stages[0].grid().gap().clone();
        self.charts
            .iter()
            .flat_map(|c| c.map.scale().iter().map(|s| q_to_f64(&(&g / s))).collect::<Vec<_>>())
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::max_dist;
    use rand::Rng;

    fn build(p: usize, c: f64) -> ChainedHorseshoe {
        build_chained(&HorseshoeParams::new(2, 0.25, 1).unwrap(), p, c, 11).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        let params = HorseshoeParams::new(2, 0.25, 1).unwrap();
        assert!(build_chained(&params, 0, 1.5, 0).is_err());
        assert!(build_chained(&params, 2, 1.0, 0).is_err());
    }

    #[test]
    fn chart_lipschitz_within_bound() {
        let h = build(4, 1.5);
        assert!(h.chart_lipschitz() <= q_from_f64(1.5).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for chart in h.charts() {
            for _ in 0..10_000 {
                let x = Point::new((0..2).map(|_| rng.random_range(-1.0..1.0))).unwrap();
                let y = Point::new((0..2).map(|_| rng.random_range(-1.0..1.0))).unwrap();
                let d = max_dist(&x, &y).unwrap();
                let r = max_dist(&chart.to_chart(&x), &chart.to_chart(&y)).unwrap() / d;
                assert!((1.0 / 1.5 - 1e-12..=1.5 + 1e-12).contains(&r), "ratio {r}");
            }
        }
    }

    #[test]
    fn p1_is_conjugated_single_horseshoe() {
        let h = build(1, 1.5);
        let stage = h.stage(0);
        let chart = h.chart(0);
        for piece in stage.pieces() {
            let u = piece.slab_rect().center();
            let x = chart.to_ambient(&u);
            let fx = h.apply(&x).unwrap();
            let v = stage.apply(&u).unwrap();
            assert!(max_dist(&chart.to_chart(&fx), &v).unwrap() < 1e-12);
        }
    }

    #[test]
    fn stages_cycle_through_charts() {
        let h = build(3, 2.0);
        let u = h.stage(0).piece(1, 2).slab_rect().center();
        let x = h.chart(0).to_ambient(&u);
        let y = h.apply(&x).unwrap();
        assert_eq!(h.chart_of(y.coords()), Some(1));
        let z = h.apply(&y);
        // the image of a slab center lands mid-rectangle, generally off the slabs
        if let Some(z) = z {
            assert_eq!(h.chart_of(z.coords()), Some(2));
        }
        assert!(h.ambient().contains(&x) && h.ambient().contains(&y));
    }
}
