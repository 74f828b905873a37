//! Symbolic itineraries: the nested cells of points that visit a prescribed
//! sequence of rectangles, and the separation certificate they give.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::affine::{q_to_f64, RatBox, Q};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rectangle};

use super::chained::ChainedHorseshoe;
use super::grid::HorseshoeParams;
use super::pieces::PseudoHorseshoe;

/// Largest word count [`certify_separation`] will enumerate.
pub const MAX_ENUMERATED_WORDS: u64 = 1 << 24;

/// Anything whose dynamics is a sequence of pseudo-horseshoe stages, seen in
/// chart coordinates.
pub trait ItineraryMap {
    fn params(&self) -> &HorseshoeParams;

    /// Stage applied at step `t` (0-based).
    fn stage_at(&self, t: usize) -> &PseudoHorseshoe;

    fn dim(&self) -> usize {
        self.params().n
    }

    fn n_symbols(&self) -> usize {
        self.stage_at(0).n_symbols()
    }

    /// Rectangle indices visited by the orbit of the chart-0 point `u` over
    /// `m` steps, or `None` if it escapes or falls between rectangles.
    fn realize(&self, u: &Point, m: usize) -> Option<Vec<usize>> {
        let orbit = chart_orbit(self, u, m);
        if orbit.len() < m {
            return None;
        }
        orbit
            .iter()
            .enumerate()
            .map(|(t, x)| self.stage_at(t).grid().locate(x.coords()))
            .collect()
    }

    /// Smallest chart-side gap between two distinct rectangles of any stage.
    fn min_chart_gap(&self) -> Q {
        self.stage_at(0).grid().gap().clone()
    }
}

impl ItineraryMap for PseudoHorseshoe {
    fn params(&self) -> &HorseshoeParams {
        PseudoHorseshoe::params(self)
    }

    fn stage_at(&self, _t: usize) -> &PseudoHorseshoe {
        self
    }
}

impl ItineraryMap for ChainedHorseshoe {
    fn params(&self) -> &HorseshoeParams {
        ChainedHorseshoe::params(self)
    }

    fn stage_at(&self, t: usize) -> &PseudoHorseshoe {
        self.stage(t)
    }

    /// Runs the ambient map and reads each iterate in its own chart, so the
    /// glueing through `ψ_[i+1]⁻¹ ∘ φ_i ∘ ψ_i` is exercised too.
    fn realize(&self, u: &Point, m: usize) -> Option<Vec<usize>> {
        let mut x = self.chart(0).to_ambient(u);
        let mut out = Vec::with_capacity(m);
        for t in 0..m {
            if t > 0 {
                x = self.apply(&x)?;
            }
            let v = self.chart(t).to_chart(&x);
            out.push(self.stage(t).grid().locate(v.coords())?);
        }
        Some(out)
    }

    fn min_chart_gap(&self) -> Q {
        self.stages()
            .iter()
            .map(|s| s.grid().gap().clone())
            .reduce(|a, b| a.min(b))
            .expect("at least one stage")
    }
}

/// Sequence `j_1 … j_m` of 0-based rectangle indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItineraryWord {
    symbols: Vec<usize>,
}

impl ItineraryWord {
    pub fn new(symbols: Vec<usize>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidParams("itinerary word must have length >= 1".into()));
        }
        Ok(ItineraryWord { symbols })
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    fn check(&self, nk: usize) -> Result<()> {
        match self.symbols.iter().find(|&&s| s >= nk) {
            Some(s) => Err(Error::InvalidParams(format!("symbol {s} out of range 0..{nk}"))),
            None => Ok(()),
        }
    }
}

/// All `nk^m` words in lexicographic order.
pub fn words(nk: usize, m: usize) -> impl Iterator<Item = ItineraryWord> {
    let mut next = (nk > 0 && m > 0).then(|| vec![0usize; m]);
    std::iter::from_fn(move || {
        let cur = next.take()?;
        let mut succ = cur.clone();
        for pos in (0..m).rev() {
            succ[pos] += 1;
            if succ[pos] < nk {
                next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(ItineraryWord { symbols: cur })
    })
}

/// Exact itinerary cell `K^{m−1}_{j_1…j_m}` in chart-0 coordinates.
///
/// Built backwards: `C_m = R_{j_m}` and `C_t = S_{j_t, j_{t+1}} ∩ A⁻¹(C_{t+1})`.
/// Every cell is a horizontal slab of `R_{j_1}`.
pub fn itinerary_cell_exact<H: ItineraryMap + ?Sized>(h: &H, w: &ItineraryWord) -> Result<RatBox> {
    w.check(h.n_symbols())?;
    let s = w.symbols();
    let m = s.len();
    let mut cell = h.stage_at(m - 1).grid().rect_exact(s[m - 1]).clone();
    for t in (0..m - 1).rev() {
        let piece = h.stage_at(t).piece(s[t], s[t + 1]);
        let pulled = piece.map.preimage(&cell)?;
        cell = piece
            .slab
            .intersection(&pulled)
            .ok_or_else(|| Error::InvalidParams(format!("empty itinerary cell for word {:?}", s)))?;
    }
    Ok(cell)
}

/// Float version of [`itinerary_cell_exact`], fast enough for exhaustive
/// enumeration.
pub fn itinerary_cell<H: ItineraryMap + ?Sized>(h: &H, w: &ItineraryWord) -> Result<Rectangle> {
    w.check(h.n_symbols())?;
    let s = w.symbols();
    let m = s.len();
    let last = h.stage_at(m - 1).grid().rect(s[m - 1]);
    let mut lo: SmallVec<[f64; 4]> = SmallVec::from_slice(last.lo().coords());
    let mut hi: SmallVec<[f64; 4]> = SmallVec::from_slice(last.hi().coords());
    for t in (0..m - 1).rev() {
        let piece = h.stage_at(t).piece(s[t], s[t + 1]);
        let slab = piece.slab_rect();
        let (scale, shift) = (piece.map.scale_f64(), piece.map.shift_f64());
        for a in 0..lo.len() {
            let u = (lo[a] - shift[a]) / scale[a];
            let v = (hi[a] - shift[a]) / scale[a];
            lo[a] = u.min(v).max(slab.lo()[a]);
            hi[a] = u.max(v).min(slab.hi()[a]);
        }
    }
    Rectangle::from_bounds(&lo, &hi).map_err(|_| Error::InvalidParams(format!("itinerary cell for {:?} is empty", s)))
}

/// Chart-side orbit: step `t` uses stage `t`, so iterate `t` is in chart `t`
/// coordinates. Stops early on escape; the result has at most `m` points.
pub fn chart_orbit<H: ItineraryMap + ?Sized>(h: &H, u: &Point, m: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(m);
    if m == 0 {
        return out;
    }
    out.push(u.clone());
    for t in 0..m - 1 {
        match h.stage_at(t).apply(&out[t]) {
            Some(v) => out.push(v),
            None => break,
        }
    }
    out
}

/// Word of rectangles visited by the chart-0 point `u`, if all `m` steps
/// land in rectangles.
pub fn realized_itinerary<H: ItineraryMap + ?Sized>(h: &H, u: &Point, m: usize) -> Option<ItineraryWord> {
    h.realize(u, m).map(|symbols| ItineraryWord { symbols })
}

/// `N_k^m` as an exact big integer.
pub fn symbolic_count(nk: usize, m: usize) -> BigUint {
    BigUint::from(nk).pow(m as u32)
}

/// `m · log N_k`, natural log.
pub fn symbolic_log_count(nk: usize, m: usize) -> f64 {
    m as f64 * (nk as f64).ln()
}

/// Result of checking every itinerary word of length `m`.
#[derive(Debug, Clone, Serialize)]
pub struct SeparationCertificate {
    pub m: usize,
    pub words_checked: u64,
    /// Words whose cell center realizes its own itinerary.
    pub realized: u64,
    /// `N_k^m`.
    pub symbolic: BigUint,
    /// Exact smallest chart-side gap between rectangles of one stage.
    #[serde(serialize_with = "ser_q")]
    pub chart_gap: Q,
    #[serde(serialize_with = "ser_q")]
    pub eps_k: Q,
    /// Lower bound on ambient-side separation, `gap / C`; equal to the chart
    /// gap when there are no charts.
    pub ambient_gap: f64,
}

fn ser_q<S: serde::Serializer>(v: &Q, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl SeparationCertificate {
    /// Chart-side separation holds exactly: distinct words differ at some
    /// step, where the two points sit in distinct rectangles more than
    /// `ε_k` apart.
    pub fn chart_separated(&self) -> bool {
        self.chart_gap > self.eps_k
    }

    /// Size of the certified `(m, ε_k)`-separated set.
    pub fn count(&self) -> BigUint {
        if self.chart_separated() {
            BigUint::from(self.realized)
        } else {
            BigUint::zero()
        }
    }

    /// Certified count equals `N_k^m`.
    pub fn matches_symbolic(&self) -> bool {
        self.count() == self.symbolic
    }

    pub fn log_count(&self) -> f64 {
        self.count().to_f64().map_or(f64::NAN, f64::ln)
    }
}

/// Enumerates all `N_k^m` words, takes each cell's center and checks that its
/// orbit realizes that word. Together with the exact rectangle gap this
/// certifies an `(m, ε_k)`-separated set of the realized size.
pub fn certify_separation<H: ItineraryMap + ?Sized>(
    h: &H,
    m: usize,
    ambient_gap: f64,
) -> Result<SeparationCertificate> {
    if m < 1 {
        return Err(Error::InvalidParams("m must be >= 1".into()));
    }
    let nk = h.n_symbols();
    let symbolic = symbolic_count(nk, m);
    let total = symbolic
        .to_u64()
        .filter(|&t| t <= MAX_ENUMERATED_WORDS)
        .ok_or_else(|| Error::InvalidParams(format!("{nk}^{m} words is too many to enumerate")))?;
    let mut realized = 0u64;
    for w in words(nk, m) {
        let center = itinerary_cell(h, &w)?.center();
        if h.realize(&center, m).as_deref() == Some(w.symbols()) {
            realized += 1;
        }
    }
    Ok(SeparationCertificate {
        m,
        words_checked: total,
        realized,
        symbolic,
        chart_gap: h.min_chart_gap(),
        eps_k: h.params().eps_k_exact(),
        ambient_gap,
    })
}

/// Certificate for a single pseudo-horseshoe (no charts).
pub fn certify_pseudo(h: &PseudoHorseshoe, m: usize) -> Result<SeparationCertificate> {
    certify_separation(h, m, q_to_f64(h.grid().gap()))
}

/// Certificate for a chained horseshoe, with the ambient gap pushed through
/// the charts.
pub fn certify_chained(h: &ChainedHorseshoe, m: usize) -> Result<SeparationCertificate> {
    certify_separation(h, m, h.ambient_min_gap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::horseshoe::{build_chained, build_pseudo_horseshoe};

    fn hs(k: usize) -> PseudoHorseshoe {
        build_pseudo_horseshoe(&HorseshoeParams::new(2, 0.25, k).unwrap()).unwrap()
    }

    fn word(s: &[usize]) -> ItineraryWord {
        ItineraryWord::new(s.to_vec()).unwrap()
    }

    #[test]
    fn words_enumerates_lexicographically() {
        let all: Vec<_> = words(3, 2).collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0].symbols(), &[0, 0]);
        assert_eq!(all[5].symbols(), &[1, 2]);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(words(4, 0).count(), 0);
    }

    #[test]
    fn length_one_cell_is_the_rectangle() {
        let h = hs(1);
        for j in 0..4 {
            assert_eq!(&itinerary_cell_exact(&h, &word(&[j])).unwrap(), h.grid().rect_exact(j));
        }
    }

    #[test]
    fn length_two_cells_are_disjoint_slabs() {
        let h = hs(1);
        let a = itinerary_cell_exact(&h, &word(&[0, 0])).unwrap();
        let b = itinerary_cell_exact(&h, &word(&[0, 1])).unwrap();
        assert!(!a.intersects(&b));
        assert!(h.grid().rect_exact(0).contains_box(&a));
        assert!(h.grid().rect_exact(0).contains_box(&b));
    }

    #[test]
    fn depth_three_cells_disjoint_with_positive_volume() {
        let h = hs(1);
        let cells: Vec<RatBox> = words(4, 3).map(|w| itinerary_cell_exact(&h, &w).unwrap()).collect();
        assert_eq!(cells.len(), 64);
        for (i, a) in cells.iter().enumerate() {
            assert!(a.is_proper() && a.volume() > Q::zero());
            for b in &cells[i + 1..] {
                assert!(!a.intersects(b));
            }
        }
    }

    #[test]
    fn float_cell_matches_exact() {
        let h = hs(2);
        for w in [word(&[3, 7, 15]), word(&[0, 0, 0, 0]), word(&[15, 1])] {
            let exact = itinerary_cell_exact(&h, &w).unwrap().to_rect().unwrap();
            let approx = itinerary_cell(&h, &w).unwrap();
            for a in 0..2 {
                assert!((exact.lo()[a] - approx.lo()[a]).abs() < 1e-12);
                assert!((exact.hi()[a] - approx.hi()[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn k2_depth3_has_4096_nonempty_cells() {
        let h = hs(2);
        let mut n = 0;
        for w in words(16, 3) {
            let c = itinerary_cell_exact(&h, &w).unwrap();
            assert!(c.is_proper());
            n += 1;
        }
        assert_eq!(n, 4096);
    }

    #[test]
    fn realized_itinerary_of_center() {
        let h = hs(1);
        let w = word(&[2, 1, 3, 0]);
        let c = itinerary_cell(&h, &w).unwrap().center();
        assert_eq!(realized_itinerary(&h, &c, 4), Some(w));
        assert_eq!(chart_orbit(&h, &Point::new([0.0, 0.0]).unwrap(), 3).len(), 1);
    }

    #[test]
    fn symbolic_counts() {
        assert_eq!(symbolic_count(4, 3), BigUint::from(64u32));
        assert_eq!(symbolic_count(16, 2), BigUint::from(256u32));
        assert_eq!(symbolic_count(16, 5), BigUint::from(4u32).pow(10));
        assert!((symbolic_log_count(16, 2) - 256f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn certificate_single_and_chained() {
        let cert = certify_pseudo(&hs(1), 3).unwrap();
        assert!(cert.chart_separated());
        assert!(cert.matches_symbolic());

        let params = HorseshoeParams::new(2, 0.25, 1).unwrap();
        let ch = build_chained(&params, 3, 1.5, 5).unwrap();
        let cert = certify_chained(&ch, 3).unwrap();
        assert_eq!(cert.count(), BigUint::from(64u32));
        assert!(cert.ambient_gap >= 0.25 / 1.5);
    }

    #[test]
    fn rejects_bad_words() {
        let h = hs(1);
        assert!(ItineraryWord::new(vec![]).is_err());
        assert!(itinerary_cell(&h, &word(&[4])).is_err());
    }
}
