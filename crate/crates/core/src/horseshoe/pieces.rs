use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::affine::{q_to_f64, qi, DiagAffine, RatBox, Q};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rectangle};

use super::grid::{build_rect_grid, HorseshoeParams, RectGrid};

/// Affine Markov piece `A_{i,j}` defined on the slab `S_{i,j} ⊂ R_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPiece {
    pub source: usize,
    pub target: usize,
    pub slab: RatBox,
    pub map: DiagAffine,
    #[serde(skip)]
    slab_f: Option<Rectangle>,
}

impl MarkovPiece {
    pub fn new(source: usize, target: usize, slab: RatBox, map: DiagAffine) -> Result<Self> {
        let slab_f = Some(slab.to_rect()?);
        Ok(MarkovPiece {
            source,
            target,
            slab,
            map,
            slab_f,
        })
    }

    pub fn slab_rect(&self) -> &Rectangle {
        self.slab_f.as_ref().expect("slab cache is filled on construction")
    }

    /// `A_{i,j}(S_{i,j})`, the vertical strip crossing `R_j`.
    pub fn image(&self) -> RatBox {
        self.map.image(&self.slab)
    }

    pub(crate) fn refresh(&mut self) -> Result<()> {
        self.slab_f = Some(self.slab.to_rect()?);
        Ok(())
    }
}

/// Packing dimensions shared by every piece of a horseshoe.
#[derive(Debug, Clone, PartialEq)]
pub struct Packing {
    /// Horizontal strip width, `W/(2N_k + 1)`.
    pub strip_width: Q,
    /// Slab height `h`.
    pub slab_height: Q,
    /// Vertical gap between slabs, also the overshoot beyond each horizontal face.
    pub slab_gap: Q,
    /// Vertical expansion `(2N_k + 1)^(n−1)`.
    pub expansion: Q,
}

/// Packing for `N` strips/slabs in a cube rectangle of side `side`.
///
/// With contraction `λ = 1/(2N+1)` on the `n−1` horizontal axes and expansion
/// `μ = λ^{-(n−1)}` vertically, volume is preserved. The slab gap `g` solves
/// `N·h + (N+1)·g = H` together with `μ·h = H + 2g`.
pub fn packing(n: usize, nk: usize, side: &Q) -> Result<Packing> {
    let slots = qi(2 * nk as i64 + 1);
    let strip_width = side / &slots;
    let expansion = (0..n - 1).fold(Q::one(), |acc, _| acc * &slots);
    let nq = qi(nk as i64);
    let denom = qi(2) * &nq + (&nq + Q::one()) * &expansion;
    let slab_gap = side * (&expansion - &nq) / denom;
    if slab_gap <= Q::zero() {
        return Err(Error::InfeasiblePacking(format!(
            "{nk} slabs do not fit with positive gaps"
        )));
    }
    let slab_height = (side + qi(2) * &slab_gap) / &expansion;
    Ok(Packing {
        strip_width,
        slab_height,
        slab_gap,
        expansion,
    })
}

/// ε_k-separated `N_k`-pseudo-horseshoe realized on its Markov slabs.
///
/// `pieces[i * N_k + j]` maps `S_{i,j} ⊂ R_i` across `R_j`. The map is
/// undefined (escaping) off the union of slabs.
#[derive(Debug, Clone)]
pub struct PseudoHorseshoe {
    params: HorseshoeParams,
    grid: RectGrid,
    pieces: Vec<MarkovPiece>,
    /// Per source rectangle, piece indices sorted by slab bottom.
    rows: Vec<Vec<usize>>,
}

pub fn build_pseudo_horseshoe(params: &HorseshoeParams) -> Result<PseudoHorseshoe> {
    let grid = build_rect_grid(params)?;
    let n = params.n;
    let nk = grid.len();
    let side = grid.side().clone();
    let pk = packing(n, nk, &side)?;

    // overshoot must stay inside the unit chart cube
    let reach = params.delta_exact() + &pk.slab_gap;
    if reach >= Q::new(1.into(), 2.into()) {
        return Err(Error::InfeasiblePacking(
            "strip overshoot leaves the unit chart cube".into(),
        ));
    }

    let mut pieces = Vec::with_capacity(nk * nk);
    for i in 0..nk {
        let ri = grid.rect_exact(i);
        for j in 0..nk {
            let rj = grid.rect_exact(j);
            let mut slab = ri.clone();
            let bottom = &ri.lo[n - 1] + &pk.slab_gap + qi(j as i64) * (&pk.slab_height + &pk.slab_gap);
            slab.hi[n - 1] = &bottom + &pk.slab_height;
            slab.lo[n - 1] = bottom;

            let mut strip = rj.clone();
            let slot0 = qi(2 * i as i64 + 1);
            strip.lo[0] = &rj.lo[0] + &slot0 * &pk.strip_width;
            strip.hi[0] = &strip.lo[0] + &pk.strip_width;
            for a in 1..n - 1 {
                strip.lo[a] = &rj.lo[a] + qi(nk as i64) * &pk.strip_width;
                strip.hi[a] = &strip.lo[a] + &pk.strip_width;
            }
            strip.lo[n - 1] = &rj.lo[n - 1] - &pk.slab_gap;
            strip.hi[n - 1] = &rj.hi[n - 1] + &pk.slab_gap;

            let map = DiagAffine::box_to_box(&slab, &strip)?;
            pieces.push(MarkovPiece::new(i, j, slab, map)?);
        }
    }
    let h = PseudoHorseshoe::from_parts(params.clone(), grid, pieces)?;
    debug_assert!(h.violations().is_empty(), "{:?}", h.violations());
    Ok(h)
}

impl PseudoHorseshoe {
    /// Assembles a horseshoe from explicit pieces (e.g. loaded from a file).
    /// Structure is checked; geometric invariants are reported by
    /// [`PseudoHorseshoe::violations`] instead, so corrupted inputs can still
    /// be inspected.
    pub fn from_parts(params: HorseshoeParams, grid: RectGrid, pieces: Vec<MarkovPiece>) -> Result<Self> {
        params.validate()?;
        let nk = grid.len();
        if pieces.len() != nk * nk {
            return Err(Error::Format(format!(
                "expected {} pieces, found {}",
                nk * nk,
                pieces.len()
            )));
        }
        let n = params.n;
        for (idx, p) in pieces.iter().enumerate() {
            if p.source != idx / nk || p.target != idx % nk {
                return Err(Error::Format(format!("piece {idx} is out of (source, target) order")));
            }
            if p.slab.dim() != n || p.map.dim() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: p.slab.dim(),
                });
            }
        }
        let rows = (0..nk)
            .map(|i| {
                let mut row: Vec<usize> = (i * nk..(i + 1) * nk).collect();
                row.sort_by(|&a, &b| pieces[a].slab.lo[n - 1].cmp(&pieces[b].slab.lo[n - 1]));
                row
            })
            .collect();
        Ok(PseudoHorseshoe {
            params,
            grid,
            pieces,
            rows,
        })
    }

    pub fn params(&self) -> &HorseshoeParams {
        &self.params
    }

    pub fn grid(&self) -> &RectGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.params.n
    }

    pub fn n_symbols(&self) -> usize {
        self.grid.len()
    }

    pub fn pieces(&self) -> &[MarkovPiece] {
        &self.pieces
    }

    pub fn piece(&self, i: usize, j: usize) -> &MarkovPiece {
        &self.pieces[i * self.n_symbols() + j]
    }

    /// Swaps the map of piece `(i, j)`, keeping its slab. Used to build
    /// deliberately broken horseshoes for negative tests.
    pub fn replace_map(&mut self, i: usize, j: usize, map: DiagAffine) -> Result<()> {
        if map.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: map.dim(),
            });
        }
        let nk = self.n_symbols();
        if i >= nk || j >= nk {
            return Err(Error::InvalidParams(format!(
                "piece ({i}, {j}) out of range for {nk} symbols"
            )));
        }
        self.pieces[i * nk + j].map = map;
        Ok(())
    }

    /// Index of the piece whose slab contains `x`.
    pub fn locate_piece(&self, x: &[f64]) -> Option<usize> {
        let i = self.grid.locate(x)?;
        let n = self.dim();
        let row = &self.rows[i];
        let y = x[n - 1];
        let pos = row.partition_point(|&p| self.pieces[p].slab_rect().lo()[n - 1] <= y);
        // the slab right below `y`; fall back one step for shared boundaries
        [pos.checked_sub(1), pos.checked_sub(2)]
            .into_iter()
            .flatten()
            .map(|r| row[r])
            .find(|&p| self.pieces[p].slab_rect().contains_slice(x))
    }

    /// Applies the map; `false` means the point escaped (lies on no slab).
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self.locate_piece(x) {
            Some(p) => {
                self.pieces[p].map.apply_slice(x, out);
                true
            }
            None => false,
        }
    }

    pub fn apply(&self, x: &Point) -> Option<Point> {
        if x.dim() != self.dim() {
            return None;
        }
        let mut out = x.clone();
        self.apply_slice(x.coords(), out.coords_mut()).then_some(out)
    }

    /// The chart cube `I^n = [-1/2, 1/2]^n` the horseshoe lives in.
    pub fn chart_cube(&self) -> Rectangle {
        Rectangle::cube(self.dim(), 0.5).expect("n >= 2")
    }

    /// Exact structural audit; empty for every horseshoe produced by
    /// [`build_pseudo_horseshoe`].
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.dim();
        let nk = self.n_symbols();
        let h = n - 1;
        let eps = self.params.eps_k_exact();
        if let Some(d) = self.grid.min_pairwise_distance() {
            if d <= eps {
                out.push(format!("rectangles only {d} apart, need > {eps}"));
            }
        }
        if !self.grid.inside_ball(&self.params.delta_exact()) {
            out.push("a rectangle leaves B^n_delta".into());
        }
        for p in &self.pieces {
            let (i, j) = (p.source, p.target);
            let ri = self.grid.rect_exact(i);
            let rj = self.grid.rect_exact(j);
            let det = p.map.det();
            if det.clone() * det.clone() != Q::one() {
                out.push(format!("piece ({i},{j}) has det {det}"));
            }
            let strict_h = (0..h).all(|a| p.slab.lo[a] == ri.lo[a] && p.slab.hi[a] == ri.hi[a])
                && ri.lo[h] < p.slab.lo[h]
                && p.slab.hi[h] < ri.hi[h];
            if !strict_h {
                out.push(format!(
                    "slab ({i},{j}) is not a strict horizontal subrectangle of R_{i}"
                ));
            }
            let img = p.image();
            let inside = (0..h).all(|a| rj.lo[a] < img.lo[a] && img.hi[a] < rj.hi[a]);
            let crosses = img.lo[h] < rj.lo[h] && rj.hi[h] < img.hi[h];
            if !(inside && crosses) {
                out.push(format!("image of piece ({i},{j}) does not cross R_{j} vertically"));
            }
        }
        for i in 0..nk {
            for j in 0..nk {
                for l in j + 1..nk {
                    let a = &self.piece(i, j).slab;
                    let b = &self.piece(i, l).slab;
                    if a.intersects(b) {
                        out.push(format!("slabs ({i},{j}) and ({i},{l}) overlap"));
                    }
                }
            }
        }
        for j in 0..nk {
            let imgs: Vec<RatBox> = (0..nk).map(|i| self.piece(i, j).image()).collect();
            for a in 0..nk {
                for b in a + 1..nk {
                    if imgs[a].intersects(&imgs[b]) {
                        out.push(format!("strips ({a},{j}) and ({b},{j}) overlap"));
                    }
                }
            }
        }
        out
    }

    /// Vertical overshoot of each strip past the faces of its target, which
    /// is also the vertical gap between slabs.
    pub fn slab_gap(&self) -> f64 {
        let p = self.piece(0, 0);
        let n = self.dim();
        q_to_f64(&(&self.grid.rect_exact(p.target).lo[n - 1] - &p.image().lo[n - 1]))
    }
}
