//! Verifier for Markovian intersections, their composition, and their
//! robustness under small vertical perturbations.
//!
//! Sampled mode evaluates the map on lattices and can only certify a pass up
//! to the lattice resolution. Exact mode handles diagonal affine maps in
//! rational arithmetic, where box images are boxes and the check is a proof.
//!
//! The side condition on `φ(S)` is read as: every point of `φ(S)` whose last
//! coordinate lies in `[a_n, b_n]` has its other coordinates strictly inside
//! those of `R_2`. Taken literally (with `int(R_2)`) no connected image that
//! crosses `R_2` could satisfy it, since it must meet `π_n = a_n`.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::affine::{q_from_f64, q_to_f64, DiagAffine, RatBox, Q};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, faces_of, Point, Rectangle, DEFAULT_TOL};
use crate::horseshoe::PseudoHorseshoe;

/// Which of the two half-space alternatives holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `φ(S⁺)` above `R_2`, `φ(S⁻)` below.
    SPlusAbove,
    /// `φ(S⁺)` below `R_2`, `φ(S⁻)` above.
    SPlusBelow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CheckMode {
    Exact,
    /// Pass is certified only at this lattice resolution.
    Sampled {
        resolution: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovVerdict {
    pub passed: bool,
    pub case_used: Orientation,
    /// Worst clearance over the half-space and side conditions.
    pub margin: f64,
    pub samples_checked: u64,
    #[serde(flatten)]
    pub mode: CheckMode,
}

/// Checks that `s` is a strict horizontal subrectangle of `r`: same extent on
/// the first `n − 1` axes, strictly inside on the last.
pub fn check_strict_horizontal(r: &Rectangle, s: &Rectangle) -> Result<()> {
    check_dim(r.dim(), s.dim())?;
    let h = r.dim() - 1;
    for a in 0..h {
        if (r.lo()[a] - s.lo()[a]).abs() > DEFAULT_TOL || (r.hi()[a] - s.hi()[a]).abs() > DEFAULT_TOL {
            return Err(Error::NotStrictHorizontal(format!(
                "axis {} does not span the rectangle",
                a + 1
            )));
        }
    }
    if !(r.lo()[h] < s.lo()[h] && s.hi()[h] < r.hi()[h]) {
        return Err(Error::NotStrictHorizontal(
            "horizontal faces touch those of the rectangle".into(),
        ));
    }
    Ok(())
}

fn check_strict_horizontal_exact(r: &RatBox, s: &RatBox) -> Result<()> {
    check_dim(r.dim(), s.dim())?;
    let h = r.dim() - 1;
    if (0..h).any(|a| r.lo[a] != s.lo[a] || r.hi[a] != s.hi[a]) {
        return Err(Error::NotStrictHorizontal(
            "vertical faces differ from the rectangle's".into(),
        ));
    }
    if !(r.lo[h] < s.lo[h] && s.hi[h] < r.hi[h]) {
        return Err(Error::NotStrictHorizontal(
            "horizontal faces touch those of the rectangle".into(),
        ));
    }
    Ok(())
}

/// Horizontal clearance of `z` inside `r` (infinite when `n = 1`).
fn side_clearance(z: &[f64], r: &Rectangle) -> f64 {
    let h = r.dim() - 1;
    (0..h).fold(f64::INFINITY, |acc, a| acc.min(z[a] - r.lo()[a]).min(r.hi()[a] - z[a]))
}

/// `res` lattice points per axis on `r`, endpoints hit exactly.
fn lattice(r: &Rectangle, res: usize) -> impl Iterator<Item = Point> + '_ {
    let n = r.dim();
    let res = res.max(1);
    let total = res.pow(n as u32);
    (0..total).map(move |idx| {
        let mut rem = idx;
        let c: SmallVec<[f64; 4]> = (0..n)
            .map(|a| {
                let i = rem % res;
                rem /= res;
                match (i, res) {
                    (_, 1) => 0.5 * (r.lo()[a] + r.hi()[a]),
                    (0, _) => r.lo()[a],
                    (i, _) if i == res - 1 => r.hi()[a],
                    (i, _) => r.lo()[a] + (i as f64 / (res - 1) as f64) * r.width(a),
                }
            })
            .collect();
        Point::new(c).expect("finite lattice point")
    })
}

/// Sampled Markovian-intersection check for a general map.
///
/// `S⁺` and `S⁻` are sampled on `res^{n−1}` lattices, `S` on a `res^n`
/// lattice. The orientation is taken from the image of the first `S⁺`
/// sample. Fails with [`Error::EvaluationEscaped`] if `phi` is undefined at
/// a sample.
pub fn verify_markovian<F>(phi: F, r1: &Rectangle, r2: &Rectangle, s: &Rectangle, res: usize) -> Result<MarkovVerdict>
where
    F: Fn(&Point) -> Option<Point>,
{
    check_dim(r1.dim(), r2.dim())?;
    check_strict_horizontal(r1, s)?;
    let n = s.dim();
    let v = n - 1;
    let (a_n, b_n) = (r2.lo()[v], r2.hi()[v]);
    let eval = |x: &Point| phi(x).ok_or(Error::EvaluationEscaped);

    let faces = faces_of(s);
    let (bottom, top) = (&faces[2 * v], &faces[2 * v + 1]);
    let top_pts = top.sample_lattice(res);
    let bottom_pts = bottom.sample_lattice(res);

    let probe = eval(&top_pts[0])?[v];
    let case_used = if probe < a_n {
        Orientation::SPlusBelow
    } else {
        Orientation::SPlusAbove
    };
    let (above, below) = match case_used {
        Orientation::SPlusAbove => (&top_pts, &bottom_pts),
        Orientation::SPlusBelow => (&bottom_pts, &top_pts),
    };

    let mut margin = f64::INFINITY;
    let mut samples = 0u64;
    for x in above {
        margin = margin.min(eval(x)?[v] - b_n);
        samples += 1;
    }
    for x in below {
        margin = margin.min(a_n - eval(x)?[v]);
        samples += 1;
    }
    for x in lattice(s, res) {
        let z = eval(&x)?;
        if a_n <= z[v] && z[v] <= b_n {
            margin = margin.min(side_clearance(z.coords(), r2));
        }
        samples += 1;
    }
    Ok(MarkovVerdict {
        passed: margin > 0.0,
        case_used,
        margin,
        samples_checked: samples,
        mode: CheckMode::Sampled { resolution: res },
    })
}

/// Exact check for a diagonal affine map, decided in rational arithmetic.
///
/// Also returns the exact margin, which is what [`MarkovVerdict::margin`]
/// rounds.
pub fn verify_markovian_affine_exact(
    map: &DiagAffine,
    r1: &RatBox,
    r2: &RatBox,
    s: &RatBox,
) -> Result<(MarkovVerdict, Q)> {
    check_dim(r1.dim(), r2.dim())?;
    check_dim(r1.dim(), map.dim())?;
    check_strict_horizontal_exact(r1, s)?;
    let v = s.dim() - 1;
    let (a_n, b_n) = (&r2.lo[v], &r2.hi[v]);
    let level = |t: &Q| &map.scale()[v] * t + &map.shift()[v];
    let top = level(&s.hi[v]);
    let bottom = level(&s.lo[v]);
    let case_used = if &top < a_n {
        Orientation::SPlusBelow
    } else {
        Orientation::SPlusAbove
    };
    let (hi_face, lo_face) = match case_used {
        Orientation::SPlusAbove => (top, bottom),
        Orientation::SPlusBelow => (bottom, top),
    };
    let mut margin = (hi_face - b_n).min(a_n - lo_face);

    let img = map.image(s);
    if img.lo[v] <= *b_n && *a_n <= img.hi[v] {
        for a in 0..v {
            margin = margin.min(&img.lo[a] - &r2.lo[a]).min(&r2.hi[a] - &img.hi[a]);
        }
    }
    let verdict = MarkovVerdict {
        passed: margin.is_positive(),
        case_used,
        margin: q_to_f64(&margin),
        samples_checked: 2 + (1u64 << s.dim()),
        mode: CheckMode::Exact,
    };
    Ok((verdict, margin))
}

pub fn verify_markovian_affine(map: &DiagAffine, r1: &RatBox, r2: &RatBox, s: &RatBox) -> Result<MarkovVerdict> {
    verify_markovian_affine_exact(map, r1, r2, s).map(|(v, _)| v)
}

/// Exact check of the two-step intersection `φ₂φ₁(R_1) ∩ R_3` on the
/// pulled-back slab `S_12 ∩ φ₁⁻¹(S_23)`. If either single step fails its
/// verdict is returned instead.
#[allow(clippy::too_many_arguments)]
pub fn verify_chain_affine(
    phi1: &DiagAffine,
    phi2: &DiagAffine,
    r1: &RatBox,
    r2: &RatBox,
    r3: &RatBox,
    s12: &RatBox,
    s23: &RatBox,
) -> Result<MarkovVerdict> {
    let first = verify_markovian_affine(phi1, r1, r2, s12)?;
    if !first.passed {
        return Ok(first);
    }
    let second = verify_markovian_affine(phi2, r2, r3, s23)?;
    if !second.passed {
        return Ok(second);
    }
    let (map, slab) = compose_step(phi1, s12, phi2, s23)?;
    verify_markovian_affine(&map, r1, r3, &slab)
}

/// Composite map and pulled-back slab of two affine steps.
pub fn compose_step(phi1: &DiagAffine, s12: &RatBox, phi2: &DiagAffine, s23: &RatBox) -> Result<(DiagAffine, RatBox)> {
    let pulled = phi1.preimage(s23)?;
    let slab = s12
        .intersection(&pulled)
        .ok_or_else(|| Error::NotStrictHorizontal("pulled-back slab is empty".into()))?;
    Ok((phi1.then(phi2), slab))
}

/// Iterates [`verify_chain_affine`] along a path of affine steps
/// `(map_t, slab_t)` visiting `rects[0], rects[1], …`.
pub fn verify_path_affine(steps: &[(&DiagAffine, &RatBox)], rects: &[&RatBox]) -> Result<MarkovVerdict> {
    if steps.is_empty() || rects.len() != steps.len() + 1 {
        return Err(Error::InvalidParams("a path of t steps needs t + 1 rectangles".into()));
    }
    let (mut map, mut slab) = (steps[0].0.clone(), steps[0].1.clone());
    let mut verdict = verify_markovian_affine(&map, rects[0], rects[1], &slab)?;
    for (t, (next_map, next_slab)) in steps.iter().enumerate().skip(1) {
        if !verdict.passed {
            return Ok(verdict);
        }
        let step = verify_markovian_affine(next_map, rects[t], rects[t + 1], next_slab)?;
        if !step.passed {
            return Ok(step);
        }
        (map, slab) = compose_step(&map, &slab, next_map, next_slab)?;
        verdict = verify_markovian_affine(&map, rects[0], rects[t + 1], &slab)?;
    }
    Ok(verdict)
}

/// Sampled two-step check. The pulled-back slab `S_12 ∩ φ₁⁻¹(S_23)` is
/// located along the central vertical line of `S_12` by scanning and then
/// bisecting its end points, which assumes `φ₁` moves horizontal slices
/// monotonically (true for Markov pieces).
#[allow(clippy::too_many_arguments)]
pub fn verify_chain<F, G>(
    phi1: F,
    phi2: G,
    r1: &Rectangle,
    r2: &Rectangle,
    r3: &Rectangle,
    s12: &Rectangle,
    s23: &Rectangle,
    res: usize,
) -> Result<MarkovVerdict>
where
    F: Fn(&Point) -> Option<Point>,
    G: Fn(&Point) -> Option<Point>,
{
    let first = verify_markovian(&phi1, r1, r2, s12, res)?;
    if !first.passed {
        return Ok(first);
    }
    let second = verify_markovian(&phi2, r2, r3, s23, res)?;
    if !second.passed {
        return Ok(second);
    }
    let slab = pull_back_slab(&phi1, s12, s23, res)?;
    verify_markovian(|x: &Point| phi1(x).and_then(|y| phi2(&y)), r1, r3, &slab, res)
}

fn pull_back_slab<F>(phi1: &F, s12: &Rectangle, s23: &Rectangle, res: usize) -> Result<Rectangle>
where
    F: Fn(&Point) -> Option<Point>,
{
    let v = s12.dim() - 1;
    let mut probe = s12.center();
    let mut hits = |t: f64| -> Result<bool> {
        probe.coords_mut()[v] = t;
        Ok(s23.contains(&phi1(&probe).ok_or(Error::EvaluationEscaped)?))
    };
    let (lo, hi) = (s12.lo()[v], s12.hi()[v]);
    let fine = 64 * res.max(2);
    let ts: Vec<f64> = (0..=fine).map(|i| lo + (hi - lo) * i as f64 / fine as f64).collect();
    let mut inside = Vec::with_capacity(ts.len());
    for &t in &ts {
        inside.push(hits(t)?);
    }
    let first = inside.iter().position(|&b| b);
    let last = inside.iter().rposition(|&b| b);
    let (Some(f), Some(l)) = (first, last) else {
        return Err(Error::NotStrictHorizontal(
            "pulled-back slab is empty at this resolution".into(),
        ));
    };
    let mut refine = |mut out: f64, mut inn: f64| -> Result<f64> {
        for _ in 0..60 {
            let mid = 0.5 * (out + inn);
            if hits(mid)? {
                inn = mid;
            } else {
                out = mid;
            }
        }
        Ok(inn)
    };
    let bottom = if f == 0 { ts[0] } else { refine(ts[f - 1], ts[f])? };
    let top = if l == fine { ts[fine] } else { refine(ts[l + 1], ts[l])? };
    let mut lo_c: SmallVec<[f64; 4]> = SmallVec::from_slice(s12.lo().coords());
    let mut hi_c: SmallVec<[f64; 4]> = SmallVec::from_slice(s12.hi().coords());
    lo_c[v] = bottom;
    hi_c[v] = top;
    Rectangle::from_bounds(&lo_c, &hi_c)
}

fn shifted<F>(phi: &F, amount: f64) -> impl Fn(&Point) -> Option<Point> + '_
where
    F: Fn(&Point) -> Option<Point>,
{
    move |x: &Point| {
        let mut y = phi(x)?;
        let v = y.dim() - 1;
        y.coords_mut()[v] += amount;
        Some(y)
    }
}

/// Largest tested `η ≤ eta_max` such that both `φ + η·e_n` and `φ − η·e_n`
/// still pass at resolution `res`, found by `steps` rounds of bisection. A
/// lower bound on the C⁰ robustness radius against vertical translations.
#[allow(clippy::too_many_arguments)]
pub fn robustness_radius<F>(
    phi: F,
    r1: &Rectangle,
    r2: &Rectangle,
    s: &Rectangle,
    eta_max: f64,
    steps: usize,
    res: usize,
) -> Result<f64>
where
    F: Fn(&Point) -> Option<Point>,
{
    if !(eta_max > 0.0 && eta_max.is_finite()) {
        return Err(Error::InvalidParams("eta_max must be positive".into()));
    }
    let passes = |eta: f64| -> Result<bool> {
        Ok(verify_markovian(shifted(&phi, eta), r1, r2, s, res)?.passed
            && verify_markovian(shifted(&phi, -eta), r1, r2, s, res)?.passed)
    };
    if !passes(0.0)? {
        return Err(Error::InvalidParams(
            "base map does not pass; robustness is undefined".into(),
        ));
    }
    bisect(passes, eta_max, steps)
}

fn bisect(mut passes: impl FnMut(f64) -> Result<bool>, eta_max: f64, steps: usize) -> Result<f64> {
    if passes(eta_max)? {
        return Ok(eta_max);
    }
    let (mut lo, mut hi) = (0.0, eta_max);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Exact-mode robustness radius of an affine piece under vertical shifts.
pub fn robustness_radius_affine(
    map: &DiagAffine,
    r1: &RatBox,
    r2: &RatBox,
    s: &RatBox,
    eta_max: f64,
    steps: usize,
) -> Result<f64> {
    let v = map.dim() - 1;
    let passes = |eta: f64| -> Result<bool> {
        let mut up = vec![Q::zero(); map.dim()];
        up[v] = q_from_f64(eta)?;
        let down: Vec<Q> = up.iter().map(|x| -x).collect();
        Ok(verify_markovian_affine(&map.post_translated(&up), r1, r2, s)?.passed
            && verify_markovian_affine(&map.post_translated(&down), r1, r2, s)?.passed)
    };
    if !passes(0.0)? {
        return Err(Error::InvalidParams(
            "base map does not pass; robustness is undefined".into(),
        ));
    }
    bisect(passes, eta_max, steps)
}

/// Per-piece report used by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceReport {
    pub stage: usize,
    pub source: usize,
    pub target: usize,
    pub exact: MarkovVerdict,
    pub sampled: Option<MarkovVerdict>,
    pub robustness: Option<f64>,
}

impl PieceReport {
    pub fn passed(&self) -> bool {
        self.exact.passed && self.sampled.as_ref().is_none_or(|v| v.passed)
    }
}

/// Exact verdict of piece `(i, j)` against its own rectangles.
pub fn verify_piece(h: &PseudoHorseshoe, i: usize, j: usize) -> Result<MarkovVerdict> {
    let p = h.piece(i, j);
    verify_markovian_affine(&p.map, h.grid().rect_exact(i), h.grid().rect_exact(j), &p.slab)
}

/// Sampled verdict of piece `(i, j)`, evaluating the horseshoe map itself.
pub fn verify_piece_sampled(h: &PseudoHorseshoe, i: usize, j: usize, res: usize) -> Result<MarkovVerdict> {
    let p = h.piece(i, j);
    verify_markovian(
        |x: &Point| h.apply(x),
        h.grid().rect(i),
        h.grid().rect(j),
        p.slab_rect(),
        res,
    )
}

/// Checks every piece of a stage. `res = None` skips sampling; `eta` adds an
/// exact robustness radius with that cap.
pub fn verify_stage(
    h: &PseudoHorseshoe,
    stage: usize,
    res: Option<usize>,
    eta: Option<f64>,
) -> Result<Vec<PieceReport>> {
    let nk = h.n_symbols();
    let mut out = Vec::with_capacity(nk * nk);
    for i in 0..nk {
        for j in 0..nk {
            let exact = verify_piece(h, i, j)?;
            let sampled = match res {
                Some(r) => Some(match verify_piece_sampled(h, i, j, r) {
                    Ok(v) => v,
                    Err(Error::EvaluationEscaped) => MarkovVerdict {
                        passed: false,
                        case_used: exact.case_used,
                        margin: f64::NEG_INFINITY,
                        samples_checked: 0,
                        mode: CheckMode::Sampled { resolution: r },
                    },
                    Err(e) => return Err(e),
                }),
                None => None,
            };
            let robustness = match (eta, exact.passed) {
                (Some(cap), true) => {
                    let p = h.piece(i, j);
                    Some(robustness_radius_affine(
                        &p.map,
                        h.grid().rect_exact(i),
                        h.grid().rect_exact(j),
                        &p.slab,
                        cap,
                        40,
                    )?)
                }
                _ => None,
            };
            out.push(PieceReport {
                stage,
                source: i,
                target: j,
                exact,
                sampled,
                robustness,
            });
        }
    }
    Ok(out)
}
