//! Katok ε-entropy: growth rate of the number of dynamical balls needed to
//! cover more than `1 - δ` of a measure, estimated on weighted samples, and
//! its finite-scale comparison with the separated-set growth rate.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complexity::cloud::{uniform_points, CloudSource};
use crate::complexity::{
    check_m_schedule, eligible_weight, greedy_cover, least_squares, max_separated, sep_rate, CountMode, CountRow,
    CountValue, SampleCloud,
};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::horseshoe::{build_pseudo_horseshoe, itinerary_cell, HorseshoeParams, ItineraryMap, ItineraryWord};
use crate::systems::SystemHandle;

/// Grid of mass defects the entropy is maximized over.
pub const DEFAULT_MASS_DELTAS: [f64; 4] = [0.5, 0.2, 0.1, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    /// Normalized volume on the system's bounding box.
    LebesgueCube,
    /// Uniform Bernoulli measure on itinerary words of length `depth`,
    /// represented by the center of each word's cell.
    BernoulliItineraries { depth: usize },
    /// The given points, each with unit mass.
    Empirical { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    #[serde(flatten)]
    pub kind: MeasureKind,
    #[serde(default)]
    pub seed: u64,
}

impl MeasureSpec {
    pub fn lebesgue(seed: u64) -> Self {
        MeasureSpec {
            kind: MeasureKind::LebesgueCube,
            seed,
        }
    }

    pub fn bernoulli(depth: usize, seed: u64) -> Self {
        MeasureSpec {
            kind: MeasureKind::BernoulliItineraries { depth },
            seed,
        }
    }
}

/// `count` i.i.d. samples of the measure as a weighted cloud with orbits to
/// `horizon`. Reproducible from the seed.
pub fn sample_measure(spec: &MeasureSpec, sys: &SystemHandle, count: usize, horizon: usize) -> Result<SampleCloud> {
    if count < 1 {
        return Err(Error::InvalidParams("sample count must be >= 1".into()));
    }
    let source = CloudSource::Measure { seed: spec.seed, count };
    match &spec.kind {
        MeasureKind::LebesgueCube => {
            SampleCloud::from_points(sys, uniform_points(sys, count, spec.seed)?, horizon, source)
        }
        MeasureKind::BernoulliItineraries { depth } => {
            let weighted = bernoulli_samples(sys, *depth, count, spec.seed)?;
            SampleCloud::from_weighted(sys, weighted, horizon, source)
        }
        MeasureKind::Empirical { points } => {
            let pts = points
                .iter()
                .map(|p| Point::new(p.iter().copied()))
                .collect::<Result<Vec<_>>>()?;
            SampleCloud::from_points(sys, pts, horizon, CloudSource::Explicit)
        }
    }
}

/// Draws words with i.i.d. uniform symbols and returns each distinct cell
/// center with its multiplicity.
fn bernoulli_samples(sys: &SystemHandle, depth: usize, count: usize, seed: u64) -> Result<Vec<(Point, u64)>> {
    if depth < 1 {
        return Err(Error::InvalidParams("itinerary depth must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |nk: usize| -> HashMap<Vec<usize>, u64> {
        let mut tally = HashMap::new();
        for _ in 0..count {
            let w: Vec<usize> = (0..depth).map(|_| rng.random_range(0..nk)).collect();
            *tally.entry(w).or_insert(0) += 1;
        }
        tally
    };
    fn centers<H: ItineraryMap + ?Sized>(
        h: &H,
        tally: HashMap<Vec<usize>, u64>,
        to_ambient: impl Fn(Point) -> Point,
    ) -> Result<Vec<(Point, u64)>> {
        let mut tally: Vec<_> = tally.into_iter().collect();
        tally.sort_unstable();
        tally
            .into_iter()
            .map(|(w, c)| Ok((to_ambient(itinerary_cell(h, &ItineraryWord::new(w)?)?.center()), c)))
            .collect()
    }
    if let Some(h) = sys.as_horseshoe() {
        centers(h.as_ref(), draw(h.n_symbols()), |p| p)
    } else if let Some(h) = sys.as_chained() {
        let chart = h.chart(0);
        centers(h.as_ref(), draw(h.n_symbols()), |u| chart.to_ambient(&u))
    } else {
        Err(Error::InvalidParams(
            "the Bernoulli itinerary measure needs a horseshoe system".into(),
        ))
    }
}

/// Smallest integer weight strictly above `(1 - mass_delta) * total`,
/// capped at `total`.
pub fn katok_target(total: u64, mass_delta: f64) -> u64 {
    let t = ((1.0 - mass_delta) * total as f64 + 1e-9).floor() as u64 + 1;
    t.min(total)
}

fn check_mass_delta(mass_delta: f64) -> Result<()> {
    if !(mass_delta > 0.0 && mass_delta < 1.0) {
        return Err(Error::InvalidParams(format!(
            "mass_delta must lie in (0, 1), got {mass_delta}"
        )));
    }
    Ok(())
}

/// Upper bound for the number of `(m, eps)`-balls covering sample mass
/// strictly above `1 - mass_delta`: the better of a greedy partial cover
/// over all sample points and one restricted to the centers of a maximal
/// separated set.
pub fn katok_cover_count(cloud: &SampleCloud, m: usize, eps: f64, mass_delta: f64) -> Result<usize> {
    check_mass_delta(mass_delta)?;
    let target = katok_target(eligible_weight(cloud, m), mass_delta);
    let free = greedy_cover(cloud, m, eps, None, target)?;
    let sep = max_separated(cloud, m, eps)?;
    let restricted = greedy_cover(cloud, m, eps, Some(&sep), target)?;
    Ok(free.count().min(restricted.count()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatokRow {
    pub m: usize,
    pub eps: f64,
    pub mass_delta: f64,
    pub n_nu: usize,
    /// `ln N_nu / m`.
    pub h_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatokEstimate {
    pub rows: Vec<KatokRow>,
    /// Least-squares slope of `ln N_nu` against `m`; 0 when all counts agree.
    pub slope: f64,
    pub degenerate: bool,
}

/// [`katok_entropy`] on an existing cloud.
pub fn katok_entropy_on(cloud: &SampleCloud, eps: f64, mass_delta: f64, ms: &[usize]) -> Result<KatokEstimate> {
    check_m_schedule(ms)?;
    let rows = ms
        .iter()
        .map(|&m| {
            let n_nu = katok_cover_count(cloud, m, eps, mass_delta)?;
            Ok(KatokRow {
                m,
                eps,
                mass_delta,
                n_nu,
                h_estimate: (n_nu as f64).ln() / m as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let degenerate = rows.iter().all(|r| r.n_nu == rows[0].n_nu);
    let slope = if degenerate {
        0.0
    } else {
        let xs: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| (r.n_nu as f64).ln()).collect();
        least_squares(&xs, &ys).0
    };
    Ok(KatokEstimate {
        rows,
        slope,
        degenerate,
    })
}

/// Finite-scale `h_nu(eps, T, mass_delta)` from `count` samples of `spec`.
pub fn katok_entropy(
    spec: &MeasureSpec,
    sys: &SystemHandle,
    eps: f64,
    mass_delta: f64,
    ms: &[usize],
    count: usize,
) -> Result<KatokEstimate> {
    check_m_schedule(ms)?;
    let cloud = sample_measure(spec, sys, count, *ms.iter().max().expect("checked"))?;
    katok_entropy_on(&cloud, eps, mass_delta, ms)
}

/// One scale of the variational comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub eps: f64,
    /// Horseshoe family index, when the row comes from one.
    pub k: Option<usize>,
    /// `max_delta h_nu(eps) / -ln eps`.
    pub h_ratio: f64,
    /// `Sep(eps) / -ln eps`.
    pub sep_ratio: f64,
    /// `sep_ratio - h_ratio`.
    pub gap: f64,
    pub best_mass_delta: f64,
    pub method: GapMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    /// Greedy counts on a sample cloud.
    Sampled,
    /// Closed-form cell counts of the uniform Bernoulli measure.
    CellOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub dimension: usize,
    pub rows: Vec<GapRow>,
}

impl GapTable {
    pub fn to_csv(&self, generated: Option<&str>) -> String {
        let mut out = crate::complexity::report::csv_preamble(generated);
        out.push_str("eps,k,h_ratio,sep_ratio,gap,best_mass_delta,method\n");
        for r in &self.rows {
            let k = r.k.map(|k| k.to_string()).unwrap_or_default();
            let method = match r.method {
                GapMethod::Sampled => "sampled",
                GapMethod::CellOracle => "cell_oracle",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.eps, k, r.h_ratio, r.sep_ratio, r.gap, r.best_mass_delta, method
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// CSV of Katok rows in the report family layout.
pub fn katok_csv(rows: &[KatokRow], generated: Option<&str>) -> String {
    let mut out = crate::complexity::report::csv_preamble(generated);
    out.push_str("m,eps,mass_delta,N_nu,h_estimate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.m, r.eps, r.mass_delta, r.n_nu, r.h_estimate
        ));
    }
    out
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::Schedule("mass_delta schedule is empty".into()));
    }
    deltas.iter().try_for_each(|&d| check_mass_delta(d))
}

/// Sep-rate and best Katok rate on one cloud at one scale. Katok balls have
/// radius `katok_eps`, separation is measured at `eps`.
fn sampled_rates(
    cloud: &SampleCloud,
    eps: f64,
    katok_eps: f64,
    deltas: &[f64],
    ms: &[usize],
) -> Result<(f64, f64, f64)> {
    let rows: Vec<CountRow> = ms
        .iter()
        .map(|&m| {
            Ok(CountRow {
                m,
                eps,
                s_lower: CountValue::from_count(max_separated(cloud, m, eps)?.len()),
                n_upper: None,
                mode: CountMode::Greedy,
            })
        })
        .collect::<Result<_>>()?;
    let sep = sep_rate(&rows)?.slope;
    let mut best = (f64::NEG_INFINITY, deltas[0]);
    for &d in deltas {
        let h = katok_entropy_on(cloud, katok_eps, d, ms)?.slope;
        if h > best.0 {
            best = (h, d);
        }
    }
    Ok((sep, best.0, best.1))
}

/// Per scale: the best Katok rate over `deltas` against the Sep rate, both
/// divided by `-ln eps`, on one sample of `spec`.
pub fn variational_gap(
    sys: &SystemHandle,
    spec: &MeasureSpec,
    eps_schedule: &[f64],
    deltas: &[f64],
    ms: &[usize],
    count: usize,
) -> Result<GapTable> {
    if eps_schedule.is_empty() {
        return Err(Error::Schedule("eps schedule is empty".into()));
    }
    if let Some(e) = eps_schedule.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::Schedule(format!("scale {e} outside (0, 1)")));
    }
    check_deltas(deltas)?;
    check_m_schedule(ms)?;
    let cloud = sample_measure(spec, sys, count, *ms.iter().max().expect("checked"))?;
    let rows = eps_schedule
        .iter()
        .map(|&eps| {
            let (sep, h, d) = sampled_rates(&cloud, eps, eps, deltas, ms)?;
            let nl = -eps.ln();
            Ok(GapRow {
                eps,
                k: None,
                h_ratio: h / nl,
                sep_ratio: sep / nl,
                gap: (sep - h) / nl,
                best_mass_delta: d,
                method: GapMethod::Sampled,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapTable {
        dimension: sys.dim(),
        rows,
    })
}

/// How [`horseshoe_gap_table`] evaluates each `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    CellOracle,
    Sampled,
    /// Sampled while `20 * N_k^m_max` samples fit in the budget, else the
    /// cell oracle.
    Auto,
}

/// Samples per cell the sampled path needs before it is trusted.
const SAMPLES_PER_CELL: u64 = 20;

/// Number of cells needed to cover uniform mass strictly above
/// `1 - mass_delta` when `cells` cells carry equal mass and every ball of
/// radius `eps_k / 2` meets at most one of them.
pub fn cell_oracle_count(cells: f64, mass_delta: f64) -> f64 {
    ((1.0 - mass_delta) * cells + 1e-9).floor() + 1.0
}

/// Variational comparison for the horseshoe family `eps_k = delta / k` with
/// the uniform Bernoulli measure. Separation is measured at `eps_k`, Katok
/// balls have radius `eps_k / 2`, and both rates are divided by `-ln eps_k`.
#[allow(clippy::too_many_arguments)]
pub fn horseshoe_gap_table(
    n: usize,
    delta: f64,
    ks: &[usize],
    deltas: &[f64],
    ms: &[usize],
    mode: GapMode,
    count: usize,
    seed: u64,
) -> Result<GapTable> {
    if ks.is_empty() {
        return Err(Error::Schedule("k schedule is empty".into()));
    }
    check_deltas(deltas)?;
    check_m_schedule(ms)?;
    let m_max = *ms.iter().max().expect("checked");
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let params = HorseshoeParams::new(n, delta, k)?;
        let nk = params
            .checked_n_symbols()
            .ok_or_else(|| Error::InvalidParams(format!("(2k)^n overflows for k = {k}")))?;
        let eps = params.eps_k();
        let nl = -eps.ln();
        let affordable = (nk as u64)
            .checked_pow(m_max as u32)
            .and_then(|c| c.checked_mul(SAMPLES_PER_CELL))
            .is_some_and(|need| need <= count as u64);
        let sampled = match mode {
            GapMode::Sampled => true,
            GapMode::CellOracle => false,
            GapMode::Auto => affordable,
        };
        let row = if sampled {
            let sys = SystemHandle::horseshoe(std::sync::Arc::new(build_pseudo_horseshoe(&params)?));
            let cloud = sample_measure(&MeasureSpec::bernoulli(m_max, seed), &sys, count, m_max)?;
            let (sep, h, d) = sampled_rates(&cloud, eps, eps / 2.0, deltas, ms)?;
            GapRow {
                eps,
                k: Some(k),
                h_ratio: h / nl,
                sep_ratio: sep / nl,
                gap: (sep - h) / nl,
                best_mass_delta: d,
                method: GapMethod::Sampled,
            }
        } else {
            let ln_nk = (nk as f64).ln();
            let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
            let mut best = (f64::NEG_INFINITY, deltas[0]);
            for &d in deltas {
                let ys: Vec<f64> = ms
                    .iter()
                    .map(|&m| cell_oracle_count((nk as f64).powi(m as i32), d).ln())
                    .collect();
                let h = least_squares(&xs, &ys).0;
                if h > best.0 {
                    best = (h, d);
                }
            }
            GapRow {
                eps,
                k: Some(k),
                h_ratio: best.0 / nl,
                sep_ratio: ln_nk / nl,
                gap: (ln_nk - best.0) / nl,
                best_mass_delta: best.1,
                method: GapMethod::CellOracle,
            }
        };
        rows.push(row);
    }
    Ok(GapTable { dimension: n, rows })
}
