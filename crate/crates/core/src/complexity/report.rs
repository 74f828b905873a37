//! Count tables, Sep-rate fits and finite-scale metric mean dimension.
//!
//! All logarithms are natural. The ratio `Sep / (-ln eps)` does not depend
//! on the base as long as both sides use the same one.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::horseshoe::{symbolic_count, HorseshoeParams};
use crate::systems::SystemHandle;

use super::cloud::{CloudSpec, SampleCloud};
use super::counts::{max_separated, min_spanning};

pub const CSV_SCHEMA: u32 = 1;

/// Ratios above `n + MDIM_FLAG_SLACK` are flagged as sampling artifacts.
pub const MDIM_FLAG_SLACK: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    Greedy,
    Symbolic,
}

impl fmt::Display for CountMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountMode::Greedy => "greedy",
            CountMode::Symbolic => "symbolic",
        })
    }
}

/// A count that is exact up to `2^63 - 1` and kept as a natural log above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountValue {
    Exact(u64),
    LogSpace(f64),
}

impl CountValue {
    pub fn from_big(v: &BigUint) -> Self {
        if v.bits() <= 63 {
            CountValue::Exact(v.iter_u64_digits().next().unwrap_or(0))
        } else {
            // ln v = ln(top 63 bits) + shift * ln 2, accurate to double precision
            let shift = v.bits() - 63;
            let top: BigUint = v >> shift;
            let top = top.iter_u64_digits().next().unwrap_or(0) as f64;
            CountValue::LogSpace(top.ln() + shift as f64 * std::f64::consts::LN_2)
        }
    }

    pub fn from_count(c: usize) -> Self {
        CountValue::Exact(c as u64)
    }

    pub fn ln(&self) -> f64 {
        match *self {
            CountValue::Exact(c) => (c as f64).ln(),
            CountValue::LogSpace(l) => l,
        }
    }

    pub fn as_exact(&self) -> Option<u64> {
        match *self {
            CountValue::Exact(c) => Some(c),
            CountValue::LogSpace(_) => None,
        }
    }
}

impl fmt::Display for CountValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountValue::Exact(c) => write!(f, "{c}"),
            CountValue::LogSpace(l) => write!(f, "exp({l})"),
        }
    }
}

/// One `(m, eps)` entry: a lower bound for `S` and, when computed, an upper
/// bound for `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub m: usize,
    pub eps: f64,
    pub s_lower: CountValue,
    pub n_upper: Option<CountValue>,
    pub mode: CountMode,
}

/// Growth rate of `ln S` in `m` at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SepEstimate {
    pub eps: f64,
    pub ms: Vec<usize>,
    /// Least-squares slope of `ln S` against `m`.
    pub slope: f64,
    /// Standard error of the slope; zero for exact or degenerate fits.
    pub stderr: f64,
    /// `slope ± 2 stderr`.
    pub band: (f64, f64),
    /// `ln S(m_max) / m_max`.
    pub endpoint: f64,
    /// All counts were equal; the slope is reported as 0.
    pub degenerate: bool,
}

/// `(slope, intercept, stderr of slope)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if xs.len() > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, stderr)
}

/// Validates an `m` schedule: at least three distinct values, all `>= 1`.
pub fn check_m_schedule(ms: &[usize]) -> Result<()> {
    let mut sorted = ms.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != ms.len() {
        return Err(Error::Schedule("m schedule has repeated values".into()));
    }
    if ms.len() < 3 {
        return Err(Error::Schedule(format!(
            "need at least 3 values of m, got {}",
            ms.len()
        )));
    }
    if sorted[0] < 1 {
        return Err(Error::Schedule("m values must be >= 1".into()));
    }
    Ok(())
}

/// Validates an eps schedule: strictly decreasing, at least three entries,
/// all in `(0, 1)` so that `-ln eps > 0`.
pub fn check_eps_schedule(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 {
        return Err(Error::Schedule(format!("need at least 3 scales, got {}", eps.len())));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::Schedule(format!("scale {e} outside (0, 1)")));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Schedule("eps schedule must be strictly decreasing".into()));
    }
    Ok(())
}

/// Fits the growth rate of `ln S` over rows sharing one `eps`.
pub fn sep_rate(rows: &[CountRow]) -> Result<SepEstimate> {
    let Some(first) = rows.first() else {
        return Err(Error::Schedule("no rows to fit".into()));
    };
    if rows.iter().any(|r| r.eps != first.eps) {
        return Err(Error::Schedule("sep_rate rows must share one eps".into()));
    }
    let ms: Vec<usize> = rows.iter().map(|r| r.m).collect();
    check_m_schedule(&ms)?;
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.s_lower.ln()).collect();
    let last = rows.iter().max_by_key(|r| r.m).expect("nonempty");
    let endpoint = last.s_lower.ln() / last.m as f64;
    if rows.iter().all(|r| r.s_lower == first.s_lower) {
        return Ok(SepEstimate {
            eps: first.eps,
            ms,
            slope: 0.0,
            stderr: 0.0,
            band: (0.0, 0.0),
            endpoint,
            degenerate: true,
        });
    }
    let (slope, _, stderr) = least_squares(&xs, &ys);
    Ok(SepEstimate {
        eps: first.eps,
        ms,
        slope,
        stderr,
        band: (slope - 2.0 * stderr, slope + 2.0 * stderr),
        endpoint,
        degenerate: false,
    })
}

/// Rows `S = nk^m` for a horseshoe with `nk` symbols at its own scale.
pub fn symbolic_rows(nk: usize, eps: f64, ms: &[usize]) -> Vec<CountRow> {
    ms.iter()
        .map(|&m| CountRow {
            m,
            eps,
            s_lower: CountValue::from_big(&symbolic_count(nk, m)),
            n_upper: None,
            mode: CountMode::Symbolic,
        })
        .collect()
}

/// Sep estimate for symbolic rows: the slope is `ln nk` by construction.
pub fn symbolic_sep_estimate(nk: usize, eps: f64, ms: &[usize]) -> Result<SepEstimate> {
    check_m_schedule(ms)?;
    let l = (nk as f64).ln();
    let degenerate = nk == 1;
    Ok(SepEstimate {
        eps,
        ms: ms.to_vec(),
        slope: l,
        stderr: 0.0,
        band: (l, l),
        endpoint: l,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdimRow {
    pub eps: f64,
    pub neg_log_eps: f64,
    pub sep: f64,
    /// `sep / (-ln eps)`.
    pub ratio: f64,
    /// Ratio above `n + 0.2`, which no genuine estimate can reach.
    pub flagged: bool,
}

/// Finite-scale metric mean dimension over a schedule of scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdimEstimate {
    pub dimension: usize,
    pub rows: Vec<MdimRow>,
    /// Minimum ratio over the tail (last half) of the schedule.
    pub lower: f64,
    /// Maximum ratio over the tail.
    pub upper: f64,
    /// Least-squares slope of `Sep` against `-ln eps` over the whole schedule.
    pub slope: f64,
    pub flagged: bool,
}

impl MdimEstimate {
    pub fn from_seps(dimension: usize, scales: &[(f64, f64)]) -> Result<Self> {
        let eps: Vec<f64> = scales.iter().map(|s| s.0).collect();
        check_eps_schedule(&eps)?;
        let rows: Vec<MdimRow> = scales
            .iter()
            .map(|&(eps, sep)| {
                let neg_log_eps = -eps.ln();
                let ratio = sep / neg_log_eps;
                MdimRow {
                    eps,
                    neg_log_eps,
                    sep,
                    ratio,
                    flagged: ratio > dimension as f64 + MDIM_FLAG_SLACK,
                }
            })
            .collect();
        let tail = &rows[rows.len() - rows.len().div_ceil(2)..];
        let lower = tail.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let upper = tail.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
        let xs: Vec<f64> = rows.iter().map(|r| r.neg_log_eps).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.sep).collect();
        let slope = least_squares(&xs, &ys).0;
        let flagged = rows.iter().any(|r| r.flagged);
        Ok(MdimEstimate {
            dimension,
            rows,
            lower,
            upper,
            slope,
            flagged,
        })
    }

    pub fn last(&self) -> &MdimRow {
        self.rows.last().expect("schedule has at least 3 rows")
    }
}

/// Count table with the fits derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub rows: Vec<CountRow>,
    pub sep_estimates: Vec<SepEstimate>,
    pub mdim: Option<MdimEstimate>,
}

impl ComplexityReport {
    /// CSV with a schema line, an optional timestamp line and one row per
    /// `(m, eps)`. Everything but the timestamp line is deterministic.
    pub fn to_csv(&self, generated: Option<&str>) -> String {
        let mut out = csv_preamble(generated);
        out.push_str("m,eps,S_lower,N_upper,mode\n");
        for r in &self.rows {
            let n = r.n_upper.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", r.m, r.eps, r.s_lower, n, r.mode));
        }
        out
    }

    /// Per-scale mdim table, if one was computed.
    pub fn mdim_csv(&self, generated: Option<&str>) -> Option<String> {
        let mdim = self.mdim.as_ref()?;
        let mut out = csv_preamble(generated);
        out.push_str("eps,neg_log_eps,sep,ratio,flagged\n");
        for r in &mdim.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.eps, r.neg_log_eps, r.sep, r.ratio, r.flagged
            ));
        }
        Some(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn rows_at(&self, eps: f64) -> Vec<CountRow> {
        self.rows.iter().filter(|r| r.eps == eps).cloned().collect()
    }
}

pub(crate) fn csv_preamble(generated: Option<&str>) -> String {
    let mut out = format!("# schema={CSV_SCHEMA}\n");
    if let Some(ts) = generated {
        out.push_str(&format!("# generated={ts}\n"));
    }
    out
}

/// Greedy count rows on a cloud for every `(eps, m)` pair, eps-major.
pub fn greedy_rows(cloud: &SampleCloud, eps_schedule: &[f64], ms: &[usize], spanning: bool) -> Result<Vec<CountRow>> {
    let mut rows = Vec::with_capacity(eps_schedule.len() * ms.len());
    for &eps in eps_schedule {
        for &m in ms {
            let s = max_separated(cloud, m, eps)?.len();
            let n = if spanning {
                Some(CountValue::from_count(min_spanning(cloud, m, eps)?))
            } else {
                None
            };
            rows.push(CountRow {
                m,
                eps,
                s_lower: CountValue::from_count(s),
                n_upper: n,
                mode: CountMode::Greedy,
            });
        }
    }
    Ok(rows)
}

/// Greedy Sep estimates per scale and the resulting mdim estimate.
pub fn mdim_estimate(
    sys: &SystemHandle,
    eps_schedule: &[f64],
    ms: &[usize],
    cloud_spec: &CloudSpec,
) -> Result<ComplexityReport> {
    check_eps_schedule(eps_schedule)?;
    check_m_schedule(ms)?;
    let horizon = *ms.iter().max().expect("checked nonempty");
    let cloud = cloud_spec.build(sys, horizon)?;
    let rows = greedy_rows(&cloud, eps_schedule, ms, false)?;
    let sep_estimates = eps_schedule
        .iter()
        .map(|&eps| sep_rate(&rows.iter().filter(|r| r.eps == eps).cloned().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let scales: Vec<(f64, f64)> = sep_estimates.iter().map(|s| (s.eps, s.slope)).collect();
    let mdim = MdimEstimate::from_seps(sys.dim(), &scales)?;
    Ok(ComplexityReport {
        rows,
        sep_estimates,
        mdim: Some(mdim),
    })
}

/// Symbolic table for the horseshoe family `eps_k = delta / k`: at scale
/// `eps_k` the separated count is `N_k^m` with `N_k = (2k)^n`, so
/// `Sep = n ln 2k` and the ratio is `n ln 2k / -ln(delta / k)`, which equals
/// `n (1 - ln 2delta / ln eps_k)`.
pub fn symbolic_mdim_table(n: usize, delta: f64, ks: &[usize], ms: &[usize]) -> Result<ComplexityReport> {
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Schedule("k schedule must be strictly increasing".into()));
    }
    check_m_schedule(ms)?;
    let mut rows = Vec::new();
    let mut sep_estimates = Vec::new();
    for &k in ks {
        let params = HorseshoeParams::new(n, delta, k)?;
        let nk = params
            .checked_n_symbols()
            .ok_or_else(|| Error::InvalidParams(format!("(2k)^n overflows for k = {k}")))?;
        let eps = params.eps_k();
        rows.extend(symbolic_rows(nk, eps, ms));
        sep_estimates.push(symbolic_sep_estimate(nk, eps, ms)?);
    }
    let scales: Vec<(f64, f64)> = sep_estimates.iter().map(|s| (s.eps, s.slope)).collect();
    let mdim = MdimEstimate::from_seps(n, &scales)?;
    Ok(ComplexityReport {
        rows,
        sep_estimates,
        mdim: Some(mdim),
    })
}
