//! Greedy separated sets and greedy dynamical-ball covers on a sample cloud.
//!
//! Conventions shared by every count: two points are `(m, eps)`-separated
//! iff `d_m >= eps - SEPARATION_TOL`, and `y` lies in the open ball
//! `B_m(x, eps)` iff `d_m(x, y) < eps - SEPARATION_TOL`. The two relations
//! are complementary, so a maximal separated set is also a cover.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, DEFAULT_TOL};

use super::cloud::SampleCloud;
use super::index::SpatialIndex;

pub const SEPARATION_TOL: f64 = DEFAULT_TOL;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "eps must be positive and finite, got {eps}"
        )));
    }
    Ok(())
}

/// Greedy maximal `(m, eps)`-separated subset of the points whose orbit is
/// defined for `m` steps, as cloud indices in cloud order.
///
/// A point is kept iff it is separated from everything kept before it.
/// Only kept points within step-0 distance `eps` can fail that test, so
/// candidates come from a grid index over kept points.
pub fn max_separated(cloud: &SampleCloud, m: usize, eps: f64) -> Result<Vec<usize>> {
    cloud.check_horizon(m)?;
    check_eps(eps)?;
    let thr = eps - SEPARATION_TOL;
    let mut index = SpatialIndex::new(cloud.dim(), cloud.metric(), eps);
    let mut kept = Vec::new();
    let mut cand = Vec::new();
    for i in cloud.eligible(m) {
        index.candidates(cloud.start(i), &mut cand);
        if cand.iter().all(|&j| cloud.dyn_dist(i, j as usize, m, thr) >= thr) {
            index.insert(i as u32, cloud.start(i));
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Same selection as [`max_separated`] by comparing against every kept point.
pub fn max_separated_naive(cloud: &SampleCloud, m: usize, eps: f64) -> Result<Vec<usize>> {
    cloud.check_horizon(m)?;
    check_eps(eps)?;
    let thr = eps - SEPARATION_TOL;
    let mut kept: Vec<usize> = Vec::new();
    for i in cloud.eligible(m) {
        if kept.iter().all(|&j| cloud.dyn_dist(i, j, m, thr) >= thr) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// [`max_separated`] returning the start points.
pub fn max_separated_points(cloud: &SampleCloud, m: usize, eps: f64) -> Result<Vec<Point>> {
    Ok(max_separated(cloud, m, eps)?
        .into_iter()
        .map(|i| cloud.start_point(i))
        .collect())
}

/// Result of a greedy cover by dynamical balls centered at cloud points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cover {
    /// Chosen centers in selection order.
    pub centers: Vec<usize>,
    pub covered_weight: u64,
    pub target_weight: u64,
}

impl Cover {
    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn complete(&self) -> bool {
        self.covered_weight >= self.target_weight
    }
}

/// Balls `B_m(c, eps)` restricted to the eligible points of a cloud.
struct BallOracle<'a> {
    cloud: &'a SampleCloud,
    index: SpatialIndex,
    m: usize,
    thr: f64,
}

impl<'a> BallOracle<'a> {
    fn new(cloud: &'a SampleCloud, m: usize, eps: f64) -> Self {
        let mut index = SpatialIndex::new(cloud.dim(), cloud.metric(), eps);
        for i in cloud.eligible(m) {
            index.insert(i as u32, cloud.start(i));
        }
        BallOracle {
            cloud,
            index,
            m,
            thr: eps - SEPARATION_TOL,
        }
    }

    fn ball(&self, c: usize, buf: &mut Vec<u32>) {
        self.index.candidates(self.cloud.start(c), buf);
        buf.retain(|&j| self.cloud.dyn_dist(c, j as usize, self.m, self.thr) < self.thr);
    }
}

/// Greedy weighted cover of the eligible points by `(m, eps)`-balls.
///
/// Centers are drawn from `candidates` (default: every eligible point) and
/// picked by largest uncovered weight, ties to the smallest index. Selection
/// stops once `target` weight is covered or nothing more can be gained, so
/// the centers for a smaller target are a prefix of those for a larger one.
/// On the cloud this is within a factor `1 + ln |cloud|` of the optimum.
pub fn greedy_cover(
    cloud: &SampleCloud,
    m: usize,
    eps: f64,
    candidates: Option<&[usize]>,
    target: u64,
) -> Result<Cover> {
    cloud.check_horizon(m)?;
    check_eps(eps)?;
    let oracle = BallOracle::new(cloud, m, eps);
    let eligible = cloud.eligible(m);
    let cands: Vec<usize> = match candidates {
        Some(c) => {
            if let Some(&bad) = c.iter().find(|&&i| i >= cloud.len() || cloud.valid_len(i) < m) {
                return Err(Error::InvalidParams(format!(
                    "cover center {bad} is not an eligible cloud point"
                )));
            }
            c.to_vec()
        }
        None => eligible,
    };

    let gains: Vec<u64> = cands
        .par_iter()
        .map_init(Vec::new, |buf, &c| {
            oracle.ball(c, buf);
            buf.iter().map(|&j| cloud.weight(j as usize)).sum()
        })
        .collect();
    let mut heap: BinaryHeap<(u64, Reverse<usize>)> =
        cands.iter().zip(&gains).map(|(&c, &g)| (g, Reverse(c))).collect();

    let mut covered = vec![false; cloud.len()];
    let mut cover = Cover {
        centers: Vec::new(),
        covered_weight: 0,
        target_weight: target,
    };
    let mut buf = Vec::new();
    while cover.covered_weight < target {
        let Some((stale, Reverse(c))) = heap.pop() else { break };
        if stale == 0 {
            break;
        }
        oracle.ball(c, &mut buf);
        let gain: u64 = buf
            .iter()
            .filter(|&&j| !covered[j as usize])
            .map(|&j| cloud.weight(j as usize))
            .sum();
        if gain < stale {
            heap.push((gain, Reverse(c)));
            continue;
        }
        for &j in &buf {
            covered[j as usize] = true;
        }
        cover.covered_weight += gain;
        cover.centers.push(c);
    }
    Ok(cover)
}

/// Weight of the points whose orbit is defined for `m` steps.
pub fn eligible_weight(cloud: &SampleCloud, m: usize) -> u64 {
    cloud.eligible(m).iter().map(|&i| cloud.weight(i)).sum()
}

/// Upper bound for the number of `(m, eps)`-balls needed to cover the cloud:
/// the smaller of the greedy cover and the greedy maximal separated set
/// (which covers because it is maximal).
pub fn min_spanning(cloud: &SampleCloud, m: usize, eps: f64) -> Result<usize> {
    let sep = max_separated(cloud, m, eps)?;
    let cover = greedy_cover(cloud, m, eps, None, eligible_weight(cloud, m))?;
    Ok(cover.count().min(sep.len()))
}

/// `max_separated` with every pairwise check confirmed and maximality
/// checked against every eligible point. Quadratic; meant for tests.
pub fn audit_separated(cloud: &SampleCloud, m: usize, eps: f64, kept: &[usize]) -> bool {
    let thr = eps - SEPARATION_TOL;
    let separated = kept.iter().enumerate().all(|(a, &i)| {
        kept[a + 1..]
            .iter()
            .all(|&j| cloud.dyn_dist(i, j, m, f64::INFINITY) >= thr)
    });
    let maximal = cloud
        .eligible(m)
        .par_iter()
        .all(|&i| kept.contains(&i) || kept.iter().any(|&j| cloud.dyn_dist(i, j, m, f64::INFINITY) < thr));
    separated && maximal
}
