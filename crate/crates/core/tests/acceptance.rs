//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances are pinned in `TOL_*` constants below.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::{One, Pow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mdimlab::affine::{qi, Q};
use mdimlab::complexity::{
    audit_separated, max_separated, max_separated_naive, mdim_estimate, sep_rate, symbolic_mdim_table, CloudSpec,
    CountMode, CountRow, CountValue, SampleCloud,
};
use mdimlab::geometry::Rectangle;
use mdimlab::horseshoe::{
    build_chained, build_pseudo_horseshoe, certify_chained, certify_pseudo, symbolic_count, HorseshoeParams,
    PseudoHorseshoe,
};
use mdimlab::katok::{horseshoe_gap_table, GapMode, DEFAULT_MASS_DELTAS};
use mdimlab::markov_check::verify_stage;
use mdimlab::systems::SystemHandle;

/// Finite-k mdim and gap rows: distance to n allowed, as a fraction of n.
const TOL_TREND: f64 = 0.1;
/// Slack above n allowed for the symbolic ratio.
const TOL_CEILING: f64 = 0.001;
/// Katok rate against Sep rate, as a fraction of n.
const TOL_GAP: f64 = 0.1;
/// Final gap row must reach this fraction of n.
const TOL_GAP_FINAL: f64 = 0.8;
/// Relative tolerance on the doubling Sep-rate.
const TOL_LN2: f64 = 0.1;
/// Absolute bound on identity / rotation mdim.
const TOL_ZERO_MDIM: f64 = 0.05;
/// Pushforward test threshold in standard deviations.
const TOL_SIGMA: f64 = 3.0;
/// Required speedup of the indexed extractor.
const MIN_SPEEDUP: f64 = 5.0;

/// δ for the finite-k family criteria. At δ = 1/4 the finite-k bias
/// `-n ln 2δ / ln ε_k` still exceeds 0.1 n at k = 64 (see the informational
/// row in criterion 2).
const FAMILY_DELTA: f64 = 0.45;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn pseudo(k: usize) -> PseudoHorseshoe {
    build_pseudo_horseshoe(&HorseshoeParams::new(2, 0.25, k).unwrap()).unwrap()
}

/// Chart-side certified counts from itinerary-cell representatives equal
/// `N_k^m` and the explicit bound `(2δ/ε_k)^(n m)`.
fn criterion_1() -> Outcome {
    let mut worst = String::new();
    let mut ok = true;
    let mut cases = 0;
    for k in [1usize, 2] {
        let params = HorseshoeParams::new(2, 0.25, k).unwrap();
        let nk = params.n_symbols().unwrap();
        // 2δ/ε_k = 2k exactly; raised to n m
        let ratio: Q = (qi(2) * params.delta_exact()) / params.eps_k_exact();
        for p in [1usize, 3] {
            let pseudo_h = (p == 1).then(|| build_pseudo_horseshoe(&params).unwrap());
            let chained_h = (p > 1).then(|| build_chained(&params, p, 1.5, 1).unwrap());
            for m in 1..=5 {
                let cert = match (&pseudo_h, &chained_h) {
                    (Some(h), _) => certify_pseudo(h, m).unwrap(),
                    (_, Some(h)) => certify_chained(h, m).unwrap(),
                    _ => unreachable!(),
                };
                let bound: Q = Pow::pow(ratio.clone(), (2 * m) as u32);
                let count = Q::from_integer(cert.count().into());
                let oracle = symbolic_count(nk, m);
                cases += 1;
                let good = cert.chart_separated() && cert.count() == oracle && count == bound && bound.denom().is_one();
                if !good {
                    ok = false;
                    worst = format!("k={k} p={p} m={m}: count {} oracle {oracle}", cert.count());
                }
            }
        }
    }
    let big: BigUint = symbolic_count(16, 5);
    outcome(
        ok,
        if ok {
            format!("{cases} cases equal N_k^m exactly (largest {big})")
        } else {
            worst
        },
    )
}

/// Symbolic mdim table over k = 1..64 matches the closed form, ends within
/// 0.1 n of n and never exceeds n + 0.001.
fn criterion_2() -> Outcome {
    let n = 2usize;
    let ks: Vec<usize> = (1..=64).collect();
    let rep = symbolic_mdim_table(n, FAMILY_DELTA, &ks, &[1, 2, 3]).unwrap();
    let mdim = rep.mdim.unwrap();
    let nf = n as f64;
    let mut max_err: f64 = 0.0;
    for (row, &k) in mdim.rows.iter().zip(&ks) {
        let eps = FAMILY_DELTA / k as f64;
        let closed = nf * (1.0 - (2.0 * FAMILY_DELTA).ln() / eps.ln());
        max_err = max_err.max((row.ratio - closed).abs());
    }
    let last = mdim.rows.last().unwrap().ratio;
    let ceiling = mdim.rows.iter().all(|r| r.ratio <= nf + TOL_CEILING);
    let ok = max_err < 1e-9 && (nf - last).abs() <= TOL_TREND * nf && ceiling;
    let quarter = symbolic_mdim_table(n, 0.25, &[62, 63, 64], &[1, 2, 3])
        .unwrap()
        .mdim
        .unwrap()
        .last()
        .ratio;
    outcome(
        ok,
        format!(
            "delta={FAMILY_DELTA}: ratio at k=64 = {last:.6} (n = {n}), closed-form error {max_err:.1e}; \
             info: delta=0.25 gives {quarter:.6}"
        ),
    )
}

/// Greedy extraction on cell centers matches the symbolic oracle.
fn criterion_3() -> Outcome {
    let params = HorseshoeParams::new(2, 0.25, 1).unwrap();
    let sys = SystemHandle::horseshoe(Arc::new(build_pseudo_horseshoe(&params).unwrap()));
    let nk = params.n_symbols().unwrap();
    let mut ok = true;
    let mut seen = Vec::new();
    for m in 1..=4 {
        let cloud = SampleCloud::itinerary_centers(&sys, m, m).unwrap();
        let kept = max_separated(&cloud, m, params.eps_k()).unwrap();
        let expect = symbolic_count(nk, m);
        ok &= BigUint::from(kept.len()) == expect && audit_separated(&cloud, m, params.eps_k(), &kept);
        seen.push(kept.len());
    }
    outcome(ok, format!("counts {seen:?} for m = 1..4, N_k = {nk}"))
}

/// Every piece of every built horseshoe passes exactly and at sampled
/// resolution 16; a piece pushed up by 2δ fails.
fn criterion_4() -> Outcome {
    let mut stages = Vec::new();
    for k in [1usize, 2] {
        let params = HorseshoeParams::new(2, 0.25, k).unwrap();
        stages.push(build_pseudo_horseshoe(&params).unwrap());
        stages.extend(build_chained(&params, 3, 1.5, 1).unwrap().stages().iter().cloned());
    }
    let mut pieces = 0;
    let mut failing = 0;
    for (s, h) in stages.iter().enumerate() {
        for r in verify_stage(h, s, Some(16), None).unwrap() {
            pieces += 1;
            let sampled_ok = r.sampled.as_ref().is_some_and(|v| v.passed);
            if !(r.exact.passed && sampled_ok) {
                failing += 1;
            }
        }
    }
    let mut bad = pseudo(2);
    let map = bad.piece(1, 5).map.post_translated(&[qi(0), qi(1) / qi(2)]);
    bad.replace_map(1, 5, map).unwrap();
    let report = verify_stage(&bad, 0, Some(16), None).unwrap();
    let caught: Vec<(usize, usize)> = report
        .iter()
        .filter(|r| !r.passed())
        .map(|r| (r.source, r.target))
        .collect();
    let ok = failing == 0 && caught == [(1, 5)];
    outcome(
        ok,
        format!(
            "{pieces} pieces over {} stages, {failing} failing; corrupted piece flags {caught:?}",
            stages.len()
        ),
    )
}

/// Katok rate against Sep rate for the Bernoulli itinerary measure.
fn criterion_5() -> Outcome {
    let n = 2usize;
    let nf = n as f64;
    let ks: Vec<usize> = (1..=8).collect();
    let table = horseshoe_gap_table(
        n,
        FAMILY_DELTA,
        &ks,
        &DEFAULT_MASS_DELTAS,
        &[1, 2, 3],
        GapMode::Auto,
        100_000,
        17,
    )
    .unwrap();
    let worst = table
        .rows
        .iter()
        .map(|r| (r.sep_ratio - r.h_ratio).abs())
        .fold(0.0, f64::max);
    let last = table.rows.last().unwrap();
    let ok = worst <= TOL_GAP * nf
        && last.h_ratio >= TOL_GAP_FINAL * nf
        && last.sep_ratio >= TOL_GAP_FINAL * nf
        && table.rows.iter().all(|r| r.h_ratio <= r.sep_ratio + 1e-12);
    let sampled = table
        .rows
        .iter()
        .filter(|r| matches!(r.method, mdimlab::katok::GapMethod::Sampled))
        .count();
    outcome(
        ok,
        format!(
            "max |h - Sep| = {worst:.4}, final row h = {:.4}, Sep = {:.4} (n = {n}); {sampled} sampled rows",
            last.h_ratio, last.sep_ratio
        ),
    )
}

/// Known answers: doubling Sep-rate ln 2, identity and rotation mdim 0.
fn criterion_6() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let doubling = SystemHandle::doubling(1).unwrap();
    let cloud = SampleCloud::lattice(&doubling, 1 << 16, 10).unwrap();
    let rows: Vec<CountRow> = (4..=10)
        .map(|m| CountRow {
            m,
            eps: 1.0 / 64.0,
            s_lower: CountValue::from_count(max_separated(&cloud, m, 1.0 / 64.0).unwrap().len()),
            n_upper: None,
            mode: CountMode::Greedy,
        })
        .collect();
    let slope = sep_rate(&rows).unwrap().slope;
    let eps = [0.2, 0.1, 0.05];
    let id = SystemHandle::identity_cube(Rectangle::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
    let rot = SystemHandle::rotation(vec![std::f64::consts::SQRT_2 - 1.0, 0.5f64.sqrt()]).unwrap();
    let mut zero = Vec::new();
    for sys in [id, rot] {
        let m = mdim_estimate(&sys, &eps, &[1, 2, 3, 4], &CloudSpec::Lattice { res: 41 })
            .unwrap()
            .mdim
            .unwrap();
        zero.push(m.upper.abs().max(m.lower.abs()));
    }
    let ok = (slope - ln2).abs() <= TOL_LN2 * ln2 && zero.iter().all(|&z| z <= TOL_ZERO_MDIM);
    outcome(
        ok,
        format!(
            "doubling slope {slope:.5} (ln 2 = {ln2:.5}); |mdim| identity {:.4}, rotation {:.4}",
            zero[0], zero[1]
        ),
    )
}

/// Every piece has determinant exactly 1, and the map pushes uniform mass
/// on its slabs to uniform mass on its images.
fn criterion_7() -> Outcome {
    let mut stages = Vec::new();
    for k in [1usize, 2] {
        let params = HorseshoeParams::new(2, 0.25, k).unwrap();
        stages.push(build_pseudo_horseshoe(&params).unwrap());
        stages.extend(build_chained(&params, 3, 1.5, 1).unwrap().stages().iter().cloned());
    }
    let dets_ok = stages
        .iter()
        .flat_map(|s| s.pieces())
        .all(|p| p.map.det() == qi(1) || p.map.det() == qi(-1));

    let h = pseudo(2);
    let slabs: Vec<Rectangle> = h.pieces().iter().map(|p| p.slab_rect().clone()).collect();
    let images: Vec<Rectangle> = h.pieces().iter().map(|p| p.image().to_rect().unwrap()).collect();
    let vols: Vec<f64> = slabs.iter().map(Rectangle::volume).collect();
    let total: f64 = vols.iter().sum();
    let lo: Vec<f64> = (0..2)
        .map(|a| images.iter().map(|r| r.lo()[a]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..2)
        .map(|a| images.iter().map(|r| r.hi()[a]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let cube = Rectangle::from_bounds(&lo, &hi).unwrap();
    let bins = 48usize;
    let bin = |axis: usize, i: usize| {
        let w = cube.width(axis) / bins as f64;
        (cube.lo()[axis] + i as f64 * w, cube.lo()[axis] + (i + 1) as f64 * w)
    };
    // expected mass per bin: uniform density 1/total on every image
    let mut expected = vec![0.0; bins * bins];
    for (bx, e) in expected.iter_mut().enumerate() {
        let (x0, x1) = bin(0, bx % bins);
        let (y0, y1) = bin(1, bx / bins);
        let b = Rectangle::from_bounds(&[x0, y0], &[x1, y1]).unwrap();
        *e = images
            .iter()
            .filter_map(|im| im.intersection(&b))
            .map(|r| r.volume())
            .sum::<f64>()
            / total;
    }
    let samples = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut observed = vec![0u64; bins * bins];
    let mut escaped = 0u64;
    for _ in 0..samples {
        let mut u = rng.random::<f64>() * total;
        let mut idx = 0;
        while idx + 1 < vols.len() && u >= vols[idx] {
            u -= vols[idx];
            idx += 1;
        }
        let s = &slabs[idx];
        let x: Vec<f64> = (0..2).map(|a| s.lo()[a] + rng.random::<f64>() * s.width(a)).collect();
        let mut y = [0.0; 2];
        if !h.apply_slice(&x, &mut y) {
            escaped += 1;
            continue;
        }
        let cell = |a: usize| (((y[a] - cube.lo()[a]) / cube.width(a) * bins as f64).floor() as usize).min(bins - 1);
        observed[cell(1) * bins + cell(0)] += 1;
    }
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    let mut stray = 0u64;
    for (o, e) in observed.iter().zip(&expected) {
        let e = e * samples as f64;
        if e > 0.0 {
            chi2 += (*o as f64 - e).powi(2) / e;
            dof += 1;
        } else {
            stray += o;
        }
    }
    let dof = dof.saturating_sub(1) as f64;
    let threshold = dof + TOL_SIGMA * (2.0 * dof).sqrt();
    let ok = dets_ok && escaped == 0 && stray == 0 && chi2 <= threshold;
    outcome(
        ok,
        format!(
            "det = 1 on {} pieces: {dets_ok}; chi2 = {chi2:.1} vs {threshold:.1} over {dof} dof, {escaped} escaped, {stray} stray",
            stages.iter().map(|s| s.pieces().len()).sum::<usize>()
        ),
    )
}

fn best_of<T>(runs: usize, mut f: impl FnMut() -> T) -> (T, Duration) {
    let mut best = Duration::MAX;
    let mut out = None;
    for _ in 0..runs {
        let t = Instant::now();
        let v = f();
        best = best.min(t.elapsed());
        out = Some(v);
    }
    (out.unwrap(), best)
}

/// Indexed and naive extraction agree on 10^4 lattice points, indexed at
/// least 5x faster.
fn criterion_8() -> Outcome {
    let sys = SystemHandle::cat_map();
    let cloud = SampleCloud::lattice(&sys, 100, 2).unwrap();
    let eps = 1.0 / 32.0;
    let (fast, t_fast) = best_of(3, || max_separated(&cloud, 2, eps).unwrap());
    let (slow, t_slow) = best_of(3, || max_separated_naive(&cloud, 2, eps).unwrap());
    let speedup = t_slow.as_secs_f64() / t_fast.as_secs_f64().max(1e-9);
    let ok = fast == slow && cloud.len() == 10_000 && speedup >= MIN_SPEEDUP;
    outcome(
        ok,
        format!(
            "{} points, {} kept, identical: {}; indexed {:.2?} vs naive {:.2?} ({speedup:.1}x)",
            cloud.len(),
            fast.len(),
            fast == slow,
            t_fast,
            t_slow
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("exact separated counts of horseshoe cells", 10, criterion_1),
        ("finite-k mdim trend toward n", 5, criterion_2),
        ("greedy extraction matches symbolic count", 60, criterion_3),
        ("Markov verification, exact and sampled", 10, criterion_4),
        ("Katok rate tracks Sep rate", 300, criterion_5),
        ("calibration on known answers", 120, criterion_6),
        ("determinant one and uniform pushforward", 60, criterion_7),
        ("indexed extraction agrees and is faster", 60, criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        let in_budget = secs < *budget as f64;
        let passed = out.passed && in_budget;
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name}: {} [{secs:.2}s of {budget}s]",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
