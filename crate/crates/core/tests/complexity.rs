//! Known-answer checks for the counting core. Expected values come from
//! closed forms computed here, never from the code under test.

use std::sync::Arc;

use mdimlab::complexity::{
    audit_separated, eligible_weight, greedy_cover, max_separated, max_separated_naive, mdim_estimate, min_spanning,
    sep_rate, CloudSpec, CountMode, CountRow, CountValue, SampleCloud,
};
use mdimlab::geometry::Rectangle;
use mdimlab::horseshoe::{build_pseudo_horseshoe, HorseshoeParams};
use mdimlab::systems::SystemHandle;

fn greedy_rows(cloud: &SampleCloud, eps: f64, ms: impl IntoIterator<Item = usize>) -> Vec<CountRow> {
    ms.into_iter()
        .map(|m| CountRow {
            m,
            eps,
            s_lower: CountValue::from_count(max_separated(cloud, m, eps).unwrap().len()),
            n_upper: None,
            mode: CountMode::Greedy,
        })
        .collect()
}

/// On the dyadic lattice `i / 2^16`, doubling `t` times multiplies circle
/// distances by `2^t` until they pass 1/2, so two lattice points are
/// `(m, 2^-j)`-separated iff they are `2^-(j+m-1)` apart. The greedy pass
/// keeps every `2^(16-j-m+1)`-th point: `2^(m+j-1)` in total.
fn dyadic_separated(m: u32, j: u32) -> usize {
    1 << (m + j - 1)
}

#[test]
fn doubling_lattice_matches_dyadic_count() {
    let sys = SystemHandle::doubling(1).unwrap();
    let cloud = SampleCloud::lattice(&sys, 1 << 16, 10).unwrap();
    let rows = greedy_rows(&cloud, 1.0 / 64.0, 4..=10);
    for r in &rows {
        assert_eq!(
            r.s_lower,
            CountValue::Exact(dyadic_separated(r.m as u32, 6) as u64),
            "m = {}",
            r.m
        );
    }
    let fit = sep_rate(&rows).unwrap();
    let ln2 = std::f64::consts::LN_2;
    assert!((fit.slope - ln2).abs() <= 0.1 * ln2, "slope {}", fit.slope);
}

#[test]
fn doubling_sep_rate_over_scales() {
    let sys = SystemHandle::doubling(1).unwrap();
    let cloud = SampleCloud::lattice(&sys, 1 << 16, 9).unwrap();
    let ln2 = std::f64::consts::LN_2;
    for j in 4..=7 {
        // keep 2^(m + j - 1) below the lattice size
        let rows = greedy_rows(&cloud, (0.5f64).powi(j), 3..=(17 - j as usize).min(9));
        let fit = sep_rate(&rows).unwrap();
        assert!(
            fit.slope >= 0.9 * ln2 && fit.slope <= 1.1 * ln2,
            "eps 2^-{j}: {}",
            fit.slope
        );
    }
}

#[test]
fn doubling_spanning_count_is_optimal_interval_cover() {
    // (8, 2^-5)-balls are open arcs of radius 2^-12, i.e. 31 lattice points
    // of i / 2^16, so an optimal cover needs ceil(2^16 / 31) arcs
    let sys = SystemHandle::doubling(1).unwrap();
    let cloud = SampleCloud::lattice(&sys, 1 << 16, 8).unwrap();
    let n = min_spanning(&cloud, 8, 1.0 / 32.0).unwrap();
    let optimal = (1usize << 16).div_ceil(31);
    assert_eq!(n, optimal);
    let scale = (1u32 << 8) as f64 * 32.0;
    assert!(scale / 4.0 <= n as f64 && n as f64 <= scale * 4.0);
}

#[test]
fn cat_map_rate_near_log_golden_square() {
    let sys = SystemHandle::cat_map();
    let cloud = SampleCloud::lattice(&sys, 128, 5).unwrap();
    let rows = greedy_rows(&cloud, 0.125, 2..=5);
    let fit = sep_rate(&rows).unwrap();
    let h = ((3.0 + 5f64.sqrt()) / 2.0).ln();
    assert!((fit.slope - h).abs() <= 0.15 * h, "slope {} vs {h}", fit.slope);
}

#[test]
fn doubling_mdim_slope_vanishes() {
    let sys = SystemHandle::doubling(1).unwrap();
    let eps: Vec<f64> = (4..=9).map(|j| 0.5f64.powi(j)).collect();
    let rep = mdim_estimate(&sys, &eps, &[2, 3, 4, 5, 6], &CloudSpec::Lattice { res: 1 << 16 }).unwrap();
    let mdim = rep.mdim.unwrap();
    assert!(mdim.slope.abs() <= 0.1, "slope {}", mdim.slope);
    // the ratio itself is ln 2 / (j ln 2) = 1/j on this schedule
    for (row, j) in mdim.rows.iter().zip(4..) {
        assert!((row.ratio - 1.0 / j as f64).abs() < 0.02, "eps 2^-{j}: {}", row.ratio);
    }
}

#[test]
fn identity_and_rotation_have_zero_mdim() {
    let eps = [0.2, 0.1, 0.05];
    let id = SystemHandle::identity_cube(Rectangle::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
    let rot = SystemHandle::rotation(vec![std::f64::consts::SQRT_2 - 1.0, 0.5f64.sqrt()]).unwrap();
    for sys in [id, rot] {
        let rep = mdim_estimate(&sys, &eps, &[1, 2, 3, 4], &CloudSpec::Lattice { res: 41 }).unwrap();
        let mdim = rep.mdim.unwrap();
        assert!(mdim.upper <= 0.05 && mdim.lower >= -0.05, "{mdim:?}");
    }
}

#[test]
fn identity_square_lattice_packing() {
    let sys = SystemHandle::identity_cube(Rectangle::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
    let cloud = SampleCloud::lattice(&sys, 33, 4).unwrap();
    // brute force: lattice coordinates i/32, so a 0.25-separated set in one
    // axis has at most 1 + 32/8 members
    let per_axis = (0..=32).filter(|i| i % 8 == 0).count();
    for m in [1, 4] {
        assert_eq!(max_separated(&cloud, m, 0.25).unwrap().len(), per_axis * per_axis);
    }
}

#[test]
fn horseshoe_cell_centers_are_all_separated() {
    let params = HorseshoeParams::new(2, 0.25, 1).unwrap();
    let sys = SystemHandle::horseshoe(Arc::new(build_pseudo_horseshoe(&params).unwrap()));
    let cloud = SampleCloud::itinerary_centers(&sys, 3, 3).unwrap();
    let kept = max_separated(&cloud, 3, params.eps_k()).unwrap();
    assert_eq!(kept.len(), 64);
    assert!(audit_separated(&cloud, 3, params.eps_k(), &kept));
}

#[test]
fn one_ball_when_eps_covers_the_domain() {
    let sys = SystemHandle::identity_cube(Rectangle::from_bounds(&[0.0, 0.0, 0.0], &[1.0, 2.0, 1.0]).unwrap());
    let cloud = SampleCloud::uniform(&sys, 300, 2, 2).unwrap();
    assert_eq!(min_spanning(&cloud, 2, 2.5).unwrap(), 1);
}

#[test]
fn indexed_and_naive_agree_on_random_cat_map_cloud() {
    let sys = SystemHandle::cat_map();
    let cloud = SampleCloud::uniform(&sys, 10_000, 11, 3).unwrap();
    for (m, eps) in [(1, 1.0 / 32.0), (3, 1.0 / 32.0), (2, 0.1)] {
        assert_eq!(
            max_separated(&cloud, m, eps).unwrap(),
            max_separated_naive(&cloud, m, eps).unwrap()
        );
    }
}

#[test]
fn escaped_orbits_are_excluded() {
    let params = HorseshoeParams::new(2, 0.25, 1).unwrap();
    let sys = SystemHandle::horseshoe(Arc::new(build_pseudo_horseshoe(&params).unwrap()));
    let cloud = SampleCloud::lattice(&sys, 21, 3).unwrap();
    let eligible = cloud.eligible(3);
    assert!(eligible.len() < cloud.len());
    let kept = max_separated(&cloud, 3, 0.05).unwrap();
    assert!(kept.iter().all(|i| eligible.contains(i)));
    let cover = greedy_cover(&cloud, 3, 0.05, None, eligible_weight(&cloud, 3)).unwrap();
    assert!(cover.complete());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn system(which: u8) -> SystemHandle {
        match which % 3 {
            0 => SystemHandle::cat_map(),
            1 => SystemHandle::doubling(2).unwrap(),
            _ => SystemHandle::identity_cube(Rectangle::from_bounds(&[0.0, 0.0], &[1.0, 1.0]).unwrap()),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn duality_chain(which in 0u8..3, seed in 0u64..1000, m in 1usize..4, eps in 0.05f64..0.3) {
            let sys = system(which);
            let cloud = SampleCloud::uniform(&sys, 400, seed, 3).unwrap();
            let s2 = max_separated(&cloud, m, 2.0 * eps).unwrap().len();
            let n = min_spanning(&cloud, m, eps).unwrap();
            let s = max_separated(&cloud, m, eps).unwrap().len();
            prop_assert!(s2 <= n && n <= s, "{} <= {} <= {}", s2, n, s);
        }

        #[test]
        fn index_matches_naive(which in 0u8..3, seed in 0u64..1000, m in 1usize..4, eps in 0.01f64..0.4) {
            let sys = system(which);
            let cloud = SampleCloud::uniform(&sys, 600, seed, 3).unwrap();
            prop_assert_eq!(max_separated(&cloud, m, eps).unwrap(), max_separated_naive(&cloud, m, eps).unwrap());
        }

        #[test]
        fn greedy_separated_sets_are_maximal(which in 0u8..3, seed in 0u64..1000, m in 1usize..4, eps in 0.05f64..0.3) {
            let sys = system(which);
            let cloud = SampleCloud::uniform(&sys, 300, seed, 3).unwrap();
            let kept = max_separated(&cloud, m, eps).unwrap();
            prop_assert!(audit_separated(&cloud, m, eps, &kept));
        }
    }
}
