mod common;

use common::*;
use dimfac::exact::{enumerate_exact, DEFAULT_LIMIT};
use dimfac::grasp::{grasp_solve_with, greedy_improve, GraspParams};
use proptest::prelude::*;

fn small_params(seed: u64) -> GraspParams {
    GraspParams { psi: 4, varpi: 2, max_outer: Some(8), rng_seed: seed, ..GraspParams::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn greedy_never_worsens(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fx = random_fixture(&mut r, 5, 5, 2);
        let di = fx.build();
        let ev = evaluator(&di, &fx);
        let Some(p) = random_placement(&di, &mut r, 200) else { return Ok(()) };
        let before = ev.objective(&p).unwrap().total;
        let params = GraspParams { delta_k: 1, delta_l: 1, ..GraspParams::default() };
        let (q, e) = greedy_improve(&ev, &p, &params).unwrap();
        prop_assert!(e.total <= before);
        prop_assert!(di.check_placement(&q).is_ok());
        prop_assert_eq!(ev.objective(&q).unwrap().total, e.total);
    }

    #[test]
    fn exact_bounds_grasp(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fx = random_fixture(&mut r, 4, 4, 2);
        let di = fx.build();
        let ev = evaluator(&di, &fx);
        let Ok((_, best)) = enumerate_exact(&ev, DEFAULT_LIMIT) else { return Ok(()) };
        let Ok(out) = grasp_solve_with(&ev, &small_params(seed)) else { return Ok(()) };
        prop_assert!(best.total <= out.evaluation.total);
        prop_assert!(out.evaluation.total <= out.stats.initial_best);
        prop_assert!(di.check_placement(&out.placement).is_ok());
        prop_assert!(out.list.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}

#[test]
fn single_facility_with_full_window_is_exact() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let fx = random_fixture(&mut r, 5, 4, 1);
        let di = fx.build();
        let ev = evaluator(&di, &fx);
        let (p, best) = enumerate_exact(&ev, DEFAULT_LIMIT).unwrap();
        let params = GraspParams { delta_k: 5, delta_l: 4, ..small_params(seed) };
        let out = grasp_solve_with(&ev, &params).unwrap();
        assert_eq!(out.evaluation.total, best.total, "seed {seed}");
        assert_eq!(ev.objective(&out.placement).unwrap().total, ev.objective(&p).unwrap().total);
    }
}

#[test]
fn grasp_is_deterministic_per_seed() {
    let mut r = rng(7);
    let fx = random_fixture(&mut r, 6, 6, 3);
    let di = fx.build();
    let ev = evaluator(&di, &fx);
    let a = grasp_solve_with(&ev, &small_params(3));
    let b = grasp_solve_with(&ev, &small_params(3));
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}
