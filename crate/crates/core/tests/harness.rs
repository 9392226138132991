use std::collections::BTreeMap;

use reflectal::coefficients::preset;
use reflectal::forward::TimeGrid;
use reflectal::geometry::DomainSpec;
use reflectal::harness::{convergence_study, tail_study, BsdeSettings, LevelStatus, Target, TailOptions};
use reflectal::Error;

const LADDER: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

fn unit() -> DomainSpec {
    DomainSpec::interval(0.0, 1.0).unwrap()
}

fn with(name: &str, pairs: &[(&str, f64)]) -> reflectal::coefficients::CoefficientSet {
    let p: BTreeMap<String, f64> = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    preset(name, &p).unwrap()
}

#[test]
fn reports_are_reproducible_and_ladder_points_independent() {
    let c = with("constant-drift", &[]);
    let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
    let run = |ladder: &[f64]| {
        convergence_study(Target::X4, &c, &unit(), &[0.5], ladder, 1000, grid, 17, &BsdeSettings::default()).unwrap()
    };
    let a = run(&LADDER);
    let b = run(&LADDER);
    assert_eq!(a.to_table().to_csv(), b.to_table().to_csv());
    let longer = run(&[0.1, 0.05, 0.025, 0.0125, 0.00625]);
    assert_eq!(&longer.errors[..4], &a.errors[..]);
}

#[test]
fn no_noise_leaves_only_scheme_residue() {
    let c = with("constant-drift", &[("sigma", 0.0)]);
    let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
    let r = convergence_study(Target::X4, &c, &unit(), &[0.5], &LADDER, 1000, grid, 1, &BsdeSettings::default())
        .unwrap();
    let dt = grid.dt();
    assert!(r.errors.iter().all(|&e| e <= 10.0 * dt * dt));
    assert!(r.fit.is_none());
}

#[test]
fn bad_ladders_are_rejected() {
    let c = with("constant-drift", &[]);
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let bs = BsdeSettings::default();
    assert!(convergence_study(Target::X4, &c, &unit(), &[0.5], &[0.1, 0.05, 0.025], 1000, grid, 1, &bs).is_err());
    assert!(convergence_study(Target::X4, &c, &unit(), &[0.5], &[0.1, 0.06, 0.03, 0.015], 1000, grid, 1, &bs).is_err());
    assert!(convergence_study(Target::X4, &c, &unit(), &[0.5], &LADDER, 999, grid, 1, &bs).is_err());
}

#[test]
fn few_paths_at_small_noise_are_insufficient() {
    // Hits of the lower wall are rare events, so K4 from 0.9 is mostly zero.
    let c = with("zero-drift-unit-noise", &[]);
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let r = convergence_study(Target::K4, &c, &unit(), &[0.9], &[0.008, 0.004, 0.002, 0.001], 1000, grid, 2,
        &BsdeSettings::default());
    assert!(matches!(r, Err(Error::InsufficientPaths { .. })), "{r:?}");
}

#[test]
fn impossible_tail_event_has_zero_hits() {
    let c = with("zero-drift-unit-noise", &[]);
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let opts = TailOptions { action_steps: 20, ..TailOptions::default() };
    let r = tail_study(&c, &unit(), &[0.5], 1.5, &[0.08, 0.04], 500, grid, 3, &opts).unwrap();
    assert_eq!(r.delta, 1.5);
    assert!(r.status.iter().all(|s| *s == LevelStatus::ZeroHits));
    assert!(r.p_hat.iter().all(|&p| p == 0.0));
    assert!(r.s_star.is_none());
}

#[test]
fn tail_estimates_agree_across_seeds() {
    let c = with("zero-drift-unit-noise", &[]);
    let grid = TimeGrid::new(0.0, 1.0, 200).unwrap();
    let opts = TailOptions { action_steps: 20, p_range: (1e-4, 1.0), ..TailOptions::default() };
    let a = tail_study(&c, &unit(), &[0.5], 0.2, &[0.02], 4000, grid, 10, &opts).unwrap();
    let b = tail_study(&c, &unit(), &[0.5], 0.2, &[0.02], 8000, grid, 11, &opts).unwrap();
    assert_eq!((a.delta, b.delta), (0.2, 0.2));
    let se = (a.p_se[0].powi(2) + b.p_se[0].powi(2)).sqrt();
    assert!((a.p_hat[0] - b.p_hat[0]).abs() <= 3.0 * se, "{} vs {}", a.p_hat[0], b.p_hat[0]);
    assert!(a.eps_log_p[0].unwrap() <= 0.0);
}

#[test]
fn fourth_moment_bound_is_uniform_over_start_points() {
    let c = with("constant-drift", &[]);
    let grid = TimeGrid::new(0.0, 1.0, 256).unwrap();
    let mut worst = 0.0_f64;
    for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let r = convergence_study(Target::X4, &c, &unit(), &[x], &LADDER, 2000, grid, 8, &BsdeSettings::default())
            .unwrap();
        assert!(r.strictly_decreasing(), "x = {x}: {:?}", r.errors);
        let c_x = r.errors.iter().zip(&LADDER).map(|(e, eps)| e / eps).fold(0.0, f64::max);
        worst = worst.max(c_x);
    }
    assert!(worst <= 1.0, "{worst}");
}
