mod common;

use twosite::analysis;
use twosite::controller::{self, ControllerConfig};
use twosite::sim::IntegratorConfig;

#[test]
fn halving_tolerances_reduces_error() {
    let m = common::model();
    let start = analysis::solve_equilibrium(&m, 1.0, 0.0).unwrap();
    let cfg = ControllerConfig::with_default_poles(1.2, 0.0, 0.0);
    let run = |rtol: f64| {
        let integ = IntegratorConfig {
            rtol,
            atol: rtol * 1e-2,
            ..IntegratorConfig::default()
        }
        .with_horizon(10.0, 10.0);
        let r = controller::simulate_closed_loop(&m, &start.x_star, [0.0, 0.0], &cfg, &integ).unwrap();
        *r.states.last().unwrap()
    };
    let reference = run(1e-13);
    let errs: Vec<f64> = [4e-6, 2e-6, 1e-6, 5e-7]
        .iter()
        .map(|&t| run(t).max_abs_diff(&reference))
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
}

#[test]
fn stabilization_inputs_stay_nominal() {
    let m = common::model();
    let start = analysis::solve_equilibrium(&m, 1.0, 0.0).unwrap();
    for target in [0.8, 1.2] {
        let cfg = ControllerConfig::with_default_poles(target, 0.0, 0.0);
        let integ = IntegratorConfig::default().with_horizon(40.0, 0.1);
        let run = controller::simulate_closed_loop(&m, &start.x_star, [0.0, 0.0], &cfg, &integ).unwrap();
        assert!(run.is_complete());
        assert!(run.saturation.within_nominal, "{:?}", run.saturation);
        assert_eq!(run.saturation.violations, 0);
    }
}

#[test]
fn start_outside_the_region_is_refused() {
    let m = common::model();
    let mut x = analysis::solve_equilibrium(&m, 1.0, 0.0).unwrap().x_star;
    x.0[twosite::model::idx::DELTA1] = 3.0;
    let cfg = ControllerConfig::with_default_poles(1.0, 0.0, 0.0);
    let r = controller::simulate_closed_loop(&m, &x, [0.0, 0.0], &cfg, &IntegratorConfig::default());
    assert!(matches!(r, Err(twosite::Error::OutsideRegion { .. })));
}
