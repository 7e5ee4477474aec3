mod common;

use twosite::analysis;
use twosite::controller::{self, ControllerConfig};
use twosite::model::idx;
use twosite::normal_form::{linspace, phi_hat};
use twosite::sim::IntegratorConfig;
use twosite::zero_dynamics::ETA_HAT;

#[test]
fn equilibria_lie_in_the_region_over_the_operating_range() {
    let m = common::model();
    for y1 in linspace(0.65, 1.27, 32) {
        let s = analysis::solve_equilibrium(&m, y1, 0.0).unwrap();
        assert!(s.in_region, "Y1 = {y1}");
        assert!(s.residual < 1e-10);
    }
}

#[test]
fn equilibrium_heat_balance() {
    let m = common::model();
    let s = analysis::solve_equilibrium(&m, 1.1, 0.0).unwrap();
    let f = m.rate(&s.x_star, s.u_star).unwrap();
    assert!(f[idx::XH1].abs() < 1e-10 && f[idx::W].abs() < 1e-10 && f[idx::XH3].abs() < 1e-10);
    let x = s.x_star;
    let h = m.heat_flows(&x.xh(), &x.xg());
    let c = &m.derived;
    assert!((h.qa1 - c.ql[0] - h.q12).abs() < 1e-9);
    assert!((h.qa2 - c.ql[1] + h.q12).abs() < 1e-9);
}

#[test]
fn tracking_conditions_solvable_up_to_the_boundary() {
    let m = common::model();
    for y2 in linspace(0.1, 4.8, 48) {
        let s = analysis::solve_tracking(&m, 1.0, y2, 0.01).unwrap();
        assert!(s.in_region && s.residual < 1e-10, "Y2 = {y2}");
    }
}

#[test]
fn tracking_conditions_fail_far_beyond_the_boundary() {
    let m = common::model();
    assert!(analysis::solve_tracking(&m, 1.0, 9.0, 0.01).is_err());
}

#[test]
fn balanced_heat_reference_gives_zero_sigma2() {
    let m = common::model();
    let eq = analysis::solve_equilibrium(&m, 1.1, 0.0).unwrap();
    let y2 = m.outputs(&eq.x_star).y2;
    for k in [0.001, 0.01, 1.0] {
        let s = analysis::solve_tracking(&m, 1.1, y2, k).unwrap();
        assert!(s.sigma2_ref.abs() < 1e-8, "K = {k}: {}", s.sigma2_ref);
        for (i, j) in ETA_HAT.iter().enumerate() {
            assert!((s.eta_hat_ref[i] - eq.x_star.0[*j]).abs() < 1e-8);
        }
    }
}

#[test]
fn invariant_tracking_trajectory() {
    let m = common::model();
    let k = 0.02;
    let s = analysis::solve_tracking(&m, 1.2, 1.69, k).unwrap();
    let cfg = ControllerConfig::with_default_poles(1.2, 1.69, k);
    let integ = IntegratorConfig {
        rtol: 1e-11,
        atol: 1e-13,
        ..IntegratorConfig::default()
    }
    .with_horizon(20.0, 0.5);
    let run = controller::simulate_closed_loop(&m, &s.x_ref, [0.0, s.sigma2_ref], &cfg, &integ).unwrap();
    assert!(run.is_complete());
    let rate = k * s.sigma2_ref;
    for (t, x) in run.times.iter().zip(&run.states) {
        let z = phi_hat(&m, x).unwrap();
        for (i, v) in z.eta_hat.iter().enumerate() {
            assert!((v - s.eta_hat_ref[i]).abs() < 1e-7, "t = {t}");
        }
        assert!((x.0[idx::XH3] - rate * t).abs() < 1e-6, "t = {t}");
    }
    for (t, sig) in run.times.iter().zip(&run.sigma) {
        assert!((sig[0] - rate * t).abs() < 1e-6);
        assert!((sig[1] - s.sigma2_ref).abs() < 1e-7);
    }
}
