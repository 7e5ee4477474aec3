mod common;

use std::time::{Duration, Instant};

use twosite::analysis::{self, ScanKind};
use twosite::controller::{self, ClosedLoopRun, ControllerConfig};
use twosite::jets::oracle::fd_oracle_series;
use twosite::jets::lie_f_series;
use twosite::linalg;
use twosite::model::idx;
use twosite::normal_form::linspace;
use twosite::sim::IntegratorConfig;
use twosite::zero_dynamics::{self, ZeroDynamics};
use twosite::{FullState, OutputKind};

fn report(n: usize, pass: bool, detail: &str, started: Instant, limit: Option<Duration>) {
    let elapsed = started.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let verdict = if pass && in_time { "PASS" } else { "FAIL" };
    let budget = limit.map_or(String::new(), |l| format!(", limit {:.0}s", l.as_secs_f64()));
    println!(
        "criterion {n}: {verdict} | {detail} | {:.2}s{budget}",
        elapsed.as_secs_f64()
    );
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(in_time, "criterion {n} exceeded its runtime limit");
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

#[test]
fn criterion_1_relative_degrees() {
    let t0 = Instant::now();
    let m = common::model();
    let mut rng = common::rng(1);
    let kinds = [OutputKind::ElectricPower, OutputKind::HeatFlow, OutputKind::AveragePressure];
    let mut max_zero = 0.0f64;
    let mut min_e = f64::INFINITY;
    let mut min_hat = f64::INFINITY;
    for _ in 0..200 {
        let x = common::random_state(&m, &mut rng);
        let mut e4 = 0.0f64;
        let mut hat2 = 0.0f64;
        for which in [1, 2] {
            let d = m.lie_chains_directional(&kinds, &x, &m.g(which), 4).unwrap();
            for j in &d[0][..=3] {
                max_zero = max_zero.max(j.d.abs());
            }
            for j in &d[1][..=2] {
                max_zero = max_zero.max(j.d.abs());
            }
            for j in &d[2][..=1] {
                max_zero = max_zero.max(j.d.abs());
            }
            e4 = e4.max(d[0][4].d.abs());
            hat2 = hat2.max(d[2][2].d.abs());
        }
        min_e = min_e.min(e4);
        min_hat = min_hat.min(hat2);
    }
    let pass = max_zero < 1e-8 && min_e > 1e-4 && min_hat > 1e-4;
    report(
        1,
        pass,
        &format!(
            "200 states: max vanishing term {max_zero:.1e} (< 1e-8), min |L_g L_f^4 h_e| {min_e:.2e}, min |L_g L_f^2 x_h3| {min_hat:.2e} (> 1e-4)"
        ),
        t0,
        secs(10),
    );
}

#[test]
fn criterion_2_jets_against_flow_oracle() {
    let t0 = Instant::now();
    let m = common::model();
    let mut rng = common::rng(2);
    let kinds = [OutputKind::ElectricPower, OutputKind::HeatFlow, OutputKind::AveragePressure];
    let hs: Vec<_> = kinds.iter().map(|&k| m.output(k)).collect();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = common::random_state(&m, &mut rng);
        let jet = lie_f_series(&m, &hs, &x.0, 4).unwrap();
        let fd = fd_oracle_series(&m, &hs, &x.0, 4).unwrap();
        for (a, b) in jet.iter().zip(&fd) {
            for k in 0..=4 {
                worst = worst.max((a[k] - b[k]).abs() / a[k].abs().max(1.0));
            }
        }
    }
    report(
        2,
        worst < 1e-4,
        &format!("50 states, orders 0..4, 3 outputs: worst relative error {worst:.2e} (< 1e-4)"),
        t0,
        secs(30),
    );
}

fn stabilization_cfg(y1: f64) -> ControllerConfig {
    ControllerConfig::with_default_poles(y1, 0.0, 0.0)
}

#[test]
fn criterion_3_translation_invariances() {
    let t0 = Instant::now();
    let m = common::model();
    let zd = ZeroDynamics::new(&m, 1.0, 1.69).unwrap();
    let base = zd.anchor_eta();
    let mut q_diff = 0.0f64;
    for (d1, d2) in [(0.0, 0.0), (0.05, -0.1), (-0.05, 0.15), (0.03, 0.2)] {
        let eta = [base[0] + d1, base[1] + d2, 0.01, base[3]];
        let (q0, x0) = zd.q_eval(&eta, None).unwrap();
        for a in [-1.0, -0.5, 0.5, 1.0] {
            let shifted = [eta[0], eta[1], eta[2], eta[3] + a];
            let (q1, _) = zd.q_eval(&shifted, Some(&x0)).unwrap();
            for i in 0..4 {
                q_diff = q_diff.max((q1[i] - q0[i]).abs());
            }
        }
    }

    let eq = analysis::solve_equilibrium(&m, 1.0, 0.0).unwrap();
    let cfg = ControllerConfig::with_default_poles(1.2, 1.69, 0.05);
    let integ = IntegratorConfig {
        rtol: 1e-10,
        atol: 1e-12,
        ..IntegratorConfig::default()
    }
    .with_horizon(20.0, 0.1);
    let a = controller::simulate_closed_loop(&m, &eq.x_star, [0.0, 0.0], &cfg, &integ).unwrap();
    let mut x_shift = eq.x_star;
    x_shift.0[idx::XH3] += 0.75;
    let b = controller::simulate_closed_loop(&m, &x_shift, [0.75, 0.0], &cfg, &integ).unwrap();
    let mut traj_diff = 0.0f64;
    for i in 0..a.times.len() {
        for j in 0..13 {
            let d = if j == idx::XH3 {
                (b.states[i].0[j] - 0.75) - a.states[i].0[j]
            } else {
                b.states[i].0[j] - a.states[i].0[j]
            };
            traj_diff = traj_diff.max(d.abs());
        }
        traj_diff = traj_diff.max((b.sigma[i][1] - a.sigma[i][1]).abs());
        traj_diff = traj_diff.max((b.sigma[i][0] - 0.75 - a.sigma[i][0]).abs());
    }
    let pass = a.is_complete() && b.is_complete() && q_diff < 1e-7 && traj_diff < 1e-7;
    report(
        3,
        pass,
        &format!("eta4 shifts: max |dq| {q_diff:.1e}; sigma1 shift: max trajectory difference {traj_diff:.1e} (< 1e-7)"),
        t0,
        secs(60),
    );
}

/// Initial conditions of the zero-dynamics scenarios: `η2 ∈ {0.8, 1.0, 1.2}`
/// crossed with five `(η1, η4)` pairs, `η3 = 0`.
fn grid_initial_conditions() -> Vec<[f64; 4]> {
    let pairs = [(0.55, 0.0), (0.65, 0.5), (0.75, -0.5), (0.6, 1.0), (0.7, -1.0)];
    let mut out = Vec::new();
    for e2 in [0.8, 1.0, 1.2] {
        for (e1, e4) in pairs {
            out.push([e1, e2, 0.0, e4]);
        }
    }
    out
}

#[test]
fn criterion_4_zero_dynamics() {
    let t0 = Instant::now();
    let m = common::model();
    let integ = IntegratorConfig::default().with_horizon(150.0, 0.1);
    let mut details = Vec::new();
    let mut pass = true;
    for (y1, want_drift) in [(1.0, false), (1.2, true)] {
        let zd = ZeroDynamics::new(&m, y1, 1.69).unwrap();
        let mut worst_var = 0.0f64;
        let mut worst_res = 0.0f64;
        let mut min_rate = f64::INFINITY;
        let mut all = true;
        for eta0 in grid_initial_conditions() {
            let run = zd.simulate_output_zeroing(&eta0, 5.0, &integ).unwrap();
            let s = run.summary(0.2);
            all &= s.converged;
            worst_var = worst_var.max(s.eta_variation.iter().cloned().fold(0.0, f64::max));
            worst_res = worst_res.max(s.final_residual);
            min_rate = min_rate.min(s.eta4_drift_rate);
        }
        let ok = all && (!want_drift || min_rate > 0.0);
        pass &= ok;
        details.push(format!(
            "Y1={y1}: 15 runs converged={all}, max variation {worst_var:.1e}, max |F1..F3| {worst_res:.1e}, min eta4 rate {min_rate:.2e}"
        ));
    }
    report(4, pass, &details.join("; "), t0, secs(120));
}

#[test]
fn criterion_5_minimum_phase_scans() {
    let t0 = Instant::now();
    let m = common::model();
    let q = analysis::scan_references(&m, ScanKind::Q, &linspace(0.5, 1.0, 51), 0.0, 0.0);
    let crossing = q
        .crossings()
        .into_iter()
        .min_by(|a, b| (a - 0.67).abs().total_cmp(&(b - 0.67).abs()));
    let qn = zero_dynamics::matrix_q(&m, 1.0, 0.0).unwrap();
    let real = qn
        .eigenvalues
        .iter()
        .filter(|z| z.im.abs() < 1e-9 && (-13.0..=-7.0).contains(&z.re))
        .map(|z| z.re)
        .next();
    let qt = analysis::scan_references(&m, ScanKind::QTilde, &linspace(0.05, 5.5, 110), 1.0, 0.0);
    let boundary = qt.stable_up_to().map(|lo| {
        analysis::refine_boundary(&m, ScanKind::QTilde, lo, lo + 0.05, 1.0, 0.0, 1e-3)
    });
    let c_ok = crossing.is_some_and(|c| (c - 0.67).abs() <= 0.05);
    let b_ok = boundary.is_some_and(|b| (b - 4.85).abs() <= 0.15);
    report(
        5,
        c_ok && real.is_some() && b_ok,
        &format!(
            "Q crossing at Y1 = {} (0.67 +- 0.05); real eigenvalue at Y1 = 1.0: {}; Q~ stable up to Y2 = {} (4.85 +- 0.15)",
            crossing.map_or("none".into(), |c| format!("{c:.4}")),
            real.map_or("none".into(), |r| format!("{r:.3}")),
            boundary.map_or("none".into(), |b| format!("{b:.4}")),
        ),
        t0,
        secs(300),
    );
}

fn settle_time(run: &ClosedLoopRun, target: f64, tol: f64) -> Option<f64> {
    let mut last_out = None;
    for (t, y) in run.times.iter().zip(&run.outputs) {
        if (y.y1 - target).abs() > tol * target.abs() {
            last_out = Some(*t);
        }
    }
    match last_out {
        None => Some(0.0),
        Some(t) if t < *run.times.last().unwrap() => Some(t),
        _ => None,
    }
}

#[test]
fn criterion_6_stabilization() {
    let t0 = Instant::now();
    let m = common::model();
    let start = analysis::solve_equilibrium(&m, 1.0, 0.0).unwrap();
    let integ = IntegratorConfig::default().with_horizon(160.0, 0.05);
    let mut pass = true;
    let mut details = Vec::new();
    for target in [1.2, 0.8] {
        let run = controller::simulate_closed_loop(&m, &start.x_star, [0.0, 0.0], &stabilization_cfg(target), &integ)
            .unwrap();
        let goal = analysis::solve_equilibrium(&m, target, 0.0).unwrap();
        let settle = settle_time(&run, target, 0.01);
        let dist = run.states.last().unwrap().max_abs_diff(&goal.x_star);
        let ok = run.is_complete()
            && settle.is_some_and(|t| t <= 20.0)
            && run.saturation.within_nominal
            && dist < 1e-4;
        pass &= ok;
        details.push(format!(
            "Y1ref={target}: settled at t = {} s, u in [{:.3}, {:.3}], final state distance {dist:.1e}",
            settle.map_or("never".into(), |t| format!("{t:.2}")),
            run.saturation.u_min[0].min(run.saturation.u_min[1]),
            run.saturation.u_max[0].max(run.saturation.u_max[1]),
        ));
    }
    report(6, pass, &details.join("; "), t0, secs(60));
}

fn slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let den: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    num / den
}

/// Gain used for the tracking scenario.
const TRACKING_K: f64 = 0.05;

#[test]
fn criterion_7_tracking() {
    let t0 = Instant::now();
    let m = common::model();
    let start = analysis::solve_equilibrium(&m, 1.0, 0.0).unwrap();
    let cfg = ControllerConfig::with_default_poles(1.2, 1.69, TRACKING_K);
    let integ = IntegratorConfig::default().with_horizon(800.0, 0.5);
    let run = controller::simulate_closed_loop(&m, &start.x_star, [0.0, 0.0], &cfg, &integ).unwrap();
    let y = run.outputs.last().unwrap();
    let e1 = (y.y1 - 1.2).abs() / 1.2;
    let e2 = (y.y2 - 1.69).abs() / 1.69;
    let sol = analysis::solve_tracking(&m, 1.2, 1.69, TRACKING_K).unwrap();
    let n = run.times.len();
    let from = n - n / 5;
    let rate = slope(&run.times[from..], &run.yhat2_ref()[from..]);
    let want = TRACKING_K * sol.sigma2_ref;
    let rate_err = (rate - want).abs() / want.abs();
    let pass = run.is_complete() && e1 < 0.01 && e2 < 0.01 && rate_err < 0.05;
    report(
        7,
        pass,
        &format!(
            "K = {TRACKING_K}: |y1 - 1.2|/1.2 = {e1:.1e}, |y2 - 1.69|/1.69 = {e2:.1e}, yhat2ref rate {rate:.5} vs K*sigma2ref {want:.5} (rel {rate_err:.1e})"
        ),
        t0,
        secs(120),
    );
}

fn decay_rate(t: &[f64], norms: &[f64]) -> f64 {
    let logs: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    -slope(t, &logs)
}

#[test]
fn criterion_8_closed_loop_poles() {
    let t0 = Instant::now();
    let m = common::model();
    let start = analysis::solve_equilibrium(&m, 1.0, 0.0).unwrap();
    let integ = IntegratorConfig {
        rtol: 1e-11,
        atol: 1e-13,
        ..IntegratorConfig::default()
    }
    .with_horizon(60.0, 0.05);
    let run = controller::simulate_closed_loop(&m, &start.x_star, [0.05, 0.0], &stabilization_cfg(1.05), &integ)
        .unwrap();
    let window = |lo: f64, hi: f64| -> Vec<usize> {
        (0..run.times.len())
            .filter(|&i| run.times[i] >= lo && run.times[i] <= hi)
            .collect()
    };
    let we = window(4.0, 10.0);
    let te: Vec<f64> = we.iter().map(|&i| run.times[i]).collect();
    let ne: Vec<f64> = we.iter().map(|&i| linalg::inf_norm(&run.xi_tilde_e[i])).collect();
    let wh = window(30.0, 60.0);
    let th: Vec<f64> = wh.iter().map(|&i| run.times[i]).collect();
    let nh: Vec<f64> = wh.iter().map(|&i| linalg::inf_norm(&run.xi_tilde_h[i])).collect();
    let re = decay_rate(&te, &ne);
    let rh = decay_rate(&th, &nh);
    let within = |r: f64, p: f64| r >= p / 2.0 && r <= 2.0 * p;
    report(
        8,
        run.is_complete() && within(re, 2.5) && within(rh, 0.25),
        &format!("electric error decay rate {re:.3} (2.5 within x2), heat error decay rate {rh:.3} (0.25 within x2)"),
        t0,
        None,
    );
}

#[test]
fn criterion_9_equilibrium_solver() {
    let t0 = Instant::now();
    let m = common::model();
    let mut worst_res = 0.0f64;
    let mut all_inside = true;
    let mut worst_shift = 0.0f64;
    for y1 in linspace(0.7, 1.3, 13) {
        let a = analysis::solve_equilibrium(&m, y1, 0.0).unwrap();
        let r = m.rate(&a.x_star, a.u_star).unwrap();
        worst_res = worst_res.max(linalg::inf_norm(&r)).max(a.residual);
        all_inside &= a.in_region;
        for shift in [-1.0, 0.5, 2.0] {
            let b = analysis::solve_equilibrium(&m, y1, shift).unwrap();
            let mut moved: FullState = a.x_star;
            moved.0[idx::XH3] += shift;
            worst_shift = worst_shift
                .max(moved.max_abs_diff(&b.x_star))
                .max((a.u_star.u1 - b.u_star.u1).abs())
                .max((a.u_star.u2 - b.u_star.u2).abs());
        }
    }
    report(
        9,
        worst_res < 1e-10 && worst_shift < 1e-10 && all_inside,
        &format!(
            "Y1 in [0.7, 1.3]: max residual {worst_res:.1e} (< 1e-10), translation mismatch {worst_shift:.1e}, all inside D_hat: {all_inside}"
        ),
        t0,
        None,
    );
}
