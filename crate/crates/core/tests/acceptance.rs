//! One line per primary acceptance criterion, checked at its stated
//! tolerance. Criteria listed in `KNOWN_FAILURES` are expected to print
//! FAIL; any other failure makes the target exit nonzero.

mod common;

use std::time::Instant;

use rand::Rng;

use shear_mhd::harness::{
    linear_sweep, scaling_by_regime, threshold_sweep, Axis, Block, InvariantDefects, LinearSweepConfig,
    MultiplierCheckConfig, SolverTemplate, SweepConfig,
};
use shear_mhd::linear::{integrate_mode, ModeSystem};
use shear_mhd::multipliers::raw;
use shear_mhd::nonlinear::{compute_nonlinear, InitialProfile, Solver, SolverConfig, Target};
use shear_mhd::propagator::{transfer_matrix_magnus, Controls, Variant};
use shear_mhd::spectral::{biot_savart, gamma_symbol, to_symmetric, Grid, MhdState};
use shear_mhd::{PhysicalParams, Regime, C64};

/// Criteria that do not hold at the scales reachable here; each has a
/// ledger entry explaining why.
const KNOWN_FAILURES: &[u32] = &[2, 5, 9];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

fn check(id: u32, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let o = Outcome {
        id,
        name,
        pass,
        detail,
        secs: start.elapsed().as_secs_f64(),
    };
    println!(
        "[{}] {:>2}. {}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail,
        o.secs
    );
    o
}

fn random_params(r: &mut impl Rng) -> PhysicalParams {
    let nu = 10f64.powf(r.gen_range(-4.0..0.0));
    let mu = 10f64.powf(r.gen_range(-4.0..0.0));
    let beta = r.gen_range(0.6..3.0);
    let mut p = PhysicalParams::new(nu, mu, beta);
    p.c2 = 3000.0 * r.gen_range(1.001..2.0);
    p.c1 = 1000.0 * p.c2 * r.gen_range(1.001..2.0);
    p.c3 = p.c1 / (beta - 0.5) * r.gen_range(1.001..2.0);
    p.c4 = r.gen_range(0.1..20.0);
    p
}

fn multiplier_oracle() -> (bool, String) {
    let start = Instant::now();
    let mut r = common::rng(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = random_params(&mut r);
        let k = r.gen_range(1..=64) as f64;
        let eta = k * r.gen_range(-100.0..100.0);
        let t = 10f64.powf(r.gen_range(-2.0..3.0));
        let closed = [
            raw::log_m1(k, eta, t, &p),
            raw::log_m2(k, eta, t, &p),
            raw::log_m3(k, eta, t, &p),
            raw::log_m4(k, eta, t, &p),
        ];
        for (i, c) in closed.iter().enumerate() {
            let q = common::quadrature_log_m(i + 1, k, eta, t, &p);
            worst = worst.max((c - q).abs() / q.abs().max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst <= 1e-9 && secs < 10.0,
        format!("max relative log error {worst:.2e} <= 1e-9 on 1000 samples, {secs:.1} s < 10 s"),
    )
}

fn hard_inequalities() -> (bool, String) {
    let mut lines = Vec::new();
    let mut pass = true;
    for (nu, mu) in [(1e-7, 1e-2), (1e-2, 1e-2), (0.3, 3e-3)] {
        let mut cfg = MultiplierCheckConfig::new(PhysicalParams::new(nu, mu, 1.0));
        cfg.lattice_size = 100_000;
        let rep = cfg.run().expect("lattice check");
        let m2 = rep.lower_bound_m2.violations;
        let m6 = rep.lower_bound_m6.violations;
        pass &= m2 == 0 && m6 == 0;
        let mut s = format!("{}: M2 violations {m2}", rep.regime);
        if rep.regime == Regime::NuLeMu3 {
            s += &format!(
                ", M6 violations {m6} (worst ratio {:.3}, demoted form holds: {})",
                rep.lower_bound_m6.worst_ratio, rep.lower_bound_m6_demoted
            );
        }
        lines.push(s);
    }
    (pass, format!("1e5-point lattices, tol 1e-10; {}", lines.join("; ")))
}

fn regime_points() -> Vec<[f64; 2]> {
    vec![
        [3e-3, 0.3],
        [3e-3, 0.2],
        [5e-3, 0.3],
        [1e-2, 1e-2],
        [3e-2, 3e-2],
        [1e-1, 1e-1],
        [0.3, 3e-3],
        [0.2, 3e-3],
        [0.3, 5e-3],
    ]
}

fn monotonicity() -> (bool, String) {
    let start = Instant::now();
    let cfg = LinearSweepConfig {
        points: vec![[3e-3, 0.3], [1e-2, 1e-2], [0.3, 3e-3]],
        beta: 1.0,
        modes: None,
        horizon: 20.0,
        curve_points: 20,
        rtol: 1e-10,
        monotonicity_tol: 1e-8,
    };
    let rep = linear_sweep(&cfg).expect("sweep");
    let worst = rep.points.iter().map(|p| p.worst_residual).fold(f64::NEG_INFINITY, f64::max);
    let regimes: Vec<String> = rep.points.iter().map(|p| p.regime.to_string()).collect();
    let secs = start.elapsed().as_secs_f64();
    (
        worst <= 1e-8 && secs < 120.0,
        format!("max residual/E(0) {worst:.2e} <= 1e-8 over {} ({secs:.0} s < 120 s)", regimes.join(", ")),
    )
}

fn heat_kernel() -> (bool, String) {
    let ctl = Controls::default();
    let mut worst = 0.0f64;
    for (nu, mu) in [(3e-3, 0.3), (1e-2, 1e-2), (0.3, 3e-3)] {
        let p = PhysicalParams::new(nu, mu, 1.0);
        for eta in [0.25, 1.0, 4.0] {
            for t in [0.1, 5.0, 40.0] {
                let sys = ModeSystem::new(0.0, eta, p.clone(), Variant::OmegaJ);
                let want = (-nu * eta * eta * t as f64).exp();
                let traj = integrate_mode(&sys, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)], 0.0, t, &ctl).unwrap();
                let got = traj.last().unwrap().1.value()[0].norm();
                worst = worst.max((got / want - 1.0).abs());
                let phi = transfer_matrix_magnus(&sys.coefficients(), 0.0, t, &ctl).unwrap().to_matrix();
                let want_j = (-mu * eta * eta * t).exp();
                worst = worst.max((phi[1][1].norm() / want_j - 1.0).abs());
            }
        }
    }
    (worst <= 1e-10, format!("max relative error {worst:.2e} <= 1e-10"))
}

fn amplification() -> (bool, String) {
    let cfg = LinearSweepConfig {
        points: regime_points(),
        beta: 1.0,
        modes: None,
        horizon: 20.0,
        curve_points: 20,
        rtol: 1e-10,
        monotonicity_tol: 1e-8,
    };
    let rep = linear_sweep(&cfg).expect("sweep");
    let mut pass = true;
    let mut parts = Vec::new();
    for s in &rep.spreads {
        let ok = s.max_constant <= 10.0 && s.spread <= 0.2;
        pass &= ok;
        parts.push(format!(
            "{} C in [{:.3}, {:.3}] spread {:.0}%{}",
            s.regime,
            s.min_constant,
            s.max_constant,
            100.0 * s.spread,
            if ok { "" } else { " (out of tolerance)" }
        ));
    }
    (pass, format!("C <= 10 and spread <= 20%: {}", parts.join("; ")))
}

fn nonlinear_oracle() -> (bool, String) {
    let g = Grid::new(6, 32, 4.0 * std::f64::consts::PI, 50.0).unwrap();
    let mut r = common::rng(99);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let t = 0.21 * trial as f64;
        let s = common::sparse_state(g, 1 + trial % 5, 2, 5, &mut r, t);
        let (a, b) = compute_nonlinear(&s, t, 2.0 / 3.0).unwrap();
        let (oa, ob) = common::brute_force_nonlinear(&s, t, 4, 10);
        let input = common::max_abs(&s.omega).max(common::max_abs(&s.j));
        let scale = common::max_abs(&oa).max(common::max_abs(&ob)).max(input * input / g.len() as f64);
        worst = worst.max(common::max_diff(&a, &oa).max(common::max_diff(&b, &ob)) / scale);
    }
    let mut c = small_config(50.0);
    c.dt_initial = 0.01;
    c.t_final = 10.0;
    c.output_stride = 100;
    let mut solver = Solver::new(c).unwrap();
    let mut inv = InvariantDefects::default();
    let out = solver
        .run_with(|s, _| {
            inv = inv.max(InvariantDefects::of(&s.state, s.t));
            Ok(())
        })
        .unwrap();
    let pass = worst <= 1e-12 && inv.conjugate <= 1e-12 && inv.divergence <= 1e-12 && out.steps >= 1000;
    (
        pass,
        format!(
            "convolution error {worst:.2e} <= 1e-12; over {} steps conjugate {:.1e}, divergence {:.1e} <= 1e-12",
            out.steps, inv.conjugate, inv.divergence
        ),
    )
}

fn small_config(eps: f64) -> SolverConfig {
    let g = Grid::new(4, 32, 4.0 * std::f64::consts::PI, 50.0).unwrap();
    let mut c = SolverConfig::new(
        g,
        PhysicalParams::new(0.05, 0.05, 1.0),
        eps,
        InitialProfile::Random {
            k_band: 2,
            m_band: 4,
            target: Target::Both,
        },
    );
    c.enforce_budget = false;
    c.seed = 9;
    c
}

fn linearization() -> (bool, String) {
    let dev = |eps: f64| {
        let mut c = small_config(eps);
        c.dt_initial = 0.05;
        c.t_final = 0.5;
        c.cfl = 1e9;
        let mut nl = Solver::new(c.clone()).unwrap();
        c.nonlinear = false;
        let mut lin = Solver::new(c).unwrap();
        nl.run().unwrap();
        lin.run().unwrap();
        common::max_diff(&nl.state.omega, &lin.state.omega).max(common::max_diff(&nl.state.j, &lin.state.j))
    };
    let pts: Vec<(f64, f64)> = (0..6).map(|i| 1e-2 * 2f64.powi(i)).map(|e| (e.ln(), dev(e).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let order = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    (order >= 1.9, format!("observed order {order:.3} >= 1.9"))
}

fn biot_savart_bounds() -> (bool, String) {
    let g = Grid::new(8, 64, 4.0 * std::f64::consts::PI, 10.0).unwrap();
    let mut r = common::rng(7);
    let mut worst = f64::INFINITY;
    for trial in 0..100 {
        let t = 0.29 * trial as f64;
        let mut s = MhdState::zeros(g, t);
        s.omega = common::random_field(g, 8, 31, &mut r, t);
        let (u1, u2) = biot_savart(&s.omega, t);
        let (z, _) = to_symmetric(&s, t);
        for (i, k, eta) in g.modes() {
            if k == 0 {
                continue;
            }
            let k = k as f64;
            let zn = z.coeffs[i].norm();
            worst = worst
                .min(zn / k.abs() - u1.coeffs[i].norm())
                .min(gamma_symbol(k, eta, t) * zn / k.abs() - u2.coeffs[i].norm());
        }
    }
    (worst >= -1e-14, format!("minimum defect {worst:.2e} >= -1e-14"))
}

fn threshold() -> (bool, String) {
    let cfg = SweepConfig {
        blocks: vec![Block {
            nu: Axis::Log {
                min: 3e-3,
                max: 3e-1,
                count: 3,
            },
            mu: Axis::Log {
                min: 3e-3,
                max: 3e-1,
                count: 3,
            },
        }],
        beta: 1.0,
        regimes: vec![],
        eps_lo: 1e2,
        eps_hi: 1e3,
        eps_rtol: 0.1,
        seeds: vec![0],
        tail_fraction: 0.5,
        horizon: 20.0,
        robustness: true,
        solver: SolverTemplate {
            grid: Grid::new(8, 64, 8.0 * std::f64::consts::PI, 100.0).unwrap(),
            dt_initial: 0.1,
            dealias_fraction: 2.0 / 3.0,
            output_stride: 10,
            initial_profile: InitialProfile::Random {
                k_band: 2,
                m_band: 4,
                target: Target::Both,
            },
            cfl: 0.5,
            enforce_budget: false,
            rtol: 1e-10,
            n: 4,
        },
    };
    let dir = tempfile::tempdir().unwrap();
    let res = threshold_sweep(&cfg, dir.path(), false, |_| {}).expect("sweep");
    let produced = res.points.iter().filter(|p| p.epsilon_star.is_finite()).count();
    let robust = res
        .points
        .iter()
        .filter(|p| p.doubled.is_some_and(|d| d.1 < 0.25))
        .count();
    let saturated = res.points.iter().filter(|p| p.saturated).count();
    let scaling = scaling_by_regime(&res.points);
    let fitted: Vec<String> = scaling
        .iter()
        .map(|s| match &s.fit {
            Some(f) => format!(
                "{} gamma=({:.2} [{:.2},{:.2}], {:.2} [{:.2},{:.2}])",
                s.regime, f.gamma_nu, f.ci_nu.0, f.ci_nu.1, f.gamma_mu, f.ci_mu.0, f.ci_mu.1
            ),
            None => format!("{} no fit ({} of {} saturated)", s.regime, s.saturated, s.saturated + s.used),
        })
        .collect();
    let n = res.points.len();
    let pass = produced == n && robust == n && scaling.iter().all(|s| s.fit.is_some());
    (
        pass,
        format!(
            "reduced 8x64 grid, {n} points: eps* for {produced}/{n}, robust under doubling {robust}/{n}, \
             {saturated} saturated; {}",
            fitted.join("; ")
        ),
    )
}

fn main() {
    println!("acceptance criteria");
    let outcomes = vec![
        check(1, "multiplier closed forms vs quadrature", multiplier_oracle),
        check(2, "hard multiplier inequalities", hard_inequalities),
        check(3, "per-mode energy monotonicity", monotonicity),
        check(4, "heat-kernel exactness", heat_kernel),
        check(5, "transient amplification envelopes", amplification),
        check(6, "nonlinear term oracle and invariants", nonlinear_oracle),
        check(7, "linearization consistency", linearization),
        check(8, "Biot-Savart exact inequalities", biot_savart_bounds),
        check(9, "threshold sweep deliverable", threshold),
    ];
    let unexpected: Vec<u32> = outcomes
        .iter()
        .filter(|o| !o.pass && !KNOWN_FAILURES.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let recovered: Vec<u32> = outcomes
        .iter()
        .filter(|o| o.pass && KNOWN_FAILURES.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria pass; known failures {KNOWN_FAILURES:?}", outcomes.len());
    if !recovered.is_empty() {
        println!("known failures now passing: {recovered:?}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
