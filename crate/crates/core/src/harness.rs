//! Experiment drivers: multiplier lattices, single-mode runs, envelope
//! sweeps, threshold bisection, decay-rate fits and scaling regression.
//!
//! A parameter point is called *stable* at amplitude `ε` when the run
//! completes, no bootstrap inequality is violated and the nonzero-mode
//! energy at `t_final` is below `tail_fraction` times its running maximum.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::diagnostics::{bootstrap_monitor, EnergyRecord};
use crate::error::{Error, Result};
use crate::linear::{
    amplification_envelope, default_horizon, default_mode_sample, integrate_mode, regime_variant, verify_monotonicity,
    EnvelopeReport, ModeSystem, MonotonicityReport,
};
use crate::multipliers::LatticePoint;
use crate::nonlinear::{InitialProfile, RunStatus, Solver, SolverConfig};
use crate::output::{read_json, write_json};
use crate::params::{PhysicalParams, Regime};
use crate::propagator::{Controls, Variant};
use crate::spectral::Grid;
use crate::C64;

/// `n` lattice points with integer `1 ≤ k ≤ k_max`, `|η/k| ≤ slope_max`
/// and `0 ≤ t ≤ t_max`; slopes and times are spread over all scales.
pub fn sample_lattice(n: usize, seed: u64, k_max: u32, slope_max: f64, t_max: f64) -> Vec<LatticePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smax = slope_max.asinh();
    let tmax = t_max.ln_1p();
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=k_max) as f64;
            let s = rng.gen_range(-smax..=smax).sinh();
            let t = rng.gen_range(0.0..=tmax).exp_m1();
            LatticePoint { t, k, eta: k * s }
        })
        .collect()
}

/// Values of a log-spaced or explicit parameter axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    List(Vec<f64>),
    Log { min: f64, max: f64, count: usize },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Axis::List(ref v) => v.clone(),
            Axis::Log { min, max, count } => match count {
                0 => vec![],
                1 => vec![min],
                _ => (0..count)
                    .map(|i| (min.ln() + (max / min).ln() * i as f64 / (count - 1) as f64).exp())
                    .collect(),
            },
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if let Axis::Log { min, max, count } = *self {
            if !(min > 0.0 && max >= min && count > 0) {
                return Err(Error::validation(field, "needs 0 < min <= max and count >= 1"));
            }
        }
        let v = self.values();
        if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::validation(field, "values must be positive and finite"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- linear

/// Single-mode linear run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRunConfig {
    pub params: PhysicalParams,
    pub k: f64,
    pub eta: f64,
    /// Defaults to the critical time plus `20 λ^{-1/3}`.
    #[serde(default)]
    pub t_final: Option<f64>,
    /// Defaults to the variant of the parameter regime.
    #[serde(default)]
    pub variant: Option<Variant>,
    /// Initial `(re, im)` of both components.
    #[serde(default = "unit_first")]
    pub initial: [[f64; 2]; 2],
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

fn unit_first() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 0.0]]
}
fn default_rtol() -> f64 {
    1e-10
}

impl LinearRunConfig {
    pub fn new(params: PhysicalParams, k: f64, eta: f64) -> Self {
        LinearRunConfig {
            params,
            k,
            eta,
            t_final: None,
            variant: None,
            initial: unit_first(),
            rtol: default_rtol(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate("params")?;
        if !self.k.is_finite() || !self.eta.is_finite() {
            return Err(Error::validation("k", "mode must be finite"));
        }
        if let Some(t) = self.t_final {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::validation("t_final", "must be positive"));
            }
        }
        if self.initial.iter().flatten().all(|v| *v == 0.0) {
            return Err(Error::validation("initial", "must be nonzero"));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::validation("rtol", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.t_final
            .unwrap_or_else(|| default_horizon(self.k.abs().max(1.0), self.eta * self.k.signum(), &self.params))
    }
}

/// One accepted step of a linear run. Components are in the variables of
/// the variant; the energy columns are in log form because the weights
/// underflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub t: f64,
    pub re_0: f64,
    pub im_0: f64,
    pub re_1: f64,
    pub im_1: f64,
    pub ln_norm: f64,
    pub ln_energy: f64,
    /// `D_k / E_k`.
    pub dissipation_rate: f64,
    /// `CK_k / E_k`.
    pub ck_rate: f64,
    /// `(dE/dt + (D + CK)/(100|β|)) / E`.
    pub residual_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRunSummary {
    pub regime: Regime,
    pub variant: Variant,
    pub k: f64,
    pub eta: f64,
    pub t_final: f64,
    pub steps: usize,
    pub monotonicity: MonotonicityReport,
}

pub fn linear_run(cfg: &LinearRunConfig) -> Result<(Vec<LinearRow>, LinearRunSummary)> {
    cfg.validate()?;
    let variant = cfg.variant.unwrap_or_else(|| regime_variant(cfg.params.regime()));
    let sys = ModeSystem::new(cfg.k, cfg.eta, cfg.params.clone(), variant);
    let y0 = cfg.initial.map(|[a, b]| C64::new(a, b));
    let t1 = cfg.horizon();
    let ctl = Controls {
        rtol: cfg.rtol,
        ..Controls::default()
    };
    let traj = integrate_mode(&sys, y0, 0.0, t1, &ctl)?;
    let rows = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, y)| {
            let v = y.value();
            let en = sys.energy(t, y);
            LinearRow {
                t,
                re_0: v[0].re,
                im_0: v[0].im,
                re_1: v[1].re,
                im_1: v[1].im,
                ln_norm: y.log_norm,
                ln_energy: en.log_energy(),
                dissipation_rate: en.d / en.e,
                ck_rate: en.ck / en.e,
                residual_rate: sys.residual_density(t, y) / en.e,
            }
        })
        .collect();
    let summary = LinearRunSummary {
        regime: cfg.params.regime(),
        variant,
        k: cfg.k,
        eta: cfg.eta,
        t_final: t1,
        steps: traj.len() - 1,
        monotonicity: verify_monotonicity(&traj),
    };
    Ok((rows, summary))
}

/// Envelope and monotonicity sweep over parameter points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSweepConfig {
    /// `[nu, mu]` pairs.
    pub points: Vec<[f64; 2]>,
    #[serde(default = "unit")]
    pub beta: f64,
    /// `[k, eta]` pairs; defaults to a fixed sample over scales.
    #[serde(default)]
    pub modes: Option<Vec<[f64; 2]>>,
    /// Envelope horizon in units of `λ^{-1/3}` past the latest critical time.
    #[serde(default = "twenty")]
    pub horizon: f64,
    #[serde(default = "default_curve")]
    pub curve_points: usize,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    /// Tolerance on `max R / E_k(0)`.
    #[serde(default = "default_mono_tol")]
    pub monotonicity_tol: f64,
}

fn unit() -> f64 {
    1.0
}
fn twenty() -> f64 {
    20.0
}
fn default_curve() -> usize {
    200
}
fn default_mono_tol() -> f64 {
    1e-8
}

impl LinearSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::validation("points", "must be nonempty"));
        }
        for (i, &[nu, mu]) in self.points.iter().enumerate() {
            PhysicalParams::new(nu, mu, self.beta).validate(&format!("points[{i}]"))?;
        }
        if let Some(m) = &self.modes {
            if m.is_empty() || m.iter().any(|&[k, _]| k == 0.0) {
                return Err(Error::validation("modes", "needs at least one mode, all with k != 0"));
            }
        }
        if !(self.horizon > 0.0) {
            return Err(Error::validation("horizon", "must be positive"));
        }
        Ok(())
    }

    pub fn mode_list(&self) -> Vec<(f64, f64)> {
        match &self.modes {
            Some(m) => m.iter().map(|&[k, e]| (k, e)).collect(),
            None => default_mode_sample(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSweepPoint {
    pub nu: f64,
    pub mu: f64,
    pub regime: Regime,
    pub envelope: EnvelopeReport,
    pub monotonicity: Vec<MonotonicityReport>,
    pub worst_residual: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpread {
    pub regime: Regime,
    pub points: usize,
    pub min_constant: f64,
    pub max_constant: f64,
    /// `max/min - 1` of the envelope constant.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSweepReport {
    pub points: Vec<LinearSweepPoint>,
    pub spreads: Vec<RegimeSpread>,
}

pub fn linear_sweep_point(nu: f64, mu: f64, cfg: &LinearSweepConfig) -> Result<LinearSweepPoint> {
    let p = PhysicalParams::new(nu, mu, cfg.beta);
    let modes = cfg.mode_list();
    let ctl = Controls {
        rtol: cfg.rtol,
        ..Controls::default()
    };
    let lam = p.lambda().cbrt();
    let crit = modes.iter().map(|&(k, e)| (e / k).max(0.0)).fold(0.0, f64::max);
    let t_env = crit + cfg.horizon / lam;
    let envelope = amplification_envelope(&modes, &p, t_env, &ctl, cfg.curve_points)?;
    let variant = regime_variant(p.regime());
    let mut mono = Vec::new();
    for &(k, eta) in &modes {
        let sys = ModeSystem::new(k, eta, p.clone(), variant);
        for y0 in [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]] {
            let traj = integrate_mode(&sys, y0, 0.0, default_horizon(k, eta, &p), &ctl)?;
            mono.push(verify_monotonicity(&traj));
        }
    }
    let worst = mono.iter().map(|m| m.max_residual_rel).fold(f64::NEG_INFINITY, f64::max);
    Ok(LinearSweepPoint {
        nu,
        mu,
        regime: p.regime(),
        envelope,
        monotonicity: mono,
        worst_residual: worst,
        monotone: worst <= cfg.monotonicity_tol,
    })
}

pub fn linear_sweep(cfg: &LinearSweepConfig) -> Result<LinearSweepReport> {
    cfg.validate()?;
    let points: Vec<Result<LinearSweepPoint>> = par_map(&cfg.points, |&[nu, mu]| linear_sweep_point(nu, mu, cfg));
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let spreads = Regime::ALL
        .iter()
        .filter_map(|&r| {
            let c: Vec<f64> = points.iter().filter(|p| p.regime == r).map(|p| p.envelope.constant).collect();
            if c.is_empty() {
                return None;
            }
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(0.0, f64::max);
            Some(RegimeSpread {
                regime: r,
                points: c.len(),
                min_constant: lo,
                max_constant: hi,
                spread: hi / lo - 1.0,
            })
        })
        .collect();
    Ok(LinearSweepReport { points, spreads })
}

fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

// ------------------------------------------------------------- decay fit

/// Least-squares fit of `log E≠` over `[5, 15] λ^{-1/3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub regime: Regime,
    pub window: (f64, f64),
    pub samples: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `-2δ₀ r^{1/3}` with `r = ν`, `λ`, `μ` by regime.
    pub predicted_slope: f64,
    /// `slope / predicted_slope`; at least 1 when decay is as fast as predicted.
    pub ratio: f64,
    pub at_least_predicted: bool,
    pub fit_ok: bool,
}

pub const MIN_FIT_SAMPLES: usize = 20;

pub fn predicted_decay_slope(p: &PhysicalParams) -> f64 {
    let r = match p.regime() {
        Regime::NuLeMu3 => p.nu,
        Regime::Mu3LeNuLeMu13 => p.lambda(),
        Regime::Mu13LeNu => p.mu,
    };
    -2.0 * p.delta0 * r.cbrt()
}

/// Fits `(t, E)` samples; `r2_min` gates `fit_ok`, `slack` the ratio test.
pub fn fit_decay_rate(samples: &[(f64, f64)], p: &PhysicalParams, r2_min: f64, slack: f64) -> Result<RateFit> {
    let l = p.lambda().cbrt();
    let window = (5.0 / l, 15.0 / l);
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(t, e)| *t >= window.0 && *t <= window.1 && *e > 0.0 && e.is_finite())
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::WindowTooShort(format!(
            "{} usable samples in [{:.3}, {:.3}], need {MIN_FIT_SAMPLES}",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    let pred = predicted_decay_slope(p);
    let ratio = slope / pred;
    Ok(RateFit {
        regime: p.regime(),
        window,
        samples: pts.len(),
        slope,
        intercept,
        r_squared: r2,
        predicted_slope: pred,
        ratio,
        at_least_predicted: ratio >= 1.0 - slack,
        fit_ok: r2 >= r2_min,
    })
}

pub fn fit_records(records: &[EnergyRecord], p: &PhysicalParams) -> Result<RateFit> {
    let s: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.energy_neq)).collect();
    fit_decay_rate(&s, p, 0.9, 0.05)
}

// --------------------------------------------------------------- scaling

/// `log ε* = c + γ_ν log ν + γ_μ log μ` over one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub regime: Regime,
    pub points: usize,
    pub intercept: f64,
    pub gamma_nu: f64,
    pub gamma_mu: f64,
    pub confidence: f64,
    pub ci_nu: (f64, f64),
    pub ci_mu: (f64, f64),
    pub residual_std: f64,
    /// Predicted law, for display.
    pub predicted: String,
    /// `(γ_ν, γ_μ)` when the law is a product of powers.
    pub predicted_exponents: Option<(f64, f64)>,
    /// Both predicted exponents inside their intervals.
    pub consistent: Option<bool>,
}

pub fn predicted_law(r: Regime) -> (&'static str, Option<(f64, f64)>) {
    match r {
        Regime::NuLeMu3 => ("nu^(1/2) mu^(1/3)", Some((0.5, 1.0 / 3.0))),
        Regime::Mu3LeNuLeMu13 => ("min(nu, mu)^(1/2)", None),
        Regime::Mu13LeNu => ("nu^(-1) mu^(5/6)", Some((-1.0, 5.0 / 6.0))),
    }
}

/// Ordinary least squares with two-sided Student-t intervals at
/// `confidence`. Needs four points and a nondegenerate design.
pub fn regress_scaling(regime: Regime, data: &[(f64, f64, f64)], confidence: f64) -> Result<ScalingFit> {
    let n = data.len();
    if n < 4 {
        return Err(Error::Underdetermined(format!(
            "{}: {n} points, need at least 4 for exponents with intervals",
            regime.tag()
        )));
    }
    let rows: Vec<[f64; 3]> = data.iter().map(|&(nu, mu, _)| [1.0, nu.ln(), mu.ln()]).collect();
    let y: Vec<f64> = data.iter().map(|d| d.2.ln()).collect();
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for (r, &yi) in rows.iter().zip(&y) {
        for a in 0..3 {
            xty[a] += r[a] * yi;
            for b in 0..3 {
                xtx[a][b] += r[a] * r[b];
            }
        }
    }
    let inv = invert3(&xtx).ok_or_else(|| {
        Error::Underdetermined(format!("{}: log nu and log mu are collinear over the points", regime.tag()))
    })?;
    let beta: Vec<f64> = (0..3).map(|a| (0..3).map(|b| inv[a][b] * xty[b]).sum()).collect();
    let rss: f64 = rows
        .iter()
        .zip(&y)
        .map(|(r, yi)| (yi - (beta[0] + beta[1] * r[1] + beta[2] * r[2])).powi(2))
        .sum();
    let dof = (n - 3) as f64;
    let s2 = rss / dof;
    let tq = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Underdetermined(e.to_string()))?
        .inverse_cdf(0.5 + 0.5 * confidence);
    let half = |i: usize| tq * (s2 * inv[i][i]).max(0.0).sqrt();
    let ci_nu = (beta[1] - half(1), beta[1] + half(1));
    let ci_mu = (beta[2] - half(2), beta[2] + half(2));
    let (law, pred) = predicted_law(regime);
    let consistent = pred.map(|(a, b)| ci_nu.0 <= a && a <= ci_nu.1 && ci_mu.0 <= b && b <= ci_mu.1);
    Ok(ScalingFit {
        regime,
        points: n,
        intercept: beta[0],
        gamma_nu: beta[1],
        gamma_mu: beta[2],
        confidence,
        ci_nu,
        ci_mu,
        residual_std: s2.sqrt(),
        predicted: law.into(),
        predicted_exponents: pred,
        consistent,
    })
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |r: usize, s: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (s1, s2) = ((s + 1) % 3, (s + 2) % 3);
        m[r1][s1] * m[r2][s2] - m[r1][s2] * m[r2][s1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).powi(3);
    if !(det.abs() > 1e-12 * scale) {
        return None;
    }
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (s, v) in row.iter_mut().enumerate() {
            *v = c(s, r) / det;
        }
    }
    Some(out)
}

// ------------------------------------------------------------- threshold

/// Solver settings shared by every point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverTemplate {
    pub grid: Grid,
    #[serde(default = "default_dt")]
    pub dt_initial: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    pub initial_profile: InitialProfile,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "yes")]
    pub enforce_budget: bool,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    /// Sobolev index of the weights and the data norm.
    #[serde(default = "default_n")]
    pub n: u32,
}

fn default_dt() -> f64 {
    0.05
}
fn default_dealias() -> f64 {
    2.0 / 3.0
}
fn default_stride() -> usize {
    10
}
fn default_cfl() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn default_n() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub nu: Axis,
    pub mu: Axis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Each block contributes the product of its axes.
    pub blocks: Vec<Block>,
    #[serde(default = "unit")]
    pub beta: f64,
    /// Keep only points of these regimes (all when empty).
    #[serde(default)]
    pub regimes: Vec<Regime>,
    pub eps_lo: f64,
    pub eps_hi: f64,
    /// Bisection stops at `hi/lo ≤ 1 + eps_rtol`.
    #[serde(default = "default_eps_rtol")]
    pub eps_rtol: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "half")]
    pub tail_fraction: f64,
    /// `t_final = min(grid.t_final, horizon · λ^{-1/3})`.
    #[serde(default = "twenty")]
    pub horizon: f64,
    /// Also bisect with doubled `t_final`.
    #[serde(default)]
    pub robustness: bool,
    pub solver: SolverTemplate,
}

fn default_eps_rtol() -> f64 {
    0.1
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub nu: f64,
    pub mu: f64,
    pub regime: Regime,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::validation("blocks", "must be nonempty"));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.nu.validate(&format!("blocks[{i}].nu"))?;
            b.mu.validate(&format!("blocks[{i}].mu"))?;
        }
        if !(self.eps_lo > 0.0 && self.eps_hi > self.eps_lo && self.eps_hi.is_finite()) {
            return Err(Error::validation("eps_lo", "needs 0 < eps_lo < eps_hi"));
        }
        if !(self.eps_rtol > 0.0) {
            return Err(Error::validation("eps_rtol", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "must be nonempty"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::validation("tail_fraction", "must lie in (0, 1]"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::validation("horizon", "must be positive"));
        }
        let pts = self.points();
        if pts.is_empty() {
            return Err(Error::validation("regimes", "no sweep point falls in the selected regimes"));
        }
        for pt in &pts {
            self.solver_config(pt, self.eps_lo, self.seeds[0], false)
                .validate(&format!("point[{}]", pt.index))?;
        }
        Ok(())
    }

    /// Every sweep point, each classified into its regime.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for nu in b.nu.values() {
                for mu in b.mu.values() {
                    let regime = Regime::classify(nu, mu);
                    if self.regimes.is_empty() || self.regimes.contains(&regime) {
                        out.push(SweepPoint {
                            index: out.len(),
                            nu,
                            mu,
                            regime,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn params(&self, pt: &SweepPoint) -> PhysicalParams {
        PhysicalParams::new(pt.nu, pt.mu, self.beta).with_n(self.solver.n)
    }

    pub fn t_final(&self, pt: &SweepPoint, doubled: bool) -> f64 {
        let p = self.params(pt);
        let base = self.horizon / p.lambda().cbrt();
        let t = if doubled { 2.0 * base } else { base };
        t.min(self.solver.grid.t_final)
    }

    pub fn solver_config(&self, pt: &SweepPoint, eps: f64, seed: u64, doubled: bool) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            grid: s.grid,
            params: self.params(pt),
            dt_initial: s.dt_initial,
            dealias_fraction: s.dealias_fraction,
            t_final: self.t_final(pt, doubled),
            output_stride: s.output_stride,
            epsilon: eps,
            initial_profile: s.initial_profile.clone(),
            seed,
            nonlinear: true,
            frozen_frame: false,
            cfl: s.cfl,
            enforce_budget: s.enforce_budget,
            rtol: s.rtol,
        }
    }
}

/// One run at fixed `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub epsilon: f64,
    pub stable: bool,
    pub completed: bool,
    pub bootstrap_violation: Option<f64>,
    /// `E≠(t_final) / max_t E≠`.
    pub tail_ratio: f64,
    /// `max_t E≠ / E≠(0)`.
    pub max_amplification: f64,
}

pub fn run_trial(cfg: &SolverConfig, tail_fraction: f64) -> Result<(Trial, Vec<EnergyRecord>)> {
    let mut solver = Solver::new(cfg.clone())?;
    let out = solver.run()?;
    let recs = out.records;
    let completed = out.status == RunStatus::Completed;
    let report = bootstrap_monitor(&recs, cfg.epsilon, cfg.params.regime(), cfg.params.beta);
    let peak = recs.iter().map(|r| r.energy_neq).fold(0.0, f64::max);
    let last = recs.last().map_or(0.0, |r| r.energy_neq);
    let first = recs.first().map_or(0.0, |r| r.energy_neq);
    let tail_ratio = if peak > 0.0 { last / peak } else { 0.0 };
    let stable = completed && !report.violated() && tail_ratio <= tail_fraction;
    let trial = Trial {
        epsilon: cfg.epsilon,
        stable,
        completed,
        bootstrap_violation: report.first_violation,
        tail_ratio,
        max_amplification: if first > 0.0 { peak / first } else { 0.0 },
    };
    Ok((trial, recs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// Unstable already at `eps_lo`.
    Low,
    /// Still stable at `eps_hi`.
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bisection {
    pub seed: u64,
    pub epsilon_star: f64,
    pub saturation: Option<Saturation>,
    pub trials: Vec<Trial>,
    /// Pairs `ε₁ < ε₂` with `ε₂` stable and `ε₁` unstable.
    pub monotonicity_violations: usize,
}

/// Bisects in `log ε` on `[lo, hi]` until `hi/lo ≤ 1 + rtol`. Returns the
/// bisection and the records of the largest stable trial.
pub fn bisect_threshold(
    make: impl Fn(f64) -> SolverConfig,
    lo: f64,
    hi: f64,
    rtol: f64,
    tail_fraction: f64,
) -> Result<(Bisection, Option<Vec<EnergyRecord>>)> {
    let seed = make(lo).seed;
    let mut trials = Vec::new();
    let mut best: Option<(f64, Vec<EnergyRecord>)> = None;
    let mut run = |eps: f64, trials: &mut Vec<Trial>| -> Result<bool> {
        let (t, recs) = run_trial(&make(eps), tail_fraction)?;
        let s = t.stable;
        if s && best.as_ref().map_or(true, |(e, _)| eps > *e) {
            best = Some((eps, recs));
        }
        trials.push(t);
        Ok(s)
    };
    let (epsilon_star, saturation) = bisect_by(lo, hi, rtol, |e| run(e, &mut trials))?;
    let monotonicity_violations = count_inversions(&trials);
    Ok((
        Bisection {
            seed,
            epsilon_star,
            saturation,
            trials,
            monotonicity_violations,
        },
        best.map(|(_, r)| r),
    ))
}

/// Log-space bisection of a monotone predicate: stable below the
/// threshold, unstable above.
pub fn bisect_by(
    lo: f64,
    hi: f64,
    rtol: f64,
    mut stable: impl FnMut(f64) -> Result<bool>,
) -> Result<(f64, Option<Saturation>)> {
    if stable(hi)? {
        return Ok((hi, Some(Saturation::High)));
    }
    if !stable(lo)? {
        return Ok((lo, Some(Saturation::Low)));
    }
    let (mut a, mut b) = (lo, hi);
    while b / a > 1.0 + rtol {
        let mid = (a * b).sqrt();
        if stable(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(((a * b).sqrt(), None))
}

fn count_inversions(trials: &[Trial]) -> usize {
    let mut n = 0;
    for a in trials {
        for b in trials {
            if a.epsilon < b.epsilon && !a.stable && b.stable {
                n += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: SweepPoint,
    pub t_final: f64,
    /// Geometric mean of the per-seed thresholds.
    pub epsilon_star: f64,
    pub saturated: bool,
    pub per_seed: Vec<Bisection>,
    pub monotonicity_violations: usize,
    pub decay: Option<RateFit>,
    pub decay_error: Option<String>,
    pub max_amplification: f64,
    /// Earliest bootstrap violation when every tested `ε` failed.
    pub violation_time: Option<f64>,
    /// Threshold with doubled `t_final` and its relative change.
    pub doubled: Option<(f64, f64)>,
}

pub fn run_point(cfg: &SweepConfig, pt: &SweepPoint) -> Result<PointResult> {
    let mut per_seed = Vec::new();
    let mut fit_records = None;
    for &seed in &cfg.seeds {
        let (b, recs) = bisect_threshold(
            |e| cfg.solver_config(pt, e, seed, false),
            cfg.eps_lo,
            cfg.eps_hi,
            cfg.eps_rtol,
            cfg.tail_fraction,
        )?;
        if fit_records.is_none() {
            fit_records = recs;
        }
        per_seed.push(b);
    }
    let eps = geo_mean(per_seed.iter().map(|b| b.epsilon_star));
    let p = cfg.params(pt);
    let (decay, decay_error) = match fit_records.as_deref().map(|r| self::fit_records(r, &p)) {
        Some(Ok(f)) => (Some(f), None),
        Some(Err(e)) => (None, Some(e.to_string())),
        None => (None, Some("no stable trial".into())),
    };
    let all: Vec<&Trial> = per_seed.iter().flat_map(|b| &b.trials).collect();
    let violation_time = if all.iter().all(|t| !t.stable) {
        all.iter()
            .filter_map(|t| t.bootstrap_violation)
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
    } else {
        None
    };
    let doubled = if cfg.robustness {
        let mut v = Vec::new();
        for &seed in &cfg.seeds {
            let (b, _) = bisect_threshold(
                |e| cfg.solver_config(pt, e, seed, true),
                cfg.eps_lo,
                cfg.eps_hi,
                cfg.eps_rtol,
                cfg.tail_fraction,
            )?;
            v.push(b.epsilon_star);
        }
        let e2 = geo_mean(v.into_iter());
        Some((e2, (e2 - eps).abs() / eps))
    } else {
        None
    };
    Ok(PointResult {
        point: *pt,
        t_final: cfg.t_final(pt, false),
        epsilon_star: eps,
        saturated: per_seed.iter().any(|b| b.saturation.is_some()),
        monotonicity_violations: per_seed.iter().map(|b| b.monotonicity_violations).sum(),
        max_amplification: all.iter().map(|t| t.max_amplification).fold(0.0, f64::max),
        per_seed,
        decay,
        decay_error,
        violation_time,
        doubled,
    })
}

fn geo_mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x.ln(), n + 1));
    (s / n as f64).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<PointResult>,
    pub scaling: Vec<ScalingOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingOutcome {
    pub regime: Regime,
    /// Unsaturated points used in the fit.
    pub used: usize,
    pub saturated: usize,
    pub fit: Option<ScalingFit>,
    pub error: Option<String>,
}

pub fn point_file(idx: usize) -> String {
    format!("point-{idx:04}.json")
}

/// Runs every point, writing `points/point-NNNN.json` under `dir`. With
/// `resume`, points whose file already exists are loaded instead of rerun.
pub fn threshold_sweep(
    cfg: &SweepConfig,
    dir: &Path,
    resume: bool,
    on_point: impl Fn(&PointResult) + Sync + Send,
) -> Result<SweepResult> {
    cfg.validate()?;
    let pdir = dir.join("points");
    std::fs::create_dir_all(&pdir)?;
    let pts = cfg.points();
    let results = par_map(&pts, |pt| -> Result<PointResult> {
        let f = pdir.join(point_file(pt.index));
        if resume && f.exists() {
            if let Ok(r) = read_json::<PointResult>(&f) {
                if r.point == *pt {
                    on_point(&r);
                    return Ok(r);
                }
            }
        }
        let r = run_point(cfg, pt)?;
        write_json(&f, &r)?;
        on_point(&r);
        Ok(r)
    });
    let points = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        scaling: scaling_by_regime(&points),
        points,
    })
}

pub fn scaling_by_regime(points: &[PointResult]) -> Vec<ScalingOutcome> {
    Regime::ALL
        .iter()
        .filter_map(|&r| {
            let mine: Vec<&PointResult> = points.iter().filter(|p| p.point.regime == r).collect();
            if mine.is_empty() {
                return None;
            }
            let data: Vec<(f64, f64, f64)> = mine
                .iter()
                .filter(|p| !p.saturated)
                .map(|p| (p.point.nu, p.point.mu, p.epsilon_star))
                .collect();
            let (fit, error) = match regress_scaling(r, &data, 0.95) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Some(ScalingOutcome {
                regime: r,
                used: data.len(),
                saturated: mine.len() - data.len(),
                fit,
                error,
            })
        })
        .collect()
}

// ------------------------------------------------------------ multipliers

/// Property check over a random `(t, k, η)` lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierCheckConfig {
    pub params: PhysicalParams,
    #[serde(default = "default_lattice")]
    pub lattice_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    #[serde(default = "default_slope_max")]
    pub slope_max: f64,
    #[serde(default = "default_slope_max")]
    pub t_max: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_lattice() -> usize {
    100_000
}
fn default_k_max() -> u32 {
    64
}
fn default_slope_max() -> f64 {
    1e3
}
fn default_tolerance() -> f64 {
    1e-10
}

impl MultiplierCheckConfig {
    pub fn new(params: PhysicalParams) -> Self {
        MultiplierCheckConfig {
            params,
            lattice_size: default_lattice(),
            seed: 0,
            k_max: default_k_max(),
            slope_max: default_slope_max(),
            t_max: default_slope_max(),
            tolerance: default_tolerance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate("params")?;
        if self.lattice_size == 0 || self.k_max == 0 {
            return Err(Error::validation("lattice_size", "lattice must be nonempty"));
        }
        if !(self.slope_max > 0.0 && self.t_max > 0.0 && self.tolerance >= 0.0) {
            return Err(Error::validation("slope_max", "ranges must be positive"));
        }
        Ok(())
    }

    pub fn run(&self) -> Result<crate::multipliers::PropertyReport> {
        self.validate()?;
        let l = sample_lattice(self.lattice_size, self.seed, self.k_max, self.slope_max, self.t_max);
        Ok(crate::multipliers::check_properties(&self.params, &l, self.tolerance))
    }
}

/// Log multipliers along time for fixed modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierTableConfig {
    pub params: PhysicalParams,
    /// `[k, eta]` pairs.
    pub modes: Vec<[f64; 2]>,
    pub t_max: f64,
    #[serde(default = "default_curve")]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierRow {
    pub k: f64,
    pub eta: f64,
    pub t: f64,
    pub ln_m1: f64,
    pub ln_m2: f64,
    pub ln_m3: f64,
    pub ln_m4: f64,
    pub ln_m5: f64,
    pub ln_m6: f64,
    pub ln_a: f64,
    pub ln_m: f64,
    pub rate_m: f64,
    pub chi: f64,
    pub chibar: f64,
}

impl MultiplierTableConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate("params")?;
        if self.modes.is_empty() {
            return Err(Error::validation("modes", "must be nonempty"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::validation("t_max", "must be positive"));
        }
        if self.samples < 2 {
            return Err(Error::validation("samples", "must be at least 2"));
        }
        Ok(())
    }

    pub fn rows(&self) -> Result<Vec<MultiplierRow>> {
        use crate::multipliers as m;
        self.validate()?;
        let p = &self.params;
        let mut out = Vec::new();
        for &[k, eta] in &self.modes {
            for i in 0..self.samples {
                let t = self.t_max * i as f64 / (self.samples - 1) as f64;
                out.push(MultiplierRow {
                    k,
                    eta,
                    t,
                    ln_m1: m::log_m1(k, eta, t, p),
                    ln_m2: m::log_m2(k, eta, t, p),
                    ln_m3: m::log_m3(k, eta, t, p),
                    ln_m4: m::log_m4(k, eta, t, p),
                    ln_m5: m::log_m5(k, eta, t, p),
                    ln_m6: m::log_m6(k, eta, t, p),
                    ln_a: m::log_a(k, t, p),
                    ln_m: m::log_m(k, eta, t, p),
                    rate_m: m::rate_m(k, eta, t, p),
                    chi: m::chi_weight(k, eta, t, p.mu),
                    chibar: m::chibar_weight(k, eta, t, p.nu),
                });
            }
        }
        Ok(out)
    }
}

// ------------------------------------------------------------ invariants

/// Largest conjugate-symmetry and divergence defects of a state,
/// relative to its largest coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantDefects {
    pub conjugate: f64,
    pub divergence: f64,
}

impl InvariantDefects {
    pub fn of(state: &crate::spectral::MhdState, t: f64) -> Self {
        use crate::spectral::divergence_defect;
        let scale = state
            .omega
            .coeffs
            .iter()
            .chain(&state.j.coeffs)
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return Self::default();
        }
        let d = state.derive(t);
        let conj = state.omega.conjugate_defect().max(state.j.conjugate_defect());
        let div = divergence_defect(&d.u1, &d.u2, t).max(divergence_defect(&d.b1, &d.b2, t));
        InvariantDefects {
            conjugate: conj / scale,
            divergence: div / scale,
        }
    }

    pub fn max(self, o: Self) -> Self {
        InvariantDefects {
            conjugate: self.conjugate.max(o.conjugate),
            divergence: self.divergence.max(o.divergence),
        }
    }
}
