//! Fourier multipliers `M¹ … M⁶`, the decay weight `A`, the composite
//! weight `M` and the windows `χ`, `χ̄`.
//!
//! Everything is evaluated in log space: with the admissible constants
//! `M¹` and `M³` reach `exp(-C₁π)`, far below the smallest double.
//! Along each ray `s = η/k` the defining rates integrate in closed form:
//!
//! * `log M¹ = -C₁ [atan s - atan(s - t)]`
//! * `log M² = -2C₂² [atan(a s) - atan(a(s - t))]`, `a = (λk²)^{1/3}`
//! * `log M³ = -C₃ [g(s) - g(s - t)]`, `g(x) = x / sqrt(1 + x²)`
//! * `log M⁴ = -C₄ [atan(ν s) - atan(ν(s - t))]`
//! * `log M⁵, log M⁶ = -½ ln((1 + hi²)/(1 + lo²))` where `[lo, hi]` is the
//!   part of `[-s, t - s]` inside the window.

use serde::{Deserialize, Serialize};

use crate::params::{PhysicalParams, Regime};
use crate::spectral::{gamma_symbol, p_symbol, Grid};

/// `atan(a) - atan(b)` without cancellation when `a ≈ b` are both large.
pub fn atan_diff(a: f64, b: f64) -> f64 {
    let ab = a * b;
    if ab > -1.0 {
        ((a - b) / (1.0 + ab)).atan()
    } else if ab < -1.0 {
        let base = ((a - b) / (1.0 + ab)).atan();
        if a > 0.0 {
            std::f64::consts::PI + base
        } else {
            -std::f64::consts::PI + base
        }
    } else {
        a.atan() - b.atan()
    }
}

/// `g(a) - g(b)` for `g(x) = x / sqrt(1 + x²)`.
pub fn g_diff(a: f64, b: f64) -> f64 {
    let ra = (1.0 + a * a).sqrt();
    let rb = (1.0 + b * b).sqrt();
    if a * b > 0.0 {
        let denom = (a * rb + b * ra) * ra * rb;
        (a - b) * (a + b) / denom
    } else {
        a / ra - b / rb
    }
}

fn in_k_range(k: f64, bound: f64) -> bool {
    k != 0.0 && k.abs() <= bound
}

/// Window integral `-½ ln((1 + hi²)/(1 + lo²))` of `-σ/(1 + σ²)` over the
/// part of `[σ₀, σ]` inside `[a, b]`.
fn window_log(sigma0: f64, sigma: f64, a: f64, b: f64) -> f64 {
    let lo = sigma0.max(a);
    let hi = sigma.min(b);
    if hi <= lo {
        return 0.0;
    }
    // ln(1+hi²) - ln(1+lo²) = ln1p((hi-lo)(hi+lo)/(1+lo²))
    -0.5 * ((hi - lo) * (hi + lo) / (1.0 + lo * lo)).ln_1p()
}

/// Ungated closed forms: each returns the multiplier's formula regardless
/// of the regime in which it enters `M`.
pub mod raw {
    use super::*;

    pub fn log_m1(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.lambda().sqrt()) {
            return 0.0;
        }
        let s = eta / k;
        -p.c1 * atan_diff(s, s - t)
    }

    pub fn rate_m1(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.lambda().sqrt()) {
            return 0.0;
        }
        let d = eta / k - t;
        -p.c1 / (1.0 + d * d)
    }

    fn m2_scale(k: f64, p: &PhysicalParams) -> f64 {
        (p.lambda() * k * k).cbrt()
    }

    pub fn log_m2(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if k == 0.0 {
            return 0.0;
        }
        let a = m2_scale(k, p);
        let s = eta / k;
        -2.0 * p.c2 * p.c2 * atan_diff(a * s, a * (s - t))
    }

    pub fn rate_m2(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if k == 0.0 {
            return 0.0;
        }
        let a = m2_scale(k, p);
        let d = a * (eta / k - t);
        -2.0 * p.c2 * p.c2 * a / (1.0 + d * d)
    }

    pub fn log_m3(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.lambda().sqrt()) {
            return 0.0;
        }
        let s = eta / k;
        -p.c3 * g_diff(s, s - t)
    }

    pub fn rate_m3(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.lambda().sqrt()) {
            return 0.0;
        }
        let d = eta / k - t;
        -p.c3 / (1.0 + d * d).powf(1.5)
    }

    pub fn log_m4(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.mu.sqrt()) {
            return 0.0;
        }
        let s = eta / k;
        -p.c4 * atan_diff(p.nu * s, p.nu * (s - t))
    }

    pub fn rate_m4(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.mu.sqrt()) {
            return 0.0;
        }
        let d = p.nu * (eta / k - t);
        -p.c4 * p.nu / (1.0 + d * d)
    }

    fn m5_window(p: &PhysicalParams) -> (f64, f64) {
        (4.0 / p.nu, 4.0 / p.mu.cbrt())
    }

    pub fn log_m5(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.mu.sqrt()) {
            return 0.0;
        }
        let (a, b) = m5_window(p);
        window_log(-eta / k, t - eta / k, a, b)
    }

    pub fn rate_m5(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.mu.sqrt()) {
            return 0.0;
        }
        let (a, b) = m5_window(p);
        let sigma = t - eta / k;
        if sigma >= a && sigma <= b {
            -sigma / (1.0 + sigma * sigma)
        } else {
            0.0
        }
    }

    pub fn log_m6(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.nu.sqrt()) {
            return 0.0;
        }
        window_log(-eta / k, t - eta / k, 0.0, 4.0 / p.mu.cbrt())
    }

    pub fn rate_m6(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
        if !in_k_range(k, p.c2 / p.nu.sqrt()) {
            return 0.0;
        }
        let sigma = t - eta / k;
        if sigma >= 0.0 && sigma <= 4.0 / p.mu.cbrt() {
            -sigma / (1.0 + sigma * sigma)
        } else {
            0.0
        }
    }
}

pub fn log_m1(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    raw::log_m1(k, eta, t, p)
}

pub fn log_m2(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    raw::log_m2(k, eta, t, p)
}

pub fn log_m3(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    raw::log_m3(k, eta, t, p)
}

/// Zero outside regime `MU13_LE_NU`.
pub fn log_m4(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    if p.regime() == Regime::Mu13LeNu {
        raw::log_m4(k, eta, t, p)
    } else {
        0.0
    }
}

/// Zero outside regime `MU13_LE_NU`.
pub fn log_m5(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    if p.regime() == Regime::Mu13LeNu {
        raw::log_m5(k, eta, t, p)
    } else {
        0.0
    }
}

/// Zero outside regime `NU_LE_MU3`.
pub fn log_m6(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    if p.regime() == Regime::NuLeMu3 {
        raw::log_m6(k, eta, t, p)
    } else {
        0.0
    }
}

pub fn eval_m1(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    log_m1(k, eta, t, p).exp()
}

pub fn eval_m2(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    log_m2(k, eta, t, p).exp()
}

pub fn eval_m3(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    log_m3(k, eta, t, p).exp()
}

pub fn eval_m4(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    log_m4(k, eta, t, p).exp()
}

pub fn eval_m5(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    log_m5(k, eta, t, p).exp()
}

pub fn eval_m6(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    log_m6(k, eta, t, p).exp()
}

/// `log A = δ₀ λ^{1/3} t` for `k ≠ 0`.
pub fn log_a(k: f64, t: f64, p: &PhysicalParams) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        p.delta0 * p.lambda().cbrt() * t
    }
}

pub fn eval_a(k: f64, t: f64, p: &PhysicalParams) -> f64 {
    log_a(k, t, p).exp()
}

/// `log ⟨k, η⟩^N`.
pub fn log_weight(k: f64, eta: f64, n: u32) -> f64 {
    0.5 * n as f64 * (k * k + eta * eta).ln_1p()
}

/// Log of the composite weight `M` for the regime of `p`.
pub fn log_m(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    let base = log_a(k, t, p)
        + log_weight(k, eta, p.n)
        + raw::log_m1(k, eta, t, p)
        + raw::log_m2(k, eta, t, p)
        + raw::log_m3(k, eta, t, p);
    match p.regime() {
        Regime::Mu3LeNuLeMu13 => base,
        Regime::Mu13LeNu => base + raw::log_m4(k, eta, t, p) + raw::log_m5(k, eta, t, p),
        Regime::NuLeMu3 => base + raw::log_m6(k, eta, t, p),
    }
}

pub fn eval_m(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    log_m(k, eta, t, p).exp()
}

/// `∂_t M / M` for the regime of `p`.
pub fn rate_m(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    let a = if k == 0.0 {
        0.0
    } else {
        p.delta0 * p.lambda().cbrt()
    };
    let base = a + raw::rate_m1(k, eta, t, p) + raw::rate_m2(k, eta, t, p) + raw::rate_m3(k, eta, t, p);
    match p.regime() {
        Regime::Mu3LeNuLeMu13 => base,
        Regime::Mu13LeNu => base + raw::rate_m4(k, eta, t, p) + raw::rate_m5(k, eta, t, p),
        Regime::NuLeMu3 => base + raw::rate_m6(k, eta, t, p),
    }
}

/// `χ = 1` on `0 < t - η/k ≤ 4μ^{-1/3}`.
pub fn chi_weight(k: f64, eta: f64, t: f64, mu: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    let sigma = t - eta / k;
    if sigma > 0.0 && sigma <= 4.0 / mu.cbrt() {
        1.0
    } else {
        0.0
    }
}

/// `χ̄ = 1` on `|t - η/k| ≤ 4/ν`.
pub fn chibar_weight(k: f64, eta: f64, t: f64, nu: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    if (t - eta / k).abs() <= 4.0 / nu {
        1.0
    } else {
        0.0
    }
}

/// Log-multipliers at one lattice point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValues {
    pub m: [f64; 6],
    pub a: f64,
    pub weight: f64,
    pub total: f64,
}

impl LogValues {
    pub fn at(k: f64, eta: f64, t: f64, p: &PhysicalParams) -> Self {
        let m = [
            log_m1(k, eta, t, p),
            log_m2(k, eta, t, p),
            log_m3(k, eta, t, p),
            log_m4(k, eta, t, p),
            log_m5(k, eta, t, p),
            log_m6(k, eta, t, p),
        ];
        let a = log_a(k, t, p);
        let weight = log_weight(k, eta, p.n);
        LogValues {
            m,
            a,
            weight,
            total: a + weight + m.iter().sum::<f64>(),
        }
    }
}

/// All multipliers over a grid at one time.
#[derive(Debug, Clone)]
pub struct MultiplierStack {
    pub params: PhysicalParams,
    pub t: f64,
    pub regime: Regime,
    pub values: Vec<LogValues>,
    /// `∂_t M / M` per lattice point.
    pub rates: Vec<f64>,
}

impl MultiplierStack {
    pub fn new(params: &PhysicalParams, grid: &Grid, t: f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        let mut rates = Vec::with_capacity(grid.len());
        for (_, k, eta) in grid.modes() {
            let k = k as f64;
            values.push(LogValues::at(k, eta, t, params));
            rates.push(rate_m(k, eta, t, params));
        }
        MultiplierStack {
            params: params.clone(),
            t,
            regime: params.regime(),
            values,
            rates,
        }
    }

    pub fn log_total(&self, idx: usize) -> f64 {
        self.values[idx].total
    }
}

/// A point of the sampled `(t, k, η)` lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    pub t: f64,
    pub k: f64,
    pub eta: f64,
}

/// Outcome of a hard inequality over a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardCheck {
    pub points: usize,
    pub violations: usize,
    /// Smallest `lhs/rhs` (or largest `rhs/lhs` for upper bounds) seen.
    pub worst_ratio: f64,
    pub first_violation: Option<LatticePoint>,
}

impl HardCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Best constant of a `≲` estimate over a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedConstant {
    pub points: usize,
    pub best_constant: f64,
    pub argmax: Option<LatticePoint>,
}

impl FittedConstant {
    fn new() -> Self {
        FittedConstant {
            points: 0,
            best_constant: 0.0,
            argmax: None,
        }
    }

    fn push(&mut self, ratio: f64, at: LatticePoint) {
        self.points += 1;
        if ratio > self.best_constant {
            self.best_constant = ratio;
            self.argmax = Some(at);
        }
    }
}

/// Results of the multiplier property suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub regime: Regime,
    pub tolerance: f64,
    /// `λp - ∂_t M²/M² ≥ C₂ λ^{1/3} |k|^{2/3}`; `worst_ratio` is min lhs/rhs.
    pub lower_bound_m2: HardCheck,
    /// `max{Γ, 1/⟨t⟩, μ^{1/3}} ≤ M⁶`; `worst_ratio` is max lhs/M⁶.
    pub lower_bound_m6: HardCheck,
    /// `M⁶` bound with the observed constant: holds iff
    /// `max{…} ≤ c·M⁶` with `c = lower_bound_m6.worst_ratio`.
    pub lower_bound_m6_demoted: bool,
    /// Observed minima of `log Mⁱ`, `i = 1..6`.
    pub min_log_m: [f64; 6],
    /// Largest positive `log Mⁱ` seen; zero when every `Mⁱ ≤ 1`.
    pub max_log_m: f64,
    /// `|∂_η log Mⁱ| / (λ^{1/3}|k|^{-1/3} + |k|^{-1})`, `i = 1..6`.
    pub eta_derivative: Vec<FittedConstant>,
    /// `|∂_k log M²| / (λ^{1/3}|k|^{-4/3}|η| + |k|^{-1})` on `|k| > C₂λ^{-1/2}`.
    pub k_derivative_m2: FittedConstant,
    /// `(1/M⁵) / (1 + min{ν⟨t - η/k⟩, α})`.
    pub inverse_m5: FittedConstant,
}

impl PropertyReport {
    /// True when every hard check passed outright.
    pub fn hard_passed(&self) -> bool {
        self.lower_bound_m2.passed() && self.lower_bound_m6.passed()
    }
}

fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-6 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Evaluates the multiplier property suite on `lattice`. The `M⁶` checks
/// use the formula ungated so they are exercised in any regime.
pub fn check_properties(p: &PhysicalParams, lattice: &[LatticePoint], tol: f64) -> PropertyReport {
    let lam = p.lambda();
    let lam13 = lam.cbrt();
    let mu13 = p.mu.cbrt();
    let mut m2 = HardCheck {
        points: 0,
        violations: 0,
        worst_ratio: f64::INFINITY,
        first_violation: None,
    };
    let mut m6 = HardCheck {
        points: 0,
        violations: 0,
        worst_ratio: 0.0,
        first_violation: None,
    };
    let mut min_log = [0.0f64; 6];
    let mut max_log = 0.0f64;
    let mut eta_d: Vec<FittedConstant> = (0..6).map(|_| FittedConstant::new()).collect();
    let mut k_d = FittedConstant::new();
    let mut inv5 = FittedConstant::new();
    type LogFn = fn(f64, f64, f64, &PhysicalParams) -> f64;
    let fns: [LogFn; 6] = [raw::log_m1, raw::log_m2, raw::log_m3, raw::log_m4, raw::log_m5, raw::log_m6];

    for &pt in lattice {
        let LatticePoint { t, k, eta } = pt;
        if k == 0.0 {
            continue;
        }
        let kk = k.abs();

        let lhs = lam * p_symbol(k, eta, t) - raw::rate_m2(k, eta, t, p);
        let rhs = p.c2 * lam13 * kk.powf(2.0 / 3.0);
        let r = lhs / rhs;
        m2.points += 1;
        m2.worst_ratio = m2.worst_ratio.min(r);
        if r < 1.0 - tol {
            m2.violations += 1;
            m2.first_violation.get_or_insert(pt);
        }

        let floor = gamma_symbol(k, eta, t).max(1.0 / t.hypot(1.0)).max(mu13);
        let r6 = floor / raw::log_m6(k, eta, t, p).exp();
        m6.points += 1;
        m6.worst_ratio = m6.worst_ratio.max(r6);
        if r6 > 1.0 + tol {
            m6.violations += 1;
            m6.first_violation.get_or_insert(pt);
        }

        for (i, f) in fns.iter().enumerate() {
            let v = f(k, eta, t, p);
            min_log[i] = min_log[i].min(v);
            max_log = max_log.max(v);
            let d = central_diff(|e| f(k, e, t, p), eta).abs();
            eta_d[i].push(d / (lam13 * kk.powf(-1.0 / 3.0) + 1.0 / kk), pt);
        }

        if kk > p.c2 / lam.sqrt() {
            let d = central_diff(|kx| raw::log_m2(kx, eta, t, p), k).abs();
            k_d.push(d / (lam13 * kk.powf(-4.0 / 3.0) * eta.abs() + 1.0 / kk), pt);
        }

        let sigma = t - eta / k;
        let inv = (-raw::log_m5(k, eta, t, p)).exp();
        inv5.push(inv / (1.0 + (p.nu * sigma.hypot(1.0)).min(p.alpha())), pt);
    }

    PropertyReport {
        regime: p.regime(),
        tolerance: tol,
        lower_bound_m6_demoted: m6.violations > 0,
        lower_bound_m2: m2,
        lower_bound_m6: m6,
        min_log_m: min_log,
        max_log_m: max_log,
        eta_derivative: eta_d,
        k_derivative_m2: k_d,
        inverse_m5: inv5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn params(nu: f64, mu: f64) -> PhysicalParams {
        PhysicalParams::new(nu, mu, 1.0)
    }

    #[test]
    fn atan_diff_matches_direct() {
        for &(a, b) in &[(1.0f64, -1.0f64), (3.0, -2.0), (-2.0, 3.0), (0.5, 0.25), (2.0, -0.5)] {
            let direct = a.atan() - b.atan();
            assert!((atan_diff(a, b) - direct).abs() < 1e-9 * direct.abs().max(1e-9), "{a} {b}");
        }
        assert!((atan_diff(1.0, 0.0) - FRAC_PI_4).abs() < 1e-16);
        // both large: direct subtraction keeps no digits
        let (a, b) = (1e8f64, 1e8 - 1.0);
        let expect = (1.0 / (1.0 + a * b)).atan();
        assert!((atan_diff(a, b) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn g_diff_matches_direct() {
        let g = |x: f64| x / (1.0 + x * x).sqrt();
        for &(a, b) in &[(1.0, -1.0), (3.0, 2.0), (-2.0, -3.0), (0.0, -1.0)] {
            assert!((g_diff(a, b) - (g(a) - g(b))).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_values() {
        let p = params(1.0, 1.0);
        for f in [eval_m1, eval_m2, eval_m3] {
            assert_eq!(f(1.0, 3.0, 0.0, &p), 1.0);
        }
        assert!((log_m1(1.0, 0.0, 1.0, &p) + p.c1 * FRAC_PI_4).abs() < 1e-6);
        assert_eq!(eval_m2(0.0, 1.0, 5.0, &p), 1.0);
        let big = p.c2 / p.lambda().sqrt() + 1.0;
        assert_eq!(eval_m1(big, 0.0, 10.0, &p), 1.0);
        assert_eq!(eval_m3(big, 0.0, 10.0, &p), 1.0);
        // t → ∞ with η = 0: atan(0) - atan(-t) → π/2, g(0) - g(-t) → 1
        let l2 = log_m2(1.0, 0.0, 1e9, &p);
        assert!((l2 + 2.0 * p.c2 * p.c2 * PI / 2.0).abs() / l2.abs() < 1e-8);
        let l3 = log_m3(1.0, 0.0, 1e9, &p);
        assert!((l3 + p.c3).abs() / p.c3 < 1e-12);
    }

    #[test]
    fn m4_example_in_its_regime() {
        let p = params(1.0, 0.5);
        assert_eq!(p.regime(), Regime::Mu13LeNu);
        assert!((log_m4(1.0, 0.0, 1.0, &p) + p.c4 * FRAC_PI_4).abs() < 1e-14);
        let big = p.c2 / p.mu.sqrt() + 1.0;
        assert_eq!(eval_m4(big, 0.0, 3.0, &p), 1.0);
        let q = params(0.01, 0.02);
        assert_eq!(eval_m4(1.0, 0.0, 3.0, &q), 1.0);
    }

    #[test]
    fn m5_cases() {
        // ν = 1, μ = 1e-3: window 4 ≤ σ ≤ 40
        let p = params(1.0, 1e-3);
        assert_eq!(p.regime(), Regime::Mu13LeNu);
        assert_eq!(eval_m5(0.0, 1.0, 3.0, &p), 1.0);
        assert_eq!(eval_m5(1.0, -2.0, 1.0, &p), 1.0);
        // η = -4 is case 3 with σ₀ = 4
        let t = 10.0;
        let expect = (17.0f64 / (1.0 + (-4.0 - t) * (-4.0 - t))).sqrt();
        assert!((eval_m5(1.0, -4.0, t, &p) - expect).abs() < 1e-14);
        // frozen after the window
        let frozen = (17.0f64 / (1.0 + 1600.0)).sqrt();
        assert!((eval_m5(1.0, -4.0, 100.0, &p) - frozen).abs() < 1e-14);
        // η/k < -4μ^{-1/3}
        assert_eq!(eval_m5(1.0, -50.0, 100.0, &p), 1.0);
    }

    #[test]
    fn m6_cases() {
        let p = params(1e-4, 0.1);
        assert_eq!(p.regime(), Regime::NuLeMu3);
        assert!((eval_m6(1.0, 2.0, 3.0, &p) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(eval_m6(0.0, 2.0, 3.0, &p), 1.0);
        assert_eq!(eval_m6(1.0, 2.0, 1.5, &p), 1.0);
        let w = 4.0 / p.mu.cbrt();
        let frozen = (1.0 / (1.0 + w * w)).sqrt();
        assert!((eval_m6(1.0, 2.0, 2.0 + w + 5.0, &p) - frozen).abs() < 1e-14);
    }

    #[test]
    fn a_and_composite() {
        let p = params(1e-3, 1e-3);
        assert_eq!(eval_a(0.0, 50.0, &p), 1.0);
        assert_eq!(eval_a(1.0, 0.0, &p), 1.0);
        let mut q = p.clone();
        q.delta0 = 0.01;
        assert!((eval_a(1.0, 100.0, &q) - 0.1f64.exp()).abs() < 1e-14);
        assert!((eval_m(1.0, 0.0, 0.0, &p) - 4.0).abs() < 1e-14);
        assert_eq!(eval_m(0.0, 0.0, 0.0, &p), 1.0);
    }

    #[test]
    fn composite_equals_factor_product() {
        for p in [params(1e-4, 0.1), params(0.01, 0.02), params(0.5, 1e-3)] {
            for &(k, eta, t) in &[(1.0, 3.0, 2.0), (2.0, -5.0, 7.0), (3.0, 40.0, 20.0)] {
                let v = LogValues::at(k, eta, t, &p);
                assert!((v.total - log_m(k, eta, t, &p)).abs() < 1e-9 * v.total.abs().max(1.0));
            }
        }
    }

    #[test]
    fn windows() {
        assert_eq!(chi_weight(1.0, 0.0, 1.0, 1.0), 1.0);
        assert_eq!(chi_weight(0.0, 0.0, 1.0, 1.0), 0.0);
        assert_eq!(chi_weight(1.0, 2.0, 2.0, 1.0), 0.0);
        assert_eq!(chi_weight(1.0, 0.0, 4.0, 1.0), 1.0);
        assert_eq!(chi_weight(1.0, 0.0, 4.0001, 1.0), 0.0);
        assert_eq!(chibar_weight(1.0, 0.0, -4.0, 1.0), 1.0);
        assert_eq!(chibar_weight(1.0, 0.0, 4.1, 1.0), 0.0);
    }

    #[test]
    fn lower_bound_m2_hand_case() {
        // at t = 0, k = 1, η = 0, λ = 1: rate is -2C₂², lhs = 1 + 2C₂² ≥ C₂
        let p = params(1.0, 1.0);
        let r = check_properties(&p, &[LatticePoint { t: 0.0, k: 1.0, eta: 0.0 }], 1e-10);
        assert!(r.lower_bound_m2.passed());
        assert!(r.lower_bound_m6.passed());
        assert_eq!(r.max_log_m, 0.0);
    }
}
