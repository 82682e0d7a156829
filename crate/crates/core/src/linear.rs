//! Per-mode linear dynamics: right-hand sides, adaptive integration,
//! per-mode energies and the linear energy inequality.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::multipliers::{chi_weight, chibar_weight, log_m, rate_m};
use crate::params::{PhysicalParams, Regime};
use crate::propagator::{mat_vec, propagate, Controls, LogState, ModeCoefficients, Variant};
use crate::spectral::{bracket_t, dtp_symbol, gamma_symbol, p_symbol, C64};

/// Symbol of `2 ∂_X ∂_Y^L Δ_L⁻¹`: `2k(η - kt)/p`, equal to `-∂ₜp/p`.
pub fn stretching_symbol(k: f64, eta: f64, t: f64) -> f64 {
    let p = p_symbol(k, eta, t);
    if p == 0.0 {
        0.0
    } else {
        2.0 * k * (eta - k * t) / p
    }
}

/// `(dΩ̂/dt, dĴ/dt)`.
pub fn rhs_omega_j(k: f64, eta: f64, t: f64, y: [C64; 2], p: &PhysicalParams) -> [C64; 2] {
    ModeSystem::new(k, eta, p.clone(), Variant::OmegaJ).rhs(t, y)
}

/// `(dẐ/dt, dQ̂/dt)`.
pub fn rhs_z_q(k: f64, eta: f64, t: f64, y: [C64; 2], p: &PhysicalParams) -> [C64; 2] {
    ModeSystem::new(k, eta, p.clone(), Variant::ZQ).rhs(t, y)
}

/// Variant and energy window used by the linear estimate in `regime`:
/// `(Ω, J)` with `χ` below `ν = μ³`, `(Z, Q)` with `χ̄` above.
pub fn regime_variant(regime: Regime) -> Variant {
    match regime {
        Regime::NuLeMu3 => Variant::OmegaJ,
        _ => Variant::ZQ,
    }
}

/// One `(k, η)` mode of the linearized system.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSystem {
    pub k: f64,
    pub eta: f64,
    pub params: PhysicalParams,
    pub variant: Variant,
    pub stretching: bool,
}

impl ModeSystem {
    pub fn new(k: f64, eta: f64, params: PhysicalParams, variant: Variant) -> Self {
        ModeSystem {
            k,
            eta,
            params,
            variant,
            stretching: true,
        }
    }

    pub fn coefficients(&self) -> ModeCoefficients {
        ModeCoefficients {
            k: self.k,
            eta: self.eta,
            nu: self.params.nu,
            mu: self.params.mu,
            beta: self.params.beta,
            variant: self.variant,
            stretching: self.stretching,
            frozen_time: None,
        }
    }

    pub fn rhs(&self, t: f64, y: [C64; 2]) -> [C64; 2] {
        mat_vec(&self.coefficients().matrix(t), &y)
    }

    /// Mixed-term coefficient `c` with `E_k = ½ M² (|y₀|² + |y₁|² + Re(c y₀ ȳ₁))`,
    /// and its time derivative away from window edges.
    pub fn mixed_coefficient(&self, t: f64) -> (C64, C64) {
        let (k, eta) = (self.k, self.eta);
        if k == 0.0 {
            return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        }
        let w = match self.variant {
            Variant::OmegaJ => chi_weight(k, eta, t, self.params.mu),
            Variant::ZQ => chibar_weight(k, eta, t, self.params.nu),
        };
        let p = p_symbol(k, eta, t);
        let s = eta - k * t;
        let f = w * 2.0 / self.params.beta;
        let c = C64::new(0.0, -f * s / p);
        let dc = C64::new(0.0, -f * (-k * p + 2.0 * k * s * s) / (p * p));
        (c, dc)
    }

    /// Energy, dissipation and CK density of state `y` at `t`.
    pub fn energy(&self, t: f64, y: &LogState) -> ModeEnergy {
        let (k, eta) = (self.k, self.eta);
        let u = y.dir;
        let (c, _) = self.mixed_coefficient(t);
        let quad = u[0].norm_sqr() + u[1].norm_sqr();
        let e = 0.5 * (quad + (c * u[0] * u[1].conj()).re);
        let p = p_symbol(k, eta, t);
        let d = self.params.nu * p * u[0].norm_sqr() + self.params.mu * p * u[1].norm_sqr();
        let g = gamma_symbol(k, eta, t);
        let ck = (g * g + self.params.lambda().cbrt() * k.abs().powf(2.0 / 3.0)) * quad;
        ModeEnergy {
            log_scale: 2.0 * (log_m(k, eta, t, &self.params) + y.log_norm),
            e,
            quad,
            d,
            ck,
        }
    }

    /// `dE/dt + (D + CK)/(100|β|)` divided by `M²|y|²`, using the exact
    /// derivative of the flow.
    pub fn residual_density(&self, t: f64, y: &LogState) -> f64 {
        let u = y.dir;
        let du = self.rhs(t, u);
        let (c, dc) = self.mixed_coefficient(t);
        let en = self.energy(t, y);
        let rate = rate_m(self.k, self.eta, t, &self.params);
        let de = (du[0] * u[0].conj()).re
            + (du[1] * u[1].conj()).re
            + 0.5 * (dc * u[0] * u[1].conj() + c * du[0] * u[1].conj() + c * u[0] * du[1].conj()).re;
        let kappa = 1.0 / (100.0 * self.params.beta.abs());
        2.0 * rate * en.e + de + kappa * (en.d + en.ck)
    }
}

/// Per-mode functionals stored as `exp(log_scale) · value`, where
/// `exp(log_scale) = M² |y|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEnergy {
    pub log_scale: f64,
    /// `E_k / (M²|y|²)`.
    pub e: f64,
    /// `(|y₀|² + |y₁|²) / |y|²`, always 1 for nonzero states.
    pub quad: f64,
    pub d: f64,
    pub ck: f64,
}

impl ModeEnergy {
    pub fn energy(&self) -> f64 {
        self.e * self.log_scale.exp()
    }

    pub fn dissipation(&self) -> f64 {
        self.d * self.log_scale.exp()
    }

    pub fn ck(&self) -> f64 {
        self.ck * self.log_scale.exp()
    }

    pub fn log_energy(&self) -> f64 {
        self.log_scale + self.e.ln()
    }
}

/// Solution samples of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    pub system: ModeSystem,
    pub times: Vec<f64>,
    pub states: Vec<LogState>,
}

impl ModeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn energies(&self) -> Vec<ModeEnergy> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, y)| self.system.energy(t, y))
            .collect()
    }

    pub fn last(&self) -> Option<(f64, LogState)> {
        Some((*self.times.last()?, *self.states.last()?))
    }
}

/// Integrates `system` from `y0` over `[t0, t1]`, recording every accepted
/// step.
pub fn integrate_mode(
    system: &ModeSystem,
    y0: [C64; 2],
    t0: f64,
    t1: f64,
    ctl: &Controls,
) -> Result<ModeTrajectory> {
    let mut times = vec![t0];
    let mut states = vec![LogState::new(y0)];
    propagate(&system.coefficients(), states[0], t0, t1, ctl, |t, y| {
        times.push(t);
        states.push(*y);
    })?;
    Ok(ModeTrajectory {
        system: system.clone(),
        times,
        states,
    })
}

/// Worst excursion of the per-mode energy inequality along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub k: f64,
    pub eta: f64,
    pub samples: usize,
    /// `max_t R(t) / E_k(0)` where `R = dE/dt + (D + CK)/(100|β|)`.
    pub max_residual_rel: f64,
    /// `max_t R(t) / E_k(t)`.
    pub max_residual_scale_free: f64,
    pub t_at_max: f64,
}

impl MonotonicityReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_residual_rel <= tol
    }
}

pub fn verify_monotonicity(traj: &ModeTrajectory) -> MonotonicityReport {
    let sys = &traj.system;
    let e0 = sys.energy(traj.times[0], &traj.states[0]);
    let log_e0 = e0.log_energy();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_sf = f64::NEG_INFINITY;
    let mut t_at = traj.times[0];
    for (&t, y) in traj.times.iter().zip(&traj.states) {
        if !y.log_norm.is_finite() {
            continue;
        }
        let en = sys.energy(t, y);
        let r = sys.residual_density(t, y);
        // R / E(0) = r · M²|y|² / E(0)
        let rel = r.signum() * (r.abs().ln() + en.log_scale - log_e0).exp();
        let sf = r / en.e;
        if rel > worst {
            worst = rel;
            t_at = t;
        }
        worst_sf = worst_sf.max(sf);
    }
    MonotonicityReport {
        k: sys.k,
        eta: sys.eta,
        samples: traj.len(),
        max_residual_rel: worst,
        max_residual_scale_free: worst_sf,
        t_at_max: t_at,
    }
}

/// Predicted amplification envelope for `|Ω̂| + |Ĵ|` from unit data.
pub fn envelope(regime: Regime, p: &PhysicalParams, t: f64) -> f64 {
    let bt = bracket_t(t);
    match regime {
        Regime::NuLeMu3 => (1.0 / p.mu.cbrt()).min(bt) * (-p.delta0 * p.nu.cbrt() * t).exp(),
        Regime::Mu3LeNuLeMu13 => bt * (-p.delta0 * p.lambda().cbrt() * t).exp(),
        Regime::Mu13LeNu => p.alpha() * bt * (-p.delta0 * p.mu.cbrt() * t).exp(),
    }
}

/// Envelope fit over a mode set at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub regime: Regime,
    pub nu: f64,
    pub mu: f64,
    pub beta: f64,
    pub t_final: f64,
    /// `sup_t sup_modes (|Ω̂|+|Ĵ|)(t) / envelope(t)` for unit data.
    pub constant: f64,
    pub argmax_k: f64,
    pub argmax_eta: f64,
    pub argmax_t: f64,
    /// Peak of `|Ω̂|+|Ĵ|` over time and modes.
    pub max_amplification: f64,
    /// `(t, sup over modes of |Ω̂|+|Ĵ|)` on a uniform grid of times.
    pub curve: Vec<(f64, f64)>,
}

/// Runs unit data `(1, 0)` and `(0, 1)` for every mode in `modes` and fits
/// the regime envelope. Integration is in `(Ω, J)`.
pub fn amplification_envelope(
    modes: &[(f64, f64)],
    p: &PhysicalParams,
    t_final: f64,
    ctl: &Controls,
    curve_points: usize,
) -> Result<EnvelopeReport> {
    let regime = p.regime();
    let n = curve_points.max(2);
    let grid: Vec<f64> = (0..n).map(|i| t_final * i as f64 / (n - 1) as f64).collect();
    let mut curve = vec![0.0f64; n];
    let mut best = (0.0f64, 0.0, 0.0, 0.0);
    let mut peak = 0.0f64;
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    for &(k, eta) in modes {
        let sys = ModeSystem::new(k, eta, p.clone(), Variant::OmegaJ);
        for y0 in [[one, zero], [zero, one]] {
            let mut gi = 0usize;
            let mut prev: Option<(f64, LogState)> = None;
            let mut on_sample = |t: f64, y: &LogState| {
                let v = y.value();
                let amp = v[0].norm() + v[1].norm();
                let r = amp / envelope(regime, p, t);
                if r > best.0 {
                    best = (r, k, eta, t);
                }
                peak = peak.max(amp);
                while gi < n && grid[gi] <= t {
                    // nearest accepted sample at or after the grid time
                    let a = match prev {
                        Some((tp, yp)) if (grid[gi] - tp).abs() < (t - grid[gi]).abs() => {
                            let w = yp.value();
                            w[0].norm() + w[1].norm()
                        }
                        _ => amp,
                    };
                    curve[gi] = curve[gi].max(a);
                    gi += 1;
                }
                prev = Some((t, *y));
            };
            on_sample(0.0, &LogState::new(y0));
            propagate(&sys.coefficients(), LogState::new(y0), 0.0, t_final, ctl, |t, y| on_sample(t, y))?;
        }
    }
    Ok(EnvelopeReport {
        regime,
        nu: p.nu,
        mu: p.mu,
        beta: p.beta,
        t_final,
        constant: best.0,
        argmax_k: best.1,
        argmax_eta: best.2,
        argmax_t: best.3,
        max_amplification: peak,
        curve: grid.into_iter().zip(curve).collect(),
    })
}

/// Default mode sample: `k ∈ {1,2,4,8,16}` crossed with
/// `η/k ∈ {-20,-5,0,5,20,100}`.
pub fn default_mode_sample() -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for k in [1.0, 2.0, 4.0, 8.0, 16.0] {
        for s in [-20.0, -5.0, 0.0, 5.0, 20.0, 100.0] {
            v.push((k, k * s));
        }
    }
    v
}

/// Horizon covering the critical time and `20 λ^{-1/3}` after it.
pub fn default_horizon(k: f64, eta: f64, p: &PhysicalParams) -> f64 {
    (eta / k).max(0.0) + 20.0 / p.lambda().cbrt()
}

/// `∂ₜp` re-exported for symbol checks.
pub fn dtp(k: f64, eta: f64, t: f64) -> f64 {
    dtp_symbol(k, eta, t)
}
