//! Field-level functionals along trajectories: weighted energies,
//! dissipations and CK terms, zero-mode functionals, damping norms,
//! bootstrap monitoring and the zero-mode forcing pairings.
//!
//! Multiplier-weighted functionals carry factors as small as
//! `exp(-C₁π)`, so they are summed in log space and stored both as a
//! natural log and as a plain value (which may underflow to zero).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::multipliers::{chi_weight, chibar_weight, log_m};
use crate::params::{PhysicalParams, Regime};
use crate::spectral::{bracket_t, gamma_symbol, p_symbol, Grid, MhdState, SpectralField, Transformer, C64};

/// `ln Σ exp(lᵢ) vᵢ` for `vᵢ ≥ 0`-dominated sums; `-inf` for an empty or
/// zero sum and NaN if the sum is negative.
#[derive(Debug, Default, Clone, Copy)]
struct LogSum {
    terms: f64,
    top: f64,
    any: bool,
}

impl LogSum {
    fn new() -> Self {
        LogSum {
            terms: 0.0,
            top: f64::NEG_INFINITY,
            any: false,
        }
    }

    fn add(&mut self, log_w: f64, v: f64) {
        if v == 0.0 || log_w == f64::NEG_INFINITY {
            return;
        }
        if !self.any {
            self.top = log_w;
            self.terms = v;
            self.any = true;
        } else if log_w > self.top {
            self.terms = self.terms * (self.top - log_w).exp() + v;
            self.top = log_w;
        } else {
            self.terms += v * (log_w - self.top).exp();
        }
    }

    fn ln(&self, log_scale: f64) -> f64 {
        if !self.any || self.terms == 0.0 {
            f64::NEG_INFINITY
        } else if self.terms < 0.0 {
            f64::NAN
        } else {
            self.top + self.terms.ln() + log_scale
        }
    }
}

/// `(ln E, ln D, ln CK)` of one weighted functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogTriple {
    pub ln_e: f64,
    pub ln_d: f64,
    pub ln_ck: f64,
}

impl LogTriple {
    pub fn e(&self) -> f64 {
        self.ln_e.exp()
    }
    pub fn d(&self) -> f64 {
        self.ln_d.exp()
    }
    pub fn ck(&self) -> f64 {
        self.ln_ck.exp()
    }
}

/// Which pair of unknowns and window a weighted functional uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    /// `(MΩ≠, MJ≠)` with the `χ` mixed term.
    Vorticity,
    /// `(MZ, MQ)` with the `χ̄` mixed term.
    Symmetric,
    /// `(MΩ≠, MJ≠)` without a mixed term.
    Plain,
}

/// Weighted energy, dissipation and CK of the nonzero modes:
/// `E = ½ Σ M²(|a|² + |b|² + Re(c a b̄))` with
/// `c = w (2/β) i(η-kt)/(-p)`, `D = Σ M² p (ν|a|² + μ|b|²)` and
/// `CK = Σ (Γ² + λ^{1/3}|k|^{2/3}) M² (|a|² + |b|²)`.
pub fn weighted_functional(state: &MhdState, t: f64, p: &PhysicalParams, which: Functional) -> LogTriple {
    let g = state.grid();
    let mut e = LogSum::new();
    let mut d = LogSum::new();
    let mut ck = LogSum::new();
    let l3 = p.lambda().cbrt();
    for (i, k, eta) in g.modes() {
        if k == 0 {
            continue;
        }
        let k = k as f64;
        let (mut a, mut b) = (state.omega.coeffs[i], state.j.coeffs[i]);
        if a == C64::new(0.0, 0.0) && b == C64::new(0.0, 0.0) {
            continue;
        }
        let gam = gamma_symbol(k, eta, t);
        let pk = p_symbol(k, eta, t);
        let w = match which {
            Functional::Vorticity => chi_weight(k, eta, t, p.mu),
            Functional::Symmetric => {
                a *= gam;
                b *= gam;
                chibar_weight(k, eta, t, p.nu)
            }
            Functional::Plain => 0.0,
        };
        let c = C64::new(0.0, -w * 2.0 / p.beta * (eta - k * t) / pk);
        let quad = a.norm_sqr() + b.norm_sqr();
        let lm2 = 2.0 * log_m(k, eta, t, p);
        e.add(lm2, 0.5 * (quad + (c * a * b.conj()).re));
        d.add(lm2, pk * (p.nu * a.norm_sqr() + p.mu * b.norm_sqr()));
        ck.add(lm2, (gam * gam + l3 * k.abs().powf(2.0 / 3.0)) * quad);
    }
    let s = g.spectral_measure().ln();
    LogTriple {
        ln_e: e.ln(s),
        ln_d: d.ln(s),
        ln_ck: ck.ln(s),
    }
}

/// Measure turning `Σ_m |ĉ(0, m)|²` into the `L²_Y` norm squared of the
/// `x`-average.
pub fn zero_mode_measure(g: &Grid) -> f64 {
    g.spectral_measure() / (2.0 * PI)
}

/// `(E₀, D₀)`: `H^N_Y` functionals of `U¹₀, B¹₀` plus the `⟨t⟩⁻²`
/// weighted vorticity and current zero modes.
pub fn zero_mode_energy(state: &MhdState, t: f64, p: &PhysicalParams) -> (f64, f64) {
    let g = state.grid();
    let ix = 0;
    let bt2 = bracket_t(t).powi(2);
    let (mut e_vel, mut e_vort, mut d_vel, mut d_vort) = (0.0, 0.0, 0.0, 0.0);
    for iy in 0..g.n_y() {
        let eta = g.eta_of(iy);
        let i = g.index(ix, iy);
        let (w, j) = (state.omega.coeffs[i].norm_sqr(), state.j.coeffs[i].norm_sqr());
        let hw = (1.0 + eta * eta).powi(p.n as i32);
        // |Û¹₀|² = |Ω̂₀|²/η²
        if eta != 0.0 {
            let inv = 1.0 / (eta * eta);
            e_vel += hw * (w + j) * inv;
            d_vel += hw * (p.nu * w + p.mu * j);
        }
        e_vort += hw * (w + j);
        d_vort += hw * eta * eta * (p.nu * w + p.mu * j);
    }
    let m = zero_mode_measure(&g);
    (0.5 * m * (e_vel + e_vort / bt2), m * (d_vel + d_vort / bt2))
}

/// Nonzero-mode `L²` norms of the velocity and magnetic components and
/// their decay-weighted versions `⟨t⟩‖·¹‖`, `⟨t⟩²‖·²‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingNorms {
    pub u1: f64,
    pub u2: f64,
    pub b1: f64,
    pub b2: f64,
    pub weighted_u1: f64,
    pub weighted_u2: f64,
    pub weighted_b1: f64,
    pub weighted_b2: f64,
}

pub fn damping_norms(state: &MhdState, t: f64) -> DampingNorms {
    let d = state.derive(t);
    let u1 = d.u1.norm_sq_nonzero().sqrt();
    let u2 = d.u2.norm_sq_nonzero().sqrt();
    let b1 = d.b1.norm_sq_nonzero().sqrt();
    let b2 = d.b2.norm_sq_nonzero().sqrt();
    let bt = bracket_t(t);
    DampingNorms {
        u1,
        u2,
        b1,
        b2,
        weighted_u1: bt * u1,
        weighted_u2: bt * bt * u2,
        weighted_b1: bt * b1,
        weighted_b2: bt * bt * b2,
    }
}

/// One row of diagnostics. Column order of the CSV output follows the
/// field order here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    /// `(MΩ≠, MJ≠)` functionals with the `χ` mixed term.
    pub ln_e: f64,
    pub e: f64,
    pub ln_d: f64,
    pub d: f64,
    pub ln_ck: f64,
    pub ck: f64,
    pub e0: f64,
    pub d0: f64,
    /// `(MZ, MQ)` functionals with the `χ̄` mixed term.
    pub ln_ebar: f64,
    pub ebar: f64,
    pub ln_dbar: f64,
    pub dbar: f64,
    pub ln_ckbar: f64,
    pub ckbar: f64,
    /// `(MΩ≠, MJ≠)` functionals without a mixed term.
    pub ln_etilde: f64,
    pub etilde: f64,
    pub ln_dtilde: f64,
    pub dtilde: f64,
    pub ln_cktilde: f64,
    pub cktilde: f64,
    pub u1_neq: f64,
    pub u2_neq: f64,
    pub b1_neq: f64,
    pub b2_neq: f64,
    /// Static-frame `H^N` norms of the nonzero modes.
    pub omega_neq_hn: f64,
    pub j_neq_hn: f64,
    /// Moving-frame `H^N` norms of the nonzero modes.
    pub omega_neq_hn_sheared: f64,
    pub j_neq_hn_sheared: f64,
    /// `½(‖u≠‖² + ‖b≠‖²)`, the unweighted nonzero-mode energy.
    pub energy_neq: f64,
    /// `E/(10ε²)`.
    pub ratio_e: f64,
    /// `Ẽ/(1000ε²⟨t⟩²)`.
    pub ratio_etilde: f64,
    /// `E₀/(10ε²)`.
    pub ratio_e0: f64,
}

impl EnergyRecord {
    /// Column names in CSV order.
    pub const COLUMNS: [&'static str; 33] = [
        "t",
        "ln_e",
        "e",
        "ln_d",
        "d",
        "ln_ck",
        "ck",
        "e0",
        "d0",
        "ln_ebar",
        "ebar",
        "ln_dbar",
        "dbar",
        "ln_ckbar",
        "ckbar",
        "ln_etilde",
        "etilde",
        "ln_dtilde",
        "dtilde",
        "ln_cktilde",
        "cktilde",
        "u1_neq",
        "u2_neq",
        "b1_neq",
        "b2_neq",
        "omega_neq_hn",
        "j_neq_hn",
        "omega_neq_hn_sheared",
        "j_neq_hn_sheared",
        "energy_neq",
        "ratio_e",
        "ratio_etilde",
        "ratio_e0",
    ];
}

fn ratio(ln_num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (ln_num - den.ln()).exp()
    } else if ln_num == f64::NEG_INFINITY {
        0.0
    } else {
        f64::INFINITY
    }
}

/// All diagnostics of `state` at `t`.
pub fn record(state: &MhdState, t: f64, p: &PhysicalParams, epsilon: f64) -> EnergyRecord {
    let v = weighted_functional(state, t, p, Functional::Vorticity);
    let s = weighted_functional(state, t, p, Functional::Symmetric);
    let w = weighted_functional(state, t, p, Functional::Plain);
    let (e0, d0) = zero_mode_energy(state, t, p);
    let dn = damping_norms(state, t);
    let n = p.n;
    let eps2 = epsilon * epsilon;
    let bt2 = bracket_t(t).powi(2);
    EnergyRecord {
        t,
        ln_e: v.ln_e,
        e: v.e(),
        ln_d: v.ln_d,
        d: v.d(),
        ln_ck: v.ln_ck,
        ck: v.ck(),
        e0,
        d0,
        ln_ebar: s.ln_e,
        ebar: s.e(),
        ln_dbar: s.ln_d,
        dbar: s.d(),
        ln_ckbar: s.ln_ck,
        ckbar: s.ck(),
        ln_etilde: w.ln_e,
        etilde: w.e(),
        ln_dtilde: w.ln_d,
        dtilde: w.d(),
        ln_cktilde: w.ln_ck,
        cktilde: w.ck(),
        u1_neq: dn.u1,
        u2_neq: dn.u2,
        b1_neq: dn.b1,
        b2_neq: dn.b2,
        omega_neq_hn: state.omega.hn_norm_sq(n, true).sqrt(),
        j_neq_hn: state.j.hn_norm_sq(n, true).sqrt(),
        omega_neq_hn_sheared: state.omega.hn_norm_sq_sheared(n, t, true).sqrt(),
        j_neq_hn_sheared: state.j.hn_norm_sq_sheared(n, t, true).sqrt(),
        energy_neq: 0.5 * (dn.u1 * dn.u1 + dn.u2 * dn.u2 + dn.b1 * dn.b1 + dn.b2 * dn.b2),
        ratio_e: ratio(v.ln_e, 10.0 * eps2),
        ratio_etilde: ratio(w.ln_e, 1000.0 * eps2 * bt2),
        ratio_e0: ratio(e0.ln(), 10.0 * eps2),
    }
}

/// One running inequality `F(t) + κ∫(G) ≤ bound(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCheck {
    pub name: String,
    /// Largest `(F + κ∫G)/bound` along the records.
    pub max_ratio: f64,
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub regime: Regime,
    pub epsilon: f64,
    pub checks: Vec<BootstrapCheck>,
    /// Earliest violation time over all checks.
    pub first_violation: Option<f64>,
}

impl BootstrapReport {
    pub fn violated(&self) -> bool {
        self.first_violation.is_some()
    }
}

fn running_check(
    name: &str,
    records: &[EnergyRecord],
    kappa: f64,
    f: impl Fn(&EnergyRecord) -> f64,
    g: impl Fn(&EnergyRecord) -> f64,
    bound: impl Fn(f64) -> f64,
) -> BootstrapCheck {
    let mut integral = 0.0;
    let mut max_ratio = 0.0f64;
    let mut first = None;
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            let q = &records[i - 1];
            integral += 0.5 * (r.t - q.t) * (g(q) + g(r));
        }
        let lhs = f(r) + kappa * integral;
        let b = bound(r.t);
        let ratio = if b > 0.0 {
            lhs / b
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 && first.is_none() {
            first = Some(r.t);
        }
    }
    BootstrapCheck {
        name: name.into(),
        max_ratio,
        first_violation: first,
    }
}

/// Running bootstrap inequalities of `regime` with trapezoidal time
/// integrals from the first record.
pub fn bootstrap_monitor(records: &[EnergyRecord], epsilon: f64, regime: Regime, beta: f64) -> BootstrapReport {
    let kappa = 1.0 / (100.0 * beta.abs());
    let e2 = epsilon * epsilon;
    let ten = move |_t: f64| 10.0 * e2;
    let mut checks = Vec::new();
    match regime {
        Regime::NuLeMu3 => {
            checks.push(running_check("nonzero_energy", records, kappa, |r| r.e, |r| r.d + r.ck, ten));
        }
        _ => {
            checks.push(running_check("symmetric_energy", records, kappa, |r| r.ebar, |r| r.dbar + r.ckbar, ten));
            checks.push(running_check(
                "vorticity_energy",
                records,
                kappa,
                |r| r.etilde,
                |r| r.dtilde + r.cktilde,
                move |t| 1000.0 * e2 * bracket_t(t).powi(2),
            ));
        }
    }
    checks.push(running_check("zero_mode_energy", records, kappa, |r| r.e0, |r| r.d0, ten));
    let first_violation = checks
        .iter()
        .filter_map(|c| c.first_violation)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))));
    BootstrapReport {
        regime,
        epsilon,
        checks,
        first_violation,
    }
}

/// Pairings of the zero-mode forcing, each `|⟨⟨∂_Y⟩^N a₀, ⟨∂_Y⟩^N b₀⟩|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RTerms {
    pub u2u1_dyu1: f64,
    pub b2b1_dyu1: f64,
    pub u2b1_dyb1: f64,
    pub b2u1_dyb1: f64,
    pub u2omega_dyomega: f64,
    pub b2j_dyomega: f64,
    pub u2j_dyj: f64,
    pub b2omega_dyj: f64,
    pub b1_stretch_j: f64,
    pub u1_stretch_j: f64,
}

impl RTerms {
    pub fn total(&self) -> f64 {
        self.u2u1_dyu1
            + self.b2b1_dyu1
            + self.u2b1_dyb1
            + self.b2u1_dyb1
            + self.u2omega_dyomega
            + self.b2j_dyomega
            + self.u2j_dyj
            + self.b2omega_dyj
            + self.b1_stretch_j
            + self.u1_stretch_j
    }
}

fn nonzero_part(f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    for (i, k, _) in f.grid.modes() {
        if k == 0 {
            out.coeffs[i] = C64::new(0.0, 0.0);
        }
    }
    out
}

/// `H^N_Y` pairing of the `k = 0` rows of two spectra.
fn zero_pairing(a: &SpectralField, b: &SpectralField, n: u32) -> f64 {
    let g = a.grid;
    let mut s = C64::new(0.0, 0.0);
    for iy in 0..g.n_y() {
        let eta = g.eta_of(iy);
        let i = g.index(0, iy);
        s += (1.0 + eta * eta).powi(n as i32) * a.coeffs[i] * b.coeffs[i].conj();
    }
    (zero_mode_measure(&g) * s).norm()
}

/// Evaluates every pairing of the zero-mode forcing for `state` at `t`.
/// Products use the `2/3`-truncated nonzero parts of the factors.
pub fn r_terms(state: &MhdState, t: f64, p: &PhysicalParams) -> crate::Result<RTerms> {
    let g = state.grid();
    let n = p.n;
    let mask = g.dealias_mask(2.0 / 3.0);
    let mut fft = Transformer::new(g);
    let mut masked = state.clone();
    masked.omega.apply_mask(&mask);
    masked.j.apply_mask(&mask);
    let d = masked.derive(t);
    let i = C64::new(0.0, 1.0);
    let u1 = nonzero_part(&d.u1);
    let u2 = nonzero_part(&d.u2);
    let b1 = nonzero_part(&d.b1);
    let b2 = nonzero_part(&d.b2);
    let w = nonzero_part(&masked.omega);
    let j = nonzero_part(&masked.j);
    let one_minus = |k: f64, eta: f64| {
        let pk = p_symbol(k, eta, t);
        if pk == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(1.0 - 2.0 * k * k / pk, 0.0)
        }
    };
    let dx_b1 = b1.map_symbol(|k, _| 2.0 * i * k);
    let dx_u1 = u1.map_symbol(|k, _| 2.0 * i * k);
    let w_str = w.map_symbol(one_minus);
    let j_str = j.map_symbol(one_minus);
    let mut product = |a: &SpectralField, b: &SpectralField| -> crate::Result<SpectralField> {
        let (x, y) = fft.inverse_pair(a, b)?;
        let prod: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        fft.forward(&prod, t)
    };
    let dy = |f: &SpectralField| f.map_symbol(|_, eta| i * eta);
    let dyu10 = dy(&d.u1);
    let dyb10 = dy(&d.b1);
    let dyw0 = dy(&masked.omega);
    let dyj0 = dy(&masked.j);
    let bt2 = bracket_t(t).powi(2);
    Ok(RTerms {
        u2u1_dyu1: zero_pairing(&product(&u2, &u1)?, &dyu10, n),
        b2b1_dyu1: zero_pairing(&product(&b2, &b1)?, &dyu10, n),
        u2b1_dyb1: zero_pairing(&product(&u2, &b1)?, &dyb10, n),
        b2u1_dyb1: zero_pairing(&product(&b2, &u1)?, &dyb10, n),
        u2omega_dyomega: zero_pairing(&product(&u2, &w)?, &dyw0, n) / bt2,
        b2j_dyomega: zero_pairing(&product(&b2, &j)?, &dyw0, n) / bt2,
        u2j_dyj: zero_pairing(&product(&u2, &j)?, &dyj0, n) / bt2,
        b2omega_dyj: zero_pairing(&product(&b2, &w)?, &dyj0, n) / bt2,
        b1_stretch_j: zero_pairing(&product(&dx_b1, &w_str)?, &masked.j, n) / bt2,
        u1_stretch_j: zero_pairing(&product(&dx_u1, &j_str)?, &masked.j, n) / bt2,
    })
}
