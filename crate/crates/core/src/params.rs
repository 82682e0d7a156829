//! Physical parameters, multiplier constants and regime classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three (ν, μ) regimes with distinct stability mechanisms.
///
/// Boundary ties go to the variant listed first: `ν = μ³` is
/// [`Regime::NuLeMu3`], `ν = μ^{1/3}` is [`Regime::Mu3LeNuLeMu13`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// ν ≤ μ³
    NuLeMu3,
    /// μ³ < ν ≤ μ^{1/3}
    Mu3LeNuLeMu13,
    /// μ^{1/3} < ν
    Mu13LeNu,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::NuLeMu3, Regime::Mu3LeNuLeMu13, Regime::Mu13LeNu];

    pub fn classify(nu: f64, mu: f64) -> Regime {
        if nu <= mu.powi(3) {
            Regime::NuLeMu3
        } else if nu <= mu.cbrt() {
            Regime::Mu3LeNuLeMu13
        } else {
            Regime::Mu13LeNu
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Regime::NuLeMu3 => "NU_LE_MU3",
            Regime::Mu3LeNuLeMu13 => "MU3_LE_NU_LE_MU13",
            Regime::Mu13LeNu => "MU13_LE_NU",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Regime> {
        Regime::ALL.into_iter().find(|r| r.tag().eq_ignore_ascii_case(tag))
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Viscosity, resistivity, background field strength and the multiplier
/// constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ParamsSpec")]
pub struct PhysicalParams {
    pub nu: f64,
    pub mu: f64,
    pub beta: f64,
    /// Sobolev weight exponent of `⟨k,η⟩^N`.
    pub n: u32,
    pub delta0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// Config form of [`PhysicalParams`]: omitted constants take the
/// defaults of [`PhysicalParams::new`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSpec {
    nu: f64,
    mu: f64,
    beta: f64,
    n: Option<u32>,
    delta0: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    c3: Option<f64>,
    c4: Option<f64>,
}

impl From<ParamsSpec> for PhysicalParams {
    fn from(s: ParamsSpec) -> Self {
        let d = PhysicalParams::new(s.nu, s.mu, s.beta);
        PhysicalParams {
            n: s.n.unwrap_or(d.n),
            delta0: s.delta0.unwrap_or(d.delta0),
            c1: s.c1.unwrap_or(d.c1),
            c2: s.c2.unwrap_or(d.c2),
            c3: s.c3.unwrap_or(d.c3),
            c4: s.c4.unwrap_or(d.c4),
            ..d
        }
    }
}

impl PhysicalParams {
    /// Parameters with the smallest admissible default constants:
    /// `C₂ = 3001`, `C₁ = 1000.4·C₂`, `C₃ = 1.01·C₁/(|β|−½)`, `C₄ = 10`,
    /// `δ₀ = 1/(200|β|)`, `N = 4`.
    pub fn new(nu: f64, mu: f64, beta: f64) -> Self {
        let c2 = 3001.0;
        let c1 = 3.002e6;
        let ab = beta.abs();
        let c3 = if ab > 0.5 { 1.01 * c1 / (ab - 0.5) } else { 2.02 * c1 };
        let delta0 = if ab > 0.5 { 1.0 / (200.0 * ab) } else { 0.01 };
        PhysicalParams {
            nu,
            mu,
            beta,
            n: 4,
            delta0,
            c1,
            c2,
            c3,
            c4: 10.0,
        }
    }

    pub fn with_n(mut self, n: u32) -> Self {
        self.n = n;
        self
    }

    /// `λ = min(ν, μ)`.
    pub fn lambda(&self) -> f64 {
        self.nu.min(self.mu)
    }

    /// `α = ν μ^{-1/3}`.
    pub fn alpha(&self) -> f64 {
        self.nu / self.mu.cbrt()
    }

    pub fn regime(&self) -> Regime {
        Regime::classify(self.nu, self.mu)
    }

    /// Checks every constraint on the parameters. Errors carry the field
    /// path under `prefix` (e.g. `params`).
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(field(name), format!("must be finite and > 0, got {v}")))
            }
        };
        positive("nu", self.nu)?;
        positive("mu", self.mu)?;
        if !self.beta.is_finite() {
            return Err(Error::validation(field("beta"), "must be finite"));
        }
        if self.n < 4 {
            return Err(Error::validation(field("n"), format!("must be >= 4, got {}", self.n)));
        }
        let ab = self.beta.abs();
        if !(self.delta0 > 0.0) || (ab > 0.0 && self.delta0 > 1.0 / (100.0 * ab)) {
            return Err(Error::validation(
                field("delta0"),
                format!("must lie in (0, 1/(100|beta|)], got {}", self.delta0),
            ));
        }
        if !(self.c2 > 3000.0) {
            return Err(Error::validation(field("c2"), format!("C2 must exceed 3000, got {}", self.c2)));
        }
        if !(self.c1 > 1000.0 * self.c2) {
            return Err(Error::validation(
                field("c1"),
                format!("C1 must exceed 1000*C2 = {}, got {}", 1000.0 * self.c2, self.c1),
            ));
        }
        if ab > 0.5 && !(self.c3 > self.c1 / (ab - 0.5)) {
            return Err(Error::validation(
                field("c3"),
                format!("C3 must exceed C1/(|beta|-1/2) = {}, got {}", self.c1 / (ab - 0.5), self.c3),
            ));
        }
        positive("c4", self.c4)?;
        Ok(())
    }

    /// Rejects `|β| ≤ 1/2`, where the energy functionals lose coercivity.
    pub fn require_coercive(&self) -> Result<()> {
        if self.beta.abs() > 0.5 {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "coercivity requires |beta| > 1/2, got beta = {}",
                self.beta
            )))
        }
    }
}
