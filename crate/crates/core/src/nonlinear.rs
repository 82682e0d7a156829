//! Pseudospectral integration of the full perturbation system in the
//! moving frame.
//!
//! Each step is a Lawson (integrating-factor) RK4: the linear coupling,
//! stretching and diffusion of every mode are carried by its exact
//! propagator over half steps, and `NL^Ω`, `NL^J` are explicit. Products
//! are formed in physical space from sharply truncated factors.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, EnergyRecord};
use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::propagator::{mat_vec, transfer_matrix_magnus, Controls, Mat2, ModeCoefficients, Variant};
use crate::spectral::{p_symbol, Grid, MhdState, SpectralField, Transformer, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Which field an initial profile populates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Omega,
    J,
    #[default]
    Both,
}

/// Named initial-data generators. Every profile is rescaled so that
/// `‖ω‖²_{H^N} + ‖j‖²_{H^N} = ε²` in the static frame at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    /// `cos(kX + ηY)` with `η = h m`.
    SingleMode {
        k: i64,
        m: i64,
        #[serde(default)]
        target: Target,
    },
    /// `cos(kX) exp(-Y²/(2 width²))`.
    Gaussian {
        k: i64,
        width: f64,
        #[serde(default)]
        target: Target,
    },
    /// Independent uniform coefficients on `|k| ≤ k_band`, `|m| ≤ m_band`,
    /// drawn from the config seed.
    Random {
        k_band: i64,
        m_band: i64,
        #[serde(default)]
        target: Target,
    },
}

impl InitialProfile {
    fn target(&self) -> Target {
        match self {
            InitialProfile::SingleMode { target, .. }
            | InitialProfile::Gaussian { target, .. }
            | InitialProfile::Random { target, .. } => *target,
        }
    }

    pub fn validate(&self, grid: &Grid, prefix: &str) -> Result<()> {
        let kc = grid.k_max as i64;
        let mc = (grid.m_y / 2) as i64 - 1;
        match *self {
            InitialProfile::SingleMode { k, m, .. } => {
                if k.abs() > kc {
                    return Err(Error::validation(format!("{prefix}.k"), format!("|k| must be ≤ K_max = {kc}")));
                }
                if m.abs() > mc {
                    return Err(Error::validation(format!("{prefix}.m"), format!("|m| must be ≤ {mc}")));
                }
                if k == 0 && m == 0 {
                    return Err(Error::validation(prefix, "the (0,0) mode carries no velocity"));
                }
            }
            InitialProfile::Gaussian { k, width, .. } => {
                if k.abs() > kc {
                    return Err(Error::validation(format!("{prefix}.k"), format!("|k| must be ≤ K_max = {kc}")));
                }
                if !(width > 0.0 && width.is_finite()) {
                    return Err(Error::validation(format!("{prefix}.width"), "must be positive"));
                }
            }
            InitialProfile::Random { k_band, m_band, .. } => {
                if k_band < 0 || k_band > kc {
                    return Err(Error::validation(format!("{prefix}.k_band"), format!("must lie in [0, {kc}]")));
                }
                if m_band < 0 || m_band > mc {
                    return Err(Error::validation(format!("{prefix}.m_band"), format!("must lie in [0, {mc}]")));
                }
                if k_band == 0 && m_band == 0 {
                    return Err(Error::validation(prefix, "band contains only the (0,0) mode"));
                }
            }
        }
        Ok(())
    }
}

/// Propagators with `‖Φ‖ ≤ e^{-40}` over a step are replaced by zero.
const NEGLIGIBLE: f64 = 40.0;

/// Solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub grid: Grid,
    pub params: PhysicalParams,
    pub dt_initial: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    pub epsilon: f64,
    pub initial_profile: InitialProfile,
    #[serde(default)]
    pub seed: u64,
    /// Set false to drop `NL^Ω`, `NL^J` (pure linear evolution).
    #[serde(default = "default_true")]
    pub nonlinear: bool,
    /// Freeze every moving-frame symbol at `t = 0` and drop stretching.
    #[serde(default)]
    pub frozen_frame: bool,
    /// Advective Courant number bounding the explicit part.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Reject configurations whose initial support violates the grid's
    /// frequency budget.
    #[serde(default = "default_true")]
    pub enforce_budget: bool,
    /// Local tolerance of the per-mode propagators.
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

fn default_dealias() -> f64 {
    2.0 / 3.0
}
fn default_stride() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_cfl() -> f64 {
    0.5
}
fn default_rtol() -> f64 {
    1e-10
}

impl SolverConfig {
    /// Defaults around a grid, parameters and an initial profile;
    /// `t_final` is `min(grid.t_final, 20 λ^{-1/3})`.
    pub fn new(grid: Grid, params: PhysicalParams, epsilon: f64, initial_profile: InitialProfile) -> Self {
        let t_final = grid.t_final.min(20.0 / params.lambda().cbrt());
        SolverConfig {
            grid,
            params,
            dt_initial: 0.05,
            dealias_fraction: default_dealias(),
            t_final,
            output_stride: default_stride(),
            epsilon,
            initial_profile,
            seed: 0,
            nonlinear: true,
            frozen_frame: false,
            cfl: default_cfl(),
            enforce_budget: true,
            rtol: default_rtol(),
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let f = |name: &str| {
            if prefix.is_empty() {
                name.to_string()
            } else {
                format!("{prefix}.{name}")
            }
        };
        self.grid.validate(&f("grid"))?;
        self.params.validate(&f("params"))?;
        if !(self.dt_initial > 0.0 && self.dt_initial.is_finite()) {
            return Err(Error::validation(f("dt_initial"), "must be positive"));
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(Error::validation(f("dealias_fraction"), "must lie in (0, 1]"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::validation(f("t_final"), "must be positive"));
        }
        if self.t_final > self.grid.t_final * (1.0 + 1e-12) {
            return Err(Error::validation(
                f("t_final"),
                format!("exceeds the grid horizon grid.t_final = {}", self.grid.t_final),
            ));
        }
        if self.output_stride == 0 {
            return Err(Error::validation(f("output_stride"), "must be at least 1"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation(f("epsilon"), "must be nonnegative"));
        }
        if !(self.cfl > 0.0 && self.cfl.is_finite()) {
            return Err(Error::validation(f("cfl"), "must be positive"));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::validation(f("rtol"), "must lie in (0, 1)"));
        }
        self.initial_profile.validate(&self.grid, &f("initial_profile"))
    }

    fn controls(&self) -> Controls {
        Controls {
            rtol: self.rtol,
            negligible: NEGLIGIBLE,
            ..Controls::default()
        }
    }
}

/// Builds the initial state for `config`, normalized to `H^N` norm `ε`.
pub fn initial_state(config: &SolverConfig) -> Result<MhdState> {
    let g = config.grid;
    let mut omega = SpectralField::zeros(g, 0.0);
    match config.initial_profile {
        InitialProfile::SingleMode { k, m, .. } => {
            omega.set_real_pair(k, m, C64::new(0.5, 0.0));
        }
        InitialProfile::Gaussian { k, width, .. } => {
            let mut values = vec![0.0; g.len()];
            for ix in 0..g.n_x() {
                for iy in 0..g.n_y() {
                    let y = g.y_coord(iy);
                    values[g.index(ix, iy)] =
                        (k as f64 * g.x_coord(ix)).cos() * (-0.5 * y * y / (width * width)).exp();
                }
            }
            omega = Transformer::new(g).forward(&values, 0.0)?;
        }
        InitialProfile::Random { k_band, m_band, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for k in 0..=k_band {
                for m in -m_band..=m_band {
                    if k == 0 && m <= 0 {
                        continue;
                    }
                    let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    omega.set_real_pair(k, m, v);
                }
            }
        }
    }
    omega.apply_mask(&g.dealias_mask(config.dealias_fraction));
    let mut state = MhdState {
        omega: omega.clone(),
        j: omega,
    };
    match config.initial_profile.target() {
        Target::Omega => state.j = SpectralField::zeros(g, 0.0),
        Target::J => state.omega = SpectralField::zeros(g, 0.0),
        Target::Both => {}
    }
    let n = config.params.n;
    let norm = (state.omega.hn_norm_sq(n, false) + state.j.hn_norm_sq(n, false)).sqrt();
    if norm == 0.0 {
        return Err(Error::validation(
            "initial_profile",
            "profile vanishes after dealiasing on this grid",
        ));
    }
    let s = config.epsilon / norm;
    state.omega.scale(s);
    state.j.scale(s);
    Ok(state)
}

/// Evaluator of `(NL^Ω, NL^J)` with cached FFT plans and dealias mask.
pub struct Nonlinearity {
    grid: Grid,
    fft: Transformer,
    mask: Vec<bool>,
    /// Symbols are evaluated at this time when set.
    pub frozen_time: Option<f64>,
    last_rate: f64,
}

impl Nonlinearity {
    pub fn new(grid: Grid, dealias_fraction: f64) -> Self {
        Nonlinearity {
            grid,
            fft: Transformer::new(grid),
            mask: grid.dealias_mask(dealias_fraction),
            frozen_time: None,
            last_rate: 0.0,
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Advective rate `max|U¹ - tU²| k_c + max|U²| η_c` (and the same for
    /// `B`) seen by the last evaluation.
    pub fn last_rate(&self) -> f64 {
        self.last_rate
    }

    /// `NL^Ω`, `NL^J` of `(Ω, J)` at time `t`, truncated to the mask.
    pub fn eval(&mut self, omega: &[C64], j: &[C64], t: f64) -> Result<(Vec<C64>, Vec<C64>)> {
        let g = self.grid;
        let ts = self.frozen_time.unwrap_or(t);
        let n = g.len();
        if omega.len() != n || j.len() != n {
            return Err(Error::GridMismatch("state length differs from the grid".into()));
        }
        let mut f: Vec<Vec<C64>> = vec![vec![ZERO; n]; 12];
        for (i, k, eta) in g.modes() {
            if !self.mask[i] {
                continue;
            }
            let k = k as f64;
            let s = eta - k * ts;
            let p = p_symbol(k, eta, ts);
            let (w, c) = (omega[i], j[i]);
            let (psi, phi) = if p == 0.0 { (ZERO, ZERO) } else { (-w / p, -c / p) };
            f[0][i] = -I * s * psi; // U¹
            f[1][i] = I * k * psi; // U²
            f[2][i] = -I * s * phi; // B¹
            f[3][i] = I * k * phi; // B²
            f[4][i] = I * k * w; // ∂_X Ω
            f[5][i] = I * s * w; // ∂_Y^L Ω
            f[6][i] = I * k * c; // ∂_X J
            f[7][i] = I * s * c; // ∂_Y^L J
            f[8][i] = -k * s * phi; // ∂_XY^L Φ
            f[9][i] = -k * s * psi; // ∂_XY^L Ψ
            f[10][i] = w + 2.0 * k * k * psi; // Ω - 2∂_XX Ψ
            f[11][i] = c + 2.0 * k * k * phi; // J - 2∂_XX Φ
        }
        let mut phys: Vec<Vec<f64>> = Vec::with_capacity(12);
        for pair in f.chunks(2) {
            let a = SpectralField::from_coeffs(g, pair[0].clone(), ts)?;
            let b = SpectralField::from_coeffs(g, pair[1].clone(), ts)?;
            let (x, y) = self.fft.inverse_pair(&a, &b)?;
            phys.push(x);
            phys.push(y);
        }
        let [u1, u2, b1, b2, wx, wy, jx, jy, phxy, psxy, wo, wj] = &phys[..] else {
            unreachable!()
        };
        let mut nlo = vec![0.0; n];
        let mut nlj = vec![0.0; n];
        let (mut su, mut sv, mut sb, mut sc) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            nlo[i] = -(u1[i] * wx[i] + u2[i] * wy[i]) + (b1[i] * jx[i] + b2[i] * jy[i]);
            nlj[i] = -(u1[i] * jx[i] + u2[i] * jy[i])
                + (b1[i] * wx[i] + b2[i] * wy[i])
                + 2.0 * phxy[i] * wo[i]
                - 2.0 * psxy[i] * wj[i];
            su = su.max((u1[i] - ts * u2[i]).abs());
            sv = sv.max(u2[i].abs());
            sb = sb.max((b1[i] - ts * b2[i]).abs());
            sc = sc.max(b2[i].abs());
        }
        let kc = self.cutoff_k();
        let ec = self.cutoff_eta();
        self.last_rate = (su + sb) * kc + (sv + sc) * ec;
        let (mut a, mut b) = self.fft.forward_pair(&nlo, &nlj, ts)?;
        a.apply_mask(&self.mask);
        b.apply_mask(&self.mask);
        Ok((a.coeffs, b.coeffs))
    }

    fn cutoff_k(&self) -> f64 {
        let g = self.grid;
        g.modes()
            .filter(|&(i, _, _)| self.mask[i])
            .map(|(_, k, _)| k.abs() as f64)
            .fold(0.0, f64::max)
    }

    fn cutoff_eta(&self) -> f64 {
        let g = self.grid;
        g.modes()
            .filter(|&(i, _, _)| self.mask[i])
            .map(|(_, _, e)| e.abs())
            .fold(0.0, f64::max)
    }
}

/// One-shot `(NL^Ω, NL^J)` of `state` at `t` with dealias fraction
/// `fraction`.
pub fn compute_nonlinear(state: &MhdState, t: f64, fraction: f64) -> Result<(SpectralField, SpectralField)> {
    let g = state.grid();
    let mut nl = Nonlinearity::new(g, fraction);
    let (a, b) = nl.eval(&state.omega.coeffs, &state.j.coeffs, t)?;
    Ok((
        SpectralField::from_coeffs(g, a, t)?,
        SpectralField::from_coeffs(g, b, t)?,
    ))
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub t: f64,
    pub dt: f64,
    /// Advective rate at the start of the step.
    pub rate: f64,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted { t: f64, detail: String },
}

/// Output of [`Solver::run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EnergyRecord>,
    pub steps: usize,
    pub status: RunStatus,
}

/// Time integrator for one configuration.
pub struct Solver {
    pub config: SolverConfig,
    pub state: MhdState,
    pub t: f64,
    pub steps: usize,
    nl: Nonlinearity,
    /// Canonical member of each conjugate pair inside the mask, with its
    /// partner index.
    pairs: Vec<(usize, usize)>,
    ctl: Controls,
    frozen_cache: Option<(f64, Vec<Mat2>)>,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate("")?;
        let state = initial_state(&config)?;
        if config.enforce_budget {
            let (ks, es) = support(&state);
            config.grid.check_budget(es, ks)?;
        }
        Ok(Self::from_parts(config, state, 0.0, 0))
    }

    /// Resumes from a snapshot taken under a compatible configuration.
    pub fn restart(config: SolverConfig, snap: Snapshot) -> Result<Self> {
        config.validate("")?;
        if snap.header.grid != config.grid {
            return Err(Error::GridMismatch("snapshot grid differs from the configuration".into()));
        }
        if snap.header.params != config.params {
            return Err(Error::validation("params", "snapshot parameters differ from the configuration"));
        }
        Ok(Self::from_parts(config, snap.state, snap.header.t, snap.header.step))
    }

    fn from_parts(config: SolverConfig, mut state: MhdState, t: f64, steps: usize) -> Self {
        let g = config.grid;
        let mut nl = Nonlinearity::new(g, config.dealias_fraction);
        if config.frozen_frame {
            nl.frozen_time = Some(0.0);
        }
        let mask = nl.mask().to_vec();
        state.omega.apply_mask(&mask);
        state.j.apply_mask(&mask);
        state.set_frame_time(t);
        let mut pairs = Vec::new();
        for ix in 0..g.n_x() {
            for iy in 0..g.n_y() {
                let a = g.index(ix, iy);
                let b = g.mirror(ix, iy);
                if mask[a] && a <= b {
                    pairs.push((a, b));
                }
            }
        }
        let ctl = config.controls();
        Solver {
            config,
            state,
            t,
            steps,
            nl,
            pairs,
            ctl,
            frozen_cache: None,
        }
    }

    fn coefficients(&self, k: f64, eta: f64) -> ModeCoefficients {
        let p = &self.config.params;
        ModeCoefficients {
            k,
            eta,
            nu: p.nu,
            mu: p.mu,
            beta: p.beta,
            variant: Variant::OmegaJ,
            stretching: !self.config.frozen_frame,
            frozen_time: if self.config.frozen_frame { Some(0.0) } else { None },
        }
    }

    /// Propagators `Φ(t1, t0)` for every lattice mode (zero off the mask).
    pub fn propagators(&self, t0: f64, t1: f64) -> Result<Vec<Mat2>> {
        let g = self.config.grid;
        let ctl = Controls {
            h_init: (t1 - t0).max(1e-12),
            ..self.ctl
        };
        let job = |&(a, _): &(usize, usize)| -> Result<Mat2> {
            let ix = a / g.n_y();
            let iy = a % g.n_y();
            let coef = self.coefficients(g.k_of(ix) as f64, g.eta_of(iy));
            Ok(transfer_matrix_magnus(&coef, t0, t1, &ctl)?.to_matrix())
        };
        #[cfg(feature = "parallel")]
        let mats: Vec<Result<Mat2>> = {
            use rayon::prelude::*;
            self.pairs.par_iter().map(job).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let mats: Vec<Result<Mat2>> = self.pairs.iter().map(job).collect();
        let mut out = vec![[[ZERO; 2]; 2]; g.len()];
        for (&(a, b), m) in self.pairs.iter().zip(mats) {
            let m = m?;
            out[a] = m;
            if b != a {
                out[b] = m.map(|r| r.map(|c| c.conj()));
            }
        }
        Ok(out)
    }

    fn half_propagators(&mut self, t: f64, dt: f64) -> Result<(Vec<Mat2>, Vec<Mat2>)> {
        if self.config.frozen_frame {
            let h = 0.5 * dt;
            let hit = matches!(&self.frozen_cache, Some((c, _)) if *c == h);
            if !hit {
                let m = self.propagators(0.0, h)?;
                self.frozen_cache = Some((h, m));
            }
            let m = self.frozen_cache.as_ref().map(|(_, m)| m.clone()).unwrap_or_default();
            return Ok((m.clone(), m));
        }
        let p1 = self.propagators(t, t + 0.5 * dt)?;
        let p2 = self.propagators(t + 0.5 * dt, t + dt)?;
        Ok((p1, p2))
    }

    fn nl(&mut self, y: &[[C64; 2]], t: f64) -> Result<Vec<[C64; 2]>> {
        let w: Vec<C64> = y.iter().map(|v| v[0]).collect();
        let c: Vec<C64> = y.iter().map(|v| v[1]).collect();
        let (a, b) = self.nl.eval(&w, &c, t)?;
        Ok(a.into_iter().zip(b).map(|(x, y)| [x, y]).collect())
    }

    /// Largest step allowed by the advective bound at the current state.
    pub fn stable_dt(&mut self) -> Result<f64> {
        if !self.config.nonlinear {
            return Ok(self.config.dt_initial);
        }
        let y = self.packed();
        self.nl(&y, self.t)?;
        Ok(self.dt_from_rate(self.nl.last_rate()))
    }

    fn dt_from_rate(&self, rate: f64) -> f64 {
        if rate > 0.0 {
            self.config.dt_initial.min(self.config.cfl / rate)
        } else {
            self.config.dt_initial
        }
    }

    fn packed(&self) -> Vec<[C64; 2]> {
        self.state
            .omega
            .coeffs
            .iter()
            .zip(&self.state.j.coeffs)
            .map(|(&a, &b)| [a, b])
            .collect()
    }

    fn unpack(&mut self, y: &[[C64; 2]], t: f64) {
        for (i, v) in y.iter().enumerate() {
            self.state.omega.coeffs[i] = v[0];
            self.state.j.coeffs[i] = v[1];
        }
        self.state.set_frame_time(t);
    }

    /// Advances by at most `dt_max`, reduced by the advective bound.
    pub fn step(&mut self, dt_max: f64) -> Result<StepStats> {
        let t = self.t;
        let y = self.packed();
        let (k1, rate) = if self.config.nonlinear {
            let k1 = self.nl(&y, t)?;
            (Some(k1), self.nl.last_rate())
        } else {
            (None, 0.0)
        };
        let dt = dt_max.min(self.dt_from_rate(rate));
        let (p1, p2) = self.half_propagators(t, dt)?;
        let apply = |m: &[Mat2], v: &[[C64; 2]]| -> Vec<[C64; 2]> {
            m.iter().zip(v).map(|(m, v)| mat_vec(m, v)).collect()
        };
        let axpy = |a: &[[C64; 2]], s: f64, b: &[[C64; 2]]| -> Vec<[C64; 2]> {
            a.iter().zip(b).map(|(x, y)| [x[0] + s * y[0], x[1] + s * y[1]]).collect()
        };
        let p1y = apply(&p1, &y);
        let next = match k1 {
            None => apply(&p2, &p1y),
            Some(k1) => {
                let h = dt;
                let a2 = apply(&p1, &axpy(&y, 0.5 * h, &k1));
                let k2 = self.nl(&a2, t + 0.5 * h)?;
                let a3 = axpy(&p1y, 0.5 * h, &k2);
                let k3 = self.nl(&a3, t + 0.5 * h)?;
                let a4 = apply(&p2, &axpy(&p1y, h, &k3));
                let k4 = self.nl(&a4, t + h)?;
                let mut inner = axpy(&p1y, h / 6.0, &apply(&p1, &k1));
                inner = axpy(&inner, h / 3.0, &k2);
                inner = axpy(&inner, h / 3.0, &k3);
                axpy(&apply(&p2, &inner), h / 6.0, &k4)
            }
        };
        let finite = next
            .iter()
            .all(|v| v.iter().all(|c| c.re.is_finite() && c.im.is_finite() && c.norm_sqr() < 1e200));
        if !finite {
            return Err(Error::NumericalAbort {
                t: t + dt,
                detail: "non-finite or overflowing coefficients after a step".into(),
            });
        }
        self.t = t + dt;
        self.steps += 1;
        self.unpack(&next, self.t);
        Ok(StepStats { t: self.t, dt, rate })
    }

    pub fn record(&self) -> EnergyRecord {
        diagnostics::record(&self.state, self.t, &self.config.params, self.config.epsilon)
    }

    /// Integrates to `config.t_final`, recording every `output_stride`
    /// steps and at the end. A numerical abort ends the run with the
    /// records gathered so far.
    pub fn run(&mut self) -> Result<RunOutput> {
        self.run_with(|_, _| Ok(()))
    }

    /// [`Solver::run`] with a hook called after every step.
    pub fn run_with(&mut self, mut hook: impl FnMut(&Solver, &StepStats) -> Result<()>) -> Result<RunOutput> {
        let t_final = self.config.t_final;
        let mut records = vec![self.record()];
        let mut taken = 0usize;
        let status = loop {
            if self.t >= t_final * (1.0 - 1e-14) {
                break RunStatus::Completed;
            }
            let remaining = t_final - self.t;
            let dt = self.config.dt_initial.min(remaining);
            match self.step(dt) {
                Ok(stats) => {
                    taken += 1;
                    let last = self.t >= t_final * (1.0 - 1e-14);
                    if taken % self.config.output_stride == 0 || last {
                        records.push(self.record());
                    }
                    hook(self, &stats)?;
                }
                Err(Error::NumericalAbort { t, detail }) => {
                    break RunStatus::Aborted { t, detail };
                }
                Err(e) => return Err(e),
            }
        };
        Ok(RunOutput {
            records,
            steps: taken,
            status,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            header: SnapshotHeader {
                grid: self.config.grid,
                params: self.config.params.clone(),
                t: self.t,
                step: self.steps,
            },
            state: self.state.clone(),
        }
    }
}

/// Largest `|k|` and `|η|` carrying data in either field.
pub fn support(state: &MhdState) -> (f64, f64) {
    let (k1, e1) = state.omega.support(0.0);
    let (k2, e2) = state.j.support(0.0);
    (k1.max(k2), e1.max(e2))
}

/// Header of a state snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub grid: Grid,
    pub params: PhysicalParams,
    pub t: f64,
    pub step: usize,
}

/// A solver state on disk: a JSON header line followed by the `Ω` then
/// `J` coefficients as little-endian `f64` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub state: MhdState,
}

const SNAPSHOT_MAGIC: &str = "shear-mhd-snapshot v1";

impl Snapshot {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{SNAPSHOT_MAGIC}")?;
        let header = serde_json::to_string(&self.header).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w, "{header}")?;
        for c in self.state.omega.coeffs.iter().chain(&self.state.j.coeffs) {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != SNAPSHOT_MAGIC {
            return Err(Error::Parse("not a snapshot file".into()));
        }
        line.clear();
        r.read_line(&mut line)?;
        let header: SnapshotHeader = serde_json::from_str(line.trim_end()).map_err(|e| Error::Parse(e.to_string()))?;
        header.grid.validate("snapshot.grid")?;
        let n = header.grid.len();
        let read_field = |r: &mut BufReader<_>| -> Result<Vec<C64>> {
            let mut v = Vec::with_capacity(n);
            let mut buf = [0u8; 16];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                let re = f64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(buf[8..].try_into().expect("8 bytes"));
                v.push(C64::new(re, im));
            }
            Ok(v)
        };
        let omega = read_field(&mut r)?;
        let j = read_field(&mut r)?;
        let g = header.grid;
        let t = header.t;
        Ok(Snapshot {
            state: MhdState {
                omega: SpectralField::from_coeffs(g, omega, t)?,
                j: SpectralField::from_coeffs(g, j, t)?,
            },
            header,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
