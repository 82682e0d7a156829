//! Truncated Fourier lattice in the moving frame `X = x - yt`, field
//! containers, sheared-frame symbols and Biot-Savart recovery.
//!
//! Coefficients are stored in FFT order: row `ix` holds wavenumber
//! `k = ix` for `ix <= K_max` and `k = ix - n_x` otherwise; column `iy`
//! holds `eta = h*m` with `m = iy` for `iy < M_y/2` and `m = iy - M_y`
//! otherwise. The forward transform is a plain sum and the inverse carries
//! `1/(n_x n_y)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Symbol of `-Δ_L`: `k² + (η - kt)²`.
#[inline]
pub fn p_symbol(k: f64, eta: f64, t: f64) -> f64 {
    let s = eta - k * t;
    k * k + s * s
}

/// `∂_t p = -2k(η - kt)`.
#[inline]
pub fn dtp_symbol(k: f64, eta: f64, t: f64) -> f64 {
    -2.0 * k * (eta - k * t)
}

/// `Γ = |k| / sqrt(p)`, zero on the `k = 0` row.
#[inline]
pub fn gamma_symbol(k: f64, eta: f64, t: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k.abs() / p_symbol(k, eta, t).sqrt()
    }
}

/// Japanese bracket `⟨a, b⟩ = sqrt(1 + a² + b²)`.
#[inline]
pub fn bracket(a: f64, b: f64) -> f64 {
    (1.0 + a * a + b * b).sqrt()
}

/// `⟨t⟩ = sqrt(1 + t²)`.
#[inline]
pub fn bracket_t(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

/// The truncated lattice. `n_x = 2 K_max + 1` points in `X ∈ [0, 2π)` and
/// `M_y` points in `Y ∈ [-L_y, L_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub k_max: usize,
    pub m_y: usize,
    pub l_y: f64,
    pub t_final: f64,
}

impl Grid {
    pub fn new(k_max: usize, m_y: usize, l_y: f64, t_final: f64) -> Result<Self> {
        let g = Grid {
            k_max,
            m_y,
            l_y,
            t_final,
        };
        g.validate("grid")?;
        Ok(g)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.k_max < 1 {
            return Err(Error::validation(format!("{prefix}.k_max"), "must be >= 1"));
        }
        if self.m_y < 4 || self.m_y % 2 != 0 {
            return Err(Error::validation(
                format!("{prefix}.m_y"),
                format!("must be even and >= 4, got {}", self.m_y),
            ));
        }
        if !(self.l_y.is_finite() && self.l_y > 0.0) {
            return Err(Error::validation(format!("{prefix}.l_y"), "must be finite and > 0"));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::validation(format!("{prefix}.t_final"), "must be finite and >= 0"));
        }
        Ok(())
    }

    #[inline]
    pub fn n_x(&self) -> usize {
        2 * self.k_max + 1
    }

    #[inline]
    pub fn n_y(&self) -> usize {
        self.m_y
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_x() * self.n_y()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// η spacing `π / L_y`.
    #[inline]
    pub fn h(&self) -> f64 {
        PI / self.l_y
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n_x() as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        2.0 * self.l_y / self.n_y() as f64
    }

    /// Weight turning `Σ|c|²` into the discrete `L²` norm squared.
    #[inline]
    pub fn spectral_measure(&self) -> f64 {
        self.dx() * self.dy() / self.len() as f64
    }

    #[inline]
    pub fn k_of(&self, ix: usize) -> i64 {
        if ix <= self.k_max {
            ix as i64
        } else {
            ix as i64 - self.n_x() as i64
        }
    }

    #[inline]
    pub fn m_of(&self, iy: usize) -> i64 {
        if iy < self.m_y / 2 {
            iy as i64
        } else {
            iy as i64 - self.m_y as i64
        }
    }

    #[inline]
    pub fn eta_of(&self, iy: usize) -> f64 {
        self.h() * self.m_of(iy) as f64
    }

    pub fn ix_of(&self, k: i64) -> Option<usize> {
        if k.unsigned_abs() as usize > self.k_max {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.n_x() as i64) as usize)
        }
    }

    pub fn iy_of(&self, m: i64) -> Option<usize> {
        let half = (self.m_y / 2) as i64;
        if m < -half || m >= half {
            None
        } else if m >= 0 {
            Some(m as usize)
        } else {
            Some((m + self.m_y as i64) as usize)
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.n_y() + iy
    }

    /// Index of the conjugate partner `(-k, -m)`, wrapping the Nyquist
    /// column onto itself.
    #[inline]
    pub fn mirror(&self, ix: usize, iy: usize) -> usize {
        let jx = (self.n_x() - ix) % self.n_x();
        let jy = (self.n_y() - iy) % self.n_y();
        self.index(jx, jy)
    }

    /// Iterates `(flat index, k, eta)` over the lattice.
    pub fn modes(&self) -> impl Iterator<Item = (usize, i64, f64)> + '_ {
        (0..self.n_x()).flat_map(move |ix| {
            (0..self.n_y()).map(move |iy| (self.index(ix, iy), self.k_of(ix), self.eta_of(iy)))
        })
    }

    pub fn x_coord(&self, ix: usize) -> f64 {
        ix as f64 * self.dx()
    }

    pub fn y_coord(&self, iy: usize) -> f64 {
        -self.l_y + iy as f64 * self.dy()
    }

    /// Largest representable frequency magnitude `h M_y / 2`.
    pub fn max_frequency(&self) -> f64 {
        self.h() * self.m_y as f64 / 2.0
    }

    /// Checks `h M_y / 2 ≥ η_support + k_support · t_final` for data whose
    /// spectrum is confined to `|η| ≤ eta_support`, `|k| ≤ k_support`.
    pub fn check_budget(&self, eta_support: f64, k_support: f64) -> Result<()> {
        let need = eta_support + k_support * self.t_final;
        let have = self.max_frequency();
        if need <= have * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::Budget(format!(
                "need max |eta - k t| = {need} over [0, {}], grid resolves {have}",
                self.t_final
            )))
        }
    }

    /// Sharp truncation mask keeping `|k| ≤ ⌊f (n_x-1)/2⌋` and
    /// `|m| ≤ ⌊f (n_y-1)/2⌋`.
    pub fn dealias_mask(&self, fraction: f64) -> Vec<bool> {
        let kc = (fraction * (self.n_x() as f64 - 1.0) / 2.0 + 1e-12).floor() as i64;
        let mc = (fraction * (self.n_y() as f64 - 1.0) / 2.0 + 1e-12).floor() as i64;
        let mut mask = vec![false; self.len()];
        for ix in 0..self.n_x() {
            for iy in 0..self.n_y() {
                mask[self.index(ix, iy)] = self.k_of(ix).abs() <= kc && self.m_of(iy).abs() <= mc;
            }
        }
        mask
    }
}

/// Fourier coefficients of a real scalar field on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub coeffs: Vec<C64>,
    /// Time at which moving-frame symbols are evaluated.
    pub frame_time: f64,
}

impl SpectralField {
    pub fn zeros(grid: Grid, frame_time: f64) -> Self {
        SpectralField {
            grid,
            coeffs: vec![C64::new(0.0, 0.0); grid.len()],
            frame_time,
        }
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<C64>, frame_time: f64) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(SpectralField {
            grid,
            coeffs,
            frame_time,
        })
    }

    pub fn get(&self, k: i64, m: i64) -> C64 {
        match (self.grid.ix_of(k), self.grid.iy_of(m)) {
            (Some(ix), Some(iy)) => self.coeffs[self.grid.index(ix, iy)],
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Sets `(k, m)` and its conjugate partner `(-k, -m)`.
    pub fn set_real_pair(&mut self, k: i64, m: i64, value: C64) {
        let ix = self.grid.ix_of(k).expect("k outside lattice");
        let iy = self.grid.iy_of(m).expect("m outside lattice");
        let a = self.grid.index(ix, iy);
        let b = self.grid.mirror(ix, iy);
        if a == b {
            self.coeffs[a] = C64::new(value.re, 0.0);
        } else {
            self.coeffs[a] = value;
            self.coeffs[b] = value.conj();
        }
    }

    /// Applies a per-mode symbol `f(k, η)`.
    pub fn map_symbol(&self, f: impl Fn(f64, f64) -> C64) -> SpectralField {
        let g = self.grid;
        let coeffs = g
            .modes()
            .map(|(i, k, eta)| self.coeffs[i] * f(k as f64, eta))
            .collect();
        SpectralField {
            grid: g,
            coeffs,
            frame_time: self.frame_time,
        }
    }

    /// `max |c(k,η) - conj c(-k,-η)|` over the lattice, excluding the
    /// Nyquist column which has no partner.
    pub fn conjugate_defect(&self) -> f64 {
        let g = self.grid;
        let mut worst = 0.0f64;
        for ix in 0..g.n_x() {
            for iy in 1..g.n_y() {
                if iy == g.n_y() / 2 {
                    continue;
                }
                let a = self.coeffs[g.index(ix, iy)];
                let b = self.coeffs[g.mirror(ix, iy)];
                worst = worst.max((a - b.conj()).norm());
            }
            let a = self.coeffs[g.index(ix, 0)];
            let b = self.coeffs[g.mirror(ix, 0)];
            worst = worst.max((a - b.conj()).norm());
        }
        worst
    }

    /// Restores exact conjugate symmetry by averaging each pair.
    pub fn symmetrize(&mut self) {
        let g = self.grid;
        for ix in 0..g.n_x() {
            for iy in 0..g.n_y() {
                let a = g.index(ix, iy);
                let b = g.mirror(ix, iy);
                if a < b {
                    let v = 0.5 * (self.coeffs[a] + self.coeffs[b].conj());
                    self.coeffs[a] = v;
                    self.coeffs[b] = v.conj();
                } else if a == b {
                    self.coeffs[a].im = 0.0;
                }
            }
        }
    }

    pub fn apply_mask(&mut self, mask: &[bool]) {
        for (c, &keep) in self.coeffs.iter_mut().zip(mask) {
            if !keep {
                *c = C64::new(0.0, 0.0);
            }
        }
    }

    /// Discrete `L²` norm squared.
    pub fn norm_sq(&self) -> f64 {
        self.grid.spectral_measure() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `L²` norm squared restricted to `k ≠ 0`.
    pub fn norm_sq_nonzero(&self) -> f64 {
        let g = self.grid;
        g.spectral_measure()
            * g.modes()
                .filter(|&(_, k, _)| k != 0)
                .map(|(i, _, _)| self.coeffs[i].norm_sqr())
                .sum::<f64>()
    }

    /// Static-frame `H^N` norm squared with weight `(1 + k² + η²)^N`.
    pub fn hn_norm_sq(&self, n: u32, nonzero_only: bool) -> f64 {
        let g = self.grid;
        g.spectral_measure()
            * g.modes()
                .filter(|&(_, k, _)| !nonzero_only || k != 0)
                .map(|(i, k, eta)| {
                    (1.0 + (k * k) as f64 + eta * eta).powi(n as i32) * self.coeffs[i].norm_sqr()
                })
                .sum::<f64>()
    }

    /// Moving-frame `H^N` norm squared with weight `(1 + k² + (η-kt)²)^N`.
    pub fn hn_norm_sq_sheared(&self, n: u32, t: f64, nonzero_only: bool) -> f64 {
        let g = self.grid;
        g.spectral_measure()
            * g.modes()
                .filter(|&(_, k, _)| !nonzero_only || k != 0)
                .map(|(i, k, eta)| {
                    let kf = k as f64;
                    (1.0 + p_symbol(kf, eta, t)).powi(n as i32) * self.coeffs[i].norm_sqr()
                })
                .sum::<f64>()
    }

    /// Discrete inner product `⟨a, b⟩`, real part.
    pub fn inner_re(&self, other: &SpectralField) -> f64 {
        self.grid.spectral_measure()
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| (a * b.conj()).re)
                .sum::<f64>()
    }

    /// Largest `|k|`, `|η|` carrying a coefficient above `tol` in modulus.
    pub fn support(&self, tol: f64) -> (f64, f64) {
        let mut ks = 0.0f64;
        let mut es = 0.0f64;
        for (i, k, eta) in self.grid.modes() {
            if self.coeffs[i].norm() > tol {
                ks = ks.max((k as f64).abs());
                es = es.max(eta.abs());
            }
        }
        (ks, es)
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }
}

/// Velocity (or magnetic field) components and stream function recovered
/// from a vorticity (or current).
#[derive(Debug, Clone)]
pub struct Recovered {
    pub stream: SpectralField,
    pub v1: SpectralField,
    pub v2: SpectralField,
}

/// `Ψ = Δ_L⁻¹ Ω` with the `(0,0)` mode gauged to zero.
pub fn inverse_laplacian(f: &SpectralField, t: f64) -> SpectralField {
    f.map_symbol(|k, eta| {
        let p = p_symbol(k, eta, t);
        if p == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::new(-1.0 / p, 0.0)
        }
    })
}

/// Stream function and `∇⊥_L Ψ = (-∂_Y^L Ψ, ∂_X Ψ)`.
pub fn recover(f: &SpectralField, t: f64) -> Recovered {
    let stream = inverse_laplacian(f, t);
    let v1 = stream.map_symbol(|k, eta| -I * (eta - k * t));
    let v2 = stream.map_symbol(|k, _| I * k);
    Recovered { stream, v1, v2 }
}

/// Velocity `(U¹, U²)` from vorticity at frame time `t`.
pub fn biot_savart(omega: &SpectralField, t: f64) -> (SpectralField, SpectralField) {
    let r = recover(omega, t);
    (r.v1, r.v2)
}

/// `max |i k Û¹ + i (η-kt) Û²|` over the lattice.
pub fn divergence_defect(v1: &SpectralField, v2: &SpectralField, t: f64) -> f64 {
    let g = v1.grid;
    g.modes()
        .map(|(i, k, eta)| {
            let k = k as f64;
            (I * k * v1.coeffs[i] + I * (eta - k * t) * v2.coeffs[i]).norm()
        })
        .fold(0.0, f64::max)
}

/// Paired vorticity and current in the moving frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MhdState {
    pub omega: SpectralField,
    pub j: SpectralField,
}

/// Fields derived from an [`MhdState`] at one frame time.
#[derive(Debug, Clone)]
pub struct Derived {
    pub t: f64,
    pub psi: SpectralField,
    pub phi: SpectralField,
    pub u1: SpectralField,
    pub u2: SpectralField,
    pub b1: SpectralField,
    pub b2: SpectralField,
}

impl MhdState {
    pub fn zeros(grid: Grid, t: f64) -> Self {
        MhdState {
            omega: SpectralField::zeros(grid, t),
            j: SpectralField::zeros(grid, t),
        }
    }

    pub fn grid(&self) -> Grid {
        self.omega.grid
    }

    pub fn set_frame_time(&mut self, t: f64) {
        self.omega.frame_time = t;
        self.j.frame_time = t;
    }

    pub fn derive(&self, t: f64) -> Derived {
        let u = recover(&self.omega, t);
        let b = recover(&self.j, t);
        Derived {
            t,
            psi: u.stream,
            phi: b.stream,
            u1: u.v1,
            u2: u.v2,
            b1: b.v1,
            b2: b.v2,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.omega
            .coeffs
            .iter()
            .chain(&self.j.coeffs)
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// `(Z, Q) = (ΓΩ, ΓJ)`; the `k = 0` rows map to zero.
pub fn to_symmetric(state: &MhdState, t: f64) -> (SpectralField, SpectralField) {
    let g = |k: f64, eta: f64| C64::new(gamma_symbol(k, eta, t), 0.0);
    (state.omega.map_symbol(g), state.j.map_symbol(g))
}

/// Physical-space `L²` norm squared with the cell measure `Δx Δy`.
pub fn physical_norm_sq(grid: &Grid, values: &[f64]) -> f64 {
    grid.dx() * grid.dy() * values.iter().map(|v| v * v).sum::<f64>()
}

/// FFT plans and scratch for a fixed grid.
pub struct Transformer {
    grid: Grid,
    fx: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
    buf: Vec<C64>,
    tbuf: Vec<C64>,
    scratch: Vec<C64>,
}

impl Transformer {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let fx = planner.plan_fft_forward(grid.n_x());
        let ix = planner.plan_fft_inverse(grid.n_x());
        let fy = planner.plan_fft_forward(grid.n_y());
        let iy = planner.plan_fft_inverse(grid.n_y());
        let scratch_len = [&fx, &ix, &fy, &iy]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Transformer {
            grid,
            fx,
            ix,
            fy,
            iy,
            buf: vec![C64::new(0.0, 0.0); grid.len()],
            tbuf: vec![C64::new(0.0, 0.0); grid.len()],
            scratch: vec![C64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// In-place 2D transform of `self.buf`. The `Y` origin at `-L_y`
    /// contributes the phase `(-1)^m`.
    fn fft2(&mut self, inverse: bool) {
        let (nx, ny) = (self.grid.n_x(), self.grid.n_y());
        if inverse {
            for ix in 0..nx {
                for iy in (1..ny).step_by(2) {
                    self.buf[ix * ny + iy] = -self.buf[ix * ny + iy];
                }
            }
        }
        let (fy, fx) = if inverse {
            (&self.iy, &self.ix)
        } else {
            (&self.fy, &self.fx)
        };
        fy.process_with_scratch(&mut self.buf, &mut self.scratch);
        for ix in 0..nx {
            for iy in 0..ny {
                self.tbuf[iy * nx + ix] = self.buf[ix * ny + iy];
            }
        }
        fx.process_with_scratch(&mut self.tbuf, &mut self.scratch);
        for ix in 0..nx {
            for iy in 0..ny {
                self.buf[ix * ny + iy] = self.tbuf[iy * nx + ix];
            }
        }
        if inverse {
            let s = 1.0 / (nx * ny) as f64;
            for c in &mut self.buf {
                *c *= s;
            }
        } else {
            for ix in 0..nx {
                for iy in (1..ny).step_by(2) {
                    self.buf[ix * ny + iy] = -self.buf[ix * ny + iy];
                }
            }
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n == self.grid.len() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "buffer of length {n} on a grid of {}",
                self.grid.len()
            )))
        }
    }

    pub fn forward_complex(&mut self, values: &[C64]) -> Result<Vec<C64>> {
        self.check_len(values.len())?;
        self.buf.copy_from_slice(values);
        self.fft2(false);
        Ok(self.buf.clone())
    }

    pub fn inverse_complex(&mut self, coeffs: &[C64]) -> Result<Vec<C64>> {
        self.check_len(coeffs.len())?;
        self.buf.copy_from_slice(coeffs);
        self.fft2(true);
        Ok(self.buf.clone())
    }

    /// Transforms real physical values laid out as `ix * n_y + iy`.
    pub fn forward(&mut self, values: &[f64], frame_time: f64) -> Result<SpectralField> {
        self.check_len(values.len())?;
        for (b, &v) in self.buf.iter_mut().zip(values) {
            *b = C64::new(v, 0.0);
        }
        self.fft2(false);
        SpectralField::from_coeffs(self.grid, self.buf.clone(), frame_time)
    }

    /// Two real fields through one complex transform.
    pub fn forward_pair(
        &mut self,
        a: &[f64],
        b: &[f64],
        frame_time: f64,
    ) -> Result<(SpectralField, SpectralField)> {
        self.check_len(a.len())?;
        self.check_len(b.len())?;
        for ((c, &x), &y) in self.buf.iter_mut().zip(a).zip(b) {
            *c = C64::new(x, y);
        }
        self.fft2(false);
        let g = self.grid;
        let mut fa = vec![C64::new(0.0, 0.0); g.len()];
        let mut fb = vec![C64::new(0.0, 0.0); g.len()];
        for ix in 0..g.n_x() {
            for iy in 0..g.n_y() {
                let i = g.index(ix, iy);
                let z = self.buf[i];
                let zm = self.buf[g.mirror(ix, iy)].conj();
                fa[i] = 0.5 * (z + zm);
                fb[i] = -0.5 * I * (z - zm);
            }
        }
        Ok((
            SpectralField::from_coeffs(g, fa, frame_time)?,
            SpectralField::from_coeffs(g, fb, frame_time)?,
        ))
    }

    /// Real part of the inverse transform.
    pub fn inverse(&mut self, field: &SpectralField) -> Result<Vec<f64>> {
        self.check_len(field.coeffs.len())?;
        self.buf.copy_from_slice(&field.coeffs);
        self.fft2(true);
        Ok(self.buf.iter().map(|c| c.re).collect())
    }

    /// Inverse of two conjugate-symmetric spectra through one transform.
    pub fn inverse_pair(
        &mut self,
        a: &SpectralField,
        b: &SpectralField,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(a.coeffs.len())?;
        self.check_len(b.coeffs.len())?;
        for ((c, x), y) in self.buf.iter_mut().zip(&a.coeffs).zip(&b.coeffs) {
            *c = x + I * y;
        }
        self.fft2(true);
        Ok((
            self.buf.iter().map(|c| c.re).collect(),
            self.buf.iter().map(|c| c.im).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(3, 8, PI, 0.0).unwrap()
    }

    #[test]
    fn symbols_at_hand_values() {
        assert_eq!(p_symbol(1.0, 0.0, 0.0), 1.0);
        assert_eq!(p_symbol(0.0, 2.0, 7.0), 4.0);
        assert_eq!(p_symbol(2.0, 6.0, 3.0), 4.0);
        assert_eq!(gamma_symbol(1.0, 0.0, 0.0), 1.0);
        assert_eq!(gamma_symbol(0.0, 5.0, 2.0), 0.0);
        assert!((gamma_symbol(1.0, 0.0, 1.0) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lattice_indexing_round_trips() {
        let g = grid();
        for ix in 0..g.n_x() {
            assert_eq!(g.ix_of(g.k_of(ix)), Some(ix));
        }
        for iy in 0..g.n_y() {
            assert_eq!(g.iy_of(g.m_of(iy)), Some(iy));
        }
        assert_eq!(g.m_of(4), -4);
        assert_eq!(g.ix_of(4), None);
        assert_eq!(g.iy_of(4), None);
    }

    #[test]
    fn cos_x_lands_on_unit_wavenumbers() {
        let g = grid();
        let mut tr = Transformer::new(g);
        let vals: Vec<f64> = (0..g.n_x())
            .flat_map(|ix| (0..g.n_y()).map(move |_| (ix as f64 * 2.0 * PI / 7.0).cos()))
            .collect();
        let f = tr.forward(&vals, 0.0).unwrap();
        for (i, k, eta) in g.modes() {
            let expect = if k.abs() == 1 && eta == 0.0 {
                0.5 * g.len() as f64
            } else {
                0.0
            };
            assert!((f.coeffs[i] - C64::new(expect, 0.0)).norm() < 1e-12, "k={k} eta={eta}");
        }
    }

    #[test]
    fn delta_has_flat_spectrum() {
        let g = grid();
        let mut tr = Transformer::new(g);
        let mut vals = vec![0.0; g.len()];
        vals[g.index(0, 4)] = 1.0; // y = 0
        let f = tr.forward(&vals, 0.0).unwrap();
        for c in &f.coeffs {
            assert!((c - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
        let back = tr.inverse(&f).unwrap();
        for (a, b) in back.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn budget_check() {
        let g = Grid::new(4, 64, 4.0 * PI, 20.0).unwrap();
        // h M_y / 2 = 8
        assert!(g.check_budget(0.0, 1.0).is_err());
        let g = Grid::new(4, 256, 4.0 * PI, 20.0).unwrap();
        assert!(g.check_budget(5.0, 1.0).is_ok());
        assert!(g.check_budget(13.0, 1.0).is_err());
    }

    #[test]
    fn dealias_cutoffs() {
        let g = Grid::new(6, 256, PI, 0.0).unwrap();
        let mask = g.dealias_mask(2.0 / 3.0);
        assert!(mask[g.index(g.ix_of(4).unwrap(), g.iy_of(85).unwrap())]);
        assert!(!mask[g.index(g.ix_of(5).unwrap(), 0)]);
        assert!(!mask[g.index(0, g.iy_of(-86).unwrap())]);
    }

    #[test]
    fn biot_savart_hand_values() {
        let g = grid();
        let mut om = SpectralField::zeros(g, 0.0);
        om.set_real_pair(1, 0, C64::new(1.0, 0.0));
        let (u1, u2) = biot_savart(&om, 0.0);
        assert!(u1.get(1, 0).norm() < 1e-15);
        assert!((u2.get(1, 0) - C64::new(0.0, -1.0)).norm() < 1e-15);

        let mut om = SpectralField::zeros(g, 0.0);
        for m in [-3i64, -1, 2] {
            let iy = g.iy_of(m).unwrap();
            om.coeffs[g.index(0, iy)] = C64::new(1.0, 0.0);
        }
        let (u1, u2) = biot_savart(&om, 0.0);
        for m in [-3i64, -1, 2] {
            let eta = g.h() * m as f64;
            assert!((u1.get(0, m) - C64::new(0.0, 1.0 / eta)).norm() < 1e-15);
            assert_eq!(u2.get(0, m), C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn to_symmetric_hand_values() {
        let g = Grid::new(3, 8, PI, 0.0).unwrap(); // h = 1
        let mut s = MhdState::zeros(g, 3.0);
        s.omega.set_real_pair(2, 3, C64::new(4.0, 0.0));
        // Γ(2, 3, 1.5) = 2/sqrt(4 + 0) = 1
        let (z, q) = to_symmetric(&s, 1.5);
        assert!((z.get(2, 3) - C64::new(4.0, 0.0)).norm() < 1e-14);
        assert_eq!(q.norm_sq(), 0.0);
        let mut s = MhdState::zeros(g, 0.0);
        s.omega.set_real_pair(0, 2, C64::new(1.0, 1.0));
        let (z, _) = to_symmetric(&s, 0.0);
        assert_eq!(z.norm_sq(), 0.0);
    }
}
