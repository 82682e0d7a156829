//! Propagation of the per-mode linear system `y' = A(t) y` for one
//! `(k, η)`.
//!
//! The dissipative entries grow like `p ~ k²t²`, so the system turns stiff
//! with a splitting of order `|ν - μ| p`. Steps use the three-stage
//! Radau IIA collocation (order 5, L-stable) with step-doubling error
//! control; states are kept as a unit direction plus a log-norm. The
//! `k = 0` rows decouple into exact heat kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{dtp_symbol, p_symbol, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Which pair of unknowns a mode system evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// Vorticity and current `(Ω̂, Ĵ)`.
    OmegaJ,
    /// Symmetric unknowns `(Ẑ, Q̂) = Γ(Ω̂, Ĵ)`.
    ZQ,
}

pub type Mat2 = [[C64; 2]; 2];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

#[inline]
pub fn mat_vec(a: &Mat2, y: &[C64; 2]) -> [C64; 2] {
    [a[0][0] * y[0] + a[0][1] * y[1], a[1][0] * y[0] + a[1][1] * y[1]]
}

pub fn identity() -> Mat2 {
    [[ONE, ZERO], [ZERO, ONE]]
}

fn vec_norm(y: &[C64; 2]) -> f64 {
    (y[0].norm_sqr() + y[1].norm_sqr()).sqrt()
}

/// A matrix stored as `exp(log_scale) · mat`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mat: Mat2,
    pub log_scale: f64,
}

impl Scaled {
    pub fn identity() -> Self {
        Scaled {
            mat: identity(),
            log_scale: 0.0,
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Scaled) -> Scaled {
        let m = mat_mul(&self.mat, &first.mat);
        let n = m.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max);
        if n == 0.0 || !n.is_finite() {
            return Scaled {
                mat: m,
                log_scale: self.log_scale + first.log_scale,
            };
        }
        Scaled {
            mat: m.map(|r| r.map(|c| c / n)),
            log_scale: self.log_scale + first.log_scale + n.ln(),
        }
    }

    /// Plain matrix; entries underflow to zero when `log_scale` is very
    /// negative.
    pub fn to_matrix(&self) -> Mat2 {
        let s = self.log_scale.exp();
        self.mat.map(|r| r.map(|c| c * s))
    }
}

/// Coefficients of the per-mode linear system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCoefficients {
    pub k: f64,
    pub eta: f64,
    pub nu: f64,
    pub mu: f64,
    pub beta: f64,
    pub variant: Variant,
    /// Set to false to drop the `∂ₜp/p` stretching terms (test hook).
    pub stretching: bool,
    /// Evaluate every symbol at this time instead of the current one.
    pub frozen_time: Option<f64>,
}

impl ModeCoefficients {
    #[inline]
    fn q(&self, t: f64) -> f64 {
        if !self.stretching {
            return 0.0;
        }
        let p = p_symbol(self.k, self.eta, t);
        if p == 0.0 {
            0.0
        } else {
            dtp_symbol(self.k, self.eta, t) / p
        }
    }

    /// Full coefficient matrix `A(t)`.
    pub fn matrix(&self, t: f64) -> Mat2 {
        let t = self.frozen_time.unwrap_or(t);
        let p = p_symbol(self.k, self.eta, t);
        let q = self.q(t);
        let c = C64::new(0.0, self.beta * self.k);
        match self.variant {
            Variant::OmegaJ => [
                [C64::new(-self.nu * p, 0.0), c],
                [c, C64::new(-self.mu * p + q, 0.0)],
            ],
            Variant::ZQ => [
                [C64::new(-self.nu * p - 0.5 * q, 0.0), c],
                [c, C64::new(-self.mu * p + 0.5 * q, 0.0)],
            ],
        }
    }

    /// Upper bound on `ln ‖Φ(t1, t0)‖₂` from the logarithmic norm: the
    /// coupling is skew-Hermitian, so only the diagonal contributes.
    pub fn log_norm_bound(&self, t0: f64, t1: f64) -> f64 {
        let lam = self.nu.min(self.mu);
        let (k, eta) = (self.k, self.eta);
        if let Some(tf) = self.frozen_time {
            let q = self.q(tf);
            let q = match self.variant {
                Variant::OmegaJ => q.max(0.0),
                Variant::ZQ => 0.5 * q.abs(),
            };
            return (-lam * p_symbol(k, eta, tf) + q) * (t1 - t0);
        }
        let int_p = if k == 0.0 {
            eta * eta * (t1 - t0)
        } else {
            let cube = |s: f64| (eta - k * s).powi(3) / (3.0 * k);
            k * k * (t1 - t0) + cube(t0) - cube(t1)
        };
        let int_q = if !self.stretching || k == 0.0 {
            0.0
        } else {
            let lp = |s: f64| p_symbol(k, eta, s).ln();
            let m = (eta / k).clamp(t0, t1);
            match self.variant {
                Variant::OmegaJ => lp(t1) - lp(m),
                Variant::ZQ => 0.5 * ((lp(t0) - lp(m)) + (lp(t1) - lp(m))),
            }
        };
        -lam * int_p + int_q
    }

    /// True when the mode decouples into two scalar heat kernels.
    pub fn is_diagonal_constant(&self) -> bool {
        self.k == 0.0
    }

    /// Exact propagator of the `k = 0` rows.
    fn heat(&self, t1: f64, t2: f64) -> Scaled {
        let h = t2 - t1;
        let e2 = self.eta * self.eta;
        let a = -self.nu * e2 * h;
        let b = -self.mu * e2 * h;
        let top = a.max(b);
        Scaled {
            mat: [
                [C64::new((a - top).exp(), 0.0), ZERO],
                [ZERO, C64::new((b - top).exp(), 0.0)],
            ],
            log_scale: top,
        }
    }

    /// LU factors of the Radau IIA stage system on `[t, t + h]`.
    fn radau(&self, t: f64, h: f64) -> Lu6 {
        let mut m = [[ZERO; 6]; 6];
        let mats: [Mat2; 3] = std::array::from_fn(|j| self.matrix(t + RADAU_C[j] * h));
        for i in 0..3 {
            for j in 0..3 {
                for r in 0..2 {
                    for s in 0..2 {
                        let mut v = -h * RADAU_A[i][j] * mats[j][r][s];
                        if i == j && r == s {
                            v += ONE;
                        }
                        m[2 * i + r][2 * j + s] = v;
                    }
                }
            }
        }
        Lu6::new(m)
    }
}

const SQ6: f64 = 2.449_489_742_783_178;
const RADAU_C: [f64; 3] = [(4.0 - SQ6) / 10.0, (4.0 + SQ6) / 10.0, 1.0];
const RADAU_A: [[f64; 3]; 3] = [
    [(88.0 - 7.0 * SQ6) / 360.0, (296.0 - 169.0 * SQ6) / 1800.0, (-2.0 + 3.0 * SQ6) / 225.0],
    [(296.0 + 169.0 * SQ6) / 1800.0, (88.0 + 7.0 * SQ6) / 360.0, (-2.0 - 3.0 * SQ6) / 225.0],
    [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
];

/// Dense 6×6 complex LU with partial pivoting.
struct Lu6 {
    m: [[C64; 6]; 6],
    piv: [usize; 6],
}

impl Lu6 {
    fn new(mut m: [[C64; 6]; 6]) -> Self {
        let mut piv = [0usize; 6];
        for c in 0..6 {
            let mut best = c;
            for r in c + 1..6 {
                if m[r][c].norm() > m[best][c].norm() {
                    best = r;
                }
            }
            piv[c] = best;
            m.swap(c, best);
            let d = m[c][c];
            if d == ZERO {
                continue;
            }
            for r in c + 1..6 {
                let f = m[r][c] / d;
                m[r][c] = f;
                for k in c + 1..6 {
                    let v = m[c][k];
                    m[r][k] -= f * v;
                }
            }
        }
        Lu6 { m, piv }
    }

    fn solve(&self, mut b: [C64; 6]) -> [C64; 6] {
        for c in 0..6 {
            b.swap(c, self.piv[c]);
        }
        for c in 0..6 {
            for r in c + 1..6 {
                let v = b[c];
                b[r] -= self.m[r][c] * v;
            }
        }
        for c in (0..6).rev() {
            let mut v = b[c];
            for k in c + 1..6 {
                v -= self.m[c][k] * b[k];
            }
            b[c] = v / self.m[c][c];
        }
        b
    }

    /// Final stage value for start value `y`; the method is stiffly
    /// accurate so this is the step result.
    fn advance(&self, y: &[C64; 2]) -> [C64; 2] {
        let z = self.solve([y[0], y[1], y[0], y[1], y[0], y[1]]);
        [z[4], z[5]]
    }
}

/// Integration controls for [`propagate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    /// Local error tolerance on unit-normalized states.
    pub rtol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Stop once `|y|` has fallen by `exp(extinction)` from its initial
    /// size; later values are below every tolerance relative to the data.
    pub extinction: f64,
    /// [`transfer_matrix`] returns zero without integrating when the a
    /// priori bound on `ln ‖Φ‖` is below `-negligible`.
    #[serde(default = "no_cutoff")]
    pub negligible: f64,
}

fn no_cutoff() -> f64 {
    f64::INFINITY
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            rtol: 1e-10,
            h_init: 1e-2,
            h_min: 1e-12,
            h_max: 1.0,
            max_steps: 10_000_000,
            extinction: 750.0,
            negligible: f64::INFINITY,
        }
    }
}

/// State carried as `exp(log_norm) · dir` with `|dir| = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogState {
    pub dir: [C64; 2],
    pub log_norm: f64,
}

impl LogState {
    pub fn new(y: [C64; 2]) -> Self {
        let n = vec_norm(&y);
        if n == 0.0 {
            LogState {
                dir: [ZERO, ZERO],
                log_norm: f64::NEG_INFINITY,
            }
        } else {
            LogState {
                dir: [y[0] / n, y[1] / n],
                log_norm: n.ln(),
            }
        }
    }

    pub fn value(&self) -> [C64; 2] {
        let s = self.log_norm.exp();
        [self.dir[0] * s, self.dir[1] * s]
    }

    pub fn apply(&self, step: &Scaled) -> LogState {
        let y = mat_vec(&step.mat, &self.dir);
        let n = vec_norm(&y);
        if n == 0.0 || !n.is_finite() {
            return LogState {
                dir: y,
                log_norm: f64::NEG_INFINITY,
            };
        }
        LogState {
            dir: [y[0] / n, y[1] / n],
            log_norm: self.log_norm + step.log_scale + n.ln(),
        }
    }
}

const FILTER_GAMMA: f64 = 0.274_888_829_595_676_7;

/// One full step against two half steps. Returns the Richardson error
/// estimate relative to the state and the locally extrapolated result.
pub fn doubling_step(coef: &ModeCoefficients, t: f64, h: f64, y: &[C64; 2]) -> (f64, [C64; 2]) {
    let ([e], [y]) = doubling_step_cols(coef, t, h, [*y]);
    (e, y)
}

/// [`doubling_step`] for several columns sharing the stage factorizations.
fn doubling_step_cols<const N: usize>(
    coef: &ModeCoefficients,
    t: f64,
    h: f64,
    ys: [[C64; 2]; N],
) -> ([f64; N], [[C64; 2]; N]) {
    let full_lu = coef.radau(t, h);
    let first = coef.radau(t, 0.5 * h);
    let second = coef.radau(t + 0.5 * h, 0.5 * h);
    // Shampine filter: stiff components of the raw difference are damped in
    // later steps, so they are divided out before measuring.
    let a = coef.matrix(t + h);
    let g = FILTER_GAMMA * h;
    let m = [[ONE - g * a[0][0], -g * a[0][1]], [-g * a[1][0], ONE - g * a[1][1]]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let mut errs = [0.0; N];
    let mut out = ys;
    for (c, y) in ys.iter().enumerate() {
        let full = full_lu.advance(y);
        let half = second.advance(&first.advance(y));
        let n = vec_norm(&half);
        if n == 0.0 || !n.is_finite() {
            out[c] = half;
            continue;
        }
        let d = [(half[0] - full[0]) / 31.0, (half[1] - full[1]) / 31.0];
        let f = [
            (m[1][1] * d[0] - m[0][1] * d[1]) / det,
            (m[0][0] * d[1] - m[1][0] * d[0]) / det,
        ];
        errs[c] = (f[0].norm_sqr() + f[1].norm_sqr()).sqrt() / n;
        out[c] = [half[0] + d[0], half[1] + d[1]];
    }
    (errs, out)
}

fn grow(h: f64, err: f64, ctl: &Controls) -> f64 {
    let fac = if err == 0.0 {
        2.0
    } else {
        (0.9 * (ctl.rtol / err).powf(1.0 / 6.0)).clamp(0.2, 2.0)
    };
    (h * fac).min(ctl.h_max)
}

fn shrink(h: f64, err: f64, ctl: &Controls) -> f64 {
    (h * (0.9 * (ctl.rtol / err).powf(1.0 / 6.0)).clamp(0.1, 0.5)).max(ctl.h_min)
}

/// Adaptive propagation of one mode over `[t0, t1]`, calling `observe`
/// after every accepted step with `(t, state)`.
pub fn propagate(
    coef: &ModeCoefficients,
    y0: LogState,
    t0: f64,
    t1: f64,
    ctl: &Controls,
    mut observe: impl FnMut(f64, &LogState),
) -> Result<LogState> {
    if !y0.log_norm.is_finite() || t1 <= t0 {
        return Ok(y0);
    }
    if coef.is_diagonal_constant() {
        let y = y0.apply(&coef.heat(t0, t1));
        observe(t1, &y);
        return Ok(y);
    }
    let floor = y0.log_norm - ctl.extinction;
    let mut t = t0;
    let mut y = y0;
    let mut h = ctl.h_init.min(t1 - t0);
    let mut steps = 0usize;
    while t < t1 {
        if t + h > t1 || (t1 - t - h) < 1e-14 * t1.abs().max(1.0) {
            h = t1 - t;
        }
        let (err, next) = doubling_step(coef, t, h, &y.dir);
        if err <= ctl.rtol {
            t += h;
            let n = vec_norm(&next);
            y = if n == 0.0 || !n.is_finite() {
                LogState {
                    dir: next,
                    log_norm: f64::NEG_INFINITY,
                }
            } else {
                LogState {
                    dir: [next[0] / n, next[1] / n],
                    log_norm: y.log_norm + n.ln(),
                }
            };
            observe(t, &y);
            if !y.log_norm.is_finite() || y.log_norm < floor {
                break;
            }
            h = grow(h, err, ctl);
        } else if h <= ctl.h_min {
            return Err(Error::StepUnderflow {
                t,
                k: coef.k as i64,
                eta: coef.eta,
            });
        } else {
            h = shrink(h, err, ctl);
        }
        steps += 1;
        if steps > ctl.max_steps {
            return Err(Error::NumericalAbort {
                t,
                detail: format!("step limit exceeded for mode (k={}, eta={})", coef.k, coef.eta),
            });
        }
    }
    Ok(y)
}

/// Propagator `Φ(t1, t0)`, advancing both unit columns under one step
/// controller.
pub fn transfer_matrix(coef: &ModeCoefficients, t0: f64, t1: f64, ctl: &Controls) -> Result<Scaled> {
    if t1 <= t0 {
        return Ok(Scaled::identity());
    }
    if coef.is_diagonal_constant() {
        return Ok(coef.heat(t0, t1));
    }
    if coef.log_norm_bound(t0, t1) < -ctl.negligible {
        return Ok(Scaled {
            mat: identity(),
            log_scale: f64::NEG_INFINITY,
        });
    }
    let mut acc = Scaled::identity();
    let mut t = t0;
    let mut h = ctl.h_init.min(t1 - t0);
    let mut steps = 0usize;
    while t < t1 {
        if t + h > t1 || (t1 - t - h) < 1e-14 * t1.abs().max(1.0) {
            h = t1 - t;
        }
        let col0 = [acc.mat[0][0], acc.mat[1][0]];
        let col1 = [acc.mat[0][1], acc.mat[1][1]];
        let ([e0, e1], [n0, n1]) = doubling_step_cols(coef, t, h, [col0, col1]);
        // columns share a scale, so errors are measured against the larger
        let s0 = vec_norm(&n0);
        let s1 = vec_norm(&n1);
        let big = s0.max(s1);
        let err = if big == 0.0 {
            0.0
        } else {
            (e0 * s0).max(e1 * s1) / big
        };
        if err <= ctl.rtol {
            t += h;
            let m = [[n0[0], n1[0]], [n0[1], n1[1]]];
            if big == 0.0 || !big.is_finite() {
                acc = Scaled {
                    mat: m,
                    log_scale: f64::NEG_INFINITY,
                };
                break;
            }
            acc = Scaled {
                mat: m.map(|r| r.map(|c| c / big)),
                log_scale: acc.log_scale + big.ln(),
            };
            h = grow(h, err, ctl);
        } else if h <= ctl.h_min {
            return Err(Error::StepUnderflow {
                t,
                k: coef.k as i64,
                eta: coef.eta,
            });
        } else {
            h = shrink(h, err, ctl);
        }
        steps += 1;
        if steps > ctl.max_steps {
            return Err(Error::NumericalAbort {
                t,
                detail: "step limit exceeded building a transfer matrix".into(),
            });
        }
    }
    Ok(acc)
}

/// `exp(m)` as a [`Scaled`] matrix, from the closed form
/// `e^{τ}(cosh δ I + sinh δ/δ (m - τI))` with `τ = tr m / 2`.
pub fn expm2(m: &Mat2) -> Scaled {
    let tau = (m[0][0] + m[1][1]) * 0.5;
    let a = m[0][0] - tau;
    let d = (a * a + m[0][1] * m[1][0]).sqrt();
    let r = d.re.abs();
    let ep = (d - r).exp();
    let en = (-d - r).exp();
    let ch = (ep + en) * 0.5;
    let sh = if d.norm() < 1e-6 {
        // sinh(d)/d series, scaled by e^{-r}
        (ONE + d * d / 6.0 + d * d * d * d / 120.0) * (-r).exp()
    } else {
        (ep - en) * 0.5 / d
    };
    let phase = C64::new(0.0, tau.im).exp();
    let mat = [[ch + sh * a, sh * m[0][1]], [sh * m[1][0], ch - sh * a]].map(|row| row.map(|c| c * phase));
    Scaled {
        mat,
        log_scale: tau.re + r,
    }
}

/// Fourth-order Magnus step on `[t, t + h]` with two Gauss points.
fn magnus_step(coef: &ModeCoefficients, t: f64, h: f64) -> Scaled {
    const S: f64 = 0.288_675_134_594_812_9; // √3/6
    let a1 = coef.matrix(t + (0.5 - S) * h);
    let a2 = coef.matrix(t + (0.5 + S) * h);
    let x = mat_mul(&a1, &a2);
    let y = mat_mul(&a2, &a1);
    let c = 0.5 * S * h * h; // √3/12 h²
    let mut o = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = (a1[i][j] + a2[i][j]) * (0.5 * h) - (x[i][j] - y[i][j]) * c;
        }
    }
    expm2(&o)
}

/// Propagator `Φ(t1, t0)` by adaptive fourth-order Magnus steps with exact
/// 2×2 exponentials. Stiff decay is carried by the exponentials, so over
/// short intervals this needs far fewer steps than [`transfer_matrix`].
pub fn transfer_matrix_magnus(coef: &ModeCoefficients, t0: f64, t1: f64, ctl: &Controls) -> Result<Scaled> {
    if t1 <= t0 {
        return Ok(Scaled::identity());
    }
    if coef.is_diagonal_constant() {
        return Ok(coef.heat(t0, t1));
    }
    if coef.log_norm_bound(t0, t1) < -ctl.negligible {
        return Ok(Scaled {
            mat: identity(),
            log_scale: f64::NEG_INFINITY,
        });
    }
    let mut acc = Scaled::identity();
    let mut t = t0;
    let mut h = ctl.h_init.min(t1 - t0);
    let mut steps = 0usize;
    while t < t1 {
        if t + h > t1 || (t1 - t - h) < 1e-14 * t1.abs().max(1.0) {
            h = t1 - t;
        }
        let full = magnus_step(coef, t, h);
        let two = magnus_step(coef, t + 0.5 * h, 0.5 * h).compose(&magnus_step(coef, t, 0.5 * h));
        let err = if two.log_scale == f64::NEG_INFINITY {
            0.0
        } else {
            let w = (full.log_scale - two.log_scale).exp();
            let mut d = 0.0f64;
            for i in 0..2 {
                for j in 0..2 {
                    d = d.max((two.mat[i][j] - full.mat[i][j] * w).norm());
                }
            }
            d / 15.0
        };
        if err <= ctl.rtol {
            t += h;
            acc = two.compose(&acc);
            if acc.log_scale == f64::NEG_INFINITY {
                break;
            }
            h = if err == 0.0 {
                2.0 * h
            } else {
                h * (0.9 * (ctl.rtol / err).powf(0.2)).clamp(0.2, 2.0)
            }
            .min(ctl.h_max);
        } else if h <= ctl.h_min {
            return Err(Error::StepUnderflow {
                t,
                k: coef.k as i64,
                eta: coef.eta,
            });
        } else {
            h = (h * (0.9 * (ctl.rtol / err).powf(0.2)).clamp(0.1, 0.5)).max(ctl.h_min);
        }
        steps += 1;
        if steps > ctl.max_steps {
            return Err(Error::NumericalAbort {
                t,
                detail: "step limit exceeded building a transfer matrix".into(),
            });
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coef(k: f64, eta: f64, nu: f64, mu: f64, beta: f64, variant: Variant) -> ModeCoefficients {
        ModeCoefficients {
            k,
            eta,
            nu,
            mu,
            beta,
            variant,
            stretching: true,
            frozen_time: None,
        }
    }

    #[test]
    fn coupling_alone_rotates() {
        // ν = μ = 0 and no stretching: y = (cos βkt, i sin βkt)
        let mut c = coef(2.0, 1.0, 0.0, 0.0, 0.7, Variant::OmegaJ);
        c.stretching = false;
        let out = propagate(&c, LogState::new([ONE, ZERO]), 0.0, 9.0, &Controls::default(), |_, _| {}).unwrap();
        let v = out.value();
        let w = 1.4 * 9.0f64;
        assert!((v[0] - C64::new(w.cos(), 0.0)).norm() < 1e-9);
        assert!((v[1] - C64::new(0.0, w.sin())).norm() < 1e-9);
    }

    #[test]
    fn lu_solves_random_system() {
        let mut m = [[ZERO; 6]; 6];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64);
            }
        }
        // small diagonal forces pivoting
        m[0][0] = C64::new(1e-3, 0.0);
        let x: [C64; 6] = std::array::from_fn(|i| C64::new(i as f64, 1.0 - i as f64));
        let mut b = [ZERO; 6];
        for i in 0..6 {
            for j in 0..6 {
                b[i] += m[i][j] * x[j];
            }
        }
        let got = Lu6::new(m).solve(b);
        for i in 0..6 {
            assert!((got[i] - x[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn pure_stretching_grows_like_p() {
        // ν = μ = β = 0: Ĵ(t) = Ĵ(0) p(t)/p(0)
        let c = coef(1.0, 3.0, 0.0, 0.0, 0.0, Variant::OmegaJ);
        let y = LogState::new([ONE, ONE]);
        let out = propagate(&c, y, 0.0, 6.0, &Controls::default(), |_, _| {}).unwrap();
        let v = out.value();
        let ratio = p_symbol(1.0, 3.0, 6.0) / p_symbol(1.0, 3.0, 0.0);
        assert!((v[0] - ONE).norm() < 1e-9);
        assert!((v[1] - C64::new(ratio, 0.0)).norm() < 1e-9 * ratio);
    }

    #[test]
    fn heat_branch_is_exact() {
        let c = coef(0.0, 2.5, 0.03, 0.07, 1.0, Variant::OmegaJ);
        let out = propagate(&c, LogState::new([ONE, ONE]), 0.0, 10.0, &Controls::default(), |_, _| {}).unwrap();
        let v = out.value();
        assert!((v[0].re - (-0.03f64 * 6.25 * 10.0).exp()).abs() < 1e-14);
        assert!((v[1].re - (-0.07f64 * 6.25 * 10.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn transfer_matrix_agrees_with_vector_propagation() {
        let c = coef(2.0, 5.0, 0.02, 0.05, 1.3, Variant::ZQ);
        let ctl = Controls {
            rtol: 1e-12,
            ..Controls::default()
        };
        let phi = transfer_matrix(&c, 0.3, 4.1, &ctl).unwrap().to_matrix();
        let y0 = [C64::new(0.4, -0.2), C64::new(-1.0, 0.3)];
        let a = mat_vec(&phi, &y0);
        let b = propagate(&c, LogState::new(y0), 0.3, 4.1, &ctl, |_, _| {}).unwrap().value();
        for i in 0..2 {
            assert!((a[i] - b[i]).norm() < 1e-9 * vec_norm(&b).max(1e-300));
        }
    }

    #[test]
    fn magnus_and_radau_agree() {
        let ctl = Controls {
            rtol: 1e-12,
            ..Controls::default()
        };
        for &(k, eta, t0, t1) in &[(2.0, 5.0, 0.3, 4.1), (8.0, -3.0, 10.0, 10.05), (1.0, 40.0, 38.0, 42.0)] {
            for variant in [Variant::OmegaJ, Variant::ZQ] {
                let c = coef(k, eta, 0.01, 0.3, 1.0, variant);
                let a = transfer_matrix(&c, t0, t1, &ctl).unwrap().to_matrix();
                let b = transfer_matrix_magnus(&c, t0, t1, &ctl).unwrap().to_matrix();
                let n = a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((a[i][j] - b[i][j]).norm() < 1e-9 * n, "{k} {eta} {variant:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn exponential_of_diagonal_and_nilpotent() {
        let d = [[C64::new(-3.0, 1.0), ZERO], [ZERO, C64::new(0.5, 0.0)]];
        let e = expm2(&d).to_matrix();
        assert!((e[0][0] - C64::new(-3.0, 1.0).exp()).norm() < 1e-15);
        assert!((e[1][1] - C64::new(0.5f64.exp(), 0.0)).norm() < 1e-15);
        let n = [[ZERO, C64::new(2.0, 0.0)], [ZERO, ZERO]];
        let e = expm2(&n).to_matrix();
        assert!((e[0][1] - C64::new(2.0, 0.0)).norm() < 1e-15);
        assert!((e[0][0] - ONE).norm() < 1e-15 && e[1][0].norm() < 1e-15);
    }

    #[test]
    fn log_norm_bound_dominates() {
        let ctl = Controls::default();
        for &(k, eta, t0, t1) in &[(2.0, 5.0, 0.0, 4.0), (3.0, -7.0, 1.0, 2.5), (1.0, 2.0, 1.5, 2.5)] {
            for variant in [Variant::OmegaJ, Variant::ZQ] {
                let c = coef(k, eta, 0.05, 0.02, 1.0, variant);
                let m = transfer_matrix(&c, t0, t1, &ctl).unwrap();
                // spectral norm from the Frobenius bound is too loose; use
                // the largest singular value of the 2×2 directly
                let a = m.mat;
                let f: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum();
                let det = (a[0][0] * a[1][1] - a[0][1] * a[1][0]).norm();
                let s1 = (0.5 * (f + ((f * f - 4.0 * det * det).max(0.0)).sqrt())).sqrt();
                assert!(m.log_scale + s1.ln() <= c.log_norm_bound(t0, t1) + 1e-9);
            }
        }
    }
}
