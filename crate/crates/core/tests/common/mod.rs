//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use shear_mhd::spectral::{Grid, MhdState, SpectralField};
use shear_mhd::{PhysicalParams, C64};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ------------------------------------------------------------ quadrature

const GK_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WK[7];
    let mut g = fc * GK_WG[3];
    for i in 0..7 {
        let x = h * GK_X[i];
        let s = f(c - x) + f(c + x);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` by adaptive Gauss–Kronrod, splitting at every breakpoint
/// strictly inside `(a, b)`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.windows(2).map(|w| adapt(&f, w[0], w[1], tol, 60)).sum()
}

/// Defining rates `∂_t log Mⁱ` of the first four multipliers, written out
/// from their ODEs.
pub fn ode_rate(i: usize, k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    let lam = p.nu.min(p.mu);
    let d = eta / k - t;
    let gate = |bound: f64| k != 0.0 && k.abs() <= bound;
    match i {
        1 if gate(p.c2 / lam.sqrt()) => -p.c1 / (1.0 + d * d),
        2 if k != 0.0 => {
            let a = (lam * k * k).powf(1.0 / 3.0);
            -2.0 * p.c2 * p.c2 * a / (1.0 + a * a * d * d)
        }
        3 if gate(p.c2 / lam.sqrt()) => -p.c3 / (1.0 + d * d).powf(1.5),
        4 if gate(p.c2 / p.mu.sqrt()) => -p.c4 * p.nu / (1.0 + p.nu * p.nu * d * d),
        _ => 0.0,
    }
}

/// `log Mⁱ(t)` by quadrature of [`ode_rate`] from `M(0) = 1`.
pub fn quadrature_log_m(i: usize, k: f64, eta: f64, t: f64, p: &PhysicalParams) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    let tc = eta / k;
    // Peak width scales like 1, 1/a and 1/ν; resolve it explicitly.
    let lam = p.nu.min(p.mu);
    let a = (lam * k * k).powf(1.0 / 3.0);
    let w = match i {
        2 => 1.0 / a,
        4 => 1.0 / p.nu,
        _ => 1.0,
    };
    let breaks: Vec<f64> = [-8.0, -2.0, -0.5, 0.0, 0.5, 2.0, 8.0].iter().map(|s| tc + s * w).collect();
    let scale = integrate(|s| ode_rate(i, k, eta, s, p).abs(), 0.0, t, &breaks, 1e-13).max(1e-300);
    integrate(|s| ode_rate(i, k, eta, s, p), 0.0, t, &breaks, 1e-14 * scale.max(1.0))
}

// ------------------------------------------------------ random states

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Real field with uniform random coefficients on `|k| ≤ kb`, `|m| ≤ mb`.
pub fn random_field(g: Grid, kb: i64, mb: i64, r: &mut ChaCha8Rng, t: f64) -> SpectralField {
    let mut f = SpectralField::zeros(g, t);
    for k in 0..=kb {
        for m in -mb..=mb {
            if k == 0 && m < 0 {
                continue;
            }
            let v = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            f.set_real_pair(k, m, if k == 0 && m == 0 { C64::new(v.re, 0.0) } else { v });
        }
    }
    f
}

/// State with `count` active conjugate pairs drawn inside the band.
pub fn sparse_state(g: Grid, count: usize, kb: i64, mb: i64, r: &mut ChaCha8Rng, t: f64) -> MhdState {
    let mut s = MhdState::zeros(g, t);
    for _ in 0..count {
        let k = r.gen_range(0..=kb);
        let m = if k == 0 { r.gen_range(1..=mb) } else { r.gen_range(-mb..=mb) };
        let w = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let j = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        s.omega.set_real_pair(k, m, w);
        s.j.set_real_pair(k, m, j);
    }
    s
}

// ------------------------------------------ brute-force nonlinearity

/// Active modes `(k, m, Ω̂, Ĵ)` of a state.
fn active(s: &MhdState) -> Vec<(i64, i64, C64, C64)> {
    let g = s.grid();
    let mut out = Vec::new();
    for ix in 0..g.n_x() {
        for iy in 0..g.n_y() {
            let i = g.index(ix, iy);
            let (w, j) = (s.omega.coeffs[i], s.j.coeffs[i]);
            if w.norm() > 0.0 || j.norm() > 0.0 {
                out.push((g.k_of(ix), g.m_of(iy), w, j));
            }
        }
    }
    out
}

/// `(NL^Ω, NL^J)` by direct summation over interacting pairs, with the
/// discrete normalization `1/(n_x n_y)` of a pointwise product, restricted
/// to `|k| ≤ kc`, `|m| ≤ mc`.
pub fn brute_force_nonlinear(s: &MhdState, t: f64, kc: i64, mc: i64) -> (SpectralField, SpectralField) {
    let g = s.grid();
    let h = g.h();
    let norm = 1.0 / g.len() as f64;
    let i = C64::new(0.0, 1.0);
    let modes = active(s);
    let mut nlo = SpectralField::zeros(g, t);
    let mut nlj = SpectralField::zeros(g, t);
    for &(k1, m1, w1, j1) in &modes {
        let (kf, ef) = (k1 as f64, h * m1 as f64);
        let sh = ef - kf * t;
        let p = kf * kf + sh * sh;
        let (psi, phi) = if p == 0.0 { (C64::new(0.0, 0.0), C64::new(0.0, 0.0)) } else { (-w1 / p, -j1 / p) };
        let u1 = -i * sh * psi;
        let u2 = i * kf * psi;
        let b1 = -i * sh * phi;
        let b2 = i * kf * phi;
        let phxy = -kf * sh * phi;
        let psxy = -kf * sh * psi;
        for &(k2, m2, w2, j2) in &modes {
            let (k, m) = (k1 + k2, m1 + m2);
            if k.abs() > kc || m.abs() > mc {
                continue;
            }
            let (kg, eg) = (k2 as f64, h * m2 as f64);
            let sg = eg - kg * t;
            let pg = kg * kg + sg * sg;
            let (psig, phig) = if pg == 0.0 { (C64::new(0.0, 0.0), C64::new(0.0, 0.0)) } else { (-w2 / pg, -j2 / pg) };
            let wx = i * kg * w2;
            let wy = i * sg * w2;
            let jx = i * kg * j2;
            let jy = i * sg * j2;
            let wo = w2 + 2.0 * kg * kg * psig;
            let wj = j2 + 2.0 * kg * kg * phig;
            let o = -(u1 * wx + u2 * wy) + (b1 * jx + b2 * jy);
            let c = -(u1 * jx + u2 * jy) + (b1 * wx + b2 * wy) + 2.0 * phxy * wo - 2.0 * psxy * wj;
            let ix = g.ix_of(k).unwrap();
            let iy = g.iy_of(m).unwrap();
            let idx = g.index(ix, iy);
            nlo.coeffs[idx] += o * norm;
            nlj.coeffs[idx] += c * norm;
        }
    }
    (nlo, nlj)
}

/// Largest coefficient difference.
pub fn max_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &SpectralField) -> f64 {
    a.coeffs.iter().map(|x| x.norm()).fold(0.0, f64::max)
}
