//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every entry point takes plain numbers and returns a JSON string, or
//! throws a string describing the validation error.

use serde_json::json;
use wasm_bindgen::prelude::*;

use shear_mhd::harness::{linear_run, linear_sweep_point, LinearRunConfig, LinearSweepConfig, MultiplierTableConfig};
use shear_mhd::PhysicalParams;

fn fail(e: shear_mhd::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn params(nu: f64, mu: f64, beta: f64) -> Result<PhysicalParams, JsValue> {
    let p = PhysicalParams::new(nu, mu, beta);
    p.validate("params").map_err(fail)?;
    Ok(p)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(|e| JsValue::from_str(&e.to_string()))
}

/// Regime tag for `(nu, mu)`.
#[wasm_bindgen]
pub fn regime(nu: f64, mu: f64, beta: f64) -> Result<String, JsValue> {
    Ok(params(nu, mu, beta)?.regime().tag().to_string())
}

/// Log multipliers of one mode on `samples` times in `[0, t_max]`.
#[wasm_bindgen]
pub fn multiplier_table(nu: f64, mu: f64, beta: f64, k: f64, eta: f64, t_max: f64, samples: usize) -> Result<String, JsValue> {
    let cfg = MultiplierTableConfig {
        params: params(nu, mu, beta)?,
        modes: vec![[k, eta]],
        t_max,
        samples,
    };
    to_json(&cfg.rows().map_err(fail)?)
}

/// Single-mode linear trajectory with unit vorticity data.
#[wasm_bindgen]
pub fn linear_mode(nu: f64, mu: f64, beta: f64, k: f64, eta: f64, t_final: f64) -> Result<String, JsValue> {
    let mut cfg = LinearRunConfig::new(params(nu, mu, beta)?, k, eta);
    if t_final > 0.0 {
        cfg.t_final = Some(t_final);
    }
    cfg.validate().map_err(fail)?;
    let (rows, summary) = linear_run(&cfg).map_err(fail)?;
    to_json(&json!({ "rows": rows, "summary": summary }))
}

/// Amplification envelope over a small mode sample.
#[wasm_bindgen]
pub fn envelope(nu: f64, mu: f64, beta: f64, horizon: f64) -> Result<String, JsValue> {
    params(nu, mu, beta)?;
    let cfg = LinearSweepConfig {
        points: vec![[nu, mu]],
        beta,
        modes: None,
        horizon,
        curve_points: 120,
        rtol: 1e-8,
        monotonicity_tol: 1e-8,
    };
    cfg.validate().map_err(fail)?;
    let pt = linear_sweep_point(nu, mu, &cfg).map_err(fail)?;
    to_json(&json!({
        "regime": pt.regime,
        "envelope": pt.envelope,
        "monotone": pt.monotone,
    }))
}
