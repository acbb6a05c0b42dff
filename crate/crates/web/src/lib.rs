//! Browser bindings for the simulator.
//!
//! Every export takes and returns a JSON string. The `*_json` functions hold
//! the logic and are plain Rust, so they are tested natively.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use mfcsim::controller::SignMode;
use mfcsim::linalg::{self, Matrix};
use mfcsim::plants::{MatchedTerm, PerturbedChain};
use mfcsim::sim::{self, ModelInit, SimConfig, SystemSpec, Summary, Variant};
use mfcsim::uncertainty::decompose_vector;

/// Upper bound on points returned per series.
const MAX_POINTS: usize = 1000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub alpha: Vec<f64>,
    pub rho: f64,
    #[serde(default = "one")]
    pub matched_scale: f64,
    pub model_pole: f64,
    pub process_pole: f64,
    #[serde(default)]
    pub sign: SignMode,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
}

fn one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Mfc, Variant::MatchedOnly]
}

#[derive(Debug, Serialize)]
pub struct Series {
    pub variant: String,
    pub t: Vec<f64>,
    pub e: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SimulateResponse {
    pub runs: Vec<Series>,
}

fn parse<'a, T: Deserialize<'a>>(input: &'a str) -> Result<T, String> {
    serde_json::from_str(input).map_err(|e| format!("bad request: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Simulates the perturbed chain `n = alpha.len() + 1` tracking `sin t` from
/// `x(0) = e1`, with the model started at half the initial output.
pub fn simulate_json(input: &str) -> Result<String, String> {
    let req: SimulateRequest = parse(input)?;
    let n = req.alpha.len() + 1;
    if !(req.dt > 0.0) || !(req.horizon > 0.0) || req.horizon / req.dt > 1e6 {
        return Err("need dt > 0, horizon > 0 and at most 1e6 steps".into());
    }
    let chain = PerturbedChain {
        n,
        alpha: req.alpha.clone(),
        matched: MatchedTerm::SumSquares {
            scale: req.matched_scale,
        },
        rho: req.rho,
    };
    chain.validate().map_err(|e| e.to_string())?;
    let steps = (req.horizon / req.dt).round() as usize;
    let mut x0 = vec![0.0; n];
    x0[0] = 1.0;
    let mut xi_star0 = vec![0.0; n];
    xi_star0[0] = 0.5;
    let base = SimConfig {
        system: SystemSpec::PerturbedChain(chain),
        mcl_poles: vec![req.model_pole; n],
        pcl_poles: vec![req.process_pole; n],
        x0,
        xi_star0: ModelInit::State(xi_star0),
        dt: req.dt,
        horizon: req.horizon,
        sign_mode: req.sign,
        decimation: steps.div_ceil(MAX_POINTS).max(1),
        ..SimConfig::reference_run(Variant::Mfc)
    };
    let runs = req
        .variants
        .iter()
        .map(|&variant| {
            let cfg = SimConfig {
                variant,
                ..base.clone()
            };
            match sim::run(&cfg) {
                Ok(r) => Series {
                    variant: variant.name().into(),
                    t: r.t,
                    e: r.e,
                    v: r.v,
                    w: r.w,
                    u: r.u,
                    summary: Some(r.summary),
                    error: None,
                },
                Err(e) => Series {
                    variant: variant.name().into(),
                    t: Vec::new(),
                    e: Vec::new(),
                    v: Vec::new(),
                    w: Vec::new(),
                    u: Vec::new(),
                    summary: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    to_json(&SimulateResponse { runs })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeRequest {
    pub g: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct DecomposeResponse {
    pub matched: Vec<f64>,
    pub unmatched: Vec<f64>,
    pub matched_norm: f64,
    pub unmatched_norm: f64,
}

/// Splits `delta` into its component along `g` and the remainder.
pub fn decompose_json(input: &str) -> Result<String, String> {
    let req: DecomposeRequest = parse(input)?;
    if req.g.len() != req.delta.len() {
        return Err("g and delta must have the same length".into());
    }
    let d = decompose_vector(&req.g, &req.delta).map_err(|e| e.to_string())?;
    to_json(&DecomposeResponse {
        matched_norm: linalg::norm(&d.matched),
        unmatched_norm: linalg::norm(&d.unmatched),
        matched: d.matched,
        unmatched: d.unmatched,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignRequest {
    pub model_poles: Vec<f64>,
    pub process_poles: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct LoopDesign {
    pub gains: Vec<f64>,
    pub lyapunov: Vec<Vec<f64>>,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
pub struct DesignResponse {
    pub model: LoopDesign,
    pub process: LoopDesign,
}

fn design_loop(poles: &[f64]) -> Result<LoopDesign, String> {
    let n = poles.len();
    let k = linalg::pole_placement(n, poles).map_err(|e| e.to_string())?;
    let (a, b) = linalg::brunovsky_pair(n).map_err(|e| e.to_string())?;
    let acl = linalg::closed_loop(&a, &b, &k);
    let p: Matrix = linalg::solve_lyapunov(&acl).map_err(|e| e.to_string())?;
    Ok(LoopDesign {
        residual: linalg::lyapunov_residual(&acl, &p).max_abs(),
        lyapunov: (0..n).map(|i| p.row(i).to_vec()).collect(),
        gains: k,
    })
}

/// Gains placing the given closed-loop poles, with the matching Lyapunov matrix.
pub fn design_json(input: &str) -> Result<String, String> {
    let req: DesignRequest = parse(input)?;
    if req.model_poles.len() != req.process_poles.len() || req.model_poles.is_empty() {
        return Err("model and process loops need the same, non-zero number of poles".into());
    }
    to_json(&DesignResponse {
        model: design_loop(&req.model_poles)?,
        process: design_loop(&req.process_poles)?,
    })
}

#[wasm_bindgen]
pub fn simulate(input: &str) -> Result<String, JsValue> {
    simulate_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn decompose(input: &str) -> Result<String, JsValue> {
    decompose_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn design(input: &str) -> Result<String, JsValue> {
    design_json(input).map_err(|e| JsValue::from_str(&e))
}
