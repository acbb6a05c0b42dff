//! Fixed-step closed-loop simulation.
//!
//! The plant is integrated with RK4 while the control input is held over
//! each step. The model chain is advanced alongside it. Runtime audits
//! (bound validity, gain dominance, Lyapunov decrease) run at every step;
//! series are stored every `decimation` steps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{ControlOutput, GainPolicy, MfcController, SignMode};
use crate::differentiator::DerivativeSource;
use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::rk4_step;
use crate::plants::{LinearPlant, PerturbedChain, Plant};
use crate::system::{check_relative_degree, FlatSystem, Reference};
use crate::uncertainty::{aux_deltas, check_bounds};

/// Switching-variable magnitude below which the Lyapunov audits skip a step.
pub const W_MIN: f64 = 1e-9;
/// States with larger norm count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    PerturbedChain(PerturbedChain),
    Linear(LinearPlant),
}

impl SystemSpec {
    pub fn build(&self) -> Result<Plant> {
        match self {
            SystemSpec::PerturbedChain(c) => c.build(),
            SystemSpec::Linear(l) => l.build(),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineParams {
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyParams {
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Sin(SineParams),
    Poly(PolyParams),
}

impl ReferenceSpec {
    pub fn build(&self) -> Reference {
        match self {
            ReferenceSpec::Sin(p) => Reference::sine(p.amplitude, p.frequency, p.phase, p.offset),
            ReferenceSpec::Poly(p) => Reference::polynomial(p.coeffs.clone()),
        }
    }
}

/// Where `ξ_n` comes from. Written `oracle` or `levant:L`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DerivSpec {
    #[default]
    Oracle,
    Levant { lipschitz: f64 },
}

impl FromStr for DerivSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(DerivSpec::Oracle);
        }
        let l = s
            .strip_prefix("levant:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                Error::Config(format!("derivative source must be `oracle` or `levant:L`, got `{s}`"))
            })?;
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("Lipschitz constant must be > 0, got {l}")));
        }
        Ok(DerivSpec::Levant { lipschitz: l })
    }
}

impl TryFrom<String> for DerivSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DerivSpec> for String {
    fn from(d: DerivSpec) -> String {
        d.to_string()
    }
}

impl fmt::Display for DerivSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DerivSpec::Oracle => f.write_str("oracle"),
            DerivSpec::Levant { lipschitz } => write!(f, "levant:{lipschitz}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mfc,
    MatchedOnly,
    SingleLoop,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Mfc => "mfc",
            Variant::MatchedOnly => "matched_only",
            Variant::SingleLoop => "single_loop",
        }
    }

    /// Variants whose gain is sized for the unmatched uncertainty, and so
    /// are subject to the bound and Lyapunov audits.
    pub fn is_redesign(self) -> bool {
        !matches!(self, Variant::MatchedOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Initial model state: explicit, or the desired state `ξ_d(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelInit {
    State(Vec<f64>),
    Named(NamedInit),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedInit {
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub system: SystemSpec,
    pub variant: Variant,
    pub reference: ReferenceSpec,
    pub mcl_poles: Vec<f64>,
    pub pcl_poles: Vec<f64>,
    pub x0: Vec<f64>,
    pub xi_star0: ModelInit,
    pub dt: f64,
    pub horizon: f64,
    pub sign_mode: SignMode,
    pub deriv: DerivSpec,
    pub gain_margin: f64,
    /// Replaces the scheduled gain with a constant when set.
    pub fixed_gain: Option<f64>,
    pub decimation: usize,
}

impl SimConfig {
    /// The three-state perturbed chain tracking `sin t` from `ξ(0) = [1, 0, 0]`
    /// with model start `[0.5, 0, 0]`, poles at −1 (model) and −4 (process).
    pub fn reference_run(variant: Variant) -> Self {
        Self {
            system: SystemSpec::PerturbedChain(PerturbedChain::reference_instance()),
            variant,
            reference: ReferenceSpec::Sin(SineParams {
                amplitude: 1.0,
                frequency: 1.0,
                phase: 0.0,
                offset: 0.0,
            }),
            mcl_poles: vec![-1.0; 3],
            pcl_poles: vec![-4.0; 3],
            x0: vec![1.0, 0.0, 0.0],
            xi_star0: ModelInit::State(vec![0.5, 0.0, 0.0]),
            dt: 1e-4,
            horizon: 20.0,
            sign_mode: SignMode::Pure,
            deriv: DerivSpec::Oracle,
            gain_margin: 0.0,
            fixed_gain: None,
            decimation: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.decimation == 0 {
            return Err(Error::Config("decimation must be >= 1".into()));
        }
        if !(self.gain_margin >= 0.0) {
            return Err(Error::Config("gain margin must be >= 0".into()));
        }
        if let Some(g) = self.fixed_gain {
            if !(g >= 0.0) {
                return Err(Error::Config("fixed gain must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Scalar summaries of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub variant: String,
    pub steps: usize,
    /// `max |y − y_d|` over the last quarter of the horizon.
    pub final_window_max_abs_e: f64,
    /// `max |w̃(ξ̃_n)|` over the last quarter of the horizon.
    pub final_window_max_abs_w: f64,
    /// `max Ṽ(ξ̃_n)` over the last quarter of the horizon.
    pub final_window_max_v: f64,
    pub max_v: f64,
    /// Steps where `Γ̃_n` fell short of the truth-side requirement.
    pub gain_audit_violations: usize,
    /// Steps where `dṼ/dt > −‖ξ̃_n‖²` while `|w̃| > W_MIN`.
    pub lyapunov_rate_violations: usize,
    /// Decimated intervals where `Ṽ` grew while `|w̃| > W_MIN` throughout.
    pub lyapunov_monotone_violations: usize,
    /// Steps where the truth uncertainty exceeded the controller's bounds
    /// (only counted for the matched-only design; fatal for the others).
    pub bound_exceedances: usize,
    /// Whether the per-step audits were active for this run.
    pub audited: bool,
}

impl Summary {
    pub fn audits_pass(&self) -> bool {
        self.gain_audit_violations == 0
            && self.lyapunov_rate_violations == 0
            && self.lyapunov_monotone_violations == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub xi_star: Vec<Vec<f64>>,
    pub xi_n: Vec<Vec<f64>>,
    pub xi_d: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub y_d: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub omega_star: Vec<f64>,
    pub omega_tilde: Vec<f64>,
    /// `Ṽ(ξ_n − ξ*)`.
    pub v: Vec<f64>,
    /// `w̃(ξ_n − ξ*)`.
    pub w: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `Ṽ(τ(x) − ξ*)`, the error seen by the matched-only design.
    pub v_nominal: Vec<f64>,
    /// `w̃(τ(x) − ξ*)`.
    pub w_nominal: Vec<f64>,
    pub summary: Summary,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV with header `t,e,y,y_d,u,V,w,Gamma,x1..,xistar1..,xin1..`,
    /// 17 significant digits, LF line endings.
    pub fn to_csv(&self) -> String {
        let n = self.x.first().map_or(0, Vec::len);
        let mut header = vec!["t", "e", "y", "y_d", "u", "V", "w", "Gamma"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        for prefix in ["x", "xistar", "xin"] {
            header.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let mut row = vec![
                self.t[i], self.e[i], self.y[i], self.y_d[i], self.u[i], self.v[i], self.w[i],
                self.gamma[i],
            ];
            row.extend_from_slice(&self.x[i]);
            row.extend_from_slice(&self.xi_star[i]);
            row.extend_from_slice(&self.xi_n[i]);
            out.push_str(&row.iter().map(|v| format_full(*v)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    /// CSV `t,V,w` of the diagnostics along `τ(x) − ξ*`.
    pub fn nominal_csv(&self) -> String {
        let mut out = String::from("t,V,w\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                format_full(self.t[i]),
                format_full(self.v_nominal[i]),
                format_full(self.w_nominal[i])
            ));
        }
        out
    }
}

fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

struct Recorder {
    decimation: usize,
    out: SimResult,
}

/// Simulates one closed loop.
pub fn run(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let plant = cfg.system.build()?;
    let sys = &plant.system;
    let n = sys.dim();
    if cfg.x0.len() != n {
        return Err(Error::Config(format!("x0 needs {n} entries, got {}", cfg.x0.len())));
    }
    if cfg.mcl_poles.len() != n || cfg.pcl_poles.len() != n {
        return Err(Error::Config(format!("need {n} model and {n} process poles")));
    }
    check_relative_degree(sys, std::slice::from_ref(&cfg.x0), 1e-6)?;
    let reference = cfg.reference.build();
    reference.check_bounded(n, cfg.horizon, 1000)?;

    let bounds = if cfg.variant.is_redesign() {
        plant.bounds.clone()
    } else {
        plant.matched_bounds.clone()
    };
    let xi_star0 = match &cfg.xi_star0 {
        ModelInit::State(s) => s.clone(),
        ModelInit::Named(NamedInit::Reference) => reference.desired_state(0.0, n),
    };
    let policy = cfg.fixed_gain.map_or(GainPolicy::Schedule, GainPolicy::Fixed);
    let mut ctrl = MfcController::from_poles(&cfg.mcl_poles, &cfg.pcl_poles, bounds)?
        .with_gain_margin(cfg.gain_margin)?
        .with_sign_mode(cfg.sign_mode)?
        .with_gain_policy(policy)
        .with_model_state(xi_star0)?;
    let mut source = match cfg.deriv {
        DerivSpec::Oracle => DerivativeSource::Oracle,
        DerivSpec::Levant { lipschitz } => DerivativeSource::levant(n, lipschitz)?,
    };

    // Lyapunov audits only make sense for the exact law: pure switching,
    // exact derivatives, scheduled gain, redesign variant.
    let audited = cfg.variant.is_redesign()
        && cfg.sign_mode == SignMode::Pure
        && cfg.deriv == DerivSpec::Oracle
        && cfg.fixed_gain.is_none();

    let steps = cfg.steps();
    let window_start = cfg.horizon * 0.75;
    let mut rec = Recorder {
        decimation: cfg.decimation,
        out: SimResult::default(),
    };
    let mut summary = Summary {
        variant: cfg.variant.name().to_string(),
        steps,
        audited,
        ..Default::default()
    };
    let mut interval_switching = true;
    let mut x = cfg.x0.clone();
    for i in 0..=steps {
        let t = i as f64 * cfg.dt;
        let xi_meas = source.derive(sys.h(&x), cfg.dt, t, sys, &x)?;
        let out = match cfg.variant {
            Variant::Mfc => ctrl.full_control(&x, &xi_meas, t, &reference, sys)?,
            Variant::MatchedOnly => ctrl.matched_only_control(&x, t, &reference, sys)?,
            Variant::SingleLoop => ctrl.single_loop_control(&x, &xi_meas, t, &reference, sys)?,
        };
        if !out.u.is_finite() {
            return Err(Error::Divergence { t });
        }

        let xi_n = sys.tau_n(&x)?;
        let xi_star = match cfg.variant {
            Variant::SingleLoop => reference.desired_state(t, n),
            _ => ctrl.model_state().to_vec(),
        };
        let err = linalg::sub(&xi_n, &xi_star);
        let w_true = ctrl.switching_variable(&err);
        if w_true.abs() <= W_MIN {
            interval_switching = false;
        }

        let aux = aux_deltas(sys, &x)?;
        if cfg.variant.is_redesign() {
            check_bounds(ctrl.bounds(), &aux, &x, t)?;
        } else if check_bounds(ctrl.bounds(), &aux, &x, t).is_err() {
            summary.bound_exceedances += 1;
        }
        if audited {
            audit_step(&ctrl, sys, &x, &err, &out, w_true, &aux, &mut summary);
        }
        if t >= window_start - 0.5 * cfg.dt {
            let e = xi_n[0] - reference.derivative(t, 0);
            summary.final_window_max_abs_e = summary.final_window_max_abs_e.max(e.abs());
            summary.final_window_max_abs_w = summary.final_window_max_abs_w.max(w_true.abs());
            summary.final_window_max_v = summary.final_window_max_v.max(ctrl.lyapunov(&err));
        }

        if i % rec.decimation == 0 {
            let v = ctrl.lyapunov(&err);
            if audited && rec.out.len() > 0 && interval_switching {
                let prev = *rec.out.v.last().unwrap();
                summary.max_v = summary.max_v.max(prev);
                if v > prev + 1e-6 * summary.max_v.max(v) {
                    summary.lyapunov_monotone_violations += 1;
                }
            }
            interval_switching = w_true.abs() > W_MIN;
            let nominal_err = linalg::sub(&sys.tau(&x)?, &xi_star);
            let y_d = reference.derivative(t, 0);
            let o = &mut rec.out;
            o.t.push(t);
            o.x.push(x.clone());
            o.xi_star.push(xi_star.clone());
            o.xi_n.push(xi_n.clone());
            o.xi_d.push(reference.desired_state(t, n));
            o.y.push(xi_n[0]);
            o.y_d.push(y_d);
            o.e.push(xi_n[0] - y_d);
            o.u.push(out.u);
            o.omega_star.push(out.omega_star);
            o.omega_tilde.push(out.omega_tilde);
            o.v.push(v);
            o.w.push(w_true);
            o.gamma.push(out.gamma);
            o.v_nominal.push(ctrl.lyapunov(&nominal_err));
            o.w_nominal.push(ctrl.switching_variable(&nominal_err));
        }
        if i == steps {
            break;
        }

        let u = out.u;
        x = rk4_step(|_, s| sys.rhs(s, u), t, &x, cfg.dt);
        if x.iter().any(|v| !v.is_finite()) || linalg::norm(&x) > DIVERGENCE_NORM {
            return Err(Error::Divergence { t });
        }
        if cfg.variant != Variant::SingleLoop {
            ctrl.mcl_advance(t, cfg.dt, &reference);
        }
    }
    summary.max_v = rec.out.v.iter().copied().fold(0.0, f64::max);
    rec.out.summary = summary;
    Ok(rec.out)
}

/// Gain dominance and Lyapunov-rate checks at one step.
#[allow(clippy::too_many_arguments)]
fn audit_step(
    ctrl: &MfcController,
    sys: &FlatSystem,
    x: &[f64],
    err: &[f64],
    out: &ControlOutput,
    w: f64,
    aux: &crate::uncertainty::AuxDeltas,
    summary: &mut Summary,
) {
    let required = (aux.d1.abs() + aux.d3.abs() * out.bracket.abs()) / (1.0 - aux.d3.abs());
    if out.gamma < required * (1.0 - 1e-12) {
        summary.gain_audit_violations += 1;
    }
    if w.abs() > W_MIN {
        let n = sys.dim();
        // ξ̃̇_n = A ξ̃_n + B (y^{(n)} − ω*)
        let y_top = sys.lfd_h(x, n) + sys.lg_lfd_h(x) * out.u;
        let mut rate_vec = vec![0.0; n];
        rate_vec[..n - 1].copy_from_slice(&err[1..]);
        rate_vec[n - 1] = y_top - out.omega_star;
        let p = ctrl.lyapunov_matrix();
        let rate = 2.0 * linalg::dot(&p.mul_vec(err), &rate_vec);
        let bound = -linalg::dot(err, err);
        let tol = 1e-9 * (1.0 + rate.abs() + bound.abs());
        if rate > bound + tol {
            summary.lyapunov_rate_violations += 1;
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonResult {
    pub runs: Vec<(String, SimResult)>,
}

impl ComparisonResult {
    pub fn get(&self, label: &str) -> Option<&SimResult> {
        self.runs.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }
}

/// Runs several variants on a shared plant, reference and time grid. Runs
/// execute concurrently; labels are the variant names, suffixed on repeats.
pub fn run_comparison(cfgs: &[SimConfig]) -> Result<ComparisonResult> {
    if cfgs.len() < 2 {
        return Err(Error::Config("a comparison needs at least two runs".into()));
    }
    let first = &cfgs[0];
    for c in &cfgs[1..] {
        if c.system != first.system
            || c.reference != first.reference
            || c.dt != first.dt
            || c.horizon != first.horizon
            || c.decimation != first.decimation
        {
            return Err(Error::Config(
                "comparison runs must share plant, reference and time grid".into(),
            ));
        }
    }
    let results: Vec<Result<SimResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let mut runs = Vec::with_capacity(cfgs.len());
    for (cfg, res) in cfgs.iter().zip(results) {
        let base = cfg.variant.name().to_string();
        let repeats = runs.iter().filter(|(l, _): &&(String, SimResult)| l.starts_with(&base)).count();
        let label = if repeats == 0 { base } else { format!("{base}_{}", repeats + 1) };
        runs.push((label, res?));
    }
    Ok(ComparisonResult { runs })
}

/// Model state trajectories from the classical and the chain realisation of
/// the model loop, sampled every `decimation` steps.
#[derive(Clone, Debug, Default)]
pub struct MclComparison {
    pub t: Vec<f64>,
    pub classical: Vec<Vec<f64>>,
    pub chain: Vec<Vec<f64>>,
}

impl MclComparison {
    pub fn max_deviation(&self) -> f64 {
        self.classical
            .iter()
            .zip(&self.chain)
            .map(|(a, b)| linalg::max_abs(&linalg::sub(a, b)))
            .fold(0.0, f64::max)
    }
}

/// Simulates the classical model loop: the nominal nonlinear model under its
/// linearising law `u* = (−𝓛_f^n h(x*) + ω*) / 𝓛_g 𝓛_f^{n-1} h(x*)`, mapped
/// through `τ`. The chain realisation is run alongside for comparison.
pub fn classical_mcl_oracle(cfg: &SimConfig) -> Result<MclComparison> {
    cfg.validate()?;
    let plant = cfg.system.build()?;
    let sys = &plant.system;
    let n = sys.dim();
    let reference = cfg.reference.build();
    let xi_star0 = match &cfg.xi_star0 {
        ModelInit::State(s) => s.clone(),
        ModelInit::Named(NamedInit::Reference) => reference.desired_state(0.0, n),
    };
    let mut chain = MfcController::from_poles(&cfg.mcl_poles, &cfg.pcl_poles, plant.bounds.clone())?
        .with_model_state(xi_star0.clone())?;
    let mut x_star = sys.tau_inverse(&xi_star0, &xi_star0)?;
    let k = chain.k().to_vec();

    let classical_rhs = |t: f64, xs: &[f64]| -> Vec<f64> {
        let xi = sys.tau(xs).unwrap_or_else(|_| vec![f64::NAN; n]);
        let xi_d = reference.desired_state(t, n);
        let omega = reference.derivative(t, n) - linalg::dot(&k, &linalg::sub(&xi, &xi_d));
        let u_star = (-sys.lf_h(xs, n) + omega) / sys.lg_lf_h(xs);
        let f = sys.f(xs);
        let g = sys.g(xs);
        f.iter().zip(&g).map(|(fi, gi)| fi + gi * u_star).collect()
    };

    let mut out = MclComparison::default();
    let steps = cfg.steps();
    for i in 0..=steps {
        let t = i as f64 * cfg.dt;
        if i % cfg.decimation == 0 {
            out.t.push(t);
            out.classical.push(sys.tau(&x_star)?);
            out.chain.push(chain.model_state().to_vec());
        }
        if i == steps {
            break;
        }
        x_star = rk4_step(classical_rhs, t, &x_star, cfg.dt);
        if x_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t });
        }
        chain.mcl_advance(t, cfg.dt, &reference);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(variant: Variant) -> SimConfig {
        SimConfig {
            horizon: 0.5,
            dt: 1e-3,
            decimation: 10,
            ..SimConfig::reference_run(variant)
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = short(Variant::Mfc);
        c.horizon = 0.0;
        assert!(matches!(run(&c), Err(Error::Config(_))));
        let mut c = short(Variant::Mfc);
        c.decimation = 0;
        assert!(run(&c).is_err());
        let mut c = short(Variant::Mfc);
        c.x0 = vec![1.0];
        assert!(run(&c).is_err());
    }

    #[test]
    fn series_have_equal_length() {
        let r = run(&short(Variant::Mfc)).unwrap();
        assert_eq!(r.len(), 51);
        for len in [r.x.len(), r.u.len(), r.v.len(), r.w.len(), r.gamma.len(), r.e.len()] {
            assert_eq!(len, r.len());
        }
        assert!(r.u.iter().all(|u| u.is_finite()));
    }

    #[test]
    fn csv_header_and_precision() {
        let r = run(&short(Variant::Mfc)).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,e,y,y_d,u,V,w,Gamma,x1,x2,x3,xistar1,xistar2,xistar3,xin1,xin2,xin3"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 17);
        assert_eq!(row[0], "0.0000000000000000e0");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn comparison_needs_shared_grid() {
        let a = short(Variant::Mfc);
        let mut b = short(Variant::MatchedOnly);
        b.dt = 2e-3;
        assert!(run_comparison(&[a.clone(), b]).is_err());
        assert!(run_comparison(&[a]).is_err());
    }

    #[test]
    fn deriv_spec_parsing() {
        assert_eq!("oracle".parse::<DerivSpec>().unwrap(), DerivSpec::Oracle);
        assert_eq!(
            "levant:2".parse::<DerivSpec>().unwrap(),
            DerivSpec::Levant { lipschitz: 2.0 }
        );
        assert!("levant:0".parse::<DerivSpec>().is_err());
        assert!("exact".parse::<DerivSpec>().is_err());
    }
}
