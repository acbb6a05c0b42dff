//! Model-following control laws.
//!
//! The model control loop (MCL) is the feedback-linearised nominal model,
//! which is just an integrator chain `ξ̇* = A ξ* + B ω*` driven by the
//! tracking law `ω* = y_d^{(n)} − kᵀ(ξ* − ξ_d)`. The process control loop
//! (PCL) feeds back `ξ̃_n = ξ_n − ξ*`, where `ξ_n` are the measured output
//! derivatives, through `ṽ = −k̃ᵀ ξ̃_n` plus the discontinuous redesign term
//! `ṽ_L = −Γ̃_n sgn(w̃)`, `w̃ = 2 ξ̃_nᵀ P̃ B`. The plant input is
//!
//! ```text
//! u = (−𝓛_f^n h(x) + ω* + ṽ + ṽ_L) / 𝓛_g 𝓛_f^{n-1} h(x)
//! ```
//!
//! The gain `Γ̃_n` dominates `(δ1 + δ3 |−𝓛_f^n h + ω* + ṽ|) / (1 − δ3)`,
//! which keeps `Ṽ = ξ̃_nᵀ P̃ ξ̃_n` decreasing under the bounded uncertainty.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::ode::rk4_step;
use crate::system::{FlatSystem, Reference};
use crate::uncertainty::UncertaintyBounds;

/// `sgn` with `sgn(0) = 0`.
pub fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// How the discontinuous term switches. Written `pure` or `layer:EPS`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SignMode {
    Pure,
    /// `sat(w̃ / ε)`.
    BoundaryLayer(f64),
}

impl SignMode {
    pub fn apply(self, w: f64) -> f64 {
        match self {
            SignMode::Pure => sgn(w),
            SignMode::BoundaryLayer(eps) => (w / eps).clamp(-1.0, 1.0),
        }
    }
}

impl Default for SignMode {
    fn default() -> Self {
        SignMode::Pure
    }
}

impl FromStr for SignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "pure" {
            return Ok(SignMode::Pure);
        }
        let eps = s
            .strip_prefix("layer:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Config(format!("sign mode must be `pure` or `layer:EPS`, got `{s}`")))?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("boundary layer width must be > 0, got {eps}")));
        }
        Ok(SignMode::BoundaryLayer(eps))
    }
}

impl TryFrom<String> for SignMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SignMode> for String {
    fn from(m: SignMode) -> String {
        m.to_string()
    }
}

impl fmt::Display for SignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignMode::Pure => f.write_str("pure"),
            SignMode::BoundaryLayer(eps) => write!(f, "layer:{eps}"),
        }
    }
}

/// How `Γ̃_n` is chosen by [`MfcController::full_control`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GainPolicy {
    /// The state-dependent bound plus margin `η`.
    Schedule,
    /// A constant, bypassing the bounds. `Fixed(0.0)` removes the redesign.
    Fixed(f64),
}

/// Everything computed while evaluating one control law.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlOutput {
    pub u: f64,
    pub omega_star: f64,
    pub omega_tilde: f64,
    pub v_tilde: f64,
    pub v_l: f64,
    pub w_tilde: f64,
    pub gamma: f64,
    /// `Ṽ` of the fed-back error.
    pub lyapunov: f64,
    /// `−𝓛_f^n h + ω* + ṽ`.
    pub bracket: f64,
}

#[derive(Clone, Debug)]
pub struct MfcController {
    n: usize,
    a: Matrix,
    b: Vec<f64>,
    k: Vec<f64>,
    k_tilde: Vec<f64>,
    p: Matrix,
    bounds: UncertaintyBounds,
    gain_margin: f64,
    sign_mode: SignMode,
    gain_policy: GainPolicy,
    model_state: Vec<f64>,
}

impl MfcController {
    /// Controller from MCL gain `k` and PCL gain `k̃`. Both closed loops must
    /// be Hurwitz; `P̃` solves `(A − B k̃ᵀ)ᵀ P̃ + P̃ (A − B k̃ᵀ) = −I`.
    pub fn new(k: Vec<f64>, k_tilde: Vec<f64>, bounds: UncertaintyBounds) -> Result<Self> {
        let n = k.len();
        if k_tilde.len() != n {
            return Err(Error::InvalidDimension(format!(
                "k has {n} entries but k_tilde has {}",
                k_tilde.len()
            )));
        }
        let (a, b) = linalg::brunovsky_pair(n)?;
        linalg::solve_lyapunov(&linalg::closed_loop(&a, &b, &k))?;
        let p = linalg::solve_lyapunov(&linalg::closed_loop(&a, &b, &k_tilde))?;
        Ok(Self {
            n,
            a,
            b,
            k,
            k_tilde,
            p,
            bounds,
            gain_margin: 0.0,
            sign_mode: SignMode::Pure,
            gain_policy: GainPolicy::Schedule,
            model_state: vec![0.0; n],
        })
    }

    /// Controller with gains placed at the given MCL and PCL poles.
    pub fn from_poles(mcl_poles: &[f64], pcl_poles: &[f64], bounds: UncertaintyBounds) -> Result<Self> {
        let n = mcl_poles.len();
        let k = linalg::pole_placement(n, mcl_poles)?;
        let k_tilde = linalg::pole_placement(n, pcl_poles)?;
        Self::new(k, k_tilde, bounds)
    }

    pub fn with_gain_margin(mut self, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(Error::Config(format!("gain margin must be >= 0, got {eta}")));
        }
        self.gain_margin = eta;
        Ok(self)
    }

    pub fn with_sign_mode(mut self, mode: SignMode) -> Result<Self> {
        if let SignMode::BoundaryLayer(eps) = mode {
            if !(eps > 0.0) {
                return Err(Error::Config(format!("boundary layer width must be > 0, got {eps}")));
            }
        }
        self.sign_mode = mode;
        Ok(self)
    }

    pub fn with_gain_policy(mut self, policy: GainPolicy) -> Self {
        self.gain_policy = policy;
        self
    }

    pub fn with_model_state(mut self, xi_star: Vec<f64>) -> Result<Self> {
        self.set_model_state(xi_star)?;
        Ok(self)
    }

    pub fn set_model_state(&mut self, xi_star: Vec<f64>) -> Result<()> {
        if xi_star.len() != self.n {
            return Err(Error::InvalidDimension(format!(
                "model state needs {} entries, got {}",
                self.n,
                xi_star.len()
            )));
        }
        self.model_state = xi_star;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn k_tilde(&self) -> &[f64] {
        &self.k_tilde
    }

    pub fn lyapunov_matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn bounds(&self) -> &UncertaintyBounds {
        &self.bounds
    }

    pub fn gain_margin(&self) -> f64 {
        self.gain_margin
    }

    pub fn sign_mode(&self) -> SignMode {
        self.sign_mode
    }

    pub fn model_state(&self) -> &[f64] {
        &self.model_state
    }

    /// `Ṽ(e) = eᵀ P̃ e`.
    pub fn lyapunov(&self, err: &[f64]) -> f64 {
        self.p.quadratic_form(err)
    }

    /// `w̃(e) = 2 eᵀ P̃ B`.
    pub fn switching_variable(&self, err: &[f64]) -> f64 {
        2.0 * linalg::dot(&self.p.vec_mul(err), &self.b)
    }

    /// MCL tracking law at the current model state.
    pub fn mcl_control(&self, t: f64, reference: &Reference) -> f64 {
        self.tracking_law(&self.model_state, t, reference)
    }

    fn tracking_law(&self, xi_star: &[f64], t: f64, reference: &Reference) -> f64 {
        let xi_d = reference.desired_state(t, self.n);
        reference.derivative(t, self.n) - linalg::dot(&self.k, &linalg::sub(xi_star, &xi_d))
    }

    fn chain_rhs(&self, xi: &[f64], omega: f64) -> Vec<f64> {
        let mut d = self.a.mul_vec(xi);
        for (di, bi) in d.iter_mut().zip(&self.b) {
            *di += bi * omega;
        }
        d
    }

    /// Advances the model chain by one RK4 step with `ω*` held constant.
    pub fn mcl_step(&mut self, omega_star: f64, dt: f64) {
        debug_assert!(dt > 0.0);
        self.model_state = rk4_step(|_, xi| self.chain_rhs(xi, omega_star), 0.0, &self.model_state, dt);
    }

    /// Advances the model chain by one RK4 step of the closed MCL, with the
    /// tracking law re-evaluated at every stage. A model started on `ξ_d`
    /// then stays on it to integrator accuracy.
    pub fn mcl_advance(&mut self, t: f64, dt: f64, reference: &Reference) {
        debug_assert!(dt > 0.0);
        self.model_state = rk4_step(
            |s, xi| self.chain_rhs(xi, self.tracking_law(xi, s, reference)),
            t,
            &self.model_state,
            dt,
        );
    }

    /// State-dependent redesign gain for model state `xi_star`:
    /// `(δ1 + δ3 |−𝓛_f^n h + y_d^{(n)} + v + ṽ|) / (1 − δ3) + η`.
    #[allow(clippy::too_many_arguments)]
    pub fn gain_schedule(
        &self,
        x: &[f64],
        xi_star: &[f64],
        xi_n: &[f64],
        t: f64,
        reference: &Reference,
        sys: &FlatSystem,
    ) -> Result<f64> {
        let omega_star = self.tracking_law(xi_star, t, reference);
        let v_tilde = -linalg::dot(&self.k_tilde, &linalg::sub(xi_n, xi_star));
        let bracket = -sys.lf_h(x, self.n) + omega_star + v_tilde;
        self.scheduled_gain(x, bracket)
    }

    fn scheduled_gain(&self, x: &[f64], bracket: f64) -> Result<f64> {
        let (d1, d3) = self.bounds.evaluate(x)?;
        Ok((d1 + d3 * bracket.abs()) / (1.0 - d3) + self.gain_margin)
    }

    /// Process-loop component `ω̃ = ṽ + ṽ_L` for the current model state.
    pub fn pcl_control(
        &self,
        x: &[f64],
        xi_n: &[f64],
        t: f64,
        reference: &Reference,
        sys: &FlatSystem,
    ) -> Result<ControlOutput> {
        let omega_star = self.mcl_control(t, reference);
        let mut out = self.law(sys, x, t, &self.model_state, xi_n, omega_star, Gain::Redesign)?;
        // Only the PCL part is meaningful here.
        out.u = f64::NAN;
        Ok(out)
    }

    /// Full model-following law, fed back through the output derivatives.
    pub fn full_control(
        &self,
        x: &[f64],
        xi_n: &[f64],
        t: f64,
        reference: &Reference,
        sys: &FlatSystem,
    ) -> Result<ControlOutput> {
        let omega_star = self.mcl_control(t, reference);
        self.law(sys, x, t, &self.model_state, xi_n, omega_star, Gain::Redesign)
    }

    /// Law designed for matched uncertainty only: feedback of `τ(x) − ξ*` and
    /// gain `δ1(x) + η`.
    pub fn matched_only_control(
        &self,
        x: &[f64],
        t: f64,
        reference: &Reference,
        sys: &FlatSystem,
    ) -> Result<ControlOutput> {
        let xi = sys.tau(x)?;
        let omega_star = self.mcl_control(t, reference);
        self.law(sys, x, t, &self.model_state, &xi, omega_star, Gain::MatchedOnly)
    }

    /// Single-loop law: the model is replaced by the desired state, so
    /// `ω* = y_d^{(n)}` and the feedback error is `ξ_n − ξ_d`.
    pub fn single_loop_control(
        &self,
        x: &[f64],
        xi_n: &[f64],
        t: f64,
        reference: &Reference,
        sys: &FlatSystem,
    ) -> Result<ControlOutput> {
        let xi_d = reference.desired_state(t, self.n);
        let omega_star = reference.derivative(t, self.n);
        self.law(sys, x, t, &xi_d, xi_n, omega_star, Gain::Redesign)
    }

    #[allow(clippy::too_many_arguments)]
    fn law(
        &self,
        sys: &FlatSystem,
        x: &[f64],
        t: f64,
        xi_star: &[f64],
        xi_fb: &[f64],
        omega_star: f64,
        gain: Gain,
    ) -> Result<ControlOutput> {
        let err = linalg::sub(xi_fb, xi_star);
        let v_tilde = -linalg::dot(&self.k_tilde, &err);
        let w_tilde = self.switching_variable(&err);
        let lf_n = sys.lf_h(x, self.n);
        let bracket = -lf_n + omega_star + v_tilde;
        let gamma = match (self.gain_policy, gain) {
            (GainPolicy::Fixed(g), _) => g,
            (GainPolicy::Schedule, Gain::Redesign) => self.scheduled_gain(x, bracket)?,
            (GainPolicy::Schedule, Gain::MatchedOnly) => {
                self.bounds.evaluate(x)?.0 + self.gain_margin
            }
        };
        let v_l = -gamma * self.sign_mode.apply(w_tilde);
        let coeff = sys.lg_lf_h(x);
        if coeff == 0.0 || !coeff.is_finite() {
            return Err(Error::DegenerateControl { t });
        }
        let omega_tilde = v_tilde + v_l;
        Ok(ControlOutput {
            u: (-lf_n + omega_star + omega_tilde) / coeff,
            omega_star,
            omega_tilde,
            v_tilde,
            v_l,
            w_tilde,
            gamma,
            lyapunov: self.lyapunov(&err),
            bracket,
        })
    }
}

#[derive(Clone, Copy)]
enum Gain {
    Redesign,
    MatchedOnly,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::PerturbedChain;

    fn reference_controller(bounds: UncertaintyBounds) -> MfcController {
        MfcController::from_poles(&[-1.0; 3], &[-4.0; 3], bounds)
            .unwrap()
            .with_model_state(vec![0.5, 0.0, 0.0])
            .unwrap()
    }

    #[test]
    fn mcl_control_at_start_of_reference_run() {
        let ctrl = reference_controller(UncertaintyBounds::zero());
        assert_eq!(ctrl.k(), &[1.0, 3.0, 3.0]);
        // ξ_d(0) = [0, 1, 0], third derivative of sin at 0 is −1,
        // kᵀ(ξ* − ξ_d) = 0.5 − 3.
        let omega = ctrl.mcl_control(0.0, &Reference::sine(1.0, 1.0, 0.0, 0.0));
        assert!((omega - 1.5).abs() < 1e-15);
    }

    #[test]
    fn mcl_control_zero_error_is_feedforward() {
        let r = Reference::sine(1.0, 1.0, 0.0, 0.0);
        let t = 0.7;
        let ctrl = reference_controller(UncertaintyBounds::zero())
            .with_model_state(r.desired_state(t, 3))
            .unwrap();
        assert_eq!(ctrl.mcl_control(t, &r), r.derivative(t, 3));

        let ctrl = ctrl.with_model_state(vec![0.0; 3]).unwrap();
        assert_eq!(ctrl.mcl_control(1.0, &Reference::polynomial(vec![0.0])), 0.0);
    }

    #[test]
    fn mcl_step_chain_responses() {
        let mut ctrl = reference_controller(UncertaintyBounds::zero())
            .with_model_state(vec![0.0; 3])
            .unwrap();
        ctrl.mcl_step(0.0, 0.1);
        assert_eq!(ctrl.model_state(), &[0.0; 3]);
        ctrl.mcl_step(1.0, 0.1);
        let s = ctrl.model_state();
        assert!((s[0] - 0.1f64.powi(3) / 6.0).abs() < 1e-16);
        assert!((s[1] - 0.005).abs() < 1e-16);
        assert!((s[2] - 0.1).abs() < 1e-16);

        let mut one = MfcController::from_poles(&[-1.0], &[-2.0], UncertaintyBounds::zero()).unwrap();
        one.mcl_step(1.0, 0.1);
        assert!((one.model_state()[0] - 0.1).abs() < 1e-16);
    }

    #[test]
    fn pcl_components_at_start_of_reference_run() {
        let plant = PerturbedChain::reference_instance().build().unwrap();
        let ctrl = reference_controller(plant.bounds.clone());
        let r = Reference::sine(1.0, 1.0, 0.0, 0.0);
        let x = [1.0, 0.0, 0.0];
        let xi_n = plant.system.tau_n(&x).unwrap();
        let out = ctrl.pcl_control(&x, &xi_n, 0.0, &r, &plant.system).unwrap();
        assert_eq!(out.v_tilde, -32.0);
        let p = ctrl.lyapunov_matrix();
        assert!((out.w_tilde - 2.0 * 0.5 * p[(0, 2)]).abs() < 1e-15);
        assert_eq!(out.v_l, -out.gamma * sgn(out.w_tilde));
    }

    #[test]
    fn zero_error_has_no_switching() {
        let plant = PerturbedChain::reference_instance().build().unwrap();
        let ctrl = reference_controller(plant.bounds.clone());
        let r = Reference::sine(1.0, 1.0, 0.0, 0.0);
        let out = ctrl
            .pcl_control(&[0.5, 0.0, 0.0], &[0.5, 0.0, 0.0], 0.0, &r, &plant.system)
            .unwrap();
        assert_eq!(out.v_tilde, 0.0);
        assert_eq!(out.w_tilde, 0.0);
        assert_eq!(out.v_l, 0.0);
    }

    #[test]
    fn switching_term_is_odd_in_w() {
        let plant = PerturbedChain::reference_instance().build().unwrap();
        let ctrl = reference_controller(UncertaintyBounds::new(|_| 2.0, |_| 0.0));
        let r = Reference::polynomial(vec![0.0]);
        let ctrl = ctrl.with_model_state(vec![0.0; 3]).unwrap();
        let a = ctrl.pcl_control(&[0.0; 3], &[0.1, 0.2, 0.3], 0.0, &r, &plant.system).unwrap();
        let b = ctrl.pcl_control(&[0.0; 3], &[-0.1, -0.2, -0.3], 0.0, &r, &plant.system).unwrap();
        assert_eq!(a.w_tilde, -b.w_tilde);
        assert_eq!(a.v_l, -b.v_l);
        assert_eq!(a.v_l.abs(), 2.0);
    }

    #[test]
    fn gain_schedule_arithmetic() {
        let plant = PerturbedChain::reference_instance().build().unwrap();
        let r = Reference::polynomial(vec![0.0]);
        let zero = reference_controller(UncertaintyBounds::zero())
            .with_gain_margin(0.3)
            .unwrap();
        let g = zero
            .gain_schedule(&[1.0; 3], &[0.0; 3], &[2.0; 3], 0.0, &r, &plant.system)
            .unwrap();
        assert_eq!(g, 0.3);

        // δ1 = 1, δ3 = 0.5, bracket = 3 → (1 + 1.5) / 0.5 = 5. On the chain
        // 𝓛_f^n h = 0 and with a zero reference the bracket is −kᵀξ* − k̃ᵀ(ξ_n − ξ*).
        let ctrl = reference_controller(UncertaintyBounds::new(|_| 1.0, |_| 0.5));
        let xi_star = [-3.0, 0.0, 0.0];
        let g = ctrl
            .gain_schedule(&[0.0; 3], &xi_star, &xi_star, 0.0, &r, &plant.system)
            .unwrap();
        assert!((g - 5.0).abs() < 1e-15);
    }

    #[test]
    fn gain_schedule_reference_bound_with_zero_bracket() {
        let plant = PerturbedChain::reference_instance().build().unwrap();
        let ctrl = reference_controller(plant.bounds.clone());
        let r = Reference::polynomial(vec![0.0]);
        let x = [0.3, -0.4, 1.2];
        let g = ctrl
            .gain_schedule(&x, &[0.0; 3], &[0.0; 3], 0.0, &r, &plant.system)
            .unwrap();
        let norm2 = 0.09 + 0.16 + 1.44;
        assert!((g - 1.25 / 0.75 * norm2).abs() < 1e-14);
    }

    #[test]
    fn infeasible_bound_is_rejected() {
        let plant = PerturbedChain::reference_instance().build().unwrap();
        let ctrl = reference_controller(UncertaintyBounds::new(|_| 0.0, |_| 1.0));
        let r = Reference::polynomial(vec![0.0]);
        assert!(matches!(
            ctrl.gain_schedule(&[0.0; 3], &[0.0; 3], &[0.0; 3], 0.0, &r, &plant.system),
            Err(Error::GainInfeasible { .. })
        ));
    }

    #[test]
    fn nominal_feedforward() {
        let plant = crate::plants::PerturbedChain {
            n: 3,
            alpha: vec![0.0, 0.0],
            matched: crate::plants::MatchedTerm::None,
            rho: 0.0,
        }
        .build()
        .unwrap();
        let r = Reference::sine(1.0, 1.0, 0.0, 0.0);
        let t = 1.3;
        let xi_d = r.desired_state(t, 3);
        let ctrl = reference_controller(UncertaintyBounds::zero())
            .with_model_state(xi_d.clone())
            .unwrap();
        let out = ctrl.full_control(&xi_d, &xi_d, t, &r, &plant.system).unwrap();
        assert_eq!(out.u, r.derivative(t, 3));
    }

    #[test]
    fn control_coefficient_scales_input() {
        let make = |c: f64| {
            FlatSystem::builder(1)
                .drift(|_| vec![0.0])
                .input(move |_| vec![c])
                .output(|x| x[0])
                .nominal_lie(|x, k| if k == 0 { x[0] } else { 0.0 })
                .nominal_gain(move |_| c)
                .build()
                .unwrap()
        };
        let ctrl = MfcController::from_poles(&[-1.0], &[-2.0], UncertaintyBounds::zero()).unwrap();
        let r = Reference::polynomial(vec![0.0, 1.0]);
        let u1 = ctrl.full_control(&[0.4], &[0.4], 0.0, &r, &make(1.0)).unwrap().u;
        let u2 = ctrl.full_control(&[0.4], &[0.4], 0.0, &r, &make(2.0)).unwrap().u;
        assert_eq!(u2, 0.5 * u1);
        assert!(matches!(
            ctrl.full_control(&[0.4], &[0.4], 0.0, &r, &make(0.0)),
            Err(Error::DegenerateControl { .. })
        ));
    }

    #[test]
    fn boundary_layer_saturates() {
        let m = SignMode::BoundaryLayer(0.1);
        assert_eq!(m.apply(0.05), 0.5);
        assert_eq!(m.apply(-3.0), -1.0);
        assert_eq!(SignMode::Pure.apply(0.0), 0.0);
        let ctrl = MfcController::from_poles(&[-1.0], &[-2.0], UncertaintyBounds::zero()).unwrap();
        assert!(ctrl.with_sign_mode(SignMode::BoundaryLayer(0.0)).is_err());
    }

    #[test]
    fn sign_mode_parsing() {
        assert_eq!("pure".parse::<SignMode>().unwrap(), SignMode::Pure);
        assert_eq!("layer:0.001".parse::<SignMode>().unwrap(), SignMode::BoundaryLayer(1e-3));
        assert!("layer:-1".parse::<SignMode>().is_err());
        assert!("smooth".parse::<SignMode>().is_err());
        let m = SignMode::BoundaryLayer(0.25);
        assert_eq!(m.to_string().parse::<SignMode>().unwrap(), m);
    }
}
