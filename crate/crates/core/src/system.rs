//! Flat single-input plants `ẋ = f(x) + g(x)u + Δ(x)`, `y = h(x)`.
//!
//! A [`FlatSystem`] carries its vector fields together with closed-form Lie
//! derivatives of the output. The nominal derivatives `𝓛_f^k h` are what the
//! controllers may use; the uncertain ones `𝓛_{f+Δ}^k h` are the truth and
//! are only read by the simulator (as the output derivatives a real plant
//! would expose) and by test oracles. Everything supplied in closed form can
//! be cross-checked with [`lie_fd_oracle`].

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type LieTower = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct FlatSystem {
    n: usize,
    f: VectorField,
    g: VectorField,
    h: ScalarField,
    delta: VectorField,
    lf_h: LieTower,
    lg_lf_h: ScalarField,
    lfd_h: LieTower,
    lg_lfd_h: ScalarField,
}

impl fmt::Debug for FlatSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlatSystem").field("n", &self.n).finish_non_exhaustive()
    }
}

/// Builder for [`FlatSystem`]. The drift, input field, output, nominal Lie
/// tower and nominal control coefficient are required. Without an
/// uncertainty the plant is nominal and the uncertain tower defaults to the
/// nominal one.
pub struct FlatSystemBuilder {
    n: usize,
    f: Option<VectorField>,
    g: Option<VectorField>,
    h: Option<ScalarField>,
    delta: Option<VectorField>,
    lf_h: Option<LieTower>,
    lg_lf_h: Option<ScalarField>,
    lfd_h: Option<LieTower>,
    lg_lfd_h: Option<ScalarField>,
}

impl FlatSystemBuilder {
    pub fn drift(mut self, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.f = Some(Arc::new(f));
        self
    }

    pub fn input(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.g = Some(Arc::new(g));
        self
    }

    pub fn output(mut self, h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.h = Some(Arc::new(h));
        self
    }

    pub fn uncertainty(
        mut self,
        delta: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.delta = Some(Arc::new(delta));
        self
    }

    /// `(x, k) ↦ 𝓛_f^k h(x)` for `k = 0..=n`.
    pub fn nominal_lie(mut self, lf_h: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static) -> Self {
        self.lf_h = Some(Arc::new(lf_h));
        self
    }

    /// `x ↦ 𝓛_g 𝓛_f^{n-1} h(x)`.
    pub fn nominal_gain(mut self, lg: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.lg_lf_h = Some(Arc::new(lg));
        self
    }

    /// `(x, k) ↦ 𝓛_{f+Δ}^k h(x)` for `k = 0..=n`.
    pub fn uncertain_lie(
        mut self,
        lfd_h: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.lfd_h = Some(Arc::new(lfd_h));
        self
    }

    /// `x ↦ 𝓛_g 𝓛_{f+Δ}^{n-1} h(x)`.
    pub fn uncertain_gain(mut self, lg: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.lg_lfd_h = Some(Arc::new(lg));
        self
    }

    pub fn build(self) -> Result<FlatSystem> {
        fn missing(what: &str) -> Error {
            Error::Config(format!("flat system is missing its {what}"))
        }
        if self.n == 0 {
            return Err(Error::InvalidDimension("state dimension must be >= 1".into()));
        }
        let n = self.n;
        let f = self.f.ok_or_else(|| missing("drift field f"))?;
        let g = self.g.ok_or_else(|| missing("input field g"))?;
        let h = self.h.ok_or_else(|| missing("output h"))?;
        let lf_h = self.lf_h.ok_or_else(|| missing("nominal Lie derivatives"))?;
        let lg_lf_h = self.lg_lf_h.ok_or_else(|| missing("nominal control coefficient"))?;
        let nominal = self.delta.is_none();
        let delta = self.delta.unwrap_or_else(|| Arc::new(move |_: &[f64]| vec![0.0; n]));
        let (lfd_h, lg_lfd_h) = match (self.lfd_h, self.lg_lfd_h) {
            (Some(a), Some(b)) => (a, b),
            (None, None) if nominal => (lf_h.clone(), lg_lf_h.clone()),
            _ => return Err(missing("uncertain Lie derivatives")),
        };
        Ok(FlatSystem {
            n,
            f,
            g,
            h,
            delta,
            lf_h,
            lg_lf_h,
            lfd_h,
            lg_lfd_h,
        })
    }
}

impl FlatSystem {
    pub fn builder(n: usize) -> FlatSystemBuilder {
        FlatSystemBuilder {
            n,
            f: None,
            g: None,
            h: None,
            delta: None,
            lf_h: None,
            lg_lf_h: None,
            lfd_h: None,
            lg_lfd_h: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn f(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }

    pub fn g(&self, x: &[f64]) -> Vec<f64> {
        (self.g)(x)
    }

    pub fn h(&self, x: &[f64]) -> f64 {
        (self.h)(x)
    }

    /// Truth uncertainty `Δ(x)`. Controllers never call this.
    pub fn delta(&self, x: &[f64]) -> Vec<f64> {
        (self.delta)(x)
    }

    pub fn lf_h(&self, x: &[f64], k: usize) -> f64 {
        (self.lf_h)(x, k)
    }

    pub fn lg_lf_h(&self, x: &[f64]) -> f64 {
        (self.lg_lf_h)(x)
    }

    pub fn lfd_h(&self, x: &[f64], k: usize) -> f64 {
        (self.lfd_h)(x, k)
    }

    pub fn lg_lfd_h(&self, x: &[f64]) -> f64 {
        (self.lg_lfd_h)(x)
    }

    pub fn drift_field(&self) -> VectorField {
        self.f.clone()
    }

    pub fn input_field(&self) -> VectorField {
        self.g.clone()
    }

    pub fn uncertainty_field(&self) -> VectorField {
        self.delta.clone()
    }

    /// `f + Δ`.
    pub fn perturbed_field(&self) -> VectorField {
        let f = self.f.clone();
        let d = self.delta.clone();
        Arc::new(move |x: &[f64]| {
            let mut v = f(x);
            for (vi, di) in v.iter_mut().zip(d(x)) {
                *vi += di;
            }
            v
        })
    }

    /// Plant right-hand side `f(x) + g(x) u + Δ(x)`.
    pub fn rhs(&self, x: &[f64], u: f64) -> Vec<f64> {
        let f = self.f(x);
        let g = self.g(x);
        let d = self.delta(x);
        f.iter()
            .zip(&g)
            .zip(&d)
            .map(|((fi, gi), di)| fi + gi * u + di)
            .collect()
    }

    /// Nominal output-derivative coordinates `τ(x) = [h, 𝓛_f h, …, 𝓛_f^{n-1} h]`.
    pub fn tau(&self, x: &[f64]) -> Result<Vec<f64>> {
        collect_finite((0..self.n).map(|k| self.lf_h(x, k)))
    }

    /// Output derivatives `τ_n(x) = [y, ẏ, …, y^{(n-1)}]` of the uncertain plant.
    pub fn tau_n(&self, x: &[f64]) -> Result<Vec<f64>> {
        collect_finite((0..self.n).map(|k| self.lfd_h(x, k)))
    }

    /// Finite-difference Jacobian `H(x) = ∂τ/∂x`; row `k` is `∂(𝓛_f^k h)/∂x`.
    /// Logs a warning when the estimated condition number exceeds `1e12`.
    pub fn tau_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.n;
        let step = default_step(x);
        let mut jac = Matrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            xp[j] = x[j] + step;
            let plus = self.tau(&xp)?;
            xp[j] = x[j] - step;
            let minus = self.tau(&xp)?;
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
            }
        }
        match condition_estimate(&jac) {
            Some(c) if c <= 1e12 => {}
            Some(c) => log::warn!("transform Jacobian is ill-conditioned at {x:?} (cond ~ {c:e})"),
            None => log::warn!("transform Jacobian is singular at {x:?}"),
        }
        Ok(jac)
    }

    /// Inverts `τ` by damped Newton iteration. Diagnostics only.
    pub fn tau_inverse(&self, xi: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
        let mut x = guess.to_vec();
        let residual = |x: &[f64]| -> Result<Vec<f64>> { Ok(linalg::sub(&self.tau(x)?, xi)) };
        let mut r = residual(&x)?;
        for _ in 0..50 {
            if linalg::max_abs(&r) <= 1e-10 {
                return Ok(x);
            }
            let jac = self.tau_jacobian(&x)?;
            let dx = linalg::lu_solve(&jac, &r)?;
            let base = linalg::norm(&r);
            let mut damping = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - damping * d).collect();
                let rt = residual(&trial)?;
                if linalg::norm(&rt) < base || damping < 1e-4 {
                    x = trial;
                    r = rt;
                    break;
                }
                damping *= 0.5;
            }
        }
        if linalg::max_abs(&r) <= 1e-10 {
            Ok(x)
        } else {
            Err(Error::Singular)
        }
    }
}

fn collect_finite(values: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    values
        .enumerate()
        .map(|(index, v)| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NumericOverflow { index })
            }
        })
        .collect()
}

/// `‖H‖₁ ‖H⁻¹‖₁`, or `None` when `H` is singular.
fn condition_estimate(h: &Matrix) -> Option<f64> {
    let n = h.rows();
    let norm1 = |m: &Matrix| {
        (0..m.cols())
            .map(|j| (0..m.rows()).map(|i| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = linalg::lu_solve(h, &e).ok()?;
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Some(norm1(h) * norm1(&inv))
}

/// Default finite-difference step `1e-6 (1 + ‖x‖)`.
pub fn default_step(x: &[f64]) -> f64 {
    1e-6 * (1.0 + linalg::norm(x))
}

/// Central-difference estimate of `∇scalar(x) · field(x)`.
pub fn lie_fd_oracle(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    scalar: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    step: f64,
) -> f64 {
    let v = field(x);
    let vn = linalg::norm(&v);
    if vn == 0.0 {
        return 0.0;
    }
    // Step along the unit direction so the perturbation size is independent
    // of the field magnitude.
    let plus: Vec<f64> = x.iter().zip(&v).map(|(a, d)| a + step * d / vn).collect();
    let minus: Vec<f64> = x.iter().zip(&v).map(|(a, d)| a - step * d / vn).collect();
    vn * (scalar(&plus) - scalar(&minus)) / (2.0 * step)
}

/// Worst-case results of a relative-degree check over a sample set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelativeDegreeReport {
    pub samples: usize,
    /// Largest `|𝓛_g 𝓛_f^k h|`, `k ≤ n-2`, nominal and uncertain combined.
    pub worst_vanishing: f64,
    /// Smallest `|𝓛_g 𝓛_f^{n-1} h|` seen (nominal or uncertain).
    pub min_control_coefficient: f64,
}

/// Verifies that `y` has relative degree `n` for both the nominal and the
/// uncertain drift at every sample.
pub fn check_relative_degree(
    sys: &FlatSystem,
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<RelativeDegreeReport> {
    if samples.is_empty() {
        return Err(Error::Config("relative-degree check needs samples".into()));
    }
    let n = sys.dim();
    let g = sys.input_field();
    let mut report = RelativeDegreeReport {
        samples: samples.len(),
        worst_vanishing: 0.0,
        min_control_coefficient: f64::INFINITY,
    };
    for (sample, x) in samples.iter().enumerate() {
        let step = default_step(x);
        for k in 0..n {
            let nominal = |y: &[f64]| sys.lf_h(y, k);
            let uncertain = |y: &[f64]| sys.lfd_h(y, k);
            let ln = lie_fd_oracle(&*g, &nominal, x, step);
            let lu = lie_fd_oracle(&*g, &uncertain, x, step);
            let scale = 1.0 + sys.lf_h(x, k).abs().max(sys.lfd_h(x, k).abs());
            if k + 1 < n {
                let worst = ln.abs().max(lu.abs());
                report.worst_vanishing = report.worst_vanishing.max(worst);
                if worst > tol * scale {
                    return Err(Error::RelativeDegreeViolation {
                        sample,
                        k,
                        magnitude: worst,
                    });
                }
            } else {
                let weakest = ln.abs().min(lu.abs());
                report.min_control_coefficient = report.min_control_coefficient.min(weakest);
                if weakest <= tol * scale {
                    return Err(Error::RelativeDegreeViolation {
                        sample,
                        k,
                        magnitude: weakest,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Worst relative disagreement between closed-form Lie derivatives and a
/// one-layer finite difference of the previous level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LieCheckReport {
    pub nominal: f64,
    pub uncertain: f64,
    pub nominal_gain: f64,
    pub uncertain_gain: f64,
}

impl LieCheckReport {
    pub fn worst(&self) -> f64 {
        self.nominal
            .max(self.uncertain)
            .max(self.nominal_gain)
            .max(self.uncertain_gain)
    }
}

/// Checks each level of both Lie towers against a central difference of the
/// level below it, plus `h` itself and the two control coefficients.
/// Errors are reported as `|closed - fd| / (1 + |closed|)`.
pub fn check_lie_callbacks(sys: &FlatSystem, samples: &[Vec<f64>]) -> LieCheckReport {
    let n = sys.dim();
    let f = sys.drift_field();
    let fd = sys.perturbed_field();
    let g = sys.input_field();
    let rel = |closed: f64, est: f64| (closed - est).abs() / (1.0 + closed.abs());
    let mut rep = LieCheckReport::default();
    for x in samples {
        let step = default_step(x);
        let h = sys.h(x);
        rep.nominal = rep.nominal.max(rel(h, sys.lf_h(x, 0)));
        rep.uncertain = rep.uncertain.max(rel(h, sys.lfd_h(x, 0)));
        for k in 1..=n {
            let below = |y: &[f64]| sys.lf_h(y, k - 1);
            let est = lie_fd_oracle(&*f, &below, x, step);
            rep.nominal = rep.nominal.max(rel(sys.lf_h(x, k), est));

            let below = |y: &[f64]| sys.lfd_h(y, k - 1);
            let est = lie_fd_oracle(&*fd, &below, x, step);
            rep.uncertain = rep.uncertain.max(rel(sys.lfd_h(x, k), est));
        }
        let top = |y: &[f64]| sys.lf_h(y, n - 1);
        let est = lie_fd_oracle(&*g, &top, x, step);
        rep.nominal_gain = rep.nominal_gain.max(rel(sys.lg_lf_h(x), est));
        let top = |y: &[f64]| sys.lfd_h(y, n - 1);
        let est = lie_fd_oracle(&*g, &top, x, step);
        rep.uncertain_gain = rep.uncertain_gain.max(rel(sys.lg_lfd_h(x), est));
    }
    rep
}

/// Reference output `y_d(t)` with derivatives up to some order.
#[derive(Clone)]
pub struct Reference {
    order: usize,
    derivative: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
}

impl fmt::Debug for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Reference").field("order", &self.order).finish_non_exhaustive()
    }
}

impl Reference {
    /// `derivative(t, i)` must return `y_d^{(i)}(t)` for `i = 0..=order`.
    pub fn new(order: usize, derivative: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            order,
            derivative: Arc::new(derivative),
        }
    }

    /// `amplitude · sin(frequency · t + phase) + offset`, any order.
    pub fn sine(amplitude: f64, frequency: f64, phase: f64, offset: f64) -> Self {
        Self::new(usize::MAX, move |t, i| {
            let arg = frequency * t + phase + i as f64 * std::f64::consts::FRAC_PI_2;
            let base = if i == 0 { offset } else { 0.0 };
            base + amplitude * frequency.powi(i as i32) * arg.sin()
        })
    }

    /// Polynomial with coefficients lowest degree first.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::new(usize::MAX, move |t, i| {
            coeffs
                .iter()
                .enumerate()
                .skip(i)
                .map(|(p, c)| {
                    let falling: f64 = ((p - i + 1)..=p).map(|m| m as f64).product();
                    c * falling * t.powi((p - i) as i32)
                })
                .sum()
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn derivative(&self, t: f64, i: usize) -> f64 {
        debug_assert!(i <= self.order);
        (self.derivative)(t, i)
    }

    /// Desired external state `ξ_d = [y_d, ẏ_d, …, y_d^{(n-1)}]`.
    pub fn desired_state(&self, t: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.derivative(t, i)).collect()
    }

    /// Samples `y_d^{(i)}`, `i = 0..=n`, on `[0, horizon]` and returns the
    /// largest magnitude seen; fails if any sample is non-finite.
    pub fn check_bounded(&self, n: usize, horizon: f64, samples: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for s in 0..=samples {
            let t = horizon * s as f64 / samples.max(1) as f64;
            for i in 0..=n {
                let v = self.derivative(t, i);
                if !v.is_finite() {
                    return Err(Error::NumericOverflow { index: i });
                }
                worst = worst.max(v.abs());
            }
        }
        Ok(worst)
    }
}
