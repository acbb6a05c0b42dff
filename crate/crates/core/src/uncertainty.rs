//! Matched/unmatched structure of the model uncertainty.
//!
//! In original coordinates the uncertainty splits into the part collinear
//! with the input field and the part in its annihilator. In output-derivative
//! coordinates the same split shows up as `φ_m` (input channel) and `φ_u`
//! (the first `n-1` rows). The unmatched parts vanish together, which
//! [`certify_theorem1`] checks pointwise.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::system::{default_step, lie_fd_oracle, FlatSystem, ScalarField};

/// Absolute tolerance for quantities obtained through finite differences.
pub const FD_TOL: f64 = 1e-6;
/// Relative tolerance for purely algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-12;

/// Known bounds `|Δ1(x)| ≤ δ1(x)` and `|Δ3(x)| ≤ δ3(x) < 1`.
#[derive(Clone)]
pub struct UncertaintyBounds {
    delta1: ScalarField,
    delta3: ScalarField,
}

impl fmt::Debug for UncertaintyBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UncertaintyBounds").finish_non_exhaustive()
    }
}

impl UncertaintyBounds {
    pub fn new(
        delta1: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        delta3: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            delta1: Arc::new(delta1),
            delta3: Arc::new(delta3),
        }
    }

    /// No uncertainty at all.
    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0)
    }

    pub fn delta1(&self, x: &[f64]) -> f64 {
        (self.delta1)(x)
    }

    pub fn delta3(&self, x: &[f64]) -> f64 {
        (self.delta3)(x)
    }

    /// Evaluates both bounds and enforces `δ1 ≥ 0`, `0 ≤ δ3 < 1`.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, f64)> {
        let d1 = self.delta1(x);
        let d3 = self.delta3(x);
        if !(d3 >= 0.0 && d3 < 1.0) {
            return Err(Error::GainInfeasible { delta3: d3 });
        }
        if !(d1 >= 0.0) || !d1.is_finite() {
            return Err(Error::Config(format!("delta1 bound must be finite and >= 0, got {d1}")));
        }
        Ok((d1, d3))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub matched: Vec<f64>,
    pub unmatched: Vec<f64>,
}

/// Splits `delta` into `g g⁺ Δ` and `g⊥ g⊥⁺ Δ`.
pub fn decompose_vector(g: &[f64], delta: &[f64]) -> Result<Decomposition> {
    let g_plus = linalg::left_pseudo_inverse(g)?;
    let perp = linalg::annihilator(g)?;
    let along = linalg::dot(&g_plus, delta);
    let matched: Vec<f64> = g.iter().map(|gi| gi * along).collect();
    // The annihilator columns are orthonormal, so its pseudo-inverse is its
    // transpose.
    let coords = perp.vec_mul(delta);
    let unmatched = perp.mul_vec(&coords);
    Ok(Decomposition { matched, unmatched })
}

/// Matched/unmatched split of the plant uncertainty at `x`.
pub fn decompose(sys: &FlatSystem, x: &[f64]) -> Result<Decomposition> {
    decompose_vector(&sys.g(x), &sys.delta(x))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformedUncertainty {
    /// `φ_m = 𝓛_Δ 𝓛_f^{n-1} h`.
    pub matched: f64,
    /// `φ_u = [𝓛_Δ h, …, 𝓛_Δ 𝓛_f^{n-2} h, 0]`.
    pub unmatched: Vec<f64>,
}

/// Uncertainty seen in the nominal output-derivative coordinates, computed by
/// differentiating each `𝓛_f^k h` along `Δ`.
pub fn phi_transformed(sys: &FlatSystem, x: &[f64]) -> Result<TransformedUncertainty> {
    let n = sys.dim();
    let delta = sys.uncertainty_field();
    let step = default_step(x);
    let lie = |k: usize| {
        let level = |y: &[f64]| sys.lf_h(y, k);
        lie_fd_oracle(&*delta, &level, x, step)
    };
    let mut unmatched: Vec<f64> = (0..n.saturating_sub(1)).map(lie).collect();
    unmatched.push(0.0);
    let matched = lie(n - 1);
    if let Some(index) = unmatched.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow { index });
    }
    if !matched.is_finite() {
        return Err(Error::NumericOverflow { index: n - 1 });
    }
    Ok(TransformedUncertainty { matched, unmatched })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Theorem1Report {
    pub samples: usize,
    /// Samples where `Δ_u` vanished (and `φ_u` was confirmed to vanish).
    pub matched: usize,
    /// Samples where `Δ_u ≠ 0` and `φ_u ≠ 0`.
    pub unmatched_confirmed: usize,
    /// Samples where `Δ_u ≠ 0` but `φ_u` is below tolerance.
    pub inconclusive: usize,
    /// Largest `‖φ_u‖` among matched samples.
    pub worst_matched_phi_u: f64,
    /// Smallest `‖φ_u‖` among unmatched samples.
    pub weakest_unmatched_phi_u: f64,
}

/// Pointwise check that `Δ_u(x) = 0` forces `φ_u(x) = 0`, with the converse
/// recorded per sample.
pub fn certify_theorem1(sys: &FlatSystem, samples: &[Vec<f64>]) -> Result<Theorem1Report> {
    if samples.is_empty() {
        return Err(Error::Config("theorem check needs samples".into()));
    }
    let mut rep = Theorem1Report {
        samples: samples.len(),
        weakest_unmatched_phi_u: f64::INFINITY,
        ..Default::default()
    };
    for (sample, x) in samples.iter().enumerate() {
        let dec = decompose(sys, x)?;
        let delta_norm = linalg::norm(&sys.delta(x));
        let phi_u = linalg::norm(&phi_transformed(sys, x)?.unmatched);
        if linalg::norm(&dec.unmatched) <= ALGEBRAIC_TOL * (1.0 + delta_norm) {
            if phi_u > FD_TOL * (1.0 + delta_norm) {
                return Err(Error::TheoremViolation {
                    sample,
                    magnitude: phi_u,
                });
            }
            rep.matched += 1;
            rep.worst_matched_phi_u = rep.worst_matched_phi_u.max(phi_u);
        } else {
            if phi_u > FD_TOL {
                rep.unmatched_confirmed += 1;
            } else {
                rep.inconclusive += 1;
            }
            rep.weakest_unmatched_phi_u = rep.weakest_unmatched_phi_u.min(phi_u);
        }
    }
    Ok(rep)
}

/// Auxiliary uncertainties entering the output-derivative dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxDeltas {
    /// `𝓛_{f+Δ}^n h − 𝓛_f^n h`.
    pub d1: f64,
    /// `𝓛_g 𝓛_{f+Δ}^{n-1} h − 𝓛_g 𝓛_f^{n-1} h`.
    pub d2: f64,
    /// `Δ2 / 𝓛_g 𝓛_f^{n-1} h`.
    pub d3: f64,
}

pub fn aux_deltas(sys: &FlatSystem, x: &[f64]) -> Result<AuxDeltas> {
    let n = sys.dim();
    let coeff = sys.lg_lf_h(x);
    if coeff == 0.0 || !coeff.is_finite() {
        return Err(Error::DegenerateControl { t: f64::NAN });
    }
    let d1 = sys.lfd_h(x, n) - sys.lf_h(x, n);
    let d2 = sys.lg_lfd_h(x) - coeff;
    Ok(AuxDeltas {
        d1,
        d2,
        d3: d2 / coeff,
    })
}

/// Fails if the truth uncertainties at `x` exceed the supplied bounds.
pub fn check_bounds(bounds: &UncertaintyBounds, aux: &AuxDeltas, x: &[f64], t: f64) -> Result<()> {
    let (d1, d3) = bounds.evaluate(x)?;
    if aux.d1.abs() > d1 {
        return Err(Error::BoundViolation {
            t,
            detail: format!("|Δ1| = {} > δ1 = {}", aux.d1.abs(), d1),
        });
    }
    if aux.d3.abs() > d3 {
        return Err(Error::BoundViolation {
            t,
            detail: format!("|Δ3| = {} > δ3 = {}", aux.d3.abs(), d3),
        });
    }
    Ok(())
}
