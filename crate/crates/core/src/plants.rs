//! Shipped plant families.
//!
//! [`PerturbedChain`] is the integrator chain with unmatched coupling
//! perturbations `α_i ξ_{i+1}` in every row but the last and a matched term
//! `φ_m(ξ)` in the input channel. Its output derivatives are
//! `y^{(k)} = p_k ξ_{k+1}` with `p_k = ∏_{i≤k} (1 + α_i)`, which makes every
//! auxiliary uncertainty available in closed form.
//!
//! [`LinearPlant`] covers `ẋ = A x + g u + D x`, `y = cᵀx` and is mostly used
//! to exercise the certification code on plants that are not already in
//! normal form.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::system::FlatSystem;
use crate::uncertainty::UncertaintyBounds;

/// Matched perturbation `φ_m(ξ)` together with the known bound `δ(ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatchedTerm {
    None,
    /// `scale · ‖ξ‖²`, bounded by `|scale| · ‖ξ‖²`.
    SumSquares { scale: f64 },
    /// `amplitude · sin(ξ_1)`, bounded by `|amplitude|`.
    Sine { amplitude: f64 },
}

impl MatchedTerm {
    pub fn value(&self, xi: &[f64]) -> f64 {
        match self {
            MatchedTerm::None => 0.0,
            MatchedTerm::SumSquares { scale } => scale * linalg::dot(xi, xi),
            MatchedTerm::Sine { amplitude } => amplitude * xi[0].sin(),
        }
    }

    pub fn bound(&self, xi: &[f64]) -> f64 {
        match self {
            MatchedTerm::None => 0.0,
            MatchedTerm::SumSquares { scale } => scale.abs() * linalg::dot(xi, xi),
            MatchedTerm::Sine { amplitude } => amplitude.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbedChain {
    pub n: usize,
    pub alpha: Vec<f64>,
    pub matched: MatchedTerm,
    pub rho: f64,
}

/// A built plant plus the uncertainty bounds each controller family uses.
#[derive(Clone, Debug)]
pub struct Plant {
    pub system: FlatSystem,
    /// `δ1`, `δ3` bounding the auxiliary uncertainties for the redesign.
    pub bounds: UncertaintyBounds,
    /// Bound a matched-only design would use: `δ1 = δ(ξ)`, `δ3 = 0`.
    pub matched_bounds: UncertaintyBounds,
}

impl PerturbedChain {
    /// Three-state chain with `α = (0.5, -0.5)`, `φ_m = ‖ξ‖²` and `ρ = 0.25`.
    pub fn reference_instance() -> Self {
        Self {
            n: 3,
            alpha: vec![0.5, -0.5],
            matched: MatchedTerm::SumSquares { scale: 1.0 },
            rho: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("perturbed_chain: n must be >= 1".into()));
        }
        if self.alpha.len() != self.n - 1 {
            return Err(Error::Config(format!(
                "perturbed_chain: alpha needs {} entries, got {}",
                self.n - 1,
                self.alpha.len()
            )));
        }
        if let Some((i, a)) = self
            .alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !(**a > -1.0 && **a < 1.0))
        {
            return Err(Error::Config(format!(
                "perturbed_chain: alpha[{i}] = {a} must lie in (-1, 1)"
            )));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!(
                "perturbed_chain: rho = {} must lie in [0, 1)",
                self.rho
            )));
        }
        let p = self.p(self.n - 1);
        if !(1.0 - self.rho <= p && p <= 1.0 + self.rho) {
            return Err(Error::Config(format!(
                "perturbed_chain: p_(n-1) = {p} outside [1 - rho, 1 + rho] for rho = {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// `p_k = ∏_{i=1}^{k} (1 + α_i)`, with `p_0 = 1`.
    pub fn p(&self, k: usize) -> f64 {
        self.alpha[..k].iter().map(|a| 1.0 + a).product()
    }

    pub fn build(&self) -> Result<Plant> {
        self.validate()?;
        let n = self.n;
        let p: Arc<Vec<f64>> = Arc::new((0..n).map(|k| self.p(k)).collect());
        let alpha = Arc::new(self.alpha.clone());
        let matched = Arc::new(self.matched.clone());

        let system = {
            let (alpha, m_delta, m_lie) = (alpha.clone(), matched.clone(), matched.clone());
            let (p_lie, p_gain) = (p.clone(), p.clone());
            FlatSystem::builder(n)
                .drift(move |x| {
                    let mut v = vec![0.0; n];
                    v[..n - 1].copy_from_slice(&x[1..]);
                    v
                })
                .input(move |_| {
                    let mut b = vec![0.0; n];
                    b[n - 1] = 1.0;
                    b
                })
                .output(|x| x[0])
                .uncertainty(move |x| {
                    let mut d = vec![0.0; n];
                    for i in 0..n - 1 {
                        d[i] = alpha[i] * x[i + 1];
                    }
                    d[n - 1] = m_delta.value(x);
                    d
                })
                .nominal_lie(move |x, k| if k < n { x[k] } else { 0.0 })
                .nominal_gain(|_| 1.0)
                .uncertain_lie(move |x, k| {
                    if k < n {
                        p_lie[k] * x[k]
                    } else {
                        p_lie[n - 1] * m_lie.value(x)
                    }
                })
                .uncertain_gain(move |_| p_gain[n - 1])
                .build()?
        };

        let rho = self.rho;
        let m = matched.clone();
        let bounds = UncertaintyBounds::new(
            move |x| (1.0 + rho) * m.bound(x),
            move |_| rho,
        );
        let m = matched;
        let matched_bounds = UncertaintyBounds::new(move |x| m.bound(x), |_| 0.0);
        Ok(Plant {
            system,
            bounds,
            matched_bounds,
        })
    }
}

/// `ẋ = A x + g u + D x`, `y = cᵀ x`, with bounds `δ1(x) = delta1_gain ‖x‖`
/// and constant `δ3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPlant {
    pub a: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub d: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub delta1_gain: f64,
    #[serde(default)]
    pub delta3: f64,
}

impl LinearPlant {
    pub fn build(&self) -> Result<Plant> {
        let n = self.g.len();
        let a = Matrix::from_rows(&self.a)?;
        let d = match &self.d {
            Some(d) => Matrix::from_rows(d)?,
            None => Matrix::zeros(n, n),
        };
        if n == 0
            || (a.rows(), a.cols()) != (n, n)
            || (d.rows(), d.cols()) != (n, n)
            || self.c.len() != n
        {
            return Err(Error::Config(format!(
                "linear plant: A, D must be {n}x{n} and c must have {n} entries"
            )));
        }
        if !(self.delta1_gain >= 0.0) || !(self.delta3 >= 0.0 && self.delta3 < 1.0) {
            return Err(Error::Config(
                "linear plant: need delta1_gain >= 0 and 0 <= delta3 < 1".into(),
            ));
        }
        let ad = a.add(&d);
        // Rows cᵀA^k and cᵀ(A+D)^k for k = 0..=n.
        let powers = |m: &Matrix| {
            let mut rows = vec![self.c.clone()];
            for k in 0..n {
                let next = m.vec_mul(&rows[k]);
                rows.push(next);
            }
            rows
        };
        let nominal_rows = Arc::new(powers(&a));
        let uncertain_rows = Arc::new(powers(&ad));
        let nominal_gain = linalg::dot(&nominal_rows[n - 1], &self.g);
        let uncertain_gain = linalg::dot(&uncertain_rows[n - 1], &self.g);

        let (a, d, g, c) = (Arc::new(a), Arc::new(d), self.g.clone(), self.c.clone());
        let (nr, ur) = (nominal_rows, uncertain_rows);
        let system = FlatSystem::builder(n)
            .drift(move |x| a.mul_vec(x))
            .input(move |_| g.clone())
            .output(move |x| linalg::dot(&c, x))
            .uncertainty(move |x| d.mul_vec(x))
            .nominal_lie(move |x, k| linalg::dot(&nr[k], x))
            .nominal_gain(move |_| nominal_gain)
            .uncertain_lie(move |x, k| linalg::dot(&ur[k], x))
            .uncertain_gain(move |_| uncertain_gain)
            .build()?;

        let (gain, delta3) = (self.delta1_gain, self.delta3);
        Ok(Plant {
            system,
            bounds: UncertaintyBounds::new(move |x| gain * linalg::norm(x), move |_| delta3),
            matched_bounds: UncertaintyBounds::new(move |x| gain * linalg::norm(x), |_| 0.0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_instance_constants() {
        let chain = PerturbedChain::reference_instance();
        chain.validate().unwrap();
        assert_eq!(chain.p(1), 1.5);
        assert_eq!(chain.p(2), 0.75);
        assert_eq!(chain.p(2) - 1.0, -0.25);
    }

    #[test]
    fn zero_alpha_allows_zero_rho() {
        let chain = PerturbedChain {
            n: 3,
            alpha: vec![0.0, 0.0],
            matched: MatchedTerm::SumSquares { scale: 1.0 },
            rho: 0.0,
        };
        let plant = chain.build().unwrap();
        let x = [0.3, -0.2, 0.7];
        assert_eq!(plant.bounds.delta3(&x), 0.0);
        assert_eq!(plant.system.delta(&x), vec![0.0, 0.0, chain.matched.value(&x)]);
    }

    #[test]
    fn sum_squares_bound() {
        let m = MatchedTerm::SumSquares { scale: 1.0 };
        let x = [1.0, 2.0, 3.0];
        assert_eq!(m.value(&x), 14.0);
        assert_eq!(m.bound(&x), 14.0);
        let plant = PerturbedChain::reference_instance().build().unwrap();
        assert_eq!(plant.bounds.delta1(&x), 1.25 * 14.0);
        assert_eq!(plant.matched_bounds.delta1(&x), 14.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut chain = PerturbedChain::reference_instance();
        chain.alpha[0] = 1.5;
        assert!(matches!(chain.build(), Err(Error::Config(_))));

        let mut chain = PerturbedChain::reference_instance();
        chain.rho = 0.1; // p_2 = 0.75 needs rho >= 0.25
        assert!(matches!(chain.validate(), Err(Error::Config(_))));

        let mut chain = PerturbedChain::reference_instance();
        chain.alpha.pop();
        assert!(chain.validate().is_err());
    }

    #[test]
    fn linear_plant_rejects_mismatched_shapes() {
        let lp = LinearPlant {
            a: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            g: vec![0.0, 1.0],
            c: vec![1.0],
            d: None,
            delta1_gain: 0.0,
            delta3: 0.0,
        };
        assert!(lp.build().is_err());
    }
}
