//! Sources for the output derivatives `ξ_n = [y, ẏ, …, y^{(n-1)}]`.
//!
//! The oracle reads them straight off the plant (`τ_n(x)`). The Levant mode
//! runs the recursive robust exact differentiator on the measured output,
//! integrated with explicit Euler at the simulation step:
//!
//! ```text
//! ż_0 = v_0,  v_0 = −λ_m L^{1/(m+1)} |z_0 − y|^{m/(m+1)} sgn(z_0 − y) + z_1
//! ż_i = v_i,  v_i = −λ_{m−i} L^{1/(m−i+1)} |z_i − v_{i−1}|^{(m−i)/(m−i+1)} sgn(z_i − v_{i−1}) + z_{i+1}
//! ż_m = −λ_0 L sgn(z_m − v_{m−1})
//! ```
//!
//! with `m = n − 1` and `λ = (1.1, 1.5, 2, 3, 5, 8)`.

use crate::controller::sgn;
use crate::error::{Error, Result};
use crate::system::FlatSystem;

const LAMBDA: [f64; 6] = [1.1, 1.5, 2.0, 3.0, 5.0, 8.0];

#[derive(Clone, Debug, PartialEq)]
pub enum DerivativeSource {
    Oracle,
    Levant(Levant),
}

impl DerivativeSource {
    /// Differentiator of order `n − 1` for a signal whose `n`-th derivative
    /// is bounded by `lipschitz`.
    pub fn levant(n: usize, lipschitz: f64) -> Result<Self> {
        Levant::new(n, lipschitz).map(DerivativeSource::Levant)
    }

    /// Current `ξ_n`. In Levant mode the state is advanced by `dt` first;
    /// the initial call (with `t == 0`) only seeds the differentiator.
    pub fn derive(&mut self, y_meas: f64, dt: f64, t: f64, sys: &FlatSystem, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            DerivativeSource::Oracle => sys.tau_n(x),
            DerivativeSource::Levant(lev) => lev.update(y_meas, dt, t),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Levant {
    lipschitz: f64,
    z: Vec<f64>,
    seeded: bool,
}

impl Levant {
    pub fn new(n: usize, lipschitz: f64) -> Result<Self> {
        if n == 0 || n > LAMBDA.len() {
            return Err(Error::Config(format!(
                "differentiator supports 1..={} output derivatives, got {n}",
                LAMBDA.len()
            )));
        }
        if !(lipschitz > 0.0) {
            return Err(Error::Config(format!(
                "differentiator Lipschitz constant must be > 0, got {lipschitz}"
            )));
        }
        Ok(Self {
            lipschitz,
            z: vec![0.0; n],
            seeded: false,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.z
    }

    /// Feeds one sample. The first sample initialises `z_0 = y` and returns
    /// the seeded state without integrating.
    pub fn update(&mut self, y: f64, dt: f64, t: f64) -> Result<Vec<f64>> {
        if !self.seeded {
            self.z.iter_mut().for_each(|z| *z = 0.0);
            self.z[0] = y;
            self.seeded = true;
            return Ok(self.z.clone());
        }
        let m = self.z.len() - 1;
        let l = self.lipschitz;
        let mut dz = vec![0.0; m + 1];
        let mut prev = y;
        for i in 0..m {
            let r = (m - i) as f64;
            let s = self.z[i] - prev;
            let v = -LAMBDA[m - i] * l.powf(1.0 / (r + 1.0)) * s.abs().powf(r / (r + 1.0)) * sgn(s)
                + self.z[i + 1];
            dz[i] = v;
            prev = v;
        }
        dz[m] = -LAMBDA[0] * l * sgn(self.z[m] - prev);
        for (z, d) in self.z.iter_mut().zip(&dz) {
            *z += dt * d;
        }
        if self.z.iter().any(|z| !z.is_finite()) {
            return Err(Error::DifferentiatorDivergence { t });
        }
        Ok(self.z.clone())
    }
}
