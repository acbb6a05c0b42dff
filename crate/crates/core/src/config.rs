//! JSON run configuration.
//!
//! ```json
//! {
//!   "system": { "id": "perturbed_chain", "params": { ... } },
//!   "controller": { "variant": ["mfc", "matched_only"], "k_poles": [-1, -1, -1],
//!                   "kt_poles": [-4, -4, -4], "eta": 0, "sign": "pure", "deriv": "oracle" },
//!   "reference": { "kind": "sin", "params": {} },
//!   "init": { "x0": [1, 0, 0], "xistar0": [0.5, 0, 0] },
//!   "sim": { "dt": 1e-4, "horizon": 20, "decimation": 100 }
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::SignMode;
use crate::error::{Error, Result};
use crate::sim::{DerivSpec, ModelInit, ReferenceSpec, SimConfig, SystemSpec, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSpec,
    pub controller: ControllerSection,
    pub reference: ReferenceSpec,
    pub init: InitSection,
    #[serde(default)]
    pub sim: SimSection,
}

/// One variant or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variants {
    One(Variant),
    Many(Vec<Variant>),
}

impl Variants {
    pub fn to_vec(&self) -> Vec<Variant> {
        match self {
            Variants::One(v) => vec![*v],
            Variants::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub variant: Variants,
    pub k_poles: Vec<f64>,
    pub kt_poles: Vec<f64>,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub sign: SignMode,
    #[serde(default)]
    pub deriv: DerivSpec,
    #[serde(default)]
    pub fixed_gain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub x0: Vec<f64>,
    pub xistar0: ModelInit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
}

fn default_dt() -> f64 {
    1e-4
}

fn default_horizon() -> f64 {
    20.0
}

fn default_decimation() -> usize {
    100
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: default_horizon(),
            decimation: default_decimation(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub sign: Option<SignMode>,
    pub deriv: Option<DerivSpec>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.sim.dt = dt;
        }
        if let Some(h) = o.horizon {
            self.sim.horizon = h;
        }
        if let Some(s) = o.sign {
            self.controller.sign = s;
        }
        if let Some(d) = o.deriv {
            self.controller.deriv = d;
        }
    }

    /// One validated simulation config per listed variant.
    pub fn sim_configs(&self) -> Result<Vec<SimConfig>> {
        let variants = self.controller.variant.to_vec();
        if variants.is_empty() {
            return Err(Error::Config("controller.variant lists no variants".into()));
        }
        for (i, v) in variants.iter().enumerate() {
            if variants[..i].contains(v) {
                return Err(Error::Config(format!("variant `{v}` listed twice")));
            }
        }
        variants
            .into_iter()
            .map(|variant| {
                let cfg = SimConfig {
                    system: self.system.clone(),
                    variant,
                    reference: self.reference.clone(),
                    mcl_poles: self.controller.k_poles.clone(),
                    pcl_poles: self.controller.kt_poles.clone(),
                    x0: self.init.x0.clone(),
                    xi_star0: self.init.xistar0.clone(),
                    dt: self.sim.dt,
                    horizon: self.sim.horizon,
                    sign_mode: self.controller.sign,
                    deriv: self.controller.deriv,
                    gain_margin: self.controller.eta,
                    fixed_gain: self.controller.fixed_gain,
                    decimation: self.sim.decimation,
                };
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}
