//! Robust trajectory tracking for flat single-input nonlinear systems.
//!
//! The controller follows the model-following architecture: a linear model
//! loop (an integrator chain) generates the nominal trajectory, and a
//! process loop drives the measured output derivatives onto it with linear
//! feedback plus a Lyapunov-redesign switching term. Feeding back output
//! derivatives instead of the nominal normal-form state is what lets the
//! process loop reject unmatched uncertainty.
//!
//! Modules, bottom up:
//!
//! * [`linalg`]: small dense matrices, pole placement, Lyapunov equation.
//! * [`system`]: plant description, coordinate transforms, Lie-derivative checks.
//! * [`uncertainty`]: matched/unmatched decomposition and auxiliary terms.
//! * [`controller`]: the model-following, matched-only and single-loop laws.
//! * [`differentiator`]: output-derivative sources.
//! * [`sim`]: fixed-step closed-loop simulation and comparisons.
//! * [`plants`]: the perturbed integrator chain and linear plants.
//! * [`config`], [`cli`]: JSON configuration and the command-line front end.

pub mod cli;
pub mod config;
pub mod controller;
pub mod differentiator;
pub mod error;
pub mod linalg;
pub mod ode;
pub mod plants;
pub mod sim;
pub mod system;
pub mod uncertainty;

pub use error::{Error, Result};
