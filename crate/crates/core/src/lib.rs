//! Desk-scale laboratory for the multi-USV target defense problem: planar
//! vessel dynamics, a Boids baseline, an adaptive-residual soft actor-critic
//! learner, and the training/evaluation harness that ties them together.

pub mod apf;
pub mod boids;
pub mod config;
pub mod env;
pub mod eval;
pub mod error;
pub mod geom;
pub mod nn;
pub mod orchestrator;
pub mod sac;
pub mod vessel;

pub use error::{Error, Result};
pub use geom::Vec2;
