//! Particle flows that transport a sample toward a target distribution.
//!
//! The crate covers the numeric side of score-difference (SD) flow and the
//! two kernel baselines it is usually compared against:
//!
//! * [`flows`]: kernel SD updates, MMD gradient flow (raw and normalized),
//!   SVGD, analytic score differences, the empirical optimal denoiser and a
//!   diffusion-style reverse step.
//! * [`kernel`]: Gaussian kernel, pairwise distances and the median
//!   bandwidth heuristic.
//! * [`schedules`] and [`optimizers`]: noise/step schedules and SGD/AdaGrad.
//! * [`metrics`]: characteristic function distance, threshold calibration and
//!   nearest-neighbour distances.
//! * [`targets`]: seeded toy distributions (25-Gaussian grid, the 30-component
//!   question-mark mixture, Swiss roll, a rank-deficient linear Gaussian).
//! * [`experiment`] and [`generator`]: the particle-optimization and
//!   model-optimization loops.
//!
//! Everything here is `no_std` + `alloc`; file formats, configuration and the
//! command line live in the `sdflow` crate. Enable the `std` feature to route
//! transcendental functions through the platform math library instead of
//! `libm`.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

mod error;
mod fastmath;
pub mod experiment;
pub mod flows;
pub mod generator;
pub mod kernel;
pub mod matrix;
pub mod metrics;
pub mod optimizers;
mod particles;
pub mod rng;
pub mod schedules;
pub mod targets;

pub use error::{Error, Result};
pub use particles::ParticleSet;
