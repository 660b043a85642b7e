//! Steady-state and time-dependent cooling of N near-degenerate mechanical
//! modes through M optical modes.
//!
//! Numerical code is generic over the scalar type ([`Real`], `f32` or `f64`);
//! the aliases below fix it to one precision.

pub mod config;
pub mod error;
pub mod limits;
pub mod linearize;
pub mod membrane;
pub mod model;
pub mod moments;
pub mod scalar;
pub mod schedule;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

pub type SystemConfigF64 = model::SystemConfig<f64>;
pub type SystemConfigF32 = model::SystemConfig<f32>;
pub type LinearizedSystemF64 = linearize::LinearizedSystem<f64>;
pub type LinearizedSystemF32 = linearize::LinearizedSystem<f32>;
pub type MomentStateF64 = moments::MomentState<f64>;
pub type MomentStateF32 = moments::MomentState<f32>;
pub type MomentGeneratorF64 = moments::MomentGenerator<f64>;
pub type MomentGeneratorF32 = moments::MomentGenerator<f32>;
pub type SpectralReportF64 = spectral::SpectralReport<f64>;
pub type SpectralReportF32 = spectral::SpectralReport<f32>;
pub type MembraneSpecF64 = membrane::MembraneSpec<f64>;
pub type MembraneSpecF32 = membrane::MembraneSpec<f32>;
pub type DriveProtocolF64 = schedule::DriveProtocol<f64>;
pub type DriveProtocolF32 = schedule::DriveProtocol<f32>;
