//! Deep-learning inversion of far-field scattering data for coated
//! cylindrical obstacles.
//!
//! The crate covers obstacle geometry, a surrogate far-field generator and
//! dataset tooling ([`dataio`]), a circular 1D CNN engine with explicit
//! backward passes ([`nn`]), training and evaluation ([`training`]), and the
//! two-stage classify-then-regress inverse solver ([`pipeline`]).

pub mod dataio;
pub mod error;
pub mod geometry;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type Parameters32 = nn::Parameters<f32>;
pub type Parameters64 = nn::Parameters<f64>;
pub type Model32 = training::Model<f32>;
pub type Model64 = training::Model<f64>;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CIRCSCATTER_THREADS";

/// Number of worker threads for parallel sections: `CIRCSCATTER_THREADS` if
/// set to a positive integer, otherwise the available parallelism.
pub fn worker_threads() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(n) if n > 0 => n,
        _ => available,
    }
}
