//! Adaptive geometric-optics plane wave discretization tools for the 2-D
//! Helmholtz equation with variable wave speed.
//!
//! The crate covers the chain
//!
//! 1. sample a (low-frequency) wavefield on circles and locate local ray
//!    directions by Fourier filtering of the impedance quantity
//!    (numerical microlocal analysis, [`nmla`]),
//! 2. refine those directions to higher accuracy with a damped
//!    least-squares fit of Bessel-mode sampling quantities ([`raytune`]),
//! 3. span per-element plane wave spaces from the learned directions and
//!    measure their L2 approximation quality ([`pwspace`]),
//! 4. solve homogeneous impedance-boundary Helmholtz problems with an
//!    ultra-weak plane wave DG method to supply discrete probe fields
//!    ([`pwdg`]),
//! 5. orchestrate the five-step multi-mesh pipeline and produce
//!    convergence tables ([`pipeline`]).
//!
//! Benchmark media and closed-form wavefields live in [`field`]; uniform
//! rectangular meshes with refinement hierarchies in [`geom`]; the cylinder
//! Bessel evaluations everything rests on in [`specfun`].
//!
//! Run `cargo run --release --example angle_convergence` (or any other
//! example) for end-to-end demonstrations, or use the `rayhelm` binary for
//! the file-based CLI.

pub mod field;
pub mod geom;
pub mod nmla;
pub mod pipeline;
pub mod pwdg;
pub mod pwspace;
pub mod raytune;
pub mod specfun;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("solver error: {0}")]
    Solve(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// A point in the plane.
pub type Point = [f64; 2];

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Unit vector at angle `theta`.
#[inline]
pub fn dir(theta: f64) -> Point {
    [theta.cos(), theta.sin()]
}

/// Distance of two angles on the circle, in [0, pi].
#[inline]
pub fn angle_dist(a: f64, b: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let d = (a - b).rem_euclid(two_pi);
    d.min(two_pi - d)
}

/// Wrap an angle into [0, 2pi).
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(std::f64::consts::TAU)
}

/// i^l for integer l of either sign.
#[inline]
pub fn i_pow(l: i64) -> C64 {
    match l.rem_euclid(4) {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// Least-squares slope of log(y) against log(x); the log-log convergence rate.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..xs.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    num / den
}

/// Convergence order between two errors measured at two frequencies,
/// reported positive for decaying error.
pub fn pairwise_order(err1: f64, err2: f64, omega1: f64, omega2: f64) -> f64 {
    -((err2 / err1).ln() / (omega2 / omega1).ln())
}
