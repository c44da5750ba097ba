//! Hyperbolic trajectories and local stable/unstable manifold directions in
//! nearly autonomous planar flows, together with the inverse problem of
//! synthesising localised control velocities that steer those directions,
//! and FTLE-based verification machinery.
//!
//! The crate is organised around a steady/unsteady split `u(x,t) = f(x) + g(x,t)`
//! of a planar velocity field. Around a saddle point of `f`, exponentially
//! weighted time integrals of `g` give the leading-order motion of the
//! hyperbolic trajectory and the rotation angles of the manifold tangents.
//! The `control` module inverts those formulas; `advect` and `ridge_verify`
//! check the results against flow-map computations.

pub mod advect;
pub mod control;
pub mod decomposition;
pub mod flow_model;
pub mod geom;
pub mod manifold;
pub mod quadrature;
pub mod ridge_verify;

pub use flow_model::{BumpFunction, PathSignal, PlanarVelocityField, SaddleFrame, TimeSignal};
pub use geom::{Mat2, Vec2};

use thiserror::Error;

/// Errors shared by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Newton iteration failed to converge in {0} iterations (residual {1:.3e})")]
    NoConvergence(usize, f64),
    #[error("point is not a saddle: {0}")]
    NotSaddle(String),
    #[error("position ({0}, {1}) outside the field domain")]
    OutOfDomain(f64, f64),
    #[error("stable and unstable eigenvectors are parallel")]
    DegenerateFrame,
    #[error("sampled field has an empty grid")]
    EmptyGrid,
    #[error("time samples are not uniformly spaced")]
    NonUniformTimeGrid,
    #[error("time-mean velocity vanishes; no autonomous skeleton to perturb")]
    NotNearlyAutonomous,
    #[error("exponential weight grows toward the infinite endpoint (rate {0})")]
    DivergentWeight(f64),
    #[error("quadrature tolerance {0:.3e} not met")]
    ToleranceNotMet(f64),
    #[error("control anchors closer than 4 bump radii")]
    AnchorsTooClose,
    #[error("trajectory left the domain near ({0}, {1})")]
    LeftDomain(f64, f64),
    #[error("degenerate integration horizon (t0 == t1)")]
    DegenerateHorizon,
    #[error("fundamental matrix is numerically singular")]
    SingularFundamentalMatrix,
    #[error("ridge window does not intersect the grid")]
    EmptyWindow,
    #[error("fewer than 3 ridge points above threshold")]
    NoRidge,
    #[error("ridge points do not span distinct x2 values")]
    DegeneratePoints,
    #[error("all measured angles are below the grid resolution floor")]
    BelowResolutionFloor,
    #[error("need at least {0} points, got {1}")]
    InsufficientPoints(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
