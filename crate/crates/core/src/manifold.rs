//! Leading-order hyperbolic trajectories, stable/unstable tangent rotation
//! angles, and the finite-data error bounds.
//!
//! All quantities are exponentially weighted time integrals of the
//! nonautonomous part `g` (or its shear) evaluated at the unperturbed saddle.
//! A finite horizon `T` clips the integration limits; `T = infinity` recovers
//! the unclipped forms through quadrature truncation.

use crate::flow_model::{PlanarVelocityField, SaddleFrame};
use crate::geom::Vec2;
use crate::quadrature::ExpWeightedIntegral;
use crate::{Error, Result};
use rayon::prelude::*;
use std::f64::consts::FRAC_PI_2;
use std::io::Write;

/// Per-time-sample leading-order state of the perturbed saddle.
#[derive(Debug, Clone, Copy)]
pub struct ManifoldState {
    pub t: f64,
    /// Projection of `a*(t) - a` on `v_s_perp`.
    pub alpha_s: f64,
    /// Projection of `a*(t) - a` on `v_u_perp`.
    pub alpha_u: f64,
    pub a_star: Vec2,
    pub theta_s: f64,
    pub theta_u: f64,
}

impl ManifoldState {
    /// Angles past pi/2 mean the perturbative description has broken down.
    pub fn in_perturbative_regime(&self) -> bool {
        self.theta_s.abs() < FRAC_PI_2 && self.theta_u.abs() < FRAC_PI_2
    }
}

/// Components of `g` in the directions normal to the eigenvectors:
/// `(g . v_s_perp, g . v_u_perp)`.
pub fn g_normal_components(
    field: &PlanarVelocityField,
    frame: &SaddleFrame,
    x: Vec2,
    t: f64,
) -> Result<(f64, f64)> {
    if !field.domain.contains(x) {
        return Err(Error::OutOfDomain(x.x, x.y));
    }
    let g = field.eval_g(x, t);
    Ok((g.dot(frame.v_s_perp()), g.dot(frame.v_u_perp())))
}

/// Velocity shear of the nonautonomous part at the saddle: the directional
/// derivative of `g . v_perp` along `v`, for each of the two eigen-directions.
pub struct ShearSignal<'a> {
    field: &'a PlanarVelocityField,
    frame: &'a SaddleFrame,
}

impl<'a> ShearSignal<'a> {
    pub fn new(field: &'a PlanarVelocityField, frame: &'a SaddleFrame) -> Self {
        ShearSignal { field, frame }
    }

    pub fn sigma_s(&self, t: f64) -> f64 {
        let dg = self.field.jac_g(self.frame.a, t);
        dg.mul_vec(self.frame.v_s).dot(self.frame.v_s_perp())
    }

    pub fn sigma_u(&self, t: f64) -> f64 {
        let dg = self.field.jac_g(self.frame.a, t);
        dg.mul_vec(self.frame.v_u).dot(self.frame.v_u_perp())
    }

    /// Grid supremum of |sigma_s| over uniformly sampled times; default
    /// surrogate for the shear bound in the finite-window angle estimate.
    pub fn sup_sigma_s(&self, t0: f64, t1: f64, samples: usize) -> f64 {
        (0..samples)
            .map(|k| {
                let t = t0 + (t1 - t0) * k as f64 / (samples - 1).max(1) as f64;
                self.sigma_s(t).abs()
            })
            .fold(0.0, f64::max)
    }
}

const QUAD_TOL: f64 = 1e-10;

/// Signed projections of the leading-order trajectory offset:
/// `alpha_s(t) = -∫_t^T e^{-lambda_u (tau - t)} g_s(a, tau) dtau` and
/// `alpha_u(t) = ∫_{-T}^t e^{-lambda_s (tau - t)} g_u(a, tau) dtau`.
/// `horizon = infinity` gives the unclipped forms.
pub fn alpha_projections(
    field: &PlanarVelocityField,
    frame: &SaddleFrame,
    t: f64,
    horizon: f64,
) -> Result<(f64, f64)> {
    let a = frame.a;
    let gs = |tau: f64| field.eval_g(a, tau).dot(frame.v_s_perp());
    let gu = |tau: f64| field.eval_g(a, tau).dot(frame.v_u_perp());
    let alpha_s = -ExpWeightedIntegral::new(-frame.lambda_u, gs, t, horizon)
        .with_ref_time(t)
        .with_abs_tol(QUAD_TOL)
        .evaluate()?;
    let alpha_u = ExpWeightedIntegral::new(-frame.lambda_s, gu, -horizon, t)
        .with_ref_time(t)
        .with_abs_tol(QUAD_TOL)
        .evaluate()?;
    Ok((alpha_s, alpha_u))
}

/// Reconstruct the leading-order hyperbolic trajectory position from the two
/// projections.
pub fn hyperbolic_trajectory(
    field: &PlanarVelocityField,
    frame: &SaddleFrame,
    t: f64,
    horizon: f64,
) -> Result<Vec2> {
    let (alpha_s, alpha_u) = alpha_projections(field, frame, t, horizon)?;
    reconstruct_position(frame, alpha_s, alpha_u)
}

/// Position from projections: inverts the (v_s_perp, v_u_perp) projection pair.
pub fn reconstruct_position(frame: &SaddleFrame, alpha_s: f64, alpha_u: f64) -> Result<Vec2> {
    let denom = frame.v_s.dot(frame.v_u_perp());
    if denom.abs() < 1e-10 {
        return Err(Error::DegenerateFrame);
    }
    let coeff = (alpha_u * frame.v_u.dot(frame.v_s) - alpha_s) / denom;
    Ok(frame.a + alpha_u * frame.v_u_perp() + coeff * frame.v_u)
}

/// Anticlockwise rotation angles of the stable and unstable tangent
/// directions:
/// `theta_s(t) = -∫_t^T e^{(lambda_s - lambda_u)(tau - t)} sigma_s(tau) dtau`,
/// `theta_u(t) = ∫_{-T}^t e^{(lambda_u - lambda_s)(tau - t)} sigma_u(tau) dtau`.
pub fn tangent_angles(
    field: &PlanarVelocityField,
    frame: &SaddleFrame,
    t: f64,
    horizon: f64,
) -> Result<(f64, f64)> {
    let shear = ShearSignal::new(field, frame);
    let gap = frame.gap();
    let theta_s = -ExpWeightedIntegral::new(-gap, |tau| shear.sigma_s(tau), t, horizon)
        .with_ref_time(t)
        .with_abs_tol(QUAD_TOL)
        .evaluate()?;
    let theta_u = ExpWeightedIntegral::new(gap, |tau| shear.sigma_u(tau), -horizon, t)
        .with_ref_time(t)
        .with_abs_tol(QUAD_TOL)
        .evaluate()?;
    Ok((theta_s, theta_u))
}

/// Leading-order bounds on how an unknown extension of `g` beyond the data
/// window can move the trajectory projections.
pub fn finite_window_trajectory_bounds(
    eps: f64,
    frame: &SaddleFrame,
    t: f64,
    horizon: f64,
) -> (f64, f64) {
    let bound_s = eps * (frame.lambda_u * (t - horizon)).exp() / frame.lambda_u;
    let bound_u = -eps * (frame.lambda_s * (t + horizon)).exp() / frame.lambda_s;
    (bound_s, bound_u)
}

/// Bounds on the tangent-angle error from data outside the window, given a
/// bound `eps_shear` on |sigma| there.
pub fn finite_window_angle_bounds(
    eps_shear: f64,
    frame: &SaddleFrame,
    t: f64,
    horizon: f64,
) -> (f64, f64) {
    let gap = frame.gap();
    let bound_s = eps_shear * (gap * (t - horizon)).exp() / gap;
    let bound_u = eps_shear * (-gap * (t + horizon)).exp() / gap;
    (bound_s, bound_u)
}

/// Full per-time state.
pub fn manifold_state(
    field: &PlanarVelocityField,
    frame: &SaddleFrame,
    t: f64,
    horizon: f64,
) -> Result<ManifoldState> {
    let (alpha_s, alpha_u) = alpha_projections(field, frame, t, horizon)?;
    let a_star = reconstruct_position(frame, alpha_s, alpha_u)?;
    let (theta_s, theta_u) = tangent_angles(field, frame, t, horizon)?;
    Ok(ManifoldState { t, alpha_s, alpha_u, a_star, theta_s, theta_u })
}

/// Evaluate the state over a set of sample times (parallel map).
pub fn state_series(
    field: &PlanarVelocityField,
    frame: &SaddleFrame,
    times: &[f64],
    horizon: f64,
) -> Result<Vec<ManifoldState>> {
    times
        .par_iter()
        .map(|&t| manifold_state(field, frame, t, horizon))
        .collect()
}

/// CSV emission: header plus one row per state.
pub fn write_states_csv<W: Write>(states: &[ManifoldState], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,alpha_s,alpha_u,a1,a2,theta_s,theta_u")?;
    for s in states {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            s.t, s.alpha_s, s.alpha_u, s.a_star.x, s.a_star.y, s.theta_s, s.theta_u
        )?;
    }
    Ok(())
}
