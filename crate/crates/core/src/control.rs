//! Inverse problem: synthesise a localised control velocity that makes the
//! hyperbolic trajectory follow a prescribed path and rotates the local
//! stable/unstable manifold tangents through prescribed time-varying angles.
//!
//! Per anchor, the point value of the control is pinned by a 2x2 linear
//! system (trajectory condition) and its spatial gradient by two directional
//! shear conditions (angle condition); the remaining gradient degrees of
//! freedom are set to zero. The resulting affine field is localised with the
//! smooth bump, normalised so that the value and shears at the anchor are
//! reproduced exactly, and truncated to zero outside twice the bump radius.

use crate::flow_model::{BumpFunction, PathSignal, PlanarVelocityField, SaddleFrame, TimeSignal};
use crate::geom::{solve4, Mat2, Vec2};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Prescription at a single anchor point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorProgram {
    pub frame: SaddleFrame,
    /// Desired hyperbolic trajectory; defaults to the anchor itself.
    pub a_tilde: PathSignal,
    /// Desired stable-tangent rotation; `None` means hold at zero.
    pub theta_s: Option<TimeSignal>,
    /// Desired unstable-tangent rotation; `None` means hold at zero.
    pub theta_u: Option<TimeSignal>,
    /// Bump localisation radius.
    pub delta: f64,
}

impl AnchorProgram {
    pub fn holding(frame: SaddleFrame, delta: f64) -> Self {
        AnchorProgram {
            a_tilde: PathSignal::constant(frame.a),
            frame,
            theta_s: None,
            theta_u: None,
            delta,
        }
    }
}

/// Full control prescription: one or more anchors over a data window `[-T, T]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlProgram {
    pub anchors: Vec<AnchorProgram>,
    /// Half-width T of the window.
    pub half_window: f64,
}

/// `sup |a_tilde - a| + |a_tilde'|` and `sup |theta| + |theta'|` over the
/// window; the program's effective perturbation size.
pub fn program_amplitude(program: &ControlProgram, samples: usize) -> f64 {
    let t_max = if program.half_window.is_finite() { program.half_window } else { 2.0 };
    let mut eps = 0.0f64;
    for anchor in &program.anchors {
        for k in 0..samples {
            let t = -t_max + 2.0 * t_max * k as f64 / (samples - 1).max(1) as f64;
            let da = (anchor.a_tilde.value(t) - anchor.frame.a).norm()
                + anchor.a_tilde.derivative(t).norm();
            eps = eps.max(da);
            for theta in [&anchor.theta_s, &anchor.theta_u].into_iter().flatten() {
                eps = eps.max(theta.value(t).abs() + theta.derivative(t).abs());
            }
        }
    }
    eps
}

/// Control velocity required at the anchor so the hyperbolic trajectory
/// follows `a_tilde`: solves
/// `c . v_s_perp = [a' - lambda_u (a_tilde - a)] . v_s_perp`,
/// `c . v_u_perp = [a' - lambda_s (a_tilde - a)] . v_u_perp`.
pub fn required_point_velocity(anchor: &AnchorProgram, t: f64) -> Result<Vec2> {
    let frame = &anchor.frame;
    let offset = anchor.a_tilde.value(t) - frame.a;
    let rate = anchor.a_tilde.derivative(t);
    let rhs_s = (rate - frame.lambda_u * offset).dot(frame.v_s_perp());
    let rhs_u = (rate - frame.lambda_s * offset).dot(frame.v_u_perp());
    point_velocity_from_projections(frame, rhs_s, rhs_u)
}

fn point_velocity_from_projections(frame: &SaddleFrame, rhs_s: f64, rhs_u: f64) -> Result<Vec2> {
    let vs_p = frame.v_s_perp();
    let vu_p = frame.v_u_perp();
    Mat2::new(vs_p.x, vs_p.y, vu_p.x, vu_p.y)
        .solve(Vec2::new(rhs_s, rhs_u))
        .ok_or(Error::DegenerateFrame)
}

/// Shear values required at the anchor for the prescribed tangent rotations:
/// `sigma_s = theta_s' - (lambda_u - lambda_s) theta_s`,
/// `sigma_u = theta_u' + (lambda_u - lambda_s) theta_u`.
pub fn required_shears(anchor: &AnchorProgram, t: f64) -> (f64, f64) {
    let gap = anchor.frame.gap();
    let sigma_s = anchor
        .theta_s
        .as_ref()
        .map(|th| th.derivative(t) - gap * th.value(t))
        .unwrap_or(0.0);
    let sigma_u = anchor
        .theta_u
        .as_ref()
        .map(|th| th.derivative(t) + gap * th.value(t))
        .unwrap_or(0.0);
    (sigma_s, sigma_u)
}

/// Gradient matrix realising the required shears:
/// `(S v_s) . v_s_perp = sigma_s`, `(S v_u) . v_u_perp = sigma_u`, with the
/// tangential components `(S v_s) . v_s` and `(S v_u) . v_u` set to zero.
pub fn shear_matrix(frame: &SaddleFrame, sigma_s: f64, sigma_u: f64) -> Result<Mat2> {
    let vs = frame.v_s;
    let vu = frame.v_u;
    let vs_p = frame.v_s_perp();
    let vu_p = frame.v_u_perp();
    // Unknowns (s11, s12, s21, s22); each row is one directional condition.
    let row = |v: Vec2, w: Vec2| [v.x * w.x, v.y * w.x, v.x * w.y, v.y * w.y];
    let a = [row(vs, vs_p), row(vu, vu_p), row(vs, vs), row(vu, vu)];
    let x = solve4(a, [sigma_s, sigma_u, 0.0, 0.0]).ok_or(Error::DegenerateFrame)?;
    Ok(Mat2::new(x[0], x[1], x[2], x[3]))
}

struct CompiledAnchor {
    frame: SaddleFrame,
    a_tilde: PathSignal,
    theta_s: Option<TimeSignal>,
    theta_u: Option<TimeSignal>,
    bump: BumpFunction,
    /// Bump value at the anchor, used to normalise so the point value and
    /// shears are reproduced exactly there.
    bump_center: f64,
    cutoff: f64,
}

impl CompiledAnchor {
    fn program(&self) -> AnchorProgram {
        AnchorProgram {
            frame: self.frame,
            a_tilde: self.a_tilde.clone(),
            theta_s: self.theta_s.clone(),
            theta_u: self.theta_u.clone(),
            delta: self.bump.delta,
        }
    }

    fn affine_parts(&self, t: f64) -> (Vec2, Mat2) {
        let program = self.program();
        let c0 = required_point_velocity(&program, t).expect("frame checked at compile time");
        let (sigma_s, sigma_u) = required_shears(&program, t);
        let s = shear_matrix(&self.frame, sigma_s, sigma_u).expect("frame checked at compile time");
        (c0, s)
    }

    fn eval(&self, x: Vec2, t: f64) -> Vec2 {
        let rel = x - self.frame.a;
        if rel.norm() > self.cutoff {
            return Vec2::ZERO;
        }
        let (c0, s) = self.affine_parts(t);
        (c0 + s.mul_vec(rel)) * (self.bump.eval(x) / self.bump_center)
    }

    fn jacobian(&self, x: Vec2, t: f64) -> Mat2 {
        let rel = x - self.frame.a;
        if rel.norm() > self.cutoff {
            return Mat2::ZERO;
        }
        let (c0, s) = self.affine_parts(t);
        let w = self.bump.eval(x) / self.bump_center;
        let grad_w = self.bump.gradient(x) / self.bump_center;
        s * w + Mat2::outer(c0 + s.mul_vec(rel), grad_w)
    }
}

/// Compile the program into a pure control velocity field (`f = 0`,
/// `g = c`), with analytic spatial Jacobian and zero extension outside the
/// window. Anchors must be separated by more than 4 bump radii so the bumps
/// are effectively disjoint.
pub fn compile_control_field(program: &ControlProgram) -> Result<PlanarVelocityField> {
    if program.anchors.is_empty() {
        return Err(Error::InvalidParameter("control program has no anchors".into()));
    }
    for anchor in &program.anchors {
        if anchor.delta <= 0.0 {
            return Err(Error::InvalidParameter("bump radius must be positive".into()));
        }
        if anchor.frame.is_degenerate() {
            return Err(Error::DegenerateFrame);
        }
    }
    for (i, a) in program.anchors.iter().enumerate() {
        for b in &program.anchors[i + 1..] {
            let sep = (a.frame.a - b.frame.a).norm();
            if sep <= 4.0 * a.delta.max(b.delta) {
                return Err(Error::AnchorsTooClose);
            }
        }
    }

    let compiled: Arc<Vec<CompiledAnchor>> = Arc::new(
        program
            .anchors
            .iter()
            .map(|anchor| {
                let bump = BumpFunction::new(anchor.frame.a, anchor.delta);
                CompiledAnchor {
                    frame: anchor.frame,
                    a_tilde: anchor.a_tilde.clone(),
                    theta_s: anchor.theta_s.clone(),
                    theta_u: anchor.theta_u.clone(),
                    bump_center: bump.eval_radius(0.0),
                    cutoff: 2.0 * anchor.delta,
                    bump,
                }
            })
            .collect(),
    );

    // Domain large enough to cover all bumps; callers usually combine this
    // with a base field and keep the base domain.
    let (mut x_min, mut x_max, mut y_min, mut y_max) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for anchor in &program.anchors {
        let a = anchor.frame.a;
        let r = 2.0 * anchor.delta;
        x_min = x_min.min(a.x - r);
        x_max = x_max.max(a.x + r);
        y_min = y_min.min(a.y - r);
        y_max = y_max.max(a.y + r);
    }

    let anchors_eval = Arc::clone(&compiled);
    let anchors_jac = Arc::clone(&compiled);
    Ok(PlanarVelocityField::new(
        |_| Vec2::ZERO,
        move |x, t| {
            anchors_eval
                .iter()
                .fold(Vec2::ZERO, |acc, anchor| acc + anchor.eval(x, t))
        },
        crate::flow_model::BoundingBox::new(x_min, x_max, y_min, y_max),
    )
    .with_analytic_jacobians(
        |_| Mat2::ZERO,
        move |x, t| {
            anchors_jac
                .iter()
                .fold(Mat2::ZERO, |acc, anchor| acc + anchor.jacobian(x, t))
        },
    )
    .with_window(program.half_window, true))
}

/// Sampled sup over space-time of `|c| + |Dc| + |dc/dt|`; reported (not
/// enforced) as the realised smoothness bound of the compiled control.
pub fn realized_smoothness_bound(
    field: &PlanarVelocityField,
    program: &ControlProgram,
    samples: usize,
) -> f64 {
    let t_max = if program.half_window.is_finite() { program.half_window } else { 2.0 };
    let dt = 1e-6;
    let mut bound = 0.0f64;
    for anchor in &program.anchors {
        for kt in 0..samples {
            let t = -t_max + 2.0 * t_max * kt as f64 / (samples - 1).max(1) as f64;
            for kr in 0..samples {
                for ka in 0..samples {
                    let r = 2.0 * anchor.delta * kr as f64 / (samples - 1).max(1) as f64;
                    let phi = 2.0 * std::f64::consts::PI * ka as f64 / samples as f64;
                    let x = anchor.frame.a + Vec2::new(r * phi.cos(), r * phi.sin());
                    let c = field.eval_g(x, t);
                    let dc = field.jac_g(x, t);
                    let ct = (field.eval_g(x, t + dt) - field.eval_g(x, t - dt)) / (2.0 * dt);
                    let jac_norm = (dc.a11 * dc.a11
                        + dc.a12 * dc.a12
                        + dc.a21 * dc.a21
                        + dc.a22 * dc.a22)
                        .sqrt();
                    bound = bound.max(c.norm() + jac_norm + ct.norm());
                }
            }
        }
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_model::{find_saddle, taylor_green};
    use crate::manifold;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn tg_frames() -> (SaddleFrame, SaddleFrame) {
        let tg = taylor_green(1.0);
        (
            find_saddle(&tg, Vec2::new(0.9, 0.1)).unwrap(),
            find_saddle(&tg, Vec2::new(0.9, 0.9)).unwrap(),
        )
    }

    /// Time-periodic rotation program: hold both anchors in place, rotate the
    /// stable tangent at (1,0) and the unstable tangent at (1,1).
    fn periodic_program(delta: f64, omega: f64) -> ControlProgram {
        let (lower, upper) = tg_frames();
        ControlProgram {
            anchors: vec![
                AnchorProgram {
                    theta_s: Some(TimeSignal::Cosine { amp: delta, omega }),
                    ..AnchorProgram::holding(lower, delta)
                },
                AnchorProgram {
                    theta_u: Some(TimeSignal::Cosine { amp: delta, omega }),
                    ..AnchorProgram::holding(upper, delta)
                },
            ],
            half_window: 2.0,
        }
    }

    #[test]
    fn holding_program_needs_no_velocity() {
        let (frame, _) = tg_frames();
        let anchor = AnchorProgram::holding(frame, 0.2);
        for t in [-1.0, 0.0, 0.5] {
            assert_abs_diff_eq!(required_point_velocity(&anchor, t).unwrap().norm(), 0.0, epsilon = 1e-14);
            let (ss, su) = required_shears(&anchor, t);
            assert_eq!((ss, su), (0.0, 0.0));
        }
    }

    #[test]
    fn point_velocity_for_sinusoidal_path() {
        // a_tilde = a + (eps sin t, 0) gives c(a,t) = (eps (cos t - lambda_u sin t), 0).
        let (frame, _) = tg_frames();
        let eps = 0.01;
        let anchor = AnchorProgram {
            a_tilde: PathSignal {
                x: TimeSignal::Tabulated {
                    times: (0..4001).map(|k| -2.0 + 0.001 * k as f64).collect(),
                    values: (0..4001).map(|k| 1.0 + eps * (-2.0f64 + 0.001 * k as f64).sin()).collect(),
                },
                y: TimeSignal::Constant { value: 0.0 },
            },
            ..AnchorProgram::holding(frame, 0.2)
        };
        let t = 0.5;
        let c = required_point_velocity(&anchor, t).unwrap();
        let expect = eps * (t.cos() - frame.lambda_u * t.sin());
        // Tabulated derivative carries O(h^2) error.
        assert_abs_diff_eq!(c.x, expect, epsilon = 1e-5);
        assert_abs_diff_eq!(c.y, 0.0, epsilon = 1e-10);
        // Plugging back reproduces both projections.
        let offset = anchor.a_tilde.value(t) - frame.a;
        let rate = anchor.a_tilde.derivative(t);
        let rhs_s = (rate - frame.lambda_u * offset).dot(frame.v_s_perp());
        let rhs_u = (rate - frame.lambda_s * offset).dot(frame.v_u_perp());
        assert_abs_diff_eq!(c.dot(frame.v_s_perp()), rhs_s, epsilon = 1e-12);
        assert_abs_diff_eq!(c.dot(frame.v_u_perp()), rhs_u, epsilon = 1e-12);
    }

    #[test]
    fn required_shears_match_periodic_closed_form() {
        let (frame, _) = tg_frames();
        let delta = 0.2;
        let omega = 2.0 * PI;
        let gap = 2.0 * PI * PI;
        let anchor = AnchorProgram {
            theta_s: Some(TimeSignal::Cosine { amp: delta, omega }),
            theta_u: Some(TimeSignal::Cosine { amp: delta, omega }),
            ..AnchorProgram::holding(frame, delta)
        };
        for t in [0.0, 0.21, 0.8] {
            let (ss, su) = required_shears(&anchor, t);
            let expect_s = -delta * omega * (omega * t).sin() - gap * delta * (omega * t).cos();
            let expect_u = -delta * omega * (omega * t).sin() + gap * delta * (omega * t).cos();
            assert_abs_diff_eq!(ss, expect_s, epsilon = 1e-10);
            assert_abs_diff_eq!(su, expect_u, epsilon = 1e-10);
        }
    }

    #[test]
    fn compiled_field_matches_periodic_closed_form_near_anchor() {
        // The compiled field reproduces
        // c1 = delta [w sin wt + 2 pi^2 A cos wt] x2 I(x), c2 = 0
        // near (1,0), up to the bump normalisation at the anchor.
        let delta = 0.2;
        let omega = 2.0 * PI;
        let gap = 2.0 * PI * PI;
        let program = periodic_program(delta, omega);
        let field = compile_control_field(&program).unwrap();
        let bump = BumpFunction::new(Vec2::new(1.0, 0.0), delta);
        let norm = bump.eval_radius(0.0);
        for (x2, t) in [(0.05, 0.0), (0.1, 0.3), (0.02, 0.77)] {
            let x = Vec2::new(1.0, x2);
            let c = field.eval_g(x, t);
            let expect =
                delta * (omega * (omega * t).sin() + gap * (omega * t).cos()) * x2 * bump.eval(x) / norm;
            assert_abs_diff_eq!(c.x, expect, epsilon = 1e-10);
            assert_abs_diff_eq!(c.y, 0.0, epsilon = 1e-12);
        }
        // Shear at the anchor is exact despite the bump.
        let shear_field = taylor_green(1.0).with_added_perturbation(&field);
        let frame = find_saddle(&shear_field, Vec2::new(0.9, 0.1)).unwrap();
        let shear = manifold::ShearSignal::new(&shear_field, &frame);
        for t in [0.0, 0.4] {
            let expect = -delta * (omega * (omega * t).sin() + gap * (omega * t).cos());
            assert_abs_diff_eq!(shear.sigma_s(t), expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_program_compiles_to_zero_field() {
        let (lower, upper) = tg_frames();
        let program = ControlProgram {
            anchors: vec![AnchorProgram::holding(lower, 0.2), AnchorProgram::holding(upper, 0.2)],
            half_window: 2.0,
        };
        let field = compile_control_field(&program).unwrap();
        for (x, t) in [(Vec2::new(1.0, 0.05), 0.0), (Vec2::new(1.02, 0.95), 1.0)] {
            assert_abs_diff_eq!(field.eval_g(x, t).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn compiled_field_is_local() {
        let program = periodic_program(0.2, 2.0 * PI);
        let field = compile_control_field(&program).unwrap();
        for t in [-1.5, 0.0, 0.3, 1.9] {
            for p in [
                Vec2::new(0.3, 0.5),
                Vec2::new(1.0, 0.45),
                Vec2::new(1.55, 0.0),
                Vec2::new(1.0, 0.5),
            ] {
                assert!(field.eval_g(p, t).norm() < 1e-12, "field leaks at {p:?}");
            }
        }
        // Zero extension beyond the window.
        assert_abs_diff_eq!(field.eval_g(Vec2::new(1.0, 0.05), 2.5).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn superposition_of_single_anchor_programs() {
        let (lower, upper) = tg_frames();
        let omega = 2.0 * PI;
        let one = compile_control_field(&ControlProgram {
            anchors: vec![AnchorProgram {
                theta_s: Some(TimeSignal::Cosine { amp: 0.2, omega }),
                ..AnchorProgram::holding(lower, 0.2)
            }],
            half_window: 2.0,
        })
        .unwrap();
        let two = compile_control_field(&ControlProgram {
            anchors: vec![AnchorProgram {
                theta_u: Some(TimeSignal::Cosine { amp: 0.2, omega }),
                ..AnchorProgram::holding(upper, 0.2)
            }],
            half_window: 2.0,
        })
        .unwrap();
        let joint = compile_control_field(&periodic_program(0.2, omega)).unwrap();
        for (p, t) in [
            (Vec2::new(1.02, 0.1), 0.3),
            (Vec2::new(0.95, 0.9), 0.3),
            (Vec2::new(1.0, 0.02), -1.2),
        ] {
            let sum = one.eval_g(p, t) + two.eval_g(p, t);
            let j = joint.eval_g(p, t);
            assert_abs_diff_eq!(sum.x, j.x, epsilon = 1e-13);
            assert_abs_diff_eq!(sum.y, j.y, epsilon = 1e-13);
        }
    }

    #[test]
    fn close_anchors_are_rejected() {
        let (lower, _) = tg_frames();
        let mut shifted = lower;
        shifted.a = lower.a + Vec2::new(0.5, 0.0);
        let program = ControlProgram {
            anchors: vec![AnchorProgram::holding(lower, 0.2), AnchorProgram::holding(shifted, 0.2)],
            half_window: 2.0,
        };
        assert!(matches!(compile_control_field(&program), Err(Error::AnchorsTooClose)));
    }

    #[test]
    fn program_amplitude_tracks_signal_size() {
        let program = periodic_program(0.2, 2.0 * PI);
        let eps = program_amplitude(&program, 401);
        // theta = delta cos wt gives sup |theta| + |theta'| = delta (1 + w)
        // up to sampling, attained where the two extremes balance.
        assert!(eps >= 0.2 * 2.0 * PI * 0.99 && eps <= 0.2 * (1.0 + 2.0 * PI));
    }
}
