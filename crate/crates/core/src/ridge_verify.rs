//! Ridge extraction from FTLE fields, regression recovery of manifold angles
//! and trajectory intercepts, and the verification experiments for the
//! Taylor-Green benchmark.
//!
//! A ridge is the set of nodes above a fractional threshold of the window
//! maximum; a near-vertical ridge is fit by regressing x1 on x2, which stays
//! well conditioned as the slope goes to zero. Each experiment compiles a
//! control program, computes a forward FTLE per time slice using only the
//! data window, and compares extracted angles and intercepts to the
//! prescribed signals. Slices are independent; none reuses advection from
//! another.

use crate::advect::{ftle_field_windowed, variational_directions, FtleField};
use crate::control::{compile_control_field, AnchorProgram, ControlProgram};
use crate::flow_model::{
    find_saddle, taylor_green, BoundingBox, GridSpec, PathSignal, PlanarVelocityField,
    SaddleFrame, TimeSignal,
};
use crate::geom::Vec2;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Linear fit through ridge points, parameterised for near-vertical lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeFit {
    pub points: Vec<Vec2>,
    /// Slope of the regression x1 = intercept + slope * x2.
    pub slope_x1_on_x2: f64,
    /// x1 at the x2 = 0 level; the trajectory coordinate for the (1,0) anchor.
    pub intercept_x1: f64,
    /// Anticlockwise rotation from vertical: theta = -atan(slope).
    pub theta: f64,
    pub r2: f64,
}

/// Nodes inside `window` with value >= `threshold_frac` times the window max.
pub fn extract_ridge(
    ftle: &FtleField,
    window: BoundingBox,
    threshold_frac: f64,
) -> Result<Vec<Vec2>> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::InvalidParameter("threshold fraction must be in (0, 1)".into()));
    }
    let grid = &ftle.grid;
    let mut candidates = Vec::new();
    let mut max = f64::NEG_INFINITY;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.node(i, j);
            if !window.contains(p) {
                continue;
            }
            let v = ftle.values[grid.index(i, j)];
            if v.is_nan() {
                continue;
            }
            max = max.max(v);
            candidates.push((p, v));
        }
    }
    if candidates.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let cut = threshold_frac * max;
    let points: Vec<Vec2> = candidates.into_iter().filter(|(_, v)| *v >= cut).map(|(p, _)| p).collect();
    if points.len() < 3 {
        return Err(Error::NoRidge);
    }
    Ok(points)
}

/// Like `extract_ridge`, but doubles the window about its center on NoRidge
/// until points appear or the window covers the grid. The flag reports
/// whether widening happened.
pub fn extract_ridge_widened(
    ftle: &FtleField,
    window: BoundingBox,
    threshold_frac: f64,
) -> Result<(Vec<Vec2>, bool)> {
    let mut w = window;
    let mut widened = false;
    loop {
        match extract_ridge(ftle, w, threshold_frac) {
            Ok(points) => return Ok((points, widened)),
            Err(Error::NoRidge) | Err(Error::EmptyWindow) => {
                let b = ftle.grid.bounds;
                let covers = w.x_min <= b.x_min
                    && w.x_max >= b.x_max
                    && w.y_min <= b.y_min
                    && w.y_max >= b.y_max;
                if covers {
                    return Err(Error::NoRidge);
                }
                let (cx, cy) = (0.5 * (w.x_min + w.x_max), 0.5 * (w.y_min + w.y_max));
                let (hx, hy) = (w.x_max - cx, w.y_max - cy);
                w = BoundingBox::new(cx - 2.0 * hx, cx + 2.0 * hx, cy - 2.0 * hy, cy + 2.0 * hy);
                widened = true;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Least-squares regression of x1 on x2. An exactly vertical point set has
/// zero residual and zero total variance; r2 is 1 by convention there.
pub fn fit_ridge(points: &[Vec2]) -> Result<RidgeFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InsufficientPoints(n, 3));
    }
    let inv_n = 1.0 / n as f64;
    let mean_x2 = points.iter().map(|p| p.y).sum::<f64>() * inv_n;
    let mean_x1 = points.iter().map(|p| p.x).sum::<f64>() * inv_n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for p in points {
        let dx2 = p.y - mean_x2;
        let dx1 = p.x - mean_x1;
        sxx += dx2 * dx2;
        sxy += dx2 * dx1;
        syy += dx1 * dx1;
    }
    if sxx <= 1e-24 {
        return Err(Error::DegeneratePoints);
    }
    let slope = sxy / sxx;
    let intercept = mean_x1 - slope * mean_x2;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r2 = if syy <= 1e-24 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RidgeFit {
        points: points.to_vec(),
        slope_x1_on_x2: slope,
        intercept_x1: intercept,
        theta: -slope.atan(),
        r2: r2.clamp(0.0, 1.0),
    })
}

/// Shared experiment configuration. Defaults reproduce the benchmark
/// protocol: Taylor-Green A = 1, omega = 2 pi, delta = 0.2, data window
/// half-width T = 2, 400 x 200 FTLE grid over [0,2] x [0,1], RK4 step 0.01,
/// 26 slices spaced 0.04 over [0, 1], ridge window 0.85 < x1 < 1.15 with
/// |x2| < 0.04, threshold 0.95 of the window maximum. The x1 half-width 0.15
/// keeps clear of a secondary stretching band near x1 = 1.3 that the control
/// bump sheds along the wall.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub amplitude: f64,
    pub omega: f64,
    pub delta: f64,
    pub horizon: f64,
    pub grid: GridSpec,
    pub step: f64,
    pub slices: usize,
    pub slice_spacing: f64,
    pub ridge_window: BoundingBox,
    pub threshold_frac: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            amplitude: 1.0,
            omega: 2.0 * std::f64::consts::PI,
            delta: 0.2,
            horizon: 2.0,
            grid: GridSpec::new(400, 200, BoundingBox::new(0.0, 2.0, 0.0, 1.0)),
            step: 0.01,
            slices: 26,
            slice_spacing: 0.04,
            ridge_window: BoundingBox::new(0.85, 1.15, -0.04, 0.04),
            threshold_frac: 0.95,
        }
    }
}

impl ExperimentParams {
    pub fn slice_times(&self) -> Vec<f64> {
        (0..self.slices).map(|k| k as f64 * self.slice_spacing).collect()
    }
}

/// Periodic rotation program: both saddles held in place, stable tangent at
/// (1,0) and unstable tangent at (1,1) driven by `delta cos(omega t)`.
/// Returns the combined flow and the (1,0) frame that all measurements use.
pub fn periodic_controlled_flow(
    amplitude: f64,
    delta: f64,
    omega: f64,
    horizon: f64,
) -> Result<(PlanarVelocityField, SaddleFrame)> {
    let tg = taylor_green(amplitude);
    let lower = find_saddle(&tg, Vec2::new(0.9, 0.1))?;
    let upper = find_saddle(&tg, Vec2::new(0.9, 0.9))?;
    let program = ControlProgram {
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
        half_window: horizon,
    };
    let control = compile_control_field(&program)?;
    Ok((tg.with_added_perturbation(&control), lower))
}

/// Stable-side program only: the (1,0) saddle held in place with its stable
/// tangent driven by `delta cos(omega t)`. The measurements near (1,0) do not
/// see the upper anchor's bump, and dropping it keeps the program valid for
/// delta large enough that the two bumps of the paired program would overlap.
pub fn stable_rotation_flow(
    amplitude: f64,
    delta: f64,
    omega: f64,
    horizon: f64,
) -> Result<(PlanarVelocityField, SaddleFrame)> {
    let tg = taylor_green(amplitude);
    let lower = find_saddle(&tg, Vec2::new(0.9, 0.1))?;
    let program = ControlProgram {
        anchors: vec![AnchorProgram {
            theta_s: Some(TimeSignal::Cosine { amp: delta, omega }),
            ..AnchorProgram::holding(lower, delta)
        }],
        half_window: horizon,
    };
    let control = compile_control_field(&program)?;
    Ok((tg.with_added_perturbation(&control), lower))
}

/// Abruptly varying program at (1,0): the trajectory follows a smoothed
/// linear ramp `1 + delta (2t - 1)` gated on over t in (1/4, 3/4), and the
/// stable tangent a smoothed step `delta tanh((t - 1/2) / delta^2)`.
pub fn abrupt_controlled_flow(
    amplitude: f64,
    delta: f64,
    horizon: f64,
) -> Result<(PlanarVelocityField, SaddleFrame)> {
    let tg = taylor_green(amplitude);
    let lower = find_saddle(&tg, Vec2::new(0.9, 0.1))?;
    let program = ControlProgram {
        anchors: vec![AnchorProgram {
            a_tilde: PathSignal {
                x: abrupt_ramp(delta),
                y: TimeSignal::Constant { value: lower.a.y },
            },
            theta_s: Some(abrupt_step(delta)),
            ..AnchorProgram::holding(lower, delta)
        }],
        half_window: horizon,
    };
    let control = compile_control_field(&program)?;
    Ok((tg.with_added_perturbation(&control), lower))
}

/// Target x1 signal of the abrupt program.
pub fn abrupt_ramp(delta: f64) -> TimeSignal {
    TimeSignal::GatedRamp {
        offset: 1.0,
        slope: 2.0 * delta,
        t_mid: 0.5,
        t_on: 0.25,
        t_off: 0.75,
        width: delta * delta,
    }
}

/// Target stable-tangent signal of the abrupt program.
pub fn abrupt_step(delta: f64) -> TimeSignal {
    TimeSignal::SmoothedStep { amp: delta, center: 0.5, width: delta * delta }
}

/// One slice's ridge measurement near the (1,0) saddle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SliceMeasurement {
    pub t: f64,
    pub theta: f64,
    pub x1: f64,
    pub r2: f64,
    pub widened: bool,
    pub n_points: usize,
}

/// Forward FTLE over `[t, t_end]` restricted to the ridge window (plus the
/// differencing ring), then ridge extraction and regression.
///
/// The window is first clipped half a cell inside the grid: boundary nodes
/// use one-sided gradient stencils, and the wall x2 = 0 is an invariant line
/// whose own FTLE band would otherwise flood the threshold cut.
pub fn measure_stable_slice(
    field: &PlanarVelocityField,
    params: &ExperimentParams,
    t: f64,
    t_end: f64,
) -> Result<SliceMeasurement> {
    let grid = params.grid;
    let b = grid.bounds;
    let interior = BoundingBox::new(
        b.x_min + 0.5 * grid.dx(),
        b.x_max - 0.5 * grid.dx(),
        b.y_min + 0.5 * grid.dy(),
        b.y_max - 0.5 * grid.dy(),
    );
    let window = clip_box(params.ridge_window, interior);
    let (wi, wj) = window_indices(&grid, window);
    let ftle = ftle_field_windowed(field, grid, t, t_end, params.step, wi, wj)?;
    let (points, widened) = extract_ridge_widened(&ftle, window, params.threshold_frac)?;
    let fit = fit_ridge(&points)?;
    Ok(SliceMeasurement {
        t,
        theta: fit.theta,
        x1: fit.intercept_x1,
        r2: fit.r2,
        widened,
        n_points: fit.points.len(),
    })
}

/// Per-slice measurement where a missing or degenerate ridge is data, not
/// failure: the slice is recorded with NaN angle and r2 = 0 so downstream
/// quality filters drop it. Any other error still aborts.
fn measure_or_invalid(
    field: &PlanarVelocityField,
    params: &ExperimentParams,
    t: f64,
    t_end: f64,
) -> Result<SliceMeasurement> {
    match measure_stable_slice(field, params, t, t_end) {
        Ok(m) => Ok(m),
        Err(Error::NoRidge) | Err(Error::DegeneratePoints) => Ok(SliceMeasurement {
            t,
            theta: f64::NAN,
            x1: f64::NAN,
            r2: 0.0,
            widened: false,
            n_points: 0,
        }),
        Err(e) => Err(e),
    }
}

fn window_indices(
    grid: &GridSpec,
    window: BoundingBox,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let b = grid.bounds;
    let clamp_i = |x: f64| ((x - b.x_min) / grid.dx()).clamp(0.0, (grid.nx - 1) as f64);
    let clamp_j = |y: f64| ((y - b.y_min) / grid.dy()).clamp(0.0, (grid.ny - 1) as f64);
    let i0 = clamp_i(window.x_min).floor() as usize;
    let i1 = (clamp_i(window.x_max).ceil() as usize + 1).min(grid.nx);
    let j0 = clamp_j(window.y_min).floor() as usize;
    let j1 = (clamp_j(window.y_max).ceil() as usize + 1).min(grid.ny);
    (i0..i1, j0..j1)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PeriodicRow {
    pub t: f64,
    pub theta_measured: f64,
    pub theta_predicted: f64,
    pub x1_measured: f64,
    pub r2: f64,
    pub widened: bool,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicResult {
    pub params: ExperimentParams,
    pub rows: Vec<PeriodicRow>,
}

/// Time-periodic verification: per slice t, forward FTLE over `[t, T]` for
/// the compiled periodic control, ridge fit, and comparison against the
/// prescribed `delta cos(omega t)` rotation and the pinned `x1 = 1`.
pub fn experiment_periodic(params: &ExperimentParams) -> Result<PeriodicResult> {
    let (field, _) =
        periodic_controlled_flow(params.amplitude, params.delta, params.omega, params.horizon)?;
    let rows = params
        .slice_times()
        .into_iter()
        .map(|t| {
            let m = measure_or_invalid(&field, params, t, params.horizon)?;
            Ok(PeriodicRow {
                t,
                theta_measured: m.theta,
                theta_predicted: params.delta * (params.omega * t).cos(),
                x1_measured: m.x1,
                r2: m.r2,
                widened: m.widened,
                n_points: m.n_points,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PeriodicResult { params: params.clone(), rows })
}

pub fn write_periodic_csv<W: Write>(result: &PeriodicResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,theta_measured,theta_predicted,x1_measured,r2,widened,n_points")?;
    for r in &result.rows {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            r.t, r.theta_measured, r.theta_predicted, r.x1_measured, r.r2, r.widened, r.n_points
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub delta: f64,
    pub error: f64,
}

/// Dense lattice around the (1,0) saddle used by the measurements whose
/// signal sits below the global grid's angular resolution.
pub fn fine_local_grid() -> GridSpec {
    GridSpec::new(1201, 181, BoundingBox::new(0.85, 1.15, 0.0, 0.045))
}

/// Configuration of the delta-scaling experiment. The measured error falls
/// to ~1e-2 at the small end, so the ridge is sampled on a dedicated fine
/// lattice instead of the global grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingParams {
    pub base: ExperimentParams,
    pub local_grid: GridSpec,
}

impl Default for ScalingParams {
    fn default() -> Self {
        ScalingParams { base: ExperimentParams::default(), local_grid: fine_local_grid() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingResult {
    pub params: ScalingParams,
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of log E against log delta.
    pub exponent: f64,
    pub log_intercept: f64,
}

/// Error scaling at t = 0: `E(delta) = |delta - theta_measured(0)|` for each
/// perturbation size, with a log-log regression for the asymptotic order.
/// Uses the single-anchor program: above delta = 0.25 the paired program's
/// bumps would overlap (anchors 1 apart, support radius 2 delta each).
pub fn experiment_scaling(deltas: &[f64], params: &ScalingParams) -> Result<ScalingResult> {
    if deltas.len() < 2 {
        return Err(Error::InsufficientPoints(deltas.len(), 2));
    }
    let base = &params.base;
    let local = ExperimentParams {
        grid: params.local_grid,
        ridge_window: clip_box(base.ridge_window, params.local_grid.bounds),
        ..base.clone()
    };
    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let (field, _) =
            stable_rotation_flow(base.amplitude, delta, base.omega, base.horizon)?;
        let m = measure_stable_slice(&field, &local, 0.0, base.horizon)?;
        points.push(ScalingPoint { delta, error: (delta - m.theta).abs() });
    }
    if points.iter().all(|p| p.error < 1e-12) {
        return Err(Error::BelowResolutionFloor);
    }
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.error > 0.0)
        .map(|p| (p.delta.ln(), p.error.ln()))
        .collect();
    if usable.len() < 2 {
        return Err(Error::InsufficientPoints(usable.len(), 2));
    }
    let (exponent, log_intercept) = linear_fit(&usable);
    Ok(ScalingResult { params: params.clone(), points, exponent, log_intercept })
}

pub fn write_scaling_csv<W: Write>(result: &ScalingResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "delta,error")?;
    for p in &result.points {
        writeln!(out, "{:.12e},{:.12e}", p.delta, p.error)?;
    }
    Ok(())
}

/// Least-squares (slope, intercept) for y against x.
fn linear_fit(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Configuration of the finite-T experiment.
///
/// The clipping error decays like `e^{-2 pi^2 A T}`: at the headline
/// delta = 0.2 its largest value (~1.2e-3 at T = 0.2) already sits below the
/// ridge protocol's demonstrated angular accuracy (~2.5e-3, the realized
/// angle offset seen in the scaling experiment), so the ridge series here
/// reproduces the published figure but cannot resolve the decay law. The
/// quantitative sign and rate checks therefore run on a second instrument:
/// the variational stable direction computed from the same clipped data
/// window [0, T], at a small companion amplitude `delta_check` where the
/// leading-order prediction is the dominant term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteTParams {
    pub base: ExperimentParams,
    pub local_grid: GridSpec,
    /// Smallest |predicted| the ridge fit is trusted to resolve; the ridge
    /// sign check is restricted to horizons above it.
    pub angular_resolution: f64,
    /// Program amplitude for the variational instrument.
    pub delta_check: f64,
    /// Smallest |predicted| the variational direction resolves (physical
    /// bias is O(delta_check^2.5), integration noise far below that).
    pub var_resolution: f64,
}

impl Default for FiniteTParams {
    fn default() -> Self {
        FiniteTParams {
            base: ExperimentParams::default(),
            local_grid: fine_local_grid(),
            angular_resolution: 2.5e-3,
            delta_check: 0.01,
            var_resolution: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FiniteTRow {
    pub horizon: f64,
    pub measured: f64,
    pub predicted: f64,
    pub r2: f64,
    /// Variational-instrument angle error at `delta_check`.
    pub var_measured: f64,
    pub var_predicted: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteTResult {
    pub params: FiniteTParams,
    pub rows: Vec<FiniteTRow>,
    /// Fraction of ridge-resolvable horizons where the ridge error shares
    /// the predicted sign (vacuously 1 when none are resolvable).
    pub ridge_sign_agreement: f64,
    pub ridge_resolvable: usize,
    /// Fraction of variational-resolvable horizons with the predicted sign.
    pub var_sign_agreement: f64,
    /// Exponential envelope decay rate of the variational |measured|, fitted
    /// after dividing out the known |cos omega T| factor.
    pub decay_rate: f64,
    pub fitted_horizons: usize,
}

/// Finite-data error at t = 0: for each horizon T the forward FTLE uses only
/// `[0, T]`, and the measured `theta(0) - delta` is compared with the
/// leading-order clipping error `-delta e^{-2 pi^2 A T} cos(omega T)`.
pub fn experiment_finite_t(horizons: &[f64], params: &FiniteTParams) -> Result<FiniteTResult> {
    let base = &params.base;
    let (field, _) =
        periodic_controlled_flow(base.amplitude, base.delta, base.omega, base.horizon)?;
    let (check_field, check_frame) =
        stable_rotation_flow(base.amplitude, params.delta_check, base.omega, base.horizon)?;
    let anchor = check_frame.a;
    let local = ExperimentParams {
        grid: params.local_grid,
        ridge_window: clip_box(base.ridge_window, params.local_grid.bounds),
        ..base.clone()
    };
    let rate = 2.0 * std::f64::consts::PI * std::f64::consts::PI * base.amplitude;
    let mut rows = Vec::with_capacity(horizons.len());
    for &horizon in horizons {
        if !(horizon > 0.0) {
            return Err(Error::DegenerateHorizon);
        }
        let m = measure_stable_slice(&field, &local, 0.0, horizon)?;
        let envelope = (-rate * horizon).exp() * (base.omega * horizon).cos();
        let (stable_dir, _) = variational_directions(
            &check_field,
            |_| anchor,
            &check_frame,
            0.0,
            horizon,
            base.step,
        )?;
        let vs = check_frame.v_s;
        let var_theta = (vs.x * stable_dir.y - vs.y * stable_dir.x).atan2(vs.dot(stable_dir));
        rows.push(FiniteTRow {
            horizon,
            measured: m.theta - base.delta,
            predicted: -base.delta * envelope,
            r2: m.r2,
            var_measured: var_theta - params.delta_check,
            var_predicted: -params.delta_check * envelope,
        });
    }
    let sign_fraction = |pairs: &[(f64, f64)]| {
        if pairs.is_empty() {
            1.0
        } else {
            pairs.iter().filter(|(m, p)| m.signum() == p.signum()).count() as f64
                / pairs.len() as f64
        }
    };
    let ridge_above: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.predicted.abs() > params.angular_resolution && r.measured != 0.0)
        .map(|r| (r.measured, r.predicted))
        .collect();
    let var_above: Vec<&FiniteTRow> = rows
        .iter()
        .filter(|r| r.var_predicted.abs() > params.var_resolution && r.var_measured != 0.0)
        .collect();
    let var_signs: Vec<(f64, f64)> =
        var_above.iter().map(|r| (r.var_measured, r.var_predicted)).collect();
    // Envelope fit: the known cos(omega T) oscillation is divided out so the
    // regression sees the pure e^{-2 pi^2 A T} decay.
    let fit_pairs: Vec<(f64, f64)> = var_above
        .iter()
        .map(|r| {
            let c = (base.omega * r.horizon).cos().abs();
            (r.horizon, (r.var_measured.abs() / c).ln())
        })
        .collect();
    let decay_rate = if fit_pairs.len() >= 2 { -linear_fit(&fit_pairs).0 } else { f64::NAN };
    Ok(FiniteTResult {
        params: params.clone(),
        rows,
        ridge_sign_agreement: sign_fraction(&ridge_above),
        ridge_resolvable: ridge_above.len(),
        var_sign_agreement: sign_fraction(&var_signs),
        decay_rate,
        fitted_horizons: fit_pairs.len(),
    })
}

fn clip_box(w: BoundingBox, b: BoundingBox) -> BoundingBox {
    BoundingBox::new(
        w.x_min.max(b.x_min),
        w.x_max.min(b.x_max),
        w.y_min.max(b.y_min),
        w.y_max.min(b.y_max),
    )
}

pub fn write_finite_t_csv<W: Write>(result: &FiniteTResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "horizon,measured,predicted,r2,var_measured,var_predicted")?;
    for r in &result.rows {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.horizon, r.measured, r.predicted, r.r2, r.var_measured, r.var_predicted
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AbruptRow {
    pub t: f64,
    pub theta_measured: f64,
    pub theta_predicted: f64,
    pub x1_measured: f64,
    pub x1_predicted: f64,
    pub r2: f64,
    pub widened: bool,
    pub n_points: usize,
}

/// Configuration of the abrupt experiment: delta = 0.1 per the benchmark,
/// measured on the fine lattice since the step target must be matched
/// pointwise (no quality filter softens this series).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbruptParams {
    pub base: ExperimentParams,
    pub local_grid: GridSpec,
}

impl Default for AbruptParams {
    fn default() -> Self {
        AbruptParams {
            base: ExperimentParams { delta: 0.1, ..ExperimentParams::default() },
            local_grid: fine_local_grid(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbruptResult {
    pub params: AbruptParams,
    pub rows: Vec<AbruptRow>,
}

/// Abrupt-change verification: compiled step/ramp control, per-slice FTLE
/// ridge measurements against the smoothed targets. Mismatch is expected to
/// concentrate near the transition times 1/4, 1/2, 3/4.
pub fn experiment_abrupt(params: &AbruptParams) -> Result<AbruptResult> {
    let base = &params.base;
    let (field, _) = abrupt_controlled_flow(base.amplitude, base.delta, base.horizon)?;
    let ramp = abrupt_ramp(base.delta);
    let step = abrupt_step(base.delta);
    let local = ExperimentParams {
        grid: params.local_grid,
        ridge_window: clip_box(base.ridge_window, params.local_grid.bounds),
        ..base.clone()
    };
    let rows = base
        .slice_times()
        .into_iter()
        .map(|t| {
            let m = measure_or_invalid(&field, &local, t, base.horizon)?;
            Ok(AbruptRow {
                t,
                theta_measured: m.theta,
                theta_predicted: step.value(t),
                x1_measured: m.x1,
                x1_predicted: ramp.value(t),
                r2: m.r2,
                widened: m.widened,
                n_points: m.n_points,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AbruptResult { params: params.clone(), rows })
}

pub fn write_abrupt_csv<W: Write>(result: &AbruptResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,theta_measured,theta_predicted,x1_measured,x1_predicted,r2,widened,n_points")?;
    for r in &result.rows {
        writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            r.t,
            r.theta_measured,
            r.theta_predicted,
            r.x1_measured,
            r.x1_predicted,
            r.r2,
            r.widened,
            r.n_points
        )?;
    }
    Ok(())
}
