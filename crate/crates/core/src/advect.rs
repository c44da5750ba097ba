//! Trajectory integration, flow maps, FTLE fields and the variational
//! oracle for finite-time stable/unstable directions.
//!
//! Everything uses fixed-step classical RK4 for reproducibility; grid
//! advection parallelizes over nodes with results written to disjoint slots.

use crate::flow_model::{BoundingBox, GridSpec, PlanarVelocityField, SaddleFrame};
use crate::geom::{Mat2, Vec2};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDirection {
    Forward,
    Backward,
}

/// Final positions of grid nodes advected from `t0` to `t1`.
#[derive(Debug, Clone)]
pub struct FlowMapGrid {
    pub grid: GridSpec,
    pub t0: f64,
    pub t1: f64,
    pub step: f64,
    /// Row-major; `None` for nodes that were not advected (windowed runs).
    pub images: Vec<Option<Vec2>>,
}

/// Gridded finite-time Lyapunov exponents with horizon metadata. Nodes
/// outside a computation window hold NaN.
#[derive(Debug, Clone)]
pub struct FtleField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub direction: TimeDirection,
    pub t0: f64,
    pub t1: f64,
}

impl FtleField {
    pub fn horizon(&self) -> f64 {
        (self.t1 - self.t0).abs()
    }
}

/// Classical fixed-step RK4 for `x' = u(x, t)` from `t0` to `t1`; the step
/// count is `ceil(|t1 - t0| / step)` so the step divides the span evenly.
/// `t1 < t0` integrates backward. Velocity closures are evaluated by formula
/// even outside the configured box; only non-finite positions are an error.
pub fn flow_map(
    field: &PlanarVelocityField,
    x0: Vec2,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<Vec2> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(x0);
    }
    let n = (span.abs() / step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut x = x0;
    let mut t = t0;
    for k in 0..n {
        let k1 = field.eval_total(x, t);
        let k2 = field.eval_total(x + k1 * (0.5 * h), t + 0.5 * h);
        let k3 = field.eval_total(x + k2 * (0.5 * h), t + 0.5 * h);
        let k4 = field.eval_total(x + k3 * h, t + h);
        x += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        t = t0 + (k + 1) as f64 * h;
        if !x.is_finite() {
            return Err(Error::LeftDomain(x.x, x.y));
        }
    }
    Ok(x)
}

/// Advect every node of `grid` (or only `window` plus its one-node ring when
/// given) from `t0` to `t1`.
pub fn flow_map_grid(
    field: &PlanarVelocityField,
    grid: GridSpec,
    t0: f64,
    t1: f64,
    step: f64,
    window: Option<(std::ops::Range<usize>, std::ops::Range<usize>)>,
) -> Result<FlowMapGrid> {
    if grid.nx < 3 || grid.ny < 3 {
        return Err(Error::EmptyGrid);
    }
    let (wi, wj) = match &window {
        Some((wi, wj)) => (
            wi.start.saturating_sub(1)..(wi.end + 1).min(grid.nx),
            wj.start.saturating_sub(1)..(wj.end + 1).min(grid.ny),
        ),
        None => (0..grid.nx, 0..grid.ny),
    };
    let images: Vec<Option<Vec2>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % grid.nx, idx / grid.nx);
            if !wi.contains(&i) || !wj.contains(&j) {
                return Ok(None);
            }
            flow_map(field, grid.node(i, j), t0, t1, step).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok(FlowMapGrid { grid, t0, t1, step, images })
}

/// FTLE over the full grid: per node, the flow-map gradient by central
/// differences of neighbor images (one-sided at box edges), then
/// `ln(lambda_max(C)) / (2 |t1 - t0|)` with `C = (grad Phi)^T (grad Phi)`.
pub fn ftle_field(
    field: &PlanarVelocityField,
    grid: GridSpec,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<FtleField> {
    ftle_field_windowed(field, grid, t0, t1, step, 0..grid.nx, 0..grid.ny)
}

/// FTLE restricted to a node window; identical values to the full-grid run
/// on the window (the ring supplies the central differences), NaN elsewhere.
pub fn ftle_field_windowed(
    field: &PlanarVelocityField,
    grid: GridSpec,
    t0: f64,
    t1: f64,
    step: f64,
    wi: std::ops::Range<usize>,
    wj: std::ops::Range<usize>,
) -> Result<FtleField> {
    if t0 == t1 {
        return Err(Error::DegenerateHorizon);
    }
    let full = wi == (0..grid.nx) && wj == (0..grid.ny);
    let window = if full { None } else { Some((wi.clone(), wj.clone())) };
    let map = flow_map_grid(field, grid, t0, t1, step, window)?;
    let inv_2t = 1.0 / (2.0 * (t1 - t0).abs());
    let (dx, dy) = (grid.dx(), grid.dy());
    let at = |i: usize, j: usize| map.images[grid.index(i, j)];

    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % grid.nx, idx / grid.nx);
            if !wi.contains(&i) || !wj.contains(&j) {
                return f64::NAN;
            }
            // One-sided at the lattice edges, central in the interior.
            let (il, ir) = (i.saturating_sub(1), (i + 1).min(grid.nx - 1));
            let (jl, jr) = (j.saturating_sub(1), (j + 1).min(grid.ny - 1));
            let (pl, pr, qb, qt) = match (at(il, j), at(ir, j), at(i, jl), at(i, jr)) {
                (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
                _ => return f64::NAN,
            };
            let col_x = (pr - pl) / ((ir - il) as f64 * dx);
            let col_y = (qt - qb) / ((jr - jl) as f64 * dy);
            let jac = Mat2::from_columns(col_x, col_y);
            let c = jac.transpose().mul_mat(jac);
            let ((l_max, _), _) = c.symmetric_eigen();
            l_max.max(f64::MIN_POSITIVE).ln() * inv_2t
        })
        .collect();

    let direction = if t1 > t0 { TimeDirection::Forward } else { TimeDirection::Backward };
    Ok(FtleField { grid, values, direction, t0, t1 })
}

/// Finite-time stable and unstable directions at time `t` from the
/// variational (tangent linear) equation `Y' = Du(a(tau), tau) Y` along a
/// given trajectory. The stable direction is the right singular vector of
/// the forward fundamental matrix over `[t, T]` with the smallest singular
/// value; the unstable direction is the left singular vector over `[-T, t]`
/// with the largest. Signs are fixed to the hemispheres of the frame's
/// eigenvectors.
pub fn variational_directions(
    field: &PlanarVelocityField,
    a_path: impl Fn(f64) -> Vec2,
    frame: &SaddleFrame,
    t: f64,
    horizon: f64,
    step: f64,
) -> Result<(Vec2, Vec2)> {
    if !(horizon > t.abs()) {
        return Err(Error::DegenerateHorizon);
    }
    let y_fwd = fundamental_matrix(field, &a_path, t, horizon, step)?;
    let y_bwd = fundamental_matrix(field, &a_path, -horizon, t, step)?;
    let ((_, _, _), (_, _, v_small)) = y_fwd.svd();
    let ((_, u_big, _), (_, _, _)) = y_bwd.svd();
    let stable = hemisphere(v_small, frame.v_s);
    let unstable = hemisphere(u_big, frame.v_u);
    Ok((stable, unstable))
}

fn hemisphere(v: Vec2, reference: Vec2) -> Vec2 {
    if v.dot(reference) < 0.0 {
        -v
    } else {
        v
    }
}

/// RK4 for `Y' = Du(a(tau), tau) Y` from `t0` to `t1` with `Y(t0) = I`.
fn fundamental_matrix(
    field: &PlanarVelocityField,
    a_path: &impl Fn(f64) -> Vec2,
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<Mat2> {
    let span = t1 - t0;
    let n = (span.abs() / step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let jac = |tau: f64| field.jac_total(a_path(tau), tau);
    let mut y = Mat2::identity();
    for k in 0..n {
        let tau = t0 + k as f64 * h;
        let k1 = jac(tau).mul_mat(y);
        let k2 = jac(tau + 0.5 * h).mul_mat(y + k1 * (0.5 * h));
        let k3 = jac(tau + 0.5 * h).mul_mat(y + k2 * (0.5 * h));
        let k4 = jac(tau + h).mul_mat(y + k3 * h);
        y = y + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    }
    let finite =
        y.a11.is_finite() && y.a12.is_finite() && y.a21.is_finite() && y.a22.is_finite();
    if !finite || y.det() == 0.0 {
        return Err(Error::SingularFundamentalMatrix);
    }
    Ok(y)
}

/// CSV export: `x1,x2,value` per node, row-major, NaN nodes skipped.
pub fn write_ftle_csv<W: Write>(ftle: &FtleField, mut out: W) -> std::io::Result<()> {
    writeln!(out, "x1,x2,value")?;
    for j in 0..ftle.grid.ny {
        for i in 0..ftle.grid.nx {
            let v = ftle.values[ftle.grid.index(i, j)];
            if v.is_nan() {
                continue;
            }
            let p = ftle.grid.node(i, j);
            writeln!(out, "{:.12e},{:.12e},{:.12e}", p.x, p.y, v)?;
        }
    }
    Ok(())
}

/// Compact binary dump, little-endian: `nx, ny` as u64, then
/// `x_min, x_max, y_min, y_max, t0, t1` as f64, then row-major f64 values.
pub fn write_ftle_binary<W: Write>(ftle: &FtleField, mut out: W) -> std::io::Result<()> {
    out.write_all(&(ftle.grid.nx as u64).to_le_bytes())?;
    out.write_all(&(ftle.grid.ny as u64).to_le_bytes())?;
    let b = ftle.grid.bounds;
    for v in [b.x_min, b.x_max, b.y_min, b.y_max, ftle.t0, ftle.t1] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in &ftle.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Helper: a steady linear field `u = (rate x1, -rate x2)` on a box, used in
/// tests and calibration runs.
pub fn linear_saddle_field(rate: f64, bounds: BoundingBox) -> PlanarVelocityField {
    PlanarVelocityField::new(
        move |p: Vec2| Vec2::new(rate * p.x, -rate * p.y),
        |_, _| Vec2::ZERO,
        bounds,
    )
    .with_analytic_jacobians(move |_| Mat2::new(rate, 0.0, 0.0, -rate), |_, _| Mat2::ZERO)
}
