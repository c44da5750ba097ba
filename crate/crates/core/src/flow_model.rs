//! Core domain types: velocity fields with a steady/unsteady split, saddle
//! frames, time signals, smooth bump functions and the Taylor-Green builtin.

use crate::geom::{Mat2, Vec2};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        BoundingBox { x_min, x_max, y_min, y_max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }
}

/// Uniform node lattice over a box. Nodes sit on the box boundary:
/// `x_i = x_min + i * dx` with `dx = (x_max - x_min) / (nx - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub bounds: BoundingBox,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, bounds: BoundingBox) -> Self {
        GridSpec { nx, ny, bounds }
    }

    pub fn dx(&self) -> f64 {
        (self.bounds.x_max - self.bounds.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.bounds.y_max - self.bounds.y_min) / (self.ny - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.bounds.x_min + i as f64 * self.dx(),
            self.bounds.y_min + j as f64 * self.dy(),
        )
    }

    /// Row-major node index (row = y).
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.nx == 0 || self.ny == 0
    }
}

type FieldFn = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
type UnsteadyFn = Arc<dyn Fn(Vec2, f64) -> Vec2 + Send + Sync>;
type JacFn = Arc<dyn Fn(Vec2) -> Mat2 + Send + Sync>;
type UnsteadyJacFn = Arc<dyn Fn(Vec2, f64) -> Mat2 + Send + Sync>;

/// Planar velocity field split into an autonomous part `f` and a
/// nonautonomous part `g`, with total field `u(x,t) = f(x) + g(x,t)`.
///
/// The data window is `[-T, T]`; when `zero_extend` is set, `g` evaluates to
/// zero outside that window. Spatial Jacobians of `f` and `g` are analytic
/// closures when provided and central finite differences otherwise.
#[derive(Clone)]
pub struct PlanarVelocityField {
    f: FieldFn,
    g: UnsteadyFn,
    df: Option<JacFn>,
    dg: Option<UnsteadyJacFn>,
    pub domain: BoundingBox,
    /// Half-width T of the data window [-T, T]; `f64::INFINITY` for unbounded.
    pub half_window: f64,
    pub zero_extend: bool,
}

impl PlanarVelocityField {
    pub fn new(
        f: impl Fn(Vec2) -> Vec2 + Send + Sync + 'static,
        g: impl Fn(Vec2, f64) -> Vec2 + Send + Sync + 'static,
        domain: BoundingBox,
    ) -> Self {
        PlanarVelocityField {
            f: Arc::new(f),
            g: Arc::new(g),
            df: None,
            dg: None,
            domain,
            half_window: f64::INFINITY,
            zero_extend: false,
        }
    }

    pub fn with_analytic_jacobians(
        mut self,
        df: impl Fn(Vec2) -> Mat2 + Send + Sync + 'static,
        dg: impl Fn(Vec2, f64) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        self.df = Some(Arc::new(df));
        self.dg = Some(Arc::new(dg));
        self
    }

    pub fn with_window(mut self, half_window: f64, zero_extend: bool) -> Self {
        self.half_window = half_window;
        self.zero_extend = zero_extend;
        self
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.df.is_some() && self.dg.is_some()
    }

    pub fn eval_f(&self, x: Vec2) -> Vec2 {
        (self.f)(x)
    }

    pub fn eval_g(&self, x: Vec2, t: f64) -> Vec2 {
        if self.zero_extend && t.abs() > self.half_window {
            return Vec2::ZERO;
        }
        (self.g)(x, t)
    }

    pub fn eval_total(&self, x: Vec2, t: f64) -> Vec2 {
        self.eval_f(x) + self.eval_g(x, t)
    }

    fn fd_step(&self) -> f64 {
        1e-6 * self.domain.diagonal()
    }

    pub fn jac_f(&self, x: Vec2) -> Mat2 {
        if let Some(df) = &self.df {
            return df(x);
        }
        let h = self.fd_step();
        let ex = Vec2::new(h, 0.0);
        let ey = Vec2::new(0.0, h);
        let dfx = (self.eval_f(x + ex) - self.eval_f(x - ex)) / (2.0 * h);
        let dfy = (self.eval_f(x + ey) - self.eval_f(x - ey)) / (2.0 * h);
        Mat2::from_columns(dfx, dfy)
    }

    pub fn jac_g(&self, x: Vec2, t: f64) -> Mat2 {
        if self.zero_extend && t.abs() > self.half_window {
            return Mat2::ZERO;
        }
        if let Some(dg) = &self.dg {
            return dg(x, t);
        }
        let h = self.fd_step();
        let ex = Vec2::new(h, 0.0);
        let ey = Vec2::new(0.0, h);
        let dgx = (self.eval_g(x + ex, t) - self.eval_g(x - ex, t)) / (2.0 * h);
        let dgy = (self.eval_g(x + ey, t) - self.eval_g(x - ey, t)) / (2.0 * h);
        Mat2::from_columns(dgx, dgy)
    }

    pub fn jac_total(&self, x: Vec2, t: f64) -> Mat2 {
        self.jac_f(x) + self.jac_g(x, t)
    }

    /// New field with the same `f` and the sum of both unsteady parts.
    pub fn with_added_perturbation(&self, other: &PlanarVelocityField) -> PlanarVelocityField {
        let g1 = Arc::clone(&self.g);
        let g2 = other.clone();
        let mut field = PlanarVelocityField {
            f: Arc::clone(&self.f),
            g: Arc::new(move |x, t| g1(x, t) + g2.eval_g(x, t)),
            df: self.df.clone(),
            dg: None,
            domain: self.domain,
            half_window: self.half_window.min(other.half_window),
            zero_extend: self.zero_extend || other.zero_extend,
        };
        if let (Some(dg1), Some(_)) = (self.dg.clone(), other.dg.clone()) {
            let o = other.clone();
            field.dg = Some(Arc::new(move |x, t| dg1(x, t) + o.jac_g(x, t)));
        }
        field
    }
}

/// Taylor-Green flow on [0,2] x [0,1]:
/// `f(x) = (-pi A sin(pi x1) cos(pi x2), pi A cos(pi x1) sin(pi x2))`, `g = 0`.
pub fn taylor_green(amplitude: f64) -> PlanarVelocityField {
    use std::f64::consts::PI;
    let a = amplitude;
    PlanarVelocityField::new(
        move |p: Vec2| {
            Vec2::new(
                -PI * a * (PI * p.x).sin() * (PI * p.y).cos(),
                PI * a * (PI * p.x).cos() * (PI * p.y).sin(),
            )
        },
        |_, _| Vec2::ZERO,
        BoundingBox::new(0.0, 2.0, 0.0, 1.0),
    )
    .with_analytic_jacobians(
        move |p: Vec2| {
            let pp = PI * PI * a;
            Mat2::new(
                -pp * (PI * p.x).cos() * (PI * p.y).cos(),
                pp * (PI * p.x).sin() * (PI * p.y).sin(),
                -pp * (PI * p.x).sin() * (PI * p.y).sin(),
                pp * (PI * p.x).cos() * (PI * p.y).cos(),
            )
        },
        |_, _| Mat2::ZERO,
    )
}

/// Saddle point of the autonomous part with its eigen-frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SaddleFrame {
    pub a: Vec2,
    pub lambda_s: f64,
    pub lambda_u: f64,
    pub v_s: Vec2,
    pub v_u: Vec2,
}

impl SaddleFrame {
    pub fn v_s_perp(&self) -> Vec2 {
        self.v_s.perp()
    }

    pub fn v_u_perp(&self) -> Vec2 {
        self.v_u.perp()
    }

    /// Eigenvalue gap `lambda_u - lambda_s > 0`.
    pub fn gap(&self) -> f64 {
        self.lambda_u - self.lambda_s
    }

    pub fn is_degenerate(&self) -> bool {
        self.v_s.dot(self.v_u_perp()).abs() < 1e-10
    }
}

/// Sign convention: make the lexicographically first nonzero component positive.
fn fix_sign(v: Vec2) -> Vec2 {
    let lead = if v.x.abs() > 1e-12 { v.x } else { v.y };
    if lead < 0.0 {
        -v
    } else {
        v
    }
}

/// Newton iteration on `f` from `guess`, followed by eigen-decomposition of
/// `Df` at the root. Uses a finite-difference Jacobian for the Newton steps
/// and the field's Jacobian (analytic when available) for the eigen-frame.
pub fn find_saddle(field: &PlanarVelocityField, guess: Vec2) -> Result<SaddleFrame> {
    if !field.domain.contains(guess) {
        return Err(Error::OutOfDomain(guess.x, guess.y));
    }
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 50;
    let h = field.fd_step();
    let mut x = guess;
    let mut res = field.eval_f(x).norm();
    for _ in 0..MAX_ITER {
        if res < TOL {
            break;
        }
        let ex = Vec2::new(h, 0.0);
        let ey = Vec2::new(0.0, h);
        let jac = Mat2::from_columns(
            (field.eval_f(x + ex) - field.eval_f(x - ex)) / (2.0 * h),
            (field.eval_f(x + ey) - field.eval_f(x - ey)) / (2.0 * h),
        );
        let step = jac.solve(field.eval_f(x)).ok_or(Error::NotSaddle(
            "singular Jacobian during Newton iteration".into(),
        ))?;
        // Damped update: halve the step while the residual grows.
        let mut scale = 1.0;
        let mut x_new = x - step;
        let mut res_new = field.eval_f(x_new).norm();
        for _ in 0..20 {
            if res_new <= res || res_new < TOL {
                break;
            }
            scale *= 0.5;
            x_new = x - step * scale;
            res_new = field.eval_f(x_new).norm();
        }
        x = x_new;
        res = res_new;
    }
    if res >= TOL {
        return Err(Error::NoConvergence(MAX_ITER, res));
    }

    let jac = field.jac_f(x);
    let ((l1, v1), (l2, v2)) = jac
        .eigen_real()
        .ok_or_else(|| Error::NotSaddle("complex eigenvalues".into()))?;
    if !(l1 < 0.0 && l2 > 0.0) {
        return Err(Error::NotSaddle(format!(
            "eigenvalues {l1:.3e}, {l2:.3e} do not straddle zero"
        )));
    }
    Ok(SaddleFrame {
        a: x,
        lambda_s: l1,
        lambda_u: l2,
        v_s: fix_sign(v1),
        v_u: fix_sign(v2),
    })
}

/// Scalar time signal with an analytic (or tabulated) derivative.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeSignal {
    Constant { value: f64 },
    /// `amp * cos(omega t)`.
    Cosine { amp: f64, omega: f64 },
    /// `amp * tanh((t - center) / width)`.
    SmoothedStep { amp: f64, center: f64, width: f64 },
    /// `offset + slope * (t - t_mid) * [tanh((t - t_on)/width) - tanh((t - t_off)/width)]`:
    /// a linear ramp switched on and off by smoothed steps.
    GatedRamp {
        #[serde(default)]
        offset: f64,
        slope: f64,
        t_mid: f64,
        t_on: f64,
        t_off: f64,
        width: f64,
    },
    /// Sampled values on a uniform time grid; derivative by centered
    /// differences, one-sided at the endpoints.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl TimeSignal {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeSignal::Constant { value } => *value,
            TimeSignal::Cosine { amp, omega } => amp * (omega * t).cos(),
            TimeSignal::SmoothedStep { amp, center, width } => amp * ((t - center) / width).tanh(),
            TimeSignal::GatedRamp { offset, slope, t_mid, t_on, t_off, width } => {
                offset
                    + slope
                        * (t - t_mid)
                        * (((t - t_on) / width).tanh() - ((t - t_off) / width).tanh())
            }
            TimeSignal::Tabulated { times, values } => interp_tabulated(times, values, t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            TimeSignal::Constant { .. } => 0.0,
            TimeSignal::Cosine { amp, omega } => -amp * omega * (omega * t).sin(),
            TimeSignal::SmoothedStep { amp, center, width } => {
                amp / width * sech2((t - center) / width)
            }
            TimeSignal::GatedRamp { offset: _, slope, t_mid, t_on, t_off, width } => {
                let gate = ((t - t_on) / width).tanh() - ((t - t_off) / width).tanh();
                let gate_dt = (sech2((t - t_on) / width) - sech2((t - t_off) / width)) / width;
                slope * gate + slope * (t - t_mid) * gate_dt
            }
            TimeSignal::Tabulated { times, values } => deriv_tabulated(times, values, t),
        }
    }
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

fn interp_tabulated(times: &[f64], values: &[f64], t: f64) -> f64 {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return values[0];
    }
    if t >= times[n - 1] {
        return values[n - 1];
    }
    let k = times.partition_point(|&s| s <= t).min(n - 1);
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    values[k - 1] * (1.0 - w) + values[k] * w
}

fn deriv_tabulated(times: &[f64], values: &[f64], t: f64) -> f64 {
    let n = times.len();
    if n < 2 {
        return 0.0;
    }
    let slopes = |k: usize| (values[k + 1] - values[k]) / (times[k + 1] - times[k]);
    // Nearest sample: centered difference at interior nodes, one-sided at ends.
    let k = times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map(|(k, _)| k)
        .unwrap();
    if k == 0 {
        slopes(0)
    } else if k == n - 1 {
        slopes(n - 2)
    } else {
        (values[k + 1] - values[k - 1]) / (times[k + 1] - times[k - 1])
    }
}

/// A planar path signal built from two scalar components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSignal {
    pub x: TimeSignal,
    pub y: TimeSignal,
}

impl PathSignal {
    pub fn constant(p: Vec2) -> Self {
        PathSignal {
            x: TimeSignal::Constant { value: p.x },
            y: TimeSignal::Constant { value: p.y },
        }
    }

    pub fn value(&self, t: f64) -> Vec2 {
        Vec2::new(self.x.value(t), self.y.value(t))
    }

    pub fn derivative(&self, t: f64) -> Vec2 {
        Vec2::new(self.x.derivative(t), self.y.derivative(t))
    }
}

/// Smoothed indicator of a delta-radius ball:
/// `I(x) = [tanh((r+delta)/delta^2) - tanh((r-delta)/delta^2)] / 2` with
/// `r = |x - center|`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BumpFunction {
    pub center: Vec2,
    pub delta: f64,
}

impl BumpFunction {
    pub fn new(center: Vec2, delta: f64) -> Self {
        BumpFunction { center, delta }
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        let d = self.delta;
        0.5 * (((r + d) / (d * d)).tanh() - ((r - d) / (d * d)).tanh())
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        self.eval_radius((x - self.center).norm())
    }

    /// d/dr of the profile.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        let d = self.delta;
        0.5 / (d * d) * (sech2((r + d) / (d * d)) - sech2((r - d) / (d * d)))
    }

    /// Spatial gradient; zero at the center by radial symmetry.
    pub fn gradient(&self, x: Vec2) -> Vec2 {
        let rel = x - self.center;
        let r = rel.norm();
        if r == 0.0 {
            return Vec2::ZERO;
        }
        rel * (self.radial_derivative(r) / r)
    }
}

/// Standalone +pi/2 rotation, mirroring `Vec2::perp`.
pub fn perp(v: Vec2) -> Vec2 {
    v.perp()
}

/// Velocity samples on a space-time lattice: `samples[k][index(i,j)]` is the
/// velocity at grid node (i, j) and time `times[k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledField {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub samples: Vec<Vec<Vec2>>,
}

impl SampledField {
    /// Sample an analytic field on a lattice.
    pub fn from_field(field: &PlanarVelocityField, grid: GridSpec, times: Vec<f64>) -> Self {
        let samples = times
            .iter()
            .map(|&t| {
                let mut slice = Vec::with_capacity(grid.len());
                for j in 0..grid.ny {
                    for i in 0..grid.nx {
                        slice.push(field.eval_total(grid.node(i, j), t));
                    }
                }
                slice
            })
            .collect();
        SampledField { grid, times, samples }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.samples.is_empty() {
            return Err(Error::EmptyGrid);
        }
        for slice in &self.samples {
            if slice.len() != self.grid.len() {
                return Err(Error::EmptyGrid);
            }
        }
        if self.times.len() != self.samples.len() {
            return Err(Error::NonUniformTimeGrid);
        }
        if self.times.len() >= 2 {
            let dt = self.times[1] - self.times[0];
            for w in self.times.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                    return Err(Error::NonUniformTimeGrid);
                }
            }
        }
        Ok(())
    }

    /// Bilinear interpolation in space of one time slice.
    pub fn interp_slice(&self, k: usize, p: Vec2) -> Vec2 {
        let g = &self.grid;
        let fx = ((p.x - g.bounds.x_min) / g.dx()).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((p.y - g.bounds.y_min) / g.dy()).clamp(0.0, (g.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx.saturating_sub(2));
        let j0 = (fy.floor() as usize).min(g.ny.saturating_sub(2));
        let wx = fx - i0 as f64;
        let wy = fy - j0 as f64;
        let s = &self.samples[k];
        if g.nx == 1 || g.ny == 1 {
            return s[g.index(i0, j0)];
        }
        s[g.index(i0, j0)] * ((1.0 - wx) * (1.0 - wy))
            + s[g.index(i0 + 1, j0)] * (wx * (1.0 - wy))
            + s[g.index(i0, j0 + 1)] * ((1.0 - wx) * wy)
            + s[g.index(i0 + 1, j0 + 1)] * (wx * wy)
    }

    /// Bilinear in space, linear in time.
    pub fn interp(&self, p: Vec2, t: f64) -> Vec2 {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.interp_slice(0, p);
        }
        if t >= self.times[n - 1] {
            return self.interp_slice(n - 1, p);
        }
        let k = self.times.partition_point(|&s| s <= t).min(n - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.interp_slice(k - 1, p) * (1.0 - w) + self.interp_slice(k, p) * w
    }
}
