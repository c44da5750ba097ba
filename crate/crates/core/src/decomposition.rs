//! Steady/unsteady split of sampled velocity data: the autonomous part is the
//! composite-Simpson time mean at each grid node, the nonautonomous remainder
//! is whatever is left, and the report records the sup-norm ratio that the
//! nearly autonomous ansatz needs to be small.

use crate::flow_model::{PlanarVelocityField, SampledField};
use crate::geom::Vec2;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Simpson,
    Trapezoid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// sup over grid x window of |g|.
    pub eps: f64,
    /// sup over grid of |f|.
    pub f_norm: f64,
    pub ratio: f64,
    pub valid: bool,
    pub threshold: f64,
    pub rule: QuadratureRule,
}

/// Result of splitting sampled data `u = f + g`.
pub struct Decomposition {
    /// Time-mean velocity at each grid node (row-major).
    pub f_grid: Vec<Vec2>,
    /// Remainder samples `u - f` on the original lattice.
    pub g_samples: SampledField,
    pub report: DecompositionReport,
}

impl Decomposition {
    /// Interpolating field: `f` bilinear from the mean grid, `g` bilinear in
    /// space and linear in time from the remainder samples, zero-extended
    /// outside the data window.
    pub fn into_field(self) -> PlanarVelocityField {
        let grid = self.g_samples.grid;
        let f_samples = SampledField {
            grid,
            times: vec![0.0],
            samples: vec![self.f_grid],
        };
        let f_samples = Arc::new(f_samples);
        let g_samples = Arc::new(self.g_samples);
        let half_window = g_samples.times.last().copied().unwrap_or(0.0).abs();
        let g = Arc::clone(&g_samples);
        PlanarVelocityField::new(
            move |p| f_samples.interp_slice(0, p),
            move |p, t| g.interp(p, t),
            grid.bounds,
        )
        .with_window(half_window, true)
    }
}

const DEFAULT_ANSATZ_THRESHOLD: f64 = 0.5;

/// Split sampled data into time mean and remainder.
///
/// Requires a symmetric window `[-T, T]` with at least 3 uniformly spaced
/// samples. Odd sample counts use composite Simpson; even counts fall back to
/// the trapezoid rule, recorded in the report.
pub fn decompose(u: &SampledField) -> Result<Decomposition> {
    decompose_with_threshold(u, DEFAULT_ANSATZ_THRESHOLD)
}

pub fn decompose_with_threshold(u: &SampledField, threshold: f64) -> Result<Decomposition> {
    u.validate()?;
    let nt = u.times.len();
    if nt < 3 {
        return Err(Error::NonUniformTimeGrid);
    }
    let t0 = u.times[0];
    let t1 = u.times[nt - 1];
    let span = t1 - t0;
    if (t0 + t1).abs() > 1e-9 * span.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "window [{t0}, {t1}] is not symmetric about zero"
        )));
    }
    let dt = span / (nt - 1) as f64;

    let rule = if nt % 2 == 1 { QuadratureRule::Simpson } else { QuadratureRule::Trapezoid };
    let weights: Vec<f64> = match rule {
        QuadratureRule::Simpson => (0..nt)
            .map(|k| {
                if k == 0 || k == nt - 1 {
                    dt / 3.0
                } else if k % 2 == 1 {
                    4.0 * dt / 3.0
                } else {
                    2.0 * dt / 3.0
                }
            })
            .collect(),
        QuadratureRule::Trapezoid => (0..nt)
            .map(|k| if k == 0 || k == nt - 1 { 0.5 * dt } else { dt })
            .collect(),
    };

    let n_nodes = u.grid.len();
    let mut f_grid = vec![Vec2::ZERO; n_nodes];
    for (k, w) in weights.iter().enumerate() {
        for (node, value) in u.samples[k].iter().enumerate() {
            f_grid[node] += *value * *w;
        }
    }
    let inv_span = 1.0 / span;
    for f in &mut f_grid {
        *f = *f * inv_span;
    }

    let g_slices: Vec<Vec<Vec2>> = u
        .samples
        .iter()
        .map(|slice| slice.iter().zip(&f_grid).map(|(v, f)| *v - *f).collect())
        .collect();

    let f_norm = f_grid.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let eps = g_slices
        .iter()
        .flat_map(|s| s.iter())
        .map(|v| v.norm())
        .fold(0.0f64, f64::max);
    if f_norm <= 1e-14 * eps.max(1.0) {
        return Err(Error::NotNearlyAutonomous);
    }
    let ratio = eps / f_norm;
    let report = DecompositionReport {
        eps,
        f_norm,
        ratio,
        valid: ratio <= threshold,
        threshold,
        rule,
    };
    Ok(Decomposition {
        f_grid,
        g_samples: SampledField { grid: u.grid, times: u.times.clone(), samples: g_slices },
        report,
    })
}

/// True iff the measured ratio is at or below the threshold.
pub fn ansatz_check(report: &DecompositionReport, threshold: f64) -> bool {
    report.ratio <= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_model::{BoundingBox, GridSpec, PlanarVelocityField};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn lattice(nt: usize, half: f64) -> Vec<f64> {
        (0..nt).map(|k| -half + 2.0 * half * k as f64 / (nt - 1) as f64).collect()
    }

    fn steady_plus(gx: impl Fn(f64) -> f64 + Send + Sync + 'static) -> PlanarVelocityField {
        PlanarVelocityField::new(
            |p: Vec2| Vec2::new(p.x + 1.0, -p.y),
            move |_, t| Vec2::new(gx(t), 0.0),
            BoundingBox::new(0.0, 1.0, 0.0, 1.0),
        )
    }

    #[test]
    fn steady_input_has_zero_remainder() {
        let field = steady_plus(|_| 0.0);
        let grid = GridSpec::new(5, 5, field.domain);
        let sampled = SampledField::from_field(&field, grid, lattice(9, 1.0));
        let dec = decompose(&sampled).unwrap();
        assert_abs_diff_eq!(dec.report.eps, 0.0, epsilon = 1e-14);
        assert!(dec.report.valid);
        assert_eq!(dec.report.rule, QuadratureRule::Simpson);
    }

    #[test]
    fn cosine_perturbation_recovers_mean_on_full_periods() {
        let field = steady_plus(|t| 0.1 * t.cos());
        let grid = GridSpec::new(5, 5, field.domain);
        let sampled = SampledField::from_field(&field, grid, lattice(101, PI));
        let dec = decompose(&sampled).unwrap();
        // Integral of cos over [-pi, pi] vanishes; Simpson error stays tiny.
        let node = grid.node(2, 3);
        let f = dec.f_grid[grid.index(2, 3)];
        assert_abs_diff_eq!(f.x, node.x + 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(f.y, -node.y, epsilon = 1e-6);
        assert_abs_diff_eq!(dec.report.eps, 0.1, epsilon = 1e-4);
    }

    #[test]
    fn zero_mean_field_is_rejected() {
        let field = PlanarVelocityField::new(
            |_| Vec2::ZERO,
            |_, t| Vec2::new(t, 0.0),
            BoundingBox::new(0.0, 1.0, 0.0, 1.0),
        );
        let grid = GridSpec::new(3, 3, field.domain);
        let sampled = SampledField::from_field(&field, grid, lattice(5, 1.0));
        assert!(matches!(decompose(&sampled), Err(Error::NotNearlyAutonomous)));
    }

    #[test]
    fn reconstruction_is_exact_at_samples() {
        let field = steady_plus(|t| 0.3 * (2.0 * t).sin());
        let grid = GridSpec::new(4, 3, field.domain);
        let sampled = SampledField::from_field(&field, grid, lattice(11, 1.5));
        let dec = decompose(&sampled).unwrap();
        for (k, slice) in sampled.samples.iter().enumerate() {
            for (node, u) in slice.iter().enumerate() {
                let rebuilt = dec.f_grid[node] + dec.g_samples.samples[k][node];
                assert_abs_diff_eq!(rebuilt.x, u.x, epsilon = 1e-13);
                assert_abs_diff_eq!(rebuilt.y, u.y, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn decompose_is_idempotent() {
        let field = steady_plus(|t| 0.2 * t.cos());
        let grid = GridSpec::new(4, 4, field.domain);
        let sampled = SampledField::from_field(&field, grid, lattice(21, 2.0));
        let dec1 = decompose(&sampled).unwrap();
        // Rebuild u = f + g from the split and decompose again.
        let rebuilt = SampledField {
            grid,
            times: sampled.times.clone(),
            samples: dec1
                .g_samples
                .samples
                .iter()
                .map(|s| s.iter().zip(&dec1.f_grid).map(|(g, f)| *g + *f).collect())
                .collect(),
        };
        let dec2 = decompose(&rebuilt).unwrap();
        for (a, b) in dec1.f_grid.iter().zip(&dec2.f_grid) {
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-12);
            assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(dec1.report.eps, dec2.report.eps, epsilon = 1e-12);
    }

    #[test]
    fn eps_scales_linearly_with_perturbation() {
        let grid = GridSpec::new(4, 4, BoundingBox::new(0.0, 1.0, 0.0, 1.0));
        let eps_of = |c: f64| {
            let field = steady_plus(move |t| c * (3.0 * t).cos());
            let sampled = SampledField::from_field(&field, grid, lattice(41, 1.0));
            decompose(&sampled).unwrap().report.eps
        };
        let base = eps_of(0.05);
        assert_abs_diff_eq!(eps_of(0.15), 3.0 * base, epsilon = 1e-10);
    }

    #[test]
    fn even_sample_count_falls_back_to_trapezoid() {
        let field = steady_plus(|t| 0.1 * t.cos());
        let grid = GridSpec::new(3, 3, field.domain);
        let sampled = SampledField::from_field(&field, grid, lattice(10, 1.0));
        let dec = decompose(&sampled).unwrap();
        assert_eq!(dec.report.rule, QuadratureRule::Trapezoid);
    }

    #[test]
    fn ansatz_check_threshold_logic() {
        let mut report = DecompositionReport {
            eps: 0.0,
            f_norm: 1.0,
            ratio: 0.0,
            valid: true,
            threshold: 0.5,
            rule: QuadratureRule::Simpson,
        };
        assert!(ansatz_check(&report, 0.5));
        report.ratio = 0.86;
        assert!(!ansatz_check(&report, 0.5));
        assert!(ansatz_check(&report, 1.0));
    }

    #[test]
    fn asymmetric_window_is_rejected() {
        let field = steady_plus(|_| 0.0);
        let grid = GridSpec::new(3, 3, field.domain);
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.25).collect();
        let sampled = SampledField::from_field(&field, grid, times);
        assert!(decompose(&sampled).is_err());
    }
}
