//! Exponentially weighted time integrals with decaying semi-infinite limits.
//!
//! Evaluates `∫ e^{rate (tau - ref_time)} integrand(tau) dtau` over
//! `[lower, upper]`, where one endpoint may be infinite provided the weight
//! decays toward it. Semi-infinite integrals are truncated where the weight
//! falls below `1e-14` relative to its value at the finite endpoint, then
//! handed to adaptive composite Simpson.

use crate::{Error, Result};

/// Relative weight below which the exponential tail is discarded.
const TAIL_CUTOFF: f64 = 1e-14;
/// Minimum number of initial panels; resists oscillatory integrands.
const MIN_PANELS: usize = 64;
const MAX_DEPTH: usize = 40;

/// Specification of one weighted integral.
pub struct ExpWeightedIntegral<F> {
    /// Exponent coefficient of the weight `e^{rate (tau - ref_time)}`.
    pub rate: f64,
    pub integrand: F,
    /// Lower limit; may be `f64::NEG_INFINITY`.
    pub lower: f64,
    /// Upper limit; may be `f64::INFINITY`.
    pub upper: f64,
    /// Reference time of the weight. Keeps the weight O(1) near the finite
    /// endpoint so that large-rate integrals neither overflow nor underflow.
    pub ref_time: f64,
    pub abs_tol: f64,
}

impl<F: Fn(f64) -> f64> ExpWeightedIntegral<F> {
    pub fn new(rate: f64, integrand: F, lower: f64, upper: f64) -> Self {
        let ref_time = if lower.is_finite() { lower } else { upper };
        ExpWeightedIntegral { rate, integrand, lower, upper, ref_time, abs_tol: 1e-10 }
    }

    pub fn with_ref_time(mut self, ref_time: f64) -> Self {
        self.ref_time = ref_time;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn evaluate(&self) -> Result<f64> {
        integrate_decaying(self)
    }
}

/// Evaluate the integral, truncating infinite endpoints by the weight decay.
pub fn integrate_decaying<F: Fn(f64) -> f64>(spec: &ExpWeightedIntegral<F>) -> Result<f64> {
    let (mut a, mut b) = (spec.lower, spec.upper);
    if a >= b {
        return Ok(0.0);
    }
    let tail_span = -TAIL_CUTOFF.ln() / spec.rate.abs();
    if b.is_infinite() {
        if spec.rate >= 0.0 {
            return Err(Error::DivergentWeight(spec.rate));
        }
        b = a + tail_span;
    }
    if a.is_infinite() {
        if spec.rate <= 0.0 {
            return Err(Error::DivergentWeight(spec.rate));
        }
        a = b - tail_span;
    }

    let weighted = |tau: f64| (spec.rate * (tau - spec.ref_time)).exp() * (spec.integrand)(tau);

    // Composite start: MIN_PANELS panels, each refined adaptively.
    let n = MIN_PANELS;
    let h = (b - a) / n as f64;
    let mut total = 0.0;
    let mut converged = true;
    for k in 0..n {
        let x0 = a + k as f64 * h;
        let x1 = if k == n - 1 { b } else { a + (k + 1) as f64 * h };
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (weighted(x0), weighted(xm), weighted(x1));
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        let (value, ok) = adaptive(
            &weighted,
            x0,
            xm,
            x1,
            f0,
            fm,
            f1,
            whole,
            spec.abs_tol / n as f64,
            MAX_DEPTH,
        );
        total += value;
        converged &= ok;
    }
    if !converged {
        return Err(Error::ToleranceNotMet(spec.abs_tol));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    x0: f64,
    xm: f64,
    x1: f64,
    f0: f64,
    fm: f64,
    f1: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> (f64, bool) {
    let xl = 0.5 * (x0 + xm);
    let xr = 0.5 * (xm + x1);
    let (fl, fr) = (f(xl), f(xr));
    let left = (xm - x0) / 6.0 * (f0 + 4.0 * fl + fm);
    let right = (x1 - xm) / 6.0 * (fm + 4.0 * fr + f1);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        // Richardson correction.
        (left + right + delta / 15.0, true)
    } else if depth == 0 {
        (left + right + delta / 15.0, false)
    } else {
        let (vl, okl) = adaptive(f, x0, xl, xm, f0, fl, fm, left, 0.5 * tol, depth - 1);
        let (vr, okr) = adaptive(f, xm, xr, x1, fm, fr, f1, right, 0.5 * tol, depth - 1);
        (vl + vr, okl && okr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    /// Plain high-resolution trapezoid over a truncated interval. Independent
    /// cross-check for the adaptive Simpson path.
    fn trapezoid_oracle<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for k in 1..n {
            s += f(a + k as f64 * h);
        }
        s * h
    }

    #[test]
    fn constant_integrand_semi_infinite() {
        let spec = ExpWeightedIntegral::new(-2.0, |_| 1.0, 0.0, f64::INFINITY);
        assert_abs_diff_eq!(spec.evaluate().unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn finite_window_exponential() {
        let spec = ExpWeightedIntegral::new(-1.0, |_| 1.0, 0.0, 3.0);
        assert_abs_diff_eq!(spec.evaluate().unwrap(), 1.0 - (-3.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn oscillatory_semi_infinite_matches_closed_form() {
        // rate = -L, integrand cos(w tau) on [t, inf):
        // e^{-L t}(L cos wt - w sin wt)/(L^2 + w^2) with ref_time = t.
        let big_l = 2.0 * PI * PI;
        let w = 2.0 * PI;
        for t in [0.0, 0.3, 1.0] {
            let spec = ExpWeightedIntegral::new(-big_l, move |tau: f64| (w * tau).cos(), t, f64::INFINITY);
            let got = spec.evaluate().unwrap();
            // Weight referenced to t, so the closed form drops the e^{-L t} prefactor.
            let expect = (big_l * (w * t).cos() - w * (w * t).sin()) / (big_l * big_l + w * w);
            assert_abs_diff_eq!(got, expect, epsilon = 1e-10);
            // Independent trapezoid cross-check on the truncated interval.
            let tail = 32.3 / big_l;
            let oracle = trapezoid_oracle(
                |tau| (-big_l * (tau - t)).exp() * (w * tau).cos(),
                t,
                t + tail,
                400_000,
            );
            assert_abs_diff_eq!(got, oracle, epsilon = 1e-8);
        }
        // Spot value quoted at t = 0: L / (L^2 + w^2).
        let spec = ExpWeightedIntegral::new(-big_l, move |tau: f64| (w * tau).cos(), 0.0, f64::INFINITY);
        assert_abs_diff_eq!(
            spec.evaluate().unwrap(),
            big_l / (big_l * big_l + w * w),
            epsilon = 1e-10
        );
    }

    #[test]
    fn wrong_rate_sign_is_rejected() {
        let spec = ExpWeightedIntegral::new(0.5, |_| 1.0, 0.0, f64::INFINITY);
        assert!(matches!(spec.evaluate(), Err(Error::DivergentWeight(_))));
        let spec = ExpWeightedIntegral::new(-0.5, |_| 1.0, f64::NEG_INFINITY, 0.0);
        assert!(matches!(spec.evaluate(), Err(Error::DivergentWeight(_))));
    }

    #[test]
    fn linearity() {
        let f = |tau: f64| (3.0 * tau).sin();
        let g = |tau: f64| (tau * tau).cos();
        let eval = |func: &dyn Fn(f64) -> f64| {
            integrate_decaying(&ExpWeightedIntegral::new(-1.5, func, 0.0, f64::INFINITY)).unwrap()
        };
        let combined = eval(&|tau| 2.0 * f(tau) - 0.7 * g(tau));
        assert_abs_diff_eq!(combined, 2.0 * eval(&f) - 0.7 * eval(&g), epsilon = 1e-9);
    }

    #[test]
    fn window_monotone_for_nonnegative_integrand() {
        let value = |upper: f64| {
            integrate_decaying(&ExpWeightedIntegral::new(-1.0, |tau: f64| 1.0 + tau.sin().abs(), 0.0, upper))
                .unwrap()
        };
        let mut prev = 0.0;
        for upper in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let v = value(upper);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn truncation_consistency() {
        // Doubling the truncation point changes nothing at the default cutoff.
        let tail = 32.3 / 2.0;
        let short = integrate_decaying(&ExpWeightedIntegral::new(-2.0, |tau: f64| tau.cos(), 0.0, f64::INFINITY))
            .unwrap();
        let long = integrate_decaying(&ExpWeightedIntegral::new(-2.0, |tau: f64| tau.cos(), 0.0, 2.0 * tail))
            .unwrap();
        assert_abs_diff_eq!(short, long, epsilon = 1e-12);
    }

    #[test]
    fn empty_interval_is_zero() {
        let spec = ExpWeightedIntegral::new(-1.0, |_| 5.0, 2.0, 2.0);
        assert_eq!(spec.evaluate().unwrap(), 0.0);
    }
}
