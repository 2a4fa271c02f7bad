//! Device activation profile and per-slot arrival intensity.
//!
//! Devices activate over `[0, T_A]` following a beta density scaled to the
//! activation span. The expected number of new arrivals for RACH slot `i` is
//! the population times the probability mass of the interval
//! `(t_{i-1}, t_i]`, with `t_i = i * r_p`.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationProfile {
    pub alpha: f64,
    pub beta_shape: f64,
    pub activation_span_ms: f64,
    pub population: u32,
}

impl ActivationProfile {
    pub fn new(alpha: f64, beta_shape: f64, activation_span_ms: f64, population: u32) -> Result<Self> {
        let profile = Self {
            alpha,
            beta_shape,
            activation_span_ms,
            population,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// 3GPP beta traffic model: 30000 devices, Beta(3, 4) over 10 s.
    pub fn beta_traffic_model() -> Self {
        Self {
            alpha: 3.0,
            beta_shape: 4.0,
            activation_span_ms: 10_000.0,
            population: 30_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.beta_shape > 0.0 && self.beta_shape.is_finite()) {
            return Err(Error::domain(
                "beta_shape",
                format!("must be positive, got {}", self.beta_shape),
            ));
        }
        if !(self.activation_span_ms > 0.0 && self.activation_span_ms.is_finite()) {
            return Err(Error::domain(
                "activation_span_ms",
                format!("must be positive, got {}", self.activation_span_ms),
            ));
        }
        if self.population == 0 {
            return Err(Error::domain("population", "must be at least 1"));
        }
        Ok(())
    }

    /// Probability that a device activates no later than `t_ms`.
    pub fn cdf(&self, t_ms: f64) -> f64 {
        let x = (t_ms / self.activation_span_ms).clamp(0.0, 1.0);
        beta_reg(self.alpha, self.beta_shape, x)
    }

    /// Probability that a device activates after `t_ms`, computed from the
    /// mirrored distribution so that the upper tail keeps relative accuracy.
    fn survival(&self, t_ms: f64) -> f64 {
        let x = (t_ms / self.activation_span_ms).clamp(0.0, 1.0);
        beta_reg(self.beta_shape, self.alpha, 1.0 - x)
    }

    /// Probability mass of `(lo_ms, hi_ms]`.
    fn interval_mass(&self, lo_ms: f64, hi_ms: f64) -> f64 {
        let span = self.activation_span_ms;
        let lo = lo_ms.clamp(0.0, span);
        let hi = hi_ms.clamp(0.0, span);
        if hi <= lo {
            return 0.0;
        }
        // Differencing two values close to 1 cancels badly, so the half of the
        // span past the median of the mass goes through the survival function.
        let mass = if lo >= 0.5 * span {
            self.survival(lo) - self.survival(hi)
        } else {
            self.cdf(hi) - self.cdf(lo)
        };
        mass.max(0.0)
    }

    /// Number of RACH slots whose interval intersects the activation span.
    pub fn slots_in_span(&self, rach_period_ms: f64) -> usize {
        (self.activation_span_ms / rach_period_ms).ceil() as usize
    }
}

/// Activation density p(t) in probability per millisecond.
pub fn activation_density(t_ms: f64, profile: &ActivationProfile) -> Result<f64> {
    profile.validate()?;
    let span = profile.activation_span_ms;
    if !(0.0..=span).contains(&t_ms) {
        return Err(Error::domain(
            "t_ms",
            format!("{t_ms} lies outside the activation span [0, {span}]"),
        ));
    }
    let (a, b) = (profile.alpha, profile.beta_shape);
    let u = t_ms / span;
    // Endpoint limits: density is 0 when the exponent is positive, the
    // uniform constant when it is zero, and unbounded when negative.
    let edge = |exp: f64| -> Option<f64> {
        if exp > 0.0 {
            Some(0.0)
        } else if exp < 0.0 {
            Some(f64::INFINITY)
        } else {
            None
        }
    };
    if u == 0.0 {
        if let Some(v) = edge(a - 1.0) {
            return Ok(v);
        }
    }
    if u == 1.0 {
        if let Some(v) = edge(b - 1.0) {
            return Ok(v);
        }
    }
    let log_terms = |x: f64, e: f64| if e == 0.0 { 0.0 } else { e * x.ln() };
    let log_density = log_terms(u, a - 1.0) + log_terms(1.0 - u, b - 1.0) - ln_beta(a, b) - span.ln();
    Ok(log_density.exp())
}

/// Expected number of new arrivals for RACH slot `slot_index` (1-based).
pub fn access_intensity(slot_index: usize, profile: &ActivationProfile, rach_period_ms: f64) -> Result<f64> {
    profile.validate()?;
    check_period(rach_period_ms)?;
    if slot_index == 0 {
        return Err(Error::domain("slot_index", "slots are numbered from 1"));
    }
    let hi = slot_index as f64 * rach_period_ms;
    let lo = hi - rach_period_ms;
    Ok(profile.population as f64 * profile.interval_mass(lo, hi))
}

/// Intensities for every slot that intersects the activation span; entry `k`
/// belongs to slot `k + 1`. Slots past the span receive no new arrivals.
pub fn access_intensities(profile: &ActivationProfile, rach_period_ms: f64) -> Result<Vec<f64>> {
    profile.validate()?;
    check_period(rach_period_ms)?;
    let n = profile.population as f64;
    Ok((1..=profile.slots_in_span(rach_period_ms))
        .map(|i| {
            let hi = i as f64 * rach_period_ms;
            n * profile.interval_mass(hi - rach_period_ms, hi)
        })
        .collect())
}

fn check_period(rach_period_ms: f64) -> Result<()> {
    if rach_period_ms > 0.0 && rach_period_ms.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(
            "rach_period_ms",
            format!("must be positive, got {rach_period_ms}"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Adaptive Simpson on the raw density formula, independent of the
    /// incomplete-beta route used by the implementation.
    fn simpson_mass(profile: &ActivationProfile, lo: f64, hi: f64) -> f64 {
        let (a, b, span) = (profile.alpha, profile.beta_shape, profile.activation_span_ms);
        let norm = span.powf(a + b - 1.0) * statrs::function::beta::beta(a, b);
        let f = |t: f64| t.powf(a - 1.0) * (span - t).powf(b - 1.0) / norm;
        #[allow(clippy::too_many_arguments)]
        fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let m = 0.5 * (lo + hi);
        let (fa, fm, fb) = (f(lo), f(m), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        step(&f, lo, hi, fa, fm, fb, whole, 1e-16, 40)
    }

    fn model() -> ActivationProfile {
        ActivationProfile::beta_traffic_model()
    }

    #[test]
    fn uniform_density_is_flat() {
        let p = ActivationProfile::new(1.0, 1.0, 10_000.0, 30_000).unwrap();
        assert_relative_eq!(activation_density(3000.0, &p).unwrap(), 1e-4, max_relative = 1e-12);
        assert_relative_eq!(activation_density(0.0, &p).unwrap(), 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn density_vanishes_at_origin_for_alpha_above_one() {
        assert_eq!(activation_density(0.0, &model()).unwrap(), 0.0);
        assert_eq!(activation_density(10_000.0, &model()).unwrap(), 0.0);
    }

    #[test]
    fn density_matches_high_precision_fixture() {
        // 50-digit evaluation of the scaled beta density.
        assert_relative_eq!(activation_density(4000.0, &model()).unwrap(), 0.00020736, max_relative = 1e-12);
        assert_relative_eq!(activation_density(5000.0, &model()).unwrap(), 0.0001875, max_relative = 1e-12);
    }

    #[test]
    fn density_rejects_out_of_span_and_bad_shapes() {
        assert!(activation_density(-1.0, &model()).is_err());
        assert!(activation_density(10_000.5, &model()).is_err());
        let bad = ActivationProfile { alpha: 0.0, ..model() };
        assert!(activation_density(1.0, &bad).is_err());
        let bad = ActivationProfile { beta_shape: -2.0, ..model() };
        assert!(activation_density(1.0, &bad).is_err());
    }

    #[test]
    fn uniform_intensity_is_population_share() {
        let p = ActivationProfile::new(1.0, 1.0, 10_000.0, 30_000).unwrap();
        for i in [1, 7, 1000, 2000] {
            assert_relative_eq!(access_intensity(i, &p, 5.0).unwrap(), 15.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn intensity_is_zero_past_span() {
        assert_eq!(access_intensity(2001, &model(), 5.0).unwrap(), 0.0);
        assert_eq!(access_intensity(50_000, &model(), 5.0).unwrap(), 0.0);
        assert!(access_intensity(1, &model(), 0.0).is_err());
        assert!(access_intensity(0, &model(), 5.0).is_err());
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn intensity_matches_quadrature_oracle() {
        let p = model();
        for i in [1usize, 2, 100, 800, 1000, 1500, 1999, 2000] {
            let hi = i as f64 * 5.0;
            let oracle = 30_000.0 * simpson_mass(&p, hi - 5.0, hi);
            let got = access_intensity(i, &p, 5.0).unwrap();
            assert_relative_eq!(got, oracle, max_relative = 1e-8);
        }
        // 50-digit quadrature values for a few slots.
        assert_relative_eq!(access_intensity(1, &p, 5.0).unwrap(), 7.49156587453125e-5, max_relative = 1e-9);
        assert_relative_eq!(access_intensity(800, &p, 5.0).unwrap(), 31.1039729943862546875, max_relative = 1e-12);
        assert_relative_eq!(access_intensity(2000, &p, 5.0).unwrap(), 2.81025046875e-8, max_relative = 1e-8);
    }

    #[test]
    fn intensities_normalize_to_population() {
        let lam = access_intensities(&model(), 5.0).unwrap();
        assert_eq!(lam.len(), 2000);
        let total: f64 = lam.iter().sum();
        assert!((total - 30_000.0).abs() < 1e-4, "sum = {total}");
        let oracle: f64 = (1..=2000)
            .map(|i| 30_000.0 * simpson_mass(&model(), (i - 1) as f64 * 5.0, i as f64 * 5.0))
            .sum();
        assert!((oracle - 30_000.0).abs() < 1e-4, "oracle sum = {oracle}");
    }

    #[test]
    fn partial_last_slot_is_truncated() {
        let p = ActivationProfile::new(1.0, 1.0, 12.0, 12).unwrap();
        let lam = access_intensities(&p, 5.0).unwrap();
        assert_eq!(lam.len(), 3);
        assert_relative_eq!(lam[2], 2.0, max_relative = 1e-12);
    }
}
