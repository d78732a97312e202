//! Least-squares line fitting of log-magnitude traces, used to measure
//! empirical exponential decay rates.

use crate::error::{Error, Result};

/// Samples at or below this floor are dropped before taking logs, so a
/// numerically-zero tail cannot corrupt the slope.
pub const DECAY_FLOOR: f64 = 1e-12;

const MIN_SAMPLES: usize = 10;

/// Fit ln(value) = a - rate * t over samples with t >= t_start and
/// value > [`DECAY_FLOOR`]; returns (rate, r_squared).
///
/// A constant trace fits with rate 0; its undefined coefficient of
/// determination is reported as 0 by convention.
pub fn fit_exponential_rate(samples: &[(f64, f64)], t_start: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(t, v)| *t >= t_start && *v > DECAY_FLOOR && v.is_finite() && t.is_finite())
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            have: pts.len(),
            need: MIN_SAMPLES,
        });
    }

    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|(t, _)| t).sum::<f64>() / n;
    let y_mean = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut s_tt = 0.0;
    let mut s_ty = 0.0;
    let mut s_yy = 0.0;
    for (t, y) in &pts {
        let dt = t - t_mean;
        let dy = y - y_mean;
        s_tt += dt * dt;
        s_ty += dt * dy;
        s_yy += dy * dy;
    }
    if s_tt == 0.0 {
        return Err(Error::TooFewSamples {
            have: 1,
            need: MIN_SAMPLES,
        });
    }
    let slope = s_ty / s_tt;
    let r_squared = if s_yy == 0.0 {
        0.0
    } else {
        (s_ty * s_ty) / (s_tt * s_yy)
    };
    // Normalize -0.0 so a flat trace reports exactly rate 0.
    let rate = if slope == 0.0 { 0.0 } else { -slope };
    Ok((rate, r_squared))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(f: impl Fn(f64) -> f64, t0: f64, t1: f64, dt: f64) -> Vec<(f64, f64)> {
        let n = ((t1 - t0) / dt).round() as usize;
        (0..=n)
            .map(|k| {
                let t = t0 + k as f64 * dt;
                (t, f(t))
            })
            .collect()
    }

    #[test]
    fn exact_exponential() {
        let data = sample(|t| (-2.0 * t).exp(), 0.0, 5.0, 0.01);
        let (rate, r2) = fit_exponential_rate(&data, 0.0).unwrap();
        assert!((rate - 2.0).abs() < 1e-6, "rate = {rate}");
        assert!(r2 > 0.999999, "r2 = {r2}");
    }

    #[test]
    fn constant_trace_has_zero_rate() {
        let data = sample(|_| 1.0, 0.0, 1.0, 0.01);
        let (rate, r2) = fit_exponential_rate(&data, 0.0).unwrap();
        assert_eq!(rate, 0.0);
        assert_eq!(r2, 0.0);
    }

    #[test]
    fn modulated_exponential_within_band() {
        let data = sample(
            |t| (-t).exp() * (1.0 + 0.1 * (10.0 * t).sin()),
            0.0,
            8.0,
            0.01,
        );
        let (rate, r2) = fit_exponential_rate(&data, 0.0).unwrap();
        assert!((0.9..=1.1).contains(&rate), "rate = {rate}");
        assert!(r2 > 0.95, "r2 = {r2}");
    }

    #[test]
    fn too_few_samples_after_floor() {
        // Everything beyond t = 0.05 is below the floor.
        let data = sample(|t| if t < 0.05 { 1.0 } else { 1e-15 }, 0.0, 1.0, 0.01);
        assert!(matches!(
            fit_exponential_rate(&data, 0.0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn window_start_is_honored() {
        // Slow start, then clean exponential after t = 1.
        let data = sample(
            |t| {
                if t < 1.0 {
                    1.0
                } else {
                    (-(t - 1.0) * 3.0).exp()
                }
            },
            0.0,
            4.0,
            0.01,
        );
        let (rate, _) = fit_exponential_rate(&data, 1.0).unwrap();
        assert!((rate - 3.0).abs() < 1e-6, "rate = {rate}");
    }
}
