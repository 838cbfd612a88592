use std::f64::consts::{PI, TAU};

use super::StatsError;
use crate::sde::LimitParams;

/// Phase-dependent radial drift of the planar process before averaging:
/// `a(η, φ) = (-η⁴ + ½Σ1² sin²φ + ½Σ2² cos²φ - Σ12 sinφ cosφ) / η`.
pub fn radial_drift_pre_average(p: &LimitParams, eta: f64, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    (-eta.powi(4) + 0.5 * p.sigma1_sq * s * s + 0.5 * p.sigma2_sq * c * c - p.sigma12 * s * c) / eta
}

/// Quadratic-variation rate of the radial martingale at phase `φ`:
/// `w(φ) = Σ_i (σ̄_{1i} cos φ + σ̄_{2i} sin φ)²`.
pub fn radial_diffusion_pre_average(p: &LimitParams, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    (0..p.sigma_bar.ncols())
        .map(|i| {
            let v = p.sigma_bar[(0, i)] * c + p.sigma_bar[(1, i)] * s;
            v * v
        })
        .sum()
}

/// `(1/2π) ∫₀^{2π} f(φ) dφ` by the `nodes`-point trapezoid rule.
pub fn phase_average(nodes: usize, f: impl Fn(f64) -> f64) -> f64 {
    (0..nodes).map(|j| f(TAU * j as f64 / nodes as f64)).sum::<f64>() / nodes as f64
}

/// `b̄(η)`.
pub fn averaged_drift(p: &LimitParams, eta: f64) -> Result<f64, StatsError> {
    if !(eta > 0.0) {
        return Err(StatsError::NonPositiveRadius(eta));
    }
    Ok(p.drift(eta))
}

/// `s² = (Σ1² + Σ2²) / 2`.
pub fn averaged_diffusion(p: &LimitParams) -> f64 {
    p.total() / 2.0
}

/// Unnormalized stationary density `η exp(-η⁴ / (2 s²))` of the limit SDE.
pub fn stationary_density_unnormalized(s: f64, eta: f64) -> f64 {
    if eta <= 0.0 {
        return 0.0;
    }
    eta * (-eta.powi(4) / (2.0 * s * s)).exp()
}

/// Upper end of the integration range: the density is below 1e-30 past it.
pub fn stationary_cutoff(s: f64) -> f64 {
    (2.0 * s * s * 70.0).powf(0.25)
}

/// Normalizer of the stationary density by composite Simpson on
/// `points` nodes over `[0, cutoff]`.
pub fn stationary_normalizer(s: f64, points: usize) -> f64 {
    let intervals = if points.is_multiple_of(2) { points } else { points - 1 };
    let b = stationary_cutoff(s);
    let h = b / intervals as f64;
    let mut acc = stationary_density_unnormalized(s, 0.0) + stationary_density_unnormalized(s, b);
    for j in 1..intervals {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * stationary_density_unnormalized(s, j as f64 * h);
    }
    acc * h / 3.0
}

/// Exact normalizer, `∫ η e^{-η⁴/(2s²)} dη = s √(π/2) / 2`.
pub fn stationary_normalizer_exact(s: f64) -> f64 {
    0.5 * s * (PI / 2.0).sqrt()
}
