use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{grid_steps, NoiseStream, Path, SdeError, StopReason, OVERFLOW_GUARD};

/// Radius and unwrapped phase of a planar path, frozen after leaving the
/// annulus `(delta, outer)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarPath {
    pub dt: f64,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    pub stop: Option<(usize, StopReason)>,
}

impl PolarPath {
    pub fn steps(&self) -> usize {
        self.rho.len() - 1
    }

    /// Whether the path is still running at step `k`.
    pub fn alive_at(&self, k: usize) -> bool {
        !matches!(self.stop, Some((s, _)) if k >= s)
    }

    /// Mean phase speed `(θ(T) - θ(0)) / T`.
    pub fn mean_phase_rate(&self) -> f64 {
        (self.theta[self.steps()] - self.theta[0]) / (self.steps() as f64 * self.dt)
    }
}

/// Polar form of the first two coordinates of `path`.
pub fn to_polar(path: &Path, delta: f64, outer: f64) -> Result<PolarPath, SdeError> {
    if path.dim < 2 {
        return Err(SdeError::Dimension("polar conversion needs a planar path".into()));
    }
    let s0 = path.state(0);
    let rho0 = s0[0].hypot(s0[1]);
    if !(rho0 > delta && rho0 < outer) {
        return Err(SdeError::InitialOutside {
            rho: rho0,
            delta,
            outer,
        });
    }
    let n = path.steps() + 1;
    let mut rho = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut stop = None;
    let mut prev_angle = s0[1].atan2(s0[0]);
    let mut unwrapped = prev_angle;
    for k in 0..n {
        if stop.is_some() {
            rho.push(rho[k - 1]);
            theta.push(theta[k - 1]);
            continue;
        }
        let s = path.state(k);
        let r = s[0].hypot(s[1]);
        let a = s[1].atan2(s[0]);
        if k > 0 {
            let mut d = a - prev_angle;
            if d > PI {
                d -= 2.0 * PI;
            } else if d <= -PI {
                d += 2.0 * PI;
            }
            unwrapped += d;
        }
        prev_angle = a;
        rho.push(r);
        theta.push(unwrapped);
        if r <= delta {
            stop = Some((k, StopReason::HitInner));
        } else if r >= outer {
            stop = Some((k, StopReason::HitOuter));
        } else if matches!(path.stop, Some((s, _)) if k >= s) {
            stop = path.stop;
        }
    }
    Ok(PolarPath {
        dt: path.dt,
        rho,
        theta,
        stop,
    })
}

/// Coefficients of the limit radial SDE built from `σ̄ = σ_Q(0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitParams {
    pub sigma_bar: DMatrix<f64>,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub sigma12: f64,
    /// `s = sqrt((Σ1² + Σ2²) / 2)`.
    pub s: f64,
}

impl LimitParams {
    pub fn new(sigma_bar: DMatrix<f64>) -> Result<Self, SdeError> {
        if sigma_bar.nrows() != 2 || sigma_bar.ncols() == 0 {
            return Err(SdeError::Dimension(format!(
                "σ̄ must be 2 x m, got {} x {}",
                sigma_bar.nrows(),
                sigma_bar.ncols()
            )));
        }
        let r1 = sigma_bar.row(0);
        let r2 = sigma_bar.row(1);
        let sigma1_sq = r1.dot(&r1);
        let sigma2_sq = r2.dot(&r2);
        let sigma12 = r1.dot(&r2);
        Ok(LimitParams {
            s: ((sigma1_sq + sigma2_sq) / 2.0).sqrt(),
            sigma_bar,
            sigma1_sq,
            sigma2_sq,
            sigma12,
        })
    }

    pub fn identity() -> Self {
        Self::new(DMatrix::identity(2, 2)).expect("2x2")
    }

    /// `Σ1² + Σ2²`.
    pub fn total(&self) -> f64 {
        self.sigma1_sq + self.sigma2_sq
    }

    /// `b̄(η) = (-η⁴ + (Σ1² + Σ2²)/4) / η`.
    pub fn drift(&self, eta: f64) -> f64 {
        (-eta.powi(4) + self.total() / 4.0) / eta
    }

    /// Positive root of `b̄`.
    pub fn drift_root(&self) -> f64 {
        (self.total() / 4.0).powf(0.25)
    }
}

/// Radial path of the limit SDE, via `dZ = -Z|Z|² dt + s dB` in the plane
/// started at `(ρ0, 0)`; the noise stream needs 2 channels.
pub fn simulate_limit(
    params: &LimitParams,
    rho0: f64,
    dt: f64,
    t_end: f64,
    noise: &mut NoiseStream,
) -> Result<Path, SdeError> {
    if !(rho0 > 0.0) || !rho0.is_finite() {
        return Err(SdeError::NonPositiveRadius(rho0));
    }
    if noise.channels() != 2 {
        return Err(SdeError::Dimension(format!(
            "limit process needs 2 noise channels, got {}",
            noise.channels()
        )));
    }
    let steps = grid_steps(dt, t_end)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(rho0);
    let (mut z1, mut z2) = (rho0, 0.0);
    let mut db = [0.0; 2];
    let mut stop = None;
    for k in 0..steps {
        noise.increments(k as u64, dt, &mut db);
        let r2 = z1 * z1 + z2 * z2;
        z1 += -z1 * r2 * dt + params.s * db[0];
        z2 += -z2 * r2 * dt + params.s * db[1];
        let r = z1.hypot(z2);
        if !r.is_finite() || r > OVERFLOW_GUARD {
            stop = Some((k, StopReason::Diverged));
            let last = states[k];
            states.resize(steps + 1, last);
            break;
        }
        states.push(r);
    }
    Ok(Path {
        dt,
        dim: 1,
        states,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_from(points: &[[f64; 2]], dt: f64) -> Path {
        Path {
            dt,
            dim: 2,
            states: points.iter().flatten().copied().collect(),
            stop: None,
        }
    }

    #[test]
    fn constant_path() {
        let p = to_polar(&path_from(&[[1.0, 0.0]; 5], 0.1), 0.05, 10.0).unwrap();
        assert!(p.rho.iter().all(|&r| r == 1.0));
        assert!(p.theta.iter().all(|&t| t == 0.0));
        assert!(p.stop.is_none());
    }

    #[test]
    fn circle_unwraps_past_two_pi() {
        let dt = 1e-3;
        let pts: Vec<[f64; 2]> = (0..=10_000)
            .map(|k| {
                let t = k as f64 * dt;
                [t.cos(), t.sin()]
            })
            .collect();
        let p = to_polar(&path_from(&pts, dt), 0.05, 10.0).unwrap();
        for (k, (&r, &th)) in p.rho.iter().zip(&p.theta).enumerate() {
            assert!((r - 1.0).abs() < 1e-12);
            assert!((th - k as f64 * dt).abs() < 1e-9);
        }
        assert!((p.mean_phase_rate() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_inner_barrier_freezes() {
        let pts = [[1.0, 0.0], [0.5, 0.0], [0.01, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let p = to_polar(&path_from(&pts, 0.1), 0.05, 10.0).unwrap();
        assert_eq!(p.stop, Some((2, StopReason::HitInner)));
        assert_eq!(&p.rho[2..], &[0.01, 0.01, 0.01]);
        assert!(!p.alive_at(2) && p.alive_at(1));
        let pts = [[1.0, 0.0], [0.0, 20.0]];
        let p = to_polar(&path_from(&pts, 0.1), 0.05, 10.0).unwrap();
        assert_eq!(p.stop, Some((1, StopReason::HitOuter)));
        assert!(to_polar(&path_from(&pts, 0.1), 1.5, 10.0).is_err());
    }

    #[test]
    fn limit_params_identity() {
        let lp = LimitParams::identity();
        assert_eq!((lp.sigma1_sq, lp.sigma2_sq, lp.sigma12, lp.s), (1.0, 1.0, 0.0, 1.0));
        assert_eq!(lp.drift(1.0), -0.5);
        assert!(lp.drift(lp.drift_root()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_limit_matches_exact_flow() {
        let lp = LimitParams::new(DMatrix::zeros(2, 2)).unwrap();
        let p = simulate_limit(&lp, 1.0, 1e-4, 1.0, &mut NoiseStream::new(0, 0, 2)).unwrap();
        assert!((p.last()[0] - 3f64.powf(-0.5)).abs() < 1e-3);
        assert!(p.states.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn limit_rejects_zero_radius() {
        let lp = LimitParams::identity();
        assert!(matches!(
            simulate_limit(&lp, 0.0, 1e-3, 1.0, &mut NoiseStream::new(0, 0, 2)),
            Err(SdeError::NonPositiveRadius(_))
        ));
    }
}
