//! Time stepping: plain Euler–Maruyama, the split scheme for the
//! space-time rescaled system, the reduced planar process, polar conversion
//! with barrier stopping, and the limit radial SDE.

mod ensemble;
mod noise;
mod polar;

pub use ensemble::{digest_f64s, run_ensemble, PathEnsemble};
pub use noise::{derive_seed, NoiseStream};
pub use polar::{simulate_limit, to_polar, LimitParams, PolarPath};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::normalform::{graph_map, CenterManifold2};
use crate::polyfield::{CompiledMap, PolyError, PolyMap, PolyMatrix};
use crate::spectral::TransformedSystem;

/// States with a norm above this are treated as diverged.
pub const OVERFLOW_GUARD: f64 = 1e6;

/// Largest step accepted by the rescaled integrators.
pub const MAX_RESCALED_DT: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("invalid time grid: dt = {dt}, T = {t_end}")]
    InvalidGrid { dt: f64, t_end: f64 },
    #[error("dt = {0} exceeds the rescaled-scheme limit {MAX_RESCALED_DT}")]
    StepTooLarge(f64),
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("initial point has norm {rho} outside ({delta}, {outer})")]
    InitialOutside { rho: f64, delta: f64, outer: f64 },
    #[error("initial radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Why a path stopped before the end of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StopReason {
    HitInner,
    HitOuter,
    LeftBall,
    Diverged,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::HitInner => "hit_inner",
            StopReason::HitOuter => "hit_outer",
            StopReason::LeftBall => "left_ball",
            StopReason::Diverged => "diverged",
        }
    }
}

/// Number of steps of a uniform grid on `[0, t_end]`.
pub fn grid_steps(dt: f64, t_end: f64) -> Result<usize, SdeError> {
    let bad = SdeError::InvalidGrid { dt, t_end };
    if !(dt > 0.0) || !(t_end > 0.0) || !dt.is_finite() || !t_end.is_finite() {
        return Err(bad);
    }
    let k = (t_end / dt).round();
    if k < 1.0 || (k * dt - t_end).abs() > 1e-9 * t_end {
        return Err(bad);
    }
    Ok(k as usize)
}

/// One sampled trajectory on a uniform grid, frozen after `stop`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub dt: f64,
    pub dim: usize,
    /// Row-major `(steps + 1) x dim`.
    pub states: Vec<f64>,
    pub stop: Option<(usize, StopReason)>,
}

impl Path {
    pub fn steps(&self) -> usize {
        self.states.len() / self.dim - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.steps())
    }

    pub fn is_stopped_at(&self, k: usize) -> bool {
        matches!(self.stop, Some((s, _)) if k >= s)
    }

    /// Holds the state from step `k` onwards. An earlier stop wins.
    pub fn freeze_from(&mut self, k: usize, reason: StopReason) {
        if matches!(self.stop, Some((s, _)) if s <= k) || k > self.steps() {
            return;
        }
        let frozen = self.state(k).to_vec();
        for row in self.states[(k + 1) * self.dim..].chunks_mut(self.dim) {
            row.copy_from_slice(&frozen);
        }
        self.stop = Some((k, reason));
    }
}

enum LinearFlow {
    None,
    /// Exact flow of `blockdiag(κQ, κP)` over one step.
    Split {
        cos: f64,
        sin: f64,
        exp_p: DMatrix<f64>,
    },
}

/// One-step map shared by all integrators: exact linear flow, then an
/// Euler–Maruyama step on the remaining drift and the noise.
struct Stepper {
    dim: usize,
    channels: usize,
    dt: f64,
    linear: LinearFlow,
    drift: CompiledMap,
    diffusion: CompiledMap,
}

struct Workspace {
    x: Vec<f64>,
    tmp: Vec<f64>,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    db: Vec<f64>,
    scratch: Vec<f64>,
}

impl Stepper {
    fn new(linear: LinearFlow, drift: &PolyMap, diffusion: &PolyMatrix, dt: f64) -> Result<Self, SdeError> {
        let dim = drift.n_out();
        if drift.n_in() != dim || diffusion.n_in() != dim || diffusion.rows() != dim {
            return Err(SdeError::Dimension(format!(
                "drift {}->{}, diffusion {}x{} on {} inputs",
                drift.n_in(),
                dim,
                diffusion.rows(),
                diffusion.cols(),
                diffusion.n_in()
            )));
        }
        Ok(Stepper {
            dim,
            channels: diffusion.cols(),
            dt,
            linear,
            drift: drift.compile(),
            diffusion: diffusion.map().compile(),
        })
    }

    fn workspace(&self) -> Workspace {
        let scratch = self.drift.scratch_len().max(self.diffusion.scratch_len());
        Workspace {
            x: vec![0.0; self.dim],
            tmp: vec![0.0; self.dim],
            drift: vec![0.0; self.dim],
            sigma: vec![0.0; self.dim * self.channels],
            db: vec![0.0; self.channels],
            scratch: vec![0.0; scratch],
        }
    }

    fn step(&self, w: &mut Workspace, k: u64, noise: &mut NoiseStream) {
        if let LinearFlow::Split { cos, sin, exp_p } = &self.linear {
            let (z1, z2) = (w.x[0], w.x[1]);
            w.x[0] = cos * z1 - sin * z2;
            w.x[1] = sin * z1 + cos * z2;
            let s = exp_p.nrows();
            if s > 0 {
                for r in 0..s {
                    let mut acc = 0.0;
                    for c in 0..s {
                        acc += exp_p[(r, c)] * w.x[2 + c];
                    }
                    w.tmp[r] = acc;
                }
                w.x[2..].copy_from_slice(&w.tmp[..s]);
            }
        }
        self.drift.eval_into(&w.x, &mut w.drift, &mut w.scratch);
        self.diffusion.eval_into(&w.x, &mut w.sigma, &mut w.scratch);
        noise.increments(k, self.dt, &mut w.db);
        for i in 0..self.dim {
            let row = &w.sigma[i * self.channels..(i + 1) * self.channels];
            let mut v = w.x[i] + w.drift[i] * self.dt;
            for (s, b) in row.iter().zip(&w.db) {
                v += s * b;
            }
            w.x[i] = v;
        }
    }

    fn run(&self, x0: &[f64], steps: usize, noise: &mut NoiseStream) -> Result<Path, SdeError> {
        if x0.len() != self.dim {
            return Err(SdeError::Dimension(format!(
                "initial state has {} entries, system has {}",
                x0.len(),
                self.dim
            )));
        }
        if noise.channels() != self.channels {
            return Err(SdeError::Dimension(format!(
                "noise has {} channels, diffusion has {}",
                noise.channels(),
                self.channels
            )));
        }
        let mut states = Vec::with_capacity((steps + 1) * self.dim);
        states.extend_from_slice(x0);
        let mut w = self.workspace();
        w.x.copy_from_slice(x0);
        let mut stop = None;
        for k in 0..steps {
            self.step(&mut w, k as u64, noise);
            let norm2: f64 = w.x.iter().map(|v| v * v).sum();
            if !norm2.is_finite() || norm2 > OVERFLOW_GUARD * OVERFLOW_GUARD {
                stop = Some((k, StopReason::Diverged));
                let last = states[k * self.dim..].to_vec();
                for _ in k..steps {
                    states.extend_from_slice(&last);
                }
                break;
            }
            states.extend_from_slice(&w.x);
        }
        Ok(Path {
            dt: self.dt,
            dim: self.dim,
            states,
            stop,
        })
    }
}

/// `X_{k+1} = X_k + b(X_k) dt + σ(X_k) ΔB_k`.
pub fn euler_maruyama(
    drift: &PolyMap,
    diffusion: &PolyMatrix,
    x0: &[f64],
    dt: f64,
    t_end: f64,
    noise: &mut NoiseStream,
) -> Result<Path, SdeError> {
    let steps = grid_steps(dt, t_end)?;
    Stepper::new(LinearFlow::None, drift, diffusion, dt)?.run(x0, steps, noise)
}

/// Split-step integrator for the space-time rescaled equations
/// `dZ = [ε^{-1/2} QZ + ε^{-3/4} f(ε^{1/4}Z, ε^{1/4}Y)] dt + σ_Q(ε^{1/4}·) dB`
/// (and likewise for `Y` with `P`, `g`, `σ_P`).
pub struct RescaledSimulator {
    stepper: Stepper,
    steps: usize,
    epsilon: f64,
}

fn check_epsilon(eps: f64) -> Result<(), SdeError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(SdeError::InvalidEpsilon(eps));
    }
    Ok(())
}

impl RescaledSimulator {
    /// From nonlinear parts already in split coordinates; `p` may be 0x0.
    pub fn from_parts(
        lambda0: f64,
        p: &DMatrix<f64>,
        nonlinear: &PolyMap,
        diffusion: &PolyMatrix,
        epsilon: f64,
        dt: f64,
        t_end: f64,
    ) -> Result<Self, SdeError> {
        check_epsilon(epsilon)?;
        let steps = grid_steps(dt, t_end)?;
        if dt > MAX_RESCALED_DT {
            return Err(SdeError::StepTooLarge(dt));
        }
        if nonlinear.n_out() != 2 + p.nrows() {
            return Err(SdeError::Dimension(format!(
                "drift has {} outputs, expected {}",
                nonlinear.n_out(),
                2 + p.nrows()
            )));
        }
        let fast = epsilon.powf(-0.5);
        let (sin, cos) = (fast * lambda0 * dt).sin_cos();
        let exp_p = if p.nrows() > 0 {
            (p * (fast * dt)).exp()
        } else {
            DMatrix::zeros(0, 0)
        };
        let drift = nonlinear.rescale(epsilon.powf(0.25), epsilon.powf(-0.75));
        let diffusion = diffusion.rescale(epsilon.powf(0.25), 1.0);
        Ok(RescaledSimulator {
            stepper: Stepper::new(LinearFlow::Split { cos, sin, exp_p }, &drift, &diffusion, dt)?,
            steps,
            epsilon,
        })
    }

    /// Full system `(Z, Y)`.
    pub fn new(ts: &TransformedSystem, epsilon: f64, dt: f64, t_end: f64) -> Result<Self, SdeError> {
        let nonlinear = ts.f.stack(&ts.g)?;
        Self::from_parts(
            ts.lambda0(),
            &ts.split.p,
            &nonlinear,
            &ts.diffusion(),
            epsilon,
            dt,
            t_end,
        )
    }

    /// Reduced planar process `Z̃` driven by the planar nonlinearity
    /// `reduced` and the noise `σ_Q(z, h(z))`.
    pub fn reduced(
        lambda0: f64,
        reduced: &PolyMap,
        sigma_q: &PolyMatrix,
        manifold: &CenterManifold2,
        epsilon: f64,
        dt: f64,
        t_end: f64,
    ) -> Result<Self, SdeError> {
        if reduced.n_in() != 2 || reduced.n_out() != 2 || sigma_q.rows() != 2 {
            return Err(SdeError::Dimension("reduced field and σ_Q must be planar".into()));
        }
        if sigma_q.n_in() != 2 + manifold.dim() {
            return Err(SdeError::Dimension(format!(
                "σ_Q takes {} inputs, manifold graph gives {}",
                sigma_q.n_in(),
                2 + manifold.dim()
            )));
        }
        let md = sigma_q.map().max_degree();
        let on_graph = sigma_q.map().substitute(&graph_map(manifold, md), md)?;
        let sigma = PolyMatrix::new(2, sigma_q.cols(), on_graph)?;
        Self::from_parts(lambda0, &DMatrix::zeros(0, 0), reduced, &sigma, epsilon, dt, t_end)
    }

    pub fn dim(&self) -> usize {
        self.stepper.dim
    }

    pub fn channels(&self) -> usize {
        self.stepper.channels
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.stepper.dt
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn run(&self, x0: &[f64], noise: &mut NoiseStream) -> Result<Path, SdeError> {
        self.stepper.run(x0, self.steps, noise)
    }
}

/// One rescaled path of the full system.
pub fn simulate_rescaled(
    ts: &TransformedSystem,
    epsilon: f64,
    x0: &[f64],
    dt: f64,
    t_end: f64,
    noise: &mut NoiseStream,
) -> Result<Path, SdeError> {
    RescaledSimulator::new(ts, epsilon, dt, t_end)?.run(x0, noise)
}

/// One rescaled path of the reduced planar process; pass the same noise
/// stream as the paired full run for pathwise coupling.
#[allow(clippy::too_many_arguments)]
pub fn simulate_reduced(
    lambda0: f64,
    reduced: &PolyMap,
    sigma_q: &PolyMatrix,
    manifold: &CenterManifold2,
    epsilon: f64,
    z0: [f64; 2],
    dt: f64,
    t_end: f64,
    noise: &mut NoiseStream,
) -> Result<Path, SdeError> {
    RescaledSimulator::reduced(lambda0, reduced, sigma_q, manifold, epsilon, dt, t_end)?.run(&z0, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::rotation_block;

    #[test]
    fn grid_validation() {
        assert_eq!(grid_steps(1e-3, 1.0).unwrap(), 1000);
        assert!(grid_steps(0.3, 1.0).is_err());
        assert!(grid_steps(-1.0, 1.0).is_err());
        assert!(grid_steps(1e-3, 0.0).is_err());
    }

    #[test]
    fn freezing_holds_the_state() {
        let mut p = Path {
            dt: 1.0,
            dim: 1,
            states: vec![0.0, 1.0, 2.0, 3.0],
            stop: None,
        };
        p.freeze_from(1, StopReason::HitOuter);
        assert_eq!(p.states, vec![0.0, 1.0, 1.0, 1.0]);
        p.freeze_from(2, StopReason::HitInner);
        assert_eq!(p.stop, Some((1, StopReason::HitOuter)));
    }

    #[test]
    fn zero_fields_give_constant_path() {
        let mut noise = NoiseStream::new(0, 0, 1);
        let p = euler_maruyama(
            &PolyMap::zero(1, 1, 4),
            &PolyMatrix::zero(1, 1, 1),
            &[0.7],
            0.1,
            1.0,
            &mut noise,
        )
        .unwrap();
        assert!(p.states.iter().all(|&x| x == 0.7));
        assert_eq!(p.steps(), 10);
    }

    #[test]
    fn exponential_decay() {
        let drift = PolyMap::linear(&DMatrix::from_element(1, 1, -1.0), 4);
        let mut noise = NoiseStream::new(0, 0, 1);
        let p = euler_maruyama(&drift, &PolyMatrix::zero(1, 1, 1), &[1.0], 1e-4, 1.0, &mut noise).unwrap();
        assert!((p.last()[0] - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn divergence_freezes_path() {
        let drift = PolyMap::from_terms(1, 1, 4, vec![(0, vec![3], 1.0)]).unwrap();
        let mut noise = NoiseStream::new(0, 0, 1);
        let p = euler_maruyama(&drift, &PolyMatrix::zero(1, 1, 1), &[10.0], 0.01, 1.0, &mut noise).unwrap();
        let (k, reason) = p.stop.unwrap();
        assert_eq!(reason, StopReason::Diverged);
        assert!(p.state(k)[0].is_finite());
        assert!((k..=p.steps()).all(|j| p.state(j) == p.state(k)));
    }

    #[test]
    fn pure_rotation_preserves_norm() {
        let sim = RescaledSimulator::from_parts(
            1.0,
            &DMatrix::zeros(0, 0),
            &PolyMap::zero(2, 2, 4),
            &PolyMatrix::zero(2, 2, 2),
            1e-4,
            1e-3,
            1.0,
        )
        .unwrap();
        let p = sim.run(&[0.6, 0.8], &mut NoiseStream::new(0, 0, 2)).unwrap();
        for k in 0..=p.steps() {
            let s = p.state(k);
            assert!((s[0].hypot(s[1]) - 1.0).abs() < 1e-13);
        }
        let t: f64 = 100.0;
        let expect = [0.6 * t.cos() - 0.8 * t.sin(), 0.6 * t.sin() + 0.8 * t.cos()];
        assert!((p.last()[0] - expect[0]).abs() < 1e-10);
        assert!((p.last()[1] - expect[1]).abs() < 1e-10);
    }

    #[test]
    fn stable_block_contracts_by_matrix_exponential() {
        let pm = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let eps = 0.01;
        let dt = 1e-3;
        let sim = RescaledSimulator::from_parts(
            1.0,
            &pm,
            &PolyMap::zero(4, 4, 4),
            &PolyMatrix::zero(4, 1, 4),
            eps,
            dt,
            0.01,
        )
        .unwrap();
        let p = sim.run(&[1.0, 0.0, 1.0, 1.0], &mut NoiseStream::new(0, 0, 1)).unwrap();
        let e = (&pm * (10.0 * dt)).exp();
        for k in 0..p.steps() {
            let y0 = nalgebra::DVector::from_row_slice(&p.state(k)[2..]);
            let y1 = nalgebra::DVector::from_row_slice(&p.state(k + 1)[2..]);
            assert!((&e * y0 - y1).amax() < 1e-14);
        }
        assert!(rotation_block(1.0)[(0, 1)] == -1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let z = PolyMap::zero(2, 2, 4);
        let s = PolyMatrix::zero(2, 2, 2);
        let none = DMatrix::zeros(0, 0);
        assert!(matches!(
            RescaledSimulator::from_parts(1.0, &none, &z, &s, 0.0, 1e-3, 1.0),
            Err(SdeError::InvalidEpsilon(_))
        ));
        assert!(matches!(
            RescaledSimulator::from_parts(1.0, &none, &z, &s, 0.1, 0.05, 1.0),
            Err(SdeError::StepTooLarge(_))
        ));
        let sim = RescaledSimulator::from_parts(1.0, &none, &z, &s, 0.1, 1e-3, 1.0).unwrap();
        assert!(sim.run(&[1.0, 0.0, 0.0], &mut NoiseStream::new(0, 0, 2)).is_err());
        assert!(sim.run(&[1.0, 0.0], &mut NoiseStream::new(0, 0, 3)).is_err());
    }
}
