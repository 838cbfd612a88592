use std::fmt::Write as _;

use super::distances::{median, quantile};
use super::StatsError;
use crate::normalform::quadratic_z_residue;
use crate::polyfield::PolyMap;
use crate::sde::{derive_seed, run_ensemble, NoiseStream, Path, RescaledSimulator};
use crate::system::PreparedSystem;

const REDUCTION_TAG: u64 = 0x5245_4455_4345;

/// Largest z-involving quadratic coefficient accepted as "already normalized".
pub const QUADRATIC_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionConfig {
    pub epsilons: Vec<f64>,
    /// Radius Δ of the stopping ball.
    pub ball: f64,
    pub beta: f64,
    pub paths: usize,
    pub dt: f64,
    pub t_end: f64,
    pub z0: [f64; 2],
    pub seed: u64,
    pub workers: usize,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            epsilons: vec![1e-2, 1e-3, 1e-4],
            ball: 2.0,
            beta: 0.4,
            paths: 200,
            dt: 1e-3,
            t_end: 1.0,
            z0: [1.0, 0.0],
            seed: 0,
            workers: 0,
        }
    }
}

/// Per-path sup-norms of the two reduction errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathErrors {
    /// `sup ‖Y - ε^{1/4} h₂(Z)‖` over `[ε^β, T ∧ τ_Δ)`; `None` if the window is empty.
    pub u_sup: Option<f64>,
    /// `sup ‖Z - Z̃‖` over `[0, T ∧ τ_Δ)`.
    pub phi_sup: f64,
    pub stopped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionRow {
    pub epsilon: f64,
    pub u_median: f64,
    pub u_p90: f64,
    pub phi_median: f64,
    pub phi_p90: f64,
    pub stopped_fraction: f64,
    pub n_paths: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionReport {
    pub rows: Vec<ReductionRow>,
    pub ball: f64,
    pub beta: f64,
    pub dt: f64,
    /// Log-log slope of the median U error against ε.
    pub q_slope: Option<f64>,
    /// Log-log slope of the median Φ error against ε.
    pub gamma_slope: Option<f64>,
}

impl ReductionReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("epsilon,u_median,u_p90,phi_median,phi_p90,stopped_fraction,n_paths,dt\n");
        for r in &self.rows {
            writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                r.epsilon, r.u_median, r.u_p90, r.phi_median, r.phi_p90, r.stopped_fraction, r.n_paths, self.dt
            )
            .expect("write to string");
        }
        s
    }

    pub fn row(&self, epsilon: f64) -> Option<&ReductionRow> {
        self.rows.iter().find(|r| r.epsilon == epsilon)
    }
}

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than two
/// usable points.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sup-norms of `U` and `Φ` for one coupled pair of paths.
pub fn path_errors(full: &Path, reduced: &Path, h2: &PolyMap, epsilon: f64, ball: f64, beta: f64) -> PathErrors {
    let steps = full.steps().min(reduced.steps());
    let mut end = steps + 1;
    for k in 0..=steps {
        let out = norm(full.state(k)).max(norm(reduced.state(k))) > ball;
        if out || full.is_stopped_at(k) || reduced.is_stopped_at(k) {
            end = k;
            break;
        }
    }
    let scale = epsilon.powf(0.25);
    let start = (epsilon.powf(beta) / full.dt).ceil() as usize;
    let mut u_sup: Option<f64> = None;
    let mut phi_sup: f64 = 0.0;
    for k in 0..end {
        let x = full.state(k);
        let zt = reduced.state(k);
        phi_sup = phi_sup.max((x[0] - zt[0]).hypot(x[1] - zt[1]));
        if k >= start {
            let u = if h2.n_out() == 0 {
                0.0
            } else {
                let h = h2.eval(&x[..2]).expect("planar");
                h.iter()
                    .zip(&x[2..])
                    .map(|(hi, yi)| (yi - scale * hi).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            u_sup = Some(u_sup.map_or(u, |s| s.max(u)));
        }
    }
    PathErrors {
        u_sup,
        phi_sup,
        stopped: end <= steps,
    }
}

/// Couples the full rescaled system with the reduced planar process on the
/// same noise and measures how far each stays from its reduction.
pub fn reduction_diagnostics(sys: &PreparedSystem, cfg: &ReductionConfig) -> Result<ReductionReport, StatsError> {
    let ts = &sys.transformed;
    let residue = quadratic_z_residue(&ts.f);
    if residue > QUADRATIC_TOL {
        return Err(StatsError::NonTrivialQuadratic(residue));
    }
    if !(cfg.ball > 0.0) {
        return Err(StatsError::InvalidParameter(format!(
            "ball radius must be positive, got {}",
            cfg.ball
        )));
    }
    if !(cfg.beta > 0.0 && cfg.beta < 0.5) {
        return Err(StatsError::InvalidParameter(format!(
            "beta must lie in (0, 1/2), got {}",
            cfg.beta
        )));
    }
    if cfg.paths == 0 || cfg.epsilons.is_empty() || cfg.epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(StatsError::InvalidParameter(
            "need paths > 0 and epsilon values in (0, 1)".into(),
        ));
    }
    if norm(&cfg.z0) >= cfg.ball {
        return Err(StatsError::InvalidParameter(
            "initial point lies outside the stopping ball".into(),
        ));
    }
    let nf = &sys.normal_form;
    let manifold = &nf.center_manifold;
    let reduced_nl = nf
        .reduced
        .field
        .homogeneous_part(2)
        .add(&nf.reduced.field.homogeneous_part(3))?;
    let mut x0 = vec![0.0; ts.n()];
    x0[..2].copy_from_slice(&cfg.z0);

    let mut rows = Vec::new();
    for (e_i, &eps) in cfg.epsilons.iter().enumerate() {
        let full = RescaledSimulator::new(ts, eps, cfg.dt, cfg.t_end)?;
        let red = RescaledSimulator::reduced(ts.lambda0(), &reduced_nl, &ts.sigma_q, manifold, eps, cfg.dt, cfg.t_end)?;
        let seed = derive_seed(cfg.seed, REDUCTION_TAG + e_i as u64);
        let errs = run_ensemble(cfg.paths, cfg.workers, |i| -> Result<PathErrors, StatsError> {
            let a = full.run(&x0, &mut NoiseStream::new(seed, i, full.channels()))?;
            let b = red.run(&cfg.z0, &mut NoiseStream::new(seed, i, red.channels()))?;
            Ok(path_errors(&a, &b, &manifold.h2, eps, cfg.ball, cfg.beta))
        });
        let errs: Vec<PathErrors> = errs.into_iter().collect::<Result<_, _>>()?;
        let u: Vec<f64> = errs.iter().filter_map(|e| e.u_sup).collect();
        let phi: Vec<f64> = errs.iter().map(|e| e.phi_sup).collect();
        let sorted = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s
        };
        let (su, sp) = (sorted(&u), sorted(&phi));
        rows.push(ReductionRow {
            epsilon: eps,
            u_median: if u.is_empty() { f64::NAN } else { median(&u) },
            u_p90: if u.is_empty() { f64::NAN } else { quantile(&su, 0.9) },
            phi_median: median(&phi),
            phi_p90: quantile(&sp, 0.9),
            stopped_fraction: errs.iter().filter(|e| e.stopped).count() as f64 / cfg.paths as f64,
            n_paths: u.len(),
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let q_slope = log_log_slope(&eps, &rows.iter().map(|r| r.u_median).collect::<Vec<_>>());
    let gamma_slope = log_log_slope(&eps, &rows.iter().map(|r| r.phi_median).collect::<Vec<_>>());
    Ok(ReductionReport {
        rows,
        ball: cfg.ball,
        beta: cfg.beta,
        dt: cfg.dt,
        q_slope,
        gamma_slope,
    })
}
