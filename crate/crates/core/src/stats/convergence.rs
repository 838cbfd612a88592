use std::fmt::Write as _;

use super::distances::{ks_distance, quantile, wasserstein1};
use super::StatsError;
use crate::sde::{derive_seed, digest_f64s, run_ensemble, simulate_limit, to_polar, NoiseStream, RescaledSimulator};
use crate::system::PreparedSystem;

const LIMIT_TAG: u64 = 0x004C_494D_4954;
const RESCALED_TAG: u64 = 0x5245_5343_414C;

/// Stopped fraction above which a study is flagged unreliable.
pub const MAX_STOPPED_FRACTION: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceConfig {
    pub epsilons: Vec<f64>,
    pub checkpoints: Vec<f64>,
    pub paths: usize,
    pub dt: f64,
    pub rho0: f64,
    pub delta: f64,
    pub outer: f64,
    pub seed: u64,
    pub workers: usize,
    /// Also rerun everything at `dt / 2` on the same Brownian paths.
    pub halve_dt: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            epsilons: vec![1e-1, 1e-2, 1e-3],
            checkpoints: vec![1.0],
            paths: 1000,
            dt: 1e-3,
            rho0: 1.0,
            delta: 0.05,
            outer: 10.0,
            seed: 0,
            workers: 0,
            halve_dt: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub checkpoint: f64,
    pub ks: f64,
    pub w1: f64,
    pub stopped_fraction: f64,
    /// Never-stopped rescaled paths entering the comparison.
    pub n_paths: usize,
    pub dt: f64,
    /// 10%, 50%, 90% quantiles of the rescaled radius.
    pub quantiles: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Same comparisons at `dt / 2`, if requested.
    pub halved: Vec<ConvergenceRow>,
    pub limit_stopped_fraction: f64,
    pub unreliable: bool,
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("epsilon,checkpoint,ks,w1,stopped_fraction,n_paths,dt\n");
        for r in self.rows.iter().chain(&self.halved) {
            writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                r.epsilon, r.checkpoint, r.ks, r.w1, r.stopped_fraction, r.n_paths, r.dt
            )
            .expect("write to string");
        }
        s
    }

    pub fn digest(&self) -> String {
        digest_f64s(self.rows.iter().chain(&self.halved).flat_map(|r| {
            [
                r.epsilon,
                r.checkpoint,
                r.ks,
                r.w1,
                r.stopped_fraction,
                r.n_paths as f64,
                r.dt,
            ]
        }))
    }

    /// Per checkpoint: is KS strictly decreasing as ε decreases?
    pub fn ks_decreasing(&self) -> Vec<(f64, bool)> {
        let mut cps: Vec<f64> = self.rows.iter().map(|r| r.checkpoint).collect();
        cps.dedup();
        cps.sort_by(f64::total_cmp);
        cps.dedup();
        cps.into_iter()
            .map(|cp| {
                let mut rs: Vec<&ConvergenceRow> = self.rows.iter().filter(|r| r.checkpoint == cp).collect();
                rs.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
                (cp, rs.windows(2).all(|w| w[1].ks < w[0].ks))
            })
            .collect()
    }

    /// Largest |KS(dt) - KS(dt/2)| over matching rows.
    pub fn max_dt_shift(&self) -> Option<f64> {
        if self.halved.is_empty() {
            return None;
        }
        Some(
            self.rows
                .iter()
                .zip(&self.halved)
                .map(|(a, b)| (a.ks - b.ks).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn row(&self, epsilon: f64, checkpoint: f64) -> Option<&ConvergenceRow> {
        self.rows
            .iter()
            .find(|r| r.epsilon == epsilon && r.checkpoint == checkpoint)
    }
}

fn validate(cfg: &ConvergenceConfig) -> Result<(f64, Vec<usize>), StatsError> {
    let bad = |m: String| Err(StatsError::InvalidParameter(m));
    if cfg.epsilons.is_empty() || cfg.epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return bad(format!("epsilon values must lie in (0, 1): {:?}", cfg.epsilons));
    }
    if cfg.paths == 0 {
        return bad("paths must be positive".into());
    }
    if !(cfg.delta > 0.0 && cfg.delta < cfg.rho0 && cfg.rho0 < cfg.outer) {
        return bad(format!(
            "need 0 < delta < rho0 < N, got {} < {} < {}",
            cfg.delta, cfg.rho0, cfg.outer
        ));
    }
    if cfg.checkpoints.is_empty() || cfg.checkpoints.iter().any(|&t| !(t > 0.0)) {
        return bad("checkpoints must be positive".into());
    }
    let t_end = cfg.checkpoints.iter().cloned().fold(0.0, f64::max);
    let mut idx = Vec::new();
    for &t in &cfg.checkpoints {
        let k = (t / cfg.dt).round();
        if (k * cfg.dt - t).abs() > 1e-9 * t {
            return bad(format!("checkpoint {t} is not on the dt = {} grid", cfg.dt));
        }
        idx.push(k as usize);
    }
    Ok((t_end, idx))
}

/// Radius samples at the checkpoints for every path that never left the
/// annulus, plus the number of stopped paths.
fn collect(
    samples: Vec<Result<Option<Vec<f64>>, StatsError>>,
    checkpoints: usize,
) -> Result<(Vec<Vec<f64>>, usize), StatsError> {
    let mut per_cp = vec![Vec::new(); checkpoints];
    let mut stopped = 0;
    for s in samples {
        match s? {
            Some(v) => {
                for (dst, x) in per_cp.iter_mut().zip(v) {
                    dst.push(x);
                }
            }
            None => stopped += 1,
        }
    }
    Ok((per_cp, stopped))
}

struct Pass {
    rows: Vec<ConvergenceRow>,
    limit_stopped: f64,
}

fn run_pass(
    sys: &PreparedSystem,
    cfg: &ConvergenceConfig,
    t_end: f64,
    cp_idx: &[usize],
    dt: f64,
    refine: u32,
) -> Result<Pass, StatsError> {
    let scale = (cfg.dt / dt).round() as usize;
    let idx: Vec<usize> = cp_idx.iter().map(|k| k * scale).collect();
    let limit_seed = derive_seed(cfg.seed, LIMIT_TAG);
    let limit = run_ensemble(cfg.paths, cfg.workers, |i| {
        let mut noise = NoiseStream::new(limit_seed, i, 2).with_refine(refine);
        let p = simulate_limit(&sys.limit, cfg.rho0, dt, t_end, &mut noise)?;
        let left = p.stop.is_some() || p.states.iter().any(|&r| r <= cfg.delta || r >= cfg.outer);
        Ok(if left {
            None
        } else {
            Some(idx.iter().map(|&k| p.states[k]).collect())
        })
    });
    let (limit_samples, limit_stopped) = collect(limit, idx.len())?;

    let x0 = sys.initial_state(cfg.rho0);
    let mut rows = Vec::new();
    for (e_i, &eps) in cfg.epsilons.iter().enumerate() {
        let sim = RescaledSimulator::new(&sys.transformed, eps, dt, t_end)?;
        let seed = derive_seed(cfg.seed, RESCALED_TAG + e_i as u64);
        let runs = run_ensemble(cfg.paths, cfg.workers, |i| {
            let mut noise = NoiseStream::new(seed, i, sim.channels()).with_refine(refine);
            let path = sim.run(&x0, &mut noise)?;
            let polar = to_polar(&path, cfg.delta, cfg.outer)?;
            Ok(if polar.stop.is_some() {
                None
            } else {
                Some(idx.iter().map(|&k| polar.rho[k]).collect())
            })
        });
        let (samples, stopped) = collect(runs, idx.len())?;
        for (c, &t) in cfg.checkpoints.iter().enumerate() {
            let a = &samples[c];
            let b = &limit_samples[c];
            let (ks, w1, q) = if a.is_empty() || b.is_empty() {
                (f64::NAN, f64::NAN, [f64::NAN; 3])
            } else {
                let mut sorted = a.clone();
                sorted.sort_by(f64::total_cmp);
                (
                    ks_distance(a, b)?,
                    wasserstein1(a, b)?,
                    [quantile(&sorted, 0.1), quantile(&sorted, 0.5), quantile(&sorted, 0.9)],
                )
            };
            rows.push(ConvergenceRow {
                epsilon: eps,
                checkpoint: t,
                ks,
                w1,
                stopped_fraction: stopped as f64 / cfg.paths as f64,
                n_paths: a.len(),
                dt,
                quantiles: q,
            });
        }
    }
    Ok(Pass {
        rows,
        limit_stopped: limit_stopped as f64 / cfg.paths as f64,
    })
}

/// Compares fixed-time marginals of the rescaled radius `|Z^ε|` with those
/// of the limit radial SDE, for each ε, among paths that never left the
/// annulus `(δ, N)`.
pub fn convergence_study(sys: &PreparedSystem, cfg: &ConvergenceConfig) -> Result<ConvergenceReport, StatsError> {
    if !sys.has_unit_cubic() {
        return Err(StatsError::NotUnitCubic);
    }
    let (t_end, cp_idx) = validate(cfg)?;
    // Coarse increments are sums of two half-step draws so the dt/2 rerun
    // sees the same Brownian paths.
    let main = run_pass(sys, cfg, t_end, &cp_idx, cfg.dt, 2)?;
    let halved = if cfg.halve_dt {
        run_pass(sys, cfg, t_end, &cp_idx, cfg.dt / 2.0, 1)?.rows
    } else {
        Vec::new()
    };
    let unreliable = main.limit_stopped > MAX_STOPPED_FRACTION
        || main
            .rows
            .iter()
            .any(|r| r.stopped_fraction > MAX_STOPPED_FRACTION || r.ks.is_nan());
    Ok(ConvergenceReport {
        rows: main.rows,
        halved,
        limit_stopped_fraction: main.limit_stopped,
        unreliable,
    })
}
