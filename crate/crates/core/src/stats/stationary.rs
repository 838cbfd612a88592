use super::StatsError;
use crate::sde::{run_ensemble, simulate_limit, LimitParams, NoiseStream};
use crate::stats::averaging::{stationary_cutoff, stationary_density_unnormalized, stationary_normalizer};

const CDF_CELLS: usize = 20_000;
const NORMALIZER_POINTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryConfig {
    pub t_end: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub paths: usize,
    /// Keep every `thin`-th post-burn-in sample.
    pub thin: usize,
    pub rho0: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        StationaryConfig {
            t_end: 200.0,
            burn_in: 50.0,
            dt: 1e-3,
            paths: 32,
            thin: 100,
            rho0: 1.0,
            seed: 0,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryReport {
    pub w1: f64,
    pub samples: usize,
    pub normalizer: f64,
    pub sample_mean: f64,
}

/// `∫ |F_n - F| dη` between an empirical sample and the stationary law of
/// the limit SDE with diffusion `s`.
pub fn stationary_w1(samples: &[f64], s: f64) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let norm = stationary_normalizer(s, NORMALIZER_POINTS);
    let top = stationary_cutoff(s).max(*v.last().unwrap());
    let h = top / CDF_CELLS as f64;
    let n = v.len() as f64;
    let mut cdf = 0.0;
    let mut prev = stationary_density_unnormalized(s, 0.0);
    let mut idx = 0;
    let mut w = 0.0;
    // Samples at or below zero carry mass before the grid starts.
    while idx < v.len() && v[idx] <= 0.0 {
        idx += 1;
    }
    for j in 0..CDF_CELLS {
        let x1 = (j + 1) as f64 * h;
        let next = stationary_density_unnormalized(s, x1);
        let cdf_next = cdf + 0.5 * (prev + next) * h / norm;
        let mid = (j as f64 + 0.5) * h;
        while idx < v.len() && v[idx] <= mid {
            idx += 1;
        }
        w += (idx as f64 / n - 0.5 * (cdf + cdf_next)).abs() * h;
        cdf = cdf_next;
        prev = next;
    }
    Ok(w)
}

/// Pools thinned post-burn-in samples of the limit radius and compares them
/// with the stationary density `∝ η exp(-η⁴ / (2s²))`.
pub fn stationary_check(params: &LimitParams, cfg: &StationaryConfig) -> Result<StationaryReport, StatsError> {
    if !(cfg.t_end > cfg.burn_in) || cfg.burn_in < 0.0 || cfg.paths == 0 || cfg.thin == 0 {
        return Err(StatsError::InvalidParameter(format!(
            "need T > burn_in >= 0, paths > 0, thin > 0; got T = {}, burn_in = {}, paths = {}, thin = {}",
            cfg.t_end, cfg.burn_in, cfg.paths, cfg.thin
        )));
    }
    if !(params.s > 0.0) {
        return Err(StatsError::InvalidParameter("limit diffusion is zero".into()));
    }
    let first = (cfg.burn_in / cfg.dt).round() as usize;
    let runs = run_ensemble(cfg.paths, cfg.workers, |i| {
        let mut noise = NoiseStream::new(cfg.seed, i, 2);
        simulate_limit(params, cfg.rho0, cfg.dt, cfg.t_end, &mut noise).map(|p| {
            let mut keep = Vec::new();
            let mut k = first;
            while k <= p.steps() {
                keep.push(p.states[k]);
                k += cfg.thin;
            }
            keep
        })
    });
    let mut samples = Vec::new();
    for r in runs {
        samples.extend(r?);
    }
    let w1 = stationary_w1(&samples, params.s)?;
    Ok(StationaryReport {
        w1,
        samples: samples.len(),
        normalizer: stationary_normalizer(params.s, NORMALIZER_POINTS),
        sample_mean: samples.iter().sum::<f64>() / samples.len() as f64,
    })
}
