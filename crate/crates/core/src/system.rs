//! From a raw drift `b(x, μ)` and noise `σ(x)` to everything the simulators
//! need: hypothesis verdicts, split coordinates, normal-form data and the
//! limit coefficients.

use thiserror::Error;

use crate::normalform::{self, has_unit_normal_form_cubic, NormalFormAnalysis, NormalFormError};
use crate::polyfield::{Poly, PolyError, PolyMap, PolyMatrix};
use crate::sde::{LimitParams, SdeError};
use crate::spectral::{
    check_hypotheses, hopf_split, transform_system, HypothesisReport, SpectralError, Tolerances, TransformedSystem,
};

/// Tolerance for "the reduced cubic is exactly `-z|z|²`".
pub const UNIT_CUBIC_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("hypotheses do not hold: {0}")]
    HypothesesFailed(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `dx = b(x, μ) dt + σ(x) dB`; the drift always carries μ as its last input.
#[derive(Clone, Debug, PartialEq)]
pub struct HopfSystem {
    drift: PolyMap,
    sigma: PolyMatrix,
    includes_mu: bool,
}

impl HopfSystem {
    /// `drift` takes `n + 1` inputs when `includes_mu`, else `n`.
    pub fn new(drift: PolyMap, sigma: PolyMatrix, includes_mu: bool) -> Result<Self, SystemError> {
        let n = drift.n_out();
        let drift = if includes_mu {
            drift
        } else {
            // Append an unused μ input.
            let phi: Vec<Poly> = (0..n).map(|i| Poly::var(n + 1, i)).collect();
            let phi = PolyMap::from_components(n + 1, drift.max_degree(), phi);
            drift.substitute(&phi, drift.max_degree())?
        };
        if drift.n_in() != n + 1 {
            return Err(SpectralError::Dimension(format!(
                "drift has {} outputs but {} inputs (expected {})",
                n,
                drift.n_in(),
                n + 1
            ))
            .into());
        }
        if sigma.rows() != n || sigma.n_in() != n {
            return Err(SpectralError::Dimension(format!(
                "sigma is {}x{} on {} inputs, expected {n} rows on {n} inputs",
                sigma.rows(),
                sigma.cols(),
                sigma.n_in()
            ))
            .into());
        }
        Ok(HopfSystem {
            drift,
            sigma,
            includes_mu,
        })
    }

    pub fn n(&self) -> usize {
        self.drift.n_out()
    }

    pub fn m(&self) -> usize {
        self.sigma.cols()
    }

    pub fn includes_mu(&self) -> bool {
        self.includes_mu
    }

    pub fn drift_with_mu(&self) -> &PolyMap {
        &self.drift
    }

    pub fn sigma(&self) -> &PolyMatrix {
        &self.sigma
    }

    /// `b(·, 0)`.
    pub fn critical_drift(&self) -> PolyMap {
        self.drift.fix_last_input(0.0)
    }

    pub fn check(&self, tol: &Tolerances) -> Result<HypothesisReport, SystemError> {
        Ok(check_hypotheses(&self.drift, &self.sigma, tol)?)
    }

    /// Runs the whole pipeline; fails if any hypothesis is violated.
    pub fn prepare(&self, tol: &Tolerances) -> Result<PreparedSystem, SystemError> {
        let report = self.check(tol)?;
        if !report.all_hold() {
            let failed: Vec<&str> = [
                ("H1.2", report.h1_2),
                ("H1.3", report.h1_3),
                ("H1.4", report.h1_4),
                ("H2.2", report.h2_2),
                ("supercritical", report.supercritical),
            ]
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(k, _)| *k)
            .collect();
            return Err(SystemError::HypothesesFailed(failed.join(", ")));
        }
        self.prepare_unchecked(report, tol)
    }

    /// Pipeline without enforcing the verdicts.
    pub fn prepare_unchecked(&self, report: HypothesisReport, tol: &Tolerances) -> Result<PreparedSystem, SystemError> {
        let at_zero = self.critical_drift();
        let a = at_zero.jacobian(&vec![0.0; self.n()])?;
        let split = hopf_split(&a, tol)?;
        let transformed = transform_system(&at_zero, &self.sigma, &split)?;
        let normal_form = normalform::analyze(&transformed)?;
        let limit = LimitParams::new(transformed.sigma_bar())?;
        Ok(PreparedSystem {
            report,
            transformed,
            normal_form,
            limit,
        })
    }
}

/// A system in split coordinates with its normal-form data.
#[derive(Clone, Debug)]
pub struct PreparedSystem {
    pub report: HypothesisReport,
    pub transformed: TransformedSystem,
    pub normal_form: NormalFormAnalysis,
    pub limit: LimitParams,
}

impl PreparedSystem {
    pub fn n(&self) -> usize {
        self.transformed.n()
    }

    pub fn m(&self) -> usize {
        self.transformed.m()
    }

    /// Whether the reduced cubic is `-z|z|²`, the case the limit theorem covers.
    pub fn has_unit_cubic(&self) -> bool {
        has_unit_normal_form_cubic(&self.normal_form.reduced.field, UNIT_CUBIC_TOL)
    }

    /// `(ρ0, 0, 0, …)` in rescaled split coordinates.
    pub fn initial_state(&self, rho0: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        x[0] = rho0;
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_form_with_mu() -> PolyMap {
        PolyMap::from_terms(
            3,
            2,
            4,
            vec![
                (0, vec![0, 1, 0], -1.0),
                (0, vec![1, 0, 1], 1.0),
                (0, vec![3, 0, 0], -1.0),
                (0, vec![1, 2, 0], -1.0),
                (1, vec![1, 0, 0], 1.0),
                (1, vec![0, 1, 1], 1.0),
                (1, vec![2, 1, 0], -1.0),
                (1, vec![0, 3, 0], -1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn normal_form_prepares() {
        let sys = HopfSystem::new(
            normal_form_with_mu(),
            PolyMatrix::constant(&nalgebra::DMatrix::identity(2, 2), 2),
            true,
        )
        .unwrap();
        let p = sys.prepare(&Tolerances::default()).unwrap();
        assert!(p.has_unit_cubic());
        assert!((p.limit.s - 1.0).abs() < 1e-14);
        assert_eq!(p.initial_state(1.0), vec![1.0, 0.0]);
    }

    #[test]
    fn missing_mu_fails_transversality() {
        let drift = normal_form_with_mu().fix_last_input(0.0);
        let sys = HopfSystem::new(
            drift,
            PolyMatrix::constant(&nalgebra::DMatrix::identity(2, 2), 2),
            false,
        )
        .unwrap();
        let err = sys.prepare(&Tolerances::default()).unwrap_err();
        assert_eq!(err, SystemError::HypothesesFailed("H1.4".into()));
    }
}
