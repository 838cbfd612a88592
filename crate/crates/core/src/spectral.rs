//! Hypothesis checks at the bifurcation point and the real change of basis
//! that splits the linearization into a rotation block and a stable block.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::normalform;
use crate::polyfield::{condition_number, PolyError, PolyMap, PolyMatrix, MAX_CONDITION};

pub type C64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("no pure-imaginary eigenvalue pair at the critical point")]
    NoCriticalPair,
    #[error("{0} pure-imaginary eigenvalue pairs, expected exactly one")]
    MultipleCriticalPairs(usize),
    #[error("residual spectrum is not strictly stable (max real part {0:.3e})")]
    UnstableResidualSpectrum(f64),
    #[error("change of basis is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error("block diagonalization defect {0:.3e} above tolerance")]
    Inaccurate(f64),
    #[error("drift is not critical at the origin: |b(0)| = {0:.3e}")]
    NotCritical(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// |Re λ| below this counts as pure imaginary.
    pub imag_tol: f64,
    /// Re λ below `-stable_tol` counts as stable.
    pub stable_tol: f64,
    /// Step of the central difference in μ.
    pub h_mu: f64,
    /// |b(0,0)| below this counts as a critical point.
    pub critical_tol: f64,
    /// |d Re λ / dμ| above this counts as transversal.
    pub transversality_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            imag_tol: 1e-9,
            stable_tol: 1e-9,
            h_mu: 1e-4,
            critical_tol: 1e-10,
            transversality_tol: 1e-6,
        }
    }
}

/// Real block diagonalization `C^{-1} A C = diag(Q, P)` with
/// `Q = [[0, -λ0], [λ0, 0]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSplit {
    pub c: DMatrix<f64>,
    pub c_inv: DMatrix<f64>,
    pub lambda0: f64,
    pub p: DMatrix<f64>,
    pub n: usize,
}

impl SpectralSplit {
    pub fn q(&self) -> DMatrix<f64> {
        rotation_block(self.lambda0)
    }

    /// `diag(Q, P)`.
    pub fn block(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n, self.n);
        b.view_mut((0, 0), (2, 2)).copy_from(&self.q());
        if self.n > 2 {
            b.view_mut((2, 2), (self.n - 2, self.n - 2)).copy_from(&self.p);
        }
        b
    }
}

pub fn rotation_block(lambda0: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -lambda0, lambda0, 0.0])
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<C64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<C64> = a.clone().complex_eigenvalues().iter().cloned().collect();
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    ev
}

pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

struct Classified {
    critical: Vec<C64>,
    max_residual_re: f64,
}

fn classify(ev: &[C64], tol: &Tolerances) -> Classified {
    let critical: Vec<C64> = ev
        .iter()
        .filter(|l| l.re.abs() < tol.imag_tol && l.im > tol.imag_tol)
        .cloned()
        .collect();
    // Remove one conjugate pair per critical eigenvalue, keep the rest.
    let mut rest: Vec<C64> = ev.to_vec();
    for c in &critical {
        for target in [*c, c.conj()] {
            if let Some(pos) = rest
                .iter()
                .position(|l| (l - target).norm() <= 10.0 * tol.imag_tol.max(1e-12) * (1.0 + target.norm()))
            {
                rest.remove(pos);
            }
        }
    }
    let max_residual_re = rest.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    Classified {
        critical,
        max_residual_re,
    }
}

/// Eigenvector of `a` for the (simple) eigenvalue `lambda` by inverse iteration.
fn eigenvector(a: &DMatrix<f64>, lambda: C64) -> DVector<C64> {
    let n = a.nrows();
    let shift = lambda + C64::new(1e-10 * (1.0 + lambda.norm()), 0.0);
    let m = DMatrix::from_fn(n, n, |r, c| {
        let v = C64::new(a[(r, c)], 0.0);
        if r == c {
            v - shift
        } else {
            v
        }
    });
    let lu = m.lu();
    let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.37 - 0.05 * i as f64));
    for _ in 0..4 {
        if let Some(next) = lu.solve(&v) {
            let norm = next.norm();
            if norm > 0.0 && norm.is_finite() {
                v = next.unscale(norm);
            }
        }
    }
    v
}

/// Splits `a` into the critical rotation block and the stable block.
pub fn hopf_split(a: &DMatrix<f64>, tol: &Tolerances) -> Result<SpectralSplit, SpectralError> {
    if !a.is_square() || a.nrows() < 2 {
        return Err(SpectralError::Dimension(format!(
            "need a square matrix of size >= 2, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let ev = eigenvalues(a);
    let cls = classify(&ev, tol);
    match cls.critical.len() {
        0 => return Err(SpectralError::NoCriticalPair),
        1 => {}
        k => return Err(SpectralError::MultipleCriticalPairs(k)),
    }
    if n > 2 && cls.max_residual_re >= -tol.stable_tol {
        return Err(SpectralError::UnstableResidualSpectrum(cls.max_residual_re));
    }
    let lambda = cls.critical[0];
    let lambda0 = lambda.im;

    // Right eigenvector: phase so the largest entry is real positive, then
    // |Re v|^2 + |Im v|^2 = 2.
    let mut v = eigenvector(a, lambda);
    let (imax, _) = v.iter().enumerate().fold(
        (0, -1.0),
        |acc, (i, z)| if z.norm() > acc.1 + 1e-12 { (i, z.norm()) } else { acc },
    );
    let phase = v[imax].conj() / v[imax].norm();
    v *= phase;
    let scale = 2f64.sqrt() / v.norm();
    v *= C64::new(scale, 0.0);

    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, 0)] = v[i].re;
        c[(i, 1)] = -v[i].im;
    }

    if n > 2 {
        // Complement of the critical left eigenspace is A-invariant.
        let u = eigenvector(&a.transpose(), lambda);
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for col in [u.map(|z| z.re), u.map(|z| z.im)] {
            let mut r = col;
            for b in &basis {
                let d = r.dot(b);
                r -= b * d;
            }
            let norm = r.norm();
            if norm > 1e-12 {
                basis.push(r / norm);
            }
        }
        let mut chosen = 0;
        while chosen < n - 2 {
            let mut best: Option<(usize, DVector<f64>, f64)> = None;
            for i in 0..n {
                let mut r = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
                for b in &basis {
                    let d = r.dot(b);
                    r -= b * d;
                }
                let norm = r.norm();
                if best.as_ref().is_none_or(|(_, _, bn)| norm > *bn + 1e-12) {
                    best = Some((i, r, norm));
                }
            }
            let (_, r, norm) = best.expect("n >= 1");
            let mut r = r / norm;
            let (_, big) = r
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |acc, (i, &x): (usize, &f64)| {
                    if x.abs() > acc.1.abs() + 1e-12 {
                        (i, x)
                    } else {
                        acc
                    }
                });
            if big < 0.0 {
                r = -r;
            }
            c.set_column(2 + chosen, &r);
            basis.push(r);
            chosen += 1;
        }
    }

    let cond = condition_number(&c);
    if !cond.is_finite() || cond >= MAX_CONDITION {
        return Err(SpectralError::IllConditioned(cond));
    }
    let c_inv = c
        .clone()
        .try_inverse()
        .ok_or(SpectralError::IllConditioned(f64::INFINITY))?;
    let b = &c_inv * a * &c;
    let p = if n > 2 {
        b.view((2, 2), (n - 2, n - 2)).into_owned()
    } else {
        DMatrix::zeros(0, 0)
    };
    let split = SpectralSplit {
        c,
        c_inv,
        lambda0,
        p,
        n,
    };
    let defect = (&b - split.block()).amax();
    if defect > 1e-9 * a.amax().max(1.0) {
        return Err(SpectralError::Inaccurate(defect));
    }
    Ok(split)
}

/// Drift and noise in the split coordinates `(z, y) = C^{-1} x`:
/// `dz = (Qz + f) dt + σ_Q dB`, `dy = (Py + g) dt + σ_P dB`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedSystem {
    pub split: SpectralSplit,
    pub f: PolyMap,
    pub g: PolyMap,
    pub sigma_q: PolyMatrix,
    pub sigma_p: PolyMatrix,
    /// Largest stripped constant/linear coefficient (should be round-off).
    pub linear_residual: f64,
}

impl TransformedSystem {
    pub fn n(&self) -> usize {
        self.split.n
    }

    pub fn m(&self) -> usize {
        self.sigma_q.cols()
    }

    pub fn lambda0(&self) -> f64 {
        self.split.lambda0
    }

    /// `σ̄ = σ_Q(0, 0)`.
    pub fn sigma_bar(&self) -> DMatrix<f64> {
        self.sigma_q.eval(&vec![0.0; self.n()]).expect("sigma_q has n inputs")
    }

    /// Full drift `(Qz + f, Py + g)` in split coordinates.
    pub fn drift(&self) -> PolyMap {
        let lin = PolyMap::linear(&self.split.block(), self.f.max_degree());
        lin.add(&self.f.stack(&self.g).expect("same arity"))
            .expect("same shape")
    }

    /// Diffusion `(σ_Q; σ_P)` in split coordinates.
    pub fn diffusion(&self) -> PolyMatrix {
        let map = self.sigma_q.map().stack(self.sigma_p.map()).expect("same arity");
        PolyMatrix::new(self.n(), self.m(), map).expect("rows match")
    }
}

fn strip_low_orders(p: &PolyMap) -> (PolyMap, f64) {
    let low = p.truncate(1).max_abs_coeff();
    let comps = p
        .components()
        .iter()
        .map(|c| {
            let mut out = c.clone();
            for d in 0..=1 {
                out = out.sub(&c.homogeneous_part(d));
            }
            out
        })
        .collect();
    (PolyMap::from_components(p.n_in(), p.max_degree(), comps), low)
}

/// Rewrites drift and noise in the split coordinates.
pub fn transform_system(
    drift: &PolyMap,
    sigma: &PolyMatrix,
    split: &SpectralSplit,
) -> Result<TransformedSystem, SpectralError> {
    let n = split.n;
    if drift.n_in() != n || drift.n_out() != n || sigma.rows() != n || sigma.n_in() != n {
        return Err(SpectralError::Dimension(format!(
            "drift {}->{}, sigma {}x{} on {} inputs, split n = {}",
            drift.n_in(),
            drift.n_out(),
            sigma.rows(),
            sigma.cols(),
            sigma.n_in(),
            n
        )));
    }
    let full = drift.linear_change(&split.c)?;
    let nonlinear_from = |idx: &[usize], block: &DMatrix<f64>, offset: usize| {
        let part = full.select_outputs(idx);
        let mut lin = DMatrix::zeros(idx.len(), n);
        if !idx.is_empty() {
            lin.view_mut((0, offset), (idx.len(), idx.len())).copy_from(block);
        }
        let rest = part.sub(&PolyMap::linear(&lin, part.max_degree())).expect("same shape");
        let low = rest.truncate(1).max_abs_coeff();
        let (clean, _) = strip_low_orders(&rest);
        (clean, low)
    };
    let z_idx: Vec<usize> = vec![0, 1];
    let y_idx: Vec<usize> = (2..n).collect();
    let (f, res_f) = nonlinear_from(&z_idx, &split.q(), 0);
    let (g, res_g) = nonlinear_from(&y_idx, &split.p, 2);
    let residual = res_f.max(res_g);
    if residual > 1e-8 * (1.0 + split.lambda0) {
        return Err(SpectralError::Inaccurate(residual));
    }
    let sig = sigma.linear_change(&split.c)?;
    Ok(TransformedSystem {
        split: split.clone(),
        f,
        g,
        sigma_q: sig.select_rows(0, 2),
        sigma_p: sig.select_rows(2, n),
        linear_residual: residual,
    })
}

/// Numerical verdicts for the Hopf and noise hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub n: usize,
    pub m: usize,
    pub critical_point_residual: f64,
    pub eigenvalues: Vec<C64>,
    pub transversality: f64,
    pub sigma_norm: f64,
    /// Angle-averaged radial cubic coefficient of the reduced field.
    pub radial_coefficient: Option<f64>,
    /// Largest real part among non-critical eigenvalues.
    pub stable_margin: f64,
    /// |Re| of the critical pair.
    pub imag_margin: f64,
    pub h1_1: bool,
    pub h1_2: bool,
    pub h1_3: bool,
    pub h1_4: bool,
    pub h2_1: bool,
    pub h2_2: bool,
    pub supercritical: bool,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.h1_1 && self.h1_2 && self.h1_3 && self.h1_4 && self.h2_1 && self.h2_2 && self.supercritical
    }

    /// Flat `key = value` records in a fixed order.
    pub fn records(&self) -> Vec<(String, String)> {
        let ev: Vec<String> = self
            .eigenvalues
            .iter()
            .map(|l| format!("{:.17e}{:+.17e}i", l.re, l.im))
            .collect();
        vec![
            ("n".into(), self.n.to_string()),
            ("m".into(), self.m.to_string()),
            (
                "critical_point_residual".into(),
                format!("{:.17e}", self.critical_point_residual),
            ),
            ("eigenvalues".into(), ev.join(";")),
            ("imag_margin".into(), format!("{:.17e}", self.imag_margin)),
            ("stable_margin".into(), format!("{:.17e}", self.stable_margin)),
            ("transversality".into(), format!("{:.17e}", self.transversality)),
            ("sigma_norm".into(), format!("{:.17e}", self.sigma_norm)),
            (
                "radial_coefficient".into(),
                self.radial_coefficient
                    .map(|a| format!("{a:.17e}"))
                    .unwrap_or_else(|| "nan".into()),
            ),
            ("H1.1".into(), self.h1_1.to_string()),
            ("H1.2".into(), self.h1_2.to_string()),
            ("H1.3".into(), self.h1_3.to_string()),
            ("H1.4".into(), self.h1_4.to_string()),
            ("H2.1".into(), self.h2_1.to_string()),
            ("H2.2".into(), self.h2_2.to_string()),
            ("supercritical".into(), self.supercritical.to_string()),
        ]
    }
}

/// Newton iteration for the equilibrium of `b(·, mu)` near the origin.
fn track_equilibrium(drift: &PolyMap, mu: f64) -> Vec<f64> {
    let n = drift.n_out();
    let field = drift.fix_last_input(mu);
    let mut x = DVector::zeros(n);
    for _ in 0..20 {
        let fx = DVector::from_vec(field.eval(x.as_slice()).expect("arity"));
        if fx.amax() < 1e-14 {
            break;
        }
        let j = field.jacobian(x.as_slice()).expect("arity");
        match j.lu().solve(&fx) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => x -= dx,
            _ => return vec![0.0; n],
        }
    }
    if x.amax() > 1.0 {
        vec![0.0; n]
    } else {
        x.as_slice().to_vec()
    }
}

fn closest(ev: &[C64], target: C64) -> C64 {
    *ev.iter()
        .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
        .expect("non-empty spectrum")
}

/// Evaluates H1.1-H1.4, H2.1-H2.2 and supercriticality for a drift
/// `b(x, μ)` (last input is μ) and diffusion σ(x), at x = 0, μ = 0.
pub fn check_hypotheses(
    drift: &PolyMap,
    sigma: &PolyMatrix,
    tol: &Tolerances,
) -> Result<HypothesisReport, SpectralError> {
    let n = drift.n_out();
    if drift.n_in() != n + 1 {
        return Err(SpectralError::Dimension(format!(
            "drift must take n + 1 = {} inputs (x, mu), got {}",
            n + 1,
            drift.n_in()
        )));
    }
    if sigma.rows() != n || sigma.n_in() != n {
        return Err(SpectralError::Dimension(format!(
            "sigma must be {n} x m on {n} inputs, got {} x {} on {}",
            sigma.rows(),
            sigma.cols(),
            sigma.n_in()
        )));
    }
    let at_zero = drift.fix_last_input(0.0);
    let origin = vec![0.0; n];
    let residual = DVector::from_vec(at_zero.eval(&origin)?).amax();
    let a = at_zero.jacobian(&origin)?;
    let ev = eigenvalues(&a);
    let cls = classify(&ev, tol);
    let h1_3 = cls.critical.len() == 1 && (n == 2 || cls.max_residual_re < -tol.stable_tol);
    let imag_margin = cls.critical.first().map(|l| l.re.abs()).unwrap_or(f64::NAN);
    let stable_margin = if n == 2 { f64::NEG_INFINITY } else { cls.max_residual_re };

    let transversality = match cls.critical.first() {
        Some(&l0) => {
            let re_at = |mu: f64| {
                let x_mu = track_equilibrium(drift, mu);
                let j = drift.fix_last_input(mu).jacobian(&x_mu).expect("arity");
                closest(&eigenvalues(&j), l0).re
            };
            (re_at(tol.h_mu) - re_at(-tol.h_mu)) / (2.0 * tol.h_mu)
        }
        None => 0.0,
    };
    let sigma_norm = sigma.eval(&origin)?.norm();

    let mut radial_coefficient = None;
    if h1_3 && residual < tol.critical_tol {
        if let Ok(split) = hopf_split(&a, tol) {
            if let Ok(ts) = transform_system(&at_zero, sigma, &split) {
                if let Ok(nf) = normalform::analyze(&ts) {
                    radial_coefficient = Some(nf.radial_coefficient);
                }
            }
        }
    }

    Ok(HypothesisReport {
        n,
        m: sigma.cols(),
        critical_point_residual: residual,
        eigenvalues: ev,
        transversality,
        sigma_norm,
        radial_coefficient,
        stable_margin,
        imag_margin,
        h1_1: true,
        h1_2: residual < tol.critical_tol,
        h1_3,
        h1_4: transversality.abs() > tol.transversality_tol,
        h2_1: true,
        h2_2: sigma_norm > 0.0,
        supercritical: radial_coefficient.is_some_and(|a| a < 0.0),
    })
}
