//! Quadratic normal form, quadratic center manifold and the reduced planar
//! field.
//!
//! Quadratic terms of the critical drift are written in the complex
//! coordinate `w = z1 + i z2` on the basis
//! `{w², w̄², w w̄, w y_j, w̄ y_j}`. The homological operator
//! `L r = iλ0 r - iλ0 w ∂_w r + iλ0 w̄ ∂_w̄ r - ∇_y r · P y` is diagonal on
//! the first three basis monomials and acts through `-Pᵀ` and
//! `2iλ0 - Pᵀ` on the mixed ones (coefficient-vector convention).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::polyfield::{Monomial, Poly, PolyError, PolyMap};
use crate::spectral::{rotation_block, spectral_abscissa, TransformedSystem, C64};

/// Largest accepted condition number of `L`.
pub const MAX_L_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalFormError {
    #[error("input is not homogeneous of degree 2 (found degree {0})")]
    NonHomogeneous(u32),
    #[error("expected a map with 2 outputs, got {0}")]
    NotPlanar(usize),
    #[error("stable block is not stable (spectral abscissa {0:.3e})")]
    UnstableBlock(f64),
    #[error("rotation rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("linear system is numerically singular (condition number {0:.3e})")]
    Singular(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Number of quadratic basis monomials for `k = n - 2` stable directions.
pub fn basis_len(k: usize) -> usize {
    3 + 2 * k
}

fn check_planar(p: &PolyMap) -> Result<(), NormalFormError> {
    if p.n_out() != 2 {
        return Err(NormalFormError::NotPlanar(p.n_out()));
    }
    if p.n_in() < 2 {
        return Err(NormalFormError::Dimension(format!(
            "need at least 2 inputs, got {}",
            p.n_in()
        )));
    }
    Ok(())
}

/// Complex quadratic part `F₊ = f1 + i f2` on the basis
/// `{w², w̄², w w̄, w y_j, w̄ y_j}` plus the y-only quadratic part, which the
/// basis does not cover and is returned unchanged.
pub fn complexify_quadratic(f2: &PolyMap) -> Result<(Vec<C64>, PolyMap), NormalFormError> {
    check_planar(f2)?;
    let n = f2.n_in();
    let k = n - 2;
    let mut coeffs = vec![C64::new(0.0, 0.0); basis_len(k)];
    let mut y_only = PolyMap::zero(n, 2, f2.max_degree()).components().to_vec();
    let half = 0.5;
    let i = C64::new(0.0, 1.0);
    for (comp, p) in f2.components().iter().enumerate() {
        // f1 contributes with weight 1, f2 with weight i.
        let weight = if comp == 0 { C64::new(1.0, 0.0) } else { i };
        for (m, c) in p.terms() {
            if m.degree() != 2 {
                return Err(NormalFormError::NonHomogeneous(m.degree()));
            }
            let e = m.exponents();
            let a = e[0];
            let b = e[1];
            let ys: Vec<usize> = (0..k).filter(|&j| e[2 + j] > 0).collect();
            let wc = weight * c;
            match (a, b) {
                // z1² = (w² + 2ww̄ + w̄²)/4
                (2, 0) => {
                    coeffs[0] += wc * 0.25;
                    coeffs[1] += wc * 0.25;
                    coeffs[2] += wc * 0.5;
                }
                // z1 z2 = -i (w² - w̄²)/4
                (1, 1) => {
                    coeffs[0] += wc * (-i) * 0.25;
                    coeffs[1] += wc * i * 0.25;
                }
                // z2² = -(w² - 2ww̄ + w̄²)/4
                (0, 2) => {
                    coeffs[0] += wc * -0.25;
                    coeffs[1] += wc * -0.25;
                    coeffs[2] += wc * 0.5;
                }
                // z1 y_j = (w y_j + w̄ y_j)/2
                (1, 0) => {
                    let j = ys[0];
                    coeffs[3 + j] += wc * half;
                    coeffs[3 + k + j] += wc * half;
                }
                // z2 y_j = -i (w y_j - w̄ y_j)/2
                (0, 1) => {
                    let j = ys[0];
                    coeffs[3 + j] += wc * (-i) * half;
                    coeffs[3 + k + j] += wc * i * half;
                }
                (0, 0) => {
                    y_only[comp].add_term(m.clone(), c);
                }
                _ => unreachable!("degree-2 monomial"),
            }
        }
    }
    Ok((coeffs, PolyMap::from_components(n, f2.max_degree(), y_only)))
}

/// Real form `(Re r, Im r)` of `r(w, w̄, y)` evaluated at `w = z1 + i z2`.
pub fn realify(coeffs: &[C64], n: usize) -> PolyMap {
    let k = n - 2;
    assert_eq!(coeffs.len(), basis_len(k));
    let mono = |e: &[(usize, u32)]| {
        let mut v = vec![0u32; n];
        for &(i, p) in e {
            v[i] += p;
        }
        Monomial::new(v)
    };
    // Each basis element as (real part, imaginary part) real polynomials.
    let mut basis: Vec<(Poly, Poly)> = Vec::with_capacity(coeffs.len());
    let z11 = mono(&[(0, 2)]);
    let z12 = mono(&[(0, 1), (1, 1)]);
    let z22 = mono(&[(1, 2)]);
    let mut re = Poly::zero(n);
    let mut im = Poly::zero(n);
    // w²
    re.add_term(z11.clone(), 1.0);
    re.add_term(z22.clone(), -1.0);
    im.add_term(z12.clone(), 2.0);
    basis.push((re.clone(), im.clone()));
    // w̄²
    basis.push((re, im.scale(-1.0)));
    // w w̄
    let mut re = Poly::zero(n);
    re.add_term(z11, 1.0);
    re.add_term(z22, 1.0);
    basis.push((re, Poly::zero(n)));
    for conj in [false, true] {
        for j in 0..k {
            let mut re = Poly::zero(n);
            let mut im = Poly::zero(n);
            re.add_term(mono(&[(0, 1), (2 + j, 1)]), 1.0);
            im.add_term(mono(&[(1, 1), (2 + j, 1)]), if conj { -1.0 } else { 1.0 });
            basis.push((re, im));
        }
    }
    let mut out_re = Poly::zero(n);
    let mut out_im = Poly::zero(n);
    for (c, (br, bi)) in coeffs.iter().zip(&basis) {
        out_re = out_re.add(&br.scale(c.re)).add(&bi.scale(-c.im));
        out_im = out_im.add(&bi.scale(c.re)).add(&br.scale(c.im));
    }
    PolyMap::from_components(n, 4, vec![out_re, out_im])
}

fn check_l_inputs(lambda0: f64, p: &DMatrix<f64>) -> Result<(), NormalFormError> {
    if !(lambda0 > 0.0) {
        return Err(NormalFormError::NonPositiveRate(lambda0));
    }
    if !p.is_square() {
        return Err(NormalFormError::Dimension(format!("P is {}x{}", p.nrows(), p.ncols())));
    }
    if !p.is_empty() {
        let abscissa = spectral_abscissa(p);
        if abscissa >= 0.0 {
            return Err(NormalFormError::UnstableBlock(abscissa));
        }
    }
    Ok(())
}

/// Matrix of the homological operator on the quadratic basis:
/// `diag(-iλ0, 3iλ0, iλ0)`, then `-Pᵀ`, then `2iλ0 I - Pᵀ`.
#[allow(non_snake_case)]
pub fn build_L(lambda0: f64, p: &DMatrix<f64>) -> Result<DMatrix<C64>, NormalFormError> {
    check_l_inputs(lambda0, p)?;
    let k = p.nrows();
    let size = basis_len(k);
    let mut l = DMatrix::from_element(size, size, C64::new(0.0, 0.0));
    l[(0, 0)] = C64::new(0.0, -lambda0);
    l[(1, 1)] = C64::new(0.0, 3.0 * lambda0);
    l[(2, 2)] = C64::new(0.0, lambda0);
    for r in 0..k {
        for c in 0..k {
            let pt = p[(c, r)];
            l[(3 + r, 3 + c)] = C64::new(-pt, 0.0);
            let diag = if r == c { 2.0 * lambda0 } else { 0.0 };
            l[(3 + k + r, 3 + k + c)] = C64::new(-pt, diag);
        }
    }
    Ok(l)
}

/// Coefficients of the quadratic change of variables `w = w' + r(w', w̄', y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticTransform {
    pub beta1: C64,
    pub beta2: C64,
    pub beta12: C64,
    pub alpha1: Vec<C64>,
    pub alpha2: Vec<C64>,
    /// All coefficients in basis order.
    pub coeffs: Vec<C64>,
    /// `z = z' + p(z', y)`.
    pub p_real: PolyMap,
    /// `‖L r + F₊‖∞`.
    pub residual: f64,
}

impl QuadraticTransform {
    pub fn is_trivial(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= tol)
    }
}

/// Solves `L r = -F₊` and realifies the solution.
pub fn solve_quadratic(lambda0: f64, p: &DMatrix<f64>, f_plus: &[C64]) -> Result<QuadraticTransform, NormalFormError> {
    let l = build_L(lambda0, p)?;
    let k = p.nrows();
    if f_plus.len() != basis_len(k) {
        return Err(NormalFormError::Dimension(format!(
            "expected {} quadratic coefficients, got {}",
            basis_len(k),
            f_plus.len()
        )));
    }
    let sv = l.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = smax / smin;
    if !cond.is_finite() || cond >= MAX_L_CONDITION {
        return Err(NormalFormError::Singular(cond));
    }
    let rhs = DVector::from_iterator(f_plus.len(), f_plus.iter().map(|c| -c));
    let sol = l.clone().lu().solve(&rhs).ok_or(NormalFormError::Singular(cond))?;
    let residual = (&l * &sol - &rhs).iter().map(|c| c.norm()).fold(0.0, f64::max);
    let coeffs: Vec<C64> = sol.iter().cloned().collect();
    let n = k + 2;
    Ok(QuadraticTransform {
        beta1: coeffs[0],
        beta2: coeffs[1],
        beta12: coeffs[2],
        alpha1: coeffs[3..3 + k].to_vec(),
        alpha2: coeffs[3 + k..].to_vec(),
        p_real: realify(&coeffs, n),
        coeffs,
        residual,
    })
}

/// Rewrites `dz = Qz + f`, `dy = Py + g` in the variables `(z', y)` with
/// `z = z' + p(z', y)`; returns `(f', g')` truncated at the degree cap of `f`.
pub fn apply_quadratic_transform(
    f: &PolyMap,
    g: &PolyMap,
    lambda0: f64,
    p: &DMatrix<f64>,
    t: &QuadraticTransform,
) -> Result<(PolyMap, PolyMap), NormalFormError> {
    check_planar(f)?;
    let n = f.n_in();
    let k = n - 2;
    if g.n_in() != n || g.n_out() != k || p.nrows() != k || t.p_real.n_in() != n {
        return Err(NormalFormError::Dimension(format!(
            "f on {n} inputs, g {}->{}, P {}x{}",
            g.n_in(),
            g.n_out(),
            p.nrows(),
            p.ncols()
        )));
    }
    let deg = f.max_degree().max(g.max_degree());
    let q = rotation_block(lambda0);
    let mut block = DMatrix::zeros(n, n);
    block.view_mut((0, 0), (2, 2)).copy_from(&q);
    if k > 0 {
        block.view_mut((2, 2), (k, k)).copy_from(p);
    }
    let drift = PolyMap::linear(&block, deg).add(&f.stack(g)?.with_max_degree(deg))?;

    // φ(z', y) = (z' + p(z', y), y)
    let phi = PolyMap::identity(n)
        .with_max_degree(deg)
        .add(&t.p_real.stack(&PolyMap::zero(n, k, deg))?.with_max_degree(deg))?;
    let moved = drift.substitute(&phi, deg)?;
    let fz = &moved.components()[..2];
    let gy = &moved.components()[2..];

    let jac = t.p_real.jacobian_poly();
    // V = F∘φ - D_y p · G∘φ
    let mut v: Vec<Poly> = fz.to_vec();
    for (r, vr) in v.iter_mut().enumerate() {
        for j in 0..k {
            *vr = vr.sub(&jac[r][2 + j].mul_truncated(&gy[j], deg));
        }
    }
    // (I + D_z p)^{-1} V as a Neumann series; D_z p is linear.
    let mut sum = v.clone();
    let mut term = v;
    for _ in 0..deg {
        let next: Vec<Poly> = (0..2)
            .map(|r| {
                jac[r][0]
                    .mul_truncated(&term[0], deg)
                    .add(&jac[r][1].mul_truncated(&term[1], deg))
                    .scale(-1.0)
            })
            .collect();
        if next.iter().all(Poly::is_zero) {
            break;
        }
        sum = sum.iter().zip(&next).map(|(a, b)| a.add(b)).collect();
        term = next;
    }
    let lin_z = PolyMap::linear(&block.view((0, 0), (2, n)).into_owned(), deg);
    let f_new = PolyMap::from_components(n, deg, sum).sub(&lin_z)?;
    let lin_y = PolyMap::linear(&block.view((2, 0), (k, n)).into_owned(), deg);
    let g_new = PolyMap::from_components(n, deg, gy.to_vec()).sub(&lin_y)?;
    Ok((f_new, g_new))
}

/// Largest z-involving quadratic coefficient of a planar drift.
pub fn quadratic_z_residue(f: &PolyMap) -> f64 {
    f.homogeneous_part(2)
        .terms()
        .iter()
        .filter(|(_, e, _)| e[0] + e[1] > 0)
        .map(|(_, _, c)| c.abs())
        .fold(0.0, f64::max)
}

/// Quadratic approximation `y = h₂(z)` of the center manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterManifold2 {
    pub h2: PolyMap,
    /// Max residual of the order-2 tangency identity.
    pub residual: f64,
}

impl CenterManifold2 {
    pub fn dim(&self) -> usize {
        self.h2.n_out()
    }
}

fn quad_monomials() -> [Monomial; 3] {
    [
        Monomial::new(vec![2, 0]),
        Monomial::new(vec![1, 1]),
        Monomial::new(vec![0, 2]),
    ]
}

/// `Dh(z) Q z - P h(z)` for a planar-input map `h`.
fn tangency_operator(h: &PolyMap, lambda0: f64, p: &DMatrix<f64>) -> PolyMap {
    let qz = [Poly::var(2, 1).scale(-lambda0), Poly::var(2, 0).scale(lambda0)];
    let jac = h.jacobian_poly();
    let lie: Vec<Poly> = jac
        .iter()
        .map(|row| row[0].mul_truncated(&qz[0], 8).add(&row[1].mul_truncated(&qz[1], 8)))
        .collect();
    let lie = PolyMap::from_components(2, h.max_degree(), lie);
    lie.sub(&h.left_multiply(p)).expect("same shape")
}

/// Solves `Dh₂(z) Q z - P h₂(z) = g⁽²⁾(z, 0)` for the quadratic `h₂`.
pub fn center_manifold_quadratic(
    lambda0: f64,
    p: &DMatrix<f64>,
    g: &PolyMap,
) -> Result<CenterManifold2, NormalFormError> {
    let k = p.nrows();
    let n = k + 2;
    if g.n_in() != n || g.n_out() != k {
        return Err(NormalFormError::Dimension(format!(
            "g must map R^{n} to R^{k}, got {}->{}",
            g.n_in(),
            g.n_out()
        )));
    }
    let low = g.truncate(1).max_abs_coeff();
    if low > 1e-12 {
        return Err(NormalFormError::Dimension(format!(
            "g has constant/linear terms of size {low:.3e}"
        )));
    }
    if k == 0 {
        return Ok(CenterManifold2 {
            h2: PolyMap::zero(2, 0, 4),
            residual: 0.0,
        });
    }
    if !(lambda0 > 0.0) {
        return Err(NormalFormError::NonPositiveRate(lambda0));
    }
    // g⁽²⁾(z, 0)
    let mut on_plane: Vec<Poly> = vec![Poly::var(2, 0), Poly::var(2, 1)];
    on_plane.extend((0..k).map(|_| Poly::zero(2)));
    let g2 = PolyMap::from_components(
        2,
        4,
        g.homogeneous_part(2)
            .components()
            .iter()
            .map(|c| c.compose(&on_plane, 2))
            .collect(),
    );

    let monos = quad_monomials();
    let size = 3 * k;
    let unit = |idx: usize| {
        let mut comps = vec![Poly::zero(2); k];
        comps[idx / 3].add_term(monos[idx % 3].clone(), 1.0);
        PolyMap::from_components(2, 4, comps)
    };
    let coeffs_of = |h: &PolyMap| DVector::from_fn(size, |idx, _| h.component(idx / 3).coeff(&monos[idx % 3]));
    let mut op = DMatrix::zeros(size, size);
    for col in 0..size {
        op.set_column(col, &coeffs_of(&tangency_operator(&unit(col), lambda0, p)));
    }
    let rhs = coeffs_of(&g2);
    let cond = crate::polyfield::condition_number(&op);
    if !cond.is_finite() || cond >= MAX_L_CONDITION {
        return Err(NormalFormError::Singular(cond));
    }
    let sol = op.clone().lu().solve(&rhs).ok_or(NormalFormError::Singular(cond))?;
    let mut comps = vec![Poly::zero(2); k];
    for idx in 0..size {
        comps[idx / 3].add_term(monos[idx % 3].clone(), sol[idx]);
    }
    let h2 = PolyMap::from_components(2, 4, comps);
    let residual = tangency_operator(&h2, lambda0, p).sub(&g2)?.max_abs_coeff();
    Ok(CenterManifold2 { h2, residual })
}

/// `z ↦ (z, h(z))`.
pub fn graph_map(h: &CenterManifold2, max_degree: u32) -> PolyMap {
    let mut comps = vec![Poly::var(2, 0), Poly::var(2, 1)];
    comps.extend(h.h2.components().iter().cloned());
    PolyMap::from_components(2, max_degree, comps)
}

/// Invariance defect `Dh(z)(Qz + f(z,h)) - (P h + g(z,h))` evaluated at `z`.
pub fn invariance_defect(
    lambda0: f64,
    p: &DMatrix<f64>,
    f: &PolyMap,
    g: &PolyMap,
    h: &CenterManifold2,
    z: [f64; 2],
) -> f64 {
    let k = h.dim();
    if k == 0 {
        return 0.0;
    }
    let hz = h.h2.eval(&z).expect("planar");
    let mut x = z.to_vec();
    x.extend_from_slice(&hz);
    let fz = f.eval(&x).expect("arity");
    let gz = g.eval(&x).expect("arity");
    let zdot = [-lambda0 * z[1] + fz[0], lambda0 * z[0] + fz[1]];
    let dh = h.h2.jacobian(&z).expect("planar");
    let hvec = DVector::from_vec(hz);
    let lhs = &dh * DVector::from_row_slice(&zdot);
    let rhs = p * hvec + DVector::from_vec(gz);
    (lhs - rhs).amax()
}

/// Planar field on the center manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedField {
    /// `Qz + f(z, h₂(z))` truncated at degree 3.
    pub field: PolyMap,
    /// Degree-4 terms dropped by the truncation.
    pub higher_order: PolyMap,
}

impl ReducedField {
    /// Nonlinear part of the field (everything except `Qz`).
    pub fn cubic(&self) -> PolyMap {
        self.field.homogeneous_part(3)
    }
}

pub fn reduced_field(lambda0: f64, f: &PolyMap, h: &CenterManifold2) -> Result<ReducedField, NormalFormError> {
    check_planar(f)?;
    if f.n_in() != 2 + h.dim() {
        return Err(NormalFormError::Dimension(format!(
            "f takes {} inputs, manifold has {} stable directions",
            f.n_in(),
            h.dim()
        )));
    }
    let on_manifold = f.substitute(&graph_map(h, 4), 4)?;
    let lin = PolyMap::linear(&rotation_block(lambda0), 4);
    let field = lin.add(&on_manifold.truncate(3))?.with_max_degree(3);
    let higher_order = on_manifold.homogeneous_part(4);
    Ok(ReducedField { field, higher_order })
}

/// `(1/2π) ∫ u(θ)·c(u(θ)) dθ` for the cubic part `c` of a planar field,
/// by a 256-point trapezoid rule. Negative means supercritical.
pub fn lyapunov_radial_coefficient(reduced: &PolyMap) -> f64 {
    let cubic = reduced.homogeneous_part(3);
    let nodes = 256;
    let mut acc = 0.0;
    for j in 0..nodes {
        let th = 2.0 * std::f64::consts::PI * j as f64 / nodes as f64;
        let u = [th.cos(), th.sin()];
        let c = cubic.eval(&u).expect("planar");
        acc += u[0] * c[0] + u[1] * c[1];
    }
    acc / nodes as f64
}

/// True when the cubic part of `reduced` is `-z (z1² + z2²)` within `tol`.
pub fn has_unit_normal_form_cubic(reduced: &PolyMap, tol: f64) -> bool {
    let target = PolyMap::from_terms(
        2,
        2,
        4,
        vec![
            (0, vec![3, 0], -1.0),
            (0, vec![1, 2], -1.0),
            (1, vec![2, 1], -1.0),
            (1, vec![0, 3], -1.0),
        ],
    )
    .expect("valid");
    reduced
        .homogeneous_part(3)
        .with_max_degree(4)
        .sub(&target)
        .map(|d| d.max_abs_coeff() < tol)
        .unwrap_or(false)
}

/// Everything the normal-form pipeline produces for one system.
#[derive(Clone, Debug)]
pub struct NormalFormAnalysis {
    pub l: DMatrix<C64>,
    pub f_plus: Vec<C64>,
    pub f_y: PolyMap,
    pub transform: QuadraticTransform,
    pub f_prime: PolyMap,
    pub g_prime: PolyMap,
    pub center_manifold: CenterManifold2,
    pub reduced: ReducedField,
    pub radial_coefficient: f64,
}

impl NormalFormAnalysis {
    pub fn supercritical(&self) -> bool {
        self.radial_coefficient < 0.0
    }
}

/// Quadratic normal form, center manifold, reduced field and radial
/// coefficient of a system already in split coordinates.
pub fn analyze(ts: &TransformedSystem) -> Result<NormalFormAnalysis, NormalFormError> {
    let lambda0 = ts.lambda0();
    let p = &ts.split.p;
    let (f_plus, f_y) = complexify_quadratic(&ts.f.homogeneous_part(2))?;
    let l = build_L(lambda0, p)?;
    let transform = solve_quadratic(lambda0, p, &f_plus)?;
    let (f_prime, g_prime) = apply_quadratic_transform(&ts.f, &ts.g, lambda0, p, &transform)?;
    let center_manifold = center_manifold_quadratic(lambda0, p, &g_prime)?;
    let reduced = reduced_field(lambda0, &f_prime, &center_manifold)?;
    let radial_coefficient = lyapunov_radial_coefficient(&reduced.field);
    Ok(NormalFormAnalysis {
        l,
        f_plus,
        f_y,
        transform,
        f_prime,
        g_prime,
        center_manifold,
        reduced,
        radial_coefficient,
    })
}
