//! Sparse real polynomial maps `R^n -> R^k` with a total-degree cap.
//!
//! Every drift, diffusion and change of coordinates in the crate is one of
//! these. Arithmetic is exact up to floating-point rounding: composition and
//! products truncate monomials above the requested total degree, nothing else
//! is approximated.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

/// Coefficients with magnitude below this are dropped on construction.
pub const DEDUP_TOL: f64 = 1e-15;

/// Default total-degree cap.
pub const DEFAULT_MAX_DEGREE: u32 = 4;

/// Largest accepted condition number for [`PolyMap::linear_change`].
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("monomial of degree {degree} exceeds the cap {max_degree}")]
    DegreeExceeded { degree: u32, max_degree: u32 },
    #[error("component index {index} out of range for {n_out} outputs")]
    ComponentOutOfRange { index: usize, n_out: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
}

/// Exponent multi-index of a monomial.
///
/// Ordered graded-lexicographically: lower total degree first, then the
/// monomial with the larger power of the earlier variable first
/// (`x1^2 < x1 x2 < x2^2`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(n_vars: usize) -> Self {
        Monomial(vec![0; n_vars])
    }

    pub fn var(n_vars: usize, i: usize) -> Self {
        let mut e = vec![0; n_vars];
        e[i] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn n_vars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    fn eval_with_powers(&self, powers: &[Vec<f64>]) -> f64 {
        let mut v = 1.0;
        for (i, &e) in self.0.iter().enumerate() {
            if e > 0 {
                v *= powers[i][e as usize];
            }
        }
        v
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Scalar polynomial in `n_vars` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    n_vars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    pub fn zero(n_vars: usize) -> Self {
        Poly {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Poly::zero(n_vars);
        p.add_term(Monomial::one(n_vars), c);
        p
    }

    pub fn var(n_vars: usize, i: usize) -> Self {
        let mut p = Poly::zero(n_vars);
        p.add_term(Monomial::var(n_vars, i), 1.0);
        p
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.n_vars(), self.n_vars);
        let v = self.terms.get(&m).copied().unwrap_or(0.0) + c;
        if v.abs() < DEDUP_TOL {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, v);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> Poly {
        let mut out = Poly::zero(self.n_vars);
        if k != 0.0 {
            for (m, c) in self.terms() {
                out.add_term(m.clone(), c * k);
            }
        }
        out
    }

    /// Product with every monomial of total degree above `truncate_at` discarded.
    pub fn mul_truncated(&self, other: &Poly, truncate_at: u32) -> Poly {
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in self.terms() {
            let da = ma.degree();
            for (mb, cb) in other.terms() {
                if da + mb.degree() <= truncate_at {
                    *acc.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
                }
            }
        }
        Poly::from_map(self.n_vars, acc)
    }

    pub fn truncate(&self, max_degree: u32) -> Poly {
        let map = self
            .terms
            .iter()
            .filter(|(m, _)| m.degree() <= max_degree)
            .map(|(m, &c)| (m.clone(), c))
            .collect();
        Poly::from_map(self.n_vars, map)
    }

    pub fn homogeneous_part(&self, d: u32) -> Poly {
        let map = self
            .terms
            .iter()
            .filter(|(m, _)| m.degree() == d)
            .map(|(m, &c)| (m.clone(), c))
            .collect();
        Poly::from_map(self.n_vars, map)
    }

    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.n_vars);
        for (m, c) in self.terms() {
            let e = m.0[var];
            if e > 0 {
                let mut d = m.0.clone();
                d[var] -= 1;
                out.add_term(Monomial(d), c * e as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.degree() as usize;
        let powers = power_table(x, d);
        self.eval_with_powers(&powers)
    }

    fn eval_with_powers(&self, powers: &[Vec<f64>]) -> f64 {
        self.terms.iter().map(|(m, &c)| c * m.eval_with_powers(powers)).sum()
    }

    fn from_map(n_vars: usize, map: BTreeMap<Monomial, f64>) -> Poly {
        let terms = map.into_iter().filter(|(_, c)| c.abs() >= DEDUP_TOL).collect();
        Poly { n_vars, terms }
    }

    /// Composition `self(phi(x))`, truncated at `truncate_at`.
    pub fn compose(&self, phi: &[Poly], truncate_at: u32) -> Poly {
        let n_new = phi.first().map(Poly::n_vars).unwrap_or(0);
        let d = self.degree() as usize;
        let powers: Vec<Vec<Poly>> = phi
            .iter()
            .map(|f| {
                let mut pw = vec![Poly::constant(n_new, 1.0)];
                for k in 1..=d {
                    let next = pw[k - 1].mul_truncated(f, truncate_at);
                    pw.push(next);
                }
                pw
            })
            .collect();
        let mut out = Poly::zero(n_new);
        for (m, c) in self.terms() {
            let mut term = Poly::constant(n_new, c);
            for (i, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    term = term.mul_truncated(&powers[i][e as usize], truncate_at);
                }
            }
            out = out.add(&term);
        }
        out
    }
}

fn power_table(x: &[f64], d: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&xi| {
            let mut row = Vec::with_capacity(d + 1);
            let mut v = 1.0;
            row.push(v);
            for _ in 0..d {
                v *= xi;
                row.push(v);
            }
            row
        })
        .collect()
}

/// Polynomial map `R^{n_in} -> R^{n_out}`; immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMap {
    n_in: usize,
    max_degree: u32,
    comps: Vec<Poly>,
}

impl PolyMap {
    pub fn zero(n_in: usize, n_out: usize, max_degree: u32) -> Self {
        PolyMap {
            n_in,
            max_degree,
            comps: vec![Poly::zero(n_in); n_out],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_components(n, DEFAULT_MAX_DEGREE, (0..n).map(|i| Poly::var(n, i)).collect())
    }

    /// The linear map `x -> A x`.
    pub fn linear(a: &DMatrix<f64>, max_degree: u32) -> Self {
        let n_in = a.ncols();
        let comps = (0..a.nrows())
            .map(|r| {
                let mut p = Poly::zero(n_in);
                for c in 0..n_in {
                    p.add_term(Monomial::var(n_in, c), a[(r, c)]);
                }
                p
            })
            .collect();
        Self::from_components(n_in, max_degree, comps)
    }

    /// Builds a map from `(component, exponents, coefficient)` records.
    /// Repeated entries are summed.
    pub fn from_terms<I>(n_in: usize, n_out: usize, max_degree: u32, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (usize, Vec<u32>, f64)>,
    {
        let mut map = Self::zero(n_in, n_out, max_degree);
        for (comp, exps, c) in terms {
            if comp >= n_out {
                return Err(PolyError::ComponentOutOfRange { index: comp, n_out });
            }
            if exps.len() != n_in {
                return Err(PolyError::DimensionMismatch {
                    expected: n_in,
                    found: exps.len(),
                });
            }
            let m = Monomial(exps);
            if m.degree() > max_degree {
                return Err(PolyError::DegreeExceeded {
                    degree: m.degree(),
                    max_degree,
                });
            }
            map.comps[comp].add_term(m, c);
        }
        Ok(map)
    }

    /// Wraps components, truncating them at `max_degree`.
    pub fn from_components(n_in: usize, max_degree: u32, comps: Vec<Poly>) -> Self {
        let comps = comps
            .into_iter()
            .map(|p| {
                assert_eq!(p.n_vars(), n_in, "component has wrong arity");
                p.truncate(max_degree)
            })
            .collect();
        PolyMap {
            n_in,
            max_degree,
            comps,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.comps.len()
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn components(&self) -> &[Poly] {
        &self.comps
    }

    pub fn component(&self, i: usize) -> &Poly {
        &self.comps[i]
    }

    /// Canonical `(component, exponents, coefficient)` listing, components in
    /// order and monomials graded-lexicographic within each component.
    pub fn terms(&self) -> Vec<(usize, Vec<u32>, f64)> {
        self.comps
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.terms().map(move |(m, c)| (i, m.0.clone(), c)))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Poly::is_zero)
    }

    pub fn degree(&self) -> u32 {
        self.comps.iter().map(Poly::degree).max().unwrap_or(0)
    }

    pub fn with_max_degree(&self, max_degree: u32) -> PolyMap {
        Self::from_components(self.n_in, max_degree, self.comps.clone())
    }

    fn check_len(&self, x: &[f64]) -> Result<(), PolyError> {
        if x.len() != self.n_in {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_in,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, PolyError> {
        let mut out = vec![0.0; self.n_out()];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), PolyError> {
        self.check_len(x)?;
        if out.len() != self.n_out() {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_out(),
                found: out.len(),
            });
        }
        let powers = power_table(x, self.degree() as usize);
        for (o, p) in out.iter_mut().zip(&self.comps) {
            *o = p.eval_with_powers(&powers);
        }
        Ok(())
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        self.check_len(x)?;
        let powers = power_table(x, self.degree() as usize);
        let mut jac = DMatrix::zeros(self.n_out(), self.n_in);
        for (r, p) in self.comps.iter().enumerate() {
            for c in 0..self.n_in {
                jac[(r, c)] = p.derivative(c).eval_with_powers(&powers);
            }
        }
        Ok(jac)
    }

    /// Symbolic Jacobian, entry `(r, c)` is `d comp_r / d x_c`.
    pub fn jacobian_poly(&self) -> Vec<Vec<Poly>> {
        self.comps
            .iter()
            .map(|p| (0..self.n_in).map(|c| p.derivative(c)).collect())
            .collect()
    }

    pub fn homogeneous_part(&self, d: u32) -> PolyMap {
        PolyMap {
            n_in: self.n_in,
            max_degree: self.max_degree,
            comps: self.comps.iter().map(|p| p.homogeneous_part(d)).collect(),
        }
    }

    pub fn truncate(&self, d: u32) -> PolyMap {
        PolyMap {
            n_in: self.n_in,
            max_degree: self.max_degree,
            comps: self.comps.iter().map(|p| p.truncate(d)).collect(),
        }
    }

    pub fn add(&self, other: &PolyMap) -> Result<PolyMap, PolyError> {
        self.same_shape(other)?;
        Ok(PolyMap {
            n_in: self.n_in,
            max_degree: self.max_degree.max(other.max_degree),
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn sub(&self, other: &PolyMap) -> Result<PolyMap, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> PolyMap {
        PolyMap {
            n_in: self.n_in,
            max_degree: self.max_degree,
            comps: self.comps.iter().map(|p| p.scale(k)).collect(),
        }
    }

    fn same_shape(&self, other: &PolyMap) -> Result<(), PolyError> {
        if self.n_in != other.n_in {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_in,
                found: other.n_in,
            });
        }
        if self.n_out() != other.n_out() {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_out(),
                found: other.n_out(),
            });
        }
        Ok(())
    }

    /// `self ∘ phi` with monomials above `truncate_at` dropped.
    pub fn substitute(&self, phi: &PolyMap, truncate_at: u32) -> Result<PolyMap, PolyError> {
        if phi.n_out() != self.n_in {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_in,
                found: phi.n_out(),
            });
        }
        let comps = self.comps.iter().map(|p| p.compose(&phi.comps, truncate_at)).collect();
        Ok(PolyMap {
            n_in: phi.n_in,
            max_degree: truncate_at,
            comps,
        })
    }

    /// `u -> C^{-1} p(C u)`.
    pub fn linear_change(&self, c: &DMatrix<f64>) -> Result<PolyMap, PolyError> {
        let c_inv = checked_inverse(c)?;
        if c.nrows() != self.n_in || self.n_out() != self.n_in {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_in,
                found: c.nrows(),
            });
        }
        let inner = self.substitute(&PolyMap::linear(c, self.max_degree), self.max_degree)?;
        Ok(inner.left_multiply(&c_inv))
    }

    /// Output-side linear combination `x -> M p(x)`.
    pub fn left_multiply(&self, m: &DMatrix<f64>) -> PolyMap {
        assert_eq!(m.ncols(), self.n_out());
        let comps = (0..m.nrows())
            .map(|r| {
                let mut acc = Poly::zero(self.n_in);
                for k in 0..m.ncols() {
                    if m[(r, k)] != 0.0 {
                        acc = acc.add(&self.comps[k].scale(m[(r, k)]));
                    }
                }
                acc
            })
            .collect();
        PolyMap {
            n_in: self.n_in,
            max_degree: self.max_degree,
            comps,
        }
    }

    /// Map `x -> out_scale * p(in_scale * x)`, exact per monomial.
    pub fn rescale(&self, in_scale: f64, out_scale: f64) -> PolyMap {
        let comps = self
            .comps
            .iter()
            .map(|p| {
                let mut q = Poly::zero(self.n_in);
                for (m, c) in p.terms() {
                    q.add_term(m.clone(), c * out_scale * in_scale.powi(m.degree() as i32));
                }
                q
            })
            .collect();
        PolyMap {
            n_in: self.n_in,
            max_degree: self.max_degree,
            comps,
        }
    }

    /// Selects the output components in `idx`.
    pub fn select_outputs(&self, idx: &[usize]) -> PolyMap {
        PolyMap {
            n_in: self.n_in,
            max_degree: self.max_degree,
            comps: idx.iter().map(|&i| self.comps[i].clone()).collect(),
        }
    }

    /// Stacks the outputs of `self` on top of the outputs of `other`.
    pub fn stack(&self, other: &PolyMap) -> Result<PolyMap, PolyError> {
        if self.n_in != other.n_in {
            return Err(PolyError::DimensionMismatch {
                expected: self.n_in,
                found: other.n_in,
            });
        }
        let mut comps = self.comps.clone();
        comps.extend(other.comps.iter().cloned());
        Ok(PolyMap {
            n_in: self.n_in,
            max_degree: self.max_degree.max(other.max_degree),
            comps,
        })
    }

    /// Fixes the last input variable at `value`, dropping it from the domain.
    pub fn fix_last_input(&self, value: f64) -> PolyMap {
        let n = self.n_in - 1;
        let mut phi: Vec<Poly> = (0..n).map(|i| Poly::var(n, i)).collect();
        phi.push(Poly::constant(n, value));
        PolyMap {
            n_in: n,
            max_degree: self.max_degree,
            comps: self.comps.iter().map(|p| p.compose(&phi, self.max_degree)).collect(),
        }
    }

    /// Largest coefficient magnitude.
    pub fn max_abs_coeff(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|p| p.terms().map(|(_, c)| c.abs()))
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for PolyMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (comp, exps, c) in self.terms() {
            let e: Vec<String> = exps.iter().map(u32::to_string).collect();
            writeln!(f, "{} {} {:.17e}", comp + 1, e.join(" "), c)?;
        }
        Ok(())
    }
}

/// Flattened evaluator for hot loops; same values as [`PolyMap::eval`].
#[derive(Clone, Debug)]
pub struct CompiledMap {
    n_in: usize,
    n_out: usize,
    degree: usize,
    // (output, coefficient, factor range into `factors`)
    terms: Vec<(usize, f64, std::ops::Range<usize>)>,
    factors: Vec<(usize, usize)>,
}

impl CompiledMap {
    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    /// Scratch length needed by [`CompiledMap::eval_into`].
    pub fn scratch_len(&self) -> usize {
        self.n_in * (self.degree + 1)
    }

    /// Evaluates into `out`; `scratch` must hold at least `scratch_len()` values.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(out.len(), self.n_out);
        let stride = self.degree + 1;
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut scratch[i * stride..(i + 1) * stride];
            row[0] = 1.0;
            for k in 1..stride {
                row[k] = row[k - 1] * xi;
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for (o, c, range) in &self.terms {
            let mut v = *c;
            for &(var, e) in &self.factors[range.clone()] {
                v *= scratch[var * stride + e];
            }
            out[*o] += v;
        }
    }
}

impl PolyMap {
    pub fn compile(&self) -> CompiledMap {
        let mut terms = Vec::new();
        let mut factors = Vec::new();
        for (o, p) in self.comps.iter().enumerate() {
            for (m, c) in p.terms() {
                let start = factors.len();
                for (var, &e) in m.exponents().iter().enumerate() {
                    if e > 0 {
                        factors.push((var, e as usize));
                    }
                }
                terms.push((o, c, start..factors.len()));
            }
        }
        CompiledMap {
            n_in: self.n_in,
            n_out: self.n_out(),
            degree: self.degree() as usize,
            terms,
            factors,
        }
    }
}

/// Inverse with a condition-number guard.
pub fn checked_inverse(c: &DMatrix<f64>) -> Result<DMatrix<f64>, PolyError> {
    if !c.is_square() {
        return Err(PolyError::DimensionMismatch {
            expected: c.nrows(),
            found: c.ncols(),
        });
    }
    let cond = condition_number(c);
    if !cond.is_finite() {
        return Err(PolyError::Singular);
    }
    if cond >= MAX_CONDITION {
        return Err(PolyError::IllConditioned(cond));
    }
    c.clone().try_inverse().ok_or(PolyError::Singular)
}

/// 2-norm condition number from singular values.
pub fn condition_number(c: &DMatrix<f64>) -> f64 {
    if c.is_empty() {
        return 1.0;
    }
    let sv = c.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Matrix-valued polynomial `R^{n_in} -> R^{rows x cols}`, stored row-major
/// as a [`PolyMap`] with `rows * cols` outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    map: PolyMap,
}

impl PolyMatrix {
    pub fn new(rows: usize, cols: usize, map: PolyMap) -> Result<Self, PolyError> {
        if map.n_out() != rows * cols {
            return Err(PolyError::DimensionMismatch {
                expected: rows * cols,
                found: map.n_out(),
            });
        }
        Ok(PolyMatrix { rows, cols, map })
    }

    pub fn constant(m: &DMatrix<f64>, n_in: usize) -> Self {
        let mut comps = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                comps.push(Poly::constant(n_in, m[(r, c)]));
            }
        }
        PolyMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            map: PolyMap::from_components(n_in, DEFAULT_MAX_DEGREE, comps),
        }
    }

    pub fn zero(rows: usize, cols: usize, n_in: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            map: PolyMap::zero(n_in, rows * cols, DEFAULT_MAX_DEGREE),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_in(&self) -> usize {
        self.map.n_in()
    }

    pub fn map(&self) -> &PolyMap {
        &self.map
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        let v = self.map.eval(x)?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &v))
    }

    /// Row-major evaluation into a caller buffer of length `rows * cols`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), PolyError> {
        self.map.eval_into(x, out)
    }

    pub fn select_rows(&self, r0: usize, r1: usize) -> PolyMatrix {
        let idx: Vec<usize> = (r0 * self.cols..r1 * self.cols).collect();
        PolyMatrix {
            rows: r1 - r0,
            cols: self.cols,
            map: self.map.select_outputs(&idx),
        }
    }

    /// `u -> C^{-1} sigma(C u)`.
    pub fn linear_change(&self, c: &DMatrix<f64>) -> Result<PolyMatrix, PolyError> {
        let c_inv = checked_inverse(c)?;
        if c.nrows() != self.rows || self.rows != self.n_in() {
            return Err(PolyError::DimensionMismatch {
                expected: self.rows,
                found: c.nrows(),
            });
        }
        let md = self.map.max_degree();
        let inner = self.map.substitute(&PolyMap::linear(c, md), md)?;
        // Row-mixing acts on each column separately.
        let mut comps = vec![Poly::zero(self.n_in()); self.rows * self.cols];
        for r in 0..self.rows {
            for col in 0..self.cols {
                let mut acc = Poly::zero(self.n_in());
                for k in 0..self.rows {
                    let w = c_inv[(r, k)];
                    if w != 0.0 {
                        acc = acc.add(&inner.component(k * self.cols + col).scale(w));
                    }
                }
                comps[r * self.cols + col] = acc;
            }
        }
        Ok(PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            map: PolyMap::from_components(self.n_in(), md, comps),
        })
    }

    pub fn rescale(&self, in_scale: f64, out_scale: f64) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            map: self.map.rescale(in_scale, out_scale),
        }
    }
}
