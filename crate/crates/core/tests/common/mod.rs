#![allow(dead_code)]

use hopf_critic::polyfield::{PolyMap, PolyMatrix};
use hopf_critic::spectral::rotation_block;
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// `terms` random monomials with total degree in `degrees`.
pub fn random_map(
    rng: &mut StdRng,
    n_in: usize,
    n_out: usize,
    degrees: std::ops::RangeInclusive<u32>,
    terms: usize,
) -> PolyMap {
    let mut t = Vec::new();
    for _ in 0..terms {
        let d = rng.random_range(degrees.clone());
        let mut e = vec![0u32; n_in];
        for _ in 0..d {
            e[rng.random_range(0..n_in)] += 1;
        }
        t.push((rng.random_range(0..n_out), e, rng.random_range(-1.0..1.0)));
    }
    PolyMap::from_terms(n_in, n_out, 4, t).unwrap()
}

pub fn random_matrix(rng: &mut StdRng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Random orthogonal matrix from the QR factor of a Gaussian-ish matrix.
pub fn random_orthogonal(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    random_matrix(rng, n, n).qr().q()
}

/// Random real matrix with spectral abscissa `-margin`.
pub fn random_stable(rng: &mut StdRng, k: usize, margin: f64) -> DMatrix<f64> {
    let m = random_matrix(rng, k, k) * 2.0;
    if k == 0 {
        return m;
    }
    let abscissa = m
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    m - DMatrix::identity(k, k) * (abscissa + margin)
}

/// Well-conditioned random basis `I + 0.3 R`.
pub fn random_basis(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) + random_matrix(rng, n, n) * 0.3
}

/// `blockdiag(λ0 J, P)`.
pub fn block(lambda0: f64, p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = 2 + p.nrows();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (2, 2)).copy_from(&rotation_block(lambda0));
    a.view_mut((2, 2), (p.nrows(), p.nrows())).copy_from(p);
    a
}

/// Drift in the plane `(-z2 + μ z1 - z1|z|², z1 + μ z2 - z2|z|²)`, with μ as input 3.
pub fn normal_form_with_mu() -> PolyMap {
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

/// The planar cubic `-z|z|²`.
pub fn unit_cubic() -> PolyMap {
    PolyMap::from_terms(
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
    .unwrap()
}

pub fn constant_sigma(m: &DMatrix<f64>) -> PolyMatrix {
    PolyMatrix::constant(m, m.nrows())
}

/// `n = 3` system with normal-form cubic, `g = z1²`, `P = [-1]`, plus a
/// `y²` term in the first critical component when `y_coupling != 0`.
pub fn three_dim_system(y_coupling: f64) -> PolyMap {
    let mut t = vec![
        (0, vec![0, 1, 0, 0], -1.0),
        (0, vec![1, 0, 0, 1], 1.0),
        (0, vec![3, 0, 0, 0], -1.0),
        (0, vec![1, 2, 0, 0], -1.0),
        (1, vec![1, 0, 0, 0], 1.0),
        (1, vec![0, 1, 0, 1], 1.0),
        (1, vec![2, 1, 0, 0], -1.0),
        (1, vec![0, 3, 0, 0], -1.0),
        (2, vec![0, 0, 1, 0], -1.0),
        (2, vec![2, 0, 0, 0], 1.0),
    ];
    if y_coupling != 0.0 {
        t.push((0, vec![0, 0, 2, 0], y_coupling));
    }
    PolyMap::from_terms(4, 3, 4, t).unwrap()
}
