mod common;

use hopf_critic::polyfield::{PolyMap, DEFAULT_MAX_DEGREE};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn arb_map(n_in: usize, n_out: usize, degrees: std::ops::RangeInclusive<u32>) -> impl Strategy<Value = PolyMap> {
    any::<u64>().prop_map(move |seed| {
        let mut r = common::rng(seed);
        common::random_map(&mut r, n_in, n_out, degrees.clone(), 8)
    })
}

fn arb_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #[test]
    fn jacobian_matches_central_differences(p in arb_map(3, 2, 0..=3), x in arb_point(3), v in arb_point(3)) {
        let h = 1e-5;
        let j = p.jacobian(&x).unwrap();
        let plus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let fd = (DVector::from_vec(p.eval(&plus).unwrap()) - DVector::from_vec(p.eval(&minus).unwrap())) / (2.0 * h);
        let jv = &j * DVector::from_vec(v);
        for i in 0..2 {
            prop_assert!((fd[i] - jv[i]).abs() <= 1e-7 * (1.0 + jv[i].abs()));
        }
    }

    #[test]
    fn homogeneous_parts_reconstruct(p in arb_map(3, 2, 0..=4)) {
        let mut sum = PolyMap::zero(3, 2, DEFAULT_MAX_DEGREE);
        for d in 0..=DEFAULT_MAX_DEGREE {
            sum = sum.add(&p.homogeneous_part(d)).unwrap();
        }
        prop_assert!(sum.sub(&p).unwrap().max_abs_coeff() < 1e-15);
    }

    #[test]
    fn homogeneous_part_is_idempotent_and_additive(p in arb_map(2, 2, 0..=4), q in arb_map(2, 2, 0..=4), d in 0u32..=4) {
        let hp = p.homogeneous_part(d);
        prop_assert_eq!(hp.homogeneous_part(d), hp.clone());
        let lhs = p.add(&q).unwrap().homogeneous_part(d);
        let rhs = hp.add(&q.homogeneous_part(d)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs_coeff() < 1e-15);
    }

    #[test]
    fn substitution_is_associative(p in arb_map(2, 2, 1..=2), phi in arb_map(2, 2, 1..=2), psi in arb_map(2, 2, 1..=2)) {
        let left = p.substitute(&phi, 4).unwrap().substitute(&psi, 4).unwrap();
        let right = p.substitute(&phi.substitute(&psi, 4).unwrap(), 4).unwrap();
        prop_assert!(left.sub(&right).unwrap().max_abs_coeff() < 1e-12);
    }

    #[test]
    fn affine_round_trip(p in arb_map(3, 2, 0..=4), seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let a = common::random_basis(&mut r, 3);
        let b = common::random_matrix(&mut r, 3, 1) * 0.5;
        let a_inv = a.clone().try_inverse().unwrap();
        // φ(x) = A x + b, φ⁻¹(u) = A⁻¹(u - b)
        let affine = |m: &DMatrix<f64>, c: &DMatrix<f64>| {
            let mut t = Vec::new();
            for i in 0..3 {
                t.push((i, vec![0, 0, 0], c[(i, 0)]));
                for j in 0..3 {
                    let mut e = vec![0, 0, 0];
                    e[j] = 1;
                    t.push((i, e, m[(i, j)]));
                }
            }
            PolyMap::from_terms(3, 3, 4, t).unwrap()
        };
        let phi = affine(&a, &b);
        let phi_inv = affine(&a_inv, &(-(&a_inv * &b)));
        let back = p.substitute(&phi, 4).unwrap().substitute(&phi_inv, 4).unwrap();
        prop_assert!(back.sub(&p).unwrap().max_abs_coeff() < 1e-12);
    }

    #[test]
    fn linear_change_commutes_with_evaluation(p in arb_map(3, 3, 0..=3), x in arb_point(3), seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let c = common::random_orthogonal(&mut r, 3);
        let changed = p.linear_change(&c).unwrap();
        let cx = &c * DVector::from_vec(x.clone());
        let direct = c.transpose() * DVector::from_vec(p.eval(cx.as_slice()).unwrap());
        let via = DVector::from_vec(changed.eval(&x).unwrap());
        prop_assert!((direct - via).amax() < 1e-12);
    }

    #[test]
    fn compiled_evaluation_agrees(p in arb_map(3, 2, 0..=4), x in arb_point(3)) {
        let c = p.compile();
        let mut out = vec![0.0; 2];
        let mut scratch = vec![0.0; c.scratch_len()];
        c.eval_into(&x, &mut out, &mut scratch);
        let direct = p.eval(&x).unwrap();
        for i in 0..2 {
            prop_assert!((out[i] - direct[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn terms_are_canonical(p in arb_map(3, 2, 0..=4)) {
        let t = p.terms();
        for w in t.windows(2) {
            prop_assert!(w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 != w[1].1));
        }
        prop_assert!(t.iter().all(|(_, e, c)| e.iter().sum::<u32>() <= 4 && c.abs() >= 1e-15));
        prop_assert_eq!(PolyMap::from_terms(3, 2, 4, t).unwrap(), p);
    }
}

#[test]
fn zero_evaluation_returns_constants() {
    let mut r = common::rng(5);
    for _ in 0..20 {
        let p = common::random_map(&mut r, 3, 2, 0..=4, 10);
        let at0 = p.eval(&[0.0; 3]).unwrap();
        let consts = p.homogeneous_part(0).eval(&[1.0; 3]).unwrap();
        assert_eq!(at0, consts);
    }
}
