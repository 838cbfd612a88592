mod common;

use hopf_critic::normalform::CenterManifold2;
use hopf_critic::polyfield::{PolyMap, PolyMatrix};
use hopf_critic::sde::*;
use hopf_critic::spectral::Tolerances;
use hopf_critic::HopfSystem;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn planar_system(sigma: PolyMatrix) -> hopf_critic::PreparedSystem {
    HopfSystem::new(common::normal_form_with_mu(), sigma, true)
        .unwrap()
        .prepare(&Tolerances::default())
        .unwrap()
}

#[test]
fn ou_variance_matches_closed_form() {
    let drift = PolyMap::linear(&DMatrix::from_element(1, 1, -1.0), 4);
    let sigma = PolyMatrix::constant(&DMatrix::from_element(1, 1, 1.0), 1);
    let finals = run_ensemble(10_000, 0, |i| {
        let p = euler_maruyama(&drift, &sigma, &[0.0], 1e-3, 2.0, &mut NoiseStream::new(42, i, 1)).unwrap();
        p.last()[0]
    });
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let exact = (1.0 - (-4.0f64).exp()) / 2.0;
    let se = exact * (2.0 / (n - 1.0)).sqrt();
    assert!((var - exact).abs() < 3.0 * se, "{var} vs {exact} (se {se})");
}

#[test]
fn unit_epsilon_matches_direct_euler_maruyama() {
    let sys = planar_system(common::constant_sigma(&DMatrix::identity(2, 2)));
    let ts = &sys.transformed;
    let drift = ts.drift();
    let sigma = ts.diffusion();
    for dt in [1e-3, 5e-4] {
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            let a = simulate_rescaled(ts, 1.0, &[1.0, 0.0], dt, 1.0, &mut NoiseStream::new(3, i, 2)).unwrap();
            let b = euler_maruyama(&drift, &sigma, &[1.0, 0.0], dt, 1.0, &mut NoiseStream::new(3, i, 2)).unwrap();
            worst = worst.max(
                a.last()
                    .iter()
                    .zip(b.last())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max),
            );
        }
        assert!(worst < 5.0 * dt, "dt {dt}: {worst}");
    }
}

#[test]
fn fast_phase_rate() {
    let sys = planar_system(common::constant_sigma(&DMatrix::identity(2, 2)));
    let eps = 1e-4;
    let sim = RescaledSimulator::new(&sys.transformed, eps, 1e-3, 1.0).unwrap();
    let rates = run_ensemble(50, 0, |i| {
        let p = sim.run(&[1.0, 0.0], &mut NoiseStream::new(9, i, 2)).unwrap();
        to_polar(&p, 1e-9, 1e9).unwrap().mean_phase_rate()
    });
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    assert!((mean / eps.powf(-0.5) - 1.0).abs() < 0.05, "{mean}");
}

#[test]
fn reduced_process_equals_full_process_in_the_plane() {
    let sigma = PolyMatrix::new(
        2,
        2,
        PolyMap::from_terms(
            2,
            4,
            4,
            vec![
                (0, vec![0, 0], 1.0),
                (0, vec![2, 0], 0.5),
                (3, vec![0, 0], 1.0),
                (2, vec![1, 1], 0.3),
            ],
        )
        .unwrap(),
    )
    .unwrap();
    let sys = planar_system(sigma);
    let ts = &sys.transformed;
    let none = CenterManifold2 {
        h2: PolyMap::zero(2, 0, 4),
        residual: 0.0,
    };
    for i in 0..5 {
        let full = simulate_rescaled(ts, 1e-2, &[1.0, 0.0], 1e-3, 1.0, &mut NoiseStream::new(4, i, 2)).unwrap();
        let red = simulate_reduced(
            ts.lambda0(),
            &ts.f,
            &ts.sigma_q,
            &none,
            1e-2,
            [1.0, 0.0],
            1e-3,
            1.0,
            &mut NoiseStream::new(4, i, 2),
        )
        .unwrap();
        assert_eq!(full.states, red.states);
    }
    let a = simulate_rescaled(ts, 1e-2, &[1.0, 0.0], 1e-3, 1.0, &mut NoiseStream::new(4, 0, 2)).unwrap();
    let b = simulate_rescaled(ts, 1e-2, &[1.0, 0.0], 1e-3, 1.0, &mut NoiseStream::new(4, 1, 2)).unwrap();
    assert_ne!(a.states, b.states);
}

#[test]
fn reduced_process_exists_globally() {
    let sys = planar_system(common::constant_sigma(&DMatrix::identity(2, 2)));
    let ts = &sys.transformed;
    let sim = RescaledSimulator::reduced(
        ts.lambda0(),
        &ts.f,
        &ts.sigma_q,
        &sys.normal_form.center_manifold,
        1e-2,
        1e-3,
        10.0,
    )
    .unwrap();
    let stopped = run_ensemble(1000, 0, |i| {
        sim.run(&[1.0, 0.0], &mut NoiseStream::new(5, i, 2))
            .unwrap()
            .stop
            .is_some()
    });
    assert!(stopped.iter().all(|s| !s));
}

#[test]
fn noise_moments() {
    let dt = 0.01;
    let mut s = NoiseStream::new(77, 0, 4);
    let mut buf = [0.0; 4];
    let mut sum = 0.0;
    let mut sq = 0.0;
    let n = 250_000;
    for k in 0..n {
        s.increments(k, dt, &mut buf);
        for v in buf {
            sum += v;
            sq += v * v;
        }
    }
    let count = (4 * n) as f64;
    let mean = sum / count;
    let var = sq / count - mean * mean;
    assert!(mean.abs() < 4.0 * (dt / count).sqrt(), "{mean}");
    assert!((var - dt).abs() < 4.0 * dt * (2.0 / count).sqrt(), "{var}");
}

#[test]
fn distinct_paths_are_uncorrelated() {
    let n = 100_000;
    let draw = |path: u64| {
        let mut s = NoiseStream::new(8, path, 1);
        let mut out = Vec::with_capacity(n);
        let mut b = [0.0];
        for k in 0..n as u64 {
            s.increments(k, 1.0, &mut b);
            out.push(b[0]);
        }
        out
    };
    let a = draw(0);
    let b = draw(1);
    let corr = |x: &[f64], y: &[f64]| {
        let m = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
        let cov: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
        let vx: f64 = x.iter().map(|u| (u - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    };
    let bound = 4.0 / (n as f64).sqrt();
    assert!(corr(&a, &b).abs() < bound);
    assert!(corr(&a[1..], &a[..n - 1]).abs() < bound);
    assert!(corr(&a[1..], &b[..n - 1]).abs() < bound);
}

fn ensemble(seed: u64, workers: usize) -> PathEnsemble {
    let sys = planar_system(common::constant_sigma(&DMatrix::identity(2, 2)));
    let sim = RescaledSimulator::new(&sys.transformed, 1e-2, 1e-3, 0.5).unwrap();
    let paths = run_ensemble(16, workers, |i| {
        sim.run(&[1.0, 0.0], &mut NoiseStream::new(seed, i, 2)).unwrap()
    });
    PathEnsemble {
        master_seed: seed,
        dt: 1e-3,
        columns: vec!["z1".into(), "z2".into()],
        paths,
    }
}

#[test]
fn ensembles_do_not_depend_on_worker_count() {
    let one = ensemble(10, 1);
    assert_eq!(one.digest(), ensemble(10, 8).digest());
    assert_ne!(one.digest(), ensemble(11, 1).digest());
    let single = {
        let sys = planar_system(common::constant_sigma(&DMatrix::identity(2, 2)));
        simulate_rescaled(
            &sys.transformed,
            1e-2,
            &[1.0, 0.0],
            1e-3,
            0.5,
            &mut NoiseStream::new(10, 0, 2),
        )
        .unwrap()
    };
    assert_eq!(one.paths[0], single);
}

#[test]
fn limit_marginal_ignores_initial_phase() {
    // The limit radius started from (1, 0) against the planar process
    // dZ = -Z|Z|² dt + dB started from (0, 1), run separately.
    let lp = LimitParams::identity();
    let a = run_ensemble(4000, 0, |i| {
        simulate_limit(&lp, 1.0, 1e-3, 1.0, &mut NoiseStream::new(1, i, 2))
            .unwrap()
            .last()[0]
    });
    let cubic = common::unit_cubic();
    let sim = RescaledSimulator::from_parts(
        1e-12,
        &DMatrix::zeros(0, 0),
        &cubic,
        &common::constant_sigma(&DMatrix::identity(2, 2)),
        1.0,
        1e-3,
        1.0,
    )
    .unwrap();
    let b = run_ensemble(4000, 0, |i| {
        let p = sim.run(&[0.0, 1.0], &mut NoiseStream::new(2, i, 2)).unwrap();
        p.last()[0].hypot(p.last()[1])
    });
    let ks = hopf_critic::stats::ks_distance(&a, &b).unwrap();
    assert!(ks < 1.36 * (2.0f64 / 4000.0).sqrt(), "{ks}");
}

proptest! {
    #[test]
    fn polar_round_trip(seed in any::<u64>()) {
        let sys_sigma = common::constant_sigma(&DMatrix::identity(2, 2));
        let sim = RescaledSimulator::from_parts(1.0, &DMatrix::zeros(0, 0), &common::unit_cubic(), &sys_sigma, 1e-2, 1e-3, 0.2).unwrap();
        let p = sim.run(&[1.0, 0.5], &mut NoiseStream::new(seed, 0, 2)).unwrap();
        let pol = to_polar(&p, 1e-3, 1e3).unwrap();
        let end = pol.stop.map_or(p.steps(), |(k, _)| k);
        for k in 0..=end {
            let s = p.state(k);
            prop_assert!((pol.rho[k] * pol.theta[k].cos() - s[0]).abs() < 1e-12);
            prop_assert!((pol.rho[k] * pol.theta[k].sin() - s[1]).abs() < 1e-12);
            if k > 0 {
                prop_assert!((pol.theta[k] - pol.theta[k - 1]).abs() < std::f64::consts::PI);
            }
        }
    }
}
