//! Acceptance suite. One PASS/FAIL line per criterion; exits non-zero if
//! any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::PathBuf;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use hopf_critic::normalform::{analyze, basis_len, invariance_defect, quadratic_z_residue, solve_quadratic};
use hopf_critic::polyfield::{PolyMap, PolyMatrix};
use hopf_critic::sde::{to_polar, LimitParams, NoiseStream, RescaledSimulator};
use hopf_critic::spectral::{hopf_split, transform_system, Tolerances, TransformedSystem, C64};
use hopf_critic::stats::{
    averaged_diffusion, averaged_drift, convergence_study, phase_average, radial_diffusion_pre_average,
    radial_drift_pre_average, reduction_diagnostics, stationary_check, ReductionReport, StationaryConfig,
};
use hopf_critic::PreparedSystem;
use hopf_critic_cli::{convergence_config, parse_config, reduction_config};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::Rng;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn timed<F: FnOnce() -> (bool, String)>(id: u32, name: &'static str, budget_s: u64, f: F) -> Verdict {
    let t0 = Instant::now();
    let (ok, detail) = f();
    let elapsed = t0.elapsed();
    let budget = Duration::from_secs(budget_s);
    Verdict {
        id,
        name,
        pass: ok && elapsed < budget,
        detail,
        elapsed,
        budget,
    }
}

fn cli_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn load(name: &str) -> (hopf_critic_cli::ExperimentConfig, PreparedSystem) {
    let text = fs::read_to_string(cli_dir().join("configs").join(name)).expect("golden config");
    let cfg = parse_config(&text).expect("golden config parses");
    let sys = cfg
        .to_system()
        .expect("system")
        .prepare(&Tolerances::default())
        .expect("hypotheses hold");
    (cfg, sys)
}

fn random_system(r: &mut StdRng, n: usize) -> TransformedSystem {
    let lambda0 = r.random_range(0.5..3.0);
    let margin = r.random_range(0.3..2.0);
    let p = common::random_stable(r, n - 2, margin);
    let b = common::random_basis(r, n);
    let a = &b * common::block(lambda0, &p) * b.clone().try_inverse().expect("invertible basis");
    let drift = PolyMap::linear(&a, 4)
        .add(&common::random_map(r, n, n, 2..=3, 12))
        .expect("same shape");
    let split = hopf_split(&a, &Tolerances::default()).expect("split");
    transform_system(&drift, &PolyMatrix::constant(&DMatrix::identity(n, n), n), &split).expect("transform")
}

fn homological_solves() -> (bool, String) {
    let mut r = common::rng(1001);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let k = r.random_range(0..=6);
        let lambda0 = r.random_range(0.1..10.0);
        let margin = r.random_range(0.05..2.0);
        let p = common::random_stable(&mut r, k, margin);
        let f: Vec<C64> = (0..basis_len(k))
            .map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
            .collect();
        match solve_quadratic(lambda0, &p, &f) {
            Ok(t) => worst = worst.max(t.residual),
            Err(_) => failures += 1,
        }
    }
    (
        failures == 0 && worst < 1e-10,
        format!("max residual {worst:.2e} < 1e-10, singular {failures}/200"),
    )
}

fn quadratic_cancellation() -> (bool, String) {
    let mut r = common::rng(1002);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let ts = random_system(&mut r, 3 + case % 3);
        let nf = analyze(&ts).expect("normal form");
        worst = worst.max(quadratic_z_residue(&nf.f_prime));
    }
    (worst < 1e-9, format!("max z-quadratic coefficient {worst:.2e} < 1e-9"))
}

fn tangency() -> (bool, String) {
    let mut r = common::rng(1003);
    let mut systems: Vec<TransformedSystem> = (0..10).map(|_| random_system(&mut r, 4)).collect();
    systems.push(load("slow_fast3.cfg").1.transformed);
    let mut worst_residual: f64 = 0.0;
    let mut worst_slope = f64::INFINITY;
    for ts in &systems {
        let nf = analyze(ts).expect("normal form");
        worst_residual = worst_residual.max(nf.center_manifold.residual);
        let defects: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|s| {
                invariance_defect(
                    ts.lambda0(),
                    &ts.split.p,
                    &nf.f_prime,
                    &nf.g_prime,
                    &nf.center_manifold,
                    [0.6 * s, 0.8 * s],
                )
            })
            .collect();
        let slope = (defects[0].ln() - defects[2].ln()) / (1e-1f64.ln() - 1e-3f64.ln());
        worst_slope = worst_slope.min(slope);
    }
    (
        worst_residual < 1e-10 && worst_slope >= 2.7,
        format!("order-2 residual {worst_residual:.2e} < 1e-10, min slope {worst_slope:.3} >= 2.7"),
    )
}

fn averaging() -> (bool, String) {
    let mut r = common::rng(1004);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = r.random_range(1..=4);
        let p = LimitParams::new(common::random_matrix(&mut r, 2, m) * 2.0).expect("2 x m");
        for eta in [0.5, 1.0, 2.0] {
            let q = phase_average(1024, |phi| radial_drift_pre_average(&p, eta, phi));
            worst = worst.max((q - averaged_drift(&p, eta).expect("positive radius")).abs());
        }
        let w = phase_average(1024, |phi| radial_diffusion_pre_average(&p, phi));
        worst = worst.max((w - averaged_diffusion(&p)).abs());
        worst = worst.max((w - p.s * p.s).abs());
    }
    (worst < 1e-12, format!("max quadrature gap {worst:.2e} < 1e-12"))
}

fn weak_convergence() -> (bool, String) {
    let (cfg, sys) = load("planar.cfg");
    let rep = convergence_study(&sys, &convergence_config(&cfg, 0)).expect("study");
    let ks: Vec<f64> = rep.rows.iter().map(|r| r.ks).collect();
    let decreasing = rep.ks_decreasing().iter().all(|(_, ok)| *ok);
    let last = rep.row(1e-3, 1.0).map_or(f64::NAN, |r| r.ks);
    let shift = rep.max_dt_shift().unwrap_or(f64::NAN);
    let golden = fs::read_to_string(cli_dir().join("tests/golden/planar_convergence.digest")).expect("golden digest");
    let digest_ok = golden.trim() == rep.digest();
    (
        decreasing && last < 0.05 && shift < 0.01 && digest_ok && !rep.unreliable,
        format!(
            "KS {:.4} > {:.4} > {:.4}, KS(1e-3) {last:.4} < 0.05, dt/2 shift {shift:.4} < 0.01, golden digest {}",
            ks[0],
            ks[1],
            ks[2],
            if digest_ok { "matches" } else { "differs" }
        ),
    )
}

fn reduction_study() -> ReductionReport {
    let (cfg, sys) = load("slow_fast3.cfg");
    reduction_diagnostics(&sys, &reduction_config(&cfg, 0)).expect("study")
}

fn stable_error(rep: &ReductionReport) -> (bool, String) {
    let hi = rep.row(1e-2).map_or(f64::NAN, |r| r.u_median);
    let lo = rep.row(1e-4).map_or(f64::NAN, |r| r.u_median);
    let ratio = hi / lo;
    (
        ratio >= 1.5,
        format!("median U {hi:.3e} at 1e-2 / {lo:.3e} at 1e-4 = {ratio:.2} >= 1.5"),
    )
}

fn planar_error(rep: &ReductionReport) -> (bool, String) {
    let phi: Vec<f64> = rep.rows.iter().map(|r| r.phi_median).collect();
    let ok = phi.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = phi.iter().map(|p| format!("{p:.3e}")).collect();
    (ok, format!("median Phi {} strictly decreasing", shown.join(" > ")))
}

fn stationary() -> (bool, String) {
    let rep = stationary_check(&LimitParams::identity(), &StationaryConfig::default()).expect("stationary run");
    (
        rep.w1 < 0.02,
        format!("W1 {:.4} < 0.02 over {} samples", rep.w1, rep.samples),
    )
}

fn fast_phase() -> (bool, String) {
    let (_, sys) = load("unit_noise.cfg");
    let eps = 1e-4;
    let sim = RescaledSimulator::new(&sys.transformed, eps, 1e-3, 1.0).expect("simulator");
    let x0 = sys.initial_state(1.0);
    let target = eps.powf(-0.5) * sys.transformed.lambda0();
    let paths = 100;
    let rates: Vec<f64> = (0..paths)
        .map(|i| {
            let p = sim.run(&x0, &mut NoiseStream::new(9, i, sim.channels())).expect("path");
            to_polar(&p, 1e-12, 1e12).expect("planar").mean_phase_rate()
        })
        .collect();
    let mean = rates.iter().sum::<f64>() / paths as f64;
    let rel = (mean - target).abs() / target;
    let worst = rates.iter().map(|r| (r - target).abs() / target).fold(0.0, f64::max);
    (
        rel < 0.05,
        format!("mean rate {mean:.3} vs {target:.1}, relative error {rel:.4} < 0.05 (worst path {worst:.4})"),
    )
}

fn determinism() -> (bool, String) {
    let cfg = cli_dir().join("configs/planar.cfg");
    let tmp = std::env::temp_dir().join(format!("hopf-critic-acceptance-{}", std::process::id()));
    let run = |workers: &str| -> Option<Vec<u8>> {
        let out = tmp.join(format!("w{workers}"));
        let status = Process::new(env!("CARGO_BIN_EXE_hopf-critic"))
            .args(["converge", "--config"])
            .arg(&cfg)
            .args(["--workers", workers, "--plot", "false", "--out"])
            .arg(&out)
            .output()
            .ok()?;
        status
            .status
            .success()
            .then(|| fs::read(out.join("convergence.csv")).ok())
            .flatten()
    };
    let a = run("1");
    let b = run("2");
    let golden = fs::read(cli_dir().join("tests/golden/planar_convergence.csv")).ok();
    let _ = fs::remove_dir_all(&tmp);
    let same = a.is_some() && a == b;
    let matches_golden = same && a == golden;
    (
        same && matches_golden,
        format!("workers 1 vs 2 byte-identical: {same}, matches golden CSV: {matches_golden}"),
    )
}

fn main() {
    // Criteria 6 and 7 share one coupled run.
    let mut reduction: Option<ReductionReport> = None;
    let mut verdicts = vec![
        timed(1, "homological equation", 5, homological_solves),
        timed(2, "quadratic cancellation", 10, quadratic_cancellation),
        timed(3, "center-manifold tangency", 5, tangency),
        timed(4, "averaging identities", 2, averaging),
        timed(5, "weak convergence", 300, weak_convergence),
    ];
    verdicts.push(timed(6, "stable-direction error", 180, || {
        let rep = reduction_study();
        let v = stable_error(&rep);
        reduction = Some(rep);
        v
    }));
    let rep = reduction.expect("criterion 6 ran");
    verdicts.push(timed(7, "planar approximation error", 180, || planar_error(&rep)));
    verdicts.push(timed(8, "stationary density", 120, stationary));
    verdicts.push(timed(9, "fast phase", 30, fast_phase));
    verdicts.push(timed(10, "determinism", 60, determinism));

    for v in &verdicts {
        println!(
            "{} [{:>2}] {}: {} ({:.2} s, budget {} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.id,
            v.name,
            v.detail,
            v.elapsed.as_secs_f64(),
            v.budget.as_secs()
        );
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
