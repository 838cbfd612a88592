//! Subcommands: build the system from a config, run one study, write
//! artifacts and a manifest into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use hopf_critic::normalform::quadratic_z_residue;
use hopf_critic::polyfield::{PolyError, PolyMap};
use hopf_critic::sde::{
    derive_seed, run_ensemble, simulate_limit, to_polar, NoiseStream, PathEnsemble, RescaledSimulator, SdeError,
    StopReason,
};
use hopf_critic::spectral::{HypothesisReport, Tolerances};
use hopf_critic::stats::{
    convergence_study, reduction_diagnostics, ConvergenceConfig, ConvergenceReport, ConvergenceRow, ReductionConfig,
    ReductionReport, StatsError, QUADRATIC_TOL,
};
use hopf_critic::system::SystemError;
use hopf_critic::{PreparedSystem, VERSION as CORE_VERSION};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{parse_config, ConfigErrors, ExperimentConfig};
use crate::svg::{log_log_plot, Series};

/// Default worker count when neither the config nor a flag sets one.
pub const WORKERS_ENV: &str = "HOPF_CRITIC_WORKERS";

const SIMULATE_TAG: u64 = 0x5349_4D55;
const SIMULATE_LIMIT_TAG: u64 = 0x5349_4D4C;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    NormalForm,
    Simulate,
    Converge,
    Reduce,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::NormalForm => "normal-form",
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::Reduce => "reduce",
            Command::Report => "report",
        }
    }
}

/// Flag values that replace config keys one for one.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub halve_dt: Option<bool>,
    pub plot: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(ConfigErrors),
    #[error("hypotheses do not hold: {0}")]
    Hypotheses(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Manifest(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Hypotheses(_) => "hypotheses",
            CliError::Invalid(_) => "invalid-input",
            CliError::Manifest(_) => "manifest",
            CliError::Runtime(_) => "runtime",
            CliError::Io { .. } => "io",
        }
    }

    /// 1 for anything the input can fix, 2 otherwise.
    pub fn exit_status(&self) -> i32 {
        match self {
            CliError::Runtime(_) | CliError::Io { .. } => 2,
            _ => 1,
        }
    }
}

impl From<SystemError> for CliError {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::HypothesesFailed(s) => CliError::Hypotheses(s),
            SystemError::Poly(_) => CliError::Runtime(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Poly(_) | StatsError::Sde(SdeError::Poly(_)) => CliError::Runtime(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<SdeError> for CliError {
    fn from(e: SdeError) -> Self {
        StatsError::Sde(e).into()
    }
}

impl From<PolyError> for CliError {
    fn from(e: PolyError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// What a successful run produced.
#[derive(Debug)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
    /// A verdict came out false (hypotheses, study checks). Exit status 1.
    pub failed: bool,
}

/// Reads a config file, or the effective config embedded in a manifest.
pub fn load_source(config: Option<&Path>, manifest: Option<&Path>) -> Result<(String, String), CliError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| CliError::Io {
            context: format!("reading {}", p.display()),
            source,
        })
    };
    match (config, manifest) {
        (Some(p), None) => Ok((read(p)?, p.display().to_string())),
        (None, Some(p)) => {
            let v: Value =
                serde_json::from_str(&read(p)?).map_err(|e| CliError::Manifest(format!("{}: {e}", p.display())))?;
            let text = v["effective_config"]
                .as_str()
                .ok_or_else(|| CliError::Manifest(format!("{}: no effective_config", p.display())))?;
            if v["effective_config_sha256"].as_str() != Some(sha256_hex(text.as_bytes()).as_str()) {
                return Err(CliError::Manifest(format!(
                    "{}: effective_config hash mismatch",
                    p.display()
                )));
            }
            Ok((text.to_string(), p.display().to_string()))
        }
        _ => Err(CliError::Invalid("give exactly one of --config and --manifest".into())),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `text`, applies `ov` and validates the result.
pub fn effective_config(text: &str, ov: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = parse_config(text).map_err(CliError::Config)?;
    let r = &mut cfg.run;
    if let Some(v) = ov.paths {
        r.paths = v;
    }
    if let Some(v) = ov.seed {
        r.seed = v;
    }
    if let Some(v) = ov.workers {
        r.workers = Some(v);
    }
    if let Some(v) = ov.dt {
        r.dt = v;
    }
    if let Some(v) = ov.t_end {
        r.t_end = v;
    }
    if let Some(v) = &ov.epsilons {
        r.epsilons = v.clone();
    }
    if let Some(v) = ov.halve_dt {
        r.halve_dt = v;
    }
    if let Some(v) = &ov.out {
        cfg.output.dir = v.clone();
    }
    if let Some(v) = ov.plot {
        cfg.output.plot = v;
    }
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(ConfigErrors(errors)))
    }
}

fn resolve_workers(cfg: &ExperimentConfig) -> Result<usize, CliError> {
    if let Some(w) = cfg.run.workers {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("{WORKERS_ENV}={v} is not a worker count"))),
        Err(_) => Ok(0),
    }
}

/// Files written by one run, with their hashes.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io {
            context: format!("writing {}", path.display()),
            source,
        })?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    workers: usize,
    out: Artifacts,
    summary: String,
    failed: bool,
}

impl Ctx<'_> {
    fn say(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }
}

/// Runs `cmd` on config `text`. `origin` is recorded in the manifest.
pub fn run(cmd: Command, text: &str, origin: &str, ov: &Overrides) -> Result<Outcome, CliError> {
    let cfg = effective_config(text, ov)?;
    let workers = resolve_workers(&cfg)?;
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        context: format!("creating {}", dir.display()),
        source,
    })?;
    let mut ctx = Ctx {
        cfg: &cfg,
        workers,
        out: Artifacts { dir, files: Vec::new() },
        summary: String::new(),
        failed: false,
    };
    match cmd {
        Command::Check => {
            check(&mut ctx)?;
        }
        Command::NormalForm => {
            normal_form(&mut ctx)?;
        }
        Command::Simulate => simulate(&mut ctx, &prepare(&cfg)?)?,
        Command::Converge => {
            converge(&mut ctx, &prepare(&cfg)?)?;
        }
        Command::Reduce => {
            reduce(&mut ctx, &prepare(&cfg)?)?;
        }
        Command::Report => report(&mut ctx)?,
    }

    let effective = cfg.to_text();
    let manifest = json!({
        "tool": "hopf-critic",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": CORE_VERSION,
        "subcommand": cmd.name(),
        "config_origin": origin,
        "config_sha256": sha256_hex(text.as_bytes()),
        "effective_config": effective,
        "effective_config_sha256": sha256_hex(effective.as_bytes()),
        "seed": cfg.run.seed,
        "workers": workers,
        "outputs": ctx.out.files.iter().map(|(f, h)| json!({"file": f, "sha256": h})).collect::<Vec<_>>(),
    });
    let manifest_name = format!("manifest-{}.json", cmd.name());
    ctx.out.json(&manifest_name, &manifest)?;
    let artifacts = ctx.out.files.iter().map(|(f, _)| ctx.out.dir.join(f)).collect();
    Ok(Outcome {
        summary: ctx.summary,
        artifacts,
        failed: ctx.failed,
    })
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn prepare(cfg: &ExperimentConfig) -> Result<PreparedSystem, CliError> {
    Ok(cfg.to_system()?.prepare(&tol())?)
}

/// `"true"`/numbers become JSON booleans/numbers, everything else a string.
fn typed(v: &str) -> Value {
    match v {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Value::from)
            .unwrap_or_else(|| Value::String(v.to_string())),
    }
}

fn check(ctx: &mut Ctx) -> Result<HypothesisReport, CliError> {
    let report = ctx.cfg.to_system()?.check(&tol())?;
    let records = report.records();
    let mut text = String::new();
    for (k, v) in &records {
        let _ = writeln!(text, "{k} = {v}");
    }
    text.push_str(&format!("all_hold = {}\n", report.all_hold()));
    ctx.out.write("hypotheses.txt", text.as_bytes())?;
    if ctx.cfg.output.json() {
        let mut obj = serde_json::Map::new();
        for (k, v) in &records {
            obj.insert(k.clone(), typed(v));
        }
        obj.insert("all_hold".into(), Value::Bool(report.all_hold()));
        ctx.out.json("hypotheses.json", &Value::Object(obj))?;
    }
    for (k, v) in records
        .iter()
        .filter(|(k, _)| k.starts_with('H') || k == "supercritical")
    {
        ctx.say(format!("{k:<14} {v}"));
    }
    if !report.all_hold() {
        ctx.failed = true;
    }
    Ok(report)
}

fn terms_json(p: &PolyMap) -> Value {
    Value::Array(
        p.terms()
            .into_iter()
            .map(|(c, e, v)| json!({"component": c + 1, "exponents": e, "coefficient": v}))
            .collect(),
    )
}

fn normal_form(ctx: &mut Ctx) -> Result<PreparedSystem, CliError> {
    let sys = ctx.cfg.to_system()?;
    let report = sys.check(&tol())?;
    let holds = report.all_hold();
    let prep = sys.prepare_unchecked(report, &tol())?;
    let nf = &prep.normal_form;
    let ts = &prep.transformed;
    let c = |z: &hopf_critic::spectral::C64| format!("{:.17e}{:+.17e}i", z.re, z.im);

    let mut t = String::new();
    let _ = writeln!(t, "hypotheses_hold = {holds}");
    let _ = writeln!(t, "lambda0 = {:.17e}", ts.lambda0());
    let _ = writeln!(t, "\n[L]");
    for row in nf.l.row_iter() {
        let _ = writeln!(t, "{}", row.iter().map(c).collect::<Vec<_>>().join(" "));
    }
    let _ = writeln!(t, "\n[r]");
    for z in &nf.transform.coeffs {
        let _ = writeln!(t, "{}", c(z));
    }
    let _ = writeln!(t, "homological_residual = {:.17e}", nf.transform.residual);
    let _ = writeln!(t, "\n[p_real]\n{}", nf.transform.p_real);
    let _ = writeln!(t, "[h2]\n{}", nf.center_manifold.h2);
    let _ = writeln!(t, "center_manifold_residual = {:.17e}", nf.center_manifold.residual);
    let _ = writeln!(t, "\n[reduced_field]\n{}", nf.reduced.field);
    let _ = writeln!(t, "radial_coefficient = {:.17e}", nf.radial_coefficient);
    let _ = writeln!(t, "unit_cubic = {}", prep.has_unit_cubic());
    let _ = writeln!(t, "z_quadratic_residue = {:.17e}", quadratic_z_residue(&ts.f));
    let _ = writeln!(t, "limit_s = {:.17e}", prep.limit.s);
    ctx.out.write("normal_form.txt", t.as_bytes())?;

    if ctx.cfg.output.json() {
        let cj = |z: &hopf_critic::spectral::C64| json!([z.re, z.im]);
        let l: Vec<Value> =
            nf.l.row_iter()
                .map(|r| Value::Array(r.iter().map(cj).collect()))
                .collect();
        let v = json!({
            "hypotheses_hold": holds,
            "lambda0": ts.lambda0(),
            "L": l,
            "r": nf.transform.coeffs.iter().map(cj).collect::<Vec<_>>(),
            "homological_residual": nf.transform.residual,
            "p_real": terms_json(&nf.transform.p_real),
            "h2": terms_json(&nf.center_manifold.h2),
            "center_manifold_residual": nf.center_manifold.residual,
            "reduced_field": terms_json(&nf.reduced.field),
            "radial_coefficient": nf.radial_coefficient,
            "unit_cubic": prep.has_unit_cubic(),
            "z_quadratic_residue": quadratic_z_residue(&ts.f),
            "limit_s": prep.limit.s,
        });
        ctx.out.json("normal_form.json", &v)?;
    }
    ctx.say(format!("lambda0            {:.6}", ts.lambda0()));
    ctx.say(format!("radial_coefficient {:.6}", nf.radial_coefficient));
    ctx.say(format!("unit_cubic         {}", prep.has_unit_cubic()));
    Ok(prep)
}

fn state_columns(n: usize) -> Vec<String> {
    let mut c = vec!["z1".to_string(), "z2".to_string()];
    c.extend((1..=n - 2).map(|j| format!("y{j}")));
    c
}

fn simulate(ctx: &mut Ctx, sys: &PreparedSystem) -> Result<(), CliError> {
    let r = &ctx.cfg.run;
    let x0 = r.x0.clone().unwrap_or_else(|| sys.initial_state(r.rho0));
    let mut files = Vec::new();
    for (i, &eps) in r.epsilons.iter().enumerate() {
        let sim = RescaledSimulator::new(&sys.transformed, eps, r.dt, r.t_end)?;
        let seed = derive_seed(r.seed, SIMULATE_TAG + i as u64);
        let paths = run_ensemble(r.paths, ctx.workers, |k| -> Result<_, SdeError> {
            let mut p = sim.run(&x0, &mut NoiseStream::new(seed, k, sim.channels()))?;
            if let Some((s, why)) = to_polar(&p, r.delta, r.outer)?.stop {
                p.freeze_from(s, why);
            }
            Ok(p)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let ens = PathEnsemble {
            master_seed: seed,
            dt: r.dt,
            columns: state_columns(sys.n()),
            paths,
        };
        let name = format!("trajectories_eps{}.csv", i + 1);
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
        ctx.out.write(&name, &buf)?;
        ctx.say(format!(
            "eps = {eps:e}: {} paths, {} stopped -> {name}",
            ens.len(),
            ens.stopped_count()
        ));
        files.push(json!({"epsilon": eps, "file": name, "stopped": ens.stopped_count(), "digest": ens.digest()}));
    }

    let seed = derive_seed(r.seed, SIMULATE_LIMIT_TAG);
    let paths = run_ensemble(r.paths, ctx.workers, |k| -> Result<_, SdeError> {
        let mut p = simulate_limit(&sys.limit, r.rho0, r.dt, r.t_end, &mut NoiseStream::new(seed, k, 2))?;
        if let Some(s) = p.states.iter().position(|&x| x <= r.delta || x >= r.outer) {
            let why = if p.states[s] <= r.delta {
                StopReason::HitInner
            } else {
                StopReason::HitOuter
            };
            p.freeze_from(s, why);
        }
        Ok(p)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let ens = PathEnsemble {
        master_seed: seed,
        dt: r.dt,
        columns: vec!["rho".into()],
        paths,
    };
    let mut buf = Vec::new();
    ens.write_csv(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    ctx.out.write("limit.csv", &buf)?;
    ctx.say(format!(
        "limit: {} paths, {} stopped -> limit.csv",
        ens.len(),
        ens.stopped_count()
    ));
    files.push(json!({"epsilon": null, "file": "limit.csv", "stopped": ens.stopped_count(), "digest": ens.digest()}));
    if ctx.cfg.output.json() {
        ctx.out.json("simulate.json", &json!({ "ensembles": files }))?;
    }
    Ok(())
}

/// The convergence study a config describes.
pub fn convergence_config(cfg: &ExperimentConfig, workers: usize) -> ConvergenceConfig {
    let r = &cfg.run;
    ConvergenceConfig {
        epsilons: r.epsilons.clone(),
        checkpoints: r.checkpoints(),
        paths: r.paths,
        dt: r.dt,
        rho0: r.rho0,
        delta: r.delta,
        outer: r.outer,
        seed: r.seed,
        workers,
        halve_dt: r.halve_dt,
    }
}

/// The reduction study a config describes; starts at `x0[..2]` or `(ρ0, 0)`.
pub fn reduction_config(cfg: &ExperimentConfig, workers: usize) -> ReductionConfig {
    let r = &cfg.run;
    let z0 = match &r.x0 {
        Some(x) => [x[0], x[1]],
        None => [r.rho0, 0.0],
    };
    ReductionConfig {
        epsilons: r.epsilons.clone(),
        ball: r.ball,
        beta: r.beta,
        paths: r.paths,
        dt: r.dt,
        t_end: r.t_end,
        z0,
        seed: r.seed,
        workers,
    }
}

fn row_json(r: &ConvergenceRow) -> Value {
    json!({
        "epsilon": r.epsilon,
        "checkpoint": r.checkpoint,
        "ks": r.ks,
        "w1": r.w1,
        "stopped_fraction": r.stopped_fraction,
        "n_paths": r.n_paths,
        "dt": r.dt,
        "quantiles": r.quantiles,
    })
}

fn converge(ctx: &mut Ctx, sys: &PreparedSystem) -> Result<ConvergenceReport, CliError> {
    let rep = convergence_study(sys, &convergence_config(ctx.cfg, ctx.workers))?;
    ctx.out.write("convergence.csv", rep.csv().as_bytes())?;
    let decreasing = rep.ks_decreasing();
    let all_decreasing = decreasing.iter().all(|(_, ok)| *ok);
    if ctx.cfg.output.json() {
        let v = json!({
            "rows": rep.rows.iter().map(row_json).collect::<Vec<_>>(),
            "halved": rep.halved.iter().map(row_json).collect::<Vec<_>>(),
            "limit_stopped_fraction": rep.limit_stopped_fraction,
            "max_dt_shift": rep.max_dt_shift(),
            "digest": rep.digest(),
            "verdicts": {
                "ks_decreasing": decreasing.iter().map(|(t, ok)| json!({"checkpoint": t, "holds": ok})).collect::<Vec<_>>(),
                "reliable": !rep.unreliable,
            },
        });
        ctx.out.json("convergence.json", &v)?;
    }
    for row in &rep.rows {
        ctx.say(format!(
            "eps = {:e} t = {}: ks = {:.4} w1 = {:.4} stopped = {:.3}",
            row.epsilon, row.checkpoint, row.ks, row.w1, row.stopped_fraction
        ));
    }
    if let Some(s) = rep.max_dt_shift() {
        ctx.say(format!("max KS shift under dt/2: {s:.4}"));
    }
    ctx.say(format!("ks decreasing in eps: {all_decreasing}"));
    if rep.unreliable {
        ctx.say("warning: more than half of the paths stopped in some ensemble");
    }
    ctx.say(format!("digest {}", rep.digest()));
    Ok(rep)
}

fn reduce(ctx: &mut Ctx, sys: &PreparedSystem) -> Result<ReductionReport, CliError> {
    let rep = reduction_diagnostics(sys, &reduction_config(ctx.cfg, ctx.workers))?;
    ctx.out.write("reduction.csv", rep.csv().as_bytes())?;
    let first = rep.rows.first().map(|x| x.u_median);
    let last = rep.rows.last().map(|x| x.u_median);
    let phi_decreasing = rep.rows.windows(2).all(|w| w[1].phi_median < w[0].phi_median);
    if ctx.cfg.output.json() {
        let rows: Vec<Value> = rep
            .rows
            .iter()
            .map(|x| {
                json!({
                    "epsilon": x.epsilon, "u_median": x.u_median, "u_p90": x.u_p90,
                    "phi_median": x.phi_median, "phi_p90": x.phi_p90,
                    "stopped_fraction": x.stopped_fraction, "n_paths": x.n_paths,
                })
            })
            .collect();
        let v = json!({
            "rows": rows,
            "ball": rep.ball,
            "beta": rep.beta,
            "dt": rep.dt,
            "q_slope": rep.q_slope,
            "gamma_slope": rep.gamma_slope,
            "verdicts": {
                "u_ratio_first_to_last": first.zip(last).map(|(a, b)| a / b),
                "phi_decreasing": phi_decreasing,
            },
        });
        ctx.out.json("reduction.json", &v)?;
    }
    for x in &rep.rows {
        ctx.say(format!(
            "eps = {:e}: U median = {:.4e} Phi median = {:.4e} stopped = {:.3}",
            x.epsilon, x.u_median, x.phi_median, x.stopped_fraction
        ));
    }
    ctx.say(format!(
        "fitted slopes: q = {:?} gamma = {:?}",
        rep.q_slope, rep.gamma_slope
    ));
    Ok(rep)
}

/// Check, normal form, then every study that applies, plus plot data.
fn report(ctx: &mut Ctx) -> Result<(), CliError> {
    ctx.say("== hypotheses");
    let hyp = check(ctx)?;
    if !hyp.all_hold() {
        ctx.say("hypotheses fail; studies skipped");
        let summary = ctx.summary.clone();
        return ctx.out.write("summary.txt", summary.as_bytes());
    }
    ctx.say("== normal form");
    let sys = normal_form(ctx)?;
    if sys.has_unit_cubic() {
        ctx.say("== convergence to the limit radius");
        let rep = converge(ctx, &sys)?;
        let mut plot = String::from("epsilon,checkpoint,ks,w1,q10,q50,q90\n");
        for r in &rep.rows {
            let _ = writeln!(
                plot,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.epsilon, r.checkpoint, r.ks, r.w1, r.quantiles[0], r.quantiles[1], r.quantiles[2]
            );
        }
        ctx.out.write("plot_convergence.csv", plot.as_bytes())?;
        if ctx.cfg.output.plot {
            let mut cps: Vec<f64> = rep.rows.iter().map(|r| r.checkpoint).collect();
            cps.dedup();
            let series: Vec<Series> = cps
                .iter()
                .flat_map(|&t| {
                    let pick = |f: fn(&ConvergenceRow) -> f64| -> Vec<(f64, f64)> {
                        rep.rows
                            .iter()
                            .filter(|r| r.checkpoint == t)
                            .map(|r| (r.epsilon, f(r)))
                            .collect()
                    };
                    [
                        Series {
                            name: format!("KS t={t}"),
                            points: pick(|r| r.ks),
                        },
                        Series {
                            name: format!("W1 t={t}"),
                            points: pick(|r| r.w1),
                        },
                    ]
                })
                .collect();
            let svg = log_log_plot("Distance to the limit radius", "epsilon", "distance", &series);
            ctx.out.write("convergence.svg", svg.as_bytes())?;
        }
    } else {
        ctx.say("reduced cubic is not -z|z|^2; convergence study skipped");
    }
    let residue = quadratic_z_residue(&sys.transformed.f);
    if sys.n() > 2 && residue <= QUADRATIC_TOL {
        ctx.say("== reduction errors");
        let rep = reduce(ctx, &sys)?;
        let mut plot = String::from("epsilon,u_median,phi_median\n");
        for r in &rep.rows {
            let _ = writeln!(plot, "{:.16e},{:.16e},{:.16e}", r.epsilon, r.u_median, r.phi_median);
        }
        ctx.out.write("plot_reduction.csv", plot.as_bytes())?;
        if ctx.cfg.output.plot {
            let series = [
                Series {
                    name: "U".into(),
                    points: rep.rows.iter().map(|r| (r.epsilon, r.u_median)).collect(),
                },
                Series {
                    name: "Phi".into(),
                    points: rep.rows.iter().map(|r| (r.epsilon, r.phi_median)).collect(),
                },
            ];
            let svg = log_log_plot("Median reduction errors", "epsilon", "sup error", &series);
            ctx.out.write("reduction.svg", svg.as_bytes())?;
        }
    } else if sys.n() > 2 {
        ctx.say(format!(
            "z-involving quadratic terms present ({residue:.3e}); reduction study skipped"
        ));
    }
    let summary = ctx.summary.clone();
    ctx.out.write("summary.txt", summary.as_bytes())?;
    Ok(())
}
