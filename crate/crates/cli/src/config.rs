//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [system]
//! n = 2
//! m = 2
//! includes_mu = true
//! drift <component> <exponents...> <coefficient>
//! sigma <row> <col> <exponents...> <coefficient>
//! [run]
//! epsilons = 1e-1, 1e-2
//! [output]
//! dir = out
//! ```
//!
//! Indices are 1-based. Drift exponents cover `x1..xn` and then `μ` when
//! `includes_mu` is set; sigma exponents cover `x1..xn`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use hopf_critic::polyfield::{PolyMap, PolyMatrix};
use hopf_critic::system::SystemError;
use hopf_critic::HopfSystem;

/// Truncation degree for parsed polynomials unless a term needs more.
const MIN_MAX_DEGREE: u32 = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every problem found in a config, in line order.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftTerm {
    pub line: usize,
    pub component: usize,
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaTerm {
    pub line: usize,
    pub row: usize,
    pub col: usize,
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemBlock {
    pub n: usize,
    pub m: usize,
    pub includes_mu: bool,
    pub drift: Vec<DriftTerm>,
    pub sigma: Vec<SigmaTerm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunBlock {
    pub epsilons: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub rho0: f64,
    /// Initial point in split coordinates; defaults to `(ρ0, 0, …)`.
    pub x0: Option<Vec<f64>>,
    pub delta: f64,
    pub outer: f64,
    pub ball: f64,
    pub beta: f64,
    /// Defaults to `[t_end]`.
    pub checkpoints: Option<Vec<f64>>,
    pub workers: Option<usize>,
    pub halve_dt: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock {
            epsilons: vec![1e-1, 1e-2, 1e-3],
            t_end: 1.0,
            dt: 1e-3,
            paths: 1000,
            seed: 0,
            rho0: 1.0,
            x0: None,
            delta: 0.05,
            outer: 10.0,
            ball: 2.0,
            beta: 0.4,
            checkpoints: None,
            workers: None,
            halve_dt: false,
        }
    }
}

impl RunBlock {
    pub fn checkpoints(&self) -> Vec<f64> {
        self.checkpoints.clone().unwrap_or_else(|| vec![self.t_end])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    pub plot: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
            plot: false,
        }
    }
}

impl OutputBlock {
    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemBlock,
    pub run: RunBlock,
    pub output: OutputBlock,
    /// Line of each `key = value` entry, for error messages.
    key_lines: HashMap<String, usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    System,
    Run,
    Output,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        message: message.into(),
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| parse_f64(t.trim())).collect()
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{s}` is not true or false")),
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

/// `<indices...> <exponents...> <coefficient>` after the keyword.
fn parse_term(fields: &[&str], n_index: usize) -> Result<(Vec<usize>, Vec<u32>, f64), String> {
    if fields.len() < n_index + 1 {
        return Err("too few fields".into());
    }
    let idx = fields[..n_index]
        .iter()
        .map(|f| match f.parse::<usize>() {
            Ok(i) if i >= 1 => Ok(i),
            _ => Err(format!("`{f}` is not a 1-based index")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let exps = fields[n_index..fields.len() - 1]
        .iter()
        .map(|f| f.parse::<u32>().map_err(|_| format!("`{f}` is not an exponent")))
        .collect::<Result<Vec<_>, _>>()?;
    let coeff = parse_f64(fields[fields.len() - 1])?;
    Ok((idx, exps, coeff))
}

/// Parses and validates a config, collecting every error.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut section = Section::None;
    let mut system = SystemBlock {
        n: 0,
        m: 0,
        includes_mu: true,
        drift: Vec::new(),
        sigma: Vec::new(),
    };
    let mut run = RunBlock::default();
    let mut output = OutputBlock::default();
    let mut key_lines: HashMap<String, usize> = HashMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = match name.trim() {
                "system" => Section::System,
                "run" => Section::Run,
                "output" => Section::Output,
                other => {
                    errors.push(err(line, format!("unknown section [{other}]")));
                    Section::None
                }
            };
            continue;
        }
        if let Some((key, value)) = content.split_once('=') {
            let (key, value) = (key.trim(), value.trim());
            let qualified = match section {
                Section::System => format!("system.{key}"),
                Section::Run => format!("run.{key}"),
                Section::Output => format!("output.{key}"),
                Section::None => {
                    errors.push(err(line, format!("`{key}` appears before any section")));
                    continue;
                }
            };
            if key_lines.insert(qualified.clone(), line).is_some() {
                errors.push(err(line, format!("duplicate key `{key}`")));
                continue;
            }
            let r: Result<(), String> = (|| {
                match qualified.as_str() {
                    "system.n" => system.n = parse_usize(value)?,
                    "system.m" => system.m = parse_usize(value)?,
                    "system.includes_mu" => system.includes_mu = parse_bool(value)?,
                    "run.epsilons" => run.epsilons = parse_list(value)?,
                    "run.t_end" => run.t_end = parse_f64(value)?,
                    "run.dt" => run.dt = parse_f64(value)?,
                    "run.paths" => run.paths = parse_usize(value)?,
                    "run.seed" => run.seed = value.parse().map_err(|_| format!("`{value}` is not a u64 seed"))?,
                    "run.rho0" => run.rho0 = parse_f64(value)?,
                    "run.x0" => run.x0 = Some(parse_list(value)?),
                    "run.delta" => run.delta = parse_f64(value)?,
                    "run.outer" => run.outer = parse_f64(value)?,
                    "run.ball" => run.ball = parse_f64(value)?,
                    "run.beta" => run.beta = parse_f64(value)?,
                    "run.checkpoints" => run.checkpoints = Some(parse_list(value)?),
                    "run.workers" => run.workers = Some(parse_usize(value)?),
                    "run.halve_dt" => run.halve_dt = parse_bool(value)?,
                    "output.dir" => output.dir = PathBuf::from(value),
                    "output.plot" => output.plot = parse_bool(value)?,
                    "output.formats" => {
                        output.formats = value
                            .split(',')
                            .map(|f| match f.trim() {
                                "csv" => Ok(Format::Csv),
                                "json" => Ok(Format::Json),
                                other => Err(format!("unknown format `{other}`")),
                            })
                            .collect::<Result<_, _>>()?
                    }
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            })();
            if let Err(m) = r {
                errors.push(err(line, m));
            }
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        match (section, fields[0]) {
            (Section::System, "drift") => match parse_term(&fields[1..], 1) {
                Ok((idx, exponents, coeff)) => system.drift.push(DriftTerm {
                    line,
                    component: idx[0],
                    exponents,
                    coeff,
                }),
                Err(m) => errors.push(err(line, format!("drift term: {m}"))),
            },
            (Section::System, "sigma") => match parse_term(&fields[1..], 2) {
                Ok((idx, exponents, coeff)) => system.sigma.push(SigmaTerm {
                    line,
                    row: idx[0],
                    col: idx[1],
                    exponents,
                    coeff,
                }),
                Err(m) => errors.push(err(line, format!("sigma term: {m}"))),
            },
            _ => errors.push(err(line, format!("cannot parse `{content}`"))),
        }
    }

    let cfg = ExperimentConfig {
        system,
        run,
        output,
        key_lines,
    };
    errors.extend(cfg.validate());
    if errors.is_empty() {
        Ok(cfg)
    } else {
        errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(ConfigErrors(errors))
    }
}

impl ExperimentConfig {
    fn line_of(&self, key: &str) -> Option<usize> {
        self.key_lines.get(key).copied()
    }

    /// Consistency and range checks; also rerun after flag overrides.
    pub fn validate(&self) -> Vec<ConfigError> {
        let mut e = Vec::new();
        let mut at = |key: &str, msg: String| {
            e.push(ConfigError {
                line: self.line_of(key),
                message: msg,
            })
        };
        let s = &self.system;
        if s.n < 2 {
            at("system.n", format!("n must be at least 2, got {}", s.n));
        }
        if s.m < 1 {
            at("system.m", format!("m must be at least 1, got {}", s.m));
        }
        let r = &self.run;
        if r.epsilons.is_empty() || r.epsilons.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            at(
                "run.epsilons",
                format!("epsilon values must lie in (0, 1), got {:?}", r.epsilons),
            );
        }
        if !(r.dt > 0.0) {
            at("run.dt", format!("dt must be positive, got {}", r.dt));
        }
        if !(r.t_end > 0.0) {
            at("run.t_end", format!("t_end must be positive, got {}", r.t_end));
        }
        if r.paths == 0 {
            at("run.paths", "paths must be positive".into());
        }
        if let Some(cps) = &r.checkpoints {
            if cps.is_empty() || cps.iter().any(|&t| !(t > 0.0 && t <= r.t_end)) {
                at(
                    "run.checkpoints",
                    format!("checkpoints must lie in (0, t_end = {}], got {cps:?}", r.t_end),
                );
            }
        }
        if !(r.delta > 0.0 && r.delta < r.rho0 && r.rho0 < r.outer) {
            at(
                "run.delta",
                format!(
                    "need 0 < delta < rho0 < outer, got {} < {} < {}",
                    r.delta, r.rho0, r.outer
                ),
            );
        }
        if !(r.ball > 0.0) {
            at("run.ball", format!("ball must be positive, got {}", r.ball));
        }
        if !(r.beta > 0.0 && r.beta < 0.5) {
            at("run.beta", format!("beta must lie in (0, 1/2), got {}", r.beta));
        }
        if let Some(x0) = &r.x0 {
            if x0.len() != s.n {
                at("run.x0", format!("x0 has {} entries, expected n = {}", x0.len(), s.n));
            }
        }
        if s.drift.is_empty() {
            at("system.n", "no drift terms".into());
        }
        let want = s.n + usize::from(s.includes_mu);
        for t in &s.drift {
            if t.component > s.n {
                e.push(err(
                    t.line,
                    format!("drift component {} exceeds n = {}", t.component, s.n),
                ));
            }
            if t.exponents.len() != want {
                e.push(err(
                    t.line,
                    format!("drift term has {} exponents, expected {want}", t.exponents.len()),
                ));
            }
        }
        for t in &s.sigma {
            if t.row > s.n || t.col > s.m {
                e.push(err(
                    t.line,
                    format!("sigma entry ({}, {}) outside {}x{}", t.row, t.col, s.n, s.m),
                ));
            }
            if t.exponents.len() != s.n {
                e.push(err(
                    t.line,
                    format!("sigma term has {} exponents, expected {}", t.exponents.len(), s.n),
                ));
            }
        }
        e
    }

    /// Builds the drift and noise fields. Call only on a validated config.
    pub fn to_system(&self) -> Result<HopfSystem, SystemError> {
        let s = &self.system;
        let n_in = s.n + usize::from(s.includes_mu);
        let deg = |e: &[u32]| e.iter().sum::<u32>();
        let drift_deg = s
            .drift
            .iter()
            .map(|t| deg(&t.exponents))
            .max()
            .unwrap_or(0)
            .max(MIN_MAX_DEGREE);
        let drift = PolyMap::from_terms(
            n_in,
            s.n,
            drift_deg,
            s.drift.iter().map(|t| (t.component - 1, t.exponents.clone(), t.coeff)),
        )?;
        let sigma_deg = s
            .sigma
            .iter()
            .map(|t| deg(&t.exponents))
            .max()
            .unwrap_or(0)
            .max(MIN_MAX_DEGREE);
        let sigma = PolyMap::from_terms(
            s.n,
            s.n * s.m,
            sigma_deg,
            s.sigma
                .iter()
                .map(|t| ((t.row - 1) * s.m + t.col - 1, t.exponents.clone(), t.coeff)),
        )?;
        HopfSystem::new(drift, PolyMatrix::new(s.n, s.m, sigma)?, s.includes_mu)
    }

    /// Canonical text; parses back to an equal config (up to line numbers).
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let exps = |e: &[u32]| e.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        let s = &self.system;
        let r = &self.run;
        let mut t = String::new();
        // Writing to a String cannot fail.
        let _ = writeln!(t, "[system]\nn = {}\nm = {}\nincludes_mu = {}", s.n, s.m, s.includes_mu);
        for d in &s.drift {
            let _ = writeln!(t, "drift {} {} {:?}", d.component, exps(&d.exponents), d.coeff);
        }
        for g in &s.sigma {
            let _ = writeln!(t, "sigma {} {} {} {:?}", g.row, g.col, exps(&g.exponents), g.coeff);
        }
        let _ = writeln!(t, "\n[run]\nepsilons = {}", list(&r.epsilons));
        let _ = writeln!(
            t,
            "t_end = {:?}\ndt = {:?}\npaths = {}\nseed = {}",
            r.t_end, r.dt, r.paths, r.seed
        );
        let _ = writeln!(t, "rho0 = {:?}", r.rho0);
        if let Some(x0) = &r.x0 {
            let _ = writeln!(t, "x0 = {}", list(x0));
        }
        let _ = writeln!(
            t,
            "delta = {:?}\nouter = {:?}\nball = {:?}\nbeta = {:?}",
            r.delta, r.outer, r.ball, r.beta
        );
        if let Some(c) = &r.checkpoints {
            let _ = writeln!(t, "checkpoints = {}", list(c));
        }
        if let Some(w) = r.workers {
            let _ = writeln!(t, "workers = {w}");
        }
        let _ = writeln!(t, "halve_dt = {}", r.halve_dt);
        let formats: Vec<&str> = self
            .output
            .formats
            .iter()
            .map(|f| match f {
                Format::Csv => "csv",
                Format::Json => "json",
            })
            .collect();
        let _ = writeln!(
            t,
            "\n[output]\ndir = {}\nformats = {}\nplot = {}",
            self.output.dir.display(),
            formats.join(", "),
            self.output.plot
        );
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[system]
n = 2
m = 2
drift 1 0 1 0 -1
drift 1 1 0 1 1
drift 1 3 0 0 -1
drift 1 1 2 0 -1
drift 2 1 0 0 1
drift 2 0 1 1 1
drift 2 2 1 0 -1
drift 2 0 3 0 -1
sigma 1 1 0 0 1
sigma 2 2 0 0 1
";

    #[test]
    fn defaults_are_filled() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.run.dt, 1e-3);
        assert_eq!(c.run.delta, 0.05);
        assert_eq!(c.run.outer, 10.0);
        assert_eq!(c.run.ball, 2.0);
        assert_eq!(c.run.beta, 0.4);
        assert_eq!(c.run.checkpoints(), vec![1.0]);
        assert!(c.system.includes_mu);
        assert_eq!(c.system.drift.len(), 8);
    }

    #[test]
    fn wrong_exponent_length_names_the_line() {
        let text = MINIMAL.replace("drift 2 0 3 0 -1", "drift 2 0 3 -1");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert_eq!(e.0[0].line, Some(11));
        assert!(e.0[0].message.contains("exponents"));
    }

    #[test]
    fn all_errors_are_reported() {
        let text =
            format!("{MINIMAL}sigma 3 1 0 0 1\nbogus line\n[run]\ndt = -1\nepsilons = 0.5, 2\nwat = 1\n[nope]\n");
        let e = parse_config(&text).unwrap_err();
        let lines: Vec<Option<usize>> = e.0.iter().map(|x| x.line).collect();
        assert_eq!(lines, vec![Some(14), Some(15), Some(17), Some(18), Some(19), Some(20)]);
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = format!("{MINIMAL}[run]\nepsilons = 0.1, 0.001\nx0 = 0.5, 0.25\ncheckpoints = 0.5, 1\nseed = 42\n[output]\nplot = true\nformats = csv\n");
        let c = parse_config(&text).unwrap();
        let back = parse_config(&c.to_text()).unwrap();
        assert_eq!(back.system, c.system.clone_without_lines(&back.system));
        assert_eq!(back.run, c.run);
        assert_eq!(back.output, c.output);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn builds_the_system() {
        let sys = parse_config(MINIMAL).unwrap().to_system().unwrap();
        assert_eq!(sys.n(), 2);
        assert_eq!(sys.m(), 2);
        assert_eq!(sys.drift_with_mu().n_in(), 3);
    }

    impl SystemBlock {
        /// `self` with term line numbers taken from `other`.
        fn clone_without_lines(&self, other: &SystemBlock) -> SystemBlock {
            let mut s = self.clone();
            for (a, b) in s.drift.iter_mut().zip(&other.drift) {
                a.line = b.line;
            }
            for (a, b) in s.sigma.iter_mut().zip(&other.sigma) {
                a.line = b.line;
            }
            s
        }
    }
}
