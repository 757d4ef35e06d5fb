//! Run configuration: flags merged over an optional `key=value` file.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use asfw_core::asfw::{StepKind, StepRule};
use asfw_core::bench::{self, LassoVariant, MaxqSet};

use crate::RunArgs;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rho {
    Auto,
    Value(f64),
}

impl FromStr for Rho {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Rho::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("rho must be a number or `auto`, got `{s}`"))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(format!("rho must be finite and nonnegative, got {v}"));
        }
        Ok(Rho::Value(v))
    }
}

impl fmt::Display for Rho {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rho::Auto => f.write_str("auto"),
            Rho::Value(v) => write!(f, "{v}"),
        }
    }
}

/// `sqrt`, `harmonic`, `fixed:T` or `short:GAMMA`.
pub fn parse_step(s: &str) -> Result<StepKind, String> {
    let (head, arg) = match s.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (s, None),
    };
    match (head, arg) {
        ("sqrt", None) => Ok(StepKind::OpenLoopSqrt),
        ("harmonic", None) => Ok(StepKind::OpenLoopHarmonic),
        ("fixed", Some(t)) => match t.parse::<usize>() {
            Ok(t) if t >= 1 => Ok(StepKind::FixedHorizon(t)),
            _ => Err(format!("fixed horizon must be a positive integer, got `{t}`")),
        },
        ("short", Some(g)) => match g.parse::<f64>() {
            Ok(g) if g > 0.0 && g.is_finite() => Ok(StepKind::ShortStep(g)),
            _ => Err(format!("short-step gamma must be positive, got `{g}`")),
        },
        _ => Err(format!("unknown step rule `{s}` (sqrt, harmonic, fixed:T, short:GAMMA)")),
    }
}

pub fn step_label(kind: StepKind) -> String {
    match kind {
        StepKind::OpenLoopSqrt => "sqrt".into(),
        StepKind::OpenLoopHarmonic => "harmonic".into(),
        StepKind::FixedHorizon(t) => format!("fixed:{t}"),
        StepKind::ShortStep(g) => format!("short:{g}"),
    }
}

/// One fully resolved instance of a run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: String,
    pub n: usize,
    pub p: usize,
    pub rho: Rho,
    pub seed: u64,
    pub set: MaxqSet,
    pub variant: LassoVariant,
    pub step: StepKind,
    pub monotone: bool,
    pub max_iters: usize,
    pub gap_tol: f64,
    pub partial_inner_limit: Option<usize>,
}

impl RunConfig {
    pub fn rule(&self) -> StepRule {
        StepRule::new(self.step).monotone(self.monotone)
    }

    /// File stem used when a sweep writes one file per run.
    pub fn stem(&self) -> String {
        let mut s = format!("{}_n{}", self.problem, self.n);
        match self.problem.as_str() {
            "maxq" => s.push_str(&format!("_{}", self.set)),
            "lasso" => s.push_str(&format!("_p{}_{}_seed{}", self.p, self.variant, self.seed)),
            _ => {}
        }
        s
    }
}

/// A sweep: the cartesian product of `ns` and `sets` over a base config.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub runs: Vec<RunConfig>,
    pub output: Option<PathBuf>,
    pub jobs: usize,
}

pub fn read_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut map = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), k + 1))?;
        let key = key.trim().replace('_', "-");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("{}:{}: unknown key `{key}`", path.display(), k + 1);
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "n",
    "p",
    "rho",
    "seed",
    "set",
    "variant",
    "step",
    "monotone",
    "max-iters",
    "gap-tol",
    "partial-inner-limit",
    "output",
    "jobs",
    "extended",
];

fn pick<T: FromStr>(flag: Option<T>, file: &HashMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|e| anyhow!("config key `{key}`: {e}")),
    }
}

fn list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',').map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}"))).collect()
}

fn pick_list<T: FromStr>(flag: &Option<String>, file: &HashMap<String, String>, key: &str) -> Result<Option<Vec<T>>>
where
    T::Err: fmt::Display,
{
    match flag.as_deref().or(file.get(key).map(String::as_str)) {
        None => Ok(None),
        Some(v) => list(v).map(Some).map_err(|e| anyhow!("{key}: {e}")),
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got `{s}`")),
    }
}

/// Resolve flags over the config file. Every error here is a config error.
pub fn resolve(args: &RunArgs) -> Result<Sweep> {
    let file = match &args.config {
        Some(p) => read_config_file(p)?,
        None => HashMap::new(),
    };
    let flag_bool = |on: bool, key: &str| -> Result<bool> {
        if on {
            return Ok(true);
        }
        file.get(key).map_or(Ok(false), |v| parse_bool(v).map_err(|e| anyhow!("config key `{key}`: {e}")))
    };
    let problem: String = pick(args.problem.clone(), &file, "problem")?
        .ok_or_else(|| anyhow!("--problem is required (one of {})", bench::NAMES.join(", ")))?;
    if !bench::NAMES.contains(&problem.as_str()) {
        bail!("unknown problem `{problem}` (one of {})", bench::NAMES.join(", "));
    }
    let extended = flag_bool(args.extended, "extended")?;
    if bench::is_extended(&problem) && !extended {
        bail!("problem `{problem}` belongs to the extended set; pass --extended");
    }
    let ns: Vec<usize> = pick_list(&args.n, &file, "n")?.unwrap_or_else(|| vec![if problem == "mifflin2" { 2 } else { 5 }]);
    let sets: Vec<MaxqSet> = pick_list(&args.set, &file, "set")?.unwrap_or_else(|| vec![MaxqSet::C1]);
    let p: Option<usize> = pick(args.p, &file, "p")?;
    let rho: Rho = pick(args.rho, &file, "rho")?.unwrap_or(Rho::Auto);
    let seed: u64 = pick(args.seed, &file, "seed")?.unwrap_or(7);
    let variant: LassoVariant = pick(args.variant, &file, "variant")?.unwrap_or(LassoVariant::Box);
    let step = match args.step.as_deref().or(file.get("step").map(String::as_str)) {
        Some(s) => parse_step(s).map_err(|e| anyhow!(e))?,
        None => StepKind::OpenLoopSqrt,
    };
    let monotone = flag_bool(args.monotone, "monotone")?;
    let max_iters: usize = pick(args.max_iters, &file, "max-iters")?.unwrap_or(500);
    let gap_tol: f64 = pick(args.gap_tol, &file, "gap-tol")?.unwrap_or(1e-10);
    let partial_inner_limit: Option<usize> = pick(args.partial_inner_limit, &file, "partial-inner-limit")?;
    let output: Option<PathBuf> = pick(args.output.clone(), &file, "output")?;
    let jobs: usize = pick(args.jobs, &file, "jobs")?.unwrap_or(1);

    if max_iters == 0 {
        bail!("--max-iters must be at least 1");
    }
    if !(gap_tol >= 0.0 && gap_tol.is_finite()) {
        bail!("--gap-tol must be finite and nonnegative");
    }
    if partial_inner_limit == Some(0) {
        bail!("--partial-inner-limit must be at least 1");
    }
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    if p == Some(0) {
        bail!("--p must be at least 1");
    }
    let sets = if problem == "maxq" { sets } else { vec![sets[0]] };
    let mut runs = Vec::new();
    for &n in &ns {
        let min_n = match problem.as_str() {
            "maxq" | "chained_lq" | "chained_crescent1" | "chained_mifflin2" | "chained_crescent2" => 2,
            _ => 1,
        };
        if n < min_n {
            bail!("problem `{problem}` needs n >= {min_n}, got {n}");
        }
        if problem == "mifflin2" && n != 2 {
            bail!("mifflin2 is defined for n = 2 only");
        }
        for &set in &sets {
            runs.push(RunConfig {
                problem: problem.clone(),
                n,
                p: p.unwrap_or(2 * n),
                rho,
                seed,
                set,
                variant,
                step,
                monotone,
                max_iters,
                gap_tol,
                partial_inner_limit,
            });
        }
    }
    if runs.len() > 1 && output.is_none() {
        bail!("a sweep over {} runs needs --output DIR", runs.len());
    }
    Ok(Sweep { runs, output, jobs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rules_parse() {
        assert_eq!(parse_step("sqrt"), Ok(StepKind::OpenLoopSqrt));
        assert_eq!(parse_step("fixed:100"), Ok(StepKind::FixedHorizon(100)));
        assert_eq!(parse_step("short:2.5"), Ok(StepKind::ShortStep(2.5)));
        assert!(parse_step("fixed:0").is_err());
        assert!(parse_step("short:-1").is_err());
        assert!(parse_step("sqrt:3").is_err());
        for s in ["sqrt", "harmonic", "fixed:7", "short:0.5"] {
            assert_eq!(step_label(parse_step(s).unwrap()), s);
        }
    }

    #[test]
    fn rho_parses_auto_and_numbers() {
        assert_eq!("auto".parse::<Rho>(), Ok(Rho::Auto));
        assert_eq!("0.25".parse::<Rho>(), Ok(Rho::Value(0.25)));
        assert!("-1".parse::<Rho>().is_err());
        assert!("nan".parse::<Rho>().is_err());
    }
}
