//! INI-style run configuration.
//!
//! Every accepted key is listed in [`SCHEMA`]; anything else is rejected with its line number.

use std::collections::BTreeMap;
use std::fmt;

use mfg_antimono::certify::{example72_instance, Example72Params, XpPolicy};
use mfg_antimono::measures::{make_empirical, EmpiricalMeasure};
use mfg_antimono::models::{ModelSpec, QuadraticParams, RegularityConstants};
use mfg_antimono::monotonicity::VecLambda;
use mfg_antimono::solver::{GridSpec, LipschitzMode, NoiseMode, PicardInit, SolveOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub msg: String,
}

impl ConfigError {
    fn at(line: Option<usize>, msg: impl Into<String>) -> Self {
        Self { line, msg: msg.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.msg),
            None => write!(f, "config: {}", self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    List,
    Choice(&'static [&'static str]),
    Text,
}

#[derive(Debug, Clone, Copy)]
pub struct Field {
    pub section: &'static str,
    pub key: &'static str,
    pub kind: Kind,
    /// `None` marks an optional key without a default.
    pub default: Option<&'static str>,
}

const fn f(section: &'static str, key: &'static str, kind: Kind, default: Option<&'static str>) -> Field {
    Field { section, key, kind, default }
}

const QUADRATIC_KEYS: [&str; 6] = ["a0", "g0", "g1", "h_quad", "h_xmu", "h_xx"];
const REG_KEYS: [&str; 8] = ["l2_h0", "lxx_h0_lo", "lxx_h0_hi", "l2_g", "lxx_g_hi", "gamma_lo", "gamma_hi", "la_bar"];

pub const SCHEMA: &[Field] = &[
    f("model", "family", Kind::Choice(&["quadratic", "example72"]), Some("quadratic")),
    f("model", "a0", Kind::Float, Some("0.5")),
    f("model", "g0", Kind::Float, Some("-0.5")),
    f("model", "g1", Kind::Float, Some("-0.5")),
    f("model", "h_quad", Kind::Float, Some("1")),
    f("model", "h_xmu", Kind::Float, Some("0.25")),
    f("model", "h_xx", Kind::Float, Some("0")),
    f("model", "beta", Kind::Float, Some("0")),
    f("model", "horizon", Kind::Float, Some("0.5")),
    f("model", "policy", Kind::Choice(&["proof_psd", "stated"]), Some("proof_psd")),
    f("model", "l2_h0", Kind::Float, Some("1")),
    f("model", "lxx_h0_lo", Kind::Float, Some("0")),
    f("model", "lxx_h0_hi", Kind::Float, Some("1")),
    f("model", "l2_g", Kind::Float, Some("1")),
    f("model", "lxx_g_hi", Kind::Float, Some("1")),
    f("model", "gamma_lo", Kind::Float, Some("0.5")),
    f("model", "gamma_hi", Kind::Float, Some("2")),
    f("model", "la_bar", Kind::Float, Some("1")),
    f("model", "m0", Kind::Float, Some("2")),
    f("example", "alpha_lo", Kind::Float, Some("1")),
    f("example", "alpha_hi", Kind::Float, Some("1")),
    f("example", "gamma_lo", Kind::Float, Some("0.5")),
    f("example", "gamma_hi", Kind::Float, Some("2")),
    f("example", "l2_g", Kind::Float, Some("1")),
    f("example", "l2_h0", Kind::Float, Some("1")),
    f("example", "m0_start", Kind::Float, Some("2")),
    f("example", "max_doublings", Kind::Int, Some("60")),
    f("lambda", "lambda0", Kind::Float, None),
    f("lambda", "lambda1", Kind::Float, Some("1")),
    f("lambda", "lambda2", Kind::Float, Some("1")),
    f("lambda", "lambda3", Kind::Float, Some("0")),
    f("measure", "center", Kind::Float, Some("0")),
    f("measure", "width", Kind::Float, Some("1")),
    f("measure", "atoms", Kind::Int, Some("16")),
    f("measure", "points", Kind::List, None),
    f("measure", "weights", Kind::List, None),
    f("solver", "t0", Kind::Float, Some("0")),
    f("solver", "t_steps", Kind::Int, Some("200")),
    f("solver", "dx", Kind::Float, Some("0.02")),
    f("solver", "half_width", Kind::Float, None),
    f("solver", "tol", Kind::Float, Some("1e-8")),
    f("solver", "max_picard", Kind::Int, Some("100")),
    f("solver", "relax", Kind::Float, Some("1")),
    f("solver", "init", Kind::Choice(&["terminal", "zero"]), Some("terminal")),
    f("experiment", "seed", Kind::Int, Some("0")),
    f("experiment", "mc_trials", Kind::Int, Some("64")),
    f("experiment", "mc_atoms", Kind::Int, Some("32")),
    f("experiment", "times", Kind::List, None),
    f("experiment", "paired_bump", Kind::Float, Some("0.05")),
    f("experiment", "bump_scales", Kind::List, Some("0.2, 0.1, 0.05")),
    f("experiment", "probes", Kind::List, Some("-0.5, 0, 0.5")),
    f("experiment", "lipschitz_mode", Kind::Choice(&["w2", "w1"]), Some("w2")),
    f("experiment", "lipschitz_variation_tol", Kind::Float, Some("0.2")),
    f("experiment", "lipschitz_oracle_tol", Kind::Float, None),
    f("experiment", "hessian_oracle_tol", Kind::Float, None),
    f("experiment", "flow_steps", Kind::Int, Some("100")),
    f("experiment", "paths_per_atom", Kind::Int, Some("4")),
    f("experiment", "flow_bump", Kind::Float, Some("0.05")),
    f("experiment", "noise", Kind::Choice(&["brownian", "frozen"]), Some("brownian")),
    f("experiment", "eta", Kind::Choice(&["random", "uniform", "alternating"]), Some("random")),
    f("experiment", "gamma_slack", Kind::Float, Some("1")),
    f("experiment", "lq_tol", Kind::Float, Some("5e-3")),
    f("experiment", "lq_ratio", Kind::Float, Some("0.6")),
    f("experiment", "residual_tol", Kind::Float, Some("1e-6")),
    f("experiment", "probe", Kind::Choice(&["false", "true"]), Some("false")),
    f("experiment", "sweep_key", Kind::Text, Some("model.a0")),
    f("experiment", "sweep_values", Kind::List, None),
    f("output", "dir", Kind::Text, None),
    f("output", "t_stride", Kind::Int, Some("1")),
    f("output", "x_stride", Kind::Int, Some("1")),
];

pub fn field(section: &str, key: &str) -> Option<&'static Field> {
    SCHEMA.iter().find(|f| f.section == section && f.key == key)
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    raw: String,
    line: Option<usize>,
}

/// Raw key/value document with source lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    entries: BTreeMap<(String, String), Entry>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = Document::default();
        let mut section: Option<(String, usize)> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let l = raw_line.trim();
            if l.is_empty() || l.starts_with('#') || l.starts_with(';') {
                continue;
            }
            if let Some(rest) = l.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(Some(line), "unterminated section header"))?
                    .trim();
                if !SCHEMA.iter().any(|f| f.section == name) {
                    return Err(ConfigError::at(Some(line), format!("unknown section [{name}]")));
                }
                section = Some((name.to_string(), line));
                continue;
            }
            let (key, value) = l
                .split_once('=')
                .ok_or_else(|| ConfigError::at(Some(line), format!("expected `key = value`, got `{l}`")))?;
            let (key, value) = (key.trim(), strip_comment(value).trim());
            let Some((sec, _)) = &section else {
                return Err(ConfigError::at(Some(line), format!("key `{key}` appears before any section header")));
            };
            if field(sec, key).is_none() {
                return Err(ConfigError::at(Some(line), format!("unknown key `{key}` in [{sec}]")));
            }
            doc.insert(sec, key, value, Some(line))?;
        }
        Ok(doc)
    }

    fn insert(&mut self, section: &str, key: &str, value: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let k = (section.to_string(), key.to_string());
        if let Some(prev) = self.entries.get(&k) {
            let first = prev.line.map(|l| l.to_string()).unwrap_or_else(|| "?".into());
            return Err(ConfigError::at(
                line,
                format!("duplicate key `{key}` in [{section}]: first defined at line {first}, again at line {}", line.unwrap_or(0)),
            ));
        }
        self.entries.insert(k, Entry { raw: value.to_string(), line });
        Ok(())
    }

    /// Replaces or adds a value, keeping the original line when there was one.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        if field(section, key).is_none() {
            return Err(ConfigError::at(None, format!("unknown key `{key}` in [{section}]")));
        }
        let k = (section.to_string(), key.to_string());
        let line = self.entries.get(&k).and_then(|e| e.line);
        self.entries.insert(k, Entry { raw: value.to_string(), line });
        Ok(())
    }

    fn is_set(&self, section: &str, key: &str) -> bool {
        self.entries.contains_key(&(section.to_string(), key.to_string()))
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.entries.get(&(section.to_string(), key.to_string())).and_then(|e| e.line)
    }

    fn raw(&self, section: &str, key: &str) -> Option<(&str, Option<usize>)> {
        let spec = field(section, key).expect("schema key");
        match self.entries.get(&(section.to_string(), key.to_string())) {
            Some(e) => Some((e.raw.as_str(), e.line)),
            None => spec.default.map(|d| (d, None)),
        }
    }

    fn float(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.opt_float(section, key)?
            .ok_or_else(|| ConfigError::at(None, format!("missing required key `{key}` in [{section}]")))
    }

    fn opt_float(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => parse_float(v, line, key).map(Some),
        }
    }

    fn int(&self, section: &str, key: &str) -> Result<usize, ConfigError> {
        let (v, line) = self.raw(section, key).expect("integer keys have defaults");
        v.parse::<usize>()
            .map_err(|_| ConfigError::at(line, format!("`{key}` expects a non-negative integer, got `{v}`")))
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| parse_float(s.trim(), line, key))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn text(&self, section: &str, key: &str) -> Option<&str> {
        self.raw(section, key).map(|(v, _)| v)
    }

    fn check_types(&self) -> Result<(), ConfigError> {
        for ((sec, key), e) in &self.entries {
            let spec = field(sec, key).expect("validated on insert");
            match spec.kind {
                Kind::Float => {
                    parse_float(&e.raw, e.line, key)?;
                }
                Kind::Int => {
                    self.int(sec, key)?;
                }
                Kind::List => {
                    self.list(sec, key)?;
                }
                Kind::Choice(opts) => {
                    if !opts.contains(&e.raw.as_str()) {
                        return Err(ConfigError::at(
                            e.line,
                            format!("`{key}` must be one of {}, got `{}`", opts.join(", "), e.raw),
                        ));
                    }
                }
                Kind::Text => {
                    if e.raw.is_empty() {
                        return Err(ConfigError::at(e.line, format!("`{key}` must not be empty")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Effective values with defaults filled in, grouped by section.
    pub fn echo(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for spec in SCHEMA {
            if let Some((v, _)) = self.raw(spec.section, spec.key) {
                out.entry(spec.section.to_string()).or_default().insert(spec.key.to_string(), v.to_string());
            }
        }
        out
    }
}

fn strip_comment(v: &str) -> &str {
    match v.find(" #") {
        Some(i) => &v[..i],
        None => v,
    }
}

fn parse_float(v: &str, line: Option<usize>, key: &str) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(ConfigError::at(line, format!("`{key}` expects a finite number, got `{v}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Quadratic,
    Example72,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaPattern {
    Random,
    Uniform,
    Alternating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub seed: u64,
    pub mc_trials: usize,
    pub mc_atoms: usize,
    pub times: Option<Vec<f64>>,
    pub paired_bump: f64,
    pub bump_scales: Vec<f64>,
    pub probes: Vec<f64>,
    pub lipschitz_mode: LipschitzMode,
    pub lipschitz_variation_tol: f64,
    pub lipschitz_oracle_tol: Option<f64>,
    pub hessian_oracle_tol: Option<f64>,
    pub flow_steps: usize,
    pub paths_per_atom: usize,
    pub flow_bump: f64,
    pub noise: NoiseMode,
    pub eta: EtaPattern,
    pub gamma_slack: f64,
    pub lq_tol: f64,
    pub lq_ratio: f64,
    pub residual_tol: f64,
    pub probe: bool,
    pub sweep_key: String,
    pub sweep_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub dir: Option<String>,
    pub t_stride: usize,
    pub x_stride: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub family: Family,
    pub model: ModelSpec<f64>,
    pub lambda: VecLambda<f64>,
    pub policy: XpPolicy,
    pub example: Example72Params,
    pub mu0: EmpiricalMeasure<f64>,
    pub solve: SolveOptions,
    pub experiment: Experiment,
    pub output: Output,
    doc: Document,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::from_document(Document::parse(text)?)
}

impl RunConfig {
    pub fn from_document(doc: Document) -> Result<Self, ConfigError> {
        doc.check_types()?;
        let family = match doc.text("model", "family") {
            Some("example72") => Family::Example72,
            _ => Family::Quadratic,
        };
        let policy = match doc.text("model", "policy") {
            Some("stated") => XpPolicy::Stated,
            _ => XpPolicy::ProofPsd,
        };
        let lambda_line = |k: &str| doc.line("lambda", k);
        let (l1, l2, l3) = (doc.float("lambda", "lambda1")?, doc.float("lambda", "lambda2")?, doc.float("lambda", "lambda3")?);
        if !(l2 > 0.0) {
            return Err(ConfigError::at(lambda_line("lambda2"), format!("lambda2 = {l2} violates D4: lambda2 must be strictly positive")));
        }
        if !(l1 > 0.0) {
            return Err(ConfigError::at(lambda_line("lambda1"), format!("lambda1 = {l1} violates D4: lambda1 must be strictly positive")));
        }
        if l3 < 0.0 {
            return Err(ConfigError::at(lambda_line("lambda3"), format!("lambda3 = {l3} violates D4: lambda3 must be non-negative")));
        }
        let lambda0 = doc.opt_float("lambda", "lambda0")?;
        if let Some(l0) = lambda0 {
            if !(l0 > 0.0) {
                return Err(ConfigError::at(lambda_line("lambda0"), format!("lambda0 = {l0} violates D4: lambda0 must be strictly positive")));
            }
        }
        let horizon = doc.float("model", "horizon")?;
        let example = Example72Params {
            alpha_lo: doc.float("example", "alpha_lo")?,
            alpha_hi: doc.float("example", "alpha_hi")?,
            gamma_lo: doc.float("example", "gamma_lo")?,
            gamma_hi: doc.float("example", "gamma_hi")?,
            l1,
            l2,
            l3,
            l2g: doc.float("example", "l2_g")?,
            l2h0: doc.float("example", "l2_h0")?,
            m0_start: doc.float("example", "m0_start")?,
            max_doublings: doc.int("example", "max_doublings")?,
            horizon,
            policy,
        };
        let model_err = |e: &dyn fmt::Display| ConfigError::at(doc.line("model", "family"), format!("invalid model: {e}"));
        let (mut model, lambda) = match family {
            Family::Quadratic => {
                if doc.is_set("model", "m0") {
                    return Err(ConfigError::at(doc.line("model", "m0"), "`m0` only applies to family = example72"));
                }
                let params = QuadraticParams {
                    g0: doc.float("model", "g0")?,
                    g1: doc.float("model", "g1")?,
                    h_quad: doc.float("model", "h_quad")?,
                    h_xmu: doc.float("model", "h_xmu")?,
                    h_xx: doc.float("model", "h_xx")?,
                };
                let reg = RegularityConstants {
                    l2_h0: doc.float("model", "l2_h0")?,
                    lxx_h0_lo: doc.float("model", "lxx_h0_lo")?,
                    lxx_h0_hi: doc.float("model", "lxx_h0_hi")?,
                    l2_g: doc.float("model", "l2_g")?,
                    lxx_g_hi: doc.float("model", "lxx_g_hi")?,
                    gamma_lo: doc.float("model", "gamma_lo")?,
                    gamma_hi: doc.float("model", "gamma_hi")?,
                    la_bar: doc.float("model", "la_bar")?,
                };
                let model = ModelSpec::quadratic(doc.float("model", "a0")?, params, horizon, reg).map_err(|e| model_err(&e))?;
                let lam = VecLambda::new(lambda0.unwrap_or(1.0), l1, l2, l3)
                    .map_err(|e| ConfigError::at(lambda_line("lambda0"), e.to_string()))?;
                (model, lam)
            }
            Family::Example72 => {
                for k in QUADRATIC_KEYS.iter().chain(REG_KEYS.iter()) {
                    if doc.is_set("model", k) {
                        return Err(ConfigError::at(
                            doc.line("model", k),
                            format!("`{k}` is derived from [example] when family = example72"),
                        ));
                    }
                }
                let (model, lam) = example72_instance(&example, doc.float("model", "m0")?).map_err(|e| model_err(&e))?;
                let lam = match lambda0 {
                    Some(l0) => lam.with_l0(l0).map_err(|e| ConfigError::at(lambda_line("lambda0"), e.to_string()))?,
                    None => lam,
                };
                (model, lam)
            }
        };
        model.beta = doc.float("model", "beta")?;
        model.validate().map_err(|e| ConfigError::at(doc.line("model", "beta"), format!("invalid model: {e}")))?;

        let mu0 = match doc.list("measure", "points")? {
            Some(pts) => {
                let w = doc.list("measure", "weights")?;
                make_empirical(&pts, w.as_deref())
                    .map_err(|e| ConfigError::at(doc.line("measure", "points"), format!("invalid measure: {e}")))?
            }
            None => {
                if doc.is_set("measure", "weights") {
                    return Err(ConfigError::at(doc.line("measure", "weights"), "`weights` requires `points`"));
                }
                let (c, w, n) = (doc.float("measure", "center")?, doc.float("measure", "width")?, doc.int("measure", "atoms")?);
                if n == 0 || w < 0.0 {
                    return Err(ConfigError::at(doc.line("measure", "atoms").or(doc.line("measure", "width")), "need atoms >= 1 and width >= 0"));
                }
                let pts: Vec<f64> = (0..n).map(|k| c + w * ((k as f64 + 0.5) / n as f64 - 0.5)).collect();
                make_empirical(&pts, None).map_err(|e| ConfigError::at(None, format!("invalid measure: {e}")))?
            }
        };

        let grid = GridSpec { dx: doc.float("solver", "dx")?, half_width: doc.opt_float("solver", "half_width")?, center: None };
        let solve = SolveOptions {
            t0: doc.float("solver", "t0")?,
            t_steps: doc.int("solver", "t_steps")?,
            grid,
            tol: doc.float("solver", "tol")?,
            max_picard: doc.int("solver", "max_picard")?,
            init: match doc.text("solver", "init") {
                Some("zero") => PicardInit::Zero,
                _ => PicardInit::Terminal,
            },
            relax: doc.float("solver", "relax")?,
        };
        let positive = [("solver", "dx"), ("solver", "tol"), ("experiment", "paired_bump"), ("experiment", "flow_bump")];
        for (s, k) in positive {
            if !(doc.float(s, k)? > 0.0) {
                return Err(ConfigError::at(doc.line(s, k), format!("`{k}` must be positive")));
            }
        }
        if !(solve.t0 >= 0.0 && solve.t0 <= horizon) {
            return Err(ConfigError::at(doc.line("solver", "t0"), format!("t0 must lie in [0, {horizon}]")));
        }
        if solve.t_steps < 2 {
            return Err(ConfigError::at(doc.line("solver", "t_steps"), "t_steps must be at least 2"));
        }

        let sweep_key = doc.text("experiment", "sweep_key").unwrap_or_default().to_string();
        let sweep_ok = sweep_key
            .split_once('.')
            .and_then(|(s, k)| field(s, k))
            .is_some_and(|f| f.kind == Kind::Float);
        if !sweep_ok {
            return Err(ConfigError::at(
                doc.line("experiment", "sweep_key"),
                format!("sweep_key must name a numeric key as section.key, got `{sweep_key}`"),
            ));
        }
        let bump_scales = doc.list("experiment", "bump_scales")?.unwrap_or_default();
        if bump_scales.is_empty() || bump_scales.iter().any(|&s| !(s > 0.0)) {
            return Err(ConfigError::at(doc.line("experiment", "bump_scales"), "bump_scales must be positive"));
        }
        let experiment = Experiment {
            seed: doc.int("experiment", "seed")? as u64,
            mc_trials: doc.int("experiment", "mc_trials")?,
            mc_atoms: doc.int("experiment", "mc_atoms")?,
            times: doc.list("experiment", "times")?,
            paired_bump: doc.float("experiment", "paired_bump")?,
            bump_scales,
            probes: doc.list("experiment", "probes")?.unwrap_or_default(),
            lipschitz_mode: match doc.text("experiment", "lipschitz_mode") {
                Some("w1") => LipschitzMode::W1,
                _ => LipschitzMode::W2,
            },
            lipschitz_variation_tol: doc.float("experiment", "lipschitz_variation_tol")?,
            lipschitz_oracle_tol: doc.opt_float("experiment", "lipschitz_oracle_tol")?,
            hessian_oracle_tol: doc.opt_float("experiment", "hessian_oracle_tol")?,
            flow_steps: doc.int("experiment", "flow_steps")?,
            paths_per_atom: doc.int("experiment", "paths_per_atom")?,
            flow_bump: doc.float("experiment", "flow_bump")?,
            noise: match doc.text("experiment", "noise") {
                Some("frozen") => NoiseMode::Frozen,
                _ => NoiseMode::Brownian,
            },
            eta: match doc.text("experiment", "eta") {
                Some("uniform") => EtaPattern::Uniform,
                Some("alternating") => EtaPattern::Alternating,
                _ => EtaPattern::Random,
            },
            gamma_slack: doc.float("experiment", "gamma_slack")?,
            lq_tol: doc.float("experiment", "lq_tol")?,
            lq_ratio: doc.float("experiment", "lq_ratio")?,
            residual_tol: doc.float("experiment", "residual_tol")?,
            probe: doc.text("experiment", "probe") == Some("true"),
            sweep_key,
            sweep_values: doc.list("experiment", "sweep_values")?,
        };
        if experiment.mc_atoms == 0 || experiment.mc_trials == 0 || experiment.paths_per_atom == 0 || experiment.flow_steps == 0 {
            return Err(ConfigError::at(None, "mc_trials, mc_atoms, paths_per_atom and flow_steps must be positive"));
        }
        let output = Output {
            dir: doc.text("output", "dir").map(str::to_string),
            t_stride: doc.int("output", "t_stride")?.max(1),
            x_stride: doc.int("output", "x_stride")?.max(1),
        };
        Ok(RunConfig { family, model, lambda, policy, example, mu0, solve, experiment, output, doc })
    }

    /// The same configuration with one value replaced.
    pub fn with_value(&self, section: &str, key: &str, value: &str) -> Result<Self, ConfigError> {
        let mut doc = self.doc.clone();
        doc.set(section, key, value)?;
        Self::from_document(doc)
    }

    pub fn echo(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        self.doc.echo()
    }
}
