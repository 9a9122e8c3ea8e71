//! Line-oriented run configuration: `section.key = value`, one per
//! line, `#` comments. Runs carry ~20 parameters and the resolved
//! configuration is archived next to the reports (`run.meta`), so the
//! format round-trips: serializing a parsed [`RunConfig`] and parsing
//! it back yields an equal value.
//!
//! ```text
//! model.sigma = 2.0
//! model.delta = 2.0
//! model.b = 0.0
//! model.p = 0.75
//!
//! curve.kind = constant        # constant | linear | piecewise | exp
//! curve.value = 1.0            # constant
//! # curve.intercept / curve.slope          (linear)
//! # curve.knots = 0:1, 1:3, 2:0.5          (piecewise)
//! # curve.a / curve.c / curve.k            (exp: a + (c-a) e^{-kt})
//! curve.domain_end = 1.0       # not used for piecewise (last knot)
//!
//! sim.dt = 1e-3
//! sim.horizon = 1.0
//! sim.paths = 10000
//! sim.seed = 12345
//! sim.r0 = 1.0
//! # sim.band_eps = ...         # default sqrt(dt)
//! # sim.truncation_level = 1000
//!
//! # check.horizon = 1.0        # default sim.horizon
//! # verify.experiments = positivity, local-time, ...
//! # verify.eta = 0.1
//! # verify.ladder = 4e-3, 2e-3, 1e-3
//! # out.dump_paths = 0
//! # threads = 0                # 0 = machine parallelism
//! ```

use skewcir::engine::SimConfig;
use skewcir::model::{Curve, ModelParams};
use skewcir::report::fmt_f64;
use std::collections::BTreeMap;

/// Default seed used when the config does not pin one. Fixed so runs
/// are reproducible by default; never derived from the clock.
pub const DEFAULT_SEED: u64 = 12345;

/// Default step-size ladder of the uniqueness-decay experiment.
pub const DEFAULT_LADDER: [f64; 3] = [4e-3, 2e-3, 1e-3];

/// Every experiment the `verify` subcommand knows, in suite order.
pub const ALL_EXPERIMENTS: [&str; 8] = [
    "positivity",
    "local-time",
    "local-time-control",
    "supinf",
    "martingale",
    "martingale-control",
    "uniqueness-decay",
    "harmonic",
];

/// A configuration problem that maps to exit code 1 (usage: missing
/// keys, malformed lines) as opposed to exit code 2 (validation:
/// well-formed but out-of-range values).
#[derive(Debug)]
pub enum ConfigError {
    Usage(String),
    Validation(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Usage(msg) => write!(f, "{msg}"),
            ConfigError::Validation(msg) => write!(f, "{msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams,
    pub curve: Curve,
    pub sim: SimConfig,
    pub check_horizon: f64,
    pub experiments: Vec<String>,
    pub eta: f64,
    pub ladder: Vec<f64>,
    pub threads: usize,
    pub dump_paths: usize,
}

fn parse_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64, ConfigError> {
    let raw = map
        .get(key)
        .ok_or_else(|| ConfigError::Usage(format!("missing required key `{key}`")))?;
    raw.parse()
        .map_err(|_| ConfigError::Usage(format!("key `{key}`: `{raw}` is not a number")))
}

fn parse_f64_opt(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>, ConfigError> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| ConfigError::Usage(format!("key `{key}`: `{raw}` is not a number"))),
    }
}

fn parse_usize_opt(map: &BTreeMap<String, String>, key: &str) -> Result<Option<usize>, ConfigError> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| ConfigError::Usage(format!("key `{key}`: `{raw}` is not an integer"))),
    }
}

impl RunConfig {
    /// Parse the config text. Structural problems (missing sections,
    /// unparsable numbers, unknown keys) are usage errors; out-of-range
    /// values are validation errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::Usage(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }

        let known = |key: &str| {
            matches!(
                key,
                "model.sigma"
                    | "model.delta"
                    | "model.b"
                    | "model.p"
                    | "curve.kind"
                    | "curve.value"
                    | "curve.intercept"
                    | "curve.slope"
                    | "curve.knots"
                    | "curve.a"
                    | "curve.c"
                    | "curve.k"
                    | "curve.domain_end"
                    | "sim.dt"
                    | "sim.horizon"
                    | "sim.paths"
                    | "sim.seed"
                    | "sim.band_eps"
                    | "sim.r0"
                    | "sim.truncation_level"
                    | "check.horizon"
                    | "verify.experiments"
                    | "verify.eta"
                    | "verify.ladder"
                    | "threads"
                    | "out.dump_paths"
            )
        };
        if let Some(unknown) = map.keys().find(|k| !known(k)) {
            return Err(ConfigError::Usage(format!("unknown key `{unknown}`")));
        }

        if !map.keys().any(|k| k.starts_with("model.")) {
            return Err(ConfigError::Usage("missing model section".into()));
        }
        let params = ModelParams::new(
            parse_f64(&map, "model.sigma")?,
            parse_f64(&map, "model.delta")?,
            parse_f64(&map, "model.b")?,
            parse_f64(&map, "model.p")?,
        )
        .map_err(|e| ConfigError::Validation(e.to_string()))?;

        let kind = map
            .get("curve.kind")
            .ok_or_else(|| ConfigError::Usage("missing curve section (curve.kind)".into()))?
            .as_str();
        let curve = match kind {
            "constant" => Curve::constant(
                parse_f64(&map, "curve.value")?,
                parse_f64(&map, "curve.domain_end")?,
            ),
            "linear" => Curve::linear(
                parse_f64(&map, "curve.intercept")?,
                parse_f64(&map, "curve.slope")?,
                parse_f64(&map, "curve.domain_end")?,
            ),
            "piecewise" => {
                let raw = map
                    .get("curve.knots")
                    .ok_or_else(|| ConfigError::Usage("piecewise curve needs curve.knots".into()))?;
                let mut knots = Vec::new();
                for item in raw.split(',') {
                    let item = item.trim();
                    if item.is_empty() {
                        continue;
                    }
                    let (t, v) = item.split_once(':').ok_or_else(|| {
                        ConfigError::Usage(format!("knot `{item}`: expected `time:value`"))
                    })?;
                    let t: f64 = t.trim().parse().map_err(|_| {
                        ConfigError::Usage(format!("knot `{item}`: bad time"))
                    })?;
                    let v: f64 = v.trim().parse().map_err(|_| {
                        ConfigError::Usage(format!("knot `{item}`: bad value"))
                    })?;
                    knots.push((t, v));
                }
                Curve::piecewise_linear(knots)
            }
            "exp" => Curve::exp_relaxation(
                parse_f64(&map, "curve.a")?,
                parse_f64(&map, "curve.c")?,
                parse_f64(&map, "curve.k")?,
                parse_f64(&map, "curve.domain_end")?,
            ),
            other => {
                return Err(ConfigError::Usage(format!(
                    "curve.kind `{other}` is not one of constant|linear|piecewise|exp"
                )))
            }
        }
        .map_err(|e| ConfigError::Validation(e.to_string()))?;

        let dt = parse_f64(&map, "sim.dt")?;
        let horizon = parse_f64(&map, "sim.horizon")?;
        let n_paths = parse_usize_opt(&map, "sim.paths")?
            .ok_or_else(|| ConfigError::Usage("missing required key `sim.paths`".into()))?;
        let seed = match map.get("sim.seed") {
            None => DEFAULT_SEED,
            Some(raw) => raw
                .parse()
                .map_err(|_| ConfigError::Usage(format!("sim.seed: `{raw}` is not a u64")))?,
        };
        let mut sim = SimConfig::new(dt, horizon, n_paths, seed);
        sim.r0 = parse_f64(&map, "sim.r0")?;
        if let Some(eps) = parse_f64_opt(&map, "sim.band_eps")? {
            sim.band_eps = eps;
        }
        if let Some(level) = parse_f64_opt(&map, "sim.truncation_level")? {
            sim.truncation_level = level;
        }
        sim.validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;

        let check_horizon = parse_f64_opt(&map, "check.horizon")?.unwrap_or(sim.horizon);

        let experiments = match map.get("verify.experiments") {
            None => ALL_EXPERIMENTS.iter().map(|s| s.to_string()).collect(),
            Some(raw) => {
                let list: Vec<String> = raw
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                for name in &list {
                    if !ALL_EXPERIMENTS.contains(&name.as_str()) {
                        return Err(ConfigError::Usage(format!(
                            "unknown experiment `{name}` (known: {})",
                            ALL_EXPERIMENTS.join(", ")
                        )));
                    }
                }
                list
            }
        };

        let eta = parse_f64_opt(&map, "verify.eta")?.unwrap_or(0.1);
        let ladder = match map.get("verify.ladder") {
            None => DEFAULT_LADDER.to_vec(),
            Some(raw) => {
                let mut out = Vec::new();
                for item in raw.split(',') {
                    let item = item.trim();
                    if item.is_empty() {
                        continue;
                    }
                    out.push(item.parse().map_err(|_| {
                        ConfigError::Usage(format!("verify.ladder: `{item}` is not a number"))
                    })?);
                }
                out
            }
        };
        let threads = parse_usize_opt(&map, "threads")?.unwrap_or(0);
        let dump_paths = parse_usize_opt(&map, "out.dump_paths")?.unwrap_or(0);

        Ok(Self {
            params,
            curve,
            sim,
            check_horizon,
            experiments,
            eta,
            ladder,
            threads,
            dump_paths,
        })
    }

    /// Serialize the resolved configuration in the same grammar;
    /// parsing the output yields an equal `RunConfig`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model.sigma = {}\n", fmt_f64(self.params.sigma())));
        out.push_str(&format!("model.delta = {}\n", fmt_f64(self.params.delta())));
        out.push_str(&format!("model.b = {}\n", fmt_f64(self.params.b())));
        out.push_str(&format!("model.p = {}\n", fmt_f64(self.params.p())));
        match &self.curve {
            Curve::Constant { value, domain_end } => {
                out.push_str("curve.kind = constant\n");
                out.push_str(&format!("curve.value = {}\n", fmt_f64(*value)));
                out.push_str(&format!("curve.domain_end = {}\n", fmt_f64(*domain_end)));
            }
            Curve::Linear { intercept, slope, domain_end } => {
                out.push_str("curve.kind = linear\n");
                out.push_str(&format!("curve.intercept = {}\n", fmt_f64(*intercept)));
                out.push_str(&format!("curve.slope = {}\n", fmt_f64(*slope)));
                out.push_str(&format!("curve.domain_end = {}\n", fmt_f64(*domain_end)));
            }
            Curve::PiecewiseLinear { knots } => {
                out.push_str("curve.kind = piecewise\n");
                let items: Vec<String> = knots
                    .iter()
                    .map(|(t, v)| format!("{}:{}", fmt_f64(*t), fmt_f64(*v)))
                    .collect();
                out.push_str(&format!("curve.knots = {}\n", items.join(", ")));
            }
            Curve::ExpRelaxation { a, c, k, domain_end } => {
                out.push_str("curve.kind = exp\n");
                out.push_str(&format!("curve.a = {}\n", fmt_f64(*a)));
                out.push_str(&format!("curve.c = {}\n", fmt_f64(*c)));
                out.push_str(&format!("curve.k = {}\n", fmt_f64(*k)));
                out.push_str(&format!("curve.domain_end = {}\n", fmt_f64(*domain_end)));
            }
        }
        out.push_str(&format!("sim.dt = {}\n", fmt_f64(self.sim.dt)));
        out.push_str(&format!("sim.horizon = {}\n", fmt_f64(self.sim.horizon)));
        out.push_str(&format!("sim.paths = {}\n", self.sim.n_paths));
        out.push_str(&format!("sim.seed = {}\n", self.sim.seed));
        out.push_str(&format!("sim.band_eps = {}\n", fmt_f64(self.sim.band_eps)));
        out.push_str(&format!("sim.r0 = {}\n", fmt_f64(self.sim.r0)));
        out.push_str(&format!(
            "sim.truncation_level = {}\n",
            fmt_f64(self.sim.truncation_level)
        ));
        out.push_str(&format!("check.horizon = {}\n", fmt_f64(self.check_horizon)));
        out.push_str(&format!("verify.experiments = {}\n", self.experiments.join(", ")));
        out.push_str(&format!("verify.eta = {}\n", fmt_f64(self.eta)));
        let ladder: Vec<String> = self.ladder.iter().map(|d| fmt_f64(*d)).collect();
        out.push_str(&format!("verify.ladder = {}\n", ladder.join(", ")));
        out.push_str(&format!("threads = {}\n", self.threads));
        out.push_str(&format!("out.dump_paths = {}\n", self.dump_paths));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# default verification setup
model.sigma = 2.0
model.delta = 2.0
model.b = 0.0
model.p = 0.75

curve.kind = constant
curve.value = 1.0
curve.domain_end = 1.0

sim.dt = 1e-3
sim.horizon = 1.0
sim.paths = 1000
sim.seed = 42
sim.r0 = 1.0
";

    #[test]
    fn parses_sample_with_defaults() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.params.p(), 0.75);
        assert_eq!(cfg.sim.n_paths, 1000);
        assert_eq!(cfg.sim.seed, 42);
        assert_eq!(cfg.sim.band_eps, 1e-3f64.sqrt());
        assert_eq!(cfg.check_horizon, 1.0);
        assert_eq!(cfg.experiments.len(), ALL_EXPERIMENTS.len());
        assert_eq!(cfg.ladder, DEFAULT_LADDER.to_vec());
        assert_eq!(cfg.threads, 0);
    }

    #[test]
    fn round_trips() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let text = cfg.to_text();
        let reparsed = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, reparsed);

        let piecewise = "\
model.sigma = 2.0
model.delta = 2.0
model.b = 1.0
model.p = 0.25
curve.kind = piecewise
curve.knots = 0:1, 1:3, 2:0.5
sim.dt = 1e-3
sim.horizon = 1.5
sim.paths = 10
sim.r0 = 0.5
verify.experiments = positivity, harmonic
verify.ladder = 4e-3, 2e-3
threads = 2
";
        let cfg = RunConfig::parse(piecewise).unwrap();
        assert_eq!(cfg.sim.seed, DEFAULT_SEED);
        assert_eq!(cfg.experiments, vec!["positivity", "harmonic"]);
        let reparsed = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn missing_curve_is_usage_error() {
        let text = SAMPLE
            .lines()
            .filter(|l| !l.starts_with("curve."))
            .collect::<Vec<_>>()
            .join("\n");
        match RunConfig::parse(&text) {
            Err(ConfigError::Usage(msg)) => assert!(msg.contains("curve"), "{msg}"),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_p_is_validation_error() {
        let text = SAMPLE.replace("model.p = 0.75", "model.p = 1.2");
        match RunConfig::parse(&text) {
            Err(ConfigError::Validation(msg)) => {
                assert!(msg.contains("p must lie in (0,1)"), "{msg}")
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_experiments_are_usage_errors() {
        let text = format!("{SAMPLE}\nmodel.zeta = 1\n");
        assert!(matches!(RunConfig::parse(&text), Err(ConfigError::Usage(_))));
        let text = format!("{SAMPLE}\nverify.experiments = warp-drive\n");
        assert!(matches!(RunConfig::parse(&text), Err(ConfigError::Usage(_))));
    }

    #[test]
    fn empty_experiment_list_parses_to_empty() {
        // The verify command turns an explicitly empty selection into a
        // usage error; parsing keeps it verbatim.
        let text = format!("{SAMPLE}\nverify.experiments =\n");
        let cfg = RunConfig::parse(&text).unwrap();
        assert!(cfg.experiments.is_empty());
    }
}
