//! Experiment configuration: TOML with `[world]`, `[train]`, and
//! `[experiment]` sections. Every violated constraint is reported at once.

use std::fmt;
use std::path::{Path, PathBuf};

use depo_core::driver::{sqrt_t_alpha, Arm, DriverConfig, WidthMode};
use depo_core::{FeatureGenerator, WorldSpec};
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Issue {
    Missing(String),
    Type { key: String, expected: &'static str },
    Range { key: String, constraint: String, got: String },
    Unknown(String),
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::Missing(k) => write!(f, "missing required key '{k}'"),
            Issue::Type { key, expected } => write!(f, "'{key}' must be {expected}"),
            Issue::Range { key, constraint, got } => write!(f, "'{key}' must be {constraint} (got {got})"),
            Issue::Unknown(k) => write!(f, "unknown key '{k}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid config:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
}

impl ConfigError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// The `alpha` key as written.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Value(f64),
    #[serde(serialize_with = "sqrt_t")]
    SqrtT,
}

fn sqrt_t<S: serde::Serializer>(s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str("sqrtT")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldSection {
    #[serde(rename = "M")]
    pub num_prompts: usize,
    #[serde(rename = "K")]
    pub pool_size: usize,
    pub d: usize,
    #[serde(rename = "S")]
    pub s_bound: f64,
    #[serde(rename = "R_max")]
    pub r_max: f64,
    pub generator: FeatureGenerator,
    pub seed: u64,
}

impl WorldSection {
    pub fn spec(&self) -> WorldSpec {
        let mut spec = WorldSpec::random(
            self.num_prompts,
            self.pool_size,
            self.d,
            self.s_bound,
            self.generator,
            self.seed,
        );
        spec.r_max = self.r_max;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub world: WorldSection,
    pub alpha_setting: AlphaSetting,
    /// Resolved training parameters.
    pub train: DriverConfig,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

pub const DEFAULT_S: f64 = 2.0;

const WORLD_KEYS: [&str; 7] = ["M", "K", "d", "S", "R_max", "generator", "seed"];
const TRAIN_KEYS: [&str; 15] = [
    "T",
    "beta",
    "alpha",
    "lambda",
    "H",
    "c_b",
    "epsilon",
    "buffer_capacity",
    "gd_steps",
    "gd_lr",
    "delta",
    "width_mode",
    "radius_uses_previous",
    "probe_pairs",
    "track_refreshed_regret",
];
const EXPERIMENT_KEYS: [&str; 2] = ["arms", "seeds"];

struct Reader<'a> {
    section: &'a str,
    table: Option<&'a Table>,
    issues: &'a mut Vec<Issue>,
}

impl Reader<'_> {
    fn key(&self, name: &str) -> String {
        format!("{}.{}", self.section, name)
    }

    fn raw(&self, name: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(name))
    }

    fn float(&mut self, name: &str, default: f64) -> f64 {
        match self.raw(name) {
            None => default,
            Some(Value::Float(v)) => *v,
            Some(Value::Integer(v)) => *v as f64,
            Some(_) => {
                let key = self.key(name);
                self.issues.push(Issue::Type { key, expected: "a number" });
                default
            }
        }
    }

    fn int(&mut self, name: &str, default: Option<i64>) -> Option<i64> {
        match self.raw(name) {
            None => {
                if default.is_none() {
                    let key = self.key(name);
                    self.issues.push(Issue::Missing(key));
                }
                default
            }
            Some(Value::Integer(v)) => Some(*v),
            Some(_) => {
                let key = self.key(name);
                self.issues.push(Issue::Type { key, expected: "an integer" });
                default
            }
        }
    }

    fn count(&mut self, name: &str, default: usize, min: usize) -> usize {
        let v = self.int(name, Some(default as i64)).unwrap_or(default as i64);
        if v < min as i64 {
            let key = self.key(name);
            self.issues.push(Issue::Range {
                key,
                constraint: format!(">= {min}"),
                got: v.to_string(),
            });
            return default;
        }
        v as usize
    }

    fn boolean(&mut self, name: &str, default: bool) -> bool {
        match self.raw(name) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                let key = self.key(name);
                self.issues.push(Issue::Type { key, expected: "true or false" });
                default
            }
        }
    }

    fn string(&mut self, name: &str) -> Option<String> {
        match self.raw(name) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                let key = self.key(name);
                self.issues.push(Issue::Type { key, expected: "a string" });
                None
            }
        }
    }

    fn unknown_keys(&mut self, known: &[&str]) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !known.contains(&k.as_str()) {
                    self.issues.push(Issue::Unknown(format!("{}.{}", self.section, k)));
                }
            }
        }
    }
}

fn check(issues: &mut Vec<Issue>, key: &str, ok: bool, constraint: &str, got: f64) {
    if !ok {
        issues.push(Issue::Range {
            key: key.into(),
            constraint: constraint.into(),
            got: got.to_string(),
        });
    }
}

fn section<'a>(root: &'a Table, name: &str, issues: &mut Vec<Issue>, required: bool) -> Option<&'a Table> {
    match root.get(name) {
        Some(Value::Table(t)) => Some(t),
        Some(_) => {
            issues.push(Issue::Type {
                key: name.into(),
                expected: "a table",
            });
            None
        }
        None => {
            if required {
                issues.push(Issue::Missing(name.into()));
            }
            None
        }
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let mut issues = Vec::new();
    for k in root.keys() {
        if !["world", "train", "experiment", "output_dir"].contains(&k.as_str()) {
            issues.push(Issue::Unknown(k.clone()));
        }
    }
    let world_t = section(&root, "world", &mut issues, true);
    let train_t = section(&root, "train", &mut issues, false);
    let exp_t = section(&root, "experiment", &mut issues, true);
    let defaults = DriverConfig::default();

    let world = {
        let mut r = Reader {
            section: "world",
            table: world_t,
            issues: &mut issues,
        };
        r.unknown_keys(&WORLD_KEYS);
        let num_prompts = r.count("M", 16, 1);
        let pool_size = r.count("K", 4, 2);
        let d = r.count("d", 4, 1);
        let s_bound = r.float("S", DEFAULT_S);
        let r_max = r.float("R_max", s_bound);
        let generator = match r.string("generator") {
            None => FeatureGenerator::Gaussian,
            Some(g) => g.parse().unwrap_or_else(|_| {
                r.issues.push(Issue::Range {
                    key: "world.generator".into(),
                    constraint: "one of gaussian, clustered".into(),
                    got: g,
                });
                FeatureGenerator::Gaussian
            }),
        };
        let seed = r.int("seed", None).unwrap_or(0);
        check(r.issues, "world.S", s_bound > 0.0 && s_bound.is_finite(), "> 0", s_bound);
        check(r.issues, "world.R_max", r_max > 0.0 && r_max.is_finite(), "> 0", r_max);
        check(r.issues, "world.seed", seed >= 0, ">= 0", seed as f64);
        WorldSection {
            num_prompts,
            pool_size,
            d,
            s_bound,
            r_max,
            generator,
            seed: seed.max(0) as u64,
        }
    };
    let cells = world.num_prompts.saturating_mul(world.pool_size).saturating_mul(world.pool_size);
    if cells > depo_core::world::ENUMERATION_BUDGET {
        issues.push(Issue::Range {
            key: "world.M*K^2".into(),
            constraint: format!("<= {}", depo_core::world::ENUMERATION_BUDGET),
            got: cells.to_string(),
        });
    }

    let (train, alpha_setting) = {
        let mut r = Reader {
            section: "train",
            table: train_t,
            issues: &mut issues,
        };
        r.unknown_keys(&TRAIN_KEYS);
        let rounds = r.count("T", defaults.rounds, 0);
        let alpha_setting = match r.raw("alpha") {
            None => AlphaSetting::SqrtT,
            Some(Value::String(s)) if s == "sqrtT" => AlphaSetting::SqrtT,
            Some(Value::Float(v)) => AlphaSetting::Value(*v),
            Some(Value::Integer(v)) => AlphaSetting::Value(*v as f64),
            Some(_) => {
                r.issues.push(Issue::Type {
                    key: "train.alpha".into(),
                    expected: "a number or \"sqrtT\"",
                });
                AlphaSetting::SqrtT
            }
        };
        let alpha = match alpha_setting {
            AlphaSetting::SqrtT => sqrt_t_alpha(rounds),
            AlphaSetting::Value(v) => v,
        };
        let width_mode = match r.string("width_mode").as_deref() {
            None | Some("empirical") => WidthMode::Empirical,
            Some("theoretical_true") => WidthMode::TheoreticalTrue,
            Some("theoretical_plugin") => WidthMode::TheoreticalPlugin,
            Some(other) => {
                r.issues.push(Issue::Range {
                    key: "train.width_mode".into(),
                    constraint: "one of empirical, theoretical_true, theoretical_plugin".into(),
                    got: other.into(),
                });
                WidthMode::Empirical
            }
        };
        let cfg = DriverConfig {
            rounds,
            beta: r.float("beta", defaults.beta),
            alpha,
            lambda: r.float("lambda", defaults.lambda),
            delta: r.float("delta", defaults.delta),
            refresh_interval: r.count("H", defaults.refresh_interval, 1),
            c_b: r.float("c_b", defaults.c_b),
            epsilon: r.float("epsilon", defaults.epsilon),
            buffer_capacity: r.count("buffer_capacity", defaults.buffer_capacity, 1),
            gd_steps: r.count("gd_steps", defaults.gd_steps, 0),
            gd_lr: r.float("gd_lr", defaults.gd_lr),
            width_mode,
            radius_uses_previous: r.boolean("radius_uses_previous", defaults.radius_uses_previous),
            probe_pairs: r.count("probe_pairs", defaults.probe_pairs, 0),
            track_refreshed_regret: r.boolean("track_refreshed_regret", defaults.track_refreshed_regret),
        };
        for v in cfg.violations() {
            // "name must be ..." from the driver
            let (name, rest) = v.split_once(' ').unwrap_or((&v, ""));
            let (constraint, got) = rest
                .trim_start_matches("must ")
                .trim_start_matches("be ")
                .trim_start_matches("lie in ")
                .rsplit_once(" (got ")
                .map(|(c, g)| (c.to_string(), g.trim_end_matches(')').to_string()))
                .unwrap_or((rest.to_string(), String::new()));
            r.issues.push(Issue::Range {
                key: format!("train.{name}"),
                constraint,
                got,
            });
        }
        (cfg, alpha_setting)
    };

    let (arms, seeds) = {
        let mut arms = Vec::new();
        let mut seeds = Vec::new();
        match exp_t.and_then(|t| t.get("arms")) {
            None => issues.push(Issue::Missing("experiment.arms".into())),
            Some(Value::Array(items)) => {
                for item in items {
                    match item.as_str().map(str::parse::<Arm>) {
                        Some(Ok(a)) if !arms.contains(&a) => arms.push(a),
                        Some(Ok(_)) => {}
                        _ => issues.push(Issue::Range {
                            key: "experiment.arms".into(),
                            constraint: "entries from depo, passive, uniform_bonus".into(),
                            got: item.to_string(),
                        }),
                    }
                }
                if items.is_empty() {
                    issues.push(Issue::Range {
                        key: "experiment.arms".into(),
                        constraint: "non-empty".into(),
                        got: "[]".into(),
                    });
                }
            }
            Some(_) => issues.push(Issue::Type {
                key: "experiment.arms".into(),
                expected: "an array of strings",
            }),
        }
        match exp_t.and_then(|t| t.get("seeds")) {
            None => issues.push(Issue::Missing("experiment.seeds".into())),
            Some(Value::Array(items)) => {
                for item in items {
                    match item.as_integer() {
                        Some(s) if s >= 0 => seeds.push(s as u64),
                        _ => issues.push(Issue::Range {
                            key: "experiment.seeds".into(),
                            constraint: "non-negative integers".into(),
                            got: item.to_string(),
                        }),
                    }
                }
                if items.is_empty() {
                    issues.push(Issue::Range {
                        key: "experiment.seeds".into(),
                        constraint: "non-empty".into(),
                        got: "[]".into(),
                    });
                }
            }
            Some(_) => issues.push(Issue::Type {
                key: "experiment.seeds".into(),
                expected: "an array of integers",
            }),
        }
        if let Some(t) = exp_t {
            for k in t.keys() {
                if !EXPERIMENT_KEYS.contains(&k.as_str()) {
                    issues.push(Issue::Unknown(format!("experiment.{k}")));
                }
            }
        }
        (arms, seeds)
    };

    let output_dir = match root.get("output_dir") {
        None => PathBuf::from("depo-out"),
        Some(Value::String(s)) => PathBuf::from(s),
        Some(_) => {
            issues.push(Issue::Type {
                key: "output_dir".into(),
                expected: "a string",
            });
            PathBuf::new()
        }
    };

    if !issues.is_empty() {
        return Err(ConfigError::Invalid(issues));
    }
    Ok(ExperimentConfig {
        world,
        alpha_setting,
        train,
        arms,
        seeds,
        output_dir,
    })
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}

impl ExperimentConfig {
    /// Replaces the world seed and every run seed; used for smoke tests.
    pub fn override_seeds(&mut self, seed: u64) {
        self.world.seed = seed;
        self.seeds = vec![seed];
    }

    /// Sets one `[train]` parameter from a `key=value` string.
    pub fn set_train_param(&mut self, key: &str, value: &str) -> Result<(), String> {
        let real = || value.parse::<f64>().map_err(|_| format!("{key}: '{value}' is not a number"));
        let int = || value.parse::<usize>().map_err(|_| format!("{key}: '{value}' is not a count"));
        let t = &mut self.train;
        match key {
            "T" => {
                t.rounds = int()?;
                if self.alpha_setting == AlphaSetting::SqrtT {
                    t.alpha = sqrt_t_alpha(t.rounds);
                }
            }
            "alpha" if value == "sqrtT" => {
                self.alpha_setting = AlphaSetting::SqrtT;
                t.alpha = sqrt_t_alpha(t.rounds);
            }
            "alpha" => {
                t.alpha = real()?;
                self.alpha_setting = AlphaSetting::Value(t.alpha);
            }
            "beta" => t.beta = real()?,
            "lambda" => t.lambda = real()?,
            "delta" => t.delta = real()?,
            "H" => t.refresh_interval = int()?,
            "c_b" => t.c_b = real()?,
            "epsilon" => t.epsilon = real()?,
            "buffer_capacity" => t.buffer_capacity = int()?,
            "gd_steps" => t.gd_steps = int()?,
            "gd_lr" => t.gd_lr = real()?,
            other => return Err(format!("'{other}' cannot be swept")),
        }
        let v = t.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(v.join("; "))
        }
    }
}
