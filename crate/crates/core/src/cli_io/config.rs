//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! mesh.dim = 2
//! coeff.generator = checkerboard
//! ```
//!
//! Every line is `section.key = value`. Unset keys keep their defaults.
//! Parsing collects every problem before failing, each tagged with its line.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Identity,
    Checkerboard,
    Random,
}

impl Generator {
    pub const ALL: [Generator; 3] = [
        Generator::Identity,
        Generator::Checkerboard,
        Generator::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Identity => "identity",
            Generator::Checkerboard => "checkerboard",
            Generator::Random => "random",
        }
    }

    fn parse(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|g| g.name()).collect();
                format!(
                    "unknown generator `{s}`; valid generators: {}",
                    valid.join(", ")
                )
            })
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub dim: usize,
    /// Box side length along every axis.
    pub side: f64,
    /// Cells per axis.
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffConfig {
    pub generator: Generator,
    /// Multiplier of the identity generator.
    pub scale: f64,
    pub theta: f64,
    pub big_theta: f64,
    /// Blocks per axis for the checkerboard and random generators.
    pub blocks: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub delta: f64,
    pub epsilon0: f64,
    /// `0` picks a quarter of the initial maximum.
    pub smear0: f64,
    pub stages: usize,
    pub factor: f64,
    pub max_inner: usize,
    pub tol_rel: f64,
    pub window: usize,
    /// `0` picks `h²/Θ`.
    pub step_init: f64,
    pub backtrack: f64,
    pub armijo_c: f64,
    pub target_volume: f64,
    pub init_volume: f64,
    /// Independent starts; extra starts shift the initial bump by seeded offsets.
    pub starts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    pub tol: f64,
    pub inflate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub enabled: bool,
    pub r_max: f64,
    pub levels: usize,
    /// Lattice spacing of interior sample points.
    pub spacing: f64,
    pub caccioppoli_samples: usize,
    pub caccioppoli_r0: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: String,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mesh: MeshConfig,
    pub coeff: CoeffConfig,
    pub optimizer: OptimizerConfig,
    pub eigen: EigenConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mesh: MeshConfig {
                dim: 2,
                side: 3.0,
                resolution: 128,
            },
            coeff: CoeffConfig {
                generator: Generator::Identity,
                scale: 1.0,
                theta: 1.0,
                big_theta: 10.0,
                blocks: 16,
                seed: 1,
            },
            optimizer: OptimizerConfig {
                delta: 1e-3,
                epsilon0: 0.02,
                smear0: 0.0,
                stages: 6,
                factor: 0.5,
                max_inner: 4000,
                tol_rel: 1e-7,
                window: 25,
                step_init: 0.0,
                backtrack: 0.5,
                armijo_c: 1e-4,
                target_volume: 1.0,
                init_volume: 0.9,
                starts: 1,
                seed: 0,
            },
            eigen: EigenConfig {
                tol: 1e-10,
                inflate: false,
            },
            diagnostics: DiagnosticsConfig {
                enabled: true,
                r_max: 0.28125,
                levels: 3,
                spacing: 0.09375,
                caccioppoli_samples: 50,
                caccioppoli_r0: 0.25,
                seed: 7,
            },
            output: OutputConfig {
                dir: "runs".into(),
                run_id: "run".into(),
            },
        }
    }
}

/// Every recognized key, in serialization order.
pub const KEYS: &[&str] = &[
    "mesh.dim",
    "mesh.side",
    "mesh.resolution",
    "coeff.generator",
    "coeff.scale",
    "coeff.theta",
    "coeff.big_theta",
    "coeff.blocks",
    "coeff.seed",
    "optimizer.delta",
    "optimizer.epsilon0",
    "optimizer.smear0",
    "optimizer.stages",
    "optimizer.factor",
    "optimizer.max_inner",
    "optimizer.tol_rel",
    "optimizer.window",
    "optimizer.step_init",
    "optimizer.backtrack",
    "optimizer.armijo_c",
    "optimizer.target_volume",
    "optimizer.init_volume",
    "optimizer.starts",
    "optimizer.seed",
    "eigen.tol",
    "eigen.inflate",
    "diagnostics.enabled",
    "diagnostics.r_max",
    "diagnostics.levels",
    "diagnostics.spacing",
    "diagnostics.caccioppoli_samples",
    "diagnostics.caccioppoli_r0",
    "diagnostics.seed",
    "output.dir",
    "output.run_id",
];

fn num<T: std::str::FromStr>(v: &str, what: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("expected {what}, got `{v}`"))
}

fn real(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = num(v, "a real number")?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite real number, got `{v}`"))
    }
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let c = self;
        match key {
            "mesh.dim" => c.mesh.dim = num(v, "an integer")?,
            "mesh.side" => c.mesh.side = real(v)?,
            "mesh.resolution" => c.mesh.resolution = num(v, "an integer")?,
            "coeff.generator" => c.coeff.generator = Generator::parse(v)?,
            "coeff.scale" => c.coeff.scale = real(v)?,
            "coeff.theta" => c.coeff.theta = real(v)?,
            "coeff.big_theta" => c.coeff.big_theta = real(v)?,
            "coeff.blocks" => c.coeff.blocks = num(v, "an integer")?,
            "coeff.seed" => c.coeff.seed = num(v, "an unsigned integer")?,
            "optimizer.delta" => c.optimizer.delta = real(v)?,
            "optimizer.epsilon0" => c.optimizer.epsilon0 = real(v)?,
            "optimizer.smear0" => c.optimizer.smear0 = real(v)?,
            "optimizer.stages" => c.optimizer.stages = num(v, "an integer")?,
            "optimizer.factor" => c.optimizer.factor = real(v)?,
            "optimizer.max_inner" => c.optimizer.max_inner = num(v, "an integer")?,
            "optimizer.tol_rel" => c.optimizer.tol_rel = real(v)?,
            "optimizer.window" => c.optimizer.window = num(v, "an integer")?,
            "optimizer.step_init" => c.optimizer.step_init = real(v)?,
            "optimizer.backtrack" => c.optimizer.backtrack = real(v)?,
            "optimizer.armijo_c" => c.optimizer.armijo_c = real(v)?,
            "optimizer.target_volume" => c.optimizer.target_volume = real(v)?,
            "optimizer.init_volume" => c.optimizer.init_volume = real(v)?,
            "optimizer.starts" => c.optimizer.starts = num(v, "an integer")?,
            "optimizer.seed" => c.optimizer.seed = num(v, "an unsigned integer")?,
            "eigen.tol" => c.eigen.tol = real(v)?,
            "eigen.inflate" => c.eigen.inflate = boolean(v)?,
            "diagnostics.enabled" => c.diagnostics.enabled = boolean(v)?,
            "diagnostics.r_max" => c.diagnostics.r_max = real(v)?,
            "diagnostics.levels" => c.diagnostics.levels = num(v, "an integer")?,
            "diagnostics.spacing" => c.diagnostics.spacing = real(v)?,
            "diagnostics.caccioppoli_samples" => {
                c.diagnostics.caccioppoli_samples = num(v, "an integer")?
            }
            "diagnostics.caccioppoli_r0" => c.diagnostics.caccioppoli_r0 = real(v)?,
            "diagnostics.seed" => c.diagnostics.seed = num(v, "an unsigned integer")?,
            "output.dir" => {
                if v.is_empty() {
                    return Err("output directory must be nonempty".into());
                }
                c.output.dir = v.to_string()
            }
            "output.run_id" => c.output.run_id = v.to_string(),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Textual value of a key, in a form `set` reads back exactly.
    pub fn get(&self, key: &str) -> Option<String> {
        let c = self;
        Some(match key {
            "mesh.dim" => c.mesh.dim.to_string(),
            "mesh.side" => c.mesh.side.to_string(),
            "mesh.resolution" => c.mesh.resolution.to_string(),
            "coeff.generator" => c.coeff.generator.to_string(),
            "coeff.scale" => c.coeff.scale.to_string(),
            "coeff.theta" => c.coeff.theta.to_string(),
            "coeff.big_theta" => c.coeff.big_theta.to_string(),
            "coeff.blocks" => c.coeff.blocks.to_string(),
            "coeff.seed" => c.coeff.seed.to_string(),
            "optimizer.delta" => c.optimizer.delta.to_string(),
            "optimizer.epsilon0" => c.optimizer.epsilon0.to_string(),
            "optimizer.smear0" => c.optimizer.smear0.to_string(),
            "optimizer.stages" => c.optimizer.stages.to_string(),
            "optimizer.factor" => c.optimizer.factor.to_string(),
            "optimizer.max_inner" => c.optimizer.max_inner.to_string(),
            "optimizer.tol_rel" => c.optimizer.tol_rel.to_string(),
            "optimizer.window" => c.optimizer.window.to_string(),
            "optimizer.step_init" => c.optimizer.step_init.to_string(),
            "optimizer.backtrack" => c.optimizer.backtrack.to_string(),
            "optimizer.armijo_c" => c.optimizer.armijo_c.to_string(),
            "optimizer.target_volume" => c.optimizer.target_volume.to_string(),
            "optimizer.init_volume" => c.optimizer.init_volume.to_string(),
            "optimizer.starts" => c.optimizer.starts.to_string(),
            "optimizer.seed" => c.optimizer.seed.to_string(),
            "eigen.tol" => c.eigen.tol.to_string(),
            "eigen.inflate" => c.eigen.inflate.to_string(),
            "diagnostics.enabled" => c.diagnostics.enabled.to_string(),
            "diagnostics.r_max" => c.diagnostics.r_max.to_string(),
            "diagnostics.levels" => c.diagnostics.levels.to_string(),
            "diagnostics.spacing" => c.diagnostics.spacing.to_string(),
            "diagnostics.caccioppoli_samples" => c.diagnostics.caccioppoli_samples.to_string(),
            "diagnostics.caccioppoli_r0" => c.diagnostics.caccioppoli_r0.to_string(),
            "diagnostics.seed" => c.diagnostics.seed.to_string(),
            "output.dir" => c.output.dir.clone(),
            "output.run_id" => c.output.run_id.clone(),
            _ => return None,
        })
    }

    /// Invariant violations as `(key, message)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut check = |ok: bool, key: &'static str, msg: &str| {
            if !ok {
                out.push((key, msg.to_string()));
            }
        };
        let c = self;
        check((2..=3).contains(&c.mesh.dim), "mesh.dim", "must be 2 or 3");
        check(c.mesh.side > 0.0, "mesh.side", "must be positive");
        check(
            c.mesh.resolution >= 2,
            "mesh.resolution",
            "must be at least 2",
        );
        check(c.coeff.scale > 0.0, "coeff.scale", "must be positive");
        check(c.coeff.theta > 0.0, "coeff.theta", "must be positive");
        check(
            c.coeff.big_theta >= c.coeff.theta,
            "coeff.big_theta",
            "must be at least coeff.theta",
        );
        check(
            c.coeff.blocks >= 1 && c.coeff.blocks <= c.mesh.resolution,
            "coeff.blocks",
            "must lie in [1, mesh.resolution]",
        );
        let o = &c.optimizer;
        check(o.delta > 0.0, "optimizer.delta", "must be positive");
        check(o.epsilon0 > 0.0, "optimizer.epsilon0", "must be positive");
        check(o.smear0 >= 0.0, "optimizer.smear0", "must be nonnegative");
        check(o.stages >= 1, "optimizer.stages", "must be at least 1");
        check(
            o.factor > 0.0 && o.factor <= 1.0,
            "optimizer.factor",
            "must lie in (0, 1]",
        );
        check(
            o.max_inner >= 1,
            "optimizer.max_inner",
            "must be at least 1",
        );
        check(o.tol_rel > 0.0, "optimizer.tol_rel", "must be positive");
        check(o.window >= 1, "optimizer.window", "must be at least 1");
        check(
            o.step_init >= 0.0,
            "optimizer.step_init",
            "must be nonnegative",
        );
        check(
            o.backtrack > 0.0 && o.backtrack < 1.0,
            "optimizer.backtrack",
            "must lie in (0, 1)",
        );
        check(
            o.armijo_c > 0.0 && o.armijo_c < 1.0,
            "optimizer.armijo_c",
            "must lie in (0, 1)",
        );
        check(
            o.target_volume > 0.0,
            "optimizer.target_volume",
            "must be positive",
        );
        check(
            o.init_volume > 0.0 && o.init_volume <= o.target_volume,
            "optimizer.init_volume",
            "must lie in (0, optimizer.target_volume]",
        );
        check(o.starts >= 1, "optimizer.starts", "must be at least 1");
        check(
            c.eigen.tol > 0.0 && c.eigen.tol < 1.0,
            "eigen.tol",
            "must lie in (0, 1)",
        );
        let d = &c.diagnostics;
        check(d.r_max > 0.0, "diagnostics.r_max", "must be positive");
        check(d.levels >= 3, "diagnostics.levels", "must be at least 3");
        check(d.spacing > 0.0, "diagnostics.spacing", "must be positive");
        check(
            d.caccioppoli_r0 > 0.0,
            "diagnostics.caccioppoli_r0",
            "must be positive",
        );
        check(
            is_filesystem_safe(&c.output.run_id),
            "output.run_id",
            "must be nonempty and use only letters, digits, `-`, `_` and `.`",
        );
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            return Ok(());
        }
        Err(Error::Config(
            v.into_iter()
                .map(|(key, m)| ConfigError {
                    line: 0,
                    message: format!("{key}: {m}"),
                })
                .collect(),
        ))
    }

    /// One `key = value` line per key, parseable by [`parse_config`].
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for key in KEYS {
            let s = key.split('.').next().unwrap_or("");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            out.push_str(&format!("{key} = {}\n", self.get(key).unwrap_or_default()));
        }
        out
    }
}

pub fn is_filesystem_safe(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Parses and validates a config, reporting every problem with its line.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut errors = Vec::new();
    let mut lines_of: HashMap<&str, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            errors.push(ConfigError {
                line,
                message: format!("expected `section.key = value`, got `{body}`"),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        match cfg.set(key, value) {
            Ok(()) => {
                if let Some(k) = KEYS.iter().find(|k| **k == key) {
                    lines_of.insert(k, line);
                }
            }
            Err(message) => errors.push(ConfigError {
                line,
                message: format!("{key}: {message}"),
            }),
        }
    }
    for (key, message) in cfg.violations() {
        errors.push(ConfigError {
            line: lines_of.get(key).copied().unwrap_or(0),
            message: format!("{key}: {message}"),
        });
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(Error::Config(errors))
    }
}
