//! Run configuration: presets, an optional JSON file and command-line flags,
//! merged with precedence flags > file > preset > defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use wmr_core::beamforming::{db_to_linear, Tolerances, DEFAULT_H_MAX, DEFAULT_H_MIN};
use wmr_core::metrics::parse_rational;
use wmr_core::model::{Instance, SystemParams};
use wmr_core::{Placement, Rational, ReduceAssignment};

use crate::error::CliError;

pub const PRESETS: [&str; 6] =
    ["fig1", "example-4-6", "example-5-10", "table2", "fig2", "graded-1-2-3"];

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_POWER_DB: f64 = 30.0;
pub const DEFAULT_TAU: usize = 64;

/// A number or a string such as `"3/2"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(serde_json::Number),
    Text(String),
}

impl Scalar {
    fn to_rational(&self, field: &str) -> Result<Rational, CliError> {
        let text = match self {
            Scalar::Number(n) => n.to_string(),
            Scalar::Text(t) => t.clone(),
        };
        parse_rational(&text)
            .map_err(|_| CliError::config(format!("field `{field}`: {text:?} is not a number")))
    }
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceLayer {
    pub zf_tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub gain_floor: Option<f64>,
    pub rank_tol: Option<f64>,
}

/// One source of settings; unset fields fall through to the layer below.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub preset: Option<String>,
    #[serde(rename = "K")]
    pub k: Option<u32>,
    #[serde(rename = "N")]
    pub n: Option<u32>,
    #[serde(rename = "Q")]
    pub q: Option<u32>,
    pub r: Option<Scalar>,
    pub r_values: Option<Vec<Scalar>>,
    pub seed: Option<u64>,
    /// Linear per-node power. Mutually exclusive with `power_db` in one layer.
    pub power: Option<f64>,
    pub power_db: Option<f64>,
    pub noise: Option<bool>,
    pub tau: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    /// Instance document; relative paths in a file resolve against its directory.
    pub placement: Option<PathBuf>,
    pub simulate: Option<bool>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub tolerances: Option<ToleranceLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Power {
    Linear(f64),
    Db(f64),
}

impl Layer {
    fn power_setting(&self) -> Result<Option<Power>, CliError> {
        match (self.power, self.power_db) {
            (Some(_), Some(_)) => {
                Err(CliError::config("fields `power` and `power_db` are mutually exclusive"))
            }
            (Some(p), None) => Ok(Some(Power::Linear(p))),
            (None, Some(db)) => Ok(Some(Power::Db(db))),
            (None, None) => Ok(None),
        }
    }

    /// `self` over `lower`.
    fn over(self, lower: Layer) -> Layer {
        let tolerances = match (self.tolerances, lower.tolerances) {
            (Some(a), Some(b)) => Some(ToleranceLayer {
                zf_tol: a.zf_tol.or(b.zf_tol),
                residual_tol: a.residual_tol.or(b.residual_tol),
                gain_floor: a.gain_floor.or(b.gain_floor),
                rank_tol: a.rank_tol.or(b.rank_tol),
            }),
            (a, b) => a.or(b),
        };
        let (power, power_db) = if self.power.is_some() || self.power_db.is_some() {
            (self.power, self.power_db)
        } else {
            (lower.power, lower.power_db)
        };
        Layer {
            preset: self.preset.or(lower.preset),
            k: self.k.or(lower.k),
            n: self.n.or(lower.n),
            q: self.q.or(lower.q),
            r: self.r.or(lower.r),
            r_values: self.r_values.or(lower.r_values),
            seed: self.seed.or(lower.seed),
            power,
            power_db,
            noise: self.noise.or(lower.noise),
            tau: self.tau.or(lower.tau),
            workers: self.workers.or(lower.workers),
            out: self.out.or(lower.out),
            placement: self.placement.or(lower.placement),
            simulate: self.simulate.or(lower.simulate),
            h_min: self.h_min.or(lower.h_min),
            h_max: self.h_max.or(lower.h_max),
            tolerances,
        }
    }
}

struct Preset {
    layer: Layer,
    instance: Option<Instance>,
}

fn symmetric_preset(k: u32, q: u32, n: u32, r: u32) -> Layer {
    Layer {
        k: Some(k),
        q: Some(q),
        n: Some(n),
        r: Some(Scalar::Number(r.into())),
        ..Layer::default()
    }
}

fn preset(name: &str) -> Result<Preset, CliError> {
    let layer = match name {
        "fig1" => symmetric_preset(3, 3, 3, 2),
        "example-4-6" => symmetric_preset(4, 4, 6, 2),
        "example-5-10" => symmetric_preset(5, 5, 10, 2),
        "table2" => symmetric_preset(5, 5, 20, 2),
        "fig2" => Layer {
            k: Some(10),
            q: Some(360),
            n: Some(2520),
            r_values: Some((1..=10u32).map(|r| Scalar::Number(r.into())).collect()),
            ..Layer::default()
        },
        "graded-1-2-3" => {
            // File n is mapped at nodes n..=3, so θ = (3, 2, 1).
            let placement =
                Placement::from_mapped_files(3, 3, 3, vec![vec![1], vec![1, 2], vec![1, 2, 3]])?;
            let assignment = ReduceAssignment::contiguous(3, 3)?;
            return Ok(Preset {
                layer: Layer { k: Some(3), q: Some(3), n: Some(3), ..Layer::default() },
                instance: Some(Instance::new(placement, assignment)?),
            });
        }
        other => {
            return Err(CliError::config(format!(
                "field `preset`: unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(Preset { layer, instance: None })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn read_layer(path: &Path) -> Result<Layer, CliError> {
    let text = read_text(path)?;
    let mut layer: Layer = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if let Some(p) = layer.placement.as_mut() {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *p = dir.join(&*p);
            }
        }
    }
    Ok(layer)
}

/// Fully merged and validated settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub k: Option<u32>,
    pub n: Option<u32>,
    pub q: Option<u32>,
    pub r: Option<Rational>,
    pub r_values: Option<Vec<Rational>>,
    pub seed: u64,
    /// Linear.
    pub power: f64,
    pub noise: bool,
    pub tau: usize,
    pub workers: usize,
    /// `None` when neither a flag nor the file named an output directory.
    pub out: Option<PathBuf>,
    pub placement: Option<PathBuf>,
    pub simulate: bool,
    pub h_min: f64,
    pub h_max: f64,
    pub tolerances: Tolerances,
    builtin: Option<Instance>,
}

impl RunConfig {
    pub fn load(flags: Layer, config: Option<&Path>) -> Result<Self, CliError> {
        let file = config.map(read_layer).transpose()?.unwrap_or_default();
        file.power_setting()?;
        let name = flags.preset.clone().or_else(|| file.preset.clone());
        let base = name.as_deref().map(preset).transpose()?;
        let (preset_layer, builtin) = match base {
            Some(p) => (p.layer, p.instance),
            None => (Layer::default(), None),
        };
        Self::resolve(flags.over(file).over(preset_layer), builtin)
    }

    fn resolve(layer: Layer, builtin: Option<Instance>) -> Result<Self, CliError> {
        let power = match layer.power_setting()? {
            Some(Power::Linear(p)) => p,
            Some(Power::Db(db)) => {
                if !db.is_finite() {
                    return Err(CliError::config("field `power_db`: must be finite"));
                }
                db_to_linear(db)
            }
            None => db_to_linear(DEFAULT_POWER_DB),
        };
        if !(power.is_finite() && power > 0.0) {
            return Err(CliError::config(format!("field `power`: must be positive, got {power}")));
        }
        let tau = layer.tau.unwrap_or(DEFAULT_TAU);
        if tau == 0 {
            return Err(CliError::config("field `tau`: packet length must be at least 1"));
        }
        let workers = layer.workers.unwrap_or(1);
        if workers == 0 {
            return Err(CliError::config("field `workers`: must be at least 1"));
        }
        let h_min = layer.h_min.unwrap_or(DEFAULT_H_MIN);
        let h_max = layer.h_max.unwrap_or(DEFAULT_H_MAX);
        if !(h_min > 0.0 && h_min < h_max && h_max.is_finite()) {
            return Err(CliError::config(format!(
                "fields `h_min`, `h_max`: need 0 < h_min < h_max < ∞, got {h_min}, {h_max}"
            )));
        }
        let t = layer.tolerances.unwrap_or_default();
        let d = Tolerances::default();
        let tolerances = Tolerances {
            zf_tol: positive("tolerances.zf_tol", t.zf_tol.unwrap_or(d.zf_tol))?,
            residual_tol: positive("tolerances.residual_tol", t.residual_tol.unwrap_or(d.residual_tol))?,
            gain_floor: positive("tolerances.gain_floor", t.gain_floor.unwrap_or(d.gain_floor))?,
            rank_tol: positive("tolerances.rank_tol", t.rank_tol.unwrap_or(d.rank_tol))?,
        };

        if layer.k == Some(0) {
            return Err(CliError::config("field `K`: node count must be at least 1"));
        }
        if let (Some(k), Some(n), Some(q)) = (layer.k, layer.n, layer.q) {
            SystemParams::new(k, n, q, 1)?;
        }
        let r = layer.r.as_ref().map(|s| s.to_rational("r")).transpose()?;
        let r_values = layer
            .r_values
            .as_ref()
            .map(|v| v.iter().map(|s| s.to_rational("r_values")).collect::<Result<Vec<_>, _>>())
            .transpose()?;
        if let Some(k) = layer.k {
            let range = |field: &str, r: Rational| {
                if r < Rational::from(1) || r > Rational::from(i64::from(k)) {
                    Err(CliError::config(format!("field `{field}`: r={r} outside [1, K={k}]")))
                } else {
                    Ok(())
                }
            };
            if let Some(r) = r {
                range("r", r)?;
            }
            for &r in r_values.iter().flatten() {
                range("r_values", r)?;
            }
        }
        if r_values.as_ref().is_some_and(Vec::is_empty) {
            return Err(CliError::config("field `r_values`: must not be empty"));
        }

        Ok(RunConfig {
            preset: layer.preset,
            k: layer.k,
            n: layer.n,
            q: layer.q,
            r,
            r_values,
            seed: layer.seed.unwrap_or(DEFAULT_SEED),
            power,
            noise: layer.noise.unwrap_or(false),
            tau,
            workers,
            out: layer.out,
            placement: layer.placement,
            simulate: layer.simulate.unwrap_or(true),
            h_min,
            h_max,
            tolerances,
            builtin,
        })
    }

    fn require(&self, field: &str, flag: &str, v: Option<u32>) -> Result<u32, CliError> {
        v.ok_or_else(|| {
            CliError::config(format!(
                "missing `{field}`: set --{flag}, \"{field}\" in the config file, or a preset"
            ))
        })
    }

    /// `(K, N, Q)`.
    pub fn dimensions(&self) -> Result<(u32, u32, u32), CliError> {
        Ok((
            self.require("K", "k", self.k)?,
            self.require("N", "n", self.n)?,
            self.require("Q", "q", self.q)?,
        ))
    }

    /// Parameters of a symmetric run; `r` must be an integer.
    pub fn params(&self) -> Result<SystemParams, CliError> {
        let (k, n, q) = self.dimensions()?;
        let r = self.r.ok_or_else(|| {
            CliError::config("missing `r`: set --r, \"r\" in the config file, or a preset")
        })?;
        if !r.is_integer() {
            return Err(CliError::config(format!(
                "field `r`: this command needs an integer computation load, got {r}"
            )));
        }
        Ok(SystemParams::new(k, n, q, r.to_integer() as u32)?)
    }

    /// The grid for a tradeoff table; `1..=K` unless given.
    pub fn grid(&self) -> Result<Vec<Rational>, CliError> {
        let (k, _, _) = self.dimensions()?;
        Ok(match &self.r_values {
            Some(v) => v.clone(),
            None => (1..=i64::from(k)).map(Rational::from).collect(),
        })
    }

    /// The instance named by `placement`, else a preset's built-in one, else
    /// the symmetric instance for `(K, N, Q, r)`.
    pub fn instance(&self) -> Result<Instance, CliError> {
        if let Some(path) = &self.placement {
            let text = read_text(path)?;
            return Instance::from_json(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())));
        }
        if let Some(inst) = &self.builtin {
            return Ok(inst.clone());
        }
        Ok(Instance::symmetric(&self.params()?)?)
    }
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(format!("field `{field}`: must be positive, got {v}")))
    }
}
