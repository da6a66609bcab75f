//! Run configuration: a TOML file with `[model]`, `[model.params]`,
//! `[study]` and `[lotka]` sections, overlaid by command-line flags.
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! name = "user-table"
//!
//! [model.params]
//! knots = [0.0, 2.0]
//! q = [[[-0.5, 0.5], [0.3, -0.3]], [[-1.0, 1.0], [0.6, -0.6]]]
//!
//! [study]
//! T = 1.0
//! steps = 100
//! paths = 10000
//! x = [0.5]
//! regime = 1
//! deltas = [0.1, 0.01, 0.001]
//!
//! [lotka]
//! m = 2.0
//! dt = 0.01
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use switchdiff::{ModelParams, ParamValue};

use crate::args::Flags;
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Not echoed: output must not depend on it.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default, skip_serializing_if = "LotkaSection::is_empty")]
    pub lotka: LotkaSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// 1-based.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dts: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotkaSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl LotkaSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

fn overlay<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("config: {}", e.to_string().trim_end())))
    }

    /// Reads `--config` if given, then applies the flags on top.
    pub fn load(flags: &Flags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
                Self::parse(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(flags)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, f: &Flags) -> Result<(), CliError> {
        overlay(&mut self.seed, &f.seed);
        overlay(&mut self.threads, &f.threads);
        overlay(&mut self.output, &f.output);
        overlay(&mut self.model.name, &f.model);
        for kv in &f.params {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--param {kv}: expected KEY=VALUE")))?;
            let key = key.trim();
            let parsed: toml::Table = toml::from_str(&format!("v = {value}"))
                .map_err(|e| CliError::usage(format!("model.params.{key}: {}", e.message().trim())))?;
            self.model.params.insert(key.to_string(), parsed["v"].clone());
        }
        let s = &mut self.study;
        overlay(&mut s.horizon, &f.horizon);
        overlay(&mut s.steps, &f.steps);
        overlay(&mut s.paths, &f.paths);
        overlay(&mut s.x, &f.x);
        overlay(&mut s.regime, &f.regime);
        overlay(&mut s.deltas, &f.deltas);
        overlay(&mut s.p, &f.p);
        overlay(&mut s.direction, &f.direction);
        overlay(&mut s.observable, &f.observable);
        overlay(&mut s.dts, &f.dts);
        overlay(&mut s.levels, &f.levels);
        overlay(&mut s.radius, &f.radius);
        overlay(&mut s.width, &f.width);
        overlay(&mut s.h, &f.h);
        overlay(&mut s.n, &f.n);
        if let Some(text) = &f.directions {
            s.directions = Some(parse_directions(text)?);
        }
        let l = &mut self.lotka;
        overlay(&mut l.m, &f.m);
        overlay(&mut l.dt, &f.dt);
        overlay(&mut l.checkpoints, &f.checkpoints);
        overlay(&mut l.offsets, &f.offsets);
        overlay(&mut l.radius, &f.lv_radius);
        Ok(())
    }

    /// `[model.params]` as library parameters.
    pub fn model_params(&self) -> Result<ModelParams, CliError> {
        let mut out = ModelParams::new();
        for (key, value) in &self.model.params {
            out.insert(key, to_param(value).map_err(|what| CliError::usage(format!("model.params.{key}: {what}")))?);
        }
        Ok(out)
    }

    /// The effective configuration as `#`-prefixed TOML, without `threads`
    /// and `output`.
    pub fn echo(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        text.lines()
            .filter(|l| !l.is_empty())
            .map(|l| format!("# {l}\n"))
            .collect()
    }
}

fn to_param(v: &toml::Value) -> Result<ParamValue, String> {
    match v {
        toml::Value::Integer(i) => Ok(ParamValue::Num(*i as f64)),
        toml::Value::Float(x) => Ok(ParamValue::Num(*x)),
        toml::Value::String(s) => Ok(ParamValue::Str(s.clone())),
        toml::Value::Array(items) => items.iter().map(to_param).collect::<Result<Vec<_>, _>>().map(ParamValue::Array),
        other => Err(format!("unsupported value type {}", other.type_str())),
    }
}

fn parse_directions(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.split(';')
        .map(|v| {
            v.split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::usage(format!("study.directions: `{v}`: {e}")))
        })
        .collect()
}
