//! Experiment configuration: JSON file, then command-line overrides, then
//! defaults.

use std::path::{Path, PathBuf};

use bosegas::partition::Window;
use bosegas::spectral::Geometry;
use bosegas::weights::{Density, ModelParams};
use bosegas::{Error, Result};
use serde::{Deserialize, Serialize};

/// JSON schema of the configuration file.
pub const SCHEMA: &str = include_str!("../config.schema.json");

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_L_LIST: [f64; 6] = [8.0, 12.0, 16.0, 24.0, 32.0, 48.0];
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;

/// Chemical potential: none, solved so that `E_μ[N] = ρL^d`, or explicit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuMode {
    None,
    Solve,
    Explicit(f64),
}

impl std::str::FromStr for MuMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MuMode::None),
            "solve" => Ok(MuMode::Solve),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|m| *m <= 0.0)
                .map(MuMode::Explicit)
                .ok_or_else(|| Error::Domain(format!("mu must be `none`, `solve` or a number <= 0, got `{other}`"))),
        }
    }
}

impl Serialize for MuMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MuMode::None => s.serialize_str("none"),
            MuMode::Solve => s.serialize_str("solve"),
            MuMode::Explicit(m) => s.serialize_f64(*m),
        }
    }
}

impl<'de> Deserialize<'de> for MuMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        let s = match Raw::deserialize(d)? {
            Raw::Num(v) => v.to_string(),
            Raw::Str(s) => s,
        };
        s.parse().map_err(|e: Error| serde::de::Error::custom(e.to_string()))
    }
}

/// Loop-length window: mesoscopic `[L²/m, αL² log L]`, or explicit bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum WindowSpec {
    Mesoscopic { alpha: f64, m: f64 },
    Explicit { min: usize, max: usize },
}

impl WindowSpec {
    pub fn resolve(&self, l: f64) -> Result<Window> {
        let w = match *self {
            WindowSpec::Mesoscopic { alpha, m } => {
                if !(alpha > 0.0 && m > 0.0) {
                    return Err(Error::Domain(format!("window needs alpha > 0 and m > 0, got {alpha}, {m}")));
                }
                bosegas::partition::mesoscopic_window(l, alpha, m)
            }
            WindowSpec::Explicit { min, max } => Window::new(min, max),
        };
        if w.min == 0 || w.is_empty() {
            return Err(Error::Domain(format!("window [{}, {}] is empty or contains 0", w.min, w.max)));
        }
        Ok(w)
    }
}

/// Configuration as read from file or flags; every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "L_list", skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Density>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<MuMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Domain(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: ExperimentConfig) -> Self {
        Self {
            geometry: over.geometry.or(self.geometry),
            beta: over.beta.or(self.beta),
            l_list: over.l_list.or(self.l_list),
            rho: over.rho.or(self.rho),
            mu: over.mu.or(self.mu),
            window: over.window.or(self.window),
            samples: over.samples.or(self.samples),
            seed: over.seed.or(self.seed),
            out: over.out.or(self.out),
            cache: over.cache.or(self.cache),
        }
    }

    /// Fill defaults; `geometry` falls back to `default_geometry`. Model
    /// parameters are validated where they are used, since some commands
    /// need only the geometry.
    pub fn resolve(&self, default_geometry: &str) -> Result<Resolved> {
        let geometry: Geometry = self.geometry.as_deref().unwrap_or(default_geometry).parse()?;
        let beta = self.beta.unwrap_or(DEFAULT_BETA);
        let l_list = self.l_list.clone().unwrap_or_else(|| DEFAULT_L_LIST.to_vec());
        if l_list.is_empty() {
            return Err(Error::Domain("L_list is empty".into()));
        }
        let resolved = Resolved {
            geometry,
            beta,
            l_list,
            rho: self.rho.unwrap_or(Density::Critical),
            mu: self.mu.unwrap_or(MuMode::None),
            window: self.window,
            samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            cache: self.cache.clone(),
        };
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        if let Some(bad) = resolved.l_list.iter().find(|l| !(**l >= 1.0 && l.is_finite())) {
            return Err(Error::Domain(format!("L must be at least 1, got {bad}")));
        }
        if let Some(w) = resolved.window {
            for &l in &resolved.l_list {
                w.resolve(l)?;
            }
        }
        Ok(resolved)
    }
}

/// Configuration with every default applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    #[serde(serialize_with = "as_display")]
    pub geometry: Geometry,
    pub beta: f64,
    #[serde(rename = "L_list")]
    pub l_list: Vec<f64>,
    pub rho: Density,
    pub mu: MuMode,
    pub window: Option<WindowSpec>,
    pub samples: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
}

fn as_display<S: serde::Serializer>(g: &Geometry, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&g.to_string())
}

impl Resolved {
    pub fn params(&self, l: f64) -> ModelParams {
        ModelParams { geometry: self.geometry, beta: self.beta, l, rho: self.rho, n_cut: None }
    }

    /// Record written into the manifest. Output and cache paths are left out
    /// so that runs into different directories share a manifest.
    pub fn manifest_record(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = v.as_object_mut() {
            map.remove("out");
            map.remove("cache");
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"geometry": "torus:3", "betta": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"window": {"alpha": 1, "m": 3, "x": 2}}"#).is_err());
    }

    #[test]
    fn parses_all_fields() {
        let c = ExperimentConfig::from_json(
            r#"{"geometry": "box:3:neumann", "beta": 2, "L_list": [8, 16], "rho": "critical",
                "mu": "solve", "window": {"min": 2, "max": 9}, "samples": 10, "seed": 7,
                "out": "o", "cache": "c"}"#,
        )
        .unwrap();
        let r = c.resolve("torus:3").unwrap();
        assert_eq!(r.geometry, Geometry::neumann_box(3));
        assert_eq!(r.mu, MuMode::Solve);
        assert_eq!(r.window.unwrap().resolve(8.0).unwrap(), Window::new(2, 9));
        let m = ExperimentConfig::from_json(r#"{"mu": -0.5, "rho": 0.1}"#).unwrap();
        assert_eq!(m.mu, Some(MuMode::Explicit(-0.5)));
        assert_eq!(m.rho, Some(Density::Value(0.1)));
    }

    #[test]
    fn overlay_prefers_flags() {
        let file = ExperimentConfig { beta: Some(2.0), seed: Some(1), ..Default::default() };
        let flags = ExperimentConfig { seed: Some(9), ..Default::default() };
        let c = file.overlay(flags);
        assert_eq!((c.beta, c.seed), (Some(2.0), Some(9)));
    }

    #[test]
    fn invalid_values_fail_resolution() {
        let bad = |json: &str| ExperimentConfig::from_json(json).and_then(|c| c.resolve("torus:3")).is_err();
        assert!(bad(r#"{"geometry": "sphere:3"}"#));
        assert!(bad(r#"{"beta": -1}"#));
        assert!(bad(r#"{"L_list": []}"#));
        assert!(bad(r#"{"mu": 0.5}"#));
        assert!(bad(r#"{"window": {"min": 5, "max": 2}}"#));
        let planar = ExperimentConfig::from_json(r#"{"geometry": "torus:2"}"#).unwrap().resolve("torus:3").unwrap();
        assert!(planar.params(8.0).validate().is_err());
    }

    #[test]
    fn schema_is_valid_json_and_lists_every_field() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        let props = schema["properties"].as_object().unwrap();
        let full = ExperimentConfig {
            geometry: Some("torus:3".into()),
            beta: Some(1.0),
            l_list: Some(vec![8.0]),
            rho: Some(Density::Critical),
            mu: Some(MuMode::None),
            window: Some(WindowSpec::Explicit { min: 1, max: 2 }),
            samples: Some(1),
            seed: Some(1),
            out: Some("o".into()),
            cache: Some("c".into()),
        };
        let v = serde_json::to_value(full).unwrap();
        for key in v.as_object().unwrap().keys() {
            assert!(props.contains_key(key), "{key}");
        }
        assert_eq!(props.len(), v.as_object().unwrap().len());
    }
}
