//! TOML configuration.
//!
//! Every section and key is optional; omitted values take the defaults of
//! the chosen `preset`. Unknown keys are rejected.
//!
//! ```toml
//! preset = "uniform"          # or "nonuniform"
//! seed = 0
//!
//! [mesh]
//! elements = 64
//! degree = 2
//!
//! [time]
//! tau = 5000.0                # seconds
//! steps = 500
//! cadence = 10                # saturation steps per pressure update
//! source_projection = "lumped" # or "l2"
//!
//! [fluids]                    # rho_g, rho_w, mu_g, mu_w, gravity
//!
//! [domain]
//! length_x = 50.0
//! length_y = 50.0
//!
//! [maps]
//! permeability = 1.0          # mDarcy, a file path, or "standin:layered"
//! porosity = 0.2              # fraction, a file path, or "standin:layered"
//! unit = "milli_darcy"        # or "square_meters" for permeability files
//! gray_min = 0.0              # PGM gray-level range
//! gray_max = 1.0
//! standin_resolution = 64
//!
//! [[sources]]
//! center = [25.0, 25.0]       # meters
//! radius = 3.0
//! strength = 1e-6             # saturation increment per step
//! phase = "gas"
//!
//! [training]
//! collocation = 100
//! pretrain_epochs = 20000
//! update_epochs = 100
//! learning_rate = 1e-4
//! layers = [2, 64, 64, 64, 1]
//! activation = "tanh"         # or "sin"
//!
//! [output]
//! dir = "out"
//! snapshot_every = 10
//! resolution = 101
//! ```
//!
//! Relative paths in `[maps]` are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crvpinn::Activation;
use crate::driver::{DriverError, MapSource, Preset, SimConfig};
use crate::reservoir::standin::Pattern;
use crate::reservoir::{FluidParams, GrayRange, PermeabilityUnit, Phase, SimDomain, SourceDisk};
use crate::saturation::SourceProjection;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {key}: {message}")]
    Invalid { line: usize, key: String, message: String },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    seed: Option<u64>,
    mesh: Option<RawMesh>,
    time: Option<RawTime>,
    fluids: Option<RawFluids>,
    domain: Option<RawDomain>,
    maps: Option<RawMaps>,
    sources: Option<Vec<RawSource>>,
    training: Option<RawTraining>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    elements: Option<usize>,
    degree: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    tau: Option<f64>,
    steps: Option<usize>,
    cadence: Option<usize>,
    source_projection: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFluids {
    rho_g: Option<f64>,
    rho_w: Option<f64>,
    mu_g: Option<f64>,
    mu_w: Option<f64>,
    gravity: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    length_x: Option<f64>,
    length_y: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawMapValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaps {
    permeability: Option<RawMapValue>,
    porosity: Option<RawMapValue>,
    unit: Option<PermeabilityUnit>,
    gray_min: Option<f64>,
    gray_max: Option<f64>,
    standin_resolution: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    center: [f64; 2],
    radius: f64,
    strength: Option<f64>,
    phase: Option<Phase>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    collocation: Option<usize>,
    pretrain_epochs: Option<usize>,
    update_epochs: Option<usize>,
    learning_rate: Option<f64>,
    layers: Option<Vec<usize>>,
    activation: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    snapshot_every: Option<usize>,
    resolution: Option<usize>,
}

const STANDIN_PREFIX: &str = "standin:";

/// Line (1-based) of `key` inside `[section]`, or of the section header
/// when the key is absent.
fn locate(text: &str, dotted: &str) -> usize {
    let (section, key) = match dotted.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, dotted),
    };
    let mut current: Option<String> = None;
    let mut section_line = 0;
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            if section == current.as_deref() && section_line == 0 {
                section_line = n + 1;
            }
            continue;
        }
        let in_section = match section {
            Some(s) => current.as_deref() == Some(s),
            None => current.is_none() || current.as_deref() == Some(key),
        };
        if in_section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return n + 1;
                }
            }
        }
    }
    if section_line > 0 {
        return section_line;
    }
    text.lines()
        .position(|l| l.trim().trim_matches(|c| c == '[' || c == ']') == key)
        .map_or(0, |n| n + 1)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Dotted key assigned on `line`, qualified by the enclosing table.
fn key_on_line(text: &str, line: usize) -> Option<String> {
    let mut section: Option<&str> = None;
    for (n, l) in text.lines().enumerate().take(line) {
        let t = l.trim();
        if t.starts_with('[') {
            section = Some(t.trim_matches(|c| c == '[' || c == ']').trim());
        } else if n + 1 == line {
            let key = t.split_once('=')?.0.trim();
            return Some(match section {
                Some(s) => format!("{s}.{key}"),
                None => key.to_string(),
            });
        }
    }
    None
}

fn parse_map_value(value: &RawMapValue, base: &Path, resolution: usize) -> Result<MapSource, String> {
    match value {
        RawMapValue::Number(v) => Ok(MapSource::Uniform(*v)),
        RawMapValue::Text(s) => match s.strip_prefix(STANDIN_PREFIX) {
            Some(name) => Pattern::ALL
                .into_iter()
                .find(|p| p.name() == name)
                .map(|pattern| MapSource::Standin { pattern, resolution })
                .ok_or_else(|| format!("unknown stand-in pattern '{name}'")),
            None if s.is_empty() => Err("empty map path".into()),
            None => Ok(MapSource::File(base.join(s))),
        },
    }
}

/// Parses config text; `base` resolves relative map paths.
pub fn parse_config_str(text: &str, base: &Path) -> Result<SimConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| line_of_offset(text, s.start));
        ConfigError::Invalid {
            line,
            key: key_on_line(text, line).unwrap_or_else(|| "syntax".into()),
            message: e.message().to_string(),
        }
    })?;
    let invalid = |key: &str, message: String| ConfigError::Invalid {
        line: locate(text, key),
        key: key.to_string(),
        message,
    };

    let preset = match raw.preset.as_deref() {
        None => Preset::Uniform,
        Some(p) => Preset::parse(p).ok_or_else(|| invalid("preset", format!("unknown preset '{p}'")))?,
    };
    let mut c = SimConfig::for_preset(preset);
    if let Some(seed) = raw.seed {
        c.seed = seed;
    }
    if let Some(m) = raw.mesh {
        c.mesh_elements = m.elements.unwrap_or(c.mesh_elements);
        c.degree = m.degree.unwrap_or(c.degree);
    }
    if let Some(t) = raw.time {
        c.tau = t.tau.unwrap_or(c.tau);
        c.steps = t.steps.unwrap_or(c.steps);
        c.cadence = t.cadence.unwrap_or(c.cadence);
        if let Some(m) = t.source_projection {
            c.source_projection = SourceProjection::parse(&m)
                .ok_or_else(|| invalid("time.source_projection", format!("unknown projection '{m}'")))?;
        }
    }
    if let Some(f) = raw.fluids {
        let d = FluidParams::default();
        c.fluids = FluidParams {
            rho_g: f.rho_g.unwrap_or(d.rho_g),
            rho_w: f.rho_w.unwrap_or(d.rho_w),
            mu_g: f.mu_g.unwrap_or(d.mu_g),
            mu_w: f.mu_w.unwrap_or(d.mu_w),
            gravity: f.gravity.unwrap_or(d.gravity),
        };
    }
    if let Some(d) = raw.domain {
        let def = SimDomain::default();
        c.domain = SimDomain {
            length_x: d.length_x.unwrap_or(def.length_x),
            length_y: d.length_y.unwrap_or(def.length_y),
        };
        // the default disk follows the domain center
        for s in &mut c.sources {
            s.center = [c.domain.length_x / 2.0, c.domain.length_y / 2.0];
        }
    }
    let maps = raw.maps.unwrap_or_default();
    if preset == Preset::Nonuniform && maps.permeability.is_none() {
        return Err(invalid(
            "maps.permeability",
            "the nonuniform preset requires a permeability map path or stand-in".into(),
        ));
    }
    let resolution = maps.standin_resolution.unwrap_or(64);
    if let Some(v) = &maps.permeability {
        c.permeability = parse_map_value(v, base, resolution).map_err(|m| invalid("maps.permeability", m))?;
    }
    match &maps.porosity {
        Some(v) => c.porosity = parse_map_value(v, base, resolution).map_err(|m| invalid("maps.porosity", m))?,
        None => {
            if let MapSource::Standin { pattern, .. } = c.permeability {
                c.porosity = MapSource::Standin { pattern, resolution };
            } else if preset == Preset::Nonuniform {
                return Err(invalid(
                    "maps.porosity",
                    "the nonuniform preset requires a porosity map path".into(),
                ));
            }
        }
    }
    c.permeability_unit = maps.unit.unwrap_or_default();
    c.gray = match (maps.gray_min, maps.gray_max) {
        (Some(min), Some(max)) => Some(GrayRange { min, max }),
        (None, None) => None,
        _ => {
            return Err(invalid(
                "maps.gray_min",
                "gray_min and gray_max must be given together".into(),
            ))
        }
    };
    if let Some(sources) = raw.sources {
        c.sources = sources
            .into_iter()
            .map(|s| SourceDisk {
                center: s.center,
                radius: s.radius,
                strength: s.strength.unwrap_or(preset.source_strength()),
                phase: s.phase.unwrap_or_default(),
            })
            .collect();
    }
    if let Some(t) = raw.training {
        c.collocation_n = t.collocation.unwrap_or(c.collocation_n);
        c.pretrain_epochs = t.pretrain_epochs.unwrap_or(c.pretrain_epochs);
        c.update_epochs = t.update_epochs.unwrap_or(c.update_epochs);
        c.learning_rate = t.learning_rate.unwrap_or(c.learning_rate);
        if let Some(layers) = t.layers {
            c.layers = layers;
        }
        if let Some(a) = t.activation {
            c.activation = Activation::parse(&a)
                .ok_or_else(|| invalid("training.activation", format!("unknown activation '{a}'")))?;
        }
    }
    if let Some(o) = raw.output {
        if let Some(dir) = o.dir {
            c.output_dir = dir;
        }
        c.snapshot_every = o.snapshot_every.unwrap_or(c.snapshot_every);
        c.sample_resolution = o.resolution.unwrap_or(c.sample_resolution);
    }
    c.validate().map_err(|e| match e {
        DriverError::Config { key, message } => invalid(&key, message),
        other => invalid("config", other.to_string()),
    })?;
    Ok(c)
}

pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new("")))
}

fn map_value(src: &MapSource) -> RawMapValue {
    match src {
        MapSource::Uniform(v) => RawMapValue::Number(*v),
        MapSource::File(p) => RawMapValue::Text(p.display().to_string()),
        MapSource::Standin { pattern, .. } => RawMapValue::Text(format!("{STANDIN_PREFIX}{}", pattern.name())),
    }
}

/// Serializes every field explicitly, so parsing the output reproduces `config`.
pub fn write_config(config: &SimConfig) -> String {
    let resolution = match (&config.permeability, &config.porosity) {
        (MapSource::Standin { resolution, .. }, _) | (_, MapSource::Standin { resolution, .. }) => Some(*resolution),
        _ => None,
    };
    let raw = RawConfig {
        preset: Some(config.preset.name().into()),
        seed: Some(config.seed),
        mesh: Some(RawMesh {
            elements: Some(config.mesh_elements),
            degree: Some(config.degree),
        }),
        time: Some(RawTime {
            tau: Some(config.tau),
            steps: Some(config.steps),
            cadence: Some(config.cadence),
            source_projection: Some(config.source_projection.name().into()),
        }),
        fluids: Some(RawFluids {
            rho_g: Some(config.fluids.rho_g),
            rho_w: Some(config.fluids.rho_w),
            mu_g: Some(config.fluids.mu_g),
            mu_w: Some(config.fluids.mu_w),
            gravity: Some(config.fluids.gravity),
        }),
        domain: Some(RawDomain {
            length_x: Some(config.domain.length_x),
            length_y: Some(config.domain.length_y),
        }),
        maps: Some(RawMaps {
            permeability: Some(map_value(&config.permeability)),
            porosity: Some(map_value(&config.porosity)),
            unit: Some(config.permeability_unit),
            gray_min: config.gray.map(|g| g.min),
            gray_max: config.gray.map(|g| g.max),
            standin_resolution: resolution,
        }),
        sources: Some(
            config
                .sources
                .iter()
                .map(|s| RawSource {
                    center: s.center,
                    radius: s.radius,
                    strength: Some(s.strength),
                    phase: Some(s.phase),
                })
                .collect(),
        ),
        training: Some(RawTraining {
            collocation: Some(config.collocation_n),
            pretrain_epochs: Some(config.pretrain_epochs),
            update_epochs: Some(config.update_epochs),
            learning_rate: Some(config.learning_rate),
            layers: Some(config.layers.clone()),
            activation: Some(config.activation.name().into()),
        }),
        output: Some(RawOutput {
            dir: Some(config.output_dir.clone()),
            snapshot_every: Some(config.snapshot_every),
            resolution: Some(config.sample_resolution),
        }),
    };
    toml::to_string(&raw).expect("configuration serializes to TOML")
}
