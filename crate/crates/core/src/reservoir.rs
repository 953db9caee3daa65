//! Physical configuration: fluid constants, permeability and porosity maps,
//! injection disks and the reference-to-physical domain mapping.
//!
//! All solvers work on the reference square `[0, 1]²`; a point `(x, y)` there
//! corresponds to `(x * length_x, y * length_y)` meters. Gravity points along
//! `-y`.

use std::fs;
use std::path::Path;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1 mDarcy in m².
pub const MILLIDARCY: f64 = 1e-15;

#[derive(Error, Debug)]
pub enum ReservoirError {
    #[error("{path}: {message}")]
    Malformed { path: String, message: String },
    #[error("{kind} map has invalid value {value} at row {row}, column {col}")]
    InvalidValue {
        kind: MapKind,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("point ({0}, {1}) lies outside the reference square")]
    OutOfDomain(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    /// kg/m³
    pub rho_g: f64,
    /// kg/m³
    pub rho_w: f64,
    /// Pa·s
    pub mu_g: f64,
    /// Pa·s
    pub mu_w: f64,
    /// m/s², magnitude
    pub gravity: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            rho_g: 479.0,
            rho_w: 1045.0,
            mu_g: 3.95e-5,
            mu_w: 25.35e-5,
            gravity: 9.81,
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<(), ReservoirError> {
        let named = [
            ("rho_g", self.rho_g),
            ("rho_w", self.rho_w),
            ("mu_g", self.mu_g),
            ("mu_w", self.mu_w),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ReservoirError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.gravity >= 0.0) {
            return Err(ReservoirError::InvalidParameter(format!(
                "gravity must be nonnegative, got {}",
                self.gravity
            )));
        }
        if self.mu_w <= self.mu_g {
            warn!(
                "brine viscosity {} does not exceed gas viscosity {}",
                self.mu_w, self.mu_g
            );
        }
        if self.rho_w <= self.rho_g {
            warn!(
                "brine density {} does not exceed gas density {}",
                self.rho_w, self.rho_g
            );
        }
        Ok(())
    }

    /// Hydrostatic brine pressure scale over a column of height `length`.
    pub fn pressure_scale(&self, length: f64) -> f64 {
        self.rho_w * self.gravity * length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDomain {
    /// m
    pub length_x: f64,
    /// m
    pub length_y: f64,
}

impl Default for SimDomain {
    fn default() -> Self {
        Self {
            length_x: 50.0,
            length_y: 50.0,
        }
    }
}

impl SimDomain {
    pub fn validate(&self) -> Result<(), ReservoirError> {
        if !(self.length_x > 0.0 && self.length_y > 0.0) {
            return Err(ReservoirError::InvalidParameter(format!(
                "domain lengths must be positive, got {} x {}",
                self.length_x, self.length_y
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.length_x * self.length_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Permeability,
    Porosity,
}

impl std::fmt::Display for MapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MapKind::Permeability => "permeability",
            MapKind::Porosity => "porosity",
        })
    }
}

/// Cell-centered raster over the whole domain; `values[[row, col]]` with rows
/// along `y` (row 0 at `y = 0`). Permeability is stored in m².
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    values: Array2<f64>,
    kind: MapKind,
}

impl MaterialField {
    pub fn new(values: Array2<f64>, kind: MapKind) -> Result<Self, ReservoirError> {
        if values.is_empty() {
            return Err(ReservoirError::InvalidParameter(format!("{kind} map is empty")));
        }
        for ((row, col), &value) in values.indexed_iter() {
            let ok = match kind {
                MapKind::Permeability => value > 0.0 && value.is_finite(),
                MapKind::Porosity => value > 0.0 && value <= 1.0,
            };
            if !ok {
                return Err(ReservoirError::InvalidValue { kind, row, col, value });
            }
        }
        Ok(Self { values, kind })
    }

    pub fn uniform(value: f64, kind: MapKind) -> Result<Self, ReservoirError> {
        Self::new(Array2::from_elem((1, 1), value), kind)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation between cell centers, constant beyond the
    /// outermost centers.
    pub fn sample(&self, x: f64, y: f64) -> Result<f64, ReservoirError> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(ReservoirError::OutOfDomain(x, y));
        }
        Ok(self.sample_unchecked(x, y))
    }

    pub(crate) fn sample_unchecked(&self, x: f64, y: f64) -> f64 {
        let (rows, cols) = self.values.dim();
        let (c0, c1, tx) = bracket(x, cols);
        let (r0, r1, ty) = bracket(y, rows);
        let v = &self.values;
        let bottom = v[[r0, c0]] * (1.0 - tx) + v[[r0, c1]] * tx;
        let top = v[[r1, c0]] * (1.0 - tx) + v[[r1, c1]] * tx;
        bottom * (1.0 - ty) + top * ty
    }
}

fn bracket(t: f64, n: usize) -> (usize, usize, f64) {
    let f = (t * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = (f.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, f - i0 as f64)
}

/// Unit of permeability values in a map file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermeabilityUnit {
    #[default]
    MilliDarcy,
    SquareMeters,
}

impl PermeabilityUnit {
    pub fn to_square_meters(self, v: f64) -> f64 {
        match self {
            PermeabilityUnit::MilliDarcy => v * MILLIDARCY,
            PermeabilityUnit::SquareMeters => v,
        }
    }
}

/// Linear rescaling of 8-bit gray levels: 0 maps to `min`, 255 to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrayRange {
    pub min: f64,
    pub max: f64,
}

/// Reads a CSV grid or a binary/ASCII PGM raster.
///
/// CSV rows are `y`-lines starting at `y = 0`. PGM rows run top to bottom, so
/// they are flipped to keep row 0 at the bottom of the domain. Permeability is
/// converted to m² with `unit`; `gray` is required for PGM input.
pub fn load_map(
    path: &Path,
    kind: MapKind,
    unit: PermeabilityUnit,
    gray: Option<GrayRange>,
) -> Result<MaterialField, ReservoirError> {
    let bytes = fs::read(path).map_err(|source| ReservoirError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let is_pgm = bytes.starts_with(b"P5") || bytes.starts_with(b"P2");
    let raw = if is_pgm {
        let range = gray.ok_or_else(|| ReservoirError::Malformed {
            path: path.display().to_string(),
            message: "PGM maps need a gray-level range".into(),
        })?;
        let levels = parse_pgm(&bytes).map_err(|message| ReservoirError::Malformed {
            path: path.display().to_string(),
            message,
        })?;
        levels.mapv(|g| range.min + (range.max - range.min) * g)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| ReservoirError::Malformed {
            path: path.display().to_string(),
            message: "not valid UTF-8 text".into(),
        })?;
        parse_csv_grid(&text).map_err(|message| ReservoirError::Malformed {
            path: path.display().to_string(),
            message,
        })?
    };
    let values = match kind {
        MapKind::Permeability => raw.mapv(|v| unit.to_square_meters(v)),
        MapKind::Porosity => raw,
    };
    MaterialField::new(values, kind)
}

/// Parses a rectangular numeric CSV grid; blank lines and `#` comments are skipped.
pub fn parse_csv_grid(text: &str) -> Result<Array2<f64>, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("line {}: cannot parse {:?} as a number", lineno + 1, t.trim()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("grid has no rows".into());
    }
    let cols = rows[0].len();
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(|e| e.to_string())
}

/// Gray levels normalized to `[0, 1]`, row 0 at the bottom of the image.
fn parse_pgm(bytes: &[u8]) -> Result<Array2<f64>, String> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    // magic, width, height, maxval
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PGM header field {s:?}"));
    let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return Err(format!("unsupported PGM geometry {w}x{h} maxval {maxval}"));
    }
    let levels: Vec<f64> = if tokens[0] == "P5" {
        let data = &bytes[pos + 1..];
        if data.len() < w * h {
            return Err(format!("expected {} pixels, found {}", w * h, data.len()));
        }
        data[..w * h].iter().map(|&b| b as f64 / maxval as f64).collect()
    } else {
        let text = String::from_utf8_lossy(&bytes[pos..]);
        let vals = text
            .split_ascii_whitespace()
            .map(|t| t.parse::<usize>().map(|v| v as f64 / maxval as f64))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| "bad ASCII PGM pixel".to_string())?;
        if vals.len() < w * h {
            return Err(format!("expected {} pixels, found {}", w * h, vals.len()));
        }
        vals[..w * h].to_vec()
    };
    Ok(Array2::from_shape_fn((h, w), |(r, c)| levels[(h - 1 - r) * w + c]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Gas,
    Water,
}

/// Injection disk. `strength` is the saturation increment added per time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceDisk {
    /// m
    pub center: [f64; 2],
    /// m
    pub radius: f64,
    pub strength: f64,
    #[serde(default)]
    pub phase: Phase,
}

impl SourceDisk {
    pub fn validate(&self, domain: &SimDomain) -> Result<(), ReservoirError> {
        let [cx, cy] = self.center;
        let r = self.radius;
        if !(r > 0.0) {
            return Err(ReservoirError::InvalidParameter(format!(
                "source radius must be positive, got {r}"
            )));
        }
        if cx - r < 0.0 || cy - r < 0.0 || cx + r > domain.length_x || cy + r > domain.length_y {
            return Err(ReservoirError::InvalidParameter(format!(
                "source disk at ({cx}, {cy}) with radius {r} leaves the domain"
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }
}

/// `strength` inside the disk (boundary included), 0 outside; physical coordinates.
pub fn source_value(source: &SourceDisk, x: f64, y: f64) -> f64 {
    let dx = x - source.center[0];
    let dy = y - source.center[1];
    if dx * dx + dy * dy <= source.radius * source.radius {
        source.strength
    } else {
        0.0
    }
}

/// Total mobility times permeability, `((1 - s)/μw + s/μg)·k`.
pub fn alpha_at(s_g: f64, k: f64, fluids: &FluidParams) -> f64 {
    let s = if (0.0..=1.0).contains(&s_g) {
        s_g
    } else {
        warn!("saturation {s_g} clamped to [0, 1] for mobility");
        s_g.clamp(0.0, 1.0)
    };
    ((1.0 - s) / fluids.mu_w + s / fluids.mu_g) * k
}

/// Density-weighted mobility `((1 - s)ρw/μw + sρg/μg)·k` appearing in the gravity flux.
pub fn gravity_mobility(s_g: f64, k: f64, fluids: &FluidParams) -> f64 {
    let s = s_g.clamp(0.0, 1.0);
    ((1.0 - s) * fluids.rho_w / fluids.mu_w + s * fluids.rho_g / fluids.mu_g) * k
}

/// Everything the solvers need to know about the medium.
#[derive(Debug, Clone)]
pub struct Reservoir {
    pub domain: SimDomain,
    pub fluids: FluidParams,
    pub permeability: MaterialField,
    pub porosity: MaterialField,
    pub sources: Vec<SourceDisk>,
}

impl Reservoir {
    pub fn new(
        domain: SimDomain,
        fluids: FluidParams,
        permeability: MaterialField,
        porosity: MaterialField,
        sources: Vec<SourceDisk>,
    ) -> Result<Self, ReservoirError> {
        domain.validate()?;
        fluids.validate()?;
        if permeability.kind() != MapKind::Permeability || porosity.kind() != MapKind::Porosity {
            return Err(ReservoirError::InvalidParameter(
                "permeability and porosity maps were swapped".into(),
            ));
        }
        for s in &sources {
            s.validate(&domain)?;
        }
        Ok(Self {
            domain,
            fluids,
            permeability,
            porosity,
            sources,
        })
    }

    /// Uniform medium with Table-1 fluids and one gas disk at the center.
    pub fn uniform(k: f64, phi: f64, radius: f64, strength: f64) -> Result<Self, ReservoirError> {
        let domain = SimDomain::default();
        Self::new(
            domain,
            FluidParams::default(),
            MaterialField::uniform(k, MapKind::Permeability)?,
            MaterialField::uniform(phi, MapKind::Porosity)?,
            vec![SourceDisk {
                center: [domain.length_x / 2.0, domain.length_y / 2.0],
                radius,
                strength,
                phase: Phase::Gas,
            }],
        )
    }

    /// Permeability (m²) at a reference point.
    pub fn k(&self, x: f64, y: f64) -> f64 {
        self.permeability.sample_unchecked(x, y)
    }

    pub fn phi(&self, x: f64, y: f64) -> f64 {
        self.porosity.sample_unchecked(x, y)
    }

    fn increment(&self, x: f64, y: f64, phase: Phase) -> f64 {
        let (px, py) = (x * self.domain.length_x, y * self.domain.length_y);
        self.sources
            .iter()
            .filter(|s| s.phase == phase)
            .map(|s| source_value(s, px, py))
            .sum()
    }

    /// Gas saturation added per step at a reference point (`φ⁻¹ τ q_g`).
    pub fn gas_increment(&self, x: f64, y: f64) -> f64 {
        self.increment(x, y, Phase::Gas)
    }

    /// Volumetric source rate `q_w + q_g` (1/s) for time step `tau`.
    pub fn total_source_rate(&self, x: f64, y: f64, tau: f64) -> f64 {
        let s = self.increment(x, y, Phase::Gas) + self.increment(x, y, Phase::Water);
        if s == 0.0 {
            0.0
        } else {
            s * self.phi(x, y) / tau
        }
    }

    /// Stability bounds `(K_min/μw, K_max/μg)` on the mobility coefficient.
    pub fn alpha_bounds(&self) -> (f64, f64) {
        (
            self.permeability.min() / self.fluids.mu_w,
            self.permeability.max() / self.fluids.mu_g,
        )
    }
}

/// Procedural heterogeneous maps standing in for field data.
///
/// These are synthetic: smooth layered, channelized and blocky structures of
/// moderate contrast, generated deterministically.
pub mod standin {
    use ndarray::Array2;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Pattern {
        /// Permeability growing with height in soft steps, mild lateral waviness.
        Layered,
        /// A sinuous high-permeability channel in a layered background.
        Channel,
        /// Blocks of contrasting permeability.
        Blocky,
    }

    impl Pattern {
        pub const ALL: [Pattern; 3] = [Pattern::Layered, Pattern::Channel, Pattern::Blocky];

        pub fn name(self) -> &'static str {
            match self {
                Pattern::Layered => "layered",
                Pattern::Channel => "channel",
                Pattern::Blocky => "blocky",
            }
        }
    }

    fn center(k: usize, n: usize) -> f64 {
        (k as f64 + 0.5) / n as f64
    }

    fn smoothstep(t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }

    /// Permeability in mDarcy, `rows × cols`, row 0 at the bottom.
    pub fn permeability(pattern: Pattern, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(r, c)| {
            let (x, y) = (center(c, cols), center(r, rows));
            match pattern {
                Pattern::Layered => {
                    // four soft layers, 1 → 8 mDarcy upward, lateral factor in [0.8, 1.2]
                    let mut level = 0.0;
                    for edge in [0.3, 0.55, 0.75] {
                        level += smoothstep((y - edge) / 0.08 + 0.5);
                    }
                    let lateral = 1.0 + 0.2 * (2.0 * std::f64::consts::PI * x).sin();
                    2f64.powf(level) * lateral
                }
                Pattern::Channel => {
                    let axis = 0.5 + 0.15 * (2.0 * std::f64::consts::PI * x).sin();
                    let d = ((y - axis) / 0.08).powi(2);
                    let background = 1.0 + 2.0 * y;
                    background + 6.0 * (-d).exp()
                }
                Pattern::Blocky => {
                    let bx = (x * 4.0).floor() as i64;
                    let by = (y * 4.0).floor() as i64;
                    let hash = ((bx * 7 + by * 13 + 3) % 5) as f64;
                    0.5 + 1.5 * hash
                }
            }
        })
    }

    /// Porosity in `(0, 1]` correlated with permeability.
    pub fn porosity(pattern: Pattern, rows: usize, cols: usize) -> Array2<f64> {
        let k = permeability(pattern, rows, cols);
        let (lo, hi) = k
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        k.mapv(|v| 0.1 + 0.25 * (v - lo) / (hi - lo).max(f64::MIN_POSITIVE))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn table_one_mobility() {
        let f = FluidParams::default();
        assert_relative_eq!(alpha_at(0.0, 1e-15, &f), 3.944773175542406e-12, max_relative = 1e-12);
        assert_relative_eq!(alpha_at(1.0, 1e-15, &f), 1e-15 / 3.95e-5, max_relative = 1e-14);
    }

    #[test]
    fn mobility_increases_with_gas_saturation() {
        let f = FluidParams::default();
        let mut prev = alpha_at(0.0, 2e-15, &f);
        for k in 1..=100 {
            let a = alpha_at(k as f64 / 100.0, 2e-15, &f);
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn mobility_clamps_saturation() {
        let f = FluidParams::default();
        assert_eq!(alpha_at(1.5, 1e-15, &f), alpha_at(1.0, 1e-15, &f));
        assert_eq!(alpha_at(-0.2, 1e-15, &f), alpha_at(0.0, 1e-15, &f));
    }

    #[test]
    fn bilinear_midpoint() {
        let m = MaterialField::new(array![[0.1, 1.0], [0.1, 1.0]], MapKind::Porosity).unwrap();
        assert_relative_eq!(m.sample(0.5, 0.5).unwrap(), 0.55, max_relative = 1e-15);
        assert_relative_eq!(m.sample(0.5, 0.1).unwrap(), 0.55, max_relative = 1e-15);
        // clamped beyond the outer cell centers
        assert_eq!(m.sample(0.0, 0.3).unwrap(), 0.1);
        assert_eq!(m.sample(1.0, 0.3).unwrap(), 1.0);
        assert!(m.sample(1.2, 0.3).is_err());
    }

    #[test]
    fn single_cell_map_is_constant() {
        let m = MaterialField::uniform(3e-15, MapKind::Permeability).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.3, 0.9), (1.0, 1.0)] {
            assert_eq!(m.sample(x, y).unwrap(), 3e-15);
        }
    }

    #[test]
    fn invalid_cells_are_rejected() {
        assert!(matches!(
            MaterialField::new(array![[0.2, 0.0]], MapKind::Porosity),
            Err(ReservoirError::InvalidValue { row: 0, col: 1, .. })
        ));
        assert!(MaterialField::new(array![[1.2]], MapKind::Porosity).is_err());
        assert!(MaterialField::new(array![[-1.0]], MapKind::Permeability).is_err());
    }

    #[test]
    fn source_indicator() {
        let s = SourceDisk {
            center: [25.0, 25.0],
            radius: 3.0,
            strength: 1e-6,
            phase: Phase::Gas,
        };
        assert_eq!(source_value(&s, 25.0, 25.0), 1e-6);
        assert_eq!(source_value(&s, 31.0, 25.0), 0.0);
        assert_eq!(source_value(&s, 25.0, 28.0), 1e-6);
    }

    #[test]
    fn source_must_fit_in_domain() {
        let s = SourceDisk {
            center: [1.0, 25.0],
            radius: 3.0,
            strength: 1e-6,
            phase: Phase::Gas,
        };
        assert!(s.validate(&SimDomain::default()).is_err());
    }

    #[test]
    fn csv_grid_errors_carry_line_numbers() {
        let err = parse_csv_grid("1,2\n3\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_csv_grid("1,x\n").unwrap_err();
        assert!(err.contains("line 1"), "{err}");
        assert_eq!(
            parse_csv_grid("# c\n1, 2\n\n3,4\n").unwrap(),
            array![[1.0, 2.0], [3.0, 4.0]]
        );
    }

    #[test]
    fn pgm_rows_are_flipped_and_rescaled() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 255, 255, 0]);
        let g = parse_pgm(&bytes).unwrap();
        // top image row becomes row 1
        assert_eq!(g, array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn standin_maps_are_valid() {
        for p in standin::Pattern::ALL {
            let k = standin::permeability(p, 20, 20);
            let phi = standin::porosity(p, 20, 20);
            assert!(MaterialField::new(k.mapv(|v| v * MILLIDARCY), MapKind::Permeability).is_ok());
            assert!(MaterialField::new(phi, MapKind::Porosity).is_ok());
        }
    }
}
