use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Saturation,
    Pressure,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Saturation => "saturation",
            FieldKind::Pressure => "pressure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "saturation" => Some(FieldKind::Saturation),
            "pressure" => Some(FieldKind::Pressure),
            _ => None,
        }
    }
}

/// A field sampled on a uniform grid; row `r` lies at height
/// `r / (rows - 1)` of the domain and column `c` at `c / (cols - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    /// Simulated time in seconds.
    pub time: f64,
    pub kind: FieldKind,
    pub grid: Array2<f64>,
    /// Physical width and height in meters.
    pub extent: [f64; 2],
}

impl Snapshot {
    pub fn file_stem(&self) -> String {
        format!("{}_{:06}", self.kind.name(), self.step)
    }

    pub fn min(&self) -> f64 {
        self.grid.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.grid.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Writes `{kind}_{step:06}.csv` and a `.meta` companion into `dir`;
/// returns the CSV path.
pub fn write_snapshot(snapshot: &Snapshot, dir: &Path) -> Result<PathBuf, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let stem = snapshot.file_stem();
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut csv = String::new();
    for row in snapshot.grid.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv).map_err(|e| IoError::io(&csv_path, e))?;

    let meta_path = dir.join(format!("{stem}.meta"));
    let (rows, cols) = snapshot.grid.dim();
    let mut meta = String::new();
    let _ = writeln!(meta, "kind = {}", snapshot.kind.name());
    let _ = writeln!(meta, "step = {}", snapshot.step);
    let _ = writeln!(meta, "time = {:e}", snapshot.time);
    let _ = writeln!(meta, "extent_x = {:e}", snapshot.extent[0]);
    let _ = writeln!(meta, "extent_y = {:e}", snapshot.extent[1]);
    let _ = writeln!(meta, "rows = {rows}");
    let _ = writeln!(meta, "cols = {cols}");
    let _ = writeln!(meta, "min = {:e}", snapshot.min());
    let _ = writeln!(meta, "max = {:e}", snapshot.max());
    std::fs::write(&meta_path, meta).map_err(|e| IoError::io(&meta_path, e))?;
    Ok(csv_path)
}

/// Reads a snapshot back from its CSV path and the adjacent `.meta` file.
pub fn read_snapshot(csv_path: &Path) -> Result<Snapshot, IoError> {
    let meta_path = csv_path.with_extension("meta");
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| IoError::io(&meta_path, e))?;
    let mut kind = None;
    let mut step = None;
    let mut time = None;
    let mut extent = [None, None];
    for (n, line) in meta.lines().enumerate() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let real = || {
            value
                .parse::<f64>()
                .map_err(|e| IoError::parse(&meta_path, n + 1, format!("{key}: {e}")))
        };
        match key {
            "kind" => {
                kind = Some(
                    FieldKind::parse(value)
                        .ok_or_else(|| IoError::parse(&meta_path, n + 1, format!("unknown field kind '{value}'")))?,
                )
            }
            "step" => {
                step = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| IoError::parse(&meta_path, n + 1, format!("step: {e}")))?,
                )
            }
            "time" => time = Some(real()?),
            "extent_x" => extent[0] = Some(real()?),
            "extent_y" => extent[1] = Some(real()?),
            _ => {}
        }
    }
    let missing = |what: &str| IoError::parse(&meta_path, 0, format!("missing '{what}'"));

    let text = std::fs::read_to_string(csv_path).map_err(|e| IoError::io(csv_path, e))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::parse(csv_path, n + 1, e.to_string()))?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(IoError::parse(
                    csv_path,
                    n + 1,
                    format!("expected {c} values, found {}", row.len()),
                ))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let grid = Array2::from_shape_vec((rows, cols.unwrap_or(0)), values)
        .map_err(|e| IoError::parse(csv_path, 0, e.to_string()))?;
    Ok(Snapshot {
        step: step.ok_or_else(|| missing("step"))?,
        time: time.ok_or_else(|| missing("time"))?,
        kind: kind.ok_or_else(|| missing("kind"))?,
        grid,
        extent: [
            extent[0].ok_or_else(|| missing("extent_x"))?,
            extent[1].ok_or_else(|| missing("extent_y"))?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naming_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Array2::from_shape_fn((3, 4), |(r, c)| (r as f64 + 0.1) / (c as f64 + 3.0));
        let snap = Snapshot {
            step: 42,
            time: 2.1e5,
            kind: FieldKind::Pressure,
            grid,
            extent: [50.0, 50.0],
        };
        let path = write_snapshot(&snap, dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "pressure_000042.csv");
        assert_eq!(read_snapshot(&path).unwrap(), snap);
    }

    #[test]
    fn zero_field_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let snap = Snapshot {
            step: 0,
            time: 0.0,
            kind: FieldKind::Saturation,
            grid: Array2::zeros((2, 2)),
            extent: [1.0, 1.0],
        };
        let path = write_snapshot(&snap, dir.path()).unwrap();
        let meta = std::fs::read_to_string(path.with_extension("meta")).unwrap();
        assert!(meta.contains("min = 0e0"));
        assert!(meta.contains("max = 0e0"));
        let csv = std::fs::read_to_string(path).unwrap();
        assert!(csv
            .lines()
            .all(|l| l.split(',').all(|v| v.parse::<f64>().unwrap() == 0.0)));
    }
}
