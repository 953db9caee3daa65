use std::path::Path;

use super::{IoError, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    /// 8-bit PGM (`P5`).
    Gray,
    /// Blue-to-yellow PPM (`P6`).
    Thermal,
}

const THERMAL: [[f64; 3]; 5] = [
    [13.0, 8.0, 135.0],
    [126.0, 3.0, 168.0],
    [204.0, 71.0, 120.0],
    [248.0, 149.0, 64.0],
    [240.0, 249.0, 33.0],
];

fn thermal(t: f64) -> [u8; 3] {
    let pos = t * (THERMAL.len() - 1) as f64;
    let k = (pos.floor() as usize).min(THERMAL.len() - 2);
    let f = pos - k as f64;
    let mut rgb = [0u8; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        *out = (THERMAL[k][c] + f * (THERMAL[k + 1][c] - THERMAL[k][c])).round() as u8;
    }
    rgb
}

/// Renders the snapshot with a linear map of `[min, max]`; the top image row
/// is the top of the domain. A constant field renders uniformly.
pub fn render_heatmap(snapshot: &Snapshot, path: &Path, palette: Palette) -> Result<(), IoError> {
    let (rows, cols) = snapshot.grid.dim();
    let (lo, hi) = (snapshot.min(), snapshot.max());
    let span = hi - lo;
    let level = |v: f64| {
        if span > 0.0 && span.is_finite() {
            ((v - lo) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let magic = match palette {
        Palette::Gray => "P5",
        Palette::Thermal => "P6",
    };
    let mut bytes = format!("{magic}\n{cols} {rows}\n255\n").into_bytes();
    for r in (0..rows).rev() {
        for c in 0..cols {
            let t = level(snapshot.grid[[r, c]]);
            match palette {
                Palette::Gray => bytes.push((t * 255.0).round() as u8),
                Palette::Thermal => bytes.extend_from_slice(&thermal(t)),
            }
        }
    }
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::FieldKind;
    use ndarray::Array2;

    fn snap(grid: Array2<f64>) -> Snapshot {
        Snapshot {
            step: 0,
            time: 0.0,
            kind: FieldKind::Pressure,
            grid,
            extent: [1.0, 1.0],
        }
    }

    fn pixels(path: &Path) -> (usize, usize, Vec<u8>) {
        let data = std::fs::read(path).unwrap();
        let header: Vec<&[u8]> = data.splitn(4, |&b| b == b'\n').collect();
        let dims = std::str::from_utf8(header[1]).unwrap();
        let (w, h) = dims.split_once(' ').unwrap();
        (w.parse().unwrap(), h.parse().unwrap(), header[3].to_vec())
    }

    #[test]
    fn constant_field_is_uniform() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        render_heatmap(&snap(Array2::from_elem((4, 5), 3.0)), &path, Palette::Gray).unwrap();
        let (w, h, px) = pixels(&path);
        assert_eq!((w, h), (5, 4));
        assert!(px.iter().all(|&p| p == px[0]));
    }

    #[test]
    fn ramp_is_monotone_and_top_row_is_max_y() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.ppm");
        let grid = Array2::from_shape_fn((6, 3), |(r, _)| r as f64);
        render_heatmap(&snap(grid.clone()), &path, Palette::Thermal).unwrap();
        let (_, h, px) = pixels(&path);
        assert_eq!(px.len(), 6 * 3 * 3);
        let gray = dir.path().join("r.pgm");
        render_heatmap(&snap(grid), &gray, Palette::Gray).unwrap();
        let (_, _, g) = pixels(&gray);
        assert_eq!(g[0], 255);
        let column: Vec<u8> = (0..h).map(|r| g[r * 3]).collect();
        assert!(column.windows(2).all(|w| w[0] > w[1]));
    }
}
