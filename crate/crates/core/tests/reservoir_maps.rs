mod common;

use co2seq::reservoir::{
    alpha_at, load_map, parse_csv_grid, source_value, standin, FluidParams, MapKind, MaterialField, PermeabilityUnit,
    Phase, Reservoir, SimDomain, SourceDisk, MILLIDARCY,
};
use common::*;
use ndarray::Array2;
use rand::Rng;

#[test]
fn interpolated_values_stay_within_the_nearest_cells() {
    let mut r = rng(2);
    let values = Array2::from_shape_fn((7, 5), |_| r.gen_range(0.05..0.4));
    let field = MaterialField::new(values.clone(), MapKind::Porosity).unwrap();
    let (rows, cols) = values.dim();
    for _ in 0..500 {
        let (x, y) = (r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0));
        let v = field.sample(x, y).unwrap();
        let col = ((x * cols as f64) as usize).min(cols - 1);
        let row = ((y * rows as f64) as usize).min(rows - 1);
        // the value lies in the range of the 3×3 block around the nearest cell
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for rr in row.saturating_sub(1)..=(row + 1).min(rows - 1) {
            for cc in col.saturating_sub(1)..=(col + 1).min(cols - 1) {
                lo = lo.min(values[[rr, cc]]);
                hi = hi.max(values[[rr, cc]]);
            }
        }
        assert!(
            v >= lo - 1e-15 && v <= hi + 1e-15,
            "({x}, {y}) -> {v} outside [{lo}, {hi}]"
        );
    }
}

#[test]
fn disk_area_by_monte_carlo() {
    let disk = SourceDisk {
        center: [20.0, 30.0],
        radius: 3.0,
        strength: 2.5,
        phase: Phase::Gas,
    };
    let mut r = rng(6);
    // sample the bounding square; the indicator vanishes outside it
    let samples = 200_000;
    let total: f64 = (0..samples)
        .map(|_| source_value(&disk, r.gen_range(17.0..23.0), r.gen_range(27.0..33.0)))
        .sum();
    let integral = total / samples as f64 * 36.0;
    let exact = disk.strength * disk.area();
    assert!((integral - exact).abs() <= 0.01 * exact, "{integral} vs {exact}");
}

#[test]
fn mobility_respects_the_stability_bounds() {
    let k = standin::permeability(standin::Pattern::Blocky, 12, 12).mapv(|v| v * MILLIDARCY);
    let reservoir = Reservoir::new(
        SimDomain::default(),
        FluidParams::default(),
        MaterialField::new(k, MapKind::Permeability).unwrap(),
        MaterialField::uniform(0.2, MapKind::Porosity).unwrap(),
        vec![],
    )
    .unwrap();
    let (gamma, c) = reservoir.alpha_bounds();
    let mut r = rng(1);
    for _ in 0..1000 {
        let (x, y, s) = (r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0), r.gen_range(0.0..=1.0));
        let a = alpha_at(s, reservoir.k(x, y), &reservoir.fluids);
        assert!(gamma <= a * (1.0 + 1e-12) && a <= c * (1.0 + 1e-12));
    }
}

#[test]
fn csv_map_file_in_millidarcy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.csv");
    std::fs::write(&path, "1.0,1.0\n1.0,1.0\n").unwrap();
    let field = load_map(&path, MapKind::Permeability, PermeabilityUnit::MilliDarcy, None).unwrap();
    assert_eq!(field.values().dim(), (2, 2));
    assert!(field.values().iter().all(|&v| (v - 1e-15).abs() <= 1e-30));
    assert!(parse_csv_grid("1,2\n3\n").is_err());
}

#[test]
fn standin_maps_have_moderate_contrast() {
    for pattern in standin::Pattern::ALL {
        let k = standin::permeability(pattern, 64, 64);
        let (lo, hi) = k
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(
            lo > 0.0 && hi / lo > 2.0 && hi / lo < 50.0,
            "{}: {lo}..{hi}",
            pattern.name()
        );
        let phi = standin::porosity(pattern, 64, 64);
        assert!(phi.iter().all(|&p| p > 0.0 && p <= 1.0));
    }
}
