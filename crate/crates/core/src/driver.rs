//! End-to-end simulation: explicit saturation steps with the pressure
//! refreshed every `cadence` steps by either the Galerkin solver or the
//! collocation network.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use ndarray::Array2;
use thiserror::Error;

use crate::crvpinn::{
    self, alpha_grid, compute_rhs_grid, estimate_output_scale, Activation, AdamState, Checkpoint, CollocationGrid,
    GramOperator, Mlp, PinnError, PinnModel, PinnProblem, PressureScaling,
};
use crate::io::{self, FieldKind, IoError, Snapshot};
use crate::pressure_direct::{assemble_pressure_system, solve_pressure_direct, PressureError};
use crate::projection::{assemble_weak_load, KroneckerSolver, ProjectionError, TensorQuadrature, TensorSplineField};
use crate::reservoir::standin::{self, Pattern};
use crate::reservoir::{
    load_map, FluidParams, GrayRange, MapKind, MaterialField, PermeabilityUnit, Phase, Reservoir, ReservoirError,
    SimDomain, SourceDisk, MILLIDARCY,
};
use crate::saturation::{total_gas_mass, SaturationState, SaturationStepper, SourceProjection};
use crate::spline::{QuadratureRule, SplineError, SplineSpace1D};

#[derive(Error, Debug)]
pub enum DriverError {
    #[error("invalid configuration value for '{key}': {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Pressure(#[from] PressureError),
    #[error(transparent)]
    Pinn(#[from] PinnError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<DriverError>,
    },
}

impl DriverError {
    fn config(key: &str, message: impl Into<String>) -> Self {
        DriverError::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn at(step: usize) -> impl FnOnce(DriverError) -> DriverError {
        move |e| DriverError::AtStep {
            step,
            source: Box::new(e),
        }
    }
}

/// Named parameter sets for the two reference scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Constant permeability, `τ = 5000 s`, strength `1e-6`.
    Uniform,
    /// Heterogeneous maps, `τ = 1000 s`, strength `5e-6`.
    Nonuniform,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Uniform => "uniform",
            Preset::Nonuniform => "nonuniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Preset::Uniform),
            "nonuniform" => Some(Preset::Nonuniform),
            _ => None,
        }
    }

    pub fn tau(self) -> f64 {
        match self {
            Preset::Uniform => 5000.0,
            Preset::Nonuniform => 1000.0,
        }
    }

    pub fn source_strength(self) -> f64 {
        match self {
            Preset::Uniform => 1e-6,
            Preset::Nonuniform => 5e-6,
        }
    }
}

/// Where a material map comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MapSource {
    /// Constant value: mDarcy for permeability, a fraction for porosity.
    Uniform(f64),
    File(PathBuf),
    /// Synthetic map sampled at `resolution × resolution` cells.
    Standin {
        pattern: Pattern,
        resolution: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub preset: Preset,
    pub mesh_elements: usize,
    pub degree: usize,
    /// Time step in seconds.
    pub tau: f64,
    pub steps: usize,
    /// Saturation steps per pressure update.
    pub cadence: usize,
    pub source_projection: SourceProjection,
    /// Collocation lattice size `N`.
    pub collocation_n: usize,
    pub pretrain_epochs: usize,
    pub update_epochs: usize,
    pub learning_rate: f64,
    pub layers: Vec<usize>,
    pub activation: Activation,
    pub fluids: FluidParams,
    pub domain: SimDomain,
    pub permeability: MapSource,
    pub porosity: MapSource,
    pub permeability_unit: PermeabilityUnit,
    pub gray: Option<GrayRange>,
    pub sources: Vec<SourceDisk>,
    pub output_dir: PathBuf,
    /// Saturation snapshot interval in steps.
    pub snapshot_every: usize,
    /// Snapshot grid points per axis.
    pub sample_resolution: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let domain = SimDomain::default();
        let (permeability, porosity) = match preset {
            Preset::Uniform => (MapSource::Uniform(1.0), MapSource::Uniform(0.2)),
            Preset::Nonuniform => {
                let s = MapSource::Standin {
                    pattern: Pattern::Layered,
                    resolution: 64,
                };
                (s.clone(), s)
            }
        };
        Self {
            preset,
            mesh_elements: 64,
            degree: 2,
            tau: preset.tau(),
            steps: 500,
            cadence: 10,
            source_projection: SourceProjection::default(),
            collocation_n: 100,
            pretrain_epochs: 20000,
            update_epochs: 100,
            learning_rate: 1e-4,
            layers: crvpinn::DEFAULT_WIDTHS.to_vec(),
            activation: Activation::Tanh,
            fluids: FluidParams::default(),
            domain,
            permeability,
            porosity,
            permeability_unit: PermeabilityUnit::MilliDarcy,
            gray: None,
            sources: vec![SourceDisk {
                center: [domain.length_x / 2.0, domain.length_y / 2.0],
                radius: 3.0,
                strength: preset.source_strength(),
                phase: Phase::Gas,
            }],
            output_dir: PathBuf::from("out"),
            snapshot_every: 10,
            sample_resolution: 101,
            seed: 0,
        }
    }

    /// Checks invariants; errors name the offending key.
    pub fn validate(&self) -> Result<(), DriverError> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(DriverError::config(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("mesh.elements", self.mesh_elements)?;
        positive("mesh.degree", self.degree)?;
        positive("time.cadence", self.cadence)?;
        positive("training.pretrain_epochs", self.pretrain_epochs)?;
        positive("training.update_epochs", self.update_epochs)?;
        positive("output.snapshot_every", self.snapshot_every)?;
        if self.collocation_n < 2 {
            return Err(DriverError::config("training.collocation", "must be at least 2"));
        }
        if self.sample_resolution < 2 {
            return Err(DriverError::config("output.resolution", "must be at least 2"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(DriverError::config(
                "time.tau",
                format!("must be positive, got {}", self.tau),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DriverError::config(
                "training.learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        if self.layers.len() < 2 || self.layers[0] != 2 || self.layers.last() != Some(&1) || self.layers.contains(&0) {
            return Err(DriverError::config(
                "training.layers",
                format!("{:?} must start at 2, end at 1 and have no empty layer", self.layers),
            ));
        }
        self.fluids
            .validate()
            .map_err(|e| DriverError::config("fluids", e.to_string()))?;
        self.domain
            .validate()
            .map_err(|e| DriverError::config("domain", e.to_string()))?;
        for (key, src) in [
            ("maps.permeability", &self.permeability),
            ("maps.porosity", &self.porosity),
        ] {
            match src {
                MapSource::Uniform(v) if !(*v > 0.0 && v.is_finite()) => {
                    return Err(DriverError::config(key, format!("must be positive, got {v}")))
                }
                MapSource::Uniform(v) if key == "maps.porosity" && *v > 1.0 => {
                    return Err(DriverError::config(key, format!("porosity {v} exceeds 1")))
                }
                MapSource::Standin { resolution: 0, .. } => {
                    return Err(DriverError::config("maps.standin_resolution", "must be at least 1"))
                }
                _ => {}
            }
        }
        if self.preset == Preset::Nonuniform && matches!(self.permeability, MapSource::Uniform(_)) {
            return Err(DriverError::config(
                "maps.permeability",
                "the nonuniform preset needs a permeability map path or stand-in",
            ));
        }
        for s in &self.sources {
            s.validate(&self.domain)
                .map_err(|e| DriverError::config("sources", e.to_string()))?;
        }
        Ok(())
    }

    fn material(&self, src: &MapSource, kind: MapKind) -> Result<MaterialField, DriverError> {
        Ok(match src {
            MapSource::Uniform(v) => match kind {
                MapKind::Permeability => MaterialField::uniform(v * MILLIDARCY, kind)?,
                MapKind::Porosity => MaterialField::uniform(*v, kind)?,
            },
            MapSource::File(path) => load_map(path, kind, self.permeability_unit, self.gray)?,
            MapSource::Standin { pattern, resolution } => {
                let (r, c) = (*resolution, *resolution);
                match kind {
                    MapKind::Permeability => {
                        MaterialField::new(standin::permeability(*pattern, r, c).mapv(|k| k * MILLIDARCY), kind)?
                    }
                    MapKind::Porosity => MaterialField::new(standin::porosity(*pattern, r, c), kind)?,
                }
            }
        })
    }

    pub fn build_reservoir(&self) -> Result<Reservoir, DriverError> {
        Ok(Reservoir::new(
            self.domain,
            self.fluids,
            self.material(&self.permeability, MapKind::Permeability)?,
            self.material(&self.porosity, MapKind::Porosity)?,
            self.sources.clone(),
        )?)
    }

    /// Number of pressure updates a run of `steps` performs.
    pub fn pressure_updates(&self) -> usize {
        self.steps.div_ceil(self.cadence)
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::for_preset(Preset::Uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimingPhase {
    SaturationIntegration,
    Projection,
    PressureAssembly,
    /// Galerkin solve, or update training of the network.
    PressureSolve,
    /// One-off network training on the initial state.
    Pretrain,
    Exchange,
    Io,
}

impl TimingPhase {
    pub const ALL: [TimingPhase; 7] = [
        TimingPhase::SaturationIntegration,
        TimingPhase::Projection,
        TimingPhase::PressureAssembly,
        TimingPhase::PressureSolve,
        TimingPhase::Pretrain,
        TimingPhase::Exchange,
        TimingPhase::Io,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TimingPhase::SaturationIntegration => "saturation_integration",
            TimingPhase::Projection => "projection",
            TimingPhase::PressureAssembly => "pressure_assembly",
            TimingPhase::PressureSolve => "pressure_solve",
            TimingPhase::Pretrain => "pretrain",
            TimingPhase::Exchange => "exchange",
            TimingPhase::Io => "io",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRecord {
    pub phase: TimingPhase,
    pub step: usize,
    pub seconds: f64,
}

/// Everything a run produces besides the files it writes.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: SaturationState,
    pub final_pressure: Option<TensorSplineField>,
    pub timings: Vec<TimingRecord>,
    /// Loss per training epoch across all phases, pretraining first.
    pub loss_history: Vec<f64>,
    /// `(step, time, gas mass)` after each step, starting with the initial state.
    pub mass: Vec<(usize, f64, f64)>,
    pub pressure_updates: usize,
    /// Epochs trained after pretraining.
    pub update_epochs_run: usize,
    pub clamped: usize,
    pub snapshots: Vec<PathBuf>,
    pub output_dir: PathBuf,
}

/// Evaluates the saturation at every lattice point, clamped to `[0, 1]`.
pub fn sample_saturation_at_collocation(s_g: &TensorSplineField, grid: &CollocationGrid) -> Array2<f64> {
    grid.from_fn(|x, y| {
        s_g.eval(x, y)
            .map(|(v, _)| v.clamp(0.0, 1.0))
            .expect("lattice points lie in the reference square")
    })
}

/// L2 projection of the network pressure onto splines; cached per mesh.
#[derive(Debug, Clone)]
pub struct PinnProjector {
    space_x: SplineSpace1D,
    space_y: SplineSpace1D,
    tq: TensorQuadrature,
    points: Array2<f64>,
    solver: KroneckerSolver,
}

impl PinnProjector {
    pub fn new(space_x: &SplineSpace1D, space_y: &SplineSpace1D, quad: &QuadratureRule) -> Result<Self, DriverError> {
        let tq = TensorQuadrature::new(space_x, space_y, quad);
        let mut coords = Vec::with_capacity(2 * tq.n_points());
        tq.for_each_point(|p| {
            coords.push(p.x);
            coords.push(p.y);
        });
        Ok(Self {
            space_x: space_x.clone(),
            space_y: space_y.clone(),
            points: Array2::from_shape_vec((coords.len() / 2, 2), coords).expect("pairs"),
            tq,
            solver: KroneckerSolver::for_spaces(space_x, space_y, quad)?,
        })
    }

    /// Physical pressure field `p_ref · u` with zero boundary coefficients.
    pub fn project(&self, model: &PinnModel, p_ref: f64) -> Result<TensorSplineField, DriverError> {
        let values = model.eval_points(&self.points);
        let mut it = values.iter();
        let mut load = assemble_weak_load(&self.space_x, &self.space_y, &self.tq, |_| {
            (p_ref * it.next().expect("one value per point"), [0.0, 0.0])
        });
        self.solver.solve_in_place(&mut load)?;
        let mut field = TensorSplineField::from_coeffs(self.space_x.clone(), self.space_y.clone(), load)?;
        field.zero_boundary();
        Ok(field)
    }
}

pub fn project_pinn_to_splines(
    model: &PinnModel,
    p_ref: f64,
    space_x: &SplineSpace1D,
    space_y: &SplineSpace1D,
    quad: &QuadratureRule,
) -> Result<TensorSplineField, DriverError> {
    PinnProjector::new(space_x, space_y, quad)?.project(model, p_ref)
}

/// Pointwise comparison of two pressure fields on a sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// `|a - b| / max(1e-3 ‖b‖∞, |b|)` on the full sample grid.
    pub relative: Array2<f64>,
    /// Statistics over interior sample points.
    pub max: f64,
    pub mean: f64,
    /// Root mean square of the relative error.
    pub l2: f64,
    pub fraction_under_5: f64,
    pub fraction_under_20: f64,
}

/// Relative-error floor as a fraction of `‖b‖∞`.
pub const RELATIVE_FLOOR: f64 = 1e-3;

pub fn compare_grids(a: &Array2<f64>, b: &Array2<f64>) -> ErrorReport {
    assert_eq!(a.dim(), b.dim(), "compared grids differ in shape");
    let sup = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = RELATIVE_FLOOR * sup;
    let relative = ndarray::Zip::from(a).and(b).map_collect(|&x, &y| {
        let denom = floor.max(y.abs());
        if denom > 0.0 {
            (x - y).abs() / denom
        } else if x == y {
            0.0
        } else {
            f64::INFINITY
        }
    });
    let (rows, cols) = relative.dim();
    let interior: Vec<f64> = relative
        .indexed_iter()
        .filter(|((r, c), _)| *r > 0 && *c > 0 && r + 1 < rows && c + 1 < cols)
        .map(|(_, &v)| v)
        .collect();
    let n = interior.len().max(1) as f64;
    ErrorReport {
        max: interior.iter().copied().fold(0.0, f64::max),
        mean: interior.iter().sum::<f64>() / n,
        l2: (interior.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        fraction_under_5: interior.iter().filter(|&&v| v < 0.05).count() as f64 / n,
        fraction_under_20: interior.iter().filter(|&&v| v < 0.20).count() as f64 / n,
        relative,
    }
}

/// Compares `p_a` against the reference `p_b` on a `resolution²` grid.
pub fn compare_pressures(p_a: &TensorSplineField, p_b: &TensorSplineField, resolution: usize) -> ErrorReport {
    compare_grids(
        &p_a.sample_grid(resolution, resolution),
        &p_b.sample_grid(resolution, resolution),
    )
}

/// Quadrature for loads with sharp source disks.
pub fn load_quadrature(degree: usize) -> QuadratureRule {
    QuadratureRule::gauss_legendre(degree + 4)
}

/// Collocation-network pressure solver state across a run.
pub struct HybridPressure {
    pub grid: CollocationGrid,
    pub gram: GramOperator,
    pub scaling: PressureScaling,
    pub model: PinnModel,
    pub adam: AdamState,
    pub projector: PinnProjector,
    pub learning_rate: f64,
}

impl HybridPressure {
    pub fn new(
        config: &SimConfig,
        reservoir: &Reservoir,
        space: &SplineSpace1D,
        checkpoint: Option<Checkpoint>,
    ) -> Result<Self, DriverError> {
        let grid = CollocationGrid::new(config.collocation_n)?;
        let scaling = PressureScaling::for_reservoir(reservoir)?;
        let (model, adam) = match checkpoint {
            Some(c) => {
                if c.model.mlp.widths() != config.layers.as_slice() {
                    return Err(DriverError::config(
                        "training.layers",
                        format!("checkpoint has layers {:?}", c.model.mlp.widths()),
                    ));
                }
                (c.model, c.adam)
            }
            None => {
                let mlp = Mlp::for_training(&config.layers, config.activation, config.seed)?;
                let adam = AdamState::new(&mlp.params);
                (PinnModel::new(mlp), adam)
            }
        };
        Ok(Self {
            gram: GramOperator::new(grid)?,
            grid,
            scaling,
            model,
            adam,
            projector: PinnProjector::new(space, space, &QuadratureRule::for_degree(space.degree()))?,
            learning_rate: config.learning_rate,
        })
    }

    /// Lattice problem for the current saturation.
    pub fn problem(
        &self,
        s_g: &TensorSplineField,
        reservoir: &Reservoir,
        tau: f64,
    ) -> Result<PinnProblem, DriverError> {
        let s = sample_saturation_at_collocation(s_g, &self.grid);
        let alpha = alpha_grid(&self.grid, &s, reservoir, &self.scaling)?;
        let rhs = compute_rhs_grid(&self.grid, &s, reservoir, tau, &self.scaling)?;
        Ok(PinnProblem::from_pressure_rhs(&self.grid, alpha, &rhs)?)
    }

    /// Rescales the output to the problem's magnitude and trains.
    pub fn train(&mut self, problem: &PinnProblem, epochs: usize) -> Result<Vec<f64>, DriverError> {
        let scale = estimate_output_scale(problem, &self.gram)?;
        self.model.rescale_output(scale)?;
        Ok(crvpinn::train(
            &mut self.model,
            &mut self.adam,
            problem,
            &self.gram,
            epochs,
            self.learning_rate,
        )?)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            adam: self.adam.clone(),
            scaling: self.scaling,
        }
    }
}

enum Solver {
    Direct,
    Hybrid {
        pinn: Box<HybridPressure>,
        pretrained: bool,
    },
}

struct Recorder {
    timings: Vec<TimingRecord>,
}

impl Recorder {
    fn time<T>(&mut self, phase: TimingPhase, step: usize, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(TimingRecord {
            phase,
            step,
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn write_field(
    field: &TensorSplineField,
    kind: FieldKind,
    step: usize,
    time: f64,
    config: &SimConfig,
    dir: &Path,
) -> Result<PathBuf, DriverError> {
    let r = config.sample_resolution;
    let snap = Snapshot {
        step,
        time,
        kind,
        grid: field.sample_grid(r, r),
        extent: [config.domain.length_x, config.domain.length_y],
    };
    Ok(io::write_snapshot(&snap, dir)?)
}

/// Runs with the Galerkin pressure solver.
pub fn run_direct(config: &SimConfig) -> Result<Trajectory, DriverError> {
    run(config, Solver::Direct)
}

/// Runs with the collocation network. A checkpoint replaces pretraining.
pub fn run_hybrid(config: &SimConfig, checkpoint: Option<Checkpoint>) -> Result<Trajectory, DriverError> {
    config.validate()?;
    let reservoir = config.build_reservoir()?;
    let space = SplineSpace1D::new(config.mesh_elements, config.degree)?;
    let pretrained = checkpoint.is_some();
    let pinn = HybridPressure::new(config, &reservoir, &space, checkpoint)?;
    run(
        config,
        Solver::Hybrid {
            pinn: Box::new(pinn),
            pretrained,
        },
    )
}

/// Trains the network on the initial saturation only.
pub fn pretrain(config: &SimConfig) -> Result<(Checkpoint, Vec<f64>), DriverError> {
    config.validate()?;
    let reservoir = config.build_reservoir()?;
    let space = SplineSpace1D::new(config.mesh_elements, config.degree)?;
    let mut pinn = HybridPressure::new(config, &reservoir, &space, None)?;
    let s0 = TensorSplineField::zeros(space.clone(), space);
    let problem = pinn.problem(&s0, &reservoir, config.tau)?;
    let history = pinn.train(&problem, config.pretrain_epochs)?;
    Ok((pinn.checkpoint(), history))
}

fn run(config: &SimConfig, mut solver: Solver) -> Result<Trajectory, DriverError> {
    config.validate()?;
    let reservoir = config.build_reservoir()?;
    let out = io::resolve_output_dir(&config.output_dir);
    std::fs::create_dir_all(&out).map_err(|e| IoError::io(&out, e))?;
    let space = SplineSpace1D::new(config.mesh_elements, config.degree)?;
    let load_quad = load_quadrature(config.degree);
    let mass_quad = QuadratureRule::for_degree(config.degree);
    let stepper = SaturationStepper::new(&space, &space, &load_quad, &reservoir)?
        .with_source_projection(config.source_projection);

    let mut rec = Recorder { timings: Vec::new() };
    let mut state = SaturationState::new(TensorSplineField::zeros(space.clone(), space.clone()));
    let mut snapshots = Vec::new();
    let mut loss_history = Vec::new();
    let mut mass = vec![(0, 0.0, total_gas_mass(&state, &reservoir, &mass_quad))];
    let mut pressure: Option<TensorSplineField> = None;
    let mut pressure_updates = 0;
    let mut update_epochs_run = 0;
    let mut clamped = 0;

    snapshots.push(rec.time(TimingPhase::Io, 0, || {
        write_field(&state.s_g, FieldKind::Saturation, 0, 0.0, config, &out)
    })?);

    for n in 0..config.steps {
        if n % config.cadence == 0 {
            let p = match &mut solver {
                Solver::Direct => {
                    let system = rec.time(TimingPhase::PressureAssembly, n, || {
                        assemble_pressure_system(&state.s_g, &reservoir, config.tau, &load_quad)
                    });
                    rec.time(TimingPhase::PressureSolve, n, || solve_pressure_direct(&system))
                        .map_err(|e| DriverError::AtStep {
                            step: n,
                            source: Box::new(e.into()),
                        })?
                }
                Solver::Hybrid { pinn, pretrained } => {
                    let problem = rec
                        .time(TimingPhase::Exchange, n, || {
                            pinn.problem(&state.s_g, &reservoir, config.tau)
                        })
                        .map_err(DriverError::at(n))?;
                    let mut phases = Vec::with_capacity(2);
                    if !*pretrained {
                        *pretrained = true;
                        phases.push((TimingPhase::Pretrain, config.pretrain_epochs));
                    }
                    phases.push((TimingPhase::PressureSolve, config.update_epochs));
                    update_epochs_run += config.update_epochs;
                    for (phase, epochs) in phases {
                        match rec.time(phase, n, || pinn.train(&problem, epochs)) {
                            Ok(h) => loss_history.extend(h),
                            Err(e) => {
                                let dump = out.join("checkpoint_failed.txt");
                                if let Err(io_err) = pinn.checkpoint().save(&dump) {
                                    warn!("could not dump checkpoint: {io_err}");
                                } else {
                                    warn!("training failed; last finite state saved to {}", dump.display());
                                }
                                return Err(DriverError::at(n)(e));
                            }
                        }
                    }
                    rec.time(TimingPhase::Exchange, n, || {
                        pinn.projector.project(&pinn.model, pinn.scaling.p_ref)
                    })
                    .map_err(DriverError::at(n))?
                }
            };
            pressure_updates += 1;
            snapshots.push(rec.time(TimingPhase::Io, n, || {
                write_field(&p, FieldKind::Pressure, n, state.time, config, &out)
            })?);
            pressure = Some(p);
        }
        let p = pressure.as_ref().expect("pressure computed at step 0");
        let (load, courant) = rec
            .time(TimingPhase::SaturationIntegration, n, || {
                stepper.assemble_rhs(&state.s_g, p, config.tau)
            })
            .map_err(|e| DriverError::at(n)(e.into()))?;
        let (next, report) = rec
            .time(TimingPhase::Projection, n, || {
                stepper.finish_step(&state, load, courant, config.tau)
            })
            .map_err(|e| DriverError::at(n)(e.into()))?;
        clamped += report.clamped;
        state = next;
        mass.push((
            state.step_index,
            state.time,
            total_gas_mass(&state, &reservoir, &mass_quad),
        ));
        let done = state.step_index;
        if done.is_multiple_of(config.snapshot_every) || done == config.steps {
            snapshots.push(rec.time(TimingPhase::Io, n, || {
                write_field(&state.s_g, FieldKind::Saturation, done, state.time, config, &out)
            })?);
        }
    }

    rec.time(TimingPhase::Io, config.steps, || -> Result<(), DriverError> {
        write_mass(&mass, &out.join("mass.csv"))?;
        if let Solver::Hybrid { pinn, .. } = &solver {
            write_losses(&loss_history, &out.join("loss.csv"))?;
            pinn.checkpoint().save(&out.join("checkpoint.txt"))?;
        }
        Ok(())
    })?;
    io::write_timings(&rec.timings, &out.join("timings.csv"))?;
    info!(
        "{} steps, {} pressure updates, {} clamped coefficients, output in {}",
        config.steps,
        pressure_updates,
        clamped,
        out.display()
    );
    Ok(Trajectory {
        final_state: state,
        final_pressure: pressure,
        timings: rec.timings,
        loss_history,
        mass,
        pressure_updates,
        update_epochs_run,
        clamped,
        snapshots,
        output_dir: out,
    })
}

fn write_mass(mass: &[(usize, f64, f64)], path: &Path) -> Result<(), DriverError> {
    let mut text = String::from("step,time,gas_mass\n");
    for (step, time, m) in mass {
        text.push_str(&format!("{step},{time:e},{m:.16e}\n"));
    }
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))?;
    Ok(())
}

fn write_losses(losses: &[f64], path: &Path) -> Result<(), DriverError> {
    let mut text = String::from("epoch,loss\n");
    for (k, l) in losses.iter().enumerate() {
        text.push_str(&format!("{k},{l:.16e}\n"));
    }
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))?;
    Ok(())
}
