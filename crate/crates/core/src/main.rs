use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use co2seq::crvpinn::Checkpoint;
use co2seq::driver::{self, compare_grids, SimConfig, Trajectory};
use co2seq::io::{self, parse_config, read_snapshot, render_heatmap, write_config, FieldKind, Palette};

#[derive(Parser)]
#[command(
    name = "co2seq",
    version,
    about = "CO2 injection simulator with Galerkin and collocation-network pressure solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate with the Galerkin pressure solver.
    RunDirect(RunArgs),
    /// Simulate with the collocation-network pressure solver.
    RunHybrid(RunArgs),
    /// Train the network on the initial state and write a checkpoint.
    Pretrain(RunArgs),
    /// Compare pressure snapshots of two output directories.
    Compare {
        /// Trajectory under test.
        candidate: PathBuf,
        /// Reference trajectory.
        reference: PathBuf,
        /// Also write the report as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a snapshot CSV as a PGM/PPM heatmap.
    Render {
        snapshot: PathBuf,
        /// Image path; defaults to the snapshot path with a .pgm or .ppm extension.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PaletteArg::Gray)]
        palette: PaletteArg,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of time steps, overriding the configuration.
    #[arg(long)]
    steps: Option<usize>,
    /// Pretrained network to start from (run-hybrid) or the file to write (pretrain).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PaletteArg {
    Gray,
    Thermal,
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_config(args: &RunArgs) -> Result<SimConfig, Box<dyn std::error::Error>> {
    let mut config = match &args.config {
        Some(path) => parse_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    config.validate()?;
    Ok(config)
}

fn save_effective_config(config: &SimConfig) -> CliResult {
    let dir = io::resolve_output_dir(&config.output_dir);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), write_config(config))?;
    Ok(())
}

fn summarize(t: &Trajectory) {
    let mass = t.mass.last().map_or(0.0, |m| m.2);
    println!(
        "{} steps, {} pressure updates, gas mass {mass:.6e}, {} snapshots in {}",
        t.final_state.step_index,
        t.pressure_updates,
        t.snapshots.len(),
        t.output_dir.display()
    );
}

fn pressure_snapshots(dir: &Path) -> Result<Vec<PathBuf>, std::io::Error> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(FieldKind::Pressure.name()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn compare(candidate: &Path, reference: &Path, out: Option<&Path>) -> CliResult {
    let mut report = String::from("step,max,mean,l2,fraction_under_5,fraction_under_20\n");
    let mut matched = 0;
    for a_path in pressure_snapshots(candidate)? {
        let b_path = reference.join(a_path.file_name().expect("snapshot file name"));
        if !b_path.exists() {
            continue;
        }
        let (a, b) = (read_snapshot(&a_path)?, read_snapshot(&b_path)?);
        if a.grid.dim() != b.grid.dim() {
            return Err(format!(
                "{} and {} have different grid sizes",
                a_path.display(),
                b_path.display()
            )
            .into());
        }
        let r = compare_grids(&a.grid, &b.grid);
        println!(
            "step {:>6}: max {:.4}  mean {:.4}  rms {:.4}  <5%: {:.3}  <20%: {:.3}",
            a.step, r.max, r.mean, r.l2, r.fraction_under_5, r.fraction_under_20
        );
        report.push_str(&format!(
            "{},{:e},{:e},{:e},{},{}\n",
            a.step, r.max, r.mean, r.l2, r.fraction_under_5, r.fraction_under_20
        ));
        matched += 1;
    }
    if matched == 0 {
        return Err("no pressure snapshots in common".into());
    }
    if let Some(path) = out {
        std::fs::write(path, report)?;
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult {
    match cli.command {
        Command::RunDirect(args) => {
            let config = load_config(&args)?;
            save_effective_config(&config)?;
            summarize(&driver::run_direct(&config)?);
        }
        Command::RunHybrid(args) => {
            let config = load_config(&args)?;
            let checkpoint = args.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
            save_effective_config(&config)?;
            summarize(&driver::run_hybrid(&config, checkpoint)?);
        }
        Command::Pretrain(args) => {
            let config = load_config(&args)?;
            let path = match args.checkpoint {
                Some(p) => p,
                None => {
                    let dir = io::resolve_output_dir(&config.output_dir);
                    std::fs::create_dir_all(&dir)?;
                    dir.join("checkpoint.txt")
                }
            };
            let (checkpoint, history) = driver::pretrain(&config)?;
            checkpoint.save(&path)?;
            let first = history.first().copied().unwrap_or(0.0);
            let last = history.last().copied().unwrap_or(0.0);
            println!(
                "{} epochs, loss {first:.3e} -> {last:.3e}, checkpoint {}",
                history.len(),
                path.display()
            );
        }
        Command::Compare {
            candidate,
            reference,
            out,
        } => compare(&candidate, &reference, out.as_deref())?,
        Command::Render { snapshot, out, palette } => {
            let snap = read_snapshot(&snapshot)?;
            let (palette, ext) = match palette {
                PaletteArg::Gray => (Palette::Gray, "pgm"),
                PaletteArg::Thermal => (Palette::Thermal, "ppm"),
            };
            let path = out.unwrap_or_else(|| snapshot.with_extension(ext));
            render_heatmap(&snap, &path, palette)?;
            info!("range [{:e}, {:e}]", snap.min(), snap.max());
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
