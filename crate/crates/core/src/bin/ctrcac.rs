use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ctrcac::environments::{Environment, Mode, TargetPerturbations, AXIS_NAMES};
use ctrcac::harness::oracle_check::{check_all, ROWS};
use ctrcac::harness::sweep::{run_sweep, to_csv, SweepFile};
use ctrcac::harness::{execute, learned_gains, write_telemetry, Scenario, ScenarioFile};

#[derive(Parser)]
#[command(name = "ctrcac", version, about = "Learn, fly and check CT-RCAC autopilot gains")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Learn all 18 gains from a scenario; writes telemetry and a gains file.
    Learn(Common),
    /// Fly frozen gains on the source or target plant.
    Fly(Common),
    /// Compare the propagated minimizer with the batch oracle.
    OracleCheck(Common),
    /// Run a parallel grid of scenarios described by a sweep file.
    Sweep(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvKind {
    Source,
    Target,
}

#[derive(Args)]
struct Common {
    /// Scenario file (sweep file for `sweep`). Defaults to the (1,1,1) waypoint.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gains file, or the name of a bundled set such as table2_waypoint.json.
    #[arg(long)]
    gains: Option<PathBuf>,
    #[arg(long, value_enum)]
    env: Option<EnvKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulated time (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Integration step (s).
    #[arg(long)]
    dt: Option<f64>,
}

impl Common {
    fn scenario(&self, mode: Mode) -> Result<Scenario> {
        let mut file = match &self.config {
            Some(path) => ScenarioFile::read(path)?,
            None => ScenarioFile::waypoint(),
        };
        file.mode = mode;
        if let Some(g) = &self.gains {
            file.gains_file = Some(g.clone());
        }
        match self.env {
            Some(EnvKind::Source) => file.environment = Environment::Source,
            Some(EnvKind::Target) if file.environment == Environment::Source => {
                file.environment = Environment::Target(TargetPerturbations::default())
            }
            _ => {}
        }
        if let Some(seed) = self.seed {
            file.seed = seed;
        }
        if let Some(d) = self.duration {
            file.duration = d;
        }
        if let Some(dt) = self.dt {
            file.integrator.dt = dt;
        }
        if let Some(out) = &self.out {
            file.output.dir = Some(out.clone());
        }
        Ok(file.resolve()?)
    }
}

fn out_dir(scenario: &Scenario, verb: &str) -> PathBuf {
    scenario.file.output.dir.clone().unwrap_or_else(|| Path::new("out").join(verb))
}

fn simulate(args: &Common, mode: Mode) -> Result<bool> {
    let verb = if mode == Mode::Learn { "learn" } else { "fly" };
    let scenario = args.scenario(mode)?;
    let dir = out_dir(&scenario, verb);
    scenario.echo(&dir)?;
    let started = std::time::Instant::now();
    match execute(&scenario) {
        Ok(done) => {
            write_telemetry(&dir, &done.output.telemetry.to_csv())?;
            let doc = learned_gains(&scenario, &done.output);
            if mode == Mode::Learn {
                doc.save(&dir.join("gains.json"))?;
            }
            println!("{verb}: {} s simulated in {:.2?}", scenario.duration(), started.elapsed());
            let e = done.final_error;
            println!("final position error: [{:.4}, {:.4}, {:.4}]", e[0], e[1], e[2]);
            for (name, g) in AXIS_NAMES.iter().zip(doc.to_array()) {
                println!("  {name:>5}: kp1 {:>10.4} kp2 {:>10.4} ki {:>10.4e}", g.kp1, g.kp2, g.ki);
            }
            if done.output.tilt_saturations > 0 {
                println!("tilt limit engaged on {} steps", done.output.tilt_saturations);
            }
            println!("artifacts in {}", dir.display());
            Ok(true)
        }
        Err(failure) => {
            write_telemetry(&dir, &failure.telemetry.to_csv())?;
            eprintln!("{verb} failed {failure}");
            eprintln!("partial telemetry ({} rows) in {}", failure.telemetry.rows.len(), dir.display());
            Ok(false)
        }
    }
}

fn oracle_check(args: &Common) -> Result<bool> {
    let scenario = match &args.config {
        Some(_) => args.scenario(Mode::Learn)?,
        None => ScenarioFile::waypoint().resolve()?,
    };
    let h = &scenario.sim.hyper;
    let rows = [h.outer_xy.clone(), h.outer_z.clone(), h.inner.clone()];
    let base = args.seed.unwrap_or(0);
    let duration = args.duration.unwrap_or(10.0);
    let dt = args.dt.unwrap_or(1e-3);
    let reports = check_all(&rows, base..base + 20, duration, dt)?;
    let mut worst = 0.0f64;
    for row in ROWS {
        let r: Vec<_> = reports.iter().filter(|r| r.row == row).collect();
        let max = r.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
        let sym = r.iter().map(|r| r.max_symmetry_error).fold(0.0, f64::max);
        let eig = r.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min);
        println!("{row:>8}: max relative error {max:.3e}, max asymmetry {sym:.1e}, min eig(P) {eig:.3e}");
        worst = worst.max(max);
    }
    println!("max relative error {worst:.3e} over {} trajectories", reports.len());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("oracle_check.json"), serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(worst < 1e-4)
}

fn sweep(args: &Common) -> Result<bool> {
    let Some(path) = &args.config else { bail!("sweep needs --config <sweep file>") };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let file: SweepFile =
        serde_path_to_error::deserialize(de).with_context(|| format!("parsing {}", path.display()))?;
    let results = run_sweep(&file)?;
    let dir = args.out.clone().unwrap_or_else(|| Path::new("out").join("sweep"));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("sweep.csv"), to_csv(&results))?;
    std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&file)?)?;
    let ok = results.iter().filter(|r| r.ok).count();
    println!("{ok}/{} runs completed; results in {}", results.len(), dir.join("sweep.csv").display());
    Ok(ok == results.len())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::Learn(a) => simulate(a, Mode::Learn),
        Verb::Fly(a) => simulate(a, Mode::Fly),
        Verb::OracleCheck(a) => oracle_check(a),
        Verb::Sweep(a) => sweep(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
