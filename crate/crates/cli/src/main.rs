mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use regen_via::benchmark::{pendulum_comparison, run_longterm, MetricsTable};
use regen_via::circuit::rig::{characterize_rig, summarize};
use regen_via::dynamics::ActuatorModel;
use regen_via::export::{
    write_characterization_outputs, write_longterm_outputs, write_pendulum_outputs, CharacterizationReport,
};
use regen_via::ilqr::SolveStatus;

use config::RunConfig;

#[derive(Parser)]
#[command(version, about = "Variable-damping actuator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the virtual damping rig and estimate damping and regeneration.
    Characterize(CommonArgs),
    /// Compare damping schemes on the ideal-VIA reaching task.
    Pendulum(CommonArgs),
    /// Run the long-term consecutive-reaching benchmark.
    Longterm(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed of the rig noise or the target lists.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent trials.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl CommonArgs {
    fn load(&self, command: &str) -> Result<(RunConfig, PathBuf)> {
        let cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| Path::new("out").join(command));
        if self.jobs == 0 {
            anyhow::bail!("--jobs must be at least 1");
        }
        Ok((cfg, out))
    }
}

enum Outcome {
    Complete,
    Partial,
}

fn characterize(args: &CommonArgs) -> Result<Outcome> {
    let (cfg, out) = args.load("characterize")?;
    let mut rig = cfg.rig.unwrap_or_default();
    if let Some(seed) = args.seed {
        rig.seed = seed;
    }
    let rows = characterize_rig(&rig)?;
    let summary = summarize(&rig, &rows)?;
    let report = CharacterizationReport::new(&rows, &summary, rig.repeats);
    let files = write_characterization_outputs(&out, &rows, &summary, &report)
        .with_context(|| format!("writing to {}", out.display()))?;
    match report.peak_command {
        Some(u) => println!("peak regeneration at u = {u}, max damping {:.4} Nms/rad", report.max_damping),
        None => println!("empty sweep"),
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(Outcome::Complete)
}

fn pendulum(args: &CommonArgs) -> Result<Outcome> {
    let (cfg, out) = args.load("pendulum")?;
    let p = cfg.pendulum.clone().unwrap_or_default();
    let results = pendulum_comparison(&p.schemes, &p.params, &p.weights, &cfg.solver())?;
    let files = write_pendulum_outputs(&out, &results).with_context(|| format!("writing to {}", out.display()))?;
    let mut failed = 0;
    for r in &results {
        let diverged = r.solver == Some(SolveStatus::Diverged);
        failed += diverged as usize;
        println!(
            "{:<18} E = {:8.3} J  E_rege = {:8.3} J  eta = {:.3}  settling = {:.3} s{}",
            r.scheme.name(),
            r.energy.work,
            r.energy.regenerated,
            r.energy.ratio,
            r.settling_time,
            if diverged { "  (solve diverged)" } else { "" }
        );
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Complete })
}

fn longterm(args: &CommonArgs) -> Result<Outcome> {
    let (cfg, out) = args.load("longterm")?;
    let mut m = cfg.maccepa.clone().unwrap_or_default();
    if let Some(seed) = args.seed {
        m.benchmark.seed = seed;
    }
    let model = ActuatorModel::Maccepa(m.params);
    let records = run_longterm(&model, &m.weights, &cfg.solver(), &m.benchmark, args.jobs)?;
    let table = MetricsTable::from_trials(&records);
    let files = write_longterm_outputs(&out, &records, &table, m.write_trajectories)
        .with_context(|| format!("writing to {}", out.display()))?;
    for r in &table.rows {
        println!(
            "{}  settling {:.3}±{:.3} s  overshoot {:.2e}±{:.2e} rad^2 s  E_in {:.3}±{:.3} J  E_rege {:.3}±{:.3} J",
            r.condition.name(),
            r.settling_time.mean,
            r.settling_time.std,
            r.overshoot.mean,
            r.overshoot.std,
            r.consumed.mean,
            r.consumed.std,
            r.regenerated.mean,
            r.regenerated.std,
        );
    }
    let failed: usize = table.rows.iter().map(|r| r.failed_movements).sum();
    if failed > 0 {
        eprintln!("{failed} movements failed to optimise and ran their warm start");
    }
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Complete })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Characterize(a) => characterize(a),
        Command::Pendulum(a) => pendulum(a),
        Command::Longterm(a) => longterm(a),
    };
    match result {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
