//! Plot-ready data files: comma-separated CSV with a header row and LF line
//! endings, and pretty-printed JSON carrying a `schema_version` field.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::benchmark::{MetricsTable, SchemeResult, TrialRecord};
use crate::circuit::rig::{peak_regen_command, CharacterizationRow, CharacterizationSummary};
use crate::dynamics::{ModelKind, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("write error: {0}")]
    Write(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ExportError>;

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    data: &'a T,
}

/// Writes `value` as pretty JSON with a leading `schema_version` field.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(
        &mut w,
        &Versioned {
            schema_version: SCHEMA_VERSION,
            data: value,
        },
    )?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct CharacterizationCsvRow {
    u: f64,
    #[serde(rename = "D_r")]
    d_r: f64,
    #[serde(rename = "D_d")]
    d_d: f64,
    d_hat: f64,
    p0_hat: f64,
    omega: f64,
    #[serde(rename = "I1")]
    i1: f64,
    #[serde(rename = "I2")]
    i2: f64,
    #[serde(rename = "Ir")]
    ir: f64,
}

/// Raw sweep rows, ordered by repeat then command.
pub fn write_characterization_csv<W: Write>(w: W, rows: &[CharacterizationRow]) -> Result<()> {
    let mut wtr = csv_writer(w);
    for r in rows {
        wtr.serialize(CharacterizationCsvRow {
            u: r.u,
            d_r: r.duty_regenerative,
            d_d: r.duty_dynamic,
            d_hat: r.d_hat,
            p0_hat: r.p0_hat,
            omega: r.omega,
            i1: r.current_drive,
            i2: r.current_damper,
            ir: r.current_load,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_characterization_summary_csv<W: Write>(w: W, summary: &[CharacterizationSummary]) -> Result<()> {
    let mut wtr = csv_writer(w);
    for s in summary {
        wtr.serialize(s)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryCsvRow {
    t: f64,
    q: f64,
    qdot: f64,
    theta1: Option<f64>,
    theta2: Option<f64>,
    u1: f64,
    u2: f64,
    u3: f64,
    d: f64,
    #[serde(rename = "P_rege")]
    p_rege: f64,
}

/// One row per integration sample; servo columns stay empty for the pendulum.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    let mut wtr = csv_writer(w);
    if traj.controls.is_empty() {
        wtr.write_record(["t", "q", "qdot", "theta1", "theta2", "u1", "u2", "u3", "d", "P_rege"])?;
    }
    let servos = traj.kind == ModelKind::Maccepa;
    for (i, x) in traj.states.iter().enumerate() {
        let (Some(u), Some(p)) = (traj.control_at(i), traj.powers_at(i)) else {
            continue;
        };
        wtr.serialize(TrajectoryCsvRow {
            t: traj.time(i),
            q: x.q(),
            qdot: x.qdot(),
            theta1: servos.then(|| x.theta1()),
            theta2: servos.then(|| x.theta2()),
            u1: u.u1,
            u2: u.u2,
            u3: u.u3,
            d: p.damping,
            p_rege: p.p_rege,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SchemeCsvRow<'a> {
    scheme: &'a str,
    #[serde(rename = "E")]
    work: f64,
    #[serde(rename = "E_rege")]
    regenerated: f64,
    #[serde(rename = "E_net")]
    net: f64,
    eta: f64,
    settling_time: f64,
    overshoot: f64,
    reach_time: Option<f64>,
    solver: &'a str,
    iterations: usize,
    cost: Option<f64>,
}

/// Energy and accuracy summary of the scheme comparison, one row per scheme.
pub fn write_scheme_summary_csv<W: Write>(w: W, results: &[SchemeResult]) -> Result<()> {
    let mut wtr = csv_writer(w);
    for r in results {
        let solver = match r.solver {
            None => "none",
            Some(s) => s.name(),
        };
        wtr.serialize(SchemeCsvRow {
            scheme: r.scheme.name(),
            work: r.energy.work,
            regenerated: r.energy.regenerated,
            net: r.energy.net,
            eta: r.energy.ratio,
            settling_time: r.settling_time,
            overshoot: r.overshoot,
            reach_time: r.reach_time,
            solver,
            iterations: r.iterations,
            cost: r.final_cost,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsCsvRow<'a> {
    condition: &'a str,
    trials: usize,
    settling_time_mean: f64,
    settling_time_std: f64,
    overshoot_mean: f64,
    overshoot_std: f64,
    #[serde(rename = "E_in_mean")]
    consumed_mean: f64,
    #[serde(rename = "E_in_std")]
    consumed_std: f64,
    #[serde(rename = "E_rege_mean")]
    regenerated_mean: f64,
    #[serde(rename = "E_rege_std")]
    regenerated_std: f64,
    gamma_t: f64,
    gamma_o: f64,
    gamma_c: f64,
    gamma_r: f64,
    failed_movements: usize,
}

/// Per-condition means and standard deviations plus the radar scores.
pub fn write_metrics_csv<W: Write>(w: W, table: &MetricsTable) -> Result<()> {
    let mut wtr = csv_writer(w);
    for r in &table.rows {
        wtr.serialize(MetricsCsvRow {
            condition: r.condition.name(),
            trials: r.trials,
            settling_time_mean: r.settling_time.mean,
            settling_time_std: r.settling_time.std,
            overshoot_mean: r.overshoot.mean,
            overshoot_std: r.overshoot.std,
            consumed_mean: r.consumed.mean,
            consumed_std: r.consumed.std,
            regenerated_mean: r.regenerated.mean,
            regenerated_std: r.regenerated.std,
            gamma_t: r.scores.gamma_t,
            gamma_o: r.scores.gamma_o,
            gamma_c: r.scores.gamma_c,
            gamma_r: r.scores.gamma_r,
            failed_movements: r.failed_movements,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Headline numbers of a characterization sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacterizationReport {
    pub rows: usize,
    pub repeats: usize,
    /// Command with the largest mean estimated regeneration coefficient.
    pub peak_command: Option<f64>,
    pub peak_p0: Option<f64>,
    /// Largest mean estimated damping over the sweep.
    pub max_damping: f64,
    pub max_damping_model: f64,
}

impl CharacterizationReport {
    pub fn new(rows: &[CharacterizationRow], summary: &[CharacterizationSummary], repeats: usize) -> Self {
        let peak_command = peak_regen_command(summary);
        Self {
            rows: rows.len(),
            repeats,
            peak_command,
            peak_p0: peak_command.and_then(|u| summary.iter().find(|s| s.u == u)).map(|s| s.p0_hat_mean),
            max_damping: summary.iter().map(|s| s.d_hat_mean).fold(f64::NEG_INFINITY, f64::max),
            max_damping_model: summary.iter().map(|s| s.d_model).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn write_file(path: PathBuf, f: impl FnOnce(BufWriter<File>) -> Result<()>, written: &mut Vec<PathBuf>) -> Result<()> {
    f(create(&path)?)?;
    written.push(path);
    Ok(())
}

/// `characterization.csv`, `characterization_summary.csv` and `characterization.json`.
pub fn write_characterization_outputs(
    dir: &Path,
    rows: &[CharacterizationRow],
    summary: &[CharacterizationSummary],
    report: &CharacterizationReport,
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    write_file(dir.join("characterization.csv"), |w| write_characterization_csv(w, rows), &mut written)?;
    write_file(dir.join("characterization_summary.csv"), |w| write_characterization_summary_csv(w, summary), &mut written)?;
    write_file(dir.join("characterization.json"), |w| write_json(w, report), &mut written)?;
    Ok(written)
}

#[derive(Serialize)]
struct SchemeRecords<'a> {
    schemes: &'a [SchemeResult],
}

/// One trajectory CSV per scheme plus `energy_summary.csv` and `schemes.json`.
pub fn write_pendulum_outputs(dir: &Path, results: &[SchemeResult]) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    for r in results {
        let path = dir.join(format!("trajectory_{}.csv", r.scheme.name()));
        write_file(path, |w| write_trajectory_csv(w, &r.trajectory), &mut written)?;
    }
    write_file(dir.join("energy_summary.csv"), |w| write_scheme_summary_csv(w, results), &mut written)?;
    write_file(dir.join("schemes.json"), |w| write_json(w, &SchemeRecords { schemes: results }), &mut written)?;
    Ok(written)
}

/// `summary.csv`, `summary.json`, one JSON record per trial under `trials/`
/// and, if requested, one CSV per movement under `movements/`.
pub fn write_longterm_outputs(
    dir: &Path,
    records: &[TrialRecord],
    table: &MetricsTable,
    trajectories: bool,
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    create_dir(&dir.join("trials"))?;
    if trajectories {
        create_dir(&dir.join("movements"))?;
    }
    let mut written = Vec::new();
    for rec in records {
        let stem = format!("{}_{:03}", rec.condition.name(), rec.trial);
        write_file(dir.join("trials").join(format!("{stem}.json")), |w| write_json(w, rec), &mut written)?;
        if trajectories {
            for m in &rec.movements {
                let path = dir.join("movements").join(format!("{stem}_{:03}.csv", m.index));
                write_file(path, |w| write_trajectory_csv(w, &m.trajectory), &mut written)?;
            }
        }
    }
    write_file(dir.join("summary.csv"), |w| write_metrics_csv(w, table), &mut written)?;
    write_file(dir.join("summary.json"), |w| write_json(w, table), &mut written)?;
    Ok(written)
}
