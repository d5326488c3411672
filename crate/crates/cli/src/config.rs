use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use regen_via::benchmark::{ComparisonScheme, LongTermOptions};
use regen_via::circuit::rig::RigConfig;
use regen_via::dynamics::{IdealPendulumParams, MaccepaParams};
use regen_via::ilqr::{CostWeights, SolverOptions};
use serde::{Deserialize, Serialize};

/// One run file. Sections a command does not use may be omitted; a missing
/// section falls back to the shipped defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rig: Option<RigConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pendulum: Option<PendulumConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maccepa: Option<MaccepaConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumConfig {
    pub schemes: Vec<ComparisonScheme>,
    pub weights: CostWeights,
    pub params: IdealPendulumParams,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            schemes: ComparisonScheme::ALL.to_vec(),
            weights: CostWeights::pendulum(PI / 3.0),
            params: IdealPendulumParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaccepaConfig {
    /// Write one trajectory CSV per movement.
    pub write_trajectories: bool,
    /// The target is replaced per movement.
    pub weights: CostWeights,
    pub benchmark: LongTermOptions,
    pub params: MaccepaParams,
}

impl Default for MaccepaConfig {
    fn default() -> Self {
        Self {
            write_trajectories: true,
            weights: CostWeights::maccepa(0.0),
            benchmark: LongTermOptions::default(),
            params: MaccepaParams::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate().with_context(|| format!("validating {}", path.display()))?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        if let Some(r) = &self.rig {
            r.damping()?;
            if !(r.supply_voltage > 0.0) {
                anyhow::bail!("rig supply_voltage must be positive");
            }
            if r.u_grid.iter().any(|u| !(0.0..=1.0).contains(u)) {
                anyhow::bail!("rig u_grid entries must lie in [0, 1]");
            }
            if !(r.noise >= 0.0) {
                anyhow::bail!("rig noise must be non-negative");
            }
        }
        if let Some(p) = &self.pendulum {
            p.params.validate()?;
            p.weights.validate()?;
            if p.schemes.is_empty() {
                anyhow::bail!("pendulum.schemes is empty");
            }
        }
        if let Some(m) = &self.maccepa {
            m.params.validate()?;
            m.weights.validate()?;
            m.benchmark.validate()?;
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverOptions {
        self.solver.unwrap_or_default()
    }
}
