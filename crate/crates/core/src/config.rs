//! JSON run configuration.
//!
//! Every section is optional; missing fields take the defaults of the
//! corresponding library type, which give the reference setup
//! (`n = 100000`, rewiring 0.005, 128 realizations, `p_inf = 0.02`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{SolverConfig, TrialConfig};
use crate::dynamics::EpidemicParams;
use crate::error::{Error, Result};
use crate::experiment::NetSpec;
use crate::policy::PolicyConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub network: NetSpec,
    pub params: EpidemicParams,
    /// Vaccination policy for `run`; `null` runs without vaccination.
    pub policy: Option<PolicyConfig>,
    pub trial: TrialConfig,
    pub solver: SolverConfig,
    pub calibration: CalibrationSection,
    pub run: RunSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub e_values: Vec<f64>,
    pub k_values: Vec<usize>,
    /// Existing `efficacy_table.csv` to use instead of calibrating.
    pub table: Option<PathBuf>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            e_values: vec![0.5, 0.7, 0.9],
            k_values: (6..=30).step_by(2).collect(),
            table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub realizations: usize,
    pub max_days: u32,
    pub freeze_network: bool,
    /// Degrees simulated by `run`; each gets its own ensemble.
    pub k_values: Vec<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 1,
            realizations: 128,
            max_days: 1000,
            freeze_network: false,
            k_values: vec![12, 24],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub k_values: Vec<usize>,
    pub a_values: Vec<f64>,
    pub c_values: Vec<f64>,
    /// Daily budget of the dose-ratio sweep.
    pub dose_doses_per_day: usize,
    /// Daily budget of the age-priority sweep.
    pub age_doses_per_day: usize,
    pub efficacy_dose1: f64,
    pub efficacy_dose2: f64,
    /// Single-dose efficacy of the age-priority sweep.
    pub age_efficacy: f64,
    pub dose2_admin_gap: u32,
    /// Also write one time-series file per grid cell.
    pub cell_timeseries: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            k_values: (6..=30).step_by(2).collect(),
            a_values: (0..=7).map(|i| i as f64 / 10.0).collect(),
            c_values: (0..=10).map(|i| i as f64 / 10.0).collect(),
            dose_doses_per_day: 500,
            age_doses_per_day: 1000,
            efficacy_dose1: 0.5,
            efficacy_dose2: 0.9,
            age_efficacy: 0.7,
            dose2_admin_gap: 21,
            cell_timeseries: false,
        }
    }
}

/// What a written manifest looks like on disk; only the part needed to rerun.
#[derive(Deserialize)]
struct ManifestView {
    resolved_config: Config,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = if value.get("resolved_config").is_some() {
            serde_json::from_value::<ManifestView>(value).map(|m| m.resolved_config)
        } else {
            serde_json::from_value::<Config>(value)
        }
        .map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, or the resolved config inside a manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        self.params
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(policy) = &self.policy {
            if let Some(c) = policy.age_priority_ratio {
                if !(0.0..=1.0).contains(&c) {
                    return fail("policy.age_priority_ratio must be in [0, 1]");
                }
            }
            if !(0.0..=1.0).contains(&policy.second_dose_ratio) {
                return fail("policy.second_dose_ratio must be in [0, 1]");
            }
        }
        if self.run.realizations == 0 {
            return fail("run.realizations must be at least 1");
        }
        if self.run.max_days == 0 {
            return fail("run.max_days must be at least 1");
        }
        for (name, ks) in [
            ("run.k_values", &self.run.k_values),
            ("sweep.k_values", &self.sweep.k_values),
            ("calibration.k_values", &self.calibration.k_values),
        ] {
            if ks.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            if let Some(&k) = ks.iter().find(|&&k| k < 2 || k % 2 != 0) {
                return Err(Error::Config(format!("{name}: k = {k} must be even and >= 2")));
            }
        }
        for (name, xs) in [
            ("sweep.a_values", &self.sweep.a_values),
            ("sweep.c_values", &self.sweep.c_values),
            ("calibration.e_values", &self.calibration.e_values),
        ] {
            if xs.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            if xs.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.calibration.e_values.contains(&1.0) {
            return fail("calibration.e_values must be below 1");
        }
        Ok(())
    }
}
