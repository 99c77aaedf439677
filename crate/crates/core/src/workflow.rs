//! The batch workflows behind the command-line tool: each writes a manifest
//! and then its CSV outputs into one directory.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::calibration::{build_efficacy_table, EfficacyTable};
use crate::config::Config;
use crate::error::Result;
use crate::experiment::{
    run_ensemble, sweep_age_priority, sweep_dose_ratio, table_or_base, write_ensemble_csv,
    EnsembleOptions, NetSpec, SweepGrid, SweepSpec,
};
use crate::policy::PolicyConfig;

pub const EFFICACY_TABLE: &str = "efficacy_table.csv";
pub const CALIBRATION_TRACE: &str = "calibration_trace.csv";
pub const TIMESERIES: &str = "timeseries.csv";
pub const DEATHS: &str = "deaths.csv";
pub const SWEEP_DOSE: &str = "sweep_dose.csv";
pub const SWEEP_AGE: &str = "sweep_age.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Calibrate,
    Run,
    SweepDose,
    SweepAge,
}

/// Everything needed to reproduce an output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub config_path: Option<String>,
    pub base_seed: u64,
    pub output_dir: String,
    pub threads: usize,
    pub started_unix_secs: u64,
    pub resolved_config: Config,
}

impl RunManifest {
    pub fn new(command: Command, cfg: &Config, config_path: Option<&Path>, out: &Path) -> Self {
        Self {
            tool: "vaxnet",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_path: config_path.map(|p| p.display().to_string()),
            base_seed: cfg.run.seed,
            output_dir: out.display().to_string(),
            threads: rayon::current_num_threads(),
            started_unix_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            resolved_config: cfg.clone(),
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let mut f = std::fs::File::create(out.join(MANIFEST))?;
        f.write_all(
            serde_json::to_string_pretty(self)
                .expect("manifest serializes")
                .as_bytes(),
        )?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Files written and calibration cells that failed to converge.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub non_converged: Vec<(f64, usize)>,
}

impl Report {
    pub fn converged(&self) -> bool {
        self.non_converged.is_empty()
    }

    fn flag(&mut self, table: &EfficacyTable) {
        self.non_converged
            .extend(table.non_converged().map(|c| (c.e0, c.k)));
    }
}

fn begin(command: Command, cfg: &Config, config_path: Option<&Path>, out: &Path) -> Result<Report> {
    std::fs::create_dir_all(out)?;
    RunManifest::new(command, cfg, config_path, out).write(out)?;
    Ok(Report {
        files: vec![out.join(MANIFEST)],
        ..Report::default()
    })
}

fn ensemble_options(cfg: &Config) -> EnsembleOptions {
    EnsembleOptions {
        max_days: cfg.run.max_days,
        freeze_network: cfg.run.freeze_network,
    }
}

/// Loads the configured table and calibrates whatever `(e0, k)` cells are
/// still missing. Auto-calibrated tables are written next to the results.
fn resolve_table(
    cfg: &Config,
    needs: &[(f64, usize)],
    out: &Path,
    report: &mut Report,
) -> Result<EfficacyTable> {
    let mut table = match &cfg.calibration.table {
        Some(path) => EfficacyTable::read_csv(path)?,
        None => EfficacyTable::default(),
    };
    let mut missing_e: Vec<f64> = Vec::new();
    let mut missing_k: Vec<usize> = Vec::new();
    for &(e0, k) in needs {
        if e0 != 0.0 && !table.contains(e0, k) {
            if !missing_e.iter().any(|&e| e == e0) {
                missing_e.push(e0);
            }
            if !missing_k.contains(&k) {
                missing_k.push(k);
            }
        }
    }
    if !missing_e.is_empty() {
        let fresh = build_efficacy_table(
            &missing_e,
            &missing_k,
            &cfg.trial,
            &cfg.params,
            &cfg.solver,
            cfg.run.seed,
        )?;
        report.flag(&fresh);
        fresh.write_trace_csv(out.join(CALIBRATION_TRACE))?;
        table.merge(fresh);
        table.write_csv(out.join(EFFICACY_TABLE))?;
        report.files.push(out.join(EFFICACY_TABLE));
        report.files.push(out.join(CALIBRATION_TRACE));
    }
    Ok(table)
}

pub fn cmd_calibrate(cfg: &Config, config_path: Option<&Path>, out: &Path) -> Result<Report> {
    let mut report = begin(Command::Calibrate, cfg, config_path, out)?;
    let table = build_efficacy_table(
        &cfg.calibration.e_values,
        &cfg.calibration.k_values,
        &cfg.trial,
        &cfg.params,
        &cfg.solver,
        cfg.run.seed,
    )?;
    report.flag(&table);
    table.write_csv(out.join(EFFICACY_TABLE))?;
    table.write_trace_csv(out.join(CALIBRATION_TRACE))?;
    report.files.push(out.join(EFFICACY_TABLE));
    report.files.push(out.join(CALIBRATION_TRACE));
    Ok(report)
}

/// One ensemble per `run.k_values` entry, with the optional policy.
pub fn cmd_run(cfg: &Config, config_path: Option<&Path>, out: &Path) -> Result<Report> {
    let mut report = begin(Command::Run, cfg, config_path, out)?;
    let ks = &cfg.run.k_values;
    let table = match &cfg.policy {
        Some(p) => {
            let needs: Vec<_> = ks
                .iter()
                .flat_map(|&k| [(p.efficacy_dose1, k), (p.efficacy_dose2, k)])
                .collect();
            resolve_table(cfg, &needs, out, &mut report)?
        }
        None => EfficacyTable::default(),
    };

    let mut summaries = Vec::with_capacity(ks.len());
    for &k in ks {
        let policy = match &cfg.policy {
            Some(p) => Some(PolicyConfig {
                p_inf1: table_or_base(&table, p.efficacy_dose1, k, &cfg.params)?,
                p_inf2: table_or_base(&table, p.efficacy_dose2, k, &cfg.params)?,
                ..p.clone()
            }),
            None => None,
        };
        let net = NetSpec { k, ..cfg.network };
        let seed = crate::rng::derive(cfg.run.seed, k as u64);
        summaries.push(run_ensemble(
            &net,
            &cfg.params,
            policy.as_ref(),
            cfg.run.realizations,
            seed,
            &ensemble_options(cfg),
        )?);
    }

    let mut ts = std::io::BufWriter::new(std::fs::File::create(out.join(TIMESERIES))?);
    let rows: Vec<_> = ks.iter().zip(&summaries).map(|(&k, s)| (Some(k), s)).collect();
    write_ensemble_csv(&mut ts, &rows)?;
    ts.flush()?;
    report.files.push(out.join(TIMESERIES));

    let mut w = csv::Writer::from_path(out.join(DEATHS))?;
    w.write_record(["k", "deaths_mean", "deaths_sd", "n_realizations", "base_seed"])?;
    for (&k, s) in ks.iter().zip(&summaries) {
        w.write_record([
            k.to_string(),
            s.deaths_mean.to_string(),
            s.deaths_sd.to_string(),
            s.n_realizations.to_string(),
            s.base_seed.to_string(),
        ])?;
    }
    w.flush()?;
    report.files.push(out.join(DEATHS));
    Ok(report)
}

fn sweep_spec(cfg: &Config, values: &[f64]) -> SweepSpec {
    SweepSpec {
        k_values: cfg.sweep.k_values.clone(),
        values: values.to_vec(),
        n: cfg.network.n,
        rewire_p: cfg.network.rewire_p,
        n_realizations: cfg.run.realizations,
        base_seed: cfg.run.seed,
        options: ensemble_options(cfg),
        keep_series: cfg.sweep.cell_timeseries,
    }
}

fn finish_grid(grid: &SweepGrid, cfg: &Config, name: &str, out: &Path, report: &mut Report) -> Result<()> {
    grid.write_csv(out.join(name))?;
    report.files.push(out.join(name));
    if cfg.sweep.cell_timeseries {
        grid.write_cell_timeseries(out)?;
    }
    Ok(())
}

/// `(k, a)` grid at `sweep.dose_doses_per_day`.
pub fn cmd_sweep_dose(cfg: &Config, config_path: Option<&Path>, out: &Path) -> Result<Report> {
    let mut report = begin(Command::SweepDose, cfg, config_path, out)?;
    let s = &cfg.sweep;
    let needs: Vec<_> = s
        .k_values
        .iter()
        .flat_map(|&k| [(s.efficacy_dose1, k), (s.efficacy_dose2, k)])
        .collect();
    let table = resolve_table(cfg, &needs, out, &mut report)?;
    let policy = PolicyConfig {
        doses_per_day: s.dose_doses_per_day,
        efficacy_dose1: s.efficacy_dose1,
        efficacy_dose2: s.efficacy_dose2,
        dose2_admin_gap: s.dose2_admin_gap,
        age_priority_ratio: None,
        ..PolicyConfig::default()
    };
    let grid = sweep_dose_ratio(&sweep_spec(cfg, &s.a_values), &cfg.params, &policy, &table)?;
    finish_grid(&grid, cfg, SWEEP_DOSE, out, &mut report)?;
    Ok(report)
}

/// `(k, c)` grid for a single-dose roll-out at `sweep.age_doses_per_day`.
pub fn cmd_sweep_age(cfg: &Config, config_path: Option<&Path>, out: &Path) -> Result<Report> {
    let mut report = begin(Command::SweepAge, cfg, config_path, out)?;
    let s = &cfg.sweep;
    let needs: Vec<_> = s.k_values.iter().map(|&k| (s.age_efficacy, k)).collect();
    let table = resolve_table(cfg, &needs, out, &mut report)?;
    let policy = PolicyConfig {
        doses_per_day: s.age_doses_per_day,
        efficacy_dose1: s.age_efficacy,
        efficacy_dose2: s.age_efficacy,
        dose2_admin_gap: s.dose2_admin_gap,
        ..PolicyConfig::default()
    };
    let grid = sweep_age_priority(&sweep_spec(cfg, &s.c_values), &cfg.params, &policy, &table)?;
    finish_grid(&grid, cfg, SWEEP_AGE, out, &mut report)?;
    Ok(report)
}

pub fn execute(command: Command, cfg: &Config, config_path: Option<&Path>, out: &Path) -> Result<Report> {
    match command {
        Command::Calibrate => cmd_calibrate(cfg, config_path, out),
        Command::Run => cmd_run(cfg, config_path, out),
        Command::SweepDose => cmd_sweep_dose(cfg, config_path, out),
        Command::SweepAge => cmd_sweep_age(cfg, config_path, out),
    }
}
