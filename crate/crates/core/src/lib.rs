//! Agent-based SEIRM epidemics on Watts-Strogatz networks, vaccination
//! roll-out policies, and calibration of the vaccinated infection parameter
//! against a target efficacy through a simulated clinical trial.

pub mod calibration;
pub mod config;
pub mod dynamics;
mod error;
pub mod experiment;
pub mod netgen;
pub mod policy;
pub mod rng;
pub mod workflow;

pub use calibration::{
    build_efficacy_table, calibrate_on, calibrate_p_inf, efficacy_from_or, odds_ratio,
    simulate_trial, CalibrationResult, EfficacyTable, SolverConfig, TrialBench, TrialConfig,
    TrialOutcome,
};
pub use dynamics::{
    infection_probability, init_population, mortality_probability, run_realization, step_day,
    AgeGroup, DailyCounts, EpidemicParams, GammaSpec, Population, State,
};
pub use error::{Error, Result};
pub use experiment::{
    run_ensemble, sweep_age_priority, sweep_dose_ratio, EnsembleOptions, EnsembleSummary,
    NetSpec, SweepAxis, SweepGrid, SweepSpec,
};
pub use netgen::{build_small_world, degree_stats, Network};
pub use policy::{apply_efficacy_onsets, allocate_daily_doses, PolicyConfig, VaccinationLedger};
