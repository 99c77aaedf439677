//! Ensembles of realizations and the policy sweeps built on them.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{mean_sd, EfficacyTable};
use crate::dynamics::{run_realization, DailyCounts, EpidemicParams};
use crate::error::{Error, Result};
use crate::netgen::{build_small_world, Network};
use crate::policy::PolicyConfig;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSpec {
    pub n: usize,
    pub k: usize,
    pub rewire_p: f64,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            n: 100_000,
            k: 12,
            rewire_p: 0.005,
        }
    }
}

impl NetSpec {
    pub fn build(&self, seed: u64) -> Result<Network> {
        build_small_world(self.n, self.k, self.rewire_p, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    pub max_days: u32,
    /// Reuse one network for every realization instead of drawing a fresh one.
    pub freeze_network: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            max_days: 1000,
            freeze_network: false,
        }
    }
}

/// Mean and sample standard deviation of each compartment on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayStats {
    pub day: u32,
    /// S, E, I, R, M
    pub mean: [f64; 5],
    pub sd: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_realizations: usize,
    pub base_seed: u64,
    pub days: Vec<DayStats>,
    pub deaths_mean: f64,
    pub deaths_sd: f64,
    /// Final death toll of each realization, in realization order.
    pub deaths: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl EnsembleSummary {
    pub fn deaths_se(&self) -> f64 {
        self.deaths_sd / (self.n_realizations as f64).sqrt()
    }

    /// Aggregates realizations, padding shorter series with their final day.
    pub fn from_series(series: &[Vec<DailyCounts>], seeds: Vec<u64>, base_seed: u64) -> Self {
        let len = series.iter().map(Vec::len).max().unwrap_or(0);
        let days = (0..len)
            .map(|d| {
                let mut mean = [0.0; 5];
                let mut sd = [0.0; 5];
                for c in 0..5 {
                    let xs: Vec<f64> = series
                        .iter()
                        .map(|s| compartment(s.get(d).or(s.last()).expect("non-empty"), c))
                        .collect();
                    (mean[c], sd[c]) = mean_sd(&xs);
                }
                DayStats {
                    day: d as u32,
                    mean,
                    sd,
                }
            })
            .collect();
        let deaths: Vec<usize> = series
            .iter()
            .map(|s| s.last().map_or(0, |c| c.m))
            .collect();
        let as_f64: Vec<f64> = deaths.iter().map(|&m| m as f64).collect();
        let (deaths_mean, deaths_sd) = mean_sd(&as_f64);
        Self {
            n_realizations: series.len(),
            base_seed,
            days,
            deaths_mean,
            deaths_sd,
            deaths,
            seeds,
        }
    }
}

fn compartment(c: &DailyCounts, idx: usize) -> f64 {
    (match idx {
        0 => c.s,
        1 => c.e,
        2 => c.i,
        3 => c.r,
        _ => c.m,
    }) as f64
}

/// Seed of realization `index` in an ensemble.
pub fn realization_seed(base_seed: u64, index: usize) -> u64 {
    rng::derive(base_seed, index as u64)
}

/// Runs `n_realizations` independent realizations and aggregates them.
///
/// Realization `i` uses `derive(base_seed, i)` for its dynamics and, unless
/// the network is frozen, for its own network. Work is spread over the rayon
/// pool; the result does not depend on scheduling.
pub fn run_ensemble(
    net_spec: &NetSpec,
    params: &EpidemicParams,
    policy: Option<&PolicyConfig>,
    n_realizations: usize,
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<EnsembleSummary> {
    if n_realizations == 0 {
        return Err(Error::InvalidParameter {
            name: "n_realizations",
            reason: "must be at least 1".into(),
        });
    }
    let frozen = if opts.freeze_network {
        Some(net_spec.build(rng::derive(base_seed, Stream::Network as u64))?)
    } else {
        None
    };
    let seeds: Vec<u64> = (0..n_realizations)
        .map(|i| realization_seed(base_seed, i))
        .collect();
    let series = seeds
        .par_iter()
        .map(|&seed| {
            let net = match &frozen {
                Some(net) => std::borrow::Cow::Borrowed(net),
                None => std::borrow::Cow::Owned(
                    net_spec.build(rng::derive(seed, Stream::Network as u64))?,
                ),
            };
            run_realization(&net, params, policy, opts.max_days, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleSummary::from_series(&series, seeds, base_seed))
}

/// Writes `day,S,E,I,R,M,S_sd,E_sd,I_sd,R_sd,M_sd` (compartment columns are
/// ensemble means), optionally prefixed by a `k` column.
pub fn write_ensemble_csv<W: Write>(
    out: &mut W,
    rows: &[(Option<usize>, &EnsembleSummary)],
) -> std::io::Result<()> {
    let with_k = rows.iter().any(|(k, _)| k.is_some());
    if with_k {
        write!(out, "k,")?;
    }
    writeln!(out, "day,S,E,I,R,M,S_sd,E_sd,I_sd,R_sd,M_sd")?;
    for (k, summary) in rows {
        for d in &summary.days {
            if with_k {
                write!(out, "{},", k.unwrap_or(0))?;
            }
            write!(out, "{}", d.day)?;
            for v in d.mean.iter().chain(d.sd.iter()) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Which policy knob the second grid axis varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Second-dose ratio `a`.
    DoseRatio,
    /// Age-priority ratio `c`.
    AgePriority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub value: f64,
    pub deaths_mean: f64,
    pub deaths_sd: f64,
    pub n_realizations: usize,
    pub base_seed: u64,
    #[serde(skip)]
    pub summary: Option<EnsembleSummary>,
}

impl SweepCell {
    pub fn deaths_se(&self) -> f64 {
        self.deaths_sd / (self.n_realizations as f64).sqrt()
    }
}

/// Rectangular `(k, value)` grid of expected deaths, rows ordered by `k`
/// then value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axis: SweepAxis,
    pub k_values: Vec<usize>,
    pub values: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, k: usize, value: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.k == k && (c.value - value).abs() < 1e-9)
    }

    pub fn row(&self, k: usize) -> Vec<&SweepCell> {
        self.cells.iter().filter(|c| c.k == k).collect()
    }

    /// `k,a_or_c,deaths_mean,deaths_sd,n_realizations,base_seed`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "k",
            "a_or_c",
            "deaths_mean",
            "deaths_sd",
            "n_realizations",
            "base_seed",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.k.to_string(),
                c.value.to_string(),
                c.deaths_mean.to_string(),
                c.deaths_sd.to_string(),
                c.n_realizations.to_string(),
                c.base_seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One time-series file per cell, named `timeseries_k{k}_{axis}{value}.csv`.
    pub fn write_cell_timeseries(&self, dir: impl AsRef<Path>) -> Result<()> {
        let tag = match self.axis {
            SweepAxis::DoseRatio => "a",
            SweepAxis::AgePriority => "c",
        };
        for c in &self.cells {
            if let Some(summary) = &c.summary {
                let path = dir
                    .as_ref()
                    .join(format!("timeseries_k{}_{}{}.csv", c.k, tag, c.value));
                let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
                write_ensemble_csv(&mut out, &[(None, summary)])?;
                out.flush()?;
            }
        }
        Ok(())
    }
}

/// Inputs shared by both sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub k_values: Vec<usize>,
    pub values: Vec<f64>,
    pub n: usize,
    pub rewire_p: f64,
    pub n_realizations: usize,
    pub base_seed: u64,
    pub options: EnsembleOptions,
    pub keep_series: bool,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.values.is_empty() {
            return Err(Error::InvalidParameter {
                name: "sweep",
                reason: "grid axes must be non-empty".into(),
            });
        }
        Ok(())
    }

    /// Seed base of every cell in row `k`; shared along the row so cells
    /// differing only in policy see common random numbers.
    pub fn row_seed(&self, k: usize) -> u64 {
        rng::derive(self.base_seed, k as u64)
    }
}

fn run_grid(
    spec: &SweepSpec,
    axis: SweepAxis,
    params: &EpidemicParams,
    policy_for: impl Fn(usize, f64) -> Result<PolicyConfig> + Sync,
) -> Result<SweepGrid> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(spec.k_values.len() * spec.values.len());
    for &k in &spec.k_values {
        for &value in &spec.values {
            let policy = policy_for(k, value)?;
            let net = NetSpec {
                n: spec.n,
                k,
                rewire_p: spec.rewire_p,
            };
            let base_seed = spec.row_seed(k);
            let summary = run_ensemble(
                &net,
                params,
                Some(&policy),
                spec.n_realizations,
                base_seed,
                &spec.options,
            )?;
            cells.push(SweepCell {
                k,
                value,
                deaths_mean: summary.deaths_mean,
                deaths_sd: summary.deaths_sd,
                n_realizations: summary.n_realizations,
                base_seed,
                summary: spec.keep_series.then_some(summary),
            });
        }
    }
    Ok(SweepGrid {
        axis,
        k_values: spec.k_values.clone(),
        values: spec.values.clone(),
        cells,
    })
}

/// `(k, a)` grid at a fixed daily budget, with first and second dose
/// parameters looked up from the efficacy table per `k`.
pub fn sweep_dose_ratio(
    spec: &SweepSpec,
    params: &EpidemicParams,
    base_policy: &PolicyConfig,
    table: &EfficacyTable,
) -> Result<SweepGrid> {
    run_grid(spec, SweepAxis::DoseRatio, params, |k, a| {
        Ok(PolicyConfig {
            second_dose_ratio: a,
            p_inf1: table_or_base(table, base_policy.efficacy_dose1, k, params)?,
            p_inf2: table_or_base(table, base_policy.efficacy_dose2, k, params)?,
            ..base_policy.clone()
        })
    })
}

/// `(k, c)` grid for a single-dose roll-out (`a = 0`) of efficacy
/// `base_policy.efficacy_dose1`.
pub fn sweep_age_priority(
    spec: &SweepSpec,
    params: &EpidemicParams,
    base_policy: &PolicyConfig,
    table: &EfficacyTable,
) -> Result<SweepGrid> {
    run_grid(spec, SweepAxis::AgePriority, params, |k, c| {
        let p1 = table_or_base(table, base_policy.efficacy_dose1, k, params)?;
        Ok(PolicyConfig {
            second_dose_ratio: 0.0,
            age_priority_ratio: Some(c),
            p_inf1: p1,
            p_inf2: p1,
            ..base_policy.clone()
        })
    })
}

/// Table value, or the baseline for zero efficacy.
pub fn table_or_base(table: &EfficacyTable, e0: f64, k: usize, params: &EpidemicParams) -> Result<f64> {
    if e0 == 0.0 {
        Ok(params.p_inf_base)
    } else {
        table.lookup(e0, k)
    }
}
