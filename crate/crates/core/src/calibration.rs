//! Inverse problem: find the vaccinated infection parameter that reproduces a
//! target efficacy under a simulated placebo-controlled trial.
//!
//! The trial map takes a candidate infection parameter for the vaccine arm
//! and returns the mean efficacy `1 - OR` over repeated runs on one fixed
//! network. The solver runs Newton iterations with a forward-difference
//! derivative on `G(x) = e0 - map(x)`. Every evaluation reuses the same
//! repetition seeds, so the map is a deterministic function of `x` and the
//! finite difference is not swamped by Monte-Carlo noise.

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, EpidemicParams, Population};
use crate::error::{Error, Result};
use crate::netgen::{build_small_world, Network};
use crate::rng::{self, Stream};

/// `(a/b) / (c/d)`: infected over arm size, vaccine arm against placebo arm.
pub fn odds_ratio(a: u64, b: u64, c: u64, d: u64) -> Result<f64> {
    if b == 0 || d == 0 {
        return Err(Error::InvalidParameter {
            name: "arm size",
            reason: "arm sizes must be positive".into(),
        });
    }
    if c == 0 {
        return Err(Error::ZeroPlaceboInfections);
    }
    Ok((a as f64 / b as f64) / (c as f64 / d as f64))
}

/// `e = 1 - OR`, not clamped.
pub fn efficacy_from_or(or_value: f64) -> f64 {
    1.0 - or_value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub vaccine_arm_size: usize,
    pub placebo_arm_size: usize,
    pub horizon_days: u32,
    /// Independent repetitions averaged per evaluation.
    pub repetitions: usize,
    pub n: usize,
    pub k: usize,
    pub rewire_p: f64,
    /// Agents infected at day 0 to drive the background epidemic.
    pub background_infected: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            vaccine_arm_size: 5000,
            placebo_arm_size: 5000,
            horizon_days: 100,
            repetitions: 32,
            n: 100_000,
            k: 10,
            rewire_p: 0.005,
            background_infected: 100,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidParameter {
                name: "trial",
                reason: reason.into(),
            })
        };
        if self.vaccine_arm_size == 0 || self.placebo_arm_size == 0 {
            return bad("arm sizes must be at least 1");
        }
        if self.vaccine_arm_size + self.placebo_arm_size + self.background_infected > self.n {
            return bad("arms plus background infections exceed the population");
        }
        if self.horizon_days == 0 {
            return bad("horizon must be at least 1 day");
        }
        if self.repetitions == 0 {
            return bad("need at least one repetition");
        }
        Ok(())
    }
}

/// Mean trial efficacy and its Monte-Carlo standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub efficacy: f64,
    pub std_error: f64,
    pub per_repetition: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Repetition {
    seed: u64,
    vaccine: Vec<u32>,
    placebo: Vec<u32>,
    background: Vec<u32>,
}

/// A trial with its network, arms and seeds fixed, ready for repeated
/// evaluation at different candidate values.
#[derive(Debug, Clone)]
pub struct TrialBench {
    trial: TrialConfig,
    params: EpidemicParams,
    net: Network,
    reps: Vec<Repetition>,
}

impl TrialBench {
    pub fn new(trial: &TrialConfig, params: &EpidemicParams, seed: u64) -> Result<Self> {
        trial.validate()?;
        params.validate()?;
        let net = build_small_world(trial.n, trial.k, trial.rewire_p, rng::derive(seed, u64::MAX))?;
        Self::on_network(trial, params, net, seed)
    }

    /// Uses a caller-supplied network; `trial.n/k/rewire_p` are ignored.
    pub fn on_network(
        trial: &TrialConfig,
        params: &EpidemicParams,
        net: Network,
        seed: u64,
    ) -> Result<Self> {
        let trial = TrialConfig {
            n: net.n(),
            ..trial.clone()
        };
        trial.validate()?;
        let total = trial.vaccine_arm_size + trial.placebo_arm_size + trial.background_infected;
        let reps = (0..trial.repetitions)
            .map(|r| {
                let seed = rng::derive(seed, r as u64);
                let mut pick = rng::sequential(seed, Stream::Trial);
                let chosen = index::sample(&mut pick, net.n(), total).into_vec();
                let (vaccine, rest) = chosen.split_at(trial.vaccine_arm_size);
                let (placebo, background) = rest.split_at(trial.placebo_arm_size);
                let ids = |s: &[usize]| s.iter().map(|&a| a as u32).collect::<Vec<_>>();
                Repetition {
                    seed,
                    vaccine: ids(vaccine),
                    placebo: ids(placebo),
                    background: ids(background),
                }
            })
            .collect();
        Ok(Self {
            trial,
            params: params.clone(),
            net,
            reps,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &TrialConfig {
        &self.trial
    }

    /// Infected counts `(vaccine arm, placebo arm)` for one repetition.
    fn arm_infections(&self, rep: &Repetition, candidate: f64) -> (u64, u64) {
        let params = &self.params;
        let mut pop = Population::susceptible(self.net.n(), params.p_inf_base, rep.seed);
        for &a in &rep.vaccine {
            pop.set_p_inf(a as usize, candidate);
        }
        for &a in &rep.background {
            pop.infect(a as usize, params, 0);
        }
        simulate(&mut pop, &self.net, params, None, self.trial.horizon_days);
        let infected = |arm: &[u32]| {
            arm.iter()
                .filter(|&&a| pop.exposure_day(a as usize).is_some())
                .count() as u64
        };
        (infected(&rep.vaccine), infected(&rep.placebo))
    }

    /// Evaluates the trial map at `candidate`.
    pub fn evaluate(&self, candidate: f64) -> Result<TrialOutcome> {
        crate::error::check_probability("candidate p_inf", candidate)?;
        let b = self.trial.vaccine_arm_size as u64;
        let d = self.trial.placebo_arm_size as u64;
        let per_repetition = self
            .reps
            .par_iter()
            .map(|rep| {
                let (a, c) = self.arm_infections(rep, candidate);
                odds_ratio(a, b, c, d).map(efficacy_from_or)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (efficacy, sd) = mean_sd(&per_repetition);
        Ok(TrialOutcome {
            efficacy,
            std_error: sd / (per_repetition.len() as f64).sqrt(),
            per_repetition,
        })
    }
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the simulated trial once at `candidate_p_inf`.
pub fn simulate_trial(
    trial: &TrialConfig,
    params: &EpidemicParams,
    candidate_p_inf: f64,
    seed: u64,
) -> Result<TrialOutcome> {
    TrialBench::new(trial, params, seed)?.evaluate(candidate_p_inf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Forward-difference step.
    pub dp: f64,
    /// Convergence threshold on `|G|`.
    pub tol: f64,
    /// Budget of iterations, Newton and bisection combined.
    pub max_iter: usize,
    /// Fraction of the Newton step taken.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dp: 1e-3,
            tol: 5e-3,
            max_iter: 20,
            damping: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub target_e0: f64,
    pub solved_p_inf: f64,
    pub iterations: usize,
    /// `|G|` at each accepted iterate.
    pub residual_trace: Vec<f64>,
    pub fd_step: f64,
    pub converged: bool,
    /// Whether the bisection fallback was used.
    pub bisected: bool,
}

/// Solves `e0 = map(x)` for `x` in `[0, p_inf_base]` on a prepared bench.
pub fn calibrate_on(bench: &TrialBench, e0: f64, solver: &SolverConfig) -> Result<CalibrationResult> {
    if !(0.0..1.0).contains(&e0) {
        return Err(Error::InvalidParameter {
            name: "e0",
            reason: format!("target efficacy must be in [0, 1), got {e0}"),
        });
    }
    let upper = bench.params.p_inf_base;
    let mut result = CalibrationResult {
        target_e0: e0,
        solved_p_inf: upper,
        iterations: 0,
        residual_trace: Vec::new(),
        fd_step: solver.dp,
        converged: false,
        bisected: false,
    };
    // Both arms are exchangeable at the baseline, so zero efficacy is solved
    // by the baseline parameter itself.
    if e0 == 0.0 {
        result.converged = true;
        return Ok(result);
    }

    let g = |x: f64| -> Result<f64> { Ok(e0 - bench.evaluate(x)?.efficacy) };
    // G is increasing in x: G(0) = e0 - 1 < 0 and G(upper) ~ e0 > 0.
    let (mut lo, mut hi) = (0.0_f64, upper);

    let mut x = upper;
    let mut gx = g(x)?;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    while result.iterations < solver.max_iter {
        result.iterations += 1;
        result.residual_trace.push(gx.abs());
        result.solved_p_inf = x;
        if gx.abs() <= solver.tol {
            result.converged = true;
            return Ok(result);
        }
        if gx < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        if gx.abs() < best {
            best = gx.abs();
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= 3 {
            break;
        }
        let slope = (g(x + solver.dp)? - gx) / solver.dp;
        let next = if slope > 0.0 && slope.is_finite() {
            (x - solver.damping * gx / slope).clamp(0.0, upper)
        } else {
            0.5 * (lo + hi)
        };
        // A step that leaves the known bracket or stands still is replaced
        // by its midpoint.
        let next = if next <= lo || next >= hi || next == x {
            0.5 * (lo + hi)
        } else {
            next
        };
        x = next;
        gx = g(x)?;
    }

    // Bisection fallback on the tightest bracket seen.
    result.bisected = stalled >= 3;
    while result.iterations < solver.max_iter {
        x = 0.5 * (lo + hi);
        gx = g(x)?;
        result.iterations += 1;
        result.residual_trace.push(gx.abs());
        result.solved_p_inf = x;
        if gx.abs() <= solver.tol {
            result.converged = true;
            return Ok(result);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    Ok(result)
}

/// Builds the trial bench from `trial` and solves for `e0`.
pub fn calibrate_p_inf(
    e0: f64,
    trial: &TrialConfig,
    params: &EpidemicParams,
    solver: &SolverConfig,
    seed: u64,
) -> Result<CalibrationResult> {
    let bench = TrialBench::new(trial, params, seed)?;
    calibrate_on(&bench, e0, solver)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub e0: f64,
    pub k: usize,
    pub p_inf: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub residual_trace: Vec<f64>,
}

/// Calibrated infection parameters indexed by `(e0, k)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EfficacyTable {
    pub cells: Vec<TableCell>,
}

impl EfficacyTable {
    pub fn lookup(&self, e0: f64, k: usize) -> Result<f64> {
        self.cells
            .iter()
            .find(|c| c.k == k && (c.e0 - e0).abs() < 1e-9)
            .map(|c| c.p_inf)
            .ok_or(Error::MissingCalibration { e0, k })
    }

    pub fn contains(&self, e0: f64, k: usize) -> bool {
        self.lookup(e0, k).is_ok()
    }

    pub fn all_converged(&self) -> bool {
        self.cells.iter().all(|c| c.converged)
    }

    pub fn non_converged(&self) -> impl Iterator<Item = &TableCell> {
        self.cells.iter().filter(|c| !c.converged)
    }

    /// Adds `other`'s cells, replacing any with the same key.
    pub fn merge(&mut self, other: EfficacyTable) {
        for cell in other.cells {
            self.cells
                .retain(|c| !(c.k == cell.k && (c.e0 - cell.e0).abs() < 1e-9));
            self.cells.push(cell);
        }
        self.cells
            .sort_by(|a, b| a.e0.total_cmp(&b.e0).then(a.k.cmp(&b.k)));
    }

    /// `e0,k,p_inf,converged,iterations`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["e0", "k", "p_inf", "converged", "iterations"])?;
        for c in &self.cells {
            w.write_record([
                c.e0.to_string(),
                c.k.to_string(),
                c.p_inf.to_string(),
                c.converged.to_string(),
                c.iterations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let cells = r
            .deserialize::<TableCell>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { cells })
    }

    /// `e0,k,iter,residual`
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "e0,k,iter,residual")?;
        for c in &self.cells {
            for (i, r) in c.residual_trace.iter().enumerate() {
                writeln!(out, "{},{},{},{}", c.e0, c.k, i + 1, r)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Calibrates every `(e0, k)` pair.
///
/// All `e0` values for one `k` share a bench (network, arms and seeds derived
/// from `derive(seed, k)`), so the solved values are comparable across `e0`.
/// Non-converged cells are kept and flagged.
pub fn build_efficacy_table(
    e_values: &[f64],
    k_values: &[usize],
    trial: &TrialConfig,
    params: &EpidemicParams,
    solver: &SolverConfig,
    seed: u64,
) -> Result<EfficacyTable> {
    if e_values.is_empty() || k_values.is_empty() {
        return Err(Error::InvalidParameter {
            name: "efficacy table",
            reason: "need at least one e0 and one k".into(),
        });
    }
    let mut cells = Vec::with_capacity(e_values.len() * k_values.len());
    for &k in k_values {
        let needs_bench = e_values.iter().any(|&e| e != 0.0);
        let bench = if needs_bench {
            let t = TrialConfig { k, ..trial.clone() };
            Some(TrialBench::new(&t, params, rng::derive(seed, k as u64))?)
        } else {
            None
        };
        for &e0 in e_values {
            let res = match &bench {
                Some(b) => calibrate_on(b, e0, solver)?,
                None => CalibrationResult {
                    target_e0: e0,
                    solved_p_inf: params.p_inf_base,
                    iterations: 0,
                    residual_trace: Vec::new(),
                    fd_step: solver.dp,
                    converged: true,
                    bisected: false,
                },
            };
            cells.push(TableCell {
                e0,
                k,
                p_inf: res.solved_p_inf,
                converged: res.converged,
                iterations: res.iterations,
                residual_trace: res.residual_trace,
            });
        }
    }
    cells.sort_by(|a, b| a.e0.total_cmp(&b.e0).then(a.k.cmp(&b.k)));
    Ok(EfficacyTable { cells })
}
