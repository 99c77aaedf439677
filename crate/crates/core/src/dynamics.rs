//! Daily SEIRM agent dynamics on a fixed contact network.

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::netgen::Network;
use crate::policy::{PolicyConfig, VaccinationLedger};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    S,
    E,
    I,
    R,
    M,
}

/// Group A is over 65, group B is everyone else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    A,
    B,
}

/// Shape/scale parametrisation of a gamma waiting time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSpec {
    pub shape: f64,
    pub scale: f64,
}

impl GammaSpec {
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn sd(&self) -> f64 {
        self.shape.sqrt() * self.scale
    }

    fn distribution(&self) -> Gamma<f64> {
        Gamma::new(self.shape, self.scale).expect("validated gamma parameters")
    }

    /// Draws one waiting time.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.distribution().sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpidemicParams {
    /// Per-contact infection parameter of an unvaccinated susceptible.
    pub p_inf_base: f64,
    pub exposed_gamma: GammaSpec,
    pub infected_gamma: GammaSpec,
    pub mortality_young: f64,
    pub mortality_old_unvacc: f64,
    pub mortality_old_vacc: f64,
    /// Days from first dose until its protection starts.
    pub dose1_delay_days: u32,
    /// Days from first dose until second-dose protection starts.
    pub dose2_effect_day: u32,
    /// Share of the population in age group A.
    pub old_fraction: f64,
    /// Agents infected at day 0.
    pub initial_infected: usize,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        Self {
            p_inf_base: 0.02,
            exposed_gamma: GammaSpec {
                shape: 9.0,
                scale: 1.0 / 3.0,
            },
            infected_gamma: GammaSpec {
                shape: 100.0 / 3.0,
                scale: 3.0 / 10.0,
            },
            mortality_young: 0.005,
            mortality_old_unvacc: 0.13,
            mortality_old_vacc: 0.008,
            dose1_delay_days: 10,
            dose2_effect_day: 30,
            old_fraction: 0.2,
            initial_infected: 10,
        }
    }
}

impl EpidemicParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("p_inf_base", self.p_inf_base)?;
        check_probability("mortality_young", self.mortality_young)?;
        check_probability("mortality_old_unvacc", self.mortality_old_unvacc)?;
        check_probability("mortality_old_vacc", self.mortality_old_vacc)?;
        check_probability("old_fraction", self.old_fraction)?;
        for (name, g) in [
            ("exposed_gamma", self.exposed_gamma),
            ("infected_gamma", self.infected_gamma),
        ] {
            if !(g.shape > 0.0 && g.scale > 0.0 && g.shape.is_finite() && g.scale.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("shape and scale must be positive, got {g:?}"),
                });
            }
        }
        Ok(())
    }

    /// Death probability on leaving I.
    pub fn mortality_probability(&self, age: AgeGroup, vaccinated: bool) -> f64 {
        match (age, vaccinated) {
            (AgeGroup::B, _) => self.mortality_young,
            (AgeGroup::A, false) => self.mortality_old_unvacc,
            (AgeGroup::A, true) => self.mortality_old_vacc,
        }
    }
}

/// Death probability on leaving I under the default parameters.
pub fn mortality_probability(age: AgeGroup, vaccinated: bool) -> f64 {
    EpidemicParams::default().mortality_probability(age, vaccinated)
}

/// Probability that a susceptible with parameter `p_inf` and
/// `infected_neighbors` infected contacts becomes exposed today.
#[inline]
pub fn infection_probability(p_inf: f64, infected_neighbors: u32) -> f64 {
    if infected_neighbors == 0 {
        return 0.0;
    }
    1.0 - (1.0 - p_inf).powi(infected_neighbors as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DailyCounts {
    pub day: u32,
    pub s: usize,
    pub e: usize,
    pub i: usize,
    pub r: usize,
    pub m: usize,
}

impl DailyCounts {
    pub fn total(&self) -> usize {
        self.s + self.e + self.i + self.r + self.m
    }

    pub fn active(&self) -> usize {
        self.e + self.i
    }

    fn count(&mut self, state: State, delta: isize) {
        let slot = match state {
            State::S => &mut self.s,
            State::E => &mut self.e,
            State::I => &mut self.i,
            State::R => &mut self.r,
            State::M => &mut self.m,
        };
        *slot = slot.wrapping_add_signed(delta);
    }
}

/// Per-agent epidemic state for one realization.
#[derive(Debug, Clone)]
pub struct Population {
    state: Vec<State>,
    age: Vec<AgeGroup>,
    tau: Vec<f64>,
    p_inf: Vec<f64>,
    protected: Vec<bool>,
    ever_exposed_day: Vec<u32>,
    exposed: Vec<u32>,
    infected: Vec<u32>,
    counts: DailyCounts,
    seed: u64,
    // scratch for the exposure pass
    hits: Vec<u32>,
    touched: Vec<u32>,
}

const NEVER: u32 = u32::MAX;

impl Population {
    /// All agents susceptible in group B with the given infection parameter.
    pub fn susceptible(n: usize, p_inf: f64, seed: u64) -> Self {
        Self {
            state: vec![State::S; n],
            age: vec![AgeGroup::B; n],
            tau: vec![0.0; n],
            p_inf: vec![p_inf; n],
            protected: vec![false; n],
            ever_exposed_day: vec![NEVER; n],
            exposed: Vec::new(),
            infected: Vec::new(),
            counts: DailyCounts {
                s: n,
                ..DailyCounts::default()
            },
            seed,
            hits: vec![0; n],
            touched: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.state.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self, agent: usize) -> State {
        self.state[agent]
    }

    pub fn states(&self) -> &[State] {
        &self.state
    }

    pub fn age(&self, agent: usize) -> AgeGroup {
        self.age[agent]
    }

    pub fn ages(&self) -> &[AgeGroup] {
        &self.age
    }

    pub fn set_age(&mut self, agent: usize, age: AgeGroup) {
        self.age[agent] = age;
    }

    pub fn tau(&self, agent: usize) -> f64 {
        self.tau[agent]
    }

    pub fn p_inf(&self, agent: usize) -> f64 {
        self.p_inf[agent]
    }

    pub fn set_p_inf(&mut self, agent: usize, p_inf: f64) {
        self.p_inf[agent] = p_inf;
    }

    /// Whether vaccine protection against death is active.
    pub fn is_protected(&self, agent: usize) -> bool {
        self.protected[agent]
    }

    pub fn set_protected(&mut self, agent: usize, protected: bool) {
        self.protected[agent] = protected;
    }

    /// Day the agent entered E, if it ever did (day 0 for seeded infections).
    pub fn exposure_day(&self, agent: usize) -> Option<u32> {
        match self.ever_exposed_day[agent] {
            NEVER => None,
            d => Some(d),
        }
    }

    pub fn counts(&self) -> DailyCounts {
        self.counts
    }

    fn set_state(&mut self, agent: usize, to: State) {
        let from = self.state[agent];
        self.counts.count(from, -1);
        self.counts.count(to, 1);
        self.state[agent] = to;
    }

    /// Puts an agent in `state`, keeping counts and the active lists
    /// consistent. The agent's waiting time is left as is.
    pub fn force_state(&mut self, agent: usize, state: State) {
        let id = agent as u32;
        self.exposed.retain(|&a| a != id);
        self.infected.retain(|&a| a != id);
        match state {
            State::E => self.exposed.push(id),
            State::I => self.infected.push(id),
            _ => {}
        }
        self.set_state(agent, state);
    }

    /// Moves a susceptible agent straight to I with a fresh infectious period.
    pub fn infect(&mut self, agent: usize, params: &EpidemicParams, day: u32) {
        debug_assert_eq!(self.state[agent], State::S);
        self.set_state(agent, State::I);
        self.ever_exposed_day[agent] = day;
        let mut r = rng::keyed(self.seed, Stream::InfectedWait, agent as u32, 0);
        self.tau[agent] = params.infected_gamma.distribution().sample(&mut r);
        self.infected.push(agent as u32);
    }
}

/// Builds a population with `round(n * old_fraction)` agents in group A and
/// `initial_infected` agents in I, both chosen uniformly at random.
pub fn init_population(
    n: usize,
    old_fraction: f64,
    initial_infected: usize,
    params: &EpidemicParams,
    seed: u64,
) -> Result<Population> {
    check_probability("old_fraction", old_fraction)?;
    if initial_infected > n {
        return Err(Error::TooManyInfected {
            requested: initial_infected,
            n,
        });
    }
    let mut pop = Population::susceptible(n, params.p_inf_base, seed);
    let mut rng = rng::sequential(seed, Stream::Population);
    let old = (n as f64 * old_fraction).round() as usize;
    for agent in index::sample(&mut rng, n, old) {
        pop.age[agent] = AgeGroup::A;
    }
    for agent in index::sample(&mut rng, n, initial_infected) {
        pop.infect(agent, params, 0);
    }
    Ok(pop)
}

/// Advances the population by one synchronous day.
///
/// Exposure uses the infected set as it stood at the start of the day; agents
/// that change compartment today begin counting down their new waiting time
/// tomorrow. Every random draw is keyed by `(population seed, agent, day)`.
pub fn step_day(
    pop: &mut Population,
    net: &Network,
    params: &EpidemicParams,
    day: u32,
    ledger: Option<&mut VaccinationLedger>,
) -> DailyCounts {
    assert_eq!(pop.n(), net.n(), "population and network sizes differ");
    let seed = pop.seed;
    let exposed_dist = params.exposed_gamma.distribution();
    let infected_dist = params.infected_gamma.distribution();

    // (1) S -> E against the start-of-day infected set.
    for &src in &pop.infected {
        for &nb in net.neighbors(src as usize) {
            let nb_idx = nb as usize;
            if pop.state[nb_idx] == State::S {
                if pop.hits[nb_idx] == 0 {
                    pop.touched.push(nb);
                }
                pop.hits[nb_idx] += 1;
            }
        }
    }
    let start_exposed = pop.exposed.len();
    let mut touched = std::mem::take(&mut pop.touched);
    for &agent in &touched {
        let a = agent as usize;
        let hits = std::mem::replace(&mut pop.hits[a], 0);
        let p = infection_probability(pop.p_inf[a], hits);
        if rng::keyed_uniform(seed, Stream::Exposure, agent, day) < p {
            pop.set_state(a, State::E);
            pop.ever_exposed_day[a] = day;
            let mut r = rng::keyed(seed, Stream::ExposedWait, agent, 0);
            pop.tau[a] = exposed_dist.sample(&mut r);
            pop.exposed.push(agent);
        }
    }
    touched.clear();
    pop.touched = touched;

    // (3) I -> R/M for agents infected at the start of the day.
    let mut still_infected = Vec::with_capacity(pop.infected.len());
    for agent in std::mem::take(&mut pop.infected) {
        let a = agent as usize;
        pop.tau[a] -= 1.0;
        if pop.tau[a] < 0.0 {
            let pm = params.mortality_probability(pop.age[a], pop.protected[a]);
            let u = rng::keyed_uniform(seed, Stream::Outcome, agent, 0);
            pop.set_state(a, if u < pm { State::M } else { State::R });
        } else {
            still_infected.push(agent);
        }
    }

    // (2) E -> I for agents exposed before today.
    let mut still_exposed = Vec::with_capacity(pop.exposed.len());
    let todays_exposed = pop.exposed.split_off(start_exposed);
    for agent in std::mem::take(&mut pop.exposed) {
        let a = agent as usize;
        pop.tau[a] -= 1.0;
        if pop.tau[a] < 0.0 {
            pop.set_state(a, State::I);
            let mut r = rng::keyed(seed, Stream::InfectedWait, agent, 0);
            pop.tau[a] = infected_dist.sample(&mut r);
            still_infected.push(agent);
        } else {
            still_exposed.push(agent);
        }
    }
    still_exposed.extend(todays_exposed);
    pop.exposed = still_exposed;
    pop.infected = still_infected;

    // (4) vaccine protection that starts today.
    if let Some(ledger) = ledger {
        crate::policy::apply_efficacy_onsets(pop, ledger, day);
    }

    DailyCounts { day, ..pop.counts }
}

/// Runs one realization until no agent is in E or I, or `max_days` elapse.
///
/// The returned series starts with the day-0 state. Doses, when a policy is
/// given, are allocated at the start of each day before transmission.
pub fn run_realization(
    net: &Network,
    params: &EpidemicParams,
    policy: Option<&PolicyConfig>,
    max_days: u32,
    seed: u64,
) -> Result<Vec<DailyCounts>> {
    params.validate()?;
    if max_days == 0 {
        return Err(Error::InvalidParameter {
            name: "max_days",
            reason: "must be at least 1".into(),
        });
    }
    let mut pop = init_population(
        net.n(),
        params.old_fraction,
        params.initial_infected,
        params,
        seed,
    )?;
    let mut ledger = match policy {
        Some(cfg) => {
            cfg.validate(params)?;
            Some(VaccinationLedger::new(&pop, cfg.clone(), params, seed))
        }
        None => None,
    };
    Ok(simulate(&mut pop, net, params, ledger.as_mut(), max_days))
}

/// Day loop on a prepared population.
pub fn simulate(
    pop: &mut Population,
    net: &Network,
    params: &EpidemicParams,
    mut ledger: Option<&mut VaccinationLedger>,
    max_days: u32,
) -> Vec<DailyCounts> {
    let mut series = vec![pop.counts()];
    let mut day = 0;
    while day < max_days && pop.counts().active() > 0 {
        day += 1;
        if let Some(ledger) = ledger.as_deref_mut() {
            ledger.allocate_daily_doses(pop, day);
        }
        series.push(step_day(pop, net, params, day, ledger.as_deref_mut()));
    }
    series
}

/// Writes a series as `day,S,E,I,R,M`.
pub fn write_timeseries_csv(series: &[DailyCounts], path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "day,S,E,I,R,M")?;
    for c in series {
        writeln!(out, "{},{},{},{},{},{}", c.day, c.s, c.e, c.i, c.r, c.m)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::build_small_world;

    #[test]
    fn default_gamma_moments() {
        let p = EpidemicParams::default();
        assert!((p.exposed_gamma.mean() - 3.0).abs() < 1e-9);
        assert!((p.exposed_gamma.sd() - 1.0).abs() < 1e-9);
        assert!((p.infected_gamma.mean() - 10.0).abs() < 1e-9);
        assert!((p.infected_gamma.sd() - 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn infection_probability_examples() {
        assert_eq!(infection_probability(0.02, 0), 0.0);
        assert_eq!(infection_probability(1.0, 3), 1.0);
        assert!((infection_probability(0.02, 2) - 0.0396).abs() < 1e-12);
    }

    #[test]
    fn mortality_table() {
        assert_eq!(mortality_probability(AgeGroup::B, true), 0.005);
        assert_eq!(mortality_probability(AgeGroup::B, false), 0.005);
        assert_eq!(mortality_probability(AgeGroup::A, false), 0.13);
        assert_eq!(mortality_probability(AgeGroup::A, true), 0.008);
    }

    #[test]
    fn init_population_groups_and_seeds() {
        let params = EpidemicParams::default();
        let pop = init_population(100_000, 0.2, 10, &params, 5).unwrap();
        let old = pop.ages().iter().filter(|&&a| a == AgeGroup::A).count();
        assert_eq!(old, 20_000);
        assert_eq!(pop.counts().i, 10);
        assert_eq!(pop.counts().s, 99_990);

        let none_old = init_population(100, 0.0, 1, &params, 5).unwrap();
        assert!(none_old.ages().iter().all(|&a| a == AgeGroup::B));

        let all = init_population(1000, 0.2, 1000, &params, 5).unwrap();
        assert_eq!(all.counts().s, 0);
        assert_eq!(all.counts().i, 1000);

        assert!(matches!(
            init_population(10, 0.2, 11, &params, 5),
            Err(Error::TooManyInfected { .. })
        ));
    }

    #[test]
    fn all_recovered_is_fixed_point() {
        let net = build_small_world(50, 4, 0.1, 1).unwrap();
        let params = EpidemicParams::default();
        let mut pop = Population::susceptible(50, 0.02, 1);
        for a in 0..50 {
            pop.force_state(a, State::R);
        }
        for day in 1..=20 {
            let c = step_day(&mut pop, &net, &params, day, None);
            assert_eq!(c.r, 50);
        }
    }

    #[test]
    fn isolated_infected_resolves_without_transmission() {
        let net = Network::empty(5);
        let params = EpidemicParams::default();
        let mut pop = Population::susceptible(5, 0.02, 3);
        pop.infect(0, &params, 0);
        let tau = pop.tau(0);
        let series = simulate(&mut pop, &net, &params, None, 1000);
        // resolves on the first day where tau - days < 0
        assert_eq!(series.len() as f64 - 1.0, tau.floor() + 1.0);
        let last = series.last().unwrap();
        assert_eq!(last.s, 4);
        assert_eq!(last.r + last.m, 1);
    }

    #[test]
    fn certain_transmission_across_single_edge() {
        let net = Network::from_edges(2, &[(0, 1)]).unwrap();
        let params = EpidemicParams {
            p_inf_base: 1.0,
            ..EpidemicParams::default()
        };
        let mut pop = Population::susceptible(2, 1.0, 11);
        pop.infect(0, &params, 0);
        let c = step_day(&mut pop, &net, &params, 1, None);
        assert_eq!(pop.state(1), State::E);
        assert_eq!(pop.exposure_day(1), Some(1));
        assert_eq!(c.e, 1);
    }

    #[test]
    fn no_initial_infection_means_no_epidemic() {
        let net = build_small_world(200, 4, 0.05, 2).unwrap();
        let params = EpidemicParams {
            initial_infected: 0,
            ..EpidemicParams::default()
        };
        let series = run_realization(&net, &params, None, 100, 9).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].m, 0);
        assert_eq!(series[0].s, 200);
    }

    #[test]
    fn realization_is_deterministic() {
        let net = build_small_world(2000, 8, 0.01, 4).unwrap();
        let params = EpidemicParams::default();
        let a = run_realization(&net, &params, None, 1000, 77).unwrap();
        let b = run_realization(&net, &params, None, 1000, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_zero_horizon() {
        let net = Network::empty(3);
        assert!(run_realization(&net, &EpidemicParams::default(), None, 0, 1).is_err());
    }
}
