//! Daily vaccination roll-out.
//!
//! Each day a fixed budget of `w` doses is split into second doses
//! (`round(a * w)`) and first doses (the rest). First doses are split between
//! age groups by `c`. Shortfalls in one pool flow to the others; doses with no
//! eligible recipient are forfeited.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgeGroup, EpidemicParams, Population, State};
use crate::error::{check_probability, Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Daily dose budget `w`.
    pub doses_per_day: usize,
    /// Share `a` of the budget reserved for second doses.
    pub second_dose_ratio: f64,
    /// Share `c` of first doses reserved for group A. `None` draws first-dose
    /// recipients uniformly from all susceptibles regardless of age.
    pub age_priority_ratio: Option<f64>,
    pub efficacy_dose1: f64,
    pub efficacy_dose2: f64,
    /// Infection parameter after the first dose takes effect.
    pub p_inf1: f64,
    /// Infection parameter after the second dose takes effect.
    pub p_inf2: f64,
    /// Minimum days between first and second dose.
    pub dose2_admin_gap: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            doses_per_day: 1000,
            second_dose_ratio: 0.0,
            age_priority_ratio: None,
            efficacy_dose1: 0.5,
            efficacy_dose2: 0.9,
            p_inf1: 0.02,
            p_inf2: 0.02,
            dose2_admin_gap: 21,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self, params: &EpidemicParams) -> Result<()> {
        check_probability("second_dose_ratio", self.second_dose_ratio)?;
        if let Some(c) = self.age_priority_ratio {
            check_probability("age_priority_ratio", c)?;
        }
        check_probability("p_inf1", self.p_inf1)?;
        check_probability("p_inf2", self.p_inf2)?;
        if !(self.p_inf2 <= self.p_inf1 && self.p_inf1 <= params.p_inf_base) {
            return Err(Error::InvalidParameter {
                name: "p_inf1/p_inf2",
                reason: format!(
                    "need p_inf2 <= p_inf1 <= p_inf_base, got {} / {} / {}",
                    self.p_inf2, self.p_inf1, params.p_inf_base
                ),
            });
        }
        Ok(())
    }
}

/// `round(x)` with halves going up, tolerant of representation error.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Onset {
    agent: u32,
    p_inf: f64,
}

/// Vaccination record and roll-out state for one realization.
#[derive(Debug, Clone)]
pub struct VaccinationLedger {
    cfg: PolicyConfig,
    dose1_delay: u32,
    dose2_effect_day: u32,
    dose1_day: Vec<Option<u32>>,
    dose2_day: Vec<Option<u32>>,
    /// Never-vaccinated candidates per age group; entries that left S are
    /// dropped lazily when drawn.
    first_pool: [Vec<u32>; 2],
    /// First-dose recipients in dose order, waiting out the admin gap.
    awaiting_second: VecDeque<u32>,
    second_pool: Vec<u32>,
    pending: BTreeMap<u32, Vec<Onset>>,
    rng: ChaCha8Rng,
}

impl VaccinationLedger {
    pub fn new(pop: &Population, cfg: PolicyConfig, params: &EpidemicParams, seed: u64) -> Self {
        let n = pop.n();
        let mut first_pool = [Vec::new(), Vec::new()];
        for (agent, &age) in pop.ages().iter().enumerate() {
            first_pool[group_slot(age)].push(agent as u32);
        }
        Self {
            cfg,
            dose1_delay: params.dose1_delay_days,
            dose2_effect_day: params.dose2_effect_day,
            dose1_day: vec![None; n],
            dose2_day: vec![None; n],
            first_pool,
            awaiting_second: VecDeque::new(),
            second_pool: Vec::new(),
            pending: BTreeMap::new(),
            rng: rng::sequential(seed, Stream::Policy),
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn dose1_day(&self, agent: usize) -> Option<u32> {
        self.dose1_day[agent]
    }

    pub fn dose2_day(&self, agent: usize) -> Option<u32> {
        self.dose2_day[agent]
    }

    pub fn doses_received(&self, agent: usize) -> u8 {
        u8::from(self.dose1_day[agent].is_some()) + u8::from(self.dose2_day[agent].is_some())
    }

    pub fn pending_onsets(&self) -> usize {
        self.pending.values().map(Vec::len).sum()
    }

    /// Gives today's doses; returns `(first_doses, second_doses)`.
    pub fn allocate_daily_doses(&mut self, pop: &Population, day: u32) -> (usize, usize) {
        let w = self.cfg.doses_per_day;
        if w == 0 {
            return (0, 0);
        }
        let gap = self.cfg.dose2_admin_gap;
        while let Some(&agent) = self.awaiting_second.front() {
            let d1 = self.dose1_day[agent as usize].expect("queued agents have a first dose");
            if d1 + gap > day {
                break;
            }
            self.awaiting_second.pop_front();
            self.second_pool.push(agent);
        }

        let second_target = round_half_up(self.cfg.second_dose_ratio * w as f64).min(w);
        let mut second = self.give_second_doses(pop, day, second_target);

        let first_budget = w - second;
        let first = match self.cfg.age_priority_ratio {
            Some(c) => {
                let old_target = round_half_up(c * first_budget as f64);
                let mut old = self.give_first_doses(pop, day, Some(AgeGroup::A), old_target);
                let young = self.give_first_doses(pop, day, Some(AgeGroup::B), first_budget - old);
                if old + young < first_budget {
                    old += self.give_first_doses(
                        pop,
                        day,
                        Some(AgeGroup::A),
                        first_budget - old - young,
                    );
                }
                old + young
            }
            None => self.give_first_doses(pop, day, None, first_budget),
        };
        if first < first_budget {
            second += self.give_second_doses(pop, day, first_budget - first);
        }
        (first, second)
    }

    fn give_first_doses(
        &mut self,
        pop: &Population,
        day: u32,
        age: Option<AgeGroup>,
        want: usize,
    ) -> usize {
        let mut given = 0;
        while given < want {
            let slot = match age {
                Some(age) => group_slot(age),
                // Pick a pool in proportion to its size: uniform over the union.
                None => {
                    let (a, b) = (self.first_pool[0].len(), self.first_pool[1].len());
                    if a + b == 0 {
                        break;
                    }
                    usize::from(self.rng.random_range(0..a + b) >= a)
                }
            };
            let Some(agent) = draw(&mut self.first_pool[slot], &mut self.rng) else {
                break;
            };
            if pop.state(agent as usize) != State::S {
                continue;
            }
            self.dose1_day[agent as usize] = Some(day);
            self.schedule(day + self.dose1_delay, agent, self.cfg.p_inf1);
            self.awaiting_second.push_back(agent);
            given += 1;
        }
        given
    }

    fn give_second_doses(&mut self, pop: &Population, day: u32, want: usize) -> usize {
        let mut given = 0;
        while given < want {
            let Some(agent) = draw(&mut self.second_pool, &mut self.rng) else {
                break;
            };
            let a = agent as usize;
            if pop.state(a) != State::S {
                continue;
            }
            self.dose2_day[a] = Some(day);
            let d1 = self.dose1_day[a].expect("second-dose pool holds dosed agents");
            self.schedule((d1 + self.dose2_effect_day).max(day), agent, self.cfg.p_inf2);
            given += 1;
        }
        given
    }

    fn schedule(&mut self, day: u32, agent: u32, p_inf: f64) {
        self.pending.entry(day).or_default().push(Onset { agent, p_inf });
    }
}

fn group_slot(age: AgeGroup) -> usize {
    match age {
        AgeGroup::A => 0,
        AgeGroup::B => 1,
    }
}

/// Removes and returns a uniformly random element.
fn draw(pool: &mut Vec<u32>, rng: &mut ChaCha8Rng) -> Option<u32> {
    if pool.is_empty() {
        return None;
    }
    let i = rng.random_range(0..pool.len());
    Some(pool.swap_remove(i))
}

/// Free-function form of [`VaccinationLedger::allocate_daily_doses`].
pub fn allocate_daily_doses(
    pop: &Population,
    ledger: &mut VaccinationLedger,
    day: u32,
) -> (usize, usize) {
    ledger.allocate_daily_doses(pop, day)
}

/// Applies every protection onset due on `day`; returns how many agents were
/// updated. Dead agents are skipped. The agent's infection parameter never
/// increases, and any onset marks the agent as protected against death.
pub fn apply_efficacy_onsets(pop: &mut Population, ledger: &mut VaccinationLedger, day: u32) -> usize {
    let Some(onsets) = ledger.pending.remove(&day) else {
        return 0;
    };
    let mut updated = 0;
    for Onset { agent, p_inf } in onsets {
        let a = agent as usize;
        if pop.state(a) == State::M {
            continue;
        }
        if p_inf < pop.p_inf(a) {
            pop.set_p_inf(a, p_inf);
        }
        pop.set_protected(a, true);
        updated += 1;
    }
    updated
}
