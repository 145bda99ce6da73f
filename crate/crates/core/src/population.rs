//! Population state, event rates and exact event sampling.
//!
//! Individuals are indexed `0..n`. Besides the fitness array the population
//! keeps one member list per fitness class over the contiguous window
//! `[xmin, xmax]`, so every rate and every draw is `O(K)` in the number of
//! classes `K = width + 1`.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::params::Params;

#[derive(Debug, Clone)]
pub struct Population {
    fitness: Vec<i64>,
    /// Position of each individual inside its class member list.
    slot: Vec<u32>,
    /// `classes[k]` holds the members with fitness `base + k`. The first and
    /// last lists are never empty.
    classes: VecDeque<Vec<u32>>,
    base: i64,
    sum: i64,
    time: f64,
}

impl Population {
    pub fn new(fitness: Vec<i64>) -> Result<Self> {
        if fitness.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "population needs at least 2 individuals (got {})",
                fitness.len()
            )));
        }
        if fitness.len() > u32::MAX as usize {
            return Err(Error::InvalidParams("population too large".into()));
        }
        let lo = *fitness.iter().min().unwrap();
        let hi = *fitness.iter().max().unwrap();
        let mut classes: VecDeque<Vec<u32>> = (lo..=hi).map(|_| Vec::new()).collect();
        let mut slot = vec![0u32; fitness.len()];
        for (i, &f) in fitness.iter().enumerate() {
            let c = &mut classes[(f - lo) as usize];
            slot[i] = c.len() as u32;
            c.push(i as u32);
        }
        let sum = fitness.iter().sum();
        Ok(Self {
            fitness,
            slot,
            classes,
            base: lo,
            sum,
            time: 0.0,
        })
    }

    pub fn uniform(n: usize, value: i64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.fitness.len()
    }

    #[inline]
    pub fn fitness(&self, i: usize) -> i64 {
        self.fitness[i]
    }

    pub fn fitnesses(&self) -> &[i64] {
        &self.fitness
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    #[inline]
    pub fn xmin(&self) -> i64 {
        self.base
    }

    #[inline]
    pub fn xmax(&self) -> i64 {
        self.base + self.classes.len() as i64 - 1
    }

    #[inline]
    pub fn width(&self) -> i64 {
        self.classes.len() as i64 - 1
    }

    #[inline]
    pub fn sum(&self) -> i64 {
        self.sum
    }

    pub fn xbar(&self) -> f64 {
        self.sum as f64 / self.n() as f64
    }

    /// Population variance of the fitnesses, the centred second moment.
    pub fn variance(&self) -> f64 {
        let n = self.n() as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for (k, c) in self.classes.iter().enumerate() {
            let m = c.len() as f64;
            s1 += m * k as f64;
            s2 += m * (k * k) as f64;
        }
        let mean = s1 / n;
        (s2 / n - mean * mean).max(0.0)
    }

    /// Number of individuals with fitness `v`.
    pub fn class_count(&self, v: i64) -> usize {
        if v < self.base || v > self.xmax() {
            0
        } else {
            self.classes[(v - self.base) as usize].len()
        }
    }

    pub fn members(&self, v: i64) -> &[u32] {
        if v < self.base || v > self.xmax() {
            &[]
        } else {
            &self.classes[(v - self.base) as usize]
        }
    }

    /// Occupied classes as an ordered map fitness -> count.
    pub fn histogram(&self) -> BTreeMap<i64, usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_empty())
            .map(|(k, c)| (self.base + k as i64, c.len()))
            .collect()
    }

    /// Sum over ordered pairs of `(X^i - X^j)^+`, i.e. `sum_{k>l} n_k n_l (k-l)`,
    /// in one prefix pass.
    pub fn selection_weight(&self) -> u64 {
        let mut below = 0u64;
        let mut below_idx = 0u64;
        let mut total = 0u64;
        for (k, c) in self.classes.iter().enumerate() {
            let n = c.len() as u64;
            if n > 0 {
                total += n * (k as u64 * below - below_idx);
                below += n;
                below_idx += n * k as u64;
            }
        }
        total
    }

    /// `N * U^i` for an individual of fitness `v`, where
    /// `U^i = (1/N) sum_j (X^i - X^j)^+`.
    pub fn gap_mass(&self, v: i64) -> u64 {
        let top = (v - self.base).min(self.width());
        if top <= 0 {
            return 0;
        }
        (0..top as usize)
            .map(|l| self.classes[l].len() as u64 * (v - self.base - l as i64) as u64)
            .sum()
    }

    /// Internal consistency of the fitness array and the class lists.
    pub fn check_consistency(&self) -> bool {
        if self.classes.front().is_none_or(|c| c.is_empty())
            || self.classes.back().is_none_or(|c| c.is_empty())
        {
            return false;
        }
        let mut count = 0usize;
        for (k, c) in self.classes.iter().enumerate() {
            for (s, &i) in c.iter().enumerate() {
                let i = i as usize;
                if self.fitness[i] != self.base + k as i64 || self.slot[i] as usize != s {
                    return false;
                }
            }
            count += c.len();
        }
        count == self.n() && self.sum == self.fitness.iter().sum::<i64>()
    }

    fn set_fitness(&mut self, i: usize, v: i64) {
        let old = self.fitness[i];
        if old == v {
            return;
        }
        // detach from the old class
        let k = (old - self.base) as usize;
        let s = self.slot[i] as usize;
        let class = &mut self.classes[k];
        class.swap_remove(s);
        if s < class.len() {
            let moved = class[s] as usize;
            self.slot[moved] = s as u32;
        }
        // attach to the new class, growing the window if needed
        while v < self.base {
            self.classes.push_front(Vec::new());
            self.base -= 1;
        }
        while v > self.xmax() {
            self.classes.push_back(Vec::new());
        }
        let class = &mut self.classes[(v - self.base) as usize];
        self.slot[i] = class.len() as u32;
        class.push(i as u32);
        self.fitness[i] = v;
        self.sum += v - old;
        while self.classes.front().is_some_and(|c| c.is_empty()) {
            self.classes.pop_front();
            self.base += 1;
        }
        while self.classes.back().is_some_and(|c| c.is_empty()) {
            self.classes.pop_back();
        }
    }

    /// Uniformly random member of the class at window offset `k`.
    fn pick_in_class<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        let c = &self.classes[k];
        c[rng.random_range(0..c.len())] as usize
    }
}

/// What happens at an event. `from` is the individual that reproduces and
/// `to` the one that is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    MutationUp(usize),
    MutationDown(usize),
    Resample { from: usize, to: usize },
    Select { from: usize, to: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

impl EventKind {
    /// The individual whose fitness may change.
    pub fn target(&self) -> usize {
        match *self {
            EventKind::MutationUp(i) | EventKind::MutationDown(i) => i,
            EventKind::Resample { to, .. } | EventKind::Select { to, .. } => to,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    pub mutation: f64,
    pub resampling: f64,
    pub selection: f64,
    pub total: f64,
}

/// Total event rates of the three mechanisms.
pub fn total_rates(pop: &Population, params: &Params) -> RateBreakdown {
    rates_with_weight(pop, params, pop.selection_weight())
}

fn rates_with_weight(pop: &Population, params: &Params, weight: u64) -> RateBreakdown {
    let n = pop.n() as f64;
    let mutation = n * params.mu;
    let resampling = n - 1.0;
    let selection = params.gamma / n * weight as f64;
    RateBreakdown {
        mutation,
        resampling,
        selection,
        total: mutation + resampling + selection,
    }
}

pub(crate) fn sample_mutation<R: Rng + ?Sized>(
    pop: &Population,
    params: &Params,
    rng: &mut R,
) -> EventKind {
    let i = rng.random_range(0..pop.n());
    if rng.random::<f64>() < params.q {
        EventKind::MutationUp(i)
    } else {
        EventKind::MutationDown(i)
    }
}

/// Uniform ordered pair `(from, to)` with `from != to`.
pub(crate) fn sample_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let from = rng.random_range(0..n);
    let mut to = rng.random_range(0..n - 1);
    if to >= from {
        to += 1;
    }
    (from, to)
}

/// Draws an ordered pair `(from, to)` with probability proportional to
/// `(X^from - X^to)^+`. The replacing class is drawn first with weight
/// `n_k sum_{l<k} n_l (k-l)`, then the replaced class with weight
/// `n_l (k-l)`. `weight` must equal [`Population::selection_weight`] and be
/// positive.
pub(crate) fn sample_selection_pair<R: Rng + ?Sized>(
    pop: &Population,
    weight: u64,
    rng: &mut R,
) -> (usize, usize) {
    debug_assert!(weight > 0);
    let mut r = rng.random_range(0..weight);
    let mut below = 0u64;
    let mut below_idx = 0u64;
    let mut chosen = None;
    for (k, c) in pop.classes.iter().enumerate() {
        let n = c.len() as u64;
        if n == 0 {
            continue;
        }
        let per_member = k as u64 * below - below_idx;
        let a = n * per_member;
        if r < a {
            chosen = Some((k, per_member));
            break;
        }
        r -= a;
        below += n;
        below_idx += n * k as u64;
    }
    let (k, per_member) = chosen.expect("selection weight out of sync with classes");
    let mut r = rng.random_range(0..per_member);
    let mut lower = 0;
    for l in 0..k {
        let b = pop.classes[l].len() as u64 * (k - l) as u64;
        if r < b {
            lower = l;
            break;
        }
        r -= b;
    }
    (pop.pick_in_class(k, rng), pop.pick_in_class(lower, rng))
}

/// Next event by competing exponentials: an exponential waiting time with
/// the total rate, then a kind chosen proportionally to the breakdown.
pub fn sample_event<R: Rng + ?Sized>(pop: &Population, params: &Params, rng: &mut R) -> Event {
    let weight = pop.selection_weight();
    let rates = rates_with_weight(pop, params, weight);
    let wait: f64 = rng.sample::<f64, _>(Exp1) / rates.total;
    let u = rng.random::<f64>() * rates.total;
    let kind = if u < rates.mutation {
        sample_mutation(pop, params, rng)
    } else if u < rates.mutation + rates.resampling || weight == 0 {
        let (from, to) = sample_pair(pop.n(), rng);
        EventKind::Resample { from, to }
    } else {
        let (from, to) = sample_selection_pair(pop, weight, rng);
        EventKind::Select { from, to }
    };
    Event {
        time: pop.time + wait,
        kind,
    }
}

/// Applies an event in place and advances the clock to the event time.
pub fn apply_event(pop: &mut Population, event: &Event) -> Result<()> {
    let n = pop.n();
    let check = |i: usize| {
        if i < n {
            Ok(())
        } else {
            Err(Error::InvalidEvent(format!(
                "individual {i} out of range 0..{n}"
            )))
        }
    };
    match event.kind {
        EventKind::MutationUp(i) => {
            check(i)?;
            pop.set_fitness(i, pop.fitness[i] + 1);
        }
        EventKind::MutationDown(i) => {
            check(i)?;
            pop.set_fitness(i, pop.fitness[i] - 1);
        }
        EventKind::Resample { from, to } => {
            check(from)?;
            check(to)?;
            if from == to {
                return Err(Error::InvalidEvent(
                    "resampling needs two individuals".into(),
                ));
            }
            pop.set_fitness(to, pop.fitness[from]);
        }
        EventKind::Select { from, to } => {
            check(from)?;
            check(to)?;
            if pop.fitness[from] <= pop.fitness[to] {
                return Err(Error::InvalidEvent(format!(
                    "selection {from} -> {to} with nonpositive gap {}",
                    pop.fitness[from] - pop.fitness[to]
                )));
            }
            pop.set_fitness(to, pop.fitness[from]);
        }
    }
    pop.time = event.time;
    Ok(())
}
