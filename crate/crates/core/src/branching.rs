//! Multi-type Yule processes, their maximal-type law and the restarted front.
//!
//! Particles only matter through their types, so a process is stored as a
//! count per type. Every particle advances its type at rate `mu` and branches
//! at a rate fixed by its [`BranchLaw`]; offspring copy the parent's type.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Params, Scales};

pub const DEFAULT_PARTICLE_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BranchLaw {
    /// Every particle branches at rate `c`.
    Constant { c: f64 },
    /// A particle of type `i` branches at rate `gamma * i + 1`.
    TypeLinear { gamma: f64 },
}

impl BranchLaw {
    #[inline]
    pub fn rate(&self, ty: i64) -> f64 {
        match *self {
            BranchLaw::Constant { c } => c,
            BranchLaw::TypeLinear { gamma } => gamma * ty as f64 + 1.0,
        }
    }

    pub fn validate(&self, start_type: i64) -> Result<()> {
        match *self {
            BranchLaw::Constant { c } if !(c >= 0.0 && c.is_finite()) => Err(Error::InvalidParams(
                format!("branch rate must be >= 0 (got {c})"),
            )),
            BranchLaw::TypeLinear { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::InvalidParams(format!("type-linear law needs gamma > 0 (got {gamma})")),
            ),
            BranchLaw::TypeLinear { .. } if start_type < 0 => Err(Error::InvalidParams(format!(
                "type-linear law needs a start type >= 0 (got {start_type})"
            ))),
            _ => Ok(()),
        }
    }
}

/// A multi-type Yule process as counts per type.
#[derive(Debug, Clone)]
pub struct Yule {
    law: BranchLaw,
    mu: f64,
    counts: BTreeMap<i64, u64>,
    population: u64,
    /// Sum of types over all particles, kept for the type-linear total rate.
    type_sum: i128,
    max_type: Option<i64>,
    time: f64,
}

impl Yule {
    pub fn new(law: BranchLaw, mu: f64) -> Self {
        Self {
            law,
            mu,
            counts: BTreeMap::new(),
            population: 0,
            type_sum: 0,
            max_type: None,
            time: 0.0,
        }
    }

    pub fn add(&mut self, ty: i64, count: u64) {
        if count == 0 {
            return;
        }
        *self.counts.entry(ty).or_insert(0) += count;
        self.population += count;
        self.type_sum += ty as i128 * count as i128;
        self.max_type = Some(self.max_type.map_or(ty, |m| m.max(ty)));
    }

    fn remove_one(&mut self, ty: i64) {
        let c = self.counts.get_mut(&ty).expect("type present");
        *c -= 1;
        if *c == 0 {
            self.counts.remove(&ty);
        }
        self.population -= 1;
        self.type_sum -= ty as i128;
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn max_type(&self) -> Option<i64> {
        self.max_type
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counts(&self) -> &BTreeMap<i64, u64> {
        &self.counts
    }

    pub fn branch_rate(&self) -> f64 {
        match self.law {
            BranchLaw::Constant { c } => c * self.population as f64,
            BranchLaw::TypeLinear { gamma } => {
                gamma * self.type_sum as f64 + self.population as f64
            }
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.branch_rate() + self.mu * self.population as f64
    }

    /// Fires one event drawn from the current rates and returns the type
    /// whose count changed upwards. Must not be called with zero total rate.
    pub fn fire<R: Rng + ?Sized>(&mut self, rng: &mut R) -> i64 {
        let branch = self.branch_rate();
        let total = branch + self.mu * self.population as f64;
        let u = rng.random::<f64>() * total;
        if u < branch {
            let mut v = rng.random::<f64>() * branch;
            let mut chosen = *self.counts.keys().next_back().expect("non-empty");
            for (&ty, &c) in &self.counts {
                let w = c as f64 * self.law.rate(ty);
                if v < w {
                    chosen = ty;
                    break;
                }
                v -= w;
            }
            self.add(chosen, 1);
            chosen
        } else {
            let mut v = rng.random_range(0..self.population);
            let mut chosen = *self.counts.keys().next_back().expect("non-empty");
            for (&ty, &c) in &self.counts {
                if v < c {
                    chosen = ty;
                    break;
                }
                v -= c;
            }
            self.remove_one(chosen);
            self.add(chosen + 1, 1);
            chosen + 1
        }
    }

    /// Runs to `t_end`, calling `on_max(t, max_type)` whenever the maximal
    /// type increases. Fails once the population exceeds `cap`.
    pub fn run_until<R: Rng + ?Sized>(
        &mut self,
        t_end: f64,
        cap: u64,
        rng: &mut R,
        mut on_max: impl FnMut(f64, i64),
    ) -> Result<()> {
        loop {
            let total = self.total_rate();
            if total <= 0.0 {
                self.time = self.time.max(t_end);
                return Ok(());
            }
            let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
            if self.time + dt > t_end {
                self.time = t_end;
                return Ok(());
            }
            self.time += dt;
            let before = self.max_type;
            self.fire(rng);
            if self.max_type != before {
                on_max(self.time, self.max_type.expect("non-empty"));
            }
            if self.population > cap {
                return Err(Error::ParticleCapExceeded {
                    cap,
                    time: self.time,
                    population: self.population,
                });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YuleOutcome {
    pub max_offset: i64,
    pub population: u64,
}

/// Exact simulation of the process started from `n0` particles of type `k`.
pub fn simulate_yule<R: Rng + ?Sized>(
    k: i64,
    n0: u64,
    law: BranchLaw,
    mu: f64,
    t_end: f64,
    cap: u64,
    rng: &mut R,
) -> Result<YuleOutcome> {
    law.validate(k)?;
    if n0 == 0 || !(mu >= 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "need n0 >= 1, mu >= 0, t_end >= 0 (got {n0}, {mu}, {t_end})"
        )));
    }
    let mut z = Yule::new(law, mu);
    z.add(k, n0);
    z.run_until(t_end, cap, rng, |_, _| {})?;
    Ok(YuleOutcome {
        max_offset: z.max_type().expect("non-empty") - k,
        population: z.population(),
    })
}

/// Law of the maximal type offset `M_t` of the process started from `n0`
/// particles of type `k`.
///
/// For a single particle of type `i`, `v_i(s)` = P(its progeny reaches type
/// `m` by time `s`) solves `v_i' = b_i v_i (1 - v_i) + mu (v_{i+1} - v_i)` with
/// `v_m = 1` and `v_i(0) = 0`. Particles are independent, so
/// `P(M_t >= m - k) = 1 - (1 - v_k(t))^{n0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTypeLaw {
    /// `tail[j] = P(M_t >= j)`, decreasing from `tail[0] = 1` down to the
    /// truncation level.
    pub tail: Vec<f64>,
}

/// Tail probabilities below this are dropped from the law.
pub const MAX_LAW_CUTOFF: f64 = 1e-15;

impl MaxTypeLaw {
    pub fn new(k: i64, n0: f64, law: BranchLaw, mu: f64, t: f64) -> Result<Self> {
        law.validate(k)?;
        if !(n0 >= 1.0) || !(mu > 0.0) || !(t >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "need n0 >= 1, mu > 0, t >= 0 (got {n0}, {mu}, {t})"
            )));
        }
        let mut tail = vec![1.0];
        if t == 0.0 {
            return Ok(Self { tail });
        }
        let mut j = 1usize;
        loop {
            let v = reach_probability(k, j, law, mu, t);
            let p = -(n0 * (-v).ln_1p()).exp_m1();
            if !(p >= MAX_LAW_CUTOFF) {
                break;
            }
            tail.push(p.min(*tail.last().unwrap()));
            j += 1;
            if j > 10_000 {
                return Err(Error::InvalidParams("max-type law does not decay".into()));
            }
        }
        Ok(Self { tail })
    }

    pub fn mean(&self) -> f64 {
        self.tail[1..].iter().sum()
    }

    /// `P(M_t >= j)`.
    pub fn p_at_least(&self, j: usize) -> f64 {
        self.tail.get(j).copied().unwrap_or(0.0)
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        self.tail[1..].iter().take_while(|&&p| p > u).count() as i64
    }
}

/// `P(a single particle of type k has progeny of type k + j by time t)`,
/// by fixed-step RK4 on the backward equations.
fn reach_probability(k: i64, j: usize, law: BranchLaw, mu: f64, t: f64) -> f64 {
    let rates: Vec<f64> = (0..j).map(|i| law.rate(k + i as i64)).collect();
    let lam = rates.iter().cloned().fold(0.0, f64::max) + mu;
    let steps = ((t * lam / 0.01).ceil() as usize).max(200);
    let h = t / steps as f64;
    let deriv = |v: &[f64], out: &mut [f64]| {
        for i in 0..j {
            let up = if i + 1 < j { v[i + 1] } else { 1.0 };
            out[i] = rates[i] * v[i] * (1.0 - v[i]) + mu * (up - v[i]);
        }
    };
    let mut v = vec![0.0; j];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; j],
        vec![0.0; j],
        vec![0.0; j],
        vec![0.0; j],
        vec![0.0; j],
    );
    for _ in 0..steps {
        deriv(&v, &mut k1);
        for i in 0..j {
            tmp[i] = v[i] + 0.5 * h * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..j {
            tmp[i] = v[i] + 0.5 * h * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..j {
            tmp[i] = v[i] + h * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..j {
            v[i] = (v[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).clamp(0.0, 1.0);
        }
    }
    v[0]
}

/// One path of the restarted front `D'`: independent blocks of length
/// `cal_t`, each a fresh process of `N` particles of type `cal_w` with
/// type-linear branching, stacked on top of the previous blocks' maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartedFront {
    pub block_length: f64,
    /// Maximal offsets of the completed blocks.
    pub blocks: Vec<i64>,
    /// Jump times and values of `D'`, starting with `(0, 0)`.
    pub path: Vec<(f64, i64)>,
}

impl RestartedFront {
    /// `D'_t` by last value carried forward.
    pub fn at(&self, t: f64) -> i64 {
        let i = self.path.partition_point(|&(s, _)| s <= t);
        self.path[i.saturating_sub(1)].1
    }

    pub fn end(&self) -> i64 {
        self.path.last().map_or(0, |p| p.1)
    }
}

pub fn restarted_front<R: Rng + ?Sized>(
    params: &Params,
    scales: &Scales,
    t_end: f64,
    cap: u64,
    rng: &mut R,
) -> Result<RestartedFront> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidParams(format!(
            "t_end must be > 0 (got {t_end})"
        )));
    }
    let law = BranchLaw::TypeLinear {
        gamma: params.gamma,
    };
    let k = scales.cal_w;
    law.validate(k)?;
    let block = scales.cal_t;
    let mut front = RestartedFront {
        block_length: block,
        blocks: Vec::new(),
        path: vec![(0.0, 0)],
    };
    let mut start = 0.0;
    let mut base = 0i64;
    while start < t_end {
        let len = block.min(t_end - start);
        let mut z = Yule::new(law, params.mu);
        z.add(k, params.n as u64);
        let path = &mut front.path;
        z.run_until(len, cap, rng, |s, m| path.push((start + s, base + m - k)))?;
        let m = z.max_type().expect("non-empty") - k;
        if len == block {
            front.blocks.push(m);
        }
        base += m;
        start += block;
    }
    Ok(front)
}

/// Draws `D'_t` directly from the block structure: `j` independent complete
/// blocks plus one partial block of length `t - j T`, each from its exact
/// maximal-type law. This scales to populations far too large for particles.
#[derive(Debug, Clone)]
pub struct FrontMarginal {
    full: MaxTypeLaw,
    partial: Option<MaxTypeLaw>,
    full_blocks: usize,
}

impl FrontMarginal {
    pub fn new(params: &Params, scales: &Scales, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::InvalidParams(format!("t must be > 0 (got {t})")));
        }
        let law = BranchLaw::TypeLinear {
            gamma: params.gamma,
        };
        let block = scales.cal_t;
        let j = ((t / block).ceil() as usize).saturating_sub(1);
        let rest = t - j as f64 * block;
        let n0 = params.n as f64;
        let full = MaxTypeLaw::new(scales.cal_w, n0, law, params.mu, block)?;
        let partial = if (rest - block).abs() <= 1e-12 * block {
            None
        } else {
            Some(MaxTypeLaw::new(scales.cal_w, n0, law, params.mu, rest)?)
        };
        Ok(Self {
            full,
            partial,
            full_blocks: j,
        })
    }

    pub fn mean(&self) -> f64 {
        let last = self.partial.as_ref().unwrap_or(&self.full).mean();
        self.full_blocks as f64 * self.full.mean() + last
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let mut d: i64 = (0..self.full_blocks).map(|_| self.full.sample(rng)).sum();
        d += self.partial.as_ref().unwrap_or(&self.full).sample(rng);
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::WChoice;
    use crate::rng::replicate_rng;

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn frozen_types_without_mutation() {
        let mut rng = replicate_rng(1, 0);
        for law in [
            BranchLaw::Constant { c: 1.0 },
            BranchLaw::TypeLinear { gamma: 1.0 },
        ] {
            let o = simulate_yule(3, 4, law, 0.0, 2.0, DEFAULT_PARTICLE_CAP, &mut rng).unwrap();
            assert_eq!(o.max_offset, 0);
        }
    }

    #[test]
    fn yule_population_mean_is_exponential() {
        let xs: Vec<f64> = (0..10_000)
            .map(|r| {
                let mut rng = replicate_rng(2, r);
                simulate_yule(
                    0,
                    1,
                    BranchLaw::Constant { c: 1.0 },
                    1.0,
                    1.0,
                    1_000_000,
                    &mut rng,
                )
                .unwrap()
                .population as f64
            })
            .collect();
        let (m, se) = mean_se(&xs);
        assert!((m - std::f64::consts::E).abs() <= 3.0 * se, "{m} +- {se}");
    }

    #[test]
    fn single_particle_type_is_poisson() {
        let xs: Vec<f64> = (0..10_000)
            .map(|r| {
                let mut rng = replicate_rng(3, r);
                simulate_yule(0, 1, BranchLaw::Constant { c: 0.0 }, 1.0, 2.0, 10, &mut rng)
                    .unwrap()
                    .max_offset as f64
            })
            .collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 2.0).abs() <= 3.0 * se);
    }

    #[test]
    fn cap_reports_time_reached() {
        let mut rng = replicate_rng(4, 0);
        let e = simulate_yule(
            0,
            10,
            BranchLaw::Constant { c: 5.0 },
            1.0,
            10.0,
            1000,
            &mut rng,
        )
        .unwrap_err();
        match e {
            Error::ParticleCapExceeded {
                cap,
                time,
                population,
            } => {
                assert_eq!(cap, 1000);
                assert!(time > 0.0 && time < 10.0);
                assert!(population > 1000);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_law_without_branching_is_poisson_max() {
        // one particle, no branching: the type is Poisson(mu t)
        let law = MaxTypeLaw::new(0, 1.0, BranchLaw::Constant { c: 0.0 }, 1.5, 1.0).unwrap();
        let lam = 1.5f64;
        let mut cdf = 0.0;
        let mut pmf = (-lam).exp();
        for j in 0..12 {
            assert!((law.p_at_least(j) - (1.0 - cdf)).abs() < 1e-9, "j = {j}");
            cdf += pmf;
            pmf *= lam / (j + 1) as f64;
        }
        assert!((law.mean() - lam).abs() < 1e-9);
    }

    #[test]
    fn max_law_two_particles_independent() {
        // two independent Poisson types: P(max >= j) = 1 - F(j-1)^2
        let law = MaxTypeLaw::new(0, 2.0, BranchLaw::Constant { c: 0.0 }, 1.0, 1.0).unwrap();
        let mut f = 0.0;
        let mut pmf = (-1.0f64).exp();
        for j in 0..10 {
            assert!((law.p_at_least(j) - (1.0 - f * f)).abs() < 1e-9);
            f += pmf;
            pmf /= (j + 1) as f64;
        }
    }

    #[test]
    fn max_law_matches_simulation() {
        for law in [
            BranchLaw::Constant { c: 1.0 },
            BranchLaw::TypeLinear { gamma: 1.0 },
        ] {
            let exact = MaxTypeLaw::new(2, 3.0, law, 1.0, 1.0).unwrap();
            let reps = 20_000u64;
            let mut hist = vec![0u64; 40];
            for r in 0..reps {
                let mut rng = replicate_rng(5, r);
                let o = simulate_yule(2, 3, law, 1.0, 1.0, 1_000_000, &mut rng).unwrap();
                hist[o.max_offset as usize] += 1;
            }
            for j in 1..8 {
                let emp = hist[j..].iter().sum::<u64>() as f64 / reps as f64;
                let p = exact.p_at_least(j);
                let se = (p * (1.0 - p) / reps as f64).sqrt();
                assert!(
                    (emp - p).abs() <= 4.0 * se + 1e-4,
                    "{law:?} j={j}: {emp} vs {p}"
                );
            }
        }
    }

    #[test]
    fn restarted_front_structure() {
        let p = Params::new(16, 1.0, 0.5, 1.0).unwrap();
        let s = Scales::new(16, WChoice::default()).unwrap();
        let mut rng = replicate_rng(6, 0);
        let f = restarted_front(&p, &s, 3.5 * s.cal_t, DEFAULT_PARTICLE_CAP, &mut rng).unwrap();
        assert_eq!(f.path[0], (0.0, 0));
        assert!(f
            .path
            .windows(2)
            .all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert_eq!(f.blocks.len(), 3);
        let at_blocks: i64 = f.blocks.iter().sum();
        assert_eq!(f.at(3.0 * s.cal_t), at_blocks);
    }

    #[test]
    fn marginal_sampler_matches_law_mean() {
        let p = Params::new(16, 1.0, 0.5, 1.0).unwrap();
        let s = Scales::new(16, WChoice::default()).unwrap();
        let m = FrontMarginal::new(&p, &s, 2.0 * s.cal_t).unwrap();
        let single = MaxTypeLaw::new(
            s.cal_w,
            16.0,
            BranchLaw::TypeLinear { gamma: 1.0 },
            1.0,
            s.cal_t,
        )
        .unwrap();
        assert!((m.mean() - 2.0 * single.mean()).abs() < 1e-12);
        let mut rng = replicate_rng(7, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| m.sample(&mut rng) as f64).collect();
        let (mean, se) = mean_se(&xs);
        assert!((mean - m.mean()).abs() <= 3.5 * se);
    }
}
