//! Pathwise couplings of the population with dominating branching processes.
//!
//! Each individual is paired with one particle. The population and the
//! branching process are driven by a single stream of competing clocks:
//!
//! * mutation of individual `i` (rate `mu`) also advances particle `i`;
//! * `i` replacing `j` by resampling (rate `1/N`) branches particle `i`;
//!   the offspring takes over `j` when its type is at least that of `j`'s
//!   particle, otherwise it stays unpaired;
//! * particle `i` branches on its own at rate `1/N`;
//! * in the front coupling, selection of `j` by `i` also branches particle
//!   `i`, and particle `i` has an extra branch clock at rate
//!   `gamma (R^i - U^i)` with `U^i = (1/N) sum_j (X^i - X^j)^+`, so that its
//!   total branch rate is `gamma R^i + 1`;
//! * unpaired particles evolve on their own.
//!
//! Unpaired particles are exchangeable, so they are kept as counts per type.
//! Every inequality the construction is meant to guarantee is checked for
//! every individual after every event, and violations are counted.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::branching::{BranchLaw, Yule, DEFAULT_PARTICLE_CAP};
use crate::engine::DEFAULT_EVENT_CAP;
use crate::error::{Error, Result};
use crate::params::Params;
use crate::population::{
    apply_event, sample_event, sample_mutation, sample_pair, sample_selection_pair, Event,
    EventKind, Population,
};
use crate::tracked::TrackedDepth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    /// The dominated statistic: the drop of the minimum (back coupling) or
    /// the running maximum of the front displacement (front couplings).
    pub stat: i64,
    /// Maximal type offset of the branching process.
    pub bound: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    /// Time up to which the coupling was maintained.
    pub horizon: f64,
    pub dominance_violations: u64,
    pub welldef_violations: u64,
    pub pairing_violations: u64,
    /// Time at which the minimum first dropped more than `k` below its
    /// initial value, ending the front coupling.
    pub observed_tk: Option<f64>,
    pub series: Vec<SeriesPoint>,
    pub events: u64,
    /// The population keeps running alone after the coupling ends, so the
    /// fields below always describe the whole interval `[0, t_end]`.
    pub t_end: f64,
    pub xbar_end: f64,
    pub width_end: i64,
    /// `sup_{s <= t_end} (X_0^- - X_s^-)`.
    pub back_drop: i64,
    /// `sup_{s <= t_end} (X_s^+ - X_0^+)`, floored at 0.
    pub front_sup: i64,
    /// `max_i sup` over membership times of `x - X^i`, tracked coupling only.
    pub tracked_depth: Option<i64>,
    pub z_max_offset: i64,
    pub z_population: u64,
}

impl CouplingReport {
    pub fn violations(&self) -> u64 {
        self.dominance_violations + self.welldef_violations + self.pairing_violations
    }
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Back,
    Front { k: i64 },
}

struct Coupled {
    mode: Mode,
    params: Params,
    pop: Population,
    x0_minus: i64,
    x0_plus: i64,
    /// Type of the particle paired with each individual.
    ptype: Vec<i64>,
    pid: Vec<u64>,
    next_id: u64,
    pool: Yule,
    z_start: i64,
    z_max: i64,
    /// Per-individual running maxima: `X_0^- - X^i` (back) or `X^i - X_0^+`.
    stat: Vec<i64>,
    back_drop: i64,
    front_sup: i64,
    tracked: Option<TrackedDepth>,
    coupled: bool,
    report: CouplingReport,
}

impl Coupled {
    fn new(
        mode: Mode,
        params: &Params,
        initial: Population,
        tracked_x: Option<i64>,
    ) -> Result<Self> {
        // mu = 0 is admitted here: it is the degenerate case in which nothing
        // can move below the start and the dominance is trivial
        let degenerate = Params { mu: 1.0, ..*params };
        degenerate.validate_neutral_allowed()?;
        if !(params.mu >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "mu must be >= 0 (got {})",
                params.mu
            )));
        }
        if initial.n() != params.n {
            return Err(Error::InvalidParams(format!(
                "population has {} individuals but n = {}",
                initial.n(),
                params.n
            )));
        }
        let mut pop = initial;
        pop.set_time(0.0);
        let n = pop.n();
        let (x0_minus, x0_plus, w0) = (pop.xmin(), pop.xmax(), pop.width());
        let (law, z_start) = match mode {
            Mode::Back => (BranchLaw::Constant { c: 1.0 }, 0),
            Mode::Front { k } => {
                if params.gamma <= 0.0 {
                    return Err(Error::InvalidParams(
                        "front coupling needs gamma > 0".into(),
                    ));
                }
                (
                    BranchLaw::TypeLinear {
                        gamma: params.gamma,
                    },
                    w0 + k,
                )
            }
        };
        let stat = (0..n)
            .map(|i| match mode {
                Mode::Back => x0_minus - pop.fitness(i),
                Mode::Front { .. } => pop.fitness(i) - x0_plus,
            })
            .collect();
        let tracked = tracked_x.map(|x| TrackedDepth::new(&pop, x));
        let report = CouplingReport {
            horizon: 0.0,
            dominance_violations: 0,
            welldef_violations: 0,
            pairing_violations: 0,
            observed_tk: None,
            series: vec![SeriesPoint {
                t: 0.0,
                stat: 0,
                bound: 0,
            }],
            events: 0,
            t_end: 0.0,
            xbar_end: pop.xbar(),
            width_end: w0,
            back_drop: 0,
            front_sup: 0,
            tracked_depth: tracked.as_ref().and_then(|t| t.max_depth()),
            z_max_offset: 0,
            z_population: n as u64,
        };
        let mut c = Self {
            mode,
            params: *params,
            pop,
            x0_minus,
            x0_plus,
            ptype: vec![z_start; n],
            pid: (0..n as u64).collect(),
            next_id: n as u64,
            pool: Yule::new(law, params.mu),
            z_start,
            z_max: z_start,
            stat,
            back_drop: 0,
            front_sup: 0,
            tracked,
            coupled: true,
            report,
        };
        c.check();
        Ok(c)
    }

    fn n(&self) -> usize {
        self.pop.n()
    }

    /// `R^i - W_0 - k`, the dominating quantity of the front couplings.
    fn shifted(&self, i: usize) -> i64 {
        self.ptype[i] - self.z_start
    }

    fn compensating_weight(&self, i: usize) -> i64 {
        self.n() as i64 * self.ptype[i] - self.pop.gap_mass(self.pop.fitness(i)) as i64
    }

    fn check(&mut self) {
        let n = self.n();
        match self.mode {
            Mode::Back => {
                for i in 0..n {
                    if self.stat[i] > self.ptype[i] {
                        self.report.dominance_violations += 1;
                    }
                }
            }
            Mode::Front { .. } => {
                // N U^i for every occupied fitness class, computed once
                let lo = self.pop.xmin();
                let masses: Vec<u64> = (lo..=self.pop.xmax())
                    .map(|v| self.pop.gap_mass(v))
                    .collect();
                for i in 0..n {
                    if self.stat[i] > self.shifted(i) {
                        self.report.dominance_violations += 1;
                    }
                    let mass = masses[(self.pop.fitness(i) - lo) as usize] as i64;
                    if mass > n as i64 * self.ptype[i] {
                        self.report.welldef_violations += 1;
                    }
                }
                if let Some(tr) = &self.tracked {
                    for i in 0..n {
                        if tr.depth[i].is_some_and(|d| d > self.shifted(i)) {
                            self.report.dominance_violations += 1;
                        }
                    }
                }
            }
        }
        let mut ids = self.pid.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.len() != n {
            self.report.pairing_violations += 1;
        }
    }

    fn statistic(&self) -> i64 {
        match self.mode {
            Mode::Back => self.back_drop,
            Mode::Front { .. } => self.front_sup,
        }
    }

    fn push_series(&mut self) {
        let point = SeriesPoint {
            t: self.pop.time(),
            stat: self.statistic(),
            bound: self.z_max - self.z_start,
        };
        let last = self.report.series.last().expect("initial point");
        if last.stat != point.stat || last.bound != point.bound {
            self.report.series.push(point);
        }
    }

    fn raise_z_max(&mut self, ty: i64) {
        self.z_max = self.z_max.max(ty);
    }

    /// Particle of `from` branches because `from` replaced `to`.
    fn branch_into(&mut self, from: usize, to: usize) {
        let (ri, rj) = (self.ptype[from], self.ptype[to]);
        self.pool.add(ri.min(rj), 1);
        if ri >= rj {
            self.ptype[to] = ri;
            self.pid[to] = self.next_id;
            self.next_id += 1;
        }
    }

    /// Bookkeeping of the population-side statistics after `event`.
    fn observe_x(&mut self, event: &Event) {
        let j = event.kind.target();
        let f = self.pop.fitness(j);
        let s = match self.mode {
            Mode::Back => self.x0_minus - f,
            Mode::Front { .. } => f - self.x0_plus,
        };
        self.stat[j] = self.stat[j].max(s);
        self.back_drop = self.back_drop.max(self.x0_minus - self.pop.xmin());
        self.front_sup = self.front_sup.max(self.pop.xmax() - self.x0_plus);
        if let Some(tr) = self.tracked.as_mut() {
            tr.refresh(&self.pop, j);
        }
    }

    fn apply_x(&mut self, event: Event) -> Result<()> {
        if let Some(tr) = self.tracked.as_mut() {
            tr.set.step(&event, &self.pop);
        }
        apply_event(&mut self.pop, &event)?;
        self.observe_x(&event);
        Ok(())
    }

    fn run<R: Rng + ?Sized>(mut self, t_end: f64, rng: &mut R) -> Result<CouplingReport> {
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidParams(format!(
                "t_end must be finite and >= 0 (got {t_end})"
            )));
        }
        let n = self.n();
        let nf = n as f64;
        let p = self.params;
        let mut events = 0u64;
        while self.coupled {
            let mutation = nf * p.mu;
            let resampling = nf - 1.0;
            let weight = self.pop.selection_weight();
            let selection = p.gamma / nf * weight as f64;
            let independent = 1.0;
            let compensating = match self.mode {
                Mode::Back => 0.0,
                Mode::Front { .. } => {
                    let total: i64 = (0..n).map(|i| self.compensating_weight(i).max(0)).sum();
                    p.gamma / nf * total as f64
                }
            };
            let pool = self.pool.total_rate();
            let total = mutation + resampling + selection + independent + compensating + pool;
            let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
            let time = self.pop.time() + dt;
            if time > t_end {
                self.pop.set_time(t_end);
                break;
            }
            if events >= DEFAULT_EVENT_CAP {
                return Err(Error::EventCapExceeded {
                    cap: DEFAULT_EVENT_CAP,
                    time: self.pop.time(),
                });
            }
            events += 1;
            let u = rng.random::<f64>() * total;
            let to_resampling = mutation + resampling;
            let to_selection = to_resampling + selection;
            let to_independent = to_selection + independent;
            if u < mutation {
                let kind = sample_mutation(&self.pop, &p, rng);
                let i = kind.target();
                self.apply_x(Event { time, kind })?;
                self.ptype[i] += 1;
                self.raise_z_max(self.ptype[i]);
            } else if u < to_resampling {
                let (from, to) = sample_pair(n, rng);
                self.apply_x(Event {
                    time,
                    kind: EventKind::Resample { from, to },
                })?;
                self.branch_into(from, to);
            } else if u < to_selection {
                let (from, to) = sample_selection_pair(&self.pop, weight, rng);
                self.apply_x(Event {
                    time,
                    kind: EventKind::Select { from, to },
                })?;
                if let Mode::Front { .. } = self.mode {
                    self.branch_into(from, to);
                }
            } else if u < to_independent {
                self.pop.set_time(time);
                let i = rng.random_range(0..n);
                self.pool.add(self.ptype[i], 1);
            } else if u < to_independent + compensating {
                self.pop.set_time(time);
                let weights: Vec<i64> =
                    (0..n).map(|i| self.compensating_weight(i).max(0)).collect();
                let total_w: i64 = weights.iter().sum();
                let mut v = rng.random_range(0..total_w);
                let mut chosen = n - 1;
                for (i, &w) in weights.iter().enumerate() {
                    if v < w {
                        chosen = i;
                        break;
                    }
                    v -= w;
                }
                self.pool.add(self.ptype[chosen], 1);
            } else {
                self.pop.set_time(time);
                let ty = self.pool.fire(rng);
                self.raise_z_max(ty);
            }
            if self.pool.population() > DEFAULT_PARTICLE_CAP {
                return Err(Error::ParticleCapExceeded {
                    cap: DEFAULT_PARTICLE_CAP,
                    time,
                    population: self.pool.population() + n as u64,
                });
            }
            if let Mode::Front { k } = self.mode {
                if self.back_drop > k {
                    // the construction is only defined strictly before T^k
                    self.coupled = false;
                    self.report.observed_tk = Some(time);
                    self.push_series();
                    break;
                }
            }
            self.check();
            self.push_series();
        }
        self.report.horizon = self.pop.time();
        self.report.z_max_offset = self.z_max - self.z_start;
        self.report.z_population = n as u64 + self.pool.population();
        // the population alone up to t_end
        loop {
            let event = sample_event(&self.pop, &p, rng);
            if event.time > t_end {
                self.pop.set_time(t_end);
                break;
            }
            if events >= DEFAULT_EVENT_CAP {
                return Err(Error::EventCapExceeded {
                    cap: DEFAULT_EVENT_CAP,
                    time: self.pop.time(),
                });
            }
            events += 1;
            self.apply_x(event)?;
        }
        self.report.events = events;
        self.report.t_end = t_end;
        self.report.xbar_end = self.pop.xbar();
        self.report.width_end = self.pop.width();
        self.report.back_drop = self.back_drop;
        self.report.front_sup = self.front_sup;
        self.report.tracked_depth = self.tracked.as_ref().and_then(|t| t.max_depth());
        Ok(self.report)
    }
}

/// Coupling of the population with the constant-rate-1 Yule process started
/// from `N` particles of type 0, dominating the drop of the minimum fitness.
pub fn couple_backspeed<R: Rng + ?Sized>(
    params: &Params,
    initial: Population,
    t_end: f64,
    rng: &mut R,
) -> Result<CouplingReport> {
    Coupled::new(Mode::Back, params, initial, None)?.run(t_end, rng)
}

/// Coupling of the population with the type-linear process started from `N`
/// particles of type `W_0 + k`, dominating the front displacement until the
/// minimum drops more than `k` below its initial value.
pub fn couple_upbound<R: Rng + ?Sized>(
    params: &Params,
    initial: Population,
    k: i64,
    t_end: f64,
    rng: &mut R,
) -> Result<CouplingReport> {
    if k < 1 {
        return Err(Error::InvalidParams(format!("k must be >= 1 (got {k})")));
    }
    Coupled::new(Mode::Front { k }, params, initial, None)?.run(t_end, rng)
}

/// The front coupling, additionally following the tracked set above `x` and
/// checking that its members' depths below `x` stay dominated.
pub fn couple_tracked<R: Rng + ?Sized>(
    params: &Params,
    initial: Population,
    x: i64,
    k: i64,
    t_end: f64,
    rng: &mut R,
) -> Result<CouplingReport> {
    if k < 1 {
        return Err(Error::InvalidParams(format!("k must be >= 1 (got {k})")));
    }
    Coupled::new(Mode::Front { k }, params, initial, Some(x))?.run(t_end, rng)
}
