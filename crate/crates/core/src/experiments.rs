//! Replicated experiments: rate estimates, the exact-oracle comparison,
//! tail-bound tables, the excursion checks and the width
//! contraction/stability estimates.
//!
//! Replicate `i` of an experiment always draws from
//! [`replicate_rng`]`(seed, i)`, and results are collected in index order,
//! so the worker count never changes an output.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{backspeed_bound, upbound_bound, yule_tail_bound, zup_tail_bound, Bound};
use crate::branching::{simulate_yule, BranchLaw, FrontMarginal};
use crate::coupling::{couple_backspeed, couple_tracked, couple_upbound};
use crate::ctmc::{ctmc_dense_xbar, ctmc_exact_xbar, ExactMean};
use crate::engine::{evolve, Observer, DEFAULT_EVENT_CAP};
use crate::error::{Error, Result};
use crate::excursion::ExcursionObserver;
use crate::init::InitialProfile;
use crate::labels::LabelTracker;
use crate::params::{theorem_envelope, Params, Scales, WChoice};
use crate::population::{Event, Population};
use crate::rng::{derive_seed, replicate_rng, SimRng};
use crate::stats::{pooled_se, trend_nondecreasing, trend_nonincreasing, Estimate};
use crate::tracked::TrackedDepth;

/// Slack, in standard errors, of every statistical comparison.
pub const Z_SLACK: f64 = 3.0;

/// Executes independent replicates, sequentially or on a thread pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Runner {
    pub seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
}

impl Runner {
    pub fn new(seed: u64, workers: usize) -> Self {
        Self { seed, workers }
    }

    /// Runner for a sub-experiment with its own family of streams.
    pub fn sub(&self, tag: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, tag),
            workers: self.workers,
        }
    }

    pub fn map<T, F>(&self, reps: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64, &mut SimRng) -> Result<T> + Sync + Send,
    {
        let one = |i: u64| {
            let mut rng = replicate_rng(self.seed, i);
            f(i, &mut rng)
        };
        if self.workers == 1 {
            return (0..reps).map(one).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidParams(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..reps).into_par_iter().map(one).collect())
    }
}

fn positive_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "time must be finite and > 0 (got {t})"
        )))
    }
}

/// Running extremes of the front and the back relative to time 0.
#[derive(Debug, Clone, Copy)]
struct Extremes {
    x0_plus: i64,
    x0_minus: i64,
    front_sup: i64,
    back_drop: i64,
}

impl Extremes {
    fn new(pop: &Population) -> Self {
        Self {
            x0_plus: pop.xmax(),
            x0_minus: pop.xmin(),
            front_sup: 0,
            back_drop: 0,
        }
    }
}

impl Observer for Extremes {
    fn after_event(&mut self, pop: &Population, _event: &Event) -> ControlFlow<()> {
        self.front_sup = self.front_sup.max(pop.xmax() - self.x0_plus);
        self.back_drop = self.back_drop.max(self.x0_minus - pop.xmin());
        ControlFlow::Continue(())
    }
}

/// `X̄_t` over replicates started from `initial`.
pub fn sample_xbar(
    params: &Params,
    initial: &Population,
    t: f64,
    reps: u64,
    runner: &Runner,
) -> Result<Vec<f64>> {
    params.validate_neutral_allowed()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "t must be finite and >= 0 (got {t})"
        )));
    }
    runner.map(reps, |_, rng| {
        let mut pop = initial.clone();
        evolve(&mut pop, params, t, DEFAULT_EVENT_CAP, rng, &mut ())?;
        Ok(pop.xbar())
    })
}

/// Replicate estimate of `E[X̄_t] / t` from the all-zero configuration.
pub fn estimate_rate(params: &Params, t: f64, reps: u64, runner: &Runner) -> Result<Estimate> {
    positive_time(t)?;
    let zeros = Population::uniform(params.n, 0)?;
    let xs: Vec<f64> = sample_xbar(params, &zeros, t, reps, runner)?
        .into_iter()
        .map(|x| x / t)
        .collect();
    Ok(Estimate::from_samples(&xs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub t: f64,
    pub radius: usize,
    pub exact: ExactMean,
    pub monte_carlo: Estimate,
    /// Radius at which the two exact solvers were compared, if feasible.
    pub cross_radius: Option<usize>,
    pub cross_sparse: Option<f64>,
    pub cross_dense: Option<f64>,
    pub routes_agree: bool,
    pub pass: bool,
}

/// Monte Carlo `E[X̄_t]` from the all-zero configuration against the exact
/// chain, with the two exact solvers cross-checked at a small radius.
pub fn oracle_check(
    params: &Params,
    radius: usize,
    t: f64,
    reps: u64,
    leak_tol: f64,
    runner: &Runner,
) -> Result<OracleReport> {
    let zeros = Population::uniform(params.n, 0)?;
    let exact = ctmc_exact_xbar(params, &zeros, radius, t, leak_tol)?;
    let xs = sample_xbar(params, &zeros, t, reps, runner)?;
    let mc = Estimate::from_samples(&xs);
    let cross_radius = (1..=radius.min(4)).rev().find(|&r| {
        (2 * r + 1)
            .checked_pow(params.n as u32)
            .is_some_and(|c| c <= 2_000)
    });
    let (cross_sparse, cross_dense) = match cross_radius {
        Some(r) => (
            Some(ctmc_exact_xbar(params, &zeros, r, t, 1.0)?.value),
            Some(ctmc_dense_xbar(params, &zeros, r, t)?.value),
        ),
        None => (None, None),
    };
    let routes_agree = match (cross_sparse, cross_dense) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-8,
        _ => true,
    };
    let pass = !exact.flagged && routes_agree && mc.consistent_with(exact.value, Z_SLACK);
    Ok(OracleReport {
        t,
        radius,
        exact,
        monte_carlo: mc,
        cross_radius,
        cross_sparse,
        cross_dense,
        routes_agree,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailFamily {
    /// `P(M >= l)` for the constant-rate Yule process.
    Yule,
    /// `P(M > l)` for the type-linear process.
    TypeLinear,
    /// `P(S_t >= l)`, drop of the minimum.
    BackSpeed,
    /// `P(sup D > l)`, front displacement.
    UpBound,
    /// `P(some tracked member reaches x - l)`.
    Tracked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub family: TailFamily,
    /// Initial particle count or population size.
    pub n: usize,
    pub t: f64,
    pub l: u64,
    pub empirical: Estimate,
    pub bound: Bound,
    /// `empirical <= clamped bound + 3 se`.
    pub pass: bool,
}

fn tail_row(
    family: TailFamily,
    n: usize,
    t: f64,
    l: u64,
    hits: usize,
    reps: u64,
    bound: Bound,
) -> TailRow {
    let empirical = Estimate::proportion(hits, reps as usize);
    TailRow {
        family,
        n,
        t,
        l,
        empirical,
        bound,
        pass: empirical.below(bound.clamped, Z_SLACK),
    }
}

fn rows_from<F: Fn(u64) -> Result<Bound>>(
    family: TailFamily,
    n: usize,
    t: f64,
    ls: &[u64],
    stats: &[i64],
    hit: impl Fn(i64, u64) -> bool,
    bound: F,
) -> Result<Vec<TailRow>> {
    ls.iter()
        .map(|&l| {
            let hits = stats.iter().filter(|&&s| hit(s, l)).count();
            Ok(tail_row(
                family,
                n,
                t,
                l,
                hits,
                stats.len() as u64,
                bound(l)?,
            ))
        })
        .collect()
}

/// Maximal-type tail of the constant-rate process from `n0` particles.
#[allow(clippy::too_many_arguments)]
pub fn tail_yule(
    n0: u64,
    c: f64,
    mu: f64,
    t: f64,
    ls: &[u64],
    reps: u64,
    cap: u64,
    runner: &Runner,
) -> Result<Vec<TailRow>> {
    let law = BranchLaw::Constant { c };
    let m: Vec<i64> = runner.map(reps, |_, rng| {
        Ok(simulate_yule(0, n0, law, mu, t, cap, rng)?.max_offset)
    })?;
    rows_from(
        TailFamily::Yule,
        n0 as usize,
        t,
        ls,
        &m,
        |s, l| s >= l as i64,
        |l| Ok(yule_tail_bound(n0 as f64, t, mu, c, l)),
    )
}

/// Maximal-type tail of the type-linear process from `n0` particles of type `k`.
#[allow(clippy::too_many_arguments)]
pub fn tail_type_linear(
    n0: u64,
    k: i64,
    gamma: f64,
    mu: f64,
    t: f64,
    ls: &[u64],
    reps: u64,
    cap: u64,
    runner: &Runner,
) -> Result<Vec<TailRow>> {
    let law = BranchLaw::TypeLinear { gamma };
    let m: Vec<i64> = runner.map(reps, |_, rng| {
        Ok(simulate_yule(k, n0, law, mu, t, cap, rng)?.max_offset)
    })?;
    rows_from(
        TailFamily::TypeLinear,
        n0 as usize,
        t,
        ls,
        &m,
        |s, l| s > l as i64,
        |l| Ok(zup_tail_bound(n0 as f64, t, mu, gamma, k, l)),
    )
}

/// Tail of the drop of the minimum from the all-zero configuration, at each
/// time of `ts` along the same runs.
pub fn tail_backspeed(
    params: &Params,
    ts: &[f64],
    ls: &[u64],
    reps: u64,
    runner: &Runner,
) -> Result<Vec<TailRow>> {
    params.validate_neutral_allowed()?;
    let mut times = ts.to_vec();
    times.sort_by(f64::total_cmp);
    for &t in &times {
        positive_time(t)?;
    }
    let drops: Vec<Vec<i64>> = runner.map(reps, |_, rng| {
        let mut pop = Population::uniform(params.n, 0)?;
        let mut ext = Extremes::new(&pop);
        times
            .iter()
            .map(|&t| {
                evolve(&mut pop, params, t, DEFAULT_EVENT_CAP, rng, &mut ext)?;
                Ok(ext.back_drop)
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let s: Vec<i64> = drops.iter().map(|d| d[j]).collect();
        rows.extend(rows_from(
            TailFamily::BackSpeed,
            params.n,
            t,
            ls,
            &s,
            |s, l| s >= l as i64,
            |l| Ok(backspeed_bound(params.n as f64, t, params.mu, l)),
        )?);
    }
    Ok(rows)
}

/// Tail of the running maximum of the front displacement.
pub fn tail_upbound(
    params: &Params,
    initial: &Population,
    t: f64,
    ls: &[u64],
    reps: u64,
    runner: &Runner,
) -> Result<Vec<TailRow>> {
    params.validate()?;
    positive_time(t)?;
    let sups: Vec<i64> = runner.map(reps, |_, rng| {
        let mut pop = initial.clone();
        let mut ext = Extremes::new(&pop);
        evolve(&mut pop, params, t, DEFAULT_EVENT_CAP, rng, &mut ext)?;
        Ok(ext.front_sup)
    })?;
    let w0 = initial.width();
    rows_from(
        TailFamily::UpBound,
        params.n,
        t,
        ls,
        &sups,
        |s, l| s > l as i64,
        |l| upbound_bound(params.n as f64, t, params.mu, params.gamma, w0, l),
    )
}

/// Probability that a member of the tracked set above `x` reaches fitness
/// `x - l` or lower, against the front-style bound.
#[allow(clippy::too_many_arguments)]
pub fn tail_tracked(
    params: &Params,
    initial: &Population,
    x: i64,
    t: f64,
    ls: &[u64],
    reps: u64,
    runner: &Runner,
) -> Result<Vec<TailRow>> {
    params.validate()?;
    positive_time(t)?;
    let depths: Vec<i64> = runner.map(reps, |_, rng| {
        let mut pop = initial.clone();
        let mut obs = TrackedDepth::new(&pop, x);
        evolve(&mut pop, params, t, DEFAULT_EVENT_CAP, rng, &mut obs)?;
        Ok(obs.max_depth().unwrap_or(i64::MIN))
    })?;
    let w0 = initial.width();
    rows_from(
        TailFamily::Tracked,
        params.n,
        t,
        ls,
        &depths,
        |s, l| s >= l as i64,
        |l| upbound_bound(params.n as f64, t, params.mu, params.gamma, w0, l),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CouplingKind {
    BackSpeed,
    UpBound {
        k: i64,
    },
    /// Tracked set above `X_0^+ - below`.
    Tracked {
        k: i64,
        below: i64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CouplingTally {
    pub runs: u64,
    pub dominance: u64,
    pub welldef: u64,
    pub pairing: u64,
    /// Runs in which the front coupling ended before `t`.
    pub ended_early: u64,
}

impl CouplingTally {
    pub fn pass(&self) -> bool {
        self.dominance == 0 && self.welldef == 0 && self.pairing == 0
    }
}

/// Runs a coupling `reps` times and adds up its event-by-event violations.
pub fn coupling_check(
    kind: CouplingKind,
    params: &Params,
    initial: &Population,
    t: f64,
    reps: u64,
    runner: &Runner,
) -> Result<CouplingTally> {
    let reports = runner.map(reps, |_, rng| {
        let pop = initial.clone();
        match kind {
            CouplingKind::BackSpeed => couple_backspeed(params, pop, t, rng),
            CouplingKind::UpBound { k } => couple_upbound(params, pop, k, t, rng),
            CouplingKind::Tracked { k, below } => {
                let x = initial.xmax() - below;
                couple_tracked(params, pop, x, k, t, rng)
            }
        }
    })?;
    Ok(reports.iter().fold(CouplingTally::default(), |mut acc, r| {
        acc.runs += 1;
        acc.dominance += r.dominance_violations;
        acc.welldef += r.welldef_violations;
        acc.pairing += r.pairing_violations;
        acc.ended_early += u64::from(r.observed_tk.is_some());
        acc
    }))
}

/// An estimate against an upper bound. `pass` is `None` when the check is
/// withheld for lack of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub estimate: Estimate,
    pub bound: f64,
    pub pass: Option<bool>,
}

impl BoundCheck {
    fn new(estimate: Estimate, bound: f64) -> Self {
        Self {
            estimate,
            bound,
            pass: Some(estimate.below(bound, Z_SLACK)),
        }
    }
}

/// Fewer excursions than this and the mean-gain check is withheld.
pub const MIN_EXCURSIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropReport {
    pub n: usize,
    pub cal_w: i64,
    pub cal_t: f64,
    /// Horizon `s` of the excursion-count and decomposition checks.
    pub horizon: f64,
    /// Mean gain of the excursions seen in the runs, against `5 W`.
    pub gain_observed: BoundCheck,
    /// Mean gain of an excursion started from a balanced two-point
    /// configuration of width `2 W`, against `5 W`.
    pub gain_direct: BoundCheck,
    /// `E[D'_T]` against `6 W`.
    pub restarted_front: BoundCheck,
    /// `E[N_s] / s` against `1 / T`.
    pub excursion_rate: BoundCheck,
    /// `E[D_s - sum_{i <= N_s} Y_i] - E[D'_s]` against 0, with the pooled
    /// standard error of the two independent samples.
    pub decomposition: BoundCheck,
    pub excursions: usize,
    /// Excursions still open when the extra time ran out, whose gain is
    /// only partly observed.
    pub truncated: usize,
}

impl PropReport {
    /// Every check that was not withheld passed.
    pub fn pass(&self) -> bool {
        [
            self.gain_observed,
            self.gain_direct,
            self.restarted_front,
            self.excursion_rate,
            self.decomposition,
        ]
        .iter()
        .all(|c| c.pass != Some(false))
    }
}

/// Stops the run as soon as the current excursion has ended.
struct UntilClosed<'a>(&'a mut ExcursionObserver);

impl Observer for UntilClosed<'_> {
    fn after_event(&mut self, pop: &Population, event: &Event) -> ControlFlow<()> {
        let _ = self.0.after_event(pop, event);
        if self.0.scanner.in_excursion() {
            ControlFlow::Continue(())
        } else {
            ControlFlow::Break(())
        }
    }
}

/// Extra time, in units of `T`, granted to finish an open excursion. A gain
/// cut short is an underestimate, which only makes the decomposition check
/// harder to pass.
pub const CLOSE_WINDOW: f64 = 5.0;

/// Runs until the open excursion closes or the window runs out; `true` if it
/// closed.
fn close_excursion(
    pop: &mut Population,
    params: &Params,
    obs: &mut ExcursionObserver,
    until: f64,
    rng: &mut SimRng,
) -> Result<bool> {
    if !obs.scanner.in_excursion() {
        return Ok(true);
    }
    evolve(
        pop,
        params,
        until,
        DEFAULT_EVENT_CAP,
        rng,
        &mut UntilClosed(obs),
    )?;
    Ok(!obs.scanner.in_excursion())
}

struct ExcursionRun {
    count: usize,
    front: i64,
    gain_sum: i64,
    gains: Vec<i64>,
    truncated: bool,
}

/// Monte Carlo checks of the excursion bounds from the all-zero
/// configuration with horizon `s = 5 T`.
pub fn check_prop_bounds(
    params: &Params,
    scales: &Scales,
    reps: u64,
    runner: &Runner,
) -> Result<PropReport> {
    params.validate()?;
    let (cal_w, cal_t) = (scales.cal_w, scales.cal_t);
    let s = 5.0 * cal_t;
    let runs: Vec<ExcursionRun> = runner.sub(1).map(reps, |_, rng| {
        let mut pop = Population::uniform(params.n, 0)?;
        let mut obs = ExcursionObserver::new(&pop, cal_w);
        evolve(&mut pop, params, s, DEFAULT_EVENT_CAP, rng, &mut obs)?;
        let count = obs.scanner.started();
        let front = pop.xmax() - obs.x0_plus;
        let closed = close_excursion(&mut pop, params, &mut obs, s + CLOSE_WINDOW * cal_t, rng)?;
        let gains = obs.scanner.gains()[..count].to_vec();
        Ok(ExcursionRun {
            count,
            front,
            gain_sum: gains.iter().sum(),
            gains,
            truncated: !closed,
        })
    })?;

    let gains: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.gains.iter().map(|&g| g as f64))
        .collect();
    let mut gain_observed = BoundCheck::new(Estimate::from_samples(&gains), 5.0 * cal_w as f64);
    if gains.len() < MIN_EXCURSIONS {
        gain_observed.pass = None;
    }
    let truncated = runs.iter().filter(|r| r.truncated).count();

    let profile = InitialProfile::TwoPointBalanced { height: 2 * cal_w };
    let direct: Vec<(f64, bool)> = runner.sub(2).map(reps, |_, rng| {
        let mut pop = profile.build(params.n)?;
        let mut obs = ExcursionObserver::new(&pop, cal_w);
        let closed = close_excursion(&mut pop, params, &mut obs, CLOSE_WINDOW * cal_t, rng)?;
        Ok((obs.scanner.gains()[0] as f64, closed))
    })?;
    let direct_gains: Vec<f64> = direct.iter().map(|d| d.0).collect();
    let truncated = truncated + direct.iter().filter(|d| !d.1).count();
    let gain_direct = BoundCheck::new(Estimate::from_samples(&direct_gains), 5.0 * cal_w as f64);

    let block = FrontMarginal::new(params, scales, cal_t)?;
    let d_block: Vec<f64> = runner
        .sub(3)
        .map(reps, |_, rng| Ok(block.sample(rng) as f64))?;
    let restarted_front = BoundCheck::new(Estimate::from_samples(&d_block), 6.0 * cal_w as f64);

    let counts: Vec<f64> = runs.iter().map(|r| r.count as f64 / s).collect();
    let excursion_rate = BoundCheck::new(Estimate::from_samples(&counts), 1.0 / cal_t);

    let over_s = FrontMarginal::new(params, scales, s)?;
    let d_prime: Vec<f64> = runner
        .sub(4)
        .map(reps, |_, rng| Ok(over_s.sample(rng) as f64))?;
    let excess: Vec<f64> = runs.iter().map(|r| (r.front - r.gain_sum) as f64).collect();
    let (e, d) = (
        Estimate::from_samples(&excess),
        Estimate::from_samples(&d_prime),
    );
    let diff = Estimate::from_parts(e.mean - d.mean, pooled_se(&e, &d), e.n.min(d.n));
    let decomposition = BoundCheck::new(diff, 0.0);

    Ok(PropReport {
        n: params.n,
        cal_w,
        cal_t,
        horizon: s,
        gain_observed,
        gain_direct,
        restarted_front,
        excursion_rate,
        decomposition,
        excursions: gains.len(),
        truncated,
    })
}

/// First times of the contraction event (the minimum rises above
/// `X_0^+ - W_0/4`) and of the instability event (the maximum rises, or the
/// minimum falls, by more than `W_0/4`).
struct WidthEvents {
    x0_plus: i64,
    x0_minus: i64,
    w0: i64,
    contraction: Option<f64>,
    instability: Option<f64>,
}

impl Observer for WidthEvents {
    fn after_event(&mut self, pop: &Population, _event: &Event) -> ControlFlow<()> {
        let t = pop.time();
        if self.contraction.is_none() && 4 * (self.x0_plus - pop.xmin()) < self.w0 {
            self.contraction = Some(t);
        }
        if self.instability.is_none()
            && (4 * (pop.xmax() - self.x0_plus) > self.w0
                || 4 * (self.x0_minus - pop.xmin()) > self.w0)
        {
            self.instability = Some(t);
        }
        ControlFlow::Continue(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthReport {
    pub n: usize,
    pub w0: i64,
    pub horizon: f64,
    /// `P(B <= T)`.
    pub contraction: Estimate,
    /// `P(F > T)`.
    pub stability: Estimate,
    /// Probability of any of the four label deviation events by `T`.
    pub deviation: Estimate,
    /// The four deviation events separately, in the order `a1, a2, a1', a2'`.
    pub deviation_parts: [Estimate; 4],
}

/// Contraction, stability and label-deviation probabilities over one time
/// scale from the configuration built by `profile`.
pub fn width_contraction(
    params: &Params,
    scales: &Scales,
    profile: InitialProfile,
    reps: u64,
    runner: &Runner,
) -> Result<WidthReport> {
    params.validate()?;
    let initial = profile.build(params.n)?;
    let w0 = initial.width();
    if w0 < scales.cal_w {
        return Err(Error::InvalidParams(format!(
            "initial width {w0} is below the width scale {}",
            scales.cal_w
        )));
    }
    let horizon = scales.cal_t;
    let outcomes: Vec<(bool, bool, [bool; 4])> = runner.map(reps, |_, rng| {
        let mut pop = initial.clone();
        let mut ev = WidthEvents {
            x0_plus: pop.xmax(),
            x0_minus: pop.xmin(),
            w0,
            contraction: None,
            instability: None,
        };
        let mut labels = LabelTracker::new(&pop);
        evolve(
            &mut pop,
            params,
            horizon,
            DEFAULT_EVENT_CAP,
            rng,
            &mut (&mut ev, &mut labels),
        )?;
        let a = labels.events_within(horizon);
        Ok((
            ev.contraction.is_some(),
            ev.instability.is_none(),
            [a.a1, a.a2, a.a1p, a.a2p],
        ))
    })?;
    let n = outcomes.len();
    type Outcome = (bool, bool, [bool; 4]);
    let frac = |f: &dyn Fn(&Outcome) -> bool| {
        Estimate::proportion(outcomes.iter().filter(|o| f(o)).count(), n)
    };
    Ok(WidthReport {
        n: params.n,
        w0,
        horizon,
        contraction: frac(&|o| o.0),
        stability: frac(&|o| o.1),
        deviation: frac(&|o| o.2.iter().any(|&b| b)),
        deviation_parts: [0, 1, 2, 3].map(|j| frac(&|o| o.2[j])),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthTrend {
    pub contraction_nondecreasing: bool,
    pub stability_nondecreasing: bool,
    pub deviation_nonincreasing: bool,
}

impl WidthTrend {
    pub fn of(reports: &[WidthReport]) -> Self {
        let pick = |f: fn(&WidthReport) -> Estimate| reports.iter().map(f).collect::<Vec<_>>();
        Self {
            contraction_nondecreasing: trend_nondecreasing(&pick(|r| r.contraction), Z_SLACK),
            stability_nondecreasing: trend_nondecreasing(&pick(|r| r.stability), Z_SLACK),
            deviation_nonincreasing: trend_nonincreasing(&pick(|r| r.deviation), Z_SLACK),
        }
    }

    pub fn pass(&self) -> bool {
        self.contraction_nondecreasing
            && self.stability_nondecreasing
            && self.deviation_nonincreasing
    }
}

/// How the horizon of a rate estimate is chosen for each population size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeRule {
    Fixed {
        t: f64,
    },
    /// `max(ln ln N, 5 T)`.
    LogLogOrScale,
}

impl TimeRule {
    pub fn eval(&self, n: usize, scales: &Scales) -> f64 {
        match *self {
            TimeRule::Fixed { t } => t,
            TimeRule::LogLogOrScale => (n as f64).ln().ln().max(5.0 * scales.cal_t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub t: f64,
    pub rate: Estimate,
    /// `ln N / (ln ln N)^2`.
    pub envelope: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares constant of `rate = C * envelope` through the origin.
    pub c_fit: f64,
    /// Largest ratio, the smallest constant bounding every estimate.
    pub c_max: f64,
    /// Largest ratio over smallest; infinite if some ratio is not positive.
    pub ratio_spread: f64,
    /// Adjacent estimates never drop by more than the slack.
    pub nondecreasing: bool,
}

/// Rate estimates over a grid of population sizes. Size `n` uses the streams
/// of `runner.sub(n)`.
pub fn rate_sweep(
    ns: &[usize],
    base: &Params,
    w: WChoice,
    rule: TimeRule,
    reps: u64,
    runner: &Runner,
) -> Result<SweepReport> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let params = Params { n, ..*base };
        let scales = Scales::new(n, w)?;
        let t = rule.eval(n, &scales);
        let rate = estimate_rate(&params, t, reps, &runner.sub(n as u64))?;
        let envelope = theorem_envelope(n, 1.0);
        rows.push(SweepRow {
            n,
            t,
            rate,
            envelope,
            ratio: rate.mean / envelope,
        });
    }
    let c_fit = rows.iter().map(|r| r.rate.mean * r.envelope).sum::<f64>()
        / rows.iter().map(|r| r.envelope * r.envelope).sum::<f64>();
    let c_max = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let c_min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let ratio_spread = if c_min > 0.0 {
        c_max / c_min
    } else {
        f64::INFINITY
    };
    let rates: Vec<Estimate> = rows.iter().map(|r| r.rate).collect();
    Ok(SweepReport {
        nondecreasing: trend_nondecreasing(&rates, Z_SLACK),
        rows,
        c_fit,
        c_max,
        ratio_spread,
    })
}
