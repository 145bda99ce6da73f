//! Exact transient mean fitness for very small populations.
//!
//! The mean fitness moves by a state-dependent drift that only depends on
//! the configuration up to translation, so
//! `E[xbar_t] = xbar_0 + E int_0^t r(X_s) ds` with `r` the drift. The chain
//! is therefore run on configurations shifted to have minimum 0, keeping
//! those of width at most `2 * radius`. Transitions that would exceed that
//! width go to an absorbing sink whose mass is reported as leakage.
//!
//! Two independent solvers are provided: uniformization on a sparse
//! generator over sorted configurations, and a dense matrix exponential of
//! the reward-augmented generator over ordered configurations.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Params;
use crate::population::Population;

pub const DEFAULT_STATE_LIMIT: usize = 100_000;

/// Stop the Poisson series once the remaining tail is below this.
const SERIES_TOL: f64 = 1e-14;
/// Largest uniformization mass `lambda * h` handled in one step.
const MAX_STEP_MASS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMean {
    pub value: f64,
    /// Probability of having left the truncated state space by time `t`.
    pub leakage: f64,
    pub states: usize,
    /// Leakage exceeded the caller's tolerance.
    pub flagged: bool,
}

fn normalize(mut xs: Vec<i64>) -> Vec<i64> {
    xs.sort_unstable();
    let lo = xs[0];
    xs.iter_mut().for_each(|x| *x -= lo);
    xs
}

/// Drift of the mean fitness in configuration `xs`.
fn drift(params: &Params, xs: &[i64]) -> f64 {
    let n = xs.len() as f64;
    let mut sq = 0.0;
    for &a in xs {
        for &b in xs {
            if a > b {
                sq += ((a - b) as f64).powi(2);
            }
        }
    }
    params.mu * (2.0 * params.q - 1.0) + params.gamma / (n * n) * sq
}

/// Every single-event successor of `xs` with its rate, before translation.
fn successors(params: &Params, xs: &[i64], mut emit: impl FnMut(Vec<i64>, f64)) {
    let n = xs.len();
    let nf = n as f64;
    for i in 0..n {
        for (step, p) in [(1, params.q), (-1, 1.0 - params.q)] {
            if p > 0.0 {
                let mut y = xs.to_vec();
                y[i] += step;
                emit(y, params.mu * p);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j || xs[i] == xs[j] {
                continue;
            }
            let mut rate = 1.0 / nf;
            if xs[i] > xs[j] {
                rate += params.gamma / nf * (xs[i] - xs[j]) as f64;
            }
            let mut y = xs.to_vec();
            y[j] = xs[i];
            emit(y, rate);
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_inputs(params: &Params, initial: &Population, radius: usize, t: f64) -> Result<()> {
    params.validate_neutral_allowed()?;
    if initial.n() != params.n {
        return Err(Error::InvalidParams(format!(
            "population has {} individuals but n = {}",
            initial.n(),
            params.n
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "t must be finite and >= 0 (got {t})"
        )));
    }
    if initial.width() > 2 * radius as i64 {
        return Err(Error::InvalidParams(format!(
            "initial width {} exceeds the truncation width {}",
            initial.width(),
            2 * radius
        )));
    }
    Ok(())
}

struct SparseChain {
    /// `(target, rate)` per state; target `None` is the sink.
    out: Vec<Vec<(Option<usize>, f64)>>,
    exit: Vec<f64>,
    reward: Vec<f64>,
}

fn build_sorted(
    params: &Params,
    radius: usize,
    limit: usize,
) -> Result<(SparseChain, HashMap<Vec<i64>, usize>)> {
    let n = params.n;
    let top = 2 * radius as i64;
    let count = binomial(top as usize + n - 1, n - 1);
    if count > limit as f64 {
        return Err(Error::StateSpaceTooLarge {
            states: count.min(usize::MAX as f64) as usize,
            limit,
        });
    }
    // sorted tuples 0 = x_0 <= x_1 <= ... <= x_{n-1} <= top
    let mut states: Vec<Vec<i64>> = vec![vec![0]];
    for _ in 1..n {
        states = states
            .into_iter()
            .flat_map(|s| {
                let last = *s.last().unwrap();
                (last..=top).map(move |v| {
                    let mut t = s.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    let index: HashMap<Vec<i64>, usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let mut chain = SparseChain {
        out: Vec::with_capacity(states.len()),
        exit: Vec::with_capacity(states.len()),
        reward: Vec::with_capacity(states.len()),
    };
    for s in &states {
        let mut acc: Vec<(Option<usize>, f64)> = Vec::new();
        successors(params, s, |y, rate| {
            let y = normalize(y);
            let target = if *y.last().unwrap() > top {
                None
            } else {
                Some(index[&y])
            };
            match acc.iter_mut().find(|e| e.0 == target) {
                Some(e) => e.1 += rate,
                None => acc.push((target, rate)),
            }
        });
        chain.exit.push(acc.iter().map(|e| e.1).sum());
        chain.reward.push(drift(params, s));
        chain.out.push(acc);
    }
    Ok((chain, index))
}

/// `E[xbar_t]` by uniformization. Each step of mass at most
/// `MAX_STEP_MASS` propagates the distribution and accumulates the expected
/// drift `(1/lambda) sum_k (pi P^k r) P(Poisson(lambda h) > k)`.
pub fn ctmc_exact_xbar(
    params: &Params,
    initial: &Population,
    radius: usize,
    t: f64,
    leak_tol: f64,
) -> Result<ExactMean> {
    check_inputs(params, initial, radius, t)?;
    let (chain, index) = build_sorted(params, radius, DEFAULT_STATE_LIMIT)?;
    let s = chain.exit.len();
    let lambda = chain.exit.iter().cloned().fold(0.0, f64::max).max(1e-300);

    let start = index[&normalize(initial.fitnesses().to_vec())];
    let mut pi = vec![0.0; s];
    pi[start] = 1.0;
    let mut sink = 0.0;
    let mut integral = 0.0;

    let steps = ((lambda * t) / MAX_STEP_MASS).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let m = lambda * h;
    let apply = |v: &[f64], sink_in: f64| -> (Vec<f64>, f64) {
        let mut w: Vec<f64> = v
            .iter()
            .zip(&chain.exit)
            .map(|(p, e)| p * (1.0 - e / lambda))
            .collect();
        let mut sink_out = sink_in;
        for (i, outs) in chain.out.iter().enumerate() {
            if v[i] == 0.0 {
                continue;
            }
            for &(j, rate) in outs {
                let flow = v[i] * rate / lambda;
                match j {
                    Some(j) => w[j] += flow,
                    None => sink_out += flow,
                }
            }
        }
        (w, sink_out)
    };
    for _ in 0..steps {
        if m == 0.0 {
            break;
        }
        let mut weight = (-m).exp();
        let mut tail = 1.0 - weight;
        let mut v = pi.clone();
        let mut v_sink = sink;
        let mut next = vec![0.0; s];
        let mut next_sink = 0.0;
        let mut k = 0u64;
        loop {
            for i in 0..s {
                next[i] += weight * v[i];
            }
            next_sink += weight * v_sink;
            let dot: f64 = v.iter().zip(&chain.reward).map(|(a, b)| a * b).sum();
            integral += dot * tail.max(0.0) / lambda;
            if tail < SERIES_TOL && k as f64 > m {
                break;
            }
            (v, v_sink) = apply(&v, v_sink);
            k += 1;
            weight *= m / k as f64;
            tail -= weight;
        }
        pi = next;
        sink = next_sink;
    }
    let leakage = sink.clamp(0.0, 1.0);
    Ok(ExactMean {
        value: initial.xbar() + integral,
        leakage,
        states: s,
        flagged: leakage > leak_tol,
    })
}

/// Same quantity by a dense matrix exponential over ordered configurations,
/// using `exp(t [[Q, r], [0, 0]])`, whose top-right block is
/// `int_0^t exp(Q s) r ds`.
pub fn ctmc_dense_xbar(
    params: &Params,
    initial: &Population,
    radius: usize,
    t: f64,
) -> Result<ExactMean> {
    check_inputs(params, initial, radius, t)?;
    let n = params.n;
    let side = 2 * radius + 1;
    let count = side.checked_pow(n as u32).unwrap_or(usize::MAX);
    if count > 2_000 {
        return Err(Error::StateSpaceTooLarge {
            states: count,
            limit: 2_000,
        });
    }
    // ordered tuples in [0, 2 radius]^n with minimum 0
    let states: Vec<Vec<i64>> = (0..count)
        .map(|mut c| {
            (0..n)
                .map(|_| {
                    let d = (c % side) as i64;
                    c /= side;
                    d
                })
                .collect::<Vec<i64>>()
        })
        .filter(|v| v.iter().min() == Some(&0))
        .collect();
    let index: HashMap<&[i64], usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_slice(), i))
        .collect();
    let s = states.len();
    // states, sink, reward accumulator
    let dim = s + 2;
    let sink = s;
    let acc = s + 1;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let top = 2 * radius as i64;
    for (i, x) in states.iter().enumerate() {
        successors(params, x, |y, rate| {
            let lo = *y.iter().min().unwrap();
            let y: Vec<i64> = y.iter().map(|v| v - lo).collect();
            let j = if y.iter().any(|&v| v > top) {
                sink
            } else {
                index[y.as_slice()]
            };
            a[(i, j)] += rate;
            a[(i, i)] -= rate;
        });
        a[(i, acc)] = drift(params, x);
    }
    let e = (a * t).exp();
    let lo = initial.xmin();
    let start: Vec<i64> = initial.fitnesses().iter().map(|v| v - lo).collect();
    let row = index[start.as_slice()];
    let leakage = e[(row, sink)].clamp(0.0, 1.0);
    Ok(ExactMean {
        value: initial.xbar() + e[(row, acc)],
        leakage,
        states: s,
        flagged: false,
    })
}
