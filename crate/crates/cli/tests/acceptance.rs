//! Acceptance checks. Prints one line per criterion and exits nonzero if any
//! fails. Pass criterion numbers as arguments to run a subset.
//!
//! Replicates run on every available core unless `MORAN_WORKERS` says
//! otherwise; results depend only on the seeds.

use std::f64::consts::E;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use moran_cli::commands::tail_tables;
use moran_core::branching::DEFAULT_PARTICLE_CAP;
use moran_core::experiments::{
    check_prop_bounds, coupling_check, oracle_check, rate_sweep, sample_xbar, width_contraction,
    CouplingKind, Runner, TailFamily, TimeRule, WidthTrend,
};
use moran_core::init::InitialProfile;
use moran_core::stats::Estimate;
use moran_core::{Params, Scales, WChoice};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (u32, &'static str, fn() -> Outcome);

const SEED: u64 = 20_240_601;
/// Standard errors of slack for every statistical comparison.
const Z: f64 = 3.0;

fn runner(tag: u64) -> Runner {
    let workers = std::env::var("MORAN_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    Runner::new(SEED, workers).sub(tag)
}

fn neutral_drift() -> Outcome {
    let (n, mu, t, reps) = (50, 1.0, 2.0, 10_000);
    let zeros = InitialProfile::AllZero.build(n)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, q) in [0.1, 0.5, 1.0].into_iter().enumerate() {
        let params = Params::neutral_allowed(n, mu, q, 0.0)?;
        let xs = sample_xbar(&params, &zeros, t, reps, &runner(100 + i as u64))?;
        let est = Estimate::from_samples(&xs);
        let target = mu * (2.0 * q - 1.0) * t;
        ok &= est.consistent_with(target, Z);
        detail.push(format!(
            "q={q}: {:.4} (se {:.4}) vs {target}",
            est.mean, est.se
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn oracle() -> Outcome {
    let params = Params::new(2, 1.0, 0.5, 1.0)?;
    let r = oracle_check(&params, 6, 1.0, 100_000, 1e-6, &runner(200))?;
    let leak_ok = r.exact.leakage < 1e-6;
    let mc_ok = r.monte_carlo.consistent_with(r.exact.value, Z);
    Ok((
        leak_ok && mc_ok && r.routes_agree,
        format!(
            "exact {:.6} (leakage {:.1e}), monte carlo {:.6} (se {:.6}), exact routes agree: {}",
            r.exact.value, r.exact.leakage, r.monte_carlo.mean, r.monte_carlo.se, r.routes_agree
        ),
    ))
}

fn couplings() -> Outcome {
    let k = 3;
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [10, 20] {
        let params = Params::new(n, 1.0, 0.5, 1.0)?;
        let zeros = InitialProfile::AllZero.build(n)?;
        let spread = InitialProfile::TwoPointBalanced { height: 2 }.build(n)?;
        let cases = [
            ("back", CouplingKind::BackSpeed, &zeros, 2.0),
            ("front", CouplingKind::UpBound { k }, &spread, 1.0),
            (
                "tracked",
                CouplingKind::Tracked { k, below: 1 },
                &spread,
                1.0,
            ),
        ];
        for (i, (name, kind, initial, t)) in cases.into_iter().enumerate() {
            let tally = coupling_check(
                kind,
                &params,
                initial,
                t,
                1_000,
                &runner(300 + 10 * n as u64 + i as u64),
            )?;
            ok &= tally.pass() && tally.runs == 1_000;
            detail.push(format!(
                "N={n} {name}: {}/{}/{} violations, {} ended early",
                tally.dominance, tally.welldef, tally.pairing, tally.ended_early
            ));
        }
    }
    Ok((ok, detail.join("; ")))
}

fn factorial(l: u64) -> f64 {
    (1..=l).map(|i| i as f64).product()
}

/// The tail bounds written out with plain powers and factorials.
fn bound_by_hand(family: TailFamily, n: f64, t: f64, mu: f64, gamma: f64, l: u64) -> f64 {
    let p = (t * mu).powi(l as i32);
    match family {
        TailFamily::Yule => n * p * t.exp() / factorial(l),
        TailFamily::TypeLinear => {
            n * p * ((gamma * (2.0 + l as f64) + 1.0) * t).exp() / factorial(l)
        }
        TailFamily::BackSpeed => n * p * t.exp() / factorial(l),
        TailFamily::UpBound | TailFamily::Tracked => {
            let w0 = if family == TailFamily::Tracked {
                2.0
            } else {
                0.0
            };
            2.0 * n * p * ((gamma * (w0 + 2.0 * l as f64) + mu + 1.0) * t).exp() / factorial(l - 1)
        }
    }
}

fn tails() -> Outcome {
    let params = Params::new(10, 1.0, 0.5, 1.0)?;
    let rows = tail_tables(
        &params,
        &[10, 50],
        10_000,
        DEFAULT_PARTICLE_CAP,
        &runner(400),
    )?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{:?} N={} t={} l={}", r.family, r.n, r.t, r.l))
        .collect();
    let mismatched = rows
        .iter()
        .filter(|r| {
            let hand = bound_by_hand(r.family, r.n as f64, r.t, params.mu, params.gamma, r.l);
            let off = |a: f64, b: f64| (a - b).abs() > 1e-10 * b;
            off(r.bound.raw, hand) || off(r.bound.clamped, hand.min(1.0))
        })
        .count();
    let tightest = rows
        .iter()
        .filter(|r| r.bound.clamped < 1.0)
        .map(|r| r.empirical.mean / r.bound.clamped)
        .fold(0.0, f64::max);
    Ok((
        failed.is_empty() && mismatched == 0,
        format!(
            "{} rows, {} above bound {:?}, {mismatched} bound values off the hand formula, largest empirical/bound {tightest:.3}",
            rows.len(),
            failed.len(),
            failed
        ),
    ))
}

/// `sum_{i >= k} x^i / i!` by summing terms until they stop mattering.
fn exp_tail_exact(x: f64, k: u64) -> f64 {
    let mut term = (1..=k).fold(1.0, |acc, i| acc * x / i as f64);
    let mut sum = 0.0;
    let mut i = k;
    while term > sum * 1e-18 || i < k + 2 {
        sum += term;
        i += 1;
        term *= x / i as f64;
    }
    sum
}

fn exp_tail() -> Outcome {
    use moran_core::bounds::exp_tail_bound;
    let at = exp_tail_bound(1.0, 2);
    let mut ok = (at - E / 2.0).abs() <= 1e-12 * E && E - 2.0 < at;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for step in 1..=1000 {
        let x = step as f64 / 100.0;
        for k in 0..=30 {
            let exact = exp_tail_exact(x, k);
            let bound = exp_tail_bound(x, k);
            checked += 1;
            worst = worst.max(exact / bound);
            ok &= exact <= bound * (1.0 + 1e-12);
        }
    }
    Ok((
        ok,
        format!("bound(1,2) = {at:.15} vs e/2 = {:.15}, {checked} points, largest exact/bound {worst:.15}", E / 2.0),
    ))
}

fn props() -> Outcome {
    let n = 10_000;
    let params = Params::new(n, 1.0, 0.5, 1.0)?;
    let scales = Scales::new(n, WChoice::default())?;
    let r = check_prop_bounds(&params, &scales, 1_000, &runner(600))?;
    let parts = [
        ("front", &r.restarted_front),
        ("excursion rate", &r.excursion_rate),
        ("decomposition", &r.decomposition),
    ];
    let ok = parts.iter().all(|(_, c)| c.pass == Some(true));
    let detail = parts
        .iter()
        .map(|(name, c)| {
            format!(
                "{name} {:.4} (se {:.4}) vs {:.4}",
                c.estimate.mean, c.estimate.se, c.bound
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok((ok, format!("W={} T={:.3}: {detail}", r.cal_w, r.cal_t)))
}

fn width_trends() -> Outcome {
    let mut reports = Vec::new();
    for n in [1_000, 10_000, 100_000] {
        let params = Params::new(n, 1.0, 0.5, 1.0)?;
        let scales = Scales::new(n, WChoice::default())?;
        let profile = InitialProfile::TwoPointBalanced {
            height: scales.cal_w,
        };
        reports.push(width_contraction(
            &params,
            &scales,
            profile,
            500,
            &runner(700 + n as u64),
        )?);
    }
    let trend = WidthTrend::of(&reports);
    let detail = reports
        .iter()
        .map(|r| {
            format!(
                "N={}: P(B<=T) {:.3}, P(F>T) {:.3}, P(A) {:.3}",
                r.n, r.contraction.mean, r.stability.mean, r.deviation.mean
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok((
        trend.contraction_nondecreasing
            && trend.stability_nondecreasing
            && trend.deviation_nonincreasing,
        detail,
    ))
}

fn rate_envelope() -> Outcome {
    let base = Params::new(100, 1.0, 0.1, 1.0)?;
    let ns = [100, 1_000, 10_000, 100_000];
    let r = rate_sweep(
        &ns,
        &base,
        WChoice::default(),
        TimeRule::LogLogOrScale,
        500,
        &runner(800),
    )?;
    let rows = r
        .rows
        .iter()
        .map(|row| {
            format!(
                "N={}: rate {:.4} (se {:.4}) ratio {:.3}",
                row.n, row.rate.mean, row.rate.se, row.ratio
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok((
        r.nondecreasing && r.ratio_spread < 4.0,
        format!("{rows}; spread {:.3}", r.ratio_spread),
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[model]\nn = 40\ngamma = 0.5\n[run]\nt_end = 3.0\nreplicates = 8\nseed = 99\nlabels = true\nevent_rows = true\n",
    )?;
    let read = |workers: &str| -> Result<Vec<u8>, Box<dyn std::error::Error>> {
        let out = dir.path().join(format!("out-{workers}"));
        let status = Command::new(env!("CARGO_BIN_EXE_moran"))
            .arg("simulate")
            .arg("--config")
            .arg(&cfg)
            .args(["--workers", workers, "--out"])
            .arg(&out)
            .status()?;
        if !status.success() {
            return Err(format!("simulate exited with {status}").into());
        }
        Ok(fs::read(out.join("trajectory.csv"))?)
    };
    let one = read("1")?;
    let four = read("4")?;
    Ok((
        one == four,
        format!(
            "{} bytes with 1 worker, {} bytes with 4",
            one.len(),
            four.len()
        ),
    ))
}

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 9] = [
        (1, "neutral drift", neutral_drift),
        (2, "exact chain oracle", oracle),
        (3, "coupling dominance", couplings),
        (4, "tail bounds", tails),
        (5, "exponential tail bound", exp_tail),
        (6, "excursion bounds", props),
        (7, "width trends", width_trends),
        (8, "rate envelope", rate_envelope),
        (9, "determinism", determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!(
            "criterion {id} {name}: {} [{:.1}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
