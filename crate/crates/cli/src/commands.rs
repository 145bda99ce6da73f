//! The subcommands, each turning a resolved configuration into tables and
//! pass/fail checks.

use moran_core::coupling::{couple_backspeed, couple_tracked, couple_upbound, CouplingReport};
use moran_core::experiments::{
    check_prop_bounds, oracle_check, rate_sweep, tail_backspeed, tail_tracked, tail_type_linear,
    tail_upbound, tail_yule, width_contraction, BoundCheck, Runner, TailRow, TimeRule, WidthReport,
    WidthTrend,
};
use moran_core::init::InitialProfile;
use moran_core::stats::Estimate;
use moran_core::trajectory::{run_trajectory, RecorderSpec, RowSource, Trajectory};
use moran_core::{Params, Scales};
use serde_json::json;

use crate::config::{CouplingChoice, Resolved, TRule};
use crate::output::{Cell, Check, Outcome, Table};
use crate::Command;

pub type CmdResult = Result<Outcome, Box<dyn std::error::Error>>;

fn runner(cfg: &Resolved) -> Runner {
    Runner::new(cfg.seed, cfg.workers)
}

pub fn run(cmd: Command, cfg: &Resolved) -> CmdResult {
    match cmd {
        Command::Simulate => simulate(cfg),
        Command::Sweep => sweep(cfg),
        Command::CoupleCheck => couple(cfg),
        Command::TailCheck => tails(cfg),
        Command::WidthExp => width(cfg),
        Command::PropCheck => props(cfg),
        Command::OracleCheck => oracle(cfg),
    }
}

fn source_name(s: RowSource) -> &'static str {
    match s {
        RowSource::Initial => "initial",
        RowSource::Event => "event",
        RowSource::Grid => "grid",
    }
}

fn simulate(cfg: &Resolved) -> CmdResult {
    let initial = cfg.profile()?.build(cfg.params.n)?;
    let spec = RecorderSpec {
        grid_points: cfg.grid_points,
        event_rows: cfg.event_rows,
        labels: cfg.labels,
        ..RecorderSpec::default()
    };
    let runs: Vec<Trajectory> = runner(cfg).map(cfg.replicates, |_, rng| {
        run_trajectory(&cfg.params, initial.clone(), cfg.t_end, spec, rng)
    })?;
    let mut header = vec!["replicate", "source", "t", "xmax", "xmin", "xbar", "width"];
    if cfg.labels {
        header.extend(["a", "b", "c", "a_prime", "b_prime", "c_prime"]);
    }
    let mut table = Table::new("trajectory", &header);
    let mut ends = Vec::new();
    for (i, tr) in runs.iter().enumerate() {
        for row in &tr.rows {
            let s = &row.snap;
            let mut cells: Vec<Cell> = vec![
                i.into(),
                source_name(row.source).into(),
                s.t.into(),
                s.xmax.into(),
                s.xmin.into(),
                s.xbar.into(),
                s.width.into(),
            ];
            if let Some(tallies) = s.tallies {
                cells.extend(tallies.iter().map(|&c| Cell::from(c)));
            }
            table.push(cells);
        }
        let e = tr.last();
        ends.push(json!({
            "replicate": i,
            "events": tr.summary.events,
            "t": e.t,
            "xbar": e.xbar,
            "xmax": e.xmax,
            "xmin": e.xmin,
            "width": e.width,
        }));
    }
    let xbars: Vec<f64> = runs.iter().map(|t| t.last().xbar).collect();
    Ok(Outcome {
        tables: vec![table],
        checks: Vec::new(),
        results: json!({ "end": ends, "mean_xbar": Estimate::from_samples(&xbars) }),
    })
}

fn sweep(cfg: &Resolved) -> CmdResult {
    let rule = match cfg.t_rule {
        TRule::Fixed => TimeRule::Fixed { t: cfg.t_end },
        TRule::LogLog => TimeRule::LogLogOrScale,
    };
    let report = rate_sweep(
        &cfg.n_grid,
        &cfg.params,
        cfg.w,
        rule,
        cfg.replicates,
        &runner(cfg),
    )?;
    let mut table = Table::new("sweep", &["n", "t", "rate", "se", "envelope", "ratio"]);
    for r in &report.rows {
        table.push(vec![
            r.n.into(),
            r.t.into(),
            r.rate.mean.into(),
            r.rate.se.into(),
            r.envelope.into(),
            r.ratio.into(),
        ]);
    }
    let checks = vec![
        Check::new(
            "rate-nondecreasing",
            report.nondecreasing,
            "adjacent rates within 3 pooled standard errors",
        ),
        Check::new(
            "ratio-spread",
            report.ratio_spread < cfg.max_ratio_spread,
            format!(
                "max/min ratio {} < {}",
                report.ratio_spread, cfg.max_ratio_spread
            ),
        ),
    ];
    Ok(Outcome {
        tables: vec![table],
        checks,
        results: serde_json::to_value(&report)?,
    })
}

fn couple(cfg: &Resolved) -> CmdResult {
    let initial = cfg.profile()?.build(cfg.params.n)?;
    let x = initial.xmax() - cfg.below;
    let reports: Vec<CouplingReport> = runner(cfg).map(cfg.replicates, |_, rng| {
        let pop = initial.clone();
        match cfg.coupling {
            CouplingChoice::Backspeed => couple_backspeed(&cfg.params, pop, cfg.t_end, rng),
            CouplingChoice::Upbound => couple_upbound(&cfg.params, pop, cfg.k, cfg.t_end, rng),
            CouplingChoice::Tracked => couple_tracked(&cfg.params, pop, x, cfg.k, cfg.t_end, rng),
        }
    })?;
    let mut table = Table::new(
        "coupling",
        &[
            "run",
            "horizon",
            "dominance_violations",
            "welldef_violations",
            "pairing_violations",
            "observed_tk",
            "back_drop",
            "front_sup",
            "tracked_depth",
            "z_max_offset",
            "z_population",
        ],
    );
    for (i, r) in reports.iter().enumerate() {
        table.push(vec![
            i.into(),
            r.horizon.into(),
            r.dominance_violations.into(),
            r.welldef_violations.into(),
            r.pairing_violations.into(),
            r.observed_tk.into(),
            r.back_drop.into(),
            r.front_sup.into(),
            r.tracked_depth.into(),
            r.z_max_offset.into(),
            r.z_population.into(),
        ]);
    }
    let total = |f: fn(&CouplingReport) -> u64| reports.iter().map(f).sum::<u64>();
    let (dom, wd, pair) = (
        total(|r| r.dominance_violations),
        total(|r| r.welldef_violations),
        total(|r| r.pairing_violations),
    );
    let checks = vec![
        Check::new("dominance", dom == 0, format!("{dom} violations")),
        Check::new("well-definedness", wd == 0, format!("{wd} violations")),
        Check::new("pairing", pair == 0, format!("{pair} violations")),
    ];
    Ok(Outcome {
        tables: vec![table],
        checks,
        results: json!({
            "runs": reports.len(),
            "dominance_violations": dom,
            "welldef_violations": wd,
            "pairing_violations": pair,
            "ended_early": reports.iter().filter(|r| r.observed_tk.is_some()).count(),
        }),
    })
}

/// The standard tail-bound grids. `mu`, `q` and `gamma` come from `params`;
/// population sizes of the back-speed rows come from `back_ns`, those of the
/// front rows from `params.n`.
pub fn tail_tables(
    params: &Params,
    back_ns: &[usize],
    reps: u64,
    particle_cap: u64,
    runner: &Runner,
) -> Result<Vec<TailRow>, moran_core::Error> {
    let mu = params.mu;
    let ls: Vec<u64> = (1..=6).collect();
    let front_ls: Vec<u64> = (2..=6).collect();
    let mut rows = tail_yule(2, 1.0, mu, 1.0, &ls, reps, particle_cap, &runner.sub(1))?;
    rows.extend(tail_type_linear(
        3,
        2,
        params.gamma,
        mu,
        0.5,
        &ls,
        reps,
        particle_cap,
        &runner.sub(2),
    )?);
    for &n in back_ns {
        let p = Params { n, ..*params };
        rows.extend(tail_backspeed(
            &p,
            &[0.5, 1.0, 2.0],
            &ls,
            reps,
            &runner.sub(3 + n as u64),
        )?);
    }
    let zeros = InitialProfile::AllZero.build(params.n)?;
    rows.extend(tail_upbound(
        params,
        &zeros,
        0.5,
        &front_ls,
        reps,
        &runner.sub(4),
    )?);
    let two = InitialProfile::TwoPointBalanced { height: 2 }.build(params.n)?;
    rows.extend(tail_tracked(
        params,
        &two,
        two.xmax() - 1,
        0.5,
        &front_ls,
        reps,
        &runner.sub(5),
    )?);
    Ok(rows)
}

fn tails(cfg: &Resolved) -> CmdResult {
    let back_ns = if cfg.n_grid.is_empty() {
        vec![10, 50]
    } else {
        cfg.n_grid.clone()
    };
    let rows = tail_tables(
        &cfg.params,
        &back_ns,
        cfg.replicates,
        cfg.particle_cap,
        &runner(cfg),
    )?;
    let mut table = Table::new(
        "tails",
        &[
            "family",
            "n",
            "t",
            "l",
            "empirical",
            "se",
            "bound_raw",
            "bound_clamped",
            "pass",
        ],
    );
    for r in &rows {
        table.push(vec![
            serde_json::to_value(r.family)?
                .as_str()
                .unwrap_or("")
                .into(),
            r.n.into(),
            r.t.into(),
            r.l.into(),
            r.empirical.mean.into(),
            r.empirical.se.into(),
            r.bound.raw.into(),
            r.bound.clamped.into(),
            r.pass.into(),
        ]);
    }
    let bad = rows.iter().filter(|r| !r.pass).count();
    Ok(Outcome {
        tables: vec![table],
        checks: vec![Check::new(
            "tails-below-bounds",
            bad == 0,
            format!("{bad} of {} rows above bound + 3 se", rows.len()),
        )],
        results: json!({ "rows": rows.len(), "failed_rows": bad }),
    })
}

fn width(cfg: &Resolved) -> CmdResult {
    let mut reports: Vec<WidthReport> = Vec::new();
    for &n in &cfg.n_grid {
        let params = Params { n, ..cfg.params };
        let scales = Scales::new(n, cfg.w)?;
        let profile = cfg.profile_for(n)?;
        reports.push(width_contraction(
            &params,
            &scales,
            profile,
            cfg.replicates,
            &runner(cfg).sub(n as u64),
        )?);
    }
    let mut table = Table::new(
        "width",
        &[
            "n",
            "w0",
            "horizon",
            "p_contraction",
            "se_contraction",
            "p_stability",
            "se_stability",
            "p_deviation",
            "se_deviation",
        ],
    );
    for r in &reports {
        table.push(vec![
            r.n.into(),
            r.w0.into(),
            r.horizon.into(),
            r.contraction.mean.into(),
            r.contraction.se.into(),
            r.stability.mean.into(),
            r.stability.se.into(),
            r.deviation.mean.into(),
            r.deviation.se.into(),
        ]);
    }
    let trend = WidthTrend::of(&reports);
    let checks = vec![
        Check::new(
            "contraction-nondecreasing",
            trend.contraction_nondecreasing,
            "P(B <= T) over the grid",
        ),
        Check::new(
            "stability-nondecreasing",
            trend.stability_nondecreasing,
            "P(F > T) over the grid",
        ),
        Check::new(
            "deviation-nonincreasing",
            trend.deviation_nonincreasing,
            "P(A1 u A2 u A1' u A2') over the grid",
        ),
    ];
    Ok(Outcome {
        tables: vec![table],
        checks,
        results: json!({ "reports": reports, "trend": trend }),
    })
}

fn bound_check(name: &str, c: &BoundCheck) -> Option<Check> {
    c.pass.map(|pass| {
        Check::new(
            name,
            pass,
            format!(
                "{} (se {}) vs bound {} + 3 se",
                c.estimate.mean, c.estimate.se, c.bound
            ),
        )
    })
}

fn props(cfg: &Resolved) -> CmdResult {
    let scales = Scales::new(cfg.params.n, cfg.w)?;
    let r = check_prop_bounds(&cfg.params, &scales, cfg.replicates, &runner(cfg))?;
    let mut table = Table::new("props", &["check", "estimate", "se", "n", "bound", "pass"]);
    let entries = [
        ("gain-observed", &r.gain_observed),
        ("gain-direct", &r.gain_direct),
        ("restarted-front", &r.restarted_front),
        ("excursion-rate", &r.excursion_rate),
        ("decomposition", &r.decomposition),
    ];
    let mut checks = Vec::new();
    for (name, c) in entries {
        table.push(vec![
            name.into(),
            c.estimate.mean.into(),
            c.estimate.se.into(),
            c.estimate.n.into(),
            c.bound.into(),
            c.pass.into(),
        ]);
        if cfg.gain_checks || !name.starts_with("gain") {
            checks.extend(bound_check(name, c));
        }
    }
    Ok(Outcome {
        tables: vec![table],
        checks,
        results: serde_json::to_value(r)?,
    })
}

fn oracle(cfg: &Resolved) -> CmdResult {
    let r = oracle_check(
        &cfg.params,
        cfg.radius,
        cfg.t_end,
        cfg.replicates,
        cfg.leak_tol,
        &runner(cfg),
    )?;
    let mut table = Table::new("oracle", &["source", "value", "se", "leakage"]);
    table.push(vec![
        "exact".into(),
        r.exact.value.into(),
        Cell::Empty,
        r.exact.leakage.into(),
    ]);
    table.push(vec![
        "monte-carlo".into(),
        r.monte_carlo.mean.into(),
        r.monte_carlo.se.into(),
        Cell::Empty,
    ]);
    let checks = vec![
        Check::new(
            "leakage",
            !r.exact.flagged,
            format!("{} vs tolerance {}", r.exact.leakage, cfg.leak_tol),
        ),
        Check::new(
            "exact-routes-agree",
            r.routes_agree,
            format!(
                "sparse {:?} vs dense {:?} at radius {:?}",
                r.cross_sparse, r.cross_dense, r.cross_radius
            ),
        ),
        Check::new(
            "monte-carlo-matches",
            r.monte_carlo.consistent_with(r.exact.value, 3.0),
            format!(
                "|{} - {}| <= 3 * {}",
                r.monte_carlo.mean, r.exact.value, r.monte_carlo.se
            ),
        ),
    ];
    Ok(Outcome {
        tables: vec![table],
        checks,
        results: serde_json::to_value(r)?,
    })
}
