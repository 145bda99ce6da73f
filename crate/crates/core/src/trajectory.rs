//! Recording of piecewise-constant observables along a run.

use std::ops::ControlFlow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{evolve, Observer, RunSummary};
use crate::error::{Error, Result};
use crate::labels::{LabelEvents, LabelTallies, LabelTracker};
use crate::params::{Params, Scales};
use crate::population::{Event, Population};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecorderSpec {
    /// Number of uniform grid intervals on `[0, t_end]`; 0 disables the grid.
    pub grid_points: usize,
    /// Record a row at every event that changes an observable.
    pub event_rows: bool,
    pub labels: bool,
    pub event_cap: u64,
}

impl Default for RecorderSpec {
    fn default() -> Self {
        Self {
            grid_points: 100,
            event_rows: true,
            labels: false,
            event_cap: crate::engine::DEFAULT_EVENT_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowSource {
    Initial,
    Event,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub xmax: i64,
    pub xmin: i64,
    pub xbar: f64,
    pub width: i64,
    pub variance: f64,
    pub tallies: Option<LabelTallies>,
}

impl Snapshot {
    pub fn of(pop: &Population, tallies: Option<LabelTallies>) -> Self {
        Self {
            t: pop.time(),
            xmax: pop.xmax(),
            xmin: pop.xmin(),
            xbar: pop.xbar(),
            width: pop.width(),
            variance: pop.variance(),
            tallies,
        }
    }

    fn same_values(&self, other: &Snapshot) -> bool {
        self.xmax == other.xmax
            && self.xmin == other.xmin
            && self.xbar == other.xbar
            && self.width == other.width
            && self.variance == other.variance
            && self.tallies == other.tallies
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub source: RowSource,
    pub snap: Snapshot,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Rows in time order: the initial state, change rows and grid rows.
    pub rows: Vec<Row>,
    pub x0_plus: i64,
    pub w0: i64,
    pub labels: Option<LabelTracker>,
    /// State at the end of the run, whatever the recording options.
    pub end: Snapshot,
    pub summary: RunSummary,
}

impl Trajectory {
    /// The exact jump path: initial row followed by every change row.
    pub fn path(&self) -> impl Iterator<Item = &Snapshot> {
        self.rows
            .iter()
            .filter(|r| r.source != RowSource::Grid)
            .map(|r| &r.snap)
    }

    /// Initial row followed by the grid rows.
    pub fn grid(&self) -> impl Iterator<Item = &Snapshot> {
        self.rows
            .iter()
            .filter(|r| r.source != RowSource::Event)
            .map(|r| &r.snap)
    }

    pub fn last(&self) -> &Snapshot {
        &self.end
    }
}

struct Recorder {
    spec: RecorderSpec,
    grid_dt: f64,
    next_grid: usize,
    labels: Option<LabelTracker>,
    rows: Vec<Row>,
    last: Snapshot,
}

impl Recorder {
    fn tallies(&self) -> Option<LabelTallies> {
        self.labels.as_ref().map(|l| l.state.tallies())
    }

    /// Emits grid rows strictly before `t`, carrying the last values forward.
    fn flush_grid(&mut self, t: f64, inclusive: bool) {
        if self.spec.grid_points == 0 {
            return;
        }
        while self.next_grid <= self.spec.grid_points {
            let tg = self.next_grid as f64 * self.grid_dt;
            if tg > t || (!inclusive && tg == t) {
                break;
            }
            let mut snap = self.last;
            snap.t = tg;
            self.rows.push(Row {
                source: RowSource::Grid,
                snap,
            });
            self.next_grid += 1;
        }
    }
}

impl Observer for Recorder {
    fn before_event(&mut self, pop: &Population, event: &Event) {
        self.flush_grid(event.time, false);
        if let Some(l) = self.labels.as_mut() {
            l.before_event(pop, event);
        }
    }

    fn after_event(&mut self, pop: &Population, event: &Event) -> ControlFlow<()> {
        if let Some(l) = self.labels.as_mut() {
            let _ = l.after_event(pop, event);
        }
        let snap = Snapshot::of(pop, self.tallies());
        if !snap.same_values(&self.last) {
            self.last = snap;
            if self.spec.event_rows {
                self.rows.push(Row {
                    source: RowSource::Event,
                    snap,
                });
            }
        }
        ControlFlow::Continue(())
    }
}

/// Runs `initial` forward to `t_end`, recording observables. The result is
/// a deterministic function of the inputs and the state of `rng`.
pub fn run_trajectory<R: Rng + ?Sized>(
    params: &Params,
    initial: Population,
    t_end: f64,
    spec: RecorderSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParams(format!(
            "t_end must be finite and >= 0 (got {t_end})"
        )));
    }
    params.validate_neutral_allowed()?;
    if initial.n() != params.n {
        return Err(Error::InvalidParams(format!(
            "population has {} individuals but n = {}",
            initial.n(),
            params.n
        )));
    }
    let mut pop = initial;
    pop.set_time(0.0);
    let x0_plus = pop.xmax();
    let w0 = pop.width();
    let labels = spec.labels.then(|| LabelTracker::new(&pop));
    let first = Snapshot::of(&pop, labels.as_ref().map(|l| l.state.tallies()));
    let mut rec = Recorder {
        spec,
        grid_dt: if spec.grid_points > 0 {
            t_end / spec.grid_points as f64
        } else {
            0.0
        },
        next_grid: 1,
        labels,
        rows: vec![Row {
            source: RowSource::Initial,
            snap: first,
        }],
        last: first,
    };
    if t_end == 0.0 {
        return Ok(Trajectory {
            rows: rec.rows,
            x0_plus,
            w0,
            labels: rec.labels,
            end: first,
            summary: RunSummary {
                events: 0,
                end_time: 0.0,
                stopped_early: false,
            },
        });
    }
    let summary = evolve(&mut pop, params, t_end, spec.event_cap, rng, &mut rec)?;
    rec.flush_grid(t_end, true);
    let mut end = rec.last;
    end.t = pop.time();
    Ok(Trajectory {
        rows: rec.rows,
        x0_plus,
        w0,
        labels: rec.labels,
        end,
        summary,
    })
}

/// Deviation events of the label dynamics over `[0, T]`. They are checked at
/// every event, not only at recorded rows. Returns `None` for a trajectory
/// recorded without labels.
pub fn detect_label_events(traj: &Trajectory, scales: &Scales) -> Option<LabelEvents> {
    traj.labels.as_ref().map(|l| l.events_within(scales.cal_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::WChoice;
    use crate::rng::replicate_rng;

    #[test]
    fn zero_horizon_gives_single_row() {
        let p = Params::new(5, 1.0, 0.5, 1.0).unwrap();
        let mut rng = replicate_rng(1, 0);
        let tr = run_trajectory(
            &p,
            Population::uniform(5, 0).unwrap(),
            0.0,
            RecorderSpec::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(tr.rows.len(), 1);
        assert_eq!(tr.rows[0].source, RowSource::Initial);
    }

    #[test]
    fn grid_is_last_value_carried_forward() {
        let p = Params::new(8, 1.0, 0.5, 1.0).unwrap();
        let mut rng = replicate_rng(2, 0);
        let spec = RecorderSpec {
            grid_points: 40,
            ..RecorderSpec::default()
        };
        let tr =
            run_trajectory(&p, Population::uniform(8, 0).unwrap(), 4.0, spec, &mut rng).unwrap();
        let path: Vec<Snapshot> = tr.path().copied().collect();
        let grid: Vec<Snapshot> = tr.grid().copied().collect();
        assert_eq!(grid.len(), 41);
        for g in &grid {
            let at = path.iter().rev().find(|s| s.t <= g.t).unwrap();
            assert!(at.same_values(g), "grid row at {} disagrees", g.t);
        }
        assert!((grid.last().unwrap().t - 4.0).abs() < 1e-12);
        assert!(tr.rows.windows(2).all(|w| w[0].snap.t <= w[1].snap.t));
        // consecutive change rows always differ
        assert!(path.windows(2).all(|w| !w[0].same_values(&w[1])));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = Params::new(10, 1.0, 0.3, 2.0).unwrap();
        let run = || {
            let mut rng = replicate_rng(9, 3);
            let spec = RecorderSpec {
                labels: true,
                ..RecorderSpec::default()
            };
            run_trajectory(
                &p,
                Population::new((0..10).collect()).unwrap(),
                3.0,
                spec,
                &mut rng,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn static_population_has_no_label_events() {
        // a tiny horizon leaves no room for events in practice; check with
        // an explicitly empty run instead
        let p = Params::new(16, 1.0, 0.5, 1.0).unwrap();
        let mut rng = replicate_rng(0, 0);
        let spec = RecorderSpec {
            labels: true,
            ..RecorderSpec::default()
        };
        let pop = Population::new((0..16).map(|i| i % 2 * 12).collect()).unwrap();
        let tr = run_trajectory(&p, pop, 0.0, spec, &mut rng).unwrap();
        let scales = Scales::new(16, WChoice::default()).unwrap();
        assert!(!detect_label_events(&tr, &scales).unwrap().any());
    }

    fn neutral_mean(q: f64, reps: u64) -> (f64, f64) {
        let p = Params::neutral_allowed(50, 1.0, q, 0.0).unwrap();
        let spec = RecorderSpec {
            grid_points: 0,
            event_rows: false,
            ..RecorderSpec::default()
        };
        let xs: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = replicate_rng(77, r);
                run_trajectory(&p, Population::uniform(50, 0).unwrap(), 2.0, spec, &mut rng)
                    .unwrap()
                    .last()
                    .xbar
            })
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn neutral_drift_matches_mutation_bias() {
        // drift of the mean is mu (2q - 1) t when there is no selection
        for (q, target) in [(0.5, 0.0), (1.0, 2.0)] {
            let (mean, se) = neutral_mean(q, 2000);
            assert!(
                (mean - target).abs() <= 3.0 * se.max(1e-12),
                "q={q}: {mean} vs {target} (se {se})"
            );
        }
    }
}
