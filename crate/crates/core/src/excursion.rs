//! Decomposition of a path into wide-width excursions.
//!
//! With `W` the width scale: `t_1 = 0`; `s_n` is the first time at or after
//! `t_n` with width `>= 2W`; `t_{n+1}` is the first time at or after `s_n`
//! with width `< W`. The gain `Y_n` is the largest increase of the front
//! displacement over `[s_n, t_{n+1}]` relative to its value at `s_n`.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::engine::Observer;
use crate::error::{Error, Result};
use crate::population::{Event, Population};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionDecomposition {
    /// `(t_n, s_n)`; `s_n` is `None` when the width never reached `2W` again.
    pub pairs: Vec<(f64, Option<f64>)>,
    /// Gains of the excursions that started, in order.
    pub gains: Vec<i64>,
    /// Width at each excursion start.
    pub start_widths: Vec<i64>,
    /// The last excursion had not ended by the end of the path, so its gain
    /// only covers the observed part.
    pub last_truncated: bool,
    pub horizon: f64,
}

impl ExcursionDecomposition {
    /// Excursion starts `s_n`.
    pub fn starts(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().filter_map(|p| p.1)
    }

    /// `N_t = max{i : s_i <= t}`, 0 if none.
    pub fn count_by(&self, t: f64) -> usize {
        self.starts().take_while(|&s| s <= t).count()
    }

    /// Gains of excursions that ended within the path.
    pub fn complete_gains(&self) -> &[i64] {
        let n = self.gains.len() - usize::from(self.last_truncated);
        &self.gains[..n]
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Seeking,
    Inside { start_front: i64, best: i64 },
}

/// Streaming first-crossing scanner; feed it the path in time order.
#[derive(Debug, Clone)]
pub struct ExcursionScanner {
    cal_w: i64,
    phase: Phase,
    out: ExcursionDecomposition,
    last_t: f64,
}

impl ExcursionScanner {
    pub fn new(cal_w: i64) -> Self {
        Self {
            cal_w,
            phase: Phase::Seeking,
            out: ExcursionDecomposition {
                pairs: vec![(0.0, None)],
                gains: Vec::new(),
                start_widths: Vec::new(),
                last_truncated: false,
                horizon: 0.0,
            },
            last_t: 0.0,
        }
    }

    /// Number of excursions started so far.
    pub fn started(&self) -> usize {
        self.out.gains.len()
    }

    /// Gains so far; the last one is still growing while inside an excursion.
    pub fn gains(&self) -> &[i64] {
        &self.out.gains
    }

    pub fn in_excursion(&self) -> bool {
        matches!(self.phase, Phase::Inside { .. })
    }

    /// Value of the piecewise-constant path from time `t` on.
    pub fn push(&mut self, t: f64, width: i64, front: i64) {
        self.last_t = t;
        match &mut self.phase {
            Phase::Seeking => {
                if width >= 2 * self.cal_w {
                    self.out.pairs.last_mut().expect("open pair").1 = Some(t);
                    self.out.gains.push(0);
                    self.out.start_widths.push(width);
                    self.phase = Phase::Inside {
                        start_front: front,
                        best: 0,
                    };
                }
            }
            Phase::Inside { start_front, best } => {
                *best = (*best).max(front - *start_front);
                *self.out.gains.last_mut().expect("open excursion") = *best;
                if width < self.cal_w {
                    self.out.pairs.push((t, None));
                    self.phase = Phase::Seeking;
                    // the same instant may start the next excursion
                    self.push(t, width, front);
                }
            }
        }
    }

    pub fn finish(mut self, horizon: f64) -> ExcursionDecomposition {
        self.out.last_truncated = self.in_excursion();
        self.out.horizon = horizon.max(self.last_t);
        self.out
    }
}

/// Decomposes piecewise-constant width and front series sharing the jump
/// times `times` (first entry at time 0).
pub fn decompose_excursions(
    times: &[f64],
    width: &[i64],
    front: &[i64],
    cal_w: i64,
    horizon: f64,
) -> Result<ExcursionDecomposition> {
    if times.len() != width.len() || times.len() != front.len() {
        return Err(Error::SeriesMismatch(format!(
            "times {}, width {}, front {}",
            times.len(),
            width.len(),
            front.len()
        )));
    }
    let mut sc = ExcursionScanner::new(cal_w);
    for k in 0..times.len() {
        sc.push(times[k], width[k], front[k]);
    }
    Ok(sc.finish(horizon))
}

/// Observer feeding a scanner with the width and front displacement after
/// every event.
#[derive(Debug, Clone)]
pub struct ExcursionObserver {
    pub scanner: ExcursionScanner,
    pub x0_plus: i64,
}

impl ExcursionObserver {
    pub fn new(pop: &Population, cal_w: i64) -> Self {
        let mut scanner = ExcursionScanner::new(cal_w);
        scanner.push(pop.time(), pop.width(), 0);
        Self {
            scanner,
            x0_plus: pop.xmax(),
        }
    }
}

impl Observer for ExcursionObserver {
    fn after_event(&mut self, pop: &Population, _event: &Event) -> ControlFlow<()> {
        self.scanner
            .push(pop.time(), pop.width(), pop.xmax() - self.x0_plus);
        ControlFlow::Continue(())
    }
}
