//! The event loop and its observation hooks.

use std::ops::ControlFlow;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::Params;
use crate::population::{apply_event, sample_event, Event, Population};

/// Default guard against runaway configurations.
pub const DEFAULT_EVENT_CAP: u64 = 2_000_000_000;

/// Hooks called around every event. `before_event` sees the state the event
/// was sampled against, `after_event` the updated state.
pub trait Observer {
    fn before_event(&mut self, _pop: &Population, _event: &Event) {}

    fn after_event(&mut self, _pop: &Population, _event: &Event) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

impl Observer for () {}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn before_event(&mut self, pop: &Population, event: &Event) {
        (**self).before_event(pop, event)
    }

    fn after_event(&mut self, pop: &Population, event: &Event) -> ControlFlow<()> {
        (**self).after_event(pop, event)
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn before_event(&mut self, pop: &Population, event: &Event) {
        self.0.before_event(pop, event);
        self.1.before_event(pop, event);
    }

    fn after_event(&mut self, pop: &Population, event: &Event) -> ControlFlow<()> {
        let a = self.0.after_event(pop, event);
        let b = self.1.after_event(pop, event);
        if a.is_break() || b.is_break() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    /// Time the run ended: `t_end`, or the time of the event at which an
    /// observer stopped the run.
    pub end_time: f64,
    pub stopped_early: bool,
}

/// Runs the process from its current state until `t_end`. An event sampled
/// past `t_end` is discarded (memorylessness makes this exact) and the clock
/// is set to `t_end`.
pub fn evolve<R: Rng + ?Sized, O: Observer>(
    pop: &mut Population,
    params: &Params,
    t_end: f64,
    event_cap: u64,
    rng: &mut R,
    obs: &mut O,
) -> Result<RunSummary> {
    let mut events = 0u64;
    loop {
        let event = sample_event(pop, params, rng);
        if event.time > t_end {
            pop.set_time(t_end.max(pop.time()));
            return Ok(RunSummary {
                events,
                end_time: pop.time(),
                stopped_early: false,
            });
        }
        if events >= event_cap {
            return Err(Error::EventCapExceeded {
                cap: event_cap,
                time: pop.time(),
            });
        }
        obs.before_event(pop, &event);
        apply_event(pop, &event)?;
        events += 1;
        if obs.after_event(pop, &event).is_break() {
            return Ok(RunSummary {
                events,
                end_time: pop.time(),
                stopped_early: true,
            });
        }
    }
}
