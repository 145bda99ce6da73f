//! Two-level labelling of individuals relative to the initial front.
//!
//! The initial configuration is cut into four intervals below the initial
//! maximum `X_0^+` at distances `3W_0/16`, `2W_0/16` and `W_0/16`:
//! `I1` (lowest) through `I4` (highest). Every individual carries a primary
//! label (`A` on `I1 ∪ I2`, `B` on `I3`, `C` on `I4`) and a secondary label
//! (`A'` on `I1`, `B'` on `I2`, `C'` on `I3 ∪ I4`) which then evolve with
//! the events. All interval tests are done in integer arithmetic scaled by
//! 16 (interval cuts) or 32 (event thresholds).

use std::ops::ControlFlow;

use crate::engine::Observer;
use crate::population::{Event, EventKind, Population};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    A,
    B,
    C,
}

/// Interval cuts computed from `X_0^+` and `W_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelBounds {
    pub x0_plus: i64,
    pub w0: i64,
}

/// `I1..I4` as `1..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Interval(pub u8);

impl LabelBounds {
    pub fn of(pop: &Population) -> Self {
        Self {
            x0_plus: pop.xmax(),
            w0: pop.width(),
        }
    }

    pub fn interval(&self, fitness: i64) -> Interval {
        // sixteen times the distance below the initial maximum
        let s = 16 * (self.x0_plus - fitness);
        if s >= 3 * self.w0 {
            Interval(1)
        } else if s >= 2 * self.w0 {
            Interval(2)
        } else if s >= self.w0 {
            Interval(3)
        } else {
            Interval(4)
        }
    }

    pub fn primary_for(&self, fitness: i64) -> Label {
        match self.interval(fitness).0 {
            1 | 2 => Label::A,
            3 => Label::B,
            _ => Label::C,
        }
    }

    pub fn secondary_for(&self, fitness: i64) -> Label {
        match self.interval(fitness).0 {
            1 => Label::A,
            2 => Label::B,
            _ => Label::C,
        }
    }

    /// `fitness < X_0^+ - (k/32) W_0`.
    pub fn below_32nds(&self, fitness: i64, k: i64) -> bool {
        32 * (self.x0_plus - fitness) > k * self.w0
    }

    /// Largest integer `x` with `x <= X_0^+ - 2W_0/16`; individuals above it
    /// are exactly those in `I3 ∪ I4`.
    pub fn tracked_threshold(&self) -> i64 {
        (16 * self.x0_plus - 2 * self.w0).div_euclid(16)
    }
}

/// Label counts `[A, B, C, A', B', C']`.
pub type LabelTallies = [usize; 6];

#[derive(Debug, Clone)]
pub struct LabelState {
    primary: Vec<Label>,
    secondary: Vec<Label>,
    bounds: LabelBounds,
    tallies: LabelTallies,
}

fn slot(l: Label) -> usize {
    match l {
        Label::A => 0,
        Label::B => 1,
        Label::C => 2,
    }
}

impl LabelState {
    /// Labels from interval membership in the given (initial) population.
    pub fn new(pop: &Population) -> Self {
        let bounds = LabelBounds::of(pop);
        let primary: Vec<Label> = pop
            .fitnesses()
            .iter()
            .map(|&f| bounds.primary_for(f))
            .collect();
        let secondary: Vec<Label> = pop
            .fitnesses()
            .iter()
            .map(|&f| bounds.secondary_for(f))
            .collect();
        let mut tallies = [0; 6];
        for (&p, &s) in primary.iter().zip(&secondary) {
            tallies[slot(p)] += 1;
            tallies[3 + slot(s)] += 1;
        }
        Self {
            primary,
            secondary,
            bounds,
            tallies,
        }
    }

    pub fn bounds(&self) -> LabelBounds {
        self.bounds
    }

    pub fn primary(&self, i: usize) -> Label {
        self.primary[i]
    }

    pub fn secondary(&self, i: usize) -> Label {
        self.secondary[i]
    }

    pub fn tallies(&self) -> LabelTallies {
        self.tallies
    }

    fn set(&mut self, i: usize, primary: Label, secondary: Label) {
        let (p0, s0) = (self.primary[i], self.secondary[i]);
        self.tallies[slot(p0)] -= 1;
        self.tallies[3 + slot(s0)] -= 1;
        self.tallies[slot(primary)] += 1;
        self.tallies[3 + slot(secondary)] += 1;
        self.primary[i] = primary;
        self.secondary[i] = secondary;
    }

    /// Relabels after `event`, given the population the event was sampled
    /// against.
    ///
    /// A beneficial mutation promotes a label when the new fitness lands in
    /// a higher interval than the label stands for: `A -> B` on entering
    /// `I3`, `B -> C` on entering `I4`, `A' -> B'` on entering `I2` and
    /// `B' -> C'` on entering `I3`. When `W_0` is small some intervals hold
    /// no integer and a single step crosses two cuts; the label then goes
    /// straight to the one of the interval reached (`A -> C`, `A' -> C'`).
    pub fn update(&mut self, event: &Event, pop_before: &Population) {
        match event.kind {
            EventKind::MutationUp(i) => {
                let f = pop_before.fitness(i) + 1;
                let reached = self.bounds.interval(f).0;
                let p = match (self.primary[i], reached) {
                    (Label::A, 3) => Label::B,
                    (Label::A | Label::B, 4) => Label::C,
                    (l, _) => l,
                };
                let s = match (self.secondary[i], reached) {
                    (Label::A, 2) => Label::B,
                    (Label::A | Label::B, 3 | 4) => Label::C,
                    (l, _) => l,
                };
                self.set(i, p, s);
            }
            EventKind::MutationDown(_) => {}
            EventKind::Resample { from, to } => {
                self.set(to, self.primary[from], self.secondary[from]);
            }
            EventKind::Select { from, to } => {
                let p = match (self.primary[to], self.primary[from]) {
                    (Label::A, l) => l,
                    (Label::B, Label::C) => Label::C,
                    (l, _) => l,
                };
                let s = match (self.secondary[to], self.secondary[from]) {
                    (Label::A, l) => l,
                    (Label::B, Label::C) => Label::C,
                    (l, _) => l,
                };
                self.set(to, p, s);
            }
        }
    }
}

/// Which of the four deviation events occurred: a `B` below
/// `X_0^+ - 5W_0/32` (`a1`), a `C` below `X_0^+ - 3W_0/32` (`a2`), a `B'`
/// below `X_0^+ - 7W_0/32` (`a1p`), a `C'` below `X_0^+ - 5W_0/32` (`a2p`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelEvents {
    pub a1: bool,
    pub a2: bool,
    pub a1p: bool,
    pub a2p: bool,
}

impl LabelEvents {
    pub fn any(&self) -> bool {
        self.a1 || self.a2 || self.a1p || self.a2p
    }
}

/// First times at which each deviation event occurred.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabelEventTimes {
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a1p: Option<f64>,
    pub a2p: Option<f64>,
}

impl LabelEventTimes {
    /// Events that occurred in `[0, horizon]`.
    pub fn within(&self, horizon: f64) -> LabelEvents {
        let hit = |t: Option<f64>| t.is_some_and(|t| t <= horizon);
        LabelEvents {
            a1: hit(self.a1),
            a2: hit(self.a2),
            a1p: hit(self.a1p),
            a2p: hit(self.a2p),
        }
    }
}

/// Observer that keeps the labels up to date and records the deviation
/// events, checking the individual touched by every event.
#[derive(Debug, Clone)]
pub struct LabelTracker {
    pub state: LabelState,
    pub times: LabelEventTimes,
}

impl LabelTracker {
    pub fn new(pop: &Population) -> Self {
        let mut tracker = Self {
            state: LabelState::new(pop),
            times: LabelEventTimes::default(),
        };
        for i in 0..pop.n() {
            tracker.check(pop, i);
        }
        tracker
    }

    pub fn events_within(&self, horizon: f64) -> LabelEvents {
        self.times.within(horizon)
    }

    fn check(&mut self, pop: &Population, i: usize) {
        let b = self.state.bounds;
        let f = pop.fitness(i);
        let t = pop.time();
        let mark = |slot: &mut Option<f64>, cond: bool| {
            if cond && slot.is_none() {
                *slot = Some(t);
            }
        };
        mark(
            &mut self.times.a1,
            self.state.primary[i] == Label::B && b.below_32nds(f, 5),
        );
        mark(
            &mut self.times.a2,
            self.state.primary[i] == Label::C && b.below_32nds(f, 3),
        );
        mark(
            &mut self.times.a1p,
            self.state.secondary[i] == Label::B && b.below_32nds(f, 7),
        );
        mark(
            &mut self.times.a2p,
            self.state.secondary[i] == Label::C && b.below_32nds(f, 5),
        );
    }
}

impl Observer for LabelTracker {
    fn before_event(&mut self, pop: &Population, event: &Event) {
        self.state.update(event, pop);
    }

    fn after_event(&mut self, pop: &Population, event: &Event) -> ControlFlow<()> {
        self.check(pop, event.kind.target());
        ControlFlow::Continue(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::apply_event;

    fn ev(kind: EventKind) -> Event {
        Event { time: 0.5, kind }
    }

    fn step(pop: &mut Population, tr: &mut LabelTracker, kind: EventKind) {
        let e = ev(kind);
        tr.before_event(pop, &e);
        apply_event(pop, &e).unwrap();
        let _ = tr.after_event(pop, &e);
    }

    #[test]
    fn initial_labels_follow_intervals() {
        // X0+ = 32, W0 = 32: cuts at 26, 28, 30 (I1 <= 26 < I2 <= 28 < I3 <= 30 < I4)
        let pop = Population::new(vec![0, 26, 27, 28, 29, 30, 31, 32]).unwrap();
        let st = LabelState::new(&pop);
        let prim: Vec<_> = (0..8).map(|i| st.primary(i)).collect();
        let sec: Vec<_> = (0..8).map(|i| st.secondary(i)).collect();
        use Label::*;
        assert_eq!(prim, vec![A, A, A, A, B, B, C, C]);
        assert_eq!(sec, vec![A, A, B, B, C, C, C, C]);
        assert_eq!(st.tallies(), [4, 2, 2, 2, 2, 4]);
        for i in 0..8 {
            if st.primary(i) != A {
                assert_eq!(st.secondary(i), C);
            }
        }
    }

    #[test]
    fn mutation_promotions() {
        let mut pop = Population::new(vec![0, 28, 30, 32]).unwrap();
        let mut tr = LabelTracker::new(&pop);
        // 28 -> 29 enters I3: A -> B, secondary B' -> C'
        step(&mut pop, &mut tr, EventKind::MutationUp(1));
        assert_eq!(
            (tr.state.primary(1), tr.state.secondary(1)),
            (Label::B, Label::C)
        );
        // 30 -> 31 enters I4: B -> C
        step(&mut pop, &mut tr, EventKind::MutationUp(2));
        assert_eq!(tr.state.primary(2), Label::C);
        // deleterious never relabels
        step(&mut pop, &mut tr, EventKind::MutationDown(3));
        assert_eq!(tr.state.primary(3), Label::C);
        step(&mut pop, &mut tr, EventKind::MutationDown(2));
        step(&mut pop, &mut tr, EventKind::MutationDown(2));
        assert_eq!(tr.state.primary(2), Label::C);
    }

    #[test]
    fn resample_copies_both_labels() {
        let mut pop = Population::new(vec![0, 30, 32]).unwrap();
        let mut tr = LabelTracker::new(&pop);
        assert_eq!(
            (tr.state.primary(1), tr.state.secondary(1)),
            (Label::B, Label::C)
        );
        step(&mut pop, &mut tr, EventKind::Resample { from: 1, to: 0 });
        assert_eq!(
            (tr.state.primary(0), tr.state.secondary(0)),
            (Label::B, Label::C)
        );
        assert_eq!(tr.state.tallies().iter().sum::<usize>(), 6);
    }

    #[test]
    fn selection_rules() {
        // fitness 0 (A,A'), 27 (A,B'), 30 (B,C'), 32 (C,C')
        let mut pop = Population::new(vec![0, 27, 30, 32, 0]).unwrap();
        let mut tr = LabelTracker::new(&pop);
        // A replaced by B' holder inherits: 0 <- 27 gives (A, B')
        step(&mut pop, &mut tr, EventKind::Select { from: 1, to: 0 });
        assert_eq!(
            (tr.state.primary(0), tr.state.secondary(0)),
            (Label::A, Label::B)
        );
        // B replaced by C becomes C
        step(&mut pop, &mut tr, EventKind::Select { from: 3, to: 2 });
        assert_eq!(tr.state.primary(2), Label::C);
        // B' replaced by C' becomes C'
        step(&mut pop, &mut tr, EventKind::Select { from: 3, to: 1 });
        assert_eq!(tr.state.secondary(1), Label::C);
        assert_eq!(tr.state.primary(1), Label::C);
    }

    #[test]
    fn static_population_has_no_events() {
        let pop = Population::new(vec![0, 10, 20, 32]).unwrap();
        let tr = LabelTracker::new(&pop);
        assert!(!tr.events_within(10.0).any());
    }

    #[test]
    fn witness_for_a1() {
        // X0+ = 32, W0 = 32: A1 threshold fitness < 27
        let mut pop = Population::new(vec![0, 29, 32]).unwrap();
        let mut tr = LabelTracker::new(&pop);
        assert_eq!(tr.state.primary(1), Label::B);
        // the B individual steps down to 26
        for _ in 0..3 {
            step(&mut pop, &mut tr, EventKind::MutationDown(1));
        }
        let ev = tr.events_within(1.0);
        assert!(ev.a1);
        assert_eq!(tr.times.a1, Some(0.5));
        assert!(!tr.events_within(0.1).a1);
    }

    #[test]
    fn skipped_interval_goes_straight_up() {
        // W0 = 4, X0+ = 4: I1 = (-inf, 3.25], I2 and I3 hold no integer, I4 = {4, ...}
        let mut pop = Population::new(vec![0, 3, 4]).unwrap();
        let mut tr = LabelTracker::new(&pop);
        assert_eq!(tr.state.primary(1), Label::A);
        assert_eq!(tr.state.secondary(1), Label::A);
        step(&mut pop, &mut tr, EventKind::MutationUp(1));
        assert_eq!(
            (tr.state.primary(1), tr.state.secondary(1)),
            (Label::C, Label::C)
        );
    }

    proptest::proptest! {
        #[test]
        fn upper_primary_labels_start_secondary_c(
            fitness in proptest::collection::vec(-50i64..50, 2..40),
        ) {
            let pop = Population::new(fitness).unwrap();
            let st = LabelState::new(&pop);
            let t = st.tallies();
            proptest::prop_assert_eq!(t[0] + t[1] + t[2], pop.n());
            proptest::prop_assert_eq!(t[3] + t[4] + t[5], pop.n());
            for i in 0..pop.n() {
                if st.primary(i) != Label::A {
                    proptest::prop_assert_eq!(st.secondary(i), Label::C);
                }
            }
        }
    }
}
