//! The tracked set: descendants of the individuals initially above a
//! fitness threshold `x`.
//!
//! Membership starts as `{i : X_0^i > x}` and then changes only by these
//! rules: an outsider replaced (by resampling or selection) by a member
//! joins; an outsider whose fitness steps from `x` to `x + 1` by a
//! beneficial mutation joins; a member replaced by resampling from an
//! outsider leaves. Mutations and selection never remove members.

use std::ops::ControlFlow;

use crate::engine::Observer;
use crate::population::{Event, EventKind, Population};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackedSet {
    x: i64,
    members: Vec<bool>,
    len: usize,
}

impl TrackedSet {
    pub fn new(pop: &Population, x: i64) -> Self {
        let members: Vec<bool> = pop.fitnesses().iter().map(|&f| f > x).collect();
        let len = members.iter().filter(|&&m| m).count();
        Self { x, members, len }
    }

    pub fn threshold(&self) -> i64 {
        self.x
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members[i]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }

    fn set(&mut self, i: usize, member: bool) {
        if self.members[i] != member {
            self.members[i] = member;
            if member {
                self.len += 1;
            } else {
                self.len -= 1;
            }
        }
    }

    /// Applies the membership rules for `event`, sampled against `pop_before`.
    pub fn step(&mut self, event: &Event, pop_before: &Population) {
        match event.kind {
            EventKind::MutationUp(i) => {
                if !self.members[i] && pop_before.fitness(i) == self.x {
                    self.set(i, true);
                }
            }
            EventKind::MutationDown(_) => {}
            EventKind::Resample { from, to } => {
                let m = self.members[from];
                self.set(to, m);
            }
            EventKind::Select { from, to } => {
                if self.members[from] {
                    self.set(to, true);
                }
            }
        }
    }
}

impl Observer for TrackedSet {
    fn before_event(&mut self, pop: &Population, event: &Event) {
        self.step(event, pop);
    }
}

/// Tracked set plus the per-individual statistic
/// `S^i = sup over membership times r of (x - X^i_r)`, `None` for
/// individuals that were never members.
#[derive(Debug, Clone)]
pub struct TrackedDepth {
    pub set: TrackedSet,
    pub depth: Vec<Option<i64>>,
}

impl TrackedDepth {
    pub fn new(pop: &Population, x: i64) -> Self {
        let set = TrackedSet::new(pop, x);
        let depth = (0..pop.n())
            .map(|i| set.contains(i).then(|| x - pop.fitness(i)))
            .collect();
        Self { set, depth }
    }

    /// `max_i S^i`, `None` while nobody was ever a member.
    pub fn max_depth(&self) -> Option<i64> {
        self.depth.iter().flatten().copied().max()
    }

    pub(crate) fn refresh(&mut self, pop: &Population, i: usize) {
        if self.set.contains(i) {
            let d = self.set.x - pop.fitness(i);
            let slot = &mut self.depth[i];
            *slot = Some(slot.map_or(d, |s| s.max(d)));
        }
    }
}

impl Observer for TrackedDepth {
    fn before_event(&mut self, pop: &Population, event: &Event) {
        self.set.step(event, pop);
    }

    fn after_event(&mut self, pop: &Population, event: &Event) -> ControlFlow<()> {
        self.refresh(pop, event.kind.target());
        ControlFlow::Continue(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::apply_event;

    fn run(pop: &mut Population, set: &mut TrackedSet, kind: EventKind) {
        let e = Event { time: 1.0, kind };
        set.step(&e, pop);
        apply_event(pop, &e).unwrap();
    }

    #[test]
    fn resample_adds_and_removes() {
        let mut pop = Population::new(vec![0, 5, 0]).unwrap();
        let mut set = TrackedSet::new(&pop, 2);
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![1]);
        run(&mut pop, &mut set, EventKind::Resample { from: 1, to: 0 });
        assert!(set.contains(0));
        run(&mut pop, &mut set, EventKind::Resample { from: 2, to: 1 });
        assert!(!set.contains(1));
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn mutations_and_selection() {
        let mut pop = Population::new(vec![2, 5, 1]).unwrap();
        let mut set = TrackedSet::new(&pop, 2);
        run(&mut pop, &mut set, EventKind::MutationDown(1));
        assert!(set.contains(1));
        // 1 -> 2 is not the crossing x -> x + 1
        run(&mut pop, &mut set, EventKind::MutationUp(2));
        assert!(!set.contains(2));
        run(&mut pop, &mut set, EventKind::MutationUp(0));
        assert!(set.contains(0));
        // selection from an outsider never removes
        pop = Population::new(vec![9, 5, 1]).unwrap();
        let mut set = TrackedSet::new(&pop, 6);
        run(&mut pop, &mut set, EventKind::Select { from: 1, to: 2 });
        assert!(!set.contains(2));
        run(&mut pop, &mut set, EventKind::Select { from: 0, to: 1 });
        assert!(set.contains(1));
        let mut pop = Population::new(vec![3, 9]).unwrap();
        let mut set = TrackedSet::new(&pop, 6);
        run(&mut pop, &mut set, EventKind::MutationDown(1));
        run(&mut pop, &mut set, EventKind::MutationDown(1));
        run(&mut pop, &mut set, EventKind::MutationDown(1));
        run(&mut pop, &mut set, EventKind::MutationDown(1));
        run(&mut pop, &mut set, EventKind::MutationDown(1));
        assert!(set.contains(1));
    }

    #[test]
    fn empty_when_threshold_above_everyone() {
        let pop = Population::new(vec![0, 1, 2]).unwrap();
        let t = TrackedDepth::new(&pop, 10);
        assert!(t.set.is_empty());
        assert_eq!(t.max_depth(), None);
    }

    struct Agreement {
        labels: crate::labels::LabelTracker,
        set: TrackedSet,
        mismatches: usize,
    }

    impl Agreement {
        fn count(&mut self) {
            use crate::labels::Label;
            for i in 0..self.set.members.len() {
                let labelled = self.labels.state.primary(i) != Label::A;
                if labelled != self.set.contains(i) {
                    self.mismatches += 1;
                }
            }
        }
    }

    impl Observer for Agreement {
        fn before_event(&mut self, pop: &Population, event: &Event) {
            self.labels.before_event(pop, event);
            self.set.step(event, pop);
        }

        fn after_event(&mut self, pop: &Population, event: &Event) -> ControlFlow<()> {
            let _ = self.labels.after_event(pop, event);
            self.count();
            ControlFlow::Continue(())
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn tracked_set_matches_upper_labels(
            fitness in proptest::collection::vec(-3i64..40, 2..12),
            seed in 0u64..1_000_000,
            gamma in 0.1f64..3.0,
            q in 0.05f64..1.0,
        ) {
            let mut pop = Population::new(fitness).unwrap();
            let labels = crate::labels::LabelTracker::new(&pop);
            let x = labels.state.bounds().tracked_threshold();
            let set = TrackedSet::new(&pop, x);
            let mut obs = Agreement { labels, set, mismatches: 0 };
            obs.count();
            let params = crate::params::Params::new(pop.n(), 1.0, q, gamma).unwrap();
            let mut rng = crate::rng::replicate_rng(seed, 0);
            crate::engine::evolve(&mut pop, &params, 3.0, 1_000_000, &mut rng, &mut obs).unwrap();
            proptest::prop_assert_eq!(obs.mismatches, 0);
        }
    }
}
