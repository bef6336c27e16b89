use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{ContainerId, UserId};

/// Simulation events. Equal-time events run in the order of [`Event::priority`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    HoDone { user: UserId, episode: u64 },
    MigDone { user: UserId, episode: u64 },
    PreMigDone { user: UserId, episode: u64 },
    RestoreStart { user: UserId, episode: u64 },
    MigStart { user: UserId, episode: u64 },
    HoStart { user: UserId, episode: u64 },
    PreMigStart { user: UserId, episode: u64 },
    Probe { container: ContainerId },
    MoveTick,
    RadioSample,
    MonitorTick,
    Request { user: UserId },
}

impl Event {
    /// Availability changes come before anything that observes them.
    pub fn priority(&self) -> u8 {
        match self {
            Event::HoDone { .. } => 0,
            Event::MigDone { .. } => 1,
            Event::PreMigDone { .. } => 2,
            Event::RestoreStart { .. } => 3,
            Event::MigStart { .. } => 4,
            Event::HoStart { .. } => 5,
            Event::PreMigStart { .. } => 6,
            Event::Probe { .. } => 7,
            Event::MoveTick => 8,
            Event::RadioSample => 9,
            Event::MonitorTick => 10,
            Event::Request { .. } => 11,
        }
    }
}

#[derive(Debug)]
struct Queued {
    time: f64,
    priority: u8,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.priority.cmp(&self.priority))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Time-ordered queue with deterministic tie-breaking by priority, then insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Queued {
            time,
            priority: event.priority(),
            seq: self.seq,
            event,
        });
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        self.heap.pop().map(|q| (q.time, q.event))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|q| q.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_resolve_by_priority_then_sequence() {
        let mut q = EventQueue::default();
        let u = UserId(0);
        q.push(1.0, Event::Request { user: u });
        q.push(
            1.0,
            Event::HoDone {
                user: u,
                episode: 1,
            },
        );
        q.push(0.5, Event::MonitorTick);
        q.push(
            1.0,
            Event::MigDone {
                user: u,
                episode: 1,
            },
        );
        q.push(1.0, Event::Request { user: UserId(1) });
        let order: Vec<Event> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(
            order,
            vec![
                Event::MonitorTick,
                Event::HoDone {
                    user: u,
                    episode: 1
                },
                Event::MigDone {
                    user: u,
                    episode: 1
                },
                Event::Request { user: u },
                Event::Request { user: UserId(1) },
            ]
        );
    }
}
