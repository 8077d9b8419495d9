//! Max-priority queue over search nodes with deterministic tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::domain::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    value: f64,
    seq: u64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Highest value first; earlier insertion wins ties.
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Frontier of unexpanded nodes keyed by value.
///
/// `pop` always returns a node of maximal value; among equal values the one
/// pushed first wins. Every pushed node is popped at most once.
#[derive(Debug, Default)]
pub struct Frontier {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
}

impl Frontier {
    pub fn new() -> Self {
        Frontier::default()
    }

    pub fn push(&mut self, node: NodeId, value: f64) {
        assert!(!value.is_nan(), "frontier values must be comparable");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { value, seq, node });
    }

    pub fn pop(&mut self) -> Option<(NodeId, f64)> {
        self.heap.pop().map(|e| (e.node, e.value))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Remaining nodes in pop order; consumes the frontier.
    pub fn into_sorted(self) -> Vec<(NodeId, f64)> {
        let mut heap = self.heap;
        let mut out = Vec::with_capacity(heap.len());
        while let Some(e) = heap.pop() {
            out.push((e.node, e.value));
        }
        out
    }
}

/// Reference queue: linear scan for the max with insertion-order tie-break.
/// Obviously correct; used to differential-test [`Frontier`].
#[derive(Debug, Default)]
pub struct ScanQueue {
    items: Vec<(NodeId, f64)>,
}

impl ScanQueue {
    pub fn new() -> Self {
        ScanQueue::default()
    }

    pub fn push(&mut self, node: NodeId, value: f64) {
        self.items.push((node, value));
    }

    pub fn pop(&mut self) -> Option<(NodeId, f64)> {
        let mut best: Option<usize> = None;
        for (i, (_, value)) in self.items.iter().enumerate() {
            match best {
                None => best = Some(i),
                Some(b) if *value > self.items[b].1 => best = Some(i),
                _ => {}
            }
        }
        best.map(|i| self.items.remove(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pop_returns_max_with_insertion_tie_break() {
        let mut f = Frontier::new();
        f.push(1, 0.5);
        f.push(2, 0.9);
        f.push(3, 0.9);
        f.push(4, 0.1);
        assert_eq!(f.pop(), Some((2, 0.9)));
        assert_eq!(f.pop(), Some((3, 0.9)));
        assert_eq!(f.pop(), Some((1, 0.5)));
        assert_eq!(f.pop(), Some((4, 0.1)));
        assert_eq!(f.pop(), None);
    }

    #[test]
    fn matches_scan_queue_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut frontier = Frontier::new();
            let mut reference = ScanQueue::new();
            let mut next_id: NodeId = 0;
            for _ in 0..rng.random_range(1..60) {
                if rng.random_bool(0.6) {
                    // Small value set forces ties.
                    let value = rng.random_range(0..8) as f64 / 8.0;
                    frontier.push(next_id, value);
                    reference.push(next_id, value);
                    next_id += 1;
                } else {
                    assert_eq!(frontier.pop(), reference.pop());
                }
            }
            loop {
                let (a, b) = (frontier.pop(), reference.pop());
                assert_eq!(a, b);
                if a.is_none() {
                    break;
                }
            }
        }
    }
}
