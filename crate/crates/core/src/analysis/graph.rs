//! Qualitative (graph based) precomputation for reachability.
//!
//! All functions return state sets as bitsets over state ids.

use std::collections::VecDeque;

use fixedbitset::FixedBitSet;

use crate::scalar::Probability;
use crate::statespace::TransitionMatrix;

/// Reverse edges: for each state, the `(state, choice)` pairs with a
/// positive-probability entry into it.
#[derive(Debug, Clone)]
pub struct Predecessors {
    start: Vec<usize>,
    entries: Vec<(u32, u32)>,
}

impl Predecessors {
    pub fn new<P: Probability>(m: &TransitionMatrix<P>) -> Self {
        let n = m.state_count();
        let mut count = vec![0usize; n + 1];
        for s in 0..n {
            for c in m.choices(s) {
                let (targets, probs) = m.row(c);
                for (&t, p) in targets.iter().zip(probs) {
                    if p.is_positive() {
                        count[t as usize + 1] += 1;
                    }
                }
            }
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut entries = vec![(0u32, 0u32); count[n]];
        for s in 0..n {
            for c in m.choices(s) {
                let (targets, probs) = m.row(c);
                for (&t, p) in targets.iter().zip(probs) {
                    if p.is_positive() {
                        entries[fill[t as usize]] = (s as u32, c as u32);
                        fill[t as usize] += 1;
                    }
                }
            }
        }
        Self {
            start: count,
            entries,
        }
    }

    pub fn of(&self, state: usize) -> &[(u32, u32)] {
        &self.entries[self.start[state]..self.start[state + 1]]
    }
}

/// States that can reach `target` under some scheduler, restricted to
/// paths that stay inside `allowed` before reaching the target.
fn backward_closure(
    pred: &Predecessors,
    from: &FixedBitSet,
    allowed: Option<&FixedBitSet>,
) -> FixedBitSet {
    let mut seen = from.clone();
    let mut queue: VecDeque<usize> = from.ones().collect();
    while let Some(t) = queue.pop_front() {
        for &(s, _) in pred.of(t) {
            let s = s as usize;
            if !seen.contains(s) && allowed.is_none_or(|a| a.contains(s)) {
                seen.insert(s);
                queue.push_back(s);
            }
        }
    }
    seen
}

/// States where the maximal reachability probability is 0.
pub fn prob0a(pred: &Predecessors, target: &FixedBitSet) -> FixedBitSet {
    let mut no = backward_closure(pred, target, None);
    no.toggle_range(..);
    no
}

/// States where the minimal reachability probability is 0.
pub fn prob0e<P: Probability>(
    m: &TransitionMatrix<P>,
    pred: &Predecessors,
    target: &FixedBitSet,
) -> FixedBitSet {
    let n = m.state_count();
    // least fixpoint of: target, or every choice has a successor inside
    let mut inside = target.clone();
    let mut pending: Vec<u32> = (0..n).map(|s| m.choices(s).len() as u32).collect();
    let mut hit = FixedBitSet::with_capacity(m.choice_count());
    let mut queue: VecDeque<usize> = target.ones().collect();
    while let Some(t) = queue.pop_front() {
        for &(s, c) in pred.of(t) {
            let (s, c) = (s as usize, c as usize);
            if inside.contains(s) || hit.contains(c) {
                continue;
            }
            hit.insert(c);
            pending[s] -= 1;
            if pending[s] == 0 {
                inside.insert(s);
                queue.push_back(s);
            }
        }
    }
    inside.toggle_range(..);
    inside
}

/// States where the minimal reachability probability is 1, given the
/// result of [`prob0e`].
pub fn prob1a(pred: &Predecessors, target: &FixedBitSet, no_e: &FixedBitSet) -> FixedBitSet {
    let mut avoid = target.clone();
    avoid.toggle_range(..);
    let mut yes = backward_closure(pred, no_e, Some(&avoid));
    yes.toggle_range(..);
    yes
}

/// States where the maximal reachability probability is 1.
pub fn prob1e<P: Probability>(
    m: &TransitionMatrix<P>,
    pred: &Predecessors,
    target: &FixedBitSet,
) -> FixedBitSet {
    let n = m.state_count();
    let mut keep = FixedBitSet::with_capacity(n);
    keep.insert_range(..);
    let mut closed = FixedBitSet::with_capacity(m.choice_count());
    loop {
        closed.clear();
        for s in keep.ones() {
            for c in m.choices(s) {
                let (targets, probs) = m.row(c);
                if targets
                    .iter()
                    .zip(probs)
                    .all(|(&t, p)| !p.is_positive() || keep.contains(t as usize))
                {
                    closed.insert(c);
                }
            }
        }
        let mut reach = target.clone();
        let mut queue: VecDeque<usize> = target.ones().collect();
        while let Some(t) = queue.pop_front() {
            for &(s, c) in pred.of(t) {
                let s = s as usize;
                if !reach.contains(s) && closed.contains(c as usize) {
                    reach.insert(s);
                    queue.push_back(s);
                }
            }
        }
        if reach == keep {
            return keep;
        }
        keep = reach;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(n: usize, members: &[usize]) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(n);
        for &m in members {
            s.insert(m);
        }
        s
    }

    /// 0: a -> 1 | b -> {2: .5, 3: .5};  1: self loop;  2: target;  3: a -> 2 | b -> 1
    fn mdp() -> TransitionMatrix<f64> {
        TransitionMatrix::from_rows(vec![
            vec![vec![(1, 1.0)], vec![(2, 0.5), (3, 0.5)]],
            vec![vec![(1, 1.0)]],
            vec![vec![(2, 1.0)]],
            vec![vec![(2, 1.0)], vec![(1, 1.0)]],
        ])
    }

    #[test]
    fn qualitative_sets() {
        let m = mdp();
        let pred = Predecessors::new(&m);
        let target = set(4, &[2]);
        assert_eq!(prob0a(&pred, &target), set(4, &[1]));
        let no_e = prob0e(&m, &pred, &target);
        assert_eq!(no_e, set(4, &[0, 1, 3]));
        assert_eq!(prob1a(&pred, &target, &no_e), set(4, &[2]));
        assert_eq!(prob1e(&m, &pred, &target), set(4, &[0, 2, 3]));
    }

    #[test]
    fn dtmc_almost_sure() {
        let m =
            TransitionMatrix::from_rows(vec![vec![vec![(0, 0.5), (1, 0.5)]], vec![vec![(1, 1.0)]]]);
        let pred = Predecessors::new(&m);
        let target = set(2, &[1]);
        let no = prob0e(&m, &pred, &target);
        assert!(no.is_clear());
        assert_eq!(prob1a(&pred, &target, &no), set(2, &[0, 1]));
        assert_eq!(prob1e(&m, &pred, &target), set(2, &[0, 1]));
    }
}
