use fixedbitset::FixedBitSet;
use thiserror::Error;

use super::{StateSpace, ABSORBING, DEADLOCK, INIT};
use crate::model::OUTCOME_CATEGORIES;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("unlabeled-terminal: absorbing state {0} matches no label")]
    UnlabeledTerminal(String),
}

/// Disjoint assignment of absorbing states to outcome categories.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalPartition {
    pub categories: Vec<(String, FixedBitSet)>,
}

impl TerminalPartition {
    pub fn get(&self, name: &str) -> Option<&FixedBitSet> {
        self.categories
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|(n, _)| n.as_str())
    }
}

/// Assigns every absorbing state to the first label that holds there, in the
/// order success, emergency, timeout, missed, other declared labels,
/// deadlock. Standard categories are always listed when declared; other
/// labels only when they receive a state.
pub fn classify_terminals<P>(ss: &StateSpace<P>) -> Result<TerminalPartition, ClassifyError> {
    let n = ss.state_count();
    let builtin = [DEADLOCK, ABSORBING, INIT];
    let mut order: Vec<&str> = OUTCOME_CATEGORIES
        .iter()
        .copied()
        .filter(|c| ss.label(c).is_some())
        .collect();
    for (name, _) in ss.labels() {
        if !OUTCOME_CATEGORIES.contains(&name.as_str()) && !builtin.contains(&name.as_str()) {
            order.push(name);
        }
    }
    order.push(DEADLOCK);
    let sets: Vec<&FixedBitSet> = order
        .iter()
        .map(|l| ss.label(l).expect("label exists"))
        .collect();
    let mut categories: Vec<(String, FixedBitSet)> = order
        .iter()
        .map(|l| (l.to_string(), FixedBitSet::with_capacity(n)))
        .collect();
    let absorbing = ss.label(ABSORBING).expect("builtin label");
    for s in absorbing.ones() {
        match sets.iter().position(|set| set.contains(s)) {
            Some(i) => categories[i].1.insert(s),
            None => return Err(ClassifyError::UnlabeledTerminal(ss.render_state(s as u32))),
        }
    }
    categories.retain(|(name, set)| OUTCOME_CATEGORIES.contains(&name.as_str()) || !set.is_clear());
    Ok(TerminalPartition { categories })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ss(labels: Vec<(&str, Vec<u32>)>) -> StateSpace<f64> {
        StateSpace::from_rows(
            vec![
                vec![vec![(1, 0.25), (2, 0.25), (3, 0.5)]],
                vec![vec![(1, 1.0)]],
                vec![vec![(2, 1.0)]],
                vec![vec![(3, 1.0)]],
            ],
            labels
                .into_iter()
                .map(|(n, v)| (n.to_string(), v))
                .collect(),
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn priority_and_coverage() {
        let p = classify_terminals(&ss(vec![
            ("timeout", vec![1, 2]),
            ("success", vec![1]),
            ("crashed", vec![3]),
        ]))
        .unwrap();
        let names: Vec<&str> = p.names().collect();
        assert_eq!(names, vec!["success", "timeout", "crashed"]);
        assert!(p.get("success").unwrap().contains(1));
        assert!(!p.get("timeout").unwrap().contains(1));
        assert!(p.get("timeout").unwrap().contains(2));
    }

    #[test]
    fn unlabeled_terminal() {
        let err = classify_terminals(&ss(vec![("success", vec![1])])).unwrap_err();
        assert_eq!(err, ClassifyError::UnlabeledTerminal("s=2".into()));
    }
}
