use serde::Serialize;

use super::graph::{self, Predecessors};
use super::{check_direction, label_set, reach_with, AnalysisError, Direction, SolveOptions};
use crate::scalar::Scalar;
use crate::statespace::{StateSpace, TerminalPartition, ABSORBING};

/// Probability of ending in each outcome category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeSummary {
    pub direction: Direction,
    pub categories: Vec<(String, f64)>,
}

impl OutcomeSummary {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.categories
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, p)| p)
    }

    pub fn total(&self) -> f64 {
        self.categories.iter().map(|(_, p)| p).sum()
    }
}

/// Reachability of every category of `partition` from the initial states.
/// Each category is optimised on its own, so `min` totals may fall below 1
/// and `max` totals exceed it.
pub fn outcome_summary<S: Scalar>(
    ss: &StateSpace<S>,
    partition: &TerminalPartition,
    dir: Direction,
    opts: &SolveOptions,
) -> Result<OutcomeSummary, AnalysisError> {
    check_direction(ss, dir)?;
    let m = ss.matrix();
    let pred = Predecessors::new(m);
    let absorbing = label_set(ss, ABSORBING)?;
    let no = graph::prob0e(m, &pred, absorbing);
    let sure = graph::prob1a(&pred, absorbing, &no);
    if let Some(s) = (0..ss.state_count()).find(|&s| !sure.contains(s)) {
        return Err(AnalysisError::NotAlmostSurelyAbsorbing(
            ss.render_state(s as u32),
        ));
    }
    let mut categories = Vec::with_capacity(partition.categories.len());
    for (name, set) in &partition.categories {
        let p = if set.is_clear() {
            0.0
        } else {
            let (values, _) = reach_with(m, &pred, set, dir, opts)?;
            let init = ss.initial().iter().map(|&s| values[s as usize].as_f64());
            match dir {
                Direction::Max => init.fold(f64::NEG_INFINITY, f64::max),
                _ => init.fold(f64::INFINITY, f64::min),
            }
        };
        categories.push((name.clone(), p));
    }
    Ok(OutcomeSummary {
        direction: dir,
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::classify_terminals;

    #[test]
    fn single_category_is_certain() {
        let ss: StateSpace<f64> = StateSpace::from_rows(
            vec![vec![vec![(0, 0.5), (1, 0.5)]], vec![vec![(1, 1.0)]]],
            vec![("success".into(), vec![1])],
            vec![0],
        )
        .unwrap();
        let p = classify_terminals(&ss).unwrap();
        let s = outcome_summary(&ss, &p, Direction::Fixed, &SolveOptions::default()).unwrap();
        assert_eq!(s.get("success"), Some(1.0));
        assert_eq!(s.total(), 1.0);
    }

    #[test]
    fn min_and_max_bracket_one() {
        let ss: StateSpace<f64> = StateSpace::from_rows(
            vec![
                vec![vec![(1, 0.3), (2, 0.7)], vec![(1, 0.6), (2, 0.4)]],
                vec![vec![(1, 1.0)]],
                vec![vec![(2, 1.0)]],
            ],
            vec![("success".into(), vec![1]), ("missed".into(), vec![2])],
            vec![0],
        )
        .unwrap();
        let p = classify_terminals(&ss).unwrap();
        let o = SolveOptions::default();
        let min = outcome_summary(&ss, &p, Direction::Min, &o).unwrap();
        let max = outcome_summary(&ss, &p, Direction::Max, &o).unwrap();
        assert!(min.total() <= 1.0 + 1e-12 && max.total() >= 1.0 - 1e-12);
        assert_eq!(min.get("missed"), Some(0.4));
        assert_eq!(max.get("missed"), Some(0.7));
    }

    #[test]
    fn requires_absorption() {
        let ss: StateSpace<f64> = StateSpace::from_rows(
            vec![vec![vec![(1, 1.0)]], vec![vec![(0, 1.0)]]],
            vec![],
            vec![0],
        )
        .unwrap();
        let p = classify_terminals(&ss).unwrap();
        assert!(matches!(
            outcome_summary(&ss, &p, Direction::Fixed, &SolveOptions::default()),
            Err(AnalysisError::NotAlmostSurelyAbsorbing(_))
        ));
    }
}
