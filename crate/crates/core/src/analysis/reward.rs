use super::graph::{self, Predecessors};
use super::{
    check_direction, iterate, label_set, AnalysisError, Direction, Objective, SolveOptions,
    ValueVector,
};
use crate::model::Machine;
use crate::scalar::Scalar;
use crate::statespace::StateSpace;

/// Expected immediate reward of every choice of a state space.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardStructure<S> {
    pub name: String,
    pub choice_rewards: Vec<S>,
}

impl<S: Scalar> RewardStructure<S> {
    pub fn from_choices(name: impl Into<String>, choice_rewards: Vec<S>) -> Self {
        Self {
            name: name.into(),
            choice_rewards,
        }
    }

    /// Evaluates the model's reward `name` on every transition: a choice
    /// earns the probability-weighted reward of its successors. Deadlock
    /// self-loops earn nothing.
    pub fn from_model(
        ss: &StateSpace<S>,
        machine: &Machine,
        name: &str,
    ) -> Result<Self, AnalysisError> {
        let idx = machine
            .reward_index(name)
            .ok_or_else(|| AnalysisError::UnknownReward(name.to_string()))?;
        let m = ss.matrix();
        let mut out = Vec::with_capacity(m.choice_count());
        let (mut cur, mut next) = (Vec::new(), Vec::new());
        for s in 0..ss.state_count() {
            ss.table().state_into(s as u32, &mut cur);
            for c in m.choices(s) {
                let Some(cmd) = ss.choice_command(c) else {
                    out.push(S::zero());
                    continue;
                };
                let (targets, probs) = m.row(c);
                let mut total = S::zero();
                for (&t, &p) in targets.iter().zip(probs) {
                    ss.table().state_into(t, &mut next);
                    let r = machine.transition_reward(idx, &cur, cmd, &next)?;
                    total = total + p * S::from_f64(r).expect("finite reward");
                }
                out.push(total);
            }
        }
        Ok(Self::from_choices(name, out))
    }
}

/// Expected reward accumulated before reaching `label`. Requires the target
/// to be reached with probability 1 under every scheduler from every state.
pub fn expected_reward<S: Scalar>(
    ss: &StateSpace<S>,
    reward: &RewardStructure<S>,
    label: &str,
    dir: Direction,
    opts: &SolveOptions,
) -> Result<ValueVector<S>, AnalysisError> {
    check_direction(ss, dir)?;
    let target = label_set(ss, label)?;
    let m = ss.matrix();
    assert_eq!(
        reward.choice_rewards.len(),
        m.choice_count(),
        "reward structure does not fit"
    );
    let pred = Predecessors::new(m);
    let no = graph::prob0e(m, &pred, target);
    let sure = graph::prob1a(&pred, target, &no);
    if let Some(s) = (0..ss.state_count()).find(|&s| !sure.contains(s)) {
        return Err(AnalysisError::RewardDivergence {
            target: label.to_string(),
            state: ss.render_state(s as u32),
        });
    }
    let mut values = vec![S::zero(); ss.state_count()];
    let maybe: Vec<u32> = (0..ss.state_count() as u32)
        .filter(|&s| !target.contains(s as usize))
        .collect();
    let convergence = iterate::jacobi(
        m,
        &maybe,
        &mut values,
        Some(&reward.choice_rewards),
        dir,
        opts,
    )?;
    Ok(ValueVector {
        values,
        objective: Objective {
            description: format!("R{{{}}}{}[F {label}]", reward.name, dir.name()),
            direction: dir,
        },
        convergence,
        initial: ss.initial().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::load_model;
    use crate::statespace::{build, BuildMode, BuildOptions};

    fn coin() -> StateSpace<f64> {
        StateSpace::from_rows(
            vec![vec![vec![(0, 0.5), (1, 0.5)]], vec![vec![(1, 1.0)]]],
            vec![("done".into(), vec![1])],
            vec![0],
        )
        .unwrap()
    }

    #[test]
    fn steps_until_heads() {
        let ss = coin();
        let r = RewardStructure::from_choices("steps", vec![1.0, 0.0]);
        let v =
            expected_reward(&ss, &r, "done", Direction::Fixed, &SolveOptions::default()).unwrap();
        assert!((v.initial_value() - 2.0).abs() < 1e-8);
        let zero = RewardStructure::from_choices("none", vec![0.0, 0.0]);
        let v = expected_reward(
            &ss,
            &zero,
            "done",
            Direction::Fixed,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(v.initial_value(), 0.0);
    }

    #[test]
    fn divergence_is_reported() {
        let ss = StateSpace::from_rows(
            vec![
                vec![vec![(1, 0.5), (2, 0.5)]],
                vec![vec![(1, 1.0)]],
                vec![vec![(2, 1.0)]],
            ],
            vec![("done".into(), vec![1])],
            vec![0],
        )
        .unwrap();
        let r = RewardStructure::from_choices("steps", vec![1.0, 0.0, 0.0]);
        let e = expected_reward(&ss, &r, "done", Direction::Fixed, &SolveOptions::default());
        assert!(matches!(e, Err(AnalysisError::RewardDivergence { .. })));
    }

    #[test]
    fn model_rewards_by_direction() {
        let src = "
            const interval D = [1..3];
            var m : [0..1] init 0;
            var t : [0..3] init 0;
            reward time = t' - t;
            reward go = [Go] 1;
            [Go] m = 0 -> 1:(m:=1, t+=D);
        ";
        let machine = Machine::new(&load_model(src).unwrap()).unwrap();
        let ss: StateSpace<f64> = build(&machine, &BuildOptions::new(BuildMode::Interval)).unwrap();
        let time = RewardStructure::from_model(&ss, &machine, "time").unwrap();
        let o = SolveOptions::default();
        let min = expected_reward(&ss, &time, "absorbing", Direction::Min, &o).unwrap();
        let max = expected_reward(&ss, &time, "absorbing", Direction::Max, &o).unwrap();
        assert_eq!((min.initial_value(), max.initial_value()), (1.0, 3.0));
        let go = RewardStructure::from_model(&ss, &machine, "go").unwrap();
        assert_eq!(
            expected_reward(&ss, &go, "absorbing", Direction::Max, &o)
                .unwrap()
                .initial_value(),
            1.0
        );
        assert!(RewardStructure::from_model(&ss, &machine, "nope").is_err());
    }
}
