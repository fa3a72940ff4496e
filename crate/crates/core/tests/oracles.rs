//! Model checking results against independent oracles: dense linear solves,
//! exhaustive scheduler enumeration and exhaustive path walks.

#![allow(clippy::needless_range_loop)]

mod support;

use apfsm::analysis::{
    deadline_curve, expected_reward, outcome_summary, reach, CurveRange, Direction,
    RewardStructure, SolveOptions,
};
use apfsm::scenario::{generate_model, ScenarioParams};
use apfsm::statespace::{classify_terminals, ABSORBING};
use apfsm::{build, load_model, BuildMode, BuildOptions, Machine, StateSpace};

fn opts() -> SolveOptions {
    SolveOptions {
        tolerance: 1e-12,
        ..Default::default()
    }
}

fn machine(p: &ScenarioParams) -> Machine {
    Machine::new(&load_model(&generate_model(p).unwrap()).unwrap()).unwrap()
}

fn interval_desk() -> ScenarioParams {
    ScenarioParams {
        approach_time: (3, 4),
        approach_battery: (2, 3),
        ..Default::default()
    }
}

#[test]
fn dtmc_reachability_matches_linear_solve() {
    for seed in 0..100 {
        let rows = support::random_rows(seed, 50, 3, 2, 0);
        let target: Vec<bool> = (0..50).map(|s| s < 3).collect();
        let exact = support::linear_reach(&rows, &target);
        let ss = support::state_space(&rows, 3);
        let vi = reach(&ss, "goal", Direction::Fixed, &opts()).unwrap();
        for s in 0..50 {
            let d = (vi.values[s] - exact[s]).abs();
            assert!(
                d < 1e-6,
                "seed {seed} state {s}: {} vs {}",
                vi.values[s],
                exact[s]
            );
        }
    }
}

#[test]
fn dtmc_reachability_in_single_precision() {
    for seed in 0..20 {
        let rows = support::random_rows(seed, 50, 3, 2, 0);
        let target: Vec<bool> = (0..50).map(|s| s < 3).collect();
        let exact = support::linear_reach(&rows, &target);
        let rows32 = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| c.iter().map(|&(t, p)| (t, p as f32)).collect())
                    .collect()
            })
            .collect();
        let ss: StateSpace<f32> =
            StateSpace::from_rows(rows32, vec![("goal".into(), vec![0, 1, 2])], vec![49]).unwrap();
        let vi = reach(&ss, "goal", Direction::Fixed, &SolveOptions::default()).unwrap();
        for s in 0..50 {
            assert!(
                (vi.values[s] as f64 - exact[s]).abs() < 1e-4,
                "seed {seed} state {s}"
            );
        }
    }
}

#[test]
fn mdp_bounds_match_scheduler_enumeration() {
    for seed in 0..50 {
        let rows = support::random_rows(1000 + seed, 30, 2, 2, 7);
        let target: Vec<bool> = (0..30).map(|s| s < 2).collect();
        let (lo, hi) = support::scheduler_bounds(&rows, &target);
        let ss = support::state_space(&rows, 2);
        let min = reach(&ss, "goal", Direction::Min, &opts()).unwrap();
        let max = reach(&ss, "goal", Direction::Max, &opts()).unwrap();
        for s in 0..30 {
            assert!(
                (min.values[s] - lo[s]).abs() < 1e-6,
                "seed {seed} state {s} min"
            );
            assert!(
                (max.values[s] - hi[s]).abs() < 1e-6,
                "seed {seed} state {s} max"
            );
        }
    }
}

#[test]
fn expected_reward_matches_linear_solve() {
    let mut checked = 0;
    let mut rejected = 0;
    for seed in 0..200 {
        let rows = support::random_rows(5000 + seed, 40, 2, 0, 0);
        let target: Vec<bool> = (0..40).map(|s| s < 2).collect();
        let ss = support::state_space(&rows, 2);
        let reward: Vec<f64> = (0..40)
            .map(|s| if s < 2 { 0.0 } else { 1.0 + (s % 5) as f64 })
            .collect();
        let rs = RewardStructure::from_choices("r", reward.clone());
        let sure = support::linear_reach(&rows, &target)
            .iter()
            .all(|&p| p > 1.0 - 1e-9);
        match expected_reward(&ss, &rs, "goal", Direction::Fixed, &opts()) {
            Ok(v) => {
                assert!(
                    sure,
                    "seed {seed}: accepted a model that may miss the target"
                );
                let exact = support::linear_reward(&rows, &reward, &target);
                for s in 0..40 {
                    assert!(
                        (v.values[s] - exact[s]).abs() <= 1e-6 * exact[s].max(1.0),
                        "seed {seed} state {s}: {} vs {}",
                        v.values[s],
                        exact[s]
                    );
                }
                checked += 1;
            }
            Err(_) => {
                assert!(
                    !sure,
                    "seed {seed}: rejected an almost surely terminating model"
                );
                rejected += 1;
            }
        }
    }
    assert!(
        checked >= 20 && rejected >= 1,
        "checked {checked} rejected {rejected}"
    );
}

/// Compares every analysis of a scenario with its exhaustive path walk.
fn check_against_paths(p: &ScenarioParams, mode: BuildMode) {
    let m = machine(p);
    let oracle = support::enumerate_paths(&m, "t", 0.0, 1_000_000);
    assert_eq!(oracle.pruned, 0.0);
    let ss: StateSpace<f64> = build(&m, &BuildOptions::new(mode)).unwrap();
    assert!(ss.is_dtmc());

    let part = classify_terminals(&ss).unwrap();
    let summary = outcome_summary(&ss, &part, Direction::Fixed, &opts()).unwrap();
    for (name, prob) in &summary.categories {
        let want = oracle.category(name);
        assert!((prob - want).abs() < 1e-6, "{name}: {prob} vs {want}");
    }
    assert!((summary.total() - 1.0).abs() < 1e-6);

    for name in ["time", "battery", "drops", "recharges"] {
        let rs = RewardStructure::from_model(&ss, &m, name).unwrap();
        let v = expected_reward(&ss, &rs, ABSORBING, Direction::Fixed, &opts()).unwrap();
        let want = oracle.rewards[name];
        assert!(
            (v.initial_value() - want).abs() <= 1e-6 * want.max(1.0),
            "{name}: {} vs {want}",
            v.initial_value()
        );
    }

    let limit = p.max_time();
    let curve = deadline_curve(
        &ss,
        None,
        "success",
        "t",
        &CurveRange::new(0, limit, 1).unwrap(),
        &opts(),
    )
    .unwrap();
    let earliest = oracle.earliest("success").unwrap();
    for pt in &curve.points {
        let want = oracle.by_deadline("success", pt.deadline);
        assert!(
            (pt.uniform - want).abs() < 1e-6,
            "T={}: {} vs {want}",
            pt.deadline,
            pt.uniform
        );
        if pt.deadline < earliest {
            assert_eq!(pt.uniform, 0.0);
        }
    }
    assert!(curve.points[earliest as usize].uniform > 0.0);
}

#[test]
fn desk_scenario_matches_path_walk() {
    check_against_paths(&ScenarioParams::default(), BuildMode::Autonomous);
}

#[test]
fn uniform_interval_desk_matches_path_walk() {
    check_against_paths(&interval_desk(), BuildMode::Uniform);
}

#[test]
fn small_arenas_match_path_walk() {
    for (w, h, alpha, grab) in [
        (1, 1, 0.5, 0.2),
        (2, 1, 0.3, 0.0),
        (2, 2, 0.4, 0.1),
        (3, 2, 0.6, 0.0),
    ] {
        let p = ScenarioParams {
            width: w,
            height: h,
            alpha,
            grab_failure: grab,
            time_limit: 40,
            capacity: 30,
            b_low: 8,
            ..Default::default()
        };
        check_against_paths(&p, BuildMode::Autonomous);
    }
}

#[test]
fn two_objects_match_path_walk() {
    let p = ScenarioParams {
        width: 2,
        height: 2,
        objects: 2,
        alpha: 0.5,
        time_limit: 50,
        capacity: 30,
        b_low: 10,
        ..Default::default()
    };
    check_against_paths(&p, BuildMode::Autonomous);
}
