//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use apfsm::model::{CommandId, Machine};
use apfsm::StateSpace;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Everything an exhaustive walk over all paths observes.
#[derive(Debug, Default)]
pub struct PathOracle {
    pub paths: usize,
    /// Probability of ending in each outcome category.
    pub categories: BTreeMap<String, f64>,
    /// Terminal-time distribution of paths ending in each category.
    pub end_times: BTreeMap<String, BTreeMap<i64, f64>>,
    /// Expected total of each reward structure.
    pub rewards: BTreeMap<String, f64>,
    /// Mass of the paths cut off below the probability floor.
    pub pruned: f64,
}

impl PathOracle {
    pub fn category(&self, name: &str) -> f64 {
        self.categories.get(name).copied().unwrap_or(0.0)
    }

    /// Probability of ending in `category` with time at most `deadline`.
    pub fn by_deadline(&self, category: &str, deadline: i64) -> f64 {
        self.end_times
            .get(category)
            .map_or(0.0, |m| m.range(..=deadline).map(|(_, p)| p).sum())
    }

    /// Earliest time at which `category` can be reached.
    pub fn earliest(&self, category: &str) -> Option<i64> {
        self.end_times
            .get(category)
            .and_then(|m| m.keys().next().copied())
    }
}

/// Walks every path of the argmax chain, splitting interval corners
/// uniformly. Outcomes are not merged, so each path is one sequence of
/// (corner, outcome) draws. Prefixes whose probability drops below `floor`
/// are not followed; their mass is reported in `pruned`. Panics past
/// `max_paths`.
pub fn enumerate_paths(
    machine: &Machine,
    time_var: &str,
    floor: f64,
    max_paths: usize,
) -> PathOracle {
    let time = machine.var_id(time_var).expect("time variable").0;
    let rewards: Vec<String> = machine.reward_names().map(str::to_string).collect();
    let mut oracle = PathOracle::default();
    let initial = machine.initial_states().unwrap();
    let share = 1.0 / initial.len() as f64;
    let mut acc = vec![0.0; rewards.len()];
    for s in initial {
        walk(
            machine,
            s.0,
            share,
            &mut acc,
            time,
            &rewards,
            floor,
            &mut oracle,
            max_paths,
        );
    }
    oracle
}

#[allow(clippy::too_many_arguments)]
fn walk(
    machine: &Machine,
    s: Vec<i64>,
    prob: f64,
    acc: &mut Vec<f64>,
    time: usize,
    rewards: &[String],
    floor: f64,
    oracle: &mut PathOracle,
    max_paths: usize,
) {
    let cmd = machine.select(&s, &mut Vec::new()).unwrap();
    let successors = cmd.map(|c| successors(machine, &s, c)).unwrap_or_default();
    if successors.iter().all(|(next, _, _)| *next == s) {
        oracle.paths += 1;
        assert!(oracle.paths <= max_paths, "more than {max_paths} paths");
        let cat = machine
            .classify(&s)
            .unwrap()
            .unwrap_or("unlabelled")
            .to_string();
        *oracle.categories.entry(cat.clone()).or_default() += prob;
        *oracle
            .end_times
            .entry(cat)
            .or_default()
            .entry(s[time])
            .or_default() += prob;
        for (name, total) in rewards.iter().zip(acc.iter()) {
            *oracle.rewards.entry(name.clone()).or_default() += prob * total;
        }
        return;
    }
    if prob < floor {
        oracle.pruned += prob;
        return;
    }
    let cmd = cmd.unwrap();
    for (next, p, _) in successors {
        let earned: Vec<f64> = (0..rewards.len())
            .map(|r| machine.transition_reward(r, &s, cmd, &next).unwrap())
            .collect();
        for (a, e) in acc.iter_mut().zip(&earned) {
            *a += e;
        }
        walk(
            machine,
            next,
            prob * p,
            acc,
            time,
            rewards,
            floor,
            oracle,
            max_paths,
        );
        for (a, e) in acc.iter_mut().zip(&earned) {
            *a -= e;
        }
    }
}

/// (successor, probability, corner) over every corner and outcome of `cmd`.
fn successors(machine: &Machine, s: &[i64], cmd: CommandId) -> Vec<(Vec<i64>, f64, usize)> {
    let corners = machine.corner_count(cmd);
    let mut out = Vec::new();
    let (mut corner, mut next) = (Vec::new(), Vec::new());
    for mask in 0..corners {
        machine.corner_values(cmd, mask, &mut corner);
        for k in 0..machine.outcome_count(cmd) {
            machine
                .apply_outcome(s, cmd, k, &corner, &mut next)
                .unwrap();
            out.push((
                next.clone(),
                machine.outcome_prob_f64(cmd, k) / corners as f64,
                mask,
            ));
        }
    }
    out
}

/// Dense rows: `rows[s][c] = [(t, p)]`.
pub type Rows = Vec<Vec<Vec<(u32, f64)>>>;

/// Reachability probabilities of a DTMC by Gaussian elimination on the
/// states that can reach the target; the rest are 0.
pub fn linear_reach(rows: &Rows, target: &[bool]) -> Vec<f64> {
    let n = rows.len();
    // backward closure of the target
    let mut can = target.to_vec();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !can[s] && rows[s][0].iter().any(|&(t, p)| p > 0.0 && can[t as usize]) {
                can[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&s| can[s] && !target[s]).collect();
    let index: BTreeMap<usize, usize> = unknown.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let k = unknown.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] = 1.0;
        for &(t, p) in &rows[s][0] {
            let t = t as usize;
            if target[t] {
                a[i][k] += p;
            } else if let Some(&j) = index.get(&t) {
                a[i][j] -= p;
            }
        }
    }
    let x = gauss(a);
    let mut out: Vec<f64> = target.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    for (i, &s) in unknown.iter().enumerate() {
        out[s] = x[i];
    }
    out
}

/// Expected total reward until `target` for a DTMC that reaches it almost
/// surely; `reward[s]` is earned on leaving `s`.
pub fn linear_reward(rows: &Rows, reward: &[f64], target: &[bool]) -> Vec<f64> {
    let n = rows.len();
    let unknown: Vec<usize> = (0..n).filter(|&s| !target[s]).collect();
    let index: BTreeMap<usize, usize> = unknown.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let k = unknown.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] = 1.0;
        a[i][k] = reward[s];
        for &(t, p) in &rows[s][0] {
            if let Some(&j) = index.get(&(t as usize)) {
                a[i][j] -= p;
            }
        }
    }
    let x = gauss(a);
    let mut out = vec![0.0; n];
    for (i, &s) in unknown.iter().enumerate() {
        out[s] = x[i];
    }
    out
}

/// Solves an augmented system with partial pivoting.
fn gauss(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let k = a.len();
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-14, "singular system");
        for j in col..=k {
            a[col][j] /= d;
        }
        for r in 0..k {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for j in col..=k {
                    a[r][j] -= f * a[col][j];
                }
            }
        }
    }
    a.iter().map(|row| row[k]).collect()
}

/// Per-state (min, max) reachability over every memoryless deterministic
/// scheduler.
pub fn scheduler_bounds(rows: &Rows, target: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let branching: Vec<usize> = (0..n).filter(|&s| rows[s].len() > 1).collect();
    let total: usize = branching.iter().map(|&s| rows[s].len()).product();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for mut code in 0..total {
        let mut pick = vec![0usize; n];
        for &s in &branching {
            pick[s] = code % rows[s].len();
            code /= rows[s].len();
        }
        let chain: Rows = (0..n).map(|s| vec![rows[s][pick[s]].clone()]).collect();
        for (s, v) in linear_reach(&chain, target).into_iter().enumerate() {
            lo[s] = lo[s].min(v);
            hi[s] = hi[s].max(v);
        }
    }
    (lo, hi)
}

fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<(u32, f64)> {
    let k = rng.random_range(1..=4usize);
    let mut targets: Vec<u32> = (0..k).map(|_| rng.random_range(0..n as u32)).collect();
    targets.sort_unstable();
    targets.dedup();
    let weights: Vec<f64> = targets
        .iter()
        .map(|_| rng.random_range(0.05..1.0))
        .collect();
    let sum: f64 = weights.iter().sum();
    let mut row: Vec<(u32, f64)> = targets
        .into_iter()
        .zip(weights.iter().map(|w| w / sum))
        .collect();
    // put the rounding residue on the last entry so the row sums to 1
    let total: f64 = row.iter().map(|e| e.1).sum();
    row.last_mut().unwrap().1 += 1.0 - total;
    row
}

/// Random model: states `0..goals` are absorbing targets, the next `sinks`
/// states absorbing non-targets; `branching` random states get 3 choices.
pub fn random_rows(seed: u64, n: usize, goals: usize, sinks: usize, branching: usize) -> Rows {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Rows = (0..n)
        .map(|s| {
            if s < goals + sinks {
                vec![vec![(s as u32, 1.0)]]
            } else {
                vec![random_row(&mut rng, n)]
            }
        })
        .collect();
    let mut free: Vec<usize> = (goals + sinks..n).collect();
    for _ in 0..branching.min(free.len()) {
        let s = free.swap_remove(rng.random_range(0..free.len()));
        rows[s].push(random_row(&mut rng, n));
        rows[s].push(random_row(&mut rng, n));
    }
    rows
}

pub fn state_space(rows: &Rows, goals: usize) -> StateSpace<f64> {
    StateSpace::from_rows(
        rows.clone(),
        vec![("goal".into(), (0..goals as u32).collect())],
        vec![(rows.len() - 1) as u32],
    )
    .unwrap()
}
