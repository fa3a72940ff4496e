use fixedbitset::FixedBitSet;
use serde::Serialize;

use super::graph::{self, Predecessors};
use super::{check_direction, label_set, reach_with, AnalysisError, Direction, SolveOptions};
use crate::scalar::{format_sig10, KahanSum, Scalar};
use crate::statespace::StateSpace;

/// Sample deadlines `from, from + step, ...` up to and including `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CurveRange {
    pub from: i64,
    pub to: i64,
    pub step: i64,
}

impl CurveRange {
    pub fn new(from: i64, to: i64, step: i64) -> Result<Self, AnalysisError> {
        if from > to {
            return Err(AnalysisError::InvalidRange(format!(
                "from {from} > to {to}"
            )));
        }
        if step <= 0 {
            return Err(AnalysisError::InvalidRange(format!(
                "step {step} must be positive"
            )));
        }
        Ok(Self { from, to, step })
    }

    pub fn points(&self) -> Vec<i64> {
        let mut out = Vec::new();
        let mut t = self.from;
        while t <= self.to {
            out.push(t);
            match t.checked_add(self.step) {
                Some(next) => t = next,
                None => break,
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub deadline: i64,
    pub min: f64,
    pub max: f64,
    pub uniform: f64,
}

/// Probability of reaching the target by each deadline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeadlineCurve {
    pub target: String,
    pub time_var: String,
    pub points: Vec<CurvePoint>,
}

impl DeadlineCurve {
    /// `T,min,max,uniform` with ten significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,min,max,uniform\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.deadline,
                format_sig10(p.min),
                format_sig10(p.max),
                format_sig10(p.uniform)
            ));
        }
        out
    }
}

/// Checks that `var` never decreases along a transition and that every
/// target state is absorbing.
fn check_preconditions<S: Scalar>(
    ss: &StateSpace<S>,
    label: &str,
    target: &FixedBitSet,
    var: usize,
) -> Result<(), AnalysisError> {
    let m = ss.matrix();
    for s in 0..ss.state_count() {
        let before = ss.value(s as u32, var);
        for c in m.choices(s) {
            let (targets, probs) = m.row(c);
            for (&t, p) in targets.iter().zip(probs) {
                if p.is_positive() && ss.value(t, var) < before {
                    return Err(AnalysisError::Monotonicity {
                        var: ss.var_names()[var].clone(),
                        state: ss.render_state(s as u32),
                        successor: ss.render_state(t),
                    });
                }
            }
        }
    }
    if let Some(s) = target.ones().find(|&s| !m.is_absorbing(s)) {
        return Err(AnalysisError::NotAbsorbing {
            label: label.to_string(),
            state: ss.render_state(s as u32),
        });
    }
    Ok(())
}

/// Probability of reaching `label` in a state whose `time_var` is at most
/// each deadline.
///
/// On a DTMC with one initial state a single forward pass distributes the
/// probability mass over the absorbing target states and aggregates it per
/// time value. Otherwise every deadline is a separate reachability query,
/// since optimal schedulers depend on the deadline.
pub fn deadline_series<S: Scalar>(
    ss: &StateSpace<S>,
    label: &str,
    time_var: &str,
    deadlines: &[i64],
    dir: Direction,
    opts: &SolveOptions,
) -> Result<Vec<S>, AnalysisError> {
    check_direction(ss, dir)?;
    let target = label_set(ss, label)?;
    let var = ss
        .var_index(time_var)
        .ok_or_else(|| AnalysisError::UnknownVariable(time_var.to_string()))?;
    check_preconditions(ss, label, target, var)?;
    let pred = Predecessors::new(ss.matrix());

    if ss.is_dtmc() && ss.initial().len() == 1 {
        let absorbed = absorption(ss, &pred, target, opts)?;
        let mut by_time: Vec<(i64, S)> = target
            .ones()
            .map(|g| (ss.value(g as u32, var), absorbed[g]))
            .collect();
        by_time.sort_by_key(|&(t, _)| t);
        let mut acc = KahanSum::new();
        let mut prefix = Vec::with_capacity(by_time.len());
        for &(t, p) in &by_time {
            acc.add(p);
            prefix.push((t, acc.value()));
        }
        return Ok(deadlines
            .iter()
            .map(|&d| {
                let k = prefix.partition_point(|&(t, _)| t <= d);
                if k == 0 {
                    S::zero()
                } else {
                    prefix[k - 1].1
                }
            })
            .collect());
    }

    let mut out = Vec::with_capacity(deadlines.len());
    for &d in deadlines {
        let mut bounded = target.clone();
        for g in target.ones() {
            if ss.value(g as u32, var) > d {
                bounded.set(g, false);
            }
        }
        let (values, _) = reach_with(ss.matrix(), &pred, &bounded, dir, opts)?;
        let init = ss.initial().iter().map(|&s| values[s as usize]);
        out.push(match dir {
            Direction::Max => init.fold(S::neg_infinity(), S::max),
            _ => init.fold(S::infinity(), S::min),
        });
    }
    Ok(out)
}

/// Probability of ending in each target state, from the single initial
/// state of a DTMC whose target states are absorbing.
fn absorption<S: Scalar>(
    ss: &StateSpace<S>,
    pred: &Predecessors,
    target: &FixedBitSet,
    opts: &SolveOptions,
) -> Result<Vec<S>, AnalysisError> {
    let n = ss.state_count();
    let m = ss.matrix();
    let dead = graph::prob0a(pred, target);
    let mut absorbed = vec![S::zero(); n];
    let mut mass = vec![S::zero(); n];
    let mut next_mass = vec![S::zero(); n];
    let mut queued = FixedBitSet::with_capacity(n);
    let mut active: Vec<u32> = Vec::new();
    let mut next_active: Vec<u32> = Vec::new();

    let s0 = ss.initial()[0] as usize;
    if target.contains(s0) {
        absorbed[s0] = S::one();
        return Ok(absorbed);
    }
    if !dead.contains(s0) {
        mass[s0] = S::one();
        active.push(s0 as u32);
    }
    let threshold = opts.tolerance * 1e-3;
    let mut iterations = 0;
    while !active.is_empty() {
        let remaining: S = active.iter().map(|&s| mass[s as usize]).sum();
        if remaining.as_f64() < threshold {
            break;
        }
        iterations += 1;
        if iterations > opts.max_iterations {
            return Err(AnalysisError::NonConvergence {
                iterations: opts.max_iterations,
                residual: remaining.as_f64(),
            });
        }
        for &s in &active {
            let s = s as usize;
            let ms = std::mem::replace(&mut mass[s], S::zero());
            let (targets, probs) = m.row(m.choices(s).start);
            for (&t, &p) in targets.iter().zip(probs) {
                let t = t as usize;
                if target.contains(t) {
                    absorbed[t] = absorbed[t] + ms * p;
                } else if !dead.contains(t) {
                    if !queued.contains(t) {
                        queued.insert(t);
                        next_active.push(t as u32);
                    }
                    next_mass[t] = next_mass[t] + ms * p;
                }
            }
        }
        for &t in &next_active {
            queued.set(t as usize, false);
        }
        std::mem::swap(&mut mass, &mut next_mass);
        std::mem::swap(&mut active, &mut next_active);
        next_active.clear();
    }
    Ok(absorbed)
}

/// Min, max and uniform deadline series. `ss` is the interval (or
/// autonomous) build; `uniform` the uniform build of the same model, which
/// may be omitted when `ss` is already a DTMC.
pub fn deadline_curve<S: Scalar>(
    ss: &StateSpace<S>,
    uniform: Option<&StateSpace<S>>,
    label: &str,
    time_var: &str,
    range: &CurveRange,
    opts: &SolveOptions,
) -> Result<DeadlineCurve, AnalysisError> {
    let deadlines = range.points();
    let (min, max) = if ss.is_dtmc() {
        let s = deadline_series(ss, label, time_var, &deadlines, Direction::Fixed, opts)?;
        (s.clone(), s)
    } else {
        (
            deadline_series(ss, label, time_var, &deadlines, Direction::Min, opts)?,
            deadline_series(ss, label, time_var, &deadlines, Direction::Max, opts)?,
        )
    };
    let uni = match uniform {
        Some(u) => deadline_series(u, label, time_var, &deadlines, Direction::Fixed, opts)?,
        None if ss.is_dtmc() => min.clone(),
        None => return Err(AnalysisError::MissingUniform),
    };
    Ok(DeadlineCurve {
        target: label.to_string(),
        time_var: time_var.to_string(),
        points: deadlines
            .iter()
            .enumerate()
            .map(|(i, &d)| CurvePoint {
                deadline: d,
                min: min[i].as_f64(),
                max: max[i].as_f64(),
                uniform: uni[i].as_f64(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::reach;
    use crate::format::load_model;
    use crate::model::Machine;
    use crate::statespace::{build, BuildMode, BuildOptions};

    const RACE: &str = "
        const interval D = [2..3];
        var m : [0..2] init 0;
        var t : [0..20] init 0;
        label done = m = 1;
        [Go] m = 0 & t < 10 -> 0.5:(m:=1, t+=D) + 0.5:(t+=D);
        [Stop] m = 0 & t >= 10 -> 1:(m:=2);
    ";

    fn spaces() -> (StateSpace<f64>, StateSpace<f64>) {
        let machine = Machine::new(&load_model(RACE).unwrap()).unwrap();
        (
            build(&machine, &BuildOptions::new(BuildMode::Interval)).unwrap(),
            build(&machine, &BuildOptions::new(BuildMode::Uniform)).unwrap(),
        )
    }

    #[test]
    fn range_points() {
        assert_eq!(CurveRange::new(0, 10, 5).unwrap().points(), vec![0, 5, 10]);
        assert_eq!(CurveRange::new(0, 9, 5).unwrap().points(), vec![0, 5]);
        assert!(CurveRange::new(3, 1, 1).is_err());
        assert!(CurveRange::new(0, 1, 0).is_err());
    }

    #[test]
    fn curve_bounds_and_limit() {
        let (iv, uni) = spaces();
        let o = SolveOptions::default();
        let curve = deadline_curve(
            &iv,
            Some(&uni),
            "done",
            "t",
            &CurveRange::new(0, 14, 1).unwrap(),
            &o,
        )
        .unwrap();
        for p in &curve.points {
            assert!(
                p.min <= p.uniform + 1e-12 && p.uniform <= p.max + 1e-12,
                "{p:?}"
            );
        }
        assert_eq!(curve.points[0].max, 0.0);
        assert_eq!(curve.points[1].max, 0.0);
        // fastest completion is t = 2 with probability 1/2
        assert!((curve.points[2].max - 0.5).abs() < 1e-12);
        assert_eq!(curve.points[2].min, 0.0);
        for w in curve.points.windows(2) {
            assert!(w[0].min <= w[1].min && w[0].max <= w[1].max && w[0].uniform <= w[1].uniform);
        }
        let last = curve.points.last().unwrap();
        let fixed = reach(&uni, "done", Direction::Fixed, &o)
            .unwrap()
            .initial_value();
        assert!((last.uniform - fixed).abs() < 1e-12);
        let csv = curve.to_csv();
        assert!(csv.starts_with("T,min,max,uniform\n0,0,0,0\n"));
    }

    #[test]
    fn dtmc_pass_matches_per_point_queries() {
        let (_, uni) = spaces();
        let o = SolveOptions::default();
        let deadlines: Vec<i64> = (0..16).collect();
        let fast = deadline_series(&uni, "done", "t", &deadlines, Direction::Fixed, &o).unwrap();
        let mdp_view = uni.clone();
        for (i, &d) in deadlines.iter().enumerate() {
            let mut bounded = uni.label("done").unwrap().clone();
            for g in uni.label("done").unwrap().ones() {
                if uni.value(g as u32, 1) > d {
                    bounded.set(g, false);
                }
            }
            let (v, _) =
                super::super::reach_set(mdp_view.matrix(), &bounded, Direction::Fixed, &o).unwrap();
            assert!((v[uni.initial()[0] as usize] - fast[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn decreasing_time_is_rejected() {
        let ss = StateSpace::from_rows(
            vec![vec![vec![(0, 1.0)]], vec![vec![(0, 0.5), (1, 0.5)]]],
            vec![("done".into(), vec![0])],
            vec![1],
        )
        .unwrap();
        let r = deadline_series(
            &ss,
            "done",
            "s",
            &[1],
            Direction::Fixed,
            &SolveOptions::default(),
        );
        assert!(
            matches!(r, Err(AnalysisError::Monotonicity { .. })),
            "{r:?}"
        );
    }
}
