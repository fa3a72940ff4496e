use rayon::prelude::*;

use super::{AnalysisError, Convergence, Direction, SolveOptions};
use crate::scalar::Scalar;
use crate::statespace::TransitionMatrix;

const PAR_CHUNK: usize = 4096;

/// Optimal one-step backup of `state` against `values`.
fn backup<S: Scalar>(
    m: &TransitionMatrix<S>,
    state: usize,
    values: &[S],
    rewards: Option<&[S]>,
    dir: Direction,
) -> S {
    let mut best: Option<S> = None;
    for c in m.choices(state) {
        let (targets, probs) = m.row(c);
        let mut v = S::dot(targets, probs, values);
        if let Some(r) = rewards {
            v = v + r[c];
        }
        best = Some(match (best, dir) {
            (None, _) => v,
            (Some(b), Direction::Max) => b.max(v),
            (Some(b), _) => b.min(v),
        });
    }
    best.unwrap_or_else(S::zero)
}

fn relative_change<S: Scalar>(new: S, old: S) -> f64 {
    let diff = (new - old).abs().as_f64();
    if diff == 0.0 {
        return 0.0;
    }
    let scale = new.abs().as_f64();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Jacobi sweeps over `maybe` until the largest relative change drops below
/// the tolerance. Entries of `values` outside `maybe` stay fixed. Each sweep
/// reads the previous vector only, so results do not depend on the number
/// of worker threads.
pub(crate) fn jacobi<S: Scalar>(
    m: &TransitionMatrix<S>,
    maybe: &[u32],
    values: &mut [S],
    rewards: Option<&[S]>,
    dir: Direction,
    opts: &SolveOptions,
) -> Result<Convergence, AnalysisError> {
    if maybe.is_empty() {
        return Ok(Convergence::default());
    }
    let tolerance = opts.tolerance.max(4.0 * S::epsilon().as_f64());
    let mut next = vec![S::zero(); maybe.len()];
    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        let cur: &[S] = values;
        residual = next
            .par_iter_mut()
            .with_min_len(PAR_CHUNK)
            .zip(maybe.par_iter().with_min_len(PAR_CHUNK))
            .map(|(out, &s)| {
                *out = backup(m, s as usize, cur, rewards, dir);
                relative_change(*out, cur[s as usize])
            })
            .reduce(|| 0.0, f64::max);
        for (&s, &v) in maybe.iter().zip(&next) {
            values[s as usize] = v;
        }
        if residual < tolerance {
            return Ok(Convergence {
                iterations: iteration,
                residual,
            });
        }
    }
    Err(AnalysisError::NonConvergence {
        iterations: opts.max_iterations,
        residual,
    })
}
