//! Exhaustive minimization of the average cost over every deterministic
//! stationary policy on a tiny box. Used as an independent check on the
//! dynamic program.

use rayon::prelude::*;

use crate::dp::{Policy, TruncationSpec};
use crate::model::TandemModel;
use crate::scalar::Scalar;

use super::stationary::{average_cost, policy_chain, stationary_distribution};
use super::EvalError;

/// Largest number of policies [`brute_force_optimal`] will enumerate.
pub const ENUMERATION_CAP: u128 = 10_000_000;

const CHUNK: u64 = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub g_star: T,
    pub policy: Policy,
    /// Position of `policy` in the lexicographic enumeration.
    pub rank: u64,
    pub policies_evaluated: u64,
}

/// `(|A| |B|)^(states)`, saturating.
pub fn policy_count<T: Scalar>(model: &TandemModel<T>, trunc: &TruncationSpec) -> u128 {
    let per_state = (model.grid1().len() * model.grid2().len()) as u128;
    u32::try_from(trunc.n_states())
        .ok()
        .and_then(|n| per_state.checked_pow(n))
        .unwrap_or(u128::MAX)
}

/// Policy number `rank` in lexicographic order: state 0 is the most
/// significant digit and each digit is `a * |B| + b`.
fn decode(rank: u64, trunc: &TruncationSpec, n_b: usize, base: u64) -> Policy {
    let n = trunc.n_states();
    let mut actions = vec![(0, 0); n];
    let mut r = rank;
    for slot in actions.iter_mut().rev() {
        let digit = (r % base) as usize;
        r /= base;
        *slot = (digit / n_b, digit % n_b);
    }
    Policy::from_actions(*trunc, actions)
}

fn better<T: Scalar>(candidate: T, incumbent: T) -> bool {
    candidate < incumbent - T::lit(1e-12) * incumbent.abs().max(T::one())
}

/// Enumerates every policy on the box, evaluating each through its stationary
/// distribution, and returns the cheapest. Among policies within `1e-12`
/// (relative) of each other the earliest in enumeration order wins.
pub fn brute_force_optimal<T: Scalar>(
    model: &TandemModel<T>,
    trunc: &TruncationSpec,
    pi_tol: T,
    pi_max_iters: usize,
) -> Result<OracleResult<T>, EvalError> {
    let count = policy_count(model, trunc);
    if count > ENUMERATION_CAP {
        return Err(EvalError::TooLarge {
            per_state: model.grid1().len() * model.grid2().len(),
            states: trunc.n_states(),
            cap: ENUMERATION_CAP,
        });
    }
    let count = count as u64;
    let n_b = model.grid2().len();
    let base = (model.grid1().len() * n_b) as u64;

    let evaluate = |rank: u64| -> Result<T, EvalError> {
        let policy = decode(rank, trunc, n_b, base);
        let chain = policy_chain(model, &policy, trunc)?;
        let pi = stationary_distribution(&chain, pi_tol, pi_max_iters)?;
        Ok(average_cost(model, &policy, &pi))
    };

    let n_chunks = count.div_ceil(CHUNK);
    let chunk_bests: Vec<(T, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(count);
            let mut best = (evaluate(start)?, start);
            for rank in start + 1..end {
                let g = evaluate(rank)?;
                if better(g, best.0) {
                    best = (g, rank);
                }
            }
            Ok(best)
        })
        .collect::<Result<_, EvalError>>()?;

    let mut best = chunk_bests[0];
    for &cand in &chunk_bests[1..] {
        if better(cand.0, best.0) {
            best = cand;
        }
    }
    Ok(OracleResult {
        g_star: best.0,
        policy: decode(best.1, trunc, n_b, base),
        rank: best.1,
        policies_evaluated: count,
    })
}
