use std::collections::VecDeque;

use crate::dp::{Kernel, Policy, TruncationSpec};
use crate::model::TandemModel;
use crate::scalar::Scalar;

use super::EvalError;

/// Uniformized transition matrix of the truncated chain under a fixed policy,
/// stored as sparse rows with merged duplicate targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyChain<T> {
    trunc: TruncationSpec,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> PolicyChain<T> {
    /// Arbitrary row-stochastic chain over the states of `trunc`.
    pub fn from_rows(trunc: TruncationSpec, rows: Vec<Vec<(usize, T)>>) -> Self {
        assert_eq!(rows.len(), trunc.n_states());
        Self { trunc, rows }
    }

    pub fn rows(&self) -> &[Vec<(usize, T)>] {
        &self.rows
    }

    pub fn trunc(&self) -> TruncationSpec {
        self.trunc
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    /// `pi P`
    pub fn left_multiply(&self, pi: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for (i, row) in self.rows.iter().enumerate() {
            let mass = pi[i];
            for &(j, p) in row {
                out[j] += mass * p;
            }
        }
    }

    /// Whether every state reaches every other along positive-probability moves.
    pub fn is_irreducible(&self) -> bool {
        let n = self.rows.len();
        let mut reverse = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                if p > T::zero() && i != j {
                    reverse[j].push(i);
                }
            }
        }
        let forward: Vec<Vec<usize>> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .filter(|(j, p)| *p > T::zero() && *j != i)
                    .map(|(j, _)| *j)
                    .collect()
            })
            .collect();
        reaches_all(&forward) && reaches_all(&reverse)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == adj.len()
}

/// Builds the uniformized chain of `policy`, with the same boundary blocking
/// as the dynamic program.
pub fn policy_chain<T: Scalar>(
    model: &TandemModel<T>,
    policy: &Policy,
    trunc: &TruncationSpec,
) -> Result<PolicyChain<T>, EvalError> {
    check_box(policy, trunc)?;
    let k = Kernel::new(model);
    let rows = trunc
        .states()
        .map(|x| {
            let i = trunc.index(x);
            let (a, b) = policy.action(x);
            let mut row: Vec<(usize, T)> = Vec::with_capacity(4);
            let mut add = |j: usize, p: T| {
                if j == i || p <= T::zero() {
                    return;
                }
                match row.iter_mut().find(|(t, _)| *t == j) {
                    Some(e) => e.1 += p,
                    None => row.push((j, p)),
                }
            };
            add(trunc.index(trunc.after_arrival(x)), k.p_arrival);
            add(trunc.index(trunc.after_transfer(x)), k.p1[a]);
            add(trunc.index(trunc.after_departure(x)), k.p2[b]);
            let moved: T = row.iter().map(|e| e.1).sum();
            let stay = T::one() - moved;
            if stay > T::zero() {
                row.push((i, stay));
            }
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();
    Ok(PolicyChain { trunc: *trunc, rows })
}

fn check_box(policy: &Policy, trunc: &TruncationSpec) -> Result<(), EvalError> {
    let got = policy.trunc();
    if (got.l1, got.l2) != (trunc.l1, trunc.l2) {
        return Err(EvalError::BoxMismatch {
            got: (got.l1, got.l2),
            want: (trunc.l1, trunc.l2),
        });
    }
    Ok(())
}

/// Stationary distribution of a policy chain, indexed like the box.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution<T> {
    trunc: TruncationSpec,
    pub pi: Vec<T>,
    /// `max |pi P - pi|` at the last sweep.
    pub residual: T,
    pub iterations: usize,
    /// The chain is not irreducible, so `pi` describes the classes reached from the uniform start.
    pub reducible_suspected: bool,
}

impl<T: Scalar> StationaryDistribution<T> {
    pub fn get(&self, x: crate::model::State) -> T {
        self.pi[self.trunc.index(x)]
    }

    pub fn trunc(&self) -> TruncationSpec {
        self.trunc
    }
}

/// Power iteration `pi <- pi P` from the uniform distribution, renormalized
/// every sweep, until `max |pi P - pi| <= tol`.
pub fn stationary_distribution<T: Scalar>(
    chain: &PolicyChain<T>,
    tol: T,
    max_iters: usize,
) -> Result<StationaryDistribution<T>, EvalError> {
    let n = chain.n_states();
    let mut pi = vec![T::one() / T::lit(n as f64); n];
    let mut next = vec![T::zero(); n];
    let mut residual = T::infinity();
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        chain.left_multiply(&pi, &mut next);
        let total: T = next.iter().copied().sum();
        residual = T::zero();
        for (p, q) in pi.iter_mut().zip(next.iter()) {
            let q = *q / total;
            residual = residual.max((q - *p).abs());
            *p = q;
        }
        if residual <= tol {
            return Ok(StationaryDistribution {
                trunc: chain.trunc,
                pi,
                residual,
                iterations,
                reducible_suspected: !chain.is_irreducible(),
            });
        }
    }
    Err(EvalError::NotConverged {
        iterations,
        residual: residual.as_f64(),
    })
}

/// Long-run average cost `sum_x pi(x) (h1 x1 + h2 x2 + c1(a(x)) + c2(b(x)))`
/// over every state of the box.
pub fn average_cost<T: Scalar>(model: &TandemModel<T>, policy: &Policy, pi: &StationaryDistribution<T>) -> T {
    let trunc = pi.trunc();
    trunc
        .states()
        .zip(&pi.pi)
        .map(|(x, p)| {
            let (a, b) = policy.action(x);
            *p * model.stage_cost(x, a, b)
        })
        .sum()
}
