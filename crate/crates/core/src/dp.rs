//! Uniformized dynamic programming on a truncated state box.
//!
//! Transition probabilities are rates divided by the uniformization constant,
//! with the remaining mass as a self-loop. Stage costs stay cost *rates*, so
//! the long-run average cost of the discrete chain equals the average cost
//! per unit time of the original process and `g` needs no rescaling.
//!
//! Boundary handling on the box `0..=l1 x 0..=l2`:
//! - an arrival at `x1 = l1` is blocked and self-loops;
//! - a node-1 completion at `x2 = l2` is blocked and self-loops;
//! - service at an empty node self-loops, but its resource cost is still paid.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Node, State, TandemModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("relative value iteration did not converge in {iterations} iterations (span {span:e})")]
    NotConverged { iterations: usize, span: f64 },
}

/// The finite box `0..=l1 x 0..=l2` standing in for the infinite lattice,
/// plus the boundary margin excluded by structural checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TruncationSpec {
    pub l1: usize,
    pub l2: usize,
    pub margin: usize,
}

impl TruncationSpec {
    pub fn new(l1: usize, l2: usize, margin: usize) -> Result<Self, DpError> {
        if l1 < 2 || l2 < 2 {
            return Err(DpError::InvalidTruncation(format!(
                "caps must be at least 2, got l1={l1}, l2={l2}"
            )));
        }
        if 2 * margin >= l1.min(l2) {
            return Err(DpError::InvalidTruncation(format!(
                "margin {margin} must be below min(l1, l2) / 2"
            )));
        }
        Ok(Self { l1, l2, margin })
    }

    pub fn with_margin(self, margin: usize) -> Result<Self, DpError> {
        Self::new(self.l1, self.l2, margin)
    }

    pub fn n_states(&self) -> usize {
        (self.l1 + 1) * (self.l2 + 1)
    }

    /// Row-major index, `x1` major.
    #[inline]
    pub fn index(&self, x: State) -> usize {
        debug_assert!(self.contains(x));
        x.x1 * (self.l2 + 1) + x.x2
    }

    #[inline]
    pub fn state(&self, idx: usize) -> State {
        State::new(idx / (self.l2 + 1), idx % (self.l2 + 1))
    }

    #[inline]
    pub fn contains(&self, x: State) -> bool {
        x.x1 <= self.l1 && x.x2 <= self.l2
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.n_states()).map(|i| self.state(i))
    }

    /// `x + e1`, or `x` itself when the arrival is blocked.
    #[inline]
    pub fn after_arrival(&self, x: State) -> State {
        if x.x1 < self.l1 {
            x.arrival()
        } else {
            x
        }
    }

    /// `x - e1 + e2`, or `x` when node 1 is empty or node 2 is full.
    #[inline]
    pub fn after_transfer(&self, x: State) -> State {
        match x.transfer() {
            Some(y) if x.x2 < self.l2 => y,
            _ => x,
        }
    }

    /// `x - e2`, or `x` when node 2 is empty.
    #[inline]
    pub fn after_departure(&self, x: State) -> State {
        x.departure().unwrap_or(x)
    }

    /// Whether `x` lies in the box shrunk by `margin` on every side.
    #[inline]
    pub fn in_interior(&self, x: State) -> bool {
        let m = self.margin;
        x.x1 >= m && x.x1 + m <= self.l1 && x.x2 >= m && x.x2 + m <= self.l2
    }
}

/// Relative value function on the box, pinned to zero at `x_ref`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction<T> {
    trunc: TruncationSpec,
    values: Vec<T>,
    x_ref: State,
}

impl<T: Scalar> ValueFunction<T> {
    pub fn zeros(trunc: TruncationSpec) -> Self {
        Self {
            trunc,
            values: vec![T::zero(); trunc.n_states()],
            x_ref: State::ORIGIN,
        }
    }

    /// Samples `f` on every state of the box. No normalization is applied.
    pub fn from_fn(trunc: TruncationSpec, f: impl Fn(State) -> T) -> Self {
        Self {
            trunc,
            values: trunc.states().map(f).collect(),
            x_ref: State::ORIGIN,
        }
    }

    pub fn from_values(trunc: TruncationSpec, values: Vec<T>, x_ref: State) -> Self {
        assert_eq!(values.len(), trunc.n_states(), "value table does not cover the box");
        Self { trunc, values, x_ref }
    }

    #[inline]
    pub fn get(&self, x: State) -> T {
        self.values[self.trunc.index(x)]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn trunc(&self) -> TruncationSpec {
        self.trunc
    }

    pub fn x_ref(&self) -> State {
        self.x_ref
    }

    /// `v + k` everywhere.
    pub fn shifted(&self, k: T) -> Self {
        Self {
            trunc: self.trunc,
            values: self.values.iter().map(|v| *v + k).collect(),
            x_ref: self.x_ref,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions<T> {
    /// Stop once the span of `Tv - v` is at most this.
    pub tol: T,
    pub max_iters: usize,
    /// Relative tolerance for membership in an argmin set.
    pub tie_tol: T,
    pub x_ref: State,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9),
            max_iters: 200_000,
            tie_tol: T::lit(1e-10),
            x_ref: State::ORIGIN,
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tie_tol(mut self, tie_tol: T) -> Self {
        self.tie_tol = tie_tol;
        self
    }

    pub fn validate(&self, trunc: &TruncationSpec) -> Result<(), DpError> {
        if !(self.tol > T::zero()) {
            return Err(DpError::InvalidOptions("tol must be positive".into()));
        }
        if !(self.tie_tol >= T::zero()) {
            return Err(DpError::InvalidOptions("tie_tol must be nonnegative".into()));
        }
        if self.max_iters == 0 {
            return Err(DpError::InvalidOptions("max_iters must be at least 1".into()));
        }
        if !trunc.contains(self.x_ref) {
            return Err(DpError::InvalidOptions(format!("x_ref {} outside the box", self.x_ref)));
        }
        Ok(())
    }
}

/// A deterministic stationary policy on the box: one `(a, b)` pair of grid
/// indices per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    trunc: TruncationSpec,
    actions: Vec<(usize, usize)>,
}

impl Policy {
    pub fn from_actions(trunc: TruncationSpec, actions: Vec<(usize, usize)>) -> Self {
        assert_eq!(actions.len(), trunc.n_states(), "policy does not cover the box");
        Self { trunc, actions }
    }

    pub fn from_fn(trunc: TruncationSpec, f: impl Fn(State) -> (usize, usize)) -> Self {
        Self {
            trunc,
            actions: trunc.states().map(f).collect(),
        }
    }

    pub fn constant(trunc: TruncationSpec, a: usize, b: usize) -> Self {
        Self::from_fn(trunc, |_| (a, b))
    }

    #[inline]
    pub fn action(&self, x: State) -> (usize, usize) {
        self.actions[self.trunc.index(x)]
    }

    pub fn actions(&self) -> &[(usize, usize)] {
        &self.actions
    }

    pub fn trunc(&self) -> TruncationSpec {
        self.trunc
    }

    pub fn set(&mut self, x: State, action: (usize, usize)) {
        let i = self.trunc.index(x);
        self.actions[i] = action;
    }
}

/// Per-state argmin sets of the two event operators and the canonical
/// (smallest-index) selection from each.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    canonical: Policy,
    argmin1: Vec<Vec<usize>>,
    argmin2: Vec<Vec<usize>>,
}

impl PolicyTable {
    /// Builds a table from explicit argmin sets; canonical actions are their minima.
    pub fn from_sets(trunc: TruncationSpec, argmin1: Vec<Vec<usize>>, argmin2: Vec<Vec<usize>>) -> Self {
        assert_eq!(argmin1.len(), trunc.n_states());
        assert_eq!(argmin2.len(), trunc.n_states());
        let actions = argmin1
            .iter()
            .zip(&argmin2)
            .map(|(s1, s2)| {
                let a = *s1.iter().min().expect("empty argmin set");
                let b = *s2.iter().min().expect("empty argmin set");
                (a, b)
            })
            .collect();
        Self {
            canonical: Policy::from_actions(trunc, actions),
            argmin1,
            argmin2,
        }
    }

    /// A table whose argmin sets are the singletons of `policy`.
    pub fn from_policy(policy: Policy) -> Self {
        let argmin1 = policy.actions().iter().map(|p| vec![p.0]).collect();
        let argmin2 = policy.actions().iter().map(|p| vec![p.1]).collect();
        Self {
            canonical: policy,
            argmin1,
            argmin2,
        }
    }

    pub fn canonical(&self) -> &Policy {
        &self.canonical
    }

    pub fn action(&self, x: State) -> (usize, usize) {
        self.canonical.action(x)
    }

    pub fn argmin_set(&self, node: Node, x: State) -> &[usize] {
        let i = self.canonical.trunc.index(x);
        match node {
            Node::One => &self.argmin1[i],
            Node::Two => &self.argmin2[i],
        }
    }

    pub fn trunc(&self) -> TruncationSpec {
        self.canonical.trunc
    }
}

/// Uniformized transition probabilities of a model, cached for sweeps.
#[derive(Debug, Clone)]
pub(crate) struct Kernel<T> {
    pub p_arrival: T,
    pub p1: Vec<T>,
    pub p2: Vec<T>,
    pub c1: Vec<T>,
    pub c2: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(model: &TandemModel<T>) -> Self {
        let big = model.uniformization();
        let cfg = model.config();
        Self {
            p_arrival: model.lambda() / big,
            p1: cfg.node1.mu.iter().map(|m| *m / big).collect(),
            p2: cfg.node2.mu.iter().map(|m| *m / big).collect(),
            c1: cfg.node1.cost.clone(),
            c2: cfg.node2.cost.clone(),
        }
    }

    pub fn p1_max(&self) -> T {
        self.p1[self.p1.len() - 1]
    }

    pub fn p2_max(&self) -> T {
        self.p2[self.p2.len() - 1]
    }
}

/// `min_k p[k] * diff + c[k]` and the index achieving it first.
#[inline]
fn event_min<T: Scalar>(p: &[T], c: &[T], diff: T) -> (T, usize) {
    let mut best = p[0] * diff + c[0];
    let mut arg = 0;
    for k in 1..p.len() {
        let val = p[k] * diff + c[k];
        if val < best {
            best = val;
            arg = k;
        }
    }
    (best, arg)
}

/// All indices within the tie tolerance of the minimum, ascending.
fn event_argmin<T: Scalar>(p: &[T], c: &[T], diff: T, scale: T, tie_tol: T) -> Vec<usize> {
    let (best, _) = event_min(p, c, diff);
    let slack = tie_tol * scale.abs().max(T::one());
    (0..p.len())
        .filter(|&k| p[k] * diff + c[k] - best <= slack)
        .collect()
}

/// Node-1 event operator at `x`: `min_a mu1(a)/L v(x-e1+e2) + (mu1(max)-mu1(a))/L v(x) + c1(a)`
/// with `L` the uniformization constant. Returns the value and the argmin set.
pub fn apply_t1<T: Scalar>(
    model: &TandemModel<T>,
    v: &ValueFunction<T>,
    x: State,
    trunc: &TruncationSpec,
    tie_tol: T,
) -> (T, Vec<usize>) {
    let k = Kernel::new(model);
    let vx = v.get(x);
    let diff = v.get(trunc.after_transfer(x)) - vx;
    let (dmin, _) = event_min(&k.p1, &k.c1, diff);
    let value = k.p1_max() * vx + dmin;
    (value, event_argmin(&k.p1, &k.c1, diff, value, tie_tol))
}

/// Node-2 event operator at `x`, the mirror of [`apply_t1`] for departures.
pub fn apply_t2<T: Scalar>(
    model: &TandemModel<T>,
    v: &ValueFunction<T>,
    x: State,
    trunc: &TruncationSpec,
    tie_tol: T,
) -> (T, Vec<usize>) {
    let k = Kernel::new(model);
    let vx = v.get(x);
    let diff = v.get(trunc.after_departure(x)) - vx;
    let (dmin, _) = event_min(&k.p2, &k.c2, diff);
    let value = k.p2_max() * vx + dmin;
    (value, event_argmin(&k.p2, &k.c2, diff, value, tie_tol))
}

/// `Tv(x)` computed as `v(x)` plus probability-weighted differences, so that
/// the weights summing to one is exact and `T(v + K) = Tv + K`.
#[inline]
fn bellman_at<T: Scalar>(model: &TandemModel<T>, k: &Kernel<T>, trunc: &TruncationSpec, v: &[T], x: State) -> T {
    let vx = v[trunc.index(x)];
    let arr = v[trunc.index(trunc.after_arrival(x))] - vx;
    let d1 = v[trunc.index(trunc.after_transfer(x))] - vx;
    let d2 = v[trunc.index(trunc.after_departure(x))] - vx;
    let (m1, _) = event_min(&k.p1, &k.c1, d1);
    let (m2, _) = event_min(&k.p2, &k.c2, d2);
    vx + k.p_arrival * arr + m1 + m2 + model.holding_cost(x)
}

fn sweep<T: Scalar>(model: &TandemModel<T>, k: &Kernel<T>, trunc: &TruncationSpec, v: &[T], out: &mut Vec<T>) {
    (0..trunc.n_states())
        .into_par_iter()
        .map(|i| bellman_at(model, k, trunc, v, trunc.state(i)))
        .collect_into_vec(out);
}

/// One synchronous application of the full operator
/// `Tv(x) = lambda/L v(x+e1) + T1 v(x) + T2 v(x) + h1 x1 + h2 x2`,
/// returning the new values and the per-state argmin sets.
pub fn apply_t<T: Scalar>(
    model: &TandemModel<T>,
    v: &ValueFunction<T>,
    trunc: &TruncationSpec,
    tie_tol: T,
) -> (ValueFunction<T>, PolicyTable) {
    let k = Kernel::new(model);
    let rows: Vec<(T, Vec<usize>, Vec<usize>)> = (0..trunc.n_states())
        .into_par_iter()
        .map(|i| {
            let x = trunc.state(i);
            let value = bellman_at(model, &k, trunc, v.values(), x);
            let vx = v.values()[i];
            let d1 = v.get(trunc.after_transfer(x)) - vx;
            let d2 = v.get(trunc.after_departure(x)) - vx;
            let (m1, _) = event_min(&k.p1, &k.c1, d1);
            let (m2, _) = event_min(&k.p2, &k.c2, d2);
            let s1 = event_argmin(&k.p1, &k.c1, d1, k.p1_max() * vx + m1, tie_tol);
            let s2 = event_argmin(&k.p2, &k.c2, d2, k.p2_max() * vx + m2, tie_tol);
            (value, s1, s2)
        })
        .collect();
    let mut values = Vec::with_capacity(rows.len());
    let mut argmin1 = Vec::with_capacity(rows.len());
    let mut argmin2 = Vec::with_capacity(rows.len());
    for (value, s1, s2) in rows {
        values.push(value);
        argmin1.push(s1);
        argmin2.push(s2);
    }
    (
        ValueFunction::from_values(*trunc, values, v.x_ref()),
        PolicyTable::from_sets(*trunc, argmin1, argmin2),
    )
}

/// `max(d) - min(d)`.
pub fn span<T: Scalar>(d: &[T]) -> T {
    let (lo, hi) = min_max(d);
    hi - lo
}

/// Sequential reduction, so the result does not depend on thread count.
fn min_max<T: Scalar>(d: &[T]) -> (T, T) {
    assert!(!d.is_empty(), "span of an empty table");
    d.iter()
        .fold((d[0], d[0]), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

/// Output of relative value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub v: ValueFunction<T>,
    /// Average cost per unit time, the midpoint of the final bounds.
    pub g: T,
    pub policy: PolicyTable,
    pub iterations: usize,
    pub final_span: T,
    pub g_lower: T,
    pub g_upper: T,
    pub converged: bool,
    /// `(min, max)` of `Tv - v` at every iteration.
    pub bound_history: Vec<(T, T)>,
}

impl<T: Scalar> Solution<T> {
    pub fn require_converged(self) -> Result<Self, DpError> {
        if self.converged {
            Ok(self)
        } else {
            Err(DpError::NotConverged {
                iterations: self.iterations,
                span: self.final_span.as_f64(),
            })
        }
    }
}

/// Relative value iteration from `v = 0`: `w = Tv`, bounds from `w - v`,
/// then `v = w - w(x_ref)`, until the span of `w - v` is within `tol`.
///
/// A run that hits `max_iters` still returns its last iterate with
/// `converged = false`.
pub fn rvi_solve<T: Scalar>(
    model: &TandemModel<T>,
    trunc: &TruncationSpec,
    options: &SolverOptions<T>,
) -> Result<Solution<T>, DpError> {
    options.validate(trunc)?;
    let kernel = Kernel::new(model);
    let n = trunc.n_states();
    let ref_idx = trunc.index(options.x_ref);

    let mut v = vec![T::zero(); n];
    let mut prev = vec![T::zero(); n];
    let mut w = Vec::with_capacity(n);
    let mut diff = vec![T::zero(); n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let (mut lo, mut hi) = (T::zero(), T::zero());

    while iterations < options.max_iters {
        iterations += 1;
        sweep(model, &kernel, trunc, &v, &mut w);
        for i in 0..n {
            diff[i] = w[i] - v[i];
        }
        (lo, hi) = min_max(&diff);
        history.push((lo, hi));
        std::mem::swap(&mut prev, &mut v);
        let pin = w[ref_idx];
        for i in 0..n {
            v[i] = w[i] - pin;
        }
        if hi - lo <= options.tol {
            converged = true;
            break;
        }
    }

    let prev = ValueFunction::from_values(*trunc, prev, options.x_ref);
    let (_, policy) = apply_t(model, &prev, trunc, options.tie_tol);
    let half = T::lit(0.5);
    Ok(Solution {
        v: ValueFunction::from_values(*trunc, v, options.x_ref),
        g: (lo + hi) * half,
        policy,
        iterations,
        final_span: hi - lo,
        g_lower: lo,
        g_upper: hi,
        converged,
        bound_history: history,
    })
}

/// `max_x |Tv(x) - v(x) - g|` for a solution.
pub fn optimality_residual<T: Scalar>(model: &TandemModel<T>, trunc: &TruncationSpec, sol: &Solution<T>) -> T {
    let kernel = Kernel::new(model);
    let mut w = Vec::new();
    sweep(model, &kernel, trunc, sol.v.values(), &mut w);
    w.iter()
        .zip(sol.v.values())
        .map(|(t, v)| (*t - *v - sol.g).abs())
        .fold(T::zero(), T::max)
}

/// A state whose canonical action differs from the majority of its fiber.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecouplingViolation {
    pub node: Node,
    /// First interior state of the fiber holding the majority action.
    pub reference: State,
    pub state: State,
    pub reference_action: usize,
    pub action: usize,
}

/// Per-coordinate view of a policy table: node-1 action as a function of
/// `x1`, node-2 action as a function of `x2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginals {
    /// Majority canonical node-1 index on each fiber `x1 = const`.
    pub f1: Vec<usize>,
    /// Majority canonical node-2 index on each fiber `x2 = const`.
    pub f2: Vec<usize>,
    pub violations: Vec<DecouplingViolation>,
}

/// Projects a state-dependent policy onto the decoupled class `(f1(x1), f2(x2))`.
/// Only the interior range of the other coordinate is consulted.
pub fn extract_marginals(policy: &PolicyTable, trunc: &TruncationSpec) -> Marginals {
    let m = trunc.margin;
    let mut violations = Vec::new();
    let mut fiber = |node: Node, len: usize, other_range: std::ops::RangeInclusive<usize>| -> Vec<usize> {
        (0..=len)
            .map(|fixed| {
                let states: Vec<State> = other_range
                    .clone()
                    .map(|o| match node {
                        Node::One => State::new(fixed, o),
                        Node::Two => State::new(o, fixed),
                    })
                    .collect();
                let pick = |x: State| match node {
                    Node::One => policy.action(x).0,
                    Node::Two => policy.action(x).1,
                };
                let majority = majority(states.iter().map(|x| pick(*x)));
                let reference = *states
                    .iter()
                    .find(|x| pick(**x) == majority)
                    .expect("majority value occurs in fiber");
                for x in &states {
                    let action = pick(*x);
                    if action != majority {
                        violations.push(DecouplingViolation {
                            node,
                            reference,
                            state: *x,
                            reference_action: majority,
                            action,
                        });
                    }
                }
                majority
            })
            .collect()
    };
    let f1 = fiber(Node::One, trunc.l1, m..=trunc.l2 - m);
    let f2 = fiber(Node::Two, trunc.l2, m..=trunc.l1 - m);
    Marginals { f1, f2, violations }
}

/// Most frequent value; the smallest one on ties.
fn majority(values: impl Iterator<Item = usize>) -> usize {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let mut best = (0, 0);
    for (v, c) in counts {
        if c > best.1 {
            best = (v, c);
        }
    }
    best.0
}
