//! Numerical verification of structural properties of a solved instance:
//! monotonicity and second differences of the relative value function,
//! monotonicity and node ordering of the optimal actions, uniqueness, idling
//! at empty nodes and bang-bang structure.
//!
//! Every check compares only states inside the box shrunk by the truncation
//! margin (the idle-node and uniqueness checks, which read a single state,
//! cover the whole box). Checks whose hypotheses fail are reported as
//! `SKIPPED`, or `INFO` when run in [`CheckMode::Info`], together with the
//! evidence used to decide the hypotheses.

use serde::Serialize;
use serde_json::{json, Value};

use crate::dp::{extract_marginals, DecouplingViolation, Solution, TruncationSpec};
use crate::model::{Node, NodeSpec, State, TandemModel};
use crate::scalar::Scalar;

/// Absolute tolerance for value comparisons.
pub const VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    /// Hypotheses not met; the check was not run.
    Skipped,
    /// Run for information only; never counts as a failure.
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Strict,
    /// Also run gated checks whose hypotheses fail, and the all-selections
    /// variants of the policy monotonicity check.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub states: Vec<State>,
    pub lhs: f64,
    pub rhs: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub id: String,
    pub status: Status,
    pub violations: Vec<Violation>,
    /// States the check compared.
    pub states_checked: usize,
    pub evidence: Value,
}

impl CheckEntry {
    fn new(id: &str, status: Status, violations: Vec<Violation>, states_checked: usize, evidence: Value) -> Self {
        Self {
            id: id.into(),
            status,
            violations,
            states_checked,
            evidence,
        }
    }

    fn skipped(id: &str, evidence: Value) -> Self {
        Self::new(id, Status::Skipped, Vec::new(), 0, evidence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckParams {
    pub margin: usize,
    pub value_tol: f64,
    pub tie_tol: f64,
    pub mode: CheckMode,
}

impl CheckParams {
    pub fn new(trunc: &TruncationSpec, mode: CheckMode) -> Self {
        Self {
            margin: trunc.margin,
            value_tol: VALUE_TOL,
            tie_tol: 1e-10,
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecouplingSummary {
    pub f1: Vec<usize>,
    pub f2: Vec<usize>,
    pub violation_count: usize,
    pub violations: Vec<DecouplingViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckCounts {
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
    pub info: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub params: CheckParams,
    pub solution_converged: bool,
    pub entries: Vec<CheckEntry>,
    pub decoupling: DecouplingSummary,
    pub counts: CheckCounts,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.counts.fail == 0
    }

    pub fn entry(&self, id: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Shared view used by the individual checks.
pub struct Checker<'a, T> {
    pub model: &'a TandemModel<T>,
    pub solution: &'a Solution<T>,
    pub trunc: TruncationSpec,
    pub params: CheckParams,
}

/// Collects `lhs >= rhs - tol` comparisons into violations.
struct Inequalities<'c> {
    check: &'c str,
    tol: f64,
    checked: usize,
    violations: Vec<Violation>,
}

impl<'c> Inequalities<'c> {
    fn new(check: &'c str, tol: f64) -> Self {
        Self {
            check,
            tol,
            checked: 0,
            violations: Vec::new(),
        }
    }

    fn ge(&mut self, states: &[State], lhs: f64, rhs: f64) {
        self.checked += 1;
        let magnitude = rhs - lhs;
        if magnitude > self.tol {
            self.violations.push(Violation {
                check: self.check.into(),
                states: states.to_vec(),
                lhs,
                rhs,
                magnitude,
            });
        }
    }
}

fn status_for(violations: &[Violation]) -> Status {
    if violations.is_empty() {
        Status::Pass
    } else {
        Status::Fail
    }
}

impl<'a, T: Scalar> Checker<'a, T> {
    pub fn new(model: &'a TandemModel<T>, solution: &'a Solution<T>, trunc: &TruncationSpec, mode: CheckMode) -> Self {
        Self {
            model,
            solution,
            trunc: *trunc,
            params: CheckParams::new(trunc, mode),
        }
    }

    pub fn with_params(mut self, params: CheckParams) -> Self {
        self.params = params;
        self
    }

    fn v(&self, x: State) -> f64 {
        self.solution.v.get(x).as_f64()
    }

    fn all_interior(&self, states: &[Option<State>]) -> Option<Vec<State>> {
        states
            .iter()
            .map(|s| s.filter(|x| self.trunc.in_interior(*x)))
            .collect()
    }

    fn interior_states(&self) -> impl Iterator<Item = State> + '_ {
        self.trunc.states().filter(|x| self.trunc.in_interior(*x))
    }

    fn gate_status(&self, holds: bool, violations: &[Violation]) -> Status {
        if holds {
            status_for(violations)
        } else {
            Status::Info
        }
    }

    /// `v(x + e_i) >= v(x)` for both coordinates.
    pub fn check_nondecreasing(&self) -> CheckEntry {
        let id = "value_nondecreasing";
        let mut ineq = Inequalities::new(id, self.params.value_tol);
        for x in self.interior_states() {
            for y in [State::new(x.x1 + 1, x.x2), State::new(x.x1, x.x2 + 1)] {
                if self.trunc.in_interior(y) {
                    ineq.ge(&[x, y], self.v(y), self.v(x));
                }
            }
        }
        let status = status_for(&ineq.violations);
        CheckEntry::new(id, status, ineq.violations, ineq.checked, json!({}))
    }

    /// Swap dominance, two gated parts: `v(x-e1+e2) >= v(x-e2)` when
    /// `2 h2 >= h1`, and `v(x) >= v(x-e1+e2)` when `h1 >= h2`, for `x1, x2 >= 1`.
    pub fn check_swap_dominance(&self) -> [CheckEntry; 2] {
        let cfg = self.model.config();
        let (h1, h2) = (cfg.h1.as_f64(), cfg.h2.as_f64());
        let gate_lower = 2.0 * h2 >= h1;
        let gate_upper = h1 >= h2;

        let run = |id: &str, holds: bool, gate: &str, pick: &dyn Fn(State) -> Option<(State, State)>| {
            let evidence = json!({ "condition": gate, "h1": h1, "h2": h2, "holds": holds });
            if !holds && self.params.mode == CheckMode::Strict {
                return CheckEntry::skipped(id, evidence);
            }
            let mut ineq = Inequalities::new(id, self.params.value_tol);
            for x in self.interior_states().filter(|x| x.x1 >= 1 && x.x2 >= 1) {
                if let Some((big, small)) = pick(x) {
                    if self.all_interior(&[Some(big), Some(small)]).is_some() {
                        ineq.ge(&[x, big, small], self.v(big), self.v(small));
                    }
                }
            }
            let status = self.gate_status(holds, &ineq.violations);
            CheckEntry::new(id, status, ineq.violations, ineq.checked, evidence)
        };

        let tr = |x: State| State::new(x.x1 - 1, x.x2 + 1);
        let dn = |x: State| State::new(x.x1, x.x2 - 1);
        [
            run("transfer_dominates_departure", gate_lower, "2*h2 >= h1", &|x| Some((tr(x), dn(x)))),
            run("holding_dominates_transfer", gate_upper, "h1 >= h2", &|x| Some((x, tr(x)))),
        ]
    }

    /// Nonnegative second differences along `e2` and along `e1 - e2`.
    pub fn check_quasiconvexity(&self) -> [CheckEntry; 2] {
        let run = |id: &str, dir: &dyn Fn(State) -> Option<(State, State)>| {
            let mut ineq = Inequalities::new(id, self.params.value_tol);
            for x in self.interior_states() {
                let Some((up, down)) = dir(x) else { continue };
                if self.all_interior(&[Some(up), Some(down)]).is_some() {
                    let second = self.v(up) - 2.0 * self.v(x) + self.v(down);
                    ineq.ge(&[down, x, up], second, 0.0);
                }
            }
            let status = status_for(&ineq.violations);
            CheckEntry::new(id, status, ineq.violations, ineq.checked, json!({}))
        };
        [
            run("convex_along_node2", &|x| {
                (x.x2 >= 1).then(|| (State::new(x.x1, x.x2 + 1), State::new(x.x1, x.x2 - 1)))
            }),
            run("convex_along_transfer", &|x| {
                (x.x1 >= 1 && x.x2 >= 1).then(|| (State::new(x.x1 + 1, x.x2 - 1), State::new(x.x1 - 1, x.x2 + 1)))
            }),
        ]
    }

    /// Canonical node-2 action nondecreasing in `x2` and node-1 action
    /// nondecreasing in `x1`. In info mode the all-selections variant
    /// (`min argmin(x+e) >= max argmin(x)`) is appended as `INFO` entries.
    pub fn check_policy_monotonicity(&self) -> Vec<CheckEntry> {
        let policy = &self.solution.policy;
        let run = |id: &str, node: Node, step: fn(State) -> State, all: bool| {
            let grid = self.model.node(node).actions.values();
            let mut ineq = Inequalities::new(id, self.params.value_tol);
            for x in self.interior_states() {
                let y = step(x);
                if !self.trunc.in_interior(y) {
                    continue;
                }
                let (lhs, rhs) = if all {
                    let hi = *policy.argmin_set(node, y).iter().min().expect("nonempty");
                    let lo = *policy.argmin_set(node, x).iter().max().expect("nonempty");
                    (hi, lo)
                } else {
                    let pick = |s: State| match node {
                        Node::One => policy.action(s).0,
                        Node::Two => policy.action(s).1,
                    };
                    (pick(y), pick(x))
                };
                ineq.ge(&[x, y], grid[lhs].as_f64(), grid[rhs].as_f64());
            }
            let status = if all { Status::Info } else { status_for(&ineq.violations) };
            CheckEntry::new(id, status, ineq.violations, ineq.checked, json!({ "selector": if all { "all" } else { "canonical" } }))
        };
        let e2 = |x: State| State::new(x.x1, x.x2 + 1);
        let e1 = |x: State| State::new(x.x1 + 1, x.x2);
        let mut out = vec![
            run("policy_monotone_node2", Node::Two, e2, false),
            run("policy_monotone_node1", Node::One, e1, false),
        ];
        if self.params.mode == CheckMode::Info {
            out.push(run("policy_monotone_node2_all_selections", Node::Two, e2, true));
            out.push(run("policy_monotone_node1_all_selections", Node::One, e1, true));
        }
        out
    }

    /// Node 2 gets at least as much resource as node 1 when both nodes are
    /// occupied, provided the grids coincide and for every `a >= b`
    /// `c1(a)-c1(b) >= c2(a)-c2(b)` and `mu2(a)-mu2(b) >= mu1(a)-mu1(b)`.
    pub fn check_node_ordering(&self) -> CheckEntry {
        let id = "node_ordering";
        let cfg = self.model.config();
        let g1 = cfg.node1.actions.values();
        let g2 = cfg.node2.actions.values();
        let same_grid = g1 == g2;
        let premises = same_grid.then(|| ordering_premises(&cfg.node1, &cfg.node2));
        let holds = premises.as_ref().is_some_and(|p| p.cost && p.rate);
        let evidence = json!({
            "identical_grids": same_grid,
            "cost_premise": premises.as_ref().map(|p| p.cost),
            "rate_premise": premises.as_ref().map(|p| p.rate),
            "pairs_tested": premises.as_ref().map(|p| p.pairs),
        });
        if !holds && self.params.mode == CheckMode::Strict {
            return CheckEntry::skipped(id, evidence);
        }
        let mut ineq = Inequalities::new(id, self.params.value_tol);
        for x in self.interior_states().filter(|x| x.x1 >= 1 && x.x2 >= 1) {
            let (a, b) = self.solution.policy.action(x);
            ineq.ge(&[x], g2[b].as_f64(), g1[a].as_f64());
        }
        let status = self.gate_status(holds, &ineq.violations);
        CheckEntry::new(id, status, ineq.violations, ineq.checked, evidence)
    }

    /// Singleton argmin sets everywhere when each node's cell-wise
    /// `dc/dmu` sequence is monotone. Needs grids of at least 3 points.
    pub fn check_uniqueness(&self) -> CheckEntry {
        let id = "argmin_unique";
        let cfg = self.model.config();
        let nodes = [(Node::One, &cfg.node1), (Node::Two, &cfg.node2)];
        let enough_points = nodes.iter().all(|(_, n)| n.actions.len() >= 3);
        let mut node_evidence = serde_json::Map::new();
        let mut holds = enough_points;
        for (node, spec) in nodes {
            let quotients = cell_quotients(spec);
            let mono = is_monotone(&quotients);
            holds &= mono;
            node_evidence.insert(
                node.to_string(),
                json!({ "cell_quotients": quotients, "monotone": mono }),
            );
        }
        let evidence = json!({
            "grids_have_interior": enough_points,
            "nodes": node_evidence,
            "scope": "all_states",
            "tie_tol": self.params.tie_tol,
        });
        if !holds && self.params.mode == CheckMode::Strict {
            return CheckEntry::skipped(id, evidence);
        }
        let mut violations = Vec::new();
        let mut checked = 0;
        for x in self.trunc.states() {
            checked += 1;
            for node in [Node::One, Node::Two] {
                let size = self.solution.policy.argmin_set(node, x).len();
                if size > 1 {
                    violations.push(Violation {
                        check: format!("{id}_{node}"),
                        states: vec![x],
                        lhs: size as f64,
                        rhs: 1.0,
                        magnitude: (size - 1) as f64,
                    });
                }
            }
        }
        let status = self.gate_status(holds, &violations);
        CheckEntry::new(id, status, violations, checked, evidence)
    }

    /// Canonical node-1 action is 0 wherever `x1 = 0`, node-2 action is 0
    /// wherever `x2 = 0`.
    pub fn check_idle_zero(&self) -> CheckEntry {
        let id = "idle_node_zero";
        let cfg = self.model.config();
        let mut violations = Vec::new();
        let mut checked = 0;
        for x in self.trunc.states() {
            let (a, b) = self.solution.policy.action(x);
            for (empty, idx, node) in [(x.x1 == 0, a, Node::One), (x.x2 == 0, b, Node::Two)] {
                if !empty {
                    continue;
                }
                checked += 1;
                if idx != 0 {
                    let value = self.model.node(node).actions.values()[idx].as_f64();
                    violations.push(Violation {
                        check: format!("{id}_{node}"),
                        states: vec![x],
                        lhs: value,
                        rhs: 0.0,
                        magnitude: value,
                    });
                }
            }
        }
        let evidence = json!({
            "node1_cost_strictly_positive": cfg.node1.cost_strictly_positive(),
            "node2_cost_strictly_positive": cfg.node2.cost_strictly_positive(),
        });
        CheckEntry::new(id, status_for(&violations), violations, checked, evidence)
    }

    /// Premise audit plus structure scan for bang-bang control.
    pub fn check_bangbang(&self) -> CheckEntry {
        let id = "bang_bang";
        let cfg = self.model.config();
        let testable = cfg.node1.actions.len() >= 3 && cfg.node2.actions.len() >= 3;
        let p1 = bang_bang_premises(&cfg.node1);
        let p2 = bang_bang_premises(&cfg.node2);
        let holds = testable && p1.holds() && p2.holds();
        let scan = bang_bang_scan(self.model, self.solution, &self.trunc);
        let evidence = json!({
            "premises_testable": testable,
            "premises_hold": holds,
            "node1": p1,
            "node2": p2,
            "fraction": scan.fraction,
            "fraction_node1": scan.fraction_node1,
            "fraction_node2": scan.fraction_node2,
            "states_scanned": scan.states,
        });
        let status = if !testable {
            Status::Info
        } else if !holds {
            match self.params.mode {
                CheckMode::Strict => Status::Skipped,
                CheckMode::Info => Status::Info,
            }
        } else {
            Status::Pass
        };
        let violations: Vec<Violation> = if holds {
            scan.interior_actions
                .iter()
                .map(|x| Violation {
                    check: id.into(),
                    states: vec![*x],
                    lhs: 0.0,
                    rhs: 1.0,
                    magnitude: 1.0,
                })
                .collect()
        } else {
            Vec::new()
        };
        let status = if status == Status::Pass { status_for(&violations) } else { status };
        CheckEntry::new(id, status, violations, scan.states, evidence)
    }
}

struct OrderingPremises {
    cost: bool,
    rate: bool,
    pairs: usize,
}

fn ordering_premises<T: Scalar>(n1: &NodeSpec<T>, n2: &NodeSpec<T>) -> OrderingPremises {
    let mut out = OrderingPremises {
        cost: true,
        rate: true,
        pairs: 0,
    };
    let k = n1.actions.len();
    for hi in 0..k {
        for lo in 0..=hi {
            out.pairs += 1;
            out.cost &= n1.cost[hi] - n1.cost[lo] >= n2.cost[hi] - n2.cost[lo];
            out.rate &= n2.mu[hi] - n2.mu[lo] >= n1.mu[hi] - n1.mu[lo];
        }
    }
    out
}

/// `(c[i+1] - c[i]) / (mu[i+1] - mu[i])` for each grid cell.
pub fn cell_quotients<T: Scalar>(node: &NodeSpec<T>) -> Vec<f64> {
    (1..node.actions.len())
        .map(|i| ((node.cost[i] - node.cost[i - 1]) / (node.mu[i] - node.mu[i - 1])).as_f64())
        .collect()
}

/// Non-strictly monotone in either direction.
fn is_monotone(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0]) || xs.windows(2).all(|w| w[1] <= w[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BangBangPremises {
    /// `c(a) / mu(a)` at grid points `a > 0`.
    pub average_ratio: Vec<f64>,
    pub ratio_nonincreasing: bool,
    /// Per interior grid point: forward cell quotient and whether it exceeds `c/mu` there.
    pub interior_points: Vec<InteriorPoint>,
    pub marginal_exceeds_average: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorPoint {
    pub action: f64,
    pub forward_quotient: f64,
    pub average_ratio: f64,
    pub holds: bool,
}

impl BangBangPremises {
    pub fn holds(&self) -> bool {
        self.ratio_nonincreasing && self.marginal_exceeds_average
    }
}

/// Evaluates the two bang-bang hypotheses of a node on its grid: `c/mu`
/// non-increasing over `a > 0`, and at every interior grid point the forward
/// difference quotient `dc/dmu` strictly above `c/mu`.
pub fn bang_bang_premises<T: Scalar>(node: &NodeSpec<T>) -> BangBangPremises {
    let n = node.actions.len();
    let ratio: Vec<f64> = (1..n).map(|i| (node.cost[i] / node.mu[i]).as_f64()).collect();
    let ratio_nonincreasing = ratio.windows(2).all(|w| w[1] <= w[0]);
    let quotients = cell_quotients(node);
    let interior_points: Vec<InteriorPoint> = (1..n.saturating_sub(1))
        .map(|i| {
            let avg = ratio[i - 1];
            let fwd = quotients[i];
            InteriorPoint {
                action: node.actions.values()[i].as_f64(),
                forward_quotient: fwd,
                average_ratio: avg,
                holds: fwd > avg,
            }
        })
        .collect();
    let marginal_exceeds_average = interior_points.iter().all(|p| p.holds);
    BangBangPremises {
        average_ratio: ratio,
        ratio_nonincreasing,
        interior_points,
        marginal_exceeds_average,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BangBangScan {
    /// Share of interior states whose canonical actions are both extreme.
    pub fraction: f64,
    pub fraction_node1: f64,
    pub fraction_node2: f64,
    pub states: usize,
    /// Interior states using a non-extreme action at either node.
    pub interior_actions: Vec<State>,
}

pub fn bang_bang_scan<T: Scalar>(model: &TandemModel<T>, solution: &Solution<T>, trunc: &TruncationSpec) -> BangBangScan {
    let (mut both, mut one, mut two, mut states) = (0usize, 0usize, 0usize, 0usize);
    let mut interior_actions = Vec::new();
    for x in trunc.states().filter(|x| trunc.in_interior(*x)) {
        let (a, b) = solution.policy.action(x);
        let ea = model.grid1().is_extreme(a);
        let eb = model.grid2().is_extreme(b);
        states += 1;
        one += usize::from(ea);
        two += usize::from(eb);
        if ea && eb {
            both += 1;
        } else {
            interior_actions.push(x);
        }
    }
    let frac = |k: usize| if states == 0 { 1.0 } else { k as f64 / states as f64 };
    BangBangScan {
        fraction: frac(both),
        fraction_node1: frac(one),
        fraction_node2: frac(two),
        states,
        interior_actions,
    }
}

/// Whether the gates `2 h2 >= h1` and `h1 >= h2` of the two swap-dominance checks hold.
pub fn swap_gates<T: Scalar>(model: &TandemModel<T>) -> (bool, bool) {
    let cfg = model.config();
    (cfg.h2 + cfg.h2 >= cfg.h1, cfg.h1 >= cfg.h2)
}

/// Runs every check plus the decoupling scan.
pub fn run_all_checks<T: Scalar>(
    model: &TandemModel<T>,
    solution: &Solution<T>,
    trunc: &TruncationSpec,
    mode: CheckMode,
) -> CheckReport {
    run_with(Checker::new(model, solution, trunc, mode))
}

pub fn run_with<T: Scalar>(checker: Checker<'_, T>) -> CheckReport {
    let mut entries = vec![checker.check_nondecreasing()];
    entries.extend(checker.check_swap_dominance());
    entries.extend(checker.check_quasiconvexity());
    entries.extend(checker.check_policy_monotonicity());
    entries.push(checker.check_node_ordering());
    entries.push(checker.check_uniqueness());
    entries.push(checker.check_idle_zero());
    entries.push(checker.check_bangbang());

    let marginals = extract_marginals(&checker.solution.policy, &checker.trunc);
    let count = |s: Status| entries.iter().filter(|e| e.status == s).count();
    let counts = CheckCounts {
        pass: count(Status::Pass),
        fail: count(Status::Fail),
        skipped: count(Status::Skipped),
        info: count(Status::Info),
    };
    CheckReport {
        params: checker.params,
        solution_converged: checker.solution.converged,
        decoupling: DecouplingSummary {
            f1: marginals.f1,
            f2: marginals.f2,
            violation_count: marginals.violations.len(),
            violations: marginals.violations,
        },
        entries,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{Policy, PolicyTable, ValueFunction};
    use crate::model::ModelConfig;

    fn model(h: (f64, f64), n1: (&[f64], &[f64], &[f64]), n2: (&[f64], &[f64], &[f64])) -> TandemModel<f64> {
        let a = NodeSpec::new(Node::One, n1.0.to_vec(), n1.1.to_vec(), n1.2.to_vec()).unwrap();
        let b = NodeSpec::new(Node::Two, n2.0.to_vec(), n2.1.to_vec(), n2.2.to_vec()).unwrap();
        TandemModel::new(ModelConfig::new(1.0, h.0, h.1, a, b).unwrap())
    }

    fn simple(h: (f64, f64)) -> TandemModel<f64> {
        model(h, (&[0.0, 1.0], &[0.0, 2.0], &[0.0, 1.0]), (&[0.0, 1.0], &[0.0, 4.0], &[0.0, 1.0]))
    }

    fn fabricated(trunc: TruncationSpec, v: impl Fn(State) -> f64, policy: Policy) -> Solution<f64> {
        Solution {
            v: ValueFunction::from_fn(trunc, v),
            g: 0.0,
            policy: PolicyTable::from_policy(policy),
            iterations: 1,
            final_span: 0.0,
            g_lower: 0.0,
            g_upper: 0.0,
            converged: true,
            bound_history: Vec::new(),
        }
    }

    fn trunc(margin: usize) -> TruncationSpec {
        TruncationSpec::new(8, 8, margin).unwrap()
    }

    #[test]
    fn nondecreasing_detects_drop() {
        let m = simple((1.0, 1.0));
        let t = trunc(0);
        let sol = fabricated(t, |x| if x == State::new(1, 0) { -1.0 } else { 0.0 }, Policy::constant(t, 0, 0));
        let e = Checker::new(&m, &sol, &t, CheckMode::Strict).check_nondecreasing();
        assert_eq!(e.status, Status::Fail);
        assert_eq!(e.violations[0].states, vec![State::ORIGIN, State::new(1, 0)]);

        let flat = fabricated(t, |_| 5.0, Policy::constant(t, 0, 0));
        let e = Checker::new(&m, &flat, &t, CheckMode::Strict).check_nondecreasing();
        assert_eq!(e.status, Status::Pass);
    }

    #[test]
    fn swap_gates_follow_holding_costs() {
        let t = trunc(1);
        let p = Policy::constant(t, 0, 0);
        let sol = fabricated(t, |x| (x.x1 * 3 + x.x2 * 2) as f64, p);
        let m = simple((1.0, 1.0));
        let [lower, upper] = Checker::new(&m, &sol, &t, CheckMode::Strict).check_swap_dominance();
        assert_eq!((lower.status, upper.status), (Status::Pass, Status::Pass));
        assert!(lower.states_checked > 0);

        let m = simple((3.0, 1.0));
        let [lower, upper] = Checker::new(&m, &sol, &t, CheckMode::Strict).check_swap_dominance();
        assert_eq!(lower.status, Status::Skipped);
        assert_eq!(upper.status, Status::Pass);
        let [lower, _] = Checker::new(&m, &sol, &t, CheckMode::Info).check_swap_dominance();
        assert_eq!(lower.status, Status::Info);
        assert_eq!(swap_gates(&m), (false, true));
    }

    #[test]
    fn quasiconvexity_on_exact_functions() {
        let m = simple((1.0, 1.0));
        let t = trunc(1);
        let convex = fabricated(t, |x| (x.x2 * x.x2) as f64, Policy::constant(t, 0, 0));
        let [e2, _] = Checker::new(&m, &convex, &t, CheckMode::Strict).check_quasiconvexity();
        assert_eq!(e2.status, Status::Pass);

        let concave = fabricated(t, |x| -((x.x2 * x.x2) as f64), Policy::constant(t, 0, 0));
        let [e2, _] = Checker::new(&m, &concave, &t, CheckMode::Strict).check_quasiconvexity();
        assert_eq!(e2.status, Status::Fail);
        assert_eq!(e2.violations.len(), e2.states_checked);
        assert!(e2.violations.iter().all(|v| (v.magnitude - 2.0).abs() < 1e-12));
    }

    #[test]
    fn policy_monotonicity_examples() {
        let m = simple((1.0, 1.0));
        let t = trunc(0);
        let sol = fabricated(t, |_| 0.0, Policy::constant(t, 1, 1));
        let entries = Checker::new(&m, &sol, &t, CheckMode::Strict).check_policy_monotonicity();
        assert!(entries.iter().all(|e| e.status == Status::Pass));
        assert_eq!(entries.len(), 2);

        let bad = fabricated(t, |_| 0.0, Policy::from_fn(t, |x| (usize::from(x.x1 == 1), 0)));
        let entries = Checker::new(&m, &bad, &t, CheckMode::Info).check_policy_monotonicity();
        let node1 = entries.iter().find(|e| e.id == "policy_monotone_node1").unwrap();
        assert_eq!(node1.status, Status::Fail);
        assert!(node1.violations.iter().all(|v| v.states[0].x1 == 1 && v.states[1].x1 == 2));
        assert_eq!(entries.len(), 4);
        assert_eq!(entries[3].status, Status::Info);
    }

    #[test]
    fn node_ordering_gate() {
        let g = [0.0, 1.0];
        let t = trunc(1);
        let sol = fabricated(t, |_| 0.0, Policy::constant(t, 1, 1));
        let ok = model((1.0, 1.0), (&g, &[0.0, 1.5], &[0.0, 2.0]), (&g, &[0.0, 2.0], &[0.0, 1.0]));
        let e = Checker::new(&ok, &sol, &t, CheckMode::Strict).check_node_ordering();
        assert_eq!(e.status, Status::Pass);
        assert_eq!(e.evidence["cost_premise"], json!(true));

        let bad = model((1.0, 1.0), (&g, &[0.0, 1.5], &[0.0, 1.0]), (&g, &[0.0, 2.0], &[0.0, 2.0]));
        let e = Checker::new(&bad, &sol, &t, CheckMode::Strict).check_node_ordering();
        assert_eq!(e.status, Status::Skipped);
        assert_eq!(e.evidence["cost_premise"], json!(false));

        // b < a at an occupied interior state
        let flipped = fabricated(t, |_| 0.0, Policy::constant(t, 1, 0));
        let e = Checker::new(&ok, &flipped, &t, CheckMode::Strict).check_node_ordering();
        assert_eq!(e.status, Status::Fail);

        let other_grid = model((1.0, 1.0), (&g, &[0.0, 1.5], &[0.0, 2.0]), (&[0.0, 2.0], &[0.0, 2.0], &[0.0, 1.0]));
        let e = Checker::new(&other_grid, &sol, &t, CheckMode::Strict).check_node_ordering();
        assert_eq!(e.status, Status::Skipped);
        assert_eq!(e.evidence["identical_grids"], json!(false));
    }

    #[test]
    fn uniqueness_premise_arithmetic() {
        let quad = NodeSpec::new(Node::One, vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(cell_quotients(&quad), vec![0.5, 1.5]);
        assert!(is_monotone(&cell_quotients(&quad)));
        let lin = NodeSpec::new(Node::One, vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 2.0], vec![0.0, 0.5, 1.0]).unwrap();
        assert!(is_monotone(&cell_quotients(&lin)));
        assert!(!is_monotone(&[1.0, 2.0, 1.5]));
    }

    #[test]
    fn uniqueness_reports_ties_and_skips_small_grids() {
        let t = trunc(1);
        let m = simple((1.0, 1.0));
        let sol = fabricated(t, |_| 0.0, Policy::constant(t, 0, 0));
        assert_eq!(Checker::new(&m, &sol, &t, CheckMode::Strict).check_uniqueness().status, Status::Skipped);

        let g = [0.0, 0.5, 1.0];
        let m3 = model((1.0, 1.0), (&g, &[0.0, 1.0, 2.0], &[0.0, 0.25, 1.0]), (&g, &[0.0, 2.0, 4.0], &[0.0, 0.25, 1.0]));
        let mut sets1 = vec![vec![0]; t.n_states()];
        sets1[5] = vec![0, 2];
        let table = PolicyTable::from_sets(t, sets1, vec![vec![1]; t.n_states()]);
        let tied = Solution { policy: table, ..sol };
        let e = Checker::new(&m3, &tied, &t, CheckMode::Strict).check_uniqueness();
        assert_eq!(e.status, Status::Fail);
        assert_eq!(e.violations.len(), 1);
        assert_eq!(e.violations[0].states, vec![t.state(5)]);
    }

    #[test]
    fn idle_zero_examples() {
        let m = simple((1.0, 1.0));
        let t = trunc(1);
        let good = fabricated(t, |_| 0.0, Policy::from_fn(t, |x| (usize::from(x.x1 > 0), usize::from(x.x2 > 0))));
        assert_eq!(Checker::new(&m, &good, &t, CheckMode::Strict).check_idle_zero().status, Status::Pass);
        let bad = fabricated(t, |_| 0.0, Policy::from_fn(t, |x| (usize::from(x == State::new(0, 3)), 0)));
        let e = Checker::new(&m, &bad, &t, CheckMode::Strict).check_idle_zero();
        assert_eq!(e.status, Status::Fail);
        assert_eq!(e.violations.len(), 1);
        assert_eq!(e.violations[0].states, vec![State::new(0, 3)]);
    }

    #[test]
    fn bang_bang_premises_of_sqrt_cost() {
        // c = sqrt(a), mu = a on {0, 0.25, 1}
        let n = NodeSpec::new(Node::One, vec![0.0, 0.25, 1.0], vec![0.0, 0.25, 1.0], vec![0.0, 0.5, 1.0]).unwrap();
        let p = bang_bang_premises(&n);
        assert_eq!(p.average_ratio, vec![2.0, 1.0]);
        assert!(p.ratio_nonincreasing);
        assert_eq!(p.interior_points.len(), 1);
        assert!((p.interior_points[0].forward_quotient - 2.0 / 3.0).abs() < 1e-15);
        assert!(!p.interior_points[0].holds);
        assert!(!p.holds());
    }

    #[test]
    fn bang_bang_two_point_grids_are_info() {
        let m = simple((1.0, 1.0));
        let t = trunc(1);
        let sol = fabricated(t, |_| 0.0, Policy::constant(t, 1, 1));
        let e = Checker::new(&m, &sol, &t, CheckMode::Strict).check_bangbang();
        assert_eq!(e.status, Status::Info);
        assert_eq!(e.evidence["fraction"], json!(1.0));
    }

    #[test]
    fn bang_bang_premises_never_hold_together() {
        use proptest::prelude::*;
        proptest!(|(mu in prop::collection::vec(0.01f64..5.0, 2..5), c in prop::collection::vec(0.01f64..5.0, 2..5))| {
            let k = mu.len().min(c.len());
            let cum = |xs: &[f64]| std::iter::once(0.0).chain(xs[..k].iter().scan(0.0, |s, d| { *s += d; Some(*s) })).collect::<Vec<_>>();
            let (mu, c) = (cum(&mu), cum(&c));
            let grid: Vec<f64> = (0..=k).map(|i| i as f64).collect();
            let n = NodeSpec::new(Node::One, grid, mu, c).unwrap();
            prop_assert!(!bang_bang_premises(&n).holds());
        });
    }

    #[test]
    fn bang_bang_scan_counts_interior_actions() {
        let g = [0.0, 0.5, 1.0];
        let m = model((1.0, 1.0), (&g, &[0.0, 1.0, 2.0], &[0.0, 0.25, 1.0]), (&g, &[0.0, 2.0, 4.0], &[0.0, 0.25, 1.0]));
        let t = trunc(1);
        let extreme = fabricated(t, |_| 0.0, Policy::constant(t, 2, 0));
        let scan = bang_bang_scan(&m, &extreme, &t);
        assert_eq!(scan.fraction, 1.0);
        assert_eq!(scan.states, 49);
        let middle = fabricated(t, |_| 0.0, Policy::from_fn(t, |x| (usize::from(x == State::new(3, 3)), 0)));
        let scan = bang_bang_scan(&m, &middle, &t);
        assert_eq!(scan.interior_actions, vec![State::new(3, 3)]);
        assert!((scan.fraction_node1 - 48.0 / 49.0).abs() < 1e-15);
        assert_eq!(scan.fraction_node2, 1.0);
        let e = Checker::new(&m, &middle, &t, CheckMode::Strict).check_bangbang();
        assert_eq!(e.status, Status::Skipped);
        assert!(e.violations.is_empty());
    }

    #[test]
    fn report_is_deterministic_and_mode_aware() {
        let m = simple((3.0, 1.0));
        let t = trunc(1);
        let sol = fabricated(t, |x| (x.x1 + x.x2) as f64, Policy::constant(t, 1, 1));
        let a = serde_json::to_string(&run_all_checks(&m, &sol, &t, CheckMode::Strict)).unwrap();
        let b = serde_json::to_string(&run_all_checks(&m, &sol, &t, CheckMode::Strict)).unwrap();
        assert_eq!(a, b);
        let strict = run_all_checks(&m, &sol, &t, CheckMode::Strict);
        let info = run_all_checks(&m, &sol, &t, CheckMode::Info);
        assert_eq!(strict.entry("transfer_dominates_departure").unwrap().status, Status::Skipped);
        assert_eq!(info.entry("transfer_dominates_departure").unwrap().status, Status::Info);
        assert!(info.counts.info > strict.counts.info);
        assert!(info.entries.len() > strict.entries.len());
    }
}
