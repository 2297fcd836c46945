//! The controllable tandem queue: Poisson arrivals to node 1, customers move
//! to node 2 after service and leave after service at node 2. Each node's
//! service rate and resource-cost rate are tabulated on a finite action grid.

use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    #[serde(rename = "node1")]
    One,
    #[serde(rename = "node2")]
    Two,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::One => f.write_str("node1"),
            Node::Two => f.write_str("node2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("`{key}` must be {expected}")]
    InvalidValue { key: String, expected: &'static str },
    #[error("{node}.{field} is not strictly increasing at index {index}")]
    NonMonotoneGrid {
        node: Node,
        field: &'static str,
        index: usize,
    },
    #[error("{node}.{field}[0] must be 0, got {value}")]
    NonzeroOrigin {
        node: Node,
        field: &'static str,
        value: f64,
    },
    #[error("unstable: lambda = {lambda} is not below the maximal service rate {mu_max} of {node}")]
    Unstable { node: Node, lambda: f64, mu_max: f64 },
    #[error("{node}: `actions` has {actions} entries but `{field}` has {len}")]
    LengthMismatch {
        node: Node,
        field: &'static str,
        actions: usize,
        len: usize,
    },
}

/// Discretization of a node's action interval `[0, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid<T> {
    values: Vec<T>,
}

impl<T: Scalar> ActionGrid<T> {
    pub fn new(node: Node, values: Vec<T>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::InvalidValue {
                key: format!("{node}.actions"),
                expected: "a nonempty array",
            });
        }
        if values[0] != T::zero() {
            return Err(ModelError::NonzeroOrigin {
                node,
                field: "actions",
                value: values[0].as_f64(),
            });
        }
        check_finite(node, "actions", &values)?;
        if let Some(index) = first_non_increase(&values, 0) {
            return Err(ModelError::NonMonotoneGrid {
                node,
                field: "actions",
                index,
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> T {
        self.values[self.values.len() - 1]
    }

    pub fn max_index(&self) -> usize {
        self.values.len() - 1
    }

    /// True for the two ends of the grid, `0` and `max`.
    pub fn is_extreme(&self, idx: usize) -> bool {
        idx == 0 || idx == self.max_index()
    }
}

/// Service-rate and resource-cost tables of one node, indexed like its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec<T> {
    pub actions: ActionGrid<T>,
    pub mu: Vec<T>,
    pub cost: Vec<T>,
}

impl<T: Scalar> NodeSpec<T> {
    /// Validates the tables. `mu` must be strictly increasing with `mu[0] = 0`;
    /// `cost` must start at 0, be nonnegative and strictly increasing from
    /// index 1 on. An identically zero cost table (free resources) is also
    /// accepted.
    pub fn new(node: Node, actions: Vec<T>, mu: Vec<T>, cost: Vec<T>) -> Result<Self, ModelError> {
        let actions = ActionGrid::new(node, actions)?;
        for (field, table) in [("mu", &mu), ("cost", &cost)] {
            if table.len() != actions.len() {
                return Err(ModelError::LengthMismatch {
                    node,
                    field,
                    actions: actions.len(),
                    len: table.len(),
                });
            }
            check_finite(node, field, table)?;
            if table[0] != T::zero() {
                return Err(ModelError::NonzeroOrigin {
                    node,
                    field,
                    value: table[0].as_f64(),
                });
            }
        }
        if let Some(index) = first_non_increase(&mu, 0) {
            return Err(ModelError::NonMonotoneGrid {
                node,
                field: "mu",
                index,
            });
        }
        let free = cost.iter().all(|c| *c == T::zero());
        if !free {
            if cost.iter().any(|c| *c < T::zero()) {
                return Err(ModelError::InvalidValue {
                    key: format!("{node}.cost"),
                    expected: "nonnegative",
                });
            }
            if let Some(index) = first_non_increase(&cost, 1) {
                return Err(ModelError::NonMonotoneGrid {
                    node,
                    field: "cost",
                    index,
                });
            }
        }
        Ok(Self { actions, mu, cost })
    }

    pub fn mu_max(&self) -> T {
        self.mu[self.mu.len() - 1]
    }

    /// `c(a) > 0` for every `a > 0`.
    pub fn cost_strictly_positive(&self) -> bool {
        self.cost.iter().skip(1).all(|c| *c > T::zero())
    }
}

fn check_finite<T: Scalar>(node: Node, field: &'static str, values: &[T]) -> Result<(), ModelError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::InvalidValue {
            key: format!("{node}.{field}"),
            expected: "an array of finite numbers",
        })
    }
}

/// Index `i` of the first pair with `values[i] <= values[i - 1]`, looking only at `i > from`.
fn first_non_increase<T: Scalar>(values: &[T], from: usize) -> Option<usize> {
    (from + 1..values.len()).find(|&i| values[i] <= values[i - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig<T> {
    pub lambda: T,
    pub h1: T,
    pub h2: T,
    pub node1: NodeSpec<T>,
    pub node2: NodeSpec<T>,
}

impl<T: Scalar> ModelConfig<T> {
    pub fn new(lambda: T, h1: T, h2: T, node1: NodeSpec<T>, node2: NodeSpec<T>) -> Result<Self, ModelError> {
        if !(lambda.is_finite() && lambda > T::zero()) {
            return Err(ModelError::InvalidValue {
                key: "lambda".into(),
                expected: "a positive finite number",
            });
        }
        for (key, h) in [("h1", h1), ("h2", h2)] {
            if !(h.is_finite() && h >= T::zero()) {
                return Err(ModelError::InvalidValue {
                    key: key.into(),
                    expected: "a nonnegative finite number",
                });
            }
        }
        for (node, spec) in [(Node::One, &node1), (Node::Two, &node2)] {
            if lambda >= spec.mu_max() {
                return Err(ModelError::Unstable {
                    node,
                    lambda: lambda.as_f64(),
                    mu_max: spec.mu_max().as_f64(),
                });
            }
        }
        Ok(Self {
            lambda,
            h1,
            h2,
            node1,
            node2,
        })
    }

    pub fn node(&self, node: Node) -> &NodeSpec<T> {
        match node {
            Node::One => &self.node1,
            Node::Two => &self.node2,
        }
    }

    /// Inverse of [`validate_config`]: the document this config was read from.
    pub fn to_document(&self) -> Value {
        let node = |n: &NodeSpec<T>| {
            json!({
                "actions": n.actions.values().iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                "mu": n.mu.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
                "cost": n.cost.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
            })
        };
        json!({
            "lambda": self.lambda.as_f64(),
            "h1": self.h1.as_f64(),
            "h2": self.h2.as_f64(),
            "node1": node(&self.node1),
            "node2": node(&self.node2),
        })
    }
}

/// Reads and validates a config document with keys `lambda`, `h1`, `h2` and
/// `node1`/`node2`, each an object of equal-length `actions`, `mu` and `cost`
/// arrays.
pub fn validate_config<T: Scalar>(raw: &Value) -> Result<ModelConfig<T>, ModelError> {
    let lambda = number(raw, "lambda")?;
    let h1 = number(raw, "h1")?;
    let h2 = number(raw, "h2")?;
    let node1 = node_spec(raw, Node::One)?;
    let node2 = node_spec(raw, Node::Two)?;
    ModelConfig::new(lambda, h1, h2, node1, node2)
}

fn number<T: Scalar>(raw: &Value, key: &str) -> Result<T, ModelError> {
    let v = raw.get(key).ok_or_else(|| ModelError::MissingKey(key.into()))?;
    v.as_f64()
        .and_then(T::from_f64)
        .ok_or_else(|| ModelError::InvalidValue {
            key: key.into(),
            expected: "a number",
        })
}

fn node_spec<T: Scalar>(raw: &Value, node: Node) -> Result<NodeSpec<T>, ModelError> {
    let name = node.to_string();
    let obj = raw.get(&name).ok_or_else(|| ModelError::MissingKey(name.clone()))?;
    let array = |field: &str| -> Result<Vec<T>, ModelError> {
        let key = format!("{name}.{field}");
        let arr = obj
            .get(field)
            .ok_or_else(|| ModelError::MissingKey(key.clone()))?
            .as_array()
            .ok_or_else(|| ModelError::InvalidValue {
                key: key.clone(),
                expected: "an array of numbers",
            })?;
        arr.iter()
            .map(|v| {
                v.as_f64().and_then(T::from_f64).ok_or_else(|| ModelError::InvalidValue {
                    key: key.clone(),
                    expected: "an array of numbers",
                })
            })
            .collect()
    };
    NodeSpec::new(node, array("actions")?, array("mu")?, array("cost")?)
}

/// Lattice point `(x1, x2)`: customers at node 1 and node 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct State {
    pub x1: usize,
    pub x2: usize,
}

impl State {
    pub const ORIGIN: State = State { x1: 0, x2: 0 };

    pub const fn new(x1: usize, x2: usize) -> Self {
        Self { x1, x2 }
    }

    /// `x + e1`
    pub fn arrival(self) -> State {
        State::new(self.x1 + 1, self.x2)
    }

    /// `x - e1 + e2`, if node 1 is occupied.
    pub fn transfer(self) -> Option<State> {
        (self.x1 > 0).then(|| State::new(self.x1 - 1, self.x2 + 1))
    }

    /// `x - e2`, if node 2 is occupied.
    pub fn departure(self) -> Option<State> {
        (self.x2 > 0).then(|| State::new(self.x1, self.x2 - 1))
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x1, self.x2)
    }
}

/// A validated model together with its uniformization constant
/// `lambda + mu1(max) + mu2(max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TandemModel<T> {
    config: ModelConfig<T>,
    uniformization: T,
}

impl<T: Scalar> TandemModel<T> {
    pub fn new(config: ModelConfig<T>) -> Self {
        let uniformization = config.lambda + config.node1.mu_max() + config.node2.mu_max();
        Self { config, uniformization }
    }

    pub fn from_document(raw: &Value) -> Result<Self, ModelError> {
        validate_config(raw).map(Self::new)
    }

    pub fn config(&self) -> &ModelConfig<T> {
        &self.config
    }

    pub fn node(&self, node: Node) -> &NodeSpec<T> {
        self.config.node(node)
    }

    pub fn lambda(&self) -> T {
        self.config.lambda
    }

    pub fn uniformization(&self) -> T {
        self.uniformization
    }

    pub fn mu1(&self, a: usize) -> T {
        self.config.node1.mu[a]
    }

    pub fn mu2(&self, b: usize) -> T {
        self.config.node2.mu[b]
    }

    pub fn cost1(&self, a: usize) -> T {
        self.config.node1.cost[a]
    }

    pub fn cost2(&self, b: usize) -> T {
        self.config.node2.cost[b]
    }

    pub fn grid1(&self) -> &ActionGrid<T> {
        &self.config.node1.actions
    }

    pub fn grid2(&self) -> &ActionGrid<T> {
        &self.config.node2.actions
    }

    /// Positive-rate transitions out of `x` under action indices `(a, b)`,
    /// on the untruncated lattice.
    pub fn transition_rates(&self, x: State, a: usize, b: usize) -> Vec<(State, T)> {
        let mut out = Vec::with_capacity(3);
        out.push((x.arrival(), self.lambda()));
        if let Some(y) = x.transfer() {
            if self.mu1(a) > T::zero() {
                out.push((y, self.mu1(a)));
            }
        }
        if let Some(y) = x.departure() {
            if self.mu2(b) > T::zero() {
                out.push((y, self.mu2(b)));
            }
        }
        out
    }

    /// Cost rate `h1 x1 + h2 x2 + c1(a) + c2(b)`.
    pub fn stage_cost(&self, x: State, a: usize, b: usize) -> T {
        self.holding_cost(x) + self.cost1(a) + self.cost2(b)
    }

    pub fn holding_cost(&self, x: State) -> T {
        self.config.h1 * T::lit(x.x1 as f64) + self.config.h2 * T::lit(x.x2 as f64)
    }

    /// `(mu1(max) - lambda, mu2(max) - lambda)`, both positive.
    pub fn stability_margin(&self) -> (T, T) {
        (
            self.config.node1.mu_max() - self.lambda(),
            self.config.node2.mu_max() - self.lambda(),
        )
    }

    /// The same model with every rate and cost rate multiplied by `k > 0`.
    pub fn scaled(&self, k: T) -> Self {
        let node = |n: &NodeSpec<T>| NodeSpec {
            actions: n.actions.clone(),
            mu: n.mu.iter().map(|m| *m * k).collect(),
            cost: n.cost.iter().map(|c| *c * k).collect(),
        };
        let c = &self.config;
        Self::new(ModelConfig {
            lambda: c.lambda * k,
            h1: c.h1 * k,
            h2: c.h2 * k,
            node1: node(&c.node1),
            node2: node(&c.node2),
        })
    }
}
