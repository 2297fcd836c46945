//! Discrete-event simulation of the truncated process under a fixed policy.
//!
//! The process is driven by uniformized jumps: holding times are exponential
//! with rate equal to the uniformization constant and each jump picks an
//! event in proportion to its rate, the remainder being a dummy self-jump.
//! This has the same law as racing the individual exponential clocks.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`, so a
//! (model, policy, options) triple always reproduces the same estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dp::Policy;
use crate::model::{State, TandemModel};
use crate::scalar::Scalar;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOptions {
    /// Uniformized jumps to simulate, dummy jumps included.
    pub n_events: u64,
    pub seed: u64,
    /// Fraction of simulated time discarded before measuring.
    pub warmup_frac: f64,
    pub n_batches: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            n_events: 1_000_000,
            seed: 0,
            warmup_frac: 0.2,
            n_batches: 20,
        }
    }
}

/// Time-average cost estimate with a batch-means 95% confidence half-width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub g_hat: f64,
    pub half_width: f64,
    pub batches: usize,
    pub events: u64,
    pub seed: u64,
    pub sim_time: f64,
    pub warmup_time: f64,
    pub batch_means: Vec<f64>,
}

impl SimEstimate {
    pub fn covers(&self, g: f64) -> bool {
        (self.g_hat - g).abs() <= self.half_width
    }
}

pub fn simulate<T: Scalar>(model: &TandemModel<T>, policy: &Policy, opts: &SimOptions) -> Result<SimEstimate, EvalError> {
    if opts.n_batches < 2 {
        return Err(EvalError::InvalidSimulation("need at least 2 batches".into()));
    }
    if opts.n_events < 10 * opts.n_batches as u64 {
        return Err(EvalError::InvalidSimulation(format!(
            "{} events is fewer than 10 per batch",
            opts.n_events
        )));
    }
    if !(0.0..1.0).contains(&opts.warmup_frac) {
        return Err(EvalError::InvalidSimulation("warmup fraction must lie in [0, 1)".into()));
    }

    let trunc = policy.trunc();
    let big = model.uniformization().as_f64();
    let lambda = model.lambda().as_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // (holding time, cost rate) per jump
    let mut segments: Vec<(f64, f64)> = Vec::with_capacity(opts.n_events as usize);
    let mut x = State::ORIGIN;
    for _ in 0..opts.n_events {
        let (a, b) = policy.action(x);
        let dt: f64 = Exp1.sample(&mut rng);
        segments.push((dt / big, model.stage_cost(x, a, b).as_f64()));
        let u = rng.random::<f64>() * big;
        let mu1 = model.mu1(a).as_f64();
        let mu2 = model.mu2(b).as_f64();
        x = if u < lambda {
            trunc.after_arrival(x)
        } else if u < lambda + mu1 {
            trunc.after_transfer(x)
        } else if u < lambda + mu1 + mu2 {
            trunc.after_departure(x)
        } else {
            x
        };
    }

    let sim_time: f64 = segments.iter().map(|s| s.0).sum();
    let warmup_time = opts.warmup_frac * sim_time;
    let batch_len = (sim_time - warmup_time) / opts.n_batches as f64;
    let mut integrals = vec![0.0; opts.n_batches];

    let last = opts.n_batches - 1;
    let batch_end = |k: usize| {
        if k == last {
            f64::INFINITY
        } else {
            warmup_time + (k + 1) as f64 * batch_len
        }
    };
    let mut k = 0;
    let mut t = 0.0;
    for &(dt, rate) in &segments {
        let (start, end) = (t, t + dt);
        t = end;
        if end <= warmup_time {
            continue;
        }
        let mut s = start.max(warmup_time);
        while s < end {
            while batch_end(k) <= s {
                k += 1;
            }
            let e = end.min(batch_end(k));
            integrals[k] += rate * (e - s);
            s = e;
        }
    }

    let batch_means: Vec<f64> = integrals.iter().map(|i| i / batch_len).collect();
    let k = opts.n_batches as f64;
    let g_hat = batch_means.iter().sum::<f64>() / k;
    let var = batch_means.iter().map(|m| (m - g_hat).powi(2)).sum::<f64>() / (k - 1.0);
    let quantile = StudentsT::new(0.0, 1.0, k - 1.0)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    Ok(SimEstimate {
        g_hat,
        half_width: quantile * (var / k).sqrt(),
        batches: opts.n_batches,
        events: opts.n_events,
        seed: opts.seed,
        sim_time,
        warmup_time,
        batch_means,
    })
}
