use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use tandem_core::dp::{extract_marginals, optimality_residual, rvi_solve, TruncationSpec};
use tandem_core::eval::{
    average_cost, brute_force_optimal, policy_chain, simulate, stationary_distribution, SimEstimate, SimOptions,
};
use tandem_core::structure::{bang_bang_scan, run_all_checks, swap_gates, CheckMode, CheckReport};
use tandem_core::{Model, Options, Policy, Solution};

use crate::args::{
    CheckArgs, Common, EvaluateArgs, Format, MakeConfigArgs, Mode, OracleArgs, PolicySource, SimulateArgs, SolveArgs,
    SweepArgs,
};
use crate::io::{load_config, num, parse_document, sha256_hex, ConfigRef, LoadedConfig, ManifestInfo, Outputs, SCHEMA_VERSION};
use crate::Outcome;

fn common_options(c: &Common) -> Value {
    json!({
        "l1": c.l1,
        "l2": c.l2,
        "tol": c.tol,
        "max_iters": c.max_iters,
        "tie_tol": c.tie_tol,
        "threads": c.threads,
        "allow_unconverged": c.allow_unconverged,
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn solve(model: &Model, c: &Common, margin: usize) -> Result<(TruncationSpec, Solution)> {
    let trunc = TruncationSpec::new(c.l1, c.l2, margin)?;
    let opts = Options::default().with_tol(c.tol).with_max_iters(c.max_iters).with_tie_tol(c.tie_tol);
    let sol = rvi_solve(model, &trunc, &opts)?;
    if !sol.converged {
        if c.allow_unconverged {
            eprintln!(
                "warning: value iteration stopped after {} iterations with span {}",
                sol.iterations,
                num(sol.final_span)
            );
        } else {
            return Err(sol.require_converged().unwrap_err().into());
        }
    }
    Ok((trunc, sol))
}

#[derive(Debug, Serialize)]
struct SolutionSummary {
    g: f64,
    g_lower: f64,
    g_upper: f64,
    iterations: usize,
    final_span: f64,
    converged: bool,
    optimality_residual: f64,
    uniformization: f64,
    l1: usize,
    l2: usize,
    tol: f64,
    tie_tol: f64,
}

fn summary(model: &Model, trunc: &TruncationSpec, sol: &Solution, c: &Common) -> SolutionSummary {
    SolutionSummary {
        g: sol.g,
        g_lower: sol.g_lower,
        g_upper: sol.g_upper,
        iterations: sol.iterations,
        final_span: sol.final_span,
        converged: sol.converged,
        optimality_residual: optimality_residual(model, trunc, sol),
        uniformization: model.uniformization(),
        l1: trunc.l1,
        l2: trunc.l2,
        tol: c.tol,
        tie_tol: c.tie_tol,
    }
}

fn policy_rows<'a>(model: &'a Model, sol: &'a Solution, trunc: &'a TruncationSpec) -> impl Iterator<Item = Vec<String>> + 'a {
    trunc.states().map(move |x| {
        let (a, b) = sol.policy.action(x);
        vec![
            x.x1.to_string(),
            x.x2.to_string(),
            num(model.grid1().values()[a]),
            num(model.grid2().values()[b]),
            sol.policy.argmin_set(tandem_core::Node::One, x).len().to_string(),
            sol.policy.argmin_set(tandem_core::Node::Two, x).len().to_string(),
        ]
    })
}

pub const POLICY_HEADER: [&str; 6] = ["x1", "x2", "a_value", "b_value", "a_argmin_count", "b_argmin_count"];

fn write_policy(out: &mut Outputs, model: &Model, sol: &Solution, trunc: &TruncationSpec) -> Result<()> {
    out.csv("policy.csv", &POLICY_HEADER, policy_rows(model, sol, trunc))
}

fn manifest(command: &'static str, cfg: &LoadedConfig, trunc: TruncationSpec, options: Value, seeds: Vec<u64>) -> ManifestInfo {
    ManifestInfo {
        command,
        config: Some(ConfigRef::of(cfg)),
        truncation: Some(trunc),
        options,
        seeds,
    }
}

pub fn cmd_solve(args: &SolveArgs) -> Result<Outcome> {
    let c = &args.common;
    let cfg = load_config(&c.config)?;
    let (trunc, sol) = solve(&cfg.model, c, 0)?;
    let mut out = Outputs::new(&c.out)?;
    out.csv(
        "value.csv",
        &["x1", "x2", "v"],
        trunc.states().map(|x| vec![x.x1.to_string(), x.x2.to_string(), num(sol.v.get(x))]),
    )?;
    write_policy(&mut out, &cfg.model, &sol, &trunc)?;
    out.json(
        "solution.json",
        &json!({ "schema_version": SCHEMA_VERSION, "solution": summary(&cfg.model, &trunc, &sol, c) }),
    )?;
    out.finish(manifest("solve", &cfg, trunc, common_options(c), vec![]))?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    schema_version: u32,
    solution: SolutionSummary,
    passed: bool,
    report: &'a CheckReport,
}

pub fn cmd_check(args: &CheckArgs) -> Result<Outcome> {
    let c = &args.common;
    let cfg = load_config(&c.config)?;
    let (trunc, sol) = solve(&cfg.model, c, args.margin)?;
    let mode = match args.mode {
        Mode::Strict => CheckMode::Strict,
        Mode::Info => CheckMode::Info,
    };
    let report = run_all_checks(&cfg.model, &sol, &trunc, mode);
    let mut out = Outputs::new(&c.out)?;
    out.json(
        "report.json",
        &CheckOutput {
            schema_version: SCHEMA_VERSION,
            solution: summary(&cfg.model, &trunc, &sol, c),
            passed: report.passed(),
            report: &report,
        },
    )?;
    let options = merge(common_options(c), json!({ "margin": args.margin, "mode": mode }));
    out.finish(manifest("check", &cfg, trunc, options, vec![]))?;
    for e in &report.entries {
        eprintln!("{:<40} {:?} ({} violations)", e.id, e.status, e.violations.len());
    }
    Ok(if report.passed() { Outcome::Success } else { Outcome::ChecksFailed })
}

/// Resolves the policy to evaluate; with `--from-solve` it is also written to policy.csv.
fn obtain_policy(cfg: &LoadedConfig, c: &Common, source: &PolicySource, out: &mut Outputs) -> Result<(TruncationSpec, Policy, String)> {
    if let Some(path) = &source.policy {
        let trunc = TruncationSpec::new(c.l1, c.l2, 0)?;
        let policy = crate::io::read_policy(path, &cfg.model, &trunc)?;
        Ok((trunc, policy, path.display().to_string()))
    } else {
        let (trunc, sol) = solve(&cfg.model, c, 0)?;
        write_policy(out, &cfg.model, &sol, &trunc)?;
        Ok((trunc, sol.policy.canonical().clone(), "solve".into()))
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<Outcome> {
    let c = &args.common;
    let cfg = load_config(&c.config)?;
    let mut out = Outputs::new(&c.out)?;
    let (trunc, policy, source) = obtain_policy(&cfg, c, &args.source, &mut out)?;
    let chain = policy_chain(&cfg.model, &policy, &trunc)?;
    let pi = stationary_distribution(&chain, args.pi_tol, args.pi_max_iters)?;
    let g = average_cost(&cfg.model, &policy, &pi);
    out.json(
        "eval.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "policy_source": source,
            "g": g,
            "pi_residual": pi.residual,
            "pi_iterations": pi.iterations,
            "reducible_suspected": pi.reducible_suspected,
            "l1": trunc.l1,
            "l2": trunc.l2,
        }),
    )?;
    let options = merge(common_options(c), json!({ "pi_tol": args.pi_tol, "pi_max_iters": args.pi_max_iters }));
    out.finish(manifest("evaluate", &cfg, trunc, options, vec![]))?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SimOutput<'a> {
    schema_version: u32,
    policy_source: String,
    warmup_frac: f64,
    estimate: &'a SimEstimate,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Outcome> {
    let c = &args.common;
    let cfg = load_config(&c.config)?;
    let mut out = Outputs::new(&c.out)?;
    let (trunc, policy, source) = obtain_policy(&cfg, c, &args.source, &mut out)?;
    let opts = SimOptions {
        n_events: args.events,
        seed: args.seed,
        warmup_frac: args.warmup,
        n_batches: args.batches,
    };
    let est = simulate(&cfg.model, &policy, &opts)?;
    out.json(
        "sim.json",
        &SimOutput {
            schema_version: SCHEMA_VERSION,
            policy_source: source,
            warmup_frac: args.warmup,
            estimate: &est,
        },
    )?;
    let options = merge(
        common_options(c),
        json!({ "events": args.events, "batches": args.batches, "warmup": args.warmup }),
    );
    out.finish(manifest("simulate", &cfg, trunc, options, vec![args.seed]))?;
    Ok(Outcome::Success)
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<Outcome> {
    let c = &args.common;
    let cfg = load_config(&c.config)?;
    let trunc = TruncationSpec::new(c.l1, c.l2, 0)?;
    let best = brute_force_optimal(&cfg.model, &trunc, args.pi_tol, args.pi_max_iters)?;
    let (_, sol) = solve(&cfg.model, c, 0)?;
    let m = &cfg.model;
    let rows: Vec<Value> = trunc
        .states()
        .map(|x| {
            let (a, b) = best.policy.action(x);
            json!({ "x1": x.x1, "x2": x.x2, "a_value": m.grid1().values()[a], "b_value": m.grid2().values()[b] })
        })
        .collect();
    let mut out = Outputs::new(&c.out)?;
    out.json(
        "oracle.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "g_star": best.g_star,
            "g_rvi": sol.g,
            "delta": best.g_star - sol.g,
            "rank": best.rank,
            "policies_evaluated": best.policies_evaluated,
            "policy": rows,
        }),
    )?;
    let options = merge(common_options(c), json!({ "pi_tol": args.pi_tol, "pi_max_iters": args.pi_max_iters }));
    out.finish(manifest("oracle", &cfg, trunc, options, vec![]))?;
    Ok(Outcome::Success)
}

/// Follows a dotted path (`node1.mu.2`) to a number inside the config document.
pub fn set_param(doc: &mut Value, path: &str, value: f64) -> Result<()> {
    let mut cur = doc;
    for part in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .with_context(|| format!("config has no key {path}"))?;
    }
    if !cur.is_number() {
        bail!("{path} does not address a number");
    }
    *cur = json!(value);
    Ok(())
}

fn threshold(marginal: &[usize], max: usize) -> String {
    marginal.iter().position(|&i| i == max).map(|p| p.to_string()).unwrap_or_default()
}

pub const SWEEP_HEADER: [&str; 12] = [
    "param",
    "value",
    "g",
    "converged",
    "iterations",
    "bang_bang_fraction",
    "decoupling_violations",
    "threshold_a",
    "threshold_b",
    "gate_2h2_ge_h1",
    "gate_h1_ge_h2",
    "uniformization",
];

pub fn cmd_sweep(args: &SweepArgs) -> Result<Outcome> {
    let c = &args.common;
    let cfg = load_config(&c.config)?;
    let mut rows = Vec::new();
    let mut trunc = None;
    for &value in &args.values {
        let mut doc = cfg.document.clone();
        set_param(&mut doc, &args.param, value)?;
        let model = Model::from_document(&doc).with_context(|| format!("{} = {}", args.param, num(value)))?;
        let (t, sol) = solve(&model, c, args.margin)?;
        let scan = bang_bang_scan(&model, &sol, &t);
        let marginals = extract_marginals(&sol.policy, &t);
        let (lower, upper) = swap_gates(&model);
        rows.push(vec![
            args.param.clone(),
            num(value),
            num(sol.g),
            sol.converged.to_string(),
            sol.iterations.to_string(),
            num(scan.fraction),
            marginals.violations.len().to_string(),
            threshold(&marginals.f1, model.grid1().max_index()),
            threshold(&marginals.f2, model.grid2().max_index()),
            lower.to_string(),
            upper.to_string(),
            num(model.uniformization()),
        ]);
        trunc = Some(t);
    }
    let mut out = Outputs::new(&c.out)?;
    out.csv("sweep.csv", &SWEEP_HEADER, rows)?;
    let options = merge(
        common_options(c),
        json!({ "param": args.param, "values": args.values, "margin": args.margin }),
    );
    out.finish(manifest("sweep", &cfg, trunc.expect("at least one value"), options, vec![]))?;
    Ok(Outcome::Success)
}

/// Evaluates a table family on the grid: `linear:K` is `K a`, `power:K:P` is
/// `K a^P`, `table:v0,v1,...` is taken literally.
pub fn family(spec: &str, grid: &[f64]) -> Result<Vec<f64>> {
    let (name, rest) = spec.split_once(':').with_context(|| format!("family {spec:?} needs the form name:params"))?;
    let float = |s: &str| s.trim().parse::<f64>().with_context(|| format!("bad number {s:?} in {spec:?}"));
    match name {
        "linear" => {
            let k = float(rest)?;
            Ok(grid.iter().map(|a| k * a).collect())
        }
        "power" => {
            let (k, p) = rest.split_once(':').with_context(|| format!("{spec:?}: expected power:K:P"))?;
            let (k, p) = (float(k)?, float(p)?);
            Ok(grid.iter().map(|a| if *a == 0.0 { 0.0 } else { k * a.powf(p) }).collect())
        }
        "table" => {
            let values = rest.split(',').map(float).collect::<Result<Vec<_>>>()?;
            if values.len() != grid.len() {
                bail!("{spec:?} has {} entries but the grid has {}", values.len(), grid.len());
            }
            Ok(values)
        }
        other => bail!("unknown family {other:?} (expected linear, power or table)"),
    }
}

pub fn cmd_make_config(args: &MakeConfigArgs) -> Result<Outcome> {
    let grid = &args.grid;
    let node = |mu: &str, cost: &str| -> Result<Value> {
        Ok(json!({ "actions": grid, "mu": family(mu, grid)?, "cost": family(cost, grid)? }))
    };
    let doc = json!({
        "lambda": args.lambda,
        "h1": args.h1,
        "h2": args.h2,
        "node1": node(&args.mu1, &args.cost1)?,
        "node2": node(&args.mu2, &args.cost2)?,
    });
    let model = Model::from_document(&doc).context("generated config is invalid")?;
    crate::io::warn_near_critical(&model);

    let (name, text) = match args.format {
        Format::Json => ("config.json", serde_json::to_string_pretty(&doc)? + "\n"),
        Format::Toml => ("config.toml", toml::to_string(&doc)?),
    };
    // the written text must read back to the same model
    let reread = parse_document(std::path::Path::new(name), &text)?;
    debug_assert_eq!(Model::from_document(&reread).ok().map(|m| m.uniformization()), Some(model.uniformization()));

    let mut out = Outputs::new(&args.out)?;
    out.bytes(name, text.as_bytes())?;
    let info = ManifestInfo {
        command: "make-config",
        config: Some(ConfigRef {
            path: out.path(name).display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        }),
        truncation: None,
        options: json!({
            "grid": grid,
            "mu1": args.mu1,
            "mu2": args.mu2,
            "cost1": args.cost1,
            "cost2": args.cost2,
        }),
        seeds: vec![],
    };
    out.finish(info)?;
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_on_a_grid() {
        let g = [0.0, 0.25, 1.0];
        assert_eq!(family("linear:2", &g).unwrap(), vec![0.0, 0.5, 2.0]);
        assert_eq!(family("power:1:0.5", &g).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(family("table:0,3,4", &g).unwrap(), vec![0.0, 3.0, 4.0]);
        assert!(family("table:0,3", &g).is_err());
        assert!(family("linear", &g).is_err());
        assert!(family("exp:1", &g).is_err());
    }

    #[test]
    fn param_paths() {
        let mut doc = json!({ "lambda": 1.0, "node1": { "mu": [0.0, 2.0] } });
        set_param(&mut doc, "node1.mu.1", 3.5).unwrap();
        set_param(&mut doc, "lambda", 0.5).unwrap();
        assert_eq!(doc, json!({ "lambda": 0.5, "node1": { "mu": [0.0, 3.5] } }));
        assert!(set_param(&mut doc, "node1.mu.2", 1.0).is_err());
        assert!(set_param(&mut doc, "node1", 1.0).is_err());
        assert!(set_param(&mut doc, "h1", 1.0).is_err());
    }

    #[test]
    fn thresholds_from_marginals() {
        assert_eq!(threshold(&[0, 1, 2, 2], 2), "2");
        assert_eq!(threshold(&[0, 1], 2), "");
    }
}
