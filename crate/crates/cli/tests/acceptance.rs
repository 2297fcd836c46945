//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use serde_json::{json, Value};
use tandem_core::dp::{apply_t, rvi_solve, TruncationSpec};
use tandem_core::eval::{average_cost, brute_force_optimal, policy_chain, simulate, stationary_distribution, SimOptions};
use tandem_core::structure::{run_all_checks, CheckMode, Status};
use tandem_core::{Model, Options, Policy, State};

const FOUR_THIRDS: f64 = 4.0 / 3.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn model(lambda: f64, h: (f64, f64), n1: Value, n2: Value) -> Model {
    Model::from_document(&json!({ "lambda": lambda, "h1": h.0, "h2": h.1, "node1": n1, "node2": n2 })).unwrap()
}

fn node(actions: &[f64], mu: &[f64], cost: &[f64]) -> Value {
    json!({ "actions": actions, "mu": mu, "cost": cost })
}

fn jackson() -> Model {
    model(1.0, (1.0, 1.0), node(&[0.0, 1.0], &[0.0, 2.0], &[0.0, 0.0]), node(&[0.0, 1.0], &[0.0, 4.0], &[0.0, 0.0]))
}

fn solve(m: &Model, t: &TruncationSpec) -> tandem_core::Solution {
    rvi_solve(m, t, &Options::default()).unwrap().require_converged().unwrap()
}

fn product_form(x: State) -> f64 {
    0.5 * 0.5f64.powi(x.x1 as i32) * 0.75 * 0.25f64.powi(x.x2 as i32)
}

fn jackson_oracle() -> Outcome {
    let m = jackson();
    let t = TruncationSpec::new(80, 80, 0).unwrap();
    let sol = solve(&m, &t);
    let serve = Policy::constant(t, 1, 1);
    let pi = stationary_distribution(&policy_chain(&m, &serve, &t).unwrap(), 1e-13, 1_000_000).unwrap();
    let g_pi = average_cost(&m, &serve, &pi);
    let worst = t
        .states()
        .filter(|x| x.x1 < 40 && x.x2 < 40)
        .map(|x| (pi.get(x) - product_form(x)).abs())
        .fold(0.0, f64::max);
    let (e_rvi, e_pi) = ((sol.g - FOUR_THIRDS).abs(), (g_pi - FOUR_THIRDS).abs());
    outcome(
        e_rvi <= 1e-3 && e_pi <= 1e-4 && worst <= 1e-6,
        format!("|g_rvi-4/3|={e_rvi:.2e} (<=1e-3), |g_pi-4/3|={e_pi:.2e} (<=1e-4), max |pi-product form|={worst:.2e} (<=1e-6)"),
    )
}

fn exhaustive_equivalence() -> Outcome {
    let t = TruncationSpec::new(2, 2, 0).unwrap();
    let mut worst: f64 = 0.0;
    for (c1, c2) in [(0.5, 0.3), (2.0, 0.1), (0.0, 0.0)] {
        let m = model(1.0, (1.0, 1.0), node(&[0.0, 1.0], &[0.0, 1.5], &[0.0, c1]), node(&[0.0, 1.0], &[0.0, 2.0], &[0.0, c2]));
        let sol = rvi_solve(&m, &t, &Options::default().with_tol(1e-12)).unwrap();
        let best = brute_force_optimal(&m, &t, 1e-14, 1_000_000).unwrap();
        worst = worst.max((sol.g - best.g_star).abs());
    }
    outcome(worst <= 1e-6, format!("3 cost configs on a 2x2 box, max |g_rvi-g_brute|={worst:.2e} (<=1e-6)"))
}

fn simulation_calibration() -> Outcome {
    let m = jackson();
    let t = TruncationSpec::new(80, 80, 0).unwrap();
    let serve = Policy::constant(t, 1, 1);
    let covered = (0..20u64)
        .filter(|&seed| {
            let opts = SimOptions {
                n_events: 1_000_000,
                seed,
                warmup_frac: 0.2,
                n_batches: 20,
            };
            simulate(&m, &serve, &opts).unwrap().covers(FOUR_THIRDS)
        })
        .count();
    outcome(covered >= 18, format!("95% CI covers 4/3 in {covered}/20 runs (>=18)"))
}

fn battery() -> Vec<(&'static str, Model)> {
    let g = [0.0, 0.5, 1.0];
    let lin = [0.0, 1.5, 3.0];
    let n = |mu: &[f64], c: &[f64]| node(&g, mu, c);
    vec![
        ("a", model(1.0, (1.0, 1.0), n(&lin, &[0.0, 1.0, 2.0]), n(&lin, &[0.0, 1.0, 2.0]))),
        ("b", model(1.0, (1.0, 2.0), n(&[0.0, 2.0, 3.0], &[0.0, 1.0, 2.0]), n(&[0.0, 2.0, 3.0], &[0.0, 1.0, 2.0]))),
        ("c", model(1.0, (2.0, 1.0), n(&lin, &[0.0, 0.5, 2.0]), n(&lin, &[0.0, 0.5, 2.0]))),
        ("d", model(1.0, (1.0, 1.0), n(&lin, &[0.0; 3]), n(&lin, &[0.0; 3]))),
    ]
}

fn structure_battery() -> Outcome {
    const IDS: [&str; 8] = [
        "value_nondecreasing",
        "transfer_dominates_departure",
        "holding_dominates_transfer",
        "convex_along_node2",
        "convex_along_transfer",
        "policy_monotone_node2",
        "policy_monotone_node1",
        "idle_node_zero",
    ];
    let t = TruncationSpec::new(40, 40, 3).unwrap();
    let mut failures = Vec::new();
    let mut applicable = 0;
    for (name, m) in battery() {
        let report = run_all_checks(&m, &solve(&m, &t), &t, CheckMode::Strict);
        for id in IDS {
            let e = report.entry(id).unwrap();
            if e.status == Status::Skipped {
                continue;
            }
            applicable += 1;
            if e.status != Status::Pass || !e.violations.is_empty() {
                let first = &e.violations[0].states;
                failures.push(format!("({name}) {id}: {} violations, first at {}", e.violations.len(), first[0]));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{applicable} applicable checks on configs a-d, all clean")
    } else {
        format!("{} of {applicable} applicable checks fail: {}", failures.len(), failures.join("; "))
    };
    outcome(failures.is_empty(), detail)
}

fn node_ordering() -> Outcome {
    let g = [0.0, 1.0];
    let m = model(1.0, (1.0, 1.0), node(&g, &[0.0, 1.5], &[0.0, 2.0]), node(&g, &[0.0, 2.0], &[0.0, 1.0]));
    let t = TruncationSpec::new(40, 40, 3).unwrap();
    let report = run_all_checks(&m, &solve(&m, &t), &t, CheckMode::Strict);
    let e = report.entry("node_ordering").unwrap();
    let premises = e.evidence["cost_premise"] == json!(true) && e.evidence["rate_premise"] == json!(true);
    outcome(
        premises && e.status == Status::Pass && e.violations.is_empty(),
        format!(
            "premises hold: {premises}, status {:?}, {} states compared, {} violations",
            e.status,
            e.states_checked,
            e.violations.len()
        ),
    )
}

fn uniqueness() -> Outcome {
    let g = [0.0, 0.5, 1.0];
    let n = node(&g, &[0.0, 1.5, 3.0], &[0.0, 0.25, 1.0]);
    let m = model(1.0, (1.0, 1.0), n.clone(), n);
    let t = TruncationSpec::new(40, 40, 3).unwrap();
    let report = run_all_checks(&m, &solve(&m, &t), &t, CheckMode::Strict);
    let e = report.entry("argmin_unique").unwrap();
    outcome(
        e.status == Status::Pass && e.states_checked == t.n_states(),
        format!("c=a^2 on {{0,0.5,1}}: status {:?}, {} states, {} non-singleton argmin sets", e.status, e.states_checked, e.violations.len()),
    )
}

fn invariance() -> Outcome {
    let (_, m) = battery().remove(0);
    let t = TruncationSpec::new(30, 30, 0).unwrap();
    let base = solve(&m, &t);
    let scaled = solve(&m.scaled(7.0), &t);
    let same_policy = base.policy.canonical() == scaled.policy.canonical();
    let rel = (scaled.g / (7.0 * base.g) - 1.0).abs();

    let small = TruncationSpec::new(20, 20, 0).unwrap();
    let v = solve(&m, &small).v;
    let k = 1e3;
    let (tv, _) = apply_t(&m, &v, &small, 1e-10);
    let (tvk, _) = apply_t(&m, &v.shifted(k), &small, 1e-10);
    let shift = tv.values().iter().zip(tvk.values()).map(|(a, b)| (b - a - k).abs()).fold(0.0, f64::max);

    let threads_identical = policy_bytes_across_threads(&[1, 2, 4]);
    outcome(
        same_policy && rel <= 1e-6 && shift <= 1e-12 && threads_identical,
        format!(
            "scale k=7: policy identical {same_policy}, |g'/(7g)-1|={rel:.2e} (<=1e-6); shift K=1e3: {shift:.2e} (<=1e-12); policy.csv identical across 1/2/4 threads: {threads_identical}"
        ),
    )
}

fn policy_bytes_across_threads(threads: &[usize]) -> bool {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    let (_, m) = battery().remove(0);
    std::fs::write(&cfg, m.config().to_document().to_string()).unwrap();
    let outputs: Vec<Vec<u8>> = threads
        .iter()
        .map(|n| {
            let out = dir.path().join(format!("t{n}"));
            let status = Command::new(env!("CARGO_BIN_EXE_tandem"))
                .args(["solve", cfg.to_str().unwrap(), "--l1", "30", "--l2", "30", "--threads", &n.to_string(), "--out"])
                .arg(&out)
                .status()
                .unwrap();
            assert!(status.success());
            std::fs::read(Path::new(&out).join("policy.csv")).unwrap()
        })
        .collect();
    outputs.windows(2).all(|w| w[0] == w[1])
}

fn premise_audit() -> Outcome {
    let g = [0.0, 0.25, 1.0];
    let n = node(&g, &[0.0, 0.75, 3.0], &[0.0, 0.5, 1.0]);
    let m = model(1.0, (1.0, 1.0), n.clone(), n);
    let t = TruncationSpec::new(40, 40, 3).unwrap();
    let report = run_all_checks(&m, &solve(&m, &t), &t, CheckMode::Strict);
    let e = report.entry("bang_bang").unwrap();
    let mut ok = !matches!(e.status, Status::Pass | Status::Fail);
    for key in ["node1", "node2"] {
        let p = &e.evidence[key];
        ok &= p["ratio_nonincreasing"] == json!(true);
        let points = p["interior_points"].as_array().unwrap();
        ok &= !points.is_empty() && points.iter().all(|q| q["holds"] == json!(false));
    }
    outcome(
        ok,
        format!(
            "c/mu non-increasing: {}, dc/dmu > c/mu at interior points: {}, status {:?}",
            e.evidence["node1"]["ratio_nonincreasing"], e.evidence["node1"]["marginal_exceeds_average"], e.status
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("product-form oracle", jackson_oracle),
        ("exhaustive-optimum equivalence", exhaustive_equivalence),
        ("simulation calibration", simulation_calibration),
        ("structure battery", structure_battery),
        ("node ordering", node_ordering),
        ("argmin uniqueness", uniqueness),
        ("invariance suite", invariance),
        ("bang-bang premise audit", premise_audit),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {}: {} {name} [{:.1}s] {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
