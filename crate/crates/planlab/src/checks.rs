//! Property checks per experiment kind, used by `run --check`.

use std::collections::BTreeSet;

use planlab_core::agents::{Ablations, AgentConfig, Framework};

use crate::bounds_grid::ordering_violations;
use crate::config::{ExperimentConfig, ExperimentKind, FrameworkEntry};
use crate::experiment::ExperimentOutput;
use crate::stats::{compare_cells, CellKey, ResultTable, Verdict, SIGMA};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn noisy(a: &AgentConfig) -> bool {
    a.error_params.eps_p > 0.0 || a.error_params.eps_s > 0.0
}

fn find(cfg: &ExperimentConfig, pred: impl Fn(&FrameworkEntry) -> bool) -> Option<&str> {
    cfg.frameworks.iter().find(|e| pred(e)).map(|e| e.label.as_str())
}

fn noisy_of(cfg: &ExperimentConfig, fw: Framework) -> Option<&str> {
    find(cfg, |e| e.agent.framework == fw && noisy(&e.agent))
}

fn cells(table: &ResultTable) -> BTreeSet<(u32, u32)> {
    table.rows.iter().map(|r| (r.key.t_star, r.key.slack)).collect()
}

/// `a` not below `b` beyond 3σ (ties allowed), at every cell.
fn not_reversed(table: &ResultTable, a: &str, b: &str) -> CheckResult {
    ordered(table, a, b, false)
}

fn ordered(table: &ResultTable, a: &str, b: &str, strict: bool) -> CheckResult {
    let name = format!("{a} {} {b}", if strict { ">" } else { ">=" });
    let mut worst: Option<(f64, String)> = None;
    for (t, s) in cells(table) {
        match compare_cells(table, &CellKey::new(a, t, s), &CellKey::new(b, t, s)) {
            Ok(c) => {
                let bad = if strict { c.verdict != Verdict::Significant } else { c.verdict == Verdict::Reversed };
                if bad {
                    return CheckResult::new(name, false, format!("T*={t} slack={s}: diff {:.4}, z {:.2}", c.diff, c.z));
                }
                if worst.as_ref().is_none_or(|(z, _)| c.z < *z) {
                    worst = Some((c.z, format!("T*={t} slack={s}")));
                }
            }
            Err(e) => return CheckResult::new(name, false, e.to_string()),
        }
    }
    match worst {
        Some((z, at)) => CheckResult::new(name, true, format!("min z {z:.2} at {at}")),
        None => CheckResult::new(name, false, "no cells"),
    }
}

fn missing(what: &str) -> CheckResult {
    CheckResult::new(what, false, "required framework entry is missing from the config")
}

fn fig1b(cfg: &ExperimentConfig, table: &ResultTable) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let (tape, pa, react) = (
        noisy_of(cfg, Framework::Tape),
        noisy_of(cfg, Framework::PlanAndAct),
        noisy_of(cfg, Framework::ReAct),
    );
    match (tape, pa) {
        (Some(a), Some(b)) => out.push(not_reversed(table, a, b)),
        _ => out.push(missing("TAPE >= PA")),
    }
    match (pa, react) {
        (Some(a), Some(b)) => out.push(not_reversed(table, a, b)),
        _ => out.push(missing("PA >= ReAct")),
    }
    if let Some(react) = react {
        let rows: Vec<_> = table.by_framework(react).collect();
        let lo = rows.iter().min_by_key(|r| (r.key.t_star, r.key.slack));
        let hi = rows.iter().max_by_key(|r| (r.key.t_star, std::cmp::Reverse(r.key.slack)));
        out.push(match (lo, hi) {
            (Some(lo), Some(hi)) if lo.key.t_star < hi.key.t_star => match compare_cells(table, &lo.key, &hi.key) {
                Ok(c) => CheckResult::new(
                    "ReAct degrades with T*",
                    c.verdict == Verdict::Significant,
                    format!("{:.3} at T*={} vs {:.3} at T*={}, z {:.2}", lo.mean, lo.key.t_star, hi.mean, hi.key.t_star, c.z),
                ),
                Err(e) => CheckResult::new("ReAct degrades with T*", false, e.to_string()),
            },
            _ => CheckResult::new("ReAct degrades with T*", false, "needs at least two T* values"),
        });
    }
    let clean: Vec<&str> = cfg
        .frameworks
        .iter()
        .filter(|e| !noisy(&e.agent))
        .map(|e| e.label.as_str())
        .collect();
    if !clean.is_empty() {
        let failures: Vec<String> = clean
            .iter()
            .flat_map(|l| table.by_framework(l))
            .filter(|r| r.successes != r.n)
            .map(|r| format!("{} ({}/{})", r.key, r.successes, r.n))
            .collect();
        out.push(CheckResult::new(
            "noise-free runs always succeed",
            failures.is_empty(),
            if failures.is_empty() { format!("{} frameworks", clean.len()) } else { failures.join(", ") },
        ));
    }
    out
}

fn within(measured: Option<f64>, p: f64, steps: u64) -> (bool, String) {
    let tol = SIGMA * (p * (1.0 - p) / steps as f64).sqrt();
    match measured {
        Some(m) => ((m - p).abs() <= tol, format!("{m:.4} vs {p} (tol {tol:.4}, {steps} steps)")),
        None => (false, "no steps".into()),
    }
}

fn error_table(cfg: &ExperimentConfig, table: &ResultTable) -> Vec<CheckResult> {
    let mut out = Vec::new();
    match noisy_of(cfg, Framework::ReAct) {
        Some(react) => {
            let params = cfg.frameworks.iter().find(|e| e.label == react).expect("found").agent.error_params;
            // Only at zero slack is every alternative to the oracle action non-viable,
            // so only there does the injector hit the nominal planning rate.
            let tight: Vec<_> = table.by_framework(react).filter(|r| r.key.slack == 0).collect();
            if tight.is_empty() {
                out.push(CheckResult::new("ReAct error round trip", false, "needs a zero-slack cell"));
            }
            for r in tight {
                let (ok_p, dp) = within(r.planning_rate, params.eps_p, r.total_steps);
                let (ok_s, ds) = within(r.sampling_rate, params.eps_s, r.total_steps);
                out.push(CheckResult::new(
                    format!("ReAct error round trip at T*={}", r.key.t_star),
                    ok_p && ok_s,
                    format!("planning {dp}; sampling {ds}"),
                ));
            }
            if let Some(pa) = noisy_of(cfg, Framework::PlanAndAct) {
                let mut ok = true;
                let mut detail = Vec::new();
                for r in table.by_framework(pa) {
                    let base = table.get(&CellKey::new(react, r.key.t_star, r.key.slack));
                    let (a, b) = (r.sampling_rate, base.and_then(|b| b.sampling_rate));
                    let good = matches!((a, b), (Some(a), Some(b)) if a < b);
                    ok &= good;
                    detail.push(format!("T*={} S={}: {:.4} vs {:.4}", r.key.t_star, r.key.slack, a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN)));
                }
                out.push(CheckResult::new("PA sampling error below ReAct", ok && !detail.is_empty(), detail.join("; ")));
            } else {
                out.push(missing("PA sampling error below ReAct"));
            }
        }
        None => out.push(missing("ReAct error round trip")),
    }
    let constrained: Vec<&str> = cfg
        .frameworks
        .iter()
        .filter(|e| e.agent.framework == Framework::Tape && e.agent.ablations.use_constrained_execution)
        .map(|e| e.label.as_str())
        .collect();
    if constrained.is_empty() {
        out.push(missing("TAPE sampling error is zero"));
    } else {
        let total: u64 = constrained
            .iter()
            .flat_map(|l| table.by_framework(l))
            .map(|r| r.sampling_err_steps)
            .sum();
        out.push(CheckResult::new("TAPE sampling error is zero", total == 0, format!("{total} deviating steps")));
    }
    out
}

fn sweep(cfg: &ExperimentConfig, table: &ResultTable, name: &str, key_of: impl Fn(&FrameworkEntry) -> Option<u32>) -> Vec<CheckResult> {
    // Consecutive entries along the axis, larger value first.
    let mut out = Vec::new();
    let mut entries: Vec<(u32, &str)> = cfg
        .frameworks
        .iter()
        .filter_map(|e| key_of(e).map(|k| (k, e.label.as_str())))
        .collect();
    entries.sort();
    for w in entries.windows(2) {
        let (lo, hi) = (w[0].1, w[1].1);
        let mut c = not_reversed(table, hi, lo);
        c.name = format!("{name}: {c}", c = c.name);
        out.push(c);
    }
    if out.is_empty() {
        out.push(missing(name));
    }
    out
}

fn budget_sweep(cfg: &ExperimentConfig, table: &ResultTable) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for e in cfg.frameworks.iter().filter(|e| e.agent.framework == Framework::Tape) {
        let mut slacks = cfg.slack.clone();
        slacks.sort_unstable();
        let ts: BTreeSet<u32> = table.by_framework(&e.label).map(|r| r.key.t_star).collect();
        for t in ts {
            for w in slacks.windows(2) {
                let name = format!("{} non-decreasing in slack at T*={t}, {} -> {}", e.label, w[0], w[1]);
                out.push(match compare_cells(table, &CellKey::new(&e.label, t, w[1]), &CellKey::new(&e.label, t, w[0])) {
                    Ok(c) => CheckResult::new(name, c.verdict != Verdict::Reversed, format!("diff {:.4}, z {:.2}", c.diff, c.z)),
                    Err(err) => CheckResult::new(name, false, err.to_string()),
                });
            }
        }
    }
    if out.is_empty() {
        out.push(missing("TAPE budget sweep"));
    }
    out
}

fn ablation_grid(cfg: &ExperimentConfig, table: &ResultTable) -> Vec<CheckResult> {
    let tape: Vec<&FrameworkEntry> = cfg.frameworks.iter().filter(|e| e.agent.framework == Framework::Tape).collect();
    let flags = |a: &Ablations| [a.use_solver, a.use_constrained_execution, a.use_replanning].iter().filter(|&&f| f).count();
    let full = tape.iter().find(|e| flags(&e.agent.ablations) == 3);
    let off = tape.iter().find(|e| flags(&e.agent.ablations) == 0);
    let singles: Vec<&&FrameworkEntry> = tape.iter().filter(|e| flags(&e.agent.ablations) == 2).collect();
    let (Some(full), Some(off)) = (full, off) else {
        return vec![missing("ablation ordering")];
    };
    let mut out = Vec::new();
    let mean_ge = |a: &str, b: &str| -> CheckResult {
        let name = format!("mean {a} >= {b}");
        let mut detail = Vec::new();
        let mut ok = true;
        for (t, s) in cells(table) {
            match (table.get(&CellKey::new(a, t, s)), table.get(&CellKey::new(b, t, s))) {
                (Some(x), Some(y)) => {
                    ok &= x.mean >= y.mean;
                    detail.push(format!("{:.4} vs {:.4}", x.mean, y.mean));
                }
                _ => ok = false,
            }
        }
        CheckResult::new(name, ok && !detail.is_empty(), detail.join("; "))
    };
    for s in &singles {
        out.push(mean_ge(&full.label, &s.label));
        out.push(mean_ge(&s.label, &off.label));
    }
    out.push(ordered(table, &full.label, &off.label, true));
    out
}

fn bestofn(cfg: &ExperimentConfig, table: &ResultTable) -> Vec<CheckResult> {
    let pairs = [
        (Framework::ReActBestOfN, Framework::ReAct),
        (Framework::Tape, Framework::PlanAndActBestOfN),
    ];
    pairs
        .iter()
        .map(|&(a, b)| match (noisy_of(cfg, a), noisy_of(cfg, b)) {
            (Some(a), Some(b)) => ordered(table, a, b, true),
            _ => missing(&format!("{} > {}", a.name(), b.name())),
        })
        .collect()
}

pub fn check_properties(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Vec<CheckResult> {
    let table = &out.table;
    match cfg.experiment {
        ExperimentKind::Fig1bCurve => fig1b(cfg, table),
        ExperimentKind::ErrorTable => error_table(cfg, table),
        ExperimentKind::BudgetSweep => budget_sweep(cfg, table),
        ExperimentKind::MSensitivity => sweep(cfg, table, "TAPE non-decreasing in M", |e| {
            (e.agent.framework == Framework::Tape).then_some(e.agent.m)
        }),
        ExperimentKind::AblationGrid => ablation_grid(cfg, table),
        ExperimentKind::BestofnCompare => bestofn(cfg, table),
        ExperimentKind::BoundsGrid => {
            let v = ordering_violations(&out.bounds);
            let checked = out.bounds.iter().filter(|r| r.monotone).count();
            vec![CheckResult::new(
                "u_ours >= u_pa >= u_react",
                v.is_empty(),
                if v.is_empty() { format!("{checked} points") } else { v.join("; ") },
            )]
        }
    }
}
