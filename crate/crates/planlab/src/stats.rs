//! Aggregated cells and significance tests between them.

use std::path::Path;

use planlab_core::agents::EpisodeResult;
use planlab_core::error_model::ErrorCounts;
use serde::Serialize;
use thiserror::Error;

use crate::error::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CellKey {
    pub framework: String,
    pub t_star: u32,
    pub slack: u32,
}

impl CellKey {
    pub fn new(framework: impl Into<String>, t_star: u32, slack: u32) -> Self {
        CellKey {
            framework: framework.into(),
            t_star,
            slack,
        }
    }

    /// Episode-log file stem.
    pub fn file_stem(&self) -> String {
        format!("{}_T{}_S{}", self.framework, self.t_star, self.slack)
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} T*={} slack={}", self.framework, self.t_star, self.slack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub key: CellKey,
    pub n: u32,
    pub successes: u32,
    pub mean: f64,
    pub stderr: f64,
    pub planning_rate: Option<f64>,
    pub sampling_rate: Option<f64>,
    pub planning_err_steps: u64,
    pub sampling_err_steps: u64,
    pub total_steps: u64,
    pub mean_steps: f64,
    pub mean_replans: f64,
    pub solver_infeasible: u64,
    /// Per-episode success in (map, trial) order, for paired tests.
    pub outcomes: Vec<bool>,
}

pub fn stderr(mean: f64, n: u32) -> f64 {
    (mean * (1.0 - mean) / n as f64).sqrt()
}

impl CellSummary {
    pub fn from_episodes(key: CellKey, episodes: &[EpisodeResult]) -> Self {
        let n = episodes.len() as u32;
        let outcomes: Vec<bool> = episodes.iter().map(EpisodeResult::success).collect();
        let successes = outcomes.iter().filter(|&&s| s).count() as u32;
        let mean = if n == 0 { 0.0 } else { successes as f64 / n as f64 };
        let mut counts = ErrorCounts::default();
        for e in episodes {
            counts.add_record(&e.record);
        }
        let est = counts.estimate();
        let avg = |f: fn(&EpisodeResult) -> u32| {
            if n == 0 {
                0.0
            } else {
                episodes.iter().map(|e| f(e) as f64).sum::<f64>() / n as f64
            }
        };
        CellSummary {
            key,
            n,
            successes,
            mean,
            stderr: if n == 0 { 0.0 } else { stderr(mean, n) },
            planning_rate: est.planning_rate,
            sampling_rate: est.sampling_rate,
            planning_err_steps: episodes.iter().map(|e| u64::from(e.planning_err_steps)).sum(),
            sampling_err_steps: episodes.iter().map(|e| u64::from(e.sampling_err_steps)).sum(),
            total_steps: episodes.iter().map(|e| u64::from(e.steps_used)).sum(),
            mean_steps: avg(|e| e.steps_used),
            mean_replans: avg(|e| e.replans),
            solver_infeasible: episodes.iter().map(|e| u64::from(e.solver_infeasible_count)).sum(),
            outcomes,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<CellSummary>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl ResultTable {
    pub fn get(&self, key: &CellKey) -> Option<&CellSummary> {
        self.rows.iter().find(|r| &r.key == key)
    }

    pub fn by_framework<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a CellSummary> + 'a {
        self.rows.iter().filter(move |r| r.key.framework == label)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "framework",
            "T_star",
            "slack",
            "budget",
            "n",
            "successes",
            "success_mean",
            "stderr",
            "planning_err_rate",
            "sampling_err_rate",
            "mean_steps",
            "mean_replans",
            "solver_infeasible",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.key.framework.clone(),
                r.key.t_star.to_string(),
                r.key.slack.to_string(),
                (r.key.t_star + r.key.slack).to_string(),
                r.n.to_string(),
                r.successes.to_string(),
                format!("{:.6}", r.mean),
                format!("{:.6}", r.stderr),
                opt(r.planning_rate),
                opt(r.sampling_rate),
                format!("{:.4}", r.mean_steps),
                format!("{:.4}", r.mean_replans),
                r.solver_infeasible.to_string(),
            ])?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// `a` exceeds `b` by at least three standard errors.
    Significant,
    NotSignificant,
    /// `b` exceeds `a` by at least three standard errors.
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub diff: f64,
    pub z: f64,
    pub paired: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("no cell {0}")]
    MissingCell(String),
    #[error("cell {cell} has {n} samples, at least 30 are needed")]
    InsufficientSamples { cell: String, n: u32 },
}

pub const SIGMA: f64 = 3.0;

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Tests `success(a) >= success(b)`. Cells sharing T*, slack and sample
/// count ran on matched seeds and get a paired test on per-episode
/// differences; other pairs get an unpooled two-proportion test.
pub fn compare_cells(table: &ResultTable, a: &CellKey, b: &CellKey) -> Result<Comparison, CompareError> {
    let ca = table.get(a).ok_or_else(|| CompareError::MissingCell(a.to_string()))?;
    let cb = table.get(b).ok_or_else(|| CompareError::MissingCell(b.to_string()))?;
    for c in [ca, cb] {
        if c.n < 30 {
            return Err(CompareError::InsufficientSamples {
                cell: c.key.to_string(),
                n: c.n,
            });
        }
    }
    Ok(compare_summaries(ca, cb))
}

pub fn compare_summaries(ca: &CellSummary, cb: &CellSummary) -> Comparison {
    let paired = ca.key.t_star == cb.key.t_star && ca.key.slack == cb.key.slack && ca.n == cb.n;
    let diff = ca.mean - cb.mean;
    let se = if paired {
        let n = ca.n as f64;
        let d: Vec<f64> = ca
            .outcomes
            .iter()
            .zip(&cb.outcomes)
            .map(|(&x, &y)| f64::from(u8::from(x)) - f64::from(u8::from(y)))
            .collect();
        let var = d.iter().map(|v| (v - diff).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        (ca.stderr.powi(2) + cb.stderr.powi(2)).sqrt()
    };
    let z = z_score(diff, se);
    let verdict = if z >= SIGMA {
        Verdict::Significant
    } else if z <= -SIGMA {
        Verdict::Reversed
    } else {
        Verdict::NotSignificant
    };
    Comparison { diff, z, paired, verdict }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(label: &str, t: u32, outcomes: Vec<bool>) -> CellSummary {
        let n = outcomes.len() as u32;
        let successes = outcomes.iter().filter(|&&s| s).count() as u32;
        let mean = successes as f64 / n as f64;
        CellSummary {
            key: CellKey::new(label, t, 2),
            n,
            successes,
            mean,
            stderr: stderr(mean, n),
            planning_rate: None,
            sampling_rate: None,
            planning_err_steps: 0,
            sampling_err_steps: 0,
            total_steps: 0,
            mean_steps: 0.0,
            mean_replans: 0.0,
            solver_infeasible: 0,
            outcomes,
        }
    }

    fn pattern(n: usize, every: usize) -> Vec<bool> {
        (0..n).map(|i| i % every == 0).collect()
    }

    #[test]
    fn identical_cells_not_significant() {
        let t = ResultTable {
            rows: vec![cell("a", 4, pattern(100, 3)), cell("b", 4, pattern(100, 3))],
        };
        let c = compare_cells(&t, &CellKey::new("a", 4, 2), &CellKey::new("b", 4, 2)).unwrap();
        assert_eq!(c.verdict, Verdict::NotSignificant);
        assert_eq!(c.z, 0.0);
        assert!(c.paired);
    }

    #[test]
    fn clear_gap_is_significant_both_ways() {
        let t = ResultTable {
            rows: vec![cell("a", 4, pattern(400, 1)), cell("b", 4, pattern(400, 4))],
        };
        let (a, b) = (CellKey::new("a", 4, 2), CellKey::new("b", 4, 2));
        assert_eq!(compare_cells(&t, &a, &b).unwrap().verdict, Verdict::Significant);
        assert_eq!(compare_cells(&t, &b, &a).unwrap().verdict, Verdict::Reversed);
    }

    #[test]
    fn paired_statistic_by_hand() {
        // 40 pairs: 10 where a wins, 2 where b wins, 28 ties.
        let a: Vec<bool> = (0..40).map(|i| i < 10 || (12..20).contains(&i)).collect();
        let b: Vec<bool> = (0..40).map(|i| (10..20).contains(&i)).collect();
        let c = compare_summaries(&cell("a", 4, a), &cell("b", 4, b));
        let diff: f64 = 8.0 / 40.0;
        let var = (10.0 * (1.0 - diff).powi(2) + 2.0 * (-1.0 - diff).powi(2) + 28.0 * diff * diff) / 39.0;
        assert!((c.z - diff / (var / 40.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unpaired_across_t_star() {
        let c = compare_summaries(&cell("a", 2, pattern(100, 2)), &cell("a", 12, pattern(100, 5)));
        assert!(!c.paired);
        let se = (0.25f64 / 100.0 + 0.16 / 100.0).sqrt();
        assert!((c.z - 0.3 / se).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let t = ResultTable {
            rows: vec![cell("a", 4, pattern(29, 2)), cell("b", 4, pattern(100, 2))],
        };
        let err = compare_cells(&t, &CellKey::new("a", 4, 2), &CellKey::new("b", 4, 2)).unwrap_err();
        assert!(matches!(err, CompareError::InsufficientSamples { n: 29, .. }));
        assert!(matches!(
            compare_cells(&t, &CellKey::new("z", 4, 2), &CellKey::new("b", 4, 2)),
            Err(CompareError::MissingCell(_))
        ));
    }
}
