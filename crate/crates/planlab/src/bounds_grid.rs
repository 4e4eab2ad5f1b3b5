//! Cartesian grids over the closed-form bounds.

use std::io::Write;

use planlab_core::bounds::{monotonicity_condition, u_ours, u_pa, u_react, BoundInput};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsGrid {
    pub eps_p: Vec<f64>,
    pub eps_s: Vec<f64>,
    pub delta_b: Vec<f64>,
    pub delta_r: Vec<f64>,
    pub t: Vec<u32>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<f64>,
    #[serde(default = "default_p_follow")]
    pub p_follow: Vec<f64>,
    /// Constant candidate count per step.
    #[serde(default = "default_d")]
    pub d: Vec<u32>,
}

fn default_alpha() -> Vec<f64> {
    vec![1.0]
}

fn default_p_follow() -> Vec<f64> {
    vec![0.9]
}

fn default_d() -> Vec<u32> {
    vec![2]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub eps_p: f64,
    pub eps_s: f64,
    pub delta_b: f64,
    pub delta_r: f64,
    pub t: u32,
    pub alpha: f64,
    pub p_follow: f64,
    pub d: u32,
    pub u_react: f64,
    pub u_pa: f64,
    pub u_ours: f64,
    pub monotone: bool,
}

impl BoundRow {
    fn input(&self) -> BoundInput {
        BoundInput {
            eps_p: self.eps_p,
            eps_s: self.eps_s,
            delta_b: self.delta_b,
            delta_r: self.delta_r,
            t: self.t,
            alpha: self.alpha,
            p_follow: self.p_follow,
            d_sequence: vec![self.d; self.t as usize],
        }
    }
}

impl BoundsGrid {
    pub fn len(&self) -> usize {
        [
            self.eps_p.len(),
            self.eps_s.len(),
            self.delta_b.len(),
            self.delta_r.len(),
            self.t.len(),
            self.alpha.len(),
            self.p_follow.len(),
            self.d.len(),
        ]
        .iter()
        .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.is_empty() {
            return Err("every bounds axis needs at least one value".into());
        }
        self.rows().map(|_| ())
    }

    /// Rows in axis order: `eps_p` slowest, `d` fastest.
    pub fn rows(&self) -> Result<Vec<BoundRow>, String> {
        let mut rows = Vec::with_capacity(self.len());
        for &eps_p in &self.eps_p {
            for &eps_s in &self.eps_s {
                for &delta_b in &self.delta_b {
                    for &delta_r in &self.delta_r {
                        for &t in &self.t {
                            for &alpha in &self.alpha {
                                for &p_follow in &self.p_follow {
                                    for &d in &self.d {
                                        let input = BoundInput {
                                            eps_p,
                                            eps_s,
                                            delta_b,
                                            delta_r,
                                            t,
                                            alpha,
                                            p_follow,
                                            d_sequence: vec![d; t as usize],
                                        };
                                        input.validate().map_err(|e| e.to_string())?;
                                        rows.push(BoundRow {
                                            eps_p,
                                            eps_s,
                                            delta_b,
                                            delta_r,
                                            t,
                                            alpha,
                                            p_follow,
                                            d,
                                            u_react: u_react(&input),
                                            u_pa: u_pa(&input),
                                            u_ours: u_ours(&input),
                                            monotone: monotonicity_condition(&input),
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(rows)
    }
}

pub fn write_csv<W: Write>(rows: &[BoundRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "eps_p", "eps_s", "delta_b", "delta_r", "T", "alpha", "p_follow", "d", "u_react", "u_pa", "u_ours", "monotone",
    ])?;
    for r in rows {
        w.write_record([
            r.eps_p.to_string(),
            r.eps_s.to_string(),
            r.delta_b.to_string(),
            r.delta_r.to_string(),
            r.t.to_string(),
            r.alpha.to_string(),
            r.p_follow.to_string(),
            r.d.to_string(),
            format!("{:.12e}", r.u_react),
            format!("{:.12e}", r.u_pa),
            format!("{:.12e}", r.u_ours),
            r.monotone.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Per-step factors coincide, so the bounds are equal at every horizon.
fn ours_equals_pa(r: &BoundRow) -> bool {
    let i = r.input();
    let same_plan_term = r.eps_p == 0.0 || r.eps_p == 1.0 || r.d == 1;
    let no_sampling_effect = i.eps_s_pa() == 0.0 || (1.0 - r.eps_p) * r.delta_b == r.eps_p * r.delta_r;
    same_plan_term && no_sampling_effect
}

fn pa_equals_react(r: &BoundRow) -> bool {
    r.alpha * r.p_follow == 0.0 || r.eps_s == 0.0 || (1.0 - r.eps_p) * r.delta_b == r.eps_p * r.delta_r
}

/// Ordering violations among rows satisfying the monotonicity condition:
/// `u_ours >= u_pa >= u_react`, with ties only where the factors coincide
/// (or both bounds have underflowed to zero).
pub fn ordering_violations(rows: &[BoundRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.monotone) {
        let tag = format!(
            "eps_p={} eps_s={} delta_b={} delta_r={} T={} alpha={} p_follow={} d={}",
            r.eps_p, r.eps_s, r.delta_b, r.delta_r, r.t, r.alpha, r.p_follow, r.d
        );
        if r.u_ours < r.u_pa && !close(r.u_ours, r.u_pa) {
            out.push(format!("u_ours < u_pa at {tag}"));
        } else if close(r.u_ours, r.u_pa) && r.u_pa != 0.0 && !ours_equals_pa(r) {
            out.push(format!("u_ours = u_pa without equality condition at {tag}"));
        }
        if r.u_pa < r.u_react && !close(r.u_pa, r.u_react) {
            out.push(format!("u_pa < u_react at {tag}"));
        } else if close(r.u_pa, r.u_react) && r.u_react != 0.0 && !pa_equals_react(r) {
            out.push(format!("u_pa = u_react without equality condition at {tag}"));
        }
    }
    out
}
