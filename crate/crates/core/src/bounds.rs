//! Closed-form success-probability upper bounds for the three controller families.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error_model::{check_probability, InvalidProbability};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    pub eps_p: f64,
    pub eps_s: f64,
    pub delta_b: f64,
    pub delta_r: f64,
    pub t: u32,
    pub alpha: f64,
    pub p_follow: f64,
    /// Distinct candidate actions per step; length `t`.
    pub d_sequence: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundInputError {
    #[error(transparent)]
    Probability(#[from] InvalidProbability),
    #[error("t must be at least 1")]
    ZeroHorizon,
    #[error("d_sequence has {got} entries, expected {t}")]
    DLength { got: usize, t: u32 },
    #[error("d_sequence entries must be at least 1")]
    ZeroCandidates,
}

impl BoundInput {
    pub fn validate(&self) -> Result<(), BoundInputError> {
        check_probability("eps_p", self.eps_p)?;
        check_probability("eps_s", self.eps_s)?;
        check_probability("delta_b", self.delta_b)?;
        check_probability("delta_r", self.delta_r)?;
        check_probability("alpha", self.alpha)?;
        check_probability("p_follow", self.p_follow)?;
        if self.t == 0 {
            return Err(BoundInputError::ZeroHorizon);
        }
        if self.d_sequence.len() != self.t as usize {
            return Err(BoundInputError::DLength {
                got: self.d_sequence.len(),
                t: self.t,
            });
        }
        if self.d_sequence.contains(&0) {
            return Err(BoundInputError::ZeroCandidates);
        }
        Ok(())
    }

    /// Effective sampling error under plan following: `(1 - alpha * p_follow) * eps_s`.
    pub fn eps_s_pa(&self) -> f64 {
        (1.0 - self.alpha * self.p_follow) * self.eps_s
    }
}

const LOG_DOMAIN_ABOVE: u32 = 100;

fn power(base: f64, t: u32) -> f64 {
    if t > LOG_DOMAIN_ABOVE {
        if base <= 0.0 {
            0.0
        } else {
            (t as f64 * base.ln()).exp()
        }
    } else {
        base.powi(t as i32)
    }
}

/// One-step viability probability with sampling error `eps_s`.
pub fn react_step_probability(eps_p: f64, eps_s: f64, delta_b: f64, delta_r: f64) -> f64 {
    (1.0 - eps_p) * (1.0 - eps_s * delta_b) + eps_p * eps_s * delta_r
}

pub fn u_react(input: &BoundInput) -> f64 {
    power(
        react_step_probability(input.eps_p, input.eps_s, input.delta_b, input.delta_r),
        input.t,
    )
}

pub fn u_pa(input: &BoundInput) -> f64 {
    power(
        react_step_probability(input.eps_p, input.eps_s_pa(), input.delta_b, input.delta_r),
        input.t,
    )
}

pub fn ours_step_probability(eps_p: f64, d: u32) -> f64 {
    1.0 - eps_p.powi(d as i32)
}

pub fn u_ours(input: &BoundInput) -> f64 {
    let factors = input.d_sequence.iter().map(|&d| ours_step_probability(input.eps_p, d));
    if input.t > LOG_DOMAIN_ABOVE {
        let mut log_sum = 0.0;
        for f in factors {
            if f <= 0.0 {
                return 0.0;
            }
            log_sum += f.ln();
        }
        log_sum.exp()
    } else {
        factors.product()
    }
}

/// `(1 - eps_p) * delta_b >= eps_p * delta_r`: deviations break viability at
/// least as often as they recover it, so the ReAct bound falls as either error grows.
pub fn monotonicity_condition(input: &BoundInput) -> bool {
    (1.0 - input.eps_p) * input.delta_b >= input.eps_p * input.delta_r
}
