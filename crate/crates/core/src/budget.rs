use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer resource vector. Comparison is element-wise only.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Budget(Vec<u32>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BudgetViolation {
    #[error("component {component}: cost {requested} exceeds remaining {available}")]
    Exceeded {
        component: usize,
        available: u32,
        requested: u32,
    },
    #[error("budget has {budget} components but cost has {cost}")]
    DimensionMismatch { budget: usize, cost: usize },
}

impl Budget {
    pub fn new(components: Vec<u32>) -> Self {
        Self(components)
    }

    /// Single-component step budget.
    pub fn steps(n: u32) -> Self {
        Self(vec![n])
    }

    pub fn zero(dims: usize) -> Self {
        Self(vec![0; dims])
    }

    /// Effectively infinite budget; charging never exhausts it in practice.
    pub fn unbounded(dims: usize) -> Self {
        Self(vec![u32::MAX; dims])
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    /// First component; the step count for Sokoban budgets.
    pub fn primary(&self) -> u32 {
        self.0.first().copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `self ⪯ other`.
    pub fn fits_within(&self, other: &Budget) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn charge(&self, cost: &Budget) -> Result<Budget, BudgetViolation> {
        charge(self, cost)
    }

    /// Element-wise sum, saturating at `u32::MAX`.
    pub fn saturating_add(&self, other: &Budget) -> Result<Budget, BudgetViolation> {
        if self.0.len() != other.0.len() {
            return Err(BudgetViolation::DimensionMismatch {
                budget: self.0.len(),
                cost: other.0.len(),
            });
        }
        Ok(Budget(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.saturating_add(*b))
                .collect(),
        ))
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

impl From<Vec<u32>> for Budget {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

/// Subtracts `cost` from `budget`, failing when `cost ⪯ budget` does not hold.
///
/// A violation means the agent has entered a dead end and the episode ends.
pub fn charge(budget: &Budget, cost: &Budget) -> Result<Budget, BudgetViolation> {
    if budget.0.len() != cost.0.len() {
        return Err(BudgetViolation::DimensionMismatch {
            budget: budget.0.len(),
            cost: cost.0.len(),
        });
    }
    let mut out = Vec::with_capacity(budget.0.len());
    for (component, (&available, &requested)) in budget.0.iter().zip(&cost.0).enumerate() {
        if requested > available {
            return Err(BudgetViolation::Exceeded {
                component,
                available,
                requested,
            });
        }
        out.push(available - requested);
    }
    Ok(Budget(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_charge() {
        assert_eq!(charge(&Budget::steps(5), &Budget::steps(1)), Ok(Budget::steps(4)));
    }

    #[test]
    fn exhausted_budget_is_violation() {
        assert!(matches!(
            charge(&Budget::steps(0), &Budget::steps(1)),
            Err(BudgetViolation::Exceeded { component: 0, .. })
        ));
    }

    #[test]
    fn exact_exhaustion() {
        let b = Budget::new(vec![3, 2]);
        assert_eq!(charge(&b, &Budget::new(vec![3, 2])), Ok(Budget::zero(2)));
    }

    #[test]
    fn partial_violation_reports_component() {
        let err = charge(&Budget::new(vec![3, 1]), &Budget::new(vec![1, 2])).unwrap_err();
        assert_eq!(
            err,
            BudgetViolation::Exceeded {
                component: 1,
                available: 1,
                requested: 2
            }
        );
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            charge(&Budget::steps(3), &Budget::new(vec![1, 1])),
            Err(BudgetViolation::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn elementwise_order() {
        let a = Budget::new(vec![1, 3]);
        let b = Budget::new(vec![2, 2]);
        assert!(!a.fits_within(&b));
        assert!(!b.fits_within(&a));
        assert!(a.fits_within(&Budget::new(vec![1, 3])));
    }
}
