//! Log-space arithmetic for group orders and factorials that overflow `f64`.

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

/// A group order carried as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GroupOrder {
    ln: f64,
}

impl GroupOrder {
    pub fn exact(order: u64) -> Self {
        assert!(order >= 1, "group order must be at least 1");
        GroupOrder {
            ln: (order as f64).ln(),
        }
    }

    /// `n!` via log-gamma.
    pub fn factorial(n: u64) -> Self {
        GroupOrder { ln: ln_factorial(n) }
    }

    pub fn from_ln(ln: f64) -> Self {
        GroupOrder { ln }
    }

    pub fn from_log10(log10: f64) -> Self {
        GroupOrder { ln: log10 * LN_10 }
    }

    pub fn ln(&self) -> f64 {
        self.ln
    }

    pub fn log10(&self) -> f64 {
        self.ln / LN_10
    }

    /// Linear value; `inf` beyond the `f64` range.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }
}

pub fn ln_to_log10(ln: f64) -> f64 {
    ln / LN_10
}

/// `ln(Σ exp(a_i))`, returning a single term unchanged.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    match terms {
        [] => f64::NEG_INFINITY,
        [one] => *one,
        _ => {
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return max;
            }
            max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
        }
    }
}

/// Linear value of a log10 quantity, or `None` outside `|log10| < 300`.
pub fn checked_pow10(log10: f64) -> Option<f64> {
    (log10.abs() < 300.0).then(|| 10f64.powf(log10))
}
