//! Volumes and covering numbers of quotient feature spaces.
//!
//! Lattice counts use closed side-`1/q` cubes of the grid on `[0,1]^n` that
//! intersect the domain. A radius-`ε` sup-norm ball covering is bounded by
//! the side-`2ε` cube count; conversions are left to callers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::GroupOrder;
use crate::permgroup::{PermGroup, Permutation};
use crate::qfs::{is_canonical, sn_cosets, validate_sn_cosets};

/// Default cap on the number of grid cells enumerated by [`cube_count`].
pub const DEFAULT_CELL_BUDGET: u128 = 1 << 30;

const MC_BLOCK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lattice,
    MonteCarlo,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringEstimate {
    pub value: f64,
    pub method: Method,
    /// Grid divisor `q`, sample count, or `ε`, depending on `method`.
    pub parameter: f64,
    pub std_error: f64,
}

/// Domains whose cube counts can be enumerated.
#[derive(Debug, Clone)]
pub enum CubeDomain {
    /// `Δ_{S_n}`: non-increasing coordinates.
    Sorted,
    /// `Δ̃_G = ⋃_k g_k·Δ_{S_n}` for representatives of `G\S_n`.
    Tilde(Vec<Permutation>),
}

impl CubeDomain {
    pub fn tilde_for(g: &PermGroup) -> Result<Self> {
        let cs = sn_cosets(g)?;
        validate_sn_cosets(g, &cs)?;
        Ok(CubeDomain::Tilde(cs.representatives))
    }
}

/// Greedy descending assignment: start at the first cube's upper face and
/// keep each coordinate as high as allowed. Indices are in units of `1/q`.
fn cube_meets_sorted(idx: &[u32]) -> bool {
    let mut x = idx[0] + 1;
    for &j in &idx[1..] {
        x = x.min(j + 1);
        if x < j {
            return false;
        }
    }
    true
}

fn cube_meets(domain: &CubeDomain, idx: &[u32]) -> bool {
    match domain {
        CubeDomain::Sorted => cube_meets_sorted(idx),
        CubeDomain::Tilde(reps) => reps
            .iter()
            .any(|g| cube_meets_sorted(&g.inverse().apply_unchecked(idx))),
    }
}

pub fn cube_count(domain: &CubeDomain, n: usize, q: u32, budget: u128) -> Result<CoveringEstimate> {
    if n == 0 || q == 0 {
        return Err(Error::InvalidParameter("n and q must be positive".into()));
    }
    if let CubeDomain::Tilde(reps) = domain {
        if reps.iter().any(|r| r.degree() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: reps.iter().find(|r| r.degree() != n).map_or(0, |r| r.degree()),
            });
        }
    }
    let cells = (q as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if cells > budget {
        return Err(Error::BudgetExceeded { cells, budget });
    }
    // Invert representatives once.
    let domain = match domain {
        CubeDomain::Sorted => CubeDomain::Sorted,
        CubeDomain::Tilde(reps) => CubeDomain::Tilde(reps.iter().map(|r| r.inverse()).collect()),
    };
    let inner: u64 = (q as u64).pow(n as u32 - 1);
    let count: u64 = (0..q)
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0u32; n];
            idx[0] = first;
            let mut c = 0u64;
            for lin in 0..inner {
                let mut rest = lin;
                for slot in idx[1..].iter_mut().rev() {
                    *slot = (rest % q as u64) as u32;
                    rest /= q as u64;
                }
                let hit = match &domain {
                    CubeDomain::Sorted => cube_meets_sorted(&idx),
                    CubeDomain::Tilde(invs) => invs
                        .iter()
                        .any(|gi| cube_meets_sorted(&gi.apply_unchecked(&idx))),
                };
                c += hit as u64;
            }
            c
        })
        .sum();
    Ok(CoveringEstimate {
        value: count as f64,
        method: Method::Lattice,
        parameter: q as f64,
        std_error: 0.0,
    })
}

/// Whether the closed grid cube with index vector `idx` meets the domain.
pub fn cube_intersects(domain: &CubeDomain, idx: &[u32]) -> bool {
    cube_meets(domain, idx)
}

/// Fraction of uniform draws on `[0,1]^n` that are their own canonical
/// representative, with binomial standard error. Samples are drawn in fixed
/// blocks, each from its own ChaCha stream, so the estimate does not depend
/// on scheduling.
pub fn mc_fundamental_volume(g: &PermGroup, samples: u64, seed: u64) -> Result<CoveringEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    let n = g.degree();
    let blocks = samples.div_ceil(MC_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let len = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut x = vec![0.0; n];
            let mut h = 0u64;
            for _ in 0..len {
                for v in x.iter_mut() {
                    *v = rng.gen::<f64>();
                }
                h += is_canonical(g, &x) as u64;
            }
            h
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(CoveringEstimate {
        value: p,
        method: Method::MonteCarlo,
        parameter: samples as f64,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
    })
}

/// `ln(C / (|G| ε^n))`.
pub fn analytic_covering_ln(n: usize, order: GroupOrder, epsilon: f64, c: f64) -> Result<f64> {
    if epsilon <= 0.0 || c <= 0.0 || order.ln() < 0.0 {
        return Err(Error::InvalidParameter(
            "epsilon and C must be positive and |G| ≥ 1".into(),
        ));
    }
    Ok(c.ln() - order.ln() - n as f64 * epsilon.ln())
}

/// `C / (|G| ε^n)`.
pub fn analytic_covering_bound(n: usize, order: GroupOrder, epsilon: f64, c: f64) -> Result<f64> {
    analytic_covering_ln(n, order, epsilon, c).map(f64::exp)
}

pub fn analytic_covering_log10(n: usize, order: GroupOrder, epsilon: f64, c: f64) -> Result<f64> {
    analytic_covering_ln(n, order, epsilon, c).map(crate::logspace::ln_to_log10)
}

pub fn analytic_estimate(n: usize, order: GroupOrder, epsilon: f64, c: f64) -> Result<CoveringEstimate> {
    Ok(CoveringEstimate {
        value: analytic_covering_bound(n, order, epsilon, c)?,
        method: Method::Analytic,
        parameter: epsilon,
        std_error: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionClassCovering {
    /// Sup-norm radius `2·C_lip·δ` at which the bound applies.
    pub radius: f64,
    /// Natural-log covering number bound `N_δ · ln(8c²B/δ)`.
    pub log_covering: f64,
}

/// Log covering number of a class of `C_lip`-Lipschitz functions bounded by
/// `B` on a domain covered by `n_delta` sup-norm balls of radius `δ`.
pub fn function_class_log_covering(
    n_delta: f64,
    c_lip: f64,
    b: f64,
    delta: f64,
    c: f64,
) -> Result<FunctionClassCovering> {
    if n_delta < 0.0 || c_lip <= 0.0 || b <= 0.0 || delta <= 0.0 || c <= 0.0 {
        return Err(Error::InvalidParameter(
            "covering inputs must be positive".into(),
        ));
    }
    let ratio = 8.0 * c * c * b / delta;
    if ratio <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "8c²B/δ = {ratio} ≤ 1 makes the bound vacuous"
        )));
    }
    Ok(FunctionClassCovering {
        radius: 2.0 * c_lip * delta,
        log_covering: n_delta * ratio.ln(),
    })
}
