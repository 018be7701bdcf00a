//! Generalization bounds for invariant and equivariant networks, evaluated in
//! natural-log space and reported in log10.
//!
//! The constants `C`, `C̃`, `c̃` are existential in the underlying results and
//! default to 1. They are always recorded in the report inputs.

use std::f64::consts::LN_2;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::logspace::{checked_pow10, ln_to_log10, log_sum_exp, GroupOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Invariant,
    Equivariant,
    NonTransitive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub group_order_log10: Option<f64>,
    pub stab_orders_log10: Vec<f64>,
    pub m: f64,
    pub epsilon: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub main_term_log10: f64,
    pub confidence_term_log10: f64,
    pub total_log10: f64,
    /// The bound holds with probability at least `1 − 2ε`.
    pub probability: f64,
    pub inputs: BoundInputs,
}

impl BoundReport {
    pub fn main_term(&self) -> Option<f64> {
        checked_pow10(self.main_term_log10)
    }

    pub fn confidence_term(&self) -> Option<f64> {
        checked_pow10(self.confidence_term_log10)
    }

    pub fn total(&self) -> Option<f64> {
        checked_pow10(self.total_log10)
    }
}

fn validate(n: usize, m: f64, epsilon: f64, c: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if !(m >= 1.0) {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must lie in (0, 1/2)"
        )));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidParameter("constant must be positive".into()));
    }
    Ok(())
}

/// `ln √(exp(ln_num) / m^{2/n})`.
fn main_ln(ln_num: f64, n: usize, m: f64) -> f64 {
    0.5 * (ln_num - (2.0 / n as f64) * m.ln())
}

/// `ln √(2·ln(1/2ε)/m)`.
pub fn confidence_ln(m: f64, epsilon: f64) -> f64 {
    (2.0 * (1.0 / (2.0 * epsilon)).ln() / m).sqrt().ln()
}

fn report(kind: BoundKind, main: f64, inputs: BoundInputs) -> BoundReport {
    let conf = confidence_ln(inputs.m, inputs.epsilon);
    BoundReport {
        kind,
        main_term_log10: ln_to_log10(main),
        confidence_term_log10: ln_to_log10(conf),
        total_log10: ln_to_log10(log_sum_exp(&[main, conf])),
        probability: 1.0 - 2.0 * inputs.epsilon,
        inputs,
    }
}

/// `√(C/(|G|·m^{2/n})) + √(2·ln(1/2ε)/m)`.
pub fn invariant_bound(n: usize, order: GroupOrder, m: f64, epsilon: f64, c: f64) -> Result<BoundReport> {
    validate(n, m, epsilon, c)?;
    let main = main_ln(c.ln() - order.ln(), n, m);
    Ok(report(
        BoundKind::Invariant,
        main,
        BoundInputs {
            n,
            group_order_log10: Some(order.log10()),
            stab_orders_log10: vec![],
            m,
            epsilon,
            c,
        },
    ))
}

/// The `G = S_n` specialization, `√(C/(n!·m^{2/n}))`.
pub fn sn_invariant_bound(n: usize, m: f64, epsilon: f64, c: f64) -> Result<BoundReport> {
    validate(n, m, epsilon, c)?;
    let ln_fact = ln_factorial(n as u64);
    let main = 0.5 * (c.ln() - ln_fact - (2.0 / n as f64) * m.ln());
    Ok(report(
        BoundKind::Invariant,
        main,
        BoundInputs {
            n,
            group_order_log10: Some(ln_to_log10(ln_fact)),
            stab_orders_log10: vec![],
            m,
            epsilon,
            c,
        },
    ))
}

/// `√(C̃/(|St(G)|·m^{2/n})) + √(2·ln(1/2ε)/m)` for transitive `G`.
pub fn equivariant_bound(
    n: usize,
    stab_order: GroupOrder,
    m: f64,
    epsilon: f64,
    c_tilde: f64,
) -> Result<BoundReport> {
    validate(n, m, epsilon, c_tilde)?;
    let main = main_ln(c_tilde.ln() - stab_order.ln(), n, m);
    Ok(report(
        BoundKind::Equivariant,
        main,
        BoundInputs {
            n,
            group_order_log10: None,
            stab_orders_log10: vec![stab_order.log10()],
            m,
            epsilon,
            c: c_tilde,
        },
    ))
}

/// The `G = S_n` specialization with stabilizer order `(n−1)!`.
pub fn sn_equivariant_bound(n: usize, m: f64, epsilon: f64, c_tilde: f64) -> Result<BoundReport> {
    validate(n, m, epsilon, c_tilde)?;
    let ln_stab = ln_factorial(n as u64 - 1);
    let main = 0.5 * (c_tilde.ln() - ln_stab - (2.0 / n as f64) * m.ln());
    Ok(report(
        BoundKind::Equivariant,
        main,
        BoundInputs {
            n,
            group_order_log10: None,
            stab_orders_log10: vec![ln_to_log10(ln_stab)],
            m,
            epsilon,
            c: c_tilde,
        },
    ))
}

/// `√(Σ_j c̃/(|Stab_G(j)|·m^{2/n})) + √(2·ln(1/2ε)/m)` summed over orbits.
pub fn nontransitive_equivariant_bound(
    n: usize,
    stab_orders: &[GroupOrder],
    m: f64,
    epsilon: f64,
    c_tilde: f64,
) -> Result<BoundReport> {
    validate(n, m, epsilon, c_tilde)?;
    if stab_orders.is_empty() {
        return Err(Error::InvalidParameter("orbit list is empty".into()));
    }
    let terms: Vec<f64> = stab_orders.iter().map(|s| c_tilde.ln() - s.ln()).collect();
    let main = main_ln(log_sum_exp(&terms), n, m);
    let kind = if stab_orders.len() == 1 {
        BoundKind::Equivariant
    } else {
        BoundKind::NonTransitive
    };
    Ok(report(
        kind,
        main,
        BoundInputs {
            n,
            group_order_log10: None,
            stab_orders_log10: stab_orders.iter().map(|s| s.log10()).collect(),
            m,
            epsilon,
            c: c_tilde,
        },
    ))
}

/// `1/√m`.
pub fn ordinary_bound(m: f64) -> f64 {
    1.0 / m.sqrt()
}

pub fn ordinary_log10(m: f64) -> f64 {
    -0.5 * m.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DudleyOptions {
    /// Number of log-spaced `α` candidates.
    pub alpha_points: usize,
    /// Trapezoid nodes per integral, log-spaced in `δ`.
    pub quad_nodes: usize,
    /// Smallest `α` candidate as a fraction of `√m`.
    pub alpha_floor: f64,
}

impl Default for DudleyOptions {
    fn default() -> Self {
        DudleyOptions {
            alpha_points: 256,
            quad_nodes: 1024,
            alpha_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DudleyReport {
    /// Complexity term plus confidence term.
    pub value: f64,
    /// Grid-optimal `α`.
    pub alpha: f64,
    /// `4α + (12/√m)·∫_α^{√m} √(2·ln(2·N_δ)) dδ` at the optimal `α`.
    pub complexity: f64,
    pub confidence: f64,
}

/// Entropy-integral bound
/// `√(2·ln(1/2ε)/m) + inf_α {4α + (12/√m)·∫_α^{√m} √(2·(ln 2 + ln N_δ)) dδ}`
/// with `log_covering(δ) = ln N_δ`, minimised over a log-spaced `α` grid.
pub fn dudley_bound<F: Fn(f64) -> f64>(
    log_covering: F,
    m: f64,
    epsilon: f64,
    opts: DudleyOptions,
) -> Result<DudleyReport> {
    if !(m >= 1.0) {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter("epsilon must lie in (0, 1/2)".into()));
    }
    if opts.alpha_points < 2 || opts.quad_nodes < 2 || !(opts.alpha_floor > 0.0 && opts.alpha_floor < 1.0) {
        return Err(Error::InvalidParameter("invalid Dudley grid options".into()));
    }
    let top = m.sqrt();
    let integrand = |delta: f64| -> Result<f64> {
        let lc = log_covering(delta);
        let v = (2.0 * (LN_2 + lc)).sqrt();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidParameter(format!(
                "log covering is not finite at δ = {delta}"
            )))
        }
    };
    let lo = (opts.alpha_floor * top).ln();
    let hi = top.ln();
    let mut best = (f64::INFINITY, top);
    for a in 0..opts.alpha_points {
        let t_alpha = lo + (hi - lo) * a as f64 / (opts.alpha_points - 1) as f64;
        let alpha = t_alpha.exp();
        let integral = if a + 1 == opts.alpha_points {
            0.0
        } else {
            // ∫ f(δ) dδ = ∫ f(e^t) e^t dt
            let h = (hi - t_alpha) / (opts.quad_nodes - 1) as f64;
            let mut acc = 0.0;
            for k in 0..opts.quad_nodes {
                let t = t_alpha + h * k as f64;
                let d = t.exp();
                let w = if k == 0 || k + 1 == opts.quad_nodes { 0.5 } else { 1.0 };
                acc += w * integrand(d)? * d;
            }
            acc * h
        };
        let v = 4.0 * alpha + 12.0 / top * integral;
        if v < best.0 {
            best = (v, alpha);
        }
    }
    let confidence = confidence_ln(m, epsilon).exp();
    Ok(DudleyReport {
        value: best.0 + confidence,
        alpha: best.1,
        complexity: best.0,
        confidence,
    })
}

/// Constants of the chained covering estimate used with [`dudley_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringConstants {
    /// Volume constant of the domain covering `C/(|G|·δⁿ)`.
    pub c_volume: f64,
    /// Lipschitz constant of the function class.
    pub c_lip: f64,
    /// Uniform bound on the function class.
    pub b: f64,
    /// Universal constant of the function-class covering.
    pub c: f64,
}

impl Default for CoveringConstants {
    fn default() -> Self {
        CoveringConstants {
            c_volume: 1.0,
            c_lip: 1.0,
            b: 1.0,
            c: 1.0,
        }
    }
}

/// `ln N_r` of `G`-invariant Lipschitz functions at sup-norm radius `r`,
/// chaining the domain covering `max(1, C/(|G|·δⁿ))` at `δ = r/(2·C_lip)`
/// into `N_δ·ln(8c²B/δ)`, floored at zero.
pub fn invariant_log_covering(
    n: usize,
    order: GroupOrder,
    k: CoveringConstants,
) -> impl Fn(f64) -> f64 {
    move |r: f64| {
        let delta = r / (2.0 * k.c_lip);
        let ratio = 8.0 * k.c * k.c * k.b / delta;
        if ratio <= 1.0 {
            return 0.0;
        }
        let ln_n = (k.c_volume.ln() - order.ln() - n as f64 * delta.ln()).max(0.0);
        ln_n.exp() * ratio.ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub m: f64,
    pub group_order_log10: f64,
    pub stab_order_log10: Option<f64>,
    pub main_log10: f64,
    pub conf_log10: f64,
    pub total_log10: f64,
    pub ordinary_log10: f64,
}

pub const CURVE_HEADER: [&str; 8] = [
    "n",
    "m",
    "group_order",
    "stab_order",
    "main_log10",
    "conf_log10",
    "total_log10",
    "ordinary_log10",
];

pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..points)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
                .collect()
        }
    }
}

/// Invariant-bound curves over `m` for each `(n, |G|)` pair.
pub fn theory_curves(
    n_list: &[usize],
    m_values: &[f64],
    group_orders: &[GroupOrder],
    c: f64,
    epsilon: f64,
) -> Result<Vec<CurveRow>> {
    if n_list.len() != group_orders.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} dimensions but {} group orders",
            n_list.len(),
            group_orders.len()
        )));
    }
    let mut rows = Vec::with_capacity(n_list.len() * m_values.len());
    for (&n, &order) in n_list.iter().zip(group_orders) {
        for &m in m_values {
            let r = invariant_bound(n, order, m, epsilon, c)?;
            rows.push(CurveRow {
                n,
                m,
                group_order_log10: order.log10(),
                stab_order_log10: None,
                main_log10: r.main_term_log10,
                conf_log10: r.confidence_term_log10,
                total_log10: r.total_log10,
                ordinary_log10: ordinary_log10(m),
            });
        }
    }
    Ok(rows)
}

/// Orders below `1e15` are written as integers, larger ones as `1e<log10>`.
pub fn format_order(log10: f64) -> String {
    if log10 < 15.0 {
        format!("{}", 10f64.powf(log10).round())
    } else {
        format!("1e{log10:.6}")
    }
}

pub fn report_row(r: &BoundReport) -> CurveRow {
    CurveRow {
        n: r.inputs.n,
        m: r.inputs.m,
        group_order_log10: r.inputs.group_order_log10.unwrap_or(f64::NAN),
        stab_order_log10: match r.inputs.stab_orders_log10.as_slice() {
            [] => None,
            [one] => Some(*one),
            many => Some(ln_to_log10(log_sum_exp(
                &many.iter().map(|v| v * std::f64::consts::LN_10).collect::<Vec<_>>(),
            ))),
        },
        main_log10: r.main_term_log10,
        conf_log10: r.confidence_term_log10,
        total_log10: r.total_log10,
        ordinary_log10: ordinary_log10(r.inputs.m),
    }
}

pub fn write_curves_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            if r.group_order_log10.is_nan() {
                String::new()
            } else {
                format_order(r.group_order_log10)
            },
            r.stab_order_log10.map(format_order).unwrap_or_default(),
            r.main_log10.to_string(),
            r.conf_log10.to_string(),
            r.total_log10.to_string(),
            r.ordinary_log10.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_examples() {
        let r = invariant_bound(100, GroupOrder::factorial(100), 9843.0, 0.05, 1.0).unwrap();
        let expect = -0.5 * (157.970 + 0.02 * 9843f64.log10());
        assert!((r.main_term_log10 - expect).abs() < 1e-3, "{}", r.main_term_log10);
        assert!((r.main_term_log10 + 79.02).abs() < 0.01);

        let r = invariant_bound(3, GroupOrder::exact(6), 60.0, 0.05, 1.0).unwrap();
        assert!((r.main_term().unwrap() - 0.1043).abs() < 1e-4);
        assert!((r.confidence_term().unwrap() - 0.2771).abs() < 1e-4);
        assert!((r.total().unwrap() - 0.381).abs() < 1e-3);
        assert_eq!(r.probability, 0.9);

        // |G| = 1, n large: main term tends to √C
        let r = invariant_bound(1_000_000, GroupOrder::exact(1), 100.0, 0.1, 4.0).unwrap();
        assert!((r.main_term().unwrap() - 2.0).abs() < 1e-4);
    }

    #[test]
    fn epsilon_domain() {
        assert!(invariant_bound(3, GroupOrder::exact(6), 60.0, 0.5, 1.0).is_err());
        assert!(invariant_bound(3, GroupOrder::exact(6), 60.0, 0.0, 1.0).is_err());
        assert!(invariant_bound(3, GroupOrder::exact(6), 0.5, 0.1, 1.0).is_err());
    }

    #[test]
    fn equivariant_examples() {
        let inv = sn_invariant_bound(9, 500.0, 0.05, 1.0).unwrap();
        let eq = sn_equivariant_bound(9, 500.0, 0.05, 1.0).unwrap();
        let ratio = 10f64.powf(eq.main_term_log10 - inv.main_term_log10);
        assert!((ratio - 3.0).abs() < 1e-12);

        let r = equivariant_bound(4, GroupOrder::exact(6), 100.0, 0.05, 1.0).unwrap();
        assert!((r.main_term().unwrap() - (1.0f64 / 60.0).sqrt()).abs() < 1e-12);
        let one = equivariant_bound(4, GroupOrder::exact(1), 100.0, 0.05, 1.0).unwrap();
        assert!((one.main_term().unwrap() - (1.0 / 10.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nontransitive_examples() {
        let r = nontransitive_equivariant_bound(3, &[GroupOrder::exact(1); 3], 100.0, 0.05, 1.0).unwrap();
        assert!((r.main_term().unwrap() - (3.0 / 100f64.powf(2.0 / 3.0)).sqrt()).abs() < 1e-12);
        assert!((r.main_term().unwrap() - 0.372).abs() < 2e-3);
        let r = nontransitive_equivariant_bound(
            4,
            &[GroupOrder::exact(2), GroupOrder::exact(6)],
            64.0,
            0.05,
            1.0,
        )
        .unwrap();
        assert!((r.main_term().unwrap() - 0.2887).abs() < 1e-4);
        assert!(nontransitive_equivariant_bound(4, &[], 64.0, 0.05, 1.0).is_err());
    }

    #[test]
    fn ordinary() {
        assert!((ordinary_log10(9843.0) + 1.9966).abs() < 1e-3);
        assert_eq!(ordinary_bound(1.0), 1.0);
        assert_eq!(ordinary_bound(4.0), 0.5);
    }

    #[test]
    fn dudley_constant_covering() {
        let r = dudley_bound(|_| 0.0, 100.0, 0.05, DudleyOptions::default()).unwrap();
        let closed = 12.0 * (2.0 * LN_2).sqrt();
        assert!((r.complexity - closed).abs() < 1e-3, "{}", r.complexity);
        assert!((r.complexity - 14.13).abs() < 0.01);
        assert!((r.value - r.complexity - (2.0 * 10f64.ln() / 100.0).sqrt()).abs() < 1e-12);
        assert!(dudley_bound(|_| f64::NAN, 100.0, 0.05, DudleyOptions::default()).is_err());
    }

    #[test]
    fn dudley_grid_refinement() {
        let lc = invariant_log_covering(3, GroupOrder::exact(6), CoveringConstants::default());
        let coarse = dudley_bound(&lc, 1e4, 0.05, DudleyOptions { alpha_points: 128, quad_nodes: 512, ..Default::default() })
            .unwrap();
        let fine = dudley_bound(&lc, 1e4, 0.05, DudleyOptions { alpha_points: 512, quad_nodes: 2048, ..Default::default() })
            .unwrap();
        assert!(fine.value <= coarse.value * (1.0 + 1e-4));
    }

    #[test]
    fn curve_csv_header() {
        let rows = theory_curves(&[8], &[10.0, 100.0], &[GroupOrder::factorial(8)], 1.0, 0.05).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,m,group_order,stab_order,main_log10,conf_log10,total_log10,ordinary_log10"
        );
        assert!(lines.next().unwrap().starts_with("8,10,40320,,"));
    }
}
