//! Quotient feature space geometry: orbits, canonical representatives, the
//! quotient metric, fundamental domains, and invariant/equivariant assembly.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permgroup::{coset_representatives, CosetSystem, PermGroup, Permutation};

/// A point in `ℝ^n` acted on by coordinate permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRep {
    pub canonical: Point,
    /// Number of group elements fixing the source point.
    pub stabilized_by: usize,
}

fn check(g: &PermGroup, x: &[f64]) -> Result<()> {
    if x.len() != g.degree() {
        return Err(Error::DimensionMismatch {
            expected: g.degree(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn bit_eq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits())
}

/// Distinct images `{g·x | g ∈ G}` in lexicographic order.
pub fn orbit(g: &PermGroup, x: &Point) -> Result<Vec<Point>> {
    check(g, &x.0)?;
    let mut images: Vec<Vec<f64>> = g.elements().iter().map(|h| h.apply_unchecked(&x.0)).collect();
    images.sort_by(|a, b| lex_cmp(a, b));
    images.dedup_by(|a, b| bit_eq(a, b));
    Ok(images.into_iter().map(Point).collect())
}

/// Lexicographically greatest point of the orbit. For `S_n` this is the
/// descending sort of the coordinates.
pub fn canonical_rep(g: &PermGroup, x: &Point) -> Result<OrbitRep> {
    check(g, &x.0)?;
    let stabilized_by = g
        .elements()
        .iter()
        .filter(|h| bit_eq(&h.apply_unchecked(&x.0), &x.0))
        .count();
    Ok(OrbitRep {
        canonical: Point(canonical_coords(g, &x.0)),
        stabilized_by,
    })
}

pub(crate) fn canonical_coords(g: &PermGroup, x: &[f64]) -> Vec<f64> {
    if g.is_symmetric() {
        let mut v = x.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        return v;
    }
    let mut best = x.to_vec();
    for h in g.elements() {
        let y = h.apply_unchecked(x);
        if lex_cmp(&y, &best) == Ordering::Greater {
            best = y;
        }
    }
    best
}

/// True when `x` is its own canonical representative.
pub fn is_canonical(g: &PermGroup, x: &[f64]) -> bool {
    if g.is_symmetric() {
        return x.windows(2).all(|w| w[0].total_cmp(&w[1]) != Ordering::Less);
    }
    g.elements()
        .iter()
        .all(|h| lex_cmp(&h.apply_unchecked(x), x) != Ordering::Greater)
}

/// Euclidean norm with squared terms summed in sorted order, so the value
/// depends only on the multiset of coordinate differences.
fn sorted_norm(diff: impl Iterator<Item = f64>) -> f64 {
    let mut sq: Vec<f64> = diff.map(|d| d * d).collect();
    sq.sort_by(|a, b| a.total_cmp(b));
    sq.iter().sum::<f64>().sqrt()
}

/// `d_G(x, x′) = min_{g∈G} ‖x − g·x′‖₂`.
pub fn quotient_distance(g: &PermGroup, x: &Point, y: &Point) -> Result<f64> {
    check(g, &x.0)?;
    check(g, &y.0)?;
    Ok(g.elements()
        .iter()
        .map(|h| {
            let gy = h.apply_unchecked(&y.0);
            sorted_norm(x.0.iter().zip(&gy).map(|(a, b)| a - b))
        })
        .fold(f64::INFINITY, f64::min))
}

pub fn euclidean(x: &Point, y: &Point) -> f64 {
    sorted_norm(x.0.iter().zip(&y.0).map(|(a, b)| a - b))
}

/// Membership in the closed sorted simplex `x₁ ≥ x₂ ≥ … ≥ x_n`.
pub fn in_sorted_domain(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] >= w[1])
}

/// Checks that `cosets` is a complete system of representatives of the right
/// cosets of `g` in `S_n`: the right count, and no two representatives in the
/// same coset.
pub fn validate_sn_cosets(g: &PermGroup, cosets: &CosetSystem) -> Result<()> {
    let n = g.degree();
    if cosets.subgroup_order != g.order() {
        return Err(Error::InvalidCosetSystem(format!(
            "subgroup order {} does not match |G| = {}",
            cosets.subgroup_order,
            g.order()
        )));
    }
    let n_fact: u128 = (1..=n as u128).product();
    if cosets.len() as u128 * g.order() as u128 != n_fact {
        return Err(Error::InvalidCosetSystem(format!(
            "{} representatives × |G| = {} is not {}!",
            cosets.len(),
            g.order(),
            n
        )));
    }
    for (i, a) in cosets.representatives.iter().enumerate() {
        if a.degree() != n {
            return Err(Error::InvalidCosetSystem(format!("representative {} has wrong degree", a)));
        }
        let a_inv = a.inverse();
        for b in &cosets.representatives[i + 1..] {
            if g.contains(&b.compose(&a_inv)) {
                return Err(Error::InvalidCosetSystem(format!(
                    "{} and {} lie in the same coset",
                    a, b
                )));
            }
        }
    }
    Ok(())
}

/// Complete system of representatives of `G\S_n`.
pub fn sn_cosets(g: &PermGroup) -> Result<CosetSystem> {
    let sn = PermGroup::symmetric(g.degree())?;
    coset_representatives(g, &sn)
}

/// Membership in `Δ̃_G = ⋃_k g_k·Δ_{S_n}`: some `g_k⁻¹·x` is non-increasing.
pub fn in_fundamental_domain(g: &PermGroup, cosets: &CosetSystem, x: &Point) -> Result<bool> {
    check(g, &x.0)?;
    validate_sn_cosets(g, cosets)?;
    Ok(cosets
        .representatives
        .iter()
        .any(|r| in_sorted_domain(&r.inverse().apply_unchecked(&x.0))))
}

/// `x ↦ f(canonical_rep(G, x))`. Exactly invariant since canonicalisation
/// only permutes entries.
pub struct LiftedInvariant<'g, F> {
    group: &'g PermGroup,
    f: F,
}

impl<'g, F: Fn(&[f64]) -> f64> LiftedInvariant<'g, F> {
    pub fn eval(&self, x: &Point) -> Result<f64> {
        check(self.group, &x.0)?;
        Ok((self.f)(&canonical_coords(self.group, &x.0)))
    }
}

pub fn lift_invariant<F: Fn(&[f64]) -> f64>(g: &PermGroup, f: F) -> LiftedInvariant<'_, F> {
    LiftedInvariant { group: g, f }
}

/// Per-orbit coset data for equivariant assembly: orbit anchor `j` (its
/// smallest index) and representatives `τ` of `Stab_G(j)\G`.
#[derive(Debug, Clone)]
pub struct OrbitTaus {
    pub anchor: usize,
    pub taus: Vec<Permutation>,
}

/// Coset systems `Stab_G(j)\G` for the anchor of every orbit.
pub fn equivariant_taus(g: &PermGroup) -> Result<Vec<OrbitTaus>> {
    g.orbits()
        .into_iter()
        .map(|orbit| {
            let anchor = orbit[0];
            let stab = g.stabilizer(anchor)?;
            let cs = coset_representatives(&stab, g)?;
            Ok(OrbitTaus {
                anchor,
                taus: cs.representatives,
            })
        })
        .collect()
}

pub type InvariantPart<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;

/// `F` with `F_{τ⁻¹(j)}(x) = f_j(τ·x)` for each orbit anchor `j` and each
/// coset representative `τ` of `Stab_G(j)\G`. With every `f_j` invariant under
/// `Stab_G(j)`, `F(g·x) = g·F(x)`.
pub struct EquivariantMap<'a> {
    degree: usize,
    // (output coordinate, orbit index, τ)
    slots: Vec<(usize, usize, Permutation)>,
    parts: Vec<InvariantPart<'a>>,
}

impl EquivariantMap<'_> {
    pub fn eval(&self, x: &Point) -> Result<Point> {
        if x.dim() != self.degree {
            return Err(Error::DimensionMismatch {
                expected: self.degree,
                got: x.dim(),
            });
        }
        let mut out = vec![0.0; self.degree];
        for (coord, part, tau) in &self.slots {
            out[*coord] = (self.parts[*part])(&tau.apply_unchecked(&x.0));
        }
        Ok(Point(out))
    }
}

pub fn equivariant_from_invariants<'a>(
    g: &PermGroup,
    parts: Vec<InvariantPart<'a>>,
    taus: &[OrbitTaus],
) -> Result<EquivariantMap<'a>> {
    let orbits = g.orbits();
    if parts.len() != orbits.len() || taus.len() != orbits.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} orbits but {} parts and {} tau systems",
            orbits.len(),
            parts.len(),
            taus.len()
        )));
    }
    let mut slots = Vec::with_capacity(g.degree());
    for (idx, (orbit, ot)) in orbits.iter().zip(taus).enumerate() {
        if !orbit.contains(&ot.anchor) {
            return Err(Error::ShapeMismatch(format!(
                "anchor {} is not in orbit {:?}",
                ot.anchor, orbit
            )));
        }
        let mut coords: Vec<usize> = Vec::with_capacity(ot.taus.len());
        for tau in &ot.taus {
            if !g.contains(tau) {
                return Err(Error::InvalidCosetSystem(format!("{} is not in G", tau)));
            }
            let coord = tau.inverse().image(ot.anchor);
            coords.push(coord);
            slots.push((coord, idx, tau.clone()));
        }
        coords.sort_unstable();
        if coords != *orbit {
            return Err(Error::InvalidCosetSystem(format!(
                "τ⁻¹({}) covers {:?}, expected orbit {:?}",
                ot.anchor, coords, orbit
            )));
        }
    }
    slots.sort_by_key(|s| s.0);
    Ok(EquivariantMap {
        degree: g.degree(),
        slots,
        parts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permgroup::DEFAULT_CAP;

    fn pt(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    #[test]
    fn orbit_examples() {
        let s2 = PermGroup::symmetric(2).unwrap();
        assert_eq!(orbit(&s2, &pt(&[0.3, 0.3])).unwrap().len(), 1);
        assert_eq!(
            orbit(&s2, &pt(&[0.0, 1.0])).unwrap(),
            vec![pt(&[0.0, 1.0]), pt(&[1.0, 0.0])]
        );
        let c3 = PermGroup::cyclic(3).unwrap();
        let o = orbit(&c3, &pt(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(o, vec![pt(&[1.0, 2.0, 3.0]), pt(&[2.0, 3.0, 1.0]), pt(&[3.0, 1.0, 2.0])]);
        assert!(orbit(&c3, &pt(&[1.0])).is_err());
    }

    #[test]
    fn canonical_examples() {
        let s3 = PermGroup::symmetric(3).unwrap();
        let r = canonical_rep(&s3, &pt(&[0.2, 0.9, 0.5])).unwrap();
        assert_eq!(r.canonical, pt(&[0.9, 0.5, 0.2]));
        assert_eq!(r.stabilized_by, 1);
        let fixed = canonical_rep(&s3, &pt(&[0.4, 0.4, 0.4])).unwrap();
        assert_eq!(fixed.canonical, pt(&[0.4, 0.4, 0.4]));
        assert_eq!(fixed.stabilized_by, 6);
        let c3 = PermGroup::cyclic(3).unwrap();
        assert_eq!(
            canonical_rep(&c3, &pt(&[1.0, 3.0, 2.0])).unwrap().canonical,
            pt(&[3.0, 2.0, 1.0])
        );
        assert!(canonical_rep(&c3, &pt(&[1.0, f64::NAN, 2.0])).is_err());
    }

    #[test]
    fn distance_examples() {
        let s2 = PermGroup::symmetric(2).unwrap();
        assert_eq!(quotient_distance(&s2, &pt(&[0.0, 1.0]), &pt(&[1.0, 0.0])).unwrap(), 0.0);
        let t2 = PermGroup::trivial(2).unwrap();
        let d = quotient_distance(&t2, &pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap();
        assert_eq!(d, 5.0);
        let d = quotient_distance(&s2, &pt(&[0.0, 0.2]), &pt(&[0.3, 0.0])).unwrap();
        assert!((d - 0.1).abs() < 1e-15, "{d}");
        assert!(quotient_distance(&s2, &pt(&[0.0]), &pt(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn sorted_domain_membership() {
        let s3 = PermGroup::symmetric(3).unwrap();
        let cs = sn_cosets(&s3).unwrap();
        assert_eq!(cs.len(), 1);
        assert!(in_fundamental_domain(&s3, &cs, &pt(&[0.9, 0.5, 0.2])).unwrap());
        assert!(!in_fundamental_domain(&s3, &cs, &pt(&[0.2, 0.9, 0.5])).unwrap());
        assert!(in_fundamental_domain(&s3, &cs, &pt(&[0.5, 0.5, 0.2])).unwrap());
    }

    #[test]
    fn tilde_domain_of_s2_in_s3() {
        let s2 = PermGroup::from_generators(
            3,
            &[Permutation::transposition(3, 0, 1).unwrap()],
            DEFAULT_CAP,
        )
        .unwrap();
        let cs = sn_cosets(&s2).unwrap();
        assert_eq!(cs.len(), 3);
        // sorted after swapping coordinates 2 and 3 only
        let x = pt(&[0.9, 0.2, 0.5]);
        let g2 = &cs.representatives[1];
        assert_eq!(*g2, Permutation::transposition(3, 1, 2).unwrap());
        assert!(in_sorted_domain(&g2.inverse().apply(&x.0).unwrap()));
        assert!(in_fundamental_domain(&s2, &cs, &x).unwrap());
        // every S_2-orbit meets the union of translates
        let swap = Permutation::transposition(3, 0, 1).unwrap();
        let y = pt(&[0.1, 0.5, 0.9]);
        let sy = Point(swap.apply(&y.0).unwrap());
        assert!(
            in_fundamental_domain(&s2, &cs, &y).unwrap()
                || in_fundamental_domain(&s2, &cs, &sy).unwrap()
        );
    }

    #[test]
    fn invalid_coset_system_rejected() {
        let c3 = PermGroup::cyclic(3).unwrap();
        let mut cs = sn_cosets(&c3).unwrap();
        assert_eq!(cs.len(), 2);
        cs.representatives[1] = Permutation::cycle(3, &[0, 1, 2]).unwrap();
        assert!(matches!(
            in_fundamental_domain(&c3, &cs, &pt(&[0.1, 0.2, 0.3])),
            Err(Error::InvalidCosetSystem(_))
        ));
        cs.representatives.pop();
        assert!(in_fundamental_domain(&c3, &cs, &pt(&[0.1, 0.2, 0.3])).is_err());
    }

    #[test]
    fn lift_examples() {
        let s3 = PermGroup::symmetric(3).unwrap();
        let sum = lift_invariant(&s3, |v: &[f64]| v.iter().sum());
        let first = lift_invariant(&s3, |v: &[f64]| v[0]);
        let constant = lift_invariant(&s3, |_: &[f64]| 2.5);
        let x = pt(&[0.2, 0.9, 0.5]);
        assert!((sum.eval(&x).unwrap() - 1.6).abs() < 1e-15);
        assert_eq!(first.eval(&x).unwrap(), 0.9);
        assert_eq!(constant.eval(&x).unwrap(), 2.5);
    }

    #[test]
    fn equivariant_identity_on_s2() {
        let s2 = PermGroup::symmetric(2).unwrap();
        let taus = equivariant_taus(&s2).unwrap();
        assert_eq!(taus.len(), 1);
        assert_eq!(taus[0].taus.len(), 2);
        let f = equivariant_from_invariants(&s2, vec![Box::new(|v: &[f64]| v[0])], &taus).unwrap();
        assert_eq!(f.eval(&pt(&[0.3, 0.8])).unwrap(), pt(&[0.3, 0.8]));
    }

    #[test]
    fn equivariant_sum_is_constant_vector() {
        let s4 = PermGroup::symmetric(4).unwrap();
        let taus = equivariant_taus(&s4).unwrap();
        let f = equivariant_from_invariants(
            &s4,
            vec![Box::new(|v: &[f64]| {
                let mut s = v.to_vec();
                s.sort_by(|a, b| a.total_cmp(b));
                s.iter().sum()
            })],
            &taus,
        )
        .unwrap();
        let y = f.eval(&pt(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y, pt(&[10.0; 4]));
    }

    #[test]
    fn equivariant_wrong_arity() {
        let t = PermGroup::trivial(2).unwrap();
        let taus = equivariant_taus(&t).unwrap();
        assert_eq!(taus.len(), 2);
        assert!(equivariant_from_invariants(&t, vec![Box::new(|v: &[f64]| v[0])], &taus).is_err());
    }
}
