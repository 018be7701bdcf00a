//! Finite permutation groups acting on coordinate positions.
//!
//! Indices are 0-based throughout the Rust API. The serialized form of a
//! [`Permutation`] is the 1-based one-line image array, e.g. `[2,1,3]` for the
//! transposition of the first two positions.
//!
//! The action on points is the left action on positions: `(g·x)[g(i)] = x[i]`,
//! equivalently `(g·x)_i = x_{g⁻¹(i)}`, so that `(gh)·x = g·(h·x)`.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default enumeration cap: `8! = 40320`.
pub const DEFAULT_CAP: usize = 40_320;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from 0-based images, `images[i] = g(i)`.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &j in &images {
            if j >= n || seen[j] {
                return Err(Error::InvalidPermutation(format!(
                    "{:?} is not a bijection on 0..{}",
                    images, n
                )));
            }
            seen[j] = true;
        }
        Ok(Permutation { images })
    }

    /// Builds a permutation from the 1-based one-line notation.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        if images.contains(&0) {
            return Err(Error::InvalidPermutation(format!(
                "{:?} contains index 0 in 1-based notation",
                images
            )));
        }
        Self::new(images.iter().map(|&j| j - 1).collect())
    }

    pub fn identity(degree: usize) -> Self {
        Permutation {
            images: (0..degree).collect(),
        }
    }

    /// Transposition of positions `i` and `j`.
    pub fn transposition(degree: usize, i: usize, j: usize) -> Result<Self> {
        Self::cycle(degree, &[i, j])
    }

    /// The cycle `c[0] → c[1] → … → c[last] → c[0]`.
    pub fn cycle(degree: usize, c: &[usize]) -> Result<Self> {
        let mut images: Vec<usize> = (0..degree).collect();
        for (k, &from) in c.iter().enumerate() {
            if from >= degree {
                return Err(Error::IndexOutOfRange {
                    index: from,
                    degree,
                });
            }
            images[from] = c[(k + 1) % c.len()];
        }
        Self::new(images)
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `g(i)`.
    pub fn image(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.images.len()];
        for (i, &j) in self.images.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { images: inv }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Permutation) -> Self {
        assert_eq!(self.degree(), other.degree(), "degree mismatch in compose");
        Permutation {
            images: other.images.iter().map(|&j| self.images[j]).collect(),
        }
    }

    /// Coordinate action `y_i = x_{g⁻¹(i)}`.
    pub fn apply<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.degree() {
            return Err(Error::DimensionMismatch {
                expected: self.degree(),
                got: x.len(),
            });
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked<T: Copy>(&self, x: &[T]) -> Vec<T> {
        let mut y = x.to_vec();
        for (i, &gi) in self.images.iter().enumerate() {
            y[gi] = x[i];
        }
        y
    }

    /// One-line notation with 1-based images.
    pub fn to_one_based(&self) -> Vec<usize> {
        self.images.iter().map(|&j| j + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::from_one_based(&v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.to_one_based()
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_one_based())
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_one_based().iter().map(|j| j.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Symmetric,
    Cyclic,
    Trivial,
}

/// Generator-list form used for JSON (de)serialization of a group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub degree: usize,
    pub generators: Vec<Permutation>,
}

/// A fully enumerated finite subgroup of `S_n`.
///
/// Elements are kept sorted lexicographically by image array, which gives a
/// canonical total order used for coset representative selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermGroup {
    degree: usize,
    generators: Vec<Permutation>,
    elements: Vec<Permutation>,
}

impl PermGroup {
    /// Closure of `gens` under composition, failing once more than `cap`
    /// elements have been produced.
    pub fn from_generators(degree: usize, gens: &[Permutation], cap: usize) -> Result<Self> {
        for g in gens {
            if g.degree() != degree {
                return Err(Error::InvalidPermutation(format!(
                    "generator {} has degree {}, expected {}",
                    g,
                    g.degree(),
                    degree
                )));
            }
        }
        let id = Permutation::identity(degree);
        let mut seen: HashSet<Permutation> = HashSet::new();
        let mut queue = VecDeque::new();
        seen.insert(id.clone());
        queue.push_back(id);
        while let Some(h) = queue.pop_front() {
            for g in gens {
                let gh = g.compose(&h);
                if !seen.contains(&gh) {
                    if seen.len() >= cap {
                        return Err(Error::GroupTooLarge { cap });
                    }
                    seen.insert(gh.clone());
                    queue.push_back(gh);
                }
            }
        }
        let mut elements: Vec<Permutation> = seen.into_iter().collect();
        elements.sort();
        Ok(PermGroup {
            degree,
            generators: gens.to_vec(),
            elements,
        })
    }

    pub fn named(kind: GroupKind, n: usize, cap: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("degree must be at least 1".into()));
        }
        let gens = match kind {
            GroupKind::Trivial => vec![],
            GroupKind::Cyclic => vec![Permutation::cycle(n, &(0..n).collect::<Vec<_>>())?],
            GroupKind::Symmetric => {
                if n == 1 {
                    vec![]
                } else {
                    vec![
                        Permutation::transposition(n, 0, 1)?,
                        Permutation::cycle(n, &(0..n).collect::<Vec<_>>())?,
                    ]
                }
            }
        };
        if kind == GroupKind::Symmetric {
            let order: Option<usize> = (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k));
            if order.is_none_or(|o| o > cap) {
                return Err(Error::GroupTooLarge { cap });
            }
        }
        Self::from_generators(n, &gens, cap)
    }

    pub fn symmetric(n: usize) -> Result<Self> {
        Self::named(GroupKind::Symmetric, n, DEFAULT_CAP)
    }

    pub fn cyclic(n: usize) -> Result<Self> {
        Self::named(GroupKind::Cyclic, n, DEFAULT_CAP)
    }

    pub fn trivial(n: usize) -> Result<Self> {
        Self::named(GroupKind::Trivial, n, DEFAULT_CAP)
    }

    pub fn from_spec(spec: &GroupSpec, cap: usize) -> Result<Self> {
        Self::from_generators(spec.degree, &spec.generators, cap)
    }

    pub fn to_spec(&self) -> GroupSpec {
        GroupSpec {
            degree: self.degree,
            generators: self.generators.clone(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Permutation] {
        &self.elements
    }

    pub fn generators(&self) -> &[Permutation] {
        &self.generators
    }

    pub fn contains(&self, g: &Permutation) -> bool {
        self.elements.binary_search(g).is_ok()
    }

    /// True when the group is all of `S_n` (the only subgroup of order `n!`).
    pub fn is_symmetric(&self) -> bool {
        let mut f = 1usize;
        for k in 1..=self.degree {
            match f.checked_mul(k) {
                Some(v) => f = v,
                None => return false,
            }
        }
        self.order() == f
    }

    pub fn is_subgroup_of(&self, other: &PermGroup) -> bool {
        self.degree == other.degree && self.elements.iter().all(|g| other.contains(g))
    }

    /// `{g ∈ G | g(i) = i}`.
    pub fn stabilizer(&self, i: usize) -> Result<PermGroup> {
        if i >= self.degree {
            return Err(Error::IndexOutOfRange {
                index: i,
                degree: self.degree,
            });
        }
        let elements: Vec<Permutation> = self
            .elements
            .iter()
            .filter(|g| g.image(i) == i)
            .cloned()
            .collect();
        let generators = elements.iter().filter(|g| !g.is_identity()).cloned().collect();
        Ok(PermGroup {
            degree: self.degree,
            generators,
            elements,
        })
    }

    /// Orbit partition of `{0..n}`, each orbit sorted, orbits ordered by
    /// their smallest element.
    pub fn orbits(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.degree];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for start in 0..self.degree {
            if label[start] != usize::MAX {
                continue;
            }
            let mut orbit: Vec<usize> = self.elements.iter().map(|g| g.image(start)).collect();
            orbit.sort_unstable();
            orbit.dedup();
            for &j in &orbit {
                label[j] = out.len();
            }
            out.push(orbit);
        }
        out
    }

    pub fn is_transitive(&self) -> bool {
        self.orbits().len() == 1
    }

    /// Exhaustive group-axiom check: identity, inverses and closure.
    pub fn check_axioms(&self) -> bool {
        if !self.contains(&Permutation::identity(self.degree)) {
            return false;
        }
        for g in &self.elements {
            if !self.contains(&g.inverse()) {
                return false;
            }
            for h in &self.elements {
                if !self.contains(&g.compose(h)) {
                    return false;
                }
            }
        }
        true
    }
}

/// A complete system of representatives of the right cosets `H\G`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosetSystem {
    pub subgroup_order: usize,
    pub representatives: Vec<Permutation>,
}

impl CosetSystem {
    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    /// Checks element-by-element that the cosets `H·g_k` partition `G`.
    pub fn verify(&self, h: &PermGroup, g: &PermGroup) -> bool {
        if self.subgroup_order != h.order() {
            return false;
        }
        let mut covered: HashSet<Permutation> = HashSet::new();
        for rep in &self.representatives {
            if !g.contains(rep) {
                return false;
            }
            for x in h.elements() {
                if !covered.insert(x.compose(rep)) {
                    return false;
                }
            }
        }
        covered.len() == g.order()
    }
}

/// Right coset representatives of `H` in `G`, choosing the lexicographically
/// smallest element of each coset.
pub fn coset_representatives(h: &PermGroup, g: &PermGroup) -> Result<CosetSystem> {
    if h.degree() != g.degree() {
        return Err(Error::NotSubgroup(format!(
            "degrees differ ({} vs {})",
            h.degree(),
            g.degree()
        )));
    }
    if let Some(bad) = h.elements().iter().find(|x| !g.contains(x)) {
        return Err(Error::NotSubgroup(format!("{} is not an element of G", bad)));
    }
    let mut covered: HashSet<Permutation> = HashSet::with_capacity(g.order());
    let mut representatives = Vec::with_capacity(g.order() / h.order());
    // g.elements() is sorted, so the first uncovered element is the
    // smallest member of its coset.
    for x in g.elements() {
        if covered.contains(x) {
            continue;
        }
        for s in h.elements() {
            covered.insert(s.compose(x));
        }
        representatives.push(x.clone());
    }
    Ok(CosetSystem {
        subgroup_order: h.order(),
        representatives,
    })
}
