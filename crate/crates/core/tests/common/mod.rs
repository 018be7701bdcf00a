#![allow(dead_code)]

use qfslab::nets::{Architecture, DeepSetsModel, Matrix, Pool};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, r: &mut impl Rng) -> Matrix {
    Matrix {
        rows,
        cols,
        data: (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect(),
    }
}

pub fn small_arch(token_dim: usize) -> Architecture {
    Architecture {
        token_dim,
        equivariant_widths: vec![6, 5],
        head_widths: vec![4],
        pool: Pool::Sum,
    }
}

/// Every permutation of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

fn loss(m: &DeepSetsModel, x: &Matrix, y: f64) -> f64 {
    let e = m.forward(x).unwrap() - y;
    0.5 * e * e
}

pub struct GradProbe {
    pub analytic: f64,
    pub numeric: f64,
    pub tensor: usize,
}

impl GradProbe {
    pub fn rel_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

/// Central-difference probes (`h = 1e-5`) on random coordinates, cycling
/// through every parameter tensor. Inputs within `1e-3` of a ReLU kink are
/// redrawn.
pub fn gradient_probes(count: usize, seed: u64) -> Vec<GradProbe> {
    let mut r = rng(seed);
    let h = 1e-5;
    let mut out = Vec::with_capacity(count);
    let mut model = DeepSetsModel::init(&small_arch(3), &mut r).unwrap();
    for t in model.tensors_mut() {
        t.iter_mut().for_each(|v| *v += r.gen_range(-0.1..0.1));
    }
    let tensors = model.tensors().len();
    while out.len() < count {
        let n = r.gen_range(2..=5);
        let x = random_matrix(n, 3, &mut r);
        if model.kink_margin(&x).unwrap() < 1e-3 {
            continue;
        }
        let y = r.gen_range(-2.0..2.0);
        let (_, grad) = model.backward(&x, y).unwrap();
        let tensor = out.len() % tensors;
        let k = r.gen_range(0..model.tensors()[tensor].len());
        let base = model.tensors()[tensor][k];
        let mut plus = model.clone();
        plus.tensors_mut()[tensor][k] = base + h;
        let mut minus = model.clone();
        minus.tensors_mut()[tensor][k] = base - h;
        out.push(GradProbe {
            analytic: grad.tensors()[tensor][k],
            numeric: (loss(&plus, &x, y) - loss(&minus, &x, y)) / (2.0 * h),
            tensor,
        });
    }
    out
}

use qfslab::permgroup::PermGroup;
use qfslab::qfs::{
    canonical_rep, equivariant_from_invariants, equivariant_taus, lift_invariant, quotient_distance, InvariantPart,
    Point,
};

pub fn random_point(n: usize, r: &mut impl Rng) -> Point {
    Point::new((0..n).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// Metric-axiom violations of `d_G` over `triples` random triples, plus
/// `d(x, g·x) = 0` for a random `g`.
pub fn metric_violations(g: &PermGroup, triples: usize, seed: u64) -> usize {
    let slack = 1e-12;
    let mut r = rng(seed);
    let n = g.degree();
    let mut bad = 0;
    for _ in 0..triples {
        // occasionally draw y from x's orbit to exercise zero distances
        let x = random_point(n, &mut r);
        let y = if r.gen_bool(0.1) {
            let h = &g.elements()[r.gen_range(0..g.order())];
            Point::new(h.apply(x.coords()).unwrap()).unwrap()
        } else {
            random_point(n, &mut r)
        };
        let z = random_point(n, &mut r);
        let d = |a: &Point, b: &Point| quotient_distance(g, a, b).unwrap();
        let (xy, yx, yz, xz) = (d(&x, &y), d(&y, &x), d(&y, &z), d(&x, &z));
        let h = &g.elements()[r.gen_range(0..g.order())];
        let hx = Point::new(h.apply(x.coords()).unwrap()).unwrap();
        let ok = xy >= 0.0
            && d(&x, &x) == 0.0
            && d(&x, &hx) == 0.0
            && xy == yx
            && xz <= xy + yz + slack
            && xy <= xz + yz + slack;
        if !ok {
            bad += 1;
        }
    }
    bad
}

/// A deliberately asymmetric test function.
pub fn asymmetric(x: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, v)| (i as f64 + 1.0) * v * (v + 0.5 * i as f64).sin())
        .sum()
}

/// Points and group elements where the lifted invariant is not bit-identical.
pub fn lift_failures(g: &PermGroup, points: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let f = lift_invariant(g, asymmetric);
    let mut bad = 0;
    for _ in 0..points {
        let x = random_point(g.degree(), &mut r);
        let base = f.eval(&x).unwrap().to_bits();
        for h in g.elements() {
            let hx = Point::new(h.apply(x.coords()).unwrap()).unwrap();
            if f.eval(&hx).unwrap().to_bits() != base {
                bad += 1;
            }
        }
    }
    bad
}

/// Largest `|F(g·x) − g·F(x)|` over all `g` for an assembled equivariant map
/// whose orbit parts are stabilizer-lifted asymmetric functions.
pub fn equivariance_error(g: &PermGroup, points: usize, seed: u64) -> f64 {
    let taus = equivariant_taus(g).unwrap();
    let parts: Vec<InvariantPart<'static>> = taus
        .iter()
        .enumerate()
        .map(|(k, ot)| {
            let stab = g.stabilizer(ot.anchor).unwrap();
            let shift = k as f64;
            Box::new(move |x: &[f64]| {
                let c = canonical_rep(&stab, &Point::new(x.to_vec()).unwrap()).unwrap();
                asymmetric(c.canonical.coords()) + shift
            }) as InvariantPart<'static>
        })
        .collect();
    let map = equivariant_from_invariants(g, parts, &taus).unwrap();
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let x = random_point(g.degree(), &mut r);
        let fx = map.eval(&x).unwrap();
        for h in g.elements() {
            let lhs = map.eval(&Point::new(h.apply(x.coords()).unwrap()).unwrap()).unwrap();
            let rhs = h.apply(fx.coords()).unwrap();
            for (a, b) in lhs.coords().iter().zip(&rhs) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// `S_2..S_5` and `C_3..C_5`.
pub fn metric_groups() -> Vec<(String, PermGroup)> {
    let mut v: Vec<(String, PermGroup)> = (2..=5).map(|n| (format!("S_{n}"), PermGroup::symmetric(n).unwrap())).collect();
    v.extend((3..=5).map(|n| (format!("C_{n}"), PermGroup::cyclic(n).unwrap())));
    v
}

/// Dihedral group of the `n`-gon.
pub fn dihedral(n: usize) -> PermGroup {
    use qfslab::permgroup::Permutation;
    let rot = Permutation::new((0..n).map(|i| (i + 1) % n).collect()).unwrap();
    let refl = Permutation::new((0..n).map(|i| (n - i) % n).collect()).unwrap();
    PermGroup::from_generators(n, &[rot, refl], qfslab::permgroup::DEFAULT_CAP).unwrap()
}
