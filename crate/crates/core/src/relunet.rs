//! Explicit ReLU networks: max/min gadgets, the k-th-largest network, the
//! sort network, and invariant composition `f ∘ Sort`.
//!
//! Every hidden layer is a pure ReLU layer. A signed signal `z` travels
//! between layers as the pair `(ReLU(z), ReLU(−z))`, of which at most one
//! entry is nonzero, and is recombined linearly by the next layer. Gadgets use
//!
//! ```text
//! max(a, b) = ReLU(a − b) + b
//! min(a, b) = a − ReLU(a − b)
//! ```
//!
//! so each pre-activation involves at most two nonzero terms and is a single
//! rounded floating-point operation. Outputs are therefore exact whenever the
//! differences `a − b` of inputs are representable (e.g. inputs on a common
//! dyadic grid such as values from `rand`'s uniform `f64`).
//!
//! `max^{(k)}` follows the leave-one-out induction
//! `max^{(k)}(z) = min_ℓ max^{(k−1)}(z ∖ z_ℓ)`, with identical sub-networks
//! shared. This is far larger than a bitonic network; width grows like
//! `n²·2ⁿ` for the full sort.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "id")]
    Identity,
}

/// Affine map `act(W·x + b)` with `W` stored by sparse rows. Each row keeps
/// its terms in ascending column order and is summed left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    // CSR: row r spans entries row_ptr[r]..row_ptr[r + 1]
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    bias: Vec<f64>,
    act: Activation,
}

impl Layer {
    pub fn from_dense(w: &[Vec<f64>], b: Vec<f64>, act: Activation) -> Result<Self> {
        if w.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight rows but {} biases",
                w.len(),
                b.len()
            )));
        }
        let in_dim = w.first().map_or(0, |r| r.len());
        if w.iter().any(|r| r.len() != in_dim) {
            return Err(Error::ShapeMismatch("ragged weight matrix".into()));
        }
        let rows: Vec<Vec<(usize, f64)>> = w
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(in_dim, rows, b, act))
    }

    fn from_rows(in_dim: usize, rows: Vec<Vec<(usize, f64)>>, bias: Vec<f64>, act: Activation) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|t| t.0);
            for (j, v) in r {
                cols.push(j as u32);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Layer {
            in_dim,
            row_ptr,
            cols,
            vals,
            bias,
            act,
        }
    }

    fn sparse(in_dim: usize, rows: Vec<Vec<(usize, f64)>>, act: Activation) -> Self {
        let bias = vec![0.0; rows.len()];
        Self::from_rows(in_dim, rows, bias, act)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn nonzero_weights(&self) -> usize {
        self.vals.iter().filter(|v| **v != 0.0).count()
    }

    pub fn activation(&self) -> Activation {
        self.act
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.out_dim())
            .map(|r| {
                let mut d = vec![0.0; self.in_dim];
                for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                    d[self.cols[e] as usize] = self.vals[e];
                }
                d
            })
            .collect()
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(r, &b)| {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut s = 0.0;
            for (&j, &w) in self.cols[lo..hi].iter().zip(&self.vals[lo..hi]) {
                s += w * x[j as usize];
            }
            s += b;
            match self.act {
                Activation::Relu => relu(s),
                Activation::Identity => s,
            }
        }));
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerJson {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetworkJson {
    widths: Vec<usize>,
    layers: Vec<LayerJson>,
}

/// `Z_H ∘ … ∘ Z_1` with `Z_i(x) = act_i(W_i·x + b_i)`. With no layers it is
/// the identity on `input_dim` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkJson", into = "NetworkJson")]
pub struct ReluNetwork {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl TryFrom<NetworkJson> for ReluNetwork {
    type Error = Error;

    fn try_from(j: NetworkJson) -> Result<Self> {
        let input_dim = *j
            .widths
            .first()
            .ok_or_else(|| Error::ShapeMismatch("widths must not be empty".into()))?;
        if j.widths.len() != j.layers.len() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} widths for {} layers",
                j.widths.len(),
                j.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(j.layers.len());
        for (i, l) in j.layers.into_iter().enumerate() {
            let mut layer = Layer::from_dense(&l.w, l.b, l.act)?;
            if l.w.is_empty() {
                layer.in_dim = j.widths[i];
            }
            if layer.in_dim != j.widths[i] || layer.out_dim() != j.widths[i + 1] {
                return Err(Error::ShapeMismatch(format!("layer {i} does not match widths")));
            }
            layers.push(layer);
        }
        ReluNetwork::new(input_dim, layers)
    }
}

impl From<ReluNetwork> for NetworkJson {
    fn from(net: ReluNetwork) -> Self {
        NetworkJson {
            widths: net.widths(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerJson {
                    w: l.to_dense(),
                    b: l.bias.clone(),
                    act: l.act,
                })
                .collect(),
        }
    }
}

impl ReluNetwork {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut d = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim != d {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} expects {} inputs, previous width is {d}",
                    l.in_dim
                )));
            }
            d = l.out_dim();
        }
        Ok(ReluNetwork { input_dim, layers })
    }

    pub fn identity(dim: usize) -> Self {
        ReluNetwork {
            input_dim: dim,
            layers: vec![],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `[d_in, d_1, …, d_H]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(|l| l.out_dim()))
            .collect()
    }

    pub fn nonzero_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.nonzero_weights() + l.bias.iter().filter(|b| **b != 0.0).count())
            .sum()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn evaluate_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter().map(|x| self.evaluate(x)).collect()
    }
}

/// Stacks `f_net` after `sort`. Depth and parameter counts add.
pub fn compose_invariant(f_net: &ReluNetwork, sort: &ReluNetwork) -> Result<ReluNetwork> {
    if f_net.input_dim() != sort.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: sort.output_dim(),
            got: f_net.input_dim(),
        });
    }
    let mut layers = sort.layers.clone();
    layers.extend(f_net.layers.iter().cloned());
    ReluNetwork::new(sort.input_dim(), layers)
}

type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Input(usize),
    Max(NodeId, NodeId),
    Min(NodeId, NodeId),
}

/// Max/min circuit over the inputs, hash-consed and levelled by gadget depth.
struct Circuit {
    n_inputs: usize,
    nodes: Vec<Node>,
    level: Vec<usize>,
    memo: HashMap<Node, NodeId>,
    rank_memo: HashMap<(u64, usize), NodeId>,
}

impl Circuit {
    fn new(n_inputs: usize) -> Self {
        let mut c = Circuit {
            n_inputs,
            nodes: Vec::new(),
            level: Vec::new(),
            memo: HashMap::new(),
            rank_memo: HashMap::new(),
        };
        for i in 0..n_inputs {
            c.push(Node::Input(i));
        }
        c
    }

    fn push(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.memo.get(&node) {
            return id;
        }
        let lvl = match node {
            Node::Input(_) => 0,
            Node::Max(a, b) | Node::Min(a, b) => self.level[a].max(self.level[b]) + 1,
        };
        let id = self.nodes.len();
        self.nodes.push(node);
        self.level.push(lvl);
        self.memo.insert(node, id);
        id
    }

    /// Balanced pairwise reduction; an odd element passes to the next round.
    fn tournament(&mut self, mut ids: Vec<NodeId>, take_max: bool) -> NodeId {
        while ids.len() > 1 {
            let mut next = Vec::with_capacity(ids.len().div_ceil(2));
            for pair in ids.chunks(2) {
                next.push(match pair {
                    [a, b] => self.push(if take_max { Node::Max(*a, *b) } else { Node::Min(*a, *b) }),
                    [a] => *a,
                    _ => unreachable!(),
                });
            }
            ids = next;
        }
        ids[0]
    }

    /// k-th largest of the inputs selected by `mask` (k = 1 is the maximum).
    fn kth_largest(&mut self, mask: u64, k: usize) -> NodeId {
        if let Some(&id) = self.rank_memo.get(&(mask, k)) {
            return id;
        }
        let members: Vec<usize> = (0..self.n_inputs).filter(|i| mask >> i & 1 == 1).collect();
        let id = if k == 1 {
            self.tournament(members, true)
        } else {
            let children: Vec<NodeId> = members
                .iter()
                .map(|&l| self.kth_largest(mask & !(1u64 << l), k - 1))
                .collect();
            self.tournament(children, false)
        };
        self.rank_memo.insert((mask, k), id);
        id
    }

    /// Lays the circuit out as alternating ReLU layers. Layer structure:
    /// encode inputs as pairs; per gadget level an `A` layer computing
    /// `u = ReLU(a − b)` while carrying live pairs, then a `B` layer forming the
    /// result pairs; finally an identity layer decoding `p − n`.
    fn compile(&self, outputs: &[NodeId]) -> ReluNetwork {
        let top = outputs.iter().map(|&o| self.level[o]).max().unwrap_or(0);
        // last level at which each node is read; outputs live to the end
        let mut last_use = vec![None::<usize>; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if let Node::Max(a, b) | Node::Min(a, b) = *node {
                let l = self.level[id];
                for x in [a, b] {
                    last_use[x] = Some(last_use[x].map_or(l, |v: usize| v.max(l)));
                }
            }
        }
        for &o in outputs {
            last_use[o] = Some(top + 1);
        }
        let mut by_level: Vec<Vec<NodeId>> = vec![Vec::new(); top + 1];
        for (id, &l) in self.level.iter().enumerate() {
            if l >= 1 && l <= top && last_use[id].is_some() {
                by_level[l].push(id);
            }
        }

        let mut layers = Vec::with_capacity(2 * top + 2);
        // pair positions of live nodes in the current layer's output
        let mut pos: HashMap<NodeId, (usize, usize)> = HashMap::new();

        let mut rows = Vec::new();
        for i in 0..self.n_inputs {
            if last_use[i].is_some() {
                pos.insert(i, (rows.len(), rows.len() + 1));
                rows.push(vec![(i, 1.0)]);
                rows.push(vec![(i, -1.0)]);
            }
        }
        layers.push(Layer::sparse(self.n_inputs, rows, Activation::Relu));

        let mut live: Vec<NodeId> = {
            let mut v: Vec<NodeId> = pos.keys().copied().collect();
            v.sort_unstable();
            v
        };

        for t in 1..=top {
            let gadgets = &by_level[t];
            let width = 2 * pos.len();
            // A layer
            let mut rows = Vec::new();
            let mut next_pos = HashMap::new();
            for &id in &live {
                let (p, n) = pos[&id];
                next_pos.insert(id, (rows.len(), rows.len() + 1));
                rows.push(vec![(p, 1.0)]);
                rows.push(vec![(n, 1.0)]);
            }
            let mut u_pos = HashMap::new();
            for &g in gadgets {
                let (a, b) = match self.nodes[g] {
                    Node::Max(a, b) | Node::Min(a, b) => (a, b),
                    Node::Input(_) => unreachable!(),
                };
                let (ap, an) = pos[&a];
                let (bp, bn) = pos[&b];
                u_pos.insert(g, rows.len());
                rows.push(vec![(ap, 1.0), (an, -1.0), (bp, -1.0), (bn, 1.0)]);
            }
            layers.push(Layer::sparse(width, rows, Activation::Relu));
            let width = next_pos.len() * 2 + gadgets.len();
            pos = next_pos;

            // B layer
            let mut rows = Vec::new();
            let mut next_pos = HashMap::new();
            let keep: Vec<NodeId> = live
                .iter()
                .copied()
                .filter(|id| last_use[*id].is_some_and(|l| l > t))
                .collect();
            for &id in &keep {
                let (p, n) = pos[&id];
                next_pos.insert(id, (rows.len(), rows.len() + 1));
                rows.push(vec![(p, 1.0)]);
                rows.push(vec![(n, 1.0)]);
            }
            for &g in gadgets {
                let u = u_pos[&g];
                let (pre_p, pre_n) = match self.nodes[g] {
                    // u + b
                    Node::Max(_, b) => {
                        let (bp, bn) = pos[&b];
                        (
                            vec![(u, 1.0), (bp, 1.0), (bn, -1.0)],
                            vec![(u, -1.0), (bp, -1.0), (bn, 1.0)],
                        )
                    }
                    // a − u
                    Node::Min(a, _) => {
                        let (ap, an) = pos[&a];
                        (
                            vec![(u, -1.0), (ap, 1.0), (an, -1.0)],
                            vec![(u, 1.0), (ap, -1.0), (an, 1.0)],
                        )
                    }
                    Node::Input(_) => unreachable!(),
                };
                next_pos.insert(g, (rows.len(), rows.len() + 1));
                rows.push(pre_p);
                rows.push(pre_n);
            }
            layers.push(Layer::sparse(width, rows, Activation::Relu));
            pos = next_pos;
            live = keep;
            live.extend(gadgets.iter().copied());
            live.sort_unstable();
        }

        let width = 2 * pos.len();
        let rows = outputs
            .iter()
            .map(|o| {
                let (p, n) = pos[o];
                vec![(p, 1.0), (n, -1.0)]
            })
            .collect();
        layers.push(Layer::sparse(width, rows, Activation::Identity));
        ReluNetwork::new(self.n_inputs, layers).expect("compiled layers chain")
    }
}

fn ceil_log2(s: usize) -> usize {
    if s <= 1 {
        0
    } else {
        (usize::BITS - (s - 1).leading_zeros()) as usize
    }
}

/// Gadget levels of `max^{(k)}` on `n` inputs: `Σ_{i<k} ⌈log₂(n − i)⌉`.
pub fn gadget_levels(n: usize, k: usize) -> usize {
    (0..k).map(|i| ceil_log2(n - i)).sum()
}

/// Layer count predicted for [`max_k_network`]: encode, two layers per gadget
/// level, decode.
pub fn predicted_depth(n: usize, k: usize) -> usize {
    2 + 2 * gadget_levels(n, k)
}

/// Layer count predicted for [`sort_network`].
pub fn predicted_sort_depth(n: usize) -> usize {
    predicted_depth(n, n)
}

pub fn max2_gadget() -> ReluNetwork {
    let mut c = Circuit::new(2);
    let g = c.push(Node::Max(0, 1));
    c.compile(&[g])
}

pub fn min2_gadget() -> ReluNetwork {
    let mut c = Circuit::new(2);
    let g = c.push(Node::Min(0, 1));
    c.compile(&[g])
}

const MAX_SORT_INPUTS: usize = 16;

fn check_inputs(n: usize) -> Result<()> {
    if n == 0 || n > MAX_SORT_INPUTS {
        return Err(Error::InvalidParameter(format!(
            "input count {n} outside 1..={MAX_SORT_INPUTS}"
        )));
    }
    Ok(())
}

/// Network returning the k-th largest of `n` inputs, counting multiplicity.
pub fn max_k_network(n: usize, k: usize) -> Result<ReluNetwork> {
    check_inputs(n)?;
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("rank {k} outside 1..={n}")));
    }
    let mut c = Circuit::new(n);
    let full = (1u64 << n) - 1;
    let out = c.kth_largest(full, k);
    Ok(c.compile(&[out]))
}

/// `Sort(x) = (max^{(1)}(x), …, max^{(n)}(x))`, descending.
pub fn sort_network(n: usize) -> Result<ReluNetwork> {
    check_inputs(n)?;
    let mut c = Circuit::new(n);
    let full = (1u64 << n) - 1;
    let outs: Vec<NodeId> = (1..=n).map(|k| c.kth_largest(full, k)).collect();
    Ok(c.compile(&outs))
}
