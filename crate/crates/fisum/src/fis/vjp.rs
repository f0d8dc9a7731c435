//! Reverse-mode gradients of the FIS forward pass.
//!
//! For a loss L = ⟨fis_forward(layer, batch), cotangent⟩, [`fis_vjp`]
//! returns ∂L/∂(input tensors) and ∂L/∂(projection weights and biases).
//!
//! **Real semiring.** Each vertex field is Y_v = f_v(z) · ∏_c S_c with
//! S_c = CUMSUM(d_c, Y_c); the product rule distributes a vertex cotangent
//! onto f_v (sibling product) and each S_c (product of the other factors),
//! and the scan adjoint is the flipped-direction scan.
//!
//! **Max-plus semiring.** ⊙ is real addition, so a vertex cotangent passes
//! to f_v and every S_c unchanged; the scans are maxima, whose subgradient
//! routes each output cotangent to the winning input position recorded
//! during the forward scan (ties: first element in serial scan order).
//! Cotangents of −∞ output entries replaced by the field-min floor are
//! routed to the first grid position attaining the minimum finite value;
//! constant-floored entries get no gradient.
//!
//! Memory policy: [`VjpMode::Cache`] stores every subtree's scanned field
//! (max-plus: the winner indices) during the forward sweep — O(|V|·N) per
//! tree. [`VjpMode::Recompute`] stores nothing and re-derives each child
//! field from scratch when the backward sweep reaches it — O(depth·N) live
//! memory at O(|V|²·N) worst-case time. Both modes perform the identical
//! float operations in the identical order, so their results are
//! bit-identical.

use super::{check_batch, Batch, FisLayer, FisOutput, MaxPlusFloor};
use crate::engine;
use crate::error::{Error, Result};
use crate::grid::{DataTensor, GridShape};
use crate::scan::{self, MaxPlusStage};
use crate::semiring::{MaxPlus, Real, SemiringTag};
use crate::threads;
use crate::tree::{CornerTree, NodeFunction};
use rayon::prelude::*;

/// Whether backward reuses forward intermediates or re-derives them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VjpMode {
    Cache,
    Recompute,
}

/// Gradients of ⟨output, cotangent⟩ with respect to every differentiable
/// quantity of the layer application.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    /// Per batch item, shaped like the inputs.
    pub input: Vec<DataTensor>,
    /// `weights[tree][vertex][channel]`; empty per-vertex vector for nodes
    /// without weight parameters.
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `biases[tree][vertex]`; stays 0 for nodes without an enabled bias.
    pub biases: Vec<Vec<f64>>,
}

impl LayerGradients {
    fn zeros(layer: &FisLayer, batch: &Batch) -> LayerGradients {
        LayerGradients {
            input: batch
                .tensors()
                .iter()
                .map(|t| DataTensor::zeros(t.shape().clone(), t.channels()))
                .collect(),
            weights: layer.trees().iter().map(tree_weight_zeros).collect(),
            biases: layer
                .trees()
                .iter()
                .map(|t| vec![0.0; t.n_vertices()])
                .collect(),
        }
    }
}

fn tree_weight_zeros(tree: &CornerTree) -> Vec<Vec<f64>> {
    tree.nodes()
        .iter()
        .map(|n| match n {
            NodeFunction::LinearProjection { weights, .. } => vec![0.0; weights.len()],
            _ => Vec::new(),
        })
        .collect()
}

/// Gradients for one (batch item, tree) pair.
struct PairGrads {
    /// Flat, channels-last, like the input tensor's buffer.
    input: Vec<f64>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

pub fn fis_vjp(
    layer: &FisLayer,
    batch: &Batch,
    cotangent: &FisOutput,
    mode: VjpMode,
) -> Result<LayerGradients> {
    check_batch(layer, batch)?;
    if cotangent.batch_size() != batch.len()
        || cotangent.n_trees() != layer.config().n_trees
        || cotangent.shape() != batch.shape()
    {
        return Err(Error::ShapeMismatch(format!(
            "cotangent is {}x{} over {:?}, output is {}x{} over {:?}",
            cotangent.batch_size(),
            cotangent.n_trees(),
            cotangent.shape().extents(),
            batch.len(),
            layer.config().n_trees,
            batch.shape().extents()
        )));
    }

    let children: Vec<Vec<Vec<usize>>> = layer.trees().iter().map(|t| t.children_lists()).collect();
    let tag = layer.config().tag;
    let floor = layer.config().maxplus_floor;

    // One independent backward per batch item; merged in index order below,
    // so the parallel schedule cannot affect the result.
    let per_item: Vec<Vec<PairGrads>> = threads::pool().install(|| {
        batch
            .tensors()
            .par_iter()
            .enumerate()
            .map(|(b, z)| {
                layer
                    .trees()
                    .iter()
                    .enumerate()
                    .map(|(t, tree)| {
                        let cot = cotangent.field(b, t);
                        match tag {
                            SemiringTag::Real => {
                                real_tree_vjp(tree, &children[t], z, cot, mode)
                            }
                            SemiringTag::MaxPlus => {
                                maxplus_tree_vjp(tree, &children[t], z, cot, floor, mode)
                            }
                        }
                    })
                    .collect()
            })
            .collect()
    });

    let mut grads = LayerGradients::zeros(layer, batch);
    for (b, tree_grads) in per_item.iter().enumerate() {
        for (t, pg) in tree_grads.iter().enumerate() {
            for (acc, v) in grads.input[b].values_mut().iter_mut().zip(&pg.input) {
                *acc += v;
            }
            for (acc_node, node) in grads.weights[t].iter_mut().zip(&pg.weights) {
                for (acc, v) in acc_node.iter_mut().zip(node) {
                    *acc += v;
                }
            }
            for (acc, v) in grads.biases[t].iter_mut().zip(&pg.biases) {
                *acc += v;
            }
        }
    }
    Ok(grads)
}

/// Accumulates the node-function part of a vertex cotangent: ∂⟨cot_f, f_v(z)⟩
/// with respect to z and the node's parameters.
fn accumulate_node_grads(
    node: &NodeFunction,
    v: usize,
    z: &DataTensor,
    cot_f: &[f64],
    out: &mut PairGrads,
) {
    let d = z.channels();
    match node {
        NodeFunction::Identity { channel } => {
            for (t, &c) in cot_f.iter().enumerate() {
                out.input[t * d + channel] += c;
            }
        }
        NodeFunction::Monomial { channel, exponent } => {
            let a = *exponent;
            for (t, &c) in cot_f.iter().enumerate() {
                let x = z.get(t, *channel);
                out.input[t * d + channel] += c * a as f64 * x.powi(a as i32 - 1);
            }
        }
        NodeFunction::LinearProjection {
            weights,
            bias_enabled,
            ..
        } => {
            let gw = &mut out.weights[v];
            for (t, &c) in cot_f.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let zt = z.point_values(t);
                for k in 0..d {
                    gw[k] += c * zt[k];
                    out.input[t * d + k] += c * weights[k];
                }
            }
            if *bias_enabled {
                out.biases[v] = cot_f.iter().sum();
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Real semiring
// ---------------------------------------------------------------------------

struct RealCtx<'a> {
    tree: &'a CornerTree,
    children: &'a [Vec<usize>],
    z: &'a DataTensor,
    shape: &'a GridShape,
    /// Cache mode: scanned child field per non-root vertex. Recompute mode:
    /// empty, fields are re-derived on demand.
    scanned: Vec<Option<Vec<f64>>>,
}

impl RealCtx<'_> {
    fn scanned_child(&self, c: usize) -> Vec<f64> {
        if let Some(field) = self.scanned.get(c).and_then(|s| s.as_ref()) {
            return field.clone();
        }
        let raw = engine::ctps_values::<Real>(self.tree, self.children, self.z, c);
        let dir = &self.tree.incoming(c).expect("non-root vertex").dir;
        scan::cumsum_values::<Real>(dir, self.shape, raw)
    }

    fn backward(&self, v: usize, cot_v: Vec<f64>, out: &mut PairGrads) {
        let npts = self.shape.len();
        let cs = &self.children[v];
        let fields: Vec<Vec<f64>> = cs.iter().map(|&c| self.scanned_child(c)).collect();
        let m = fields.len();

        // prefix[i] = ∏_{j<i} S_j, suffix[i] = ∏_{j≥i} S_j (pointwise).
        let mut prefix = vec![vec![1.0; npts]; m + 1];
        for i in 0..m {
            for t in 0..npts {
                prefix[i + 1][t] = prefix[i][t] * fields[i][t];
            }
        }
        let mut suffix = vec![vec![1.0; npts]; m + 1];
        for i in (0..m).rev() {
            for t in 0..npts {
                suffix[i][t] = fields[i][t] * suffix[i + 1][t];
            }
        }

        let fv = engine::node_values(&self.tree.nodes()[v], self.z);
        let cot_f: Vec<f64> = (0..npts).map(|t| cot_v[t] * prefix[m][t]).collect();
        accumulate_node_grads(&self.tree.nodes()[v], v, self.z, &cot_f, out);

        for (i, &c) in cs.iter().enumerate() {
            let cot_s: Vec<f64> = (0..npts)
                .map(|t| cot_v[t] * fv[t] * prefix[i][t] * suffix[i + 1][t])
                .collect();
            let dir = &self.tree.incoming(c).expect("non-root vertex").dir;
            let cot_c = scan::cumsum_values::<Real>(&dir.flipped(), self.shape, cot_s);
            self.backward(c, cot_c, out);
        }
    }
}

fn real_tree_vjp(
    tree: &CornerTree,
    children: &[Vec<usize>],
    z: &DataTensor,
    cot: &[f64],
    mode: VjpMode,
) -> PairGrads {
    let shape = z.shape();
    let scanned = match mode {
        VjpMode::Recompute => vec![None; tree.n_vertices()],
        VjpMode::Cache => {
            // Reverse vertex order: children before parents.
            let mut scanned: Vec<Option<Vec<f64>>> = vec![None; tree.n_vertices()];
            for v in (0..tree.n_vertices()).rev() {
                let mut field = engine::node_values(&tree.nodes()[v], z);
                for &c in &children[v] {
                    let s = scanned[c].as_ref().expect("child computed first");
                    for (a, b) in field.iter_mut().zip(s) {
                        *a *= b;
                    }
                }
                if let Some(edge) = tree.incoming(v) {
                    scanned[v] = Some(scan::cumsum_values::<Real>(&edge.dir, shape, field));
                }
            }
            scanned
        }
    };
    let ctx = RealCtx {
        tree,
        children,
        z,
        shape,
        scanned,
    };
    let mut out = PairGrads {
        input: vec![0.0; z.values().len()],
        weights: tree_weight_zeros(tree),
        biases: vec![0.0; tree.n_vertices()],
    };
    ctx.backward(0, cot.to_vec(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// Max-plus semiring
// ---------------------------------------------------------------------------

struct MaxPlusCtx<'a> {
    tree: &'a CornerTree,
    children: &'a [Vec<usize>],
    z: &'a DataTensor,
    shape: &'a GridShape,
    stages: Vec<Option<Vec<MaxPlusStage>>>,
}

impl MaxPlusCtx<'_> {
    fn backward(&self, v: usize, cot_v: Vec<f64>, out: &mut PairGrads) {
        // ⊙ is +, so the vertex cotangent reaches the node term and every
        // scanned child unchanged.
        accumulate_node_grads(&self.tree.nodes()[v], v, self.z, &cot_v, out);
        for &c in &self.children[v] {
            let recomputed;
            let stages: &[MaxPlusStage] = match self.stages.get(c).and_then(|s| s.as_ref()) {
                Some(cached) => cached,
                None => {
                    let raw =
                        engine::ctps_values::<MaxPlus>(self.tree, self.children, self.z, c);
                    let dir = &self.tree.incoming(c).expect("non-root vertex").dir;
                    recomputed = scan::maxplus_cumsum_with_winners(dir, self.shape, &raw).1;
                    &recomputed
                }
            };
            let cot_c = scan::maxplus_scatter_back(stages, &cot_v);
            self.backward(c, cot_c, out);
        }
    }
}

fn maxplus_tree_vjp(
    tree: &CornerTree,
    children: &[Vec<usize>],
    z: &DataTensor,
    cot: &[f64],
    floor: MaxPlusFloor,
    mode: VjpMode,
) -> PairGrads {
    let shape = z.shape();
    let n = tree.n_vertices();

    // Forward sweep: needed regardless of mode for the root field (floor
    // handling); cache mode also keeps every child's winner indices.
    let mut stages: Vec<Option<Vec<MaxPlusStage>>> = (0..n).map(|_| None).collect();
    let mut fields: Vec<Option<Vec<f64>>> = vec![None; n];
    for v in (0..n).rev() {
        let mut field = engine::node_values(&tree.nodes()[v], z);
        for &c in &children[v] {
            let child_raw = fields[c].take().expect("child computed first");
            let (scanned, st) = scan::maxplus_cumsum_with_winners(
                &tree.incoming(c).expect("non-root vertex").dir,
                shape,
                &child_raw,
            );
            for (a, b) in field.iter_mut().zip(&scanned) {
                *a += b;
            }
            if mode == VjpMode::Cache {
                stages[c] = Some(st);
            }
        }
        fields[v] = Some(field);
    }
    let root_field = fields[0].take().expect("root field");

    // Cotangent of the raw root field: finite entries keep theirs; floored
    // entries route per the floor rule.
    let mut cot_root = vec![0.0; root_field.len()];
    let mut floored_total = 0.0;
    for (i, &y) in root_field.iter().enumerate() {
        if y == f64::NEG_INFINITY {
            floored_total += cot[i];
        } else {
            cot_root[i] = cot[i];
        }
    }
    if floored_total != 0.0 {
        if let MaxPlusFloor::FieldMin = floor {
            // First grid position attaining the minimum finite value.
            let mut target: Option<(usize, f64)> = None;
            for (i, &y) in root_field.iter().enumerate() {
                if y.is_finite() && target.is_none_or(|(_, best)| y < best) {
                    target = Some((i, y));
                }
            }
            if let Some((i, _)) = target {
                cot_root[i] += floored_total;
            }
            // No finite entry: the fill is the constant 0, no gradient.
        }
        // Constant floor: no gradient through replaced entries.
    }

    let ctx = MaxPlusCtx {
        tree,
        children,
        z,
        shape,
        stages,
    };
    let mut out = PairGrads {
        input: vec![0.0; z.values().len()],
        weights: tree_weight_zeros(tree),
        biases: vec![0.0; tree.n_vertices()],
    };
    ctx.backward(0, cot_root, &mut out);
    out
}
