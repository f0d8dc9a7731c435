//! The two-layer FIS block:
//!
//! ```text
//! layer1 → standardize → ReLU → layer2 → standardize → ReLU → adaptive pool
//! ```
//!
//! Standardization is per tree-channel over the whole batch and all pixels
//! (batch statistics only, no running averages), with a learned affine:
//! y = γ·(x − μ)/√(σ² + ε) + β, ε = 1e-5. Adaptive pooling partitions each
//! axis into near-equal contiguous bins — bin k of an axis of extent H
//! pooled to H′ spans [⌊kH/H′⌋, ⌊(k+1)H/H′⌋) — and takes the average or
//! maximum per bin.

use super::{fis_forward, Batch, FisLayer, FisOutput};
use crate::error::{Error, Result};
use crate::grid::{DataTensor, GridShape};

pub const STANDARDIZE_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Average,
    Max,
}

/// Two FIS layers with their standardization affines. Layer 2 consumes the
/// N_T₁ tree-channels of layer 1.
#[derive(Debug, Clone)]
pub struct FisBlock {
    layer1: FisLayer,
    layer2: FisLayer,
    pub gamma1: Vec<f64>,
    pub beta1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub beta2: Vec<f64>,
}

impl FisBlock {
    /// γ initialized to 1 and β to 0.
    pub fn new(layer1: FisLayer, layer2: FisLayer) -> Result<FisBlock> {
        if layer2.config().in_channels != layer1.config().n_trees {
            return Err(Error::Config(format!(
                "layer 2 expects {} input channels, layer 1 emits {} tree-channels",
                layer2.config().in_channels,
                layer1.config().n_trees
            )));
        }
        if layer1.config().order != 2 || layer2.config().order != 2 {
            return Err(Error::Config(
                "the block operates on order-2 grids".into(),
            ));
        }
        let n1 = layer1.config().n_trees;
        let n2 = layer2.config().n_trees;
        Ok(FisBlock {
            layer1,
            layer2,
            gamma1: vec![1.0; n1],
            beta1: vec![0.0; n1],
            gamma2: vec![1.0; n2],
            beta2: vec![0.0; n2],
        })
    }

    pub fn layer1(&self) -> &FisLayer {
        &self.layer1
    }

    pub fn layer2(&self) -> &FisLayer {
        &self.layer2
    }
}

/// Standardizes each tree-channel in place over batch items and pixels,
/// then applies the affine. Variance is the biased (population) estimator.
pub(crate) fn standardize_inplace(out: &mut FisOutput, gamma: &[f64], beta: &[f64]) {
    let (b_n, t_n, npts) = (out.batch_size(), out.n_trees(), out.shape().len());
    let denom = (b_n * npts) as f64;
    for t in 0..t_n {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for b in 0..b_n {
            for &v in out.field(b, t) {
                sum += v;
                sum_sq += v * v;
            }
        }
        let mean = sum / denom;
        let var = (sum_sq / denom - mean * mean).max(0.0);
        let scale = gamma[t] / (var + STANDARDIZE_EPS).sqrt();
        let shift = beta[t];
        for b in 0..b_n {
            for v in out.field_mut(b, t) {
                *v = (*v - mean) * scale + shift;
            }
        }
    }
}

fn relu_inplace(out: &mut FisOutput) {
    for v in out.values_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Repacks layer output (B, N_T, H, W) as a batch of channels-last tensors
/// with N_T channels, the shape layer 2 consumes.
fn output_to_batch(out: &FisOutput) -> Batch {
    let (b_n, t_n, npts) = (out.batch_size(), out.n_trees(), out.shape().len());
    let tensors = (0..b_n)
        .map(|b| {
            let mut values = vec![0.0; npts * t_n];
            for t in 0..t_n {
                let field = out.field(b, t);
                for (p, &v) in field.iter().enumerate() {
                    values[p * t_n + t] = v;
                }
            }
            DataTensor::new(out.shape().clone(), t_n, values).expect("finite standardized values")
        })
        .collect();
    Batch::new(tensors).expect("uniform shapes by construction")
}

/// Everything before the pooling stage; exposed for the identity-pooling
/// checks.
pub(crate) fn block_pre_pool(block: &FisBlock, batch: &Batch) -> Result<FisOutput> {
    let mut a = fis_forward(&block.layer1, batch)?;
    standardize_inplace(&mut a, &block.gamma1, &block.beta1);
    relu_inplace(&mut a);
    let mid = output_to_batch(&a);
    let mut b = fis_forward(&block.layer2, &mid)?;
    standardize_inplace(&mut b, &block.gamma2, &block.beta2);
    relu_inplace(&mut b);
    Ok(b)
}

/// The full block: (B, C, H, W) → (B, N_T₂, H′, W′).
pub fn fis_block_forward(
    block: &FisBlock,
    pooling: Pooling,
    out_hw: (usize, usize),
    batch: &Batch,
) -> Result<FisOutput> {
    let pre = block_pre_pool(block, batch)?;
    adaptive_pool(&pre, pooling, out_hw)
}

/// Pools an order-2 output onto an H′×W′ grid with near-equal contiguous
/// bins per axis.
pub fn adaptive_pool(out: &FisOutput, pooling: Pooling, out_hw: (usize, usize)) -> Result<FisOutput> {
    let extents = out.shape().extents();
    let [h, w] = extents else {
        return Err(Error::ShapeMismatch(format!(
            "adaptive pooling needs order-2 fields, got order {}",
            extents.len()
        )));
    };
    let (h, w) = (*h, *w);
    let (hp, wp) = out_hw;
    if hp == 0 || wp == 0 || hp > h || wp > w {
        return Err(Error::ShapeMismatch(format!(
            "pooled extents ({hp}, {wp}) must be within 1..=({h}, {w})"
        )));
    }
    let shape = GridShape::new(vec![hp, wp])?;
    let mut pooled = FisOutput::zeros(out.batch_size(), out.n_trees(), shape);
    for b in 0..out.batch_size() {
        for t in 0..out.n_trees() {
            let field = out.field(b, t);
            let dst = pooled.field_mut(b, t);
            for k1 in 0..hp {
                let (r1_lo, r1_hi) = (k1 * h / hp, (k1 + 1) * h / hp);
                for k2 in 0..wp {
                    let (r2_lo, r2_hi) = (k2 * w / wp, (k2 + 1) * w / wp);
                    let mut acc = match pooling {
                        Pooling::Average => 0.0,
                        Pooling::Max => f64::NEG_INFINITY,
                    };
                    for r1 in r1_lo..r1_hi {
                        for r2 in r2_lo..r2_hi {
                            let v = field[r1 * w + r2];
                            match pooling {
                                Pooling::Average => acc += v,
                                Pooling::Max => acc = acc.max(v),
                            }
                        }
                    }
                    if pooling == Pooling::Average {
                        acc /= ((r1_hi - r1_lo) * (r2_hi - r2_lo)) as f64;
                    }
                    dst[k1 * wp + k2] = acc;
                }
            }
        }
    }
    Ok(pooled)
}
