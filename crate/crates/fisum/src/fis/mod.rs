//! The FIS layer: a bank of corner trees applied as a tensor-to-tensor map.
//!
//! A layer holds N_T corner trees whose vertices are linear projections of
//! the input channels — the trainable parameters. On a batch of inputs of
//! shape (B, C, H, W) (or any order-p grid), the forward pass emits the
//! corner-tree pre-sum field of every tree on every item: shape
//! (B, N_T, H, W), read back as plain real numbers.
//!
//! In the max-plus semiring a pre-sum entry can be −∞ (𝟘): pixels admitting
//! no placement, e.g. the boundary rows of a strict direction. Downstream
//! real arithmetic needs finite numbers, so −∞ entries are replaced per
//! [`MaxPlusFloor`] before the field leaves the layer; finite entries pass
//! through untouched either way.

pub mod block;
pub mod train;
pub mod vjp;

use crate::engine;
use crate::error::{Error, Result};
use crate::grid::{DataTensor, GridShape};
use crate::rng::SplitMix64;
use crate::semiring::{with_semiring, SemiringTag};
use crate::threads;
use crate::tree::{generate, CornerTree, NodeFunction, TreeFamily};
use rayon::prelude::*;

/// Replacement rule for −∞ entries of a max-plus pre-sum field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxPlusFloor {
    /// Replace with the minimum finite entry of that field (0 when the field
    /// has no finite entry). Keeps the ordering of entries intact.
    FieldMin,
    /// Replace with a fixed constant.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisLayerConfig {
    pub n_trees: usize,
    pub nodes_per_tree: usize,
    pub family: TreeFamily,
    pub tag: SemiringTag,
    pub in_channels: usize,
    /// Grid order the layer operates on (2 for images).
    pub order: usize,
    pub seed: u64,
    pub maxplus_floor: MaxPlusFloor,
    /// Trainable biases on the node projections (off by default: the
    /// projections are purely linear).
    pub bias_enabled: bool,
}

impl FisLayerConfig {
    /// A config with the defaults: order-2 grids, field-min floor, no bias.
    pub fn new(
        n_trees: usize,
        nodes_per_tree: usize,
        family: TreeFamily,
        tag: SemiringTag,
        in_channels: usize,
        seed: u64,
    ) -> FisLayerConfig {
        FisLayerConfig {
            n_trees,
            nodes_per_tree,
            family,
            tag,
            in_channels,
            order: 2,
            seed,
            maxplus_floor: MaxPlusFloor::FieldMin,
            bias_enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if self.nodes_per_tree == 0 {
            return Err(Error::Config("nodes_per_tree must be >= 1".into()));
        }
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be >= 1".into()));
        }
        if self.order == 0 || self.order > crate::grid::MAX_ORDER {
            return Err(Error::Config(format!(
                "order must be 1..={}, got {}",
                crate::grid::MAX_ORDER,
                self.order
            )));
        }
        if let MaxPlusFloor::Constant(c) = self.maxplus_floor {
            if !c.is_finite() {
                return Err(Error::Config(format!("floor constant {c} is not finite")));
            }
        }
        Ok(())
    }
}

/// A FIS layer: config plus its bank of trees. The projection weights inside
/// the trees are the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FisLayer {
    config: FisLayerConfig,
    trees: Vec<CornerTree>,
}

impl FisLayer {
    /// Builds the layer deterministically: one splitmix64 stream seeded with
    /// `config.seed` yields, in order, one generator seed per tree.
    pub fn new(config: FisLayerConfig) -> Result<FisLayer> {
        config.validate()?;
        let mut rng = SplitMix64::new(config.seed);
        let mut trees = Vec::with_capacity(config.n_trees);
        for _ in 0..config.n_trees {
            let mut tree = generate(
                config.family,
                config.nodes_per_tree,
                config.order,
                config.in_channels,
                rng.next_u64(),
            )?;
            if config.bias_enabled {
                for node in tree.nodes_mut() {
                    if let NodeFunction::LinearProjection { bias_enabled, .. } = node {
                        *bias_enabled = true;
                    }
                }
            }
            trees.push(tree);
        }
        Ok(FisLayer { config, trees })
    }

    /// Assembles a layer from explicit trees (checkpoint restore, tests).
    pub fn from_parts(config: FisLayerConfig, trees: Vec<CornerTree>) -> Result<FisLayer> {
        config.validate()?;
        if trees.len() != config.n_trees {
            return Err(Error::Config(format!(
                "config says {} trees, got {}",
                config.n_trees,
                trees.len()
            )));
        }
        for (i, tree) in trees.iter().enumerate() {
            tree.validate(Some(config.in_channels))
                .map_err(|e| Error::Config(format!("tree {i}: {e}")))?;
            if tree.order() != config.order {
                return Err(Error::Config(format!(
                    "tree {i} has order {}, config says {}",
                    tree.order(),
                    config.order
                )));
            }
        }
        Ok(FisLayer { config, trees })
    }

    pub fn config(&self) -> &FisLayerConfig {
        &self.config
    }

    pub fn trees(&self) -> &[CornerTree] {
        &self.trees
    }

    pub fn trees_mut(&mut self) -> &mut [CornerTree] {
        &mut self.trees
    }

    /// Number of trainable scalars.
    pub fn n_parameters(&self) -> usize {
        let per_node = self.config.in_channels + usize::from(self.config.bias_enabled);
        self.config.n_trees * self.config.nodes_per_tree * per_node
    }

    /// Checkpoint: the config wrapped around each tree's JSON schema.
    pub fn to_json(&self) -> serde_json::Value {
        let floor = match self.config.maxplus_floor {
            MaxPlusFloor::FieldMin => serde_json::Value::String("field-min".into()),
            MaxPlusFloor::Constant(c) => serde_json::json!({ "constant": c }),
        };
        serde_json::json!({
            "config": {
                "n_trees": self.config.n_trees,
                "nodes_per_tree": self.config.nodes_per_tree,
                "family": self.config.family.name(),
                "semiring": self.config.tag.name(),
                "in_channels": self.config.in_channels,
                "order": self.config.order,
                "seed": self.config.seed,
                "maxplus_floor": floor,
                "bias_enabled": self.config.bias_enabled,
            },
            "trees": self.trees.iter().map(|t| t.to_json()).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<FisLayer> {
        let bad = |ptr: &str, msg: &str| Error::Schema {
            pointer: ptr.to_string(),
            message: msg.to_string(),
        };
        let cfg = value
            .get("config")
            .ok_or_else(|| bad("/config", "missing"))?;
        let get_usize = |key: &str| -> Result<usize> {
            cfg.get(key)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| bad(&format!("/config/{key}"), "expected a non-negative integer"))
        };
        let family_name = cfg
            .get("family")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("/config/family", "expected a string"))?;
        let tag_name = cfg
            .get("semiring")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("/config/semiring", "expected a string"))?;
        let floor = match cfg.get("maxplus_floor") {
            None => MaxPlusFloor::FieldMin,
            Some(serde_json::Value::String(s)) if s == "field-min" => MaxPlusFloor::FieldMin,
            Some(obj) => match obj.get("constant").and_then(|v| v.as_f64()) {
                Some(c) => MaxPlusFloor::Constant(c),
                None => {
                    return Err(bad(
                        "/config/maxplus_floor",
                        "expected \"field-min\" or {\"constant\": number}",
                    ))
                }
            },
        };
        let config = FisLayerConfig {
            n_trees: get_usize("n_trees")?,
            nodes_per_tree: get_usize("nodes_per_tree")?,
            family: TreeFamily::parse(family_name)?,
            tag: SemiringTag::parse(tag_name)?,
            in_channels: get_usize("in_channels")?,
            order: get_usize("order")?,
            seed: cfg
                .get("seed")
                .and_then(|v| v.as_u64())
                .ok_or_else(|| bad("/config/seed", "expected a non-negative integer"))?,
            maxplus_floor: floor,
            bias_enabled: cfg
                .get("bias_enabled")
                .and_then(|v| v.as_bool())
                .unwrap_or(false),
        };
        let trees_json = value
            .get("trees")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("/trees", "expected an array"))?;
        let trees = trees_json
            .iter()
            .map(CornerTree::from_json)
            .collect::<Result<Vec<_>>>()?;
        FisLayer::from_parts(config, trees)
    }
}

/// A batch of inputs with one common shape and channel count.
#[derive(Debug, Clone)]
pub struct Batch {
    tensors: Vec<DataTensor>,
}

impl Batch {
    pub fn new(tensors: Vec<DataTensor>) -> Result<Batch> {
        let Some(first) = tensors.first() else {
            return Err(Error::ShapeMismatch("batch is empty".into()));
        };
        let (shape, channels) = (first.shape().clone(), first.channels());
        for (i, t) in tensors.iter().enumerate() {
            if t.shape() != &shape || t.channels() != channels {
                return Err(Error::ShapeMismatch(format!(
                    "batch item {i} has shape {:?}x{} channels, item 0 has {:?}x{}",
                    t.shape().extents(),
                    t.channels(),
                    shape.extents(),
                    channels
                )));
            }
        }
        Ok(Batch { tensors })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn shape(&self) -> &GridShape {
        self.tensors[0].shape()
    }

    pub fn channels(&self) -> usize {
        self.tensors[0].channels()
    }

    pub fn tensors(&self) -> &[DataTensor] {
        &self.tensors
    }
}

/// Layer output: B × N_T scalar fields over the input grid, stored
/// row-major as `[b][tree][pixel]`. Always plain real numbers (max-plus
/// fields have been floored).
#[derive(Debug, Clone, PartialEq)]
pub struct FisOutput {
    batch_size: usize,
    n_trees: usize,
    shape: GridShape,
    values: Vec<f64>,
}

impl FisOutput {
    /// An all-zero output container of the given dimensions (used to build
    /// cotangents).
    pub fn zeros(batch_size: usize, n_trees: usize, shape: GridShape) -> FisOutput {
        let len = batch_size * n_trees * shape.len();
        FisOutput {
            batch_size,
            n_trees,
            shape,
            values: vec![0.0; len],
        }
    }

    pub fn from_values(
        batch_size: usize,
        n_trees: usize,
        shape: GridShape,
        values: Vec<f64>,
    ) -> Result<FisOutput> {
        if values.len() != batch_size * n_trees * shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "output buffer has {} values, dimensions need {}",
                values.len(),
                batch_size * n_trees * shape.len()
            )));
        }
        Ok(FisOutput {
            batch_size,
            n_trees,
            shape,
            values,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// The (b, t) field as a slice of grid-shaped values.
    pub fn field(&self, b: usize, t: usize) -> &[f64] {
        let n = self.shape.len();
        let start = (b * self.n_trees + t) * n;
        &self.values[start..start + n]
    }

    pub fn field_mut(&mut self, b: usize, t: usize) -> &mut [f64] {
        let n = self.shape.len();
        let start = (b * self.n_trees + t) * n;
        &mut self.values[start..start + n]
    }

    pub fn get(&self, b: usize, t: usize, pixel: usize) -> f64 {
        self.field(b, t)[pixel]
    }

}

/// Replaces −∞ entries of `field` in place per `floor`. Returns the
/// replacement value actually used, or None when nothing was replaced.
pub(crate) fn apply_floor(field: &mut [f64], floor: MaxPlusFloor) -> Option<f64> {
    let has_neg_inf = field.contains(&f64::NEG_INFINITY);
    if !has_neg_inf {
        return None;
    }
    let fill = match floor {
        MaxPlusFloor::Constant(c) => c,
        MaxPlusFloor::FieldMin => {
            let min = field
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(f64::INFINITY, f64::min);
            if min.is_finite() {
                min
            } else {
                0.0
            }
        }
    };
    for v in field.iter_mut() {
        if *v == f64::NEG_INFINITY {
            *v = fill;
        }
    }
    Some(fill)
}

fn check_batch(layer: &FisLayer, batch: &Batch) -> Result<()> {
    if batch.channels() != layer.config.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "batch has {} channels, layer expects {}",
            batch.channels(),
            layer.config.in_channels
        )));
    }
    if batch.shape().order() != layer.config.order {
        return Err(Error::ShapeMismatch(format!(
            "batch grids have order {}, layer expects {}",
            batch.shape().order(),
            layer.config.order
        )));
    }
    Ok(())
}

/// The forward pass: `output[b, t] = ctps(tree_t, z_b)`, floored to real
/// numbers under max-plus. Batch items are processed in parallel; each
/// writes its own output slice, so the result is schedule-independent.
pub fn fis_forward(layer: &FisLayer, batch: &Batch) -> Result<FisOutput> {
    check_batch(layer, batch)?;
    let shape = batch.shape().clone();
    let npts = shape.len();
    let n_trees = layer.config.n_trees;
    let mut out = FisOutput::zeros(batch.len(), n_trees, shape);
    let children: Vec<Vec<Vec<usize>>> =
        layer.trees.iter().map(|t| t.children_lists()).collect();

    threads::pool().install(|| {
        out.values
            .par_chunks_mut(n_trees * npts)
            .zip(batch.tensors.par_iter())
            .for_each(|(chunk, z)| {
                for (t, tree) in layer.trees.iter().enumerate() {
                    let mut field = with_semiring!(layer.config.tag, S => {
                        engine::ctps_values::<S>(tree, &children[t], z, 0)
                    });
                    if layer.config.tag == SemiringTag::MaxPlus {
                        apply_floor(&mut field, layer.config.maxplus_floor);
                    }
                    chunk[t * npts..(t + 1) * npts].copy_from_slice(&field);
                }
            });
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Direction, TreeEdge};

    fn order2(extents: [usize; 2]) -> GridShape {
        GridShape::new(extents.to_vec()).unwrap()
    }

    fn unit_linear(channels: usize) -> NodeFunction {
        NodeFunction::LinearProjection {
            weights: vec![1.0; channels],
            bias: 0.0,
            bias_enabled: false,
        }
    }

    fn ne_pair_layer(tag: SemiringTag, floor: MaxPlusFloor) -> FisLayer {
        let tree = CornerTree::new(
            2,
            vec![unit_linear(1), unit_linear(1)],
            vec![TreeEdge {
                parent: 0,
                dir: Direction::parse("NE").unwrap(),
            }],
        )
        .unwrap();
        let mut config = FisLayerConfig::new(1, 2, TreeFamily::Random, tag, 1, 0);
        config.maxplus_floor = floor;
        FisLayer::from_parts(config, vec![tree]).unwrap()
    }

    fn batch_2x2() -> Batch {
        let z = DataTensor::new(order2([2, 2]), 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        Batch::new(vec![z]).unwrap()
    }

    #[test]
    fn forward_matches_the_engine_example() {
        let layer = ne_pair_layer(SemiringTag::Real, MaxPlusFloor::FieldMin);
        let out = fis_forward(&layer, &batch_2x2()).unwrap();
        assert_eq!(out.batch_size(), 1);
        assert_eq!(out.n_trees(), 1);
        assert_eq!(out.field(0, 0), &[4.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxplus_field_min_floor() {
        let layer = ne_pair_layer(SemiringTag::MaxPlus, MaxPlusFloor::FieldMin);
        let out = fis_forward(&layer, &batch_2x2()).unwrap();
        // Raw field is [5, −∞, −∞, −∞]; min finite entry is 5.
        assert_eq!(out.field(0, 0), &[5.0, 5.0, 5.0, 5.0]);
    }

    #[test]
    fn maxplus_constant_floor_keeps_finite_entries() {
        let layer = ne_pair_layer(SemiringTag::MaxPlus, MaxPlusFloor::Constant(-7.5));
        let out = fis_forward(&layer, &batch_2x2()).unwrap();
        assert_eq!(out.field(0, 0), &[5.0, -7.5, -7.5, -7.5]);
    }

    #[test]
    fn floor_with_no_finite_entries_uses_zero() {
        let mut field = vec![f64::NEG_INFINITY; 3];
        apply_floor(&mut field, MaxPlusFloor::FieldMin);
        assert_eq!(field, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_node_trees_project_pointwise() {
        let tree = CornerTree::new(
            2,
            vec![NodeFunction::LinearProjection {
                weights: vec![2.0, -1.0],
                bias: 0.0,
                bias_enabled: false,
            }],
            vec![],
        )
        .unwrap();
        let config = FisLayerConfig::new(1, 1, TreeFamily::Random, SemiringTag::Real, 2, 0);
        let layer = FisLayer::from_parts(config, vec![tree]).unwrap();
        let z = DataTensor::new(order2([1, 2]), 2, vec![1.0, 3.0, -2.0, 0.5]).unwrap();
        let out = fis_forward(&layer, &Batch::new(vec![z]).unwrap()).unwrap();
        assert_eq!(out.field(0, 0), &[-1.0, -4.5]);
    }

    #[test]
    fn output_shape_contract() {
        let config = FisLayerConfig::new(5, 2, TreeFamily::Random, SemiringTag::Real, 3, 42);
        let layer = FisLayer::new(config).unwrap();
        let shape = order2([8, 8]);
        let tensors: Vec<DataTensor> = (0..2)
            .map(|b| {
                let vals = (0..shape.len() * 3).map(|i| (i + b) as f64 * 0.01).collect();
                DataTensor::new(shape.clone(), 3, vals).unwrap()
            })
            .collect();
        let out = fis_forward(&layer, &Batch::new(tensors).unwrap()).unwrap();
        assert_eq!(
            (out.batch_size(), out.n_trees(), out.shape().extents()),
            (2, 5, &[8usize, 8][..])
        );
        assert_eq!(out.values().len(), 2 * 5 * 64);
    }

    #[test]
    fn layer_construction_is_deterministic() {
        let config = FisLayerConfig::new(3, 3, TreeFamily::Random, SemiringTag::Real, 2, 99);
        let a = FisLayer::new(config.clone()).unwrap();
        let b = FisLayer::new(config).unwrap();
        assert_eq!(a.trees(), b.trees());

        let mut other = FisLayerConfig::new(3, 3, TreeFamily::Random, SemiringTag::Real, 2, 100);
        other.maxplus_floor = MaxPlusFloor::FieldMin;
        let c = FisLayer::new(other).unwrap();
        assert_ne!(a.trees(), c.trees());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut config = FisLayerConfig::new(2, 3, TreeFamily::Linear, SemiringTag::MaxPlus, 2, 7);
        config.maxplus_floor = MaxPlusFloor::Constant(-1.0);
        config.bias_enabled = true;
        let layer = FisLayer::new(config).unwrap();
        let json = layer.to_json();
        let back = FisLayer::from_json(&json).unwrap();
        assert_eq!(layer, back);

        // Bias flag survives and parameter count reflects it.
        assert_eq!(back.n_parameters(), 2 * 3 * (2 + 1));
    }

    #[test]
    fn config_validation() {
        let mut c = FisLayerConfig::new(0, 1, TreeFamily::Random, SemiringTag::Real, 1, 0);
        assert!(FisLayer::new(c.clone()).is_err());
        c.n_trees = 1;
        c.nodes_per_tree = 0;
        assert!(FisLayer::new(c.clone()).is_err());
        c.nodes_per_tree = 1;
        c.maxplus_floor = MaxPlusFloor::Constant(f64::NAN);
        assert!(FisLayer::new(c).is_err());
    }

    #[test]
    fn batch_and_channel_mismatches_are_rejected() {
        let a = DataTensor::new(order2([2, 2]), 1, vec![0.0; 4]).unwrap();
        let b = DataTensor::new(order2([2, 3]), 1, vec![0.0; 6]).unwrap();
        assert!(Batch::new(vec![a.clone(), b]).is_err());
        assert!(Batch::new(vec![]).is_err());

        let config = FisLayerConfig::new(1, 1, TreeFamily::Random, SemiringTag::Real, 2, 0);
        let layer = FisLayer::new(config).unwrap();
        let batch = Batch::new(vec![a]).unwrap();
        assert!(fis_forward(&layer, &batch).is_err()); // 1 channel vs 2
    }
}
