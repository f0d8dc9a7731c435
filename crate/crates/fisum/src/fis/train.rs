//! Desk-scale training demo: FIS layer → global average pool → affine
//! softmax classifier, plain SGD, on a built-in two-class texture task.
//!
//! The task is anisotropy detection. Both classes are zero-mean noise with
//! matched per-pixel variance; class 0 draws every pixel independently,
//! class 1 draws one value per column and repeats it down the column
//! (vertical stripes). Pointwise statistics — hence any single-vertex tree —
//! cannot separate the classes; two-vertex trees whose edge keeps the column
//! fixed (E/W directions) see the within-column correlation, giving the
//! layer something only it can provide. Everything is driven by splitmix64
//! streams derived from one seed, so a run is reproducible bit for bit.

use super::vjp::{fis_vjp, VjpMode};
use super::{fis_forward, Batch, FisLayer, FisLayerConfig};
use crate::error::Result;
use crate::grid::{DataTensor, GridShape};
use crate::rng::SplitMix64;
use crate::semiring::SemiringTag;
use crate::tree::{NodeFunction, TreeFamily};

#[derive(Debug, Clone)]
pub struct DemoTrainConfig {
    pub layer: FisLayerConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub n_samples: usize,
    pub image_hw: (usize, usize),
    pub batch_size: usize,
    /// Seeds the dataset and the epoch shuffles (the layer has its own seed
    /// inside `layer`).
    pub seed: u64,
}

impl DemoTrainConfig {
    /// The defaults behind the CLI: 16 random 2-vertex trees on 8×8
    /// single-channel images, 500 samples, 30 epochs of SGD.
    pub fn new(seed: u64) -> DemoTrainConfig {
        let mut layer = FisLayerConfig::new(
            16,
            2,
            TreeFamily::Random,
            SemiringTag::Real,
            1,
            seed.wrapping_add(1),
        );
        layer.order = 2;
        DemoTrainConfig {
            layer,
            epochs: 30,
            learning_rate: 0.1,
            n_samples: 500,
            image_hw: (8, 8),
            batch_size: 25,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub header: serde_json::Value,
    pub records: Vec<EpochRecord>,
    pub layer: FisLayer,
}

impl TrainOutcome {
    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.accuracy)
    }

    /// The log as JSON lines: the header first, then one
    /// `{"epoch", "loss", "accuracy"}` object per epoch.
    pub fn jsonl(&self) -> String {
        let mut out = self.header.to_string();
        out.push('\n');
        for r in &self.records {
            out.push_str(
                &serde_json::json!({
                    "epoch": r.epoch,
                    "loss": r.loss,
                    "accuracy": r.accuracy,
                })
                .to_string(),
            );
            out.push('\n');
        }
        out
    }
}

/// The two-class texture dataset: labels alternate 0, 1, 0, 1, …; class 0
/// is i.i.d. uniform noise in [−1, 1], class 1 repeats one uniform draw per
/// column. Both have per-pixel variance 1/3.
pub fn synthetic_textures(
    n: usize,
    hw: (usize, usize),
    seed: u64,
) -> (Vec<DataTensor>, Vec<usize>) {
    let (h, w) = hw;
    let shape = GridShape::new(vec![h, w]).expect("valid extents");
    let mut rng = SplitMix64::new(seed);
    let mut tensors = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let values = if label == 0 {
            (0..h * w).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
        } else {
            let cols: Vec<f64> = (0..w).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
            let mut v = Vec::with_capacity(h * w);
            for _ in 0..h {
                v.extend_from_slice(&cols);
            }
            v
        };
        tensors.push(DataTensor::new(shape.clone(), 1, values).expect("finite values"));
        labels.push(label);
    }
    (tensors, labels)
}

struct Classifier {
    /// weights[class][feature]
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl Classifier {
    fn new(n_features: usize) -> Classifier {
        Classifier {
            weights: vec![vec![0.0; n_features]; 2],
            biases: vec![0.0; 2],
        }
    }

    fn logits(&self, phi: &[f64]) -> [f64; 2] {
        std::array::from_fn(|k| {
            self.biases[k]
                + self.weights[k]
                    .iter()
                    .zip(phi)
                    .map(|(w, f)| w * f)
                    .sum::<f64>()
        })
    }
}

/// Softmax probabilities and cross-entropy of one sample.
fn softmax_ce(logits: [f64; 2], label: usize) -> ([f64; 2], f64) {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    let p = [e[0] / z, e[1] / z];
    let loss = -(p[label].max(1e-300)).ln();
    (p, loss)
}

/// Global average pool: per (item, tree) mean over pixels.
fn features(out: &super::FisOutput) -> Vec<Vec<f64>> {
    let npts = out.shape().len() as f64;
    (0..out.batch_size())
        .map(|b| {
            (0..out.n_trees())
                .map(|t| out.field(b, t).iter().sum::<f64>() / npts)
                .collect()
        })
        .collect()
}

pub fn demo_train(config: &DemoTrainConfig) -> Result<TrainOutcome> {
    let mut master = SplitMix64::new(config.seed);
    let data_seed = master.next_u64();
    let shuffle_seed = master.next_u64();

    let (tensors, labels) = synthetic_textures(config.n_samples, config.image_hw, data_seed);
    let mut layer = FisLayer::new(config.layer.clone())?;
    let n_trees = layer.config().n_trees;
    let mut clf = Classifier::new(n_trees);
    let npts = (config.image_hw.0 * config.image_hw.1) as f64;

    let header = serde_json::json!({
        "task": "synthetic-textures",
        "samples": config.n_samples,
        "image": [config.image_hw.0, config.image_hw.1],
        "trees": n_trees,
        "nodes_per_tree": layer.config().nodes_per_tree,
        "family": layer.config().family.name(),
        "semiring": layer.config().tag.name(),
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "seed": config.seed,
    });

    let mut shuffle_rng = SplitMix64::new(shuffle_seed);
    let mut order: Vec<usize> = (0..config.n_samples).collect();
    let mut records = Vec::with_capacity(config.epochs);
    let lr = config.learning_rate;

    for epoch in 1..=config.epochs {
        // Fisher–Yates reshuffle each epoch.
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.next_below(i as u64 + 1) as usize;
            order.swap(i, j);
        }

        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch = Batch::new(chunk.iter().map(|&i| tensors[i].clone()).collect())?;
            let out = fis_forward(&layer, &batch)?;
            let phi = features(&out);
            let bsz = chunk.len() as f64;

            // Classifier gradients and the feature cotangent.
            let mut grad_w = vec![vec![0.0; n_trees]; 2];
            let mut grad_b = [0.0; 2];
            let mut cot = super::FisOutput::zeros(chunk.len(), n_trees, out.shape().clone());
            for (bi, &sample) in chunk.iter().enumerate() {
                let (p, _) = softmax_ce(clf.logits(&phi[bi]), labels[sample]);
                let mut delta = p;
                delta[labels[sample]] -= 1.0;
                for k in 0..2 {
                    grad_b[k] += delta[k];
                    for t in 0..n_trees {
                        grad_w[k][t] += delta[k] * phi[bi][t];
                    }
                }
                for t in 0..n_trees {
                    let d_phi: f64 = (0..2).map(|k| delta[k] * clf.weights[k][t]).sum();
                    let per_pixel = d_phi / npts;
                    for v in cot.field_mut(bi, t) {
                        *v = per_pixel;
                    }
                }
            }
            let layer_grads = fis_vjp(&layer, &batch, &cot, VjpMode::Cache)?;

            // Synchronous SGD step on classifier and layer.
            for k in 0..2 {
                clf.biases[k] -= lr * grad_b[k] / bsz;
                for (w, g) in clf.weights[k].iter_mut().zip(&grad_w[k]) {
                    *w -= lr * g / bsz;
                }
            }
            for (t, tree) in layer.trees_mut().iter_mut().enumerate() {
                for (v, node) in tree.nodes_mut().iter_mut().enumerate() {
                    if let NodeFunction::LinearProjection { weights, bias, .. } = node {
                        for (wk, g) in weights.iter_mut().zip(&layer_grads.weights[t][v]) {
                            *wk -= lr * g / bsz;
                        }
                        *bias -= lr * layer_grads.biases[t][v] / bsz;
                    }
                }
            }
        }

        // Post-epoch metrics over the full set, in index order.
        let (loss, accuracy) = evaluate(&layer, &clf, &tensors, &labels, config.batch_size)?;
        records.push(EpochRecord {
            epoch,
            loss,
            accuracy,
        });
    }

    Ok(TrainOutcome {
        header,
        records,
        layer,
    })
}

fn evaluate(
    layer: &FisLayer,
    clf: &Classifier,
    tensors: &[DataTensor],
    labels: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..tensors.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = Batch::new(chunk.iter().map(|&i| tensors[i].clone()).collect())?;
        let out = fis_forward(layer, &batch)?;
        let phi = features(&out);
        for (bi, &sample) in chunk.iter().enumerate() {
            let logits = clf.logits(&phi[bi]);
            let (_, loss) = softmax_ce(logits, labels[sample]);
            total_loss += loss;
            let pred = usize::from(logits[1] > logits[0]);
            correct += usize::from(pred == labels[sample]);
        }
    }
    let n = tensors.len() as f64;
    Ok((total_loss / n, correct as f64 / n))
}
