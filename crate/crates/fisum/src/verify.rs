//! Randomized engine-vs-oracle trials: the executable form of the claim
//! that the linear-time recursion computes exactly the defining placement
//! enumeration.
//!
//! Each trial draws one input grid and, per tree family, one random tree,
//! then demands `cts == cts_bruteforce` bit for bit. Trees are rebuilt with
//! integer node functions (identity, monomial, or integer-weight
//! projections) and inputs are integers in {−3, …, 3}, so every sum in both
//! code paths is an exactly representable integer and float rounding cannot
//! mask (or fake) a disagreement — in either semiring.

use crate::engine::{self, DEFAULT_ENUMERATION_CAP};
use crate::error::Error;
use crate::grid::{DataTensor, GridShape, MAX_ORDER};
use crate::rng::SplitMix64;
use crate::semiring::SemiringTag;
use crate::tree::{generate, CornerTree, NodeFunction, TreeFamily};

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub trials: usize,
    pub max_nodes: usize,
    pub max_extent: usize,
    /// Fixed grid order, or None to cycle through 1, 2, 3.
    pub order: Option<usize>,
    /// Restrict to one semiring, or None for both.
    pub tag: Option<SemiringTag>,
    pub seed: u64,
    pub cap: u128,
    /// Test hook: corrupts the engine value on the first comparison so the
    /// counterexample path can be exercised end to end.
    pub inject_fault: bool,
}

impl VerifyConfig {
    pub fn new() -> VerifyConfig {
        VerifyConfig {
            trials: 200,
            max_nodes: 4,
            max_extent: 5,
            order: None,
            tag: None,
            seed: 0,
            cap: DEFAULT_ENUMERATION_CAP,
            inject_fault: false,
        }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig::new()
    }
}

/// A failed comparison, with everything needed to replay it.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub trial: usize,
    pub family: TreeFamily,
    pub tag: SemiringTag,
    pub tree: CornerTree,
    pub extents: Vec<usize>,
    pub channels: usize,
    pub values: Vec<f64>,
    pub engine_value: f64,
    pub oracle_value: f64,
}

impl Counterexample {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "trial": self.trial,
            "family": self.family.name(),
            "semiring": self.tag.name(),
            "tree": self.tree.to_json(),
            "tensor": {
                "extents": self.extents,
                "channels": self.channels,
                "values": self.values,
            },
            "engine": crate::grid::io::value_to_json(self.engine_value),
            "oracle": crate::grid::io::value_to_json(self.oracle_value),
        })
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    /// Comparisons skipped because the oracle enumeration would exceed the
    /// cap (counted separately; a skip does not fail its trial).
    pub skipped: usize,
    pub first_counterexample: Option<Counterexample>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Swaps generated projection nodes for integer-exact node functions, so
/// both evaluation orders produce identical floats.
fn integerize_nodes(tree: &mut CornerTree, channels: usize, rng: &mut SplitMix64) {
    for node in tree.nodes_mut() {
        let channel = rng.next_below(channels as u64) as usize;
        *node = match rng.next_below(3) {
            0 => NodeFunction::Identity { channel },
            1 => NodeFunction::Monomial {
                channel,
                exponent: 1 + rng.next_below(2) as u32,
            },
            _ => NodeFunction::LinearProjection {
                weights: (0..channels)
                    .map(|_| rng.next_below(5) as f64 - 2.0)
                    .collect(),
                bias: 0.0,
                bias_enabled: false,
            },
        };
    }
}

pub fn run(config: &VerifyConfig) -> VerifyReport {
    let mut rng = SplitMix64::new(config.seed);
    let mut report = VerifyReport {
        trials: config.trials,
        passed: 0,
        failed: 0,
        skipped: 0,
        first_counterexample: None,
    };
    let mut fault_pending = config.inject_fault;

    for trial in 0..config.trials {
        let order = match config.order {
            Some(p) => p,
            None => 1 + (trial % MAX_ORDER),
        };
        let extents: Vec<usize> = (0..order)
            .map(|axis| {
                // Third axis stays ≤ 4 to keep the oracle enumeration small.
                let hi = if axis == 2 {
                    config.max_extent.min(4)
                } else {
                    config.max_extent
                };
                2 + rng.next_below(hi as u64 - 1) as usize
            })
            .collect();
        let channels = 1 + rng.next_below(3) as usize;
        let shape = GridShape::new(extents.clone()).expect("valid extents");
        let values: Vec<f64> = (0..shape.len() * channels)
            .map(|_| rng.next_below(7) as f64 - 3.0)
            .collect();
        let z = DataTensor::new(shape, channels, values.clone()).expect("finite integers");

        let mut trial_ok = true;
        for family in TreeFamily::ALL {
            let nodes = 1 + rng.next_below(config.max_nodes as u64) as usize;
            let mut tree = generate(family, nodes, order, channels, rng.next_u64())
                .expect("valid generation parameters");
            integerize_nodes(&mut tree, channels, &mut rng);

            let tags: &[SemiringTag] = match &config.tag {
                Some(t) => std::slice::from_ref(t),
                None => &SemiringTag::ALL,
            };
            for &tag in tags {
                let mut fast = engine::cts(&tree, &z, tag).expect("validated inputs");
                if fault_pending {
                    fast += 1.0;
                    fault_pending = false;
                }
                let slow = match engine::cts_bruteforce(&tree, &z, tag, config.cap) {
                    Ok(v) => v,
                    Err(Error::CapExceeded { .. }) => {
                        report.skipped += 1;
                        continue;
                    }
                    Err(e) => panic!("oracle failed on validated inputs: {e}"),
                };
                let equal = fast == slow; // −∞ == −∞ holds
                if !equal {
                    trial_ok = false;
                    if report.first_counterexample.is_none() {
                        report.first_counterexample = Some(Counterexample {
                            trial,
                            family,
                            tag,
                            tree: tree.clone(),
                            extents: extents.clone(),
                            channels,
                            values: values.clone(),
                            engine_value: fast,
                            oracle_value: slow,
                        });
                    }
                }
            }
        }
        if trial_ok {
            report.passed += 1;
        } else {
            report.failed += 1;
        }
    }
    report
}
