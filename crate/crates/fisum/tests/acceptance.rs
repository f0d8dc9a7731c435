//! End-to-end acceptance gate.
//!
//! One test runs every criterion in order and prints a PASS/FAIL line per
//! criterion (visible with `cargo test --test acceptance -- --nocapture`),
//! then fails if any criterion failed. Each criterion is independent: a
//! failure in one does not stop the others.

use fisum::engine::{self, DEFAULT_ENUMERATION_CAP};
use fisum::fis::train::{demo_train, DemoTrainConfig};
use fisum::fis::vjp::{fis_vjp, VjpMode};
use fisum::fis::{Batch, FisLayer, FisLayerConfig, FisOutput};
use fisum::grid::{DataTensor, GridShape, ScalarField};
use fisum::rng::SplitMix64;
use fisum::scan;
use fisum::semiring::SemiringTag;
use fisum::tree::{
    generate, CornerTree, Direction, NodeFunction, Sign, TreeEdge, TreeFamily,
};
use fisum::verify::{self, VerifyConfig};
use std::alloc::{GlobalAlloc, Layout, System};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

// ---------------------------------------------------------------------------
// Counting allocator: lets the complexity criterion watch peak memory.
// ---------------------------------------------------------------------------

struct CountingAlloc {
    current: AtomicUsize,
    peak: AtomicUsize,
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = self.current.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            self.peak.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        self.current.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc {
    current: AtomicUsize::new(0),
    peak: AtomicUsize::new(0),
};

impl CountingAlloc {
    fn live(&self) -> usize {
        self.current.load(Ordering::Relaxed)
    }

    /// Restarts peak tracking from the current live total.
    fn reset_peak(&self) {
        self.peak.store(self.live(), Ordering::Relaxed);
    }

    fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: &[(&str, fn())] = &[
        ("1 oracle equivalence on random trees", c1_oracle_equivalence),
        ("2 directional scans match double loops", c2_directional_scans),
        ("3 permutation pattern fixture", c3_permutation_fixture),
        ("4 one-dimensional iterated-sum reduction", c4_iterated_sum_reduction),
        ("5 gradients match finite differences", c5_gradients),
        ("6 linear time and memory scaling", c6_complexity),
        ("7 output shape contract", c7_shape_contract),
        ("8 seeded determinism", c8_determinism),
        ("9 demo training reaches 0.9", c9_demo_training),
    ];

    // The per-criterion panic is reported on the PASS/FAIL line; the default
    // hook would bury it in backtraces.
    let silent = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (name, criterion) in criteria {
        match catch_unwind(AssertUnwindSafe(criterion)) {
            Ok(()) => println!("PASS: {name}"),
            Err(cause) => {
                println!("FAIL: {name} — {}", panic_text(&cause));
                failed.push(*name);
            }
        }
    }
    std::panic::set_hook(silent);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn panic_text(cause: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = cause.downcast_ref::<&str>() {
        (*s).into()
    } else if let Some(s) = cause.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic".into()
    }
}

// ---------------------------------------------------------------------------
// 1. The linear-time engine equals the brute-force oracle on 200 random
//    trees per family, every order, both semirings, bit for bit.
// ---------------------------------------------------------------------------

fn c1_oracle_equivalence() {
    let start = Instant::now();
    let report = verify::run(&VerifyConfig::new());
    assert!(
        report.all_passed(),
        "{} of {} trials failed; first counterexample: {}",
        report.failed,
        report.trials,
        report
            .first_counterexample
            .as_ref()
            .map(|c| c.to_json().to_string())
            .unwrap_or_default()
    );
    assert_eq!(report.trials, 200);
    assert_eq!(report.skipped, 0, "oracle skipped comparisons");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 2. Every directional scan (8 sign patterns at order 2, 26 at order 3)
//    matches the defining double loop exactly, in both semirings.
// ---------------------------------------------------------------------------

fn all_directions(order: usize) -> Vec<Direction> {
    let signs = [Sign::Minus, Sign::Equal, Sign::Plus];
    (0..3usize.pow(order as u32))
        .filter_map(|idx| {
            let mut i = idx;
            let pattern: Vec<Sign> = (0..order)
                .map(|_| {
                    let s = signs[i % 3];
                    i /= 3;
                    s
                })
                .collect();
            Direction::new(pattern).ok() // the all-`=` pattern is rejected
        })
        .collect()
}

fn c2_directional_scans() {
    let mut rng = SplitMix64::new(11);
    for (extents, n_dirs) in [(vec![4usize, 5], 8usize), (vec![3, 4, 3], 26)] {
        let shape = GridShape::new(extents).unwrap();
        let dirs = all_directions(shape.order());
        assert_eq!(dirs.len(), n_dirs);
        for dir in &dirs {
            for tag in SemiringTag::ALL {
                let values: Vec<f64> = (0..shape.len())
                    .map(|_| rng.next_below(7) as f64 - 3.0)
                    .collect();
                let x = ScalarField::new(shape.clone(), tag, values.clone()).unwrap();
                let fast = scan::cumsum_dir(dir, &x).unwrap();

                for t_lin in 0..shape.len() {
                    let t = shape.coords_of(t_lin);
                    let mut acc = tag.zero();
                    for (r_lin, &v) in values.iter().enumerate() {
                        if dir.holds(&t, &shape.coords_of(r_lin)) {
                            acc = tag.add(acc, v);
                        }
                    }
                    assert!(
                        fast.values()[t_lin] == acc,
                        "dir {} {tag} at {t:?}: scan {} vs loop {acc}",
                        dir.as_string(),
                        fast.values()[t_lin]
                    );
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 3. The two-child corner tree over a permutation matrix counts descending
//    triples; the count is cross-checked by direct triple enumeration.
// ---------------------------------------------------------------------------

fn c3_permutation_fixture() {
    let perm = [3usize, 5, 2, 4, 1];
    let n = perm.len();

    let tree = CornerTree::new(
        2,
        vec![NodeFunction::Identity { channel: 0 }; 3],
        vec![
            TreeEdge {
                parent: 0,
                dir: Direction::parse("SE").unwrap(),
            },
            TreeEdge {
                parent: 0,
                dir: Direction::parse("NW").unwrap(),
            },
        ],
    )
    .unwrap();

    let mut values = vec![0.0; n * n];
    for (i, &v) in perm.iter().enumerate() {
        values[i * n + (v - 1)] = 1.0;
    }
    let z = DataTensor::new(GridShape::new(vec![n, n]).unwrap(), 1, values).unwrap();

    let mut count = 0u32;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if perm[i] > perm[j] && perm[j] > perm[k] {
                    count += 1;
                }
            }
        }
    }

    let fast = engine::cts(&tree, &z, SemiringTag::Real).unwrap();
    let slow = engine::cts_bruteforce(&tree, &z, SemiringTag::Real, DEFAULT_ENUMERATION_CAP)
        .unwrap();
    assert_eq!(fast, count as f64, "engine vs triple enumeration");
    assert_eq!(slow, count as f64, "oracle vs triple enumeration");
}

// ---------------------------------------------------------------------------
// 4. All-`+` monomial chains over length-T strips equal the 1-D dynamic
//    program, exactly, for T ≤ 64 and up to 4 nodes, in both semirings.
// ---------------------------------------------------------------------------

fn c4_iterated_sum_reduction() {
    let mut rng = SplitMix64::new(21);
    for t_len in [1usize, 2, 5, 13, 32, 64] {
        for k in 1..=4usize.min(t_len) {
            let exponents: Vec<u32> = (0..k).map(|_| 1 + rng.next_below(3) as u32).collect();
            let mut tree = generate(TreeFamily::LinearNe, k, 1, 1, rng.next_u64()).unwrap();
            for (j, node) in tree.nodes_mut().iter_mut().enumerate() {
                *node = NodeFunction::Monomial {
                    channel: 0,
                    exponent: exponents[j],
                };
            }
            let xs: Vec<f64> = (0..t_len)
                .map(|_| rng.next_below(7) as f64 - 3.0)
                .collect();
            let z = DataTensor::new(GridShape::new(vec![t_len]).unwrap(), 1, xs.clone()).unwrap();

            for tag in SemiringTag::ALL {
                let dp = engine::iterated_sum_1d(&xs, &exponents, tag).unwrap();
                let fast = engine::cts(&tree, &z, tag).unwrap();
                assert!(
                    fast == dp[t_len - 1],
                    "T={t_len} k={k} {tag}: engine {fast} vs DP {}",
                    dp[t_len - 1]
                );
                if t_len <= 32 {
                    let slow =
                        engine::cts_bruteforce(&tree, &z, tag, DEFAULT_ENUMERATION_CAP).unwrap();
                    assert!(slow == dp[t_len - 1], "T={t_len} k={k} {tag} oracle");
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 5. Layer gradients match central finite differences on 50 random small
//    configurations per semiring (max-plus away from its kinks).
// ---------------------------------------------------------------------------

struct GradCase {
    layer: FisLayer,
    batch: Batch,
    cot: FisOutput,
}

impl GradCase {
    fn draw(rng: &mut SplitMix64, tag: SemiringTag) -> GradCase {
        let order = 1 + rng.next_below(2) as usize;
        let extents: Vec<usize> = (0..order).map(|_| 2 + rng.next_below(2) as usize).collect();
        let shape = GridShape::new(extents).unwrap();
        let channels = 1 + rng.next_below(2) as usize;
        let families = [TreeFamily::Random, TreeFamily::Linear, TreeFamily::LinearNe];
        let mut config = FisLayerConfig::new(
            1 + rng.next_below(2) as usize,
            1 + rng.next_below(3) as usize,
            families[rng.next_below(3) as usize],
            tag,
            channels,
            rng.next_u64(),
        );
        config.order = order;
        config.bias_enabled = rng.next_below(2) == 1;
        let layer = FisLayer::new(config).unwrap();

        let b = 1 + rng.next_below(2) as usize;
        // A dash of noise keeps max-plus configurations away from exact ties.
        let tensors: Vec<DataTensor> = (0..b)
            .map(|_| {
                let values: Vec<f64> = (0..shape.len() * channels)
                    .map(|_| (rng.next_f64() * 2.0 - 1.0) + 1e-3 * rng.next_f64())
                    .collect();
                DataTensor::new(shape.clone(), channels, values).unwrap()
            })
            .collect();
        let batch = Batch::new(tensors).unwrap();

        let n_trees = layer.config().n_trees;
        let cot_values: Vec<f64> = (0..b * n_trees * shape.len())
            .map(|_| rng.next_f64() * 2.0 - 1.0)
            .collect();
        let cot = FisOutput::from_values(b, n_trees, shape, cot_values).unwrap();
        GradCase { layer, batch, cot }
    }

    fn objective(&self, layer: &FisLayer, batch: &Batch) -> f64 {
        let out = fisum::fis::fis_forward(layer, batch).unwrap();
        out.values()
            .iter()
            .zip(self.cot.values())
            .map(|(y, c)| y * c)
            .sum()
    }

    /// φ with one node weight (channel `k`) or bias (`k == None`) shifted.
    fn objective_at_param(&self, t: usize, v: usize, k: Option<usize>, delta: f64) -> f64 {
        let mut layer = self.layer.clone();
        if let NodeFunction::LinearProjection { weights, bias, .. } =
            &mut layer.trees_mut()[t].nodes_mut()[v]
        {
            match k {
                Some(k) => weights[k] += delta,
                None => *bias += delta,
            }
        } else {
            panic!("generated nodes are linear projections");
        }
        self.objective(&layer, &self.batch)
    }

    /// φ with one input entry shifted.
    fn objective_at_input(&self, b: usize, idx: usize, delta: f64) -> f64 {
        let mut tensors = self.batch.tensors().to_vec();
        tensors[b].values_mut()[idx] += delta;
        self.objective(&self.layer, &Batch::new(tensors).unwrap())
    }
}

/// One gradient coordinate against its finite difference. Returns false for
/// a max-plus kink (one-sided slopes disagree), which the caller skips.
fn check_coord(
    analytic: f64,
    phi: impl Fn(f64) -> f64,
    phi0: f64,
    kinky: bool,
    label: &str,
) -> bool {
    const H: f64 = 1e-5;
    let up = phi(H);
    let down = phi(-H);
    if kinky {
        let s_up = (up - phi0) / H;
        let s_down = (phi0 - down) / H;
        if (s_up - s_down).abs() > 1e-6 * s_up.abs().max(s_down.abs()).max(1.0) {
            return false;
        }
    }
    let fd = (up - down) / (2.0 * H);
    let diff = (analytic - fd).abs();
    assert!(
        diff <= 1e-6 * analytic.abs().max(fd.abs()) || diff <= 2e-8,
        "{label}: analytic {analytic} vs central difference {fd}"
    );
    true
}

fn c5_gradients() {
    let start = Instant::now();
    for tag in SemiringTag::ALL {
        let kinky = tag == SemiringTag::MaxPlus;
        let mut rng = SplitMix64::new(match tag {
            SemiringTag::Real => 515,
            SemiringTag::MaxPlus => 909,
        });
        let mut checked = 0usize;
        let mut skipped = 0usize;
        for case_idx in 0..50 {
            let case = GradCase::draw(&mut rng, tag);
            let mode = if case_idx % 2 == 0 {
                VjpMode::Cache
            } else {
                VjpMode::Recompute
            };
            let grads = fis_vjp(&case.layer, &case.batch, &case.cot, mode).unwrap();
            let phi0 = case.objective(&case.layer, &case.batch);

            for (t, tree) in case.layer.trees().iter().enumerate() {
                for v in 0..tree.n_vertices() {
                    let channels = grads.weights[t][v].len();
                    for k in 0..channels {
                        let ok = check_coord(
                            grads.weights[t][v][k],
                            |d| case.objective_at_param(t, v, Some(k), d),
                            phi0,
                            kinky,
                            &format!("{tag} case {case_idx} tree {t} vertex {v} weight {k}"),
                        );
                        if ok { checked += 1 } else { skipped += 1 }
                    }
                    if case.layer.config().bias_enabled {
                        let ok = check_coord(
                            grads.biases[t][v],
                            |d| case.objective_at_param(t, v, None, d),
                            phi0,
                            kinky,
                            &format!("{tag} case {case_idx} tree {t} vertex {v} bias"),
                        );
                        if ok { checked += 1 } else { skipped += 1 }
                    }
                }
            }
            for b in 0..case.batch.len() {
                for idx in 0..case.batch.tensors()[b].values().len() {
                    let ok = check_coord(
                        grads.input[b].values()[idx],
                        |d| case.objective_at_input(b, idx, d),
                        phi0,
                        kinky,
                        &format!("{tag} case {case_idx} input {b}/{idx}"),
                    );
                    if ok { checked += 1 } else { skipped += 1 }
                }
            }
        }
        assert!(
            checked > 10 * skipped.max(1),
            "{tag}: {checked} checked vs {skipped} skipped"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 6. Time is linear in pixels (4× pixels → ≈4× time) and in node count,
//    and peak engine memory grows proportionally with the grid.
// ---------------------------------------------------------------------------

fn bench_rows(args: &[&str]) -> Vec<(usize, f64, Option<f64>)> {
    let out = Command::new(env!("CARGO_BIN_EXE_fisum"))
        .args(args)
        .output()
        .expect("run bench");
    assert!(
        out.status.success(),
        "bench exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout)
        .expect("CSV is UTF-8")
        .lines()
        .skip(1)
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            (
                cells[0].parse().unwrap(),
                cells[1].parse().unwrap(),
                cells[2].parse().ok(),
            )
        })
        .collect()
}

fn c6_complexity() {
    // Time vs grid size: each 4× pixel step may cost 2.6×–5.4×.
    let rows = bench_rows(&["bench", "--sizes", "128,256,512", "--repeats", "3", "--seed", "1"]);
    assert_eq!(rows.len(), 3);
    for (size, _, ratio) in rows.iter().skip(1) {
        let ratio = ratio.expect("ratio after the first row");
        assert!(
            (2.6..=5.4).contains(&ratio),
            "size {size}: ratio {ratio} outside [2.6, 5.4]"
        );
    }

    // Time vs node count: anchored at the smallest tree with an edge
    // (a single node does no scans), time stays within 1.5× of linear.
    let mut medians = Vec::new();
    for n in 1..=8usize {
        let rows = bench_rows(&[
            "bench",
            "--sizes",
            "256",
            "--nodes",
            &n.to_string(),
            "--repeats",
            "3",
            "--seed",
            "1",
        ]);
        medians.push(rows[0].1);
    }
    let per_node = medians[1] / 2.0;
    for (i, &t) in medians.iter().enumerate() {
        let n = (i + 1) as f64;
        assert!(
            t <= 1.5 * per_node * n,
            "{} nodes took {t}s, over 1.5× the linear extrapolation {}s",
            i + 1,
            per_node * n
        );
    }

    // Peak transient memory of the recursion, grid 4× → at most 6×.
    let tree = generate(TreeFamily::Linear, 5, 2, 1, 9).unwrap();
    let mut transients = Vec::new();
    for size in [128usize, 256, 512] {
        let shape = GridShape::new(vec![size, size]).unwrap();
        let mut rng = SplitMix64::new(size as u64);
        let values: Vec<f64> = (0..shape.len()).map(|_| rng.next_f64()).collect();
        let z = DataTensor::new(shape, 1, values).unwrap();
        ALLOC.reset_peak();
        let before = ALLOC.live();
        let field = engine::ctps(&tree, &z, SemiringTag::Real).unwrap();
        let transient = ALLOC.peak().saturating_sub(before);
        drop(field);
        transients.push(transient as f64);
    }
    for (i, pair) in transients.windows(2).enumerate() {
        let ratio = pair[1] / pair[0];
        assert!(
            ratio <= 6.0,
            "memory step {i}: peak grew {ratio}× on a 4× pixel step"
        );
    }
}

// ---------------------------------------------------------------------------
// 7. Forward output is exactly (batch, trees, grid), including grids with
//    unequal extents.
// ---------------------------------------------------------------------------

fn c7_shape_contract() {
    let mut rng = SplitMix64::new(77);
    let families = [TreeFamily::Random, TreeFamily::Linear, TreeFamily::LinearNe];
    for trial in 0..12 {
        let order = match trial % 4 {
            0 => 1,
            1 | 2 => 2,
            _ => 3,
        };
        let mut extents: Vec<usize> = (0..order).map(|_| 1 + rng.next_below(6) as usize).collect();
        if order == 2 && extents[0] == extents[1] {
            extents[1] += 1; // keep H ≠ W represented
        }
        let shape = GridShape::new(extents).unwrap();
        let channels = 1 + rng.next_below(3) as usize;
        let b = 1 + rng.next_below(3) as usize;
        let tag = SemiringTag::ALL[trial % 2];
        let mut config = FisLayerConfig::new(
            1 + rng.next_below(4) as usize,
            1 + rng.next_below(3) as usize,
            families[rng.next_below(3) as usize],
            tag,
            channels,
            rng.next_u64(),
        );
        config.order = shape.order();
        let layer = FisLayer::new(config).unwrap();

        let tensors: Vec<DataTensor> = (0..b)
            .map(|_| {
                let values: Vec<f64> = (0..shape.len() * channels)
                    .map(|_| rng.next_f64() * 2.0 - 1.0)
                    .collect();
                DataTensor::new(shape.clone(), channels, values).unwrap()
            })
            .collect();
        let out = fisum::fis::fis_forward(&layer, &Batch::new(tensors).unwrap()).unwrap();

        assert_eq!(out.batch_size(), b, "trial {trial}");
        assert_eq!(out.n_trees(), layer.config().n_trees, "trial {trial}");
        assert_eq!(out.shape().extents(), shape.extents(), "trial {trial}");
        assert_eq!(
            out.values().len(),
            b * layer.config().n_trees * shape.len(),
            "trial {trial}"
        );
        for bi in 0..b {
            for t in 0..layer.config().n_trees {
                assert_eq!(out.field(bi, t).len(), shape.len());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 8. Same seed, same bits: trees, layer weights, forward values, and the
//    training log all repeat exactly.
// ---------------------------------------------------------------------------

fn c8_determinism() {
    let a = generate(TreeFamily::Random, 4, 2, 2, 1234).unwrap();
    let b = generate(TreeFamily::Random, 4, 2, 2, 1234).unwrap();
    assert_eq!(a.to_json_string(), b.to_json_string(), "tree bytes");

    let config = FisLayerConfig::new(3, 3, TreeFamily::Random, SemiringTag::Real, 2, 99);
    let layer_a = FisLayer::new(config.clone()).unwrap();
    let layer_b = FisLayer::new(config).unwrap();
    assert_eq!(layer_a.to_json(), layer_b.to_json(), "layer weights");

    let shape = GridShape::new(vec![5, 7]).unwrap();
    let mut rng = SplitMix64::new(5);
    let tensors: Vec<DataTensor> = (0..2)
        .map(|_| {
            let values: Vec<f64> = (0..shape.len() * 2)
                .map(|_| rng.next_f64() * 2.0 - 1.0)
                .collect();
            DataTensor::new(shape.clone(), 2, values).unwrap()
        })
        .collect();
    let batch = Batch::new(tensors).unwrap();
    let out_a = fisum::fis::fis_forward(&layer_a, &batch).unwrap();
    let out_b = fisum::fis::fis_forward(&layer_b, &batch).unwrap();
    let bits = |values: &[f64]| values.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    assert_eq!(bits(out_a.values()), bits(out_b.values()), "forward bits");

    let mut train_config = DemoTrainConfig::new(42);
    train_config.epochs = 3;
    train_config.n_samples = 80;
    train_config.batch_size = 20;
    train_config.layer.n_trees = 4;
    let run_a = demo_train(&train_config).unwrap();
    let run_b = demo_train(&train_config).unwrap();
    assert_eq!(run_a.jsonl(), run_b.jsonl(), "training log");
    assert_eq!(
        run_a.layer.to_json(),
        run_b.layer.to_json(),
        "trained weights"
    );
}

// ---------------------------------------------------------------------------
// 9. The default demo run learns the synthetic texture task.
// ---------------------------------------------------------------------------

fn c9_demo_training() {
    let start = Instant::now();
    let config = DemoTrainConfig::new(0);
    assert_eq!(config.epochs, 30);
    let outcome = demo_train(&config).unwrap();
    let elapsed = start.elapsed();
    assert!(
        outcome.final_accuracy() >= 0.9,
        "final accuracy {}",
        outcome.final_accuracy()
    );
    assert!(elapsed < Duration::from_secs(180), "took {elapsed:?}");
}
