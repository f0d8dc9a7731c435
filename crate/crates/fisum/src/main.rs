//! Command-line front end: feature extraction on tensor files, oracle
//! verification, scaling benchmarks, tree generation, and the training demo.
//!
//! Exit codes: 0 success, 1 validation failure, 2 verification
//! counterexample found.

use clap::{Args, Parser, Subcommand};
use fisum::bench;
use fisum::engine::{self, DEFAULT_ENUMERATION_CAP};
use fisum::fis::train::{demo_train, DemoTrainConfig};
use fisum::grid::io::{self, FieldFormat, TensorFormat};
use fisum::grid::DataTensor;
use fisum::semiring::SemiringTag;
use fisum::tree::{generate, CornerTree, TreeFamily};
use fisum::verify::{self, VerifyConfig};
use fisum::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "fisum",
    version,
    about = "Fast iterated sums over tensors via corner trees"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute corner-tree features of a tensor file
    Features(FeaturesArgs),
    /// Check the linear-time engine against the brute-force oracle
    Verify(VerifyArgs),
    /// Time the engine over a list of square grids
    Bench(BenchArgs),
    /// Generate a corner tree and print its JSON
    GenTree(GenTreeArgs),
    /// Train the demo classifier on the synthetic texture task
    DemoTrain(DemoTrainArgs),
}

#[derive(Args)]
struct FeaturesArgs {
    /// Input tensor file (.npy, .png, or .csv)
    input: PathBuf,
    /// JSON file holding one corner tree or an array of them
    #[arg(long, conflicts_with_all = ["family", "nodes", "n_trees", "seed"])]
    trees: Option<PathBuf>,
    /// Generate trees instead: family (random, linear, linear-ne)
    #[arg(long)]
    family: Option<String>,
    /// Vertices per generated tree
    #[arg(long, default_value_t = 2)]
    nodes: usize,
    /// How many trees to generate
    #[arg(long, default_value_t = 1)]
    n_trees: usize,
    /// Generation seed; tree i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Semiring: real or max-plus
    #[arg(long, default_value = "real")]
    semiring: String,
    /// none → one pre-sum field per tree; sum → one scalar per tree as JSON
    #[arg(long, default_value = "none")]
    reduce: String,
    /// Output path (.npy/.csv/.json). Required for --reduce none, where
    /// several trees write stem_t0.ext, stem_t1.ext, …; --reduce sum prints
    /// to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of random trials (each tries one tree per family)
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Largest tree size drawn
    #[arg(long, default_value_t = 4)]
    max_nodes: usize,
    /// Largest grid extent drawn per axis
    #[arg(long, default_value_t = 5)]
    max_extent: usize,
    /// Fix the grid order (1–3); omitted → cycle through all three
    #[arg(long)]
    order: Option<usize>,
    /// Restrict to one semiring (real or max-plus); omitted → both
    #[arg(long)]
    semiring: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Oracle placement cap; comparisons beyond it are skipped, not failed
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP as u64)]
    cap: u64,
    /// Corrupt the first comparison (exercises the counterexample path)
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated square grid side lengths
    #[arg(long, default_value = "128,256,512")]
    sizes: String,
    /// Vertices in the timed chain tree
    #[arg(long, default_value_t = 5)]
    nodes: usize,
    /// Semiring: real or max-plus
    #[arg(long, default_value = "real")]
    semiring: String,
    /// Timed runs per size (after one warmup); the median is reported
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenTreeArgs {
    /// Tree family: random, linear, or linear-ne
    #[arg(long)]
    family: String,
    /// Number of vertices
    #[arg(long)]
    nodes: usize,
    /// Grid order the tree is meant for (1–3)
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Input channels the node functions read
    #[arg(long, default_value_t = 1)]
    channels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemoTrainArgs {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Semiring: real or max-plus
    #[arg(long, default_value = "real")]
    semiring: String,
    /// Number of feature trees
    #[arg(long, default_value_t = 16)]
    trees: usize,
    /// Vertices per tree
    #[arg(long, default_value_t = 2)]
    nodes: usize,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout and succeed; real parse
            // errors are validation failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Features(args) => cmd_features(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::GenTree(args) => cmd_gen_tree(args),
        Cmd::DemoTrain(args) => cmd_demo_train(args),
    }
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

fn cmd_features(args: FeaturesArgs) -> Result<i32> {
    let tag = SemiringTag::parse(&args.semiring)?;
    let format = TensorFormat::from_path(&args.input)?;
    let z = io::load_tensor(&args.input, format)?;

    let trees = gather_trees(&args, &z)?;
    match args.reduce.as_str() {
        "sum" => {
            let mut values = Vec::with_capacity(trees.len());
            for tree in &trees {
                values.push(io::value_to_json(engine::cts(tree, &z, tag)?));
            }
            let doc = serde_json::json!({ "cts": values });
            match &args.out {
                Some(path) => write_text(path, &format!("{doc}\n"))?,
                None => println!("{doc}"),
            }
        }
        "none" => {
            let out = args.out.as_deref().ok_or_else(|| {
                Error::Config("--reduce none writes files; --out is required".into())
            })?;
            let format = FieldFormat::from_path(out)?;
            for (i, tree) in trees.iter().enumerate() {
                let field = engine::ctps(tree, &z, tag)?;
                let path = if trees.len() == 1 {
                    out.to_path_buf()
                } else {
                    numbered_path(out, i)
                };
                io::save_field(&field, &path, format)?;
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown --reduce value '{other}' (expected none or sum)"
            )))
        }
    }
    Ok(0)
}

fn gather_trees(args: &FeaturesArgs, z: &DataTensor) -> Result<Vec<CornerTree>> {
    if let Some(path) = &args.trees {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let doc: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Ingestion(format!("{}: not JSON: {e}", path.display())))?;
        let trees: Vec<CornerTree> = match &doc {
            serde_json::Value::Array(items) => items
                .iter()
                .map(CornerTree::from_json)
                .collect::<Result<_>>()?,
            _ => vec![CornerTree::from_json(&doc)?],
        };
        if trees.is_empty() {
            return Err(Error::Config(format!("{}: no trees", path.display())));
        }
        for tree in &trees {
            tree.validate(Some(z.channels()))?;
        }
        Ok(trees)
    } else if let Some(family) = &args.family {
        let family = TreeFamily::parse(family)?;
        if args.n_trees == 0 {
            return Err(Error::Config("--n-trees must be at least 1".into()));
        }
        (0..args.n_trees)
            .map(|i| {
                generate(
                    family,
                    args.nodes,
                    z.shape().order(),
                    z.channels(),
                    args.seed.wrapping_add(i as u64),
                )
            })
            .collect()
    } else {
        Err(Error::Config(
            "provide either --trees FILE or --family NAME".into(),
        ))
    }
}

/// `fields.npy`, 2 → `fields_t2.npy`
fn numbered_path(base: &Path, i: usize) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = base
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    base.with_file_name(format!("{stem}_t{i}.{ext}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    if let Some(order) = args.order {
        if !(1..=fisum::grid::MAX_ORDER).contains(&order) {
            return Err(Error::Config(format!(
                "--order must be 1–{}, got {order}",
                fisum::grid::MAX_ORDER
            )));
        }
    }
    let tag = args.semiring.as_deref().map(SemiringTag::parse).transpose()?;
    let config = VerifyConfig {
        trials: args.trials,
        max_nodes: args.max_nodes.max(1),
        max_extent: args.max_extent.max(2),
        order: args.order,
        tag,
        seed: args.seed,
        cap: args.cap as u128,
        inject_fault: args.inject_fault,
    };
    let report = verify::run(&config);
    if report.skipped > 0 {
        eprintln!(
            "warning: {} comparisons skipped (oracle would exceed the placement cap)",
            report.skipped
        );
    }
    if report.all_passed() {
        println!("{}/{} ok", report.passed, report.trials);
        Ok(0)
    } else {
        println!(
            "{}/{} ok, {} failed",
            report.passed, report.trials, report.failed
        );
        if let Some(ce) = &report.first_counterexample {
            let text = serde_json::to_string_pretty(&ce.to_json()).expect("plain JSON tree");
            println!("{text}");
        }
        Ok(2)
    }
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let tag = SemiringTag::parse(&args.semiring)?;
    let sizes: Vec<usize> = args
        .sizes
        .split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("bad size '{part}' in --sizes")))
        })
        .collect::<Result<_>>()?;
    if sizes.is_empty() {
        return Err(Error::Config("--sizes must name at least one size".into()));
    }
    let rows = bench::bench_grid_sizes(&sizes, args.nodes, tag, args.repeats, args.seed)?;
    print!("{}", bench::rows_to_csv(&rows));
    Ok(0)
}

// ---------------------------------------------------------------------------
// gen-tree
// ---------------------------------------------------------------------------

fn cmd_gen_tree(args: GenTreeArgs) -> Result<i32> {
    let family = TreeFamily::parse(&args.family)?;
    let tree = generate(family, args.nodes, args.order, args.channels, args.seed)?;
    let text = format!("{}\n", tree.to_json_string());
    match &args.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// demo-train
// ---------------------------------------------------------------------------

fn cmd_demo_train(args: DemoTrainArgs) -> Result<i32> {
    let mut config = DemoTrainConfig::new(args.seed);
    config.epochs = args.epochs;
    config.layer.n_trees = args.trees;
    config.layer.nodes_per_tree = args.nodes;
    config.layer.tag = SemiringTag::parse(&args.semiring)?;
    let outcome = demo_train(&config)?;
    print!("{}", outcome.jsonl());
    Ok(0)
}
