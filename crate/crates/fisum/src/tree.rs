//! Corner trees: rooted trees whose vertices carry functions of the input
//! channels and whose edges carry cardinal directions.
//!
//! A corner tree 𝕋 of order p describes a pattern: vertices are function
//! labels, and each edge (parent → child) carries a direction — one sign per
//! axis, from {−, =, +}. A placement of 𝕋 on a grid assigns a grid point to
//! every vertex; an edge with sign σ_k on axis k requires the child's
//! coordinate to be strictly greater (+), strictly smaller (−), or equal (=)
//! to the parent's on that axis. The all-`=` direction is degenerate (it
//! would tie two vertices to one point) and is rejected everywhere.
//!
//! Vertices are numbered root-first: vertex 0 is the root and every other
//! vertex's parent has a smaller index. Edge k of [`CornerTree::edges`] is the
//! incoming edge of vertex k+1.
//!
//! At order 2 the eight admissible sign pairs are the compass directions:
//! N `=+`, NE `++`, E `+=`, SE `+-`, S `=-`, SW `--`, W `-=`, NW `-+`
//! (axis 0 first, `+` meaning "child strictly greater").

use crate::error::{Error, Result};
use crate::grid::MAX_ORDER;
use crate::rng::SplitMix64;

/// Per-axis placement constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Minus,
    Equal,
    Plus,
}

impl Sign {
    pub fn flipped(self) -> Sign {
        match self {
            Sign::Minus => Sign::Plus,
            Sign::Equal => Sign::Equal,
            Sign::Plus => Sign::Minus,
        }
    }

    fn to_char(self) -> char {
        match self {
            Sign::Minus => '-',
            Sign::Equal => '=',
            Sign::Plus => '+',
        }
    }

    fn from_char(c: char) -> Option<Sign> {
        match c {
            '-' => Some(Sign::Minus),
            '=' => Some(Sign::Equal),
            '+' => Some(Sign::Plus),
            _ => None,
        }
    }
}

/// A direction: one [`Sign`] per axis, not all `=`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Direction {
    signs: Vec<Sign>,
}

/// The eight order-2 directions by compass name, in clockwise order from N.
pub const COMPASS: [(&str, [Sign; 2]); 8] = [
    ("N", [Sign::Equal, Sign::Plus]),
    ("NE", [Sign::Plus, Sign::Plus]),
    ("E", [Sign::Plus, Sign::Equal]),
    ("SE", [Sign::Plus, Sign::Minus]),
    ("S", [Sign::Equal, Sign::Minus]),
    ("SW", [Sign::Minus, Sign::Minus]),
    ("W", [Sign::Minus, Sign::Equal]),
    ("NW", [Sign::Minus, Sign::Plus]),
];

impl Direction {
    /// Builds a direction, rejecting empty, over-long, and all-`=` patterns.
    pub fn new(signs: Vec<Sign>) -> Result<Direction> {
        if signs.is_empty() || signs.len() > MAX_ORDER {
            return Err(Error::InvalidTree(format!(
                "direction must have 1..={MAX_ORDER} signs, got {}",
                signs.len()
            )));
        }
        if signs.iter().all(|&s| s == Sign::Equal) {
            return Err(Error::InvalidTree(
                "all-`=` direction is degenerate".into(),
            ));
        }
        Ok(Direction { signs })
    }

    pub fn order(&self) -> usize {
        self.signs.len()
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    /// The opposite direction (every sign flipped). Summing over r with
    /// `self`(t, r) is adjoint to summing over t with `flipped`(t, r).
    pub fn flipped(&self) -> Direction {
        Direction {
            signs: self.signs.iter().map(|s| s.flipped()).collect(),
        }
    }

    /// Whether the constraint holds for a parent at `t` and a child at `r`.
    pub fn holds(&self, t: &[usize], r: &[usize]) -> bool {
        debug_assert_eq!(t.len(), self.signs.len());
        debug_assert_eq!(r.len(), self.signs.len());
        self.signs.iter().enumerate().all(|(k, &s)| match s {
            Sign::Minus => r[k] < t[k],
            Sign::Equal => r[k] == t[k],
            Sign::Plus => r[k] > t[k],
        })
    }

    /// Parses a sign string like `"+-="`; at order 2 the compass names
    /// (`"NE"`, `"sw"`, …) are also accepted.
    pub fn parse(s: &str) -> Result<Direction> {
        let trimmed = s.trim();
        if let Some(dir) = compass_alias(trimmed) {
            return Ok(dir);
        }
        let signs: Option<Vec<Sign>> = trimmed.chars().map(Sign::from_char).collect();
        match signs {
            Some(signs) if !signs.is_empty() => Direction::new(signs),
            _ => Err(Error::InvalidTree(format!(
                "cannot parse direction {s:?} (expected signs from +-= or a compass name)"
            ))),
        }
    }

    /// Canonical text form: one character per axis.
    pub fn as_string(&self) -> String {
        self.signs.iter().map(|s| s.to_char()).collect()
    }

    /// The compass name, when this is one of the eight order-2 directions.
    pub fn compass_name(&self) -> Option<&'static str> {
        COMPASS
            .iter()
            .find(|(_, signs)| signs == self.signs.as_slice())
            .map(|(name, _)| *name)
    }
}

/// Looks up an order-2 direction by compass name (case-insensitive).
pub fn compass_alias(name: &str) -> Option<Direction> {
    let upper = name.to_ascii_uppercase();
    COMPASS
        .iter()
        .find(|(n, _)| *n == upper)
        .map(|(_, signs)| Direction { signs: signs.to_vec() })
}

/// A vertex label: a function ℝ^d → ℝ applied to the channel vector at the
/// vertex's grid point. Evaluation happens in ℝ; the result is then read as
/// an element of whichever semiring the computation runs in.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeFunction {
    /// Projects channel `channel`.
    Identity { channel: usize },
    /// `z[channel] ^ exponent`, exponent ≥ 1.
    Monomial { channel: usize, exponent: u32 },
    /// `weights · z (+ bias)`. The trainable node type.
    LinearProjection {
        weights: Vec<f64>,
        bias: f64,
        bias_enabled: bool,
    },
}

/// An incoming edge: `edges[k]` of a tree connects `parent` → vertex k+1.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEdge {
    pub parent: usize,
    pub dir: Direction,
}

/// A corner tree. See the module docs for the vertex-numbering invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerTree {
    order: usize,
    nodes: Vec<NodeFunction>,
    edges: Vec<TreeEdge>,
}

impl CornerTree {
    /// Assembles and structurally validates a tree.
    pub fn new(order: usize, nodes: Vec<NodeFunction>, edges: Vec<TreeEdge>) -> Result<CornerTree> {
        let t = CornerTree { order, nodes, edges };
        t.validate(None)?;
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_vertices(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeFunction] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [NodeFunction] {
        &mut self.nodes
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    /// Incoming edge of vertex `v` (None for the root).
    pub fn incoming(&self, v: usize) -> Option<&TreeEdge> {
        if v == 0 {
            None
        } else {
            Some(&self.edges[v - 1])
        }
    }

    /// Children of every vertex, in increasing vertex order.
    pub fn children_lists(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.n_vertices()];
        for (k, e) in self.edges.iter().enumerate() {
            lists[e.parent].push(k + 1);
        }
        lists
    }

    /// Checks the structural invariants; with `channels` given, also checks
    /// every node function against the channel count. Errors name the
    /// offending vertex.
    pub fn validate(&self, channels: Option<usize>) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidTree("tree has no vertices".into()));
        }
        if self.order == 0 || self.order > MAX_ORDER {
            return Err(Error::InvalidTree(format!(
                "order must be 1..={MAX_ORDER}, got {}",
                self.order
            )));
        }
        if self.edges.len() != self.nodes.len() - 1 {
            return Err(Error::InvalidTree(format!(
                "{} vertices need {} edges, got {}",
                self.nodes.len(),
                self.nodes.len() - 1,
                self.edges.len()
            )));
        }
        for (k, e) in self.edges.iter().enumerate() {
            let v = k + 1;
            if e.parent >= v {
                return Err(Error::InvalidTree(format!(
                    "vertex {v}: parent {} does not precede it (not a tree)",
                    e.parent
                )));
            }
            if e.dir.order() != self.order {
                return Err(Error::InvalidTree(format!(
                    "vertex {v}: direction {} has order {}, tree has order {}",
                    e.dir.as_string(),
                    e.dir.order(),
                    self.order
                )));
            }
        }
        for (v, node) in self.nodes.iter().enumerate() {
            match node {
                NodeFunction::Identity { channel } | NodeFunction::Monomial { channel, .. } => {
                    if let Some(d) = channels {
                        if *channel >= d {
                            return Err(Error::InvalidTree(format!(
                                "vertex {v}: channel {channel} out of range for {d} channels"
                            )));
                        }
                    }
                }
                NodeFunction::LinearProjection { weights, .. } => {
                    if weights.is_empty() {
                        return Err(Error::InvalidTree(format!(
                            "vertex {v}: linear node has no weights"
                        )));
                    }
                    if let Some(d) = channels {
                        if weights.len() != d {
                            return Err(Error::InvalidTree(format!(
                                "vertex {v}: linear node has {} weights, input has {d} channels",
                                weights.len()
                            )));
                        }
                    }
                }
            }
            if let NodeFunction::Monomial { exponent, .. } = node {
                if *exponent == 0 {
                    return Err(Error::InvalidTree(format!(
                        "vertex {v}: monomial exponent must be >= 1"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Shapes produced by [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeFamily {
    /// Random parent for each vertex, random direction on each edge.
    Random,
    /// A chain v0 → v1 → … with random directions.
    Linear,
    /// A chain with every direction all-`+` (NE at order 2).
    LinearNe,
}

impl TreeFamily {
    pub const ALL: [TreeFamily; 3] = [TreeFamily::Random, TreeFamily::Linear, TreeFamily::LinearNe];

    pub fn name(self) -> &'static str {
        match self {
            TreeFamily::Random => "random",
            TreeFamily::Linear => "linear",
            TreeFamily::LinearNe => "linear-ne",
        }
    }

    pub fn parse(s: &str) -> Result<TreeFamily> {
        match s {
            "random" => Ok(TreeFamily::Random),
            "linear" => Ok(TreeFamily::Linear),
            "linear-ne" => Ok(TreeFamily::LinearNe),
            other => Err(Error::Config(format!(
                "unknown tree family {other:?} (expected \"random\", \"linear\", or \"linear-ne\")"
            ))),
        }
    }
}

/// Maps an index in `0..3^p - 1` to a non-degenerate direction: the index is
/// shifted past the all-`=` pattern and read as base-3 digits, most
/// significant digit = axis 0, with 0 ↦ `-`, 1 ↦ `=`, 2 ↦ `+`.
fn direction_from_index(mut idx: u64, order: usize) -> Direction {
    let all_equal = (3u64.pow(order as u32) - 1) / 2;
    if idx >= all_equal {
        idx += 1;
    }
    let mut signs = vec![Sign::Equal; order];
    for k in (0..order).rev() {
        signs[k] = match idx % 3 {
            0 => Sign::Minus,
            1 => Sign::Equal,
            _ => Sign::Plus,
        };
        idx /= 3;
    }
    Direction::new(signs).expect("index mapping skips the degenerate pattern")
}

/// Deterministically generates a corner tree with [`NodeFunction::LinearProjection`]
/// vertices (bias 0, disabled).
///
/// All randomness comes from one splitmix64 stream seeded with `seed`,
/// consumed in this fixed order:
///
/// 1. **structure** — for the random family, one draw per non-root vertex v
///    (uniform parent in {0, …, v−1}); chains draw nothing;
/// 2. **directions** — for random/linear, one draw per non-root vertex
///    (uniform over the 3^p − 1 admissible patterns, mapping documented at
///    [`direction_from_index`]); linear-ne draws nothing;
/// 3. **weights** — vertex-major: for each vertex, `channels` i.i.d. draws
///    uniform on [−1/√d, 1/√d].
pub fn generate(
    family: TreeFamily,
    nodes: usize,
    order: usize,
    channels: usize,
    seed: u64,
) -> Result<CornerTree> {
    if nodes == 0 {
        return Err(Error::Config("node count must be >= 1".into()));
    }
    if order == 0 || order > MAX_ORDER {
        return Err(Error::Config(format!(
            "order must be 1..={MAX_ORDER}, got {order}"
        )));
    }
    if channels == 0 {
        return Err(Error::Config("channel count must be >= 1".into()));
    }
    let mut rng = SplitMix64::new(seed);

    let parents: Vec<usize> = match family {
        TreeFamily::Random => (1..nodes).map(|v| rng.next_below(v as u64) as usize).collect(),
        TreeFamily::Linear | TreeFamily::LinearNe => (1..nodes).map(|v| v - 1).collect(),
    };

    let n_dirs = 3u64.pow(order as u32) - 1;
    let dirs: Vec<Direction> = match family {
        TreeFamily::Random | TreeFamily::Linear => (1..nodes)
            .map(|_| direction_from_index(rng.next_below(n_dirs), order))
            .collect(),
        TreeFamily::LinearNe => (1..nodes)
            .map(|_| Direction::new(vec![Sign::Plus; order]).unwrap())
            .collect(),
    };

    let scale = 1.0 / (channels as f64).sqrt();
    let nodes_vec: Vec<NodeFunction> = (0..nodes)
        .map(|_| NodeFunction::LinearProjection {
            weights: (0..channels)
                .map(|_| rng.next_in_range(-scale, scale))
                .collect(),
            bias: 0.0,
            bias_enabled: false,
        })
        .collect();

    let edges = parents
        .into_iter()
        .zip(dirs)
        .map(|(parent, dir)| TreeEdge { parent, dir })
        .collect();
    CornerTree::new(order, nodes_vec, edges)
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

impl CornerTree {
    /// Encodes the tree:
    /// `{"order": p, "nodes": [{"kind": …}, …], "edges": [{"parent", "child",
    /// "dir"}, …]}`. Node kinds: `identity` (channel), `monomial` (channel,
    /// exponent), `linear` (weights, plus `bias` iff the bias is enabled).
    /// Directions serialize as sign strings.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .map(|n| match n {
                NodeFunction::Identity { channel } => serde_json::json!({
                    "kind": "identity",
                    "channel": channel,
                }),
                NodeFunction::Monomial { channel, exponent } => serde_json::json!({
                    "kind": "monomial",
                    "channel": channel,
                    "exponent": exponent,
                }),
                NodeFunction::LinearProjection {
                    weights,
                    bias,
                    bias_enabled,
                } => {
                    if *bias_enabled {
                        serde_json::json!({"kind": "linear", "weights": weights, "bias": bias})
                    } else {
                        serde_json::json!({"kind": "linear", "weights": weights})
                    }
                }
            })
            .collect();
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                serde_json::json!({
                    "parent": e.parent,
                    "child": k + 1,
                    "dir": e.dir.as_string(),
                })
            })
            .collect();
        serde_json::json!({"order": self.order, "nodes": nodes, "edges": edges})
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("tree encodes");
        s.push('\n');
        s
    }

    /// Decodes and validates a tree; schema errors carry JSON pointers,
    /// structural errors name vertices. At order 2, `dir` also accepts the
    /// eight compass names.
    pub fn from_json(value: &serde_json::Value) -> Result<CornerTree> {
        let schema = |pointer: &str, message: String| Error::Schema {
            pointer: pointer.into(),
            message,
        };
        let obj = value
            .as_object()
            .ok_or_else(|| schema("", "expected an object".into()))?;

        let order = obj
            .get("order")
            .ok_or_else(|| schema("/order", "missing".into()))?
            .as_u64()
            .ok_or_else(|| schema("/order", "expected a positive integer".into()))?
            as usize;

        let nodes_val = obj
            .get("nodes")
            .ok_or_else(|| schema("/nodes", "missing".into()))?
            .as_array()
            .ok_or_else(|| schema("/nodes", "expected an array".into()))?;
        let mut nodes = Vec::with_capacity(nodes_val.len());
        for (i, nv) in nodes_val.iter().enumerate() {
            let ptr = format!("/nodes/{i}");
            let nobj = nv
                .as_object()
                .ok_or_else(|| schema(&ptr, "expected an object".into()))?;
            let kind = nobj
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or_else(|| schema(&format!("{ptr}/kind"), "missing or not a string".into()))?;
            let channel_of = |nobj: &serde_json::Map<String, serde_json::Value>| {
                nobj.get("channel")
                    .and_then(|c| c.as_u64())
                    .map(|c| c as usize)
                    .ok_or_else(|| {
                        schema(&format!("{ptr}/channel"), "missing or not an integer".into())
                    })
            };
            let node = match kind {
                "identity" => NodeFunction::Identity {
                    channel: channel_of(nobj)?,
                },
                "monomial" => NodeFunction::Monomial {
                    channel: channel_of(nobj)?,
                    exponent: nobj
                        .get("exponent")
                        .and_then(|e| e.as_u64())
                        .ok_or_else(|| {
                            schema(&format!("{ptr}/exponent"), "missing or not an integer".into())
                        })? as u32,
                },
                "linear" => {
                    let weights_val = nobj
                        .get("weights")
                        .and_then(|w| w.as_array())
                        .ok_or_else(|| {
                            schema(&format!("{ptr}/weights"), "missing or not an array".into())
                        })?;
                    let mut weights = Vec::with_capacity(weights_val.len());
                    for (j, w) in weights_val.iter().enumerate() {
                        let x = w.as_f64().ok_or_else(|| {
                            schema(&format!("{ptr}/weights/{j}"), "expected a number".into())
                        })?;
                        if !x.is_finite() {
                            return Err(schema(
                                &format!("{ptr}/weights/{j}"),
                                format!("non-finite weight {x}"),
                            ));
                        }
                        weights.push(x);
                    }
                    let (bias, bias_enabled) = match nobj.get("bias") {
                        Some(b) => (
                            b.as_f64().ok_or_else(|| {
                                schema(&format!("{ptr}/bias"), "expected a number".into())
                            })?,
                            true,
                        ),
                        None => (0.0, false),
                    };
                    NodeFunction::LinearProjection {
                        weights,
                        bias,
                        bias_enabled,
                    }
                }
                other => {
                    return Err(schema(
                        &format!("{ptr}/kind"),
                        format!("unknown kind {other:?}"),
                    ))
                }
            };
            nodes.push(node);
        }

        let edges_val = obj
            .get("edges")
            .ok_or_else(|| schema("/edges", "missing".into()))?
            .as_array()
            .ok_or_else(|| schema("/edges", "expected an array".into()))?;
        let n = nodes.len();
        let mut edges: Vec<Option<TreeEdge>> = vec![None; n.saturating_sub(1)];
        for (i, ev) in edges_val.iter().enumerate() {
            let ptr = format!("/edges/{i}");
            let eobj = ev
                .as_object()
                .ok_or_else(|| schema(&ptr, "expected an object".into()))?;
            let parent = eobj
                .get("parent")
                .and_then(|p| p.as_u64())
                .ok_or_else(|| schema(&format!("{ptr}/parent"), "missing or not an integer".into()))?
                as usize;
            let child = eobj
                .get("child")
                .and_then(|c| c.as_u64())
                .ok_or_else(|| schema(&format!("{ptr}/child"), "missing or not an integer".into()))?
                as usize;
            let dir_str = eobj
                .get("dir")
                .and_then(|d| d.as_str())
                .ok_or_else(|| schema(&format!("{ptr}/dir"), "missing or not a string".into()))?;
            let dir = Direction::parse(dir_str)
                .map_err(|e| schema(&format!("{ptr}/dir"), e.to_string()))?;
            if child == 0 || child >= n {
                return Err(schema(
                    &format!("{ptr}/child"),
                    format!("child {child} out of range 1..{n}"),
                ));
            }
            if edges[child - 1].is_some() {
                return Err(schema(
                    &format!("{ptr}/child"),
                    format!("vertex {child} has two incoming edges"),
                ));
            }
            edges[child - 1] = Some(TreeEdge { parent, dir });
        }
        if let Some(missing) = edges.iter().position(|e| e.is_none()) {
            return Err(schema(
                "/edges",
                format!("vertex {} has no incoming edge", missing + 1),
            ));
        }
        let edges: Vec<TreeEdge> = edges.into_iter().map(|e| e.unwrap()).collect();
        CornerTree::new(order, nodes, edges)
    }

    pub fn from_json_str(text: &str) -> Result<CornerTree> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema {
            pointer: "".into(),
            message: e.to_string(),
        })?;
        CornerTree::from_json(&value)
    }
}
