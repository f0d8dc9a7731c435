//! Corner-tree sums: the quadratic-or-worse defining enumeration and the
//! linear-time recursive evaluation.
//!
//! For a corner tree 𝕋 with vertices v₁ (root), …, v_n and data z, a
//! placement assigns a grid point r^i to each vertex. The corner-tree sum is
//!
//! ```text
//! CTS(𝕋, z) = ⊕_{placements r : ALLOWED(𝕋, r)} ⊙_i 𝔳(v_i)(z_{r^i})
//! ```
//!
//! where ALLOWED checks every edge's direction between parent and child
//! points. [`cts_bruteforce`] computes exactly this — an O(N^n) enumeration
//! used as the reference oracle. [`cts`] instead reduces the corner-tree
//! pre-sum field of [`ctps`], computed by the recursion
//!
//! ```text
//! CTPS(𝕋, z)_t = 𝔳(v₁)(z_t) ⊙ ∏_{edges (v₁,c)} CUMSUM(𝔢(c), CTPS(𝕋|_c, z))_t
//! ```
//!
//! which costs O(n·N) time and space. The two agree because ALLOWED
//! factorizes over the root's subtrees (each allowed placement decomposes
//! into a root point and allowed sub-placements in the edge's constraint
//! region, and ⊙ distributes over ⊕).

use crate::error::{Error, Result};
use crate::grid::{DataTensor, GridPoint, ScalarField};
use crate::scan;
use crate::semiring::{with_semiring, Semiring, SemiringTag};
use crate::tree::{CornerTree, NodeFunction, TreeEdge};

/// Default ceiling on brute-force placements (`N^n`).
pub const DEFAULT_ENUMERATION_CAP: u128 = 100_000_000;

/// One grid point per vertex, indexed like the tree's vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    points: Vec<GridPoint>,
}

impl Placement {
    pub fn new(points: Vec<GridPoint>) -> Self {
        Placement { points }
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }
}

/// Whether every edge constraint of `tree` holds for `placement`.
pub fn allowed(tree: &CornerTree, placement: &Placement) -> bool {
    debug_assert_eq!(placement.points.len(), tree.n_vertices());
    tree.edges().iter().enumerate().all(|(k, e)| {
        e.dir.holds(
            placement.points[e.parent].coords(),
            placement.points[k + 1].coords(),
        )
    })
}

/// Evaluates a node function on one channel vector. Evaluation happens in ℝ;
/// the result is read as a semiring element unchanged (finite reals encode
/// themselves in both built-in semirings). The node must have been validated
/// against the channel count.
pub fn eval_node(node: &NodeFunction, z: &[f64]) -> f64 {
    match node {
        NodeFunction::Identity { channel } => z[*channel],
        NodeFunction::Monomial { channel, exponent } => z[*channel].powi(*exponent as i32),
        NodeFunction::LinearProjection {
            weights,
            bias,
            bias_enabled,
        } => {
            debug_assert_eq!(weights.len(), z.len());
            let dot: f64 = weights.iter().zip(z).map(|(w, x)| w * x).sum();
            if *bias_enabled {
                dot + bias
            } else {
                dot
            }
        }
    }
}

/// `node` evaluated at every grid point, row-major.
pub(crate) fn node_values(node: &NodeFunction, z: &DataTensor) -> Vec<f64> {
    (0..z.shape().len())
        .map(|i| eval_node(node, z.point_values(i)))
        .collect()
}

fn check_tree_against(tree: &CornerTree, z: &DataTensor) -> Result<()> {
    tree.validate(Some(z.channels()))?;
    if tree.order() != z.shape().order() {
        return Err(Error::ShapeMismatch(format!(
            "tree has order {}, data has order {}",
            tree.order(),
            z.shape().order()
        )));
    }
    Ok(())
}

/// The corner-tree pre-sum field: `CTPS(𝕋, z)_t` at every grid point.
pub fn ctps(tree: &CornerTree, z: &DataTensor, tag: SemiringTag) -> Result<ScalarField> {
    check_tree_against(tree, z)?;
    let children = tree.children_lists();
    let values = with_semiring!(tag, S => ctps_values::<S>(tree, &children, z, 0));
    Ok(ScalarField::from_parts_unchecked(
        z.shape().clone(),
        tag,
        values,
    ))
}

/// CTPS of the subtree rooted at `v`, on raw buffers. Children are merged in
/// increasing vertex order; each child's field is scanned along its edge
/// direction and ⊙-multiplied in pointwise.
pub(crate) fn ctps_values<S: Semiring>(
    tree: &CornerTree,
    children: &[Vec<usize>],
    z: &DataTensor,
    v: usize,
) -> Vec<f64> {
    let mut vals = node_values(&tree.nodes()[v], z);
    for &c in &children[v] {
        let child_vals = ctps_values::<S>(tree, children, z, c);
        let dir = &tree.incoming(c).expect("non-root vertex has an edge").dir;
        let scanned = scan::cumsum_values::<S>(dir, z.shape(), child_vals);
        for (a, s) in vals.iter_mut().zip(&scanned) {
            *a = S::mul(*a, *s);
        }
    }
    vals
}

/// The corner-tree sum: ⊕-reduction of the pre-sum field.
pub fn cts(tree: &CornerTree, z: &DataTensor, tag: SemiringTag) -> Result<f64> {
    let field = ctps(tree, z, tag)?;
    Ok(tag.reduce(field.values()))
}

/// The defining enumeration: ⊕ over every allowed placement of the ⊙-product
/// of node evaluations. Refuses to run when `N^n` exceeds `cap`. Placements
/// are enumerated vertex-by-vertex in row-major point order, pruning a
/// branch as soon as an edge constraint fails.
pub fn cts_bruteforce(
    tree: &CornerTree,
    z: &DataTensor,
    tag: SemiringTag,
    cap: u128,
) -> Result<f64> {
    check_tree_against(tree, z)?;
    let npts = z.shape().len();
    let n = tree.n_vertices();
    match (npts as u128).checked_pow(n as u32) {
        Some(total) if total <= cap => {}
        total => {
            return Err(Error::CapExceeded {
                placements: total.unwrap_or(u128::MAX),
                cap,
            })
        }
    }
    let coords: Vec<Vec<usize>> = (0..npts).map(|i| z.shape().coords_of(i)).collect();
    let evals: Vec<Vec<f64>> = tree.nodes().iter().map(|f| node_values(f, z)).collect();

    struct Enumerator<'a> {
        edges: &'a [TreeEdge],
        coords: &'a [Vec<usize>],
        evals: &'a [Vec<f64>],
        npts: usize,
        n: usize,
    }

    impl Enumerator<'_> {
        fn run<S: Semiring>(&self, v: usize, placed: &mut Vec<usize>, prod: f64, acc: &mut f64) {
            if v == self.n {
                *acc = S::add(*acc, prod);
                return;
            }
            for pt in 0..self.npts {
                if v > 0 {
                    let e = &self.edges[v - 1];
                    if !e.dir.holds(&self.coords[placed[e.parent]], &self.coords[pt]) {
                        continue;
                    }
                }
                placed.push(pt);
                self.run::<S>(v + 1, placed, S::mul(prod, self.evals[v][pt]), acc);
                placed.pop();
            }
        }
    }

    let e = Enumerator {
        edges: tree.edges(),
        coords: &coords,
        evals: &evals,
        npts,
        n,
    };
    Ok(with_semiring!(tag, S => {
        let mut acc = S::zero();
        e.run::<S>(0, &mut Vec::with_capacity(n), S::one(), &mut acc);
        acc
    }))
}

/// Iterated sums of a 1-D sequence: for exponents (α₁, …, α_k),
///
/// ```text
/// y_t = ⊕_{i₁ < … < i_k ≤ t} x_{i₁}^{α₁} ⊙ … ⊙ x_{i_k}^{α_k}
/// ```
///
/// (powers taken in ℝ, then read into the semiring), returned for every
/// prefix length t = 1..T. Computed by the k-state recurrence
/// `A_j(t) = A_j(t-1) ⊕ A_{j-1}(t-1) ⊙ x_t^{α_j}` in O(k·T).
pub fn iterated_sum_1d(x: &[f64], exponents: &[u32], tag: SemiringTag) -> Result<Vec<f64>> {
    if exponents.is_empty() {
        return Err(Error::Config("exponent list is empty".into()));
    }
    if let Some(j) = exponents.iter().position(|&a| a == 0) {
        return Err(Error::Config(format!("exponent {j} is zero (must be >= 1)")));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Ingestion(format!(
            "non-finite value {} at index {i}",
            x[i]
        )));
    }
    let k = exponents.len();
    Ok(with_semiring!(tag, S => {
        let mut state = vec![S::zero(); k + 1];
        state[0] = S::one();
        let mut out = Vec::with_capacity(x.len());
        for &xt in x {
            for j in (1..=k).rev() {
                let m = xt.powi(exponents[j - 1] as i32);
                state[j] = S::add(state[j], S::mul(state[j - 1], m));
            }
            out.push(state[k]);
        }
        out
    }))
}

/// Second-order mixed difference of an order-2 tensor, per channel:
///
/// ```text
/// out[r₁, r₂] = x[r₁+1, r₂+1] − x[r₁, r₂+1] − x[r₁+1, r₂] + x[r₁, r₂]
/// ```
///
/// The output loses one row and one column. Separable inputs
/// `x[r₁, r₂] = u(r₁) + v(r₂)` difference to zero.
pub fn mixed_difference(x: &DataTensor) -> Result<DataTensor> {
    let extents = x.shape().extents();
    let [t1, t2] = extents else {
        return Err(Error::ShapeMismatch(format!(
            "mixed difference needs an order-2 tensor, got order {}",
            extents.len()
        )));
    };
    let (t1, t2) = (*t1, *t2);
    if t1 < 2 || t2 < 2 {
        return Err(Error::ShapeMismatch(format!(
            "mixed difference needs extents >= 2, got {t1}x{t2}"
        )));
    }
    let d = x.channels();
    let shape = crate::grid::GridShape::new(vec![t1 - 1, t2 - 1])?;
    let mut out = DataTensor::zeros(shape, d);
    for r1 in 0..t1 - 1 {
        for r2 in 0..t2 - 1 {
            for c in 0..d {
                let v = x.get((r1 + 1) * t2 + (r2 + 1), c) - x.get(r1 * t2 + (r2 + 1), c)
                    - x.get((r1 + 1) * t2 + r2, c)
                    + x.get(r1 * t2 + r2, c);
                out.set(r1 * (t2 - 1) + r2, c, v);
            }
        }
    }
    Ok(out)
}
