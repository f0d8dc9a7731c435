//! Fast iterated sums over order-p tensors via corner trees.
//!
//! A corner tree pairs vertex functions ℝ^d → ℝ with directional edge
//! constraints; its corner-tree sum aggregates, in a semiring, the product of
//! vertex evaluations over every placement of the tree into the data grid
//! that respects all constraints. The naive enumeration is O(N^n); the
//! recursion in [`engine`] computes the same value — and the full pre-sum
//! field — in O(n·N) using directional cumulative scans.
//!
//! Modules:
//! - [`semiring`]: the (⊕, ⊙) carriers (real and max-plus) and the
//!   compile-time/runtime dispatch bridge;
//! - [`grid`]: shapes, channel-last data tensors, scalar fields, file I/O;
//! - [`tree`]: corner trees, directions, validation, JSON codec, and the
//!   deterministic generator;
//! - [`scan`]: directional cumulative sums and their adjoints;
//! - [`engine`]: CTS / CTPS / brute force / 1-D iterated sums;
//! - [`fis`]: the trainable feature layer, its exact gradients, and the
//!   two-layer block with the training demo;
//! - [`verify`]: randomized engine-vs-oracle trials;
//! - [`bench`]: wall-clock scaling measurements.

pub mod bench;
pub mod engine;
pub mod error;
pub mod fis;
pub mod grid;
pub mod rng;
pub mod scan;
pub mod semiring;
pub mod threads;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
