//! Commutative semirings over an `f64` carrier.
//!
//! Every aggregation in this crate is an ⊕-sum of ⊙-products in a commutative
//! semiring (S, ⊕, ⊙, 𝟘, 𝟙). Two semirings are built in:
//!
//! * **Real** — (ℝ, +, ×, 0, 1): ordinary sum-product arithmetic.
//! * **MaxPlus** — (ℝ ∪ {−∞}, max, +, −∞, 0): tropical arithmetic, where
//!   "sums" pick maxima and "products" add. −∞ is the additive unit and is
//!   absorbing for ⊙, which IEEE arithmetic provides natively
//!   (−∞ + x = −∞ for every finite x).
//!
//! Elements of both semirings are represented as `f64`; MaxPlus additionally
//! admits `f64::NEG_INFINITY`. NaN and +∞ are never valid elements — they are
//! rejected wherever external data enters the crate ([`Semiring::is_valid`]).
//!
//! Scan and engine code is generic over [`Semiring`], so a new semiring is a
//! new impl of this trait; nothing downstream changes. [`SemiringTag`] is the
//! runtime name for the two built-ins, used by containers, files, and the CLI;
//! its methods dispatch to the corresponding impl.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// A commutative semiring whose elements are encoded as `f64`.
///
/// Laws (checked by property tests): ⊕ and ⊙ are associative and commutative,
/// 𝟘 is the ⊕-unit, 𝟙 the ⊙-unit, ⊙ distributes over ⊕, and 𝟘 is absorbing
/// for ⊙.
pub trait Semiring: Copy + Send + Sync + 'static {
    /// Additive unit 𝟘.
    fn zero() -> f64;
    /// Multiplicative unit 𝟙.
    fn one() -> f64;
    /// ⊕
    fn add(a: f64, b: f64) -> f64;
    /// ⊙
    fn mul(a: f64, b: f64) -> f64;
    /// Whether `v` encodes a valid element. Enforced at ingestion boundaries;
    /// arithmetic on valid elements is assumed closed.
    fn is_valid(v: f64) -> bool;
    /// ⊕-fold of `values` in index order. Impls may reassociate (never
    /// reorder) to control rounding.
    fn reduce(values: &[f64]) -> f64 {
        values.iter().copied().fold(Self::zero(), Self::add)
    }
}

/// Sum-product arithmetic on finite floats.
#[derive(Debug, Clone, Copy)]
pub struct Real;

impl Semiring for Real {
    fn zero() -> f64 {
        0.0
    }
    fn one() -> f64 {
        1.0
    }
    fn add(a: f64, b: f64) -> f64 {
        a + b
    }
    fn mul(a: f64, b: f64) -> f64 {
        a * b
    }
    fn is_valid(v: f64) -> bool {
        v.is_finite()
    }
    /// Pairwise (tree) summation: same index order as the plain fold, but the
    /// reassociation keeps the rounding error at O(log n) instead of O(n).
    fn reduce(values: &[f64]) -> f64 {
        fn pairwise(v: &[f64]) -> f64 {
            if v.len() <= 32 {
                v.iter().sum()
            } else {
                let mid = v.len() / 2;
                pairwise(&v[..mid]) + pairwise(&v[mid..])
            }
        }
        pairwise(values)
    }
}

/// Tropical arithmetic: max as ⊕, + as ⊙, −∞ as 𝟘.
#[derive(Debug, Clone, Copy)]
pub struct MaxPlus;

impl Semiring for MaxPlus {
    fn zero() -> f64 {
        f64::NEG_INFINITY
    }
    fn one() -> f64 {
        0.0
    }
    fn add(a: f64, b: f64) -> f64 {
        a.max(b)
    }
    fn mul(a: f64, b: f64) -> f64 {
        a + b
    }
    fn is_valid(v: f64) -> bool {
        v.is_finite() || v == f64::NEG_INFINITY
    }
}

/// Runtime name of a built-in semiring. Carried by fields, files, and CLI
/// flags; each method dispatches to the matching [`Semiring`] impl.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SemiringTag {
    #[serde(rename = "real")]
    Real,
    #[serde(rename = "max-plus")]
    MaxPlus,
}

/// Runs `$body` with the type parameter `$S` bound to the [`Semiring`] impl
/// named by `$tag`. This is the single point where runtime tags meet the
/// compile-time generic code in the scan and engine modules.
macro_rules! with_semiring {
    ($tag:expr, $S:ident => $body:expr) => {
        match $tag {
            $crate::semiring::SemiringTag::Real => {
                type $S = $crate::semiring::Real;
                $body
            }
            $crate::semiring::SemiringTag::MaxPlus => {
                type $S = $crate::semiring::MaxPlus;
                $body
            }
        }
    };
}
pub(crate) use with_semiring;

impl SemiringTag {
    pub const ALL: [SemiringTag; 2] = [SemiringTag::Real, SemiringTag::MaxPlus];

    /// Additive unit 𝟘.
    pub fn zero(self) -> f64 {
        with_semiring!(self, S => S::zero())
    }

    /// Multiplicative unit 𝟙.
    pub fn one(self) -> f64 {
        with_semiring!(self, S => S::one())
    }

    /// ⊕
    pub fn add(self, a: f64, b: f64) -> f64 {
        with_semiring!(self, S => S::add(a, b))
    }

    /// ⊙
    pub fn mul(self, a: f64, b: f64) -> f64 {
        with_semiring!(self, S => S::mul(a, b))
    }

    pub fn is_valid(self, v: f64) -> bool {
        with_semiring!(self, S => S::is_valid(v))
    }

    /// ⊕-fold in index order (pairwise-summed for Real).
    pub fn reduce(self, values: &[f64]) -> f64 {
        with_semiring!(self, S => S::reduce(values))
    }

    /// Rejects values that do not encode an element of this semiring.
    /// The error message names the offending value.
    pub fn check_value(self, v: f64) -> Result<f64> {
        if self.is_valid(v) {
            Ok(v)
        } else {
            Err(Error::Ingestion(format!(
                "{v} is not a valid {} value",
                self.name()
            )))
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SemiringTag::Real => "real",
            SemiringTag::MaxPlus => "max-plus",
        }
    }

    /// Parses the names used by files and CLI flags.
    pub fn parse(s: &str) -> Result<SemiringTag> {
        match s {
            "real" => Ok(SemiringTag::Real),
            "max-plus" | "maxplus" => Ok(SemiringTag::MaxPlus),
            other => Err(Error::Config(format!(
                "unknown semiring {other:?} (expected \"real\" or \"max-plus\")"
            ))),
        }
    }
}

impl fmt::Display for SemiringTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
