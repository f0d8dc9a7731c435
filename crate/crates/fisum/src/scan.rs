//! Directional cumulative sums.
//!
//! For a direction 𝕏 and a field x, the directional cumulative sum is
//!
//! ```text
//! CUMSUM(𝕏, x)_t = ⊕_{r : 𝕏(t, r)} x_r
//! ```
//!
//! — at every position t, the ⊕-sum of x over all positions r satisfying the
//! per-axis constraints of 𝕏 relative to t. Positions whose constraint set is
//! empty receive 𝟘.
//!
//! The implementation is one exclusive scan per constrained axis, applied in
//! increasing axis order: a `+` axis takes an exclusive suffix scan, a `-`
//! axis an exclusive prefix scan, and `=` axes are untouched. Each scan is
//! ⊕-linear and touches a different axis, so their composition sums over the
//! product of the per-axis index sets — exactly the constraint region — in
//! O(N) time per axis instead of the O(N²) of the defining double loop.

use crate::error::{Error, Result};
use crate::grid::{GridShape, ScalarField};
use crate::semiring::{with_semiring, Semiring, SemiringTag};
use crate::tree::{Direction, Sign};

/// The directional cumulative sum of `x` (same shape, same semiring).
pub fn cumsum_dir(dir: &Direction, x: &ScalarField) -> Result<ScalarField> {
    check_order(dir, x.shape())?;
    let values = with_semiring!(x.tag(), S => {
        cumsum_values::<S>(dir, x.shape(), x.values().to_vec())
    });
    Ok(ScalarField::from_parts_unchecked(
        x.shape().clone(),
        x.tag(),
        values,
    ))
}

/// Pulls a cotangent back through [`cumsum_dir`]: the adjoint of a
/// directional sum is the sum in the opposite direction, i.e.
/// ⟨CUMSUM(𝕏, x), y⟩ = ⟨x, CUMSUM(−𝕏, y)⟩. Real semiring only — max-plus
/// backpropagation routes through argmax paths instead (see
/// [`maxplus_cumsum_with_winners`]).
pub fn cumsum_dir_vjp(dir: &Direction, cotangent: &ScalarField) -> Result<ScalarField> {
    if cotangent.tag() != SemiringTag::Real {
        return Err(Error::Semiring(format!(
            "cumsum_dir_vjp is defined for the real semiring, got {}",
            cotangent.tag()
        )));
    }
    cumsum_dir(&dir.flipped(), cotangent)
}

fn check_order(dir: &Direction, shape: &GridShape) -> Result<()> {
    if dir.order() != shape.order() {
        return Err(Error::ShapeMismatch(format!(
            "direction {} has order {}, field has order {}",
            dir.as_string(),
            dir.order(),
            shape.order()
        )));
    }
    Ok(())
}

/// Scan pipeline on raw values, axes in increasing order.
pub(crate) fn cumsum_values<S: Semiring>(
    dir: &Direction,
    shape: &GridShape,
    mut values: Vec<f64>,
) -> Vec<f64> {
    for (axis, &sign) in dir.signs().iter().enumerate() {
        if sign != Sign::Equal {
            scan_axis::<S>(&mut values, shape, axis, sign);
        }
    }
    values
}

/// Test seam: same pipeline with an explicit axis processing order. The
/// result must not depend on the order (the scans act on distinct axes).
#[cfg(test)]
fn cumsum_values_with_order<S: Semiring>(
    dir: &Direction,
    shape: &GridShape,
    mut values: Vec<f64>,
    axis_order: &[usize],
) -> Vec<f64> {
    for &axis in axis_order {
        let sign = dir.signs()[axis];
        if sign != Sign::Equal {
            scan_axis::<S>(&mut values, shape, axis, sign);
        }
    }
    values
}

/// One in-place exclusive scan along `axis`. `-` scans forward (each output
/// is the ⊕-sum of entries with smaller coordinate), `+` scans backward.
fn scan_axis<S: Semiring>(values: &mut [f64], shape: &GridShape, axis: usize, sign: Sign) {
    debug_assert_ne!(sign, Sign::Equal);
    let extents = shape.extents();
    let m = extents[axis];
    let stride: usize = extents[axis + 1..].iter().product();
    let block = m * stride;
    for base_hi in (0..values.len()).step_by(block) {
        for lo in 0..stride {
            let base = base_hi + lo;
            let mut running = S::zero();
            match sign {
                Sign::Minus => {
                    for t in 0..m {
                        let idx = base + t * stride;
                        let cur = values[idx];
                        values[idx] = running;
                        running = S::add(running, cur);
                    }
                }
                Sign::Plus => {
                    for t in (0..m).rev() {
                        let idx = base + t * stride;
                        let cur = values[idx];
                        values[idx] = running;
                        running = S::add(running, cur);
                    }
                }
                Sign::Equal => unreachable!(),
            }
        }
    }
}

/// One stage of a max-plus scan pipeline: for every output position, the
/// input position that won the running max (`None` where the constraint set
/// is empty or all-−∞). Winners are absolute linear indices, so a stage can
/// be replayed without knowing which axis it scanned.
pub(crate) struct MaxPlusStage {
    pub winners: Vec<Option<u32>>,
}

/// Max-plus [`cumsum_values`] that also records, per scan stage, which input
/// element each output took its value from. Backpropagation replays the
/// stages in reverse, scattering each output's cotangent onto its winner.
/// Ties keep the element encountered first in the serial scan order (the
/// smallest index for `-` scans, the largest for `+` scans).
pub(crate) fn maxplus_cumsum_with_winners(
    dir: &Direction,
    shape: &GridShape,
    input: &[f64],
) -> (Vec<f64>, Vec<MaxPlusStage>) {
    let mut values = input.to_vec();
    let mut stages = Vec::new();
    for (axis, &sign) in dir.signs().iter().enumerate() {
        if sign == Sign::Equal {
            continue;
        }
        let winners = scan_axis_maxplus_winners(&mut values, shape, axis, sign);
        stages.push(MaxPlusStage { winners });
    }
    (values, stages)
}

/// Scatters `cotangent` back through the stages recorded by
/// [`maxplus_cumsum_with_winners`]; returns the cotangent of the scan input.
pub(crate) fn maxplus_scatter_back(stages: &[MaxPlusStage], cotangent: &[f64]) -> Vec<f64> {
    let mut cot = cotangent.to_vec();
    for stage in stages.iter().rev() {
        let mut back = vec![0.0; cot.len()];
        for (out_idx, winner) in stage.winners.iter().enumerate() {
            if let Some(w) = winner {
                if cot[out_idx] != 0.0 {
                    back[*w as usize] += cot[out_idx];
                }
            }
        }
        cot = back;
    }
    cot
}

fn scan_axis_maxplus_winners(
    values: &mut [f64],
    shape: &GridShape,
    axis: usize,
    sign: Sign,
) -> Vec<Option<u32>> {
    let extents = shape.extents();
    let m = extents[axis];
    let stride: usize = extents[axis + 1..].iter().product();
    let block = m * stride;
    let mut winners: Vec<Option<u32>> = vec![None; values.len()];
    for base_hi in (0..values.len()).step_by(block) {
        for lo in 0..stride {
            let base = base_hi + lo;
            let mut running = f64::NEG_INFINITY;
            let mut winner: Option<u32> = None;
            // Strict improvement only: on a tie the earlier-scanned element
            // keeps the win.
            match sign {
                Sign::Minus => {
                    for t in 0..m {
                        let idx = base + t * stride;
                        let cur = values[idx];
                        values[idx] = running;
                        winners[idx] = winner;
                        if cur > running {
                            running = cur;
                            winner = Some(idx as u32);
                        }
                    }
                }
                Sign::Plus => {
                    for t in (0..m).rev() {
                        let idx = base + t * stride;
                        let cur = values[idx];
                        values[idx] = running;
                        winners[idx] = winner;
                        if cur > running {
                            running = cur;
                            winner = Some(idx as u32);
                        }
                    }
                }
                Sign::Equal => unreachable!(),
            }
        }
    }
    winners
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::semiring::{MaxPlus, Real};

    const NEG_INF: f64 = f64::NEG_INFINITY;

    fn dir(s: &str) -> Direction {
        Direction::parse(s).unwrap()
    }

    fn field(tag: SemiringTag, extents: &[usize], values: &[f64]) -> ScalarField {
        ScalarField::new(GridShape::new(extents.to_vec()).unwrap(), tag, values.to_vec()).unwrap()
    }

    /// O(N²) defining double loop; the oracle the scans are checked against.
    fn brute_force(d: &Direction, x: &ScalarField) -> Vec<f64> {
        let shape = x.shape();
        let pts = shape.points();
        pts.iter()
            .map(|t| {
                let mut acc = x.tag().zero();
                for r in &pts {
                    if d.holds(t.coords(), r.coords()) {
                        acc = x.tag().add(acc, x.get(shape.linear_of(r.coords())));
                    }
                }
                acc
            })
            .collect()
    }

    /// Every non-degenerate direction of the given order.
    fn all_directions(order: usize) -> Vec<Direction> {
        let n = 3usize.pow(order as u32);
        (0..n)
            .filter_map(|mut idx| {
                let mut signs = vec![Sign::Equal; order];
                for k in (0..order).rev() {
                    signs[k] = match idx % 3 {
                        0 => Sign::Minus,
                        1 => Sign::Equal,
                        _ => Sign::Plus,
                    };
                    idx /= 3;
                }
                Direction::new(signs).ok()
            })
            .collect()
    }

    #[test]
    fn frozen_examples() {
        let x = field(SemiringTag::Real, &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            cumsum_dir(&dir("++"), &x).unwrap().values(),
            &[4.0, 0.0, 0.0, 0.0]
        );

        let x1 = field(SemiringTag::Real, &[3], &[1.0, 1.0, 1.0]);
        assert_eq!(cumsum_dir(&dir("+"), &x1).unwrap().values(), &[2.0, 1.0, 0.0]);

        let m = field(SemiringTag::MaxPlus, &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            cumsum_dir(&dir("++"), &m).unwrap().values(),
            &[4.0, NEG_INF, NEG_INF, NEG_INF]
        );
    }

    #[test]
    fn vjp_is_the_flipped_scan() {
        let ones = field(SemiringTag::Real, &[2, 2], &[1.0; 4]);
        assert_eq!(
            cumsum_dir_vjp(&dir("++"), &ones).unwrap().values(),
            &[0.0, 0.0, 0.0, 1.0]
        );
        let mp = field(SemiringTag::MaxPlus, &[2, 2], &[1.0; 4]);
        assert!(cumsum_dir_vjp(&dir("++"), &mp).is_err());
    }

    #[test]
    fn order_mismatch_is_an_error() {
        let x = field(SemiringTag::Real, &[2, 2], &[1.0; 4]);
        assert!(cumsum_dir(&dir("+"), &x).is_err());
        assert!(cumsum_dir(&dir("+-="), &x).is_err());
    }

    fn int_values(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.next_below(7) as f64 - 3.0).collect()
    }

    #[test]
    fn oracle_all_directions_order_2() {
        let mut rng = SplitMix64::new(11);
        for rows in 1..=5usize {
            for cols in 1..=5usize {
                let vals = int_values(&mut rng, rows * cols);
                for d in all_directions(2) {
                    let x = field(SemiringTag::Real, &[rows, cols], &vals);
                    assert_eq!(
                        cumsum_dir(&d, &x).unwrap().values(),
                        brute_force(&d, &x).as_slice(),
                        "real {}x{cols} {}",
                        rows,
                        d.as_string()
                    );
                    // Max-plus, with −∞ holes punched in.
                    let mvals: Vec<f64> = vals
                        .iter()
                        .enumerate()
                        .map(|(i, &v)| if i % 3 == 0 { NEG_INF } else { v })
                        .collect();
                    let m = field(SemiringTag::MaxPlus, &[rows, cols], &mvals);
                    assert_eq!(
                        cumsum_dir(&d, &m).unwrap().values(),
                        brute_force(&d, &m).as_slice(),
                        "max-plus {}x{cols} {}",
                        rows,
                        d.as_string()
                    );
                }
            }
        }
    }

    #[test]
    fn oracle_all_directions_order_3() {
        let mut rng = SplitMix64::new(13);
        for extents in [[4, 4, 4], [3, 4, 2], [1, 3, 5]] {
            let n: usize = extents.iter().product();
            let vals = int_values(&mut rng, n);
            for d in all_directions(3) {
                for tag in SemiringTag::ALL {
                    let x = field(tag, &extents, &vals);
                    assert_eq!(
                        cumsum_dir(&d, &x).unwrap().values(),
                        brute_force(&d, &x).as_slice(),
                        "{tag} {extents:?} {}",
                        d.as_string()
                    );
                }
            }
        }
    }

    #[test]
    fn axis_processing_order_is_irrelevant() {
        let shape = GridShape::new(vec![4, 3, 5]).unwrap();
        let mut rng = SplitMix64::new(17);
        let vals: Vec<f64> = (0..shape.len()).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let orders: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for d in all_directions(3) {
            let reference =
                cumsum_values_with_order::<Real>(&d, &shape, vals.clone(), &orders[0]);
            for order in &orders[1..] {
                let got = cumsum_values_with_order::<Real>(&d, &shape, vals.clone(), order);
                for (a, b) in reference.iter().zip(&got) {
                    let tol = 1e-12 * a.abs().max(b.abs()).max(1.0);
                    assert!((a - b).abs() <= tol, "{} {order:?}: {a} vs {b}", d.as_string());
                }
            }
            // Max-plus scans commute exactly.
            let mref = cumsum_values_with_order::<MaxPlus>(&d, &shape, vals.clone(), &orders[0]);
            for order in &orders[1..] {
                let got = cumsum_values_with_order::<MaxPlus>(&d, &shape, vals.clone(), order);
                assert_eq!(mref, got);
            }
        }
    }

    #[test]
    fn real_scans_are_linear() {
        let shape = [4, 5];
        let mut rng = SplitMix64::new(23);
        let n = 20;
        let xv: Vec<f64> = (0..n).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
        let yv: Vec<f64> = (0..n).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
        let (a, b) = (rng.next_f64(), rng.next_f64());
        for d in all_directions(2) {
            let combo: Vec<f64> = xv.iter().zip(&yv).map(|(x, y)| a * x + b * y).collect();
            let lhs = cumsum_dir(&d, &field(SemiringTag::Real, &shape, &combo)).unwrap();
            let sx = cumsum_dir(&d, &field(SemiringTag::Real, &shape, &xv)).unwrap();
            let sy = cumsum_dir(&d, &field(SemiringTag::Real, &shape, &yv)).unwrap();
            for i in 0..n {
                let rhs = a * sx.get(i) + b * sy.get(i);
                let tol = 1e-12 * lhs.get(i).abs().max(rhs.abs()).max(1.0);
                assert!((lhs.get(i) - rhs).abs() <= tol);
            }
        }
    }

    #[test]
    fn vjp_satisfies_the_inner_product_identity() {
        // ⟨CUMSUM(𝕏, x), y⟩ == ⟨x, CUMSUM(−𝕏, y)⟩ for every direction.
        let shape = [4, 4];
        let mut rng = SplitMix64::new(29);
        let n = 16;
        let xv: Vec<f64> = (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let yv: Vec<f64> = (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        for d in all_directions(2) {
            let fx = cumsum_dir(&d, &field(SemiringTag::Real, &shape, &xv)).unwrap();
            let by = cumsum_dir_vjp(&d, &field(SemiringTag::Real, &shape, &yv)).unwrap();
            let lhs: f64 = fx.values().iter().zip(&yv).map(|(a, b)| a * b).sum();
            let rhs: f64 = xv.iter().zip(by.values()).map(|(a, b)| a * b).sum();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0),
                "{}: {lhs} vs {rhs}",
                d.as_string()
            );
        }
    }

    #[test]
    fn winners_follow_scan_order_on_ties() {
        let shape = GridShape::new(vec![4]).unwrap();
        let input = [1.0, 5.0, 5.0, 2.0];
        let (out, stages) = maxplus_cumsum_with_winners(&dir("+"), &shape, &input);
        assert_eq!(out, vec![5.0, 5.0, 2.0, NEG_INF]);
        // The suffix scan meets index 2 before index 1, so the tie at 5.0
        // stays with index 2.
        assert_eq!(stages.len(), 1);
        assert_eq!(stages[0].winners, vec![Some(2), Some(2), Some(3), None]);

        let (out, stages) = maxplus_cumsum_with_winners(&dir("-"), &shape, &input);
        assert_eq!(out, vec![NEG_INF, 1.0, 5.0, 5.0]);
        assert_eq!(stages[0].winners, vec![None, Some(0), Some(1), Some(1)]);
    }

    #[test]
    fn winners_match_the_scan_values() {
        // The recorded winner must actually be the element the output equals.
        let shape = GridShape::new(vec![4, 5]).unwrap();
        let mut rng = SplitMix64::new(31);
        let input: Vec<f64> = (0..20)
            .map(|i| {
                if i % 5 == 4 {
                    NEG_INF
                } else {
                    (rng.next_below(9) as f64) - 4.0
                }
            })
            .collect();
        for d in all_directions(2) {
            let (out, stages) = maxplus_cumsum_with_winners(&d, &shape, &input);
            let plain = cumsum_values::<MaxPlus>(&d, &shape, input.clone());
            assert_eq!(out, plain, "{}", d.as_string());
            // Replay: scattering a one-hot cotangent from position t lands on
            // an input position whose value contributes out[t].
            for t in 0..out.len() {
                if out[t] == NEG_INF {
                    continue;
                }
                let mut cot = vec![0.0; out.len()];
                cot[t] = 1.0;
                let back = maxplus_scatter_back(&stages, &cot);
                let total: f64 = back.iter().sum();
                assert_eq!(total, 1.0, "{} t={t}", d.as_string());
                let j = back.iter().position(|&v| v != 0.0).unwrap();
                assert!(d.holds(
                    shape.coords_of(t).as_slice(),
                    shape.coords_of(j).as_slice()
                ));
                assert_eq!(input[j], out[t], "{} t={t} j={j}", d.as_string());
            }
        }
    }
}
