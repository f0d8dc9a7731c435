//! Wall-clock scaling measurements for the pre-sum recursion.
//!
//! One fixed tree is timed over a list of square grids; each measurement is
//! the median of several repeats after one untimed warmup. The interesting
//! number per row is the ratio to the previous row: a 4× pixel step should
//! land near 4× time if the recursion really is linear in the grid.

use crate::engine;
use crate::error::Result;
use crate::grid::{DataTensor, GridShape};
use crate::rng::SplitMix64;
use crate::semiring::SemiringTag;
use crate::tree::{generate, TreeFamily};
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct BenchRow {
    /// Side length of the square grid.
    pub size: usize,
    pub median_seconds: f64,
    /// Time relative to the previous row; None for the first.
    pub ratio: Option<f64>,
}

/// Times `cts` for a chain tree with `nodes` vertices over `size`×`size`
/// single-channel inputs.
pub fn bench_grid_sizes(
    sizes: &[usize],
    nodes: usize,
    tag: SemiringTag,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let tree = generate(TreeFamily::Linear, nodes, 2, 1, seed)?;
    let repeats = repeats.max(1);
    let mut rows: Vec<BenchRow> = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let shape = GridShape::new(vec![size, size])?;
        let mut rng = SplitMix64::new(seed ^ size as u64);
        let values: Vec<f64> = (0..shape.len()).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let z = DataTensor::new(shape, 1, values)?;

        let run = || -> Result<f64> {
            let start = Instant::now();
            let v = engine::cts(&tree, &z, tag)?;
            let elapsed = start.elapsed().as_secs_f64();
            std::hint::black_box(v);
            Ok(elapsed)
        };
        run()?; // warmup
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            times.push(run()?);
        }
        times.sort_by(f64::total_cmp);
        let median = if times.len() % 2 == 1 {
            times[times.len() / 2]
        } else {
            (times[times.len() / 2 - 1] + times[times.len() / 2]) / 2.0
        };

        let ratio = rows.last().map(|prev: &BenchRow| median / prev.median_seconds);
        rows.push(BenchRow {
            size,
            median_seconds: median,
            ratio,
        });
    }
    Ok(rows)
}

/// The rows as a CSV table: `size,median_seconds,ratio` with an empty ratio
/// cell on the first row.
pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("size,median_seconds,ratio\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.size,
            row.median_seconds,
            row.ratio.map(|r| r.to_string()).unwrap_or_default()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_line_up_with_sizes() {
        let rows = bench_grid_sizes(&[8, 16], 3, SemiringTag::Real, 2, 0).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].size, 8);
        assert!(rows[0].ratio.is_none());
        assert!(rows[1].ratio.is_some());
        assert!(rows.iter().all(|r| r.median_seconds >= 0.0));
    }

    #[test]
    fn csv_has_a_header_and_one_row_per_size() {
        let rows = bench_grid_sizes(&[8], 2, SemiringTag::MaxPlus, 1, 1).unwrap();
        let csv = rows_to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "size,median_seconds,ratio");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("8,"));
        assert!(lines[1].ends_with(',')); // empty ratio cell
    }
}
