//! Stem-cell niche toy.
//!
//! Rows `1..=D` along the niche axis hold at most `round(theta_d)` cells.
//! The niche starts with one cell in the first row. Every cell divides
//! after an independent unit-mean exponential wait; the daughter stays in
//! the parent's row, and if that row is full a chain of displacements
//! pushes one cell into the next row, and so on. A cell pushed out of the
//! last row differentiates. The statistic is the time at which the
//! `target_cells`-th differentiated cell appears.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::Simulator;
use crate::error::Result;
use crate::kernels::StatVector;
use crate::seed;

#[derive(Debug, Clone)]
pub struct NicheToy {
    target_cells: usize,
}

impl NicheToy {
    pub fn new(target_cells: usize) -> Self {
        NicheToy { target_cells }
    }
}

impl Simulator for NicheToy {
    fn output_dim(&self) -> usize {
        1
    }

    fn simulate(&mut self, theta: &[f64], seed: u64) -> Result<StatVector> {
        let mut rng = seed::rng_from(seed);
        Ok(match niche_time_to_cells(theta, self.target_cells, &mut rng) {
            Some(t) => StatVector::new(vec![t]),
            None => StatVector::degenerate(1),
        })
    }
}

/// Simulated time until `target_cells` cells have differentiated, or `None`
/// when the geometry holds no cells.
pub fn niche_time_to_cells(row_sizes: &[f64], target_cells: usize, rng: &mut ChaCha8Rng) -> Option<f64> {
    if row_sizes.iter().any(|r| !r.is_finite()) {
        return None;
    }
    // Rows that round to zero capacity hold no cells and are skipped.
    let capacity: Vec<u64> = row_sizes
        .iter()
        .map(|r| r.round().max(0.0) as u64)
        .filter(|&c| c > 0)
        .collect();
    if capacity.is_empty() || target_cells == 0 {
        return None;
    }
    let rows = capacity.len();
    let mut occupancy = vec![0u64; rows];
    occupancy[0] = 1;
    let mut population = 1u64;
    let mut exited = 0usize;
    let mut time = 0.0;
    loop {
        let wait: f64 = Exp1.sample(rng);
        time += wait / population as f64;

        let mut pick = rng.random_range(0..population);
        let mut row = 0;
        while pick >= occupancy[row] {
            pick -= occupancy[row];
            row += 1;
        }

        while row < rows && occupancy[row] == capacity[row] {
            row += 1;
        }
        if row == rows {
            exited += 1;
            if exited == target_cells {
                return Some(time);
            }
        } else {
            occupancy[row] += 1;
            population += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_time(rows: &[f64], n: usize, runs: u64) -> f64 {
        let mut sim = NicheToy::new(n);
        (0..runs)
            .map(|s| sim.simulate(rows, seed::derive(&[s, 17])).unwrap().values[0])
            .sum::<f64>()
            / runs as f64
    }

    #[test]
    fn single_cell_single_row_is_exponential() {
        let m = mean_time(&[1.0], 1, 10_000);
        assert!((m - 1.0).abs() < 0.03, "mean {m}");
    }

    #[test]
    fn deterministic_in_seed() {
        let mut sim = NicheToy::new(50);
        let rows = [2.0, 3.0, 5.0, 8.0];
        assert_eq!(sim.simulate(&rows, 3).unwrap(), sim.simulate(&rows, 3).unwrap());
    }

    #[test]
    fn larger_niche_is_faster() {
        let rows = [2.0, 3.0, 4.0, 6.0];
        let doubled: Vec<f64> = rows.iter().map(|r| 2.0 * r).collect();
        let base = mean_time(&rows, 300, 1000);
        let big = mean_time(&doubled, 300, 1000);
        assert!(big < base, "{big} !< {base}");
    }

    #[test]
    fn empty_geometry_is_degenerate() {
        let mut sim = NicheToy::new(10);
        assert!(sim.simulate(&[0.2, 0.4], 1).unwrap().degenerate);
        assert!(sim.simulate(&[f64::NAN], 1).unwrap().degenerate);
    }

    #[test]
    fn output_is_positive() {
        let mut sim = NicheToy::new(300);
        for s in 0..20 {
            let y = sim.simulate(&[5.0, 10.0, 20.0], s).unwrap();
            assert!(y.values[0] > 0.0 && y.values[0].is_finite());
        }
    }
}
