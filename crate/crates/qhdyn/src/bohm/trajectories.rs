//! Bohmian trajectory integration along a stored snapshot series.
//!
//! The velocity field is tabulated on the grid at every stored time;
//! trajectories see it through multilinear interpolation in space and linear
//! interpolation in time, integrated with one classical RK4 step per stored
//! interval. A trajectory that leaves the box or enters the node-masked
//! region freezes at its last good position and carries a status flag; it is
//! never silently extrapolated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::lattice::{ConfigurationGrid, MaskField, ScalarField};
use crate::propagator::WavefunctionSnapshot;
use crate::{QhdError, Result};

use super::fields::{density, node_mask};
use super::residuals::{axis_velocities, snapshot_spacing};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    /// Left the box during the interval starting at `at`; frozen there.
    ExitedBox {
        at: f64,
    },
    /// Hit a node-masked cell during the interval starting at `at`.
    EnteredNodeRegion {
        at: f64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryPath {
    /// One configuration-space position per stored time; frozen paths repeat
    /// their last good position.
    pub positions: Vec<Vec<f64>>,
    pub status: TrajectoryStatus,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryBundle {
    pub times: Vec<f64>,
    pub paths: Vec<TrajectoryPath>,
}

impl TrajectoryBundle {
    pub fn completed(&self) -> usize {
        self.paths
            .iter()
            .filter(|p| p.status == TrajectoryStatus::Completed)
            .count()
    }
}

/// Draws `count` seeds distributed as the density: a categorical draw over
/// cells weighted by D, then a uniform jitter inside the cell. Fully
/// determined by `seed`.
///
/// Cells are centered on the grid points (midpoint convention, matching the
/// quadrature rule and the χ² binning); the left half-cell of the first point
/// wraps periodically to the right box edge.
pub fn sample_seeds(density: &ScalarField, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let grid = density.grid().clone();
    let mut cumulative = Vec::with_capacity(grid.len());
    let mut total = 0.0;
    for &d in density.data() {
        total += d.max(0.0);
        cumulative.push(total);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices = vec![0usize; grid.d_tot()];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r = rng.gen::<f64>() * total;
        let cell = cumulative.partition_point(|&c| c <= r).min(grid.len() - 1);
        grid.unravel(cell, &mut indices);
        let mut x = Vec::with_capacity(grid.d_tot());
        for (a, &j) in indices.iter().enumerate() {
            let ax = grid.axis(a);
            let mut coord = ax.coord(j) + (rng.gen::<f64>() - 0.5) * ax.spacing();
            if coord < ax.q_min {
                coord += ax.length();
            }
            x.push(coord);
        }
        out.push(x);
    }
    out
}

enum Sample {
    Velocity(Vec<f64>),
    Masked,
    Outside,
}

/// Multilinear interpolation of the axis-velocity tables at `x`, refusing
/// positions outside the box or cells touching a masked point. The upper
/// neighbor of the last cell is the periodic image.
fn sample_table(
    grid: &ConfigurationGrid,
    w_axes: &[ScalarField],
    mask: &MaskField,
    x: &[f64],
) -> Sample {
    let d_tot = grid.d_tot();
    let mut base = vec![0usize; d_tot];
    let mut frac = vec![0.0; d_tot];
    for a in 0..d_tot {
        let ax = grid.axis(a);
        if x[a] < ax.q_min || x[a] >= ax.q_max {
            return Sample::Outside;
        }
        let u = (x[a] - ax.q_min) / ax.spacing();
        let j = (u.floor() as usize).min(ax.n - 1);
        base[a] = j;
        frac[a] = u - j as f64;
    }
    let mut v = vec![0.0; d_tot];
    for corner in 0..(1usize << d_tot) {
        let mut flat = 0;
        let mut weight = 1.0;
        for a in 0..d_tot {
            let bit = (corner >> a) & 1;
            let j = (base[a] + bit) % grid.axis(a).n;
            flat += j * grid.stride(a);
            weight *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if mask.is_masked(flat) {
            return Sample::Masked;
        }
        for a in 0..d_tot {
            v[a] += weight * w_axes[a].data()[flat];
        }
    }
    Sample::Velocity(v)
}

struct VelocityTables {
    w: Vec<Vec<ScalarField>>,
    masks: Vec<MaskField>,
}

impl VelocityTables {
    /// v(x, t) linearly blended between the two bounding snapshots.
    fn velocity(&self, grid: &ConfigurationGrid, s: usize, theta: f64, x: &[f64]) -> Sample {
        if theta <= 0.0 {
            return sample_table(grid, &self.w[s], &self.masks[s], x);
        }
        if theta >= 1.0 {
            return sample_table(grid, &self.w[s + 1], &self.masks[s + 1], x);
        }
        let lo = sample_table(grid, &self.w[s], &self.masks[s], x);
        let hi = sample_table(grid, &self.w[s + 1], &self.masks[s + 1], x);
        match (lo, hi) {
            (Sample::Outside, _) | (_, Sample::Outside) => Sample::Outside,
            (Sample::Masked, _) | (_, Sample::Masked) => Sample::Masked,
            (Sample::Velocity(a), Sample::Velocity(b)) => Sample::Velocity(
                a.iter()
                    .zip(&b)
                    .map(|(va, vb)| (1.0 - theta) * va + theta * vb)
                    .collect(),
            ),
        }
    }
}

fn integrate_one(
    grid: &ConfigurationGrid,
    tables: &VelocityTables,
    times: &[f64],
    dt: f64,
    seed: Vec<f64>,
) -> TrajectoryPath {
    let d_tot = grid.d_tot();
    let mut positions = Vec::with_capacity(times.len());
    let mut status = TrajectoryStatus::Completed;
    let mut x = seed;
    positions.push(x.clone());

    'intervals: for s in 0..times.len() - 1 {
        let mut ks: Vec<Vec<f64>> = Vec::with_capacity(4);
        // Classical RK4 stage offsets (θ, weight of the previous slope).
        for (stage, theta) in [(0usize, 0.0), (1, 0.5), (2, 0.5), (3, 1.0)] {
            let mut probe = x.clone();
            if stage > 0 {
                let step = if stage == 3 { dt } else { 0.5 * dt };
                for a in 0..d_tot {
                    probe[a] += step * ks[stage - 1][a];
                }
            }
            match tables.velocity(grid, s, theta, &probe) {
                Sample::Velocity(v) => ks.push(v),
                Sample::Masked => {
                    status = TrajectoryStatus::EnteredNodeRegion { at: times[s] };
                    break 'intervals;
                }
                Sample::Outside => {
                    status = TrajectoryStatus::ExitedBox { at: times[s] };
                    break 'intervals;
                }
            }
        }
        let mut next = x.clone();
        for (a, value) in next.iter_mut().enumerate() {
            *value += dt / 6.0 * (ks[0][a] + 2.0 * ks[1][a] + 2.0 * ks[2][a] + ks[3][a]);
        }
        for (a, &value) in next.iter().enumerate() {
            let ax = grid.axis(a);
            if value < ax.q_min || value >= ax.q_max {
                status = TrajectoryStatus::ExitedBox { at: times[s + 1] };
                break 'intervals;
            }
        }
        x = next;
        positions.push(x.clone());
    }

    while positions.len() < times.len() {
        positions.push(positions.last().expect("at least the seed").clone());
    }
    TrajectoryPath { positions, status }
}

/// Integrates one trajectory per seed along the stored series. The node
/// exclusion uses `mask_factor` relative to each snapshot's density maximum.
pub fn integrate_trajectories(
    series: &[WavefunctionSnapshot],
    hbar: f64,
    seeds: Vec<Vec<f64>>,
    mask_factor: f64,
) -> Result<TrajectoryBundle> {
    let dt = snapshot_spacing(series)?;
    let grid = series[0].psi.grid().clone();
    for (i, seed) in seeds.iter().enumerate() {
        if seed.len() != grid.d_tot() {
            return Err(QhdError::AxisMismatch(format!(
                "seed {i} has {} coordinates on a grid with {} axes",
                seed.len(),
                grid.d_tot()
            )));
        }
    }

    let mut w = Vec::with_capacity(series.len());
    let mut masks = Vec::with_capacity(series.len());
    for snap in series {
        let d = density(&snap.psi);
        let mask = node_mask(&d, mask_factor);
        w.push(axis_velocities(&snap.psi, hbar, &mask));
        masks.push(mask);
    }
    let tables = VelocityTables { w, masks };
    let times: Vec<f64> = series.iter().map(|s| s.t).collect();

    // Order-preserving parallel map: bundle index i is always seed i.
    let paths: Vec<TrajectoryPath> = seeds
        .into_par_iter()
        .map(|seed| integrate_one(&grid, &tables, &times, dt, seed))
        .collect();

    Ok(TrajectoryBundle { times, paths })
}

/// χ² comparison of an ensemble's final positions against a target density.
#[derive(Clone, Debug, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    /// Merged bin count; degrees of freedom are `bins − 1`.
    pub bins: usize,
    pub dof: usize,
    pub p_value: f64,
    /// Completed trajectories entering the histogram.
    pub samples: usize,
}

/// Bins the completed trajectories' final positions into grid cells, merges
/// cells in flat order until every bin expects at least five counts, and
/// returns the χ² statistic against the target density with its p-value.
pub fn transport_statistic(
    bundle: &TrajectoryBundle,
    target_density: &ScalarField,
) -> Result<ChiSquare> {
    let grid = target_density.grid().clone();
    let mut observed = vec![0.0f64; grid.len()];
    let mut samples = 0usize;
    for path in &bundle.paths {
        if path.status != TrajectoryStatus::Completed {
            continue;
        }
        let x = path.positions.last().expect("non-empty path");
        let mut flat = 0;
        for a in 0..grid.d_tot() {
            let ax = grid.axis(a);
            let u = (x[a] - ax.q_min) / ax.spacing();
            if !(0.0..(ax.n as f64)).contains(&u) {
                return Err(QhdError::InvalidGrid(format!(
                    "completed trajectory ends outside the target grid at {x:?}"
                )));
            }
            // Nearest grid point: cells are centered on the points, with the
            // rounded-up last cell wrapping to index 0 periodically.
            flat += (u.round() as usize % ax.n) * grid.stride(a);
        }
        observed[flat] += 1.0;
        samples += 1;
    }
    if samples == 0 {
        return Err(QhdError::InvalidGrid(
            "no completed trajectories to test".into(),
        ));
    }

    let weight_total: f64 = target_density.data().iter().map(|&d| d.max(0.0)).sum();
    let scale = samples as f64 / weight_total;

    // Merge flat-order cells until each bin expects ≥ 5 counts; a short tail
    // folds into the previous bin.
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (idx, &obs) in observed.iter().enumerate() {
        acc.0 += obs;
        acc.1 += target_density.data()[idx].max(0.0) * scale;
        if acc.1 >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        }
    }
    if bins.len() < 2 {
        return Err(QhdError::InvalidGrid(format!(
            "χ² needs at least two bins with expected counts ≥ 5, got {} \
             ({} samples)",
            bins.len(),
            samples
        )));
    }

    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("dof ≥ 1");
    Ok(ChiSquare {
        statistic,
        bins: bins.len(),
        dof,
        p_value: 1.0 - dist.cdf(statistic),
        samples,
    })
}
