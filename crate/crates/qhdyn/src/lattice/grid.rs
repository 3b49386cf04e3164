//! Grid geometry: axes, sort blocks, strides and index arithmetic.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{QhdError, Result};
use crate::model::SortSpec;

/// One periodic coordinate axis: points q_min + j·Δq for j = 0..n−1 with
/// Δq = (q_max − q_min)/n; q_max itself is the periodic image of q_min.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisSpec {
    pub q_min: f64,
    pub q_max: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn new(q_min: f64, q_max: f64, n: usize) -> Result<Self> {
        if !(q_min.is_finite() && q_max.is_finite()) || q_max <= q_min {
            return Err(QhdError::InvalidGrid(format!(
                "axis extent [{q_min}, {q_max}] is not a finite, positive interval"
            )));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(QhdError::InvalidGrid(format!(
                "axis point count {n} must be a power of two ≥ 4"
            )));
        }
        Ok(Self { q_min, q_max, n })
    }

    /// Box length (periodicity length) of the axis.
    #[inline]
    pub fn length(&self) -> f64 {
        self.q_max - self.q_min
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.length() / self.n as f64
    }

    #[inline]
    pub fn coord(&self, j: usize) -> f64 {
        self.q_min + self.spacing() * j as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.coord(j)).collect()
    }
}

/// Identifies one particle: `sort` indexes the sort list, `index` the particle
/// within the sort (both zero-based). Maps to a contiguous block of ν axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParticleIndex {
    pub sort: usize,
    pub index: usize,
}

impl ParticleIndex {
    pub fn new(sort: usize, index: usize) -> Self {
        Self { sort, index }
    }
}

impl fmt::Display for ParticleIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(sort {}, particle {})", self.sort, self.index)
    }
}

/// Discretized configuration space: the tensor grid over all particle axes.
///
/// Data layout for fields on the grid is row-major in Q-order; the last axis
/// is contiguous.
#[derive(Debug)]
pub struct ConfigurationGrid {
    sorts: Vec<SortSpec>,
    spatial_dim: usize,
    /// One entry per axis, Q-order. All axes of one sort share one spec.
    axes: Vec<AxisSpec>,
    /// Owning sort of each axis.
    axis_sort: Vec<usize>,
    /// Row-major strides.
    strides: Vec<usize>,
    len: usize,
}

impl PartialEq for ConfigurationGrid {
    fn eq(&self, other: &Self) -> bool {
        self.sorts == other.sorts
            && self.spatial_dim == other.spatial_dim
            && self.axes == other.axes
    }
}

/// Default cap on the total axis count; keeps field storage at desk scale.
pub const DEFAULT_MAX_AXES: usize = 4;

impl ConfigurationGrid {
    /// Builds the grid from per-sort axis specs. `boxes[s]` is shared by all
    /// ν·N(s) axes of sort `s`.
    pub fn new(
        sorts: Vec<SortSpec>,
        spatial_dim: usize,
        boxes: &[AxisSpec],
        max_axes: usize,
    ) -> Result<Arc<Self>> {
        if sorts.is_empty() {
            return Err(QhdError::InvalidGrid("sort list is empty".into()));
        }
        if !(1..=3).contains(&spatial_dim) {
            return Err(QhdError::InvalidGrid(format!(
                "spatial dimension {spatial_dim} not in 1..=3"
            )));
        }
        if boxes.len() != sorts.len() {
            return Err(QhdError::InvalidGrid(format!(
                "{} axis specs for {} sorts",
                boxes.len(),
                sorts.len()
            )));
        }
        for (s, sort) in sorts.iter().enumerate() {
            sort.validate(s)?;
        }
        let mut labels: Vec<&str> = sorts.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != sorts.len() {
            return Err(QhdError::InvalidGrid("sort labels must be unique".into()));
        }

        let mut axes = Vec::new();
        let mut axis_sort = Vec::new();
        for (s, sort) in sorts.iter().enumerate() {
            for _ in 0..sort.count * spatial_dim {
                axes.push(boxes[s].clone());
                axis_sort.push(s);
            }
        }
        let d_tot = axes.len();
        if d_tot > max_axes {
            return Err(QhdError::InvalidGrid(format!(
                "total axis count {d_tot} exceeds the cap {max_axes} \
                 (raise `grid.max_axes` deliberately if the memory cost is understood)"
            )));
        }

        let mut strides = vec![1usize; d_tot];
        let mut len: usize = 1;
        for a in (0..d_tot).rev() {
            strides[a] = len;
            len = len
                .checked_mul(axes[a].n)
                .ok_or_else(|| QhdError::InvalidGrid("grid point count overflows usize".into()))?;
        }

        Ok(Arc::new(Self {
            sorts,
            spatial_dim,
            axes,
            axis_sort,
            strides,
            len,
        }))
    }

    /// Convenience constructor: one sort, one particle.
    pub fn single_particle(
        label: &str,
        mass: f64,
        spatial_dim: usize,
        axis: AxisSpec,
    ) -> Result<Arc<Self>> {
        Self::new(
            vec![SortSpec {
                label: label.to_string(),
                count: 1,
                mass,
            }],
            spatial_dim,
            &[axis],
            DEFAULT_MAX_AXES,
        )
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn d_tot(&self) -> usize {
        self.axes.len()
    }

    #[inline]
    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    #[inline]
    pub fn sorts(&self) -> &[SortSpec] {
        &self.sorts
    }

    #[inline]
    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    #[inline]
    pub fn axis(&self, a: usize) -> &AxisSpec {
        &self.axes[a]
    }

    #[inline]
    pub fn stride(&self, a: usize) -> usize {
        self.strides[a]
    }

    /// Sort owning the given axis.
    #[inline]
    pub fn axis_sort(&self, a: usize) -> usize {
        self.axis_sort[a]
    }

    /// Mass of the sort owning the given axis.
    #[inline]
    pub fn axis_mass(&self, a: usize) -> f64 {
        self.sorts[self.axis_sort[a]].mass
    }

    pub fn sort_index(&self, label: &str) -> Option<usize> {
        self.sorts.iter().position(|s| s.label == label)
    }

    /// Volume element of the full grid, Π_a Δq_a.
    pub fn point_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    pub fn particles(&self) -> Vec<ParticleIndex> {
        let mut out = Vec::new();
        for (s, sort) in self.sorts.iter().enumerate() {
            for i in 0..sort.count {
                out.push(ParticleIndex::new(s, i));
            }
        }
        out
    }

    /// Contiguous axis range of the particle's ν coordinates.
    pub fn particle_axes(&self, p: ParticleIndex) -> Result<Range<usize>> {
        if p.sort >= self.sorts.len() || p.index >= self.sorts[p.sort].count {
            return Err(QhdError::UnknownParticle {
                sort: p.sort,
                index: p.index,
            });
        }
        let mut start = 0;
        for s in 0..p.sort {
            start += self.sorts[s].count * self.spatial_dim;
        }
        start += p.index * self.spatial_dim;
        Ok(start..start + self.spatial_dim)
    }

    /// Decomposes a flat index into per-axis indices (row-major).
    #[inline]
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        debug_assert_eq!(out.len(), self.d_tot());
        for (value, &stride) in out.iter_mut().zip(&self.strides) {
            *value = flat / stride;
            flat %= stride;
        }
    }

    /// Coordinates of a flat index, written into `out` (length d_tot).
    #[inline]
    pub fn coords_of(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for (value, (&stride, axis)) in out.iter_mut().zip(self.strides.iter().zip(&self.axes)) {
            let j = rem / stride;
            rem %= stride;
            *value = axis.coord(j);
        }
    }

    /// Single-particle position grid carrying over the particle's axes and its
    /// sort label/mass; target space of [`reduce_to_position`].
    pub fn position_grid(&self, p: ParticleIndex) -> Result<Arc<ConfigurationGrid>> {
        let axes = self.particle_axes(p)?;
        let sort = &self.sorts[p.sort];
        ConfigurationGrid::new(
            vec![SortSpec {
                label: sort.label.clone(),
                count: 1,
                mass: sort.mass,
            }],
            self.spatial_dim,
            &[self.axes[axes.start].clone()],
            DEFAULT_MAX_AXES,
        )
    }

    /// True when both grids discretize the same box with the same point count
    /// on every axis (sort metadata may differ). Cross-sort totals require it.
    pub fn same_axes(&self, other: &ConfigurationGrid) -> bool {
        self.axes == other.axes && self.spatial_dim == other.spatial_dim
    }
}
