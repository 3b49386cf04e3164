//! Delta-function marginalization: integrate a configuration-space field over
//! all axes except one particle's block.
//!
//! ∫dQ δ(q − q₁ᴬ)·f(Q) becomes, on the grid, the sum of f over the eliminated
//! axes times the product of their spacings (midpoint rule, no smoothing
//! kernel). The output lives on the kept particle's ν-dimensional position
//! grid. The operation is linear and commutes exactly with any pointwise
//! linear combination of snapshots, in particular with central time
//! differences.

use super::field::{ScalarField, VectorField};
use super::grid::ParticleIndex;
use crate::error::Result;

/// Sums `field` over all axes outside `keep`'s block, times the eliminated
/// volume element. For a normalized density the result integrates to 1 over q.
pub fn reduce_to_position(field: &ScalarField, keep: ParticleIndex) -> Result<ScalarField> {
    let grid = field.grid();
    let kept = grid.particle_axes(keep)?;
    let pos_grid = grid.position_grid(keep)?;

    let mut vol_elim = 1.0;
    for a in 0..grid.d_tot() {
        if !kept.contains(&a) {
            vol_elim *= grid.axis(a).spacing();
        }
    }

    // Row-major strides of the output, aligned with the kept axes in order.
    let mut pos_strides = vec![0usize; kept.len()];
    {
        let mut s = 1usize;
        for (slot, a) in kept.clone().enumerate().rev() {
            let _ = a;
            pos_strides[slot] = s;
            s *= pos_grid.axis(slot).n;
        }
    }

    let mut out = ScalarField::zeros(pos_grid);
    let data = field.data();
    let out_data = out.data_mut();
    let mut idx = vec![0usize; grid.d_tot()];
    for (i, &v) in data.iter().enumerate() {
        grid.unravel(i, &mut idx);
        let mut pos = 0usize;
        for (slot, a) in kept.clone().enumerate() {
            pos += idx[a] * pos_strides[slot];
        }
        out_data[pos] += v;
    }
    for v in out_data.iter_mut() {
        *v *= vol_elim;
    }
    Ok(out)
}

/// Componentwise [`reduce_to_position`].
pub fn reduce_vector_to_position(field: &VectorField, keep: ParticleIndex) -> Result<VectorField> {
    let comps = field
        .components()
        .iter()
        .map(|c| reduce_to_position(c, keep))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{AxisSpec, ConfigurationGrid};
    use crate::model::SortSpec;
    use std::sync::Arc;

    fn two_particle_grid(n: usize) -> Arc<ConfigurationGrid> {
        ConfigurationGrid::new(
            vec![SortSpec::new("a", 1, 1.0), SortSpec::new("b", 1, 1.0)],
            1,
            &[
                AxisSpec::new(-6.0, 6.0, n).unwrap(),
                AxisSpec::new(-6.0, 6.0, n).unwrap(),
            ],
            4,
        )
        .unwrap()
    }

    fn gauss(x: f64, x0: f64, s: f64) -> f64 {
        ((-(x - x0) * (x - x0)) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    #[test]
    fn product_state_reduces_to_its_factor() {
        let g = two_particle_grid(64);
        // the eliminated factor must decay inside the box for its grid
        // integral to be 1 to roundoff (±6 is 7.9σ from the center here)
        let d = ScalarField::from_fn(g.clone(), |q| {
            gauss(q[0], 0.5, 0.8) * gauss(q[1], -0.5, 0.7)
        });
        let reduced = reduce_to_position(&d, ParticleIndex::new(0, 0)).unwrap();
        // The eliminated Gaussian integrates to 1 at spectral-grade quadrature
        // accuracy, so the reduction is the kept factor.
        let pg = reduced.grid().clone();
        let expect = ScalarField::from_fn(pg, |q| gauss(q[0], 0.5, 0.8));
        let mut worst = 0.0_f64;
        for (r, e) in reduced.data().iter().zip(expect.data()) {
            worst = worst.max((r - e).abs());
        }
        assert!(worst < 1e-12, "worst {worst}");
    }

    #[test]
    fn uniform_density_reduces_to_uniform() {
        let g = two_particle_grid(16);
        let vol: f64 = 12.0 * 12.0;
        let d = ScalarField::constant(g, 1.0 / vol);
        let reduced = reduce_to_position(&d, ParticleIndex::new(1, 0)).unwrap();
        for &v in reduced.data() {
            assert!((v - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetrized_density_matches_dense_quadrature_oracle() {
        let g = two_particle_grid(64);
        // symmetrized two-Gaussian pair density (unnormalized is fine here)
        let d = ScalarField::from_fn(g.clone(), |q| {
            let a = gauss(q[0], 1.0, 0.7) * gauss(q[1], -1.0, 0.9);
            let b = gauss(q[0], -1.0, 0.9) * gauss(q[1], 1.0, 0.7);
            a + b + 2.0 * (a * b).sqrt() * 0.3
        });
        let reduced = reduce_to_position(&d, ParticleIndex::new(0, 0)).unwrap();
        // Oracle: brute-force row sums with explicit 2-D indexing.
        let n = 64;
        let dq = g.axis(1).spacing();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += d.data()[i * n + j];
            }
            let oracle = acc * dq;
            assert!((reduced.data()[i] - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn quadrature_consistency_full_vs_reduced_integral() {
        let g = two_particle_grid(32);
        let d = ScalarField::from_fn(g, |q| gauss(q[0], 0.0, 1.0) * gauss(q[1], 0.3, 0.6) + 0.01);
        let full = d.integral();
        let reduced = reduce_to_position(&d, ParticleIndex::new(0, 0)).unwrap();
        assert!((full - reduced.integral()).abs() < 1e-12 * full.abs());
    }

    #[test]
    fn reduction_keeps_the_middle_particle_block() {
        // three axes, keep the middle one: checks stride bookkeeping
        let g = ConfigurationGrid::new(
            vec![SortSpec::new("a", 3, 1.0)],
            1,
            &[AxisSpec::new(-2.0, 2.0, 8).unwrap()],
            4,
        )
        .unwrap();
        let f = ScalarField::from_fn(g.clone(), |q| q[1] * q[1] + 0.1 * q[0] + 0.2 * q[2]);
        let reduced = reduce_to_position(&f, ParticleIndex::new(0, 1)).unwrap();
        // Σ over axes 0 and 2 of (q1² + 0.1 q0 + 0.2 q2)·Δq² ; the odd sums
        // over symmetric boxes do not vanish exactly (grid omits +2.0), so
        // compute the oracle directly.
        let ax = g.axis(0);
        let dq = ax.spacing();
        let xs: Vec<f64> = ax.coords();
        let s0: f64 = xs.iter().sum::<f64>() * dq * (xs.len() as f64 * dq);
        let s2 = s0;
        let cnt = (xs.len() as f64 * dq) * (xs.len() as f64 * dq);
        for (j, &r) in reduced.data().iter().enumerate() {
            let q1 = ax.coord(j);
            let oracle = q1 * q1 * cnt + 0.1 * s0 + 0.2 * s2;
            assert!((r - oracle).abs() < 1e-12);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::lattice::{AxisSpec, ConfigurationGrid};
    use crate::model::SortSpec;
    use proptest::prelude::*;

    fn small_grid() -> std::sync::Arc<ConfigurationGrid> {
        ConfigurationGrid::new(
            vec![SortSpec::new("a", 1, 1.0), SortSpec::new("b", 1, 1.0)],
            1,
            &[
                AxisSpec::new(-1.0, 1.0, 8).unwrap(),
                AxisSpec::new(-1.0, 1.0, 8).unwrap(),
            ],
            4,
        )
        .unwrap()
    }

    proptest! {
        /// Reduction is linear, so it commutes with snapshot differences.
        #[test]
        fn reduction_commutes_with_linear_combinations(
            a in proptest::collection::vec(-1.0..1.0f64, 64),
            b in proptest::collection::vec(-1.0..1.0f64, 64),
            c1 in -2.0..2.0f64,
            c2 in -2.0..2.0f64,
        ) {
            let g = small_grid();
            let fa = ScalarField::from_data(g.clone(), a).unwrap();
            let fb = ScalarField::from_data(g.clone(), b).unwrap();
            let mut combo = fa.clone();
            combo.scale(c1);
            combo.axpy(c2, &fb).unwrap();

            let keep = ParticleIndex::new(1, 0);
            let lhs = reduce_to_position(&combo, keep).unwrap();
            let mut rhs = reduce_to_position(&fa, keep).unwrap();
            rhs.scale(c1);
            rhs.axpy(c2, &reduce_to_position(&fb, keep).unwrap()).unwrap();

            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0));
            }
        }

        /// Full-grid integral equals the integral of any reduction.
        #[test]
        fn integral_is_reduction_invariant(
            a in proptest::collection::vec(-1.0..1.0f64, 64),
        ) {
            let g = small_grid();
            let f = ScalarField::from_data(g, a).unwrap();
            let full = f.integral();
            for keep in [ParticleIndex::new(0, 0), ParticleIndex::new(1, 0)] {
                let red = reduce_to_position(&f, keep).unwrap();
                prop_assert!((red.integral() - full).abs() <= 1e-13 * full.abs().max(1.0));
            }
        }
    }
}
