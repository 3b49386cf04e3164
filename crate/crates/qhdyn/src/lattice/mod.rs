//! Discretized configuration space and the calculus over it.
//!
//! The configuration space of N_S particle sorts with N(A) particles each and
//! ν spatial dimensions is a rectangular periodic box with d_tot = Σ_A ν·N(A)
//! axes in Q-order (sort 0 particle 0 components, sort 0 particle 1, ..,
//! sort 1 particle 0, ..). Each sort carries one axis specification shared by
//! all coordinates of all its particles, so exchange symmetry within a sort is
//! representable exactly.
//!
//! Derivatives are spectral (discrete Fourier) with wavenumbers
//! k_j = 2π·j/L for j = −n/2+1 .. n/2−1 and the Nyquist mode zeroed; the same
//! convention is used for first derivatives and the Laplacian so that
//! divergence∘gradient and the Laplacian agree to roundoff. Spectral accuracy
//! is what keeps second- and third-derivative combinations inside the quantum
//! potential above the residual tolerances; finite differences would not.
//!
//! Marginalization against δ(q − q₁ᴬ) is exact axis summation times the
//! eliminated volume element (midpoint rule), implemented by
//! [`reduce_to_position`].

mod field;
mod grid;
mod reduce;
mod spectral;

pub use field::{ComplexField, MaskField, ScalarField, Tensor2Field, VectorField};
pub use grid::{AxisSpec, ConfigurationGrid, ParticleIndex, DEFAULT_MAX_AXES};
pub use reduce::{reduce_to_position, reduce_vector_to_position};
pub use spectral::{
    apply_mode_multiplier, axis_wavenumbers, derivative_axis, derivative_axis_complex, divergence,
    gradient, gradient_complex, laplacian, laplacian_axis, laplacian_complex, position_divergence,
    tensor_divergence,
};

/// Kahan compensated accumulator; keeps reductions deterministic and accurate
/// independent of length.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_sums_small_terms_against_large() {
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..1_000_000 {
            k.add(1e-16);
        }
        let exact = 1.0 + 1e-10;
        assert!((k.value() - exact).abs() < 1e-15, "got {}", k.value());
    }
}
