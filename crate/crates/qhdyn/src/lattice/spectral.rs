//! Spectral (discrete-Fourier) calculus along grid axes.
//!
//! Wavenumber convention on an axis of n points and length L:
//! k_j = 2π·j/L for j = 0..n/2−1 and k_j = 2π·(j−n)/L for j = n/2+1..n−1;
//! the unpaired Nyquist mode j = n/2 is zeroed. First derivatives use i·k_j,
//! the Laplacian uses −k_j² with the same zeroed Nyquist, which makes
//! divergence∘gradient agree with the Laplacian to roundoff.
//!
//! Differentiation is exact for commensurate Fourier modes below the Nyquist
//! limit and spectrally accurate (error below the transform roundoff floor)
//! for fields whose spectrum decays before it, which holds for every decaying
//! field this crate differentiates (Ψ, D, J and their position-space
//! reductions). Ratio fields (w, v, V_qu) are never fed to these routines;
//! their derivatives are assembled from derivatives of decaying fields by the
//! quotient rule at call sites.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::field::{ComplexField, ScalarField, Tensor2Field, VectorField};
use super::grid::{ConfigurationGrid, ParticleIndex};
use crate::error::{QhdError, Result};

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut p = planner().lock().expect("FFT planner lock poisoned");
    (p.plan_fft_forward(n), p.plan_fft_inverse(n))
}

/// First-derivative wavenumbers with the Nyquist mode zeroed.
fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|j| {
            if j < n / 2 {
                base * j as f64
            } else if j == n / 2 {
                0.0
            } else {
                base * (j as f64 - n as f64)
            }
        })
        .collect()
}

/// Applies a per-mode multiplier along one axis, in place.
/// The 1/n inverse-transform normalization is folded into the multiplier.
fn apply_multiplier(
    data: &mut [Complex64],
    grid: &ConfigurationGrid,
    axis: usize,
    mult: &[Complex64],
) {
    let n = grid.axis(axis).n;
    let stride = grid.stride(axis);
    let block = n * stride;
    let (fwd, inv) = fft_pair(n);
    let scratch_len = fwd
        .get_inplace_scratch_len()
        .max(inv.get_inplace_scratch_len());
    let mut line = vec![Complex64::default(); n];
    let mut scratch = vec![Complex64::default(); scratch_len];
    let mut base0 = 0;
    while base0 < data.len() {
        for off in 0..stride {
            let base = base0 + off;
            for t in 0..n {
                line[t] = data[base + t * stride];
            }
            fwd.process_with_scratch(&mut line, &mut scratch);
            for t in 0..n {
                line[t] *= mult[t];
            }
            inv.process_with_scratch(&mut line, &mut scratch);
            for t in 0..n {
                data[base + t * stride] = line[t];
            }
        }
        base0 += block;
    }
}

fn first_derivative_multiplier(grid: &ConfigurationGrid, axis: usize) -> Vec<Complex64> {
    let ax = grid.axis(axis);
    let inv_n = 1.0 / ax.n as f64;
    wavenumbers(ax.n, ax.length())
        .into_iter()
        .map(|k| Complex64::new(0.0, k * inv_n))
        .collect()
}

fn laplacian_multiplier(grid: &ConfigurationGrid, axis: usize) -> Vec<Complex64> {
    let ax = grid.axis(axis);
    let inv_n = 1.0 / ax.n as f64;
    wavenumbers(ax.n, ax.length())
        .into_iter()
        .map(|k| Complex64::new(-k * k * inv_n, 0.0))
        .collect()
}

fn to_complex(field: &ScalarField) -> Vec<Complex64> {
    field
        .data()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect()
}

fn real_part(grid: &Arc<ConfigurationGrid>, data: Vec<Complex64>) -> ScalarField {
    let mut out = ScalarField::zeros(grid.clone());
    for (o, z) in out.data_mut().iter_mut().zip(&data) {
        *o = z.re;
    }
    out
}

/// Nyquist-zeroed first-derivative wavenumbers of one axis; the same table
/// the derivative multipliers use, exposed for kinetic phase construction.
pub fn axis_wavenumbers(grid: &ConfigurationGrid, axis: usize) -> Vec<f64> {
    let ax = grid.axis(axis);
    wavenumbers(ax.n, ax.length())
}

/// Applies a caller-supplied per-mode multiplier along one axis of a complex
/// field, in place. The caller must fold the 1/n inverse-transform
/// normalization into `mult`; the split-operator kinetic step uses this with
/// unitary phases.
pub fn apply_mode_multiplier(
    field: &mut ComplexField,
    axis: usize,
    mult: &[Complex64],
) -> Result<()> {
    let grid = field.grid().clone();
    if mult.len() != grid.axis(axis).n {
        return Err(QhdError::AxisMismatch(format!(
            "{} multipliers for an axis of {} points",
            mult.len(),
            grid.axis(axis).n
        )));
    }
    apply_multiplier(field.data_mut(), &grid, axis, mult);
    Ok(())
}

/// ∂f/∂q_axis of a real field along one axis.
pub fn derivative_axis(field: &ScalarField, axis: usize) -> ScalarField {
    let grid = field.grid();
    let mut data = to_complex(field);
    apply_multiplier(
        &mut data,
        grid,
        axis,
        &first_derivative_multiplier(grid, axis),
    );
    real_part(grid, data)
}

/// ∂²f/∂q_axis² of a real field along one axis (−k² multiplier).
pub fn laplacian_axis(field: &ScalarField, axis: usize) -> ScalarField {
    let grid = field.grid();
    let mut data = to_complex(field);
    apply_multiplier(&mut data, grid, axis, &laplacian_multiplier(grid, axis));
    real_part(grid, data)
}

/// ∂Ψ/∂q_axis of a complex field along one axis.
pub fn derivative_axis_complex(field: &ComplexField, axis: usize) -> ComplexField {
    let grid = field.grid();
    let mut data = field.data().to_vec();
    apply_multiplier(
        &mut data,
        grid,
        axis,
        &first_derivative_multiplier(grid, axis),
    );
    ComplexField::from_data(grid.clone(), data).expect("same length")
}

fn laplacian_axis_complex(field: &ComplexField, axis: usize) -> ComplexField {
    let grid = field.grid();
    let mut data = field.data().to_vec();
    apply_multiplier(&mut data, grid, axis, &laplacian_multiplier(grid, axis));
    ComplexField::from_data(grid.clone(), data).expect("same length")
}

/// ∇f relative to the target particle: the ν partials along its axes.
pub fn gradient(field: &ScalarField, target: ParticleIndex) -> Result<VectorField> {
    field.ensure_finite("gradient input")?;
    let axes = field.grid().particle_axes(target)?;
    VectorField::new(axes.map(|a| derivative_axis(field, a)).collect())
}

/// Δf relative to the target particle: Σ over its axes of ∂²/∂q².
pub fn laplacian(field: &ScalarField, target: ParticleIndex) -> Result<ScalarField> {
    field.ensure_finite("laplacian input")?;
    let axes = field.grid().particle_axes(target)?;
    let mut out = ScalarField::zeros(field.grid().clone());
    for a in axes {
        out.axpy(1.0, &laplacian_axis(field, a))?;
    }
    Ok(out)
}

/// ∇·v relative to the target particle: Σ_α ∂v_α/∂q_α over its axes.
pub fn divergence(field: &VectorField, target: ParticleIndex) -> Result<ScalarField> {
    let axes = field.grid().particle_axes(target)?;
    if axes.len() != field.nu() {
        return Err(QhdError::AxisMismatch(format!(
            "divergence: {} components for a particle with {} axes",
            field.nu(),
            axes.len()
        )));
    }
    for c in field.components() {
        c.ensure_finite("divergence input")?;
    }
    let mut out = ScalarField::zeros(field.grid().clone());
    for (c, a) in field.components().iter().zip(axes) {
        out.axpy(1.0, &derivative_axis(c, a))?;
    }
    Ok(out)
}

/// Per-axis ∂Ψ for the target particle.
pub fn gradient_complex(field: &ComplexField, target: ParticleIndex) -> Result<Vec<ComplexField>> {
    field.ensure_finite("gradient input")?;
    let axes = field.grid().particle_axes(target)?;
    Ok(axes.map(|a| derivative_axis_complex(field, a)).collect())
}

/// ΔΨ relative to the target particle.
pub fn laplacian_complex(field: &ComplexField, target: ParticleIndex) -> Result<ComplexField> {
    field.ensure_finite("laplacian input")?;
    let axes = field.grid().particle_axes(target)?;
    let grid = field.grid().clone();
    let mut out = ComplexField::zeros(grid);
    for a in axes {
        let term = laplacian_axis_complex(field, a);
        for (o, t) in out.data_mut().iter_mut().zip(term.data()) {
            *o += t;
        }
    }
    Ok(out)
}

/// ∇_q·v on a position grid (all axes belong to the single kept particle).
pub fn position_divergence(field: &VectorField) -> Result<ScalarField> {
    let grid = field.grid();
    if grid.d_tot() != field.nu() {
        return Err(QhdError::AxisMismatch(format!(
            "position divergence: {} components on a grid with {} axes",
            field.nu(),
            grid.d_tot()
        )));
    }
    divergence(field, ParticleIndex::new(0, 0))
}

/// Tensor divergence on a position grid: the vector with components
/// (∇_q·Π)_β = Σ_α ∂Π_{αβ}/∂q_α (contraction over the first index).
pub fn tensor_divergence(field: &Tensor2Field) -> Result<VectorField> {
    let grid = field.grid();
    let nu = field.nu();
    if grid.d_tot() != nu {
        return Err(QhdError::AxisMismatch(format!(
            "tensor divergence: {nu}×{nu} tensor on a grid with {} axes",
            grid.d_tot()
        )));
    }
    let mut comps = Vec::with_capacity(nu);
    for beta in 0..nu {
        let mut c = ScalarField::zeros(grid.clone());
        for alpha in 0..nu {
            field
                .at(alpha, beta)
                .ensure_finite("tensor divergence input")?;
            c.axpy(1.0, &derivative_axis(field.at(alpha, beta), alpha))?;
        }
        comps.push(c);
    }
    VectorField::new(comps)
}
