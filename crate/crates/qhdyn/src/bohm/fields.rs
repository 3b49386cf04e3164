//! Pointwise Bohmian fields derived from a configuration-space wavefunction.

use num_complex::Complex64;

use crate::lattice::{
    derivative_axis_complex, gradient, laplacian, laplacian_complex, ComplexField, MaskField,
    ParticleIndex, ScalarField, VectorField,
};
use crate::{QhdError, Result};

use super::NODE_MASK_FACTOR;

/// Probability density D = |Ψ|².
pub fn density(psi: &ComplexField) -> ScalarField {
    psi.abs_squared()
}

/// Mask of density nodes: points where D < factor·max(D).
pub fn node_mask(density: &ScalarField, factor: f64) -> MaskField {
    MaskField::below(density, factor * density.max())
}

/// Probability current of one particle, J_i^A = (ħ/m_A)·Im(Ψ̄·∂_i^A Ψ).
///
/// This form stays finite at nodes, unlike D·w with w = Im(∂Ψ/Ψ).
pub fn current(psi: &ComplexField, target: ParticleIndex, hbar: f64) -> Result<VectorField> {
    let grid = psi.grid().clone();
    let axes = grid.particle_axes(target)?;
    let mass = grid.sorts()[target.sort].mass;
    let nu = grid.spatial_dim();
    let mut out = VectorField::zeros(grid.clone(), nu);
    let scale = hbar / mass;
    for (component, axis) in axes.enumerate() {
        let dpsi = derivative_axis_complex(psi, axis);
        let comp = out.component_mut(component);
        for (value, (p, dp)) in comp
            .data_mut()
            .iter_mut()
            .zip(psi.data().iter().zip(dpsi.data().iter()))
        {
            *value = scale * (p.conj() * dp).im;
        }
    }
    Ok(out)
}

/// Flow velocity of one particle, w_i^A = J_i^A/D, zeroed on masked points.
pub fn velocity(
    psi: &ComplexField,
    target: ParticleIndex,
    hbar: f64,
    mask: &MaskField,
) -> Result<VectorField> {
    let j = current(psi, target, hbar)?;
    let d = density(psi);
    Ok(ratio_vector(j, &d, mask))
}

/// Osmotic velocity of one particle, d_i^A = −(ħ/2m_A)·∂_i^A D/D, zeroed on
/// masked points. Uses the exact product-rule identity ∂D = 2·Re(Ψ̄·∂Ψ).
pub fn osmotic_velocity(
    psi: &ComplexField,
    target: ParticleIndex,
    hbar: f64,
    mask: &MaskField,
) -> Result<VectorField> {
    let grid = psi.grid().clone();
    let axes = grid.particle_axes(target)?;
    let mass = grid.sorts()[target.sort].mass;
    let nu = grid.spatial_dim();
    let d = density(psi);
    let mut out = VectorField::zeros(grid.clone(), nu);
    let scale = -hbar / mass;
    for (component, axis) in axes.enumerate() {
        let dpsi = derivative_axis_complex(psi, axis);
        let comp = out.component_mut(component);
        for (idx, value) in comp.data_mut().iter_mut().enumerate() {
            if mask.is_masked(idx) {
                continue;
            }
            let num = (psi.data()[idx].conj() * dpsi.data()[idx]).re;
            *value = scale * num / d.data()[idx];
        }
    }
    Ok(out)
}

/// Quantum potential from the density,
/// V_qu = −Σ_A Σ_i (ħ²/4m_A)·[Δ_i^A D/D − (∂_i^A D)²/2D²],
/// zeroed on masked points.
pub fn quantum_potential_density_form(
    density: &ScalarField,
    hbar: f64,
    mask: &MaskField,
) -> Result<ScalarField> {
    let grid = density.grid().clone();
    let mut out = ScalarField::zeros(grid.clone());
    for target in grid.particles() {
        let mass = grid.sorts()[target.sort].mass;
        let lap = laplacian(density, target)?;
        let grad = gradient(density, target)?;
        let scale = -hbar * hbar / (4.0 * mass);
        for (idx, value) in out.data_mut().iter_mut().enumerate() {
            if mask.is_masked(idx) {
                continue;
            }
            let d = density.data()[idx];
            let mut grad_sq = 0.0;
            for component in 0..grad.nu() {
                let g = grad.component(component).data()[idx];
                grad_sq += g * g;
            }
            *value += scale * (lap.data()[idx] / d - grad_sq / (2.0 * d * d));
        }
    }
    Ok(out)
}

/// Quantum potential from the amplitude, V_qu = −Σ_A Σ_i (ħ²/2m_A)·Δ_i^A a/a,
/// zeroed on masked points.
///
/// The amplitude Laplacian is assembled from derivatives of the complex Ψ via
/// Δa/a = Re(ΔΨ/Ψ) + Σ_i (Im ∂_iΨ/Ψ)², which avoids differentiating the
/// kinked |Ψ| near nodes and shares no intermediate with the density form.
pub fn quantum_potential_amplitude_form(
    psi: &ComplexField,
    hbar: f64,
    mask: &MaskField,
) -> Result<ScalarField> {
    let grid = psi.grid().clone();
    let mut out = ScalarField::zeros(grid.clone());
    for target in grid.particles() {
        let mass = grid.sorts()[target.sort].mass;
        let lap = laplacian_complex(psi, target)?;
        let scale = -hbar * hbar / (2.0 * mass);
        for (idx, value) in out.data_mut().iter_mut().enumerate() {
            if mask.is_masked(idx) {
                continue;
            }
            *value += scale * (lap.data()[idx] / psi.data()[idx]).re;
        }
        for axis in grid.particle_axes(target)? {
            let dpsi = derivative_axis_complex(psi, axis);
            for (idx, value) in out.data_mut().iter_mut().enumerate() {
                if mask.is_masked(idx) {
                    continue;
                }
                let g = (dpsi.data()[idx] / psi.data()[idx]).im;
                *value += scale * g * g;
            }
        }
    }
    Ok(out)
}

/// Gradient of the quantum potential along one particle's axes, zeroed on
/// masked points.
///
/// Derivatives are taken on Ψ (which decays smoothly) and assembled by the
/// quotient rule; differentiating the masked ratio field V_qu spectrally
/// would smear the node spikes over the whole box. With G_γ = ∂_γΨ/Ψ and
/// L_P = Δ_PΨ/Ψ per particle P:
///
///   ∂_β Re L_P     = Re(∂_β(Δ_PΨ)/Ψ − L_P·G_β)
///   ∂_β (Im G_γ)²  = 2·Im G_γ·Im(∂_β∂_γΨ/Ψ − G_γ·G_β)
///   ∂_β V_qu = −Σ_P (ħ²/2m_P)·[∂_β Re L_P + Σ_{γ∈P} ∂_β (Im G_γ)²]
pub fn quantum_potential_gradient(
    psi: &ComplexField,
    target: ParticleIndex,
    hbar: f64,
    mask: &MaskField,
) -> Result<VectorField> {
    let grid = psi.grid().clone();
    let nu = grid.spatial_dim();
    let target_axes: Vec<usize> = grid.particle_axes(target)?.collect();
    let dpsi: Vec<ComplexField> = (0..grid.d_tot())
        .map(|axis| derivative_axis_complex(psi, axis))
        .collect();
    let mut out = VectorField::zeros(grid.clone(), nu);

    for particle in grid.particles() {
        let mass = grid.sorts()[particle.sort].mass;
        let scale = -hbar * hbar / (2.0 * mass);
        let lap = laplacian_complex(psi, particle)?;
        let particle_axes: Vec<usize> = grid.particle_axes(particle)?.collect();
        for (component, &beta) in target_axes.iter().enumerate() {
            let dlap = derivative_axis_complex(&lap, beta);
            let comp = out.component_mut(component);
            for (idx, value) in comp.data_mut().iter_mut().enumerate() {
                if mask.is_masked(idx) {
                    continue;
                }
                let inv = Complex64::new(1.0, 0.0) / psi.data()[idx];
                let g_beta = dpsi[beta].data()[idx] * inv;
                let l = lap.data()[idx] * inv;
                *value += scale * (dlap.data()[idx] * inv - l * g_beta).re;
            }
            for &gamma in &particle_axes {
                // ∂_β∂_γΨ, computed as ∂_γ applied to the stored ∂_βΨ.
                let ddpsi = derivative_axis_complex(&dpsi[beta], gamma);
                let comp = out.component_mut(component);
                for (idx, value) in comp.data_mut().iter_mut().enumerate() {
                    if mask.is_masked(idx) {
                        continue;
                    }
                    let inv = Complex64::new(1.0, 0.0) / psi.data()[idx];
                    let g_gamma = (dpsi[gamma].data()[idx] * inv).im;
                    let g_beta = dpsi[beta].data()[idx] * inv;
                    let cross = ddpsi.data()[idx] * inv - dpsi[gamma].data()[idx] * inv * g_beta;
                    *value += scale * 2.0 * g_gamma * cross.im;
                }
            }
        }
    }
    Ok(out)
}

fn ratio_vector(numerator: VectorField, density: &ScalarField, mask: &MaskField) -> VectorField {
    let mut out = numerator;
    for component in 0..out.nu() {
        let comp = out.component_mut(component);
        for (idx, value) in comp.data_mut().iter_mut().enumerate() {
            if mask.is_masked(idx) {
                *value = 0.0;
            } else {
                *value /= density.data()[idx];
            }
        }
    }
    out
}

/// All Bohmian fields of one wavefunction, with per-particle vectors indexed
/// in the grid's particle order.
pub struct BohmFields {
    pub density: ScalarField,
    pub mask: MaskField,
    pub mask_fraction: f64,
    pub currents: Vec<VectorField>,
    pub velocities: Vec<VectorField>,
    pub momenta: Vec<VectorField>,
    pub osmotic: Vec<VectorField>,
    pub quantum_potential: ScalarField,
    pub quantum_potential_amplitude: ScalarField,
}

impl BohmFields {
    /// Computes every field with the default node mask. Fails only on
    /// non-finite input or a wavefunction that is zero everywhere.
    pub fn compute(psi: &ComplexField, hbar: f64) -> Result<Self> {
        let grid = psi.grid().clone();
        let d = density(psi);
        if d.max() <= 0.0 {
            return Err(QhdError::NonFinite {
                context: "wavefunction is identically zero".into(),
            });
        }
        let mask = node_mask(&d, NODE_MASK_FACTOR);
        let mask_fraction = mask.masked_fraction();
        let mut currents = Vec::new();
        let mut velocities = Vec::new();
        let mut momenta = Vec::new();
        let mut osmotic = Vec::new();
        for target in grid.particles() {
            let mass = grid.sorts()[target.sort].mass;
            let j = current(psi, target, hbar)?;
            let w = velocity(psi, target, hbar, &mask)?;
            let mut p = w.clone();
            p.scale(mass);
            currents.push(j);
            velocities.push(w);
            momenta.push(p);
            osmotic.push(osmotic_velocity(psi, target, hbar, &mask)?);
        }
        let quantum_potential = quantum_potential_density_form(&d, hbar, &mask)?;
        let quantum_potential_amplitude = quantum_potential_amplitude_form(psi, hbar, &mask)?;
        quantum_potential.ensure_finite("quantum potential (density form)")?;
        quantum_potential_amplitude.ensure_finite("quantum potential (amplitude form)")?;
        Ok(Self {
            density: d,
            mask,
            mask_fraction,
            currents,
            velocities,
            momenta,
            osmotic,
            quantum_potential,
            quantum_potential_amplitude,
        })
    }

    /// True when more than a fifth of all points sit inside the node mask,
    /// which usually means the box is far too large for the state.
    pub fn mask_is_heavy(&self) -> bool {
        self.mask_fraction > 0.2
    }
}
