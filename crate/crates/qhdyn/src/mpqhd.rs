//! Many-particle quantum hydrodynamics: single-position-space fields per
//! particle sort, and their ensemble totals.
//!
//! Every quantity of a sort A lives on the ν-dimensional position grid and is
//! a reduction of a configuration-space integrand against δ(q − q_1^A); by
//! exchange symmetry within the sort, particle 1 stands for all of them.
//! With N = N(A), m = m_A:
//!
//! ```text
//! mass density      ρ_m^A = N·m·∫dQ δ·D
//! mass current      j_m^A = N·m·∫dQ δ·J_1^A
//! mean velocity     v^A = j_m^A/ρ_m^A (masked)
//! scalar pressure   P_A = −N·(ħ²/4m)·∫dQ δ·Δ_1^A D
//! momentum flow     Π^A = Π^A,cl + Π^A,qu with
//!                   Π^A,cl_{αβ} = N·m·∫dQ δ·J_α J_β/D
//!                   Π^A,qu_{αβ} = δ_{αβ}·P_A + N·(ħ²/4m)·∫dQ δ·∂_αD·∂_βD/D
//! force densities   f^A = N·∫dQ δ·D·(−∂_α V),
//!                   f_qu^A = N·∫dQ δ·D·(−∂_α V_qu), also as −∇_q·Π^A,qu
//! pressure tensor   p^A = Π^A − ρ_m^A·v^A⊗v^A
//! ```
//!
//! All integrands are node-safe forms (J, J⊗J/D and ∇D⊗∇D/D under the node
//! mask) so density zeros never produce 0·∞. The velocity/pressure formulas
//! are the unique choice making the single-sort Cauchy equation algebraically
//! equivalent to the Ehrenfest and continuity equations, which is how the
//! verification layer pins them.

use std::sync::Arc;

use crate::bohm::{current, density, node_mask, quantum_potential_gradient, NODE_MASK_FACTOR};
use crate::lattice::{
    gradient, laplacian, reduce_to_position, reduce_vector_to_position, tensor_divergence,
    ComplexField, ConfigurationGrid, MaskField, ParticleIndex, ScalarField, Tensor2Field,
    VectorField,
};
use crate::model::PotentialSpec;
use crate::{QhdError, Result};

/// Mask threshold for dividing by the reduced mass density, relative to its
/// maximum.
pub const DENSITY_MASK_FACTOR: f64 = 1e-10;

/// All hydrodynamic fields of one sort, on that sort's position grid.
pub struct MpqhdFieldSet {
    pub sort: usize,
    pub label: String,
    /// N(A)·m_A·reduce(D); integrates to N(A)·m_A.
    pub mass_density: ScalarField,
    pub mass_current: VectorField,
    /// j_m/ρ_m, zeroed where ρ_m is masked.
    pub velocity: VectorField,
    pub velocity_mask: MaskField,
    pub scalar_pressure: ScalarField,
    pub momentum_flow_classical: Tensor2Field,
    pub momentum_flow_quantum: Tensor2Field,
    pub momentum_flow: Tensor2Field,
    pub force_density: VectorField,
    /// Direct reduction of D·(−∇_1 V_qu).
    pub quantum_force_density: VectorField,
    /// −∇_q·Π^A,qu; agrees with the direct form (standing identity).
    pub quantum_force_divergence_form: VectorField,
    pub pressure_tensor: Tensor2Field,
}

/// Ensemble sums over sorts, on the shared position grid.
pub struct MpqhdTotals {
    pub mass_density: ScalarField,
    pub mass_current: VectorField,
    pub velocity: VectorField,
    pub velocity_mask: MaskField,
    pub momentum_flow: Tensor2Field,
    pub force_density: VectorField,
    pub pressure_tensor: Tensor2Field,
}

fn masked_ratio_vector(
    numerator: &VectorField,
    density: &ScalarField,
    mask: &MaskField,
) -> VectorField {
    let mut out = numerator.clone();
    for c in 0..out.nu() {
        let comp = out.component_mut(c);
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

fn pressure_from(
    momentum_flow: &Tensor2Field,
    mass_density: &ScalarField,
    velocity: &VectorField,
) -> Result<Tensor2Field> {
    let nu = momentum_flow.nu();
    let mut p = momentum_flow.clone();
    for alpha in 0..nu {
        for beta in 0..nu {
            let va = velocity.component(alpha);
            let vb = velocity.component(beta);
            let comp = p.at_mut(alpha, beta);
            for (idx, value) in comp.data_mut().iter_mut().enumerate() {
                *value -= mass_density.data()[idx] * va.data()[idx] * vb.data()[idx];
            }
        }
    }
    Ok(p)
}

/// Mass density and mass current of one sort: the cheap subset needed at the
/// neighbor snapshots of a central time difference.
pub fn mass_fields(
    psi: &ComplexField,
    sort: usize,
    hbar: f64,
) -> Result<(ScalarField, VectorField)> {
    let grid = psi.grid().clone();
    if sort >= grid.sorts().len() {
        return Err(QhdError::UnknownParticle { sort, index: 0 });
    }
    let spec = &grid.sorts()[sort];
    let scale = spec.count as f64 * spec.mass;
    let particle = ParticleIndex::new(sort, 0);
    let mut rho = reduce_to_position(&density(psi), particle)?;
    rho.scale(scale);
    let mut j = reduce_vector_to_position(&current(psi, particle, hbar)?, particle)?;
    j.scale(scale);
    Ok((rho, j))
}

/// Computes the full hydrodynamic field set of one sort from a wavefunction.
/// `t` enters only through the (possibly time-dependent) classical force.
pub fn compute_sort(
    psi: &ComplexField,
    potential: &PotentialSpec,
    hbar: f64,
    t: f64,
    sort: usize,
) -> Result<MpqhdFieldSet> {
    let grid = psi.grid().clone();
    if sort >= grid.sorts().len() {
        return Err(QhdError::UnknownParticle { sort, index: 0 });
    }
    let spec = &grid.sorts()[sort];
    let n_count = spec.count as f64;
    let mass = spec.mass;
    let particle = ParticleIndex::new(sort, 0);
    let nu = grid.spatial_dim();

    let d = density(psi);
    let config_mask = node_mask(&d, NODE_MASK_FACTOR);

    let mut mass_density = reduce_to_position(&d, particle)?;
    mass_density.scale(n_count * mass);

    let j_config = current(psi, particle, hbar)?;
    let mut mass_current = reduce_vector_to_position(&j_config, particle)?;
    mass_current.scale(n_count * mass);

    let velocity_mask = MaskField::below(&mass_density, DENSITY_MASK_FACTOR * mass_density.max());
    let velocity = masked_ratio_vector(&mass_current, &mass_density, &velocity_mask);

    let mut scalar_pressure = reduce_to_position(&laplacian(&d, particle)?, particle)?;
    scalar_pressure.scale(-n_count * hbar * hbar / (4.0 * mass));

    // Π^cl from the node-safe J⊗J/D integrand; symmetric by construction.
    let pos_grid = mass_density.grid().clone();
    let mut classical = Tensor2Field::zeros(pos_grid.clone(), nu);
    let mut quantum = Tensor2Field::zeros(pos_grid.clone(), nu);
    let grad_d = gradient(&d, particle)?;
    for alpha in 0..nu {
        for beta in alpha..nu {
            let mut cl_integrand = ScalarField::zeros(grid.clone());
            let mut qu_integrand = ScalarField::zeros(grid.clone());
            let ja = j_config.component(alpha);
            let jb = j_config.component(beta);
            let ga = grad_d.component(alpha);
            let gb = grad_d.component(beta);
            for idx in 0..grid.len() {
                if config_mask.is_masked(idx) {
                    continue;
                }
                let inv_d = 1.0 / d.data()[idx];
                cl_integrand.data_mut()[idx] = ja.data()[idx] * jb.data()[idx] * inv_d;
                qu_integrand.data_mut()[idx] = ga.data()[idx] * gb.data()[idx] * inv_d;
            }
            let mut cl = reduce_to_position(&cl_integrand, particle)?;
            cl.scale(n_count * mass);
            let mut qu = reduce_to_position(&qu_integrand, particle)?;
            qu.scale(n_count * hbar * hbar / (4.0 * mass));
            *classical.at_mut(alpha, beta) = cl.clone();
            *quantum.at_mut(alpha, beta) = qu.clone();
            if beta != alpha {
                *classical.at_mut(beta, alpha) = cl;
                *quantum.at_mut(beta, alpha) = qu;
            }
        }
    }
    for alpha in 0..nu {
        quantum.at_mut(alpha, alpha).axpy(1.0, &scalar_pressure)?;
    }
    let mut momentum_flow = classical.clone();
    momentum_flow.axpy(1.0, &quantum)?;

    // Classical force: analytic gradient, no mask needed (D supplies decay).
    let grad_v = potential.gradient(&grid, t, particle)?;
    let mut force_components = Vec::with_capacity(nu);
    for alpha in 0..nu {
        let integrand = d.zip_with(grad_v.component(alpha), |dd, g| -dd * g)?;
        let mut f = reduce_to_position(&integrand, particle)?;
        f.scale(n_count);
        force_components.push(f);
    }
    let force_density = VectorField::new(force_components)?;

    // Quantum force, direct form: the masked ∇V_qu is multiplied by D, so the
    // excluded sliver carries at most ~(mask factor)·max(D) of weight.
    let grad_vqu = quantum_potential_gradient(psi, particle, hbar, &config_mask)?;
    let mut qf_components = Vec::with_capacity(nu);
    for alpha in 0..nu {
        let integrand = d.zip_with(grad_vqu.component(alpha), |dd, g| -dd * g)?;
        let mut f = reduce_to_position(&integrand, particle)?;
        f.scale(n_count);
        qf_components.push(f);
    }
    let quantum_force_density = VectorField::new(qf_components)?;

    let mut quantum_force_divergence_form = tensor_divergence(&quantum)?;
    quantum_force_divergence_form.scale(-1.0);

    let pressure_tensor = pressure_from(&momentum_flow, &mass_density, &velocity)?;

    Ok(MpqhdFieldSet {
        sort,
        label: spec.label.clone(),
        mass_density,
        mass_current,
        velocity,
        velocity_mask,
        scalar_pressure,
        momentum_flow_classical: classical,
        momentum_flow_quantum: quantum,
        momentum_flow,
        force_density,
        quantum_force_density,
        quantum_force_divergence_form,
        pressure_tensor,
    })
}

/// Computes every sort's field set in the grid's sort order.
pub fn compute_all_sorts(
    psi: &ComplexField,
    potential: &PotentialSpec,
    hbar: f64,
    t: f64,
) -> Result<Vec<MpqhdFieldSet>> {
    (0..psi.grid().sorts().len())
        .map(|s| compute_sort(psi, potential, hbar, t, s))
        .collect()
}

/// Sums per-sort sets into ensemble totals. All sorts must share one box and
/// resolution; cross-sort sums are undefined otherwise.
pub fn totals(sets: &[MpqhdFieldSet]) -> Result<MpqhdTotals> {
    let first = sets
        .first()
        .ok_or_else(|| QhdError::AxisMismatch("totals need at least one sort".into()))?;
    let canon: Arc<ConfigurationGrid> = first.mass_density.grid().clone();
    let nu = first.mass_current.nu();

    let mut mass_density = ScalarField::zeros(canon.clone());
    let mut mass_current = VectorField::zeros(canon.clone(), nu);
    let mut momentum_flow = Tensor2Field::zeros(canon.clone(), nu);
    let mut force_density = VectorField::zeros(canon.clone(), nu);

    for set in sets {
        let g = set.mass_density.grid();
        if !canon.same_axes(g) {
            return Err(QhdError::AxisMismatch(format!(
                "sort `{}` lives on a different position grid; totals need one \
                 shared box and resolution",
                set.label
            )));
        }
        // Summation by raw data: the per-sort position grids differ in sort
        // metadata (label, mass) even when their axes agree.
        for (to, &from) in mass_density
            .data_mut()
            .iter_mut()
            .zip(set.mass_density.data())
        {
            *to += from;
        }
        for c in 0..nu {
            for (to, &from) in mass_current
                .component_mut(c)
                .data_mut()
                .iter_mut()
                .zip(set.mass_current.component(c).data())
            {
                *to += from;
            }
            for (to, &from) in force_density
                .component_mut(c)
                .data_mut()
                .iter_mut()
                .zip(set.force_density.component(c).data())
            {
                *to += from;
            }
        }
        for alpha in 0..nu {
            for beta in 0..nu {
                for (to, &from) in momentum_flow
                    .at_mut(alpha, beta)
                    .data_mut()
                    .iter_mut()
                    .zip(set.momentum_flow.at(alpha, beta).data())
                {
                    *to += from;
                }
            }
        }
    }

    let velocity_mask = MaskField::below(&mass_density, DENSITY_MASK_FACTOR * mass_density.max());
    let velocity = masked_ratio_vector(&mass_current, &mass_density, &velocity_mask);
    let pressure_tensor = pressure_from(&momentum_flow, &mass_density, &velocity)?;

    Ok(MpqhdTotals {
        mass_density,
        mass_current,
        velocity,
        velocity_mask,
        momentum_flow,
        force_density,
        pressure_tensor,
    })
}
