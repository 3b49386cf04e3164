//! Residual assembly for the derived balance equations, their algebraic
//! cross-checks, and convergence studies.
//!
//! For each sort (and the ensemble total) on its position grid, three
//! equations are quantified at an interior snapshot, all ∂_t by second-order
//! central differences on the stored cadence:
//!
//! * continuity   r_c  = ∂_t ρ_m + ∇_q·j_m
//! * momentum     r_E  = ∂_t j_m − f + ∇_q·Π            (Π = Π^cl + Π^qu)
//! * Cauchy       r_C  = ρ_m·D_t v − f + ∇_q·p          (D_t = ∂_t + v·∇)
//!
//! The Cauchy terms are evaluated through exact quotient-rule rewritings in
//! the conserved fields (v = j/ρ, p = Π − ρ·v⊗v):
//!
//!   ρ·∂_t v          = ∂_t j − v·∂_t ρ
//!   ρ·(v·∇)v_β       = Σ_α v_α·∂_α j_β − v_β·Σ_α v_α·∂_α ρ
//!   (∇·p)_β          = (∇·Π)_β − v_β·(∇·j) − ρ·(v·∇)v_β
//!
//! so that r_C = r_E − v·r_c holds term by term with shared arrays. The
//! reported equivalence residual measures exactly that identity; it is pure
//! floating-point reassociation and must sit at machine level on every
//! scenario, which pins the v and p definitions to the equation set.
//! Summing the linear equations (continuity, momentum) over sorts must
//! reproduce the total-ensemble residuals to rounding; the Cauchy equation
//! is quadratic in the fields and must not, which `nonlinearity_demo`
//! quantifies.
//!
//! Relative norms divide by the largest constituent-term norm. When every
//! term of an equation is at numerical floor (a stationary state), that
//! denominator would measure roundoff against roundoff, so it is floored at
//! [`RESOLVABLE_VARIATION_FLOOR`]·‖ρ‖/Δt: the scale at which the conserved
//! field would show resolvable variation across one snapshot interval. The
//! raw l2 and per-point rms stay available for absolute criteria.

use serde::{Deserialize, Serialize};

use crate::bohm::{
    bm_continuity_residual, density, eulerian_residual, node_mask,
    quantum_potential_amplitude_form, quantum_potential_density_form, snapshot_spacing,
    ResidualNorm, COMPARISON_MASK_FACTOR, NODE_MASK_FACTOR,
};
use crate::lattice::{
    derivative_axis, position_divergence, tensor_divergence, ComplexField, MaskField,
    ParticleIndex, ScalarField, VectorField,
};
use crate::model::PotentialSpec;
use crate::mpqhd::{compute_all_sorts, mass_fields, totals, MpqhdFieldSet, MpqhdTotals};
use crate::propagator::WavefunctionSnapshot;
use crate::{QhdError, Result};

/// Denominator floor factor: a relative norm never divides by less than this
/// fraction of ‖conserved field‖/Δt.
pub const RESOLVABLE_VARIATION_FLOOR: f64 = 1e-9;

/// One row of the machine-readable report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub scenario: String,
    pub equation: String,
    pub sort: String,
    pub resolution: String,
    pub norm: f64,
    pub denominator: f64,
    pub coverage: f64,
    pub order: Option<f64>,
}

/// Pass thresholds per equation, overridable from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub continuity_relative: f64,
    pub eulerian_relative: f64,
    pub ehrenfest_relative: f64,
    pub cauchy_relative: f64,
    pub equivalence_relative: f64,
    pub force_identity_relative: f64,
    pub vqu_agreement_relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            continuity_relative: 1e-5,
            eulerian_relative: 1e-4,
            ehrenfest_relative: 1e-4,
            cauchy_relative: 1e-4,
            equivalence_relative: 1e-10,
            force_identity_relative: 1e-5,
            vqu_agreement_relative: 1e-8,
        }
    }
}

impl Tolerances {
    /// Pass limit for an equation name; `None` for purely informational rows.
    pub fn limit_for(&self, equation: &str) -> Option<f64> {
        match equation {
            "bm_continuity" | "mpqhd_continuity" => Some(self.continuity_relative),
            "bm_eulerian" => Some(self.eulerian_relative),
            "ehrenfest" => Some(self.ehrenfest_relative),
            "cauchy" => Some(self.cauchy_relative),
            "cauchy_equivalence" => Some(self.equivalence_relative),
            "force_identity" => Some(self.force_identity_relative),
            "vqu_agreement" => Some(self.vqu_agreement_relative),
            _ => None,
        }
    }

    /// Entries whose norm exceeds their equation's limit. A NaN norm counts
    /// as a violation, hence the negated comparison.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn violations<'a>(&self, entries: &'a [ReportEntry]) -> Vec<&'a ReportEntry> {
        entries
            .iter()
            .filter(|e| {
                self.limit_for(&e.equation)
                    .is_some_and(|lim| !(e.norm <= lim))
            })
            .collect()
    }
}

/// The three balance residuals of one sort (or the total) at one snapshot.
pub struct BalanceResiduals {
    pub label: String,
    /// Velocity mask at the center snapshot; Cauchy terms are zero on it.
    pub mask: MaskField,
    pub velocity: VectorField,
    pub continuity: ScalarField,
    pub continuity_norm: ResidualNorm,
    /// rms of ∂_t ρ alone (stationary absolute checks).
    pub density_rate_rms: f64,
    /// rms of ∇·j alone.
    pub current_divergence_rms: f64,
    pub ehrenfest: VectorField,
    pub ehrenfest_norm: ResidualNorm,
    /// rms of ∂_t j alone.
    pub momentum_rate_rms: f64,
    /// ‖f − ∇·Π‖ against max(‖f‖, ‖∇·Π‖): the static part of the momentum
    /// balance, the meaningful relative check for stationary states.
    pub force_flux: ResidualNorm,
    pub cauchy: VectorField,
    pub cauchy_norm: ResidualNorm,
    /// ρ·D_t v: the material-derivative side, summed per sort by
    /// `nonlinearity_demo`.
    pub cauchy_lhs: VectorField,
    /// ‖r_C − (r_E − v·r_c)‖ against the shared term scale.
    pub equivalence: ResidualNorm,
}

/// Balance residuals of every sort plus the total, with the linearity gaps.
pub struct BalanceReport {
    pub t: f64,
    pub dt: f64,
    pub per_sort: Vec<BalanceResiduals>,
    pub total: BalanceResiduals,
    /// ‖Σ_A r_c^A − r_c^tot‖ / continuity term scale; rounding-level because
    /// the equation is linear in the fields.
    pub continuity_linearity: f64,
    /// Same gap for the momentum equation.
    pub ehrenfest_linearity: f64,
    /// Full center-snapshot field sets, for downstream force-identity checks.
    pub sets: Vec<MpqhdFieldSet>,
    pub total_fields: MpqhdTotals,
}

fn check_interior(series: &[WavefunctionSnapshot], idx: usize) -> Result<()> {
    if series.len() < 3 || idx == 0 || idx + 1 >= series.len() {
        return Err(QhdError::InvalidGrid(format!(
            "central difference needs an interior snapshot, got index {idx} of {}",
            series.len()
        )));
    }
    Ok(())
}

struct HydroView<'a> {
    label: &'a str,
    rho: &'a ScalarField,
    j: &'a VectorField,
    v: &'a VectorField,
    mask: &'a MaskField,
    pi: &'a crate::lattice::Tensor2Field,
    f: &'a VectorField,
}

impl<'a> HydroView<'a> {
    fn of_sort(set: &'a MpqhdFieldSet) -> Self {
        Self {
            label: &set.label,
            rho: &set.mass_density,
            j: &set.mass_current,
            v: &set.velocity,
            mask: &set.velocity_mask,
            pi: &set.momentum_flow,
            f: &set.force_density,
        }
    }

    fn of_total(t: &'a MpqhdTotals) -> Self {
        Self {
            label: "total",
            rho: &t.mass_density,
            j: &t.mass_current,
            v: &t.velocity,
            mask: &t.velocity_mask,
            pi: &t.momentum_flow,
            f: &t.force_density,
        }
    }
}

fn central_scalar(minus: &ScalarField, plus: &ScalarField, dt: f64) -> Result<ScalarField> {
    plus.zip_with(minus, |p, m| (p - m) / (2.0 * dt))
}

fn central_vector(minus: &VectorField, plus: &VectorField, dt: f64) -> Result<VectorField> {
    let comps = (0..plus.nu())
        .map(|c| central_scalar(minus.component(c), plus.component(c), dt))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps)
}

fn rms(l2: f64, points: usize) -> f64 {
    if points == 0 {
        0.0
    } else {
        l2 / (points as f64).sqrt()
    }
}

fn assemble(
    minus: &(ScalarField, VectorField),
    view: HydroView<'_>,
    plus: &(ScalarField, VectorField),
    dt: f64,
) -> Result<BalanceResiduals> {
    let grid = view.rho.grid().clone();
    let npoints = grid.len();
    let nu = view.j.nu();
    let no_mask = MaskField::none(grid.clone());
    let mask = view.mask;

    // continuity
    let dt_rho = central_scalar(&minus.0, &plus.0, dt)?;
    let divj = position_divergence(view.j)?;
    let continuity = dt_rho.zip_with(&divj, |a, b| a + b)?;
    let raw_den = dt_rho.l2_masked(None).max(divj.l2_masked(None));
    let floor = RESOLVABLE_VARIATION_FLOOR * view.rho.l2_masked(None) / dt;
    let (den_c, kind_c) = if raw_den >= floor {
        (raw_den, "max(|dt_mass_density|, |div_mass_current|)")
    } else {
        (floor, "resolvable-variation floor |mass_density|/dt x 1e-9")
    };
    let continuity_norm = ResidualNorm::new(continuity.l2_masked(None), den_c, kind_c, &no_mask);
    let density_rate_rms = rms(dt_rho.l2_masked(None), npoints);
    let current_divergence_rms = rms(divj.l2_masked(None), npoints);

    // momentum balance
    let dt_j = central_vector(&minus.1, &plus.1, dt)?;
    let div_pi = tensor_divergence(view.pi)?;
    let mut ehrenfest = dt_j.clone();
    ehrenfest.axpy(-1.0, view.f)?;
    ehrenfest.axpy(1.0, &div_pi)?;
    let den_terms = [
        dt_j.l2_masked(None),
        view.f.l2_masked(None),
        div_pi.l2_masked(None),
    ];
    let den_e = den_terms.iter().fold(0.0_f64, |a, &b| a.max(b));
    let ehrenfest_norm = ResidualNorm::new(
        ehrenfest.l2_masked(None),
        den_e,
        "max(|dt_mass_current|, |force_density|, |div_momentum_flow|)",
        &no_mask,
    );
    let momentum_rate_rms = rms(dt_j.l2_masked(None), npoints);
    let mut flux = view.f.clone();
    flux.axpy(-1.0, &div_pi)?;
    let force_flux = ResidualNorm::new(
        flux.l2_masked(None),
        view.f.l2_masked(None).max(div_pi.l2_masked(None)),
        "max(|force_density|, |div_momentum_flow|)",
        &no_mask,
    );

    // Cauchy, through the quotient-rule primitives; masked points carry 0.
    let grad_rho: Vec<ScalarField> = (0..nu).map(|a| derivative_axis(view.rho, a)).collect();
    let mut rho_dt_v = VectorField::zeros(grid.clone(), nu);
    let mut convection = VectorField::zeros(grid.clone(), nu);
    let mut div_p = VectorField::zeros(grid.clone(), nu);
    let mut cauchy = VectorField::zeros(grid.clone(), nu);
    let mut equivalence_field = VectorField::zeros(grid.clone(), nu);
    let mut f_masked = VectorField::zeros(grid.clone(), nu);

    // v·∇ρ, shared between the convection and pressure terms
    let mut v_dot_grad_rho = vec![0.0_f64; npoints];
    for (a, grad_rho_a) in grad_rho.iter().enumerate() {
        let va = view.v.component(a);
        for (acc, (x, g)) in v_dot_grad_rho
            .iter_mut()
            .zip(va.data().iter().zip(grad_rho_a.data()))
        {
            *acc += x * g;
        }
    }

    for beta in 0..nu {
        let grad_j_beta: Vec<ScalarField> = (0..nu)
            .map(|a| derivative_axis(view.j.component(beta), a))
            .collect();
        let vb = view.v.component(beta).data();
        let dtj = dt_j.component(beta).data();
        let dpi = div_pi.component(beta).data();
        let fb = view.f.component(beta).data();
        for idx in 0..npoints {
            if mask.is_masked(idx) {
                continue;
            }
            let mut s1 = 0.0;
            for (a, gj) in grad_j_beta.iter().enumerate() {
                s1 += view.v.component(a).data()[idx] * gj.data()[idx];
            }
            let s2 = vb[idx] * v_dot_grad_rho[idx];
            let conv = s1 - s2;
            let lhs_t = dtj[idx] - vb[idx] * dt_rho.data()[idx];
            let dp = dpi[idx] - vb[idx] * divj.data()[idx] - conv;
            let r_c = lhs_t + conv - fb[idx] + dp;
            rho_dt_v.component_mut(beta).data_mut()[idx] = lhs_t;
            convection.component_mut(beta).data_mut()[idx] = conv;
            div_p.component_mut(beta).data_mut()[idx] = dp;
            cauchy.component_mut(beta).data_mut()[idx] = r_c;
            f_masked.component_mut(beta).data_mut()[idx] = fb[idx];
            let r_e = dtj[idx] - fb[idx] + dpi[idx];
            let r_cont = dt_rho.data()[idx] + divj.data()[idx];
            equivalence_field.component_mut(beta).data_mut()[idx] = r_c - (r_e - vb[idx] * r_cont);
        }
    }

    let den_cauchy_terms = [
        rho_dt_v.l2_masked(Some(mask)),
        convection.l2_masked(Some(mask)),
        f_masked.l2_masked(Some(mask)),
        div_p.l2_masked(Some(mask)),
    ];
    let den_cauchy = den_cauchy_terms.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cauchy_norm = ResidualNorm::new(
        cauchy.l2_masked(Some(mask)),
        den_cauchy,
        "max(|rho dt_v|, |convection|, |force_density|, |div_pressure|)",
        mask,
    );
    let mut cauchy_lhs = rho_dt_v.clone();
    cauchy_lhs.axpy(1.0, &convection)?;
    let equivalence = ResidualNorm::new(
        equivalence_field.l2_masked(Some(mask)),
        den_e.max(den_cauchy),
        "max(momentum-balance terms, Cauchy terms)",
        mask,
    );

    Ok(BalanceResiduals {
        label: view.label.to_string(),
        mask: mask.clone(),
        velocity: view.v.clone(),
        continuity,
        continuity_norm,
        density_rate_rms,
        current_divergence_rms,
        ehrenfest,
        ehrenfest_norm,
        momentum_rate_rms,
        force_flux,
        cauchy,
        cauchy_norm,
        cauchy_lhs,
        equivalence,
    })
}

fn summed_mass_fields(parts: &[(ScalarField, VectorField)]) -> Result<(ScalarField, VectorField)> {
    let (first_rho, first_j) = parts
        .first()
        .ok_or_else(|| QhdError::AxisMismatch("totals need at least one sort".into()))?;
    let grid = first_rho.grid().clone();
    let nu = first_j.nu();
    let mut rho = ScalarField::zeros(grid.clone());
    let mut j = VectorField::zeros(grid, nu);
    for (part_rho, part_j) in parts {
        if !rho.grid().same_axes(part_rho.grid()) {
            return Err(QhdError::AxisMismatch(
                "sorts live on different position grids; totals need one shared box".into(),
            ));
        }
        for (to, &from) in rho.data_mut().iter_mut().zip(part_rho.data()) {
            *to += from;
        }
        for c in 0..nu {
            for (to, &from) in j
                .component_mut(c)
                .data_mut()
                .iter_mut()
                .zip(part_j.component(c).data())
            {
                *to += from;
            }
        }
    }
    Ok((rho, j))
}

fn linearity_gap_scalar(per_sort: &[&ScalarField], total: &ScalarField, scale: f64) -> f64 {
    let mut gap = 0.0_f64;
    for idx in 0..total.data().len() {
        let sum: f64 = per_sort.iter().map(|f| f.data()[idx]).sum();
        gap += (sum - total.data()[idx]).powi(2);
    }
    let gap = gap.sqrt();
    if scale > 0.0 {
        gap / scale
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn linearity_gap_vector(per_sort: &[&VectorField], total: &VectorField, scale: f64) -> f64 {
    let mut gap = 0.0_f64;
    for c in 0..total.nu() {
        for idx in 0..total.component(c).data().len() {
            let sum: f64 = per_sort.iter().map(|f| f.component(c).data()[idx]).sum();
            gap += (sum - total.component(c).data()[idx]).powi(2);
        }
    }
    let gap = gap.sqrt();
    if scale > 0.0 {
        gap / scale
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Computes continuity, momentum-balance, and Cauchy residuals for every sort
/// and the total at interior snapshot `idx`.
pub fn balance_residuals(
    series: &[WavefunctionSnapshot],
    idx: usize,
    potential: &PotentialSpec,
    hbar: f64,
) -> Result<BalanceReport> {
    check_interior(series, idx)?;
    let dt = snapshot_spacing(series)?;
    let t = series[idx].t;
    let n_sorts = series[idx].psi.grid().sorts().len();

    let sets = compute_all_sorts(&series[idx].psi, potential, hbar, t)?;
    let total_fields = totals(&sets)?;

    let at = |snap: &WavefunctionSnapshot| -> Result<Vec<(ScalarField, VectorField)>> {
        (0..n_sorts)
            .map(|s| mass_fields(&snap.psi, s, hbar))
            .collect()
    };
    let minus = at(&series[idx - 1])?;
    let plus = at(&series[idx + 1])?;
    let minus_total = summed_mass_fields(&minus)?;
    let plus_total = summed_mass_fields(&plus)?;

    let per_sort = sets
        .iter()
        .enumerate()
        .map(|(s, set)| assemble(&minus[s], HydroView::of_sort(set), &plus[s], dt))
        .collect::<Result<Vec<_>>>()?;
    let total = assemble(
        &minus_total,
        HydroView::of_total(&total_fields),
        &plus_total,
        dt,
    )?;

    let continuity_linearity = linearity_gap_scalar(
        &per_sort.iter().map(|r| &r.continuity).collect::<Vec<_>>(),
        &total.continuity,
        total.continuity_norm.denominator,
    );
    let ehrenfest_linearity = linearity_gap_vector(
        &per_sort.iter().map(|r| &r.ehrenfest).collect::<Vec<_>>(),
        &total.ehrenfest,
        total.ehrenfest_norm.denominator,
    );

    Ok(BalanceReport {
        t,
        dt,
        per_sort,
        total,
        continuity_linearity,
        ehrenfest_linearity,
        sets,
        total_fields,
    })
}

/// Residual of the standing identity f_qu = −∇_q·Π^qu for one sort.
pub fn quantum_force_identity(set: &MpqhdFieldSet) -> Result<(VectorField, ResidualNorm)> {
    let mut residual = set.quantum_force_density.clone();
    residual.axpy(-1.0, &set.quantum_force_divergence_form)?;
    let den = set
        .quantum_force_density
        .l2_masked(None)
        .max(set.quantum_force_divergence_form.l2_masked(None));
    let norm = ResidualNorm::new(
        residual.l2_masked(None),
        den,
        "max(|quantum_force direct|, |div momentum_flow_quantum|)",
        &MaskField::none(set.mass_density.grid().clone()),
    );
    Ok((residual, norm))
}

/// Worst-case agreement of the two quantum-potential pipelines off the
/// comparison mask, measured against the field's own scale.
pub struct AgreementReport {
    pub max_relative: f64,
    /// max |V_qu| off-mask, the scale the differences are measured against.
    pub scale: f64,
    pub coverage: f64,
}

/// Compares the density-form and amplitude-form quantum potentials pointwise.
pub fn vqu_forms_agreement(psi: &ComplexField, hbar: f64) -> Result<AgreementReport> {
    let d = density(psi);
    let mask = node_mask(&d, COMPARISON_MASK_FACTOR);
    let from_density = quantum_potential_density_form(&d, hbar, &mask)?;
    let from_amplitude = quantum_potential_amplitude_form(psi, hbar, &mask)?;
    // Both fields are zeroed on the mask, so the global max is the off-mask max.
    let scale = from_amplitude.max_abs();
    let mut worst = 0.0_f64;
    for idx in 0..d.data().len() {
        if mask.is_masked(idx) {
            continue;
        }
        worst = worst.max((from_density.data()[idx] - from_amplitude.data()[idx]).abs());
    }
    let max_relative = if scale > 0.0 {
        worst / scale
    } else if worst == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(AgreementReport {
        max_relative,
        scale,
        coverage: mask.coverage_percent(),
    })
}

/// Outcome of summing per-sort equations against the total-ensemble ones.
pub struct NonlinearityDemo {
    /// ‖Σ_A ρ^A D_t v^A − ρ^tot D_t v^tot‖ on the common support.
    pub cauchy_gap: f64,
    /// ‖r_C^tot‖ on the same support; the gap must dwarf it.
    pub cauchy_residual: f64,
    /// cauchy_gap / cauchy_residual.
    pub ratio: f64,
    /// Linearity gap of the momentum equation (machine-level).
    pub ehrenfest_linearity: f64,
    /// max |v^A − v^tot| relative to the largest velocity.
    pub velocity_spread: f64,
    /// False when the sorts share one velocity field (the comparison cannot
    /// distinguish the equations) or only one sort exists.
    pub conclusive: bool,
}

/// Quantifies that the Cauchy equation does not superpose over sorts while
/// the momentum balance does.
pub fn nonlinearity_demo(report: &BalanceReport) -> NonlinearityDemo {
    let total = &report.total;
    let npoints = total.cauchy.component(0).data().len();
    let nu = total.cauchy.nu();

    // Common support: off every sort's mask and off the total mask.
    let mut open = vec![true; npoints];
    for (idx, flag) in open.iter_mut().enumerate() {
        if total.mask.is_masked(idx) {
            *flag = false;
        }
    }
    for sort in &report.per_sort {
        for (idx, flag) in open.iter_mut().enumerate() {
            if sort.mask.is_masked(idx) {
                *flag = false;
            }
        }
    }

    let mut gap_sq = 0.0_f64;
    let mut residual_sq = 0.0_f64;
    for beta in 0..nu {
        for (idx, &open_here) in open.iter().enumerate() {
            if !open_here {
                continue;
            }
            let sum: f64 = report
                .per_sort
                .iter()
                .map(|s| s.cauchy_lhs.component(beta).data()[idx])
                .sum();
            gap_sq += (sum - total.cauchy_lhs.component(beta).data()[idx]).powi(2);
            residual_sq += total.cauchy.component(beta).data()[idx].powi(2);
        }
    }
    let cauchy_gap = gap_sq.sqrt();
    let cauchy_residual = residual_sq.sqrt();
    let ratio = if cauchy_residual > 0.0 {
        cauchy_gap / cauchy_residual
    } else if cauchy_gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };

    let mut vmax = total.velocity.max_abs();
    for s in &report.per_sort {
        vmax = vmax.max(s.velocity.max_abs());
    }
    let mut spread = 0.0_f64;
    for sort in &report.per_sort {
        for beta in 0..nu {
            for (idx, &open_here) in open.iter().enumerate() {
                if !open_here {
                    continue;
                }
                let dv = sort.velocity.component(beta).data()[idx]
                    - total.velocity.component(beta).data()[idx];
                spread = spread.max(dv.abs());
            }
        }
    }
    let velocity_spread = if vmax > 0.0 { spread / vmax } else { 0.0 };
    let conclusive = report.per_sort.len() >= 2 && velocity_spread > 1e-3;

    NonlinearityDemo {
        cauchy_gap,
        cauchy_residual,
        ratio,
        ehrenfest_linearity: report.ehrenfest_linearity,
        velocity_spread,
        conclusive,
    }
}

/// Three snapshots around `center` at `stride` stored intervals apart; the
/// subseries a coarser-cadence residual is evaluated on.
pub fn strided_triplet(
    series: &[WavefunctionSnapshot],
    center: usize,
    stride: usize,
) -> Result<Vec<WavefunctionSnapshot>> {
    if stride == 0 || center < stride || center + stride >= series.len() {
        return Err(QhdError::InvalidGrid(format!(
            "stride {stride} around snapshot {center} leaves the series of length {}",
            series.len()
        )));
    }
    Ok(vec![
        series[center - stride].clone(),
        series[center].clone(),
        series[center + stride].clone(),
    ])
}

/// One resolution of a convergence study.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergencePoint {
    /// The refined quantity (Δt or Δx); smaller is finer.
    pub knob: f64,
    pub norm: f64,
    pub resolution: String,
}

/// Residual norms over resolutions with a fitted order.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    /// Sorted coarse to fine.
    pub points: Vec<ConvergencePoint>,
    /// Least-squares slope of log norm against log knob; `None` when the
    /// norms lack the dynamic range to distinguish an order from the
    /// roundoff floor (all at floor: a stationary state).
    pub fitted_order: Option<f64>,
    /// Whether norms decrease monotonically toward fine resolutions;
    /// flagged, not fatal.
    pub monotone: bool,
}

/// Fits a convergence order to residual norms at ≥3 resolutions.
pub fn fit_convergence(mut points: Vec<ConvergencePoint>) -> Result<ConvergenceTable> {
    if points.len() < 3 {
        return Err(QhdError::Config {
            field: "convergence.resolutions".into(),
            message: format!("need at least 3 resolutions, got {}", points.len()),
        });
    }
    points.sort_by(|a, b| b.knob.total_cmp(&a.knob));
    let monotone = points.windows(2).all(|w| w[1].norm <= w[0].norm);
    let max_norm = points.iter().fold(0.0_f64, |a, p| a.max(p.norm));
    let min_norm = points.iter().fold(f64::INFINITY, |a, p| a.min(p.norm));
    let usable = points.iter().all(|p| p.norm > 0.0 && p.knob > 0.0) && max_norm > 1.5 * min_norm;
    let fitted_order = if usable {
        let xs: Vec<f64> = points.iter().map(|p| p.knob.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.norm.ln()).collect();
        let n = xs.len() as f64;
        let xm = xs.iter().sum::<f64>() / n;
        let ym = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let var: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
        Some(cov / var)
    } else {
        None
    };
    Ok(ConvergenceTable {
        points,
        fitted_order,
        monotone,
    })
}

fn entry(
    scenario: &str,
    equation: &str,
    sort: &str,
    resolution: &str,
    norm: &ResidualNorm,
) -> ReportEntry {
    ReportEntry {
        scenario: scenario.to_string(),
        equation: equation.to_string(),
        sort: sort.to_string(),
        resolution: resolution.to_string(),
        norm: norm.relative(),
        denominator: norm.denominator,
        coverage: norm.coverage_percent,
        order: None,
    }
}

/// Report rows for one balance report: continuity, momentum balance, Cauchy,
/// and the equivalence identity, per sort and for the total.
pub fn entries_for_balance(
    scenario: &str,
    resolution: &str,
    report: &BalanceReport,
) -> Vec<ReportEntry> {
    let mut out = Vec::new();
    let mut push = |r: &BalanceResiduals| {
        out.push(entry(
            scenario,
            "mpqhd_continuity",
            &r.label,
            resolution,
            &r.continuity_norm,
        ));
        out.push(entry(
            scenario,
            "ehrenfest",
            &r.label,
            resolution,
            &r.ehrenfest_norm,
        ));
        out.push(entry(
            scenario,
            "cauchy",
            &r.label,
            resolution,
            &r.cauchy_norm,
        ));
        out.push(entry(
            scenario,
            "cauchy_equivalence",
            &r.label,
            resolution,
            &r.equivalence,
        ));
    };
    for r in &report.per_sort {
        push(r);
    }
    push(&report.total);
    out
}

/// Report rows for the quantum-force identity of each sort.
pub fn entries_for_force_identity(
    scenario: &str,
    resolution: &str,
    sets: &[MpqhdFieldSet],
) -> Result<Vec<ReportEntry>> {
    sets.iter()
        .map(|set| {
            let (_, norm) = quantum_force_identity(set)?;
            Ok(entry(
                scenario,
                "force_identity",
                &set.label,
                resolution,
                &norm,
            ))
        })
        .collect()
}

/// Report row for the quantum-potential pipeline agreement (configuration
/// space, so the sort column reads `configuration`).
pub fn entry_for_vqu_agreement(
    scenario: &str,
    resolution: &str,
    psi: &ComplexField,
    hbar: f64,
) -> Result<ReportEntry> {
    let agreement = vqu_forms_agreement(psi, hbar)?;
    Ok(ReportEntry {
        scenario: scenario.to_string(),
        equation: "vqu_agreement".to_string(),
        sort: "configuration".to_string(),
        resolution: resolution.to_string(),
        norm: agreement.max_relative,
        denominator: agreement.scale,
        coverage: agreement.coverage,
        order: None,
    })
}

/// Report rows for the configuration-space equations: continuity of D and
/// the per-particle Eulerian motion.
pub fn entries_for_bm(
    scenario: &str,
    resolution: &str,
    series: &[WavefunctionSnapshot],
    idx: usize,
    potential: &PotentialSpec,
    hbar: f64,
) -> Result<Vec<ReportEntry>> {
    check_interior(series, idx)?;
    let dt = snapshot_spacing(series)?;
    let grid = series[idx].psi.grid().clone();
    let mut out = Vec::new();

    let (_, mut norm) = bm_continuity_residual(series, idx, hbar)?;
    let floor = RESOLVABLE_VARIATION_FLOOR * density(&series[idx].psi).l2_masked(None) / dt;
    if norm.denominator < floor {
        norm.denominator = floor;
        norm.denominator_kind = "resolvable-variation floor |density|/dt x 1e-9".into();
    }
    out.push(entry(
        scenario,
        "bm_continuity",
        "configuration",
        resolution,
        &norm,
    ));

    for sort in 0..grid.sorts().len() {
        let target = ParticleIndex::new(sort, 0);
        let e = eulerian_residual(series, idx, target, potential, hbar, NODE_MASK_FACTOR)?;
        out.push(entry(
            scenario,
            "bm_eulerian",
            &grid.sorts()[sort].label,
            resolution,
            &e.norm,
        ));
    }
    Ok(out)
}

/// Rows attached to one convergence table, the fitted order on every row.
pub fn entries_for_convergence(
    scenario: &str,
    equation: &str,
    sort: &str,
    table: &ConvergenceTable,
) -> Vec<ReportEntry> {
    table
        .points
        .iter()
        .map(|p| ReportEntry {
            scenario: scenario.to_string(),
            equation: equation.to_string(),
            sort: sort.to_string(),
            resolution: p.resolution.clone(),
            norm: p.norm,
            denominator: 0.0,
            coverage: 100.0,
            order: table.fitted_order,
        })
        .collect()
}

/// Deterministic report order: scenario, equation, sort, resolution.
pub fn sort_entries(entries: &mut [ReportEntry]) {
    entries.sort_by(|a, b| {
        (&a.scenario, &a.equation, &a.sort, &a.resolution).cmp(&(
            &b.scenario,
            &b.equation,
            &b.sort,
            &b.resolution,
        ))
    });
}

/// Machine-readable report; identical inputs produce identical bytes.
pub fn render_json(entries: &[ReportEntry]) -> String {
    let mut s = serde_json::to_string_pretty(entries).expect("report serialization is infallible");
    s.push('\n');
    s
}

/// Aligned human-readable table of the same rows.
pub fn render_table(entries: &[ReportEntry]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:<20} {:<14} {:<20} {:>12} {:>12} {:>9} {:>8}\n",
        "scenario", "equation", "sort", "resolution", "norm", "denominator", "coverage", "order"
    ));
    for e in entries {
        let order = e
            .order
            .map(|o| format!("{o:.2}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{:<24} {:<20} {:<14} {:<20} {:>12.4e} {:>12.4e} {:>8.1}% {:>8}\n",
            e.scenario, e.equation, e.sort, e.resolution, e.norm, e.denominator, e.coverage, order
        ));
    }
    out
}
