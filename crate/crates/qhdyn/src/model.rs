//! Physical description: particle sorts, the scalar potential V(Q, t) with
//! analytic per-particle gradients, and the scenario type tying sorts, grid,
//! potential, initial state and time grid together.
//!
//! Units are natural (ħ = m = 1 by default); every quantity is documented
//! with its dimension so SI scenarios can be configured by supplying ħ and
//! masses explicitly.
//!
//! Potentials are evaluated analytically, including their gradients. The
//! sampled potential is generally not box-periodic (harmonic and linear terms
//! jump at the wrap), so its spectral derivative would be polluted globally;
//! analytic gradients avoid that entirely and are cross-checked against
//! high-order interior finite differences in the tests.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QhdError, Result};
use crate::lattice::{AxisSpec, ConfigurationGrid, ParticleIndex, ScalarField, VectorField};

/// A species of indistinguishable particles: N(A) particles of mass m_A.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SortSpec {
    pub label: String,
    pub count: usize,
    /// Particle mass (mass units), m_A > 0.
    pub mass: f64,
}

impl SortSpec {
    pub fn new(label: &str, count: usize, mass: f64) -> Self {
        Self {
            label: label.to_string(),
            count,
            mass,
        }
    }

    /// Field-path-aware validation; `position` is the index in the sort list.
    pub fn validate(&self, position: usize) -> Result<()> {
        if self.label.is_empty() {
            return Err(QhdError::Config {
                field: format!("sorts[{position}].label"),
                message: "label must be non-empty".into(),
            });
        }
        if self.count == 0 {
            return Err(QhdError::Config {
                field: format!("sorts[{position}].count"),
                message: "particle count must be ≥ 1".into(),
            });
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(QhdError::Config {
                field: format!("sorts[{position}].mass"),
                message: format!("mass must be positive and finite, got {}", self.mass),
            });
        }
        Ok(())
    }
}

/// Time envelope of the uniform external field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// E(t) = amplitude (bitwise identical at every t).
    Constant,
    /// E(t) = amplitude·cos(omega·t + phase); the dipole-approximation laser.
    Sinusoid { omega: f64, phase: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Envelope::Constant => 1.0,
            Envelope::Sinusoid { omega, phase } => (omega * t + phase).cos(),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Envelope::Sinusoid { .. })
    }
}

/// Potential class admitting closed-form orbital evolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticClass<'a> {
    Free,
    Harmonic(&'a [f64]),
}

/// The scalar potential V(Q, t); composable as a sum of parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// V ≡ 0.
    Free,
    /// V = Σ_{A,i} m_A·ω_A²·|q_i^A|²/2 with one ω per sort. A per-particle ω
    /// would break exchange symmetry within a sort, so ω is per sort.
    Harmonic { omegas: Vec<f64> },
    /// V = Σ_{pairs} strength / sqrt(|q_i^A − q_j^B|² + softening²) over all
    /// unordered particle pairs (intra- and inter-sort). Bare Coulomb is not
    /// representable on a periodic grid, hence the softening.
    SoftCoulomb { strength: f64, softening: f64 },
    /// V = −Σ_{A,i} c_A·E(t)·q_i^A with per-sort coupling c_A and
    /// E(t) = amplitude·envelope(t); amplitude has ν components.
    UniformField {
        amplitude: Vec<f64>,
        charges: Vec<f64>,
        envelope: Envelope,
    },
    /// Sum of parts.
    Sum { parts: Vec<PotentialSpec> },
}

impl PotentialSpec {
    /// Structural validation against the sort list and spatial dimension.
    pub fn validate(&self, sorts: &[SortSpec], spatial_dim: usize, path: &str) -> Result<()> {
        match self {
            PotentialSpec::Free => Ok(()),
            PotentialSpec::Harmonic { omegas } => {
                if omegas.len() != sorts.len() {
                    return Err(QhdError::Config {
                        field: format!("{path}.omegas"),
                        message: format!("{} values for {} sorts", omegas.len(), sorts.len()),
                    });
                }
                if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(QhdError::Config {
                        field: format!("{path}.omegas"),
                        message: "frequencies must be positive and finite".into(),
                    });
                }
                Ok(())
            }
            PotentialSpec::SoftCoulomb {
                strength,
                softening,
            } => {
                if !strength.is_finite() {
                    return Err(QhdError::Config {
                        field: format!("{path}.strength"),
                        message: "must be finite".into(),
                    });
                }
                if !(softening.is_finite() && *softening > 0.0) {
                    return Err(QhdError::Config {
                        field: format!("{path}.softening"),
                        message: "softening must be > 0 (a zero softening is singular)".into(),
                    });
                }
                Ok(())
            }
            PotentialSpec::UniformField {
                amplitude,
                charges,
                envelope: _,
            } => {
                if amplitude.len() != spatial_dim {
                    return Err(QhdError::Config {
                        field: format!("{path}.amplitude"),
                        message: format!(
                            "{} components for spatial dimension {spatial_dim}",
                            amplitude.len()
                        ),
                    });
                }
                if charges.len() != sorts.len() {
                    return Err(QhdError::Config {
                        field: format!("{path}.charges"),
                        message: format!("{} couplings for {} sorts", charges.len(), sorts.len()),
                    });
                }
                Ok(())
            }
            PotentialSpec::Sum { parts } => {
                for (i, p) in parts.iter().enumerate() {
                    p.validate(sorts, spatial_dim, &format!("{path}.parts[{i}]"))?;
                }
                Ok(())
            }
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        match self {
            PotentialSpec::Free
            | PotentialSpec::Harmonic { .. }
            | PotentialSpec::SoftCoulomb { .. } => false,
            PotentialSpec::UniformField { envelope, .. } => envelope.is_time_dependent(),
            PotentialSpec::Sum { parts } => parts.iter().any(|p| p.is_time_dependent()),
        }
    }

    /// The per-sort harmonic frequencies if the potential contains exactly one
    /// harmonic part (possibly alongside non-harmonic parts); oscillator state
    /// construction needs the ω to fix the orbital width.
    pub fn harmonic_omegas(&self) -> Option<&[f64]> {
        match self {
            PotentialSpec::Harmonic { omegas } => Some(omegas),
            PotentialSpec::Sum { parts } => {
                let mut found = None;
                for p in parts {
                    if let Some(w) = p.harmonic_omegas() {
                        if found.is_some() {
                            return None;
                        }
                        found = Some(w);
                    }
                }
                found
            }
            _ => None,
        }
    }

    /// Strict classification for closed-form snapshot series: the potential
    /// must be exactly zero or purely harmonic for the orbital evolution to
    /// have the implemented exact solutions.
    pub fn analytic_class(&self) -> Option<AnalyticClass<'_>> {
        match self {
            PotentialSpec::Free => Some(AnalyticClass::Free),
            PotentialSpec::Harmonic { omegas } => Some(AnalyticClass::Harmonic(omegas)),
            PotentialSpec::Sum { parts } => {
                let mut class = Some(AnalyticClass::Free);
                for p in parts {
                    class = match (class, p.analytic_class()?) {
                        (Some(AnalyticClass::Free), c) => Some(c),
                        (Some(AnalyticClass::Harmonic(w)), AnalyticClass::Free) => {
                            Some(AnalyticClass::Harmonic(w))
                        }
                        _ => None,
                    };
                    class.as_ref()?;
                }
                class
            }
            _ => None,
        }
    }

    fn accumulate(&self, grid: &ConfigurationGrid, t: f64, coords: &[f64]) -> f64 {
        match self {
            PotentialSpec::Free => 0.0,
            PotentialSpec::Harmonic { omegas } => {
                let mut v = 0.0;
                for (a, &q) in coords.iter().enumerate() {
                    let s = grid.axis_sort(a);
                    let w = omegas[s];
                    v += 0.5 * grid.sorts()[s].mass * w * w * q * q;
                }
                v
            }
            PotentialSpec::SoftCoulomb {
                strength,
                softening,
            } => {
                let nu = grid.spatial_dim();
                let n_particles = grid.d_tot() / nu;
                let mut v = 0.0;
                for a in 0..n_particles {
                    for b in (a + 1)..n_particles {
                        let mut r2 = softening * softening;
                        for c in 0..nu {
                            let d = coords[a * nu + c] - coords[b * nu + c];
                            r2 += d * d;
                        }
                        v += strength / r2.sqrt();
                    }
                }
                v
            }
            PotentialSpec::UniformField {
                amplitude,
                charges,
                envelope,
            } => {
                let env = envelope.value(t);
                let nu = grid.spatial_dim();
                let mut v = 0.0;
                for (a, &q) in coords.iter().enumerate() {
                    let c = charges[grid.axis_sort(a)];
                    v -= c * env * amplitude[a % nu] * q;
                }
                v
            }
            PotentialSpec::Sum { parts } => {
                parts.iter().map(|p| p.accumulate(grid, t, coords)).sum()
            }
        }
    }

    /// Samples V(Q, t) on the grid.
    pub fn evaluate(&self, grid: &Arc<ConfigurationGrid>, t: f64) -> Result<ScalarField> {
        let field = ScalarField::from_fn(grid.clone(), |coords| self.accumulate(grid, t, coords));
        field.ensure_finite("potential evaluation")?;
        Ok(field)
    }

    fn accumulate_gradient(
        &self,
        grid: &ConfigurationGrid,
        t: f64,
        coords: &[f64],
        axes: std::ops::Range<usize>,
        out: &mut [f64],
    ) {
        let nu = grid.spatial_dim();
        match self {
            PotentialSpec::Free => {}
            PotentialSpec::Harmonic { omegas } => {
                for (slot, a) in axes.enumerate() {
                    let s = grid.axis_sort(a);
                    let w = omegas[s];
                    out[slot] += grid.sorts()[s].mass * w * w * coords[a];
                }
            }
            PotentialSpec::SoftCoulomb {
                strength,
                softening,
            } => {
                let target_particle = axes.start / nu;
                let n_particles = grid.d_tot() / nu;
                for other in 0..n_particles {
                    if other == target_particle {
                        continue;
                    }
                    let mut r2 = softening * softening;
                    for c in 0..nu {
                        let d = coords[target_particle * nu + c] - coords[other * nu + c];
                        r2 += d * d;
                    }
                    let inv = strength / (r2 * r2.sqrt());
                    for c in 0..nu {
                        let d = coords[target_particle * nu + c] - coords[other * nu + c];
                        out[c] -= inv * d;
                    }
                }
            }
            PotentialSpec::UniformField {
                amplitude,
                charges,
                envelope,
            } => {
                let env = envelope.value(t);
                for (slot, a) in axes.enumerate() {
                    out[slot] -= charges[grid.axis_sort(a)] * env * amplitude[slot % nu];
                }
            }
            PotentialSpec::Sum { parts } => {
                for p in parts {
                    p.accumulate_gradient(grid, t, coords, axes.clone(), out);
                }
            }
        }
    }

    /// Analytic ∇_i^A V sampled on the grid; the force density integrand is
    /// −1 times this.
    pub fn gradient(
        &self,
        grid: &Arc<ConfigurationGrid>,
        t: f64,
        target: ParticleIndex,
    ) -> Result<VectorField> {
        let axes = grid.particle_axes(target)?;
        let nu = axes.len();
        let mut comps: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); nu];
        let mut coords = vec![0.0; grid.d_tot()];
        let mut g = vec![0.0; nu];
        for i in 0..grid.len() {
            grid.coords_of(i, &mut coords);
            g.iter_mut().for_each(|x| *x = 0.0);
            self.accumulate_gradient(grid, t, &coords, axes.clone(), &mut g);
            for (c, &v) in comps.iter_mut().zip(g.iter()) {
                c.push(v);
            }
        }
        let fields = comps
            .into_iter()
            .map(|c| ScalarField::from_data(grid.clone(), c))
            .collect::<Result<Vec<_>>>()?;
        let out = VectorField::new(fields)?;
        for c in out.components() {
            c.ensure_finite("potential gradient")?;
        }
        Ok(out)
    }
}

/// Uniform snapshot time grid. The integration step is Δt_snap/substeps;
/// residual analysis differentiates on the stored cadence, which decouples
/// the propagation-error floor from the central-difference truncation term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt_snapshot: f64,
    /// Stored snapshot count including t0; ≥ 3 (central differences).
    pub snapshots: usize,
    /// Integration substeps per stored interval; ≥ 1.
    pub substeps: usize,
}

impl TimeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_snapshot.is_finite() && self.dt_snapshot > 0.0) {
            return Err(QhdError::Config {
                field: "time.dt_snapshot".into(),
                message: "must be positive and finite".into(),
            });
        }
        if self.snapshots < 3 {
            return Err(QhdError::Config {
                field: "time.snapshots".into(),
                message: "need at least 3 snapshots for central time differences".into(),
            });
        }
        if self.substeps == 0 {
            return Err(QhdError::Config {
                field: "time.substeps".into(),
                message: "must be ≥ 1".into(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn time(&self, snapshot: usize) -> f64 {
        self.t0 + self.dt_snapshot * snapshot as f64
    }

    #[inline]
    pub fn dt_integration(&self) -> f64 {
        self.dt_snapshot / self.substeps as f64
    }
}

/// How the snapshot series is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    /// Closed-form sampling at each stored time; requires a state/potential
    /// pair with an exact solution. Keeps stationary checks at the floor the
    /// absolute criteria demand (propagation noise would be amplified ~1/Δt
    /// by the time differences).
    Analytic,
    /// Split-operator propagation from the sampled initial state.
    Propagate,
}

/// A fully resolved scenario; produced by the config loader or a preset.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    /// Reduced Planck constant (action units); 1 in natural units.
    pub hbar: f64,
    pub spatial_dim: usize,
    pub sorts: Vec<SortSpec>,
    /// One box per sort, shared by all axes of the sort.
    pub boxes: Vec<AxisSpec>,
    pub max_axes: usize,
    pub potential: PotentialSpec,
    pub state: crate::states::StateSpec,
    pub time: TimeGrid,
    pub series: SeriesSource,
}

impl Scenario {
    pub fn grid(&self) -> Result<Arc<ConfigurationGrid>> {
        ConfigurationGrid::new(
            self.sorts.clone(),
            self.spatial_dim,
            &self.boxes,
            self.max_axes,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(QhdError::Config {
                field: "hbar".into(),
                message: "must be positive and finite".into(),
            });
        }
        for (i, s) in self.sorts.iter().enumerate() {
            s.validate(i)?;
        }
        self.time.validate()?;
        self.potential
            .validate(&self.sorts, self.spatial_dim, "potential")?;
        self.grid()?;
        self.state
            .validate(&self.sorts, self.spatial_dim, &self.potential, self.series)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_n(omega_sorts: usize, n: usize) -> Arc<ConfigurationGrid> {
        let sorts = (0..omega_sorts)
            .map(|i| SortSpec::new(&format!("s{i}"), 1, 1.0 + i as f64))
            .collect();
        let boxes: Vec<_> = (0..omega_sorts)
            .map(|_| AxisSpec::new(-10.0, 10.0, n).unwrap())
            .collect();
        ConfigurationGrid::new(sorts, 1, &boxes, 4).unwrap()
    }

    fn grid1(omega_sorts: usize) -> Arc<ConfigurationGrid> {
        grid_n(omega_sorts, 64)
    }

    #[test]
    fn free_potential_is_zero_with_zero_gradient() {
        let g = grid1(1);
        let v = PotentialSpec::Free.evaluate(&g, 0.3).unwrap();
        assert!(v.max_abs() == 0.0);
        let dv = PotentialSpec::Free
            .gradient(&g, 0.3, ParticleIndex::new(0, 0))
            .unwrap();
        assert!(dv.max_abs() == 0.0);
    }

    #[test]
    fn harmonic_single_particle_closed_form() {
        let g = grid1(1);
        let p = PotentialSpec::Harmonic { omegas: vec![1.0] };
        let v = p.evaluate(&g, 0.0).unwrap();
        let expect = ScalarField::from_fn(g.clone(), |q| 0.5 * q[0] * q[0]);
        for (a, b) in v.data().iter().zip(expect.data()) {
            assert_eq!(a, b);
        }
        let dv = p.gradient(&g, 0.0, ParticleIndex::new(0, 0)).unwrap();
        let dexpect = ScalarField::from_fn(g, |q| q[0]);
        for (a, b) in dv.component(0).data().iter().zip(dexpect.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_amplitude_field_is_bitwise_harmonic() {
        let g = grid1(1);
        let h = PotentialSpec::Harmonic { omegas: vec![1.0] };
        let sum = PotentialSpec::Sum {
            parts: vec![
                h.clone(),
                PotentialSpec::UniformField {
                    amplitude: vec![0.0],
                    charges: vec![1.0],
                    envelope: Envelope::Constant,
                },
            ],
        };
        let a = h.evaluate(&g, 0.7).unwrap();
        let b = sum.evaluate(&g, 0.7).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn constant_envelope_is_bitwise_time_independent() {
        let g = grid1(1);
        let p = PotentialSpec::UniformField {
            amplitude: vec![0.3],
            charges: vec![2.0],
            envelope: Envelope::Constant,
        };
        let a = p.evaluate(&g, 0.0).unwrap();
        let b = p.evaluate(&g, 123.456).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(!p.is_time_dependent());
        let ps = PotentialSpec::UniformField {
            amplitude: vec![0.3],
            charges: vec![2.0],
            envelope: Envelope::Sinusoid {
                omega: 1.0,
                phase: 0.0,
            },
        };
        assert!(ps.is_time_dependent());
    }

    #[test]
    fn uniform_field_gradient_is_minus_coupling_times_field() {
        let g = grid1(2);
        let p = PotentialSpec::UniformField {
            amplitude: vec![0.5],
            charges: vec![1.0, -2.0],
            envelope: Envelope::Sinusoid {
                omega: 2.0,
                phase: 0.1,
            },
        };
        let t = 0.4_f64;
        let env = (2.0 * t + 0.1).cos();
        let d0 = p.gradient(&g, t, ParticleIndex::new(0, 0)).unwrap();
        let d1 = p.gradient(&g, t, ParticleIndex::new(1, 0)).unwrap();
        for &v in d0.component(0).data() {
            assert!((v + env * 0.5).abs() < 1e-15);
        }
        for &v in d1.component(0).data() {
            assert!((v - (2.0 * env * 0.5)).abs() < 1e-15);
        }
    }

    /// Interior high-order finite differences of the sampled potential verify
    /// the analytic gradients. (A spectral cross-check is not usable here:
    /// polynomial and Coulomb tails are not box-periodic, so their spectral
    /// derivative is polluted by the wrap discontinuity.)
    fn fd_gradient_check(p: &PotentialSpec, g: &Arc<ConfigurationGrid>, tol: f64) {
        let t = 0.2;
        let v = p.evaluate(g, t).unwrap();
        let n_axes = g.d_tot();
        for particle in g.particles() {
            let axes = g.particle_axes(particle).unwrap();
            let dv = p.gradient(g, t, particle).unwrap();
            for (slot, ax) in axes.enumerate() {
                let n = g.axis(ax).n;
                let dq = g.axis(ax).spacing();
                let stride = g.stride(ax);
                let mut idx = vec![0usize; n_axes];
                let mut worst = 0.0_f64;
                for i in 0..g.len() {
                    g.unravel(i, &mut idx);
                    let j = idx[ax];
                    if j < 3 || j + 3 >= n {
                        continue;
                    }
                    // 6th-order central first derivative
                    let f = |o: isize| v.data()[(i as isize + o * stride as isize) as usize];
                    let fd =
                        (f(3) - f(-3) + 9.0 * (f(-2) - f(2)) + 45.0 * (f(1) - f(-1))) / (60.0 * dq);
                    worst = worst.max((fd - dv.component(slot).data()[i]).abs());
                }
                assert!(worst < tol, "axis {ax}: worst FD mismatch {worst}");
            }
        }
    }

    #[test]
    fn soft_coulomb_gradient_matches_interior_finite_differences() {
        // Δq = 0.039 keeps the 6th-order truncation term of the softened
        // Coulomb well below the tolerance
        let g = grid_n(2, 512);
        let p = PotentialSpec::SoftCoulomb {
            strength: -1.0,
            softening: 1.0,
        };
        fd_gradient_check(&p, &g, 1e-6);
    }

    #[test]
    fn composite_potential_gradient_matches_interior_finite_differences() {
        let g = grid_n(2, 256);
        let p = PotentialSpec::Sum {
            parts: vec![
                PotentialSpec::Harmonic {
                    omegas: vec![1.0, 0.5],
                },
                PotentialSpec::SoftCoulomb {
                    strength: 0.7,
                    softening: 1.5,
                },
                PotentialSpec::UniformField {
                    amplitude: vec![0.2],
                    charges: vec![1.0, 1.0],
                    envelope: Envelope::Constant,
                },
            ],
        };
        fd_gradient_check(&p, &g, 1e-6);
    }

    #[test]
    fn zero_softening_is_rejected() {
        let p = PotentialSpec::SoftCoulomb {
            strength: 1.0,
            softening: 0.0,
        };
        let sorts = vec![SortSpec::new("e", 2, 1.0)];
        assert!(matches!(
            p.validate(&sorts, 1, "potential"),
            Err(QhdError::Config { .. })
        ));
    }

    #[test]
    fn harmonic_omega_count_must_match_sorts() {
        let p = PotentialSpec::Harmonic {
            omegas: vec![1.0, 2.0],
        };
        let sorts = vec![SortSpec::new("e", 1, 1.0)];
        assert!(p.validate(&sorts, 1, "potential").is_err());
    }

    #[test]
    fn time_grid_needs_three_snapshots() {
        let tg = TimeGrid {
            t0: 0.0,
            dt_snapshot: 1e-3,
            snapshots: 2,
            substeps: 1,
        };
        assert!(tg.validate().is_err());
    }
}
