//! Initial and reference states: orbital products, exchange (anti)symmetrized
//! within a sort, sampled on the grid; plus closed-form reference fields for
//! the state families with exact solutions.
//!
//! The sampler evaluates complex orbitals; the reference fields are separate
//! real closed-form expressions (velocity, osmotic velocity, quantum
//! potential), so agreement between the two paths is a non-trivial check.
//!
//! Orbitals factor across the ν axes of a particle; a particle's state is a
//! product of per-axis orbitals. Symmetrization sums signed permutations of
//! whole particles within one sort (particle counts are desk-scale, so the
//! factorial sum is enumerated directly).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QhdError, Result};
use crate::lattice::{ComplexField, ConfigurationGrid, ScalarField, VectorField};
use crate::model::{AnalyticClass, PotentialSpec, SeriesSource, SortSpec};

/// Relative wavefunction amplitude allowed on the outermost grid shell; more
/// means the box clips the state and the periodic wrap becomes visible.
pub const EDGE_AMPLITUDE_LIMIT: f64 = 1e-12;

/// Largest oscillator quantum number accepted per axis (direct Hermite
/// recurrence; desk scale).
pub const MAX_EIGENSTATE_LEVEL: usize = 10;

/// One particle's state; vector-valued parameters carry one entry per spatial
/// axis of the particle. `momentum` is the mean momentum ħk (momentum units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParticleState {
    /// Free Gaussian packet with width σ (the t = 0 amplitude standard
    /// deviation of |φ|² is σ). Exact evolution under the free Hamiltonian.
    Gaussian {
        center: Vec<f64>,
        sigma: f64,
        momentum: Vec<f64>,
    },
    /// Glauber coherent state of the sort's harmonic ω: displaced ground
    /// state; the center follows the classical trajectory without spreading.
    Coherent {
        displacement: Vec<f64>,
        momentum: Vec<f64>,
    },
    /// Harmonic oscillator eigenstate with per-axis quantum numbers.
    Eigenstate { levels: Vec<usize> },
}

/// Exchange symmetry applied within one sort.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    None,
    Symmetric,
    Antisymmetric,
}

/// Full many-body state: one orbital per particle in Q-order plus the per-sort
/// exchange symmetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub particles: Vec<ParticleState>,
    pub symmetrization: Vec<Symmetrization>,
}

/// Closed-form reference fields for a non-symmetrized orbital product.
/// `quantum_potential` is valid away from density nodes (the caller masks).
pub struct ExactFields {
    pub density: ScalarField,
    /// Flow velocity w per particle (Q-order), ν components each.
    pub velocities: Vec<VectorField>,
    /// Osmotic velocity per particle.
    pub osmotic: Vec<VectorField>,
    pub quantum_potential: ScalarField,
}

/// Per-axis orbital with its mass and, where needed, the harmonic ω.
/// `k0` is the mean wavenumber (momentum / ħ).
#[derive(Clone, Debug)]
enum AxisOrbital {
    Gaussian {
        mass: f64,
        sigma0: f64,
        x0: f64,
        k0: f64,
    },
    Coherent {
        mass: f64,
        omega: f64,
        x0: f64,
        p0: f64,
    },
    Eigenstate {
        mass: f64,
        omega: f64,
        level: usize,
    },
}

/// Physicists' Hermite polynomial H_n(ξ) by recurrence.
fn hermite(n: usize, xi: f64) -> f64 {
    let mut h0 = 1.0;
    if n == 0 {
        return h0;
    }
    let mut h1 = 2.0 * xi;
    for k in 1..n {
        let h2 = 2.0 * xi * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

struct AxisReference {
    density: f64,
    velocity: f64,
    osmotic: f64,
    vqu: f64,
}

impl AxisOrbital {
    /// Complex orbital value at (x, t); an exact solution of the 1D
    /// Schrödinger equation for its potential class.
    fn value(&self, x: f64, t: f64, hbar: f64) -> Complex64 {
        match *self {
            AxisOrbital::Gaussian {
                mass,
                sigma0,
                x0,
                k0,
            } => {
                let tau = hbar * t / (2.0 * mass * sigma0 * sigma0);
                let v0 = hbar * k0 / mass;
                let xi = x - x0 - v0 * t;
                let one_it = Complex64::new(1.0, tau);
                let prefactor =
                    Complex64::new((2.0 * PI * sigma0 * sigma0).powf(-0.25), 0.0) / one_it.sqrt();
                let gauss =
                    (-Complex64::new(xi * xi / (4.0 * sigma0 * sigma0), 0.0) / one_it).exp();
                let phase = Complex64::from_polar(1.0, k0 * x - hbar * k0 * k0 * t / (2.0 * mass));
                prefactor * gauss * phase
            }
            AxisOrbital::Coherent {
                mass,
                omega,
                x0,
                p0,
            } => {
                let (s, c) = (omega * t).sin_cos();
                let xc = x0 * c + p0 / (mass * omega) * s;
                let pc = p0 * c - mass * omega * x0 * s;
                let sigma2 = hbar / (2.0 * mass * omega);
                let xi = x - xc;
                // phase (p_c·x + γ)/ħ with γ = −(x_c p_c − x0 p0)/2 − ħωt/2
                let gamma = -0.5 * (xc * pc - x0 * p0) - 0.5 * hbar * omega * t;
                let amp = (2.0 * PI * sigma2).powf(-0.25) * (-xi * xi / (4.0 * sigma2)).exp();
                Complex64::from_polar(amp, (pc * x + gamma) / hbar)
            }
            AxisOrbital::Eigenstate { mass, omega, level } => {
                let xi = x * (mass * omega / hbar).sqrt();
                let norm = (mass * omega / (PI * hbar)).powf(0.25)
                    / (2.0_f64.powi(level as i32) * factorial(level)).sqrt();
                let energy = hbar * omega * (level as f64 + 0.5);
                let amp = norm * hermite(level, xi) * (-0.5 * xi * xi).exp();
                Complex64::new(amp, 0.0) * Complex64::from_polar(1.0, -energy * t / hbar)
            }
        }
    }

    /// Closed-form per-axis reference quantities at (x, t): marginal density
    /// factor, flow velocity, osmotic velocity and quantum potential term.
    fn reference(&self, x: f64, t: f64, hbar: f64) -> AxisReference {
        match *self {
            AxisOrbital::Gaussian {
                mass,
                sigma0,
                x0,
                k0,
            } => {
                let tau = hbar * t / (2.0 * mass * sigma0 * sigma0);
                let v0 = hbar * k0 / mass;
                let s2t = sigma0 * sigma0 * (1.0 + tau * tau);
                let xi = x - x0 - v0 * t;
                AxisReference {
                    density: (2.0 * PI * s2t).sqrt().recip() * (-xi * xi / (2.0 * s2t)).exp(),
                    velocity: v0
                        + xi * (tau / (1.0 + tau * tau)) * hbar / (2.0 * mass * sigma0 * sigma0),
                    osmotic: 0.5 * hbar / mass * xi / s2t,
                    vqu: hbar * hbar / (4.0 * mass * s2t) * (1.0 - xi * xi / (2.0 * s2t)),
                }
            }
            AxisOrbital::Coherent {
                mass,
                omega,
                x0,
                p0,
            } => {
                let (s, c) = (omega * t).sin_cos();
                let xc = x0 * c + p0 / (mass * omega) * s;
                let pc = p0 * c - mass * omega * x0 * s;
                let sigma2 = hbar / (2.0 * mass * omega);
                let xi = x - xc;
                AxisReference {
                    density: (2.0 * PI * sigma2).sqrt().recip() * (-xi * xi / (2.0 * sigma2)).exp(),
                    velocity: pc / mass,
                    osmotic: 0.5 * hbar / mass * xi / sigma2,
                    vqu: 0.5 * hbar * omega * (1.0 - xi * xi / (2.0 * sigma2)),
                }
            }
            AxisOrbital::Eigenstate { mass, omega, level } => {
                let scale = (mass * omega / hbar).sqrt();
                let xi = x * scale;
                let h = hermite(level, xi);
                let norm2 = (mass * omega / (PI * hbar)).sqrt()
                    / (2.0_f64.powi(level as i32) * factorial(level));
                // d ln D / dx = (2H'/H − 2ξ)·dξ/dx with H' = 2n·H_{n−1}
                let dh_over_h = if level == 0 || h.abs() < f64::MIN_POSITIVE {
                    0.0 // exactly on a node; excluded by the density mask
                } else {
                    2.0 * level as f64 * hermite(level - 1, xi) / h
                };
                AxisReference {
                    density: norm2 * h * h * (-xi * xi).exp(),
                    velocity: 0.0,
                    osmotic: -(0.5 * hbar / mass) * (2.0 * dh_over_h - 2.0 * xi) * scale,
                    vqu: hbar * omega * (level as f64 + 0.5) - 0.5 * mass * omega * omega * x * x,
                }
            }
        }
    }
}

impl StateSpec {
    /// Shape/compatibility validation with config-style field paths.
    pub fn validate(
        &self,
        sorts: &[SortSpec],
        spatial_dim: usize,
        potential: &PotentialSpec,
        series: SeriesSource,
    ) -> Result<()> {
        let total: usize = sorts.iter().map(|s| s.count).sum();
        if self.particles.len() != total {
            return Err(QhdError::Config {
                field: "state.particles".into(),
                message: format!("{} states for {} particles", self.particles.len(), total),
            });
        }
        if self.symmetrization.len() != sorts.len() {
            return Err(QhdError::Config {
                field: "state.symmetrization".into(),
                message: format!(
                    "{} entries for {} sorts",
                    self.symmetrization.len(),
                    sorts.len()
                ),
            });
        }
        let omegas = potential.harmonic_omegas();
        for (i, p) in self.particles.iter().enumerate() {
            match p {
                ParticleState::Gaussian {
                    center,
                    sigma,
                    momentum,
                } => {
                    if center.len() != spatial_dim || momentum.len() != spatial_dim {
                        return Err(QhdError::Config {
                            field: format!("state.particles[{i}].center"),
                            message: format!("need {spatial_dim} components per axis"),
                        });
                    }
                    if !(sigma.is_finite() && *sigma > 0.0) {
                        return Err(QhdError::Config {
                            field: format!("state.particles[{i}].sigma"),
                            message: "width must be positive and finite".into(),
                        });
                    }
                }
                ParticleState::Coherent {
                    displacement,
                    momentum,
                } => {
                    if displacement.len() != spatial_dim || momentum.len() != spatial_dim {
                        return Err(QhdError::Config {
                            field: format!("state.particles[{i}].displacement"),
                            message: format!("need {spatial_dim} components per axis"),
                        });
                    }
                    if omegas.is_none() {
                        return Err(QhdError::NoClosedForm(format!(
                            "state.particles[{i}]: a coherent state needs a harmonic \
                             potential to fix its width"
                        )));
                    }
                }
                ParticleState::Eigenstate { levels } => {
                    if levels.len() != spatial_dim {
                        return Err(QhdError::Config {
                            field: format!("state.particles[{i}].levels"),
                            message: format!("need {spatial_dim} quantum numbers"),
                        });
                    }
                    if levels.iter().any(|&n| n > MAX_EIGENSTATE_LEVEL) {
                        return Err(QhdError::Config {
                            field: format!("state.particles[{i}].levels"),
                            message: format!("levels above {MAX_EIGENSTATE_LEVEL} not supported"),
                        });
                    }
                    if omegas.is_none() {
                        return Err(QhdError::NoClosedForm(format!(
                            "state.particles[{i}]: an oscillator eigenstate needs a \
                             harmonic potential"
                        )));
                    }
                }
            }
        }
        // Antisymmetrizing identical orbitals annihilates the state.
        let mut offset = 0;
        for (s, sort) in sorts.iter().enumerate() {
            if self.symmetrization[s] == Symmetrization::Antisymmetric {
                for a in 0..sort.count {
                    for b in (a + 1)..sort.count {
                        if self.particles[offset + a] == self.particles[offset + b] {
                            return Err(QhdError::Config {
                                field: format!("state.particles[{}]", offset + b),
                                message: "antisymmetrization of identical orbitals \
                                          gives the zero state"
                                    .into(),
                            });
                        }
                    }
                }
            }
            offset += sort.count;
        }
        if series == SeriesSource::Analytic {
            match potential.analytic_class() {
                None => {
                    return Err(QhdError::NoClosedForm(
                        "closed-form series requires a free or purely harmonic potential".into(),
                    ))
                }
                Some(AnalyticClass::Free) => {
                    if self
                        .particles
                        .iter()
                        .any(|p| !matches!(p, ParticleState::Gaussian { .. }))
                    {
                        return Err(QhdError::NoClosedForm(
                            "free closed-form series supports Gaussian packets only".into(),
                        ));
                    }
                }
                Some(AnalyticClass::Harmonic(_)) => {
                    if self
                        .particles
                        .iter()
                        .any(|p| matches!(p, ParticleState::Gaussian { .. }))
                    {
                        return Err(QhdError::NoClosedForm(
                            "harmonic closed-form series supports coherent states and \
                             eigenstates only"
                                .into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-axis orbitals of every particle, Q-order; pulls masses from the
    /// sorts and ω from the potential where the orbital family needs it.
    fn orbitals(
        &self,
        grid: &ConfigurationGrid,
        potential: &PotentialSpec,
        hbar: f64,
    ) -> Result<Vec<Vec<AxisOrbital>>> {
        let nu = grid.spatial_dim();
        let omegas = potential.harmonic_omegas();
        let need_omega = |i: usize, sort: usize| {
            omegas.map(|w| w[sort]).ok_or_else(|| {
                QhdError::NoClosedForm(format!(
                    "state.particles[{i}]: orbital family needs a harmonic potential"
                ))
            })
        };
        let mut out = Vec::with_capacity(self.particles.len());
        for (g, particle) in grid.particles().into_iter().enumerate() {
            let mass = grid.sorts()[particle.sort].mass;
            let spec = &self.particles[g];
            let mut per_axis = Vec::with_capacity(nu);
            for c in 0..nu {
                per_axis.push(match spec {
                    ParticleState::Gaussian {
                        center,
                        sigma,
                        momentum,
                    } => AxisOrbital::Gaussian {
                        mass,
                        sigma0: *sigma,
                        x0: center[c],
                        k0: momentum[c] / hbar,
                    },
                    ParticleState::Coherent {
                        displacement,
                        momentum,
                    } => AxisOrbital::Coherent {
                        mass,
                        omega: need_omega(g, particle.sort)?,
                        x0: displacement[c],
                        p0: momentum[c],
                    },
                    ParticleState::Eigenstate { levels } => AxisOrbital::Eigenstate {
                        mass,
                        omega: need_omega(g, particle.sort)?,
                        level: levels[c],
                    },
                });
            }
            out.push(per_axis);
        }
        Ok(out)
    }

    /// Signed particle-permutation assignments: per assignment, orbital index
    /// for every particle slot (global Q-order) and the sign.
    fn assignments(&self, sorts: &[SortSpec]) -> Vec<(f64, Vec<usize>)> {
        let mut assigns: Vec<(f64, Vec<usize>)> = vec![(1.0, Vec::new())];
        let mut offset = 0;
        for (s, sort) in sorts.iter().enumerate() {
            let block: Vec<(f64, Vec<usize>)> = match self.symmetrization[s] {
                Symmetrization::None => vec![(1.0, (0..sort.count).collect())],
                Symmetrization::Symmetric => permutations(sort.count)
                    .into_iter()
                    .map(|(_, p)| (1.0, p))
                    .collect(),
                Symmetrization::Antisymmetric => permutations(sort.count),
            };
            let mut next = Vec::with_capacity(assigns.len() * block.len());
            for (sign, base) in &assigns {
                for (bsign, perm) in &block {
                    let mut v = base.clone();
                    v.extend(perm.iter().map(|&i| offset + i));
                    next.push((sign * bsign, v));
                }
            }
            assigns = next;
            offset += sort.count;
        }
        assigns
    }

    /// Samples Ψ(Q, t) on the grid: permutation-summed orbital products,
    /// normalized to unit grid norm. Rejects states whose amplitude on the
    /// outermost shell exceeds [`EDGE_AMPLITUDE_LIMIT`] relative to the peak.
    pub fn sample(
        &self,
        grid: &Arc<ConfigurationGrid>,
        potential: &PotentialSpec,
        hbar: f64,
        t: f64,
    ) -> Result<ComplexField> {
        let nu = grid.spatial_dim();
        let d_tot = grid.d_tot();
        let orbitals = self.orbitals(grid, potential, hbar)?;
        let assigns = self.assignments(grid.sorts());
        let particles = grid.particles();

        // Orbital values on their sort's (shared) axis grid: tab[orbital][c][j].
        let mut tab: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(orbitals.len());
        for (g, per_axis) in orbitals.iter().enumerate() {
            let axis = grid.axis(grid.particle_axes(particles[g])?.start);
            let per_c: Vec<Vec<Complex64>> = per_axis
                .iter()
                .map(|orb| {
                    (0..axis.n)
                        .map(|j| orb.value(axis.coord(j), t, hbar))
                        .collect()
                })
                .collect();
            tab.push(per_c);
        }

        let mut data = Vec::with_capacity(grid.len());
        let mut idx = vec![0usize; d_tot];
        for flat in 0..grid.len() {
            grid.unravel(flat, &mut idx);
            let mut acc = Complex64::new(0.0, 0.0);
            for (sign, assign) in &assigns {
                let mut prod = Complex64::new(*sign, 0.0);
                for (slot, &orb) in assign.iter().enumerate() {
                    for c in 0..nu {
                        prod *= tab[orb][c][idx[slot * nu + c]];
                    }
                }
                acc += prod;
            }
            data.push(acc);
        }
        let mut psi = ComplexField::from_data(grid.clone(), data)?;
        psi.ensure_finite("state sampling")?;

        let norm = psi.norm();
        if norm < 1e-12 {
            return Err(QhdError::Config {
                field: "state".into(),
                message: "state vanishes after (anti)symmetrization".into(),
            });
        }
        psi.scale(Complex64::new(1.0 / norm, 0.0));

        let peak = psi.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut edge_peak = 0.0_f64;
        for flat in 0..grid.len() {
            grid.unravel(flat, &mut idx);
            let on_edge = idx
                .iter()
                .enumerate()
                .any(|(a, &j)| j == 0 || j + 1 == grid.axis(a).n);
            if on_edge {
                edge_peak = edge_peak.max(psi.data()[flat].norm());
            }
        }
        if edge_peak > EDGE_AMPLITUDE_LIMIT * peak {
            return Err(QhdError::BoundaryLeak {
                t,
                leaked: edge_peak / peak,
                limit: EDGE_AMPLITUDE_LIMIT,
            });
        }
        Ok(psi)
    }

    /// Closed-form reference fields; available for non-symmetrized orbital
    /// products only (symmetrized densities do not factor).
    pub fn exact_fields(
        &self,
        grid: &Arc<ConfigurationGrid>,
        potential: &PotentialSpec,
        hbar: f64,
        t: f64,
    ) -> Result<ExactFields> {
        if self
            .symmetrization
            .iter()
            .any(|s| *s != Symmetrization::None)
        {
            return Err(QhdError::NoClosedForm(
                "closed-form reference fields exist for orbital products only \
                 (no exchange symmetrization)"
                    .into(),
            ));
        }
        let nu = grid.spatial_dim();
        let d_tot = grid.d_tot();
        let orbitals = self.orbitals(grid, potential, hbar)?;

        // Per-axis reference tables, Q-order axes.
        let mut dens: Vec<Vec<f64>> = Vec::with_capacity(d_tot);
        let mut vel: Vec<Vec<f64>> = Vec::with_capacity(d_tot);
        let mut osm: Vec<Vec<f64>> = Vec::with_capacity(d_tot);
        let mut vqu: Vec<Vec<f64>> = Vec::with_capacity(d_tot);
        for a in 0..d_tot {
            let orb = &orbitals[a / nu][a % nu];
            let axis = grid.axis(a);
            let mut d = Vec::with_capacity(axis.n);
            let mut v = Vec::with_capacity(axis.n);
            let mut o = Vec::with_capacity(axis.n);
            let mut q = Vec::with_capacity(axis.n);
            for j in 0..axis.n {
                let r = orb.reference(axis.coord(j), t, hbar);
                d.push(r.density);
                v.push(r.velocity);
                o.push(r.osmotic);
                q.push(r.vqu);
            }
            dens.push(d);
            vel.push(v);
            osm.push(o);
            vqu.push(q);
        }

        let mut density = Vec::with_capacity(grid.len());
        let mut vqu_total = Vec::with_capacity(grid.len());
        let mut vel_axes: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); d_tot];
        let mut osm_axes: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); d_tot];
        let mut idx = vec![0usize; d_tot];
        for flat in 0..grid.len() {
            grid.unravel(flat, &mut idx);
            let mut d = 1.0;
            let mut q = 0.0;
            for a in 0..d_tot {
                d *= dens[a][idx[a]];
                q += vqu[a][idx[a]];
                vel_axes[a].push(vel[a][idx[a]]);
                osm_axes[a].push(osm[a][idx[a]]);
            }
            density.push(d);
            vqu_total.push(q);
        }

        let density = ScalarField::from_data(grid.clone(), density)?;
        let quantum_potential = ScalarField::from_data(grid.clone(), vqu_total)?;
        let mut vel_iter = vel_axes.into_iter();
        let mut osm_iter = osm_axes.into_iter();
        let mut velocities = Vec::new();
        let mut osmotic = Vec::new();
        for _ in grid.particles() {
            let v: Vec<ScalarField> = (0..nu)
                .map(|_| ScalarField::from_data(grid.clone(), vel_iter.next().unwrap()))
                .collect::<Result<_>>()?;
            let o: Vec<ScalarField> = (0..nu)
                .map(|_| ScalarField::from_data(grid.clone(), osm_iter.next().unwrap()))
                .collect::<Result<_>>()?;
            velocities.push(VectorField::new(v)?);
            osmotic.push(VectorField::new(o)?);
        }
        Ok(ExactFields {
            density,
            velocities,
            osmotic,
            quantum_potential,
        })
    }
}

/// All permutations of 0..n with parity signs (±1).
fn permutations(n: usize) -> Vec<(f64, Vec<usize>)> {
    fn rec(items: &mut Vec<usize>, k: usize, sign: f64, out: &mut Vec<(f64, Vec<usize>)>) {
        if k == items.len() {
            out.push((sign, items.clone()));
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            let s = if i == k { sign } else { -sign };
            rec(items, k + 1, s, out);
            items.swap(k, i);
        }
    }
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    rec(&mut items, 0, 1.0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::AxisSpec;
    use crate::model::{PotentialSpec, SortSpec};

    fn single_grid(n: usize, half: f64) -> Arc<ConfigurationGrid> {
        ConfigurationGrid::single_particle("e", 1.0, 1, AxisSpec::new(-half, half, n).unwrap())
            .unwrap()
    }

    fn pair_grid(n: usize, half: f64) -> Arc<ConfigurationGrid> {
        ConfigurationGrid::new(
            vec![SortSpec::new("e", 2, 1.0)],
            1,
            &[AxisSpec::new(-half, half, n).unwrap()],
            4,
        )
        .unwrap()
    }

    fn gaussian(center: f64, k0: f64) -> ParticleState {
        ParticleState::Gaussian {
            center: vec![center],
            sigma: 1.0,
            momentum: vec![k0],
        }
    }

    fn product_state(particles: Vec<ParticleState>, nsorts: usize) -> StateSpec {
        StateSpec {
            particles,
            symmetrization: vec![Symmetrization::None; nsorts],
        }
    }

    #[test]
    fn gaussian_sample_matches_direct_formula_at_t0() {
        let g = single_grid(128, 12.0);
        let spec = product_state(vec![gaussian(0.5, 2.0)], 1);
        let psi = spec.sample(&g, &PotentialSpec::Free, 1.0, 0.0).unwrap();
        let direct = ComplexField::from_fn(g.clone(), |q| {
            let xi = q[0] - 0.5;
            Complex64::from_polar((2.0 * PI).powf(-0.25) * (-xi * xi / 4.0).exp(), 2.0 * q[0])
        });
        // the sampler renormalizes on the grid; compare up to that scalar
        let scale = direct.norm();
        for (a, b) in psi.data().iter().zip(direct.data()) {
            assert!((a - b / scale).norm() < 1e-10);
        }
    }

    #[test]
    fn sampled_states_have_unit_norm() {
        let g = single_grid(128, 12.0);
        let pot = PotentialSpec::Harmonic { omegas: vec![1.0] };
        for spec in [
            product_state(vec![gaussian(0.0, 1.0)], 1),
            product_state(vec![ParticleState::Eigenstate { levels: vec![2] }], 1),
            product_state(
                vec![ParticleState::Coherent {
                    displacement: vec![1.0],
                    momentum: vec![-0.5],
                }],
                1,
            ),
        ] {
            let psi = spec.sample(&g, &pot, 1.0, 0.0).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_equals_ground_state_at_zero_displacement() {
        let g = single_grid(64, 10.0);
        let pot = PotentialSpec::Harmonic { omegas: vec![1.0] };
        let coh = product_state(
            vec![ParticleState::Coherent {
                displacement: vec![0.0],
                momentum: vec![0.0],
            }],
            1,
        );
        let eig = product_state(vec![ParticleState::Eigenstate { levels: vec![0] }], 1);
        let a = coh.sample(&g, &pot, 1.0, 0.0).unwrap();
        let b = eig.sample(&g, &pot, 1.0, 0.0).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn exchange_symmetry_is_exact_on_the_lattice() {
        // ±13 keeps the σ = 1 orbitals at ±1.5 under the edge-amplitude gate
        let g = pair_grid(32, 13.0);
        for (sym, flip) in [
            (Symmetrization::Symmetric, 1.0),
            (Symmetrization::Antisymmetric, -1.0),
        ] {
            let spec = StateSpec {
                particles: vec![gaussian(-1.5, 0.0), gaussian(1.5, 0.0)],
                symmetrization: vec![sym],
            };
            let psi = spec.sample(&g, &PotentialSpec::Free, 1.0, 0.3).unwrap();
            let n = g.axis(0).n;
            for i in 0..n {
                for j in 0..n {
                    let a = psi.data()[i * n + j];
                    let b = psi.data()[j * n + i];
                    assert_eq!(a, b * flip, "exchange symmetry must be exact");
                }
            }
        }
    }

    #[test]
    fn antisymmetrized_identical_orbitals_rejected() {
        let sorts = vec![SortSpec::new("e", 2, 1.0)];
        let spec = StateSpec {
            particles: vec![gaussian(0.0, 0.0), gaussian(0.0, 0.0)],
            symmetrization: vec![Symmetrization::Antisymmetric],
        };
        assert!(matches!(
            spec.validate(&sorts, 1, &PotentialSpec::Free, SeriesSource::Propagate),
            Err(QhdError::Config { .. })
        ));
    }

    #[test]
    fn clipped_state_is_rejected() {
        let g = single_grid(16, 2.0); // a ±2 box clips a σ = 1 packet hard
        let spec = product_state(vec![gaussian(0.0, 0.0)], 1);
        assert!(matches!(
            spec.sample(&g, &PotentialSpec::Free, 1.0, 0.0),
            Err(QhdError::BoundaryLeak { .. })
        ));
    }

    #[test]
    fn coherent_exact_fields_match_closed_forms() {
        let g = single_grid(256, 14.0);
        let pot = PotentialSpec::Harmonic { omegas: vec![1.0] };
        let spec = product_state(
            vec![ParticleState::Coherent {
                displacement: vec![1.0],
                momentum: vec![0.5],
            }],
            1,
        );
        let t = 0.37;
        let ex = spec.exact_fields(&g, &pot, 1.0, t).unwrap();
        assert!((ex.density.integral() - 1.0).abs() < 1e-9);
        // flow velocity is spatially uniform: p_c(t)/m with p_c = p0·cos − mω·x0·sin
        let expected = 0.5 * t.cos() - 1.0 * t.sin();
        for &v in ex.velocities[0].component(0).data() {
            assert!((v - expected).abs() < 1e-12);
        }
        // the quantum potential tops out at ħω/2 at the moving center
        assert!((ex.quantum_potential.max() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn eigenstate_exact_fields_have_zero_velocity() {
        let g = single_grid(128, 12.0);
        let pot = PotentialSpec::Harmonic { omegas: vec![1.0] };
        let spec = product_state(vec![ParticleState::Eigenstate { levels: vec![3] }], 1);
        let ex = spec.exact_fields(&g, &pot, 1.0, 1.234).unwrap();
        assert!(ex.velocities[0].max_abs() == 0.0);
        assert!((ex.density.integral() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_density_matches_exact_density() {
        let g = single_grid(256, 14.0);
        let spec = product_state(vec![gaussian(0.3, 1.0)], 1);
        let t = 0.8;
        let psi = spec.sample(&g, &PotentialSpec::Free, 1.0, t).unwrap();
        let ex = spec.exact_fields(&g, &PotentialSpec::Free, 1.0, t).unwrap();
        let d = psi.abs_squared();
        let mut worst = 0.0_f64;
        for (a, b) in d.data().iter().zip(ex.density.data()) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-10, "worst density mismatch {worst}");
    }

    #[test]
    fn analytic_series_gating() {
        let sorts = vec![SortSpec::new("e", 1, 1.0)];
        let gauss = product_state(vec![gaussian(0.0, 1.0)], 1);
        assert!(gauss
            .validate(&sorts, 1, &PotentialSpec::Free, SeriesSource::Analytic)
            .is_ok());
        assert!(gauss
            .validate(
                &sorts,
                1,
                &PotentialSpec::Harmonic { omegas: vec![1.0] },
                SeriesSource::Analytic
            )
            .is_err());
        assert!(gauss
            .validate(
                &sorts,
                1,
                &PotentialSpec::Harmonic { omegas: vec![1.0] },
                SeriesSource::Propagate
            )
            .is_ok());
        assert!(gauss
            .validate(
                &sorts,
                1,
                &PotentialSpec::SoftCoulomb {
                    strength: 1.0,
                    softening: 1.0
                },
                SeriesSource::Analytic
            )
            .is_err());
    }
}
