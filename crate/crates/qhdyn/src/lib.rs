//! Desk-scale quantum dynamics on a discretized configuration space.
//!
//! The crate computes, from a wavefunction Ψ(Q, t) on a periodic grid over the
//! full configuration space Q (all particle coordinates, ordered by sort):
//!
//! * the Bohmian fields: density D = |Ψ|², flow velocity w = (ħ/m)·Im(∇Ψ/Ψ),
//!   current J = D·w, osmotic velocity d = −(ħ/2m)·∇D/D and the quantum
//!   potential V_qu in both its density and amplitude forms ([`bohm`]);
//! * the single-position hydrodynamic fields obtained by marginalizing against
//!   δ(q − q₁ᴬ): per-sort mass density, mass current, mean velocity, scalar
//!   quantum pressure, momentum-flow tensors, force densities and the pressure
//!   tensor ([`mpqhd`]);
//! * residuals of every balance equation connecting them (Bohmian and
//!   reduced continuity, the Eulerian equation of motion, the Ehrenfest
//!   equation, the quantum Cauchy equation and the quantum-force/tensor-
//!   divergence identity) with relative norms, masks and convergence fits
//!   ([`verify`]).
//!
//! Wavefunctions come either from closed-form reference states ([`states`])
//! or from split-operator propagation ([`propagator`]). Scenario configs,
//! built-in presets and the binary snapshot format live in [`config`],
//! [`presets`] and [`snapshot`].
//!
//! All field operations are pure functions of immutable inputs; values are
//! `Send + Sync` and safe to hand between threads.

pub mod bohm;
pub mod config;
pub mod error;
pub mod lattice;
pub mod model;
pub mod mpqhd;
pub mod presets;
pub mod propagator;
pub mod snapshot;
pub mod states;
pub mod verify;

pub use error::{QhdError, Result};
