//! Built-in scenario catalog. Names are a stable contract; each preset is a
//! TOML document parsed through the same loader as user files, so the
//! catalog doubles as schema documentation.

use crate::config::parse_scenario;
use crate::model::Scenario;
use crate::{QhdError, Result};

/// Harmonic ground state sampled in closed form: the stationary fixture
/// whose residuals must all sit at the roundoff floor.
const STATIONARY: &str = r#"
name = "stationary"
hbar = 1.0
spatial_dim = 1
series = "analytic"

[[sorts]]
label = "e"
count = 1
mass = 1.0

[grid]
q_min = -9.2
q_max = 9.2
n = 256

[time]
t0 = 0.0
dt_snapshot = 1e-3
snapshots = 5

[potential]
kind = "harmonic"
omegas = [1.0]

[state]
symmetrization = ["none"]

[[state.particles]]
kind = "eigenstate"
levels = [0]
"#;

/// Boosted spreading packet under split-operator propagation: the dynamic
/// benchmark for the continuity and motion residuals and the trajectory
/// transport test.
const FREE_GAUSSIAN: &str = r#"
name = "free_gaussian"
hbar = 1.0
spatial_dim = 1
series = "propagate"

[[sorts]]
label = "e"
count = 1
mass = 1.0

[grid]
q_min = -13.5
q_max = 14.5
n = 256

[time]
t0 = 0.0
dt_snapshot = 1e-3
snapshots = 1001
substeps = 8

[potential]
kind = "free"

[state]
symmetrization = ["none"]

[[state.particles]]
kind = "gaussian"
center = [0.0]
sigma = 1.0
momentum = [1.0]
"#;

/// Displaced coherent state, propagated in its trap: rigid density transport
/// with a uniform velocity field and a classical center.
const COHERENT: &str = r#"
name = "coherent"
hbar = 1.0
spatial_dim = 1
series = "propagate"

[[sorts]]
label = "e"
count = 1
mass = 1.0

[grid]
q_min = -10.24
q_max = 10.24
n = 256

[time]
t0 = 0.0
dt_snapshot = 1e-3
snapshots = 1001
substeps = 8

[potential]
kind = "harmonic"
omegas = [1.0]

[state]
symmetrization = ["none"]

[[state.particles]]
kind = "coherent"
displacement = [1.0]
momentum = [0.0]
"#;

/// Light and heavy coherent sorts sharing one trap, analytic product state:
/// per-sort fields stay independent and the totals are plain sums.
const TWO_SORT_PRODUCT: &str = r#"
name = "two_sort_product"
hbar = 1.0
spatial_dim = 1
series = "analytic"

[[sorts]]
label = "e"
count = 1
mass = 1.0

[[sorts]]
label = "p"
count = 1
mass = 2.0

[grid]
q_min = -10.0
q_max = 10.0
n = 128

[time]
t0 = 0.7
dt_snapshot = 1e-3
snapshots = 5

[potential]
kind = "harmonic"
omegas = [1.0, 1.0]

[state]
symmetrization = ["none", "none"]

[[state.particles]]
kind = "coherent"
displacement = [1.0]
momentum = [0.0]

[[state.particles]]
kind = "coherent"
displacement = [-0.5]
momentum = [0.0]
"#;

/// Two exchange-symmetric free Gaussians in one sort, analytic: a genuinely
/// two-flow reduction with interference nodes between the packets.
const SYMMETRIZED_PAIR: &str = r#"
name = "symmetrized_pair"
hbar = 1.0
spatial_dim = 1
series = "analytic"

[[sorts]]
label = "e"
count = 2
mass = 1.0

[grid]
q_min = -13.12
q_max = 13.12
n = 128

[time]
t0 = 0.25
dt_snapshot = 1e-3
snapshots = 5

[potential]
kind = "free"

[state]
symmetrization = ["symmetric"]

[[state.particles]]
kind = "gaussian"
center = [-1.5]
sigma = 1.0
momentum = [0.0]

[[state.particles]]
kind = "gaussian"
center = [1.5]
sigma = 1.0
momentum = [0.0]
"#;

/// Equal-mass sorts boosted against each other, analytic: the constructed
/// counterexample where summed per-sort Cauchy equations miss the total.
const OPPOSITE_BOOST_PAIR: &str = r#"
name = "opposite_boost_pair"
hbar = 1.0
spatial_dim = 1
series = "analytic"

[[sorts]]
label = "e"
count = 1
mass = 1.0

[[sorts]]
label = "p"
count = 1
mass = 1.0

[grid]
q_min = -14.72
q_max = 14.72
n = 256

[time]
t0 = 0.9
dt_snapshot = 1e-3
snapshots = 5

[potential]
kind = "free"

[state]
symmetrization = ["none", "none"]

[[state.particles]]
kind = "gaussian"
center = [-2.0]
sigma = 1.0
momentum = [2.0]

[[state.particles]]
kind = "gaussian"
center = [2.0]
sigma = 1.0
momentum = [-2.0]
"#;

/// Name, one-line physics description, and source text of every preset.
pub fn catalog() -> Vec<(&'static str, &'static str, &'static str)> {
    vec![
        (
            "stationary",
            "harmonic ground state, analytic; every residual at its roundoff floor",
            STATIONARY,
        ),
        (
            "free_gaussian",
            "boosted spreading packet, propagated; dynamic continuity/motion benchmark",
            FREE_GAUSSIAN,
        ),
        (
            "coherent",
            "displaced coherent state, propagated; uniform flow with a classical center",
            COHERENT,
        ),
        (
            "two_sort_product",
            "light and heavy coherent sorts in one trap, analytic product state",
            TWO_SORT_PRODUCT,
        ),
        (
            "symmetrized_pair",
            "two exchange-symmetric free Gaussians, analytic; two-flow sort with nodes",
            SYMMETRIZED_PAIR,
        ),
        (
            "opposite_boost_pair",
            "equal-mass sorts boosted against each other; Cauchy superposition counterexample",
            OPPOSITE_BOOST_PAIR,
        ),
    ]
}

/// Stable preset names in catalog order.
pub fn names() -> Vec<&'static str> {
    catalog().into_iter().map(|(n, _, _)| n).collect()
}

/// Loads a preset by name.
pub fn load(name: &str) -> Result<Scenario> {
    for (key, _, text) in catalog() {
        if key == name {
            return parse_scenario(text, &format!("preset `{key}`"));
        }
    }
    Err(QhdError::Config {
        field: "scenario".into(),
        message: format!("unknown preset `{name}`; available: {}", names().join(", ")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SeriesSource;

    #[test]
    fn catalog_has_the_stable_names() {
        let expected = [
            "stationary",
            "free_gaussian",
            "coherent",
            "two_sort_product",
            "symmetrized_pair",
            "opposite_boost_pair",
        ];
        assert_eq!(names(), expected);
        assert!(catalog().len() >= 6);
        for (_, description, _) in catalog() {
            assert!(!description.is_empty());
        }
    }

    #[test]
    fn every_preset_passes_schema_and_semantic_validation() {
        for name in names() {
            let sc = load(name).unwrap();
            assert_eq!(sc.name, name);
            assert!(sc.grid().is_ok(), "{name}");
        }
    }

    #[test]
    fn propagated_presets_are_marked_and_analytic_ones_sample() {
        assert_eq!(
            load("free_gaussian").unwrap().series,
            SeriesSource::Propagate
        );
        assert_eq!(load("coherent").unwrap().series, SeriesSource::Propagate);
        // Analytic presets must actually sample at their stored times.
        for name in [
            "stationary",
            "two_sort_product",
            "symmetrized_pair",
            "opposite_boost_pair",
        ] {
            let sc = load(name).unwrap();
            assert_eq!(sc.series, SeriesSource::Analytic, "{name}");
            let series = crate::propagator::build_series(&sc).unwrap();
            assert_eq!(series.len(), sc.time.snapshots);
        }
    }

    #[test]
    fn unknown_preset_is_a_names_listing_error() {
        let err = load("nope").unwrap_err();
        assert!(err.to_string().contains("free_gaussian"));
    }
}
