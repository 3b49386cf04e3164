//! TOML scenario files: the declarative format behind the CLI and the preset
//! catalog.
//!
//! ```toml
//! name = "free_gaussian"
//! hbar = 1.0
//! spatial_dim = 1
//! series = "propagate"           # or "analytic" for closed-form sampling
//!
//! [[sorts]]
//! label = "e"
//! count = 1
//! mass = 1.0
//!
//! [grid]                         # one box, shared by every sort
//! q_min = -13.5
//! q_max = 14.5
//! n = 256
//! max_axes = 4                   # optional; guards the memory footprint
//!
//! [time]
//! t0 = 0.0
//! dt_snapshot = 1e-3
//! snapshots = 1001
//! substeps = 8                   # optional; integration steps per snapshot
//!
//! [potential]
//! kind = "free"                  # free | harmonic | soft_coulomb |
//!                                # uniform_field | sum
//!
//! [state]
//! symmetrization = ["none"]      # per sort: none | symmetric | antisymmetric
//! [[state.particles]]            # one per particle, in grid order
//! kind = "gaussian"              # gaussian | coherent | eigenstate
//! center = [0.0]
//! sigma = 1.0
//! momentum = [1.0]
//! ```
//!
//! Schema violations are reported with the exact field path (`sorts[0].mass`)
//! so a batch log pinpoints the bad line without the file.

use std::path::Path;

use serde::Deserialize;

use crate::lattice::{AxisSpec, DEFAULT_MAX_AXES};
use crate::model::{PotentialSpec, Scenario, SeriesSource, SortSpec, TimeGrid};
use crate::states::StateSpec;
use crate::{QhdError, Result};

fn default_hbar() -> f64 {
    1.0
}

fn default_max_axes() -> usize {
    DEFAULT_MAX_AXES
}

fn default_substeps() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    q_min: f64,
    q_max: f64,
    n: usize,
    #[serde(default = "default_max_axes")]
    max_axes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeFile {
    t0: f64,
    dt_snapshot: f64,
    snapshots: usize,
    #[serde(default = "default_substeps")]
    substeps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default = "default_hbar")]
    hbar: f64,
    spatial_dim: usize,
    series: SeriesSource,
    sorts: Vec<SortSpec>,
    grid: GridFile,
    time: TimeFile,
    potential: PotentialSpec,
    state: StateSpec,
}

fn format_path(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for segment in path.iter() {
        match segment {
            Segment::Seq { index } => out.push_str(&format!("[{index}]")),
            Segment::Map { key } => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push_str(key);
            }
            Segment::Enum { variant } => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push_str(variant);
            }
            Segment::Unknown => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push('?');
            }
        }
    }
    if out.is_empty() {
        "<document>".to_string()
    } else {
        out
    }
}

/// Parses scenario TOML; `origin` names the source (file path or preset) in
/// error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let de = toml::Deserializer::new(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut field = format_path(e.path());
        let message = e.into_inner().message().to_string();
        // Missing fields surface at the enclosing table; splice the absent
        // key into the path so the report names the field. Unknown-field and
        // type errors already carry the full path.
        if let Some(name) = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            if field == "<document>" {
                field = name.to_string();
            } else {
                field.push('.');
                field.push_str(name);
            }
        }
        QhdError::Config {
            field,
            message: format!("{message} (in {origin})"),
        }
    })?;

    let boxes = file
        .sorts
        .iter()
        .map(|_| AxisSpec::new(file.grid.q_min, file.grid.q_max, file.grid.n))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| QhdError::Config {
            field: "grid".into(),
            message: format!("{e} (in {origin})"),
        })?;

    let scenario = Scenario {
        name: file.name,
        hbar: file.hbar,
        spatial_dim: file.spatial_dim,
        sorts: file.sorts,
        boxes,
        max_axes: file.grid.max_axes,
        potential: file.potential,
        state: file.state,
        time: TimeGrid {
            t0: file.time.t0,
            dt_snapshot: file.time.dt_snapshot,
            snapshots: file.time.snapshots,
            substeps: file.time.substeps,
        },
        series: file.series,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text, &path.display().to_string())
}

/// Resolution overrides applied after parsing, before validation reruns.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    /// Replaces every box's point count.
    pub grid_n: Option<usize>,
    /// Replaces the stored-snapshot spacing.
    pub dt_snapshot: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, scenario: &mut Scenario) -> Result<()> {
        if let Some(n) = self.grid_n {
            for b in &mut scenario.boxes {
                *b = AxisSpec::new(b.q_min, b.q_max, n)?;
            }
        }
        if let Some(dt) = self.dt_snapshot {
            scenario.time.dt_snapshot = dt;
        }
        scenario.validate()
    }
}
