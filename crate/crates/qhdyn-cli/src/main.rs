//! Batch front end: loads a scenario, runs the requested pipeline stages,
//! and writes plot-ready artifacts into the output directory.
//!
//! Artifacts per stage: `propagate` exports the snapshot series (binary),
//! `fields` dumps the configuration-space quantities at the center snapshot
//! (CSV), `reduce` dumps the single-position hydrodynamic fields per sort and
//! total (CSV), `trajectories` writes the sampled bundle and its transport
//! statistic, `verify` writes the residual report (JSON + text).
//!
//! Exit codes: 0 all residuals within tolerances, 2 a residual exceeded its
//! tolerance, 1 operational error (bad flags, bad config, unreadable file).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qhdyn::bohm::{
    bm_continuity_residual, density, integrate_trajectories, sample_seeds, snapshot_spacing,
    transport_statistic, BohmFields, TrajectoryStatus, NODE_MASK_FACTOR,
};
use qhdyn::config::{self, Overrides};
use qhdyn::lattice::{MaskField, ScalarField, Tensor2Field, VectorField};
use qhdyn::model::{PotentialSpec, Scenario};
use qhdyn::mpqhd::{compute_all_sorts, totals};
use qhdyn::presets;
use qhdyn::propagator::{build_series, WavefunctionSnapshot};
use qhdyn::snapshot::{read_series, write_series};
use qhdyn::verify::{
    balance_residuals, entries_for_balance, entries_for_bm, entries_for_convergence,
    entries_for_force_identity, entry_for_vqu_agreement, fit_convergence, render_json,
    render_table, sort_entries, strided_triplet, ConvergencePoint, ReportEntry, Tolerances,
};

#[derive(Parser)]
#[command(
    name = "qhdyn",
    version,
    about = "Configuration-space quantum dynamics pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario pipeline and write its artifacts.
    Run(RunArgs),
    /// Re-analyze an exported snapshot series without the propagator.
    Import(ImportArgs),
    /// List the built-in scenario presets.
    ListScenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or scenario TOML file path.
    #[arg(long)]
    scenario: String,
    /// Comma-separated subset of propagate,fields,reduce,trajectories,verify.
    #[arg(long, default_value = "propagate,fields,reduce,trajectories,verify")]
    stages: String,
    /// Output directory, created if missing.
    #[arg(long, default_value = "qhdyn-out")]
    out: PathBuf,
    /// Trajectory sampling seed; recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectory count for the trajectories stage.
    #[arg(long, default_value_t = 1000)]
    trajectories: usize,
    /// Point-count override for every grid axis, written n=POINTS.
    #[arg(long, value_name = "n=POINTS")]
    grid_override: Option<String>,
    /// Stored-snapshot spacing override.
    #[arg(long, value_name = "SECONDS", allow_hyphen_values = true)]
    dt_override: Option<f64>,
    /// TOML file overriding the verification tolerances.
    #[arg(long, value_name = "FILE")]
    tolerances: Option<PathBuf>,
}

#[derive(Args)]
struct ImportArgs {
    /// Directory holding an exported .qsnap series.
    #[arg(long)]
    snapshots: PathBuf,
    /// Optional preset name or scenario file supplying the potential for
    /// force-dependent residuals; a free potential is assumed otherwise.
    /// Grid, masses, and hbar always come from the snapshot files.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated subset of fields,reduce,trajectories,verify.
    #[arg(long, default_value = "fields,reduce,verify")]
    stages: String,
    /// Output directory, created if missing.
    #[arg(long, default_value = "qhdyn-out")]
    out: PathBuf,
    /// Trajectory sampling seed; recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectory count for the trajectories stage.
    #[arg(long, default_value_t = 1000)]
    trajectories: usize,
    /// TOML file overriding the verification tolerances.
    #[arg(long, value_name = "FILE")]
    tolerances: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Err(err) = init_thread_pool() {
        eprintln!("error: {err:#}");
        return ExitCode::from(1);
    }
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Import(args) => import(args),
        Command::ListScenarios => list_scenarios(),
    };
    match outcome {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceExceeded) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn init_thread_pool() -> Result<()> {
    if let Ok(raw) = std::env::var("QHDYN_THREADS") {
        let threads: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("QHDYN_THREADS must be a positive integer, got `{raw}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing the thread pool")?;
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Pass,
    ToleranceExceeded,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Stage {
    Propagate,
    Fields,
    Reduce,
    Trajectories,
    Verify,
}

impl Stage {
    const ORDER: [Stage; 5] = [
        Stage::Propagate,
        Stage::Fields,
        Stage::Reduce,
        Stage::Trajectories,
        Stage::Verify,
    ];

    fn name(self) -> &'static str {
        match self {
            Stage::Propagate => "propagate",
            Stage::Fields => "fields",
            Stage::Reduce => "reduce",
            Stage::Trajectories => "trajectories",
            Stage::Verify => "verify",
        }
    }
}

/// Parses the comma-separated stage list into canonical pipeline order.
fn parse_stages(list: &str, allow_propagate: bool) -> Result<Vec<Stage>> {
    let mut selected = Vec::new();
    for raw in list.split(',') {
        let name = raw.trim();
        if name.is_empty() {
            continue;
        }
        let stage = Stage::ORDER
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .with_context(|| {
                format!("unknown stage `{name}`; expected propagate, fields, reduce, trajectories, verify")
            })?;
        if stage == Stage::Propagate && !allow_propagate {
            bail!("the propagate stage needs a scenario; import analyzes stored snapshots");
        }
        if !selected.contains(&stage) {
            selected.push(stage);
        }
    }
    if selected.is_empty() {
        bail!("stage list is empty");
    }
    selected.sort_by_key(|s| Stage::ORDER.iter().position(|o| o == s));
    Ok(selected)
}

/// A preset name resolves to the embedded catalog; anything else is a path.
fn load_scenario_arg(arg: &str) -> Result<Scenario> {
    if presets::names().contains(&arg) {
        Ok(presets::load(arg)?)
    } else {
        Ok(config::load_scenario(Path::new(arg))?)
    }
}

fn load_tolerances(path: Option<&Path>) -> Result<Tolerances> {
    match path {
        None => Ok(Tolerances::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("tolerances file {}", p.display()))
        }
    }
}

fn parse_grid_override(raw: Option<&str>) -> Result<Option<usize>> {
    match raw {
        None => Ok(None),
        Some(text) => {
            let n = text
                .strip_prefix("n=")
                .and_then(|v| v.parse::<usize>().ok())
                .with_context(|| format!("grid override must look like n=256, got `{text}`"))?;
            Ok(Some(n))
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    command: &'a str,
    scenario: &'a str,
    scenario_name: &'a str,
    stages: Vec<&'static str>,
    out: String,
    seed: u64,
    trajectories: usize,
    grid_override: Option<usize>,
    dt_override: Option<f64>,
    hbar: f64,
    tolerances: &'a Tolerances,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(args: RunArgs) -> Result<Outcome> {
    let stages = parse_stages(&args.stages, true)?;
    let mut scenario = load_scenario_arg(&args.scenario)?;
    let grid_n = parse_grid_override(args.grid_override.as_deref())?;
    Overrides {
        grid_n,
        dt_snapshot: args.dt_override,
    }
    .apply(&mut scenario)?;
    let tolerances = load_tolerances(args.tolerances.as_deref())?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command: "run",
        scenario: &args.scenario,
        scenario_name: &scenario.name,
        stages: stages.iter().map(|s| s.name()).collect(),
        out: args.out.display().to_string(),
        seed: args.seed,
        trajectories: args.trajectories,
        grid_override: grid_n,
        dt_override: args.dt_override,
        hbar: scenario.hbar,
        tolerances: &tolerances,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    write_text(&args.out.join("run_manifest.json"), &manifest_json)?;

    let series = build_series(&scenario)?;
    println!(
        "built series `{}`: {} snapshots, t = {:.6} .. {:.6}",
        scenario.name,
        series.len(),
        series[0].t,
        series[series.len() - 1].t
    );

    let pipeline = Pipeline {
        name: scenario.name.clone(),
        series: &series,
        hbar: scenario.hbar,
        potential: scenario.potential.clone(),
        out: args.out.clone(),
        tolerances,
        seed: args.seed,
        trajectory_count: args.trajectories,
    };
    pipeline.execute(&stages)
}

fn import(args: ImportArgs) -> Result<Outcome> {
    let stages = parse_stages(&args.stages, false)?;
    let (series, hbar) = read_series(&args.snapshots)?;
    let (name, scenario_arg, potential) = match &args.scenario {
        Some(arg) => {
            let sc = load_scenario_arg(arg)?;
            if (sc.hbar - hbar).abs() > 0.0 {
                eprintln!(
                    "note: scenario hbar {} differs from the imported series hbar {}; using the series value",
                    sc.hbar, hbar
                );
            }
            (sc.name, arg.as_str(), sc.potential)
        }
        None => ("imported".to_string(), "", PotentialSpec::Free),
    };
    let tolerances = load_tolerances(args.tolerances.as_deref())?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command: "import",
        scenario: scenario_arg,
        scenario_name: &name,
        stages: stages.iter().map(|s| s.name()).collect(),
        out: args.out.display().to_string(),
        seed: args.seed,
        trajectories: args.trajectories,
        grid_override: None,
        dt_override: None,
        hbar,
        tolerances: &tolerances,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    write_text(&args.out.join("run_manifest.json"), &manifest_json)?;

    println!(
        "imported {} snapshots from {}, t = {:.6} .. {:.6}",
        series.len(),
        args.snapshots.display(),
        series[0].t,
        series[series.len() - 1].t
    );

    let pipeline = Pipeline {
        name,
        series: &series,
        hbar,
        potential,
        out: args.out.clone(),
        tolerances,
        seed: args.seed,
        trajectory_count: args.trajectories,
    };
    pipeline.execute(&stages)
}

fn list_scenarios() -> Result<Outcome> {
    for (name, description, _) in presets::catalog() {
        println!("{name:<22} {description}");
    }
    Ok(Outcome::Pass)
}

struct Pipeline<'a> {
    name: String,
    series: &'a [WavefunctionSnapshot],
    hbar: f64,
    potential: PotentialSpec,
    out: PathBuf,
    tolerances: Tolerances,
    seed: u64,
    trajectory_count: usize,
}

impl Pipeline<'_> {
    fn execute(&self, stages: &[Stage]) -> Result<Outcome> {
        let mut outcome = Outcome::Pass;
        for stage in stages {
            match stage {
                Stage::Propagate => self.export_snapshots()?,
                Stage::Fields => self.dump_configuration_fields()?,
                Stage::Reduce => self.dump_hydrodynamic_fields()?,
                Stage::Trajectories => self.run_trajectories()?,
                Stage::Verify => {
                    if self.verify()? == Outcome::ToleranceExceeded {
                        outcome = Outcome::ToleranceExceeded;
                    }
                }
            }
        }
        Ok(outcome)
    }

    fn center(&self) -> usize {
        self.series.len() / 2
    }

    fn export_snapshots(&self) -> Result<()> {
        let dir = self.out.join("snapshots");
        write_series(&dir, self.series, self.hbar)?;
        println!(
            "propagate: wrote {} snapshots to {}",
            self.series.len(),
            dir.display()
        );
        Ok(())
    }

    fn dump_configuration_fields(&self) -> Result<()> {
        let snap = &self.series[self.center()];
        let fields = BohmFields::compute(&snap.psi, self.hbar)?;
        let grid = snap.psi.grid().clone();
        let nu = grid.spatial_dim();

        let mut header: Vec<String> = (0..grid.d_tot()).map(|a| format!("q{a}")).collect();
        header.push("density".into());
        header.push("vqu_density_form".into());
        header.push("vqu_amplitude_form".into());
        let particles = grid.particles();
        for (i, p) in particles.iter().enumerate() {
            let label = format!("{}{}", grid.sorts()[p.sort].label, p.index);
            for c in 0..nu {
                header.push(format!("w[{label}]_{c}"));
                header.push(format!("J[{label}]_{c}"));
                header.push(format!("d[{label}]_{c}"));
            }
            let _ = i;
        }
        header.push("masked".into());

        let mut text = header.join(",");
        text.push('\n');
        let mut coords = vec![0.0; grid.d_tot()];
        for idx in 0..grid.len() {
            grid.coords_of(idx, &mut coords);
            let mut row = String::new();
            for q in &coords {
                let _ = write!(row, "{q:.17e},");
            }
            let _ = write!(
                row,
                "{:.17e},{:.17e},{:.17e}",
                fields.density.data()[idx],
                fields.quantum_potential.data()[idx],
                fields.quantum_potential_amplitude.data()[idx]
            );
            for (i, _) in particles.iter().enumerate() {
                for c in 0..nu {
                    let _ = write!(
                        row,
                        ",{:.17e},{:.17e},{:.17e}",
                        fields.velocities[i].component(c).data()[idx],
                        fields.currents[i].component(c).data()[idx],
                        fields.osmotic[i].component(c).data()[idx]
                    );
                }
            }
            let _ = write!(row, ",{}", u8::from(fields.mask.is_masked(idx)));
            text.push_str(&row);
            text.push('\n');
        }
        let path = self.out.join("fields_configuration.csv");
        write_text(&path, &text)?;
        println!(
            "fields: wrote {} at t = {:.6} ({} points, {:.1}% masked)",
            path.display(),
            snap.t,
            grid.len(),
            100.0 * fields.mask_fraction
        );
        Ok(())
    }

    fn dump_hydrodynamic_fields(&self) -> Result<()> {
        let snap = &self.series[self.center()];
        let sets = compute_all_sorts(&snap.psi, &self.potential, self.hbar, snap.t)?;
        for set in &sets {
            let mut columns: Vec<(String, &ScalarField)> = Vec::new();
            columns.push(("rho_m".into(), &set.mass_density));
            push_vector(&mut columns, "j", &set.mass_current);
            push_vector(&mut columns, "v", &set.velocity);
            columns.push(("P".into(), &set.scalar_pressure));
            push_tensor(&mut columns, "Pi_cl", &set.momentum_flow_classical);
            push_tensor(&mut columns, "Pi_qu", &set.momentum_flow_quantum);
            push_tensor(&mut columns, "Pi", &set.momentum_flow);
            push_vector(&mut columns, "f", &set.force_density);
            push_vector(&mut columns, "f_qu", &set.quantum_force_density);
            push_vector(&mut columns, "f_qu_div", &set.quantum_force_divergence_form);
            push_tensor(&mut columns, "p", &set.pressure_tensor);
            let path = self.out.join(format!("mpqhd_{}.csv", sanitize(&set.label)));
            write_position_csv(&path, &columns, &set.velocity_mask)?;
            println!("reduce: wrote {}", path.display());
        }
        let tot = totals(&sets)?;
        let mut columns: Vec<(String, &ScalarField)> = Vec::new();
        columns.push(("rho_m".into(), &tot.mass_density));
        push_vector(&mut columns, "j", &tot.mass_current);
        push_vector(&mut columns, "v", &tot.velocity);
        push_tensor(&mut columns, "Pi", &tot.momentum_flow);
        push_vector(&mut columns, "f", &tot.force_density);
        push_tensor(&mut columns, "p", &tot.pressure_tensor);
        let path = self.out.join("mpqhd_total.csv");
        write_position_csv(&path, &columns, &tot.velocity_mask)?;
        println!("reduce: wrote {}", path.display());
        Ok(())
    }

    fn run_trajectories(&self) -> Result<()> {
        let initial = density(&self.series[0].psi);
        let seeds = sample_seeds(&initial, self.trajectory_count, self.seed);
        let bundle = integrate_trajectories(self.series, self.hbar, seeds, NODE_MASK_FACTOR)?;
        let target = density(&self.series[self.series.len() - 1].psi);
        let chi = transport_statistic(&bundle, &target)?;

        let mut text = String::from("path,status");
        let d_tot = self.series[0].psi.grid().d_tot();
        text.push_str(",t");
        for a in 0..d_tot {
            let _ = write!(text, ",q{a}");
        }
        text.push('\n');
        for (i, path) in bundle.paths.iter().enumerate() {
            let status = match path.status {
                TrajectoryStatus::Completed => "completed".to_string(),
                TrajectoryStatus::ExitedBox { at } => format!("exited_box@{at:.6e}"),
                TrajectoryStatus::EnteredNodeRegion { at } => {
                    format!("entered_node@{at:.6e}")
                }
            };
            for (ti, t) in bundle.times.iter().enumerate() {
                let _ = write!(text, "{i},{status},{t:.17e}");
                for q in &path.positions[ti] {
                    let _ = write!(text, ",{q:.17e}");
                }
                text.push('\n');
            }
        }
        let path = self.out.join("trajectories.csv");
        write_text(&path, &text)?;

        #[derive(Serialize)]
        struct TrajectorySummary<'a> {
            seed: u64,
            count: usize,
            completed: usize,
            chi_square: &'a qhdyn::bohm::ChiSquare,
        }
        let summary = TrajectorySummary {
            seed: self.seed,
            count: self.trajectory_count,
            completed: bundle.completed(),
            chi_square: &chi,
        };
        let mut json = serde_json::to_string_pretty(&summary)?;
        json.push('\n');
        write_text(&self.out.join("trajectory_summary.json"), &json)?;
        println!(
            "trajectories: {} paths ({} completed), transport p-value {:.4}",
            self.trajectory_count,
            bundle.completed(),
            chi.p_value
        );
        Ok(())
    }

    fn verify(&self) -> Result<Outcome> {
        let mid = self.center();
        let dt = snapshot_spacing(self.series)?;
        let grid = self.series[0].psi.grid().clone();
        let resolution = format!("n={} dt={dt:.3e}", grid.axis(0).n);

        let mut entries: Vec<ReportEntry> = entries_for_bm(
            &self.name,
            &resolution,
            self.series,
            mid,
            &self.potential,
            self.hbar,
        )?;
        let report = balance_residuals(self.series, mid, &self.potential, self.hbar)?;
        entries.extend(entries_for_balance(&self.name, &resolution, &report));
        entries.extend(entries_for_force_identity(
            &self.name,
            &resolution,
            &report.sets,
        )?);
        entries.push(entry_for_vqu_agreement(
            &self.name,
            &resolution,
            &self.series[mid].psi,
            self.hbar,
        )?);

        // A coarsened-cadence study when the series is long enough for a
        // three-point fit around the center; informational rows, not gated.
        if mid >= 4 && mid + 4 < self.series.len() {
            let mut points = Vec::new();
            for stride in [4usize, 2, 1] {
                let triplet = strided_triplet(self.series, mid, stride)?;
                let (_, norm) = bm_continuity_residual(&triplet, 1, self.hbar)?;
                points.push(ConvergencePoint {
                    knob: stride as f64 * dt,
                    norm: norm.relative(),
                    resolution: format!("dt={:.3e}", stride as f64 * dt),
                });
            }
            let table = fit_convergence(points)?;
            entries.extend(entries_for_convergence(
                &self.name,
                "bm_continuity_convergence",
                "configuration",
                &table,
            ));
        }

        sort_entries(&mut entries);
        write_text(&self.out.join("report.json"), &render_json(&entries))?;
        let table = render_table(&entries);
        write_text(&self.out.join("report.txt"), &table)?;
        print!("{table}");

        let violations = self.tolerances.violations(&entries);
        if violations.is_empty() {
            println!(
                "verify: {} residual rows, all within tolerances",
                entries.len()
            );
            Ok(Outcome::Pass)
        } else {
            for v in &violations {
                let limit = self.tolerances.limit_for(&v.equation).unwrap_or(f64::NAN);
                println!(
                    "verify: tolerance exceeded: {} [{}] norm {:.3e} > {limit:.0e}",
                    v.equation, v.sort, v.norm
                );
            }
            Ok(Outcome::ToleranceExceeded)
        }
    }
}

fn push_vector<'a>(
    columns: &mut Vec<(String, &'a ScalarField)>,
    name: &str,
    field: &'a VectorField,
) {
    for c in 0..field.nu() {
        columns.push((format!("{name}_{c}"), field.component(c)));
    }
}

fn push_tensor<'a>(
    columns: &mut Vec<(String, &'a ScalarField)>,
    name: &str,
    field: &'a Tensor2Field,
) {
    let nu = field.nu();
    for alpha in 0..nu {
        for beta in alpha..nu {
            columns.push((format!("{name}_{alpha}{beta}"), field.at(alpha, beta)));
        }
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// One row per position-grid point: coordinates, the listed columns, and the
/// density-mask flag.
fn write_position_csv(
    path: &Path,
    columns: &[(String, &ScalarField)],
    mask: &MaskField,
) -> Result<()> {
    let grid = columns[0].1.grid().clone();
    let mut text: String = (0..grid.d_tot()).map(|a| format!("q{a},")).collect();
    text.push_str(
        &columns
            .iter()
            .map(|(name, _)| name.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );
    text.push_str(",masked\n");
    let mut coords = vec![0.0; grid.d_tot()];
    for idx in 0..grid.len() {
        grid.coords_of(idx, &mut coords);
        for q in &coords {
            let _ = write!(text, "{q:.17e},");
        }
        let mut first = true;
        for (_, field) in columns {
            if !first {
                text.push(',');
            }
            first = false;
            let _ = write!(text, "{:.17e}", field.data()[idx]);
        }
        let _ = write!(text, ",{}", u8::from(mask.is_masked(idx)));
        text.push('\n');
    }
    write_text(path, &text)
}
