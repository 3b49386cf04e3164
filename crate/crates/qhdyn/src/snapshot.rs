//! Binary snapshot files: self-contained Ψ(Q, t) dumps shared by the
//! propagator and the CLI import path.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "QDYNSNP1"
//! 8       4     u32 endianness sentinel 0x01020304
//! 12      4     u32 precision: bits per real component, 64 written, 32 accepted
//! 16      4     u32 spatial dimension ν
//! 20      4     u32 total axis count (cross-check: Σ_A N(A)·ν)
//! 24      8     f64 ħ
//! 32      8     f64 t
//! 40      4     u32 sort count S
//! --- repeated S times ---
//!         4     u32 label byte length L
//!         L     UTF-8 label
//!         4     u32 particle count N(A)
//!         8     f64 mass m_A
//!         8     f64 box q_min
//!         8     f64 box q_max
//!         8     u64 points per axis n
//! --- then ---
//!         8     u64 total grid points (must equal Π n^(N·ν))
//!         *     amplitudes: per point, re then im, at the header precision
//! ```
//!
//! A series is a directory of `NNNNNN.qsnap` files ordered by name; import
//! validates a shared grid, a shared ħ, and uniform time stamps.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;

use crate::lattice::{AxisSpec, ComplexField, ConfigurationGrid};
use crate::model::SortSpec;
use crate::propagator::WavefunctionSnapshot;
use crate::{QhdError, Result};

const MAGIC: &[u8; 8] = b"QDYNSNP1";
const SENTINEL: u32 = 0x0102_0304;
const MAX_LABEL_BYTES: u32 = 4096;

fn truncated(what: &str) -> impl FnOnce(std::io::Error) -> QhdError + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            QhdError::SnapshotFormat(format!("truncated file while reading {what}"))
        } else {
            QhdError::Io(e)
        }
    }
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated(what))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated(what))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated(what))?;
    Ok(f64::from_le_bytes(b))
}

/// Writes one snapshot in the documented layout, always at f64 precision.
pub fn write_snapshot(w: &mut impl Write, snap: &WavefunctionSnapshot, hbar: f64) -> Result<()> {
    let grid = snap.psi.grid();
    w.write_all(MAGIC)?;
    w.write_all(&SENTINEL.to_le_bytes())?;
    w.write_all(&64u32.to_le_bytes())?;
    w.write_all(&(grid.spatial_dim() as u32).to_le_bytes())?;
    w.write_all(&(grid.d_tot() as u32).to_le_bytes())?;
    w.write_all(&hbar.to_le_bytes())?;
    w.write_all(&snap.t.to_le_bytes())?;
    w.write_all(&(grid.sorts().len() as u32).to_le_bytes())?;
    let mut first_axis = 0usize;
    for sort in grid.sorts() {
        let label = sort.label.as_bytes();
        w.write_all(&(label.len() as u32).to_le_bytes())?;
        w.write_all(label)?;
        w.write_all(&(sort.count as u32).to_le_bytes())?;
        w.write_all(&sort.mass.to_le_bytes())?;
        let axis = grid.axis(first_axis);
        w.write_all(&axis.q_min.to_le_bytes())?;
        w.write_all(&axis.q_max.to_le_bytes())?;
        w.write_all(&(axis.n as u64).to_le_bytes())?;
        first_axis += sort.count * grid.spatial_dim();
    }
    w.write_all(&(grid.len() as u64).to_le_bytes())?;
    for z in snap.psi.data() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one snapshot; accepts 32- and 64-bit amplitude precision.
pub fn read_snapshot(r: &mut impl Read) -> Result<(WavefunctionSnapshot, f64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated("magic"))?;
    if &magic != MAGIC {
        return Err(QhdError::SnapshotFormat(format!(
            "magic mismatch: expected {:?}, found {:?}",
            String::from_utf8_lossy(MAGIC),
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut sentinel = [0u8; 4];
    r.read_exact(&mut sentinel)
        .map_err(truncated("endianness sentinel"))?;
    if sentinel == SENTINEL.to_be_bytes() {
        return Err(QhdError::SnapshotFormat(
            "foreign endianness: file was written big-endian, this reader is little-endian only"
                .into(),
        ));
    }
    if sentinel != SENTINEL.to_le_bytes() {
        return Err(QhdError::SnapshotFormat(format!(
            "endianness sentinel corrupt: {sentinel:02x?}"
        )));
    }
    let precision = read_u32(r, "precision")?;
    if precision != 32 && precision != 64 {
        return Err(QhdError::SnapshotFormat(format!(
            "unsupported precision: {precision} bits per component (32 or 64)"
        )));
    }
    let spatial_dim = read_u32(r, "spatial dimension")? as usize;
    let d_tot = read_u32(r, "total axis count")? as usize;
    let hbar = read_f64(r, "hbar")?;
    let t = read_f64(r, "time stamp")?;
    let n_sorts = read_u32(r, "sort count")?;

    let mut sorts = Vec::with_capacity(n_sorts as usize);
    let mut boxes = Vec::with_capacity(n_sorts as usize);
    for s in 0..n_sorts {
        let len = read_u32(r, "label length")?;
        if len > MAX_LABEL_BYTES {
            return Err(QhdError::SnapshotFormat(format!(
                "label of sort {s} claims {len} bytes"
            )));
        }
        let mut label = vec![0u8; len as usize];
        r.read_exact(&mut label).map_err(truncated("label"))?;
        let label = String::from_utf8(label)
            .map_err(|_| QhdError::SnapshotFormat(format!("label of sort {s} is not UTF-8")))?;
        let count = read_u32(r, "particle count")? as usize;
        let mass = read_f64(r, "mass")?;
        let q_min = read_f64(r, "box q_min")?;
        let q_max = read_f64(r, "box q_max")?;
        let n = read_u64(r, "axis points")? as usize;
        sorts.push(SortSpec::new(&label, count, mass));
        boxes.push(AxisSpec::new(q_min, q_max, n)?);
    }

    let grid = ConfigurationGrid::new(sorts, spatial_dim, &boxes, d_tot.max(1))?;
    if grid.d_tot() != d_tot {
        return Err(QhdError::SnapshotFormat(format!(
            "shape mismatch: header claims {d_tot} axes, the declared sorts need {}",
            grid.d_tot()
        )));
    }
    let npoints = read_u64(r, "point count")? as usize;
    if npoints != grid.len() {
        return Err(QhdError::SnapshotFormat(format!(
            "shape mismatch: header claims {npoints} points, the declared grid has {}",
            grid.len()
        )));
    }

    let mut data = Vec::with_capacity(npoints);
    if precision == 64 {
        let mut b = [0u8; 16];
        for _ in 0..npoints {
            r.read_exact(&mut b).map_err(truncated("amplitude data"))?;
            data.push(Complex64::new(
                f64::from_le_bytes(b[0..8].try_into().unwrap()),
                f64::from_le_bytes(b[8..16].try_into().unwrap()),
            ));
        }
    } else {
        let mut b = [0u8; 8];
        for _ in 0..npoints {
            r.read_exact(&mut b).map_err(truncated("amplitude data"))?;
            data.push(Complex64::new(
                f32::from_le_bytes(b[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(b[4..8].try_into().unwrap()) as f64,
            ));
        }
    }
    let psi = ComplexField::from_data(grid, data)?;
    Ok((WavefunctionSnapshot { t, psi }, hbar))
}

fn snapshot_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}.qsnap"))
}

/// Writes a series as `NNNNNN.qsnap` files under `dir` (created if needed).
pub fn write_series(
    dir: &Path,
    series: &[WavefunctionSnapshot],
    hbar: f64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(series.len());
    for (i, snap) in series.iter().enumerate() {
        let path = snapshot_path(dir, i);
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        write_snapshot(&mut file, snap, hbar)?;
        file.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads every `*.qsnap` under `dir` in name order and validates that the
/// files share one grid and one ħ, with uniform time stamps.
pub fn read_series(dir: &Path) -> Result<(Vec<WavefunctionSnapshot>, f64)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "qsnap"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(QhdError::SnapshotFormat(format!(
            "no .qsnap files in {}",
            dir.display()
        )));
    }
    let mut series = Vec::with_capacity(paths.len());
    let mut hbar = None;
    let mut grid: Option<Arc<ConfigurationGrid>> = None;
    for path in &paths {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let (snap, h) = read_snapshot(&mut file)?;
        match hbar {
            None => hbar = Some(h),
            Some(prev) if prev.to_bits() != h.to_bits() => {
                return Err(QhdError::SnapshotFormat(format!(
                    "hbar differs across the series: {prev} vs {h} in {}",
                    path.display()
                )));
            }
            _ => {}
        }
        match &grid {
            None => grid = Some(snap.psi.grid().clone()),
            Some(g) if g.as_ref() != snap.psi.grid().as_ref() => {
                return Err(QhdError::SnapshotFormat(format!(
                    "grid differs across the series at {}",
                    path.display()
                )));
            }
            _ => {}
        }
        series.push(snap);
    }
    if series.len() >= 2 {
        crate::bohm::snapshot_spacing(&series)?;
    }
    Ok((series, hbar.expect("nonempty series")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::AxisSpec;
    use crate::model::{PotentialSpec, Scenario, SeriesSource, TimeGrid};
    use crate::states::{ParticleState, StateSpec, Symmetrization};

    fn sample_snapshot() -> WavefunctionSnapshot {
        let grid = ConfigurationGrid::new(
            vec![SortSpec::new("e", 1, 1.0), SortSpec::new("p", 1, 2.0)],
            1,
            &[
                AxisSpec::new(-12.0, 12.0, 32).unwrap(),
                AxisSpec::new(-12.0, 12.0, 32).unwrap(),
            ],
            4,
        )
        .unwrap();
        let state = StateSpec {
            particles: vec![
                ParticleState::Gaussian {
                    center: vec![0.5],
                    sigma: 1.0,
                    momentum: vec![0.3],
                },
                ParticleState::Gaussian {
                    center: vec![-0.5],
                    sigma: 1.0,
                    momentum: vec![-0.1],
                },
            ],
            symmetrization: vec![Symmetrization::None, Symmetrization::None],
        };
        WavefunctionSnapshot {
            t: 0.25,
            psi: state
                .sample(&grid, &PotentialSpec::Free, 1.0, 0.25)
                .unwrap(),
        }
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("qhdyn-snapshot-{tag}-{}", std::process::id()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).unwrap();
        }
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let snap = sample_snapshot();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &snap, 1.0).unwrap();
        let (back, hbar) = read_snapshot(&mut bytes.as_slice()).unwrap();
        assert_eq!(hbar.to_bits(), 1.0_f64.to_bits());
        assert_eq!(back.t.to_bits(), snap.t.to_bits());
        assert_eq!(back.psi.grid().as_ref(), snap.psi.grid().as_ref());
        for (a, b) in back.psi.data().iter().zip(snap.psi.data()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn truncated_file_names_the_missing_section() {
        let snap = sample_snapshot();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &snap, 1.0).unwrap();
        bytes.truncate(bytes.len() / 2);
        let err = read_snapshot(&mut bytes.as_slice()).unwrap_err();
        assert!(
            err.to_string().contains("truncated"),
            "unexpected error: {err}"
        );

        let mut header_only = Vec::new();
        write_snapshot(&mut header_only, &snap, 1.0).unwrap();
        header_only.truncate(20);
        let err = read_snapshot(&mut header_only.as_slice()).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn foreign_endianness_is_rejected_with_a_message() {
        let snap = sample_snapshot();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &snap, 1.0).unwrap();
        bytes[8..12].copy_from_slice(&SENTINEL.to_be_bytes());
        let err = read_snapshot(&mut bytes.as_slice()).unwrap_err();
        assert!(
            err.to_string().contains("endianness"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &sample_snapshot(), 1.0).unwrap();
        bytes[0] = b'X';
        let err = read_snapshot(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let snap = sample_snapshot();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &snap, 1.0).unwrap();
        // The point-count header sits right before the amplitude block.
        let data_bytes = snap.psi.data().len() * 16;
        let count_at = bytes.len() - data_bytes - 8;
        bytes[count_at..count_at + 8].copy_from_slice(&999u64.to_le_bytes());
        let err = read_snapshot(&mut bytes.as_slice()).unwrap_err();
        assert!(err.to_string().contains("shape mismatch"), "{err}");
    }

    #[test]
    fn single_precision_files_are_readable() {
        let snap = sample_snapshot();
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &snap, 1.0).unwrap();
        let data_bytes = snap.psi.data().len() * 16;
        let header = bytes[..bytes.len() - data_bytes].to_vec();
        let mut small = header;
        small[12..16].copy_from_slice(&32u32.to_le_bytes());
        for z in snap.psi.data() {
            small.extend_from_slice(&(z.re as f32).to_le_bytes());
            small.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
        let (back, _) = read_snapshot(&mut small.as_slice()).unwrap();
        for (a, b) in back.psi.data().iter().zip(snap.psi.data()) {
            assert_eq!(a.re, b.re as f32 as f64);
            assert_eq!(a.im, b.im as f32 as f64);
        }
    }

    #[test]
    fn series_round_trip_preserves_order_and_spacing() {
        let scenario = Scenario {
            name: "snap".into(),
            hbar: 1.0,
            spatial_dim: 1,
            sorts: vec![SortSpec::new("e", 1, 1.0)],
            boxes: vec![AxisSpec::new(-13.0, 14.0, 64).unwrap()],
            max_axes: 4,
            potential: PotentialSpec::Free,
            state: StateSpec {
                particles: vec![ParticleState::Gaussian {
                    center: vec![0.0],
                    sigma: 1.0,
                    momentum: vec![0.5],
                }],
                symmetrization: vec![Symmetrization::None],
            },
            time: TimeGrid {
                t0: 0.0,
                dt_snapshot: 1e-2,
                snapshots: 4,
                substeps: 1,
            },
            series: SeriesSource::Analytic,
        };
        let series = crate::propagator::build_series(&scenario).unwrap();
        let dir = temp_dir("series");
        write_series(&dir, &series, 1.0).unwrap();
        let (back, hbar) = read_series(&dir).unwrap();
        assert_eq!(hbar, 1.0);
        assert_eq!(back.len(), series.len());
        for (a, b) in back.iter().zip(&series) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            for (x, y) in a.psi.data().iter().zip(b.psi.data()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn non_uniform_series_is_rejected_on_import() {
        let snap = sample_snapshot();
        let dir = temp_dir("jitter");
        let mut late = snap.clone();
        late.t = 1.0;
        let mut later = snap.clone();
        later.t = 2.5;
        write_series(&dir, &[snap, late, later], 1.0).unwrap();
        let err = read_series(&dir).unwrap_err();
        assert!(matches!(err, QhdError::NonUniformTimes));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_directory_is_an_explicit_error() {
        let dir = temp_dir("empty");
        let err = read_series(&dir).unwrap_err();
        assert!(err.to_string().contains("no .qsnap files"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
