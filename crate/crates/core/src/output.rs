//! CSV outputs. Every file starts with a header row and floats are written
//! with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::ErrorReport;
use crate::geometry::unit_to_latlon;
use crate::solver::{ParticleField, PhaseTimings};

pub const SNAPSHOT_HEADER: [&str; 8] = ["particle_id", "x", "y", "z", "lat", "lon", "vorticity", "area"];
pub const RUN_LOG_HEADER: [&str; 5] = ["step", "time_days", "n_particles", "total_vorticity", "wall_seconds"];
pub const ERRORS_HEADER: [&str; 6] = ["n_particles", "theta", "degree", "rel_l2", "rel_linf", "wall_seconds"];
pub const ERRORS_VS_DIRECT_HEADER: [&str; 7] =
    ["quantity", "n_particles", "theta", "degree", "rel_l2", "rel_linf", "wall_seconds"];
pub const PHASE_TIMINGS_HEADER: [&str; 2] = ["phase", "seconds"];
pub const TIMINGS_HEADER: [&str; 9] =
    ["n_particles", "mesh_level", "theta", "degree", "workers", "direct_seconds", "fast_seconds", "speedup", "rel_l2"];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: bad value in column '{column}': {value}")]
    BadValue { path: PathBuf, column: String, value: String },
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, OutputError> {
    let file = File::create(path).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), OutputError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

pub fn snapshot_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("snapshot_{step:06}.csv"))
}

pub fn write_snapshot(path: &Path, field: &ParticleField) -> Result<(), OutputError> {
    let rows = (0..field.len()).map(|i| {
        let p = field.positions[i];
        let ll = unit_to_latlon(&p);
        vec![
            i.to_string(),
            fmt_f64(p.x()),
            fmt_f64(p.y()),
            fmt_f64(p.z()),
            fmt_f64(ll.lat),
            fmt_f64(ll.lon),
            fmt_f64(field.vorticity[i]),
            fmt_f64(field.areas[i]),
        ]
    });
    write_rows(path, &SNAPSHOT_HEADER, rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotRow {
    pub particle_id: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub lat: f64,
    pub lon: f64,
    pub vorticity: f64,
    pub area: f64,
}

/// Reads a snapshot by column name.
pub fn read_snapshot(path: &Path) -> Result<Vec<SnapshotRow>, OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let mut cols = [0usize; 8];
    for (c, name) in cols.iter_mut().zip(SNAPSHOT_HEADER) {
        *c = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| OutputError::MissingColumn { path: path.to_path_buf(), column: name.to_string() })?;
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let get = |k: usize| -> Result<f64, OutputError> {
            let s = &rec[cols[k]];
            s.parse().map_err(|_| OutputError::BadValue {
                path: path.to_path_buf(),
                column: SNAPSHOT_HEADER[k].to_string(),
                value: s.to_string(),
            })
        };
        out.push(SnapshotRow {
            particle_id: get(0)? as usize,
            x: get(1)?,
            y: get(2)?,
            z: get(3)?,
            lat: get(4)?,
            lon: get(5)?,
            vorticity: get(6)?,
            area: get(7)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLogRow {
    pub step: u64,
    pub time_days: f64,
    pub n_particles: usize,
    pub total_vorticity: f64,
    pub wall_seconds: f64,
}

pub fn write_run_log(path: &Path, rows: &[RunLogRow]) -> Result<(), OutputError> {
    write_rows(
        path,
        &RUN_LOG_HEADER,
        rows.iter().map(|r| {
            vec![r.step.to_string(), fmt_f64(r.time_days), r.n_particles.to_string(), fmt_f64(r.total_vorticity), fmt_f64(r.wall_seconds)]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub report: ErrorReport,
    pub theta: f64,
    pub degree: usize,
    pub wall_seconds: f64,
}

pub fn write_errors(path: &Path, rows: &[ErrorRow]) -> Result<(), OutputError> {
    write_rows(
        path,
        &ERRORS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.report.n_particles.to_string(),
                fmt_f64(r.theta),
                r.degree.to_string(),
                fmt_f64(r.report.rel_l2),
                fmt_f64(r.report.rel_linf),
                fmt_f64(r.wall_seconds),
            ]
        }),
    )
}

/// Like [`write_errors`] with the report label as a leading `quantity` column.
pub fn write_errors_vs_direct(path: &Path, rows: &[ErrorRow]) -> Result<(), OutputError> {
    write_rows(
        path,
        &ERRORS_VS_DIRECT_HEADER,
        rows.iter().map(|r| {
            vec![
                r.report.label.clone(),
                r.report.n_particles.to_string(),
                fmt_f64(r.theta),
                r.degree.to_string(),
                fmt_f64(r.report.rel_l2),
                fmt_f64(r.report.rel_linf),
                fmt_f64(r.wall_seconds),
            ]
        }),
    )
}

pub fn write_phase_timings(path: &Path, timings: &PhaseTimings) -> Result<(), OutputError> {
    write_rows(path, &PHASE_TIMINGS_HEADER, timings.rows().into_iter().map(|(name, s)| vec![name.to_string(), fmt_f64(s)]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRow {
    pub n_particles: usize,
    pub mesh_level: u32,
    pub theta: f64,
    pub degree: usize,
    pub workers: usize,
    pub direct_seconds: f64,
    pub fast_seconds: f64,
    pub speedup: f64,
    pub rel_l2: f64,
}

pub fn write_timings(path: &Path, rows: &[TimingRow]) -> Result<(), OutputError> {
    write_rows(
        path,
        &TIMINGS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.n_particles.to_string(),
                r.mesh_level.to_string(),
                fmt_f64(r.theta),
                r.degree.to_string(),
                r.workers.to_string(),
                fmt_f64(r.direct_seconds),
                fmt_f64(r.fast_seconds),
                fmt_f64(r.speedup),
                fmt_f64(r.rel_l2),
            ]
        }),
    )
}

/// Reads a timing table by column name.
pub fn read_timings(path: &Path) -> Result<Vec<TimingRow>, OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let mut cols = [0usize; 9];
    for (c, name) in cols.iter_mut().zip(TIMINGS_HEADER) {
        *c = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| OutputError::MissingColumn { path: path.to_path_buf(), column: name.to_string() })?;
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let get = |k: usize| -> Result<f64, OutputError> {
            let s = &rec[cols[k]];
            s.parse().map_err(|_| OutputError::BadValue {
                path: path.to_path_buf(),
                column: TIMINGS_HEADER[k].to_string(),
                value: s.to_string(),
            })
        };
        out.push(TimingRow {
            n_particles: get(0)? as usize,
            mesh_level: get(1)? as u32,
            theta: get(2)?,
            degree: get(3)? as usize,
            workers: get(4)? as usize,
            direct_seconds: get(5)?,
            fast_seconds: get(6)?,
            speedup: get(7)?,
            rel_l2: get(8)?,
        });
    }
    Ok(out)
}

/// Creates `dir` if needed.
pub fn ensure_dir(dir: &Path) -> Result<(), OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })
}

/// Writes a text file such as the resolved configuration.
pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    let mut f = File::create(path).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })?;
    f.write_all(text.as_bytes()).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let field = crate::solver::initial_field(crate::test_cases::TestCaseId::Rh4, 1, None).unwrap();
        let path = snapshot_path(dir.path(), 7);
        assert!(path.ends_with("snapshot_000007.csv"));
        write_snapshot(&path, &field).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("particle_id,x,y,z,lat,lon,vorticity,area\n"));
        let rows = read_snapshot(&path).unwrap();
        assert_eq!(rows.len(), field.len());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.particle_id, i);
            assert_eq!(r.z, field.positions[i].z());
            assert_eq!(r.vorticity, field.vorticity[i]);
            assert_eq!(r.area, field.areas[i]);
        }
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "particle_id,x,y,z,lat,lon,area\n0,1,0,0,0,0,1\n").unwrap();
        match read_snapshot(&path) {
            Err(OutputError::MissingColumn { column, .. }) => assert_eq!(column, "vorticity"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timing_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("timings.csv");
        let row = TimingRow {
            n_particles: 642,
            mesh_level: 3,
            theta: 0.7,
            degree: 6,
            workers: 1,
            direct_seconds: 0.25,
            fast_seconds: 0.125,
            speedup: 2.0,
            rel_l2: 1e-5,
        };
        write_timings(&path, &[row]).unwrap();
        assert_eq!(read_timings(&path).unwrap(), vec![row]);
    }
}
