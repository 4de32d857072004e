//! CSV trajectories, JSON summaries, SVG line plots and raw field snapshots.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{DiagnosticsRecord, CSV_HEADER};
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::grid::{PeriodicGrid, ScalarField};

use super::{ExperimentConfig, RunOutcome, SequenceResult};

/// Magic bytes of a field snapshot.
pub const SNAPSHOT_MAGIC: [u8; 8] = *b"YAMABEU1";
pub const SNAPSHOT_HEADER_LEN: usize = 32;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let fail = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    };
    w.write_record(CSV_HEADER.split(',')).map_err(fail)?;
    for r in records {
        w.serialize(r).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a trajectory CSV, requiring the exact header.
pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let header = text.lines().next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(format(format!("unexpected header `{header}`")));
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .map(|row| row.map_err(|e| format(e.to_string())))
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Little-endian snapshot: 8-byte magic, `n` and `m` as `u32`, four `f32`
/// side lengths (unused axes zero), then the `m^n` samples as `f64`.
pub fn write_snapshot(path: &Path, field: &ScalarField) -> Result<()> {
    let grid = field.grid();
    let mut bytes = Vec::with_capacity(SNAPSHOT_HEADER_LEN + 8 * field.len());
    bytes.extend_from_slice(&SNAPSHOT_MAGIC);
    bytes.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    bytes.extend_from_slice(&(grid.points_per_axis() as u32).to_le_bytes());
    for axis in 0..4 {
        let l = grid.lengths().get(axis).copied().unwrap_or(0.0) as f32;
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<ScalarField> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let format = |message: &str| Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < SNAPSHOT_HEADER_LEN || bytes[..8] != SNAPSHOT_MAGIC {
        return Err(format("not a field snapshot"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let n = word(8) as usize;
    let m = word(12) as usize;
    let lengths: Vec<f64> = (0..n.min(4))
        .map(|k| f32::from_le_bytes(bytes[16 + 4 * k..20 + 4 * k].try_into().expect("4 bytes")) as f64)
        .collect();
    let grid = PeriodicGrid::new(n, m, &lengths).map_err(|e| format(&e.to_string()))?;
    let body = &bytes[SNAPSHOT_HEADER_LEN..];
    if body.len() != 8 * grid.len() {
        return Err(format("sample count does not match the header"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ScalarField::from_values(grid, values)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Minimal SVG line chart. With `log_y`, non-positive samples are dropped.
pub fn line_plot_svg(title: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)], log_y: bool) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 130.0, 40.0, 50.0);
    let transform = |y: f64| if log_y { y.log10() } else { y };
    let points: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, pts)| {
            pts.iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
                .map(|&(x, y)| (x, transform(y)))
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let mut s = String::new();
    s += &format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s += &format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n");
    s += &format!("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", w / 2.0, escape(title));
    s += &format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        w - left - right,
        h - top - bottom
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let ylab = if log_y { format!("1e{yv:.1}") } else { format!("{yv:.3e}") };
        s += &format!("<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xv:.3e}</text>\n", px(xv), h - bottom + 18.0);
        s += &format!("<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{ylab}</text>\n", left - 6.0, py(yv) + 4.0);
    }
    s += &format!("<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">t</text>\n", (left + w - right) / 2.0, h - 8.0);
    s += &format!(
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (k, ((name, _), pts)) in series.iter().zip(&points).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        s += &format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        );
        let ly = top + 14.0 + 16.0 * k as f64;
        s += &format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{colour}\" stroke-width=\"2\"/>\n",
            w - right + 8.0,
            w - right + 28.0
        );
        s += &format!("<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n", w - right + 32.0, ly + 4.0, escape(name));
    }
    s += "</svg>\n";
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_plots(dir: &Path, runs: &[(String, &Trajectory)]) -> Result<Vec<PathBuf>> {
    let series = |f: &dyn Fn(&Trajectory, usize) -> f64| -> Vec<(String, Vec<(f64, f64)>)> {
        runs.iter()
            .map(|(name, tr)| {
                let pts = (0..tr.records.len()).map(|i| (tr.records[i].t, f(tr, i))).collect();
                (name.clone(), pts)
            })
            .collect()
    };
    let plots = [
        ("R_min.svg", "minimum scalar curvature", "R_min", series(&|tr, i| tr.records[i].r_min), false),
        ("volume.svg", "volume", "Vol(g)", series(&|tr, i| tr.records[i].vol_g), false),
        (
            "flat_distance.svg",
            "distance to the nearest flat metric",
            "flat distance",
            series(&|tr, i| tr.flat_distances[i]),
            true,
        ),
    ];
    let mut written = Vec::new();
    for (file, title, label, data, log_y) in plots {
        let path = dir.join(file);
        write_text(&path, &line_plot_svg(title, label, &data, log_y))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `trajectory.csv`, `summary.json`, plots and the optional final
/// snapshot of a single run into `dir`.
pub fn emit_run_outputs(dir: &Path, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let cfg: &ExperimentConfig = &outcome.summary.config;
    let mut written = Vec::new();
    let csv_path = dir.join("trajectory.csv");
    write_csv(&csv_path, &outcome.trajectory.records)?;
    written.push(csv_path);
    let summary = dir.join("summary.json");
    write_json(&summary, &outcome.summary)?;
    written.push(summary);
    if cfg.output.plots {
        written.extend(write_plots(dir, &[("run".to_string(), &outcome.trajectory)])?);
    }
    if cfg.output.snapshot {
        if let Some(u) = &outcome.final_factor {
            let path = dir.join("final_u.bin");
            write_snapshot(&path, u)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Serialize)]
struct SequenceFile<'a> {
    config: &'a ExperimentConfig,
    result: &'a SequenceResult,
}

/// Writes one CSV per member, `sequence.json` and the plots.
pub fn emit_sequence_outputs(dir: &Path, cfg: &ExperimentConfig, result: &SequenceResult) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    for m in &result.members {
        let path = dir.join(format!("member_{:02}.csv", m.index));
        write_csv(&path, &m.trajectory.records)?;
        written.push(path);
    }
    let path = dir.join("sequence.json");
    write_json(&path, &SequenceFile { config: cfg, result })?;
    written.push(path);
    if cfg.output.plots {
        let runs: Vec<(String, &Trajectory)> = result
            .members
            .iter()
            .map(|m| (format!("i = {}", m.index), &m.trajectory))
            .collect();
        written.extend(write_plots(dir, &runs)?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{config::InitialSpec, run_experiment};
    use crate::flow::NullSink;

    fn static_outcome() -> RunOutcome {
        let mut cfg = ExperimentConfig::default();
        cfg.grid.m = 8;
        cfg.initial = InitialSpec::Constant { value: 1.0 };
        cfg.output.snapshot = true;
        run_experiment(&cfg, &mut NullSink).unwrap()
    }

    #[test]
    fn static_run_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = static_outcome();
        let files = emit_run_outputs(dir.path(), &out).unwrap();
        assert_eq!(files.len(), 6);
        let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        let back = read_csv(&dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(back, out.trajectory.records);
        for r in &back {
            assert_eq!([r.r_min, r.r_max, r.r_l1], [0.0; 3]);
        }
        let svg = fs::read_to_string(dir.path().join("volume.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(json["converged"], serde_json::Value::Bool(true));
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let r = DiagnosticsRecord {
            t: 0.1 + 0.2,
            dt: 1.0 / 3.0,
            u_min: 1e-300,
            u_max: 123456.789,
            vol_g: std::f64::consts::PI,
            r_min: -5e-324,
            r_max: 2.0f64.sqrt(),
            r_l1: 1e300,
            vol_identity_residual: 0.0,
            evo_r_residual_l2: -0.0,
            lp_dist_initial: 7.0,
            lp_dist_flat: f64::EPSILON,
            moser_ratio: 1.0 + f64::EPSILON,
        };
        let path = dir.path().join("x.csv");
        write_csv(&path, &[r, r]).unwrap();
        let back = read_csv(&path).unwrap();
        for (a, b) in back[0].values().iter().zip(r.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,dt\n0,0\n").unwrap();
        let err = read_csv(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(read_csv(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn snapshot_layout() {
        let dir = tempfile::tempdir().unwrap();
        let g = PeriodicGrid::new(3, 8, &[1.0, 2.0, 0.5]).unwrap();
        let f = ScalarField::from_fn(g, |x| 1.0 + x[0] * x[1] - x[2]).unwrap();
        let path = dir.path().join("u.bin");
        write_snapshot(&path, &f).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 32 + 8 * 512);
        assert_eq!(&bytes[..8], b"YAMABEU1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 8);
        assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 2.0);
        assert_eq!(f32::from_le_bytes(bytes[28..32].try_into().unwrap()), 0.0);
        assert_eq!(read_snapshot(&path).unwrap(), f);
        fs::write(&path, b"garbage").unwrap();
        assert!(read_snapshot(&path).is_err());
    }

    #[test]
    fn unwritable_directory_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_run_outputs(&blocker.join("sub"), &static_outcome()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("sub"));
    }
}
