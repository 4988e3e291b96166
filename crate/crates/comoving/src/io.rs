//! Field, track and table files.
//!
//! Fields are CSV with one time row per line and a metadata first line
//! `# K=<n_space> T=<n_time> dt=<dt>`. Numbers are written in Rust's
//! shortest round-trip form so a save/load cycle is bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use comoving_core::tracking::{PeakPoint, WaveTrack};
use comoving_core::SpatiotemporalField;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

fn parse_err(path: &Path, line: usize, column: usize, message: impl Into<String>) -> AppError {
    AppError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Renders a field in the CSV layout described in the module docs.
pub fn field_to_csv(field: &SpatiotemporalField) -> String {
    let mut s = format!("# K={} T={} dt={:?}\n", field.n_space(), field.n_time(), field.dt());
    for row in field.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

struct Header {
    k: usize,
    t: usize,
    dt: f64,
}

fn parse_header(path: &Path, line: &str) -> AppResult<Header> {
    let missing = || parse_err(path, 1, 1, "expected header '# K=<int> T=<int> dt=<float>'");
    let body = line.trim().strip_prefix('#').ok_or_else(missing)?;
    let (mut k, mut t, mut dt) = (None, None, None);
    for tok in body.split_whitespace() {
        let (key, val) = tok.split_once('=').ok_or_else(missing)?;
        let bad = |what: &str| parse_err(path, 1, 1, format!("header {key}: {what}: '{val}'"));
        match key {
            "K" => k = Some(val.parse::<usize>().map_err(|_| bad("not an integer"))?),
            "T" => t = Some(val.parse::<usize>().map_err(|_| bad("not an integer"))?),
            "dt" => dt = Some(val.parse::<f64>().map_err(|_| bad("not a number"))?),
            _ => return Err(parse_err(path, 1, 1, format!("unknown header key '{key}'"))),
        }
    }
    match (k, t, dt) {
        (Some(k), Some(t), Some(dt)) => Ok(Header { k, t, dt }),
        _ => Err(missing()),
    }
}

/// Parses field CSV from a reader; `path` is only used in error messages.
pub fn read_field<R: Read>(reader: R, path: &Path) -> AppResult<SpatiotemporalField> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| AppError::io(path, e))?;
    let header = parse_header(path, &first)?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::with_capacity(header.k * header.t);
    let mut rows = 0;
    for (r, rec) in csv.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| parse_err(path, line, 1, e.to_string()))?;
        if rec.len() != header.k {
            return Err(parse_err(
                path,
                line,
                rec.len().min(header.k) + 1,
                format!("expected {} values, found {}", header.k, rec.len()),
            ));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, c + 1, format!("not a number: '{cell}'")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, c + 1, format!("non-finite value '{cell}'")));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != header.t {
        return Err(parse_err(
            path,
            rows + 2,
            1,
            format!("header declares T={} rows, found {rows}", header.t),
        ));
    }
    Ok(SpatiotemporalField::new(values, header.t, header.k, header.dt)?)
}

pub fn load_field(path: &Path) -> AppResult<SpatiotemporalField> {
    let f = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_field(f, path)
}

pub fn save_field(field: &SpatiotemporalField, path: &Path) -> AppResult<()> {
    write_bytes(path, field_to_csv(field).as_bytes())
}

/// Writes `bytes`, creating parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    f.write_all(bytes).map_err(|e| AppError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.column(), e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TrackRow {
    label: usize,
    t_index: usize,
    x_index: f64,
    unwrapped_x: f64,
}

/// Track CSV: `label,t_index,x_index,unwrapped_x`, one row per point.
pub fn tracks_to_csv(tracks: &[WaveTrack]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "t_index", "x_index", "unwrapped_x"]).expect("in-memory write");
    for tr in tracks {
        for (p, u) in tr.points.iter().zip(&tr.unwrapped_x) {
            w.write_record([
                tr.label.to_string(),
                p.t_index.to_string(),
                format!("{:?}", p.x_index),
                format!("{u:?}"),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Reads tracks written by [`tracks_to_csv`]. Intensities are not stored and
/// come back as 1.
pub fn read_tracks<R: Read>(reader: R, path: &Path) -> AppResult<Vec<WaveTrack>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut tracks: Vec<WaveTrack> = Vec::new();
    for (i, row) in rdr.deserialize::<TrackRow>().enumerate() {
        let row = row.map_err(|e| {
            let col = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.field().map_or(1, |f| f as usize + 1),
                _ => 1,
            };
            parse_err(path, i + 2, col, e.to_string())
        })?;
        let pos = match tracks.iter().position(|t| t.label == row.label) {
            Some(p) => p,
            None => {
                tracks.push(WaveTrack {
                    label: row.label,
                    points: Vec::new(),
                    unwrapped_x: Vec::new(),
                });
                tracks.len() - 1
            }
        };
        tracks[pos].points.push(PeakPoint {
            t_index: row.t_index,
            x_index: row.x_index,
            intensity: 1.0,
        });
        tracks[pos].unwrapped_x.push(row.unwrapped_x);
    }
    tracks.sort_by_key(|t| t.label);
    Ok(tracks)
}

pub fn load_tracks(path: &Path) -> AppResult<Vec<WaveTrack>> {
    let f = fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_tracks(f, path)
}

/// Column table with a header row; all columns must have the same length.
pub fn table_to_csv(headers: &[&str], columns: &[Vec<f64>]) -> String {
    assert_eq!(headers.len(), columns.len(), "one header per column");
    let n = columns.first().map_or(0, Vec::len);
    assert!(columns.iter().all(|c| c.len() == n), "ragged table");
    let mut s = headers.join(",");
    s.push('\n');
    for i in 0..n {
        let cells: Vec<String> = columns.iter().map(|c| format!("{:?}", c[i])).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Columns of a matrix, one mode per column, headed `mode_0, mode_1, ...`.
pub fn modes_to_csv(modes: &nalgebra::DMatrix<f64>) -> String {
    let names: Vec<String> = (0..modes.ncols()).map(|j| format!("mode_{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let cols: Vec<Vec<f64>> = modes.column_iter().map(|c| c.iter().copied().collect()).collect();
    table_to_csv(&refs, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> AppResult<SpatiotemporalField> {
        read_field(s.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn zeros_and_dt() {
        let f = parse("# K=4 T=3 dt=0.5\n0,0,0,0\n0,0,0,0\n0,0,0,0\n").unwrap();
        assert_eq!((f.n_time(), f.n_space(), f.dt()), (3, 4, 0.5));
        assert!(f.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn errors_name_row_and_column() {
        match parse("# K=3 T=2 dt=1\n1,2,3\n4,x,6\n") {
            Err(AppError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
            other => panic!("{other:?}"),
        }
        match parse("# K=3 T=2 dt=1\n1,2,3\n4,5\n") {
            Err(AppError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        match parse("1,2,3\n") {
            Err(AppError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(parse("# K=3 T=3 dt=1\n1,2,3\n").is_err());
        assert!(parse("# K=1 T=1 dt=1\nNaN\n").is_err());
    }

    #[test]
    fn awkward_values_roundtrip() {
        let v = vec![0.1, -0.0, 1e-300, 5e-324, 1.7976931348623157e308, -2.5e17, 1.0 / 3.0, 123456.789];
        let f = SpatiotemporalField::new(v, 2, 4, 0.1).unwrap();
        let g = parse(&field_to_csv(&f)).unwrap();
        assert_eq!(f.dt().to_bits(), g.dt().to_bits());
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn tracks_roundtrip() {
        let t = WaveTrack {
            label: 1,
            points: vec![
                PeakPoint { t_index: 0, x_index: 178.25, intensity: 1.0 },
                PeakPoint { t_index: 1, x_index: 2.5, intensity: 1.0 },
            ],
            unwrapped_x: vec![178.25, 182.5],
        };
        let csv = tracks_to_csv(std::slice::from_ref(&t));
        assert!(csv.starts_with("label,t_index,x_index,unwrapped_x\n"));
        let back = read_tracks(csv.as_bytes(), Path::new("t.csv")).unwrap();
        assert_eq!(back, vec![t]);
        match read_tracks("label,t_index,x_index,unwrapped_x\n0,zero,1,1\n".as_bytes(), Path::new("t.csv")) {
            Err(AppError::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_layout() {
        let s = table_to_csv(&["t", "x"], &[vec![0.0, 1.0], vec![2.5, -1.0]]);
        assert_eq!(s, "t,x\n0.0,2.5\n1.0,-1.0\n");
    }
}
