//! File formats, number formatting and atomic writes.
//!
//! * power trace CSV: `timestamp_s,power_w`
//! * grid CSV: `n_in,n_out,n_req,e_tot_j` (derived columns are recomputed on load)
//! * heatmap CSV: first row is the `n_out` axis, first column the `n_in` axis

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::trace::{self, EnergyGrid, GridRecord, Heatmap, PowerTrace, TraceError};

pub const TRACE_HEADER: [&str; 2] = ["timestamp_s", "power_w"];
pub const GRID_HEADER: [&str; 4] = ["n_in", "n_out", "n_req", "e_tot_j"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let wrap = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| format_err(path, "not a file path"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(wrap)
}

fn check_header(path: &Path, rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<(), IoError> {
    let header = rdr
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(format_err(
            path,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

pub fn parse_trace_csv(path: &Path, text: &str) -> Result<PowerTrace, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    check_header(path, &mut rdr, &TRACE_HEADER)?;
    let mut samples = Vec::new();
    for (i, row) in rdr.deserialize::<(f64, f64)>().enumerate() {
        let row = row.map_err(|e| format_err(path, format!("row {}: {e}", i + 1)))?;
        samples.push(row);
    }
    PowerTrace::from_seconds(&samples).map_err(|source| IoError::Trace {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_trace(path: &Path) -> Result<PowerTrace, IoError> {
    parse_trace_csv(path, &read_to_string(path)?)
}

pub fn parse_grid_csv(path: &Path, text: &str) -> Result<EnergyGrid, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    check_header(path, &mut rdr, &GRID_HEADER)?;
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<GridRecord>().enumerate() {
        records.push(row.map_err(|e| format_err(path, format!("row {}: {e}", i + 1)))?);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    trace::build_grid(&records)
        .map(|g| g.with_name(name))
        .map_err(|source| IoError::Trace {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_grid(path: &Path) -> Result<EnergyGrid, IoError> {
    parse_grid_csv(path, &read_to_string(path)?)
}

/// Grid CSV text. Floats use the shortest representation that round-trips.
pub fn grid_csv(grid: &EnergyGrid) -> String {
    let mut out = GRID_HEADER.join(",");
    out.push('\n');
    for r in grid.records() {
        out.push_str(&format!("{},{},{},{}\n", r.n_in, r.n_out, r.n_req, r.e_tot_j));
    }
    out
}

/// Heatmap CSV. The corner cell is `n_in\n_out`; missing cells are empty.
pub fn heatmap_csv(map: &Heatmap) -> String {
    let mut out = String::from("n_in\\n_out");
    for o in &map.n_out_axis {
        out.push_str(&format!(",{o}"));
    }
    out.push('\n');
    for (n_in, row) in map.n_in_axis.iter().zip(&map.values) {
        out.push_str(&n_in.to_string());
        for v in row {
            out.push(',');
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_heatmap_csv(path: &Path, text: &str) -> Result<Heatmap, IoError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| format_err(path, "empty heatmap"))?;
    let parse_u = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|e| format_err(path, format!("bad axis value `{s}`: {e}")))
    };
    let n_out_axis = head
        .split(',')
        .skip(1)
        .map(parse_u)
        .collect::<Result<Vec<_>, _>>()?;
    let mut n_in_axis = Vec::new();
    let mut values = Vec::new();
    for line in lines {
        let mut cells = line.split(',');
        n_in_axis.push(parse_u(cells.next().unwrap_or(""))?);
        let row = cells
            .map(|c| {
                let c = c.trim();
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|e| format_err(path, format!("bad value `{c}`: {e}")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != n_out_axis.len() {
            return Err(format_err(path, "ragged heatmap row"));
        }
        values.push(row);
    }
    Ok(Heatmap {
        n_in_axis,
        n_out_axis,
        values,
    })
}

/// Formats `x` with `sig` significant digits, like C's `%g`.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= sig as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Left-aligned first column, right-aligned remaining columns.
pub fn ascii_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 && rows.len() > 1 {
            let total = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(1.0, 6), "1");
        assert_eq!(fmt_sig(428.7416066, 6), "428.742");
        assert_eq!(fmt_sig(1.079941e-7, 6), "1.07994e-07");
        assert_eq!(fmt_sig(0.00919462926, 6), "0.00919463");
        assert_eq!(fmt_sig(1234567.0, 6), "1.23457e+06");
        assert_eq!(fmt_sig(-2.5, 6), "-2.5");
        assert_eq!(fmt_sig(999999.5, 6), "1e+06");
    }

    #[test]
    fn grid_csv_roundtrip_is_exact() {
        let text = "n_in,n_out,n_req,e_tot_j\n64,256,1000,2120.0000000000005\n128,64,1000,0.1\n";
        let p = Path::new("llama.csv");
        let g = parse_grid_csv(p, text).unwrap();
        assert_eq!(g.model_name, "llama");
        let again = parse_grid_csv(p, &grid_csv(&g)).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn header_is_checked() {
        let err = parse_grid_csv(Path::new("x.csv"), "a,b\n1,2\n").unwrap_err();
        assert!(err.to_string().contains("expected header"));
        let err = parse_trace_csv(Path::new("t.csv"), "timestamp_s,power_w\n0,1\n0,2\n").unwrap_err();
        assert!(matches!(err, IoError::Trace { .. }));
    }

    #[test]
    fn heatmap_csv_roundtrip() {
        let map = Heatmap {
            n_in_axis: vec![64, 128],
            n_out_axis: vec![64, 128, 256],
            values: vec![vec![Some(0.0), Some(0.5), None], vec![Some(1.0), Some(0.25), Some(0.1)]],
        };
        let text = heatmap_csv(&map);
        assert!(text.starts_with("n_in\\n_out,64,128,256\n64,0,0.5,\n"));
        assert_eq!(parse_heatmap_csv(Path::new("h.csv"), &text).unwrap(), map);
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn table_alignment() {
        let t = ascii_table(&[
            vec!["a".into(), "bb".into()],
            vec!["ccc".into(), "1".into()],
        ]);
        assert_eq!(t, "a    bb\n-------\nccc   1\n");
    }
}
