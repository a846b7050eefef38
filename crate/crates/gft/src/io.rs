//! Deterministic text outputs: versioned CSV tables, JSON documents, and a
//! Matrix Market operator dump. Everything goes through write-to-temp plus
//! rename in the destination directory, so a failed run never leaves a
//! partial output file behind.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{GftError, Result};
use crate::sparse::CsrMatrix;

pub const FORMAT_VERSION: u32 = 1;

fn temp_sibling(path: &Path) -> Result<PathBuf> {
    let name = path
        .file_name()
        .ok_or_else(|| GftError::Manifest(format!("output path {} has no file name", path.display())))?;
    let mut tmp = path.to_path_buf();
    tmp.set_file_name(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    Ok(tmp)
}

/// Write the full contents to a hidden sibling, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path)?;
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

/// Pretty JSON with a trailing newline; field order fixed by the type, so
/// equal values serialize to equal bytes.
pub fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| GftError::Manifest(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_pretty_json(value)?.as_bytes())
}

/// Envelope for payload types that do not carry their own version field.
#[derive(Debug, Clone, Serialize)]
pub struct JsonDocument<T> {
    pub format_version: u32,
    pub kind: String,
    pub data: T,
}

impl<T: Serialize> JsonDocument<T> {
    pub fn new(kind: &str, data: T) -> Self {
        JsonDocument {
            format_version: FORMAT_VERSION,
            kind: kind.into(),
            data,
        }
    }
}

/// One row of the spectral table: a state index, its eigenvalue, the
/// resolving labels, and optionally one complex value (a coefficient).
#[derive(Debug, Clone)]
pub struct SpectralRow {
    pub index: usize,
    pub lambda: f64,
    pub alphas: Vec<f64>,
    pub value: Option<Complex64>,
}

fn fmt_f64(x: f64) -> String {
    // shortest round-trip form; normalize the sign of zero so equal tables
    // serialize to equal bytes
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

/// CSV with columns index, lambda, <alpha axes...>[, re, im]. The value
/// columns appear exactly when every row carries a value.
pub fn spectral_csv(alpha_axes: &[String], rows: &[SpectralRow]) -> Result<String> {
    let with_values = rows.iter().filter(|r| r.value.is_some()).count();
    if with_values != 0 && with_values != rows.len() {
        return Err(GftError::Manifest(
            "spectral table mixes rows with and without coefficient values".into(),
        ));
    }
    let mut out = format!("# format_version: {FORMAT_VERSION}\n");
    out.push_str("index,lambda");
    for a in alpha_axes {
        out.push(',');
        out.push_str(a);
    }
    if with_values > 0 {
        out.push_str(",re,im");
    }
    out.push('\n');
    for r in rows {
        if r.alphas.len() != alpha_axes.len() {
            return Err(GftError::Manifest(format!(
                "row {} carries {} labels for {} label columns",
                r.index,
                r.alphas.len(),
                alpha_axes.len()
            )));
        }
        out.push_str(&r.index.to_string());
        out.push(',');
        out.push_str(&fmt_f64(r.lambda));
        for a in &r.alphas {
            out.push(',');
            out.push_str(&fmt_f64(*a));
        }
        if let Some(v) = r.value {
            out.push(',');
            out.push_str(&fmt_f64(v.re));
            out.push(',');
            out.push_str(&fmt_f64(v.im));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Plain numeric CSV for trajectory- or coefficient-style tables.
pub fn numeric_csv(columns: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    let mut out = format!("# format_version: {FORMAT_VERSION}\n");
    out.push_str(&columns.join(","));
    out.push('\n');
    for (k, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(GftError::Manifest(format!(
                "row {k} has {} entries for {} columns",
                row.len(),
                columns.len()
            )));
        }
        let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Matrix Market coordinate format (complex general, 1-based indices),
/// entries in row-major CSR order.
pub fn matrix_market(m: &CsrMatrix) -> String {
    let n = m.n;
    let mut out = String::from("%%MatrixMarket matrix coordinate complex general\n");
    out.push_str(&format!("% format_version: {FORMAT_VERSION}\n"));
    out.push_str(&format!("{n} {n} {}\n", m.nnz()));
    for r in 0..n {
        let (cols, vals) = m.row(r);
        for (c, v) in cols.iter().zip(vals) {
            out.push_str(&format!(
                "{} {} {} {}\n",
                r + 1,
                c + 1,
                fmt_f64(v.re),
                fmt_f64(v.im)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("gft-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn atomic_write_round_trips_and_leaves_no_droppings() {
        let path = scratch("roundtrip.txt");
        write_atomic(&path, b"alpha\nbeta\n").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"alpha\nbeta\n");
        // overwrite through the same path
        write_atomic(&path, b"gamma\n").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"gamma\n");
        let leftovers: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains(".tmp-"))
            .collect();
        assert!(leftovers.is_empty());
        fs::remove_file(&path).unwrap();
    }

    #[test]
    fn failed_write_leaves_no_target() {
        let path = scratch("no-such-dir").join("out.csv");
        assert!(write_atomic(&path, b"x").is_err());
        assert!(!path.exists());
    }

    #[test]
    fn spectral_csv_golden() {
        let rows = vec![
            SpectralRow { index: 0, lambda: 0.0, alphas: vec![0.0, 0.0], value: None },
            SpectralRow { index: 1, lambda: 1.0, alphas: vec![-1.0, 0.0], value: None },
        ];
        let axes = vec!["p_theta".to_string(), "p_phi".to_string()];
        let csv = spectral_csv(&axes, &rows).unwrap();
        assert_eq!(
            csv,
            "# format_version: 1\nindex,lambda,p_theta,p_phi\n0,0,0,0\n1,1,-1,0\n"
        );

        let with_vals: Vec<SpectralRow> = rows
            .iter()
            .map(|r| SpectralRow { value: Some(Complex64::new(0.5, -0.25)), ..r.clone() })
            .collect();
        let csv = spectral_csv(&axes, &with_vals).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(",re,im"));
        assert!(csv.ends_with("1,1,-1,0,0.5,-0.25\n"));

        let mixed = vec![rows[0].clone(), with_vals[1].clone()];
        assert!(spectral_csv(&axes, &mixed).is_err());
    }

    #[test]
    fn numeric_csv_rejects_ragged_rows() {
        let ok = numeric_csv(&["t", "theta", "phi"], &[vec![0.0, 0.3, 0.7]]).unwrap();
        assert_eq!(ok, "# format_version: 1\nt,theta,phi\n0,0.3,0.7\n");
        assert!(numeric_csv(&["t", "theta"], &[vec![1.0]]).is_err());
    }

    #[test]
    fn matrix_market_parses_back() {
        let m = CsrMatrix::from_triplets(
            3,
            &[
                (0, 0, Complex64::new(2.0, 0.0)),
                (0, 2, Complex64::new(0.0, -1.5)),
                (2, 1, Complex64::new(-0.25, 0.125)),
            ],
        );
        let text = matrix_market(&m);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "%%MatrixMarket matrix coordinate complex general");
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('%')).collect();
        let head: Vec<usize> = body[0].split_whitespace().map(|t| t.parse().unwrap()).collect();
        assert_eq!(head, vec![3, 3, 3]);
        for entry in &body[1..] {
            let tok: Vec<&str> = entry.split_whitespace().collect();
            let (r, c): (usize, usize) = (tok[0].parse().unwrap(), tok[1].parse().unwrap());
            let v = Complex64::new(tok[2].parse().unwrap(), tok[3].parse().unwrap());
            let (cols, vals) = m.row(r - 1);
            let k = cols.iter().position(|&cc| cc == c - 1).unwrap();
            assert_eq!(vals[k], v);
        }
        assert_eq!(body.len() - 1, m.nnz());
    }

    #[test]
    fn json_document_is_versioned_and_deterministic() {
        #[derive(Serialize)]
        struct Payload {
            a: u32,
        }
        let doc = JsonDocument::new("classification", Payload { a: 7 });
        let one = to_pretty_json(&doc).unwrap();
        let two = to_pretty_json(&JsonDocument::new("classification", Payload { a: 7 })).unwrap();
        assert_eq!(one, two);
        let v: serde_json::Value = serde_json::from_str(&one).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["kind"], "classification");
        assert_eq!(v["data"]["a"], 7);
        assert!(one.ends_with('\n'));
    }
}
