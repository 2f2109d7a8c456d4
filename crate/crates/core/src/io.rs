//! File formats: scan CSVs, force-curve CSVs, hysteresis JSON, and atomic
//! writes for everything the command line produces.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so the same
//! values always produce the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::analysis::{ForceCurve, ForcePoint};
use crate::calibration::{ApproachScan, HysteresisModel, ScanSample};
use crate::error::{Error, Result};

const NM: f64 = 1e-9;
const PN: f64 = 1e-12;

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write through a sibling temp file and rename, so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn header_block(out: &mut String, header: &[String]) {
    for line in header {
        for part in line.lines() {
            let _ = writeln!(out, "# {part}");
        }
    }
}

/// Comment lines (without the leading `#`) and the remaining CSV text.
fn split_comments(text: &str) -> Vec<(u64, &str)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, l)| l.trim_start().strip_prefix('#').map(|c| (i as u64 + 1, c.trim())))
        .collect()
}

/// Numeric row with its 1-based line number.
type Row = (u64, Vec<f64>);

fn csv_rows(text: &str, expected: &[&[&str]]) -> Result<(usize, Vec<Row>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let parse_err = |e: csv::Error| Error::Parse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(parse_err)?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let variant = expected
        .iter()
        .position(|cols| cols.len() == headers.len() && cols.iter().zip(&headers).all(|(a, b)| *a == b))
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!(
                "expected header {}, found {}",
                expected.iter().map(|c| c.join(",")).collect::<Vec<_>>().join(" or "),
                headers.join(",")
            ),
        })?;
    let width = expected[variant].len();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(parse_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        let values = record
            .iter()
            .map(|raw| {
                raw.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse {raw:?} as a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, values));
    }
    Ok((variant, rows))
}

/// Scan CSV: header `z_piezo_nm,signal`, optional `# V1=<volts>` comment.
pub fn parse_scan(text: &str, label: &str) -> Result<ApproachScan> {
    let mut v1 = None;
    for (line, c) in split_comments(text) {
        if let Some(raw) = c.strip_prefix("V1=") {
            let v = raw.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse voltage {raw:?}"),
            })?;
            v1 = Some(v);
        }
    }
    let (_, rows) = csv_rows(text, &[&["z_piezo_nm", "signal"]])?;
    let samples = rows
        .into_iter()
        .map(|(_, v)| ScanSample {
            z_piezo: v[0] * NM,
            signal: v[1],
        })
        .collect();
    ApproachScan::new(samples, v1, label)
}

pub fn read_scan(path: &Path) -> Result<ApproachScan> {
    parse_scan(&read_to_string(path)?, &path.display().to_string())
}

pub fn format_scan(scan: &ApproachScan, header: &[String]) -> String {
    let mut out = String::new();
    header_block(&mut out, header);
    if let Some(v) = scan.v1() {
        let _ = writeln!(out, "# V1={v}");
    }
    out.push_str("z_piezo_nm,signal\n");
    for s in scan.samples() {
        let _ = writeln!(out, "{},{}", s.z_piezo / NM, s.signal);
    }
    out
}

/// Force-curve CSV: `z_nm,force_pN[,sigma_pN]`. A `# label: …` comment
/// restores the label; other comments become notes.
pub fn parse_force_curve(text: &str, fallback_label: &str) -> Result<ForceCurve> {
    let mut label = fallback_label.to_string();
    let mut notes = Vec::new();
    for (_, c) in split_comments(text) {
        match c.strip_prefix("label:") {
            Some(l) => label = l.trim().to_string(),
            None => notes.push(c.to_string()),
        }
    }
    let (variant, rows) = csv_rows(text, &[&["z_nm", "force_pn"], &["z_nm", "force_pn", "sigma_pn"]])?;
    let points = rows
        .into_iter()
        .map(|(_, v)| ForcePoint {
            z: v[0] * NM,
            force: v[1] * PN,
            sigma: (variant == 1).then(|| v[2] * PN),
        })
        .collect();
    let mut curve = ForceCurve::new(points, label)?;
    curve.notes = notes;
    Ok(curve)
}

pub fn read_force_curve(path: &Path) -> Result<ForceCurve> {
    parse_force_curve(&read_to_string(path)?, &path.display().to_string())
}

/// Sigma column is written when every point carries one.
pub fn format_force_curve(curve: &ForceCurve, header: &[String]) -> String {
    let mut out = String::new();
    header_block(&mut out, header);
    let _ = writeln!(out, "# label: {}", curve.label);
    header_block(&mut out, &curve.notes);
    let with_sigma = curve.points().iter().all(|p| p.sigma.is_some());
    out.push_str(if with_sigma { "z_nm,force_pN,sigma_pN\n" } else { "z_nm,force_pN\n" });
    for p in curve.points() {
        match (with_sigma, p.sigma) {
            (true, Some(s)) => {
                let _ = writeln!(out, "{},{},{}", p.z / NM, p.force / PN, s / PN);
            }
            _ => {
                let _ = writeln!(out, "{},{}", p.z / NM, p.force / PN);
            }
        }
    }
    out
}

/// `{ "coeffs": [c1, c2, ...], "label": "..." }`
pub fn parse_hysteresis(text: &str) -> Result<HysteresisModel> {
    let model: HysteresisModel = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if model.coeffs.is_empty() || model.coeffs.iter().any(|c| !c.is_finite()) || !(model.coeffs[0] > 0.0) {
        return Err(Error::Validation(format!(
            "hysteresis model '{}' needs finite coefficients with a positive linear term",
            model.label
        )));
    }
    Ok(model)
}

pub fn read_hysteresis(path: &Path) -> Result<HysteresisModel> {
    parse_hysteresis(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_scan() -> ApproachScan {
        let samples = (0..20)
            .map(|i| ScanSample {
                z_piezo: (i as f64 * 0.1 - 0.7) * NM,
                signal: 0.01 * i as f64 - 0.003,
            })
            .collect();
        ApproachScan::new(samples, Some(0.202), "s").unwrap()
    }

    #[test]
    fn scan_round_trip() {
        let scan = sample_scan();
        let text = format_scan(&scan, &["tool test".into()]);
        assert!(text.starts_with("# tool test\n# V1=0.202\nz_piezo_nm,signal\n"));
        let back = parse_scan(&text, "s").unwrap();
        assert_eq!(back.v1(), Some(0.202));
        for (a, b) in scan.samples().iter().zip(back.samples()) {
            assert!((a.z_piezo - b.z_piezo).abs() <= 1e-15 * NM.max(a.z_piezo.abs()));
            assert_eq!(a.signal, b.signal);
        }
        assert_eq!(format_scan(&back, &["tool test".into()]), text);
    }

    #[test]
    fn scan_without_voltage_and_bad_rows() {
        let mut text = String::from("z_piezo_nm,signal\n");
        for i in 0..16 {
            text.push_str(&format!("{i},0.5\n"));
        }
        assert_eq!(parse_scan(&text, "x").unwrap().v1(), None);
        let bad = text.replace("3,0.5", "3,abc");
        match parse_scan(&bad, "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_scan("z,signal\n1,2\n", "x"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_scan("# V1=abc\nz_piezo_nm,signal\n", "x"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn force_curve_round_trip_keeps_sigma_and_notes() {
        let points = vec![
            ForcePoint { z: 62e-9, force: -450e-12, sigma: Some(3.5e-12) },
            ForcePoint { z: 63e-9, force: -430e-12, sigma: Some(3.4e-12) },
        ];
        let mut curve = ForceCurve::new(points, "avg").unwrap();
        curve.notes.push("surface separation uncertain by ±1 nm".into());
        let text = format_force_curve(&curve, &[]);
        assert!(text.contains("z_nm,force_pN,sigma_pN\n"));
        let back = parse_force_curve(&text, "fallback").unwrap();
        assert_eq!(back.label, "avg");
        assert_eq!(back.notes, curve.notes);
        for (a, b) in curve.points().iter().zip(back.points()) {
            assert!((a.force / b.force - 1.0).abs() < 1e-15);
            assert!((a.sigma.unwrap() / b.sigma.unwrap() - 1.0).abs() < 1e-15);
        }
        let plain = ForceCurve::from_values(&[1e-7], &[-1e-10], "t").unwrap();
        let text = format_force_curve(&plain, &[]);
        assert!(text.contains("\nz_nm,force_pN\n"));
        let back = parse_force_curve(&text, "t").unwrap();
        assert_eq!(back.points()[0].sigma, None);
        assert!((back.points()[0].z / 1e-7 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hysteresis_json() {
        let m = parse_hysteresis(r#"{ "coeffs": [1.0, 2e-5], "label": "interferometer" }"#).unwrap();
        assert_eq!(m.coeffs, vec![1.0, 2e-5]);
        assert!(matches!(parse_hysteresis(r#"{ "coeffs": [], "label": "x" }"#), Err(Error::Validation(_))));
        assert!(matches!(parse_hysteresis("{"), Err(Error::Parse { .. })));
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = std::env::temp_dir().join(format!("casimir-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.json");
        write_json_atomic(&path, &vec![1, 2]).unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(read_to_string(&path).unwrap(), "second");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
        assert!(matches!(read_to_string(&path), Err(Error::Io { .. })));
    }
}
