//! Spectrum files: CSV with a fixed column order, or one JSON object per
//! line with the same keys. Files are written to a temporary sibling and
//! renamed into place, so a failed run never leaves a partial file.

use crate::spectra::{unwrap_phases, SpectrumPoint};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const COLUMNS: [&str; 13] = [
    "delta1",
    "T_p",
    "R_p",
    "phi_plus",
    "phi_minus",
    "dphi_plus",
    "dphi_minus",
    "s00",
    "s11",
    "s22",
    "s33",
    "physical",
    "converged",
];
pub const UNWRAPPED_COLUMN: &str = "phi_plus_unwrapped";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    #[serde(alias = "json-lines")]
    Jsonl,
}

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("no points to write")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Shortest decimal that parses back to the same `f64`. Moderate magnitudes
/// are written positionally, the rest in exponent form.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn csv_record(p: &SpectrumPoint) -> Vec<String> {
    vec![
        format_float(p.delta1),
        format_float(p.t_p),
        format_float(p.r_p),
        format_float(p.phi_plus),
        optional(p.phi_minus),
        optional(p.dphi_plus),
        optional(p.dphi_minus),
        format_float(p.s00),
        format_float(p.s11),
        format_float(p.s22),
        format_float(p.s33),
        p.physical.to_string(),
        p.converged.to_string(),
    ]
}

/// Writes the spectrum in `format` to `out`.
pub fn write_to<W: Write>(
    points: &[SpectrumPoint],
    format: Format,
    unwrap: bool,
    out: W,
) -> Result<(), OutputError> {
    if points.is_empty() {
        return Err(OutputError::Empty);
    }
    let unwrapped =
        unwrap.then(|| unwrap_phases(&points.iter().map(|p| p.phi_plus).collect::<Vec<_>>()));
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let mut header: Vec<&str> = COLUMNS.to_vec();
            if unwrap {
                header.push(UNWRAPPED_COLUMN);
            }
            w.write_record(&header)?;
            for (i, p) in points.iter().enumerate() {
                let mut record = csv_record(p);
                if let Some(u) = &unwrapped {
                    record.push(format_float(u[i]));
                }
                w.write_record(&record)?;
            }
            w.flush().map_err(csv::Error::from)?;
        }
        Format::Jsonl => {
            let mut out = out;
            for (i, p) in points.iter().enumerate() {
                let mut value = serde_json::to_value(p)?;
                if let (Some(u), Some(obj)) = (&unwrapped, value.as_object_mut()) {
                    obj.insert(UNWRAPPED_COLUMN.to_string(), serde_json::json!(u[i]));
                }
                serde_json::to_writer(&mut out, &value)?;
                out.write_all(b"\n").map_err(serde_json::Error::io)?;
            }
            out.flush().map_err(serde_json::Error::io)?;
        }
    }
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Fails unless a file can be created next to `path`.
pub fn check_writable(path: &Path) -> Result<(), OutputError> {
    tempfile::NamedTempFile::new_in(parent_dir(path))
        .map(drop)
        .map_err(io_error(path))
}

/// Atomically writes the spectrum to `path`.
pub fn write_spectrum(
    points: &[SpectrumPoint],
    format: Format,
    path: &Path,
    unwrap: bool,
) -> Result<(), OutputError> {
    if points.is_empty() {
        return Err(OutputError::Empty);
    }
    let mut tmp = tempfile::NamedTempFile::new_in(parent_dir(path)).map_err(io_error(path))?;
    write_to(
        points,
        format,
        unwrap,
        std::io::BufWriter::new(tmp.as_file_mut()),
    )?;
    tmp.as_file().sync_all().map_err(io_error(path))?;
    tmp.persist(path).map_err(|e| io_error(path)(e.error))?;
    Ok(())
}

/// Reads a CSV spectrum written by [`write_spectrum`].
pub fn read_csv(path: &Path) -> Result<Vec<SpectrumPoint>, OutputError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    for record in r.records() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| field(i).parse::<f64>().unwrap_or(f64::NAN);
        let opt = |i: usize| match field(i) {
            "" => None,
            s => s.parse::<f64>().ok(),
        };
        points.push(SpectrumPoint {
            delta1: num(0),
            t_p: num(1),
            r_p: num(2),
            phi_plus: num(3),
            phi_minus: opt(4),
            dphi_plus: opt(5),
            dphi_minus: opt(6),
            s00: num(7),
            s11: num(8),
            s22: num(9),
            s33: num(10),
            physical: field(11) == "true",
            converged: field(12) == "true",
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(t: f64) -> SpectrumPoint {
        SpectrumPoint {
            delta1: 6.0,
            t_p: t,
            r_p: 0.0,
            phi_plus: -1.25,
            phi_minus: None,
            dphi_plus: None,
            dphi_minus: Some(0.1),
            s00: 0.0,
            s11: 0.5,
            s22: 0.0,
            s33: 0.5,
            physical: true,
            converged: true,
        }
    }

    #[test]
    fn csv_row_layout() {
        let mut buf = Vec::new();
        write_to(&[point(1.0)], Format::Csv, false, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        assert_eq!(
            lines.next().unwrap(),
            "6,1,0,-1.25,,,0.1,0,0.5,0,0.5,true,true"
        );
        assert!(lines.next().is_none());
    }

    #[test]
    fn jsonl_keys_match_columns() {
        let mut buf = Vec::new();
        write_to(&[point(1.0), point(0.5)], Format::Jsonl, false, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        for c in COLUMNS {
            assert!(obj.contains_key(c), "missing {c}");
        }
        assert_eq!(obj.len(), COLUMNS.len());
        assert!(obj["phi_minus"].is_null());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            write_to(&[], Format::Csv, false, Vec::new()),
            Err(OutputError::Empty)
        ));
    }

    #[test]
    fn unwritable_directory_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.csv");
        assert!(check_writable(&path).is_err());
        assert!(write_spectrum(&[point(1.0)], Format::Csv, &path, false).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn unwrapped_column_is_appended() {
        let mut buf = Vec::new();
        let mut a = point(1.0);
        let mut b = point(1.0);
        a.phi_plus = 3.0;
        b.phi_plus = -3.0;
        write_to(&[a, b], Format::Csv, true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().ends_with(UNWRAPPED_COLUMN));
        let last: f64 = text
            .lines()
            .nth(2)
            .unwrap()
            .rsplit(',')
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert!((last - (2.0 * std::f64::consts::PI - 3.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn floats_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(format_float(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }

        #[test]
        fn csv_round_trips_bit_exactly(t in 0.0f64..1.0, phi in -3.0f64..3.0, tiny in 1e-300f64..1e-10) {
            let mut p = point(t);
            p.phi_plus = phi;
            p.r_p = tiny;
            p.dphi_plus = Some(phi / 7.0);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.csv");
            write_spectrum(std::slice::from_ref(&p), Format::Csv, &path, false).unwrap();
            let back = read_csv(&path).unwrap();
            prop_assert_eq!(back, vec![p]);
        }
    }
}
