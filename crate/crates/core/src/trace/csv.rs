use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{check_signals_per_dof, TraceDataset, DEFAULT_SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

/// Reads a header-plus-rows CSV trace. Rows are 1-based in error messages,
/// counting data rows only (the header is row 0).
pub fn load_trace_csv(path: impl AsRef<Path>, signals_per_dof: usize) -> Result<TraceDataset> {
    let path = path.as_ref();
    check_signals_per_dof(signals_per_dof)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));

    let header = lines
        .next()
        .filter(|h| !h.trim().is_empty())
        .ok_or_else(|| Error::InvalidTrace("missing header row".into()))?;
    let width = header.split(',').count();
    if width % signals_per_dof != 0 {
        return Err(Error::InvalidTrace(format!(
            "{width} columns is not a multiple of {signals_per_dof} signals per DoF"
        )));
    }

    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::RowWidth {
                row,
                expected: width,
                found: cells.len(),
            });
        }
        let mut values = Vec::with_capacity(width);
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row,
                column: c + 1,
                cell: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    row,
                    column: c + 1,
                    cell: cell.to_string(),
                });
            }
            values.push(v);
        }
        samples.push(values);
    }

    TraceDataset::new(
        width / signals_per_dof,
        signals_per_dof,
        DEFAULT_SAMPLE_RATE_HZ,
        samples,
    )
}

/// Writes the dataset in the format [`load_trace_csv`] reads. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn export_trace_csv(data: &TraceDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let names: Vec<String> = (0..data.dof_count())
        .flat_map(|d| match data.signals_per_dof() {
            1 => vec![format!("dof{d}")],
            _ => vec![
                format!("dof{d}_pos"),
                format!("dof{d}_vel"),
                format!("dof{d}_acc"),
            ],
        })
        .collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for row in data.samples() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v:?}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_single_dof() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x\n0.0\n1.0\n");
        let ds = load_trace_csv(&p, 1).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples(), &[vec![0.0], vec![1.0]]);
    }

    #[test]
    fn eighteen_dof_thousand_rows() {
        let dir = tempfile::tempdir().unwrap();
        let header: Vec<String> = (0..18).map(|i| format!("j{i}")).collect();
        let mut body = header.join(",") + "\n";
        for t in 0..1000 {
            let row: Vec<String> = (0..18).map(|i| format!("{}", (t * i) as f64 * 0.001)).collect();
            body += &(row.join(",") + "\r\n");
        }
        let p = write(&dir, "hand.csv", &body);
        let ds = load_trace_csv(&p, 1).unwrap();
        assert_eq!(ds.dim(), 18);
        assert_eq!(ds.len(), 1000);
    }

    #[test]
    fn non_numeric_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "bad.csv", "x,y\na,b\n1,2\n");
        match load_trace_csv(&p, 1) {
            Err(Error::NonNumericCell { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.csv", "x,y\n1,2\n3\n");
        assert!(matches!(
            load_trace_csv(&p, 1),
            Err(Error::RowWidth { row: 2, expected: 2, found: 1 })
        ));
    }

    #[test]
    fn too_short_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.csv", "x\n1\n");
        assert!(matches!(load_trace_csv(&p, 1), Err(Error::InvalidTrace(_))));
        assert!(matches!(
            load_trace_csv(dir.path().join("nope.csv"), 1),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn three_signal_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "pva.csv", "p,v,a,p,v,a\n1,2,3,4,5,6\n7,8,9,10,11,12\n");
        let ds = load_trace_csv(&p, 3).unwrap();
        assert_eq!(ds.dof_count(), 2);
        assert_eq!(ds.position_dims(), vec![0, 3]);
        assert!(load_trace_csv(&p, 1).is_ok());
        let p = write(&dir, "odd.csv", "p,v\n1,2\n3,4\n");
        assert!(load_trace_csv(&p, 3).is_err());
    }
}
