//! Plain-text point sets: one sample per row, whitespace- or comma-separated
//! reals, `#` lines are comments. Activation dumps reuse the format with
//! `# layer: <name>` lines opening each layer, and optional `# epoch: <n>` and
//! `# batch: <n>` metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;
use crate::network::{Dataset, Targets};

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v: f64 = t.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("`{t}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("non-finite value `{t}`"),
                });
            }
            Ok(v)
        })
        .collect()
}

/// Accumulates rows, checking that every row has the same width.
#[derive(Default)]
struct RowBuffer {
    cols: Option<usize>,
    data: Vec<f64>,
    rows: usize,
}

impl RowBuffer {
    fn push(&mut self, row: Vec<f64>, lineno: usize) -> Result<()> {
        match self.cols {
            None => self.cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {c} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        self.data.extend(row);
        self.rows += 1;
        Ok(())
    }

    fn finish(self, what: &str) -> Result<SampleMatrix> {
        match self.cols {
            None => Err(Error::invalid_data(format!("{what} contains no samples"))),
            Some(c) => SampleMatrix::new(self.rows, c, self.data),
        }
    }
}

pub fn parse_points(text: &str) -> Result<SampleMatrix> {
    let mut buf = RowBuffer::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        buf.push(parse_row(line, i + 1)?, i + 1)?;
    }
    buf.finish("point file")
}

pub fn read_points(path: &Path) -> Result<SampleMatrix> {
    parse_points(&fs::read_to_string(path)?)
}

/// Renders rows with `# ` prefixed header lines. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn format_points(points: &SampleMatrix, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for row in points.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Writes features followed by the label (or target) columns.
pub fn write_dataset(path: &Path, data: &Dataset, header: &[String]) -> Result<()> {
    let (n, d) = (data.inputs.rows(), data.inputs.cols());
    let extra = match &data.targets {
        Targets::Classes(_) => 1,
        Targets::Values(v) => v.cols(),
    };
    let mut rows = Vec::with_capacity(n * (d + extra));
    for i in 0..n {
        rows.extend_from_slice(data.inputs.row(i));
        match &data.targets {
            Targets::Classes(c) => rows.push(c[i] as f64),
            Targets::Values(v) => rows.extend_from_slice(v.row(i)),
        }
    }
    let mut header = header.to_vec();
    header.push(match &data.targets {
        Targets::Classes(_) => format!("columns: {d} features, class label"),
        Targets::Values(v) => format!("columns: {d} features, {} targets", v.cols()),
    });
    let m = SampleMatrix::from_raw(n, d + extra, rows);
    write_atomic(path, format_points(&m, &header).as_bytes())
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid_argument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Per-layer activations captured for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationDump {
    pub epoch: Option<usize>,
    pub batch: Option<usize>,
    pub layers: Vec<(String, SampleMatrix)>,
}

impl ActivationDump {
    pub fn matrices(&self) -> Vec<SampleMatrix> {
        self.layers.iter().map(|(_, m)| m.clone()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(e) = self.epoch {
            let _ = writeln!(out, "# epoch: {e}");
        }
        if let Some(b) = self.batch {
            let _ = writeln!(out, "# batch: {b}");
        }
        for (name, m) in &self.layers {
            out.push_str(&format_points(m, &[format!("layer: {name}")]));
        }
        out
    }
}

fn meta<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.strip_prefix(key)?.trim_start();
    rest.strip_prefix(':').map(str::trim)
}

/// Parses a dump. Rows before the first `# layer:` line form a layer named
/// `default_name`.
pub fn parse_activation_dump(text: &str, default_name: &str) -> Result<ActivationDump> {
    let mut dump = ActivationDump {
        epoch: None,
        batch: None,
        layers: Vec::new(),
    };
    let mut name = default_name.to_string();
    let mut buf = RowBuffer::default();

    let flush = |name: &str, buf: RowBuffer, dump: &mut ActivationDump| -> Result<()> {
        if buf.rows > 0 {
            dump.layers.push((name.to_string(), buf.finish(name)?));
        }
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(layer) = meta(comment, "layer") {
                flush(&name, std::mem::take(&mut buf), &mut dump)?;
                name = layer.to_string();
            } else if let Some(v) = meta(comment, "epoch") {
                dump.epoch = Some(v.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad epoch `{v}`"),
                })?);
            } else if let Some(v) = meta(comment, "batch") {
                dump.batch = Some(v.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad batch `{v}`"),
                })?);
            }
            continue;
        }
        buf.push(parse_row(line, lineno)?, lineno)?;
    }
    flush(&name, buf, &mut dump)?;
    if dump.layers.is_empty() {
        return Err(Error::invalid_data("activation dump contains no layers"));
    }
    Ok(dump)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_delimiters_and_comments() {
        let m = parse_points("# header\n1.0, 2.0\n\n3 4\n  5.5,\t-6\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.row(2), &[5.5, -6.0]);
    }

    #[test]
    fn reports_line_numbers() {
        match parse_points("1 2\n3 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_points("1 2\n# c\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_points("# only comments\n"), Err(Error::InvalidData(_))));
    }

    #[test]
    fn dump_round_trips() {
        let dump = ActivationDump {
            epoch: Some(3),
            batch: Some(0),
            layers: vec![
                ("h0".into(), SampleMatrix::from_rows(&[[0.1, 0.2], [1.0 / 3.0, 4.0]]).unwrap()),
                ("h1".into(), SampleMatrix::from_rows(&[[1e-300, -2.5]]).unwrap()),
            ],
        };
        assert_eq!(parse_activation_dump(&dump.to_text(), "x").unwrap(), dump);
    }

    #[test]
    fn unnamed_rows_use_the_default_name() {
        let dump = parse_activation_dump("1 2\n3 4\n", "file_stem").unwrap();
        assert_eq!(dump.layers[0].0, "file_stem");
    }
}
