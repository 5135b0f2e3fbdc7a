//! Plain-text point cloud files.
//!
//! XYZ: one point per line, whitespace-separated decimals; blank lines and
//! lines starting with `#` are skipped. Written with the shortest decimal
//! that parses back to the same `f64`.
//!
//! PLY: ASCII only, vertex positions only (read-only).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_real(token: &str, line: usize, column: usize) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::Parse {
            line,
            column,
            message: format!("non-finite value `{token}`"),
        }),
        Err(_) => Err(Error::Parse {
            line,
            column,
            message: format!("invalid number `{token}`"),
        }),
    }
}

/// Splits on ASCII whitespace, yielding 1-based columns with each token.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_ascii_whitespace()
        .map(move |t| (t.as_ptr() as usize - line.as_ptr() as usize + 1, t))
}

/// Parses XYZ text. Line numbers in errors are 1-based.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut dim = None;
    let mut coords = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let before = coords.len();
        for (column, tok) in tokens(line) {
            coords.push(parse_real(tok, lineno, column)?);
        }
        let found = coords.len() - before;
        match dim {
            None => dim = Some(found),
            Some(d) if d != found => {
                return Err(Error::RaggedRows {
                    line: lineno,
                    expected: d,
                    found,
                })
            }
            Some(_) => {}
        }
    }
    let dim = dim.ok_or(Error::EmptyCloud)?;
    PointCloud::from_flat(dim, coords)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_xyz(&read_to_string(path.as_ref())?)
}

/// Shortest round-trip decimal; exponent form only for extreme magnitudes.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * cloud.dim() * 12);
    for x in cloud.points() {
        for (k, c) in x.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", format_real(*c));
        }
        out.push('\n');
    }
    out
}

pub fn write_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_xyz(cloud)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    /// Property names; `None` marks a list property.
    properties: Vec<Option<String>>,
}

/// Parses an ASCII PLY document and returns its vertex positions.
pub fn parse_ply_ascii(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::UnsupportedFormat("missing `ply` magic line".into())),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut ascii = false;
    loop {
        let Some((lineno, line)) = lines.next() else {
            return Err(Error::UnsupportedFormat("missing `end_header`".into()));
        };
        let words: Vec<&str> = line.split_ascii_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", ..] => ascii = true,
            ["format", other, ..] => {
                return Err(Error::UnsupportedFormat(format!("PLY format `{other}`")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    column: 1,
                    message: format!("invalid element count `{count}`"),
                })?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", ..] => match elements.last_mut() {
                Some(e) => e.properties.push(None),
                None => return Err(Error::UnsupportedFormat("property before element".into())),
            },
            ["property", _ty, name] => match elements.last_mut() {
                Some(e) => e.properties.push(Some(name.to_string())),
                None => return Err(Error::UnsupportedFormat("property before element".into())),
            },
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    column: 1,
                    message: format!("unrecognized header line `{line}`"),
                })
            }
        }
    }
    if !ascii {
        return Err(Error::UnsupportedFormat("missing PLY format line".into()));
    }

    let mut coords = Vec::new();
    let mut found_vertex = false;
    for element in &elements {
        if element.name != "vertex" {
            for _ in 0..element.count {
                lines.next();
            }
            continue;
        }
        found_vertex = true;
        let position = |axis: &str| {
            element
                .properties
                .iter()
                .position(|p| p.as_deref() == Some(axis))
                .ok_or_else(|| Error::UnsupportedFormat(format!("vertex element has no `{axis}` property")))
        };
        let axes = [position("x")?, position("y")?, position("z")?];
        if element.properties[..=axes.iter().copied().max().unwrap_or(0)]
            .iter()
            .any(Option::is_none)
        {
            return Err(Error::UnsupportedFormat(
                "list property precedes vertex coordinates".into(),
            ));
        }
        for _ in 0..element.count {
            let Some((lineno, line)) = lines.next() else {
                return Err(Error::Parse {
                    line: text.lines().count() + 1,
                    column: 1,
                    message: "unexpected end of vertex data".into(),
                });
            };
            let toks: Vec<(usize, &str)> = tokens(line).collect();
            for &a in &axes {
                let Some(&(column, tok)) = toks.get(a) else {
                    return Err(Error::Parse {
                        line: lineno,
                        column: line.len() + 1,
                        message: "too few vertex properties".into(),
                    });
                };
                coords.push(parse_real(tok, lineno, column)?);
            }
        }
        break;
    }
    if !found_vertex {
        return Err(Error::UnsupportedFormat("no vertex element".into()));
    }
    if coords.is_empty() {
        return Err(Error::EmptyCloud);
    }
    PointCloud::from_flat(3, coords)
}

pub fn read_ply_ascii(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_ply_ascii(&read_to_string(path.as_ref())?)
}

/// Reads `.ply` files as PLY and anything else as XYZ.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let is_ply = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        read_ply_ascii(path)
    } else {
        read_xyz(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::make_cloud;

    #[test]
    fn xyz_examples() {
        let c = parse_xyz("0 0 0\n1 0 0\n").unwrap();
        assert_eq!((c.len(), c.dim()), (2, 3));
        let c = parse_xyz("# comment\n\n1.5 2.5\n").unwrap();
        assert_eq!(c.to_rows(), vec![vec![1.5, 2.5]]);
        assert!(matches!(
            parse_xyz("1 2 3\n4 5\n"),
            Err(Error::RaggedRows { line: 2, expected: 3, found: 2 })
        ));
        assert!(matches!(parse_xyz("# only\n\n"), Err(Error::EmptyCloud)));
        assert!(matches!(
            parse_xyz("1 2\n3 x4\n"),
            Err(Error::Parse { line: 2, column: 3, .. })
        ));
        assert!(matches!(parse_xyz("1 nan\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn xyz_formatting() {
        let c = make_cloud(&[[0.1]]).unwrap();
        assert_eq!(format_xyz(&c), "0.1\n");
        let tiny = make_cloud(&[[1e-300, -0.0, 1.7976931348623157e308]]).unwrap();
        let text = format_xyz(&tiny);
        assert_eq!(text, "1e-300 -0 1.7976931348623157e308\n");
        let back = parse_xyz(&text).unwrap();
        for (a, b) in back.as_flat().iter().zip(tiny.as_flat()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    const MINIMAL: &str = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";

    #[test]
    fn ply_minimal() {
        let c = parse_ply_ascii(MINIMAL).unwrap();
        assert_eq!(c.to_rows(), vec![vec![1.0, 2.0, 3.0]]);
    }

    #[test]
    fn ply_binary_rejected() {
        let text = MINIMAL.replace("format ascii 1.0", "format binary_little_endian 1.0");
        assert!(matches!(parse_ply_ascii(&text), Err(Error::UnsupportedFormat(_))));
        let text = MINIMAL.replace("property float z\n", "");
        assert!(matches!(parse_ply_ascii(&text), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn ply_drops_normals_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\nproperty float nx\nproperty float x\nproperty float y\nproperty float z\nproperty float ny\nproperty float nz\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n9 0 0 0 0 1\n9 1 0 0 0 1\n9 0 1 0.5 0 1\n3 0 1 2\n";
        let c = parse_ply_ascii(text).unwrap();
        assert_eq!(
            c.to_rows(),
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.5]]
        );
    }

    #[test]
    fn ply_element_before_vertex() {
        let text = "ply\nformat ascii 1.0\nelement camera 2\nproperty float f\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n1\n2\n4 5 6\n";
        assert_eq!(parse_ply_ascii(text).unwrap().to_rows(), vec![vec![4.0, 5.0, 6.0]]);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_xyz("/nonexistent/x.xyz"), Err(Error::Io { .. })));
    }
}
