//! Point-cloud readers (XYZ/CSV, ASCII PLY, OBJ) and an XYZ writer.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_floats(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line, format!("not a number: `{t}`")))
        })
        .collect()
}

/// One point per line, comma or whitespace separated. `#` lines and blank
/// lines are skipped. The column count of the first data line fixes the
/// dimension unless `dim` is given.
pub fn read_xyz(reader: impl Read, dim: Option<usize>) -> Result<PointCloud> {
    let mut coords = Vec::new();
    let mut d = dim;
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let vals = parse_floats(text, k + 1)?;
        let expected = *d.get_or_insert(vals.len());
        if vals.len() != expected {
            return Err(parse_err(k + 1, format!("expected {expected} columns, found {}", vals.len())));
        }
        coords.extend(vals);
    }
    let d = d.ok_or_else(|| parse_err(0, "no points found"))?;
    if !(1..=3).contains(&d) {
        return Err(parse_err(0, format!("unsupported dimension {d}")));
    }
    PointCloud::from_flat(d, coords)
}

/// ASCII PLY; only vertex positions are read.
pub fn read_ply(reader: impl Read) -> Result<PointCloud> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let mut next = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((k, l)) => Ok(Some((k + 1, l?))),
            None => Ok(None),
        }
    };
    match next()? {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(1, "missing `ply` magic")),
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    loop {
        let (k, l) = next()?.ok_or_else(|| parse_err(0, "header ends before `end_header`"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_err(k, format!("only ascii PLY is supported, got `{fmt}`")));
            }
            ["element", "vertex", n] => {
                vertex_count = Some(n.parse::<usize>().map_err(|_| parse_err(k, "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => {
                return Err(parse_err(k, "list properties on vertices are not supported"));
            }
            ["property", _, name] if in_vertex => props.push((*name).to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let n = vertex_count.ok_or_else(|| parse_err(0, "no vertex element"))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| parse_err(0, format!("vertex property `{name}` missing")))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);
    let mut coords = Vec::with_capacity(3 * n);
    let mut read = 0;
    while read < n {
        let (k, l) = next()?.ok_or_else(|| parse_err(0, format!("expected {n} vertices, found {read}")))?;
        if l.trim().is_empty() {
            continue;
        }
        let vals = parse_floats(&l, k)?;
        if vals.len() < props.len() {
            return Err(parse_err(k, "short vertex line"));
        }
        coords.extend_from_slice(&[vals[ix], vals[iy], vals[iz]]);
        read += 1;
    }
    PointCloud::from_flat(3, coords)
}

/// Wavefront OBJ; only `v x y z` lines are read.
pub fn read_obj(reader: impl Read) -> Result<PointCloud> {
    let mut coords = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some("v") {
            continue;
        }
        let vals: Vec<f64> = toks
            .take(3)
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(k + 1, format!("not a number: `{t}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(parse_err(k + 1, "vertex needs three coordinates"));
        }
        coords.extend(vals);
    }
    PointCloud::from_flat(3, coords)
}

/// Reads by extension: `.ply`, `.obj`, anything else as XYZ/CSV.
pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ply") => read_ply(file),
        Some("obj") => read_obj(file),
        _ => read_xyz(file, None),
    }
}

/// Space-separated coordinates, full round-trip precision.
pub fn write_xyz(cloud: &PointCloud, mut out: impl Write) -> Result<()> {
    for p in cloud.points() {
        let line: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_with_comments_and_commas() {
        let text = "# header\n0 0 1\n\n1.5,2,3\n";
        let c = read_xyz(text.as_bytes(), None).unwrap();
        assert_eq!(c.dim(), 3);
        assert_eq!(c.point(1), &[1.5, 2.0, 3.0]);
    }

    #[test]
    fn xyz_rejects_ragged_rows() {
        let err = read_xyz("1 2\n1 2 3\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn ply_vertices_only() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 1 2 255\n3 4 5 0\n3 0 1 1\n";
        let c = read_ply(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.point(1), &[3.0, 4.0, 5.0]);
        assert!(read_ply("ply\nformat binary_little_endian 1.0\nend_header\n".as_bytes()).is_err());
    }

    #[test]
    fn obj_vertex_lines() {
        let text = "# cow\nv 1 2 3\nvn 0 0 1\nv 4 5 6\nf 1 2 3\n";
        let c = read_obj(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.point(0), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn xyz_round_trip() {
        let c = PointCloud::new(3, &[vec![0.1, -2.0 / 3.0, 1e-17]]).unwrap();
        let mut buf = Vec::new();
        write_xyz(&c, &mut buf).unwrap();
        assert_eq!(read_xyz(buf.as_slice(), None).unwrap(), c);
    }
}
