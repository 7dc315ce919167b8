//! ASCII PLY subset: one `vertex` element with `x y z` and an optional
//! `label` (uchar) property. Any other element or property is rejected.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ClassId, Point3, PointCloud, SceneError};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid PLY header: {0}")]
    BadHeader(String),
    #[error("unsupported PLY property `{0}`")]
    UnknownProperty(String),
    #[error("line {line}: {message}")]
    BadVertex { line: usize, message: String },
    #[error("expected {expected} vertices, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error(transparent)]
    Cloud(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    X,
    Y,
    Z,
    Label,
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    let file = fs::File::open(path)?;
    parse_ply(BufReader::new(file))
}

pub fn parse_ply<R: Read>(reader: BufReader<R>) -> Result<PointCloud, PlyError> {
    let mut lines = reader.lines().enumerate();
    let mut next_header = |what: &str| -> Result<(usize, String), PlyError> {
        lines
            .next()
            .map(|(n, l)| l.map(|l| (n + 1, l)))
            .transpose()?
            .ok_or_else(|| PlyError::BadHeader(format!("unexpected end of file, expected {what}")))
    };

    let (_, magic) = next_header("`ply`")?;
    if magic.trim_end() != "ply" {
        return Err(PlyError::BadHeader("missing `ply` magic".into()));
    }

    let mut format_seen = false;
    let mut vertex_count: Option<usize> = None;
    let mut columns: Vec<Column> = Vec::new();
    loop {
        let (_, line) = next_header("`end_header`")?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", "ascii", "1.0"] => format_seen = true,
            ["format", other, ..] => {
                return Err(PlyError::BadHeader(format!("unsupported format `{other}`")))
            }
            ["element", "vertex", count] => {
                if vertex_count.is_some() {
                    return Err(PlyError::BadHeader("duplicate vertex element".into()));
                }
                vertex_count = Some(
                    count
                        .parse()
                        .map_err(|_| PlyError::BadHeader(format!("bad vertex count `{count}`")))?,
                );
            }
            ["element", name, ..] => {
                return Err(PlyError::BadHeader(format!("unsupported element `{name}`")))
            }
            ["property", ty, name] => {
                if vertex_count.is_none() {
                    return Err(PlyError::BadHeader("property before element".into()));
                }
                let column = match (*name, *ty) {
                    ("x", "float" | "float32" | "double" | "float64") => Column::X,
                    ("y", "float" | "float32" | "double" | "float64") => Column::Y,
                    ("z", "float" | "float32" | "double" | "float64") => Column::Z,
                    ("label", "uchar" | "uint8") => Column::Label,
                    _ => return Err(PlyError::UnknownProperty(format!("{ty} {name}"))),
                };
                if columns.contains(&column) {
                    return Err(PlyError::BadHeader(format!("duplicate property `{name}`")));
                }
                columns.push(column);
            }
            ["property", ..] => return Err(PlyError::UnknownProperty(tokens[1..].join(" "))),
            ["end_header"] => break,
            _ => return Err(PlyError::BadHeader(format!("unrecognized line `{line}`"))),
        }
    }
    if !format_seen {
        return Err(PlyError::BadHeader("missing `format ascii 1.0`".into()));
    }
    let count = vertex_count.ok_or_else(|| PlyError::BadHeader("missing vertex element".into()))?;
    for required in [Column::X, Column::Y, Column::Z] {
        if !columns.contains(&required) {
            return Err(PlyError::BadHeader(format!("missing property {required:?}")));
        }
    }
    let has_labels = columns.contains(&Column::Label);

    let mut positions = Vec::with_capacity(count);
    let mut labels = has_labels.then(|| Vec::with_capacity(count));
    for (n, line) in lines {
        let line = line?;
        let line_no = n + 1;
        if positions.len() == count {
            if line.trim().is_empty() {
                continue;
            }
            return Err(PlyError::BadVertex { line: line_no, message: "data after last vertex".into() });
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != columns.len() {
            return Err(PlyError::BadVertex {
                line: line_no,
                message: format!("expected {} values, found {}", columns.len(), tokens.len()),
            });
        }
        let mut p: Point3 = [0.0; 3];
        for (column, token) in columns.iter().zip(&tokens) {
            let bad = |what: &str| PlyError::BadVertex {
                line: line_no,
                message: format!("invalid {what} `{token}`"),
            };
            match column {
                Column::X => p[0] = token.parse().map_err(|_| bad("coordinate"))?,
                Column::Y => p[1] = token.parse().map_err(|_| bad("coordinate"))?,
                Column::Z => p[2] = token.parse().map_err(|_| bad("coordinate"))?,
                Column::Label => {
                    let l: u8 = token.parse().map_err(|_| bad("label"))?;
                    if let Some(labels) = labels.as_mut() {
                        labels.push(ClassId(l));
                    }
                }
            }
        }
        positions.push(p);
    }
    if positions.len() != count {
        return Err(PlyError::TruncatedData { expected: count, found: positions.len() });
    }
    Ok(PointCloud::new(positions, labels)?)
}

pub fn write_ply(cloud: &PointCloud, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.len())?;
    writeln!(out, "property float x")?;
    writeln!(out, "property float y")?;
    writeln!(out, "property float z")?;
    if cloud.labels().is_some() {
        writeln!(out, "property uchar label")?;
    }
    writeln!(out, "end_header")?;
    match cloud.labels() {
        Some(labels) => {
            for (p, l) in cloud.positions().iter().zip(labels) {
                writeln!(out, "{} {} {} {}", p[0], p[1], p[2], l.0)?;
            }
        }
        None => {
            for p in cloud.positions() {
                writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
            }
        }
    }
    Ok(())
}

pub fn write_ply_file(cloud: &PointCloud, path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    write_ply(cloud, &mut out)?;
    out.flush()
}
