//! Camera calibration text files, one view per line:
//!
//! ```text
//! view_id image_name height width fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. `z_near` is not
//! stored and takes [`DEFAULT_Z_NEAR`](super::DEFAULT_Z_NEAR).

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::{check_unique_view_ids, CameraView, SceneError, ViewGeometry};

const FIELDS: usize = 20;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    InvalidView { line: usize, source: SceneError },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

pub fn parse_cameras(text: &str) -> Result<Vec<CameraView>, CalibError> {
    let mut views = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != FIELDS {
            return Err(CalibError::Parse {
                line,
                message: format!("expected {FIELDS} fields, found {}", tokens.len()),
            });
        }
        let int = |i: usize| -> Result<u32, CalibError> {
            tokens[i].parse().map_err(|_| CalibError::Parse {
                line,
                message: format!("field {} `{}` is not an unsigned integer", i + 1, tokens[i]),
            })
        };
        let float = |i: usize| -> Result<f64, CalibError> {
            tokens[i].parse().map_err(|_| CalibError::Parse {
                line,
                message: format!("field {} `{}` is not a number", i + 1, tokens[i]),
            })
        };
        let view_id = int(0)?;
        let image_name = tokens[1].to_string();
        let geometry = ViewGeometry::new(int(2)?, int(3)?, float(4)?, float(5)?, float(6)?, float(7)?)
            .map_err(|source| CalibError::InvalidView { line, source })?;
        let mut rotation = [[0.0; 3]; 3];
        for (k, slot) in rotation.iter_mut().flatten().enumerate() {
            *slot = float(8 + k)?;
        }
        let translation = [float(17)?, float(18)?, float(19)?];
        let view = CameraView::new(geometry, rotation, translation, view_id, image_name)
            .map_err(|source| CalibError::InvalidView { line, source })?;
        views.push(view);
    }
    check_unique_view_ids(&views)?;
    Ok(views)
}

pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>, CalibError> {
    parse_cameras(&fs::read_to_string(path)?)
}

pub fn write_cameras(views: &[CameraView], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "# view_id image_name height width fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz")?;
    for v in views {
        let g = &v.geometry;
        write!(
            out,
            "{} {} {} {} {} {} {} {}",
            v.view_id, v.image_name, g.height, g.width, g.fx, g.fy, g.cx, g.cy
        )?;
        for r in v.rotation.iter().flatten() {
            write!(out, " {r}")?;
        }
        writeln!(out, " {} {} {}", v.translation[0], v.translation[1], v.translation[2])?;
    }
    Ok(())
}

pub fn write_cameras_file(views: &[CameraView], path: impl AsRef<Path>) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    write_cameras(views, &mut out)?;
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = ViewGeometry::new(48, 64, 100.0, 101.5, 32.5, 24.25).unwrap();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rot = [[c, -c, 0.0], [c, c, 0.0], [0.0, 0.0, 1.0]];
        let views = vec![
            CameraView::identity(g, 0, "front"),
            CameraView::new(g, rot, [0.1, -2.0, 3.0], 7, "side").unwrap(),
        ];
        let mut bytes = Vec::new();
        write_cameras(&views, &mut bytes).unwrap();
        let back = parse_cameras(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(back, views);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_cameras("0 a 1 2 3"), Err(CalibError::Parse { line: 1, .. })));
        let row = "0 a 4 4 1 1 2 2 1 0 0 0 1 0 0 0 1 0 0 0";
        let dup = format!("{row}\n# comment\n{row}\n");
        assert!(matches!(
            parse_cameras(&dup),
            Err(CalibError::Scene(SceneError::DuplicateViewId(0)))
        ));
        let skew = "0 a 4 4 1 1 2 2 1 0.5 0 0 1 0 0 0 1 0 0 0";
        assert!(matches!(parse_cameras(skew), Err(CalibError::InvalidView { line: 1, .. })));
    }
}
