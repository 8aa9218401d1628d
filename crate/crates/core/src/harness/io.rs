//! ASCII XYZ and PLY point files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        msg: msg.into(),
    }
}

fn parse_coords(path: &Path, line: usize, fields: &[&str]) -> Result<Point3> {
    let mut c = [0.0; 3];
    for (k, f) in fields.iter().enumerate() {
        c[k] = f
            .parse::<f64>()
            .map_err(|_| parse_err(path, line, format!("bad coordinate {f:?}")))?;
    }
    Ok(Point3::new(c[0], c[1], c[2]))
}

/// One `x y z` triple per line; `#` starts a comment.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(path, idx + 1, format!("expected 3 coordinates, got {}", fields.len())));
        }
        pts.push(parse_coords(path, idx + 1, &fields)?);
    }
    if pts.is_empty() {
        return Err(parse_err(path, 0, "no points"));
    }
    PointCloud::new(pts)
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.len() * 60);
    for p in cloud.points() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

/// ASCII PLY with a vertex element carrying at least `x`, `y`, `z`; other
/// properties and elements are skipped.
pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing `ply` magic")),
    }
    // (name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut ascii = false;
    let mut header_done = false;
    for (idx, raw) in lines.by_ref() {
        let f: Vec<&str> = raw.split_whitespace().collect();
        match f.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _] => {
                if *fmt != "ascii" {
                    return Err(parse_err(path, idx + 1, format!("unsupported format {fmt}")));
                }
                ascii = true;
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(path, idx + 1, "bad element count"))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "list", ..] => match elements.last_mut() {
                Some(e) => e.2.push("<list>".into()),
                None => return Err(parse_err(path, idx + 1, "property before element")),
            },
            ["property", _ty, name] => match elements.last_mut() {
                Some(e) => e.2.push(name.to_string()),
                None => return Err(parse_err(path, idx + 1, "property before element")),
            },
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(parse_err(path, idx + 1, format!("unexpected header line {raw:?}"))),
        }
    }
    if !header_done || !ascii {
        return Err(parse_err(path, 0, "incomplete header"));
    }
    let mut pts = Vec::new();
    for (name, count, props) in &elements {
        let cols = if name == "vertex" {
            let find = |n: &str| props.iter().position(|p| p == n);
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) if !props.iter().any(|p| p == "<list>") => Some([x, y, z]),
                _ => return Err(parse_err(path, 0, "vertex element needs scalar x, y, z")),
            }
        } else {
            None
        };
        for _ in 0..*count {
            let Some((idx, raw)) = lines.next() else {
                return Err(parse_err(path, 0, format!("file ends inside element {name}")));
            };
            if let Some([x, y, z]) = cols {
                let f: Vec<&str> = raw.split_whitespace().collect();
                if f.len() != props.len() {
                    return Err(parse_err(path, idx + 1, format!("expected {} values", props.len())));
                }
                pts.push(parse_coords(path, idx + 1, &[f[x], f[y], f[z]])?);
            }
        }
    }
    if pts.is_empty() {
        return Err(parse_err(path, 0, "no vertices"));
    }
    PointCloud::new(pts)
}

pub fn format_ply(cloud: &PointCloud) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    );
    s.push_str(&format_xyz(cloud));
    s
}

fn is_ply(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"))
}

/// Reads a `.ply` file, or XYZ text for any other extension.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    if is_ply(path) {
        parse_ply(&text, path)
    } else {
        parse_xyz(&text, path)
    }
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = if is_ply(path) { format_ply(cloud) } else { format_xyz(cloud) };
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("t")
    }

    #[test]
    fn xyz_parses_with_comments() {
        let c = parse_xyz("# header\n0 0 0\n1 2 3 # trailing\n\n", p()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.point(1), &Point3::new(1.0, 2.0, 3.0));
        assert!(parse_xyz("1 2\n", p()).is_err());
        assert!(parse_xyz("1 2 x\n", p()).is_err());
        assert!(parse_xyz("# nothing\n", p()).is_err());
    }

    #[test]
    fn ply_with_extra_properties_and_faces() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 3\nproperty float nx\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n9 0 0 0\n9 1 0 0\n9 0 1 0\n3 0 1 2\n";
        let c = parse_ply(text, p()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.point(2), &Point3::new(0.0, 1.0, 0.0));
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n", p()).is_err());
        assert!(parse_ply(&text.replace("9 0 1 0\n3 0 1 2\n", ""), p()).is_err());
    }

    #[test]
    fn formats_round_trip_exactly() {
        let c = PointCloud::from_xyz(&[[0.1, -2.5e-7, 3.0], [1.0 / 3.0, 2.0, -0.0]]).unwrap();
        let a = parse_xyz(&format_xyz(&c), p()).unwrap();
        let b = parse_ply(&format_ply(&c), p()).unwrap();
        assert_eq!(a.points(), c.points());
        assert_eq!(b.points(), c.points());
    }
}
