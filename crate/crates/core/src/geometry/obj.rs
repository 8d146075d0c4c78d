//! Wavefront OBJ reading and writing.
//!
//! Only `v` and `f` records are produced. Vertices carrying albedo are written
//! as six-component `v x y z r g b` records. Output uses fixed six-digit
//! fractional formatting, so identical meshes always serialize to identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::mesh::Mesh;
use crate::error::{Error, IoContext, Result};

pub fn to_obj_string(mesh: &Mesh) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 24);
    for (i, v) in mesh.vertices.iter().enumerate() {
        write!(s, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z).unwrap();
        if let Some(albedo) = &mesh.albedo {
            let [r, g, b] = albedo[i];
            write!(s, " {r:.6} {g:.6} {b:.6}").unwrap();
        }
        s.push('\n');
    }
    for face in &mesh.faces {
        s.push('f');
        for &i in face {
            write!(s, " {}", i + 1).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn write_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, to_obj_string(mesh)).at(path)
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).at(path)?;
    parse_obj(&text).map_err(|msg| Error::Format {
        path: path.to_path_buf(),
        msg,
    })
}

/// Parses `v` and `f` records; other record types are ignored.
pub fn parse_obj(text: &str) -> std::result::Result<Mesh, String> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let nums = parts
                    .map(str::parse::<f64>)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| format!("line {lineno}: {e}"))?;
                match nums.len() {
                    3 | 4 => {
                        vertices.push(Point3::new(nums[0], nums[1], nums[2]));
                        colors.push(None);
                    }
                    6 => {
                        vertices.push(Point3::new(nums[0], nums[1], nums[2]));
                        colors.push(Some([nums[3], nums[4], nums[5]]));
                    }
                    n => return Err(format!("line {lineno}: vertex with {n} components")),
                }
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let face = parts
                    .map(|tok| {
                        let idx: i64 = tok
                            .split('/')
                            .next()
                            .unwrap_or_default()
                            .parse()
                            .map_err(|e| format!("line {lineno}: {e}"))?;
                        let resolved = if idx < 0 { n + idx } else { idx - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(format!("line {lineno}: vertex index {idx} out of range"));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                faces.push(face);
            }
            _ => {}
        }
    }
    let albedo = if !colors.is_empty() && colors.iter().all(Option::is_some) {
        Some(colors.into_iter().map(Option::unwrap).collect())
    } else {
        None
    };
    let mesh = Mesh {
        vertices,
        faces,
        albedo,
    };
    mesh.validate().map_err(|e| e.to_string())?;
    Ok(mesh)
}
