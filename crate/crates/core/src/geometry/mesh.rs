use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rgb = [f64; 3];

/// Faces smaller than this (scene units²) are dropped by [`merge`].
pub const DEGENERATE_FACE_AREA: f64 = 1e-12;

/// Indexed polygon mesh with optional per-vertex albedo.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<Vec<u32>>,
    pub albedo: Option<Vec<Rgb>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn extents(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn max_extent(&self) -> f64 {
        let e = self.extents();
        e[0].max(e[1]).max(e[2])
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn diagonal(&self) -> f64 {
        let e = self.extents();
        (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
    }

    pub fn inflate(&self, by: f64) -> Aabb {
        Aabb {
            min: self.min.map(|v| v - by),
            max: self.max.map(|v| v + by),
        }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.min[i] && other.max[i] <= self.max[i])
    }
}

impl Mesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<Vec<u32>>) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            faces,
            albedo: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_albedo(mut self, albedo: Vec<Rgb>) -> Result<Self> {
        self.albedo = Some(albedo);
        self.validate()?;
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Checks every structural invariant of the mesh.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some((i, _)) = self
            .vertices
            .iter()
            .enumerate()
            .find(|(_, v)| !v.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid(format!("vertex {i} is not finite")));
        }
        for (fi, face) in self.faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(Error::invalid(format!("face {fi} has {} corners", face.len())));
            }
            for (k, &idx) in face.iter().enumerate() {
                if idx as usize >= n {
                    return Err(Error::invalid(format!(
                        "face {fi} references vertex {idx} of {n}"
                    )));
                }
                if face[..k].contains(&idx) {
                    return Err(Error::invalid(format!("face {fi} repeats vertex {idx}")));
                }
            }
        }
        if let Some(albedo) = &self.albedo {
            if albedo.len() != n {
                return Err(Error::invalid(format!(
                    "albedo has {} entries for {n} vertices",
                    albedo.len()
                )));
            }
            if albedo
                .iter()
                .flatten()
                .any(|c| !(0.0..=1.0).contains(c))
            {
                return Err(Error::invalid("albedo channel outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Unique undirected edges in first-occurrence order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for face in &self.faces {
            for k in 0..face.len() {
                let a = face[k];
                let b = face[(k + 1) % face.len()];
                let key = (a.min(b), a.max(b));
                if seen.insert(key) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// V − E + F over the vertices referenced by faces plus isolated ones.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.faces.len() as i64
    }

    /// Vector area of a polygon, triangulated as a fan from its first corner.
    pub fn face_area(&self, face: &[u32]) -> f64 {
        let p0 = self.vertices[face[0] as usize];
        let mut sum = Vector3::zeros();
        for k in 1..face.len() - 1 {
            let a = self.vertices[face[k] as usize] - p0;
            let b = self.vertices[face[k + 1] as usize] - p0;
            sum += a.cross(&b);
        }
        0.5 * sum.norm()
    }

    /// Applies `f` to every vertex position.
    pub fn map_vertices(mut self, f: impl Fn(Point3<f64>) -> Point3<f64>) -> Mesh {
        for v in &mut self.vertices {
            *v = f(*v);
        }
        self
    }

    /// Sum of face corner counts, which is also the Catmull–Clark level-1 face count.
    pub fn corner_count(&self) -> usize {
        self.faces.iter().map(Vec::len).sum()
    }
}

pub fn bounding_box(mesh: &Mesh) -> Result<Aabb> {
    let mut it = mesh.vertices.iter();
    let first = it.next().ok_or(Error::EmptyInput("bounding box of an empty mesh"))?;
    let mut min = [first.x, first.y, first.z];
    let mut max = min;
    for v in it {
        for i in 0..3 {
            min[i] = min[i].min(v[i]);
            max[i] = max[i].max(v[i]);
        }
    }
    Ok(Aabb { min, max })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Merged {
    pub mesh: Mesh,
    /// Faces dropped for having area below [`DEGENERATE_FACE_AREA`].
    pub dropped_faces: usize,
}

/// Concatenates meshes, shifting face indices; albedo survives only if every input has it.
pub fn merge<'a>(meshes: impl IntoIterator<Item = &'a Mesh>) -> Merged {
    let meshes: Vec<&Mesh> = meshes.into_iter().collect();
    let keep_albedo = !meshes.is_empty() && meshes.iter().all(|m| m.albedo.is_some());
    let mut out = Mesh {
        vertices: Vec::with_capacity(meshes.iter().map(|m| m.vertices.len()).sum()),
        faces: Vec::with_capacity(meshes.iter().map(|m| m.faces.len()).sum()),
        albedo: keep_albedo.then(Vec::new),
    };
    let mut dropped = 0;
    for m in meshes {
        let offset = out.vertices.len() as u32;
        for face in &m.faces {
            if m.face_area(face) < DEGENERATE_FACE_AREA {
                dropped += 1;
                continue;
            }
            out.faces.push(face.iter().map(|&i| i + offset).collect());
        }
        out.vertices.extend_from_slice(&m.vertices);
        if let (Some(dst), Some(src)) = (out.albedo.as_mut(), m.albedo.as_ref()) {
            dst.extend_from_slice(src);
        }
    }
    Merged {
        mesh: out,
        dropped_faces: dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{cube, make_primitive, PrimitiveKind, PrimitiveSpec};

    #[test]
    fn bounding_box_of_single_vertex() {
        let m = Mesh::new(vec![Point3::new(1.0, 2.0, 3.0)], vec![]).unwrap();
        let b = bounding_box(&m).unwrap();
        assert_eq!(b.min, [1.0, 2.0, 3.0]);
        assert_eq!(b.max, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn bounding_box_of_empty_mesh_fails() {
        assert!(matches!(
            bounding_box(&Mesh::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn cube_extents_and_quality_bound() {
        let b = bounding_box(&cube(2.0)).unwrap();
        assert_eq!(b.extents(), [2.0, 2.0, 2.0]);
        let big = make_primitive(&PrimitiveSpec::at_origin(PrimitiveKind::Cube { edge: 20.0 })).unwrap();
        assert!(bounding_box(&big).unwrap().max_extent() > 10.0);
    }

    #[test]
    fn merge_two_cubes_offsets_second() {
        let c = cube(2.0);
        let m = merge([&c, &c]).mesh;
        assert_eq!(m.vertex_count(), 16);
        assert_eq!(m.face_count(), 12);
        for (a, b) in m.faces[..6].iter().zip(&m.faces[6..]) {
            assert!(a.iter().zip(b).all(|(x, y)| *y == x + 8));
        }
        m.validate().unwrap();
    }

    #[test]
    fn merge_of_nothing_is_empty() {
        let m = merge(std::iter::empty::<&Mesh>());
        assert!(m.mesh.is_empty());
        assert!(m.mesh.faces.is_empty());
    }

    #[test]
    fn merge_drops_albedo_unless_all_have_it() {
        let plain = cube(1.0);
        let colored = cube(1.0).with_albedo(vec![[0.5; 3]; 8]).unwrap();
        assert!(merge([&colored, &plain]).mesh.albedo.is_none());
        let both = merge([&colored, &colored]).mesh;
        assert_eq!(both.albedo.as_ref().map(Vec::len), Some(16));
    }

    #[test]
    fn merge_drops_degenerate_faces() {
        let sliver = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ],
            vec![vec![0, 1, 2]],
        )
        .unwrap();
        let m = merge([&sliver, &cube(1.0)]);
        assert_eq!(m.dropped_faces, 1);
        assert_eq!(m.mesh.face_count(), 6);
    }

    #[test]
    fn validate_rejects_bad_meshes() {
        let p = Point3::origin();
        assert!(Mesh::new(vec![p; 3], vec![vec![0, 1, 3]]).is_err());
        assert!(Mesh::new(vec![p; 3], vec![vec![0, 1, 1]]).is_err());
        assert!(Mesh::new(vec![p; 3], vec![vec![0, 1]]).is_err());
        assert!(Mesh::new(vec![Point3::new(f64::NAN, 0.0, 0.0)], vec![]).is_err());
        assert!(cube(1.0).with_albedo(vec![[1.5, 0.0, 0.0]; 8]).is_err());
        assert!(cube(1.0).with_albedo(vec![[0.5; 3]; 7]).is_err());
    }
}
