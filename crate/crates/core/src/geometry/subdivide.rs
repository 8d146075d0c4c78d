//! Catmull–Clark subdivision for triangle/quad meshes.
//!
//! New vertices are laid out as `[moved originals | edge points | face points]`.
//! Boundary edges (one incident face) use midpoints and boundary vertices the
//! cubic B-spline rule. Non-manifold edges (three or more faces) are treated as
//! boundary creases and counted as warnings.

use std::collections::HashMap;

use nalgebra::Point3;

use super::{mesh::Mesh, mesh::Rgb, ModifierOutput};
use crate::error::{Error, Result};

pub const MAX_SUBDIVISION_LEVELS: u32 = 3;

pub fn apply_subdivide(mesh: &Mesh, levels: u32) -> Result<ModifierOutput> {
    if !(1..=MAX_SUBDIVISION_LEVELS).contains(&levels) {
        return Err(Error::invalid(format!(
            "subdivision levels must be in 1..={MAX_SUBDIVISION_LEVELS}, got {levels}"
        )));
    }
    if let Some((i, f)) = mesh.faces.iter().enumerate().find(|(_, f)| f.len() > 4) {
        return Err(Error::invalid(format!(
            "face {i} has {} sides; subdivision accepts triangles and quads",
            f.len()
        )));
    }
    let mut current = mesh.clone();
    let mut warnings = 0;
    for _ in 0..levels {
        let (next, w) = subdivide_once(&current);
        current = next;
        warnings += w;
    }
    Ok(ModifierOutput {
        mesh: current,
        warnings,
    })
}

/// Per-vertex attribute that subdivides with the same affine weights as positions.
trait Attr: Copy {
    fn zero() -> Self;
    fn add_scaled(self, other: Self, w: f64) -> Self;
}

impl Attr for Point3<f64> {
    fn zero() -> Self {
        Point3::origin()
    }
    fn add_scaled(self, other: Self, w: f64) -> Self {
        self + other.coords * w
    }
}

impl Attr for Rgb {
    fn zero() -> Self {
        [0.0; 3]
    }
    fn add_scaled(self, other: Self, w: f64) -> Self {
        [
            self[0] + other[0] * w,
            self[1] + other[1] * w,
            self[2] + other[2] * w,
        ]
    }
}

struct Topology {
    /// Undirected edges `(lo, hi)` in first-occurrence order.
    edges: Vec<(u32, u32)>,
    edge_faces: Vec<Vec<u32>>,
    edge_index: HashMap<(u32, u32), u32>,
    vertex_faces: Vec<Vec<u32>>,
    vertex_edges: Vec<Vec<u32>>,
}

impl Topology {
    fn build(mesh: &Mesh) -> Self {
        let n = mesh.vertices.len();
        let mut t = Topology {
            edges: Vec::new(),
            edge_faces: Vec::new(),
            edge_index: HashMap::new(),
            vertex_faces: vec![Vec::new(); n],
            vertex_edges: vec![Vec::new(); n],
        };
        for (fi, face) in mesh.faces.iter().enumerate() {
            for k in 0..face.len() {
                let a = face[k];
                let b = face[(k + 1) % face.len()];
                let key = (a.min(b), a.max(b));
                let ei = *t.edge_index.entry(key).or_insert_with(|| {
                    t.edges.push(key);
                    t.edge_faces.push(Vec::new());
                    let ei = (t.edges.len() - 1) as u32;
                    t.vertex_edges[key.0 as usize].push(ei);
                    t.vertex_edges[key.1 as usize].push(ei);
                    ei
                });
                t.edge_faces[ei as usize].push(fi as u32);
                t.vertex_faces[a as usize].push(fi as u32);
            }
        }
        t
    }

    fn edge(&self, a: u32, b: u32) -> u32 {
        self.edge_index[&(a.min(b), a.max(b))]
    }
}

fn subdivide_once(mesh: &Mesh) -> (Mesh, usize) {
    let topo = Topology::build(mesh);
    let warnings = topo.edge_faces.iter().filter(|f| f.len() > 2).count();

    let vertices = refine(mesh, &topo, &mesh.vertices);
    let albedo = mesh.albedo.as_ref().map(|a| {
        refine(mesh, &topo, a)
            .into_iter()
            .map(|c| c.map(|x| x.clamp(0.0, 1.0)))
            .collect()
    });

    let nv = mesh.vertices.len() as u32;
    let ne = topo.edges.len() as u32;
    let mut faces = Vec::with_capacity(mesh.corner_count());
    for (fi, face) in mesh.faces.iter().enumerate() {
        let fp = nv + ne + fi as u32;
        let m = face.len();
        for k in 0..m {
            let prev = face[(k + m - 1) % m];
            let cur = face[k];
            let next = face[(k + 1) % m];
            faces.push(vec![
                cur,
                nv + topo.edge(cur, next),
                fp,
                nv + topo.edge(prev, cur),
            ]);
        }
    }
    (
        Mesh {
            vertices,
            faces,
            albedo,
        },
        warnings,
    )
}

fn refine<T: Attr>(mesh: &Mesh, topo: &Topology, values: &[T]) -> Vec<T> {
    let face_points: Vec<T> = mesh
        .faces
        .iter()
        .map(|f| average(f.iter().map(|&i| values[i as usize])))
        .collect();

    let edge_points: Vec<T> = topo
        .edges
        .iter()
        .zip(&topo.edge_faces)
        .map(|(&(a, b), faces)| {
            let (pa, pb) = (values[a as usize], values[b as usize]);
            if faces.len() == 2 {
                average(
                    [pa, pb, face_points[faces[0] as usize], face_points[faces[1] as usize]]
                        .into_iter(),
                )
            } else {
                average([pa, pb].into_iter())
            }
        })
        .collect();

    let mut out = Vec::with_capacity(values.len() + edge_points.len() + face_points.len());
    for (v, p) in values.iter().copied().enumerate() {
        let edges = &topo.vertex_edges[v];
        let boundary: Vec<u32> = edges
            .iter()
            .copied()
            .filter(|&e| topo.edge_faces[e as usize].len() != 2)
            .collect();
        let midpoint = |e: u32| {
            let (a, b) = topo.edges[e as usize];
            average([values[a as usize], values[b as usize]].into_iter())
        };
        let moved = if edges.is_empty() {
            p
        } else if boundary.is_empty() {
            let n = edges.len() as f64;
            if n < 3.0 {
                p
            } else {
                let f = average(
                    topo.vertex_faces[v]
                        .iter()
                        .map(|&fi| face_points[fi as usize]),
                );
                let r = average(edges.iter().map(|&e| midpoint(e)));
                T::zero()
                    .add_scaled(f, 1.0 / n)
                    .add_scaled(r, 2.0 / n)
                    .add_scaled(p, (n - 3.0) / n)
            }
        } else if boundary.len() == 2
            && boundary
                .iter()
                .all(|&e| topo.edge_faces[e as usize].len() == 1)
        {
            T::zero()
                .add_scaled(p, 0.5)
                .add_scaled(midpoint(boundary[0]), 0.25)
                .add_scaled(midpoint(boundary[1]), 0.25)
        } else {
            // Corner or non-manifold junction: pinned.
            p
        };
        out.push(moved);
    }
    out.extend(edge_points);
    out.extend(face_points);
    out
}

fn average<T: Attr>(items: impl Iterator<Item = T>) -> T {
    let items: Vec<T> = items.collect();
    let w = 1.0 / items.len() as f64;
    items
        .into_iter()
        .fold(T::zero(), |acc, x| acc.add_scaled(x, w))
}
