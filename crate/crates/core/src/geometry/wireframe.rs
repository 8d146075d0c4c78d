use nalgebra::{Point3, Vector3};

use super::{mesh::Mesh, ModifierOutput};
use crate::error::{Error, Result};

const MIN_EDGE_LENGTH: f64 = 1e-12;

/// Replaces every edge with a capless square prism of side `thickness`
/// centered on the edge. Input faces are discarded.
pub fn apply_wireframe(mesh: &Mesh, thickness: f64) -> Result<ModifierOutput> {
    if !(thickness.is_finite() && thickness > 0.0) {
        return Err(Error::invalid(format!(
            "wireframe thickness must be positive, got {thickness}"
        )));
    }
    let edges = mesh.edges();
    let half = 0.5 * thickness;
    let mut out = Mesh {
        vertices: Vec::with_capacity(edges.len() * 8),
        faces: Vec::with_capacity(edges.len() * 4),
        albedo: mesh.albedo.as_ref().map(|_| Vec::with_capacity(edges.len() * 8)),
    };
    let mut skipped = 0;
    for (a, b) in edges {
        let pa = mesh.vertices[a as usize];
        let pb = mesh.vertices[b as usize];
        let axis = pb - pa;
        let len = axis.norm();
        if len < MIN_EDGE_LENGTH {
            skipped += 1;
            continue;
        }
        let (u, v) = perpendicular_basis(&(axis / len));
        let corners = [u + v, v - u, -u - v, u - v].map(|c| c * half);
        let base = out.vertices.len() as u32;
        for end in [pa, pb] {
            out.vertices
                .extend(corners.iter().map(|c| Point3::from(end.coords + c)));
        }
        if let (Some(dst), Some(src)) = (out.albedo.as_mut(), mesh.albedo.as_ref()) {
            dst.extend(std::iter::repeat_n(src[a as usize], 4));
            dst.extend(std::iter::repeat_n(src[b as usize], 4));
        }
        for k in 0..4 {
            let k1 = (k + 1) % 4;
            out.faces
                .push(vec![base + k, base + k1, base + 4 + k1, base + 4 + k]);
        }
    }
    Ok(ModifierOutput {
        mesh: out,
        warnings: skipped,
    })
}

/// Orthonormal pair perpendicular to the unit vector `d`, seeded from the
/// coordinate axis least aligned with it.
fn perpendicular_basis(d: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let ax = d.map(f64::abs);
    let helper = if ax.x <= ax.y && ax.x <= ax.z {
        Vector3::x()
    } else if ax.y <= ax.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u = d.cross(&helper).normalize();
    let v = d.cross(&u);
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bounding_box, primitives::cube};

    fn triangle() -> Mesh {
        Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![vec![0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn triangle_becomes_three_prisms() {
        let out = apply_wireframe(&triangle(), 0.1).unwrap();
        assert_eq!(out.mesh.vertex_count(), 3 * 8);
        assert_eq!(out.mesh.face_count(), 3 * 4);
        assert_eq!(out.warnings, 0);
        out.mesh.validate().unwrap();
    }

    #[test]
    fn prism_cross_section_has_requested_side() {
        let out = apply_wireframe(&triangle(), 0.1).unwrap();
        let v = &out.mesh.vertices;
        for k in 0..4 {
            let side = (v[(k + 1) % 4] - v[k]).norm();
            assert!((side - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mesh_stays_empty() {
        let out = apply_wireframe(&Mesh::default(), 0.1).unwrap();
        assert!(out.mesh.is_empty() && out.mesh.faces.is_empty());
    }

    #[test]
    fn cube_wireframe_within_inflated_box() {
        let c = cube(2.0);
        let out = apply_wireframe(&c, 0.05).unwrap();
        assert_eq!(out.mesh.vertex_count(), 12 * 8);
        let outer = bounding_box(&c).unwrap().inflate(0.05);
        assert!(outer.contains(&bounding_box(&out.mesh).unwrap()));
    }

    #[test]
    fn coincident_endpoints_are_skipped() {
        let p = Point3::new(0.5, 0.5, 0.5);
        let m = Mesh::new(vec![p, p, Point3::new(1.0, 0.0, 0.0)], vec![vec![0, 1, 2]]).unwrap();
        let out = apply_wireframe(&m, 0.1).unwrap();
        assert_eq!(out.warnings, 1);
        assert_eq!(out.mesh.face_count(), 8);
    }

    #[test]
    fn albedo_follows_edge_endpoints() {
        let m = triangle()
            .with_albedo(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
            .unwrap();
        let out = apply_wireframe(&m, 0.1).unwrap();
        let albedo = out.mesh.albedo.as_ref().unwrap();
        assert_eq!(albedo.len(), 24);
        assert_eq!(albedo[0], [1.0, 0.0, 0.0]);
        assert_eq!(albedo[4], [0.0, 1.0, 0.0]);
        out.mesh.validate().unwrap();
    }

    #[test]
    fn rejects_non_positive_thickness() {
        assert!(apply_wireframe(&triangle(), 0.0).is_err());
        assert!(apply_wireframe(&triangle(), -1.0).is_err());
    }
}
