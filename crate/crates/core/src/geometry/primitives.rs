//! Closed primitive shapes. All primitives share vertices between faces so the
//! subdivision modifier sees a connected surface.

use std::f64::consts::TAU;

use nalgebra::{Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PrimitiveKind {
    Cube {
        edge: f64,
    },
    /// UV sphere: `segments` around the y axis, `rings` latitude bands.
    Sphere {
        radius: f64,
        segments: u32,
        rings: u32,
    },
    Cone {
        radius: f64,
        height: f64,
        segments: u32,
    },
    Cylinder {
        radius: f64,
        height: f64,
        segments: u32,
    },
    /// Ring around the y axis; `segments` along the ring, `sides` around the tube.
    Torus {
        major_radius: f64,
        tube_radius: f64,
        segments: u32,
        sides: u32,
    },
}

impl PrimitiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Cube { .. } => "cube",
            PrimitiveKind::Sphere { .. } => "sphere",
            PrimitiveKind::Cone { .. } => "cone",
            PrimitiveKind::Cylinder { .. } => "cylinder",
            PrimitiveKind::Torus { .. } => "torus",
        }
    }
}

/// Similarity transform applied after tessellation: scale, then rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub translation: [f64; 3],
    /// Unit quaternion as `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub scale: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Placement {
            translation: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            scale: 1.0,
        }
    }
}

impl Placement {
    fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn apply(&self, p: Point3<f64>) -> Point3<f64> {
        let t = Translation3::new(self.translation[0], self.translation[1], self.translation[2]);
        t * (self.rotation() * Point3::from(p.coords * self.scale))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    pub placement: Placement,
}

impl PrimitiveSpec {
    pub fn at_origin(kind: PrimitiveKind) -> Self {
        PrimitiveSpec {
            kind,
            placement: Placement::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn size(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        }
        fn segs(name: &str, v: u32) -> Result<()> {
            if v >= 3 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be at least 3, got {v}")))
            }
        }
        match self.kind {
            PrimitiveKind::Cube { edge } => size("edge", edge)?,
            PrimitiveKind::Sphere {
                radius,
                segments,
                rings,
            } => {
                size("radius", radius)?;
                segs("segments", segments)?;
                segs("rings", rings)?;
            }
            PrimitiveKind::Cone {
                radius,
                height,
                segments,
            }
            | PrimitiveKind::Cylinder {
                radius,
                height,
                segments,
            } => {
                size("radius", radius)?;
                size("height", height)?;
                segs("segments", segments)?;
            }
            PrimitiveKind::Torus {
                major_radius,
                tube_radius,
                segments,
                sides,
            } => {
                size("major radius", major_radius)?;
                size("tube radius", tube_radius)?;
                if tube_radius >= major_radius {
                    return Err(Error::invalid(format!(
                        "tube radius {tube_radius} must be below major radius {major_radius}"
                    )));
                }
                segs("segments", segments)?;
                segs("sides", sides)?;
            }
        }
        let p = &self.placement;
        size("scale", p.scale)?;
        if !p.translation.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        let qn = p.rotation.iter().map(|c| c * c).sum::<f64>();
        if !qn.is_finite() || qn < 1e-12 {
            return Err(Error::invalid("rotation quaternion must be nonzero and finite"));
        }
        Ok(())
    }
}

pub fn make_primitive(spec: &PrimitiveSpec) -> Result<Mesh> {
    spec.validate()?;
    let (vertices, faces) = match spec.kind {
        PrimitiveKind::Cube { edge } => cube_parts(edge),
        PrimitiveKind::Sphere {
            radius,
            segments,
            rings,
        } => sphere_parts(radius, segments, rings),
        PrimitiveKind::Cone {
            radius,
            height,
            segments,
        } => cone_parts(radius, height, segments),
        PrimitiveKind::Cylinder {
            radius,
            height,
            segments,
        } => cylinder_parts(radius, height, segments),
        PrimitiveKind::Torus {
            major_radius,
            tube_radius,
            segments,
            sides,
        } => torus_parts(major_radius, tube_radius, segments, sides),
    };
    let vertices = vertices.into_iter().map(|p| spec.placement.apply(p)).collect();
    Ok(Mesh {
        vertices,
        faces,
        albedo: None,
    })
}

/// Axis-aligned cube of the given edge length centered at the origin.
pub fn cube(edge: f64) -> Mesh {
    make_primitive(&PrimitiveSpec::at_origin(PrimitiveKind::Cube { edge }))
        .expect("cube edge must be positive")
}

type Parts = (Vec<Point3<f64>>, Vec<Vec<u32>>);

fn ring(radius: f64, y: f64, segments: u32) -> impl Iterator<Item = Point3<f64>> {
    (0..segments).map(move |j| {
        let phi = TAU * f64::from(j) / f64::from(segments);
        Point3::new(radius * phi.cos(), y, -radius * phi.sin())
    })
}

fn cube_parts(edge: f64) -> Parts {
    let h = 0.5 * edge;
    let vertices = (0..8)
        .map(|i| {
            let s = |bit: u32| if i & bit != 0 { h } else { -h };
            Point3::new(s(1), s(2), s(4))
        })
        .collect();
    let faces = vec![
        vec![0, 4, 6, 2], // -x
        vec![1, 3, 7, 5], // +x
        vec![0, 1, 5, 4], // -y
        vec![2, 6, 7, 3], // +y
        vec![0, 2, 3, 1], // -z
        vec![4, 5, 7, 6], // +z
    ];
    (vertices, faces)
}

fn sphere_parts(radius: f64, segments: u32, rings: u32) -> Parts {
    let mut vertices = vec![Point3::new(0.0, radius, 0.0)];
    for i in 1..rings {
        let theta = std::f64::consts::PI * f64::from(i) / f64::from(rings);
        vertices.extend(ring(radius * theta.sin(), radius * theta.cos(), segments));
    }
    let bottom = vertices.len() as u32;
    vertices.push(Point3::new(0.0, -radius, 0.0));

    let at = |r: u32, j: u32| 1 + r * segments + j % segments;
    let mut faces = Vec::with_capacity((segments * rings) as usize);
    for j in 0..segments {
        faces.push(vec![0, at(0, j), at(0, j + 1)]);
    }
    for r in 0..rings - 2 {
        for j in 0..segments {
            faces.push(vec![at(r, j), at(r + 1, j), at(r + 1, j + 1), at(r, j + 1)]);
        }
    }
    for j in 0..segments {
        faces.push(vec![bottom, at(rings - 2, j + 1), at(rings - 2, j)]);
    }
    (vertices, faces)
}

fn cone_parts(radius: f64, height: f64, segments: u32) -> Parts {
    let y0 = -0.5 * height;
    let mut vertices: Vec<_> = ring(radius, y0, segments).collect();
    let apex = segments;
    let base = segments + 1;
    vertices.push(Point3::new(0.0, 0.5 * height, 0.0));
    vertices.push(Point3::new(0.0, y0, 0.0));
    let mut faces = Vec::with_capacity(2 * segments as usize);
    for j in 0..segments {
        let k = (j + 1) % segments;
        faces.push(vec![apex, j, k]);
        faces.push(vec![base, k, j]);
    }
    (vertices, faces)
}

fn cylinder_parts(radius: f64, height: f64, segments: u32) -> Parts {
    let h = 0.5 * height;
    let mut vertices: Vec<_> = ring(radius, -h, segments).chain(ring(radius, h, segments)).collect();
    let bottom = 2 * segments;
    let top = bottom + 1;
    vertices.push(Point3::new(0.0, -h, 0.0));
    vertices.push(Point3::new(0.0, h, 0.0));
    let mut faces = Vec::with_capacity(3 * segments as usize);
    for j in 0..segments {
        let k = (j + 1) % segments;
        faces.push(vec![j, k, segments + k, segments + j]);
        faces.push(vec![bottom, k, j]);
        faces.push(vec![top, segments + j, segments + k]);
    }
    (vertices, faces)
}

fn torus_parts(major: f64, tube: f64, segments: u32, sides: u32) -> Parts {
    let mut vertices = Vec::with_capacity((segments * sides) as usize);
    for i in 0..segments {
        let phi = TAU * f64::from(i) / f64::from(segments);
        let radial = Vector3::new(phi.cos(), 0.0, -phi.sin());
        for j in 0..sides {
            let psi = TAU * f64::from(j) / f64::from(sides);
            let r = major + tube * psi.cos();
            vertices.push(Point3::from(radial * r + Vector3::y() * (tube * psi.sin())));
        }
    }
    let at = |i: u32, j: u32| (i % segments) * sides + j % sides;
    let mut faces = Vec::with_capacity((segments * sides) as usize);
    for i in 0..segments {
        for j in 0..sides {
            faces.push(vec![at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    (vertices, faces)
}
