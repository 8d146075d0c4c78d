//! Mesh representation, primitives, modifiers and OBJ serialization.

mod mesh;
pub mod obj;
pub mod primitives;
mod subdivide;
mod wireframe;

use serde::{Deserialize, Serialize};

pub use mesh::{bounding_box, merge, Aabb, Merged, Mesh, Rgb, DEGENERATE_FACE_AREA};
pub use primitives::{cube, make_primitive, Placement, PrimitiveKind, PrimitiveSpec};
pub use subdivide::{apply_subdivide, MAX_SUBDIVISION_LEVELS};
pub use wireframe::apply_wireframe;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModifierSpec {
    Wireframe { thickness: f64 },
    Subdivide { levels: u32 },
}

/// A modified mesh plus the number of recoverable problems met on the way
/// (skipped degenerate edges, non-manifold edges).
#[derive(Debug, Clone, PartialEq)]
pub struct ModifierOutput {
    pub mesh: Mesh,
    pub warnings: usize,
}

pub fn apply_modifier(mesh: &Mesh, modifier: &ModifierSpec) -> Result<ModifierOutput> {
    match *modifier {
        ModifierSpec::Wireframe { thickness } => apply_wireframe(mesh, thickness),
        ModifierSpec::Subdivide { levels } => apply_subdivide(mesh, levels),
    }
}
