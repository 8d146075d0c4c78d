//! Z-buffered triangle rasterization with Lambert shading.

use nalgebra::{Point3, Vector3};

use super::camera::{fixed_camera, frame_camera, CameraTransform};
use super::{ColorMode, RenderJob, RenderedImage};
use crate::error::Result;
use crate::geometry::{bounding_box, Mesh, Rgb};

const NEAR: f64 = 1e-6;

fn luminance(c: Rgb) -> f64 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}

/// Applies the job's anisotropic scale about the bounding-box center.
pub(crate) fn scaled_mesh(mesh: &Mesh, job: &RenderJob) -> Result<Mesh> {
    match job.aniso {
        Some(a) => {
            let c = bounding_box(mesh)?.center();
            let axis = a.axis.index();
            Ok(mesh.clone().map_vertices(|mut p| {
                p[axis] = c[axis] + (p[axis] - c[axis]) * a.factor;
                p
            }))
        }
        None => Ok(mesh.clone()),
    }
}

struct ScreenVertex {
    x: f64,
    y: f64,
    inv_depth: f64,
}

/// Renders `mesh` according to `job`. Background pixels are 0.
pub fn rasterize(mesh: &Mesh, job: &RenderJob) -> Result<RenderedImage> {
    job.validate()?;
    mesh.validate()?;
    let pose = job.effective_pose();
    let illum = job.effective_illumination();
    let mesh = scaled_mesh(mesh, job)?;
    let cam: CameraTransform = if job.framing {
        frame_camera(&mesh, &pose)?
    } else {
        fixed_camera(&mesh, &pose)?
    };

    let res = job.resolution;
    let channels = match job.color {
        ColorMode::Gray => 1,
        ColorMode::Rgb => 3,
    };
    let mut depth = vec![0.0f64; res * res];
    let mut covered = vec![false; res * res];
    let mut pixels = vec![0u8; res * res * channels];

    let (rot_cos, rot_sin, shift) = match &job.augment {
        Some(a) => {
            let (s, c) = a.rotation_deg.to_radians().sin_cos();
            (c, s, [2.0 * a.jitter[0], 2.0 * a.jitter[1]])
        }
        None => (1.0, 0.0, [0.0, 0.0]),
    };
    let half = 0.5 * res as f64;
    let screen: Vec<Option<ScreenVertex>> = mesh
        .vertices
        .iter()
        .map(|p| {
            let (ndc, d) = cam.project(p)?;
            if d < NEAR {
                return None;
            }
            let x = rot_cos * ndc[0] - rot_sin * ndc[1] + shift[0];
            let y = rot_sin * ndc[0] + rot_cos * ndc[1] + shift[1];
            Some(ScreenVertex {
                x: (x + 1.0) * half,
                y: (1.0 - y) * half,
                inv_depth: 1.0 / d,
            })
        })
        .collect();

    let light = Vector3::from(illum.direction);

    for face in &mesh.faces {
        for k in 1..face.len() - 1 {
            let tri = [face[0], face[k], face[k + 1]];
            let Some(sv) = tri
                .iter()
                .map(|&i| screen[i as usize].as_ref())
                .collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            let wp: [Point3<f64>; 3] = tri.map(|i| mesh.vertices[i as usize]);
            let shade = if job.flat {
                (illum.k_a + illum.k_d).clamp(0.0, 1.0)
            } else {
                let mut n = (wp[1] - wp[0]).cross(&(wp[2] - wp[0]));
                let len = n.norm();
                if len == 0.0 {
                    continue;
                }
                n /= len;
                if n.dot(&(cam.eye - wp[0])) < 0.0 {
                    n = -n;
                }
                (illum.k_a + illum.k_d * n.dot(&light).max(0.0)).clamp(0.0, 1.0)
            };
            let colors = mesh.albedo.as_ref().map(|a| tri.map(|i| a[i as usize]));
            draw_triangle(
                [sv[0], sv[1], sv[2]],
                colors,
                shade,
                job.color,
                res,
                &mut depth,
                &mut covered,
                &mut pixels,
            );
        }
    }

    Ok(RenderedImage {
        width: res,
        height: res,
        channels,
        pixels,
        coverage: covered,
        job: job.clone(),
    })
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

#[allow(clippy::too_many_arguments)]
fn draw_triangle(
    v: [&ScreenVertex; 3],
    colors: Option<[Rgb; 3]>,
    shade: f64,
    mode: ColorMode,
    res: usize,
    depth: &mut [f64],
    covered: &mut [bool],
    pixels: &mut [u8],
) {
    let p = v.map(|s| (s.x, s.y));
    let area = edge(p[0], p[1], p[2]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    // Both windings are drawn (double-sided); normalize so weights are positive.
    let (order, area) = if area > 0.0 { ([0, 1, 2], area) } else { ([0, 2, 1], -area) };
    let q = order.map(|i| p[i]);
    let iz = order.map(|i| v[i].inv_depth);
    let col = colors.map(|c| order.map(|i| c[i]));

    let min_x = q.iter().map(|a| a.0).fold(f64::INFINITY, f64::min).floor().max(0.0);
    let max_x = q.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(res as f64);
    let min_y = q.iter().map(|a| a.1).fold(f64::INFINITY, f64::min).floor().max(0.0);
    let max_y = q.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(res as f64);
    if min_x >= max_x || min_y >= max_y {
        return;
    }
    let channels = match mode {
        ColorMode::Gray => 1,
        ColorMode::Rgb => 3,
    };
    for y in min_y as usize..max_y as usize {
        for x in min_x as usize..max_x as usize {
            let c = (x as f64 + 0.5, y as f64 + 0.5);
            let w0 = edge(q[1], q[2], c);
            let w1 = edge(q[2], q[0], c);
            let w2 = edge(q[0], q[1], c);
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let (b0, b1, b2) = (w0 / area, w1 / area, w2 / area);
            let inv = b0 * iz[0] + b1 * iz[1] + b2 * iz[2];
            let idx = y * res + x;
            if inv <= depth[idx] {
                continue;
            }
            depth[idx] = inv;
            covered[idx] = true;
            // Perspective-correct attribute weights.
            let (p0, p1, p2) = (b0 * iz[0] / inv, b1 * iz[1] / inv, b2 * iz[2] / inv);
            // Without albedo the surface is white (exactly 1.0).
            let albedo: Rgb = match &col {
                Some(c) => std::array::from_fn(|k| p0 * c[0][k] + p1 * c[1][k] + p2 * c[2][k]),
                None => [1.0; 3],
            };
            let to_u8 = |x: f64| (x * shade * 255.0).round().clamp(0.0, 255.0) as u8;
            match mode {
                ColorMode::Gray if col.is_none() => pixels[idx] = to_u8(1.0),
                ColorMode::Gray => pixels[idx] = to_u8(luminance(albedo).min(1.0)),
                ColorMode::Rgb => {
                    for k in 0..3 {
                        pixels[idx * channels + k] = to_u8(albedo[k]);
                    }
                }
            }
        }
    }
}
