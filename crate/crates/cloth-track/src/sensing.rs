//! Synthetic depth sensing: visibility from a top-down orthographic camera,
//! noisy point-cloud rendering, depth images, and Chamfer distances.
//!
//! Visibility uses a z-buffer. Every vertex splats its height into a small
//! pixel neighborhood; a vertex is visible when it is within `z_epsilon` of
//! the maximum height recorded at its own pixel. The splat closes the holes
//! between grid vertices so a cloth layer reliably occludes the layer
//! beneath it; the cost is that steep folds are treated conservatively
//! (their lower side counts as hidden), which only shrinks the visible set.

use crate::error::{Error, Result};
use crate::mesh::{ClothMesh, ClothState};
use crate::spatial::KdTree;
use crate::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Top-down orthographic camera over a rectangular workspace, together with
/// its sensor noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Image resolution in pixels.
    pub width: usize,
    pub height: usize,
    /// Isotropic Gaussian noise added to every returned point, meters.
    pub depth_noise_sigma: f64,
    /// Fraction of points dropped at random, in [0, 1).
    pub dropout_rate: f64,
    /// Visibility slack: a vertex within this height of the z-buffer
    /// maximum at its pixel counts as visible.
    pub z_epsilon: f64,
    /// Splat half-width in pixels; each vertex writes its height into a
    /// disc of this radius so layers occlude the space between grid points.
    pub splat_radius: usize,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            x_min: 0.0,
            x_max: 0.6,
            y_min: 0.0,
            y_max: 0.6,
            width: 200,
            height: 200,
            depth_noise_sigma: 0.001,
            dropout_rate: 0.02,
            z_epsilon: 0.004,
            splat_radius: 2,
        }
    }
}

impl CameraModel {
    /// A camera covering `[x_min, x_max] x [y_min, y_max]` with pixels of
    /// roughly `pixel_size` meters; noise fields keep their defaults.
    pub fn over_bounds(x_min: f64, x_max: f64, y_min: f64, y_max: f64, pixel_size: f64) -> Self {
        let width = (((x_max - x_min) / pixel_size).ceil() as usize).max(16);
        let height = (((y_max - y_min) / pixel_size).ceil() as usize).max(16);
        CameraModel { x_min, x_max, y_min, y_max, width, height, ..CameraModel::default() }
    }

    /// A noiseless copy (no Gaussian perturbation, no dropout).
    pub fn noiseless(&self) -> Self {
        CameraModel { depth_noise_sigma: 0.0, dropout_rate: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::InvalidParam(format!(
                "degenerate camera bounds [{}, {}] x [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidParam(format!(
                "camera resolution must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParam(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.depth_noise_sigma < 0.0 || !self.depth_noise_sigma.is_finite() {
            return Err(Error::InvalidParam(format!(
                "depth_noise_sigma must be non-negative, got {}",
                self.depth_noise_sigma
            )));
        }
        if !(self.z_epsilon > 0.0) {
            return Err(Error::InvalidParam(format!(
                "z_epsilon must be positive, got {}",
                self.z_epsilon
            )));
        }
        Ok(())
    }

    /// Pixel coordinates of a world point, or None if out of bounds.
    fn pixel_of(&self, p: &Vec3) -> Option<(usize, usize)> {
        if p.x < self.x_min || p.x > self.x_max || p.y < self.y_min || p.y > self.y_max {
            return None;
        }
        let u = (p.x - self.x_min) / (self.x_max - self.x_min);
        let v = (p.y - self.y_min) / (self.y_max - self.y_min);
        let px = ((u * self.width as f64) as usize).min(self.width - 1);
        let py = ((v * self.height as f64) as usize).min(self.height - 1);
        Some((px, py))
    }
}

/// A sphere blocking the camera's view (the synthetic tweezer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).norm() <= self.radius
    }
}

/// An unordered set of 3-D points in meters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.points.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(())
    }
}

/// Max-height z-buffer over the camera image from splatted points.
/// Pixels nothing maps to hold negative infinity.
fn build_zbuffer(points: &[Vec3], camera: &CameraModel) -> Vec<f64> {
    let mut buf = vec![f64::NEG_INFINITY; camera.width * camera.height];
    let r = camera.splat_radius as i64;
    for p in points {
        let Some((px, py)) = camera.pixel_of(p) else { continue };
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let (qx, qy) = (px as i64 + dx, py as i64 + dy);
                if qx < 0 || qy < 0 || qx >= camera.width as i64 || qy >= camera.height as i64 {
                    continue;
                }
                let idx = qy as usize * camera.width + qx as usize;
                if p.z > buf[idx] {
                    buf[idx] = p.z;
                }
            }
        }
    }
    buf
}

/// Indices of the vertices visible from the top-down camera, ascending.
///
/// A vertex is visible iff it lies within the camera bounds and its height
/// is within `z_epsilon` of the z-buffer maximum at its own pixel.
/// Out-of-bounds vertices are excluded, not an error.
pub fn visible_vertices(
    mesh: &ClothMesh,
    state: &ClothState,
    camera: &CameraModel,
) -> Result<Vec<usize>> {
    state.validate(mesh)?;
    camera.validate()?;
    let buf = build_zbuffer(&state.positions, camera);
    let mut out = Vec::new();
    for (i, p) in state.positions.iter().enumerate() {
        let Some((px, py)) = camera.pixel_of(p) else { continue };
        if buf[py * camera.width + px] - p.z <= camera.z_epsilon {
            out.push(i);
        }
    }
    Ok(out)
}

/// Renders a synthetic observation: visible vertices, minus those inside
/// any occluder sphere, with isotropic Gaussian noise and random dropout.
///
/// Returns the cloud and a warning flag that is true iff the cloud came
/// out empty (fully occluded scene, or everything dropped). Deterministic
/// given the seed: dropout is decided, then noise drawn, per surviving
/// vertex in ascending index order.
pub fn render_point_cloud(
    mesh: &ClothMesh,
    state: &ClothState,
    camera: &CameraModel,
    occluders: &[Sphere],
    rng_seed: u64,
) -> Result<(PointCloud, bool)> {
    let visible = visible_vertices(mesh, state, camera)?;
    let survivors: Vec<Vec3> = visible
        .iter()
        .map(|&i| state.positions[i])
        .filter(|p| !occluders.iter().any(|s| s.contains(p)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = if camera.depth_noise_sigma > 0.0 {
        Some(Normal::new(0.0, camera.depth_noise_sigma).map_err(|e| {
            Error::InvalidParam(format!("bad noise sigma {}: {e}", camera.depth_noise_sigma))
        })?)
    } else {
        None
    };

    let mut points = Vec::with_capacity(survivors.len());
    for p in survivors {
        if camera.dropout_rate > 0.0 && rng.gen::<f64>() < camera.dropout_rate {
            continue;
        }
        let noisy = match &normal {
            Some(n) => {
                let d = Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
                p + d
            }
            None => p,
        };
        points.push(noisy);
    }
    let empty = points.is_empty();
    Ok((PointCloud { points }, empty))
}

/// Row-major depth image: maximum height per pixel, NaN where nothing maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Rasterizes a point cloud to a depth image with the camera's splat.
pub fn depth_image(points: &[Vec3], camera: &CameraModel) -> Result<DepthImage> {
    camera.validate()?;
    let buf = build_zbuffer(points, camera);
    let data = buf
        .into_iter()
        .map(|z| if z == f64::NEG_INFINITY { f32::NAN } else { z as f32 })
        .collect();
    Ok(DepthImage { width: camera.width, height: camera.height, data })
}

/// Mean over `source` of the squared distance to the nearest `target`
/// point, in m². Uses a k-d tree; agrees with the brute-force double loop
/// to floating-point reproduction.
pub fn chamfer_one_way(source: &[Vec3], target: &[Vec3]) -> Result<f64> {
    nearest_mean(source, target, |d2| d2)
}

/// Like [`chamfer_one_way`] but with unsquared (Euclidean) distances, in m.
pub fn chamfer_one_way_unsquared(source: &[Vec3], target: &[Vec3]) -> Result<f64> {
    nearest_mean(source, target, f64::sqrt)
}

/// Mean of the two one-way squared Chamfer distances, in m².
pub fn chamfer_bidirectional(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(0.5 * (chamfer_one_way(a, b)? + chamfer_one_way(b, a)?))
}

/// Mean of the two one-way unsquared Chamfer distances, in m.
pub fn chamfer_bidirectional_unsquared(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(0.5 * (chamfer_one_way_unsquared(a, b)? + chamfer_one_way_unsquared(b, a)?))
}

fn nearest_mean(source: &[Vec3], target: &[Vec3], f: impl Fn(f64) -> f64) -> Result<f64> {
    if source.is_empty() {
        return Err(Error::EmptyInput("chamfer source"));
    }
    if target.is_empty() {
        return Err(Error::EmptyInput("chamfer target"));
    }
    let tree = KdTree::build(target);
    let sum: f64 =
        source.iter().map(|p| f(tree.nearest(p).expect("target checked non-empty").1)).sum();
    Ok(sum / source.len() as f64)
}
