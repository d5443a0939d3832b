//! File formats: OBJ cloth states, ASCII PLY point clouds, raw binary
//! tensors with JSON sidecars, and the flat key = value config format.
//!
//! Everything is plain text or raw little-endian bytes so artifacts stay
//! diff-able and parseable without special tooling. Floats are printed
//! with Rust's shortest-round-trip formatting, so write → read restores
//! values exactly.

use crate::error::{Error, Result};
use crate::mesh::{build_grid_cloth, ClothMesh, ClothState};
use crate::sensing::{DepthImage, PointCloud};
use crate::Vec3;
use std::path::Path;

/// Cloth states as Wavefront OBJ.
///
/// Positions are standard `v` lines and the grid cells become quad faces,
/// so any OBJ viewer renders the file. Structured comments carry what OBJ
/// cannot: `# grid nx ny spacing` (the topology recipe), `# time t`, and
/// one `# vel x y z` per vertex. Readers rebuild the full mesh from the
/// grid line and validate it, so a loaded state always satisfies the mesh
/// invariants.
pub mod obj {
    use super::*;
    use std::fmt::Write as _;

    pub fn write_state(path: &Path, mesh: &ClothMesh, state: &ClothState) -> Result<()> {
        state.validate(mesh).map_err(|e| Error::InvalidParam(format!(
            "refusing to write inconsistent state to {}: {e}",
            path.display()
        )))?;
        let mut out = String::new();
        out.push_str("# cloth state\n");
        let _ = writeln!(out, "# grid {} {} {}", mesh.num_x, mesh.num_y, mesh.spacing);
        let _ = writeln!(out, "# time {}", state.time_index);
        for p in &state.positions {
            let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
        }
        for v in &state.velocities {
            let _ = writeln!(out, "# vel {} {} {}", v.x, v.y, v.z);
        }
        // Quad faces over grid cells, 1-based CCW.
        for y in 0..mesh.num_y - 1 {
            for x in 0..mesh.num_x - 1 {
                let a = mesh.grid_index(x, y) + 1;
                let b = mesh.grid_index(x + 1, y) + 1;
                let c = mesh.grid_index(x + 1, y + 1) + 1;
                let d = mesh.grid_index(x, y + 1) + 1;
                let _ = writeln!(out, "f {a} {b} {c} {d}");
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_state(path: &Path) -> Result<(ClothMesh, ClothState)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut grid: Option<(usize, usize, f64)> = None;
        let mut time_index = 0usize;
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            let bad = |msg: String| Error::parse(path, format!("line {}: {msg}", ln + 1));
            if let Some(rest) = line.strip_prefix("# grid ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(bad(format!("expected '# grid nx ny spacing', got '{line}'")));
                }
                grid = Some((
                    f[0].parse().map_err(|e| bad(format!("grid nx: {e}")))?,
                    f[1].parse().map_err(|e| bad(format!("grid ny: {e}")))?,
                    f[2].parse().map_err(|e| bad(format!("grid spacing: {e}")))?,
                ));
            } else if let Some(rest) = line.strip_prefix("# time ") {
                time_index = rest.trim().parse().map_err(|e| bad(format!("time: {e}")))?;
            } else if let Some(rest) = line.strip_prefix("# vel ") {
                velocities.push(parse_vec3(rest).map_err(|m| bad(m))?);
            } else if let Some(rest) = line.strip_prefix("v ") {
                positions.push(parse_vec3(rest).map_err(|m| bad(m))?);
            }
            // Face lines and other comments carry no state.
        }
        let (nx, ny, spacing) =
            grid.ok_or_else(|| Error::parse(path, "missing '# grid nx ny spacing' comment"))?;
        let mesh = build_grid_cloth(nx, ny, spacing)?;
        if velocities.is_empty() {
            velocities = vec![Vec3::zeros(); positions.len()];
        }
        let state = ClothState { positions, velocities, time_index };
        state.validate(&mesh).map_err(|_| {
            Error::parse(path, format!(
                "vertex data does not match the declared {nx} x {ny} grid"
            ))
        })?;
        Ok((mesh, state))
    }

    fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
        let f: Vec<&str> = s.split_whitespace().collect();
        if f.len() != 3 {
            return Err(format!("expected 3 components, got {}", f.len()));
        }
        let mut v = [0.0f64; 3];
        for (i, t) in f.iter().enumerate() {
            v[i] = t.parse().map_err(|e| format!("component {i}: {e}"))?;
        }
        Ok(Vec3::new(v[0], v[1], v[2]))
    }
}

/// Point clouds as ASCII PLY with double-precision properties.
pub mod ply {
    use super::*;
    use std::fmt::Write as _;

    pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
        let mut out = String::new();
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "element vertex {}", cloud.points.len());
        out.push_str(
            "property double x\nproperty double y\nproperty double z\nend_header\n",
        );
        for p in &cloud.points {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_cloud(path: &Path) -> Result<PointCloud> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("ply") {
            return Err(Error::parse(path, "missing 'ply' magic"));
        }
        let mut count: Option<usize> = None;
        for line in lines.by_ref() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("element vertex ") {
                count = Some(
                    rest.trim()
                        .parse()
                        .map_err(|e| Error::parse(path, format!("vertex count: {e}")))?,
                );
            } else if line == "end_header" {
                break;
            }
        }
        let count =
            count.ok_or_else(|| Error::parse(path, "missing 'element vertex' line"))?;
        let mut points = Vec::with_capacity(count);
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 3 {
                return Err(Error::parse(path, format!("short vertex line '{line}'")));
            }
            let mut v = [0.0f64; 3];
            for i in 0..3 {
                v[i] = f[i]
                    .parse()
                    .map_err(|e| Error::parse(path, format!("vertex component: {e}")))?;
            }
            points.push(Vec3::new(v[0], v[1], v[2]));
        }
        if points.len() != count {
            return Err(Error::parse(path, format!(
                "header declared {count} vertices, file has {}",
                points.len()
            )));
        }
        Ok(PointCloud { points })
    }
}

/// Raw little-endian binary arrays with a JSON sidecar describing dtype
/// and shape. `write_*("x")` produces `x.bin` and `x.json`.
pub mod tensor {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    struct Sidecar {
        dtype: String,
        shape: Vec<usize>,
    }

    fn paths(base: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        (base.with_extension("bin"), base.with_extension("json"))
    }

    fn write_sidecar(base: &Path, dtype: &str, shape: &[usize], len: usize) -> Result<()> {
        let expected: usize = shape.iter().product();
        if expected != len {
            return Err(Error::InvalidParam(format!(
                "tensor shape {shape:?} holds {expected} elements, data has {len}"
            )));
        }
        let (_, json_path) = paths(base);
        let sidecar = Sidecar { dtype: dtype.to_string(), shape: shape.to_vec() };
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::parse(&json_path, e.to_string()))?;
        std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
    }

    fn read_sidecar(base: &Path, want_dtype: &str) -> Result<Vec<usize>> {
        let (_, json_path) = paths(base);
        let text =
            std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let sidecar: Sidecar =
            serde_json::from_str(&text).map_err(|e| Error::parse(&json_path, e.to_string()))?;
        if sidecar.dtype != want_dtype {
            return Err(Error::parse(&json_path, format!(
                "expected dtype {want_dtype}, found {}",
                sidecar.dtype
            )));
        }
        Ok(sidecar.shape)
    }

    pub fn write_f64(base: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
        write_sidecar(base, "f64", shape, data.len())?;
        let (bin_path, _) = paths(base);
        let mut bytes = Vec::with_capacity(data.len() * 8);
        for x in data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))
    }

    pub fn read_f64(base: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
        let shape = read_sidecar(base, "f64")?;
        let (bin_path, _) = paths(base);
        let bytes = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::parse(&bin_path, "f64 payload not a multiple of 8 bytes"));
        }
        let data: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        check_shape(&bin_path, &shape, data.len())?;
        Ok((shape, data))
    }

    pub fn write_f32(base: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
        write_sidecar(base, "f32", shape, data.len())?;
        let (bin_path, _) = paths(base);
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for x in data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))
    }

    pub fn read_f32(base: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
        let shape = read_sidecar(base, "f32")?;
        let (bin_path, _) = paths(base);
        let bytes = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::parse(&bin_path, "f32 payload not a multiple of 4 bytes"));
        }
        let data: Vec<f32> =
            bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        check_shape(&bin_path, &shape, data.len())?;
        Ok((shape, data))
    }

    fn check_shape(path: &Path, shape: &[usize], len: usize) -> Result<()> {
        let expected: usize = shape.iter().product();
        if expected != len {
            return Err(Error::parse(path, format!(
                "sidecar shape {shape:?} wants {expected} elements, payload has {len}"
            )));
        }
        Ok(())
    }

    /// Depth image as an `[height, width]` f32 tensor.
    pub fn write_depth(base: &Path, image: &DepthImage) -> Result<()> {
        write_f32(base, &[image.height, image.width], &image.data)
    }

    pub fn read_depth(base: &Path) -> Result<DepthImage> {
        let (shape, data) = read_f32(base)?;
        if shape.len() != 2 {
            let (_, json_path) = paths(base);
            return Err(Error::parse(&json_path, format!(
                "depth image wants a rank-2 shape, found {shape:?}"
            )));
        }
        Ok(DepthImage { height: shape[0], width: shape[1], data })
    }
}

/// The flat `key = value` config format: one assignment per line, `#`
/// comments, later assignments overriding earlier ones. Keys use dotted
/// prefixes (`scenario.`, `tracker.`, `tto1.`, `sim.`, …) that
/// [`crate::config`] maps onto the config structs.
pub mod kv {
    use super::*;
    use std::collections::BTreeMap;

    pub fn parse(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
        let mut map = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("line {}: expected 'key = value', got '{line}'", ln + 1));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(format!("line {}: empty key", ln + 1));
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(map)
    }

    pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse(&text).map_err(|m| Error::parse(path, m))
    }
}
