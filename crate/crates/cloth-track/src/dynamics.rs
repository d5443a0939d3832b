//! Position-based cloth dynamics with a kinematic picker constraint.
//!
//! Each step predicts particle positions with semi-implicit Euler, then runs
//! a fixed number of Gauss-Seidel rounds that project distance constraints,
//! separate overlapping particles, and resolve ground contact with
//! Coulomb-style friction. A picked vertex is driven kinematically and is an
//! infinite-mass anchor to every constraint that touches it. A pseudo-action
//! replaces the free-motion prediction for a chosen subset of vertices,
//! letting the tracker inject observation-derived displacement targets while
//! keeping the solve physical.

use crate::action::LowLevelAction;
use crate::error::{Error, Result};
use crate::mesh::{ClothMesh, ClothState};
use crate::spatial::HashGrid;
use crate::Vec3;
use serde::{Deserialize, Serialize};

/// Simulation parameters. Stiffness and the two friction coefficients are
/// the calibrated quantities; the rest are integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Cloth stiffness in [0, 2]; mapped to a PBD correction factor.
    pub stiffness: f64,
    /// Cloth–ground friction coefficient.
    pub dynamic_friction: f64,
    /// Cloth–cloth friction coefficient.
    pub particle_friction: f64,
    /// Gravitational acceleration, m/s², acting along -z.
    pub gravity: f64,
    /// Substep duration, seconds.
    pub dt: f64,
    /// Gauss-Seidel rounds per step.
    pub solver_iterations: usize,
    /// Particle radius for self-collision, meters.
    pub particle_radius: f64,
    /// Velocity damping in [0, 1]; 0 is undamped.
    pub damping: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            stiffness: 0.9,
            dynamic_friction: 0.54,
            particle_friction: 0.54,
            gravity: 9.81,
            dt: 0.01,
            solver_iterations: 8,
            particle_radius: 0.005,
            damping: 0.02,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParam(format!("dt must be positive, got {}", self.dt)));
        }
        if self.solver_iterations < 1 {
            return Err(Error::InvalidParam("solver_iterations must be at least 1".to_string()));
        }
        if !(self.particle_radius > 0.0) {
            return Err(Error::InvalidParam(format!(
                "particle_radius must be positive, got {}",
                self.particle_radius
            )));
        }
        if self.dynamic_friction < 0.0 || self.particle_friction < 0.0 {
            return Err(Error::InvalidParam(
                "friction coefficients must be non-negative".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return Err(Error::InvalidParam(format!(
                "damping must lie in [0, 1], got {}",
                self.damping
            )));
        }
        let fields = [
            self.stiffness,
            self.dynamic_friction,
            self.particle_friction,
            self.gravity,
            self.dt,
            self.particle_radius,
            self.damping,
        ];
        if !fields.iter().all(|f| f.is_finite()) {
            return Err(Error::NonFinite("simulation parameters"));
        }
        Ok(())
    }

    /// PBD correction factor: stiffness mapped linearly onto [0, 1] by
    /// normalizing against the calibration range [0.2, 1.6].
    pub fn stiffness_factor(&self) -> f64 {
        ((self.stiffness - 0.2) / 1.4).clamp(0.0, 1.0)
    }
}

/// Per-vertex displacement targets for a subset of vertices. `deltas` has
/// one entry per mesh vertex; only the vertices listed in `subset` are
/// affected. For those, the prediction becomes `position + delta`,
/// replacing free-motion integration (the delta already encodes where the
/// dynamics and the observation want the vertex to go).
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoAction {
    pub deltas: Vec<Vec3>,
    pub subset: Vec<usize>,
}

impl PseudoAction {
    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        if self.deltas.len() != num_vertices {
            return Err(Error::DimensionMismatch {
                context: "pseudo-action deltas vs vertices",
                expected: num_vertices,
                got: self.deltas.len(),
            });
        }
        for &i in &self.subset {
            if i >= num_vertices {
                return Err(Error::InvalidParam(format!(
                    "pseudo-action subset index {i} out of range ({num_vertices} vertices)"
                )));
            }
        }
        if !self.deltas.iter().all(|d| d.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("pseudo-action deltas"));
        }
        Ok(())
    }
}

/// Advances the cloth by one substep.
///
/// Order of operations: kinematic grasp and pseudo-action overrides, then
/// semi-implicit Euler prediction for everything else, then
/// `solver_iterations` Gauss-Seidel rounds of distance projection, particle
/// separation, and ground contact, then a damped velocity update from the
/// position change. The picked vertex has zero inverse mass throughout and
/// lands exactly at its commanded position.
pub fn dyn_step(
    mesh: &ClothMesh,
    state: &ClothState,
    params: &SimParams,
    action: &LowLevelAction,
    pseudo_action: Option<&PseudoAction>,
) -> Result<ClothState> {
    let n = mesh.num_vertices();
    state.validate(mesh)?;
    params.validate()?;
    action.validate(n)?;
    if let Some(pa) = pseudo_action {
        pa.validate(n)?;
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("input state"));
    }

    let dt = params.dt;
    let k = params.stiffness_factor();
    let radius = params.particle_radius;

    // Inverse masses: the picked vertex is an immovable anchor.
    let mut inv_mass = vec![1.0_f64; n];
    if let Some(v) = action.picked_vertex {
        inv_mass[v] = 0.0;
    }

    // Predict positions.
    let mut pos: Vec<Vec3> = Vec::with_capacity(n);
    for i in 0..n {
        let x = state.positions[i];
        let v = state.velocities[i] + Vec3::new(0.0, 0.0, -params.gravity * dt);
        pos.push(x + v * dt);
    }
    if let Some(pa) = pseudo_action {
        for &i in &pa.subset {
            pos[i] = state.positions[i] + pa.deltas[i];
        }
    }
    if let Some(v) = action.picked_vertex {
        pos[v] = state.positions[v] + action.picker_delta;
    }

    // Broad phase once per step on predicted positions, padded so pairs that
    // drift into contact during the solve are still found.
    let pairs = HashGrid::build(&pos, 2.0 * radius).pairs_within(&pos, 2.0 * radius);

    for _ in 0..params.solver_iterations {
        // Distance constraints, fixed edge order.
        for (e, &(a, b)) in mesh.edges.iter().enumerate() {
            let (wa, wb) = (inv_mass[a], inv_mass[b]);
            let w_sum = wa + wb;
            if w_sum == 0.0 {
                continue;
            }
            let diff = pos[a] - pos[b];
            let dist = diff.norm();
            if dist < 1e-12 {
                continue;
            }
            let corr = diff * (k * (dist - mesh.rest_lengths[e]) / (dist * w_sum));
            pos[a] -= corr * wa;
            pos[b] += corr * wb;
        }

        // Particle separation with inter-particle friction.
        for &(a, b) in &pairs {
            let (wa, wb) = (inv_mass[a], inv_mass[b]);
            let w_sum = wa + wb;
            if w_sum == 0.0 {
                continue;
            }
            let diff = pos[a] - pos[b];
            let dist = diff.norm();
            if dist >= radius || dist < 1e-12 {
                continue;
            }
            let normal = diff / dist;
            let push = normal * ((radius - dist) / w_sum);
            pos[a] += push * wa;
            pos[b] -= push * wb;

            // Friction: cancel relative tangential motion accumulated this
            // step, capped Coulomb-style by the overlap depth.
            let rel = (pos[a] - state.positions[a]) - (pos[b] - state.positions[b]);
            let tangent = rel - normal * rel.dot(&normal);
            let t_norm = tangent.norm();
            if t_norm > 1e-12 {
                let scale = (params.particle_friction * (radius - dist) / t_norm).min(1.0);
                pos[a] -= tangent * (scale * wa / w_sum);
                pos[b] += tangent * (scale * wb / w_sum);
            }
        }

        // Ground plane at z = 0, kept last so nothing re-penetrates.
        for i in 0..n {
            if inv_mass[i] == 0.0 || pos[i].z >= 0.0 {
                continue;
            }
            let depth = -pos[i].z;
            pos[i].z = 0.0;
            let step_xy = Vec3::new(
                pos[i].x - state.positions[i].x,
                pos[i].y - state.positions[i].y,
                0.0,
            );
            let t_norm = step_xy.norm();
            if t_norm > 1e-12 {
                let scale = (params.dynamic_friction * depth / t_norm).min(1.0);
                pos[i] -= step_xy * scale;
            }
        }
    }

    // Velocity update from position change; the picked vertex keeps its
    // commanded velocity undamped.
    let mut velocities = Vec::with_capacity(n);
    for i in 0..n {
        velocities.push((pos[i] - state.positions[i]) * ((1.0 - params.damping) / dt));
    }
    if let Some(v) = action.picked_vertex {
        velocities[v] = action.picker_delta / dt;
    }

    let next = ClothState { positions: pos, velocities, time_index: state.time_index + 1 };
    if !next.is_finite() {
        return Err(Error::NonFinite("dynamics output"));
    }
    Ok(next)
}

/// Rolls the dynamics over an action sequence, returning one state per
/// action (the t-th state is the result of the first t+1 actions).
pub fn simulate_segment(
    mesh: &ClothMesh,
    state: &ClothState,
    params: &SimParams,
    actions: &[LowLevelAction],
) -> Result<Vec<ClothState>> {
    if actions.is_empty() {
        return Err(Error::EmptyInput("action sequence"));
    }
    let mut out = Vec::with_capacity(actions.len());
    let mut current = state.clone();
    for action in actions {
        current = dyn_step(mesh, &current, params, action, None)?;
        out.push(current.clone());
    }
    Ok(out)
}

/// True iff the transition from `prev` to `next` moved any vertex faster
/// than `threshold` (m/s), or produced a non-finite coordinate.
pub fn explosion_check(prev: &ClothState, next: &ClothState, dt: f64, threshold: f64) -> bool {
    if prev.positions.len() != next.positions.len() {
        return true;
    }
    if !next.is_finite() {
        return true;
    }
    let limit = threshold * dt;
    prev.positions
        .iter()
        .zip(&next.positions)
        .any(|(p, q)| (q - p).norm() > limit)
}
