//! Action representations: high-level pick-and-place commands, the
//! low-level per-substep picker motions they decompose into, and full
//! manipulation trajectories.

use crate::error::{Error, Result};
use crate::mesh::ClothState;
use crate::sensing::PointCloud;
use crate::Vec3;
use serde::{Deserialize, Serialize};

/// One substep of picker motion (the per-transition action `a_t`). While a
/// vertex is picked it is kinematically driven by `picker_delta` and exempt
/// from constraint projection and collision; with no grasp the cloth settles
/// freely and the delta must be zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowLevelAction {
    /// Vertex the picker holds, if any.
    pub picked_vertex: Option<usize>,
    /// Displacement applied to the picked vertex over this substep, meters.
    pub picker_delta: Vec3,
}

impl LowLevelAction {
    /// A settling step: nothing picked, nothing moved.
    pub fn release() -> Self {
        LowLevelAction { picked_vertex: None, picker_delta: Vec3::zeros() }
    }

    /// Drives `vertex` by `delta` this substep.
    pub fn pick(vertex: usize, delta: Vec3) -> Self {
        LowLevelAction { picked_vertex: Some(vertex), picker_delta: delta }
    }

    pub fn grasp_active(&self) -> bool {
        self.picked_vertex.is_some()
    }

    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        match self.picked_vertex {
            Some(v) if v >= num_vertices => {
                return Err(Error::InvalidParam(format!(
                    "picked vertex {v} out of range ({num_vertices} vertices)"
                )));
            }
            None if self.picker_delta != Vec3::zeros() => {
                return Err(Error::InvalidParam(
                    "picker_delta must be zero when no vertex is picked".to_string(),
                ));
            }
            _ => {}
        }
        if !self.picker_delta.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("picker delta"));
        }
        Ok(())
    }
}

/// A pick-and-place command in world coordinates: grasp the cloth nearest
/// `pick_point`, lift, carry to `place_point`, lower, release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickPlaceAction {
    pub pick_point: Vec3,
    pub place_point: Vec3,
    /// Peak height of the carry arc above the pick/place line, meters.
    pub lift_height: f64,
    /// Number of low-level substeps the command decomposes into.
    pub num_substeps: usize,
}

impl PickPlaceAction {
    pub fn new(pick_point: Vec3, place_point: Vec3) -> Self {
        PickPlaceAction { pick_point, place_point, lift_height: 0.08, num_substeps: 40 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_substeps < 1 {
            return Err(Error::InvalidParam("num_substeps must be at least 1".to_string()));
        }
        if !(self.lift_height > 0.0) || !self.lift_height.is_finite() {
            return Err(Error::InvalidParam(format!(
                "lift_height must be positive, got {}",
                self.lift_height
            )));
        }
        let finite = self
            .pick_point
            .iter()
            .chain(self.place_point.iter())
            .all(|c| c.is_finite());
        if !finite {
            return Err(Error::NonFinite("pick/place points"));
        }
        Ok(())
    }
}

/// One tracked segment: the aligned low-level actions and the observation
/// captured after each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub actions: Vec<LowLevelAction>,
    /// `observations[t]` is captured after executing `actions[t]`.
    pub observations: Vec<PointCloud>,
}

impl Segment {
    pub fn num_substeps(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        if self.actions.len() != self.observations.len() {
            return Err(Error::DimensionMismatch {
                context: "segment actions vs observations",
                expected: self.actions.len(),
                got: self.observations.len(),
            });
        }
        for a in &self.actions {
            a.validate(num_vertices)?;
        }
        Ok(())
    }
}

/// A full manipulation trajectory: the initial mesh state plus one segment
/// per pick-and-place action. Ground-truth state sequences (one state per
/// substep, per segment) are present only for synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial_state: ClothState,
    pub segments: Vec<Segment>,
    pub ground_truth_states: Option<Vec<Vec<ClothState>>>,
}

impl Trajectory {
    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.initial_state.num_vertices();
        for seg in &self.segments {
            seg.validate(n)?;
        }
        if let Some(gt) = &self.ground_truth_states {
            if gt.len() != self.segments.len() {
                return Err(Error::DimensionMismatch {
                    context: "ground-truth sequences vs segments",
                    expected: self.segments.len(),
                    got: gt.len(),
                });
            }
            for (states, seg) in gt.iter().zip(&self.segments) {
                if states.len() != seg.actions.len() {
                    return Err(Error::DimensionMismatch {
                        context: "ground-truth states vs substeps",
                        expected: seg.actions.len(),
                        got: states.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Decomposes a pick-and-place into `num_substeps` low-level actions in
/// four phases: lift straight up, carry toward the place point, lower, and
/// settle (released). The picked vertex is chosen by the caller — nearest
/// to `pick_point` at execution time — and held through the first three
/// phases.
///
/// Phase lengths are `T/4` each with the remainder given to the carry, so
/// any `T ≥ 1` works (a single substep becomes a direct carry). Over the
/// grasped phases the deltas sum to exactly `place_point - pick_point`.
pub fn decompose_pick_place(
    action: &PickPlaceAction,
    grasp_vertex: usize,
) -> Result<Vec<LowLevelAction>> {
    action.validate()?;
    let total = action.num_substeps;
    let quarter = total / 4;
    let (n_lift, n_lower, n_settle) = (quarter, quarter, quarter);
    let n_carry = total - 3 * quarter;

    let mut out = Vec::with_capacity(total);
    if n_lift > 0 {
        let up = Vec3::new(0.0, 0.0, action.lift_height / n_lift as f64);
        for _ in 0..n_lift {
            out.push(LowLevelAction::pick(grasp_vertex, up));
        }
    }
    let carry = (action.place_point - action.pick_point) / n_carry as f64;
    for _ in 0..n_carry {
        out.push(LowLevelAction::pick(grasp_vertex, carry));
    }
    if n_lower > 0 {
        let down = Vec3::new(0.0, 0.0, -action.lift_height / n_lower as f64);
        for _ in 0..n_lower {
            out.push(LowLevelAction::pick(grasp_vertex, down));
        }
    }
    for _ in 0..n_settle {
        out.push(LowLevelAction::release());
    }
    Ok(out)
}
