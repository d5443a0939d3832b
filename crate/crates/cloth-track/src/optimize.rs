//! Test-time optimization: fit a per-vertex displacement field so the
//! observed point cloud lands on the displaced mesh, regularized by a
//! rigidity term over the constraint graph.
//!
//! The objective is
//!
//! ```text
//! F(delta) = alpha * mean_p min_v |p - (x_v + delta_v)|^2     (v visible)
//!          + beta  * mean_(i,j) |delta_i - delta_j|^2          (mesh edges)
//! ```
//!
//! minimized with Adam using analytic gradients. The field covers every
//! vertex; the data term only touches visible vertices, so occluded ones are
//! dragged along by the rigidity term and follow their visible neighbors.
//! Nearest-neighbor correspondences are refreshed on a fixed schedule, and
//! the best iterate seen is returned, so a divergent tail cannot spoil the
//! result.

use crate::error::{Error, Result};
use crate::mesh::ClothState;
use crate::sensing::PointCloud;
use crate::spatial::KdTree;
use crate::Vec3;
use serde::{Deserialize, Serialize};

/// Per-vertex 3-D corrections (one delta per mesh vertex, meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionField {
    pub deltas: Vec<Vec3>,
}

impl CorrectionField {
    pub fn zeros(num_vertices: usize) -> Self {
        CorrectionField { deltas: vec![Vec3::zeros(); num_vertices] }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.deltas.iter().all(|d| d.iter().all(|c| c.is_finite()))
    }

    pub fn validate(&self, num_vertices: usize) -> Result<()> {
        if self.deltas.len() != num_vertices {
            return Err(Error::DimensionMismatch {
                context: "correction field vs vertices",
                expected: num_vertices,
                got: self.deltas.len(),
            });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("correction field"));
        }
        Ok(())
    }
}

/// Optimizer settings. Defaults are the working values used throughout:
/// data weight 1, rigidity weight 10, 200 Adam steps at 2e-3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtoConfig {
    /// Weight of the observation (Chamfer) term.
    pub alpha: f64,
    /// Weight of the rigidity term.
    pub beta: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    /// Adam denominator floor.
    pub epsilon: f64,
    /// Nearest-neighbor correspondences are recomputed every this many
    /// iterations (1 = every iteration).
    pub correspondence_refresh: usize,
}

impl Default for TtoConfig {
    fn default() -> Self {
        TtoConfig {
            alpha: 1.0,
            beta: 10.0,
            iterations: 200,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            correspondence_refresh: 1,
        }
    }
}

impl TtoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidParam(format!(
                "tto weights must be non-negative, got alpha {} beta {}",
                self.alpha, self.beta
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidParam("tto iterations must be at least 1".to_string()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParam(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.correspondence_refresh < 1 {
            return Err(Error::InvalidParam(
                "correspondence_refresh must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Mean over edges of the squared difference of endpoint deltas
/// (dimensionless once normalized; here m² like the data term).
pub fn rigidity_loss(field: &CorrectionField, edges: &[(usize, usize)]) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::EmptyInput("rigidity edge list"));
    }
    let n = field.len();
    let mut sum = 0.0;
    for &(i, j) in edges {
        if i >= n || j >= n {
            return Err(Error::InvalidParam(format!(
                "rigidity edge ({i}, {j}) out of range ({n} vertices)"
            )));
        }
        sum += (field.deltas[i] - field.deltas[j]).norm_squared();
    }
    Ok(sum / edges.len() as f64)
}

/// For each observation point, the index *into `visible_set`* of the
/// nearest displaced visible vertex.
fn correspondences(displaced: &[Vec3], observation: &[Vec3]) -> Vec<usize> {
    let tree = KdTree::build(displaced);
    observation
        .iter()
        .map(|p| tree.nearest(p).expect("visible set checked non-empty").0)
        .collect()
}

/// Loss and dense gradient with the given fixed correspondences.
fn loss_and_grad_fixed(
    positions: &[Vec3],
    field: &CorrectionField,
    observation: &[Vec3],
    visible_set: &[usize],
    corr: &[usize],
    edges: &[(usize, usize)],
    alpha: f64,
    beta: f64,
) -> (f64, Vec<Vec3>) {
    let n = positions.len();
    let mut grad = vec![Vec3::zeros(); n];
    let mut loss = 0.0;

    if alpha != 0.0 {
        let inv_m = 1.0 / observation.len() as f64;
        let mut data = 0.0;
        for (p, &c) in observation.iter().zip(corr) {
            let v = visible_set[c];
            let y = positions[v] + field.deltas[v];
            let diff = y - p;
            data += diff.norm_squared();
            grad[v] += diff * (2.0 * alpha * inv_m);
        }
        loss += alpha * data * inv_m;
    }

    if beta != 0.0 && !edges.is_empty() {
        let inv_e = 1.0 / edges.len() as f64;
        let mut rig = 0.0;
        for &(i, j) in edges {
            let d = field.deltas[i] - field.deltas[j];
            rig += d.norm_squared();
            let g = d * (2.0 * beta * inv_e);
            grad[i] += g;
            grad[j] -= g;
        }
        loss += beta * rig * inv_e;
    }

    (loss, grad)
}

/// Objective value and analytic gradient of the TTO loss at `field`.
///
/// Correspondences (each observation point to its nearest displaced
/// visible vertex) are computed once and treated as fixed, which is what
/// makes the gradient exact for the evaluated objective.
pub fn tto_objective(
    state_pred: &ClothState,
    field: &CorrectionField,
    observation: &PointCloud,
    visible_set: &[usize],
    edges: &[(usize, usize)],
    alpha: f64,
    beta: f64,
) -> Result<(f64, Vec<Vec3>)> {
    let n = state_pred.num_vertices();
    field.validate(n)?;
    if visible_set.is_empty() {
        return Err(Error::LostCloth);
    }
    if observation.is_empty() {
        return Err(Error::EmptyInput("tto observation"));
    }
    for &v in visible_set {
        if v >= n {
            return Err(Error::InvalidParam(format!(
                "visible index {v} out of range ({n} vertices)"
            )));
        }
    }
    if beta != 0.0 && edges.is_empty() {
        return Err(Error::EmptyInput("rigidity edge list"));
    }

    let displaced: Vec<Vec3> =
        visible_set.iter().map(|&v| state_pred.positions[v] + field.deltas[v]).collect();
    let corr = correspondences(&displaced, &observation.points);
    Ok(loss_and_grad_fixed(
        &state_pred.positions,
        field,
        &observation.points,
        visible_set,
        &corr,
        edges,
        alpha,
        beta,
    ))
}

/// Outcome of a TTO run: the best field found plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TtoResult {
    pub field: CorrectionField,
    /// Loss of the zero field (iteration 0).
    pub initial_loss: f64,
    /// Lowest loss recorded; the returned field attains it.
    pub best_loss: f64,
    /// Running best loss per evaluation, non-increasing.
    pub best_loss_history: Vec<f64>,
    /// True if a non-finite loss interrupted the run; the best earlier
    /// iterate is returned in that case.
    pub warning: bool,
}

/// Minimizes the TTO objective from a zero field with Adam.
///
/// The field spans all vertices; only visible vertices feel the data term.
/// Correspondences refresh every `config.correspondence_refresh`
/// iterations. The best iterate (not the last) is returned, and a
/// non-finite loss aborts the run with `warning` set instead of
/// propagating NaNs.
pub fn run_tto(
    state_pred: &ClothState,
    observation: &PointCloud,
    visible_set: &[usize],
    edges: &[(usize, usize)],
    config: &TtoConfig,
) -> Result<TtoResult> {
    config.validate()?;
    let n = state_pred.num_vertices();
    if visible_set.is_empty() {
        return Err(Error::LostCloth);
    }
    if observation.is_empty() {
        return Err(Error::EmptyInput("tto observation"));
    }
    if config.beta != 0.0 && edges.is_empty() {
        return Err(Error::EmptyInput("rigidity edge list"));
    }
    for &v in visible_set {
        if v >= n {
            return Err(Error::InvalidParam(format!(
                "visible index {v} out of range ({n} vertices)"
            )));
        }
    }

    let mut field = CorrectionField::zeros(n);
    let mut m = vec![Vec3::zeros(); n];
    let mut v = vec![Vec3::zeros(); n];
    let mut corr: Vec<usize> = Vec::new();

    let mut best_field = field.clone();
    let mut best_loss = f64::INFINITY;
    let mut initial_loss = f64::NAN;
    let mut history = Vec::with_capacity(config.iterations + 1);
    let mut warning = false;

    for iter in 0..=config.iterations {
        let displaced: Vec<Vec3> =
            visible_set.iter().map(|&i| state_pred.positions[i] + field.deltas[i]).collect();
        if iter % config.correspondence_refresh == 0 || corr.is_empty() {
            corr = correspondences(&displaced, &observation.points);
        }
        let (loss, grad) = loss_and_grad_fixed(
            &state_pred.positions,
            &field,
            &observation.points,
            visible_set,
            &corr,
            edges,
            config.alpha,
            config.beta,
        );
        if !loss.is_finite() {
            warning = true;
            break;
        }
        if iter == 0 {
            initial_loss = loss;
        }
        if loss < best_loss {
            best_loss = loss;
            best_field = field.clone();
        }
        history.push(best_loss);
        if iter == config.iterations {
            break;
        }

        // Adam step with bias correction.
        let t = (iter + 1) as i32;
        let bc1 = 1.0 - config.beta1.powi(t);
        let bc2 = 1.0 - config.beta2.powi(t);
        for i in 0..n {
            m[i] = m[i] * config.beta1 + grad[i] * (1.0 - config.beta1);
            v[i] = v[i] * config.beta2 + grad[i].component_mul(&grad[i]) * (1.0 - config.beta2);
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            for k in 0..3 {
                field.deltas[i][k] -= config.learning_rate * m_hat[k] / (v_hat[k].sqrt() + config.epsilon);
            }
        }
        if !field.is_finite() {
            warning = true;
            break;
        }
    }

    if !initial_loss.is_finite() && !warning {
        return Err(Error::NonFinite("tto initial loss"));
    }
    Ok(TtoResult { field: best_field, initial_loss, best_loss, best_loss_history: history, warning })
}
