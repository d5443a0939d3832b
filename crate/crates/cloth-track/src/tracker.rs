//! The tracking loop: per-segment parameter calibration, per-substep
//! dynamics prediction corrected by test-time optimization, pseudo-action
//! re-simulation with an explosion-guarded line search, and a final
//! mesh-deforming optimization pass.
//!
//! One tracked segment covers one pick-and-place action decomposed into T
//! substeps with one partial observation per substep. For each substep the
//! tracker (1) predicts the next state with the dynamics model, (2) runs
//! TTO against the observation to get a per-vertex correction, (3) forms a
//! pseudo-action (dynamics displacement plus correction, on visible
//! vertices only) and re-simulates the substep with it, shrinking the
//! correction geometrically if the simulation explodes. After the last
//! substep a second TTO pass deforms the mesh directly.

use crate::action::LowLevelAction;
use crate::dataset::{PseudoLabelDataset, PseudoRecord, Provenance, RecordDiagnostics};
use crate::dynamics::{dyn_step, explosion_check, simulate_segment, PseudoAction, SimParams};
use crate::error::{Error, Result};
use crate::mesh::{ClothMesh, ClothState};
use crate::optimize::{run_tto, TtoConfig};
use crate::sensing::{chamfer_one_way, render_point_cloud, visible_vertices, CameraModel, PointCloud};
use crate::spatial::HashGrid;
use crate::action::Trajectory;
use crate::Vec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Parameter grid searched during calibration. Defaults follow the
/// published ranges: 5 stiffness values crossed with 6 values for each
/// friction coefficient (180 combinations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub stiffness: Vec<f64>,
    pub dynamic_friction: Vec<f64>,
    pub particle_friction: Vec<f64>,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        CalibrationGrid {
            stiffness: vec![0.2, 0.55, 0.9, 1.25, 1.6],
            dynamic_friction: vec![0.1, 0.32, 0.54, 0.76, 0.98, 1.2],
            particle_friction: vec![0.1, 0.32, 0.54, 0.76, 0.98, 1.2],
        }
    }
}

impl CalibrationGrid {
    /// The trimmed 5 × 5 × 5 grid (125 combinations): same ranges, five
    /// evenly spaced friction values instead of six.
    pub fn grid_125() -> Self {
        CalibrationGrid {
            stiffness: vec![0.2, 0.55, 0.9, 1.25, 1.6],
            dynamic_friction: vec![0.1, 0.375, 0.65, 0.925, 1.2],
            particle_friction: vec![0.1, 0.375, 0.65, 0.925, 1.2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stiffness.is_empty()
            || self.dynamic_friction.is_empty()
            || self.particle_friction.is_empty()
        {
            return Err(Error::EmptyInput("calibration grid axis"));
        }
        for &s in &self.stiffness {
            if !(0.0..=2.0).contains(&s) {
                return Err(Error::InvalidParam(format!("grid stiffness {s} outside [0, 2]")));
            }
        }
        for &f in self.dynamic_friction.iter().chain(&self.particle_friction) {
            if f < 0.0 || !f.is_finite() {
                return Err(Error::InvalidParam(format!("grid friction {f} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stiffness.len() * self.dynamic_friction.len() * self.particle_friction.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All parameter combinations in grid order (stiffness-major, then
    /// dynamic friction, then particle friction), sharing `base`'s
    /// integrator settings.
    pub fn combos(&self, base: &SimParams) -> Vec<SimParams> {
        let mut out = Vec::with_capacity(self.len());
        for &s in &self.stiffness {
            for &df in &self.dynamic_friction {
                for &pf in &self.particle_friction {
                    out.push(SimParams {
                        stiffness: s,
                        dynamic_friction: df,
                        particle_friction: pf,
                        ..*base
                    });
                }
            }
        }
        out
    }

    /// The middle grid point (fallback when every combination explodes).
    pub fn midpoint(&self, base: &SimParams) -> SimParams {
        SimParams {
            stiffness: self.stiffness[self.stiffness.len() / 2],
            dynamic_friction: self.dynamic_friction[self.dynamic_friction.len() / 2],
            particle_friction: self.particle_friction[self.particle_friction.len() / 2],
            ..*base
        }
    }
}

/// Which calibration regime [`generate_pseudo_dataset`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationMode {
    /// Calibrate on each segment right before tracking it.
    Online,
    /// Calibrate every segment, take the most frequent winner, re-track
    /// everything with that single parameter set.
    Offline,
}

/// Ablation variants of the tracker (at most one active).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Ablation {
    #[default]
    None,
    /// Pure dynamics rollout: no TTO1, no pseudo-action re-simulation.
    NoPseudoAction,
    /// TTO1 starts from the current state instead of the dynamics
    /// prediction.
    NoDynInit,
    /// The picker action is omitted everywhere; only pseudo-actions move
    /// the cloth.
    NoActCond,
    /// The final mesh-deforming optimization is skipped.
    NoTto2,
}

/// Tracker settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Geometric decay applied to the correction on each line-search retry.
    pub gamma: f64,
    /// Correction attempts before falling back to a zero pseudo-action.
    pub max_line_search_retries: usize,
    /// Explosion threshold for the line search, m/s.
    pub explosion_threshold: f64,
    /// Per-substep optimization settings (TTO1).
    pub tto1: TtoConfig,
    /// Final mesh-deforming optimization settings (TTO2).
    pub tto2: TtoConfig,
    pub calibration: CalibrationMode,
    pub ablation: Ablation,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            gamma: 0.7,
            max_line_search_retries: 10,
            explosion_threshold: 2.5,
            tto1: TtoConfig::default(),
            tto2: TtoConfig::default(),
            calibration: CalibrationMode::Online,
            ablation: Ablation::None,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParam(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.max_line_search_retries < 1 {
            return Err(Error::InvalidParam("max_line_search_retries must be >= 1".to_string()));
        }
        if !(self.explosion_threshold > 0.0) {
            return Err(Error::InvalidParam(format!(
                "explosion_threshold must be positive, got {}",
                self.explosion_threshold
            )));
        }
        self.tto1.validate()?;
        self.tto2.validate()
    }
}

/// Everything a tracked segment produces.
#[derive(Debug, Clone)]
pub struct TrackResult {
    /// Per-substep pseudo states (after line-search re-simulation); the
    /// last entry is the pre-TTO2 state.
    pub states: Vec<ClothState>,
    /// Final segment state, deformed by TTO2 unless ablated.
    pub final_state: ClothState,
    /// Visible-Chamfer (observation to visible vertices, m²) after each
    /// substep; NaN where the observation was empty.
    pub per_step_chamfer: Vec<f64>,
    /// Line-search rejections per substep.
    pub retries: Vec<usize>,
    /// Final correction scale per substep (γ^k, or 0 after the fallback).
    pub scales: Vec<f64>,
    /// Visible-Chamfer of the last substep state against the final
    /// observation (the quality metric convention).
    pub chamfer_pre_tto2: f64,
    /// Same metric after TTO2 (equals `chamfer_pre_tto2` when ablated).
    pub chamfer_final: f64,
    /// Parameters the segment was tracked with (the calibration winner).
    pub params: SimParams,
    /// Count of TTO runs that hit a non-finite loss and reverted.
    pub tto_warnings: usize,
    pub wall_time_s: f64,
}

/// Outcome of a calibration grid search.
#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    /// The winning parameters (or the grid midpoint if everything blew up).
    pub params: SimParams,
    /// Index of the winner in grid order.
    pub winner_index: usize,
    /// Objective per combination, grid order; infinite where the rollout
    /// exploded.
    pub objectives: Vec<f64>,
    /// True when every combination exploded and the midpoint was returned.
    pub all_exploded: bool,
}

/// Calibration objective for one parameter set: simulate the actions
/// plainly and measure the one-way Chamfer from the observation to the
/// visible vertices of the final state. Infinite when the rollout errors,
/// explodes (any substep faster than `explosion_threshold`), or ends with
/// no visible vertex.
pub fn calibration_objective(
    mesh: &ClothMesh,
    state: &ClothState,
    actions: &[LowLevelAction],
    final_observation: &PointCloud,
    params: &SimParams,
    camera: &CameraModel,
    explosion_threshold: f64,
) -> f64 {
    let states = match simulate_segment(mesh, state, params, actions) {
        Ok(s) => s,
        Err(_) => return f64::INFINITY,
    };
    let mut prev = state;
    for next in &states {
        if explosion_check(prev, next, params.dt, explosion_threshold) {
            return f64::INFINITY;
        }
        prev = next;
    }
    let last = states.last().expect("non-empty actions produce states");
    let visible = match visible_vertices(mesh, last, camera) {
        Ok(v) if !v.is_empty() => v,
        _ => return f64::INFINITY,
    };
    let targets: Vec<Vec3> = visible.iter().map(|&i| last.positions[i]).collect();
    chamfer_one_way(&final_observation.points, &targets).unwrap_or(f64::INFINITY)
}

/// Grid-searches simulation parameters on one segment.
///
/// Every combination is rolled out with the plain picker actions and scored
/// by [`calibration_objective`]; the argmin wins, ties broken by grid
/// order. If every combination explodes, the grid midpoint is returned with
/// `all_exploded` set.
pub fn calibrate(
    mesh: &ClothMesh,
    state: &ClothState,
    actions: &[LowLevelAction],
    final_observation: &PointCloud,
    grid: &CalibrationGrid,
    base: &SimParams,
    camera: &CameraModel,
    explosion_threshold: f64,
) -> Result<CalibrationOutcome> {
    grid.validate()?;
    if actions.is_empty() {
        return Err(Error::EmptyInput("calibration actions"));
    }
    if final_observation.is_empty() {
        return Err(Error::EmptyInput("calibration observation"));
    }
    let combos = grid.combos(base);
    let objectives: Vec<f64> = combos
        .par_iter()
        .map(|p| {
            calibration_objective(
                mesh,
                state,
                actions,
                final_observation,
                p,
                camera,
                explosion_threshold,
            )
        })
        .collect();

    let mut winner = 0usize;
    let mut best = f64::INFINITY;
    for (i, &obj) in objectives.iter().enumerate() {
        if obj < best {
            best = obj;
            winner = i;
        }
    }
    if best.is_infinite() {
        return Ok(CalibrationOutcome {
            params: grid.midpoint(base),
            winner_index: 0,
            objectives,
            all_exploded: true,
        });
    }
    Ok(CalibrationOutcome {
        params: combos[winner],
        winner_index: winner,
        objectives,
        all_exploded: false,
    })
}

/// Re-simulates one substep with a pseudo-action, shrinking the correction
/// until the step is stable.
///
/// Attempt k applies `dyn_deltas + gamma^k * corr_deltas` on `subset`; a
/// step that errors or trips [`explosion_check`] is rejected. After
/// `max_line_search_retries` rejections the pseudo-action is dropped
/// entirely (a plain dynamics step, reported as scale 0). Returns the
/// accepted state, the number of rejections, and the accepted correction
/// scale. A plain step that still explodes is a hard error.
///
/// A correction that vanishes on the subset leaves the pseudo-action equal
/// to the dynamics deltas, so the plain dynamics step is taken directly:
/// re-projecting already converged positions is not the identity (for one,
/// they no longer penetrate the ground, so contact friction would not
/// engage), and tracking noiseless self-generated observations must be a
/// fixpoint.
pub fn line_search_step(
    mesh: &ClothMesh,
    state: &ClothState,
    params: &SimParams,
    action: &LowLevelAction,
    dyn_deltas: &[Vec3],
    corr_deltas: &[Vec3],
    subset: &[usize],
    config: &TrackerConfig,
) -> Result<(ClothState, usize, f64)> {
    config.validate()?;
    let n = mesh.num_vertices();
    if dyn_deltas.len() != n || corr_deltas.len() != n {
        return Err(Error::DimensionMismatch {
            context: "pseudo-action deltas vs vertices",
            expected: n,
            got: dyn_deltas.len().min(corr_deltas.len()),
        });
    }

    let correction_vanishes = subset
        .iter()
        .all(|&i| i < n && corr_deltas[i] == Vec3::zeros());
    if correction_vanishes {
        let next = dyn_step(mesh, state, params, action, None)?;
        if explosion_check(state, &next, params.dt, config.explosion_threshold) {
            return Err(Error::Unstable { step: state.time_index });
        }
        return Ok((next, 0, 1.0));
    }

    for k in 0..config.max_line_search_retries {
        let scale = config.gamma.powi(k as i32);
        let deltas: Vec<Vec3> = dyn_deltas
            .iter()
            .zip(corr_deltas)
            .map(|(d, c)| d + c * scale)
            .collect();
        let pseudo = PseudoAction { deltas, subset: subset.to_vec() };
        match dyn_step(mesh, state, params, action, Some(&pseudo)) {
            Ok(next) => {
                if !explosion_check(state, &next, params.dt, config.explosion_threshold) {
                    return Ok((next, k, scale));
                }
            }
            Err(Error::NonFinite(_)) => {} // treated as an exploded attempt
            Err(e) => return Err(e),
        }
    }

    // All correction scales rejected: drop the pseudo-action.
    let next = dyn_step(mesh, state, params, action, None)?;
    if explosion_check(state, &next, params.dt, config.explosion_threshold) {
        return Err(Error::Unstable { step: state.time_index });
    }
    Ok((next, config.max_line_search_retries, 0.0))
}

/// One-way Chamfer from an observation to the visible vertices of a state;
/// NaN when the observation is empty, infinite when nothing is visible.
fn visible_chamfer(
    mesh: &ClothMesh,
    state: &ClothState,
    observation: &PointCloud,
    camera: &CameraModel,
) -> Result<f64> {
    if observation.is_empty() {
        return Ok(f64::NAN);
    }
    let visible = visible_vertices(mesh, state, camera)?;
    if visible.is_empty() {
        return Ok(f64::INFINITY);
    }
    let targets: Vec<Vec3> = visible.iter().map(|&i| state.positions[i]).collect();
    chamfer_one_way(&observation.points, &targets)
}

/// Tracks one segment: dynamics prediction, per-substep TTO, pseudo-action
/// re-simulation, and the final TTO pass, under the configured ablation.
pub fn track_segment(
    mesh: &ClothMesh,
    initial_state: &ClothState,
    actions: &[LowLevelAction],
    observations: &[PointCloud],
    params: &SimParams,
    config: &TrackerConfig,
    camera: &CameraModel,
) -> Result<TrackResult> {
    let start = Instant::now();
    config.validate()?;
    camera.validate()?;
    initial_state.validate(mesh)?;
    if actions.is_empty() {
        return Err(Error::EmptyInput("segment actions"));
    }
    if actions.len() != observations.len() {
        return Err(Error::DimensionMismatch {
            context: "actions vs observations",
            expected: actions.len(),
            got: observations.len(),
        });
    }

    let n = mesh.num_vertices();
    let release = LowLevelAction::release();
    let mut state = initial_state.clone();
    let mut states = Vec::with_capacity(actions.len());
    let mut per_step_chamfer = Vec::with_capacity(actions.len());
    let mut retries = Vec::with_capacity(actions.len());
    let mut scales = Vec::with_capacity(actions.len());
    let mut tto_warnings = 0usize;

    for (t, action) in actions.iter().enumerate() {
        let action_eff =
            if config.ablation == Ablation::NoActCond { &release } else { action };
        let observation = &observations[t];

        let next = if config.ablation == Ablation::NoPseudoAction || observation.is_empty() {
            // Pure rollout (also the only option when the sensor saw
            // nothing this substep).
            let next = dyn_step(mesh, &state, params, action_eff, None)?;
            if explosion_check(&state, &next, params.dt, config.explosion_threshold) {
                return Err(Error::Unstable { step: state.time_index });
            }
            retries.push(0);
            scales.push(1.0);
            next
        } else {
            // TTO base: the dynamics prediction, unless ablated to the
            // current state.
            let (base_state, dyn_deltas): (ClothState, Vec<Vec3>) =
                if config.ablation == Ablation::NoDynInit {
                    (state.clone(), vec![Vec3::zeros(); n])
                } else {
                    let pred = dyn_step(mesh, &state, params, action_eff, None)?;
                    let deltas = pred
                        .positions
                        .iter()
                        .zip(&state.positions)
                        .map(|(a, b)| a - b)
                        .collect();
                    (pred, deltas)
                };

            let visible = visible_vertices(mesh, &base_state, camera)?;
            if visible.is_empty() {
                return Err(Error::LostCloth);
            }
            let tto = run_tto(&base_state, observation, &visible, &mesh.edges, &config.tto1)?;
            if tto.warning {
                tto_warnings += 1;
            }

            let (next, r, s) = line_search_step(
                mesh,
                &state,
                params,
                action_eff,
                &dyn_deltas,
                &tto.field.deltas,
                &visible,
                config,
            )?;
            retries.push(r);
            scales.push(s);
            next
        };

        per_step_chamfer.push(visible_chamfer(mesh, &next, observation, camera)?);
        states.push(next.clone());
        state = next;
    }

    let final_observation = observations.last().expect("non-empty");
    let chamfer_pre_tto2 = visible_chamfer(mesh, &state, final_observation, camera)?;

    let final_state = if config.ablation == Ablation::NoTto2 || final_observation.is_empty() {
        state.clone()
    } else {
        let visible = visible_vertices(mesh, &state, camera)?;
        if visible.is_empty() {
            return Err(Error::LostCloth);
        }
        let tto = run_tto(&state, final_observation, &visible, &mesh.edges, &config.tto2)?;
        if tto.warning {
            tto_warnings += 1;
        }
        let positions: Vec<Vec3> = state
            .positions
            .iter()
            .zip(&tto.field.deltas)
            .map(|(p, d)| p + d)
            .collect();
        ClothState { positions, velocities: state.velocities.clone(), time_index: state.time_index }
    };
    let chamfer_final = visible_chamfer(mesh, &final_state, final_observation, camera)?;

    Ok(TrackResult {
        states,
        final_state,
        per_step_chamfer,
        retries,
        scales,
        chamfer_pre_tto2,
        chamfer_final,
        params: *params,
        tto_warnings,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Strips grasp information from actions (for the action-conditioning
/// ablation).
fn strip_actions(actions: &[LowLevelAction]) -> Vec<LowLevelAction> {
    actions.iter().map(|_| LowLevelAction::release()).collect()
}

/// Tracks every trajectory into a pseudo-labeled dataset.
///
/// Per trajectory: one record for the initial state, then one per segment,
/// chaining each segment's final mesh into the next. Online calibration
/// fits parameters per segment; offline calibration first collects every
/// segment's winner, then re-tracks everything with the most frequent one.
/// A failed segment is recorded with its last good state and flags the
/// rest of the trajectory partial instead of dropping records.
pub fn generate_pseudo_dataset(
    mesh: &ClothMesh,
    trajectories: &[Trajectory],
    config: &TrackerConfig,
    grid: &CalibrationGrid,
    base: &SimParams,
    camera: &CameraModel,
) -> Result<PseudoLabelDataset> {
    config.validate()?;
    grid.validate()?;
    if trajectories.is_empty() {
        return Err(Error::EmptyInput("trajectories"));
    }
    for t in trajectories {
        t.validate()?;
    }

    let per_trajectory: Vec<Vec<PseudoRecord>> = trajectories
        .par_iter()
        .enumerate()
        .map(|(ti, traj)| build_trajectory_records(mesh, ti, traj, config, grid, base, camera))
        .collect::<Result<_>>()?;

    let records = per_trajectory.into_iter().flatten().collect();
    Ok(PseudoLabelDataset { records, provenance: Provenance::new(config, base, camera) })
}

fn build_trajectory_records(
    mesh: &ClothMesh,
    trajectory_index: usize,
    traj: &Trajectory,
    config: &TrackerConfig,
    grid: &CalibrationGrid,
    base: &SimParams,
    camera: &CameraModel,
) -> Result<Vec<PseudoRecord>> {
    let mut records = Vec::with_capacity(traj.segments.len() + 1);

    // Initial record: the known starting mesh paired with a fresh render.
    let (initial_obs, _) =
        render_point_cloud(mesh, &traj.initial_state, camera, &[], trajectory_index as u64)?;
    records.push(PseudoRecord {
        trajectory: trajectory_index,
        segment: None,
        observation: initial_obs,
        mesh_state: traj.initial_state.clone(),
        pre_tto2_state: None,
        params: *base,
        partial: false,
        diagnostics: RecordDiagnostics::default(),
    });

    // Offline mode tracks twice: the first pass only collects winners.
    let modal_params = match config.calibration {
        CalibrationMode::Online => None,
        CalibrationMode::Offline => {
            let winners = collect_segment_winners(mesh, traj, config, grid, base, camera);
            Some(modal_winner(&winners, grid, base))
        }
    };

    let mut state = traj.initial_state.clone();
    let mut tainted = false;
    for (si, segment) in traj.segments.iter().enumerate() {
        let actions: Vec<LowLevelAction> = if config.ablation == Ablation::NoActCond {
            strip_actions(&segment.actions)
        } else {
            segment.actions.clone()
        };
        let final_obs = segment.observations.last().cloned().unwrap_or_default();

        let params = match &modal_params {
            Some(p) => *p,
            None => match calibrate(
                mesh,
                &state,
                &actions,
                &final_obs,
                grid,
                base,
                camera,
                config.explosion_threshold,
            ) {
                Ok(outcome) => outcome.params,
                Err(_) => {
                    tainted = true;
                    grid.midpoint(base)
                }
            },
        };

        match track_segment(mesh, &state, &actions, &segment.observations, &params, config, camera)
        {
            Ok(result) => {
                records.push(PseudoRecord {
                    trajectory: trajectory_index,
                    segment: Some(si),
                    observation: final_obs,
                    mesh_state: result.final_state.clone(),
                    pre_tto2_state: Some(result.states.last().expect("T >= 1").clone()),
                    params,
                    partial: tainted,
                    diagnostics: RecordDiagnostics {
                        chamfer_pre_tto2: finite_or_none(result.chamfer_pre_tto2),
                        chamfer_final: finite_or_none(result.chamfer_final),
                        line_search_retries: result.retries.iter().sum(),
                        tto_warnings: result.tto_warnings,
                        wall_time_s: result.wall_time_s,
                    },
                });
                state = result.final_state;
            }
            Err(_) => {
                // Keep the last good state, flag everything from here on.
                tainted = true;
                records.push(PseudoRecord {
                    trajectory: trajectory_index,
                    segment: Some(si),
                    observation: final_obs,
                    mesh_state: state.clone(),
                    pre_tto2_state: None,
                    params,
                    partial: true,
                    diagnostics: RecordDiagnostics::default(),
                });
            }
        }
    }
    Ok(records)
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// First tracking pass of offline calibration: calibrate and track each
/// segment (online-style) purely to learn the per-segment winners.
fn collect_segment_winners(
    mesh: &ClothMesh,
    traj: &Trajectory,
    config: &TrackerConfig,
    grid: &CalibrationGrid,
    base: &SimParams,
    camera: &CameraModel,
) -> Vec<usize> {
    let mut winners = Vec::new();
    let mut state = traj.initial_state.clone();
    for segment in &traj.segments {
        let actions: Vec<LowLevelAction> = if config.ablation == Ablation::NoActCond {
            strip_actions(&segment.actions)
        } else {
            segment.actions.clone()
        };
        let Some(final_obs) = segment.observations.last() else { continue };
        let Ok(outcome) = calibrate(
            mesh,
            &state,
            &actions,
            final_obs,
            grid,
            base,
            camera,
            config.explosion_threshold,
        ) else {
            continue;
        };
        if !outcome.all_exploded {
            winners.push(outcome.winner_index);
        }
        if let Ok(result) = track_segment(
            mesh,
            &state,
            &actions,
            &segment.observations,
            &outcome.params,
            config,
            camera,
        ) {
            state = result.final_state;
        }
    }
    winners
}

/// Most frequent winner index, ties broken toward the lowest grid index;
/// the grid midpoint when no segment produced a winner.
fn modal_winner(winners: &[usize], grid: &CalibrationGrid, base: &SimParams) -> SimParams {
    if winners.is_empty() {
        return grid.midpoint(base);
    }
    let mut counts = std::collections::BTreeMap::new();
    for &w in winners {
        *counts.entry(w).or_insert(0usize) += 1;
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&idx, _)| idx)
        .expect("non-empty winners");
    grid.combos(base)[best]
}

/// Number of unordered, non-adjacent vertex pairs closer than `threshold`.
/// Pairs connected by any mesh edge (structural, shear, or bending) do not
/// count; distances are compared strictly.
pub fn collision_count(mesh: &ClothMesh, state: &ClothState, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParam(format!(
            "collision threshold must be positive, got {threshold}"
        )));
    }
    state.validate(mesh)?;
    let adjacency = mesh.adjacency_set();
    let pairs = HashGrid::build(&state.positions, threshold)
        .pairs_within(&state.positions, threshold);
    Ok(pairs.into_iter().filter(|pair| !adjacency.contains(pair)).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{decompose_pick_place, PickPlaceAction, Segment};
    use crate::mesh::build_grid_cloth;
    use crate::sensing::Sphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Noiseless camera that comfortably covers the unit-test cloths.
    fn test_camera() -> CameraModel {
        CameraModel {
            depth_noise_sigma: 0.0,
            dropout_rate: 0.0,
            ..CameraModel::over_bounds(-0.15, 0.35, -0.15, 0.35, 0.002)
        }
    }

    /// Floating cloth with constraints disabled (stiffness at the grid
    /// floor) — pseudo-action displacements pass through unmodified.
    fn floppy_setup() -> (ClothMesh, ClothState, SimParams) {
        let mesh = build_grid_cloth(3, 3, 0.01).unwrap();
        let mut state = mesh.rest_state();
        for p in &mut state.positions {
            p.z += 0.5;
        }
        let params = SimParams { stiffness: 0.2, gravity: 0.0, damping: 0.0, ..SimParams::default() };
        (mesh, state, params)
    }

    #[test]
    fn line_search_accepts_benign_pseudo_action_immediately() {
        let (mesh, state, params) = floppy_setup();
        let n = mesh.num_vertices();
        let dyn_deltas = vec![Vec3::zeros(); n];
        let mut corr = vec![Vec3::zeros(); n];
        corr[4] = Vec3::new(0.002, 0.0, 0.001);
        let subset: Vec<usize> = (0..n).collect();
        let config = TrackerConfig::default();
        let (next, retries, scale) = line_search_step(
            &mesh,
            &state,
            &params,
            &LowLevelAction::release(),
            &dyn_deltas,
            &corr,
            &subset,
            &config,
        )
        .unwrap();
        assert_eq!(retries, 0);
        assert_eq!(scale, 1.0);
        assert!((next.positions[4] - (state.positions[4] + corr[4])).norm() < 1e-12);
    }

    #[test]
    fn line_search_decays_correction_geometrically() {
        // Threshold 2.5 m/s at dt 0.01 permits 0.025 m per substep. A
        // 0.06 m correction needs three decays: 0.06, 0.042, 0.0294 all
        // fail; 0.0206 = 0.06 * 0.7^3 passes.
        let (mesh, state, params) = floppy_setup();
        let n = mesh.num_vertices();
        let dyn_deltas = vec![Vec3::zeros(); n];
        let mut corr = vec![Vec3::zeros(); n];
        corr[0] = Vec3::new(0.06, 0.0, 0.0);
        let subset: Vec<usize> = (0..n).collect();
        let config = TrackerConfig::default();
        let (_, retries, scale) = line_search_step(
            &mesh,
            &state,
            &params,
            &LowLevelAction::release(),
            &dyn_deltas,
            &corr,
            &subset,
            &config,
        )
        .unwrap();
        assert_eq!(retries, 3);
        assert!((scale - 0.7f64.powi(3)).abs() < 1e-12);
        assert!((scale - 0.343).abs() < 1e-12);
    }

    #[test]
    fn line_search_falls_back_to_zero_pseudo_action() {
        let (mesh, state, params) = floppy_setup();
        let n = mesh.num_vertices();
        let dyn_deltas = vec![Vec3::zeros(); n];
        let mut corr = vec![Vec3::zeros(); n];
        corr[0] = Vec3::new(1000.0, 0.0, 0.0); // unstable at every decay
        let subset: Vec<usize> = (0..n).collect();
        let config = TrackerConfig::default();
        let (next, retries, scale) = line_search_step(
            &mesh,
            &state,
            &params,
            &LowLevelAction::release(),
            &dyn_deltas,
            &corr,
            &subset,
            &config,
        )
        .unwrap();
        assert_eq!(retries, 10);
        assert_eq!(scale, 0.0);
        let plain =
            dyn_step(&mesh, &state, &params, &LowLevelAction::release(), None).unwrap();
        assert_eq!(next, plain);
    }

    #[test]
    fn line_search_errors_when_dynamics_itself_explodes() {
        let (mesh, mut state, params) = floppy_setup();
        state.velocities[0] = Vec3::new(1e4, 0.0, 0.0);
        let n = mesh.num_vertices();
        let zeros = vec![Vec3::zeros(); n];
        let err = line_search_step(
            &mesh,
            &state,
            &params,
            &LowLevelAction::release(),
            &zeros,
            &zeros,
            &[],
            &TrackerConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unstable { .. }));
    }

    /// Renders observations from a ground-truth rollout under `params`.
    fn observe_rollout(
        mesh: &ClothMesh,
        state: &ClothState,
        params: &SimParams,
        actions: &[LowLevelAction],
        camera: &CameraModel,
    ) -> (Vec<ClothState>, Vec<PointCloud>) {
        let states = simulate_segment(mesh, state, params, actions).unwrap();
        let obs = states
            .iter()
            .map(|s| render_point_cloud(mesh, s, camera, &[], 0).unwrap().0)
            .collect();
        (states, obs)
    }

    #[test]
    fn closed_loop_tracking_is_self_consistent() {
        // Observations come from the tracker's own dynamics with the same
        // parameters: every correction vanishes exactly, so the tracked
        // rollout is the plain rollout and the Chamfer residual is zero.
        let mesh = build_grid_cloth(6, 6, 0.01).unwrap();
        let state = mesh.rest_state();
        let params = SimParams::default();
        let camera = test_camera();
        let pick = PickPlaceAction {
            pick_point: Vec3::new(0.0, 0.0, 0.0),
            place_point: Vec3::new(0.05, 0.03, 0.0),
            lift_height: 0.03,
            num_substeps: 12,
        };
        let grasp = crate::mesh::nearest_vertex(&state, &pick.pick_point);
        let actions = decompose_pick_place(&pick, grasp).unwrap();
        let (gt_states, observations) =
            observe_rollout(&mesh, &state, &params, &actions, &camera);

        let config = TrackerConfig::default();
        let result =
            track_segment(&mesh, &state, &actions, &observations, &params, &config, &camera)
                .unwrap();

        assert_eq!(result.states.len(), actions.len());
        assert_eq!(result.retries.len(), actions.len());
        assert!(result.retries.iter().all(|&r| r == 0));
        assert!(result.scales.iter().all(|&s| s == 1.0));
        assert!(result.chamfer_final < 1e-12, "chamfer {}", result.chamfer_final);
        assert!(result.chamfer_pre_tto2 < 1e-12);
        assert_eq!(&result.final_state, gt_states.last().unwrap());
        assert!(result.states.iter().all(|s| s.is_finite()));
        assert_eq!(result.final_state.num_vertices(), mesh.num_vertices());
    }

    #[test]
    fn no_tto2_keeps_the_last_substep_state() {
        let mesh = build_grid_cloth(5, 5, 0.01).unwrap();
        let state = mesh.rest_state();
        let params = SimParams::default();
        let camera = test_camera();
        let actions: Vec<LowLevelAction> =
            (0..6).map(|_| LowLevelAction::pick(0, Vec3::new(0.002, 0.0, 0.002))).collect();
        let (_, observations) = observe_rollout(&mesh, &state, &params, &actions, &camera);

        let config = TrackerConfig { ablation: Ablation::NoTto2, ..TrackerConfig::default() };
        let result =
            track_segment(&mesh, &state, &actions, &observations, &params, &config, &camera)
                .unwrap();
        assert_eq!(&result.final_state, result.states.last().unwrap());
        assert_eq!(result.chamfer_pre_tto2, result.chamfer_final);
    }

    #[test]
    fn no_pseudo_action_is_a_pure_rollout() {
        let mesh = build_grid_cloth(5, 5, 0.01).unwrap();
        let state = mesh.rest_state();
        let params = SimParams::default();
        let camera = test_camera();
        let actions: Vec<LowLevelAction> =
            (0..5).map(|_| LowLevelAction::pick(2, Vec3::new(0.0, 0.002, 0.002))).collect();
        let (gt_states, observations) =
            observe_rollout(&mesh, &state, &params, &actions, &camera);

        let config =
            TrackerConfig { ablation: Ablation::NoPseudoAction, ..TrackerConfig::default() };
        let result =
            track_segment(&mesh, &state, &actions, &observations, &params, &config, &camera)
                .unwrap();
        // Identical params and no corrections: exactly the plain rollout,
        // then TTO2 on top of the final state.
        for (a, b) in result.states.iter().zip(&gt_states) {
            assert_eq!(a.positions, b.positions);
        }
        assert!(result.retries.iter().all(|&r| r == 0));
    }

    #[test]
    fn tracking_rejects_misaligned_inputs() {
        let mesh = build_grid_cloth(3, 3, 0.01).unwrap();
        let state = mesh.rest_state();
        let params = SimParams::default();
        let camera = test_camera();
        let actions = vec![LowLevelAction::release(); 3];
        let obs = vec![PointCloud { points: vec![Vec3::zeros()] }; 2];
        assert!(track_segment(&mesh, &state, &actions, &obs, &params, &TrackerConfig::default(), &camera)
            .is_err());
        assert!(track_segment(&mesh, &state, &[], &[], &params, &TrackerConfig::default(), &camera)
            .is_err());
    }

    #[test]
    fn calibration_returns_single_combination_unconditionally() {
        let mesh = build_grid_cloth(4, 4, 0.01).unwrap();
        let state = mesh.rest_state();
        let base = SimParams::default();
        let camera = test_camera();
        let actions = vec![LowLevelAction::pick(0, Vec3::new(0.001, 0.0, 0.001)); 5];
        let (states, _) = observe_rollout(&mesh, &state, &base, &actions, &camera);
        let (obs, _) =
            render_point_cloud(&mesh, states.last().unwrap(), &camera, &[], 1).unwrap();

        let grid = CalibrationGrid {
            stiffness: vec![1.25],
            dynamic_friction: vec![0.32],
            particle_friction: vec![0.76],
        };
        let outcome =
            calibrate(&mesh, &state, &actions, &obs, &grid, &base, &camera, 2.5).unwrap();
        assert!(!outcome.all_exploded);
        assert_eq!(outcome.params.stiffness, 1.25);
        assert_eq!(outcome.params.dynamic_friction, 0.32);
        assert_eq!(outcome.params.particle_friction, 0.76);
        assert_eq!(outcome.objectives.len(), 1);
    }

    #[test]
    fn calibration_recovers_planted_parameters() {
        // Hidden parameters sit on the grid; a dragging action makes the
        // final observation discriminative. The winner must match the
        // plant (or tie within 5% of its objective).
        let mesh = build_grid_cloth(8, 8, 0.01).unwrap();
        let state = mesh.rest_state();
        let camera = test_camera();
        let hidden = SimParams {
            stiffness: 0.9,
            dynamic_friction: 0.54,
            particle_friction: 0.54,
            ..SimParams::default()
        };
        let pick = PickPlaceAction {
            pick_point: Vec3::zeros(),
            place_point: Vec3::new(0.06, 0.02, 0.0),
            lift_height: 0.01,
            num_substeps: 16,
        };
        let actions = decompose_pick_place(&pick, 0).unwrap();
        let states = simulate_segment(&mesh, &state, &hidden, &actions).unwrap();
        let (obs, _) =
            render_point_cloud(&mesh, states.last().unwrap(), &camera, &[], 3).unwrap();

        let grid = CalibrationGrid {
            stiffness: vec![0.2, 0.9, 1.6],
            dynamic_friction: vec![0.1, 0.54, 1.2],
            particle_friction: vec![0.54],
        };
        let outcome =
            calibrate(&mesh, &state, &actions, &obs, &grid, &SimParams::default(), &camera, 2.5)
                .unwrap();
        assert!(!outcome.all_exploded);
        let hidden_index = grid
            .combos(&SimParams::default())
            .iter()
            .position(|p| {
                p.stiffness == hidden.stiffness && p.dynamic_friction == hidden.dynamic_friction
            })
            .unwrap();
        let winner_obj = outcome.objectives[outcome.winner_index];
        let hidden_obj = outcome.objectives[hidden_index];
        assert!(
            outcome.winner_index == hidden_index || winner_obj >= 0.95 * hidden_obj,
            "winner {} (obj {winner_obj}), hidden {hidden_index} (obj {hidden_obj})",
            outcome.winner_index
        );
    }

    #[test]
    fn calibration_grid_sizes() {
        assert_eq!(CalibrationGrid::default().len(), 180);
        assert_eq!(CalibrationGrid::grid_125().len(), 125);
        let base = SimParams::default();
        assert_eq!(CalibrationGrid::default().combos(&base).len(), 180);

        // Grid order is stiffness-major.
        let combos = CalibrationGrid::default().combos(&base);
        assert_eq!(combos[0].stiffness, 0.2);
        assert_eq!(combos[0].dynamic_friction, 0.1);
        assert_eq!(combos[0].particle_friction, 0.1);
        assert_eq!(combos[1].particle_friction, 0.32);
        assert_eq!(combos[6].dynamic_friction, 0.32);
    }

    #[test]
    fn collision_count_examples_and_oracle() {
        let mesh = build_grid_cloth(5, 5, 0.01).unwrap();
        let state = mesh.rest_state();
        assert_eq!(collision_count(&mesh, &state, 0.005).unwrap(), 0);

        // Fold vertex 24 onto vertex 0 (non-adjacent on a 5x5 grid).
        let mut folded = state.clone();
        folded.positions[24] = folded.positions[0];
        assert_eq!(collision_count(&mesh, &folded, 0.005).unwrap(), 1);

        // Random crumple vs the O(V^2) oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mesh = build_grid_cloth(20, 25, 0.01).unwrap();
        let mut state = mesh.rest_state();
        for p in &mut state.positions {
            *p = Vec3::new(rng.gen::<f64>(), rng.gen(), rng.gen()) * 0.06;
        }
        let fast = collision_count(&mesh, &state, 0.005).unwrap();
        let adjacency = mesh.adjacency_set();
        let mut brute = 0usize;
        for a in 0..state.positions.len() {
            for b in (a + 1)..state.positions.len() {
                if (state.positions[a] - state.positions[b]).norm() < 0.005
                    && !adjacency.contains(&(a, b))
                {
                    brute += 1;
                }
            }
        }
        assert_eq!(fast, brute);
        assert!(brute > 0, "crumple should produce collisions");
    }

    /// Builds a tiny synthetic trajectory by simulating under `params` and
    /// rendering noiseless observations.
    fn tiny_trajectory(
        mesh: &ClothMesh,
        initial: &ClothState,
        params: &SimParams,
        camera: &CameraModel,
        num_segments: usize,
    ) -> Trajectory {
        let mut state = initial.clone();
        let mut segments = Vec::new();
        for s in 0..num_segments {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            let actions: Vec<LowLevelAction> = (0..6)
                .map(|_| LowLevelAction::pick(0, Vec3::new(0.002 * sign, 0.001, 0.001)))
                .collect();
            let states = simulate_segment(mesh, &state, params, &actions).unwrap();
            let observations = states
                .iter()
                .map(|st| render_point_cloud(mesh, st, camera, &[], 0).unwrap().0)
                .collect();
            state = states.last().unwrap().clone();
            segments.push(Segment { actions, observations });
        }
        Trajectory { initial_state: initial.clone(), segments, ground_truth_states: None }
    }

    fn tiny_grid() -> CalibrationGrid {
        CalibrationGrid {
            stiffness: vec![0.55, 0.9],
            dynamic_friction: vec![0.54],
            particle_friction: vec![0.54],
        }
    }

    #[test]
    fn pseudo_dataset_has_n_plus_one_records_per_trajectory() {
        let mesh = build_grid_cloth(4, 4, 0.01).unwrap();
        let state = mesh.rest_state();
        let params = SimParams::default();
        let camera = test_camera();
        let trajectories = vec![
            tiny_trajectory(&mesh, &state, &params, &camera, 2),
            tiny_trajectory(&mesh, &state, &params, &camera, 2),
        ];
        let config = TrackerConfig::default();
        let dataset = generate_pseudo_dataset(
            &mesh,
            &trajectories,
            &config,
            &tiny_grid(),
            &params,
            &camera,
        )
        .unwrap();

        assert_eq!(dataset.records.len(), 6);
        let expected: Vec<(usize, Option<usize>)> =
            vec![(0, None), (0, Some(0)), (0, Some(1)), (1, None), (1, Some(0)), (1, Some(1))];
        let got: Vec<(usize, Option<usize>)> =
            dataset.records.iter().map(|r| (r.trajectory, r.segment)).collect();
        assert_eq!(got, expected);
        assert!(dataset.records.iter().all(|r| !r.partial));
        assert!(dataset.records.iter().all(|r| r.mesh_state.is_finite()));

        // Initial records carry the given state; segment records carry a
        // pre-TTO2 state too.
        assert_eq!(dataset.records[0].mesh_state, state);
        assert!(dataset.records[1].pre_tto2_state.is_some());
    }

    #[test]
    fn zero_segment_trajectory_yields_single_record() {
        let mesh = build_grid_cloth(4, 4, 0.01).unwrap();
        let state = mesh.rest_state();
        let traj =
            Trajectory { initial_state: state.clone(), segments: vec![], ground_truth_states: None };
        let dataset = generate_pseudo_dataset(
            &mesh,
            &[traj],
            &TrackerConfig::default(),
            &tiny_grid(),
            &SimParams::default(),
            &test_camera(),
        )
        .unwrap();
        assert_eq!(dataset.records.len(), 1);
        assert_eq!(dataset.records[0].segment, None);
    }

    #[test]
    fn offline_calibration_reuses_one_parameter_set() {
        let mesh = build_grid_cloth(4, 4, 0.01).unwrap();
        let state = mesh.rest_state();
        let params = SimParams::default();
        let camera = test_camera();
        let trajectories = vec![tiny_trajectory(&mesh, &state, &params, &camera, 3)];
        let config =
            TrackerConfig { calibration: CalibrationMode::Offline, ..TrackerConfig::default() };
        let dataset = generate_pseudo_dataset(
            &mesh,
            &trajectories,
            &config,
            &tiny_grid(),
            &params,
            &camera,
        )
        .unwrap();
        let segment_params: Vec<SimParams> = dataset
            .records
            .iter()
            .filter(|r| r.segment.is_some())
            .map(|r| r.params)
            .collect();
        assert_eq!(segment_params.len(), 3);
        assert!(segment_params.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn online_calibration_objective_is_optimal_per_segment() {
        // The online winner minimizes the objective by construction, so
        // any other grid point (e.g. an offline modal choice) cannot beat
        // it on the same segment.
        let mesh = build_grid_cloth(6, 6, 0.01).unwrap();
        let state = mesh.rest_state();
        let hidden = SimParams { stiffness: 0.9, ..SimParams::default() };
        let camera = test_camera();
        let actions: Vec<LowLevelAction> =
            (0..8).map(|_| LowLevelAction::pick(0, Vec3::new(0.003, 0.0, 0.001))).collect();
        let states = simulate_segment(&mesh, &state, &hidden, &actions).unwrap();
        let (obs, _) =
            render_point_cloud(&mesh, states.last().unwrap(), &camera, &[], 5).unwrap();

        let grid = CalibrationGrid {
            stiffness: vec![0.2, 0.55, 0.9, 1.25, 1.6],
            dynamic_friction: vec![0.54],
            particle_friction: vec![0.54],
        };
        let outcome = calibrate(
            &mesh,
            &state,
            &actions,
            &obs,
            &grid,
            &SimParams::default(),
            &camera,
            2.5,
        )
        .unwrap();
        let best = outcome.objectives[outcome.winner_index];
        for &o in &outcome.objectives {
            assert!(best <= o);
        }
    }

    #[test]
    fn occluded_substep_simply_rolls_forward() {
        // An occluder that blankets the scene mid-segment forces empty
        // observations; those substeps degrade to plain dynamics instead
        // of failing.
        let mesh = build_grid_cloth(4, 4, 0.01).unwrap();
        let state = mesh.rest_state();
        let params = SimParams::default();
        let camera = test_camera();
        let actions: Vec<LowLevelAction> =
            (0..4).map(|_| LowLevelAction::pick(0, Vec3::new(0.002, 0.0, 0.001))).collect();
        let states = simulate_segment(&mesh, &state, &params, &actions).unwrap();
        let blanket = Sphere { center: Vec3::new(0.015, 0.015, 0.0), radius: 1.0 };
        let observations: Vec<PointCloud> = states
            .iter()
            .enumerate()
            .map(|(i, st)| {
                let occ: &[Sphere] = if i == 1 { std::slice::from_ref(&blanket) } else { &[] };
                render_point_cloud(&mesh, st, &camera, occ, 0).unwrap().0
            })
            .collect();
        assert!(observations[1].is_empty());

        let result = track_segment(
            &mesh,
            &state,
            &actions,
            &observations,
            &params,
            &TrackerConfig::default(),
            &camera,
        )
        .unwrap();
        assert!(result.per_step_chamfer[1].is_nan());
        assert!(result.chamfer_final < 1e-6);
    }
}
