//! Synthetic trajectory generation: the stand-in for real manipulation
//! data. A hidden ("real world") parameter set drives the simulator, a
//! pick policy chooses pick-and-place commands, and the virtual depth
//! camera renders noisy, occluded observations after every substep.
//!
//! Ground truth is stepped at a finer cadence than the recorded actions
//! (`gt_refinement` micro-steps per substep), so the tracker — which steps
//! once per recorded action — faces a deliberate model gap even when its
//! parameters match the hidden ones.

use crate::action::{decompose_pick_place, LowLevelAction, PickPlaceAction, Segment, Trajectory};
use crate::dynamics::{dyn_step, SimParams};
use crate::error::{Error, Result};
use crate::mesh::{build_grid_cloth, nearest_vertex, ClothMesh, ClothState};
use crate::sensing::{render_point_cloud, CameraModel, PointCloud, Sphere};
use crate::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How pick-and-place commands are chosen, one per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PickPolicy {
    /// Grasp a random boundary vertex, place it uniformly in the (margin-
    /// shrunk) workspace.
    RandomEdgePick,
    /// Grasp the middle of a random side and place it at the mirror point
    /// through the cloth center, folding the cloth onto itself.
    FoldInHalf,
    /// Grasp a random boundary vertex and drag it a short distance at low
    /// lift.
    Drag,
    /// Fixed commands, `list[segment % len]`. Pick points must land on the
    /// cloth; off-cloth scripted picks are an error.
    Scripted(Vec<PickPlaceAction>),
}

/// Full description of a synthetic data-collection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub rng_seed: u64,
    pub num_trajectories: usize,
    pub segments_per_trajectory: usize,
    /// Cloth grid resolution and spacing (meters).
    pub cloth_x: usize,
    pub cloth_y: usize,
    pub spacing: f64,
    /// The "real world" physics, deliberately off the calibration grid by
    /// default so calibration error is nonzero.
    pub hidden_params: SimParams,
    pub policy: PickPolicy,
    /// Low-level substeps per pick-and-place command.
    pub substeps_per_action: usize,
    /// Peak carry height for sampled commands, meters.
    pub lift_height: f64,
    /// Plain settling substeps before the first segment.
    pub settle_substeps: usize,
    /// Ground-truth micro-steps per recorded substep.
    pub gt_refinement: usize,
    /// Radius of the sphere occluding points near the picker tip while
    /// grasping; 0 disables the occluder.
    pub occluder_radius: f64,
    pub depth_noise_sigma: f64,
    pub dropout_rate: f64,
    /// Workspace bounds (x_min, x_max, y_min, y_max); also the camera
    /// footprint and the place-target sampling region.
    pub workspace: (f64, f64, f64, f64),
    /// Camera pixel size, meters.
    pub pixel_size: f64,
    /// Attempts to sample a valid pick before giving up.
    pub max_pick_retries: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            rng_seed: 0,
            num_trajectories: 2,
            segments_per_trajectory: 3,
            cloth_x: 25,
            cloth_y: 25,
            spacing: 0.01,
            // Midway between calibration grid points on every axis.
            hidden_params: SimParams {
                stiffness: 1.075,
                dynamic_friction: 0.43,
                particle_friction: 0.65,
                ..SimParams::default()
            },
            policy: PickPolicy::RandomEdgePick,
            substeps_per_action: 40,
            lift_height: 0.08,
            settle_substeps: 10,
            gt_refinement: 4,
            occluder_radius: 0.03,
            depth_noise_sigma: 0.001,
            dropout_rate: 0.02,
            workspace: (0.0, 0.6, 0.0, 0.6),
            pixel_size: 0.003,
            max_pick_retries: 20,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.hidden_params.validate()?;
        if self.num_trajectories < 1 {
            return Err(Error::InvalidParam("num_trajectories must be at least 1".into()));
        }
        if self.cloth_x < 2 || self.cloth_y < 2 {
            return Err(Error::InvalidParam(format!(
                "cloth grid must be at least 2 x 2, got {} x {}",
                self.cloth_x, self.cloth_y
            )));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::InvalidParam(format!("spacing must be positive, got {}", self.spacing)));
        }
        if self.substeps_per_action < 4 {
            return Err(Error::InvalidParam(
                "substeps_per_action must be at least 4 (lift/carry/lower/settle)".into(),
            ));
        }
        if self.gt_refinement < 1 {
            return Err(Error::InvalidParam("gt_refinement must be at least 1".into()));
        }
        if !(self.lift_height > 0.0) {
            return Err(Error::InvalidParam(format!(
                "lift_height must be positive, got {}",
                self.lift_height
            )));
        }
        if self.occluder_radius < 0.0 || !self.occluder_radius.is_finite() {
            return Err(Error::InvalidParam(format!(
                "occluder_radius must be >= 0, got {}",
                self.occluder_radius
            )));
        }
        let (x0, x1, y0, y1) = self.workspace;
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::InvalidParam(format!(
                "workspace bounds must be well ordered, got {:?}",
                self.workspace
            )));
        }
        let (ex, ey) = self.cloth_extent();
        if x1 - x0 < ex || y1 - y0 < ey {
            return Err(Error::InvalidParam(format!(
                "workspace {:?} smaller than the cloth ({ex} x {ey} m)",
                self.workspace
            )));
        }
        if self.max_pick_retries < 1 {
            return Err(Error::InvalidParam("max_pick_retries must be at least 1".into()));
        }
        // Camera validation covers pixel size, noise, and dropout ranges.
        self.camera().validate()
    }

    fn cloth_extent(&self) -> (f64, f64) {
        (self.spacing * (self.cloth_x - 1) as f64, self.spacing * (self.cloth_y - 1) as f64)
    }

    /// The cloth topology this scenario manipulates.
    pub fn mesh(&self) -> Result<ClothMesh> {
        build_grid_cloth(self.cloth_x, self.cloth_y, self.spacing)
    }

    /// The virtual depth camera: a top-down orthographic view of the whole
    /// workspace with this scenario's noise model.
    pub fn camera(&self) -> CameraModel {
        CameraModel {
            depth_noise_sigma: self.depth_noise_sigma,
            dropout_rate: self.dropout_rate,
            ..CameraModel::over_bounds(
                self.workspace.0,
                self.workspace.1,
                self.workspace.2,
                self.workspace.3,
                self.pixel_size,
            )
        }
    }

    /// The rest state translated so the cloth sits centered in the
    /// workspace, flat on the ground.
    pub fn initial_state(&self, mesh: &ClothMesh) -> ClothState {
        let (x0, x1, y0, y1) = self.workspace;
        let (ex, ey) = self.cloth_extent();
        let offset = Vec3::new(
            x0 + 0.5 * ((x1 - x0) - ex),
            y0 + 0.5 * ((y1 - y0) - ey),
            0.0,
        );
        let mut state = mesh.rest_state();
        for p in &mut state.positions {
            *p += offset;
        }
        state
    }
}

/// Steps one recorded action at the ground-truth cadence: `refinement`
/// micro-steps, each moving the picker by `delta / refinement` over
/// `dt / refinement`.
fn gt_step(
    mesh: &ClothMesh,
    state: &ClothState,
    params: &SimParams,
    action: &LowLevelAction,
    refinement: usize,
) -> Result<ClothState> {
    let fine_params = SimParams { dt: params.dt / refinement as f64, ..*params };
    let fine_action = LowLevelAction {
        picked_vertex: action.picked_vertex,
        picker_delta: action.picker_delta / refinement as f64,
    };
    let mut current = state.clone();
    for _ in 0..refinement {
        current = dyn_step(mesh, &current, &fine_params, &fine_action, None)?;
    }
    Ok(current)
}

/// Fastest picker motion a sampled command may imply, m/s. Sampled place
/// targets are pulled toward the pick point until the carry phase fits this
/// speed: an unconstrained workspace jump squeezed into the fixed substep
/// budget would command motion faster than any plausible picker, which the
/// tracker (correctly) rejects as explosive.
const MAX_PICKER_SPEED: f64 = 1.5;

/// One sampled command plus the vertex it grasps.
struct SampledPick {
    command: PickPlaceAction,
    grasp_vertex: usize,
}

fn sample_pick(
    scenario: &ScenarioConfig,
    mesh: &ClothMesh,
    state: &ClothState,
    segment_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampledPick> {
    let snap_tolerance = 1.5 * scenario.spacing;
    let boundary = mesh.boundary_vertices();
    let (x0, x1, y0, y1) = scenario.workspace;
    let (ex, ey) = scenario.cloth_extent();
    // Keep place targets far enough from the walls that the cloth stays in
    // view after the move.
    let margin_x = (0.5 * ex).min(0.45 * (x1 - x0));
    let margin_y = (0.5 * ey).min(0.45 * (y1 - y0));

    for _ in 0..scenario.max_pick_retries {
        let candidate = match &scenario.policy {
            PickPolicy::RandomEdgePick => {
                let v = boundary[rng.gen_range(0..boundary.len())];
                let pick = state.positions[v];
                let mut place = Vec3::new(
                    rng.gen_range(x0 + margin_x..x1 - margin_x),
                    rng.gen_range(y0 + margin_y..y1 - margin_y),
                    0.0,
                );
                let quarter = scenario.substeps_per_action / 4;
                let n_carry = scenario.substeps_per_action - 3 * quarter;
                let budget =
                    MAX_PICKER_SPEED * n_carry as f64 * scenario.hidden_params.dt;
                // The carry phase also descends from the pick's height, so
                // the horizontal reach shrinks accordingly.
                let h_budget = (budget * budget - pick.z * pick.z).max(0.0).sqrt();
                let horizontal = Vec3::new(place.x - pick.x, place.y - pick.y, 0.0);
                if horizontal.norm() > h_budget {
                    place = Vec3::new(pick.x, pick.y, 0.0)
                        + horizontal * (h_budget / horizontal.norm());
                }
                PickPlaceAction {
                    pick_point: pick,
                    place_point: place,
                    lift_height: scenario.lift_height,
                    num_substeps: scenario.substeps_per_action,
                }
            }
            PickPolicy::FoldInHalf => {
                // Midpoint of a random side, mirrored through the center
                // of mass so the grasped half lands on the other half.
                let side = rng.gen_range(0..4usize);
                let (mx, my) = (scenario.cloth_x / 2, scenario.cloth_y / 2);
                let v = match side {
                    0 => mesh.grid_index(mx, 0),
                    1 => mesh.grid_index(mx, scenario.cloth_y - 1),
                    2 => mesh.grid_index(0, my),
                    _ => mesh.grid_index(scenario.cloth_x - 1, my),
                };
                let pick = state.positions[v];
                let center = state.center_of_mass();
                let place = Vec3::new(2.0 * center.x - pick.x, 2.0 * center.y - pick.y, 0.0);
                PickPlaceAction {
                    pick_point: pick,
                    place_point: place,
                    lift_height: scenario.lift_height,
                    num_substeps: scenario.substeps_per_action,
                }
            }
            PickPolicy::Drag => {
                let v = boundary[rng.gen_range(0..boundary.len())];
                let pick = state.positions[v];
                let reach = 0.3 * ex.max(ey);
                let place = Vec3::new(
                    (pick.x + rng.gen_range(-reach..reach)).clamp(x0 + margin_x, x1 - margin_x),
                    (pick.y + rng.gen_range(-reach..reach)).clamp(y0 + margin_y, y1 - margin_y),
                    0.0,
                );
                PickPlaceAction {
                    pick_point: pick,
                    place_point: place,
                    lift_height: (0.2 * scenario.lift_height).min(0.02),
                    num_substeps: scenario.substeps_per_action,
                }
            }
            PickPolicy::Scripted(list) => {
                if list.is_empty() {
                    return Err(Error::EmptyInput("scripted pick list"));
                }
                list[segment_index % list.len()].clone()
            }
        };
        candidate.validate()?;
        let grasp_vertex = nearest_vertex(state, &candidate.pick_point);
        let miss = (state.positions[grasp_vertex] - candidate.pick_point).norm();
        if miss <= snap_tolerance {
            return Ok(SampledPick { command: candidate, grasp_vertex });
        }
        if matches!(scenario.policy, PickPolicy::Scripted(_)) {
            // No sampling freedom to retry with.
            break;
        }
    }
    Err(Error::InvalidParam(format!(
        "could not sample an on-cloth pick in {} attempts",
        scenario.max_pick_retries
    )))
}

/// Simulates every trajectory of the scenario: settle, then per segment
/// sample a command, decompose it, step ground truth at the refined
/// cadence, and render an observation after every recorded substep (with
/// the picker-tip occluder while grasping). Fully deterministic in
/// `rng_seed`.
pub fn generate_synthetic_trajectories(scenario: &ScenarioConfig) -> Result<Vec<Trajectory>> {
    scenario.validate()?;
    let mesh = scenario.mesh()?;
    let camera = scenario.camera();
    let params = scenario.hidden_params;
    let mut master = ChaCha8Rng::seed_from_u64(scenario.rng_seed);

    let mut trajectories = Vec::with_capacity(scenario.num_trajectories);
    for _ in 0..scenario.num_trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());

        // Settle the flat cloth.
        let mut state = scenario.initial_state(&mesh);
        let release = LowLevelAction::release();
        for _ in 0..scenario.settle_substeps {
            state = gt_step(&mesh, &state, &params, &release, scenario.gt_refinement)?;
        }
        let initial_state = state.clone();

        let mut segments = Vec::with_capacity(scenario.segments_per_trajectory);
        let mut ground_truth = Vec::with_capacity(scenario.segments_per_trajectory);
        for si in 0..scenario.segments_per_trajectory {
            let pick = sample_pick(scenario, &mesh, &state, si, &mut rng)?;
            let actions = decompose_pick_place(&pick.command, pick.grasp_vertex)?;

            let mut observations: Vec<PointCloud> = Vec::with_capacity(actions.len());
            let mut gt_states = Vec::with_capacity(actions.len());
            for action in &actions {
                state = gt_step(&mesh, &state, &params, action, scenario.gt_refinement)?;
                let occluders: Vec<Sphere> = match action.picked_vertex {
                    Some(v) if scenario.occluder_radius > 0.0 => vec![Sphere {
                        center: state.positions[v],
                        radius: scenario.occluder_radius,
                    }],
                    _ => vec![],
                };
                let (cloud, _empty) =
                    render_point_cloud(&mesh, &state, &camera, &occluders, rng.gen())?;
                observations.push(cloud);
                gt_states.push(state.clone());
            }
            segments.push(Segment { actions, observations });
            ground_truth.push(gt_states);
        }
        trajectories.push(Trajectory {
            initial_state,
            segments,
            ground_truth_states: Some(ground_truth),
        });
    }
    Ok(trajectories)
}

/// Writes `scenario.json` plus one `trajectory_NNN.json` per trajectory.
pub fn write_trajectories(
    dir: &Path,
    scenario: &ScenarioConfig,
    trajectories: &[Trajectory],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scenario_path = dir.join("scenario.json");
    let text = serde_json::to_string_pretty(scenario)
        .map_err(|e| Error::parse(&scenario_path, e.to_string()))?;
    std::fs::write(&scenario_path, text).map_err(|e| Error::io(&scenario_path, e))?;
    for (i, traj) in trajectories.iter().enumerate() {
        let path = dir.join(format!("trajectory_{i:03}.json"));
        let text =
            serde_json::to_string(traj).map_err(|e| Error::parse(&path, e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads a directory written by [`write_trajectories`].
pub fn read_trajectories(dir: &Path) -> Result<(ScenarioConfig, Vec<Trajectory>)> {
    let scenario_path = dir.join("scenario.json");
    let text =
        std::fs::read_to_string(&scenario_path).map_err(|e| Error::io(&scenario_path, e))?;
    let scenario: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| Error::parse(&scenario_path, e.to_string()))?;
    let mut trajectories = Vec::new();
    loop {
        let path = dir.join(format!("trajectory_{:03}.json", trajectories.len()));
        if !path.exists() {
            break;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let traj: Trajectory =
            serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
        trajectories.push(traj);
    }
    if trajectories.is_empty() {
        return Err(Error::EmptyInput("trajectory files"));
    }
    Ok((scenario, trajectories))
}
