//! Action-conditioned cloth tracking and pseudo-ground-truth mesh generation.
//!
//! The library tracks the full mesh of a piece of cloth through a sequence of
//! pick-and-place actions, observing only partial point clouds from a top-down
//! camera. A position-based dynamics model predicts the motion of every vertex
//! (including occluded ones), and a per-step test-time optimization corrects
//! the prediction to match the observed point cloud. The corrected motion is
//! re-simulated so the result stays physically plausible. The tracked meshes
//! become pseudo-ground-truth labels paired with their observations.
//!
//! A synthetic-world harness (`datagen`) generates trajectories with known
//! ground truth so the whole pipeline can be verified quantitatively.
//!
//! Pipeline overview:
//!
//! 1. [`datagen::generate_synthetic_trajectories`] produces seeded trajectories
//!    (or load real recordings in the same layout).
//! 2. [`tracker::calibrate`] grid-searches physical parameters per segment.
//! 3. [`tracker::track_segment`] runs dynamics + test-time optimization over
//!    one pick-and-place action.
//! 4. [`tracker::generate_pseudo_dataset`] chains segments into a labeled
//!    dataset; [`dataset`] persists it and [`dataset::evaluate`] scores it.
//!
//! See the `examples/` directory for one runnable example per capability, and
//! the `clothtrack` binary for the command-line surface.

pub mod action;
pub mod bench;
pub mod config;
pub mod datagen;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod mesh;
pub mod optimize;
pub mod sensing;
pub mod spatial;
pub mod tracker;

/// 3-D vector of f64 used for positions, velocities, and displacements (meters).
pub type Vec3 = nalgebra::Vector3<f64>;

pub use action::{
    decompose_pick_place, LowLevelAction, PickPlaceAction, Segment, Trajectory,
};
pub use dynamics::{dyn_step, explosion_check, simulate_segment, PseudoAction, SimParams};
pub use error::{Error, Result};
pub use mesh::{build_grid_cloth, nearest_vertex, ClothMesh, ClothState, EdgeKind};
pub use optimize::{
    rigidity_loss, run_tto, tto_objective, CorrectionField, TtoConfig, TtoResult,
};
pub use sensing::{
    chamfer_bidirectional, chamfer_bidirectional_unsquared, chamfer_one_way,
    chamfer_one_way_unsquared, depth_image, render_point_cloud, visible_vertices, CameraModel,
    DepthImage, PointCloud, Sphere,
};
pub use datagen::{
    generate_synthetic_trajectories, read_trajectories, write_trajectories, PickPolicy,
    ScenarioConfig,
};
pub use bench::{
    collision_study, run_bench, tto2_robustness, BenchCell, BenchMetric, BenchReport,
    CollisionStudy, Tto2Robustness, BENCH_METHODS,
};
pub use dataset::{
    evaluate, evaluate_with, Aggregate, EvalReport, Provenance, PseudoLabelDataset, PseudoRecord,
    RecordDiagnostics, RecordEval, DEFAULT_COLLISION_THRESHOLD,
};
pub use tracker::{
    calibrate, calibration_objective, collision_count, generate_pseudo_dataset,
    line_search_step, track_segment, Ablation, CalibrationGrid, CalibrationMode,
    CalibrationOutcome, TrackResult, TrackerConfig,
};
