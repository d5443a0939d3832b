//! The full pipeline: generate synthetic trajectories, track them into a
//! pseudo-ground-truth dataset, persist it, read it back, and score it
//! against the synthetic ground truth.
//!
//! Run with `cargo run --example make_dataset`.

use cloth_track::{
    evaluate, generate_pseudo_dataset, generate_synthetic_trajectories, CalibrationGrid,
    PseudoLabelDataset, Result, ScenarioConfig, SimParams, TrackerConfig,
    DEFAULT_COLLISION_THRESHOLD,
};

fn main() -> Result<()> {
    let scenario = ScenarioConfig {
        num_trajectories: 2,
        segments_per_trajectory: 2,
        cloth_x: 10,
        cloth_y: 10,
        substeps_per_action: 16,
        settle_substeps: 4,
        lift_height: 0.04,
        ..ScenarioConfig::default()
    };
    let grid = CalibrationGrid {
        stiffness: vec![0.55, 1.2],
        dynamic_friction: vec![0.32, 0.76],
        particle_friction: vec![0.32, 0.76],
    };
    let mesh = scenario.mesh()?;
    let camera = scenario.camera();

    let trajectories = generate_synthetic_trajectories(&scenario)?;
    println!(
        "generated {} trajectories x {} segments on a {}x{} cloth",
        trajectories.len(),
        scenario.segments_per_trajectory,
        scenario.cloth_x,
        scenario.cloth_y
    );

    let dataset = generate_pseudo_dataset(
        &mesh,
        &trajectories,
        &TrackerConfig::default(),
        &grid,
        &SimParams::default(),
        &camera,
    )?;
    println!(
        "tracked into {} records ({} partial)",
        dataset.records.len(),
        dataset.records.iter().filter(|r| r.partial).count()
    );

    // Round-trip through disk: the dataset directory carries the mesh, the
    // records, per-record observations, and derived depth images.
    let dir = std::env::temp_dir().join("cloth-track-example-dataset");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).ok();
    }
    dataset.write(&mesh, &dir)?;
    let (mesh_back, dataset_back) = PseudoLabelDataset::read(&dir)?;
    println!("round-tripped through {} (identical: {})", dir.display(), dataset_back == dataset);

    let report = evaluate(
        &mesh_back,
        &dataset_back,
        &trajectories,
        &camera,
        DEFAULT_COLLISION_THRESHOLD,
    )?;
    println!("\nscores over non-partial records (x 1e-4 m^2):");
    if let Some(a) = &report.chamfer_pre_tto2 {
        println!("  visible Chamfer before final pass: {}", a.format_units(1e4));
    }
    if let Some(a) = &report.chamfer_final {
        println!("  visible Chamfer of pseudo labels : {}", a.format_units(1e4));
    }
    if let Some(a) = &report.full_mesh_error {
        println!(
            "  full-mesh error vs ground truth  : {} (x 1e-3 m)",
            a.format_units(1e3)
        );
    }
    if let Some(a) = &report.collisions {
        println!("  collisions per record            : {}", a.format_units(1.0));
    }
    println!("  partial records excluded         : {}", report.partial_count);
    Ok(())
}
