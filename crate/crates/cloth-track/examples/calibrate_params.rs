//! Parameter calibration in isolation: plant a known on-grid parameter
//! combination as the "real world", record one drag action, and let the
//! grid search recover it from the final observation alone.
//!
//! Run with `cargo run --example calibrate_params`.

use cloth_track::{
    calibrate, generate_synthetic_trajectories, CalibrationGrid, PickPolicy, Result,
    ScenarioConfig, SimParams, TrackerConfig,
};

fn main() -> Result<()> {
    let grid = CalibrationGrid::default();
    let base = SimParams::default();
    let planted = SimParams {
        stiffness: 0.55,
        dynamic_friction: 0.76,
        particle_friction: 0.32,
        ..base
    };
    // A drag keeps the cloth on the ground the whole way, so both friction
    // axes leave a visible signature in where the cloth ends up. The ground
    // truth is stepped at the calibration cadence (refinement 1) so the only
    // unknowns are the parameters themselves.
    let scenario = ScenarioConfig {
        num_trajectories: 1,
        segments_per_trajectory: 1,
        cloth_x: 12,
        cloth_y: 12,
        substeps_per_action: 20,
        settle_substeps: 6,
        lift_height: 0.04,
        policy: PickPolicy::Drag,
        hidden_params: planted,
        gt_refinement: 1,
        ..ScenarioConfig::default()
    };
    let mesh = scenario.mesh()?;
    let camera = scenario.camera();
    let trajs = generate_synthetic_trajectories(&scenario)?;
    let segment = &trajs[0].segments[0];

    println!(
        "planted: stiffness {:.2}, dynamic friction {:.2}, particle friction {:.2}",
        planted.stiffness, planted.dynamic_friction, planted.particle_friction
    );
    println!(
        "grid: {} combinations, one drag segment of {} substeps\n",
        grid.len(),
        segment.actions.len()
    );

    let outcome = calibrate(
        &mesh,
        &trajs[0].initial_state,
        &segment.actions,
        segment.observations.last().unwrap(),
        &grid,
        &base,
        &camera,
        TrackerConfig::default().explosion_threshold,
    )?;

    let combos = grid.combos(&base);
    let mut ranked: Vec<usize> = (0..combos.len()).collect();
    ranked.sort_by(|&a, &b| outcome.objectives[a].total_cmp(&outcome.objectives[b]));
    println!("top 5 of {}:", combos.len());
    for (rank, &i) in ranked.iter().take(5).enumerate() {
        let c = &combos[i];
        println!(
            "  {}. stiffness {:.2} dyn friction {:.2} part friction {:.2} -> objective {:.3e}{}",
            rank + 1,
            c.stiffness,
            c.dynamic_friction,
            c.particle_friction,
            outcome.objectives[i],
            if i == outcome.winner_index { "  <- winner" } else { "" },
        );
    }
    let w = &outcome.params;
    let exact = w.stiffness == planted.stiffness
        && w.dynamic_friction == planted.dynamic_friction
        && w.particle_friction == planted.particle_friction;
    println!(
        "\nwinner {} the planted combination{}",
        if exact { "is exactly" } else { "ties with" },
        if exact {
            String::new()
        } else {
            format!(
                " (stiffness {:.2}, dyn {:.2}, part {:.2})",
                w.stiffness, w.dynamic_friction, w.particle_friction
            )
        }
    );
    Ok(())
}
