//! The two focused studies behind the benchmark headline:
//!
//! 1. Robustness to poor calibration — how much tracking degrades when the
//!    grid search lands on its median combination instead of its best, with
//!    the final optimization pass on versus off. The drag policy keeps both
//!    friction axes observable to the plain-rollout objective, and a
//!    shortened first correction pass (40 iterations) leaves room for the
//!    dynamics parameters to matter while the final pass runs at full
//!    strength.
//! 2. Collisions — total sub-threshold vertex pairs in final meshes with
//!    the rigidity term on versus off. Flat dragged cloth with deliberately
//!    mismatched dynamics parameters is the revealing case: without the
//!    rigidity term, each corrected vertex lands on the observed surface
//!    independently and ends up superimposed on uncorrected neighbours at
//!    the same height, while the rigidity term moves the sheet coherently.
//!
//! Each study pins its own scenario; `[--seeds N]` controls replication and
//! `key=value` pairs override either configuration (applied to both).

use cloth_track::config::ConfigBundle;
use cloth_track::{collision_study, tto2_robustness, Result};

fn apply_pairs(bundle: &mut ConfigBundle, pairs: &[(&str, &str)]) -> Result<()> {
    for (key, value) in pairs {
        bundle.apply(key, value)?;
    }
    Ok(())
}

/// Shared scenario base: a small cloth and short horizon keep single-core
/// runtime in seconds while leaving enough dynamics for the effects to show.
const BASE: &[(&str, &str)] = &[
    ("scenario.cloth_x", "12"),
    ("scenario.cloth_y", "12"),
    ("scenario.substeps_per_action", "20"),
    ("scenario.settle_substeps", "6"),
    ("scenario.lift_height", "0.04"),
    ("scenario.num_trajectories", "2"),
    ("scenario.policy", "drag"),
];

/// Calibration-robustness study configuration.
const ROBUSTNESS: &[(&str, &str)] = &[
    ("scenario.segments_per_trajectory", "3"),
    ("scenario.dropout_rate", "0.1"),
    ("scenario.pixel_size", "0.005"),
    ("tto1.iterations", "40"),
];

/// Collision study configuration: a single, deliberately wrong parameter
/// combination so the final correction pass has real work to do.
const COLLISIONS: &[(&str, &str)] = &[
    ("scenario.segments_per_trajectory", "2"),
    ("scenario.pixel_size", "0.004"),
    ("grid.stiffness", "0.2"),
    ("grid.dynamic_friction", "0.1"),
    ("grid.particle_friction", "0.1"),
];

fn main() -> Result<()> {
    let mut seeds: u64 = 8;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        if arg == "--seeds" {
            let v = args.next().expect("--seeds needs a value");
            seeds = v.parse().expect("--seeds needs an integer");
        } else if let Some((k, v)) = arg.split_once('=') {
            overrides.push((k.trim().to_owned(), v.trim().to_owned()));
        } else {
            panic!("unexpected argument '{arg}' (want --seeds N or key=value)");
        }
    }
    let seed_list: Vec<u64> = (0..seeds).collect();

    let mut robustness = ConfigBundle::default();
    apply_pairs(&mut robustness, BASE)?;
    apply_pairs(&mut robustness, ROBUSTNESS)?;
    let mut collisions = ConfigBundle::default();
    apply_pairs(&mut collisions, BASE)?;
    apply_pairs(&mut collisions, COLLISIONS)?;
    for (k, v) in &overrides {
        robustness.apply(k, v)?;
        collisions.apply(k, v)?;
    }

    let started = std::time::Instant::now();
    let rob = tto2_robustness(
        &seed_list,
        &robustness.scenario,
        &robustness.tracker,
        &robustness.grid,
        &robustness.base_params,
    )?;
    println!("calibration-robustness study ({:.1}s):", started.elapsed().as_secs_f64());
    println!("  best-grid   mean Chamfer, final pass on : {:.6e}", rob.best_with);
    println!("  median-grid mean Chamfer, final pass on : {:.6e}", rob.median_with);
    println!("  best-grid   mean Chamfer, final pass off: {:.6e}", rob.best_without);
    println!("  median-grid mean Chamfer, final pass off: {:.6e}", rob.median_without);
    println!("  degradation with final pass   : {:+.1}%", 100.0 * rob.degradation_with());
    println!("  degradation without final pass: {:+.1}%", 100.0 * rob.degradation_without());
    let ok = rob.degradation_with() < rob.degradation_without();
    println!("  {} the final pass absorbs calibration error", if ok { "OK  " } else { "FAIL" });

    let started = std::time::Instant::now();
    let col = collision_study(
        &seed_list,
        &collisions.scenario,
        &collisions.tracker,
        &collisions.grid,
        &collisions.base_params,
    )?;
    println!("\ncollision study ({:.1}s):", started.elapsed().as_secs_f64());
    println!("  collisions with rigidity   : {}", col.with_rigidity);
    println!("  collisions without rigidity: {}", col.without_rigidity);
    let ok = col.with_rigidity < col.without_rigidity;
    println!("  {} rigidity suppresses self-collisions", if ok { "OK  " } else { "FAIL" });
    Ok(())
}
