//! Runs the full ablation matrix (five methods, several seeds) on a
//! moderate scenario and prints the CSV plus pooled-median comparisons.
//!
//! Usage: `cargo run --example ablation_bench [-- --seeds N] [-- key=value ...]`
//! where `key=value` pairs are the same dotted overrides the CLI accepts
//! (e.g. `scenario.cloth_x=10 tto1.iterations=50`).

use cloth_track::config::ConfigBundle;
use cloth_track::{run_bench, BenchMetric, Result};

fn main() -> Result<()> {
    let mut bundle = ConfigBundle::default();
    // A scenario small enough to run in minutes, busy enough that the
    // ablations separate: short hops of a 12x12 cloth with sensor noise
    // and physics off the calibration grid.
    for (key, value) in [
        ("scenario.cloth_x", "12"),
        ("scenario.cloth_y", "12"),
        ("scenario.substeps_per_action", "20"),
        ("scenario.settle_substeps", "6"),
        ("scenario.lift_height", "0.04"),
        ("scenario.num_trajectories", "2"),
        ("scenario.segments_per_trajectory", "2"),
        // Depth resolution coarse enough that the in-flight cloth collapses
        // to a sparse cloud, which is where the action prior pays off.
        ("scenario.pixel_size", "0.007"),
        ("grid.stiffness", "0.55 1.2"),
        ("grid.dynamic_friction", "0.32 0.76"),
        ("grid.particle_friction", "0.32 0.76"),
    ] {
        bundle.apply(key, value)?;
    }

    let mut seeds: u64 = 10;
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        if arg == "--seeds" {
            let v = args.next().expect("--seeds needs a value");
            seeds = v.parse().expect("--seeds needs an integer");
        } else if let Some((k, v)) = arg.split_once('=') {
            bundle.apply(k.trim(), v.trim())?;
        } else {
            panic!("unexpected argument '{arg}' (want --seeds N or key=value)");
        }
    }

    let seed_list: Vec<u64> = (0..seeds).collect();
    let started = std::time::Instant::now();
    let report = run_bench(
        &seed_list,
        &bundle.scenario,
        &bundle.tracker,
        &bundle.grid,
        &bundle.base_params,
    )?;
    eprintln!(
        "{} cells in {:.1}s",
        report.cells.len(),
        started.elapsed().as_secs_f64()
    );
    print!("{}", report.to_csv());

    println!("\npooled medians (all tracked records across seeds):");
    let methods = ["ours", "no_pseudo_action", "no_dyn_init", "no_act_cond", "no_tto2"];
    for metric in [BenchMetric::PreTto2, BenchMetric::Final, BenchMetric::FullMesh] {
        for method in methods {
            let label = match metric {
                BenchMetric::PreTto2 => "pre-TTO2 ",
                BenchMetric::Final => "final    ",
                BenchMetric::FullMesh => "full-mesh",
            };
            match report.pooled_median(method, metric) {
                Some(m) => println!("  {label} {method:<18} {m:.6e}"),
                None => println!("  {label} {method:<18} (no records)"),
            }
        }
    }

    let ours_pre = report.pooled_median("ours", BenchMetric::PreTto2);
    let ours_final = report.pooled_median("ours", BenchMetric::Final);
    println!("\ndirectional checks:");
    for (name, other, ours) in [
        ("ours < no_pseudo_action (pre-TTO2)",
         report.pooled_median("no_pseudo_action", BenchMetric::PreTto2), ours_pre),
        ("ours < no_dyn_init (pre-TTO2)",
         report.pooled_median("no_dyn_init", BenchMetric::PreTto2), ours_pre),
        ("ours < no_tto2 (final)",
         report.pooled_median("no_tto2", BenchMetric::Final), ours_final),
    ] {
        let ok = matches!((ours, other), (Some(a), Some(b)) if a < b);
        println!("  {} {name}", if ok { "OK  " } else { "FAIL" });
    }
    for (metric, label) in
        [(BenchMetric::PreTto2, "pre-TTO2"), (BenchMetric::FullMesh, "full-mesh")]
    {
        if let Some(nac) = report.pooled_median("no_act_cond", metric) {
            let worst = methods
                .iter()
                .filter(|m| **m != "no_act_cond")
                .filter_map(|m| report.pooled_median(m, metric))
                .all(|m| m < nac);
            println!(
                "  {} no_act_cond is the worst ({label})",
                if worst { "OK  " } else { "FAIL" }
            );
        }
    }
    Ok(())
}
