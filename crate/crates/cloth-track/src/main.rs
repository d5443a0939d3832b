//! `clothtrack`: command-line surface over the library.
//!
//! Subcommands: `gen` (synthetic trajectories), `calibrate` (standalone
//! grid search), `track` (build a pseudo-labeled dataset), `eval` (metrics
//! report), `bench` (ablation matrix). Exit codes: 0 success, 2 usage,
//! 3 invalid configuration or input shape, 4 file/parse problems,
//! 5 tracking lost the cloth or went unstable. Failures print a single
//! machine-readable JSON record to stderr.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use cloth_track::config::{
    ablation_label, parse_ablation, parse_calibration_mode, parse_policy, ConfigBundle,
};
use cloth_track::dataset::{evaluate_with, PseudoLabelDataset, DEFAULT_COLLISION_THRESHOLD};
use cloth_track::datagen::{
    generate_synthetic_trajectories, read_trajectories, write_trajectories,
};
use cloth_track::io::obj;
use cloth_track::tracker::{calibrate, generate_pseudo_dataset, track_segment};
use cloth_track::{run_bench, Error, Result};

#[derive(Parser)]
#[command(
    name = "clothtrack",
    about = "Cloth mesh tracking from point clouds of pick-and-place actions",
    after_help = "Worker-pool size is controlled by the RAYON_NUM_THREADS \
                  environment variable (default: all cores).",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand: layered configuration.
#[derive(Args)]
struct CommonOpts {
    /// Key = value configuration file applied over the defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Single key=value override, repeatable; applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl CommonOpts {
    fn bundle(&self) -> Result<ConfigBundle> {
        let mut bundle = ConfigBundle::default();
        if let Some(path) = &self.config {
            bundle.apply_file(path)?;
        }
        for pair in &self.set {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::InvalidParam(format!("--set expects key=value, got '{pair}'"))
            })?;
            bundle.apply(key.trim(), value.trim())?;
        }
        Ok(bundle)
    }
}

/// Tracker flags shared by `track` and `bench`.
#[derive(Args)]
struct TrackerOpts {
    /// Disable one component: no-pseudo-act, no-dyn-init, no-act-cond, no-tto2.
    #[arg(long, value_name = "ABLATION")]
    ablate: Option<String>,
    /// Calibration mode: online (per segment) or offline (modal winner).
    #[arg(long, value_name = "MODE")]
    calibration: Option<String>,
    /// Use the 5x5x5 calibration grid instead of the default 5x6x6.
    #[arg(long)]
    grid_125: bool,
    /// Observation-term weight for both optimization passes.
    #[arg(long, value_name = "W")]
    tto_alpha: Option<f64>,
    /// Rigidity-term weight for both optimization passes.
    #[arg(long, value_name = "W")]
    tto_beta: Option<f64>,
    /// Iterations for both optimization passes.
    #[arg(long, value_name = "N")]
    tto_iters: Option<usize>,
    /// Learning rate for both optimization passes.
    #[arg(long, value_name = "LR")]
    tto_lr: Option<f64>,
}

impl TrackerOpts {
    fn apply(&self, bundle: &mut ConfigBundle) -> Result<()> {
        if let Some(a) = &self.ablate {
            bundle.tracker.ablation = parse_ablation(a)?;
        }
        if let Some(m) = &self.calibration {
            bundle.tracker.calibration = parse_calibration_mode(m)?;
        }
        if self.grid_125 {
            bundle.grid = cloth_track::CalibrationGrid::grid_125();
        }
        for tto in [&mut bundle.tracker.tto1, &mut bundle.tracker.tto2] {
            if let Some(v) = self.tto_alpha {
                tto.alpha = v;
            }
            if let Some(v) = self.tto_beta {
                tto.beta = v;
            }
            if let Some(v) = self.tto_iters {
                tto.iterations = v;
            }
            if let Some(v) = self.tto_lr {
                tto.learning_rate = v;
            }
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic trajectories with hidden physics and a virtual
    /// depth camera.
    Gen {
        #[command(flatten)]
        common: CommonOpts,
        /// Output directory for the trajectory files.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Scenario rng seed (shorthand for --set scenario.rng_seed=N).
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Number of trajectories.
        #[arg(long, value_name = "N")]
        trajectories: Option<usize>,
        /// Pick-and-place commands per trajectory.
        #[arg(long, value_name = "N")]
        segments: Option<usize>,
        /// Pick policy: random-edge-pick, fold-in-half, or drag.
        #[arg(long, value_name = "POLICY")]
        policy: Option<String>,
    },
    /// Grid-search simulation parameters against each trajectory's first
    /// segment.
    Calibrate {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory of generated trajectories.
        #[arg(long, value_name = "DIR")]
        trajectories: PathBuf,
        /// Use the 5x5x5 grid instead of the default 5x6x6.
        #[arg(long)]
        grid_125: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Track every trajectory into a pseudo-labeled dataset.
    Track {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        tracker: TrackerOpts,
        /// Directory of generated trajectories.
        #[arg(long, value_name = "DIR")]
        trajectories: PathBuf,
        /// Output dataset directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Also write per-substep OBJ frames here for external viewers.
        #[arg(long, value_name = "DIR")]
        dump_frames: Option<PathBuf>,
    },
    /// Score a dataset against its trajectories' ground truth.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Dataset directory written by `track`.
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
        /// Directory of the trajectories the dataset was tracked from.
        #[arg(long, value_name = "DIR")]
        trajectories: PathBuf,
        /// Chamfer convention for the report: squared (m^2) or unsquared (m).
        #[arg(long, value_name = "CONV", default_value = "squared")]
        chamfer: String,
        /// Write the per-record CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run the (method x seed) ablation matrix and emit one CSV.
    Bench {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        tracker: TrackerOpts,
        /// Number of seeds; the matrix runs every method on seeds 0..N.
        #[arg(long, value_name = "N")]
        seeds: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            let record = serde_json::json!({
                "error": {
                    "kind": e.kind(),
                    "message": e.to_string(),
                    "exit_code": e.exit_code(),
                }
            });
            eprintln!("{record}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { common, out, seed, trajectories, segments, policy } => {
            let mut bundle = common.bundle()?;
            if let Some(s) = seed {
                bundle.scenario.rng_seed = s;
            }
            if let Some(n) = trajectories {
                bundle.scenario.num_trajectories = n;
            }
            if let Some(n) = segments {
                bundle.scenario.segments_per_trajectory = n;
            }
            if let Some(p) = &policy {
                bundle.scenario.policy = parse_policy(p)?;
            }
            let generated = generate_synthetic_trajectories(&bundle.scenario)?;
            write_trajectories(&out, &bundle.scenario, &generated)?;
            eprintln!(
                "wrote {} trajectories ({} segments each) to {}",
                generated.len(),
                bundle.scenario.segments_per_trajectory,
                out.display()
            );
            Ok(())
        }

        Command::Calibrate { common, trajectories, grid_125, out } => {
            let mut bundle = common.bundle()?;
            if grid_125 {
                bundle.grid = cloth_track::CalibrationGrid::grid_125();
            }
            let (scenario, trajs) = read_trajectories(&trajectories)?;
            let mesh = scenario.mesh()?;
            let camera = scenario.camera();
            let mut report = Vec::new();
            for (t, traj) in trajs.iter().enumerate() {
                let segment = traj
                    .segments
                    .first()
                    .ok_or(Error::EmptyInput("trajectory segments"))?;
                let final_obs = segment
                    .observations
                    .last()
                    .ok_or(Error::EmptyInput("segment observations"))?;
                let outcome = calibrate(
                    &mesh,
                    &traj.initial_state,
                    &segment.actions,
                    final_obs,
                    &bundle.grid,
                    &bundle.base_params,
                    &camera,
                    bundle.tracker.explosion_threshold,
                )?;
                report.push(serde_json::json!({
                    "trajectory": t,
                    "winner_index": outcome.winner_index,
                    "all_exploded": outcome.all_exploded,
                    "objective": outcome.objectives[outcome.winner_index],
                    "params": {
                        "stiffness": outcome.params.stiffness,
                        "dynamic_friction": outcome.params.dynamic_friction,
                        "particle_friction": outcome.params.particle_friction,
                    },
                }));
            }
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::InvalidParam(format!("report serialization: {e}")))?;
            emit(out.as_deref(), &text)
        }

        Command::Track { common, tracker, trajectories, out, dump_frames } => {
            let mut bundle = common.bundle()?;
            tracker.apply(&mut bundle)?;
            bundle.tracker.validate()?;
            bundle.grid.validate()?;
            let (scenario, trajs) = read_trajectories(&trajectories)?;
            let mesh = scenario.mesh()?;
            let camera = scenario.camera();
            let dataset = generate_pseudo_dataset(
                &mesh,
                &trajs,
                &bundle.tracker,
                &bundle.grid,
                &bundle.base_params,
                &camera,
            )?;
            dataset.write(&mesh, &out)?;
            write_diagnostics_jsonl(&dataset, &out)?;
            eprintln!(
                "tracked {} records ({} partial) with method {} into {}",
                dataset.records.len(),
                dataset.records.iter().filter(|r| r.partial).count(),
                ablation_label(bundle.tracker.ablation),
                out.display()
            );
            if let Some(frames_dir) = dump_frames {
                dump_frame_sequences(&dataset, &trajs, &mesh, &camera, &bundle, &frames_dir)?;
                eprintln!("frame sequences written to {}", frames_dir.display());
            }
            Ok(())
        }

        Command::Eval { common, dataset, trajectories, chamfer, out } => {
            let _ = common.bundle()?; // validate overrides even if unused
            let squared = match chamfer.as_str() {
                "squared" => true,
                "unsquared" => false,
                other => {
                    return Err(Error::InvalidParam(format!(
                        "unknown Chamfer convention '{other}' (expected squared or unsquared)"
                    )));
                }
            };
            let (mesh, data) = PseudoLabelDataset::read(&dataset)?;
            let (_, trajs) = read_trajectories(&trajectories)?;
            let camera = data.provenance.camera.clone();
            let report = evaluate_with(
                &mesh,
                &data,
                &trajs,
                &camera,
                DEFAULT_COLLISION_THRESHOLD,
                squared,
            )?;
            let method = ablation_label(data.provenance.tracker.ablation);
            let csv = prepend_method_column(&report.to_csv(), method);
            eprintln!("method: {method}");
            eprint!("{}", report.summary());
            emit(out.as_deref(), &csv)
        }

        Command::Bench { common, tracker, seeds, out } => {
            let mut bundle = common.bundle()?;
            tracker.apply(&mut bundle)?;
            bundle.tracker.validate()?;
            bundle.grid.validate()?;
            if seeds == 0 {
                return Err(Error::InvalidParam("--seeds must be at least 1".into()));
            }
            let seed_list: Vec<u64> = (0..seeds as u64).collect();
            let started = std::time::Instant::now();
            let report = run_bench(
                &seed_list,
                &bundle.scenario,
                &bundle.tracker,
                &bundle.grid,
                &bundle.base_params,
            )?;
            eprintln!(
                "bench matrix ({} cells) finished in {:.1}s",
                report.cells.len(),
                started.elapsed().as_secs_f64()
            );
            emit(out.as_deref(), &report.to_csv())
        }
    }
}

/// Prints to stdout, or writes to `path` when given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Error::io(p, e))?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

/// One diagnostics line per record, machine-readable.
fn write_diagnostics_jsonl(dataset: &PseudoLabelDataset, dir: &Path) -> Result<()> {
    let mut lines = String::new();
    for record in &dataset.records {
        let line = serde_json::json!({
            "trajectory": record.trajectory,
            "segment": record.segment,
            "partial": record.partial,
            "chamfer_pre_tto2": record.diagnostics.chamfer_pre_tto2,
            "chamfer_final": record.diagnostics.chamfer_final,
            "line_search_retries": record.diagnostics.line_search_retries,
            "tto_warnings": record.diagnostics.tto_warnings,
            "wall_time_s": record.diagnostics.wall_time_s,
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
    }
    let path = dir.join("diagnostics.jsonl");
    std::fs::write(&path, lines).map_err(|e| Error::io(&path, e))
}

/// Adds a leading `method` column so rows stay labeled when CSVs from
/// different runs are concatenated.
fn prepend_method_column(csv: &str, method: &str) -> String {
    let mut out = String::with_capacity(csv.len() + 16 * csv.lines().count());
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            out.push_str("method,");
        } else {
            out.push_str(method);
            out.push(',');
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Re-tracks each segment record with its stored parameters and writes the
/// per-substep states as an OBJ sequence (tracking is deterministic, so the
/// frames reproduce exactly what the dataset recorded).
fn dump_frame_sequences(
    dataset: &PseudoLabelDataset,
    trajs: &[cloth_track::Trajectory],
    mesh: &cloth_track::ClothMesh,
    camera: &cloth_track::CameraModel,
    bundle: &ConfigBundle,
    frames_dir: &Path,
) -> Result<()> {
    for (i, record) in dataset.records.iter().enumerate() {
        let Some(si) = record.segment else { continue };
        if record.partial {
            eprintln!(
                "skipping frames for trajectory {} segment {si} (partial)",
                record.trajectory
            );
            continue;
        }
        // The segment started from the previous record's mesh.
        let initial = &dataset.records[i - 1].mesh_state;
        let traj = trajs.get(record.trajectory).ok_or(Error::DimensionMismatch {
            context: "record trajectory id vs trajectories",
            expected: trajs.len(),
            got: record.trajectory,
        })?;
        let segment = traj.segments.get(si).ok_or(Error::DimensionMismatch {
            context: "record segment index vs trajectory segments",
            expected: traj.segments.len(),
            got: si,
        })?;
        let result = track_segment(
            mesh,
            initial,
            &segment.actions,
            &segment.observations,
            &record.params,
            &bundle.tracker,
            camera,
        )?;
        let seq_dir =
            frames_dir.join(format!("traj{:03}_seg{:02}", record.trajectory, si));
        std::fs::create_dir_all(&seq_dir).map_err(|e| Error::io(&seq_dir, e))?;
        for (step, state) in result.states.iter().enumerate() {
            obj::write_state(&seq_dir.join(format!("step{step:03}.obj")), mesh, state)?;
        }
        obj::write_state(&seq_dir.join("final.obj"), mesh, &result.final_state)?;
    }
    Ok(())
}
