//! Ablation benchmark: the full method and its four ablations over a seed
//! suite, plus the two focused studies (final-pass robustness to poor
//! calibration, and rigidity's effect on self-collisions).
//!
//! Cells of the (seed × method) matrix are independent and fan out to the
//! rayon worker pool (sized via `RAYON_NUM_THREADS`); results are merged in
//! deterministic order, so a bench run is reproducible given its seeds.

use rayon::prelude::*;
use std::time::Instant;

use crate::dataset::{evaluate, Aggregate, EvalReport, DEFAULT_COLLISION_THRESHOLD};
use crate::datagen::{generate_synthetic_trajectories, ScenarioConfig};
use crate::dynamics::SimParams;
use crate::error::{Error, Result};
use crate::tracker::{
    calibrate, collision_count, generate_pseudo_dataset, track_segment, Ablation,
    CalibrationGrid, TrackerConfig,
};

/// The benchmark methods: the full tracker and each single ablation.
pub const BENCH_METHODS: [(&str, Ablation); 5] = [
    ("ours", Ablation::None),
    ("no_pseudo_action", Ablation::NoPseudoAction),
    ("no_dyn_init", Ablation::NoDynInit),
    ("no_act_cond", Ablation::NoActCond),
    ("no_tto2", Ablation::NoTto2),
];

/// One (method, seed) cell of the benchmark matrix.
#[derive(Debug, Clone)]
pub struct BenchCell {
    pub method: &'static str,
    pub seed: u64,
    pub eval: EvalReport,
    /// Sum of line-search rejections over the cell's dataset.
    pub retries_total: usize,
    /// Sum of reverted (non-finite loss) optimization runs.
    pub tto_warnings_total: usize,
    /// Dataset-generation wall time. Diagnostics only — deliberately kept
    /// out of the CSV so bench output is byte-reproducible.
    pub wall_time_s: f64,
}

/// Which per-record metric to pool across a method's cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMetric {
    /// Visible-Chamfer before the final optimization pass, m².
    PreTto2,
    /// Visible-Chamfer of the final pseudo mesh, m².
    Final,
    /// Mean per-vertex distance to synthetic ground truth, meters. Unlike
    /// the Chamfer metrics this also sees occluded regions.
    FullMesh,
}

/// The full benchmark matrix.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
}

impl BenchReport {
    /// Per-record metric values for one method, pooled across its seeds.
    ///
    /// Tracked (segment) records only — initial records are identical for
    /// every method. Partial records count: a failed segment keeps its last
    /// good state, and its score is part of how well the method labels.
    pub fn pooled(&self, method: &str, metric: BenchMetric) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.method == method)
            .flat_map(|c| c.eval.records.iter())
            .filter(|r| r.segment.is_some())
            .filter_map(|r| match metric {
                BenchMetric::PreTto2 => r.chamfer_pre_tto2,
                BenchMetric::Final => r.chamfer_final,
                BenchMetric::FullMesh => r.full_mesh_error,
            })
            .collect()
    }

    /// Median of [`BenchReport::pooled`]; `None` when nothing was tracked.
    pub fn pooled_median(&self, method: &str, metric: BenchMetric) -> Option<f64> {
        Aggregate::over(&self.pooled(method, metric)).map(|a| a.median)
    }

    /// Sum of per-record collision counts for one method across its seeds
    /// (tracked records only).
    pub fn total_collisions(&self, method: &str) -> usize {
        self.cells
            .iter()
            .filter(|c| c.method == method)
            .flat_map(|c| c.eval.records.iter())
            .filter(|r| r.segment.is_some())
            .map(|r| r.collisions)
            .sum()
    }

    /// One CSV row per (method, seed) cell, in matrix order. Deterministic
    /// given the seeds: wall times are excluded on purpose.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,seed,records,partial,chamfer_pre_tto2_mean,chamfer_pre_tto2_median,\
             chamfer_final_mean,chamfer_final_median,full_mesh_error_mean,\
             collisions_total,retries_total\n",
        );
        for cell in &self.cells {
            let agg = |a: &Option<Aggregate>, f: fn(&Aggregate) -> f64| {
                a.as_ref().map(|a| f(a).to_string()).unwrap_or_default()
            };
            let collisions: usize =
                cell.eval.records.iter().filter(|r| r.segment.is_some()).map(|r| r.collisions).sum();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                cell.method,
                cell.seed,
                cell.eval.records.len(),
                cell.eval.partial_count,
                agg(&cell.eval.chamfer_pre_tto2, |a| a.mean),
                agg(&cell.eval.chamfer_pre_tto2, |a| a.median),
                agg(&cell.eval.chamfer_final, |a| a.mean),
                agg(&cell.eval.chamfer_final, |a| a.median),
                agg(&cell.eval.full_mesh_error, |a| a.mean),
                collisions,
                cell.retries_total,
            ));
        }
        out
    }
}

/// Runs the benchmark matrix: every method of [`BENCH_METHODS`] on every
/// seed. Each cell regenerates its trajectories from the seed (identical
/// data across methods), builds a pseudo-label dataset, and scores it
/// against the synthetic ground truth.
pub fn run_bench(
    seeds: &[u64],
    scenario: &ScenarioConfig,
    tracker: &TrackerConfig,
    grid: &CalibrationGrid,
    base: &SimParams,
) -> Result<BenchReport> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("bench seeds"));
    }
    scenario.validate()?;
    tracker.validate()?;
    grid.validate()?;

    let cells: Vec<(u64, &'static str, Ablation)> = seeds
        .iter()
        .flat_map(|&seed| BENCH_METHODS.iter().map(move |&(name, abl)| (seed, name, abl)))
        .collect();

    let cells: Result<Vec<BenchCell>> = cells
        .into_par_iter()
        .map(|(seed, method, ablation)| {
            let cell_scenario = ScenarioConfig { rng_seed: seed, ..scenario.clone() };
            let mesh = cell_scenario.mesh()?;
            let camera = cell_scenario.camera();
            let trajectories = generate_synthetic_trajectories(&cell_scenario)?;
            let cell_tracker = TrackerConfig { ablation, ..tracker.clone() };

            let start = Instant::now();
            let dataset =
                generate_pseudo_dataset(&mesh, &trajectories, &cell_tracker, grid, base, &camera)?;
            let wall_time_s = start.elapsed().as_secs_f64();

            let eval =
                evaluate(&mesh, &dataset, &trajectories, &camera, DEFAULT_COLLISION_THRESHOLD)?;
            let retries_total =
                dataset.records.iter().map(|r| r.diagnostics.line_search_retries).sum();
            let tto_warnings_total =
                dataset.records.iter().map(|r| r.diagnostics.tto_warnings).sum();
            Ok(BenchCell { method, seed, eval, retries_total, tto_warnings_total, wall_time_s })
        })
        .collect();
    Ok(BenchReport { cells: cells? })
}

/// Outcome of the final-pass robustness study: how much tracking quality
/// degrades when calibration picks the median-ranked grid combination
/// instead of the best one, with and without the final optimization pass.
#[derive(Debug, Clone, Copy)]
pub struct Tto2Robustness {
    /// Mean final visible-Chamfer (m²) with best-grid parameters, final
    /// pass enabled.
    pub best_with: f64,
    /// Same with median-ranked parameters.
    pub median_with: f64,
    pub best_without: f64,
    pub median_without: f64,
}

impl Tto2Robustness {
    /// Relative degradation (median - best) / best with the final pass.
    pub fn degradation_with(&self) -> f64 {
        (self.median_with - self.best_with) / self.best_with
    }

    /// Relative degradation without the final pass.
    pub fn degradation_without(&self) -> f64 {
        (self.median_without - self.best_without) / self.best_without
    }
}

/// Per-seed sums for one (params, final-pass) arm of the robustness study.
#[derive(Debug, Clone, Copy, Default)]
struct ArmSums {
    sum: f64,
    count: usize,
}

impl ArmSums {
    fn add(&mut self, other: ArmSums) {
        self.sum += other.sum;
        self.count += other.count;
    }

    fn mean(&self, what: &'static str) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyInput(what));
        }
        Ok(self.sum / self.count as f64)
    }
}

/// Runs the final-pass robustness study over a seed suite.
///
/// Per trajectory: calibrate on the first segment, rank the grid by
/// objective, take the best and the median-ranked combination, then track
/// every segment with each combination, once with the final optimization
/// pass and once without. Scores are the tracker's final visible-Chamfer,
/// averaged per arm over all segments of all seeds.
pub fn tto2_robustness(
    seeds: &[u64],
    scenario: &ScenarioConfig,
    tracker: &TrackerConfig,
    grid: &CalibrationGrid,
    base: &SimParams,
) -> Result<Tto2Robustness> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("robustness seeds"));
    }
    scenario.validate()?;
    tracker.validate()?;
    grid.validate()?;

    // [best_with, median_with, best_without, median_without]
    let per_seed: Result<Vec<[ArmSums; 4]>> = seeds
        .par_iter()
        .map(|&seed| {
            let cell_scenario = ScenarioConfig { rng_seed: seed, ..scenario.clone() };
            let mesh = cell_scenario.mesh()?;
            let camera = cell_scenario.camera();
            let trajectories = generate_synthetic_trajectories(&cell_scenario)?;

            let mut sums = [ArmSums::default(); 4];
            for traj in &trajectories {
                let first = traj.segments.first().ok_or(Error::EmptyInput("segments"))?;
                let outcome = calibrate(
                    &mesh,
                    &traj.initial_state,
                    &first.actions,
                    first.observations.last().ok_or(Error::EmptyInput("observations"))?,
                    grid,
                    base,
                    &camera,
                    tracker.explosion_threshold,
                )?;
                let mut ranked: Vec<usize> = (0..outcome.objectives.len())
                    .filter(|&i| outcome.objectives[i].is_finite())
                    .collect();
                if ranked.is_empty() {
                    return Err(Error::InvalidParam(
                        "calibration produced no finite objectives".to_string(),
                    ));
                }
                ranked.sort_by(|&a, &b| outcome.objectives[a].total_cmp(&outcome.objectives[b]));
                let combos = grid.combos(base);
                let best = combos[ranked[0]];
                let median = combos[ranked[ranked.len() / 2]];

                for (arm, (params, with_tto2)) in
                    [(best, true), (median, true), (best, false), (median, false)]
                        .into_iter()
                        .enumerate()
                {
                    let config = TrackerConfig {
                        ablation: if with_tto2 { Ablation::None } else { Ablation::NoTto2 },
                        ..tracker.clone()
                    };
                    let mut state = traj.initial_state.clone();
                    for segment in &traj.segments {
                        match track_segment(
                            &mesh,
                            &state,
                            &segment.actions,
                            &segment.observations,
                            &params,
                            &config,
                            &camera,
                        ) {
                            Ok(result) => {
                                if result.chamfer_final.is_finite() {
                                    sums[arm]
                                        .add(ArmSums { sum: result.chamfer_final, count: 1 });
                                }
                                state = result.final_state;
                            }
                            // A lost or exploded segment stays in the score:
                            // the carried-forward state is charged against the
                            // segment's final observation, exactly like a
                            // partial dataset record. Skipping it would let
                            // the failing arm drop its hardest segments.
                            Err(Error::LostCloth | Error::Unstable { .. }) => {
                                if let Some(obs) = segment.observations.last() {
                                    if let Some(chamfer) = crate::dataset::visible_chamfer_bi(
                                        &mesh, &state, obs, &camera, true,
                                    )? {
                                        sums[arm].add(ArmSums { sum: chamfer, count: 1 });
                                    }
                                }
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
            Ok(sums)
        })
        .collect();

    let mut total = [ArmSums::default(); 4];
    for seed_sums in per_seed? {
        for (t, s) in total.iter_mut().zip(seed_sums) {
            t.add(s);
        }
    }
    Ok(Tto2Robustness {
        best_with: total[0].mean("robustness best/with scores")?,
        median_with: total[1].mean("robustness median/with scores")?,
        best_without: total[2].mean("robustness best/without scores")?,
        median_without: total[3].mean("robustness median/without scores")?,
    })
}

/// Total self-collision counts with the rigidity term enabled vs disabled.
#[derive(Debug, Clone, Copy)]
pub struct CollisionStudy {
    /// Collisions summed over tracked records, rigidity weight as given.
    pub with_rigidity: usize,
    /// Same with the rigidity weight forced to zero in both passes.
    pub without_rigidity: usize,
}

/// Runs the collision study: datasets are generated per seed with the
/// configured rigidity weight and with it forced to zero, and vertex pairs
/// closer than [`DEFAULT_COLLISION_THRESHOLD`] are summed over tracked records.
pub fn collision_study(
    seeds: &[u64],
    scenario: &ScenarioConfig,
    tracker: &TrackerConfig,
    grid: &CalibrationGrid,
    base: &SimParams,
) -> Result<CollisionStudy> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("collision-study seeds"));
    }
    scenario.validate()?;
    tracker.validate()?;
    grid.validate()?;

    let mut rigid_off = tracker.clone();
    rigid_off.tto1.beta = 0.0;
    rigid_off.tto2.beta = 0.0;

    let cells: Vec<(u64, bool)> =
        seeds.iter().flat_map(|&s| [(s, true), (s, false)]).collect();
    let counts: Result<Vec<(bool, usize)>> = cells
        .into_par_iter()
        .map(|(seed, with_rigidity)| {
            let cell_scenario = ScenarioConfig { rng_seed: seed, ..scenario.clone() };
            let mesh = cell_scenario.mesh()?;
            let camera = cell_scenario.camera();
            let trajectories = generate_synthetic_trajectories(&cell_scenario)?;
            let config = if with_rigidity { tracker } else { &rigid_off };
            let dataset =
                generate_pseudo_dataset(&mesh, &trajectories, config, grid, base, &camera)?;
            let mut total = 0usize;
            for record in dataset.records.iter().filter(|r| r.segment.is_some()) {
                total += collision_count(&mesh, &record.mesh_state, DEFAULT_COLLISION_THRESHOLD)?;
            }
            Ok((with_rigidity, total))
        })
        .collect();

    let mut study = CollisionStudy { with_rigidity: 0, without_rigidity: 0 };
    for (with_rigidity, count) in counts? {
        if with_rigidity {
            study.with_rigidity += count;
        } else {
            study.without_rigidity += count;
        }
    }
    Ok(study)
}
