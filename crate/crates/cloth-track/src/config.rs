//! Flat-key configuration: maps `section.field = value` overrides (parsed
//! by [`crate::io::kv`]) onto the concrete config structs. This is the
//! config-file surface of the command-line tool; every tunable of the
//! scenario, tracker, optimizer, simulator, and calibration grid is
//! reachable by key.

use crate::datagen::{PickPolicy, ScenarioConfig};
use crate::dynamics::SimParams;
use crate::error::{Error, Result};
use crate::optimize::TtoConfig;
use crate::tracker::{Ablation, CalibrationGrid, CalibrationMode, TrackerConfig};
use std::collections::BTreeMap;
use std::path::Path;

/// Everything the CLI can configure, with defaults matching the library.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigBundle {
    pub scenario: ScenarioConfig,
    pub tracker: TrackerConfig,
    /// Integrator settings shared by every calibration combination (the
    /// grid only varies stiffness and frictions).
    pub base_params: SimParams,
    pub grid: CalibrationGrid,
}

impl Default for ConfigBundle {
    fn default() -> Self {
        ConfigBundle {
            scenario: ScenarioConfig::default(),
            tracker: TrackerConfig::default(),
            base_params: SimParams::default(),
            grid: CalibrationGrid::default(),
        }
    }
}

pub fn parse_ablation(s: &str) -> Result<Ablation> {
    match s {
        "none" => Ok(Ablation::None),
        "no-pseudo-action" | "no-pseudo-act" => Ok(Ablation::NoPseudoAction),
        "no-dyn-init" => Ok(Ablation::NoDynInit),
        "no-act-cond" => Ok(Ablation::NoActCond),
        "no-tto2" => Ok(Ablation::NoTto2),
        other => Err(Error::InvalidParam(format!(
            "unknown ablation '{other}' (expected none, no-pseudo-act, no-dyn-init, no-act-cond, or no-tto2)"
        ))),
    }
}

/// The CLI label of an ablation (also the `method` column in reports).
pub fn ablation_label(a: Ablation) -> &'static str {
    match a {
        Ablation::None => "ours",
        Ablation::NoPseudoAction => "no_pseudo_action",
        Ablation::NoDynInit => "no_dyn_init",
        Ablation::NoActCond => "no_act_cond",
        Ablation::NoTto2 => "no_tto2",
    }
}

pub fn parse_calibration_mode(s: &str) -> Result<CalibrationMode> {
    match s {
        "online" => Ok(CalibrationMode::Online),
        "offline" => Ok(CalibrationMode::Offline),
        other => Err(Error::InvalidParam(format!(
            "unknown calibration mode '{other}' (expected online or offline)"
        ))),
    }
}

pub fn parse_policy(s: &str) -> Result<PickPolicy> {
    match s {
        "random-edge-pick" => Ok(PickPolicy::RandomEdgePick),
        "fold-in-half" => Ok(PickPolicy::FoldInHalf),
        "drag" => Ok(PickPolicy::Drag),
        "scripted" => Err(Error::InvalidParam(
            "a scripted policy needs structured commands; set it in a scenario JSON file".into(),
        )),
        other => Err(Error::InvalidParam(format!(
            "unknown pick policy '{other}' (expected random-edge-pick, fold-in-half, or drag)"
        ))),
    }
}

impl ConfigBundle {
    /// Applies every entry of a parsed key = value map.
    pub fn apply_map(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in map {
            self.apply(key, value)?;
        }
        Ok(())
    }

    /// Loads a key = value file over the current bundle.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let map = crate::io::kv::read_file(path)?;
        self.apply_map(&map)
    }

    /// Sets one dotted key. Unknown keys and unparseable values are
    /// errors — config typos never pass silently.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            Error::InvalidParam(format!("config key '{key}': cannot parse '{value}' as {what}"))
        };
        let f64v = || value.parse::<f64>().map_err(|_| bad("a number"));
        let usizev = || value.parse::<usize>().map_err(|_| bad("an unsigned integer"));
        let u64v = || value.parse::<u64>().map_err(|_| bad("an unsigned integer"));

        match key {
            // --- scenario ---
            "scenario.rng_seed" => self.scenario.rng_seed = u64v()?,
            "scenario.num_trajectories" => self.scenario.num_trajectories = usizev()?,
            "scenario.segments_per_trajectory" => {
                self.scenario.segments_per_trajectory = usizev()?
            }
            "scenario.cloth_x" => self.scenario.cloth_x = usizev()?,
            "scenario.cloth_y" => self.scenario.cloth_y = usizev()?,
            "scenario.spacing" => self.scenario.spacing = f64v()?,
            "scenario.policy" => self.scenario.policy = parse_policy(value)?,
            "scenario.substeps_per_action" => self.scenario.substeps_per_action = usizev()?,
            "scenario.lift_height" => self.scenario.lift_height = f64v()?,
            "scenario.settle_substeps" => self.scenario.settle_substeps = usizev()?,
            "scenario.gt_refinement" => self.scenario.gt_refinement = usizev()?,
            "scenario.occluder_radius" => self.scenario.occluder_radius = f64v()?,
            "scenario.depth_noise_sigma" => self.scenario.depth_noise_sigma = f64v()?,
            "scenario.dropout_rate" => self.scenario.dropout_rate = f64v()?,
            "scenario.pixel_size" => self.scenario.pixel_size = f64v()?,
            "scenario.max_pick_retries" => self.scenario.max_pick_retries = usizev()?,
            "scenario.workspace" => {
                let v = parse_list(value).map_err(|_| bad("four numbers"))?;
                if v.len() != 4 {
                    return Err(bad("four numbers (x_min x_max y_min y_max)"));
                }
                self.scenario.workspace = (v[0], v[1], v[2], v[3]);
            }

            // --- hidden (ground-truth) simulator parameters ---
            "hidden.stiffness" => self.scenario.hidden_params.stiffness = f64v()?,
            "hidden.dynamic_friction" => self.scenario.hidden_params.dynamic_friction = f64v()?,
            "hidden.particle_friction" => {
                self.scenario.hidden_params.particle_friction = f64v()?
            }
            "hidden.gravity" => self.scenario.hidden_params.gravity = f64v()?,
            "hidden.dt" => self.scenario.hidden_params.dt = f64v()?,
            "hidden.solver_iterations" => {
                self.scenario.hidden_params.solver_iterations = usizev()?
            }
            "hidden.particle_radius" => self.scenario.hidden_params.particle_radius = f64v()?,
            "hidden.damping" => self.scenario.hidden_params.damping = f64v()?,

            // --- tracker-side simulator base parameters ---
            "sim.stiffness" => self.base_params.stiffness = f64v()?,
            "sim.dynamic_friction" => self.base_params.dynamic_friction = f64v()?,
            "sim.particle_friction" => self.base_params.particle_friction = f64v()?,
            "sim.gravity" => self.base_params.gravity = f64v()?,
            "sim.dt" => self.base_params.dt = f64v()?,
            "sim.solver_iterations" => self.base_params.solver_iterations = usizev()?,
            "sim.particle_radius" => self.base_params.particle_radius = f64v()?,
            "sim.damping" => self.base_params.damping = f64v()?,

            // --- tracker ---
            "tracker.gamma" => self.tracker.gamma = f64v()?,
            "tracker.max_line_search_retries" => {
                self.tracker.max_line_search_retries = usizev()?
            }
            "tracker.explosion_threshold" => self.tracker.explosion_threshold = f64v()?,
            "tracker.calibration" => self.tracker.calibration = parse_calibration_mode(value)?,
            "tracker.ablation" => self.tracker.ablation = parse_ablation(value)?,

            // --- test-time optimization ---
            _ if key.starts_with("tto1.") => {
                apply_tto(&mut self.tracker.tto1, key, &key["tto1.".len()..], value)?
            }
            _ if key.starts_with("tto2.") => {
                apply_tto(&mut self.tracker.tto2, key, &key["tto2.".len()..], value)?
            }

            // --- calibration grid ---
            "grid.stiffness" => self.grid.stiffness = parse_list(value).map_err(|_| bad("a space-separated number list"))?,
            "grid.dynamic_friction" => {
                self.grid.dynamic_friction =
                    parse_list(value).map_err(|_| bad("a space-separated number list"))?
            }
            "grid.particle_friction" => {
                self.grid.particle_friction =
                    parse_list(value).map_err(|_| bad("a space-separated number list"))?
            }

            other => {
                return Err(Error::InvalidParam(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }
}

fn apply_tto(tto: &mut TtoConfig, full_key: &str, field: &str, value: &str) -> Result<()> {
    let bad = |what: &str| {
        Error::InvalidParam(format!(
            "config key '{full_key}': cannot parse '{value}' as {what}"
        ))
    };
    match field {
        "alpha" => tto.alpha = value.parse().map_err(|_| bad("a number"))?,
        "beta" => tto.beta = value.parse().map_err(|_| bad("a number"))?,
        "iterations" => tto.iterations = value.parse().map_err(|_| bad("an unsigned integer"))?,
        "learning_rate" => tto.learning_rate = value.parse().map_err(|_| bad("a number"))?,
        "beta1" => tto.beta1 = value.parse().map_err(|_| bad("a number"))?,
        "beta2" => tto.beta2 = value.parse().map_err(|_| bad("a number"))?,
        "epsilon" => tto.epsilon = value.parse().map_err(|_| bad("a number"))?,
        "correspondence_refresh" => {
            tto.correspondence_refresh = value.parse().map_err(|_| bad("an unsigned integer"))?
        }
        other => {
            return Err(Error::InvalidParam(format!(
                "unknown config key '{full_key}' (no TTO field '{other}')"
            )));
        }
    }
    Ok(())
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, ()> {
    let out: std::result::Result<Vec<f64>, _> =
        value.split_whitespace().map(str::parse::<f64>).collect();
    match out {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn applies_keys_across_all_sections() {
        let mut bundle = ConfigBundle::default();
        let text = "\
scenario.rng_seed = 42
scenario.cloth_x = 16
scenario.policy = fold-in-half
scenario.workspace = 0 0.4 0 0.4
hidden.stiffness = 1.3
sim.dt = 0.005
tracker.gamma = 0.5
tracker.ablation = no-tto2
tracker.calibration = offline
tto1.iterations = 50
tto2.beta = 0
grid.stiffness = 0.4 0.8 1.2
";
        let map = crate::io::kv::parse(text).unwrap();
        bundle.apply_map(&map).unwrap();

        assert_eq!(bundle.scenario.rng_seed, 42);
        assert_eq!(bundle.scenario.cloth_x, 16);
        assert_eq!(bundle.scenario.policy, PickPolicy::FoldInHalf);
        assert_eq!(bundle.scenario.workspace, (0.0, 0.4, 0.0, 0.4));
        assert_eq!(bundle.scenario.hidden_params.stiffness, 1.3);
        assert_eq!(bundle.base_params.dt, 0.005);
        assert_eq!(bundle.tracker.gamma, 0.5);
        assert_eq!(bundle.tracker.ablation, Ablation::NoTto2);
        assert_eq!(bundle.tracker.calibration, CalibrationMode::Offline);
        assert_eq!(bundle.tracker.tto1.iterations, 50);
        assert_eq!(bundle.tracker.tto2.beta, 0.0);
        assert_eq!(bundle.grid.stiffness, vec![0.4, 0.8, 1.2]);
        // Untouched fields keep their defaults.
        assert_eq!(bundle.tracker.tto1.alpha, 1.0);
        assert_eq!(bundle.scenario.cloth_y, 25);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        let mut bundle = ConfigBundle::default();
        assert!(bundle.apply("scenario.nope", "1").is_err());
        assert!(bundle.apply("tto1.nope", "1").is_err());
        assert!(bundle.apply("tracker.gamma", "fast").is_err());
        assert!(bundle.apply("scenario.workspace", "0 1 2").is_err());
        assert!(bundle.apply("grid.stiffness", "").is_err());
        assert!(bundle.apply("scenario.policy", "scripted").is_err());
    }

    #[test]
    fn labels_and_parsers_round_trip() {
        for (name, ablation) in [
            ("none", Ablation::None),
            ("no-pseudo-act", Ablation::NoPseudoAction),
            ("no-dyn-init", Ablation::NoDynInit),
            ("no-act-cond", Ablation::NoActCond),
            ("no-tto2", Ablation::NoTto2),
        ] {
            assert_eq!(parse_ablation(name).unwrap(), ablation);
        }
        assert_eq!(ablation_label(Ablation::NoActCond), "no_act_cond");
        assert!(parse_ablation("everything").is_err());
        assert_eq!(parse_calibration_mode("online").unwrap(), CalibrationMode::Online);
        assert!(parse_calibration_mode("sometimes").is_err());
    }
}
