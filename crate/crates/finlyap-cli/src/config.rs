//! The run configuration schema, shared by the `--config` JSON file and
//! the command-line flags. Every field is optional so values can come
//! from either source; flags override file values field by field, and the
//! merged result is echoed in the report envelope so a run can be
//! reproduced from its own output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// All knobs a run can take. Unknown keys in a config file are rejected
/// before anything executes. Fields left unset after merging fall back to
/// the defaults documented on the corresponding flags; the values
/// actually used are written back into the echoed copy.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // -- problem selection --------------------------------------------------
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub system_params: BTreeMap<String, f64>,
    /// Matrix parameters as row-major nested arrays.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub system_matrices: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metric_params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metric_matrices: BTreeMap<String, Vec<Vec<f64>>>,
    /// Region literal: `[a,b]` (every coordinate), `[a,b]x[c,d]` (one
    /// interval per coordinate), or `ball:R`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,

    // -- sampling plan ------------------------------------------------------
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,

    // -- engine selection and thresholds ------------------------------------
    /// `region`, `measure`, or `lmi`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    /// Required comparison behavior: `is`, `ias`, or `ies`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_min: Option<f64>,
    /// Matrix-measure norm: `one`, `two`, or `inf`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_matrix: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_rate: Option<f64>,

    // -- invariance-principle extras ----------------------------------------
    /// Coordinates whose squared displacement forms the decay bound
    /// (default: all of them).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_coords: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_threshold: Option<f64>,

    // -- distance and decay -------------------------------------------------
    /// `euclidean`, `circle`, or `torus`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Measure with the shift-blind pseudo-distance of a horizontal
    /// metric instead of the plain induced distance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pseudo: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_steps: Option<usize>,

    // -- property audit -----------------------------------------------------
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,

    // -- scenarios ----------------------------------------------------------
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,

    // -- process ------------------------------------------------------------
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl RunConfig {
    /// Load and schema-check a JSON config file.
    pub fn from_file(path: &Path) -> Result<RunConfig, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("config file {} does not match the schema: {e}", path.display()))
    }

    /// Overlay `flags` on top of `self`: any value present in `flags`
    /// wins, and parameter maps merge key-wise with flag entries
    /// overriding file entries.
    pub fn merged_with(mut self, flags: RunConfig) -> RunConfig {
        // One line per optional field; maps are handled below.
        macro_rules! overlay {
            ($($field:ident),* $(,)?) => {
                $(if flags.$field.is_some() { self.$field = flags.$field; })*
            };
        }
        overlay!(
            system, metric, region, seed, grid, random, delta_samples, times, engine, mode,
            rate_min, norm, c_min, p_matrix, q_matrix, q_rate, alpha_coords, probes, horizon,
            decay_threshold, space, dim, from, to, segments, max_iters, tol, pseudo, t_max,
            t_steps, samples, scenario, out, threads,
        );
        self.system_params.extend(flags.system_params);
        self.system_matrices.extend(flags.system_matrices);
        self.metric_params.extend(flags.metric_params);
        self.metric_matrices.extend(flags.metric_matrices);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values_and_merge_parameter_maps() {
        let mut file = RunConfig::default();
        file.system = Some(String::from("kuramoto"));
        file.seed = Some(3);
        file.system_params.insert(String::from("n"), 4.0);
        file.system_params.insert(String::from("kept"), 1.0);

        let mut flags = RunConfig::default();
        flags.seed = Some(11);
        flags.system_params.insert(String::from("n"), 6.0);

        let merged = file.merged_with(flags);
        assert_eq!(merged.system.as_deref(), Some("kuramoto"));
        assert_eq!(merged.seed, Some(11));
        assert_eq!(merged.system_params.get("n"), Some(&6.0));
        assert_eq!(merged.system_params.get("kept"), Some(&1.0));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>("{\"no_such_knob\": 1}");
        assert!(err.is_err());
    }

    #[test]
    fn unset_fields_are_omitted_from_the_echoed_config() {
        let text = serde_json::to_string(&RunConfig::default()).expect("serialize");
        assert_eq!(text, "{}");
    }
}
