//! Scenario configuration: a flat JSON document with strict validation.
//! Unknown keys are rejected; cross-field rules are checked after parsing
//! and report the offending field by name.

use std::path::PathBuf;

use serde::Deserialize;

use qtr_core::algorithms::VqeVariant;
use qtr_core::qpu::{LatencyModel, NoiseParams};
use qtr_core::runtime::ExecMode;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Ipe,
    Qpe,
    Vqe,
    Ensemble,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Ipe => "ipe",
            Scenario::Qpe => "qpe",
            Scenario::Vqe => "vqe",
            Scenario::Ensemble => "ensemble",
        }
    }

    fn is_phase(&self) -> bool {
        !matches!(self, Scenario::Vqe)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

impl From<Mode> for ExecMode {
    fn from(mode: Mode) -> ExecMode {
        match mode {
            Mode::Sync => ExecMode::Sync,
            Mode::Async => ExecMode::Async,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    TwoAncilla,
    SingleAncilla,
}

impl From<Variant> for VqeVariant {
    fn from(v: Variant) -> VqeVariant {
        match v {
            Variant::TwoAncilla => VqeVariant::TwoAncilla,
            Variant::SingleAncilla => VqeVariant::SingleAncilla,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum LatencySpec {
    Preset(String),
    Fields(LatencyFields),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyFields {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub t_init: Option<f64>,
    #[serde(default)]
    pub t_gate: Option<f64>,
    #[serde(default)]
    pub t_meas: Option<f64>,
    #[serde(default)]
    pub t_submit: Option<f64>,
    #[serde(default)]
    pub t_return: Option<f64>,
    #[serde(default)]
    pub jitter_frac: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub p_depol_per_gate: Option<f64>,
    #[serde(default)]
    pub p_readout_flip: Option<f64>,
    #[serde(default)]
    pub p_inject: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub c_x: f64,
    pub c_y: f64,
}

/// The raw scenario document as written on disk.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub phi: Option<String>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub devices: Option<usize>,
    #[serde(default)]
    pub latency: Option<LatencySpec>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cost: Option<CostSpec>,
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub max_retries: Option<u32>,
    #[serde(default)]
    pub variant: Option<Variant>,
    #[serde(default)]
    pub exact_expectation: Option<bool>,
    #[serde(default)]
    pub ensemble_k: Option<usize>,
    #[serde(default)]
    pub classical_cost: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }
}

/// A validated, fully defaulted scenario description.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub scenario: Scenario,
    pub phi: String,
    pub shots: u64,
    pub mode: ExecMode,
    pub devices: usize,
    pub latency: LatencyModel,
    pub noise: NoiseParams,
    pub p_inject: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cost: (f64, f64),
    pub grid_points: usize,
    pub max_retries: u32,
    pub variant: VqeVariant,
    pub exact_expectation: bool,
    pub ensemble_k: usize,
    pub classical_cost: f64,
}

fn config_err(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

fn resolve_latency(spec: &Option<LatencySpec>) -> Result<LatencyModel, CliError> {
    match spec {
        None => Ok(LatencyModel::tight()),
        Some(LatencySpec::Preset(name)) => LatencyModel::preset(name)
            .ok_or_else(|| config_err(format!("field `latency`: unknown preset `{name}`"))),
        Some(LatencySpec::Fields(fields)) => {
            let mut model = match &fields.preset {
                Some(name) => LatencyModel::preset(name).ok_or_else(|| {
                    config_err(format!("field `latency.preset`: unknown preset `{name}`"))
                })?,
                None => LatencyModel::tight(),
            };
            if let Some(v) = fields.t_init {
                model.t_init = v;
            }
            if let Some(v) = fields.t_gate {
                model.t_gate = v;
            }
            if let Some(v) = fields.t_meas {
                model.t_meas = v;
            }
            if let Some(v) = fields.t_submit {
                model.t_submit = v;
            }
            if let Some(v) = fields.t_return {
                model.t_return = v;
            }
            if let Some(v) = fields.jitter_frac {
                model.jitter_frac = v;
            }
            model
                .validate()
                .map_err(|e| config_err(format!("field `latency`: {e}")))?;
            Ok(model)
        }
    }
}

pub fn resolve(config: &ScenarioConfig) -> Result<Resolved, CliError> {
    let scenario = config.scenario;

    let phi = if scenario.is_phase() {
        let phi = config.phi.clone().ok_or_else(|| {
            config_err(format!(
                "scenario `{}` requires field `phi`",
                scenario.name()
            ))
        })?;
        if phi.is_empty() || !phi.chars().all(|c| c == '0' || c == '1') {
            return Err(config_err(format!(
                "field `phi` must be a nonempty bit string, got `{phi}`"
            )));
        }
        if phi.len() > 10 {
            return Err(config_err(format!(
                "field `phi` supports at most 10 bits, got {}",
                phi.len()
            )));
        }
        if let Some(m) = config.m {
            if m != phi.len() {
                return Err(config_err(format!(
                    "field `m` ({m}) does not match the length of `phi` ({})",
                    phi.len()
                )));
            }
        }
        phi
    } else {
        if config.phi.is_some() {
            return Err(config_err("field `phi` is not used by scenario `vqe`"));
        }
        if config.m.is_some() {
            return Err(config_err("field `m` is not used by scenario `vqe`"));
        }
        String::new()
    };

    let shots = config.shots.unwrap_or(1);
    if shots == 0 {
        return Err(config_err("field `shots` must be at least 1"));
    }
    if scenario.is_phase() && shots.is_multiple_of(2) {
        return Err(config_err(format!(
            "field `shots` must be odd for per-bit majority voting, got {shots}"
        )));
    }

    let devices = config.devices.unwrap_or(1);
    if devices == 0 {
        return Err(config_err("field `devices` must be at least 1"));
    }

    let mode = config.mode.map(ExecMode::from).unwrap_or(match scenario {
        Scenario::Qpe => ExecMode::Async,
        _ => ExecMode::Sync,
    });

    let latency = resolve_latency(&config.latency)?;

    let noise_spec = config.noise.unwrap_or_default();
    let noise = NoiseParams {
        p_depol_per_gate: noise_spec.p_depol_per_gate.unwrap_or(0.0),
        p_readout_flip: noise_spec.p_readout_flip.unwrap_or(0.0),
    };
    noise
        .validate()
        .map_err(|e| config_err(format!("field `noise`: {e}")))?;
    let p_inject = noise_spec.p_inject.unwrap_or(0.0);
    if scenario != Scenario::Vqe && p_inject != 0.0 {
        return Err(config_err("field `noise.p_inject` requires scenario `vqe`"));
    }
    if !(0.0..=1.0).contains(&p_inject) {
        return Err(config_err(format!(
            "field `noise.p_inject` must be a probability, got {p_inject}"
        )));
    }

    let cost = if scenario == Scenario::Vqe {
        let cost = config
            .cost
            .ok_or_else(|| config_err("scenario `vqe` requires field `cost`"))?;
        (cost.c_x, cost.c_y)
    } else {
        if config.cost.is_some() {
            return Err(config_err("field `cost` requires scenario `vqe`"));
        }
        for (field, present) in [
            ("grid_points", config.grid_points.is_some()),
            ("max_retries", config.max_retries.is_some()),
            ("variant", config.variant.is_some()),
            ("exact_expectation", config.exact_expectation.is_some()),
        ] {
            if present {
                return Err(config_err(format!(
                    "field `{field}` requires scenario `vqe`"
                )));
            }
        }
        (0.0, 0.0)
    };

    let grid_points = config.grid_points.unwrap_or(64);
    if scenario == Scenario::Vqe && grid_points < 4 {
        return Err(config_err(format!(
            "field `grid_points` must be at least 4, got {grid_points}"
        )));
    }

    if scenario != Scenario::Ensemble && config.ensemble_k.is_some() {
        return Err(config_err(
            "field `ensemble_k` requires scenario `ensemble`",
        ));
    }
    let ensemble_k = config.ensemble_k.unwrap_or(4);
    if ensemble_k == 0 {
        return Err(config_err("field `ensemble_k` must be at least 1"));
    }

    let classical_cost = config.classical_cost.unwrap_or(0.0);
    if !classical_cost.is_finite() || classical_cost < 0.0 {
        return Err(config_err(format!(
            "field `classical_cost` must be nonnegative, got {classical_cost}"
        )));
    }

    Ok(Resolved {
        scenario,
        phi,
        shots,
        mode,
        devices,
        latency,
        noise,
        p_inject,
        seed: config.seed,
        output_dir: config.output_dir.clone().unwrap_or_else(|| "out".into()),
        cost,
        grid_points,
        max_retries: config.max_retries.unwrap_or(1),
        variant: config
            .variant
            .map(VqeVariant::from)
            .unwrap_or(VqeVariant::TwoAncilla),
        exact_expectation: config.exact_expectation.unwrap_or(false),
        ensemble_k,
        classical_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_ipe() -> String {
        r#"{"scenario": "ipe", "phi": "101", "seed": 7}"#.to_string()
    }

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let config = ScenarioConfig::from_json(&minimal_ipe()).unwrap();
        let resolved = resolve(&config).unwrap();
        assert_eq!(resolved.phi, "101");
        assert_eq!(resolved.shots, 1);
        assert_eq!(resolved.devices, 1);
        assert_eq!(resolved.mode, ExecMode::Sync);
        assert_eq!(resolved.latency, LatencyModel::tight());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"scenario": "ipe", "phi": "1", "seed": 0, "bogus": 3}"#;
        let err = ScenarioConfig::from_json(text).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn missing_phi_names_the_field() {
        let text = r#"{"scenario": "qpe", "seed": 0}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        let err = resolve(&config).unwrap_err();
        assert!(err.to_string().contains("`phi`"), "{err}");
    }

    #[test]
    fn vqe_requires_cost_and_rejects_phi() {
        let text = r#"{"scenario": "vqe", "seed": 0}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        assert!(resolve(&config).unwrap_err().to_string().contains("`cost`"));

        let text =
            r#"{"scenario": "vqe", "seed": 0, "phi": "1", "cost": {"c_x": 1.0, "c_y": 0.0}}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        assert!(resolve(&config).unwrap_err().to_string().contains("`phi`"));
    }

    #[test]
    fn even_shots_are_rejected_for_phase_scenarios() {
        let text = r#"{"scenario": "ipe", "phi": "10", "shots": 4, "seed": 0}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        assert!(resolve(&config).unwrap_err().to_string().contains("odd"));
    }

    #[test]
    fn latency_presets_and_overrides() {
        let text = r#"{"scenario": "ipe", "phi": "1", "seed": 0, "latency": "cloud"}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        assert_eq!(resolve(&config).unwrap().latency, LatencyModel::cloud());

        let text = r#"{"scenario": "ipe", "phi": "1", "seed": 0,
                       "latency": {"preset": "cloud", "t_submit": 5.0}}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        let latency = resolve(&config).unwrap().latency;
        assert_eq!(latency.t_submit, 5.0);
        assert_eq!(latency.t_return, 1.0e4);

        let text = r#"{"scenario": "ipe", "phi": "1", "seed": 0, "latency": "warp"}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        assert!(resolve(&config).unwrap_err().to_string().contains("warp"));
    }

    #[test]
    fn mismatched_m_is_rejected() {
        let text = r#"{"scenario": "ipe", "phi": "101", "m": 4, "seed": 0}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        assert!(resolve(&config).unwrap_err().to_string().contains("`m`"));
    }

    #[test]
    fn qpe_defaults_to_async() {
        let text = r#"{"scenario": "qpe", "phi": "11", "seed": 0}"#;
        let config = ScenarioConfig::from_json(text).unwrap();
        assert_eq!(resolve(&config).unwrap().mode, ExecMode::Async);
    }
}
