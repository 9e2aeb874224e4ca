//! Scenario configuration: a TOML file with one table per module. Every key
//! is required and unknown keys are rejected.

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::campaign::{PredictorKind, SimConfig};
use crate::deployment::{Area, SiteTemplate};
use crate::handover::HandoverParams;
use crate::ml::{DtcParams, ForestParams, SvmParams};
use crate::mobility::{DatasetSpec, TimePeriodDemand};
use crate::radio::RadioParams;
use crate::{Error, Result};

/// The checked-in default scenario.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../../config/default.toml");

/// Tree depth limit; `"unlimited"` in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Depth(pub Option<usize>);

impl Serialize for Depth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(d) => s.serialize_u64(d as u64),
            None => s.serialize_str("unlimited"),
        }
    }
}

impl<'de> Deserialize<'de> for Depth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct DepthVisitor;
        impl Visitor<'_> for DepthVisitor {
            type Value = Depth;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or \"unlimited\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Depth, E> {
                usize::try_from(v)
                    .map(|d| Depth(Some(d)))
                    .map_err(|_| E::custom("depth must be >= 0"))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Depth, E> {
                Ok(Depth(Some(v as usize)))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Depth, E> {
                if v == "unlimited" {
                    Ok(Depth(None))
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(DepthVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentSection {
    pub density_per_km2: f64,
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub scn_height_m: f64,
    /// Wrap link geometry around the area edges during simulation.
    pub wrap_around: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySection {
    pub dataset_velocity_kmh: f64,
    pub horizon_ms: u64,
    pub tic_ms: u64,
    pub sample_every_tics: u64,
    pub jitter_sigma_m: f64,
    pub dataset_seed: u64,
    pub demands: Vec<TimePeriodDemand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlSection {
    pub train_fraction: f64,
    pub split_seed: u64,
    pub svm_epochs: usize,
    pub svm_learning_rate: f64,
    pub svm_regularization: f64,
    pub svm_seed: u64,
    pub dtc_max_depth: Depth,
    pub dtc_min_samples_leaf: usize,
    pub dtc_seed: u64,
    pub rfc_n_trees: usize,
    pub rfc_max_depth: Depth,
    pub rfc_max_features: usize,
    pub rfc_bootstrap: bool,
    pub rfc_seed: u64,
}

impl MlSection {
    pub fn svm(&self) -> SvmParams {
        SvmParams {
            epochs: self.svm_epochs,
            learning_rate: self.svm_learning_rate,
            regularization: self.svm_regularization,
            seed: self.svm_seed,
        }
    }

    pub fn dtc(&self) -> DtcParams {
        DtcParams {
            max_depth: self.dtc_max_depth.0,
            min_samples_leaf: self.dtc_min_samples_leaf,
            seed: self.dtc_seed,
        }
    }

    pub fn rfc(&self) -> ForestParams {
        ForestParams {
            n_trees: self.rfc_n_trees,
            max_depth: self.rfc_max_depth.0,
            min_samples_leaf: self.dtc_min_samples_leaf,
            max_features: Some(self.rfc_max_features),
            bootstrap: self.rfc_bootstrap,
            seed: self.rfc_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub velocity_kmh: f64,
    pub predictor: PredictorKind,
    pub iterations: usize,
    pub master_seed: u64,
    /// Fraction of the per-period demand simulated in each iteration.
    pub load_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub velocities_kmh: Vec<f64>,
    pub ttt_tics: Vec<u32>,
    pub predictors: Vec<PredictorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub deployment: DeploymentSection,
    pub radio: RadioParams,
    pub mobility: MobilitySection,
    pub ml: MlSection,
    pub handover: HandoverParams,
    pub simulation: SimulationSection,
    pub campaign: CampaignSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG_TOML).expect("default config is valid")
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.area()?;
        if !(self.deployment.density_per_km2 > 0.0) {
            return Err(Error::config("deployment.density_per_km2", "must be > 0"));
        }
        self.radio.validate()?;
        self.handover.validate()?;
        let m = &self.mobility;
        if m.tic_ms == 0 || m.horizon_ms % m.tic_ms != 0 {
            return Err(Error::config("mobility.horizon_ms", "must be a positive multiple of tic_ms"));
        }
        if m.demands.is_empty() {
            return Err(Error::config("mobility.demands", "at least one period is required"));
        }
        for d in &m.demands {
            d.validate()?;
        }
        if !(m.jitter_sigma_m >= 0.0) {
            return Err(Error::config("mobility.jitter_sigma_m", "must be >= 0"));
        }
        if self.simulation.iterations < 1 {
            return Err(Error::config("simulation.iterations", "must be >= 1"));
        }
        if !(self.simulation.load_scale > 0.0) {
            return Err(Error::config("simulation.load_scale", "must be > 0"));
        }
        if !(self.simulation.velocity_kmh > 0.0) {
            return Err(Error::config("simulation.velocity_kmh", "must be > 0"));
        }
        let c = &self.campaign;
        if c.velocities_kmh.is_empty() || c.ttt_tics.is_empty() || c.predictors.is_empty() {
            return Err(Error::config("campaign", "grid axes must be non-empty"));
        }
        if c.velocities_kmh.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::config("campaign.velocities_kmh", "velocities must be > 0"));
        }
        if c.ttt_tics.contains(&0) {
            return Err(Error::config("campaign.ttt_tics", "must be >= 1"));
        }
        Ok(())
    }

    pub fn area(&self) -> Result<Area> {
        Area::new(self.deployment.area_width_m, self.deployment.area_height_m)
    }

    pub fn site_template(&self) -> SiteTemplate {
        SiteTemplate {
            height: self.deployment.scn_height_m,
            tx_power_dbm: self.radio.tx_power_dbm,
            antenna_gain_dbi: self.radio.scn_antenna_gain_dbi,
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            velocity_kmh: self.mobility.dataset_velocity_kmh,
            horizon_ms: self.mobility.horizon_ms,
            tic_ms: self.mobility.tic_ms,
            sample_every_tics: self.mobility.sample_every_tics,
            jitter_sigma_m: self.mobility.jitter_sigma_m,
        }
    }

    /// Single-simulation settings from the `[simulation]` table.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            area: self.area()?,
            density_per_km2: self.deployment.density_per_km2,
            wrap_around: self.deployment.wrap_around,
            site: self.site_template(),
            velocity_kmh: self.simulation.velocity_kmh,
            predictor: self.simulation.predictor,
            horizon_ms: self.mobility.horizon_ms,
            tic_ms: self.mobility.tic_ms,
            iterations: self.simulation.iterations,
            master_seed: self.simulation.master_seed,
            load_scale: self.simulation.load_scale,
            radio: self.radio,
            handover: self.handover,
            demands: self.mobility.demands.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_reference_parameters() {
        let c = ScenarioConfig::default();
        assert_eq!(c.deployment.density_per_km2, 50.0);
        assert_eq!(c.radio.communication_range_m, 300.0);
        assert_eq!(c.radio.sinr_min_db, -7.0);
        assert_eq!(c.handover.hysteresis_db, 3.0);
        assert_eq!(c.handover.exec_time_tics, 25);
        assert_eq!(c.handover.history_len, 10);
        assert_eq!(c.mobility.tic_ms, 10);
        assert_eq!(c.mobility.horizon_ms, 70_000);
        assert_eq!(c.mobility.demands[0].counts, [1400, 400, 200]);
        assert_eq!(c.ml.dtc_max_depth, Depth(None));
    }

    #[test]
    fn missing_key_is_named() {
        let text = DEFAULT_CONFIG_TOML.replace("noise_figure_db = 7.0\n", "");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("noise_figure_db"), "{err}");
        assert!(err.is_usage());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = DEFAULT_CONFIG_TOML.replace("[radio]\n", "[radio]\nnoise_figure = 7.0\n");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("noise_figure"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ScenarioConfig::default();
        assert_eq!(ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn depth_accepts_integer() {
        let text = DEFAULT_CONFIG_TOML.replace("dtc_max_depth = \"unlimited\"", "dtc_max_depth = 3");
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap().ml.dtc_max_depth, Depth(Some(3)));
        let bad = DEFAULT_CONFIG_TOML.replace("dtc_max_depth = \"unlimited\"", "dtc_max_depth = \"deep\"");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn horizon_must_be_tic_multiple() {
        let text = DEFAULT_CONFIG_TOML.replace("horizon_ms = 70000", "horizon_ms = 70005");
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
    }
}
