//! Configuration schema, defaults, and validation.
//!
//! The config file is TOML. Every field has a default: device capacities,
//! storage ratings, prices, and carbon intensities default to the published
//! microgrid parameter set; everything the source material leaves open
//! (efficiency polynomials, SOC limits, penalty factors, network sizes) is a
//! synthetic fixture default and is expected to be overridden per experiment.
//! Unknown keys are rejected so typos fail loudly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{BatteryHealth, ChpParams, EfficiencyPolynomial, StorageParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_seed() -> u64 {
    42
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Root seed; all per-component streams are derived from it.
    pub seed: u64,
    /// Step length in hours.
    pub dt_hours: f64,
    pub pricing: PricingConfig,
    pub penalties: PenaltyConfig,
    pub grid: GridConfig,
    pub devices: DeviceConfig,
    pub renewables: RenewableConfig,
    pub storage: StorageConfig,
    pub td3: Td3Config,
    pub gan: GanTrainConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            dt_hours: default_dt(),
            pricing: PricingConfig::default(),
            penalties: PenaltyConfig::default(),
            grid: GridConfig::default(),
            devices: DeviceConfig::default(),
            renewables: RenewableConfig::default(),
            storage: StorageConfig::default(),
            td3: Td3Config::default(),
            gan: GanTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PricingConfig {
    /// Natural gas price in $/m3.
    pub gas_price_per_m3: f64,
    /// Calorific value used to convert gas volume to energy, kWh/m3.
    pub calorific_value_kwh_per_m3: f64,
    /// Carbon tax in $/kg CO2.
    pub carbon_tax_per_kg: f64,
    /// CO2 intensity of purchased electricity, kg/kWh.
    pub carbon_intensity_electric: f64,
    /// CO2 intensity of purchased gas, kg/kWh.
    pub carbon_intensity_gas: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            gas_price_per_m3: 0.35,
            calorific_value_kwh_per_m3: 9.7,
            carbon_tax_per_kg: 0.0316,
            carbon_intensity_electric: 0.683,
            carbon_intensity_gas: 0.245,
        }
    }
}

impl PricingConfig {
    /// Effective gas price in $/kWh.
    pub fn gas_price_per_kwh(&self) -> f64 {
        self.gas_price_per_m3 / self.calorific_value_kwh_per_m3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// $/kWh of unmet or surplus electric energy.
    pub electric: f64,
    pub heat: f64,
    pub cold: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            electric: 1.0,
            heat: 1.0,
            cold: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub p_grid_max_kw: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            p_grid_max_kw: 5000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterConfig {
    pub rated_kw: f64,
    pub min_kw: f64,
    /// Polynomial coefficients K_0..K_n of efficiency vs load ratio.
    pub efficiency: Vec<f64>,
    pub min_load_ratio: f64,
}

impl Default for ConverterConfig {
    // Deliberately unusable: a partially specified converter must restate
    // its rating and polynomial, and validation rejects the zero rating.
    fn default() -> Self {
        Self::new(0.0, Vec::new())
    }
}

impl ConverterConfig {
    fn new(rated_kw: f64, efficiency: Vec<f64>) -> Self {
        Self {
            rated_kw,
            min_kw: 0.0,
            efficiency,
            min_load_ratio: 0.05,
        }
    }

    pub fn polynomial(&self) -> EfficiencyPolynomial {
        EfficiencyPolynomial::new(self.efficiency.clone(), self.rated_kw, self.min_load_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChpConfig {
    pub rated_kw: f64,
    pub min_kw: f64,
    pub electric_efficiency: Vec<f64>,
    pub heat_to_electric: Vec<f64>,
    pub min_load_ratio: f64,
}

impl Default for ChpConfig {
    fn default() -> Self {
        Self {
            rated_kw: 1200.0,
            min_kw: 0.0,
            electric_efficiency: vec![0.35],
            heat_to_electric: vec![1.3],
            min_load_ratio: 0.05,
        }
    }
}

impl ChpConfig {
    pub fn params(&self) -> ChpParams {
        ChpParams {
            electric_efficiency: EfficiencyPolynomial::new(
                self.electric_efficiency.clone(),
                self.rated_kw,
                self.min_load_ratio,
            ),
            heat_to_electric: EfficiencyPolynomial::new(
                self.heat_to_electric.clone(),
                self.rated_kw,
                self.min_load_ratio,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub chp: ChpConfig,
    pub gb: ConverterConfig,
    pub ec: ConverterConfig,
    pub ac: ConverterConfig,
    /// Upper bound for COP-style efficiencies during validation.
    pub cop_cap: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            chp: ChpConfig::default(),
            gb: ConverterConfig::new(2500.0, vec![0.9]),
            ec: ConverterConfig::new(4000.0, vec![3.0]),
            ac: ConverterConfig::new(2500.0, vec![0.7]),
            cop_cap: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenewableConfig {
    pub wt_rated_kw: f64,
    pub pv_rated_kw: f64,
}

impl Default for RenewableConfig {
    fn default() -> Self {
        Self {
            wt_rated_kw: 500.0,
            pv_rated_kw: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageUnitConfig {
    pub capacity_kwh: f64,
    pub decay: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub p_ch_max_kw: f64,
    pub p_dis_max_kw: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
}

impl Default for StorageUnitConfig {
    fn default() -> Self {
        Self::table(1200.0)
    }
}

impl StorageUnitConfig {
    fn table(capacity_kwh: f64) -> Self {
        Self {
            capacity_kwh,
            decay: 0.999,
            eta_ch: 0.95,
            eta_dis: 0.95,
            p_ch_max_kw: 500.0,
            p_dis_max_kw: 500.0,
            soc_min: 0.1,
            soc_max: 0.9,
            soc_init: 0.5,
        }
    }

    pub fn params(&self) -> StorageParams {
        StorageParams {
            capacity_kwh: self.capacity_kwh,
            decay: self.decay,
            eta_ch: self.eta_ch,
            eta_dis: self.eta_dis,
            p_ch_max: self.p_ch_max_kw,
            p_dis_max: self.p_dis_max_kw,
            soc_min: self.soc_min,
            soc_max: self.soc_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryHealthConfig {
    pub soh_initial: f64,
    pub soh_end: f64,
    pub cycle_life_80: f64,
}

impl Default for BatteryHealthConfig {
    fn default() -> Self {
        Self {
            soh_initial: 1.0,
            soh_end: 0.8,
            cycle_life_80: 4000.0,
        }
    }
}

impl BatteryHealthConfig {
    pub fn health(&self) -> BatteryHealth {
        BatteryHealth::new(self.soh_initial, self.soh_end, self.cycle_life_80)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub ess: StorageUnitConfig,
    pub ess_health: BatteryHealthConfig,
    pub tss: StorageUnitConfig,
    pub css: StorageUnitConfig,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            ess: StorageUnitConfig::table(1200.0),
            ess_health: BatteryHealthConfig::default(),
            tss: StorageUnitConfig::table(800.0),
            css: StorageUnitConfig::table(1200.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Config {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub tau: f64,
    pub smoothing_sigma: f64,
    pub smoothing_clip: f64,
    pub policy_delay: usize,
    /// Exploration noise std, in normalized action units.
    pub exploration_noise: f64,
    /// No gradient updates until the buffer holds this many transitions.
    pub warmup: usize,
    /// Rewards are multiplied by this factor inside the learner; reported
    /// returns stay in dollars.
    pub reward_scale: f64,
    pub hidden_dims: Vec<usize>,
    pub updates_per_step: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            actor_lr: 5e-6,
            critic_lr: 5e-5,
            gamma: 0.95,
            batch_size: 256,
            buffer_capacity: 36000,
            tau: 0.001,
            smoothing_sigma: 0.2,
            smoothing_clip: 0.5,
            policy_delay: 2,
            exploration_noise: 0.1,
            warmup: 1000,
            reward_scale: 1.0,
            hidden_dims: vec![128, 128],
            updates_per_step: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanTrainConfig {
    pub noise_dim: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_dims: Vec<usize>,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            noise_dim: 32,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 32,
            epochs: 2000,
            hidden_dims: vec![256, 256, 256],
        }
    }
}

impl SystemConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SystemConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.dt_hours > 0.0) {
            return inv(format!("dt_hours must be positive, got {}", self.dt_hours));
        }
        let chp = self.devices.chp.params();
        chp.electric_efficiency
            .validate(1.0, "devices.chp.electric_efficiency")
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        chp.heat_to_electric
            .validate(self.devices.cop_cap, "devices.chp.heat_to_electric")
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.devices
            .gb
            .polynomial()
            .validate(1.0, "devices.gb.efficiency")
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.devices
            .ec
            .polynomial()
            .validate(self.devices.cop_cap, "devices.ec.efficiency")
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.devices
            .ac
            .polynomial()
            .validate(self.devices.cop_cap, "devices.ac.efficiency")
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (unit, name) in [
            (&self.storage.ess, "storage.ess"),
            (&self.storage.tss, "storage.tss"),
            (&self.storage.css, "storage.css"),
        ] {
            unit.params()
                .validate(name)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !(unit.soc_min <= unit.soc_init && unit.soc_init <= unit.soc_max) {
                return inv(format!(
                    "{name}.soc_init {} outside [{}, {}]",
                    unit.soc_init, unit.soc_min, unit.soc_max
                ));
            }
        }
        let h = &self.storage.ess_health;
        if !(h.soh_initial > h.soh_end && h.soh_end > 0.0) {
            return inv(format!(
                "storage.ess_health: need soh_initial > soh_end > 0, got {} / {}",
                h.soh_initial, h.soh_end
            ));
        }
        if !(h.cycle_life_80 > 0.0) {
            return inv("storage.ess_health.cycle_life_80 must be positive".into());
        }
        let td3 = &self.td3;
        if !(td3.gamma >= 0.0 && td3.gamma < 1.0) {
            return inv(format!("td3.gamma must be in [0, 1), got {}", td3.gamma));
        }
        if !(td3.tau > 0.0 && td3.tau <= 1.0) {
            return inv(format!("td3.tau must be in (0, 1], got {}", td3.tau));
        }
        if !(td3.smoothing_sigma >= 0.0 && td3.smoothing_clip > 0.0) {
            return inv("td3 smoothing noise: sigma >= 0 and clip > 0 required".into());
        }
        if td3.policy_delay == 0 {
            return inv("td3.policy_delay must be >= 1".into());
        }
        if td3.warmup > td3.buffer_capacity {
            return inv(format!(
                "td3.warmup {} exceeds buffer capacity {}",
                td3.warmup, td3.buffer_capacity
            ));
        }
        if td3.batch_size == 0 || td3.updates_per_step == 0 {
            return inv("td3 batch_size and updates_per_step must be >= 1".into());
        }
        if self.gan.noise_dim == 0 {
            return inv("gan.noise_dim must be >= 1".into());
        }
        if self.gan.batch_size == 0 {
            return inv("gan.batch_size must be >= 1".into());
        }
        for (v, name) in [
            (self.grid.p_grid_max_kw, "grid.p_grid_max_kw"),
            (self.renewables.wt_rated_kw, "renewables.wt_rated_kw"),
            (self.renewables.pv_rated_kw, "renewables.pv_rated_kw"),
            (self.pricing.calorific_value_kwh_per_m3, "pricing.calorific_value_kwh_per_m3"),
        ] {
            if !(v > 0.0) {
                return inv(format!("{name} must be positive, got {v}"));
            }
        }
        for (v, name) in [
            (self.pricing.gas_price_per_m3, "pricing.gas_price_per_m3"),
            (self.pricing.carbon_tax_per_kg, "pricing.carbon_tax_per_kg"),
            (self.penalties.electric, "penalties.electric"),
            (self.penalties.heat, "penalties.heat"),
            (self.penalties.cold, "penalties.cold"),
        ] {
            if v < 0.0 {
                return inv(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }
}
