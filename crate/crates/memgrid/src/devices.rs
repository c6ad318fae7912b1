//! Energy-conversion device models and storage stepping.
//!
//! Every converter (CHP, gas boiler, electric chiller, absorption chiller)
//! shares the same off-design form: efficiency is a polynomial in the load
//! ratio `output / rated`. Below a configurable minimum load ratio the device
//! is treated as switched off, because the fitted polynomials are not trusted
//! near zero load.
//!
//! All functions here are pure; storage state is passed in and returned by
//! value, so they are safe to call from multiple threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("requested output {requested} kW exceeds rated capacity {rated} kW")]
    CapacityExceeded { requested: f64, rated: f64 },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("negative power request: {0}")]
    NegativePower(&'static str),
    #[error("simultaneous charge ({charge} kW) and discharge ({discharge} kW)")]
    SimultaneousChargeDischarge { charge: f64, discharge: f64 },
    #[error("infeasible storage request: resulting soc {soc} outside [{lo}, {hi}]")]
    InfeasibleStorageRequest { soc: f64, lo: f64, hi: f64 },
    #[error("charge power {requested} kW exceeds limit {max} kW")]
    ChargeLimit { requested: f64, max: f64 },
    #[error("discharge power {requested} kW exceeds limit {max} kW")]
    DischargeLimit { requested: f64, max: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Efficiency (or COP) as a polynomial in the load ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPolynomial {
    /// Coefficients K_0..K_n of the load-ratio polynomial.
    pub coefficients: Vec<f64>,
    /// Rated output capacity in kW; the load ratio is output / rated.
    pub rated_capacity: f64,
    /// Load ratio below which the device is treated as OFF.
    pub min_load_ratio: f64,
}

impl EfficiencyPolynomial {
    pub fn new(coefficients: Vec<f64>, rated_capacity: f64, min_load_ratio: f64) -> Self {
        Self {
            coefficients,
            rated_capacity,
            min_load_ratio,
        }
    }

    /// Constant-efficiency (rated) model.
    pub fn constant(efficiency: f64, rated_capacity: f64, min_load_ratio: f64) -> Self {
        Self::new(vec![efficiency], rated_capacity, min_load_ratio)
    }

    /// The same polynomial frozen at its full-load value, used for
    /// rated-vs-off-design comparisons.
    pub fn to_rated(&self) -> Self {
        Self::constant(self.at_ratio(1.0), self.rated_capacity, self.min_load_ratio)
    }

    pub fn at_ratio(&self, x: f64) -> f64 {
        // Horner evaluation.
        self.coefficients.iter().rev().fold(0.0, |acc, k| acc * x + k)
    }

    /// Check that the evaluated efficiency stays in (0, cap] over the ON
    /// region. Sampled on a dense grid; polynomials here are low degree.
    pub fn validate(&self, cap: f64, name: &str) -> Result<(), DeviceError> {
        if self.coefficients.is_empty() {
            return Err(DeviceError::InvalidParams(format!(
                "{name}: empty coefficient list"
            )));
        }
        if !(self.rated_capacity > 0.0) {
            return Err(DeviceError::InvalidParams(format!(
                "{name}: rated capacity must be positive, got {}",
                self.rated_capacity
            )));
        }
        if !(0.0..1.0).contains(&self.min_load_ratio) {
            return Err(DeviceError::InvalidParams(format!(
                "{name}: min load ratio must be in [0, 1), got {}",
                self.min_load_ratio
            )));
        }
        let n = 1000;
        for i in 0..=n {
            let x = self.min_load_ratio + (1.0 - self.min_load_ratio) * i as f64 / n as f64;
            let eta = self.at_ratio(x);
            if !(eta > 0.0 && eta <= cap) {
                return Err(DeviceError::InvalidParams(format!(
                    "{name}: efficiency {eta} at load ratio {x} outside (0, {cap}]"
                )));
            }
        }
        Ok(())
    }
}

/// Result of evaluating a converter: either running flows or OFF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceRun<T> {
    On(T),
    Off,
}

impl<T: Default> DeviceRun<T> {
    /// OFF maps to all-zero flows.
    pub fn flows(self) -> T {
        match self {
            DeviceRun::On(f) => f,
            DeviceRun::Off => T::default(),
        }
    }
}

/// Evaluate the load-dependent efficiency at a requested output power.
///
/// Returns `Off` when the load ratio is below the configured floor.
pub fn eval_efficiency(
    poly: &EfficiencyPolynomial,
    output_power: f64,
) -> Result<DeviceRun<f64>, DeviceError> {
    if !output_power.is_finite() {
        return Err(DeviceError::NonFinite("output_power"));
    }
    if output_power < 0.0 {
        return Err(DeviceError::NegativePower("output_power"));
    }
    if output_power > poly.rated_capacity * (1.0 + 1e-12) {
        return Err(DeviceError::CapacityExceeded {
            requested: output_power,
            rated: poly.rated_capacity,
        });
    }
    let x = output_power / poly.rated_capacity;
    if x < poly.min_load_ratio {
        return Ok(DeviceRun::Off);
    }
    Ok(DeviceRun::On(poly.at_ratio(x)))
}

/// CHP parameters: electric efficiency and heat-to-electricity ratio, both
/// polynomials in the electric load ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChpParams {
    pub electric_efficiency: EfficiencyPolynomial,
    pub heat_to_electric: EfficiencyPolynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChpFlow {
    pub gas_in: f64,
    pub heat_out: f64,
}

/// Gas in and heat out for a requested electric output.
pub fn chp_step(params: &ChpParams, p_electric: f64) -> Result<DeviceRun<ChpFlow>, DeviceError> {
    match eval_efficiency(&params.electric_efficiency, p_electric)? {
        DeviceRun::Off => Ok(DeviceRun::Off),
        DeviceRun::On(eta_e) => {
            let h2e = params
                .heat_to_electric
                .at_ratio(p_electric / params.electric_efficiency.rated_capacity);
            Ok(DeviceRun::On(ChpFlow {
                gas_in: p_electric / eta_e,
                heat_out: h2e * p_electric,
            }))
        }
    }
}

/// Gas boiler: gas in for a requested heat output.
pub fn gb_step(poly: &EfficiencyPolynomial, h_out: f64) -> Result<DeviceRun<f64>, DeviceError> {
    Ok(match eval_efficiency(poly, h_out)? {
        DeviceRun::Off => DeviceRun::Off,
        DeviceRun::On(eta) => DeviceRun::On(h_out / eta),
    })
}

/// Electric chiller: electricity in for a requested cold output.
pub fn ec_step(poly: &EfficiencyPolynomial, q_out: f64) -> Result<DeviceRun<f64>, DeviceError> {
    Ok(match eval_efficiency(poly, q_out)? {
        DeviceRun::Off => DeviceRun::Off,
        DeviceRun::On(cop) => DeviceRun::On(q_out / cop),
    })
}

/// Absorption chiller: heat in for a requested cold output.
pub fn ac_step(poly: &EfficiencyPolynomial, q_out: f64) -> Result<DeviceRun<f64>, DeviceError> {
    Ok(match eval_efficiency(poly, q_out)? {
        DeviceRun::Off => DeviceRun::Off,
        DeviceRun::On(cop) => DeviceRun::On(q_out / cop),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageParams {
    /// C_max, kWh.
    pub capacity_kwh: f64,
    /// Per-step self-decay factor in (0, 1].
    pub decay: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub p_ch_max: f64,
    pub p_dis_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl StorageParams {
    pub fn validate(&self, name: &str) -> Result<(), DeviceError> {
        let bad = |msg: String| Err(DeviceError::InvalidParams(format!("{name}: {msg}")));
        if !(self.capacity_kwh > 0.0) {
            return bad(format!("capacity must be positive, got {}", self.capacity_kwh));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay must be in (0, 1], got {}", self.decay));
        }
        for (v, n) in [(self.eta_ch, "eta_ch"), (self.eta_dis, "eta_dis")] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{n} must be in (0, 1], got {v}"));
            }
        }
        for (v, n) in [(self.p_ch_max, "p_ch_max"), (self.p_dis_max, "p_dis_max")] {
            if !(v > 0.0) {
                return bad(format!("{n} must be positive, got {v}"));
            }
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return bad(format!(
                "need 0 <= soc_min < soc_max <= 1, got [{}, {}]",
                self.soc_min, self.soc_max
            ));
        }
        Ok(())
    }
}

/// Battery health bookkeeping for the ESS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryHealth {
    pub soh: f64,
    pub soh_initial: f64,
    pub soh_end: f64,
    /// Cycle life at 80% SOH.
    pub cycle_life_80: f64,
}

impl BatteryHealth {
    pub fn new(soh_initial: f64, soh_end: f64, cycle_life_80: f64) -> Self {
        Self {
            soh: soh_initial,
            soh_initial,
            soh_end,
            cycle_life_80,
        }
    }

    pub fn end_of_life(&self) -> bool {
        self.soh <= self.soh_end
    }
}

/// Storage state: SOC, plus health for the ESS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub soc: f64,
    pub health: Option<BatteryHealth>,
}

impl StorageState {
    pub fn new(soc: f64) -> Self {
        Self { soc, health: None }
    }

    pub fn with_health(soc: f64, health: BatteryHealth) -> Self {
        Self {
            soc,
            health: Some(health),
        }
    }

    /// Effective SOC bounds: scaled by SOH for the ESS, plain for TSS/CSS.
    pub fn soc_bounds(&self, params: &StorageParams) -> (f64, f64) {
        match self.health {
            Some(h) => (params.soc_min * h.soh, params.soc_max * h.soh),
            None => (params.soc_min, params.soc_max),
        }
    }
}

const SOC_TOL: f64 = 1e-9;

/// One charge/discharge step of a storage device.
///
/// The caller is responsible for requesting only powers inside
/// [`feasible_storage_range`]; out-of-range requests are an error. Self-decay
/// alone may carry the SOC marginally below `soc_min`; that is not treated
/// as an infeasible request.
pub fn storage_step(
    state: &StorageState,
    params: &StorageParams,
    p_ch: f64,
    p_dis: f64,
    dt: f64,
) -> Result<StorageState, DeviceError> {
    if !(p_ch.is_finite() && p_dis.is_finite() && dt.is_finite()) {
        return Err(DeviceError::NonFinite("storage powers"));
    }
    if p_ch < 0.0 {
        return Err(DeviceError::NegativePower("p_ch"));
    }
    if p_dis < 0.0 {
        return Err(DeviceError::NegativePower("p_dis"));
    }
    if p_ch > 0.0 && p_dis > 0.0 {
        return Err(DeviceError::SimultaneousChargeDischarge {
            charge: p_ch,
            discharge: p_dis,
        });
    }
    if p_ch > params.p_ch_max * (1.0 + 1e-12) {
        return Err(DeviceError::ChargeLimit {
            requested: p_ch,
            max: params.p_ch_max,
        });
    }
    if p_dis > params.p_dis_max * (1.0 + 1e-12) {
        return Err(DeviceError::DischargeLimit {
            requested: p_dis,
            max: params.p_dis_max,
        });
    }
    let (lo, hi) = state.soc_bounds(params);
    let decayed = params.decay * state.soc;
    let mut soc = decayed + (params.eta_ch * p_ch - p_dis / params.eta_dis) * dt / params.capacity_kwh;
    // Decay can push the SOC below soc_min even when idle; the reachable
    // floor is therefore min(lo, decayed).
    let lo_reachable = lo.min(decayed);
    if soc > hi + SOC_TOL || soc < lo_reachable - SOC_TOL {
        return Err(DeviceError::InfeasibleStorageRequest { soc, lo, hi });
    }
    soc = soc.clamp(lo_reachable, hi);
    Ok(StorageState {
        soc,
        health: state.health,
    })
}

/// Largest charge and discharge powers that keep the next SOC within bounds
/// and within rated powers.
pub fn feasible_storage_range(
    state: &StorageState,
    params: &StorageParams,
    dt: f64,
) -> (f64, f64) {
    let (lo, hi) = state.soc_bounds(params);
    let decayed = params.decay * state.soc;
    let max_ch = ((hi - decayed) * params.capacity_kwh / (params.eta_ch * dt))
        .clamp(0.0, params.p_ch_max);
    let max_dis = ((decayed - lo) * params.capacity_kwh * params.eta_dis / dt)
        .clamp(0.0, params.p_dis_max);
    (max_ch, max_dis)
}

// Calendric aging is linear in SOC with these fitted constants.
const AGE_CAL_SLOPE: f64 = 6.6148e-6;
const AGE_CAL_INTERCEPT: f64 = 4.6404e-6;

/// Per-step aging components of the ESS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgingStep {
    pub calendric: f64,
    pub cyclic: f64,
}

impl AgingStep {
    pub fn total(&self) -> f64 {
        self.calendric + self.cyclic
    }
}

/// Compute the per-step aging increments for the post-step SOC and the
/// requested powers.
pub fn aging_increment(
    soc_after: f64,
    params: &StorageParams,
    health: &BatteryHealth,
    p_ch: f64,
    p_dis: f64,
    dt: f64,
) -> AgingStep {
    let throughput = (params.eta_ch * p_ch - p_dis / params.eta_dis).abs() * dt;
    AgingStep {
        calendric: AGE_CAL_SLOPE * soc_after + AGE_CAL_INTERCEPT,
        cyclic: 0.5 * throughput / (health.cycle_life_80 * params.capacity_kwh),
    }
}

/// Apply one step of battery aging and return the updated health.
///
/// SOH decreases by (soh_initial - soh_end) times the aging increment and is
/// clamped at soh_end.
pub fn ess_age(
    state: &StorageState,
    params: &StorageParams,
    p_ch: f64,
    p_dis: f64,
    dt: f64,
) -> BatteryHealth {
    let health = state
        .health
        .expect("ess_age requires a storage state with health");
    let age = aging_increment(state.soc, params, &health, p_ch, p_dis, dt);
    let soh = (health.soh - (health.soh_initial - health.soh_end) * age.total()).max(health.soh_end);
    BatteryHealth { soh, ..health }
}
