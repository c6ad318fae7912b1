//! The dispatch MDP: actions become device setpoints, storage absorbs each
//! balance residual up to feasibility, the remainder is priced as a penalty,
//! and the reward is the negated total cost.
//!
//! The action covers the four converters plus grid purchase; storage powers
//! are not part of the action. Each carrier's residual is pushed into its
//! storage system first, so a roughly balanced action sequence incurs no
//! penalty as long as the stores have headroom.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SystemConfig;
use crate::devices::{
    self, ChpParams, DeviceError, EfficiencyPolynomial, StorageParams, StorageState,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("profile error: {0}")]
    Profile(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("device error: {0}")]
    Device(#[from] DeviceError),
    #[error("episode already terminated")]
    Terminated,
    #[error("empty scenario set")]
    EmptyScenarioSet,
}

/// Per-hour exogenous data for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayProfile {
    pub wt_kw: Vec<f64>,
    pub pv_kw: Vec<f64>,
    pub p_load_kw: Vec<f64>,
    pub h_load_kw: Vec<f64>,
    pub q_load_kw: Vec<f64>,
    pub price_e_per_kwh: Vec<f64>,
}

impl DayProfile {
    pub fn len(&self) -> usize {
        self.wt_kw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wt_kw.is_empty()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let t = self.wt_kw.len();
        if t == 0 {
            return Err(EnvError::Profile("profile has no hours".into()));
        }
        for (arr, name) in [
            (&self.pv_kw, "pv_kw"),
            (&self.p_load_kw, "p_load_kw"),
            (&self.h_load_kw, "h_load_kw"),
            (&self.q_load_kw, "q_load_kw"),
            (&self.price_e_per_kwh, "price_e_per_kwh"),
        ] {
            if arr.len() != t {
                return Err(EnvError::Profile(format!(
                    "column {name} has {} rows, expected {t}",
                    arr.len()
                )));
            }
        }
        for (arr, name, allow_negative) in [
            (&self.wt_kw, "wt_kw", false),
            (&self.pv_kw, "pv_kw", false),
            (&self.p_load_kw, "p_load_kw", false),
            (&self.h_load_kw, "h_load_kw", false),
            (&self.q_load_kw, "q_load_kw", false),
            (&self.price_e_per_kwh, "price_e_per_kwh", true),
        ] {
            for (i, v) in arr.iter().enumerate() {
                if !v.is_finite() || (!allow_negative && *v < 0.0) {
                    return Err(EnvError::Profile(format!(
                        "column {name} row {i}: invalid value {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn zeros(horizon: usize) -> Self {
        Self {
            wt_kw: vec![0.0; horizon],
            pv_kw: vec![0.0; horizon],
            p_load_kw: vec![0.0; horizon],
            h_load_kw: vec![0.0; horizon],
            q_load_kw: vec![0.0; horizon],
            price_e_per_kwh: vec![0.0; horizon],
        }
    }
}

/// Editable channel of a [`DayProfile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileChannel {
    Wt,
    Pv,
    PLoad,
    HLoad,
    QLoad,
    PriceE,
}

impl std::str::FromStr for ProfileChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "wt" => Self::Wt,
            "pv" => Self::Pv,
            "p_load" => Self::PLoad,
            "h_load" => Self::HLoad,
            "q_load" => Self::QLoad,
            "price_e" => Self::PriceE,
            other => return Err(format!("unknown profile channel {other:?}")),
        })
    }
}

/// Return an edited copy of the profile; used by the emergency-simulation
/// workflow.
pub fn perturb_profile(
    profile: &DayProfile,
    edits: &[(usize, ProfileChannel, f64)],
) -> Result<DayProfile, EnvError> {
    let mut out = profile.clone();
    for &(hour, channel, value) in edits {
        if hour >= profile.len() {
            return Err(EnvError::Profile(format!(
                "edit hour {hour} out of range 0..{}",
                profile.len()
            )));
        }
        let column = match channel {
            ProfileChannel::Wt => &mut out.wt_kw,
            ProfileChannel::Pv => &mut out.pv_kw,
            ProfileChannel::PLoad => &mut out.p_load_kw,
            ProfileChannel::HLoad => &mut out.h_load_kw,
            ProfileChannel::QLoad => &mut out.q_load_kw,
            ProfileChannel::PriceE => &mut out.price_e_per_kwh,
        };
        column[hour] = value;
    }
    out.validate()?;
    Ok(out)
}

/// The MDP state exposed to the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicrogridObservation {
    pub wt_power: f64,
    pub pv_power: f64,
    pub p_load: f64,
    pub h_load: f64,
    pub q_load: f64,
    pub price_e: f64,
    pub soc_ess: f64,
    pub soc_tss: f64,
    pub soc_css: f64,
    pub hour_index: usize,
}

/// Scheduling decision, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchAction {
    pub p_chp_kw: f64,
    pub h_gb_kw: f64,
    pub q_ec_kw: f64,
    pub q_ac_kw: f64,
    pub p_grid_kw: f64,
}

impl DispatchAction {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.p_chp_kw,
            self.h_gb_kw,
            self.q_ec_kw,
            self.q_ac_kw,
            self.p_grid_kw,
        ]
    }
}

/// Component-wise action bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBoxes {
    pub lo: [f64; 5],
    pub hi: [f64; 5],
}

impl ActionBoxes {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            lo: [
                cfg.devices.chp.min_kw,
                cfg.devices.gb.min_kw,
                cfg.devices.ec.min_kw,
                cfg.devices.ac.min_kw,
                0.0,
            ],
            hi: [
                cfg.devices.chp.rated_kw,
                cfg.devices.gb.rated_kw,
                cfg.devices.ec.rated_kw,
                cfg.devices.ac.rated_kw,
                cfg.grid.p_grid_max_kw,
            ],
        }
    }

    pub fn clamp(&self, action: &DispatchAction) -> DispatchAction {
        let a = action.as_array();
        let mut c = [0.0; 5];
        for i in 0..5 {
            c[i] = a[i].clamp(self.lo[i], self.hi[i]);
        }
        DispatchAction {
            p_chp_kw: c[0],
            h_gb_kw: c[1],
            q_ec_kw: c[2],
            q_ac_kw: c[3],
            p_grid_kw: c[4],
        }
    }
}

/// Affine map from the agent's normalized output in [-1, 1]^5 onto the
/// action boxes; the exact box edges are reachable at +-1.
pub fn denormalize_action(raw: &[f64; 5], boxes: &ActionBoxes) -> DispatchAction {
    let mut out = [0.0; 5];
    for i in 0..5 {
        let t = raw[i].clamp(-1.0, 1.0);
        out[i] = boxes.lo[i] + (t + 1.0) * 0.5 * (boxes.hi[i] - boxes.lo[i]);
    }
    DispatchAction {
        p_chp_kw: out[0],
        h_gb_kw: out[1],
        q_ec_kw: out[2],
        q_ac_kw: out[3],
        p_grid_kw: out[4],
    }
}

/// Every device input/output and storage flow of one step, in kW.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowLedger {
    pub p_chp_kw: f64,
    pub gas_chp_kw: f64,
    pub h_chp_kw: f64,
    pub h_gb_kw: f64,
    pub gas_gb_kw: f64,
    pub q_ec_kw: f64,
    pub p_ec_kw: f64,
    pub q_ac_kw: f64,
    pub h_ac_kw: f64,
    pub p_grid_kw: f64,
    pub wt_kw: f64,
    pub pv_kw: f64,
    pub ess_ch_kw: f64,
    pub ess_dis_kw: f64,
    pub tss_ch_kw: f64,
    pub tss_dis_kw: f64,
    pub css_ch_kw: f64,
    pub css_dis_kw: f64,
    pub soc_ess: f64,
    pub soc_tss: f64,
    pub soc_css: f64,
    pub soh_ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Negated total cost, $.
    pub reward: f64,
    pub energy_cost: f64,
    pub carbon_cost: f64,
    pub penalty_cost: f64,
    /// kWh bought this step.
    pub gas_purchased_kwh: f64,
    /// Signed residual left after storage slack, kWh (positive = surplus).
    pub imbalance_e_kwh: f64,
    pub imbalance_h_kwh: f64,
    pub imbalance_c_kwh: f64,
    pub ledger: FlowLedger,
    pub next_observation: MicrogridObservation,
    pub terminal: bool,
}

/// One microgrid instance: owns its storage state and steps through a
/// fixed-horizon episode. Single-threaded by design; run independent
/// instances for parallel rollouts.
#[derive(Debug, Clone)]
pub struct MicrogridEnv {
    chp: ChpParams,
    gb: EfficiencyPolynomial,
    ec: EfficiencyPolynomial,
    ac: EfficiencyPolynomial,
    ess_params: StorageParams,
    tss_params: StorageParams,
    css_params: StorageParams,
    boxes: ActionBoxes,
    price_gas: f64,
    carbon_tax: f64,
    beta_e: f64,
    beta_gas: f64,
    alpha_e: f64,
    alpha_h: f64,
    alpha_c: f64,
    dt: f64,
    initial_ess: StorageState,
    initial_tss: StorageState,
    initial_css: StorageState,
    profile: DayProfile,
    ess: StorageState,
    tss: StorageState,
    css: StorageState,
    hour: usize,
}

impl MicrogridEnv {
    pub fn new(cfg: &SystemConfig, profile: DayProfile) -> Result<Self, EnvError> {
        profile.validate()?;
        let ess = StorageState::with_health(
            cfg.storage.ess.soc_init * cfg.storage.ess_health.soh_initial,
            cfg.storage.ess_health.health(),
        );
        let tss = StorageState::new(cfg.storage.tss.soc_init);
        let css = StorageState::new(cfg.storage.css.soc_init);
        Ok(Self {
            chp: cfg.devices.chp.params(),
            gb: cfg.devices.gb.polynomial(),
            ec: cfg.devices.ec.polynomial(),
            ac: cfg.devices.ac.polynomial(),
            ess_params: cfg.storage.ess.params(),
            tss_params: cfg.storage.tss.params(),
            css_params: cfg.storage.css.params(),
            boxes: ActionBoxes::from_config(cfg),
            price_gas: cfg.pricing.gas_price_per_kwh(),
            carbon_tax: cfg.pricing.carbon_tax_per_kg,
            beta_e: cfg.pricing.carbon_intensity_electric,
            beta_gas: cfg.pricing.carbon_intensity_gas,
            alpha_e: cfg.penalties.electric,
            alpha_h: cfg.penalties.heat,
            alpha_c: cfg.penalties.cold,
            dt: cfg.dt_hours,
            initial_ess: ess,
            initial_tss: tss,
            initial_css: css,
            profile,
            ess,
            tss,
            css,
            hour: 0,
        })
    }

    /// Replace the device polynomials with their full-load constants,
    /// for rated-vs-off-design comparisons.
    pub fn with_rated_models(mut self) -> Self {
        self.chp = ChpParams {
            electric_efficiency: self.chp.electric_efficiency.to_rated(),
            heat_to_electric: self.chp.heat_to_electric.to_rated(),
        };
        self.gb = self.gb.to_rated();
        self.ec = self.ec.to_rated();
        self.ac = self.ac.to_rated();
        self
    }

    /// Swap in a different day, keeping device and price settings.
    pub fn with_profile(mut self, profile: DayProfile) -> Result<Self, EnvError> {
        profile.validate()?;
        self.profile = profile;
        self.reset();
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.profile.len()
    }

    pub fn boxes(&self) -> &ActionBoxes {
        &self.boxes
    }

    pub fn profile(&self) -> &DayProfile {
        &self.profile
    }

    pub fn chp_params(&self) -> &ChpParams {
        &self.chp
    }

    pub fn ac_params(&self) -> &EfficiencyPolynomial {
        &self.ac
    }

    pub fn ec_params(&self) -> &EfficiencyPolynomial {
        &self.ec
    }

    pub fn gb_params(&self) -> &EfficiencyPolynomial {
        &self.gb
    }

    pub fn done(&self) -> bool {
        self.hour >= self.profile.len()
    }

    pub fn reset(&mut self) -> MicrogridObservation {
        self.ess = self.initial_ess;
        self.tss = self.initial_tss;
        self.css = self.initial_css;
        self.hour = 0;
        self.observe()
    }

    pub fn observe(&self) -> MicrogridObservation {
        let h = self.hour.min(self.profile.len() - 1);
        MicrogridObservation {
            wt_power: self.profile.wt_kw[h],
            pv_power: self.profile.pv_kw[h],
            p_load: self.profile.p_load_kw[h],
            h_load: self.profile.h_load_kw[h],
            q_load: self.profile.q_load_kw[h],
            price_e: self.profile.price_e_per_kwh[h],
            soc_ess: self.ess.soc,
            soc_tss: self.tss.soc,
            soc_css: self.css.soc,
            hour_index: h,
        }
    }

    /// Push a signed residual (positive = surplus to store) into a storage
    /// system. Returns (charge, discharge, new state, leftover residual).
    fn absorb(
        state: &StorageState,
        params: &StorageParams,
        residual_kw: f64,
        dt: f64,
    ) -> Result<(f64, f64, StorageState, f64), DeviceError> {
        let (max_ch, max_dis) = devices::feasible_storage_range(state, params, dt);
        let (ch, dis) = if residual_kw >= 0.0 {
            (residual_kw.min(max_ch), 0.0)
        } else {
            (0.0, (-residual_kw).min(max_dis))
        };
        let next = devices::storage_step(state, params, ch, dis, dt)?;
        Ok((ch, dis, next, residual_kw - ch + dis))
    }

    pub fn step(&mut self, action: &DispatchAction) -> Result<StepOutcome, EnvError> {
        if self.done() {
            return Err(EnvError::Terminated);
        }
        for v in action.as_array() {
            if !v.is_finite() {
                return Err(EnvError::NonFinite("dispatch action"));
            }
        }
        let h = self.hour;
        let wt = self.profile.wt_kw[h];
        let pv = self.profile.pv_kw[h];
        let p_load = self.profile.p_load_kw[h];
        let h_load = self.profile.h_load_kw[h];
        let q_load = self.profile.q_load_kw[h];
        let price_e = self.profile.price_e_per_kwh[h];

        let action = self.boxes.clamp(action);
        let dt = self.dt;

        // Converter flows; below the load-ratio floor a device is OFF and
        // contributes zero on both sides.
        let chp_flow = devices::chp_step(&self.chp, action.p_chp_kw)?;
        let (p_chp, gas_chp, h_chp) = match chp_flow {
            devices::DeviceRun::On(f) => (action.p_chp_kw, f.gas_in, f.heat_out),
            devices::DeviceRun::Off => (0.0, 0.0, 0.0),
        };
        let (h_gb, gas_gb) = match devices::gb_step(&self.gb, action.h_gb_kw)? {
            devices::DeviceRun::On(gas) => (action.h_gb_kw, gas),
            devices::DeviceRun::Off => (0.0, 0.0),
        };
        let (q_ec, p_ec) = match devices::ec_step(&self.ec, action.q_ec_kw)? {
            devices::DeviceRun::On(p) => (action.q_ec_kw, p),
            devices::DeviceRun::Off => (0.0, 0.0),
        };
        let (q_ac, h_ac) = match devices::ac_step(&self.ac, action.q_ac_kw)? {
            devices::DeviceRun::On(hin) => (action.q_ac_kw, hin),
            devices::DeviceRun::Off => (0.0, 0.0),
        };

        // Thermal balance, TSS as slack.
        let residual_h = h_chp + h_gb - h_load - h_ac;
        let (tss_ch, tss_dis, tss_next, leftover_h) =
            Self::absorb(&self.tss, &self.tss_params, residual_h, dt)?;

        // Cold balance, CSS as slack.
        let residual_c = q_ec + q_ac - q_load;
        let (css_ch, css_dis, css_next, leftover_c) =
            Self::absorb(&self.css, &self.css_params, residual_c, dt)?;

        // Electric balance, ESS as slack, then battery aging.
        let residual_e = action.p_grid_kw + wt + pv + p_chp - p_load - p_ec;
        let (ess_ch, ess_dis, mut ess_next, leftover_e) =
            Self::absorb(&self.ess, &self.ess_params, residual_e, dt)?;
        let health = devices::ess_age(&ess_next, &self.ess_params, ess_ch, ess_dis, dt);
        ess_next.health = Some(health);

        // Gas is balanced by construction.
        let gas_purchased_kwh = (gas_chp + gas_gb) * dt;

        let energy_cost = price_e * action.p_grid_kw * dt + self.price_gas * gas_purchased_kwh;
        let carbon_cost = self.carbon_tax
            * (self.beta_e * action.p_grid_kw * dt + self.beta_gas * gas_purchased_kwh);
        let imbalance_e_kwh = leftover_e * dt;
        let imbalance_h_kwh = leftover_h * dt;
        let imbalance_c_kwh = leftover_c * dt;
        let penalty_cost = self.alpha_e * imbalance_e_kwh.abs()
            + self.alpha_h * imbalance_h_kwh.abs()
            + self.alpha_c * imbalance_c_kwh.abs();
        let reward = -(energy_cost + carbon_cost + penalty_cost);

        self.tss = tss_next;
        self.css = css_next;
        self.ess = ess_next;
        self.hour += 1;
        let terminal = self.done();

        let ledger = FlowLedger {
            p_chp_kw: p_chp,
            gas_chp_kw: gas_chp,
            h_chp_kw: h_chp,
            h_gb_kw: h_gb,
            gas_gb_kw: gas_gb,
            q_ec_kw: q_ec,
            p_ec_kw: p_ec,
            q_ac_kw: q_ac,
            h_ac_kw: h_ac,
            p_grid_kw: action.p_grid_kw,
            wt_kw: wt,
            pv_kw: pv,
            ess_ch_kw: ess_ch,
            ess_dis_kw: ess_dis,
            tss_ch_kw: tss_ch,
            tss_dis_kw: tss_dis,
            css_ch_kw: css_ch,
            css_dis_kw: css_dis,
            soc_ess: ess_next.soc,
            soc_tss: tss_next.soc,
            soc_css: css_next.soc,
            soh_ess: health.soh,
        };

        Ok(StepOutcome {
            reward,
            energy_cost,
            carbon_cost,
            penalty_cost,
            gas_purchased_kwh,
            imbalance_e_kwh,
            imbalance_h_kwh,
            imbalance_c_kwh,
            ledger,
            next_observation: self.observe(),
            terminal,
        })
    }
}

/// A dispatch policy maps observations to physical actions.
pub trait Policy {
    fn act(&mut self, obs: &MicrogridObservation) -> DispatchAction;
}

/// Always outputs the zero action.
#[derive(Debug, Clone, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _obs: &MicrogridObservation) -> DispatchAction {
        DispatchAction::default()
    }
}

/// Uniform random action within the boxes; used as the untrained baseline.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub boxes: ActionBoxes,
    pub rng: rand_chacha::ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(boxes: ActionBoxes, seed: u64) -> Self {
        use rand::SeedableRng;
        Self {
            boxes,
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _obs: &MicrogridObservation) -> DispatchAction {
        use rand::Rng;
        let mut raw = [0.0; 5];
        for v in &mut raw {
            *v = self.rng.gen_range(-1.0..1.0);
        }
        denormalize_action(&raw, &self.boxes)
    }
}

/// Rule-based baseline: serve cold with the electric chiller first, cover
/// the resulting heat demand with the boiler (CHP only for boiler
/// overflow), and buy the electric deficit from the grid. Sub-floor
/// setpoints are bumped to the device floor so the converters stay ON; the
/// surplus lands in storage.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    chp: ChpParams,
    gb: EfficiencyPolynomial,
    ec: EfficiencyPolynomial,
    ac: EfficiencyPolynomial,
    boxes: ActionBoxes,
}

impl GreedyPolicy {
    pub fn new(env: &MicrogridEnv) -> Self {
        Self {
            chp: env.chp.clone(),
            gb: env.gb.clone(),
            ec: env.ec.clone(),
            ac: env.ac.clone(),
            boxes: env.boxes,
        }
    }

    fn bump_to_floor(target: f64, poly: &EfficiencyPolynomial) -> f64 {
        let floor = poly.min_load_ratio * poly.rated_capacity;
        if target <= 0.0 {
            0.0
        } else if target < floor {
            floor
        } else {
            target.min(poly.rated_capacity)
        }
    }
}

impl Policy for GreedyPolicy {
    fn act(&mut self, obs: &MicrogridObservation) -> DispatchAction {
        // Cold: EC first, AC for what the EC cannot cover.
        let q_ec = Self::bump_to_floor(obs.q_load.min(self.ec.rated_capacity), &self.ec);
        let q_rest = (obs.q_load - q_ec).max(0.0);
        let q_ac = Self::bump_to_floor(q_rest, &self.ac);
        let h_ac = match devices::ac_step(&self.ac, q_ac) {
            Ok(devices::DeviceRun::On(h)) => h,
            _ => 0.0,
        };
        // Heat: boiler first, CHP for the overflow.
        let heat_needed = obs.h_load + h_ac;
        let h_gb = Self::bump_to_floor(heat_needed.min(self.gb.rated_capacity), &self.gb);
        let overflow = (heat_needed - h_gb).max(0.0);
        let p_chp = if overflow > 0.0 {
            let h2e = self.chp.heat_to_electric.at_ratio(1.0).max(1e-6);
            Self::bump_to_floor(overflow / h2e, &self.chp.electric_efficiency)
        } else {
            0.0
        };
        let p_ec = match devices::ec_step(&self.ec, q_ec) {
            Ok(devices::DeviceRun::On(p)) => p,
            _ => 0.0,
        };
        let deficit = obs.p_load + p_ec - obs.wt_power - obs.pv_power - p_chp;
        let p_grid = deficit.clamp(0.0, self.boxes.hi[4]);
        self.boxes.clamp(&DispatchAction {
            p_chp_kw: p_chp,
            h_gb_kw: h_gb,
            q_ec_kw: q_ec,
            q_ac_kw: q_ac,
            p_grid_kw: p_grid,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<StepOutcome>,
    pub actions: Vec<DispatchAction>,
}

impl EpisodeTrace {
    pub fn total_cost(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.energy_cost + s.carbon_cost + s.penalty_cost)
            .sum()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn total_energy_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.energy_cost).sum()
    }

    pub fn total_carbon_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.carbon_cost).sum()
    }

    pub fn total_penalty_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.penalty_cost).sum()
    }

    /// Electricity purchases per hour, kWh.
    pub fn electricity_purchased_kwh(&self, dt: f64) -> Vec<f64> {
        self.steps.iter().map(|s| s.ledger.p_grid_kw * dt).collect()
    }

    pub fn gas_purchased_kwh(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.gas_purchased_kwh).collect()
    }
}

/// Run one full episode from the initial state.
pub fn run_episode<P: Policy>(env: &mut MicrogridEnv, policy: &mut P) -> Result<EpisodeTrace, EnvError> {
    env.reset();
    let mut steps = Vec::with_capacity(env.horizon());
    let mut actions = Vec::with_capacity(env.horizon());
    while !env.done() {
        let obs = env.observe();
        let action = policy.act(&obs);
        let outcome = env.step(&action)?;
        actions.push(action);
        steps.push(outcome);
    }
    Ok(EpisodeTrace { steps, actions })
}

/// Replay a fixed action sequence; used for model-comparison runs where
/// both environments must see identical setpoints.
pub fn replay_actions(
    env: &mut MicrogridEnv,
    actions: &[DispatchAction],
) -> Result<EpisodeTrace, EnvError> {
    env.reset();
    let mut steps = Vec::with_capacity(actions.len());
    for action in actions {
        steps.push(env.step(action)?);
    }
    Ok(EpisodeTrace {
        steps,
        actions: actions.to_vec(),
    })
}

/// One renewable realization: wind and PV curves in kW.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewableScenario {
    pub wt_kw: Vec<f64>,
    pub pv_kw: Vec<f64>,
}

/// Per-hour purchase envelopes across a scenario set, kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct PurchaseBounds {
    pub electricity_min: Vec<f64>,
    pub electricity_max: Vec<f64>,
    pub gas_min: Vec<f64>,
    pub gas_max: Vec<f64>,
}

fn scenario_purchases<P: Policy + Clone>(
    base_env: &MicrogridEnv,
    policy: &P,
    scenario: &RenewableScenario,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>), EnvError> {
    let mut profile = base_env.profile().clone();
    if scenario.wt_kw.len() != profile.len() || scenario.pv_kw.len() != profile.len() {
        return Err(EnvError::Profile(format!(
            "scenario length {}/{} does not match horizon {}",
            scenario.wt_kw.len(),
            scenario.pv_kw.len(),
            profile.len()
        )));
    }
    profile.wt_kw = scenario.wt_kw.clone();
    profile.pv_kw = scenario.pv_kw.clone();
    let mut env = base_env.clone().with_profile(profile)?;
    let mut policy = policy.clone();
    let trace = run_episode(&mut env, &mut policy)?;
    Ok((trace.electricity_purchased_kwh(dt), trace.gas_purchased_kwh()))
}

fn envelope(per_scenario: &[(Vec<f64>, Vec<f64>)], horizon: usize) -> PurchaseBounds {
    let mut bounds = PurchaseBounds {
        electricity_min: vec![f64::INFINITY; horizon],
        electricity_max: vec![f64::NEG_INFINITY; horizon],
        gas_min: vec![f64::INFINITY; horizon],
        gas_max: vec![f64::NEG_INFINITY; horizon],
    };
    for (elec, gas) in per_scenario {
        for h in 0..horizon {
            bounds.electricity_min[h] = bounds.electricity_min[h].min(elec[h]);
            bounds.electricity_max[h] = bounds.electricity_max[h].max(elec[h]);
            bounds.gas_min[h] = bounds.gas_min[h].min(gas[h]);
            bounds.gas_max[h] = bounds.gas_max[h].max(gas[h]);
        }
    }
    bounds
}

/// Sequential reference implementation of [`purchase_bounds`].
pub fn purchase_bounds_seq<P: Policy + Clone>(
    base_env: &MicrogridEnv,
    policy: &P,
    scenarios: &[RenewableScenario],
    dt: f64,
) -> Result<PurchaseBounds, EnvError> {
    if scenarios.is_empty() {
        return Err(EnvError::EmptyScenarioSet);
    }
    let per: Result<Vec<_>, _> = scenarios
        .iter()
        .map(|s| scenario_purchases(base_env, policy, s, dt))
        .collect();
    Ok(envelope(&per?, base_env.horizon()))
}

/// Run one episode per scenario and return the per-hour purchase envelopes.
///
/// Scenario rollouts are independent; with the `parallel` feature they fan
/// out across worker threads and merge in scenario order, so the result is
/// identical to the sequential path.
#[cfg(feature = "parallel")]
pub fn purchase_bounds<P: Policy + Clone + Send + Sync>(
    base_env: &MicrogridEnv,
    policy: &P,
    scenarios: &[RenewableScenario],
    dt: f64,
) -> Result<PurchaseBounds, EnvError> {
    use rayon::prelude::*;
    if scenarios.is_empty() {
        return Err(EnvError::EmptyScenarioSet);
    }
    let per: Result<Vec<_>, _> = scenarios
        .par_iter()
        .map(|s| scenario_purchases(base_env, policy, s, dt))
        .collect();
    Ok(envelope(&per?, base_env.horizon()))
}

#[cfg(not(feature = "parallel"))]
pub fn purchase_bounds<P: Policy + Clone>(
    base_env: &MicrogridEnv,
    policy: &P,
    scenarios: &[RenewableScenario],
    dt: f64,
) -> Result<PurchaseBounds, EnvError> {
    purchase_bounds_seq(base_env, policy, scenarios, dt)
}
