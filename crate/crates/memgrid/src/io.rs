//! File formats: day profiles, dispatch ledgers, training curves, paired
//! forecast/actual series, scenario sets, purchase bounds, and the run
//! manifest written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::environment::{DayProfile, EpisodeTrace, PurchaseBounds};
use crate::scengen::PairedSeries;
use crate::td3::EpisodeStats;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    hour: usize,
    wt_kw: f64,
    pv_kw: f64,
    p_load_kw: f64,
    h_load_kw: f64,
    q_load_kw: f64,
    price_e_per_kwh: f64,
}

/// Read a day profile; rows must be hour 0..T in order.
pub fn read_profile(path: &Path) -> Result<DayProfile, IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut profile = DayProfile::zeros(0);
    for (i, row) in reader.deserialize::<ProfileRow>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        if row.hour != i {
            return Err(format_err(
                path,
                format!("row {i} has hour {}, expected {i}", row.hour),
            ));
        }
        profile.wt_kw.push(row.wt_kw);
        profile.pv_kw.push(row.pv_kw);
        profile.p_load_kw.push(row.p_load_kw);
        profile.h_load_kw.push(row.h_load_kw);
        profile.q_load_kw.push(row.q_load_kw);
        profile.price_e_per_kwh.push(row.price_e_per_kwh);
    }
    profile
        .validate()
        .map_err(|e| format_err(path, e.to_string()))?;
    Ok(profile)
}

pub fn write_profile(path: &Path, profile: &DayProfile) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for hour in 0..profile.len() {
        writer
            .serialize(ProfileRow {
                hour,
                wt_kw: profile.wt_kw[hour],
                pv_kw: profile.pv_kw[hour],
                p_load_kw: profile.p_load_kw[hour],
                h_load_kw: profile.h_load_kw[hour],
                q_load_kw: profile.q_load_kw[hour],
                price_e_per_kwh: profile.price_e_per_kwh[hour],
            })
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct LedgerRow {
    hour: usize,
    p_chp_kw: f64,
    gas_chp_kw: f64,
    h_chp_kw: f64,
    h_gb_kw: f64,
    gas_gb_kw: f64,
    q_ec_kw: f64,
    p_ec_kw: f64,
    q_ac_kw: f64,
    h_ac_kw: f64,
    p_grid_kw: f64,
    wt_kw: f64,
    pv_kw: f64,
    ess_ch_kw: f64,
    ess_dis_kw: f64,
    tss_ch_kw: f64,
    tss_dis_kw: f64,
    css_ch_kw: f64,
    css_dis_kw: f64,
    soc_ess: f64,
    soc_tss: f64,
    soc_css: f64,
    soh_ess: f64,
    energy_cost: f64,
    carbon_cost: f64,
    penalty_cost: f64,
    imbalance_e_kwh: f64,
    imbalance_h_kwh: f64,
    imbalance_c_kwh: f64,
    reward: f64,
}

/// Write the hour-by-hour dispatch ledger of one episode.
pub fn write_trace(path: &Path, trace: &EpisodeTrace) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (hour, s) in trace.steps.iter().enumerate() {
        let l = &s.ledger;
        writer
            .serialize(LedgerRow {
                hour,
                p_chp_kw: l.p_chp_kw,
                gas_chp_kw: l.gas_chp_kw,
                h_chp_kw: l.h_chp_kw,
                h_gb_kw: l.h_gb_kw,
                gas_gb_kw: l.gas_gb_kw,
                q_ec_kw: l.q_ec_kw,
                p_ec_kw: l.p_ec_kw,
                q_ac_kw: l.q_ac_kw,
                h_ac_kw: l.h_ac_kw,
                p_grid_kw: l.p_grid_kw,
                wt_kw: l.wt_kw,
                pv_kw: l.pv_kw,
                ess_ch_kw: l.ess_ch_kw,
                ess_dis_kw: l.ess_dis_kw,
                tss_ch_kw: l.tss_ch_kw,
                tss_dis_kw: l.tss_dis_kw,
                css_ch_kw: l.css_ch_kw,
                css_dis_kw: l.css_dis_kw,
                soc_ess: l.soc_ess,
                soc_tss: l.soc_tss,
                soc_css: l.soc_css,
                soh_ess: l.soh_ess,
                energy_cost: s.energy_cost,
                carbon_cost: s.carbon_cost,
                penalty_cost: s.penalty_cost,
                imbalance_e_kwh: s.imbalance_e_kwh,
                imbalance_h_kwh: s.imbalance_h_kwh,
                imbalance_c_kwh: s.imbalance_c_kwh,
                reward: s.reward,
            })
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Write the per-episode training curve.
pub fn write_curve(path: &Path, curve: &[EpisodeStats]) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in curve {
        writer.serialize(row).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct PairedRow {
    day: usize,
    hour: usize,
    forecast_kw: f64,
    actual_kw: f64,
}

/// Read a paired forecast/actual series and normalize by `rated_kw`.
/// Rows must be sorted by day, then hour, with a full horizon per day.
pub fn read_paired_series(path: &Path, rated_kw: f64) -> Result<PairedSeries, IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut series = PairedSeries {
        forecast: Vec::new(),
        actual: Vec::new(),
    };
    for row in reader.deserialize::<PairedRow>() {
        let row = row.map_err(csv_err(path))?;
        if row.day == series.forecast.len() && row.hour == 0 {
            series.forecast.push(Vec::new());
            series.actual.push(Vec::new());
        }
        let day = series
            .forecast
            .len()
            .checked_sub(1)
            .filter(|&d| d == row.day)
            .ok_or_else(|| {
                format_err(path, format!("unexpected day {} at hour {}", row.day, row.hour))
            })?;
        if row.hour != series.forecast[day].len() {
            return Err(format_err(
                path,
                format!(
                    "day {} has hour {}, expected {}",
                    row.day,
                    row.hour,
                    series.forecast[day].len()
                ),
            ));
        }
        series.forecast[day].push(row.forecast_kw / rated_kw);
        series.actual[day].push(row.actual_kw / rated_kw);
    }
    series
        .validate()
        .map_err(|e| format_err(path, e.to_string()))?;
    Ok(series)
}

/// Write a paired series, scaling normalized values back to kW.
pub fn write_paired_series(
    path: &Path,
    series: &PairedSeries,
    rated_kw: f64,
) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (day, (f, a)) in series.forecast.iter().zip(&series.actual).enumerate() {
        for (hour, (&fv, &av)) in f.iter().zip(a).enumerate() {
            writer
                .serialize(PairedRow {
                    day,
                    hour,
                    forecast_kw: fv * rated_kw,
                    actual_kw: av * rated_kw,
                })
                .map_err(csv_err(path))?;
        }
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioRow {
    scenario_id: usize,
    hour: usize,
    power_kw: f64,
}

/// Write generated scenario curves, scaling normalized values to kW.
pub fn write_scenarios(path: &Path, scenarios: &[Vec<f64>], rated_kw: f64) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for (id, curve) in scenarios.iter().enumerate() {
        for (hour, &v) in curve.iter().enumerate() {
            writer
                .serialize(ScenarioRow {
                    scenario_id: id,
                    hour,
                    power_kw: v * rated_kw,
                })
                .map_err(csv_err(path))?;
        }
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Read scenarios back as normalized curves.
pub fn read_scenarios(path: &Path, rated_kw: f64) -> Result<Vec<Vec<f64>>, IoError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for row in reader.deserialize::<ScenarioRow>() {
        let row = row.map_err(csv_err(path))?;
        if row.scenario_id == out.len() && row.hour == 0 {
            out.push(Vec::new());
        }
        let id = out
            .len()
            .checked_sub(1)
            .filter(|&d| d == row.scenario_id)
            .ok_or_else(|| format_err(path, format!("unexpected scenario_id {}", row.scenario_id)))?;
        if row.hour != out[id].len() {
            return Err(format_err(
                path,
                format!("scenario {} has hour {}, expected {}", id, row.hour, out[id].len()),
            ));
        }
        out[id].push(row.power_kw / rated_kw);
    }
    if out.is_empty() {
        return Err(format_err(path, "no scenarios"));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct BoundsRow {
    hour: usize,
    electricity_min_kwh: f64,
    electricity_max_kwh: f64,
    gas_min_kwh: f64,
    gas_max_kwh: f64,
}

/// Write per-hour purchase envelopes.
pub fn write_bounds(path: &Path, bounds: &PurchaseBounds) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for hour in 0..bounds.electricity_min.len() {
        writer
            .serialize(BoundsRow {
                hour,
                electricity_min_kwh: bounds.electricity_min[hour],
                electricity_max_kwh: bounds.electricity_max[hour],
                gas_min_kwh: bounds.gas_min[hour],
                gas_max_kwh: bounds.gas_max[hour],
            })
            .map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

/// Evaluation report comparing scenario sets against realized curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub coverage: f64,
    pub envelope_width: f64,
    pub scenario_count: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json).map_err(io_err(path))?;
    Ok(())
}

/// SHA-256 digest of a file, hex-encoded.
pub fn sha256_file(path: &Path) -> Result<String, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Provenance record written alongside every command's outputs: the
/// command, its seed, and digests of every input file, so a re-run can be
/// checked for byte-identical reproduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    /// Input path -> SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    /// Output files, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), IoError> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn save(&self, dir: &Path) -> Result<(), IoError> {
        write_json(&dir.join("manifest.json"), self)
    }
}
