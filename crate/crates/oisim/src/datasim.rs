//! Simulated laboratory data.
//!
//! Stands in for the experiment inside the identification loop: propagates
//! replicate noisy pulse realizations, contaminates every population
//! observation with multiplicative measurement noise, and averages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagate::{propagate, PropagationSettings, QuantumState};
use crate::pulse::{FieldNoiseModel, PulseShape};
use crate::rngstream;
use crate::system::HamiltonianParams;

/// Default floor under measured values when forming error bars, so bands on
/// near-zero populations never collapse below what any surrogate can satisfy.
pub const DEFAULT_VALUE_FLOOR: f64 = 0.1;

fn default_value_floor() -> f64 {
    DEFAULT_VALUE_FLOOR
}

/// Uniformly spaced observation times `t_q = q T / Q`, all basis populations
/// measured at each time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    /// Number of time samples.
    pub samples: usize,
    /// Evolution period T (ps).
    pub duration: f64,
}

impl MeasurementPlan {
    pub fn new(samples: usize, duration: f64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Config("measurement plan needs at least 1 sample".into()));
        }
        if duration <= 0.0 {
            return Err(Error::Config("measurement duration must be positive".into()));
        }
        Ok(Self { samples, duration })
    }

    pub fn obs_times(&self) -> Vec<f64> {
        (1..=self.samples)
            .map(|q| q as f64 * self.duration / self.samples as f64)
            .collect()
    }

    /// Total measurement count M = N * Q.
    pub fn total_measurements(&self, dimension: usize) -> usize {
        dimension * self.samples
    }
}

/// Replicate-averaged noisy population measurements for one nominal pulse.
///
/// `values[m]` is ordered time-major: `m = q * N + state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabDataset {
    pub values: Vec<f64>,
    /// Relative error bar shared by all measurements.
    pub err_rel: f64,
    pub plan: MeasurementPlan,
    pub pulse: PulseShape,
    pub pulse_id: String,
    pub seed: u64,
    /// Absolute floor under |value| when forming error bars.
    #[serde(default = "default_value_floor")]
    pub value_floor: f64,
}

impl LabDataset {
    /// Absolute error bar for measurement `m`.
    pub fn eps_abs(&self, m: usize) -> f64 {
        self.err_rel * self.values[m].abs().max(self.value_floor)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.err_rel <= 0.0 {
            return Err(Error::Config("err_rel must be positive".into()));
        }
        if self.plan.samples == 0 || self.plan.duration <= 0.0 {
            return Err(Error::Config("invalid measurement plan".into()));
        }
        if self.values.is_empty() {
            return Err(Error::Config("dataset has no measurements".into()));
        }
        if !(self.value_floor > 0.0) {
            return Err(Error::Config("value_floor must be positive".into()));
        }
        let hi = 1.0 + self.err_rel;
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > hi) {
            return Err(Error::Config("dataset values outside [0, 1+err_rel]".into()));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let ds: LabDataset = serde_json::from_str(text)?;
        ds.validate()?;
        ds.pulse.validate()?;
        Ok(ds)
    }
}

/// Short deterministic identifier for a knob vector.
pub fn pulse_id(knobs: &[f64]) -> String {
    let mut state = 0x243F_6A88_85A3_08D3u64;
    for v in knobs {
        state ^= v.to_bits();
        state = state.rotate_left(17).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    }
    format!("{state:016x}")
}

/// Simulate one laboratory dataset: propagate `noise.replicates` noisy pulse
/// realizations from the ground state, contaminate every individual
/// population observation with a fresh `(1 + rho)` factor
/// (`rho ~ U[-eps_obs, eps_obs]`), and average.
///
/// Replicate substreams derive from `(seed, replicate index)`, so the result
/// is independent of scheduling.
pub fn simulate_lab_data(
    truth: &HamiltonianParams,
    pulse: &PulseShape,
    plan: &MeasurementPlan,
    noise: &FieldNoiseModel,
    eps_obs: f64,
    seed: u64,
) -> Result<LabDataset> {
    simulate_lab_data_with_floor(truth, pulse, plan, noise, eps_obs, DEFAULT_VALUE_FLOOR, seed)
}

/// As [`simulate_lab_data`] with an explicit error-bar floor.
pub fn simulate_lab_data_with_floor(
    truth: &HamiltonianParams,
    pulse: &PulseShape,
    plan: &MeasurementPlan,
    noise: &FieldNoiseModel,
    eps_obs: f64,
    value_floor: f64,
    seed: u64,
) -> Result<LabDataset> {
    if !(value_floor > 0.0) {
        return Err(Error::Input("value_floor must be positive".into()));
    }
    noise.validate()?;
    pulse.validate()?;
    if eps_obs < 0.0 {
        return Err(Error::Input("eps_obs must be non-negative".into()));
    }
    let dimension = truth.dimension;
    let obs_times = plan.obs_times();
    let settings = PropagationSettings::for_max_frequency(pulse.max_frequency());
    let total = plan.total_measurements(dimension);

    let replicate_rows: Vec<Result<Vec<f64>>> = (0..noise.replicates)
        .into_par_iter()
        .map(|replicate| {
            let mut rng = rngstream::stream(seed, &[0x5EED_0001, replicate as u64]);
            let noisy = pulse.realize_noisy(noise, &mut rng);
            let rows = propagate(
                truth,
                |t| noisy.field_value(t),
                &QuantumState::ground(dimension),
                &obs_times,
                &settings,
            )?;
            let mut flat = Vec::with_capacity(total);
            for row in rows {
                for p in row {
                    let rho: f64 = rand::Rng::gen_range(&mut rng, -1.0..=1.0) * eps_obs;
                    flat.push((1.0 + rho) * p);
                }
            }
            Ok(flat)
        })
        .collect();

    let mut values = vec![0.0; total];
    for row in replicate_rows {
        let row = row?;
        for (acc, v) in values.iter_mut().zip(row.iter()) {
            *acc += v;
        }
    }
    let inv = 1.0 / noise.replicates as f64;
    for v in values.iter_mut() {
        *v *= inv;
    }

    Ok(LabDataset {
        values,
        err_rel: if eps_obs > 0.0 { eps_obs } else { 0.02 },
        plan: *plan,
        pulse: pulse.clone(),
        pulse_id: pulse_id(&pulse.knobs()),
        seed,
        value_floor,
    })
}

/// Per-measurement consistency: `|lab - predicted| <= eps_abs`.
pub fn is_consistent(dataset: &LabDataset, predicted: &[f64]) -> Result<Vec<bool>> {
    if predicted.len() != dataset.values.len() {
        return Err(Error::Input(format!(
            "prediction length {} does not match dataset length {}",
            predicted.len(),
            dataset.values.len()
        )));
    }
    Ok(dataset
        .values
        .iter()
        .enumerate()
        .map(|(m, lab)| (lab - predicted[m]).abs() <= dataset.eps_abs(m))
        .collect())
}
