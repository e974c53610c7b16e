//! Shaped control pulses.
//!
//! A pulse is a Gaussian envelope times a sum of cosine components; the
//! amplitudes and phases are the control knobs the outer optimization turns.
//! Laboratory imperfection is modeled as multiplicative parametric noise on
//! each amplitude and phase.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cosine component of the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseComponent {
    /// Carrier frequency (rad/ps).
    pub omega: f64,
    /// Scaled amplitude.
    pub amplitude: f64,
    /// Phase offset (rad).
    pub phase: f64,
}

/// Gaussian-envelope multi-component pulse plus knob bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    /// Total duration T (ps).
    pub duration: f64,
    /// Envelope width s (ps).
    pub envelope_width: f64,
    pub components: Vec<PulseComponent>,
    /// (min, max) bound shared by all amplitude knobs.
    pub amplitude_bounds: (f64, f64),
    /// (min, max) bound shared by all phase knobs.
    pub phase_bounds: (f64, f64),
}

/// Parametric field noise: each amplitude and phase is scaled by
/// `(1 + gamma)` with `gamma` uniform on `[-eps_fld, +eps_fld]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldNoiseModel {
    pub eps_fld: f64,
    /// Replicate observations averaged per measurement.
    pub replicates: usize,
}

impl Default for FieldNoiseModel {
    fn default() -> Self {
        Self { eps_fld: 0.01, replicates: 100 }
    }
}

impl FieldNoiseModel {
    pub fn validate(&self) -> Result<()> {
        if self.eps_fld < 0.0 {
            return Err(Error::Config("eps_fld must be non-negative".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicate count must be at least 1".into()));
        }
        Ok(())
    }
}

impl PulseShape {
    /// Pulse with the given carrier frequencies, all knobs at their minima.
    pub fn with_carriers(duration: f64, envelope_width: f64, omegas: &[f64]) -> Self {
        Self {
            duration,
            envelope_width,
            components: omegas
                .iter()
                .map(|&omega| PulseComponent { omega, amplitude: 0.0, phase: 0.0 })
                .collect(),
            amplitude_bounds: (0.0, 1.0),
            phase_bounds: (0.0, std::f64::consts::TAU),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 || self.envelope_width <= 0.0 {
            return Err(Error::Config(
                "pulse duration and envelope width must be positive".into(),
            ));
        }
        for (k, c) in self.components.iter().enumerate() {
            if c.amplitude < self.amplitude_bounds.0 || c.amplitude > self.amplitude_bounds.1 {
                return Err(Error::Config(format!(
                    "component {k} amplitude {} outside bounds [{}, {}]",
                    c.amplitude, self.amplitude_bounds.0, self.amplitude_bounds.1
                )));
            }
        }
        Ok(())
    }

    /// Field value at time `t`: Gaussian envelope centered at T/2 times the
    /// cosine sum. Times outside [0, T] are allowed; the envelope suppresses
    /// them.
    pub fn field_value(&self, t: f64) -> f64 {
        let dt = t - 0.5 * self.duration;
        let envelope = (-dt * dt / (2.0 * self.envelope_width * self.envelope_width)).exp();
        let carrier: f64 = self
            .components
            .iter()
            .map(|c| c.amplitude * (c.omega * t + c.phase).cos())
            .sum();
        envelope * carrier
    }

    /// Largest carrier frequency, for choosing propagation step sizes.
    pub fn max_frequency(&self) -> f64 {
        self.components.iter().map(|c| c.omega.abs()).fold(0.0, f64::max)
    }

    /// The knob vector `[A_1..A_L, theta_1..theta_L]`.
    pub fn knobs(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(2 * self.components.len());
        c.extend(self.components.iter().map(|p| p.amplitude));
        c.extend(self.components.iter().map(|p| p.phase));
        c
    }

    /// Per-knob (min, max) bounds matching [`knobs`] ordering.
    pub fn knob_bounds(&self) -> Vec<(f64, f64)> {
        let l = self.components.len();
        let mut b = Vec::with_capacity(2 * l);
        b.extend(std::iter::repeat(self.amplitude_bounds).take(l));
        b.extend(std::iter::repeat(self.phase_bounds).take(l));
        b
    }

    /// A copy of this pulse with amplitudes/phases replaced by `knobs`.
    pub fn with_knobs(&self, knobs: &[f64]) -> Result<Self> {
        let l = self.components.len();
        if knobs.len() != 2 * l {
            return Err(Error::Input(format!(
                "knob vector length {} does not match {} components",
                knobs.len(),
                l
            )));
        }
        let mut out = self.clone();
        for (k, c) in out.components.iter_mut().enumerate() {
            c.amplitude = knobs[k];
            c.phase = knobs[l + k];
        }
        Ok(out)
    }

    /// Draw a noisy realization: every amplitude and phase picks up an
    /// independent fresh `(1 + gamma)` factor. Envelope parameters are left
    /// untouched. Draw order is fixed (per component: amplitude then phase).
    pub fn realize_noisy(&self, noise: &FieldNoiseModel, rng: &mut impl Rng) -> Self {
        let eps = noise.eps_fld;
        let mut out = self.clone();
        for c in out.components.iter_mut() {
            let gamma_a: f64 = rng.gen_range(-1.0..=1.0) * eps;
            let gamma_t: f64 = rng.gen_range(-1.0..=1.0) * eps;
            c.amplitude *= 1.0 + gamma_a;
            c.phase *= 1.0 + gamma_t;
        }
        out
    }

    /// Power spectrum `|FT of the field over [0, T]|^2` on a frequency grid,
    /// by trapezoidal quadrature resolving the fastest beat frequency with at
    /// least 40 points per period.
    pub fn power_spectrum(&self, freq_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        if freq_grid.is_empty() {
            return Err(Error::Input("empty frequency grid".into()));
        }
        if freq_grid.iter().any(|&f| f < 0.0) {
            return Err(Error::Input("frequency grid must be non-negative".into()));
        }
        let grid_max = freq_grid.iter().cloned().fold(0.0, f64::max);
        let omega_ref = (self.max_frequency() + grid_max).max(1.0);
        let dt = std::f64::consts::TAU / (40.0 * omega_ref);
        let steps = (self.duration / dt).ceil() as usize;
        let dt = self.duration / steps as f64;

        // Sample the field once, reuse for every grid frequency.
        let samples: Vec<(f64, f64)> = (0..=steps)
            .map(|k| {
                let t = k as f64 * dt;
                (t, self.field_value(t))
            })
            .collect();

        Ok(freq_grid
            .iter()
            .map(|&omega| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (k, &(t, e)) in samples.iter().enumerate() {
                    let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
                    let phase = omega * t;
                    re += weight * e * phase.cos();
                    im -= weight * e * phase.sin();
                }
                re *= dt;
                im *= dt;
                (omega, re * re + im * im)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngstream::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn sample_pulse() -> PulseShape {
        let mut p = PulseShape::with_carriers(1.0, 0.2, &[146.0, 142.0, 138.0]);
        for (k, c) in p.components.iter_mut().enumerate() {
            c.amplitude = 0.3 + 0.2 * k as f64;
            c.phase = 0.5 * k as f64;
        }
        p
    }

    #[test]
    fn zero_amplitudes_give_zero_field() {
        let p = PulseShape::with_carriers(1.0, 0.2, &[146.0, 142.0]);
        for k in 0..50 {
            assert_eq!(p.field_value(k as f64 * 0.03), 0.0);
        }
    }

    #[test]
    fn envelope_peak_recovers_amplitude() {
        // Single component; phase chosen so the cosine is 1 at t = T/2.
        let mut p = PulseShape::with_carriers(1.0, 0.2, &[100.0]);
        p.components[0].amplitude = 0.7;
        p.components[0].phase = -100.0 * 0.5;
        assert!((p.field_value(0.5) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn matches_independent_evaluation_at_random_times() {
        // Direct re-implementation of the envelope-times-cosines form.
        let p = sample_pulse();
        let mut rng = stream(3, &[0]);
        for _ in 0..1000 {
            let t: f64 = rng.gen_range(-0.2..1.2);
            let mut expect = 0.0;
            for c in &p.components {
                let arg = c.omega * t + c.phase;
                expect += c.amplitude * arg.cos();
            }
            expect *= (-(t - p.duration / 2.0).powi(2)
                / (2.0 * p.envelope_width * p.envelope_width))
                .exp();
            assert!((p.field_value(t) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = sample_pulse();
        let noise = FieldNoiseModel { eps_fld: 0.0, replicates: 1 };
        let q = p.realize_noisy(&noise, &mut stream(1, &[2]));
        assert_eq!(p, q);
    }

    #[test]
    fn one_percent_noise_stays_within_one_percent() {
        let mut p = PulseShape::with_carriers(1.0, 0.2, &[100.0]);
        p.components[0].amplitude = 1.0;
        let noise = FieldNoiseModel { eps_fld: 0.01, replicates: 1 };
        let mut rng = stream(9, &[0]);
        for _ in 0..10_000 {
            let q = p.realize_noisy(&noise, &mut rng);
            let a = q.components[0].amplitude;
            assert!((0.99..=1.01).contains(&a), "amplitude {a} escaped the noise band");
        }
    }

    #[test]
    fn noisy_amplitude_mean_converges_to_nominal() {
        let mut p = PulseShape::with_carriers(1.0, 0.2, &[100.0]);
        p.components[0].amplitude = 0.8;
        let noise = FieldNoiseModel { eps_fld: 0.05, replicates: 1 };
        let n = 100_000usize;
        let mut rng = stream(4, &[7]);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += p.realize_noisy(&noise, &mut rng).components[0].amplitude;
        }
        let mean = sum / n as f64;
        // std error of the mean of U(-eps, eps)-scaled amplitude
        let se = 0.8 * 0.05 / (3.0 * n as f64).sqrt();
        assert!(
            (mean - 0.8).abs() < 3.0 * se,
            "mean {mean} differs from nominal by more than 3 standard errors ({se})"
        );
    }

    #[test]
    fn same_seed_reproduces_identical_noise() {
        let p = sample_pulse();
        let noise = FieldNoiseModel::default();
        let a = p.realize_noisy(&noise, &mut stream(11, &[5]));
        let b = p.realize_noisy(&noise, &mut stream(11, &[5]));
        assert_eq!(a, b);
    }

    #[test]
    fn spectrum_of_zero_pulse_is_zero() {
        let p = PulseShape::with_carriers(1.0, 0.2, &[100.0]);
        let spec = p.power_spectrum(&[0.0, 50.0, 100.0]).unwrap();
        assert!(spec.iter().all(|&(_, pw)| pw == 0.0));
    }

    /// Analytic transform of a Gaussian-windowed cosine (infinite-window
    /// form; test parameters keep the truncation negligible).
    fn analytic_power(p: &PulseShape, omega: f64) -> f64 {
        let s = p.envelope_width;
        let t_half = 0.5 * p.duration;
        let mut re = 0.0;
        let mut im = 0.0;
        for c in &p.components {
            for (sign, phase_sign) in [(1.0, 1.0), (-1.0, -1.0)] {
                let delta = omega - sign * c.omega;
                let mag = 0.5
                    * c.amplitude
                    * s
                    * std::f64::consts::TAU.sqrt()
                    * (-s * s * delta * delta / 2.0).exp();
                let ang = phase_sign * c.phase - delta * t_half;
                re += mag * ang.cos();
                im += mag * ang.sin();
            }
        }
        re * re + im * im
    }

    #[test]
    fn spectrum_peak_sits_at_the_carrier() {
        let mut p = PulseShape::with_carriers(10.0, 1.0, &[20.0]);
        p.components[0].amplitude = 1.0;
        let grid: Vec<f64> = (0..400).map(|k| k as f64 * 0.1).collect();
        let spec = p.power_spectrum(&grid).unwrap();
        let (peak_f, peak_p) = spec
            .iter()
            .cloned()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!((peak_f - 20.0).abs() <= 0.1 + 1e-12, "peak at {peak_f}");
        assert!((peak_p - analytic_power(&p, peak_f)).abs() < 0.01 * peak_p);
    }

    #[test]
    fn amplitude_ratio_two_gives_power_ratio_four() {
        let mut p = PulseShape::with_carriers(10.0, 1.0, &[20.0, 40.0]);
        p.components[0].amplitude = 0.8;
        p.components[1].amplitude = 0.4;
        let spec = p.power_spectrum(&[20.0, 40.0]).unwrap();
        let ratio = spec[0].1 / spec[1].1;
        assert!((ratio - 4.0).abs() < 0.4, "power ratio {ratio}");
        for &(f, pw) in &spec {
            let expect = analytic_power(&p, f);
            assert!((pw - expect).abs() < 0.02 * expect, "at {f}: {pw} vs {expect}");
        }
    }

    proptest! {
        #[test]
        fn field_is_linear_in_amplitudes(scale in 0.1f64..3.0, t in -0.5f64..1.5) {
            let p = sample_pulse();
            let mut scaled = p.clone();
            scaled.amplitude_bounds = (0.0, 10.0);
            for c in scaled.components.iter_mut() {
                c.amplitude *= scale;
            }
            let lhs = scaled.field_value(t);
            let rhs = scale * p.field_value(t);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }

        #[test]
        fn total_power_scales_quadratically(scale in 0.1f64..2.0) {
            let p = sample_pulse();
            let mut scaled = p.clone();
            scaled.amplitude_bounds = (0.0, 10.0);
            for c in scaled.components.iter_mut() {
                c.amplitude *= scale;
            }
            let grid: Vec<f64> = (0..40).map(|k| 120.0 + k as f64).collect();
            let a = p.power_spectrum(&grid).unwrap();
            let b = scaled.power_spectrum(&grid).unwrap();
            let ta: f64 = a.iter().map(|x| x.1).sum();
            let tb: f64 = b.iter().map(|x| x.1).sum();
            prop_assert!((tb - scale * scale * ta).abs() <= 1e-9 * ta.max(1e-30));
        }
    }
}
