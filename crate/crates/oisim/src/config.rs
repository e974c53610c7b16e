//! Run configuration: a flat sectioned key-value format and its mapping onto
//! the loop configuration.
//!
//! Unknown sections or keys are hard errors with file:line anchors, so typos
//! cannot silently fall back to defaults. Physics and noise defaults follow
//! the standard demonstration values; the optimization budgets default to a
//! desk scale suitable for CI, with `--paper-scale` switching to the full
//! budgets.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ga::GaParams;
use crate::hdmr::MapDomain;
use crate::inversion::InversionConfig;
use crate::oi::{OiConfig, RampSchedule};
use crate::pulse::{FieldNoiseModel, PulseShape};
use crate::system::{
    default_system, parse_system_file, resonance_frequencies, HamiltonianParams, LevelSystem,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    // [system]
    pub system_file: Option<String>,
    pub truth_file: Option<String>,
    // [pulse]
    pub duration: f64,
    pub envelope_width: f64,
    pub amp_min: f64,
    pub amp_max: f64,
    pub phase_min: f64,
    pub phase_max: f64,
    // [noise]
    pub eps_obs: f64,
    pub eps_fld: f64,
    pub replicates: usize,
    pub value_floor: f64,
    // [measurement]
    pub q: usize,
    pub q_conventional: usize,
    // [outer_ga]
    pub outer_population: usize,
    pub outer_generations: usize,
    pub outer_crossover: f64,
    pub outer_mutation: f64,
    // [inversion]
    pub family_size: usize,
    pub inner_population: usize,
    pub inner_generations: usize,
    pub inner_crossover: f64,
    pub inner_mutation: f64,
    pub lambda_reg: f64,
    pub dedup_dist: f64,
    pub immigrant_fraction: f64,
    // [map]
    pub map_samples: usize,
    pub rel_halfwidth: f64,
    pub zero_halfwidth: f64,
    pub validation_points: usize,
    pub accuracy_threshold: f64,
    pub validate_amplitude: f64,
    // [schedule]
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    // [run]
    pub seed: u64,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system_file: None,
            truth_file: None,
            duration: 1.0,
            envelope_width: 0.2,
            amp_min: 0.0,
            amp_max: 1.0,
            phase_min: 0.0,
            phase_max: std::f64::consts::TAU,
            eps_obs: 0.02,
            eps_fld: 0.01,
            replicates: 100,
            value_floor: 0.1,
            q: 1,
            q_conventional: 25,
            outer_population: 12,
            outer_generations: 15,
            outer_crossover: 0.75,
            outer_mutation: 0.05,
            family_size: 100,
            inner_population: 100,
            inner_generations: 40,
            inner_crossover: 0.70,
            inner_mutation: 0.05,
            lambda_reg: 0.0,
            dedup_dist: 1e-3,
            immigrant_fraction: 0.25,
            map_samples: 4,
            rel_halfwidth: 0.30,
            zero_halfwidth: 0.5,
            validation_points: 8,
            accuracy_threshold: 0.02,
            validate_amplitude: 0.35,
            alpha_start: 1e-2,
            alpha_end: 1e-2,
            beta_start: 1e-4,
            beta_end: 1e-4,
            seed: 42,
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    /// Switch the optimization budgets to the full demonstration scale
    /// (outer 30 x 50, family 500, 6 map nodes per variable).
    pub fn apply_paper_scale(&mut self) {
        self.outer_population = 30;
        self.outer_generations = 50;
        self.family_size = 500;
        self.map_samples = 6;
    }
}

/// Parse the sectioned key-value config format. `path_label` is used in
/// error messages only.
pub fn parse_run_config(path_label: &str, text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut section = String::new();

    let perr = |line: usize, msg: String| Error::Parse {
        path: path_label.to_string(),
        line,
        msg,
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(perr(lineno, "unterminated section header".into()));
            };
            let name = name.trim();
            match name {
                "system" | "pulse" | "noise" | "measurement" | "outer_ga" | "inversion"
                | "map" | "schedule" | "run" => section = name.to_string(),
                other => return Err(perr(lineno, format!("unknown section `[{other}]`"))),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(perr(lineno, format!("expected `key = value`, got `{line}`")));
        };
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(perr(lineno, format!("empty value for `{key}`")));
        }

        let fnum = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| perr(lineno, format!("invalid number `{v}`")))
        };
        let unum = |v: &str| -> Result<usize> {
            v.parse::<usize>().map_err(|_| perr(lineno, format!("invalid integer `{v}`")))
        };

        match (section.as_str(), key) {
            ("system", "file") => config.system_file = Some(value.to_string()),
            ("system", "truth_file") => config.truth_file = Some(value.to_string()),
            ("pulse", "duration_ps") => config.duration = fnum(value)?,
            ("pulse", "envelope_width_ps") => config.envelope_width = fnum(value)?,
            ("pulse", "amp_min") => config.amp_min = fnum(value)?,
            ("pulse", "amp_max") => config.amp_max = fnum(value)?,
            ("pulse", "phase_min") => config.phase_min = fnum(value)?,
            ("pulse", "phase_max") => config.phase_max = fnum(value)?,
            ("noise", "eps_obs") => config.eps_obs = fnum(value)?,
            ("noise", "eps_fld") => config.eps_fld = fnum(value)?,
            ("noise", "replicates") => config.replicates = unum(value)?,
            ("noise", "value_floor") => config.value_floor = fnum(value)?,
            ("measurement", "q") => config.q = unum(value)?,
            ("measurement", "q_conventional") => config.q_conventional = unum(value)?,
            ("outer_ga", "population") => config.outer_population = unum(value)?,
            ("outer_ga", "generations") => config.outer_generations = unum(value)?,
            ("outer_ga", "crossover_rate") => config.outer_crossover = fnum(value)?,
            ("outer_ga", "mutation_rate") => config.outer_mutation = fnum(value)?,
            ("inversion", "family_size") => config.family_size = unum(value)?,
            ("inversion", "population") => config.inner_population = unum(value)?,
            ("inversion", "generations") => config.inner_generations = unum(value)?,
            ("inversion", "crossover_rate") => config.inner_crossover = fnum(value)?,
            ("inversion", "mutation_rate") => config.inner_mutation = fnum(value)?,
            ("inversion", "lambda_reg") => config.lambda_reg = fnum(value)?,
            ("inversion", "dedup_dist") => config.dedup_dist = fnum(value)?,
            ("inversion", "immigrant_fraction") => config.immigrant_fraction = fnum(value)?,
            ("map", "samples") => config.map_samples = unum(value)?,
            ("map", "rel_halfwidth") => config.rel_halfwidth = fnum(value)?,
            ("map", "zero_halfwidth") => config.zero_halfwidth = fnum(value)?,
            ("map", "validation_points") => config.validation_points = unum(value)?,
            ("map", "accuracy_threshold") => config.accuracy_threshold = fnum(value)?,
            ("map", "validate_amplitude") => config.validate_amplitude = fnum(value)?,
            ("schedule", "alpha_start") => config.alpha_start = fnum(value)?,
            ("schedule", "alpha_end") => config.alpha_end = fnum(value)?,
            ("schedule", "beta_start") => config.beta_start = fnum(value)?,
            ("schedule", "beta_end") => config.beta_end = fnum(value)?,
            ("run", "seed") => {
                config.seed = value
                    .parse::<u64>()
                    .map_err(|_| perr(lineno, format!("invalid seed `{value}`")))?;
            }
            ("run", "out_dir") => config.out_dir = value.to_string(),
            ("", _) => {
                return Err(perr(lineno, format!("key `{key}` appears before any section")))
            }
            (s, k) => return Err(perr(lineno, format!("unknown key `{k}` in section [{s}]"))),
        }
    }

    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<()> {
    let check = |ok: bool, msg: &str| -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Config(msg.into()))
        }
    };
    check(config.duration > 0.0, "pulse duration must be positive")?;
    check(config.envelope_width > 0.0, "envelope width must be positive")?;
    check(config.amp_min < config.amp_max, "amplitude bounds must satisfy min < max")?;
    check(config.phase_min < config.phase_max, "phase bounds must satisfy min < max")?;
    check(config.eps_obs >= 0.0, "eps_obs must be non-negative")?;
    check(config.eps_fld >= 0.0, "eps_fld must be non-negative")?;
    check(config.replicates >= 1, "replicates must be at least 1")?;
    check(config.value_floor > 0.0, "value_floor must be positive")?;
    check(config.q >= 1, "q must be at least 1")?;
    check(config.q_conventional >= 1, "q_conventional must be at least 1")?;
    check(config.outer_population >= 2, "outer population must be at least 2")?;
    check(config.inner_population >= 2, "inversion population must be at least 2")?;
    check(config.family_size >= 1, "family size must be at least 1")?;
    check(config.map_samples >= 2, "map samples must be at least 2")?;
    check(config.rel_halfwidth > 0.0, "rel_halfwidth must be positive")?;
    check(config.zero_halfwidth > 0.0, "zero_halfwidth must be positive")?;
    check(config.validation_points >= 1, "validation_points must be at least 1")?;
    check(config.dedup_dist >= 0.0, "dedup_dist must be non-negative")?;
    check(config.lambda_reg >= 0.0, "lambda_reg must be non-negative")?;
    check(
        (0.0..=1.0).contains(&config.immigrant_fraction),
        "immigrant_fraction must lie in [0, 1]",
    )?;
    for (label, rate) in [
        ("outer crossover", config.outer_crossover),
        ("outer mutation", config.outer_mutation),
        ("inner crossover", config.inner_crossover),
        ("inner mutation", config.inner_mutation),
    ] {
        check((0.0..=1.0).contains(&rate), &format!("{label} rate must lie in [0, 1]"))?;
    }
    check(
        config.validate_amplitude >= config.amp_min && config.validate_amplitude <= config.amp_max,
        "validate_amplitude must respect the amplitude bounds",
    )?;
    Ok(())
}

/// Fully resolved run: systems loaded, loop configuration assembled.
#[derive(Debug, Clone)]
pub struct BuiltRun {
    pub system: LevelSystem,
    pub nominal: HamiltonianParams,
    pub truth: HamiltonianParams,
    pub truth_reference: String,
    pub oi: OiConfig,
    pub config: RunConfig,
}

/// Load a config file from disk.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    parse_run_config(&path.display().to_string(), &text)
}

/// Resolve a `RunConfig` into the concrete systems and loop configuration.
/// Referenced system files are resolved relative to `base_dir`.
pub fn build_run(config: &RunConfig, base_dir: &Path) -> Result<BuiltRun> {
    let load_system = |file: &str| -> Result<(LevelSystem, HamiltonianParams)> {
        let path = base_dir.join(file);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read system file {}: {e}", path.display()))
        })?;
        parse_system_file(&path.display().to_string(), &text)
    };

    let (system, nominal) = match config.system_file.as_deref() {
        Some(file) => load_system(file)?,
        None => default_system(),
    };
    let (truth, truth_reference) = match config.truth_file.as_deref() {
        Some(file) => {
            let (tsys, tparams) = load_system(file)?;
            if tsys.dimension != system.dimension {
                return Err(Error::Config(format!(
                    "truth system dimension {} does not match nominal dimension {}",
                    tsys.dimension, system.dimension
                )));
            }
            (tparams, file.to_string())
        }
        None => (
            nominal.clone(),
            config.system_file.clone().unwrap_or_else(|| "builtin".into()),
        ),
    };

    let resonances = resonance_frequencies(&nominal);
    if resonances.degenerate {
        log::warn!("nominal system has nearly degenerate adjacent eigenvalues");
    }
    let mut template =
        PulseShape::with_carriers(config.duration, config.envelope_width, &resonances.frequencies);
    template.amplitude_bounds = (config.amp_min, config.amp_max);
    template.phase_bounds = (config.phase_min, config.phase_max);
    for c in template.components.iter_mut() {
        c.amplitude = config.amp_min;
        c.phase = config.phase_min;
    }

    let domain =
        MapDomain::around_nominal(&nominal.values, config.rel_halfwidth, config.zero_halfwidth)?;

    let oi = OiConfig {
        pulse_template: template,
        plan_samples: config.q,
        outer_ga: GaParams {
            pop_size: config.outer_population,
            crossover_rate: config.outer_crossover,
            mutation_rate: config.outer_mutation,
            max_generations: config.outer_generations,
            ..GaParams::default()
        },
        inversion: InversionConfig {
            family_size: config.family_size,
            ga: GaParams {
                pop_size: config.inner_population,
                crossover_rate: config.inner_crossover,
                mutation_rate: config.inner_mutation,
                max_generations: config.inner_generations,
                immigrant_fraction: config.immigrant_fraction,
                ..GaParams::default()
            },
            lambda_reg: config.lambda_reg,
            dedup_dist: config.dedup_dist,
            alpha: config.alpha_end,
        },
        map_samples: config.map_samples,
        domain,
        noise: FieldNoiseModel { eps_fld: config.eps_fld, replicates: config.replicates },
        eps_obs: config.eps_obs,
        value_floor: config.value_floor,
        alpha: RampSchedule { start: config.alpha_start, end: config.alpha_end },
        beta: RampSchedule { start: config.beta_start, end: config.beta_end },
        map_validation_points: config.validation_points,
        map_accuracy_threshold: config.accuracy_threshold,
    };
    oi.validate()?;

    Ok(BuiltRun {
        system,
        nominal,
        truth,
        truth_reference,
        oi,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let config = parse_run_config("mem", "").unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.eps_obs, 0.02);
        assert_eq!(config.eps_fld, 0.01);
        assert_eq!(config.replicates, 100);
        assert_eq!(config.duration, 1.0);
        assert_eq!(config.envelope_width, 0.2);
        assert_eq!(config.outer_crossover, 0.75);
        assert_eq!(config.inner_crossover, 0.70);
    }

    #[test]
    fn sections_and_overrides_parse() {
        let text = "\
# comment
[measurement]
q = 4

[outer_ga]
population = 6
generations = 3

[run]
seed = 7
out_dir = results
";
        let config = parse_run_config("mem", text).unwrap();
        assert_eq!(config.q, 4);
        assert_eq!(config.outer_population, 6);
        assert_eq!(config.outer_generations, 3);
        assert_eq!(config.seed, 7);
        assert_eq!(config.out_dir, "results");
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let err = parse_run_config("run.conf", "[pulse]\nwidth = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("run.conf:2"), "got: {msg}");
        assert!(msg.contains("unknown key"), "got: {msg}");
    }

    #[test]
    fn unknown_section_and_orphan_keys_rejected() {
        assert!(parse_run_config("m", "[qux]\n").is_err());
        assert!(parse_run_config("m", "q = 3\n").is_err());
        assert!(parse_run_config("m", "[measurement]\nq = zero\n").is_err());
    }

    #[test]
    fn paper_scale_switches_budgets() {
        let mut config = RunConfig::default();
        config.apply_paper_scale();
        assert_eq!(config.outer_population, 30);
        assert_eq!(config.outer_generations, 50);
        assert_eq!(config.family_size, 500);
        assert_eq!(config.map_samples, 6);
        // physics defaults untouched
        assert_eq!(config.eps_obs, 0.02);
        assert_eq!(config.duration, 1.0);
    }

    #[test]
    fn build_run_wires_the_loop_config() {
        let config = RunConfig::default();
        let built = build_run(&config, Path::new(".")).unwrap();
        assert_eq!(built.system.dimension, 8);
        assert_eq!(built.truth, built.nominal);
        assert_eq!(built.oi.pulse_template.components.len(), 7);
        assert_eq!(built.oi.domain.dim(), 64);
        assert_eq!(built.truth_reference, "builtin");
        // knob bounds follow the pulse section
        let kb = built.oi.pulse_template.knob_bounds();
        assert_eq!(kb.len(), 14);
        assert_eq!(kb[0], (0.0, 1.0));
        assert!((kb[13].1 - std::f64::consts::TAU).abs() < 1e-12);
    }

    #[test]
    fn invalid_rates_are_rejected() {
        assert!(parse_run_config("m", "[outer_ga]\ncrossover_rate = 1.5\n").is_err());
        assert!(parse_run_config("m", "[map]\nsamples = 1\n").is_err());
    }
}
