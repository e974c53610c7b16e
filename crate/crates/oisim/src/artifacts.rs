//! Run artifacts: the manifest, CSV grids, spectrum, trace, and the
//! persisted family, plus the high-level command implementations the CLI
//! dispatches to.
//!
//! Every file written here is re-readable through the library. Wall-clock
//! data lives in the manifest's `timing` object only, so two runs with the
//! same config and seed agree byte-for-byte everywhere else.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::BuiltRun;
use crate::datasim::MeasurementPlan;
use crate::error::{Error, Result};
use crate::ga::GenStat;
use crate::hdmr::{build_map, validate_map, CutHdmrMap, MapDiagnostics};
use crate::inversion::FamilyRecord;
use crate::oi::{population_solver, run_conventional, run_oi, Accounting, OiConfig, OiResult, Timing};
use crate::rngstream;
use crate::system::SquareMatrix;

/// Deterministic result digest recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub q: usize,
    pub measurements: usize,
    pub knobs: Vec<f64>,
    pub avg_rel_uncertainty_h: f64,
    pub avg_rel_uncertainty_mu: f64,
    pub avg_rel_uncertainty: f64,
    #[serde(with = "crate::jsonnum")]
    pub uncertainty: f64,
    pub best_cost: Option<f64>,
    pub alpha_final: f64,
    pub map_rms: f64,
    pub map_flagged: bool,
    pub unconverged: bool,
    pub family_members: usize,
    pub accounting: Accounting,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub truth_reference: String,
    pub config: crate::config::RunConfig,
    pub summary: RunSummary,
    /// Per-generation outer cost trace (also exported as trace.csv).
    pub outer_trace: Vec<GenStat>,
    /// Not reproducible across runs; strip before comparing manifests.
    pub timing: Timing,
}

impl Manifest {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn manifest_for(command: &str, built: &BuiltRun, q: usize, result: &OiResult) -> Manifest {
    Manifest {
        command: command.to_string(),
        seed: built.config.seed,
        truth_reference: built.truth_reference.clone(),
        config: built.config.clone(),
        summary: RunSummary {
            q,
            measurements: result.dataset.len(),
            knobs: result.knobs.clone(),
            avg_rel_uncertainty_h: result.avg_rel_uncertainty_h,
            avg_rel_uncertainty_mu: result.avg_rel_uncertainty_mu,
            avg_rel_uncertainty: result.avg_rel_uncertainty,
            uncertainty: result.uncertainty,
            best_cost: result.best_cost,
            alpha_final: result.alpha_final,
            map_rms: result.map_rms,
            map_flagged: result.map_flagged,
            unconverged: result.family.unconverged,
            family_members: result.family.members.len(),
            accounting: result.accounting,
        },
        outer_trace: result.outer_trace.clone(),
        timing: result.timing,
    }
}

/// Run the closed loop for the configured Q and assemble its manifest.
pub fn execute_oi(built: &BuiltRun) -> Result<(OiResult, Manifest)> {
    let result = run_oi(&built.truth, &built.oi, built.config.seed)?;
    let manifest = manifest_for("oi", built, built.oi.plan_samples, &result);
    Ok((result, manifest))
}

/// Run the random-field baseline at `q_conventional` time samples.
pub fn execute_conventional(built: &BuiltRun) -> Result<(OiResult, Manifest)> {
    let mut oi = built.oi.clone();
    oi.plan_samples = built.config.q_conventional;
    let result = run_conventional(&built.truth, &oi, built.config.seed)?;
    let manifest = manifest_for("conventional", built, oi.plan_samples, &result);
    Ok((result, manifest))
}

/// Diagnostics for `map-validate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapValidateReport {
    pub samples: usize,
    pub build_solves: usize,
    pub n_observables: usize,
    pub overall_rms: f64,
    pub overall_max: f64,
    pub flagged: bool,
    pub diagnostics: MapDiagnostics,
    pub solve_ms: f64,
    pub eval_us: f64,
    pub speed_ratio: f64,
}

impl MapValidateReport {
    pub fn render(&self) -> String {
        format!(
            "map samples per variable: {}\n\
             build_solves = {}\n\
             observables = {}\n\
             validation points = {}\n\
             rms error = {:.6}\n\
             max error = {:.6}\n\
             flagged = {}\n\
             direct solve = {:.3} ms\n\
             map eval = {:.3} us\n\
             speed ratio = {:.0}x\n",
            self.samples,
            self.build_solves,
            self.n_observables,
            self.diagnostics.n_test,
            self.overall_rms,
            self.overall_max,
            self.flagged,
            self.solve_ms,
            self.eval_us,
            self.speed_ratio,
        )
    }
}

/// Build one map for the configured validation pulse, measure its accuracy
/// and its amortized speed advantage over direct propagation.
pub fn execute_map_validate(built: &BuiltRun) -> Result<(CutHdmrMap, MapValidateReport)> {
    let config = &built.config;
    let oi: &OiConfig = &built.oi;
    let mut pulse = oi.pulse_template.clone();
    for c in pulse.components.iter_mut() {
        c.amplitude = config.validate_amplitude;
    }
    let plan = MeasurementPlan::new(config.q, pulse.duration)?;
    let n_obs = plan.total_measurements(built.system.dimension);
    let solver = population_solver(built.system.dimension, pulse.clone(), &plan);

    let map = build_map(
        &solver,
        crate::datasim::pulse_id(&pulse.knobs()),
        &oi.domain,
        config.map_samples,
        n_obs,
    )?;
    let diagnostics = validate_map(
        &map,
        &solver,
        config.validation_points,
        rngstream::mix(config.seed, &[0x7A11]),
    )?;

    // Amortized timings: enough evaluations to swamp per-call overhead.
    let n_solves = 5;
    let started = Instant::now();
    for k in 0..n_solves {
        let mut h = oi.domain.nominal.clone();
        h[0] += 1e-9 * k as f64;
        solver(&h)?;
    }
    let solve_ms = started.elapsed().as_secs_f64() * 1e3 / n_solves as f64;

    let n_evals = 10_000;
    let mut rng = rngstream::stream(config.seed, &[0x7A12]);
    let points: Vec<Vec<f64>> = (0..64).map(|_| oi.domain.sample(&mut rng)).collect();
    let mut sink = vec![0.0; n_obs];
    let started = Instant::now();
    for k in 0..n_evals {
        map.eval_into(&points[k % points.len()], &mut sink)?;
    }
    let eval_us = started.elapsed().as_secs_f64() * 1e6 / n_evals as f64;

    let overall_rms = diagnostics.overall_rms();
    let report = MapValidateReport {
        samples: config.map_samples,
        build_solves: map.build_solves(),
        n_observables: n_obs,
        overall_rms,
        overall_max: diagnostics.overall_max(),
        flagged: overall_rms > config.accuracy_threshold,
        diagnostics,
        solve_ms,
        eval_us,
        speed_ratio: solve_ms * 1e3 / eval_us,
    };
    Ok((map, report))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn grid_csv(grid: &SquareMatrix) -> String {
    let n = grid.size();
    let mut out = String::new();
    for row in 0..n {
        for col in 0..n {
            if col > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", grid.get(row, col)));
        }
        out.push('\n');
    }
    out
}

/// Parse an N x N heatmap CSV back into a matrix.
pub fn grid_from_csv(text: &str) -> Result<SquareMatrix> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let n = rows.len();
    if n == 0 {
        return Err(Error::Input("empty grid".into()));
    }
    let mut grid = SquareMatrix::zeros(n);
    for (r, line) in rows.iter().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(Error::Input(format!("grid row {r} has {} cells, expected {n}", cells.len())));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("invalid grid value `{cell}`")))?;
            grid.set(r, c, v);
        }
    }
    Ok(grid)
}

fn trace_csv(trace: &[GenStat]) -> String {
    let mut out = String::from("generation,best_fitness,mean_fitness,evals\n");
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.generation, row.best_fitness, row.mean_fitness, row.evaluations
        ));
    }
    out
}

/// Power-spectrum grid: 512 points from 0 to 1.3x the fastest carrier.
pub fn spectrum_grid(pulse: &crate::pulse::PulseShape) -> Vec<f64> {
    let top = 1.3 * pulse.max_frequency().max(1.0);
    (0..512).map(|k| top * k as f64 / 511.0).collect()
}

fn spectrum_csv(pulse: &crate::pulse::PulseShape) -> Result<String> {
    let spec = pulse.power_spectrum(&spectrum_grid(pulse))?;
    let mut out = String::from("freq_rad_per_ps,power\n");
    for (f, p) in spec {
        out.push_str(&format!("{f},{p}\n"));
    }
    Ok(out)
}

/// Write the full artifact set for an identification run.
pub fn write_run_artifacts(out_dir: &Path, manifest: &Manifest, result: &OiResult) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_text(&out_dir.join("manifest.json"), &manifest.to_json_string()?)?;
    write_text(&out_dir.join("h_uncertainty.csv"), &grid_csv(&result.h_grid))?;
    write_text(&out_dir.join("mu_uncertainty.csv"), &grid_csv(&result.mu_grid))?;
    write_text(&out_dir.join("spectrum.csv"), &spectrum_csv(&result.pulse)?)?;
    write_text(&out_dir.join("trace.csv"), &trace_csv(&result.outer_trace))?;
    let record = FamilyRecord::new(result.family.clone(), {
        let mut inv = manifest.config_to_inversion();
        inv.alpha = result.alpha_final;
        inv
    })?;
    write_text(&out_dir.join("family.json"), &record.to_json_string()?)?;
    Ok(())
}

impl Manifest {
    /// The inversion configuration echoed into family.json.
    fn config_to_inversion(&self) -> crate::inversion::InversionConfig {
        crate::inversion::InversionConfig {
            family_size: self.config.family_size,
            ga: crate::ga::GaParams {
                pop_size: self.config.inner_population,
                crossover_rate: self.config.inner_crossover,
                mutation_rate: self.config.inner_mutation,
                max_generations: self.config.inner_generations,
                immigrant_fraction: self.config.immigrant_fraction,
                ..crate::ga::GaParams::default()
            },
            lambda_reg: self.config.lambda_reg,
            dedup_dist: self.config.dedup_dist,
            alpha: self.config.alpha_end,
        }
    }
}

/// Write the map produced by `map-validate`.
pub fn write_map_artifacts(out_dir: &Path, map: &CutHdmrMap, report: &MapValidateReport) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_text(&out_dir.join("map.json"), &map.to_json_string()?)?;
    write_text(&out_dir.join("map_report.json"), &serde_json::to_string_pretty(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{build_run, RunConfig};

    fn tiny_run() -> BuiltRun {
        let mut rc = RunConfig::default();
        rc.outer_population = 3;
        rc.outer_generations = 1;
        rc.inner_population = 8;
        rc.inner_generations = 3;
        rc.family_size = 6;
        rc.map_samples = 2;
        rc.replicates = 2;
        rc.validation_points = 2;
        rc.q = 1;
        build_run(&rc, Path::new(".")).unwrap()
    }

    #[test]
    fn artifacts_roundtrip_through_the_library() {
        let built = tiny_run();
        let (result, manifest) = execute_oi(&built).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run_artifacts(dir.path(), &manifest, &result).unwrap();

        for name in [
            "manifest.json",
            "h_uncertainty.csv",
            "mu_uncertainty.csv",
            "spectrum.csv",
            "trace.csv",
            "family.json",
        ] {
            assert!(dir.path().join(name).exists(), "missing artifact {name}");
        }

        let manifest_text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let back = Manifest::from_json_str(&manifest_text).unwrap();
        assert_eq!(back.summary.knobs, manifest.summary.knobs);

        let grid_text = std::fs::read_to_string(dir.path().join("h_uncertainty.csv")).unwrap();
        let grid = grid_from_csv(&grid_text).unwrap();
        assert_eq!(grid, result.h_grid);

        let fam_text = std::fs::read_to_string(dir.path().join("family.json")).unwrap();
        let record = FamilyRecord::from_json_str(&fam_text).unwrap();
        assert_eq!(record.family.members.len(), result.family.members.len());

        let spec_text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
        assert!(spec_text.starts_with("freq_rad_per_ps,power\n"));
        assert_eq!(spec_text.lines().count(), 513);
    }

    #[test]
    fn map_validate_reports_solve_count() {
        let built = tiny_run();
        let (map, report) = execute_map_validate(&built).unwrap();
        assert_eq!(report.build_solves, 1 + 64 * 2);
        assert_eq!(map.build_solves(), report.build_solves);
        assert!(report.speed_ratio > 1.0);
        let dir = tempfile::tempdir().unwrap();
        write_map_artifacts(dir.path(), &map, &report).unwrap();
        let text = std::fs::read_to_string(dir.path().join("map.json")).unwrap();
        assert!(CutHdmrMap::from_json_str(&text).is_ok());
    }
}
