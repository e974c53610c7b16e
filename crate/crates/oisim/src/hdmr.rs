//! First-order cut-HDMR surrogate of the forward map.
//!
//! The map approximates `f(h) = f0 + sum_i g_i(h_i)` where `f0` is the
//! forward solve at a reference point and each `g_i` is a one-dimensional
//! interpolant through solver samples along the axis cut for variable `i`
//! (all other variables held at the reference). The type carries an `order`
//! field for higher expansions, but construction supports first order only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rngstream;
use crate::spline::{natural_second_derivs, segment_basis};

/// Box domain with the reference point (the nominal parameter vector) at its
/// center region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nominal: Vec<f64>,
}

impl MapDomain {
    /// `nominal +/- rel_halfwidth * |nominal|` per variable; entries with
    /// `|nominal| < 1e-12` get `+/- zero_halfwidth` instead.
    pub fn around_nominal(nominal: &[f64], rel_halfwidth: f64, zero_halfwidth: f64) -> Result<Self> {
        if rel_halfwidth <= 0.0 || zero_halfwidth <= 0.0 {
            return Err(Error::Config("domain half-widths must be positive".into()));
        }
        let mut lower = Vec::with_capacity(nominal.len());
        let mut upper = Vec::with_capacity(nominal.len());
        for &v in nominal {
            let hw = if v.abs() < 1e-12 { zero_halfwidth } else { rel_halfwidth * v.abs() };
            lower.push(v - hw);
            upper.push(v + hw);
        }
        Ok(Self { lower, upper, nominal: nominal.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.nominal.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.nominal.len() || self.upper.len() != self.nominal.len() {
            return Err(Error::Config("domain vector length mismatch".into()));
        }
        if self.nominal.is_empty() {
            return Err(Error::Config("empty domain".into()));
        }
        for i in 0..self.nominal.len() {
            if !(self.lower[i] < self.nominal[i] && self.nominal[i] < self.upper[i]) {
                return Err(Error::Config(format!(
                    "domain variable {i} must satisfy lower < nominal < upper, got [{}, {}] around {}",
                    self.lower[i], self.upper[i], self.nominal[i]
                )));
            }
        }
        Ok(())
    }

    pub fn span(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    /// Componentwise membership with a slack of 1e-12 of each span.
    pub fn contains(&self, point: &[f64]) -> std::result::Result<(), usize> {
        for i in 0..self.nominal.len() {
            let slack = 1e-12 * self.span(i);
            if point[i] < self.lower[i] - slack || point[i] > self.upper[i] + slack {
                return Err(i);
            }
        }
        Ok(())
    }

    /// Uniform random point in the box.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        (0..self.dim())
            .map(|i| rng.gen_range(self.lower[i]..=self.upper[i]))
            .collect()
    }
}

/// Axis-cut interpolants for one variable: shared knots, packed values and
/// second derivatives for all observables (`m`-major layout: `[m * K + k]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapTerm {
    knots: Vec<f64>,
    values: Vec<f64>,
    second_derivs: Vec<f64>,
}

/// Accuracy diagnostics from comparing the map against direct solves at
/// random domain points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDiagnostics {
    /// Per-observable RMS error over the validation points.
    pub rms_err: Vec<f64>,
    /// Per-observable max absolute error.
    pub max_err: Vec<f64>,
    pub n_test: usize,
    /// Direct propagations used to build the map: `1 + n_vars * samples`.
    pub build_solves: usize,
}

impl MapDiagnostics {
    pub fn overall_rms(&self) -> f64 {
        if self.rms_err.is_empty() {
            return 0.0;
        }
        let ms: f64 = self.rms_err.iter().map(|e| e * e).sum::<f64>() / self.rms_err.len() as f64;
        ms.sqrt()
    }

    pub fn overall_max(&self) -> f64 {
        self.max_err.iter().cloned().fold(0.0, f64::max)
    }
}

/// First-order cut-HDMR map for one control pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutHdmrMap {
    pub domain: MapDomain,
    pub reference: Vec<f64>,
    /// Observable values at the reference point.
    pub f0: Vec<f64>,
    terms: Vec<MapTerm>,
    /// Expansion order; construction supports 1 only.
    pub order: usize,
    /// Sample nodes per variable used at build time.
    pub samples: usize,
    pub pulse_id: String,
    pub diagnostics: Option<MapDiagnostics>,
}

/// Relative tolerance (of the span) for snapping a sample node onto the
/// reference when they nearly coincide.
const REF_SNAP_TOL: f64 = 1e-9;

impl CutHdmrMap {
    pub fn n_observables(&self) -> usize {
        self.f0.len()
    }

    pub fn n_variables(&self) -> usize {
        self.reference.len()
    }

    /// Build solves consumed: `1 + n_vars * samples`.
    pub fn build_solves(&self) -> usize {
        1 + self.n_variables() * self.samples
    }

    /// Evaluate the map at `h`. Out-of-domain input is an error naming the
    /// offending component, never an extrapolation.
    pub fn eval(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.f0.len()];
        self.eval_into(h, &mut out)?;
        Ok(out)
    }

    /// As [`eval`], writing into a caller-owned buffer.
    pub fn eval_into(&self, h: &[f64], out: &mut [f64]) -> Result<()> {
        if h.len() != self.reference.len() {
            return Err(Error::Input(format!(
                "point dimension {} does not match map dimension {}",
                h.len(),
                self.reference.len()
            )));
        }
        if let Err(i) = self.domain.contains(h) {
            return Err(Error::Domain(format!(
                "component {i} = {} outside map domain [{}, {}]",
                h[i], self.domain.lower[i], self.domain.upper[i]
            )));
        }
        debug_assert_eq!(out.len(), self.f0.len());
        out.copy_from_slice(&self.f0);
        let n_obs = self.f0.len();
        for (i, term) in self.terms.iter().enumerate() {
            let sb = segment_basis(&term.knots, h[i]);
            let k_count = term.knots.len();
            for m in 0..n_obs {
                let base = m * k_count + sb.k;
                out[m] += sb.a * term.values[base]
                    + sb.b * term.values[base + 1]
                    + sb.c * term.second_derivs[base]
                    + sb.d * term.second_derivs[base + 1];
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse and validate a persisted map.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let map: CutHdmrMap = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.reference != self.domain.nominal {
            return Err(Error::Config("map reference must equal the domain nominal".into()));
        }
        if self.order != 1 {
            return Err(Error::Config(format!(
                "only first-order maps are supported, got order {}",
                self.order
            )));
        }
        if self.samples < 2 {
            return Err(Error::Config("map needs at least 2 sample nodes".into()));
        }
        if self.terms.len() != self.reference.len() {
            return Err(Error::Config("term count does not match dimension".into()));
        }
        if !self.f0.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite f0".into()));
        }
        let n_obs = self.f0.len();
        for (i, term) in self.terms.iter().enumerate() {
            let k = term.knots.len();
            if k < 2 {
                return Err(Error::Config(format!("variable {i}: too few knots")));
            }
            if term.knots.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!(
                    "variable {i}: knots must be strictly increasing"
                )));
            }
            if term.values.len() != n_obs * k || term.second_derivs.len() != n_obs * k {
                return Err(Error::Config(format!("variable {i}: packed array size mismatch")));
            }
            if !term.values.iter().all(|v| v.is_finite())
                || !term.second_derivs.iter().all(|v| v.is_finite())
            {
                return Err(Error::Config(format!("variable {i}: non-finite interpolant data")));
            }
            if term.knots[0] < self.domain.lower[i] - 1e-9 * self.domain.span(i)
                || *term.knots.last().unwrap() > self.domain.upper[i] + 1e-9 * self.domain.span(i)
            {
                return Err(Error::Config(format!("variable {i}: knots outside domain")));
            }
        }
        Ok(())
    }
}

/// Build a first-order cut-HDMR map.
///
/// `solver` is the noiseless forward evaluation for a full parameter vector
/// (populations for the nominal pulse). `samples >= 2` nodes are placed
/// uniformly on each variable's range; the cut function's exact zero at the
/// reference is pinned as an extra interpolation knot.
pub fn build_map<S>(
    solver: S,
    pulse_id: String,
    domain: &MapDomain,
    samples: usize,
    n_observables: usize,
) -> Result<CutHdmrMap>
where
    S: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    domain.validate()?;
    if samples < 2 {
        return Err(Error::Config(format!("map samples must be >= 2, got {samples}")));
    }
    let dim = domain.dim();

    let f0 = solver(&domain.nominal).map_err(|e| {
        Error::MapBuild(format!("solver failed at the reference point: {e}"))
    })?;
    if f0.len() != n_observables {
        return Err(Error::MapBuild(format!(
            "solver returned {} observables, expected {n_observables}",
            f0.len()
        )));
    }

    // Node abscissae per variable, with near-reference nodes snapped.
    let node_sets: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let span = domain.span(i);
            (0..samples)
                .map(|s| {
                    let x = domain.lower[i] + span * s as f64 / (samples - 1) as f64;
                    if (x - domain.nominal[i]).abs() <= REF_SNAP_TOL * span {
                        domain.nominal[i]
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();

    // All cut solves are independent.
    let solve_jobs: Vec<(usize, usize)> = (0..dim)
        .flat_map(|i| (0..samples).map(move |s| (i, s)))
        .collect();
    let solved: Vec<Result<Vec<f64>>> = solve_jobs
        .par_iter()
        .map(|&(i, s)| {
            let x = node_sets[i][s];
            let mut point = domain.nominal.clone();
            point[i] = x;
            solver(&point).map_err(|e| {
                Error::MapBuild(format!("solver failed for variable {i} at node {s} (x = {x}): {e}"))
            })
        })
        .collect();

    let mut terms = Vec::with_capacity(dim);
    let mut job = 0usize;
    for i in 0..dim {
        // Knots: sample nodes plus the pinned reference zero (unless a node
        // snapped onto the reference already).
        let mut knots: Vec<(f64, Vec<f64>)> = Vec::with_capacity(samples + 1);
        let mut have_ref = false;
        for s in 0..samples {
            let x = node_sets[i][s];
            let fx = match &solved[job] {
                Ok(v) => v.clone(),
                Err(e) => return Err(Error::MapBuild(e.to_string())),
            };
            job += 1;
            if fx.len() != n_observables {
                return Err(Error::MapBuild(format!(
                    "solver returned {} observables at variable {i} node {s}",
                    fx.len()
                )));
            }
            let g: Vec<f64> = fx.iter().zip(f0.iter()).map(|(a, b)| a - b).collect();
            if x == domain.nominal[i] {
                have_ref = true;
            }
            knots.push((x, g));
        }
        if !have_ref {
            knots.push((domain.nominal[i], vec![0.0; n_observables]));
        }
        knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let k_count = knots.len();
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let mut values = vec![0.0; n_observables * k_count];
        for (k, (_, g)) in knots.iter().enumerate() {
            for m in 0..n_observables {
                values[m * k_count + k] = g[m];
            }
        }
        let mut second_derivs = vec![0.0; n_observables * k_count];
        if k_count >= 4 {
            for m in 0..n_observables {
                let ys = &values[m * k_count..(m + 1) * k_count];
                let y2 = natural_second_derivs(&xs, ys);
                second_derivs[m * k_count..(m + 1) * k_count].copy_from_slice(&y2);
            }
        }
        terms.push(MapTerm { knots: xs, values, second_derivs });
    }

    Ok(CutHdmrMap {
        domain: domain.clone(),
        reference: domain.nominal.clone(),
        f0,
        terms,
        order: 1,
        samples,
        pulse_id,
        diagnostics: None,
    })
}

/// Compare the map against the direct solver at `n_test` uniform random
/// domain points and fill diagnostics.
pub fn validate_map<S>(
    map: &CutHdmrMap,
    solver: S,
    n_test: usize,
    seed: u64,
) -> Result<MapDiagnostics>
where
    S: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if n_test == 0 {
        return Err(Error::Input("validation needs at least one test point".into()));
    }
    let points: Vec<Vec<f64>> = {
        let mut rng = rngstream::stream(seed, &[0x0AB5_0001]);
        (0..n_test).map(|_| map.domain.sample(&mut rng)).collect()
    };
    let errors: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .map(|p| {
            let direct = solver(p)?;
            let predicted = map.eval(p)?;
            Ok(direct
                .iter()
                .zip(predicted.iter())
                .map(|(a, b)| a - b)
                .collect())
        })
        .collect();

    let n_obs = map.n_observables();
    let mut sq_sum = vec![0.0; n_obs];
    let mut max_err = vec![0.0f64; n_obs];
    for row in errors {
        let row = row?;
        for (m, e) in row.iter().enumerate() {
            sq_sum[m] += e * e;
            max_err[m] = max_err[m].max(e.abs());
        }
    }
    let rms_err: Vec<f64> = sq_sum.iter().map(|s| (s / n_test as f64).sqrt()).collect();
    Ok(MapDiagnostics { rms_err, max_err, n_test, build_solves: map.build_solves() })
}
