//! Family extraction: find the set of parameter vectors consistent with one
//! dataset, and quantify its spread.
//!
//! The cost has a dead zone: a measurement contributes nothing while the
//! prediction sits inside its error bar, and a squared relative deviation
//! otherwise. Every GA-encountered individual whose data misfit is exactly
//! zero is archived (subject to a minimum spacing), and the archive's
//! per-variable extent is the reported identification uncertainty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::ControlFlow;

use crate::datasim::LabDataset;
use crate::error::{Error, Result};
use crate::ga::{run_ga, GaParams, GenStat};
use crate::hdmr::MapDomain;
use crate::system::{HamiltonianParams, MatrixBlock, SquareMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InversionConfig {
    /// Target family size N_s.
    pub family_size: usize,
    pub ga: GaParams,
    /// Weight of the optional quadratic deviation-from-nominal penalty.
    pub lambda_reg: f64,
    /// Minimum normalized L-infinity spacing between archived members.
    pub dedup_dist: f64,
    /// Balance coefficient for the family-width term of the uncertainty.
    pub alpha: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            family_size: 500,
            ga: GaParams {
                pop_size: 100,
                crossover_rate: 0.70,
                mutation_rate: 0.05,
                max_generations: 40,
                immigrant_fraction: 0.25,
                ..GaParams::default()
            },
            lambda_reg: 0.0,
            dedup_dist: 1e-3,
            alpha: 1e-2,
        }
    }
}

/// One consistent parameter vector with its recorded cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub point: Vec<f64>,
    #[serde(with = "crate::jsonnum")]
    pub residual: f64,
}

/// The extracted family plus enough context to interpret it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InversionFamily {
    pub members: Vec<FamilyMember>,
    pub domain: MapDomain,
    /// Set when no zero-misfit member was found; the family then holds the
    /// single best individual.
    pub unconverged: bool,
    pub evaluations: u64,
    pub dataset_id: String,
    pub trace: Vec<GenStat>,
}

/// Per-variable family extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableBounds {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
    /// `|2w / (lo + hi)|`, or `w / half-width` for variables whose domain
    /// straddles zero (see `domain_normalized`).
    pub rel_width: f64,
    /// True when the relative width fell back to domain normalization.
    pub domain_normalized: bool,
}

/// Data-misfit term: mean over measurements of the dead-zone/squared-relative
/// branch.
pub fn data_misfit(dataset: &LabDataset, predicted: &[f64]) -> Result<f64> {
    if predicted.len() != dataset.values.len() {
        return Err(Error::Input(format!(
            "prediction length {} does not match dataset length {}",
            predicted.len(),
            dataset.values.len()
        )));
    }
    let m_count = dataset.values.len() as f64;
    let mut sum = 0.0;
    for (m, (&lab, &pred)) in dataset.values.iter().zip(predicted.iter()).enumerate() {
        let diff = lab - pred;
        if diff.abs() <= dataset.eps_abs(m) {
            continue;
        }
        // Same floor as the error bars, so near-zero measurements cannot
        // produce unbounded cost.
        let denom = lab.abs().max(dataset.value_floor);
        let r = diff / denom;
        sum += r * r;
    }
    Ok(sum / m_count)
}

/// Quadratic deviation-from-nominal penalty (the optional regularization).
/// Zero-nominal variables are scaled by the domain half-width instead.
pub fn regularization(point: &[f64], domain: &MapDomain, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, (&p, &nom)) in point.iter().zip(domain.nominal.iter()).enumerate() {
        let scale = if nom.abs() < 1e-12 { 0.5 * domain.span(i) } else { nom.abs() };
        let r = (p - nom) / scale;
        sum += r * r;
    }
    lambda * sum
}

/// Full inversion cost for one trial point.
pub fn inversion_cost<P>(
    point: &[f64],
    dataset: &LabDataset,
    predictor: P,
    domain: &MapDomain,
    lambda_reg: f64,
) -> Result<f64>
where
    P: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let predicted = predictor(point)?;
    Ok(data_misfit(dataset, &predicted)? + regularization(point, domain, lambda_reg))
}

/// Extract the family of consistent parameter vectors for one dataset.
///
/// Runs the steady-state GA on the inversion cost; every individual whose
/// misfit term is exactly zero is archived (deduplicated at `dedup_dist` in
/// normalized L-infinity distance) until `family_size` members are found or
/// the generation budget runs out.
pub fn extract_family<P>(
    dataset: &LabDataset,
    predictor: P,
    domain: &MapDomain,
    config: &InversionConfig,
) -> Result<InversionFamily>
where
    P: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if dataset.values.is_empty() {
        return Err(Error::Input("cannot invert an empty dataset".into()));
    }
    domain.validate()?;
    let dim = domain.dim();

    let fitness = |point: &[f64], eval_id: u64| -> f64 {
        match inversion_cost(point, dataset, &predictor, domain, config.lambda_reg) {
            Ok(cost) => cost,
            Err(e) => {
                log::warn!("inversion predictor failed at eval {eval_id}: {e}");
                f64::INFINITY
            }
        }
    };

    let bounds: Vec<(f64, f64)> = (0..dim).map(|i| (domain.lower[i], domain.upper[i])).collect();
    let spans: Vec<f64> = (0..dim).map(|i| domain.span(i)).collect();

    let mut archive: Vec<FamilyMember> = Vec::new();
    let outcome = run_ga(fitness, &bounds, &config.ga, |event| {
        // Zero data misfit shows up as fitness == regularization term
        // (bitwise: a zero misfit sum stays exactly 0.0).
        let reg = regularization(event.genome, domain, config.lambda_reg);
        if event.fitness == reg {
            let far_enough = archive.iter().all(|member| {
                let mut dist = 0.0f64;
                for i in 0..dim {
                    dist = dist.max((member.point[i] - event.genome[i]).abs() / spans[i]);
                }
                dist >= config.dedup_dist
            });
            if far_enough {
                archive.push(FamilyMember {
                    point: event.genome.to_vec(),
                    residual: event.fitness,
                });
                if archive.len() >= config.family_size {
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    });

    let unconverged = archive.is_empty();
    let members = if unconverged {
        vec![FamilyMember { point: outcome.best.genome.clone(), residual: outcome.best.fitness }]
    } else {
        archive
    };

    Ok(InversionFamily {
        members,
        domain: domain.clone(),
        unconverged,
        evaluations: outcome.evaluations,
        dataset_id: dataset.pulse_id.clone(),
        trace: outcome.trace,
    })
}

/// Componentwise min/max/width of the family members, with the relative
/// width used by the uncertainty metric.
pub fn family_bounds(family: &InversionFamily) -> Result<Vec<VariableBounds>> {
    if family.members.is_empty() {
        return Err(Error::Input("family has no members".into()));
    }
    let dim = family.domain.dim();
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for member in &family.members {
            lo = lo.min(member.point[i]);
            hi = hi.max(member.point[i]);
        }
        let width = hi - lo;
        let straddles = family.domain.lower[i] <= 0.0 && family.domain.upper[i] >= 0.0;
        let (rel_width, domain_normalized) = if straddles {
            (width / (0.5 * family.domain.span(i)), true)
        } else {
            ((2.0 * width / (lo + hi)).abs(), false)
        };
        out.push(VariableBounds { lo, hi, width, rel_width, domain_normalized });
    }
    Ok(out)
}

/// Identification uncertainty: mean member cost plus `alpha` times the mean
/// relative family width.
pub fn family_uncertainty(family: &InversionFamily, alpha: f64) -> Result<f64> {
    let bounds = family_bounds(family)?;
    let n = family.members.len() as f64;
    let mean_residual = family.members.iter().map(|m| m.residual).sum::<f64>() / n;
    let mean_width =
        bounds.iter().map(|b| b.rel_width.abs()).sum::<f64>() / bounds.len() as f64;
    Ok(mean_residual + alpha * mean_width)
}

/// Map per-variable relative widths back onto N x N matrix positions
/// (mirrored across the diagonal) for the internal-Hamiltonian and dipole
/// blocks. The family dimension must be a full parameter vector.
pub fn uncertainty_grids(
    family: &InversionFamily,
    dimension: usize,
) -> Result<(SquareMatrix, SquareMatrix)> {
    if family.domain.dim() != dimension * dimension {
        return Err(Error::Input(format!(
            "family dimension {} is not a full parameter vector for dimension {dimension}",
            family.domain.dim()
        )));
    }
    let bounds = family_bounds(family)?;
    let mut h_grid = SquareMatrix::zeros(dimension);
    let mut mu_grid = SquareMatrix::zeros(dimension);
    for (index, vb) in bounds.iter().enumerate() {
        let (block, row, col) = HamiltonianParams::entry_of(dimension, index);
        match block {
            MatrixBlock::Internal => h_grid.set_sym(row, col, vb.rel_width),
            MatrixBlock::Dipole => mu_grid.set_sym(row, col, vb.rel_width),
        }
    }
    Ok((h_grid, mu_grid))
}

/// Persisted form: family plus derived bounds and the configuration used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub family: InversionFamily,
    pub bounds: Vec<VariableBounds>,
    pub config: InversionConfig,
}

impl FamilyRecord {
    pub fn new(family: InversionFamily, config: InversionConfig) -> Result<Self> {
        let bounds = family_bounds(&family)?;
        Ok(Self { family, bounds, config })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let record: FamilyRecord = serde_json::from_str(text)?;
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.domain.validate()?;
        if self.family.members.is_empty() {
            return Err(Error::Config("family record has no members".into()));
        }
        let dim = self.family.domain.dim();
        if self.bounds.len() != dim {
            return Err(Error::Config("bounds length does not match domain".into()));
        }
        for member in &self.family.members {
            if member.point.len() != dim {
                return Err(Error::Config("member dimension mismatch".into()));
            }
            // residual may be +inf for an unconverged single-member family
            if !member.point.iter().all(|v| v.is_finite()) || member.residual.is_nan() {
                return Err(Error::Config("non-finite family member".into()));
            }
        }
        Ok(())
    }
}

/// Exhaustive grid scan of the zero-misfit region for low-dimensional
/// problems: the brute-force oracle the GA extraction is checked against.
/// Returns per-variable (lo, hi) over consistent grid points, or None when no
/// grid point is consistent.
pub fn grid_scan_bounds<P>(
    dataset: &LabDataset,
    predictor: P,
    domain: &MapDomain,
    cells_per_axis: usize,
) -> Result<Option<Vec<(f64, f64)>>>
where
    P: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let dim = domain.dim();
    if dim == 0 || cells_per_axis < 2 {
        return Err(Error::Input("grid scan needs dim >= 1 and >= 2 cells".into()));
    }
    let total: usize = cells_per_axis.pow(dim as u32);
    let hits: Vec<Option<Vec<f64>>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut idx = flat;
            let mut point = Vec::with_capacity(dim);
            for i in 0..dim {
                let k = idx % cells_per_axis;
                idx /= cells_per_axis;
                point.push(
                    domain.lower[i]
                        + domain.span(i) * k as f64 / (cells_per_axis - 1) as f64,
                );
            }
            let predicted = predictor(&point)?;
            let misfit = data_misfit(dataset, &predicted)?;
            Ok::<_, Error>(if misfit == 0.0 { Some(point) } else { None })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut bounds: Option<Vec<(f64, f64)>> = None;
    for point in hits.into_iter().flatten() {
        match bounds.as_mut() {
            None => bounds = Some(point.iter().map(|&v| (v, v)).collect()),
            Some(b) => {
                for (slot, v) in b.iter_mut().zip(point.iter()) {
                    slot.0 = slot.0.min(*v);
                    slot.1 = slot.1.max(*v);
                }
            }
        }
    }
    Ok(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasim::MeasurementPlan;
    use crate::pulse::PulseShape;

    fn dataset_with(values: Vec<f64>, err_rel: f64) -> LabDataset {
        let pulse = PulseShape::with_carriers(1.0, 0.2, &[10.0]);
        LabDataset {
            values,
            err_rel,
            plan: MeasurementPlan::new(1, 1.0).unwrap(),
            pulse_id: "test".into(),
            pulse,
            seed: 0,
            value_floor: crate::datasim::DEFAULT_VALUE_FLOOR,
        }
    }

    fn unit_domain(dim: usize) -> MapDomain {
        MapDomain {
            lower: vec![0.5; dim],
            upper: vec![1.5; dim],
            nominal: vec![1.0; dim],
        }
    }

    #[test]
    fn cost_is_zero_inside_all_bars() {
        let ds = dataset_with(vec![0.5, 0.25], 0.02);
        let predicted = vec![0.505, 0.248];
        assert_eq!(data_misfit(&ds, &predicted).unwrap(), 0.0);
    }

    #[test]
    fn single_violation_hand_value() {
        // |(0.5 - 0.6)/0.5|^2 = 0.04
        let ds = dataset_with(vec![0.5], 0.02);
        let j = data_misfit(&ds, &[0.6]).unwrap();
        assert!((j - 0.04).abs() < 1e-15, "got {j}");
    }

    #[test]
    fn averaging_over_two_measurements_hand_value() {
        // one inside its bar, one contributing 0.04 -> mean 0.02
        let ds = dataset_with(vec![0.5, 0.5], 0.02);
        let j = data_misfit(&ds, &[0.505, 0.6]).unwrap();
        assert!((j - 0.02).abs() < 1e-15, "got {j}");
    }

    #[test]
    fn regularization_scales_and_vanishes() {
        let domain = unit_domain(2);
        assert_eq!(regularization(&[1.2, 0.9], &domain, 0.0), 0.0);
        let r = regularization(&[1.2, 0.9], &domain, 2.0);
        // 2 * ((0.2/1)^2 + (0.1/1)^2)
        assert!((r - 2.0 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn family_bounds_hand_case_and_order_invariance() {
        let domain = unit_domain(1);
        let mk = |points: Vec<f64>| InversionFamily {
            members: points
                .into_iter()
                .map(|p| FamilyMember { point: vec![p], residual: 0.0 })
                .collect(),
            domain: domain.clone(),
            unconverged: false,
            evaluations: 0,
            dataset_id: "t".into(),
            trace: vec![],
        };
        let fam = mk(vec![0.9, 1.0, 1.1]);
        let b = &family_bounds(&fam).unwrap()[0];
        assert_eq!(b.lo, 0.9);
        assert_eq!(b.hi, 1.1);
        assert!((b.width - 0.2).abs() < 1e-15);
        assert!((b.rel_width - 0.2).abs() < 1e-14);
        assert!(!b.domain_normalized);

        let fam2 = mk(vec![1.1, 0.9, 1.0]);
        assert_eq!(family_bounds(&fam2).unwrap(), family_bounds(&fam).unwrap());

        // single member: zero width
        let single = mk(vec![1.05]);
        assert_eq!(family_bounds(&single).unwrap()[0].width, 0.0);
    }

    #[test]
    fn straddling_domain_uses_domain_normalization() {
        let domain = MapDomain {
            lower: vec![-0.5],
            upper: vec![0.5],
            nominal: vec![0.1],
        };
        let fam = InversionFamily {
            members: vec![
                FamilyMember { point: vec![-0.2], residual: 0.0 },
                FamilyMember { point: vec![0.3], residual: 0.0 },
            ],
            domain,
            unconverged: false,
            evaluations: 0,
            dataset_id: "t".into(),
            trace: vec![],
        };
        let b = &family_bounds(&fam).unwrap()[0];
        assert!(b.domain_normalized);
        assert!((b.rel_width - 0.5 / 0.5).abs() < 1e-14);
    }

    #[test]
    fn uncertainty_composition_hand_values() {
        let domain = unit_domain(1);
        let mk_width = |lo: f64, hi: f64| InversionFamily {
            members: vec![
                FamilyMember { point: vec![lo], residual: 0.0 },
                FamilyMember { point: vec![hi], residual: 0.0 },
            ],
            domain: domain.clone(),
            unconverged: false,
            evaluations: 0,
            dataset_id: "t".into(),
            trace: vec![],
        };
        // zero-misfit single member: both terms vanish
        let single = InversionFamily {
            members: vec![FamilyMember { point: vec![1.0], residual: 0.0 }],
            domain: domain.clone(),
            unconverged: false,
            evaluations: 0,
            dataset_id: "t".into(),
            trace: vec![],
        };
        assert_eq!(family_uncertainty(&single, 0.01).unwrap(), 0.0);

        // mean rel width 0.03 with alpha 0.01 -> 3e-4
        let lo = 1.0 - 0.015;
        let hi = 1.0 + 0.015;
        // rel width = 2*0.03/(lo+hi) = 0.03/1.0 exactly when lo+hi = 2
        let fam = mk_width(lo, hi);
        let u = family_uncertainty(&fam, 0.01).unwrap();
        assert!((u - 3e-4).abs() < 1e-12, "got {u}");

        // doubling alpha doubles the width term
        let u2 = family_uncertainty(&fam, 0.02).unwrap();
        assert!((u2 - 2.0 * u).abs() < 1e-15);
    }

    #[test]
    fn adding_members_never_shrinks_widths() {
        let domain = unit_domain(2);
        let mut fam = InversionFamily {
            members: vec![FamilyMember { point: vec![0.8, 1.2], residual: 0.0 }],
            domain,
            unconverged: false,
            evaluations: 0,
            dataset_id: "t".into(),
            trace: vec![],
        };
        let before = family_bounds(&fam).unwrap();
        fam.members.push(FamilyMember { point: vec![1.3, 0.9], residual: 0.0 });
        let after = family_bounds(&fam).unwrap();
        for (b, a) in before.iter().zip(after.iter()) {
            assert!(a.width >= b.width);
        }
    }

    /// Tiny synthetic forward model for end-to-end extraction tests:
    /// two observables, each a smooth function of the two parameters.
    fn toy_predictor(point: &[f64]) -> Result<Vec<f64>> {
        let a = point[0];
        let b = point[1];
        Ok(vec![0.4 + 0.3 * (a - 1.0) + 0.1 * (b - 1.0), 0.3 + 0.2 * (b - 1.0) * (b - 1.0)])
    }

    fn toy_dataset(err_rel: f64) -> LabDataset {
        let truth = [1.0, 1.0];
        let values = toy_predictor(&truth).unwrap();
        dataset_with(values, err_rel)
    }

    #[test]
    fn truth_is_always_consistent_with_its_own_noise_free_data() {
        let ds = toy_dataset(0.5);
        let domain = unit_domain(2);
        let j = inversion_cost(&[1.0, 1.0], &ds, toy_predictor, &domain, 0.0).unwrap();
        assert_eq!(j, 0.0);

        let config = InversionConfig {
            family_size: 50,
            ga: GaParams { pop_size: 20, max_generations: 20, seed: 8, ..GaParams::default() },
            ..InversionConfig::default()
        };
        let fam = extract_family(&ds, toy_predictor, &domain, &config).unwrap();
        assert!(!fam.unconverged);
        let bounds = family_bounds(&fam).unwrap();
        // truth must lie inside the reported box
        for b in &bounds {
            assert!(b.lo <= 1.0 + 1e-9 && b.hi >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn vanishing_error_bars_collapse_the_family() {
        let ds = toy_dataset(1e-12);
        let domain = unit_domain(2);
        let config = InversionConfig {
            family_size: 30,
            ga: GaParams { pop_size: 30, max_generations: 60, seed: 4, ..GaParams::default() },
            dedup_dist: 0.0,
            ..InversionConfig::default()
        };
        let fam = extract_family(&ds, toy_predictor, &domain, &config).unwrap();
        let bounds = family_bounds(&fam).unwrap();
        // Parameter 0 is strongly constrained by observable 0; with bars this
        // tight any archived spread must be tiny along it.
        assert!(bounds[0].width < 1e-6, "width {}", bounds[0].width);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut ds = toy_dataset(0.1);
        ds.values.clear();
        let domain = unit_domain(2);
        let config = InversionConfig::default();
        assert!(extract_family(&ds, toy_predictor, &domain, &config).is_err());
    }

    #[test]
    fn grid_monotone_in_error_bars() {
        // Enlarging every bar cannot shrink the zero-misfit bounding box.
        let domain = unit_domain(2);
        let tight = toy_dataset(0.05);
        let wide = toy_dataset(0.15);
        let bt = grid_scan_bounds(&tight, toy_predictor, &domain, 60).unwrap().unwrap();
        let bw = grid_scan_bounds(&wide, toy_predictor, &domain, 60).unwrap().unwrap();
        for (t, w) in bt.iter().zip(bw.iter()) {
            assert!(w.0 <= t.0 + 1e-12 && w.1 >= t.1 - 1e-12);
        }
    }

    #[test]
    fn family_record_roundtrip() {
        let ds = toy_dataset(0.3);
        let domain = unit_domain(2);
        let config = InversionConfig {
            family_size: 10,
            ga: GaParams { pop_size: 10, max_generations: 5, seed: 2, ..GaParams::default() },
            ..InversionConfig::default()
        };
        let fam = extract_family(&ds, toy_predictor, &domain, &config).unwrap();
        let record = FamilyRecord::new(fam, config).unwrap();
        let text = record.to_json_string().unwrap();
        let back = FamilyRecord::from_json_str(&text).unwrap();
        assert_eq!(back.family.members, record.family.members);
        assert_eq!(back.bounds, record.bounds);
    }
}
