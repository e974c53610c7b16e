//! N-level system parameterization.
//!
//! A system is described by a flat real parameter vector holding the upper
//! triangle (with diagonal) of the internal Hamiltonian followed by the
//! strict upper triangle of the dipole coupling matrix. For an N-level
//! system that is N(N+1)/2 + N(N-1)/2 = N^2 parameters (64 for N = 8).
//!
//! Units: hbar = 1, time in picoseconds, energies and frequencies in rad/ps.
//! Field amplitudes are dimensionless scaled units chosen so that
//! `dipole * field` is a rate in rad/ps.

use crate::eig::sym_eig;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Basis-state count plus unit bookkeeping. `hbar` is fixed to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSystem {
    pub dimension: usize,
}

impl LevelSystem {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::Config(format!(
                "system dimension must be at least 2, got {dimension}"
            )));
        }
        Ok(Self { dimension })
    }

    /// Length of the flat parameter vector for this dimension.
    pub fn param_count(&self) -> usize {
        self.dimension * self.dimension
    }
}

/// Which matrix a flat-vector entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixBlock {
    /// Internal Hamiltonian (upper triangle including the diagonal).
    Internal,
    /// Dipole coupling (strict upper triangle, zero diagonal).
    Dipole,
}

/// Flat parameter vector with its entry <-> matrix-element bijection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianParams {
    pub dimension: usize,
    pub values: Vec<f64>,
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.n + col] = v;
    }

    /// Set both (row, col) and (col, row).
    pub fn set_sym(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.n + col] = v;
        self.data[col * self.n + row] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.n {
            for j in i + 1..self.n {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl HamiltonianParams {
    pub fn new(dimension: usize, values: Vec<f64>) -> Result<Self> {
        let expect = dimension * dimension;
        if values.len() != expect {
            return Err(Error::Config(format!(
                "parameter vector length {} does not match dimension {} (expected {})",
                values.len(),
                dimension,
                expect
            )));
        }
        Ok(Self { dimension, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of internal-Hamiltonian entries in the flat vector.
    pub fn internal_count(dimension: usize) -> usize {
        dimension * (dimension + 1) / 2
    }

    /// Flat-vector index of a matrix element. `row <= col` for the internal
    /// block, `row < col` for the dipole block (0-based).
    pub fn index_of(dimension: usize, block: MatrixBlock, row: usize, col: usize) -> Result<usize> {
        if row >= dimension || col >= dimension {
            return Err(Error::Config(format!(
                "matrix element ({row},{col}) out of range for dimension {dimension}"
            )));
        }
        match block {
            MatrixBlock::Internal => {
                if row > col {
                    return Err(Error::Config(format!(
                        "internal element must have row <= col, got ({row},{col})"
                    )));
                }
                // row-major upper triangle including diagonal
                Ok(row * dimension - row * (row + 1) / 2 + col)
            }
            MatrixBlock::Dipole => {
                if row >= col {
                    return Err(Error::Config(format!(
                        "dipole element must have row < col, got ({row},{col})"
                    )));
                }
                let base = Self::internal_count(dimension);
                Ok(base + row * dimension - row * (row + 1) / 2 - row + col - 1)
            }
        }
    }

    /// Inverse of [`index_of`]: which matrix element a flat index addresses.
    pub fn entry_of(dimension: usize, index: usize) -> (MatrixBlock, usize, usize) {
        let internal = Self::internal_count(dimension);
        if index < internal {
            let mut k = index;
            for row in 0..dimension {
                let row_len = dimension - row;
                if k < row_len {
                    return (MatrixBlock::Internal, row, row + k);
                }
                k -= row_len;
            }
            unreachable!("index within internal block");
        }
        let mut k = index - internal;
        for row in 0..dimension {
            let row_len = dimension - row - 1;
            if k < row_len {
                return (MatrixBlock::Dipole, row, row + 1 + k);
            }
            k -= row_len;
        }
        panic!("flat index {index} out of range for dimension {dimension}");
    }

    /// Assemble the internal Hamiltonian and dipole matrices (both real
    /// symmetric; the dipole has an exactly zero diagonal).
    pub fn assemble(&self) -> (SquareMatrix, SquareMatrix) {
        let n = self.dimension;
        let mut internal = SquareMatrix::zeros(n);
        let mut dipole = SquareMatrix::zeros(n);
        let mut k = 0;
        for row in 0..n {
            for col in row..n {
                internal.set_sym(row, col, self.values[k]);
                k += 1;
            }
        }
        for row in 0..n {
            for col in row + 1..n {
                dipole.set_sym(row, col, self.values[k]);
                k += 1;
            }
        }
        debug_assert_eq!(k, self.values.len());
        (internal, dipole)
    }

    /// Inverse of [`assemble`].
    pub fn flatten(internal: &SquareMatrix, dipole: &SquareMatrix) -> Result<Self> {
        let n = internal.size();
        if dipole.size() != n {
            return Err(Error::Config("matrix size mismatch".into()));
        }
        let mut values = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in row..n {
                values.push(internal.get(row, col));
            }
        }
        for row in 0..n {
            for col in row + 1..n {
                values.push(dipole.get(row, col));
            }
        }
        Self::new(n, values)
    }
}

/// Sorted adjacent-eigenvalue gaps of the internal Hamiltonian, with a
/// degeneracy warning when any gap falls below 1e-9.
#[derive(Debug, Clone)]
pub struct Resonances {
    pub frequencies: Vec<f64>,
    pub degenerate: bool,
}

/// The N-1 resonance frequencies of a system's internal Hamiltonian.
pub fn resonance_frequencies(params: &HamiltonianParams) -> Resonances {
    let (internal, _) = params.assemble();
    let n = internal.size();
    let eig = sym_eig(internal.as_slice(), n);
    let mut frequencies = Vec::with_capacity(n - 1);
    let mut degenerate = false;
    for k in 1..n {
        let gap = eig.values[k] - eig.values[k - 1];
        if gap < 1e-9 {
            degenerate = true;
        }
        frequencies.push(gap);
    }
    Resonances { frequencies, degenerate }
}

/// Built-in default 8-level system: an anharmonic vibrational-ladder-like
/// Hamiltonian with nearest-neighbour internal couplings and sqrt(v)-scaled
/// dipoles falling off for |delta v| = 2, zero beyond.
pub fn default_system() -> (LevelSystem, HamiltonianParams) {
    let system = LevelSystem::new(8).expect("static dimension");
    let n = system.dimension;
    let omega0 = 150.0; // rad/ps ladder spacing
    let chi = 2.0; // anharmonicity
    let coupling = 2.0; // off-diagonal internal elements
    let dip1 = 3.0; // delta v = 1 dipole scale
    let dip2 = 0.3; // delta v = 2 dipole scale

    let mut internal = SquareMatrix::zeros(n);
    let mut dipole = SquareMatrix::zeros(n);
    for v in 0..n {
        let vf = v as f64;
        internal.set(v, v, omega0 * vf - chi * vf * (vf + 1.0));
    }
    for v in 0..n - 1 {
        internal.set_sym(v, v + 1, coupling);
        dipole.set_sym(v, v + 1, dip1 * ((v + 1) as f64).sqrt());
    }
    for v in 0..n - 2 {
        dipole.set_sym(v, v + 2, dip2 * ((v + 1) as f64).sqrt());
    }
    let params = HamiltonianParams::flatten(&internal, &dipole).expect("static sizes");
    (system, params)
}

/// Parse a system-definition file.
///
/// Format (`#` comments, blank lines ignored):
/// ```text
/// dimension = 8
/// # optional full vector, dimension^2 whitespace-separated reals:
/// # params = 0.0 146.0 ...
/// # or individual elements (1-based indices, upper triangle):
/// H 1 1 0.0
/// H 1 2 2.0
/// mu 1 2 3.0
/// ```
/// Unspecified elements are zero. `params` and element lines may not be mixed.
pub fn parse_system_file(path_label: &str, text: &str) -> Result<(LevelSystem, HamiltonianParams)> {
    let mut dimension: Option<usize> = None;
    let mut flat: Option<Vec<f64>> = None;
    let mut elements: Vec<(usize, MatrixBlock, usize, usize, f64)> = Vec::new();

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
        if let Some(rest) = line.strip_prefix("dimension") {
            let rest = rest.trim_start();
            let Some(value) = rest.strip_prefix('=') else {
                return Err(perr(lineno, "expected `dimension = N`".into()));
            };
            let n: usize = value
                .trim()
                .parse()
                .map_err(|_| perr(lineno, format!("invalid dimension `{}`", value.trim())))?;
            dimension = Some(n);
            continue;
        }
        if let Some(rest) = line.strip_prefix("params") {
            let rest = rest.trim_start();
            let Some(value) = rest.strip_prefix('=') else {
                return Err(perr(lineno, "expected `params = v1 v2 ...`".into()));
            };
            let mut vals = Vec::new();
            for tok in value.split_whitespace() {
                vals.push(
                    tok.parse::<f64>()
                        .map_err(|_| perr(lineno, format!("invalid number `{tok}`")))?,
                );
            }
            flat = Some(vals);
            continue;
        }
        let mut toks = line.split_whitespace();
        let tag = toks.next().unwrap_or_default();
        let block = match tag {
            "H" => MatrixBlock::Internal,
            "mu" => MatrixBlock::Dipole,
            other => {
                return Err(perr(
                    lineno,
                    format!("unknown directive `{other}` (expected dimension, params, H, or mu)"),
                ))
            }
        };
        let parse_idx = |tok: Option<&str>| -> Result<usize> {
            let tok = tok.ok_or_else(|| perr(lineno, "missing index".into()))?;
            let v: usize = tok
                .parse()
                .map_err(|_| perr(lineno, format!("invalid index `{tok}`")))?;
            if v == 0 {
                return Err(perr(lineno, "indices are 1-based".into()));
            }
            Ok(v - 1)
        };
        let row = parse_idx(toks.next())?;
        let col = parse_idx(toks.next())?;
        let vtok = toks
            .next()
            .ok_or_else(|| perr(lineno, "missing element value".into()))?;
        let value: f64 = vtok
            .parse()
            .map_err(|_| perr(lineno, format!("invalid number `{vtok}`")))?;
        if toks.next().is_some() {
            return Err(perr(lineno, "trailing tokens after element value".into()));
        }
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        elements.push((lineno, block, row, col, value));
    }

    let dimension =
        dimension.ok_or_else(|| perr(0, "missing `dimension = N` directive".into()))?;
    let system = LevelSystem::new(dimension)?;

    if let Some(vals) = flat {
        if !elements.is_empty() {
            return Err(Error::Config(
                "system file mixes `params =` with individual element lines".into(),
            ));
        }
        let params = HamiltonianParams::new(dimension, vals)?;
        return Ok((system, params));
    }

    let mut values = vec![0.0; dimension * dimension];
    for (lineno, block, row, col, value) in elements {
        if block == MatrixBlock::Dipole && row == col {
            return Err(perr(lineno, "dipole diagonal must be zero".into()));
        }
        let index = HamiltonianParams::index_of(dimension, block, row, col)
            .map_err(|e| perr(lineno, e.to_string()))?;
        values[index] = value;
    }
    Ok((system, HamiltonianParams::new(dimension, values)?))
}

/// Render a system in the format accepted by [`parse_system_file`].
pub fn system_to_text(system: &LevelSystem, params: &HamiltonianParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dimension = {}", system.dimension);
    let (internal, dipole) = params.assemble();
    for row in 0..system.dimension {
        for col in row..system.dimension {
            let v = internal.get(row, col);
            if v != 0.0 {
                let _ = writeln!(out, "H {} {} {}", row + 1, col + 1, v);
            }
        }
    }
    for row in 0..system.dimension {
        for col in row + 1..system.dimension {
            let v = dipole.get(row, col);
            if v != 0.0 {
                let _ = writeln!(out, "mu {} {} {}", row + 1, col + 1, v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_params_assemble_to_zero_matrices() {
        let params = HamiltonianParams::new(8, vec![0.0; 64]).unwrap();
        let (internal, dipole) = params.assemble();
        assert!(internal.as_slice().iter().all(|&v| v == 0.0));
        assert!(dipole.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_element_lands_on_its_slot() {
        let mut values = vec![0.0; 64];
        let idx = HamiltonianParams::index_of(8, MatrixBlock::Internal, 0, 0).unwrap();
        values[idx] = 5.0;
        let params = HamiltonianParams::new(8, values).unwrap();
        let (internal, dipole) = params.assemble();
        assert_eq!(internal.get(0, 0), 5.0);
        let nonzero = internal.as_slice().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 1);
        assert!(dipole.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn length_mismatch_is_config_error() {
        assert!(HamiltonianParams::new(8, vec![0.0; 63]).is_err());
    }

    #[test]
    fn index_and_entry_are_inverse() {
        for dim in [2usize, 3, 8] {
            for index in 0..dim * dim {
                let (block, row, col) = HamiltonianParams::entry_of(dim, index);
                assert_eq!(
                    HamiltonianParams::index_of(dim, block, row, col).unwrap(),
                    index
                );
            }
        }
    }

    #[test]
    fn dipole_diagonal_is_exactly_zero() {
        let (_, params) = default_system();
        let (_, dipole) = params.assemble();
        for i in 0..8 {
            assert_eq!(dipole.get(i, i), 0.0);
        }
    }

    proptest! {
        #[test]
        fn flatten_assemble_roundtrip(values in proptest::collection::vec(-50.0f64..50.0, 64)) {
            // independent of index_of internals: only uses assemble + flatten
            let params = HamiltonianParams::new(8, values.clone()).unwrap();
            let (internal, dipole) = params.assemble();
            prop_assert!(internal.is_symmetric(0.0));
            prop_assert!(dipole.is_symmetric(0.0));
            let back = HamiltonianParams::flatten(&internal, &dipole).unwrap();
            prop_assert_eq!(back.values, values);
        }
    }

    #[test]
    fn resonances_of_diagonal_matrix() {
        let mut internal = SquareMatrix::zeros(3);
        internal.set(0, 0, 0.0);
        internal.set(1, 1, 1.0);
        internal.set(2, 2, 3.0);
        let dipole = SquareMatrix::zeros(3);
        let params = HamiltonianParams::flatten(&internal, &dipole).unwrap();
        let res = resonance_frequencies(&params);
        assert!((res.frequencies[0] - 1.0).abs() < 1e-12);
        assert!((res.frequencies[1] - 2.0).abs() < 1e-12);
        assert!(!res.degenerate);
    }

    #[test]
    fn resonances_of_two_level_splitting() {
        // H = [[0, 1], [1, 0]] has eigenvalues -1, +1.
        let mut internal = SquareMatrix::zeros(2);
        internal.set_sym(0, 1, 1.0);
        let dipole = SquareMatrix::zeros(2);
        let params = HamiltonianParams::flatten(&internal, &dipole).unwrap();
        let res = resonance_frequencies(&params);
        assert_eq!(res.frequencies.len(), 1);
        assert!((res.frequencies[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_gap_sets_flag() {
        let mut internal = SquareMatrix::zeros(3);
        internal.set(0, 0, 1.0);
        internal.set(1, 1, 1.0);
        internal.set(2, 2, 2.0);
        let params =
            HamiltonianParams::flatten(&internal, &SquareMatrix::zeros(3)).unwrap();
        assert!(resonance_frequencies(&params).degenerate);
    }

    #[test]
    fn default_system_resonances_match_independent_eigensolver() {
        let (system, params) = default_system();
        let res = resonance_frequencies(&params);
        assert_eq!(res.frequencies.len(), system.dimension - 1);
        let (internal, _) = params.assemble();
        let m = nalgebra::DMatrix::from_row_slice(
            system.dimension,
            system.dimension,
            internal.as_slice(),
        );
        let mut vals: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, freq) in res.frequencies.iter().enumerate() {
            assert!((freq - (vals[k + 1] - vals[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn system_file_roundtrip() {
        let (system, params) = default_system();
        let text = system_to_text(&system, &params);
        let (system2, params2) = parse_system_file("mem", &text).unwrap();
        assert_eq!(system2.dimension, system.dimension);
        for (a, b) in params.values.iter().zip(params2.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn system_file_errors_are_line_anchored() {
        let err = parse_system_file("sys.txt", "dimension = 8\nH 1 x 2.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sys.txt:2"), "got: {msg}");
    }
}
