//! Dense symmetric eigensolver (cyclic Jacobi).
//!
//! The propagator eigendecomposes one small real symmetric matrix per time
//! step, so this runs hot. Jacobi rotations converge in a handful of sweeps
//! for the matrix sizes used here and the in-place entry point lets callers
//! reuse scratch buffers across steps.

/// Eigendecomposition of a real symmetric matrix: `A = V diag(values) V^T`.
///
/// `values` are sorted ascending; `vectors` is column-major, column `k`
/// holding the eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

/// Decompose a row-major symmetric `n x n` matrix.
pub fn sym_eig(matrix: &[f64], n: usize) -> SymEig {
    assert_eq!(matrix.len(), n * n, "matrix size mismatch");
    let mut a = matrix.to_vec();
    let mut values = vec![0.0; n];
    let mut vectors = vec![0.0; n * n];
    sym_eig_inplace(&mut a, &mut values, &mut vectors, n);
    SymEig { values, vectors }
}

/// In-place variant: destroys `a` (row-major, only the upper triangle is
/// read), fills `values` (ascending) and column-major `vectors`.
pub fn sym_eig_inplace(a: &mut [f64], values: &mut [f64], vectors: &mut [f64], n: usize) {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(values.len(), n);
    debug_assert_eq!(vectors.len(), n * n);

    // V = I
    vectors.fill(0.0);
    for i in 0..n {
        vectors[i * n + i] = 1.0;
    }
    for i in 0..n {
        values[i] = a[i * n + i];
    }
    if n == 1 {
        return;
    }

    let mut b: Vec<f64> = values.to_vec();
    let mut z = vec![0.0; n];

    // Off-diagonal mass this small relative to the matrix scale is converged;
    // the rotations themselves stay exactly orthogonal regardless.
    let scale: f64 = (0..n * n).map(|k| a[k] * a[k]).sum::<f64>().sqrt();
    let off_tol = 1e-13 * scale;

    for sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off += a[p * n + q].abs();
            }
        }
        if off <= off_tol {
            break;
        }
        // First sweeps rotate only the dominant entries.
        let thresh = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };

        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3
                    && values[p].abs() + g == values[p].abs()
                    && values[q].abs() + g == values[q].abs()
                {
                    a[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let mut h = values[q] - values[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                h = t * apq;
                z[p] -= h;
                z[q] += h;
                values[p] -= h;
                values[q] += h;
                a[p * n + q] = 0.0;

                let rot = |a: &mut [f64], i: usize, j: usize, k: usize, l: usize| {
                    let g = a[i * n + j];
                    let h = a[k * n + l];
                    a[i * n + j] = g - s * (h + g * tau);
                    a[k * n + l] = h + s * (g - h * tau);
                };
                for j in 0..p {
                    rot(a, j, p, j, q);
                }
                for j in p + 1..q {
                    rot(a, p, j, j, q);
                }
                for j in q + 1..n {
                    rot(a, p, j, q, j);
                }
                // Accumulate V (column-major): rotate columns p and q.
                for i in 0..n {
                    let gp = vectors[p * n + i];
                    let gq = vectors[q * n + i];
                    vectors[p * n + i] = gp - s * (gq + gp * tau);
                    vectors[q * n + i] = gq + s * (gp - gq * tau);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            values[i] = b[i];
            z[i] = 0.0;
        }
    }

    // Sort ascending, permuting eigenvector columns.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut sorted_vecs = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        sorted_vecs[dst * n..(dst + 1) * n].copy_from_slice(&vectors[src * n..(src + 1) * n]);
    }
    values.copy_from_slice(&sorted_vals);
    vectors.copy_from_slice(&sorted_vecs);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-5.0..5.0);
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        m
    }

    #[test]
    fn reconstructs_and_is_orthogonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 2, 3, 5, 8, 12] {
            let m = random_symmetric(n, &mut rng);
            let e = sym_eig(&m, n);
            // A v_k = lambda_k v_k
            for k in 0..n {
                for i in 0..n {
                    let mut av = 0.0;
                    for j in 0..n {
                        av += m[i * n + j] * e.vectors[k * n + j];
                    }
                    let lv = e.values[k] * e.vectors[k * n + i];
                    assert!((av - lv).abs() < 1e-9, "n={n} residual {}", (av - lv).abs());
                }
            }
            // V^T V = I
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 =
                        (0..n).map(|i| e.vectors[a * n + i] * e.vectors[b * n + i]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12);
                }
            }
            // ascending
            for k in 1..n {
                assert!(e.values[k] >= e.values[k - 1]);
            }
        }
    }

    #[test]
    fn matches_independent_solver() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for n in [2usize, 4, 8] {
            let m = random_symmetric(n, &mut rng);
            let ours = sym_eig(&m, n);
            let na = nalgebra::DMatrix::from_row_slice(n, n, &m);
            let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for k in 0..n {
                assert!(
                    (ours.values[k] - theirs[k]).abs() < 1e-9,
                    "n={n} k={k}: {} vs {}",
                    ours.values[k],
                    theirs[k]
                );
            }
        }
    }
}
