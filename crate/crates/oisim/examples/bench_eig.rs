use oisim::eig::sym_eig_inplace;
use std::time::Instant;

fn main() {
    let n = 8;
    // typical total Hamiltonian: ladder diagonal + small couplings
    let mut base = vec![0.0; n * n];
    for i in 0..n {
        base[i * n + i] = 150.0 * i as f64 - 2.0 * (i * (i + 1)) as f64;
    }
    for i in 0..n - 1 {
        let c = 2.0 - 3.0 * ((i + 1) as f64).sqrt() * 0.3;
        base[i * n + i + 1] = c;
        base[(i + 1) * n + i] = c;
    }
    let mut a = vec![0.0; n * n];
    let mut vals = vec![0.0; n];
    let mut vecs = vec![0.0; n * n];
    let reps = 200_000;
    let t0 = Instant::now();
    let mut acc = 0.0;
    for k in 0..reps {
        a.copy_from_slice(&base);
        a[1] = 2.0 + (k as f64) * 1e-9; // vary slightly
        a[n] = a[1];
        sym_eig_inplace(&mut a, &mut vals, &mut vecs, n);
        acc += vals[0];
    }
    println!("eig: {:.2} us each (acc {acc:.3})", t0.elapsed().as_secs_f64() / reps as f64 * 1e6);
}
