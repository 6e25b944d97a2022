#![allow(dead_code)]

use motforge::measures::DiscreteMeasure;
use motforge::sepsim::Lattice;
use nalgebra::{DMatrix, DVector};

/// Brute-force extreme points of `{q ≥ 0 : A q = b}`: every column subset with
/// full column rank whose least-squares solution is exact and nonnegative.
pub fn vertices(a: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    let n = a[0].len();
    let m = a.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        if cols.len() > m {
            continue;
        }
        let sub = DMatrix::from_fn(m, cols.len(), |i, k| a[i][cols[k]]);
        let svd = sub.clone().svd(true, true);
        let rank = svd.rank(1e-10);
        if rank < cols.len() {
            continue;
        }
        let rhs = DVector::from_column_slice(b);
        let Ok(sol) = svd.solve(&rhs, 1e-12) else { continue };
        if (&sub * &sol - &rhs).amax() > 1e-10 || sol.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut q = vec![0.0; n];
        for (k, &j) in cols.iter().enumerate() {
            q[j] = sol[k].max(0.0);
        }
        if !out.iter().any(|v| v.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-10)) {
            out.push(q);
        }
    }
    out
}

/// Martingale-coupling polytope of two measures as `(A, b)` over `q_ij`,
/// indexed `i·|ν| + j`.
pub fn martingale_polytope(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (nx, ny) = (mu.len(), nu.len());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, &(_, m)) in mu.atoms().iter().enumerate() {
        a.push((0..nx * ny).map(|k| if k / ny == i { 1.0 } else { 0.0 }).collect());
        b.push(m);
    }
    for (j, &(_, m)) in nu.atoms().iter().enumerate() {
        a.push((0..nx * ny).map(|k| if k % ny == j { 1.0 } else { 0.0 }).collect());
        b.push(m);
    }
    for (i, &(x, _)) in mu.atoms().iter().enumerate() {
        a.push(
            (0..nx * ny)
                .map(|k| if k / ny == i { nu.atoms()[k % ny].0 - x } else { 0.0 })
                .collect(),
        );
        b.push(0.0);
    }
    (a, b)
}

/// Right-barrier and inner-band test instance on a δ = 0.05 lattice.
pub fn desk_right(seed: u64) -> (DiscreteMeasure, DiscreteMeasure, Lattice) {
    let delta = 0.05;
    let mu0 = DiscreteMeasure::uniform_grid(-0.25, 0.25, 21);
    let nu0 = DiscreteMeasure::uniform_grid(-1.5, 1.5, 21);
    let lat = Lattice::covering(&mu0, &nu0, delta, 0.5, seed).unwrap();
    let (mu, _) = lat.snap(&mu0).unwrap();
    let (nu, _) = lat.snap(&nu0).unwrap();
    (mu, nu, lat)
}

/// Outer-band test instance: start law on `[−1, 1]`, target law on
/// `[−2.5, −1.5] ∪ [1.5, 2.5]`, δ = 0.05.
pub fn desk_outer(seed: u64) -> (DiscreteMeasure, DiscreteMeasure, Lattice) {
    let delta = 0.05;
    let mu0 = DiscreteMeasure::uniform_grid(-1.0, 1.0, 41);
    let left = DiscreteMeasure::uniform_grid(-2.5, -1.5, 21);
    let right = DiscreteMeasure::uniform_grid(1.5, 2.5, 21);
    let nu0 = DiscreteMeasure::from_atoms(left.atoms().iter().chain(right.atoms()).map(|&(p, m)| (p, m / 2.0)).collect())
        .unwrap();
    let lat = Lattice::covering(&mu0, &nu0, delta, 0.5, seed).unwrap();
    let (mu, _) = lat.snap(&mu0).unwrap();
    let (nu, _) = lat.snap(&nu0).unwrap();
    (mu, nu, lat)
}
