#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use obstacle_afem::solver::ObstacleSystem;

/// Exact discrete solution found by trying every active set.
#[derive(Debug)]
pub struct Enumerated {
    pub phi: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Number of active sets satisfying the complementarity conditions.
    pub admissible_sets: usize,
}

/// Solves the discrete obstacle problem by brute force over all subsets of
/// free nodes. On each candidate set `A` the nodes of `A` are pinned to the
/// obstacle, the rest of the free nodes solve the linear equations, and the
/// candidate is kept if it is feasible with nonnegative multipliers.
pub fn enumerate_active_sets(sys: &ObstacleSystem, tol: f64) -> Enumerated {
    let n = sys.n();
    let free: Vec<usize> = (0..n).filter(|&p| !sys.dirichlet[p]).collect();
    assert!(free.len() <= 16, "enumeration over {} nodes is too expensive", free.len());
    let k = DMatrix::from_fn(n, n, |i, j| sys.op.get(i, j));
    let b = DVector::from_column_slice(&sys.load);

    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut admissible = 0;
    for mask in 0u32..(1 << free.len()) {
        let active = |i: usize| mask & (1 << i) != 0;
        let mut x = DVector::zeros(n);
        for p in 0..n {
            if sys.dirichlet[p] {
                x[p] = sys.dirichlet_values[p];
            }
        }
        if free.iter().enumerate().any(|(i, &p)| active(i) && !sys.obstacle[p].is_finite()) {
            continue;
        }
        for (i, &p) in free.iter().enumerate() {
            if active(i) {
                x[p] = sys.obstacle[p];
            }
        }
        let inactive: Vec<usize> = free.iter().enumerate().filter(|(i, _)| !active(*i)).map(|(_, &p)| p).collect();
        if !inactive.is_empty() {
            let m = inactive.len();
            let kii = DMatrix::from_fn(m, m, |i, j| k[(inactive[i], inactive[j])]);
            let kx = &k * &x;
            let rhs = DVector::from_fn(m, |i, _| b[inactive[i]] - kx[inactive[i]]);
            let sol = kii.cholesky().expect("free block is positive definite").solve(&rhs);
            for (i, &p) in inactive.iter().enumerate() {
                x[p] = sol[i];
            }
        }
        let r = &b - &k * &x;
        let feasible = inactive.iter().all(|&p| x[p] <= sys.obstacle[p] + tol);
        let multipliers_ok = free.iter().enumerate().filter(|(i, _)| active(*i)).all(|(_, &p)| r[p] >= -tol);
        if feasible && multipliers_ok {
            admissible += 1;
            let lambda: Vec<f64> = (0..n)
                .map(|p| if sys.dirichlet[p] || inactive.contains(&p) { 0.0 } else { r[p] })
                .collect();
            if best.is_none() {
                best = Some((x.iter().copied().collect(), lambda));
            }
        }
    }
    let (phi, lambda) = best.expect("some active set satisfies the conditions");
    Enumerated {
        phi,
        lambda,
        admissible_sets: admissible,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Deterministic nodal values with no structure a P1 field could exploit.
pub fn scrambled(n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let h = (i + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            let h = (h ^ (h >> 31)).wrapping_mul(0x94D0_49BB_1331_11EB);
            (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}
