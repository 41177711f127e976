//! Jacobi-preconditioned conjugate gradients on principal submatrices of a
//! [`SparseOperator`].

use crate::error::{Error, Result};
use crate::fem::SparseOperator;

/// Default relative residual tolerance for linear sub-solves.
pub const LINEAR_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual `‖r‖ / ‖rhs‖` of the restricted system.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Solves `A_FF x_F = rhs_F` for the nodes flagged in `free`, with all other
/// unknowns zero.
pub fn linear_solve(op: &SparseOperator, free: &[bool], rhs: &[f64], tol: f64) -> Result<(Vec<f64>, SolveStats)> {
    let mut x = vec![0.0; op.n()];
    let stats = solve_with_fixed(op, free, rhs, &mut x, tol)?;
    Ok((x, stats))
}

/// Solves rows `F` of `A x = b`, where `x` holds prescribed values off `F`
/// and the initial guess on `F`. The returned residual is measured against
/// the reduced right-hand side `(b − A x_fixed)_F`.
pub fn solve_with_fixed(op: &SparseOperator, free: &[bool], b: &[f64], x: &mut [f64], tol: f64) -> Result<SolveStats> {
    let n = op.n();
    assert_eq!(free.len(), n);
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);

    let mut fixed_only = x.to_vec();
    for i in 0..n {
        if free[i] {
            fixed_only[i] = 0.0;
        }
    }
    let a_fixed = op.mul_vec(&fixed_only);
    let rhs: Vec<f64> = (0..n).map(|i| if free[i] { b[i] - a_fixed[i] } else { 0.0 }).collect();
    let rhs_norm = norm(&rhs);
    let mut stats = SolveStats::default();
    if rhs_norm == 0.0 {
        for i in 0..n {
            if free[i] {
                x[i] = 0.0;
            }
        }
        return Ok(stats);
    }

    let diag = op.diagonal();
    for i in 0..n {
        if free[i] && diag[i] <= 0.0 {
            return Err(Error::Breakdown(format!("non-positive diagonal {} at row {i}", diag[i])));
        }
    }
    let max_iter = 20 * n + 100;
    let masked = |v: &mut [f64]| {
        for i in 0..n {
            if !free[i] {
                v[i] = 0.0;
            }
        }
    };

    let mut y: Vec<f64> = x.iter().enumerate().map(|(i, &v)| if free[i] { v } else { 0.0 }).collect();
    let mut ay = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    // restart from the true residual if the recurrence drifts
    for _restart in 0..4 {
        op.mul_vec_into(&y, &mut ay);
        let mut r: Vec<f64> = (0..n).map(|i| if free[i] { rhs[i] - ay[i] } else { 0.0 }).collect();
        let mut rel = norm(&r) / rhs_norm;
        stats.history.push(rel);
        if rel <= tol {
            stats.residual = rel;
            break;
        }
        let mut z: Vec<f64> = (0..n).map(|i| if free[i] { r[i] / diag[i] } else { 0.0 }).collect();
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while stats.iterations < max_iter {
            op.mul_vec_into(&p, &mut ap);
            masked(&mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                return Err(Error::Breakdown(format!("pᵀAp = {pap:.3e} in conjugate gradients")));
            }
            let alpha = rz / pap;
            for i in 0..n {
                y[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            stats.iterations += 1;
            rel = norm(&r) / rhs_norm;
            stats.history.push(rel);
            if rel <= 0.5 * tol {
                break;
            }
            for i in 0..n {
                z[i] = if free[i] { r[i] / diag[i] } else { 0.0 };
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        stats.residual = rel;
        if stats.iterations >= max_iter {
            break;
        }
    }

    op.mul_vec_into(&y, &mut ay);
    let true_res: Vec<f64> = (0..n).map(|i| if free[i] { rhs[i] - ay[i] } else { 0.0 }).collect();
    stats.residual = norm(&true_res) / rhs_norm;
    if stats.residual > tol {
        return Err(Error::LinearSolveFailed {
            iterations: stats.iterations,
            residual: stats.residual,
            history: stats.history,
        });
    }
    for i in 0..n {
        if free[i] {
            x[i] = y[i];
        }
    }
    Ok(stats)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_operator;
    use crate::mesh::{rectangle_two_triangles, BoundaryTag};

    #[test]
    fn one_by_one_system() {
        let op = SparseOperator::from_triplets(1, [(0, 0, 4.0)]);
        let (x, stats) = linear_solve(&op, &[true], &[2.0], LINEAR_TOLERANCE).unwrap();
        assert_eq!(x, vec![0.5]);
        assert!(stats.iterations <= 1);
    }

    #[test]
    fn mass_matrix_applied_to_ones() {
        let mesh = rectangle_two_triangles(0.0, 1.0, 0.0, 1.0, [BoundaryTag::Neumann; 4])
            .uniform_refine()
            .uniform_refine();
        let op = assemble_operator(&mesh, 0.0);
        let rhs = op.mul_vec(&vec![1.0; op.n()]);
        let free = vec![true; op.n()];
        let (x, stats) = linear_solve(&op, &free, &rhs, LINEAR_TOLERANCE).unwrap();
        assert!(stats.residual <= LINEAR_TOLERANCE);
        for v in x {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_values_enter_the_right_hand_side() {
        let mesh = rectangle_two_triangles(0.0, 1.0, 0.0, 1.0, [BoundaryTag::Neumann; 4]).uniform_refine();
        let op = assemble_operator(&mesh, 0.7);
        let exact: Vec<f64> = (0..op.n()).map(|i| i as f64 * 0.3 - 1.0).collect();
        let b = op.mul_vec(&exact);
        let free: Vec<bool> = (0..op.n()).map(|i| i % 2 == 0).collect();
        let mut x: Vec<f64> = (0..op.n()).map(|i| if free[i] { 0.0 } else { exact[i] }).collect();
        solve_with_fixed(&op, &free, &b, &mut x, LINEAR_TOLERANCE).unwrap();
        for i in 0..op.n() {
            assert!((x[i] - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn exhausted_iterations_are_reported() {
        // indefinite: CG breaks down
        let op = SparseOperator::from_triplets(2, [(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        let res = linear_solve(&op, &[true, true], &[1.0, -1.0], LINEAR_TOLERANCE);
        assert!(matches!(res, Err(Error::Breakdown(_))));
    }
}
