//! Dense linear-algebra backends for the boundary systems.
//!
//! Problem sizes stay in the low thousands of unknowns, so everything is
//! direct and dense: Cholesky for the symmetric positive definite single
//! blocks (with conjugate gradients as a cross-check path), LU on bordered
//! systems for the zero-mean-constrained solves, and LU on the assembled
//! 2x2 block systems for the mixed problems.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("matrix not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix not positive definite")]
    NotPositiveDefinite,
    #[error("singular system")]
    Singular,
    #[error("incompatible right-hand side (defect {defect:.3e}, tolerance {tol:.3e})")]
    IncompatibleRhs { defect: f64, tol: f64 },
    #[error("requested tolerance not reached (residual {residual:.3e}, tolerance {tol:.3e})")]
    ToleranceNotReached { residual: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Cholesky,
    Lu,
    Cg,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolveReport {
    pub method: SolveMethod,
    /// 0 for direct factorizations.
    pub iterations: usize,
    pub relative_residual: f64,
    /// |m . x| for constrained solves, 0 otherwise.
    pub constraint_defect: f64,
}

fn relative_residual(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let r = a * x - b;
    let denom = b.norm().max(a.norm() * x.norm()).max(f64::MIN_POSITIVE);
    r.norm() / denom
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<(), SolverError> {
    let scale = a.norm();
    if scale == 0.0 {
        return Ok(());
    }
    let asymmetry = (a - a.transpose()).norm() / scale;
    if asymmetry > 1e-8 {
        return Err(SolverError::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// Cholesky solve of a symmetric positive definite system.
pub fn solve_spd(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, SolveReport), SolverError> {
    if a.nrows() != b.len() {
        return Err(SolverError::DimensionMismatch(format!(
            "matrix {}x{}, rhs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    check_symmetric(a)?;
    let chol = nalgebra::Cholesky::new(a.clone()).ok_or(SolverError::NotPositiveDefinite)?;
    let x = chol.solve(b);
    let residual = relative_residual(a, &x, b);
    if residual > tol {
        return Err(SolverError::ToleranceNotReached { residual, tol });
    }
    Ok((
        x,
        SolveReport {
            method: SolveMethod::Cholesky,
            iterations: 0,
            relative_residual: residual,
            constraint_defect: 0.0,
        },
    ))
}

/// Conjugate-gradient solve of the same systems; used as an independent path
/// and as the uniqueness probe (any initial guess converges to the same
/// solution).
pub fn solve_spd_cg(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
    x0: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, SolveReport), SolverError> {
    let n = b.len();
    if a.nrows() != n {
        return Err(SolverError::DimensionMismatch(format!(
            "matrix {}x{}, rhs {}",
            a.nrows(),
            a.ncols(),
            n
        )));
    }
    check_symmetric(a)?;
    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut r = b - a * &x;
    let bnorm = b.norm().max(f64::MIN_POSITIVE);
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let max_iter = 20 * n.max(50);
    let mut iterations = 0;
    while r.norm() / bnorm > tol {
        if iterations >= max_iter {
            return Err(SolverError::ToleranceNotReached {
                residual: r.norm() / bnorm,
                tol,
            });
        }
        let ap = a * &p;
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return Err(SolverError::NotPositiveDefinite);
        }
        let alpha = rr / pap;
        x += alpha * &p;
        r -= alpha * &ap;
        let rr_new = r.dot(&r);
        p = &r + (rr_new / rr) * p;
        rr = rr_new;
        iterations += 1;
    }
    let residual = relative_residual(a, &x, b);
    Ok((
        x,
        SolveReport {
            method: SolveMethod::Cg,
            iterations,
            relative_residual: residual,
            constraint_defect: 0.0,
        },
    ))
}

/// Solves A x = b subject to m . x = 0 for a symmetric positive semidefinite
/// A whose kernel is spanned by the constant vector, via the bordered system
/// [[A, m], [m', 0]].
///
/// Solvability requires the right-hand side to annihilate the kernel:
/// sum(b) = <b, 1> must vanish. The defect is measured against
/// `compat_scale` (a caller-supplied magnitude of the data; defaults to
/// ||b||) with relative tolerance `compat_tol`.
pub fn solve_zero_mean(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    m: &DVector<f64>,
    compat_tol: f64,
    compat_scale: Option<f64>,
) -> Result<(DVector<f64>, SolveReport), SolverError> {
    let n = b.len();
    if a.nrows() != n || m.len() != n {
        return Err(SolverError::DimensionMismatch(format!(
            "matrix {}x{}, rhs {}, constraint {}",
            a.nrows(),
            a.ncols(),
            n,
            m.len()
        )));
    }
    check_symmetric(a)?;
    let defect = b.sum().abs();
    let scale = compat_scale.unwrap_or_else(|| b.norm()).max(f64::MIN_POSITIVE);
    if defect > compat_tol * scale {
        return Err(SolverError::IncompatibleRhs {
            defect: defect / scale,
            tol: compat_tol,
        });
    }
    let mut bordered = DMatrix::zeros(n + 1, n + 1);
    bordered.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        bordered[(i, n)] = m[i];
        bordered[(n, i)] = m[i];
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(b);
    let lu = nalgebra::LU::new(bordered);
    let sol = lu.solve(&rhs).ok_or(SolverError::Singular)?;
    let x = DVector::from(sol.rows(0, n).clone_owned());
    let residual = relative_residual(a, &x, b).min({
        // For near-zero b the unconstrained residual is meaningless; measure
        // against the multiplier-corrected system instead.
        let lambda = sol[n];
        let r = a * &x + m * lambda - b;
        r.norm() / (a.norm() * x.norm()).max(b.norm()).max(f64::MIN_POSITIVE)
    });
    let constraint_defect = m.dot(&x).abs();
    Ok((
        x,
        SolveReport {
            method: SolveMethod::Lu,
            iterations: 0,
            relative_residual: residual,
            constraint_defect,
        },
    ))
}

/// Symmetric 2x2 block system
/// [[A11, A12], [A12', -A22]] (x1, x2) = (b1, b2)
/// with A11 positive definite and A22 positive semidefinite.
pub struct BlockSystem<'a> {
    pub a11: &'a DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a22: &'a DMatrix<f64>,
}

impl BlockSystem<'_> {
    fn check(&self, b1: &DVector<f64>, b2: &DVector<f64>) -> Result<(usize, usize), SolverError> {
        let n1 = self.a11.nrows();
        let n2 = self.a22.nrows();
        if self.a12.shape() != (n1, n2) || b1.len() != n1 || b2.len() != n2 {
            return Err(SolverError::DimensionMismatch(format!(
                "blocks {}x{}, {}x{}, {}x{}; rhs {} / {}",
                n1,
                n1,
                self.a12.nrows(),
                self.a12.ncols(),
                n2,
                n2,
                b1.len(),
                b2.len()
            )));
        }
        Ok((n1, n2))
    }

    fn block_residual(
        &self,
        x1: &DVector<f64>,
        x2: &DVector<f64>,
        b1: &DVector<f64>,
        b2: &DVector<f64>,
        gauge_term: Option<(&DVector<f64>, f64)>,
    ) -> f64 {
        let r1 = self.a11 * x1 + &self.a12 * x2 - b1;
        let mut r2 = self.a12.tr_mul(x1) - self.a22 * x2 - b2;
        if let Some((m, lambda)) = gauge_term {
            r2 += m * lambda;
        }
        let num = (r1.norm_squared() + r2.norm_squared()).sqrt();
        let denom = (b1.norm_squared() + b2.norm_squared())
            .sqrt()
            .max((self.a11.norm() + self.a12.norm() + self.a22.norm()) * (x1.norm() + x2.norm()))
            .max(f64::MIN_POSITIVE);
        num / denom
    }
}

/// Coupled LU solve of the assembled block system; `gauge` constrains the
/// second block to m . x2 = 0 through a border row/column (needed when A22's
/// constant kernel is not fixed by the coupling).
pub fn solve_block(
    sys: &BlockSystem,
    b1: &DVector<f64>,
    b2: &DVector<f64>,
    gauge: Option<&DVector<f64>>,
    tol: f64,
) -> Result<(DVector<f64>, DVector<f64>, SolveReport), SolverError> {
    let (n1, n2) = sys.check(b1, b2)?;
    let extra = usize::from(gauge.is_some());
    let n = n1 + n2 + extra;
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (n1, n1)).copy_from(sys.a11);
    full.view_mut((0, n1), (n1, n2)).copy_from(&sys.a12);
    full.view_mut((n1, 0), (n2, n1))
        .copy_from(&sys.a12.transpose());
    full.view_mut((n1, n1), (n2, n2)).copy_from(&(-sys.a22));
    if let Some(m) = gauge {
        if m.len() != n2 {
            return Err(SolverError::DimensionMismatch(
                "gauge vector length".to_string(),
            ));
        }
        for i in 0..n2 {
            full[(n1 + i, n1 + n2)] = m[i];
            full[(n1 + n2, n1 + i)] = m[i];
        }
    }
    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(0, n1).copy_from(b1);
    rhs.rows_mut(n1, n2).copy_from(b2);
    let lu = nalgebra::LU::new(full);
    let sol = lu.solve(&rhs).ok_or(SolverError::Singular)?;
    let x1 = DVector::from(sol.rows(0, n1).clone_owned());
    let x2 = DVector::from(sol.rows(n1, n2).clone_owned());
    let gauge_term = gauge.map(|m| (m, if extra == 1 { sol[n1 + n2] } else { 0.0 }));
    let residual = sys.block_residual(&x1, &x2, b1, b2, gauge_term);
    if residual > tol {
        return Err(SolverError::ToleranceNotReached { residual, tol });
    }
    let constraint_defect = gauge.map(|m| m.dot(&x2).abs()).unwrap_or(0.0);
    Ok((
        x1,
        x2,
        SolveReport {
            method: SolveMethod::Lu,
            iterations: 0,
            relative_residual: residual,
            constraint_defect,
        },
    ))
}

/// Sequential Schur-complement route through SPD solves: eliminates x1 with a
/// Cholesky of A11, solves the (gauged) Schur complement for x2, then back-
/// substitutes. Used as the independent cross-check of [`solve_block`].
pub fn solve_block_schur(
    sys: &BlockSystem,
    b1: &DVector<f64>,
    b2: &DVector<f64>,
    gauge: Option<&DVector<f64>>,
    tol: f64,
) -> Result<(DVector<f64>, DVector<f64>, SolveReport), SolverError> {
    sys.check(b1, b2)?;
    let chol = nalgebra::Cholesky::new(sys.a11.clone()).ok_or(SolverError::NotPositiveDefinite)?;
    // (A22 + A12' A11^{-1} A12) x2 = A12' A11^{-1} b1 - b2
    let a11_inv_a12 = chol.solve(&sys.a12);
    let schur = sys.a22 + sys.a12.tr_mul(&a11_inv_a12);
    let rhs2 = sys.a12.tr_mul(&chol.solve(b1)) - b2;
    let x2 = match gauge {
        Some(m) => {
            let (x2, _) = solve_zero_mean(&schur, &rhs2, m, f64::INFINITY, None)?;
            x2
        }
        None => {
            let schur_chol =
                nalgebra::Cholesky::new(schur.clone()).ok_or(SolverError::NotPositiveDefinite)?;
            schur_chol.solve(&rhs2)
        }
    };
    let x1 = chol.solve(&(b1 - &sys.a12 * &x2));
    let residual = sys.block_residual(&x1, &x2, b1, b2, None);
    // With a gauge the residual includes the multiplier term along m; accept
    // the projection orthogonal to it.
    let effective = if gauge.is_some() {
        let m = gauge.unwrap();
        let r2 = sys.a12.tr_mul(&x1) - sys.a22 * &x2 - b2;
        let r2_proj = &r2 - m * (r2.dot(m) / m.norm_squared());
        let r1 = sys.a11 * &x1 + &sys.a12 * &x2 - b1;
        (r1.norm_squared() + r2_proj.norm_squared()).sqrt()
            / (b1.norm_squared() + b2.norm_squared())
                .sqrt()
                .max(f64::MIN_POSITIVE)
    } else {
        residual
    };
    if effective > tol {
        return Err(SolverError::ToleranceNotReached {
            residual: effective,
            tol,
        });
    }
    let constraint_defect = gauge.map(|m| m.dot(&x2).abs()).unwrap_or(0.0);
    Ok((
        x1,
        x2,
        SolveReport {
            method: SolveMethod::Cholesky,
            iterations: 0,
            relative_residual: effective,
            constraint_defect,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspaces::interpolate_p1;
    use crate::test_fixtures::{ops_level1, ops_level2};
    use approx::assert_relative_eq;

    #[test]
    fn identity_system() {
        let a = DMatrix::identity(4, 4);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let (x, report) = solve_spd(&a, &b, 1e-12).unwrap();
        assert_eq!(x, b);
        assert_eq!(report.method, SolveMethod::Cholesky);
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let b = DVector::from_vec(vec![3.0, 3.0]);
        let (x, _) = solve_spd(&a, &b, 1e-12).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-13);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            solve_spd(&asym, &b, 1e-10),
            Err(SolverError::NotSymmetric { .. })
        ));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_spd(&indef, &b, 1e-10),
            Err(SolverError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn shell_density_from_v() {
        // V sigma = M00 . 1 recovers sigma ~ 1 (the uniform shell has
        // boundary potential 1 on the unit sphere).
        let ops = ops_level1();
        let b = DVector::from(ops.mass.m00_diag.clone());
        let (x, report) = solve_spd(&ops.v, &b, 1e-10).unwrap();
        assert!(report.relative_residual <= 1e-10);
        for v in x.iter() {
            assert_relative_eq!(*v, 1.0, max_relative = 0.05);
        }
    }

    #[test]
    fn cg_agrees_with_cholesky_for_any_start() {
        let ops = ops_level1();
        let b = DVector::from(ops.mass.m00_diag.clone());
        let (x_direct, _) = solve_spd(&ops.v, &b, 1e-10).unwrap();
        let (x_cg, report) = solve_spd_cg(&ops.v, &b, 1e-12, None).unwrap();
        assert!(report.iterations > 0);
        assert!((&x_cg - &x_direct).norm() / x_direct.norm() <= 1e-8);
        // Uniqueness probe: a perturbed start converges to the same point.
        let x0 = &x_direct + DVector::from_element(b.len(), 0.37);
        let (x_cg2, _) = solve_spd_cg(&ops.v, &b, 1e-12, Some(&x0)).unwrap();
        assert!((&x_cg2 - &x_direct).norm() / x_direct.norm() <= 1e-8);
    }

    #[test]
    fn zero_mean_trivial_and_incompatible() {
        let ops = ops_level2();
        let m = ops.mass.m01_tr_mul(&DVector::from_element(ops.n_triangles(), 1.0));
        let zero = DVector::zeros(ops.n_vertices());
        let (x, _) = solve_zero_mean(&ops.t, &zero, &m, 1e-8, None).unwrap();
        assert!(x.amax() <= 1e-14);

        // Weak form of the constant 1 is not in the range of T.
        let ones = interpolate_p1(&ops.mesh, |_| 1.0).unwrap();
        let b = &ops.mass.m11 * ones.as_dvector();
        assert!(matches!(
            solve_zero_mean(&ops.t, &b, &m, 1e-8, None),
            Err(SolverError::IncompatibleRhs { .. })
        ));
    }

    #[test]
    fn zero_mean_recovers_z_from_hypersingular() {
        // T q = weak((2/3) z) has solution q = z (T eigenvalue 2/3 at n=1).
        let ops = ops_level2();
        let z = interpolate_p1(&ops.mesh, |p| p.z).unwrap();
        let b = &ops.mass.m11 * z.as_dvector() * (2.0 / 3.0);
        let m = ops.mass.m01_tr_mul(&DVector::from_element(ops.n_triangles(), 1.0));
        let (x, report) = solve_zero_mean(&ops.t, &b, &m, 1e-4, None).unwrap();
        assert!(report.constraint_defect <= 1e-10 * x.norm().max(1.0));
        let zv = z.as_dvector();
        let err = (&x - &zv).norm() / zv.norm();
        assert!(err <= 0.10, "relative error {err}");
    }

    #[test]
    fn block_zero_rhs() {
        let ops = ops_level1();
        let sys = BlockSystem {
            a11: &ops.v,
            a12: DMatrix::zeros(ops.n_triangles(), ops.n_vertices()),
            a22: &ops.mass.m11,
        };
        let b1 = DVector::zeros(ops.n_triangles());
        let b2 = DVector::zeros(ops.n_vertices());
        let (x1, x2, _) = solve_block(&sys, &b1, &b2, None, 1e-8).unwrap();
        assert!(x1.amax() <= 1e-14);
        assert!(x2.amax() <= 1e-14);
    }

    #[test]
    fn block_coupled_matches_schur() {
        let ops = ops_level1();
        // Coupling block of the mixed interior-Dirichlet problem.
        let b_block = &ops.mass.m01 * 0.5 + &ops.k;
        let sys = BlockSystem {
            a11: &ops.v,
            a12: b_block,
            a22: &ops.t,
        };
        let f = interpolate_p1(&ops.mesh, |p| p.z + 0.2).unwrap();
        let b1 = ops.mass.m01_mul(&f.as_dvector());
        let b2 = &ops.mass.m11 * interpolate_p1(&ops.mesh, |p| p.x).unwrap().as_dvector();
        let (x1a, x2a, _) = solve_block(&sys, &b1, &b2, None, 1e-8).unwrap();
        let (x1b, x2b, _) = solve_block_schur(&sys, &b1, &b2, None, 1e-8).unwrap();
        let scale = (x1a.norm_squared() + x2a.norm_squared()).sqrt();
        let diff = ((&x1a - &x1b).norm_squared() + (&x2a - &x2b).norm_squared()).sqrt();
        assert!(diff / scale <= 1e-8, "paths differ by {}", diff / scale);
    }

    #[test]
    fn block_gauged_matches_schur() {
        let ops = ops_level1();
        // Coupling block of the mixed interior-Neumann problem: near-singular
        // in the constant q direction, needs the gauge.
        let d_block = &ops.k - &ops.mass.m01 * 0.5;
        let sys = BlockSystem {
            a11: &ops.v,
            a12: d_block,
            a22: &ops.t,
        };
        let m = ops.mass.m01_tr_mul(&DVector::from_element(ops.n_triangles(), 1.0));
        let b1 = ops.mass.m01_mul(
            &interpolate_p1(&ops.mesh, |p| p.z)
                .unwrap()
                .as_dvector(),
        );
        let b2 = &ops.mass.m11
            * interpolate_p1(&ops.mesh, |p| 0.4 * p.y)
                .unwrap()
                .as_dvector();
        let (x1a, x2a, ra) = solve_block(&sys, &b1, &b2, Some(&m), 1e-6).unwrap();
        let (x1b, x2b, _) = solve_block_schur(&sys, &b1, &b2, Some(&m), 1e-6).unwrap();
        assert!(ra.constraint_defect <= 1e-9 * x2a.norm().max(1.0));
        let scale = (x1a.norm_squared() + x2a.norm_squared()).sqrt();
        let diff = ((&x1a - &x1b).norm_squared() + (&x2a - &x2b).norm_squared()).sqrt();
        assert!(diff / scale <= 1e-8, "paths differ by {}", diff / scale);
    }

    #[test]
    fn block_quadratic_form_nonnegative() {
        let ops = ops_level1();
        let b_block = &ops.mass.m01 * 0.5 + &ops.k;
        let sys = BlockSystem {
            a11: &ops.v,
            a12: b_block,
            a22: &ops.t,
        };
        let b1 = ops.mass.m01_mul(
            &interpolate_p1(&ops.mesh, |p| p.z * p.x + 0.5)
                .unwrap()
                .as_dvector(),
        );
        let b2 = DVector::zeros(ops.n_vertices());
        let (x1, x2, _) = solve_block(&sys, &b1, &b2, None, 1e-8).unwrap();
        // The energy form of the system: x1' A11 x1 + x2' A22 x2 >= 0.
        let energy = x1.dot(&(&ops.v * &x1)) + x2.dot(&(&ops.t * &x2));
        assert!(energy >= 0.0);
    }
}
