//! Drivers for the four double-sided boundary value problems.
//!
//! Every driver produces the layer pair (sigma, q) of the representation
//! w = U sigma + W q plus, where the data only determine w up to a constant
//! on the interior side, the removed constant. The constant lives in the
//! excluded space of fields that are constant inside and vanish outside, so
//! it is reinstated as +c on interior evaluations only.
//!
//! Discrete systems (all built from the trace formulas of `potential_ops`):
//!
//! * Dirichlet (f_i, f_e): q = f_i - f_e gauged to zero mean with constant c;
//!   V sigma = M01 f_i - (1/2 M01 + K) q - c . areas. SPD Cholesky.
//! * Neumann (g_i, g_e): sigma = g_i - g_e;
//!   T q = M01' g_e + 1/2 M01' sigma + K' sigma, zero-mean bordered solve.
//!   Solvable only for vanishing total interior flux; the defect |int g_i|
//!   is reported and hard-fails above tolerance.
//! * Mixed interior-Dirichlet (f_i, g_e): symmetric block system
//!   [[V, B], [B', -T]] (sigma, q) = (M01 f_i, -M01' g_e), B = 1/2 M01 + K.
//! * Mixed interior-Neumann (g_i, f_e): [[V, D], [D', -T]] with
//!   D = -1/2 M01 + K and right-hand side (M01 f_e, -M01' g_i); the constant
//!   part of q is undetermined, so the q-block is gauged.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspaces::{
    apply_zero_mean_gauge, mean_value, DensityP0, DensityP1, Gauge, GaugeInfo,
};
use crate::mesh::{Point3, SurfaceMesh};
use crate::potential_ops::{
    boundary_traces, eval_representation, FieldSample, OperatorSet, PotentialError, Side,
    WeakTraces,
};
use crate::solvers::{
    solve_block, solve_spd, solve_zero_mean, BlockSystem, SolveReport, SolverError,
};

#[derive(Debug, Error)]
pub enum BvpError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("incompatible Neumann data: relative interior-flux defect {defect:.3e} exceeds {tol:.3e}")]
    IncompatibleNeumannData { defect: f64, tol: f64 },
    #[error("density has {got} coefficients, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Dirichlet,
    Neumann,
    MixedIntDExtN,
    MixedIntNExtD,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BvpOptions {
    /// Relative residual tolerance of the linear solves.
    pub tol: f64,
    /// Hard-fail threshold for the Neumann compatibility defect.
    pub compat_tol: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            tol: 1e-8,
            compat_tol: 1e-6,
        }
    }
}

/// Both derived trace pairs of a solution, in weak and recovered strong form.
#[derive(Clone, Debug)]
pub struct DerivedTraces {
    pub weak: WeakTraces,
    /// Strong Dirichlet pair (f_i, f_e); f_i includes the gauge constant.
    pub dirichlet: (DensityP1, DensityP1),
    /// Strong Neumann pair (g_i, g_e).
    pub neumann: (DensityP0, DensityP0),
}

/// Result of one driver run.
pub struct Solution {
    pub kind: ProblemKind,
    pub sigma: DensityP0,
    /// Zero-mean representative where a gauge applies.
    pub q: DensityP1,
    /// Constant reinstated on the interior side.
    pub gauge: GaugeInfo,
    pub report: SolveReport,
    pub traces: DerivedTraces,
    /// Relative interior-flux defect; `Some` for Neumann-type data.
    pub compatibility_defect: Option<f64>,
    pub mesh: Arc<SurfaceMesh>,
}

impl Solution {
    /// w at points off the surface, including the gauge constant inside.
    pub fn evaluate(
        &self,
        points: &[Point3],
        quad_order: usize,
    ) -> Result<Vec<FieldSample>, PotentialError> {
        let mut samples =
            eval_representation(&self.mesh, &self.sigma, &self.q, points, quad_order)?;
        if self.gauge.gauge == Gauge::ZeroMean && self.gauge.mean_value != 0.0 {
            for s in &mut samples {
                if s.side == Side::Interior {
                    s.value += self.gauge.mean_value;
                }
            }
        }
        Ok(samples)
    }
}

/// Least-squares P1 recovery from a P0-tested weak vector: solves
/// (M01' M01) f = M01' w.
pub fn strong_p1_from_weak(ops: &OperatorSet, weak: &DVector<f64>) -> DensityP1 {
    let normal = ops.mass.m01.tr_mul(&ops.mass.m01);
    let chol = nalgebra::Cholesky::new(normal).expect("M01 has full column rank");
    let f = chol.solve(&ops.mass.m01.tr_mul(weak));
    DensityP1::new(f.iter().copied().collect())
}

/// Minimum-norm P0 recovery from a P1-tested weak vector: g = M01 y with
/// (M01' M01) y = w, so that M01' g = w exactly.
pub fn strong_p0_from_weak(ops: &OperatorSet, weak: &DVector<f64>) -> DensityP0 {
    let normal = ops.mass.m01.tr_mul(&ops.mass.m01);
    let chol = nalgebra::Cholesky::new(normal).expect("M01 has full column rank");
    let g = &ops.mass.m01 * chol.solve(weak);
    DensityP0::new(g.iter().copied().collect())
}

fn areas_vector(ops: &OperatorSet) -> DVector<f64> {
    DVector::from(ops.mass.m00_diag.clone())
}

/// Integral functional on P1 coefficients (the zero-mean gauge constraint).
fn p1_mean_functional(ops: &OperatorSet) -> DVector<f64> {
    ops.mass
        .m01_tr_mul(&DVector::from_element(ops.n_triangles(), 1.0))
}

fn derive_traces(
    ops: &OperatorSet,
    sigma: &DensityP0,
    q: &DensityP1,
    gauge: &GaugeInfo,
) -> Result<DerivedTraces, BvpError> {
    let mut weak = boundary_traces(ops, sigma, q)?;
    if gauge.gauge == Gauge::ZeroMean && gauge.mean_value != 0.0 {
        // The reinstated interior constant c contributes <c, chi_a> = c A_a
        // to the interior Dirichlet trace and nothing else.
        weak.f_i += areas_vector(ops) * gauge.mean_value;
    }
    // Recover one side of each pair, then take the other from the exact jump
    // relations f_i - f_e = q + c and g_i - g_e = sigma, so that the strong
    // pairs keep both their weak forms and their jumps exact.
    let f_i = strong_p1_from_weak(ops, &weak.f_i);
    let f_e = DensityP1::new(
        f_i.coefficients
            .iter()
            .zip(&q.coefficients)
            .map(|(fi, qi)| fi - qi - gauge.mean_value)
            .collect(),
    );
    let g_e = strong_p0_from_weak(ops, &weak.g_e);
    let g_i = DensityP0::new(
        g_e.coefficients
            .iter()
            .zip(&sigma.coefficients)
            .map(|(ge, s)| ge + s)
            .collect(),
    );
    Ok(DerivedTraces {
        weak,
        dirichlet: (f_i, f_e),
        neumann: (g_i, g_e),
    })
}

fn check_p1(ops: &OperatorSet, d: &DensityP1) -> Result<(), BvpError> {
    if d.len() != ops.n_vertices() {
        return Err(BvpError::DimensionMismatch {
            got: d.len(),
            expected: ops.n_vertices(),
        });
    }
    Ok(())
}

fn check_p0(ops: &OperatorSet, d: &DensityP0) -> Result<(), BvpError> {
    if d.len() != ops.n_triangles() {
        return Err(BvpError::DimensionMismatch {
            got: d.len(),
            expected: ops.n_triangles(),
        });
    }
    Ok(())
}

/// Double-sided Dirichlet problem: boundary values prescribed on both sides.
pub fn solve_dirichlet(
    ops: &OperatorSet,
    f_i: &DensityP1,
    f_e: &DensityP1,
    opts: &BvpOptions,
) -> Result<Solution, BvpError> {
    check_p1(ops, f_i)?;
    check_p1(ops, f_e)?;
    let q_raw = DensityP1::new(
        f_i.coefficients
            .iter()
            .zip(&f_e.coefficients)
            .map(|(a, b)| a - b)
            .collect(),
    );
    let (q, gauge) = apply_zero_mean_gauge(ops.mesh.as_ref(), &q_raw);
    let qv = q.as_dvector();
    let rhs = ops.mass.m01_mul(&f_i.as_dvector())
        - ops.mass.m01_mul(&qv) * 0.5
        - &ops.k * &qv
        - areas_vector(ops) * gauge.mean_value;
    let (sigma_vec, report) = solve_spd(&ops.v, &rhs, opts.tol)?;
    let sigma = DensityP0::new(sigma_vec.iter().copied().collect());
    let traces = derive_traces(ops, &sigma, &q, &gauge)?;
    Ok(Solution {
        kind: ProblemKind::Dirichlet,
        sigma,
        q,
        gauge,
        report,
        traces,
        compatibility_defect: None,
        mesh: ops.mesh.clone(),
    })
}

/// Relative interior-flux defect |int g_i| / (sqrt(area) ||g_i||_L2).
fn neumann_compat_defect(mesh: &SurfaceMesh, g_i: &DensityP0) -> f64 {
    let flux = mean_value(mesh, g_i);
    let l2: f64 = (0..mesh.n_triangles())
        .map(|t| mesh.area(t) * g_i.coefficients[t] * g_i.coefficients[t])
        .sum::<f64>()
        .sqrt();
    let scale = mesh.total_area().sqrt() * l2;
    if scale == 0.0 {
        0.0
    } else {
        flux.abs() / scale
    }
}

/// Double-sided Neumann problem: normal derivatives prescribed on both sides.
pub fn solve_neumann(
    ops: &OperatorSet,
    g_i: &DensityP0,
    g_e: &DensityP0,
    opts: &BvpOptions,
) -> Result<Solution, BvpError> {
    check_p0(ops, g_i)?;
    check_p0(ops, g_e)?;
    let defect = neumann_compat_defect(&ops.mesh, g_i);
    if defect > opts.compat_tol {
        return Err(BvpError::IncompatibleNeumannData {
            defect,
            tol: opts.compat_tol,
        });
    }
    let sigma = DensityP0::new(
        g_i.coefficients
            .iter()
            .zip(&g_e.coefficients)
            .map(|(a, b)| a - b)
            .collect(),
    );
    let sv = sigma.as_dvector();
    let term_ge = ops.mass.m01_tr_mul(&g_e.as_dvector());
    let term_half = ops.mass.m01_tr_mul(&sv) * 0.5;
    let term_k = ops.k.tr_mul(&sv);
    // The right-hand side can be small for near-self-consistent data; measure
    // the solver's compatibility check against the data magnitude instead.
    let scale = term_ge.norm() + term_half.norm() + term_k.norm();
    let rhs = term_ge + term_half + term_k;
    let m = p1_mean_functional(ops);
    let (q_vec, report) =
        solve_zero_mean(&ops.t, &rhs, &m, opts.compat_tol, Some(scale)).map_err(
            |e| match e {
                SolverError::IncompatibleRhs { defect, tol } => {
                    BvpError::IncompatibleNeumannData { defect, tol }
                }
                other => BvpError::Solver(other),
            },
        )?;
    let q = DensityP1::new(q_vec.iter().copied().collect());
    let gauge = GaugeInfo {
        mean_value: 0.0,
        gauge: Gauge::ZeroMean,
    };
    let traces = derive_traces(ops, &sigma, &q, &gauge)?;
    Ok(Solution {
        kind: ProblemKind::Neumann,
        sigma,
        q,
        gauge,
        report,
        traces,
        compatibility_defect: Some(defect),
        mesh: ops.mesh.clone(),
    })
}

/// Mixed problem: interior boundary values, exterior normal derivative.
pub fn solve_mixed_int_d_ext_n(
    ops: &OperatorSet,
    f_i: &DensityP1,
    g_e: &DensityP0,
    opts: &BvpOptions,
) -> Result<Solution, BvpError> {
    check_p1(ops, f_i)?;
    check_p0(ops, g_e)?;
    let b_block = &ops.mass.m01 * 0.5 + &ops.k;
    let sys = BlockSystem {
        a11: &ops.v,
        a12: b_block,
        a22: &ops.t,
    };
    let b1 = ops.mass.m01_mul(&f_i.as_dvector());
    let b2 = -ops.mass.m01_tr_mul(&g_e.as_dvector());
    let (sigma_vec, q_vec, report) = solve_block(&sys, &b1, &b2, None, opts.tol)?;
    let sigma = DensityP0::new(sigma_vec.iter().copied().collect());
    let q_raw = DensityP1::new(q_vec.iter().copied().collect());
    let (q, gauge) = apply_zero_mean_gauge(ops.mesh.as_ref(), &q_raw);
    let traces = derive_traces(ops, &sigma, &q, &gauge)?;
    Ok(Solution {
        kind: ProblemKind::MixedIntDExtN,
        sigma,
        q,
        gauge,
        report,
        traces,
        compatibility_defect: None,
        mesh: ops.mesh.clone(),
    })
}

/// Mixed problem: interior normal derivative, exterior boundary values.
pub fn solve_mixed_int_n_ext_d(
    ops: &OperatorSet,
    g_i: &DensityP0,
    f_e: &DensityP1,
    opts: &BvpOptions,
) -> Result<Solution, BvpError> {
    check_p0(ops, g_i)?;
    check_p1(ops, f_e)?;
    let d_block = &ops.k - &ops.mass.m01 * 0.5;
    let sys = BlockSystem {
        a11: &ops.v,
        a12: d_block,
        a22: &ops.t,
    };
    let b1 = ops.mass.m01_mul(&f_e.as_dvector());
    let b2 = -ops.mass.m01_tr_mul(&g_i.as_dvector());
    let m = p1_mean_functional(ops);
    let (sigma_vec, q_vec, report) = solve_block(&sys, &b1, &b2, Some(&m), opts.tol)?;
    let sigma = DensityP0::new(sigma_vec.iter().copied().collect());
    let q = DensityP1::new(q_vec.iter().copied().collect());
    // The data determine w up to a constant inside; the zero-mean
    // representative is returned with no constant reinstated (it is not
    // observable from (g_i, f_e)).
    let gauge = GaugeInfo {
        mean_value: 0.0,
        gauge: Gauge::ZeroMean,
    };
    let traces = derive_traces(ops, &sigma, &q, &gauge)?;
    Ok(Solution {
        kind: ProblemKind::MixedIntNExtD,
        sigma,
        q,
        gauge,
        report,
        traces,
        compatibility_defect: None,
        mesh: ops.mesh.clone(),
    })
}
