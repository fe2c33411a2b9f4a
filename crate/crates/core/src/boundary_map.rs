//! Maps between double-sided Dirichlet pairs and double-sided Neumann pairs.
//!
//! Both directions reuse the BVP drivers: the Dirichlet-to-Neumann map solves
//! the Dirichlet problem and reads off the derived Neumann traces, and vice
//! versa. The maps can optionally be materialized as dense matrices acting on
//! stacked pair coefficients (f_i; f_e) resp. (g_i; g_e), which is only worth
//! the O(n) solves for spectral studies.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspaces::{mean_value, DensityP0, DensityP1, GaugeInfo};
use crate::bvp::{solve_dirichlet, solve_neumann, BvpError, BvpOptions};
use crate::potential_ops::OperatorSet;
use crate::solvers::SolveReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapDirection {
    DtN,
    NtD,
}

/// Dirichlet-to-Neumann application result.
pub struct DtnResult {
    pub g_i: DensityP0,
    pub g_e: DensityP0,
    pub report: SolveReport,
}

/// Neumann-to-Dirichlet application result. The interior trace is defined
/// only up to a constant; the zero-mean-q representative is returned and the
/// input component means are reported alongside.
pub struct NtdResult {
    pub f_i: DensityP1,
    pub f_e: DensityP1,
    pub gauge: GaugeInfo,
    pub compatibility_defect: f64,
    pub mean_g_i: f64,
    pub mean_g_e: f64,
    pub report: SolveReport,
}

pub fn apply_dtn(
    ops: &OperatorSet,
    f_i: &DensityP1,
    f_e: &DensityP1,
    opts: &BvpOptions,
) -> Result<DtnResult, BvpError> {
    let sol = solve_dirichlet(ops, f_i, f_e, opts)?;
    let (g_i, g_e) = sol.traces.neumann;
    Ok(DtnResult {
        g_i,
        g_e,
        report: sol.report,
    })
}

pub fn apply_ntd(
    ops: &OperatorSet,
    g_i: &DensityP0,
    g_e: &DensityP0,
    opts: &BvpOptions,
) -> Result<NtdResult, BvpError> {
    let sol = solve_neumann(ops, g_i, g_e, opts)?;
    let (f_i, f_e) = sol.traces.dirichlet;
    Ok(NtdResult {
        f_i,
        f_e,
        gauge: sol.gauge,
        compatibility_defect: sol.compatibility_defect.unwrap_or(0.0),
        mean_g_i: mean_value(&ops.mesh, g_i) / ops.mesh.total_area(),
        mean_g_e: mean_value(&ops.mesh, g_e) / ops.mesh.total_area(),
        report: sol.report,
    })
}

/// A boundary operator between stacked double-sided trace pairs.
pub struct BoundaryMap<'a> {
    pub direction: MapDirection,
    ops: &'a OperatorSet,
    opts: BvpOptions,
    matrix: Option<DMatrix<f64>>,
}

impl<'a> BoundaryMap<'a> {
    pub fn new(ops: &'a OperatorSet, direction: MapDirection, opts: BvpOptions) -> Self {
        BoundaryMap {
            direction,
            ops,
            opts,
            matrix: None,
        }
    }

    fn input_len(&self) -> usize {
        match self.direction {
            MapDirection::DtN => 2 * self.ops.n_vertices(),
            MapDirection::NtD => 2 * self.ops.n_triangles(),
        }
    }

    fn output_len(&self) -> usize {
        match self.direction {
            MapDirection::DtN => 2 * self.ops.n_triangles(),
            MapDirection::NtD => 2 * self.ops.n_vertices(),
        }
    }

    fn apply_stacked(&self, x: &DVector<f64>) -> Result<DVector<f64>, BvpError> {
        match self.direction {
            MapDirection::DtN => {
                let nv = self.ops.n_vertices();
                let f_i = DensityP1::new(x.rows(0, nv).iter().copied().collect());
                let f_e = DensityP1::new(x.rows(nv, nv).iter().copied().collect());
                let out = apply_dtn(self.ops, &f_i, &f_e, &self.opts)?;
                let mut y = DVector::zeros(self.output_len());
                let nt = self.ops.n_triangles();
                y.rows_mut(0, nt).copy_from(&out.g_i.as_dvector());
                y.rows_mut(nt, nt).copy_from(&out.g_e.as_dvector());
                Ok(y)
            }
            MapDirection::NtD => {
                let nt = self.ops.n_triangles();
                let g_i = DensityP0::new(x.rows(0, nt).iter().copied().collect());
                let g_e = DensityP0::new(x.rows(nt, nt).iter().copied().collect());
                let out = apply_ntd(self.ops, &g_i, &g_e, &self.opts)?;
                let mut y = DVector::zeros(self.output_len());
                let nv = self.ops.n_vertices();
                y.rows_mut(0, nv).copy_from(&out.f_i.as_dvector());
                y.rows_mut(nv, nv).copy_from(&out.f_e.as_dvector());
                Ok(y)
            }
        }
    }

    /// Apply to a stacked coefficient pair, via the materialized matrix if
    /// one has been built.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>, BvpError> {
        if x.len() != self.input_len() {
            return Err(BvpError::DimensionMismatch {
                got: x.len(),
                expected: self.input_len(),
            });
        }
        if let Some(m) = &self.matrix {
            return Ok(m * x);
        }
        self.apply_stacked(x)
    }

    /// Build the dense matrix column by column (basis pairs are generally
    /// incompatible Neumann data, so the compatibility gate is lifted; the
    /// incompatible components cancel for any compatible input by linearity).
    pub fn materialize(&mut self) -> Result<(), BvpError> {
        let n_in = self.input_len();
        let relaxed = BvpOptions {
            compat_tol: f64::INFINITY,
            ..self.opts
        };
        let probe = BoundaryMap {
            direction: self.direction,
            ops: self.ops,
            opts: relaxed,
            matrix: None,
        };
        let columns: Result<Vec<_>, BvpError> = (0..n_in)
            .into_par_iter()
            .map(|j| {
                let mut e = DVector::zeros(n_in);
                e[j] = 1.0;
                probe.apply_stacked(&e)
            })
            .collect();
        let columns = columns?;
        let mut m = DMatrix::zeros(self.output_len(), n_in);
        for (j, col) in columns.iter().enumerate() {
            m.set_column(j, col);
        }
        self.matrix = Some(m);
        Ok(())
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        self.matrix.as_ref()
    }
}
