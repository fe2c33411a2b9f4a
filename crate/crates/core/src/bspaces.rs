//! Discrete boundary function spaces on a triangulated surface.
//!
//! Flux-like densities (normal derivatives, the jump σ) live in the space of
//! piecewise constants, one coefficient per triangle. Trace-like densities
//! (boundary values, the jump q) live in the space of continuous piecewise
//! linears, one coefficient per vertex. The quotient by constants is realized
//! by the zero-area-mean representative; the removed constant is tracked in
//! [`GaugeInfo`] so callers can restore it where it matters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Point3, SurfaceMesh};

#[derive(Debug, Error)]
pub enum BspaceError {
    #[error("non-finite value at {location} {index}")]
    NonFinite { location: &'static str, index: usize },
    #[error("density has {got} coefficients, mesh needs {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
}

/// Piecewise-constant density, one coefficient per triangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityP0 {
    #[serde(rename = "p0")]
    pub coefficients: Vec<f64>,
}

/// Continuous piecewise-linear density, one coefficient per vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityP1 {
    #[serde(rename = "p1")]
    pub coefficients: Vec<f64>,
}

impl DensityP0 {
    pub fn new(coefficients: Vec<f64>) -> Self {
        DensityP0 { coefficients }
    }

    pub fn zeros(mesh: &SurfaceMesh) -> Self {
        DensityP0::new(vec![0.0; mesh.n_triangles()])
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn check_mesh(&self, mesh: &SurfaceMesh) -> Result<(), BspaceError> {
        if self.len() != mesh.n_triangles() {
            return Err(BspaceError::LengthMismatch {
                got: self.len(),
                expected: mesh.n_triangles(),
            });
        }
        Ok(())
    }
}

impl DensityP1 {
    pub fn new(coefficients: Vec<f64>) -> Self {
        DensityP1 { coefficients }
    }

    pub fn zeros(mesh: &SurfaceMesh) -> Self {
        DensityP1::new(vec![0.0; mesh.n_vertices()])
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn check_mesh(&self, mesh: &SurfaceMesh) -> Result<(), BspaceError> {
        if self.len() != mesh.n_vertices() {
            return Err(BspaceError::LengthMismatch {
                got: self.len(),
                expected: mesh.n_vertices(),
            });
        }
        Ok(())
    }

    /// Value at a point of the given triangle with barycentric coordinates.
    pub fn eval_on_triangle(&self, mesh: &SurfaceMesh, t: usize, bary: &[f64; 3]) -> f64 {
        let tri = &mesh.triangles()[t];
        bary[0] * self.coefficients[tri[0]]
            + bary[1] * self.coefficients[tri[1]]
            + bary[2] * self.coefficients[tri[2]]
    }
}

/// Both prescribed traces of a double-sided problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TracePair {
    /// Boundary values on both sides: (f_i, f_e).
    Dirichlet { interior: DensityP1, exterior: DensityP1 },
    /// Normal derivatives on both sides: (g_i, g_e).
    Neumann { interior: DensityP0, exterior: DensityP0 },
    /// Interior boundary values, exterior normal derivative: (f_i, g_e).
    MixedIntDExtN { interior: DensityP1, exterior: DensityP0 },
    /// Interior normal derivative, exterior boundary values: (g_i, f_e).
    MixedIntNExtD { interior: DensityP0, exterior: DensityP1 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    None,
    ZeroMean,
}

/// Records the constant removed when passing to the zero-mean representative.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GaugeInfo {
    pub mean_value: f64,
    pub gauge: Gauge,
}

impl GaugeInfo {
    pub fn none() -> Self {
        GaugeInfo {
            mean_value: 0.0,
            gauge: Gauge::None,
        }
    }
}

/// Vertex interpolation of a scalar field into the piecewise-linear space.
pub fn interpolate_p1(
    mesh: &SurfaceMesh,
    f: impl Fn(&Point3) -> f64,
) -> Result<DensityP1, BspaceError> {
    let mut coefficients = Vec::with_capacity(mesh.n_vertices());
    for (i, v) in mesh.vertices().iter().enumerate() {
        let value = f(v);
        if !value.is_finite() {
            return Err(BspaceError::NonFinite {
                location: "vertex",
                index: i,
            });
        }
        coefficients.push(value);
    }
    Ok(DensityP1::new(coefficients))
}

/// L² projection of a scalar field into the piecewise-constant space:
/// area average per triangle via a Gauss rule.
pub fn project_to_p0(
    mesh: &SurfaceMesh,
    g: impl Fn(&Point3) -> f64,
    quad_order: usize,
) -> Result<DensityP0, BspaceError> {
    let rule = crate::quadrature::gauss_triangle_rule(quad_order)?;
    let mut coefficients = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle_vertices(t);
        let mut mean = 0.0;
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = Point3::from(a.coords * p[0] + b.coords * p[1] + c.coords * p[2]);
            mean += w * g(&x);
        }
        if !mean.is_finite() {
            return Err(BspaceError::NonFinite {
                location: "triangle",
                index: t,
            });
        }
        coefficients.push(mean);
    }
    Ok(DensityP0::new(coefficients))
}

/// Galerkin mass matrices between the two spaces (exact for flat triangles).
#[derive(Clone, Debug)]
pub struct MassMatrices {
    /// Diagonal of the P0×P0 mass matrix: triangle areas.
    pub m00_diag: DVector<f64>,
    /// P0-tested, P1-trial mass matrix, n_triangles × n_vertices.
    pub m01: DMatrix<f64>,
    /// P1×P1 mass matrix, symmetric positive definite.
    pub m11: DMatrix<f64>,
}

impl MassMatrices {
    /// M01 q without forming dense products.
    pub fn m01_mul(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.m01 * q
    }

    /// M01ᵀ σ.
    pub fn m01_tr_mul(&self, sigma: &DVector<f64>) -> DVector<f64> {
        self.m01.tr_mul(sigma)
    }
}

pub fn mass_matrices(mesh: &SurfaceMesh) -> MassMatrices {
    let nt = mesh.n_triangles();
    let nv = mesh.n_vertices();
    let mut m00_diag = DVector::zeros(nt);
    let mut m01 = DMatrix::zeros(nt, nv);
    let mut m11 = DMatrix::zeros(nv, nv);
    for t in 0..nt {
        let area = mesh.area(t);
        m00_diag[t] = area;
        let tri = &mesh.triangles()[t];
        for (li, &vi) in tri.iter().enumerate() {
            m01[(t, vi)] += area / 3.0;
            for (lj, &vj) in tri.iter().enumerate() {
                m11[(vi, vj)] += area / 12.0 * if li == lj { 2.0 } else { 1.0 };
            }
        }
    }
    MassMatrices { m00_diag, m01, m11 }
}

/// ∫_Γ density dΓ, exact for the discrete spaces.
pub trait SurfaceDensity {
    fn integral(&self, mesh: &SurfaceMesh) -> f64;
    fn shift(&mut self, c: f64);
    fn coefficient_norm(&self) -> f64;
}

impl SurfaceDensity for DensityP0 {
    fn integral(&self, mesh: &SurfaceMesh) -> f64 {
        (0..mesh.n_triangles())
            .map(|t| mesh.area(t) * self.coefficients[t])
            .sum()
    }

    fn shift(&mut self, c: f64) {
        for v in &mut self.coefficients {
            *v += c;
        }
    }

    fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl SurfaceDensity for DensityP1 {
    fn integral(&self, mesh: &SurfaceMesh) -> f64 {
        let mut total = 0.0;
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let s: f64 = tri.iter().map(|&v| self.coefficients[v]).sum();
            total += mesh.area(t) / 3.0 * s;
        }
        total
    }

    fn shift(&mut self, c: f64) {
        for v in &mut self.coefficients {
            *v += c;
        }
    }

    fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn mean_value<D: SurfaceDensity>(mesh: &SurfaceMesh, density: &D) -> f64 {
    density.integral(mesh)
}

/// Subtracts the area-weighted mean, returning the zero-mean representative
/// and the removed constant.
pub fn apply_zero_mean_gauge<D: SurfaceDensity + Clone>(
    mesh: &SurfaceMesh,
    density: &D,
) -> (D, GaugeInfo) {
    let mean = density.integral(mesh) / mesh.total_area();
    let mut gauged = density.clone();
    gauged.shift(-mean);
    (
        gauged,
        GaugeInfo {
            mean_value: mean,
            gauge: Gauge::ZeroMean,
        },
    )
}
