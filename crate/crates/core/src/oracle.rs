//! Independent analytic references used by the test suite.
//!
//! Everything here is deliberately self-contained: spherical harmonics via
//! the associated Legendre recursion, operator eigenvalues on the unit sphere
//! in closed form, and a brute-force layer-potential evaluator with its own
//! Gauss-Legendre tensor quadrature (valid only away from the surface). None
//! of it shares code with the assembly path it is used to validate.

use std::f64::consts::PI;

use thiserror::Error;

use crate::bspaces::{DensityP0, DensityP1};
use crate::mesh::{Point3, SurfaceMesh};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid harmonic mode: n = {n}, m = {m} (need |m| <= n <= 4)")]
    InvalidMode { n: usize, m: i32 },
    #[error("evaluation point within {dist:.3e} of the surface (local scale {scale:.3e})")]
    TooCloseToSurface { dist: f64, scale: f64 },
    #[error("density length mismatch")]
    LengthMismatch,
}

/// Real, fully normalized spherical harmonic Y_n^m on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HarmonicMode {
    pub n: usize,
    pub m: i32,
}

pub const MAX_HARMONIC_DEGREE: usize = 4;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Associated Legendre P_n^m(x) with Condon-Shortley phase, m >= 0.
fn legendre_assoc(n: usize, m: usize, x: f64) -> f64 {
    debug_assert!(m <= n);
    // P_m^m = (-1)^m (2m-1)!! (1-x^2)^{m/2}
    let mut pmm = 1.0;
    if m > 0 {
        let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
        let mut fact = 1.0;
        for _ in 0..m {
            pmm *= -fact * somx2;
            fact += 2.0;
        }
    }
    if n == m {
        return pmm;
    }
    let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
    if n == m + 1 {
        return pmmp1;
    }
    let mut pnm = 0.0;
    for k in (m + 2)..=n {
        pnm = ((2 * k - 1) as f64 * x * pmmp1 - (k + m - 1) as f64 * pmm) / (k - m) as f64;
        pmm = pmmp1;
        pmmp1 = pnm;
    }
    pnm
}

impl HarmonicMode {
    pub fn new(n: usize, m: i32) -> Result<Self, OracleError> {
        if n > MAX_HARMONIC_DEGREE || m.unsigned_abs() as usize > n {
            return Err(OracleError::InvalidMode { n, m });
        }
        Ok(HarmonicMode { n, m })
    }

    /// Y_n^m at the direction of `x` (the radius is ignored).
    pub fn eval(&self, x: &Point3) -> f64 {
        let r = x.coords.norm();
        assert!(r > 0.0, "harmonic undefined at the origin");
        let ct = (x.z / r).clamp(-1.0, 1.0);
        let ma = self.m.unsigned_abs() as usize;
        let norm = ((2 * self.n + 1) as f64 / (4.0 * PI) * factorial(self.n - ma)
            / factorial(self.n + ma))
        .sqrt();
        let p = legendre_assoc(self.n, ma, ct);
        if self.m == 0 {
            norm * p
        } else {
            let phi = x.y.atan2(x.x);
            let angular = if self.m > 0 {
                (ma as f64 * phi).cos()
            } else {
                (ma as f64 * phi).sin()
            };
            std::f64::consts::SQRT_2 * norm * angular * p
        }
    }

    /// Interior solid harmonic r^n Y_n^m, harmonic in all of space.
    pub fn solid_interior(&self, x: &Point3) -> f64 {
        let r = x.coords.norm();
        if self.n == 0 {
            return self.eval_safe_origin(x);
        }
        r.powi(self.n as i32) * self.eval(x)
    }

    /// Exterior solid harmonic r^{-(n+1)} Y_n^m, harmonic outside the origin.
    pub fn solid_exterior(&self, x: &Point3) -> f64 {
        let r = x.coords.norm();
        r.powi(-(self.n as i32) - 1) * self.eval(x)
    }

    fn eval_safe_origin(&self, x: &Point3) -> f64 {
        if x.coords.norm() == 0.0 {
            // Y_0^0 is constant; r^0 Y_0^0 extends continuously to the origin.
            1.0 / (4.0 * PI).sqrt()
        } else {
            self.eval(x)
        }
    }

    /// All modes with degree up to `max_n`.
    pub fn all_up_to(max_n: usize) -> Vec<HarmonicMode> {
        let mut modes = Vec::new();
        for n in 0..=max_n.min(MAX_HARMONIC_DEGREE) {
            for m in -(n as i32)..=(n as i32) {
                modes.push(HarmonicMode { n, m });
            }
        }
        modes
    }
}

/// The three boundary operators with known spectra on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    V,
    K,
    T,
}

/// Eigenvalue of the operator on the degree-n spherical harmonic subspace
/// of the unit sphere (the double layer taken in the convention where the
/// potential of the constant density 1 is the interior indicator).
pub fn sphere_operator_eigenvalue(op: OperatorKind, n: usize) -> f64 {
    let nf = n as f64;
    match op {
        OperatorKind::V => 1.0 / (2.0 * nf + 1.0),
        OperatorKind::K => 1.0 / (2.0 * (2.0 * nf + 1.0)),
        OperatorKind::T => nf * (nf + 1.0) / (2.0 * nf + 1.0),
    }
}

/// Fundamental solution 1/(4 pi |x - x0|).
///
/// Panics on coincident points.
pub fn point_source_field(x0: &Point3, x: &Point3) -> f64 {
    let r = (x - x0).norm();
    assert!(r > 0.0, "point source evaluated at its own location");
    1.0 / (4.0 * PI * r)
}

/// Two-sided harmonic reference on the unit sphere:
/// w_i = a r^n Y, w_e = b r^{-(n+1)} Y.
#[derive(Clone, Copy, Debug)]
pub struct TransmissionReference {
    pub harmonic: HarmonicMode,
    pub a: f64,
    pub b: f64,
}

pub fn transmission_reference(
    n: usize,
    m: i32,
    a: f64,
    b: f64,
) -> Result<TransmissionReference, OracleError> {
    Ok(TransmissionReference {
        harmonic: HarmonicMode::new(n, m)?,
        a,
        b,
    })
}

impl TransmissionReference {
    pub fn interior_field(&self, x: &Point3) -> f64 {
        self.a * self.harmonic.solid_interior(x)
    }

    pub fn exterior_field(&self, x: &Point3) -> f64 {
        self.b * self.harmonic.solid_exterior(x)
    }

    /// Interior boundary values on the unit sphere: a Y.
    pub fn f_i(&self, x: &Point3) -> f64 {
        self.a * self.harmonic.eval(x)
    }

    /// Exterior boundary values: b Y.
    pub fn f_e(&self, x: &Point3) -> f64 {
        self.b * self.harmonic.eval(x)
    }

    /// Interior outward normal derivative: n a Y.
    pub fn g_i(&self, x: &Point3) -> f64 {
        self.harmonic.n as f64 * self.a * self.harmonic.eval(x)
    }

    /// Exterior outward normal derivative: -(n+1) b Y.
    pub fn g_e(&self, x: &Point3) -> f64 {
        -((self.harmonic.n + 1) as f64) * self.b * self.harmonic.eval(x)
    }

    /// Dirichlet jump amplitude (a - b) and Neumann jump (n a + (n+1) b).
    pub fn jump_amplitudes(&self) -> (f64, f64) {
        let n = self.harmonic.n as f64;
        (self.a - self.b, n * self.a + (n + 1.0) * self.b)
    }
}

/// Density argument for the brute-force evaluator.
pub enum LayerDensity<'a> {
    /// Single-layer density in P0.
    Single(&'a DensityP0),
    /// Double-layer density in P1.
    Double(&'a DensityP1),
}

/// Gauss-Legendre nodes/weights on (0, 1), computed by Newton iteration.
fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..(n + 1) / 2 {
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = pj;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = 0.5 * (1.0 - x);
        nodes[n - 1 - k] = 0.5 * (1.0 + x);
        weights[k] = 0.5 * w;
        weights[n - 1 - k] = 0.5 * w;
    }
    (nodes, weights)
}

/// Brute-force layer potential at a point well off the surface.
///
/// Per-triangle tensor Gauss rule on the collapsed unit square: the map
/// (s, t) -> (u, v) = (s (1 - t), s t) covers the reference triangle with
/// Jacobian s. `dense_order` is the number of points per dimension.
pub fn brute_force_potential(
    mesh: &SurfaceMesh,
    density: &LayerDensity,
    x: &Point3,
    dense_order: usize,
) -> Result<f64, OracleError> {
    match density {
        LayerDensity::Single(s) if s.len() != mesh.n_triangles() => {
            return Err(OracleError::LengthMismatch)
        }
        LayerDensity::Double(q) if q.len() != mesh.n_vertices() => {
            return Err(OracleError::LengthMismatch)
        }
        _ => {}
    }
    let dist = mesh.distance_to_surface(x);
    if dist <= mesh.h() {
        return Err(OracleError::TooCloseToSurface {
            dist,
            scale: mesh.h(),
        });
    }
    let (nodes, weights) = gauss_legendre_01(dense_order.max(2));
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.triangle_vertices(t);
        let e1 = p1 - p0;
        let e2 = p2 - p0;
        let normal = mesh.normal(t);
        let two_area = 2.0 * mesh.area(t);
        for (i, &s) in nodes.iter().enumerate() {
            for (j, &tt) in nodes.iter().enumerate() {
                let u = s * (1.0 - tt);
                let v = s * tt;
                let y = p0 + e1 * u + e2 * v;
                let d = y - x;
                let r = d.norm();
                let w = weights[i] * weights[j] * s * two_area;
                match density {
                    LayerDensity::Single(sig) => {
                        total += w * sig.coefficients[t] / (4.0 * PI * r);
                    }
                    LayerDensity::Double(q) => {
                        let bary = [1.0 - u - v, u, v];
                        let qv = q.eval_on_triangle(mesh, t, &bary);
                        total += w * qv * d.dot(&normal) / (4.0 * PI * r * r * r);
                    }
                }
            }
        }
    }
    Ok(total)
}
