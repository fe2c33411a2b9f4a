//! Assembly of the four Galerkin boundary operators and evaluation of the
//! representation w = U sigma + W q off the surface.
//!
//! Conventions. The double-layer kernel is (y-x).n_y / (4 pi |x-y|^3) with n
//! outward, so W applied to the constant density 1 is the indicator function
//! of the interior domain, and the Dirichlet jump of W q across the surface is
//! +q. With that choice the weak traces of w = U sigma + W q are
//!
//!   f_i = V sigma + (1/2) M01 q + K q          (interior boundary values)
//!   f_e = V sigma - (1/2) M01 q + K q          (exterior)
//!   g_i = (1/2) M01' sigma - K' sigma + T q    (interior normal derivative)
//!   g_e = -(1/2) M01' sigma - K' sigma + T q   (exterior)
//!
//! (' = transpose). The Galerkin matrix of the adjoint double layer is exactly
//! -K' in this convention: swapping integration roles in the K entries turns
//! the kernel's n_y into n_x and flips the direction factor. Both jump
//! identities f_i - f_e = M01 q and g_i - g_e = M01' sigma then hold to
//! machine precision, and on the unit sphere the operators act on degree-n
//! spherical harmonics with eigenvalues 1/(2n+1), 1/(2(2n+1)) and
//! n(n+1)/(2n+1) for V, K and T.
//!
//! The hypersingular operator is assembled through the curl-curl identity
//! <Tq, v> = (1/4pi) integral integral curl_G q(y) . curl_G v(x) / |x-y|,
//! which for flat P1 elements reduces T entries to linear combinations of the
//! already-computed single-layer pair integrals.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspaces::{mass_matrices, DensityP0, DensityP1, MassMatrices};
use crate::mesh::{Point3, SurfaceMesh, Vec3};
use crate::quadrature::{
    double_layer_kernel, pair_rule_for, single_layer_kernel, PairRule, QuadratureError,
    TriangleChart,
};

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("density has {got} coefficients, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("point {point:?} is too close to the surface (distance {dist:.3e})")]
    TooCloseToSurface { point: [f64; 3], dist: f64 },
    #[error("side classification ambiguous at {point:?} (winding number {winding:.3})")]
    AmbiguousSide { point: [f64; 3], winding: f64 },
    #[error("operator cache i/o: {0}")]
    CacheIo(#[from] std::io::Error),
    #[error("operator cache does not match: {0}")]
    CacheMismatch(String),
}

/// Quadrature orders used during assembly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadConfig {
    /// Order for well-separated pairs.
    pub disjoint_order: usize,
    /// Order for coincident and vertex/edge-adjacent pairs.
    pub singular_order: usize,
    /// Escalated order for close but disjoint pairs.
    pub near_order: usize,
    /// Pairs with centroid distance below this multiple of the larger
    /// triangle diameter use `near_order`.
    pub near_ratio: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            disjoint_order: 4,
            singular_order: 6,
            near_order: 8,
            near_ratio: 2.0,
        }
    }
}

/// Field sample produced by [`eval_representation`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FieldSample {
    pub point: [f64; 3],
    pub side: Side,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Interior,
    Exterior,
}

/// The assembled Galerkin operators on one mesh.
pub struct OperatorSet {
    /// Single layer, P0 x P0, symmetric positive definite.
    pub v: DMatrix<f64>,
    /// Double layer tested with P0, n_triangles x n_vertices.
    pub k: DMatrix<f64>,
    /// Hypersingular, P1 x P1, symmetric positive semidefinite.
    pub t: DMatrix<f64>,
    pub mass: MassMatrices,
    pub mesh: Arc<SurfaceMesh>,
    pub quad: QuadConfig,
}

/// Per-triangle surface curls of the three P1 hat functions (constant
/// tangent vectors; the overall orientation sign cancels in T).
fn triangle_curls(mesh: &SurfaceMesh) -> Vec<[Vec3; 3]> {
    (0..mesh.n_triangles())
        .map(|t| {
            let p = mesh.triangle_vertices(t);
            let inv_two_area = 1.0 / (2.0 * mesh.area(t));
            [
                (p[1] - p[2]) * inv_two_area,
                (p[2] - p[0]) * inv_two_area,
                (p[0] - p[1]) * inv_two_area,
            ]
        })
        .collect()
}

struct PairRuleSet {
    disjoint: PairRule,
    near: PairRule,
}

impl OperatorSet {
    pub fn assemble(mesh: Arc<SurfaceMesh>, quad: QuadConfig) -> Result<Self, PotentialError> {
        let nt = mesh.n_triangles();
        let nv = mesh.n_vertices();
        let charts: Vec<TriangleChart> = (0..nt)
            .map(|t| TriangleChart::new(&mesh.triangle_vertices(t)))
            .collect();
        for (t, c) in charts.iter().enumerate() {
            if c.area <= 0.0 {
                return Err(QuadratureError::DegenerateTriangle(t).into());
            }
        }
        let centroids: Vec<Point3> = (0..nt).map(|t| mesh.centroid(t)).collect();
        let diameters: Vec<f64> = (0..nt).map(|t| mesh.diameter(t)).collect();
        let rules = PairRuleSet {
            disjoint: crate::quadrature::pair_rule(
                crate::quadrature::AdjacencyCase::Disjoint,
                quad.disjoint_order,
            )?,
            near: crate::quadrature::pair_rule(
                crate::quadrature::AdjacencyCase::Disjoint,
                quad.near_order,
            )?,
        };

        // Row-parallel assembly: each test triangle owns one row of V and one
        // row of K, and the inner loop order is fixed, so the result is
        // bit-identical regardless of thread count.
        let rows: Vec<Result<(Vec<f64>, Vec<f64>), PotentialError>> = (0..nt)
            .into_par_iter()
            .map(|ta| {
                let mut v_row = vec![0.0; nt];
                let mut k_row = vec![0.0; nv];
                let tris = mesh.triangles();
                for tb in 0..nt {
                    let same = ta == tb;
                    let shared = !same
                        && tris[ta].iter().any(|g| tris[tb].contains(g));
                    let local_rule;
                    let rule: &PairRule = if same || shared {
                        local_rule =
                            pair_rule_for(&tris[ta], &tris[tb], same, quad.singular_order)?;
                        &local_rule
                    } else {
                        let dist = (centroids[ta] - centroids[tb]).norm();
                        if dist < quad.near_ratio * diameters[ta].max(diameters[tb]) {
                            &rules.near
                        } else {
                            &rules.disjoint
                        }
                    };
                    let ca = &charts[ta];
                    let cb = &charts[tb];
                    let mut s = 0.0;
                    let mut dl = [0.0; 3];
                    if same {
                        // The double-layer kernel vanishes identically on a
                        // flat triangle; only the single layer remains.
                        for i in 0..rule.len() {
                            let x = ca.map(&rule.test_points[i]);
                            let y = cb.map(&rule.trial_points[i]);
                            s += rule.weights[i] * single_layer_kernel(&x, &y);
                        }
                    } else {
                        for i in 0..rule.len() {
                            let uvb = &rule.trial_points[i];
                            let x = ca.map(&rule.test_points[i]);
                            let y = cb.map(uvb);
                            let w = rule.weights[i];
                            s += w * single_layer_kernel(&x, &y);
                            let d = w * double_layer_kernel(&x, &y, &cb.normal);
                            dl[0] += d * (1.0 - uvb[0] - uvb[1]);
                            dl[1] += d * uvb[0];
                            dl[2] += d * uvb[1];
                        }
                    }
                    let jac = 4.0 * ca.area * cb.area;
                    v_row[tb] = jac * s;
                    for (lj, &vj) in tris[tb].iter().enumerate() {
                        k_row[vj] += jac * dl[lj];
                    }
                }
                Ok((v_row, k_row))
            })
            .collect();

        let mut v = DMatrix::zeros(nt, nt);
        let mut k = DMatrix::zeros(nt, nv);
        for (ta, row) in rows.into_iter().enumerate() {
            let (v_row, k_row) = row?;
            for (tb, val) in v_row.into_iter().enumerate() {
                v[(ta, tb)] = val;
            }
            for (j, val) in k_row.into_iter().enumerate() {
                k[(ta, j)] = val;
            }
        }
        // The continuous single layer is symmetric; enforce it exactly so the
        // downstream Cholesky and the energy identity are clean.
        let vt = v.transpose();
        v = (v + vt) * 0.5;

        // Hypersingular operator from the single-layer pair integrals via the
        // curl-curl identity; row-parallel over vertices for determinism.
        let curls = triangle_curls(&mesh);
        let t_rows: Vec<Vec<f64>> = (0..nv)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; nv];
                for &ta in mesh.triangles_of_vertex(i) {
                    let li = mesh.triangles()[ta].iter().position(|&g| g == i).unwrap();
                    let ci = curls[ta][li];
                    for tb in 0..nt {
                        let s = v[(ta, tb)];
                        for (lj, &vj) in mesh.triangles()[tb].iter().enumerate() {
                            row[vj] += ci.dot(&curls[tb][lj]) * s;
                        }
                    }
                }
                row
            })
            .collect();
        let mut t = DMatrix::zeros(nv, nv);
        for (i, row) in t_rows.into_iter().enumerate() {
            for (j, val) in row.into_iter().enumerate() {
                t[(i, j)] = val;
            }
        }
        let tt = t.transpose();
        t = (t + tt) * 0.5;

        let mass = mass_matrices(&mesh);
        Ok(OperatorSet {
            v,
            k,
            t,
            mass,
            mesh,
            quad,
        })
    }

    /// Adjoint double-layer block: exactly the transpose of K.
    pub fn kt(&self) -> DMatrix<f64> {
        self.k.transpose()
    }

    pub fn n_triangles(&self) -> usize {
        self.mesh.n_triangles()
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        self.mesh.fingerprint()
    }
}

/// All four boundary traces of w = U sigma + W q in weak (tested) form:
/// Dirichlet traces tested against P0, Neumann traces against P1.
#[derive(Clone, Debug)]
pub struct WeakTraces {
    pub f_i: DVector<f64>,
    pub f_e: DVector<f64>,
    pub g_i: DVector<f64>,
    pub g_e: DVector<f64>,
}

pub fn boundary_traces(
    ops: &OperatorSet,
    sigma: &DensityP0,
    q: &DensityP1,
) -> Result<WeakTraces, PotentialError> {
    if sigma.len() != ops.n_triangles() {
        return Err(PotentialError::DimensionMismatch {
            got: sigma.len(),
            expected: ops.n_triangles(),
        });
    }
    if q.len() != ops.n_vertices() {
        return Err(PotentialError::DimensionMismatch {
            got: q.len(),
            expected: ops.n_vertices(),
        });
    }
    let sv = sigma.as_dvector();
    let qv = q.as_dvector();
    // Shared terms are computed once so the jump identities hold exactly.
    let common_f = &ops.v * &sv + &ops.k * &qv;
    let half_f = ops.mass.m01_mul(&qv) * 0.5;
    let common_g = &ops.t * &qv - ops.k.tr_mul(&sv);
    let half_g = ops.mass.m01_tr_mul(&sv) * 0.5;
    Ok(WeakTraces {
        f_i: &common_f + &half_f,
        f_e: &common_f - &half_f,
        g_i: &common_g + &half_g,
        g_e: &common_g - &half_g,
    })
}

// ---------------------------------------------------------------------------
// Off-surface evaluation

const EVAL_NEAR_RATIO: f64 = 2.0;
const EVAL_MAX_DEPTH: usize = 6;
const EVAL_TOO_CLOSE: f64 = 1e-10;

fn check_off_surface(mesh: &SurfaceMesh, x: &Point3) -> Result<(), PotentialError> {
    let dist = mesh.distance_to_surface(x);
    if dist <= EVAL_TOO_CLOSE * mesh.h() {
        return Err(PotentialError::TooCloseToSurface {
            point: [x.x, x.y, x.z],
            dist,
        });
    }
    Ok(())
}

/// Recursive panel integration: subdivide while the evaluation point is close
/// relative to the panel size, so a fixed-order rule stays accurate.
fn panel_integral(
    vertices: &[Point3; 3],
    values: &[f64; 3],
    x: &Point3,
    normal: &Vec3,
    double_layer: bool,
    rule: &crate::quadrature::TriangleRule,
    depth: usize,
) -> Result<f64, PotentialError> {
    let chart = TriangleChart::new(vertices);
    let centroid = Point3::from(
        (vertices[0].coords + vertices[1].coords + vertices[2].coords) / 3.0,
    );
    let diam = (vertices[0] - vertices[1])
        .norm()
        .max((vertices[1] - vertices[2]).norm())
        .max((vertices[2] - vertices[0]).norm());
    let dist = (x - centroid).norm();
    if dist < EVAL_NEAR_RATIO * diam {
        if depth == 0 {
            if dist < EVAL_TOO_CLOSE * diam.max(1.0) {
                return Err(PotentialError::TooCloseToSurface {
                    point: [x.x, x.y, x.z],
                    dist,
                });
            }
            // Give up subdividing; the panel is already tiny relative to the
            // original triangle, its contribution is O(diam^2).
        } else {
            let m01 = Point3::from((vertices[0].coords + vertices[1].coords) / 2.0);
            let m12 = Point3::from((vertices[1].coords + vertices[2].coords) / 2.0);
            let m20 = Point3::from((vertices[2].coords + vertices[0].coords) / 2.0);
            let v01 = 0.5 * (values[0] + values[1]);
            let v12 = 0.5 * (values[1] + values[2]);
            let v20 = 0.5 * (values[2] + values[0]);
            let mut total = 0.0;
            for (sub_v, sub_f) in [
                ([vertices[0], m01, m20], [values[0], v01, v20]),
                ([vertices[1], m12, m01], [values[1], v12, v01]),
                ([vertices[2], m20, m12], [values[2], v20, v12]),
                ([m01, m12, m20], [v01, v12, v20]),
            ] {
                total +=
                    panel_integral(&sub_v, &sub_f, x, normal, double_layer, rule, depth - 1)?;
            }
            return Ok(total);
        }
    }
    let mut sum = 0.0;
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let y = Point3::from(
            vertices[0].coords * p[0] + vertices[1].coords * p[1] + vertices[2].coords * p[2],
        );
        let density = values[0] * p[0] + values[1] * p[1] + values[2] * p[2];
        let kernel = if double_layer {
            double_layer_kernel(x, &y, normal)
        } else {
            single_layer_kernel(x, &y)
        };
        sum += w * density * kernel;
    }
    Ok(sum * chart.area)
}

/// U sigma at a point off the surface.
pub fn eval_single_layer(
    mesh: &SurfaceMesh,
    sigma: &DensityP0,
    x: &Point3,
    quad_order: usize,
) -> Result<f64, PotentialError> {
    if sigma.len() != mesh.n_triangles() {
        return Err(PotentialError::DimensionMismatch {
            got: sigma.len(),
            expected: mesh.n_triangles(),
        });
    }
    check_off_surface(mesh, x)?;
    let rule = crate::quadrature::gauss_triangle_rule(quad_order)?;
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let c = sigma.coefficients[t];
        if c == 0.0 {
            continue;
        }
        let vertices = mesh.triangle_vertices(t);
        total += panel_integral(
            &vertices,
            &[c, c, c],
            x,
            &mesh.normal(t),
            false,
            &rule,
            EVAL_MAX_DEPTH,
        )?;
    }
    Ok(total)
}

/// W q at a point off the surface.
pub fn eval_double_layer(
    mesh: &SurfaceMesh,
    q: &DensityP1,
    x: &Point3,
    quad_order: usize,
) -> Result<f64, PotentialError> {
    if q.len() != mesh.n_vertices() {
        return Err(PotentialError::DimensionMismatch {
            got: q.len(),
            expected: mesh.n_vertices(),
        });
    }
    check_off_surface(mesh, x)?;
    let rule = crate::quadrature::gauss_triangle_rule(quad_order)?;
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let values = [
            q.coefficients[tri[0]],
            q.coefficients[tri[1]],
            q.coefficients[tri[2]],
        ];
        if values == [0.0; 3] {
            continue;
        }
        let vertices = mesh.triangle_vertices(t);
        total += panel_integral(
            &vertices,
            &values,
            x,
            &mesh.normal(t),
            true,
            &rule,
            EVAL_MAX_DEPTH,
        )?;
    }
    Ok(total)
}

/// Classifies a point by generalized winding number.
pub fn classify_side(mesh: &SurfaceMesh, x: &Point3) -> Result<Side, PotentialError> {
    let w = mesh.winding_number(x);
    if (w - 1.0).abs() <= 0.1 {
        Ok(Side::Interior)
    } else if w.abs() <= 0.1 {
        Ok(Side::Exterior)
    } else {
        Err(PotentialError::AmbiguousSide {
            point: [x.x, x.y, x.z],
            winding: w,
        })
    }
}

/// w(x) = U sigma(x) + W q(x) at each point, with side labels.
pub fn eval_representation(
    mesh: &SurfaceMesh,
    sigma: &DensityP0,
    q: &DensityP1,
    points: &[Point3],
    quad_order: usize,
) -> Result<Vec<FieldSample>, PotentialError> {
    points
        .iter()
        .map(|x| {
            let side = classify_side(mesh, x)?;
            let value = eval_single_layer(mesh, sigma, x, quad_order)?
                + eval_double_layer(mesh, q, x, quad_order)?;
            Ok(FieldSample {
                point: [x.x, x.y, x.z],
                side,
                value,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Binary cache

const CACHE_MAGIC: &[u8; 8] = b"BEMLOPS\x01";

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(m.nrows() as u64)?;
    w.write_u64::<LittleEndian>(m.ncols() as u64)?;
    for v in m.as_slice() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>, PotentialError> {
    let rows = r.read_u64::<LittleEndian>()? as usize;
    let cols = r.read_u64::<LittleEndian>()? as usize;
    let mut data = vec![0.0; rows * cols];
    for v in &mut data {
        *v = r.read_f64::<LittleEndian>()?;
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}

impl OperatorSet {
    /// Writes V, K, T keyed by mesh fingerprint and quadrature config.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), PotentialError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&self.fingerprint())?;
        w.write_u64::<LittleEndian>(self.quad.disjoint_order as u64)?;
        w.write_u64::<LittleEndian>(self.quad.singular_order as u64)?;
        w.write_u64::<LittleEndian>(self.quad.near_order as u64)?;
        w.write_f64::<LittleEndian>(self.quad.near_ratio)?;
        write_matrix(&mut w, &self.v)?;
        write_matrix(&mut w, &self.k)?;
        write_matrix(&mut w, &self.t)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a cached set; fails if the file was built for a different mesh
    /// or quadrature configuration.
    pub fn load<P: AsRef<Path>>(
        path: P,
        mesh: Arc<SurfaceMesh>,
        quad: QuadConfig,
    ) -> Result<Self, PotentialError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(PotentialError::CacheMismatch(
                "unrecognized file format/version".into(),
            ));
        }
        let mut fp = [0u8; 32];
        r.read_exact(&mut fp)?;
        if fp != mesh.fingerprint() {
            return Err(PotentialError::CacheMismatch(
                "mesh fingerprint differs".into(),
            ));
        }
        let stored = QuadConfig {
            disjoint_order: r.read_u64::<LittleEndian>()? as usize,
            singular_order: r.read_u64::<LittleEndian>()? as usize,
            near_order: r.read_u64::<LittleEndian>()? as usize,
            near_ratio: r.read_f64::<LittleEndian>()?,
        };
        if stored != quad {
            return Err(PotentialError::CacheMismatch(
                "quadrature configuration differs".into(),
            ));
        }
        let v = read_matrix(&mut r)?;
        let k = read_matrix(&mut r)?;
        let t = read_matrix(&mut r)?;
        let nt = mesh.n_triangles();
        let nv = mesh.n_vertices();
        if v.shape() != (nt, nt) || k.shape() != (nt, nv) || t.shape() != (nv, nv) {
            return Err(PotentialError::CacheMismatch("matrix shapes differ".into()));
        }
        let mass = mass_matrices(&mesh);
        Ok(OperatorSet {
            v,
            k,
            t,
            mass,
            mesh,
            quad,
        })
    }
}
