//! Configuration, orchestration, and export behind the `bemlap` binary.
//!
//! Problems are described by a JSON config: a mesh source, a problem kind,
//! boundary data (analytic preset or raw coefficient arrays), and optional
//! quadrature/tolerance/output settings. Outputs are JSON (densities, traces,
//! solve report), CSV (convergence tables), and legacy ASCII VTK
//! structured-points files (field on a grid with a side mask).
//!
//! Exit-code contract of the binary: 0 success, 1 usage/schema errors,
//! 2 numerical or compatibility failures.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::boundary_map::{apply_dtn, apply_ntd};
use crate::bspaces::{interpolate_p1, DensityP0, DensityP1};
use crate::bvp::{
    solve_dirichlet, solve_mixed_int_d_ext_n, solve_mixed_int_n_ext_d, solve_neumann,
    BvpError, BvpOptions, ProblemKind, Solution,
};
use crate::mesh::{
    load_mesh, make_cube, make_icosphere, MeshFormat, Point3, SurfaceMesh, Vec3,
};
use crate::oracle::point_source_field;
use crate::potential_ops::{OperatorSet, QuadConfig, Side};
use crate::quadrature::gauss_triangle_rule;

/// Point source locations of the `point_source` preset: the interior field
/// comes from the exterior source and vice versa.
pub const POINT_SOURCE_EXTERIOR: [f64; 3] = [0.0, 0.0, 2.0];
pub const POINT_SOURCE_INTERIOR: [f64; 3] = [0.0, 0.0, 0.3];

#[derive(Debug)]
pub enum CliError {
    /// Configuration or usage problem; binary exit code 1.
    Schema(String),
    /// Numerical or compatibility failure during a run; binary exit code 2.
    Run { code: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 1,
            CliError::Run { .. } => 2,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            CliError::Schema(_) => "schema_error",
            CliError::Run { code, .. } => code,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let message = match self {
            CliError::Schema(m) => m.clone(),
            CliError::Run { message, .. } => message.clone(),
        };
        json!({ "error": { "code": self.code(), "message": message } })
    }
}

impl From<BvpError> for CliError {
    fn from(e: BvpError) -> Self {
        match e {
            BvpError::IncompatibleNeumannData { .. } => CliError::Run {
                code: "incompatible_neumann_data",
                message: e.to_string(),
            },
            BvpError::DimensionMismatch { .. } => CliError::Schema(e.to_string()),
            BvpError::Solver(_) => CliError::Run {
                code: "solver_failure",
                message: e.to_string(),
            },
            BvpError::Potential(_) => CliError::Run {
                code: "operator_failure",
                message: e.to_string(),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Icosphere {
        level: u32,
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Cube {
        side: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Uniform shell: constant boundary values 1, field 1 inside and 1/r
    /// outside.
    Shell,
    /// Two-source transmission field: interior field of an exterior unit
    /// source and exterior field of an interior one.
    PointSource,
    /// Degree-1 harmonic pair w_i = z, w_e = z/r^3.
    Y1,
    /// Neumann data with nonzero total interior flux; must be rejected.
    Incompatible,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum BoundaryData {
    Preset { preset: Preset },
    Explicit { interior: Vec<f64>, exterior: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VtkGrid {
    pub path: PathBuf,
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Where to write the solution JSON; stdout when absent.
    pub solution: Option<PathBuf>,
    /// Optional structured-points field export.
    pub vtk: Option<VtkGrid>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mesh: MeshSpec,
    pub problem: ProblemKind,
    pub data: BoundaryData,
    #[serde(default)]
    pub quadrature: QuadConfig,
    #[serde(default)]
    pub tolerances: BvpOptions,
    #[serde(default)]
    pub output: OutputSpec,
}

pub fn load_config(path: &std::path::Path) -> Result<ProblemConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("invalid config: {e}")))
}

pub fn build_mesh(spec: &MeshSpec) -> Result<SurfaceMesh, CliError> {
    match spec {
        MeshSpec::Icosphere { level, radius } => make_icosphere(*level, *radius)
            .map_err(|e| CliError::Schema(format!("icosphere spec: {e}"))),
        MeshSpec::Cube { side } => {
            make_cube(*side).map_err(|e| CliError::Schema(format!("cube spec: {e}")))
        }
        MeshSpec::File { path } => {
            let format = match path.extension().and_then(|e| e.to_str()) {
                Some("off") | Some("OFF") => MeshFormat::Off,
                Some("obj") | Some("OBJ") => MeshFormat::Obj,
                other => {
                    return Err(CliError::Schema(format!(
                        "unsupported mesh extension {other:?} (expected .off or .obj)"
                    )))
                }
            };
            load_mesh(path, format)
                .map_err(|e| CliError::Schema(format!("mesh {}: {e}", path.display())))
        }
    }
}

/// Area-averaged P0 projection of a function of position and outward normal.
fn project_p0_with_normal(
    mesh: &SurfaceMesh,
    g: impl Fn(&Point3, &Vec3) -> f64,
) -> DensityP0 {
    let rule = gauss_triangle_rule(4).expect("order 4 is supported");
    let mut coefficients = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle_vertices(t);
        let n = mesh.normal(t);
        let avg = rule.integrate_physical(1.0, |bary| {
            let p = Point3::from(
                a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2],
            );
            g(&p, &n)
        });
        coefficients.push(avg);
    }
    DensityP0::new(coefficients)
}

/// Outward conormal trace of the unit point source at `x0`.
fn point_source_conormal(x0: &Point3, x: &Point3, n: &Vec3) -> f64 {
    let d = x - x0;
    let r = d.norm();
    -d.dot(n) / (4.0 * std::f64::consts::PI * r * r * r)
}

fn preset_dirichlet_pair(
    preset: Preset,
    mesh: &SurfaceMesh,
) -> Result<(DensityP1, DensityP1), CliError> {
    let x0e = Point3::new(
        POINT_SOURCE_EXTERIOR[0],
        POINT_SOURCE_EXTERIOR[1],
        POINT_SOURCE_EXTERIOR[2],
    );
    let x0i = Point3::new(
        POINT_SOURCE_INTERIOR[0],
        POINT_SOURCE_INTERIOR[1],
        POINT_SOURCE_INTERIOR[2],
    );
    let interp = |f: &dyn Fn(&Point3) -> f64| {
        interpolate_p1(mesh, f).map_err(|e| CliError::Schema(e.to_string()))
    };
    match preset {
        Preset::Shell => Ok((interp(&|_| 1.0)?, interp(&|_| 1.0)?)),
        Preset::PointSource => Ok((
            interp(&|p| point_source_field(&x0e, p))?,
            interp(&|p| point_source_field(&x0i, p))?,
        )),
        Preset::Y1 => Ok((interp(&|p| p.z)?, interp(&|p| p.z)?)),
        Preset::Incompatible => Err(CliError::Schema(
            "preset 'incompatible' provides Neumann data only".into(),
        )),
    }
}

fn preset_neumann_pair(
    preset: Preset,
    mesh: &SurfaceMesh,
) -> Result<(DensityP0, DensityP0), CliError> {
    let x0e = Point3::new(
        POINT_SOURCE_EXTERIOR[0],
        POINT_SOURCE_EXTERIOR[1],
        POINT_SOURCE_EXTERIOR[2],
    );
    let x0i = Point3::new(
        POINT_SOURCE_INTERIOR[0],
        POINT_SOURCE_INTERIOR[1],
        POINT_SOURCE_INTERIOR[2],
    );
    match preset {
        Preset::Shell => Ok((
            DensityP0::zeros(mesh),
            DensityP0::new(vec![-1.0; mesh.n_triangles()]),
        )),
        Preset::PointSource => Ok((
            project_p0_with_normal(mesh, |p, n| point_source_conormal(&x0e, p, n)),
            project_p0_with_normal(mesh, |p, n| point_source_conormal(&x0i, p, n)),
        )),
        Preset::Y1 => Ok((
            project_p0_with_normal(mesh, |p, _| p.z),
            project_p0_with_normal(mesh, |p, _| -2.0 * p.z),
        )),
        Preset::Incompatible => Ok((
            DensityP0::new(vec![1.0; mesh.n_triangles()]),
            DensityP0::zeros(mesh),
        )),
    }
}

fn explicit_p1(mesh: &SurfaceMesh, v: &[f64], side: &str) -> Result<DensityP1, CliError> {
    if v.len() != mesh.n_vertices() {
        return Err(CliError::Schema(format!(
            "{side} data has {} coefficients but the problem kind expects vertex (P1) data \
             of length {}",
            v.len(),
            mesh.n_vertices()
        )));
    }
    Ok(DensityP1::new(v.to_vec()))
}

fn explicit_p0(mesh: &SurfaceMesh, v: &[f64], side: &str) -> Result<DensityP0, CliError> {
    if v.len() != mesh.n_triangles() {
        return Err(CliError::Schema(format!(
            "{side} data has {} coefficients but the problem kind expects triangle (P0) data \
             of length {}",
            v.len(),
            mesh.n_triangles()
        )));
    }
    Ok(DensityP0::new(v.to_vec()))
}

/// Boundary data resolved against a mesh, typed per problem kind.
#[derive(Debug)]
pub enum ProblemData {
    Dirichlet(DensityP1, DensityP1),
    Neumann(DensityP0, DensityP0),
    MixedIntDExtN(DensityP1, DensityP0),
    MixedIntNExtD(DensityP0, DensityP1),
}

pub fn resolve_data(
    problem: ProblemKind,
    data: &BoundaryData,
    mesh: &SurfaceMesh,
) -> Result<ProblemData, CliError> {
    match (problem, data) {
        (ProblemKind::Dirichlet, BoundaryData::Preset { preset }) => {
            let (f_i, f_e) = preset_dirichlet_pair(*preset, mesh)?;
            Ok(ProblemData::Dirichlet(f_i, f_e))
        }
        (ProblemKind::Neumann, BoundaryData::Preset { preset }) => {
            let (g_i, g_e) = preset_neumann_pair(*preset, mesh)?;
            Ok(ProblemData::Neumann(g_i, g_e))
        }
        (ProblemKind::MixedIntDExtN, BoundaryData::Preset { preset }) => {
            let (f_i, _) = preset_dirichlet_pair(*preset, mesh)?;
            let (_, g_e) = preset_neumann_pair(*preset, mesh)?;
            Ok(ProblemData::MixedIntDExtN(f_i, g_e))
        }
        (ProblemKind::MixedIntNExtD, BoundaryData::Preset { preset }) => {
            let (g_i, _) = preset_neumann_pair(*preset, mesh)?;
            let (_, f_e) = preset_dirichlet_pair(*preset, mesh)?;
            Ok(ProblemData::MixedIntNExtD(g_i, f_e))
        }
        (ProblemKind::Dirichlet, BoundaryData::Explicit { interior, exterior }) => Ok(
            ProblemData::Dirichlet(
                explicit_p1(mesh, interior, "interior")?,
                explicit_p1(mesh, exterior, "exterior")?,
            ),
        ),
        (ProblemKind::Neumann, BoundaryData::Explicit { interior, exterior }) => Ok(
            ProblemData::Neumann(
                explicit_p0(mesh, interior, "interior")?,
                explicit_p0(mesh, exterior, "exterior")?,
            ),
        ),
        (ProblemKind::MixedIntDExtN, BoundaryData::Explicit { interior, exterior }) => Ok(
            ProblemData::MixedIntDExtN(
                explicit_p1(mesh, interior, "interior")?,
                explicit_p0(mesh, exterior, "exterior")?,
            ),
        ),
        (ProblemKind::MixedIntNExtD, BoundaryData::Explicit { interior, exterior }) => Ok(
            ProblemData::MixedIntNExtD(
                explicit_p0(mesh, interior, "interior")?,
                explicit_p1(mesh, exterior, "exterior")?,
            ),
        ),
    }
}

fn assemble_ops(mesh: SurfaceMesh, quad: QuadConfig) -> Result<OperatorSet, CliError> {
    OperatorSet::assemble(Arc::new(mesh), quad).map_err(|e| CliError::Run {
        code: "operator_failure",
        message: e.to_string(),
    })
}

fn dispatch(
    ops: &OperatorSet,
    data: &ProblemData,
    opts: &BvpOptions,
) -> Result<Solution, CliError> {
    let sol = match data {
        ProblemData::Dirichlet(f_i, f_e) => solve_dirichlet(ops, f_i, f_e, opts)?,
        ProblemData::Neumann(g_i, g_e) => solve_neumann(ops, g_i, g_e, opts)?,
        ProblemData::MixedIntDExtN(f_i, g_e) => solve_mixed_int_d_ext_n(ops, f_i, g_e, opts)?,
        ProblemData::MixedIntNExtD(g_i, f_e) => solve_mixed_int_n_ext_d(ops, g_i, f_e, opts)?,
    };
    Ok(sol)
}

fn solution_json(sol: &Solution) -> serde_json::Value {
    json!({
        "problem": sol.kind,
        "mesh": {
            "n_vertices": sol.mesh.n_vertices(),
            "n_triangles": sol.mesh.n_triangles(),
            "h": sol.mesh.h(),
        },
        "sigma": sol.sigma.coefficients,
        "q": sol.q.coefficients,
        "gauge": sol.gauge,
        "report": sol.report,
        "compatibility_defect": sol.compatibility_defect,
        "traces": {
            "f_i": sol.traces.dirichlet.0.coefficients,
            "f_e": sol.traces.dirichlet.1.coefficients,
            "g_i": sol.traces.neumann.0.coefficients,
            "g_e": sol.traces.neumann.1.coefficients,
        },
    })
}

fn write_text(path: &std::path::Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Run {
        code: "io_error",
        message: format!("cannot write {}: {e}", path.display()),
    })
}

/// Evaluates the solution on a structured grid. Points where evaluation is
/// refused (on or ambiguously close to the surface) get mask 0 and value 0;
/// interior points mask 1, exterior mask 2.
pub fn evaluate_grid(sol: &Solution, grid: &VtkGrid, quad_order: usize) -> (Vec<f64>, Vec<i32>) {
    let n = grid.dims[0] * grid.dims[1] * grid.dims[2];
    let mut values = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    // VTK structured points order: x varies fastest, then y, then z.
    for kz in 0..grid.dims[2] {
        for ky in 0..grid.dims[1] {
            for kx in 0..grid.dims[0] {
                let p = Point3::new(
                    grid.origin[0] + grid.spacing[0] * kx as f64,
                    grid.origin[1] + grid.spacing[1] * ky as f64,
                    grid.origin[2] + grid.spacing[2] * kz as f64,
                );
                match sol.evaluate(std::slice::from_ref(&p), quad_order) {
                    Ok(samples) => {
                        values.push(samples[0].value);
                        mask.push(match samples[0].side {
                            Side::Interior => 1,
                            Side::Exterior => 2,
                        });
                    }
                    Err(_) => {
                        values.push(0.0);
                        mask.push(0);
                    }
                }
            }
        }
    }
    (values, mask)
}

/// Writes a legacy ASCII VTK structured-points file with the scalar field and
/// its side mask.
pub fn export_vtk(grid: &VtkGrid, values: &[f64], mask: &[i32]) -> Result<(), CliError> {
    let n = grid.dims[0] * grid.dims[1] * grid.dims[2];
    assert_eq!(values.len(), n);
    assert_eq!(mask.len(), n);
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("bemlap field export\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET STRUCTURED_POINTS\n");
    out.push_str(&format!(
        "DIMENSIONS {} {} {}\n",
        grid.dims[0], grid.dims[1], grid.dims[2]
    ));
    out.push_str(&format!(
        "ORIGIN {:.16e} {:.16e} {:.16e}\n",
        grid.origin[0], grid.origin[1], grid.origin[2]
    ));
    out.push_str(&format!(
        "SPACING {:.16e} {:.16e} {:.16e}\n",
        grid.spacing[0], grid.spacing[1], grid.spacing[2]
    ));
    out.push_str(&format!("POINT_DATA {n}\n"));
    out.push_str("SCALARS value double 1\n");
    out.push_str("LOOKUP_TABLE default\n");
    for v in values {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out.push_str("SCALARS side int 1\n");
    out.push_str("LOOKUP_TABLE default\n");
    for m in mask {
        out.push_str(&format!("{m}\n"));
    }
    write_text(&grid.path, &out)
}

/// Full `solve` pipeline; returns the solution JSON (also written to the
/// configured output path, if any).
pub fn run_solve(config: &ProblemConfig) -> Result<serde_json::Value, CliError> {
    let mesh = build_mesh(&config.mesh)?;
    let data = resolve_data(config.problem, &config.data, &mesh)?;
    let ops = assemble_ops(mesh, config.quadrature)?;
    let sol = dispatch(&ops, &data, &config.tolerances)?;
    let out = solution_json(&sol);
    if let Some(path) = &config.output.solution {
        write_text(path, &format!("{:#}\n", out))?;
    }
    if let Some(grid) = &config.output.vtk {
        let (values, mask) = evaluate_grid(&sol, grid, config.quadrature.disjoint_order);
        export_vtk(grid, &values, &mask)?;
    }
    Ok(out)
}

/// Dirichlet-to-Neumann map on the configured data (read as a Dirichlet
/// pair, whatever `problem` says).
pub fn run_dtn(config: &ProblemConfig) -> Result<serde_json::Value, CliError> {
    let mesh = build_mesh(&config.mesh)?;
    let (f_i, f_e) = match &config.data {
        BoundaryData::Preset { preset } => preset_dirichlet_pair(*preset, &mesh)?,
        BoundaryData::Explicit { interior, exterior } => (
            explicit_p1(&mesh, interior, "interior")?,
            explicit_p1(&mesh, exterior, "exterior")?,
        ),
    };
    let ops = assemble_ops(mesh, config.quadrature)?;
    let out = apply_dtn(&ops, &f_i, &f_e, &config.tolerances)?;
    let out = json!({
        "g_i": out.g_i.coefficients,
        "g_e": out.g_e.coefficients,
        "report": out.report,
    });
    if let Some(path) = &config.output.solution {
        write_text(path, &format!("{:#}\n", out))?;
    }
    Ok(out)
}

/// Neumann-to-Dirichlet map on the configured data (read as a Neumann pair).
pub fn run_ntd(config: &ProblemConfig) -> Result<serde_json::Value, CliError> {
    let mesh = build_mesh(&config.mesh)?;
    let (g_i, g_e) = match &config.data {
        BoundaryData::Preset { preset } => preset_neumann_pair(*preset, &mesh)?,
        BoundaryData::Explicit { interior, exterior } => (
            explicit_p0(&mesh, interior, "interior")?,
            explicit_p0(&mesh, exterior, "exterior")?,
        ),
    };
    let ops = assemble_ops(mesh, config.quadrature)?;
    let out = apply_ntd(&ops, &g_i, &g_e, &config.tolerances)?;
    let out = json!({
        "f_i": out.f_i.coefficients,
        "f_e": out.f_e.coefficients,
        "gauge": out.gauge,
        "mean_g_i": out.mean_g_i,
        "mean_g_e": out.mean_g_e,
        "compatibility_defect": out.compatibility_defect,
        "report": out.report,
    });
    if let Some(path) = &config.output.solution {
        write_text(path, &format!("{:#}\n", out))?;
    }
    Ok(out)
}

/// Exact reference solution of an oracle-backed preset on the unit sphere.
struct ExactSolution {
    sigma: Box<dyn Fn(&Point3, &Vec3) -> f64>,
    q: Box<dyn Fn(&Point3) -> f64>,
    interior: Box<dyn Fn(&Point3) -> f64>,
    exterior: Box<dyn Fn(&Point3) -> f64>,
}

fn exact_solution(preset: Preset) -> Result<ExactSolution, CliError> {
    let x0e = Point3::new(
        POINT_SOURCE_EXTERIOR[0],
        POINT_SOURCE_EXTERIOR[1],
        POINT_SOURCE_EXTERIOR[2],
    );
    let x0i = Point3::new(
        POINT_SOURCE_INTERIOR[0],
        POINT_SOURCE_INTERIOR[1],
        POINT_SOURCE_INTERIOR[2],
    );
    match preset {
        Preset::Shell => Ok(ExactSolution {
            sigma: Box::new(|_, _| 1.0),
            q: Box::new(|_| 0.0),
            interior: Box::new(|_| 1.0),
            exterior: Box::new(|p| 1.0 / p.coords.norm()),
        }),
        Preset::PointSource => Ok(ExactSolution {
            sigma: Box::new(move |p, n| {
                point_source_conormal(&x0e, p, n) - point_source_conormal(&x0i, p, n)
            }),
            q: Box::new(move |p| point_source_field(&x0e, p) - point_source_field(&x0i, p)),
            interior: Box::new(move |p| point_source_field(&x0e, p)),
            exterior: Box::new(move |p| point_source_field(&x0i, p)),
        }),
        Preset::Y1 => Ok(ExactSolution {
            sigma: Box::new(|p, _| 3.0 * p.z),
            q: Box::new(|_| 0.0),
            interior: Box::new(|p| p.z),
            exterior: Box::new(|p| {
                let r = p.coords.norm();
                p.z / (r * r * r)
            }),
        }),
        Preset::Incompatible => Err(CliError::Schema(
            "preset 'incompatible' has no exact solution".into(),
        )),
    }
}

/// Fixed probe points for convergence error measurement: spherical Fibonacci
/// directions at an interior and an exterior radius.
fn probe_points() -> Vec<Point3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let mut probes = Vec::new();
    for (count, radius) in [(12usize, 0.5), (12usize, 1.8)] {
        for k in 0..count {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            probes.push(Point3::new(
                radius * rho * phi.cos(),
                radius * rho * phi.sin(),
                radius * z,
            ));
        }
    }
    probes
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    pub dof: usize,
    pub err_sigma: f64,
    pub err_q: f64,
    pub err_field: f64,
    pub observed_order: Option<f64>,
}

fn relative_l2_p0(
    mesh: &SurfaceMesh,
    got: &DensityP0,
    exact: impl Fn(&Point3, &Vec3) -> f64,
) -> f64 {
    let rule = gauss_triangle_rule(4).expect("order 4 is supported");
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle_vertices(t);
        let n = mesh.normal(t);
        let v = got.coefficients[t];
        num += rule.integrate_physical(mesh.area(t), |bary| {
            let p = Point3::from(
                a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2],
            );
            let e = v - exact(&p, &n);
            e * e
        });
        den += rule.integrate_physical(mesh.area(t), |bary| {
            let p = Point3::from(
                a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2],
            );
            let e = exact(&p, &n);
            e * e
        });
    }
    if den <= 1e-28 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn relative_l2_p1(mesh: &SurfaceMesh, got: &DensityP1, shift: f64, exact: impl Fn(&Point3) -> f64) -> f64 {
    let rule = gauss_triangle_rule(4).expect("order 4 is supported");
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle_vertices(t);
        num += rule.integrate_physical(mesh.area(t), |bary| {
            let p = Point3::from(
                a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2],
            );
            let e = got.eval_on_triangle(mesh, t, bary) + shift - exact(&p);
            e * e
        });
        den += rule.integrate_physical(mesh.area(t), |bary| {
            let p = Point3::from(
                a.coords * bary[0] + b.coords * bary[1] + c.coords * bary[2],
            );
            let e = exact(&p);
            e * e
        });
    }
    if den <= 1e-28 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Runs the configured preset problem on a range of icosphere levels and
/// tabulates errors against the exact solution. `observed_order` is the
/// base-2 log of consecutive field-error ratios.
pub fn run_convergence(
    config: &ProblemConfig,
    min_level: u32,
    max_level: u32,
) -> Result<Vec<ConvergenceRow>, CliError> {
    let radius = match &config.mesh {
        MeshSpec::Icosphere { radius, .. } => *radius,
        _ => {
            return Err(CliError::Schema(
                "convergence studies require an icosphere mesh spec".into(),
            ))
        }
    };
    let preset = match &config.data {
        BoundaryData::Preset { preset } => *preset,
        BoundaryData::Explicit { .. } => {
            return Err(CliError::Schema(
                "convergence studies require an analytic preset (errors must be computable)"
                    .into(),
            ))
        }
    };
    if min_level > max_level {
        return Err(CliError::Schema(format!(
            "empty level range {min_level}..={max_level}"
        )));
    }
    let exact = exact_solution(preset)?;
    let probes = probe_points();
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for level in min_level..=max_level {
        let mesh = make_icosphere(level, radius)
            .map_err(|e| CliError::Schema(format!("icosphere level {level}: {e}")))?;
        let data = resolve_data(config.problem, &config.data, &mesh)?;
        let ops = assemble_ops(mesh, config.quadrature)?;
        let sol = dispatch(&ops, &data, &config.tolerances)?;
        let err_sigma = relative_l2_p0(&ops.mesh, &sol.sigma, &exact.sigma);
        let err_q = relative_l2_p1(&ops.mesh, &sol.q, sol.gauge.mean_value, &exact.q);
        let samples = sol
            .evaluate(&probes, config.quadrature.disjoint_order)
            .map_err(|e| CliError::Run {
                code: "evaluation_failure",
                message: e.to_string(),
            })?;
        let mut num = 0.0;
        let mut den = 0.0;
        for s in &samples {
            let p = Point3::new(s.point[0], s.point[1], s.point[2]);
            let reference = match s.side {
                Side::Interior => (exact.interior)(&p),
                Side::Exterior => (exact.exterior)(&p),
            };
            num += (s.value - reference) * (s.value - reference);
            den += reference * reference;
        }
        let err_field = if den <= 1e-28 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        };
        let observed_order = rows
            .last()
            .filter(|prev| prev.err_field > 0.0 && err_field > 0.0)
            .map(|prev| (prev.err_field / err_field).log2());
        rows.push(ConvergenceRow {
            level,
            h: ops.mesh.h(),
            dof: ops.n_triangles() + ops.n_vertices(),
            err_sigma,
            err_q,
            err_field,
            observed_order,
        });
    }
    Ok(rows)
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("level,h,dof,err_sigma,err_q,err_field,observed_order\n");
    for r in rows {
        let order = r
            .observed_order
            .map(|o| format!("{o:.16e}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{}\n",
            r.level, r.h, r.dof, r.err_sigma, r.err_q, r.err_field, order
        ));
    }
    out
}

pub fn run_mesh_info(spec: &MeshSpec) -> Result<serde_json::Value, CliError> {
    let mesh = build_mesh(spec)?;
    let stats = mesh.stats();
    let fingerprint: String = mesh
        .fingerprint()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(json!({
        "n_vertices": stats.n_vertices,
        "n_triangles": stats.n_triangles,
        "h": stats.h,
        "total_area": stats.total_area,
        "signed_volume": stats.signed_volume,
        "fingerprint": fingerprint,
    }))
}

/// Applies `--quad-order` / `--tol` command-line overrides to a config.
pub fn apply_overrides(
    config: &mut ProblemConfig,
    quad_order: Option<usize>,
    tol: Option<f64>,
) -> Result<(), CliError> {
    if let Some(k) = quad_order {
        if !(1..=8).contains(&k) {
            return Err(CliError::Schema(format!(
                "--quad-order {k} out of range 1..=8"
            )));
        }
        config.quadrature.disjoint_order = k;
        config.quadrature.singular_order = (k + 2).min(10);
        config.quadrature.near_order = (k + 2).min(10);
    }
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(CliError::Schema(format!("--tol {t} must be positive")));
        }
        config.tolerances.tol = t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn shell_config(level: u32, problem: &str) -> ProblemConfig {
        serde_json::from_str(&format!(
            r#"{{
                "mesh": {{"kind": "icosphere", "level": {level}}},
                "problem": "{problem}",
                "data": {{"preset": "shell"}}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let bad = r#"{
            "mesh": {"kind": "icosphere", "level": 1},
            "problem": "dirichlet",
            "data": {"preset": "shell"},
            "extra": 1
        }"#;
        assert!(serde_json::from_str::<ProblemConfig>(bad).is_err());
    }

    #[test]
    fn explicit_data_length_checked() {
        let mesh = make_icosphere(0, 1.0).unwrap();
        let data = BoundaryData::Explicit {
            interior: vec![0.0; mesh.n_triangles()],
            exterior: vec![0.0; mesh.n_triangles()],
        };
        // P0-sized data for a Dirichlet (P1) problem is a schema error.
        let err = resolve_data(ProblemKind::Dirichlet, &data, &mesh).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn shell_solve_end_to_end() {
        let config = shell_config(1, "dirichlet");
        let out = run_solve(&config).unwrap();
        let g_e: Vec<f64> = serde_json::from_value(out["traces"]["g_e"].clone()).unwrap();
        let mean = g_e.iter().sum::<f64>() / g_e.len() as f64;
        assert!((mean + 1.0).abs() <= 0.1, "mean g_e = {mean}");
    }

    #[test]
    fn incompatible_preset_fails_with_code() {
        let config = shell_config(1, "neumann");
        let config = ProblemConfig {
            data: BoundaryData::Preset {
                preset: Preset::Incompatible,
            },
            ..config
        };
        let err = run_solve(&config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(err.code(), "incompatible_neumann_data");
    }

    #[test]
    fn vtk_round_trip_of_zeros() {
        let dir = tempdir().unwrap();
        let grid = VtkGrid {
            path: dir.path().join("zeros.vtk"),
            origin: [0.0; 3],
            spacing: [1.0; 3],
            dims: [2, 2, 2],
        };
        export_vtk(&grid, &[0.0; 8], &[1; 8]).unwrap();
        let text = std::fs::read_to_string(&grid.path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("DIMENSIONS 2 2 2"));
        assert!(text.contains("POINT_DATA 8"));
        let values: Vec<f64> = text
            .lines()
            .skip_while(|l| !l.starts_with("LOOKUP_TABLE"))
            .skip(1)
            .take_while(|l| !l.starts_with("SCALARS"))
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(values, vec![0.0; 8]);
    }

    #[test]
    fn shell_field_along_z_axis() {
        let config = shell_config(2, "dirichlet");
        let mesh = build_mesh(&config.mesh).unwrap();
        let data = resolve_data(config.problem, &config.data, &mesh).unwrap();
        let ops = assemble_ops(mesh, config.quadrature).unwrap();
        let sol = dispatch(&ops, &data, &config.tolerances).unwrap();
        let grid = VtkGrid {
            path: PathBuf::new(),
            origin: [0.0, 0.0, 0.3],
            spacing: [0.0, 0.0, 0.6],
            dims: [1, 1, 4],
        };
        // z = 0.3, 0.9 inside (value 1), z = 1.5, 2.1 outside (value 1/z).
        let (values, mask) = evaluate_grid(&sol, &grid, 4);
        assert_eq!(mask, vec![1, 1, 2, 2]);
        for (v, expected) in values.iter().zip([1.0, 1.0, 1.0 / 1.5, 1.0 / 2.1]) {
            assert!(
                (v - expected).abs() <= 0.02 * expected.abs(),
                "got {v}, expected {expected}"
            );
        }
    }

    #[test]
    fn on_surface_grid_point_masked() {
        let config = shell_config(1, "dirichlet");
        let mesh = build_mesh(&config.mesh).unwrap();
        let v0 = mesh.vertices()[0];
        let data = resolve_data(config.problem, &config.data, &mesh).unwrap();
        let ops = assemble_ops(mesh, config.quadrature).unwrap();
        let sol = dispatch(&ops, &data, &config.tolerances).unwrap();
        let grid = VtkGrid {
            path: PathBuf::new(),
            origin: [v0.x, v0.y, v0.z],
            spacing: [1.0; 3],
            dims: [1, 1, 1],
        };
        let (values, mask) = evaluate_grid(&sol, &grid, 4);
        assert_eq!(mask, vec![0]);
        assert_eq!(values, vec![0.0]);
    }

    #[test]
    fn convergence_single_level_has_empty_order() {
        let config = shell_config(1, "dirichlet");
        let rows = run_convergence(&config, 1, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].observed_order.is_none());
        let csv = convergence_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "level,h,dof,err_sigma,err_q,err_field,observed_order"
        );
        assert!(lines.next().unwrap().ends_with(','));
    }

    #[test]
    fn convergence_shell_improves() {
        let config = shell_config(0, "dirichlet");
        let rows = run_convergence(&config, 0, 2).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].err_field < rows[0].err_field);
        assert!(rows[2].err_field < rows[1].err_field);
        assert!(rows[2].observed_order.unwrap() >= 1.0);
    }

    #[test]
    fn dtn_and_ntd_runs() {
        let mut config = shell_config(1, "dirichlet");
        config.tolerances.compat_tol = 1e-4;
        let dtn = run_dtn(&config).unwrap();
        let g_e: Vec<f64> = serde_json::from_value(dtn["g_e"].clone()).unwrap();
        let mean = g_e.iter().sum::<f64>() / g_e.len() as f64;
        assert!((mean + 1.0).abs() <= 0.15);
        let ntd = run_ntd(&config).unwrap();
        let f_i: Vec<f64> = serde_json::from_value(ntd["f_i"].clone()).unwrap();
        let mean = f_i.iter().sum::<f64>() / f_i.len() as f64;
        assert!((mean - 1.0).abs() <= 0.15, "mean f_i = {mean}");
    }

    #[test]
    fn mesh_info_reports_stats() {
        let info = run_mesh_info(&MeshSpec::Icosphere {
            level: 1,
            radius: 1.0,
        })
        .unwrap();
        assert_eq!(info["n_vertices"], 42);
        assert_eq!(info["n_triangles"], 80);
        assert_eq!(info["fingerprint"].as_str().unwrap().len(), 64);
    }

    #[test]
    fn identical_configs_give_identical_json() {
        let config = shell_config(1, "neumann");
        let a = run_solve(&config).unwrap().to_string();
        let b = run_solve(&config).unwrap().to_string();
        assert_eq!(a, b);
    }
}
