//! Closed triangulated surfaces with outward normals.
//!
//! A [`SurfaceMesh`] is the boundary of a bounded interior domain. Construction
//! validates that the triangulation is closed (every edge shared by exactly two
//! triangles), consistently oriented, free of degenerate triangles, and that the
//! winding encloses positive signed volume, i.e. the normals point outward.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

/// A point in 3-space.
pub type Point3 = nalgebra::Point3<f64>;
/// A vector in 3-space.
pub type Vec3 = Vector3<f64>;

/// Supported ASCII mesh formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("index out of range: triangle {triangle} references vertex {index} (have {n_vertices})")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        n_vertices: usize,
    },
    #[error("invalid mesh: {0}")]
    Invalid(ValidationReport),
    #[error("icosphere level {0} too large (maximum 7)")]
    LevelTooLarge(u32),
    #[error("icosphere radius must be positive, got {0}")]
    NonPositiveRadius(f64),
}

/// A single violated mesh invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum MeshViolation {
    NonFiniteVertex(usize),
    IndexOutOfRange { triangle: usize, index: usize },
    /// Edge belonging to only one triangle (open surface).
    BoundaryEdge(usize, usize),
    /// Edge shared by more than two triangles.
    NonManifoldEdge(usize, usize),
    /// Edge traversed in the same direction by two triangles.
    InconsistentOrientation(usize, usize),
    ZeroAreaTriangle(usize),
    /// Signed volume of the closed surface is not positive.
    NonPositiveVolume(f64),
}

impl fmt::Display for MeshViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshViolation::NonFiniteVertex(v) => write!(f, "non-finite vertex {v}"),
            MeshViolation::IndexOutOfRange { triangle, index } => {
                write!(f, "triangle {triangle} references out-of-range vertex {index}")
            }
            MeshViolation::BoundaryEdge(a, b) => write!(f, "boundary edge ({a}, {b})"),
            MeshViolation::NonManifoldEdge(a, b) => write!(f, "non-manifold edge ({a}, {b})"),
            MeshViolation::InconsistentOrientation(a, b) => {
                write!(f, "inconsistent orientation across edge ({a}, {b})")
            }
            MeshViolation::ZeroAreaTriangle(t) => write!(f, "zero-area triangle {t}"),
            MeshViolation::NonPositiveVolume(v) => write!(f, "non-positive signed volume {v}"),
        }
    }
}

/// Result of checking all mesh invariants. Empty iff the mesh is valid.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<MeshViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Summary statistics of a mesh.
#[derive(Clone, Copy, Debug)]
pub struct MeshStats {
    pub h: f64,
    pub total_area: f64,
    pub signed_volume: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
}

/// A closed, consistently oriented triangulation with outward unit normals.
///
/// Immutable after construction; safe for concurrent reads.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    /// Longest edge per triangle.
    diameters: Vec<f64>,
    /// Max triangle diameter.
    h: f64,
    /// Triangles incident to each vertex, sorted.
    vertex_triangles: Vec<Vec<usize>>,
}

impl SurfaceMesh {
    /// Build a validated mesh. If the winding consistently encloses negative
    /// volume the whole surface is reoriented so normals point outward.
    pub fn new(vertices: Vec<Point3>, mut triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        index: i,
                        n_vertices: vertices.len(),
                    });
                }
            }
        }
        if signed_volume_raw(&vertices, &triangles) < 0.0 {
            for tri in triangles.iter_mut() {
                tri.swap(1, 2);
            }
        }
        let report = validate_raw(&vertices, &triangles);
        if !report.is_valid() {
            return Err(MeshError::Invalid(report));
        }
        Ok(Self::from_raw_unchecked(vertices, triangles))
    }

    /// Build without validation. Intended for tests that need invalid meshes.
    pub fn from_raw_unchecked(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Self {
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut diameters = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            areas.push(0.5 * norm);
            normals.push(if norm > 0.0 { cross / norm } else { Vec3::zeros() });
            diameters.push(
                (b - a)
                    .norm()
                    .max((c - b).norm())
                    .max((a - c).norm()),
            );
        }
        let h = diameters.iter().cloned().fold(0.0, f64::max);
        let mut vertex_triangles = vec![Vec::new(); vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i < vertices.len() {
                    vertex_triangles[i].push(t);
                }
            }
        }
        SurfaceMesh {
            vertices,
            triangles,
            normals,
            areas,
            diameters,
            h,
            vertex_triangles,
        }
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Unit outward normal of triangle `t`.
    pub fn normal(&self, t: usize) -> Vec3 {
        self.normals[t]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        self.diameters[t]
    }

    /// Max triangle diameter over the whole mesh.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, t: usize) -> Point3 {
        let [a, b, c] = self.triangle_vertices(t);
        Point3::from((a.coords + b.coords + c.coords) / 3.0)
    }

    /// Triangles incident to vertex `v`.
    pub fn triangles_of_vertex(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Volume enclosed by the surface via the divergence theorem;
    /// positive iff the normals point outward.
    pub fn signed_volume(&self) -> f64 {
        signed_volume_raw(&self.vertices, &self.triangles)
    }

    /// Re-check all invariants; the report is empty iff the mesh is valid.
    pub fn validate(&self) -> ValidationReport {
        validate_raw(&self.vertices, &self.triangles)
    }

    pub fn stats(&self) -> MeshStats {
        MeshStats {
            h: self.h,
            total_area: self.total_area(),
            signed_volume: self.signed_volume(),
            n_vertices: self.n_vertices(),
            n_triangles: self.n_triangles(),
        }
    }

    /// Distance from `x` to the closest triangle of the mesh.
    pub fn distance_to_surface(&self, x: &Point3) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let d = point_triangle_distance(x, &self.triangle_vertices(t));
            if d < best {
                best = d;
            }
        }
        best
    }

    /// Generalized winding number of the surface around `x`:
    /// 1 for interior points, 0 for exterior points.
    pub fn winding_number(&self, x: &Point3) -> f64 {
        let mut total = 0.0;
        for tri in &self.triangles {
            let a = self.vertices[tri[0]] - x;
            let b = self.vertices[tri[1]] - x;
            let c = self.vertices[tri[2]] - x;
            // van Oosterom-Strackee signed solid angle
            let det = a.dot(&b.cross(&c));
            let denom = a.norm() * b.norm() * c.norm()
                + a.dot(&b) * c.norm()
                + b.dot(&c) * a.norm()
                + c.dot(&a) * b.norm();
            total += 2.0 * det.atan2(denom);
        }
        total / (4.0 * std::f64::consts::PI)
    }

    /// SHA-256 fingerprint of the vertex and triangle data.
    pub fn fingerprint(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for v in &self.vertices {
            for c in v.coords.iter() {
                hasher.update(c.to_le_bytes());
            }
        }
        for t in &self.triangles {
            for &i in t {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        hasher.finalize().into()
    }
}

fn signed_volume_raw(vertices: &[Point3], triangles: &[[usize; 3]]) -> f64 {
    let mut vol = 0.0;
    for tri in triangles {
        let a = vertices[tri[0]].coords;
        let b = vertices[tri[1]].coords;
        let c = vertices[tri[2]].coords;
        vol += a.dot(&b.cross(&c));
    }
    vol / 6.0
}

/// Check all invariants of a raw vertex/triangle soup.
pub fn validate_raw(vertices: &[Point3], triangles: &[[usize; 3]]) -> ValidationReport {
    let mut violations = Vec::new();
    for (v, p) in vertices.iter().enumerate() {
        if !p.coords.iter().all(|c| c.is_finite()) {
            violations.push(MeshViolation::NonFiniteVertex(v));
        }
    }
    let mut indices_ok = true;
    for (t, tri) in triangles.iter().enumerate() {
        for &i in tri {
            if i >= vertices.len() {
                violations.push(MeshViolation::IndexOutOfRange { triangle: t, index: i });
                indices_ok = false;
            }
        }
    }
    if !indices_ok {
        return ValidationReport { violations };
    }

    for (t, tri) in triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|i| vertices[i]);
        let area = 0.5 * (b - a).cross(&(c - a)).norm();
        let scale = (b - a).norm().max((c - a).norm());
        if area <= 1e-14 * scale * scale || scale == 0.0 {
            violations.push(MeshViolation::ZeroAreaTriangle(t));
        }
    }

    // Each undirected edge must be traversed exactly twice, once per direction.
    let mut edges: HashMap<(usize, usize), (i32, i32)> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let entry = edges.entry(key).or_insert((0, 0));
            if a < b {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
    }
    let mut edge_violations: Vec<MeshViolation> = Vec::new();
    for (&(a, b), &(fwd, rev)) in &edges {
        let total = fwd + rev;
        if total == 1 {
            edge_violations.push(MeshViolation::BoundaryEdge(a, b));
        } else if total > 2 {
            edge_violations.push(MeshViolation::NonManifoldEdge(a, b));
        } else if fwd != 1 || rev != 1 {
            edge_violations.push(MeshViolation::InconsistentOrientation(a, b));
        }
    }
    edge_violations.sort_by_key(|v| match v {
        MeshViolation::BoundaryEdge(a, b)
        | MeshViolation::NonManifoldEdge(a, b)
        | MeshViolation::InconsistentOrientation(a, b) => (*a, *b),
        _ => (usize::MAX, usize::MAX),
    });
    violations.extend(edge_violations);

    if violations.is_empty() {
        let vol = signed_volume_raw(vertices, triangles);
        if vol <= 0.0 {
            violations.push(MeshViolation::NonPositiveVolume(vol));
        }
    }
    ValidationReport { violations }
}

fn point_triangle_distance(x: &Point3, tri: &[Point3; 3]) -> f64 {
    // Project onto the triangle plane, clamp to the triangle, fall back to edges.
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ax = x - a;
    let n = ab.cross(&ac);
    let nn = n.norm_squared();
    if nn == 0.0 {
        return ax.norm();
    }
    // Barycentric coordinates of the in-plane projection.
    let d00 = ab.dot(&ab);
    let d01 = ab.dot(&ac);
    let d11 = ac.dot(&ac);
    let d20 = ax.dot(&ab);
    let d21 = ax.dot(&ac);
    let denom = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    if v >= 0.0 && w >= 0.0 && v + w <= 1.0 {
        return (ax.dot(&n)).abs() / nn.sqrt();
    }
    let seg = |p: Point3, q: Point3| -> f64 {
        let pq = q - p;
        let t = ((x - p).dot(&pq) / pq.norm_squared()).clamp(0.0, 1.0);
        (x - (p + pq * t)).norm()
    };
    seg(a, b).min(seg(b, c)).min(seg(c, a))
}

/// Load a closed triangulated surface from an ASCII OFF or OBJ file.
pub fn load_mesh<P: AsRef<Path>>(path: P, format: MeshFormat) -> Result<SurfaceMesh, MeshError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let (vertices, triangles) = match format {
        MeshFormat::Off => parse_off(reader)?,
        MeshFormat::Obj => parse_obj(reader)?,
    };
    SurfaceMesh::new(vertices, triangles)
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_off<R: BufRead>(reader: R) -> Result<(Vec<Point3>, Vec<[usize; 3]>), MeshError> {
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            tokens.push((lineno + 1, tok.to_string()));
        }
    }
    let mut it = tokens.into_iter();
    let (l, magic) = it.next().ok_or_else(|| parse_err(1, "empty OFF file"))?;
    if magic != "OFF" {
        return Err(parse_err(l, format!("expected OFF header, got '{magic}'")));
    }
    let mut next_num = |what: &str| -> Result<(usize, f64), MeshError> {
        let (l, tok) = it
            .next()
            .ok_or_else(|| parse_err(0, format!("unexpected end of file reading {what}")))?;
        let v: f64 = tok
            .parse()
            .map_err(|_| parse_err(l, format!("cannot parse {what} '{tok}'")))?;
        Ok((l, v))
    };
    let n_vertices = next_num("vertex count")?.1 as usize;
    let n_faces = next_num("face count")?.1 as usize;
    let _n_edges = next_num("edge count")?.1 as usize;
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let x = next_num("vertex coordinate")?.1;
        let y = next_num("vertex coordinate")?.1;
        let z = next_num("vertex coordinate")?.1;
        vertices.push(Point3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (l, count) = next_num("face vertex count")?;
        if count as usize != 3 {
            return Err(parse_err(l, format!("only triangles supported, got {count}-gon")));
        }
        let a = next_num("face index")?.1 as usize;
        let b = next_num("face index")?.1 as usize;
        let c = next_num("face index")?.1 as usize;
        triangles.push([a, b, c]);
    }
    Ok((vertices, triangles))
}

fn parse_obj<R: BufRead>(reader: R) -> Result<(Vec<Point3>, Vec<[usize; 3]>), MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coord = |_i: usize| -> Result<f64, MeshError> {
                    parts
                        .next()
                        .ok_or_else(|| parse_err(lineno, "vertex needs 3 coordinates"))?
                        .parse()
                        .map_err(|_| parse_err(lineno, "cannot parse vertex coordinate"))
                };
                let (x, y, z) = (coord(0)?, coord(1)?, coord(2)?);
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        first
                            .parse::<i64>()
                            .map_err(|_| parse_err(lineno, format!("cannot parse face index '{tok}'")))
                            .and_then(|i| {
                                if i >= 1 {
                                    Ok((i - 1) as usize)
                                } else {
                                    Err(parse_err(lineno, "negative face indices not supported"))
                                }
                            })
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(parse_err(
                        lineno,
                        format!("only triangles supported, got {}-gon", idx.len()),
                    ));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

/// Write a mesh as ASCII OFF, for generated fixtures.
pub fn write_off<P: AsRef<Path>>(mesh: &SurfaceMesh, path: P) -> Result<(), MeshError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "OFF")?;
    writeln!(f, "{} {} 0", mesh.n_vertices(), mesh.n_triangles())?;
    for v in mesh.vertices() {
        writeln!(f, "{} {} {}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(f, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// Axis-aligned cube of the given side length centered at the origin,
/// 12 triangles with outward winding. Test geometry.
pub fn make_cube(side: f64) -> Result<SurfaceMesh, MeshError> {
    let s = side / 2.0;
    let corners = [
        [-s, -s, -s],
        [s, -s, -s],
        [s, s, -s],
        [-s, s, -s],
        [-s, -s, s],
        [s, -s, s],
        [s, s, s],
        [-s, s, s],
    ];
    let vertices = corners.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect();
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [2, 3, 7],
        [2, 7, 6],
        [1, 2, 6],
        [1, 6, 5],
        [3, 0, 4],
        [3, 4, 7],
    ];
    SurfaceMesh::new(vertices, triangles)
}

/// Icosahedron refined by `level` midpoint subdivisions, vertices projected
/// to the sphere of the given radius after each pass.
pub fn make_icosphere(level: u32, radius: f64) -> Result<SurfaceMesh, MeshError> {
    if level > 7 {
        return Err(MeshError::LevelTooLarge(level));
    }
    if !(radius > 0.0) {
        return Err(MeshError::NonPositiveRadius(radius));
    }
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut vertices: Vec<Point3> = raw
        .iter()
        .map(|c| {
            let v = Vec3::new(c[0], c[1], c[2]);
            Point3::from(v / v.norm() * radius)
        })
        .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a].coords + vertices[b].coords) / 2.0;
                vertices.push(Point3::from(m / m.norm() * radius));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        triangles = next;
    }
    SurfaceMesh::new(vertices, triangles)
}
