//! 2D triangulated meshes with labeled boundary edges.
//!
//! Node coordinates always describe the current configuration; the step
//! loop moves them by the solved displacement. Boundary labels: 1 carries
//! prescribed traction, 2 is a frictionless slip wall (zero normal
//! displacement), 3 is clamped.
//!
//! The native text format is one header line `nodes N triangles M edges K`,
//! then N lines `x y`, M lines `i j k` (0-based, counter-clockwise) and
//! K lines `i j label`.

use crate::tensor::{cross, norm, Tensor2, Vec2};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

pub const LABEL_TRACTION: u8 = 1;
pub const LABEL_SLIP: u8 = 2;
pub const LABEL_CLAMPED: u8 = 3;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("triangle {idx} has non-positive area {area:e} after orientation fix")]
    DegenerateTriangle { idx: usize, area: f64 },
    #[error("node index {idx} out of range (mesh has {len} nodes)")]
    NodeIndexOutOfRange { idx: usize, len: usize },
    #[error("boundary edge ({a}, {b}) of the triangulation has no label")]
    UnlabeledBoundaryEdge { a: usize, b: usize },
    #[error("labeled edge ({a}, {b}) is not a boundary edge of the triangulation (or is listed twice)")]
    NotABoundaryEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) carries invalid label {label}; expected 1, 2 or 3")]
    BadLabel { a: usize, b: usize, label: u8 },
    #[error("clamped boundary is empty; the problem loses uniqueness (pass the override to allow it)")]
    EmptyClampedBoundary,
    #[error("boundary edge {idx} is degenerate (length {len:e})")]
    DegenerateEdge { idx: usize, len: f64 },
}

/// One labeled boundary edge, endpoints ordered along the owning
/// triangle's counter-clockwise traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub label: u8,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Triangle owning each boundary edge.
    edge_owner: Vec<usize>,
}

impl Mesh {
    /// Validate raw pieces into a mesh. Clockwise triangles are reoriented
    /// (reported through the returned warnings); boundary edges are checked
    /// to tile the topological boundary exactly and reordered to follow the
    /// owner triangle's orientation.
    pub fn new(
        nodes: Vec<Vec2>,
        mut triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        allow_empty_clamped: bool,
    ) -> Result<(Mesh, Vec<String>), MeshError> {
        let mut warnings = Vec::new();

        for tri in triangles.iter() {
            for &v in tri {
                if v >= nodes.len() {
                    return Err(MeshError::NodeIndexOutOfRange { idx: v, len: nodes.len() });
                }
            }
        }
        for e in boundary_edges.iter() {
            for v in [e.a, e.b] {
                if v >= nodes.len() {
                    return Err(MeshError::NodeIndexOutOfRange { idx: v, len: nodes.len() });
                }
            }
            if !(1..=3).contains(&e.label) {
                return Err(MeshError::BadLabel { a: e.a, b: e.b, label: e.label });
            }
        }

        for (idx, tri) in triangles.iter_mut().enumerate() {
            let area = signed_area(&nodes, tri);
            if area < 0.0 {
                tri.swap(1, 2);
                warnings.push(format!("triangle {idx} was clockwise; vertices swapped"));
            }
            let area = signed_area(&nodes, tri);
            if !(area > 1e-14) {
                return Err(MeshError::DegenerateTriangle { idx, area });
            }
        }

        // Topological boundary: unordered edges owned by exactly one triangle.
        let mut incidence: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                incidence.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut labeled: BTreeMap<(usize, usize), BoundaryEdge> = BTreeMap::new();
        for e in &boundary_edges {
            let key = (e.a.min(e.b), e.a.max(e.b));
            let owners = incidence.get(&key).map(Vec::as_slice).unwrap_or(&[]);
            if owners.len() != 1 || labeled.insert(key, *e).is_some() {
                return Err(MeshError::NotABoundaryEdge { a: e.a, b: e.b });
            }
        }
        let mut edges = Vec::with_capacity(labeled.len());
        let mut owners = Vec::with_capacity(labeled.len());
        for (key, tris) in &incidence {
            if tris.len() == 1 {
                let e = labeled
                    .get(key)
                    .ok_or(MeshError::UnlabeledBoundaryEdge { a: key.0, b: key.1 })?;
                // Orient along the owner's counter-clockwise traversal.
                let tri = triangles[tris[0]];
                let (mut a, mut b) = (e.a, e.b);
                let follows = (0..3).any(|k| tri[k] == a && tri[(k + 1) % 3] == b);
                if !follows {
                    std::mem::swap(&mut a, &mut b);
                }
                edges.push(BoundaryEdge { a, b, label: e.label });
                owners.push(tris[0]);
            }
        }

        if !allow_empty_clamped && !edges.iter().any(|e| e.label == LABEL_CLAMPED) {
            return Err(MeshError::EmptyClampedBoundary);
        }

        Ok((Mesh { nodes, triangles, boundary_edges: edges, edge_owner: owners }, warnings))
    }

    /// Structured rectangle [0, width] x [0, height], nx by ny cells, each
    /// cut by crossed diagonals into four triangles around a center node.
    /// `labels` assigns boundary labels to bottom, right, top, left.
    pub fn rectangle(nx: usize, ny: usize, width: f64, height: f64, labels: [u8; 4]) -> Mesh {
        assert!(nx >= 1 && ny >= 1, "rectangle mesh needs at least one cell per side");
        let grid = |i: usize, j: usize| j * (nx + 1) + i;
        let center_base = (nx + 1) * (ny + 1);
        let center = |i: usize, j: usize| center_base + j * nx + i;

        let mut nodes = Vec::with_capacity(center_base + nx * ny);
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                nodes.push([
                    width * (i as f64 + 0.5) / nx as f64,
                    height * (j as f64 + 0.5) / ny as f64,
                ]);
            }
        }

        let mut triangles = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (sw, se) = (grid(i, j), grid(i + 1, j));
                let (nw, ne) = (grid(i, j + 1), grid(i + 1, j + 1));
                let c = center(i, j);
                triangles.push([sw, se, c]);
                triangles.push([se, ne, c]);
                triangles.push([ne, nw, c]);
                triangles.push([nw, sw, c]);
            }
        }

        let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            boundary_edges.push(BoundaryEdge { a: grid(i, 0), b: grid(i + 1, 0), label: labels[0] });
        }
        for j in 0..ny {
            boundary_edges.push(BoundaryEdge { a: grid(nx, j), b: grid(nx, j + 1), label: labels[1] });
        }
        for i in (0..nx).rev() {
            boundary_edges.push(BoundaryEdge { a: grid(i + 1, ny), b: grid(i, ny), label: labels[2] });
        }
        for j in (0..ny).rev() {
            boundary_edges.push(BoundaryEdge { a: grid(0, j + 1), b: grid(0, j), label: labels[3] });
        }

        let (mesh, warnings) = Mesh::new(nodes, triangles, boundary_edges, true)
            .expect("structured rectangle mesh is always valid");
        debug_assert!(warnings.is_empty());
        mesh
    }

    pub fn signed_area(&self, tri_idx: usize) -> f64 {
        signed_area(&self.nodes, &self.triangles[tri_idx])
    }

    /// Constant gradients of the three P1 shape functions on a triangle,
    /// together with its area.
    pub fn shape_gradients(&self, tri_idx: usize) -> (f64, [Vec2; 3]) {
        let [i, j, k] = self.triangles[tri_idx];
        let (p, q, r) = (self.nodes[i], self.nodes[j], self.nodes[k]);
        let two_a = 2.0 * signed_area(&self.nodes, &self.triangles[tri_idx]);
        (
            0.5 * two_a,
            [
                [(q[1] - r[1]) / two_a, (r[0] - q[0]) / two_a],
                [(r[1] - p[1]) / two_a, (p[0] - r[0]) / two_a],
                [(p[1] - q[1]) / two_a, (q[0] - p[0]) / two_a],
            ],
        )
    }

    pub fn triangle_owning_edge(&self, edge_idx: usize) -> usize {
        self.edge_owner[edge_idx]
    }

    /// Unit outward normal of a boundary edge in the current configuration.
    pub fn edge_normal(&self, edge_idx: usize) -> Result<Vec2, MeshError> {
        let e = &self.boundary_edges[edge_idx];
        let (pa, pb) = (self.nodes[e.a], self.nodes[e.b]);
        let t = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = norm(t);
        if len < 1e-14 {
            return Err(MeshError::DegenerateEdge { idx: edge_idx, len });
        }
        Ok([t[1] / len, -t[0] / len])
    }

    pub fn edge_length(&self, edge_idx: usize) -> f64 {
        let e = &self.boundary_edges[edge_idx];
        let (pa, pb) = (self.nodes[e.a], self.nodes[e.b]);
        norm([pb[0] - pa[0], pb[1] - pa[1]])
    }

    /// Parse the native text format.
    pub fn parse(text: &str, allow_empty_clamped: bool) -> Result<(Mesh, Vec<String>), MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (line_no, header) = lines
            .next()
            .ok_or(MeshError::Parse { line: 0, msg: "empty mesh file".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || MeshError::Parse {
            line: line_no,
            msg: format!("expected header `nodes N triangles M edges K`, got `{header}`"),
        };
        if fields.len() != 6 || fields[0] != "nodes" || fields[2] != "triangles" || fields[4] != "edges" {
            return Err(bad_header());
        }
        let n: usize = fields[1].parse().map_err(|_| bad_header())?;
        let m: usize = fields[3].parse().map_err(|_| bad_header())?;
        let k: usize = fields[5].parse().map_err(|_| bad_header())?;

        let total_lines = text.lines().count();
        let mut take = |what: &str| {
            lines.next().ok_or(MeshError::Parse {
                line: total_lines,
                msg: format!("file ended early while reading {what}"),
            })
        };

        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, text) = take("nodes")?;
            nodes.push(parse_fields::<f64, 2>(line, text)?);
        }
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let (line, text) = take("triangles")?;
            triangles.push(parse_fields::<usize, 3>(line, text)?);
        }
        let mut boundary_edges = Vec::with_capacity(k);
        for _ in 0..k {
            let (line, text) = take("edges")?;
            let [a, b, label] = parse_fields::<usize, 3>(line, text)?;
            if !(1..=3).contains(&label) {
                return Err(MeshError::Parse {
                    line,
                    msg: format!("edge label {label} is not one of 1, 2, 3"),
                });
            }
            boundary_edges.push(BoundaryEdge { a, b, label: label as u8 });
        }

        Mesh::new(nodes, triangles, boundary_edges, allow_empty_clamped)
    }

    pub fn load(path: &Path, allow_empty_clamped: bool) -> Result<(Mesh, Vec<String>), MeshError> {
        Mesh::parse(&std::fs::read_to_string(path)?, allow_empty_clamped)
    }

    /// Render the native text format. Coordinates carry 17 significant
    /// digits so a reload reproduces them bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "nodes {} triangles {} edges {}",
            self.nodes.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        );
        for p in &self.nodes {
            let _ = writeln!(out, "{:.16e} {:.16e}", p[0], p[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.boundary_edges {
            let _ = writeln!(out, "{} {} {}", e.a, e.b, e.label);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Polygon area of the boundary loop by the shoelace rule over the
    /// (counter-clockwise oriented) boundary edges.
    pub fn boundary_polygon_area(&self) -> f64 {
        0.5 * self
            .boundary_edges
            .iter()
            .map(|e| cross(self.nodes[e.a], self.nodes[e.b]))
            .sum::<f64>()
    }
}

fn signed_area(nodes: &[Vec2], tri: &[usize; 3]) -> f64 {
    let (p, q, r) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    0.5 * cross([q[0] - p[0], q[1] - p[1]], [r[0] - p[0], r[1] - p[1]])
}

fn parse_fields<T: std::str::FromStr, const N: usize>(
    line: usize,
    text: &str,
) -> Result<[T; N], MeshError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != N {
        return Err(MeshError::Parse {
            line,
            msg: format!("expected {N} fields, got {}", fields.len()),
        });
    }
    let mut out: Vec<T> = Vec::with_capacity(N);
    for f in fields {
        out.push(f.parse::<T>().map_err(|_| MeshError::Parse {
            line,
            msg: format!("cannot parse `{f}`"),
        })?);
    }
    Ok(out.try_into().map_err(|_| ()).expect("length checked"))
}

/// Write a legacy-ASCII VTK unstructured grid with optional per-node
/// vector fields and per-triangle tensor fields (four components,
/// row-major).
pub fn write_vtk(
    mesh: &Mesh,
    point_vectors: &[(&str, &[Vec2])],
    cell_tensors: &[(&str, &[Tensor2])],
    path: &Path,
) -> Result<(), MeshError> {
    for (name, data) in point_vectors {
        assert_eq!(data.len(), mesh.nodes.len(), "point field `{name}` length mismatch");
    }
    for (name, data) in cell_tensors {
        assert_eq!(data.len(), mesh.triangles.len(), "cell field `{name}` length mismatch");
    }

    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("sla2d step output\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.nodes.len());
    for p in &mesh.nodes {
        let _ = writeln!(out, "{} {} 0", p[0], p[1]);
    }
    let _ = writeln!(out, "CELLS {} {}", mesh.triangles.len(), 4 * mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.triangles.len());
    for _ in &mesh.triangles {
        out.push_str("5\n");
    }
    if !point_vectors.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", mesh.nodes.len());
        for (name, data) in point_vectors {
            let _ = writeln!(out, "VECTORS {name} double");
            for v in *data {
                let _ = writeln!(out, "{} {} 0", v[0], v[1]);
            }
        }
    }
    if !cell_tensors.is_empty() {
        let _ = writeln!(out, "CELL_DATA {}", mesh.triangles.len());
        for (name, data) in cell_tensors {
            let _ = writeln!(out, "SCALARS {name} double 4");
            out.push_str("LOOKUP_TABLE default\n");
            for t in *data {
                let _ = writeln!(out, "{} {} {} {}", t.xx, t.xy, t.yx, t.yy);
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Render the per-step CSV table `node_id,x,y,ux,uy`.
pub fn csv_snapshot(mesh: &Mesh, displacements: &[Vec2]) -> String {
    assert_eq!(displacements.len(), mesh.nodes.len());
    let mut out = String::from("node_id,x,y,ux,uy\n");
    for (i, (p, u)) in mesh.nodes.iter().zip(displacements).enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{}", p[0], p[1], u[0], u[1]);
    }
    out
}
