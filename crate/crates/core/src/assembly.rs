//! Element assembly for one linearized step over P1 triangles.
//!
//! The bilinear form integrates `tr(K[H] W^T)` with piecewise-constant
//! coefficients, so one-point quadrature is exact per element. The load
//! collects the boundary traction, the divergence of the current stress
//! and the body force. Slip constraints are imposed by rotating the node
//! to (normal, tangent) coordinates and eliminating the normal component;
//! clamped nodes are eliminated entirely with prescribed data moved to the
//! right-hand side.

use crate::constitutive::{tangent_k, ConstitutiveError, MaterialParams, QuadPointState};
use crate::mesh::{Mesh, MeshError, LABEL_CLAMPED, LABEL_SLIP, LABEL_TRACTION};
use crate::tensor::{cross, Tensor2, Vec2};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("element state count {states} does not match triangle count {triangles}")]
    StateCountMismatch { states: usize, triangles: usize },
    #[error("traction count {tractions} does not match boundary edge count {edges}")]
    TractionCountMismatch { tractions: usize, edges: usize },
    #[error("element {idx} has zero or negative area {area:e} in the current configuration")]
    ZeroAreaElement { idx: usize, area: f64 },
    #[error(
        "slip corner conflict at node {node}: adjacent slip normals ({:.6}, {:.6}) and ({:.6}, {:.6}) \
         are not parallel; re-label the corner as clamped",
        n1[0], n1[1], n2[0], n2[1]
    )]
    SlipCornerConflict { node: usize, n1: Vec2, n2: Vec2 },
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Kinematic constraint at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeConstraint {
    /// Two unknowns (x, y).
    Free { dofs: [usize; 2] },
    /// One tangential unknown; displacement is dof * tangent.
    Slip { dof: usize, normal: Vec2, tangent: Vec2 },
    /// No unknowns; displacement equals the prescribed data.
    Clamped,
}

/// Node-to-unknown numbering realizing the constrained space.
#[derive(Debug, Clone)]
pub struct DofMap {
    constraints: Vec<NodeConstraint>,
    n_dofs: usize,
}

impl DofMap {
    /// Classify nodes from the boundary labels (clamped beats slip at shared
    /// corners) plus explicit clamp overrides, and number the unknowns.
    /// Slip normals come from the current edge geometry; a slip node whose
    /// adjacent slip edges disagree on the normal is a hard error.
    pub fn build(mesh: &Mesh, clamp_overrides: &[usize]) -> Result<DofMap, AssemblyError> {
        #[derive(Clone)]
        enum Kind {
            Free,
            Slip(Vec<Vec2>),
            Clamped,
        }
        let mut kinds = vec![Kind::Free; mesh.nodes.len()];

        for (idx, edge) in mesh.boundary_edges.iter().enumerate() {
            if edge.label != LABEL_SLIP {
                continue;
            }
            let n = mesh.edge_normal(idx)?;
            for v in [edge.a, edge.b] {
                match &mut kinds[v] {
                    Kind::Slip(list) => list.push(n),
                    k @ Kind::Free => *k = Kind::Slip(vec![n]),
                    Kind::Clamped => {}
                }
            }
        }
        for edge in &mesh.boundary_edges {
            if edge.label == LABEL_CLAMPED {
                kinds[edge.a] = Kind::Clamped;
                kinds[edge.b] = Kind::Clamped;
            }
        }
        for &v in clamp_overrides {
            kinds[v] = Kind::Clamped;
        }

        let mut constraints = Vec::with_capacity(mesh.nodes.len());
        let mut next = 0usize;
        for (node, kind) in kinds.into_iter().enumerate() {
            constraints.push(match kind {
                Kind::Free => {
                    let dofs = [next, next + 1];
                    next += 2;
                    NodeConstraint::Free { dofs }
                }
                Kind::Clamped => NodeConstraint::Clamped,
                Kind::Slip(normals) => {
                    let n0 = normals[0];
                    for n in &normals[1..] {
                        if cross(n0, *n).abs() > 1e-10 {
                            return Err(AssemblyError::SlipCornerConflict { node, n1: n0, n2: *n });
                        }
                    }
                    let dof = next;
                    next += 1;
                    NodeConstraint::Slip { dof, normal: n0, tangent: [-n0[1], n0[0]] }
                }
            });
        }
        Ok(DofMap { constraints, n_dofs: next })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn constraint(&self, node: usize) -> &NodeConstraint {
        &self.constraints[node]
    }

    /// Reconstruct the full nodal field from the solved unknowns and the
    /// prescribed clamped data.
    pub fn expand(&self, dofs: &[f64], prescribed: &[Vec2]) -> Vec<Vec2> {
        assert_eq!(dofs.len(), self.n_dofs);
        assert_eq!(prescribed.len(), self.constraints.len());
        self.constraints
            .iter()
            .zip(prescribed)
            .map(|(c, presc)| match c {
                NodeConstraint::Free { dofs: d } => [dofs[d[0]], dofs[d[1]]],
                NodeConstraint::Slip { dof, tangent, .. } => {
                    [dofs[*dof] * tangent[0], dofs[*dof] * tangent[1]]
                }
                NodeConstraint::Clamped => *presc,
            })
            .collect()
    }
}

/// (dof, weight) pairs tying one nodal component to the unknowns.
fn component_weights(c: &NodeConstraint, comp: usize, out: &mut [(usize, f64); 1]) -> usize {
    match c {
        NodeConstraint::Free { dofs } => {
            out[0] = (dofs[comp], 1.0);
            1
        }
        NodeConstraint::Slip { dof, tangent, .. } => {
            if tangent[comp] == 0.0 {
                0
            } else {
                out[0] = (*dof, tangent[comp]);
                1
            }
        }
        NodeConstraint::Clamped => 0,
    }
}

/// Unconstrained contribution of one element: local 6x6 operator and load,
/// ordered (node0 x, node0 y, node1 x, ...).
#[derive(Debug, Clone)]
pub struct ElementContribution {
    pub nodes: [usize; 3],
    pub k: [[f64; 6]; 6],
    pub f: [f64; 6],
}

/// Traction contribution of one boundary edge.
#[derive(Debug, Clone)]
pub struct EdgeContribution {
    pub nodes: [usize; 2],
    pub f: [f64; 4],
}

/// Element-level contributions before constraints are imposed.
#[derive(Debug, Clone)]
pub struct RawContributions {
    pub elements: Vec<ElementContribution>,
    pub edges: Vec<EdgeContribution>,
    pub n_nodes: usize,
}

/// Sparse matrix in compressed-row form.
#[derive(Debug, Clone)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: Vec<BTreeMap<usize, f64>>) -> Csr {
        let n = rows.len();
        let nnz = rows.iter().map(BTreeMap::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Csr { n, row_ptr, col_idx, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * x[i];
            }
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    /// Quadratic form x . (A x).
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        dot_slices(x, &y)
    }
}

pub fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot_slices(a, a).sqrt()
}

/// The assembled constrained step problem. The operator is generally NOT
/// symmetric: the (tr H) T0 and -T0 H^T terms of the tangent break symmetry.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    pub dofmap: DofMap,
    /// Prescribed displacement per node (zero except driven clamped nodes).
    pub prescribed: Vec<Vec2>,
}

impl LinearSystem {
    /// Full nodal displacement from a solved unknown vector.
    pub fn expand(&self, dofs: &[f64]) -> Vec<Vec2> {
        self.dofmap.expand(dofs, &self.prescribed)
    }
}

/// Boundary data for one step.
#[derive(Debug, Clone, Default)]
pub struct BoundaryData {
    /// Traction per boundary edge; consulted only where the label is 1.
    pub tractions: Vec<Vec2>,
    /// Nodes clamped in addition to the labeled clamped edges (slip-corner
    /// overrides).
    pub clamp_overrides: Vec<usize>,
    /// Prescribed displacement on clamped nodes (missing entries are zero).
    pub prescribed: BTreeMap<usize, Vec2>,
}

impl BoundaryData {
    pub fn zero(mesh: &Mesh) -> BoundaryData {
        BoundaryData {
            tractions: vec![[0.0, 0.0]; mesh.boundary_edges.len()],
            clamp_overrides: Vec::new(),
            prescribed: BTreeMap::new(),
        }
    }
}

/// Compute the unconstrained element and edge contributions.
pub fn assemble_raw(
    mesh: &Mesh,
    states: &[QuadPointState],
    beta: f64,
    params: &MaterialParams,
    bc: &BoundaryData,
    gravity_on: bool,
) -> Result<RawContributions, AssemblyError> {
    if states.len() != mesh.triangles.len() {
        return Err(AssemblyError::StateCountMismatch {
            states: states.len(),
            triangles: mesh.triangles.len(),
        });
    }
    if bc.tractions.len() != mesh.boundary_edges.len() {
        return Err(AssemblyError::TractionCountMismatch {
            tractions: bc.tractions.len(),
            edges: mesh.boundary_edges.len(),
        });
    }

    let grav = params.gravity();
    let mut elements = Vec::with_capacity(mesh.triangles.len());
    for (idx, (tri, state)) in mesh.triangles.iter().zip(states).enumerate() {
        let (area, grads) = mesh.shape_gradients(idx);
        if !(area > 0.0) || !area.is_finite() {
            return Err(AssemblyError::ZeroAreaElement { idx, area });
        }

        let mut k = [[0.0; 6]; 6];
        let mut f = [0.0; 6];
        for j in 0..3 {
            for b in 0..2 {
                // Trial basis (j, b) has the constant gradient e_b (x) grad_j.
                let mut e = [0.0; 2];
                e[b] = 1.0;
                let h = Tensor2::outer(e, grads[j]);
                let kh = tangent_k(&h, &state.b0, &state.t0, beta, params)?;
                for i in 0..3 {
                    let rows = [
                        kh.xx * grads[i][0] + kh.xy * grads[i][1],
                        kh.yx * grads[i][0] + kh.yy * grads[i][1],
                    ];
                    for a in 0..2 {
                        k[2 * i + a][2 * j + b] = area * rows[a];
                    }
                }
            }
        }
        for i in 0..3 {
            let t0_grad = state.t0.apply(grads[i]);
            for a in 0..2 {
                f[2 * i + a] = -area * t0_grad[a];
                if gravity_on {
                    f[2 * i + a] += state.rho * grav[a] * area / 3.0;
                }
            }
        }
        elements.push(ElementContribution { nodes: *tri, k, f });
    }

    // Two-point Gauss along each traction edge, exact for linear data.
    const GAUSS: [f64; 2] = [
        0.5 - 0.288_675_134_594_812_9, // (1 - 1/sqrt(3)) / 2
        0.5 + 0.288_675_134_594_812_9,
    ];
    let mut edges = Vec::new();
    for (idx, edge) in mesh.boundary_edges.iter().enumerate() {
        if edge.label != LABEL_TRACTION {
            continue;
        }
        let traction = bc.tractions[idx];
        if traction == [0.0, 0.0] {
            continue;
        }
        let len = mesh.edge_length(idx);
        let mut f = [0.0; 4];
        for s in GAUSS {
            let w = 0.5 * len;
            for a in 0..2 {
                f[a] += w * (1.0 - s) * traction[a];
                f[2 + a] += w * s * traction[a];
            }
        }
        edges.push(EdgeContribution { nodes: [edge.a, edge.b], f });
    }

    Ok(RawContributions { elements, edges, n_nodes: mesh.nodes.len() })
}

/// Fold raw contributions into the constrained sparse system. Prescribed
/// clamped data is lifted: its columns move to the right-hand side.
pub fn apply_constraints(
    raw: &RawContributions,
    dofmap: &DofMap,
    prescribed_map: &BTreeMap<usize, Vec2>,
) -> LinearSystem {
    let n = dofmap.n_dofs();
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut rhs = vec![0.0; n];

    let mut prescribed = vec![[0.0, 0.0]; raw.n_nodes];
    for (&node, &value) in prescribed_map {
        prescribed[node] = value;
    }

    let mut wbuf = [(0usize, 0.0f64); 1];
    let mut cbuf = [(0usize, 0.0f64); 1];
    for el in &raw.elements {
        for i in 0..3 {
            let row_c = dofmap.constraint(el.nodes[i]);
            for a in 0..2 {
                let nw = component_weights(row_c, a, &mut wbuf);
                for (rdof, rw) in wbuf.iter().take(nw) {
                    rhs[*rdof] += rw * el.f[2 * i + a];
                    for j in 0..3 {
                        let col_c = dofmap.constraint(el.nodes[j]);
                        for b in 0..2 {
                            let kval = el.k[2 * i + a][2 * j + b];
                            if kval == 0.0 {
                                continue;
                            }
                            if matches!(col_c, NodeConstraint::Clamped) {
                                let g = prescribed[el.nodes[j]][b];
                                if g != 0.0 {
                                    rhs[*rdof] -= rw * kval * g;
                                }
                            } else {
                                let nc = component_weights(col_c, b, &mut cbuf);
                                for (cdof, cw) in cbuf.iter().take(nc) {
                                    *rows[*rdof].entry(*cdof).or_insert(0.0) += rw * cw * kval;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for edge in &raw.edges {
        for i in 0..2 {
            let c = dofmap.constraint(edge.nodes[i]);
            for a in 0..2 {
                let nw = component_weights(c, a, &mut wbuf);
                for (rdof, rw) in wbuf.iter().take(nw) {
                    rhs[*rdof] += rw * edge.f[2 * i + a];
                }
            }
        }
    }

    LinearSystem { matrix: Csr::from_rows(rows), rhs, dofmap: dofmap.clone(), prescribed }
}

/// Assemble the constrained step problem in one call.
pub fn assemble(
    mesh: &Mesh,
    states: &[QuadPointState],
    beta: f64,
    params: &MaterialParams,
    bc: &BoundaryData,
    gravity_on: bool,
) -> Result<LinearSystem, AssemblyError> {
    let raw = assemble_raw(mesh, states, beta, params, bc, gravity_on)?;
    let dofmap = DofMap::build(mesh, &bc.clamp_overrides)?;
    Ok(apply_constraints(&raw, &dofmap, &bc.prescribed))
}

/// Constant displacement gradient of one element under a nodal field.
pub fn element_gradient(mesh: &Mesh, tri_idx: usize, u: &[Vec2]) -> Tensor2 {
    let (_, grads) = mesh.shape_gradients(tri_idx);
    let mut h = Tensor2::ZERO;
    for (local, &node) in mesh.triangles[tri_idx].iter().enumerate() {
        h = h + Tensor2::outer(u[node], grads[local]);
    }
    h
}

/// Sum over elements of area * |grad u|^2, the squared discrete gradient
/// norm entering the coercivity bound.
pub fn gradient_norm_sq(mesh: &Mesh, u: &[Vec2]) -> f64 {
    (0..mesh.triangles.len())
        .map(|e| {
            let h = element_gradient(mesh, e, u);
            mesh.signed_area(e) * h.inner(&h)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryEdge;
    use crate::tensor::dot;

    fn params() -> MaterialParams {
        MaterialParams::new(1.0, -0.3, 50.0, 1.0, [0.0, 0.0]).unwrap()
    }

    fn uniform_states(mesh: &Mesh, p0: f64, pars: &MaterialParams) -> Vec<QuadPointState> {
        vec![QuadPointState::initial(p0, pars).unwrap(); mesh.triangles.len()]
    }

    #[test]
    fn dof_count_splits_by_constraint() {
        // Bottom slip, right traction, top clamped, left traction.
        let mesh = Mesh::rectangle(2, 2, 1.0, 1.0, [2, 1, 3, 1]);
        let dofmap = DofMap::build(&mesh, &[]).unwrap();
        let mut free = 0;
        let mut slip = 0;
        for node in 0..mesh.nodes.len() {
            match dofmap.constraint(node) {
                NodeConstraint::Free { .. } => free += 1,
                NodeConstraint::Slip { .. } => slip += 1,
                NodeConstraint::Clamped => {}
            }
        }
        assert_eq!(dofmap.n_dofs(), 2 * free + slip);
        // Bottom row minus nothing: 3 slip nodes (corners are slip+traction,
        // slip wins over free), top row clamped.
        assert_eq!(slip, 3);
    }

    #[test]
    fn axis_aligned_slip_eliminates_normal_component() {
        let mesh = Mesh::rectangle(2, 1, 1.0, 1.0, [2, 1, 3, 1]);
        let dofmap = DofMap::build(&mesh, &[]).unwrap();
        for node in 0..mesh.nodes.len() {
            if let NodeConstraint::Slip { normal, tangent, .. } = dofmap.constraint(node) {
                assert!((normal[1] + 1.0).abs() < 1e-14, "bottom normal is (0, -1)");
                assert!((tangent[0] - 1.0).abs() < 1e-14, "tangent along +x");
            }
        }
        // A reconstructed field has zero normal displacement on the wall.
        let dofs: Vec<f64> = (0..dofmap.n_dofs()).map(|i| (i as f64) * 0.1 + 0.3).collect();
        let full = dofmap.expand(&dofs, &vec![[0.0, 0.0]; mesh.nodes.len()]);
        for node in 0..mesh.nodes.len() {
            if let NodeConstraint::Slip { normal, .. } = dofmap.constraint(node) {
                assert_eq!(dot(full[node], *normal), 0.0);
            }
        }
    }

    #[test]
    fn oblique_slip_wall_constrains_along_its_normal() {
        // Triangle with a 45-degree slip hypotenuse.
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let triangles = vec![[0, 1, 2]];
        let edges = vec![
            BoundaryEdge { a: 0, b: 1, label: 3 },
            BoundaryEdge { a: 1, b: 2, label: 2 },
            BoundaryEdge { a: 2, b: 0, label: 3 },
        ];
        let (mesh, _) = Mesh::new(nodes, triangles, edges, false).unwrap();
        let dofmap = DofMap::build(&mesh, &[]).unwrap();
        let slip_nodes: Vec<usize> = (0..3)
            .filter(|&n| matches!(dofmap.constraint(n), NodeConstraint::Slip { .. }))
            .collect();
        assert!(slip_nodes.is_empty(), "clamped endpoints win over slip at corners");

        // Re-label so the hypotenuse endpoints stay slip-only.
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let edges = vec![
            BoundaryEdge { a: 0, b: 1, label: 1 },
            BoundaryEdge { a: 1, b: 2, label: 2 },
            BoundaryEdge { a: 2, b: 0, label: 1 },
        ];
        let (mesh, _) = Mesh::new(nodes, vec![[0, 1, 2]], edges, true).unwrap();
        let dofmap = DofMap::build(&mesh, &[]).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        for node in [1, 2] {
            match dofmap.constraint(node) {
                NodeConstraint::Slip { normal, .. } => {
                    assert!((normal[0] - s).abs() < 1e-14 && (normal[1] - s).abs() < 1e-14);
                }
                other => panic!("expected slip at node {node}, got {other:?}"),
            }
        }
    }

    #[test]
    fn conflicting_slip_corner_is_rejected() {
        // Bottom and left both slip: their shared corner normals disagree.
        let mesh = Mesh::rectangle(2, 2, 1.0, 1.0, [2, 1, 3, 2]);
        match DofMap::build(&mesh, &[]) {
            Err(AssemblyError::SlipCornerConflict { node, .. }) => {
                let p = mesh.nodes[node];
                assert!(p[0].abs() < 1e-14 && p[1].abs() < 1e-14);
            }
            other => panic!("expected slip corner conflict, got {other:?}"),
        }
        // The documented fix: clamp the corner explicitly.
        assert!(DofMap::build(&mesh, &[0]).is_ok());
    }

    #[test]
    fn collapsed_element_is_rejected() {
        let pars = params();
        let mut mesh = Mesh::rectangle(1, 1, 1.0, 1.0, [3, 3, 3, 3]);
        let states = uniform_states(&mesh, 0.0, &pars);
        // Drag the center node onto a corner: two triangles collapse.
        let center = mesh.nodes.len() - 1;
        mesh.nodes[center] = mesh.nodes[0];
        match assemble(&mesh, &states, pars.beta(), &pars, &BoundaryData::zero(&mesh), false) {
            Err(AssemblyError::ZeroAreaElement { .. }) => {}
            other => panic!("expected zero-area element, got {other:?}"),
        }
    }

    #[test]
    fn fully_clamped_equilibrium_has_zero_rhs() {
        let pars = params();
        let mesh = Mesh::rectangle(2, 2, 1.0, 1.0, [3, 3, 3, 3]);
        let states = uniform_states(&mesh, pars.s1() + pars.s2(), &pars);
        let system =
            assemble(&mesh, &states, pars.beta(), &pars, &BoundaryData::zero(&mesh), false).unwrap();
        assert!(norm2(&system.rhs) == 0.0);
    }

    #[test]
    fn isotropic_stress_rhs_vanishes_at_symmetric_interior_node() {
        // Uniform T0 = c I over a symmetric patch: the divergence load on
        // the interior node cancels.
        let pars = params();
        let mesh = Mesh::rectangle(1, 1, 1.0, 1.0, [3, 3, 3, 3]);
        let mut states = uniform_states(&mesh, 0.0, &pars);
        for s in &mut states {
            s.t0 = Tensor2::diag(0.7, 0.7);
        }
        let system =
            assemble(&mesh, &states, pars.beta(), &pars, &BoundaryData::zero(&mesh), false).unwrap();
        assert_eq!(system.dofmap.n_dofs(), 2);
        assert!(norm2(&system.rhs) < 1e-15);
    }

    #[test]
    fn quadratic_form_matches_elementwise_trace_form() {
        let pars = params();
        let mesh = Mesh::rectangle(3, 2, 1.3, 0.9, [2, 1, 3, 1]);
        let mut states = uniform_states(&mesh, 0.2, &pars);
        // Perturb states so the check exercises general coefficients.
        for (i, s) in states.iter_mut().enumerate() {
            let t = 0.1 * ((i % 5) as f64 - 2.0);
            s.b0 = Tensor2::new(1.0 + 0.3 * t, 0.1 * t, 0.1 * t, 1.0 - 0.2 * t);
            s.t0 = Tensor2::new(0.2 * t, 0.05 * t, 0.05 * t, -0.1 * t);
        }
        let bc = BoundaryData { clamp_overrides: vec![0], ..BoundaryData::zero(&mesh) };
        let system = assemble(&mesh, &states, pars.beta(), &pars, &bc, false).unwrap();

        let n = system.dofmap.n_dofs();
        let dofs: Vec<f64> = (0..n).map(|i| ((i * 7919 % 13) as f64 - 6.0) / 6.0).collect();
        let lhs = system.matrix.quadratic_form(&dofs);

        let full = system.expand(&dofs);
        let mut rhs = 0.0;
        for (e, s) in states.iter().enumerate() {
            let h = element_gradient(&mesh, e, &full);
            let kh = tangent_k(&h, &s.b0, &s.t0, pars.beta(), &pars).unwrap();
            rhs += mesh.signed_area(e) * kh.inner(&h);
        }
        assert!(
            (lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()).max(1.0),
            "assembled {lhs} vs elementwise {rhs}"
        );
    }

    #[test]
    fn prescribed_data_moves_to_rhs() {
        let pars = params();
        let mesh = Mesh::rectangle(1, 1, 1.0, 1.0, [3, 1, 3, 1]);
        let states = uniform_states(&mesh, pars.s1() + pars.s2(), &pars);
        let raw = assemble_raw(&mesh, &states, pars.beta(), &pars, &BoundaryData::zero(&mesh), false)
            .unwrap();
        let dofmap = DofMap::build(&mesh, &[]).unwrap();

        let mut prescribed = BTreeMap::new();
        for (node, p) in mesh.nodes.iter().enumerate() {
            if (p[1] - 1.0).abs() < 1e-12 && matches!(dofmap.constraint(node), NodeConstraint::Clamped)
            {
                prescribed.insert(node, [0.1, 0.0]);
            }
        }
        let lifted = apply_constraints(&raw, &dofmap, &prescribed);
        let homogeneous = apply_constraints(&raw, &dofmap, &BTreeMap::new());
        assert!(norm2(&homogeneous.rhs) == 0.0);
        assert!(norm2(&lifted.rhs) > 0.0);
    }
}
