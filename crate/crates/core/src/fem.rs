//! P1 finite element operators on the nested meshes.
//!
//! Velocity dofs are laid out component-major: entry `c * n + i` is component
//! `c` at fine node `i`, with `n` the number of fine nodes.

use crate::error::{Error, Result};
use crate::mesh::{interior_dof_map, Level, Point, Triangulation, TwoLevelMesh};
use crate::sparse::SparseOperator;

/// Nodal vector field on the fine mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            y: vec![0.0; n],
        }
    }

    pub fn constant(n: usize, v: [f64; 2]) -> Self {
        Self {
            x: vec![v[0]; n],
            y: vec![v[1]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        if c == 0 {
            &self.x
        } else {
            &self.y
        }
    }

    /// Component-major flat copy `[x..., y...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend_from_slice(&self.x);
        out.extend_from_slice(&self.y);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let n = flat.len() / 2;
        Self {
            x: flat[..n].to_vec(),
            y: flat[n..].to_vec(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        crate::linalg::axpy(alpha, &other.x, &mut self.x);
        crate::linalg::axpy(alpha, &other.y, &mut self.y);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| alpha * v).collect(),
            y: self.y.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

/// Nodal interpolant of `f`.
pub fn interpolate(tri: &Triangulation, f: impl Fn(Point) -> f64) -> Vec<f64> {
    tri.nodes.iter().map(|&p| f(p)).collect()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

const LOCAL_MASS: [[f64; 3]; 3] = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];

pub fn assemble_mass(mesh: &TwoLevelMesh, which: Level) -> SparseOperator {
    mass_matrix(mesh.get(which))
}

pub fn mass_matrix(tri: &Triangulation) -> SparseOperator {
    let n = tri.num_nodes();
    let mut trip = Vec::with_capacity(9 * tri.num_triangles());
    for (t, nodes) in tri.triangles.iter().enumerate() {
        let area = tri.signed_area(t);
        for a in 0..3 {
            for b in 0..3 {
                trip.push((nodes[a], nodes[b], area / 12.0 * LOCAL_MASS[a][b]));
            }
        }
    }
    SparseOperator::from_triplets(n, n, trip, true)
}

pub fn assemble_stiffness(mesh: &TwoLevelMesh, which: Level) -> SparseOperator {
    stiffness_matrix(mesh.get(which))
}

pub fn stiffness_matrix(tri: &Triangulation) -> SparseOperator {
    let n = tri.num_nodes();
    let mut trip = Vec::with_capacity(9 * tri.num_triangles());
    for (t, nodes) in tri.triangles.iter().enumerate() {
        let (g, area) = tri.gradients(t);
        for a in 0..3 {
            for b in 0..3 {
                let v = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                trip.push((nodes[a], nodes[b], v));
            }
        }
    }
    SparseOperator::from_triplets(n, n, trip, true)
}

/// Local advection matrix `C[i][j] = \int_T (v . grad l_j) l_i` by edge-midpoint quadrature.
#[inline]
fn local_advection(g: &[[f64; 2]; 3], area: f64, v: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    // l_i at the midpoint of the edge opposite vertex q is 1/2 for i != q, else 0
    let w = area / 3.0;
    let mut mid = [[0.0; 2]; 3];
    for q in 0..3 {
        let (a, b) = ((q + 1) % 3, (q + 2) % 3);
        mid[q] = [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])];
    }
    let mut c = [[0.0; 3]; 3];
    for (i, row) in c.iter_mut().enumerate() {
        let mut s = [0.0; 2];
        for (q, m) in mid.iter().enumerate() {
            if q != i {
                s[0] += 0.5 * w * m[0];
                s[1] += 0.5 * w * m[1];
            }
        }
        for (j, cij) in row.iter_mut().enumerate() {
            *cij = s[0] * g[j][0] + s[1] * g[j][1];
        }
    }
    c
}

fn velocity_at(v: &VectorField, nodes: &[usize; 3]) -> [[f64; 2]; 3] {
    nodes.map(|k| [v.x[k], v.y[k]])
}

/// Sparse matrix of `y -> \int (v . grad y) phi_i` on the fine mesh.
pub fn assemble_advection(mesh: &TwoLevelMesh, velocity: &VectorField) -> Result<SparseOperator> {
    let tri = &mesh.fine;
    check_len(tri.num_nodes(), velocity.len())?;
    let n = tri.num_nodes();
    let mut trip = Vec::with_capacity(9 * tri.num_triangles());
    for (t, nodes) in tri.triangles.iter().enumerate() {
        let (g, area) = tri.gradients(t);
        let c = local_advection(&g, area, velocity_at(velocity, nodes));
        for a in 0..3 {
            for b in 0..3 {
                trip.push((nodes[a], nodes[b], c[a][b]));
            }
        }
    }
    Ok(SparseOperator::from_triplets(n, n, trip, false))
}

/// Matrix-free `out = C(v) y`.
pub fn advection_apply(tri: &Triangulation, v: &VectorField, y: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (t, nodes) in tri.triangles.iter().enumerate() {
        let (g, area) = tri.gradients(t);
        let c = local_advection(&g, area, velocity_at(v, nodes));
        let yl = nodes.map(|k| y[k]);
        for a in 0..3 {
            out[nodes[a]] += c[a][0] * yl[0] + c[a][1] * yl[1] + c[a][2] * yl[2];
        }
    }
}

/// Matrix-free `out = C(v)^T p`.
pub fn advection_apply_transpose(tri: &Triangulation, v: &VectorField, p: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (t, nodes) in tri.triangles.iter().enumerate() {
        let (g, area) = tri.gradients(t);
        let c = local_advection(&g, area, velocity_at(v, nodes));
        let pl = nodes.map(|k| p[k]);
        for b in 0..3 {
            out[nodes[b]] += c[0][b] * pl[0] + c[1][b] * pl[1] + c[2][b] * pl[2];
        }
    }
}

/// Operators `D_c y = \int (d y / d x_c) phi_i`, so that `C(v) = v_1 D_1 + v_2 D_2` for constant `v`.
pub fn derivative_operators(tri: &Triangulation) -> [SparseOperator; 2] {
    let n = tri.num_nodes();
    let mut trips = [Vec::new(), Vec::new()];
    for (t, nodes) in tri.triangles.iter().enumerate() {
        let (g, area) = tri.gradients(t);
        for a in 0..3 {
            for b in 0..3 {
                for (c, trip) in trips.iter_mut().enumerate() {
                    trip.push((nodes[a], nodes[b], area / 3.0 * g[b][c]));
                }
            }
        }
    }
    let [t0, t1] = trips;
    [
        SparseOperator::from_triplets(n, n, t0, false),
        SparseOperator::from_triplets(n, n, t1, false),
    ]
}

/// Divergence coupling `B`: rows are interior coarse nodes, columns velocity dofs,
/// `B[q, (c, i)] = -\int phi_i d(psi_q)/dx_c`.
pub fn assemble_divergence_coupling(mesh: &TwoLevelMesh) -> SparseOperator {
    let fine = &mesh.fine;
    let coarse = &mesh.coarse;
    let nf = fine.num_nodes();
    let map = interior_dof_map(mesh, Level::Coarse);
    let mut trip = Vec::new();
    for (t, nodes) in fine.triangles.iter().enumerate() {
        let area = fine.signed_area(t);
        let ct = containing_coarse_triangle(fine, coarse, nodes);
        let (gc, _) = coarse.gradients(ct);
        let cnodes = coarse.triangles[ct];
        for (k, &qnode) in cnodes.iter().enumerate() {
            let Some(q) = map.node_to_dof[qnode] else {
                continue;
            };
            for &i in nodes {
                for c in 0..2 {
                    trip.push((q, c * nf + i, -area / 3.0 * gc[k][c]));
                }
            }
        }
    }
    SparseOperator::from_triplets(map.len(), 2 * nf, trip, false)
}

/// Index of the coarse triangle containing the fine triangle with the given nodes.
fn containing_coarse_triangle(fine: &Triangulation, coarse: &Triangulation, nodes: &[usize; 3]) -> usize {
    let cx = nodes.iter().map(|&k| fine.nodes[k][0]).sum::<f64>() / 3.0;
    let cy = nodes.iter().map(|&k| fine.nodes[k][1]).sum::<f64>() / 3.0;
    let n = coarse.cells;
    let fx = cx * n as f64;
    let fy = cy * n as f64;
    let i = (fx.floor() as usize).min(n - 1);
    let j = (fy.floor() as usize).min(n - 1);
    let (lx, ly) = (fx - i as f64, fy - j as f64);
    let square = j * n + i;
    if lx > ly {
        2 * square
    } else {
        2 * square + 1
    }
}

/// Coarse stiffness restricted to interior coarse nodes.
pub fn assemble_coarse_laplacian(mesh: &TwoLevelMesh) -> SparseOperator {
    let k = stiffness_matrix(&mesh.coarse);
    let map = interior_dof_map(mesh, Level::Coarse);
    k.submatrix(&map.dof_to_node, &map.dof_to_node)
}

/// Coarse mass restricted to interior coarse nodes.
pub fn assemble_coarse_mass(mesh: &TwoLevelMesh) -> SparseOperator {
    let m = mass_matrix(&mesh.coarse);
    let map = interior_dof_map(mesh, Level::Coarse);
    m.submatrix(&map.dof_to_node, &map.dof_to_node)
}

/// Load vector of the field `p grad y`: `G_c[i] = \int p (dy/dx_c) phi_i`, exact for P1 data.
pub fn product_gradient_load(tri: &Triangulation, p: &[f64], y: &[f64]) -> VectorField {
    let n = tri.num_nodes();
    let mut out = VectorField::zeros(n);
    for (t, nodes) in tri.triangles.iter().enumerate() {
        let (g, area) = tri.gradients(t);
        let yl = nodes.map(|k| y[k]);
        let grad = [
            g[0][0] * yl[0] + g[1][0] * yl[1] + g[2][0] * yl[2],
            g[0][1] * yl[0] + g[1][1] * yl[1] + g[2][1] * yl[2],
        ];
        let pl = nodes.map(|k| p[k]);
        for a in 0..3 {
            let mp = area / 12.0
                * (LOCAL_MASS[a][0] * pl[0] + LOCAL_MASS[a][1] * pl[1] + LOCAL_MASS[a][2] * pl[2]);
            out.x[nodes[a]] += mp * grad[0];
            out.y[nodes[a]] += mp * grad[1];
        }
    }
    out
}

/// `(\int y dp/dx_1, \int y dp/dx_2)`, exact for P1 data.
pub fn field_times_gradient_integral(tri: &Triangulation, y: &[f64], p: &[f64]) -> [f64; 2] {
    let mut acc = [0.0; 2];
    for (t, nodes) in tri.triangles.iter().enumerate() {
        let (g, area) = tri.gradients(t);
        let pl = nodes.map(|k| p[k]);
        let ybar = area / 3.0 * nodes.iter().map(|&k| y[k]).sum::<f64>();
        for (c, a) in acc.iter_mut().enumerate() {
            *a += ybar * (g[0][c] * pl[0] + g[1][c] * pl[1] + g[2][c] * pl[2]);
        }
    }
    acc
}

/// `u^T M v` for nodal vectors.
pub fn mass_inner(m: &SparseOperator, u: &[f64], v: &[f64]) -> f64 {
    let mv = m.mul_vec(v);
    crate::linalg::dot(u, &mv)
}

/// `(u, v)` in `L^2(Omega)^2` with the consistent mass matrix.
pub fn vector_mass_inner(m: &SparseOperator, u: &VectorField, v: &VectorField) -> f64 {
    mass_inner(m, &u.x, &v.x) + mass_inner(m, &u.y, &v.y)
}
