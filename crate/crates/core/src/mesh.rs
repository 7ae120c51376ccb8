//! Nested uniform triangulations of the unit square.
//!
//! The fine mesh at `level` has `2^level` cells per side; the coarse mesh has
//! half as many. Both levels split every grid square along the diagonal from
//! its lower-left to its upper-right corner, so each coarse triangle is the
//! union of four fine triangles obtained by joining its edge midpoints.
//! Nodes are numbered lexicographically by `(y, x)`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// A 2D point.
pub type Point = [f64; 2];

/// Selects one of the two levels of a [`TwoLevelMesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fine,
    Coarse,
}

/// A single structured triangulation of the unit square.
#[derive(Debug, Clone)]
pub struct Triangulation {
    /// Cells per side.
    pub cells: usize,
    pub nodes: Vec<Point>,
    /// Counterclockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
}

impl Triangulation {
    fn uniform(cells: usize) -> Self {
        let side = cells + 1;
        let mut nodes = Vec::with_capacity(side * side);
        let mut boundary = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                nodes.push([i as f64 / cells as f64, j as f64 / cells as f64]);
                boundary.push(i == 0 || j == 0 || i == cells || j == cells);
            }
        }
        let mut triangles = Vec::with_capacity(2 * cells * cells);
        for j in 0..cells {
            for i in 0..cells {
                let a = j * side + i;
                let b = a + 1;
                let c = a + side + 1;
                let d = a + side;
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Self {
            cells,
            nodes,
            triangles,
            boundary,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Mesh size (leg length of the right triangles).
    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Signed area of triangle `t`.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Node id of grid point `(i, j)`.
    pub fn node_at(&self, i: usize, j: usize) -> usize {
        j * (self.cells + 1) + i
    }

    /// Number of distinct edges.
    pub fn num_edges(&self) -> usize {
        let n = self.cells;
        // horizontal + vertical + diagonal
        2 * n * (n + 1) + n * n
    }

    /// Gradients of the three barycentric coordinates and the area of triangle `t`.
    pub fn gradients(&self, t: usize) -> ([[f64; 2]; 3], f64) {
        let [a, b, c] = self.triangles[t];
        let p = [self.nodes[a], self.nodes[b], self.nodes[c]];
        let area = self.signed_area(t);
        let inv = 1.0 / (2.0 * area);
        let mut g = [[0.0; 2]; 3];
        for k in 0..3 {
            let pj = p[(k + 1) % 3];
            let pk = p[(k + 2) % 3];
            g[k] = [(pj[1] - pk[1]) * inv, (pk[0] - pj[0]) * inv];
        }
        (g, area)
    }
}

/// Coarse and fine triangulations with the coarse-to-fine node embedding.
#[derive(Debug, Clone)]
pub struct TwoLevelMesh {
    pub level: u32,
    pub fine: Triangulation,
    pub coarse: Triangulation,
    pub coarse_to_fine: Vec<usize>,
}

impl TwoLevelMesh {
    pub fn get(&self, which: Level) -> &Triangulation {
        match which {
            Level::Fine => &self.fine,
            Level::Coarse => &self.coarse,
        }
    }

    /// Fine mesh size `h = 1 / 2^level`.
    pub fn h(&self) -> f64 {
        self.fine.h()
    }

    /// Plain-text node and element listing, for debugging.
    pub fn dump(&self, which: Level) -> String {
        let tri = self.get(which);
        let mut out = String::new();
        let _ = writeln!(out, "nodes {}", tri.num_nodes());
        for (k, p) in tri.nodes.iter().enumerate() {
            let _ = writeln!(out, "{k} {:.17e} {:.17e} {}", p[0], p[1], tri.boundary[k] as u8);
        }
        let _ = writeln!(out, "triangles {}", tri.num_triangles());
        for (k, t) in tri.triangles.iter().enumerate() {
            let _ = writeln!(out, "{k} {} {} {}", t[0], t[1], t[2]);
        }
        out
    }
}

/// Builds the nested pair of meshes with fine size `h = 1/2^level`.
pub fn build_unit_square_mesh(level: u32) -> Result<TwoLevelMesh> {
    if level < 2 {
        return Err(Error::InvalidArgument(format!(
            "mesh level must be at least 2, got {level}"
        )));
    }
    if level > 12 {
        return Err(Error::InvalidArgument(format!(
            "mesh level {level} is too large"
        )));
    }
    let n = 1usize << level;
    let fine = Triangulation::uniform(n);
    let coarse = Triangulation::uniform(n / 2);
    let coarse_to_fine = (0..coarse.num_nodes())
        .map(|c| {
            let side = n / 2 + 1;
            let (i, j) = (c % side, c / side);
            fine.node_at(2 * i, 2 * j)
        })
        .collect();
    Ok(TwoLevelMesh {
        level,
        fine,
        coarse,
        coarse_to_fine,
    })
}

/// Bijection between interior nodes and contiguous equation indices.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// `node_to_dof[node]` is `None` on the boundary.
    pub node_to_dof: Vec<Option<usize>>,
    pub dof_to_node: Vec<usize>,
}

impl DofMap {
    pub fn len(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_node.is_empty()
    }

    /// Restricts a nodal vector to the interior dofs.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.dof_to_node.iter().map(|&n| nodal[n]).collect()
    }

    /// Writes interior values back into a nodal vector, leaving boundary entries untouched.
    pub fn scatter(&self, dofs: &[f64], nodal: &mut [f64]) {
        for (d, &n) in self.dof_to_node.iter().enumerate() {
            nodal[n] = dofs[d];
        }
    }

    /// Nodal vector of length `num_nodes` with zero boundary values.
    pub fn extend_zero(&self, dofs: &[f64], num_nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_nodes];
        self.scatter(dofs, &mut out);
        out
    }
}

pub fn interior_dof_map(mesh: &TwoLevelMesh, which: Level) -> DofMap {
    let tri = mesh.get(which);
    let mut node_to_dof = vec![None; tri.num_nodes()];
    let mut dof_to_node = Vec::new();
    for (k, &b) in tri.boundary.iter().enumerate() {
        if !b {
            node_to_dof[k] = Some(dof_to_node.len());
            dof_to_node.push(k);
        }
    }
    DofMap {
        node_to_dof,
        dof_to_node,
    }
}
