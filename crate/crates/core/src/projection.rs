//! Projection of fine velocity fields onto the discretely divergence-free subspace.
//!
//! Solves the saddle-point system
//!
//! ```text
//! M g = b + B^T lambda,    B g = 0
//! ```
//!
//! where `M` is the fine vector mass matrix and `B` couples velocities to the
//! interior coarse pressure space. The Schur complement `B M^{-1} B^T` is
//! solved by conjugate gradients preconditioned with the coarse Dirichlet
//! Laplacian.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_coarse_laplacian, assemble_coarse_mass, assemble_divergence_coupling, mass_matrix,
    vector_mass_inner, VectorField,
};
use crate::linalg::{dot, DenseLu, EnvelopeCholesky};
use crate::mesh::TwoLevelMesh;
use crate::sparse::SparseOperator;

/// Inner product defining the preconditioner and stopping norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerProduct {
    /// `\int grad r . grad q` (coarse Laplacian).
    #[default]
    H1,
    /// `\int r q` (coarse mass). Converges slowly; diagnostic only.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSettings {
    pub tol: f64,
    pub max_inner: usize,
    pub inner_product: InnerProduct,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_inner: 200,
            inner_product: InnerProduct::H1,
        }
    }
}

/// Result of one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub g: VectorField,
    pub multiplier: Vec<f64>,
    pub iterations: usize,
    pub residual_ratio: f64,
}

/// Factorizations shared by all projections on one mesh. Immutable after construction.
pub struct ProjectionWorkspace {
    pub settings: ProjectionSettings,
    pub mass: SparseOperator,
    mass_factor: EnvelopeCholesky,
    precond: SparseOperator,
    precond_factor: EnvelopeCholesky,
    pub coupling: SparseOperator,
    coupling_t: SparseOperator,
    nodes: usize,
}

impl ProjectionWorkspace {
    pub fn new(mesh: &TwoLevelMesh, settings: ProjectionSettings) -> Result<Self> {
        if !(settings.tol > 0.0) || settings.max_inner == 0 {
            return Err(Error::InvalidArgument(
                "projection needs tol > 0 and max_inner >= 1".into(),
            ));
        }
        let mass = mass_matrix(&mesh.fine);
        let mass_factor = EnvelopeCholesky::new(&mass)?;
        let precond = match settings.inner_product {
            InnerProduct::H1 => assemble_coarse_laplacian(mesh),
            InnerProduct::L2 => assemble_coarse_mass(mesh),
        };
        let precond_factor = EnvelopeCholesky::new(&precond)?;
        let coupling = assemble_divergence_coupling(mesh);
        let coupling_t = coupling.transpose();
        Ok(Self {
            settings,
            mass,
            mass_factor,
            precond,
            precond_factor,
            coupling,
            coupling_t,
            nodes: mesh.fine.num_nodes(),
        })
    }

    pub fn num_multipliers(&self) -> usize {
        self.coupling.rows()
    }

    /// `M^{-1}` applied to both components of a flat velocity vector.
    fn mass_solve(&self, flat: &[f64]) -> VectorField {
        let n = self.nodes;
        let mut x = flat[..n].to_vec();
        let mut y = flat[n..].to_vec();
        self.mass_factor.solve_pair_in_place(&mut x, &mut y);
        VectorField { x, y }
    }

    fn divergence(&self, g: &VectorField) -> Vec<f64> {
        self.coupling.mul_vec(&g.to_flat())
    }

    /// Discrete divergence `B g` of a fine field.
    pub fn divergence_residual(&self, g: &VectorField) -> Vec<f64> {
        self.divergence(g)
    }

    /// Projects the field `v` (as a function): the load is `M v`.
    pub fn project(&self, v: &VectorField, lambda0: Option<&[f64]>) -> Result<Projection> {
        let load = VectorField {
            x: self.mass.mul_vec(&v.x),
            y: self.mass.mul_vec(&v.y),
        };
        self.project_load(&load, lambda0)
    }

    /// Solves the saddle-point system for a given load `b` (component-wise nodal moments).
    pub fn project_load(&self, load: &VectorField, lambda0: Option<&[f64]>) -> Result<Projection> {
        if load.len() != self.nodes {
            return Err(Error::DimensionMismatch {
                expected: self.nodes,
                got: load.len(),
            });
        }
        let m = self.num_multipliers();
        let mut lambda = match lambda0 {
            Some(l) if l.len() != m => {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: l.len(),
                })
            }
            Some(l) => l.to_vec(),
            None => vec![0.0; m],
        };
        let mut rhs = load.to_flat();
        if lambda.iter().any(|&v| v != 0.0) {
            let bt = self.coupling_t.mul_vec(&lambda);
            for (r, b) in rhs.iter_mut().zip(&bt) {
                *r += b;
            }
        }
        let mut g = self.mass_solve(&rhs);
        // Bg is kept as the Laplacian-side residual, r solves P r = Bg
        let mut bg = self.divergence(&g);
        let mut r = bg.clone();
        self.precond_factor.solve_in_place(&mut r);
        let mut rr = dot(&r, &bg);
        let lam_norm = dot(&lambda, &self.precond.mul_vec(&lambda));
        let first = rr / lam_norm.max(1.0);
        if !(first.is_finite()) {
            return Err(Error::Instability { step: 0 });
        }
        if first <= self.settings.tol {
            return Ok(Projection {
                g,
                multiplier: lambda,
                iterations: 0,
                residual_ratio: first,
            });
        }
        let scale = rr.max(1.0);
        let mut w = r.clone();
        let mut ratio = first;
        for k in 1..=self.settings.max_inner {
            let gbar = self.mass_solve(&self.coupling_t.mul_vec(&w));
            let bgbar = self.divergence(&gbar);
            let mut rbar = bgbar.clone();
            self.precond_factor.solve_in_place(&mut rbar);
            let denom = dot(&w, &bgbar);
            if !(denom > 0.0) {
                return Err(Error::NoConvergence {
                    iterations: k,
                    ratio,
                });
            }
            let eta = rr / denom;
            for (l, wi) in lambda.iter_mut().zip(&w) {
                *l -= eta * wi;
            }
            g.axpy(-eta, &gbar);
            for (a, b) in bg.iter_mut().zip(&bgbar) {
                *a -= eta * b;
            }
            for (a, b) in r.iter_mut().zip(&rbar) {
                *a -= eta * b;
            }
            let rr_new = dot(&r, &bg);
            ratio = rr_new / scale;
            if ratio <= self.settings.tol {
                return Ok(Projection {
                    g,
                    multiplier: lambda,
                    iterations: k,
                    residual_ratio: ratio,
                });
            }
            let gamma = rr_new / rr;
            rr = rr_new;
            for (wi, ri) in w.iter_mut().zip(&r) {
                *wi = ri + gamma * *wi;
            }
        }
        Err(Error::NoConvergence {
            iterations: self.settings.max_inner,
            ratio,
        })
    }

    /// `|g|_M` for fine fields.
    pub fn mass_norm(&self, g: &VectorField) -> f64 {
        vector_mass_inner(&self.mass, g, g).max(0.0).sqrt()
    }
}

/// Largest fine level accepted by [`dense_saddle_oracle`].
pub const ORACLE_MAX_LEVEL: u32 = 4;

/// Projects `v` by a dense direct solve of the saddle-point system.
pub fn dense_saddle_oracle(mesh: &TwoLevelMesh, v: &VectorField) -> Result<VectorField> {
    let m = mass_matrix(&mesh.fine);
    let load = VectorField {
        x: m.mul_vec(&v.x),
        y: m.mul_vec(&v.y),
    };
    dense_saddle_oracle_load(mesh, &load)
}

/// Dense direct solve of `[[M, -B^T], [B, 0]] [g; lambda] = [b; 0]`.
pub fn dense_saddle_oracle_load(mesh: &TwoLevelMesh, load: &VectorField) -> Result<VectorField> {
    if mesh.level > ORACLE_MAX_LEVEL {
        return Err(Error::InvalidArgument(format!(
            "dense oracle refuses level {} (max {ORACLE_MAX_LEVEL})",
            mesh.level
        )));
    }
    let n = mesh.fine.num_nodes();
    if load.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: load.len(),
        });
    }
    let m = mass_matrix(&mesh.fine).to_dense();
    let b = assemble_divergence_coupling(mesh).to_dense();
    let q = b.len();
    let dim = 2 * n + q;
    let mut a = vec![vec![0.0; dim]; dim];
    for c in 0..2 {
        for i in 0..n {
            for j in 0..n {
                a[c * n + i][c * n + j] = m[i][j];
            }
        }
    }
    for (k, row) in b.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            a[2 * n + k][j] = v;
            a[j][2 * n + k] = -v;
        }
    }
    let lu = DenseLu::new(a)?;
    let mut x = load.to_flat();
    x.resize(dim, 0.0);
    lu.solve_in_place(&mut x);
    x.truncate(2 * n);
    Ok(VectorField::from_flat(&x))
}
