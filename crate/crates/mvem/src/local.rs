//! Per-element assembly: the divergence pairing W, the projection pair
//! (B, Pi), the DOF-of-polynomial matrix D, diffusion consistency and
//! stabilization, advection and reaction matrices, and the local block
//! system with its right-hand sides.
//!
//! Everything here is expressed with element-outward normals; the global
//! assembler applies the per-edge orientation signs when scattering.

use nalgebra::{DMatrix, DVector, Point2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{ElementGeometry, PolygonalMesh};
use crate::problems::ProblemData;
use crate::quadrature::{self, QuadratureRule};
use crate::scalar_basis::{poly_dim, ScalarBasis};
use crate::vector_basis::{self, VectorBasisOperators};
use crate::Approach;

/// Degree-of-freedom bookkeeping for one element: edge DOFs first (per
/// edge, Gauss-point order), then internal gradient moments, then
/// internal complement moments.
#[derive(Clone, Copy, Debug)]
pub struct DofLayout {
    pub k: usize,
    pub n_edges: usize,
    /// Internal gradient-moment count n^nabla_{k-1} (zero at k = 0).
    pub n_grad: usize,
    /// Internal complement-moment count n^perp_k.
    pub n_perp: usize,
}

impl DofLayout {
    pub fn new(k: usize, n_edges: usize) -> Self {
        DofLayout {
            k,
            n_edges,
            n_grad: if k == 0 { 0 } else { poly_dim(k) - 1 },
            n_perp: vector_basis::n_perp(k),
        }
    }

    pub fn n_edge_dofs(&self) -> usize {
        self.n_edges * (self.k + 1)
    }

    pub fn grad_offset(&self) -> usize {
        self.n_edge_dofs()
    }

    pub fn perp_offset(&self) -> usize {
        self.n_edge_dofs() + self.n_grad
    }

    pub fn total(&self) -> usize {
        self.n_edge_dofs() + self.n_grad + self.n_perp
    }

    /// Local index of Gauss-point `g` on local edge `e`.
    pub fn edge_dof(&self, e: usize, g: usize) -> usize {
        e * (self.k + 1) + g
    }
}

/// Everything needed to assemble one element: bases, quadrature rules and
/// precomputed Vandermonde matrices.
pub struct ElementContext {
    pub approach: Approach,
    pub k: usize,
    pub geometry: ElementGeometry,
    pub layout: DofLayout,
    /// Working scalar basis, built at degree k+1.
    pub scalar: ScalarBasis,
    /// Interior rule, exact to degree 2(k+1)+2.
    pub interior: QuadratureRule,
    /// Edge Gauss points in DOF order (global edge direction).
    pub edge_points: Vec<Point2<f64>>,
    pub edge_weights: Vec<f64>,
    /// Element-outward unit normal at each edge point.
    pub edge_normals: Vec<Vector2<f64>>,
    /// Vector basis operators at degree k.
    pub ops: VectorBasisOperators,
    /// Vector basis operators at degree k-1, absent at k = 0.
    pub ops_lo: Option<VectorBasisOperators>,
    /// Working scalar basis at the interior points, degree k+1.
    pub pv_interior: DMatrix<f64>,
    /// Working scalar basis at the edge points, degree k+1.
    pub pv_edge: DMatrix<f64>,
    /// Degree-(k+1) working-basis mass matrix under the interior rule.
    pub h_full: DMatrix<f64>,
    /// Vector basis fields at the interior points.
    pub gv_interior: DMatrix<f64>,
    /// Vector basis fields at the edge points.
    pub gv_edge: DMatrix<f64>,
}

impl ElementContext {
    pub fn new(
        mesh: &PolygonalMesh,
        cell: usize,
        approach: Approach,
        k: usize,
    ) -> Result<Self> {
        let geometry = crate::mesh::element_geometry(mesh, cell)?;
        let vertices = mesh.cell_vertices(cell);
        let interior = quadrature::polygon_rule(&geometry, &vertices, 2 * (k + 1) + 2)?;

        let scalar = match approach {
            Approach::Monomial => ScalarBasis::monomial(k + 1),
            _ => {
                let v = crate::scalar_basis::monomial_vandermonde(
                    &geometry,
                    &interior.points,
                    k + 1,
                );
                ScalarBasis::mgs_orthonormalize(approach, k + 1, &v, &interior.weights)?
            }
        };

        let layout = DofLayout::new(k, mesh.cells[cell].len());
        let mut edge_points = Vec::with_capacity(layout.n_edge_dofs());
        let mut edge_weights = Vec::with_capacity(layout.n_edge_dofs());
        let mut edge_normals = Vec::with_capacity(layout.n_edge_dofs());
        for (local_e, &(ge, _)) in mesh.cell_edges[cell].iter().enumerate() {
            let (a, b) = mesh.edge_endpoints(ge);
            let rule = quadrature::edge_rule(&a, &b, k)?;
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                edge_points.push(*p);
                edge_weights.push(*w);
                edge_normals.push(geometry.outward_normals[local_e]);
            }
        }

        let ops = VectorBasisOperators::build(&scalar, &geometry, &interior, k)?;
        let ops_lo = if k > 0 {
            Some(VectorBasisOperators::build(&scalar, &geometry, &interior, k - 1)?)
        } else {
            None
        };

        let pv_interior = scalar.vandermonde(&geometry, &interior.points, k + 1);
        let pv_edge = scalar.vandermonde(&geometry, &edge_points, k + 1);
        let mut h_full = DMatrix::zeros(poly_dim(k + 1), poly_dim(k + 1));
        for (i, &w) in interior.weights.iter().enumerate() {
            for a in 0..poly_dim(k + 1) {
                let wa = w * pv_interior[(i, a)];
                for b in a..poly_dim(k + 1) {
                    h_full[(a, b)] += wa * pv_interior[(i, b)];
                }
            }
        }
        for a in 0..poly_dim(k + 1) {
            for b in 0..a {
                h_full[(a, b)] = h_full[(b, a)];
            }
        }

        let sv_int =
            DMatrix::from(pv_interior.view((0, 0), (interior.len(), poly_dim(k))));
        let gv_interior =
            vector_basis::gbasis_vandermonde(&ops.t_nabla, &ops.t_perp, &sv_int)?;
        let sv_edge = DMatrix::from(pv_edge.view((0, 0), (edge_points.len(), poly_dim(k))));
        let gv_edge = vector_basis::gbasis_vandermonde(&ops.t_nabla, &ops.t_perp, &sv_edge)?;

        Ok(ElementContext {
            approach,
            k,
            geometry,
            layout,
            scalar,
            interior,
            edge_points,
            edge_weights,
            edge_normals,
            ops,
            ops_lo,
            pv_interior,
            pv_edge,
            h_full,
            gv_interior,
            gv_edge,
        })
    }

    /// Degree-k working-basis mass matrix (leading block of the full one).
    pub fn h_k(&self) -> DMatrix<f64> {
        let n = poly_dim(self.k);
        DMatrix::from(self.h_full.view((0, 0), (n, n)))
    }

    /// DOF vector of an explicit vector field: edge normal values plus
    /// scaled internal moments against the basis fields.
    pub fn interpolate_dofs(&self, f: impl Fn(f64, f64) -> Vector2<f64>) -> DVector<f64> {
        let n = self.layout.total();
        let mut dofs = DVector::zeros(n);
        for (i, p) in self.edge_points.iter().enumerate() {
            dofs[i] = f(p.x, p.y).dot(&self.edge_normals[i]);
        }
        let area = self.geometry.area;
        let n_pts = self.interior.len();
        if let Some(ops_lo) = &self.ops_lo {
            let off = self.layout.grad_offset();
            for a in 0..self.layout.n_grad {
                let mut m = 0.0;
                for (i, (p, &w)) in self
                    .interior
                    .points
                    .iter()
                    .zip(&self.interior.weights)
                    .enumerate()
                {
                    let n_lo = poly_dim(self.k - 1);
                    let mut gx = 0.0;
                    let mut gy = 0.0;
                    for b in 0..n_lo {
                        gx += self.pv_interior[(i, b)] * ops_lo.t_nabla[(a, b)];
                        gy += self.pv_interior[(i, b)] * ops_lo.t_nabla[(a, n_lo + b)];
                    }
                    let v = f(p.x, p.y);
                    m += w * (v.x * gx + v.y * gy);
                }
                dofs[off + a] = m / area;
            }
        }
        let off = self.layout.perp_offset();
        let grad_cols = self.ops.t_nabla.nrows();
        for a in 0..self.layout.n_perp {
            let mut m = 0.0;
            for (i, p) in self.interior.points.iter().enumerate() {
                let v = f(p.x, p.y);
                let col = grad_cols + a;
                m += self.interior.weights[i]
                    * (v.x * self.gv_interior[(i, col)]
                        + v.y * self.gv_interior[(n_pts + i, col)]);
            }
            dofs[off + a] = m / area;
        }
        dofs
    }

    /// Divergence pairing W: moments of the divergence of each DOF basis
    /// function against the degree-k pressure basis, by Gauss-Green.
    pub fn assemble_w(&self) -> DMatrix<f64> {
        let n_k = poly_dim(self.k);
        let n = self.layout.total();
        let mut w = DMatrix::zeros(n_k, n);
        // Boundary part: the integrand is a degree-2k polynomial per edge,
        // integrated exactly by the k+1-point rule.
        for (i, &wq) in self.edge_weights.iter().enumerate() {
            for a in 0..n_k {
                w[(a, i)] += wq * self.pv_edge[(i, a)];
            }
        }
        // Interior part: -|E| times the expansion of the gradients of the
        // non-constant pressure polynomials in the internal moment fields.
        if let Some(ops_lo) = &self.ops_lo {
            let off = self.layout.grad_offset();
            match self.approach {
                Approach::Ortho => {
                    // The gradients are recovered through the inverse of
                    // the orthonormalizing transform.
                    let inv = &ops_lo.l_nabla_inv;
                    for a in 0..self.layout.n_grad {
                        for b in 0..=a {
                            w[(a + 1, off + b)] -= self.geometry.area * inv[(a, b)];
                        }
                    }
                }
                _ => {
                    for a in 0..self.layout.n_grad {
                        w[(a + 1, off + a)] -= self.geometry.area;
                    }
                }
            }
        }
        w
    }

    /// Divergence coefficients Lambda: expansion of the divergence of each
    /// DOF basis function in the pressure basis, solving H^k Lambda = W.
    /// The solve collapses to the identity in the orthonormal approaches.
    pub fn divergence_coefficients(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.approach {
            Approach::Monomial => {
                let h = self.h_k();
                solve_spd(&h, w).ok_or_else(|| {
                    Error::SolverFailure(format!(
                        "singular pressure mass matrix at degree {} on cell {}",
                        self.k, self.geometry.cell
                    ))
                })
            }
            _ => Ok(w.clone()),
        }
    }

    /// Projection right-hand side B with its gradient and complement
    /// blocks.
    pub fn assemble_b(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n_k = poly_dim(self.k);
        let n_hi = poly_dim(self.k + 1);
        let n_grad_rows = vector_basis::n_nabla(self.k);
        let n = self.layout.total();
        let mut b = DMatrix::zeros(2 * n_k, n);

        // Gradient block by Gauss-Green: interior term through the
        // divergence coefficients, boundary term exact per edge.
        let lambda = self.divergence_coefficients(w)?;
        let h_block = self.h_full.view((1, 0), (n_hi - 1, n_k));
        let mut b_grad = -(h_block * &lambda);
        for (i, &wq) in self.edge_weights.iter().enumerate() {
            for a in 0..n_grad_rows {
                b_grad[(a, i)] += wq * self.pv_edge[(i, a + 1)];
            }
        }
        if self.approach == Approach::Ortho {
            b_grad = &self.ops.l_nabla * b_grad;
        }
        b.view_mut((0, 0), (n_grad_rows, n)).copy_from(&b_grad);

        // Complement block: plain scaled moments.
        let off = self.layout.perp_offset();
        for a in 0..self.layout.n_perp {
            b[(n_grad_rows + a, off + a)] = self.geometry.area;
        }
        Ok(b)
    }

    /// L2 projection coefficients: G Pi = B.
    pub fn assemble_pi(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.approach == Approach::Ortho {
            return Ok(b.clone());
        }
        solve_spd(&self.ops.g, b).ok_or_else(|| {
            let cond = crate::diagnostics::condition_number(&self.ops.g);
            Error::IllConditioned { cond }
        })
    }

    /// DOF-of-polynomial matrix D: each row is the DOF vector of a vector
    /// basis field.
    pub fn assemble_d(&self) -> DMatrix<f64> {
        let n_k = poly_dim(self.k);
        let n = self.layout.total();
        let n_pts = self.edge_points.len();
        let mut d = DMatrix::zeros(n, 2 * n_k);
        for i in 0..n_pts {
            let nrm = self.edge_normals[i];
            for col in 0..2 * n_k {
                d[(i, col)] =
                    nrm.x * self.gv_edge[(i, col)] + nrm.y * self.gv_edge[(n_pts + i, col)];
            }
        }
        let inv_area = 1.0 / self.geometry.area;
        let g = &self.ops.g;
        let off = self.layout.grad_offset();
        for a in 0..self.layout.n_grad {
            for col in 0..2 * n_k {
                d[(off + a, col)] = inv_area * g[(a, col)];
            }
        }
        let off = self.layout.perp_offset();
        let grad_rows = vector_basis::n_nabla(self.k);
        for a in 0..self.layout.n_perp {
            for col in 0..2 * n_k {
                d[(off + a, col)] = inv_area * g[(grad_rows + a, col)];
            }
        }
        d
    }

    /// Diffusion matrix: projection consistency term plus DOF
    /// stabilization scaled by the largest coefficient eigenvalue.
    pub fn assemble_diffusion(
        &self,
        pi: &DMatrix<f64>,
        d: &DMatrix<f64>,
        problem: &ProblemData,
    ) -> Result<DMatrix<f64>> {
        let n_k = poly_dim(self.k);
        let n_pts = self.interior.len();
        let mut g_k = DMatrix::zeros(2 * n_k, 2 * n_k);
        let mut k_bar: f64 = 0.0;
        for (i, p) in self.interior.points.iter().enumerate() {
            let kt = problem.k_tensor(p.x, p.y)?;
            let (kxx, kxy, kyy) = (kt[(0, 0)], kt[(0, 1)], kt[(1, 1)]);
            let half_tr = 0.5 * (kxx + kyy);
            let disc = (0.5 * (kxx - kyy)).hypot(kxy);
            if half_tr - disc <= 0.0 {
                return Err(Error::InvalidCoefficient { x: p.x, y: p.y });
            }
            k_bar = k_bar.max(half_tr + disc);
            let w = self.interior.weights[i];
            for a in 0..2 * n_k {
                let (ax, ay) = (self.gv_interior[(i, a)], self.gv_interior[(n_pts + i, a)]);
                let kx = kxx * ax + kxy * ay;
                let ky = kxy * ax + kyy * ay;
                for b in a..2 * n_k {
                    let v = w
                        * (kx * self.gv_interior[(i, b)]
                            + ky * self.gv_interior[(n_pts + i, b)]);
                    g_k[(a, b)] += v;
                    if b != a {
                        g_k[(b, a)] += v;
                    }
                }
            }
        }
        let k_c = pi.transpose() * g_k * pi;
        let n = self.layout.total();
        let residual = DMatrix::identity(n, n) - d * pi;
        let k_s = residual.transpose() * &residual * (k_bar * self.geometry.area);
        Ok(k_c + k_s)
    }

    /// Advection pairing (beta p_a, Pi phi_i); the sign of the transport
    /// term is applied when the block system is formed.
    pub fn assemble_advection(
        &self,
        pi: &DMatrix<f64>,
        problem: &ProblemData,
    ) -> Result<DMatrix<f64>> {
        let n_k = poly_dim(self.k);
        let n_pts = self.interior.len();
        let mut m = DMatrix::zeros(2 * n_k, n_k);
        for (i, p) in self.interior.points.iter().enumerate() {
            let beta = problem.beta(p.x, p.y)?;
            let w = self.interior.weights[i];
            for a in 0..2 * n_k {
                let flux = w
                    * (beta.x * self.gv_interior[(i, a)]
                        + beta.y * self.gv_interior[(n_pts + i, a)]);
                for c in 0..n_k {
                    m[(a, c)] += flux * self.pv_interior[(i, c)];
                }
            }
        }
        Ok(pi.transpose() * m)
    }

    /// Weighted pressure mass matrix.
    pub fn assemble_reaction(&self, problem: &ProblemData) -> DMatrix<f64> {
        let n_k = poly_dim(self.k);
        let mut h = DMatrix::zeros(n_k, n_k);
        for (i, p) in self.interior.points.iter().enumerate() {
            let wg = self.interior.weights[i] * (problem.reaction)(p.x, p.y);
            for a in 0..n_k {
                let wa = wg * self.pv_interior[(i, a)];
                for b in a..n_k {
                    h[(a, b)] += wa * self.pv_interior[(i, b)];
                }
            }
        }
        for a in 0..n_k {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }
}

/// All local matrices of one element.
pub struct LocalMatrices {
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub ka: DMatrix<f64>,
    pub tbeta: DMatrix<f64>,
    pub hgamma: DMatrix<f64>,
    /// Block system [[Ka, -W^T - Tbeta], [W, Hgamma]].
    pub ke: DMatrix<f64>,
    /// Velocity RHS (Dirichlet boundary term) followed by pressure RHS
    /// (source moments).
    pub rhs: DVector<f64>,
}

/// Assembles the complete local system of one element.
pub fn local_system(
    ctx: &ElementContext,
    mesh: &PolygonalMesh,
    problem: &ProblemData,
) -> Result<LocalMatrices> {
    let w = ctx.assemble_w();
    let lambda = ctx.divergence_coefficients(&w)?;
    let b = ctx.assemble_b(&w)?;
    let pi = ctx.assemble_pi(&b)?;
    let d = ctx.assemble_d();
    let ka = ctx.assemble_diffusion(&pi, &d, problem)?;
    let tbeta = ctx.assemble_advection(&pi, problem)?;
    let hgamma = ctx.assemble_reaction(problem);

    let n = ctx.layout.total();
    let n_k = poly_dim(ctx.k);
    let mut ke = DMatrix::zeros(n + n_k, n + n_k);
    ke.view_mut((0, 0), (n, n)).copy_from(&ka);
    let upper_right = -(w.transpose() + &tbeta);
    ke.view_mut((0, n), (n, n_k)).copy_from(&upper_right);
    ke.view_mut((n, 0), (n_k, n)).copy_from(&w);
    ke.view_mut((n, n), (n_k, n_k)).copy_from(&hgamma);

    let mut rhs = DVector::zeros(n + n_k);
    // Dirichlet boundary pairing collected edge by edge.
    let cell = ctx.geometry.cell;
    for (local_e, &(ge, _)) in mesh.cell_edges[cell].iter().enumerate() {
        if mesh.edges[ge].tag != crate::mesh::BoundaryTag::Dirichlet {
            continue;
        }
        for g in 0..=ctx.k {
            let i = ctx.layout.edge_dof(local_e, g);
            let p = ctx.edge_points[i];
            rhs[i] -= ctx.edge_weights[i] * (problem.dirichlet)(p.x, p.y);
        }
    }
    for (i, p) in ctx.interior.points.iter().enumerate() {
        let wf = ctx.interior.weights[i] * (problem.source)(p.x, p.y);
        for a in 0..n_k {
            rhs[n + a] += wf * ctx.pv_interior[(i, a)];
        }
    }

    Ok(LocalMatrices {
        w,
        b,
        pi,
        d,
        lambda,
        ka,
        tbeta,
        hgamma,
        ke,
        rhs,
    })
}

/// Symmetric positive-definite solve with an LU fallback for
/// ill-conditioned but numerically nonsingular matrices.
fn solve_spd(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Some(chol.solve(rhs));
    }
    a.clone().lu().solve(rhs)
}
