//! Global DOF numbering, assembly of the saddle-point system with edge
//! orientation signs, flux boundary elimination, and the sparse direct
//! solve.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::local::{ElementContext, LocalMatrices};
use crate::mesh::{BoundaryTag, PolygonalMesh};
use crate::problems::ProblemData;
use crate::scalar_basis::poly_dim;

/// Global numbering: per-edge flux DOFs first, then per-cell internal
/// velocity moments, then per-cell pressure coefficients.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub k: usize,
    pub n_edges: usize,
    pub n_cells: usize,
    /// Internal velocity DOFs per cell (gradient + complement moments).
    pub n_internal: usize,
    pub n_velocity: usize,
    pub n_total: usize,
}

impl DofMap {
    pub fn new(mesh: &PolygonalMesh, k: usize) -> Self {
        let layout = crate::local::DofLayout::new(k, 3);
        let n_internal = layout.n_grad + layout.n_perp;
        let n_edges = mesh.n_edges();
        let n_cells = mesh.n_cells();
        let n_velocity = n_edges * (k + 1) + n_cells * n_internal;
        DofMap {
            k,
            n_edges,
            n_cells,
            n_internal,
            n_velocity,
            n_total: n_velocity + n_cells * poly_dim(k),
        }
    }

    pub fn edge_dof(&self, edge: usize, g: usize) -> usize {
        edge * (self.k + 1) + g
    }

    pub fn internal_base(&self, cell: usize) -> usize {
        self.n_edges * (self.k + 1) + cell * self.n_internal
    }

    pub fn pressure_base(&self, cell: usize) -> usize {
        self.n_velocity + cell * poly_dim(self.k)
    }

    /// Global index and orientation sign of a local DOF (velocity or
    /// pressure) of one cell.
    pub fn global_of(
        &self,
        mesh: &PolygonalMesh,
        cell: usize,
        local: usize,
        n_local_velocity: usize,
    ) -> (usize, f64) {
        let per_edge = self.k + 1;
        let n_edge_dofs = mesh.cells[cell].len() * per_edge;
        if local < n_edge_dofs {
            let (edge, sigma) = mesh.cell_edges[cell][local / per_edge];
            (self.edge_dof(edge, local % per_edge), sigma)
        } else if local < n_local_velocity {
            (self.internal_base(cell) + (local - n_edge_dofs), 1.0)
        } else {
            (self.pressure_base(cell) + (local - n_local_velocity), 1.0)
        }
    }
}

/// Outcome of the global solve; failures are reported as data so sweeps
/// can continue past ill-conditioned configurations.
#[derive(Clone, Debug, PartialEq)]
pub enum SolverStatus {
    Solved,
    Failed(String),
}

impl SolverStatus {
    pub fn is_solved(&self) -> bool {
        *self == SolverStatus::Solved
    }
}

/// Per-cell solution: local velocity DOF values (element-outward
/// convention) and pressure coefficients in the cell's working basis.
pub struct SolutionFields {
    pub velocity: Vec<DVector<f64>>,
    pub pressure: Vec<DVector<f64>>,
    pub status: SolverStatus,
    pub n_dofs: usize,
    /// Relative residual of the solved linear system.
    pub residual: f64,
}

/// Relative residual above which a factorization result is reported as a
/// failure.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

/// Assembles and solves the global saddle-point system. The per-element
/// contexts and local systems must be in cell order.
pub fn solve(
    mesh: &PolygonalMesh,
    contexts: &[ElementContext],
    locals: &[LocalMatrices],
    problem: &ProblemData,
) -> Result<SolutionFields> {
    let k = contexts
        .first()
        .map(|c| c.k)
        .ok_or_else(|| Error::InvalidArgument("empty mesh".into()))?;
    let map = DofMap::new(mesh, k);
    let n = map.n_total;

    // Flux boundary DOFs are eliminated: fixed to the flux datum sampled
    // at the edge Gauss points against the global (outward) normal.
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.tag != BoundaryTag::Neumann {
            continue;
        }
        let (a, b) = mesh.edge_endpoints(e);
        let rule = crate::quadrature::edge_rule(&a, &b, k)?;
        for (g, p) in rule.points.iter().enumerate() {
            fixed[map.edge_dof(e, g)] = Some((problem.neumann)(*p, edge.normal));
        }
    }

    let mut rhs = DVector::zeros(n);
    let mut triplets: Vec<faer::sparse::Triplet<usize, usize, f64>> =
        Vec::with_capacity(locals.iter().map(|l| l.ke.len()).sum());
    for (cell, local) in locals.iter().enumerate() {
        let ctx = &contexts[cell];
        let n_local_v = ctx.layout.total();
        let n_local = n_local_v + poly_dim(k);
        let globals: Vec<(usize, f64)> = (0..n_local)
            .map(|i| map.global_of(mesh, cell, i, n_local_v))
            .collect();
        for i in 0..n_local {
            let (gi, si) = globals[i];
            if fixed[gi].is_some() {
                continue;
            }
            rhs[gi] += si * local.rhs[i];
            for j in 0..n_local {
                let (gj, sj) = globals[j];
                let value = si * sj * local.ke[(i, j)];
                if value == 0.0 {
                    continue;
                }
                match fixed[gj] {
                    Some(v) => rhs[gi] -= value * v,
                    None => triplets.push(faer::sparse::Triplet::new(gi, gj, value)),
                }
            }
        }
    }
    for (i, f) in fixed.iter().enumerate() {
        if let Some(v) = f {
            triplets.push(faer::sparse::Triplet::new(i, i, 1.0));
            rhs[i] = *v;
        }
    }

    let matrix =
        faer::sparse::SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::SolverFailure(format!("sparse assembly: {e:?}")))?;

    let mut x = DVector::zeros(n);
    let status = match factor_and_solve(&matrix, &rhs, &mut x) {
        Ok(()) => {
            let residual = relative_residual(&matrix, &x, &rhs);
            if residual <= RESIDUAL_TOLERANCE {
                SolverStatus::Solved
            } else {
                SolverStatus::Failed(format!("relative residual {residual:.3e}"))
            }
        }
        Err(msg) => SolverStatus::Failed(msg),
    };
    let residual = relative_residual(&matrix, &x, &rhs);

    // Gather per-cell local fields (orientation signs applied back).
    let mut velocity = Vec::with_capacity(mesh.n_cells());
    let mut pressure = Vec::with_capacity(mesh.n_cells());
    for (cell, ctx) in contexts.iter().enumerate() {
        let n_local_v = ctx.layout.total();
        let mut v = DVector::zeros(n_local_v);
        for i in 0..n_local_v {
            let (gi, si) = map.global_of(mesh, cell, i, n_local_v);
            v[i] = si * x[gi];
        }
        velocity.push(v);
        let base = map.pressure_base(cell);
        pressure.push(DVector::from_fn(poly_dim(k), |a, _| x[base + a]));
    }

    Ok(SolutionFields {
        velocity,
        pressure,
        status,
        n_dofs: n,
        residual,
    })
}

fn factor_and_solve(
    matrix: &faer::sparse::SparseColMat<usize, f64>,
    rhs: &DVector<f64>,
    x: &mut DVector<f64>,
) -> std::result::Result<(), String> {
    use faer::linalg::solvers::Solve;
    let symbolic =
        faer::sparse::linalg::solvers::SymbolicLu::try_new(matrix.symbolic())
            .map_err(|e| format!("symbolic LU: {e:?}"))?;
    let lu =
        faer::sparse::linalg::solvers::Lu::try_new_with_symbolic(symbolic, matrix.as_ref())
            .map_err(|e| format!("sparse LU: {e:?}"))?;
    let b = faer::Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let sol = lu.solve(&b);
    for i in 0..rhs.len() {
        x[i] = sol[(i, 0)];
        if !x[i].is_finite() {
            return Err("non-finite solution entry".into());
        }
    }
    Ok(())
}

fn relative_residual(
    matrix: &faer::sparse::SparseColMat<usize, f64>,
    x: &DVector<f64>,
    rhs: &DVector<f64>,
) -> f64 {
    let n = rhs.len();
    let xf = faer::Mat::from_fn(n, 1, |i, _| x[i]);
    let ax = matrix * &xf;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..n {
        num += (ax[(i, 0)] - rhs[i]).powi(2);
        den += rhs[i].powi(2);
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local;
    use crate::problems;
    use crate::Approach;
    use approx::assert_relative_eq;

    fn solve_patch(
        approach: Approach,
        k: usize,
        degree: usize,
        nx: usize,
    ) -> (PolygonalMesh, Vec<ElementContext>, SolutionFields) {
        let mesh = crate::mesh::build_rectangle_grid(nx, nx, 1.0, 1.0).unwrap();
        let problem = problems::harmonic_patch(degree).unwrap();
        let contexts: Vec<_> = (0..mesh.n_cells())
            .map(|c| ElementContext::new(&mesh, c, approach, k).unwrap())
            .collect();
        let locals: Vec<_> = contexts
            .iter()
            .map(|ctx| local::local_system(ctx, &mesh, &problem).unwrap())
            .collect();
        let fields = solve(&mesh, &contexts, &locals, &problem).unwrap();
        (mesh, contexts, fields)
    }

    #[test]
    fn dof_map_counts() {
        let mesh = crate::mesh::build_rectangle_grid(2, 2, 1.0, 1.0).unwrap();
        let map = DofMap::new(&mesh, 1);
        // 12 edges * 2 + 4 cells * (2 grad + 1 perp) + 4 cells * 3 pressure.
        assert_eq!(map.n_velocity, 24 + 12);
        assert_eq!(map.n_total, 36 + 12);
    }

    #[test]
    fn constant_patch_is_exact() {
        // p = 1, u = 0: pressure must be reproduced exactly at k=0.
        let (mesh, contexts, fields) = solve_patch(Approach::Monomial, 0, 0, 2);
        assert!(fields.status.is_solved());
        for c in 0..mesh.n_cells() {
            // Constant basis value is 1 (scaled monomial), so the
            // coefficient equals the pressure value.
            assert_relative_eq!(fields.pressure[c][0], 1.0, epsilon = 1e-10);
            assert!(fields.velocity[c].amax() <= 1e-10);
        }
        let _ = contexts;
    }

    #[test]
    fn linear_patch_velocity_dofs_exact() {
        // p = x + 2y, u = -(1, 2): edge DOFs must equal u.n exactly.
        let (mesh, contexts, fields) = solve_patch(Approach::Partial, 1, 1, 2);
        assert!(fields.status.is_solved());
        for (c, ctx) in contexts.iter().enumerate() {
            let exact = ctx.interpolate_dofs(|_, _| nalgebra::Vector2::new(-1.0, -2.0));
            let err = (&fields.velocity[c] - exact).amax();
            assert!(err <= 1e-9, "cell {c}: {err:.3e}");
        }
        let _ = mesh;
    }

    #[test]
    fn quadratic_patch_pressure_pointwise() {
        let (mesh, contexts, fields) = solve_patch(Approach::Ortho, 2, 2, 2);
        assert!(fields.status.is_solved());
        for (c, ctx) in contexts.iter().enumerate() {
            for (i, p) in ctx.interior.points.iter().enumerate() {
                let mut ph = 0.0;
                for a in 0..poly_dim(2) {
                    ph += ctx.pv_interior[(i, a)] * fields.pressure[c][a];
                }
                let exact = p.x * p.x - p.y * p.y;
                assert!(
                    (ph - exact).abs() <= 1e-9,
                    "cell {c} point {i}: {ph} vs {exact}"
                );
            }
        }
        let _ = mesh;
    }

    #[test]
    fn flux_continuity_across_interior_edges() {
        // The same global DOF seen from both cells must produce opposite
        // outward fluxes, i.e. sigma-consistent local values.
        let (mesh, contexts, fields) = solve_patch(Approach::Monomial, 1, 2, 2);
        for (e, edge) in mesh.edges.iter().enumerate() {
            let (Some(c0), Some(c1)) = (edge.cells[0], edge.cells[1]) else {
                continue;
            };
            for g in 0..=1usize {
                let locals: Vec<f64> = [c0, c1]
                    .iter()
                    .map(|&c| {
                        let le = mesh.cell_edges[c]
                            .iter()
                            .position(|&(ge, _)| ge == e)
                            .unwrap();
                        let sigma = mesh.cell_edges[c][le].1;
                        sigma * fields.velocity[c][contexts[c].layout.edge_dof(le, g)]
                    })
                    .collect();
                assert_relative_eq!(locals[0], locals[1], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn neumann_dofs_take_flux_datum() {
        let (mesh, contexts, fields) = solve_patch(Approach::Partial, 1, 2, 2);
        let problem = problems::harmonic_patch(2).unwrap();
        for (c, ctx) in contexts.iter().enumerate() {
            for (le, &(ge, sigma)) in mesh.cell_edges[c].iter().enumerate() {
                if mesh.edges[ge].tag != BoundaryTag::Neumann {
                    continue;
                }
                for g in 0..=1usize {
                    let i = ctx.layout.edge_dof(le, g);
                    let p = ctx.edge_points[i];
                    let expected = sigma * (problem.neumann)(p, mesh.edges[ge].normal);
                    assert_relative_eq!(fields.velocity[c][i], expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_mesh_rejected() {
        let mesh = crate::mesh::build_rectangle_grid(1, 1, 1.0, 1.0).unwrap();
        let problem = problems::harmonic_patch(0).unwrap();
        assert!(solve(&mesh, &[], &[], &problem).is_err());
    }
}
