//! Construction of the vector polynomial basis of (P_k)^2 as gradients of
//! degree-(k+1) scalars plus an orthogonal complement, for the three basis
//! approaches.
//!
//! The gradient part is encoded by a coefficient matrix built from the
//! scalar derivative matrices; the complement part is a euclidean
//! orthonormal basis of its nullspace obtained from a singular value
//! decomposition. The full-orthonormal approach additionally applies a
//! modified Gram-Schmidt pass to the gradient coefficients, which is
//! hierarchical and therefore keeps the internal-moment functions of the
//! lower degree orthonormal as well.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::scalar_basis::{poly_dim, DerivativeMatrices, ScalarBasis};
use crate::Approach;

/// Singular values below this factor times the largest are treated as zero
/// when extracting the nullspace.
pub const NULLSPACE_THRESHOLD: f64 = 1e-12;

/// Dimension of the gradient part of (P_k)^2.
pub fn n_nabla(k: usize) -> usize {
    poly_dim(k) + k + 1
}

/// Dimension of the complement part of (P_k)^2.
pub fn n_perp(k: usize) -> usize {
    poly_dim(k) - (k + 1)
}

/// Coefficient operators of the vector basis of one element at one degree.
#[derive(Clone, Debug)]
pub struct VectorBasisOperators {
    pub approach: Approach,
    pub k: usize,
    /// n_nabla(k) x 2 n_k coefficients of the gradient fields.
    pub t_nabla: DMatrix<f64>,
    /// n_perp(k) x 2 n_k euclidean-orthonormal nullspace rows.
    pub t_perp: DMatrix<f64>,
    /// Lower-triangular transform of the gradient orthonormalization;
    /// identity unless the approach is Ortho.
    pub l_nabla: DMatrix<f64>,
    /// Its inverse, the transposed R factor of the Gram-Schmidt pass.
    pub l_nabla_inv: DMatrix<f64>,
    /// 2 n_k x 2 n_k vector mass matrix.
    pub g: DMatrix<f64>,
}

impl VectorBasisOperators {
    /// Builds the operators for the element whose working scalar basis and
    /// interior rule are given. The scalar basis must be built at degree
    /// k+1 at least.
    pub fn build(
        scalar: &ScalarBasis,
        geometry: &crate::mesh::ElementGeometry,
        rule: &QuadratureRule,
        k: usize,
    ) -> Result<Self> {
        if scalar.degree < k + 1 {
            return Err(Error::InvalidState(format!(
                "scalar basis built at degree {} cannot serve a degree-{k} vector basis",
                scalar.degree
            )));
        }
        let deriv = scalar.derivative_matrices(geometry, k)?;
        let mut t_nabla = build_t_nabla(&deriv);
        let nn = n_nabla(k);
        let mut l_nabla = DMatrix::identity(nn, nn);
        let mut l_nabla_inv = DMatrix::identity(nn, nn);
        if scalar.approach == Approach::Ortho {
            let (r, t_n) = orthonormalize_gradients(&t_nabla)?;
            t_nabla = t_n;
            l_nabla_inv = r.transpose();
            r.transpose()
                .solve_lower_triangular_mut(&mut l_nabla)
                .then_some(())
                .ok_or(Error::RankAnomaly {
                    expected: nn,
                    found: 0,
                })?;
        }
        let t_perp = svd_nullspace(&t_nabla, n_perp(k))?;
        let scalar_v = scalar.vandermonde(geometry, &rule.points, k);
        let g = mass_matrix_g(&t_nabla, &t_perp, rule, &scalar_v);
        Ok(VectorBasisOperators {
            approach: scalar.approach,
            k,
            t_nabla,
            t_perp,
            l_nabla,
            l_nabla_inv,
            g,
        })
    }

    /// Stacked coefficient matrix [T_nabla; T_perp], square of size 2 n_k.
    pub fn t_full(&self) -> DMatrix<f64> {
        let nk2 = 2 * poly_dim(self.k);
        let mut t = DMatrix::zeros(nk2, nk2);
        t.view_mut((0, 0), (self.t_nabla.nrows(), nk2))
            .copy_from(&self.t_nabla);
        t.view_mut((self.t_nabla.nrows(), 0), (self.t_perp.nrows(), nk2))
            .copy_from(&self.t_perp);
        t
    }
}

/// Gradient coefficient rows: the derivative matrices of the degree-(k+1)
/// working basis with the constant row dropped, x block then y block.
pub fn build_t_nabla(deriv: &DerivativeMatrices) -> DMatrix<f64> {
    let n_hi = deriv.dx.nrows();
    let n_lo = deriv.dx.ncols();
    let mut t = DMatrix::zeros(n_hi - 1, 2 * n_lo);
    t.view_mut((0, 0), (n_hi - 1, n_lo))
        .copy_from(&deriv.dx.view((1, 0), (n_hi - 1, n_lo)));
    t.view_mut((0, n_lo), (n_hi - 1, n_lo))
        .copy_from(&deriv.dy.view((1, 0), (n_hi - 1, n_lo)));
    t
}

/// Euclidean-orthonormal basis of the nullspace of `t_nabla`, as rows.
///
/// Rows are equilibrated to unit norm first (row scaling preserves the
/// nullspace and keeps the decomposition accurate when gradient rows have
/// very different magnitudes, as on thin elements), and the matrix is
/// padded to square so the decomposition carries the full right singular
/// space; the rows associated with near-zero singular values are
/// returned. Exactly `expected` such values must exist.
pub fn svd_nullspace(t_nabla: &DMatrix<f64>, expected: usize) -> Result<DMatrix<f64>> {
    let cols = t_nabla.ncols();
    if expected == 0 {
        return Ok(DMatrix::zeros(0, cols));
    }
    let mut padded = DMatrix::zeros(cols, cols);
    padded
        .view_mut((0, 0), (t_nabla.nrows(), cols))
        .copy_from(t_nabla);
    for r in 0..t_nabla.nrows() {
        let norm = padded.row(r).norm();
        if norm > 0.0 {
            for c in 0..cols {
                padded[(r, c)] /= norm;
            }
        }
    }
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma_max = svd.singular_values.amax();
    let small: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= NULLSPACE_THRESHOLD * sigma_max)
        .collect();
    if small.len() != expected {
        return Err(Error::RankAnomaly {
            expected,
            found: small.len(),
        });
    }
    let mut t_perp = DMatrix::zeros(expected, cols);
    for (row, &i) in small.iter().enumerate() {
        t_perp.row_mut(row).copy_from(&v_t.row(i));
    }
    Ok(t_perp)
}

/// Row-orthonormalizes the gradient coefficients by one modified
/// Gram-Schmidt pass on the transpose. Returns the upper-triangular R
/// factor and the orthonormalized coefficient matrix Q^T, which equals
/// R^{-T} times the input.
pub fn orthonormalize_gradients(t_nabla: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (q, r) = crate::scalar_basis::mgs(&t_nabla.transpose())?;
    Ok((r, q.transpose()))
}

/// Vector-basis Vandermonde: x-component rows stacked over y-component
/// rows, gradient columns then complement columns.
pub fn gbasis_vandermonde(
    t_nabla: &DMatrix<f64>,
    t_perp: &DMatrix<f64>,
    scalar_v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n_k = scalar_v.ncols();
    if t_nabla.ncols() != 2 * n_k || t_perp.ncols() != 2 * n_k {
        return Err(Error::DimensionMismatch(format!(
            "coefficient matrices have {} columns, scalar Vandermonde implies {}",
            t_nabla.ncols(),
            2 * n_k
        )));
    }
    let n_pts = scalar_v.nrows();
    let n_cols = t_nabla.nrows() + t_perp.nrows();
    let mut gv = DMatrix::zeros(2 * n_pts, n_cols);
    for (offset, t) in [(0usize, t_nabla), (t_nabla.nrows(), t_perp)] {
        for j in 0..t.nrows() {
            for i in 0..n_pts {
                let mut vx = 0.0;
                let mut vy = 0.0;
                for a in 0..n_k {
                    vx += scalar_v[(i, a)] * t[(j, a)];
                    vy += scalar_v[(i, a)] * t[(j, n_k + a)];
                }
                gv[(i, offset + j)] = vx;
                gv[(n_pts + i, offset + j)] = vy;
            }
        }
    }
    Ok(gv)
}

/// Vector mass matrix G = T H T^T with H the scalar working-basis mass
/// matrix duplicated over both components.
pub fn mass_matrix_g(
    t_nabla: &DMatrix<f64>,
    t_perp: &DMatrix<f64>,
    rule: &QuadratureRule,
    scalar_v: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n_k = scalar_v.ncols();
    let mut h = DMatrix::zeros(n_k, n_k);
    for (i, &w) in rule.weights.iter().enumerate() {
        for a in 0..n_k {
            let wa = w * scalar_v[(i, a)];
            for b in a..n_k {
                h[(a, b)] += wa * scalar_v[(i, b)];
            }
        }
    }
    for a in 0..n_k {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    let rows = t_nabla.nrows() + t_perp.nrows();
    let cols = t_nabla.ncols();
    let mut t = DMatrix::zeros(rows, cols);
    t.view_mut((0, 0), (t_nabla.nrows(), cols)).copy_from(t_nabla);
    t.view_mut((t_nabla.nrows(), 0), (t_perp.nrows(), cols))
        .copy_from(t_perp);
    // Apply blockdiag(H, H) columnwise.
    let mut th = DMatrix::zeros(rows, cols);
    th.view_mut((0, 0), (rows, n_k))
        .copy_from(&(t.view((0, 0), (rows, n_k)) * &h));
    th.view_mut((0, n_k), (rows, n_k))
        .copy_from(&(t.view((0, n_k), (rows, n_k)) * &h));
    &th * t.transpose()
}
