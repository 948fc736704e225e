//! Scaled monomial basis, graded monomial indexing, derivative matrices and
//! the double modified Gram-Schmidt orthonormalization.
//!
//! The working pressure basis is always built at degree k+1 and truncated
//! hierarchically: the coefficient matrix of the degree-k basis is the
//! leading block of the degree-(k+1) one, because the Gram-Schmidt process
//! treats columns in order.

use nalgebra::{DMatrix, Point2};

use crate::error::{Error, Result};
use crate::mesh::ElementGeometry;
use crate::Approach;

/// Relative pivot threshold below which a basis is reported rank-deficient
/// instead of being silently regularized.
pub const RANK_THRESHOLD: f64 = 1e-14;

/// Dimension of the polynomial space of total degree <= k.
pub fn poly_dim(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// 1-based linear index of the exponent pair in graded ordering, x-power
/// descending within each degree block: (0,0), (1,0), (0,1), (2,0), ...
pub fn monomial_index(alpha_x: usize, alpha_y: usize) -> usize {
    let d = alpha_x + alpha_y;
    d * (d + 1) / 2 + alpha_y + 1
}

/// Exponent pairs of all monomials of total degree <= k, in graded order.
pub fn monomial_exponents(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(poly_dim(k));
    for d in 0..=k {
        for ay in 0..=d {
            out.push((d - ay, ay));
        }
    }
    out
}

/// Vandermonde matrix of the scaled monomials of degree <= k: entry (i, a)
/// is ((x_i - x_C) / h_E)^a.
pub fn monomial_vandermonde(
    geometry: &ElementGeometry,
    points: &[Point2<f64>],
    k: usize,
) -> DMatrix<f64> {
    let exps = monomial_exponents(k);
    let mut v = DMatrix::zeros(points.len(), exps.len());
    for (i, p) in points.iter().enumerate() {
        let sx = (p.x - geometry.centroid.x) / geometry.diameter;
        let sy = (p.y - geometry.centroid.y) / geometry.diameter;
        // Powers up to k, computed incrementally.
        let mut px = vec![1.0; k + 1];
        let mut py = vec![1.0; k + 1];
        for d in 1..=k {
            px[d] = px[d - 1] * sx;
            py[d] = py[d - 1] * sy;
        }
        for (j, &(ax, ay)) in exps.iter().enumerate() {
            v[(i, j)] = px[ax] * py[ay];
        }
    }
    v
}

/// Expansion coefficients of the partial derivatives of the degree-(k+1)
/// basis members in the degree-k basis.
#[derive(Clone, Debug)]
pub struct DerivativeMatrices {
    /// n_{k+1} x n_k
    pub dx: DMatrix<f64>,
    /// n_{k+1} x n_k
    pub dy: DMatrix<f64>,
}

/// Derivative matrices of the scaled monomials:
/// d/dx of (a_x, a_y) is (a_x / h_E) times (a_x - 1, a_y).
pub fn monomial_derivative_matrices(geometry: &ElementGeometry, k: usize) -> DerivativeMatrices {
    let n_hi = poly_dim(k + 1);
    let n_lo = poly_dim(k);
    let mut dx = DMatrix::zeros(n_hi, n_lo);
    let mut dy = DMatrix::zeros(n_hi, n_lo);
    let h = geometry.diameter;
    for (row, &(ax, ay)) in monomial_exponents(k + 1).iter().enumerate() {
        if ax > 0 {
            dx[(row, monomial_index(ax - 1, ay) - 1)] = ax as f64 / h;
        }
        if ay > 0 {
            dy[(row, monomial_index(ax, ay - 1) - 1)] = ay as f64 / h;
        }
    }
    DerivativeMatrices { dx, dy }
}

/// Modified Gram-Schmidt factorization A = Q R with euclidean columns.
///
/// Fails if a diagonal entry of R drops below `RANK_THRESHOLD` times the
/// largest one seen so far.
pub fn mgs(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let mut q = a.clone();
    let mut r = DMatrix::zeros(n, n);
    for j in 0..n {
        // Columns carry very different natural scales (high powers on thin
        // elements), so dependence is judged against the column's own norm.
        let initial_norm = q.column(j).norm();
        for i in 0..j {
            let dot = q.column(i).dot(&q.column(j));
            r[(i, j)] = dot;
            for row in 0..m {
                q[(row, j)] -= dot * q[(row, i)];
            }
        }
        let norm = q.column(j).norm();
        if norm < RANK_THRESHOLD * initial_norm {
            return Err(Error::RankDeficient {
                column: j,
                pivot: norm,
                threshold: RANK_THRESHOLD * initial_norm,
            });
        }
        r[(j, j)] = norm;
        for row in 0..m {
            q[(row, j)] /= norm;
        }
    }
    Ok((q, r))
}

/// The working pressure basis of one element: a lower-triangular
/// coefficient matrix L mapping scaled monomials to the working basis
/// (identity in the monomial approach), built at degree k+1.
#[derive(Clone, Debug)]
pub struct ScalarBasis {
    pub approach: Approach,
    /// The basis is built at this degree (k+1 for a degree-k run).
    pub degree: usize,
    /// n_{degree} x n_{degree}, lower triangular by construction.
    pub l: DMatrix<f64>,
}

impl ScalarBasis {
    /// Monomial working basis: L is the identity.
    pub fn monomial(degree: usize) -> Self {
        ScalarBasis {
            approach: Approach::Monomial,
            degree,
            l: DMatrix::identity(poly_dim(degree), poly_dim(degree)),
        }
    }

    /// L2-orthonormal working basis via a double modified Gram-Schmidt
    /// pass on the monomial Vandermonde matrix of the element's interior
    /// rule.
    ///
    /// The first pass orthonormalizes the columns in the euclidean sense;
    /// the second, applied to the weight-scaled result, delivers the
    /// L2(E) orthonormality with an error independent of the condition
    /// number of the Vandermonde matrix.
    pub fn mgs_orthonormalize(
        approach: Approach,
        degree: usize,
        vandermonde: &DMatrix<f64>,
        weights: &[f64],
    ) -> Result<Self> {
        let n = poly_dim(degree);
        if vandermonde.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Vandermonde has {} columns, expected {n}",
                vandermonde.ncols()
            )));
        }
        if vandermonde.nrows() < n {
            return Err(Error::InvalidArgument(format!(
                "need at least {n} quadrature points for a degree-{degree} basis, got {}",
                vandermonde.nrows()
            )));
        }
        let (q1, r1) = mgs(vandermonde)?;
        let mut scaled = q1;
        for (i, &w) in weights.iter().enumerate() {
            let sw = w.sqrt();
            for j in 0..n {
                scaled[(i, j)] *= sw;
            }
        }
        let (_, r2) = mgs(&scaled)?;
        // L = (R2 R1)^{-T}: solve (R2 R1)^T L = I with a forward sweep.
        let r = r2 * r1;
        let mut l = DMatrix::identity(n, n);
        r.transpose()
            .solve_lower_triangular_mut(&mut l)
            .then_some(())
            .ok_or(Error::RankDeficient {
                column: 0,
                pivot: 0.0,
                threshold: 0.0,
            })?;
        Ok(ScalarBasis {
            approach,
            degree,
            l,
        })
    }

    /// Coefficient matrix of the degree-k working basis (leading block).
    pub fn l_block(&self, k: usize) -> DMatrix<f64> {
        let n = poly_dim(k);
        self.l.view((0, 0), (n, n)).into()
    }

    /// Working-basis Vandermonde at the given points for degree k <= built
    /// degree: the monomial Vandermonde times the leading L block
    /// transposed.
    pub fn vandermonde(
        &self,
        geometry: &ElementGeometry,
        points: &[Point2<f64>],
        k: usize,
    ) -> DMatrix<f64> {
        let mv = monomial_vandermonde(geometry, points, k);
        if self.approach == Approach::Monomial {
            return mv;
        }
        mv * self.l_block(k).transpose()
    }

    /// Derivative matrices of the working basis at degree k+1 <= built
    /// degree, from the monomial ones by the similarity transform
    /// L^{k+1} D (L^k)^{-1}.
    pub fn derivative_matrices(
        &self,
        geometry: &ElementGeometry,
        k: usize,
    ) -> Result<DerivativeMatrices> {
        let mono = monomial_derivative_matrices(geometry, k);
        if self.approach == Approach::Monomial {
            return Ok(mono);
        }
        let l_hi = self.l_block(k + 1);
        let l_lo = self.l_block(k);
        Ok(DerivativeMatrices {
            dx: transform_derivative(&l_hi, &l_lo, &mono.dx)?,
            dy: transform_derivative(&l_hi, &l_lo, &mono.dy)?,
        })
    }
}

/// L^{k+1} D (L^k)^{-1}, applying the inverse by triangular solve.
fn transform_derivative(
    l_hi: &DMatrix<f64>,
    l_lo: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let tmp = l_hi * d;
    // X L^k = tmp  <=>  (L^k)^T X^T = tmp^T (upper triangular solve).
    let mut xt = tmp.transpose();
    l_lo.transpose()
        .solve_upper_triangular_mut(&mut xt)
        .then_some(())
        .ok_or(Error::RankDeficient {
            column: 0,
            pivot: 0.0,
            threshold: 0.0,
        })?;
    Ok(xt.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{self, BoundaryTag};
    use crate::quadrature;
    use approx::assert_relative_eq;
    use nalgebra::Point2;

    fn geometry(nx: usize, ny: usize, w: f64, h: f64) -> (mesh::PolygonalMesh, ElementGeometry) {
        let m = mesh::build_rectangle_grid(nx, ny, w, h).unwrap();
        let g = mesh::element_geometry(&m, 0).unwrap();
        (m, g)
    }

    #[test]
    fn monomial_index_examples() {
        assert_eq!(monomial_index(0, 0), 1);
        assert_eq!(monomial_index(1, 0), 2);
        assert_eq!(monomial_index(0, 1), 3);
        assert_eq!(monomial_index(2, 0), 4);
        assert_eq!(monomial_index(0, 2), 6);
        assert_eq!(monomial_index(3, 0), 7);
    }

    #[test]
    fn monomial_index_is_bijection() {
        for k in 0..=8usize {
            let mut seen = vec![false; poly_dim(k)];
            for (ax, ay) in monomial_exponents(k) {
                let idx = monomial_index(ax, ay);
                assert!(idx >= 1 && idx <= poly_dim(k));
                assert!(!seen[idx - 1]);
                seen[idx - 1] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn vandermonde_constant_column_and_centroid_row() {
        let (_, g) = geometry(1, 1, 1.0, 1.0);
        let pts = vec![Point2::new(0.3, 0.9), g.centroid];
        let v = monomial_vandermonde(&g, &pts, 2);
        for i in 0..pts.len() {
            assert_relative_eq!(v[(i, 0)], 1.0, epsilon = 1e-15);
        }
        for j in 1..poly_dim(2) {
            assert_relative_eq!(v[(1, j)], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn vandermonde_corner_point_unit_square() {
        let (_, g) = geometry(1, 1, 1.0, 1.0);
        let v = monomial_vandermonde(&g, &[Point2::new(1.0, 1.0)], 1);
        let h = 2.0_f64.sqrt();
        assert_relative_eq!(v[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(v[(0, 1)], 0.5 / h, epsilon = 1e-15);
        assert_relative_eq!(v[(0, 2)], 0.5 / h, epsilon = 1e-15);
    }

    #[test]
    fn derivative_matrices_k0() {
        let (_, g) = geometry(1, 1, 1.0, 1.0);
        let d = monomial_derivative_matrices(&g, 0);
        let h = g.diameter;
        assert_eq!(d.dx.shape(), (3, 1));
        assert_relative_eq!(d.dx[(0, 0)], 0.0);
        assert_relative_eq!(d.dx[(1, 0)], 1.0 / h, epsilon = 1e-15);
        assert_relative_eq!(d.dx[(2, 0)], 0.0);
        assert_relative_eq!(d.dy[(0, 0)], 0.0);
        assert_relative_eq!(d.dy[(1, 0)], 0.0);
        assert_relative_eq!(d.dy[(2, 0)], 1.0 / h, epsilon = 1e-15);
    }

    #[test]
    fn derivative_matrix_xy_monomial() {
        let (_, g) = geometry(1, 1, 1.0, 1.0);
        let d = monomial_derivative_matrices(&g, 1);
        let row = monomial_index(1, 1) - 1;
        let col = monomial_index(0, 1) - 1;
        assert_relative_eq!(d.dx[(row, col)], 1.0 / g.diameter, epsilon = 1e-15);
    }

    fn interior_rule(
        m: &mesh::PolygonalMesh,
        g: &ElementGeometry,
        degree: usize,
    ) -> quadrature::QuadratureRule {
        quadrature::polygon_rule(g, &m.cell_vertices(g.cell), degree).unwrap()
    }

    fn mgs_basis(
        m: &mesh::PolygonalMesh,
        g: &ElementGeometry,
        degree: usize,
    ) -> (ScalarBasis, quadrature::QuadratureRule) {
        let rule = interior_rule(m, g, 2 * degree + 2);
        let v = monomial_vandermonde(g, &rule.points, degree);
        let basis =
            ScalarBasis::mgs_orthonormalize(Approach::Partial, degree, &v, &rule.weights).unwrap();
        (basis, rule)
    }

    #[test]
    fn mgs_constant_on_unit_measure_element() {
        let (m, g) = geometry(1, 1, 1.0, 1.0);
        let (basis, _) = mgs_basis(&m, &g, 0);
        assert_relative_eq!(basis.l[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn mgs_constant_scales_with_area() {
        let (m, g) = geometry(1, 1, 2.0, 2.0);
        let (basis, _) = mgs_basis(&m, &g, 0);
        assert_relative_eq!(basis.l[(0, 0)].abs(), 0.5, epsilon = 1e-14);
    }

    fn gram_error(basis: &ScalarBasis, g: &ElementGeometry, rule: &quadrature::QuadratureRule) -> f64 {
        let v = basis.vandermonde(g, &rule.points, basis.degree);
        let n = v.ncols();
        let mut h = DMatrix::zeros(n, n);
        for (i, &w) in rule.weights.iter().enumerate() {
            for a in 0..n {
                for b in 0..n {
                    h[(a, b)] += w * v[(i, a)] * v[(i, b)];
                }
            }
        }
        (h - DMatrix::identity(n, n)).amax()
    }

    #[test]
    fn mgs_gram_identity_unit_square_degree3() {
        let (m, g) = geometry(1, 1, 1.0, 1.0);
        let (basis, rule) = mgs_basis(&m, &g, 3);
        assert!(gram_error(&basis, &g, &rule) <= 1e-12);
    }

    #[test]
    fn mgs_gram_identity_aspect_ratio_100() {
        let m = mesh::build_rectangle_grid(1, 1, 0.1, 0.001).unwrap();
        let g = mesh::element_geometry(&m, 0).unwrap();
        for degree in [3usize, 6, 9] {
            let rule = interior_rule(&m, &g, 2 * degree + 2);
            let v = monomial_vandermonde(&g, &rule.points, degree);
            let basis =
                ScalarBasis::mgs_orthonormalize(Approach::Partial, degree, &v, &rule.weights)
                    .unwrap();
            assert!(
                gram_error(&basis, &g, &rule) <= 1e-12,
                "degree {degree} Gram error too large"
            );
        }
    }

    #[test]
    fn mgs_hierarchy() {
        let (m, g) = geometry(1, 1, 1.0, 1.0);
        let rule = interior_rule(&m, &g, 12);
        let v_hi = monomial_vandermonde(&g, &rule.points, 4);
        let v_lo = monomial_vandermonde(&g, &rule.points, 3);
        let hi = ScalarBasis::mgs_orthonormalize(Approach::Partial, 4, &v_hi, &rule.weights)
            .unwrap();
        let lo = ScalarBasis::mgs_orthonormalize(Approach::Partial, 3, &v_lo, &rule.weights)
            .unwrap();
        assert_relative_eq!(hi.l_block(3), lo.l, epsilon = 1e-13);
    }

    #[test]
    fn mgs_rank_deficiency_reported() {
        // Duplicate columns are exactly dependent.
        let mut v = DMatrix::zeros(5, 2);
        for i in 0..5 {
            v[(i, 0)] = i as f64 + 1.0;
            v[(i, 1)] = 2.0 * (i as f64 + 1.0);
        }
        assert!(matches!(
            mgs(&v),
            Err(Error::RankDeficient { column: 1, .. })
        ));
    }

    #[test]
    fn derivative_consistency_random_points() {
        // The Dx/Dy expansion must reproduce the analytic derivative of the
        // working basis; checked against central finite differences.
        let (m, g) = geometry(1, 1, 1.0, 1.0);
        let k = 2usize;
        let (basis, _) = mgs_basis(&m, &g, k + 1);
        let d = basis.derivative_matrices(&g, k).unwrap();
        let step = 1e-6 * g.diameter;
        let mut rng_x = 0.17_f64;
        let mut rng_y = 0.71_f64;
        for _ in 0..20 {
            // Cheap deterministic point sequence inside the square.
            rng_x = (rng_x * 31.0 + 0.3).fract();
            rng_y = (rng_y * 17.0 + 0.7).fract();
            let p = Point2::new(rng_x, rng_y);
            let px = basis.vandermonde(&g, &[Point2::new(p.x + step, p.y)], k + 1);
            let mx = basis.vandermonde(&g, &[Point2::new(p.x - step, p.y)], k + 1);
            let py = basis.vandermonde(&g, &[Point2::new(p.x, p.y + step)], k + 1);
            let my = basis.vandermonde(&g, &[Point2::new(p.x, p.y - step)], k + 1);
            let v_lo = basis.vandermonde(&g, &[p], k);
            for a in 0..poly_dim(k + 1) {
                let fd_x = (px[(0, a)] - mx[(0, a)]) / (2.0 * step);
                let fd_y = (py[(0, a)] - my[(0, a)]) / (2.0 * step);
                let mut ex = 0.0;
                let mut ey = 0.0;
                for b in 0..poly_dim(k) {
                    ex += d.dx[(a, b)] * v_lo[(0, b)];
                    ey += d.dy[(a, b)] * v_lo[(0, b)];
                }
                let scale = ex.abs().max(ey.abs()).max(1.0);
                assert!((fd_x - ex).abs() <= 1e-6 * scale);
                assert!((fd_y - ey).abs() <= 1e-6 * scale);
            }
        }
    }

    #[test]
    fn constant_row_of_derivatives_is_zero() {
        let (m, g) = geometry(2, 3, 1.0, 1.0);
        let (basis, _) = mgs_basis(&m, &g, 3);
        let d = basis.derivative_matrices(&g, 2).unwrap();
        for b in 0..poly_dim(2) {
            assert_relative_eq!(d.dx[(0, b)], 0.0, epsilon = 1e-13);
            assert_relative_eq!(d.dy[(0, b)], 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn monomial_transform_is_identity() {
        let (m, g) = geometry(1, 1, 1.0, 1.0);
        let _ = m;
        let basis = ScalarBasis::monomial(3);
        let d = basis.derivative_matrices(&g, 2).unwrap();
        let mono = monomial_derivative_matrices(&g, 2);
        assert_relative_eq!(d.dx, mono.dx, epsilon = 1e-15);
        assert_relative_eq!(d.dy, mono.dy, epsilon = 1e-15);
    }
}
