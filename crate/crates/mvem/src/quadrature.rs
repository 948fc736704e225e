//! Gauss-Legendre rules on edges and interior polygon rules obtained by a
//! centroid-fan triangulation.
//!
//! Edge quadrature points double as the edge degrees of freedom of the
//! velocity space, so the k+1 point rule on each edge is used both for
//! integration and for collocation.

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::ElementGeometry;

/// A positive quadrature rule on a 2D domain.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sum of the weights, i.e. the measure of the integration domain.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(&Point2<f64>) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// One-dimensional Gauss-Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// n-point Gauss-Legendre rule on [-1, 1], exact for degree 2n-1.
///
/// Nodes are computed by Newton iteration on the Legendre polynomial with
/// Chebyshev starting guesses.
pub fn gauss_legendre(n: usize) -> Result<GaussRule> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "gauss_legendre requires at least one point".into(),
        ));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev guess for the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(GaussRule { nodes, weights })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let j = j as f64;
        let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// k+1 Gauss points mapped affinely to the open edge (a, b).
///
/// Exact for polynomials of degree 2k+1 along the edge, which covers both
/// the degree-2k boundary integrand of the divergence pairing and the
/// degree-(2k+1) integrand of the gradient projection boundary term.
pub fn edge_rule(a: &Point2<f64>, b: &Point2<f64>, k: usize) -> Result<QuadratureRule> {
    let length = (b - a).norm();
    if length <= f64::MIN_POSITIVE.sqrt() {
        return Err(Error::DegenerateEdge(length));
    }
    let gauss = gauss_legendre(k + 1)?;
    let mid = nalgebra::center(a, b);
    let half: Vector2<f64> = (b - a) / 2.0;
    let points = gauss.nodes.iter().map(|&t| mid + half * t).collect();
    let weights = gauss.weights.iter().map(|&w| w * length / 2.0).collect();
    Ok(QuadratureRule { points, weights })
}

/// Interior rule on a polygon, exact for the requested total degree.
///
/// The polygon is fanned into triangles from its centroid; each triangle
/// carries a collapsed tensor-product Gauss rule (Duffy mapping), which
/// keeps all weights positive at any degree.
pub fn polygon_rule(
    geometry: &ElementGeometry,
    vertices: &[Point2<f64>],
    degree: usize,
) -> Result<QuadratureRule> {
    let c = geometry.centroid;
    let n = vertices.len();
    // Degree d integrands become degree d+1 in the collapsed coordinate
    // because of the Duffy Jacobian.
    let ga = gauss_legendre((degree + 2).div_ceil(2))?;
    let gb = gauss_legendre((degree + 1).div_ceil(2).max(1))?;
    let mut points = Vec::with_capacity(n * ga.nodes.len() * gb.nodes.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for i in 0..n {
        let v1 = vertices[i];
        let v2 = vertices[(i + 1) % n];
        let area2 = (v1.x - c.x) * (v2.y - c.y) - (v2.x - c.x) * (v1.y - c.y);
        if area2 <= 0.0 {
            return Err(Error::NotStarShaped {
                cell: geometry.cell,
                triangle: i,
            });
        }
        for (&na, &wa) in ga.nodes.iter().zip(&ga.weights) {
            // Map [-1,1] -> [0,1].
            let a = 0.5 * (na + 1.0);
            for (&nb, &wb) in gb.nodes.iter().zip(&gb.weights) {
                let b = 0.5 * (nb + 1.0);
                // Collapsed square -> reference triangle (xi, eta).
                let xi = a * (1.0 - b);
                let eta = a * b;
                let x = c + (v1 - c) * xi + (v2 - c) * eta;
                // 0.25 from the two interval maps, `a` from the Duffy
                // Jacobian, area2/2 is the triangle area times two.
                let w = wa * wb * 0.25 * a * area2;
                points.push(x);
                weights.push(w);
            }
        }
    }
    Ok(QuadratureRule { points, weights })
}
