//! Benchmark problem definitions: coefficients, boundary data and
//! manufactured exact solutions.
//!
//! The mixed formulation works with the inverse diffusion tensor
//! K = D^{-1} and the transported advection field beta = K b; both are
//! derived here from the primal coefficients so problems are stated in
//! their natural form.

use nalgebra::{Matrix2, Point2, Vector2};

use crate::error::{Error, Result};

pub type ScalarFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type VectorFn = Box<dyn Fn(f64, f64) -> Vector2<f64> + Send + Sync>;
pub type TensorFn = Box<dyn Fn(f64, f64) -> Matrix2<f64> + Send + Sync>;
/// Flux datum: point and outward unit normal to the boundary.
pub type FluxFn = Box<dyn Fn(Point2<f64>, Vector2<f64>) -> f64 + Send + Sync>;

/// Coefficients and data of one advection-diffusion-reaction problem.
pub struct ProblemData {
    pub name: &'static str,
    /// Primal diffusion tensor D(x).
    pub diffusion: TensorFn,
    /// Advection field b(x) of the primal form div(-D grad p + b p).
    pub advection: VectorFn,
    /// Reaction coefficient gamma(x).
    pub reaction: ScalarFn,
    /// Source f(x).
    pub source: ScalarFn,
    /// Pressure datum on the Dirichlet part of the boundary.
    pub dirichlet: ScalarFn,
    /// Normal-flux datum u.n on the Neumann part of the boundary.
    pub neumann: FluxFn,
    /// Manufactured pressure, if known.
    pub exact_p: Option<ScalarFn>,
    /// Manufactured velocity u = -D grad p + b p, if known.
    pub exact_u: Option<VectorFn>,
}

impl ProblemData {
    /// Inverse diffusion tensor K(x) = D(x)^{-1}.
    pub fn k_tensor(&self, x: f64, y: f64) -> Result<Matrix2<f64>> {
        let d = (self.diffusion)(x, y);
        d.try_inverse().ok_or(Error::InvalidCoefficient { x, y })
    }

    /// Transported advection field beta(x) = K(x) b(x).
    pub fn beta(&self, x: f64, y: f64) -> Result<Vector2<f64>> {
        Ok(self.k_tensor(x, y)? * (self.advection)(x, y))
    }
}

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

/// Pressure of the full-physics benchmark and its first and second
/// derivatives, in closed form.
fn bench_pressure(x: f64, y: f64) -> (f64, f64, f64, f64, f64, f64) {
    let w = two_pi();
    let (sx, cx) = (w * x).sin_cos();
    let (sy, cy) = (w * y).sin_cos();
    let p = x * x * y + sx * sy + 2.0;
    let px = 2.0 * x * y + w * cx * sy;
    let py = x * x + w * sx * cy;
    let pxx = 2.0 * y - w * w * sx * sy;
    let pyy = -w * w * sx * sy;
    let pxy = 2.0 * x + w * w * cx * cy;
    (p, px, py, pxx, pyy, pxy)
}

fn bench_velocity(x: f64, y: f64) -> Vector2<f64> {
    let (p, px, py, ..) = bench_pressure(x, y);
    // u = -D grad p + b p with D = [[y^2+1, -xy], [-xy, x^2+1]], b = (x, y).
    Vector2::new(
        -((y * y + 1.0) * px - x * y * py) + x * p,
        -(-x * y * px + (x * x + 1.0) * py) + y * p,
    )
}

/// Full-coefficient benchmark on the unit square: variable full diffusion
/// tensor, linear advection, nonconstant reaction, mixed boundary
/// conditions with the Neumann part on the x-axis.
pub fn full_physics() -> ProblemData {
    ProblemData {
        name: "full-physics",
        diffusion: Box::new(|x, y| {
            Matrix2::new(y * y + 1.0, -x * y, -x * y, x * x + 1.0)
        }),
        advection: Box::new(|x, y| Vector2::new(x, y)),
        reaction: Box::new(|x, y| x * x + y * y * y),
        source: Box::new(|x, y| {
            let (p, px, py, pxx, pyy, pxy) = bench_pressure(x, y);
            // div u + gamma p, expanded term by term.
            let dux_dx = -((y * y + 1.0) * pxx - y * py - x * y * pxy) + p + x * px;
            let duy_dy = -(-x * px - x * y * pxy + (x * x + 1.0) * pyy) + p + y * py;
            dux_dx + duy_dy + (x * x + y * y * y) * p
        }),
        dirichlet: Box::new(|x, y| bench_pressure(x, y).0),
        neumann: Box::new(|p, n| bench_velocity(p.x, p.y).dot(&n)),
        exact_p: Some(Box::new(|x, y| bench_pressure(x, y).0)),
        exact_u: Some(Box::new(bench_velocity)),
    }
}

/// Harmonic polynomial patch problem of the given degree: identity
/// diffusion, no advection or reaction, zero source, Dirichlet data
/// everywhere. The discrete solution must be exact for runs of degree
/// `degree` and above.
pub fn harmonic_patch(degree: usize) -> Result<ProblemData> {
    let (p, grad): (fn(f64, f64) -> f64, fn(f64, f64) -> Vector2<f64>) = match degree {
        0 => (|_, _| 1.0, |_, _| Vector2::zeros()),
        1 => (|x, y| x + 2.0 * y, |_, _| Vector2::new(1.0, 2.0)),
        2 => (
            |x, y| x * x - y * y,
            |x, y| Vector2::new(2.0 * x, -2.0 * y),
        ),
        3 => (
            |x, y| x * x * x - 3.0 * x * y * y,
            |x, y| Vector2::new(3.0 * (x * x - y * y), -6.0 * x * y),
        ),
        4 => (
            |x, y| x * x * x * x - 6.0 * x * x * y * y + y * y * y * y,
            |x, y| {
                Vector2::new(
                    4.0 * x * x * x - 12.0 * x * y * y,
                    -12.0 * x * x * y + 4.0 * y * y * y,
                )
            },
        ),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "no patch polynomial of degree {degree}"
            )))
        }
    };
    Ok(ProblemData {
        name: "harmonic-patch",
        diffusion: Box::new(|_, _| Matrix2::identity()),
        advection: Box::new(|_, _| Vector2::zeros()),
        reaction: Box::new(|_, _| 0.0),
        source: Box::new(|_, _| 0.0),
        dirichlet: Box::new(p),
        neumann: Box::new(move |q, n| -grad(q.x, q.y).dot(&n)),
        exact_p: Some(Box::new(p)),
        exact_u: Some(Box::new(move |x, y| -grad(x, y))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_scalar(f: impl Fn(f64, f64) -> f64, x: f64, y: f64) -> (f64, f64) {
        let h = 1e-6;
        (
            (f(x + h, y) - f(x - h, y)) / (2.0 * h),
            (f(x, y + h) - f(x, y - h)) / (2.0 * h),
        )
    }

    #[test]
    fn bench_pressure_derivatives_match_fd() {
        for &(x, y) in &[(0.3, 0.7), (0.12, 0.95), (0.81, 0.44)] {
            let (_, px, py, pxx, pyy, pxy) = bench_pressure(x, y);
            let (fx, fy) = fd_scalar(|a, b| bench_pressure(a, b).0, x, y);
            assert_relative_eq!(px, fx, epsilon = 1e-7, max_relative = 1e-7);
            assert_relative_eq!(py, fy, epsilon = 1e-7, max_relative = 1e-7);
            let (fxx, fxy) = fd_scalar(|a, b| bench_pressure(a, b).1, x, y);
            let (_, fyy) = fd_scalar(|a, b| bench_pressure(a, b).2, x, y);
            assert_relative_eq!(pxx, fxx, epsilon = 1e-5, max_relative = 1e-5);
            assert_relative_eq!(pyy, fyy, epsilon = 1e-5, max_relative = 1e-5);
            assert_relative_eq!(pxy, fxy, epsilon = 1e-5, max_relative = 1e-5);
        }
    }

    #[test]
    fn bench_source_is_divergence_plus_reaction() {
        // f must equal div u + gamma p; check the divergence by finite
        // differences of the closed-form velocity.
        let prob = full_physics();
        for &(x, y) in &[(0.25, 0.6), (0.9, 0.15), (0.47, 0.81)] {
            let h = 1e-5;
            let div = (bench_velocity(x + h, y).x - bench_velocity(x - h, y).x) / (2.0 * h)
                + (bench_velocity(x, y + h).y - bench_velocity(x, y - h).y) / (2.0 * h);
            let p = bench_pressure(x, y).0;
            let expected = div + (x * x + y * y * y) * p;
            assert_relative_eq!(
                (prob.source)(x, y),
                expected,
                epsilon = 1e-5,
                max_relative = 1e-5
            );
        }
    }

    #[test]
    fn velocity_is_flux_of_pressure() {
        let prob = full_physics();
        let (x, y) = (0.62, 0.33);
        let (p, px, py, ..) = bench_pressure(x, y);
        let d = (prob.diffusion)(x, y);
        let b = (prob.advection)(x, y);
        let u = -d * Vector2::new(px, py) + b * p;
        let u_closed = (prob.exact_u.as_ref().unwrap())(x, y);
        assert_relative_eq!(u.x, u_closed.x, epsilon = 1e-13);
        assert_relative_eq!(u.y, u_closed.y, epsilon = 1e-13);
    }

    #[test]
    fn k_tensor_inverts_diffusion() {
        let prob = full_physics();
        let (x, y) = (0.4, 0.9);
        let prod = prob.k_tensor(x, y).unwrap() * (prob.diffusion)(x, y);
        assert_relative_eq!(prod, Matrix2::identity(), epsilon = 1e-14);
    }

    #[test]
    fn beta_consistent_with_k_and_b() {
        let prob = full_physics();
        let (x, y) = (0.7, 0.2);
        let beta = prob.beta(x, y).unwrap();
        let expected = prob.k_tensor(x, y).unwrap() * Vector2::new(x, y);
        assert_relative_eq!(beta, expected, epsilon = 1e-14);
    }

    #[test]
    fn neumann_matches_velocity_on_x_axis() {
        // Outward normal on the x-axis boundary is (0, -1).
        let prob = full_physics();
        let n = Vector2::new(0.0, -1.0);
        let p = Point2::new(0.35, 0.0);
        let g = (prob.neumann)(p, n);
        assert_relative_eq!(g, -bench_velocity(0.35, 0.0).y, epsilon = 1e-13);
    }

    #[test]
    fn patch_problems_are_harmonic() {
        for degree in 0..=4usize {
            let prob = harmonic_patch(degree).unwrap();
            let p = prob.exact_p.as_ref().unwrap();
            for &(x, y) in &[(0.3, 0.8), (0.55, 0.21)] {
                let h = 1e-4;
                let lap = (p(x + h, y) + p(x - h, y) + p(x, y + h) + p(x, y - h)
                    - 4.0 * p(x, y))
                    / (h * h);
                assert!(lap.abs() <= 1e-6, "degree {degree}: laplacian {lap:.3e}");
            }
        }
    }

    #[test]
    fn patch_degree_out_of_range() {
        assert!(harmonic_patch(5).is_err());
    }
}
