//! Error norms, least-squares interpolants, condition numbers and
//! convergence-rate fitting, plus the CSV record emitted by the
//! experiment driver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::global::SolutionFields;
use crate::local::{ElementContext, LocalMatrices};
use crate::problems::ProblemData;
use crate::scalar_basis::poly_dim;

/// Ratio of the largest to the smallest singular value; +infinity when the
/// matrix is numerically singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Discretization error norms of one solved mesh.
#[derive(Clone, Copy, Debug)]
pub struct MeshErrors {
    /// L2 distance between the exact and discrete pressure.
    pub p_err: f64,
    /// L2 distance between the exact velocity and the projected discrete
    /// velocity.
    pub u_err: f64,
    /// L2 distance between the discrete pressure and the least-squares
    /// interpolant of the exact pressure (superconvergent).
    pub pi_err: f64,
}

/// Computes the three error norms by element-wise quadrature.
pub fn solution_errors(
    contexts: &[ElementContext],
    locals: &[LocalMatrices],
    fields: &SolutionFields,
    problem: &ProblemData,
) -> Result<MeshErrors> {
    let exact_p = problem
        .exact_p
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("problem has no exact pressure".into()))?;
    let exact_u = problem
        .exact_u
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("problem has no exact velocity".into()))?;

    let mut p_sq = 0.0;
    let mut u_sq = 0.0;
    let mut pi_sq = 0.0;
    for (cell, ctx) in contexts.iter().enumerate() {
        let n_k = poly_dim(ctx.k);
        let n_pts = ctx.interior.len();
        let p_h = &fields.pressure[cell];
        let u_proj = &locals[cell].pi * &fields.velocity[cell];
        let p_i = interpolate_pressure(ctx, |x, y| exact_p(x, y))?;
        for (i, p) in ctx.interior.points.iter().enumerate() {
            let w = ctx.interior.weights[i];
            let mut ph = 0.0;
            let mut pih = 0.0;
            for a in 0..n_k {
                ph += ctx.pv_interior[(i, a)] * p_h[a];
                pih += ctx.pv_interior[(i, a)] * p_i[a];
            }
            p_sq += w * (exact_p(p.x, p.y) - ph).powi(2);
            pi_sq += w * (pih - ph).powi(2);
            let mut ux = 0.0;
            let mut uy = 0.0;
            for a in 0..2 * n_k {
                ux += ctx.gv_interior[(i, a)] * u_proj[a];
                uy += ctx.gv_interior[(n_pts + i, a)] * u_proj[a];
            }
            let ue = exact_u(p.x, p.y);
            u_sq += w * ((ue.x - ux).powi(2) + (ue.y - uy).powi(2));
        }
    }
    Ok(MeshErrors {
        p_err: p_sq.sqrt(),
        u_err: u_sq.sqrt(),
        pi_err: pi_sq.sqrt(),
    })
}

/// Least-squares fit of a scalar function in the element's working
/// pressure basis at the interior rule points.
pub fn interpolate_pressure(
    ctx: &ElementContext,
    f: impl Fn(f64, f64) -> f64,
) -> Result<DVector<f64>> {
    let n_k = poly_dim(ctx.k);
    let v = DMatrix::from(ctx.pv_interior.view((0, 0), (ctx.interior.len(), n_k)));
    let y = DVector::from_fn(ctx.interior.len(), |i, _| {
        let p = ctx.interior.points[i];
        f(p.x, p.y)
    });
    let svd = v.svd(true, true);
    svd.solve(&y, 1e-13 * svd.singular_values.max())
        .map_err(|e| Error::SolverFailure(format!("interpolant fit: {e}")))
}

/// Least-squares slope of log(error) against log(h); nonpositive errors
/// are excluded, and fewer than two usable refinements yield `None`.
pub fn convergence_rate(hs: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errors)
        .filter(|&(&h, &e)| h > 0.0 && e > 0.0 && e.is_finite())
        .map(|(&h, &e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// One CSV record: a single (approach, k, mesh) run.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub approach: crate::Approach,
    pub k: usize,
    pub mesh: String,
    pub h: f64,
    pub n_dofs: usize,
    pub p_err: f64,
    pub u_err: f64,
    pub pi_err: f64,
    pub cond_g: f64,
    pub cond_w: f64,
    pub cond_b: f64,
    pub cond_pi: f64,
    pub cond_d: f64,
    pub solver_status: String,
    pub wall_time_s: f64,
}

pub const CSV_HEADER: &str =
    "approach,k,mesh,h,n_dofs,p_err,u_err,pI_err,cond_G,cond_W,cond_B,cond_Pi,cond_D,solver_status,wall_time_s";

fn csv_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.12e}")
    }
}

impl ExperimentReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.approach,
            self.k,
            self.mesh,
            csv_float(self.h),
            self.n_dofs,
            csv_float(self.p_err),
            csv_float(self.u_err),
            csv_float(self.pi_err),
            csv_float(self.cond_g),
            csv_float(self.cond_w),
            csv_float(self.cond_b),
            csv_float(self.cond_pi),
            csv_float(self.cond_d),
            self.solver_status,
            csv_float(self.wall_time_s),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn condition_of_identity() {
        let m = DMatrix::<f64>::identity(4, 4);
        assert_relative_eq!(condition_number(&m), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn condition_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 1.0]));
        assert_relative_eq!(condition_number(&m), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn condition_of_singular_is_infinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_number(&m).is_infinite());
    }

    #[test]
    fn condition_invariant_under_orthogonal_transform() {
        let m = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.5, 0.0, 2.0, 0.1, 0.0, 0.0, 1.0]);
        let theta = 0.7f64;
        let q = DMatrix::from_row_slice(
            3,
            3,
            &[
                theta.cos(),
                -theta.sin(),
                0.0,
                theta.sin(),
                theta.cos(),
                0.0,
                0.0,
                0.0,
                1.0,
            ],
        );
        let c1 = condition_number(&m);
        let c2 = condition_number(&(&q * &m));
        let c3 = condition_number(&(&m * q.transpose()));
        assert_relative_eq!(c1, c2, max_relative = 1e-10);
        assert_relative_eq!(c1, c3, max_relative = 1e-10);
    }

    #[test]
    fn rectangular_condition_supported() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        assert_relative_eq!(condition_number(&m), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_of_exact_log_linear_data() {
        let rate = convergence_rate(&[1.0, 0.1], &[1e-1, 1e-2]).unwrap();
        assert_relative_eq!(rate, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_of_halving_sequence() {
        let hs = [1.0, 0.5, 0.25, 0.125, 0.0625];
        let errors: Vec<f64> = hs.iter().map(|h| 0.3 * h).collect();
        let rate = convergence_rate(&hs, &errors).unwrap();
        assert_relative_eq!(rate, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_quadratic() {
        let hs = [0.2, 0.1, 0.05];
        let errors: Vec<f64> = hs.iter().map(|h| 7.0 * h * h).collect();
        assert_relative_eq!(
            convergence_rate(&hs, &errors).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rate_excludes_bad_points() {
        assert!(convergence_rate(&[1.0, 0.5], &[1e-3, 0.0]).is_none());
        assert!(convergence_rate(&[1.0], &[1e-3]).is_none());
        let rate = convergence_rate(&[1.0, 0.5, 0.25], &[1e-1, 0.0, 2.5e-2]).unwrap();
        assert_relative_eq!(rate, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_row_format() {
        let r = ExperimentReport {
            approach: crate::Approach::Ortho,
            k: 2,
            mesh: "10x10".into(),
            h: 0.1414,
            n_dofs: 123,
            p_err: 1.0e-3,
            u_err: 2.0e-3,
            pi_err: 3.0e-4,
            cond_g: 1.0,
            cond_w: f64::INFINITY,
            cond_b: 5.0,
            cond_pi: 6.0,
            cond_d: 7.0,
            solver_status: "solved".into(),
            wall_time_s: 0.25,
        };
        let row = r.csv_row();
        assert!(row.starts_with("ortho,2,10x10,"));
        assert!(row.contains(",inf,"));
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }
}
