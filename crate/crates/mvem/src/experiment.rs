//! Experiment driver: convergence sweeps on square mesh families,
//! conditioning sweeps on high-aspect-ratio meshes, and polynomial patch
//! runs, emitting CSV records.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::diagnostics::{self, ExperimentReport};
use crate::error::{Error, Result};
use crate::global;
use crate::local::{self, ElementContext};
use crate::mesh::PolygonalMesh;
use crate::problems::{self, ProblemData};
use crate::Approach;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestKind {
    /// Convergence on square meshes with the full-coefficient problem.
    Convergence,
    /// Conditioning on high-aspect-ratio meshes.
    Conditioning,
    /// Polynomial exactness.
    Patch,
}

impl std::str::FromStr for TestKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(TestKind::Convergence),
            "2" => Ok(TestKind::Conditioning),
            "patch" => Ok(TestKind::Patch),
            other => Err(Error::InvalidArgument(format!(
                "unknown test '{other}' (expected 1, 2 or patch)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub test: TestKind,
    pub approaches: Vec<Approach>,
    pub k_min: usize,
    pub k_max: usize,
    /// Subdivision counts along x; square meshes use nx by nx cells,
    /// aspect-ratio meshes nx by nx*AR.
    pub meshes: Vec<usize>,
    pub aspect_ratio: f64,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(test: TestKind) -> Self {
        let (k_max, meshes) = match test {
            TestKind::Convergence => (8, vec![5, 10, 20]),
            TestKind::Conditioning => (10, vec![2]),
            TestKind::Patch => (4, vec![2, 5]),
        };
        ExperimentConfig {
            test,
            approaches: Approach::ALL.to_vec(),
            k_min: 0,
            k_max,
            meshes,
            aspect_ratio: 100.0,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min > self.k_max {
            return Err(Error::InvalidArgument(format!(
                "k range {}..{} is empty",
                self.k_min, self.k_max
            )));
        }
        if self.meshes.is_empty() || self.meshes.contains(&0) {
            return Err(Error::InvalidArgument(
                "mesh list must contain positive subdivision counts".into(),
            ));
        }
        if self.approaches.is_empty() {
            return Err(Error::InvalidArgument("no approach selected".into()));
        }
        if self.test == TestKind::Conditioning && self.aspect_ratio < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "aspect ratio {} must be at least 1",
                self.aspect_ratio
            )));
        }
        Ok(())
    }

    fn build_mesh(&self, nx: usize) -> Result<(String, PolygonalMesh)> {
        match self.test {
            TestKind::Conditioning => {
                let ny = ((nx as f64) * self.aspect_ratio).round() as usize;
                Ok((format!("{nx}x{ny}"), crate::mesh::build_rectangle_grid(nx, ny, 1.0, 1.0)?))
            }
            _ => Ok((format!("{nx}x{nx}"), crate::mesh::build_rectangle_grid(nx, nx, 1.0, 1.0)?)),
        }
    }

    fn problem(&self, k: usize) -> Result<ProblemData> {
        match self.test {
            TestKind::Patch => problems::harmonic_patch(k.min(4)),
            _ => Ok(problems::full_physics()),
        }
    }
}

/// Runs one (approach, k, mesh) cell: full assembly, solve and
/// diagnostics. Assembly or solver failures are recorded in the report,
/// not propagated.
pub fn run_single(
    mesh: &PolygonalMesh,
    mesh_name: &str,
    approach: Approach,
    k: usize,
    problem: &ProblemData,
) -> ExperimentReport {
    let start = Instant::now();
    let mut report = ExperimentReport {
        approach,
        k,
        mesh: mesh_name.to_string(),
        h: mesh.mesh_size(),
        n_dofs: 0,
        p_err: f64::NAN,
        u_err: f64::NAN,
        pi_err: f64::NAN,
        cond_g: f64::NAN,
        cond_w: f64::NAN,
        cond_b: f64::NAN,
        cond_pi: f64::NAN,
        cond_d: f64::NAN,
        solver_status: String::new(),
        wall_time_s: 0.0,
    };

    let outcome = (|| -> Result<()> {
        let contexts = (0..mesh.n_cells())
            .into_par_iter()
            .map(|c| ElementContext::new(mesh, c, approach, k))
            .collect::<Result<Vec<_>>>()?;
        // The vector mass matrix exists even when the projection solve
        // later fails, so its conditioning is recorded first.
        report.cond_g = contexts
            .par_iter()
            .map(|ctx| diagnostics::condition_number(&ctx.ops.g))
            .reduce(|| 1.0, f64::max);
        let locals = contexts
            .par_iter()
            .map(|ctx| local::local_system(ctx, mesh, problem))
            .collect::<Result<Vec<_>>>()?;

        let conds: Vec<[f64; 4]> = locals
            .par_iter()
            .map(|l| {
                [
                    diagnostics::condition_number(&l.w),
                    diagnostics::condition_number(&l.b),
                    diagnostics::condition_number(&l.pi),
                    diagnostics::condition_number(&l.d),
                ]
            })
            .collect();
        let mut max = [1.0f64; 4];
        for c in &conds {
            for (m, v) in max.iter_mut().zip(c) {
                *m = m.max(*v);
            }
        }
        [report.cond_w, report.cond_b, report.cond_pi, report.cond_d] = max;

        let fields = global::solve(mesh, &contexts, &locals, problem)?;
        report.n_dofs = fields.n_dofs;
        match &fields.status {
            global::SolverStatus::Solved => {
                report.solver_status = "solved".into();
                if problem.exact_p.is_some() {
                    let errs = diagnostics::solution_errors(&contexts, &locals, &fields, problem)?;
                    report.p_err = errs.p_err;
                    report.u_err = errs.u_err;
                    report.pi_err = errs.pi_err;
                }
            }
            global::SolverStatus::Failed(msg) => {
                report.solver_status = format!("failed: {msg}");
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        report.solver_status = format!("failed: {e}");
    }
    // CSV fields must not contain commas.
    report.solver_status = report.solver_status.replace(',', ";");
    report.wall_time_s = start.elapsed().as_secs_f64();
    report
}

/// Fitted convergence rates of one (approach, k) column, with the
/// pairwise rates between consecutive refinements.
#[derive(Clone, Debug)]
pub struct RateRecord {
    pub approach: Approach,
    pub k: usize,
    /// "all" for the global fit, or "h1->h2" for a pairwise rate.
    pub levels: String,
    pub p_rate: Option<f64>,
    pub u_rate: Option<f64>,
    pub pi_rate: Option<f64>,
}

pub const RATES_CSV_HEADER: &str = "approach,k,levels,p_rate,u_rate,pI_rate";

impl RateRecord {
    pub fn csv_row(&self) -> String {
        let fmt = |r: Option<f64>| match r {
            Some(v) => format!("{v:.6}"),
            None => "nan".into(),
        };
        format!(
            "{},{},{},{},{},{}",
            self.approach,
            self.k,
            self.levels,
            fmt(self.p_rate),
            fmt(self.u_rate),
            fmt(self.pi_rate)
        )
    }
}

/// Rates derived from the reports of one experiment, grouped by approach
/// and degree in run order.
pub fn fit_rates(reports: &[ExperimentReport]) -> Vec<RateRecord> {
    let mut out = Vec::new();
    let mut groups: Vec<(Approach, usize)> = Vec::new();
    for r in reports {
        if !groups.contains(&(r.approach, r.k)) {
            groups.push((r.approach, r.k));
        }
    }
    for (approach, k) in groups {
        let rows: Vec<&ExperimentReport> = reports
            .iter()
            .filter(|r| r.approach == approach && r.k == k)
            .collect();
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let take = |f: fn(&ExperimentReport) -> f64| -> Vec<f64> {
            rows.iter().map(|r| f(r)).collect()
        };
        out.push(RateRecord {
            approach,
            k,
            levels: "all".into(),
            p_rate: diagnostics::convergence_rate(&hs, &take(|r| r.p_err)),
            u_rate: diagnostics::convergence_rate(&hs, &take(|r| r.u_err)),
            pi_rate: diagnostics::convergence_rate(&hs, &take(|r| r.pi_err)),
        });
        for pair in rows.windows(2) {
            let hp = [pair[0].h, pair[1].h];
            let rate = |a: f64, b: f64| diagnostics::convergence_rate(&hp, &[a, b]);
            out.push(RateRecord {
                approach,
                k,
                levels: format!("{}->{}", pair[0].mesh, pair[1].mesh),
                p_rate: rate(pair[0].p_err, pair[1].p_err),
                u_rate: rate(pair[0].u_err, pair[1].u_err),
                pi_rate: rate(pair[0].pi_err, pair[1].pi_err),
            });
        }
    }
    out
}

/// Runs the configured sweep in deterministic approach-major order and
/// writes `runs.csv` and `rates.csv` when an output directory is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    config.validate()?;
    let mut meshes = Vec::new();
    for &nx in &config.meshes {
        meshes.push(config.build_mesh(nx)?);
    }
    let mut reports = Vec::new();
    for &approach in &config.approaches {
        for k in config.k_min..=config.k_max {
            let problem = config.problem(k)?;
            for (name, mesh) in &meshes {
                reports.push(run_single(mesh, name, approach, k, &problem));
            }
        }
    }
    if let Some(dir) = &config.out_dir {
        write_csv_files(dir, &reports)?;
    }
    Ok(reports)
}

pub fn write_csv_files(dir: &Path, reports: &[ExperimentReport]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut runs = String::from(diagnostics::CSV_HEADER);
    runs.push('\n');
    for r in reports {
        runs.push_str(&r.csv_row());
        runs.push('\n');
    }
    std::fs::write(dir.join("runs.csv"), runs)?;

    let mut rates = String::from(RATES_CSV_HEADER);
    rates.push('\n');
    for r in fit_rates(reports) {
        rates.push_str(&r.csv_row());
        rates.push('\n');
    }
    std::fs::write(dir.join("rates.csv"), rates)?;
    Ok(())
}
