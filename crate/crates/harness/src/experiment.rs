use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::problems::{add_noise, make_problem, Problem};
use crate::report;
use itreg::nit_solver::{convergence_study, diagnostics_bregman, StudyRow};
use itreg::{estimate_eta, GridFn, NitSolver, RunReport, StoppingRule, Variance};

pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub report: RunReport<f64>,
    pub x_dagger: GridFn<f64>,
    pub y_exact: GridFn<f64>,
    pub ydelta: GridFn<f64>,
    /// `||x_out - x_dagger||` in the grid `L^2` norm.
    pub l2_error: f64,
    pub eta_hat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub n_delta: usize,
    pub terminated_by: String,
    pub steps: usize,
    pub final_residual: f64,
    pub target_residual: f64,
    pub l2_error: f64,
    pub theta_value: f64,
    pub bregman_to_exact: f64,
    pub bregman_max_increase: f64,
    pub eta_hat: f64,
    pub tau_threshold: f64,
    pub inner_warnings: usize,
    pub inner_iterations: usize,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    result: &'a RunSummary,
    config: &'a ExperimentConfig,
}

fn solve(
    cfg: &ExperimentConfig,
    problem: &Problem,
    delta: f64,
    seed: u64,
) -> Result<(RunReport<f64>, GridFn<f64>)> {
    let ydelta = add_noise(&problem.y_exact, delta, seed)?;
    let solver = NitSolver {
        op: problem.op.as_ref(),
        theta: cfg.penalty()?,
        r: cfg.method.r,
        schedule: cfg.alpha_schedule()?,
        stop: cfg.stopping_rule()?,
        inner: cfg.inner_settings(),
        reference: Some(problem.x_dagger.clone()),
    };
    let report = solver.run_from_zero(&ydelta, delta)?;
    Ok((report, ydelta))
}

fn eta_for(cfg: &ExperimentConfig, problem: &Problem) -> Result<f64> {
    let x0 = GridFn::zeros(problem.op.domain().clone(), Variance::Primal);
    Ok(estimate_eta(
        problem.op.as_ref(),
        &x0,
        cfg.method.eta_radius,
        cfg.method.eta_samples,
        cfg.noise.seed,
    )?)
}

/// Builds the problem, synthesizes noisy data and runs the iteration.
/// `base_dir` resolves a relative `problem.exact_file`.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let problem = make_problem(&cfg.problem, base_dir)?;
    let eta_hat = eta_for(cfg, &problem)?;
    if !problem.op.is_linear() {
        let need = if eta_hat < 1.0 {
            StoppingRule::tau_threshold(eta_hat)
        } else {
            f64::INFINITY
        };
        if cfg.stopping.tau <= need {
            warn!(
                "tau = {} does not exceed (1 + eta)/(1 - eta) = {need} for the sampled eta = {eta_hat}",
                cfg.stopping.tau
            );
        }
    }
    let (report, ydelta) = solve(cfg, &problem, cfg.noise.delta, cfg.noise.seed)?;
    let l2_error = report.x_out.sub(&problem.x_dagger)?.l2_norm();
    info!(
        "{}: n_delta={} ({}) residual={:e} L2 error={:e}",
        cfg.name,
        report.n_delta,
        report.terminated_by.as_str(),
        report.final_state().residual,
        l2_error
    );
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        report,
        x_dagger: problem.x_dagger,
        y_exact: problem.y_exact,
        ydelta,
        l2_error,
        eta_hat,
    })
}

impl ExperimentOutcome {
    pub fn summary(&self) -> Result<RunSummary> {
        let theta = self.config.penalty()?;
        let series = diagnostics_bregman(&self.report, &theta, &self.x_dagger)?;
        let last = self.report.final_state();
        Ok(RunSummary {
            n_delta: self.report.n_delta,
            terminated_by: self.report.terminated_by.as_str().into(),
            steps: self.report.states.len() - 1,
            final_residual: last.residual,
            target_residual: self.config.stopping.tau * self.config.noise.delta,
            l2_error: self.l2_error,
            theta_value: theta.value(&self.report.x_out)?,
            bregman_to_exact: *series.values.last().expect("nonempty series"),
            bregman_max_increase: series.max_increase,
            eta_hat: self.eta_hat,
            tau_threshold: if self.eta_hat < 1.0 {
                StoppingRule::tau_threshold(self.eta_hat)
            } else {
                f64::INFINITY
            },
            inner_warnings: self
                .report
                .states
                .iter()
                .filter(|s| s.inner_warning())
                .count(),
            inner_iterations: self
                .report
                .states
                .iter()
                .filter_map(|s| s.inner.as_ref())
                .map(|i| i.iterations)
                .sum(),
        })
    }

    /// Writes `<name>_iterations.csv`, `<name>_reconstruction.csv` and
    /// `<name>_summary.toml` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir)?;
        let name = &self.config.name;
        let summary = self.summary()?;
        let header = vec![
            ("name", name.clone()),
            ("n_delta", summary.n_delta.to_string()),
            ("terminated_by", summary.terminated_by.clone()),
            ("delta", self.config.noise.delta.to_string()),
            ("tau", self.config.stopping.tau.to_string()),
            ("final_residual", summary.final_residual.to_string()),
            ("l2_error", summary.l2_error.to_string()),
            ("theta_value", summary.theta_value.to_string()),
        ];
        let files = [
            (
                out_dir.join(format!("{name}_iterations.csv")),
                report::iterations_csv(&self.report, &header),
            ),
            (
                out_dir.join(format!("{name}_reconstruction.csv")),
                report::reconstruction_csv(&self.report.x_out, &self.x_dagger),
            ),
            (
                out_dir.join(format!("{name}_summary.toml")),
                toml::to_string(&SummaryFile {
                    result: &summary,
                    config: &self.config,
                })
                .expect("summary serializes"),
            ),
        ];
        let mut written = Vec::new();
        for (path, text) in files {
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Noise-level sweep over `study.deltas` (falls back to `noise.delta`).
pub fn run_study(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Vec<StudyRow<f64>>> {
    cfg.validate()?;
    let problem = make_problem(&cfg.problem, base_dir)?;
    let deltas = cfg
        .study
        .as_ref()
        .map_or_else(|| vec![cfg.noise.delta], |s| s.deltas.clone());
    let theta = cfg.penalty()?;
    let rows = convergence_study(&deltas, &theta, &problem.x_dagger, |delta| {
        solve(cfg, &problem, delta, cfg.noise.seed)
            .map(|(rep, _)| rep)
            .map_err(|e| match e {
                crate::error::HarnessError::Core(c) => c,
                other => itreg::Error::Parse(other.to_string()),
            })
    });
    Ok(rows)
}

pub fn write_study(
    cfg: &ExperimentConfig,
    rows: &[StudyRow<f64>],
    out_dir: &Path,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{}_study.csv", cfg.name));
    std::fs::write(&path, report::study_csv(rows))?;
    Ok(path)
}
