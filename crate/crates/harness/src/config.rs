//! Experiment configuration files (TOML; unknown keys are rejected).
//!
//! ```toml
//! name = "example51_l2_l1"
//!
//! [problem]
//! kind = "integral_1d"      # or "elliptic_2d"
//! n = 400                   # integral_1d subintervals
//! nx = 40                   # elliptic_2d squares per axis
//! ny = 40
//! exact = "spikes_1d"       # spikes_1d | two_inclusions_2d | zero | file
//! # exact_file = "xdagger.csv"
//!
//! [noise]
//! delta = 5e-4
//! seed = 20140601
//!
//! [stopping]
//! kind = "discrepancy"      # or "rule41"
//! tau = 1.02
//! max_outer = 200
//! atol_zero = 1e-10
//!
//! [schedule]
//! kind = "geometric"        # geometric | constant | harmonic
//! alpha1 = 0.5
//! q = 0.5
//!
//! [penalty]
//! kind = "l2_l1"            # quadratic | l2_l1 | l2_tv
//! mu = 0.01
//! a = 1.0
//! b = 0.0
//! eps = 1e-6
//!
//! [method]
//! r = 2.0
//! eta_radius = 0.5          # nonlinear problems only
//! eta_samples = 8
//!
//! [inner]
//! grad_tol_rel = 1e-8
//! max_iters = 2000
//! armijo = 1e-4
//! backtrack = 0.5
//! max_backtracks = 50
//! precondition = true      # lagged-curvature preconditioner for L1/TV penalties
//! precond_refresh = 20
//!
//! [output]
//! dir = "out"
//!
//! [study]
//! deltas = [4e-3, 2e-3, 1e-3, 5e-4]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use itreg::inner_cg::InnerSettings;
use itreg::{AlphaSchedule, Penalty, PenaltyKind, StopKind, StoppingRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[serde(rename = "integral_1d")]
    Integral1d,
    #[serde(rename = "elliptic_2d")]
    Elliptic2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactKind {
    #[serde(rename = "spikes_1d")]
    Spikes1d,
    #[serde(rename = "two_inclusions_2d")]
    TwoInclusions2d,
    Zero,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_nxy")]
    pub nx: usize,
    #[serde(default = "default_nxy")]
    pub ny: usize,
    pub exact: ExactKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub delta: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingConfig {
    #[serde(default = "default_stop_kind")]
    pub kind: String,
    pub tau: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_atol_zero")]
    pub atol_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_schedule_kind")]
    pub kind: String,
    pub alpha1: f64,
    #[serde(default = "default_q")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: String,
    pub mu: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_eta_radius")]
    pub eta_radius: f64,
    #[serde(default = "default_eta_samples")]
    pub eta_samples: usize,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            r: default_r(),
            eta_radius: default_eta_radius(),
            eta_samples: default_eta_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerConfig {
    #[serde(default = "default_grad_tol")]
    pub grad_tol_rel: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_period: Option<usize>,
    #[serde(default = "default_armijo")]
    pub armijo: f64,
    #[serde(default = "default_backtrack")]
    pub backtrack: f64,
    #[serde(default = "default_max_backtracks")]
    pub max_backtracks: usize,
    #[serde(default)]
    pub linear_route: bool,
    #[serde(default = "default_true")]
    pub precondition: bool,
    #[serde(default = "default_precond_refresh")]
    pub precond_refresh: usize,
}

fn default_true() -> bool {
    true
}

fn default_precond_refresh() -> usize {
    InnerSettings::default().precond_refresh
}

impl Default for InnerConfig {
    fn default() -> Self {
        let d = InnerSettings::default();
        InnerConfig {
            grad_tol_rel: d.grad_tol_rel,
            max_iters: d.max_iters,
            restart_period: d.restart_period,
            armijo: d.armijo,
            backtrack: d.backtrack,
            max_backtracks: d.max_backtracks,
            linear_route: d.linear_route,
            precondition: d.precondition,
            precond_refresh: d.precond_refresh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemConfig,
    pub noise: NoiseConfig,
    pub stopping: StoppingConfig,
    pub schedule: ScheduleConfig,
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub inner: InnerConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
}

fn default_n() -> usize {
    400
}
fn default_nxy() -> usize {
    40
}
fn default_seed() -> u64 {
    20140601
}
fn default_stop_kind() -> String {
    "discrepancy".into()
}
fn default_max_outer() -> usize {
    200
}
fn default_atol_zero() -> f64 {
    1e-10
}
fn default_schedule_kind() -> String {
    "geometric".into()
}
fn default_q() -> f64 {
    0.5
}
fn default_eps() -> f64 {
    1e-6
}
fn default_r() -> f64 {
    2.0
}
fn default_eta_radius() -> f64 {
    0.5
}
fn default_eta_samples() -> usize {
    8
}
fn default_grad_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    2000
}
fn default_armijo() -> f64 {
    1e-4
}
fn default_backtrack() -> f64 {
    0.5
}
fn default_max_backtracks() -> usize {
    50
}
fn default_out_dir() -> String {
    "out".into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ConfigFile {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(HarnessError::Config(format!("{field}: {msg}")));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
        {
            return bad("name", "use letters, digits, '.', '_' or '-'");
        }
        if !(self.noise.delta >= 0.0) || !self.noise.delta.is_finite() {
            return bad("noise.delta", "must be finite and nonnegative");
        }
        match self.problem.kind {
            ProblemKind::Integral1d if self.problem.n < 2 => {
                return bad("problem.n", "need n >= 2")
            }
            ProblemKind::Elliptic2d if self.problem.nx < 2 || self.problem.ny < 2 => {
                return bad("problem.nx/ny", "need at least 2 squares per axis")
            }
            _ => {}
        }
        match (self.problem.kind, self.problem.exact) {
            (ProblemKind::Integral1d, ExactKind::TwoInclusions2d)
            | (ProblemKind::Elliptic2d, ExactKind::Spikes1d) => {
                return bad(
                    "problem.exact",
                    "selector does not match the problem dimension",
                )
            }
            (_, ExactKind::File) if self.problem.exact_file.is_none() => {
                return bad("problem.exact_file", "required when exact = \"file\"")
            }
            _ => {}
        }
        if let Some(study) = &self.study {
            if study.deltas.is_empty() || study.deltas.iter().any(|d| !(*d >= 0.0)) {
                return bad("study.deltas", "need a nonempty list of nonnegative levels");
            }
        }
        if self.method.eta_samples == 0 || !(self.method.eta_radius > 0.0) {
            return bad("method.eta_*", "radius and sample count must be positive");
        }
        let invalid = |e: HarnessError| match e {
            HarnessError::Core(c) => HarnessError::Config(c.to_string()),
            other => other,
        };
        self.stopping_rule().map_err(invalid)?;
        self.alpha_schedule().map_err(invalid)?;
        self.penalty().map_err(invalid)?;
        self.inner_settings()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.method.r > 1.0) {
            return bad("method.r", "need r > 1");
        }
        Ok(())
    }

    pub fn stopping_rule(&self) -> Result<StoppingRule<f64>> {
        let kind = match self.stopping.kind.as_str() {
            "discrepancy" => StopKind::Discrepancy,
            "rule41" => StopKind::Rule41,
            other => {
                return Err(HarnessError::Config(format!(
                    "stopping.kind: unknown rule `{other}`"
                )))
            }
        };
        let rule = StoppingRule {
            kind,
            tau: self.stopping.tau,
            max_outer: self.stopping.max_outer,
            atol_zero: self.stopping.atol_zero,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn alpha_schedule(&self) -> Result<AlphaSchedule<f64>> {
        let s = &self.schedule;
        let sched = match s.kind.as_str() {
            "geometric" => AlphaSchedule::Geometric {
                alpha1: s.alpha1,
                q: s.q,
            },
            "constant" => AlphaSchedule::Constant { alpha: s.alpha1 },
            "harmonic" => AlphaSchedule::Harmonic { alpha1: s.alpha1 },
            other => {
                return Err(HarnessError::Config(format!(
                    "schedule.kind: unknown schedule `{other}`"
                )))
            }
        };
        sched.validate()?;
        Ok(sched)
    }

    pub fn penalty(&self) -> Result<Penalty<f64>> {
        let p = &self.penalty;
        let kind = match p.kind.as_str() {
            "quadratic" => PenaltyKind::Quadratic,
            "l2_l1" => PenaltyKind::L2L1,
            "l2_tv" => PenaltyKind::L2Tv,
            other => {
                return Err(HarnessError::Config(format!(
                    "penalty.kind: unknown penalty `{other}`"
                )))
            }
        };
        let eps = if kind == PenaltyKind::Quadratic {
            0.0
        } else {
            p.eps
        };
        Ok(Penalty::new(kind, p.mu, p.a, p.b, eps)?)
    }

    pub fn inner_settings(&self) -> InnerSettings {
        let i = &self.inner;
        InnerSettings {
            grad_tol_rel: i.grad_tol_rel,
            max_iters: i.max_iters,
            restart_period: i.restart_period,
            armijo: i.armijo,
            backtrack: i.backtrack,
            max_backtracks: i.max_backtracks,
            linear_route: i.linear_route,
            precondition: i.precondition,
            precond_refresh: i.precond_refresh,
        }
    }
}

/// Built-in configuration of the linear integral-equation experiment.
pub fn example51(penalty: &str) -> ExperimentConfig {
    let (pen, name) = match penalty {
        "quadratic" => (
            PenaltyConfig {
                kind: "quadratic".into(),
                mu: 1.0,
                a: 0.0,
                b: 0.0,
                eps: default_eps(),
            },
            "example51_quadratic",
        ),
        _ => (
            PenaltyConfig {
                kind: "l2_l1".into(),
                mu: 0.01,
                a: 1.0,
                b: 0.0,
                eps: 1e-6,
            },
            "example51_l2_l1",
        ),
    };
    ExperimentConfig {
        name: name.into(),
        problem: ProblemConfig {
            kind: ProblemKind::Integral1d,
            n: 400,
            nx: default_nxy(),
            ny: default_nxy(),
            exact: ExactKind::Spikes1d,
            exact_file: None,
        },
        noise: NoiseConfig {
            delta: 0.5e-3,
            seed: default_seed(),
        },
        stopping: StoppingConfig {
            kind: "discrepancy".into(),
            tau: 1.02,
            max_outer: default_max_outer(),
            atol_zero: default_atol_zero(),
        },
        schedule: ScheduleConfig {
            kind: "geometric".into(),
            alpha1: 0.5,
            q: 0.5,
        },
        penalty: pen,
        method: MethodConfig::default(),
        inner: InnerConfig::default(),
        output: OutputConfig::default(),
        study: None,
    }
}

/// Built-in configuration of the elliptic parameter-identification experiment.
/// `penalty` is `quadratic`, `l2_tv_mu0.01` or `l2_tv_mu1`.
pub fn example52(penalty: &str) -> ExperimentConfig {
    let (pen, name) = match penalty {
        "l2_tv_mu0.01" => (
            PenaltyConfig {
                kind: "l2_tv".into(),
                mu: 0.01,
                a: 0.0,
                b: 1.0,
                eps: 1e-6,
            },
            "example52_l2_tv_mu0.01",
        ),
        "l2_tv_mu1" => (
            PenaltyConfig {
                kind: "l2_tv".into(),
                mu: 1.0,
                a: 0.0,
                b: 1.0,
                eps: 1e-6,
            },
            "example52_l2_tv_mu1",
        ),
        _ => (
            PenaltyConfig {
                kind: "quadratic".into(),
                mu: 1.0,
                a: 0.0,
                b: 0.0,
                eps: default_eps(),
            },
            "example52_quadratic",
        ),
    };
    ExperimentConfig {
        name: name.into(),
        problem: ProblemConfig {
            kind: ProblemKind::Elliptic2d,
            n: default_n(),
            nx: 40,
            ny: 40,
            exact: ExactKind::TwoInclusions2d,
            exact_file: None,
        },
        noise: NoiseConfig {
            delta: 0.1e-3,
            seed: default_seed(),
        },
        stopping: StoppingConfig {
            kind: "discrepancy".into(),
            tau: 1.05,
            max_outer: default_max_outer(),
            atol_zero: default_atol_zero(),
        },
        schedule: ScheduleConfig {
            kind: "geometric".into(),
            alpha1: 0.5,
            q: 0.5,
        },
        penalty: pen,
        method: MethodConfig::default(),
        inner: InnerConfig::default(),
        output: OutputConfig::default(),
        study: None,
    }
}
