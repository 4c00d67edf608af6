//! Job configuration: a flat TOML file.
//!
//! ```text
//! a = [2, 0, -1, 1]        # ascending powers of x
//! b = [0, -2, 3]
//! c = [0.7, -1.5, 1.3, -0.5]
//! bc = "neumann"           # or "dirichlet"
//! lambda = 4.6             # added to c
//! d1 = 7
//! d2 = 7
//! epsilon = 0.001
//! delta = 0.001
//! sweep = "lambda"         # "delta" or "margin"
//! sweep_problem = "stability"   # "synthesis" or "observer"
//! sweep_lo = 0.0
//! sweep_hi = 6.0
//! sweep_degrees = [3, 4, 5]
//! w0 = "gaussian-pair"     # or a coefficient list
//! ```
//!
//! Every key except `a`, `b`, `c` has a default; unknown keys are rejected.

use serde::{Deserialize, Serialize};
use soslyap_core::poly::{Poly, Var};
use soslyap_core::stability::StabilityOptions;
use soslyap_core::sim::{gaussian_pair, SimSettings};
use soslyap_core::system::{Boundary, PdeSystem};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    #[default]
    Neumann,
    Dirichlet,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    #[default]
    Lambda,
    Delta,
    Margin,
}

/// Conditions probed by `sweep`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepProblem {
    #[default]
    Stability,
    Synthesis,
    Observer,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    #[default]
    Zero,
    StateFeedback,
    OutputFeedback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Opposite Gaussian bumps at 0.3 and 0.7, width 0.07.
    GaussianPair,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Preset(Preset),
    Coefficients(Vec<f64>),
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Preset(Preset::GaussianPair) => gaussian_pair(x),
            Profile::Preset(Preset::Zero) => 0.0,
            Profile::Coefficients(c) => c.iter().rev().fold(0.0, |acc, v| acc * x + v),
        }
    }
}

fn d_default() -> u16 {
    4
}
fn eps_default() -> f64 {
    1e-3
}
fn delta_default() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}
fn hi_default() -> f64 {
    10.0
}
fn tol_default() -> f64 {
    0.01
}
fn step_default() -> f64 {
    0.005
}
fn t_default() -> f64 {
    3.0
}
fn dt_default() -> f64 {
    1e-4
}
fn n_default() -> usize {
    201
}
fn stride_default() -> usize {
    10
}
fn w0_default() -> Profile {
    Profile::Preset(Preset::GaussianPair)
}
fn zero_profile() -> Profile {
    Profile::Preset(Preset::Zero)
}
fn invert_n_default() -> usize {
    257
}
fn invert_terms_default() -> usize {
    12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub bc: BoundaryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub lambda: f64,

    #[serde(default = "d_default")]
    pub d1: u16,
    #[serde(default = "d_default")]
    pub d2: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cert_d1: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cert_d2: Option<u16>,
    #[serde(default = "eps_default")]
    pub epsilon: f64,
    #[serde(default = "delta_default")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer_delta: Option<f64>,
    #[serde(default = "yes")]
    pub interval: bool,
    #[serde(default)]
    pub static_variant: bool,

    #[serde(default)]
    pub sweep: SweepKind,
    #[serde(default)]
    pub sweep_problem: SweepProblem,
    #[serde(default)]
    pub sweep_lo: f64,
    #[serde(default = "hi_default")]
    pub sweep_hi: f64,
    #[serde(default = "tol_default")]
    pub sweep_tol: f64,
    #[serde(default)]
    pub sweep_degrees: Vec<u16>,
    #[serde(default)]
    pub sweep_deltas: Vec<f64>,
    #[serde(default = "step_default")]
    pub margin_step: f64,

    #[serde(default)]
    pub input: InputKind,
    #[serde(default = "t_default")]
    pub t_final: f64,
    #[serde(default = "dt_default")]
    pub dt: f64,
    #[serde(default = "n_default")]
    pub n: usize,
    #[serde(default = "stride_default")]
    pub stride: usize,
    #[serde(default = "w0_default")]
    pub w0: Profile,
    #[serde(default = "zero_profile")]
    pub what0: Profile,

    #[serde(default = "invert_n_default")]
    pub invert_n: usize,
    #[serde(default = "invert_terms_default")]
    pub invert_terms: usize,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl JobConfig {
    /// Defaults everywhere except the coefficients.
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Self {
        let mut cfg: JobConfig = toml::from_str("a = [1.0]\nb = [0.0]\nc = [0.0]").expect("minimal config");
        cfg.a = a;
        cfg.b = b;
        cfg.c = c;
        cfg
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: JobConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.a.is_empty() || self.b.is_empty() || self.c.is_empty() {
            return bad("coefficient lists a, b, c must be non-empty");
        }
        let all = self.a.iter().chain(&self.b).chain(&self.c).chain([&self.lambda]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("coefficients must be finite");
        }
        if !(self.epsilon > 0.0) || !(self.delta > 0.0) || self.observer_delta.is_some_and(|d| !(d > 0.0)) {
            return bad("epsilon and delta must be positive");
        }
        if !(self.sweep_hi > self.sweep_lo) || !(self.sweep_tol > 0.0) || !(self.margin_step > 0.0) {
            return bad("sweep needs sweep_lo < sweep_hi and positive tolerances");
        }
        if self.sweep_deltas.iter().any(|d| !(*d > 0.0)) {
            return bad("sweep_deltas must be positive");
        }
        if self.n < 16 || self.invert_n < 8 || self.stride == 0 || !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return bad("simulation needs n >= 16, dt > 0, t_final > 0, stride >= 1");
        }
        if self.cert_d1.is_some() != self.cert_d2.is_some() {
            return bad("cert_d1 and cert_d2 go together");
        }
        self.system()?;
        Ok(())
    }

    pub fn boundary(&self) -> Boundary {
        match self.bc {
            BoundaryKind::Neumann => Boundary::MixedDirichletNeumann,
            BoundaryKind::Dirichlet => Boundary::DirichletDirichlet,
        }
    }

    /// The configured system with `lambda` added to `c`.
    pub fn system(&self) -> Result<PdeSystem, CliError> {
        let p = |c: &[f64]| Poly::univariate(Var::X, c);
        let sys = PdeSystem::new(p(&self.a), p(&self.b), p(&self.c), self.boundary())
            .map_err(|e| CliError::Config(e.to_string()))?
            .shifted(self.lambda);
        match self.alpha {
            Some(al) => sys.with_alpha(al).map_err(|e| CliError::Config(e.to_string())),
            None => Ok(sys),
        }
    }

    pub fn options(&self) -> StabilityOptions {
        let mut o = StabilityOptions::new(self.d1, self.epsilon, self.delta);
        o.d2 = self.d2;
        o.interval = self.interval;
        o.cert_degrees = self.cert_d1.zip(self.cert_d2);
        o
    }

    pub fn sim_settings(&self) -> SimSettings {
        SimSettings {
            t_final: self.t_final,
            dt: self.dt,
            n: self.n,
            stride: self.stride,
        }
    }
}
