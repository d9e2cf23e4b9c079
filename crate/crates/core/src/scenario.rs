//! TOML scenario files: parsing, validation and assembly of the closed loop.
//!
//! Parsing and validation are separate passes. A syntax or schema problem is a
//! [`ParseError`] pointing at the offending line; a well-formed file that breaks
//! a modelling assumption is a [`ValidationError`] listing every problem found,
//! not just the first.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{bipartite_error, AdaptiveState, AgentController, AgentGains, StepGains, TermExponents};
use crate::dynamics::{
    builtin_numerical_example, builtin_vehicle_example, FaultInterval, FaultMode, FaultSchedule, FollowerModel,
    LeaderSignal,
};
use crate::engine::{ClosedLoop, IntegratorConfig};
use crate::expr::Expr;
use crate::ftpf::PerformanceProfile;
use crate::graph::{GraphError, SignedDigraph};

pub const NUMERICAL_PRESET: &str = include_str!("../presets/numerical.toml");
pub const VEHICLE_PRESET: &str = include_str!("../presets/vehicle.toml");

/// Shipped scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Numerical,
    Vehicle,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::Numerical, Preset::Vehicle];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Numerical => "numerical",
            Preset::Vehicle => "vehicle",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Preset::Numerical => NUMERICAL_PRESET,
            Preset::Vehicle => VEHICLE_PRESET,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn load(self) -> Scenario {
        parse_scenario(self.source()).expect("shipped presets are valid")
    }
}

// ---------------------------------------------------------------- file schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub graph: GraphConfig,
    pub profile: PerformanceProfile,
    pub fuzzy: FuzzyConfig,
    pub plant: PlantConfig,
    pub leader: LeaderSignal,
    pub faults: FaultsConfig,
    pub controller: ControllerConfig,
    pub initial: InitialConfig,
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub acceptance: AcceptanceCriteria,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    /// Row `i` holds the weights `a_im` of the edges into follower `i`.
    pub adjacency: Vec<Vec<f64>>,
    pub leader: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyConfig {
    pub drift_centers: Vec<f64>,
    pub diffusion_centers: Vec<f64>,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinPlant {
    Numerical,
    Vehicle,
}

/// Either a builtin plant for every follower or one explicit plant per follower.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub builtin: Option<BuiltinPlant>,
    pub agents: Option<Vec<AgentPlant>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentPlant {
    pub drift: Vec<String>,
    pub diffusion: Vec<Vec<String>>,
    pub control: Vec<f64>,
}

/// Same schedule on every follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultsConfig {
    None,
    /// Odd windows `[p k, p (k + 1))` put actuator `h` into `modes[h]`.
    Alternating { period: f64, modes: Vec<FaultMode> },
    Explicit { actuators: Vec<Vec<FaultInterval>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// `k[i][j]`: agent `i`, step `j`.
    pub k: Vec<Vec<f64>>,
    /// One per step, shared by all agents.
    pub lambda: Vec<f64>,
    /// Young's weights `[eps1, eps2, eps3, eps4]` per step.
    pub eps: Vec<[f64; 4]>,
    /// One per filter.
    pub tau: Vec<f64>,
    pub eps5: f64,
    pub eps_tanh: f64,
    pub delta: f64,
    pub delta_bar: f64,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub psi: f64,
    pub psi_bar: f64,
    pub filter_error_bound: f64,
    #[serde(default)]
    pub exponents: TermExponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub states: Vec<Vec<f64>>,
    pub theta_hat: f64,
    pub vartheta_hat: f64,
    pub varphi_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub decimation: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub n_runs: usize,
    /// Treat any envelope breach in any run as an ensemble failure.
    #[serde(default)]
    pub strict_envelope: bool,
    #[serde(default = "unit")]
    pub noise_scale: f64,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

/// Optional pass thresholds checked on recorded times `t >= from`
/// (the settling time when `from` is absent).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceCriteria {
    pub from: Option<f64>,
    /// Bound on the ensemble mean of every `|z_i1|`.
    pub mean_abs_z_below: Option<f64>,
    /// Per-run bound on `sup |z_i1|`, which must hold in at least
    /// `run_fraction` of the runs.
    pub run_sup_z_below: Option<f64>,
    pub run_fraction: Option<f64>,
    /// Bound on the ensemble mean of `||e~||`.
    pub mean_error_norm_below: Option<f64>,
}

// ---------------------------------------------------------------- errors

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    fn from_toml(src: &str, err: &toml::de::Error) -> Self {
        let offset = err.span().map_or(0, |s| s.start);
        let before = &src[..offset.min(src.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        Self { line, column, message: err.message().trim().to_string() }
    }
}

/// Which check an issue came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    /// Array lengths that disagree with the number of agents, steps or actuators.
    Shape,
    Graph,
    /// Some follower cannot be reached from the leader.
    LeaderReachability,
    /// The signed graph admits no two-camp partition.
    StructuralBalance,
    Profile,
    Plant,
    /// A control coefficient is zero, so its direction is unknown.
    ControlSign,
    /// Fault windows are malformed or lock every actuator at once.
    Faults,
    /// `0 < |z_i1(0)| < sigma0` fails for some follower.
    InitialEnvelope,
    Controller,
    Integrator,
    Fuzzy,
    Acceptance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationError {
    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation issue(s)", self.issues.len())?;
        for issue in &self.issues {
            write!(f, "\n  - {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

// ---------------------------------------------------------------- validated scenario

/// A validated scenario with its closed loop assembled.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub closed_loop: ClosedLoop,
    pub integrator: IntegratorConfig,
}

impl Scenario {
    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn seed(&self) -> u64 {
        self.config.integrator.seed
    }

    pub fn n_runs(&self) -> usize {
        self.config.integrator.n_runs
    }

    pub fn strict_envelope(&self) -> bool {
        self.config.integrator.strict_envelope
    }

    pub fn acceptance(&self) -> &AcceptanceCriteria {
        &self.config.acceptance
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&src)
}

pub fn parse_scenario(src: &str) -> Result<Scenario, ScenarioError> {
    let config: ScenarioConfig = toml::from_str(src).map_err(|e| ParseError::from_toml(src, &e))?;
    Ok(build(config)?)
}

#[derive(Default)]
struct Issues(Vec<ValidationIssue>);

impl Issues {
    fn push(&mut self, kind: IssueKind, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(ValidationIssue { kind, field: field.into(), message: message.into() });
    }

    fn positive(&mut self, kind: IssueKind, field: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(kind, field, format!("must be positive and finite, got {v}"));
        }
    }
}

/// Validates a parsed configuration and assembles the closed loop.
pub fn build(config: ScenarioConfig) -> Result<Scenario, ValidationError> {
    let mut issues = Issues::default();
    let c = &config;

    // graph
    let graph = match SignedDigraph::new(c.graph.adjacency.clone(), c.graph.leader.clone()) {
        Ok(g) => Some(g),
        Err(e) => {
            issues.push(IssueKind::Graph, "graph", e.to_string());
            None
        }
    };
    let n = c.graph.adjacency.len();
    let mut gauge = None;
    let mut gain_constant = None;
    if let Some(g) = &graph {
        if !g.has_leader_rooted_spanning_tree() {
            issues.push(
                IssueKind::LeaderReachability,
                "graph",
                "some follower is not reachable from the leader along directed edges",
            );
        }
        match g.gauge_partition() {
            Ok(p) => gauge = Some(p),
            Err(e) => issues.push(IssueKind::StructuralBalance, "graph", e.to_string()),
        }
        match g.error_gain_constant() {
            Ok(h) => gain_constant = Some(h),
            // already reported as unreachable
            Err(GraphError::SingularMatrix { .. }) if !g.has_leader_rooted_spanning_tree() => {}
            Err(e) => issues.push(IssueKind::Graph, "graph", e.to_string()),
        }
    }

    if let Err(e) = c.profile.validate() {
        issues.push(IssueKind::Profile, "profile", e.to_string());
    }

    // fuzzy
    if c.fuzzy.drift_centers.is_empty() || c.fuzzy.diffusion_centers.is_empty() {
        issues.push(IssueKind::Fuzzy, "fuzzy", "center lists must be non-empty");
    }
    if c.fuzzy.drift_centers.iter().chain(&c.fuzzy.diffusion_centers).any(|v| !v.is_finite()) {
        issues.push(IssueKind::Fuzzy, "fuzzy", "centers must be finite");
    }
    issues.positive(IssueKind::Fuzzy, "fuzzy.width", c.fuzzy.width);

    // integrator
    let ic = &c.integrator;
    let integrator = IntegratorConfig { dt: ic.dt, t_end: ic.t_end, decimation: ic.decimation };
    if let Err(e) = integrator.validate() {
        issues.push(IssueKind::Integrator, "integrator", e.to_string());
    }
    if ic.n_runs == 0 {
        issues.push(IssueKind::Integrator, "integrator.n_runs", "must be at least 1");
    }
    if !(ic.noise_scale >= 0.0 && ic.noise_scale.is_finite()) {
        issues.push(IssueKind::Integrator, "integrator.noise_scale", "must be finite and non-negative");
    }
    let tau_min = c.controller.tau.iter().cloned().fold(f64::INFINITY, f64::min);
    if tau_min.is_finite() && ic.dt > tau_min / 4.0 {
        issues.push(
            IssueKind::Integrator,
            "integrator.dt",
            format!("dt = {} must not exceed a quarter of the smallest filter constant ({tau_min})", ic.dt),
        );
    }

    // plant
    let horizon = if ic.t_end.is_finite() { ic.t_end } else { 0.0 };
    let models: Option<Vec<FollowerModel>> = match (&c.plant.builtin, &c.plant.agents) {
        (Some(_), Some(_)) | (None, None) => {
            issues.push(IssueKind::Plant, "plant", "set exactly one of `builtin` and `agents`");
            None
        }
        (Some(b), None) => {
            let bench = match b {
                BuiltinPlant::Numerical => builtin_numerical_example(horizon),
                BuiltinPlant::Vehicle => builtin_vehicle_example(horizon),
            };
            Some(vec![bench.models[0].clone(); n])
        }
        (None, Some(agents)) => {
            if agents.len() != n {
                issues.push(
                    IssueKind::Shape,
                    "plant.agents",
                    format!("{} plants for {n} followers", agents.len()),
                );
            }
            let mut out = Vec::new();
            for (i, a) in agents.iter().enumerate() {
                match agent_model(a) {
                    Ok(m) => out.push(m),
                    Err(msg) => issues.push(IssueKind::Plant, format!("plant.agents[{}]", i + 1), msg),
                }
            }
            (out.len() == agents.len() && agents.len() == n).then_some(out)
        }
    };
    if let Some(ms) = &models {
        for (i, m) in ms.iter().enumerate() {
            for (h, l) in m.control_coeffs().iter().enumerate() {
                if *l == 0.0 {
                    issues.push(
                        IssueKind::ControlSign,
                        format!("plant agent {}", i + 1),
                        format!("control coefficient {} is zero, so its sign is unknown", h + 1),
                    );
                }
            }
        }
    }

    // faults
    let schedule = match &c.faults {
        FaultsConfig::None => None,
        FaultsConfig::Alternating { period, modes } => {
            if !(*period > 0.0 && period.is_finite()) {
                issues.push(IssueKind::Faults, "faults.period", format!("must be positive, got {period}"));
                None
            } else {
                match FaultSchedule::alternating(*period, horizon, modes) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        issues.push(IssueKind::Faults, "faults", e.to_string());
                        None
                    }
                }
            }
        }
        FaultsConfig::Explicit { actuators } => match FaultSchedule::new(actuators.clone()) {
            Ok(s) => Some(s),
            Err(e) => {
                issues.push(IssueKind::Faults, "faults", e.to_string());
                None
            }
        },
    };
    let mut faults = Vec::new();
    if let Some(ms) = &models {
        for (i, m) in ms.iter().enumerate() {
            match &schedule {
                None if matches!(c.faults, FaultsConfig::None) => faults.push(FaultSchedule::healthy(m.actuators())),
                None => {}
                Some(s) if s.actuators() != m.actuators() => issues.push(
                    IssueKind::Shape,
                    "faults",
                    format!("schedule covers {} actuators, agent {} has {}", s.actuators(), i + 1, m.actuators()),
                ),
                Some(s) => faults.push(s.clone()),
            }
        }
    }

    // initial conditions
    let init = &c.initial;
    if init.states.len() != n {
        issues.push(IssueKind::Shape, "initial.states", format!("{} states for {n} followers", init.states.len()));
    }
    if init.states.iter().flatten().any(|v| !v.is_finite()) {
        issues.push(IssueKind::Shape, "initial.states", "states must be finite");
    }
    if let Some(ms) = &models {
        for (i, (m, x)) in ms.iter().zip(&init.states).enumerate() {
            if x.len() != m.order() {
                issues.push(
                    IssueKind::Shape,
                    format!("initial.states[{}]", i + 1),
                    format!("has {} entries, plant order is {}", x.len(), m.order()),
                );
            }
        }
    }
    for (name, v) in [
        ("initial.theta_hat", init.theta_hat),
        ("initial.vartheta_hat", init.vartheta_hat),
        ("initial.varphi_hat", init.varphi_hat),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            issues.push(IssueKind::Shape, name, format!("estimates start non-negative and finite, got {v}"));
        }
    }
    let shapes_ok = init.states.len() == n && init.states.iter().all(|x| !x.is_empty());
    if shapes_ok && c.profile.validate().is_ok() {
        let ys: Vec<f64> = init.states.iter().map(|x| x[0]).collect();
        let y_r = c.leader.value(0.0);
        for i in 0..n {
            let row = &c.graph.adjacency[i];
            let b = c.graph.leader.get(i).copied().unwrap_or(0.0);
            if row.len() != n {
                continue;
            }
            let z0 = bipartite_error(row, b, ys[i], &ys, y_r);
            if let Err(e) = c.profile.validate_initial(z0) {
                issues.push(IssueKind::InitialEnvelope, format!("initial.states[{}]", i + 1), e.to_string());
            }
        }
    }

    // controller gains
    let cc = &c.controller;
    let mut controllers = Vec::new();
    if cc.k.len() != n {
        issues.push(IssueKind::Shape, "controller.k", format!("{} gain rows for {n} followers", cc.k.len()));
    }
    if [cc.exponents.drift, cc.exponents.drift_residual, cc.exponents.sign_bound, cc.exponents.diffusion]
        .iter()
        .chain(&[
            cc.exponents.diffusion_residual,
            cc.exponents.delta_drift,
            cc.exponents.delta_diffusion,
            cc.exponents.second_step_coupling,
            cc.exponents.last_step_coupling,
        ])
        .any(|v| !v.is_finite())
    {
        issues.push(IssueKind::Controller, "controller.exponents", "exponents must be finite");
    }
    if let (Some(g), Some(ms)) = (&graph, &models) {
        for (i, m) in ms.iter().enumerate() {
            let order = m.order();
            let Some(ks) = cc.k.get(i) else { continue };
            if ks.len() != order || cc.lambda.len() != order || cc.eps.len() != order {
                issues.push(
                    IssueKind::Shape,
                    "controller",
                    format!(
                        "agent {}: k, lambda and eps need {order} entries, got {}, {}, {}",
                        i + 1,
                        ks.len(),
                        cc.lambda.len(),
                        cc.eps.len()
                    ),
                );
                continue;
            }
            let gains = AgentGains {
                steps: (0..order).map(|j| StepGains { k: ks[j], lambda: cc.lambda[j], eps: cc.eps[j] }).collect(),
                tau: cc.tau.clone(),
                eps5: cc.eps5,
                delta: cc.delta,
                delta_bar: cc.delta_bar,
                gamma: cc.gamma,
                gamma_bar: cc.gamma_bar,
                psi: cc.psi,
                psi_bar: cc.psi_bar,
                eps_tanh: cc.eps_tanh,
                filter_error_bound: cc.filter_error_bound,
            };
            match AgentController::new(
                i,
                g,
                order,
                m.control_coeffs(),
                gains,
                cc.exponents,
                &c.fuzzy.drift_centers,
                &c.fuzzy.diffusion_centers,
                c.fuzzy.width,
            ) {
                Ok(ctl) => controllers.push(ctl),
                // a follower with no in-edges is already a reachability issue
                Err(crate::controller::ControllerError::UnactuatedAgent { .. })
                    if !g.has_leader_rooted_spanning_tree() => {}
                Err(e) => issues.push(IssueKind::Controller, "controller", e.to_string()),
            }
        }
    }

    // acceptance
    let a = &c.acceptance;
    for (name, v) in [
        ("acceptance.mean_abs_z_below", a.mean_abs_z_below),
        ("acceptance.run_sup_z_below", a.run_sup_z_below),
        ("acceptance.mean_error_norm_below", a.mean_error_norm_below),
    ] {
        if let Some(v) = v {
            issues.positive(IssueKind::Acceptance, name, v);
        }
    }
    if let Some(f) = a.run_fraction {
        if !(f > 0.0 && f <= 1.0) {
            issues.push(IssueKind::Acceptance, "acceptance.run_fraction", format!("must lie in (0, 1], got {f}"));
        }
        if a.run_sup_z_below.is_none() {
            issues.push(IssueKind::Acceptance, "acceptance.run_fraction", "needs run_sup_z_below");
        }
    }
    if let Some(t) = a.from {
        if !(t >= 0.0 && t.is_finite()) {
            issues.push(IssueKind::Acceptance, "acceptance.from", format!("must be a finite time, got {t}"));
        }
    }

    if !issues.0.is_empty() {
        return Err(ValidationError { issues: issues.0 });
    }
    let closed_loop = ClosedLoop {
        profile: c.profile,
        leader: c.leader,
        models: models.expect("checked"),
        faults,
        controllers,
        initial_states: init.states.clone(),
        initial_adaptive: vec![
            AdaptiveState {
                theta_hat: init.theta_hat,
                vartheta_hat: init.vartheta_hat,
                varphi_hat: init.varphi_hat,
            };
            n
        ],
        gauge: gauge.expect("checked"),
        gain_constant: gain_constant.expect("checked"),
        noise_scale: ic.noise_scale,
    };
    Ok(Scenario { config, closed_loop, integrator })
}

fn agent_model(a: &AgentPlant) -> Result<FollowerModel, String> {
    let parse = |s: &String| Expr::parse(s).map_err(|e| e.to_string());
    let drift = a.drift.iter().map(parse).collect::<Result<Vec<_>, _>>()?;
    let diffusion = a
        .diffusion
        .iter()
        .map(|row| row.iter().map(parse).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    FollowerModel::new(drift, diffusion, a.control.clone()).map_err(|e| e.to_string())
}
