//! Euler-Maruyama integration of the closed loop and seeded ensembles.
//!
//! Plant states receive Brownian increments; controller states (compensation
//! signals, filter outputs, estimates) are advanced by the same explicit Euler
//! step with no noise. Each run owns one ChaCha8 stream seeded from its seed,
//! drawn agent-major and noise-dimension-minor at every step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{AdaptiveState, AgentController, ControlOutput, ControllerError, ControllerState, LeaderSample};
use crate::dynamics::{DynamicsError, FaultSchedule, FollowerModel, LeaderSignal};
use crate::ftpf::{FtpfError, PerformanceProfile};
use crate::graph::GaugePartition;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("non-finite {component} at t = {t}")]
    NonFiniteState { t: f64, component: String },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid integrator settings: {0}")]
    Config(String),
}

impl EngineError {
    pub fn is_boundary_violation(&self) -> bool {
        matches!(self, EngineError::Controller(ControllerError::Envelope(FtpfError::BoundaryViolation { .. })))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record every `decimation`-th step (the first and last step always).
    pub decimation: usize,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_end.is_finite() && self.dt <= self.t_end) {
            return Err(EngineError::Config(format!("need 0 < dt <= t_end, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if self.decimation == 0 {
            return Err(EngineError::Config("decimation must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// One Euler-Maruyama step: `x += f dt + G dW` with `G` row-major `n x r`.
pub fn em_step(x: &mut [f64], drift: &[f64], diffusion: &[f64], dw: &[f64], dt: f64) -> Result<(), EngineError> {
    let r = dw.len();
    for (i, xi) in x.iter_mut().enumerate() {
        let mut v = *xi + drift[i] * dt;
        for k in 0..r {
            v += diffusion[i * r + k] * dw[k];
        }
        if !v.is_finite() {
            return Err(EngineError::NonFiniteState { t: f64::NAN, component: format!("x[{i}]") });
        }
        *xi = v;
    }
    Ok(())
}

/// Integrates a generic Itô SDE from `x0` and returns the terminal state.
pub fn integrate_sde<F, G>(
    x0: &[f64],
    noise_dim: usize,
    dt: f64,
    steps: usize,
    seed: u64,
    mut drift: F,
    mut diffusion: G,
) -> Result<Vec<f64>, EngineError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0.to_vec();
    let (mut f, mut g, mut dw) = (vec![0.0; n], vec![0.0; n * noise_dim], vec![0.0; noise_dim]);
    let sq = dt.sqrt();
    for s in 0..steps {
        let t = s as f64 * dt;
        drift(t, &x, &mut f);
        diffusion(t, &x, &mut g);
        for w in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * sq;
        }
        em_step(&mut x, &f, &g, &dw, dt).map_err(|e| match e {
            EngineError::NonFiniteState { component, .. } => EngineError::NonFiniteState { t, component },
            other => other,
        })?;
    }
    Ok(x)
}

/// The assembled multi-agent closed loop.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub profile: PerformanceProfile,
    pub leader: LeaderSignal,
    pub models: Vec<FollowerModel>,
    pub faults: Vec<FaultSchedule>,
    pub controllers: Vec<AgentController>,
    pub initial_states: Vec<Vec<f64>>,
    pub initial_adaptive: Vec<AdaptiveState>,
    pub gauge: GaugePartition,
    /// Smallest singular value of `L + B`.
    pub gain_constant: f64,
    /// Multiplier on every diffusion term (0 switches noise off).
    pub noise_scale: f64,
}

impl ClosedLoop {
    pub fn agents(&self) -> usize {
        self.models.len()
    }
}

/// Per-agent slice of one recorded instant.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub x: Vec<f64>,
    pub z: f64,
    pub e_star: f64,
    pub zeta_bar: Vec<f64>,
    pub eta: Vec<f64>,
    pub theta_hat: f64,
    pub vartheta_hat: f64,
    pub varphi_hat: f64,
    pub u: Vec<f64>,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub sigma: f64,
    pub leader: f64,
    pub agents: Vec<AgentRecord>,
}

impl TraceRow {
    /// `||z||` over agents.
    pub fn z_norm(&self) -> f64 {
        self.agents.iter().map(|a| a.z * a.z).sum::<f64>().sqrt()
    }

    /// `||e~||` with `e~_i = y_i - S_i y_r`.
    pub fn tracking_error_norm(&self, gauge: &GaugePartition) -> f64 {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let e = a.x[0] - gauge.sign(i) * self.leader;
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Shape of a trace: state order and actuator count per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLayout {
    pub orders: Vec<usize>,
    pub actuators: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub layout: TraceLayout,
    pub rows: Vec<TraceRow>,
}

/// Why a run stopped early, with the rows recorded up to then.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: EngineError,
    pub t: f64,
    pub recorded: usize,
}

pub fn layout_of(cl: &ClosedLoop) -> TraceLayout {
    TraceLayout {
        orders: cl.models.iter().map(|m| m.order()).collect(),
        actuators: cl.models.iter().map(|m| m.actuators()).collect(),
    }
}

/// Runs one trajectory, handing every recorded row to `sink`.
pub fn simulate_with<S: FnMut(TraceRow)>(
    cl: &ClosedLoop,
    cfg: &IntegratorConfig,
    seed: u64,
    mut sink: S,
) -> Result<usize, RunFailure> {
    let fail = |error: EngineError, t: f64, recorded: usize| RunFailure { error, t, recorded };
    cfg.validate().map_err(|e| fail(e, 0.0, 0))?;
    let n_agents = cl.agents();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Vec<f64>> = cl.initial_states.clone();
    let mut states: Vec<ControllerState> = cl
        .models
        .iter()
        .zip(&cl.initial_adaptive)
        .map(|(m, a)| ControllerState::new(m.order(), *a))
        .collect();
    let mut outs: Vec<ControlOutput> = cl.controllers.iter().map(|c| c.output_buffer()).collect();
    let mut omega: Vec<Vec<f64>> = cl.models.iter().map(|m| vec![0.0; m.actuators()]).collect();
    let mut drift: Vec<Vec<f64>> = cl.models.iter().map(|m| vec![0.0; m.order()]).collect();
    let mut diff: Vec<Vec<f64>> = cl.models.iter().map(|m| vec![0.0; m.order() * m.noise_dim()]).collect();
    let mut dw: Vec<Vec<f64>> = cl.models.iter().map(|m| vec![0.0; m.noise_dim()]).collect();
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let mut recorded = 0usize;

    for s in 0..=steps {
        let t = s as f64 * dt;
        let leader = LeaderSample { value: cl.leader.value(t), rate: cl.leader.derivative(t) };
        for i in 0..n_agents {
            cl.controllers[i]
                .evaluate(t, &x, leader, &cl.profile, &states[i], s == 0, &mut outs[i])
                .map_err(|e| fail(e.into(), t, recorded))?;
            if s == 0 {
                states[i].alpha_star.copy_from_slice(&outs[i].alpha);
            }
            cl.faults[i]
                .apply_into(&outs[i].commands, t, &mut omega[i])
                .map_err(|e| fail(e.into(), t, recorded))?;
        }
        if s % cfg.decimation == 0 || s == steps {
            sink(TraceRow {
                t,
                sigma: cl.profile.sigma(t),
                leader: leader.value,
                agents: (0..n_agents)
                    .map(|i| AgentRecord {
                        x: x[i].clone(),
                        z: outs[i].z,
                        e_star: outs[i].e_star,
                        zeta_bar: outs[i].zeta_bar.clone(),
                        eta: states[i].eta.clone(),
                        theta_hat: states[i].adaptive.theta_hat,
                        vartheta_hat: states[i].adaptive.vartheta_hat,
                        varphi_hat: states[i].adaptive.varphi_hat,
                        u: outs[i].commands.clone(),
                        omega: omega[i].clone(),
                    })
                    .collect(),
            });
            recorded += 1;
        }
        if s == steps {
            break;
        }
        // Noise is drawn for every agent before any state moves.
        for w in dw.iter_mut().flatten() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * sq;
        }
        for i in 0..n_agents {
            let m = &cl.models[i];
            m.drift_increment_into(&x[i], &omega[i], &mut drift[i]);
            m.diffusion_into(&x[i], &mut diff[i]);
            if cl.noise_scale != 1.0 {
                diff[i].iter_mut().for_each(|g| *g *= cl.noise_scale);
            }
        }
        for i in 0..n_agents {
            em_step(&mut x[i], &drift[i], &diff[i], &dw[i], dt).map_err(|_| {
                fail(EngineError::NonFiniteState { t, component: format!("agent {} plant state", i + 1) }, t, recorded)
            })?;
            let o = &outs[i];
            let st = &mut states[i];
            for (e, d) in st.eta.iter_mut().zip(&o.eta_dot) {
                *e += dt * d;
            }
            for (a, d) in st.alpha_star.iter_mut().zip(&o.alpha_star_dot) {
                *a += dt * d;
            }
            st.adaptive.theta_hat += dt * o.adaptive_dot.0;
            st.adaptive.vartheta_hat += dt * o.adaptive_dot.1;
            st.adaptive.varphi_hat += dt * o.adaptive_dot.2;
            if !st.is_finite() {
                return Err(fail(
                    EngineError::NonFiniteState { t, component: format!("agent {} controller state", i + 1) },
                    t,
                    recorded,
                ));
            }
        }
    }
    Ok(recorded)
}

pub fn simulate_trajectory(cl: &ClosedLoop, cfg: &IntegratorConfig, seed: u64) -> Result<SimulationTrace, RunFailure> {
    let mut rows = Vec::new();
    simulate_with(cl, cfg, seed, |r| rows.push(r))?;
    Ok(SimulationTrace { layout: layout_of(cl), rows })
}

/// Statistics reduced from one run while it executes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    /// `None` when the run completed.
    pub failure: Option<String>,
    /// Time at which a failed run stopped.
    pub failed_at: Option<f64>,
    pub boundary_violation: bool,
    pub times: Vec<f64>,
    /// `|z_i1|` per recorded time, per agent.
    pub abs_z: Vec<Vec<f64>>,
    /// `||e~||` per recorded time.
    pub error_norm: Vec<f64>,
    /// `sup |z_i1|` over recorded `t >= Ts`, per agent.
    pub sup_z_after_settling: Vec<f64>,
    /// Whether `|z_i1| < sigma` held on every recorded row.
    pub inside_envelope: bool,
    /// Largest `||e~|| - ||z|| / h` over recorded rows.
    pub worst_error_bound_gap: f64,
}

impl RunSummary {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Folds recorded rows into a [`RunSummary`] as they stream out of a run.
#[derive(Debug, Clone)]
pub struct SummaryBuilder<'a> {
    gauge: &'a GaugePartition,
    gain_constant: f64,
    ts: f64,
    sum: RunSummary,
}

impl<'a> SummaryBuilder<'a> {
    pub fn new(seed: u64, agents: usize, ts: f64, gauge: &'a GaugePartition, gain_constant: f64) -> Self {
        Self {
            gauge,
            gain_constant,
            ts,
            sum: RunSummary {
                seed,
                failure: None,
                failed_at: None,
                boundary_violation: false,
                times: Vec::new(),
                abs_z: Vec::new(),
                error_norm: Vec::new(),
                sup_z_after_settling: vec![0.0; agents],
                inside_envelope: true,
                worst_error_bound_gap: f64::NEG_INFINITY,
            },
        }
    }

    pub fn for_loop(cl: &'a ClosedLoop, seed: u64) -> Self {
        Self::new(seed, cl.agents(), cl.profile.ts, &cl.gauge, cl.gain_constant)
    }

    pub fn push(&mut self, row: &TraceRow) {
        let sum = &mut self.sum;
        let zs: Vec<f64> = row.agents.iter().map(|a| a.z.abs()).collect();
        let e = row.tracking_error_norm(self.gauge);
        let gap = e - row.z_norm() / self.gain_constant;
        sum.worst_error_bound_gap = sum.worst_error_bound_gap.max(gap);
        if zs.iter().any(|z| *z >= row.sigma) {
            sum.inside_envelope = false;
        }
        if row.t >= self.ts {
            for (s, z) in sum.sup_z_after_settling.iter_mut().zip(&zs) {
                *s = s.max(*z);
            }
        }
        sum.times.push(row.t);
        sum.abs_z.push(zs);
        sum.error_norm.push(e);
    }

    pub fn finish(mut self, failure: Option<&RunFailure>) -> RunSummary {
        if let Some(RunFailure { error: err, t, .. }) = failure {
            self.sum.failed_at = Some(*t);
            self.sum.boundary_violation = err.is_boundary_violation();
            if self.sum.boundary_violation {
                self.sum.inside_envelope = false;
            }
            self.sum.failure = Some(err.to_string());
        }
        self.sum
    }
}

pub fn summarize_run(cl: &ClosedLoop, cfg: &IntegratorConfig, seed: u64) -> RunSummary {
    let mut b = SummaryBuilder::for_loop(cl, seed);
    let result = simulate_with(cl, cfg, seed, |row| b.push(&row));
    b.finish(result.err().as_ref())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub runs: Vec<RunSummary>,
    pub times: Vec<f64>,
    /// Mean `|z_i1|` over completed runs, per recorded time and agent.
    pub mean_abs_z: Vec<Vec<f64>>,
    /// Mean `||e~||` over completed runs, per recorded time.
    pub mean_error_norm: Vec<f64>,
}

impl EnsembleResult {
    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    pub fn completed(&self) -> usize {
        self.runs.iter().filter(|r| r.completed()).count()
    }
}

/// Runs seeds `base_seed .. base_seed + n_runs` in parallel. Failed runs are
/// reported, not fatal; means cover completed runs only.
pub fn run_ensemble(cl: &ClosedLoop, cfg: &IntegratorConfig, n_runs: usize, base_seed: u64) -> EnsembleResult {
    let runs: Vec<RunSummary> = (0..n_runs as u64)
        .into_par_iter()
        .map(|k| summarize_run(cl, cfg, base_seed.wrapping_add(k)))
        .collect();
    aggregate(runs)
}

pub fn aggregate(runs: Vec<RunSummary>) -> EnsembleResult {
    let done: Vec<&RunSummary> = runs.iter().filter(|r| r.completed()).collect();
    let times = done.first().map(|r| r.times.clone()).unwrap_or_default();
    let agents = done.first().and_then(|r| r.abs_z.first()).map_or(0, |z| z.len());
    let mut mean_abs_z = vec![vec![0.0; agents]; times.len()];
    let mut mean_error_norm = vec![0.0; times.len()];
    let count = done.len() as f64;
    for r in &done {
        for (k, zs) in r.abs_z.iter().enumerate() {
            for (acc, z) in mean_abs_z[k].iter_mut().zip(zs) {
                *acc += z / count;
            }
            mean_error_norm[k] += r.error_norm[k] / count;
        }
    }
    EnsembleResult { runs, times, mean_abs_z, mean_error_norm }
}
