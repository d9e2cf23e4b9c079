//! Distributed command-filtered backstepping controller for one follower.
//!
//! The free functions are the individual control laws, kept pure so they can
//! be checked in isolation. [`AgentController`] strings them together for one
//! agent at one instant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fls::{FlsError, FuzzySystem, MembershipGrid};
use crate::ftpf::{mu, FtpfError, PerformanceProfile};
use crate::graph::SignedDigraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("agent {agent} has no in-edges and no leader link")]
    UnactuatedAgent { agent: usize },
    #[error("agent {agent}: controller needs a plant of order at least 2, got {order}")]
    OrderTooLow { agent: usize, order: usize },
    #[error("agent {agent}: gains cover {got} steps, plant has {expected}")]
    StepCount { agent: usize, expected: usize, got: usize },
    #[error("agent {agent}: gain {name} must be positive and finite, got {value}")]
    NonPositiveGain { agent: usize, name: String, value: f64 },
    #[error("agent {agent} step {step}: lambda {lambda} must exceed the filter-error bound {bound}")]
    LambdaBelowFilterBound { agent: usize, step: usize, lambda: f64, bound: f64 },
    #[error(transparent)]
    Envelope(#[from] FtpfError),
    #[error("agent {agent}: {source}")]
    Fuzzy { agent: usize, source: FlsError },
}

/// `sgn` with `sgn(0) = 0`.
#[inline]
pub fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gains that belong to one backstepping step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepGains {
    pub k: f64,
    pub lambda: f64,
    /// Young's-inequality weights: drift estimate, drift residual, diffusion
    /// estimate, diffusion residual.
    pub eps: [f64; 4],
}

impl StepGains {
    /// `3 eps1^(4/3) / 4`
    pub fn c_drift(&self) -> f64 {
        0.75 * self.eps[0].powf(4.0 / 3.0)
    }
    /// `3 eps2^(4/3) / 4`
    pub fn c_drift_residual(&self) -> f64 {
        0.75 * self.eps[1].powf(4.0 / 3.0)
    }
    /// `3 eps3^2 / 4`
    pub fn c_diffusion(&self) -> f64 {
        0.75 * self.eps[2] * self.eps[2]
    }
    /// `3 eps4^2 / 4`
    pub fn c_diffusion_residual(&self) -> f64 {
        0.75 * self.eps[3] * self.eps[3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentGains {
    pub steps: Vec<StepGains>,
    /// One filter time constant per virtual control (`order - 1`).
    pub tau: Vec<f64>,
    pub eps5: f64,
    pub delta: f64,
    pub delta_bar: f64,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub psi: f64,
    pub psi_bar: f64,
    pub eps_tanh: f64,
    /// Assumed bound on `|alpha* - alpha|` once the filters settle.
    pub filter_error_bound: f64,
}

impl AgentGains {
    pub fn validate(&self, agent: usize, order: usize) -> Result<(), ControllerError> {
        if self.steps.len() != order {
            return Err(ControllerError::StepCount { agent, expected: order, got: self.steps.len() });
        }
        if self.tau.len() + 1 != order {
            return Err(ControllerError::StepCount { agent, expected: order - 1, got: self.tau.len() });
        }
        let mut named: Vec<(String, f64)> = vec![
            ("eps5".into(), self.eps5),
            ("delta".into(), self.delta),
            ("delta_bar".into(), self.delta_bar),
            ("gamma".into(), self.gamma),
            ("gamma_bar".into(), self.gamma_bar),
            ("psi".into(), self.psi),
            ("psi_bar".into(), self.psi_bar),
            ("eps_tanh".into(), self.eps_tanh),
        ];
        for (j, t) in self.tau.iter().enumerate() {
            named.push((format!("tau[{}]", j + 1), *t));
        }
        for (j, s) in self.steps.iter().enumerate() {
            named.push((format!("k[{}]", j + 1), s.k));
            named.push((format!("lambda[{}]", j + 1), s.lambda));
            for (e, v) in s.eps.iter().enumerate() {
                named.push((format!("eps{}[{}]", e + 1, j + 1), *v));
            }
        }
        for (name, value) in named {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControllerError::NonPositiveGain { agent, name, value });
            }
        }
        if !(self.filter_error_bound >= 0.0) {
            return Err(ControllerError::NonPositiveGain {
                agent,
                name: "filter_error_bound".into(),
                value: self.filter_error_bound,
            });
        }
        for (j, s) in self.steps.iter().enumerate() {
            if s.lambda <= self.filter_error_bound {
                return Err(ControllerError::LambdaBelowFilterBound {
                    agent,
                    step: j + 1,
                    lambda: s.lambda,
                    bound: self.filter_error_bound,
                });
            }
        }
        Ok(())
    }

    pub fn min_k(&self) -> f64 {
        self.steps.iter().map(|s| s.k).fold(f64::INFINITY, f64::min)
    }
}

/// Powers of `xi` (and `xi q`) carried by the damping terms that couple to the
/// envelope. Defaults give the full design; each can be overridden
/// from a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermExponents {
    /// `xi` power on the adaptive drift term of the first virtual control.
    pub drift: f64,
    /// `xi` power on the plain drift-residual term of the first virtual control.
    pub drift_residual: f64,
    /// `xi` power on the `3/4` sign-bounding term of the first virtual control.
    pub sign_bound: f64,
    /// `xi` power on the adaptive diffusion term of the first virtual control.
    pub diffusion: f64,
    /// `xi` power on the plain diffusion-residual term of the first virtual control.
    pub diffusion_residual: f64,
    /// `xi` power on the drift part of the first-step adaptation increment.
    pub delta_drift: f64,
    /// `xi` power on the diffusion part of the first-step adaptation increment.
    pub delta_diffusion: f64,
    /// `xi q` power on the `27/4` cross-term damping of the second virtual control.
    pub second_step_coupling: f64,
    /// `xi q` power on the `27/256` cross-term damping of the final step when
    /// it directly follows the first.
    pub last_step_coupling: f64,
}

impl Default for TermExponents {
    fn default() -> Self {
        Self {
            drift: 4.0 / 3.0,
            drift_residual: 4.0 / 3.0,
            sign_bound: 4.0 / 3.0,
            diffusion: 3.0,
            diffusion_residual: 3.0,
            delta_drift: 4.0 / 3.0,
            delta_diffusion: 4.0,
            second_step_coupling: 4.0,
            last_step_coupling: 0.0,
        }
    }
}

/// `z_i1 = sum_m |a_im| (y_i - sgn(a_im) y_m) + |b_i| (y_i - sgn(b_i) y_r)`.
pub fn bipartite_error(row: &[f64], b: f64, y_i: f64, ys: &[f64], y_r: f64) -> f64 {
    let mut z = b.abs() * (y_i - sgn(b) * y_r);
    for (a, y_m) in row.iter().zip(ys) {
        if *a != 0.0 {
            z += a.abs() * (y_i - sgn(*a) * y_m);
        }
    }
    z
}

pub fn compensated_errors(zeta: &[f64], eta: &[f64]) -> Vec<f64> {
    zeta.iter().zip(eta).map(|(z, e)| z - e).collect()
}

/// Everything the first virtual control reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstStepInputs {
    pub zeta: f64,
    pub zeta_bar: f64,
    pub xi: f64,
    pub q: f64,
    pub b: f64,
    pub leader_rate: f64,
    /// `(2/pi) atan(e*)`
    pub mu: f64,
    pub sigma_dot: f64,
    pub theta_hat: f64,
    /// `||Phi_11||`, `||Phi_12||`
    pub phi_norms: [f64; 2],
}

pub fn virtual_control_first(
    v: &FirstStepInputs,
    g: &StepGains,
    ex: &TermExponents,
) -> Result<f64, ControllerError> {
    if v.q <= 0.0 {
        return Err(ControllerError::UnactuatedAgent { agent: 0 });
    }
    let zb = v.zeta_bar;
    let damping = g.c_drift() * zb * v.xi.powf(ex.drift) * v.theta_hat * v.phi_norms[0].powf(4.0 / 3.0)
        + g.c_diffusion() * zb * v.xi.powf(ex.diffusion) * v.theta_hat * v.phi_norms[1].powi(2)
        + 0.75 * zb * v.xi.powf(ex.sign_bound)
        + g.c_drift_residual() * zb * v.xi.powf(ex.drift_residual)
        + g.c_diffusion_residual() * zb * v.xi.powf(ex.diffusion_residual);
    let feedforward = v.b * v.leader_rate + v.mu * v.sigma_dot;
    Ok(-(g.k + 1.0) / (v.xi * v.q) * v.zeta + (feedforward - damping) / v.q)
}

/// Inputs of a middle step `o` (1-based, `2 <= o < n`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidStepInputs {
    pub step: usize,
    pub zeta: f64,
    pub zeta_bar: f64,
    pub eta_prev: f64,
    pub filter_rate_prev: f64,
    pub theta_hat: f64,
    pub phi_norms: [f64; 2],
    pub xi: f64,
    pub q: f64,
}

pub fn virtual_control_mid(v: &MidStepInputs, g: &StepGains, ex: &TermExponents) -> f64 {
    let zb = v.zeta_bar;
    let common = -(g.k + 1.0) * v.zeta + v.filter_rate_prev
        - g.c_drift() * zb * v.theta_hat * v.phi_norms[0].powf(4.0 / 3.0)
        - g.c_diffusion() * zb * v.theta_hat * v.phi_norms[1].powi(2)
        - g.c_drift_residual() * zb
        - g.c_diffusion_residual() * zb
        - 0.75 * zb;
    if v.step == 2 {
        let xq = v.xi * v.q;
        common - xq * v.eta_prev - 27.0 / 4.0 * xq.powf(ex.second_step_coupling) * zb
    } else {
        common - 27.0 / 256.0 * zb - v.eta_prev
    }
}

/// Inputs of the final step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LastStepInputs {
    pub zeta: f64,
    pub zeta_bar: f64,
    pub eta_prev: f64,
    pub filter_rate_prev: f64,
    pub theta_hat: f64,
    pub vartheta_hat: f64,
    pub phi_norms: [f64; 2],
    /// Scale on the previous compensation signal and the cross-term damping:
    /// `xi q` when the final step directly follows the first, else 1.
    pub coupling: f64,
}

pub fn intermediate_control(v: &LastStepInputs, g: &StepGains, eps_tanh: f64, ex: &TermExponents) -> f64 {
    let zb = v.zeta_bar;
    let z3 = zb * zb * zb;
    (g.k + 1.0) * v.zeta
        + g.c_drift() * zb * v.theta_hat * v.phi_norms[0].powf(4.0 / 3.0)
        + g.c_drift_residual() * zb
        + g.c_diffusion() * zb * v.theta_hat * v.phi_norms[1].powi(2)
        + g.c_diffusion_residual() * zb
        + 27.0 / 256.0 * v.coupling.powf(ex.last_step_coupling) * zb
        - v.filter_rate_prev
        + v.coupling * v.eta_prev
        + v.vartheta_hat * (z3 / eps_tanh).tanh()
}

/// `abar = -zb^3 phi^2 ubar^2 / sqrt(zb^6 phi^2 ubar^2 + eps5^2)`.
pub fn actuator_command(zeta_bar: f64, varphi_hat: f64, ubar: f64, eps5: f64) -> f64 {
    let z3 = zeta_bar * zeta_bar * zeta_bar;
    let p = varphi_hat * ubar;
    let x = z3 * p;
    -z3 * p * p / (x * x + eps5 * eps5).sqrt()
}

/// `u_h = sgn(l_h) abar` for every actuator.
pub fn actuator_commands(zeta_bar: f64, varphi_hat: f64, ubar: f64, signs: &[f64], eps5: f64) -> Vec<f64> {
    let a = actuator_command(zeta_bar, varphi_hat, ubar, eps5);
    signs.iter().map(|s| sgn(*s) * a).collect()
}

/// Stacked compensation dynamics.
///
/// `filter_errors[j] = alpha*_j - alpha_j` for the `n - 1` virtual controls;
/// `xi_q` couples the first stage to the second.
pub fn compensation_derivatives(
    eta: &[f64],
    filter_errors: &[f64],
    steps: &[StepGains],
    xi_q: f64,
    out: &mut [f64],
) {
    let n = eta.len();
    for j in 0..n {
        let g = &steps[j];
        let mut d = -(g.k + 1.0) * eta[j];
        let scale = if j == 0 { xi_q } else { 1.0 };
        if j + 1 < n {
            d += scale * filter_errors[j] + scale * eta[j + 1];
        }
        if j > 0 {
            let back = if j == 1 { xi_q } else { 1.0 };
            d -= back * eta[j - 1];
        }
        d -= g.lambda * scale * sgn(eta[j]);
        out[j] = d;
    }
}

/// Adaptation increment accumulated over all steps. `zeta_bar[j]` and
/// `phi_norms[j]` belong to step `j + 1`; `xi` only enters the first step.
pub fn delta_accumulate(
    zeta_bar: &[f64],
    phi_norms: &[[f64; 2]],
    steps: &[StepGains],
    delta: f64,
    xi: f64,
    ex: &TermExponents,
) -> f64 {
    let mut acc = 0.0;
    for (j, ((zb, ph), g)) in zeta_bar.iter().zip(phi_norms).zip(steps).enumerate() {
        let z4 = zb.powi(4);
        let (xd, xg) = if j == 0 { (xi.powf(ex.delta_drift), xi.powf(ex.delta_diffusion)) } else { (1.0, 1.0) };
        acc += delta * g.c_drift() * z4 * xd * ph[0].powf(4.0 / 3.0)
            + delta * g.c_diffusion() * z4 * xg * ph[1].powi(2);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdaptiveState {
    pub theta_hat: f64,
    pub vartheta_hat: f64,
    pub varphi_hat: f64,
}

/// Returns `(d Theta, d vartheta, d varphi)`.
pub fn adaptive_derivatives(
    delta_acc: f64,
    zeta_bar: f64,
    ubar: f64,
    g: &AgentGains,
    s: &AdaptiveState,
) -> (f64, f64, f64) {
    let z3 = zeta_bar * zeta_bar * zeta_bar;
    (
        delta_acc - g.delta_bar * s.theta_hat,
        g.gamma * z3 * (z3 / g.eps_tanh).tanh() - g.gamma_bar * s.vartheta_hat,
        g.psi * z3 * ubar - g.psi_bar * s.varphi_hat,
    )
}

/// First-order command filter: `d alpha* = (alpha - alpha*) / tau`.
#[inline]
pub fn filter_derivative(alpha_star: f64, alpha: f64, tau: f64) -> f64 {
    (alpha - alpha_star) / tau
}

/// Internal states of one agent's controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub eta: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub adaptive: AdaptiveState,
}

impl ControllerState {
    pub fn new(order: usize, adaptive: AdaptiveState) -> Self {
        Self { eta: vec![0.0; order], alpha_star: vec![0.0; order - 1], adaptive }
    }

    pub fn is_finite(&self) -> bool {
        self.eta.iter().chain(&self.alpha_star).all(|v| v.is_finite())
            && self.adaptive.theta_hat.is_finite()
            && self.adaptive.vartheta_hat.is_finite()
            && self.adaptive.varphi_hat.is_finite()
    }
}

/// Everything produced by one controller evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlOutput {
    pub z: f64,
    pub e_star: f64,
    pub xi: f64,
    pub zeta: Vec<f64>,
    pub zeta_bar: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_star_dot: Vec<f64>,
    pub ubar: f64,
    pub abar: f64,
    pub commands: Vec<f64>,
    pub eta_dot: Vec<f64>,
    pub adaptive_dot: (f64, f64, f64),
    pub delta_acc: f64,
    scratch: Vec<f64>,
    filter_errors: Vec<f64>,
    phi_norms: Vec<[f64; 2]>,
}

/// Leader quantities sampled at the evaluation instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSample {
    pub value: f64,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct AgentController {
    agent: usize,
    order: usize,
    row: Vec<f64>,
    neighbors: Vec<usize>,
    b: f64,
    q: f64,
    control_signs: Vec<f64>,
    gains: AgentGains,
    exponents: TermExponents,
    /// Step-1 drift and diffusion approximators, then one pair per later step.
    fls: Vec<[FuzzySystem; 2]>,
}

impl AgentController {
    /// `drift_centers` and `diffusion_centers` are the scalar rule centers
    /// used for every approximator (diagonal grids).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        agent: usize,
        graph: &SignedDigraph,
        order: usize,
        control_coeffs: &[f64],
        gains: AgentGains,
        exponents: TermExponents,
        drift_centers: &[f64],
        diffusion_centers: &[f64],
        width: f64,
    ) -> Result<Self, ControllerError> {
        if order < 2 {
            return Err(ControllerError::OrderTooLow { agent: agent + 1, order });
        }
        gains.validate(agent + 1, order)?;
        let q = graph.total_weight(agent);
        if q <= 0.0 {
            return Err(ControllerError::UnactuatedAgent { agent: agent + 1 });
        }
        let neighbors = graph.neighbors(agent);
        let row = (0..graph.n()).map(|m| graph.weight(agent, m)).collect();
        let fuzzy = |centers: &[f64], dims: usize| {
            MembershipGrid::diagonal(centers, dims, width)
                .map(FuzzySystem::new)
                .map_err(|source| ControllerError::Fuzzy { agent: agent + 1, source })
        };
        let k = neighbors.len();
        let mut fls = vec![[fuzzy(drift_centers, 1 + 2 * k)?, fuzzy(diffusion_centers, 1 + k)?]];
        for j in 1..order {
            fls.push([fuzzy(drift_centers, j + 1)?, fuzzy(diffusion_centers, j + 1)?]);
        }
        Ok(Self {
            agent,
            order,
            row,
            neighbors,
            b: graph.leader_weight(agent),
            q,
            control_signs: control_coeffs.iter().map(|c| sgn(*c)).collect(),
            gains,
            exponents,
            fls,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn gains(&self) -> &AgentGains {
        &self.gains
    }

    pub fn exponents(&self) -> &TermExponents {
        &self.exponents
    }

    pub fn output_buffer(&self) -> ControlOutput {
        let n = self.order;
        ControlOutput {
            zeta: vec![0.0; n],
            zeta_bar: vec![0.0; n],
            alpha: vec![0.0; n - 1],
            alpha_star_dot: vec![0.0; n - 1],
            commands: vec![0.0; self.control_signs.len()],
            eta_dot: vec![0.0; n],
            scratch: Vec::with_capacity(1 + 2 * self.neighbors.len()),
            filter_errors: vec![0.0; n - 1],
            phi_norms: vec![[0.0; 2]; n],
            ..Default::default()
        }
    }

    /// Bipartite consensus error of this agent.
    pub fn consensus_error(&self, states: &[Vec<f64>], y_r: f64) -> f64 {
        let mut z = self.b.abs() * (states[self.agent][0] - sgn(self.b) * y_r);
        for &m in &self.neighbors {
            let a = self.row[m];
            z += a.abs() * (states[self.agent][0] - sgn(a) * states[m][0]);
        }
        z
    }

    /// Evaluates every law at time `t`. With `init` set the filter outputs
    /// are taken equal to their commands, which is how filters start.
    pub fn evaluate(
        &self,
        t: f64,
        states: &[Vec<f64>],
        leader: LeaderSample,
        profile: &PerformanceProfile,
        state: &ControllerState,
        init: bool,
        out: &mut ControlOutput,
    ) -> Result<(), ControllerError> {
        let n = self.order;
        let x = &states[self.agent];
        let fz = |e: FlsError| ControllerError::Fuzzy { agent: self.agent + 1, source: e };
        let ad = &state.adaptive;

        let z = self.consensus_error(states, leader.value);
        let e_star = profile.transform_error(t, z)?;
        let xi = profile.xi(t, e_star);
        out.z = z;
        out.e_star = e_star;
        out.xi = xi;

        out.scratch.clear();
        out.scratch.push(x[0]);
        for &m in &self.neighbors {
            out.scratch.push(states[m][0]);
            out.scratch.push(states[m][1]);
        }
        let n11 = self.fls[0][0].basis_norm(&out.scratch).map_err(fz)?;
        out.scratch.clear();
        out.scratch.push(x[0]);
        for &m in &self.neighbors {
            out.scratch.push(states[m][0]);
        }
        let n12 = self.fls[0][1].basis_norm(&out.scratch).map_err(fz)?;
        out.phi_norms[0] = [n11, n12];

        out.zeta[0] = e_star;
        out.zeta_bar[0] = e_star - state.eta[0];
        let first = FirstStepInputs {
            zeta: e_star,
            zeta_bar: out.zeta_bar[0],
            xi,
            q: self.q,
            b: self.b,
            leader_rate: leader.rate,
            mu: mu(e_star),
            sigma_dot: profile.sigma_dot(t),
            theta_hat: ad.theta_hat,
            phi_norms: [n11, n12],
        };
        out.alpha[0] = virtual_control_first(&first, &self.gains.steps[0], &self.exponents)
            .map_err(|_| ControllerError::UnactuatedAgent { agent: self.agent + 1 })?;

        for j in 1..n {
            let a_star = if init { out.alpha[j - 1] } else { state.alpha_star[j - 1] };
            out.alpha_star_dot[j - 1] = filter_derivative(a_star, out.alpha[j - 1], self.gains.tau[j - 1]);
            out.filter_errors[j - 1] = a_star - out.alpha[j - 1];
            out.zeta[j] = x[j] - a_star;
            out.zeta_bar[j] = out.zeta[j] - state.eta[j];
            let prefix = &x[..=j];
            let norms = [
                self.fls[j][0].basis_norm(prefix).map_err(fz)?,
                self.fls[j][1].basis_norm(prefix).map_err(fz)?,
            ];
            out.phi_norms[j] = norms;
            let g = &self.gains.steps[j];
            if j + 1 < n {
                let mid = MidStepInputs {
                    step: j + 1,
                    zeta: out.zeta[j],
                    zeta_bar: out.zeta_bar[j],
                    eta_prev: state.eta[j - 1],
                    filter_rate_prev: out.alpha_star_dot[j - 1],
                    theta_hat: ad.theta_hat,
                    phi_norms: norms,
                    xi,
                    q: self.q,
                };
                out.alpha[j] = virtual_control_mid(&mid, g, &self.exponents);
            } else {
                let last = LastStepInputs {
                    zeta: out.zeta[j],
                    zeta_bar: out.zeta_bar[j],
                    eta_prev: state.eta[j - 1],
                    filter_rate_prev: out.alpha_star_dot[j - 1],
                    theta_hat: ad.theta_hat,
                    vartheta_hat: ad.vartheta_hat,
                    phi_norms: norms,
                    coupling: if j == 1 { xi * self.q } else { 1.0 },
                };
                out.ubar = intermediate_control(&last, g, self.gains.eps_tanh, &self.exponents);
            }
        }

        let zb_n = out.zeta_bar[n - 1];
        out.abar = actuator_command(zb_n, ad.varphi_hat, out.ubar, self.gains.eps5);
        for (slot, s) in out.commands.iter_mut().zip(&self.control_signs) {
            *slot = s * out.abar;
        }
        compensation_derivatives(&state.eta, &out.filter_errors, &self.gains.steps, xi * self.q, &mut out.eta_dot);
        out.delta_acc = delta_accumulate(
            &out.zeta_bar,
            &out.phi_norms,
            &self.gains.steps,
            self.gains.delta,
            xi,
            &self.exponents,
        );
        out.adaptive_dot = adaptive_derivatives(out.delta_acc, zb_n, out.ubar, &self.gains, ad);
        Ok(())
    }
}
