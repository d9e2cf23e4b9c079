//! Follower plants, the leader trajectory and the actuator fault bank.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("model needs at least one layer")]
    EmptyModel,
    #[error("diffusion has {got} rows, model has {expected} layers")]
    DiffusionRows { expected: usize, got: usize },
    #[error("diffusion rows must all have the same positive width")]
    DiffusionWidth,
    #[error("layer {layer} term {expr} reads x{var}, beyond its own prefix")]
    NotLowerTriangular { layer: usize, var: usize, expr: String },
    #[error("at least one control coefficient must be nonzero")]
    Unactuated,
    #[error("control coefficients must be finite")]
    NonFiniteCoefficient,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("actuator {actuator}: interval [{start}, {end}) is empty or not finite")]
    BadInterval { actuator: usize, start: f64, end: f64 },
    #[error("actuator {actuator}: intervals overlap or are unsorted near t = {t}")]
    Overlap { actuator: usize, t: f64 },
    #[error("actuator {actuator}: partial-loss factor {rho} outside (0, 1)")]
    BadRho { actuator: usize, rho: f64 },
    #[error("actuator {actuator}: stuck value {nu} is not finite")]
    BadNu { actuator: usize, nu: f64 },
    #[error("all {count} actuators are in total loss at t = {t}")]
    NoWorkingActuator { t: f64, count: usize },
    #[error("commanded input has length {got}, bank has {expected} actuators")]
    InputLength { expected: usize, got: usize },
}

/// Strict-feedback plant of one follower.
///
/// Layer `l < n` integrates `x_{l+1} + f_l`; the last layer integrates
/// `sum_h l_h * omega_h + f_n`. Row `l` of the diffusion multiplies the shared
/// Brownian increment.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerModel {
    drift: Vec<Expr>,
    diffusion: Vec<Vec<Expr>>,
    control: Vec<f64>,
}

impl FollowerModel {
    pub fn new(
        drift: Vec<Expr>,
        diffusion: Vec<Vec<Expr>>,
        control: Vec<f64>,
    ) -> Result<Self, DynamicsError> {
        let n = drift.len();
        if n == 0 {
            return Err(DynamicsError::EmptyModel);
        }
        if diffusion.len() != n {
            return Err(DynamicsError::DiffusionRows { expected: n, got: diffusion.len() });
        }
        let r = diffusion[0].len();
        if r == 0 || diffusion.iter().any(|row| row.len() != r) {
            return Err(DynamicsError::DiffusionWidth);
        }
        for (l, e) in drift.iter().enumerate() {
            check_prefix(l, e)?;
            for g in &diffusion[l] {
                check_prefix(l, g)?;
            }
        }
        if control.iter().any(|c| !c.is_finite()) {
            return Err(DynamicsError::NonFiniteCoefficient);
        }
        if control.iter().all(|c| *c == 0.0) {
            return Err(DynamicsError::Unactuated);
        }
        Ok(Self { drift, diffusion, control })
    }

    /// Builds a model from expression strings.
    pub fn parse(drift: &[&str], diffusion: &[&[&str]], control: Vec<f64>) -> Result<Self, DynamicsError> {
        let drift = drift.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>, _>>()?;
        let diffusion = diffusion
            .iter()
            .map(|row| row.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(drift, diffusion, control)
    }

    pub fn order(&self) -> usize {
        self.drift.len()
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion[0].len()
    }

    pub fn actuators(&self) -> usize {
        self.control.len()
    }

    pub fn control_coeffs(&self) -> &[f64] {
        &self.control
    }

    pub fn drift_terms(&self) -> &[Expr] {
        &self.drift
    }

    pub fn diffusion_terms(&self) -> &[Vec<Expr>] {
        &self.diffusion
    }

    pub fn drift_increment_into(&self, x: &[f64], omega: &[f64], out: &mut [f64]) {
        let n = self.order();
        for l in 0..n {
            let feed = if l + 1 < n {
                x[l + 1]
            } else {
                self.control.iter().zip(omega).map(|(c, w)| c * w).sum()
            };
            out[l] = feed + self.drift[l].eval(x);
        }
    }

    pub fn drift_increment(&self, x: &[f64], omega: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.order()];
        self.drift_increment_into(x, omega, &mut out);
        out
    }

    /// Row-major `n x r` diffusion matrix.
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        let r = self.noise_dim();
        for (l, row) in self.diffusion.iter().enumerate() {
            for (k, g) in row.iter().enumerate() {
                out[l * r + k] = g.eval(x);
            }
        }
    }

    pub fn diffusion_row(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.diffusion.iter().map(|row| row.iter().map(|g| g.eval(x)).collect()).collect()
    }

    /// Whether every drift and diffusion term vanishes at the origin.
    pub fn vanishes_at_origin(&self) -> bool {
        let zero = vec![0.0; self.order()];
        self.drift.iter().chain(self.diffusion.iter().flatten()).all(|e| e.eval(&zero) == 0.0)
    }
}

fn check_prefix(layer: usize, e: &Expr) -> Result<(), DynamicsError> {
    if e.arity() > layer + 1 {
        return Err(DynamicsError::NotLowerTriangular { layer: layer + 1, var: e.arity(), expr: e.to_string() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FaultMode {
    Normal,
    /// Partial loss: output is `rho * u`.
    Ploe { rho: f64 },
    /// Total loss: output is stuck at `nu`.
    Tloe { nu: f64 },
}

impl FaultMode {
    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            FaultMode::Normal => u,
            FaultMode::Ploe { rho } => rho * u,
            FaultMode::Tloe { nu } => nu,
        }
    }

    /// Effectiveness slope of the output with respect to the command.
    pub fn slope(self) -> f64 {
        match self {
            FaultMode::Normal => 1.0,
            FaultMode::Ploe { rho } => rho,
            FaultMode::Tloe { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultInterval {
    pub start: f64,
    pub end: f64,
    #[serde(flatten)]
    pub mode: FaultMode,
}

/// Per-actuator lists of half-open fault windows; outside every window the
/// actuator is healthy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaultSchedule {
    actuators: Vec<Vec<FaultInterval>>,
}

impl FaultSchedule {
    pub fn new(actuators: Vec<Vec<FaultInterval>>) -> Result<Self, DynamicsError> {
        let s = Self { actuators };
        s.validate()?;
        Ok(s)
    }

    pub fn healthy(m: usize) -> Self {
        Self { actuators: vec![Vec::new(); m] }
    }

    /// Alternating windows: on `[p*k, p*(k+1))` for odd `k` up to `horizon`,
    /// actuator `h` runs in `modes[h]`.
    pub fn alternating(period: f64, horizon: f64, modes: &[FaultMode]) -> Result<Self, DynamicsError> {
        let mut actuators = vec![Vec::new(); modes.len()];
        let mut k = 1usize;
        while period * k as f64 <= horizon {
            let start = period * k as f64;
            let end = period * (k + 1) as f64;
            for (h, mode) in modes.iter().enumerate() {
                if *mode != FaultMode::Normal {
                    actuators[h].push(FaultInterval { start, end, mode: *mode });
                }
            }
            k += 2;
        }
        Self::new(actuators)
    }

    pub fn actuators(&self) -> usize {
        self.actuators.len()
    }

    pub fn intervals(&self, h: usize) -> &[FaultInterval] {
        &self.actuators[h]
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (h, list) in self.actuators.iter().enumerate() {
            let mut prev_end = f64::NEG_INFINITY;
            for iv in list {
                if !(iv.start.is_finite() && iv.end.is_finite() && iv.start < iv.end) {
                    return Err(DynamicsError::BadInterval { actuator: h + 1, start: iv.start, end: iv.end });
                }
                if iv.start < prev_end {
                    return Err(DynamicsError::Overlap { actuator: h + 1, t: iv.start });
                }
                prev_end = iv.end;
                match iv.mode {
                    FaultMode::Ploe { rho } if !(rho > 0.0 && rho < 1.0) => {
                        return Err(DynamicsError::BadRho { actuator: h + 1, rho });
                    }
                    FaultMode::Tloe { nu } if !nu.is_finite() => {
                        return Err(DynamicsError::BadNu { actuator: h + 1, nu });
                    }
                    _ => {}
                }
            }
        }
        // The TLOE count is piecewise constant and can only rise at a start.
        let m = self.actuators.len();
        for iv in self.actuators.iter().flatten() {
            if matches!(iv.mode, FaultMode::Tloe { .. }) {
                let count = self.tloe_count(iv.start);
                if m > 0 && count >= m {
                    return Err(DynamicsError::NoWorkingActuator { t: iv.start, count });
                }
            }
        }
        Ok(())
    }

    pub fn mode(&self, h: usize, t: f64) -> FaultMode {
        self.actuators[h]
            .iter()
            .find(|iv| iv.start <= t && t < iv.end)
            .map_or(FaultMode::Normal, |iv| iv.mode)
    }

    fn tloe_count(&self, t: f64) -> usize {
        (0..self.actuators.len())
            .filter(|&h| matches!(self.mode(h, t), FaultMode::Tloe { .. }))
            .count()
    }

    pub fn apply_into(&self, u: &[f64], t: f64, out: &mut [f64]) -> Result<(), DynamicsError> {
        if u.len() != self.actuators.len() {
            return Err(DynamicsError::InputLength { expected: self.actuators.len(), got: u.len() });
        }
        let mut stuck = 0;
        for (h, (ui, slot)) in u.iter().zip(out.iter_mut()).enumerate() {
            let mode = self.mode(h, t);
            if matches!(mode, FaultMode::Tloe { .. }) {
                stuck += 1;
            }
            *slot = mode.apply(*ui);
        }
        if !u.is_empty() && stuck == u.len() {
            return Err(DynamicsError::NoWorkingActuator { t, count: stuck });
        }
        Ok(())
    }

    pub fn apply_faults(&self, u: &[f64], t: f64) -> Result<Vec<f64>, DynamicsError> {
        let mut out = vec![0.0; u.len()];
        self.apply_into(u, t, &mut out)?;
        Ok(out)
    }
}

/// `y_r(t) = amplitude * sin(omega * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSignal {
    pub amplitude: f64,
    pub omega: f64,
}

impl LeaderSignal {
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t).sin()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.amplitude * self.omega * (self.omega * t).cos()
    }
}

/// Plants, leader and faults of one benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub models: Vec<FollowerModel>,
    pub leader: LeaderSignal,
    pub faults: Vec<FaultSchedule>,
}

pub const FAULT_PERIOD: f64 = 5.0;
pub const STUCK_VALUE: f64 = 1.0;
pub const PARTIAL_FACTOR: f64 = 0.5;

/// Actuator 1 stuck at 1, actuator 2 at half effectiveness, in alternating
/// five-second windows starting at t = 5.
pub fn benchmark_faults(horizon: f64) -> FaultSchedule {
    FaultSchedule::alternating(
        FAULT_PERIOD,
        horizon,
        &[FaultMode::Tloe { nu: STUCK_VALUE }, FaultMode::Ploe { rho: PARTIAL_FACTOR }],
    )
    .expect("benchmark schedule is valid")
}

pub fn builtin_numerical_example(horizon: f64) -> Benchmark {
    let model = FollowerModel::parse(
        &["0.2*x1", "0.2*x1*x2"],
        &[&["0.2*sin(6*x1)"], &["0.2*sin(6*x1*x2)"]],
        vec![1.0, 2.0],
    )
    .expect("builtin model parses");
    Benchmark {
        models: vec![model; 4],
        leader: LeaderSignal { amplitude: 30.0 / 9.0, omega: 0.8 },
        faults: vec![benchmark_faults(horizon); 4],
    }
}

/// Vehicle constants: mass, gravity, kinetic friction, nominal viscous
/// friction, viscous noise intensity.
pub const VEHICLE_MASS: f64 = 0.5;
pub const GRAVITY: f64 = 10.0;
pub const KINETIC_FRICTION: f64 = 0.02;
pub const VISCOUS_FRICTION: f64 = 0.5;
pub const VISCOUS_NOISE: f64 = 0.1;

pub fn vehicle_model() -> FollowerModel {
    let damping = VISCOUS_FRICTION / VEHICLE_MASS;
    let bias = KINETIC_FRICTION * GRAVITY;
    let noise = VISCOUS_NOISE / VEHICLE_MASS;
    FollowerModel::new(
        vec![Expr::Const(0.0), Expr::parse(&format!("-{damping}*x2 - {bias}")).expect("valid")],
        vec![vec![Expr::Const(0.0)], vec![Expr::Const(noise)]],
        vec![1.0 / VEHICLE_MASS; 2],
    )
    .expect("vehicle model is valid")
}

pub fn builtin_vehicle_example(horizon: f64) -> Benchmark {
    Benchmark {
        models: vec![vehicle_model(); 4],
        leader: LeaderSignal { amplitude: 0.8, omega: 1.0 },
        faults: vec![benchmark_faults(horizon); 4],
    }
}
