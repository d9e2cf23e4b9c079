//! Finite-time performance envelopes and the arctangent error transformation.
//!
//! The envelope `sigma(t)` starts at `sigma0`, decays smoothly and reaches
//! `sigma_inf` exactly at the settling time `Ts`, staying constant afterwards:
//!
//! ```text
//! sigma(t) = (sigma0 - sigma_inf) * exp(varsigma * t / (t - Ts)) + sigma_inf,  t < Ts
//!          = sigma_inf,                                                       t >= Ts
//! ```
//!
//! A consensus error `z` kept strictly inside `(-sigma, sigma)` is mapped to an
//! unconstrained coordinate `e* = tan(pi z / (2 sigma))`, so bounding `e*`
//! keeps `z` inside the envelope.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of the envelope treated as already breached.
pub const BOUNDARY_MARGIN: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FtpfError {
    #[error("invalid performance profile: {0}")]
    InvalidProfile(String),
    #[error("performance envelope breached at t = {t}: |z| = {z_abs} >= sigma = {sigma}")]
    BoundaryViolation { t: f64, z_abs: f64, sigma: f64 },
    #[error("initial consensus error {z0} must satisfy 0 < |z0| < sigma0 = {sigma0}")]
    InitialConditionViolation { z0: f64, sigma0: f64 },
}

/// Envelope family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    /// `(sigma0 - sigma_inf) exp(varsigma t / (t - Ts)) + sigma_inf`.
    #[default]
    Improved,
    /// Linear-times-exponential envelope
    /// `(rho0 - t/Ts) exp(1 - Ts / (Ts - t)) + sigma_inf` with `rho0 = sigma0 - sigma_inf`,
    /// kept for transient comparisons. Needs `rho0 >= 1`; `varsigma` is unused.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerformanceProfile {
    pub sigma0: f64,
    pub sigma_inf: f64,
    pub varsigma: f64,
    #[serde(rename = "settling_time")]
    pub ts: f64,
    #[serde(default)]
    pub shape: ProfileShape,
}

impl PerformanceProfile {
    pub fn new(sigma0: f64, sigma_inf: f64, varsigma: f64, ts: f64) -> Result<Self, FtpfError> {
        Self::with_shape(sigma0, sigma_inf, varsigma, ts, ProfileShape::Improved)
    }

    pub fn with_shape(
        sigma0: f64,
        sigma_inf: f64,
        varsigma: f64,
        ts: f64,
        shape: ProfileShape,
    ) -> Result<Self, FtpfError> {
        let p = Self { sigma0, sigma_inf, varsigma, ts, shape };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FtpfError> {
        let bad = |m: &str| Err(FtpfError::InvalidProfile(m.to_string()));
        if ![self.sigma0, self.sigma_inf, self.varsigma, self.ts].iter().all(|v| v.is_finite()) {
            return bad("parameters must be finite");
        }
        if !(self.sigma_inf > 0.0) {
            return bad("sigma_inf must be positive");
        }
        if !(self.sigma0 > self.sigma_inf) {
            return bad("sigma0 must exceed sigma_inf");
        }
        if !(self.ts > 0.0) {
            return bad("settling time must be positive");
        }
        match self.shape {
            ProfileShape::Improved if self.varsigma < 1.0 => bad("varsigma must be at least 1"),
            ProfileShape::Baseline if self.sigma0 - self.sigma_inf < 1.0 => {
                bad("baseline envelope needs sigma0 - sigma_inf >= 1")
            }
            _ => Ok(()),
        }
    }

    fn span(&self) -> f64 {
        self.sigma0 - self.sigma_inf
    }

    pub fn sigma(&self, t: f64) -> f64 {
        if t >= self.ts {
            return self.sigma_inf;
        }
        match self.shape {
            ProfileShape::Improved => self.span() * improved_exp(self.varsigma, self.ts, t) + self.sigma_inf,
            ProfileShape::Baseline => {
                let (lin, e) = baseline_parts(self.span(), self.ts, t);
                lin * e + self.sigma_inf
            }
        }
    }

    pub fn sigma_dot(&self, t: f64) -> f64 {
        if t >= self.ts {
            return 0.0;
        }
        match self.shape {
            ProfileShape::Improved => {
                let e = improved_exp(self.varsigma, self.ts, t);
                if e == 0.0 {
                    return 0.0;
                }
                let d = t - self.ts;
                self.span() * (-self.varsigma * self.ts / (d * d)) * e
            }
            ProfileShape::Baseline => {
                let (lin, e) = baseline_parts(self.span(), self.ts, t);
                if e == 0.0 {
                    return 0.0;
                }
                let d = self.ts - t;
                let gamma_dot = -self.ts / (d * d);
                (-1.0 / self.ts) * e + lin * gamma_dot * e
            }
        }
    }

    /// Second derivative, used for smoothness checks at the settling time.
    pub fn sigma_ddot(&self, t: f64) -> f64 {
        if t >= self.ts {
            return 0.0;
        }
        match self.shape {
            ProfileShape::Improved => {
                let e = improved_exp(self.varsigma, self.ts, t);
                if e == 0.0 {
                    return 0.0;
                }
                let d = t - self.ts;
                let a1 = -self.varsigma * self.ts / (d * d);
                let a2 = 2.0 * self.varsigma * self.ts / (d * d * d);
                self.span() * (a2 + a1 * a1) * e
            }
            ProfileShape::Baseline => {
                let (lin, e) = baseline_parts(self.span(), self.ts, t);
                if e == 0.0 {
                    return 0.0;
                }
                let d = self.ts - t;
                let g1 = -self.ts / (d * d);
                let g2 = -2.0 * self.ts / (d * d * d);
                let lin_dot = -1.0 / self.ts;
                e * (2.0 * lin_dot * g1 + lin * (g2 + g1 * g1))
            }
        }
    }

    /// `e* = tan(pi z / (2 sigma(t)))`.
    pub fn transform_error(&self, t: f64, z: f64) -> Result<f64, FtpfError> {
        let s = self.sigma(t);
        if !z.is_finite() || z.abs() >= (1.0 - BOUNDARY_MARGIN) * s {
            return Err(FtpfError::BoundaryViolation { t, z_abs: z.abs(), sigma: s });
        }
        Ok((FRAC_PI_2 * z / s).tan())
    }

    /// Inverse of [`transform_error`](Self::transform_error): `z = sigma(t) mu(e*)`.
    pub fn untransform(&self, t: f64, e_star: f64) -> f64 {
        self.sigma(t) * mu(e_star)
    }

    /// `xi = pi (1 + e*^2) / (2 sigma(t))`, the reciprocal of `dz/de*`.
    pub fn xi(&self, t: f64, e_star: f64) -> f64 {
        FRAC_PI_2 * (1.0 + e_star * e_star) / self.sigma(t)
    }

    /// `beta = mu(e*) sigma_dot(t)`.
    pub fn beta(&self, t: f64, e_star: f64) -> f64 {
        mu(e_star) * self.sigma_dot(t)
    }

    /// Requires `0 < |z0| < sigma0`.
    pub fn validate_initial(&self, z0: f64) -> Result<(), FtpfError> {
        let a = z0.abs();
        if a > 0.0 && a < self.sigma0 {
            Ok(())
        } else {
            Err(FtpfError::InitialConditionViolation { z0, sigma0: self.sigma0 })
        }
    }
}

/// `mu(e) = (2/pi) atan(e)`.
pub fn mu(e_star: f64) -> f64 {
    FRAC_2_PI * e_star.atan()
}

fn improved_exp(varsigma: f64, ts: f64, t: f64) -> f64 {
    let alpha = varsigma * t / (t - ts);
    if alpha < f64::MIN_POSITIVE.ln() {
        0.0
    } else {
        alpha.exp()
    }
}

fn baseline_parts(rho0: f64, ts: f64, t: f64) -> (f64, f64) {
    let gamma = 1.0 - ts / (ts - t);
    let e = if gamma < f64::MIN_POSITIVE.ln() { 0.0 } else { gamma.exp() };
    (rho0 - t / ts, e)
}
