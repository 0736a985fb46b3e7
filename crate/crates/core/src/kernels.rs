//! Angular collision kernels `β(dθ)` with Levy normalization
//! `∫ sin²θ β(dθ) = 1` and a finite total rate `b0 = ∫ β(dθ)`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::adaptive_simpson;

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("angular mass diverges (nu = {nu} >= 0 with theta_min = 0)")]
    NonIntegrable { nu: f64 },
    #[error("bad scattering angle {0}")]
    BadAngle(f64),
    #[error("bad kernel parameters: {0}")]
    BadParams(String),
}

/// Shape of the scattering-angle density before normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// All mass at `theta0`.
    Dirac { theta0: f64 },
    /// Constant density on `[theta_min, π]`.
    Uniform { theta_min: f64 },
    /// Density `θ^{-ν-1}` on `[theta_min, π]`.
    PowerLaw { nu: f64, theta_min: f64 },
}

/// A Levy-normalized angular kernel with cut-off.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngularKernel {
    family: KernelFamily,
    norm: f64,
    b0: f64,
}

impl AngularKernel {
    pub fn new(family: KernelFamily) -> Result<Self, KernelError> {
        validate(&family)?;
        let (levy, mass) = match family {
            KernelFamily::Dirac { theta0 } => (theta0.sin().powi(2), 1.0),
            _ => (raw_integral(&family, |t| t.sin().powi(2)), raw_integral(&family, |_| 1.0)),
        };
        let norm = 1.0 / levy;
        Ok(AngularKernel { family, norm, b0: norm * mass })
    }

    pub fn dirac(theta0: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Dirac { theta0 })
    }

    pub fn uniform(theta_min: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Uniform { theta_min })
    }

    pub fn power_law(nu: f64, theta_min: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::PowerLaw { nu, theta_min })
    }

    /// Point mass at `theta0` with an explicit rate and no Levy normalization.
    /// This admits the grazing case `theta0 = 0`, where every collision is the
    /// identity.
    pub fn dirac_with_rate(theta0: f64, b0: f64) -> Result<Self, KernelError> {
        if !(0.0..=PI).contains(&theta0) {
            return Err(KernelError::BadAngle(theta0));
        }
        if !(b0 > 0.0 && b0.is_finite()) {
            return Err(KernelError::BadParams(format!("rate {b0}")));
        }
        Ok(AngularKernel { family: KernelFamily::Dirac { theta0 }, norm: b0, b0 })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Normalization constant `c` multiplying the raw density.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Total collision rate `b0 = ∫ β(dθ)`.
    pub fn total_rate(&self) -> f64 {
        self.b0
    }

    /// `∫ sin²θ β(dθ)`, recomputed by quadrature (equals one for every
    /// kernel built through [`AngularKernel::new`]).
    pub fn levy_integral(&self) -> f64 {
        match self.family {
            KernelFamily::Dirac { theta0 } => self.norm * theta0.sin().powi(2),
            _ => self.norm * raw_integral(&self.family, |t| t.sin().powi(2)),
        }
    }

    /// Inverse of the cumulative distribution of `β(dθ)/b0`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self.family {
            KernelFamily::Dirac { theta0 } => theta0,
            KernelFamily::Uniform { theta_min } => theta_min + p * (PI - theta_min),
            KernelFamily::PowerLaw { nu, theta_min } => {
                if nu == 0.0 {
                    (theta_min.ln() + p * (PI / theta_min).ln()).exp().min(PI)
                } else {
                    // The law is uniform in u = θ^{-ν}.
                    let lo = theta_min.powf(-nu);
                    let hi = PI.powf(-nu);
                    (lo + p * (hi - lo)).powf(-1.0 / nu).clamp(theta_min, PI)
                }
            }
        }
    }

    /// Draws a scattering angle from `β(dθ)/b0`.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            KernelFamily::Dirac { theta0 } => theta0,
            _ => self.quantile(rng.random::<f64>()),
        }
    }
}

fn validate(family: &KernelFamily) -> Result<(), KernelError> {
    match *family {
        KernelFamily::Dirac { theta0 } => {
            if !(theta0 > 0.0 && theta0 < PI) {
                return Err(KernelError::BadAngle(theta0));
            }
        }
        KernelFamily::Uniform { theta_min } => {
            if !(0.0..PI).contains(&theta_min) {
                return Err(KernelError::BadAngle(theta_min));
            }
        }
        KernelFamily::PowerLaw { nu, theta_min } => {
            if !(0.0..PI).contains(&theta_min) {
                return Err(KernelError::BadAngle(theta_min));
            }
            if !(nu < 2.0) || !nu.is_finite() {
                return Err(KernelError::BadParams(format!("nu = {nu} must be < 2")));
            }
            if nu >= 0.0 && theta_min == 0.0 {
                return Err(KernelError::NonIntegrable { nu });
            }
        }
    }
    Ok(())
}

/// `∫ g(θ) f(θ) dθ` for the raw (unnormalized) density `f` of a continuous
/// family, with a change of variable that keeps the integrand smooth.
fn raw_integral<G: Fn(f64) -> f64>(family: &KernelFamily, g: G) -> f64 {
    match *family {
        KernelFamily::Dirac { .. } => unreachable!("point masses need no quadrature"),
        KernelFamily::Uniform { theta_min } => adaptive_simpson(g, theta_min, PI, QUAD_TOL),
        KernelFamily::PowerLaw { nu, theta_min } if theta_min > 0.0 => {
            // θ = e^s, θ^{-ν-1} dθ = e^{-ν s} ds
            adaptive_simpson(|s| g(s.exp()) * (-nu * s).exp(), theta_min.ln(), PI.ln(), QUAD_TOL)
        }
        KernelFamily::PowerLaw { nu, .. } => {
            // ν < 0 and θ_min = 0: u = θ^{-ν}, θ^{-ν-1} dθ = du / (-ν)
            let k = -nu;
            adaptive_simpson(|u| g(u.powf(1.0 / k).min(PI)), 0.0, PI.powf(k), QUAD_TOL) / k
        }
    }
}
