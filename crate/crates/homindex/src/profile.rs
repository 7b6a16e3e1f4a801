//! Interpolating profiles `h` with exactly constant tails.
//!
//! Every shape is smooth and satisfies `h(t) = h(K)` for `t >= K` and
//! `h(t) = h(-K)` for `t <= -K` exactly (not merely asymptotically), so the
//! derivative is compactly supported in `[-K, K]`. The rescaled profile
//! `h_eps(t) = h(eps * t)` has cutoff `K / eps` and the same asymptotes.

use crate::{Error, Result};

/// Shape of the interpolation, before cutoff scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileShape {
    /// Bump-glued smooth step from `h_minus` to `h_plus`; constant outside
    /// the transition region by construction.
    SmoothedStep { h_minus: f64, h_plus: f64 },
    /// tanh reshaped so both tails become exactly constant at the cutoff:
    /// `tanh(t / (1 - (t/K)^2))` runs from -1 to 1.
    TanhClamped,
    /// `(tanh_clamped + 1) / 2`, running from 0 to 1.
    HalfKink,
}

/// The interpolating function `h`, its cutoff, asymptotes, derivative, and
/// rescaling state.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    shape: ProfileShape,
    base_cutoff: f64,
    epsilon: f64,
    reflected: bool,
}

impl Profile {
    pub fn new(shape: ProfileShape, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(Error::parameter("cutoff", format!("must be positive, got {cutoff}")));
        }
        Ok(Profile {
            shape,
            base_cutoff: cutoff,
            epsilon: 1.0,
            reflected: false,
        })
    }

    /// Smooth step from `h_minus` to `h_plus` over `[-cutoff, cutoff]`.
    pub fn smoothed_step(h_minus: f64, h_plus: f64, cutoff: f64) -> Result<Self> {
        Profile::new(ProfileShape::SmoothedStep { h_minus, h_plus }, cutoff)
    }

    /// Full kink: -1 to 1.
    pub fn tanh_clamped(cutoff: f64) -> Result<Self> {
        Profile::new(ProfileShape::TanhClamped, cutoff)
    }

    /// Half kink: 0 to 1.
    pub fn half_kink(cutoff: f64) -> Result<Self> {
        Profile::new(ProfileShape::HalfKink, cutoff)
    }

    /// Constant profile (zero derivative everywhere).
    pub fn constant(value: f64) -> Self {
        Profile {
            shape: ProfileShape::SmoothedStep {
                h_minus: value,
                h_plus: value,
            },
            base_cutoff: 1.0,
            epsilon: 1.0,
            reflected: false,
        }
    }

    /// Same shape at scaling `epsilon`: `h_eps(t) = h(eps * t)`.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::parameter("epsilon", format!("must be positive, got {epsilon}")));
        }
        Ok(Profile {
            epsilon,
            ..self.clone()
        })
    }

    /// Orientation swap `h(t) -> h(-t)`; exchanges the two asymptotes.
    pub fn swapped(&self) -> Self {
        Profile {
            reflected: !self.reflected,
            ..self.clone()
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Cutoff of the rescaled profile: `K / eps`.
    pub fn cutoff(&self) -> f64 {
        self.base_cutoff / self.epsilon
    }

    pub fn base_cutoff(&self) -> f64 {
        self.base_cutoff
    }

    pub fn h_plus(&self) -> f64 {
        if self.reflected {
            self.shape_asymptote(-1.0)
        } else {
            self.shape_asymptote(1.0)
        }
    }

    pub fn h_minus(&self) -> f64 {
        if self.reflected {
            self.shape_asymptote(1.0)
        } else {
            self.shape_asymptote(-1.0)
        }
    }

    /// Profile value at `t` (rescaling included).
    pub fn h(&self, t: f64) -> f64 {
        let sign = if self.reflected { -1.0 } else { 1.0 };
        let tau = sign * self.epsilon * t / self.base_cutoff;
        self.shape_value(tau)
    }

    /// Derivative at `t` (rescaling included): `eps * h'(eps t)`.
    pub fn dh(&self, t: f64) -> f64 {
        let sign = if self.reflected { -1.0 } else { 1.0 };
        let tau = sign * self.epsilon * t / self.base_cutoff;
        sign * self.epsilon / self.base_cutoff * self.shape_slope(tau)
    }

    fn shape_asymptote(&self, side: f64) -> f64 {
        self.shape_value(side)
    }

    // tau is the normalized coordinate t / K; |tau| >= 1 is the constant tail.
    fn shape_value(&self, tau: f64) -> f64 {
        match self.shape {
            ProfileShape::SmoothedStep { h_minus, h_plus } => {
                h_minus + (h_plus - h_minus) * smooth_step(tau)
            }
            ProfileShape::TanhClamped => clamped_tanh(tau),
            ProfileShape::HalfKink => 0.5 * (clamped_tanh(tau) + 1.0),
        }
    }

    // Slope with respect to tau.
    fn shape_slope(&self, tau: f64) -> f64 {
        match self.shape {
            ProfileShape::SmoothedStep { h_minus, h_plus } => {
                (h_plus - h_minus) * smooth_step_slope(tau)
            }
            ProfileShape::TanhClamped => clamped_tanh_slope(tau),
            ProfileShape::HalfKink => 0.5 * clamped_tanh_slope(tau),
        }
    }
}

// Margin inside which the tails are treated as exactly reached; the true
// values there are below double precision anyway.
const TAIL_MARGIN: f64 = 1e-8;

fn clamped_tanh(tau: f64) -> f64 {
    if tau >= 1.0 - TAIL_MARGIN {
        return 1.0;
    }
    if tau <= -1.0 + TAIL_MARGIN {
        return -1.0;
    }
    // Argument blows up at |tau| -> 1, so tanh reaches +-1 with all
    // derivatives vanishing; K sets the core slope to match plain tanh(t).
    (tau / (1.0 - tau * tau)).tanh()
}

fn clamped_tanh_slope(tau: f64) -> f64 {
    if tau.abs() >= 1.0 - TAIL_MARGIN {
        return 0.0;
    }
    let g = tau / (1.0 - tau * tau);
    let sech = 1.0 / g.cosh();
    let dg = (1.0 + tau * tau) / (1.0 - tau * tau).powi(2);
    sech * sech * dg
}

fn bump(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

fn bump_slope(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp() / (x * x)
    }
}

fn smooth_step(tau: f64) -> f64 {
    if tau >= 1.0 - TAIL_MARGIN {
        return 1.0;
    }
    if tau <= -1.0 + TAIL_MARGIN {
        return 0.0;
    }
    let up = bump(1.0 + tau);
    let down = bump(1.0 - tau);
    up / (up + down)
}

fn smooth_step_slope(tau: f64) -> f64 {
    if tau.abs() >= 1.0 - TAIL_MARGIN {
        return 0.0;
    }
    let up = bump(1.0 + tau);
    let down = bump(1.0 - tau);
    let dup = bump_slope(1.0 + tau);
    let ddown = bump_slope(1.0 - tau);
    (dup * down + up * ddown) / (up + down).powi(2)
}
