//! Saturation functions used by the feedback laws and the Lyapunov function.
//!
//! Two shapes are provided. [`SaturationKind::Hard`] is the standard projection
//! of the real line onto `[-1, 1]`. [`SaturationKind::SmoothAtan`] agrees with the
//! identity on `[-1, 1]` and continues with an arctangent tail, which makes it
//! continuously differentiable with range `(-1.5, 1.5)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Upper bound on the damping constant `delta` for the hard saturation.
pub const HARD_DELTA_CAP: f64 = 4.0 / 3.0;

/// Default upper bound on `delta` when the smooth saturation is selected.
pub const DEFAULT_SMOOTH_DELTA_CAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SaturationKind {
    Hard,
    SmoothAtan,
}

impl SaturationKind {
    pub fn name(self) -> &'static str {
        match self {
            SaturationKind::Hard => "hard",
            SaturationKind::SmoothAtan => "smooth-atan",
        }
    }
}

impl std::str::FromStr for SaturationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hard" => Ok(SaturationKind::Hard),
            "smooth-atan" | "smooth_atan" | "smoothatan" | "smooth" => Ok(SaturationKind::SmoothAtan),
            other => Err(Error::domain(format!("unknown saturation `{other}` (expected `hard` or `smooth-atan`)"))),
        }
    }
}

/// A saturation shape together with the `delta` ceiling the gain gate applies to it.
///
/// The ceiling is only configurable for the smooth shape; the hard shape always
/// uses [`HARD_DELTA_CAP`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationSpec {
    pub kind: SaturationKind,
    smooth_delta_cap: f64,
}

impl SaturationSpec {
    pub const fn hard() -> Self {
        SaturationSpec { kind: SaturationKind::Hard, smooth_delta_cap: DEFAULT_SMOOTH_DELTA_CAP }
    }

    pub const fn smooth() -> Self {
        SaturationSpec { kind: SaturationKind::SmoothAtan, smooth_delta_cap: DEFAULT_SMOOTH_DELTA_CAP }
    }

    pub fn new(kind: SaturationKind) -> Self {
        match kind {
            SaturationKind::Hard => Self::hard(),
            SaturationKind::SmoothAtan => Self::smooth(),
        }
    }

    pub fn with_smooth_delta_cap(mut self, cap: f64) -> Self {
        self.smooth_delta_cap = cap;
        self
    }

    /// Largest admissible `delta` for this shape (before the `delta <= c1` condition).
    pub fn delta_cap(&self) -> f64 {
        match self.kind {
            SaturationKind::Hard => HARD_DELTA_CAP,
            SaturationKind::SmoothAtan => self.smooth_delta_cap,
        }
    }

    /// Supremum of `|sigma|`: 1 for the hard shape, 1.5 for the smooth one.
    pub fn range(&self) -> f64 {
        match self.kind {
            SaturationKind::Hard => 1.0,
            SaturationKind::SmoothAtan => 1.5,
        }
    }

    /// `sigma(s)`. Callers are expected to pass finite values; see [`sat`] for the checked form.
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self.kind {
            SaturationKind::Hard => s.clamp(-1.0, 1.0),
            SaturationKind::SmoothAtan => {
                let a = s.abs();
                if a <= 1.0 {
                    s
                } else {
                    (1.0 + (PI * (a - 1.0)).atan() / PI).copysign(s)
                }
            }
        }
    }

    /// `int_0^s sigma(t) dt`, in closed form for both shapes.
    #[inline]
    pub fn integral(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= 1.0 {
            return 0.5 * s * s;
        }
        let w = a - 1.0;
        match self.kind {
            SaturationKind::Hard => a - 0.5,
            SaturationKind::SmoothAtan => {
                // int_0^w atan(pi u) du = w atan(pi w) - ln(1 + pi^2 w^2) / (2 pi)
                let pw = PI * w;
                let tail = w * pw.atan() - pw.mul_add(pw, 1.0).ln() / (2.0 * PI);
                0.5 + w + tail / PI
            }
        }
    }

    /// `sigma'(s)`. For the hard shape the derivative at `|s| = 1` is taken to be 1.
    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= 1.0 {
            return 1.0;
        }
        match self.kind {
            SaturationKind::Hard => 0.0,
            SaturationKind::SmoothAtan => {
                let pw = PI * (a - 1.0);
                1.0 / pw.mul_add(pw, 1.0)
            }
        }
    }
}

impl Default for SaturationSpec {
    fn default() -> Self {
        Self::hard()
    }
}

fn finite(s: f64) -> Result<f64> {
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::domain(format!("saturation argument must be finite, got {s}")))
    }
}

pub fn sat(spec: SaturationSpec, s: f64) -> Result<f64> {
    finite(s).map(|s| spec.eval(s))
}

pub fn sat_integral(spec: SaturationSpec, s: f64) -> Result<f64> {
    finite(s).map(|s| spec.integral(s))
}

pub fn sat_derivative(spec: SaturationSpec, s: f64) -> Result<f64> {
    finite(s).map(|s| spec.derivative(s))
}
