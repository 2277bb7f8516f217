//! Gain gate and the feedback laws.
//!
//! [`ChainController`] is the bounded stabilizer for the triple integrator,
//! `mu = -c1 sigma(z2) - c2 sigma(g)`. [`AmbController`] lifts it to the reduced
//! bearing model through `X3 = beta0 x3 + beta1 x3 |x3|`, and adds the
//! unsaturated ISS-style feedback `K = u - dV/dx3`.

use std::fmt;

use crate::clf::{Clf, ZState};
use crate::error::{Error, Result};
use crate::model::{AmbModel, AmbState, ChainState, PhysicalParams};
use crate::saturation::SaturationSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSet {
    pub c1: f64,
    pub c2: f64,
    pub delta: f64,
}

impl GainSet {
    pub const fn new(c1: f64, c2: f64, delta: f64) -> Self {
        GainSet { c1, c2, delta }
    }

    /// `c1 = c2 = delta = c`.
    pub const fn tied(c: f64) -> Self {
        GainSet { c1: c, c2: c, delta: c }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GainViolation {
    NotFinite { name: &'static str, value: f64 },
    NotPositive { name: &'static str, value: f64 },
    DeltaAboveCap { delta: f64, cap: f64 },
    DeltaAboveC1 { delta: f64, c1: f64 },
}

impl fmt::Display for GainViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainViolation::NotFinite { name, value } => write!(f, "{name} = {value} is not finite"),
            GainViolation::NotPositive { name, value } => write!(f, "{name} = {value} must be > 0"),
            GainViolation::DeltaAboveCap { delta, cap } => {
                write!(f, "delta = {delta} violates delta <= min{{{cap}, c1}} (cap {cap} exceeded)")
            }
            GainViolation::DeltaAboveC1 { delta, c1 } => {
                write!(f, "delta = {delta} violates delta <= min{{cap, c1}} (c1 = {c1})")
            }
        }
    }
}

/// Lists every violated admissibility condition; empty means admissible.
pub fn validate_gains(gains: &GainSet, spec: SaturationSpec) -> Vec<GainViolation> {
    let mut out = Vec::new();
    let named = [("c1", gains.c1), ("c2", gains.c2), ("delta", gains.delta)];
    for (name, value) in named {
        if !value.is_finite() {
            out.push(GainViolation::NotFinite { name, value });
        } else if value <= 0.0 {
            out.push(GainViolation::NotPositive { name, value });
        }
    }
    if !out.is_empty() {
        return out;
    }
    let cap = spec.delta_cap();
    if gains.delta > cap {
        out.push(GainViolation::DeltaAboveCap { delta: gains.delta, cap });
    }
    if gains.delta > gains.c1 {
        out.push(GainViolation::DeltaAboveC1 { delta: gains.delta, c1: gains.c1 });
    }
    out
}

pub fn ensure_admissible(gains: &GainSet, spec: SaturationSpec) -> Result<()> {
    let v = validate_gains(gains, spec);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InadmissibleGains(v))
    }
}

/// Result of the voltage-feasibility check `c1 + c2 <= beta0 v_max / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    /// `beta0 v_max / N`.
    pub limit: f64,
    /// `limit - (c1 + c2)`; nonnegative when feasible.
    pub margin: f64,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.margin >= 0.0
    }
}

pub fn gain_feasibility(gains: &GainSet, params: &PhysicalParams) -> Feasibility {
    let limit = params.beta0() * params.v_max / params.turns;
    Feasibility { limit, margin: limit - (gains.c1 + gains.c2) }
}

pub fn ensure_feasible(gains: &GainSet, params: &PhysicalParams) -> Result<Feasibility> {
    let f = gain_feasibility(gains, params);
    if f.is_feasible() {
        Ok(f)
    } else {
        Err(Error::InfeasibleGains { excess: -f.margin })
    }
}

/// Everything computed on the way to `mu`, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuEval {
    pub mu: f64,
    pub z: ZState,
    pub storage: f64,
    pub g: f64,
}

/// Bounded stabilizer for the triple integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainController {
    clf: Clf,
}

impl ChainController {
    /// Requires admissible gains for `spec`.
    pub fn new(spec: SaturationSpec, gains: GainSet) -> Result<Self> {
        ensure_admissible(&gains, spec)?;
        Ok(ChainController { clf: Clf::new(spec, gains)? })
    }

    pub fn clf(&self) -> &Clf {
        &self.clf
    }

    pub fn gains(&self) -> &GainSet {
        self.clf.gains()
    }

    pub fn saturation(&self) -> SaturationSpec {
        self.clf.saturation()
    }

    /// `(c1 + c2) * sup|sigma|`.
    pub fn amplitude_bound(&self) -> f64 {
        let g = self.gains();
        (g.c1 + g.c2) * self.saturation().range()
    }

    pub fn eval(&self, xi: &ChainState) -> MuEval {
        let z = self.clf.z_of_xi(xi);
        let storage = self.clf.storage(z.z2, z.z3);
        let g = self.clf.g_with_storage(&z, storage);
        let sat = self.saturation();
        let gains = self.gains();
        let mu = -gains.c1 * sat.eval(z.z2) - gains.c2 * sat.eval(g);
        MuEval { mu, z, storage, g }
    }

    pub fn mu(&self, xi: &ChainState) -> f64 {
        self.eval(xi).mu
    }

    /// Right-hand side of the closed-loop decrease estimate,
    /// `-2 c1 sigma(z2)^2 - (delta c1 / 4) z3^2 - c2 sigma(g)^2`.
    pub fn decrease_bound(&self, z: &ZState, g: f64) -> f64 {
        let sat = self.saturation();
        let GainSet { c1, c2, delta } = *self.gains();
        let s2 = sat.eval(z.z2);
        let sg = sat.eval(g);
        -2.0 * c1 * s2 * s2 - 0.25 * delta * c1 * z.z3 * z.z3 - c2 * sg * sg
    }

    /// Analytic `dV/dt` along the closed-loop chain.
    pub fn closed_loop_vdot(&self, xi: &ChainState) -> f64 {
        let mu = self.mu(xi);
        self.clf.lie_derivative(xi, &crate::model::rhs_chain(xi, mu))
    }
}

/// Stabilizer for the reduced bearing model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbController {
    chain: ChainController,
    model: AmbModel,
}

impl AmbController {
    /// Requires admissible gains; voltage feasibility is checked separately with
    /// [`gain_feasibility`] because the feedback is well defined without it.
    pub fn new(spec: SaturationSpec, gains: GainSet, params: PhysicalParams) -> Result<Self> {
        Ok(AmbController { chain: ChainController::new(spec, gains)?, model: AmbModel::new(params)? })
    }

    pub fn chain(&self) -> &ChainController {
        &self.chain
    }

    pub fn model(&self) -> &AmbModel {
        &self.model
    }

    pub fn x3_transform(&self, x3: f64) -> f64 {
        self.model.flux_accel(x3)
    }

    /// `beta0 + 2 beta1 |x3|`, the derivative of the `X3` transform.
    pub fn transform_slope(&self, x3: f64) -> f64 {
        self.model.beta0() + 2.0 * self.model.beta1() * x3.abs()
    }

    /// Chain coordinates `(x1, x2, X3)`.
    pub fn xi_of_x(&self, x: &AmbState) -> ChainState {
        ChainState::new(x.x1, x.x2, self.x3_transform(x.x3))
    }

    pub fn u(&self, x: &AmbState) -> f64 {
        self.chain.mu(&self.xi_of_x(x)) / self.transform_slope(x.x3)
    }

    /// `(c1 + c2) * sup|sigma| / beta0`.
    pub fn amplitude_bound(&self) -> f64 {
        self.chain.amplitude_bound() / self.model.beta0()
    }

    /// `V(x1, x2, X3(x3))`.
    pub fn lyapunov(&self, x: &AmbState) -> f64 {
        self.chain.clf().value(&self.xi_of_x(x))
    }

    /// `dV/dx3` of the composed Lyapunov function.
    pub fn lyapunov_dx3(&self, x: &AmbState) -> f64 {
        self.chain.clf().grad(&self.xi_of_x(x))[2] * self.transform_slope(x.x3)
    }

    pub fn k_iss(&self, x: &AmbState) -> f64 {
        self.u(x) - self.lyapunov_dx3(x)
    }
}

pub fn mu_fn(spec: SaturationSpec, xi: &ChainState, gains: GainSet) -> Result<f64> {
    Ok(ChainController::new(spec, gains)?.mu(xi))
}

pub fn x3_of_x3(params: &PhysicalParams, x3: f64) -> Result<f64> {
    Ok(AmbModel::new(*params)?.flux_accel(x3))
}

pub fn u_fn(spec: SaturationSpec, x: &AmbState, params: &PhysicalParams, gains: GainSet) -> Result<f64> {
    Ok(AmbController::new(spec, gains, *params)?.u(x))
}

pub fn k_iss_fn(spec: SaturationSpec, x: &AmbState, params: &PhysicalParams, gains: GainSet) -> Result<f64> {
    Ok(AmbController::new(spec, gains, *params)?.k_iss(x))
}
