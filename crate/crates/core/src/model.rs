//! Electromechanical model of a one degree-of-freedom magnetic bearing.
//!
//! Three right-hand sides live here:
//!
//! * the full model with two coils, total fluxes as state and the switching
//!   rule that energizes one coil at a time;
//! * the reduced switching-mode model in `(position, velocity, generalized flux)`;
//! * the bare triple integrator that the feedback design is built on.

use crate::error::{Error, Result};

/// Permeability of free space [H/m].
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Rig constants.
///
/// `phi1_0` and `phi2_0` are the initial *control* fluxes; they only enter
/// through the effective bias `phi_bar0 = bias_flux + min(phi1_0, phi2_0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Rotor mass [kg].
    pub mass: f64,
    /// Permeability of the air gap [H/m].
    pub mu0: f64,
    /// Electromagnet pole area [m^2].
    pub area: f64,
    /// Coil turns.
    pub turns: f64,
    /// Nominal air gap [m].
    pub gap: f64,
    /// Bias flux [Wb]. Must stay strictly positive.
    pub bias_flux: f64,
    pub r1: f64,
    pub r2: f64,
    /// Amplitude limit on each coil voltage [V].
    pub v_max: f64,
    pub phi1_0: f64,
    pub phi2_0: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("mu0", self.mu0),
            ("area", self.area),
            ("turns", self.turns),
            ("gap", self.gap),
            ("bias_flux", self.bias_flux),
            ("v_max", self.v_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!("params.{name} must be finite and > 0, got {value}")));
            }
        }
        for (name, value) in [("r1", self.r1), ("r2", self.r2)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::domain(format!("params.{name} must be finite and >= 0, got {value}")));
            }
        }
        for (name, value) in [("phi1_0", self.phi1_0), ("phi2_0", self.phi2_0)] {
            if !value.is_finite() {
                return Err(Error::domain(format!("params.{name} must be finite, got {value}")));
            }
        }
        let pb = self.phi_bar0();
        if pb.is_nan() || pb <= 0.0 {
            return Err(Error::domain(format!(
                "effective bias flux bias_flux + min(phi1_0, phi2_0) must be > 0, got {pb}"
            )));
        }
        Ok(())
    }

    /// Effective bias flux after the initial control fluxes are folded in.
    pub fn phi_bar0(&self) -> f64 {
        self.bias_flux + self.phi1_0.min(self.phi2_0)
    }

    pub fn beta0(&self) -> f64 {
        2.0 * self.phi_bar0() / (self.mass * self.mu0 * self.area)
    }

    pub fn beta1(&self) -> f64 {
        1.0 / (self.mass * self.mu0 * self.area)
    }

    pub fn with_zero_resistance(mut self) -> Self {
        self.r1 = 0.0;
        self.r2 = 0.0;
        self
    }

    /// Sets `phi1_0`/`phi2_0` from total initial fluxes.
    pub fn with_initial_fluxes(mut self, flux1: f64, flux2: f64) -> Self {
        self.phi1_0 = flux1 - self.bias_flux;
        self.phi2_0 = flux2 - self.bias_flux;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coil {
    One,
    Two,
}

impl Coil {
    /// `(-1)^(i+1)`: +1 for the first coil, -1 for the second.
    fn sign(self) -> f64 {
        match self {
            Coil::One => 1.0,
            Coil::Two => -1.0,
        }
    }
}

impl TryFrom<u8> for Coil {
    type Error = Error;

    fn try_from(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Coil::One),
            2 => Ok(Coil::Two),
            _ => Err(Error::domain(format!("coil index must be 1 or 2, got {i}"))),
        }
    }
}

/// Which coil the switching rule energizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `phi >= 0`: the first coil receives `v`.
    First,
    /// `phi < 0`: the second coil receives `-v`.
    Second,
}

impl Branch {
    pub fn of(phi: f64) -> Self {
        if phi >= 0.0 {
            Branch::First
        } else {
            Branch::Second
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Branch::First => Branch::Second,
            Branch::Second => Branch::First,
        }
    }

    pub fn voltages(self, v: f64) -> (f64, f64) {
        match self {
            Branch::First => (v, 0.0),
            Branch::Second => (0.0, -v),
        }
    }
}

/// Coordinates of the triple integrator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChainState {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
}

impl ChainState {
    pub const ORIGIN: ChainState = ChainState { xi1: 0.0, xi2: 0.0, xi3: 0.0 };

    pub fn new(xi1: f64, xi2: f64, xi3: f64) -> Self {
        ChainState { xi1, xi2, xi3 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.xi1, self.xi2, self.xi3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ChainState { xi1: a[0], xi2: a[1], xi3: a[2] }
    }
}

/// Reduced model state: position, velocity and generalized control flux.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AmbState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl AmbState {
    pub fn new(x1: f64, x2: f64, x3: f64) -> Self {
        AmbState { x1, x2, x3 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        AmbState { x1: a[0], x2: a[1], x3: a[2] }
    }
}

/// Full model state with total fluxes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FullState {
    pub y: f64,
    pub ydot: f64,
    pub flux1: f64,
    pub flux2: f64,
}

impl FullState {
    pub fn new(y: f64, ydot: f64, flux1: f64, flux2: f64) -> Self {
        FullState { y, ydot, flux1, flux2 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.y, self.ydot, self.flux1, self.flux2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        FullState { y: a[0], ydot: a[1], flux1: a[2], flux2: a[3] }
    }

    /// Generalized control flux `phi1 - phi2`; the bias cancels.
    pub fn generalized_flux(&self) -> f64 {
        self.flux1 - self.flux2
    }

    /// Projection onto the reduced coordinates.
    pub fn reduced(&self) -> AmbState {
        AmbState::new(self.y, self.ydot, self.generalized_flux())
    }
}

/// Validated parameter set with the derived constants cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbModel {
    params: PhysicalParams,
    beta0: f64,
    beta1: f64,
    mu0_area: f64,
}

impl AmbModel {
    pub fn new(params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        Ok(AmbModel { params, beta0: params.beta0(), beta1: params.beta1(), mu0_area: params.mu0 * params.area })
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn force(&self, coil: Coil, flux: f64) -> f64 {
        coil.sign() * flux * flux / self.mu0_area
    }

    pub fn current(&self, coil: Coil, y: f64, flux: f64) -> f64 {
        // (-1)^i: -1 for the first coil, +1 for the second
        let gap = self.params.gap - coil.sign() * y;
        2.0 * gap * flux / (self.mu0_area * self.params.turns)
    }

    /// Full model with the coil selected from the sign of the generalized flux.
    pub fn rhs_full(&self, s: &FullState, v: f64) -> FullState {
        self.rhs_full_in_branch(s, v, Branch::of(s.generalized_flux()))
    }

    /// Full model with the energized coil fixed by the caller.
    pub fn rhs_full_in_branch(&self, s: &FullState, v: f64, branch: Branch) -> FullState {
        let (v1, v2) = branch.voltages(v);
        let p = &self.params;
        let accel = (self.force(Coil::One, s.flux1) + self.force(Coil::Two, s.flux2)) / p.mass;
        FullState {
            y: s.ydot,
            ydot: accel,
            flux1: (v1 - p.r1 * self.current(Coil::One, s.y, s.flux1)) / p.turns,
            flux2: (v2 - p.r2 * self.current(Coil::Two, s.y, s.flux2)) / p.turns,
        }
    }

    /// `beta0 x3 + beta1 x3 |x3|`.
    #[inline]
    pub fn flux_accel(&self, x3: f64) -> f64 {
        self.beta0 * x3 + self.beta1 * x3 * x3.abs()
    }

    pub fn rhs_reduced(&self, x: &AmbState, u: f64) -> AmbState {
        AmbState { x1: x.x2, x2: self.flux_accel(x.x3), x3: u }
    }

    /// Reduced model with `|x3|` replaced by `sign * x3`, the polynomial piece
    /// valid on one side of `x3 = 0`.
    pub fn rhs_reduced_in_branch(&self, x: &AmbState, u: f64, branch: Branch) -> AmbState {
        let signed = match branch {
            Branch::First => x.x3,
            Branch::Second => -x.x3,
        };
        AmbState { x1: x.x2, x2: self.beta0 * x.x3 + self.beta1 * x.x3 * signed, x3: u }
    }
}

pub fn switching_voltages(phi: f64, v: f64) -> Result<(f64, f64)> {
    if !(phi.is_finite() && v.is_finite()) {
        return Err(Error::domain(format!("switching inputs must be finite, got phi={phi}, v={v}")));
    }
    Ok(Branch::of(phi).voltages(v))
}

pub fn force(params: &PhysicalParams, coil: u8, flux: f64) -> Result<f64> {
    let coil = Coil::try_from(coil)?;
    Ok(AmbModel::new(*params)?.force(coil, flux))
}

pub fn current(params: &PhysicalParams, coil: u8, y: f64, flux: f64) -> Result<f64> {
    let coil = Coil::try_from(coil)?;
    Ok(AmbModel::new(*params)?.current(coil, y, flux))
}

pub fn rhs_full(params: &PhysicalParams, s: &FullState, v: f64) -> Result<FullState> {
    Ok(AmbModel::new(*params)?.rhs_full(s, v))
}

pub fn rhs_reduced(params: &PhysicalParams, x: &AmbState, u: f64) -> Result<AmbState> {
    Ok(AmbModel::new(*params)?.rhs_reduced(x, u))
}

pub fn rhs_chain(xi: &ChainState, mu: f64) -> ChainState {
    ChainState { xi1: xi.xi2, xi2: xi.xi3, xi3: mu }
}
