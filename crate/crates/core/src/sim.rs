//! Fixed-step simulation of the three models under the available feedbacks.
//!
//! Integration is classical RK4 with the feedback evaluated at every stage.
//! The reduced and full models are only piecewise smooth across `x3 = 0`
//! (`x3 |x3|` in one case, the coil switch in the other). For those, each step
//! is taken with the active branch held fixed; when the end point lands on the
//! other side, the crossing time is bisected and the step is finished on the
//! new branch. Recorded samples stay on the uniform grid `t_k = k dt`.

use std::fmt;
use std::str::FromStr;

use crate::clf::{Clf, ZState};
use crate::controller::{ensure_admissible, ensure_feasible, AmbController, ChainController, GainSet};
use crate::error::{Error, Result};
use crate::model::{rhs_chain, AmbModel, AmbState, Branch, ChainState, FullState, PhysicalParams};
use crate::saturation::SaturationSpec;

const CROSSING_BISECTIONS: usize = 60;
const MAX_CROSSINGS_PER_STEP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Chain,
    Reduced,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Chain stabilizer `mu` applied to the triple integrator.
    Mu,
    /// Bearing feedback `u = mu(x1, x2, X3) / (beta0 + 2 beta1 |x3|)`.
    U,
    /// `K = u - dV/dx3`, with the configured disturbance added to the input.
    Kiss,
    /// The configured input signal, no feedback.
    OpenLoop,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Chain => "chain",
            ModelKind::Reduced => "reduced",
            ModelKind::Full => "full",
        }
    }
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Mu => "mu",
            ControllerKind::U => "u",
            ControllerKind::Kiss => "kiss",
            ControllerKind::OpenLoop => "open-loop",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chain" => Ok(ModelKind::Chain),
            "reduced" => Ok(ModelKind::Reduced),
            "full" => Ok(ModelKind::Full),
            other => Err(Error::domain(format!("unknown model `{other}` (chain | reduced | full)"))),
        }
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mu" => Ok(ControllerKind::Mu),
            "u" => Ok(ControllerKind::U),
            "kiss" | "k" => Ok(ControllerKind::Kiss),
            "open-loop" | "openloop" | "open_loop" => Ok(ControllerKind::OpenLoop),
            other => Err(Error::domain(format!("unknown controller `{other}` (mu | u | kiss | open-loop)"))),
        }
    }
}

/// Scalar time signal used for open-loop inputs and disturbances.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Signal {
    #[default]
    Zero,
    Constant(f64),
    /// `offset + amplitude * sin(2 pi frequency t)`.
    Sine {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
}

impl Signal {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Constant(c) => c,
            Signal::Sine { amplitude, frequency, offset } => {
                offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
            }
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Signal::Zero => true,
            Signal::Constant(c) => c.is_finite(),
            Signal::Sine { amplitude, frequency, offset } => {
                amplitude.is_finite() && frequency.is_finite() && offset.is_finite()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Chain(ChainState),
    Reduced(AmbState),
    Full(FullState),
}

impl InitialState {
    pub fn model(&self) -> ModelKind {
        match self {
            InitialState::Chain(_) => ModelKind::Chain,
            InitialState::Reduced(_) => ModelKind::Reduced,
            InitialState::Full(_) => ModelKind::Full,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            InitialState::Chain(s) => s.to_array().to_vec(),
            InitialState::Reduced(s) => s.to_array().to_vec(),
            InitialState::Full(s) => s.to_array().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub controller: ControllerKind,
    pub saturation: SaturationSpec,
    pub gains: GainSet,
    pub params: PhysicalParams,
    pub initial: InitialState,
    pub dt: f64,
    pub t_end: f64,
    /// Input for [`ControllerKind::OpenLoop`]: `mu` on the chain, `u` on the
    /// reduced model, the generalized voltage `v` on the full model.
    pub open_loop_input: Signal,
    /// Additive input disturbance, only used with [`ControllerKind::Kiss`].
    pub disturbance: Signal,
}

impl SimConfig {
    pub fn model(&self) -> ModelKind {
        self.initial.model()
    }

    /// Checks everything [`run_scenario`] needs; the error names the offending key.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("sim.dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::config("sim.t_end", format!("must be finite and >= dt, got {}", self.t_end)));
        }
        if self.initial.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::config("initial", "initial state must be finite"));
        }
        if !self.open_loop_input.is_finite() {
            return Err(Error::config("input", "open-loop input must be finite"));
        }
        if !self.disturbance.is_finite() {
            return Err(Error::config("disturbance", "disturbance must be finite"));
        }
        let model = self.model();
        let compatible = matches!(
            (model, self.controller),
            (ModelKind::Chain, ControllerKind::Mu | ControllerKind::OpenLoop)
                | (ModelKind::Reduced, ControllerKind::U | ControllerKind::Kiss | ControllerKind::OpenLoop)
                | (ModelKind::Full, ControllerKind::U | ControllerKind::OpenLoop)
        );
        if !compatible {
            return Err(Error::config(
                "controller",
                format!("controller `{}` cannot drive the `{}` model", self.controller, model),
            ));
        }
        if model != ModelKind::Chain {
            self.params.validate().map_err(|e| Error::config("params", e.to_string()))?;
        }
        if self.controller != ControllerKind::OpenLoop {
            ensure_admissible(&self.gains, self.saturation).map_err(|e| Error::config("gains.delta", e.to_string()))?;
            if model != ModelKind::Chain {
                ensure_feasible(&self.gains, &self.params).map_err(|e| Error::config("gains.c1", e.to_string()))?;
            }
        }
        Clf::new(self.saturation, self.gains).map_err(|e| Error::config("gains", e.to_string()))?;
        Ok(())
    }

    /// Number of recorded samples, `floor(t_end / dt) + 1`.
    pub fn sample_count(&self) -> usize {
        step_count(self.dt, self.t_end) + 1
    }
}

fn step_count(dt: f64, t_end: f64) -> usize {
    // tolerate t_end / dt landing a few ulps under an integer
    (t_end / dt * (1.0 + 1e-12)).floor() as usize
}

/// Static facts about a run, used by the certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub model: ModelKind,
    pub controller: ControllerKind,
    pub saturation: SaturationSpec,
    pub gains: GainSet,
    /// `None` on the chain model.
    pub params: Option<PhysicalParams>,
}

impl TrajectoryMeta {
    pub fn beta0(&self) -> Option<f64> {
        self.params.map(|p| p.beta0())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Raw model state: `xi` on the chain, `x` on the reduced model,
    /// `(y, ydot, flux1, flux2)` on the full model.
    pub state: Vec<f64>,
    /// `(x1, x2, x3)`; equals `xi` on the chain and `(y, ydot, flux1 - flux2)` on the full model.
    pub x: [f64; 3],
    /// Chain coordinates `(x1, x2, X3)`.
    pub xi: ChainState,
    /// Applied input: `mu` on the chain, `u = v / N` on the bearing models.
    pub input: f64,
    /// Rate of the third chain coordinate actually applied.
    pub chain_input: f64,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
    pub lyapunov: f64,
    pub storage: f64,
    pub g: f64,
    pub z: ZState,
}

impl Sample {
    pub fn state_norm(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn max_abs_voltage(&self) -> Option<f64> {
        self.samples.iter().filter_map(|s| Some(s.v1?.abs().max(s.v2?.abs()))).reduce(f64::max)
    }

    /// First time after which `||x||` stays within `fraction * ||x(0)||`.
    pub fn settling_time(&self, fraction: f64) -> Option<f64> {
        let threshold = fraction * self.first().state_norm();
        let mut settled = None;
        for s in &self.samples {
            if s.state_norm() <= threshold {
                settled.get_or_insert(s.t);
            } else {
                settled = None;
            }
        }
        settled
    }
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|i| x[i] + h * k[i])
}

/// One classical RK4 step.
pub fn rk4_step<const N: usize, F>(f: &mut F, t: f64, x: &[f64; N], h: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k2));
    let k4 = f(t + h, &axpy(x, h, &k3));
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn all_finite<const N: usize>(x: &[f64; N]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Fixed-step RK4 over `[0, t_end]`, recording every step.
pub fn integrate_rk4<const N: usize, F>(mut rhs: F, x0: [f64; N], dt: f64, t_end: f64) -> Result<Vec<(f64, [f64; N])>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    if !(dt.is_finite() && dt > 0.0 && t_end.is_finite() && t_end >= dt) {
        return Err(Error::domain(format!("need 0 < dt <= t_end, got dt={dt}, t_end={t_end}")));
    }
    let mut out = Vec::with_capacity(step_count(dt, t_end) + 1);
    integrate_on_grid(
        |t, x, _| rhs(t, x),
        None::<fn(&[f64; N]) -> f64>,
        x0,
        dt,
        t_end,
        |t, x| {
            out.push((t, *x));
        },
    )?;
    Ok(out)
}

/// RK4 with the branch held fixed over the step and crossings of `guard = 0` localized.
fn switched_step<const N: usize, F, G>(rhs: &mut F, guard: &G, t: f64, x: &[f64; N], h: f64) -> [f64; N]
where
    F: FnMut(f64, &[f64; N], Branch) -> [f64; N],
    G: Fn(&[f64; N]) -> f64,
{
    let mut branch = Branch::of(guard(x));
    let mut t = t;
    let mut x = *x;
    let mut remaining = h;
    for _ in 0..MAX_CROSSINGS_PER_STEP {
        let mut locked = |tt: f64, xx: &[f64; N]| rhs(tt, xx, branch);
        let end = rk4_step(&mut locked, t, &x, remaining);
        if Branch::of(guard(&end)) == branch || !all_finite(&end) {
            return end;
        }
        let (mut lo, mut hi) = (0.0, remaining);
        for _ in 0..CROSSING_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let xm = rk4_step(&mut locked, t, &x, mid);
            if Branch::of(guard(&xm)) == branch {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo > 0.0 {
            x = rk4_step(&mut locked, t, &x, lo);
        }
        t += lo;
        remaining -= lo;
        branch = branch.flip();
        if remaining <= 0.0 {
            return x;
        }
    }
    // repeated grazing: finish with the branch chosen per stage
    let mut per_stage = |tt: f64, xx: &[f64; N]| rhs(tt, xx, Branch::of(guard(xx)));
    rk4_step(&mut per_stage, t, &x, remaining)
}

fn integrate_on_grid<const N: usize, F, G>(
    mut rhs: F,
    guard: Option<G>,
    x0: [f64; N],
    dt: f64,
    t_end: f64,
    mut record: impl FnMut(f64, &[f64; N]),
) -> Result<()>
where
    F: FnMut(f64, &[f64; N], Branch) -> [f64; N],
    G: Fn(&[f64; N]) -> f64,
{
    let steps = step_count(dt, t_end);
    let mut x = x0;
    record(0.0, &x);
    for k in 0..steps {
        let t = k as f64 * dt;
        let next = match &guard {
            Some(g) => switched_step(&mut rhs, g, t, &x, dt),
            None => {
                let mut plain = |tt: f64, xx: &[f64; N]| rhs(tt, xx, Branch::First);
                rk4_step(&mut plain, t, &x, dt)
            }
        };
        if !all_finite(&next) {
            return Err(Error::Diverged { t: (k + 1) as f64 * dt, last_t: t, last_state: x.to_vec() });
        }
        x = next;
        record((k + 1) as f64 * dt, &x);
    }
    Ok(())
}

/// Runs a configured scenario and returns the sampled trajectory with diagnostics.
pub fn run_scenario(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let clf = Clf::new(cfg.saturation, cfg.gains)?;
    let meta = TrajectoryMeta {
        model: cfg.model(),
        controller: cfg.controller,
        saturation: cfg.saturation,
        gains: cfg.gains,
        params: (cfg.model() != ModelKind::Chain).then_some(cfg.params),
    };
    let mut samples = Vec::with_capacity(cfg.sample_count());
    let diag = |t: f64,
                state: Vec<f64>,
                x: [f64; 3],
                xi: ChainState,
                input: f64,
                chain_input: f64,
                volts: Option<(f64, f64)>| {
        let z = clf.z_of_xi(&xi);
        let storage = clf.storage(z.z2, z.z3);
        Sample {
            t,
            state,
            x,
            xi,
            input,
            chain_input,
            v1: volts.map(|v| v.0),
            v2: volts.map(|v| v.1),
            lyapunov: clf.value_z(&z),
            storage,
            g: clf.g(&z),
            z,
        }
    };

    match cfg.initial {
        InitialState::Chain(xi0) => {
            let ctl = match cfg.controller {
                ControllerKind::Mu => Some(ChainController::new(cfg.saturation, cfg.gains)?),
                _ => None,
            };
            let input = |t: f64, xi: &ChainState| match &ctl {
                Some(c) => c.mu(xi),
                None => cfg.open_loop_input.at(t),
            };
            integrate_on_grid(
                |t, s: &[f64; 3], _| {
                    rhs_chain(&ChainState::from_array(*s), input(t, &ChainState::from_array(*s))).to_array()
                },
                None::<fn(&[f64; 3]) -> f64>,
                xi0.to_array(),
                cfg.dt,
                cfg.t_end,
                |t, s| {
                    let xi = ChainState::from_array(*s);
                    let mu = input(t, &xi);
                    samples.push(diag(t, s.to_vec(), *s, xi, mu, mu, None));
                },
            )?;
        }
        InitialState::Reduced(x0) => {
            let model = AmbModel::new(cfg.params)?;
            let ctl = match cfg.controller {
                ControllerKind::OpenLoop => None,
                _ => Some(AmbController::new(cfg.saturation, cfg.gains, cfg.params)?),
            };
            let input = |t: f64, x: &AmbState| match (&ctl, cfg.controller) {
                (Some(c), ControllerKind::Kiss) => c.k_iss(x) + cfg.disturbance.at(t),
                (Some(c), _) => c.u(x),
                (None, _) => cfg.open_loop_input.at(t),
            };
            let turns = cfg.params.turns;
            integrate_on_grid(
                |t, s: &[f64; 3], branch| {
                    let x = AmbState::from_array(*s);
                    model.rhs_reduced_in_branch(&x, input(t, &x), branch).to_array()
                },
                Some(|s: &[f64; 3]| s[2]),
                x0.to_array(),
                cfg.dt,
                cfg.t_end,
                |t, s| {
                    let x = AmbState::from_array(*s);
                    let u = input(t, &x);
                    let xi = ChainState::new(x.x1, x.x2, model.flux_accel(x.x3));
                    let slope = model.beta0() + 2.0 * model.beta1() * x.x3.abs();
                    let volts = Branch::of(x.x3).voltages(turns * u);
                    samples.push(diag(t, s.to_vec(), *s, xi, u, slope * u, Some(volts)));
                },
            )?;
        }
        InitialState::Full(s0) => {
            let model = AmbModel::new(cfg.params)?;
            let ctl = match cfg.controller {
                ControllerKind::OpenLoop => None,
                _ => Some(AmbController::new(cfg.saturation, cfg.gains, cfg.params)?),
            };
            let turns = cfg.params.turns;
            let voltage = |t: f64, s: &FullState| match &ctl {
                Some(c) => turns * c.u(&s.reduced()),
                None => cfg.open_loop_input.at(t),
            };
            integrate_on_grid(
                |t, a: &[f64; 4], branch| {
                    let s = FullState::from_array(*a);
                    model.rhs_full_in_branch(&s, voltage(t, &s), branch).to_array()
                },
                Some(|a: &[f64; 4]| a[2] - a[3]),
                s0.to_array(),
                cfg.dt,
                cfg.t_end,
                |t, a| {
                    let s = FullState::from_array(*a);
                    let v = voltage(t, &s);
                    let x = s.reduced();
                    let u = v / turns;
                    let xi = ChainState::new(x.x1, x.x2, model.flux_accel(x.x3));
                    let slope = model.beta0() + 2.0 * model.beta1() * x.x3.abs();
                    let volts = Branch::of(x.x3).voltages(v);
                    samples.push(diag(t, a.to_vec(), x.to_array(), xi, u, slope * u, Some(volts)));
                },
            )?;
        }
    }
    Ok(Trajectory { meta, samples })
}

/// Default step for a gain set: largest power-of-ten fraction with `dt (c1 + c2) <= 0.1`.
pub fn default_dt(gains: &GainSet) -> f64 {
    let raw = 0.1 / (gains.c1 + gains.c2);
    let exp = raw.log10().floor() as i32;
    for k in [exp, exp - 1] {
        for m in [5, 2, 1] {
            // parsed from text so that e.g. 5e-6 is the nearest double, not 5 * 1e-6
            let dt: f64 = format!("{m}e{k}").parse().expect("well-formed float literal");
            if dt <= raw {
                return dt;
            }
        }
    }
    raw
}
