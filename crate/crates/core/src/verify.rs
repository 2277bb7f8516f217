//! Sampling-based certificates for the Lyapunov construction.
//!
//! These are falsification checks: each one evaluates an inequality at many
//! seeded sample states (or along a simulated trajectory) and reports the worst
//! margin together with the state where it occurred. A pass means no
//! counterexample was found, not that the inequality is proved.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::clf::Clf;
use crate::controller::{AmbController, ChainController, GainSet};
use crate::error::{Error, Result};
use crate::model::{ChainState, FullState, PhysicalParams};
use crate::saturation::{SaturationKind, SaturationSpec};
use crate::sim::{run_scenario, ControllerKind, InitialState, ModelKind, Signal, SimConfig, Trajectory};

pub const PD_TOLERANCE: f64 = 1e-9;
pub const VDOT_TOLERANCE: f64 = 1e-9;
pub const MONOTONE_SLACK: f64 = 1e-8;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-6;

/// Distance from a hard-saturation breakpoint below which sample states are nudged.
const KINK_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub samples: usize,
    /// Smallest margin seen; negative values are violations.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// State at which the worst margin occurred.
    pub witness: Vec<f64>,
    pub detail: String,
}

impl Certificate {
    fn new(name: &str, samples: usize, worst: Worst, tolerance: f64, detail: String) -> Self {
        Certificate {
            name: name.to_string(),
            samples,
            worst_margin: worst.margin,
            tolerance,
            pass: worst.margin >= -tolerance,
            witness: worst.witness,
            detail,
        }
    }
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} {}  samples={:<7} worst_margin={:+.6e} tol={:.1e} witness={:?}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.samples,
            self.worst_margin,
            self.tolerance,
            self.witness
        )?;
        if !self.detail.is_empty() {
            write!(f, "  ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Worst {
    margin: f64,
    witness: Vec<f64>,
}

impl Worst {
    fn none() -> Self {
        Worst { margin: f64::INFINITY, witness: Vec::new() }
    }

    fn offer(&mut self, margin: f64, witness: impl FnOnce() -> Vec<f64>) {
        // NaN margins count as violations
        let m = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if m < self.margin {
            self.margin = m;
            self.witness = witness();
        }
    }
}

/// Axis-aligned sampling region in chain coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl StateBox {
    pub fn symmetric(half_width: f64) -> Self {
        StateBox { lo: [-half_width; 3], hi: [half_width; 3] }
    }

    pub fn point(p: [f64; 3]) -> Self {
        StateBox { lo: p, hi: p }
    }

    fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.lo[i].is_finite() && self.hi[i].is_finite() && self.lo[i] <= self.hi[i]) {
                return Err(Error::domain(format!("invalid sampling box {self:?}")));
            }
        }
        Ok(())
    }

    /// The origin and axis points (when inside the box), then `n` seeded uniform draws.
    pub fn samples(&self, n: usize, seed: u64) -> Vec<ChainState> {
        let mut out = Vec::with_capacity(n + 13);
        let inside = |p: [f64; 3]| (0..3).all(|i| self.lo[i] <= p[i] && p[i] <= self.hi[i]);
        let mut fixed = vec![[0.0; 3]];
        for axis in 0..3 {
            for end in [self.lo[axis], self.hi[axis], 0.5 * self.lo[axis], 0.5 * self.hi[axis]] {
                let mut p = [0.0; 3];
                p[axis] = end;
                fixed.push(p);
            }
        }
        for p in fixed {
            if inside(p) && !out.iter().any(|q: &ChainState| q.to_array() == p) {
                out.push(ChainState::from_array(p));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            let p = std::array::from_fn(|i| {
                if self.lo[i] == self.hi[i] {
                    self.lo[i]
                } else {
                    rng.random_range(self.lo[i]..=self.hi[i])
                }
            });
            out.push(ChainState::from_array(p));
        }
        out
    }
}

/// Minimum of `margin_fn` over `points`, evaluated in parallel with a deterministic tie-break.
fn min_margin<T, F>(points: &[T], margin_fn: F) -> (f64, usize)
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync,
{
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let m = margin_fn(p);
            (if m.is_nan() { f64::NEG_INFINITY } else { m }, i)
        })
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
}

/// Positivity margin: `V` itself off the origin, pushed below -1 when `V <= 0`
/// so that a failed strict inequality cannot hide inside the tolerance.
fn positivity_margin(xi: &ChainState, v: f64) -> f64 {
    if *xi == ChainState::ORIGIN {
        -v.abs()
    } else if v > 0.0 {
        v
    } else {
        v - 1.0
    }
}

/// Lower bounds on `V1` from the proof: `1.5 (z2^2 + z3^2)` for `|z2| <= 1`,
/// `1.5 z3^2 + 2 |z2|` otherwise. Returns `V1 - bound`.
pub fn v1_bound_margin(clf: &Clf, z2: f64, z3: f64) -> f64 {
    let v1 = clf.v1(z2, z3);
    let bound = if z2.abs() <= 1.0 { 1.5 * (z2 * z2 + z3 * z3) } else { 1.5 * z3 * z3 + 2.0 * z2.abs() };
    v1 - bound
}

/// Positive definiteness of `V` and both `V1` lower bounds over `n` samples.
pub fn certify_pd(spec: SaturationSpec, gains: GainSet, region: StateBox, n: usize, seed: u64) -> Result<Certificate> {
    region.validate()?;
    let clf = Clf::new(spec, gains)?;
    let points = region.samples(n, seed);
    let margin = |xi: &ChainState| {
        let z = clf.z_of_xi(xi);
        let pos = positivity_margin(xi, clf.value_z(&z));
        pos.min(v1_bound_margin(&clf, z.z2, z.z3))
    };
    let (m, idx) = min_margin(&points, margin);
    let worst = Worst { margin: m, witness: points[idx].to_array().to_vec() };
    Ok(Certificate::new("positive-definite", points.len(), worst, PD_TOLERANCE, String::new()))
}

fn near_kink(s: f64) -> bool {
    (s.abs() - 1.0).abs() < KINK_BAND
}

/// Moves a sample off the hard-saturation breakpoints of `z1`, `z2` and `g`.
fn off_kinks(ctl: &ChainController, xi: ChainState) -> ChainState {
    if ctl.saturation().kind != SaturationKind::Hard {
        return xi;
    }
    let mut xi = xi;
    for k in 0..16 {
        let e = ctl.eval(&xi);
        if !(near_kink(e.z.z1) || near_kink(e.z.z2) || near_kink(e.g)) {
            break;
        }
        let bump = 1e-7 * (k + 1) as f64;
        xi = ChainState::new(xi.xi1 * (1.0 + bump) + bump, xi.xi2 * (1.0 + bump) + bump, xi.xi3 * (1.0 + 2.0 * bump));
    }
    xi
}

/// Normalized margin of the closed-loop decrease estimate at one state,
/// `(bound - Vdot) / (1 + |bound|)`.
pub fn vdot_margin(ctl: &ChainController, xi: &ChainState) -> f64 {
    let e = ctl.eval(xi);
    let vdot = ctl.clf().lie_derivative(xi, &crate::model::rhs_chain(xi, e.mu));
    let bound = ctl.decrease_bound(&e.z, e.g);
    (bound - vdot) / (1.0 + bound.abs())
}

/// Analytic `Vdot` along the closed-loop chain against
/// `-2 c1 sigma(z2)^2 - (delta c1 / 4) z3^2 - c2 sigma(g)^2`.
pub fn certify_vdot_bound(
    spec: SaturationSpec,
    gains: GainSet,
    region: StateBox,
    n: usize,
    seed: u64,
) -> Result<Certificate> {
    region.validate()?;
    let ctl = ChainController::new(spec, gains)?;
    let points: Vec<ChainState> = region.samples(n, seed).into_iter().map(|p| off_kinks(&ctl, p)).collect();
    let (m, idx) = min_margin(&points, |xi| vdot_margin(&ctl, xi));
    let worst = Worst { margin: m, witness: points[idx].to_array().to_vec() };
    Ok(Certificate::new("vdot-bound", points.len(), worst, VDOT_TOLERANCE, String::new()))
}

/// Checks a simulated trajectory: `V` nonincreasing, input amplitudes within the
/// feedback bounds, and coil voltages within `v_max`.
///
/// Margins are reported net of each check's slack, so the certificate
/// tolerance is zero.
pub fn certify_trajectory(traj: &Trajectory, gains: GainSet, spec: SaturationSpec) -> Result<Certificate> {
    let meta = &traj.meta;
    if meta.gains != gains || meta.saturation != spec {
        return Err(Error::domain("trajectory was produced with different gains or saturation"));
    }
    if traj.samples.is_empty() {
        return Err(Error::domain("empty trajectory"));
    }
    let mut worst = Worst::none();
    let mut which = "";
    let mut note = |w: &mut Worst, m: f64, name: &'static str, witness: &dyn Fn() -> Vec<f64>| {
        let before = w.margin;
        w.offer(m, witness);
        if w.margin < before {
            which = name;
        }
    };

    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let m = (a.lyapunov - b.lyapunov) / (1.0 + a.lyapunov.abs()) + MONOTONE_SLACK;
        note(&mut worst, m, "lyapunov-monotone", &|| with_time(b.t, &b.state));
    }

    let closed_loop = matches!(meta.controller, ControllerKind::Mu | ControllerKind::U);
    if closed_loop {
        let range = spec.range();
        let mu_bound = (gains.c1 + gains.c2) * range;
        match meta.model {
            ModelKind::Chain => {
                let ctl = ChainController::new(spec, gains)?;
                for s in &traj.samples {
                    note(&mut worst, mu_bound - ctl.mu(&s.xi).abs(), "mu-amplitude", &|| with_time(s.t, &s.state));
                }
            }
            ModelKind::Reduced | ModelKind::Full => {
                let params = meta.params.ok_or_else(|| Error::domain("bearing trajectory without parameters"))?;
                let ctl = AmbController::new(spec, gains, params)?;
                let u_bound = ctl.amplitude_bound();
                for s in &traj.samples {
                    let x = crate::model::AmbState::from_array(s.x);
                    let wit = || with_time(s.t, &s.state);
                    note(&mut worst, mu_bound - ctl.chain().mu(&ctl.xi_of_x(&x)).abs(), "mu-amplitude", &wit);
                    note(&mut worst, u_bound - ctl.u(&x).abs(), "u-amplitude", &wit);
                    if let (Some(v1), Some(v2)) = (s.v1, s.v2) {
                        let vm = v1.abs().max(v2.abs());
                        note(&mut worst, params.v_max - vm, "voltage", &wit);
                    }
                }
            }
        }
    }
    let detail = if worst.margin < 0.0 { format!("worst check: {which}") } else { String::new() };
    Ok(Certificate::new("trajectory", traj.samples.len(), worst, 0.0, detail))
}

fn with_time(t: f64, state: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(state.len() + 1);
    w.push(t);
    w.extend_from_slice(state);
    w
}

/// How both models are driven in [`certify_equivalence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    /// The same generalized voltage `v(t)`; the reduced model receives `v / N`.
    OpenLoop(Signal),
    /// The bearing feedback `u(x)` on each model.
    ClosedLoop { saturation: SaturationSpec, gains: GainSet },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceSetup {
    /// Must have zero coil resistance. The initial control fluxes are taken from `initial`.
    pub params: PhysicalParams,
    pub initial: FullState,
    pub drive: Drive,
    pub dt: f64,
    pub horizon: f64,
    /// Parameters handed to the reduced model instead of `params` (negative controls).
    pub reduced_params: Option<PhysicalParams>,
}

/// Full model against reduced model under the same generalized voltage.
///
/// Margin is `-max|y_full - y_reduced| / max|y_full|`.
pub fn certify_equivalence(setup: &EquivalenceSetup) -> Result<Certificate> {
    let p = setup.params;
    if p.r1 != 0.0 || p.r2 != 0.0 {
        return Err(Error::Precondition(format!(
            "model equivalence needs zero coil resistance, got r1={}, r2={}",
            p.r1, p.r2
        )));
    }
    let s0 = setup.initial;
    let full_params = p.with_initial_fluxes(s0.flux1, s0.flux2);
    let reduced_params = setup.reduced_params.unwrap_or(full_params);
    let (controller, saturation, gains, full_input, reduced_input) = match setup.drive {
        Drive::OpenLoop(sig) => {
            let scaled = match sig {
                Signal::Zero => Signal::Zero,
                Signal::Constant(c) => Signal::Constant(c / p.turns),
                Signal::Sine { amplitude, frequency, offset } => {
                    Signal::Sine { amplitude: amplitude / p.turns, frequency, offset: offset / p.turns }
                }
            };
            (ControllerKind::OpenLoop, SaturationSpec::hard(), GainSet::tied(1.0), sig, scaled)
        }
        Drive::ClosedLoop { saturation, gains } => (ControllerKind::U, saturation, gains, Signal::Zero, Signal::Zero),
    };
    let base = SimConfig {
        controller,
        saturation,
        gains,
        params: full_params,
        initial: InitialState::Full(s0),
        dt: setup.dt,
        t_end: setup.horizon,
        open_loop_input: full_input,
        disturbance: Signal::Zero,
    };
    let full = run_scenario(&base)?;
    let reduced = run_scenario(&SimConfig {
        params: reduced_params,
        initial: InitialState::Reduced(s0.reduced()),
        open_loop_input: reduced_input,
        ..base
    })?;

    let amplitude = full.samples.iter().map(|s| s.x[0].abs()).fold(0.0, f64::max);
    let mut max_diff = 0.0f64;
    let mut witness = Vec::new();
    for (a, b) in full.samples.iter().zip(&reduced.samples) {
        let d = (a.x[0] - b.x[0]).abs();
        if d > max_diff || witness.is_empty() {
            max_diff = max_diff.max(d);
            witness = with_time(a.t, &a.state);
        }
    }
    let rel = if max_diff == 0.0 { 0.0 } else { max_diff / amplitude.max(f64::MIN_POSITIVE) };
    let crossings = full.samples.windows(2).filter(|w| (w[0].x[2] >= 0.0) != (w[1].x[2] >= 0.0)).count();
    let detail = format!("max |dy| = {max_diff:.3e}, max |y| = {amplitude:.3e}, flux sign changes = {crossings}");
    Ok(Certificate::new(
        "model-equivalence",
        full.samples.len(),
        Worst { margin: -rel, witness },
        EQUIVALENCE_TOLERANCE,
        detail,
    ))
}

/// Scans the closed-loop chain field for equilibria other than the origin.
///
/// Any equilibrium has `xi2 = xi3 = 0`, so it suffices to show that
/// `mu(xi1, 0, 0)` is restoring (`-sign(xi1) mu > 0`) on a grid of `n` nonzero
/// points in `[-half_width, half_width]`. Margin is the smallest restoring value.
pub fn certify_unique_equilibrium(
    spec: SaturationSpec,
    gains: GainSet,
    half_width: f64,
    n: usize,
) -> Result<Certificate> {
    let ctl = ChainController::new(spec, gains)?;
    if !(half_width.is_finite() && half_width > 0.0) || n < 2 {
        return Err(Error::domain("need a positive half width and at least two grid points"));
    }
    let points: Vec<ChainState> = (0..n)
        .map(|k| {
            let s = -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64;
            ChainState::new(s, 0.0, 0.0)
        })
        .filter(|p| p.xi1 != 0.0)
        .collect();
    let (m, idx) = min_margin(&points, |xi| -xi.xi1.signum() * ctl.mu(xi));
    let mu0 = ctl.mu(&ChainState::ORIGIN);
    let worst = Worst { margin: m, witness: points[idx].to_array().to_vec() };
    let mut cert = Certificate::new("unique-equilibrium", points.len(), worst, 0.0, format!("mu(0) = {mu0}"));
    cert.pass = cert.worst_margin > 0.0 && mu0 == 0.0;
    Ok(cert)
}
