//! Flat `section.key = value` run configuration and the compiled presets.
//!
//! One setting per line; `#` starts a comment. Numbers accept a plain
//! fraction such as `4/3`. A `preset = <name>` line, wherever it appears,
//! selects the starting point and the remaining lines override it.
//!
//! | key | meaning |
//! |-----|---------|
//! | `preset` | compiled preset to start from (see [`PRESETS`]) |
//! | `model` | `chain`, `reduced` or `full` |
//! | `controller` | `mu`, `u`, `kiss` or `open-loop` |
//! | `saturation` | `hard` or `smooth-atan` |
//! | `gains.c1`, `gains.c2`, `gains.delta` | feedback gains |
//! | `gains.tied` | sets `c1 = c2 = delta` |
//! | `gains.smooth_delta_cap` | `delta` ceiling for `smooth-atan` (default 1) |
//! | `params.mass`, `params.mu0`, `params.area`, `params.turns`, `params.gap`, `params.bias_flux` | rig constants (SI) |
//! | `params.r1`, `params.r2`, `params.v_max`, `params.phi1_0`, `params.phi2_0` | resistances, voltage limit, initial control fluxes |
//! | `initial.x1` (`initial.y`, `initial.xi1`) | position |
//! | `initial.x2` (`initial.ydot`, `initial.xi2`) | velocity |
//! | `initial.x3` (`initial.xi3`) | generalized flux, or `xi3` on the chain |
//! | `initial.flux1`, `initial.flux2` | total coil fluxes; required for `full`, optional for `reduced` |
//! | `sim.dt` | step size or `auto` (largest 5/2/1 decade value with `dt (c1 + c2) <= 0.1`) |
//! | `sim.t_end` | horizon |
//! | `input.kind`, `input.amplitude`, `input.frequency`, `input.offset` | open-loop input: `zero`, `constant` (uses amplitude) or `sine` |
//! | `disturbance.*` | same fields, additive disturbance for `kiss` |
//! | `verify.samples`, `verify.box` | sample count and half width of the sampling cube |
//! | `verify.checks` | comma list of `pd`, `vdot`, `equilibrium`, `trajectory`, `equivalence`, or `auto` |
//! | `verify.equivalence_horizon` | horizon of the full/reduced comparison (default `sim.t_end`) |
//! | `sweep.<numeric key>` | comma list of values; the sweep runs the Cartesian product |
//! | `run.seed` | sampler seed |
//! | `units.position` | label for the position unit, metadata only |

use std::fmt::Write as _;

use crate::controller::GainSet;
use crate::error::{Error, Result};
use crate::model::{AmbState, ChainState, FullState, PhysicalParams, MU0};
use crate::saturation::{SaturationKind, SaturationSpec, DEFAULT_SMOOTH_DELTA_CAP};
use crate::sim::{default_dt, ControllerKind, InitialState, ModelKind, Signal, SimConfig};

pub const PRESETS: &[&str] = &["normalized", "paper-hg", "zero-state", "chain-demo", "smooth-demo"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Zero,
    Constant,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSettings {
    pub kind: SignalKind,
    pub amplitude: f64,
    pub frequency: f64,
    pub offset: f64,
}

impl Default for SignalSettings {
    fn default() -> Self {
        SignalSettings { kind: SignalKind::Zero, amplitude: 0.0, frequency: 0.0, offset: 0.0 }
    }
}

impl SignalSettings {
    pub fn signal(&self) -> Signal {
        match self.kind {
            SignalKind::Zero => Signal::Zero,
            SignalKind::Constant => Signal::Constant(self.amplitude),
            SignalKind::Sine => {
                Signal::Sine { amplitude: self.amplitude, frequency: self.frequency, offset: self.offset }
            }
        }
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            SignalKind::Zero => "zero",
            SignalKind::Constant => "constant",
            SignalKind::Sine => "sine",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Check {
    Pd,
    Vdot,
    Equilibrium,
    Trajectory,
    Equivalence,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Pd => "pd",
            Check::Vdot => "vdot",
            Check::Equilibrium => "equilibrium",
            Check::Trajectory => "trajectory",
            Check::Equivalence => "equivalence",
        }
    }

    fn parse(s: &str) -> Option<Check> {
        Some(match s {
            "pd" => Check::Pd,
            "vdot" => Check::Vdot,
            "equilibrium" => Check::Equilibrium,
            "trajectory" => Check::Trajectory,
            "equivalence" => Check::Equivalence,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub samples: usize,
    pub half_width: f64,
    /// `None` selects the checks that apply to the configured model.
    pub checks: Option<Vec<Check>>,
    pub equivalence_horizon: Option<f64>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings { samples: 100_000, half_width: 10.0, checks: None, equivalence_horizon: None }
    }
}

/// Everything a configuration file can say, before it is turned into a [`SimConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub preset: Option<String>,
    pub model: ModelKind,
    pub controller: ControllerKind,
    pub saturation: SaturationKind,
    pub smooth_delta_cap: f64,
    pub gains: GainSet,
    pub params: PhysicalParams,
    pub x: [f64; 3],
    pub flux1: Option<f64>,
    pub flux2: Option<f64>,
    /// `None` means [`default_dt`].
    pub dt: Option<f64>,
    pub t_end: f64,
    pub input: SignalSettings,
    pub disturbance: SignalSettings,
    pub verify: VerifySettings,
    /// Sweep axes in file order, values kept as written.
    pub sweep: Vec<(String, Vec<String>)>,
    pub seed: u64,
    pub position_unit: String,
}

impl Default for Settings {
    fn default() -> Self {
        normalized()
    }
}

/// Rig with every constant set to 1 (so `beta0 = 2`, `beta1 = 1`) and a loose voltage limit.
pub fn normalized_params() -> PhysicalParams {
    PhysicalParams {
        mass: 1.0,
        mu0: 1.0,
        area: 1.0,
        turns: 1.0,
        gap: 1.0,
        bias_flux: 1.0,
        r1: 0.0,
        r2: 0.0,
        v_max: 100.0,
        phi1_0: 0.0,
        phi2_0: 0.0,
    }
}

/// Synthetic rig for the high-gain scenario.
///
/// The bias flux, voltage limit and initial fluxes are the published scenario
/// values. Mass, pole area, turns and gap are not published; these are
/// made-up values chosen so that `beta0 * v_max / N ~ 12012` clears
/// `c1 + c2 = 10765`. With `flux1 = 20 uWb`, `flux2 = 60 uWb` the effective
/// bias is 20 uWb.
pub fn high_gain_params() -> PhysicalParams {
    PhysicalParams {
        mass: 2.65,
        mu0: MU0,
        area: 1e-4,
        turns: 100.0,
        gap: 4e-4,
        bias_flux: 10e-6,
        r1: 0.0,
        r2: 0.0,
        v_max: 10.0,
        phi1_0: 10e-6,
        phi2_0: 50e-6,
    }
}

fn normalized() -> Settings {
    Settings {
        preset: Some("normalized".into()),
        model: ModelKind::Reduced,
        controller: ControllerKind::U,
        saturation: SaturationKind::Hard,
        smooth_delta_cap: DEFAULT_SMOOTH_DELTA_CAP,
        gains: GainSet::tied(4.0 / 3.0),
        params: normalized_params(),
        x: [0.5, -0.5, 0.5],
        flux1: None,
        flux2: None,
        dt: Some(0.01),
        t_end: 60.0,
        input: SignalSettings::default(),
        disturbance: SignalSettings::default(),
        verify: VerifySettings::default(),
        sweep: Vec::new(),
        seed: 0,
        position_unit: "m".into(),
    }
}

/// Looks up a compiled preset.
pub fn preset(name: &str) -> Option<Settings> {
    let mut s = normalized();
    match name {
        "normalized" => {}
        "paper-hg" => {
            s.model = ModelKind::Full;
            s.gains = GainSet::new(5465.0, 5300.0, 4.0 / 3.0);
            s.params = high_gain_params();
            // 0.15 mrad
            s.x = [1.5e-4, 0.0, 0.0];
            s.flux1 = Some(20e-6);
            s.flux2 = Some(60e-6);
            s.dt = None;
            s.t_end = 0.05;
            s.position_unit = "rad".into();
        }
        "zero-state" => {
            s.x = [0.0; 3];
            s.t_end = 1.0;
        }
        "chain-demo" => {
            s.model = ModelKind::Chain;
            s.controller = ControllerKind::Mu;
            s.x = [2.0, -1.0, 0.5];
            s.t_end = 40.0;
        }
        "smooth-demo" => {
            s.saturation = SaturationKind::SmoothAtan;
            s.gains = GainSet::tied(1.0);
            s.t_end = 80.0;
        }
        _ => return None,
    }
    s.preset = Some(name.to_string());
    Some(s)
}

fn unknown_preset(name: &str) -> Error {
    Error::config("preset", format!("unknown preset `{name}` (available: {})", PRESETS.join(", ")))
}

/// Parses a number, accepting `a/b` fractions.
pub fn parse_number(key: &str, value: &str) -> Result<f64> {
    let v = value.trim();
    let parsed = match v.split_once('/') {
        Some((a, b)) => match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(a), Ok(b)) => Some(a / b),
            _ => None,
        },
        None => v.parse::<f64>().ok(),
    };
    match parsed {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(Error::config(key, format!("expected a finite number, got `{v}`"))),
    }
}

fn canonical_key(key: &str) -> &str {
    match key {
        "initial.y" | "initial.xi1" => "initial.x1",
        "initial.ydot" | "initial.xi2" => "initial.x2",
        "initial.xi3" => "initial.x3",
        other => other,
    }
}

impl Settings {
    pub fn from_preset(name: &str) -> Result<Settings> {
        preset(name).ok_or_else(|| unknown_preset(name))
    }

    /// Parses configuration text on top of `base` (or the preset it names).
    pub fn parse_with_base(text: &str, base: Settings) -> Result<Settings> {
        let mut lines = Vec::new();
        let mut chosen: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", n + 1), format!("expected `key = value`, got `{line}`"))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::config(format!("line {}", n + 1), "empty key"));
            }
            if k == "preset" {
                if chosen.is_some() {
                    return Err(Error::config("preset", "given more than once"));
                }
                chosen = Some(v.to_string());
            } else {
                lines.push((k.to_string(), v.to_string()));
            }
        }
        let mut s = match chosen {
            Some(name) => Settings::from_preset(&name)?,
            None => base,
        };
        for (k, v) in lines {
            s.set(&k, &v)?;
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Settings> {
        Settings::parse_with_base(text, Settings::default())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical_key(key.trim());
        let value = value.trim();
        let num = || parse_number(key, value);
        match key {
            "preset" => {
                *self = Settings::from_preset(value)?;
            }
            "model" => self.model = value.parse().map_err(|e: Error| Error::config(key, e.to_string()))?,
            "controller" => self.controller = value.parse().map_err(|e: Error| Error::config(key, e.to_string()))?,
            "saturation" => self.saturation = value.parse().map_err(|e: Error| Error::config(key, e.to_string()))?,
            "gains.c1" => self.gains.c1 = num()?,
            "gains.c2" => self.gains.c2 = num()?,
            "gains.delta" => self.gains.delta = num()?,
            "gains.tied" => self.gains = GainSet::tied(num()?),
            "gains.smooth_delta_cap" => self.smooth_delta_cap = num()?,
            "params.mass" => self.params.mass = num()?,
            "params.mu0" => self.params.mu0 = num()?,
            "params.area" => self.params.area = num()?,
            "params.turns" => self.params.turns = num()?,
            "params.gap" => self.params.gap = num()?,
            "params.bias_flux" => self.params.bias_flux = num()?,
            "params.r1" => self.params.r1 = num()?,
            "params.r2" => self.params.r2 = num()?,
            "params.v_max" => self.params.v_max = num()?,
            "params.phi1_0" => self.params.phi1_0 = num()?,
            "params.phi2_0" => self.params.phi2_0 = num()?,
            "initial.x1" => self.x[0] = num()?,
            "initial.x2" => self.x[1] = num()?,
            "initial.x3" => self.x[2] = num()?,
            "initial.flux1" => self.flux1 = Some(num()?),
            "initial.flux2" => self.flux2 = Some(num()?),
            "sim.dt" => self.dt = if value == "auto" { None } else { Some(num()?) },
            "sim.t_end" => self.t_end = num()?,
            "run.seed" => {
                self.seed = value.parse().map_err(|_| Error::config(key, format!("expected a u64, got `{value}`")))?
            }
            "units.position" => self.position_unit = value.to_string(),
            "verify.samples" => {
                self.verify.samples =
                    value.parse().map_err(|_| Error::config(key, format!("expected a count, got `{value}`")))?
            }
            "verify.box" => self.verify.half_width = num()?,
            "verify.equivalence_horizon" => self.verify.equivalence_horizon = Some(num()?),
            "verify.checks" => {
                if value == "auto" {
                    self.verify.checks = None;
                } else {
                    let mut checks = Vec::new();
                    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        let c =
                            Check::parse(item).ok_or_else(|| Error::config(key, format!("unknown check `{item}`")))?;
                        if !checks.contains(&c) {
                            checks.push(c);
                        }
                    }
                    self.verify.checks = Some(checks);
                }
            }
            _ => {
                if let Some(rest) = key.strip_prefix("input.") {
                    return set_signal(&mut self.input, key, rest, value);
                }
                if let Some(rest) = key.strip_prefix("disturbance.") {
                    return set_signal(&mut self.disturbance, key, rest, value);
                }
                if let Some(target) = key.strip_prefix("sweep.") {
                    return self.set_sweep_axis(key, target, value);
                }
                return Err(Error::config(key, "unknown key"));
            }
        }
        Ok(())
    }

    fn set_sweep_axis(&mut self, key: &str, target: &str, value: &str) -> Result<()> {
        let target = canonical_key(target);
        let values: Vec<String> = value.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::config(key, "empty value list"));
        }
        // every value must be accepted by the target key
        let mut probe = self.clone();
        for v in &values {
            parse_number(key, v)?;
            probe.set(target, v).map_err(|e| Error::config(key, e.to_string()))?;
        }
        match self.sweep.iter_mut().find(|(k, _)| k == target) {
            Some(axis) => axis.1 = values,
            None => self.sweep.push((target.to_string(), values)),
        }
        Ok(())
    }

    pub fn saturation_spec(&self) -> SaturationSpec {
        SaturationSpec::new(self.saturation).with_smooth_delta_cap(self.smooth_delta_cap)
    }

    pub fn resolved_dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| default_dt(&self.gains))
    }

    /// Builds and validates the simulation configuration.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut params = self.params;
        let [x1, x2, x3] = self.x;
        let initial = match self.model {
            ModelKind::Chain => InitialState::Chain(ChainState::new(x1, x2, x3)),
            ModelKind::Reduced => match (self.flux1, self.flux2) {
                (Some(f1), Some(f2)) => {
                    params = params.with_initial_fluxes(f1, f2);
                    InitialState::Reduced(AmbState::new(x1, x2, f1 - f2))
                }
                (None, None) => InitialState::Reduced(AmbState::new(x1, x2, x3)),
                (None, Some(_)) => return Err(Error::config("initial.flux1", "set both fluxes or neither")),
                (Some(_), None) => return Err(Error::config("initial.flux2", "set both fluxes or neither")),
            },
            ModelKind::Full => {
                let f1 = self.flux1.ok_or_else(|| Error::config("initial.flux1", "required for the full model"))?;
                let f2 = self.flux2.ok_or_else(|| Error::config("initial.flux2", "required for the full model"))?;
                params = params.with_initial_fluxes(f1, f2);
                InitialState::Full(FullState::new(x1, x2, f1, f2))
            }
        };
        if !(self.smooth_delta_cap.is_finite() && self.smooth_delta_cap > 0.0) {
            return Err(Error::config("gains.smooth_delta_cap", "must be finite and > 0"));
        }
        let cfg = SimConfig {
            controller: self.controller,
            saturation: self.saturation_spec(),
            gains: self.gains,
            params,
            initial,
            dt: self.resolved_dt(),
            t_end: self.t_end,
            open_loop_input: self.input.signal(),
            disturbance: self.disturbance.signal(),
        };
        cfg.validate()?;
        if self.verify.samples == 0 {
            return Err(Error::config("verify.samples", "must be > 0"));
        }
        if !(self.verify.half_width.is_finite() && self.verify.half_width >= 0.0) {
            return Err(Error::config("verify.box", "must be finite and >= 0"));
        }
        Ok(cfg)
    }

    /// Checks selected for `verify`, resolving `auto`.
    pub fn checks(&self) -> Vec<Check> {
        if let Some(c) = &self.verify.checks {
            return c.clone();
        }
        let mut out = vec![Check::Pd];
        if self.controller != ControllerKind::OpenLoop {
            out.extend([Check::Vdot, Check::Equilibrium]);
        }
        out.push(Check::Trajectory);
        if self.model == ModelKind::Full && self.params.r1 == 0.0 && self.params.r2 == 0.0 {
            out.push(Check::Equivalence);
        }
        out
    }

    /// Canonical text form; parsing it back gives the same settings.
    pub fn render(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        if let Some(p) = &self.preset {
            kv("preset", p.clone());
        }
        kv("model", self.model.name().into());
        kv("controller", self.controller.name().into());
        kv("saturation", self.saturation.name().into());
        kv("gains.c1", num(self.gains.c1));
        kv("gains.c2", num(self.gains.c2));
        kv("gains.delta", num(self.gains.delta));
        kv("gains.smooth_delta_cap", num(self.smooth_delta_cap));
        let p = &self.params;
        for (k, v) in [
            ("mass", p.mass),
            ("mu0", p.mu0),
            ("area", p.area),
            ("turns", p.turns),
            ("gap", p.gap),
            ("bias_flux", p.bias_flux),
            ("r1", p.r1),
            ("r2", p.r2),
            ("v_max", p.v_max),
            ("phi1_0", p.phi1_0),
            ("phi2_0", p.phi2_0),
        ] {
            kv(&format!("params.{k}"), num(v));
        }
        kv("initial.x1", num(self.x[0]));
        kv("initial.x2", num(self.x[1]));
        kv("initial.x3", num(self.x[2]));
        if let Some(f) = self.flux1 {
            kv("initial.flux1", num(f));
        }
        if let Some(f) = self.flux2 {
            kv("initial.flux2", num(f));
        }
        kv("sim.dt", self.dt.map_or("auto".into(), num));
        kv("sim.t_end", num(self.t_end));
        for (prefix, sig) in [("input", &self.input), ("disturbance", &self.disturbance)] {
            kv(&format!("{prefix}.kind"), sig.kind_name().into());
            kv(&format!("{prefix}.amplitude"), num(sig.amplitude));
            kv(&format!("{prefix}.frequency"), num(sig.frequency));
            kv(&format!("{prefix}.offset"), num(sig.offset));
        }
        kv("verify.samples", self.verify.samples.to_string());
        kv("verify.box", num(self.verify.half_width));
        kv(
            "verify.checks",
            match &self.verify.checks {
                None => "auto".into(),
                Some(c) => c.iter().map(|c| c.name()).collect::<Vec<_>>().join(", "),
            },
        );
        if let Some(h) = self.verify.equivalence_horizon {
            kv("verify.equivalence_horizon", num(h));
        }
        for (k, vals) in &self.sweep {
            kv(&format!("sweep.{k}"), vals.join(", "));
        }
        kv("run.seed", self.seed.to_string());
        kv("units.position", self.position_unit.clone());
        o
    }
}

/// Shortest round-tripping decimal form; never locale dependent.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn set_signal(sig: &mut SignalSettings, key: &str, field: &str, value: &str) -> Result<()> {
    match field {
        "kind" => {
            sig.kind = match value {
                "zero" => SignalKind::Zero,
                "constant" => SignalKind::Constant,
                "sine" => SignalKind::Sine,
                other => {
                    return Err(Error::config(key, format!("unknown signal `{other}` (zero, constant, sine)")));
                }
            }
        }
        "amplitude" => sig.amplitude = parse_number(key, value)?,
        "frequency" => sig.frequency = parse_number(key, value)?,
        "offset" => sig.offset = parse_number(key, value)?,
        _ => return Err(Error::config(key, "unknown key")),
    }
    Ok(())
}
