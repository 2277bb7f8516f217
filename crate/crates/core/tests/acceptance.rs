//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that every line is printed even when
//! everything passes. Exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use ambstab::config::{normalized_params, preset, high_gain_params};
use ambstab::controller::validate_gains;
use ambstab::model::rhs_chain;
use ambstab::sim::{
    integrate_rk4, run_scenario, ControllerKind, InitialState, ModelKind, Signal, SimConfig, Trajectory,
};
use ambstab::verify::{
    certify_equivalence, certify_pd, certify_trajectory, certify_unique_equilibrium, certify_vdot_bound, Certificate,
    Drive, EquivalenceSetup, StateBox,
};
use ambstab::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HARD: SaturationSpec = SaturationSpec::hard();
const FOUR_THIRDS: f64 = 4.0 / 3.0;
const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

type Criterion = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("delta-condition gate", gate),
        ("positive definiteness", positive_definite),
        ("decrease estimate", vdot_bound),
        ("amplitude bounds", amplitude),
        ("global convergence", convergence),
        ("full/reduced equivalence", equivalence),
        ("integrator order", integrator_order),
        ("high-gain scenario", high_gain_scenario),
        ("gradients", gradients),
        ("smooth saturation", smooth_path),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {:<26} [{:>6.2}s] {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let e = start.elapsed();
    (e < limit, format!("{:.2}s of {:.0}s budget", e.as_secs_f64(), limit.as_secs_f64()))
}

fn cert_line(c: &Certificate) -> String {
    format!("{} {} margin {:+.3e}", c.name, if c.pass { "ok" } else { "FAILED" }, c.worst_margin)
}

/// Independent statement of the admissibility condition for the hard shape.
fn admissible_oracle(c1: f64, c2: f64, delta: f64) -> bool {
    let ok = |v: f64| v.is_finite() && v > 0.0;
    ok(c1) && ok(c2) && ok(delta) && delta <= FOUR_THIRDS && delta <= c1
}

fn gate() -> Outcome {
    let start = Instant::now();
    let accepts = |g: GainSet| validate_gains(&g, HARD).is_empty();
    let mut ok = accepts(GainSet::tied(FOUR_THIRDS)) && accepts(GainSet::new(5465.0, 5300.0, FOUR_THIRDS));
    let mut cases = 0usize;
    let c1s = [1e-9, 0.1, 0.5, 1.0, 1.2, FOUR_THIRDS, 1.34, 2.0, 5465.0, 1e9];
    for &c1 in &c1s {
        for &c2 in &[1e-9, 1.0, 5300.0] {
            let edge = c1.min(FOUR_THIRDS);
            let deltas = [edge, edge.next_up(), edge.next_down(), 0.5 * edge, 2.0, -0.0, 0.0, f64::NAN, f64::INFINITY];
            for &d in &deltas {
                cases += 1;
                if accepts(GainSet::new(c1, c2, d)) != admissible_oracle(c1, c2, d) {
                    ok = false;
                }
            }
        }
    }
    for &bad in &[0.0, -1.0, f64::NAN] {
        cases += 2;
        ok &= !accepts(GainSet::new(bad, 1.0, 0.5)) && !accepts(GainSet::new(1.0, bad, 0.5));
    }
    let (fast, t) = within(Duration::from_secs(1), start);
    Outcome::new(ok && fast, format!("{cases} boundary cases, {t}"))
}

fn positive_definite() -> Outcome {
    let start = Instant::now();
    let c = certify_pd(HARD, GainSet::tied(FOUR_THIRDS), StateBox::symmetric(10.0), 100_000, SEED).unwrap();
    let (fast, t) = within(Duration::from_secs(10), start);
    Outcome::new(
        c.pass && c.worst_margin >= -1e-9 && fast,
        format!("{} over {} samples, {t}", cert_line(&c), c.samples),
    )
}

fn vdot_bound() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for g in [GainSet::tied(FOUR_THIRDS), GainSet::new(2.0, 1.0, 1.0)] {
        let c = certify_vdot_bound(HARD, g, StateBox::symmetric(10.0), 100_000, SEED).unwrap();
        ok &= c.pass;
        parts.push(format!("({}, {}, {:.4}) {}", g.c1, g.c2, g.delta, cert_line(&c)));
    }
    let (fast, t) = within(Duration::from_secs(10), start);
    Outcome::new(ok && fast, format!("{}, {t}", parts.join("; ")))
}

fn reduced_run(x0: AmbState, gains: GainSet, spec: SaturationSpec, t_end: f64) -> Result<Trajectory> {
    run_scenario(&SimConfig {
        controller: ControllerKind::U,
        saturation: spec,
        gains,
        params: normalized_params(),
        initial: InitialState::Reduced(x0),
        dt: 0.01,
        t_end,
        open_loop_input: Signal::Zero,
        disturbance: Signal::Zero,
    })
}

fn amplitude() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ok = true;
    let mut states = 0usize;
    let rigs = [(normalized_params(), [100.0, 100.0, 100.0]), (high_gain_params(), [4e-4, 1.0, 1e-3])];
    for gains in [GainSet::tied(FOUR_THIRDS), GainSet::new(5465.0, 5300.0, FOUR_THIRDS)] {
        for (params, scale) in rigs {
            let ctl = AmbController::new(HARD, gains, params).unwrap();
            let mu_max = gains.c1 + gains.c2;
            let u_max = mu_max / params.beta0();
            for _ in 0..25_000 {
                let x = AmbState::from_array(std::array::from_fn(|i| rng.random_range(-scale[i]..=scale[i])));
                ok &= ctl.chain().mu(&ctl.xi_of_x(&x)).abs() <= mu_max;
                ok &= ctl.u(&x).abs() <= u_max;
                states += 1;
            }
        }
    }

    // every sample of simulated runs on each model
    let mut samples = 0usize;
    let mut worst_v: f64 = 0.0;
    let mut runs: Vec<Trajectory> = Vec::new();
    for k in 0..5 {
        let x0 = AmbState::new(0.5 - 0.25 * k as f64, 1.0, -0.75);
        runs.push(reduced_run(x0, GainSet::tied(FOUR_THIRDS), HARD, 30.0).unwrap());
    }
    runs.push(run_scenario(&preset("chain-demo").unwrap().sim_config().unwrap()).unwrap());
    runs.push(run_scenario(&preset("paper-hg").unwrap().sim_config().unwrap()).unwrap());
    for tr in &runs {
        let g = tr.meta.gains;
        let mu_max = g.c1 + g.c2;
        match tr.meta.model {
            ModelKind::Chain => ok &= tr.samples.iter().all(|s| s.input.abs() <= mu_max),
            _ => {
                let p = tr.meta.params.unwrap();
                let ctl = AmbController::new(tr.meta.saturation, g, p).unwrap();
                let fb = ambstab::controller::gain_feasibility(&g, &p);
                for s in &tr.samples {
                    let x = AmbState::from_array(s.x);
                    ok &= ctl.chain().mu(&s.xi).abs() <= mu_max;
                    ok &= ctl.u(&x).abs() <= mu_max / p.beta0();
                    ok &= s.input.abs() <= mu_max / p.beta0();
                    let v = s.v1.unwrap().abs().max(s.v2.unwrap().abs());
                    worst_v = worst_v.max(v / p.v_max);
                    ok &= fb.is_feasible() && v <= p.v_max;
                }
            }
        }
        samples += tr.samples.len();
    }
    Outcome::new(ok, format!("{states} random states, {samples} trajectory samples, max |v|/v_max = {worst_v:.4}"))
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_ratio: f64 = 0.0;
    let mut ok = true;
    for _ in 0..100 {
        let x0 = AmbState::from_array(std::array::from_fn(|_| rng.random_range(-1.0..=1.0)));
        let tr = reduced_run(x0, GainSet::tied(FOUR_THIRDS), HARD, 60.0).unwrap();
        let ratio = tr.last().state_norm() / tr.first().state_norm();
        worst_ratio = worst_ratio.max(ratio);
        ok &= ratio <= 1e-4;
        // monotone V within 1e-8 relative slack
        ok &= tr.samples.windows(2).all(|w| w[1].lyapunov <= w[0].lyapunov + 1e-8 * (1.0 + w[0].lyapunov.abs()));
    }
    let (fast, t) = within(Duration::from_secs(60), start);
    Outcome::new(ok && fast, format!("100 runs from [-1,1]^3, T = 60, worst |x(T)|/|x(0)| = {worst_ratio:.2e}, {t}"))
}

fn flux_sign_changes(setup: &EquivalenceSetup) -> usize {
    let p = setup.params.with_initial_fluxes(setup.initial.flux1, setup.initial.flux2);
    let (controller, input, saturation, gains) = match setup.drive {
        Drive::OpenLoop(s) => (ControllerKind::OpenLoop, s, HARD, GainSet::tied(1.0)),
        Drive::ClosedLoop { saturation, gains } => (ControllerKind::U, Signal::Zero, saturation, gains),
    };
    let tr = run_scenario(&SimConfig {
        controller,
        saturation,
        gains,
        params: p,
        initial: InitialState::Full(setup.initial),
        dt: setup.dt,
        t_end: setup.horizon,
        open_loop_input: input,
        disturbance: Signal::Zero,
    })
    .unwrap();
    tr.samples.windows(2).filter(|w| (w[0].x[2] >= 0.0) != (w[1].x[2] >= 0.0)).count()
}

fn equivalence() -> Outcome {
    let hg = preset("paper-hg").unwrap();
    let hg_cfg = hg.sim_config().unwrap();
    let cases = [
        (
            "open-loop sine",
            EquivalenceSetup {
                params: normalized_params(),
                initial: FullState::new(0.1, 0.0, 1.0, 1.0),
                drive: Drive::OpenLoop(Signal::Sine { amplitude: 1.0, frequency: 0.5, offset: -0.2 }),
                dt: 1e-3,
                horizon: 8.0,
                reduced_params: None,
            },
        ),
        (
            "closed loop",
            EquivalenceSetup {
                params: normalized_params(),
                initial: FullState::new(0.5, -0.5, 1.5, 1.0),
                drive: Drive::ClosedLoop { saturation: HARD, gains: GainSet::tied(FOUR_THIRDS) },
                dt: 0.01,
                horizon: 30.0,
                reduced_params: None,
            },
        ),
        (
            "high-gain",
            EquivalenceSetup {
                params: hg_cfg.params,
                initial: FullState::new(1.5e-4, 0.0, 20e-6, 60e-6),
                drive: Drive::ClosedLoop { saturation: HARD, gains: hg_cfg.gains },
                dt: hg_cfg.dt,
                horizon: hg_cfg.t_end,
                reduced_params: None,
            },
        ),
    ];
    let mut ok = true;
    let mut crossings = 0;
    let mut parts = Vec::new();
    for (name, setup) in &cases {
        let c = certify_equivalence(setup).unwrap();
        let n = flux_sign_changes(setup);
        crossings += n;
        ok &= c.pass && -c.worst_margin <= 1e-6;
        parts.push(format!("{name}: rel {:.1e}, {n} crossings", -c.worst_margin));
    }
    ok &= crossings >= 3;

    // negative control: reduced model with a wrong effective bias
    let (_, base) = &cases[1];
    let mut wrong = base.params.with_initial_fluxes(base.initial.flux1, base.initial.flux2);
    wrong.phi2_0 += 0.2;
    let neg = certify_equivalence(&EquivalenceSetup { reduced_params: Some(wrong), ..*base }).unwrap();
    ok &= !neg.pass;
    parts.push(format!("mismatched bias rejected ({:.1e})", -neg.worst_margin));
    Outcome::new(ok, parts.join("; "))
}

fn integrator_order() -> Outcome {
    // closed loop started close enough to the origin that no saturation is active
    let clf = Clf::new(HARD, GainSet::tied(FOUR_THIRDS)).unwrap();
    let ctl = ChainController::new(HARD, GainSet::tied(FOUR_THIRDS)).unwrap();
    let x0 = [0.05, -0.02, 0.01];
    let t_end = 2.0;
    let field = |_: f64, x: &[f64; 3]| {
        let xi = ChainState::from_array(*x);
        rhs_chain(&xi, ctl.mu(&xi)).to_array()
    };
    let fine = integrate_rk4(field, x0, 1e-3, t_end).unwrap();
    let kink_free = fine.iter().all(|(_, x)| {
        let xi = ChainState::from_array(*x);
        let z = clf.z_of_xi(&xi);
        z.z1.abs() < 0.9 && z.z2.abs() < 0.9 && clf.g(&z).abs() < 0.9
    });
    let end = |dt: f64| *integrate_rk4(field, x0, dt, t_end).unwrap().last().map(|(_, x)| x).unwrap();
    let dist = |a: [f64; 3], b: [f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let (a, b, c) = (end(0.04), end(0.02), end(0.01));
    let ratio = dist(a, b) / dist(b, c);
    let ok = kink_free && (16.0 * 0.7..=16.0 * 1.3).contains(&ratio);
    Outcome::new(ok, format!("dt = 0.04/0.02/0.01 on a saturation-free segment, ratio {ratio:.2} (16 +- 30%)"))
}

fn high_gain_scenario() -> Outcome {
    let settings = preset("paper-hg").unwrap();
    let cfg = settings.sim_config().unwrap();
    let tr = run_scenario(&cfg).unwrap();
    let v_ok = tr
        .samples
        .iter()
        .all(|s| s.v1.unwrap().abs() <= 10.0 && s.v2.unwrap().abs() <= 10.0 && s.v1.unwrap() * s.v2.unwrap() == 0.0);
    let v0 = tr.first().lyapunov;
    let vt = tr.last().lyapunov;
    let last = tr.last();
    let settled = last.z.z2.abs() <= 1e-3 && last.z.z3.abs() <= 1e-3;
    let y_down = last.x[0] < tr.first().x[0] && last.x[0] > 0.0;

    let region = StateBox::symmetric(10.0);
    let certs = [
        certify_pd(HARD, cfg.gains, region, 100_000, SEED).unwrap(),
        certify_vdot_bound(HARD, cfg.gains, region, 100_000, SEED).unwrap(),
        certify_unique_equilibrium(HARD, cfg.gains, 10.0, 100_000).unwrap(),
        certify_trajectory(&tr, cfg.gains, HARD).unwrap(),
    ];
    let certs_ok = certs.iter().all(|c| c.pass);
    let ok = v_ok && vt <= 1e-3 * v0 && settled && y_down && certs_ok;
    Outcome::new(
        ok,
        format!(
            "max |v| = {:.3} V, V {:.3e} -> {:.3e}, |z2|,|z3| at T: {:.1e}, {:.1e}, y {:.4e} -> {:.4e} (slow mode), certificates {}",
            tr.max_abs_voltage().unwrap(),
            v0,
            vt,
            last.z.z2.abs(),
            last.z.z3.abs(),
            tr.first().x[0],
            last.x[0],
            if certs_ok { "pass" } else { "FAILED" }
        ),
    )
}

fn near_hard_kink(clf: &Clf, xi: &ChainState, band: f64) -> bool {
    let z = clf.z_of_xi(xi);
    (z.z1.abs() - 1.0).abs() < band || (z.z2.abs() - 1.0).abs() < band
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * (1.0 + a.abs().max(b.abs()));
    let mut ok = true;
    let mut checked = [0usize; 3];
    for (k, spec) in [HARD, SaturationSpec::smooth()].into_iter().enumerate() {
        let clf = Clf::new(spec, GainSet::tied(1.0)).unwrap();
        while checked[k] < 1000 {
            let xi = ChainState::from_array(std::array::from_fn(|_| rng.random_range(-5.0..=5.0)));
            if spec.kind == SaturationKind::Hard && near_hard_kink(&clf, &xi, 1e-3) {
                continue;
            }
            let grad = clf.grad(&xi);
            let p = xi.to_array();
            for i in 0..3 {
                let h = 1e-6 * (1.0 + p[i].abs());
                let (mut a, mut b) = (p, p);
                a[i] += h;
                b[i] -= h;
                let fd = (clf.value(&ChainState::from_array(a)) - clf.value(&ChainState::from_array(b))) / (2.0 * h);
                ok &= close(grad[i], fd);
            }
            checked[k] += 1;
        }
    }

    // K = u - dV/dx3 against finite differences of x -> V(xi(x))
    let ctl = AmbController::new(HARD, GainSet::tied(1.0), normalized_params()).unwrap();
    while checked[2] < 1000 {
        let x = AmbState::from_array(std::array::from_fn(|_| rng.random_range(-2.0..=2.0)));
        if near_hard_kink(ctl.chain().clf(), &ctl.xi_of_x(&x), 1e-3) {
            continue;
        }
        let h = 1e-6 * (1.0 + x.x3.abs());
        let v = |x3: f64| ctl.lyapunov(&AmbState::new(x.x1, x.x2, x3));
        let fd = (v(x.x3 + h) - v(x.x3 - h)) / (2.0 * h);
        ok &= close(ctl.k_iss(&x), ctl.u(&x) - fd);
        checked[2] += 1;
    }
    Outcome::new(
        ok,
        format!("{} hard, {} smooth gradient points, {} K points, tolerance 1e-5", checked[0], checked[1], checked[2]),
    )
}

fn smooth_path() -> Outcome {
    let spec = SaturationSpec::smooth();
    let region = StateBox::symmetric(10.0);
    let mut lines = Vec::new();
    let mut documented_ok = false;
    for (gains, documented) in [(GainSet::tied(1.0), true), (GainSet::new(2.0, 1.0, 1.0), false)] {
        let mut certs = vec![
            certify_pd(spec, gains, region, 100_000, SEED).unwrap(),
            certify_vdot_bound(spec, gains, region, 100_000, SEED).unwrap(),
            certify_unique_equilibrium(spec, gains, 10.0, 10_001).unwrap(),
        ];
        let tr = reduced_run(AmbState::new(0.5, -0.5, 0.5), gains, spec, 80.0).unwrap();
        certs.push(certify_trajectory(&tr, gains, spec).unwrap());
        let converged = tr.last().state_norm() <= 1e-4 * tr.first().state_norm();
        let certified = certs.iter().all(|c| c.pass);
        if documented {
            documented_ok = certified && converged;
        }
        let failed: Vec<&str> = certs.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        lines.push(format!(
            "({}, {}, {}) certificates {}{}, {} by T = 80",
            gains.c1,
            gains.c2,
            gains.delta,
            if certified { "pass" } else { "fail" },
            if failed.is_empty() { String::new() } else { format!(" [{}]", failed.join(", ")) },
            if converged { "converged" } else { "not yet converged" }
        ));
    }
    Outcome::new(documented_ok, format!("default cap 1: {}", lines.join("; ")))
}
