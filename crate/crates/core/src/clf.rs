//! Control-Lyapunov function for the triple integrator.
//!
//! With `z1 = delta (c1 xi1 + xi2) + (delta / c1) xi3`, `z2 = c1 xi2 + xi3`,
//! `z3 = xi3`:
//!
//! ```text
//! U  = z3^2 / 2 + S(z2)                     S(s) = int_0^s sigma
//! V1 = 4 U + 2 U^2 - (delta / 2) z2 z3
//! V  = V1 + S(z1)
//! g  = (delta / c1) sigma(z1) + 4 (1 + U)(z3 + sigma(z2)) - (delta / 2)(z2 + z3)
//! ```
//!
//! `V` is C^1 for either saturation shape because it only involves `S`, so the
//! gradient is exact everywhere.

use crate::controller::GainSet;
use crate::error::{Error, Result};
use crate::model::ChainState;
use crate::saturation::SaturationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZState {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

impl ZState {
    pub fn new(z1: f64, z2: f64, z3: f64) -> Self {
        ZState { z1, z2, z3 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.z1, self.z2, self.z3]
    }
}

/// Lyapunov function bound to a saturation shape and gains.
///
/// Construction only checks what the function itself needs (`c1, c2 > 0`,
/// `0 < delta < 2`); the stricter controller gate lives in
/// [`crate::controller::validate_gains`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clf {
    sat: SaturationSpec,
    gains: GainSet,
}

impl Clf {
    pub fn new(sat: SaturationSpec, gains: GainSet) -> Result<Self> {
        let GainSet { c1, c2, delta } = gains;
        if !(c1.is_finite() && c1 > 0.0) {
            return Err(Error::domain(format!("c1 must be finite and > 0, got {c1}")));
        }
        if !(c2.is_finite() && c2 > 0.0) {
            return Err(Error::domain(format!("c2 must be finite and > 0, got {c2}")));
        }
        if !(delta.is_finite() && delta > 0.0 && delta < 2.0) {
            return Err(Error::domain(format!("delta must lie in (0, 2), got {delta}")));
        }
        Ok(Clf { sat, gains })
    }

    pub fn gains(&self) -> &GainSet {
        &self.gains
    }

    pub fn saturation(&self) -> SaturationSpec {
        self.sat
    }

    pub fn z_of_xi(&self, xi: &ChainState) -> ZState {
        let GainSet { c1, delta, .. } = self.gains;
        ZState { z1: delta * (c1 * xi.xi1 + xi.xi2) + delta / c1 * xi.xi3, z2: c1 * xi.xi2 + xi.xi3, z3: xi.xi3 }
    }

    pub fn xi_of_z(&self, z: &ZState) -> ChainState {
        let GainSet { c1, delta, .. } = self.gains;
        let xi3 = z.z3;
        let xi2 = (z.z2 - z.z3) / c1;
        let xi1 = (z.z1 / delta - xi2 - z.z3 / c1) / c1;
        ChainState { xi1, xi2, xi3 }
    }

    pub fn storage(&self, z2: f64, z3: f64) -> f64 {
        0.5 * z3 * z3 + self.sat.integral(z2)
    }

    pub fn g(&self, z: &ZState) -> f64 {
        self.g_with_storage(z, self.storage(z.z2, z.z3))
    }

    pub(crate) fn g_with_storage(&self, z: &ZState, storage: f64) -> f64 {
        let GainSet { c1, delta, .. } = self.gains;
        delta / c1 * self.sat.eval(z.z1) + 4.0 * (1.0 + storage) * (z.z3 + self.sat.eval(z.z2))
            - 0.5 * delta * (z.z2 + z.z3)
    }

    pub fn v1(&self, z2: f64, z3: f64) -> f64 {
        let u = self.storage(z2, z3);
        4.0 * u + 2.0 * u * u - 0.5 * self.gains.delta * z2 * z3
    }

    pub fn value_z(&self, z: &ZState) -> f64 {
        self.v1(z.z2, z.z3) + self.sat.integral(z.z1)
    }

    pub fn value(&self, xi: &ChainState) -> f64 {
        self.value_z(&self.z_of_xi(xi))
    }

    /// Gradient with respect to `z`.
    pub fn grad_z(&self, z: &ZState) -> [f64; 3] {
        let delta = self.gains.delta;
        let w = 4.0 * (1.0 + self.storage(z.z2, z.z3));
        [self.sat.eval(z.z1), w * self.sat.eval(z.z2) - 0.5 * delta * z.z3, w * z.z3 - 0.5 * delta * z.z2]
    }

    /// Gradient with respect to `xi`, by the chain rule through the linear map.
    pub fn grad(&self, xi: &ChainState) -> [f64; 3] {
        let GainSet { c1, delta, .. } = self.gains;
        let [d1, d2, d3] = self.grad_z(&self.z_of_xi(xi));
        [d1 * delta * c1, d1 * delta + d2 * c1, d1 * delta / c1 + d2 + d3]
    }

    /// `grad V . xi_dot`.
    pub fn lie_derivative(&self, xi: &ChainState, xi_dot: &ChainState) -> f64 {
        let g = self.grad(xi);
        g[0] * xi_dot.xi1 + g[1] * xi_dot.xi2 + g[2] * xi_dot.xi3
    }
}

pub fn z_of_xi(xi: &ChainState, gains: GainSet) -> Result<ZState> {
    Ok(Clf::new(SaturationSpec::hard(), gains)?.z_of_xi(xi))
}

pub fn xi_of_z(z: &ZState, gains: GainSet) -> Result<ChainState> {
    Ok(Clf::new(SaturationSpec::hard(), gains)?.xi_of_z(z))
}

/// `U(z2, z3)`; needs no gains.
pub fn storage_fn(spec: SaturationSpec, z2: f64, z3: f64) -> f64 {
    0.5 * z3 * z3 + spec.integral(z2)
}

pub fn g_fn(spec: SaturationSpec, z: &ZState, gains: GainSet) -> Result<f64> {
    Ok(Clf::new(spec, gains)?.g(z))
}

pub fn v1_fn(spec: SaturationSpec, z2: f64, z3: f64, gains: GainSet) -> Result<f64> {
    Ok(Clf::new(spec, gains)?.v1(z2, z3))
}

pub fn v_fn(spec: SaturationSpec, xi: &ChainState, gains: GainSet) -> Result<f64> {
    Ok(Clf::new(spec, gains)?.value(xi))
}

pub fn grad_v(spec: SaturationSpec, xi: &ChainState, gains: GainSet) -> Result<[f64; 3]> {
    Ok(Clf::new(spec, gains)?.grad(xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const HARD: SaturationSpec = SaturationSpec::hard();
    const SMOOTH: SaturationSpec = SaturationSpec::smooth();
    const FOUR_THIRDS: f64 = 4.0 / 3.0;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_xi(r: &mut impl Rng, half: f64) -> ChainState {
        ChainState::new(r.random_range(-half..half), r.random_range(-half..half), r.random_range(-half..half))
    }

    #[test]
    fn change_of_variables_examples() {
        let g = GainSet::new(1.0, 1.0, 1.0);
        assert_eq!(z_of_xi(&ChainState::ORIGIN, g).unwrap(), ZState::default());
        assert_eq!(z_of_xi(&ChainState::new(1.0, 0.0, 0.0), g).unwrap(), ZState::new(1.0, 0.0, 0.0));
        let g = GainSet::new(2.0, 1.0, 1.0);
        assert_eq!(z_of_xi(&ChainState::new(1.0, 1.0, 2.0), g).unwrap(), ZState::new(4.0, 4.0, 2.0));
        assert_eq!(xi_of_z(&ZState::new(4.0, 4.0, 2.0), g).unwrap(), ChainState::new(1.0, 1.0, 2.0));
        assert_eq!(xi_of_z(&ZState::default(), g).unwrap(), ChainState::ORIGIN);
        assert!(z_of_xi(&ChainState::ORIGIN, GainSet::new(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn round_trip_random() {
        let clf = Clf::new(HARD, GainSet::new(2.5, 1.0, 1.1)).unwrap();
        let mut r = rng(1);
        for _ in 0..1000 {
            let xi = random_xi(&mut r, 10.0);
            let back = clf.xi_of_z(&clf.z_of_xi(&xi));
            for (a, b) in back.to_array().iter().zip(xi.to_array()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn storage_examples() {
        assert_eq!(storage_fn(HARD, 0.0, 0.0), 0.0);
        assert_eq!(storage_fn(HARD, 0.5, 1.0), 0.625);
        assert_eq!(storage_fn(HARD, 2.0, 1.0), 2.0);
    }

    #[test]
    fn g_examples() {
        let gains = GainSet::tied(FOUR_THIRDS);
        assert_eq!(g_fn(HARD, &ZState::default(), gains).unwrap(), 0.0);
        assert_relative_eq!(g_fn(HARD, &ZState::new(0.0, 1.0, 0.0), gains).unwrap(), 16.0 / 3.0, epsilon = 1e-14);

        // term-by-term evaluation at a generic point
        let gains = GainSet::new(1.7, 0.4, 0.9);
        let z = ZState::new(-2.3, 0.4, 1.1);
        let term1 = -(0.9 / 1.7);
        let u = 0.5 * 1.1 * 1.1 + 0.5 * 0.4 * 0.4;
        let term2 = 4.0 * (1.0 + u) * (1.1 + 0.4);
        let term3 = -0.45 * (0.4 + 1.1);
        assert_relative_eq!(g_fn(HARD, &z, gains).unwrap(), term1 + term2 + term3, epsilon = 1e-13);
    }

    #[test]
    fn v1_examples() {
        let gains = GainSet::tied(FOUR_THIRDS);
        assert_eq!(v1_fn(HARD, 0.0, 0.0, gains).unwrap(), 0.0);
        assert_eq!(v1_fn(HARD, 1.0, 0.0, gains).unwrap(), 2.5);
        assert!(v1_fn(HARD, 1.0, 0.0, GainSet::new(3.0, 1.0, 2.0)).is_err());
        assert!(v1_fn(HARD, 1.0, 0.0, GainSet::new(3.0, 1.0, 1.99)).is_ok());
    }

    #[test]
    fn v_examples() {
        let gains = GainSet::new(2.0, 1.0, 1.0);
        let clf = Clf::new(HARD, gains).unwrap();
        assert_eq!(v_fn(HARD, &ChainState::ORIGIN, gains).unwrap(), 0.0);
        let xi = clf.xi_of_z(&ZState::new(1.0, 0.0, 0.0));
        assert_relative_eq!(clf.value(&xi), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn v_decomposes_and_is_coordinate_invariant() {
        let mut r = rng(2);
        for spec in [HARD, SMOOTH] {
            let clf = Clf::new(spec, GainSet::new(1.5, 0.7, 1.0)).unwrap();
            for _ in 0..1000 {
                let xi = random_xi(&mut r, 10.0);
                let z = clf.z_of_xi(&xi);
                let v = clf.value(&xi);
                assert_eq!(v, clf.v1(z.z2, z.z3) + spec.integral(z.z1));
                assert!((v - clf.value_z(&z)).abs() <= 1e-12 * (1.0 + v));
                assert_eq!(clf.storage(z.z2, z.z3), spec.integral(z.z2) + 0.5 * z.z3 * z.z3);
            }
        }
    }

    #[test]
    fn v1_lower_bounds_sampled() {
        let mut r = rng(3);
        let clf = Clf::new(HARD, GainSet::tied(FOUR_THIRDS)).unwrap();
        for _ in 0..10_000 {
            let z2: f64 = r.random_range(-10.0..10.0);
            let z3: f64 = r.random_range(-10.0..10.0);
            let v1 = clf.v1(z2, z3);
            if z2.abs() <= 1.0 {
                assert!(v1 >= 1.5 * (z2 * z2 + z3 * z3) - 1e-12);
            } else {
                assert!(v1 >= 1.5 * z3 * z3 + 2.0 * z2.abs() - 1e-12);
            }
        }
    }

    #[test]
    fn v_grows_along_rays() {
        let mut r = rng(4);
        let clf = Clf::new(HARD, GainSet::tied(1.0)).unwrap();
        for _ in 0..100 {
            let d = random_xi(&mut r, 1.0);
            let vals: Vec<f64> = [1.0, 10.0, 100.0, 1000.0]
                .iter()
                .map(|&s| clf.value(&ChainState::new(s * d.xi1, s * d.xi2, s * d.xi3)))
                .collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "{vals:?}");
            assert!(vals[3] > 100.0);
        }
    }

    fn fd_grad(clf: &Clf, xi: &ChainState, h: f64) -> [f64; 3] {
        let base = xi.to_array();
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            let mut p = base;
            let mut m = base;
            p[i] += h;
            m[i] -= h;
            *o = (clf.value(&ChainState::from_array(p)) - clf.value(&ChainState::from_array(m))) / (2.0 * h);
        }
        out
    }

    #[test]
    fn gradient_at_origin() {
        let g = grad_v(HARD, &ChainState::ORIGIN, GainSet::tied(1.0)).unwrap();
        assert_eq!(g, [0.0; 3]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(5);
        for spec in [HARD, SMOOTH] {
            let clf = Clf::new(spec, GainSet::new(2.0, 1.0, 1.0)).unwrap();
            let mut checked = 0;
            while checked < 1000 {
                let xi = random_xi(&mut r, 3.0);
                let z = clf.z_of_xi(&xi);
                // step 1e-5 in xi moves z by at most ~c1 * 1e-5
                if spec.kind == crate::saturation::SaturationKind::Hard
                    && [z.z1, z.z2].iter().any(|v| (v.abs() - 1.0).abs() < 1e-4)
                {
                    continue;
                }
                let a = clf.grad(&xi);
                let n = fd_grad(&clf, &xi, 1e-5);
                for i in 0..3 {
                    assert!((a[i] - n[i]).abs() <= 1e-5 * (1.0 + a[i].abs()), "{spec:?} {xi:?} {a:?} {n:?}");
                }
                checked += 1;
            }
        }
    }

    proptest! {
        #[test]
        fn positive_off_origin(a in -10f64..10.0, b in -10f64..10.0, c in -10f64..10.0) {
            prop_assume!(a != 0.0 || b != 0.0 || c != 0.0);
            for spec in [HARD, SMOOTH] {
                let clf = Clf::new(spec, GainSet::new(1.0, 1.0, 1.99)).unwrap();
                prop_assert!(clf.value(&ChainState::new(a, b, c)) > 0.0);
            }
        }
    }
}
