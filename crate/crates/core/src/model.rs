//! Physical parameters, transition rates and the closed-form constants
//! shared by every other module.
//!
//! Units are (nm, s, kg) throughout. Energies are carried in kg·nm²/s², so
//! 1 nN·nm is exactly 1 energy unit, and the ATP level `Omega` is an energy
//! (a multiple of kBT). The rate prefactor `c` absorbs the units of
//! `Omega^{1/2}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of equispaced points used to validate `0 <= omega_B <= a0` when no
/// simulation grid is known yet.
pub const DEFAULT_RATE_CHECK_POINTS: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} is out of range ({reason})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("uniform rate a0 must be positive, got {0}")]
    NonPositiveA0(f64),
    #[error("Fourier mode n={0} is even or zero; only odd modes are allowed")]
    EvenMode(usize),
    #[error("omega_B({xi}) = {value} leaves [0, a0 = {a0}]")]
    RateOutOfBounds { xi: f64, value: f64, a0: f64 },
}

/// Physical constants plus the control parameter `Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Period of the filament structure (nm).
    pub ell: f64,
    /// Viscous coefficient (kg/s).
    pub eta: f64,
    /// Elastic coefficient (kg/s²).
    pub k_spring: f64,
    /// Amplitude of the potential difference (energy).
    #[serde(rename = "U")]
    pub u: f64,
    /// Thermal energy (energy).
    #[serde(rename = "kBT")]
    pub kbt: f64,
    /// Prefactor of `a0(Omega) = c Omega^{1/2}`.
    pub c: f64,
    /// ATP level at the Hopf point (energy).
    #[serde(rename = "Omega0")]
    pub omega0: f64,
    /// Current ATP level (energy).
    #[serde(rename = "Omega")]
    pub omega: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl PhysicalParams {
    /// Reference parameter set; `Omega` starts at the bifurcation value.
    pub fn reference() -> Self {
        let kbt = 4.2668e-3;
        Self {
            ell: 10.0,
            eta: 1.0e-7,
            k_spring: 9.5e-5,
            u: 10.0 * kbt,
            kbt,
            c: 1.0e3,
            omega0: 15.0 * kbt,
            omega: 15.0 * kbt,
        }
    }

    /// Same constants with `Omega = Omega0 (1 + delta)`.
    pub fn at_delta(&self, delta: f64) -> Self {
        Self {
            omega: self.omega0 * (1.0 + delta),
            ..*self
        }
    }

    /// Relative distance of `Omega` to `Omega0`.
    pub fn delta(&self) -> f64 {
        self.omega / self.omega0 - 1.0
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("ell", self.ell),
            ("eta", self.eta),
            ("k_spring", self.k_spring),
            ("U", self.u),
            ("c", self.c),
            ("Omega0", self.omega0),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(ModelError::InvalidParameter {
                name: "Omega",
                value: self.omega,
                reason: "must be non-negative and finite",
            });
        }
        Ok(())
    }

    pub fn derived(&self) -> DerivedConstants {
        DerivedConstants::from_params(self)
    }

    /// `d/dxi DeltaW` for `DeltaW(xi) = U cos(2 pi xi / ell)`.
    pub fn potential_gradient(&self, xi: f64) -> f64 {
        potential_gradient(xi, self)
    }
}

/// `zeta`, `lambda` and the slope `d` of `a1(Omega) = d Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// 2π k / (η ℓ), units 1/(s·nm).
    pub zeta: f64,
    /// 2π² U / (η ℓ), units nm/s.
    pub lambda: f64,
    /// Slope placing the Hopf point at `Omega0`, units 1/(s·energy).
    pub d: f64,
}

impl DerivedConstants {
    pub fn from_params(p: &PhysicalParams) -> Self {
        let zeta = 2.0 * PI * p.k_spring / (p.eta * p.ell);
        let lambda = 2.0 * PI * PI * p.u / (p.eta * p.ell);
        Self {
            zeta,
            lambda,
            d: d_from(p.c, p.ell, zeta, lambda, p.omega0),
        }
    }
}

fn d_from(c: f64, ell: f64, zeta: f64, lambda: f64, omega0: f64) -> f64 {
    -(c * ell / (2.0 * PI * lambda)) * (2.0 * PI * c + zeta * ell / omega0.sqrt())
}

/// Slope `d` of `a1 = b1 = d Omega` such that `tau(Omega0) = 0`.
pub fn d_of_omega0(params: &PhysicalParams) -> f64 {
    params.derived().d
}

/// `d/dxi [U cos(2 pi xi / ell)] = -U (2 pi / ell) sin(2 pi xi / ell)`.
pub fn potential_gradient(xi: f64, params: &PhysicalParams) -> f64 {
    let k = 2.0 * PI / params.ell;
    -params.u * k * (k * xi).sin()
}

/// Fourier representation of `omega_B`; `omega_A = a0 - omega_B`.
///
/// `omega_B(xi) = a0/2 + sum_{n odd} a_n cos(2 n pi xi / ell) + b_n sin(2 n pi xi / ell)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRates {
    a0: f64,
    ell: f64,
    odd_cos: BTreeMap<usize, f64>,
    odd_sin: BTreeMap<usize, f64>,
}

impl TransitionRates {
    /// Builds and validates a coefficient set on [`DEFAULT_RATE_CHECK_POINTS`]
    /// equispaced points.
    pub fn new(
        a0: f64,
        ell: f64,
        odd_cos: BTreeMap<usize, f64>,
        odd_sin: BTreeMap<usize, f64>,
    ) -> Result<Self, ModelError> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(ModelError::NonPositiveA0(a0));
        }
        if !(ell > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "ell",
                value: ell,
                reason: "must be positive",
            });
        }
        for &n in odd_cos.keys().chain(odd_sin.keys()) {
            if n % 2 == 0 {
                return Err(ModelError::EvenMode(n));
            }
        }
        let rates = Self {
            a0,
            ell,
            odd_cos,
            odd_sin,
        };
        rates.validate_on_grid(DEFAULT_RATE_CHECK_POINTS)?;
        Ok(rates)
    }

    /// Rates with only the constant term: `omega_A = omega_B = a0/2`.
    pub fn constant(a0: f64, ell: f64) -> Result<Self, ModelError> {
        Self::new(a0, ell, BTreeMap::new(), BTreeMap::new())
    }

    /// `a0` together with first-mode coefficients `a1`, `b1`.
    pub fn first_mode(a0: f64, a1: f64, b1: f64, ell: f64) -> Result<Self, ModelError> {
        Self::new(
            a0,
            ell,
            BTreeMap::from([(1, a1)]),
            BTreeMap::from([(1, b1)]),
        )
    }

    /// Checks `0 <= omega_B <= a0` at `xi = j ell / points`, `j = 0..points`.
    pub fn validate_on_grid(&self, points: usize) -> Result<(), ModelError> {
        let tol = 1e-12 * self.a0;
        for j in 0..points.max(1) {
            let xi = j as f64 * self.ell / points.max(1) as f64;
            let value = self.omega_b(xi);
            if value < -tol || value > self.a0 + tol {
                return Err(ModelError::RateOutOfBounds {
                    xi,
                    value,
                    a0: self.a0,
                });
            }
        }
        Ok(())
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    /// Cosine coefficient `a_n` (zero when absent).
    pub fn a(&self, n: usize) -> f64 {
        self.odd_cos.get(&n).copied().unwrap_or(0.0)
    }

    /// Sine coefficient `b_n` (zero when absent).
    pub fn b(&self, n: usize) -> f64 {
        self.odd_sin.get(&n).copied().unwrap_or(0.0)
    }

    /// Highest mode with a stored coefficient.
    pub fn max_mode(&self) -> usize {
        let c = self.odd_cos.keys().next_back().copied().unwrap_or(0);
        let s = self.odd_sin.keys().next_back().copied().unwrap_or(0);
        c.max(s)
    }

    pub fn omega_b(&self, xi: f64) -> f64 {
        let k = 2.0 * PI / self.ell;
        let mut value = 0.5 * self.a0;
        for (&n, &an) in &self.odd_cos {
            value += an * (n as f64 * k * xi).cos();
        }
        for (&n, &bn) in &self.odd_sin {
            value += bn * (n as f64 * k * xi).sin();
        }
        value
    }

    pub fn omega_a(&self, xi: f64) -> f64 {
        self.a0 - self.omega_b(xi)
    }

    /// Equilibrium density `omega_B / (a0 ell)`.
    pub fn equilibrium_density(&self, xi: f64) -> f64 {
        self.omega_b(xi) / (self.a0 * self.ell)
    }
}

/// `omega_B(xi)`; periodic in `xi` with period `ell`.
pub fn omega_b(xi: f64, rates: &TransitionRates) -> f64 {
    rates.omega_b(xi)
}

/// `omega_A(xi) = a0 - omega_B(xi)`.
pub fn omega_a(xi: f64, rates: &TransitionRates) -> f64 {
    rates.omega_a(xi)
}

/// How the rate coefficients depend on the ATP level:
/// `a0 = c Omega^{1/2}`, `a1 = a1_slope Omega`, `b1 = b1_slope Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFamily {
    pub c: f64,
    pub a1_slope: f64,
    pub b1_slope: f64,
}

impl RateFamily {
    /// `a1 = b1 = d(Omega0) Omega`.
    pub fn from_params(params: &PhysicalParams) -> Self {
        let d = d_of_omega0(params);
        Self {
            c: params.c,
            a1_slope: d,
            b1_slope: d,
        }
    }

    pub fn a0(&self, omega: f64) -> f64 {
        self.c * omega.sqrt()
    }

    pub fn a1(&self, omega: f64) -> f64 {
        self.a1_slope * omega
    }

    pub fn b1(&self, omega: f64) -> f64 {
        self.b1_slope * omega
    }

    pub fn a0_prime(&self, omega: f64) -> f64 {
        0.5 * self.c / omega.sqrt()
    }

    pub fn a1_prime(&self, _omega: f64) -> f64 {
        self.a1_slope
    }

    pub fn rates(&self, omega: f64, ell: f64) -> Result<TransitionRates, ModelError> {
        if !(omega >= 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "Omega",
                value: omega,
                reason: "must be non-negative",
            });
        }
        TransitionRates::first_mode(self.a0(omega), self.a1(omega), self.b1(omega), ell)
    }
}

/// Rates at `params.omega` with `a0 = c Omega^{1/2}` and `a1 = b1 = d Omega`.
pub fn rates_from_atp(params: &PhysicalParams) -> Result<TransitionRates, ModelError> {
    params.validate()?;
    RateFamily::from_params(params).rates(params.omega, params.ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_rates_split_evenly() {
        let r = TransitionRates::constant(2.0, 10.0).unwrap();
        for xi in [0.0, 1.3, 7.7, 10.0] {
            assert_eq!(r.omega_b(xi), 1.0);
            assert_eq!(r.omega_a(xi), 1.0);
        }
    }

    #[test]
    fn first_cosine_mode_extremes() {
        let r =
            TransitionRates::new(2.0, 10.0, BTreeMap::from([(1, 0.5)]), BTreeMap::new()).unwrap();
        assert_relative_eq!(r.omega_b(0.0), 1.5, epsilon = 1e-15);
        assert_relative_eq!(r.omega_b(5.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn table_values_at_origin() {
        // omega_B(0) = a0/2 + a1 with a0 = 1000 sqrt(Omega0), a1 = d Omega0.
        let p = PhysicalParams::reference();
        let r = rates_from_atp(&p).unwrap();
        let a0 = 1000.0 * (0.064002f64).sqrt();
        assert_relative_eq!(r.a0(), a0, max_relative = 1e-12);
        assert_relative_eq!(r.a0(), 253.00, max_relative = 1e-4);
        assert_relative_eq!(r.a(1), -3.6135, max_relative = 1e-4);
        assert_relative_eq!(r.omega_b(0.0), 122.886, max_relative = 1e-4);
        assert_relative_eq!(r.omega_a(0.0), 130.113, max_relative = 1e-4);
    }

    #[test]
    fn potential_gradient_values() {
        let p = PhysicalParams::reference();
        assert_eq!(potential_gradient(0.0, &p), 0.0);
        assert_relative_eq!(
            potential_gradient(2.5, &p),
            -2.0 * PI * p.u / p.ell,
            max_relative = 1e-14
        );
        assert_relative_eq!(potential_gradient(2.5, &p), -0.026810, max_relative = 1e-4);
    }

    #[test]
    fn d_reproduces_reference_value() {
        let d = d_of_omega0(&PhysicalParams::reference());
        assert_relative_eq!(d, -56.4588, max_relative = 1e-5);
    }

    #[test]
    fn d_splits_into_two_inverse_lambda_terms() {
        // d = -(c ell / 2 pi lambda)(2 pi c + zeta ell / sqrt(Omega0)): scaling
        // lambda by 2 at fixed zeta halves d exactly.
        let p = PhysicalParams::reference();
        let dc = p.derived();
        let d1 = d_from(p.c, p.ell, dc.zeta, dc.lambda, p.omega0);
        let d2 = d_from(p.c, p.ell, dc.zeta, 2.0 * dc.lambda, p.omega0);
        assert_relative_eq!(d2, 0.5 * d1, max_relative = 1e-14);
        let d0 = d_from(p.c, p.ell, 0.0, dc.lambda, p.omega0);
        assert_relative_eq!(d0, -p.c * p.c * p.ell / dc.lambda, max_relative = 1e-14);
    }

    #[test]
    fn derived_constants() {
        let dc = PhysicalParams::reference().derived();
        assert_relative_eq!(dc.zeta, 596.90, max_relative = 1e-5);
        assert_relative_eq!(dc.zeta * 10.0, 5969.0, max_relative = 1e-4);
        assert_relative_eq!(
            dc.lambda,
            2.0 * PI * PI * 0.042668 / 1e-6,
            max_relative = 1e-14
        );
    }

    #[test]
    fn zero_omega_is_rejected() {
        let p = PhysicalParams::reference().at_delta(-1.0);
        assert_eq!(p.omega, 0.0);
        assert!(matches!(
            rates_from_atp(&p),
            Err(ModelError::NonPositiveA0(_))
        ));
        let mut neg = PhysicalParams::reference();
        neg.omega = -1.0;
        assert!(rates_from_atp(&neg).is_err());
    }

    #[test]
    fn even_modes_and_unphysical_rates_are_rejected() {
        assert_eq!(
            TransitionRates::new(2.0, 1.0, BTreeMap::from([(2, 0.1)]), BTreeMap::new()),
            Err(ModelError::EvenMode(2))
        );
        assert!(matches!(
            TransitionRates::first_mode(2.0, 1.5, 0.0, 1.0),
            Err(ModelError::RateOutOfBounds { .. })
        ));
    }

    #[test]
    fn potential_gradient_has_zero_mean() {
        // Composite Simpson on [0, ell].
        let p = PhysicalParams::reference();
        let n = 2000;
        let h = p.ell / n as f64;
        let mut s = potential_gradient(0.0, &p) + potential_gradient(p.ell, &p);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * potential_gradient(i as f64 * h, &p);
        }
        assert!((s * h / 3.0).abs() < 1e-14);
    }

    #[test]
    fn params_serialize_with_conventional_names() {
        let json = serde_json::to_value(PhysicalParams::reference()).unwrap();
        for key in ["ell", "eta", "k_spring", "U", "kBT", "c", "Omega0", "Omega"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rates_sum_to_a0(xi in -50.0f64..50.0) {
                let r = rates_from_atp(&PhysicalParams::reference().at_delta(0.2)).unwrap();
                prop_assert!((r.omega_a(xi) + r.omega_b(xi) - r.a0()).abs() < 1e-12 * r.a0());
            }

            #[test]
            fn omega_b_is_periodic(xi in 0.0f64..10.0) {
                let r = rates_from_atp(&PhysicalParams::reference()).unwrap();
                prop_assert!((r.omega_b(xi) - r.omega_b(xi + r.ell())).abs() < 1e-12);
            }
        }
    }
}
