//! Closed-form Hopf quantities of the two-row model and their verifiers.
//!
//! Linearising the first-mode system around equilibrium gives the five
//! eigenvalues `{-a0 (x3), tau +- i omega}` with
//!
//! ```text
//! tau(Omega)   = -(2 a0 + zeta ell/pi + 2 lambda a1 / (a0 ell)) / 4
//! omega(Omega) = sqrt(zeta ell a0 / (2 pi) - tau^2)
//! ```
//!
//! The onset `Omega0` solves `tau = 0`. Beyond it the cycle amplitude is
//! `rho = sqrt(-(Omega - Omega0) tau'(Omega0) / tau_tilde)` with the cubic
//! coefficient `tau_tilde` from the centre-manifold reduction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, PhysicalParams, RateFamily, TransitionRates};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopfError {
    #[error("eigenvalues are real: zeta ell a0 / 2pi - tau^2 = {radicand}")]
    ComplexCollapse { radicand: f64 },
    #[error("tau does not change sign on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("a1 and b1 must both be nonzero (a1 = {a1}, b1 = {b1})")]
    DegenerateRates { a1: f64, b1: f64 },
    #[error("tau_tilde = {0} is not negative")]
    NotSupercritical(f64),
    #[error("delta must be non-negative, got {0}")]
    NegativeDelta(f64),
    #[error("N-row spectrum needs N >= 2, got {0}")]
    TooFewRows(usize),
    #[error("Jordan transform radicand is not positive: {0}")]
    JordanRadicand(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Real part of the critical pair.
pub fn tau(params: &PhysicalParams, rates: &TransitionRates) -> f64 {
    let dc = params.derived();
    tau_from(rates.a0(), rates.a(1), dc.zeta, dc.lambda, params.ell)
}

fn tau_from(a0: f64, a1: f64, zeta: f64, lambda: f64, ell: f64) -> f64 {
    -0.25 * (2.0 * a0 + zeta * ell / PI + 2.0 * lambda * a1 / (a0 * ell))
}

/// `zeta ell a0 / (2 pi) - tau^2`.
fn omega_radicand(params: &PhysicalParams, rates: &TransitionRates) -> f64 {
    let dc = params.derived();
    let t = tau(params, rates);
    dc.zeta * params.ell * rates.a0() / (2.0 * PI) - t * t
}

/// Imaginary part of the critical pair.
pub fn omega_im(params: &PhysicalParams, rates: &TransitionRates) -> Result<f64, HopfError> {
    let r = omega_radicand(params, rates);
    if r > 0.0 {
        Ok(r.sqrt())
    } else {
        Err(HopfError::ComplexCollapse { radicand: r })
    }
}

/// Frequency at onset, `sqrt(zeta ell a0 / 2pi)` in rad/s.
pub fn omega0_freq(params: &PhysicalParams, a0: f64) -> f64 {
    let dc = params.derived();
    (dc.zeta * params.ell * a0 / (2.0 * PI)).sqrt()
}

/// `tau` along a rate family.
pub fn tau_along(params: &PhysicalParams, family: &RateFamily, omega: f64) -> f64 {
    let dc = params.derived();
    tau_from(
        family.a0(omega),
        family.a1(omega),
        dc.zeta,
        dc.lambda,
        params.ell,
    )
}

/// Analytic `dtau/dOmega` along a family:
/// `-(a0'(ell a0^2 - lambda a1) + lambda a0 a1') / (2 ell a0^2)`.
pub fn tau_prime(params: &PhysicalParams, family: &RateFamily, omega: f64) -> f64 {
    let lambda = params.derived().lambda;
    let ell = params.ell;
    let a0 = family.a0(omega);
    let a1 = family.a1(omega);
    let da0 = family.a0_prime(omega);
    let da1 = family.a1_prime(omega);
    -(da0 * (ell * a0 * a0 - lambda * a1) + lambda * a0 * da1) / (2.0 * ell * a0 * a0)
}

/// `a1` forced by `tau = 0` at a given `a0`.
pub fn a1_at_onset(params: &PhysicalParams, a0: f64) -> f64 {
    let dc = params.derived();
    -(a0 * params.ell / (2.0 * PI * dc.lambda)) * (2.0 * PI * a0 + dc.zeta * params.ell)
}

/// Located onset and the slope of `tau` there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Onset {
    pub omega0: f64,
    /// General analytic slope from the family derivatives.
    pub tau_prime: f64,
    /// Central-difference slope.
    pub tau_prime_fd: f64,
    /// `zeta ell / (8 pi Omega0)`, exact for `a0 = c sqrt(Omega)`, `a1 = d Omega`.
    pub tau_prime_closed: f64,
    pub a1: f64,
}

/// Search interval used when none is given: four decades either side of
/// the configured `Omega0`.
pub fn default_bracket(params: &PhysicalParams) -> (f64, f64) {
    (params.omega0 * 1e-4, params.omega0 * 1e4)
}

/// Root of `tau` along `family` on `bracket` (bisection, then secant
/// polishing kept inside the bracket).
pub fn find_omega0(
    params: &PhysicalParams,
    family: &RateFamily,
    bracket: (f64, f64),
) -> Result<Onset, HopfError> {
    let (mut lo, mut hi) = bracket;
    let f = |w: f64| tau_along(params, family, w);
    let (mut flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite())
        || flo.signum() == fhi.signum()
        || flo == 0.0 && fhi == 0.0
    {
        return Err(HopfError::NoSignChange { lo, hi });
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut root = 0.5 * (lo + hi);
    let (mut x0, mut x1) = (lo, hi);
    for _ in 0..8 {
        let (f0, f1) = (f(x0), f(x1));
        if f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x2 >= lo && x2 <= hi) {
            break;
        }
        x0 = x1;
        x1 = x2;
        if f(x2).abs() < f(root).abs() {
            root = x2;
        }
    }
    let h = 1e-5 * root;
    let dc = params.derived();
    Ok(Onset {
        omega0: root,
        tau_prime: tau_prime(params, family, root),
        tau_prime_fd: (f(root + h) - f(root - h)) / (2.0 * h),
        tau_prime_closed: dc.zeta * params.ell / (8.0 * PI * root),
        a1: family.a1(root),
    })
}

fn pair(params: &PhysicalParams, rates: &TransitionRates) -> (Complex64, Complex64) {
    let t = tau(params, rates);
    let w = Complex64::new(omega_radicand(params, rates), 0.0).sqrt();
    let i = Complex64::i();
    (t + i * w, t - i * w)
}

/// `{-a0, -a0, -a0, tau + i omega, tau - i omega}`; when the radicand is
/// negative the pair is real.
pub fn eigenvalues_two_row(params: &PhysicalParams, rates: &TransitionRates) -> [Complex64; 5] {
    let s = Complex64::new(-rates.a0(), 0.0);
    let (p, m) = pair(params, rates);
    [s, s, s, p, m]
}

/// Spectrum of the N-row first-mode linearisation.
#[derive(Debug, Clone, PartialEq)]
pub struct NRowSpectrum {
    pub n: usize,
    /// Row-difference / displacement block, repeated `N - 1` times.
    pub block: Matrix2<f64>,
    /// The `N + 1` eigenvalues equal to `-a0`.
    pub stable: Vec<Complex64>,
    /// The `N - 1` copies of `tau + i omega`, each followed by its conjugate.
    pub pairs: Vec<Complex64>,
}

impl NRowSpectrum {
    pub fn all(&self) -> Vec<Complex64> {
        self.stable.iter().chain(&self.pairs).copied().collect()
    }
}

/// `2x2` block acting on `(row sine difference, displacement)` with
/// `p_e = a1 / (a0 ell)`.
pub fn n_row_block(params: &PhysicalParams, rates: &TransitionRates) -> Matrix2<f64> {
    let (ell, eta, u, k) = (params.ell, params.eta, params.u, params.k_spring);
    let a0 = rates.a0();
    let pe = rates.a(1) / (a0 * ell);
    Matrix2::new(
        -(2.0 * PI * PI / (ell * eta)) * u * pe - a0,
        -(2.0 * PI / (ell * eta)) * k * pe,
        -PI * u / eta,
        -k / eta,
    )
}

pub fn eigenvalues_n_row(
    params: &PhysicalParams,
    rates: &TransitionRates,
    n: usize,
) -> Result<NRowSpectrum, HopfError> {
    if n < 2 {
        return Err(HopfError::TooFewRows(n));
    }
    let (p, m) = pair(params, rates);
    Ok(NRowSpectrum {
        n,
        block: n_row_block(params, rates),
        stable: vec![Complex64::new(-rates.a0(), 0.0); n + 1],
        pairs: (0..n - 1).flat_map(|_| [p, m]).collect(),
    })
}

/// `(N-1) x (N-1)` tridiagonal map with `2` on the diagonal and `-1` beside it.
pub fn displacement_map(n: usize) -> DMatrix<f64> {
    let m = n.saturating_sub(1);
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            2.0
        } else if i.abs_diff(j) == 1 {
            -1.0
        } else {
            0.0
        }
    })
}

/// Cubic radial coefficient
/// `-(3 pi zeta / 4 ell) (pi a0 + ell zeta) / (pi a0 + 2 ell zeta)`.
pub fn tau_tilde(params: &PhysicalParams, rates: &TransitionRates) -> f64 {
    let zeta = params.derived().zeta;
    let (ell, a0) = (params.ell, rates.a0());
    -(3.0 * PI * zeta / (4.0 * ell)) * (PI * a0 + ell * zeta) / (PI * a0 + 2.0 * ell * zeta)
}

/// Both forms of the predicted cycle amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTheory {
    /// `sqrt(-delta Omega0 tau' / tau_tilde)`.
    pub general: f64,
    /// `sqrt(delta ell^2/(6 pi^2) (pi a0 + 2 ell zeta)/(pi a0 + ell zeta))`.
    pub specialized: f64,
}

/// Amplitude at `Omega = Omega0 (1 + delta)` with `Omega0 = params.omega0`.
pub fn amplitude_theory(
    delta: f64,
    params: &PhysicalParams,
    family: &RateFamily,
) -> Result<AmplitudeTheory, HopfError> {
    if !(delta >= 0.0) {
        return Err(HopfError::NegativeDelta(delta));
    }
    let omega0 = params.omega0;
    let rates = family.rates(omega0, params.ell)?;
    let tt = tau_tilde(params, &rates);
    if !(tt < 0.0) {
        return Err(HopfError::NotSupercritical(tt));
    }
    let tp = tau_prime(params, family, omega0);
    let zeta = params.derived().zeta;
    let (ell, a0) = (params.ell, rates.a0());
    let ratio = (PI * a0 + 2.0 * ell * zeta) / (PI * a0 + ell * zeta);
    Ok(AmplitudeTheory {
        general: (-delta * omega0 * tp / tt).sqrt(),
        specialized: (delta * ell * ell / (6.0 * PI * PI) * ratio).sqrt(),
    })
}

/// Quadratic centre-manifold coefficients `a[i][j]`: row `i` is one of the
/// three stable coordinates `(r, s, z)`, column `j` the monomial
/// `(y^2, y x, y dOmega, x^2, x dOmega, dOmega^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterManifold {
    pub a: [[f64; 6]; 3],
}

impl CenterManifold {
    /// `h_i(y, x, dOmega)`.
    pub fn eval(&self, i: usize, y: f64, x: f64, dw: f64) -> f64 {
        let c = &self.a[i];
        c[0] * y * y + c[1] * y * x + c[2] * y * dw + c[3] * x * x + c[4] * x * dw + c[5] * dw * dw
    }

    /// `(dh_i/dy, dh_i/dx)`.
    pub fn grad(&self, i: usize, y: f64, x: f64, dw: f64) -> (f64, f64) {
        let c = &self.a[i];
        (
            2.0 * c[0] * y + c[1] * x + c[2] * dw,
            c[1] * y + 2.0 * c[3] * x + c[4] * dw,
        )
    }
}

/// Coefficients at onset. Only the `y^2`, `y x` and `x^2` columns are
/// nonzero; rows `r` and `s` share the factor `(a1^2 + b1^2)/(a1 b1)` and
/// row `z` carries `b1/a1`.
pub fn center_manifold_coeffs(
    params: &PhysicalParams,
    rates: &TransitionRates,
) -> Result<CenterManifold, HopfError> {
    let (a1, b1) = (rates.a(1), rates.b(1));
    if a1 == 0.0 || b1 == 0.0 {
        return Err(HopfError::DegenerateRates { a1, b1 });
    }
    let dc = params.derived();
    let (zeta, lambda, ell, a0) = (dc.zeta, dc.lambda, params.ell, rates.a0());
    let den = PI * a0 + 2.0 * ell * zeta;
    let yy = lambda * (2.0 * PI * a0 + ell * zeta) / (2.0 * a0 * den);
    let yx = -zeta * (PI * a0 - ell * zeta) / (a0 * den);
    let xx = zeta * zeta * (2.0 * PI * a0 + ell * zeta) / (2.0 * a0 * lambda * den);
    let k_rs = (a1 * a1 + b1 * b1) / (a1 * b1);
    let k_z = b1 / a1;
    let row = |k: f64| [k * yy, k * yx, 0.0, k * xx, 0.0, 0.0];
    Ok(CenterManifold {
        a: [row(k_rs), row(k_rs), row(k_z)],
    })
}

/// Constants of the reduced `(r, s, z; y, x)` system at onset.
struct Reduced {
    zeta: f64,
    lambda: f64,
    ell: f64,
    a0: f64,
    da0: f64,
    /// `a1/a0` and its derivative along the family.
    ratio: f64,
    dratio: f64,
    ab: f64,
    ba: f64,
}

impl Reduced {
    fn new(params: &PhysicalParams, family: &RateFamily) -> Result<Self, HopfError> {
        let w = params.omega0;
        let dc = params.derived();
        let (a0, a1, b1) = (family.a0(w), family.a1(w), family.b1(w));
        if a1 == 0.0 || b1 == 0.0 {
            return Err(HopfError::DegenerateRates { a1, b1 });
        }
        let da0 = family.a0_prime(w);
        let da1 = family.a1_prime(w);
        Ok(Self {
            zeta: dc.zeta,
            lambda: dc.lambda,
            ell: params.ell,
            a0,
            da0,
            ratio: a1 / a0,
            dratio: (da1 * a0 - a1 * da0) / (a0 * a0),
            ab: a1 / b1,
            ba: b1 / a1,
        })
    }

    /// `(ydot, xdot)` including the `dOmega` terms of the linear part.
    fn critical(&self, h: [f64; 3], y: f64, x: f64, dw: f64) -> (f64, f64) {
        let w = self.zeta * x + self.lambda * y;
        let a11 = -self.a0
            - self.lambda / self.ell * self.ratio
            - (self.da0 + self.lambda / self.ell * self.dratio) * dw;
        let a12 = -self.zeta / self.ell * (self.ratio + self.dratio * dw);
        let fy = -w * self.ba * (h[0] + h[1] - 2.0 * h[2]) / 2.0;
        let ydot = a11 * y + a12 * x + fy;
        let xdot = -self.ell / (2.0 * PI) * (self.lambda * y + self.zeta * x);
        (ydot, xdot)
    }

    /// `(rdot, sdot, zdot)`.
    fn stable(&self, h: [f64; 3], y: f64, x: f64, dw: f64) -> [f64; 3] {
        let [r, s, z] = h;
        let w = self.zeta * x + self.lambda * y;
        let decay = -self.a0 - self.da0 * dw;
        let (ab, ba) = (self.ab, self.ba);
        [
            decay * r + w * (ab * (y + z) + ba * (-r + y + z)),
            decay * s + w * (ab * (y - z) + ba * (s + y - z)),
            decay * z - w * ba * (r - s - 2.0 * y) / 2.0,
        ]
    }
}

/// Euclidean norm of the invariance residual `Dh . Ydot - hdot` of the
/// quadratic manifold `coeffs` at `probe = (y, x, dOmega)`, using the
/// first-order expansion in `dOmega` of the linear coefficients.
pub fn cm_residual(
    coeffs: &CenterManifold,
    params: &PhysicalParams,
    family: &RateFamily,
    probe: [f64; 3],
) -> Result<f64, HopfError> {
    let red = Reduced::new(params, family)?;
    let [y, x, dw] = probe;
    let h = [0, 1, 2].map(|i| coeffs.eval(i, y, x, dw));
    let (ydot, xdot) = red.critical(h, y, x, dw);
    let hdot = red.stable(h, y, x, dw);
    let mut sq = 0.0;
    for (i, hd) in hdot.iter().enumerate() {
        let (hy, hx) = coeffs.grad(i, y, x, dw);
        let r = hy * ydot + hx * xdot - hd;
        sq += r * r;
    }
    Ok(sq.sqrt())
}

/// Least-squares slope of `log residual` against `log scale`.
pub fn cm_scaling_exponent(
    coeffs: &CenterManifold,
    params: &PhysicalParams,
    family: &RateFamily,
    probe: [f64; 3],
    scales: &[f64],
) -> Result<f64, HopfError> {
    let mut pts = Vec::with_capacity(scales.len());
    for &s in scales {
        let r = cm_residual(coeffs, params, family, probe.map(|v| v * s))?;
        pts.push((s.ln(), r.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Columns of the transform taking `(u, w)` to `(y, x)` in which the
/// critical linear part is the rotation `[[0, -omega0], [omega0, 0]]`.
fn jordan_transform(red: &Reduced) -> Result<Matrix2<f64>, HopfError> {
    let (zeta, lambda, ell, a0) = (red.zeta, red.lambda, red.ell, red.a0);
    let a1 = red.ratio * a0;
    let p11 = PI / (lambda * ell) * (lambda / ell * red.ratio + a0) - zeta / (2.0 * lambda);
    let rad = -4.0 * PI * lambda * ell * a0 * a1 * (2.0 * PI * a0 + zeta * ell)
        - (ell * a0 * (zeta * ell - 2.0 * PI * a0)).powi(2)
        - (2.0 * PI * lambda * a1).powi(2);
    if !(rad > 0.0) {
        return Err(HopfError::JordanRadicand(rad));
    }
    let p12 = rad.sqrt() / (2.0 * lambda * ell * ell * a0);
    Ok(Matrix2::new(p11, p12, 1.0, 0.0))
}

/// `tau_tilde` recomputed from the reduced cubic vector field in Jordan
/// coordinates, `(g_uuw + g_www) / 16`.
fn normal_form_tau_tilde(params: &PhysicalParams, family: &RateFamily) -> Result<f64, HopfError> {
    let red = Reduced::new(params, family)?;
    let rates = family.rates(params.omega0, params.ell)?;
    let cm = center_manifold_coeffs(params, &rates)?;
    let p = jordan_transform(&red)?;
    let g = |u: f64, w: f64| {
        let y = p[(0, 0)] * u + p[(0, 1)] * w;
        let x = u;
        let h = [0, 1, 2].map(|i| cm.eval(i, y, x, 0.0));
        let wv = red.zeta * x + red.lambda * y;
        let fy = -wv * red.ba * (h[0] + h[1] - 2.0 * h[2]) / 2.0;
        fy / p[(0, 1)]
    };
    let c03 = g(0.0, 1.0);
    let c21 = 0.5 * (g(1.0, 1.0) - g(1.0, -1.0)) - c03;
    Ok((2.0 * c21 + 6.0 * c03) / 16.0)
}

/// Which supercriticality hypotheses hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    pub a1_negative: bool,
    pub tau_prime_positive: bool,
}

impl Validity {
    pub fn supercritical(&self) -> bool {
        self.a1_negative && self.tau_prime_positive
    }
}

mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|c| [c.re, c.im])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let v: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(v.into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect())
    }
}

/// Summary of the bifurcation analysis, serialised with complex numbers as
/// `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    /// Located onset, absent when `tau` has no root in the bracket.
    pub omega0_param: Option<f64>,
    pub tau_prime: Option<f64>,
    pub tau_prime_fd: Option<f64>,
    /// rad/s.
    pub omega0_freq: Option<f64>,
    pub tau_tilde: Option<f64>,
    /// `tau_tilde` recomputed from the reduced cubic field, as a check.
    pub tau_tilde_check: Option<f64>,
    /// `(delta, rho)` pairs.
    pub amplitude_curve: Vec<(f64, f64)>,
    /// Control value at which the eigenvalues were evaluated.
    pub omega: f64,
    #[serde(with = "complex_pairs")]
    pub eigenvalues: Vec<Complex64>,
    /// Present when an N-row spectrum was requested.
    pub n_rows: Option<usize>,
    #[serde(with = "complex_pairs", default)]
    pub n_row_eigenvalues: Vec<Complex64>,
    pub validity: Validity,
    /// Why parts of the report are missing.
    pub notes: Vec<String>,
}

/// Analysis of `family` around the configured onset.
pub fn bifurcation_report(
    params: &PhysicalParams,
    family: &RateFamily,
    deltas: &[f64],
    n_rows: Option<usize>,
) -> Result<BifurcationReport, HopfError> {
    params.validate()?;
    let mut notes = Vec::new();
    let omega = params.omega;
    let rates = family.rates(omega, params.ell)?;
    let eigenvalues = eigenvalues_two_row(params, &rates).to_vec();
    let n_row_eigenvalues = match n_rows {
        Some(n) => eigenvalues_n_row(params, &rates, n)?.all(),
        None => Vec::new(),
    };
    let mut report = BifurcationReport {
        omega0_param: None,
        tau_prime: None,
        tau_prime_fd: None,
        omega0_freq: None,
        tau_tilde: None,
        tau_tilde_check: None,
        amplitude_curve: Vec::new(),
        omega,
        eigenvalues,
        n_rows,
        n_row_eigenvalues,
        validity: Validity {
            a1_negative: false,
            tau_prime_positive: false,
        },
        notes: Vec::new(),
    };
    let onset = match find_omega0(params, family, default_bracket(params)) {
        Ok(o) => o,
        Err(e) => {
            notes.push(e.to_string());
            report.notes = notes;
            return Ok(report);
        }
    };
    let at = PhysicalParams {
        omega0: onset.omega0,
        omega: onset.omega0,
        ..*params
    };
    let r0 = family.rates(onset.omega0, params.ell)?;
    report.omega0_param = Some(onset.omega0);
    report.tau_prime = Some(onset.tau_prime);
    report.tau_prime_fd = Some(onset.tau_prime_fd);
    report.omega0_freq = Some(omega0_freq(params, r0.a0()));
    report.validity = Validity {
        a1_negative: onset.a1 < 0.0,
        tau_prime_positive: onset.tau_prime > 0.0,
    };
    let tt = tau_tilde(params, &r0);
    report.tau_tilde = Some(tt);
    match normal_form_tau_tilde(&at, family) {
        Ok(v) => report.tau_tilde_check = Some(v),
        Err(e) => notes.push(format!("normal-form check skipped: {e}")),
    }
    if report.validity.supercritical() {
        for &d in deltas {
            match amplitude_theory(d, &at, family) {
                Ok(a) => report.amplitude_curve.push((d, a.general)),
                Err(e) => notes.push(format!("delta {d}: {e}")),
            }
        }
    } else {
        notes.push("hypotheses for a supercritical bifurcation fail".into());
    }
    report.notes = notes;
    Ok(report)
}
