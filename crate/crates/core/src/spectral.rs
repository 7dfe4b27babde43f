//! Fourier-reduced ODE hierarchy of the two-row model with a cosine
//! potential difference.
//!
//! Densities are expanded as `P = p0 + sum_n (p_n^c cos(2 pi n xi/ell) + p_n^s sin(..))`
//! (so `p0` is the spatial mean) and likewise for `Q`. The zeroth modes
//! relax independently, mode 1 couples to the displacement through
//! `g = zeta x + (lambda/2)(p_1^s - q_1^s)` with `xdot = -(ell/2pi) g`, and
//! modes `n >= 2` are linear systems driven by `xdot`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, PhysicalParams, TransitionRates};
use crate::pde::fourier_projection;
use crate::series::TimeSeries;

/// Default number of retained modes.
pub const DEFAULT_N_MAX: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("end time {t_end} precedes start time {t0}")]
    InvalidSpan { t0: f64, t_end: f64 },
    #[error("state needs at least one Fourier mode")]
    NoModes,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Truncated Fourier coefficients of both rows plus the displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierState {
    pub p0: f64,
    pub q0: f64,
    /// `(p_n^c, p_n^s, q_n^c, q_n^s)` for `n = 1..=n_max`.
    pub modes: Vec<[f64; 4]>,
    pub x: f64,
    pub t: f64,
}

impl FourierState {
    /// Stationary state for `rates`: `p0 = q0 = 1/(2 ell)`,
    /// `p_n^c = q_n^c = a_n/(a0 ell)`, `p_n^s = q_n^s = b_n/(a0 ell)`, `x = 0`.
    pub fn equilibrium(rates: &TransitionRates, n_max: usize) -> Self {
        let scale = 1.0 / (rates.a0() * rates.ell());
        let modes = (1..=n_max)
            .map(|n| {
                let c = rates.a(n) * scale;
                let s = rates.b(n) * scale;
                [c, s, c, s]
            })
            .collect();
        Self {
            p0: 0.5 / rates.ell(),
            q0: 0.5 / rates.ell(),
            modes,
            x: 0.0,
            t: 0.0,
        }
    }

    pub fn n_max(&self) -> usize {
        self.modes.len()
    }

    /// Projects two sampled density rows onto the retained modes.
    pub fn from_grid(p: &[f64], q: &[f64], x: f64, t: f64, n_max: usize) -> Self {
        let modes = (1..=n_max)
            .map(|n| {
                let (pc, ps) = fourier_projection(p, n);
                let (qc, qs) = fourier_projection(q, n);
                [pc, ps, qc, qs]
            })
            .collect();
        Self {
            p0: fourier_projection(p, 0).0,
            q0: fourier_projection(q, 0).0,
            modes,
            x,
            t,
        }
    }

    /// `P(xi)` reconstructed from the retained modes.
    pub fn density_p(&self, xi: f64, ell: f64) -> f64 {
        self.modes.iter().enumerate().fold(self.p0, |acc, (i, m)| {
            let a = 2.0 * PI * (i + 1) as f64 * xi / ell;
            acc + m[0] * a.cos() + m[1] * a.sin()
        })
    }

    /// `Q(xi)` reconstructed from the retained modes.
    pub fn density_q(&self, xi: f64, ell: f64) -> f64 {
        self.modes.iter().enumerate().fold(self.q0, |acc, (i, m)| {
            let a = 2.0 * PI * (i + 1) as f64 * xi / ell;
            acc + m[2] * a.cos() + m[3] * a.sin()
        })
    }

    /// The first-mode subsystem `(p1c, p1s, q1c, q1s, x)`.
    pub fn first(&self) -> [f64; 5] {
        let m = self.modes[0];
        [m[0], m[1], m[2], m[3], self.x]
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(3 + 4 * self.modes.len());
        y.extend([self.p0, self.q0, self.x]);
        for m in &self.modes {
            y.extend_from_slice(m);
        }
        y
    }

    fn from_vec(y: &[f64], t: f64) -> Self {
        Self {
            p0: y[0],
            q0: y[1],
            x: y[2],
            modes: y[3..]
                .chunks_exact(4)
                .map(|c| [c[0], c[1], c[2], c[3]])
                .collect(),
            t,
        }
    }
}

/// `(dp0/dt, dq0/dt)`.
pub fn rhs_zero(p0: f64, q0: f64, rates: &TransitionRates) -> (f64, f64) {
    let a0 = rates.a0();
    let target = a0 / (2.0 * rates.ell());
    (-a0 * p0 + target, -a0 * q0 + target)
}

/// Right-hand side of the five-dimensional first-mode system.
pub fn rhs_first(y: &[f64; 5], params: &PhysicalParams, rates: &TransitionRates) -> [f64; 5] {
    let dc = params.derived();
    first_mode_rhs(y, dc.zeta, dc.lambda, params.ell, rates)
}

fn first_mode_rhs(
    y: &[f64; 5],
    zeta: f64,
    lambda: f64,
    ell: f64,
    rates: &TransitionRates,
) -> [f64; 5] {
    let [pc, ps, qc, qs, x] = *y;
    let a0 = rates.a0();
    let a1 = rates.a(1) / ell;
    let b1 = rates.b(1) / ell;
    let g = zeta * x + 0.5 * lambda * (ps - qs);
    [
        -a0 * pc + g * ps + a1,
        -a0 * ps - g * pc + b1,
        -a0 * qc - g * qs + a1,
        -a0 * qs + g * qc + b1,
        -ell / (2.0 * PI) * g,
    ]
}

/// Driven mode `n >= 2`: `quad = (p^c, p^s, q^c, q^s)`, `xdot` from the
/// first-mode subsystem.
pub fn rhs_higher(n: usize, quad: &[f64; 4], xdot: f64, rates: &TransitionRates) -> [f64; 4] {
    let ell = rates.ell();
    let a0 = rates.a0();
    let kx = 2.0 * PI * n as f64 / ell * xdot;
    let an = rates.a(n) / ell;
    let bn = rates.b(n) / ell;
    let [pc, ps, qc, qs] = *quad;
    [
        -a0 * pc - kx * ps + an,
        -a0 * ps + kx * pc + bn,
        -a0 * qc + kx * qs + an,
        -a0 * qs - kx * qc + bn,
    ]
}

/// Full truncated system with precomputed constants.
#[derive(Debug, Clone)]
pub struct SpectralSystem {
    rates: TransitionRates,
    zeta: f64,
    lambda: f64,
    ell: f64,
}

impl SpectralSystem {
    pub fn new(params: &PhysicalParams, rates: &TransitionRates) -> Result<Self, SpectralError> {
        params.validate()?;
        let dc = params.derived();
        Ok(Self {
            rates: rates.clone(),
            zeta: dc.zeta,
            lambda: dc.lambda,
            ell: params.ell,
        })
    }

    pub fn rates(&self) -> &TransitionRates {
        &self.rates
    }

    /// Derivative of the flat layout `[p0, q0, x, p1c, p1s, q1c, q1s, p2c, ...]`.
    fn deriv(&self, y: &[f64], out: &mut [f64]) {
        let (dp0, dq0) = rhs_zero(y[0], y[1], &self.rates);
        let first = [y[3], y[4], y[5], y[6], y[2]];
        let d1 = first_mode_rhs(&first, self.zeta, self.lambda, self.ell, &self.rates);
        out[0] = dp0;
        out[1] = dq0;
        out[2] = d1[4];
        out[3..7].copy_from_slice(&d1[..4]);
        let xdot = d1[4];
        for (i, (chunk, o)) in y[7..]
            .chunks_exact(4)
            .zip(out[7..].chunks_exact_mut(4))
            .enumerate()
        {
            let quad = [chunk[0], chunk[1], chunk[2], chunk[3]];
            o.copy_from_slice(&rhs_higher(i + 2, &quad, xdot, &self.rates));
        }
    }

    /// Displacement velocity at `state`.
    pub fn xdot(&self, state: &FourierState) -> f64 {
        let m = state.modes[0];
        -self.ell / (2.0 * PI) * (self.zeta * state.x + 0.5 * self.lambda * (m[1] - m[3]))
    }
}

/// Classic RK4 step on a flat state.
pub fn rk4_step<F>(f: &F, y: &[f64], dt: f64, work: &mut Rk4Work) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y.len();
    work.resize(n);
    let Rk4Work {
        k1,
        k2,
        k3,
        k4,
        tmp,
    } = work;
    f(y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k1[i];
    }
    f(tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * dt * k2[i];
    }
    f(tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    f(tmp, k4);
    (0..n)
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Scratch buffers for [`rk4_step`].
#[derive(Debug, Default, Clone)]
pub struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn resize(&mut self, n: usize) {
        for v in [
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.tmp,
        ] {
            v.resize(n, 0.0);
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    /// Record every `stride` steps; the initial state is always recorded.
    pub stride: usize,
    /// Record every Fourier coefficient, not just `t, x, v`.
    pub record_modes: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            record_modes: false,
        }
    }
}

/// Output of [`integrate`].
#[derive(Debug, Clone)]
pub struct SpectralRun {
    pub series: TimeSeries,
    pub final_state: FourierState,
    /// Largest Richardson estimate `|y_dt - y_{dt/2 x 2}| / 15` of the local
    /// step error, sampled at recorded steps.
    pub error_estimate: f64,
}

/// A run that diverged, with everything recorded before the failure.
#[derive(Debug, Clone, Error)]
#[error("integration aborted after {} samples: {source}", partial.len())]
pub struct IntegrateError {
    pub partial: TimeSeries,
    #[source]
    pub source: SpectralError,
}

fn columns(n_max: usize, record_modes: bool) -> Vec<String> {
    let mut c: Vec<String> = ["t", "x", "v"].iter().map(|s| s.to_string()).collect();
    if record_modes {
        c.push("p0".into());
        c.push("q0".into());
        for n in 1..=n_max {
            for name in ["pc", "ps", "qc", "qs"] {
                c.push(format!("{name}{n}"));
            }
        }
    }
    c
}

/// Fixed-step RK4 from `state.t` to `t_end` (the final step is shortened to
/// land on `t_end`).
pub fn integrate(
    state: &FourierState,
    params: &PhysicalParams,
    rates: &TransitionRates,
    t_end: f64,
    dt: f64,
    opts: &IntegrateOptions,
) -> Result<SpectralRun, Box<IntegrateError>> {
    let fail = |partial: TimeSeries, source| Box::new(IntegrateError { partial, source });
    let mut series = TimeSeries::new(columns(state.n_max(), opts.record_modes));
    if !(dt > 0.0 && dt.is_finite()) {
        series.truncated = true;
        return Err(fail(series, SpectralError::InvalidStep(dt)));
    }
    if !(t_end >= state.t) {
        series.truncated = true;
        return Err(fail(
            series,
            SpectralError::InvalidSpan { t0: state.t, t_end },
        ));
    }
    if state.modes.is_empty() {
        series.truncated = true;
        return Err(fail(series, SpectralError::NoModes));
    }
    let sys = match SpectralSystem::new(params, rates) {
        Ok(s) => s,
        Err(e) => {
            series.truncated = true;
            return Err(fail(series, e));
        }
    };
    let f = |y: &[f64], out: &mut [f64]| sys.deriv(y, out);
    let stride = opts.stride.max(1);
    let steps = ((t_end - state.t) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut y = state.to_vec();
    let mut t = state.t;
    let mut work = Rk4Work::default();
    let mut deriv = vec![0.0; y.len()];
    let mut err_est: f64 = 0.0;
    let record = |series: &mut TimeSeries, y: &[f64], t: f64, deriv: &mut [f64]| {
        sys.deriv(y, deriv);
        let mut row = vec![t, y[2], deriv[2]];
        if opts.record_modes {
            row.push(y[0]);
            row.push(y[1]);
            row.extend_from_slice(&y[3..]);
        }
        series.push(row);
    };
    record(&mut series, &y, t, &mut deriv);
    for n in 1..=steps {
        let h = if n == steps { t_end - t } else { dt };
        let next = rk4_step(&f, &y, h, &mut work);
        if n % stride == 0 || n == steps {
            let half = rk4_step(&f, &y, 0.5 * h, &mut work);
            let twice = rk4_step(&f, &half, 0.5 * h, &mut work);
            let e = next
                .iter()
                .zip(&twice)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / 15.0));
            err_est = err_est.max(e);
        }
        y = next;
        t = if n == steps {
            t_end
        } else {
            state.t + n as f64 * dt
        };
        if y.iter().any(|v| !v.is_finite()) {
            series.truncated = true;
            return Err(fail(series, SpectralError::NonFinite(t)));
        }
        if n % stride == 0 || n == steps {
            record(&mut series, &y, t, &mut deriv);
        }
    }
    Ok(SpectralRun {
        series,
        final_state: FourierState::from_vec(&y, t),
        error_estimate: err_est,
    })
}

/// First-mode Fourier system of the N-row model in `3N - 1` variables:
/// `(c_i, s_i)` for each row followed by `Delta_1..Delta_{N-1}`, with
/// `Delta_N = -sum Delta_i`.
#[derive(Debug, Clone)]
pub struct NRowFirstMode {
    pub n: usize,
    a0: f64,
    a1: f64,
    b1: f64,
    ell: f64,
    eta: f64,
    k_spring: f64,
    u: f64,
}

impl NRowFirstMode {
    pub fn new(
        n: usize,
        params: &PhysicalParams,
        rates: &TransitionRates,
    ) -> Result<Self, SpectralError> {
        params.validate()?;
        if n < 2 {
            return Err(SpectralError::Model(ModelError::InvalidParameter {
                name: "N",
                value: n as f64,
                reason: "the N-row model needs at least two rows",
            }));
        }
        Ok(Self {
            n,
            a0: rates.a0(),
            a1: rates.a(1),
            b1: rates.b(1),
            ell: params.ell,
            eta: params.eta,
            k_spring: params.k_spring,
            u: params.u,
        })
    }

    pub fn dim(&self) -> usize {
        3 * self.n - 1
    }

    pub fn equilibrium(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for i in 0..self.n {
            y[2 * i] = self.a1 / (self.a0 * self.ell);
            y[2 * i + 1] = self.b1 / (self.a0 * self.ell);
        }
        y
    }

    /// Sliding velocities from the row forces `F_i = -pi U s_i`.
    pub fn velocities(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut shifts: Vec<f64> = y[2 * n..].to_vec();
        shifts.push(-shifts.iter().sum::<f64>());
        let g: Vec<f64> = (0..n)
            .map(|i| -PI * self.u * y[2 * i + 1] - self.k_spring * shifts[i])
            .collect();
        let mean = g.iter().sum::<f64>() / n as f64;
        g.iter().map(|gi| (gi - mean) / self.eta).collect()
    }

    pub fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        let v = self.velocities(y);
        let k1 = 2.0 * PI / self.ell;
        for i in 0..n {
            let (c, s) = (y[2 * i], y[2 * i + 1]);
            out[2 * i] = -self.a0 * c - k1 * v[i] * s + self.a1 / self.ell;
            out[2 * i + 1] = -self.a0 * s + k1 * v[i] * c + self.b1 / self.ell;
        }
        for i in 0..n - 1 {
            out[2 * n + i] = v[i];
        }
    }

    /// Central-difference Jacobian at `y`.
    pub fn jacobian(&self, y: &[f64]) -> nalgebra::DMatrix<f64> {
        numerical_jacobian(|a, b| self.rhs(a, b), y, 1e-6)
    }
}

/// Central-difference Jacobian with per-component step `h * max(|y_i|, scale)`
/// where `scale` is the largest component magnitude.
pub fn numerical_jacobian<F>(f: F, y: &[f64], h: f64) -> nalgebra::DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y.len();
    let mut jac = nalgebra::DMatrix::zeros(n, n);
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let step = h * y[j].abs().max(1e-3);
        yp[j] = y[j] + step;
        f(&yp, &mut fp);
        yp[j] = y[j] - step;
        f(&yp, &mut fm);
        yp[j] = y[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Jacobian of [`rhs_first`] at `y`.
pub fn jacobian_first(
    y: &[f64; 5],
    params: &PhysicalParams,
    rates: &TransitionRates,
) -> nalgebra::DMatrix<f64> {
    numerical_jacobian(
        |a, out| {
            let s = [a[0], a[1], a[2], a[3], a[4]];
            out.copy_from_slice(&rhs_first(&s, params, rates));
        },
        y,
        1e-6,
    )
}

/// Equilibrium of the first-mode system.
pub fn first_equilibrium(rates: &TransitionRates) -> [f64; 5] {
    let s = 1.0 / (rates.a0() * rates.ell());
    let c = rates.a(1) * s;
    let b = rates.b(1) * s;
    [c, b, c, b, 0.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rates_from_atp, RateFamily};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table(delta: f64) -> (PhysicalParams, TransitionRates) {
        let p = PhysicalParams::reference().at_delta(delta);
        let r = rates_from_atp(&p).unwrap();
        (p, r)
    }

    #[test]
    fn zero_mode_fixed_point_and_closed_form() {
        let r = TransitionRates::constant(1.0, 1.0).unwrap();
        assert_eq!(rhs_zero(0.5, 0.5, &r), (0.0, 0.0));
        // p0(1) = e^{-1} (1 - 0.5) + 0.5
        let p = PhysicalParams {
            ell: 1.0,
            ..PhysicalParams::reference()
        };
        let mut s = FourierState::equilibrium(&r, 1);
        s.p0 = 1.0;
        let run = integrate(&s, &p, &r, 1.0, 1e-3, &IntegrateOptions::default()).unwrap();
        assert_relative_eq!(run.final_state.p0, 0.683_939_720_585_721, epsilon = 1e-10);
    }

    #[test]
    fn zero_mode_tracks_exponential() {
        let (p, r) = table(0.1);
        let mut s = FourierState::equilibrium(&r, 1);
        s.p0 = 0.08;
        let a0 = r.a0();
        let t_end = 5.0 / a0;
        let run = integrate(&s, &p, &r, t_end, 1e-5, &IntegrateOptions::default()).unwrap();
        let exact = (-a0 * t_end).exp() * (0.08 - 0.05) + 0.05;
        assert!((run.final_state.p0 - exact).abs() < 1e-8);
    }

    #[test]
    fn first_mode_equilibrium_is_stationary() {
        let (p, r) = table(0.2);
        let d = rhs_first(&first_equilibrium(&r), &p, &r);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn swap_symmetry() {
        let (p, r) = table(0.1);
        let y = [0.01, -0.02, 0.015, 0.004, 0.3];
        let d = rhs_first(&y, &p, &r);
        let ys = [y[2], y[3], y[0], y[1], -y[4]];
        let ds = rhs_first(&ys, &p, &r);
        assert_relative_eq!(ds[4], -d[4], max_relative = 1e-14);
        for (a, b) in [(0, 2), (1, 3), (2, 0), (3, 1)] {
            assert_relative_eq!(ds[a], d[b], max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    /// Second implementation via the compact linear-plus-quadratic form.
    fn compact_rhs(y: &[f64; 5], p: &PhysicalParams, r: &TransitionRates) -> [f64; 5] {
        let dc = p.derived();
        let (zeta, lambda, ell) = (dc.zeta, dc.lambda, p.ell);
        let (a0, a1, b1) = (r.a0(), r.a(1), r.b(1));
        let eq = first_equilibrium(r);
        let d: Vec<f64> = (0..4).map(|i| y[i] - eq[i]).collect();
        let x = y[4];
        let ry = 0.5 * (d[1] - d[3]);
        let rr = a1 / b1 * d[0] + d[1];
        let ss = a1 / b1 * d[2] + d[3];
        let zz = 0.5 * (d[1] + d[3]);
        let w = zeta * x + lambda * ry;
        let ab = a1 / b1;
        let ba = b1 / a1;
        let dr = -a0 * rr + w * (ab * (ry + zz) + ba * (-rr + ry + zz));
        let ds = -a0 * ss + w * (ab * (ry - zz) + ba * (ss + ry - zz));
        let dz = -a0 * zz - w * ba * (rr - ss - 2.0 * ry) / 2.0;
        let dy = (-a0 - lambda / ell * a1 / a0) * ry
            - zeta / ell * a1 / a0 * x
            - w * ba * (rr + ss - 2.0 * zz) / 2.0;
        let dx = -lambda * ell / (2.0 * PI) * ry - zeta * ell / (2.0 * PI) * x;
        // back to (pc, ps, qc, qs): ps = z + y, qs = z - y, pc = (b/a)(r - ps)
        let dps = dz + dy;
        let dqs = dz - dy;
        [ba * (dr - dps), dps, ba * (ds - dqs), dqs, dx]
    }

    proptest! {
        #[test]
        fn compact_form_matches_direct(
            e in proptest::array::uniform5(-1.0f64..1.0),
            delta in -0.5f64..0.5,
        ) {
            let (p, r) = table(delta);
            let eq = first_equilibrium(&r);
            let y = [
                eq[0] + 0.01 * e[0],
                eq[1] + 0.01 * e[1],
                eq[2] + 0.01 * e[2],
                eq[3] + 0.01 * e[3],
                0.5 * e[4],
            ];
            let a = rhs_first(&y, &p, &r);
            let b = compact_rhs(&y, &p, &r);
            for i in 0..5 {
                prop_assert!((a[i] - b[i]).abs() <= 1e-10 * (1.0 + a[i].abs()));
            }
        }

        #[test]
        fn equilibrium_residual_random_params(
            k in 5e-5f64..2e-4,
            eta in 5e-8f64..2e-7,
            ell in 5.0f64..20.0,
            delta in -0.5f64..0.5,
        ) {
            let p = PhysicalParams { k_spring: k, eta, ell, ..PhysicalParams::reference() }
                .at_delta(delta);
            let r = RateFamily::from_params(&p).rates(p.omega, p.ell).unwrap();
            let d = rhs_first(&first_equilibrium(&r), &p, &r);
            prop_assert!(d.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn higher_modes_relax_without_driving() {
        let r = TransitionRates::new(
            200.0,
            10.0,
            [(1, -3.0), (3, 1.5)].into_iter().collect(),
            [(1, -3.0), (3, 0.5)].into_iter().collect(),
        )
        .unwrap();
        let mut z = [0.3, -0.2, 0.1, 0.05];
        let dt = 1e-4;
        for _ in 0..20_000 {
            let d = rhs_higher(3, &z, 0.0, &r);
            for i in 0..4 {
                z[i] += dt * d[i];
            }
        }
        let target = [1.5 / 2000.0, 0.5 / 2000.0, 1.5 / 2000.0, 0.5 / 2000.0];
        for i in 0..4 {
            assert_relative_eq!(z[i], target[i], max_relative = 1e-9);
        }
        // even modes carry no source and decay to zero
        let mut e = [0.3, -0.2, 0.1, 0.05];
        for _ in 0..20_000 {
            let d = rhs_higher(2, &e, 100.0 * (e[0] * 7.0).sin(), &r);
            for i in 0..4 {
                e[i] += dt * d[i];
            }
        }
        assert!(e.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn periodic_driving_gives_periodic_response() {
        let r = rates_from_atp(&PhysicalParams::reference()).unwrap();
        let r = TransitionRates::new(
            r.a0(),
            r.ell(),
            [(1, r.a(1)), (3, 0.8)].into_iter().collect(),
            [(1, r.b(1)), (3, -0.4)].into_iter().collect(),
        )
        .unwrap();
        let period = 1.0 / 78.0;
        let xdot = |t: f64| 300.0 * (2.0 * PI * t / period).cos();
        let f = |t: f64, z: &[f64; 4]| rhs_higher(3, z, xdot(t), &r);
        let steps_per_period = 2000;
        let h = period / steps_per_period as f64;
        let mut z = [0.0; 4];
        let mut t = 0.0;
        let advance = |z: &mut [f64; 4], t: &mut f64| {
            let k1 = f(*t, z);
            let mid = |k: &[f64; 4], s: f64| -> [f64; 4] {
                let mut o = *z;
                for i in 0..4 {
                    o[i] += s * k[i];
                }
                o
            };
            let k2 = f(*t + 0.5 * h, &mid(&k1, 0.5 * h));
            let k3 = f(*t + 0.5 * h, &mid(&k2, 0.5 * h));
            let k4 = f(*t + h, &mid(&k3, h));
            for i in 0..4 {
                z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            *t += h;
        };
        for _ in 0..20 * steps_per_period {
            advance(&mut z, &mut t);
        }
        let start = z;
        for _ in 0..steps_per_period {
            advance(&mut z, &mut t);
        }
        let res: f64 = (0..4).map(|i| (z[i] - start[i]).abs()).fold(0.0, f64::max);
        assert!(res < 1e-6, "periodicity residual {res}");
    }

    #[test]
    fn truncation_level_does_not_change_x() {
        let (p, r) = table(0.1);
        let mut s1 = FourierState::equilibrium(&r, 1);
        s1.x = 0.05;
        let mut s4 = FourierState::equilibrium(&r, 4);
        s4.x = 0.05;
        s4.modes[1] = [0.01, -0.01, 0.002, 0.0];
        let o = IntegrateOptions::default();
        let a = integrate(&s1, &p, &r, 0.05, 1e-4, &o).unwrap();
        let b = integrate(&s4, &p, &r, 0.05, 1e-4, &o).unwrap();
        assert_eq!(a.series.column("x"), b.series.column("x"));
    }

    #[test]
    fn rk4_linear_decay() {
        let f = |y: &[f64], out: &mut [f64]| out[0] = -y[0];
        let mut w = Rk4Work::default();
        let mut y = vec![1.0];
        for _ in 0..1000 {
            y = rk4_step(&f, &y, 1e-3, &mut w);
        }
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let (p, r) = table(0.1);
        let s = FourierState::equilibrium(&r, 2);
        let o = IntegrateOptions::default();
        assert!(matches!(
            integrate(&s, &p, &r, 1.0, 0.0, &o).unwrap_err().source,
            SpectralError::InvalidStep(_)
        ));
        assert!(matches!(
            integrate(&s, &p, &r, -1.0, 1e-3, &o).unwrap_err().source,
            SpectralError::InvalidSpan { .. }
        ));
    }

    #[test]
    fn blow_up_is_reported() {
        let (p, r) = table(0.1);
        let mut s = FourierState::equilibrium(&r, 1);
        s.x = 1e3;
        let err = integrate(&s, &p, &r, 1.0, 0.5, &IntegrateOptions::default()).unwrap_err();
        assert!(matches!(err.source, SpectralError::NonFinite(_)));
        assert!(err.partial.truncated);
    }

    #[test]
    fn grid_projection_round_trip() {
        let (_, r) = table(0.1);
        let eq = FourierState::equilibrium(&r, 3);
        let cells = 64;
        let ell = r.ell();
        let p: Vec<f64> = (0..cells)
            .map(|j| eq.density_p(j as f64 * ell / cells as f64, ell))
            .collect();
        let back = FourierState::from_grid(&p, &p, 0.0, 0.0, 3);
        assert_relative_eq!(back.p0, eq.p0, epsilon = 1e-15);
        for n in 0..3 {
            for i in 0..4 {
                assert!((back.modes[n][i] - eq.modes[n][i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn n_row_reduces_to_two_row() {
        let (p, r) = table(0.1);
        let sys = NRowFirstMode::new(2, &p, &r).unwrap();
        let eq = sys.equilibrium();
        let y = [
            eq[0] + 0.001,
            eq[1] - 0.002,
            eq[2] + 0.0005,
            eq[3] + 0.001,
            0.2,
        ];
        let mut out = vec![0.0; 5];
        sys.rhs(&y, &mut out);
        let two = rhs_first(&[y[0], y[1], y[2], y[3], y[4]], &p, &r);
        // row 2 is transported at -v, matching the Q equations
        for i in 0..5 {
            assert_relative_eq!(out[i], two[i], max_relative = 1e-12, epsilon = 1e-12);
        }
    }
}
