//! Post-processing of recorded series and experiment orchestration:
//! amplitude and frequency estimation, delta sweeps, parameter
//! sensitivity, theory/ODE/PDE error tables and N-row cluster detection.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hopf::{amplitude_theory, omega0_freq, tau_prime};
use crate::model::{PhysicalParams, RateFamily};
use crate::pde::{run, Grid, Model, PdeSystem, Recorder};
use crate::series::TimeSeries;
use crate::spectral::{integrate, FourierState, IntegrateOptions, DEFAULT_N_MAX};

/// Phase tolerance for two rows to count as synchronised.
pub const CLUSTER_PHASE_TOL: f64 = PI / 8.0;
/// Relative spread allowed between the amplitudes (or frequencies) of rows.
pub const UNIFORMITY_TOL: f64 = 0.02;
/// Minimum number of periods in a measurement window.
pub const MIN_PERIODS: f64 = 5.0;
/// Amplitudes below this (nm) are treated as rest.
pub const AMPLITUDE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("series has {len} samples; need more than {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("no column named {0:?}")]
    MissingColumn(String),
    #[error("no sustained oscillation (amplitude {amplitude})")]
    NoOscillation { amplitude: f64 },
    #[error("engine failed: {0}")]
    Engine(String),
}

/// Steady-state amplitude and frequency of one signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeEstimate {
    /// Half the peak-to-peak range (nm).
    pub amplitude: f64,
    /// Mean zero-upcrossing rate of the demeaned signal (Hz).
    pub frequency: f64,
    pub transient_samples: usize,
    pub window: (f64, f64),
}

/// Estimates the amplitude of column `x` after dropping `transient` samples.
pub fn measure_amplitude(
    series: &TimeSeries,
    transient: usize,
) -> Result<AmplitudeEstimate, MeasureError> {
    measure_column(series, "x", transient)
}

fn half_range(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    0.5 * (hi - lo)
}

/// Linearly interpolated times at which `x - mean` crosses zero upwards.
fn upcrossings(t: &[f64], x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let mut out = Vec::new();
    for i in 1..x.len() {
        let (a, b) = (x[i - 1] - mean, x[i] - mean);
        if a < 0.0 && b >= 0.0 {
            out.push(t[i - 1] + (t[i] - t[i - 1]) * (-a) / (b - a));
        }
    }
    out
}

/// [`measure_amplitude`] for an arbitrary column.
pub fn measure_column(
    series: &TimeSeries,
    column: &str,
    transient: usize,
) -> Result<AmplitudeEstimate, MeasureError> {
    let ci = series
        .column_index(column)
        .ok_or_else(|| MeasureError::MissingColumn(column.into()))?;
    if series.len() <= transient + 10 {
        return Err(MeasureError::TooShort {
            len: series.len(),
            needed: transient + 10,
        });
    }
    let t: Vec<f64> = series.rows[transient..].iter().map(|r| r[0]).collect();
    let x: Vec<f64> = series.rows[transient..].iter().map(|r| r[ci]).collect();
    let amplitude = half_range(&x);
    let ups = upcrossings(&t, &x);
    if ups.len() < 3 || !(amplitude > AMPLITUDE_FLOOR) {
        return Err(MeasureError::NoOscillation { amplitude });
    }
    let period = (ups[ups.len() - 1] - ups[0]) / (ups.len() - 1) as f64;
    let window = (t[0], t[t.len() - 1]);
    if window.1 - window.0 < MIN_PERIODS * period {
        return Err(MeasureError::TooShort {
            len: series.len(),
            needed: transient + (MIN_PERIODS * period / (t[1] - t[0])).ceil() as usize,
        });
    }
    // A decaying oscillation still crosses zero; compare the two ends.
    let q = x.len() / 4;
    if half_range(&x[x.len() - q..]) < 0.5 * half_range(&x[..q]) {
        return Err(MeasureError::NoOscillation { amplitude });
    }
    Ok(AmplitudeEstimate {
        amplitude,
        frequency: 1.0 / period,
        transient_samples: transient,
        window,
    })
}

/// Half ranges of `column` over `k` equal consecutive windows after the
/// transient.
pub fn window_amplitudes(
    series: &TimeSeries,
    column: &str,
    transient: usize,
    k: usize,
) -> Result<Vec<f64>, MeasureError> {
    let ci = series
        .column_index(column)
        .ok_or_else(|| MeasureError::MissingColumn(column.into()))?;
    let rows = series.rows.get(transient..).unwrap_or(&[]);
    if k == 0 || rows.len() < 2 * k {
        return Err(MeasureError::TooShort {
            len: series.len(),
            needed: transient + 2 * k,
        });
    }
    let size = rows.len() / k;
    Ok((0..k)
        .map(|w| {
            let x: Vec<f64> = rows[w * size..(w + 1) * size]
                .iter()
                .map(|r| r[ci])
                .collect();
            half_range(&x)
        })
        .collect())
}

/// Which solver produces a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Fixed-step RK4 on the Fourier system.
    Ode { dt: f64, n_max: usize },
    /// Upwind scheme with `dt = dt_per_dx * dx`.
    Pde { cells: usize, dt_per_dx: f64 },
}

impl Engine {
    pub fn ode_default() -> Self {
        Engine::Ode {
            dt: 1e-4,
            n_max: DEFAULT_N_MAX,
        }
    }

    pub fn pde_default() -> Self {
        Engine::Pde {
            cells: 200,
            dt_per_dx: 1e-3,
        }
    }

    pub fn dt(&self, ell: f64) -> f64 {
        match *self {
            Engine::Ode { dt, .. } => dt,
            Engine::Pde { cells, dt_per_dx } => dt_per_dx * ell / cells as f64,
        }
    }
}

/// Run length and initial condition of a measured two-row run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub engine: Engine,
    /// Initial displacement (nm) away from equilibrium.
    pub x0: f64,
    /// Measurement window in periods of the onset frequency.
    pub window_periods: f64,
    /// Transient multiple of the linear growth time `1 / tau(delta)`.
    pub growth_times: f64,
}

impl MeasureOptions {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine,
            x0: 0.01,
            window_periods: 40.0,
            growth_times: 10.0,
        }
    }
}

/// Transient duration (s): at least 1000 steps and `10 / (|delta| omega0)`,
/// extended to `growth_times / |tau(delta)|` so that runs started from a
/// small perturbation reach the limit cycle.
pub fn transient_time(delta: f64, params: &PhysicalParams, dt: f64, growth_times: f64) -> f64 {
    let base = PhysicalParams {
        omega: params.omega0,
        ..*params
    };
    let family = RateFamily::from_params(&base);
    let w0 = omega0_freq(&base, family.a0(base.omega0));
    let rate = (delta * base.omega0 * tau_prime(&base, &family, base.omega0)).abs();
    let d = delta.abs().max(1e-12);
    (1000.0 * dt)
        .max(10.0 / (d * w0))
        .max(growth_times / rate.max(1e-12))
}

/// A measured run: its series and the number of transient samples.
#[derive(Debug, Clone)]
pub struct MeasuredRun {
    pub series: TimeSeries,
    pub transient: usize,
    pub dt: f64,
}

/// Runs the two-row model at `params.omega` with the options' engine.
pub fn two_row_run(
    params: &PhysicalParams,
    opts: &MeasureOptions,
) -> Result<MeasuredRun, MeasureError> {
    let family = RateFamily::from_params(params);
    let rates = family
        .rates(params.omega, params.ell)
        .map_err(|e| MeasureError::Engine(e.to_string()))?;
    let dt = opts.engine.dt(params.ell);
    let w0 = omega0_freq(params, family.a0(params.omega0));
    let t_tr = transient_time(params.delta(), params, dt, opts.growth_times);
    let t_end = t_tr + opts.window_periods * 2.0 * PI / w0;
    let steps = (t_end / dt).ceil() as usize;
    let transient = (t_tr / dt).ceil() as usize;
    let series = match opts.engine {
        Engine::Ode { dt, n_max } => {
            let mut s = FourierState::equilibrium(&rates, n_max.max(1));
            s.x = opts.x0;
            integrate(
                &s,
                params,
                &rates,
                steps as f64 * dt,
                dt,
                &IntegrateOptions::default(),
            )
            .map_err(|e| MeasureError::Engine(e.to_string()))?
            .series
        }
        Engine::Pde { cells, .. } => {
            let grid = Grid::new(cells, params.ell, dt)
                .map_err(|e| MeasureError::Engine(e.to_string()))?;
            let sys = PdeSystem::new(Model::TwoRow, grid, params, &rates)
                .map_err(|e| MeasureError::Engine(e.to_string()))?;
            let init = sys
                .perturbed_state(opts.x0)
                .map_err(|e| MeasureError::Engine(e.to_string()))?;
            run(&sys, init, steps, &Recorder::every(1))
                .map_err(|e| MeasureError::Engine(e.to_string()))?
                .series
        }
    };
    Ok(MeasuredRun {
        series,
        transient,
        dt,
    })
}

/// One row of a delta sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
    /// Set when the run or the measurement failed.
    pub error: Option<String>,
}

/// Measures the two-row amplitude at `params` for `Omega = Omega0 (1 + delta)`.
pub fn measure_at(params: &PhysicalParams, delta: f64, opts: &MeasureOptions) -> SweepRow {
    let p = params.at_delta(delta);
    let result = two_row_run(&p, opts).and_then(|r| measure_amplitude(&r.series, r.transient));
    match result {
        Ok(est) => SweepRow {
            delta,
            amplitude: Some(est.amplitude),
            frequency: Some(est.frequency),
            error: None,
        },
        Err(MeasureError::NoOscillation { amplitude }) => SweepRow {
            delta,
            amplitude: Some(amplitude),
            frequency: None,
            error: Some("no oscillation".into()),
        },
        Err(e) => SweepRow {
            delta,
            amplitude: None,
            frequency: None,
            error: Some(e.to_string()),
        },
    }
}

/// Parallel sweep; rows come back in input order.
pub fn sweep_delta(
    deltas: &[f64],
    params: &PhysicalParams,
    opts: &MeasureOptions,
) -> Vec<SweepRow> {
    deltas
        .par_iter()
        .map(|&d| measure_at(params, d, opts))
        .collect()
}

/// Parameters open to a sensitivity scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParam {
    K,
    Eta,
    Ell,
}

impl ScanParam {
    pub fn get(&self, p: &PhysicalParams) -> f64 {
        match self {
            ScanParam::K => p.k_spring,
            ScanParam::Eta => p.eta,
            ScanParam::Ell => p.ell,
        }
    }

    pub fn with(&self, p: &PhysicalParams, v: f64) -> PhysicalParams {
        let mut q = *p;
        match self {
            ScanParam::K => q.k_spring = v,
            ScanParam::Eta => q.eta = v,
            ScanParam::Ell => q.ell = v,
        }
        q
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScanParam::K => "k",
            ScanParam::Eta => "eta",
            ScanParam::Ell => "ell",
        }
    }
}

impl std::str::FromStr for ScanParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "k" | "k_spring" => Ok(ScanParam::K),
            "eta" => Ok(ScanParam::Eta),
            "ell" => Ok(ScanParam::Ell),
            other => Err(format!(
                "unknown scan parameter {other:?} (use k, eta or ell)"
            )),
        }
    }
}

/// Delta used for sensitivity scans.
pub const SENSITIVITY_DELTA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub value: f64,
    pub rel_change: f64,
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
    pub error: Option<String>,
}

/// Scans `param` over `(1 +- rel_range)` times its base value in `points`
/// evenly spaced steps at `delta = 0.05`. The onset `Omega0` is kept and the
/// slope `d` re-derived for every value.
pub fn sensitivity_scan(
    param: ScanParam,
    rel_range: f64,
    points: usize,
    base: &PhysicalParams,
    opts: &MeasureOptions,
) -> Vec<SensitivityRow> {
    let rels: Vec<f64> = match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n)
            .map(|i| rel_range * (-1.0 + 2.0 * i as f64 / (n - 1) as f64))
            .collect(),
    };
    rels.par_iter()
        .map(|&rel| {
            let value = param.get(base) * (1.0 + rel);
            let p = param.with(base, value);
            let row = measure_at(&p, SENSITIVITY_DELTA, opts);
            SensitivityRow {
                value,
                rel_change: rel,
                amplitude: row.amplitude,
                frequency: row.frequency,
                error: row.error,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub delta: f64,
    pub rho_theory: f64,
    pub rho_ode: Option<f64>,
    pub rho_pde: Option<f64>,
    pub relerr_theory_pde: Option<f64>,
    pub relerr_ode_pde: Option<f64>,
}

/// Theory, ODE and PDE amplitudes side by side with relative errors
/// against the PDE.
pub fn error_table(
    deltas: &[f64],
    params: &PhysicalParams,
    ode: &MeasureOptions,
    pde: &MeasureOptions,
) -> Vec<ErrorRow> {
    let family = RateFamily::from_params(params);
    let (odes, pdes) = rayon::join(
        || sweep_delta(deltas, params, ode),
        || sweep_delta(deltas, params, pde),
    );
    deltas
        .iter()
        .zip(odes.iter().zip(&pdes))
        .map(|(&delta, (o, p))| {
            let rho_theory = amplitude_theory(delta.max(0.0), params, &family)
                .map(|a| a.general)
                .unwrap_or(f64::NAN);
            let rho_ode = o.error.is_none().then_some(o.amplitude).flatten();
            let rho_pde = p.error.is_none().then_some(p.amplitude).flatten();
            ErrorRow {
                delta,
                rho_theory,
                rho_ode,
                rho_pde,
                relerr_theory_pde: rho_pde.map(|r| (rho_theory - r).abs() / r),
                relerr_ode_pde: rho_pde.zip(rho_ode).map(|(r, o)| (o - r).abs() / r),
            }
        })
        .collect()
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Synchronisation structure of the N-row displacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Partition of `1..=N` (1-based), each cluster sorted, clusters ordered
    /// by their smallest member.
    pub clusters: Vec<Vec<usize>>,
    /// Circular mean phase of each cluster relative to row 1 (rad).
    pub cluster_phases: Vec<f64>,
    /// Phase of each `Delta_i` relative to `Delta_1` (rad).
    pub phases: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub uniform_amplitude: bool,
    pub uniform_frequency: bool,
    /// Exactly two clusters whose phases differ by `pi` within the tolerance.
    pub antiphase: bool,
}

/// Lag (in samples, fractional) maximising `sum a(t) b(t + lag)` over
/// `|lag| <= max_lag`.
fn best_lag(a: &[f64], b: &[f64], max_lag: usize) -> f64 {
    let n = a.len();
    let corr = |lag: isize| -> f64 {
        let mut s = 0.0;
        for (i, av) in a.iter().enumerate() {
            let j = i as isize + lag;
            if j >= 0 && (j as usize) < n {
                s += av * b[j as usize];
            }
        }
        s
    };
    let m = max_lag as isize;
    let vals: Vec<f64> = (-m..=m).map(corr).collect();
    let (k, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, bv), (k, &v)| {
            if v > bv {
                (k, v)
            } else {
                (bk, bv)
            }
        });
    let mut lag = k as f64 - m as f64;
    if k > 0 && k + 1 < vals.len() {
        let (y0, y1, y2) = (vals[k - 1], vals[k], vals[k + 1]);
        let den = y0 - 2.0 * y1 + y2;
        if den != 0.0 {
            lag += 0.5 * (y0 - y2) / den;
        }
    }
    lag
}

/// Groups the `delta_1..delta_N` columns of an N-row series by phase.
pub fn detect_clusters(
    series: &TimeSeries,
    n: usize,
    transient: usize,
) -> Result<ClusterReport, MeasureError> {
    let names: Vec<String> = (1..=n).map(|i| format!("delta_{i}")).collect();
    let mut amplitudes = Vec::with_capacity(n);
    let mut frequencies = Vec::with_capacity(n);
    for name in &names {
        let est = measure_column(series, name, transient)?;
        amplitudes.push(est.amplitude);
        frequencies.push(est.frequency);
    }
    let spread = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi / lo - 1.0
    };
    let rows = &series.rows[transient..];
    let dt = rows[1][0] - rows[0][0];
    let f_mean = frequencies.iter().sum::<f64>() / n as f64;
    let period = 1.0 / f_mean;
    let max_lag = ((0.5 * period / dt).ceil() as usize).min(rows.len() / 2);
    let demeaned: Vec<Vec<f64>> = names
        .iter()
        .map(|name| {
            let ci = series.column_index(name).expect("checked above");
            let x: Vec<f64> = rows.iter().map(|r| r[ci]).collect();
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.into_iter().map(|v| v - m).collect()
        })
        .collect();
    let phases: Vec<f64> = demeaned
        .iter()
        .map(|b| wrap_angle(-2.0 * PI * best_lag(&demeaned[0], b, max_lag) * dt / period))
        .collect();

    // Connected components of the "within tolerance" graph.
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if wrap_angle(phases[i] - phases[j]).abs() < CLUSTER_PHASE_TOL {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                label[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match roots.iter().position(|&x| x == r) {
            Some(k) => clusters[k].push(i + 1),
            None => {
                roots.push(r);
                clusters.push(vec![i + 1]);
            }
        }
    }
    let cluster_phases: Vec<f64> = clusters
        .iter()
        .map(|c| {
            let (s, co) = c.iter().fold((0.0, 0.0), |(s, co), &i| {
                (s + phases[i - 1].sin(), co + phases[i - 1].cos())
            });
            s.atan2(co)
        })
        .collect();
    let antiphase = clusters.len() == 2
        && wrap_angle(cluster_phases[0] - cluster_phases[1]).abs() > PI - CLUSTER_PHASE_TOL;
    Ok(ClusterReport {
        clusters,
        cluster_phases,
        phases,
        uniform_amplitude: spread(&amplitudes) <= UNIFORMITY_TOL,
        uniform_frequency: spread(&frequencies) <= UNIFORMITY_TOL,
        amplitudes,
        frequencies,
        antiphase,
    })
}

/// Settings of an N-row clustering run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub rows: usize,
    pub cells: usize,
    pub dt_per_dx: f64,
    /// Half-width of the uniform initial filament offsets (nm).
    pub shift_amplitude: f64,
    /// Total simulated time (s).
    pub t_end: f64,
    /// Trailing window (s) used for the measurement.
    pub window: f64,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            rows: 8,
            cells: 200,
            dt_per_dx: 1e-3,
            shift_amplitude: 0.01,
            t_end: 3.0,
            window: 0.5,
        }
    }
}

/// Outcome of [`cluster_run`].
#[derive(Debug, Clone)]
pub struct ClusterRun {
    pub series: TimeSeries,
    pub transient: usize,
    pub report: Result<ClusterReport, MeasureError>,
}

/// N-row run from seeded random shifts followed by [`detect_clusters`] on
/// the trailing window.
pub fn cluster_run(
    params: &PhysicalParams,
    seed: u64,
    opts: &ClusterOptions,
) -> Result<ClusterRun, MeasureError> {
    let engine = |e: &dyn std::fmt::Display| MeasureError::Engine(e.to_string());
    let rates = RateFamily::from_params(params)
        .rates(params.omega, params.ell)
        .map_err(|e| engine(&e))?;
    let grid = Grid::with_ratio(opts.cells, params.ell, opts.dt_per_dx).map_err(|e| engine(&e))?;
    let sys =
        PdeSystem::new(Model::NRow(opts.rows), grid, params, &rates).map_err(|e| engine(&e))?;
    let init = sys
        .random_shift_state(seed, opts.shift_amplitude)
        .map_err(|e| engine(&e))?;
    let steps = (opts.t_end / grid.dt).ceil() as usize;
    let out = run(&sys, init, steps, &Recorder::every(1)).map_err(|e| engine(&e))?;
    let transient = out
        .series
        .len()
        .saturating_sub((opts.window / grid.dt).ceil() as usize + 1);
    let report = detect_clusters(&out.series, opts.rows, transient);
    Ok(ClusterRun {
        series: out.series,
        transient,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn synthetic(f: impl Fn(f64) -> f64, rate: f64, t_end: f64) -> TimeSeries {
        let mut ts = TimeSeries::new(vec!["t".into(), "x".into()]);
        let n = (t_end * rate) as usize;
        for i in 0..=n {
            let t = i as f64 / rate;
            ts.push(vec![t, f(t)]);
        }
        ts
    }

    #[test]
    fn sine_amplitude_and_frequency() {
        let ts = synthetic(|t| 0.4 * (2.0 * PI * 78.0 * t).sin(), 1e4, 1.0);
        let e = measure_amplitude(&ts, 100).unwrap();
        assert!((e.amplitude - 0.4).abs() < 1e-3);
        assert!((e.frequency - 78.0).abs() < 0.5);
    }

    #[test]
    fn shift_and_reflection_equivariance() {
        let f = |t: f64| 0.3 * (2.0 * PI * 50.0 * t).sin() + 0.05 * (2.0 * PI * 100.0 * t).cos();
        let a = measure_amplitude(&synthetic(f, 1e4, 0.5), 10).unwrap();
        let b = measure_amplitude(&synthetic(|t| 7.0 + f(t), 1e4, 0.5), 10).unwrap();
        let c = measure_amplitude(&synthetic(|t| -f(t), 1e4, 0.5), 10).unwrap();
        assert_relative_eq!(a.amplitude, b.amplitude, max_relative = 1e-12);
        assert_relative_eq!(a.amplitude, c.amplitude, max_relative = 1e-12);
        assert_relative_eq!(a.frequency, c.frequency, max_relative = 1e-3);
    }

    #[test]
    fn decaying_signal_is_not_an_oscillation() {
        let ts = synthetic(
            |t| (-20.0 * t).exp() * (2.0 * PI * 78.0 * t).sin(),
            1e4,
            1.0,
        );
        assert!(matches!(
            measure_amplitude(&ts, 10),
            Err(MeasureError::NoOscillation { .. })
        ));
        let flat = synthetic(|_| 0.0, 1e4, 0.1);
        assert!(matches!(
            measure_amplitude(&flat, 10),
            Err(MeasureError::NoOscillation { .. })
        ));
    }

    #[test]
    fn too_short() {
        let ts = synthetic(|t| t.sin(), 10.0, 1.0);
        assert!(matches!(
            measure_amplitude(&ts, 5),
            Err(MeasureError::TooShort { .. })
        ));
        let few_periods = synthetic(|t| (2.0 * PI * 10.0 * t).sin(), 1e4, 0.35);
        assert!(matches!(
            measure_amplitude(&few_periods, 0),
            Err(MeasureError::TooShort { .. })
        ));
    }

    #[test]
    fn window_amplitudes_split() {
        let ts = synthetic(|t| (1.0 + t) * (2.0 * PI * 100.0 * t).sin(), 1e4, 1.0);
        let w = window_amplitudes(&ts, "x", 0, 2).unwrap();
        assert!(w[1] > w[0]);
    }

    #[test]
    fn empty_sweep() {
        let p = PhysicalParams::reference();
        assert!(sweep_delta(&[], &p, &MeasureOptions::new(Engine::ode_default())).is_empty());
    }

    #[test]
    fn wrap() {
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(0.1), 0.1, epsilon = 1e-15);
    }

    fn cluster_series(phases: &[f64], amps: &[f64]) -> TimeSeries {
        let n = phases.len();
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("delta_{i}")));
        let mut ts = TimeSeries::new(cols);
        for k in 0..5000 {
            let t = k as f64 * 1e-4;
            let mut row = vec![t];
            for i in 0..n {
                row.push(amps[i] * (2.0 * PI * 80.0 * t + phases[i]).sin());
            }
            ts.push(row);
        }
        ts
    }

    #[test]
    fn clusters_from_synthetic_phases() {
        let phases = [0.0, PI, 0.0, PI, 0.05, PI - 0.05, 0.0, PI];
        let ts = cluster_series(&phases, &[0.5; 8]);
        let r = detect_clusters(&ts, 8, 0).unwrap();
        assert_eq!(r.clusters, vec![vec![1, 3, 5, 7], vec![2, 4, 6, 8]]);
        assert!(r.antiphase && r.uniform_amplitude && r.uniform_frequency);
        for (p, q) in r.phases.iter().zip(phases) {
            assert!(wrap_angle(p - q).abs() < 0.02);
        }
        let blocks = [0.0, 0.0, PI, PI, PI, PI, 0.0, 0.0];
        let r = detect_clusters(&cluster_series(&blocks, &[0.5; 8]), 8, 0).unwrap();
        assert_eq!(r.clusters, vec![vec![1, 2, 7, 8], vec![3, 4, 5, 6]]);
    }

    #[test]
    fn partition_covers_rows() {
        let phases = [0.0, 1.0, 2.0, 3.0, -1.0, -2.5];
        let amps = [0.5, 0.4, 0.5, 0.5, 0.5, 0.5];
        let r = detect_clusters(&cluster_series(&phases, &amps), 6, 0).unwrap();
        let mut all: Vec<usize> = r.clusters.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (1..=6).collect::<Vec<_>>());
        assert_eq!(r.clusters.len(), 6);
        assert!(!r.antiphase);
        assert!(!r.uniform_amplitude);
    }
}
