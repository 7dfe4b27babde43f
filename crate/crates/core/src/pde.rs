//! First-order upwind discretisation of the one-, two- and N-row transport
//! systems, with an explicit force-balance velocity update after every
//! density step.
//!
//! Densities live at `xi_j = j dx`, `j = 0..J`, with periodic indexing. Each
//! row is advanced by
//!
//! ```text
//! P_j^{n+1} = (1 - c) P_j^n + c P_{j∓1}^n + dt (-a0 P_j^n + omega_B(xi_j) / ell),
//! ```
//!
//! where `c = |u| dt / dx` and the neighbour is taken on the upwind side of
//! the row's transport speed `u`. When `u == 0` the advection term is
//! skipped. The velocity is then recovered from the force balance using the
//! new densities and the old displacement, and the displacement is updated
//! with the new velocity.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{potential_gradient, ModelError, PhysicalParams, TransitionRates};
use crate::series::TimeSeries;

/// Smallest supported number of cells.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("CFL condition violated at t = {t}: |v| dt / dx = {courant}")]
    CflViolation { courant: f64, t: f64 },
    #[error("dt * a0 = {0} exceeds 1")]
    ReactionStepTooLarge(f64),
    #[error("array length {got} does not match the grid ({expected} cells)")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("state does not match the model: {0}")]
    InvalidState(String),
    #[error("non-finite value in state at t = {0}")]
    NonFinite(f64),
    #[error("a run needs at least one step")]
    ZeroSteps,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Number of motor rows and how they are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// One row on a moving filament against a fixed one.
    OneRow,
    /// Two rows around a single moving filament pair.
    TwoRow,
    /// `N` rows between `N + 1` circularly arranged filament pairs.
    NRow(usize),
}

impl Model {
    pub fn rows(&self) -> usize {
        match *self {
            Model::OneRow => 1,
            Model::TwoRow => 2,
            Model::NRow(n) => n,
        }
    }

    /// Number of stored displacements: `x` for the one/two-row models,
    /// `Delta_1..Delta_N` for the N-row model.
    pub fn shifts(&self) -> usize {
        match *self {
            Model::OneRow | Model::TwoRow => 1,
            Model::NRow(n) => n,
        }
    }

    pub fn validate(&self) -> Result<(), PdeError> {
        match *self {
            Model::NRow(n) if n < 2 => Err(PdeError::InvalidState(format!(
                "the N-row model needs N >= 2, got {n}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Uniform periodic grid with `ell = J dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub cells: usize,
    pub dx: f64,
    pub dt: f64,
}

impl Grid {
    pub fn new(cells: usize, ell: f64, dt: f64) -> Result<Self, PdeError> {
        if cells < MIN_CELLS {
            return Err(PdeError::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells, got {cells}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PdeError::InvalidGrid(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(PdeError::InvalidGrid(format!(
                "ell must be positive, got {ell}"
            )));
        }
        Ok(Self {
            cells,
            dx: ell / cells as f64,
            dt,
        })
    }

    /// Grid with `dt = dt_per_dx * dx`.
    pub fn with_ratio(cells: usize, ell: f64, dt_per_dx: f64) -> Result<Self, PdeError> {
        Self::new(cells, ell, dt_per_dx * ell / cells as f64)
    }

    pub fn courant(&self, v: f64) -> f64 {
        v.abs() * self.dt / self.dx
    }

    pub fn xi(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }
}

/// Densities, displacements and velocities at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    /// One density array per motor row (`[P]`, `[P, Q]` or `[Q_1..Q_N]`).
    pub rows: Vec<Vec<f64>>,
    /// `[x]` for one/two rows, `[Delta_1..Delta_N]` for N rows.
    pub shifts: Vec<f64>,
    /// `[v]` for one/two rows, `[v_1..v_N]` for N rows.
    pub velocities: Vec<f64>,
    pub t: f64,
}

impl GridState {
    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
            && self.shifts.iter().all(|v| v.is_finite())
            && self.velocities.iter().all(|v| v.is_finite())
    }
}

/// Rectangle-rule motor force `dx sum_j (P_j - Q_j) dDeltaW(j dx)`.
pub fn motor_force(
    p: &[f64],
    q: &[f64],
    grid: &Grid,
    params: &PhysicalParams,
) -> Result<f64, PdeError> {
    for got in [p.len(), q.len()] {
        if got != grid.cells {
            return Err(PdeError::LengthMismatch {
                expected: grid.cells,
                got,
            });
        }
    }
    let sum: f64 = p
        .iter()
        .zip(q)
        .enumerate()
        .map(|(j, (pj, qj))| (pj - qj) * potential_gradient(grid.xi(j), params))
        .sum();
    Ok(grid.dx * sum)
}

/// A discretised model ready to be stepped.
#[derive(Debug, Clone)]
pub struct PdeSystem {
    model: Model,
    grid: Grid,
    eta: f64,
    k_spring: f64,
    a0: f64,
    /// `omega_B(xi_j) / ell`.
    source: Vec<f64>,
    /// `dDeltaW/dxi (xi_j)`.
    gradient: Vec<f64>,
    /// `omega_B(xi_j) / (a0 ell)`.
    equilibrium: Vec<f64>,
}

impl PdeSystem {
    pub fn new(
        model: Model,
        grid: Grid,
        params: &PhysicalParams,
        rates: &TransitionRates,
    ) -> Result<Self, PdeError> {
        model.validate()?;
        params.validate()?;
        rates.validate_on_grid(grid.cells)?;
        let a0 = rates.a0();
        if grid.dt * a0 > 1.0 {
            return Err(PdeError::ReactionStepTooLarge(grid.dt * a0));
        }
        let ell = params.ell;
        let xs: Vec<f64> = (0..grid.cells).map(|j| grid.xi(j)).collect();
        Ok(Self {
            model,
            grid,
            eta: params.eta,
            k_spring: params.k_spring,
            a0,
            source: xs.iter().map(|&xi| rates.omega_b(xi) / ell).collect(),
            gradient: xs
                .iter()
                .map(|&xi| potential_gradient(xi, params))
                .collect(),
            equilibrium: xs.iter().map(|&xi| rates.equilibrium_density(xi)).collect(),
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ell(&self) -> f64 {
        self.grid.dx * self.grid.cells as f64
    }

    /// Sampled equilibrium density `omega_B / (a0 ell)`.
    pub fn equilibrium_density(&self) -> &[f64] {
        &self.equilibrium
    }

    /// `dx sum_j row_j dDeltaW(xi_j)`.
    pub fn row_force(&self, row: &[f64]) -> f64 {
        self.grid.dx
            * row
                .iter()
                .zip(&self.gradient)
                .map(|(r, g)| r * g)
                .sum::<f64>()
    }

    /// Stationary state: equilibrium densities, zero velocity, and
    /// `x_eq = F(P_eq) / k` for the one-row model (zero otherwise).
    pub fn equilibrium_state(&self) -> GridState {
        let rows = vec![self.equilibrium.clone(); self.model.rows()];
        let mut shifts = vec![0.0; self.model.shifts()];
        if self.model == Model::OneRow {
            shifts[0] = self.row_force(&self.equilibrium) / self.k_spring;
        }
        GridState {
            rows,
            shifts,
            velocities: vec![0.0; self.model.rows().min(self.model.shifts()).max(1)],
            t: 0.0,
        }
        .with_velocity_len(self.velocity_len())
    }

    fn velocity_len(&self) -> usize {
        match self.model {
            Model::OneRow | Model::TwoRow => 1,
            Model::NRow(n) => n,
        }
    }

    /// Equilibrium densities with the displacement offset by `dx0` from its
    /// equilibrium value; velocities are made consistent with the balance.
    pub fn perturbed_state(&self, dx0: f64) -> Result<GridState, PdeError> {
        let mut s = self.equilibrium_state();
        match self.model {
            Model::OneRow | Model::TwoRow => s.shifts[0] += dx0,
            Model::NRow(_) => {
                return Err(PdeError::InvalidState(
                    "use random_shift_state or explicit shifts for the N-row model".into(),
                ))
            }
        }
        self.set_consistent_velocities(&mut s)?;
        Ok(s)
    }

    /// N-row initial condition: equilibrium densities and filament positions
    /// `x_i ~ U[-amplitude, amplitude]` for `i = 1..N-1` (`x_0 = x_N = 0`),
    /// giving `Delta_i = x_i - x_{i-1}`.
    pub fn random_shift_state(&self, seed: u64, amplitude: f64) -> Result<GridState, PdeError> {
        let Model::NRow(n) = self.model else {
            return Err(PdeError::InvalidState(
                "random shifts apply to the N-row model".into(),
            ));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = vec![0.0; n + 1];
        for p in positions.iter_mut().take(n).skip(1) {
            *p = rng.gen_range(-amplitude..=amplitude);
        }
        let mut s = self.equilibrium_state();
        s.shifts = (1..=n).map(|i| positions[i] - positions[i - 1]).collect();
        self.set_consistent_velocities(&mut s)?;
        Ok(s)
    }

    /// Overwrites velocities with the force-balance values for the current
    /// densities and displacements.
    pub fn set_consistent_velocities(&self, state: &mut GridState) -> Result<(), PdeError> {
        self.check_shape(state)?;
        let v = self.balance(&state.rows, &state.shifts);
        state.velocities = v;
        Ok(())
    }

    fn check_shape(&self, state: &GridState) -> Result<(), PdeError> {
        if state.rows.len() != self.model.rows() {
            return Err(PdeError::InvalidState(format!(
                "expected {} density rows, got {}",
                self.model.rows(),
                state.rows.len()
            )));
        }
        for row in &state.rows {
            if row.len() != self.grid.cells {
                return Err(PdeError::LengthMismatch {
                    expected: self.grid.cells,
                    got: row.len(),
                });
            }
        }
        if state.shifts.len() != self.model.shifts() {
            return Err(PdeError::InvalidState(format!(
                "expected {} displacements, got {}",
                self.model.shifts(),
                state.shifts.len()
            )));
        }
        if state.velocities.len() != self.velocity_len() {
            return Err(PdeError::InvalidState(format!(
                "expected {} velocities, got {}",
                self.velocity_len(),
                state.velocities.len()
            )));
        }
        Ok(())
    }

    /// Velocities from the force balance given densities and displacements.
    fn balance(&self, rows: &[Vec<f64>], shifts: &[f64]) -> Vec<f64> {
        match self.model {
            Model::OneRow => {
                let f = self.row_force(&rows[0]);
                vec![(f - self.k_spring * shifts[0]) / self.eta]
            }
            Model::TwoRow => {
                let f = self.grid.dx
                    * rows[0]
                        .iter()
                        .zip(&rows[1])
                        .zip(&self.gradient)
                        .map(|((p, q), g)| (p - q) * g)
                        .sum::<f64>();
                vec![(f - 2.0 * self.k_spring * shifts[0]) / (2.0 * self.eta)]
            }
            Model::NRow(n) => {
                // eta (v_i - v_{i+1}) = G_i - G_{i+1} with G_i = F_i - k Delta_i.
                // Telescoping from the last row gives v_i - v_N; sum v = 0 fixes v_N.
                let g: Vec<f64> = rows
                    .iter()
                    .zip(shifts)
                    .map(|(row, d)| self.row_force(row) - self.k_spring * d)
                    .collect();
                let mut rel = vec![0.0; n];
                for i in (0..n - 1).rev() {
                    rel[i] = rel[i + 1] + (g[i] - g[i + 1]) / self.eta;
                }
                let v_last = -rel.iter().sum::<f64>() / n as f64;
                rel.iter().map(|r| v_last + r).collect()
            }
        }
    }

    /// Transport speed of each density row given the sliding velocities.
    fn row_speed(&self, velocities: &[f64], row: usize) -> f64 {
        match self.model {
            Model::OneRow => velocities[0],
            Model::TwoRow => {
                if row == 0 {
                    velocities[0]
                } else {
                    -velocities[0]
                }
            }
            Model::NRow(_) => velocities[row],
        }
    }

    fn upwind(&self, old: &[f64], new: &mut [f64], speed: f64) {
        let dt = self.grid.dt;
        let a0 = self.a0;
        let j_max = old.len();
        if speed == 0.0 {
            for j in 0..j_max {
                new[j] = old[j] + dt * (-a0 * old[j] + self.source[j]);
            }
            return;
        }
        let c = self.grid.courant(speed);
        let keep = 1.0 - c;
        for j in 0..j_max {
            let neighbour = if speed > 0.0 {
                old[if j == 0 { j_max - 1 } else { j - 1 }]
            } else {
                old[if j + 1 == j_max { 0 } else { j + 1 }]
            };
            new[j] = keep * old[j] + c * neighbour + dt * (-a0 * old[j] + self.source[j]);
        }
    }

    /// Advances `state` by one time step in place.
    pub fn advance(&self, state: &mut GridState, scratch: &mut Vec<f64>) -> Result<(), PdeError> {
        self.check_shape(state)?;
        let courant = self.grid.courant(state.max_speed());
        if !(courant < 1.0) {
            return Err(PdeError::CflViolation {
                courant,
                t: state.t,
            });
        }
        scratch.resize(self.grid.cells, 0.0);
        for i in 0..state.rows.len() {
            let speed = self.row_speed(&state.velocities, i);
            self.upwind(&state.rows[i], scratch, speed);
            std::mem::swap(&mut state.rows[i], scratch);
        }
        let v = self.balance(&state.rows, &state.shifts);
        for (d, vi) in state.shifts.iter_mut().zip(&v) {
            *d += vi * self.grid.dt;
        }
        state.velocities = v;
        state.t += self.grid.dt;
        if !state.is_finite() {
            return Err(PdeError::NonFinite(state.t));
        }
        Ok(())
    }

    /// One step returning a new state.
    pub fn step(&self, state: &GridState) -> Result<GridState, PdeError> {
        let mut next = state.clone();
        let mut scratch = Vec::with_capacity(self.grid.cells);
        self.advance(&mut next, &mut scratch)?;
        Ok(next)
    }

    /// Projection of `row` onto mode `n`: the mean for `n = 0`, otherwise
    /// `(2/J) sum row_j cos(2 pi n j / J)` and the sine counterpart.
    pub fn fourier_projection(&self, row: &[f64], n: usize) -> (f64, f64) {
        fourier_projection(row, n)
    }

    fn column_names(&self, modes: &[usize]) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        match self.model {
            Model::OneRow | Model::TwoRow => {
                cols.push("x".into());
                cols.push("v".into());
            }
            Model::NRow(n) => {
                cols.extend((1..=n).map(|i| format!("delta_{i}")));
                cols.extend((1..=n).map(|i| format!("v_{i}")));
            }
        }
        for &m in modes {
            if m == 0 {
                cols.push("row1_mean".into());
            } else {
                cols.push(format!("row1_c{m}"));
                cols.push(format!("row1_s{m}"));
            }
        }
        cols
    }

    fn sample(&self, state: &GridState, modes: &[usize]) -> Vec<f64> {
        let mut row = vec![state.t];
        row.extend_from_slice(&state.shifts);
        row.extend_from_slice(&state.velocities);
        for &m in modes {
            let (c, s) = fourier_projection(&state.rows[0], m);
            row.push(c);
            if m != 0 {
                row.push(s);
            }
        }
        row
    }
}

impl GridState {
    fn with_velocity_len(mut self, n: usize) -> Self {
        self.velocities = vec![0.0; n];
        self
    }
}

/// See [`PdeSystem::fourier_projection`].
pub fn fourier_projection(row: &[f64], n: usize) -> (f64, f64) {
    let cells = row.len() as f64;
    if n == 0 {
        return (row.iter().sum::<f64>() / cells, 0.0);
    }
    let w = 2.0 * PI * n as f64 / cells;
    let (c, s) = row.iter().enumerate().fold((0.0, 0.0), |(c, s), (j, &p)| {
        let a = w * j as f64;
        (c + p * a.cos(), s + p * a.sin())
    });
    (2.0 * c / cells, 2.0 * s / cells)
}

/// One upwind step of the one-row model.
pub fn step_one_row(
    state: &GridState,
    grid: &Grid,
    params: &PhysicalParams,
    rates: &TransitionRates,
) -> Result<GridState, PdeError> {
    PdeSystem::new(Model::OneRow, *grid, params, rates)?.step(state)
}

/// One upwind step of the two-row model (`P` transported at `+v`, `Q` at `-v`).
pub fn step_two_row(
    state: &GridState,
    grid: &Grid,
    params: &PhysicalParams,
    rates: &TransitionRates,
) -> Result<GridState, PdeError> {
    PdeSystem::new(Model::TwoRow, *grid, params, rates)?.step(state)
}

/// One upwind step of the N-row model.
pub fn step_n_row(
    state: &GridState,
    grid: &Grid,
    params: &PhysicalParams,
    rates: &TransitionRates,
    n: usize,
) -> Result<GridState, PdeError> {
    PdeSystem::new(Model::NRow(n), *grid, params, rates)?.step(state)
}

/// What to record during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recorder {
    /// Record every `stride` steps (the initial state is always recorded).
    pub stride: usize,
    /// Fourier modes of the first density row to record.
    #[serde(default)]
    pub fourier_modes: Vec<usize>,
}

impl Default for Recorder {
    fn default() -> Self {
        Self {
            stride: 1,
            fourier_modes: Vec::new(),
        }
    }
}

impl Recorder {
    pub fn every(stride: usize) -> Self {
        Self {
            stride: stride.max(1),
            fourier_modes: Vec::new(),
        }
    }
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Clone, Error)]
#[error("run aborted after {} samples: {source}", partial.len())]
pub struct RunError {
    pub partial: TimeSeries,
    pub last_state: GridState,
    #[source]
    pub source: PdeError,
}

/// Result of [`run`]: the recorded series and the final state.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub final_state: GridState,
}

/// Steps `initial` `steps` times, sampling every `recorder.stride` steps.
pub fn run(
    system: &PdeSystem,
    initial: GridState,
    steps: usize,
    recorder: &Recorder,
) -> Result<RunOutput, Box<RunError>> {
    let mut series = TimeSeries::new(system.column_names(&recorder.fourier_modes));
    if steps == 0 {
        series.truncated = true;
        return Err(Box::new(RunError {
            partial: series,
            last_state: initial,
            source: PdeError::ZeroSteps,
        }));
    }
    let stride = recorder.stride.max(1);
    let mut state = initial;
    let mut scratch = Vec::with_capacity(system.grid.cells);
    series.push(system.sample(&state, &recorder.fourier_modes));
    for n in 1..=steps {
        if let Err(source) = system.advance(&mut state, &mut scratch) {
            series.truncated = true;
            return Err(Box::new(RunError {
                partial: series,
                last_state: state,
                source,
            }));
        }
        if n % stride == 0 {
            series.push(system.sample(&state, &recorder.fourier_modes));
        }
    }
    Ok(RunOutput {
        series,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rates_from_atp, PhysicalParams};
    use approx::assert_relative_eq;

    fn reference_system(model: Model, cells: usize, delta: f64) -> (PdeSystem, PhysicalParams) {
        let p = PhysicalParams::reference().at_delta(delta);
        let rates = rates_from_atp(&p).unwrap();
        let grid = Grid::with_ratio(cells, p.ell, 1e-3).unwrap();
        (PdeSystem::new(model, grid, &p, &rates).unwrap(), p)
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(4, 10.0, 1e-5).is_err());
        assert!(Grid::new(0, 10.0, 1e-5).is_err());
        assert!(Grid::new(16, 10.0, 0.0).is_err());
        let g = Grid::new(16, 10.0, 1e-5).unwrap();
        assert_eq!(g.dx * 16.0, 10.0);
    }

    #[test]
    fn motor_force_symmetric_inputs_vanish() {
        let p = PhysicalParams::reference();
        let g = Grid::new(32, p.ell, 1e-5).unwrap();
        let a: Vec<f64> = (0..32).map(|j| 0.05 + 0.001 * j as f64).collect();
        assert_eq!(motor_force(&a, &a, &g, &p).unwrap(), 0.0);
        assert!(matches!(
            motor_force(&a[..31], &a, &g, &p),
            Err(PdeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn motor_force_sine_density() {
        // integral of sin(2 pi xi/ell)/ell * (-U 2pi/ell) sin(2 pi xi/ell) = -pi U / ell
        let p = PhysicalParams::reference();
        let g = Grid::new(256, p.ell, 1e-5).unwrap();
        let sin_row: Vec<f64> = (0..256)
            .map(|j| (2.0 * PI * g.xi(j) / p.ell).sin() / p.ell)
            .collect();
        let cos_row: Vec<f64> = (0..256)
            .map(|j| (2.0 * PI * g.xi(j) / p.ell).cos() / p.ell)
            .collect();
        let zero = vec![0.0; 256];
        let f = motor_force(&sin_row, &zero, &g, &p).unwrap();
        assert_relative_eq!(f, -PI * p.u / p.ell, max_relative = 1e-3);
        assert!(motor_force(&cos_row, &zero, &g, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_row_equilibrium_is_a_fixed_point() {
        let (sys, _) = reference_system(Model::TwoRow, 64, 0.1);
        let s0 = sys.equilibrium_state();
        let s1 = sys.step(&s0).unwrap();
        for (a, b) in s0.rows.iter().flatten().zip(s1.rows.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s1.shifts[0].abs() < 1e-12);
        assert!(s1.velocities[0].abs() < 1e-12);
    }

    #[test]
    fn one_row_equilibrium_is_a_fixed_point() {
        let (sys, p) = reference_system(Model::OneRow, 64, 0.1);
        let s0 = sys.equilibrium_state();
        assert!(s0.shifts[0] != 0.0);
        let s1 = step_one_row(&s0, sys.grid(), &p, &rates_from_atp(&p).unwrap()).unwrap();
        assert!((s1.shifts[0] - s0.shifts[0]).abs() < 1e-12);
        assert!(s1.velocities[0].abs() < 1e-9);
    }

    #[test]
    fn constant_density_relaxes_cellwise() {
        let p = PhysicalParams::reference();
        let rates = rates_from_atp(&p).unwrap();
        let grid = Grid::new(32, p.ell, 1e-5).unwrap();
        let sys = PdeSystem::new(Model::TwoRow, grid, &p, &rates).unwrap();
        let c0 = 0.03;
        let state = GridState {
            rows: vec![vec![c0; 32], vec![c0; 32]],
            shifts: vec![0.0],
            velocities: vec![200.0],
            t: 0.0,
        };
        let next = sys.step(&state).unwrap();
        for j in 0..32 {
            let expected = c0 + grid.dt * (-rates.a0() * c0 + rates.omega_b(grid.xi(j)) / p.ell);
            assert_relative_eq!(next.rows[0][j], expected, max_relative = 1e-13);
            assert_relative_eq!(next.rows[1][j], expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn cfl_violation_reports_courant_number() {
        let (sys, _) = reference_system(Model::TwoRow, 64, 0.1);
        let mut s = sys.equilibrium_state();
        let v = 1.5 * sys.grid().dx / sys.grid().dt;
        s.velocities[0] = v;
        match sys.step(&s) {
            Err(PdeError::CflViolation { courant, .. }) => assert_relative_eq!(courant, 1.5),
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }

    #[test]
    fn reaction_step_bound_is_enforced() {
        let p = PhysicalParams::reference();
        let rates = rates_from_atp(&p).unwrap();
        let grid = Grid::new(16, p.ell, 1.0).unwrap();
        assert!(matches!(
            PdeSystem::new(Model::TwoRow, grid, &p, &rates),
            Err(PdeError::ReactionStepTooLarge(_))
        ));
    }

    #[test]
    fn n_row_needs_two_rows() {
        let p = PhysicalParams::reference();
        let rates = rates_from_atp(&p).unwrap();
        let grid = Grid::new(16, p.ell, 1e-5).unwrap();
        assert!(PdeSystem::new(Model::NRow(1), grid, &p, &rates).is_err());
    }

    #[test]
    fn n_row_equilibrium_is_a_fixed_point() {
        let (sys, _) = reference_system(Model::NRow(5), 40, 0.1);
        let s0 = sys.equilibrium_state();
        let s1 = sys.step(&s0).unwrap();
        assert!(s1.shifts.iter().all(|d| d.abs() < 1e-14));
        assert!(s1.velocities.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn n_row_with_two_rows_matches_two_row_model() {
        let (two, _) = reference_system(Model::TwoRow, 50, 0.1);
        let (nrow, _) = reference_system(Model::NRow(2), 50, 0.1);
        let mut a = two.perturbed_state(0.01).unwrap();
        let mut b = nrow.equilibrium_state();
        b.shifts = vec![0.01, -0.01];
        nrow.set_consistent_velocities(&mut b).unwrap();
        let mut sa = Vec::new();
        let mut sb = Vec::new();
        for _ in 0..3000 {
            two.advance(&mut a, &mut sa).unwrap();
            nrow.advance(&mut b, &mut sb).unwrap();
            assert!((a.shifts[0] - b.shifts[0]).abs() < 1e-10);
            assert_eq!(b.shifts[1], -b.shifts[0]);
        }
    }

    #[test]
    fn symmetric_two_row_data_stays_locked() {
        let (sys, _) = reference_system(Model::TwoRow, 64, 0.1);
        let mut s = sys.equilibrium_state();
        for (j, v) in s.rows[0].iter_mut().enumerate() {
            *v *= 1.0 + 0.2 * (j as f64 * 0.37).sin();
        }
        s.rows[1] = s.rows[0].clone();
        let mut scratch = Vec::new();
        for _ in 0..2000 {
            sys.advance(&mut s, &mut scratch).unwrap();
            assert!(s.shifts[0].abs() < 1e-12);
            assert_eq!(s.rows[0], s.rows[1]);
        }
    }

    #[test]
    fn random_shifts_sum_to_zero_and_are_seeded() {
        let (sys, _) = reference_system(Model::NRow(8), 32, 0.1);
        let a = sys.random_shift_state(7, 0.01).unwrap();
        let b = sys.random_shift_state(7, 0.01).unwrap();
        let c = sys.random_shift_state(8, 0.01).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.shifts, c.shifts);
        assert!(a.shifts.iter().sum::<f64>().abs() < 1e-15);
        assert!(a.shifts.iter().all(|d| d.abs() <= 0.02));
    }

    #[test]
    fn run_sample_counts_and_zero_steps() {
        let (sys, _) = reference_system(Model::TwoRow, 32, 0.1);
        let s = sys.perturbed_state(0.01).unwrap();
        let out = run(&sys, s.clone(), 25, &Recorder::every(1)).unwrap();
        assert_eq!(out.series.len(), 26);
        let out = run(&sys, s.clone(), 25, &Recorder::every(5)).unwrap();
        assert_eq!(out.series.len(), 6);
        let err = run(&sys, s, 0, &Recorder::default()).unwrap_err();
        assert_eq!(err.source, PdeError::ZeroSteps);
    }

    #[test]
    fn aborted_run_keeps_partial_output() {
        let (sys, _) = reference_system(Model::TwoRow, 32, 0.1);
        let mut s = sys.equilibrium_state();
        s.velocities[0] = 2.0 * sys.grid().dx / sys.grid().dt;
        let err = run(&sys, s, 10, &Recorder::default()).unwrap_err();
        assert!(err.partial.truncated);
        assert_eq!(err.partial.len(), 1);
        assert!(matches!(err.source, PdeError::CflViolation { .. }));
    }

    #[test]
    fn fourier_projection_recovers_modes() {
        let row: Vec<f64> = (0..64)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / 64.0;
                0.05 + 0.01 * a.cos() - 0.02 * (3.0 * a).sin()
            })
            .collect();
        let (m, _) = fourier_projection(&row, 0);
        let (c1, s1) = fourier_projection(&row, 1);
        let (c3, s3) = fourier_projection(&row, 3);
        assert_relative_eq!(m, 0.05, epsilon = 1e-15);
        assert_relative_eq!(c1, 0.01, epsilon = 1e-15);
        assert!(s1.abs() < 1e-15 && c3.abs() < 1e-15);
        assert_relative_eq!(s3, -0.02, epsilon = 1e-15);
    }
}
