//! Simulation and bifurcation analysis of coupled motor-density /
//! filament-sliding models.
//!
//! * [`hopf`]: onset, eigenvalues, amplitude law and centre-manifold checks.
//! * [`measure`]: amplitude/frequency estimation, sweeps and clustering.
//! * [`model`]: parameters, transition rates and closed-form constants.
//! * [`pde`]: upwind discretisation of the one-, two- and N-row systems.
//! * [`spectral`]: Fourier-reduced ODE hierarchy and RK4 integration.
//! * [`series`]: recorded time series and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod hopf;
pub mod measure;
pub mod model;
pub mod pde;
pub mod series;
pub mod spectral;

pub use hopf::{BifurcationReport, HopfError};
pub use model::{DerivedConstants, ModelError, PhysicalParams, RateFamily, TransitionRates};
pub use pde::{Grid, GridState, Model, PdeError, PdeSystem, Recorder};
pub use series::TimeSeries;
pub use spectral::{FourierState, SpectralError};
