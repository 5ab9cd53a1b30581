//! Time evolution, the mild-form semigroup, the local fixed-point scheme and
//! decay fits.

mod config;
mod fit;
mod iteration;
mod mild;
mod stepper;

pub use config::{initial_field, phi_profile, DomainChoice, InitialChoice, SimConfig, PRESETS};
pub use fit::{fit_decay_rate, fit_log_linear, SeriesField, MIN_FIT_POINTS};
pub use iteration::local_iteration;
pub use mild::{damped_transport_apply, MildEvaluation};
pub use stepper::{conserve_moments, exponential_update, simulate, Simulation, TimeSeries};
