//! Numerical kernels for the angular-cutoff hard-potential Boltzmann equation
//! near a global Maxwellian, in bounded domains with diffuse walls.

pub mod boundary;
pub mod collision;
pub mod error;
pub mod field;
pub mod geometry;
pub mod kinematics;
pub mod norms;
pub mod quadrature;
pub mod solver;
pub mod verify;

pub use error::KineticError;
pub use kinematics::Vec3;
