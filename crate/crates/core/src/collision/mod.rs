//! Velocity discretization and quadrature of the collision operator.

mod grid;
mod linear;
mod operator;
mod sphere;

pub use grid::{QuadStencil, Stencil, VelocityGrid};
pub use linear::*;
pub use operator::{CollisionOperator, CollisionParts};
pub use sphere::SphereQuadrature;
