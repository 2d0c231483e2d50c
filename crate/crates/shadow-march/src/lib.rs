pub mod dynamics;
pub mod error;
pub mod integrators;
pub mod linalg;
pub mod quadrature;
pub mod shadowing;
