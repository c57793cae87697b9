pub mod catchup;
pub mod convex;
pub mod equilibrium;
pub mod poincare;
pub mod scenario;
pub mod validation;
