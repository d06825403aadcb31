pub mod energy;
pub mod error;
pub mod linalg;
pub mod operators;
pub mod registry;
pub mod resolvent;
pub mod semigroup;
pub mod sim;
pub mod spectral;
pub mod threshold;
