//! Approximate counting and almost-uniform sampling of proper colourings of
//! hypergraphs in the local lemma regime.

pub mod cli;
pub mod counter;
pub mod coupling;
pub mod graphtools;
pub mod instance;
pub mod lll;
pub mod lp;
pub mod oracle;
pub mod params;
pub mod sampler;

pub use instance::{Colour, FullColouring, Instance, InstanceError, PartialColouring};
