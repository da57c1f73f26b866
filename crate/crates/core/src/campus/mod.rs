//! The simulated campus: event vocabulary and the world that drives it.

mod demo;
pub mod generate;
mod events;
mod world;

pub use demo::*;
pub use events::*;
pub use world::*;

#[cfg(test)]
mod tests;
