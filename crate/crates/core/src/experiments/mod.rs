//! Experiment setups, analysis helpers, and scenario runners.

pub mod analysis;
pub mod filter;
pub mod scenarios;
pub mod setups;

pub use analysis::*;
pub use filter::*;
pub use scenarios::*;
pub use setups::*;
