//! Joint admission-rate control and probabilistic cache placement in cache networks.
//!
//! The crate evaluates link and cache constraints of a cache network, solves the
//! utility-maximization problem with a Lagrangian barrier method, a convex
//! relaxation and two greedy baselines, and realizes fractional placements as
//! exact-capacity random cache contents.

pub mod baselines;
pub mod boxsolve;
pub mod convexrelax;
pub mod error;
pub mod harness;
pub mod lbsb;
pub mod model;
pub mod placement;
mod subgradient;
pub mod utility;

pub use error::{Error, Result};
pub use model::{Graph, Instance, Request, Strategy};
pub use utility::{UtilityFunction, UtilityProfile};
