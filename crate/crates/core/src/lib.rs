//! Capacity-constrained congestion games: Hedge-style learning dynamics,
//! dual price updates on resource capacities, constraint-violation and
//! delay metrics, analytic constants and bounds, a routing-game generator,
//! a constrained potential-minimization oracle, and an experiment harness.

pub mod dynamics;
pub mod error;
pub mod game;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod pricing;
pub mod routing;
pub mod theory;

pub use error::{Error, Result};
pub use game::{AgentSpec, Bundle, CongestionGame, LossPolynomial, PopulationProfile, ResourceId};
pub use pricing::{PriceVector, PricingConfig};
