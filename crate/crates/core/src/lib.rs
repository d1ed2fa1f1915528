//! Consumption and portfolio choice under a soft consumption norm.
//!
//! The investor has spliced CRRA utility: curvature `gamma_below` when
//! consumption is under the norm `x`, `gamma_above` at or above it. The crate
//! solves the reduced HJB equation for the optimal policies, cross-checks the
//! solution against a closed-form dual value function, simulates monthly
//! wealth paths under optimal and rule-of-thumb policies, and prices the
//! welfare cost of those rules in units of initial wealth.

pub mod dual;
pub mod error;
pub mod hjb;
pub mod merton;
pub mod numerics;
pub mod sim;
pub mod utility;
pub mod welfare;

pub use error::{Error, Result};
pub use hjb::{BoundaryMode, PolicyTable, SolveReport, SolverConfig};
pub use utility::{MarketParams, PreferenceParams};
