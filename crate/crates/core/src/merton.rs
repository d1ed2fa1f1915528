//! Closed-form Merton benchmarks for a single CRRA branch.

use crate::error::{Error, Result};
use crate::utility::{MarketParams, PreferenceParams};

/// Optimal equity share `pi / (gamma sigma^2)`. No leverage cap is imposed.
pub fn merton_share(gamma: f64, market: &MarketParams) -> f64 {
    debug_assert!(gamma > 0.0);
    market.pi / (gamma * market.sigma * market.sigma)
}

/// Keynes-Ramsey consumption-wealth ratio for a constant norm:
/// `rho/gamma + (1 - 1/gamma)(r + omega pi / 2)`.
pub fn merton_consumption_ratio(gamma: f64, market: &MarketParams, prefs: &PreferenceParams) -> f64 {
    let omega = merton_share(gamma, market);
    prefs.rho / gamma + (1.0 - 1.0 / gamma) * (market.r + 0.5 * omega * market.pi)
}

/// Consumption-wealth ratio of the single-branch solution when the norm grows at `g`.
///
/// Substituting `V = A (w/x)^(1-gamma) / (1-gamma) + B` into the reduced HJB
/// equation gives `rho/gamma + (1 - 1/gamma)(r + omega pi / 2 - g)`.
pub fn merton_consumption_ratio_g_adjusted(
    gamma: f64,
    market: &MarketParams,
    prefs: &PreferenceParams,
) -> Result<f64> {
    let omega = merton_share(gamma, market);
    let eta = prefs.rho / gamma + (1.0 - 1.0 / gamma) * (market.r + 0.5 * omega * market.pi - prefs.g);
    if eta > 0.0 && eta.is_finite() {
        Ok(eta)
    } else {
        Err(Error::IllPosed(format!(
            "consumption-wealth ratio {eta} <= 0 for gamma = {gamma}"
        )))
    }
}

/// Long-run expected wealth growth `r + omega_2 pi - eta_2` of the low-curvature branch.
pub fn asymptotic_growth_rate(market: &MarketParams, prefs: &PreferenceParams) -> f64 {
    let gamma = prefs.gamma_above;
    market.r + merton_share(gamma, market) * market.pi - merton_consumption_ratio(gamma, market, prefs)
}

/// Merton policy for one curvature level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertonSolution {
    pub omega: f64,
    pub eta: f64,
    pub eta_g_adjusted: f64,
}

impl MertonSolution {
    pub fn new(gamma: f64, market: &MarketParams, prefs: &PreferenceParams) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Domain { what: "curvature", value: gamma });
        }
        Ok(Self {
            omega: merton_share(gamma, market),
            eta: merton_consumption_ratio(gamma, market, prefs),
            eta_g_adjusted: merton_consumption_ratio_g_adjusted(gamma, market, prefs)?,
        })
    }
}
