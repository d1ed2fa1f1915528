//! Reduced HJB equation at a fixed norm level.
//!
//! With `V_ww` eliminated algebraically, the equation becomes a first-order
//! system in `(V, V_w)`:
//!
//! ```text
//! N      = u(c*, x) - rho V + V_w [(r - g) w - c*],   c* = (u_c)^-1(V_w)
//! V_ww   = (pi/sigma)^2 V_w^2 / (2 N)
//! omega* = -V_w pi / (sigma^2 V_ww w)
//! ```
//!
//! A concave solution needs `N < 0`. The system is integrated forward in
//! `s = ln w`; see [`shoot`] for how the saddle path is tracked.

mod shoot;
mod table;

pub use shoot::{divergence_wealth, shoot, shoot_with_report, SolveReport};
pub use table::{elasticity_profile, policy_at, ElasticityPoint, PolicyTable};

use crate::error::{Error, Result};
use crate::merton::{merton_consumption_ratio, merton_consumption_ratio_g_adjusted, merton_share};
use crate::utility::{crra_branch, inverse_mu_unchecked, MarketParams, PreferenceParams};

/// Which consumption ratio the far field is matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Keynes-Ramsey ratio without the norm-growth correction.
    Eq3,
    /// Ratio of the single-branch solution of the reduced equation.
    #[default]
    GAdjusted,
}

impl BoundaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryMode::Eq3 => "eq3",
            BoundaryMode::GAdjusted => "g-adjusted",
        }
    }

    /// Far-field consumption ratio for curvature `gamma`.
    pub fn target_ratio(self, gamma: f64, market: &MarketParams, prefs: &PreferenceParams) -> Result<f64> {
        match self {
            BoundaryMode::GAdjusted => merton_consumption_ratio_g_adjusted(gamma, market, prefs),
            BoundaryMode::Eq3 => {
                let eta = merton_consumption_ratio(gamma, market, prefs);
                if eta > 0.0 {
                    Ok(eta)
                } else {
                    Err(Error::IllPosed(format!("consumption-wealth ratio {eta} <= 0 for gamma = {gamma}")))
                }
            }
        }
    }
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq3" => Ok(BoundaryMode::Eq3),
            "g-adjusted" => Ok(BoundaryMode::GAdjusted),
            other => Err(Error::InvalidConfig(format!("unknown boundary mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub w_min: f64,
    pub w_max: f64,
    /// Norm level the table is solved at.
    pub x: f64,
    pub grid_size: usize,
    /// Relative tolerance on `V_w(w_max)` against the far-field target.
    pub shoot_tolerance: f64,
    /// After divergence at `w_d`, the solution is kept up to `stitch_retreat * w_d`.
    pub stitch_retreat: f64,
    pub boundary_mode: BoundaryMode,
    /// Relative tolerance of the adaptive integrator.
    pub rtol: f64,
    /// Two bracketing trajectories count as the same path while their
    /// `V_w` and `omega` agree to this relative tolerance.
    pub agreement_tolerance: f64,
    /// Trajectories are followed to `w_max * extension_factor` to see which way they leave the saddle.
    pub extension_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            w_min: 10.0,
            w_max: 4000.0,
            x: 3.0,
            grid_size: 1000,
            shoot_tolerance: 0.05,
            stitch_retreat: 0.9,
            boundary_mode: BoundaryMode::GAdjusted,
            rtol: 1e-10,
            agreement_tolerance: 1e-9,
            extension_factor: 1e8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.w_min > 0.0 && self.w_min < self.w_max && self.w_max.is_finite()) {
            return bad(format!("need 0 < w_min < w_max, got {} and {}", self.w_min, self.w_max));
        }
        if !(self.x > 0.0 && self.x.is_finite()) {
            return bad(format!("norm level must be positive, got {}", self.x));
        }
        if self.grid_size < 2 {
            return bad(format!("grid_size must be >= 2, got {}", self.grid_size));
        }
        if !(self.shoot_tolerance > 0.0) {
            return bad(format!("shoot_tolerance must be positive, got {}", self.shoot_tolerance));
        }
        if !(self.stitch_retreat > 0.0 && self.stitch_retreat < 1.0) {
            return bad(format!("stitch_retreat must lie in (0, 1), got {}", self.stitch_retreat));
        }
        if !(self.rtol > 0.0 && self.agreement_tolerance > 0.0 && self.extension_factor >= 1.0) {
            return bad("integrator tolerances must be positive and extension_factor >= 1".into());
        }
        Ok(())
    }

    /// Log-spaced wealth nodes from `w_min` to `w_max` inclusive.
    pub fn grid(&self) -> Vec<f64> {
        let (a, b) = (self.w_min.ln(), self.w_max.ln());
        let n = self.grid_size;
        (0..n)
            .map(|i| match i {
                0 => self.w_min,
                _ if i == n - 1 => self.w_max,
                _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
            })
            .collect()
    }
}

/// Model constants needed by the right-hand side, precomputed once.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Model {
    pub market: MarketParams,
    pub prefs: PreferenceParams,
    pub x: f64,
    sharpe_sq: f64,
    r_net: f64,
}

impl Model {
    pub fn new(market: MarketParams, prefs: PreferenceParams, x: f64) -> Self {
        Self { market, prefs, x, sharpe_sq: market.sharpe_sq(), r_net: market.r - prefs.g }
    }

    #[inline]
    pub fn consumption(&self, v_w: f64) -> f64 {
        inverse_mu_unchecked(v_w, self.x, &self.prefs)
    }

    #[inline]
    fn utility(&self, c: f64) -> f64 {
        let q = c / self.x;
        crra_branch(q, self.prefs.branch_gamma(q))
    }

    /// `V_ww` implied by the reduced equation.
    #[inline]
    pub fn second_derivative(&self, w: f64, v: f64, v_w: f64) -> Result<f64> {
        if !(v_w > 0.0) || !v_w.is_finite() || !v.is_finite() {
            return Err(Error::Domain { what: "V_w", value: v_w });
        }
        let c = self.consumption(v_w);
        let n = self.utility(c) - self.prefs.rho * v + v_w * (self.r_net * w - c);
        if !(n < 0.0) {
            return Err(Error::ConvexityViolation { w });
        }
        Ok(0.5 * self.sharpe_sq * v_w * v_w / n)
    }

    #[inline]
    pub fn equity_share(&self, w: f64, v_w: f64, v_ww: f64) -> f64 {
        -v_w * self.market.pi / (self.market.sigma * self.market.sigma * v_ww * w)
    }

    /// Derivatives of `(V, V_w)` with respect to `s = ln w`.
    #[inline]
    pub fn rhs_log(&self, s: f64, y: &[f64; 2]) -> Result<[f64; 2]> {
        let w = s.exp();
        let v_ww = self.second_derivative(w, y[0], y[1])?;
        Ok([w * y[1], w * v_ww])
    }
}

/// Right-hand side of the reduced equation: `(dV/dw, dV_w/dw)`.
pub fn ode_right_hand_side(
    w: f64,
    v: f64,
    v_w: f64,
    x: f64,
    market: &MarketParams,
    prefs: &PreferenceParams,
) -> Result<(f64, f64)> {
    if !(w > 0.0) {
        return Err(Error::Domain { what: "wealth", value: w });
    }
    if !(x > 0.0) {
        return Err(Error::Domain { what: "norm", value: x });
    }
    let v_ww = Model::new(*market, *prefs, x).second_derivative(w, v, v_w)?;
    Ok((v_w, v_ww))
}

/// Boundary state `(V, V_w)` at `w_min` implied by guesses of the equity share and
/// the consumption-wealth ratio there.
pub fn boundary_state_from_guess(
    omega_min: f64,
    eta_min: f64,
    w_min: f64,
    x: f64,
    market: &MarketParams,
    prefs: &PreferenceParams,
) -> Result<(f64, f64)> {
    for (what, value) in [("equity share", omega_min), ("consumption ratio", eta_min), ("wealth", w_min), ("norm", x)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Domain { what, value });
        }
    }
    Ok(boundary_state(omega_min, eta_min, w_min, x, market, prefs))
}

#[inline]
pub(crate) fn boundary_state(
    omega: f64,
    eta: f64,
    w: f64,
    x: f64,
    market: &MarketParams,
    prefs: &PreferenceParams,
) -> (f64, f64) {
    let c = eta * w;
    let q = c / x;
    let gamma = prefs.branch_gamma(q);
    let v_w = q.powf(-gamma) / x;
    let u = crra_branch(q, gamma);
    let v = (u + v_w * ((market.r + 0.5 * omega * market.pi - prefs.g) * w - c)) / prefs.rho;
    (v, v_w)
}

/// Branch shares `(omega_below, omega_above)`.
pub(crate) fn branch_shares(market: &MarketParams, prefs: &PreferenceParams) -> (f64, f64) {
    (merton_share(prefs.gamma_below, market), merton_share(prefs.gamma_above, market))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Closed-form single-branch value `eta^-gamma (w/x)^(1-gamma) / (1-gamma) - 1/(rho (1-gamma))`
    /// and its first two derivatives, by hand.
    fn closed_form(gamma: f64, eta: f64, w: f64, x: f64, rho: f64) -> (f64, f64, f64) {
        let q = w / x;
        let v = eta.powf(-gamma) * q.powf(1.0 - gamma) / (1.0 - gamma) - 1.0 / (rho * (1.0 - gamma));
        let v_w = eta.powf(-gamma) * q.powf(-gamma) / x;
        let v_ww = -gamma * eta.powf(-gamma) * q.powf(-gamma - 1.0) / (x * x);
        (v, v_w, v_ww)
    }

    #[test]
    fn rhs_reproduces_closed_form_on_each_branch() {
        let m = MarketParams::table1();
        let p = PreferenceParams::table1();
        let x = 3.0;
        // Above-norm branch: c = eta w >= x requires w >= x / eta.
        let eta2 = merton_consumption_ratio_g_adjusted(2.0, &m, &p).unwrap();
        for w in [200.0, 1000.0, 4000.0] {
            let (v, v_w, v_ww) = closed_form(2.0, eta2, w, x, p.rho);
            let (d1, d2) = ode_right_hand_side(w, v, v_w, x, &m, &p).unwrap();
            assert_eq!(d1, v_w);
            assert_relative_eq!(d2, v_ww, max_relative = 1e-8);
        }
        let eta1 = merton_consumption_ratio_g_adjusted(6.0, &m, &p).unwrap();
        for w in [10.0, 50.0, 150.0] {
            let (v, v_w, v_ww) = closed_form(6.0, eta1, w, x, p.rho);
            let (_, d2) = ode_right_hand_side(w, v, v_w, x, &m, &p).unwrap();
            assert_relative_eq!(d2, v_ww, max_relative = 1e-8);
        }
    }

    #[test]
    fn rhs_rejects_bad_states() {
        let m = MarketParams::table1();
        let p = PreferenceParams::table1();
        assert!(ode_right_hand_side(10.0, -1.0, 0.0, 3.0, &m, &p).is_err());
        assert!(ode_right_hand_side(10.0, -1.0, -0.3, 3.0, &m, &p).is_err());
        // A very low value makes the denominator nonnegative.
        assert!(matches!(
            ode_right_hand_side(10.0, -1e6, 0.1, 3.0, &m, &p),
            Err(Error::ConvexityViolation { .. })
        ));
    }

    #[test]
    fn boundary_state_matches_closed_form() {
        let m = MarketParams::table1();
        let p = PreferenceParams::table1();
        let eta1 = merton_consumption_ratio_g_adjusted(6.0, &m, &p).unwrap();
        let omega1 = merton_share(6.0, &m);
        let (v, v_w) = boundary_state_from_guess(omega1, eta1, 10.0, 3.0, &m, &p).unwrap();
        let (cv, cv_w, _) = closed_form(6.0, eta1, 10.0, 3.0, p.rho);
        assert!((v - cv).abs() <= 1e-10 * cv.abs(), "{v} {cv}");
        assert!((v_w - cv_w).abs() <= 1e-10 * cv_w);
    }

    #[test]
    fn boundary_state_rejects_zero_ratio() {
        let m = MarketParams::table1();
        let p = PreferenceParams::table1();
        assert!(boundary_state_from_guess(0.25, 0.0, 10.0, 3.0, &m, &p).is_err());
        assert!(boundary_state_from_guess(0.0, 0.02, 10.0, 3.0, &m, &p).is_err());
    }

    #[test]
    fn config_validation_and_grid() {
        let c = SolverConfig::default();
        c.validate().unwrap();
        let g = c.grid();
        assert_eq!(g.len(), 1000);
        assert_eq!((g[0], g[999]), (10.0, 4000.0));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let bad = SolverConfig { w_min: 5000.0, ..c };
        assert!(bad.validate().is_err());
        assert!(SolverConfig { grid_size: 1, ..c }.validate().is_err());
        assert_eq!("eq3".parse::<BoundaryMode>().unwrap(), BoundaryMode::Eq3);
        assert!("other".parse::<BoundaryMode>().is_err());
    }
}
