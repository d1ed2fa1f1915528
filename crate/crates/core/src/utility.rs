//! Spliced CRRA utility with a soft consumption norm.
//!
//! Below the norm `x` the utility has curvature `gamma_below`, at or above it
//! `gamma_above`. Both branches are normalised so that utility is zero at
//! `c = x` and marginal utility equals `1 / x` there, which makes the splice
//! continuous in level and slope. Branch selection always uses the ratio
//! `c / x`, never `c` and `x` separately.

use crate::error::{Error, Result};

/// Preference parameters. `gamma_below == gamma_above` is accepted and
/// collapses the splice to a single CRRA branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceParams {
    pub gamma_below: f64,
    pub gamma_above: f64,
    pub rho: f64,
    pub g: f64,
}

impl PreferenceParams {
    pub fn new(gamma_below: f64, gamma_above: f64, rho: f64, g: f64) -> Result<Self> {
        let finite = [gamma_below, gamma_above, rho, g].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("non-finite preference parameter".into()));
        }
        if gamma_above <= 0.0 || gamma_below < gamma_above {
            return Err(Error::InvalidConfig(format!(
                "need gamma_below >= gamma_above > 0, got {gamma_below} and {gamma_above}"
            )));
        }
        if gamma_below == 1.0 || gamma_above == 1.0 {
            return Err(Error::InvalidConfig("unit curvature has no power form".into()));
        }
        if rho <= 0.0 {
            return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
        }
        if g < 0.0 {
            return Err(Error::InvalidConfig(format!("norm growth must be >= 0, got {g}")));
        }
        Ok(Self { gamma_below, gamma_above, rho, g })
    }

    /// Calibration used throughout the examples and the CLI defaults.
    pub fn table1() -> Self {
        Self { gamma_below: 6.0, gamma_above: 2.0, rho: 0.04, g: 0.019 }
    }

    /// Same preferences with both branches set to `gamma`.
    pub fn single_branch(gamma: f64, rho: f64, g: f64) -> Result<Self> {
        Self::new(gamma, gamma, rho, g)
    }

    pub fn is_degenerate(&self) -> bool {
        self.gamma_below == self.gamma_above
    }

    /// Curvature of the branch that applies at the ratio `c / x`.
    #[inline]
    pub fn branch_gamma(&self, ratio: f64) -> f64 {
        if ratio < 1.0 {
            self.gamma_below
        } else {
            self.gamma_above
        }
    }
}

/// Two-asset market: riskless rate `r`, equity premium `pi`, equity volatility `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub r: f64,
    pub pi: f64,
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(r: f64, pi: f64, sigma: f64) -> Result<Self> {
        if !(r.is_finite() && pi.is_finite() && sigma.is_finite()) {
            return Err(Error::InvalidConfig("non-finite market parameter".into()));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
        }
        if pi < 0.0 {
            return Err(Error::InvalidConfig(format!("equity premium must be >= 0, got {pi}")));
        }
        Ok(Self { r, pi, sigma })
    }

    pub fn table1() -> Self {
        Self { r: 0.025, pi: 0.048, sigma: 0.1789 }
    }

    /// Expected equity return.
    pub fn mu(&self) -> f64 {
        self.r + self.pi
    }

    /// Squared market price of risk, `(pi / sigma)^2`.
    pub fn sharpe_sq(&self) -> f64 {
        let s = self.pi / self.sigma;
        s * s
    }
}

fn check_positive(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value })
    }
}

/// `(q^(1-gamma) - 1) / (1 - gamma)`, evaluated without cancellation near `q = 1`.
#[inline]
pub(crate) fn crra_branch(q: f64, gamma: f64) -> f64 {
    let a = 1.0 - gamma;
    (a * q.ln()).exp_m1() / a
}

/// Utility of consuming `c` against the norm `x`.
pub fn utility(c: f64, x: f64, prefs: &PreferenceParams) -> Result<f64> {
    check_positive("consumption", c)?;
    check_positive("norm", x)?;
    let q = c / x;
    Ok(crra_branch(q, prefs.branch_gamma(q)))
}

/// `u_c(c, x) = (c/x)^(-gamma_j) / x`.
pub fn marginal_utility(c: f64, x: f64, prefs: &PreferenceParams) -> Result<f64> {
    check_positive("consumption", c)?;
    check_positive("norm", x)?;
    let q = c / x;
    Ok(q.powf(-prefs.branch_gamma(q)) / x)
}

/// Local relative risk aversion `-c u_cc / u_c`.
///
/// Piecewise constant: `gamma_below` for `c < x`, `gamma_above` for `c >= x`.
pub fn curvature(c: f64, x: f64, prefs: &PreferenceParams) -> Result<f64> {
    check_positive("consumption", c)?;
    check_positive("norm", x)?;
    Ok(prefs.branch_gamma(c / x))
}

/// Consumption level at which marginal utility equals `z`.
pub fn inverse_marginal_utility(z: f64, x: f64, prefs: &PreferenceParams) -> Result<f64> {
    check_positive("marginal utility", z)?;
    check_positive("norm", x)?;
    Ok(inverse_mu_unchecked(z, x, prefs))
}

#[inline]
pub(crate) fn inverse_mu_unchecked(z: f64, x: f64, prefs: &PreferenceParams) -> f64 {
    let zx = z * x;
    let gamma = if zx >= 1.0 { prefs.gamma_below } else { prefs.gamma_above };
    x * zx.powf(-1.0 / gamma)
}

/// Convex conjugate `sup_c { u(c, x) - z c }`.
pub fn convex_dual(z: f64, x: f64, prefs: &PreferenceParams) -> Result<f64> {
    let c = inverse_marginal_utility(z, x, prefs)?;
    Ok(utility(c, x, prefs)? - z * c)
}

/// Minimum initial wealth that funds the norm forever from the riskless asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility {
    Bounded(f64),
    /// `r <= g`: no finite wealth suffices.
    Unbounded,
}

pub fn feasibility_bound(x0: f64, market: &MarketParams, prefs: &PreferenceParams) -> Feasibility {
    let spread = market.r - prefs.g;
    if spread <= 0.0 {
        Feasibility::Unbounded
    } else {
        Feasibility::Bounded(x0 / spread)
    }
}
