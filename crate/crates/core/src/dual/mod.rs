//! Closed-form dual value function, used as an independent check on the ODE solver.
//!
//! The dual state follows `dY = Y (theta dB + drift dt)` with
//! `drift = rho - (r - g)`, so `ln Y_s` is normal. The conjugate utility on
//! each branch is `u~(z) = A (z x)^p + B` with `p = 1 - 1/gamma`,
//! `A = gamma / (1 - gamma)` and `B = 1 / (gamma - 1)`, the below-norm branch
//! applying where `z x >= 1`. Every expectation therefore reduces to partial
//! moments of lognormal laws, and
//! `J(z) = int_0^inf e^(-rho s) E[u~(Y_s) | Y_0 = z] ds`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::PolicyTable;
use crate::numerics::norm_cdf;
use crate::numerics::quad::{integrate, QuadratureSpec};
use crate::utility::{convex_dual, MarketParams, PreferenceParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualProcessParams {
    /// Market price of risk `pi / sigma`.
    pub theta: f64,
    /// `rho - (r - g)`; the norm growth enters exactly as in the reduced HJB equation.
    pub drift: f64,
    pub rho: f64,
    pub gamma_below: f64,
    pub gamma_above: f64,
}

impl DualProcessParams {
    pub fn new(market: &MarketParams, prefs: &PreferenceParams) -> Self {
        Self {
            theta: market.pi.abs() / market.sigma,
            drift: prefs.rho - (market.r - prefs.g),
            rho: prefs.rho,
            gamma_below: prefs.gamma_below,
            gamma_above: prefs.gamma_above,
        }
    }

    fn prefs(&self) -> PreferenceParams {
        PreferenceParams { gamma_below: self.gamma_below, gamma_above: self.gamma_above, rho: self.rho, g: 0.0 }
    }

    /// Law of `ln Y_s` given `Y_0 = z0`.
    pub fn law(&self, s: f64, z0: f64) -> LognormalLaw {
        let th2 = self.theta * self.theta;
        LognormalLaw { mu_bar: z0.ln() + (self.drift - 0.5 * th2) * s, sigma_bar_sq: th2 * s }
    }

    /// Growth rate of `E[Y_s^p]` for the branch with curvature `gamma`.
    pub fn branch_growth(&self, gamma: f64) -> f64 {
        let p = 1.0 - 1.0 / gamma;
        p * self.drift + 0.5 * p * (p - 1.0) * self.theta * self.theta
    }

    fn branches(&self) -> [Branch; 2] {
        [Branch::new(self.gamma_below, true), Branch::new(self.gamma_above, false)]
    }
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    p: f64,
    a: f64,
    b: f64,
    gamma: f64,
    /// Applies where `Y x >= 1`.
    upper: bool,
}

impl Branch {
    fn new(gamma: f64, upper: bool) -> Self {
        Self { p: 1.0 - 1.0 / gamma, a: gamma / (1.0 - gamma), b: 1.0 / (gamma - 1.0), gamma, upper }
    }
}

/// Normal law of `ln Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalLaw {
    pub mu_bar: f64,
    pub sigma_bar_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

impl Side {
    fn flip(self) -> Self {
        match self {
            Side::Above => Side::Below,
            Side::Below => Side::Above,
        }
    }
}

impl LognormalLaw {
    pub fn mean(&self) -> f64 {
        (self.mu_bar + 0.5 * self.sigma_bar_sq).exp()
    }

    /// Law of `Y^p`.
    pub fn power(&self, p: f64) -> Self {
        Self { mu_bar: p * self.mu_bar, sigma_bar_sq: p * p * self.sigma_bar_sq }
    }

    /// `P(Y > h)` or `P(Y < h)`.
    pub fn probability(&self, h: f64, side: Side) -> f64 {
        let l = h.ln();
        if self.sigma_bar_sq == 0.0 {
            let above = self.mu_bar > l;
            return if above == (side == Side::Above) { 1.0 } else { 0.0 };
        }
        let d = (self.mu_bar - l) / self.sigma_bar_sq.sqrt();
        match side {
            Side::Above => norm_cdf(d),
            Side::Below => norm_cdf(-d),
        }
    }

    /// `E[Y 1{Y > h}]` or `E[Y 1{Y < h}]`.
    pub fn partial_expectation(&self, h: f64, side: Side) -> f64 {
        let l = h.ln();
        if self.sigma_bar_sq == 0.0 {
            return self.probability(h, side) * self.mu_bar.exp();
        }
        let d = (self.mu_bar + self.sigma_bar_sq - l) / self.sigma_bar_sq.sqrt();
        let phi = match side {
            Side::Above => norm_cdf(d),
            Side::Below => norm_cdf(-d),
        };
        self.mean() * phi
    }
}

/// `E[Y | Y > h]` or `E[Y | Y < h]`.
pub fn truncated_lognormal_mean(law: &LognormalLaw, h: f64, side: Side) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain { what: "threshold", value: h });
    }
    if !(law.sigma_bar_sq >= 0.0) {
        return Err(Error::Domain { what: "log-variance", value: law.sigma_bar_sq });
    }
    let prob = law.probability(h, side);
    if prob <= 0.0 {
        return Err(Error::DegenerateCondition);
    }
    Ok(law.partial_expectation(h, side) / prob)
}

/// `E[Z 1{Y on side of h}]` for `Z = Y^p`, any nonzero `p`.
fn power_partial(law: &LognormalLaw, p: f64, h: f64, side: Side) -> f64 {
    let zl = law.power(p);
    // For p < 0 the map y -> y^p reverses order.
    let side = if p > 0.0 { side } else { side.flip() };
    zl.partial_expectation(h.powf(p), side)
}

/// Per-branch probabilities `(P(Y_s x >= 1), P(Y_s x < 1))`.
pub fn branch_probabilities(s: f64, z0: f64, x: f64, params: &DualProcessParams) -> (f64, f64) {
    let law = params.law(s, z0);
    let h = 1.0 / x;
    (law.probability(h, Side::Above), law.probability(h, Side::Below))
}

/// `E[u~(Y_s, x) | Y_0 = z0]`.
pub fn dual_integrand(s: f64, z0: f64, x: f64, params: &DualProcessParams) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain { what: "horizon", value: s });
    }
    if !(z0 > 0.0) {
        return Err(Error::Domain { what: "dual state", value: z0 });
    }
    if !(x > 0.0) {
        return Err(Error::Domain { what: "norm", value: x });
    }
    if s == 0.0 {
        return convex_dual(z0, x, &params.prefs());
    }
    Ok(integrand_unchecked(s, z0, x, params))
}

fn integrand_unchecked(s: f64, z0: f64, x: f64, params: &DualProcessParams) -> f64 {
    let law = params.law(s, z0);
    let h = 1.0 / x;
    params
        .branches()
        .iter()
        .map(|br| {
            let side = if br.upper { Side::Above } else { Side::Below };
            br.a * x.powf(br.p) * power_partial(&law, br.p, h, side) + br.b * law.probability(h, side)
        })
        .sum()
}

fn check_convergent(params: &DualProcessParams) -> Result<()> {
    for br in params.branches() {
        let k = params.branch_growth(br.gamma);
        if !(params.rho > k) {
            return Err(Error::IllPosed(format!(
                "dual integral diverges: branch growth {k} >= rho {} for gamma = {}",
                params.rho, br.gamma
            )));
        }
    }
    Ok(())
}

/// Horizon beyond which the integral's tail is below `eps` times a magnitude bound.
fn truncation_horizon(z0: f64, x: f64, params: &DualProcessParams, eps: f64) -> f64 {
    let terms: Vec<(f64, f64)> = params
        .branches()
        .iter()
        .map(|br| (br.a.abs() * (z0 * x).powf(br.p), params.rho - params.branch_growth(br.gamma)))
        .chain(params.branches().iter().map(|br| (br.b.abs(), params.rho)))
        .collect();
    let scale: f64 = terms.iter().map(|(c, r)| c / r).sum();
    // Each tail term c e^(-r S) / r is held below eps * scale / 4.
    terms
        .iter()
        .map(|(c, r)| (4.0 * c / (r * eps * scale)).ln().max(0.0) / r)
        .fold(1.0, f64::max)
}

/// `J(z0)`: the stationary dual value function.
pub fn dual_value(z0: f64, x: f64, params: &DualProcessParams, quad: &QuadratureSpec) -> Result<f64> {
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(Error::Domain { what: "dual state", value: z0 });
    }
    if !(x > 0.0) {
        return Err(Error::Domain { what: "norm", value: x });
    }
    check_convergent(params)?;
    let big_s = truncation_horizon(z0, x, params, 0.1 * quad.rel_tol.max(1e-15));
    let breaks: Vec<f64> = std::iter::once(0.0)
        .chain([1e-4, 1e-3, 1e-2, 0.03, 0.1, 0.3, 1.0].iter().map(|f| f * big_s))
        .collect();
    let u0 = convex_dual(z0, x, &params.prefs())?;
    let rho = params.rho;
    integrate(
        |s| {
            let v = if s == 0.0 { u0 } else { integrand_unchecked(s, z0, x, params) };
            (-rho * s).exp() * v
        },
        &breaks,
        quad,
    )
}

/// Wealth `w = -J'(z0)` by central difference with step `1e-4 z0`.
pub fn wealth_from_dual(z0: f64, x: f64, params: &DualProcessParams, quad: &QuadratureSpec) -> Result<f64> {
    let h = 1e-4 * z0;
    let up = dual_value(z0 + h, x, params, quad)?;
    let dn = dual_value(z0 - h, x, params, quad)?;
    Ok(-(up - dn) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrosscheckNode {
    pub w: f64,
    /// `V_w(w)` from the table.
    pub z: f64,
    pub w_dual: f64,
    pub rel_err: f64,
    /// `J(z) + w z`.
    pub value_dual: f64,
    pub value_table: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosscheckReport {
    pub nodes: Vec<CrosscheckNode>,
    pub median_rel_err: f64,
    pub max_rel_err: f64,
}

/// Compares `wealth_from_dual(V_w(w))` with `w` on up to `samples` table nodes
/// whose log-position in the grid lies in `[0.2, 0.8]`.
pub fn crosscheck(table: &PolicyTable, samples: usize, quad: &QuadratureSpec) -> Result<CrosscheckReport> {
    let params = DualProcessParams::new(&table.market, &table.prefs);
    let n = table.len();
    let (a, b) = (table.w_min().ln(), table.w_max().ln());
    let mid: Vec<usize> = (0..n)
        .filter(|&i| {
            let pos = (table.w[i].ln() - a) / (b - a);
            (0.2..=0.8).contains(&pos)
        })
        .collect();
    if mid.is_empty() {
        return Err(Error::InvalidConfig("no mid-grid nodes to compare".into()));
    }
    let stride = mid.len().div_ceil(samples.max(1));
    let picked: Vec<usize> = mid.iter().copied().step_by(stride.max(1)).collect();
    let nodes = picked
        .par_iter()
        .map(|&i| {
            let w = table.w[i];
            let z = table.value_deriv[i];
            let w_dual = wealth_from_dual(z, table.x, &params, quad)?;
            let j = dual_value(z, table.x, &params, quad)?;
            Ok(CrosscheckNode {
                w,
                z,
                w_dual,
                rel_err: (w_dual - w).abs() / w,
                value_dual: j + w * z,
                value_table: table.value[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut errs: Vec<f64> = nodes.iter().map(|n| n.rel_err).collect();
    errs.sort_by(f64::total_cmp);
    let m = errs.len();
    let median = if m % 2 == 1 { errs[m / 2] } else { 0.5 * (errs[m / 2 - 1] + errs[m / 2]) };
    Ok(CrosscheckReport { median_rel_err: median, max_rel_err: errs[m - 1], nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> DualProcessParams {
        DualProcessParams::new(&MarketParams::table1(), &PreferenceParams::table1())
    }

    #[test]
    fn truncated_mean_limits() {
        let law = LognormalLaw { mu_bar: 0.3, sigma_bar_sq: 0.7 };
        let m = truncated_lognormal_mean(&law, 1e-300, Side::Above).unwrap();
        assert_relative_eq!(m, law.mean(), max_relative = 1e-14);
        let m = truncated_lognormal_mean(&law, 1e300, Side::Below).unwrap();
        assert_relative_eq!(m, law.mean(), max_relative = 1e-14);
        assert!(matches!(truncated_lognormal_mean(&law, 1e300, Side::Above), Err(Error::DegenerateCondition)));
        assert!(truncated_lognormal_mean(&law, 0.0, Side::Above).is_err());
        let point = LognormalLaw { mu_bar: 1.0, sigma_bar_sq: 0.0 };
        assert_relative_eq!(truncated_lognormal_mean(&point, 2.0, Side::Above).unwrap(), 1f64.exp());
        assert!(truncated_lognormal_mean(&point, 2.0, Side::Below).is_err());
    }

    #[test]
    fn truncated_mean_reference_value() {
        // mu = 0, s^2 = 1, h = 1: E[Y | Y > 1] = e^(1/2) Phi(1) / Phi(0).
        let law = LognormalLaw { mu_bar: 0.0, sigma_bar_sq: 1.0 };
        let v = truncated_lognormal_mean(&law, 1.0, Side::Above).unwrap();
        assert_relative_eq!(v, 0.5f64.exp() * 0.841_344_746_068_542_9 / 0.5, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn total_expectation(mu in -3.0f64..3.0, s2 in 0.01f64..4.0, lh in -4.0f64..4.0) {
            let law = LognormalLaw { mu_bar: mu, sigma_bar_sq: s2 };
            let h = lh.exp();
            let pa = law.probability(h, Side::Above);
            let pb = law.probability(h, Side::Below);
            prop_assert!((pa + pb - 1.0).abs() < 1e-15);
            prop_assume!(pa > 1e-12 && pb > 1e-12);
            let total = pa * truncated_lognormal_mean(&law, h, Side::Above).unwrap()
                + pb * truncated_lognormal_mean(&law, h, Side::Below).unwrap();
            prop_assert!((total / law.mean() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn branch_probabilities_partition(s in 0.0f64..200.0, lz in -8.0f64..4.0) {
            let (a, b) = branch_probabilities(s, lz.exp(), 3.0, &params());
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn integrand_at_zero_and_near_zero() {
        let p = params();
        for z in [0.01, 1.0 / 3.0, 1.0, 5.0] {
            let v0 = dual_integrand(0.0, z, 3.0, &p).unwrap();
            assert_eq!(v0, convex_dual(z, 3.0, &PreferenceParams::table1()).unwrap());
            let v = dual_integrand(1e-12, z, 3.0, &p).unwrap();
            assert!((v - v0).abs() < 1e-5 * v0.abs().max(1.0), "z={z} {v} {v0}");
        }
    }

    #[test]
    fn single_branch_integrand_closed_form() {
        let m = MarketParams::table1();
        let gamma = 3.0;
        let pr = PreferenceParams::single_branch(gamma, 0.04, 0.019).unwrap();
        let p = DualProcessParams::new(&m, &pr);
        let (a, b, q) = (gamma / (1.0 - gamma), 1.0 / (gamma - 1.0), 1.0 - 1.0 / gamma);
        let k = p.branch_growth(gamma);
        for (s, z) in [(0.5, 0.2), (10.0, 0.05), (80.0, 2.0)] {
            let expected = a * (z * 3.0f64).powf(q) * (k * s).exp() + b;
            let got = dual_integrand(s, z, 3.0, &p).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-12);
        }
    }

    fn single_branch_j(z: f64, x: f64, gamma: f64, p: &DualProcessParams) -> f64 {
        let (a, b, q) = (gamma / (1.0 - gamma), 1.0 / (gamma - 1.0), 1.0 - 1.0 / gamma);
        a * (z * x).powf(q) / (p.rho - p.branch_growth(gamma)) + b / p.rho
    }

    #[test]
    fn single_branch_value_and_wealth() {
        let m = MarketParams::table1();
        let quad = QuadratureSpec::default();
        for gamma in [2.0, 4.0, 6.0] {
            let pr = PreferenceParams::single_branch(gamma, 0.04, 0.019).unwrap();
            let p = DualProcessParams::new(&m, &pr);
            let eta = crate::merton::merton_consumption_ratio_g_adjusted(gamma, &m, &pr).unwrap();
            for z in [1e-3, 0.02, 0.3, 3.0] {
                let j = dual_value(z, 3.0, &p, &quad).unwrap();
                assert_relative_eq!(j, single_branch_j(z, 3.0, gamma, &p), max_relative = 1e-8);
                let w = wealth_from_dual(z, 3.0, &p, &quad).unwrap();
                // V_w(w) = u_c(eta w) inverts to w = c*(z) / eta.
                let c = 3.0 * (z * 3.0f64).powf(-1.0 / gamma);
                assert_relative_eq!(w, c / eta, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn deep_below_norm_approaches_lower_branch() {
        let quad = QuadratureSpec::default();
        let p = params();
        let pr6 = PreferenceParams::single_branch(6.0, 0.04, 0.019).unwrap();
        let p6 = DualProcessParams::new(&MarketParams::table1(), &pr6);
        let z = 1e4;
        let j = dual_value(z, 3.0, &p, &quad).unwrap();
        let j6 = single_branch_j(z, 3.0, 6.0, &p6);
        assert!((j / j6 - 1.0).abs() < 1e-3, "{j} {j6}");
    }

    #[test]
    fn dual_value_convex_decreasing() {
        let quad = QuadratureSpec::default();
        let p = params();
        let zs: Vec<f64> = (0..30).map(|i| 1e-3 * 1.4f64.powi(i)).collect();
        let js: Vec<f64> = zs.iter().map(|&z| dual_value(z, 3.0, &p, &quad).unwrap()).collect();
        let ws: Vec<f64> = zs.iter().map(|&z| wealth_from_dual(z, 3.0, &p, &quad).unwrap()).collect();
        for i in 1..zs.len() {
            assert!(js[i] < js[i - 1]);
            assert!(ws[i] < ws[i - 1]);
        }
        for i in 1..zs.len() - 1 {
            let l = (js[i] - js[i - 1]) / (zs[i] - zs[i - 1]);
            let r = (js[i + 1] - js[i]) / (zs[i + 1] - zs[i]);
            assert!(r > l);
        }
    }

    #[test]
    fn transversality() {
        let p = params();
        let quad = QuadratureSpec::default();
        for z in [0.01, 0.3] {
            let s = truncation_horizon(z, 3.0, &p, 0.1 * quad.rel_tol);
            let a = (-p.rho * s).exp() * dual_integrand(s, z, 3.0, &p).unwrap().abs();
            let b = (-p.rho * 2.0 * s).exp() * dual_integrand(2.0 * s, z, 3.0, &p).unwrap().abs();
            let j = dual_value(z, 3.0, &p, &quad).unwrap().abs();
            assert!(a < 1e-12 * j && b < a);
        }
    }

    #[test]
    fn divergent_parameters_rejected() {
        // Norm growth far above the riskless rate makes rho - kappa negative.
        let m = MarketParams::new(0.0, 0.048, 0.1789).unwrap();
        let pr = PreferenceParams::new(6.0, 2.0, 0.01, 0.1).unwrap();
        let p = DualProcessParams::new(&m, &pr);
        assert!(matches!(dual_value(0.1, 3.0, &p, &QuadratureSpec::default()), Err(Error::IllPosed(_))));
    }
}
