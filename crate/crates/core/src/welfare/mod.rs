//! Expected discounted utility of spending rules and its conversion into
//! percent of initial wealth, plus the constrained optimizers behind the
//! rule-of-thumb comparison table.

mod search;
mod table2;

pub use search::{build_mix_schedule, optimize_constant_mix, MixOptimum, MixSearch};
pub use table2::{table2, Table2, Table2Config};

use crate::error::{Error, Result};
use crate::hjb::PolicyTable;
use crate::numerics::mean_and_stderr;
use crate::sim::{path_utilities, SimulationBatch};
use crate::utility::PreferenceParams;

/// Small-loss estimates above this many percent switch to the averaged divisor.
pub const LARGE_LOSS_THRESHOLD_PCT: f64 = 5.0;

/// Mean and standard error of per-path discounted utility over the batch horizon.
/// No continuation value is added after the last step.
pub fn expected_utility(batch: &SimulationBatch, prefs: &PreferenceParams) -> (f64, f64) {
    mean_and_stderr(&path_utilities(batch, prefs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WelfareReport {
    pub rule: String,
    pub omega: Option<f64>,
    pub eta: Option<f64>,
    pub expected_utility: f64,
    pub std_error: f64,
    /// Loss with the divisor chosen by the threshold rule.
    pub loss_pct_of_wealth: f64,
    /// Loss using `V_w(w0)` only.
    pub loss_pct_derivative: f64,
    /// Loss using the average of `V_w(w0)` and `V_w(w~)`.
    pub loss_pct_averaged: f64,
    /// Standard error of the loss from paired per-path differences.
    pub loss_std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEstimate {
    pub derivative: f64,
    pub averaged: f64,
    pub used_average: bool,
    /// Divisor of the chosen estimate, in utility per unit of wealth.
    pub divisor: f64,
}

impl LossEstimate {
    pub fn pct(&self) -> f64 {
        if self.used_average {
            self.averaged
        } else {
            self.derivative
        }
    }
}

/// Table value and slope at wealth `w` when the norm is `x0`.
fn value_and_slope(table: &PolicyTable, w: f64, x0: f64) -> (f64, f64) {
    let s = table.x / x0;
    (table.value_at(w * s), table.value_deriv_at(w * s) * s)
}

/// Converts a utility shortfall into percent of initial wealth.
///
/// For losses up to `threshold_pct` the shortfall is divided by `V_w(w0) w0`.
/// Above it, `w~` solves `V(w~) = V(w0) - (eu_optimal - eu_alternative)` and the
/// divisor is the average of `V_w(w0)` and `V_w(w~)`.
pub fn loss_in_wealth_units_with(
    eu_optimal: f64,
    eu_alternative: f64,
    table: &PolicyTable,
    w0: f64,
    x0: f64,
    threshold_pct: f64,
) -> Result<LossEstimate> {
    let gap = eu_optimal - eu_alternative;
    if gap < 0.0 {
        log::warn!("alternative rule beats the optimum by {:.3e} utils; loss is negative", -gap);
    }
    let (v0, d0) = value_and_slope(table, w0, x0);
    let derivative = gap / d0 / w0 * 100.0;
    let mut est = LossEstimate { derivative, averaged: derivative, used_average: false, divisor: d0 };
    if gap > 0.0 {
        let s = table.x / x0;
        let target = v0 - gap;
        let w_tilde = match table.wealth_for_value(target) {
            Ok(w) => w / s,
            Err(Error::OutOfTable { lo, hi, .. }) => return Err(Error::OutOfTable { value: target, lo, hi }),
            Err(e) => return Err(e),
        };
        let d1 = value_and_slope(table, w_tilde, x0).1;
        let avg = 0.5 * (d0 + d1);
        est.averaged = gap / avg / w0 * 100.0;
        if derivative > threshold_pct {
            est.used_average = true;
            est.divisor = avg;
        }
    }
    Ok(est)
}

pub fn loss_in_wealth_units(
    eu_optimal: f64,
    eu_alternative: f64,
    table: &PolicyTable,
    w0: f64,
    x0: f64,
) -> Result<f64> {
    Ok(loss_in_wealth_units_with(eu_optimal, eu_alternative, table, w0, x0, LARGE_LOSS_THRESHOLD_PCT)?.pct())
}

/// Standard error of the mean of `a - b` for paired samples.
pub fn paired_difference_se(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_and_stderr(&d).1
}
