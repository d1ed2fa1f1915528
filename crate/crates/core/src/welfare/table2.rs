use std::io::Write;

use super::{build_mix_schedule, loss_in_wealth_units_with, optimize_constant_mix, paired_difference_se, MixSearch, WelfareReport};
use crate::error::Result;
use crate::hjb::PolicyTable;
use crate::merton::{merton_consumption_ratio, merton_share};
use crate::numerics::mean_and_stderr;
use crate::sim::{simulate_utilities, PolicyRule, SimulationConfig};
use crate::utility::{MarketParams, PreferenceParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Config {
    /// Paths, horizon, seed and norm; `w0` is replaced by the start implied by
    /// `start_consumption_ratio`.
    pub sim: SimulationConfig,
    /// Initial optimal consumption as a multiple of the norm.
    pub start_consumption_ratio: f64,
    pub search: MixSearch,
    /// Paths per schedule point for the per-path decade rule.
    pub schedule_paths: usize,
    /// Schedule nodes as multiples of the starting wealth-norm ratio.
    pub schedule_multiples: Vec<f64>,
    pub update_interval: usize,
    pub crra_gamma: f64,
    /// The CRRA spending ratio rounded as printed, evaluated as a sensitivity row.
    pub crra_eta_rounded: f64,
    pub tobin_lambda_monthly: f64,
    pub loss_threshold_pct: f64,
}

impl Table2Config {
    pub fn new(market: &MarketParams, prefs: &PreferenceParams) -> Self {
        Self {
            sim: SimulationConfig { n_paths: 5000, years: 100.0, ..Default::default() },
            start_consumption_ratio: 1.1,
            search: MixSearch::covering(market, prefs),
            schedule_paths: 1000,
            schedule_multiples: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            update_interval: 120,
            crra_gamma: 5.2,
            crra_eta_rounded: 0.033,
            tobin_lambda_monthly: 0.056,
            loss_threshold_pct: super::LARGE_LOSS_THRESHOLD_PCT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2 {
    pub w0: f64,
    pub x0: f64,
    pub optimal_expected_utility: f64,
    pub optimal_std_error: f64,
    /// Constant mix, decade update per path, myopic decade, CRRA, smoothed CRRA.
    pub rows: Vec<WelfareReport>,
    /// Decade update at the median state; CRRA with the rounded spending ratio.
    pub extras: Vec<WelfareReport>,
    pub constant_mix_on_boundary: bool,
    utilities: Vec<Vec<f64>>,
    divisor: f64,
}

impl Table2 {
    /// Standard error of `loss(i) - loss(j)` over rows then extras, from paired paths,
    /// converted with the derivative at the start.
    pub fn loss_difference_se(&self, i: usize, j: usize) -> f64 {
        let se = paired_difference_se(&self.utilities[i], &self.utilities[j]);
        se / self.divisor / self.w0 * 100.0
    }

    /// Columns `rule,omega,eta,eu,stderr,loss_pct` followed by the two conversion
    /// variants and the paired standard error of the loss.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rule,omega,eta,eu,stderr,loss_pct,loss_pct_derivative,loss_pct_averaged,loss_stderr")?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        for r in self.rows.iter().chain(&self.extras) {
            writeln!(
                out,
                "{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.rule,
                opt(r.omega),
                opt(r.eta),
                r.expected_utility,
                r.std_error,
                r.loss_pct_of_wealth,
                r.loss_pct_derivative,
                r.loss_pct_averaged,
                r.loss_std_error
            )?;
        }
        Ok(())
    }
}

/// Evaluates the rule-of-thumb rows on common random numbers against the optimal table.
pub fn table2(
    config: &Table2Config,
    table: &PolicyTable,
    market: &MarketParams,
    prefs: &PreferenceParams,
) -> Result<Table2> {
    let x0 = config.sim.x0;
    let w0 = table.wealth_for_consumption(config.start_consumption_ratio * x0, x0)?;
    let sim = SimulationConfig { w0, ..config.sim };
    log::info!("table2: w0 = {w0:.4}, {} paths x {} years", sim.n_paths, sim.years);

    let optimal = simulate_utilities(&sim, &PolicyRule::OptimalTable(table), market, prefs)?;
    let (eu_opt, se_opt) = mean_and_stderr(&optimal);

    let report = |rule: &str, omega: Option<f64>, eta: Option<f64>, u: &[f64]| -> Result<WelfareReport> {
        let (eu, se) = mean_and_stderr(u);
        let loss = loss_in_wealth_units_with(eu_opt, eu, table, w0, x0, config.loss_threshold_pct)?;
        let loss_se = paired_difference_se(&optimal, u) / loss.divisor / w0 * 100.0;
        Ok(WelfareReport {
            rule: rule.to_string(),
            omega,
            eta,
            expected_utility: eu,
            std_error: se,
            loss_pct_of_wealth: loss.pct(),
            loss_pct_derivative: loss.derivative,
            loss_pct_averaged: loss.averaged,
            loss_std_error: loss_se,
        })
    };

    let mix = optimize_constant_mix(&sim, market, prefs, &config.search)?;
    log::info!("constant mix optimum omega={:.4} eta={:.5} ({} evaluations)", mix.omega, mix.eta, mix.evaluations);

    let ratios: Vec<f64> = config.schedule_multiples.iter().map(|m| m * w0 / x0).collect();
    let sched_cfg = SimulationConfig { n_paths: config.schedule_paths, ..sim };
    let schedule = build_mix_schedule(&sched_cfg, market, prefs, &config.search, &ratios)?;
    let interval = config.update_interval;
    let decade = simulate_utilities(&sim, &PolicyRule::DecadeReoptimized { schedule: &schedule, interval }, market, prefs)?;
    let median =
        simulate_utilities(&sim, &PolicyRule::DecadeReoptimizedMedian { schedule: &schedule, interval }, market, prefs)?;
    let myopic = simulate_utilities(&sim, &PolicyRule::MyopicDecade { table, interval }, market, prefs)?;

    let gamma = config.crra_gamma;
    let crra_omega = merton_share(gamma, market);
    let crra_eta = merton_consumption_ratio(gamma, market, prefs);
    let crra = simulate_utilities(&sim, &PolicyRule::CrraFixed { gamma }, market, prefs)?;
    let tobin_rule = PolicyRule::TobinSmoothed { omega: crra_omega, eta_bar: crra_eta, lambda_monthly: config.tobin_lambda_monthly };
    let tobin = simulate_utilities(&sim, &tobin_rule, market, prefs)?;
    let crra_rounded = simulate_utilities(
        &sim,
        &PolicyRule::ConstantMix { omega: crra_omega, eta: config.crra_eta_rounded },
        market,
        prefs,
    )?;

    let (o0, e0) = table.policy_at(w0, x0);
    let rows = vec![
        report("constant_mix", Some(mix.omega), Some(mix.eta), &mix.utilities)?,
        report("constant_mix_decade_update", None, None, &decade)?,
        report("myopic_decade_update", Some(o0), Some(e0 / w0), &myopic)?,
        report("crra", Some(crra_omega), Some(crra_eta), &crra)?,
        report("crra_smoothed", Some(crra_omega), Some(crra_eta), &tobin)?,
    ];
    let extras = vec![
        report("constant_mix_decade_update_median", None, None, &median)?,
        report("crra_rounded_eta", Some(crra_omega), Some(config.crra_eta_rounded), &crra_rounded)?,
    ];
    Ok(Table2 {
        w0,
        x0,
        optimal_expected_utility: eu_opt,
        optimal_std_error: se_opt,
        rows,
        extras,
        constant_mix_on_boundary: mix.on_boundary,
        utilities: vec![mix.utilities, decade, myopic, crra, tobin, median, crra_rounded],
        divisor: table.value_deriv_at(w0 * table.x / x0) * table.x / x0,
    })
}
