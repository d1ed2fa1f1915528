//! Monthly Monte Carlo simulation of wealth, consumption and portfolio choice.
//!
//! Each path owns a ChaCha8 stream keyed by `(seed, path index)` and draws
//! exactly one normal per step whatever the rule does, so every rule sees the
//! same shocks (common random numbers) and results do not depend on how paths
//! are spread over threads. Paths advance in epochs that end at the rule's
//! update boundaries; between epochs the engine can read the cross-section.

mod fan;
mod schedule;

pub use fan::{fan_quantiles, FanChart, Series, DEFAULT_PROBS};
pub use schedule::MixSchedule;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::PolicyTable;
use crate::merton::{merton_consumption_ratio, merton_share};
use crate::utility::{crra_branch, MarketParams, PreferenceParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub years: f64,
    pub steps_per_year: usize,
    pub seed: u64,
    pub w0: f64,
    pub x0: f64,
    /// Wealth is floored at this multiple of the norm when a withdrawal would exhaust it.
    pub absorption_floor: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_paths: 2000, years: 50.0, steps_per_year: 12, seed: 1, w0: 100.0, x0: 3.0, absorption_floor: 1e-6 }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.steps_per_year == 0 || !(self.years > 0.0) {
            return Err(Error::InvalidConfig("need n_paths >= 1, years > 0, steps_per_year >= 1".into()));
        }
        if !(self.w0 > 0.0 && self.x0 > 0.0) {
            return Err(Error::InvalidConfig(format!("initial wealth and norm must be positive, got {} {}", self.w0, self.x0)));
        }
        if !(self.absorption_floor > 0.0) {
            return Err(Error::InvalidConfig("absorption floor must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.years * self.steps_per_year as f64).round() as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_year as f64
    }
}

/// Spending and portfolio rule.
#[derive(Debug, Clone, Copy)]
pub enum PolicyRule<'a> {
    OptimalTable(&'a PolicyTable),
    ConstantMix { omega: f64, eta: f64 },
    /// Each path re-reads constrained-optimal constants from `schedule` at its own
    /// wealth-norm ratio every `interval` steps.
    DecadeReoptimized { schedule: &'a MixSchedule, interval: usize },
    /// Cheaper variant: all paths take the constants for the cross-sectional median ratio.
    DecadeReoptimizedMedian { schedule: &'a MixSchedule, interval: usize },
    /// The table's pointwise optimum at the path's state, held for `interval` steps.
    MyopicDecade { table: &'a PolicyTable, interval: usize },
    /// Merton share and consumption ratio of a single CRRA curvature.
    CrraFixed { gamma: f64 },
    /// `c_t = lambda eta_bar w_t + (1 - lambda) c_(t-1)` with `c_(-1) = eta_bar w_0`.
    TobinSmoothed { omega: f64, eta_bar: f64, lambda_monthly: f64 },
}

impl PolicyRule<'_> {
    pub fn validate(&self) -> Result<()> {
        let pos = |what: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain { what, value: v })
            }
        };
        match *self {
            PolicyRule::ConstantMix { omega, eta } => {
                pos("equity share", omega)?;
                pos("consumption ratio", eta)
            }
            PolicyRule::CrraFixed { gamma } => pos("curvature", gamma),
            PolicyRule::TobinSmoothed { omega, eta_bar, lambda_monthly } => {
                pos("equity share", omega)?;
                pos("consumption ratio", eta_bar)?;
                if lambda_monthly > 0.0 && lambda_monthly <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::Domain { what: "smoothing weight", value: lambda_monthly })
                }
            }
            PolicyRule::DecadeReoptimized { interval, .. }
            | PolicyRule::DecadeReoptimizedMedian { interval, .. }
            | PolicyRule::MyopicDecade { interval, .. } => {
                if interval == 0 {
                    Err(Error::InvalidConfig("update interval must be >= 1 step".into()))
                } else {
                    Ok(())
                }
            }
            PolicyRule::OptimalTable(_) => Ok(()),
        }
    }

    fn interval(&self) -> Option<usize> {
        match *self {
            PolicyRule::DecadeReoptimized { interval, .. }
            | PolicyRule::DecadeReoptimizedMedian { interval, .. }
            | PolicyRule::MyopicDecade { interval, .. } => Some(interval),
            _ => None,
        }
    }
}

/// Exact lognormal growth over `dt` followed by the withdrawal `c_rate dt`.
#[inline]
pub fn step_wealth(w: f64, omega: f64, c_rate: f64, dt: f64, z: f64, market: &MarketParams) -> f64 {
    let vol = omega * market.sigma;
    let drift = market.r + omega * market.pi - 0.5 * vol * vol;
    w * (drift * dt + vol * dt.sqrt() * z).exp() - c_rate * dt
}

/// One step of one path as seen by an accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub wealth: f64,
    pub consumption: f64,
    pub omega: f64,
    pub norm: f64,
}

struct PathState {
    rng: ChaCha8Rng,
    w: f64,
    c_prev: f64,
    omega: f64,
    eta: f64,
    absorbed_at: Option<usize>,
}

/// Norm level at `step`, computed directly rather than compounded.
#[inline]
fn norm_at(cfg: &SimulationConfig, g: f64, step: usize) -> f64 {
    cfg.x0 * (g * step as f64 * cfg.dt()).exp()
}

/// Runs every path and feeds each recorded step (0..=n_steps) to a per-path accumulator.
fn run_engine<A, F>(
    cfg: &SimulationConfig,
    rule: &PolicyRule<'_>,
    market: &MarketParams,
    prefs: &PreferenceParams,
    init: impl Fn(usize) -> A + Sync,
    visit: F,
) -> Result<Vec<(A, Option<usize>)>>
where
    A: Send,
    F: Fn(&mut A, &StepRecord) + Sync,
{
    cfg.validate()?;
    rule.validate()?;
    let n = cfg.n_steps();
    let dt = cfg.dt();
    let (const_omega, const_eta) = match *rule {
        PolicyRule::ConstantMix { omega, eta } => (omega, eta),
        PolicyRule::CrraFixed { gamma } => (merton_share(gamma, market), merton_consumption_ratio(gamma, market, prefs)),
        PolicyRule::TobinSmoothed { omega, eta_bar, .. } => (omega, eta_bar),
        _ => (f64::NAN, f64::NAN),
    };
    let mut states: Vec<(PathState, A)> = (0..cfg.n_paths)
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(p as u64);
            let st = PathState {
                rng,
                w: cfg.w0,
                c_prev: const_eta * cfg.w0,
                omega: const_omega,
                eta: const_eta,
                absorbed_at: None,
            };
            (st, init(p))
        })
        .collect();

    let epoch = rule.interval().unwrap_or(n + 1).max(1);
    let mut start = 0usize;
    while start <= n {
        let end = (start + epoch).min(n + 1);
        // Cross-sectional refresh for the median-state rule.
        if let PolicyRule::DecadeReoptimizedMedian { schedule, .. } = *rule {
            let x = norm_at(cfg, prefs.g, start);
            let mut ratios: Vec<f64> = states.iter().map(|(s, _)| s.w / x).collect();
            ratios.sort_by(f64::total_cmp);
            let (omega, eta) = schedule.lookup(crate::numerics::quantile_sorted(&ratios, 0.5));
            for (s, _) in states.iter_mut() {
                s.omega = omega;
                s.eta = eta;
            }
        }
        states.par_iter_mut().for_each(|(st, acc)| {
            for step in start..end {
                let x = norm_at(cfg, prefs.g, step);
                let (omega, c) = match *rule {
                    PolicyRule::OptimalTable(table) => table.policy_at(st.w, x),
                    PolicyRule::ConstantMix { .. } | PolicyRule::CrraFixed { .. } => (st.omega, st.eta * st.w),
                    PolicyRule::DecadeReoptimized { schedule, .. } => {
                        if step == start {
                            let (o, e) = schedule.lookup(st.w / x);
                            st.omega = o;
                            st.eta = e;
                        }
                        (st.omega, st.eta * st.w)
                    }
                    PolicyRule::DecadeReoptimizedMedian { .. } => (st.omega, st.eta * st.w),
                    PolicyRule::MyopicDecade { table, .. } => {
                        if step == start {
                            let (o, c) = table.policy_at(st.w, x);
                            st.omega = o;
                            st.eta = c / st.w;
                        }
                        (st.omega, st.eta * st.w)
                    }
                    PolicyRule::TobinSmoothed { lambda_monthly, .. } => {
                        let c = lambda_monthly * st.eta * st.w + (1.0 - lambda_monthly) * st.c_prev;
                        (st.omega, c)
                    }
                };
                visit(acc, &StepRecord { step, wealth: st.w, consumption: c, omega, norm: x });
                st.c_prev = c;
                if step == n {
                    break;
                }
                let z: f64 = StandardNormal.sample(&mut st.rng);
                let mut w_next = step_wealth(st.w, omega, c, dt, z, market);
                let floor = cfg.absorption_floor * norm_at(cfg, prefs.g, step + 1);
                if !(w_next > floor) {
                    w_next = floor;
                    st.absorbed_at.get_or_insert(step + 1);
                }
                st.w = w_next;
            }
        });
        start = end;
    }
    Ok(states.into_iter().map(|(s, a)| (a, s.absorbed_at)).collect())
}

/// Per-path, per-step record of a simulation, steps `0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationBatch {
    pub n_paths: usize,
    pub n_steps: usize,
    pub steps_per_year: usize,
    wealth: Vec<f64>,
    consumption: Vec<f64>,
    omega: Vec<f64>,
    /// Deterministic norm path, shared by all paths.
    pub norm: Vec<f64>,
    /// First step at which each path hit the absorption floor.
    pub absorbed_at: Vec<Option<usize>>,
}

impl SimulationBatch {
    fn row(&self, v: &[f64], path: usize) -> std::ops::Range<usize> {
        let len = self.n_steps + 1;
        debug_assert_eq!(v.len(), self.n_paths * len);
        path * len..(path + 1) * len
    }

    pub fn wealth(&self, path: usize) -> &[f64] {
        &self.wealth[self.row(&self.wealth, path)]
    }

    pub fn consumption(&self, path: usize) -> &[f64] {
        &self.consumption[self.row(&self.consumption, path)]
    }

    pub fn equity_share(&self, path: usize) -> &[f64] {
        &self.omega[self.row(&self.omega, path)]
    }

    pub fn absorbed_count(&self) -> usize {
        self.absorbed_at.iter().filter(|a| a.is_some()).count()
    }
}

pub fn simulate(
    cfg: &SimulationConfig,
    rule: &PolicyRule<'_>,
    market: &MarketParams,
    prefs: &PreferenceParams,
) -> Result<SimulationBatch> {
    let len = cfg.n_steps() + 1;
    let out = run_engine(
        cfg,
        rule,
        market,
        prefs,
        |_| (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len)),
        |acc, r| {
            acc.0.push(r.wealth);
            acc.1.push(r.consumption);
            acc.2.push(r.omega);
        },
    )?;
    let mut batch = SimulationBatch {
        n_paths: cfg.n_paths,
        n_steps: len - 1,
        steps_per_year: cfg.steps_per_year,
        wealth: Vec::with_capacity(cfg.n_paths * len),
        consumption: Vec::with_capacity(cfg.n_paths * len),
        omega: Vec::with_capacity(cfg.n_paths * len),
        norm: (0..len).map(|s| norm_at(cfg, prefs.g, s)).collect(),
        absorbed_at: Vec::with_capacity(cfg.n_paths),
    };
    for ((w, c, o), ab) in out {
        batch.wealth.extend(w);
        batch.consumption.extend(c);
        batch.omega.extend(o);
        batch.absorbed_at.push(ab);
    }
    Ok(batch)
}

/// Discounted utility `sum_t e^(-rho t) u(c_t, x_t) dt` over steps `0..n_steps`.
#[inline]
fn discounted_term(r: &StepRecord, rho: f64, dt: f64, prefs: &PreferenceParams) -> f64 {
    let q = r.consumption / r.norm;
    (-rho * r.step as f64 * dt).exp() * crra_branch(q, prefs.branch_gamma(q)) * dt
}

/// Per-path discounted utility of a batch.
pub fn path_utilities(batch: &SimulationBatch, prefs: &PreferenceParams) -> Vec<f64> {
    let dt = 1.0 / batch.steps_per_year as f64;
    (0..batch.n_paths)
        .map(|p| {
            let c = batch.consumption(p);
            (0..batch.n_steps)
                .map(|t| {
                    let r = StepRecord { step: t, wealth: 0.0, consumption: c[t], omega: 0.0, norm: batch.norm[t] };
                    discounted_term(&r, prefs.rho, dt, prefs)
                })
                .sum()
        })
        .collect()
}

/// Per-path discounted utility, computed while simulating without storing paths.
pub fn simulate_utilities(
    cfg: &SimulationConfig,
    rule: &PolicyRule<'_>,
    market: &MarketParams,
    prefs: &PreferenceParams,
) -> Result<Vec<f64>> {
    let n = cfg.n_steps();
    let dt = cfg.dt();
    let out = run_engine(cfg, rule, market, prefs, |_| 0.0f64, |acc, r| {
        if r.step < n {
            *acc += discounted_term(r, prefs.rho, dt, prefs);
        }
    })?;
    Ok(out.into_iter().map(|(u, _)| u).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatilityReport {
    /// Mean across paths of the annualised standard deviation of monthly log consumption changes.
    pub annualized: f64,
    pub paths_used: usize,
    /// Paths whose post-absorption steps were dropped.
    pub truncated_paths: usize,
}

pub fn consumption_log_volatility(batch: &SimulationBatch) -> Result<VolatilityReport> {
    if batch.n_steps < 2 {
        return Err(Error::InvalidConfig("need at least two steps".into()));
    }
    let scale = (batch.steps_per_year as f64).sqrt();
    let mut total = 0.0;
    let mut used = 0;
    for p in 0..batch.n_paths {
        let c = batch.consumption(p);
        let end = batch.absorbed_at[p].unwrap_or(batch.n_steps + 1);
        let d: Vec<f64> = (1..end).map(|t| (c[t] / c[t - 1]).ln()).collect();
        if d.len() < 2 {
            continue;
        }
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        total += var.sqrt() * scale;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidConfig("no path has enough unabsorbed steps".into()));
    }
    Ok(VolatilityReport { annualized: total / used as f64, paths_used: used, truncated_paths: batch.absorbed_count() })
}
