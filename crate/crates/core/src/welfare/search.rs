use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::merton::{merton_consumption_ratio, merton_share};
use crate::numerics::mean_and_stderr;
use crate::sim::{simulate_utilities, MixSchedule, PolicyRule, SimulationConfig};
use crate::utility::{MarketParams, PreferenceParams};

/// Box and resolution for the constant-mix search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSearch {
    pub omega_range: (f64, f64),
    pub eta_range: (f64, f64),
    pub grid_omega: usize,
    pub grid_eta: usize,
    pub omega_tol: f64,
    pub eta_tol: f64,
}

impl MixSearch {
    /// Shares between the two Merton shares; spending ratios up to the low-curvature ratio.
    pub fn covering(market: &MarketParams, prefs: &PreferenceParams) -> Self {
        let lo = merton_share(prefs.gamma_below.max(prefs.gamma_above), market);
        let hi = merton_share(prefs.gamma_below.min(prefs.gamma_above), market);
        let eta_hi = merton_consumption_ratio(prefs.gamma_above.min(prefs.gamma_below), market, prefs);
        Self {
            omega_range: (lo, hi),
            eta_range: (0.002, eta_hi),
            grid_omega: 9,
            grid_eta: 9,
            omega_tol: 5e-4,
            eta_tol: 5e-5,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |(a, b): (f64, f64)| a > 0.0 && a <= b && b.is_finite();
        if !ok(self.omega_range) || !ok(self.eta_range) || self.grid_omega == 0 || self.grid_eta == 0 {
            return Err(Error::InvalidConfig(format!("bad search box {self:?}")));
        }
        if !(self.omega_tol > 0.0 && self.eta_tol > 0.0) {
            return Err(Error::InvalidConfig("search tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixOptimum {
    pub omega: f64,
    pub eta: f64,
    pub expected_utility: f64,
    pub std_error: f64,
    /// Per-path utilities at the optimum, for paired comparisons.
    pub utilities: Vec<f64>,
    /// The argmax sits on an edge of the box that has nonzero width.
    pub on_boundary: bool,
    pub evaluations: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Grid search followed by compass pattern search, every candidate on the same draws.
pub fn optimize_constant_mix(
    config: &SimulationConfig,
    market: &MarketParams,
    prefs: &PreferenceParams,
    search: &MixSearch,
) -> Result<MixOptimum> {
    search.validate()?;
    let (o_lo, o_hi) = search.omega_range;
    let (e_lo, e_hi) = search.eta_range;
    let mut cache: HashMap<(u64, u64), (f64, Vec<f64>)> = HashMap::new();
    let mut eval = |omega: f64, eta: f64| -> Result<f64> {
        let key = (omega.to_bits(), eta.to_bits());
        if let Some((m, _)) = cache.get(&key) {
            return Ok(*m);
        }
        let u = simulate_utilities(config, &PolicyRule::ConstantMix { omega, eta }, market, prefs)?;
        let m = u.iter().sum::<f64>() / u.len() as f64;
        cache.insert(key, (m, u));
        Ok(m)
    };

    let omegas = linspace(o_lo, o_hi, search.grid_omega);
    let etas = linspace(e_lo, e_hi, search.grid_eta);
    let mut best = (omegas[0], etas[0], f64::NEG_INFINITY);
    for &o in &omegas {
        for &e in &etas {
            let m = eval(o, e)?;
            if m > best.2 {
                best = (o, e, m);
            }
        }
    }

    let mut step_o = if omegas.len() > 1 { 0.5 * (omegas[1] - omegas[0]) } else { 0.0 };
    let mut step_e = if etas.len() > 1 { 0.5 * (etas[1] - etas[0]) } else { 0.0 };
    while step_o > search.omega_tol || step_e > search.eta_tol {
        let (o, e, m) = best;
        let mut moved = false;
        let moves = [(step_o, 0.0), (-step_o, 0.0), (0.0, step_e), (0.0, -step_e)];
        for (dox, dex) in moves {
            if dox == 0.0 && dex == 0.0 {
                continue;
            }
            let (no, ne) = ((o + dox).clamp(o_lo, o_hi), (e + dex).clamp(e_lo, e_hi));
            if no == o && ne == e {
                continue;
            }
            let nm = eval(no, ne)?;
            if nm > m {
                best = (no, ne, nm);
                moved = true;
                break;
            }
        }
        if !moved {
            if step_o > search.omega_tol {
                step_o *= 0.5;
            }
            if step_e > search.eta_tol {
                step_e *= 0.5;
            }
        }
    }

    let (omega, eta, _) = best;
    let edge = |v: f64, lo: f64, hi: f64, tol: f64| hi > lo && (v - lo <= tol || hi - v <= tol);
    let on_boundary = edge(omega, o_lo, o_hi, search.omega_tol) || edge(eta, e_lo, e_hi, search.eta_tol);
    if on_boundary {
        log::warn!("constant-mix optimum ({omega:.4}, {eta:.5}) lies on the search-box boundary; enlarge the box");
    }
    let evaluations = cache.len();
    let (_, utilities) = cache.remove(&(omega.to_bits(), eta.to_bits())).expect("optimum was evaluated");
    let (expected_utility, std_error) = mean_and_stderr(&utilities);
    Ok(MixOptimum { omega, eta, expected_utility, std_error, utilities, on_boundary, evaluations })
}

/// Constrained optima from each wealth-norm ratio in `ratios`, with `config.x0` as the norm.
pub fn build_mix_schedule(
    config: &SimulationConfig,
    market: &MarketParams,
    prefs: &PreferenceParams,
    search: &MixSearch,
    ratios: &[f64],
) -> Result<MixSchedule> {
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut omega = Vec::with_capacity(sorted.len());
    let mut eta = Vec::with_capacity(sorted.len());
    for &ratio in &sorted {
        let cfg = SimulationConfig { w0: ratio * config.x0, ..*config };
        let opt = optimize_constant_mix(&cfg, market, prefs, search)?;
        log::debug!("schedule w/x={ratio:.2}: omega={:.4} eta={:.5}", opt.omega, opt.eta);
        omega.push(opt.omega);
        eta.push(opt.eta);
    }
    Ok(MixSchedule::new(sorted, omega, eta))
}
