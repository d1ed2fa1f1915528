//! Forward shooting along the saddle path.
//!
//! The policy path is a saddle: integrated forward from `w_min`, any error in
//! the initial consumption ratio grows roughly like `w^k` with `k` between 3
//! and 11 at the default calibration, so no single trajectory reaches
//! `w_max`. Trajectories that start with too little consumption leave through
//! high equity shares (class `Plus`), those with too much hit the convexity
//! wall (class `Minus`). Bisection on the class pins the path down to adjacent
//! floats; the segment on which the two bracketing trajectories still agree is
//! frozen and the search restarts from inside it, as often as needed.

use std::cell::Cell;
use std::ops::ControlFlow;

use log::{debug, info};

use super::table::PolicyTable;
use super::{boundary_state, branch_shares, BoundaryMode, Model, SolverConfig};
use crate::error::{Error, Result};
use crate::numerics::ode::{Advance, Dopri5};
use crate::utility::{marginal_utility, MarketParams, PreferenceParams};

/// Relative band around the branch shares beyond which a trajectory counts as diverged.
const SHARE_BAND: f64 = 0.01;
/// `V_w` may stray this far outside the single-branch envelopes.
const ENVELOPE_FACTOR: f64 = 1e6;
const COARSE_POINTS: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    /// Too little consumption: equity share or marginal utility runs away upward.
    Plus,
    /// Too much consumption: the value function stops being concave.
    Minus,
}

struct Run {
    /// States at nodes `start, start + 1, ...` up to the last node reached.
    states: Vec<[f64; 2]>,
    class: Class,
    reached_end: bool,
}

/// Diagnostics from a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub omega_min: f64,
    pub eta_min: f64,
    /// Wealth levels at which the search was restarted.
    pub stitch_points: Vec<f64>,
    pub far_field_target: f64,
    /// `V_w(w_max) / target - 1`.
    pub far_field_residual: f64,
    pub boundary_mode: BoundaryMode,
    /// The last segment was re-aimed at the far-field target instead of following the saddle.
    pub far_field_refit: bool,
    pub degenerate_splice: bool,
    pub trajectories: usize,
    pub w_kink: Option<f64>,
}

struct Shooter<'a> {
    cfg: &'a SolverConfig,
    model: Model,
    s: Vec<f64>,
    s_ext: f64,
    omega_lo: f64,
    omega_hi: f64,
    eta_lo_env: f64,
    eta_hi_env: f64,
    runs: usize,
}

impl<'a> Shooter<'a> {
    fn family(&self, omega: f64, eta: f64, node: usize) -> [f64; 2] {
        let m = &self.model;
        let (v, v_w) = boundary_state(omega, eta, self.s[node].exp(), m.x, &m.market, &m.prefs);
        [v, v_w]
    }

    fn envelope(&self, w: f64) -> (f64, f64) {
        let x = self.model.x;
        // Marginal utility is decreasing, so the larger ratio gives the lower envelope.
        let lo = marginal_utility(self.eta_hi_env * w, x, &self.model.prefs).unwrap_or(0.0);
        let hi = marginal_utility(self.eta_lo_env * w, x, &self.model.prefs).unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    fn classify_state(&self, s: f64, y: &[f64; 2]) -> Option<Class> {
        let w = s.exp();
        if !y[1].is_finite() || !y[0].is_finite() {
            return Some(if y[1] > 0.0 { Class::Plus } else { Class::Minus });
        }
        let v_ww = match self.model.second_derivative(w, y[0], y[1]) {
            Ok(v) => v,
            Err(_) => return Some(Class::Minus),
        };
        let omega = self.model.equity_share(w, y[1], v_ww);
        if omega > self.omega_hi * (1.0 + SHARE_BAND) {
            return Some(Class::Plus);
        }
        if omega < self.omega_lo * (1.0 - SHARE_BAND) {
            return Some(Class::Minus);
        }
        let (lo, hi) = self.envelope(w);
        if y[1] > hi * ENVELOPE_FACTOR {
            return Some(Class::Plus);
        }
        if y[1] < lo / ENVELOPE_FACTOR {
            return Some(Class::Minus);
        }
        None
    }

    fn share_at(&self, node: usize, y: &[f64; 2]) -> f64 {
        let w = self.s[node].exp();
        match self.model.second_derivative(w, y[0], y[1]) {
            Ok(v_ww) => self.model.equity_share(w, y[1], v_ww),
            Err(_) => f64::NAN,
        }
    }

    /// Integrates from `start` with initial state `y0`. With `extend`, the
    /// trajectory is followed past `w_max` until it shows its class.
    fn run(&mut self, start: usize, y0: [f64; 2], extend: bool) -> Run {
        self.runs += 1;
        let n = self.s.len();
        let mut stepper = Dopri5::<2>::new(self.cfg.rtol, 0.0, 1e-3);
        let model = self.model;
        let mut f = |s: f64, y: &[f64; 2]| model.rhs_log(s, y);
        let mut t = self.s[start];
        let mut y = y0;
        let mut states = vec![y0];
        let class = Cell::new(None);
        let this = &*self;
        let mut observe = |s: f64, y: &[f64; 2]| match this.classify_state(s, y) {
            Some(c) => {
                class.set(Some(c));
                ControlFlow::Break(())
            }
            None => ControlFlow::Continue(()),
        };
        for node in start + 1..n {
            match stepper.advance(&mut f, &mut t, &mut y, this.s[node], &mut observe) {
                Ok(Advance::Reached) => states.push(y),
                Ok(Advance::Stopped) => break,
                Err(_) => {
                    class.set(Some(Class::Minus));
                    break;
                }
            }
        }
        let reached_end = states.len() == n - start;
        if reached_end && extend && class.get().is_none() {
            match stepper.advance(&mut f, &mut t, &mut y, this.s_ext, &mut observe) {
                Ok(Advance::Reached) => {
                    // Never left the band: decide by the side of the far-field share.
                    let w = t.exp();
                    let omega = model
                        .second_derivative(w, y[0], y[1])
                        .map(|v_ww| model.equity_share(w, y[1], v_ww))
                        .unwrap_or(0.0);
                    class.set(Some(if omega > this.omega_hi { Class::Plus } else { Class::Minus }));
                }
                Ok(Advance::Stopped) => {}
                Err(_) => class.set(Some(Class::Minus)),
            }
        }
        let class = class.get().unwrap_or_else(|| {
            // Reached w_max without extension: classify by the terminal share.
            let omega = this.share_at(n - 1, &y);
            if omega > this.omega_hi {
                Class::Plus
            } else {
                Class::Minus
            }
        });
        Run { states, class, reached_end }
    }

    /// Bisects the consumption ratio at `node` between a `Plus` and a `Minus`
    /// trajectory until the two are adjacent floats.
    fn bisect(&mut self, node: usize, omega: f64, mut lo: f64, mut hi: f64) -> (f64, f64, Run, Run) {
        let mut run_lo = self.run(node, self.family(omega, lo, node), true);
        let mut run_hi = self.run(node, self.family(omega, hi, node), true);
        debug_assert!(run_lo.class == Class::Plus && run_hi.class == Class::Minus);
        for _ in 0..200 {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                break;
            }
            let r = self.run(node, self.family(omega, mid, node), true);
            match r.class {
                Class::Plus => {
                    lo = mid;
                    run_lo = r;
                }
                Class::Minus => {
                    hi = mid;
                    run_hi = r;
                }
            }
        }
        (lo, hi, run_lo, run_hi)
    }

    fn class_of(&mut self, node: usize, omega: f64, eta: f64) -> Class {
        let y0 = self.family(omega, eta, node);
        self.run(node, y0, true).class
    }

    /// Coarse geometric scan for the first `Plus -> Minus` change in the ratio at `w_min`.
    fn initial_bracket(&mut self, omega: f64) -> Option<(f64, f64)> {
        let a = (0.25 * self.eta_lo_env).ln();
        let b = (4.0 * self.eta_hi_env).ln();
        let grid: Vec<f64> = (0..COARSE_POINTS)
            .map(|i| (a + (b - a) * i as f64 / (COARSE_POINTS - 1) as f64).exp())
            .collect();
        let mut prev: Option<(f64, Class)> = None;
        for eta in grid {
            let c = self.class_of(0, omega, eta);
            if let Some((p_eta, Class::Plus)) = prev {
                if c == Class::Minus {
                    return Some((p_eta, eta));
                }
            }
            prev = Some((eta, c));
        }
        None
    }

    /// Widens `eta (1 -+ h)` until it brackets the saddle.
    fn local_bracket(&mut self, node: usize, omega: f64, eta: f64) -> Option<(f64, f64)> {
        let mut h = 1e-9;
        while h < 0.5 {
            let (lo, hi) = (eta * (1.0 - h), eta * (1.0 + h));
            if self.class_of(node, omega, lo) == Class::Plus && self.class_of(node, omega, hi) == Class::Minus {
                return Some((lo, hi));
            }
            h *= 2.0;
        }
        None
    }

    /// First node after `start` where the two runs stop agreeing, if any.
    fn divergence_node(&self, start: usize, a: &Run, b: &Run) -> Option<usize> {
        let tol = self.cfg.agreement_tolerance;
        let n = self.s.len();
        for node in start + 1..n {
            let k = node - start;
            let (ya, yb) = match (a.states.get(k), b.states.get(k)) {
                (Some(ya), Some(yb)) => (ya, yb),
                _ => return Some(node),
            };
            let dv = (ya[1] - yb[1]).abs() / ya[1].abs().max(yb[1].abs());
            let (oa, ob) = (self.share_at(node, ya), self.share_at(node, yb));
            let dom = (oa - ob).abs() / oa.abs().max(ob.abs());
            if !(dv <= tol && dom <= tol) {
                return Some(node);
            }
        }
        None
    }

    fn ratio_at(&self, node: usize, y: &[f64; 2]) -> f64 {
        self.model.consumption(y[1]) / self.s[node].exp()
    }
}

/// Signed far-field score used when re-aiming the last segment.
fn score(run: &Run, target: f64) -> f64 {
    if run.reached_end {
        run.states.last().expect("nonempty")[1] / target - 1.0
    } else {
        match run.class {
            Class::Plus => f64::INFINITY,
            Class::Minus => f64::NEG_INFINITY,
        }
    }
}

/// Solves the reduced HJB equation on the configured grid.
pub fn shoot(config: &SolverConfig, market: &MarketParams, prefs: &PreferenceParams) -> Result<PolicyTable> {
    shoot_with_report(config, market, prefs).map(|(t, _)| t)
}

pub fn shoot_with_report(
    config: &SolverConfig,
    market: &MarketParams,
    prefs: &PreferenceParams,
) -> Result<(PolicyTable, SolveReport)> {
    config.validate()?;
    let g_adj_lo = BoundaryMode::GAdjusted.target_ratio(prefs.gamma_below, market, prefs)?;
    let g_adj_hi = BoundaryMode::GAdjusted.target_ratio(prefs.gamma_above, market, prefs)?;
    let eta_target = config.boundary_mode.target_ratio(prefs.gamma_above, market, prefs)?;
    let (omega_lo, omega_hi) = branch_shares(market, prefs);
    let grid = config.grid();
    let n = grid.len();
    let mut sh = Shooter {
        cfg: config,
        model: Model::new(*market, *prefs, config.x),
        s: grid.iter().map(|w| w.ln()).collect(),
        s_ext: (config.w_max * config.extension_factor).ln(),
        omega_lo,
        omega_hi,
        eta_lo_env: g_adj_lo.min(g_adj_hi),
        eta_hi_env: g_adj_lo.max(g_adj_hi),
        runs: 0,
    };

    let omega_min = omega_lo;
    let (lo, hi) = sh.initial_bracket(omega_min).ok_or(Error::SearchExhausted {
        w_start: config.w_min,
        eta_lo: 0.25 * sh.eta_lo_env,
        eta_hi: 4.0 * sh.eta_hi_env,
        best_residual: f64::NAN,
    })?;
    let (eta_lo, eta_hi, mut run_lo, mut run_hi) = sh.bisect(0, omega_min, lo, hi);
    let eta_min = 0.5 * (eta_lo + eta_hi);
    let mut segment_omega = omega_min;
    let mut segment_eta = (eta_lo, eta_hi);
    debug!("eta(w_min) bracket [{eta_lo:e}, {eta_hi:e}]");

    let mut frozen: Vec<[f64; 2]> = Vec::with_capacity(n);
    frozen.push(sh.family(omega_min, eta_min, 0));
    let mut start = 0usize;
    let mut stitch_points = Vec::new();
    loop {
        let Some(d) = sh.divergence_node(start, &run_lo, &run_hi) else {
            for k in 1..n - start {
                let (a, b) = (run_lo.states[k], run_hi.states[k]);
                frozen.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            }
            break;
        };
        let s_cut = sh.s[d] + config.stitch_retreat.ln();
        let mut keep = (start + 1..d).rev().find(|&k| sh.s[k] <= s_cut).unwrap_or(start);
        if keep <= start {
            keep = d - 1;
        }
        if keep <= start {
            return Err(Error::SearchExhausted {
                w_start: grid[start],
                eta_lo: segment_eta.0,
                eta_hi: segment_eta.1,
                best_residual: f64::NAN,
            });
        }
        for k in 1..=keep - start {
            let (a, b) = (run_lo.states[k], run_hi.states[k]);
            frozen.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        start = keep;
        stitch_points.push(grid[start]);
        let y = frozen[start];
        let omega_s = sh.share_at(start, &y);
        let eta_s = sh.ratio_at(start, &y);
        debug!("stitch at w = {} (divergence at {})", grid[start], grid[d]);
        let (lo, hi) = sh.local_bracket(start, omega_s, eta_s).ok_or(Error::SearchExhausted {
            w_start: grid[start],
            eta_lo: eta_s,
            eta_hi: eta_s,
            best_residual: f64::NAN,
        })?;
        let (a, b, ra, rb) = sh.bisect(start, omega_s, lo, hi);
        segment_omega = omega_s;
        segment_eta = (a, b);
        run_lo = ra;
        run_hi = rb;
    }

    let target = marginal_utility(eta_target * config.w_max, config.x, prefs)?;
    let mut residual = frozen[n - 1][1] / target - 1.0;
    let mut refit = false;
    if residual.abs() > config.shoot_tolerance {
        info!("saddle path misses the far-field target by {residual:e}; re-aiming the last segment");
        refit = true;
        let (frozen_new, r) = refit_last_segment(&mut sh, &frozen, start, segment_omega, target, residual)?;
        frozen = frozen_new;
        residual = r;
    }

    let table = PolicyTable::from_states(&grid, &frozen, config.x, *market, *prefs)?;
    let report = SolveReport {
        omega_min,
        eta_min,
        stitch_points,
        far_field_target: target,
        far_field_residual: residual,
        boundary_mode: config.boundary_mode,
        far_field_refit: refit,
        degenerate_splice: prefs.is_degenerate(),
        trajectories: sh.runs,
        w_kink: table.w_kink,
    };
    info!(
        "solved with {} stitches, {} trajectories, far-field residual {:e}",
        report.stitch_points.len(),
        report.trajectories,
        report.far_field_residual
    );
    Ok((table, report))
}

/// Replaces the segment after `start` by the trajectory whose `V_w(w_max)` hits `target`.
fn refit_last_segment(
    sh: &mut Shooter<'_>,
    frozen: &[[f64; 2]],
    start: usize,
    omega: f64,
    target: f64,
    saddle_residual: f64,
) -> Result<(Vec<[f64; 2]>, f64)> {
    let tol = sh.cfg.shoot_tolerance;
    let eta_s = sh.ratio_at(start, &frozen[start]);
    // A positive residual means too little consumption, so the ratio must rise.
    let dir = if saddle_residual > 0.0 { 1.0 } else { -1.0 };
    let mut near = (eta_s, saddle_residual);
    let mut far = None;
    let mut h = 1e-9;
    while h < 0.5 {
        let eta = eta_s * (1.0 + dir * h);
        let y0 = sh.family(omega, eta, start);
        let r = score(&sh.run(start, y0, false), target);
        if r.signum() != saddle_residual.signum() {
            far = Some((eta, r));
            break;
        }
        near = (eta, r);
        h *= 2.0;
    }
    let w_start = sh.s[start].exp();
    let exhausted = |best: f64| Error::SearchExhausted {
        w_start,
        eta_lo: eta_s,
        eta_hi: eta_s * (1.0 + dir * h),
        best_residual: best,
    };
    let Some(mut far) = far else { return Err(exhausted(near.1)) };
    let mut best: Option<(f64, Run)> = None;
    for _ in 0..200 {
        let mid = 0.5 * (near.0 + far.0);
        if mid == near.0 || mid == far.0 {
            break;
        }
        let y0 = sh.family(omega, mid, start);
        let run = sh.run(start, y0, false);
        let r = score(&run, target);
        if r.is_finite() && best.as_ref().map_or(true, |(b, _)| r.abs() < b.abs()) {
            best = Some((r, run));
        }
        if r.signum() == near.1.signum() {
            near = (mid, r);
        } else {
            far = (mid, r);
        }
        if r.abs() <= 0.5 * tol {
            break;
        }
    }
    match best {
        Some((r, run)) if r.abs() <= tol => {
            let mut out = frozen[..=start].to_vec();
            out.extend_from_slice(&run.states[1..]);
            Ok((out, r))
        }
        Some((r, _)) => Err(exhausted(r)),
        None => Err(exhausted(near.1)),
    }
}

/// Wealth at which a single forward trajectory from `(omega_min, eta_min)` at
/// `w_min` leaves the saddle neighbourhood, or `None` if it survives to `w_max`.
pub fn divergence_wealth(
    config: &SolverConfig,
    market: &MarketParams,
    prefs: &PreferenceParams,
    omega_min: f64,
    eta_min: f64,
) -> Result<Option<f64>> {
    config.validate()?;
    let g_lo = BoundaryMode::GAdjusted.target_ratio(prefs.gamma_below, market, prefs)?;
    let g_hi = BoundaryMode::GAdjusted.target_ratio(prefs.gamma_above, market, prefs)?;
    let (omega_lo, omega_hi) = branch_shares(market, prefs);
    let grid = config.grid();
    let mut sh = Shooter {
        cfg: config,
        model: Model::new(*market, *prefs, config.x),
        s: grid.iter().map(|w| w.ln()).collect(),
        s_ext: config.w_max.ln(),
        omega_lo,
        omega_hi,
        eta_lo_env: g_lo.min(g_hi),
        eta_hi_env: g_lo.max(g_hi),
        runs: 0,
    };
    let y0 = sh.family(omega_min, eta_min, 0);
    let run = sh.run(0, y0, false);
    Ok(if run.reached_end { None } else { Some(grid[run.states.len() - 1]) })
}
