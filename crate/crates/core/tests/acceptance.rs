//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). It always exits 0 so that the
//! workspace test run reports results without gating on reproduction gaps.
//! Set `ACCEPTANCE_STRICT=1` to exit nonzero when any criterion fails.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use softnorm::dual::{crosscheck, truncated_lognormal_mean, LognormalLaw, Side};
use softnorm::hjb::{elasticity_profile, shoot, shoot_with_report};
use softnorm::merton::{merton_consumption_ratio, merton_consumption_ratio_g_adjusted, merton_share};
use softnorm::numerics::mean_and_stderr;
use softnorm::numerics::quad::QuadratureSpec;
use softnorm::sim::*;
use softnorm::utility::{feasibility_bound, Feasibility};
use softnorm::welfare::*;
use softnorm::{MarketParams, PolicyTable, PreferenceParams, SolverConfig};

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, details: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        self.details.push(format!("{} {what}", if ok { "ok  " } else { "MISS" }));
    }
}

fn report(n: usize, title: &str, o: &Outcome, elapsed: Duration, budget: Duration) -> bool {
    let in_time = elapsed <= budget;
    let pass = o.pass && in_time;
    println!(
        "{} criterion {n}: {title} ({:.1} s, budget {} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    for d in &o.details {
        println!("      {d}");
    }
    if !in_time {
        println!("      MISS runtime over budget");
    }
    pass
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn criterion1() -> Outcome {
    let m = MarketParams::table1();
    let p = PreferenceParams::table1();
    let mut o = Outcome::new();
    // Printed anchors are rounded; compare at half a unit of their last digit.
    for (gamma, printed, tol) in [(6.0, 0.25, 5e-3), (2.0, 0.75, 5e-3), (5.2, 0.2885, 5e-4)] {
        let s = merton_share(gamma, &m);
        o.check(near(s, printed, tol), format!("merton_share({gamma}) = {s:.7} vs {printed} +- {tol}"));
        let formula = 0.048 / (gamma * 0.1789 * 0.1789);
        o.check(near(s, formula, 1e-10), format!("merton_share({gamma}) matches pi/(gamma sigma^2) to 1e-10"));
    }
    for (gamma, printed) in [(2.0, 0.0415), (5.2, 0.0335)] {
        let eta = merton_consumption_ratio(gamma, &m, &p);
        let formula = 0.04 / gamma + (1.0 - 1.0 / gamma) * (0.025 + 0.5 * merton_share(gamma, &m) * 0.048);
        o.check(near(eta, printed, 5e-5), format!("eta({gamma}) = {eta:.7} vs {printed}"));
        o.check(near(eta, formula, 1e-10), format!("eta({gamma}) matches the Keynes-Ramsey formula to 1e-10"));
    }
    let growth = 0.025 + merton_share(2.0, &m) * 0.048 - merton_consumption_ratio(2.0, &m, &p);
    o.check(near(growth, 0.0195, 5e-5), format!("r + omega2 pi - eta2 = {growth:.7} vs 0.0195"));
    let annual = (1.0f64 - 0.056).powi(12);
    o.check((0.495..=0.505).contains(&annual), format!("(1-0.056)^12 = {annual:.5}"));
    match feasibility_bound(3.0, &m, &p) {
        Feasibility::Bounded(b) => o.check(near(b, 500.0, 1e-10 * 500.0), format!("feasibility bound = {b}")),
        Feasibility::Unbounded => o.check(false, "feasibility bound unbounded".into()),
    }
    o
}

fn criterion2() -> (Outcome, Duration) {
    let m = MarketParams::table1();
    let mut o = Outcome::new();
    let mut slowest = Duration::ZERO;
    for gamma in [2.0, 4.0, 6.0] {
        let t0 = Instant::now();
        let p = PreferenceParams::single_branch(gamma, 0.04, 0.019).unwrap();
        let t = match shoot(&SolverConfig::default(), &m, &p) {
            Ok(t) => t,
            Err(e) => {
                o.check(false, format!("gamma {gamma}: {e}"));
                continue;
            }
        };
        slowest = slowest.max(t0.elapsed());
        let eta = merton_consumption_ratio_g_adjusted(gamma, &m, &p).unwrap();
        let omega = merton_share(gamma, &m);
        let x = 3.0;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        let mut worst: f64 = 0.0;
        for i in 0..t.len() {
            let q = t.w[i] / x;
            let v = eta.powf(-gamma) * q.powf(1.0 - gamma) / (1.0 - gamma) + 1.0 / (p.rho * (gamma - 1.0));
            let v_w = (eta * q).powf(-gamma) / x;
            worst = worst
                .max(rel(t.value[i], v))
                .max(rel(t.value_deriv[i], v_w))
                .max(rel(t.equity_share[i], omega))
                .max(rel(t.consumption[i], eta * t.w[i]));
        }
        o.check(worst <= 1e-6, format!("gamma {gamma}: worst relative error {worst:.2e} over {} nodes", t.len()));
    }
    (o, slowest)
}

fn criterion3(t: &PolicyTable) -> Outcome {
    let m = MarketParams::table1();
    let mut o = Outcome::new();
    let (w1, w2) = (merton_share(6.0, &m), merton_share(2.0, &m));
    let monotone = t.equity_share.windows(2).all(|p| p[1] >= p[0] * (1.0 - 1e-9));
    let bracketed = t.equity_share.iter().all(|&s| s >= w1 * (1.0 - 1e-9) && s <= w2);
    o.check(monotone, "omega* nondecreasing".into());
    o.check(bracketed, format!("omega* within [{w1:.7}, {w2:.7}]"));

    let lr: Vec<f64> = (0..t.len()).map(|i| (t.consumption[i] / t.w[i]).ln()).collect();
    let signs: Vec<f64> = lr.windows(2).map(|p| p[1] - p[0]).filter(|d| d.abs() >= 1e-9).map(f64::signum).collect();
    let changes = signs.windows(2).filter(|p| p[0] != p[1]).count();
    o.check(changes == 1, format!("c*/w slope changes sign {changes} time(s)"));
    match t.w_kink {
        Some(k) => {
            let i_min = (0..t.len()).min_by(|&a, &b| lr[a].total_cmp(&lr[b])).unwrap();
            let step = t.w[1] / t.w[0];
            let at_kink = t.w[i_min] / k < step * 1.0001 && k / t.w[i_min] < step * 1.0001;
            o.check(at_kink, format!("turn at w = {:.3}, kink w_x = {k:.3}", t.w[i_min]));
            let ck = t.consumption_at(k);
            o.check(near(ck, t.x, 1e-9 * t.x), format!("c*(w_x) = {ck:.12} = x"));
        }
        None => o.check(false, "no kink inside the grid".into()),
    }

    let k = t.w_kink.unwrap_or(f64::NAN);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for p in elasticity_profile(t) {
        if (p.w / k).ln().abs() > 0.03 {
            worst = worst.max((p.analytic - p.finite_difference).abs() / (p.analytic.abs() + 5e-5));
            n += 1;
        }
    }
    o.check(worst <= 0.02, format!("elasticity analytic vs finite difference: worst {worst:.4} (relative) over {n} nodes"));

    let mut worst_h: f64 = 0.0;
    for alpha in [0.5, 2.0, 10.0] {
        for i in (0..t.len()).step_by(7) {
            let w = t.w[i];
            let c = t.policy_at(w, t.x).1;
            let ca = t.policy_at(alpha * w, alpha * t.x).1;
            worst_h = worst_h.max((ca / (alpha * c) - 1.0).abs());
        }
    }
    o.check(worst_h <= 1e-10, format!("homogeneity c*(aw, ax) = a c*(w, x): worst {worst_h:.2e}"));
    o
}

fn criterion4(t: &PolicyTable) -> Outcome {
    let m = MarketParams::table1();
    let quad = QuadratureSpec::default();
    let mut o = Outcome::new();
    match crosscheck(t, 40, &quad) {
        Ok(r) => o.check(
            r.median_rel_err <= 0.01,
            format!("Table 1: median {:.2e}, max {:.2e} over {} nodes", r.median_rel_err, r.max_rel_err, r.nodes.len()),
        ),
        Err(e) => o.check(false, format!("Table 1 crosscheck: {e}")),
    }
    let p = PreferenceParams::single_branch(4.0, 0.04, 0.019).unwrap();
    let td = shoot(&SolverConfig::default(), &m, &p).unwrap();
    match crosscheck(&td, 40, &quad) {
        Ok(r) => o.check(r.median_rel_err <= 1e-4, format!("degenerate gamma 4: median {:.2e}", r.median_rel_err)),
        Err(e) => o.check(false, format!("degenerate crosscheck: {e}")),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let law = LognormalLaw { mu_bar: 0.0, sigma_bar_sq: 1.0 };
    let mut above = Vec::new();
    let mut below = Vec::new();
    for _ in 0..10_000_000 {
        let z: f64 = StandardNormal.sample(&mut rng);
        let y = z.exp();
        above.push(if y > 1.0 { y } else { 0.0 });
        below.push(if y < 1.0 { y } else { 0.0 });
    }
    for (side, draws) in [(Side::Above, &above), (Side::Below, &below)] {
        let (mean, se) = mean_and_stderr(draws);
        let p_side = draws.iter().filter(|&&v| v > 0.0).count() as f64 / draws.len() as f64;
        let exact = truncated_lognormal_mean(&law, 1.0, side).unwrap();
        // Partial expectations E[Y 1{side}] vs conditional means: compare on the conditional scale.
        let cond = mean / p_side;
        let ok = (cond - exact).abs() < 3.0 * se / p_side;
        o.check(ok, format!("{side:?} truncated mean {exact:.6} vs Monte Carlo {cond:.6} (3 se = {:.1e})", 3.0 * se / p_side));
    }
    o
}

struct SimOutputs {
    optimal: SimulationBatch,
    vol_opt: VolatilityReport,
    vol_crra2: VolatilityReport,
    vol_crra6: VolatilityReport,
}

impl PartialEq for SimOutputs {
    fn eq(&self, other: &Self) -> bool {
        self.optimal == other.optimal
            && self.vol_opt == other.vol_opt
            && self.vol_crra2 == other.vol_crra2
            && self.vol_crra6 == other.vol_crra6
    }
}

fn simulate_reduced(t: &PolicyTable) -> SimOutputs {
    let m = MarketParams::table1();
    let p = PreferenceParams::table1();
    let w0 = t.wealth_for_consumption(1.1 * 3.0, 3.0).unwrap();
    let cfg = SimulationConfig { n_paths: 2000, years: 50.0, w0, x0: 3.0, seed: 20260101, ..Default::default() };
    let optimal = simulate(&cfg, &PolicyRule::OptimalTable(t), &m, &p).unwrap();
    let vol = |rule: PolicyRule<'_>| consumption_log_volatility(&simulate(&cfg, &rule, &m, &p).unwrap()).unwrap();
    SimOutputs {
        vol_opt: consumption_log_volatility(&optimal).unwrap(),
        vol_crra2: vol(PolicyRule::CrraFixed { gamma: 2.0 }),
        vol_crra6: vol(PolicyRule::CrraFixed { gamma: 6.0 }),
        optimal,
    }
}

fn criterion5(s: &SimOutputs) -> Outcome {
    let mut o = Outcome::new();
    for (name, v, target, tol) in [
        ("optimal soft norm", s.vol_opt, 0.091, 0.015),
        ("CRRA gamma 2", s.vol_crra2, 0.134, 0.015),
        ("CRRA gamma 6", s.vol_crra6, 0.045, 0.010),
    ] {
        o.check(
            near(v.annualized, target, tol),
            format!("{name}: {:.4} vs {target} +- {tol} ({} paths, {} truncated)", v.annualized, v.paths_used, v.truncated_paths),
        );
    }
    o
}

fn criterion6(s: &SimOutputs) -> Outcome {
    let b = &s.optimal;
    let mut o = Outcome::new();
    let f = fan_quantiles(b, Series::WealthToNorm, &DEFAULT_PROBS);
    let m0 = f.mean[0];
    let drift = f.mean.iter().map(|m| (m / m0 - 1.0).abs()).fold(0.0, f64::max);
    o.check(
        drift < 0.15,
        format!(
            "mean w/x {:.2} -> {:.2}, largest drift {:.1}% (median {:.2} -> {:.2})",
            m0,
            f.mean[b.n_steps],
            100.0 * drift,
            f.quantiles[0][2],
            f.quantiles[b.n_steps][2]
        ),
    );
    let lowest = (0..b.n_paths).flat_map(|p| b.equity_share(p).iter().copied()).fold(f64::INFINITY, f64::min);
    o.check(lowest >= 0.24, format!("lowest equity share {lowest:.5}"));

    // Mean of c/x at yearly points never falls below an earlier one by more than 3 standard errors.
    let mut worst_drop = f64::NEG_INFINITY;
    let mut running_max = f64::NEG_INFINITY;
    for t in (0..=b.n_steps).step_by(b.steps_per_year) {
        let col: Vec<f64> = (0..b.n_paths).map(|p| b.consumption(p)[t] / b.norm[t]).collect();
        let (mean, se) = mean_and_stderr(&col);
        if running_max.is_finite() {
            worst_drop = worst_drop.max((running_max - mean) / se.max(1e-300));
        }
        running_max = running_max.max(mean);
    }
    let fc = fan_quantiles(b, Series::ConsumptionToNorm, &DEFAULT_PROBS);
    o.check(
        worst_drop < 3.0,
        format!(
            "mean c/x {:.3} -> {:.3}; largest fall below a prior yearly mean {:.2} se",
            fc.mean[0],
            fc.mean[b.n_steps],
            worst_drop.max(0.0)
        ),
    );
    o
}

struct WelfareOutputs {
    table: Table2,
    alt_start: MixOptimum,
}

impl PartialEq for WelfareOutputs {
    fn eq(&self, other: &Self) -> bool {
        self.table == other.table && self.alt_start == other.alt_start
    }
}

fn welfare_reduced(t: &PolicyTable) -> WelfareOutputs {
    let m = MarketParams::table1();
    let p = PreferenceParams::table1();
    let mut cfg = Table2Config::new(&m, &p);
    cfg.sim.n_paths = 2000;
    cfg.sim.seed = 20260102;
    let table = table2(&cfg, t, &m, &p).unwrap();
    let w0 = t.wealth_for_consumption(0.9 * 3.0, 3.0).unwrap();
    let sim = SimulationConfig { w0, ..cfg.sim };
    let alt_start = optimize_constant_mix(&sim, &m, &p, &cfg.search).unwrap();
    WelfareOutputs { table, alt_start }
}

fn criterion7(w: &WelfareOutputs) -> Outcome {
    let t = &w.table;
    let r = &t.rows;
    let mut o = Outcome::new();
    for row in r.iter().chain(&t.extras) {
        o.details.push(format!(
            "     {:34} loss {:7.3}% (se {:.3}; slope-only {:.3}%, averaged {:.3}%)",
            row.rule, row.loss_pct_of_wealth, row.loss_std_error, row.loss_pct_derivative, row.loss_pct_averaged
        ));
    }
    let (om, eta) = (r[0].omega.unwrap(), r[0].eta.unwrap());
    o.check(near(om, 0.289, 0.02), format!("constant-mix omega {:.2}% vs 28.9 +- 2", 100.0 * om));
    o.check(near(eta, 0.021, 0.004), format!("constant-mix eta {:.3}% vs 2.1 +- 0.4", 100.0 * eta));
    o.check(!t.constant_mix_on_boundary, "constant-mix optimum interior".into());
    let l: Vec<f64> = r.iter().map(|x| x.loss_pct_of_wealth).collect();
    o.check(l[1] < l[0], format!("row2 {:.3} < row1 {:.3}", l[1], l[0]));
    o.check(l[0] < l[2], format!("row1 {:.3} < row3 {:.3}", l[0], l[2]));
    o.check(l[2] < l[3] / 3.0 && l[2] < l[4] / 3.0, format!("row3 {:.3} << rows 4, 5 ({:.2}, {:.2})", l[2], l[3], l[4]));
    o.check((0.1..=0.6).contains(&l[0]), format!("row1 {:.3}% in [0.1, 0.6]", l[0]));
    o.check((1.0..=3.0).contains(&l[2]), format!("row3 {:.3}% in [1.0, 3.0]", l[2]));
    o.check((15.0..=27.0).contains(&l[3]), format!("row4 {:.3}% in [15, 27]", l[3]));
    let se45 = t.loss_difference_se(3, 4);
    let d45 = l[4] - l[3];
    o.check(d45.abs() <= 2.0 * se45, format!("row5 - row4 = {d45:.3} pp, 2 se = {:.3}", 2.0 * se45));
    o
}

fn criterion8(w: &WelfareOutputs) -> Outcome {
    let mut o = Outcome::new();
    let a = &w.alt_start;
    o.check(
        near(a.omega, 0.272, 0.02),
        format!("start c = 0.9x: omega {:.2}% vs 27.2 +- 2 (eta {:.3}%)", 100.0 * a.omega, 100.0 * a.eta),
    );
    o.check(!a.on_boundary, "optimum interior".into());
    o
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn main() {
    let mut all = true;
    let secs = Duration::from_secs;

    let t0 = Instant::now();
    let o = criterion1();
    all &= report(1, "closed-form anchors", &o, t0.elapsed(), secs(1));

    let (o, slowest) = criterion2();
    all &= report(2, "degenerate-splice oracle", &o, slowest, secs(30));

    let t0 = Instant::now();
    let (table, solve) = shoot_with_report(&SolverConfig::default(), &MarketParams::table1(), &PreferenceParams::table1())
        .expect("Table 1 solve");
    let o = criterion3(&table);
    all &= report(3, "policy shape", &o, t0.elapsed(), secs(60));

    let t0 = Instant::now();
    let o = criterion4(&table);
    all &= report(4, "dual-oracle equivalence", &o, t0.elapsed(), secs(300));

    let t0 = Instant::now();
    let sims = in_pool(4, || simulate_reduced(&table));
    let sim_time = t0.elapsed();
    let o = criterion5(&sims);
    all &= report(5, "consumption volatility (2000 paths x 600 months)", &o, sim_time, secs(300));
    let o = criterion6(&sims);
    all &= report(6, "fan-chart shape", &o, sim_time, secs(300));

    let t0 = Instant::now();
    let welfare = in_pool(4, || welfare_reduced(&table));
    let welfare_time = t0.elapsed();
    let o = criterion7(&welfare);
    all &= report(7, "rule-of-thumb table (2000 paths x 100 years)", &o, welfare_time, secs(1800));
    let o = criterion8(&welfare);
    all &= report(8, "alternate start c = 0.9x", &o, welfare_time, secs(1800));

    let t0 = Instant::now();
    let mut o = Outcome::new();
    let (table_b, solve_b) =
        shoot_with_report(&SolverConfig::default(), &MarketParams::table1(), &PreferenceParams::table1()).unwrap();
    o.check(table_b == table && solve_b == solve, "policy table and solve report identical on rerun".into());
    let sims_b = in_pool(1, || simulate_reduced(&table));
    o.check(sims_b == sims, "simulation batch identical with 1 thread vs 4 threads".into());
    let welfare_b = in_pool(1, || welfare_reduced(&table));
    o.check(welfare_b == welfare, "table and alternate-start optimum identical with 1 thread vs 4 threads".into());
    all &= report(9, "determinism", &o, t0.elapsed(), secs(1800));

    println!("{}", if all { "ALL CRITERIA PASS" } else { "SOME CRITERIA FAIL" });
    if !all && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
