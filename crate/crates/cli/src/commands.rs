use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use softnorm::dual::crosscheck;
use softnorm::hjb::shoot_with_report;
use softnorm::merton::{merton_consumption_ratio, merton_share};
use softnorm::numerics::quad::QuadratureSpec;
use softnorm::sim::{consumption_log_volatility, fan_quantiles, simulate, PolicyRule, Series, DEFAULT_PROBS};
use softnorm::utility::marginal_utility;
use softnorm::welfare::table2;
use softnorm::{PolicyTable, PreferenceParams, SolveReport};

use crate::config::RunConfig;

/// Cross-check error beyond tolerance; maps to its own exit status.
#[derive(Debug, thiserror::Error)]
#[error("dual cross-check median relative error {median:.3e} exceeds {tolerance:.3e}")]
pub struct CrosscheckFailed {
    pub median: f64,
    pub tolerance: f64,
}

pub struct RunContext {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

type R<T> = anyhow::Result<T>;

impl RunContext {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> R<BufWriter<File>> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.path(name);
        let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    /// Opens `name` and writes the reproducibility header.
    fn csv(&self, name: &str) -> R<BufWriter<File>> {
        let mut w = self.create(name)?;
        w.write_all(self.cfg.csv_header().as_bytes())?;
        Ok(w)
    }
}

const TABLE_FILE: &str = "policy_table.csv";

fn write_report(ctx: &RunContext, report: &SolveReport) -> R<()> {
    let mut w = ctx.create("solve_report.txt")?;
    let stitches: Vec<String> = report.stitch_points.iter().map(|s| format!("{s:?}")).collect();
    writeln!(w, "config_hash = {}", ctx.cfg.hash())?;
    writeln!(w, "boundary_mode = {}", report.boundary_mode.as_str())?;
    writeln!(w, "omega_min = {:?}", report.omega_min)?;
    writeln!(w, "eta_min = {:?}", report.eta_min)?;
    writeln!(w, "stitch_points = {}", stitches.join(" "))?;
    writeln!(w, "far_field_target = {:?}", report.far_field_target)?;
    writeln!(w, "far_field_residual = {:?}", report.far_field_residual)?;
    writeln!(w, "far_field_refit = {}", report.far_field_refit)?;
    writeln!(w, "degenerate_splice = {}", report.degenerate_splice)?;
    writeln!(w, "trajectories = {}", report.trajectories)?;
    match report.w_kink {
        Some(k) => writeln!(w, "w_kink = {k:?}")?,
        None => writeln!(w, "w_kink = none")?,
    }
    Ok(())
}

pub fn cmd_solve(ctx: &RunContext) -> R<PolicyTable> {
    let (market, prefs) = (ctx.cfg.market()?, ctx.cfg.prefs()?);
    let (table, report) = shoot_with_report(&ctx.cfg.solver(), &market, &prefs)?;
    log::info!(
        "solved: eta_min={:.6e}, {} stitches, far-field residual {:.4}",
        report.eta_min,
        report.stitch_points.len(),
        report.far_field_residual
    );
    let mut w = ctx.csv(TABLE_FILE)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    write_report(ctx, &report)?;
    Ok(table)
}

/// Reuses a table written under the same configuration, otherwise solves.
fn load_or_solve(ctx: &RunContext) -> R<PolicyTable> {
    let path = ctx.path(TABLE_FILE);
    if let Ok(f) = File::open(&path) {
        let mut reader = BufReader::new(f);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        if first == ctx.cfg.csv_header() {
            log::info!("reusing {}", path.display());
            let (market, prefs) = (ctx.cfg.market()?, ctx.cfg.prefs()?);
            return Ok(PolicyTable::read_csv(reader, ctx.cfg.norm_level, market, prefs)?);
        }
    }
    cmd_solve(ctx)
}

fn reference_ratio(ctx: &RunContext, gamma: f64, prefs: &PreferenceParams) -> R<f64> {
    Ok(ctx.cfg.boundary_mode.target_ratio(gamma, &ctx.cfg.market()?, prefs)?)
}

fn write_fans(ctx: &RunContext, table: &PolicyTable, rule: &PolicyRule<'_>, names: [&str; 3]) -> R<f64> {
    let (market, prefs) = (ctx.cfg.market()?, ctx.cfg.prefs()?);
    let x0 = ctx.cfg.norm_level;
    let w0 = table.wealth_for_consumption(ctx.cfg.start_consumption_ratio * x0, x0)?;
    let batch = simulate(&ctx.cfg.simulation(w0), rule, &market, &prefs)?;
    for (series, name) in [Series::WealthToNorm, Series::EquityShare, Series::ConsumptionToNorm].into_iter().zip(names) {
        let mut w = ctx.csv(name)?;
        fan_quantiles(&batch, series, &DEFAULT_PROBS).write_csv(&mut w)?;
        w.flush()?;
    }
    if batch.absorbed_count() > 0 {
        log::warn!("{} paths hit the absorption floor", batch.absorbed_count());
    }
    Ok(consumption_log_volatility(&batch)?.annualized)
}

pub fn cmd_figures(ctx: &RunContext) -> R<()> {
    let table = load_or_solve(ctx)?;
    let (market, prefs) = (ctx.cfg.market()?, ctx.cfg.prefs()?);
    let x = ctx.cfg.norm_level;
    let lo = PreferenceParams::single_branch(prefs.gamma_below, prefs.rho, prefs.g)?;
    let hi = PreferenceParams::single_branch(prefs.gamma_above, prefs.rho, prefs.g)?;

    let mut w = ctx.csv("fig1_marginal_utility.csv")?;
    writeln!(w, "c,mu,mu_crra_below,mu_crra_above")?;
    for i in 0..=200 {
        let c = x * (0.2 + 2.8 * i as f64 / 200.0);
        writeln!(
            w,
            "{c:.17e},{:.17e},{:.17e},{:.17e}",
            marginal_utility(c, x, &prefs)?,
            marginal_utility(c, x, &lo)?,
            marginal_utility(c, x, &hi)?
        )?;
    }
    w.flush()?;

    let (om_lo, om_hi) = (merton_share(prefs.gamma_below, &market), merton_share(prefs.gamma_above, &market));
    let (eta_lo, eta_hi) = (reference_ratio(ctx, prefs.gamma_below, &prefs)?, reference_ratio(ctx, prefs.gamma_above, &prefs)?);

    let mut f2 = ctx.csv("fig2_equity_share.csv")?;
    writeln!(f2, "w,omega,omega_crra_below,omega_crra_above")?;
    let mut f3 = ctx.csv("fig3_consumption.csv")?;
    writeln!(f3, "w,c,c_crra_below,c_crra_above")?;
    let mut f4 = ctx.csv("fig4_consumption_wealth_ratio.csv")?;
    writeln!(f4, "w,c_over_w,eta_crra_below,eta_crra_above")?;
    let mut f5 = ctx.csv("fig5_saving_closeup.csv")?;
    writeln!(f5, "w,c_over_w,expected_return,saving_rate,saving_rate_crra_above,saving_rate_crra_above_eq3")?;
    let crra_above_saving = market.r + om_hi * market.pi - eta_hi;
    let crra_above_saving_eq3 = market.r + om_hi * market.pi - merton_consumption_ratio(prefs.gamma_above, &market, &prefs);
    let (lo5, hi5) = match table.w_kink {
        Some(k) => (k / 4.0, k * 8.0),
        None => (table.w_min(), table.w_max()),
    };
    for i in 0..table.len() {
        let (wi, om, c) = (table.w[i], table.equity_share[i], table.consumption[i]);
        writeln!(f2, "{wi:.17e},{om:.17e},{om_lo:.17e},{om_hi:.17e}")?;
        writeln!(f3, "{wi:.17e},{c:.17e},{:.17e},{:.17e}", eta_lo * wi, eta_hi * wi)?;
        writeln!(f4, "{wi:.17e},{:.17e},{eta_lo:.17e},{eta_hi:.17e}", c / wi)?;
        if (lo5..=hi5).contains(&wi) {
            let ret = market.r + om * market.pi;
            writeln!(
                f5,
                "{wi:.17e},{:.17e},{ret:.17e},{:.17e},{crra_above_saving:.17e},{crra_above_saving_eq3:.17e}",
                c / wi,
                ret - c / wi
            )?;
        }
    }
    for mut f in [f2, f3, f4, f5] {
        f.flush()?;
    }

    let vol = write_fans(
        ctx,
        &table,
        &PolicyRule::OptimalTable(&table),
        ["fig6_wealth_to_norm.csv", "fig7_equity_share.csv", "fig8_consumption_to_norm.csv"],
    )?;
    log::info!("consumption log-volatility {vol:.4}");
    Ok(())
}

/// Owned description of a rule given on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleArg {
    Optimal,
    Crra(f64),
    Mix(f64, f64),
    Tobin(f64, f64, f64),
}

impl std::str::FromStr for RuleArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let nums: Vec<f64> = parts.map(|p| p.parse::<f64>().map_err(|e| format!("{p}: {e}"))).collect::<Result<_, _>>()?;
        match (kind, nums.as_slice()) {
            ("optimal", []) => Ok(RuleArg::Optimal),
            ("crra", [g]) => Ok(RuleArg::Crra(*g)),
            ("mix", [o, e]) => Ok(RuleArg::Mix(*o, *e)),
            ("tobin", [o, e, l]) => Ok(RuleArg::Tobin(*o, *e, *l)),
            _ => Err(format!("unknown rule {s}; expected optimal, crra:G, mix:OMEGA:ETA or tobin:OMEGA:ETA:LAMBDA")),
        }
    }
}

pub fn cmd_simulate(ctx: &RunContext, rule: RuleArg) -> R<()> {
    let table = load_or_solve(ctx)?;
    let rule = match rule {
        RuleArg::Optimal => PolicyRule::OptimalTable(&table),
        RuleArg::Crra(gamma) => PolicyRule::CrraFixed { gamma },
        RuleArg::Mix(omega, eta) => PolicyRule::ConstantMix { omega, eta },
        RuleArg::Tobin(omega, eta_bar, lambda_monthly) => PolicyRule::TobinSmoothed { omega, eta_bar, lambda_monthly },
    };
    rule.validate()?;
    let vol = write_fans(ctx, &table, &rule, ["sim_wealth_to_norm.csv", "sim_equity_share.csv", "sim_consumption_to_norm.csv"])?;
    let mut w = ctx.create("sim_summary.txt")?;
    writeln!(w, "config_hash = {}", ctx.cfg.hash())?;
    writeln!(w, "rule = {rule:?}")?;
    writeln!(w, "consumption_log_volatility = {vol:?}")?;
    Ok(())
}

pub fn cmd_table2(ctx: &RunContext) -> R<()> {
    let table = load_or_solve(ctx)?;
    let (market, prefs) = (ctx.cfg.market()?, ctx.cfg.prefs()?);
    let t2 = table2(&ctx.cfg.table2()?, &table, &market, &prefs)?;
    let mut w = ctx.csv("table2.csv")?;
    t2.write_csv(&mut w)?;
    w.flush()?;
    let mut r = ctx.create("table2_report.txt")?;
    writeln!(r, "config_hash = {}", ctx.cfg.hash())?;
    writeln!(r, "w0 = {:?}", t2.w0)?;
    writeln!(r, "optimal_eu = {:?}", t2.optimal_expected_utility)?;
    writeln!(r, "optimal_stderr = {:?}", t2.optimal_std_error)?;
    writeln!(r, "constant_mix_on_boundary = {}", t2.constant_mix_on_boundary)?;
    writeln!(r, "crra_smoothed_minus_crra_stderr = {:?}", t2.loss_difference_se(3, 4))?;
    if t2.constant_mix_on_boundary {
        log::warn!("constant-mix optimum is on the search boundary");
    }
    Ok(())
}

pub fn cmd_crosscheck(ctx: &RunContext) -> R<()> {
    let table = load_or_solve(ctx)?;
    let rep = crosscheck(&table, ctx.cfg.crosscheck_samples, &QuadratureSpec::default())?;
    let mut w = ctx.csv("crosscheck.csv")?;
    writeln!(w, "w,z,w_dual,rel_err,value_dual,value_table")?;
    for n in &rep.nodes {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            n.w, n.z, n.w_dual, n.rel_err, n.value_dual, n.value_table
        )?;
    }
    w.flush()?;
    let mut r = ctx.create("crosscheck_report.txt")?;
    writeln!(r, "config_hash = {}", ctx.cfg.hash())?;
    writeln!(r, "nodes = {}", rep.nodes.len())?;
    writeln!(r, "median_rel_err = {:?}", rep.median_rel_err)?;
    writeln!(r, "max_rel_err = {:?}", rep.max_rel_err)?;
    println!("median relative error {:.3e}, max {:.3e}", rep.median_rel_err, rep.max_rel_err);
    if !(rep.median_rel_err <= ctx.cfg.crosscheck_tolerance) {
        bail!(CrosscheckFailed { median: rep.median_rel_err, tolerance: ctx.cfg.crosscheck_tolerance });
    }
    Ok(())
}

/// Exit status for an error chain: 2 configuration, 3 solver, 4 cross-check.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<CrosscheckFailed>().is_some() {
        return 4;
    }
    match err.downcast_ref::<softnorm::Error>() {
        Some(
            softnorm::Error::InvalidConfig(_)
            | softnorm::Error::Parse(_)
            | softnorm::Error::Domain { .. }
            | softnorm::Error::IllPosed(_),
        ) => 2,
        Some(_) => 3,
        None => 1,
    }
}

pub fn out_dir(p: Option<&Path>) -> PathBuf {
    p.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out"))
}
