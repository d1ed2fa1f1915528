//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use softnorm::sim::SimulationConfig;
use softnorm::welfare::{MixSearch, Table2Config};
use softnorm::{BoundaryMode, Error, MarketParams, PreferenceParams, Result, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub equity_premium: f64,
    pub sigma: f64,
    pub riskless_rate: f64,
    pub rho: f64,
    pub gamma_below: f64,
    pub gamma_above: f64,
    pub norm_growth: f64,
    pub norm_level: f64,

    pub w_min: f64,
    pub w_max: f64,
    pub grid_size: usize,
    pub shoot_tolerance: f64,
    pub stitch_retreat: f64,
    pub boundary_mode: BoundaryMode,
    pub ode_rtol: f64,
    pub agreement_tolerance: f64,
    pub extension_factor: f64,

    pub seed: u64,
    pub paths: usize,
    pub years: f64,
    pub steps_per_year: usize,
    pub start_consumption_ratio: f64,
    pub absorption_floor: f64,

    pub table2_paths: usize,
    pub table2_years: f64,
    pub schedule_paths: usize,
    pub update_interval: usize,
    pub crra_gamma: f64,
    pub crra_eta_rounded: f64,
    pub tobin_lambda_monthly: f64,
    pub loss_threshold_pct: f64,

    pub crosscheck_samples: usize,
    pub crosscheck_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MarketParams::table1();
        let p = PreferenceParams::table1();
        let s = SolverConfig::default();
        Self {
            equity_premium: m.pi,
            sigma: m.sigma,
            riskless_rate: m.r,
            rho: p.rho,
            gamma_below: p.gamma_below,
            gamma_above: p.gamma_above,
            norm_growth: p.g,
            norm_level: s.x,
            w_min: s.w_min,
            w_max: s.w_max,
            grid_size: s.grid_size,
            shoot_tolerance: s.shoot_tolerance,
            stitch_retreat: s.stitch_retreat,
            boundary_mode: s.boundary_mode,
            ode_rtol: s.rtol,
            agreement_tolerance: s.agreement_tolerance,
            extension_factor: s.extension_factor,
            seed: 1,
            paths: 2000,
            years: 50.0,
            steps_per_year: 12,
            start_consumption_ratio: 1.1,
            absorption_floor: 1e-6,
            table2_paths: 5000,
            table2_years: 100.0,
            schedule_paths: 1000,
            update_interval: 120,
            crra_gamma: 5.2,
            crra_eta_rounded: 0.033,
            tobin_lambda_monthly: 0.056,
            loss_threshold_pct: 5.0,
            crosscheck_samples: 40,
            crosscheck_tolerance: 0.01,
        }
    }
}

macro_rules! fields {
    ($mac:ident) => {
        $mac!(
            equity_premium, sigma, riskless_rate, rho, gamma_below, gamma_above, norm_growth, norm_level,
            w_min, w_max, grid_size, shoot_tolerance, stitch_retreat, boundary_mode, ode_rtol,
            agreement_tolerance, extension_factor, seed, paths, years, steps_per_year,
            start_consumption_ratio, absorption_floor, table2_paths, table2_years, schedule_paths,
            update_interval, crra_gamma, crra_eta_rounded, tobin_lambda_monthly, loss_threshold_pct,
            crosscheck_samples, crosscheck_tolerance
        )
    };
}

/// Values print in their shortest exact form so that text round-trips.
trait ConfigValue: Sized {
    fn render(&self) -> String;
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
}

impl ConfigValue for f64 {
    fn render(&self) -> String {
        format!("{self:?}")
    }
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
}

impl ConfigValue for usize {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
}

impl ConfigValue for u64 {
    fn render(&self) -> String {
        self.to_string()
    }
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
}

impl ConfigValue for BoundaryMode {
    fn render(&self) -> String {
        self.as_str().to_string()
    }
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
}

impl RunConfig {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($($f:ident),*) => {
                $(writeln!(out, "{} = {}", stringify!($f), ConfigValue::render(&self.$f)).unwrap();)*
            };
        }
        fields!(emit);
        out
    }

    /// Parses `key = value` lines over the defaults. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| Error::Parse(format!("line {}: {key}: {e}", lineno + 1));
            macro_rules! assign {
                ($($f:ident),*) => {
                    match key {
                        $(stringify!($f) => cfg.$f = ConfigValue::parse_value(value).map_err(bad)?,)*
                        _ => return Err(Error::Parse(format!("line {}: unknown key {key}", lineno + 1))),
                    }
                };
            }
            fields!(assign);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.market()?;
        self.prefs()?;
        self.solver().validate()?;
        self.simulation(1.0).validate()?;
        if !(self.start_consumption_ratio > 0.0) {
            return Err(Error::InvalidConfig("start_consumption_ratio must be positive".into()));
        }
        if self.crosscheck_samples == 0 || !(self.crosscheck_tolerance > 0.0) {
            return Err(Error::InvalidConfig("crosscheck settings must be positive".into()));
        }
        if self.table2_paths == 0 || self.schedule_paths == 0 || !(self.table2_years > 0.0) {
            return Err(Error::InvalidConfig("table2 settings must be positive".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn market(&self) -> Result<MarketParams> {
        MarketParams::new(self.riskless_rate, self.equity_premium, self.sigma)
    }

    pub fn prefs(&self) -> Result<PreferenceParams> {
        PreferenceParams::new(self.gamma_below, self.gamma_above, self.rho, self.norm_growth)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            w_min: self.w_min,
            w_max: self.w_max,
            x: self.norm_level,
            grid_size: self.grid_size,
            shoot_tolerance: self.shoot_tolerance,
            stitch_retreat: self.stitch_retreat,
            boundary_mode: self.boundary_mode,
            rtol: self.ode_rtol,
            agreement_tolerance: self.agreement_tolerance,
            extension_factor: self.extension_factor,
        }
    }

    pub fn simulation(&self, w0: f64) -> SimulationConfig {
        SimulationConfig {
            n_paths: self.paths,
            years: self.years,
            steps_per_year: self.steps_per_year,
            seed: self.seed,
            w0,
            x0: self.norm_level,
            absorption_floor: self.absorption_floor,
        }
    }

    pub fn table2(&self) -> Result<Table2Config> {
        let (market, prefs) = (self.market()?, self.prefs()?);
        Ok(Table2Config {
            sim: SimulationConfig { n_paths: self.table2_paths, years: self.table2_years, ..self.simulation(1.0) },
            start_consumption_ratio: self.start_consumption_ratio,
            search: MixSearch::covering(&market, &prefs),
            schedule_paths: self.schedule_paths,
            schedule_multiples: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            update_interval: self.update_interval,
            crra_gamma: self.crra_gamma,
            crra_eta_rounded: self.crra_eta_rounded,
            tobin_lambda_monthly: self.tobin_lambda_monthly,
            loss_threshold_pct: self.loss_threshold_pct,
        })
    }

    /// Header line stamped on every emitted CSV.
    pub fn csv_header(&self) -> String {
        format!("# config_hash={} seed={}\n", self.hash(), self.seed)
    }
}
