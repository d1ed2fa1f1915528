//! Discretised policy functions and their interpolation.

use std::io::{BufRead, Write};

use super::{branch_shares, Model};
use crate::error::{Error, Result};
use crate::numerics::bisect;
use crate::numerics::interp::Hermite;
use crate::utility::{MarketParams, PreferenceParams};

/// Solution of the reduced HJB equation on a wealth grid at norm level `x`.
///
/// Interpolation runs in `ln w`: value and marginal value use cubic Hermite
/// with their exact derivatives, the policies use monotone cubics. Queries
/// outside the grid are clamped to the end-node equity share and
/// consumption-wealth ratio.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    pub w: Vec<f64>,
    pub value: Vec<f64>,
    pub value_deriv: Vec<f64>,
    pub value_second: Vec<f64>,
    pub equity_share: Vec<f64>,
    pub consumption: Vec<f64>,
    /// Wealth at which optimal consumption equals the norm.
    pub w_kink: Option<f64>,
    pub x: f64,
    pub market: MarketParams,
    pub prefs: PreferenceParams,
    v_interp: Hermite,
    vw_interp: Hermite,
    omega_interp: Hermite,
    c_interp: Hermite,
}

impl PartialEq for PolicyTable {
    fn eq(&self, other: &Self) -> bool {
        self.w == other.w
            && self.value == other.value
            && self.value_deriv == other.value_deriv
            && self.equity_share == other.equity_share
            && self.consumption == other.consumption
            && self.x == other.x
            && self.market == other.market
            && self.prefs == other.prefs
    }
}

impl PolicyTable {
    /// Builds the table from integrated `(V, V_w)` node states.
    pub fn from_states(
        w: &[f64],
        states: &[[f64; 2]],
        x: f64,
        market: MarketParams,
        prefs: PreferenceParams,
    ) -> Result<Self> {
        assert_eq!(w.len(), states.len());
        let model = Model::new(market, prefs, x);
        let mut value_second = Vec::with_capacity(w.len());
        let mut omega = Vec::with_capacity(w.len());
        let mut c = Vec::with_capacity(w.len());
        for (&wi, y) in w.iter().zip(states) {
            let v_ww = model.second_derivative(wi, y[0], y[1])?;
            value_second.push(v_ww);
            omega.push(model.equity_share(wi, y[1], v_ww));
            c.push(model.consumption(y[1]));
        }
        Self::assemble(
            w.to_vec(),
            states.iter().map(|y| y[0]).collect(),
            states.iter().map(|y| y[1]).collect(),
            value_second,
            omega,
            c,
            x,
            market,
            prefs,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        w: Vec<f64>,
        value: Vec<f64>,
        value_deriv: Vec<f64>,
        value_second: Vec<f64>,
        equity_share: Vec<f64>,
        consumption: Vec<f64>,
        x: f64,
        market: MarketParams,
        prefs: PreferenceParams,
    ) -> Result<Self> {
        if w.len() < 2 || !w.windows(2).all(|p| p[0] < p[1]) || !(w[0] > 0.0) {
            return Err(Error::Parse("wealth nodes must be positive and strictly increasing".into()));
        }
        let s: Vec<f64> = w.iter().map(|v| v.ln()).collect();
        let dv: Vec<f64> = w.iter().zip(&value_deriv).map(|(a, b)| a * b).collect();
        let dvw: Vec<f64> = w.iter().zip(&value_second).map(|(a, b)| a * b).collect();
        let v_interp = Hermite::new(s.clone(), value.clone(), dv);
        let vw_interp = Hermite::new(s.clone(), value_deriv.clone(), dvw);
        let omega_interp = Hermite::monotone(s.clone(), equity_share.clone());
        let c_interp = Hermite::monotone(s, consumption.clone());
        let mut table = Self {
            w,
            value,
            value_deriv,
            value_second,
            equity_share,
            consumption,
            w_kink: None,
            x,
            market,
            prefs,
            v_interp,
            vw_interp,
            omega_interp,
            c_interp,
        };
        table.w_kink = table.locate_kink();
        Ok(table)
    }

    fn locate_kink(&self) -> Option<f64> {
        let i = self.consumption.windows(2).position(|p| p[0] < self.x && p[1] >= self.x)?;
        let (a, b) = (self.w[i].ln(), self.w[i + 1].ln());
        bisect(|s| self.c_interp.eval(s) - self.x, a, b, 1e-14).map(f64::exp)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn w_min(&self) -> f64 {
        self.w[0]
    }

    pub fn w_max(&self) -> f64 {
        self.w[self.w.len() - 1]
    }

    fn end_ratios(&self, w: f64) -> Option<(f64, f64)> {
        let last = self.w.len() - 1;
        if w < self.w[0] {
            Some((self.equity_share[0], self.consumption[0] / self.w[0]))
        } else if w > self.w[last] {
            Some((self.equity_share[last], self.consumption[last] / self.w[last]))
        } else {
            None
        }
    }

    /// `(omega*, c*)` at wealth `w` and the table's own norm.
    pub fn policy(&self, w: f64) -> (f64, f64) {
        match self.end_ratios(w) {
            Some((omega, eta)) => (omega, eta * w),
            None => {
                let s = w.ln();
                (self.omega_interp.eval(s), self.c_interp.eval(s))
            }
        }
    }

    pub fn consumption_at(&self, w: f64) -> f64 {
        self.policy(w).1
    }

    pub fn equity_share_at(&self, w: f64) -> f64 {
        self.policy(w).0
    }

    /// `V(w)` inside the grid; clamped to the end values outside.
    pub fn value_at(&self, w: f64) -> f64 {
        self.v_interp.eval(w.ln())
    }

    /// `V_w(w)` inside the grid; clamped to the end values outside.
    pub fn value_deriv_at(&self, w: f64) -> f64 {
        self.vw_interp.eval(w.ln())
    }

    /// Policy at an arbitrary norm level, using that policies depend on `w/x` only
    /// and consumption scales with the norm.
    pub fn policy_at(&self, w: f64, x_current: f64) -> (f64, f64) {
        let scale = x_current / self.x;
        let (omega, c) = self.policy(w / scale);
        (omega, c * scale)
    }

    /// Wealth whose table value equals `v`.
    pub fn wealth_for_value(&self, v: f64) -> Result<f64> {
        let (lo, hi) = (self.value[0], self.value[self.value.len() - 1]);
        if !(v >= lo && v <= hi) {
            return Err(Error::OutOfTable { value: v, lo, hi });
        }
        let s = bisect(|s| self.v_interp.eval(s) - v, self.w_min().ln(), self.w_max().ln(), 1e-14)
            .ok_or(Error::OutOfTable { value: v, lo, hi })?;
        Ok(s.exp())
    }

    /// Wealth at which optimal consumption equals `c` when the norm is `x_current`.
    pub fn wealth_for_consumption(&self, c: f64, x_current: f64) -> Result<f64> {
        let scale = x_current / self.x;
        let target = c / scale;
        let n = self.len();
        let (lo, hi) = (self.consumption[0], self.consumption[n - 1]);
        if !(target >= lo && target <= hi) {
            return Err(Error::OutOfTable { value: target, lo, hi });
        }
        let s = bisect(|s| self.c_interp.eval(s) - target, self.w_min().ln(), self.w_max().ln(), 1e-14)
            .ok_or(Error::OutOfTable { value: target, lo, hi })?;
        Ok(s.exp() * scale)
    }

    /// Writes `w,V,V_w,omega,c` rows in full precision.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "w,V,V_w,omega,c")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.w[i], self.value[i], self.value_deriv[i], self.equity_share[i], self.consumption[i]
            )?;
        }
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv). Lines starting with `#` are skipped.
    pub fn read_csv<R: BufRead>(input: R, x: f64, market: MarketParams, prefs: PreferenceParams) -> Result<Self> {
        let mut cols: [Vec<f64>; 5] = Default::default();
        let mut header_seen = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "w,V,V_w,omega,c" {
                    return Err(Error::Parse(format!("unexpected header {line:?}")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!("line {}: expected 5 fields", lineno + 1)));
            }
            for (col, f) in cols.iter_mut().zip(fields) {
                col.push(f.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad number {f:?}", lineno + 1)))?);
            }
        }
        let [w, value, value_deriv, equity_share, consumption] = cols;
        let s2 = market.sigma * market.sigma;
        let value_second = (0..w.len())
            .map(|i| -value_deriv[i] * market.pi / (s2 * equity_share[i] * w[i]))
            .collect();
        Self::assemble(w, value, value_deriv, value_second, equity_share, consumption, x, market, prefs)
    }
}

/// Free-function form of [`PolicyTable::policy_at`].
pub fn policy_at(table: &PolicyTable, w: f64, x_current: f64) -> (f64, f64) {
    table.policy_at(w, x_current)
}

/// Elasticity of `c*/w` with respect to `w` at an interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityPoint {
    pub w: f64,
    /// Central difference of `ln(c/w)` in `ln w`.
    pub finite_difference: f64,
    /// `(omega_j - omega*) / omega*` with the branch share `omega_j` at this node.
    pub analytic: f64,
}

pub fn elasticity_profile(table: &PolicyTable) -> Vec<ElasticityPoint> {
    let (omega_lo, omega_hi) = branch_shares(&table.market, &table.prefs);
    let n = table.len();
    let lr: Vec<f64> = (0..n).map(|i| (table.consumption[i] / table.w[i]).ln()).collect();
    (1..n.saturating_sub(1))
        .map(|i| {
            let ds = table.w[i + 1].ln() - table.w[i - 1].ln();
            let omega = table.equity_share[i];
            let omega_j = if table.consumption[i] < table.x { omega_lo } else { omega_hi };
            ElasticityPoint {
                w: table.w[i],
                finite_difference: (lr[i + 1] - lr[i - 1]) / ds,
                analytic: (omega_j - omega) / omega,
            }
        })
        .collect()
}
