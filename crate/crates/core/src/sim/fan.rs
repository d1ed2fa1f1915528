use std::io::Write;

use super::SimulationBatch;
use crate::numerics::quantile_sorted;

pub const DEFAULT_PROBS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    WealthToNorm,
    ConsumptionToNorm,
    EquityShare,
    Wealth,
    Consumption,
}

/// Per-step cross-sectional quantiles and mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FanChart {
    pub probs: Vec<f64>,
    /// `quantiles[step][k]` is the `probs[k]` quantile at `step`.
    pub quantiles: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

pub fn fan_quantiles(batch: &SimulationBatch, series: Series, probs: &[f64]) -> FanChart {
    assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    let mut quantiles = Vec::with_capacity(batch.n_steps + 1);
    let mut mean = Vec::with_capacity(batch.n_steps + 1);
    let mut col = vec![0.0; batch.n_paths];
    for t in 0..=batch.n_steps {
        for (p, v) in col.iter_mut().enumerate() {
            *v = match series {
                Series::WealthToNorm => batch.wealth(p)[t] / batch.norm[t],
                Series::ConsumptionToNorm => batch.consumption(p)[t] / batch.norm[t],
                Series::EquityShare => batch.equity_share(p)[t],
                Series::Wealth => batch.wealth(p)[t],
                Series::Consumption => batch.consumption(p)[t],
            };
        }
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
        col.sort_by(f64::total_cmp);
        quantiles.push(probs.iter().map(|&q| quantile_sorted(&col, q)).collect());
    }
    FanChart { probs: probs.to_vec(), quantiles, mean }
}

impl FanChart {
    /// Columns `month,p05,...,mean`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "month")?;
        for p in &self.probs {
            write!(out, ",p{:02}", (p * 100.0).round() as u32)?;
        }
        writeln!(out, ",mean")?;
        for (t, (q, m)) in self.quantiles.iter().zip(&self.mean).enumerate() {
            write!(out, "{t}")?;
            for v in q {
                write!(out, ",{v:.17e}")?;
            }
            writeln!(out, ",{m:.17e}")?;
        }
        Ok(())
    }
}
