/// Constrained-optimal constant mixes tabulated by wealth-norm ratio.
///
/// Lookups interpolate linearly in `ln(w/x)` and clamp at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSchedule {
    pub ratios: Vec<f64>,
    pub omega: Vec<f64>,
    pub eta: Vec<f64>,
}

impl MixSchedule {
    pub fn new(ratios: Vec<f64>, omega: Vec<f64>, eta: Vec<f64>) -> Self {
        assert!(!ratios.is_empty() && ratios.len() == omega.len() && omega.len() == eta.len());
        assert!(ratios.windows(2).all(|p| p[0] < p[1]));
        Self { ratios, omega, eta }
    }

    pub fn lookup(&self, ratio: f64) -> (f64, f64) {
        let n = self.ratios.len();
        if n == 1 || ratio <= self.ratios[0] {
            return (self.omega[0], self.eta[0]);
        }
        if ratio >= self.ratios[n - 1] {
            return (self.omega[n - 1], self.eta[n - 1]);
        }
        let i = self.ratios.partition_point(|&r| r <= ratio) - 1;
        let t = (ratio.ln() - self.ratios[i].ln()) / (self.ratios[i + 1].ln() - self.ratios[i].ln());
        (
            self.omega[i] + t * (self.omega[i + 1] - self.omega[i]),
            self.eta[i] + t * (self.eta[i + 1] - self.eta[i]),
        )
    }
}
