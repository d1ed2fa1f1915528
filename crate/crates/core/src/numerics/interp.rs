//! Piecewise cubic Hermite interpolation.

/// Cubic Hermite interpolant through `(x_i, y_i)` with slopes `d_i`.
///
/// Outside `[x_0, x_n]` the end values are returned; callers handle extrapolation.
#[derive(Debug, Clone)]
pub struct Hermite {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Hermite {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len() && y.len() == d.len());
        debug_assert!(x.windows(2).all(|w| w[0] < w[1]));
        Self { x, y, d }
    }

    /// Shape-preserving slopes (Fritsch-Butland weighted harmonic mean, three-point ends).
    pub fn monotone(x: Vec<f64>, y: Vec<f64>) -> Self {
        let d = pchip_slopes(&x, &y);
        Self::new(x, y, d)
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    /// First derivative of the interpolant.
    pub fn deriv(&self, t: f64) -> f64 {
        let n = self.x.len();
        let t = t.clamp(self.x[0], self.x[n - 1]);
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let dh00 = (6.0 * s2 - 6.0 * s) / h;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = (-6.0 * s2 + 6.0 * s) / h;
        let dh11 = 3.0 * s2 - 2.0 * s;
        dh00 * self.y[i] + dh10 * self.d[i] + dh01 * self.y[i + 1] + dh11 * self.d[i + 1]
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        if a * b <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / a + w2 / b);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hermite_reproduces_cubic_with_exact_slopes() {
        let f = |t: f64| 1.0 + 2.0 * t - t * t + 0.3 * t * t * t;
        let df = |t: f64| 2.0 - 2.0 * t + 0.9 * t * t;
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.7).collect();
        let h = Hermite::new(xs.clone(), xs.iter().map(|&t| f(t)).collect(), xs.iter().map(|&t| df(t)).collect());
        for i in 0..50 {
            let t = i as f64 * 0.07;
            assert!((h.eval(t) - f(t)).abs() < 1e-12);
            assert!((h.deriv(t) - df(t)).abs() < 1e-11);
        }
    }

    #[test]
    fn monotone_on_kinked_data() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&t| if t < 10.0 { 0.1 * t } else { 1.0 + 2.0 * (t - 10.0) }).collect();
        let h = Hermite::monotone(xs, ys);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1900 {
            let v = h.eval(i as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(steps in proptest::collection::vec(0.0f64..5.0, 3..30)) {
            let xs: Vec<f64> = (0..steps.len()).map(|i| i as f64 * 0.5).collect();
            let mut acc = 0.0;
            let ys: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
            let h = Hermite::monotone(xs.clone(), ys.clone());
            let last = *xs.last().unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=400 {
                let v = h.eval(last * i as f64 / 400.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
            for (x, y) in xs.iter().zip(&ys) {
                prop_assert!((h.eval(*x) - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
