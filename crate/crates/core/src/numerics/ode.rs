//! Adaptive Dormand-Prince 5(4) integrator for small fixed-size systems.

use std::ops::ControlFlow;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    Reached,
    /// The step observer asked to stop; `t` and `y` hold the last accepted step.
    Stopped,
}

/// Stepper state. The current step size carries over between `advance` calls,
/// so integrating node to node along a fine grid stays cheap.
#[derive(Debug, Clone)]
pub struct Dopri5<const N: usize> {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    h: f64,
}

impl<const N: usize> Dopri5<N> {
    pub fn new(rtol: f64, atol: f64, h_initial: f64) -> Self {
        Self { rtol, atol, h_min: 1e-14, h: h_initial }
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Integrates `y' = f(t, y)` from `*t` to `t_end` (forward only).
    ///
    /// A right-hand-side error during a trial step shrinks the step; it is
    /// returned once the step would fall below `h_min`.
    pub fn advance<F, E, O>(
        &mut self,
        f: &mut F,
        t: &mut f64,
        y: &mut [f64; N],
        t_end: f64,
        mut observe: O,
    ) -> Result<Advance, E>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
        O: FnMut(f64, &[f64; N]) -> ControlFlow<()>,
    {
        let mut k1 = f(*t, y)?;
        while *t < t_end {
            let remaining = t_end - *t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            match self.trial(f, *t, y, &k1, h) {
                Ok((y_new, k7, err)) if err <= 1.0 => {
                    *t = if last { t_end } else { *t + h };
                    *y = y_new;
                    k1 = k7;
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    // Keep the natural step when the last step was shortened to land on t_end.
                    if !last || h * grow < self.h {
                        self.h = h * grow;
                    }
                    if observe(*t, y).is_break() {
                        return Ok(Advance::Stopped);
                    }
                }
                Ok((_, _, err)) => {
                    self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
                Err(e) => {
                    self.h = h * 0.25;
                    if self.h < self.h_min {
                        return Err(e);
                    }
                }
            }
            if self.h < self.h_min {
                self.h = self.h_min;
            }
        }
        Ok(Advance::Reached)
    }

    #[allow(clippy::type_complexity)]
    fn trial<F, E>(&self, f: &mut F, t: f64, y: &[f64; N], k1: &[f64; N], h: f64) -> Result<([f64; N], [f64; N], f64), E>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    {
        let stage = |coefs: &[(f64, &[f64; N])]| {
            let mut out = *y;
            for (i, o) in out.iter_mut().enumerate() {
                *o += h * coefs.iter().map(|(a, k)| a * k[i]).sum::<f64>();
            }
            out
        };
        let k2 = f(t + C2 * h, &stage(&[(A21, k1)]))?;
        let k3 = f(t + C3 * h, &stage(&[(A31, k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h, &stage(&[(A41, k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(t + C5 * h, &stage(&[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(t + h, &stage(&[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
        let y_new = stage(&[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new)?;
        let mut sum = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            sum += (e / scale).powi(2);
        }
        Ok((y_new, k7, (sum / N as f64).sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn exponential_decay() {
        let mut s = Dopri5::<1>::new(1e-10, 0.0, 0.1);
        let mut t = 0.0;
        let mut y = [1.0];
        let mut f = |_t: f64, y: &[f64; 1]| Ok::<_, Infallible>([-2.0 * y[0]]);
        s.advance(&mut f, &mut t, &mut y, 3.0, |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(t, 3.0);
        assert!((y[0] / (-6.0f64).exp() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_over_grid() {
        let mut s = Dopri5::<2>::new(1e-11, 1e-14, 0.1);
        let mut f = |_t: f64, y: &[f64; 2]| Ok::<_, Infallible>([y[1], -y[0]]);
        let mut t = 0.0;
        let mut y = [0.0, 1.0];
        for i in 1..=100 {
            let target = i as f64 * 0.1;
            s.advance(&mut f, &mut t, &mut y, target, |_, _| ControlFlow::Continue(())).unwrap();
            assert!((y[0] - target.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn observer_stops() {
        let mut s = Dopri5::<1>::new(1e-8, 0.0, 0.01);
        let mut f = |_t: f64, y: &[f64; 1]| Ok::<_, Infallible>([y[0]]);
        let mut t = 0.0;
        let mut y = [1.0];
        let out = s
            .advance(&mut f, &mut t, &mut y, 10.0, |_, y| {
                if y[0] > 100.0 {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            })
            .unwrap();
        assert_eq!(out, Advance::Stopped);
        assert!(y[0] > 100.0 && t < 10.0);
    }

    #[test]
    fn rhs_error_surfaces_after_step_collapse() {
        let mut s = Dopri5::<1>::new(1e-8, 0.0, 0.1);
        let mut f = |t: f64, y: &[f64; 1]| if t > 0.5 { Err("wall") } else { Ok([y[0]]) };
        let mut t = 0.0;
        let mut y = [1.0];
        let err = s.advance(&mut f, &mut t, &mut y, 1.0, |_, _| ControlFlow::Continue(()));
        assert_eq!(err, Err("wall"));
        assert!(t <= 0.5 && t > 0.49);
    }
}
