//! Shape-preserving interpolation on sorted abscissae.

use crate::error::{Error, Result};

/// Piecewise cubic Hermite interpolant with Fritsch–Carlson slopes. Keeps the
/// data's monotonicity between nodes and reproduces node values exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Validation("interpolant needs equally many x and y values".into()));
        }
        if x.len() < 2 {
            return Err(Error::Validation("interpolant needs at least two nodes".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "interpolant nodes must be finite and strictly increasing".into(),
            ));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= 0.0 {
                    slopes[i] = 0.0;
                } else {
                    // weighted harmonic mean (Fritsch–Butland form)
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, slopes })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Evaluate at `t`; `None` outside the node range.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = segment_index(&self.x, t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        if s == 0.0 {
            return Some(self.y[i]);
        }
        if s == 1.0 {
            return Some(self.y[i + 1]);
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Some(h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1])
    }
}

// Non-centred three-point end slope, clipped to stay shape preserving.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Index `i` with `x[i] <= t <= x[i+1]`, for `t` inside the range.
pub(crate) fn segment_index(x: &[f64], t: f64) -> usize {
    let n = x.len();
    match x.partition_point(|&v| v <= t) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    }
}

/// Piecewise-linear interpolation; `None` outside `[x0, x_last]`.
pub fn linear(x: &[f64], y: &[f64], t: f64) -> Option<f64> {
    if x.len() < 2 || !(t >= x[0] && t <= x[x.len() - 1]) {
        return None;
    }
    let i = segment_index(x, t);
    let w = (t - x[i]) / (x[i + 1] - x[i]);
    Some(y[i] + w * (y[i + 1] - y[i]))
}

/// `count` points spaced evenly in log between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// `count` points spaced evenly between `lo` and `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// Samples on a uniform grid in `ln x`, interpolated with local four-point
/// Lagrange polynomials. Fourth-order accurate for smooth data, which the
/// monotone interpolant is not; used for fast force tables.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformLogTable {
    ln_lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl UniformLogTable {
    /// Tabulate `f` at `count` log-spaced points over `[lo, hi]`.
    pub fn build<F>(lo: f64, hi: f64, count: usize, f: F) -> Result<Self>
    where
        F: Fn(&f64) -> Result<f64> + Sync + Send,
    {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) || count < 4 {
            return Err(Error::Validation(format!(
                "log table needs 0 < lo < hi and at least 4 nodes, got [{lo}, {hi}] x {count}"
            )));
        }
        let xs = log_grid(lo, hi, count);
        let values = crate::parallel::try_map(&xs, f)?;
        Ok(Self {
            ln_lo: lo.ln(),
            step: (hi.ln() - lo.ln()) / (count - 1) as f64,
            values,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (
            self.ln_lo.exp(),
            (self.ln_lo + self.step * (self.values.len() - 1) as f64).exp(),
        )
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        let n = self.values.len();
        let u = (x.ln() - self.ln_lo) / self.step;
        let last = (n - 1) as f64;
        // small slack for round-off at the ends
        if !(u >= -1e-9 && u <= last + 1e-9) {
            return None;
        }
        let u = u.clamp(0.0, last);
        let i = (u.floor() as usize).clamp(1, n - 3) - 1;
        let s = u - i as f64;
        let y = &self.values[i..i + 4];
        let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
        Some(
            -y[0] * b * c * d / 6.0 + y[1] * a * c * d / 2.0 - y[2] * a * b * d / 2.0 + y[3] * a * b * c / 6.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_cubics_roughly() {
        let x = linear_grid(0.0, 2.0, 41);
        let y: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        let p = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(p.eval(*xi).unwrap(), *yi);
        }
        let t = 1.2345;
        assert!((p.eval(t).unwrap() - t * t * t).abs() < 1e-3);
        assert!(p.eval(2.1).is_none());
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0], vec![1.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn linear_and_grids() {
        assert_eq!(linear(&[0.0, 2.0], &[1.0, 3.0], 1.0), Some(2.0));
        assert_eq!(linear(&[0.0, 2.0], &[1.0, 3.0], 2.5), None);
        let g = log_grid(1e-4, 1e4, 9);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[8], 1e4);
        assert!((g[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_log_table_is_fourth_order() {
        let t = UniformLogTable::build(1.0, 100.0, 200, |x| Ok(x.ln().sin())).unwrap();
        for x in [1.0, 1.37, 9.9, 55.5, 100.0] {
            assert!((t.eval(x).unwrap() - x.ln().sin()).abs() < 1e-8, "{x}");
        }
        assert!(t.eval(0.5).is_none());
        assert!(t.eval(101.0).is_none());
        assert!(UniformLogTable::build(1.0, 1.0, 10, |_| Ok(0.0)).is_err());
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(steps in proptest::collection::vec(0.0f64..5.0, 3..30), probes in proptest::collection::vec(0.0f64..1.0, 20)) {
            let n = steps.len();
            let x: Vec<f64> = (0..n).map(|i| i as f64 + 0.3 * (i as f64).sin()).collect();
            let mut acc = 0.0;
            let y: Vec<f64> = steps.iter().map(|s| { acc -= s; acc }).collect();
            let p = MonotoneCubic::new(x.clone(), y).unwrap();
            let span = x[n - 1] - x[0];
            let mut ts: Vec<f64> = probes.iter().map(|u| x[0] + u * span).collect();
            ts.sort_by(f64::total_cmp);
            let vals: Vec<f64> = ts.iter().map(|t| p.eval(*t).unwrap()).collect();
            for w in vals.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}
