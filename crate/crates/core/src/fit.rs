//! Small damped Gauss–Newton (Levenberg–Marquardt) least-squares solver for
//! the one- to three-parameter fits of the calibration chain.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LmSettings {
    /// Converged once every |Δx_j| falls below `step_tol[j]`.
    pub step_tol: Vec<f64>,
    /// Finite-difference step per parameter (central differences).
    pub diff_step: Vec<f64>,
    pub max_iterations: usize,
    pub initial_lambda: f64,
}

impl LmSettings {
    pub fn new(step_tol: Vec<f64>, diff_step: Vec<f64>) -> Self {
        Self {
            step_tol,
            diff_step,
            max_iterations: 100,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub cost: f64,
    pub residual_count: usize,
    /// (JᵀJ)⁻¹ at the solution; multiply by cost/dof for parameter covariance.
    pub inverse_hessian: DMatrix<f64>,
    pub iterations: usize,
    /// Cost after each accepted step.
    pub trace: Vec<f64>,
}

impl LmResult {
    pub fn dof(&self) -> usize {
        self.residual_count.saturating_sub(self.params.len()).max(1)
    }

    /// Standard errors scaled by the residual variance (uniform unknown σ).
    pub fn scaled_std_errors(&self) -> Vec<f64> {
        let s2 = self.cost / self.dof() as f64;
        (0..self.params.len())
            .map(|j| (self.inverse_hessian[(j, j)] * s2).max(0.0).sqrt())
            .collect()
    }
}

/// Ordinary least-squares line y = intercept + slope·x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Zero when there are only two points.
    pub slope_std_error: f64,
    pub ssr: f64,
}

impl LineFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Validation("line fit needs equally many x and y values".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("line fit needs two points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(mx.abs());
    if !(sxx > 1e-24 * scale * scale * nf) {
        return Err(Error::SingularFit("all x values coincide; the slope is undetermined".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_std_error = if n > 2 { (ssr / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LineFit {
        intercept,
        slope,
        slope_std_error,
        ssr,
    })
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimize Σ rᵢ(x)² starting from `x0`.
///
/// `residuals(x, out)` fills `out` (fixed length `n`). An `Err` from it, or a
/// non-finite cost, marks the trial point as infeasible and the damping grows.
pub fn levenberg_marquardt<F>(mut residuals: F, x0: &[f64], n: usize, settings: &LmSettings) -> Result<LmResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let p = x0.len();
    if p == 0 || settings.step_tol.len() != p || settings.diff_step.len() != p {
        return Err(Error::Validation("fit settings do not match the parameter count".into()));
    }
    if n < p {
        return Err(Error::InsufficientData(format!("{n} residuals cannot determine {p} parameters")));
    }
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    residuals(&x, &mut r)?;
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(Error::FitFailed {
            message: "cost is not finite at the starting point".into(),
            trace: vec![],
        });
    }
    let mut trace = vec![cost];
    let mut lambda = settings.initial_lambda;
    let mut jac = DMatrix::<f64>::zeros(n, p);
    let mut rp = vec![0.0; n];
    let mut rm = vec![0.0; n];
    let mut trial = vec![0.0; n];

    for iteration in 1..=settings.max_iterations {
        jacobian(&mut residuals, &x, &settings.diff_step, &mut jac, &mut rp, &mut rm)?;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&r);

        let mut accepted = false;
        let mut step_small = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for j in 0..p {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-300);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-&jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let x_new: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            step_small = delta.iter().zip(&settings.step_tol).all(|(d, t)| d.abs() < *t);
            let ok = residuals(&x_new, &mut trial).is_ok();
            let new_cost = cost_of(&trial);
            if ok && new_cost.is_finite() && new_cost <= cost {
                x = x_new;
                std::mem::swap(&mut r, &mut trial);
                cost = new_cost;
                trace.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            if step_small {
                break;
            }
            lambda *= 10.0;
        }

        if step_small || (!accepted && cost == 0.0) {
            let inverse_hessian = jtj.try_inverse().ok_or_else(|| {
                Error::SingularFit("normal matrix is singular at the solution; parameters are degenerate".into())
            })?;
            return Ok(LmResult {
                params: x,
                cost,
                residual_count: n,
                inverse_hessian,
                iterations: iteration,
                trace,
            });
        }
        if !accepted {
            return Err(Error::FitFailed {
                message: format!("no downhill step found at iteration {iteration} (damping {lambda:e})"),
                trace,
            });
        }
    }
    Err(Error::FitFailed {
        message: format!("step tolerance not reached in {} iterations", settings.max_iterations),
        trace,
    })
}

fn jacobian<F>(
    residuals: &mut F,
    x: &[f64],
    steps: &[f64],
    jac: &mut DMatrix<f64>,
    rp: &mut [f64],
    rm: &mut [f64],
) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut xt = x.to_vec();
    for j in 0..x.len() {
        let h = steps[j];
        xt[j] = x[j] + h;
        residuals(&xt, rp)?;
        xt[j] = x[j] - h;
        residuals(&xt, rm)?;
        xt[j] = x[j];
        for i in 0..rp.len() {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_exact_data() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (-1.7 * t).exp()).collect();
        let settings = LmSettings::new(vec![1e-12, 1e-12], vec![1e-6, 1e-6]);
        let fit = levenberg_marquardt(
            |x, out| {
                for (i, t) in ts.iter().enumerate() {
                    out[i] = x[0] * (-x[1] * t).exp() - ys[i];
                }
                Ok(())
            },
            &[1.0, 1.0],
            ts.len(),
            &settings,
        )
        .unwrap();
        assert!((fit.params[0] - 3.0).abs() < 1e-10);
        assert!((fit.params[1] - 1.7).abs() < 1e-10);
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn linear_fit_std_error_matches_closed_form() {
        // y = a + b x with alternating ±0.1 noise
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| 1.0 + 2.0 * x + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let fit = levenberg_marquardt(
            |p, out| {
                for i in 0..xs.len() {
                    out[i] = p[0] + p[1] * xs[i] - ys[i];
                }
                Ok(())
            },
            &[0.0, 0.0],
            xs.len(),
            &LmSettings::new(vec![1e-12; 2], vec![1e-3; 2]),
        )
        .unwrap();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let se_b = (fit.cost / (n - 2.0) / sxx).sqrt();
        assert!((fit.scaled_std_errors()[1] / se_b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn line_fit_basics() {
        let f = line_fit(&[0.0, 1.0], &[0.0, 8.9]).unwrap();
        assert_eq!(f.slope, 8.9);
        assert_eq!(f.slope_std_error, 0.0);
        let f = line_fit(&[0.2, 0.4, 0.6], &[1.78, 3.56, 5.34]).unwrap();
        assert!((f.slope - 8.9).abs() < 1e-12);
        assert!(matches!(line_fit(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]), Err(Error::SingularFit(_))));
        assert!(matches!(line_fit(&[1.0], &[0.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // minimum of (sqrt(x) - 2)² at x = 4; negative x is rejected
        let fit = levenberg_marquardt(
            |x, out| {
                if x[0] <= 0.0 {
                    return Err(Error::domain("negative"));
                }
                out[0] = x[0].sqrt() - 2.0;
                Ok(())
            },
            &[0.5],
            1,
            &LmSettings::new(vec![1e-10], vec![1e-6]),
        )
        .unwrap();
        assert!((fit.params[0] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_parameters_are_reported() {
        let r = levenberg_marquardt(
            |x, out| {
                out[0] = x[0] + x[1] - 1.0;
                out[1] = 2.0 * (x[0] + x[1]) - 2.0;
                Ok(())
            },
            &[0.0, 0.0],
            2,
            &LmSettings::new(vec![1e-10; 2], vec![1e-6; 2]),
        );
        assert!(matches!(r, Err(Error::SingularFit(_)) | Err(Error::FitFailed { .. })), "{r:?}");
    }
}
