//! Sphere–plate Casimir force from the Lifshitz formula in the
//! proximity-force form, plus the ideal-conductor closed forms.
//!
//! Sign convention: attractive forces are negative.
//!
//! With ξ = (c/2z)·t and u = p·t the double integral becomes
//!
//! ```text
//! F(z) = R ħ c / (16 π z³) ∫₀^T dt ∫_t^T du  u · [ln(1 − r_TE² e^(−u)) + ln(1 − r_TM² e^(−u))]
//! ```
//!
//! where the cutoff `T` bounds p·t (and hence t, since p ≥ 1). The
//! permittivity depends only on t, so it is queried once per outer node.

use std::cell::RefCell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::Permittivity;
use crate::quadrature::{integrate_with_breakpoints, QuadSettings};
use crate::units::{C, EV_TO_JOULE, HBAR, ZETA3};

/// Sphere radius plus the inputs the correction stage needs later.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// m
    pub sphere_radius: f64,
    /// K
    pub temperature: f64,
    /// m
    pub roughness_amplitude: f64,
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sphere_radius > 0.0 && self.sphere_radius.is_finite()) {
            return Err(Error::Validation(format!("sphere radius {} m must be positive", self.sphere_radius)));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Validation(format!("temperature {} K must be non-negative", self.temperature)));
        }
        if !(self.roughness_amplitude >= 0.0) {
            return Err(Error::Validation(format!(
                "roughness amplitude {} m must be non-negative",
                self.roughness_amplitude
            )));
        }
        Ok(())
    }
}

/// Quadrature control for [`lifshitz_sphere_force`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifshitzSettings {
    /// Target relative error of the outer integral; the inner one runs 10x tighter.
    pub rel_tol: f64,
    /// Truncation: the kernel is integrated over p·t ≤ this value, so the
    /// discarded tail is bounded by e^(−xi_cutoff_factor).
    pub xi_cutoff_factor: f64,
    /// Lower end of the t integration; `[0, t_min]` is bounded analytically.
    pub t_min: f64,
}

impl Default for LifshitzSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            xi_cutoff_factor: 40.0,
            t_min: 1e-8,
        }
    }
}

impl LifshitzSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-2) {
            return Err(Error::Validation(format!("rel_tol {} must lie in (0, 1e-2)", self.rel_tol)));
        }
        if !(self.xi_cutoff_factor >= 10.0) {
            return Err(Error::Validation(format!(
                "cutoff factor {} is too small to bound truncation",
                self.xi_cutoff_factor
            )));
        }
        if !(self.t_min > 0.0 && self.t_min < 1e-4) {
            return Err(Error::Validation(format!("t_min {} must lie in (0, 1e-4)", self.t_min)));
        }
        Ok(())
    }
}

/// Force value together with the achieved accuracy of its quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LifshitzForce {
    /// N
    pub value: f64,
    pub rel_error: f64,
    pub evaluations: usize,
}

/// Ideal-conductor parallel-plate pressure −π²ħc/(240 z⁴), N/m².
pub fn ideal_plate_pressure(z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::domain(format!("separation must be positive, got {z} m")));
    }
    Ok(-PI * PI * HBAR * C / (240.0 * z.powi(4)))
}

/// Ideal-conductor sphere–plate force −π³ħcR/(360 z³), N.
pub fn ideal_sphere_force(radius: f64, z: f64) -> Result<f64> {
    if !(radius > 0.0) || !(z > 0.0) {
        return Err(Error::domain(format!(
            "radius and separation must be positive, got R = {radius} m, z = {z} m"
        )));
    }
    Ok(-PI.powi(3) * HBAR * C * radius / (360.0 * z.powi(3)))
}

/// Warning text when the proximity approximation is being stretched.
pub fn proximity_warning(radius: f64, z: f64) -> Option<String> {
    (z > radius / 10.0).then(|| format!("separation {z:e} m exceeds R/10 = {:e} m", radius / 10.0))
}

/// Wave-vector variables of the kernel at one (p, ξ) point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveVariables {
    pub p: f64,
    /// rad/s
    pub xi: f64,
    pub eps: f64,
    /// √(ε − 1 + p²)
    pub k: f64,
}

impl WaveVariables {
    pub fn new(p: f64, xi: f64, eps: f64) -> Self {
        Self {
            p,
            xi,
            eps,
            k: (eps - 1.0 + p * p).sqrt(),
        }
    }

    /// ((K − p)/(K + p))² and 1 minus it, both without cancellation.
    pub fn te(&self) -> (f64, f64) {
        let (k, p) = (self.k, self.p);
        let sum = k + p;
        let r = (self.eps - 1.0) / (sum * sum);
        (r * r, 4.0 * p * k / (sum * sum))
    }

    /// ((K − εp)/(K + εp))² and 1 minus it, both without cancellation.
    pub fn tm(&self) -> (f64, f64) {
        let (k, p, eps) = (self.k, self.p, self.eps);
        let sum = k + eps * p;
        // K² − ε²p² = (ε − 1)(1 − (ε + 1)p²)
        let r = (eps - 1.0) * (1.0 - (eps + 1.0) * p * p) / (sum * sum);
        (r * r, 4.0 * eps * p * k / (sum * sum))
    }
}

/// ln(1 − r² e^(−u)) given r² and 1 − r².
fn log_one_minus(r2: f64, one_minus_r2: f64, u: f64) -> f64 {
    let x = r2 * (-u).exp();
    if x < 0.5 {
        (-x).ln_1p()
    } else {
        (one_minus_r2 - r2 * (-u).exp_m1()).ln()
    }
}

/// Sum of the TE and TM logarithms at fixed t, as a function of u = p·t.
fn kernel_logs(eps: f64, xi: f64, t: f64, u: f64) -> f64 {
    let w = WaveVariables::new(u / t, xi, eps);
    let (te2, te1) = w.te();
    let (tm2, tm1) = w.tm();
    log_one_minus(te2, te1, u) + log_one_minus(tm2, tm1, u)
}

/// Lifshitz sphere–plate force at separation `z` (m) for sphere radius `radius` (m).
pub fn lifshitz_sphere_force(
    perm: &dyn Permittivity,
    radius: f64,
    z: f64,
    settings: &LifshitzSettings,
) -> Result<LifshitzForce> {
    if !(radius > 0.0) || !(z > 0.0) {
        return Err(Error::domain(format!(
            "radius and separation must be positive, got R = {radius} m, z = {z} m"
        )));
    }
    settings.validate()?;
    let cutoff = settings.xi_cutoff_factor;
    let t_min = settings.t_min;
    // t → ξ in eV
    let xi_per_t = C / (2.0 * z);
    let xi_ev_per_t = HBAR * xi_per_t / EV_TO_JOULE;

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let mut evaluations = 0usize;
    let inner_settings = QuadSettings {
        rel_tol: settings.rel_tol / 10.0,
        abs_tol: 0.0,
        max_intervals: 400,
    };

    let outer = |t: f64| -> f64 {
        if failure.borrow().is_some() {
            return 0.0;
        }
        let eps = match perm.eps_imag(t * xi_ev_per_t) {
            Ok(e) if e >= 1.0 => e,
            Ok(e) => {
                *failure.borrow_mut() = Some(Error::domain(format!("permittivity {e} below 1 at t = {t}")));
                return 0.0;
            }
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                return 0.0;
            }
        };
        if eps == 1.0 {
            return 0.0;
        }
        let xi = t * xi_per_t;
        let mut bps = vec![t];
        bps.extend([0.1, 1.0, 4.0, 12.0].into_iter().filter(|&b| b > t && b < cutoff));
        bps.push(cutoff);
        match integrate_with_breakpoints(|u| u * kernel_logs(eps, xi, t, u), &bps, inner_settings) {
            Ok(r) => r.value,
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                0.0
            }
        }
    };
    let outer_counted = |t: f64| {
        evaluations += 1;
        outer(t)
    };
    let mut bps = vec![t_min];
    bps.extend([1e-5, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0].into_iter().filter(|&b| b > t_min && b < cutoff));
    bps.push(cutoff);
    let outer_settings = QuadSettings {
        rel_tol: settings.rel_tol,
        abs_tol: 0.0,
        max_intervals: 2000,
    };
    let prefactor = radius * HBAR * C / (16.0 * PI * z.powi(3));
    let result = integrate_with_breakpoints(outer_counted, &bps, outer_settings);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let integral = result.map_err(|e| match e {
        Error::Numeric {
            estimate, achieved, ..
        } => Error::Numeric {
            message: format!("Lifshitz integral did not converge at z = {z:e} m"),
            estimate: prefactor * estimate,
            achieved,
        },
        other => other,
    })?;
    if integral.value == 0.0 {
        return Ok(LifshitzForce {
            value: 0.0,
            rel_error: 0.0,
            evaluations,
        });
    }
    // |inner integral| ≤ 2ζ(3) for reflection factors in [0, 1).
    let sliver = 2.0 * ZETA3 * t_min;
    let rel_error = (integral.abs_error + sliver) / integral.value.abs();
    if sliver > 0.1 * settings.rel_tol * integral.value.abs() {
        return Err(Error::Numeric {
            message: format!("t < {t_min} sliver is not negligible at z = {z:e} m; lower t_min"),
            estimate: prefactor * integral.value,
            achieved: rel_error,
        });
    }
    Ok(LifshitzForce {
        value: prefactor * integral.value,
        rel_error,
        evaluations,
    })
}

/// [`lifshitz_sphere_force`] over many separations, in parallel when enabled.
pub fn lifshitz_force_curve(
    perm: &dyn Permittivity,
    radius: f64,
    zs: &[f64],
    settings: &LifshitzSettings,
) -> Result<Vec<LifshitzForce>> {
    crate::parallel::try_map(zs, |&z| lifshitz_sphere_force(perm, radius, z, settings))
}
