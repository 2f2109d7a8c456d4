//! Three curves for the demo page. The plain functions do the work and are
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use casimir_core::electrostatics::{sphere_plane_force, sphere_plane_force_asymptotic, ElectrostaticConfig};
use casimir_core::interp::linear_grid;
use casimir_core::lifshitz::{ideal_sphere_force, lifshitz_sphere_force, LifshitzSettings};
use casimir_core::optics::{drude_eps_imag_axis, DrudeParams};
use casimir_core::{Error, Result};
use wasm_bindgen::prelude::*;

/// Sampled curve plus a reference curve on the same abscissa.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    x: Vec<f64>,
    y: Vec<f64>,
    reference: Vec<f64>,
}

#[wasm_bindgen]
impl Series {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.y.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> Vec<f64> {
        self.reference.clone()
    }
}

fn grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || !(2..=2000).contains(&points) {
        return Err(Error::Validation(format!("need 0 < {lo} < {hi} and 2..=2000 points, got {points}")));
    }
    Ok(linear_grid(lo, hi, points))
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    grid(lo, hi, points)?;
    Ok(linear_grid(lo.ln(), hi.ln(), points).into_iter().map(f64::exp).collect())
}

/// Drude-metal Lifshitz force (y) against the ideal conductor (reference),
/// both in pN, over z in nm. No roughness or thermal factors.
pub fn lifshitz_series(omega_p: f64, gamma: f64, radius_um: f64, z_min_nm: f64, z_max_nm: f64, points: usize) -> Result<Series> {
    let drude = DrudeParams::new(omega_p, gamma)?;
    let r = radius_um * 1e-6;
    // the page redraws on every slider move, so trade accuracy for speed
    let settings = LifshitzSettings {
        rel_tol: 1e-4,
        ..Default::default()
    };
    let x = grid(z_min_nm, z_max_nm, points)?;
    let mut y = Vec::with_capacity(x.len());
    let mut reference = Vec::with_capacity(x.len());
    for &z in &x {
        y.push(lifshitz_sphere_force(&drude, r, z * 1e-9, &settings)?.value * 1e12);
        reference.push(ideal_sphere_force(r, z * 1e-9)? * 1e12);
    }
    Ok(Series { x, y, reference })
}

/// Exact image-series force (y) and its small-gap asymptote (reference), pN.
pub fn electrostatic_series(radius_um: f64, delta_v_mv: f64, z_min_nm: f64, z_max_nm: f64, points: usize) -> Result<Series> {
    let cfg = ElectrostaticConfig::new(radius_um * 1e-6, delta_v_mv * 1e-3, 0.0);
    let x = grid(z_min_nm, z_max_nm, points)?;
    let mut y = Vec::with_capacity(x.len());
    let mut reference = Vec::with_capacity(x.len());
    for &z in &x {
        y.push(sphere_plane_force(&cfg, z * 1e-9)? * 1e12);
        reference.push(sphere_plane_force_asymptotic(&cfg, z * 1e-9)? * 1e12);
    }
    Ok(Series { x, y, reference })
}

/// ε(iξ) of a Drude metal on a log grid of ξ in eV; reference is the
/// plasma-model limit γ = 0.
pub fn drude_series(omega_p: f64, gamma: f64, xi_min: f64, xi_max: f64, points: usize) -> Result<Series> {
    let drude = DrudeParams::new(omega_p, gamma)?;
    let x = log_grid(xi_min, xi_max, points)?;
    let mut y = Vec::with_capacity(x.len());
    let mut reference = Vec::with_capacity(x.len());
    for &xi in &x {
        y.push(drude_eps_imag_axis(&drude, xi)?);
        reference.push(1.0 + omega_p * omega_p / (xi * xi));
    }
    Ok(Series { x, y, reference })
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = lifshitzForce)]
pub fn lifshitz_force_js(omega_p: f64, gamma: f64, radius_um: f64, z_min_nm: f64, z_max_nm: f64, points: usize) -> std::result::Result<Series, JsError> {
    lifshitz_series(omega_p, gamma, radius_um, z_min_nm, z_max_nm, points).map_err(js)
}

#[wasm_bindgen(js_name = electrostaticForce)]
pub fn electrostatic_force_js(radius_um: f64, delta_v_mv: f64, z_min_nm: f64, z_max_nm: f64, points: usize) -> std::result::Result<Series, JsError> {
    electrostatic_series(radius_um, delta_v_mv, z_min_nm, z_max_nm, points).map_err(js)
}

#[wasm_bindgen(js_name = drudePermittivity)]
pub fn drude_permittivity_js(omega_p: f64, gamma: f64, xi_min: f64, xi_max: f64, points: usize) -> std::result::Result<Series, JsError> {
    drude_series(omega_p, gamma, xi_min, xi_max, points).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drude_force_is_weaker_than_ideal() {
        let s = lifshitz_series(11.5, 0.05, 95.65, 62.0, 350.0, 5).unwrap();
        for (f, i) in s.y.iter().zip(&s.reference) {
            assert!(*f < 0.0 && f.abs() < i.abs());
        }
        // 0.46 of ideal at 62 nm for gold
        assert!((s.y[0] / s.reference[0] - 0.46).abs() < 0.01, "{}", s.y[0] / s.reference[0]);
    }

    #[test]
    fn electrostatic_series_approaches_asymptote_at_small_gaps() {
        let s = electrostatic_series(95.65, 253.0, 50.0, 3000.0, 4).unwrap();
        assert!((s.y[0] / s.reference[0] - 1.0).abs() < 5e-3);
        let zero = electrostatic_series(95.65, 0.0, 50.0, 3000.0, 4).unwrap();
        assert!(zero.y.iter().all(|f| *f == 0.0));
    }

    #[test]
    fn drude_permittivity_falls_and_stays_below_plasma_limit() {
        let s = drude_series(11.5, 0.05, 1e-3, 1e3, 50).unwrap();
        assert!((s.x[0] - 1e-3).abs() < 1e-15 && (s.x[49] / 1e3 - 1.0).abs() < 1e-12);
        assert!(s.y.windows(2).all(|w| w[1] < w[0]));
        assert!(s.y.iter().zip(&s.reference).all(|(e, p)| e < p));
    }

    #[test]
    fn bad_ranges_are_rejected() {
        assert!(electrostatic_series(95.65, 3.0, 100.0, 50.0, 10).is_err());
        assert!(drude_series(11.5, 0.05, 0.0, 1.0, 10).is_err());
        assert!(lifshitz_series(11.5, 0.05, 95.65, 62.0, 350.0, 1).is_err());
    }
}
