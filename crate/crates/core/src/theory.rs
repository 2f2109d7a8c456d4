//! Complete theoretical Casimir force (Lifshitz × roughness × temperature)
//! and the total force model used by calibration fits and the synthetic
//! data generator.

use serde::{Deserialize, Serialize};

use crate::corrections::{roughness_factor, temperature_factor};
use crate::electrostatics::ImageSeriesTable;
use crate::error::{Error, Result};
use crate::interp::UniformLogTable;
use crate::lifshitz::{lifshitz_sphere_force, GeometryConfig, LifshitzSettings};
use crate::optics::Permittivity;

/// Lifshitz force with both perturbative corrections applied, N.
pub fn casimir_force(
    perm: &dyn Permittivity,
    geometry: &GeometryConfig,
    settings: &LifshitzSettings,
    z: f64,
) -> Result<f64> {
    geometry.validate()?;
    let base = lifshitz_sphere_force(perm, geometry.sphere_radius, z, settings)?.value;
    Ok(base * roughness_factor(geometry.roughness_amplitude, z)? * temperature_factor(geometry.temperature, z)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryTableSpec {
    /// m
    pub z_min: f64,
    /// m
    pub z_max: f64,
    pub nodes_per_e_fold: f64,
}

/// Default span 10 nm to 5.5 μm. Beyond ~5 μm at room temperature the thermal
/// factor bends over sharply and interpolation degrades.
impl Default for TheoryTableSpec {
    fn default() -> Self {
        Self {
            z_min: 10e-9,
            z_max: 5.5e-6,
            nodes_per_e_fold: 24.0,
        }
    }
}

/// [`casimir_force`] tabulated as ln(−F) on a uniform ln z grid.
///
/// Building costs one Lifshitz evaluation per node; lookups are a few
/// nanoseconds, which is what the fits and the generator need.
#[derive(Clone, Debug)]
pub struct TheoryCurve {
    table: UniformLogTable,
    geometry: GeometryConfig,
    spec: TheoryTableSpec,
    description: String,
}

impl TheoryCurve {
    pub fn build(
        perm: &dyn Permittivity,
        geometry: &GeometryConfig,
        settings: &LifshitzSettings,
        spec: &TheoryTableSpec,
    ) -> Result<Self> {
        geometry.validate()?;
        if !(spec.z_min > 0.0 && spec.z_max > spec.z_min) || !(spec.nodes_per_e_fold >= 4.0) {
            return Err(Error::Validation(format!("bad theory table spec {spec:?}")));
        }
        let count = (((spec.z_max / spec.z_min).ln() * spec.nodes_per_e_fold).ceil() as usize + 1).max(8);
        let table = UniformLogTable::build(spec.z_min, spec.z_max, count, |&z| {
            let f = casimir_force(perm, geometry, settings, z)?;
            if !(f < 0.0) {
                return Err(Error::Validation(format!(
                    "theory force {f:e} N at z = {z:e} m is not attractive; nothing to tabulate"
                )));
            }
            Ok((-f).ln())
        })?;
        Ok(Self {
            table,
            geometry: *geometry,
            spec: *spec,
            description: perm.describe(),
        })
    }

    pub fn force(&self, z: f64) -> Result<f64> {
        self.table.eval(z).map(|v| -v.exp()).ok_or_else(|| {
            Error::domain(format!(
                "separation {z:e} m outside the theory table [{:e}, {:e}] m",
                self.spec.z_min, self.spec.z_max
            ))
        })
    }

    pub fn geometry(&self) -> &GeometryConfig {
        &self.geometry
    }

    pub fn spec(&self) -> &TheoryTableSpec {
        &self.spec
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Electrostatic (image series) plus optional Casimir force on the sphere.
#[derive(Clone, Debug)]
pub struct ForceModel {
    radius: f64,
    electrostatic: ImageSeriesTable,
    casimir: Option<TheoryCurve>,
}

impl ForceModel {
    /// Electrostatic table spanning `[z_min, z_max]`.
    pub fn new(radius: f64, z_min: f64, z_max: f64, casimir: Option<TheoryCurve>) -> Result<Self> {
        if let Some(c) = &casimir {
            if (c.geometry().sphere_radius - radius).abs() > 1e-12 * radius {
                return Err(Error::Validation(format!(
                    "theory curve radius {} m differs from model radius {radius} m",
                    c.geometry().sphere_radius
                )));
            }
        }
        Ok(Self {
            radius,
            electrostatic: ImageSeriesTable::for_separations(radius, z_min, z_max)?,
            casimir,
        })
    }

    /// Model spanning the theory curve's own range.
    pub fn with_theory(theory: TheoryCurve) -> Result<Self> {
        let spec = *theory.spec();
        Self::new(theory.geometry().sphere_radius, spec.z_min, spec.z_max, Some(theory))
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn theory(&self) -> Option<&TheoryCurve> {
        self.casimir.as_ref()
    }

    pub fn electrostatic_force(&self, z: f64, v1: f64, v2: f64) -> Result<f64> {
        self.electrostatic.force(self.radius, v1 - v2, z)
    }

    pub fn casimir_force(&self, z: f64) -> Result<f64> {
        match &self.casimir {
            Some(c) => c.force(z),
            None => Ok(0.0),
        }
    }

    pub fn total_force(&self, z: f64, v1: f64, v2: f64) -> Result<f64> {
        Ok(self.electrostatic_force(z, v1, v2)? + self.casimir_force(z)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electrostatics::{sphere_plane_force, ElectrostaticConfig};
    use crate::lifshitz::ideal_sphere_force;
    use crate::optics::ConstantPermittivity;

    const R: f64 = 95.65e-6;

    fn proxy_curve() -> TheoryCurve {
        let geometry = GeometryConfig {
            sphere_radius: R,
            temperature: 0.0,
            roughness_amplitude: 0.0,
        };
        let spec = TheoryTableSpec {
            z_min: 50e-9,
            z_max: 500e-9,
            nodes_per_e_fold: 24.0,
        };
        TheoryCurve::build(&ConstantPermittivity(1e8), &geometry, &LifshitzSettings::default(), &spec).unwrap()
    }

    #[test]
    fn table_follows_direct_evaluation() {
        let curve = proxy_curve();
        let perm = ConstantPermittivity(1e8);
        for z in [50e-9, 77.7e-9, 123.4e-9, 499e-9] {
            let direct = casimir_force(&perm, curve.geometry(), &LifshitzSettings::default(), z).unwrap();
            let fast = curve.force(z).unwrap();
            assert!((fast / direct - 1.0).abs() < 1e-6, "{z}: {fast} vs {direct}");
            assert!((fast / ideal_sphere_force(R, z).unwrap() - 1.0).abs() < 0.01);
        }
        assert!(curve.force(40e-9).is_err());
    }

    #[test]
    fn vacuum_gap_has_nothing_to_tabulate() {
        let geometry = GeometryConfig {
            sphere_radius: R,
            temperature: 300.0,
            roughness_amplitude: 1e-9,
        };
        let spec = TheoryTableSpec {
            z_min: 50e-9,
            z_max: 60e-9,
            nodes_per_e_fold: 4.0,
        };
        assert!(TheoryCurve::build(&ConstantPermittivity(1.0), &geometry, &LifshitzSettings::default(), &spec).is_err());
    }

    #[test]
    fn model_sums_components() {
        let curve = proxy_curve();
        let model = ForceModel::with_theory(curve.clone()).unwrap();
        let z = 100e-9;
        let es = sphere_plane_force(&ElectrostaticConfig::new(R, 0.2, 0.003), z).unwrap();
        let total = model.total_force(z, 0.2, 0.003).unwrap();
        assert!((total - es - curve.force(z).unwrap()).abs() < 1e-9 * total.abs());
        assert!(ForceModel::new(2.0 * R, 50e-9, 500e-9, Some(curve)).is_err());
        let es_only = ForceModel::new(R, 1e-6, 5e-6, None).unwrap();
        assert_eq!(es_only.casimir_force(3e-6).unwrap(), 0.0);
    }
}
