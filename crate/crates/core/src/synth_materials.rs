//! Analytic materials used as oracles for the optics and Lifshitz code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::log_grid;
use crate::optics::{build_permittivity, DielectricTable, DrudeParams, GridSpec, ImagFreqPermittivity};

/// Smallest ε accepted as a stand-in for a perfect conductor.
pub const MIN_PROXY_MAGNITUDE: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaterialRecipe {
    /// Parameters in eV.
    Drude { omega_p: f64, gamma: f64 },
    Constant { eps: f64 },
    PerfectConductorProxy { magnitude: f64 },
}

impl MaterialRecipe {
    pub const GOLD: Self = Self::Drude {
        omega_p: 11.5,
        gamma: 0.05,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Drude { omega_p, gamma } => DrudeParams { omega_p, gamma }
                .validate()
                .map_err(|e| Error::Config(e.to_string())),
            Self::Constant { eps } if !(eps >= 1.0 && eps.is_finite()) => {
                Err(Error::Config(format!("constant permittivity {eps} must be finite and at least 1")))
            }
            Self::PerfectConductorProxy { magnitude } if !(magnitude >= MIN_PROXY_MAGNITUDE && magnitude.is_finite()) => {
                Err(Error::Config(format!(
                    "perfect-conductor proxy magnitude {magnitude} is below {MIN_PROXY_MAGNITUDE:e}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Photon-energy grid for synthesized ε″ tables, eV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyGrid {
    pub e_min: f64,
    pub e_max: f64,
    pub count: usize,
}

impl Default for EnergyGrid {
    /// Same span as the tabulated gold data, 0.125–9919 eV.
    fn default() -> Self {
        Self {
            e_min: 0.125,
            e_max: 9919.0,
            count: 2000,
        }
    }
}

impl EnergyGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_min > 0.0 && self.e_max > self.e_min && self.e_max.is_finite()) || self.count < 2 {
            return Err(Error::Config(format!("bad energy grid {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum SynthesizedMaterial {
    /// ε″ samples, to go through the Kramers–Kronig transform.
    Table(DielectricTable),
    /// ε(iξ) directly, bypassing the transform.
    Direct(ImagFreqPermittivity),
}

/// Drude ε″ sampled on `grid`, or a flat ε(iξ) cache for constant media.
pub fn synthesize_table(recipe: &MaterialRecipe, grid: &EnergyGrid) -> Result<SynthesizedMaterial> {
    recipe.validate()?;
    match *recipe {
        MaterialRecipe::Drude { omega_p, gamma } => {
            grid.validate()?;
            let p = DrudeParams { omega_p, gamma };
            let rows = log_grid(grid.e_min, grid.e_max, grid.count)
                .into_iter()
                .map(|w| (w, p.eps2(w)))
                .collect();
            let label = format!("synthetic Drude eps2 (omega_p = {omega_p} eV, gamma = {gamma} eV)");
            Ok(SynthesizedMaterial::Table(DielectricTable::new(rows, label)?))
        }
        MaterialRecipe::Constant { eps: value } | MaterialRecipe::PerfectConductorProxy { magnitude: value } => Ok(
            SynthesizedMaterial::Direct(ImagFreqPermittivity::from_constant(value, &GridSpec::default())?),
        ),
    }
}

/// The recipe as a ready ε(iξ) cache; Drude tables go through the full
/// transform, with the Drude tail below the grid.
pub fn recipe_permittivity(recipe: &MaterialRecipe, energy: &EnergyGrid, xi: &GridSpec) -> Result<ImagFreqPermittivity> {
    match synthesize_table(recipe, energy)? {
        SynthesizedMaterial::Table(table) => {
            let MaterialRecipe::Drude { omega_p, gamma } = *recipe else {
                unreachable!("only Drude recipes produce tables")
            };
            build_permittivity(&table, Some(&DrudeParams { omega_p, gamma }), xi)
        }
        SynthesizedMaterial::Direct(cache) => Ok(cache),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifshitz::{ideal_sphere_force, lifshitz_sphere_force, LifshitzSettings};
    use crate::optics::{drude_eps_imag_axis, kk_to_imaginary_axis, Permittivity};

    const R: f64 = 95.65e-6;

    #[test]
    fn drude_table_transforms_back_to_closed_form() {
        let SynthesizedMaterial::Table(t) = synthesize_table(&MaterialRecipe::GOLD, &EnergyGrid::default()).unwrap() else {
            panic!("expected a table");
        };
        assert_eq!(t.rows().len(), 2000);
        assert_eq!(t.energy_range(), (0.125, 9919.0));
        for xi in [0.01, 1.0, 30.0] {
            let kk = kk_to_imaginary_axis(&t, Some(&DrudeParams::GOLD), xi).unwrap();
            let exact = drude_eps_imag_axis(&DrudeParams::GOLD, xi).unwrap();
            assert!((kk / exact - 1.0).abs() < 1e-4, "{xi}: {kk} vs {exact}");
        }
    }

    #[test]
    fn constant_media() {
        let vacuum = recipe_permittivity(
            &MaterialRecipe::Constant { eps: 1.0 },
            &EnergyGrid::default(),
            &GridSpec::default(),
        )
        .unwrap();
        assert_eq!(vacuum.eps_imag(3.3).unwrap(), 1.0);
        let f = lifshitz_sphere_force(&vacuum, R, 100e-9, &LifshitzSettings::default()).unwrap();
        assert_eq!(f.value, 0.0);

        let proxy = recipe_permittivity(
            &MaterialRecipe::PerfectConductorProxy { magnitude: 1e8 },
            &EnergyGrid::default(),
            &GridSpec::default(),
        )
        .unwrap();
        let f = lifshitz_sphere_force(&proxy, R, 100e-9, &LifshitzSettings::default()).unwrap();
        assert!((f.value / ideal_sphere_force(R, 100e-9).unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn invalid_recipes() {
        for r in [
            MaterialRecipe::PerfectConductorProxy { magnitude: 1e5 },
            MaterialRecipe::Constant { eps: 0.5 },
            MaterialRecipe::Drude { omega_p: -1.0, gamma: 0.05 },
        ] {
            assert!(matches!(synthesize_table(&r, &EnergyGrid::default()), Err(Error::Config(_))), "{r:?}");
        }
        let bad_grid = EnergyGrid {
            e_min: 1.0,
            e_max: 0.5,
            count: 10,
        };
        assert!(synthesize_table(&MaterialRecipe::GOLD, &bad_grid).is_err());
    }

    #[test]
    fn recipe_json_shape() {
        let r: MaterialRecipe = serde_json::from_str(r#"{"kind":"perfect-conductor-proxy","magnitude":1e8}"#).unwrap();
        assert_eq!(r, MaterialRecipe::PerfectConductorProxy { magnitude: 1e8 });
        let s = serde_json::to_string(&MaterialRecipe::GOLD).unwrap();
        assert!(s.contains("\"kind\":\"drude\""));
    }
}
