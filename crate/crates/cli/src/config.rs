//! The single JSON document every command reads.
//!
//! Quantities are SI (metres, newtons, volts) like the library types they
//! deserialize into; photon energies stay in eV. Relative paths are taken
//! from the directory holding the config file.

use std::path::{Path, PathBuf};

use casimir_core::analysis::AnalysisSettings;
use casimir_core::calibration::CalibrationSettings;
use casimir_core::interp::linear_grid;
use casimir_core::lifshitz::{GeometryConfig, LifshitzSettings};
use casimir_core::optics::{DrudeParams, GridSpec};
use casimir_core::synth_materials::{EnergyGrid, MaterialRecipe};
use casimir_core::synthetic::{ExperimentPlan, NoiseSpec, SyntheticTruth};
use casimir_core::theory::TheoryTableSpec;
use casimir_core::{io, Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum MaterialSource {
    Recipe {
        recipe: MaterialRecipe,
        #[serde(default)]
        energy_grid: EnergyGrid,
    },
    /// Dielectric CSV, optionally extrapolated below its first row with Drude.
    Table { path: PathBuf, drude: Option<DrudeParams> },
}

/// Separations written by `theory`; `z` overrides the uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryGrid {
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
    pub z: Option<Vec<f64>>,
}

impl Default for TheoryGrid {
    fn default() -> Self {
        Self {
            z_min: 62e-9,
            z_max: 350e-9,
            points: 30,
            z: None,
        }
    }
}

impl TheoryGrid {
    pub fn separations(&self) -> Result<Vec<f64>> {
        let zs = match &self.z {
            Some(z) => z.clone(),
            None if self.points >= 2 => linear_grid(self.z_min, self.z_max, self.points),
            None => vec![self.z_min],
        };
        if zs.is_empty() || zs.iter().any(|z| !z.is_finite()) || zs[0] <= 0.0 || zs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("theory separations must be positive and increasing".into()));
        }
        Ok(zs)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationInputs {
    /// Scan CSVs taken at the calibration voltages, each with a `# V1=` line.
    pub electrostatic: Vec<PathBuf>,
    pub residual_plus: Option<PathBuf>,
    pub residual_minus: Option<PathBuf>,
    /// Hysteresis JSON; identity when absent.
    pub hysteresis: Option<PathBuf>,
    pub settings: CalibrationSettings,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisInputs {
    pub scans: Vec<PathBuf>,
    /// Output of `calibrate`. Without it the calibration runs first.
    pub calibration_report: Option<PathBuf>,
    pub settings: AnalysisSettings,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub truth: SyntheticTruth,
    pub noise: NoiseSpec,
    pub plan: ExperimentPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialSource,
    pub lifshitz: LifshitzSettings,
    pub permittivity_grid: GridSpec,
    /// Tabulation used wherever many force evaluations are needed.
    pub theory_table: TheoryTableSpec,
    pub theory: TheoryGrid,
    pub calibration: CalibrationInputs,
    pub analysis: AnalysisInputs,
    pub synth: SynthSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig {
                sphere_radius: 95.65e-6,
                temperature: 300.0,
                roughness_amplitude: 1e-9,
            },
            material: MaterialSource::Recipe {
                recipe: MaterialRecipe::GOLD,
                energy_grid: EnergyGrid::default(),
            },
            lifshitz: LifshitzSettings::default(),
            permittivity_grid: GridSpec::default(),
            theory_table: TheoryTableSpec::default(),
            theory: TheoryGrid::default(),
            calibration: CalibrationInputs::default(),
            analysis: AnalysisInputs::default(),
            synth: SynthSpec::default(),
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tolerance: Option<f64>,
}

/// A config plus the directory its relative paths hang off.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn from_path(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let (mut config, base) = match path {
            Some(p) => {
                let text = io::read_to_string(p)?;
                let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
                    Error::Config(format!("{}: {e}", p.display()))
                })?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (config, base)
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(tol) = overrides.tolerance {
            config.lifshitz.rel_tol = tol;
        }
        let mut loaded = Self { config, base };
        if let Some(out) = &overrides.out {
            // taken relative to the working directory, not the config
            let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
            loaded.config.out_dir = cwd.join(out);
        }
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        let bad = |e: Error| Error::Config(e.to_string());
        c.geometry.validate().map_err(bad)?;
        c.lifshitz.validate().map_err(bad)?;
        c.permittivity_grid.validate().map_err(bad)?;
        if let MaterialSource::Recipe { recipe, energy_grid } = &c.material {
            recipe.validate()?;
            energy_grid.validate()?;
        }
        let t = &c.theory_table;
        if !(t.z_min > 0.0 && t.z_max > t.z_min) {
            return Err(Error::Config(format!("theory table range [{:e}, {:e}] m is not increasing", t.z_min, t.z_max)));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    /// Resolved path that must already exist.
    pub fn input(&self, p: &Path) -> Result<PathBuf> {
        let full = self.resolve(p);
        if !full.is_file() {
            return Err(Error::io(
                &full,
                std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
            ));
        }
        Ok(full)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let out = &self.config.out_dir;
        let dir = if out.as_os_str() == "." { self.base.clone() } else { self.resolve(out) };
        let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    /// SHA-256 of the effective config, hex. The output directory is left
    /// out so identical runs into different places hash alike.
    pub fn hash(&self) -> String {
        let mut c = self.config.clone();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.analysis.settings.points, 2583);
    }

    #[test]
    fn partial_sections_fill_in() {
        let c: RunConfig = serde_json::from_str(
            r#"{ "material": { "source": "recipe", "recipe": { "kind": "perfect-conductor-proxy", "magnitude": 1e8 } },
                 "lifshitz": { "rel_tol": 1e-5 },
                 "theory": { "z": [62e-9, 1e-7] } }"#,
        )
        .unwrap();
        assert_eq!(c.lifshitz.rel_tol, 1e-5);
        assert_eq!(c.lifshitz.xi_cutoff_factor, LifshitzSettings::default().xi_cutoff_factor);
        assert_eq!(c.theory.separations().unwrap(), vec![62e-9, 1e-7]);
        assert!(serde_json::from_str::<RunConfig>(r#"{ "sed": 3 }"#).is_err());
    }

    #[test]
    fn overrides_and_hash() {
        let a = Loaded::from_path(None, &Overrides::default()).unwrap();
        let b = Loaded::from_path(
            None,
            &Overrides {
                seed: Some(7),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(b.config.seed, 7);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let bad = Loaded::from_path(
            None,
            &Overrides {
                tolerance: Some(0.5),
                ..Default::default()
            },
        );
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn decreasing_theory_grid_is_rejected() {
        let g = TheoryGrid {
            z: Some(vec![2e-7, 1e-7]),
            ..Default::default()
        };
        assert!(g.separations().is_err());
    }
}
