//! Gold fixtures shared by the integration tests. The theory table takes
//! several seconds, so each test binary builds it once.

#![allow(dead_code)]

use std::sync::OnceLock;

use casimir_core::lifshitz::{GeometryConfig, LifshitzSettings};
use casimir_core::optics::{GridSpec, ImagFreqPermittivity};
use casimir_core::synth_materials::{recipe_permittivity, EnergyGrid, MaterialRecipe};
use casimir_core::theory::{ForceModel, TheoryCurve, TheoryTableSpec};

pub const R: f64 = 95.65e-6;

pub fn gold_geometry() -> GeometryConfig {
    GeometryConfig {
        sphere_radius: R,
        temperature: 300.0,
        roughness_amplitude: 1e-9,
    }
}

pub fn gold_permittivity() -> &'static ImagFreqPermittivity {
    static P: OnceLock<ImagFreqPermittivity> = OnceLock::new();
    P.get_or_init(|| recipe_permittivity(&MaterialRecipe::GOLD, &EnergyGrid::default(), &GridSpec::default()).unwrap())
}

pub fn gold_theory() -> &'static TheoryCurve {
    static T: OnceLock<TheoryCurve> = OnceLock::new();
    T.get_or_init(|| {
        TheoryCurve::build(
            gold_permittivity(),
            &gold_geometry(),
            &LifshitzSettings::default(),
            &TheoryTableSpec::default(),
        )
        .unwrap()
    })
}

pub fn gold_model() -> &'static ForceModel {
    static M: OnceLock<ForceModel> = OnceLock::new();
    M.get_or_init(|| ForceModel::with_theory(gold_theory().clone()).unwrap())
}
