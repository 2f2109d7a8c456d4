//! Synthetic approach scans built by running the calibration relations
//! backwards from known truth parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::{ApproachScan, CalibrationBundle, HysteresisModel, ScanSample};
use crate::error::{Error, Result};
use crate::interp::linear_grid;
use crate::theory::ForceModel;

/// Parameters the calibration chain is supposed to recover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTruth {
    /// m per signal unit
    pub m: f64,
    /// m
    pub z0: f64,
    /// V
    pub v2: f64,
    /// N per signal unit
    pub force_per_signal: f64,
    /// Contact-line slope is 1/(ratio·m); anything but 1 makes it useless for m.
    pub contact_slope_ratio: f64,
    /// Distortion applied to the recorded piezo extension; the calibration is
    /// expected to undo it with the same model.
    pub hysteresis: HysteresisModel,
}

impl Default for SyntheticTruth {
    fn default() -> Self {
        Self {
            m: 8.9e-9,
            z0: 32.7e-9,
            v2: 3e-3,
            force_per_signal: 10e-9,
            contact_slope_ratio: 0.8,
            hysteresis: HysteresisModel::identity(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Standard deviation of the force noise per sample, N.
    pub force_std: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { force_std: 19e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElectrostaticPlan {
    /// V
    pub voltages: Vec<f64>,
    pub scans_per_voltage: usize,
    /// Separation range above contact, m.
    pub span: f64,
    /// Separation step, m.
    pub step: f64,
    /// Samples recorded while pushing past contact.
    pub contact_samples: usize,
}

impl Default for ElectrostaticPlan {
    fn default() -> Self {
        Self {
            voltages: vec![0.256, 0.202, 0.154],
            scans_per_voltage: 1,
            span: 1000e-9,
            step: 0.1e-9,
            contact_samples: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualPlan {
    /// Magnitude of the ± plate voltage, V.
    pub voltage: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub samples: usize,
}

impl Default for ResidualPlan {
    fn default() -> Self {
        Self {
            voltage: 3.0,
            z_min: 3e-6,
            z_max: 5e-6,
            samples: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CasimirPlan {
    pub scans: usize,
    /// Analysis window and its grid; scans are sampled on this grid extended
    /// by `margin_points` on each side.
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
    pub margin_points: usize,
    /// Plate voltage during the force scans, V.
    pub v1: f64,
}

impl Default for CasimirPlan {
    fn default() -> Self {
        Self {
            scans: 30,
            z_min: 62e-9,
            z_max: 350e-9,
            points: 2583,
            margin_points: 20,
            v1: 0.0,
        }
    }
}

impl CasimirPlan {
    pub fn analysis_grid(&self) -> Vec<f64> {
        linear_grid(self.z_min, self.z_max, self.points)
    }

    fn sampling_grid(&self, z_floor: f64) -> Vec<f64> {
        let dz = (self.z_max - self.z_min) / (self.points - 1) as f64;
        let m = self.margin_points as i64;
        (-m..self.points as i64 + m)
            .map(|k| self.z_min + k as f64 * dz)
            .filter(|z| *z > z_floor)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub electrostatic: ElectrostaticPlan,
    pub residual: ResidualPlan,
    pub casimir: Option<CasimirPlan>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            electrostatic: ElectrostaticPlan::default(),
            residual: ResidualPlan::default(),
            casimir: Some(CasimirPlan::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticExperiment {
    pub electrostatic: Vec<ApproachScan>,
    pub residual_plus: ApproachScan,
    pub residual_minus: ApproachScan,
    pub casimir: Vec<ApproachScan>,
    pub hysteresis: HysteresisModel,
}

impl SyntheticExperiment {
    pub fn calibration_bundle(&self) -> CalibrationBundle {
        CalibrationBundle {
            electrostatic: self.electrostatic.clone(),
            residual_plus: self.residual_plus.clone(),
            residual_minus: self.residual_minus.clone(),
            hysteresis: self.hysteresis.clone(),
        }
    }
}

struct Generator<'a> {
    model: &'a ForceModel,
    truth: &'a SyntheticTruth,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn true_signal(&self, z: f64, v1: f64) -> Result<f64> {
        let f = self.model.total_force(z, v1, self.truth.v2).map_err(|e| {
            Error::Generation(format!("force model failed at z = {z:e} m: {e}"))
        })?;
        Ok(-f / self.truth.force_per_signal)
    }

    fn noisy(&mut self, s: f64) -> f64 {
        match &self.noise {
            Some(n) => s + n.sample(&mut self.rng),
            None => s,
        }
    }

    /// Scan over true separations `zs`, optionally preceded by contact samples.
    fn scan(&mut self, zs: &[f64], v1: f64, contact_samples: usize, contact_step: f64, label: String) -> Result<ApproachScan> {
        let t = self.truth;
        if let Some(z) = zs.iter().find(|z| !(**z > 0.0)) {
            return Err(Error::Generation(format!("separation {z:e} m is not positive")));
        }
        let mut clean = Vec::with_capacity(zs.len() + contact_samples);
        if contact_samples > 0 {
            let s_v = self.true_signal(zs[0], v1)?;
            let zp_v = zs[0] - t.z0 + t.m * s_v;
            let slope = 1.0 / (t.contact_slope_ratio * t.m);
            for i in (1..=contact_samples).rev() {
                let dz = i as f64 * contact_step;
                clean.push((zp_v - dz, s_v - dz * slope));
            }
        }
        for &z in zs {
            let s = self.true_signal(z, v1)?;
            clean.push((z - t.z0 + t.m * s, s));
        }
        if clean.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Generation(format!(
                "piezo extension is not monotone for '{label}'; the cantilever would snap in (raise force_per_signal)"
            )));
        }
        let mut samples = Vec::with_capacity(clean.len());
        for (zp, s) in clean {
            let signal = self.noisy(s);
            let z_piezo = t.hysteresis.invert(zp)?;
            samples.push(ScanSample { z_piezo, signal });
        }
        ApproachScan::new(samples, Some(v1), label).map_err(|e| Error::Generation(e.to_string()))
    }
}

/// Deterministic synthetic scans for the whole calibration and force
/// measurement, given the truth parameters and a seed.
pub fn generate_synthetic_experiment(
    model: &ForceModel,
    truth: &SyntheticTruth,
    noise: &NoiseSpec,
    plan: &ExperimentPlan,
    seed: u64,
) -> Result<SyntheticExperiment> {
    if !(truth.m > 0.0 && truth.z0 > 0.0 && truth.force_per_signal > 0.0 && truth.contact_slope_ratio > 0.0) {
        return Err(Error::Generation(format!("infeasible truth {truth:?}")));
    }
    if !(noise.force_std >= 0.0) {
        return Err(Error::Generation(format!("noise level {} must be non-negative", noise.force_std)));
    }
    let es = &plan.electrostatic;
    if es.voltages.is_empty() || es.scans_per_voltage == 0 || !(es.step > 0.0 && es.span > es.step) {
        return Err(Error::Generation(format!("bad electrostatic plan {es:?}")));
    }
    let sigma = noise.force_std / truth.force_per_signal;
    let mut g = Generator {
        model,
        truth,
        noise: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite positive sigma")),
        rng: ChaCha8Rng::seed_from_u64(seed),
    };

    let n_es = (es.span / es.step).round() as usize;
    let zs: Vec<f64> = (0..=n_es).map(|j| truth.z0 + j as f64 * es.step).collect();
    let mut electrostatic = Vec::new();
    for &v in &es.voltages {
        for k in 0..es.scans_per_voltage {
            let label = format!("electrostatic V1={v} scan {k}");
            electrostatic.push(g.scan(&zs, v, es.contact_samples, es.step, label)?);
        }
    }

    let rp = &plan.residual;
    if !(rp.voltage > 0.0 && rp.z_max > rp.z_min && rp.samples >= ApproachScan::MIN_SAMPLES) {
        return Err(Error::Generation(format!("bad residual-potential plan {rp:?}")));
    }
    let zr = linear_grid(rp.z_min, rp.z_max, rp.samples);
    let residual_plus = g.scan(&zr, rp.voltage, 0, 0.0, format!("residual V1=+{}", rp.voltage))?;
    let residual_minus = g.scan(&zr, -rp.voltage, 0, 0.0, format!("residual V1=-{}", rp.voltage))?;

    let mut casimir = Vec::new();
    if let Some(cp) = &plan.casimir {
        if !(cp.z_max > cp.z_min && cp.points >= 2) {
            return Err(Error::Generation(format!("bad force-scan plan {cp:?}")));
        }
        let zc = cp.sampling_grid(truth.z0);
        for k in 0..cp.scans {
            casimir.push(g.scan(&zc, cp.v1, 0, 0.0, format!("casimir scan {k}"))?);
        }
    }
    Ok(SyntheticExperiment {
        electrostatic,
        residual_plus,
        residual_minus,
        casimir,
        hysteresis: truth.hysteresis.clone(),
    })
}
