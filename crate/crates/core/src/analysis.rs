//! Scan averaging, electrostatic background subtraction and the rms
//! theory–experiment deviation used as the precision figure.

use serde::{Deserialize, Serialize};

use crate::calibration::{apply_hysteresis, separation, ApproachScan, HysteresisModel};
use crate::electrostatics::{sphere_plane_force, ElectrostaticConfig};
use crate::error::{Error, Result};
use crate::interp::{linear, linear_grid};
use crate::theory::TheoryCurve;

pub use crate::synthetic::{
    generate_synthetic_experiment, CasimirPlan, ElectrostaticPlan, ExperimentPlan, NoiseSpec, ResidualPlan,
    SyntheticExperiment, SyntheticTruth,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcePoint {
    /// m
    pub z: f64,
    /// N
    pub force: f64,
    /// N
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceCurve {
    points: Vec<ForcePoint>,
    pub label: String,
    /// Free-form provenance notes carried into output headers.
    pub notes: Vec<String>,
}

/// Relative z mismatch tolerated between grids that should be identical.
pub const GRID_MATCH_TOL: f64 = 1e-9;

impl ForceCurve {
    pub fn new(points: Vec<ForcePoint>, label: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("force curve has no points".into()));
        }
        if points.windows(2).any(|w| !(w[1].z > w[0].z)) {
            return Err(Error::Validation("force-curve separations must be strictly increasing".into()));
        }
        for p in &points {
            if !(p.z.is_finite() && p.force.is_finite()) || p.sigma.is_some_and(|s| !(s >= 0.0)) {
                return Err(Error::Validation(format!("bad force-curve point {p:?}")));
            }
        }
        Ok(Self {
            points,
            label: label.into(),
            notes: Vec::new(),
        })
    }

    pub fn from_values(zs: &[f64], forces: &[f64], label: impl Into<String>) -> Result<Self> {
        if zs.len() != forces.len() {
            return Err(Error::Validation("separation and force columns differ in length".into()));
        }
        let points = zs
            .iter()
            .zip(forces)
            .map(|(z, f)| ForcePoint {
                z: *z,
                force: *f,
                sigma: None,
            })
            .collect();
        Self::new(points, label)
    }

    pub fn points(&self) -> &[ForcePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn zs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.z).collect()
    }

    pub fn forces(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.force).collect()
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.points[0].z, self.points[self.points.len() - 1].z)
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Linear interpolation of force (and σ) onto `grid`.
    pub fn resample(&self, grid: &[f64]) -> Result<ForceCurve> {
        let (lo, hi) = self.z_range();
        if grid.is_empty() || grid[0] < lo || grid[grid.len() - 1] > hi {
            return Err(Error::Alignment(format!(
                "curve '{}' covers [{:.3}, {:.3}] nm but the grid needs [{:.3}, {:.3}] nm",
                self.label,
                lo * 1e9,
                hi * 1e9,
                grid.first().copied().unwrap_or(f64::NAN) * 1e9,
                grid.last().copied().unwrap_or(f64::NAN) * 1e9
            )));
        }
        let zs = self.zs();
        let fs = self.forces();
        let sig: Option<Vec<f64>> = self.points.iter().map(|p| p.sigma).collect();
        let points = grid
            .iter()
            .map(|&z| ForcePoint {
                z,
                force: linear(&zs, &fs, z).expect("grid inside the curve range"),
                sigma: sig.as_ref().map(|s| linear(&zs, s, z).expect("grid inside the curve range")),
            })
            .collect();
        let mut out = ForceCurve::new(points, self.label.clone())?;
        out.notes = self.notes.clone();
        Ok(out)
    }
}

/// Calibration constants needed to turn a raw scan into a force curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCalibration {
    /// m per signal unit
    pub m: f64,
    /// m
    pub z0: f64,
    /// V
    pub v2: f64,
    /// N per signal unit
    pub force_per_signal: f64,
}

/// (z, F) pairs of one scan, sorted by separation. Samples landing on the
/// same separation are merged.
pub fn scan_to_force_curve(scan: &ApproachScan, cal: &ScanCalibration) -> Result<ForceCurve> {
    let mut pts: Vec<(f64, f64)> = scan
        .samples()
        .iter()
        .map(|p| Ok((separation(p, cal.m, cal.z0)?, -cal.force_per_signal * p.signal)))
        .collect::<Result<_>>()?;
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points: Vec<ForcePoint> = Vec::with_capacity(pts.len());
    let mut run = 1.0;
    for (z, f) in pts {
        match points.last_mut() {
            Some(last) if last.z == z => {
                run += 1.0;
                last.force += (f - last.force) / run;
            }
            _ => {
                run = 1.0;
                points.push(ForcePoint { z, force: f, sigma: None });
            }
        }
    }
    ForceCurve::new(points, scan.metadata().to_string())
}

/// Pointwise mean and sample standard deviation over scans on one grid.
pub fn average_scans(scans: &[ForceCurve]) -> Result<ForceCurve> {
    if scans.len() < 2 {
        return Err(Error::InsufficientData(format!("averaging needs at least two scans, got {}", scans.len())));
    }
    let grid = scans[0].zs();
    for (i, s) in scans.iter().enumerate().skip(1) {
        if s.len() != grid.len() {
            return Err(Error::Alignment(format!(
                "scan {i} has {} points, scan 0 has {}",
                s.len(),
                grid.len()
            )));
        }
        if let Some((j, p)) = s
            .points()
            .iter()
            .enumerate()
            .find(|(j, p)| (p.z - grid[*j]).abs() > GRID_MATCH_TOL * grid[*j].abs())
        {
            return Err(Error::Alignment(format!(
                "scan {i} point {j} sits at {:.6} nm, scan 0 at {:.6} nm",
                p.z * 1e9,
                grid[j] * 1e9
            )));
        }
    }
    let k = scans.len() as f64;
    let points = grid
        .iter()
        .enumerate()
        .map(|(j, &z)| {
            let mean = scans.iter().map(|s| s.points[j].force).sum::<f64>() / k;
            let var = scans.iter().map(|s| (s.points[j].force - mean).powi(2)).sum::<f64>() / (k - 1.0);
            ForcePoint {
                z,
                force: mean,
                sigma: Some(var.sqrt()),
            }
        })
        .collect();
    Ok(ForceCurve::new(points, format!("average of {} scans", scans.len()))?
        .with_note("averaging scans introduces about ±1 nm uncertainty in the separation (not applied)"))
}

/// Pointwise removal of the sphere–plate electrostatic force.
pub fn subtract_electrostatic(curve: &ForceCurve, cfg: &ElectrostaticConfig) -> Result<ForceCurve> {
    let points = curve
        .points
        .iter()
        .map(|p| {
            Ok(ForcePoint {
                force: p.force - sphere_plane_force(cfg, p.z)?,
                ..*p
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = ForceCurve::new(points, curve.label.clone())?;
    out.notes = curve.notes.clone();
    out.notes.push(format!(
        "electrostatic force for V1 - V2 = {:e} V subtracted",
        cfg.delta_v()
    ));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    /// √(Σ(F_theory − F_experiment)²/N), N
    pub sigma_rms: f64,
    pub n_points: usize,
    /// Scan-to-scan standard deviation at `reference_z`, N (0 when unknown).
    pub per_point_std: f64,
    /// m
    pub reference_z: f64,
    pub scan_count: usize,
    /// σ over the largest |F_experiment|, capped at 1.
    pub precision_ratio: f64,
    /// m
    pub z_min: f64,
    pub z_max: f64,
}

/// rms deviation over points present in both curves (which must share z).
pub fn rms_deviation(theory: &ForceCurve, experiment: &ForceCurve) -> Result<PrecisionReport> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut fmax: f64 = 0.0;
    let mut i = 0;
    let th = theory.points();
    let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in experiment.points() {
        while i < th.len() && th[i].z < p.z * (1.0 - GRID_MATCH_TOL) {
            i += 1;
        }
        if i < th.len() && (th[i].z - p.z).abs() <= GRID_MATCH_TOL * p.z.abs() {
            sum += (th[i].force - p.force).powi(2);
            fmax = fmax.max(p.force.abs());
            n += 1;
            zmin = zmin.min(p.z);
            zmax = zmax.max(p.z);
        }
    }
    if n == 0 {
        let (a, b) = theory.z_range();
        let (c, d) = experiment.z_range();
        return Err(Error::Alignment(format!(
            "theory [{:.3}, {:.3}] nm and experiment [{:.3}, {:.3}] nm share no grid points",
            a * 1e9,
            b * 1e9,
            c * 1e9,
            d * 1e9
        )));
    }
    let sigma = (sum / n as f64).sqrt();
    let first = experiment.points()[0];
    Ok(PrecisionReport {
        sigma_rms: sigma,
        n_points: n,
        per_point_std: first.sigma.unwrap_or(0.0),
        reference_z: first.z,
        scan_count: 1,
        precision_ratio: if fmax > 0.0 { (sigma / fmax).min(1.0) } else { 1.0 },
        z_min: zmin,
        z_max: zmax,
    })
}

/// Theory curve sampled on `grid`.
pub fn theory_curve_on(theory: &TheoryCurve, grid: &[f64]) -> Result<ForceCurve> {
    let forces = grid.iter().map(|z| theory.force(*z)).collect::<Result<Vec<_>>>()?;
    let mut c = ForceCurve::from_values(grid, &forces, "theory")?;
    c.notes.push(theory.description().to_string());
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    /// Comparison window and grid, m.
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            z_min: 62e-9,
            z_max: 350e-9,
            points: 2583,
        }
    }
}

impl AnalysisSettings {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.z_min > 0.0 && self.z_max > self.z_min) || self.points < 2 {
            return Err(Error::Config(format!("bad analysis grid {self:?}")));
        }
        Ok(linear_grid(self.z_min, self.z_max, self.points))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOutput {
    /// Averaged scans with the electrostatic background removed.
    pub experiment: ForceCurve,
    pub theory: ForceCurve,
    pub report: PrecisionReport,
}

/// Average of scans recorded at identical piezo positions, taken sample by
/// sample: each point is the mean of one reading per scan, at the mean
/// calibrated separation. `None` when the scans do not share positions.
pub fn average_aligned_samples(scans: &[ApproachScan], cal: &ScanCalibration) -> Result<Option<ForceCurve>> {
    if scans.len() < 2 {
        return Err(Error::InsufficientData(format!("averaging needs at least two scans, got {}", scans.len())));
    }
    let sorted: Vec<_> = scans.iter().map(|s| s.ascending()).collect();
    let first = &sorted[0];
    let shared = sorted.iter().all(|s| {
        s.len() == first.len()
            && s.iter()
                .zip(first)
                .all(|(a, b)| (a.z_piezo - b.z_piezo).abs() <= GRID_MATCH_TOL * b.z_piezo.abs().max(1e-9))
    });
    if !shared {
        return Ok(None);
    }
    let k = scans.len() as f64;
    let mut points = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let mut z = 0.0;
        let mut f = 0.0;
        for s in &sorted {
            z += separation(&s[i], cal.m, cal.z0)?;
            f -= cal.force_per_signal * s[i].signal;
        }
        let (z, f) = (z / k, f / k);
        let var = sorted
            .iter()
            .map(|s| (-cal.force_per_signal * s[i].signal - f).powi(2))
            .sum::<f64>()
            / (k - 1.0);
        points.push(ForcePoint {
            z,
            force: f,
            sigma: Some(var.sqrt()),
        });
    }
    let curve = ForceCurve::new(points, format!("average of {} scans", scans.len()))
        .map_err(|e| Error::Alignment(format!("averaged separations are not monotone: {e}")))?;
    Ok(Some(
        curve
            .with_note("averaging scans introduces about ±1 nm uncertainty in the separation (not applied)")
            .with_note("averaged sample by sample over shared piezo positions"),
    ))
}

/// The run of consecutive points matching `grid` node for node, each within
/// one grid step of its node. `None` when the sampling does not line up.
fn match_grid(curve: &ForceCurve, grid: &[f64]) -> Option<ForceCurve> {
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let zs = curve.zs();
    let start = (0..zs.len()).min_by(|a, b| (zs[*a] - grid[0]).abs().total_cmp(&(zs[*b] - grid[0]).abs()))?;
    let run = curve.points().get(start..start + grid.len())?;
    if run.iter().zip(grid).any(|(p, g)| (p.z - g).abs() >= step) {
        return None;
    }
    let mut out = ForceCurve::new(run.to_vec(), curve.label.clone()).ok()?;
    out.notes = curve.notes.clone();
    Some(out)
}

/// Calibrate, average, subtract the residual electrostatic force and compare
/// with theory.
///
/// Scans sharing their piezo positions are averaged sample by sample and
/// compared with theory at the averaged separations, one point per grid node.
/// Otherwise every scan is linearly interpolated onto the grid before
/// averaging, which also averages neighbouring noise and so lowers σ.
pub fn analyze_scans(
    scans: &[ApproachScan],
    hysteresis: &HysteresisModel,
    cal: &ScanCalibration,
    theory: &TheoryCurve,
    settings: &AnalysisSettings,
) -> Result<AnalysisOutput> {
    let grid = settings.grid()?;
    let v1 = scans.first().and_then(|s| s.v1()).unwrap_or(0.0);
    if scans.iter().any(|s| (s.v1().unwrap_or(0.0) - v1).abs() > 1e-9) {
        return Err(Error::Config("force scans were taken at different plate voltages".into()));
    }
    let corrected = scans
        .iter()
        .map(|s| apply_hysteresis(hysteresis, s))
        .collect::<Result<Vec<_>>>()?;
    let aligned = average_aligned_samples(&corrected, cal)?.and_then(|c| match_grid(&c, &grid));
    let averaged = match aligned {
        Some(c) => c,
        None => {
            let curves = corrected
                .iter()
                .map(|s| scan_to_force_curve(s, cal)?.resample(&grid))
                .collect::<Result<Vec<_>>>()?;
            average_scans(&curves)?
        }
    };
    let es = ElectrostaticConfig::new(theory.geometry().sphere_radius, v1, cal.v2);
    let experiment = subtract_electrostatic(&averaged, &es)?;
    let theory_curve = theory_curve_on(theory, &experiment.zs())?;
    let mut report = rms_deviation(&theory_curve, &experiment)?;
    report.scan_count = scans.len();
    Ok(AnalysisOutput {
        experiment,
        theory: theory_curve,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const R: f64 = 95.65e-6;

    fn curve(fs: &[f64]) -> ForceCurve {
        let zs: Vec<f64> = (0..fs.len()).map(|i| (62.0 + i as f64) * 1e-9).collect();
        ForceCurve::from_values(&zs, fs, "c").unwrap()
    }

    #[test]
    fn curve_invariants() {
        assert!(ForceCurve::from_values(&[2.0, 1.0], &[0.0, 0.0], "x").is_err());
        let bad = ForcePoint {
            z: 1.0,
            force: 0.0,
            sigma: Some(-1.0),
        };
        assert!(ForceCurve::new(vec![bad], "x").is_err());
    }

    #[test]
    fn averaging_examples() {
        let a = curve(&[-1e-10, -2e-10, -3e-10]);
        let avg = average_scans(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(avg.forces(), a.forces());
        assert!(avg.points().iter().all(|p| p.sigma == Some(0.0)));
        assert!(avg.notes.iter().any(|n| n.contains("±1 nm")));
        assert!(matches!(average_scans(std::slice::from_ref(&a)), Err(Error::InsufficientData(_))));
        let short = curve(&[-1e-10, -2e-10]);
        assert!(matches!(average_scans(&[a, short]), Err(Error::Alignment(_))));
    }

    #[test]
    fn subtraction_examples() {
        let c = curve(&[-450e-12; 5]);
        let same = ElectrostaticConfig::new(R, 0.1, 0.1);
        assert_eq!(subtract_electrostatic(&c, &same).unwrap().forces(), c.forces());
        let small = ElectrostaticConfig::new(R, 0.0, 3e-3);
        let out = subtract_electrostatic(&c, &small).unwrap();
        let shift = out.points()[0].force - c.points()[0].force;
        assert!(shift > 0.0 && shift < 1e-3 * 450e-12, "{shift}");
        // adding the electrostatic force back restores the curve
        for (p, q) in out.points().iter().zip(c.points()) {
            let back = p.force + sphere_plane_force(&small, p.z).unwrap();
            assert!((back - q.force).abs() <= 1e-15 * q.force.abs());
        }
    }

    #[test]
    fn rms_examples() {
        let t = curve(&[-3e-10, -2e-10, -1e-10]);
        let r = rms_deviation(&t, &t).unwrap();
        assert_eq!(r.sigma_rms, 0.0);
        assert_eq!(r.n_points, 3);
        let shifted = curve(&[-3e-10 + 1e-12, -2e-10 + 1e-12, -1e-10 + 1e-12]);
        let r = rms_deviation(&t, &shifted).unwrap();
        assert!((r.sigma_rms - 1e-12).abs() < 1e-24);
        assert!((r.precision_ratio - 1e-12 / (3e-10 - 1e-12)).abs() < 1e-12);
        let far = ForceCurve::from_values(&[1e-6, 2e-6], &[0.0, 0.0], "far").unwrap();
        assert!(matches!(rms_deviation(&t, &far), Err(Error::Alignment(_))));
    }

    #[test]
    fn resample_examples() {
        let c = curve(&[-4.0, -2.0, 0.0]);
        let r = c.resample(&[62.5e-9, 63.0e-9]).unwrap();
        assert!((r.forces()[0] + 3.0).abs() < 1e-12);
        assert!((r.forces()[1] + 2.0).abs() < 1e-9);
        assert!(matches!(c.resample(&[61e-9]), Err(Error::Alignment(_))));
    }

    fn raw_scan(zp: &[f64], signal: &[f64]) -> ApproachScan {
        let samples = zp
            .iter()
            .zip(signal)
            .map(|(z, s)| crate::calibration::ScanSample { z_piezo: *z, signal: *s })
            .collect();
        ApproachScan::new(samples, Some(0.0), "raw").unwrap()
    }

    #[test]
    fn aligned_samples_average_readings_not_neighbours() {
        let cal = ScanCalibration {
            m: 10e-9,
            z0: 30e-9,
            v2: 0.0,
            force_per_signal: 1e-8,
        };
        let zp: Vec<f64> = (0..20).map(|i| 40e-9 + i as f64 * 1e-9).collect();
        let a: Vec<f64> = (0..20).map(|i| 0.01 + if i % 2 == 0 { 1e-3 } else { -1e-3 }).collect();
        let b: Vec<f64> = (0..20).map(|i| 0.01 + if i % 2 == 0 { -1e-3 } else { 1e-3 }).collect();
        let avg = average_aligned_samples(&[raw_scan(&zp, &a), raw_scan(&zp, &b)], &cal).unwrap().unwrap();
        for (i, p) in avg.points().iter().enumerate() {
            // separations average too: z0 + zp - m·s̄
            assert!((p.z - (30e-9 + zp[i] - 10e-9 * 0.01)).abs() < 1e-20);
            assert!((p.force + 1e-10).abs() < 1e-22);
            // two readings 2e-3 apart: sample std √2·1e-3 units
            assert!((p.sigma.unwrap() - 2f64.sqrt() * 1e-3 * 1e-8).abs() < 1e-20);
        }
        let shifted: Vec<f64> = zp.iter().map(|z| z + 0.3e-9).collect();
        assert!(average_aligned_samples(&[raw_scan(&zp, &a), raw_scan(&shifted, &b)], &cal).unwrap().is_none());
    }

    #[test]
    fn grid_matching_needs_node_for_node_points() {
        let zs: Vec<f64> = (0..30).map(|i| (60.0 + i as f64 + 0.3) * 1e-9).collect();
        let c = ForceCurve::from_values(&zs, &vec![-1e-10; 30], "c").unwrap();
        let grid = linear_grid(62e-9, 70e-9, 9);
        let m = match_grid(&c, &grid).unwrap();
        assert_eq!(m.len(), 9);
        assert!((m.points()[0].z - 62.3e-9).abs() < 1e-18);
        // twice as dense a grid cannot be matched one to one
        assert!(match_grid(&c, &linear_grid(62e-9, 70e-9, 17)).is_none());
        // grid running past the data
        assert!(match_grid(&c, &linear_grid(62e-9, 95e-9, 34)).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn offset_adds_in_quadrature(base in proptest::collection::vec(-1e-9f64..-1e-12, 5..40), delta in -1e-11f64..1e-11) {
            let t = curve(&base);
            let e = curve(&base.iter().map(|f| f + delta).collect::<Vec<_>>());
            let r = rms_deviation(&t, &e).unwrap();
            prop_assert!((r.sigma_rms.powi(2) - delta * delta).abs() <= 1e-9 * delta * delta + 1e-40);
        }

        #[test]
        fn averaging_is_order_independent(rows in proptest::collection::vec(proptest::collection::vec(-1e-9f64..0.0, 6), 2..6), rot in 0usize..6) {
            let curves: Vec<ForceCurve> = rows.iter().map(|r| curve(r)).collect();
            let mut shuffled = curves.clone();
            shuffled.rotate_left(rot % curves.len());
            shuffled.reverse();
            let a = average_scans(&curves).unwrap();
            let b = average_scans(&shuffled).unwrap();
            for (p, q) in a.points().iter().zip(b.points()) {
                prop_assert!((p.force - q.force).abs() <= 1e-24);
                prop_assert!((p.sigma.unwrap() - q.sigma.unwrap()).abs() <= 1e-24);
            }
        }
    }
}
