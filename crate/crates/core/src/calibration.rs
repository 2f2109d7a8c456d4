//! Calibration chain for approach scans: piezo hysteresis correction,
//! deflection coefficient from contact vertices, contact separation from
//! electrostatic fits, and the residual sphere potential from ±V scans.
//!
//! Sign conventions: `z_piezo` is the plate position relative to the contact
//! position of an undeflected cantilever (larger means farther apart), and the
//! photodiode signal is positive when the sphere is pulled toward the plate.
//! The absolute separation is z = z₀ + z_piezo − signal·m and the force on the
//! sphere is −force_per_signal·signal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, line_fit, LmResult, LmSettings};
use crate::theory::ForceModel;

const NM: f64 = 1e-9;
const NN: f64 = 1e-9;
const MV: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    /// m
    pub z_piezo: f64,
    /// Photodiode difference signal, dimensionless.
    pub signal: f64,
}

/// One force–distance record from a single approach of plate and sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproachScan {
    samples: Vec<ScanSample>,
    v1: Option<f64>,
    metadata: String,
}

impl ApproachScan {
    pub const MIN_SAMPLES: usize = 16;

    pub fn new(samples: Vec<ScanSample>, v1: Option<f64>, metadata: impl Into<String>) -> Result<Self> {
        if samples.len() < Self::MIN_SAMPLES {
            return Err(Error::Validation(format!(
                "scan has {} samples, at least {} are needed",
                samples.len(),
                Self::MIN_SAMPLES
            )));
        }
        if samples.iter().any(|s| !(s.z_piezo.is_finite() && s.signal.is_finite())) {
            return Err(Error::Validation("scan contains non-finite samples".into()));
        }
        let rising = samples.windows(2).all(|w| w[1].z_piezo > w[0].z_piezo);
        let falling = samples.windows(2).all(|w| w[1].z_piezo < w[0].z_piezo);
        if !(rising || falling) {
            return Err(Error::Validation("piezo extension is not strictly monotone within the scan".into()));
        }
        if let Some(v) = v1 {
            if !v.is_finite() {
                return Err(Error::Validation("applied voltage must be finite".into()));
            }
        }
        Ok(Self {
            samples,
            v1,
            metadata: metadata.into(),
        })
    }

    pub fn samples(&self) -> &[ScanSample] {
        &self.samples
    }

    pub fn v1(&self) -> Option<f64> {
        self.v1
    }

    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    /// Samples ordered by increasing piezo extension.
    pub fn ascending(&self) -> Vec<ScanSample> {
        let mut s = self.samples.clone();
        if s.len() > 1 && s[0].z_piezo > s[1].z_piezo {
            s.reverse();
        }
        s
    }

    fn voltage(&self) -> Result<f64> {
        self.v1
            .ok_or_else(|| Error::Calibration(format!("scan '{}' carries no applied voltage", self.metadata)))
    }
}

/// Deflection coefficient and signal-to-force scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalCalibration {
    /// m per signal unit
    pub m: f64,
    /// N per signal unit; known only after the electrostatic fits.
    pub force_per_signal: Option<f64>,
    /// m per signal unit; zero when only two vertices were available.
    pub m_uncertainty: f64,
}

/// Polynomial map from nominal to true piezo extension, acting on nanometres:
/// x ↦ c₁x + c₂x² + …
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HysteresisModel {
    pub coeffs: Vec<f64>,
    pub label: String,
}

/// Largest tolerated |correction| as a fraction of the extension.
pub const HYSTERESIS_GUARD: f64 = 0.05;

impl Default for HysteresisModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl HysteresisModel {
    pub fn identity() -> Self {
        Self {
            coeffs: vec![1.0],
            label: "identity".into(),
        }
    }

    fn poly_nm(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| (acc + c) * x)
    }

    fn slope_nm(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + (k + 1) as f64 * c)
    }

    /// Corrected extension for a nominal one, both in m.
    pub fn correct(&self, z_piezo: f64) -> f64 {
        self.poly_nm(z_piezo / NM) * NM
    }

    /// Nominal extension that maps onto `corrected` (Newton from the identity).
    pub fn invert(&self, corrected: f64) -> Result<f64> {
        let target = corrected / NM;
        let mut x = target;
        for _ in 0..60 {
            let f = self.poly_nm(x) - target;
            let d = self.slope_nm(x);
            if !(d > 0.0) {
                return Err(Error::Calibration(format!(
                    "hysteresis model '{}' is not increasing near {x} nm",
                    self.label
                )));
            }
            let step = f / d;
            x -= step;
            if step.abs() <= 1e-13 * x.abs().max(1.0) {
                return Ok(x * NM);
            }
        }
        Err(Error::Calibration(format!("could not invert hysteresis model '{}' at {target} nm", self.label)))
    }

    fn check(&self, z_piezo: f64) -> Result<()> {
        let x = z_piezo / NM;
        let rel = (self.poly_nm(x) - x).abs();
        if rel > HYSTERESIS_GUARD * x.abs() * (1.0 + 1e-12) {
            return Err(Error::Calibration(format!(
                "hysteresis model '{}' changes {x:.3} nm by {:.2}%, beyond the {:.0}% guard",
                self.label,
                100.0 * rel / x.abs(),
                100.0 * HYSTERESIS_GUARD
            )));
        }
        Ok(())
    }
}

pub fn apply_hysteresis(model: &HysteresisModel, scan: &ApproachScan) -> Result<ApproachScan> {
    if model.coeffs.is_empty() {
        return Err(Error::Calibration(format!("hysteresis model '{}' has no coefficients", model.label)));
    }
    let mut out = Vec::with_capacity(scan.samples.len());
    for s in &scan.samples {
        model.check(s.z_piezo)?;
        out.push(ScanSample {
            z_piezo: model.correct(s.z_piezo),
            signal: s.signal,
        });
    }
    ApproachScan::new(out, scan.v1, scan.metadata.clone()).map_err(|_| {
        Error::Calibration(format!(
            "hysteresis model '{}' breaks the monotonicity of scan '{}'",
            model.label, scan.metadata
        ))
    })
}

/// z = z₀ + z_piezo − signal·m.
pub fn separation(sample: &ScanSample, m: f64, z0: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::domain(format!("deflection coefficient must be positive, got {m}")));
    }
    let z = z0 + sample.z_piezo - sample.signal * m;
    if !(z > 0.0) {
        return Err(Error::domain(format!(
            "separation {z:e} m is not positive (z_piezo = {:e} m, signal = {})",
            sample.z_piezo, sample.signal
        )));
    }
    Ok(z)
}

/// Contact point of one scan at a known applied voltage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    /// V
    pub v1: f64,
    /// m
    pub z_piezo: f64,
    pub signal: f64,
}

/// Samples used for the contact-line fit.
pub const VERTEX_CONTACT_POINTS: usize = 10;
/// Samples used for the cubic fit of the free branch.
pub const VERTEX_FREE_POINTS: usize = 8;
/// Half-width of the changepoint window around the raw signal peak.
const VERTEX_SEARCH: usize = 64;

struct Split {
    k: usize,
    ssr: f64,
    line: (f64, f64),
    cubic: [f64; 4],
    origin: f64,
    scale: f64,
}

fn cubic_fit(x: &[f64], y: &[f64], origin: f64, scale: f64) -> Result<([f64; 4], f64)> {
    let n = x.len();
    let a = DMatrix::from_fn(n, 4, |i, j| ((x[i] - origin) / scale).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let c = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::SingularFit(format!("cubic fit of the free branch failed: {e}")))?;
    let ssr = (a * &c - b).norm_squared();
    Ok(([c[0], c[1], c[2], c[3]], ssr))
}

fn cubic_eval(c: &[f64; 4], t: f64) -> f64 {
    c[0] + t * (c[1] + t * (c[2] + t * c[3]))
}

fn cubic_slope(c: &[f64; 4], t: f64) -> f64 {
    c[1] + t * (2.0 * c[2] + t * 3.0 * c[3])
}

/// Locate the contact vertex: the split point where a straight contact line
/// (pushing region, samples before the split) and a cubic through the free
/// approach branch (samples from the split on) fit best, refined to the
/// intersection of the two fits.
pub fn detect_vertex(scan: &ApproachScan) -> Result<Vertex> {
    let v1 = scan.voltage()?;
    let s = scan.ascending();
    let n = s.len();
    let nc = VERTEX_CONTACT_POINTS;
    let nf = VERTEX_FREE_POINTS;
    let no_vertex = || {
        Error::InsufficientData(format!(
            "scan '{}' shows no contact vertex (needs a rising contact line meeting a falling free branch)",
            scan.metadata
        ))
    };
    let peak = s
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.signal.total_cmp(&b.1.signal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let xs: Vec<f64> = s.iter().map(|p| p.z_piezo).collect();
    let ys: Vec<f64> = s.iter().map(|p| p.signal).collect();
    // Coarse changepoint over one fixed window around the peak. The free branch
    // can be flatter than the noise, so the raw peak may sit well past contact.
    let a = peak.saturating_sub(VERTEX_SEARCH);
    let e = (peak + VERTEX_SEARCH + nf).min(n);
    let mut coarse: Option<(usize, f64)> = None;
    for k in (a + nc)..=e.saturating_sub(nf) {
        let ssr = line_fit(&xs[a..k], &ys[a..k])?.ssr
            + cubic_fit(&xs[k..e], &ys[k..e], xs[k], (xs[e - 1] - xs[k]).abs())?.1;
        if coarse.is_none_or(|(_, c)| ssr < c) {
            coarse = Some((k, ssr));
        }
    }
    let (centre, _) = coarse.ok_or_else(no_vertex)?;
    let lo = centre.saturating_sub(1).max(nc);
    let hi = (centre + 1).min(n.saturating_sub(nf));
    if lo > hi {
        return Err(no_vertex());
    }
    let mut best: Option<Split> = None;
    for k in lo..=hi {
        let line = line_fit(&xs[k - nc..k], &ys[k - nc..k])?;
        let origin = xs[k];
        let scale = (xs[k + nf - 1] - xs[k]).abs();
        let (cubic, cssr) = cubic_fit(&xs[k..k + nf], &ys[k..k + nf], origin, scale)?;
        let ssr = line.ssr + cssr;
        if best.as_ref().is_none_or(|b| ssr < b.ssr) {
            best = Some(Split {
                k,
                ssr,
                line: (line.intercept, line.slope),
                cubic,
                origin,
                scale,
            });
        }
    }
    let b = best.ok_or_else(no_vertex)?;
    let (c0, c1) = b.line;
    // chord slope over a longer free stretch; the cubic's end derivative is too noisy
    let k = b.k;
    let reach = (k + 4 * nf).min(n);
    let free_trend = line_fit(&xs[k..reach], &ys[k..reach])?.slope;
    if !(c1 > 0.0 && free_trend < 0.0) {
        return Err(no_vertex());
    }
    // Newton on line − cubic in the scaled variable
    let g = |t: f64| c0 + c1 * (b.origin + t * b.scale) - cubic_eval(&b.cubic, t);
    let dg = |t: f64| c1 * b.scale - cubic_slope(&b.cubic, t);
    let mut t = 0.0;
    for _ in 0..30 {
        let step = g(t) / dg(t);
        t -= step;
        if !t.is_finite() || step.abs() < 1e-15 {
            break;
        }
    }
    // the crossing belongs between the last contact and first free sample,
    // allowing one sample of slack on either side
    let left = (xs[k.saturating_sub(2)] - b.origin) / b.scale;
    let right = (xs[k + 1] - b.origin) / b.scale;
    let x = if t.is_finite() && t >= left && t <= right {
        b.origin + t * b.scale
    } else {
        xs[k]
    };
    Ok(Vertex {
        v1,
        z_piezo: x,
        signal: c0 + c1 * x,
    })
}

/// m from the straight line through the vertices in the (signal, z_piezo) plane.
pub fn fit_deflection_coefficient(vertices: &[Vertex]) -> Result<SignalCalibration> {
    let mut voltages: Vec<f64> = vertices.iter().map(|v| v.v1).collect();
    voltages.sort_by(f64::total_cmp);
    voltages.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    if vertices.len() < 2 || voltages.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need vertices at two or more distinct voltages, got {} vertices at {} voltages",
            vertices.len(),
            voltages.len()
        )));
    }
    let x: Vec<f64> = vertices.iter().map(|v| v.signal).collect();
    let y: Vec<f64> = vertices.iter().map(|v| v.z_piezo).collect();
    let fit = line_fit(&x, &y).map_err(|e| match e {
        Error::SingularFit(_) => Error::SingularFit("all vertices share the same signal; m is undetermined".into()),
        other => other,
    })?;
    if !(fit.slope > 0.0) {
        return Err(Error::Calibration(format!(
            "vertex line has non-positive slope {:e} m per unit",
            fit.slope
        )));
    }
    Ok(SignalCalibration {
        m: fit.slope,
        force_per_signal: None,
        m_uncertainty: fit.slope_std_error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactFitSettings {
    /// Co-fit the sphere potential instead of holding it at `v2`.
    pub fit_v2: bool,
    /// V; held fixed unless `fit_v2`, otherwise the starting value.
    pub v2: f64,
    /// V; reported when `v2` is held fixed.
    pub v2_uncertainty: f64,
    /// m; range scanned for the starting z₀.
    pub z0_search_min: f64,
    pub z0_search_max: f64,
    /// m
    pub z0_step_tol: f64,
    /// V
    pub v2_step_tol: f64,
    /// Known per-sample force noise, N. Sets the χ² scale when given.
    pub force_noise: Option<f64>,
    /// Scans per voltage needed before per-point ensemble σ is used.
    pub min_ensemble: usize,
}

impl Default for ContactFitSettings {
    fn default() -> Self {
        Self {
            fit_v2: false,
            v2: 0.0,
            v2_uncertainty: 0.0,
            z0_search_min: 12e-9,
            z0_search_max: 200e-9,
            z0_step_tol: 1e-4 * NM,
            v2_step_tol: 0.01 * MV,
            force_noise: None,
            min_ensemble: 3,
        }
    }
}

/// Above this contact separation the fit is flagged as suspicious.
pub const SUSPICIOUS_Z0: f64 = 200e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageFit {
    /// V
    pub v1: f64,
    pub scans: usize,
    /// m
    pub z0: f64,
    pub z0_uncertainty: f64,
    /// N per signal unit
    pub force_per_signal: f64,
    pub force_per_signal_uncertainty: f64,
    /// V
    pub v2: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// m; mean over voltages
    pub z0: f64,
    /// m; spread (sample std) over voltages, or the single fit's error
    pub z0_uncertainty: f64,
    /// V
    pub v2: f64,
    pub v2_uncertainty: f64,
    /// N per signal unit; mean over voltages
    pub force_per_signal: f64,
    pub chi2: f64,
    pub dof: usize,
    pub per_voltage: Vec<VoltageFit>,
    pub warnings: Vec<String>,
}

/// Free-branch samples (beyond the vertex) of one scan.
fn free_branch(scan: &ApproachScan) -> Result<Vec<ScanSample>> {
    let vertex = detect_vertex(scan)?;
    let s = scan.ascending();
    let spacing = (s[s.len() - 1].z_piezo - s[0].z_piezo).abs() / (s.len() - 1) as f64;
    Ok(s.into_iter()
        .filter(|p| p.z_piezo > vertex.z_piezo - 0.25 * spacing)
        .collect())
}

struct Group<'a> {
    v1: f64,
    scans: Vec<&'a ApproachScan>,
}

fn group_by_voltage(scans: &[ApproachScan]) -> Result<Vec<Group<'_>>> {
    let mut groups: Vec<Group> = Vec::new();
    for scan in scans {
        let v = scan.voltage()?;
        match groups.iter_mut().find(|g| (g.v1 - v).abs() <= 1e-9) {
            Some(g) => g.scans.push(scan),
            None => groups.push(Group { v1: v, scans: vec![scan] }),
        }
    }
    groups.sort_by(|a, b| b.v1.abs().total_cmp(&a.v1.abs()));
    Ok(groups)
}

/// Per-point σ (signal units) from the scatter across scans sharing a grid.
fn ensemble_sigma(branches: &[Vec<ScanSample>], min_ensemble: usize) -> Option<Vec<f64>> {
    if branches.len() < min_ensemble.max(2) {
        return None;
    }
    let n = branches[0].len();
    if branches.iter().any(|b| b.len() != n) {
        return None;
    }
    let same_grid = branches.iter().all(|b| {
        b.iter()
            .zip(&branches[0])
            .all(|(p, q)| (p.z_piezo - q.z_piezo).abs() <= 1e-6 * NM)
    });
    if !same_grid {
        return None;
    }
    let k = branches.len() as f64;
    let sig: Vec<f64> = (0..n)
        .map(|i| {
            let mean = branches.iter().map(|b| b[i].signal).sum::<f64>() / k;
            (branches.iter().map(|b| (b[i].signal - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        })
        .collect();
    sig.iter().all(|s| *s > 0.0).then_some(sig)
}

/// Signal residuals of one voltage group for (z₀, force_per_signal, V₂).
struct ContactProblem<'a> {
    model: &'a ForceModel,
    m: f64,
    v1: f64,
    samples: Vec<ScanSample>,
    weights: Vec<f64>,
}

impl ContactProblem<'_> {
    fn residuals(&self, z0: f64, k: f64, v2: f64, out: &mut [f64]) -> Result<()> {
        if !(k > 0.0) {
            return Err(Error::domain("force per signal must be positive"));
        }
        for (i, p) in self.samples.iter().enumerate() {
            let z = separation(p, self.m, z0)?;
            let f = self.model.total_force(z, self.v1, v2)?;
            out[i] = (p.signal + f / k) * self.weights[i];
        }
        Ok(())
    }

    /// Best 1/k for fixed z₀ in closed form, with its cost.
    fn profile(&self, z0: f64, v2: f64, stride: usize) -> Option<(f64, f64)> {
        let mut sff = 0.0;
        let mut ssf = 0.0;
        let mut pairs = Vec::new();
        for (i, p) in self.samples.iter().enumerate().step_by(stride) {
            let z = separation(p, self.m, z0).ok()?;
            let f = self.model.total_force(z, self.v1, v2).ok()? * self.weights[i];
            let s = p.signal * self.weights[i];
            sff += f * f;
            ssf += s * f;
            pairs.push((s, f));
        }
        if !(sff > 0.0) {
            return None;
        }
        let g = -ssf / sff;
        if !(g > 0.0) {
            return None;
        }
        let cost = pairs.iter().map(|(s, f)| (s + g * f).powi(2)).sum();
        Some((1.0 / g, cost))
    }
}

fn fit_group(group: &Group, m: f64, model: &ForceModel, settings: &ContactFitSettings) -> Result<VoltageFit> {
    let mut branches = Vec::with_capacity(group.scans.len());
    for scan in &group.scans {
        if scan.samples.iter().all(|p| p.signal == 0.0) {
            return Err(Error::FitFailed {
                message: format!("scan '{}' carries no force signal to fit", scan.metadata),
                trace: vec![],
            });
        }
        branches.push(free_branch(scan).map_err(|e| annotate(e, scan))?);
    }
    let sigma = ensemble_sigma(&branches, settings.min_ensemble);
    let known_sigma = sigma.is_some();
    let mut samples = Vec::new();
    let mut weights = Vec::new();
    for b in &branches {
        samples.extend_from_slice(b);
        match &sigma {
            Some(s) => weights.extend(s.iter().map(|v| 1.0 / v)),
            None => weights.extend(std::iter::repeat_n(1.0, b.len())),
        }
    }
    let problem = ContactProblem {
        model,
        m,
        v1: group.v1,
        samples,
        weights,
    };
    let n = problem.samples.len();

    // coarse profile over z₀ for a safe starting point
    let stride = (n / 400).max(1);
    let mut start: Option<(f64, f64, f64)> = None;
    let mut z = settings.z0_search_min;
    while z <= settings.z0_search_max {
        if let Some((k, cost)) = problem.profile(z, settings.v2, stride) {
            if start.is_none_or(|s| cost < s.2) {
                start = Some((z, k, cost));
            }
        }
        z += 0.5 * NM;
    }
    let (z_start, k_start, _) = start.ok_or_else(|| Error::FitFailed {
        message: format!("no attractive-force solution for the {} V scans in the z0 search range", group.v1),
        trace: vec![],
    })?;

    let k_unit = k_start / NN;
    let mut x0 = vec![z_start / NM, k_start / NN];
    let mut step_tol = vec![settings.z0_step_tol / NM, 1e-9 * k_unit];
    let mut diff_step = vec![1e-3, 1e-6 * k_unit];
    if settings.fit_v2 {
        x0.push(settings.v2 / MV);
        step_tol.push(settings.v2_step_tol / MV);
        diff_step.push(1e-2);
    }
    let fixed_v2 = settings.v2;
    let fit = levenberg_marquardt(
        |x, out| {
            let v2 = if x.len() > 2 { x[2] * MV } else { fixed_v2 };
            problem.residuals(x[0] * NM, x[1] * NN, v2, out)
        },
        &x0,
        n,
        &LmSettings::new(step_tol, diff_step),
    )
    .map_err(|e| annotate_group(e, group.v1))?;

    let errors = if known_sigma {
        unscaled_errors(&fit)
    } else if let Some(noise) = settings.force_noise {
        // σ in signal units follows from the fitted scale
        let sig = noise / (fit.params[1] * NN);
        unscaled_errors(&fit).into_iter().map(|e| e * sig).collect()
    } else {
        fit.scaled_std_errors()
    };
    let chi2 = if known_sigma {
        fit.cost
    } else if let Some(noise) = settings.force_noise {
        fit.cost / (noise / (fit.params[1] * NN)).powi(2)
    } else {
        fit.dof() as f64
    };
    Ok(VoltageFit {
        v1: group.v1,
        scans: group.scans.len(),
        z0: fit.params[0] * NM,
        z0_uncertainty: errors[0] * NM,
        force_per_signal: fit.params[1] * NN,
        force_per_signal_uncertainty: errors[1] * NN,
        v2: if settings.fit_v2 { fit.params[2] * MV } else { fixed_v2 },
        chi2,
        dof: fit.dof(),
        iterations: fit.iterations,
    })
}

fn unscaled_errors(fit: &LmResult) -> Vec<f64> {
    (0..fit.params.len())
        .map(|j| fit.inverse_hessian[(j, j)].max(0.0).sqrt())
        .collect()
}

fn annotate(e: Error, scan: &ApproachScan) -> Error {
    match e {
        Error::InsufficientData(msg) if !msg.contains(&scan.metadata) => {
            Error::InsufficientData(format!("{msg} [scan '{}']", scan.metadata))
        }
        other => other,
    }
}

fn annotate_group(e: Error, v1: f64) -> Error {
    match e {
        Error::FitFailed { message, trace } => Error::FitFailed {
            message: format!("{message} [scans at {v1} V]"),
            trace,
        },
        other => other,
    }
}

/// χ² fit of contact separation (and signal scale, optionally V₂) per voltage.
pub fn fit_contact_separation(
    scans: &[ApproachScan],
    m: f64,
    model: &ForceModel,
    settings: &ContactFitSettings,
) -> Result<CalibrationResult> {
    if !(m > 0.0) {
        return Err(Error::domain(format!("deflection coefficient must be positive, got {m}")));
    }
    if scans.is_empty() {
        return Err(Error::InsufficientData("no electrostatic scans to fit".into()));
    }
    let groups = group_by_voltage(scans)?;
    let fits = crate::parallel::try_map(&groups, |g| fit_group(g, m, model, settings))?;

    let nv = fits.len() as f64;
    let z0 = fits.iter().map(|f| f.z0).sum::<f64>() / nv;
    let z0_uncertainty = if fits.len() > 1 {
        (fits.iter().map(|f| (f.z0 - z0).powi(2)).sum::<f64>() / (nv - 1.0)).sqrt()
    } else {
        fits[0].z0_uncertainty
    };
    let force_per_signal = fits.iter().map(|f| f.force_per_signal).sum::<f64>() / nv;
    let (v2, v2_uncertainty) = if settings.fit_v2 {
        let v = fits.iter().map(|f| f.v2).sum::<f64>() / nv;
        let spread = if fits.len() > 1 {
            (fits.iter().map(|f| (f.v2 - v).powi(2)).sum::<f64>() / (nv - 1.0)).sqrt()
        } else {
            0.0
        };
        (v, spread)
    } else {
        (settings.v2, settings.v2_uncertainty)
    };
    let mut warnings = Vec::new();
    for f in &fits {
        if !(f.z0 > 0.0 && f.z0 < SUSPICIOUS_Z0) {
            warnings.push(format!(
                "suspicious contact separation {:.2} nm from the {} V scans (expected within 0-200 nm)",
                f.z0 / NM,
                f.v1
            ));
        }
    }
    Ok(CalibrationResult {
        z0,
        z0_uncertainty,
        v2,
        v2_uncertainty,
        force_per_signal,
        chi2: fits.iter().map(|f| f.chi2).sum(),
        dof: fits.iter().map(|f| f.dof).sum(),
        per_voltage: fits,
        warnings,
    })
}

/// Fit cost Σ residual² of one voltage group at fixed parameters, for
/// profile checks. All scans must share `v1`.
pub fn contact_cost(
    scans: &[ApproachScan],
    m: f64,
    model: &ForceModel,
    z0: f64,
    force_per_signal: f64,
    v2: f64,
) -> Result<f64> {
    let groups = group_by_voltage(scans)?;
    let mut total = 0.0;
    for g in &groups {
        let mut samples = Vec::new();
        for s in &g.scans {
            samples.extend(free_branch(s)?);
        }
        let problem = ContactProblem {
            model,
            m,
            v1: g.v1,
            weights: vec![1.0; samples.len()],
            samples,
        };
        let mut r = vec![0.0; problem.samples.len()];
        problem.residuals(z0, force_per_signal, v2, &mut r)?;
        total += r.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualPotential {
    /// V
    pub v2: f64,
    pub v2_uncertainty: f64,
    /// N per signal unit
    pub force_per_signal: f64,
    pub chi2: f64,
    pub dof: usize,
}

/// Smallest separation, in units of z₀, accepted for the residual-potential scans.
pub const RESIDUAL_MIN_Z_OVER_Z0: f64 = 10.0;

/// Sphere potential V₂ from two large-separation scans at opposite voltages.
/// Since F ∝ (V1 − V2)², the asymmetry between the scans isolates V₂.
pub fn estimate_residual_potential(
    scan_plus: &ApproachScan,
    scan_minus: &ApproachScan,
    model: &ForceModel,
    m: f64,
    z0: f64,
) -> Result<ResidualPotential> {
    if !(m > 0.0) || !(z0 > 0.0) {
        return Err(Error::domain(format!("need m > 0 and z0 > 0, got m = {m}, z0 = {z0}")));
    }
    let va = scan_plus.voltage()?;
    let vb = scan_minus.voltage()?;
    if (va - vb).abs() < 1e-9 {
        return Err(Error::InsufficientData("residual-potential scans need two different voltages".into()));
    }
    let mut rows = Vec::new();
    for (scan, v1) in [(scan_plus, va), (scan_minus, vb)] {
        for p in scan.samples() {
            let z = separation(p, m, z0)?;
            if z < RESIDUAL_MIN_Z_OVER_Z0 * z0 {
                return Err(Error::Validity(format!(
                    "scan '{}' reaches {:.1} nm, below {RESIDUAL_MIN_Z_OVER_Z0} z0 = {:.1} nm; contact effects are not negligible",
                    scan.metadata(),
                    z / NM,
                    RESIDUAL_MIN_Z_OVER_Z0 * z0 / NM
                )));
            }
            rows.push((z, v1, p.signal));
        }
    }
    let residuals = |k: f64, v2: f64, out: &mut [f64]| -> Result<()> {
        for (i, (z, v1, s)) in rows.iter().enumerate() {
            out[i] = s + model.total_force(*z, *v1, v2)? / k;
        }
        Ok(())
    };
    // closed-form scale at V2 = 0
    let mut sff = 0.0;
    let mut ssf = 0.0;
    for (z, v1, s) in &rows {
        let f = model.total_force(*z, *v1, 0.0)?;
        sff += f * f;
        ssf += s * f;
    }
    if !(sff > 0.0 && ssf < 0.0) {
        return Err(Error::FitFailed {
            message: "residual-potential scans carry no attractive force signal".into(),
            trace: vec![],
        });
    }
    let k0 = -sff / ssf;
    let k_unit = k0 / NN;
    let fit = levenberg_marquardt(
        |x, out| residuals(x[0] * NN, x[1] * MV, out),
        &[k_unit, 0.0],
        rows.len(),
        &LmSettings::new(vec![1e-9 * k_unit, 1e-4], vec![1e-6 * k_unit, 1e-2]),
    )?;
    let errors = fit.scaled_std_errors();
    Ok(ResidualPotential {
        v2: fit.params[1] * MV,
        v2_uncertainty: errors[1] * MV,
        force_per_signal: fit.params[0] * NN,
        chi2: fit.dof() as f64,
        dof: fit.dof(),
    })
}

/// Everything the calibration chain consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationBundle {
    pub electrostatic: Vec<ApproachScan>,
    pub residual_plus: ApproachScan,
    pub residual_minus: ApproachScan,
    pub hysteresis: HysteresisModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSettings {
    pub contact: ContactFitSettings,
    /// m; contact separation assumed before the first electrostatic fit.
    pub z0_initial: f64,
    /// Alternations of the V₂ estimate and the z₀ fit.
    pub passes: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            contact: ContactFitSettings::default(),
            z0_initial: 30e-9,
            passes: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub signal: SignalCalibration,
    pub vertices: Vec<Vertex>,
    pub residual: ResidualPotential,
    pub contact: CalibrationResult,
}

impl CalibrationReport {
    pub fn m(&self) -> f64 {
        self.signal.m
    }

    pub fn z0(&self) -> f64 {
        self.contact.z0
    }

    pub fn v2(&self) -> f64 {
        self.contact.v2
    }

    pub fn force_per_signal(&self) -> f64 {
        self.contact.force_per_signal
    }
}

/// Hysteresis → vertices → m → V₂ → z₀ (alternating V₂ and z₀ `passes` times).
pub fn calibrate(bundle: &CalibrationBundle, model: &ForceModel, settings: &CalibrationSettings) -> Result<CalibrationReport> {
    let correct = |s: &ApproachScan| apply_hysteresis(&bundle.hysteresis, s);
    let electrostatic = bundle.electrostatic.iter().map(correct).collect::<Result<Vec<_>>>()?;
    let plus = correct(&bundle.residual_plus)?;
    let minus = correct(&bundle.residual_minus)?;

    let vertices = electrostatic
        .iter()
        .map(|s| detect_vertex(s).map_err(|e| annotate(e, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut signal = fit_deflection_coefficient(&vertices)?;

    let mut z0 = settings.z0_initial;
    let mut contact_settings = settings.contact.clone();
    let mut residual = None;
    let mut contact = None;
    for _ in 0..settings.passes.max(1) {
        let r = estimate_residual_potential(&plus, &minus, model, signal.m, z0)?;
        if !settings.contact.fit_v2 {
            contact_settings.v2 = r.v2;
            contact_settings.v2_uncertainty = r.v2_uncertainty;
        }
        let c = fit_contact_separation(&electrostatic, signal.m, model, &contact_settings)?;
        z0 = c.z0;
        residual = Some(r);
        contact = Some(c);
    }
    let contact = contact.expect("at least one pass runs");
    signal.force_per_signal = Some(contact.force_per_signal);
    Ok(CalibrationReport {
        signal,
        vertices,
        residual: residual.expect("at least one pass runs"),
        contact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(zs_nm: &[f64], sig: &[f64], v1: Option<f64>) -> ApproachScan {
        let samples = zs_nm
            .iter()
            .zip(sig)
            .map(|(z, s)| ScanSample {
                z_piezo: z * NM,
                signal: *s,
            })
            .collect();
        ApproachScan::new(samples, v1, "test").unwrap()
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 + 1.0).collect()
    }

    #[test]
    fn scan_invariants() {
        let z = ramp(20);
        let s = vec![0.0; 20];
        assert!(ApproachScan::new(vec![], None, "").is_err());
        let short: Vec<ScanSample> = (0..10).map(|i| ScanSample { z_piezo: i as f64, signal: 0.0 }).collect();
        assert!(ApproachScan::new(short, None, "").is_err());
        let mut bumpy: Vec<ScanSample> = (0..20).map(|i| ScanSample { z_piezo: i as f64, signal: 0.0 }).collect();
        bumpy[5].z_piezo = 3.0;
        assert!(ApproachScan::new(bumpy, None, "").is_err());
        let down: Vec<ScanSample> = (0..20).rev().map(|i| ScanSample { z_piezo: i as f64, signal: 0.0 }).collect();
        assert!(ApproachScan::new(down, None, "").is_ok());
        assert_eq!(scan(&z, &s, Some(0.2)).v1(), Some(0.2));
    }

    #[test]
    fn hysteresis_examples() {
        let z = ramp(20);
        let s = vec![0.1; 20];
        let sc = scan(&z, &s, None);
        assert_eq!(apply_hysteresis(&HysteresisModel::identity(), &sc).unwrap(), sc);
        let lin = HysteresisModel {
            coeffs: vec![1.01],
            label: "lin".into(),
        };
        let out = apply_hysteresis(&lin, &sc).unwrap();
        for (a, b) in out.samples().iter().zip(sc.samples()) {
            assert!((a.z_piezo / (1.01 * b.z_piezo) - 1.0).abs() < 1e-14);
            assert_eq!(a.signal, b.signal);
        }
        let quad = HysteresisModel {
            coeffs: vec![1.0, 0.01],
            label: "quad".into(),
        };
        // 0.01 x at x = 20 nm is a 20% correction
        assert!(matches!(apply_hysteresis(&quad, &sc), Err(Error::Calibration(_))));
        let mild = HysteresisModel {
            coeffs: vec![1.0, 1e-4],
            label: "mild".into(),
        };
        let x = 123.4 * NM;
        assert!((mild.correct(mild.invert(x).unwrap()) - x).abs() < 1e-21);
    }

    #[test]
    fn separation_examples() {
        let z0 = 32.7 * NM;
        let m = 8.9 * NM;
        let p = ScanSample {
            z_piezo: 100.0 * NM,
            signal: 1.0,
        };
        assert!((separation(&p, m, z0).unwrap() - 123.8 * NM).abs() < 1e-18);
        let free = ScanSample {
            z_piezo: 100.0 * NM,
            signal: 0.0,
        };
        assert_eq!(separation(&free, m, z0).unwrap(), z0 + 100.0 * NM);
        let shifted = ScanSample {
            z_piezo: 105.0 * NM,
            signal: 1.0,
        };
        assert!((separation(&shifted, m, z0).unwrap() - separation(&p, m, z0).unwrap() - 5.0 * NM).abs() < 1e-18);
        let crushed = ScanSample {
            z_piezo: 0.0,
            signal: 10.0,
        };
        assert!(matches!(separation(&crushed, m, z0), Err(Error::Domain(_))));
        assert!(separation(&p, 0.0, z0).is_err());
    }

    fn vertex(v1: f64, s: f64, zp_nm: f64) -> Vertex {
        Vertex {
            v1,
            z_piezo: zp_nm * NM,
            signal: s,
        }
    }

    #[test]
    fn deflection_examples() {
        let two = [vertex(0.2, 0.0, 0.0), vertex(0.3, 1.0, 8.9)];
        let c = fit_deflection_coefficient(&two).unwrap();
        assert!((c.m - 8.9 * NM).abs() < 1e-22);
        let three = [vertex(0.15, 0.2, 1.78), vertex(0.2, 0.35, 3.115), vertex(0.25, 0.55, 4.895)];
        assert!((fit_deflection_coefficient(&three).unwrap().m / (8.9 * NM) - 1.0).abs() < 1e-12);
        // constant signal offset leaves the slope alone
        let shifted: Vec<Vertex> = three.iter().map(|v| Vertex { signal: v.signal + 0.4, ..*v }).collect();
        assert!((fit_deflection_coefficient(&shifted).unwrap().m / (8.9 * NM) - 1.0).abs() < 1e-12);

        assert!(matches!(fit_deflection_coefficient(&two[..1]), Err(Error::InsufficientData(_))));
        let same_v = [vertex(0.2, 0.0, 0.0), vertex(0.2, 1.0, 8.9)];
        assert!(matches!(fit_deflection_coefficient(&same_v), Err(Error::InsufficientData(_))));
        let flat = [vertex(0.2, 0.5, 1.0), vertex(0.3, 0.5, 2.0)];
        assert!(matches!(fit_deflection_coefficient(&flat), Err(Error::SingularFit(_))));
    }

    #[test]
    fn vertex_on_exact_cusp() {
        // contact line rising with slope 0.14/nm up to (0, 0.5), free branch
        // falling as 0.5·(10/(10 + x))² beyond
        let zs: Vec<f64> = (-30..=60).map(|i| i as f64 * 0.1).collect();
        let sig: Vec<f64> = zs
            .iter()
            .map(|&x| if x <= 0.0 { 0.5 + 0.14 * x } else { 0.5 * (10.0 / (10.0 + x)).powi(2) })
            .collect();
        let v = detect_vertex(&scan(&zs, &sig, Some(0.25))).unwrap();
        // this branch bends on a 10 nm scale, much harder than a real one
        assert!(v.z_piezo.abs() < 5e-4 * NM, "{}", v.z_piezo);
        assert!((v.signal - 0.5).abs() < 1e-4);
        assert_eq!(v.v1, 0.25);
    }

    #[test]
    fn vertex_between_samples() {
        // true cusp at x = 0.037 nm, off the sample grid
        let x0 = 0.037;
        let zs: Vec<f64> = (-30..=60).map(|i| i as f64 * 0.1).collect();
        let sig: Vec<f64> = zs
            .iter()
            .map(|&x| if x <= x0 { 0.5 + 0.14 * (x - x0) } else { 0.5 - 0.04 * (x - x0) + 0.001 * (x - x0).powi(2) })
            .collect();
        let v = detect_vertex(&scan(&zs, &sig, Some(0.25))).unwrap();
        assert!((v.z_piezo / NM - x0).abs() < 1e-9, "{}", v.z_piezo / NM);
    }

    #[test]
    fn free_only_scan_has_no_vertex() {
        let zs: Vec<f64> = (0..100).map(|i| 10.0 + i as f64).collect();
        let sig: Vec<f64> = zs.iter().map(|z| 10.0 / z).collect();
        let sc = scan(&zs, &sig, Some(0.2));
        assert!(matches!(detect_vertex(&sc), Err(Error::InsufficientData(_))));
        assert!(matches!(detect_vertex(&scan(&zs, &sig, None)), Err(Error::Calibration(_))));
    }
}
