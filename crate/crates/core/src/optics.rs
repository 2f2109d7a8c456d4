//! Optical data ingestion, the Drude model, and the transform from tabulated
//! absorption ε″(ω) to the imaginary-axis permittivity ε(iξ).
//!
//! Photon energies and imaginary frequencies are in eV throughout this module;
//! the Lifshitz engine converts from rad/s at its boundary.

use std::f64::consts::PI;
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{log_grid, MonotoneCubic};
use crate::quadrature::{integrate_with_breakpoints, QuadSettings};

/// Relative tolerance of the Kramers–Kronig quadrature.
pub const KK_REL_TOL: f64 = 1e-8;

/// Tabulated ε″(ω) of a passive medium, sorted by photon energy (eV).
#[derive(Clone, Debug, PartialEq)]
pub struct DielectricTable {
    rows: Vec<(f64, f64)>,
    source_label: String,
}

impl DielectricTable {
    /// Sorts the rows and checks the table invariants.
    pub fn new(mut rows: Vec<(f64, f64)>, source_label: impl Into<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("dielectric table is empty".into()));
        }
        if rows.len() < 2 {
            return Err(Error::Validation("dielectric table needs at least 2 rows".into()));
        }
        for &(omega, eps2) in &rows {
            if !(omega.is_finite() && omega > 0.0) {
                return Err(Error::Validation(format!("photon energy {omega} eV is not positive")));
            }
            if !eps2.is_finite() || eps2 < 0.0 {
                return Err(Error::Validation(format!(
                    "eps2 = {eps2} at {omega} eV is negative (medium must be passive)"
                )));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Validation(format!("duplicate photon energy {} eV", w[0].0)));
        }
        Ok(Self {
            rows,
            source_label: source_label.into(),
        })
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    /// `(lowest, highest)` tabulated photon energy.
    pub fn energy_range(&self) -> (f64, f64) {
        (self.rows[0].0, self.rows[self.rows.len() - 1].0)
    }

    /// ε″ at `omega`, interpolated linearly in log ω – log ε″ (linear when
    /// either bracketing value is zero). `None` outside the table.
    pub fn eps2_at(&self, omega: f64) -> Option<f64> {
        let (lo, hi) = self.energy_range();
        if !(omega >= lo && omega <= hi) {
            return None;
        }
        let i = self.segment_of(omega);
        Some(self.eps2_on_segment(i, omega))
    }

    fn segment_of(&self, omega: f64) -> usize {
        let n = self.rows.len();
        match self.rows.partition_point(|r| r.0 <= omega) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    fn eps2_on_segment(&self, i: usize, omega: f64) -> f64 {
        let (w0, e0) = self.rows[i];
        let (w1, e1) = self.rows[i + 1];
        if e0 > 0.0 && e1 > 0.0 {
            let s = (e1 / e0).ln() / (w1 / w0).ln();
            e0 * (s * (omega / w0).ln()).exp()
        } else {
            e0 + (e1 - e0) * (omega - w0) / (w1 - w0)
        }
    }
}

/// Read a dielectric CSV: header `energy_eV,eps2` or `energy_eV,n,k`, with
/// `#` comment lines. With `n,k` columns ε″ = 2nk.
pub fn load_dielectric_table<R: Read>(source: R, source_label: &str) -> Result<DielectricTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect::<Vec<_>>();
    let nk = match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["energy_ev", "eps2"] => false,
        ["energy_ev", "n", "k"] => true,
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header energy_eV,eps2 or energy_eV,n,k, found {}", other.join(",")),
            })
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing column {}", idx + 1),
            })?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse {raw:?} as a number"),
            })
        };
        let omega = field(0)?;
        let eps2 = if nk { 2.0 * field(1)? * field(2)? } else { field(1)? };
        rows.push((omega, eps2));
    }
    DielectricTable::new(rows, source_label)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Drude free-electron parameters, both in eV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrudeParams {
    pub omega_p: f64,
    pub gamma: f64,
}

impl DrudeParams {
    /// Plasma frequency 11.5 eV and relaxation 50 meV, the usual gold values.
    pub const GOLD: Self = Self {
        omega_p: 11.5,
        gamma: 0.05,
    };

    pub fn new(omega_p: f64, gamma: f64) -> Result<Self> {
        let p = Self { omega_p, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_p.is_finite() && self.omega_p > 0.0) {
            return Err(Error::Validation(format!("plasma frequency {} eV must be positive", self.omega_p)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Validation(format!("relaxation frequency {} eV must be positive", self.gamma)));
        }
        Ok(())
    }

    /// Soft physical-regime checks; not errors.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.gamma >= self.omega_p {
            out.push(format!(
                "relaxation frequency {} eV is not below the plasma frequency {} eV",
                self.gamma, self.omega_p
            ));
        }
        out
    }

    /// Drude absorption ε″(ω) = ωp²γ / [ω(ω²+γ²)].
    pub fn eps2(&self, omega: f64) -> f64 {
        self.omega_p * self.omega_p * self.gamma / (omega * (omega * omega + self.gamma * self.gamma))
    }
}

/// Drude permittivity on the imaginary axis, 1 + ωp²/(ξ² + γξ).
pub fn drude_eps_imag_axis(p: &DrudeParams, xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::domain(format!(
            "Drude permittivity needs xi > 0 (static limit is a pole), got {xi}"
        )));
    }
    Ok(1.0 + p.omega_p * p.omega_p / (xi * xi + p.gamma * xi))
}

/// ε(iξ) = 1 + (2/π) ∫ ω ε″(ω) / (ω² + ξ²) dω.
///
/// The tabulated ε″ covers the table's range, the Drude ε″ (when given) covers
/// `[0, lowest tabulated energy)`, and nothing is added above the table.
pub fn kk_to_imaginary_axis(table: &DielectricTable, drude: Option<&DrudeParams>, xi: f64) -> Result<f64> {
    kk_with_settings(table, drude, xi, QuadSettings::relative(KK_REL_TOL))
}

pub fn kk_with_settings(
    table: &DielectricTable,
    drude: Option<&DrudeParams>,
    xi: f64,
    settings: QuadSettings,
) -> Result<f64> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::domain(format!("imaginary frequency must be positive, got {xi}")));
    }
    // t = ω/(ω+ξ) maps [0, ∞) onto [0, 1) and puts the peak near ω = ξ at t = 1/2.
    let to_t = |omega: f64| omega / (omega + xi);
    let (w_lo, _) = table.energy_range();
    let t_lo = to_t(w_lo);

    let mut points = Vec::with_capacity(table.rows().len() + 3);
    if drude.is_some() {
        points.push(0.0);
    }
    points.extend(table.rows().iter().map(|r| to_t(r.0)));
    points.push(0.5);
    points.sort_by(f64::total_cmp);
    points.dedup();
    if drude.is_none() {
        points.retain(|&t| t >= t_lo);
    }
    let t_hi = to_t(table.energy_range().1);
    points.retain(|&t| t <= t_hi);

    let mut seg = 0usize;
    let rows = table.rows();
    let integrand = |t: f64| -> f64 {
        let one_minus = 1.0 - t;
        let omega = xi * t / one_minus;
        let jac = xi / (one_minus * one_minus);
        let absorption_term = if t < t_lo {
            match drude {
                // ω ε″_D(ω) written without the 1/ω so ω = 0 is regular
                Some(d) => d.omega_p * d.omega_p * d.gamma / (omega * omega + d.gamma * d.gamma),
                None => 0.0,
            }
        } else {
            if !(omega >= rows[seg].0 && omega <= rows[seg + 1].0) {
                seg = table.segment_of(omega);
            }
            omega * table.eps2_on_segment(seg, omega)
        };
        absorption_term / (omega * omega + xi * xi) * jac
    };
    let settings = QuadSettings {
        max_intervals: settings.max_intervals.max(points.len() + 2000),
        ..settings
    };
    let integral = integrate_with_breakpoints(integrand, &points, settings).map_err(|e| match e {
        Error::Numeric {
            estimate, achieved, ..
        } => Error::Numeric {
            message: format!("Kramers-Kronig integral did not converge at xi = {xi} eV"),
            estimate: 1.0 + 2.0 / PI * estimate,
            achieved,
        },
        other => other,
    })?;
    Ok(1.0 + 2.0 / PI * integral.value.max(0.0))
}

/// Anything that yields ε(iξ) for ξ in eV.
pub trait Permittivity: Send + Sync {
    fn eps_imag(&self, xi_ev: f64) -> Result<f64>;

    /// Short provenance string for output headers.
    fn describe(&self) -> String;
}

/// Frequency-independent medium.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantPermittivity(pub f64);

impl Permittivity for ConstantPermittivity {
    fn eps_imag(&self, _xi_ev: f64) -> Result<f64> {
        Ok(self.0)
    }

    fn describe(&self) -> String {
        format!("constant eps = {:e}", self.0)
    }
}

impl Permittivity for DrudeParams {
    fn eps_imag(&self, xi_ev: f64) -> Result<f64> {
        drude_eps_imag_axis(self, xi_ev)
    }

    fn describe(&self) -> String {
        format!("analytic Drude (omega_p = {} eV, gamma = {} eV)", self.omega_p, self.gamma)
    }
}

/// Log grid for the ε(iξ) cache, in eV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub xi_min: f64,
    pub xi_max: f64,
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            xi_min: 1e-4,
            xi_max: 1e4,
            count: 200,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi_min > 0.0 && self.xi_max > self.xi_min && self.xi_max.is_finite()) {
            return Err(Error::Validation(format!(
                "grid needs 0 < xi_min < xi_max, got [{}, {}]",
                self.xi_min, self.xi_max
            )));
        }
        if self.count < 16 {
            return Err(Error::Validation(format!("grid needs at least 16 points, got {}", self.count)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Interpolant {
    /// ln(ε−1) against ln ξ; used when every sample exceeds 1.
    LogExcess(MonotoneCubic),
    /// ε−1 against ln ξ.
    Excess(MonotoneCubic),
}

#[derive(Debug)]
struct Source {
    table: DielectricTable,
    drude: Option<DrudeParams>,
}

/// ε(iξ) sampled on a log grid and interpolated monotonically in log–log.
/// Queries outside the grid fall back to the direct transform of the source.
#[derive(Clone, Debug)]
pub struct ImagFreqPermittivity {
    xi_grid: Vec<f64>,
    eps_values: Vec<f64>,
    interpolant: Interpolant,
    source: Option<Arc<Source>>,
    /// Value outside the grid for frequency-independent media.
    constant: Option<f64>,
}

/// Largest relative gap tolerated between cached and direct ε(iξ).
pub const CACHE_AUDIT_TOL: f64 = 1e-3;

/// Sample [`kk_to_imaginary_axis`] on the grid and audit the interpolant.
pub fn build_permittivity(
    table: &DielectricTable,
    drude: Option<&DrudeParams>,
    grid: &GridSpec,
) -> Result<ImagFreqPermittivity> {
    grid.validate()?;
    let xi_grid = log_grid(grid.xi_min, grid.xi_max, grid.count);
    let eps_values = crate::parallel::try_map(&xi_grid, |&xi| kk_to_imaginary_axis(table, drude, xi))?;
    let source = Arc::new(Source {
        table: table.clone(),
        drude: drude.copied(),
    });
    let cache = ImagFreqPermittivity::from_samples(xi_grid, eps_values, Some(source))?;
    cache.audit()?;
    Ok(cache)
}

impl ImagFreqPermittivity {
    fn from_samples(xi_grid: Vec<f64>, eps_values: Vec<f64>, source: Option<Arc<Source>>) -> Result<Self> {
        if let Some(e) = eps_values.iter().find(|e| !(**e >= 1.0)) {
            return Err(Error::Validation(format!("sampled permittivity {e} is below 1")));
        }
        if eps_values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Validation("sampled permittivity increases with xi".into()));
        }
        let ln_xi: Vec<f64> = xi_grid.iter().map(|x| x.ln()).collect();
        let interpolant = if eps_values.iter().all(|e| *e > 1.0) {
            Interpolant::LogExcess(MonotoneCubic::new(ln_xi, eps_values.iter().map(|e| (e - 1.0).ln()).collect())?)
        } else {
            Interpolant::Excess(MonotoneCubic::new(ln_xi, eps_values.iter().map(|e| e - 1.0).collect())?)
        };
        Ok(Self {
            xi_grid,
            eps_values,
            interpolant,
            source,
            constant: None,
        })
    }

    /// A cache built from externally computed samples (no fallback source).
    pub fn from_grid(xi_grid: Vec<f64>, eps_values: Vec<f64>) -> Result<Self> {
        if xi_grid.len() != eps_values.len() {
            return Err(Error::Validation("grid and sample lengths differ".into()));
        }
        Self::from_samples(xi_grid, eps_values, None)
    }

    /// A flat ε(iξ) = `value` sampled on `grid`; valid at every ξ.
    pub fn from_constant(value: f64, grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        let xi_grid = log_grid(grid.xi_min, grid.xi_max, grid.count);
        let eps_values = vec![value; xi_grid.len()];
        let mut cache = Self::from_samples(xi_grid, eps_values, None)?;
        cache.constant = Some(value);
        Ok(cache)
    }

    pub fn xi_grid(&self) -> &[f64] {
        &self.xi_grid
    }

    pub fn eps_values(&self) -> &[f64] {
        &self.eps_values
    }

    /// Interpolated value, `None` outside the grid.
    pub fn interpolate(&self, xi: f64) -> Option<f64> {
        if let Ok(i) = self.xi_grid.binary_search_by(|g| g.total_cmp(&xi)) {
            return Some(self.eps_values[i]);
        }
        let lx = xi.ln();
        match &self.interpolant {
            Interpolant::LogExcess(p) => p.eval(lx).map(|v| 1.0 + v.exp()),
            Interpolant::Excess(p) => p.eval(lx).map(|v| 1.0 + v.max(0.0)),
        }
    }

    /// Direct transform at `xi`, bypassing the cache.
    pub fn direct(&self, xi: f64) -> Result<f64> {
        if let Some(v) = self.constant {
            return Ok(v);
        }
        match &self.source {
            Some(s) => kk_to_imaginary_axis(&s.table, s.drude.as_ref(), xi),
            None => Err(Error::domain(format!(
                "xi = {xi} eV lies outside the cached grid [{}, {}] and no source table is attached",
                self.xi_grid[0],
                self.xi_grid[self.xi_grid.len() - 1]
            ))),
        }
    }

    /// Worst relative disagreement between cache and direct transform over a
    /// deterministic subset of interval midpoints.
    pub fn audit(&self) -> Result<f64> {
        if self.source.is_none() {
            return Ok(0.0);
        }
        let n = self.xi_grid.len();
        let stride = ((n - 1) / 8).max(1);
        let mut worst: f64 = 0.0;
        for i in (0..n - 1).step_by(stride) {
            let mid = (self.xi_grid[i] * self.xi_grid[i + 1]).sqrt();
            let cached = self.interpolate(mid).expect("midpoint lies inside the grid");
            let direct = self.direct(mid)?;
            worst = worst.max((cached / direct - 1.0).abs());
        }
        if worst > CACHE_AUDIT_TOL {
            return Err(Error::Numeric {
                message: "permittivity cache disagrees with the direct transform; use a denser grid".into(),
                estimate: worst,
                achieved: worst,
            });
        }
        Ok(worst)
    }
}

impl Permittivity for ImagFreqPermittivity {
    fn eps_imag(&self, xi_ev: f64) -> Result<f64> {
        if !(xi_ev > 0.0) {
            return Err(Error::domain(format!("imaginary frequency must be positive, got {xi_ev}")));
        }
        match self.interpolate(xi_ev) {
            Some(v) => Ok(v),
            None => self.direct(xi_ev),
        }
    }

    fn describe(&self) -> String {
        match &self.source {
            Some(s) => match &s.drude {
                Some(d) => format!(
                    "tabulated eps2 '{}' + Drude below {} eV (omega_p = {} eV, gamma = {} eV)",
                    s.table.source_label(),
                    s.table.energy_range().0,
                    d.omega_p,
                    d.gamma
                ),
                None => format!("tabulated eps2 '{}'", s.table.source_label()),
            },
            None => match self.constant {
                Some(v) => format!("constant eps = {v:e}"),
                None => "cached eps(i xi) samples".into(),
            },
        }
    }
}
