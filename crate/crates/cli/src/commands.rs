use std::fs::File;
use std::path::{Path, PathBuf};

use casimir_core::analysis::{analyze_scans, ForceCurve, ForcePoint, ScanCalibration};
use casimir_core::calibration::{calibrate, ApproachScan, CalibrationBundle, CalibrationReport, HysteresisModel};
use casimir_core::optics::{build_permittivity, load_dielectric_table, ImagFreqPermittivity, Permittivity};
use casimir_core::synth_materials::recipe_permittivity;
use casimir_core::synthetic::generate_synthetic_experiment;
use casimir_core::theory::{casimir_force, ForceModel, TheoryCurve};
use casimir_core::{io, Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Loaded, MaterialSource, RunConfig};

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    fn new(command: &'static str, l: &Loaded) -> Self {
        Self {
            tool: "casimir",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: l.hash(),
            seed: l.config.seed,
        }
    }

    fn header(&self, extra: &[String]) -> Vec<String> {
        let mut lines = vec![
            format!("{} {}", self.tool, self.version),
            format!("command: {}", self.command),
            format!("config sha256: {}", self.config_sha256),
            format!("seed: {}", self.seed),
        ];
        lines.extend_from_slice(extra);
        lines
    }
}

#[derive(Serialize)]
struct JsonOut<'a, T: Serialize> {
    provenance: &'a Provenance,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

/// The embedded config leaves out the output directory, as the hash does,
/// so reruns into another directory are byte-identical.
fn write_json<T: Serialize>(path: &Path, p: &Provenance, l: &Loaded, body: T) -> Result<()> {
    let mut config = l.config.clone();
    config.out_dir = PathBuf::new();
    io::write_json_atomic(
        path,
        &JsonOut {
            provenance: p,
            config: &config,
            body,
        },
    )
}

fn permittivity(l: &Loaded) -> Result<ImagFreqPermittivity> {
    let c = &l.config;
    match &c.material {
        MaterialSource::Recipe { recipe, energy_grid } => recipe_permittivity(recipe, energy_grid, &c.permittivity_grid),
        MaterialSource::Table { path, drude } => {
            let full = l.input(path)?;
            let file = File::open(&full).map_err(|e| Error::io(&full, e))?;
            let table = load_dielectric_table(file, &full.display().to_string())?;
            build_permittivity(&table, drude.as_ref(), &c.permittivity_grid)
        }
    }
}

fn settings_lines(c: &RunConfig, material: &str) -> Vec<String> {
    let (g, s) = (&c.geometry, &c.lifshitz);
    vec![
        format!("material: {material}"),
        format!(
            "geometry: R = {:e} m, T = {} K, roughness = {:e} m",
            g.sphere_radius, g.temperature, g.roughness_amplitude
        ),
        format!(
            "lifshitz: rel_tol = {:e}, xi_cutoff_factor = {}, t_min = {:e}",
            s.rel_tol, s.xi_cutoff_factor, s.t_min
        ),
    ]
}

fn model(l: &Loaded) -> Result<(ForceModel, TheoryCurve)> {
    let c = &l.config;
    let perm = permittivity(l)?;
    let theory = TheoryCurve::build(&perm, &c.geometry, &c.lifshitz, &c.theory_table)?;
    Ok((ForceModel::with_theory(theory.clone())?, theory))
}

fn read_scans(l: &Loaded, paths: &[PathBuf], what: &str) -> Result<Vec<ApproachScan>> {
    if paths.is_empty() {
        return Err(Error::Config(format!("{what} lists no scan files")));
    }
    paths.iter().map(|p| io::read_scan(&l.input(p)?)).collect()
}

fn hysteresis(l: &Loaded) -> Result<HysteresisModel> {
    match &l.config.calibration.hysteresis {
        Some(p) => io::read_hysteresis(&l.input(p)?),
        None => Ok(HysteresisModel::identity()),
    }
}

fn bundle(l: &Loaded) -> Result<CalibrationBundle> {
    let ci = &l.config.calibration;
    let one = |p: &Option<PathBuf>, name: &str| -> Result<ApproachScan> {
        let p = p
            .as_ref()
            .ok_or_else(|| Error::Config(format!("calibration.{name} is not set")))?;
        io::read_scan(&l.input(p)?)
    };
    Ok(CalibrationBundle {
        electrostatic: read_scans(l, &ci.electrostatic, "calibration.electrostatic")?,
        residual_plus: one(&ci.residual_plus, "residual_plus")?,
        residual_minus: one(&ci.residual_minus, "residual_minus")?,
        hysteresis: hysteresis(l)?,
    })
}

/// Theory force at each configured separation, evaluated directly.
pub fn theory(l: &Loaded) -> Result<String> {
    let c = &l.config;
    let zs = c.theory.separations()?;
    let perm = permittivity(l)?;
    let forces = zs
        .iter()
        .map(|&z| casimir_force(&perm, &c.geometry, &c.lifshitz, z))
        .collect::<Result<Vec<_>>>()?;
    let curve = ForceCurve::from_values(&zs, &forces, "theory")?;
    let prov = Provenance::new("theory", l);
    let path = l.out_dir()?.join("theory.csv");
    let header = prov.header(&settings_lines(c, &perm.describe()));
    io::write_atomic(&path, io::format_force_curve(&curve, &header).as_bytes())?;
    Ok(format!(
        "wrote {} ({} points, F({:.1} nm) = {:.4e} N)",
        path.display(),
        zs.len(),
        zs[0] * 1e9,
        forces[0]
    ))
}

#[derive(Serialize, Deserialize)]
struct StoredCalibration {
    report: CalibrationReport,
}

fn summary(r: &CalibrationReport) -> String {
    format!(
        "m = {:.4} nm/unit, z0 = {:.3} ± {:.3} nm, V2 = {:.3} ± {:.3} mV, k = {:.4e} N/unit, chi2/dof = {:.1}/{}",
        r.m() * 1e9,
        r.z0() * 1e9,
        r.contact.z0_uncertainty * 1e9,
        r.v2() * 1e3,
        r.contact.v2_uncertainty * 1e3,
        r.force_per_signal(),
        r.contact.chi2,
        r.contact.dof
    )
}

pub fn calibrate_cmd(l: &Loaded) -> Result<String> {
    let bundle = bundle(l)?;
    let (model, _) = model(l)?;
    let report = calibrate(&bundle, &model, &l.config.calibration.settings)?;
    let path = l.out_dir()?.join("calibration.json");
    let prov = Provenance::new("calibrate", l);
    let mut text = summary(&report);
    for w in &report.contact.warnings {
        text.push_str(&format!("\nwarning: {w}"));
    }
    write_json(&path, &prov, l, StoredCalibration { report })?;
    Ok(format!("wrote {}\n{text}", path.display()))
}

#[derive(Serialize)]
struct AnalysisBody<'a> {
    calibration: &'a ScanCalibration,
    report: &'a casimir_core::analysis::PrecisionReport,
}

pub fn analyze(l: &Loaded) -> Result<String> {
    let c = &l.config;
    let scans = read_scans(l, &c.analysis.scans, "analysis.scans")?;
    let hyst = hysteresis(l)?;
    let (model, theory) = model(l)?;
    let report = match &c.analysis.calibration_report {
        Some(p) => {
            let full = l.input(p)?;
            let stored: StoredCalibration = serde_json::from_str(&io::read_to_string(&full)?)
                .map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
            stored.report
        }
        None => calibrate(&bundle(l)?, &model, &c.calibration.settings)?,
    };
    let cal = ScanCalibration {
        m: report.m(),
        z0: report.z0(),
        v2: report.v2(),
        force_per_signal: report.force_per_signal(),
    };
    let out = analyze_scans(&scans, &hyst, &cal, &theory, &c.analysis.settings)?;
    let residual_points = out
        .experiment
        .points()
        .iter()
        .zip(out.theory.points())
        .map(|(e, t)| ForcePoint {
            z: e.z,
            force: e.force - t.force,
            sigma: e.sigma,
        })
        .collect();
    let mut residual = ForceCurve::new(residual_points, "experiment minus theory")?;
    residual.notes = out.experiment.notes.clone();

    let dir = l.out_dir()?;
    let prov = Provenance::new("analyze", l);
    let header = prov.header(&settings_lines(c, theory.description()));
    for (name, curve) in [("experiment.csv", &out.experiment), ("theory_grid.csv", &out.theory), ("residual.csv", &residual)] {
        io::write_atomic(&dir.join(name), io::format_force_curve(curve, &header).as_bytes())?;
    }
    let path = dir.join("precision.json");
    write_json(
        &path,
        &prov,
        l,
        AnalysisBody {
            calibration: &cal,
            report: &out.report,
        },
    )?;
    let r = &out.report;
    Ok(format!(
        "wrote {}\nsigma = {:.3} pN over N = {} points ({:.0}–{:.0} nm), precision ratio = {:.3}%",
        path.display(),
        r.sigma_rms * 1e12,
        r.n_points,
        r.z_min * 1e9,
        r.z_max * 1e9,
        r.precision_ratio * 100.0
    ))
}

#[derive(Serialize)]
struct Manifest<'a> {
    files: &'a [String],
}

pub fn synth(l: &Loaded) -> Result<String> {
    let c = &l.config;
    let s = &c.synth;
    let (model, _) = model(l)?;
    let exp = generate_synthetic_experiment(&model, &s.truth, &s.noise, &s.plan, c.seed)?;
    let dir = l.out_dir()?;
    let scan_dir = dir.join("scans");
    std::fs::create_dir_all(&scan_dir).map_err(|e| Error::io(&scan_dir, e))?;
    let prov = Provenance::new("synth", l);
    let header = prov.header(&[]);

    let mut files = Vec::new();
    let mut write_scan = |name: String, scan: &ApproachScan| -> Result<PathBuf> {
        let rel = PathBuf::from("scans").join(&name);
        io::write_atomic(&dir.join(&rel), io::format_scan(scan, &header).as_bytes())?;
        files.push(rel.display().to_string());
        Ok(rel)
    };
    let mut electrostatic = Vec::new();
    let per_voltage = s.plan.electrostatic.scans_per_voltage.max(1);
    for (i, scan) in exp.electrostatic.iter().enumerate() {
        let v = scan.v1().unwrap_or(0.0);
        electrostatic.push(write_scan(format!("electrostatic_{v}V_{}.csv", i % per_voltage), scan)?);
    }
    let residual_plus = write_scan("residual_plus.csv".into(), &exp.residual_plus)?;
    let residual_minus = write_scan("residual_minus.csv".into(), &exp.residual_minus)?;
    let casimir = exp
        .casimir
        .iter()
        .enumerate()
        .map(|(k, scan)| write_scan(format!("casimir_{k:03}.csv"), scan))
        .collect::<Result<Vec<_>>>()?;

    io::write_json_atomic(&dir.join("hysteresis.json"), &exp.hysteresis)?;
    files.push("hysteresis.json".into());
    write_json(&dir.join("truth.json"), &prov, l, s)?;
    files.push("truth.json".into());

    // a ready-to-run config for calibrate and analyze on these files
    let mut run = c.clone();
    run.out_dir = PathBuf::from(".");
    run.calibration.electrostatic = electrostatic;
    run.calibration.residual_plus = Some(residual_plus);
    run.calibration.residual_minus = Some(residual_minus);
    run.calibration.hysteresis = Some(PathBuf::from("hysteresis.json"));
    run.analysis.scans = casimir;
    run.analysis.calibration_report = Some(PathBuf::from("calibration.json"));
    io::write_json_atomic(&dir.join("run.json"), &run)?;
    files.push("run.json".into());
    files.push("manifest.json".into());
    write_json(&dir.join("manifest.json"), &prov, l, Manifest { files: &files })?;
    Ok(format!(
        "wrote {} files to {} ({} electrostatic, 2 residual-potential, {} force scans)",
        files.len(),
        dir.display(),
        exp.electrostatic.len(),
        exp.casimir.len()
    ))
}
