//! Globally adaptive Gauss–Kronrod (G10/K21) integration on finite intervals.
//!
//! The interval with the largest error estimate is bisected until the summed
//! error estimate meets `max(abs_tol, rel_tol * |integral|)`. Error estimates
//! follow the QUADPACK heuristic for the Kronrod/Gauss difference.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// Kronrod abscissae; odd indices are the Gauss nodes. Digits as published.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_056_807_920,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and work limits for [`integrate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl QuadSettings {
    pub fn relative(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 0.0,
            max_intervals: 2000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
    pub intervals: usize,
}

impl QuadResult {
    /// Achieved relative error; `0` for an exactly vanishing integral.
    pub fn rel_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.abs_error == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.abs_error / self.value.abs()
        }
    }
}

/// One 21-point Kronrod evaluation: (integral, error estimate).
pub fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[10];
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[10] * (fc - reskh).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let result = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrate `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, settings: QuadSettings) -> Result<QuadResult> {
    integrate_with_breakpoints(f, &[a, b], settings)
}

/// Integrate `f` over `[points[0], points[last]]`, seeding the subdivision
/// with the given ascending breakpoints (kinks, peaks, table nodes).
pub fn integrate_with_breakpoints<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    settings: QuadSettings,
) -> Result<QuadResult> {
    if points.len() < 2 {
        return Err(Error::domain("quadrature needs at least two breakpoints"));
    }
    if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("quadrature breakpoints must be finite and ascending"));
    }
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evaluations = 0;
    // Pieces too narrow to split further; their error stays in the total.
    let mut frozen: Vec<Piece> = Vec::new();
    for w in points.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (v, e) = kronrod21(&mut f, w[0], w[1]);
        evaluations += 21;
        total += v;
        total_err += e;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    loop {
        let target = settings.abs_tol.max(settings.rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if heap.is_empty() || heap.len() + frozen.len() >= settings.max_intervals {
            let rel = if total != 0.0 { total_err / total.abs() } else { f64::INFINITY };
            return Err(Error::Numeric {
                message: format!(
                    "adaptive quadrature stalled after {} intervals",
                    heap.len() + frozen.len()
                ),
                estimate: total,
                achieved: rel,
            });
        }
        let piece = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (piece.a + piece.b);
        if mid <= piece.a || mid >= piece.b || (piece.b - piece.a) <= 1e-14 * piece.a.abs().max(piece.b.abs()) {
            frozen.push(piece);
            continue;
        }
        let (v1, e1) = kronrod21(&mut f, piece.a, mid);
        let (v2, e2) = kronrod21(&mut f, mid, piece.b);
        evaluations += 42;
        total += v1 + v2 - piece.value;
        total_err += e1 + e2 - piece.error;
        heap.push(Piece {
            a: piece.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: piece.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed the drift of the running updates.
    let pieces = heap.iter().chain(frozen.iter());
    let (value, abs_error) = pieces.fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Ok(QuadResult {
        value,
        abs_error,
        evaluations,
        intervals: heap.len() + frozen.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_is_exact_for_polynomials() {
        // K21 integrates degree 31 exactly
        let mut f = |x: f64| x.powi(30) + 3.0 * x.powi(7) - x;
        let (v, _) = kronrod21(&mut f, -1.0, 1.0);
        assert!((v - 2.0 / 31.0).abs() < 1e-15);
        let mut g = |x: f64| x.powi(5);
        let (v, _) = kronrod21(&mut g, 0.0, 2.0);
        assert!((v - 64.0 / 6.0).abs() < 1e-13);
    }

    #[test]
    fn weights_sum_to_two() {
        let sk: f64 = WGK[10] + 2.0 * WGK[..10].iter().sum::<f64>();
        let sg: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((sk - 2.0).abs() < 1e-14);
        assert!((sg - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_peaks_and_endpoint_singularities() {
        let r = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, QuadSettings::relative(1e-10)).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((r.value / exact - 1.0).abs() < 1e-10, "{r:?}");

        let r = integrate(|x: f64| x.ln(), 0.0, 1.0, QuadSettings::relative(1e-10)).unwrap();
        assert!((r.value + 1.0).abs() < 1e-9, "{r:?}");
        assert!(r.rel_error() <= 1e-10);
    }

    #[test]
    fn breakpoints_split_the_domain() {
        let r = integrate_with_breakpoints(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], QuadSettings::relative(1e-12)).unwrap();
        assert!((r.value - 2.5).abs() < 1e-13);
        assert_eq!(r.intervals, 2);
    }

    #[test]
    fn exhaustion_reports_best_estimate() {
        let s = QuadSettings {
            rel_tol: 1e-14,
            abs_tol: 0.0,
            max_intervals: 3,
        };
        match integrate(|x: f64| (1.0 / x).sin(), 1e-3, 1.0, s) {
            Err(Error::Numeric { estimate, achieved, .. }) => {
                assert!(estimate.is_finite());
                assert!(achieved > 1e-14);
            }
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn zero_integrand() {
        let r = integrate(|_| 0.0, 0.0, 1.0, QuadSettings::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.rel_error(), 0.0);
    }
}
