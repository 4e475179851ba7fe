//! Lyapunov exponents along coded orbits, per bounce.

use crate::cocycle::{
    measure_s, planar_split, transported_factors, Base, CocycleError, DeltaTrace, PlanarFactors,
};
use crate::geometry::BilliardTable;
use crate::linalg::{qr4, Mat4};
use crate::orbit::{frame_window, solve_finite_orbit, OrbitError, ReflectionFrame};
use crate::scalar::{Probability, Real};
use crate::symbolic::{choose_window_length, rng_for, MarkovMeasure, Sampler, SymbolicError, Word};
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use std::fmt::Write as _;
use thiserror::Error;

/// Shortest series on which a slope is fitted.
pub const MIN_DELTA_LENGTH: usize = 100;
pub const MIN_QR_LENGTH: usize = 200;
/// Smallest diagonal entry of `R` accepted in the QR iteration.
pub const QR_DEGENERACY: f64 = 1e-300;
/// Largest share of failed orbits tolerated in an ensemble.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;
/// Singular values of the direction block closer than `e^{this}` leave the
/// top direction undetermined.
pub const DEGENERATE_LOG_RATIO: f64 = 1.0;

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("series of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("degenerate triangular entry {value:e} at step {step}")]
    Degenerate { step: usize, value: f64 },
    #[error("direction estimates do not converge (last distance {last:e})")]
    NotConverged { last: f64 },
    #[error("{failed} of {total} orbits failed; first failure: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

/// A least-squares slope with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slope {
    pub value: f64,
    pub stderr: f64,
}

/// Slope of `series[j]` against `j` over the middle third `m/3 ≤ j ≤ 2m/3`,
/// where `m = series.len() − 1`.
pub fn middle_third_slope(series: &[f64]) -> Result<Slope, LyapunovError> {
    let m = series.len().saturating_sub(1);
    if m < MIN_DELTA_LENGTH {
        return Err(LyapunovError::TooShort { len: m, min: MIN_DELTA_LENGTH });
    }
    let (lo, hi) = (m / 3, 2 * m / 3);
    let n = (hi - lo + 1) as f64;
    let xm = (lo + hi) as f64 / 2.0;
    let ym = series[lo..=hi].iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (j, &y) in series.iter().enumerate().take(hi + 1).skip(lo) {
        let dx = j as f64 - xm;
        sxx += dx * dx;
        sxy += dx * (y - ym);
    }
    let value = sxy / sxx;
    let rss: f64 = (lo..=hi)
        .map(|j| {
            let r = series[j] - ym - value * (j as f64 - xm);
            r * r
        })
        .sum();
    Ok(Slope { value, stderr: (rss / (n - 2.0) / sxx).sqrt() })
}

/// Exponents read off a Δ trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaExponents {
    /// Out-of-plane exponent, from `log Δ⁽⁴⁾`.
    pub lambda_e: Slope,
    /// In-plane exponent, from `log Δ̃⁽⁴⁾`.
    pub lambda_f: Slope,
    /// `log Δ⁽⁴⁾_j − log Δ⁽⁴⁾_{j−1}` for `j = 1..=m`.
    pub increments_e: Vec<f64>,
    pub increments_f: Vec<f64>,
}

pub fn exponent_from_delta<T: Real>(trace: &DeltaTrace<T>) -> Result<DeltaExponents, LyapunovError> {
    let e: Vec<f64> = trace.plain.iter().map(|x| x[3].as_f64()).collect();
    let f: Vec<f64> = trace.tilde.iter().map(|x| x[3].as_f64()).collect();
    let inc = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(DeltaExponents {
        lambda_e: middle_third_slope(&e)?,
        lambda_f: middle_third_slope(&f)?,
        increments_e: inc(&e),
        increments_f: inc(&f),
    })
}

/// `(log Δ⁽⁴⁾_m / m, log Δ̃⁽⁴⁾_m / m)` on a trace with the all-ones base.
///
/// Unlike fitted slopes these are ordered exactly: `Δ̃ ≥ Δ` termwise.
pub fn growth_quotients<T: Real>(trace: &DeltaTrace<T>) -> (f64, f64) {
    let m = trace.len() as f64;
    (trace.plain[trace.len()][3].as_f64() / m, trace.tilde[trace.len()][3].as_f64() / m)
}

/// Four exponents from the reorthonormalized product, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QrSpectrum {
    pub exponents: [f64; 4],
    pub stderr: [f64; 4],
}

impl QrSpectrum {
    /// `max(|e₁ + e₄|, |e₂ + e₃|)`.
    pub fn pairing_defect(&self) -> f64 {
        let e = self.exponents;
        (e[0] + e[3]).abs().max((e[1] + e[2]).abs())
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// Pushes an orthonormal frame through the per-bounce matrices,
/// re-orthonormalizing after each step, and fits the cumulative
/// `log R_ii` over the middle third.
pub fn qr_spectrum<T: Real>(factors: &[Mat4<T>]) -> Result<QrSpectrum, LyapunovError> {
    if factors.len() < MIN_QR_LENGTH {
        return Err(LyapunovError::TooShort { len: factors.len(), min: MIN_QR_LENGTH });
    }
    let mut q = Mat4::identity();
    let mut cumulative = vec![[0.0f64; 4]];
    for (step, f) in factors.iter().enumerate() {
        let (qn, r) = qr4(&(*f * q));
        let mut next = *cumulative.last().unwrap();
        for (i, c) in next.iter_mut().enumerate() {
            let d = r[(i, i)].as_f64();
            if !(d >= QR_DEGENERACY) {
                return Err(LyapunovError::Degenerate { step: step + 1, value: d });
            }
            *c += d.ln();
        }
        cumulative.push(next);
        q = qn;
    }
    let mut slopes = (0..4)
        .map(|i| middle_third_slope(&cumulative.iter().map(|c| c[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    slopes.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(QrSpectrum {
        exponents: [0, 1, 2, 3].map(|i| slopes[i].value),
        stderr: [0, 1, 2, 3].map(|i| slopes[i].stderr),
    })
}

/// Per-bounce matrices of the linearized map in transported bases.
pub fn bounce_matrices<T: Real>(frames: &[ReflectionFrame<T>]) -> Result<Vec<Mat4<T>>, LyapunovError> {
    Ok(transported_factors(frames)?.0)
}

/// `max |⟨u, w⟩|` over unit `u ∈ span(a)` and unit `w ⊥ span(b)`, for lines
/// spanned by nonzero `a`, `b`.
pub fn grassmann_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    (1.0 - dot * dot / (na * nb)).max(0.0).sqrt()
}

/// Convergence of the most expanded direction offset at the base point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OseledetsReport {
    /// Distances between the estimates after `n` and `n + 1` bounces.
    pub successive: Vec<f64>,
    /// Final estimate in the `(e, f)` coordinates of the initial cross-section.
    pub direction: [f64; 2],
    /// Distance from the final estimate to the in-plane axis.
    pub distance_to_f: f64,
    /// `log(σ₁/σ₂)` of the direction block after all bounces.
    pub log_singular_ratio: f64,
    /// Equal growth in both directions; `direction` is then meaningless.
    pub degenerate: bool,
}

/// Estimates the top Oseledets direction among direction offsets `v` as the
/// top right singular vector of the `v ↦ v′` block of the product over
/// `n = 1..=m` bounces.
pub fn oseledets_directions<T: Real>(frames: &[ReflectionFrame<T>]) -> Result<OseledetsReport, LyapunovError> {
    let factors = bounce_matrices(frames)?;
    let mut p = Mat4::<f64>::identity();
    let mut estimates = Vec::with_capacity(factors.len());
    let mut ratio = 0.0;
    for f in &factors {
        let f = Mat4(f.0.map(|r| r.map(|x| x.as_f64())));
        p = f * p;
        p = p * (1.0 / p.max_abs());
        let b = p.block(1, 1);
        let (hi, lo, v) = (b.transpose() * b).symmetric_eigen();
        ratio = 0.5 * (hi / lo.max(f64::MIN_POSITIVE)).ln();
        estimates.push(v);
    }
    let successive: Vec<f64> = estimates.windows(2).map(|w| grassmann_distance(&w[0], &w[1])).collect();
    let direction = *estimates.last().ok_or(CocycleError::Empty)?;
    let degenerate = ratio < DEGENERATE_LOG_RATIO;
    if !degenerate && successive.len() > 20 {
        let n = successive.len();
        let last = successive[n - 1];
        if last > 1e-8 && last >= successive[n - 21] {
            return Err(LyapunovError::NotConverged { last });
        }
    }
    Ok(OseledetsReport {
        successive,
        direction,
        distance_to_f: grassmann_distance(&direction, &[0.0, 1.0]),
        log_singular_ratio: ratio,
        degenerate,
    })
}

/// Which estimators a spectrum report runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Delta,
    Qr,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub m: usize,
    pub method: Method,
    pub lambda_e: Option<f64>,
    pub lambda_f: Option<f64>,
    pub stderr_e: Option<f64>,
    pub stderr_f: Option<f64>,
    pub qr_exponents: Option<[f64; 4]>,
    pub qr_stderr: Option<[f64; 4]>,
    /// `|λ_F − qr₁|/|qr₁|` and `|λ_E − qr₂|/|qr₂|` when both methods ran.
    pub relative_disagreement: Option<[f64; 2]>,
    /// Successive Grassmann distances of the top direction estimates.
    pub grassmann_gap: Vec<f64>,
    pub distance_to_f: f64,
    pub degenerate: bool,
    /// Mean flight length, to convert to exponents per unit time.
    pub mean_flight: f64,
}

pub fn spectrum_report<T: Real>(frames: &[ReflectionFrame<T>], method: Method) -> Result<SpectrumReport, LyapunovError> {
    let m = frames.len();
    let mut report = SpectrumReport {
        m,
        method,
        lambda_e: None,
        lambda_f: None,
        stderr_e: None,
        stderr_f: None,
        qr_exponents: None,
        qr_stderr: None,
        relative_disagreement: None,
        grassmann_gap: vec![],
        distance_to_f: f64::NAN,
        degenerate: false,
        mean_flight: frames.iter().map(|f| f.d.as_f64()).sum::<f64>() / m.max(1) as f64,
    };
    if method != Method::Qr {
        let trace = DeltaTrace::new(&planar_split(frames)?, Base::Ones)?;
        let d = exponent_from_delta(&trace)?;
        report.lambda_e = Some(d.lambda_e.value);
        report.lambda_f = Some(d.lambda_f.value);
        report.stderr_e = Some(d.lambda_e.stderr);
        report.stderr_f = Some(d.lambda_f.stderr);
    }
    if method != Method::Delta {
        let q = qr_spectrum(&bounce_matrices(frames)?)?;
        if let (Some(f), Some(e)) = (report.lambda_f, report.lambda_e) {
            let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
            report.relative_disagreement = Some([rel(f, q.exponents[0]), rel(e, q.exponents[1])]);
        }
        report.qr_exponents = Some(q.exponents);
        report.qr_stderr = Some(q.stderr);
    }
    let o = oseledets_directions(frames)?;
    report.grassmann_gap = o.successive;
    report.distance_to_f = o.distance_to_f;
    report.degenerate = o.degenerate;
    Ok(report)
}

/// FNV-1a hash of the word's comma-separated text.
pub fn word_hash(word: &Word) -> u64 {
    word.to_string().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// One ensemble member of the gap experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitGap {
    pub word_hash: u64,
    pub m: usize,
    pub lambda_e: f64,
    pub lambda_f: f64,
    pub gap: f64,
    pub i_fraction: f64,
    pub s_measured: f64,
}

impl OrbitGap {
    pub fn from_factors(word_hash: u64, factors: &PlanarFactors<f64>, d0: f64) -> Result<Self, CocycleError> {
        let trace = DeltaTrace::new(factors, Base::Ones)?;
        let (lambda_e, lambda_f) = growth_quotients(&trace);
        let m = trace.len();
        Ok(Self {
            word_hash,
            m,
            lambda_e,
            lambda_f,
            gap: lambda_f - lambda_e,
            i_fraction: factors.index_set().iter().filter(|&&x| x).count() as f64 / m as f64,
            s_measured: measure_s(factors, d0).unwrap_or(0.0),
        })
    }

    /// `(|I|/m)·(s/2)`.
    pub fn predicted_bound(&self) -> f64 {
        self.i_fraction * self.s_measured / 2.0
    }
}

/// Outcome of the gap test; serializes as `true`, `false` or
/// `"indeterminate"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Verdict::Pass => s.serialize_bool(true),
            Verdict::Fail => s.serialize_bool(false),
            Verdict::Indeterminate => s.serialize_str("indeterminate"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConfig {
    pub m: usize,
    pub ensemble_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub m: usize,
    pub window_length: usize,
    pub ensemble_size: usize,
    pub seed: u64,
    pub completed: usize,
    pub failures: usize,
    pub mean_lambda_e: f64,
    pub mean_lambda_f: f64,
    pub stderr_lambda_e: f64,
    pub stderr_lambda_f: f64,
    pub mean_gap: f64,
    pub stderr_gap: f64,
    /// `mean_gap / stderr_gap`, absent when the error is zero or undefined.
    pub z_score: Option<f64>,
    pub mean_i_fraction: f64,
    pub mean_s: f64,
    pub predicted_bound: f64,
    pub min_orbit_gap: f64,
    /// `λ_F ≥ λ_E` on every orbit.
    pub ordered: bool,
    pub pass: Verdict,
    #[serde(skip)]
    pub rows: Vec<OrbitGap>,
}

fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl GapReport {
    pub const CSV_HEADER: &'static str = "word_hash,m,lambda_E,lambda_F,gap,I_fraction,s_measured";

    pub fn csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{:016x},{},{},{},{},{},{}",
                r.word_hash, r.m, r.lambda_e, r.lambda_f, r.gap, r.i_fraction, r.s_measured
            )
            .unwrap();
        }
        s
    }

    fn reduce(config: GapConfig, window_length: usize, rows: Vec<OrbitGap>, failures: usize) -> Self {
        let (mean_lambda_e, stderr_lambda_e) = mean_stderr(rows.iter().map(|r| r.lambda_e));
        let (mean_lambda_f, stderr_lambda_f) = mean_stderr(rows.iter().map(|r| r.lambda_f));
        let (mean_gap, stderr_gap) = mean_stderr(rows.iter().map(|r| r.gap));
        let mean_i_fraction = mean_stderr(rows.iter().map(|r| r.i_fraction)).0;
        let mean_s = mean_stderr(rows.iter().map(|r| r.s_measured)).0;
        let predicted_bound = mean_stderr(rows.iter().map(|r| r.predicted_bound())).0;
        let ordered = rows.iter().all(|r| r.lambda_f >= r.lambda_e);
        let z_score = (stderr_gap > 0.0).then(|| mean_gap / stderr_gap);
        let pass = if rows.len() < 2 || stderr_gap.is_nan() {
            Verdict::Indeterminate
        } else if !ordered || mean_gap < (predicted_bound - 3.0 * stderr_gap).max(0.0) {
            Verdict::Fail
        } else if mean_gap <= 3.0 * stderr_gap {
            Verdict::Indeterminate
        } else {
            Verdict::Pass
        };
        Self {
            m: config.m,
            window_length,
            ensemble_size: config.ensemble_size,
            seed: config.seed,
            completed: rows.len(),
            failures,
            mean_lambda_e,
            mean_lambda_f,
            stderr_lambda_e,
            stderr_lambda_f,
            mean_gap,
            stderr_gap,
            z_score,
            mean_i_fraction,
            mean_s,
            predicted_bound,
            min_orbit_gap: rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min),
            ordered,
            pass,
            rows,
        }
    }
}

/// Exponents of one sampled orbit: a word of length `3m + 1` is shadowed by
/// a finite orbit and the `m` bounces of the middle third are used.
pub fn sampled_orbit_gap(
    table: &BilliardTable<f64>,
    word: &Word,
    m: usize,
) -> Result<OrbitGap, LyapunovError> {
    let frames = middle_window(table, word, m)?;
    Ok(OrbitGap::from_factors(word_hash(word), &planar_split(&frames)?, table.constants.d0)?)
}

/// Frames of the middle `m` bounces of the finite orbit shadowing a word of
/// length `3m + 1`.
pub fn middle_window(
    table: &BilliardTable<f64>,
    word: &Word,
    m: usize,
) -> Result<Vec<ReflectionFrame<f64>>, LyapunovError> {
    if word.len() != 3 * m + 1 {
        return Err(LyapunovError::InvalidParameter(format!("word length {} is not 3m + 1 = {}", word.len(), 3 * m + 1)));
    }
    let orbit = solve_finite_orbit(table, word, 3 * m)?;
    Ok(frame_window(&orbit, table, m, m)?)
}

/// Samples `ensemble_size` itineraries from `mu` and measures the in-plane
/// and out-of-plane exponents along each.
///
/// `m` must be a multiple `k·m′` of the measure's window length with
/// `m′ ≥ 6`. Member `i` draws from stream `i` of `seed`, so the result does
/// not depend on the number of threads.
pub fn spectral_gap_experiment<P: Probability>(
    table: &BilliardTable<f64>,
    mu: &MarkovMeasure<P>,
    config: GapConfig,
) -> Result<GapReport, LyapunovError> {
    if mu.k0() != table.k0() {
        return Err(LyapunovError::InvalidParameter(format!(
            "measure on {} symbols for a table with {} balls",
            mu.k0(),
            table.k0()
        )));
    }
    if config.ensemble_size == 0 {
        return Err(LyapunovError::InvalidParameter("ensemble size must be positive".into()));
    }
    let (c, rho) = mu.decay_constants();
    let k = choose_window_length(mu, c, rho)?.k;
    if config.m % k != 0 || config.m / k < 6 {
        return Err(LyapunovError::InvalidParameter(format!(
            "m = {} must be a multiple k*m' of the window length k = {k} with m' >= 6",
            config.m
        )));
    }
    let sampler = Sampler::new(mu)?;
    let results: Vec<Result<OrbitGap, String>> = (0..config.ensemble_size)
        .into_par_iter()
        .map(|i| {
            let word = sampler.sample(3 * config.m + 1, &mut rng_for(config.seed, i as u64));
            sampled_orbit_gap(table, &word, config.m).map_err(|e| format!("member {i}: {e}"))
        })
        .collect();
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if failures.len() as f64 > MAX_FAILURE_FRACTION * config.ensemble_size as f64 {
        return Err(LyapunovError::TooManyFailures {
            failed: failures.len(),
            total: config.ensemble_size,
            first: failures[0].clone(),
        });
    }
    let nfail = failures.len();
    let rows = results.into_iter().filter_map(Result::ok).collect();
    Ok(GapReport::reduce(config, k, rows, nfail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::Factor;
    use crate::geometry::Constants;
    use crate::orbit::solve_periodic_orbit;

    fn table() -> BilliardTable<f64> {
        BilliardTable::equilateral(1.0, 0.05, Constants { d0: 0.9, r0: 0.05, c1: 0.5, c2: 0.9 })
    }

    fn window(word: &str, m: usize) -> Vec<ReflectionFrame<f64>> {
        let t = table();
        let o = solve_periodic_orbit(&t, &word.parse::<Word>().unwrap()).unwrap();
        frame_window(&o, &t, 0, m).unwrap()
    }

    fn axis_exponent() -> f64 {
        ((38.0 + 1440f64.sqrt()) / 2.0).ln()
    }

    #[test]
    fn slope_of_a_line() {
        let s = middle_third_slope(&(0..=150).map(|j| 2.5 * j as f64 - 1.0).collect::<Vec<_>>()).unwrap();
        assert!((s.value - 2.5).abs() < 1e-13 && s.stderr < 1e-12);
        assert!(matches!(middle_third_slope(&[0.0; 50]), Err(LyapunovError::TooShort { .. })));
    }

    #[test]
    fn constant_factors_give_the_axis_exponent() {
        let f = Factor { d: 0.9, a: 40.0, b: 37.0 };
        let pf = PlanarFactors::from_plain(vec![f; 300], vec![1.0; 300]);
        let d = exponent_from_delta(&DeltaTrace::new(&pf, Base::Ones).unwrap()).unwrap();
        assert!((d.lambda_e.value - axis_exponent()).abs() < 1e-10);
        assert_eq!(d.lambda_e, d.lambda_f);
    }

    #[test]
    fn axis_orbit_spectrum() {
        let r = spectrum_report(&window("1,2", 400), Method::Both).unwrap();
        let q = r.qr_exponents.unwrap();
        let l = axis_exponent();
        for (x, y) in q.iter().zip([l, l, -l, -l]) {
            assert!((x - y).abs() < 1e-6, "{q:?}");
        }
        assert_eq!(r.lambda_e, r.lambda_f);
        assert!((r.lambda_e.unwrap() - l).abs() < 1e-6);
        assert!(r.degenerate);
    }

    #[test]
    fn triangle_orbit_methods_agree() {
        let r = spectrum_report(&window("1,2,3", 600), Method::Both).unwrap();
        let [top, second] = r.relative_disagreement.unwrap();
        assert!(top < 1e-3 && second < 1e-3, "{r:?}");
        assert!(r.lambda_f.unwrap() > r.lambda_e.unwrap());
        assert!(!r.degenerate);
        assert!(r.distance_to_f < 1e-8);
    }

    #[test]
    fn grassmann_examples() {
        assert!((grassmann_distance(&[1.0, 0.0], &[0.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(grassmann_distance(&[1.0, 1.0], &[-2.0, -2.0]), 0.0);
    }

    #[test]
    fn window_length_precondition() {
        let mu = MarkovMeasure::<f64>::uniform(3).unwrap();
        let err = spectral_gap_experiment(&table(), &mu, GapConfig { m: 90, ensemble_size: 2, seed: 1 });
        assert!(matches!(err, Err(LyapunovError::InvalidParameter(_))));
    }

    #[test]
    fn small_ensemble() {
        let mu = MarkovMeasure::<f64>::uniform(3).unwrap();
        let r = spectral_gap_experiment(&table(), &mu, GapConfig { m: 24, ensemble_size: 4, seed: 7 }).unwrap();
        assert_eq!(r.completed, 4);
        assert!(r.ordered && r.mean_gap > 0.0);
        assert_eq!(r.csv().lines().count(), 5);
        let one = spectral_gap_experiment(&table(), &mu, GapConfig { m: 24, ensemble_size: 1, seed: 7 }).unwrap();
        assert_eq!(one.pass, Verdict::Indeterminate);
        assert_eq!(one.rows[0], r.rows[0]);
    }
}
