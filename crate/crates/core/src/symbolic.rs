//! Symbolic dynamics over the full off-diagonal shift on `k0` symbols.
//!
//! Symbols are `1..=k0`. Markov measures stand in for Gibbs measures of
//! locally constant potentials; they are generic over [`Probability`] so that
//! cylinder masses can be computed exactly with rationals.

use crate::scalar::Probability;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Largest window length [`choose_window_length`] will consider.
pub const MAX_WINDOW_LENGTH: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymbolicError {
    #[error("empty word")]
    EmptyWord,
    #[error("symbol 0 at position {0}: symbols start at 1")]
    ZeroSymbol(usize),
    #[error("inadmissible word: symbol {symbol} repeated at positions {}..={}", .position, .position + 1)]
    Inadmissible { position: usize, symbol: usize },
    #[error("inadmissible periodic word: first and last symbol are both {0}")]
    InadmissibleWrap(usize),
    #[error("symbol {symbol} outside alphabet 1..={k0}")]
    OutOfAlphabet { symbol: usize, k0: usize },
    #[error("cannot parse word {input:?}: {reason}")]
    Parse { input: String, reason: String },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("windows exhausted after {0} symbols without a disagreement")]
    Indeterminate(usize),
    #[error("no even window length up to {MAX_WINDOW_LENGTH} satisfies the bound")]
    WindowTooLong,
    #[error("measured mass of alternating cylinders {measured} is not below 1/2 at k = {k}")]
    AlternatingMassTooLarge { k: usize, measured: f64 },
}

/// The symbol set `{1, …, k0}` with transitions allowed exactly between
/// distinct symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alphabet {
    k0: usize,
}

impl Alphabet {
    pub fn new(k0: usize) -> Result<Self, SymbolicError> {
        if k0 < 3 {
            return Err(SymbolicError::InvalidParameter(format!("alphabet needs k0 >= 3, got {k0}")));
        }
        Ok(Self { k0 })
    }

    pub fn k0(&self) -> usize {
        self.k0
    }

    pub fn transition(&self, i: usize, j: usize) -> bool {
        i != j && (1..=self.k0).contains(&i) && (1..=self.k0).contains(&j)
    }

    pub fn check(&self, word: &Word) -> Result<(), SymbolicError> {
        match word.symbols().iter().find(|&&s| s > self.k0) {
            Some(&symbol) => Err(SymbolicError::OutOfAlphabet { symbol, k0: self.k0 }),
            None => Ok(()),
        }
    }

    /// Every admissible word of length `n`, in lexicographic order.
    pub fn words(&self, n: usize) -> Vec<Word> {
        let mut out: Vec<Vec<usize>> = if n == 0 { vec![] } else { (1..=self.k0).map(|s| vec![s]).collect() };
        for _ in 1..n {
            out = out
                .into_iter()
                .flat_map(|w| {
                    let last = *w.last().unwrap();
                    (1..=self.k0).filter(move |&s| s != last).map(move |s| {
                        let mut x = w.clone();
                        x.push(s);
                        x
                    })
                })
                .collect();
        }
        out.into_iter().map(Word).collect()
    }
}

/// A non-empty admissible word: consecutive symbols differ.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(symbols: Vec<usize>) -> Result<Self, SymbolicError> {
        if symbols.is_empty() {
            return Err(SymbolicError::EmptyWord);
        }
        if let Some(p) = symbols.iter().position(|&s| s == 0) {
            return Err(SymbolicError::ZeroSymbol(p));
        }
        if let Some(p) = symbols.windows(2).position(|w| w[0] == w[1]) {
            return Err(SymbolicError::Inadmissible { position: p, symbol: symbols[p] });
        }
        Ok(Self(symbols))
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_symbol(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Whether the cyclic closure (last → first) is also admissible.
    pub fn is_cyclically_admissible(&self) -> bool {
        self.0.len() >= 2 && self.0.first() != self.0.last()
    }

    /// Cyclic left shift, the action of σ on a periodic sequence.
    pub fn rotated(&self, by: usize) -> Word {
        let n = self.0.len();
        Word((0..n).map(|i| self.0[(i + by) % n]).collect())
    }

    /// `n` symbols of the periodic extension starting at position 0.
    pub fn repeated(&self, n: usize) -> Word {
        Word((0..n).map(|i| self.0[i % self.0.len()]).collect())
    }

    /// Alternating word `p, q, p, q, …` of length `k`.
    pub fn alternating(p: usize, q: usize, k: usize) -> Result<Word, SymbolicError> {
        Word::new((0..k).map(|i| if i % 2 == 0 { p } else { q }).collect())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = SymbolicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let symbols = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SymbolicError::Parse { input: s.to_string(), reason: e.to_string() })?;
        Word::new(symbols)
    }
}

/// A two-sided sequence, stored as a finite window around position 0 or as a
/// periodic extension of a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiSequence {
    symbols: Vec<usize>,
    /// Index into `symbols` of position 0.
    origin: usize,
    periodic: bool,
}

impl BiSequence {
    /// Periodic extension with `word[0]` at position 0.
    pub fn periodic(word: &Word) -> Result<Self, SymbolicError> {
        if word.len() > 1 && !word.is_cyclically_admissible() {
            return Err(SymbolicError::InadmissibleWrap(word.symbols()[0]));
        }
        Ok(Self { symbols: word.symbols().to_vec(), origin: 0, periodic: true })
    }

    /// The finite window `word`, with `word[origin]` at position 0.
    pub fn window(word: &Word, origin: usize) -> Result<Self, SymbolicError> {
        if origin >= word.len() {
            return Err(SymbolicError::InvalidParameter(format!(
                "origin {origin} outside window of length {}",
                word.len()
            )));
        }
        Ok(Self { symbols: word.symbols().to_vec(), origin, periodic: false })
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn period(&self) -> Option<usize> {
        self.periodic.then_some(self.symbols.len())
    }

    /// Symbol at position `i`, if known.
    pub fn get(&self, i: i64) -> Option<usize> {
        let n = self.symbols.len() as i64;
        let idx = self.origin as i64 + i;
        if self.periodic {
            Some(self.symbols[idx.rem_euclid(n) as usize])
        } else if (0..n).contains(&idx) {
            Some(self.symbols[idx as usize])
        } else {
            None
        }
    }

    /// Shift σ: position 1 becomes position 0.
    pub fn shifted(&self) -> Option<Self> {
        if self.periodic {
            let w = Word(self.symbols.clone()).rotated(1);
            Some(Self { symbols: w.0, origin: 0, periodic: true })
        } else {
            (self.origin + 1 < self.symbols.len()).then(|| Self { origin: self.origin + 1, ..self.clone() })
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// `d_θ(z, w) = θ^m` where `m` is the largest integer with `zᵢ = wᵢ` for all
/// `|i| < m`; zero when the sequences coincide.
///
/// Two periodic sequences are compared over one common period, which decides
/// equality. Otherwise running out of a window before a disagreement is
/// found yields [`SymbolicError::Indeterminate`].
pub fn theta_distance(z: &BiSequence, w: &BiSequence, theta: f64) -> Result<f64, SymbolicError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(SymbolicError::InvalidParameter(format!("theta must be in (0,1), got {theta}")));
    }
    let common_period = match (z.period(), w.period()) {
        (Some(a), Some(b)) => Some(a / gcd(a, b) * b),
        _ => None,
    };
    let mut m: i64 = 0;
    loop {
        if let Some(p) = common_period {
            if m as usize > p {
                return Ok(0.0);
            }
        }
        match (z.get(m), w.get(m), z.get(-m), w.get(-m)) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                if a != b || c != d {
                    return Ok(theta.powi(m as i32));
                }
            }
            _ => return Err(SymbolicError::Indeterminate(m as usize)),
        }
        m += 1;
    }
}

/// A stationary Markov measure on the full off-diagonal shift.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMeasure<P> {
    stationary: Vec<P>,
    transitions: Vec<Vec<P>>,
}

/// Tolerance on row sums and stationarity for inexact scalars.
pub const MEASURE_TOL: f64 = 1e-12;

impl<P: Probability> MarkovMeasure<P> {
    /// Validates `stationary` and the row-stochastic `transitions`.
    pub fn new(stationary: Vec<P>, transitions: Vec<Vec<P>>) -> Result<Self, SymbolicError> {
        let k = stationary.len();
        let bad = |m: String| Err(SymbolicError::InvalidMeasure(m));
        if k < 3 {
            return bad(format!("need at least 3 symbols, got {k}"));
        }
        if transitions.len() != k || transitions.iter().any(|r| r.len() != k) {
            return bad(format!("transition matrix must be {k}x{k}"));
        }
        let close = |a: &P, b: &P| (a.clone() - b.clone()).abs_value().approx() <= MEASURE_TOL;
        for (i, row) in transitions.iter().enumerate() {
            if !row[i].is_zero() {
                return bad(format!("P({0},{0}) must be 0", i + 1));
            }
            if row.iter().any(|p| *p < P::zero()) {
                return bad(format!("row {} has a negative entry", i + 1));
            }
            let sum = row.iter().fold(P::zero(), |a, b| a + b.clone());
            if !close(&sum, &P::one()) {
                return bad(format!("row {} sums to {}", i + 1, sum.approx()));
            }
        }
        if stationary.iter().any(|p| *p < P::zero()) {
            return bad("stationary vector has a negative entry".into());
        }
        let total = stationary.iter().fold(P::zero(), |a, b| a + b.clone());
        if !close(&total, &P::one()) {
            return bad(format!("stationary vector sums to {}", total.approx()));
        }
        for j in 0..k {
            let pj = (0..k).fold(P::zero(), |a, i| a + stationary[i].clone() * transitions[i][j].clone());
            if !close(&pj, &stationary[j]) {
                return bad(format!("stationary vector is not invariant at symbol {}", j + 1));
            }
        }
        Ok(Self { stationary, transitions })
    }

    /// Computes the stationary vector of `transitions` by Gaussian
    /// elimination, then validates.
    pub fn from_transitions(transitions: Vec<Vec<P>>) -> Result<Self, SymbolicError> {
        let k = transitions.len();
        if k == 0 || transitions.iter().any(|r| r.len() != k) {
            return Err(SymbolicError::InvalidMeasure("transition matrix must be square".into()));
        }
        // rows of (Pᵀ − I), last one replaced by Σπ = 1
        let mut a: Vec<Vec<P>> = (0..k)
            .map(|i| {
                let mut row: Vec<P> = (0..k)
                    .map(|j| {
                        let t = transitions[j][i].clone();
                        if i == j { t - P::one() } else { t }
                    })
                    .collect();
                row.push(P::zero());
                row
            })
            .collect();
        a[k - 1] = vec![P::one(); k + 1];
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&x, &y| {
                    a[x][col].abs_value().approx().partial_cmp(&a[y][col].abs_value().approx()).unwrap()
                })
                .unwrap();
            if a[pivot][col].is_zero() {
                return Err(SymbolicError::InvalidMeasure("chain has no unique stationary vector".into()));
            }
            a.swap(col, pivot);
            for r in 0..k {
                if r != col && !a[r][col].is_zero() {
                    let f = a[r][col].clone() / a[col][col].clone();
                    for c in col..=k {
                        let v = a[col][c].clone() * f.clone();
                        a[r][c] = a[r][c].clone() - v;
                    }
                }
            }
        }
        let stationary = (0..k).map(|i| a[i][k].clone() / a[i][i].clone()).collect();
        Self::new(stationary, transitions)
    }

    /// The maximal-entropy measure: `P(i,j) = 1/(k0−1)` off the diagonal.
    pub fn uniform(k0: usize) -> Result<Self, SymbolicError> {
        let off = P::one() / P::from_count(k0.saturating_sub(1).max(1));
        let transitions =
            (0..k0).map(|i| (0..k0).map(|j| if i == j { P::zero() } else { off.clone() }).collect()).collect();
        Self::new(vec![P::one() / P::from_count(k0.max(1)); k0], transitions)
    }

    pub fn k0(&self) -> usize {
        self.stationary.len()
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet { k0: self.k0() }
    }

    pub fn stationary(&self) -> &[P] {
        &self.stationary
    }

    pub fn transitions(&self) -> &[Vec<P>] {
        &self.transitions
    }

    /// `P(i, j)` for 1-based symbols.
    pub fn transition(&self, i: usize, j: usize) -> P {
        self.transitions[i - 1][j - 1].clone()
    }

    /// Lossy conversion for sampling and floating point diagnostics.
    pub fn to_f64(&self) -> MarkovMeasure<f64> {
        MarkovMeasure {
            stationary: self.stationary.iter().map(|p| p.approx()).collect(),
            transitions: self.transitions.iter().map(|r| r.iter().map(|p| p.approx()).collect()).collect(),
        }
    }

    /// Constants `(C, ρ)` with `μ(C[w]) ≤ C·ρ^|w|` for every word: `ρ` is the
    /// largest transition probability and `C = max π / ρ`.
    pub fn decay_constants(&self) -> (f64, f64) {
        let rho = self.transitions.iter().flatten().map(|p| p.approx()).fold(0.0, f64::max);
        let pi_max = self.stationary.iter().map(|p| p.approx()).fold(0.0, f64::max);
        (pi_max / rho, rho)
    }
}

/// `μ(C[w]) = π(w₀) ∏ P(wⱼ, wⱼ₊₁)`.
pub fn cylinder_measure<P: Probability>(mu: &MarkovMeasure<P>, w: &Word) -> Result<P, SymbolicError> {
    mu.alphabet().check(w)?;
    let s = w.symbols();
    Ok(s.windows(2).fold(mu.stationary[s[0] - 1].clone(), |acc, p| acc * mu.transition(p[0], p[1])))
}

/// Extremes of `μ(C)/e^{S_n φ}` over sampled cylinders of length `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsBounds {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Ratios multiplied by `k0`, equal to 1 for the uniform measure.
    pub normalized_min: f64,
    pub normalized_max: f64,
    /// Smallest `C` with every normalized ratio in `[1/C, C]`.
    pub constant: f64,
}

/// Samples `samples` cylinders of length `n` and bounds the Gibbs ratio for
/// the potential `φ(z) = log P(z₀, z₁)` with zero pressure.
///
/// The Birkhoff sum runs over the `n − 1` transitions inside the cylinder, so
/// the ratio reduces to the stationary mass of the first symbol.
pub fn gibbs_ratio_bounds<P: Probability>(
    mu: &MarkovMeasure<P>,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<GibbsBounds, SymbolicError> {
    if n == 0 || samples == 0 {
        return Err(SymbolicError::InvalidParameter("n and samples must be positive".into()));
    }
    let sampler = Sampler::new(mu)?;
    let mut rng = rng_for(seed, 0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let w = sampler.sample(n, &mut rng);
        let mass = cylinder_measure(mu, &w)?.approx();
        let birkhoff: f64 = w.symbols().windows(2).map(|p| mu.transition(p[0], p[1]).approx().ln()).sum();
        let ratio = mass / birkhoff.exp();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    let k0 = mu.k0() as f64;
    let (nlo, nhi) = (lo * k0, hi * k0);
    Ok(GibbsBounds {
        min_ratio: lo,
        max_ratio: hi,
        normalized_min: nlo,
        normalized_max: nhi,
        constant: nhi.max(1.0 / nlo),
    })
}

/// Random generator for sample `stream` of a run seeded with `seed`.
///
/// Streams are independent, so ensembles come out identical however the work
/// is split across threads.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Precomputed sampling tables of a Markov measure.
#[derive(Debug, Clone)]
pub struct Sampler {
    initial: WeightedIndex<f64>,
    rows: Vec<WeightedIndex<f64>>,
}

impl Sampler {
    pub fn new<P: Probability>(mu: &MarkovMeasure<P>) -> Result<Self, SymbolicError> {
        let weights = |w: Vec<f64>| {
            WeightedIndex::new(w).map_err(|e| SymbolicError::InvalidMeasure(format!("cannot sample: {e}")))
        };
        let f = mu.to_f64();
        Ok(Self {
            initial: weights(f.stationary.clone())?,
            rows: f.transitions.iter().map(|r| weights(r.clone())).collect::<Result<_, _>>()?,
        })
    }

    /// A path of length `n ≥ 1` of the stationary chain.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Word {
        let mut out = Vec::with_capacity(n);
        let mut s = self.initial.sample(rng);
        out.push(s + 1);
        for _ in 1..n {
            s = self.rows[s].sample(rng);
            out.push(s + 1);
        }
        Word(out)
    }
}

/// A word of length `n` drawn from the stationary chain; deterministic in
/// `seed`.
pub fn sample_path<P: Probability>(mu: &MarkovMeasure<P>, n: usize, seed: u64) -> Result<Word, SymbolicError> {
    if n == 0 {
        return Err(SymbolicError::EmptyWord);
    }
    Ok(Sampler::new(mu)?.sample(n, &mut rng_for(seed, 0)))
}

/// Number of positions at which `w` occurs in `y`, overlaps included.
/// Zero when `y` is shorter than `w`.
pub fn word_occurrences(y: &Word, w: &Word) -> usize {
    if y.len() < w.len() {
        return 0;
    }
    y.symbols().windows(w.len()).filter(|win| *win == w.symbols()).count()
}

/// Number of length-`k` windows of `y` containing at least three distinct
/// symbols.
pub fn rich_window_count(y: &Word, k: usize) -> usize {
    if k < 3 || y.len() < k {
        return 0;
    }
    y.symbols()
        .windows(k)
        .filter(|win| {
            let (a, b) = (win[0], win[1]);
            win.iter().any(|&s| s != a && s != b)
        })
        .count()
}

/// Result of [`choose_window_length`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowChoice {
    pub k: usize,
    /// `C·k0·(k0−1)·ρ^k`.
    pub bound: f64,
    /// `Σ_{p≠q} μ(C[p,q,p,q,…])` over alternating words of length `k`.
    pub alternating_mass: f64,
}

/// Smallest even `k ≥ 2` with `C·k0·(k0−1)·ρ^k < 1/2`, together with the
/// measured mass of the alternating cylinders of that length.
pub fn choose_window_length<P: Probability>(
    mu: &MarkovMeasure<P>,
    c: f64,
    rho: f64,
) -> Result<WindowChoice, SymbolicError> {
    if !(rho > 0.0 && rho < 1.0) || !(c > 0.0) {
        return Err(SymbolicError::InvalidParameter(format!("need C > 0 and rho in (0,1), got C = {c}, rho = {rho}")));
    }
    let k0 = mu.k0() as f64;
    let log_bound = |k: usize| (c * k0 * (k0 - 1.0)).ln() + k as f64 * rho.ln();
    let k = (1..=MAX_WINDOW_LENGTH / 2)
        .map(|h| 2 * h)
        .find(|&k| log_bound(k) < 0.5f64.ln())
        .ok_or(SymbolicError::WindowTooLong)?;
    let alternating_mass = alternating_mass(mu, k);
    if alternating_mass >= 0.5 {
        return Err(SymbolicError::AlternatingMassTooLarge { k, measured: alternating_mass });
    }
    Ok(WindowChoice { k, bound: log_bound(k).exp(), alternating_mass })
}

/// `μ(Ω_k)`: total mass of the alternating cylinders of length `k`, computed
/// in logs to stay finite for large `k`.
pub fn alternating_mass<P: Probability>(mu: &MarkovMeasure<P>, k: usize) -> f64 {
    let mut total = 0.0;
    for p in 1..=mu.k0() {
        for q in (1..=mu.k0()).filter(|&q| q != p) {
            let (pq, qp) = (mu.transition(p, q).approx(), mu.transition(q, p).approx());
            let forward = k / 2;
            let back = (k - 1) - forward;
            let log = mu.stationary[p - 1].approx().ln() + forward as f64 * pq.ln() + back as f64 * qp.ln();
            total += log.exp();
        }
    }
    total
}

/// Itinerary word of a sequence of reflection components.
pub fn coding(components: &[usize]) -> Result<Word, SymbolicError> {
    Word::new(components.to_vec())
}

/// `R∘B = σ∘R` on a periodic itinerary: the code of the orbit advanced by one
/// bounce is the rotated code.
pub fn is_shift_of(original: &Word, advanced: &Word) -> bool {
    *advanced == original.rotated(1)
}

/// One row of a word-frequency experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRow {
    pub word: Word,
    pub n: usize,
    pub occurrences: usize,
    pub empirical_freq: f64,
    pub cylinder_measure: f64,
    pub abs_err: f64,
    /// Batch-means standard error of the empirical frequency.
    pub stderr: f64,
}

impl FrequencyRow {
    pub const CSV_HEADER: &'static str = "word,n,occurrences,empirical_freq,cylinder_measure,abs_err";

    pub fn csv_line(&self) -> String {
        format!(
            "\"{}\",{},{},{:.12e},{:.12e},{:.12e}",
            self.word, self.n, self.occurrences, self.empirical_freq, self.cylinder_measure, self.abs_err
        )
    }
}

/// Number of batches for the batch-means standard error.
const FREQUENCY_BATCHES: usize = 100;

/// Empirical frequency of `w` along a sampled path of length `n`.
///
/// Occurrences are counted at the `n` start positions of the path (the path
/// is extended by `|w| − 1` symbols so every start has a full window).
pub fn frequency_experiment<P: Probability>(
    mu: &MarkovMeasure<P>,
    w: &Word,
    n: usize,
    seed: u64,
) -> Result<FrequencyRow, SymbolicError> {
    let exact = cylinder_measure(mu, w)?.approx();
    if n < w.len() {
        return Ok(FrequencyRow {
            word: w.clone(),
            n,
            occurrences: 0,
            empirical_freq: 0.0,
            cylinder_measure: exact,
            abs_err: exact,
            stderr: f64::NAN,
        });
    }
    let y = sample_path(mu, n + w.len() - 1, seed)?;
    let hits: Vec<bool> = y.symbols().windows(w.len()).map(|win| win == w.symbols()).collect();
    let occurrences = hits.iter().filter(|&&h| h).count();
    let freq = occurrences as f64 / n as f64;
    let batches = FREQUENCY_BATCHES.min(n);
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| hits[b * size..(b + 1) * size].iter().filter(|&&h| h).count() as f64 / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches.max(2) - 1) as f64;
    Ok(FrequencyRow {
        word: w.clone(),
        n,
        occurrences,
        empirical_freq: freq,
        cylinder_measure: exact,
        abs_err: (freq - exact).abs(),
        stderr: (var / batches as f64).sqrt(),
    })
}

/// Outcome of the rich-window experiment on one sampled path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RichWindowReport {
    pub k: usize,
    pub t: usize,
    pub count: usize,
    /// `t·k/2 − k`.
    pub bound: f64,
    /// Mass of the alternating cylinders of length `k`, the premise `< 1/2`.
    pub alternating_mass: f64,
    pub passed: bool,
}

/// Samples a path of length `t·k` and compares its rich-window count with
/// `t·k/2 − k`.
pub fn rich_window_experiment<P: Probability>(
    mu: &MarkovMeasure<P>,
    k: usize,
    t: usize,
    seed: u64,
) -> Result<RichWindowReport, SymbolicError> {
    if k < 4 || k % 2 != 0 || t == 0 {
        return Err(SymbolicError::InvalidParameter(format!("need even k >= 4 and t >= 1, got k = {k}, t = {t}")));
    }
    let y = sample_path(mu, t * k, seed)?;
    let count = rich_window_count(&y, k);
    let bound = (t * k) as f64 / 2.0 - k as f64;
    Ok(RichWindowReport {
        k,
        t,
        count,
        bound,
        alternating_mass: alternating_mass(mu, k),
        passed: count as f64 >= bound,
    })
}
