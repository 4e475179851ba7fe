//! Orbits with a prescribed itinerary, built by minimizing the length of the
//! broken path through one point on each scatterer.
//!
//! Each reflection point is parametrized by spherical angles about its ball
//! centre, `q = O + r (cos b cos a, cos b sin a, sin b)`. At a critical point
//! of the length the tangential gradient at `q` vanishes, which is exactly
//! the law of reflection.

use crate::geometry::{BilliardTable, GeometryError, PhaseState, GRAZING_COSINE};
use crate::linalg::{solve_block_tridiagonal, Mat2, Vec3};
use crate::scalar::Real;
use crate::symbolic::{rng_for, SymbolicError, Word};
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Tolerance on the bisector of the incoming and outgoing rays against the
/// normal.
pub const REFLECTION_LAW_TOL: f64 = 1e-9;
/// Below this `‖p‖` a frame counts as a perpendicular hit.
pub const PERPENDICULAR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitError {
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error("periodic itinerary {0} is not cyclically admissible")]
    NotCyclic(String),
    #[error("itinerary needs at least 2 symbols")]
    TooShort,
    #[error("expected a word of length {expected}, got {got}")]
    WordLength { expected: usize, got: usize },
    #[error("symbol {symbol} names no ball (table has {k0})")]
    UnknownBall { symbol: usize, k0: usize },
    #[error("solver did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("segment {segment} is occluded by K{by}")]
    Occluded { segment: usize, by: usize },
    #[error("segment {segment} passes through its own endpoint ball (cosine {cosine})")]
    WrongSide { segment: usize, cosine: f64 },
    #[error("tangential reflection at point {index} (cosine {cosine:e})")]
    Tangency { index: usize, cosine: f64 },
    #[error("reflection law violated at point {index} (defect {defect:e})")]
    ReflectionLaw { index: usize, defect: f64 },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("calibration needs at least one frame")]
    EmptyEnsemble,
    #[error("calibrated constants violate the assumptions: {0}")]
    Calibration(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A word together with whether it closes up cyclically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Itinerary {
    pub word: Word,
    pub periodic: bool,
}

impl Itinerary {
    pub fn periodic(word: Word) -> Result<Self, OrbitError> {
        if word.len() < 2 {
            return Err(OrbitError::TooShort);
        }
        if !word.is_cyclically_admissible() {
            return Err(OrbitError::NotCyclic(word.to_string()));
        }
        Ok(Self { word, periodic: true })
    }

    pub fn open(word: Word) -> Result<Self, OrbitError> {
        if word.len() < 2 {
            return Err(OrbitError::TooShort);
        }
        Ok(Self { word, periodic: false })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target for the largest tangential gradient component.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Random perturbation `(seed, amplitude in radians)` of the initial
    /// angles, used to test that the minimizer does not depend on the start.
    pub perturb_start: Option<(u64, f64)>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-12, max_iterations: 500, perturb_start: None }
    }
}

/// Reflection points along an itinerary.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit<T> {
    pub points: Vec<Vec3<T>>,
    pub word: Word,
    pub periodic: bool,
    /// Largest tangential component of the length gradient.
    pub residual: T,
    pub iterations: usize,
    pub length: T,
}

impl<T: Real> Orbit<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_abs_z(&self) -> T {
        self.points.iter().fold(T::zero(), |m, p| m.max(p.z.abs()))
    }

    /// Unit direction of the segment leaving point `i`, if there is one.
    pub fn outgoing(&self, i: usize) -> Option<Vec3<T>> {
        let n = self.points.len();
        let j = if self.periodic { (i + 1) % n } else { i + 1 };
        (j < n).then(|| (self.points[j] - self.points[i]).normalized())
    }

    /// Phase state just after the reflection at point `i`.
    pub fn state(&self, i: usize) -> Option<PhaseState<T>> {
        self.outgoing(i).map(|d| PhaseState { point: self.points[i], direction: d })
    }

    /// The periodic orbit started one bounce later.
    pub fn advanced(&self) -> Orbit<T> {
        let mut o = self.clone();
        if self.periodic {
            o.points.rotate_left(1);
            o.word = self.word.rotated(1);
        }
        o
    }
}

fn sphere_point<T: Real>(centre: Vec3<T>, r: T, a: T, b: T) -> [Vec3<T>; 6] {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let q = centre + Vec3::new(cb * ca, cb * sa, sb) * r;
    let qa = Vec3::new(-cb * sa, cb * ca, T::zero()) * r;
    let qb = Vec3::new(-sb * ca, -sb * sa, cb) * r;
    let qaa = Vec3::new(-cb * ca, -cb * sa, T::zero()) * r;
    let qab = Vec3::new(sb * sa, -sb * ca, T::zero()) * r;
    let qbb = Vec3::new(-cb * ca, -cb * sa, -sb) * r;
    [q, qa, qb, qaa, qab, qbb]
}

/// Symmetric `(I − uuᵀ)/ℓ` as a quadratic form between two vectors.
#[inline]
fn proj_form<T: Real>(u: Vec3<T>, len: T, x: Vec3<T>, y: Vec3<T>) -> T {
    (x.dot(y) - u.dot(x) * u.dot(y)) / len
}

struct Problem<'a, T> {
    centres: Vec<Vec3<T>>,
    radii: Vec<T>,
    segments: Vec<(usize, usize)>,
    periodic: bool,
    _table: &'a BilliardTable<T>,
}

struct Local<T> {
    d: [Vec3<T>; 6],
}

struct Derivatives<T> {
    grad: Vec<[T; 2]>,
    diag: Vec<Mat2<T>>,
    /// Off-diagonal blocks keyed by `(row, col)` with `row > col`.
    off: BTreeMap<(usize, usize), Mat2<T>>,
    residual: T,
}

impl<'a, T: Real> Problem<'a, T> {
    fn new(table: &'a BilliardTable<T>, it: &Itinerary) -> Result<Self, OrbitError> {
        let mut centres = Vec::new();
        let mut radii = Vec::new();
        for &s in it.word.symbols() {
            let b = table.ball(s).ok_or(OrbitError::UnknownBall { symbol: s, k0: table.k0() })?;
            centres.push(b.centre);
            radii.push(b.radius);
        }
        let n = centres.len();
        let segments = if it.periodic {
            (0..n).map(|k| (k, (k + 1) % n)).collect()
        } else {
            (0..n - 1).map(|k| (k, k + 1)).collect()
        };
        Ok(Self { centres, radii, segments, periodic: it.periodic, _table: table })
    }

    fn n(&self) -> usize {
        self.centres.len()
    }

    fn neighbours(&self, i: usize) -> (Option<usize>, Option<usize>) {
        let n = self.n();
        if self.periodic {
            (Some((i + n - 1) % n), Some((i + 1) % n))
        } else {
            (i.checked_sub(1), (i + 1 < n).then_some(i + 1))
        }
    }

    /// Start at the point of each sphere nearest the segment joining the
    /// neighbouring centres.
    fn initial_angles(&self) -> Vec<[T; 2]> {
        (0..self.n())
            .map(|i| {
                let o = self.centres[i];
                let target = match self.neighbours(i) {
                    (Some(p), Some(q)) => {
                        let (a, b) = (self.centres[p], self.centres[q]);
                        let ab = b - a;
                        let len_sq = ab.norm_sq();
                        let t = if len_sq > T::zero() {
                            ((o - a).dot(ab) / len_sq).max(T::zero()).min(T::one())
                        } else {
                            T::zero()
                        };
                        a + ab * t
                    }
                    (Some(p), None) | (None, Some(p)) => self.centres[p],
                    (None, None) => o + Vec3::new(T::one(), T::zero(), T::zero()),
                };
                let d = (target - o).normalized();
                [d.y.atan2(d.x), d.z.max(-T::one()).min(T::one()).asin()]
            })
            .collect()
    }

    fn locals(&self, x: &[[T; 2]]) -> Vec<Local<T>> {
        x.iter()
            .enumerate()
            .map(|(i, v)| Local { d: sphere_point(self.centres[i], self.radii[i], v[0], v[1]) })
            .collect()
    }

    fn length(&self, x: &[[T; 2]]) -> T {
        let l = self.locals(x);
        self.segments.iter().map(|&(i, j)| (l[j].d[0] - l[i].d[0]).norm()).sum()
    }

    fn derivatives(&self, x: &[[T; 2]]) -> Derivatives<T> {
        let n = self.n();
        let l = self.locals(x);
        let mut g3 = vec![Vec3::zero(); n];
        let mut diag = vec![Mat2::zero(); n];
        let mut off: BTreeMap<(usize, usize), Mat2<T>> = BTreeMap::new();
        for &(i, j) in &self.segments {
            let delta = l[j].d[0] - l[i].d[0];
            let len = delta.norm();
            let u = delta * (T::one() / len);
            // ∂ℓ/∂q_i = −u, ∂ℓ/∂q_j = u
            g3[i] -= u;
            g3[j] += u;
            for &k in &[i, j] {
                let (qa, qb) = (l[k].d[1], l[k].d[2]);
                let h = Mat2([
                    [proj_form(u, len, qa, qa), proj_form(u, len, qa, qb)],
                    [proj_form(u, len, qb, qa), proj_form(u, len, qb, qb)],
                ]);
                diag[k] = diag[k] + h;
            }
            let (hi, lo) = if i > j { (i, j) } else { (j, i) };
            let (ha, hb) = (l[hi].d[1], l[hi].d[2]);
            let (la, lb) = (l[lo].d[1], l[lo].d[2]);
            let c = Mat2([
                [-proj_form(u, len, ha, la), -proj_form(u, len, ha, lb)],
                [-proj_form(u, len, hb, la), -proj_form(u, len, hb, lb)],
            ]);
            let e = off.entry((hi, lo)).or_insert_with(Mat2::zero);
            *e = *e + c;
        }
        let mut grad = Vec::with_capacity(n);
        let mut residual = T::zero();
        for k in 0..n {
            let [q, qa, qb, qaa, qab, qbb] = l[k].d;
            let g = g3[k];
            grad.push([g.dot(qa), g.dot(qb)]);
            diag[k] = diag[k] + Mat2([[g.dot(qaa), g.dot(qab)], [g.dot(qab), g.dot(qbb)]]);
            let nu = (q - self.centres[k]).normalized();
            residual = residual.max((g - nu * g.dot(nu)).norm());
        }
        Derivatives { grad, diag, off, residual }
    }

    /// Solves `(H + μI) Δ = rhs`; `None` if the shifted Hessian is not
    /// positive definite.
    fn solve(&self, d: &Derivatives<T>, mu: T, rhs: &[[T; 2]]) -> Option<Vec<[T; 2]>> {
        let n = self.n();
        let shift = Mat2::diag(mu, mu);
        let diag: Vec<Mat2<T>> = d.diag.iter().map(|&m| m + shift).collect();
        let block = |r: usize, c: usize| d.off.get(&(r, c)).copied().unwrap_or_else(Mat2::zero);
        if !self.periodic {
            let lower: Vec<Mat2<T>> = (0..n - 1).map(|k| block(k + 1, k)).collect();
            return solve_block_tridiagonal(&diag, &lower, &[rhs.to_vec()]).map(|mut v| v.remove(0));
        }
        // Cyclic: eliminate the last block row with a Schur complement.
        let m = n - 1;
        let lower: Vec<Mat2<T>> = (0..m.saturating_sub(1)).map(|k| block(k + 1, k)).collect();
        // coupling C (rows 0..m, column m) = transpose of block (m, r)
        let coupling: Vec<Mat2<T>> = (0..m).map(|r| block(m, r).transpose()).collect();
        let col = |c: usize| coupling.iter().map(|b| [b.0[0][c], b.0[1][c]]).collect::<Vec<_>>();
        let sols = solve_block_tridiagonal(&diag[..m], &lower, &[col(0), col(1), rhs[..m].to_vec()])?;
        let (y0, y1, y) = (&sols[0], &sols[1], &sols[2]);
        let mut s = diag[m];
        let mut b_last = rhs[m];
        for r in 0..m {
            let ct = coupling[r].transpose();
            let cy0 = ct.apply(y0[r]);
            let cy1 = ct.apply(y1[r]);
            s = s - Mat2([[cy0[0], cy1[0]], [cy0[1], cy1[1]]]);
            let cy = ct.apply(y[r]);
            b_last = [b_last[0] - cy[0], b_last[1] - cy[1]];
        }
        if !s.is_positive_definite() {
            return None;
        }
        let x_last = s.inverse()?.apply(b_last);
        let mut out: Vec<[T; 2]> = (0..m)
            .map(|r| {
                [
                    y[r][0] - y0[r][0] * x_last[0] - y1[r][0] * x_last[1],
                    y[r][1] - y0[r][1] * x_last[0] - y1[r][1] * x_last[1],
                ]
            })
            .collect();
        out.push(x_last);
        Some(out)
    }

    fn newton_step(&self, x: &[[T; 2]], d: &Derivatives<T>) -> Option<Vec<[T; 2]>> {
        let rhs: Vec<[T; 2]> = d.grad.iter().map(|g| [-g[0], -g[1]]).collect();
        let scale = d.diag.iter().fold(T::zero(), |m, b| m.max(b.max_abs())).max(T::min_positive_value());
        let mut mu = T::zero();
        for _ in 0..40 {
            if let Some(step) = self.solve(d, mu, &rhs) {
                return self.line_search(x, d, &step);
            }
            mu = if mu == T::zero() { scale * T::lit(1e-8) } else { mu * T::lit(10.0) };
        }
        None
    }

    /// Backtracking on the length; a full step that lowers the residual is
    /// accepted even when the length change is lost in rounding.
    fn line_search(&self, x: &[[T; 2]], d: &Derivatives<T>, step: &[[T; 2]]) -> Option<Vec<[T; 2]>> {
        let f0 = self.length(x);
        let slope: T = d.grad.iter().zip(step).map(|(g, s)| g[0] * s[0] + g[1] * s[1]).sum();
        let mut alpha = T::one();
        for k in 0..40 {
            let trial: Vec<[T; 2]> =
                x.iter().zip(step).map(|(v, s)| [v[0] + alpha * s[0], v[1] + alpha * s[1]]).collect();
            let f = self.length(&trial);
            if f <= f0 + T::lit(1e-4) * alpha * slope.min(T::zero()) {
                return Some(trial);
            }
            if k == 0 && self.derivatives(&trial).residual < d.residual {
                return Some(trial);
            }
            alpha = alpha * T::lit(0.5);
        }
        None
    }

    /// One sweep of per-point 2×2 Newton updates with backtracking.
    fn coordinate_sweep(&self, x: &mut [[T; 2]]) {
        for i in 0..self.n() {
            let d = self.derivatives(x);
            let g = d.grad[i];
            let mut h = d.diag[i];
            let scale = h.max_abs().max(T::min_positive_value());
            let mut mu = T::zero();
            while !h.is_positive_definite() {
                mu = if mu == T::zero() { scale * T::lit(1e-6) } else { mu * T::lit(10.0) };
                h = d.diag[i] + Mat2::diag(mu, mu);
            }
            let Some(inv) = h.inverse() else { continue };
            let s = inv.apply([-g[0], -g[1]]);
            let f0 = self.length(x);
            let old = x[i];
            let mut alpha = T::one();
            for _ in 0..40 {
                x[i] = [old[0] + alpha * s[0], old[1] + alpha * s[1]];
                if self.length(x) < f0 {
                    break;
                }
                alpha = alpha * T::lit(0.5);
                x[i] = old;
            }
        }
    }
}

/// Minimizes the length along `itinerary` and validates the result.
pub fn solve_orbit<T: Real>(
    table: &BilliardTable<T>,
    itinerary: &Itinerary,
    options: &SolverOptions,
) -> Result<Orbit<T>, OrbitError> {
    let problem = Problem::new(table, itinerary)?;
    let mut x = problem.initial_angles();
    if let Some((seed, amp)) = options.perturb_start {
        let mut rng = rng_for(seed, 0);
        for v in x.iter_mut() {
            v[0] = v[0] + T::lit(rng.gen_range(-amp..=amp));
            v[1] = v[1] + T::lit(rng.gen_range(-amp..=amp));
        }
    }
    let tol = T::tol(options.tolerance);
    let mut iterations = 0;
    let mut d = problem.derivatives(&x);
    while d.residual >= tol {
        if iterations >= options.max_iterations {
            return Err(OrbitError::NotConverged { iterations, residual: d.residual.as_f64() });
        }
        iterations += 1;
        match problem.newton_step(&x, &d) {
            Some(next) => x = next,
            None => problem.coordinate_sweep(&mut x),
        }
        d = problem.derivatives(&x);
    }
    let points: Vec<Vec3<T>> = problem.locals(&x).into_iter().map(|l| l.d[0]).collect();
    let orbit = Orbit {
        length: problem.length(&x),
        points,
        word: itinerary.word.clone(),
        periodic: itinerary.periodic,
        residual: d.residual,
        iterations,
    };
    check_orbit(table, &orbit)?;
    Ok(orbit)
}

/// Periodic orbit with the given cyclic itinerary.
pub fn solve_periodic_orbit<T: Real>(table: &BilliardTable<T>, word: &Word) -> Result<Orbit<T>, OrbitError> {
    solve_orbit(table, &Itinerary::periodic(word.clone())?, &SolverOptions::default())
}

/// Open chain of `m + 1` reflection points with free ends.
pub fn solve_finite_orbit<T: Real>(table: &BilliardTable<T>, word: &Word, m: usize) -> Result<Orbit<T>, OrbitError> {
    if word.len() != m + 1 {
        return Err(OrbitError::WordLength { expected: m + 1, got: word.len() });
    }
    solve_orbit(table, &Itinerary::open(word.clone())?, &SolverOptions::default())
}

/// Shadowing, side and reflection-law checks on a solved orbit.
pub fn check_orbit<T: Real>(table: &BilliardTable<T>, orbit: &Orbit<T>) -> Result<(), OrbitError> {
    let n = orbit.points.len();
    let sym = orbit.word.symbols();
    let segs = if orbit.periodic { n } else { n - 1 };
    for k in 0..segs {
        let (i, j) = (k, (k + 1) % n);
        let (p, q) = (orbit.points[i], orbit.points[j]);
        let u = (q - p).normalized();
        let (bi, bj) = (table.ball(sym[i]).unwrap(), table.ball(sym[j]).unwrap());
        let out = u.dot(bi.outward_normal(p));
        let inc = -u.dot(bj.outward_normal(q));
        for (idx, c) in [(i, out), (j, inc)] {
            if c.abs() < T::lit(GRAZING_COSINE) {
                return Err(OrbitError::Tangency { index: idx, cosine: c.as_f64() });
            }
            if c < T::zero() {
                return Err(OrbitError::WrongSide { segment: k, cosine: c.as_f64() });
            }
        }
        let len = (q - p).norm();
        for b in table.balls() {
            if b.index == sym[i] || b.index == sym[j] {
                continue;
            }
            let t = (b.centre - p).dot(u).max(T::zero()).min(len);
            if (p + u * t - b.centre).norm() <= b.radius {
                return Err(OrbitError::Occluded { segment: k, by: b.index });
            }
        }
    }
    let interior: Vec<usize> = if orbit.periodic { (0..n).collect() } else { (1..n - 1).collect() };
    for i in interior {
        let prev = orbit.points[(i + n - 1) % n];
        let next = orbit.points[(i + 1) % n];
        let q = orbit.points[i];
        let bis = ((prev - q).normalized() + (next - q).normalized()).normalized();
        let nu = table.ball(sym[i]).unwrap().outward_normal(q);
        let defect = (bis - nu).norm();
        if !(defect <= T::tol(REFLECTION_LAW_TOL)) {
            return Err(OrbitError::ReflectionLaw { index: i, defect: defect.as_f64() });
        }
    }
    Ok(())
}

/// Geometric data of one reflection.
///
/// `d` is the flight length arriving at `q` (from the previous reflection),
/// the convention of the block-product factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionFrame<T> {
    /// Position of this reflection in the orbit.
    pub index: usize,
    pub component: usize,
    pub q: Vec3<T>,
    pub nu: Vec3<T>,
    pub omega_prev: Vec3<T>,
    pub omega: Vec3<T>,
    pub d: T,
    pub theta: T,
    pub kappa: T,
    pub p: Vec3<T>,
    pub f: Vec3<T>,
    pub e: Vec3<T>,
    pub big_l: T,
    pub theta_tilde: T,
    pub cos_phi: T,
    pub perpendicular: bool,
    /// The neighbouring reflections lie on different balls.
    pub transition: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("frame {index}: {quantity} = {value} violates {bound}")]
pub struct FrameError {
    pub index: usize,
    pub quantity: &'static str,
    pub value: f64,
    pub bound: String,
}

impl<T: Real> ReflectionFrame<T> {
    fn build(
        index: usize,
        component: usize,
        prev: Vec3<T>,
        q: Vec3<T>,
        next: Vec3<T>,
        nu: Vec3<T>,
        radius: T,
        transition: bool,
    ) -> Self {
        let omega_prev = (q - prev).normalized();
        let omega = (next - q).normalized();
        let cos_phi = nu.dot(omega);
        let p = nu - omega * cos_phi;
        let e = Vec3::plane_normal();
        let perpendicular = p.norm() < T::tol(PERPENDICULAR_TOL);
        // second projection: near-perpendicular hits leave p small, so rounding in
        // the first one is amplified by normalization
        let f = if perpendicular { e.cross(omega).normalized() } else { (p - omega * p.dot(omega)).normalized() };
        let theta = T::lit(2.0) * cos_phi;
        let big_l = T::one() / (cos_phi * cos_phi);
        ReflectionFrame {
            index,
            component,
            q,
            nu,
            omega_prev,
            omega,
            d: (q - prev).norm(),
            theta,
            kappa: T::one() / radius,
            p,
            f,
            e,
            big_l,
            theta_tilde: big_l * theta,
            cos_phi,
            perpendicular,
            transition,
        }
    }

    /// Checks the frame invariants against the table constants.
    pub fn check(&self, c1: T, c2: T) -> Result<(), FrameError> {
        let fail = |quantity, value: T, bound: String| {
            Err(FrameError { index: self.index, quantity, value: value.as_f64(), bound })
        };
        let tol = T::tol(1e-12);
        if self.theta < T::lit(2.0) * c1 {
            return fail("theta", self.theta, format!(">= 2*c1 = {}", T::lit(2.0) * c1));
        }
        if self.big_l < T::one() - tol {
            return fail("L", self.big_l, ">= 1".into());
        }
        if self.transition && self.big_l < T::one() / (c2 * c2) {
            return fail("L", self.big_l, format!(">= 1/c2^2 = {} at a transition", T::one() / (c2 * c2)));
        }
        if self.f.dot(self.omega).abs() > tol {
            return fail("<f, omega>", self.f.dot(self.omega), "= 0".into());
        }
        if (self.f.norm() - T::one()).abs() > tol {
            return fail("|f|", self.f.norm(), "= 1".into());
        }
        if self.f.z.abs() > T::tol(1e-10) {
            return fail("f.z", self.f.z, "= 0 (f in the plane)".into());
        }
        if self.e.dot(self.omega).abs() > T::tol(1e-10) {
            return fail("<e, omega>", self.e.dot(self.omega), "= 0".into());
        }
        Ok(())
    }
}

/// Frames at every reflection that has both neighbours (all points of a
/// periodic orbit, the interior of an open one), without invariant checks.
pub fn raw_frames<T: Real>(orbit: &Orbit<T>, table: &BilliardTable<T>) -> Vec<ReflectionFrame<T>> {
    let n = orbit.points.len();
    let sym = orbit.word.symbols();
    let idx: Vec<usize> = if orbit.periodic { (0..n).collect() } else { (1..n.saturating_sub(1)).collect() };
    idx.into_iter()
        .map(|i| {
            let (ip, inx) = ((i + n - 1) % n, (i + 1) % n);
            let ball = table.ball(sym[i]).expect("orbit matches table");
            let q = orbit.points[i];
            ReflectionFrame::build(
                i,
                sym[i],
                orbit.points[ip],
                q,
                orbit.points[inx],
                ball.outward_normal(q),
                ball.radius,
                sym[ip] != sym[inx],
            )
        })
        .collect()
}

/// Frames with every invariant checked against the table constants.
pub fn frames<T: Real>(orbit: &Orbit<T>, table: &BilliardTable<T>) -> Result<Vec<ReflectionFrame<T>>, FrameError> {
    let fr = raw_frames(orbit, table);
    for f in &fr {
        f.check(table.constants.c1, table.constants.c2)?;
    }
    Ok(fr)
}

/// Checked frames of the `m` reflections following point `start`. Periodic
/// orbits are unrolled, so `m` may exceed the period.
pub fn frame_window<T: Real>(
    orbit: &Orbit<T>,
    table: &BilliardTable<T>,
    start: usize,
    m: usize,
) -> Result<Vec<ReflectionFrame<T>>, OrbitError> {
    let fr = frames(orbit, table)?;
    let n = orbit.points.len();
    if orbit.periodic {
        return Ok((1..=m).map(|k| fr[(start + k) % n]).collect());
    }
    if start + m + 1 >= n {
        return Err(OrbitError::WordLength { expected: start + m + 2, got: n });
    }
    // fr[k] is the frame at point k + 1
    Ok(fr[start..start + m].to_vec())
}

/// Empirical `cos φ` range over an ensemble of orbits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub c1_measured: f64,
    /// Largest `cos φ` over transition frames; `None` when the ensemble has
    /// none (e.g. only two-ball orbits).
    pub c2_measured: Option<f64>,
    pub frames: usize,
    pub transition_frames: usize,
}

pub fn calibrate_constants<T: Real>(
    table: &BilliardTable<T>,
    orbits: &[Orbit<T>],
) -> Result<Calibration, OrbitError> {
    let all: Vec<ReflectionFrame<T>> = orbits.iter().flat_map(|o| raw_frames(o, table)).collect();
    if all.is_empty() {
        return Err(OrbitError::EmptyEnsemble);
    }
    let c1 = all.iter().map(|f| f.cos_phi.as_f64()).fold(f64::INFINITY, f64::min);
    let trans: Vec<f64> = all.iter().filter(|f| f.transition).map(|f| f.cos_phi.as_f64()).collect();
    let c2 = trans.iter().copied().reduce(f64::max);
    if !(c1 > 0.0) {
        return Err(OrbitError::Calibration(format!("c1_measured = {c1} is not positive")));
    }
    if let Some(c2) = c2 {
        if !(c2 < 1.0) {
            return Err(OrbitError::Calibration(format!("c2_measured = {c2} is not below 1")));
        }
        let (d0, r0) = (table.constants.d0.as_f64(), table.constants.r0.as_f64());
        if !(c2 * d0 > 2.0 * r0) {
            return Err(OrbitError::Calibration(format!("c2_measured*d0 = {} <= 2*r0 = {}", c2 * d0, 2.0 * r0)));
        }
    }
    Ok(Calibration { c1_measured: c1, c2_measured: c2, frames: all.len(), transition_frames: trans.len() })
}

pub const ORBIT_CSV_HEADER: &str = "index,component,qx,qy,qz,d_i,theta_i,cos_phi,L_i,flag_perpendicular";

/// One CSV row per reflection point. Columns derived from frames are empty
/// at the free ends of an open chain.
pub fn orbit_csv<T: Real>(orbit: &Orbit<T>, table: &BilliardTable<T>) -> String {
    let fr = raw_frames(orbit, table);
    let by_index: BTreeMap<usize, &ReflectionFrame<T>> = fr.iter().map(|f| (f.index, f)).collect();
    let mut s = String::from(ORBIT_CSV_HEADER);
    s.push('\n');
    for (i, q) in orbit.points.iter().enumerate() {
        write!(s, "{},{},{},{},{},", i, orbit.word.symbols()[i], q.x, q.y, q.z).unwrap();
        match by_index.get(&i) {
            Some(f) => writeln!(
                s,
                "{},{},{},{},{}",
                f.d,
                f.theta,
                f.cos_phi,
                f.big_l,
                if f.perpendicular { 1 } else { 0 }
            )
            .unwrap(),
            None => s.push_str(",,,,\n"),
        }
    }
    s
}
