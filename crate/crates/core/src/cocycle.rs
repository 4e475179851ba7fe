//! Linearized dynamics along an orbit.
//!
//! Tangent data at reflection `i` live in the plane `Πᵢ` through `qᵢ`
//! orthogonal to the outgoing direction `ωᵢ`, as pairs `(u, v)` of a position
//! and a direction offset. Coordinates are taken in a basis transported from
//! `Π₀` by the successive reflections, ordered `(u₁, u₂, v₁, v₂)`; for a
//! planar orbit the first basis vector is the plane normal `e` and the second
//! spans `Πᵢ ∩ Γ`.

use crate::geometry::{first_hit, reflect, BilliardTable, PhaseState};
use crate::linalg::{Mat2, Mat4, Vec3};
use crate::orbit::ReflectionFrame;
use crate::scalar::Real;
use num_traits::Num;
use std::fmt::Write as _;
use thiserror::Error;

/// Frames whose `L` exceeds `1` by more than this belong to the index set `I`.
pub const INDEX_SET_TOL: f64 = 1e-10;
/// Largest coordinate of `q`, `ω` or `ν` off the plane for a planar frame.
pub const PLANAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CocycleError {
    #[error("no frames")]
    Empty,
    #[error("frame {index}: <omega, nu> = {cosine} is not positive")]
    DegenerateFrame { index: usize, cosine: f64 },
    #[error("frame {index} is not planar ({quantity} = {value:e})")]
    NonPlanar { index: usize, quantity: &'static str, value: f64 },
    #[error("factor {index}: {detail}")]
    BadFactor { index: usize, detail: String },
    #[error("basis at step {step} is not orthonormal in the cross-section (defect {defect:e})")]
    Basis { step: usize, defect: f64 },
    #[error("finite differences failed at bounce {bounce}: {reason}")]
    FiniteDifference { bounce: usize, reason: String },
    #[error("comparison sequences infeasible at i = {index}: {reason}\n{dump}")]
    Infeasible { index: usize, reason: String, dump: String },
}

/// Projection of `ξ` along `ω` onto the tangent plane `ν^⊥`.
#[inline]
fn project<T: Real>(xi: Vec3<T>, omega: Vec3<T>, nu: Vec3<T>) -> Vec3<T> {
    xi - omega * (xi.dot(nu) / omega.dot(nu))
}

/// Matrix of the curvature operator `ψ̃` of a frame in the orthonormal basis
/// `basis` of its cross-section: `⟨ψ̃ξ, η⟩ = κθ ⟨π̃ξ, π̃η⟩`.
pub fn psi_in_basis<T: Real>(frame: &ReflectionFrame<T>, basis: [Vec3<T>; 2]) -> Result<Mat2<T>, CocycleError> {
    let c = frame.omega.dot(frame.nu);
    if !(c > T::zero()) {
        return Err(CocycleError::DegenerateFrame { index: frame.index, cosine: c.as_f64() });
    }
    let k = frame.kappa * frame.theta;
    let p = basis.map(|b| project(b, frame.omega, frame.nu));
    let off = k * p[0].dot(p[1]);
    Ok(Mat2([[k * p[0].dot(p[0]), off], [off, k * p[1].dot(p[1])]]))
}

/// `ψ̃` in the frame's own `(e, f)` basis.
pub fn psi_operator<T: Real>(frame: &ReflectionFrame<T>) -> Result<Mat2<T>, CocycleError> {
    psi_in_basis(frame, [frame.e, frame.f])
}

/// Orthonormal basis of the plane orthogonal to `omega`, starting from the
/// plane normal `e` when possible.
pub fn initial_basis<T: Real>(omega: Vec3<T>) -> [Vec3<T>; 2] {
    let e = Vec3::plane_normal();
    let mut b1 = e - omega * e.dot(omega);
    if b1.norm() < T::lit(1e-6) {
        let x = Vec3::new(T::one(), T::zero(), T::zero());
        b1 = x - omega * x.dot(omega);
    }
    let b1 = b1.normalized();
    [b1, omega.cross(b1).normalized()]
}

/// The block factor `[[I, dI], [Ψ, I + dΨ]]` of one bounce.
pub fn bounce_factor<T: Real>(d: T, psi: Mat2<T>) -> Mat4<T> {
    let i = Mat2::identity();
    Mat4::from_blocks(i, i * d, psi, i + psi * d)
}

/// Per-bounce factors in the transported bases, with the bases themselves.
/// `bases[0]` spans `Π₀` and `bases[k]` the cross-section after bounce `k`.
pub fn transported_factors<T: Real>(
    frames: &[ReflectionFrame<T>],
) -> Result<(Vec<Mat4<T>>, Vec<[Vec3<T>; 2]>), CocycleError> {
    let first = frames.first().ok_or(CocycleError::Empty)?;
    let mut basis = initial_basis(first.omega_prev);
    let mut bases = vec![basis];
    let mut factors = Vec::with_capacity(frames.len());
    for (step, f) in frames.iter().enumerate() {
        basis = basis.map(|b| reflect(b, f.nu));
        let defect = basis[0]
            .dot(f.omega)
            .abs()
            .max(basis[1].dot(f.omega).abs())
            .max(basis[0].dot(basis[1]).abs());
        if defect > T::tol(1e-9) {
            return Err(CocycleError::Basis { step: step + 1, defect: defect.as_f64() });
        }
        factors.push(bounce_factor(f.d, psi_in_basis(f, basis)?));
        bases.push(basis);
    }
    Ok((factors, bases))
}

/// A 4×4 matrix times `e^{log_scale}`, with the cross-section bases it maps
/// between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatrix4<T> {
    pub matrix: Mat4<T>,
    pub log_scale: T,
    pub basis_in: [Vec3<T>; 2],
    pub basis_out: [Vec3<T>; 2],
}

impl<T: Real> BlockMatrix4<T> {
    fn rescale(&mut self) {
        let m = self.matrix.max_abs();
        if m > T::zero() {
            self.matrix = self.matrix * (T::one() / m);
            self.log_scale = self.log_scale + m.ln();
        }
    }

    /// Represented matrix, which may overflow for long products.
    pub fn unscaled(&self) -> Mat4<T> {
        self.matrix * self.log_scale.exp()
    }

    /// `‖MᵀJM − e^{−2ℓ}J‖ / max(e^{−2ℓ}, ‖M‖²)` in the max-entry norm, for the
    /// represented symplectic matrix `e^ℓ M`.
    ///
    /// Normalizing by `‖M‖²` measures the defect against the size of the
    /// terms actually formed; once `e^{−2ℓ}` drops below rounding the defect
    /// cannot be resolved relative to it.
    pub fn symplectic_defect(&self) -> T {
        let j = Mat4::symplectic_form();
        let target = (-(self.log_scale + self.log_scale)).exp();
        let m = self.matrix;
        let defect = (m.transpose() * j * m - j * target).max_abs();
        let norm = m.max_abs();
        defect / target.max(norm * norm)
    }

    /// Largest entry coupling the first coordinates `(u₁, v₁)` with the second
    /// `(u₂, v₂)`, relative to the largest entry within either pair.
    pub fn ef_coupling(&self) -> T {
        let m = &self.matrix;
        let (mut cross, mut within) = (T::zero(), T::zero());
        for r in 0..4 {
            for c in 0..4 {
                let x = m[(r, c)].abs();
                if r % 2 == c % 2 {
                    within = within.max(x);
                } else {
                    cross = cross.max(x);
                }
            }
        }
        cross / within
    }

    /// The 2×2 matrix acting on the first (`c = 0`) or second (`c = 1`)
    /// coordinate of `(u, v)`, without the scale.
    pub fn restricted(&self, c: usize) -> Mat2<T> {
        let m = &self.matrix;
        Mat2([[m[(c, c)], m[(c, c + 2)]], [m[(c + 2, c)], m[(c + 2, c + 2)]]])
    }

    /// `max |A − B| / max |B|` after bringing `self` to the scale of `other`.
    pub fn relative_difference(&self, other: &BlockMatrix4<T>) -> T {
        let a = self.matrix * (self.log_scale - other.log_scale).exp();
        (a - other.matrix).max_abs() / other.matrix.max_abs()
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("row,c0,c1,c2,c3\n");
        for r in 0..4 {
            writeln!(s, "{},{},{},{},{}", r, self.matrix[(r, 0)], self.matrix[(r, 1)], self.matrix[(r, 2)], self.matrix[(r, 3)])
                .unwrap();
        }
        writeln!(s, "logscale,{}", self.log_scale).unwrap();
        s
    }
}

/// Accumulates `Fₘ ⋯ F₁` with scale extraction after every step.
pub fn accumulate<T: Real>(factors: &[Mat4<T>], bases: ([Vec3<T>; 2], [Vec3<T>; 2])) -> BlockMatrix4<T> {
    let mut acc = BlockMatrix4 { matrix: Mat4::identity(), log_scale: T::zero(), basis_in: bases.0, basis_out: bases.1 };
    for f in factors {
        acc.matrix = *f * acc.matrix;
        acc.rescale();
    }
    acc
}

/// Linearization of the composed cross-section map over the given bounces.
pub fn poincare_product<T: Real>(frames: &[ReflectionFrame<T>]) -> Result<BlockMatrix4<T>, CocycleError> {
    let (factors, bases) = transported_factors(frames)?;
    Ok(accumulate(&factors, (bases[0], *bases.last().unwrap())))
}

/// Scalar data `(d, a, b)` of one factor `[[1, d], [a, b]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor<T> {
    pub d: T,
    pub a: T,
    pub b: T,
}

impl<T: Real> Factor<T> {
    /// Factor with `b = 1 + d·a`.
    pub fn new(d: T, a: T) -> Self {
        Self { d, a, b: T::one() + d * a }
    }
}

/// Per-bounce scalars of the out-of-plane (`plain`) and in-plane (`tilde`)
/// reductions of a planar product.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarFactors<T> {
    pub plain: Vec<Factor<T>>,
    pub tilde: Vec<Factor<T>>,
    pub big_l: Vec<T>,
}

impl<T: Real> PlanarFactors<T> {
    /// Membership of each bounce in `I = {i : L_i > 1}`.
    pub fn index_set(&self) -> Vec<bool> {
        self.big_l.iter().map(|&l| l > T::one() + T::tol(INDEX_SET_TOL)).collect()
    }

    /// Builds the pair from the plain factors and `L` alone: `ã = La`,
    /// `b̃ = 1 + d·ã`.
    pub fn from_plain(plain: Vec<Factor<T>>, big_l: Vec<T>) -> Self {
        let tilde = plain.iter().zip(&big_l).map(|(f, &l)| Factor::new(f.d, f.a * l)).collect();
        Self { plain, tilde, big_l }
    }
}

/// Splits planar frames into the scalar factors acting on `E` (spanned by
/// the plane normal) and `F` (in the plane).
pub fn planar_split<T: Real>(frames: &[ReflectionFrame<T>]) -> Result<PlanarFactors<T>, CocycleError> {
    if frames.is_empty() {
        return Err(CocycleError::Empty);
    }
    let tol = T::tol(PLANAR_TOL);
    let mut out = PlanarFactors { plain: vec![], tilde: vec![], big_l: vec![] };
    for f in frames {
        for (quantity, v) in [("q.z", f.q.z), ("omega.z", f.omega.z), ("nu.z", f.nu.z)] {
            if v.abs() > tol {
                return Err(CocycleError::NonPlanar { index: f.index, quantity, value: v.as_f64() });
            }
        }
        if !(f.cos_phi > T::zero()) {
            return Err(CocycleError::DegenerateFrame { index: f.index, cosine: f.cos_phi.as_f64() });
        }
        let plain = Factor::new(f.d, f.kappa * f.theta);
        let tilde = Factor::new(f.d, f.kappa * f.theta_tilde);
        let slack = T::tol(1e-14);
        if tilde.a < plain.a * (T::one() - slack) || tilde.b < plain.b * (T::one() - slack) {
            return Err(CocycleError::BadFactor { index: f.index, detail: "in-plane factor below out-of-plane".into() });
        }
        // L = 1 up to rounding at perpendicular hits
        let tilde = if tilde.a < plain.a || tilde.b < plain.b { plain } else { tilde };
        out.plain.push(plain);
        out.tilde.push(tilde);
        out.big_l.push(f.big_l);
    }
    Ok(out)
}

/// Initial values of the Δ sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Base {
    /// `Δ₀ = I`: `Δ_j` are exactly the entries of the product of `j` factors.
    Identity,
    /// `Δ⁽¹⁾₀ = Δ⁽²⁾₀ = Δ⁽³⁾₀ = Δ⁽⁴⁾₀ = 1`: the product applied to `(1, 1)`.
    Ones,
}

/// A column `(x, y)·e^{log_scale}` with `max(|x|, |y|) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogColumn<T> {
    log_scale: T,
    x: T,
    y: T,
}

impl<T: Real> LogColumn<T> {
    fn step(&mut self, f: &Factor<T>) {
        let x = self.x + f.d * self.y;
        let y = f.a * self.x + f.b * self.y;
        let m = x.abs().max(y.abs());
        self.x = x / m;
        self.y = y / m;
        self.log_scale = self.log_scale + m.ln();
    }

    fn logs(&self) -> (T, T) {
        (self.log_scale + self.x.ln(), self.log_scale + self.y.ln())
    }
}

/// `log Δ⁽¹⁾…log Δ⁽⁴⁾` for `j = 0..=m` (entries may be `−∞` at `j = 0`).
pub fn delta_recursion<T: Real>(factors: &[Factor<T>], base: Base) -> Result<Vec<[T; 4]>, CocycleError> {
    for (i, f) in factors.iter().enumerate() {
        if !(f.d > T::zero() && f.a > T::zero() && f.b > T::zero()) {
            return Err(CocycleError::BadFactor { index: i + 1, detail: "d, a, b must be positive".into() });
        }
    }
    let (x13, y13, x24, y24) = match base {
        Base::Identity => (T::one(), T::zero(), T::zero(), T::one()),
        Base::Ones => (T::one(), T::one(), T::one(), T::one()),
    };
    let mut c13 = LogColumn { log_scale: T::zero(), x: x13, y: y13 };
    let mut c24 = LogColumn { log_scale: T::zero(), x: x24, y: y24 };
    let mut out = Vec::with_capacity(factors.len() + 1);
    let push = |out: &mut Vec<[T; 4]>, a: &LogColumn<T>, b: &LogColumn<T>| {
        let (l1, l3) = a.logs();
        let (l2, l4) = b.logs();
        out.push([l1, l2, l3, l4]);
    };
    push(&mut out, &c13, &c24);
    for f in factors {
        c13.step(f);
        c24.step(f);
        push(&mut out, &c13, &c24);
    }
    Ok(out)
}

/// The Δ sequences computed by multiplying the factors out directly, in any
/// exact or floating number type.
pub fn direct_products<N: Num + Clone>(factors: &[(N, N, N)], base: Base) -> Vec<[N; 4]> {
    let (one, zero) = (N::one(), N::zero());
    let mut cur = match base {
        Base::Identity => [one.clone(), zero.clone(), zero, one],
        Base::Ones => [one.clone(), one.clone(), one.clone(), one],
    };
    let mut out = vec![cur.clone()];
    for (d, a, b) in factors {
        let [d1, d2, d3, d4] = cur;
        cur = [
            d1.clone() + d.clone() * d3.clone(),
            d2.clone() + d.clone() * d4.clone(),
            a.clone() * d1 + b.clone() * d3,
            a.clone() * d2 + b.clone() * d4,
        ];
        out.push(cur.clone());
    }
    out
}

/// Log-domain record of both Δ quadruples along an orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTrace<T> {
    pub base: Base,
    /// `log Δ⁽¹⁾…log Δ⁽⁴⁾` for `j = 0..=m`.
    pub plain: Vec<[T; 4]>,
    pub tilde: Vec<[T; 4]>,
    /// Membership of step `j` in `I`; `in_i[0]` is always false.
    pub in_i: Vec<bool>,
}

impl<T: Real> DeltaTrace<T> {
    pub fn new(factors: &PlanarFactors<T>, base: Base) -> Result<Self, CocycleError> {
        let mut in_i = vec![false];
        in_i.extend(factors.index_set());
        Ok(Self {
            base,
            plain: delta_recursion(&factors.plain, base)?,
            tilde: delta_recursion(&factors.tilde, base)?,
            in_i,
        })
    }

    /// Number of steps `m`.
    pub fn len(&self) -> usize {
        self.plain.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `r_j = Δ⁽²⁾_j / Δ⁽⁴⁾_j`.
    pub fn ratio(&self, j: usize) -> T {
        (self.plain[j][1] - self.plain[j][3]).exp()
    }

    pub fn ratio_tilde(&self, j: usize) -> T {
        (self.tilde[j][1] - self.tilde[j][3]).exp()
    }

    /// First `j ≥ 1` at which `log Δ⁽²⁾_j < j·log(1 + d0)`, if any.
    pub fn growth_floor_violation(&self, d0: T) -> Option<usize> {
        let step = (T::one() + d0).ln();
        (1..self.plain.len()).find(|&j| {
            let floor = T::from_usize(j).unwrap() * step;
            self.plain[j][1] < floor - T::tol(1e-12) * floor.abs().max(T::one())
        })
    }

    pub const CSV_HEADER: &'static str = "j,logD1,logD2,logD3,logD4,logD1t,logD2t,logD3t,logD4t,r,rt,in_I";

    pub fn csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for j in 0..self.plain.len() {
            let (p, t) = (self.plain[j], self.tilde[j]);
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                j,
                p[0],
                p[1],
                p[2],
                p[3],
                t[0],
                t[1],
                t[2],
                t[3],
                self.ratio(j),
                self.ratio_tilde(j),
                u8::from(self.in_i[j])
            )
            .unwrap();
        }
        s
    }
}

/// `min over i ∈ I of min(log(ãᵢ/aᵢ), log(b̃ᵢ/bᵢ))`, capped at `log(1 + d0)`;
/// `None` when `I` is empty.
pub fn measure_s<T: Real>(factors: &PlanarFactors<T>, d0: T) -> Option<T> {
    let in_i = factors.index_set();
    let s = factors
        .plain
        .iter()
        .zip(&factors.tilde)
        .zip(&in_i)
        .filter(|(_, &i)| i)
        .map(|((p, t), _)| (t.a / p.a).ln().min((t.b / p.b).ln()))
        .fold(None, |m: Option<T>, x| Some(m.map_or(x, |m| m.min(x))))?;
    Some(s.min((T::one() + d0).ln()))
}

/// Smallest lift `min over i ∈ I of min(ãᵢ − aᵢ, b̃ᵢ − bᵢ)`.
pub fn measure_c<T: Real>(factors: &PlanarFactors<T>) -> Option<T> {
    let in_i = factors.index_set();
    factors
        .plain
        .iter()
        .zip(&factors.tilde)
        .zip(&in_i)
        .filter(|(_, &i)| i)
        .map(|((p, t), _)| (t.a - p.a).min(t.b - p.b))
        .fold(None, |m: Option<T>, x| Some(m.map_or(x, |m| m.min(x))))
}

/// Explicit sequences `tᵢ, sᵢ, uᵢ = e^{Σt}, vᵢ = e^{sᵢ}uᵢ` with
/// `Δ̃⁽²⁾ᵢ ≥ uᵢΔ⁽²⁾ᵢ` and `Δ̃⁽⁴⁾ᵢ ≥ vᵢΔ⁽⁴⁾ᵢ`, all indexed `0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSequences<T> {
    /// `None` when `I` is empty; the sequences are then trivial.
    pub s: Option<T>,
    pub d0: T,
    pub i0: usize,
    pub in_i: Vec<bool>,
    pub t: Vec<T>,
    pub s_seq: Vec<T>,
    pub log_u: Vec<T>,
    pub log_v: Vec<T>,
    /// Measured `min(ã − a, b̃ − b)` over `I`.
    pub c_measured: Option<T>,
    /// `|I ∩ [i0, m]|`.
    pub count: usize,
    /// `log Δ̃⁽⁴⁾_m − log Δ⁽⁴⁾_m − (count·s/2 − s)`.
    pub domination_margin: T,
    pub trace: DeltaTrace<T>,
}

/// `log((d0 e^{sᵢ} + 1)/(1 + d0))`, the largest admissible `tᵢ₊₁`.
fn t_bound<T: Real>(si: T, d0: T) -> T {
    ((d0 * si.exp() + T::one()) / (T::one() + d0)).ln()
}

/// Root in `(0, sᵢ/2)` of `x ↦ d0(e^{sᵢ−2x} − 1) − (1 − e^{−2x})`.
fn equal_split_root<T: Real>(si: T, d0: T) -> T {
    let g = |x: T| {
        let two = T::lit(2.0);
        d0 * ((si - two * x).exp() - T::one()) - (T::one() - (-(two * x)).exp())
    };
    let (mut lo, mut hi) = (T::zero(), si / T::lit(2.0));
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

const SAFETY: f64 = 0.9;

/// Builds the comparison sequences for planar factors.
///
/// `d0` must bound every flight length from below. The trace uses the
/// all-ones base so that `Δ⁽²⁾ ≤ Δ⁽⁴⁾` holds from `j = 0`. Every inequality is
/// then verified on the computed Δ values.
pub fn comparison_sequences<T: Real>(
    factors: &PlanarFactors<T>,
    d0: T,
) -> Result<ComparisonSequences<T>, CocycleError> {
    for (i, (p, t)) in factors.plain.iter().zip(&factors.tilde).enumerate() {
        if t.d != p.d || t.a < p.a || t.b < p.b {
            return Err(CocycleError::BadFactor { index: i + 1, detail: "in-plane factor below out-of-plane".into() });
        }
    }
    let trace = DeltaTrace::new(factors, Base::Ones)?;
    let m = trace.len();
    let in_i = trace.in_i.clone();
    let s = measure_s(factors, d0);
    let i0 = in_i.iter().skip(1).position(|&x| x).map_or(m, |p| p);
    let zero = T::zero();
    let mut t = vec![zero; m + 1];
    let mut s_seq = vec![zero; m + 1];
    let mut log_u = vec![zero; m + 1];
    let mut log_v = vec![zero; m + 1];
    if let Some(s) = s {
        let quarter = s / T::lit(4.0);
        for i in i0..m {
            let si = s_seq[i];
            let (ti, next) = if in_i[i + 1] {
                let ti = quarter.min(T::lit(SAFETY) * t_bound(si, d0));
                (ti, s - ti)
            } else {
                let x = equal_split_root(si, d0).min(t_bound(si, d0)).min(si / T::lit(2.0));
                let x = T::lit(SAFETY) * x;
                (x, x)
            };
            t[i + 1] = ti;
            s_seq[i + 1] = next;
            log_u[i + 1] = log_u[i] + ti;
            log_v[i + 1] = log_u[i + 1] + next;
        }
    }
    let dump = |upto: usize| {
        let mut d = String::from("i,in_I,t,s_i,log_u,log_v,logD2,logD2t,logD4,logD4t\n");
        for i in 0..=upto.min(m) {
            let _ = writeln!(
                d,
                "{},{},{},{},{},{},{},{},{},{}",
                i,
                u8::from(in_i[i]),
                t[i],
                s_seq[i],
                log_u[i],
                log_v[i],
                trace.plain[i][1],
                trace.tilde[i][1],
                trace.plain[i][3],
                trace.tilde[i][3]
            );
        }
        d
    };
    let fail = |index: usize, reason: String| Err(CocycleError::Infeasible { index, reason, dump: dump(index) });
    let slack = |x: T| T::tol(1e-12) * x.abs().max(T::one());
    for i in 0..=m {
        let (p, q) = (trace.plain[i], trace.tilde[i]);
        if q[1] < log_u[i] + p[1] - slack(p[1]) {
            return fail(i, "tilde D2 < u D2".into());
        }
        if q[3] < log_v[i] + p[3] - slack(p[3]) {
            return fail(i, "tilde D4 < v D4".into());
        }
        if i > i0 {
            if !(t[i] >= zero && t[i] < s_seq[i - 1] || (i == i0 + 1 && t[i] == zero)) {
                return fail(i, format!("t_i = {} not in [0, s_(i-1)) with s_(i-1) = {}", t[i], s_seq[i - 1]));
            }
            if let Some(s) = s {
                if in_i[i] && s_seq[i] < s / T::lit(2.0) {
                    return fail(i, format!("s_i = {} < s/2 at i in I", s_seq[i]));
                }
            }
        }
    }
    let count = in_i[i0.min(m)..].iter().filter(|&&x| x).count();
    let s_val = s.unwrap_or(zero);
    let gain = trace.tilde[m][3] - trace.plain[m][3];
    let domination_margin = gain - (T::from_usize(count).unwrap() * s_val / T::lit(2.0) - s_val);
    Ok(ComparisonSequences {
        s,
        d0,
        i0,
        in_i,
        t,
        s_seq,
        log_u,
        log_v,
        c_measured: measure_c(factors),
        count,
        domination_margin,
        trace,
    })
}

/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// One bounce of the shooting map `(u, v) ↦ (u′, v′)` in coordinates of the
/// given bases; `None` if the perturbed ray misses or changes ball.
fn shoot<T: Real>(
    table: &BilliardTable<T>,
    from: (Vec3<T>, Vec3<T>, [Vec3<T>; 2]),
    to: (&ReflectionFrame<T>, [Vec3<T>; 2]),
    uv: [T; 4],
) -> Option<[T; 4]> {
    let (q0, w0, b0) = from;
    let (frame, b1) = to;
    let start = q0 + b0[0] * uv[0] + b0[1] * uv[1];
    let dir = (w0 + b0[0] * uv[2] + b0[1] * uv[3]).normalized();
    let hit = first_hit(&PhaseState { point: start, direction: dir }, table).ok()??;
    if hit.component != frame.component {
        return None;
    }
    let out = reflect(dir, hit.outward_normal);
    let along = out.dot(frame.omega);
    if !(along > T::zero()) {
        return None;
    }
    let t = (frame.q - hit.point).dot(frame.omega) / along;
    let u = hit.point + out * t - frame.q;
    let v = out * (T::one() / along) - frame.omega;
    Some([u.dot(b1[0]), u.dot(b1[1]), v.dot(b1[0]), v.dot(b1[1])])
}

fn bounce_jacobian<T: Real>(
    table: &BilliardTable<T>,
    from: (Vec3<T>, Vec3<T>, [Vec3<T>; 2]),
    to: (&ReflectionFrame<T>, [Vec3<T>; 2]),
    h: T,
) -> Option<Mat4<T>> {
    let mut j = Mat4::zero();
    for c in 0..4 {
        let mut plus = [T::zero(); 4];
        plus[c] = h;
        let mut minus = [T::zero(); 4];
        minus[c] = -h;
        let (p, m) = (shoot(table, from, to, plus)?, shoot(table, from, to, minus)?);
        j.set_column(c, [0, 1, 2, 3].map(|r| (p[r] - m[r]) / (h + h)));
    }
    Some(j)
}

/// Per-bounce Jacobians of the shooting map by central differences, in the
/// transported bases of [`transported_factors`]. A failing bounce is retried
/// once with `h/2`.
pub fn finite_difference_factors<T: Real>(
    table: &BilliardTable<T>,
    frames: &[ReflectionFrame<T>],
    h: T,
) -> Result<(Vec<Mat4<T>>, Vec<[Vec3<T>; 2]>), CocycleError> {
    let first = frames.first().ok_or(CocycleError::Empty)?;
    let (_, bases) = transported_factors(frames)?;
    let mut q = first.q - first.omega_prev * first.d;
    let mut w = first.omega_prev;
    let mut jacobians = Vec::with_capacity(frames.len());
    for (k, f) in frames.iter().enumerate() {
        let from = (q, w, bases[k]);
        let to = (f, bases[k + 1]);
        let j = bounce_jacobian(table, from, to, h)
            .or_else(|| bounce_jacobian(table, from, to, h / T::lit(2.0)))
            .ok_or_else(|| CocycleError::FiniteDifference {
                bounce: k + 1,
                reason: "perturbed ray escapes or changes itinerary".into(),
            })?;
        jacobians.push(j);
        q = f.q;
        w = f.omega;
    }
    Ok((jacobians, bases))
}

/// Jacobian of the composed shooting map by central differences, with the
/// same bases and scale convention as [`poincare_product`].
pub fn finite_difference_poincare<T: Real>(
    table: &BilliardTable<T>,
    frames: &[ReflectionFrame<T>],
    h: T,
) -> Result<BlockMatrix4<T>, CocycleError> {
    let (jacobians, bases) = finite_difference_factors(table, frames, h)?;
    Ok(accumulate(&jacobians, (bases[0], bases[frames.len()])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Constants;
    use crate::orbit::{frame_window, solve_periodic_orbit};
    use crate::symbolic::Word;

    fn table() -> BilliardTable<f64> {
        BilliardTable::equilateral(1.0, 0.05, Constants { d0: 0.9, r0: 0.05, c1: 0.5, c2: 0.9 })
    }

    fn window(word: &str, m: usize) -> Vec<ReflectionFrame<f64>> {
        let t = table();
        let o = solve_periodic_orbit(&t, &word.parse::<Word>().unwrap()).unwrap();
        frame_window(&o, &t, 0, m).unwrap()
    }

    #[test]
    fn psi_is_diagonal_on_planar_frames() {
        for f in window("1,2,3", 3).iter().chain(window("1,2,1,3", 4).iter()) {
            let psi = psi_operator(f).unwrap();
            assert!((psi.0[0][0] - f.kappa * f.theta).abs() < 1e-12 * psi.max_abs());
            assert!((psi.0[1][1] - f.kappa * f.theta / f.cos_phi.powi(2)).abs() < 1e-12 * psi.max_abs());
            assert!(psi.0[0][1].abs() < 1e-13 * psi.max_abs());
            assert_eq!(psi.0[0][1], psi.0[1][0]);
        }
    }

    #[test]
    fn perpendicular_psi_is_scalar() {
        let f = window("1,2", 1)[0];
        let psi = psi_operator(&f).unwrap();
        assert!((psi.0[0][0] - 40.0).abs() < 1e-12 && (psi.0[1][1] - 40.0).abs() < 1e-12);
        assert!(psi.0[0][1].abs() < 1e-13);
    }

    #[test]
    fn two_cycle_period_block() {
        let p = poincare_product(&window("1,2", 1)).unwrap();
        for c in 0..2 {
            let b = p.restricted(c) * p.log_scale.exp();
            assert!((b.0[0][0] - 1.0).abs() < 1e-12 && (b.0[0][1] - 0.9).abs() < 1e-12);
            assert!((b.0[1][0] - 40.0).abs() < 1e-11 && (b.0[1][1] - 37.0).abs() < 1e-11);
            assert!((b.det() - 1.0).abs() < 1e-10);
            assert!((b.trace() - 38.0).abs() < 1e-11);
        }
    }

    #[test]
    fn product_is_symplectic_and_block_diagonal() {
        for m in [1, 2, 5, 50, 200] {
            let p = poincare_product(&window("1,2,1,3,2,3", m)).unwrap();
            assert!(p.symplectic_defect() < 1e-9, "m = {m}: {}", p.symplectic_defect());
            assert!(p.ef_coupling() < 1e-10, "m = {m}: {}", p.ef_coupling());
        }
    }

    #[test]
    fn short_products_satisfy_the_unscaled_identity() {
        let p = poincare_product(&window("1,2,3", 2)).unwrap();
        let m = p.unscaled();
        let j = Mat4::symplectic_form();
        let d = (m.transpose() * j * m - j).max_abs();
        assert!(d < 1e-9 * m.max_abs().powi(2), "{d}");
    }

    #[test]
    fn planar_split_examples() {
        let f = planar_split(&window("1,2", 2)).unwrap();
        assert_eq!(f.plain, f.tilde);
        assert!(f.index_set().iter().all(|&x| !x));
        let f = planar_split(&window("1,2,3", 3)).unwrap();
        for (p, t) in f.plain.iter().zip(&f.tilde) {
            assert!((t.a / p.a - 4.0 / 3.0).abs() < 1e-12);
            assert!(t.b > p.b);
        }
    }

    #[test]
    fn delta_first_steps() {
        let f = Factor { d: 0.9, a: 40.0, b: 37.0 };
        let tr = delta_recursion(&[f, f], Base::Identity).unwrap();
        let e1 = tr[1].map(f64::exp);
        assert!((e1[0] - 1.0).abs() < 1e-15 && (e1[1] - 0.9).abs() < 1e-15);
        assert!((e1[2] - 40.0).abs() < 1e-13 && (e1[3] - 37.0).abs() < 1e-13);
        assert!((tr[2][3].exp() - 1405.0).abs() < 1e-10);
        let bad = Factor { d: 0.9, a: -1.0, b: 37.0 };
        assert!(delta_recursion(&[bad], Base::Identity).is_err());
    }

    #[test]
    fn comparison_on_triangle_orbit() {
        let fr = window("1,2,3", 300);
        let pf = planar_split(&fr).unwrap();
        let c = comparison_sequences(&pf, 0.9).unwrap();
        assert_eq!(c.i0, 0);
        assert_eq!(c.count, 300);
        assert!(c.domination_margin >= 0.0);
        let s = c.s.unwrap();
        assert!(c.log_v[300] >= 150.0 * s / 4.0);
    }

    #[test]
    fn comparison_without_transitions_is_trivial() {
        let pf = planar_split(&window("1,2", 40)).unwrap();
        let c = comparison_sequences(&pf, 0.9).unwrap();
        assert_eq!(c.s, None);
        assert_eq!(c.i0, 40);
        assert!(c.log_u.iter().chain(&c.log_v).all(|&x| x == 0.0));
    }

    #[test]
    fn equal_split_has_margin() {
        let (d0, si): (f64, f64) = (0.9, 0.05);
        let x = equal_split_root(si, d0);
        let chosen = SAFETY * x.min(t_bound(si, d0)).min(si / 2.0);
        assert!(chosen > 0.0 && chosen <= 0.9 * (si / 2.0));
        let g = |x: f64| d0 * ((si - 2.0 * x).exp() - 1.0) - (1.0 - (-2.0 * x).exp());
        assert!(g(chosen) > 0.0);
        assert!(g(x).abs() < 1e-14);
    }

    #[test]
    fn finite_differences_match_single_bounce() {
        let fr = window("1,2", 1);
        let t = table();
        let fd = finite_difference_poincare(&t, &fr, DEFAULT_FD_STEP).unwrap();
        let p = poincare_product(&fr).unwrap();
        assert!(fd.relative_difference(&p) < 1e-6, "{}", fd.relative_difference(&p));
    }
}
