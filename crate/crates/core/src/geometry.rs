//! Scatterer configuration and the billiard ball map.
//!
//! All ball centres lie in the plane `z = 0`. A table carries the
//! configuration constants `d0`, `r0`, `c1`, `c2`; [`validate_table`] checks
//! them together with the no-eclipse condition.

use crate::linalg::Vec3;
use crate::scalar::Real;
use std::fmt;
use thiserror::Error;

/// Minimum forward travel before a sphere intersection counts as a hit.
pub const MIN_TRAVEL: f64 = 1e-12;
/// Below this `|⟨v, ν⟩|` a hit is tangential.
pub const GRAZING_COSINE: f64 = 1e-9;
/// Distance tolerance for a point to count as lying on a sphere.
pub const ON_SPHERE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball<T> {
    pub centre: Vec3<T>,
    pub radius: T,
    /// Symbol of this component, `1..=k0`.
    pub index: usize,
}

impl<T: Real> Ball<T> {
    pub fn curvature(&self) -> T {
        T::one() / self.radius
    }

    pub fn outward_normal(&self, p: Vec3<T>) -> Vec3<T> {
        (p - self.centre).normalized()
    }

    fn surface_gap(&self, p: Vec3<T>) -> T {
        (p - self.centre).norm() - self.radius
    }
}

/// Configuration constants of a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants<T> {
    pub d0: T,
    pub r0: T,
    pub c1: T,
    pub c2: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilliardTable<T> {
    balls: Vec<Ball<T>>,
    pub constants: Constants<T>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructuralError {
    #[error("at least 3 balls are required, got {0}")]
    TooFewBalls(usize),
    #[error("centre of ball {index} is off the plane z = 0 (z = {z})")]
    CentreOffPlane { index: usize, z: f64 },
    #[error("ball {index} has non-positive radius {radius}")]
    NonPositiveRadius { index: usize, radius: f64 },
    #[error("ball {index} has a non-finite centre or radius")]
    NonFinite { index: usize },
}

impl<T: Real> BilliardTable<T> {
    /// Builds a table from `(centre, radius)` pairs; symbols are assigned in
    /// order starting at 1. Only structural properties are checked here.
    pub fn new(
        balls: impl IntoIterator<Item = (Vec3<T>, T)>,
        constants: Constants<T>,
    ) -> Result<Self, StructuralError> {
        let balls: Vec<Ball<T>> = balls
            .into_iter()
            .enumerate()
            .map(|(i, (centre, radius))| Ball { centre, radius, index: i + 1 })
            .collect();
        for b in &balls {
            if !b.centre.is_finite() || !b.radius.is_finite() {
                return Err(StructuralError::NonFinite { index: b.index });
            }
            if b.centre.z != T::zero() {
                return Err(StructuralError::CentreOffPlane { index: b.index, z: b.centre.z.as_f64() });
            }
            if b.radius <= T::zero() {
                return Err(StructuralError::NonPositiveRadius { index: b.index, radius: b.radius.as_f64() });
            }
        }
        if balls.len() < 3 {
            return Err(StructuralError::TooFewBalls(balls.len()));
        }
        Ok(Self { balls, constants })
    }

    /// Three balls of equal radius at the vertices of an equilateral triangle
    /// in `z = 0`, first edge along the x-axis.
    pub fn equilateral(side: T, radius: T, constants: Constants<T>) -> Self {
        let h = side * T::lit(3.0).sqrt() * T::lit(0.5);
        let centres = [
            Vec3::new(T::zero(), T::zero(), T::zero()),
            Vec3::new(side, T::zero(), T::zero()),
            Vec3::new(side * T::lit(0.5), h, T::zero()),
        ];
        Self::new(centres.into_iter().map(|c| (c, radius)), constants).expect("valid equilateral layout")
    }

    pub fn balls(&self) -> &[Ball<T>] {
        &self.balls
    }

    pub fn k0(&self) -> usize {
        self.balls.len()
    }

    /// Ball with symbol `index` (1-based).
    pub fn ball(&self, index: usize) -> Option<&Ball<T>> {
        index.checked_sub(1).and_then(|i| self.balls.get(i))
    }

    /// The component whose boundary contains `p`, if any.
    pub fn component_at(&self, p: Vec3<T>) -> Option<&Ball<T>> {
        let tol = T::tol(ON_SPHERE_TOL);
        self.balls
            .iter()
            .find(|b| b.surface_gap(p).abs() <= tol * T::one().max(b.radius))
    }

    /// Same table with every radius replaced by `radius`; `r0` follows.
    pub fn with_radius(&self, radius: T) -> Self {
        let mut t = self.clone();
        for b in t.balls.iter_mut() {
            b.radius = radius;
        }
        t.constants.r0 = radius;
        t
    }
}

/// Outcome of a single configuration check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn point_segment_distance<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>) -> T {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq > T::zero() {
        ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    (p - (a + ab * t)).norm()
}

/// Checks every configuration assumption of `table`.
///
/// The no-eclipse condition is tested with a capsule around each pair: the
/// segment `OᵢOⱼ` inflated by `max(rᵢ, rⱼ)`, which contains the convex hull
/// of `Kᵢ ∪ Kⱼ`. Every other ball must keep a strictly positive distance from
/// it.
pub fn validate_table<T: Real>(table: &BilliardTable<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let Constants { d0, r0, c1, c2 } = table.constants;
    let balls = table.balls();

    let mut dist_ok = true;
    let mut worst = String::new();
    for (i, a) in balls.iter().enumerate() {
        for b in &balls[i + 1..] {
            let d = (a.centre - b.centre).norm();
            if !(d > d0 && d <= T::one()) {
                dist_ok = false;
                worst = format!("|O{}O{}| = {} not in (d0, 1] with d0 = {}", a.index, b.index, d, d0);
            }
        }
    }
    report.push(
        "centre distances",
        dist_ok,
        if dist_ok { "d0 < |OiOj| <= 1 for all pairs".to_string() } else { worst },
    );

    let max_r = balls.iter().fold(T::zero(), |m, b| m.max(b.radius));
    report.push("radii bound", max_r <= r0, format!("max radius {} vs r0 {}", max_r, r0));
    report.push("r0 < d0/3", r0 < d0 / T::lit(3.0), format!("r0 = {}, d0/3 = {}", r0, d0 / T::lit(3.0)));
    report.push(
        "c2*d0 > 2*r0",
        c2 * d0 > T::lit(2.0) * r0,
        format!("c2*d0 = {}, 2*r0 = {}", c2 * d0, T::lit(2.0) * r0),
    );
    report.push(
        "0 < c1 <= c2 < 1",
        c1 > T::zero() && c1 <= c2 && c2 < T::one(),
        format!("c1 = {}, c2 = {}", c1, c2),
    );

    for (i, a) in balls.iter().enumerate() {
        for b in &balls[i + 1..] {
            let inflate = a.radius.max(b.radius);
            for l in balls.iter().filter(|l| l.index != a.index && l.index != b.index) {
                let gap = point_segment_distance(l.centre, a.centre, b.centre) - inflate - l.radius;
                let name = format!("(H) hull(K{} u K{}) vs K{}", a.index, b.index, l.index);
                if gap > T::zero() {
                    report.push(name, true, format!("clearance {}", gap));
                } else {
                    report.push(name, false, format!("(H) violated: K{} meets the hull (clearance {})", l.index, gap));
                }
            }
        }
    }
    report
}

/// A point of the sphere bundle: position and unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState<T> {
    pub point: Vec3<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> PhaseState<T> {
    pub fn new(point: Vec3<T>, direction: Vec3<T>) -> Result<Self, GeometryError> {
        let n = direction.norm();
        if !(point.is_finite() && direction.is_finite()) || (n - T::one()).abs() > T::tol(1e-12) {
            return Err(GeometryError::NonUnitDirection { norm: n.as_f64() });
        }
        Ok(Self { point, direction })
    }

    /// Same point, opposite direction.
    pub fn reversed(&self) -> Self {
        Self { point: self.point, direction: -self.direction }
    }
}

/// A boundary hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<T> {
    pub point: Vec3<T>,
    pub component: usize,
    pub outward_normal: Vec3<T>,
    pub travel_distance: T,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("direction is not a unit vector (norm {norm})")]
    NonUnitDirection { norm: f64 },
    #[error("tangential contact with K{component} (|<v,nu>| = {cosine:e})")]
    Grazing { component: usize, cosine: f64 },
    #[error("trajectory escapes to infinity")]
    Escape,
    #[error("state is not on the boundary of any ball")]
    NotOnBoundary,
    #[error("direction does not point out of K{component} (<v,nu> = {cosine})")]
    NotOutgoing { component: usize, cosine: f64 },
    #[error("cos(phi) = {cosine} at K{component} is below c1 = {c1}")]
    BelowC1 { component: usize, cosine: f64, c1: f64 },
}

/// Specular reflection of `direction` in the plane with unit normal `normal`.
#[inline]
pub fn reflect<T: Real>(direction: Vec3<T>, normal: Vec3<T>) -> Vec3<T> {
    direction - normal * (T::lit(2.0) * direction.dot(normal))
}

/// Forward distance along the ray to `ball`, or `None` if the ray misses it.
///
/// The discriminant is formed from the perpendicular distance between the
/// centre and the line, factored as `(r − ρ)(r + ρ)`.
pub fn ray_sphere<T: Real>(origin: Vec3<T>, direction: Vec3<T>, ball: &Ball<T>) -> Option<T> {
    let oc = ball.centre - origin;
    let tca = oc.dot(direction);
    if tca <= T::zero() {
        return None;
    }
    let perp = (oc - direction * tca).norm();
    if perp > ball.radius {
        return None;
    }
    let thc = ((ball.radius - perp) * (ball.radius + perp)).sqrt();
    let t = tca - thc;
    (t > T::tol(MIN_TRAVEL)).then_some(t)
}

/// Nearest forward boundary hit, `Ok(None)` on escape.
pub fn first_hit<T: Real>(state: &PhaseState<T>, table: &BilliardTable<T>) -> Result<Option<Hit<T>>, GeometryError> {
    if let Some(b) = table.component_at(state.point) {
        let c = state.direction.dot(b.outward_normal(state.point));
        if c.abs() < T::lit(GRAZING_COSINE) {
            return Err(GeometryError::Grazing { component: b.index, cosine: c.as_f64() });
        }
    }
    let best = table
        .balls()
        .iter()
        .filter_map(|b| ray_sphere(state.point, state.direction, b).map(|t| (t, b)))
        .min_by(|x, y| x.0.partial_cmp(&y.0).expect("finite travel"));
    let Some((t, ball)) = best else {
        return Ok(None);
    };
    let point = state.point + state.direction * t;
    let outward_normal = ball.outward_normal(point);
    let cosine = state.direction.dot(outward_normal);
    if cosine.abs() < T::lit(GRAZING_COSINE) {
        return Err(GeometryError::Grazing { component: ball.index, cosine: cosine.as_f64() });
    }
    Ok(Some(Hit { point, component: ball.index, outward_normal, travel_distance: t }))
}

/// The billiard ball map: from an outgoing boundary state to the next
/// outgoing boundary state.
///
/// With `enforce_c1` the reflected direction must satisfy `⟨v, ν⟩ ≥ c1`.
pub fn billiard_map<T: Real>(
    state: &PhaseState<T>,
    table: &BilliardTable<T>,
    enforce_c1: bool,
) -> Result<(PhaseState<T>, Hit<T>), GeometryError> {
    let here = table.component_at(state.point).ok_or(GeometryError::NotOnBoundary)?;
    let c = state.direction.dot(here.outward_normal(state.point));
    if c <= T::zero() {
        return Err(GeometryError::NotOutgoing { component: here.index, cosine: c.as_f64() });
    }
    let hit = first_hit(state, table)?.ok_or(GeometryError::Escape)?;
    let direction = reflect(state.direction, hit.outward_normal);
    let cosine = direction.dot(hit.outward_normal);
    if enforce_c1 && cosine < table.constants.c1 {
        return Err(GeometryError::BelowC1 {
            component: hit.component,
            cosine: cosine.as_f64(),
            c1: table.constants.c1.as_f64(),
        });
    }
    Ok((PhaseState { point: hit.point, direction }, hit))
}
