//! Open billiards with spherical scatterers whose centres lie in a plane.
//!
//! The crate covers the geometry of the table, the symbolic coding of
//! trajectories by their itineraries, periodic and finite orbits with
//! prescribed itineraries, the linearized dynamics along them and the
//! resulting Lyapunov exponents. Numerical code is generic over the scalar
//! type through [`scalar::Real`]; symbolic measures also accept exact
//! rationals.

pub mod cocycle;
pub mod config;
pub mod geometry;
pub mod linalg;
pub mod lyapunov;
pub mod orbit;
pub mod scalar;
pub mod symbolic;

pub use cocycle::{BlockMatrix4, CocycleError, ComparisonSequences, DeltaTrace, Factor, PlanarFactors};
pub use geometry::{Ball, BilliardTable, Constants, PhaseState, ValidationReport};
pub use lyapunov::{GapConfig, GapReport, SpectrumReport};
pub use orbit::{Orbit, ReflectionFrame};
pub use scalar::Real;
pub use symbolic::{MarkovMeasure, Word};

pub type Vec3d = linalg::Vec3<f64>;
pub type Vec3f = linalg::Vec3<f32>;
pub type Table = BilliardTable<f64>;
pub type Tablef = BilliardTable<f32>;
pub type Frame = ReflectionFrame<f64>;
pub type Product = BlockMatrix4<f64>;
pub type Measure = MarkovMeasure<f64>;
/// Markov measure with exact rational probabilities.
pub type ExactMeasure = MarkovMeasure<num_rational::Rational64>;
