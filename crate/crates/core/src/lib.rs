//! Constructions and sample-resolution audits for mean dimension of ℤ-actions:
//! covers and their translates, nerves, Kolmogorov–Ostrand covers, level
//! functions, the mapping torus, interval systems and the fiber bound.

pub mod covers;
pub mod fiber;
pub mod intervals;
pub mod kolmogorov;
pub mod level;
pub mod nerves;
pub mod radical;
pub mod scalar;
pub mod systems;
pub mod torus;

pub use radical::QuadIrrational;
pub use scalar::Scalar;
pub use systems::{DynSystem, Flow, MetricSystem, SystemPoint};

/// Exact rational used for cube and interval arithmetic.
pub type Rational = num_rational::Rational64;

pub type CubeFamilyQ = kolmogorov::CubeFamilySpec<Rational>;
pub type CubeFamilyF64 = kolmogorov::CubeFamilySpec<f64>;
pub type KolmogorovCoverQ = kolmogorov::KolmogorovCover<Rational>;
pub type KolmogorovCoverF64 = kolmogorov::KolmogorovCover<f64>;
