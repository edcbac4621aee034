//! Compact metric spaces with a ℤ-action: irrational rotations, Sturmian
//! subshifts and their products.
//!
//! Points on an orbit are stored as `(base angle, offset)`, so acting by `z`
//! only shifts the integer offset and the group law holds exactly. The angle
//! `frac(base + offset·α)` is evaluated on demand in double-double precision.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::radical::{primes, DoubleDouble, QuadIrrational};

pub const DEFAULT_HORIZON: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("rotation number {0} is rational")]
    RationalAlpha(String),
    #[error("rotation number {0} is outside (0, 1)")]
    AlphaOutOfRange(String),
    #[error("precision must be positive")]
    ZeroPrecision,
    #[error("unknown system kind `{0}`")]
    UnknownKind(String),
    #[error("bad descriptor: {0}")]
    BadDescriptor(String),
}

/// A point `frac(base + offset·α)` on a rotation orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitPoint {
    pub base: f64,
    pub offset: i64,
}

impl OrbitPoint {
    pub fn new(base: f64) -> Self {
        OrbitPoint { base: base.rem_euclid(1.0), offset: 0 }
    }

    fn shifted(self, z: i64) -> Self {
        OrbitPoint { base: self.base, offset: self.offset + z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointKind {
    CircleAngle,
    SymbolicSeed,
    ProductPair,
    TorusPair,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemPoint {
    Circle(OrbitPoint),
    Symbolic(OrbitPoint),
    Pair(Box<SystemPoint>, Box<SystemPoint>),
    /// `(x, t)` in the mapping torus, `t ∈ [0, 1)`.
    Torus(Box<SystemPoint>, f64),
}

impl SystemPoint {
    pub fn circle(angle: f64) -> Self {
        SystemPoint::Circle(OrbitPoint::new(angle))
    }

    pub fn kind(&self) -> PointKind {
        match self {
            SystemPoint::Circle(_) => PointKind::CircleAngle,
            SystemPoint::Symbolic(_) => PointKind::SymbolicSeed,
            SystemPoint::Pair(..) => PointKind::ProductPair,
            SystemPoint::Torus(..) => PointKind::TorusPair,
        }
    }

    /// The underlying orbit point of a circle or symbolic point.
    pub fn orbit(&self) -> Option<OrbitPoint> {
        match self {
            SystemPoint::Circle(o) | SystemPoint::Symbolic(o) => Some(*o),
            _ => None,
        }
    }
}

/// JSON record `{kind, parameters, seed}` describing how a system was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub kind: String,
    #[serde(default)]
    pub parameters: serde_json::Value,
    #[serde(default)]
    pub seed: u64,
    /// Whether the substrate is classically known to be minimal. Not verified.
    #[serde(default)]
    pub minimal: bool,
}

/// A compact metric space with a lazily evaluated ℤ-action.
pub trait MetricSystem: Send + Sync {
    fn act(&self, p: &SystemPoint, z: i64) -> SystemPoint;

    fn dist(&self, a: &SystemPoint, b: &SystemPoint) -> f64;

    /// Number of unit-interval parameters needed by [`MetricSystem::point_at`].
    fn param_dim(&self) -> usize;

    /// Maps a parameter vector in `[0,1)^param_dim` to a point.
    fn point_at(&self, u: &[f64]) -> SystemPoint;

    fn descriptor(&self) -> SystemDescriptor;

    /// Largest `|z|` for which callers may materialise translates.
    fn horizon(&self) -> u64;

    /// Deterministic low-discrepancy sample keyed by `seed`.
    fn sample(&self, n: usize, seed: u64) -> Vec<SystemPoint> {
        low_discrepancy(self.param_dim(), n, seed)
            .iter()
            .map(|u| self.point_at(u))
            .collect()
    }
}

/// A system carrying an ℝ-action extending its ℤ-action.
pub trait Flow: MetricSystem {
    fn flow(&self, p: &SystemPoint, r: f64) -> SystemPoint;
}

/// Additive-recurrence (R_d) sequence in `[0,1)^dim`, shifted by the seed.
pub fn low_discrepancy(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 0 {
        return vec![Vec::new(); n];
    }
    // generalised golden ratio: the positive root of x^(d+1) = x + 1
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let steps: Vec<f64> = (1..=dim).map(|j| phi.powi(-(j as i32)).fract()).collect();
    let roots = primes(dim);
    let shifts: Vec<f64> = roots
        .iter()
        .map(|&p| DoubleDouble::sqrt_int(p).mul_i64(seed as i64 + 1).frac())
        .collect();
    (0..n)
        .map(|i| {
            (0..dim)
                .map(|j| (shifts[j] + (i as f64 + 1.0) * steps[j]).rem_euclid(1.0))
                .collect()
        })
        .collect()
}

fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

#[derive(Debug, Clone)]
enum Kind {
    Rotation { alpha: QuadIrrational, alpha_dd: DoubleDouble },
    Sturmian { alpha: QuadIrrational, alpha_dd: DoubleDouble, precision: u32 },
    Product(Box<DynSystem>, Box<DynSystem>),
}

/// Concrete substrate: rotation, Sturmian shift, or a product of two.
#[derive(Debug, Clone)]
pub struct DynSystem {
    kind: Kind,
    horizon: u64,
}

fn check_alpha(alpha: &QuadIrrational) -> Result<DoubleDouble, SystemError> {
    if !alpha.is_irrational() {
        return Err(SystemError::RationalAlpha(alpha.to_string()));
    }
    let v = alpha.to_dd();
    if v.to_f64() <= 0.0 || v.to_f64() >= 1.0 {
        return Err(SystemError::AlphaOutOfRange(alpha.to_string()));
    }
    Ok(v)
}

/// Rotation `x ↦ x + α mod 1` of the circle with the arc metric.
pub fn make_rotation(alpha: QuadIrrational) -> Result<DynSystem, SystemError> {
    let alpha_dd = check_alpha(&alpha)?;
    Ok(DynSystem { kind: Kind::Rotation { alpha, alpha_dd }, horizon: DEFAULT_HORIZON })
}

/// Sturmian coding of the rotation by `α`, with the metric
/// `2^(-min{|z| : s_z(p) ≠ s_z(q)})` cut off at `precision`.
pub fn make_sturmian(alpha: QuadIrrational, precision: u32) -> Result<DynSystem, SystemError> {
    if precision == 0 {
        return Err(SystemError::ZeroPrecision);
    }
    let alpha_dd = check_alpha(&alpha)?;
    Ok(DynSystem {
        kind: Kind::Sturmian { alpha, alpha_dd, precision },
        horizon: DEFAULT_HORIZON,
    })
}

/// Diagonal action with the max metric.
pub fn make_product(a: DynSystem, b: DynSystem) -> DynSystem {
    let horizon = a.horizon.min(b.horizon);
    DynSystem { kind: Kind::Product(Box::new(a), Box::new(b)), horizon }
}

/// `√2 − 1`, the rotation number used throughout the examples.
pub fn silver_alpha() -> QuadIrrational {
    QuadIrrational::new((-1).into(), 1.into(), 2).expect("valid radicand")
}

impl DynSystem {
    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Rotation number of a rotation or Sturmian system.
    pub fn alpha(&self) -> Option<&QuadIrrational> {
        match &self.kind {
            Kind::Rotation { alpha, .. } | Kind::Sturmian { alpha, .. } => Some(alpha),
            Kind::Product(..) => None,
        }
    }

    fn alpha_dd(&self) -> DoubleDouble {
        match &self.kind {
            Kind::Rotation { alpha_dd, .. } | Kind::Sturmian { alpha_dd, .. } => *alpha_dd,
            Kind::Product(..) => panic!("product system has no rotation number"),
        }
    }

    /// Angle `frac(base + offset·α)` of a circle or symbolic point.
    pub fn angle(&self, p: &SystemPoint) -> f64 {
        let o = p.orbit().expect("angle of a non-orbit point");
        self.alpha_dd()
            .mul_i64(o.offset)
            .add(DoubleDouble::from_f64(o.base))
            .frac()
    }

    /// Sturmian symbol `⌊x + (z+1)α⌋ − ⌊x + zα⌋` of `p` at position `z`.
    pub fn coding(&self, p: &SystemPoint, z: i64) -> u8 {
        let o = p.orbit().expect("coding of a non-orbit point");
        let a = self.alpha_dd();
        let v = a.mul_i64(o.offset + z).add(DoubleDouble::from_f64(o.base)).frac();
        u8::from(v + a.to_f64() >= 1.0)
    }

    pub fn coding_window(&self, p: &SystemPoint, from: i64, len: usize) -> Vec<u8> {
        (0..len as i64).map(|j| self.coding(p, from + j)).collect()
    }

    pub fn is_minimal(&self) -> bool {
        match &self.kind {
            Kind::Rotation { .. } | Kind::Sturmian { .. } => true,
            // a product of rotations is minimal only for rationally independent angles
            Kind::Product(a, b) => match (a.alpha(), b.alpha()) {
                (Some(x), Some(y)) => {
                    crate::radical::certify_independence(&[
                        QuadIrrational::rational(1.into()),
                        x.clone(),
                        y.clone(),
                    ])
                    .independent()
                }
                _ => false,
            },
        }
    }

    pub fn from_descriptor(d: &SystemDescriptor) -> Result<DynSystem, SystemError> {
        let bad = |m: &str| SystemError::BadDescriptor(m.to_string());
        let alpha = || -> Result<QuadIrrational, SystemError> {
            let v = d.parameters.get("alpha").ok_or_else(|| bad("missing alpha"))?;
            serde_json::from_value(v.clone()).map_err(|e| bad(&e.to_string()))
        };
        let sys = match d.kind.as_str() {
            "rotation" => make_rotation(alpha()?)?,
            "sturmian" => {
                let precision = d
                    .parameters
                    .get("precision")
                    .and_then(|v| v.as_u64())
                    .unwrap_or(32) as u32;
                make_sturmian(alpha()?, precision)?
            }
            "product" => {
                let part = |key: &str| -> Result<DynSystem, SystemError> {
                    let v = d.parameters.get(key).ok_or_else(|| bad(key))?;
                    let sub: SystemDescriptor =
                        serde_json::from_value(v.clone()).map_err(|e| bad(&e.to_string()))?;
                    DynSystem::from_descriptor(&sub)
                };
                make_product(part("a")?, part("b")?)
            }
            other => return Err(SystemError::UnknownKind(other.to_string())),
        };
        match d.parameters.get("horizon").and_then(|v| v.as_u64()) {
            Some(h) => Ok(sys.with_horizon(h)),
            None => Ok(sys),
        }
    }
}

impl MetricSystem for DynSystem {
    fn act(&self, p: &SystemPoint, z: i64) -> SystemPoint {
        match (&self.kind, p) {
            (Kind::Rotation { .. }, SystemPoint::Circle(o)) => SystemPoint::Circle(o.shifted(z)),
            (Kind::Sturmian { .. }, SystemPoint::Symbolic(o)) => {
                SystemPoint::Symbolic(o.shifted(z))
            }
            (Kind::Product(a, b), SystemPoint::Pair(p1, p2)) => {
                SystemPoint::Pair(Box::new(a.act(p1, z)), Box::new(b.act(p2, z)))
            }
            (_, p) => panic!("point of kind {:?} does not belong to this system", p.kind()),
        }
    }

    fn dist(&self, a: &SystemPoint, b: &SystemPoint) -> f64 {
        match (&self.kind, a, b) {
            (Kind::Rotation { .. }, _, _) => circle_dist(self.angle(a), self.angle(b)),
            (Kind::Sturmian { precision, .. }, _, _) => {
                for r in 0..*precision as i64 {
                    if self.coding(a, r) != self.coding(b, r)
                        || (r > 0 && self.coding(a, -r) != self.coding(b, -r))
                    {
                        return 2f64.powi(-(r as i32));
                    }
                }
                0.0
            }
            (Kind::Product(sa, sb), SystemPoint::Pair(a1, a2), SystemPoint::Pair(b1, b2)) => {
                sa.dist(a1, b1).max(sb.dist(a2, b2))
            }
            _ => panic!("mismatched point kinds in dist"),
        }
    }

    fn param_dim(&self) -> usize {
        match &self.kind {
            Kind::Rotation { .. } | Kind::Sturmian { .. } => 1,
            Kind::Product(a, b) => a.param_dim() + b.param_dim(),
        }
    }

    fn point_at(&self, u: &[f64]) -> SystemPoint {
        match &self.kind {
            Kind::Rotation { .. } => SystemPoint::Circle(OrbitPoint::new(u[0])),
            Kind::Sturmian { .. } => SystemPoint::Symbolic(OrbitPoint::new(u[0])),
            Kind::Product(a, b) => {
                let (ua, ub) = u.split_at(a.param_dim());
                SystemPoint::Pair(Box::new(a.point_at(ua)), Box::new(b.point_at(ub)))
            }
        }
    }

    fn descriptor(&self) -> SystemDescriptor {
        let minimal = self.is_minimal();
        let (kind, parameters) = match &self.kind {
            Kind::Rotation { alpha, .. } => ("rotation", json!({ "alpha": alpha })),
            Kind::Sturmian { alpha, precision, .. } => {
                ("sturmian", json!({ "alpha": alpha, "precision": precision }))
            }
            Kind::Product(a, b) => {
                ("product", json!({ "a": a.descriptor(), "b": b.descriptor() }))
            }
        };
        SystemDescriptor { kind: kind.to_string(), parameters, seed: 0, minimal }
    }

    fn horizon(&self) -> u64 {
        self.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation() -> DynSystem {
        make_rotation(silver_alpha()).unwrap()
    }

    #[test]
    fn rotation_acts_by_alpha() {
        let sys = rotation();
        let x = SystemPoint::circle(0.0);
        let y = sys.act(&x, 1);
        assert!((sys.angle(&y) - 0.41421356237309503).abs() < 1e-15);
        assert_eq!(sys.act(&x, 0), x);
    }

    #[test]
    fn circle_metric_wraps() {
        let sys = rotation();
        let d = sys.dist(&SystemPoint::circle(0.1), &SystemPoint::circle(0.9));
        assert!((d - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rational_alpha_rejected() {
        let half = QuadIrrational::rational(num_rational::Rational64::new(1, 2));
        assert!(matches!(make_rotation(half), Err(SystemError::RationalAlpha(_))));
        let big = QuadIrrational::new(0.into(), 1.into(), 2).unwrap();
        assert!(matches!(make_rotation(big), Err(SystemError::AlphaOutOfRange(_))));
    }

    #[test]
    fn sturmian_coding_matches_floor_formula() {
        let sys = make_sturmian(silver_alpha(), 16).unwrap();
        let p = SystemPoint::Symbolic(OrbitPoint::new(0.0));
        let a = 2f64.sqrt() - 1.0;
        // independent evaluation of ⌊(z+1)α⌋ − ⌊zα⌋ at x = 0
        let expected: Vec<u8> = (0..5)
            .map(|z| (((z + 1) as f64 * a).floor() - (z as f64 * a).floor()) as u8)
            .collect();
        assert_eq!(expected, vec![0, 0, 1, 0, 1]);
        assert_eq!(sys.coding_window(&p, 0, 5), expected);
        assert_eq!(sys.dist(&p, &p), 0.0);
        assert!(matches!(make_sturmian(silver_alpha(), 0), Err(SystemError::ZeroPrecision)));
    }

    #[test]
    fn sturmian_group_law() {
        let sys = make_sturmian(silver_alpha(), 16).unwrap();
        let p = sys.sample(1, 3).remove(0);
        assert_eq!(sys.act(&sys.act(&p, 3), -3), p);
    }

    #[test]
    fn product_is_componentwise() {
        let beta = QuadIrrational::frac_sqrt(3).unwrap();
        let sys = make_product(rotation(), make_rotation(beta.clone()).unwrap());
        let p = sys.sample(1, 0).remove(0);
        let q = sys.act(&p, 5);
        if let (SystemPoint::Pair(a0, b0), SystemPoint::Pair(a1, b1)) = (&p, &q) {
            let r = rotation();
            let s = make_rotation(beta).unwrap();
            let exp_a = (r.angle(a0) + 5.0 * (2f64.sqrt() - 1.0)).rem_euclid(1.0);
            let exp_b = (s.angle(b0) + 5.0 * (3f64.sqrt() - 1.0)).rem_euclid(1.0);
            assert!((r.angle(a1) - exp_a).abs() < 1e-12);
            assert!((s.angle(b1) - exp_b).abs() < 1e-12);
        } else {
            panic!("product points must be pairs");
        }
        assert_eq!(sys.dist(&p, &p), 0.0);
        assert!(sys.is_minimal());
    }

    #[test]
    fn sampler_is_deterministic_and_spread() {
        let sys = rotation();
        assert_eq!(sys.sample(1, 9).len(), 1);
        let a = sys.sample(1000, 4);
        assert_eq!(a, sys.sample(1000, 4));
        let mut min = f64::INFINITY;
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                min = min.min(sys.dist(&a[i], &a[j]));
            }
        }
        assert!(min > 0.0);
    }

    #[test]
    fn descriptor_roundtrip() {
        let sys = make_sturmian(silver_alpha(), 12).unwrap();
        let d = sys.descriptor();
        assert!(d.minimal);
        let text = serde_json::to_string(&d).unwrap();
        let back: SystemDescriptor = serde_json::from_str(&text).unwrap();
        let rebuilt = DynSystem::from_descriptor(&back).unwrap();
        assert_eq!(rebuilt.descriptor(), d);
    }
}
