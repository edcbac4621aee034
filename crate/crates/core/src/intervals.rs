//! Families `ℰ₁, …, ℰ_q` of disjoint closed intervals in `[0, q)` such that
//! every coset `t + ℤ` meets at least `q − 2` of them.
//!
//! `q − 1` disjoint intervals `E_i` of length > 1 each meet every coset.
//! Removing the `σ/3`-neighbourhood `Ω` of a ℚ-independent set `A ∋ 1`
//! splits them into short pieces, and since `Ω` holds at most one point of
//! any coset, at most one family is lost.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::radical::{certify_independence, square_free_generators, IndependenceCertificate, QuadIrrational};
use crate::scalar::Scalar;
use crate::Rational;

pub const GENERATOR_BOUND: u64 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntervalError {
    #[error("q must exceed 2, got {0}")]
    QTooSmall(usize),
    #[error("independent set needs at least 2 points, got {0}")]
    CountTooSmall(usize),
    #[error("{count} points requested but only {available} square-free generators ≤ {GENERATOR_BOUND}")]
    TooManyGenerators { count: usize, available: usize },
    #[error("points are not linearly independent over Q (dependent rows {0:?})")]
    Dependent(Vec<usize>),
    #[error("phi grid needs at least 100 points, got {0}")]
    GridTooSmall(usize),
    #[error("sigma lower bound {sigma_lower} is not positive (grid minimum {grid_min})")]
    SigmaNonPositive { sigma_lower: f64, grid_min: f64 },
    #[error("mesh bound must be positive")]
    NonPositiveMeshBound,
    #[error("mesh {mesh} exceeds the bound {bound}")]
    MeshUnachievable { mesh: f64, bound: f64 },
    #[error("point {0} lies outside [0, q)")]
    OutOfRange(f64),
    #[error("intervals overlap or leave [0, q)")]
    BadFamilies,
}

/// A finite set `A ⊂ [0, q)` containing 1, ℚ-linearly independent.
#[derive(Debug, Clone, Serialize)]
pub struct IndependentSet {
    pub q: usize,
    pub points: Vec<QuadIrrational>,
    pub values: Vec<f64>,
    pub certificate: IndependenceCertificate,
    /// `frac(a)` for `a ∈ A`, sorted.
    residues: Vec<f64>,
}

impl IndependentSet {
    /// Wraps an explicit point list, certifying independence. Dependent sets
    /// are accepted here so that probes can exercise [`phi_sigma`].
    pub fn from_points(q: usize, points: Vec<QuadIrrational>) -> Result<Self, IntervalError> {
        let values: Vec<f64> = points.iter().map(|p| p.to_f64()).collect();
        if let Some(&v) = values.iter().find(|v| !(0.0..q as f64).contains(*v)) {
            return Err(IntervalError::OutOfRange(v));
        }
        let certificate = certify_independence(&points);
        let mut residues: Vec<f64> = values.iter().map(|v| v.rem_euclid(1.0)).collect();
        residues.sort_by(f64::total_cmp);
        Ok(IndependentSet { q, points, values, certificate, residues })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `φ(t) = inf{|t+z₁−a₁| + |t+z₂−a₂| : (z₁,a₁) ≠ (z₂,a₂)}`: the sum of the
    /// two smallest distances from `t` to `A + ℤ`.
    ///
    /// `φ` has period 1, so `t` is reduced to `[0, 1)`, and the two nearest
    /// points of the periodic set `{r + k}` lie among the two sorted residues
    /// on either side of `t` (wrapping around).
    pub fn phi(&self, t: f64) -> f64 {
        let t = t.rem_euclid(1.0);
        let r = &self.residues;
        let n = r.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let pos = r.partition_point(|&x| x < t);
        let mut best = [f64::INFINITY; 2];
        let mut push = |d: f64| {
            if d < best[0] {
                best[1] = best[0];
                best[0] = d;
            } else if d < best[1] {
                best[1] = d;
            }
        };
        // two neighbours on each side of t in the circular order
        for k in 1..=2.min(n) {
            let right = (pos + k - 1) % n;
            let left = (pos + n - k) % n;
            push((r[right] - t).rem_euclid(1.0));
            push((t - r[left]).rem_euclid(1.0));
        }
        best[0] + best[1]
    }
}

/// `{1} ∪ {j·q/count + frac(√c_j)/(4·count) : 1 ≤ j < count}` with distinct
/// square-free `c_j`. Consecutive points differ by at most `(q + 1/4)/count`.
///
/// `count` is bumped to the next value coprime to `q`, so no `j·q/count` is an
/// integer.
pub fn build_independent_set(q: usize, count: usize, seed: u64) -> Result<IndependentSet, IntervalError> {
    if q <= 2 {
        return Err(IntervalError::QTooSmall(q));
    }
    if count < 2 {
        return Err(IntervalError::CountTooSmall(count));
    }
    let mut count = count;
    while num_gcd(count, q) != 1 {
        count += 1;
    }
    let gens = square_free_generators(GENERATOR_BOUND);
    let offset = (seed as usize) % gens.len();
    if count - 1 > gens.len() - offset {
        return Err(IntervalError::TooManyGenerators { count, available: gens.len() - offset });
    }
    let mut points = vec![QuadIrrational::rational(Rational::from_integer(1))];
    for j in 1..count {
        let c = gens[offset + j - 1];
        let frac = QuadIrrational::frac_sqrt(c).expect("square-free radicand");
        let base = Rational::new((j * q) as i64, count as i64);
        points.push(frac.scale(Rational::new(1, 4 * count as i64)).add_rational(base));
    }
    let set = IndependentSet::from_points(q, points)?;
    if !set.certificate.independent() {
        return Err(IntervalError::Dependent(set.certificate.dependent_rows.clone()));
    }
    Ok(set)
}

fn num_gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiSigma {
    pub grid: usize,
    pub grid_min: f64,
    pub sigma_lower: f64,
}

/// Lower bound for `σ = inf φ`: `φ` is 2-Lipschitz, so on a grid of spacing
/// `h` over `[0, 1)` every `t` is within `h/2` of a node and
/// `σ ≥ min_grid φ − h`.
pub fn phi_sigma(a: &IndependentSet, grid: usize) -> Result<PhiSigma, IntervalError> {
    if grid < 100 {
        return Err(IntervalError::GridTooSmall(grid));
    }
    let h = 1.0 / grid as f64;
    let grid_min = (0..grid)
        .into_par_iter()
        .map(|k| a.phi(k as f64 * h))
        .reduce(|| f64::INFINITY, f64::min);
    let sigma_lower = grid_min - h;
    if sigma_lower <= 0.0 {
        return Err(IntervalError::SigmaNonPositive { sigma_lower, grid_min });
    }
    Ok(PhiSigma { grid, grid_min, sigma_lower })
}

/// The `q − 1` intervals `E_i = [(i−1)L + g/2, iL − g/2]`, `L = q/(q−1)`,
/// `g = 1/(2(q−1))`, each of length `(2q−1)/(2(q−1)) > 1`.
pub fn base_intervals<T: Scalar>(q: usize) -> Vec<(T, T)> {
    let q1 = q as i64 - 1;
    let half_gap = T::from_ratio(1, 4 * q1);
    (1..=q1)
        .map(|i| {
            let lo = T::from_ratio((i - 1) * q as i64, q1) + half_gap.clone();
            let hi = T::from_ratio(i * q as i64, q1) - half_gap.clone();
            (lo, hi)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalSystem {
    pub q: usize,
    /// `families[i]` is `ℰ_{i+1}`, sorted by left endpoint.
    pub families: Vec<Vec<(f64, f64)>>,
    pub sigma_lower: f64,
    pub omega_radius: f64,
    pub mesh: f64,
    #[serde(skip)]
    pub independent: Option<IndependentSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IntervalOptions {
    /// Populate `ℰ_q` with small intervals in the gaps between the `E_i`.
    pub fill_last: bool,
}

/// Grid size used for the `σ` bound of a set with `count` points.
pub fn default_phi_grid(count: usize) -> usize {
    (16 * count).max(100)
}

pub fn build_interval_system(q: usize, mesh_bound: f64, seed: u64) -> Result<IntervalSystem, IntervalError> {
    build_interval_system_with(q, mesh_bound, seed, IntervalOptions::default())
}

pub fn build_interval_system_with(
    q: usize,
    mesh_bound: f64,
    seed: u64,
    opts: IntervalOptions,
) -> Result<IntervalSystem, IntervalError> {
    if q <= 2 {
        return Err(IntervalError::QTooSmall(q));
    }
    if mesh_bound <= 0.0 || !mesh_bound.is_finite() {
        return Err(IntervalError::NonPositiveMeshBound);
    }
    let count = (((q as f64 + 0.25) / mesh_bound).ceil() as usize).max(2);
    let a = build_independent_set(q, count, seed)?;
    let ps = phi_sigma(&a, default_phi_grid(a.len()))?;
    let radius = ps.sigma_lower / 3.0;

    let mut centres = a.values.clone();
    centres.sort_by(f64::total_cmp);
    let mut families: Vec<Vec<(f64, f64)>> = base_intervals::<f64>(q)
        .into_iter()
        .map(|(lo, hi)| components_outside(lo, hi, &centres, radius))
        .collect();
    families.push(if opts.fill_last { filler_intervals(q, mesh_bound) } else { Vec::new() });

    let mesh = families.iter().flatten().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    if mesh > mesh_bound {
        return Err(IntervalError::MeshUnachievable { mesh, bound: mesh_bound });
    }
    Ok(IntervalSystem {
        q,
        families,
        sigma_lower: ps.sigma_lower,
        omega_radius: radius,
        mesh,
        independent: Some(a),
    })
}

/// Closed components of `[lo, hi] ∖ ⋃ (c − r, c + r)`.
fn components_outside(lo: f64, hi: f64, centres: &[f64], r: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = lo;
    for &c in centres {
        if c + r <= start || c - r >= hi {
            if c - r >= hi {
                break;
            }
            continue;
        }
        if c - r >= start {
            out.push((start, c - r));
        }
        start = c + r;
    }
    if start <= hi {
        out.push((start, hi));
    }
    out
}

/// Short intervals centred in the gaps between consecutive `E_i`.
fn filler_intervals(q: usize, mesh_bound: f64) -> Vec<(f64, f64)> {
    let base = base_intervals::<f64>(q);
    let half = (1.0 / (8.0 * (q as f64 - 1.0))).min(mesh_bound / 2.0);
    base.windows(2)
        .map(|w| {
            let mid = (w[0].1 + w[1].0) / 2.0;
            (mid - half / 2.0, mid + half / 2.0)
        })
        .collect()
}

fn family_contains(family: &[(f64, f64)], x: f64) -> bool {
    let k = family.partition_point(|(lo, _)| *lo <= x);
    k > 0 && x <= family[k - 1].1
}

impl IntervalSystem {
    /// A system given directly by its families, with no `σ` certificate.
    /// Intervals must lie in `[0, q)` and be pairwise disjoint.
    pub fn from_families(q: usize, mut families: Vec<Vec<(f64, f64)>>) -> Result<Self, IntervalError> {
        if q <= 2 {
            return Err(IntervalError::QTooSmall(q));
        }
        families.resize(q, Vec::new());
        families.truncate(q);
        for fam in &mut families {
            fam.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let mut all: Vec<(f64, f64)> = families.iter().flatten().copied().collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let bad_range = all.iter().any(|&(lo, hi)| !(0.0 <= lo && lo <= hi && hi < q as f64));
        if bad_range || all.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Err(IntervalError::BadFamilies);
        }
        let mesh = all.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
        Ok(IntervalSystem { q, families, sigma_lower: 0.0, omega_radius: 0.0, mesh, independent: None })
    }

    /// Index `i` (0-based) and interval of the family containing `x`, if any.
    pub fn locate(&self, x: f64) -> Option<(usize, (f64, f64))> {
        self.families.iter().enumerate().find_map(|(i, fam)| {
            let k = fam.partition_point(|(lo, _)| *lo <= x);
            (k > 0 && x <= fam[k - 1].1).then(|| (i, fam[k - 1]))
        })
    }

    /// Number of families meeting `t + ℤ`.
    pub fn count_met(&self, t: f64) -> usize {
        let t0 = t.rem_euclid(1.0);
        self.families
            .iter()
            .filter(|fam| (0..self.q).any(|z| family_contains(fam, t0 + z as f64)))
            .count()
    }

    /// Number of points of `t + ℤ` inside `Ω`.
    pub fn omega_hits(&self, t: f64) -> usize {
        let Some(a) = &self.independent else { return 0 };
        let t0 = t.rem_euclid(1.0);
        (0..self.q)
            .filter(|&z| {
                let x = t0 + z as f64;
                a.values.iter().any(|v| (x - v).abs() < self.omega_radius)
            })
            .count()
    }

    pub fn audit(&self, grid: usize) -> IntervalAudit {
        let per_t: Vec<(usize, usize)> = (0..grid)
            .into_par_iter()
            .map(|k| {
                let t = k as f64 / grid as f64;
                (self.count_met(t), self.omega_hits(t))
            })
            .collect();
        let disjoint = self.families.iter().all(|fam| fam.windows(2).all(|w| w[0].1 < w[1].0))
            && pairwise_families_disjoint(&self.families);
        IntervalAudit {
            grid,
            min_count: per_t.iter().map(|p| p.0).min().unwrap_or(0),
            required: self.q - 2,
            max_omega_hits: per_t.iter().map(|p| p.1).max().unwrap_or(0),
            disjoint,
            in_range: self
                .families
                .iter()
                .flatten()
                .all(|(lo, hi)| 0.0 <= *lo && lo <= hi && *hi < self.q as f64),
            sigma_lower: self.sigma_lower,
            mesh: self.mesh,
        }
    }
}

fn pairwise_families_disjoint(families: &[Vec<(f64, f64)>]) -> bool {
    let mut all: Vec<(f64, f64)> = families.iter().flatten().copied().collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    all.windows(2).all(|w| w[0].1 < w[1].0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalAudit {
    pub grid: usize,
    pub min_count: usize,
    pub required: usize,
    pub max_omega_hits: usize,
    pub disjoint: bool,
    pub in_range: bool,
    pub sigma_lower: f64,
    pub mesh: f64,
}

impl IntervalAudit {
    pub fn passed(&self) -> bool {
        self.min_count >= self.required
            && self.max_omega_hits <= 1
            && self.disjoint
            && self.in_range
            && self.sigma_lower > 0.0
    }
}
