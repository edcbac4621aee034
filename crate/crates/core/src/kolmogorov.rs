//! Kolmogorov interval and cube families on ℝⁿ, and the Kolmogorov–Ostrand
//! cover obtained by pulling them back through a canonical map and a
//! finite-to-one PL map.
//!
//! Family `i` (1 ≤ i ≤ m+1) consists of the intervals
//! `unit·[z(m+1)+i, z(m+1)+i+m]`, `unit = ε/(m+1)`, and the products of such
//! intervals in ℝⁿ. Consecutive intervals of a family are separated by a gap
//! of length `unit`, and the gaps of different families are disjoint, so
//! every coordinate misses at most one family.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::covers::{self, CoverError, CoverKind, FiniteCover, Membership, Region, SampleSet};
use crate::nerves::{self, build_nerve, NerveError};
use crate::scalar::Scalar;
use crate::systems::{MetricSystem, SystemPoint};

pub const MAX_EPS_HALVINGS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KolmogorovError {
    #[error("m must be at least 1")]
    ZeroM,
    #[error("eps must be positive")]
    NonPositiveEps,
    #[error("dimension n = {n} exceeds m = {m}")]
    DimensionTooLarge { n: usize, m: usize },
    #[error("bounding box must have {expected} nonempty sides")]
    BadBox { expected: usize },
    #[error("eps search failed at eps = {eps}: {bad_pieces} pieces do not refine the cover")]
    EpsSearchFailed { eps: f64, bad_pieces: usize },
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Nerve(#[from] NerveError),
}

fn as_text<T: fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// One family `𝒜_iⁿ` of pairwise disjoint cubes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubeFamilySpec<T: Scalar> {
    pub n: usize,
    pub m: usize,
    pub i: usize,
    #[serde(serialize_with = "as_text")]
    pub eps: T,
}

impl<T: Scalar> CubeFamilySpec<T> {
    pub fn unit(&self) -> T {
        self.eps.clone() / T::from_count(self.m + 1)
    }

    /// Endpoints of interval `z`.
    pub fn interval(&self, z: i64) -> (T, T) {
        let unit = self.unit();
        let start = T::from_ratio(z * (self.m as i64 + 1) + self.i as i64, 1);
        let lo = unit.clone() * start.clone();
        let hi = unit * (start + T::from_count(self.m));
        (lo, hi)
    }

    /// Index of the interval containing `t`, or `None` if `t` is in a gap.
    pub fn index_of(&self, t: &T) -> Option<i64> {
        let period = T::from_count(self.m + 1);
        let u = t.clone() / self.unit() - T::from_count(self.i);
        let z = (u.clone() / period.clone()).floor_scalar();
        let r = u - z.clone() * period;
        (r <= T::from_count(self.m)).then(|| z.floor_i64())
    }

    /// Indices of the cube containing `p`, if any.
    pub fn cube_of(&self, p: &[T]) -> Option<Vec<i64>> {
        p.iter().map(|t| self.index_of(t)).collect()
    }

    pub fn gap(&self) -> T {
        self.unit()
    }

    /// l∞ diameter of every cube.
    pub fn diameter(&self) -> T {
        self.unit() * T::from_count(self.m)
    }
}

fn check_m_eps<T: Scalar>(m: usize, eps: &T) -> Result<(), KolmogorovError> {
    if m == 0 {
        return Err(KolmogorovError::ZeroM);
    }
    if *eps <= T::zero() {
        return Err(KolmogorovError::NonPositiveEps);
    }
    Ok(())
}

/// The `m+1` interval families on ℝ.
pub fn interval_families<T: Scalar>(m: usize, eps: T) -> Result<Vec<CubeFamilySpec<T>>, KolmogorovError> {
    cube_families(1, m, eps)
}

pub fn cube_families<T: Scalar>(n: usize, m: usize, eps: T) -> Result<Vec<CubeFamilySpec<T>>, KolmogorovError> {
    check_m_eps(m, &eps)?;
    Ok((1..=m + 1)
        .map(|i| CubeFamilySpec { n, m, i, eps: eps.clone() })
        .collect())
}

/// A cube of one family, clipped to the bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube<T: Scalar> {
    pub family: usize,
    pub index: Vec<i64>,
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> Cube<T> {
    pub fn contains(&self, p: &[T]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(t, (lo, hi))| lo <= t && t <= hi)
    }

    pub fn linf_diameter(&self) -> T {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| hi.clone() - lo.clone())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

/// Kolmogorov cover of a box in ℝⁿ: the families `𝒜₁ⁿ, …, 𝒜_{m+1}ⁿ` with
/// their cubes meeting the box.
#[derive(Debug, Clone)]
pub struct KolmogorovCover<T: Scalar> {
    pub families: Vec<CubeFamilySpec<T>>,
    pub bbox: Vec<(T, T)>,
    pub cubes: Vec<Cube<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KolmogorovAudit {
    pub grid_points: usize,
    pub min_multiplicity: usize,
    pub required_multiplicity: usize,
    /// Grid points lying in two cubes of one family.
    pub family_overlaps: usize,
    pub mesh: f64,
    pub eps: f64,
    pub multiplicities: Vec<usize>,
}

impl KolmogorovAudit {
    pub fn passed(&self) -> bool {
        self.min_multiplicity >= self.required_multiplicity
            && self.family_overlaps == 0
            && self.mesh < self.eps
    }
}

pub fn kolmogorov_cover<T: Scalar>(
    n: usize,
    m: usize,
    eps: T,
    bbox: &[(T, T)],
) -> Result<KolmogorovCover<T>, KolmogorovError> {
    check_m_eps(m, &eps)?;
    if n > m {
        return Err(KolmogorovError::DimensionTooLarge { n, m });
    }
    if bbox.len() != n || bbox.iter().any(|(lo, hi)| lo > hi) {
        return Err(KolmogorovError::BadBox { expected: n });
    }
    let families = cube_families(n, m, eps)?;
    let mut cubes = Vec::new();
    for fam in &families {
        let period = T::from_count(m + 1);
        let ranges: Vec<(i64, i64)> = bbox
            .iter()
            .map(|(lo, hi)| {
                let first = ((lo.clone() / fam.unit() - T::from_count(fam.i + m)) / period.clone()).floor_i64();
                let last = ((hi.clone() / fam.unit() - T::from_count(fam.i)) / period.clone()).floor_i64();
                (first, last)
            })
            .collect();
        let mut index = ranges.iter().map(|r| r.0).collect::<Vec<_>>();
        'outer: loop {
            let mut lo = Vec::with_capacity(n);
            let mut hi = Vec::with_capacity(n);
            let mut inside = true;
            for (axis, &z) in index.iter().enumerate() {
                let (a, b) = fam.interval(z);
                let (bl, bh) = &bbox[axis];
                let a = if a < *bl { bl.clone() } else { a };
                let b = if b > *bh { bh.clone() } else { b };
                if a > b {
                    inside = false;
                }
                lo.push(a);
                hi.push(b);
            }
            if inside {
                cubes.push(Cube { family: fam.i, index: index.clone(), lo, hi });
            }
            for axis in 0..n {
                if index[axis] < ranges[axis].1 {
                    index[axis] += 1;
                    continue 'outer;
                }
                index[axis] = ranges[axis].0;
            }
            break;
        }
    }
    Ok(KolmogorovCover { families, bbox: bbox.to_vec(), cubes })
}

impl<T: Scalar> KolmogorovCover<T> {
    pub fn n(&self) -> usize {
        self.bbox.len()
    }

    /// Number of families with a cube containing `p`.
    pub fn multiplicity(&self, p: &[T]) -> usize {
        self.families.iter().filter(|f| f.cube_of(p).is_some()).count()
    }

    /// Exact grid with `side` points per axis of the bounding box.
    pub fn grid(&self, side: usize) -> Vec<Vec<T>> {
        let axes: Vec<Vec<T>> = self
            .bbox
            .iter()
            .map(|(lo, hi)| crate::scalar::linear_grid(lo, hi, side))
            .collect();
        let total = side.pow(self.n() as u32);
        (0..total)
            .map(|mut idx| {
                axes.iter()
                    .map(|ax| {
                        let v = ax[idx % side].clone();
                        idx /= side;
                        v
                    })
                    .collect()
            })
            .collect()
    }

    /// Multiplicity, per-family disjointness and mesh on a grid. Disjointness
    /// is checked against the materialised cubes, independently of the
    /// arithmetic used by [`KolmogorovCover::multiplicity`].
    pub fn audit(&self, side: usize) -> KolmogorovAudit {
        let grid = self.grid(side);
        let m = self.families[0].m;
        let per_point: Vec<(usize, bool)> = grid
            .par_iter()
            .map(|p| {
                let mult = self.multiplicity(p);
                let mut seen = vec![0usize; m + 2];
                for c in &self.cubes {
                    if c.contains(p) {
                        seen[c.family] += 1;
                    }
                }
                (mult, seen.iter().any(|&k| k > 1))
            })
            .collect();
        let mesh = self
            .cubes
            .iter()
            .map(|c| c.linf_diameter().to_f64_lossy())
            .fold(0.0, f64::max);
        KolmogorovAudit {
            grid_points: grid.len(),
            min_multiplicity: per_point.iter().map(|p| p.0).min().unwrap_or(0),
            required_multiplicity: m + 1 - self.n(),
            family_overlaps: per_point.iter().filter(|p| p.1).count(),
            mesh,
            eps: self.families[0].eps.to_f64_lossy(),
            multiplicities: per_point.iter().map(|p| p.0).collect(),
        }
    }
}

/// Smallest grid side with at least `points` grid points in dimension `n`.
pub fn grid_side_for(points: usize, n: usize) -> usize {
    let mut side = (points as f64).powf(1.0 / n as f64).floor() as usize;
    while side.pow(n as u32) < points {
        side += 1;
    }
    side.max(2)
}

/// Assigns arbitrary points to pieces through their nearest sample, so the
/// cover keeps its sampled multiplicity and per-family disjointness off the
/// sample set.
struct KoCore<S> {
    sys: S,
    points: Vec<SystemPoint>,
    /// `(family, piece id)` pairs of each sample.
    sample_pieces: Vec<Vec<(usize, usize)>>,
}

impl<S: MetricSystem> KoCore<S> {
    fn nearest(&self, p: &SystemPoint) -> usize {
        self.points
            .iter()
            .enumerate()
            .map(|(i, q)| (self.sys.dist(p, q), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map_or(0, |(_, i)| i)
    }

    fn piece_of(&self, family: usize, p: &SystemPoint) -> Option<usize> {
        self.sample_pieces[self.nearest(p)].iter().find(|(f, _)| *f == family).map(|(_, id)| *id)
    }

    fn pieces_at(&self, p: &SystemPoint) -> Vec<(usize, usize)> {
        self.sample_pieces[self.nearest(p)].clone()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KoReport {
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub halvings: usize,
    pub link_radius: f64,
    pub spacing: f64,
    pub lipschitz: f64,
    pub pieces: usize,
    pub refines: bool,
    pub min_multiplicity: usize,
    pub required_multiplicity: usize,
    /// Fraction of samples covered at least `required_multiplicity` times.
    pub covered_fraction: f64,
    pub family_overlaps: usize,
    pub pl_audit: Option<nerves::PlAudit>,
}

type Locator = Arc<dyn Fn(&SystemPoint) -> Vec<(usize, usize)> + Send + Sync>;

#[derive(Clone)]
pub struct KoCover {
    pub cover: FiniteCover,
    pub report: KoReport,
    /// Per-sample number of families containing the sample.
    pub multiplicity: Vec<usize>,
    locate: Locator,
}

impl KoCover {
    /// `(family, piece id)` pairs whose piece contains `p`.
    pub fn pieces_at(&self, p: &SystemPoint) -> Vec<(usize, usize)> {
        (self.locate)(p)
    }
}

fn union_find_root(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage clusters of `idx` at radius `rho`, each sorted, ordered by
/// smallest member.
pub fn single_linkage<S: MetricSystem + ?Sized>(
    sys: &S,
    samples: &SampleSet,
    idx: &[usize],
    rho: f64,
) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..idx.len()).collect();
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            if sys.dist(&samples.points[idx[a]], &samples.points[idx[b]]) <= rho {
                let (ra, rb) = (union_find_root(&mut parent, a), union_find_root(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for a in 0..idx.len() {
        let r = union_find_root(&mut parent, a);
        groups.entry(r).or_default().push(idx[a]);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    for g in &mut out {
        g.sort_unstable();
    }
    out.sort();
    out
}

/// Largest ratio `‖y_a − y_b‖∞ / d(a, b)` over sample pairs closer than `reach`.
fn lipschitz_estimate<S: MetricSystem + ?Sized>(
    sys: &S,
    samples: &SampleSet,
    images: &[Vec<f64>],
    reach: f64,
) -> f64 {
    let pts = &samples.points;
    (0..pts.len())
        .into_par_iter()
        .map(|a| {
            let mut best = 0.0f64;
            for b in a + 1..pts.len() {
                let d = sys.dist(&pts[a], &pts[b]);
                if d > 0.0 && d <= reach {
                    let dy = images[a]
                        .iter()
                        .zip(&images[b])
                        .map(|(x, y)| (x - y).abs())
                        .fold(0.0, f64::max);
                    best = best.max(dy / d);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Kolmogorov–Ostrand cover refining `u`: families `ℱ₁, …, ℱ_{m+1}` of
/// disjoint pieces, covering every sample at least `m − n + 1` times where
/// `n + 1 = ord u`.
///
/// The cube scale starts at `min(mesh u, 1)` and is halved until every piece
/// (a single-linkage cluster of the samples mapped into one cube) lies inside
/// a region of `u`. Points off the sample set belong to the pieces of their
/// nearest sample.
pub fn kolmogorov_ostrand_cover<S>(
    sys: &S,
    u: &FiniteCover,
    m: usize,
    samples: &SampleSet,
    seed: u64,
) -> Result<KoCover, KolmogorovError>
where
    S: MetricSystem + Clone + 'static,
{
    let ord = covers::order_profile(u, samples)?.ord;
    let n = ord - 1;
    if n > m {
        return Err(KolmogorovError::DimensionTooLarge { n, m });
    }
    let spacing = nerves::fill_distance(sys, samples);
    let f = nerves::canonical_map_with_spacing(u, sys, samples, spacing)?;
    let g = if n == 0 {
        None
    } else {
        Some(nerves::finite_to_one_map(&build_nerve(u, samples), n, seed)?)
    };
    let images: Vec<Vec<f64>> = f
        .sample_coords()
        .iter()
        .map(|b| g.as_ref().map_or_else(Vec::new, |g| g.eval(b)))
        .collect();
    let lipschitz = lipschitz_estimate(sys, samples, &images, 4.0 * spacing).max(1e-12);
    let u_hits: Vec<std::collections::HashSet<usize>> =
        u.regions.iter().map(|r| r.hits().iter().copied().collect()).collect();

    let mut eps = covers::mesh(u, sys, samples).min(1.0);
    if eps <= 0.0 {
        eps = 1.0;
    }
    for halvings in 0..=MAX_EPS_HALVINGS {
        let families = cube_families(n, m, eps)?;
        let rho = (families[0].gap() / (2.0 * lipschitz)).max(1.5 * spacing);
        let mut groups: BTreeMap<(usize, Vec<i64>), Vec<usize>> = BTreeMap::new();
        let mut multiplicity = vec![0usize; samples.len()];
        for (s, y) in images.iter().enumerate() {
            for (fi, fam) in families.iter().enumerate() {
                if let Some(c) = fam.cube_of(y) {
                    groups.entry((fi, c)).or_default().push(s);
                    multiplicity[s] += 1;
                }
            }
        }
        let clustered: Vec<((usize, Vec<i64>), Vec<Vec<usize>>)> = groups
            .into_par_iter()
            .map(|(key, idx)| {
                let cl = single_linkage(sys, samples, &idx, rho);
                (key, cl)
            })
            .collect();
        let bad = clustered
            .iter()
            .flat_map(|(_, cl)| cl.iter())
            .filter(|piece| !u_hits.iter().any(|h| piece.iter().all(|i| h.contains(i))))
            .count();
        if bad > 0 {
            if halvings == MAX_EPS_HALVINGS {
                return Err(KolmogorovError::EpsSearchFailed { eps, bad_pieces: bad });
            }
            eps /= 2.0;
            continue;
        }

        let mut hit_lists: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut sample_pieces: Vec<Vec<(usize, usize)>> = vec![Vec::new(); samples.len()];
        for ((fi, _), cl) in clustered {
            for piece in cl {
                let id = hit_lists.len();
                for &i in &piece {
                    sample_pieces[i].push((fi + 1, id));
                }
                hit_lists.push((fi, piece));
            }
        }
        for sp in &mut sample_pieces {
            sp.sort_unstable();
        }
        let pl_audit = g.as_ref().map(|g| g.audit.clone());
        let core = Arc::new(KoCore { sys: sys.clone(), points: samples.points.clone(), sample_pieces });
        let regions: Vec<Region> = hit_lists
            .into_iter()
            .enumerate()
            .map(|(id, (fi, hits))| {
                let c = Arc::clone(&core);
                let member: Membership = Arc::new(move |p| c.piece_of(fi + 1, p) == Some(id));
                Region::with_hits(id, fi + 1, member, hits)
            })
            .collect();
        let cover = FiniteCover::collection(regions, samples, CoverKind::Closed)?;
        let family_overlaps = family_overlaps(&cover, samples.len());
        let required = m + 1 - n;
        let covered = multiplicity.iter().filter(|&&k| k >= required).count();
        let report = KoReport {
            n,
            m,
            eps,
            halvings,
            link_radius: rho,
            spacing,
            lipschitz,
            pieces: cover.len(),
            refines: covers::refines(&cover, u),
            min_multiplicity: multiplicity.iter().copied().min().unwrap_or(0),
            required_multiplicity: required,
            covered_fraction: covered as f64 / samples.len().max(1) as f64,
            family_overlaps,
            pl_audit,
        };
        let locate: Locator = Arc::new(move |p| core.pieces_at(p));
        return Ok(KoCover { cover, report, multiplicity, locate });
    }
    unreachable!("loop returns on its last iteration")
}

/// Samples lying in two pieces with the same family tag.
pub fn family_overlaps(c: &FiniteCover, n_samples: usize) -> usize {
    let inc = c.incidence(n_samples);
    inc.iter()
        .filter(|js| {
            let mut fams: Vec<usize> = js.iter().map(|&j| c.regions[j].family).collect();
            fams.sort_unstable();
            fams.windows(2).any(|w| w[0] == w[1])
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covers::circle_arcs;
    use crate::systems::{make_rotation, silver_alpha};
    use crate::Rational;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn two_interval_families_for_m1() {
        let fams = interval_families(1, q(2, 1)).unwrap();
        assert_eq!(fams.len(), 2);
        assert_eq!(fams[0].unit(), q(1, 1));
        assert_eq!(fams[0].interval(0), (q(1, 1), q(2, 1)));
        assert_eq!(fams[1].interval(0), (q(2, 1), q(3, 1)));
        assert_eq!(fams[0].gap(), q(1, 1));
        // exhaustive grid over one period: every t is in some family
        for k in 0..=200 {
            let t = q(k, 100);
            assert!(fams.iter().any(|f| f.index_of(&t).is_some()), "t = {t}");
        }
        assert_eq!(fams[0].index_of(&q(3, 2)), Some(0));
        assert_eq!(fams[0].index_of(&q(5, 2)), None);
    }

    #[test]
    fn cube_diameter_and_errors() {
        let fams = cube_families(2, 3, q(1, 1)).unwrap();
        assert_eq!(fams[0].diameter(), q(3, 4));
        assert_eq!(interval_families(0, q(1, 1)), Err(KolmogorovError::ZeroM));
        assert_eq!(interval_families(2, q(0, 1)), Err(KolmogorovError::NonPositiveEps));
        let bbox = vec![(q(0, 1), q(1, 1)); 3];
        assert!(matches!(
            kolmogorov_cover(3, 2, q(1, 1), &bbox),
            Err(KolmogorovError::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn plane_cover_with_m3_is_doubly_covered() {
        let bbox = vec![(q(0, 1), q(2, 1)); 2];
        let k = kolmogorov_cover(2, 3, q(1, 2), &bbox).unwrap();
        let audit = k.audit(60);
        assert!(audit.min_multiplicity >= 2);
        assert_eq!(audit.family_overlaps, 0);
        assert!(audit.passed());
        assert_eq!(Rational::new(3, 8), k.cubes.iter().map(|c| c.linf_diameter()).max().unwrap());
    }

    #[test]
    fn line_cover_with_m2_is_doubly_covered() {
        let k = kolmogorov_cover(1, 2, q(1, 1), &[(q(-1, 1), q(3, 1))]).unwrap();
        let audit = k.audit(1000);
        assert_eq!(audit.min_multiplicity, 2);
        assert!(audit.passed());
    }

    #[test]
    fn float_and_exact_families_agree() {
        let exact = cube_families(1, 4, q(1, 3)).unwrap();
        let float = cube_families(1, 4, 1.0f64 / 3.0).unwrap();
        for k in 0..500 {
            let t = q(k, 173) + q(1, 1000);
            for (a, b) in exact.iter().zip(&float) {
                assert_eq!(a.index_of(&t), b.index_of(&t.to_f64_lossy()));
            }
        }
    }

    #[test]
    fn ko_cover_of_whole_space() {
        let sys = make_rotation(silver_alpha()).unwrap();
        let s = SampleSet::draw(&sys, 200, 0);
        let all = Region::from_fn(0, 0, |_| true, &s);
        let u = FiniteCover::new(vec![all], &s, CoverKind::Open).unwrap();
        let ko = kolmogorov_ostrand_cover(&sys, &u, 3, &s, 0).unwrap();
        assert!(ko.report.refines);
        assert_eq!(ko.report.n, 0);
        assert!(ko.multiplicity.iter().all(|&k| k == 4));
        assert_eq!(ko.cover.len(), 4);
    }

    #[test]
    fn ko_cover_of_three_arcs() {
        let sys = make_rotation(silver_alpha()).unwrap();
        let s = SampleSet::draw(&sys, 600, 0);
        let u = circle_arcs(&sys, 3, 0.06, &s).unwrap();
        let ko = kolmogorov_ostrand_cover(&sys, &u, 3, &s, 0).unwrap();
        assert_eq!(ko.report.n, 1);
        assert!(ko.report.refines);
        assert_eq!(ko.report.family_overlaps, 0);
        assert!(ko.report.min_multiplicity >= 3);
        // independent hit-set inclusion oracle
        for piece in &ko.cover.regions {
            assert!(u.regions.iter().any(|r| piece.hits().iter().all(|i| r.hits().contains(i))));
        }
        // membership at samples agrees with the cached hits
        for r in ko.cover.regions.iter().take(10) {
            for &i in r.hits() {
                assert!(r.contains(&s.points[i]));
            }
        }
        // the batched locator agrees with per-region membership
        for p in sys.sample(25, 9) {
            let mut direct: Vec<(usize, usize)> = ko
                .cover
                .regions
                .iter()
                .filter(|r| r.contains(&p))
                .map(|r| (r.family, r.id))
                .collect();
            direct.sort_unstable();
            let mut batched = ko.pieces_at(&p);
            batched.sort_unstable();
            assert_eq!(direct, batched);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn every_point_misses_at_most_n_families(
            m in 1usize..7,
            num in 1i64..40,
            coords in proptest::collection::vec(-500i64..500, 1..4),
        ) {
            let n = coords.len().min(m);
            let fams = cube_families(n, m, q(num, 7)).unwrap();
            let p: Vec<Rational> = coords[..n].iter().map(|&c| q(c, 37)).collect();
            let hit = fams.iter().filter(|f| f.cube_of(&p).is_some()).count();
            prop_assert!(hit >= m + 1 - n);
        }

        #[test]
        fn shrinking_eps_keeps_multiplicity(m in 1usize..6, k in 1i64..8, t in -300i64..300) {
            let t = q(t, 53);
            let big = interval_families(m, q(k, 1)).unwrap();
            let small = interval_families(m, q(k, 2)).unwrap();
            let cnt = |fs: &[CubeFamilySpec<Rational>]| fs.iter().filter(|f| f.index_of(&t).is_some()).count();
            prop_assert!(cnt(&big) >= m && cnt(&small) >= m);
        }

        #[test]
        fn family_intervals_are_separated(m in 1usize..8, i in 0usize..8, z in -20i64..20) {
            let i = i % (m + 1) + 1;
            let f = CubeFamilySpec { n: 1, m, i, eps: q(1, 1) };
            let (_, hi) = f.interval(z);
            let (lo, _) = f.interval(z + 1);
            prop_assert_eq!(lo - hi, f.gap());
            prop_assert!(f.gap() > q(0, 1));
        }
    }
}
