//! Nerve complexes, canonical maps into them, and piecewise-linear maps of
//! complexes into ℝⁿ with vertices in general position.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::covers::{FiniteCover, Membership, SampleSet};
use crate::systems::{MetricSystem, SystemPoint};

/// Barycentric coordinates as `(vertex id, weight)` pairs sorted by id, zero
/// weights omitted.
pub type Barycentric = Vec<(usize, f64)>;

const AFFINE_TOL: f64 = 1e-9;
const MAX_REDRAWS: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NerveError {
    #[error("sample {sample} has all canonical weights zero")]
    ZeroWeights { sample: usize },
    #[error("point lies in no region of the cover")]
    Uncovered,
    #[error("target dimension {n} is below the complex dimension {dim}")]
    TargetTooSmall { n: usize, dim: usize },
    #[error("target dimension must be at least 1")]
    ZeroTarget,
    #[error("no general-position vertex images after {0} redraws")]
    Degenerate(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplicialComplex {
    pub vertices: Vec<usize>,
    #[serde(rename = "maximal_simplices")]
    pub facets: Vec<Vec<usize>>,
    pub dim: usize,
}

impl SimplicialComplex {
    /// Complex generated by `simplices`, kept as its maximal elements.
    pub fn from_simplices(simplices: impl IntoIterator<Item = Vec<usize>>) -> Self {
        let mut unique: BTreeSet<Vec<usize>> = BTreeSet::new();
        for mut s in simplices {
            s.sort_unstable();
            s.dedup();
            if !s.is_empty() {
                unique.insert(s);
            }
        }
        let mut by_size: Vec<Vec<usize>> = unique.into_iter().collect();
        by_size.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        let mut facets: Vec<Vec<usize>> = Vec::new();
        for s in by_size {
            if !facets.iter().any(|f| is_subset(&s, f)) {
                facets.push(s);
            }
        }
        facets.sort();
        let vertices: BTreeSet<usize> = facets.iter().flatten().copied().collect();
        let dim = facets.iter().map(|f| f.len()).max().unwrap_or(1) - 1;
        SimplicialComplex { vertices: vertices.into_iter().collect(), facets, dim }
    }

    /// Whether `s` (any order) is a face of the complex.
    pub fn contains(&self, s: &[usize]) -> bool {
        let mut s = s.to_vec();
        s.sort_unstable();
        s.dedup();
        self.facets.iter().any(|f| is_subset(&s, f))
    }

    /// Every nonempty face, each listed once, sorted.
    pub fn faces(&self) -> Vec<Vec<usize>> {
        let mut all = BTreeSet::new();
        for f in &self.facets {
            for mask in 1u64..(1u64 << f.len()) {
                all.insert(
                    f.iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, &v)| v)
                        .collect::<Vec<_>>(),
                );
            }
        }
        all.into_iter().collect()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.faces()
            .into_iter()
            .filter(|f| f.len() == 2)
            .map(|f| (f[0], f[1]))
            .collect()
    }
}

/// Sorted-slice inclusion.
fn is_subset(a: &[usize], b: &[usize]) -> bool {
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j] < *x {
            j += 1;
        }
        if j == b.len() || b[j] != *x {
            return false;
        }
        j += 1;
    }
    true
}

/// Nerve of `c` as seen by the samples: a set of regions spans a simplex iff
/// some sample lies in all of them.
pub fn build_nerve(c: &FiniteCover, samples: &SampleSet) -> SimplicialComplex {
    let inc = c.incidence(samples.len());
    SimplicialComplex::from_simplices(
        inc.into_iter()
            .map(|js| js.into_iter().map(|j| c.regions[j].id).collect::<Vec<_>>()),
    )
}

/// Largest nearest-neighbour distance among the samples.
pub fn fill_distance<S: MetricSystem + ?Sized>(sys: &S, samples: &SampleSet) -> f64 {
    let pts = &samples.points;
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            pts.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| sys.dist(&pts[i], q))
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .reduce(|| 0.0, f64::max)
}

/// Partition of unity subordinate to a cover, realised through distances to
/// sampled complements.
///
/// The weight of `A` at `p ∈ A` is `min(dist(p, A^c ∩ samples), R_A)` with
/// `R_A = diam(hits A) + 2·spacing`; the cap keeps regions with an empty
/// sampled complement finite. Only complement samples within `R_A` of the
/// hits are kept, which cannot change a capped weight at a hit.
pub struct CanonicalMap<S> {
    sys: S,
    ids: Vec<usize>,
    members: Vec<Membership>,
    band: Vec<Vec<SystemPoint>>,
    caps: Vec<f64>,
    sample_coords: Vec<Barycentric>,
}

impl<S: MetricSystem> CanonicalMap<S> {
    /// Coordinates at an arbitrary point.
    pub fn eval(&self, p: &SystemPoint) -> Result<Barycentric, NerveError> {
        let mut raw: Vec<(usize, f64)> = Vec::new();
        let mut inside = false;
        for j in 0..self.ids.len() {
            if !(self.members[j])(p) {
                continue;
            }
            inside = true;
            let d = self.band[j]
                .iter()
                .map(|q| self.sys.dist(p, q))
                .fold(self.caps[j], f64::min);
            if d > 0.0 {
                raw.push((self.ids[j], d));
            }
        }
        if !inside {
            return Err(NerveError::Uncovered);
        }
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(NerveError::Uncovered);
        }
        raw.sort_by_key(|(v, _)| *v);
        Ok(raw.into_iter().map(|(v, w)| (v, w / total)).collect())
    }

    pub fn sample_coords(&self) -> &[Barycentric] {
        &self.sample_coords
    }

    pub fn system(&self) -> &S {
        &self.sys
    }
}

pub fn canonical_map<S: MetricSystem + Clone>(
    c: &FiniteCover,
    sys: &S,
    samples: &SampleSet,
) -> Result<CanonicalMap<S>, NerveError> {
    canonical_map_with_spacing(c, sys, samples, fill_distance(sys, samples))
}

pub fn canonical_map_with_spacing<S: MetricSystem + Clone>(
    c: &FiniteCover,
    sys: &S,
    samples: &SampleSet,
    spacing: f64,
) -> Result<CanonicalMap<S>, NerveError> {
    let live: Vec<usize> = (0..c.len()).filter(|&j| !c.regions[j].hits().is_empty()).collect();
    let pts = &samples.points;
    let prepared: Vec<(f64, Vec<SystemPoint>)> = live
        .par_iter()
        .map(|&j| {
            let r = &c.regions[j];
            let hit_pts: Vec<SystemPoint> = r.hit_points(samples).cloned().collect();
            let cap = crate::covers::diameter(sys, &hit_pts) + 2.0 * spacing;
            let in_region: BTreeSet<usize> = r.hits().iter().copied().collect();
            let band = (0..pts.len())
                .filter(|i| !in_region.contains(i))
                .filter(|&i| hit_pts.iter().any(|h| sys.dist(h, &pts[i]) < cap))
                .map(|i| pts[i].clone())
                .collect();
            (cap, band)
        })
        .collect();
    let (caps, band): (Vec<f64>, Vec<Vec<SystemPoint>>) = prepared.into_iter().unzip();
    let mut map = CanonicalMap {
        sys: sys.clone(),
        ids: live.iter().map(|&j| c.regions[j].id).collect(),
        members: live.iter().map(|&j| c.regions[j].membership()).collect(),
        band,
        caps,
        sample_coords: Vec::new(),
    };
    let coords: Vec<Result<Barycentric, NerveError>> =
        pts.par_iter().map(|p| map.eval(p)).collect();
    map.sample_coords = coords
        .into_iter()
        .enumerate()
        .map(|(sample, r)| r.map_err(|_| NerveError::ZeroWeights { sample }))
        .collect::<Result<_, _>>()?;
    Ok(map)
}

/// Samples sharing a coordinate vector must share a region.
pub fn audit_fibers_refine<S: MetricSystem>(map: &CanonicalMap<S>, c: &FiniteCover) -> bool {
    let mut groups: BTreeMap<Vec<(usize, u64)>, Vec<usize>> = BTreeMap::new();
    for (i, b) in map.sample_coords.iter().enumerate() {
        let key = b.iter().map(|(v, w)| (*v, w.to_bits())).collect();
        groups.entry(key).or_default().push(i);
    }
    let hits: Vec<BTreeSet<usize>> =
        c.regions.iter().map(|r| r.hits().iter().copied().collect()).collect();
    groups
        .values()
        .all(|g| hits.iter().any(|h| g.iter().all(|i| h.contains(i))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlAudit {
    /// Disjoint face pairs with `dim σ + dim τ < n` whose images met.
    pub overlapping_pairs: usize,
    pub pairs_checked: usize,
    pub grid_points: usize,
    pub max_fiber: usize,
    pub redraws: u64,
}

impl PlAudit {
    pub fn passed(&self) -> bool {
        self.overlapping_pairs == 0
    }
}

/// Piecewise-linear map given by vertex images.
#[derive(Debug, Clone, Serialize)]
pub struct PlMap {
    pub n: usize,
    pub vertex_images: BTreeMap<usize, Vec<f64>>,
    pub audit: PlAudit,
}

impl PlMap {
    pub fn eval(&self, b: &Barycentric) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (v, w) in b {
            for (o, x) in out.iter_mut().zip(&self.vertex_images[v]) {
                *o += w * x;
            }
        }
        out
    }

    fn images_of(&self, s: &[usize]) -> Vec<&Vec<f64>> {
        s.iter().map(|v| &self.vertex_images[v]).collect()
    }
}

/// Affine rank test: the images of a face span a simplex of full dimension.
fn affinely_independent(pts: &[&Vec<f64>]) -> bool {
    if pts.len() <= 1 {
        return true;
    }
    let n = pts[0].len();
    if pts.len() - 1 > n {
        return false;
    }
    let m = DMatrix::from_fn(n, pts.len() - 1, |r, c| pts[c + 1][r] - pts[0][r]);
    m.svd(false, false).rank(AFFINE_TOL) == pts.len() - 1
}

/// Barycentric solution of `Σλ_i a_i = y`, `Σλ_i = 1`, if it exists with
/// `λ ≥ −tol` and residual below `tol`.
fn barycentric_solve(pts: &[&Vec<f64>], y: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = y.len();
    let k = pts.len();
    let a = DMatrix::from_fn(n + 1, k, |r, c| if r < n { pts[c][r] } else { 1.0 });
    let mut rhs = DVector::from_column_slice(y).insert_row(n, 1.0);
    let x = a.clone().svd(true, true).solve(&rhs, 1e-12).ok()?;
    rhs -= &a * &x;
    if rhs.norm() > tol || x.iter().any(|&l| l < -tol) {
        return None;
    }
    Some(x.iter().copied().collect())
}

/// Whether the convex hulls of two point sets meet.
fn hulls_meet(a: &[&Vec<f64>], b: &[&Vec<f64>], tol: f64) -> bool {
    let n = a[0].len();
    let k = a.len() + b.len();
    let m = DMatrix::from_fn(n + 2, k, |r, c| {
        let (is_a, p) = if c < a.len() { (true, a[c]) } else { (false, b[c - a.len()]) };
        match r {
            r if r < n => if is_a { p[r] } else { -p[r] },
            r if r == n => f64::from(u8::from(is_a)),
            _ => f64::from(u8::from(!is_a)),
        }
    });
    let mut rhs = DVector::zeros(n + 2);
    rhs[n] = 1.0;
    rhs[n + 1] = 1.0;
    let svd = m.clone().svd(true, true);
    let Ok(x) = svd.solve(&rhs, 1e-12) else { return false };
    let res = (&m * &x - &rhs).norm();
    if res > tol {
        return false;
    }
    // unique when the columns are independent; otherwise fall back to a
    // conservative "meets" verdict
    if svd.rank(1e-12) < k {
        return true;
    }
    x.iter().all(|&l| l >= -tol)
}

fn vertex_images(k: &SimplicialComplex, n: usize, seed: u64) -> BTreeMap<usize, Vec<f64>> {
    let mut rng = StdRng::seed_from_u64(seed);
    k.vertices
        .iter()
        .map(|&v| (v, (0..n).map(|_| rng.random::<f64>()).collect()))
        .collect()
}

/// Grid points per axis used by the fiber audit.
fn audit_grid_side(n: usize) -> usize {
    let target = 4096f64;
    (target.powf(1.0 / n as f64).floor() as usize).clamp(2, 65)
}

/// PL map `K → ℝⁿ` with seeded uniform vertex images in `[0, 1)ⁿ`. Faces
/// whose images are affinely dependent, or disjoint low dimensional faces
/// whose images meet, trigger a redraw with the next seed.
pub fn finite_to_one_map(k: &SimplicialComplex, n: usize, seed: u64) -> Result<PlMap, NerveError> {
    if n == 0 {
        return Err(NerveError::ZeroTarget);
    }
    if k.dim > n {
        return Err(NerveError::TargetTooSmall { n, dim: k.dim });
    }
    for redraws in 0..MAX_REDRAWS {
        let images = vertex_images(k, n, seed + redraws);
        let ok = k
            .facets
            .iter()
            .all(|f| affinely_independent(&f.iter().map(|v| &images[v]).collect::<Vec<_>>()));
        if ok {
            let mut map = PlMap {
                n,
                vertex_images: images,
                audit: PlAudit {
                    overlapping_pairs: 0,
                    pairs_checked: 0,
                    grid_points: 0,
                    max_fiber: 0,
                    redraws,
                },
            };
            let (overlaps, pairs) = audit_disjoint_faces(k, &map);
            if overlaps > 0 {
                continue;
            }
            let (grid_points, max_fiber) = audit_fibers(k, &map, audit_grid_side(n));
            map.audit.overlapping_pairs = overlaps;
            map.audit.pairs_checked = pairs;
            map.audit.grid_points = grid_points;
            map.audit.max_fiber = max_fiber;
            return Ok(map);
        }
    }
    Err(NerveError::Degenerate(MAX_REDRAWS))
}

/// Disjoint faces `σ, τ` with `dim σ + dim τ < n` must have disjoint images.
pub fn audit_disjoint_faces(k: &SimplicialComplex, g: &PlMap) -> (usize, usize) {
    let faces = k.faces();
    let pairs: Vec<(usize, usize)> = (0..faces.len())
        .flat_map(|i| (i + 1..faces.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            faces[i].len() + faces[j].len() < g.n + 2
                && faces[i].iter().all(|v| !faces[j].contains(v))
        })
        .collect();
    let overlaps = pairs
        .par_iter()
        .filter(|&&(i, j)| hulls_meet(&g.images_of(&faces[i]), &g.images_of(&faces[j]), 1e-10))
        .count();
    (overlaps, pairs.len())
}

/// Largest preimage count over a `side^n` grid of the images' bounding box.
/// Preimages found in several facets are identified by their barycentric
/// coordinates.
pub fn audit_fibers(k: &SimplicialComplex, g: &PlMap, side: usize) -> (usize, usize) {
    let n = g.n;
    let (mut lo, mut hi) = (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]);
    for img in g.vertex_images.values() {
        for c in 0..n {
            lo[c] = lo[c].min(img[c]);
            hi[c] = hi[c].max(img[c]);
        }
    }
    let total = side.pow(n as u32);
    let max_fiber = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let y: Vec<f64> = (0..n)
                .map(|c| {
                    let t = (idx % side) as f64 / (side - 1) as f64;
                    idx /= side;
                    lo[c] + (hi[c] - lo[c]) * t
                })
                .collect();
            let mut found: BTreeSet<Vec<(usize, i64)>> = BTreeSet::new();
            for f in &k.facets {
                if let Some(l) = barycentric_solve(&g.images_of(f), &y, 1e-9) {
                    let key = f
                        .iter()
                        .zip(&l)
                        .filter(|(_, w)| **w > 1e-9)
                        .map(|(v, w)| (*v, (w * 1e7).round() as i64))
                        .collect();
                    found.insert(key);
                }
            }
            found.len()
        })
        .max()
        .unwrap_or(0);
    (total, max_fiber)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covers::{circle_arcs, order_profile, CoverKind, Region};
    use crate::systems::{make_rotation, silver_alpha, DynSystem};
    use proptest::prelude::*;

    fn rotation() -> DynSystem {
        make_rotation(silver_alpha()).unwrap()
    }

    #[test]
    fn disjoint_regions_give_two_vertices() {
        let sys = rotation();
        let s = SampleSet::draw(&sys, 100, 0);
        let c = circle_arcs(&sys, 2, 0.0, &s).unwrap();
        let k = build_nerve(&c, &s);
        assert_eq!(k.vertices, vec![0, 1]);
        assert_eq!(k.dim, 0);
        assert!(k.edges().is_empty());
    }

    #[test]
    fn three_arcs_give_a_cycle() {
        let sys = rotation();
        let s = SampleSet::draw(&sys, 500, 0);
        let c = circle_arcs(&sys, 3, 0.05, &s).unwrap();
        let k = build_nerve(&c, &s);
        // brute-force pairwise intersection of hit sets
        let mut edges = Vec::new();
        for a in 0..3 {
            for b in a + 1..3 {
                if c.regions[a].hits().iter().any(|i| c.regions[b].hits().contains(i)) {
                    edges.push((a, b));
                }
            }
        }
        assert_eq!(k.edges(), edges);
        assert_eq!(edges.len(), 3);
        assert_eq!(k.dim, 1);
        assert_eq!(k.dim + 1, order_profile(&c, &s).unwrap().ord);
    }

    #[test]
    fn shared_point_gives_full_simplex() {
        let sys = rotation();
        let s = SampleSet::draw(&sys, 40, 0);
        let regions = (0..4).map(|i| Region::from_fn(i, 0, |_| true, &s)).collect();
        let c = FiniteCover::new(regions, &s, CoverKind::Open).unwrap();
        let k = build_nerve(&c, &s);
        assert_eq!(k.facets, vec![vec![0, 1, 2, 3]]);
        assert_eq!(k.dim, 3);
        assert_eq!(k.faces().len(), 15);
    }

    #[test]
    fn canonical_weights_at_simple_points() {
        let sys = rotation();
        let s = SampleSet::draw(&sys, 400, 0);
        let c = circle_arcs(&sys, 3, 0.1, &s).unwrap();
        let map = canonical_map(&c, &sys, &s).unwrap();
        // arcs are [j/3 − 0.05, (j+1)/3 + 0.05]
        let inner = map.eval(&SystemPoint::circle(1.0 / 6.0)).unwrap();
        assert_eq!(inner, vec![(0, 1.0)]);
        let mid = map.eval(&SystemPoint::circle(1.0 / 3.0)).unwrap();
        assert_eq!(mid.len(), 2);
        assert!((mid[0].1 - 0.5).abs() < 0.03 && (mid[1].1 - 0.5).abs() < 0.03);
        assert!(audit_fibers_refine(&map, &c));
    }

    #[test]
    fn canonical_map_partition_of_unity() {
        let sys = rotation();
        let s = SampleSet::draw(&sys, 300, 4);
        let c = circle_arcs(&sys, 5, 0.07, &s).unwrap();
        let map = canonical_map(&c, &sys, &s).unwrap();
        let k = build_nerve(&c, &s);
        for b in map.sample_coords() {
            let total: f64 = b.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(b.iter().all(|(_, w)| *w >= 0.0));
            let support: Vec<usize> = b.iter().map(|(v, _)| *v).collect();
            assert!(k.contains(&support));
        }
    }

    #[test]
    fn single_vertex_map_is_constant() {
        let k = SimplicialComplex::from_simplices([vec![7]]);
        let g = finite_to_one_map(&k, 1, 0).unwrap();
        assert_eq!(g.eval(&vec![(7, 1.0)]), g.vertex_images[&7]);
        assert_eq!(g.audit.max_fiber, 1);
        assert!(matches!(finite_to_one_map(&k, 0, 0), Err(NerveError::ZeroTarget)));
    }

    #[test]
    fn cycle_into_line_has_fibers_of_size_two() {
        let k = SimplicialComplex::from_simplices([vec![0, 1], vec![1, 2], vec![0, 2]]);
        let g = finite_to_one_map(&k, 1, 0).unwrap();
        assert!(g.audit.passed());
        // oracle: count edges whose image interval contains y, merging shared vertices
        let img = |v: usize| g.vertex_images[&v][0];
        let mut worst = 0;
        for step in 0..=1000 {
            let (lo, hi) = (img(0).min(img(1)).min(img(2)), img(0).max(img(1)).max(img(2)));
            let y = lo + (hi - lo) * step as f64 / 1000.0;
            let mut pre = BTreeSet::new();
            for (a, b) in k.edges() {
                let (ya, yb) = (img(a), img(b));
                if (ya - y) * (yb - y) <= 0.0 {
                    let t = (y - ya) / (yb - ya);
                    let key = if t < 1e-12 { vec![a] } else if t > 1.0 - 1e-12 { vec![b] } else { vec![a, b] };
                    pre.insert(key);
                }
            }
            worst = worst.max(pre.len());
        }
        assert_eq!(worst, 2);
        assert_eq!(g.audit.max_fiber, 2);
        assert!(matches!(finite_to_one_map(&k, 0, 0), Err(NerveError::ZeroTarget)));
        let tri = SimplicialComplex::from_simplices([vec![0, 1, 2]]);
        assert!(matches!(finite_to_one_map(&tri, 1, 0), Err(NerveError::TargetTooSmall { .. })));
    }

    #[test]
    fn triangle_into_plane_is_injective() {
        let k = SimplicialComplex::from_simplices([vec![0, 1, 2]]);
        let g = finite_to_one_map(&k, 2, 3).unwrap();
        assert_eq!(g.audit.max_fiber, 1);
        assert!(g.audit.passed());
    }

    #[test]
    fn meeting_hulls_detected() {
        let (a, b, c, d) = (vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]);
        assert!(hulls_meet(&[&a, &b], &[&c, &d], 1e-10));
        let e = vec![2.0, 2.0];
        assert!(!hulls_meet(&[&a, &c], &[&e], 1e-10));
        assert!(hulls_meet(&[&a, &b], &[&vec![0.5, 0.5]], 1e-10));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn nerve_dim_matches_order(count in 2usize..9, overlap in 0.0f64..0.2, seed in 0u64..5) {
            let sys = rotation();
            let s = SampleSet::draw(&sys, 250, seed);
            let c = circle_arcs(&sys, count, overlap, &s).unwrap();
            let k = build_nerve(&c, &s);
            prop_assert_eq!(k.dim + 1, order_profile(&c, &s).unwrap().ord);
        }

        #[test]
        fn random_complexes_map_in_general_position(
            facets in proptest::collection::vec(proptest::collection::btree_set(0usize..7, 1..=2), 1..8),
            seed in 0u64..20,
        ) {
            let k = SimplicialComplex::from_simplices(facets.into_iter().map(|f| f.into_iter().collect()));
            let g = finite_to_one_map(&k, 2, seed).unwrap();
            prop_assert!(g.audit.passed());
            for f in &k.facets {
                let pts: Vec<&Vec<f64>> = f.iter().map(|v| &g.vertex_images[v]).collect();
                prop_assert!(affinely_independent(&pts));
            }
        }
    }
}
