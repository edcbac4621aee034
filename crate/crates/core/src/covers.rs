//! Finite covers as tagged membership predicates audited on a sample set.
//!
//! Diameters, meshes and "meets the closure of" are all evaluated on hit
//! sets: a region is known only through the sample points it contains.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::systems::{Flow, MetricSystem, SystemPoint};

pub const DEFAULT_CLOS_TOL: f64 = 1e-9;

pub type Membership = Arc<dyn Fn(&SystemPoint) -> bool + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("cover has no regions")]
    EmptyCover,
    #[error("sample set is empty")]
    NoSamples,
    #[error("duplicate region id {0}")]
    DuplicateId(usize),
    #[error("sample {sample} lies in no region")]
    Uncovered { sample: usize },
    #[error("shift window must be positive")]
    ZeroWindow,
    #[error("translate {z} exceeds the system horizon {horizon}")]
    HorizonExceeded { z: i64, horizon: u64 },
    #[error("real-translate grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("non-positive parameter {name} = {value}")]
    NonPositive { name: &'static str, value: f64 },
}

/// Points a cover is audited against, tagged with a reproducible identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub id: String,
    pub points: Vec<SystemPoint>,
}

impl SampleSet {
    pub fn draw<S: MetricSystem + ?Sized>(sys: &S, n: usize, seed: u64) -> Self {
        let id = format!("{}:{}:{}", sys.descriptor().kind, n, seed);
        SampleSet { id, points: sys.sample(n, seed) }
    }

    pub fn from_points(id: impl Into<String>, points: Vec<SystemPoint>) -> Self {
        SampleSet { id: id.into(), points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone)]
pub struct Region {
    pub id: usize,
    pub family: usize,
    /// Ids of the regions this one was built from, if any.
    pub parents: Vec<usize>,
    member: Membership,
    hits: Vec<usize>,
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Region")
            .field("id", &self.id)
            .field("family", &self.family)
            .field("parents", &self.parents)
            .field("hits", &self.hits.len())
            .finish()
    }
}

impl Region {
    pub fn new(id: usize, family: usize, member: Membership, samples: &SampleSet) -> Self {
        let hits = samples
            .points
            .par_iter()
            .enumerate()
            .filter(|(_, p)| member(p))
            .map(|(i, _)| i)
            .collect();
        Region { id, family, parents: Vec::new(), member, hits }
    }

    pub fn from_fn<F>(id: usize, family: usize, f: F, samples: &SampleSet) -> Self
    where
        F: Fn(&SystemPoint) -> bool + Send + Sync + 'static,
    {
        Region::new(id, family, Arc::new(f), samples)
    }

    /// Builds a region whose hit set is already known. `hits` must agree with
    /// `member` on the sample set the caller used.
    pub fn with_hits(id: usize, family: usize, member: Membership, mut hits: Vec<usize>) -> Self {
        hits.sort_unstable();
        hits.dedup();
        Region { id, family, parents: Vec::new(), member, hits }
    }

    pub fn with_parents(mut self, parents: Vec<usize>) -> Self {
        self.parents = parents;
        self
    }

    pub fn contains(&self, p: &SystemPoint) -> bool {
        (self.member)(p)
    }

    pub fn membership(&self) -> Membership {
        Arc::clone(&self.member)
    }

    pub fn hits(&self) -> &[usize] {
        &self.hits
    }

    pub fn hit_points<'a>(&'a self, samples: &'a SampleSet) -> impl Iterator<Item = &'a SystemPoint> {
        self.hits.iter().map(move |&i| &samples.points[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverKind {
    Open,
    Closed,
}

#[derive(Debug, Clone)]
pub struct FiniteCover {
    pub regions: Vec<Region>,
    pub sample_ref: String,
    pub kind: CoverKind,
    /// Radius by which closed elements were enlarged; bookkeeping only.
    pub enlargement: f64,
}

fn check_ids(regions: &[Region]) -> Result<(), CoverError> {
    let mut seen = HashSet::new();
    for r in regions {
        if !seen.insert(r.id) {
            return Err(CoverError::DuplicateId(r.id));
        }
    }
    Ok(())
}

impl FiniteCover {
    /// A cover: ids unique and every sample lies in some region.
    pub fn new(regions: Vec<Region>, samples: &SampleSet, kind: CoverKind) -> Result<Self, CoverError> {
        check_ids(&regions)?;
        let mut covered = vec![false; samples.len()];
        for r in &regions {
            for &i in r.hits() {
                covered[i] = true;
            }
        }
        if let Some(sample) = covered.iter().position(|c| !c) {
            return Err(CoverError::Uncovered { sample });
        }
        Ok(FiniteCover { regions, sample_ref: samples.id.clone(), kind, enlargement: 0.0 })
    }

    /// A collection of regions that need not cover the sample set.
    pub fn collection(regions: Vec<Region>, samples: &SampleSet, kind: CoverKind) -> Result<Self, CoverError> {
        check_ids(&regions)?;
        Ok(FiniteCover { regions, sample_ref: samples.id.clone(), kind, enlargement: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn region(&self, id: usize) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    /// Indices (into `regions`) of the regions containing `p`.
    pub fn regions_containing(&self, p: &SystemPoint) -> Vec<usize> {
        (0..self.regions.len()).filter(|&j| self.regions[j].contains(p)).collect()
    }

    /// Per-sample lists of region indices, derived from the hit sets.
    pub fn incidence(&self, n_samples: usize) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); n_samples];
        for (j, r) in self.regions.iter().enumerate() {
            for &i in r.hits() {
                inc[i].push(j);
            }
        }
        inc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderProfile {
    pub ord: usize,
    pub counts: Vec<usize>,
}

pub fn order_profile(c: &FiniteCover, samples: &SampleSet) -> Result<OrderProfile, CoverError> {
    if c.is_empty() {
        return Err(CoverError::EmptyCover);
    }
    if samples.is_empty() {
        return Err(CoverError::NoSamples);
    }
    let mut counts = vec![0usize; samples.len()];
    for r in &c.regions {
        for &i in r.hits() {
            counts[i] += 1;
        }
    }
    let ord = counts.iter().copied().max().unwrap_or(0);
    Ok(OrderProfile { ord, counts })
}

/// Largest pairwise distance within `pts`; 0 for fewer than two points.
pub fn diameter<S: MetricSystem + ?Sized>(sys: &S, pts: &[SystemPoint]) -> f64 {
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            pts[i + 1..]
                .iter()
                .map(|q| sys.dist(&pts[i], q))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

fn region_diameter_with<S, F>(sys: &S, r: &Region, samples: &SampleSet, map: F) -> f64
where
    S: MetricSystem + ?Sized,
    F: Fn(&SystemPoint) -> SystemPoint + Sync,
{
    let pts: Vec<SystemPoint> = r.hit_points(samples).map(&map).collect();
    diameter(sys, &pts)
}

/// Diameters of `{act(p, z) : p ∈ hits}` for each region.
pub fn translate_diameters<S: MetricSystem + ?Sized>(
    c: &FiniteCover,
    sys: &S,
    z: i64,
    samples: &SampleSet,
) -> Vec<f64> {
    c.regions
        .iter()
        .map(|r| region_diameter_with(sys, r, samples, |p| sys.act(p, z)))
        .collect()
}

fn check_horizon<S: MetricSystem + ?Sized>(sys: &S, z: i64) -> Result<(), CoverError> {
    if z.unsigned_abs() > sys.horizon() {
        return Err(CoverError::HorizonExceeded { z, horizon: sys.horizon() });
    }
    Ok(())
}

/// `mesh(𝒜+z)` for `z = 0..=zmax`.
pub fn mesh_under_translates<S: MetricSystem + ?Sized>(
    c: &FiniteCover,
    sys: &S,
    zmax: u64,
    samples: &SampleSet,
) -> Result<Vec<(i64, f64)>, CoverError> {
    check_horizon(sys, zmax as i64)?;
    Ok((0..=zmax as i64)
        .map(|z| {
            let mesh = translate_diameters(c, sys, z, samples).into_iter().fold(0.0, f64::max);
            (z, mesh)
        })
        .collect())
}

pub fn mesh<S: MetricSystem + ?Sized>(c: &FiniteCover, sys: &S, samples: &SampleSet) -> f64 {
    translate_diameters(c, sys, 0, samples).into_iter().fold(0.0, f64::max)
}

/// Common refinement `𝒜₀ ∨ (𝒜₁−z₁) ∨ … ∨ (𝒜ₙ−zₙ)` with `z_i = i·m`.
///
/// A point `p` lies in the element indexed by `(A₀, …, Aₙ)` iff
/// `p + z_i ∈ A_i` for every `i`. Empty intersections are dropped and
/// `parents` records the component region ids.
pub fn join_with_shifts<S>(
    covers: &[FiniteCover],
    sys: &S,
    m: u64,
    samples: &SampleSet,
) -> Result<FiniteCover, CoverError>
where
    S: MetricSystem + Clone + 'static,
{
    if m == 0 {
        return Err(CoverError::ZeroWindow);
    }
    if covers.is_empty() {
        return Err(CoverError::EmptyCover);
    }
    let shifts: Vec<i64> = (0..covers.len() as i64).map(|i| i * m as i64).collect();
    check_horizon(sys, *shifts.last().unwrap())?;

    let inc0 = covers[0].incidence(samples.len());
    let tuples: Vec<Vec<Vec<usize>>> = samples
        .points
        .par_iter()
        .enumerate()
        .map(|(s, p)| {
            let mut acc: Vec<Vec<usize>> = inc0[s].iter().map(|&j| vec![j]).collect();
            for (c, &z) in covers.iter().zip(&shifts).skip(1) {
                if acc.is_empty() {
                    break;
                }
                let here = c.regions_containing(&sys.act(p, z));
                acc = acc
                    .iter()
                    .flat_map(|t| {
                        here.iter().map(move |&j| {
                            let mut t = t.clone();
                            t.push(j);
                            t
                        })
                    })
                    .collect();
            }
            acc
        })
        .collect();

    let mut by_tuple: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (s, ts) in tuples.into_iter().enumerate() {
        for t in ts {
            by_tuple.entry(t).or_default().push(s);
        }
    }

    let regions = by_tuple
        .into_iter()
        .enumerate()
        .map(|(id, (tuple, hits))| {
            let parts: Vec<(i64, Membership)> = tuple
                .iter()
                .zip(&shifts)
                .enumerate()
                .map(|(i, (&j, &z))| (z, covers[i].regions[j].membership()))
                .collect();
            let parents = tuple.iter().enumerate().map(|(i, &j)| covers[i].regions[j].id).collect();
            let sys = sys.clone();
            let member: Membership =
                Arc::new(move |p| parts.iter().all(|(z, f)| f(&sys.act(p, *z))));
            Region::with_hits(id, 0, member, hits).with_parents(parents)
        })
        .collect();
    let kind = covers[0].kind;
    FiniteCover::collection(regions, samples, kind)
}

/// True iff `mesh(𝒜+z) < ε` for every integer `z ≥ 0` with `z·d < ord 𝒜`.
pub fn check_mdim_witness<S: MetricSystem + ?Sized>(
    c: &FiniteCover,
    sys: &S,
    d: f64,
    eps: f64,
    samples: &SampleSet,
) -> Result<bool, CoverError> {
    if d <= 0.0 {
        return Err(CoverError::NonPositive { name: "d", value: d });
    }
    let ord = order_profile(c, samples)?.ord as f64;
    let mut z = 0i64;
    while (z as f64) * d < ord {
        check_horizon(sys, z)?;
        let m = translate_diameters(c, sys, z, samples).into_iter().fold(0.0, f64::max);
        if m >= eps {
            return Ok(false);
        }
        z += 1;
    }
    Ok(true)
}

/// `64·β` grid points, at least 2.
pub fn default_rgrid(beta: f64) -> usize {
    ((64.0 * beta).ceil() as usize).max(2)
}

fn real_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect()
}

fn flowed_diameter<S: Flow + ?Sized>(sys: &S, r: &Region, samples: &SampleSet, t: f64) -> f64 {
    region_diameter_with(sys, r, samples, |p| sys.flow(p, t))
}

/// `diam(A+r) < α` for every `r` on an `rgrid`-point grid of `[−β, β]`.
pub fn check_small<S: Flow + ?Sized>(
    region: &Region,
    sys: &S,
    alpha: f64,
    beta: f64,
    samples: &SampleSet,
    rgrid: usize,
) -> Result<bool, CoverError> {
    if rgrid < 2 {
        return Err(CoverError::GridTooSmall(rgrid));
    }
    Ok(real_grid(-beta, beta, rgrid)
        .into_iter()
        .all(|r| flowed_diameter(sys, region, samples, r) < alpha))
}

/// `mesh(𝒜+r) < α` for every `r` on an `rgrid`-point grid of `[0, β]`.
pub fn check_fine<S: Flow + ?Sized>(
    c: &FiniteCover,
    sys: &S,
    alpha: f64,
    beta: f64,
    samples: &SampleSet,
    rgrid: usize,
) -> Result<bool, CoverError> {
    if rgrid < 2 {
        return Err(CoverError::GridTooSmall(rgrid));
    }
    let grid = real_grid(0.0, beta, rgrid);
    Ok(c.regions
        .par_iter()
        .all(|reg| grid.iter().all(|&r| flowed_diameter(sys, reg, samples, r) < alpha)))
}

/// Outcome of the two refinement conditions, with the first offending
/// region and translates when a condition fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinedAudit {
    pub cond1: bool,
    pub cond2: bool,
    /// `(region id, r, r₁, r₂)` with `A+r` meeting both `W+r₁` and `W+r₂`.
    pub cond1_witness: Option<(usize, f64, f64, f64)>,
    /// `(region id, r, diam(A+r))`.
    pub cond2_witness: Option<(usize, f64, f64)>,
    pub rgrid: usize,
    pub clos_tol: f64,
    pub samples: usize,
}

impl RefinedAudit {
    pub fn passed(&self) -> bool {
        self.cond1 && self.cond2
    }
}

/// Offsets `s = k·h`, `|k| < rgrid`, at which region `a` meets `cl(W+s)`.
///
/// `A` meets `cl(W+s)` when a hit of `A` flows back into `W` under `−s`, or
/// when a hit of `W` flowed by `s` lands within `clos_tol` of a hit of `A`.
fn meeting_offsets<S: Flow + ?Sized>(
    a: &Region,
    w: &Region,
    w_flowed: &[Vec<SystemPoint>],
    sys: &S,
    samples: &SampleSet,
    h: f64,
    rgrid: usize,
    clos_tol: f64,
) -> Vec<i64> {
    let span = rgrid as i64 - 1;
    (-span..=span)
        .filter(|&k| {
            let s = k as f64 * h;
            let ws = &w_flowed[(k + span) as usize];
            a.hit_points(samples).any(|p| {
                w.contains(&sys.flow(p, -s)) || ws.iter().any(|q| sys.dist(q, p) <= clos_tol)
            })
        })
        .collect()
}

/// Grid audit of the two conditions for `𝒜` to be `(α, β)`-refined at `W`.
///
/// Condition 1: no `A+r` meets the closures of both `W+r₁` and `W+r₂` with
/// `|r₁ − r₂| ≥ 1`, for grid values `r, r₁, r₂ ∈ [−β, β]`. Condition 2: every
/// `A` whose sweep `A+[−β,β]` meets the closure of `W+[−β,β]` has
/// `diam(A+r) < α` across the grid.
#[allow(clippy::too_many_arguments)]
pub fn check_refined_at<S: Flow + ?Sized>(
    c: &FiniteCover,
    w: &Region,
    sys: &S,
    alpha: f64,
    beta: f64,
    samples: &SampleSet,
    rgrid: usize,
    clos_tol: f64,
) -> Result<RefinedAudit, CoverError> {
    if rgrid < 2 {
        return Err(CoverError::GridTooSmall(rgrid));
    }
    let h = 2.0 * beta / (rgrid - 1) as f64;
    let span = rgrid as i64 - 1;
    let w_flowed: Vec<Vec<SystemPoint>> = (-span..=span)
        .into_par_iter()
        .map(|k| w.hit_points(samples).map(|p| sys.flow(p, k as f64 * h)).collect())
        .collect();
    let grid = real_grid(-beta, beta, rgrid);

    let per_region: Vec<(Option<(usize, f64, f64, f64)>, Option<(usize, f64, f64)>)> = c
        .regions
        .par_iter()
        .map(|a| {
            let ks = meeting_offsets(a, w, &w_flowed, sys, samples, h, rgrid, clos_tol);
            if ks.is_empty() {
                return (None, None);
            }
            // r = −β + idx·h and r₁ = −β + b·h give s = (b − idx)·h
            let mut bad1 = None;
            for idx in 0..rgrid as i64 {
                let window: Vec<i64> =
                    ks.iter().copied().filter(|&k| k >= -idx && k <= span - idx).collect();
                if let (Some(&lo), Some(&hi)) = (window.first(), window.last()) {
                    if (hi - lo) as f64 * h >= 1.0 - 1e-12 {
                        let r = -beta + idx as f64 * h;
                        bad1 = Some((a.id, r, r + lo as f64 * h, r + hi as f64 * h));
                        break;
                    }
                }
            }
            let bad2 = grid.iter().find_map(|&r| {
                let d = flowed_diameter(sys, a, samples, r);
                (d >= alpha).then_some((a.id, r, d))
            });
            (bad1, bad2)
        })
        .collect();

    let cond1_witness = per_region.iter().find_map(|(b, _)| *b);
    let cond2_witness = per_region.iter().find_map(|(_, b)| *b);
    Ok(RefinedAudit {
        cond1: cond1_witness.is_none(),
        cond2: cond2_witness.is_none(),
        cond1_witness,
        cond2_witness,
        rgrid,
        clos_tol,
        samples: samples.len(),
    })
}

/// Every region of `fine` has its hit set inside the hit set of some
/// region of `coarse`.
pub fn refines(fine: &FiniteCover, coarse: &FiniteCover) -> bool {
    let sets: Vec<HashSet<usize>> =
        coarse.regions.iter().map(|r| r.hits().iter().copied().collect()).collect();
    fine.regions
        .iter()
        .all(|r| sets.iter().any(|s| r.hits().iter().all(|i| s.contains(i))))
}

/// CSV rows `region_id, family, hits, diam_z0, …, diam_z{zmax}`.
pub fn cover_audit_csv<S: MetricSystem + ?Sized>(
    c: &FiniteCover,
    sys: &S,
    zmax: u64,
    samples: &SampleSet,
) -> Result<String, CoverError> {
    check_horizon(sys, zmax as i64)?;
    let per_z: Vec<Vec<f64>> = (0..=zmax as i64)
        .map(|z| translate_diameters(c, sys, z, samples))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["region_id".to_string(), "family".to_string(), "hits".to_string()];
    header.extend((0..=zmax).map(|z| format!("diam_z{z}")));
    w.write_record(&header).expect("in-memory write");
    for (j, r) in c.regions.iter().enumerate() {
        let mut row = vec![r.id.to_string(), r.family.to_string(), r.hits().len().to_string()];
        row.extend(per_z.iter().map(|d| format!("{:.12}", d[j])));
        w.write_record(&row).expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv"))
}

/// `(angle − lo) mod 1 ≤ len`: closed arc of length `len` starting at `lo`.
pub fn on_arc(angle: f64, lo: f64, len: f64) -> bool {
    (angle - lo).rem_euclid(1.0) <= len
}

/// Cover of a rotation's circle by `count` closed arcs `[j/count − o/2, (j+1)/count + o/2]`.
pub fn circle_arcs(
    sys: &crate::systems::DynSystem,
    count: usize,
    overlap: f64,
    samples: &SampleSet,
) -> Result<FiniteCover, CoverError> {
    if count == 0 {
        return Err(CoverError::EmptyCover);
    }
    let len = 1.0 / count as f64 + overlap;
    let regions = (0..count)
        .map(|j| {
            let lo = j as f64 / count as f64 - overlap / 2.0;
            let s = sys.clone();
            Region::from_fn(j, 0, move |p| on_arc(s.angle(p), lo, len), samples)
        })
        .collect();
    FiniteCover::new(regions, samples, CoverKind::Closed)
}
