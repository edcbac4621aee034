//! Fiber bound machinery: `γ` and the counting constants, level-set
//! combination `𝒜 ⊕_ξ B` of torus covers with intervals, the collections
//! `𝒟_j` and marking sets `S_x`, the collapsing map `ψ`, and the empirical
//! fiber multiplicity of windowed observables.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covers::{
    self, check_fine, check_refined_at, check_small, default_rgrid, on_arc, CoverError, CoverKind,
    FiniteCover, Membership, RefinedAudit, Region, SampleSet, DEFAULT_CLOS_TOL,
};
use crate::intervals::{build_interval_system, IntervalAudit, IntervalError, IntervalSystem};
use crate::kolmogorov::{kolmogorov_ostrand_cover, KoCover, KoReport, KolmogorovError};
use crate::level::{LevelError, LevelFunction};
use crate::scalar::Scalar;
use crate::systems::{DynSystem, Flow, MetricSystem, SystemPoint};
use crate::torus::{build_torus, flow_brick_cover, torus_samples, TorusError, TorusSystem};

pub type Observable = Arc<dyn Fn(&SystemPoint) -> f64 + Send + Sync>;

/// Tolerance for matching the counting constants against their closed forms.
pub const CLOSED_FORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiberError {
    #[error("need 0 ≤ d < k, got k = {k}, d = {d}")]
    BadDimension { k: String, d: String },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("level value truncation bound {bound} exceeds interval resolution {resolution}")]
    Resolution { bound: f64, resolution: f64 },
    #[error("interval [{lo}, {hi}] is not inside [0, {q})")]
    IntervalRange { lo: f64, hi: f64, q: usize },
    #[error("audited point {index} lies in W + z for some |z| ≤ l")]
    InWPlus { index: usize },
    #[error("coordinate {coord}: collapsed group {group} spans {range} under f, above δ/2 = {half}")]
    Modulus { coord: usize, group: usize, range: f64, half: f64 },
    #[error("coordinate {coord}: no free offset left for group {group}")]
    Separation { coord: usize, group: usize },
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("window {window} exceeds the system horizon {horizon}")]
    WindowTooLarge { window: u64, horizon: u64 },
    #[error("precondition fails: {0}")]
    Precondition(String),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Kolmogorov(#[from] KolmogorovError),
    #[error(transparent)]
    Torus(#[from] TorusError),
}

/// `⌊k/(k−d)⌋ · k/(k−d)`.
pub fn gamma_bound<T: Scalar>(k: T, d: T) -> Result<T, FiberError> {
    if d < T::zero() || d >= k {
        return Err(FiberError::BadDimension { k: k.to_string(), d: d.to_string() });
    }
    let r = k.clone() / (k - d);
    Ok(r.floor_scalar() * r)
}

/// `⌊γ⌋`, the integer fiber bound audited downstream.
pub fn floor_gamma<T: Scalar>(k: T, d: T) -> Result<i64, FiberError> {
    Ok(gamma_bound(k, d)?.floor_i64())
}

/// `Δ = (1 − 3q/l)(1 − 2k/((k−d)q))`.
pub fn delta_closed<T: Scalar>(k: T, d: T, q: T, l: T) -> T {
    let one = T::one();
    let two = T::from_count(2);
    let three = T::from_count(3);
    (one.clone() - three * q.clone() / l) * (one - two * k.clone() / ((k - d) * q))
}

/// `Δ* = 1 − 6k/(q(k−d))`.
pub fn delta_star_closed<T: Scalar>(k: T, d: T, q: T) -> T {
    T::one() - T::from_count(6) * k.clone() / (q * (k - d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    pub k: usize,
    pub d: f64,
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub l: usize,
    pub eps: f64,
    pub delta: f64,
}

impl FiberParams {
    /// Parameters with `m = q·k`, validated.
    pub fn new(k: usize, d: f64, n: usize, q: usize, l: usize, eps: f64, delta: f64) -> Result<Self, FiberError> {
        let p = FiberParams { k, d, n, q, m: q * k, l, eps, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FiberError> {
        let bad = |m: String| Err(FiberError::Params(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(self.d > 0.0 && self.d < self.k as f64) {
            return Err(FiberError::BadDimension { k: self.k.to_string(), d: self.d.to_string() });
        }
        if self.q <= 2 {
            return bad(format!("q must exceed 2, got {}", self.q));
        }
        if self.m != self.q * self.k {
            return bad(format!("m = {} differs from q·k = {}", self.m, self.q * self.k));
        }
        if self.l <= self.q {
            return bad(format!("l = {} must exceed q = {}", self.l, self.q));
        }
        let qd = self.q as f64 * self.d;
        if (self.n as f64) >= qd {
            return bad(format!("need n < q·d, got n = {}, q·d = {qd}", self.n));
        }
        if !(self.eps > 0.0 && self.delta > 0.0) {
            return bad("eps and delta must be positive".into());
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        gamma_bound(self.k as f64, self.d).expect("validated")
    }

    /// `m − n − 2k`, the per-window marking bound.
    pub fn window_bound(&self) -> i64 {
        self.m as i64 - self.n as i64 - 2 * self.k as i64
    }

    /// `(l/q − 3)(m − n − 2k)`.
    pub fn global_bound(&self) -> f64 {
        (self.l as f64 / self.q as f64 - 3.0) * self.window_bound() as f64
    }

    /// `l(k − d)Δ`.
    pub fn linear_bound(&self) -> f64 {
        self.l as f64 * (self.k as f64 - self.d) * self.delta_closed()
    }

    pub fn delta_closed(&self) -> f64 {
        delta_closed(self.k as f64, self.d, self.q as f64, self.l as f64)
    }

    pub fn delta_star_closed(&self) -> f64 {
        delta_star_closed(self.k as f64, self.d, self.q as f64)
    }
}

/// Families `ℱ_1, …, ℱ_count` of pieces on the torus.
pub trait FamilyCover: Send + Sync {
    fn family_count(&self) -> usize;

    /// `(family tag, piece id)` for every piece containing `p`.
    fn pieces_at(&self, p: &SystemPoint) -> Vec<(usize, usize)>;
}

impl FamilyCover for KoCover {
    fn family_count(&self) -> usize {
        self.report.m + 1
    }

    fn pieces_at(&self, p: &SystemPoint) -> Vec<(usize, usize)> {
        KoCover::pieces_at(self, p)
    }
}

/// Families whose single piece (id = tag) is the whole space; the others
/// are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformFamilies {
    pub count: usize,
    pub covering: Vec<usize>,
}

impl FamilyCover for UniformFamilies {
    fn family_count(&self) -> usize {
        self.count
    }

    fn pieces_at(&self, _: &SystemPoint) -> Vec<(usize, usize)> {
        self.covering.iter().map(|&f| (f, f)).collect()
    }
}

/// `v ∈ B + qz` with `B ⊂ [0, q)`: returns `z`.
fn level_shift(v: f64, lo: f64, hi: f64, q: usize) -> Option<i64> {
    let q = q as f64;
    let z = ((v - lo) / q).floor();
    (v - z * q <= hi).then_some(z as i64)
}

/// Evaluates `ξ` and checks its truncation bound against `resolution`.
fn level_value(xi: &LevelFunction<DynSystem>, y: &SystemPoint, resolution: f64) -> Result<f64, FiberError> {
    let v = xi.eval(y)?;
    if v.truncation_bound > 0.0 && v.truncation_bound > resolution {
        return Err(FiberError::Resolution { bound: v.truncation_bound, resolution });
    }
    Ok(v.value)
}

/// `b` values tried when testing `y ∈ A + B`: `points` evenly spaced values
/// of `B` plus the canonical `b = ξ(y) − qz`.
fn offsets(lo: f64, hi: f64, canonical: f64, points: usize) -> Vec<f64> {
    let mut bs = vec![canonical];
    if points == 1 {
        bs.push((lo + hi) / 2.0);
    } else if points > 1 {
        bs.extend((0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64));
    }
    bs
}

/// `𝒜 ⊕_ξ B`: for each `A ∈ 𝒜` and `z`, the set of `y ∈ X` with
/// `ξ(y) ∈ B + qz` and `y − b ∈ A` for some `b ∈ B`. Elements are returned
/// with `family = z` and `parents = [A.id]`.
#[allow(clippy::too_many_arguments)]
pub fn oplus_xi(
    a: &FiniteCover,
    b: (f64, f64),
    xi: &LevelFunction<DynSystem>,
    ts: &TorusSystem,
    q: usize,
    samples: &SampleSet,
    b_points: usize,
) -> Result<FiniteCover, FiberError> {
    let (lo, hi) = b;
    if !(0.0 <= lo && lo <= hi && hi < q as f64) {
        return Err(FiberError::IntervalRange { lo, hi, q });
    }
    let res = hi - lo;
    let per: Vec<Option<(i64, Vec<usize>)>> = samples
        .points
        .par_iter()
        .map(|y| -> Result<_, FiberError> {
            let v = level_value(xi, y, res)?;
            let Some(z) = level_shift(v, lo, hi, q) else { return Ok(None) };
            let bs = offsets(lo, hi, v - z as f64 * q as f64, b_points);
            let ids: Vec<usize> = (0..a.len())
                .filter(|&j| bs.iter().any(|&b| a.regions[j].contains(&ts.flow(&ts.embed(y), -b))))
                .collect();
            Ok(Some((z, ids)))
        })
        .collect::<Result<_, _>>()?;
    let mut groups: BTreeMap<(usize, i64), Vec<usize>> = BTreeMap::new();
    for (s, entry) in per.into_iter().enumerate() {
        if let Some((z, ids)) = entry {
            for j in ids {
                groups.entry((j, z)).or_default().push(s);
            }
        }
    }
    let regions = groups
        .into_iter()
        .enumerate()
        .map(|(id, ((j, z), hits))| {
            let inner = a.regions[j].membership();
            let (xi, ts) = (xi.clone(), ts.clone());
            let member: Membership = Arc::new(move |y| {
                let Ok(v) = level_value(&xi, y, res) else { return false };
                if level_shift(v, lo, hi, q) != Some(z) {
                    return false;
                }
                offsets(lo, hi, v - z as f64 * q as f64, b_points)
                    .iter()
                    .any(|&b| inner(&ts.flow(&ts.embed(y), -b)))
            });
            Region::with_hits(id, z.max(0) as usize, member, hits).with_parents(vec![a.regions[j].id])
        })
        .collect();
    Ok(FiniteCover::collection(regions, samples, CoverKind::Closed)?)
}

/// Identifies an element of `𝒟_j`: piece `piece` of `ℱ_family` combined
/// with interval `interval` of `ℰ_p` at level `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ElementKey {
    pub p: usize,
    pub family: usize,
    pub piece: usize,
    pub interval: usize,
    pub z: i64,
}

/// The collections `𝒟_j = ⋃_p ℱ_{j+(p−1)k} ⊕_ξ ℰ_p`, `1 ≤ j ≤ k`, on `X`.
#[derive(Clone)]
pub struct MarkedCollections {
    pub k: usize,
    pub q: usize,
    families: Arc<dyn FamilyCover>,
    pub intervals: IntervalSystem,
    pub xi: LevelFunction<DynSystem>,
    pub ts: TorusSystem,
    pub b_points: usize,
}

impl MarkedCollections {
    pub fn new(
        families: Arc<dyn FamilyCover>,
        intervals: IntervalSystem,
        xi: LevelFunction<DynSystem>,
        ts: TorusSystem,
        params: &FiberParams,
        b_points: usize,
    ) -> Result<Self, FiberError> {
        params.validate()?;
        if families.family_count() != params.m {
            return Err(FiberError::Shape {
                what: "family count",
                expected: params.m,
                got: families.family_count(),
            });
        }
        if intervals.q != params.q {
            return Err(FiberError::Shape { what: "interval q", expected: params.q, got: intervals.q });
        }
        Ok(MarkedCollections { k: params.k, q: params.q, families, intervals, xi, ts, b_points })
    }

    /// Elements of the `𝒟_j` containing `y`, as `(j, key)` pairs.
    pub fn covering_at(&self, y: &SystemPoint) -> Result<Vec<(usize, ElementKey)>, FiberError> {
        let v = self.xi.eval(y)?;
        let r = v.value.rem_euclid(self.q as f64);
        let Some((pi, (lo, hi))) = self.intervals.locate(r) else { return Ok(Vec::new()) };
        if v.truncation_bound > 0.0 && v.truncation_bound > hi - lo {
            return Err(FiberError::Resolution { bound: v.truncation_bound, resolution: hi - lo });
        }
        let interval = self.intervals.families[pi].iter().position(|&iv| iv == (lo, hi)).expect("located");
        let z = (v.value / self.q as f64).floor() as i64;
        let p = pi + 1;
        let mut out = BTreeSet::new();
        for b in offsets(lo, hi, r, self.b_points) {
            for (family, piece) in self.families.pieces_at(&self.ts.flow(&self.ts.embed(y), -b)) {
                let base = (p - 1) * self.k;
                if family > base && family <= base + self.k {
                    out.insert((family - base, ElementKey { p, family, piece, interval, z }));
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// `{j : y ∈ ⋃𝒟_j}`.
    pub fn marks_at(&self, y: &SystemPoint) -> Result<BTreeSet<usize>, FiberError> {
        Ok(self.covering_at(y)?.into_iter().map(|(j, _)| j).collect())
    }

    /// `𝒟_1, …, 𝒟_k` as collections with hit sets on `samples`; region
    /// `family` is the level `z`.
    pub fn collections(&self, samples: &SampleSet) -> Result<Vec<FiniteCover>, FiberError> {
        let per: Vec<Vec<(usize, ElementKey)>> = samples
            .points
            .par_iter()
            .map(|y| self.covering_at(y))
            .collect::<Result<_, _>>()?;
        let mut by_j: Vec<BTreeMap<ElementKey, Vec<usize>>> = vec![BTreeMap::new(); self.k];
        for (s, list) in per.into_iter().enumerate() {
            for (j, key) in list {
                by_j[j - 1].entry(key).or_default().push(s);
            }
        }
        by_j.into_iter()
            .enumerate()
            .map(|(j0, elems)| {
                let regions = elems
                    .into_iter()
                    .enumerate()
                    .map(|(id, (key, hits))| {
                        let me = self.clone();
                        let member: Membership = Arc::new(move |y| {
                            me.covering_at(y).map(|v| v.contains(&(j0 + 1, key))).unwrap_or(false)
                        });
                        Region::with_hits(id, key.z.max(0) as usize, member, hits)
                            .with_parents(vec![key.family, key.piece])
                    })
                    .collect();
                Ok(FiniteCover::collection(regions, samples, CoverKind::Closed)?)
            })
            .collect()
    }
}

/// `𝒟_W`: closures of `W + z` on `X` for `|z| ≤ span`, as balls about the
/// orbit of `w`.
pub fn translates_of_w(
    sys: &DynSystem,
    w: &SystemPoint,
    radius: f64,
    span: i64,
    samples: &SampleSet,
) -> Result<FiniteCover, FiberError> {
    let regions = (-span..=span)
        .enumerate()
        .map(|(id, z)| {
            let (s, c) = (sys.clone(), sys.act(w, z));
            Region::from_fn(id, 0, move |p| s.dist(p, &c) <= radius, samples).with_parents(vec![id])
        })
        .collect();
    Ok(FiniteCover::collection(regions, samples, CoverKind::Closed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollectionAudit {
    pub elements: Vec<usize>,
    /// Samples in two elements of the same `𝒟_j`.
    pub overlap_samples: usize,
    pub max_diameter: f64,
    pub eps: f64,
    /// Elements whose hits touch two or more elements of `𝒟_W`.
    pub multi_w: usize,
}

impl CollectionAudit {
    pub fn passed(&self) -> bool {
        self.overlap_samples == 0 && self.max_diameter < self.eps && self.multi_w == 0
    }
}

/// Disjointness, diameter and `𝒟_W`-contact audit of the `𝒟_j` on samples.
pub fn audit_collections(
    ds: &[FiniteCover],
    d_w: &FiniteCover,
    sys: &DynSystem,
    eps: f64,
    samples: &SampleSet,
) -> CollectionAudit {
    let w_inc = d_w.incidence(samples.len());
    let mut overlap = 0;
    let mut max_diameter = 0.0f64;
    let mut multi_w = 0;
    for d in ds {
        overlap += d.incidence(samples.len()).iter().filter(|v| v.len() > 1).count();
        max_diameter = max_diameter.max(covers::mesh(d, sys, samples));
        multi_w += d
            .regions
            .iter()
            .filter(|r| {
                let touched: BTreeSet<usize> = r.hits().iter().flat_map(|&i| w_inc[i].iter().copied()).collect();
                touched.len() > 1
            })
            .count();
    }
    CollectionAudit {
        elements: ds.iter().map(|d| d.len()).collect(),
        overlap_samples: overlap,
        max_diameter,
        eps,
        multi_w,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointMarking {
    pub index: usize,
    pub xi: f64,
    /// `|S_x|`.
    pub marks: usize,
    /// `(z, count)` for each window `[zq, (z+1)q) ⊂ [ξ(x), ξ(x)+l)`.
    pub windows: Vec<(i64, usize)>,
}

impl PointMarking {
    pub fn min_window(&self) -> Option<usize> {
        self.windows.iter().map(|w| w.1).min()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkingReport {
    pub params: FiberParams,
    /// `|S|` by enumeration.
    pub s_size: usize,
    /// `|S_*|` by enumeration.
    pub s_star_size: usize,
    /// `Δ` recomputed as `(l/q − 3)(q(k−d) − 2k) / (l(k−d))`.
    pub delta: f64,
    pub delta_closed: f64,
    /// `Δ*` recomputed as `(q(k−d) − 6k) / (q(k−d))`.
    pub delta_star: f64,
    pub delta_star_closed: f64,
    pub gamma: f64,
    pub floor_gamma: i64,
    pub window_bound: i64,
    pub global_bound: f64,
    pub linear_bound: f64,
    pub points: Vec<PointMarking>,
    pub marking_min: Option<usize>,
    pub window_min: Option<usize>,
    pub window_failures: usize,
    pub global_failures: usize,
}

impl MarkingReport {
    pub fn closed_forms_match(&self) -> bool {
        let p = &self.params;
        (self.delta - self.delta_closed).abs() <= CLOSED_FORM_TOL
            && (self.delta_star - self.delta_star_closed).abs() <= CLOSED_FORM_TOL
            && self.s_size == p.l * p.k
            && self.s_star_size == p.k * (p.q - 2)
    }

    pub fn passed(&self) -> bool {
        self.window_failures == 0 && self.global_failures == 0 && self.closed_forms_match()
    }
}

/// Marking sets `S_x = {(i, j) : 0 ≤ i < l, x + i ∈ ⋃𝒟_j}` for points of
/// `X⁻ = X ∖ (W + [−l, l])`, with the per-window and global counts.
pub fn marking_report(
    x_list: &[SystemPoint],
    mc: &MarkedCollections,
    w: &Region,
    params: &FiberParams,
) -> Result<MarkingReport, FiberError> {
    params.validate()?;
    let (l, q, k) = (params.l as i64, params.q as i64, params.k);
    let sys = mc.xi.sys.clone();
    for (index, x) in x_list.iter().enumerate() {
        if (-l..=l).any(|z| w.contains(&sys.act(x, -z))) {
            return Err(FiberError::InWPlus { index });
        }
    }
    let s: BTreeSet<(i64, usize)> = (0..l).flat_map(|i| (1..=k).map(move |j| (i, j))).collect();
    let s_star: BTreeSet<(i64, usize)> = (0..=q - 3).flat_map(|i| (1..=k).map(move |j| (i, j))).collect();

    let points: Vec<PointMarking> = x_list
        .par_iter()
        .enumerate()
        .map(|(index, x)| -> Result<PointMarking, FiberError> {
            let v = mc.xi.value(x)?;
            let mut sx: BTreeSet<(i64, usize)> = BTreeSet::new();
            for i in 0..l {
                for j in mc.marks_at(&sys.act(x, i))? {
                    sx.insert((i, j));
                }
            }
            debug_assert!(sx.is_subset(&s));
            let mut windows = Vec::new();
            let qf = q as f64;
            let mut z = (v / qf).ceil() as i64;
            while ((z + 1) * q) as f64 <= v + l as f64 - f64::EPSILON * v.abs().max(1.0) {
                let (lo, hi) = ((z * q) as f64, ((z + 1) * q) as f64);
                let count = sx.iter().filter(|(i, _)| v + *i as f64 >= lo && v + (*i as f64) < hi).count();
                windows.push((z, count));
                z += 1;
            }
            Ok(PointMarking { index, xi: v, marks: sx.len(), windows })
        })
        .collect::<Result<_, _>>()?;

    let (kf, qf, lf) = (params.k as f64, params.q as f64, params.l as f64);
    let gap = kf - params.d;
    let window_bound = params.window_bound();
    let global_bound = params.global_bound();
    Ok(MarkingReport {
        params: params.clone(),
        s_size: s.len(),
        s_star_size: s_star.len(),
        delta: (lf / qf - 3.0) * (qf * gap - 2.0 * kf) / (lf * gap),
        delta_closed: params.delta_closed(),
        delta_star: (qf * gap - 6.0 * kf) / (qf * gap),
        delta_star_closed: params.delta_star_closed(),
        gamma: params.gamma(),
        floor_gamma: floor_gamma(kf, params.d)?,
        window_bound,
        global_bound,
        linear_bound: params.linear_bound(),
        marking_min: points.iter().map(|p| p.marks).min(),
        window_min: points.iter().filter_map(|p| p.min_window()).min(),
        window_failures: points
            .iter()
            .filter(|p| p.windows.iter().any(|&(_, c)| (c as i64) < window_bound))
            .count(),
        global_failures: points.iter().filter(|p| (p.marks as f64) < global_bound).count(),
        points,
    })
}

/// Fixture with known counts: families `n+1, …, m` cover everything, the
/// rest are empty, and `ℰ_p` for `p ≤ q − 2` is one closed interval of
/// length 1, so `ξ(x) + ℤ` meets exactly `q − 2` of the `ℰ_p` in each
/// window. The marking count per window is then `m − n − 2k` exactly when
/// `n ≤ (q − 2)k`.
pub fn synthetic_fixture(params: &FiberParams) -> Result<(UniformFamilies, IntervalSystem), FiberError> {
    params.validate()?;
    let fams = UniformFamilies { count: params.m, covering: (params.n + 1..=params.m).collect() };
    let g = 1.0 / (params.q as f64 - 2.0);
    let families = (1..=params.q)
        .map(|p| {
            if p + 2 <= params.q {
                let lo = (p - 1) as f64 * (1.0 + g);
                vec![(lo, lo + 1.0)]
            } else {
                Vec::new()
            }
        })
        .collect();
    Ok((fams, IntervalSystem::from_families(params.q, families)?))
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// A set of collapsed elements sharing one value of `ψ_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiGroup {
    pub value: f64,
    /// `(source, region id)`, source 0 for `𝒟_W` and 1 for `𝒟_i`.
    pub elements: Vec<(usize, usize)>,
    pub hits: Vec<usize>,
    /// First sample hit.
    pub representative: usize,
    pub f_range: (f64, f64),
}

pub struct PsiCoordinate {
    pub groups: Vec<PsiGroup>,
    pub eta: f64,
    f: Observable,
    members: Vec<(Membership, usize)>,
    group_points: Vec<Vec<SystemPoint>>,
    /// `ψ_i` at every sample.
    pub sample_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiAudit {
    pub groups: Vec<usize>,
    /// Samples of a group whose value differs from the group value.
    pub constancy_violations: usize,
    /// Largest `|ψ_i − f_i|` over samples.
    pub max_deviation: f64,
    pub delta: f64,
    /// Smallest gap between values of distinct groups.
    pub min_separation: f64,
    pub eta: f64,
    /// Pairs of distinct groups with gaps below `η`.
    pub separation_violations: usize,
    /// Largest `f_i` range over a group.
    pub modulus_range: f64,
    /// Largest `|ψ_i(a) − ψ_i(b)| / d(a, b)` over sample pairs within the
    /// blend radius.
    pub sampled_slope: f64,
}

impl PsiAudit {
    pub fn passed(&self) -> bool {
        self.constancy_violations == 0 && self.max_deviation <= self.delta && self.separation_violations == 0
    }
}

/// `ψ = (ψ_1, …, ψ_k)`: constant on each element of `𝒟_W` and `𝒟_i`,
/// distinct on separated groups, `δ`-close to `f`.
pub struct CollapsedMap<S> {
    sys: S,
    pub coords: Vec<PsiCoordinate>,
    pub delta: f64,
    pub blend_radius: f64,
    pub audit: PsiAudit,
}

impl<S: MetricSystem> CollapsedMap<S> {
    /// `ψ_i(p)`: the group value inside a collapsed element, otherwise `f_i`
    /// pulled toward the nearest group value within the blend radius.
    pub fn eval(&self, i: usize, p: &SystemPoint) -> f64 {
        let c = &self.coords[i];
        if let Some((_, g)) = c.members.iter().find(|(m, _)| m(p)) {
            return c.groups[*g].value;
        }
        blend(&self.sys, c, p, self.blend_radius)
    }

    pub fn observables(self: &Arc<Self>) -> Vec<Observable>
    where
        S: 'static,
    {
        (0..self.coords.len())
            .map(|i| {
                let me = Arc::clone(self);
                Arc::new(move |p: &SystemPoint| me.eval(i, p)) as Observable
            })
            .collect()
    }
}

fn blend<S: MetricSystem>(sys: &S, c: &PsiCoordinate, p: &SystemPoint, radius: f64) -> f64 {
    let fp = (c.f)(p);
    let nearest = c
        .group_points
        .iter()
        .enumerate()
        .map(|(g, pts)| (pts.iter().map(|q| sys.dist(p, q)).fold(f64::INFINITY, f64::min), g))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    match nearest {
        Some((d, g)) if d < radius => {
            let w = 1.0 - d / radius;
            fp + w * (c.groups[g].value - fp)
        }
        _ => fp,
    }
}

/// Offset indices `0, ±1, ±2, …`, signs flipped for odd seeds.
fn offset_sequence(limit: i64, seed: u64) -> impl Iterator<Item = i64> {
    let sign = if seed % 2 == 1 { -1 } else { 1 };
    std::iter::once(0).chain((1..=limit).flat_map(move |t| [sign * t, -sign * t]))
}

#[allow(clippy::too_many_arguments)]
pub fn build_psi<S: MetricSystem + Clone + 'static>(
    sys: &S,
    f: &[Observable],
    d_w: &FiniteCover,
    d: &[FiniteCover],
    delta: f64,
    blend_radius: f64,
    samples: &SampleSet,
    seed: u64,
) -> Result<CollapsedMap<S>, FiberError> {
    if f.len() != d.len() {
        return Err(FiberError::Shape { what: "collections", expected: f.len(), got: d.len() });
    }
    if !(delta > 0.0 && blend_radius > 0.0) {
        return Err(FiberError::Params("delta and blend radius must be positive".into()));
    }
    let n = samples.len();
    let mut coords = Vec::with_capacity(f.len());
    for (i, (fi, di)) in f.iter().zip(d).enumerate() {
        let fv: Vec<f64> = samples.points.par_iter().map(|p| fi(p)).collect();
        let elems: Vec<(usize, &Region)> =
            d_w.regions.iter().map(|r| (0, r)).chain(di.regions.iter().map(|r| (1, r))).collect();
        let live: Vec<usize> = (0..elems.len()).filter(|&e| !elems[e].1.hits().is_empty()).collect();
        // elements sharing a sample must share a value
        let mut uf = UnionFind::new(elems.len());
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for &e in &live {
            for &s in elems[e].1.hits() {
                match owner[s] {
                    Some(o) => uf.union(o, e),
                    None => owner[s] = Some(e),
                }
            }
        }
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &e in &live {
            by_root.entry(uf.find(e)).or_default().push(e);
        }
        let mut raw: Vec<(Vec<usize>, Vec<usize>)> = by_root
            .into_values()
            .map(|es| {
                let hits: BTreeSet<usize> = es.iter().flat_map(|&e| elems[e].1.hits().iter().copied()).collect();
                (es, hits.into_iter().collect())
            })
            .collect();
        raw.sort_by_key(|(_, hits)| hits[0]);
        let count = raw.len();
        let eta = delta / (4.0 * count.max(1) as f64);
        let half = delta / 2.0;
        let mut groups: Vec<PsiGroup> = Vec::with_capacity(count);
        for (g, (es, hits)) in raw.into_iter().enumerate() {
            let (lo, hi) = hits.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(fv[s]), b.max(fv[s])));
            if hi - lo > half {
                return Err(FiberError::Modulus { coord: i, group: g, range: hi - lo, half });
            }
            let mid = (lo + hi) / 2.0;
            let value = offset_sequence(count as i64, seed)
                .map(|o| mid + o as f64 * eta)
                .find(|v| groups.iter().all(|h| (h.value - v).abs() >= eta))
                .ok_or(FiberError::Separation { coord: i, group: g })?;
            groups.push(PsiGroup {
                value,
                elements: es.iter().map(|&e| (elems[e].0, elems[e].1.id)).collect(),
                representative: hits[0],
                hits,
                f_range: (lo, hi),
            });
        }
        let mut group_of = vec![None; n];
        for (g, grp) in groups.iter().enumerate() {
            for &s in &grp.hits {
                group_of[s] = Some(g);
            }
        }
        let members: Vec<(Membership, usize)> = groups
            .iter()
            .enumerate()
            .flat_map(|(g, grp)| {
                grp.elements.iter().map(move |&(src, id)| (src, id, g)).collect::<Vec<_>>()
            })
            .map(|(src, id, g)| {
                let cover = if src == 0 { d_w } else { di };
                (cover.region(id).expect("element id").membership(), g)
            })
            .collect();
        let group_points: Vec<Vec<SystemPoint>> =
            groups.iter().map(|g| g.hits.iter().map(|&s| samples.points[s].clone()).collect()).collect();
        let mut coord = PsiCoordinate { groups, eta, f: Arc::clone(fi), members, group_points, sample_values: Vec::new() };
        coord.sample_values = (0..n)
            .into_par_iter()
            .map(|s| match group_of[s] {
                Some(g) => coord.groups[g].value,
                None => blend(sys, &coord, &samples.points[s], blend_radius),
            })
            .collect();
        coords.push(coord);
    }

    let audit = psi_audit(sys, f, &coords, delta, blend_radius, samples);
    Ok(CollapsedMap { sys: sys.clone(), coords, delta, blend_radius, audit })
}

fn psi_audit<S: MetricSystem>(
    sys: &S,
    f: &[Observable],
    coords: &[PsiCoordinate],
    delta: f64,
    blend_radius: f64,
    samples: &SampleSet,
) -> PsiAudit {
    let mut constancy = 0;
    let mut max_dev = 0.0f64;
    let mut min_sep = f64::INFINITY;
    let mut sep_viol = 0;
    let mut modulus = 0.0f64;
    let mut eta = f64::INFINITY;
    for (c, fi) in coords.iter().zip(f) {
        eta = eta.min(c.eta);
        for g in &c.groups {
            constancy += g.hits.iter().filter(|&&s| c.sample_values[s] != g.value).count();
            modulus = modulus.max(g.f_range.1 - g.f_range.0);
        }
        max_dev = samples
            .points
            .iter()
            .zip(&c.sample_values)
            .map(|(p, v)| (v - fi(p)).abs())
            .fold(max_dev, f64::max);
        let mut vals: Vec<f64> = c.groups.iter().map(|g| g.value).collect();
        vals.sort_by(f64::total_cmp);
        for w in vals.windows(2) {
            let gap = w[1] - w[0];
            min_sep = min_sep.min(gap);
            if gap < c.eta * (1.0 - 1e-9) {
                sep_viol += 1;
            }
        }
    }
    let pts = &samples.points;
    let slope = (0..pts.len())
        .into_par_iter()
        .map(|a| {
            let mut best = 0.0f64;
            for b in a + 1..pts.len() {
                let dd = sys.dist(&pts[a], &pts[b]);
                if dd > 0.0 && dd <= blend_radius {
                    for c in coords {
                        best = best.max((c.sample_values[a] - c.sample_values[b]).abs() / dd);
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    PsiAudit {
        groups: coords.iter().map(|c| c.groups.len()).collect(),
        constancy_violations: constancy,
        max_deviation: max_dev,
        delta,
        min_separation: min_sep,
        eta,
        separation_violations: sep_viol,
        modulus_range: modulus,
        sampled_slope: slope,
    }
}

/// Closed arcs of the given radius about the given angles, as a collection.
pub fn arc_collection(
    sys: &DynSystem,
    centres: &[f64],
    radius: f64,
    samples: &SampleSet,
) -> Result<FiniteCover, FiberError> {
    let regions = centres
        .iter()
        .enumerate()
        .map(|(id, &c)| {
            let s = sys.clone();
            Region::from_fn(id, 0, move |p| on_arc(s.angle(p), c - radius, 2.0 * radius), samples)
        })
        .collect();
    Ok(FiniteCover::collection(regions, samples, CoverKind::Closed)?)
}

/// `(1 + cos 2πθ) / 2` on a rotation.
pub fn cosine_observable(sys: &DynSystem) -> Observable {
    let s = sys.clone();
    Arc::new(move |p| (1.0 + (2.0 * PI * s.angle(p)).cos()) / 2.0)
}

/// `Σ_{r<depth} c_r(x) · 2^{−(r+1)}` on a Sturmian system, `c_r` the symbol
/// at position `r`.
pub fn coding_observable(sys: &DynSystem, depth: usize) -> Observable {
    let s = sys.clone();
    Arc::new(move |p| {
        (0..depth)
            .map(|r| f64::from(s.coding(p, r as i64)) * 0.5f64.powi(r as i32 + 1))
            .sum()
    })
}

/// Classes up to this size get an exact largest separated subset.
pub const EXACT_NET_LIMIT: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberReport {
    pub max_mult: usize,
    pub classes: usize,
    /// Class size → number of classes of that size.
    pub class_sizes: BTreeMap<usize, usize>,
    /// Sample indices of a largest separated subset.
    pub witness: Vec<usize>,
    /// Whether every class was small enough for the exact subset search.
    pub exact: bool,
    pub window: u64,
    pub sep: f64,
    pub tol: f64,
    pub samples: usize,
}

/// Size and members of a largest subset of `idx` with pairwise distances
/// above `sep`; exact by branch and bound.
fn largest_separated<S: MetricSystem + ?Sized>(sys: &S, samples: &SampleSet, idx: &[usize], sep: f64) -> Vec<usize> {
    let n = idx.len();
    let adj: Vec<u64> = (0..n)
        .map(|a| {
            (0..n)
                .filter(|&b| b != a && sys.dist(&samples.points[idx[a]], &samples.points[idx[b]]) <= sep)
                .fold(0u64, |m, b| m | 1 << b)
        })
        .collect();
    fn search(cands: u64, chosen: u64, adj: &[u64], best: &mut u64) {
        if cands == 0 {
            if chosen.count_ones() > best.count_ones() {
                *best = chosen;
            }
            return;
        }
        if chosen.count_ones() + cands.count_ones() <= best.count_ones() {
            return;
        }
        let v = cands.trailing_zeros() as usize;
        let bit = 1u64 << v;
        search(cands & !bit & !adj[v], chosen | bit, adj, best);
        search(cands & !bit, chosen, adj, best);
    }
    let mut best = 0u64;
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    search(all, 0, &adj, &mut best);
    (0..n).filter(|&b| best >> b & 1 == 1).map(|b| idx[b]).collect()
}

fn greedy_separated<S: MetricSystem + ?Sized>(sys: &S, samples: &SampleSet, idx: &[usize], sep: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for &i in idx {
        if chosen.iter().all(|&c| sys.dist(&samples.points[i], &samples.points[c]) > sep) {
            chosen.push(i);
        }
    }
    chosen
}

/// Groups samples whose windowed values `(f(x+z))_{|z|≤window}` agree within
/// `tol` (transitively), then takes the largest `sep`-separated subset of
/// each class.
pub fn fiber_multiplicity<S: MetricSystem + ?Sized>(
    sys: &S,
    f: &[Observable],
    window: u64,
    sep: f64,
    tol: f64,
    samples: &SampleSet,
) -> Result<FiberReport, FiberError> {
    if window > sys.horizon() {
        return Err(FiberError::WindowTooLarge { window, horizon: sys.horizon() });
    }
    if f.is_empty() {
        return Err(FiberError::Shape { what: "observables", expected: 1, got: 0 });
    }
    let w = window as i64;
    let vals: Vec<Vec<f64>> = samples
        .points
        .par_iter()
        .map(|p| {
            (-w..=w)
                .flat_map(|z| {
                    let q = sys.act(p, z);
                    f.iter().map(move |fi| fi(&q))
                })
                .collect()
        })
        .collect();
    let lead = (w as usize) * f.len();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a][lead].total_cmp(&vals[b][lead]).then(a.cmp(&b)));
    let vals = &vals;
    let close = move |a: usize, b: usize| vals[a].iter().zip(&vals[b]).all(|(x, y)| (x - y).abs() <= tol);
    let pairs: Vec<(usize, usize)> = (0..order.len())
        .into_par_iter()
        .flat_map_iter(|ia| {
            let a = order[ia];
            let close = &close;
            order[ia + 1..]
                .iter()
                .take_while(move |&&b| vals[b][lead] - vals[a][lead] <= tol)
                .filter(move |&&b| close(a, b))
                .map(move |&b| (a, b))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut uf = UnionFind::new(vals.len());
    for (a, b) in pairs {
        uf.union(a, b);
    }
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in 0..vals.len() {
        classes.entry(uf.find(s)).or_default().push(s);
    }
    let mut class_sizes = BTreeMap::new();
    let mut exact = true;
    let mut witness: Vec<usize> = Vec::new();
    for members in classes.values() {
        *class_sizes.entry(members.len()).or_insert(0) += 1;
        let net = if members.len() <= EXACT_NET_LIMIT {
            largest_separated(sys, samples, members, sep)
        } else {
            exact = false;
            greedy_separated(sys, samples, members, sep)
        };
        if net.len() > witness.len() {
            witness = net;
        }
    }
    Ok(FiberReport {
        max_mult: witness.len(),
        classes: classes.len(),
        class_sizes,
        witness,
        exact,
        window,
        sep,
        tol,
        samples: samples.len(),
    })
}

/// Knobs of the rotation end-to-end marking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub torus_samples: usize,
    pub x_samples: usize,
    pub brick_rows: usize,
    pub brick_cols: usize,
    pub brick_kappa: f64,
    pub interval_mesh: f64,
    /// Extra `b` values per interval in the `⊕_ξ` membership test.
    pub b_points: usize,
    /// Angle of the centre `w` of `W`.
    pub w_angle: f64,
    /// Starting radius of `W`; halved until the smallness and disjointness
    /// audits pass.
    pub w_radius: f64,
    /// Translate grid per unit of `r` in the smallness and refinement audits.
    pub rgrid_density: f64,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            torus_samples: 1500,
            x_samples: 400,
            brick_rows: 8,
            brick_cols: 8,
            brick_kappa: 0.01,
            interval_mesh: 0.2,
            b_points: 0,
            w_angle: 0.5,
            w_radius: 0.05,
            rgrid_density: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub u_order: usize,
    pub u_fine: bool,
    pub w_radius: f64,
    pub w_halvings: usize,
    pub w_small: bool,
    pub d_w_disjoint: bool,
    /// `(ε, 2l)`-refinement of the brick cover at `W` on torus samples.
    pub refined: RefinedAudit,
    pub ko: KoReport,
    pub intervals: IntervalAudit,
    pub collections: CollectionAudit,
    pub x_minus: usize,
    pub x_excluded: usize,
}

pub struct MarkingPipeline {
    pub ts: TorusSystem,
    pub marked: MarkedCollections,
    pub w: Region,
    pub w_centre: SystemPoint,
    pub x_minus: Vec<SystemPoint>,
    pub x_samples: SampleSet,
    pub collections: Vec<FiniteCover>,
    pub d_w: FiniteCover,
    pub report: PipelineReport,
}

/// Builds every ingredient of the marking argument on the mapping torus of
/// a rotation: a brick cover `U` of order 3, its Kolmogorov–Ostrand
/// refinement into `m` families, `W`, `ξ`, the interval system, and the
/// collections `𝒟_j`. Fineness of `U` is required; refinement at `W` is
/// audited and reported.
pub fn rotation_marking_pipeline(
    sys: &DynSystem,
    params: &FiberParams,
    opts: &PipelineOptions,
) -> Result<MarkingPipeline, FiberError> {
    params.validate()?;
    let ts = build_torus(sys.clone());
    let tsamp = torus_samples(&ts, opts.torus_samples, opts.seed);
    let u = flow_brick_cover(&ts, opts.brick_rows, opts.brick_cols, opts.brick_kappa, &tsamp)?;
    let u_order = covers::order_profile(&u, &tsamp)?.ord;
    if u_order > params.n {
        return Err(FiberError::Precondition(format!("ord U = {u_order} exceeds n = {}", params.n)));
    }
    let q = params.q as f64;
    let grid = |beta: f64| ((opts.rgrid_density * beta).ceil() as usize + 1).max(default_rgrid(0.0));
    let u_fine = check_fine(&u, &ts, params.eps, q, &tsamp, grid(q))?;
    if !u_fine {
        return Err(FiberError::Precondition(format!("U is not ({}, {})-fine", params.eps, params.q)));
    }

    let w_centre = sys.point_at(&[opts.w_angle]);
    let span = 2 * params.l as i64;
    let orbit_gap = (1..=2 * span)
        .map(|z| sys.dist(&w_centre, &sys.act(&w_centre, z)))
        .fold(f64::INFINITY, f64::min);
    let l3 = 3.0 * params.l as f64;
    let mut radius = opts.w_radius;
    let mut halvings = 0;
    let (w_small, d_w_disjoint) = loop {
        let wt = crate::torus::ball(&ts, 0, ts.embed(&w_centre), radius, &tsamp);
        let small = check_small(&wt, &ts, params.eps, l3, &tsamp, grid(2.0 * l3))?;
        let disjoint = 2.0 * radius < orbit_gap;
        if (small && disjoint) || halvings == 40 {
            break (small, disjoint);
        }
        radius /= 2.0;
        halvings += 1;
    };
    let w_torus = crate::torus::ball(&ts, 0, ts.embed(&w_centre), radius, &tsamp);
    let refined = check_refined_at(
        &u,
        &w_torus,
        &ts,
        params.eps,
        2.0 * params.l as f64,
        &tsamp,
        grid(4.0 * params.l as f64),
        DEFAULT_CLOS_TOL,
    )?;

    let ko = kolmogorov_ostrand_cover(&ts, &u, params.m - 1, &tsamp, opts.seed)?;
    let ko_report = ko.report.clone();
    let intervals = build_interval_system(params.q, opts.interval_mesh, opts.seed)?;
    let interval_audit = intervals.audit(10_000);

    let x_samples = SampleSet::draw(sys, opts.x_samples, opts.seed + 1);
    let xi = LevelFunction::ball(sys.clone(), w_centre.clone(), radius, &x_samples)?;
    let w = xi.u.clone();
    let l = params.l as i64;
    let x_minus: Vec<SystemPoint> = x_samples
        .points
        .iter()
        .filter(|x| !(-l..=l).any(|z| w.contains(&sys.act(x, -z))))
        .cloned()
        .collect();
    let marked = MarkedCollections::new(Arc::new(ko), intervals, xi, ts.clone(), params, opts.b_points)?;
    let collections = marked.collections(&x_samples)?;
    let d_w = translates_of_w(sys, &w_centre, radius, span, &x_samples)?;
    let coll_audit = audit_collections(&collections, &d_w, sys, params.eps, &x_samples);

    let report = PipelineReport {
        u_order,
        u_fine,
        w_radius: radius,
        w_halvings: halvings,
        w_small,
        d_w_disjoint,
        refined,
        ko: ko_report,
        intervals: interval_audit,
        collections: coll_audit,
        x_minus: x_minus.len(),
        x_excluded: x_samples.len() - x_minus.len(),
    };
    Ok(MarkingPipeline { ts, marked, w, w_centre, x_minus, x_samples, collections, d_w, report })
}
