//! The mapping torus `X ×_ℤ ℝ` of a system, its ℝ-action, and the covers
//! built on it: slab grids and their quotient images, shifted chains, and
//! brick covers of order three.
//!
//! Points are `(x, t)` with `t ∈ [0, 1)`. Flowing past `t = 1` moves the base
//! point forward: `(x, 1)` is the same point as `(x + 1, 0)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::covers::{
    self, join_with_shifts, on_arc, order_profile, CoverError, CoverKind, FiniteCover, Membership,
    Region, SampleSet,
};
use crate::systems::{DynSystem, Flow, MetricSystem, SystemDescriptor, SystemPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("base system is not a circle rotation")]
    NotRotation,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("lifted cover order {ord_c} or off-X order {off_x_ord} exceeds the bound for ord B = {ord_b}")]
    LiftOrder { ord_b: usize, ord_c: usize, off_x_ord: usize },
    #[error("precondition fails: mesh(C + {r}) = {mesh} is not below {eps}")]
    Precondition { r: f64, mesh: f64, eps: f64 },
    #[error(transparent)]
    Cover(#[from] CoverError),
}

#[derive(Debug, Clone)]
pub struct TorusSystem {
    base: DynSystem,
}

pub fn build_torus(sys: DynSystem) -> TorusSystem {
    TorusSystem { base: sys }
}

/// `(x, t)` as stored, without normalising.
pub fn split(p: &SystemPoint) -> (&SystemPoint, f64) {
    match p {
        SystemPoint::Torus(x, t) => (x, *t),
        other => panic!("expected a torus point, got {:?}", other.kind()),
    }
}

impl TorusSystem {
    pub fn base(&self) -> &DynSystem {
        &self.base
    }

    /// `(x + ⌊s⌋, frac s)`.
    pub fn normalize(&self, x: &SystemPoint, s: f64) -> SystemPoint {
        let mut k = s.floor();
        let mut t = s - k;
        if t >= 1.0 {
            // rounding of a tiny negative s
            t = 0.0;
            k += 1.0;
        }
        SystemPoint::Torus(Box::new(self.base.act(x, k as i64)), t)
    }

    /// `X` sits inside the torus as `t = 0`.
    pub fn embed(&self, x: &SystemPoint) -> SystemPoint {
        SystemPoint::Torus(Box::new(x.clone()), 0.0)
    }

    /// Projection to `S¹ = ℝ/ℤ`.
    pub fn pi(&self, p: &SystemPoint) -> f64 {
        split(p).1
    }

    /// Coordinates `(frac(θ + tα), t)` on the standard 2-torus, in which the
    /// flow is the linear flow in direction `(α, 1)`. Rotation bases only.
    pub fn standard_coords(&self, p: &SystemPoint) -> Result<(f64, f64), TorusError> {
        let alpha = self.rotation_alpha()?;
        let (x, t) = split(p);
        Ok(((self.base.angle(x) + t * alpha).rem_euclid(1.0), t))
    }

    fn rotation_alpha(&self) -> Result<f64, TorusError> {
        if self.base.descriptor().kind != "rotation" {
            return Err(TorusError::NotRotation);
        }
        Ok(self.base.alpha().expect("rotation has a rotation number").to_f64())
    }
}

impl MetricSystem for TorusSystem {
    fn act(&self, p: &SystemPoint, z: i64) -> SystemPoint {
        let (x, t) = split(p);
        SystemPoint::Torus(Box::new(self.base.act(x, z)), t)
    }

    /// `min_{|j|≤2} max(d_X(x + j, y), |t − j − s|)`, using
    /// `(x, t) = (x + j, t − j)`.
    fn dist(&self, a: &SystemPoint, b: &SystemPoint) -> f64 {
        let (x, t) = split(a);
        let (y, s) = split(b);
        (-2..=2i64)
            .map(|j| {
                let dt = (t - j as f64 - s).abs();
                if dt >= 1.5 {
                    return f64::INFINITY;
                }
                self.base.dist(&self.base.act(x, j), y).max(dt)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn param_dim(&self) -> usize {
        self.base.param_dim() + 1
    }

    fn point_at(&self, u: &[f64]) -> SystemPoint {
        let k = self.base.param_dim();
        SystemPoint::Torus(Box::new(self.base.point_at(&u[..k])), u[k].rem_euclid(1.0))
    }

    fn descriptor(&self) -> SystemDescriptor {
        let b = self.base.descriptor();
        SystemDescriptor {
            kind: "torus".into(),
            parameters: json!({ "base": b }),
            seed: b.seed,
            minimal: false,
        }
    }

    fn horizon(&self) -> u64 {
        self.base.horizon()
    }
}

impl Flow for TorusSystem {
    fn flow(&self, p: &SystemPoint, r: f64) -> SystemPoint {
        let (x, t) = split(p);
        self.normalize(x, t + r)
    }
}

/// Low-discrepancy torus sample in which every fourth point is moved to
/// `t = 0`, so that the copy of `X` is represented.
pub fn torus_samples(ts: &TorusSystem, n: usize, seed: u64) -> SampleSet {
    let pts = ts
        .sample(n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, p)| if i % 4 == 3 { ts.embed(split(&p).0) } else { p })
        .collect();
    SampleSet::from_points(format!("torus-{n}-{seed}"), pts)
}

/// Slab representatives of torus samples: each `(x, t)` itself, plus
/// `(x − 1, 1)` when `t = 0`. Slab points may carry `t = 1`.
pub fn slab_samples(ts: &TorusSystem, samples: &SampleSet) -> SampleSet {
    let mut pts = samples.points.clone();
    for p in &samples.points {
        let (x, t) = split(p);
        if t == 0.0 {
            pts.push(SystemPoint::Torus(Box::new(ts.base.act(x, -1)), 1.0));
        }
    }
    SampleSet::from_points(format!("{}-slab", samples.id), pts)
}

fn interval_hit(t: f64, lo: f64, hi: f64) -> bool {
    t >= lo && t <= hi
}

/// Closed grid cover of the slab `X × [0, 1]`: `arcs` base arcs times
/// `cells` intervals in `t`, each widened by `overlap/2` on both sides.
pub fn slab_grid_cover(
    ts: &TorusSystem,
    arcs: usize,
    cells: usize,
    arc_overlap: f64,
    cell_overlap: f64,
    slab: &SampleSet,
) -> Result<FiniteCover, TorusError> {
    if arcs == 0 || cells == 0 {
        return Err(TorusError::BadGrid(format!("{arcs} arcs × {cells} cells")));
    }
    let alen = 1.0 / arcs as f64 + arc_overlap;
    let mut regions = Vec::with_capacity(arcs * cells);
    for a in 0..arcs {
        let alo = a as f64 / arcs as f64 - arc_overlap / 2.0;
        for c in 0..cells {
            let lo = c as f64 / cells as f64 - cell_overlap / 2.0;
            let hi = (c + 1) as f64 / cells as f64 + cell_overlap / 2.0;
            let base = ts.base.clone();
            let member = move |p: &SystemPoint| {
                let (x, t) = split(p);
                interval_hit(t, lo, hi) && on_arc(base.angle(x), alo, alen)
            };
            regions.push(Region::from_fn(a * cells + c, 0, member, slab));
        }
    }
    Ok(FiniteCover::new(regions, slab, CoverKind::Closed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftReport {
    pub ord_b: usize,
    pub ord_c: usize,
    /// Largest count over samples with `t ≠ 0`.
    pub off_x_ord: usize,
    pub on_x_samples: usize,
    pub off_x_samples: usize,
}

impl LiftReport {
    pub fn passed(&self) -> bool {
        self.ord_c <= 2 * self.ord_b && self.off_x_ord <= self.ord_b
    }
}

/// Image of a slab cover in the torus: `(x, t)` lies in the image of `B`
/// when `(x, t) ∈ B`, or `t = 0` and `(x − 1, 1) ∈ B`.
pub fn lift_cover(
    b: &FiniteCover,
    ts: &TorusSystem,
    slab: &SampleSet,
    samples: &SampleSet,
) -> Result<(FiniteCover, LiftReport), TorusError> {
    let ord_b = order_profile(b, slab)?.ord;
    let regions: Vec<Region> = b
        .regions
        .iter()
        .map(|r| {
            let inner = r.membership();
            let base = ts.base.clone();
            let member: Membership = Arc::new(move |p| {
                if inner(p) {
                    return true;
                }
                let (x, t) = split(p);
                t == 0.0 && inner(&SystemPoint::Torus(Box::new(base.act(x, -1)), 1.0))
            });
            Region::new(r.id, r.family, member, samples).with_parents(vec![r.id])
        })
        .collect();
    let c = FiniteCover::new(regions, samples, b.kind)?;
    let prof = order_profile(&c, samples)?;
    let on_x: Vec<bool> = samples.points.iter().map(|p| split(p).1 == 0.0).collect();
    let off_x_ord = prof
        .counts
        .iter()
        .zip(&on_x)
        .filter(|(_, &x)| !x)
        .map(|(&k, _)| k)
        .max()
        .unwrap_or(0);
    let on = on_x.iter().filter(|&&x| x).count();
    let report = LiftReport {
        ord_b,
        ord_c: prof.ord,
        off_x_ord,
        on_x_samples: on,
        off_x_samples: samples.len() - on,
    };
    if !report.passed() {
        return Err(TorusError::LiftOrder { ord_b, ord_c: prof.ord, off_x_ord });
    }
    Ok((c, report))
}

/// `mesh(C + r)` with the real action applied to sampled hits.
pub fn flowed_mesh<S: Flow + ?Sized>(c: &FiniteCover, sys: &S, r: f64, samples: &SampleSet) -> f64 {
    c.regions
        .par_iter()
        .map(|reg| {
            let pts: Vec<SystemPoint> = reg.hit_points(samples).map(|p| sys.flow(p, r)).collect();
            covers::diameter(sys, &pts)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftChainReport {
    pub n: usize,
    pub d: f64,
    /// `⌊n/d⌋`, the integer shift between consecutive copies.
    pub step: u64,
    /// `⌊n/d⌋·n`, the integer window of the mesh guarantee.
    pub window: u64,
    pub eps: f64,
    pub precondition_points: usize,
    pub precondition_mesh: f64,
    pub ord_c: usize,
    pub ord_d: usize,
    /// `n² + n + 2`, the order of the refinement the argument produces.
    pub ord_bound: usize,
    /// `ord D / window`.
    pub ratio: f64,
    /// `(n² + n + 2) / window`.
    pub bound_ratio: f64,
    pub mesh_by_z: Vec<(i64, f64)>,
    pub max_mesh: f64,
    pub elements: usize,
}

impl ShiftChainReport {
    pub fn passed(&self) -> bool {
        self.max_mesh < self.eps
    }
}

pub struct ShiftChain {
    pub cover: FiniteCover,
    pub report: ShiftChainReport,
}

/// Grid points per unit of `r` in the precondition audit.
pub const PRECONDITION_DENSITY: f64 = 8.0;

/// `D = D₀ ∨ (D₁ − z₁) ∨ … ∨ (D_{n−1} − z_{n−1})` with `D_i = C + i/n` and
/// `z_i = ⌊n/d⌋·i`, after auditing `mesh(C + r) < ε` for `0 ≤ r·d < n + d`.
pub fn build_shift_chain(
    c: &FiniteCover,
    ts: &TorusSystem,
    n: usize,
    d: f64,
    eps: f64,
    samples: &SampleSet,
) -> Result<ShiftChain, TorusError> {
    if n == 0 {
        return Err(TorusError::NonPositive { name: "n", value: 0.0 });
    }
    for (name, value) in [("d", d), ("eps", eps)] {
        if !(value > 0.0) {
            return Err(TorusError::NonPositive { name, value });
        }
    }
    let step = (n as f64 / d).floor() as u64;
    if step == 0 {
        return Err(TorusError::NonPositive { name: "floor(n/d)", value: 0.0 });
    }
    let window = step * n as u64;

    let beta = (n as f64 + d) / d;
    let points = ((PRECONDITION_DENSITY * beta).ceil() as usize).max(2);
    let grid: Vec<f64> = (0..points).map(|k| beta * k as f64 / points as f64).collect();
    let meshes: Vec<f64> = grid.iter().map(|&r| flowed_mesh(c, ts, r, samples)).collect();
    if let Some(k) = meshes.iter().position(|&m| m >= eps) {
        return Err(TorusError::Precondition { r: grid[k], mesh: meshes[k], eps });
    }
    let precondition_mesh = meshes.iter().copied().fold(0.0, f64::max);

    let shifted: Vec<FiniteCover> = (0..n)
        .map(|i| {
            let r = i as f64 / n as f64;
            let regions = c
                .regions
                .iter()
                .map(|reg| {
                    let inner = reg.membership();
                    let sys = ts.clone();
                    let member: Membership = Arc::new(move |p| inner(&sys.flow(p, -r)));
                    Region::new(reg.id, i, member, samples)
                })
                .collect();
            FiniteCover::collection(regions, samples, c.kind)
        })
        .collect::<Result<_, _>>()?;
    let chain = join_with_shifts(&shifted, ts, step, samples)?;

    let mesh_by_z: Vec<(i64, f64)> = (0..window as i64)
        .into_par_iter()
        .map(|z| {
            let m = covers::translate_diameters(&chain, ts, z, samples)
                .into_iter()
                .fold(0.0, f64::max);
            (z, m)
        })
        .collect();
    let max_mesh = mesh_by_z.iter().map(|p| p.1).fold(0.0, f64::max);
    let ord_d = order_profile(&chain, samples)?.ord;
    let ord_bound = n * n + n + 2;
    let report = ShiftChainReport {
        n,
        d,
        step,
        window,
        eps,
        precondition_points: points,
        precondition_mesh,
        ord_c: order_profile(c, samples)?.ord,
        ord_d,
        ord_bound,
        ratio: ord_d as f64 / window as f64,
        bound_ratio: ord_bound as f64 / window as f64,
        mesh_by_z,
        max_mesh,
        elements: chain.len(),
    };
    Ok(ShiftChain { cover: chain, report })
}

/// `(a − lo) mod 1 ≤ len` with both ends widened by `pad`.
fn on_circle_interval(a: f64, lo: f64, len: f64, pad: f64) -> bool {
    (a - lo + pad).rem_euclid(1.0) <= len + 2.0 * pad
}

/// Brick-wall cover of a rotation torus in standard coordinates: `rows`
/// bands in the transverse coordinate, each cut into `cols` bricks along
/// `t`, odd rows offset by half a brick, every brick widened by `kappa`.
/// Order is at most 3 when `kappa` is below a quarter of the smaller side.
pub fn flow_brick_cover(
    ts: &TorusSystem,
    rows: usize,
    cols: usize,
    kappa: f64,
    samples: &SampleSet,
) -> Result<FiniteCover, TorusError> {
    ts.rotation_alpha()?;
    if rows < 2 || rows % 2 == 1 || cols < 2 {
        return Err(TorusError::BadGrid(format!("{rows} rows × {cols} cols; rows must be even")));
    }
    let (h1, h2) = (1.0 / rows as f64, 1.0 / cols as f64);
    if !(kappa > 0.0) || kappa >= h1.min(h2) / 4.0 {
        return Err(TorusError::BadGrid(format!("kappa {kappa} outside (0, {})", h1.min(h2) / 4.0)));
    }
    let mut regions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let off = if r % 2 == 1 { h2 / 2.0 } else { 0.0 };
        for c in 0..cols {
            let (ulo, tlo) = (r as f64 * h1, off + c as f64 * h2);
            let sys = ts.clone();
            let member = move |p: &SystemPoint| {
                let (u, t) = sys.standard_coords(p).expect("rotation base");
                on_circle_interval(u, ulo, h1, kappa) && on_circle_interval(t, tlo, h2, kappa)
            };
            regions.push(Region::from_fn(r * cols + c, 0, member, samples));
        }
    }
    Ok(FiniteCover::new(regions, samples, CoverKind::Open)?)
}

/// Open ball of radius `radius` about `centre`.
pub fn ball<S: MetricSystem + Clone + 'static>(
    sys: &S,
    id: usize,
    centre: SystemPoint,
    radius: f64,
    samples: &SampleSet,
) -> Region {
    let s = sys.clone();
    Region::from_fn(id, 0, move |p| s.dist(p, &centre) < radius, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covers::{check_fine, check_refined_at, check_small, default_rgrid, DEFAULT_CLOS_TOL};
    use crate::systems::{make_rotation, make_sturmian, silver_alpha};
    use proptest::prelude::*;

    fn torus() -> TorusSystem {
        build_torus(make_rotation(silver_alpha()).unwrap())
    }

    fn pt(a: f64, t: f64) -> SystemPoint {
        SystemPoint::Torus(Box::new(SystemPoint::circle(a)), t)
    }

    #[test]
    fn gluing_and_projection() {
        let ts = torus();
        let x = SystemPoint::circle(0.3);
        let glued = ts.normalize(&x, 1.0);
        assert_eq!(glued, SystemPoint::Torus(Box::new(ts.base().act(&x, 1)), 0.0));
        assert_eq!(ts.pi(&pt(0.3, 0.25)), 0.25);
        let moved = ts.flow(&ts.embed(&x), 2.5);
        assert_eq!(moved, SystemPoint::Torus(Box::new(ts.base().act(&x, 2)), 0.5));
        // (x − 1, 1) and (x, 0) are one point
        let back = ts.base().act(&x, -1);
        assert_eq!(ts.normalize(&back, 1.0), ts.normalize(&x, 0.0));
        assert_eq!(ts.dist(&ts.normalize(&back, 1.0), &ts.embed(&x)), 0.0);
        // the unnormalised slab point (x − 1, 1) is at distance 0 from (x, 0)
        let raw = SystemPoint::Torus(Box::new(back), 1.0);
        assert!(ts.dist(&raw, &ts.embed(&x)) < 1e-15);
    }

    #[test]
    fn metric_sees_across_the_seam() {
        let ts = torus();
        let x = SystemPoint::circle(0.6);
        let a = SystemPoint::Torus(Box::new(x.clone()), 0.995);
        let b = ts.flow(&a, 0.01);
        assert!((ts.dist(&a, &b) - 0.01).abs() < 1e-12);
        assert!(ts.dist(&pt(0.1, 0.2), &pt(0.1, 0.2)) == 0.0);
        assert!(ts.dist(&pt(0.1, 0.2), &pt(0.4, 0.2)) > 0.29);
    }

    #[test]
    fn integer_flow_is_the_integer_action() {
        let ts = torus();
        for p in ts.sample(30, 1) {
            for z in -5..=5 {
                assert_eq!(ts.flow(&p, z as f64), ts.act(&p, z));
            }
        }
    }

    #[test]
    fn copies_of_x_are_invariant() {
        let ts = torus();
        let r = 0.37;
        for p in ts.sample(20, 2) {
            let q = ts.flow(&ts.embed(split(&p).0), r);
            for z in -3..=3 {
                assert!((ts.pi(&ts.act(&q, z)) - r).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn standard_coords_are_continuous_at_the_seam() {
        let ts = torus();
        let a = pt(0.2, 1.0 - 1e-12);
        let b = ts.flow(&a, 2e-12);
        let (ua, _) = ts.standard_coords(&a).unwrap();
        let (ub, tb) = ts.standard_coords(&b).unwrap();
        assert!((ua - ub).abs() < 1e-9 && tb < 1e-9);
        let st = build_torus(make_sturmian(silver_alpha(), 16).unwrap());
        assert_eq!(st.standard_coords(&st.sample(1, 0)[0]), Err(TorusError::NotRotation));
    }

    #[test]
    fn lifting_the_whole_slab() {
        let ts = torus();
        let s = torus_samples(&ts, 200, 0);
        let slab = slab_samples(&ts, &s);
        let b = slab_grid_cover(&ts, 1, 1, 0.0, 0.0, &slab).unwrap();
        let (c, rep) = lift_cover(&b, &ts, &slab, &s).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(rep.ord_c, 1);
        assert!(rep.passed());
    }

    #[test]
    fn lifted_grid_order_doubles_at_most_on_x() {
        let ts = torus();
        let s = torus_samples(&ts, 800, 3);
        let slab = slab_samples(&ts, &s);
        let b = slab_grid_cover(&ts, 3, 2, 0.05, 0.05, &slab).unwrap();
        let (c, rep) = lift_cover(&b, &ts, &slab, &s).unwrap();
        assert_eq!(rep.ord_b, 4);
        assert!(rep.ord_c <= 8 && rep.off_x_ord <= 4);
        // off-X samples have a single slab representative
        let prof = order_profile(&c, &s).unwrap();
        for (p, k) in s.points.iter().zip(&prof.counts) {
            let (x, t) = split(p);
            let direct = b.regions.iter().filter(|r| r.contains(p)).count();
            if t != 0.0 {
                assert_eq!(*k, direct);
            } else {
                let other = SystemPoint::Torus(Box::new(ts.base().act(x, -1)), 1.0);
                let glued = b.regions.iter().filter(|r| r.contains(&other) && !r.contains(p)).count();
                assert_eq!(*k, direct + glued);
            }
        }
        assert!(rep.on_x_samples > 0);
    }

    #[test]
    fn single_copy_chain_is_the_cover() {
        let ts = torus();
        let s = torus_samples(&ts, 300, 0);
        let slab = slab_samples(&ts, &s);
        let b = slab_grid_cover(&ts, 6, 6, 0.02, 0.02, &slab).unwrap();
        let (c, _) = lift_cover(&b, &ts, &slab, &s).unwrap();
        let chain = build_shift_chain(&c, &ts, 1, 0.5, 0.5, &s).unwrap();
        assert_eq!(chain.report.window, 2);
        let mut a: Vec<Vec<usize>> = c.regions.iter().map(|r| r.hits().to_vec()).filter(|h| !h.is_empty()).collect();
        let mut d: Vec<Vec<usize>> = chain.cover.regions.iter().map(|r| r.hits().to_vec()).collect();
        a.sort();
        d.sort();
        assert_eq!(a, d);
        assert!(chain.report.mesh_by_z[0].1 <= covers::mesh(&c, &ts, &s) + 1e-15);
    }

    #[test]
    fn coarse_cover_fails_the_precondition() {
        let ts = torus();
        let s = torus_samples(&ts, 200, 0);
        let slab = slab_samples(&ts, &s);
        let b = slab_grid_cover(&ts, 2, 2, 0.02, 0.02, &slab).unwrap();
        let (c, _) = lift_cover(&b, &ts, &slab, &s).unwrap();
        assert!(matches!(
            build_shift_chain(&c, &ts, 2, 0.5, 0.2, &s),
            Err(TorusError::Precondition { .. })
        ));
    }

    #[test]
    fn brick_cover_has_order_three() {
        let ts = torus();
        let s = torus_samples(&ts, 1500, 0);
        let v = flow_brick_cover(&ts, 8, 8, 0.01, &s).unwrap();
        assert_eq!(order_profile(&v, &s).unwrap().ord, 3);
        assert!(flow_brick_cover(&ts, 7, 8, 0.01, &s).is_err());
        assert!(flow_brick_cover(&ts, 8, 8, 0.05, &s).is_err());
    }

    #[test]
    fn bricks_are_fine_under_the_flow() {
        let ts = torus();
        let s = torus_samples(&ts, 600, 0);
        let v = flow_brick_cover(&ts, 10, 10, 0.01, &s).unwrap();
        assert!(check_fine(&v, &ts, 0.3, 5.0, &s, default_rgrid(5.0)).unwrap());
        assert!(!check_fine(&v, &ts, 0.05, 5.0, &s, 8).unwrap());
    }

    #[test]
    fn small_ball_is_small_and_long_tubes_are_not_refined() {
        let ts = torus();
        let s = torus_samples(&ts, 600, 0);
        let w = ball(&ts, 0, ts.embed(&SystemPoint::circle(0.5)), 0.05, &s);
        assert!(check_small(&w, &ts, 0.2, 2.0, &s, 33).unwrap());
        let v = flow_brick_cover(&ts, 10, 10, 0.01, &s).unwrap();
        // over a short sweep the tube around W does not return
        let short = check_refined_at(&v, &w, &ts, 0.3, 0.45, &s, 10, DEFAULT_CLOS_TOL).unwrap();
        assert!(short.passed(), "{short:?}");
        // over a long sweep it does, and condition 1 names a witness
        let long = check_refined_at(&v, &w, &ts, 0.3, 6.0, &s, 97, DEFAULT_CLOS_TOL).unwrap();
        assert!(!long.cond1);
        let (_, _, r1, r2) = long.cond1_witness.unwrap();
        assert!((r1 - r2).abs() >= 1.0 - 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn flow_is_additive(a in 0.0f64..1.0, t in 0.0f64..1.0, r1 in -20.0f64..20.0, r2 in -20.0f64..20.0) {
            let ts = torus();
            let p = pt(a, t);
            let once = ts.flow(&p, r1 + r2);
            let twice = ts.flow(&ts.flow(&p, r1), r2);
            prop_assert!(ts.dist(&once, &twice) < 1e-12);
        }

        #[test]
        fn flow_is_exact_on_dyadics(a in 0.0f64..1.0, t in 0u32..64, r1 in -640i32..640, r2 in -640i32..640) {
            let ts = torus();
            let p = pt(a, t as f64 / 64.0);
            let (r1, r2) = (r1 as f64 / 64.0, r2 as f64 / 64.0);
            prop_assert_eq!(ts.flow(&p, r1 + r2), ts.flow(&ts.flow(&p, r1), r2));
        }

        #[test]
        fn projection_follows_the_flow(a in 0.0f64..1.0, t in 0.0f64..1.0, r in -10.0f64..10.0) {
            let ts = torus();
            let p = pt(a, t);
            let lhs = ts.pi(&ts.flow(&p, r));
            let rhs = (t + r).rem_euclid(1.0);
            let gap = (lhs - rhs).abs();
            prop_assert!(gap.min(1.0 - gap) < 1e-12);
        }

        #[test]
        fn metric_is_symmetric_and_zero_on_glued_pairs(a in 0.0f64..1.0, t in 0.0f64..1.0, b in 0.0f64..1.0, s in 0.0f64..1.0) {
            let ts = torus();
            let (p, q) = (pt(a, t), pt(b, s));
            prop_assert!((ts.dist(&p, &q) - ts.dist(&q, &p)).abs() < 1e-15);
            let x = SystemPoint::circle(a);
            prop_assert_eq!(ts.dist(&ts.normalize(&ts.base().act(&x, -1), 1.0), &ts.embed(&x)), 0.0);
        }
    }
}
