//! Validation and execution of each experiment command.

use std::f64::consts::PI;
use std::sync::Arc;

use mdimlab::covers::SampleSet;
use mdimlab::fiber::{
    build_psi, fiber_multiplicity, gamma_bound, marking_report, rotation_marking_pipeline, FiberParams, Observable,
    PipelineOptions,
};
use mdimlab::intervals::build_interval_system;
use mdimlab::kolmogorov::{cube_families, kolmogorov_cover};
use mdimlab::level::{level_report, LevelFunction};
use mdimlab::systems::{make_rotation, silver_alpha, DynSystem, MetricSystem, SystemDescriptor};
use mdimlab::torus::{
    build_shift_chain, build_torus, flow_brick_cover, lift_cover, slab_grid_cover, slab_samples, torus_samples,
};
use mdimlab::{Rational, Scalar};
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, Tolerances};
use crate::report::{Report, Table};
use crate::CliError;

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub enum Plan {
    Kolmogorov { n: usize, m: usize, eps: Rational, points: usize },
    Intervals { q: usize, mesh_bound: f64, grid: usize },
    Levelfn { sys: DynSystem, centre: f64, radius: f64, samples: usize, n: u64 },
    TorusChain(TorusPlan),
    FiberCheck { sys: DynSystem, k: usize, d: f64, window: u64, sep: f64, samples: usize },
    FullPipeline { sys: DynSystem, params: FiberParams, opts: PipelineOptions, blend_radius: f64 },
}

#[derive(Debug, Clone)]
pub struct TorusPlan {
    pub sys: DynSystem,
    pub arcs: usize,
    pub cells: usize,
    pub arc_overlap: f64,
    pub cell_overlap: f64,
    pub rows: usize,
    pub cols: usize,
    pub kappa: f64,
    pub n: usize,
    pub d: f64,
    pub eps: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub command: Command,
    pub seed: u64,
    pub system: Option<SystemDescriptor>,
    pub tolerances: Tolerances,
    pub plan: Plan,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(format!("{name} must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, lo: usize) -> Result<usize, CliError> {
    if v >= lo {
        Ok(v)
    } else {
        Err(bad(format!("{name} must be at least {lo}, got {v}")))
    }
}

fn system(cfg: &ExperimentConfig) -> Result<DynSystem, CliError> {
    match &cfg.system {
        Some(d) => DynSystem::from_descriptor(d).map_err(|e| bad(format!("system: {e}"))),
        None => Ok(make_rotation(silver_alpha()).expect("silver rotation")),
    }
}

fn rotation(cfg: &ExperimentConfig, command: Command) -> Result<DynSystem, CliError> {
    let sys = system(cfg)?;
    if sys.descriptor().kind != "rotation" {
        return Err(bad(format!("{} needs a rotation system", command.name())));
    }
    Ok(sys)
}

/// Checks every parameter against the preconditions of the modules the
/// command will call. Nothing is computed or written before this passes.
pub fn validate(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    let command = cfg.command.ok_or_else(|| bad("no command given"))?;
    let p = &cfg.params;
    let t = &cfg.tolerances;
    positive("tolerances.residual", t.residual)?;
    if !(t.fiber >= 0.0 && t.fiber.is_finite()) {
        return Err(bad(format!("tolerances.fiber must be non-negative, got {}", t.fiber)));
    }
    if !(0.0..=1.0).contains(&t.coverage) {
        return Err(bad(format!("tolerances.coverage must lie in [0, 1], got {}", t.coverage)));
    }
    let plan = match command {
        Command::Kolmogorov => {
            let n = at_least("n", p.n.unwrap_or(2), 1)?;
            let m = p.m.unwrap_or(3);
            if m < n {
                return Err(bad(format!("need n ≤ m, got n = {n}, m = {m}")));
            }
            let eps_f = positive("eps", p.eps.unwrap_or(0.25))?;
            let eps = Rational::approximate_float(eps_f).ok_or_else(|| bad("eps has no rational approximation"))?;
            cube_families(n, m, eps).map_err(|e| bad(format!("kolmogorov: {e}")))?;
            Plan::Kolmogorov { n, m, eps, points: at_least("samples", p.samples.unwrap_or(10_000), 1)? }
        }
        Command::Intervals => {
            let q = at_least("q", p.q.unwrap_or(5), 3)?;
            let mesh_bound = positive("mesh_bound", p.mesh_bound.unwrap_or(0.2))?;
            Plan::Intervals { q, mesh_bound, grid: at_least("samples", p.samples.unwrap_or(10_000), 1)? }
        }
        Command::Levelfn => {
            let sys = system(cfg)?;
            let n = p.n.unwrap_or(10) as u64;
            if 2 * n > sys.horizon() {
                return Err(bad(format!("2n = {} exceeds the horizon {}", 2 * n, sys.horizon())));
            }
            Plan::Levelfn {
                sys,
                centre: p.centre.unwrap_or(0.5),
                radius: positive("u_width", p.u_width.unwrap_or(0.1))? / 2.0,
                samples: at_least("samples", p.samples.unwrap_or(500), 1)?,
                n,
            }
        }
        Command::TorusChain => {
            let tp = TorusPlan {
                sys: rotation(cfg, command)?,
                arcs: at_least("arcs", p.arcs.unwrap_or(3), 1)?,
                cells: at_least("cells", p.cells.unwrap_or(2), 1)?,
                arc_overlap: p.arc_overlap.unwrap_or(0.05),
                cell_overlap: p.cell_overlap.unwrap_or(0.05),
                rows: p.rows.unwrap_or(8),
                cols: p.cols.unwrap_or(8),
                kappa: positive("kappa", p.kappa.unwrap_or(0.01))?,
                n: at_least("n", p.n.unwrap_or(4), 1)?,
                d: positive("d", p.d.unwrap_or(0.5))?,
                eps: positive("eps", p.eps.unwrap_or(0.2))?,
                samples: at_least("samples", p.samples.unwrap_or(2000), 1)?,
            };
            if tp.rows < 2 || tp.rows % 2 == 1 || tp.cols < 2 {
                return Err(bad(format!("brick grid needs even rows ≥ 2 and cols ≥ 2, got {}×{}", tp.rows, tp.cols)));
            }
            if !(0.0..0.5).contains(&tp.arc_overlap) || !(0.0..0.5).contains(&tp.cell_overlap) {
                return Err(bad("overlaps must lie in [0, 0.5)"));
            }
            if tp.d > tp.n as f64 {
                return Err(bad(format!("need d ≤ n, got d = {}, n = {}", tp.d, tp.n)));
            }
            Plan::TorusChain(tp)
        }
        Command::FiberCheck => {
            let sys = system(cfg)?;
            let kind = sys.descriptor().kind;
            if kind != "rotation" && kind != "sturmian" {
                return Err(bad(format!("fiber-check observables need a rotation or sturmian system, got {kind}")));
            }
            let k = at_least("k", p.k.unwrap_or(1), 1)?;
            let d = p.d.unwrap_or(0.0);
            gamma_bound(k as f64, d).map_err(|e| bad(format!("fiber: {e}")))?;
            let window = p.window.unwrap_or(64);
            if window > sys.horizon() {
                return Err(bad(format!("window {window} exceeds the horizon {}", sys.horizon())));
            }
            let eps = positive("eps", p.eps.unwrap_or(0.05))?;
            Plan::FiberCheck {
                sys,
                k,
                d,
                window,
                sep: positive("sep", p.sep.unwrap_or(3.0 * eps))?,
                samples: at_least("samples", p.samples.unwrap_or(2000), 1)?,
            }
        }
        Command::FullPipeline => {
            let sys = rotation(cfg, command)?;
            let k = p.k.unwrap_or(2);
            let params = FiberParams::new(
                k,
                p.d.unwrap_or(1.0),
                p.n.unwrap_or(4),
                p.q.unwrap_or(5),
                p.l.unwrap_or(40),
                p.eps.unwrap_or(0.25),
                p.delta.unwrap_or(0.1),
            )
            .map_err(|e| bad(format!("fiber: {e}")))?;
            if let Some(m) = p.m {
                if m != params.m {
                    return Err(bad(format!("m = {m} differs from q·k = {}", params.m)));
                }
            }
            let def = PipelineOptions::default();
            let opts = PipelineOptions {
                torus_samples: at_least("samples", p.samples.unwrap_or(def.torus_samples), 1)?,
                x_samples: at_least("x_samples", p.x_samples.unwrap_or(def.x_samples), 1)?,
                brick_rows: p.rows.unwrap_or(def.brick_rows),
                brick_cols: p.cols.unwrap_or(def.brick_cols),
                brick_kappa: positive("kappa", p.kappa.unwrap_or(def.brick_kappa))?,
                interval_mesh: positive("mesh_bound", p.mesh_bound.unwrap_or(def.interval_mesh))?,
                w_angle: p.centre.unwrap_or(def.w_angle),
                seed: cfg.seed(),
                ..def
            };
            if opts.brick_rows < 2 || opts.brick_rows % 2 == 1 || opts.brick_cols < 2 {
                return Err(bad("brick grid needs even rows ≥ 2 and cols ≥ 2"));
            }
            if 4 * params.l as u64 > sys.horizon() {
                return Err(bad(format!("4l = {} exceeds the horizon {}", 4 * params.l, sys.horizon())));
            }
            Plan::FullPipeline {
                sys,
                params,
                opts,
                blend_radius: positive("blend_radius", p.blend_radius.unwrap_or(0.01))?,
            }
        }
    };
    let system = match &plan {
        Plan::Kolmogorov { .. } | Plan::Intervals { .. } => None,
        Plan::Levelfn { sys, .. } | Plan::FiberCheck { sys, .. } | Plan::FullPipeline { sys, .. } => {
            Some(sys.descriptor())
        }
        Plan::TorusChain(tp) => Some(tp.sys.descriptor()),
    };
    Ok(Experiment { command, seed: cfg.seed(), system, tolerances: cfg.tolerances.clone(), plan })
}

/// `(1 + cos 2π(θ + i/(2k)))/2` on rotations and `Σ_r c_{r+i}(x)·2^{−(r+1)}`
/// on Sturmian systems, for `i < k`.
pub fn observables(sys: &DynSystem, k: usize) -> Vec<Observable> {
    let sturmian = sys.descriptor().kind == "sturmian";
    let depth = sys.descriptor().parameters.get("precision").and_then(Value::as_u64).unwrap_or(32) as i64;
    (0..k)
        .map(|i| {
            let s = sys.clone();
            if sturmian {
                Arc::new(move |p: &_| {
                    (0..depth).map(|r| f64::from(s.coding(p, r + i as i64)) * 0.5f64.powi(r as i32 + 1)).sum()
                }) as Observable
            } else {
                let phase = i as f64 / (2.0 * k as f64);
                Arc::new(move |p: &_| (1.0 + (2.0 * PI * (s.angle(p) + phase)).cos()) / 2.0) as Observable
            }
        })
        .collect()
}

fn f(v: f64) -> Value {
    json!(v)
}

/// Runs a validated experiment. Construction failures inside modules are
/// audit failures: they are recorded in the report rather than returned.
pub fn execute(exp: &Experiment) -> Report {
    let seed = exp.seed;
    let name = exp.command.name();
    let sys_desc = exp.system.clone();
    match &exp.plan {
        Plan::Kolmogorov { n, m, eps, points } => {
            let mut cols = vec!["index".to_string()];
            cols.extend((0..*n).map(|i| format!("x{i}")));
            cols.push("multiplicity".into());
            let colrefs: Vec<&str> = cols.iter().map(String::as_str).collect();
            let mut r = Report::new(name, seed, sys_desc, Table::new(&colrefs));
            let bbox = vec![(Rational::from_integer(0), Rational::from_integer(1)); *n];
            let cover = match kolmogorov_cover(*n, *m, *eps, &bbox) {
                Ok(c) => c,
                Err(e) => {
                    r.fail(format!("kolmogorov::kolmogorov_cover: {e}"));
                    return r;
                }
            };
            let side = mdimlab::kolmogorov::grid_side_for(*points, *n);
            let audit = cover.audit(side);
            for (i, (p, mult)) in cover.grid(side).iter().zip(&audit.multiplicities).enumerate() {
                let mut row = vec![json!(i)];
                row.extend(p.iter().map(|x| f(x.to_f64_lossy())));
                row.push(json!(mult));
                r.table.push(row);
            }
            if let Some(i) = audit.multiplicities.iter().position(|&k| k < audit.required_multiplicity) {
                r.fail(format!(
                    "kolmogorov::audit: grid point {i} has multiplicity {} < {}",
                    audit.multiplicities[i], audit.required_multiplicity
                ));
            }
            r.check(audit.family_overlaps == 0, || {
                format!("kolmogorov::audit: {} grid points lie in two cubes of one family", audit.family_overlaps)
            });
            r.check(audit.mesh < audit.eps, || format!("kolmogorov::audit: mesh {} ≥ eps {}", audit.mesh, audit.eps));
            r.set("n", n);
            r.set("m", m);
            r.set("eps", eps.to_string());
            r.set("grid_points", audit.grid_points);
            r.set("min_multiplicity", audit.min_multiplicity);
            r.set("required_multiplicity", audit.required_multiplicity);
            r.set("family_overlaps", audit.family_overlaps);
            r.set("mesh", audit.mesh);
            r.set("cubes", cover.cubes.len());
            r
        }
        Plan::Intervals { q, mesh_bound, grid } => {
            let mut r = Report::new(name, seed, sys_desc, Table::new(&["family", "lo", "hi"]));
            r.set("q", q);
            r.set("mesh_bound", mesh_bound);
            let sys = match build_interval_system(*q, *mesh_bound, seed) {
                Ok(s) => s,
                Err(e) => {
                    r.set("error", e.to_string());
                    if let mdimlab::intervals::IntervalError::SigmaNonPositive { sigma_lower, .. } = e {
                        r.set("sigma_lower", sigma_lower);
                    }
                    r.fail(format!("intervals::build_interval_system: {e}"));
                    return r;
                }
            };
            for (fi, fam) in sys.families.iter().enumerate() {
                for &(lo, hi) in fam {
                    r.table.push(vec![json!(fi + 1), f(lo), f(hi)]);
                }
            }
            let audit = sys.audit(*grid);
            if let Some(i) = (0..*grid).find(|&i| sys.count_met(i as f64 / *grid as f64) < q - 2) {
                let t = i as f64 / *grid as f64;
                r.fail(format!("intervals::count_met: t = {t} meets {} < {} families", sys.count_met(t), q - 2));
            }
            r.check(audit.passed(), || format!("intervals::audit: {audit:?}"));
            r.set("sigma_lower", sys.sigma_lower);
            r.set("omega_radius", sys.omega_radius);
            r.set("mesh", sys.mesh);
            r.set("grid", audit.grid);
            r.set("min_count", audit.min_count);
            r.set("required", audit.required);
            r.set("max_omega_hits", audit.max_omega_hits);
            r.set("intervals", sys.families.iter().map(Vec::len).sum::<usize>());
            r
        }
        Plan::Levelfn { sys, centre, radius, samples, n } => {
            let mut r = Report::new(name, seed, sys_desc, Table::new(&["index", "xi", "phi"]));
            let s = SampleSet::draw(sys, *samples, seed);
            let centre_pt = sys.point_at(&vec![*centre; sys.param_dim()]);
            let lf = match LevelFunction::ball(sys.clone(), centre_pt, *radius, &s) {
                Ok(l) => l,
                Err(e) => {
                    r.fail(format!("level::ball: {e}"));
                    return r;
                }
            };
            let rep = match level_report(&lf, *n, &s) {
                Ok(x) => x,
                Err(e) => {
                    r.fail(format!("level::level_report: {e}"));
                    return r;
                }
            };
            for (i, p) in s.points.iter().enumerate() {
                let xi = lf.value(p).map(f).unwrap_or(Value::Null);
                r.table.push(vec![json!(i), xi, f(lf.phi(p))]);
            }
            let tol = exp.tolerances.residual;
            r.check(rep.recursion_residual <= tol, || {
                format!("level::level_report: recursion residual {} > {tol}", rep.recursion_residual)
            });
            r.check(rep.translation_residual <= tol, || {
                format!("level::level_report: translation residual {} > {tol}", rep.translation_residual)
            });
            r.set("n", n);
            r.set("u_radius", radius);
            r.set("recursion_residual", rep.recursion_residual);
            r.set("translation_residual", rep.translation_residual);
            r.set("excluded_count", rep.excluded_count);
            r.set("checked_count", rep.checked_count);
            r.set("translation_vacuous", rep.checked_count == 0);
            r.set("truncation_bound", rep.truncation_bound);
            r
        }
        Plan::TorusChain(tp) => run_torus(tp, seed, sys_desc),
        Plan::FiberCheck { sys, k, d, window, sep, samples } => {
            let mut r = Report::new(name, seed, sys_desc, Table::new(&["class_size", "classes"]));
            let s = SampleSet::draw(sys, *samples, seed);
            let obs = observables(sys, *k);
            let gamma = gamma_bound(*k as f64, *d).expect("validated");
            let floor = gamma.floor() as i64;
            r.set("k", k);
            r.set("d", d);
            r.set("gamma", gamma);
            r.set("floor_gamma", floor);
            r.set("window", window);
            r.set("sep", sep);
            r.set("tol", exp.tolerances.fiber);
            match fiber_multiplicity(sys, &obs, *window, *sep, exp.tolerances.fiber, &s) {
                Ok(rep) => {
                    for (size, count) in &rep.class_sizes {
                        r.table.push(vec![json!(size), json!(count)]);
                    }
                    r.check(rep.max_mult as i64 <= floor.max(1), || {
                        format!(
                            "fiber::fiber_multiplicity: samples {:?} share a fiber, {} > ⌊γ⌋ = {floor}",
                            rep.witness, rep.max_mult
                        )
                    });
                    r.set("max_mult", rep.max_mult);
                    r.set("classes", rep.classes);
                    r.set("class_sizes", &rep.class_sizes);
                    r.set("witness", &rep.witness);
                    r.set("exact", rep.exact);
                }
                Err(e) => r.fail(format!("fiber::fiber_multiplicity: {e}")),
            }
            r
        }
        Plan::FullPipeline { sys, params, opts, blend_radius } => {
            run_full(sys, params, opts, *blend_radius, seed, sys_desc)
        }
    }
}

fn run_torus(tp: &TorusPlan, seed: u64, sys_desc: Option<SystemDescriptor>) -> Report {
    let mut r = Report::new("torus-chain", seed, sys_desc, Table::new(&["z", "mesh"]));
    let ts = build_torus(tp.sys.clone());
    let s = torus_samples(&ts, tp.samples, seed);
    let slab = slab_samples(&ts, &s);
    match slab_grid_cover(&ts, tp.arcs, tp.cells, tp.arc_overlap, tp.cell_overlap, &slab)
        .and_then(|b| lift_cover(&b, &ts, &slab, &s))
    {
        Ok((c, lift)) => {
            r.set("ord_b", lift.ord_b);
            r.set("ord_c", lift.ord_c);
            r.set("off_x_ord", lift.off_x_ord);
            r.set("on_x_samples", lift.on_x_samples);
            r.set("off_x_samples", lift.off_x_samples);
            r.set("lift_elements", c.len());
            r.check(lift.passed(), || format!("torus::lift_cover: {lift:?}"));
        }
        Err(e) => r.fail(format!("torus::lift_cover: {e}")),
    }
    let chain = flow_brick_cover(&ts, tp.rows, tp.cols, tp.kappa, &s)
        .and_then(|c| build_shift_chain(&c, &ts, tp.n, tp.d, tp.eps, &s));
    match chain {
        Ok(ch) => {
            let rep = &ch.report;
            for &(z, m) in &rep.mesh_by_z {
                r.table.push(vec![json!(z), f(m)]);
            }
            if let Some(&(z, m)) = rep.mesh_by_z.iter().find(|&&(_, m)| m >= rep.eps) {
                r.fail(format!("torus::build_shift_chain: translate z = {z} has mesh {m} ≥ eps {}", rep.eps));
            }
            r.set("chain_n", rep.n);
            r.set("chain_d", rep.d);
            r.set("chain_step", rep.step);
            r.set("chain_window", rep.window);
            r.set("chain_eps", rep.eps);
            r.set("chain_max_mesh", rep.max_mesh);
            r.set("chain_ord_c", rep.ord_c);
            r.set("chain_ord_d", rep.ord_d);
            r.set("chain_ord_bound", rep.ord_bound);
            r.set("chain_elements", rep.elements);
            r.set("precondition_mesh", rep.precondition_mesh);
        }
        Err(e) => r.fail(format!("torus::build_shift_chain: {e}")),
    }
    r
}

fn run_full(
    sys: &DynSystem,
    params: &FiberParams,
    opts: &PipelineOptions,
    blend_radius: f64,
    seed: u64,
    sys_desc: Option<SystemDescriptor>,
) -> Report {
    let mut r = Report::new("full-pipeline", seed, sys_desc, Table::new(&["index", "xi", "marks", "min_window"]));
    r.set("params", params);
    r.set("gamma", params.gamma());
    r.set("floor_gamma", params.gamma().floor() as i64);
    let pipe = match rotation_marking_pipeline(sys, params, opts) {
        Ok(p) => p,
        Err(e) => {
            r.fail(format!("fiber::rotation_marking_pipeline: {e}"));
            return r;
        }
    };
    let pr = &pipe.report;
    r.set("u_order", pr.u_order);
    r.set("w_radius", pr.w_radius);
    r.set("w_small", pr.w_small);
    r.set("d_w_disjoint", pr.d_w_disjoint);
    r.set("refined_at_w", pr.refined.passed());
    r.set("refined_audit", &pr.refined);
    r.set("ko_min_multiplicity", pr.ko.min_multiplicity);
    r.set("ko_pieces", pr.ko.pieces);
    r.set("interval_sigma_lower", pr.intervals.sigma_lower);
    r.set("collections", &pr.collections);
    r.set("x_minus", pr.x_minus);
    r.check(pr.w_small && pr.d_w_disjoint, || "fiber::rotation_marking_pipeline: W is not small".into());
    r.check(pr.collections.passed(), || format!("fiber::audit_collections: {:?}", pr.collections));

    match marking_report(&pipe.x_minus, &pipe.marked, &pipe.w, params) {
        Ok(m) => {
            for pt in &m.points {
                r.table.push(vec![json!(pt.index), f(pt.xi), json!(pt.marks), json!(pt.min_window())]);
                if let Some(&(z, c)) = pt.windows.iter().find(|w| (w.1 as i64) < m.window_bound) {
                    r.fail(format!(
                        "fiber::marking_report: point {} window z = {z} has {c} < {} marks",
                        pt.index, m.window_bound
                    ));
                }
                if (pt.marks as f64) < m.global_bound {
                    r.fail(format!("fiber::marking_report: point {} has |S_x| = {} < {}", pt.index, pt.marks, m.global_bound));
                }
            }
            r.check(m.closed_forms_match(), || "fiber::marking_report: counting constants differ from closed forms".into());
            r.set("delta", m.delta);
            r.set("delta_closed", m.delta_closed);
            r.set("delta_star", m.delta_star);
            r.set("delta_star_closed", m.delta_star_closed);
            r.set("s_size", m.s_size);
            r.set("s_star_size", m.s_star_size);
            r.set("window_bound", m.window_bound);
            r.set("global_bound", m.global_bound);
            r.set("marking_min", m.marking_min);
            r.set("window_min", m.window_min);
        }
        Err(e) => r.fail(format!("fiber::marking_report: {e}")),
    }

    let obs = observables(sys, params.k);
    match build_psi(sys, &obs, &pipe.d_w, &pipe.collections, params.delta, blend_radius, &pipe.x_samples, seed) {
        Ok(psi) => {
            let a = &psi.audit;
            r.check(a.constancy_violations == 0, || {
                format!("fiber::build_psi: {} collapsed samples off their group value", a.constancy_violations)
            });
            r.check(a.max_deviation <= a.delta, || format!("fiber::build_psi: |ψ − f| = {} > δ", a.max_deviation));
            r.check(a.separation_violations == 0, || {
                format!("fiber::build_psi: {} group pairs closer than η", a.separation_violations)
            });
            r.set("psi_audit", a);
        }
        Err(e) => r.fail(format!("fiber::build_psi: {e}")),
    }
    r
}
