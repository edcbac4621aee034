//! Acceptance criteria 1–10, run in sequence so timings are not skewed by
//! sibling tests. Each criterion prints one `PASS`/`FAIL` line; the test
//! fails if any criterion does.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use mdimlab::covers::{circle_arcs, join_with_shifts, mesh_under_translates, SampleSet};
use mdimlab::fiber::{
    arc_collection, build_psi, coding_observable, cosine_observable, fiber_multiplicity, gamma_bound,
    marking_report, rotation_marking_pipeline, synthetic_fixture, translates_of_w, FiberParams,
    MarkedCollections, Observable, PipelineOptions, PsiAudit, CLOSED_FORM_TOL,
};
use mdimlab::intervals::build_interval_system;
use mdimlab::kolmogorov::{grid_side_for, kolmogorov_cover, kolmogorov_ostrand_cover};
use mdimlab::level::{level_report, LevelFunction};
use mdimlab::systems::{make_rotation, make_sturmian, silver_alpha, DynSystem, MetricSystem, SystemPoint};
use mdimlab::torus::{
    build_shift_chain, build_torus, flow_brick_cover, lift_cover, slab_grid_cover, slab_samples, torus_samples,
};
use mdimlab::Rational;
use mdimlab_cli::report::encode;
use mdimlab_cli::{run_experiment, Command, ExperimentConfig, Format};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rotation() -> DynSystem {
    make_rotation(silver_alpha()).unwrap()
}

fn kolmogorov_multiplicity() -> Outcome {
    let mut worst = Vec::new();
    for (n, m) in [(1, 2), (1, 4), (2, 3), (2, 5), (3, 4)] {
        let eps = Rational::new(1, 4);
        let bbox = vec![(Rational::from_integer(0), Rational::from_integer(1)); n];
        let c = kolmogorov_cover(n, m, eps, &bbox).map_err(|e| e.to_string())?;
        let side = grid_side_for(10_000, n);
        let a = c.audit(side);
        ensure(a.grid_points >= 10_000, || format!("({n},{m}): only {} grid points", a.grid_points))?;
        ensure(a.min_multiplicity >= m - n + 1, || {
            format!("({n},{m}): multiplicity {} < {}", a.min_multiplicity, m - n + 1)
        })?;
        ensure(a.family_overlaps == 0, || format!("({n},{m}): {} family overlaps", a.family_overlaps))?;
        ensure(a.mesh < a.eps, || format!("({n},{m}): mesh {} ≥ eps", a.mesh))?;
        worst.push(format!("({n},{m}) min {}", a.min_multiplicity));
    }
    Ok(worst.join(", "))
}

fn ko_pipeline() -> Outcome {
    let sys = rotation();
    let s = SampleSet::draw(&sys, 2000, 0);
    let u = circle_arcs(&sys, 3, 0.05, &s).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for m in [3, 5] {
        let ko = kolmogorov_ostrand_cover(&sys, &u, m, &s, 0).map_err(|e| e.to_string())?;
        let r = &ko.report;
        ensure(r.n == 1, || format!("m={m}: nerve dimension {}", r.n))?;
        ensure(r.refines, || format!("m={m}: pieces do not refine the arcs"))?;
        ensure(r.family_overlaps == 0, || format!("m={m}: {} family overlaps", r.family_overlaps))?;
        ensure(r.required_multiplicity == m, || format!("m={m}: required {}", r.required_multiplicity))?;
        ensure(r.covered_fraction >= 0.99, || format!("m={m}: covered fraction {}", r.covered_fraction))?;
        let boundary = ko.multiplicity.iter().filter(|&&k| k < m).count();
        out.push(format!("m={m} covered {:.4}, {boundary} boundary samples", r.covered_fraction));
    }
    Ok(out.join("; "))
}

fn interval_systems() -> Outcome {
    let mut out = Vec::new();
    for q in [3, 5, 8] {
        for mb in [0.2, 0.05] {
            let e = build_interval_system(q, mb, 0).map_err(|e| format!("q={q} mesh {mb}: {e}"))?;
            let a = e.audit(10_000);
            ensure(a.min_count >= q - 2, || format!("q={q} mesh {mb}: count_met {} < {}", a.min_count, q - 2))?;
            ensure(e.sigma_lower > 0.0, || format!("q={q} mesh {mb}: σ = {}", e.sigma_lower))?;
            ensure(e.mesh <= mb, || format!("q={q}: mesh {} > {mb}", e.mesh))?;
            out.push(format!("q={q}/{mb}: σ {:.3e}", e.sigma_lower));
        }
    }
    Ok(out.join(", "))
}

/// Backward recursion `v ← φ(x−j)(v + 1)` from the first zero of `φ`.
fn dp_oracle(lf: &LevelFunction<DynSystem>, x: &SystemPoint) -> f64 {
    let mut s0 = 0i64;
    while lf.phi(&lf.sys.act(x, -s0)) != 0.0 {
        s0 += 1;
    }
    (0..s0).rev().fold(0.0, |v, j| lf.phi(&lf.sys.act(x, -j)) * (v + 1.0))
}

fn level_functions() -> Outcome {
    let sys = rotation();
    let s = SampleSet::draw(&sys, 500, 0);
    let lf = LevelFunction::ball(sys.clone(), SystemPoint::circle(0.5), 0.05, &s).map_err(|e| e.to_string())?;
    let r10 = level_report(&lf, 10, &s).map_err(|e| e.to_string())?;
    ensure(r10.recursion_residual <= 1e-6, || format!("recursion residual {}", r10.recursion_residual))?;
    ensure(r10.translation_residual <= 1e-6, || format!("translation residual {}", r10.translation_residual))?;
    let r3 = level_report(&lf, 3, &s).map_err(|e| e.to_string())?;
    ensure(r3.checked_count > 0 && r3.translation_residual <= 1e-6, || {
        format!("n=3 translation residual {} on {} points", r3.translation_residual, r3.checked_count)
    })?;
    let mut worst = 0.0f64;
    for x in s.points.iter().step_by(25).take(20) {
        worst = worst.max((lf.value(x).map_err(|e| e.to_string())? - dp_oracle(&lf, x)).abs());
    }
    ensure(worst <= 1e-8, || format!("oracle disagreement {worst}"))?;
    Ok(format!(
        "recursion {:.1e}; n=10 translation {:.1e} on {} points ({} excluded); n=3 translation {:.1e} on {}; oracle {:.1e}",
        r10.recursion_residual,
        r10.translation_residual,
        r10.checked_count,
        r10.excluded_count,
        r3.translation_residual,
        r3.checked_count,
        worst
    ))
}

fn torus_orders() -> Outcome {
    let ts = build_torus(rotation());
    let s = torus_samples(&ts, 5000, 0);
    let slab = slab_samples(&ts, &s);
    let mut out = Vec::new();
    for (want, arcs, cells, ao, co) in [(2, 3, 1, 0.05, 0.0), (4, 3, 2, 0.05, 0.05)] {
        let b = slab_grid_cover(&ts, arcs, cells, ao, co, &slab).map_err(|e| e.to_string())?;
        let (_, r) = lift_cover(&b, &ts, &slab, &s).map_err(|e| e.to_string())?;
        ensure(r.ord_b == want, || format!("grid cover has ord {} instead of {want}", r.ord_b))?;
        ensure(r.ord_c <= 2 * r.ord_b, || format!("ord C {} > 2·{}", r.ord_c, r.ord_b))?;
        ensure(r.off_x_ord <= r.ord_b, || format!("off-X order {} > {}", r.off_x_ord, r.ord_b))?;
        out.push(format!("ord B {}: ord C {}, off-X {}", r.ord_b, r.ord_c, r.off_x_ord));
    }
    Ok(out.join("; "))
}

fn shift_chain() -> Outcome {
    let ts = build_torus(rotation());
    let s = torus_samples(&ts, 2000, 0);
    let c = flow_brick_cover(&ts, 8, 8, 0.01, &s).map_err(|e| e.to_string())?;
    let chain = build_shift_chain(&c, &ts, 4, 0.5, 0.2, &s).map_err(|e| e.to_string())?;
    let r = &chain.report;
    ensure(r.window == 32, || format!("window {}", r.window))?;
    let direct = mesh_under_translates(&chain.cover, &ts, r.window - 1, &s).map_err(|e| e.to_string())?;
    ensure(direct.len() == 32, || format!("{} translates checked", direct.len()))?;
    if let Some(&(z, m)) = direct.iter().find(|&&(_, m)| m >= 0.2) {
        return Err(format!("mesh(D + {z}) = {m} ≥ 0.2"));
    }
    let max = direct.iter().map(|d| d.1).fold(0.0, f64::max);

    // join of three covers on X, each fine under translates 0 ≤ z < m
    let sys = rotation();
    let xs = SampleSet::draw(&sys, 2000, 1);
    let m = 3u64;
    let eps = 0.2;
    let covers: Vec<_> = [9usize, 10, 11]
        .iter()
        .map(|&k| circle_arcs(&sys, k, 0.02, &xs).unwrap())
        .collect();
    for (i, a) in covers.iter().enumerate() {
        let per = mesh_under_translates(a, &sys, m - 1, &xs).map_err(|e| e.to_string())?;
        ensure(per.iter().all(|p| p.1 < eps), || format!("cover {i} is not fine under translates < m"))?;
    }
    let join = join_with_shifts(&covers, &sys, m, &xs).map_err(|e| e.to_string())?;
    let jm = mesh_under_translates(&join, &sys, m * 3 - 1, &xs).map_err(|e| e.to_string())?;
    ensure(jm.len() == 9, || format!("{} join translates", jm.len()))?;
    let jmax = jm.iter().map(|d| d.1).fold(0.0, f64::max);
    ensure(jmax < eps, || format!("join mesh {jmax} ≥ {eps}"))?;
    Ok(format!("chain max mesh {max:.4} over z < 32; join max mesh {jmax:.4} over z < 9"))
}

fn marking_bound() -> Outcome {
    let sys = rotation();
    let p = FiberParams::new(2, 1.0, 4, 5, 40, 0.25, 0.1).map_err(|e| e.to_string())?;

    // synthetic fixture: exact coverage, exactly q − 2 families met
    let s = SampleSet::draw(&sys, 400, 0);
    let xi = LevelFunction::ball(sys.clone(), SystemPoint::circle(0.5), 0.004, &s).map_err(|e| e.to_string())?;
    let (fams, e) = synthetic_fixture(&p).map_err(|e| e.to_string())?;
    let mc = MarkedCollections::new(Arc::new(fams), e, xi.clone(), build_torus(sys.clone()), &p, 0)
        .map_err(|e| e.to_string())?;
    let l = p.l as i64;
    let xs: Vec<SystemPoint> = s
        .points
        .iter()
        .filter(|x| !(-l..=l).any(|z| xi.u.contains(&sys.act(x, -z))))
        .cloned()
        .collect();
    let fixture = marking_report(&xs, &mc, &xi.u, &p).map_err(|e| e.to_string())?;
    let windows: usize = fixture.points.iter().map(|pt| pt.windows.len()).sum();
    ensure(windows > 0, || "fixture has no windows".into())?;
    for pt in &fixture.points {
        if let Some(&(z, c)) = pt.windows.iter().find(|w| w.1 as i64 != p.window_bound()) {
            return Err(format!("fixture point {} window {z}: {c} ≠ {}", pt.index, p.window_bound()));
        }
    }

    // rotation end to end
    let pipe = rotation_marking_pipeline(&sys, &p, &PipelineOptions::default()).map_err(|e| e.to_string())?;
    let rep = marking_report(&pipe.x_minus, &pipe.marked, &pipe.w, &p).map_err(|e| e.to_string())?;
    ensure(!rep.points.is_empty(), || "no audited points".into())?;
    for pt in &rep.points {
        ensure(pt.marks as f64 >= p.global_bound(), || {
            format!("point {}: |S_x| = {} < {}", pt.index, pt.marks, p.global_bound())
        })?;
    }
    ensure((rep.delta - rep.delta_closed).abs() <= CLOSED_FORM_TOL, || format!("Δ {} vs {}", rep.delta, rep.delta_closed))?;
    ensure((rep.delta_star - rep.delta_star_closed).abs() <= CLOSED_FORM_TOL, || {
        format!("Δ* {} vs {}", rep.delta_star, rep.delta_star_closed)
    })?;
    ensure(rep.s_size == p.l * p.k, || format!("|S| = {}", rep.s_size))?;
    ensure(rep.s_star_size == p.k * (p.q - 2), || format!("|S_*| = {}", rep.s_star_size))?;
    Ok(format!(
        "fixture: {windows} windows all at {}; rotation: {} points, min |S_x| {} ≥ {}, min window {:?}, refined at W: {}",
        p.window_bound(),
        rep.points.len(),
        rep.marking_min.unwrap_or(0),
        p.global_bound(),
        rep.window_min,
        pipe.report.refined.passed()
    ))
}

fn check_psi(label: &str, a: &PsiAudit) -> Result<String, String> {
    ensure(a.constancy_violations == 0, || format!("{label}: {} constancy violations", a.constancy_violations))?;
    ensure(a.max_deviation <= a.delta, || format!("{label}: |ψ − f| = {} > δ = {}", a.max_deviation, a.delta))?;
    ensure(a.separation_violations == 0, || format!("{label}: {} separation violations", a.separation_violations))?;
    ensure(a.min_separation > 0.0, || format!("{label}: equal group values"))?;
    Ok(format!("{label}: groups {:?}, dev {:.2e}, sep {:.2e}", a.groups, a.max_deviation, a.min_separation))
}

fn collapsing_map() -> Outcome {
    let sys = rotation();
    let s = SampleSet::draw(&sys, 1000, 0);
    let w = SystemPoint::circle(0.5);
    let d_w = translates_of_w(&sys, &w, 0.004, 6, &s).map_err(|e| e.to_string())?;
    let centres: Vec<f64> = (0..12).map(|i| (0.03 + i as f64 / 12.0) % 1.0).collect();
    let d1 = arc_collection(&sys, &centres, 0.003, &s).map_err(|e| e.to_string())?;
    let d2 = arc_collection(&sys, &centres.iter().map(|c| c + 0.04).collect::<Vec<_>>(), 0.003, &s)
        .map_err(|e| e.to_string())?;
    let f: Vec<Observable> = vec![cosine_observable(&sys), {
        let s2 = sys.clone();
        Arc::new(move |p: &SystemPoint| s2.angle(p) * (1.0 - s2.angle(p)) * 4.0)
    }];
    let mut out = Vec::new();
    for seed in [0, 1] {
        let psi = build_psi(&sys, &f, &d_w, &[d1.clone(), d2.clone()], 0.1, 0.02, &s, seed)
            .map_err(|e| e.to_string())?;
        out.push(check_psi(&format!("arcs seed {seed}"), &psi.audit)?);
    }

    let p = FiberParams::new(2, 1.0, 4, 5, 40, 0.25, 0.1).map_err(|e| e.to_string())?;
    let opts = PipelineOptions { torus_samples: 1000, x_samples: 300, ..PipelineOptions::default() };
    let pipe = rotation_marking_pipeline(&sys, &p, &opts).map_err(|e| e.to_string())?;
    let fp = vec![cosine_observable(&sys), cosine_observable(&sys)];
    let psi = build_psi(&sys, &fp, &pipe.d_w, &pipe.collections, p.delta, 0.01, &pipe.x_samples, 0)
        .map_err(|e| e.to_string())?;
    out.push(check_psi("marked collections", &psi.audit)?);
    Ok(out.join("; "))
}

fn fiber_vs_gamma() -> Outcome {
    let q = |n: i64, d: i64| Rational::new(n, d);
    ensure(gamma_bound(q(1, 1), q(0, 1)) == Ok(q(1, 1)), || "γ(1,0) ≠ 1".into())?;
    ensure(gamma_bound(q(2, 1), q(1, 1)) == Ok(q(4, 1)), || "γ(2,1) ≠ 4".into())?;
    ensure(gamma_bound(q(3, 1), q(1, 1)) == Ok(q(3, 2)), || "γ(3,1) ≠ 3/2".into())?;
    let floor = gamma_bound(1.0f64, 0.0f64).map_err(|e| e.to_string())?.floor() as usize;

    let eps = 0.05;
    let sys = rotation();
    let s = SampleSet::draw(&sys, 2000, 0);
    let rot = fiber_multiplicity(&sys, &[cosine_observable(&sys)], 64, 3.0 * eps, 1e-9, &s).map_err(|e| e.to_string())?;
    ensure(rot.max_mult == 1 && rot.max_mult == floor, || format!("rotation max_mult {}", rot.max_mult))?;

    let st = make_sturmian(silver_alpha(), 32).map_err(|e| e.to_string())?;
    let ss = SampleSet::draw(&st, 2000, 0);
    let stu = fiber_multiplicity(&st, &[coding_observable(&st, 32)], 64, 3.0 * eps, 1e-9, &ss).map_err(|e| e.to_string())?;
    ensure(stu.max_mult == 1, || format!("sturmian max_mult {}", stu.max_mult))?;
    Ok(format!(
        "⌊γ⌋ = {floor}; rotation max_mult {} ({} classes); sturmian max_mult {} ({} classes)",
        rot.max_mult, rot.classes, stu.max_mult, stu.classes
    ))
}

fn determinism() -> Outcome {
    let commands = [
        (Command::Kolmogorov, r#"{"params":{"n":2,"m":3}}"#),
        (Command::Intervals, r#"{"params":{"q":5}}"#),
        (Command::Levelfn, r#"{"params":{"samples":300}}"#),
        (Command::TorusChain, r#"{"params":{"samples":1200}}"#),
        (Command::FiberCheck, r#"{"params":{"samples":500}}"#),
        (Command::FullPipeline, r#"{"params":{"samples":1000,"x_samples":150}}"#),
    ];
    let mut out = Vec::new();
    for (cmd, text) in commands {
        let mut cfg = ExperimentConfig::from_json(text).map_err(|e| e.to_string())?;
        cfg.command = Some(cmd);
        cfg.params.seed = Some(7);
        let a = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let b = run_experiment(&cfg).map_err(|e| e.to_string())?;
        for fmt in [Format::Json, Format::Csv] {
            let (ea, eb) = (encode(&a, fmt).unwrap(), encode(&b, fmt).unwrap());
            ensure(ea == eb, || format!("{} {fmt:?} output differs between runs", cmd.name()))?;
        }
        out.push(format!("{} ({} rows)", cmd.name(), a.table.rows.len()));
    }
    Ok(format!("byte-identical: {}", out.join(", ")))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 10] = [
        (1, "Kolmogorov multiplicity", 10, kolmogorov_multiplicity),
        (2, "Kolmogorov–Ostrand pipeline", 60, ko_pipeline),
        (3, "interval systems meet q−2 families", 30, interval_systems),
        (4, "level-function identities", 60, level_functions),
        (5, "torus order bounds", 30, torus_orders),
        (6, "shift-chain mesh guarantee", 60, shift_chain),
        (7, "marking bound", 120, marking_bound),
        (8, "collapsing map audits", 30, collapsing_map),
        (9, "fiber multiplicity vs γ", 120, fiber_vs_gamma),
        (10, "determinism", 300, determinism),
    ];
    let mut failed = Vec::new();
    for (n, name, limit, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > Duration::from_secs(limit) => Err(format!("{detail}; exceeded {limit} s")),
            other => other,
        };
        match &outcome {
            Ok(detail) => println!("criterion {n:>2} PASS [{:.1} s] {name}: {detail}", took.as_secs_f64()),
            Err(why) => {
                println!("criterion {n:>2} FAIL [{:.1} s] {name}: {why}", took.as_secs_f64());
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
