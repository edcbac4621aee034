//! Lindenstrauss level functions: the expected length of the stopping walk
//! `x → x − 1` that continues with probability `φ(x)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::covers::{Region, SampleSet};
use crate::systems::{MetricSystem, SystemPoint};

pub const DEFAULT_TAIL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_STEPS: usize = 100_000;
pub const DEFAULT_ACCURACY: f64 = 1e-6;

pub type Weight = Arc<dyn Fn(&SystemPoint) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelError {
    #[error("walk from orbit offset {offset} survives {steps} steps with probability {survival}; bound {bound} exceeds {accuracy}")]
    WalkDoesNotDie { offset: i64, steps: usize, survival: f64, bound: f64, accuracy: f64 },
    #[error("translate window {n} exceeds half the system horizon {horizon}")]
    WindowTooLarge { n: u64, horizon: u64 },
    #[error("radius must be positive")]
    NonPositiveRadius,
    #[error("phi differs from 1 outside U at sample {0}")]
    PhiOutsideU(usize),
    #[error("no sample has phi = 0")]
    EmptyZeroSet,
}

/// `ξ` bound to `(X, U, φ)` with its truncation policy.
#[derive(Clone)]
pub struct LevelFunction<S> {
    pub sys: S,
    pub u: Region,
    phi: Weight,
    pub max_steps: usize,
    pub tail_tol: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelValue {
    pub value: f64,
    /// `survival · max_steps` at the step the series was cut.
    pub truncation_bound: f64,
    pub steps: usize,
}

/// `0` within `r/3` of the centre, rising linearly to `1` at distance `r`,
/// `1` beyond.
pub fn bump(d: f64, r: f64) -> f64 {
    let inner = r / 3.0;
    if d <= inner {
        0.0
    } else if d >= r {
        1.0
    } else {
        (d - inner) / (r - inner)
    }
}

impl<S: MetricSystem + Clone + 'static> LevelFunction<S> {
    pub fn new(sys: S, u: Region, phi: Weight) -> Self {
        LevelFunction {
            sys,
            u,
            phi,
            max_steps: DEFAULT_MAX_STEPS,
            tail_tol: DEFAULT_TAIL_TOL,
            accuracy: DEFAULT_ACCURACY,
        }
    }

    /// `U` = open ball of radius `r` around `centre`, `φ` the default bump.
    pub fn ball(sys: S, centre: SystemPoint, r: f64, samples: &SampleSet) -> Result<Self, LevelError> {
        if r <= 0.0 {
            return Err(LevelError::NonPositiveRadius);
        }
        let (s1, c1) = (sys.clone(), centre.clone());
        let u = Region::from_fn(0, 0, move |p| s1.dist(p, &c1) < r, samples);
        let s2 = sys.clone();
        let phi: Weight = Arc::new(move |p| bump(s2.dist(p, &centre), r));
        Ok(LevelFunction::new(sys, u, phi))
    }

    pub fn with_truncation(mut self, max_steps: usize, tail_tol: f64) -> Self {
        self.max_steps = max_steps;
        self.tail_tol = tail_tol;
        self
    }

    pub fn with_accuracy(mut self, accuracy: f64) -> Self {
        self.accuracy = accuracy;
        self
    }

    pub fn phi(&self, p: &SystemPoint) -> f64 {
        (self.phi)(p)
    }

    /// Checks `φ = 1` off `U` and that some sample has `φ = 0`.
    pub fn validate(&self, samples: &SampleSet) -> Result<(), LevelError> {
        let hits: std::collections::HashSet<usize> = self.u.hits().iter().copied().collect();
        for (i, p) in samples.points.iter().enumerate() {
            if !hits.contains(&i) && self.phi(p) != 1.0 {
                return Err(LevelError::PhiOutsideU(i));
            }
        }
        if !samples.points.iter().any(|p| self.phi(p) == 0.0) {
            return Err(LevelError::EmptyZeroSet);
        }
        Ok(())
    }

    /// `ξ(x) = Σ_{s≥1} s · Π_{j<s} φ(x−j) · (1 − φ(x−s))`, cut once the
    /// survival product drops below `tail_tol` or after `max_steps` terms.
    pub fn eval(&self, x: &SystemPoint) -> Result<LevelValue, LevelError> {
        let mut survival = self.phi(x);
        let mut value = 0.0;
        let mut s = 0usize;
        while survival >= self.tail_tol && s < self.max_steps {
            s += 1;
            let next = self.phi(&self.sys.act(x, -(s as i64)));
            value += s as f64 * survival * (1.0 - next);
            survival *= next;
        }
        let bound = survival * self.max_steps as f64;
        if bound > self.accuracy {
            return Err(LevelError::WalkDoesNotDie {
                offset: x.orbit().map_or(0, |o| o.offset),
                steps: s,
                survival,
                bound,
                accuracy: self.accuracy,
            });
        }
        Ok(LevelValue { value, truncation_bound: bound, steps: s })
    }

    pub fn value(&self, x: &SystemPoint) -> Result<f64, LevelError> {
        self.eval(x).map(|v| v.value)
    }

    /// `ξ(x), ξ(x+1), …, ξ(x+len−1)` from one series evaluation and the
    /// recursion `ξ(y+1) = φ(y+1)(ξ(y) + 1)`.
    pub fn orbit_values(&self, x: &SystemPoint, len: usize) -> Result<Vec<f64>, LevelError> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return Ok(out);
        }
        let mut v = self.value(x)?;
        out.push(v);
        for z in 1..len {
            v = self.phi(&self.sys.act(x, z as i64)) * (v + 1.0);
            out.push(v);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub recursion_residual: f64,
    pub translation_residual: f64,
    pub excluded_count: usize,
    pub checked_count: usize,
    pub truncation_bound: f64,
}

/// Recursion residual over all samples, and translation residual
/// `|ξ(x+z) − ξ(x) − z|`, `|z| ≤ n`, over samples with `x − j ∉ U` for every
/// `|j| ≤ n`.
pub fn level_report<S: MetricSystem + Clone + 'static>(
    lf: &LevelFunction<S>,
    n: u64,
    samples: &SampleSet,
) -> Result<LevelReport, LevelError> {
    if 2 * n > lf.sys.horizon() {
        return Err(LevelError::WindowTooLarge { n, horizon: lf.sys.horizon() });
    }
    let n = n as i64;
    let per: Vec<Result<(f64, Option<f64>, f64), LevelError>> = samples
        .points
        .par_iter()
        .map(|x| {
            let here = lf.eval(x)?;
            let next = lf.eval(&lf.sys.act(x, 1))?;
            let rec = (next.value - lf.phi(&lf.sys.act(x, 1)) * (here.value + 1.0)).abs();
            let mut bound = here.truncation_bound.max(next.truncation_bound);
            let clear = (-n..=n).all(|j| !lf.u.contains(&lf.sys.act(x, -j)));
            let trans = if clear {
                let mut worst = 0.0f64;
                for z in -n..=n {
                    let v = lf.eval(&lf.sys.act(x, z))?;
                    bound = bound.max(v.truncation_bound);
                    worst = worst.max((v.value - here.value - z as f64).abs());
                }
                Some(worst)
            } else {
                None
            };
            Ok((rec, trans, bound))
        })
        .collect();
    let per = per.into_iter().collect::<Result<Vec<_>, _>>()?;
    let checked: Vec<f64> = per.iter().filter_map(|p| p.1).collect();
    Ok(LevelReport {
        recursion_residual: per.iter().map(|p| p.0).fold(0.0, f64::max),
        translation_residual: checked.iter().copied().fold(0.0, f64::max),
        excluded_count: per.len() - checked.len(),
        checked_count: checked.len(),
        truncation_bound: per.iter().map(|p| p.2).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{make_rotation, silver_alpha, DynSystem};
    use proptest::prelude::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn setup() -> (DynSystem, SampleSet, LevelFunction<DynSystem>) {
        let sys = make_rotation(silver_alpha()).unwrap();
        let s = SampleSet::draw(&sys, 200, 0);
        let lf = LevelFunction::ball(sys.clone(), SystemPoint::circle(0.5), 0.05, &s).unwrap();
        (sys, s, lf)
    }

    /// Walks back to the first point with `φ = 0`, then runs
    /// `v ← φ(y)(v + 1)` forward to `x`.
    fn dp_oracle(lf: &LevelFunction<DynSystem>, x: &SystemPoint) -> f64 {
        let mut s0 = 0i64;
        while lf.phi(&lf.sys.act(x, -s0)) != 0.0 {
            s0 += 1;
        }
        let mut v = 0.0;
        for j in (0..s0).rev() {
            v = lf.phi(&lf.sys.act(x, -j)) * (v + 1.0);
        }
        v
    }

    #[test]
    fn zero_weight_point_has_level_zero() {
        let (_, _, lf) = setup();
        assert_eq!(lf.value(&SystemPoint::circle(0.5)).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_walk_counts_steps() {
        let sys = make_rotation(silver_alpha()).unwrap();
        let s = SampleSet::draw(&sys, 10, 0);
        let x = SystemPoint::circle(0.2);
        // φ = 0 exactly at x − 3, 1 elsewhere on the orbit segment
        let target = sys.act(&x, -3);
        let s2 = sys.clone();
        let phi: Weight = Arc::new(move |p| if s2.dist(p, &target) < 1e-9 { 0.0 } else { 1.0 });
        let u = Region::from_fn(0, 0, |_| false, &s);
        let lf = LevelFunction::new(sys, u, phi);
        assert_eq!(lf.value(&x).unwrap(), 3.0);
    }

    #[test]
    fn series_matches_dp_oracle() {
        let (sys, _, lf) = setup();
        for p in sys.sample(20, 7) {
            let v = lf.value(&p).unwrap();
            assert!((v - dp_oracle(&lf, &p)).abs() < 1e-8);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_series() {
        let (_, _, lf) = setup();
        let x = SystemPoint::circle(0.73);
        let exact = lf.value(&x).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let trials = 4000;
        let mut total = 0usize;
        for _ in 0..trials {
            let mut y = x.clone();
            let mut steps = 0;
            while rng.random::<f64>() < lf.phi(&y) {
                y = lf.sys.act(&y, -1);
                steps += 1;
            }
            total += steps;
        }
        let mean = total as f64 / trials as f64;
        assert!((mean - exact).abs() < 0.05 * exact.max(1.0), "{mean} vs {exact}");
    }

    #[test]
    fn report_identities_hold() {
        let (sys, s, lf) = setup();
        lf.validate(&s).unwrap();
        let rep = level_report(&lf, 3, &s).unwrap();
        assert!(rep.recursion_residual <= 1e-6);
        assert!(rep.translation_residual <= 1e-6);
        assert!(rep.checked_count > 0 && rep.excluded_count > 0);
        assert!(level_report(&lf, sys.horizon(), &s).is_err());
    }

    #[test]
    fn points_near_u_are_excluded() {
        let (sys, _, lf) = setup();
        // x with x − 3 at the centre of U lies in U + 3
        let x = sys.act(&SystemPoint::circle(0.5), 3);
        let single = SampleSet::from_points("one", vec![x]);
        let rep = level_report(&lf, 5, &single).unwrap();
        assert_eq!(rep.excluded_count, 1);
        assert_eq!(rep.checked_count, 0);
    }

    #[test]
    fn walk_that_never_dies_is_an_error() {
        let sys = make_rotation(silver_alpha()).unwrap();
        let s = SampleSet::draw(&sys, 10, 0);
        let u = Region::from_fn(0, 0, |_| true, &s);
        let lf = LevelFunction::new(sys, u, Arc::new(|_| 1.0)).with_truncation(1000, 1e-10);
        assert!(matches!(lf.eval(&SystemPoint::circle(0.1)), Err(LevelError::WalkDoesNotDie { .. })));
    }

    #[test]
    fn orbit_values_follow_translation() {
        let (_, _, lf) = setup();
        let x = SystemPoint::circle(0.11);
        let vals = lf.orbit_values(&x, 30).unwrap();
        for (z, v) in vals.iter().enumerate() {
            assert!((v - lf.value(&lf.sys.act(&x, z as i64)).unwrap()).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn level_nonnegative_and_truncation_monotone(t in 0.0f64..1.0, steps in 10usize..400) {
            let (_, _, lf) = setup();
            let x = SystemPoint::circle(t);
            let v = lf.value(&x).unwrap();
            prop_assert!(v >= 0.0);
            let loose = lf.clone().with_truncation(steps, 1e-10).with_accuracy(f64::INFINITY);
            let tight = lf.clone().with_truncation(steps * 2, 1e-10).with_accuracy(f64::INFINITY);
            let (a, b) = (loose.eval(&x).unwrap(), tight.eval(&x).unwrap());
            prop_assert!(b.truncation_bound <= a.truncation_bound * 2.0);
            prop_assert!(b.truncation_bound / (2 * steps) as f64 <= a.truncation_bound / steps as f64);
        }
    }
}
