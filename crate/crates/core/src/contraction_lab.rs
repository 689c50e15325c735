//! Sampling-based certification of contraction classes for self-maps.
//!
//! A checker evaluates `d(Tx, Ty)` against the class denominator over a set of
//! pairs and reports the largest observed ratio and any violations of a
//! claimed modulus. Pairs where the denominator is zero are skipped, since the
//! inequality holds trivially there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bellman_ops::{CiricComparison, ContractionClass, ValueOperator};
use crate::error::{DpError, Result};
use crate::value_space::{weighted_distance, ValueFunction, WeightFunction};

/// Absolute slack on `ratio ≤ modulus` to absorb floating-point rounding.
pub const RATIO_TOL: f64 = 1e-12;

/// A self-map together with the metric it is measured in.
pub trait MetricSelfMap {
    type Point: Clone;

    fn map(&self, p: &Self::Point) -> Result<Self::Point>;

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> Result<f64>;
}

/// Self-map of a closed interval `[lo, hi]` with `d(x, y) = |x − y|`.
pub struct ScalarMap {
    name: String,
    lo: f64,
    hi: f64,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub known_modulus: Option<f64>,
    pub known_fixed_point: Option<f64>,
    /// Points where the map jumps; samplers straddle them.
    pub discontinuities: Vec<f64>,
}

impl std::fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarMap")
            .field("name", &self.name)
            .field("domain", &(self.lo, self.hi))
            .field("known_modulus", &self.known_modulus)
            .field("known_fixed_point", &self.known_fixed_point)
            .field("discontinuities", &self.discontinuities)
            .finish()
    }
}

impl ScalarMap {
    pub fn new(
        name: impl Into<String>,
        lo: f64,
        hi: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(DpError::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self {
            name: name.into(),
            lo,
            hi,
            f: Box::new(f),
            known_modulus: None,
            known_fixed_point: None,
            discontinuities: Vec::new(),
        })
    }

    /// `x ↦ c x` on `[0, 1]`, `|c| ≤ 1`.
    pub fn linear(c: f64) -> Result<Self> {
        if !(c.abs() <= 1.0) {
            return Err(DpError::Domain(format!(
                "x -> {c}x does not map [0, 1] into itself"
            )));
        }
        let mut map = Self::new(
            format!("linear({c})"),
            if c < 0.0 { -1.0 } else { 0.0 },
            1.0,
            move |x| c * x,
        )?;
        map.known_modulus = Some(c.abs());
        map.known_fixed_point = Some(0.0);
        Ok(map)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= self.lo && x <= self.hi) {
            return Err(DpError::Domain(format!(
                "{} is outside the domain [{}, {}] of {}",
                x, self.lo, self.hi, self.name
            )));
        }
        Ok((self.f)(x))
    }
}

impl MetricSelfMap for ScalarMap {
    type Point = f64;

    fn map(&self, p: &f64) -> Result<f64> {
        self.eval(*p)
    }

    fn distance(&self, a: &f64, b: &f64) -> Result<f64> {
        Ok((a - b).abs())
    }
}

/// The discontinuous map `x/4` on `[0, 1]`, `x/5` on `(1, 2]`.
pub fn example1_map() -> ScalarMap {
    let mut map = ScalarMap::new("example1", 0.0, 2.0, |x| {
        if x <= 1.0 {
            x / 4.0
        } else {
            x / 5.0
        }
    })
    .expect("static interval");
    map.known_modulus = Some(0.25);
    map.known_fixed_point = Some(0.0);
    map.discontinuities = vec![1.0];
    map
}

/// A value-function operator measured in a weighted sup-norm.
pub struct WeightedOperator<'a, O: ValueOperator + ?Sized> {
    pub op: &'a O,
    pub nu: &'a WeightFunction,
}

impl<O: ValueOperator + ?Sized> MetricSelfMap for WeightedOperator<'_, O> {
    type Point = ValueFunction;

    fn map(&self, p: &ValueFunction) -> Result<ValueFunction> {
        self.op.apply(p)
    }

    fn distance(&self, a: &ValueFunction, b: &ValueFunction) -> Result<f64> {
        weighted_distance(a, b, self.nu)
    }
}

/// Pair generator for interval maps: seeded uniform pairs, a stratified grid,
/// and forced pairs straddling each discontinuity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSampler {
    pub uniform_pairs: usize,
    pub seed: u64,
    /// Grid resolution; every ordered grid pair `(i < j)` is included.
    pub grid_points: usize,
    /// Offsets `δ` used for the pairs `(b, b+δ)`, `(b−δ, b)`, `(b−δ, b+δ)` around each jump `b`.
    pub straddle_offsets: Vec<f64>,
}

impl Default for ScalarSampler {
    fn default() -> Self {
        Self {
            uniform_pairs: 100_000,
            seed: 0,
            grid_points: 101,
            straddle_offsets: vec![1e-1, 1e-3, 1e-6, 1e-9],
        }
    }
}

impl ScalarSampler {
    pub fn pairs(&self, map: &ScalarMap) -> Vec<(f64, f64)> {
        let (lo, hi) = map.domain();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut pairs =
            Vec::with_capacity(self.uniform_pairs + self.grid_points * self.grid_points / 2);
        for _ in 0..self.uniform_pairs {
            pairs.push((rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)));
        }
        if self.grid_points >= 2 {
            let step = (hi - lo) / (self.grid_points - 1) as f64;
            let grid: Vec<f64> = (0..self.grid_points)
                .map(|i| lo + step * i as f64)
                .collect();
            for i in 0..grid.len() {
                for j in i + 1..grid.len() {
                    pairs.push((grid[i], grid[j]));
                }
            }
        }
        for &b in &map.discontinuities {
            for &d in &self.straddle_offsets {
                let left = (b - d).max(lo);
                let right = (b + d).min(hi);
                pairs.push((b, right));
                pairs.push((left, b));
                pairs.push((left, right));
            }
        }
        pairs
    }
}

/// Random value-function pairs with entries uniform in `[-scale, scale]`.
pub fn value_pairs(
    n_states: usize,
    count: usize,
    scale: f64,
    seed: u64,
) -> Vec<(ValueFunction, ValueFunction)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        ValueFunction::new(
            (0..n_states)
                .map(|_| rng.gen_range(-scale..=scale))
                .collect(),
        )
        .expect("finite by construction")
    };
    (0..count)
        .map(|_| (draw(&mut rng), draw(&mut rng)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub class: ContractionClass,
    pub modulus: f64,
    /// Pairs evaluated, including skipped ones.
    pub samples: usize,
    /// Pairs with a zero denominator.
    pub skipped: usize,
    pub max_ratio: f64,
    pub worst_pair: Option<(String, String)>,
    pub violations: usize,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Combines reports over disjoint pair sets.
    pub fn merge(mut self, other: ContractionReport) -> ContractionReport {
        if other.max_ratio > self.max_ratio {
            self.max_ratio = other.max_ratio;
            self.worst_pair = other.worst_pair;
        }
        self.samples += other.samples;
        self.skipped += other.skipped;
        self.violations += other.violations;
        self
    }
}

/// Checks `d(Tx, Ty) ≤ modulus · denominator(class)` on every pair, counting
/// a violation when the ratio exceeds `modulus + RATIO_TOL`.
pub fn check_contraction<M>(
    map: &M,
    class: ContractionClass,
    modulus: f64,
    pairs: &[(M::Point, M::Point)],
) -> Result<ContractionReport>
where
    M: MetricSelfMap,
    M::Point: std::fmt::Debug,
{
    check_contraction_with_tol(map, class, modulus, RATIO_TOL, pairs)
}

/// As [`check_contraction`] with an explicit absolute slack on the ratio.
pub fn check_contraction_with_tol<M>(
    map: &M,
    class: ContractionClass,
    modulus: f64,
    ratio_tol: f64,
    pairs: &[(M::Point, M::Point)],
) -> Result<ContractionReport>
where
    M: MetricSelfMap,
    M::Point: std::fmt::Debug,
{
    if !(modulus > 0.0 && modulus < 1.0) {
        return Err(DpError::Domain(format!(
            "modulus must lie in (0, 1), got {modulus}"
        )));
    }
    let mut report = ContractionReport {
        class,
        modulus,
        samples: pairs.len(),
        skipped: 0,
        max_ratio: 0.0,
        worst_pair: None,
        violations: 0,
    };
    for (x, y) in pairs {
        let cmp = CiricComparison::from_points(|p| map.map(p), |a, b| map.distance(a, b), x, y)?;
        match cmp.ratio_for(class) {
            None => report.skipped += 1,
            Some(ratio) => {
                if ratio > modulus + ratio_tol {
                    report.violations += 1;
                }
                if ratio > report.max_ratio || report.worst_pair.is_none() {
                    report.max_ratio = ratio;
                    report.worst_pair = Some((format!("{x:?}"), format!("{y:?}")));
                }
            }
        }
    }
    if report.skipped == report.samples {
        return Err(DpError::Sampling(format!(
            "all {} pairs had a zero denominator for class {}",
            report.samples,
            class.name()
        )));
    }
    Ok(report)
}

/// Largest observed ratio; a lower bound on the true modulus of the class.
pub fn estimate_modulus<M>(
    map: &M,
    class: ContractionClass,
    pairs: &[(M::Point, M::Point)],
) -> Result<f64>
where
    M: MetricSelfMap,
    M::Point: std::fmt::Debug,
{
    // The modulus argument only drives the violation count, which is unused here.
    check_contraction(map, class, 0.5, pairs).map(|r| r.max_ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointRun {
    pub x_star: f64,
    pub iterations: usize,
    pub trajectory: Vec<f64>,
    pub converged: bool,
}

/// Picard iteration `x ← t(x)` until `|t(x) − x| ≤ tol`; returns `t(x)` at the stopping step.
pub fn iterate_to_fixed_point(
    map: &ScalarMap,
    x0: f64,
    tol: f64,
    max_iters: usize,
) -> Result<FixedPointRun> {
    if !(tol > 0.0) {
        return Err(DpError::Domain(format!("tol must be positive, got {tol}")));
    }
    let mut x = x0;
    let mut trajectory = vec![x0];
    let mut tx = map.eval(x)?;
    let mut iterations = 0;
    while (tx - x).abs() > tol {
        if iterations == max_iters {
            return Ok(FixedPointRun {
                x_star: x,
                iterations,
                trajectory,
                converged: false,
            });
        }
        x = tx;
        trajectory.push(x);
        iterations += 1;
        tx = map.eval(x)?;
    }
    Ok(FixedPointRun {
        x_star: tx,
        iterations,
        trajectory,
        converged: true,
    })
}
