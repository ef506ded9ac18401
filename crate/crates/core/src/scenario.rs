//! Canonical, fully reproducible experiment configurations: a radial-ball
//! contraction toward the origin mass ("example1") and a rotation-plus-
//! damping affine interaction field whose equilibrium is a deterministic
//! quantization of a centered Gaussian ("example2"), each with named
//! closed-form reference curves.

use crate::dynamics::FieldSpec;
use crate::lyapunov::LyapunovSpec;
use crate::measure::DiscreteMeasure;
use crate::sampling;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Replace the canonical initial cloud with a seeded uniform cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomInitial {
    pub atoms: usize,
    pub spread: f64,
}

/// Tunable scenario parameters. Defaults reproduce the canonical runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    /// Contraction rate of the radial-ball scenario.
    pub alpha: f64,
    /// Damping rate of the affine scenario.
    pub k: f64,
    /// Number of atoms in the Gaussian quantization (a perfect square).
    pub quantization_points: usize,
    /// Optional seeded random initial cloud instead of the canonical one.
    pub random_initial: Option<RandomInitial>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { alpha: 1.0, k: 1.0, quantization_points: 16, random_initial: None }
    }
}

/// A named, fully built experiment configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub field: FieldSpec,
    pub lyapunov: LyapunovSpec,
    pub initial: DiscreteMeasure,
    pub target: DiscreteMeasure,
    pub params: ScenarioParams,
}

impl Scenario {
    /// The closed-form reference curves this scenario registers.
    pub fn reference_names(&self) -> &'static [&'static str] {
        match self.name.as_str() {
            "example1" => &["trajectory", "V"],
            _ => &["mean_norm"],
        }
    }
}

/// A reference curve sample: either a full measure or a scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum RefValue {
    Measure(DiscreteMeasure),
    Scalar(f64),
}

fn canonical_pair() -> DiscreteMeasure {
    DiscreteMeasure::uniform(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).expect("canonical cloud is valid")
}

fn canonical_square() -> DiscreteMeasure {
    DiscreteMeasure::uniform(vec![
        vec![1.5, 0.5],
        vec![0.5, 0.5],
        vec![1.0, 1.0],
        vec![1.0, 0.0],
    ])
    .expect("canonical cloud is valid")
}

/// Builds a registered scenario.
///
/// - `"example1"`: images `B(0, alpha (|x| + m2(nu)))`, Lyapunov function
///   half the squared quadratic moment with rate `alpha`, target the unit
///   mass at the origin, canonical initial cloud `{(1,0), (-1,0)}`.
/// - `"example2"`: the affine field `x -> Ax + B mean(mu)` with a rotation
///   `A = [[0,1],[-1,0]]` and damping `B = -kI`, Lyapunov function half the
///   squared transport distance to the Gaussian quantization (rate `2k`),
///   canonical initial cloud `{(1.5,.5), (.5,.5), (1,1), (1,0)}`.
///
/// The seed is consumed only when `params.random_initial` replaces the
/// canonical initial cloud; generation is deterministic in the seed.
pub fn build_scenario(name: &str, params: &ScenarioParams, seed: u64) -> Result<Scenario> {
    let initial_for = |canonical: DiscreteMeasure| -> DiscreteMeasure {
        match params.random_initial {
            Some(RandomInitial { atoms, spread }) => {
                let mut rng = sampling::rng(seed);
                sampling::uniform_cloud(&mut rng, atoms.max(1), 2, spread)
            }
            None => canonical,
        }
    };
    match name {
        "example1" => {
            let field = FieldSpec::ball(params.alpha)?;
            let lyapunov = LyapunovSpec::half_m2_squared(params.alpha)?;
            Ok(Scenario {
                name: name.to_string(),
                field,
                lyapunov,
                initial: initial_for(canonical_pair()),
                target: DiscreteMeasure::dirac_origin(2),
                params: *params,
            })
        }
        "example2" => {
            let a = vec![vec![0.0, 1.0], vec![-1.0, 0.0]];
            let b = vec![vec![-params.k, 0.0], vec![0.0, -params.k]];
            let field = FieldSpec::linear(a, b, params.k)?;
            let target = gauss_quantization(params.quantization_points)?;
            let lyapunov = LyapunovSpec::half_w2_squared_to(target.clone(), 2.0 * params.k)?;
            Ok(Scenario {
                name: name.to_string(),
                field,
                lyapunov,
                initial: initial_for(canonical_square()),
                target,
                params: *params,
            })
        }
        _ => Err(Error::UnknownScenario { name: name.to_string() }),
    }
}

/// Samples a named closed-form reference curve at time `t`.
///
/// - example1 `"trajectory"`: the initial cloud pushed forward by
///   `x -> e^{-alpha t} x`.
/// - example1 `"V"`: `e^{-2 alpha t} V(mu_0)`.
/// - example2 `"mean_norm"`: `e^{-k t} |mean(mu_0)|` (the rotation part is
///   skew and preserves the mean's norm; only the damping contracts it).
pub fn analytic_reference(scenario: &Scenario, name: &str, t: f64) -> Result<RefValue> {
    match (scenario.name.as_str(), name) {
        ("example1", "trajectory") => {
            let decay = (-scenario.params.alpha * t).exp();
            let pushed = scenario
                .initial
                .push_forward(|x| x.iter().map(|&c| decay * c).collect())?;
            Ok(RefValue::Measure(pushed))
        }
        ("example1", "V") => {
            let m2 = scenario.initial.moment2().value;
            Ok(RefValue::Scalar((-2.0 * scenario.params.alpha * t).exp() * 0.5 * m2 * m2))
        }
        ("example2", "mean_norm") => {
            let mean = scenario.initial.mean();
            let norm0 = mean.iter().map(|c| c * c).sum::<f64>().sqrt();
            Ok(RefValue::Scalar((-scenario.params.k * t).exp() * norm0))
        }
        _ => Err(Error::UnknownReference { name: name.to_string(), scenario: scenario.name.clone() }),
    }
}

// ======================================================================
// Deterministic Gaussian quantization
// ======================================================================

/// Physicists' Hermite polynomial `H_m(x)` by the three-term recurrence.
fn hermite_value(m: usize, x: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let (mut prev, mut curr) = (1.0, 2.0 * x);
    for k in 1..m {
        let next = 2.0 * x * curr - 2.0 * (k as f64) * prev;
        prev = curr;
        curr = next;
    }
    curr
}

fn bisect_root(m: usize, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = hermite_value(m, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let f_mid = hermite_value(m, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_lo < 0.0) == (f_mid < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Strictly positive roots of `H_m`, ascending, found by a sign scan plus
/// bisection over `(0, sqrt(2m+1) + 1]`.
fn positive_hermite_roots(m: usize) -> Result<Vec<f64>> {
    let expected = m / 2;
    if expected == 0 {
        return Ok(Vec::new());
    }
    let upper = (2.0 * m as f64 + 1.0).sqrt() + 1.0;
    let samples = 80 * m;
    let start = 1e-9;
    let step = (upper - start) / samples as f64;
    let mut roots = Vec::with_capacity(expected);
    let mut x_prev = start;
    let mut f_prev = hermite_value(m, x_prev);
    for s in 1..=samples {
        let x = start + step * s as f64;
        let f = hermite_value(m, x);
        if f == 0.0 {
            roots.push(x);
        } else if (f_prev < 0.0) != (f < 0.0) {
            roots.push(bisect_root(m, x_prev, x));
        }
        x_prev = x;
        f_prev = f;
    }
    if roots.len() != expected {
        return Err(Error::SolverStalled {
            reason: format!("found {} of {} positive roots for order {m}", roots.len(), expected),
        });
    }
    Ok(roots)
}

/// One-dimensional Gauss–Hermite rule of order `m`: nodes are the roots of
/// `H_m` (negative nodes exact negations of the positive ones, sharing the
/// same weight bitwise), weights `2^{m-1} m! sqrt(pi) / (m^2 H_{m-1}(x)^2)`.
fn gauss_hermite_rule(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::InvalidParameter { name: "order", reason: "must be at least 1".to_string() });
    }
    let positive = positive_hermite_roots(m)?;
    let factorial: f64 = (1..=m).map(|k| k as f64).product();
    let scale = 2.0_f64.powi(m as i32 - 1) * factorial * std::f64::consts::PI.sqrt() / (m * m) as f64;
    let weight_at = |x: f64| {
        let h = hermite_value(m - 1, x);
        scale / (h * h)
    };
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for &r in positive.iter().rev() {
        nodes.push(-r);
        weights.push(weight_at(r));
    }
    if m % 2 == 1 {
        nodes.push(0.0);
        weights.push(weight_at(0.0));
    }
    for &r in &positive {
        nodes.push(r);
        weights.push(weight_at(r));
    }
    Ok((nodes, weights))
}

/// Deterministic `n`-point quantization of the planar Gaussian with density
/// proportional to `e^{-(x1^2 + x2^2)}`: the tensor product of a 1-D
/// Gauss–Hermite rule with renormalized weights. `n` must be a perfect
/// square so the grid is a full product. The grid is symmetric under
/// negation, so its mean vanishes to machine precision, and the rule's
/// polynomial exactness makes the squared quadratic moment exactly 1 for
/// orders of at least 2.
pub fn gauss_quantization(n: usize) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "quantization_points", reason: "must be positive".to_string() });
    }
    let m = (n as f64).sqrt().round() as usize;
    if m * m != n {
        return Err(Error::InvalidParameter {
            name: "quantization_points",
            reason: format!("{n} is not a perfect square"),
        });
    }
    let (nodes, weights) = gauss_hermite_rule(m)?;
    let mut points = Vec::with_capacity(n);
    let mut grid_weights = Vec::with_capacity(n);
    for (i, &xi) in nodes.iter().enumerate() {
        for (j, &xj) in nodes.iter().enumerate() {
            points.push(vec![xi, xj]);
            grid_weights.push(weights[i] * weights[j]);
        }
    }
    let total: f64 = grid_weights.iter().sum();
    for w in &mut grid_weights {
        *w /= total;
    }
    DiscreteMeasure::new(points, grid_weights)
}
