//! Set-valued velocity fields and admissible particle flows.
//!
//! A field assigns each (position, crowd state) pair a ball-shaped set of
//! admissible velocities; single-valued fields are balls of radius zero.
//! Trajectories are explicit Euler flows of the particle system where each
//! step's velocity is an exact member of the current velocity set: policy
//! proposals are projected onto the ball, so admissibility at grid nodes
//! holds by construction and the audit only measures rounding.

use crate::measure::{norm, norm_sq, DiscreteMeasure};
use crate::sampling;
use crate::tol::MONOTONE_TOL;
use crate::transport::Displacement;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

// ======================================================================
// Velocity sets
// ======================================================================

/// Closed ball of admissible velocities. `radius == 0` is a singleton.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSet {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallSet {
    pub fn singleton(v: Vec<f64>) -> Self {
        Self { center: v, radius: 0.0 }
    }

    pub fn is_singleton(&self) -> bool {
        self.radius == 0.0
    }

    /// Distance from `v` to the ball: max(0, |v - center| - radius).
    pub fn dist(&self, v: &[f64]) -> f64 {
        let gap = dist(v, &self.center) - self.radius;
        gap.max(0.0)
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.dist(v) <= tol
    }

    /// Nearest point of the ball to `v`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let d = dist(v, &self.center);
        if d <= self.radius {
            return v.to_vec();
        }
        let scale = self.radius / d;
        self.center
            .iter()
            .zip(v)
            .map(|(&c, &vc)| c + scale * (vc - c))
            .collect()
    }

    /// Minimizer of `<p, v>` over the ball: `center - radius * p/|p|`, the
    /// center when `p = 0`.
    pub fn support_argmin(&self, p: &[f64]) -> Vec<f64> {
        let pn = norm(p);
        if pn == 0.0 || self.radius == 0.0 {
            return self.center.clone();
        }
        let scale = self.radius / pn;
        self.center.iter().zip(p).map(|(&c, &pc)| c - scale * pc).collect()
    }

    /// Minimum of `<p, v>` over the ball: `<p, center> - radius * |p|`.
    pub fn support_min(&self, p: &[f64]) -> f64 {
        dot(p, &self.center) - self.radius * norm(p)
    }
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

// ======================================================================
// Velocity field families
// ======================================================================

type CenterFn = Arc<dyn Fn(&[f64], &DiscreteMeasure) -> Vec<f64> + Send + Sync>;
type RadiusFn = Arc<dyn Fn(&[f64], &DiscreteMeasure) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind {
    /// `F(x, nu) = B(0, alpha * (|x| + m2(nu)))`.
    Ball { alpha: f64 },
    /// Single-valued `F(x, mu) = A x + B * mean(mu)` with `<Bz,z> <= -k|z|^2`.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, k: f64 },
    /// Ball with caller-supplied center/radius descriptors.
    GenericBall { center: CenterFn, radius: RadiusFn },
}

/// A set-valued velocity field together with its Lipschitz constant and the
/// size `k_f` of its value at the origin state, both supplied analytically
/// per variant.
#[derive(Clone)]
pub struct FieldSpec {
    kind: FieldKind,
    name: String,
    pub lipschitz_l: f64,
    pub k_f: f64,
}

impl std::fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSpec")
            .field("name", &self.name)
            .field("lipschitz_l", &self.lipschitz_l)
            .field("k_f", &self.k_f)
            .finish()
    }
}

impl FieldSpec {
    /// Ball field of strength `alpha`: images `B(0, alpha(|x| + m2))`,
    /// Lipschitz constant `alpha`, zero velocity at the origin state.
    pub fn ball(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter { name: "alpha", reason: format!("must be positive and finite, got {alpha}") });
        }
        Ok(Self { kind: FieldKind::Ball { alpha }, name: format!("ball(alpha={alpha})"), lipschitz_l: alpha, k_f: 0.0 })
    }

    /// Single-valued affine nonlocal field `A x + B mean(mu)`.
    ///
    /// `B` must be uniformly monotone: `<Bz, z> <= -k |z|^2`, verified on
    /// 200 seeded Gaussian draws to [`MONOTONE_TOL`]. The Lipschitz constant
    /// is `max(|A|_2, |B|_2)`; the value at the origin state is zero.
    pub fn linear(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter { name: "k", reason: format!("must be positive and finite, got {k}") });
        }
        let d = a.len();
        for m in [&a, &b] {
            if m.len() != d || m.iter().any(|row| row.len() != d) {
                return Err(Error::InvalidParameter { name: "matrix", reason: "A and B must be square with equal dimension".into() });
            }
        }
        if d == 0 {
            return Err(Error::InvalidParameter { name: "matrix", reason: "dimension must be positive".into() });
        }
        let mut rng = sampling::rng(0xB0DA);
        for _ in 0..200 {
            let z = sampling::gaussian_vector(&mut rng, d);
            let bz = mat_vec(&b, &z);
            let found = dot(&bz, &z);
            let required = -k * norm_sq(&z);
            if found > required + MONOTONE_TOL {
                return Err(Error::NotMonotone { found, required });
            }
        }
        let l = spectral_norm(&a).max(spectral_norm(&b));
        Ok(Self { kind: FieldKind::Linear { a, b, k }, name: format!("linear(k={k})"), lipschitz_l: l, k_f: 0.0 })
    }

    /// Ball field with explicit center/radius descriptors. The caller owns
    /// the Lipschitz constant and origin bound.
    pub fn generic_ball(name: &str, center: CenterFn, radius: RadiusFn, lipschitz_l: f64, k_f: f64) -> Result<Self> {
        if lipschitz_l < 0.0 || k_f < 0.0 || !lipschitz_l.is_finite() || !k_f.is_finite() {
            return Err(Error::InvalidParameter { name: "constants", reason: "lipschitz_l and k_f must be finite and nonnegative".into() });
        }
        Ok(Self { kind: FieldKind::GenericBall { center, radius }, name: name.to_string(), lipschitz_l, k_f })
    }

    /// The stationary field: every image is the origin singleton.
    pub fn zero() -> Self {
        Self::generic_ball(
            "zero",
            Arc::new(|x: &[f64], _: &DiscreteMeasure| vec![0.0; x.len()]),
            Arc::new(|_: &[f64], _: &DiscreteMeasure| 0.0),
            0.0,
            0.0,
        )
        .expect("zero field constants are valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    /// Growth constant C = max(L, K_F) of the bound |v| <= C(1+m2)(1+|x|).
    pub fn growth_constant(&self) -> f64 {
        self.lipschitz_l.max(self.k_f)
    }

    /// Velocity set at position `x` under crowd state `nu`.
    pub fn eval(&self, x: &[f64], nu: &DiscreteMeasure) -> Result<BallSet> {
        if x.len() != nu.dim() {
            return Err(Error::DimensionMismatch { left: x.len(), right: nu.dim() });
        }
        match &self.kind {
            FieldKind::Ball { alpha } => {
                let radius = alpha * (norm(x) + nu.moment2().value);
                Ok(BallSet { center: vec![0.0; x.len()], radius })
            }
            FieldKind::Linear { a, b, .. } => {
                if a.len() != x.len() {
                    return Err(Error::DimensionMismatch { left: a.len(), right: x.len() });
                }
                let mut v = mat_vec(a, x);
                let bm = mat_vec(b, &nu.mean());
                for (vc, &bc) in v.iter_mut().zip(&bm) {
                    *vc += bc;
                }
                Ok(BallSet::singleton(v))
            }
            FieldKind::GenericBall { center, radius } => {
                let c = center(x, nu);
                if c.len() != x.len() {
                    return Err(Error::DimensionMismatch { left: x.len(), right: c.len() });
                }
                let r = radius(x, nu);
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(Error::InvalidParameter { name: "radius", reason: format!("descriptor returned {r}") });
                }
                Ok(BallSet { center: c, radius: r })
            }
        }
    }
}

pub(crate) fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}

/// Spectral norm |A|_2 via power iteration on A^T A. Deterministic start
/// vector; small fixed iteration count is ample for the low dimensions used.
pub fn spectral_norm(a: &[Vec<f64>]) -> f64 {
    let d = a.len();
    if d == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let av = mat_vec(a, &v);
        // w = A^T (A v)
        let mut w = vec![0.0; d];
        for (i, row) in a.iter().enumerate() {
            for (wc, &rc) in w.iter_mut().zip(row) {
                *wc += rc * av[i];
            }
        }
        let n = norm(&w);
        if n == 0.0 {
            return 0.0;
        }
        lambda = n;
        for (vc, &wc) in v.iter_mut().zip(&w) {
            *vc = wc / n;
        }
    }
    lambda.sqrt()
}

// ======================================================================
// Selection policies
// ======================================================================

pub type VelocityFn = Arc<dyn Fn(f64, usize, &[f64], &DiscreteMeasure) -> Vec<f64> + Send + Sync>;
pub type PSourceFn = Arc<dyn Fn(&DiscreteMeasure) -> Option<Displacement> + Send + Sync>;

/// How the integrator picks one velocity out of each velocity set.
#[derive(Clone)]
pub enum Selection {
    /// Named closed-form proposal `v(t, i, x, mu)` (particle index included), projected into the set.
    Analytic { name: String, velocity: VelocityFn },
    /// Steers against a displacement source: at each step the proposal for
    /// particle i is the set point minimizing `<p(x_i), v>`. When the source
    /// yields no valid displacement the previous valid one is reused (the
    /// identity displacement before any exists); fallbacks are recorded.
    Greedy { name: String, p_source: PSourceFn },
    /// Set point minimizing `<x, v>`: steepest descent for |x|^2.
    MaxContraction,
    /// Arbitrary caller proposal, projected into the set.
    Custom { name: String, velocity: VelocityFn },
}

impl Selection {
    pub fn analytic(name: &str, velocity: VelocityFn) -> Self {
        Self::Analytic { name: name.to_string(), velocity }
    }

    pub fn greedy(name: &str, p_source: PSourceFn) -> Self {
        Self::Greedy { name: name.to_string(), p_source }
    }

    pub fn custom(name: &str, velocity: VelocityFn) -> Self {
        Self::Custom { name: name.to_string(), velocity }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Analytic { name, .. } | Self::Greedy { name, .. } | Self::Custom { name, .. } => name,
            Self::MaxContraction => "max-contraction",
        }
    }
}

/// Where the greedy policy's displacement came from at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PFallback {
    /// Policy does not use a displacement source.
    NotApplicable,
    /// Fresh valid displacement from the source.
    Fresh,
    /// Source invalid; previous valid displacement reused.
    Previous,
    /// Source invalid with no previous valid displacement; identity used.
    DefaultIdentity,
}

/// Per-step integration diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Max over particles of dist(v, F(x, mu)) after projection (rounding).
    pub membership_residual: f64,
    pub p_fallback: PFallback,
}

// ======================================================================
// Trajectories
// ======================================================================

/// Euler particle flow on a uniform time grid. All node measures share the
/// weight vector and support cardinality of the initial cloud; `times` are
/// strictly increasing multiples of `dt` counted from `start_step`.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub start_step: u64,
    pub times: Vec<f64>,
    pub measures: Vec<DiscreteMeasure>,
    pub velocities: Vec<Displacement>,
    pub selection_name: String,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl TrajectoryRecord {
    pub fn initial(&self) -> &DiscreteMeasure {
        &self.measures[0]
    }

    pub fn terminal(&self) -> &DiscreteMeasure {
        self.measures.last().expect("trajectory has at least one node")
    }

    pub fn steps(&self) -> usize {
        self.velocities.len()
    }

    /// Largest particle speed over all intervals.
    pub fn max_speed(&self) -> f64 {
        self.velocities
            .iter()
            .flat_map(|d| d.vectors().iter())
            .map(|v| norm(v))
            .fold(0.0, f64::max)
    }
}

/// Integrates `steps` Euler steps of width `dt` starting at grid index
/// `start_step` (so node times are `(start_step + j) * dt`, which makes
/// piecewise runs reproduce a single run bit-for-bit).
pub fn integrate_steps(
    field: &FieldSpec,
    mu0: &DiscreteMeasure,
    selection: &Selection,
    dt: f64,
    steps: usize,
    start_step: u64,
) -> Result<TrajectoryRecord> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter { name: "dt", reason: format!("must be positive and finite, got {dt}") });
    }
    let n = mu0.len();
    let dim = mu0.dim();
    let mut measures = Vec::with_capacity(steps + 1);
    let mut velocities = Vec::with_capacity(steps);
    let mut diagnostics = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps + 1);
    measures.push(mu0.clone());
    times.push(start_step as f64 * dt);

    let mut last_valid_p: Option<Displacement> = None;

    for step in 0..steps {
        let current = measures.last().expect("nonempty").clone();
        let t = (start_step + step as u64) as f64 * dt;

        // Greedy displacement for this step, if the policy needs one.
        let (p_vectors, fallback) = match selection {
            Selection::Greedy { p_source, .. } => match p_source(&current) {
                Some(p) => {
                    if p.vectors().len() != n {
                        return Err(Error::SupportMismatch { displacement: p.vectors().len(), measure: n });
                    }
                    let vectors = p.vectors().to_vec();
                    last_valid_p = Some(p);
                    (Some(vectors), PFallback::Fresh)
                }
                None => match &last_valid_p {
                    Some(p) => (Some(p.vectors().to_vec()), PFallback::Previous),
                    None => (Some(current.points().to_vec()), PFallback::DefaultIdentity),
                },
            },
            _ => (None, PFallback::NotApplicable),
        };

        let mut vectors = Vec::with_capacity(n);
        let mut residual: f64 = 0.0;
        for i in 0..n {
            let x = current.point(i);
            let ball = field.eval(x, &current)?;
            let v = match selection {
                Selection::Analytic { velocity, .. } | Selection::Custom { velocity, .. } => {
                    let proposal = velocity(t, i, x, &current);
                    if proposal.len() != dim {
                        return Err(Error::DimensionMismatch { left: dim, right: proposal.len() });
                    }
                    ball.project(&proposal)
                }
                Selection::MaxContraction => ball.support_argmin(x),
                Selection::Greedy { .. } => {
                    let p = &p_vectors.as_ref().expect("greedy displacement present")[i];
                    ball.support_argmin(p)
                }
            };
            residual = residual.max(ball.dist(&v));
            vectors.push(v);
        }

        let next_points: Vec<Vec<f64>> = current
            .points()
            .iter()
            .zip(&vectors)
            .map(|(x, v)| x.iter().zip(v).map(|(&xc, &vc)| xc + dt * vc).collect())
            .collect();
        if next_points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::IntegrationBlowUp { step });
        }
        let next = DiscreteMeasure::new(next_points, current.weights().to_vec())?;

        velocities.push(Displacement::new(current, vectors)?);
        diagnostics.push(StepDiagnostics { membership_residual: residual, p_fallback: fallback });
        times.push((start_step + step as u64 + 1) as f64 * dt);
        measures.push(next);
    }

    Ok(TrajectoryRecord {
        dt,
        start_step,
        times,
        measures,
        velocities,
        selection_name: selection.name().to_string(),
        diagnostics,
    })
}

/// Integrates over `[0, T]` with `round(T/dt)` uniform steps.
pub fn integrate(
    field: &FieldSpec,
    mu0: &DiscreteMeasure,
    selection: &Selection,
    dt: f64,
    t_total: f64,
) -> Result<TrajectoryRecord> {
    if !(t_total >= dt) {
        return Err(Error::InvalidParameter { name: "T", reason: format!("horizon {t_total} shorter than one step {dt}") });
    }
    let steps = (t_total / dt).round().max(1.0) as usize;
    integrate_steps(field, mu0, selection, dt, steps, 0)
}

// ======================================================================
// Admissibility audit
// ======================================================================

/// Report of `check_admissible`: membership residuals plus the growth-bound
/// audit |v| <= C(1+m2(nu))(1+|x|) with C = max(L, K_F).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub max_residual: f64,
    pub per_step_residual: Vec<f64>,
    pub pass: bool,
    pub max_speed: f64,
    /// Max over steps and particles of |v| - C(1+m2)(1+|x|). Nonpositive
    /// when the growth bound holds.
    pub growth_margin: f64,
    pub growth_ok: bool,
}

/// Recomputes, for every step and particle, the distance of the recorded
/// velocity to the field's velocity set, independently of the integrator's
/// own diagnostics.
pub fn check_admissible(field: &FieldSpec, traj: &TrajectoryRecord, tol: f64) -> Result<AdmissibilityReport> {
    let c = field.growth_constant();
    let mut per_step = Vec::with_capacity(traj.steps());
    let mut max_residual: f64 = 0.0;
    let mut max_speed: f64 = 0.0;
    let mut growth_margin = f64::NEG_INFINITY;
    for (step, vel) in traj.velocities.iter().enumerate() {
        let mu = &traj.measures[step];
        let m2 = mu.moment2().value;
        let mut step_residual: f64 = 0.0;
        for (i, v) in vel.vectors().iter().enumerate() {
            let x = mu.point(i);
            let ball = field.eval(x, mu)?;
            step_residual = step_residual.max(ball.dist(v));
            let speed = norm(v);
            max_speed = max_speed.max(speed);
            growth_margin = growth_margin.max(speed - c * (1.0 + m2) * (1.0 + norm(x)));
        }
        max_residual = max_residual.max(step_residual);
        per_step.push(step_residual);
    }
    if traj.velocities.is_empty() {
        growth_margin = 0.0;
    }
    Ok(AdmissibilityReport {
        max_residual,
        per_step_residual: per_step,
        pass: max_residual <= tol,
        max_speed,
        growth_margin,
        growth_ok: growth_margin <= 0.0,
    })
}

// ======================================================================
// A-priori bounds
// ======================================================================

/// Constants bounding any admissible trajectory on `[a, b]` started at
/// `mu_bar`: `c_ab` bounds the reachable-state scale, `moment_bound` the
/// 2-moment along the run, `d_ab` the squared speeds (weighted mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriBounds {
    pub c_ab: f64,
    pub moment_bound: f64,
    pub d_ab: f64,
}

/// Evaluates the a-priori constants
/// `C = e^(L s) (m2(mu) + K_F s)` with `s = b - a`,
/// `M = e^(L s e^(L s)) C`, and
/// `D = (K_F + L * (M + C + L s M))^2`.
pub fn apriori_bounds(field: &FieldSpec, mu_bar: &DiscreteMeasure, a: f64, b: f64) -> Result<AprioriBounds> {
    if !(b > a) || !(a >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter { name: "interval", reason: format!("need b > a >= 0, got [{a}, {b}]") });
    }
    let s = b - a;
    let l = field.lipschitz_l;
    let kf = field.k_f;
    let c_ab = (l * s).exp() * (mu_bar.moment2().value + kf * s);
    let amplification = (l * s * (l * s).exp()).exp();
    let moment_bound = amplification * c_ab;
    let d_root = kf + l * (amplification * c_ab + c_ab + l * s * amplification * c_ab);
    Ok(AprioriBounds { c_ab, moment_bound, d_ab: d_root * d_root })
}
