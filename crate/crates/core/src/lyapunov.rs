//! Lyapunov certification: candidate functions on measure space, their
//! zero-slack subdifferential displacements, the Hamilton–Jacobi inequality
//! residual `alpha V(nu) + H_F(nu, p)`, exponential-decay runs monitoring
//! `S(t) = e^{alpha t} V(mu_t)`, piecewise viability gluing, and
//! reachability experiments toward a target measure.

use crate::dynamics::{integrate_steps, FieldSpec, Selection, TrajectoryRecord};
use crate::hamiltonian::hamiltonian;
use crate::measure::DiscreteMeasure;
use crate::transport::{displacement_pq, solve_ot, Displacement};
use crate::{Error, Result};
use std::sync::Arc;

/// Caller-supplied Lyapunov evaluator.
pub type EvalFn = Arc<dyn Fn(&DiscreteMeasure) -> Result<f64> + Send + Sync>;
/// Caller-supplied subdifferential candidate source.
pub type SubdiffFn = Arc<dyn Fn(&DiscreteMeasure) -> Result<SubdiffCandidate> + Send + Sync>;

/// A candidate Lyapunov function together with its decay rate `alpha`
/// (the certified inequality is `alpha V + H_F <= 0`).
#[derive(Clone)]
pub enum LyapunovSpec {
    /// `V(nu) = 1/2 m_2(nu)^2`, the half squared quadratic moment.
    HalfM2Squared { rate_alpha: f64 },
    /// `V(nu) = 1/2 W_2(nu, target)^2`.
    HalfW2SquaredTo { target: DiscreteMeasure, rate_alpha: f64 },
    /// Arbitrary evaluator with an optional subdifferential source.
    Custom { name: String, rate_alpha: f64, eval: EvalFn, subdiff: Option<SubdiffFn> },
}

impl std::fmt::Debug for LyapunovSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::HalfM2Squared { rate_alpha } => {
                f.debug_struct("HalfM2Squared").field("rate_alpha", rate_alpha).finish()
            }
            Self::HalfW2SquaredTo { target, rate_alpha } => f
                .debug_struct("HalfW2SquaredTo")
                .field("target_atoms", &target.len())
                .field("rate_alpha", rate_alpha)
                .finish(),
            Self::Custom { name, rate_alpha, .. } => f
                .debug_struct("Custom")
                .field("name", name)
                .field("rate_alpha", rate_alpha)
                .finish(),
        }
    }
}

fn validate_alpha(rate_alpha: f64) -> Result<()> {
    if !(rate_alpha > 0.0) || !rate_alpha.is_finite() {
        return Err(Error::InvalidParameter {
            name: "rate_alpha",
            reason: format!("must be positive and finite, got {rate_alpha}"),
        });
    }
    Ok(())
}

impl LyapunovSpec {
    pub fn half_m2_squared(rate_alpha: f64) -> Result<Self> {
        validate_alpha(rate_alpha)?;
        Ok(Self::HalfM2Squared { rate_alpha })
    }

    pub fn half_w2_squared_to(target: DiscreteMeasure, rate_alpha: f64) -> Result<Self> {
        validate_alpha(rate_alpha)?;
        Ok(Self::HalfW2SquaredTo { target, rate_alpha })
    }

    pub fn custom(name: &str, rate_alpha: f64, eval: EvalFn, subdiff: Option<SubdiffFn>) -> Result<Self> {
        validate_alpha(rate_alpha)?;
        Ok(Self::Custom { name: name.to_string(), rate_alpha, eval, subdiff })
    }

    pub fn rate_alpha(&self) -> f64 {
        match self {
            Self::HalfM2Squared { rate_alpha }
            | Self::HalfW2SquaredTo { rate_alpha, .. }
            | Self::Custom { rate_alpha, .. } => *rate_alpha,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::HalfM2Squared { .. } => "half-m2-squared",
            Self::HalfW2SquaredTo { .. } => "half-w2-squared-to-target",
            Self::Custom { name, .. } => name,
        }
    }
}

/// A zero-slack subdifferential displacement. `valid` is false when the
/// closed form does not apply at this measure (no optimal map to the
/// target, or no subdifferential source supplied); the displacement is
/// then a placeholder and must not be consumed.
#[derive(Debug, Clone)]
pub struct SubdiffCandidate {
    pub displacement: Displacement,
    pub valid: bool,
}

/// Evaluates `V(nu)`.
pub fn eval_v(spec: &LyapunovSpec, nu: &DiscreteMeasure) -> Result<f64> {
    match spec {
        LyapunovSpec::HalfM2Squared { .. } => {
            let m2 = nu.moment2();
            Ok(0.5 * m2.value * m2.value)
        }
        LyapunovSpec::HalfW2SquaredTo { target, .. } => {
            let plan = solve_ot(nu, target)?;
            Ok(0.5 * plan.cost())
        }
        LyapunovSpec::Custom { eval, .. } => eval(nu),
    }
}

/// Closed-form subdifferential candidate at `nu`:
/// the identity displacement for the half squared moment, `id - T` for the
/// half squared distance to a target when the optimal plan is induced by a
/// map `T` (flagged invalid otherwise), and the caller's source for custom
/// specs (invalid when absent).
pub fn subdiff_candidate(spec: &LyapunovSpec, nu: &DiscreteMeasure) -> Result<SubdiffCandidate> {
    match spec {
        LyapunovSpec::HalfM2Squared { .. } => {
            Ok(SubdiffCandidate { displacement: Displacement::identity(nu.clone()), valid: true })
        }
        LyapunovSpec::HalfW2SquaredTo { target, .. } => {
            let pq = displacement_pq(nu, target)?;
            let valid = pq.plan.is_map();
            Ok(SubdiffCandidate { displacement: pq.p, valid })
        }
        LyapunovSpec::Custom { subdiff, .. } => match subdiff {
            Some(source) => source(nu),
            None => Ok(SubdiffCandidate { displacement: Displacement::zero(nu.clone()), valid: false }),
        },
    }
}

/// Hamilton–Jacobi inequality residual `alpha V(nu) + H_F(nu, p)` at the
/// zero-slack candidate. Certification requires the residual to be at most
/// the tolerance. Returns `None` when no valid candidate exists at `nu`
/// (a skipped sample, not an error).
pub fn hji_residual(spec: &LyapunovSpec, field: &FieldSpec, nu: &DiscreteMeasure) -> Result<Option<f64>> {
    let cand = subdiff_candidate(spec, nu)?;
    if !cand.valid {
        return Ok(None);
    }
    let h = hamiltonian(field, nu, &cand.displacement)?;
    Ok(Some(spec.rate_alpha() * eval_v(spec, nu)? + h.value))
}

/// One decay run: the trajectory, the sampled `V` and `S = e^{alpha t} V`
/// series, the worst per-step increment of `S`, the first-order tolerance
/// it is compared against, and a least-squares exponential rate fit of `V`.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub v_values: Vec<f64>,
    pub s_values: Vec<f64>,
    pub max_uptick: f64,
    pub tol_step: f64,
    pub rate_fit: Option<f64>,
    pub pass: bool,
    pub trajectory: TrajectoryRecord,
}

/// Least-squares slope of `ln V` against time over the nodes where `V > 0`;
/// the fitted decay rate is the negated slope. `None` when fewer than two
/// nodes are usable or time does not vary.
fn fit_decay_rate(times: &[f64], v_values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(v_values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(t, y) in &pts {
        cov += (t - mean_t) * (y - mean_y);
        var += (t - mean_t) * (t - mean_t);
    }
    if var == 0.0 {
        return None;
    }
    Some(-(cov / var))
}

/// The per-step tolerance for increments of `S`: a first-order Euler error
/// budget `(L_V * V_max * alpha + L_V * speed_max) * dt`, where
/// `L_V = max_n sqrt(2 V_n)` is the metric Lipschitz constant of both
/// supported Lyapunov functions along the run.
fn step_tolerance(alpha: f64, dt: f64, v_values: &[f64], speed_max: f64) -> f64 {
    let v_max = v_values.iter().cloned().fold(0.0_f64, f64::max);
    let l_v = v_values.iter().map(|&v| (2.0 * v).sqrt()).fold(0.0_f64, f64::max);
    (l_v * v_max * alpha + l_v * speed_max) * dt
}

/// The default steering when no selection is supplied: at each step, take
/// the per-atom set point minimizing the pairing against the current
/// subdifferential candidate; where the candidate is invalid the integrator
/// falls back to the previous valid displacement.
pub fn default_greedy_selection(spec: &LyapunovSpec) -> Selection {
    let spec = spec.clone();
    Selection::greedy(
        "lyapunov-greedy",
        Arc::new(move |nu: &DiscreteMeasure| {
            subdiff_candidate(&spec, nu)
                .ok()
                .and_then(|c| if c.valid { Some(c.displacement) } else { None })
        }),
    )
}

fn decay_run_steps(
    spec: &LyapunovSpec,
    field: &FieldSpec,
    mu0: &DiscreteMeasure,
    selection: Option<&Selection>,
    dt: f64,
    steps: usize,
    start_step: u64,
) -> Result<DecayReport> {
    let owned_default;
    let selection = match selection {
        Some(s) => s,
        None => {
            owned_default = default_greedy_selection(spec);
            &owned_default
        }
    };
    let trajectory = integrate_steps(field, mu0, selection, dt, steps, start_step)?;
    let alpha = spec.rate_alpha();
    let times = trajectory.times.clone();
    let mut v_values = Vec::with_capacity(times.len());
    for m in &trajectory.measures {
        v_values.push(eval_v(spec, m)?);
    }
    let s_values: Vec<f64> = times.iter().zip(&v_values).map(|(&t, &v)| (alpha * t).exp() * v).collect();
    let max_uptick = s_values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let tol_step = step_tolerance(alpha, dt, &v_values, trajectory.max_speed());
    let rate_fit = fit_decay_rate(&times, &v_values);
    let pass = max_uptick <= tol_step;
    Ok(DecayReport { times, v_values, s_values, max_uptick, tol_step, rate_fit, pass, trajectory })
}

fn step_count(t_total: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter { name: "dt", reason: format!("must be positive and finite, got {dt}") });
    }
    if !(t_total >= dt) {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: format!("horizon {t_total} shorter than one step {dt}"),
        });
    }
    Ok((t_total / dt).round().max(1.0) as usize)
}

/// Integrates `[0, T]` under the given selection (default: greedy steering
/// against the subdifferential candidate) and checks that
/// `S(t) = e^{alpha t} V(mu_t)` is nonincreasing up to the per-step
/// first-order tolerance.
pub fn decay_run(
    spec: &LyapunovSpec,
    field: &FieldSpec,
    mu0: &DiscreteMeasure,
    t_total: f64,
    dt: f64,
    selection: Option<&Selection>,
) -> Result<DecayReport> {
    let steps = step_count(t_total, dt)?;
    decay_run_steps(spec, field, mu0, selection, dt, steps, 0)
}

/// Piecewise decay certificate: per-piece reports, the worst violation of
/// the restart inequality `e^{alpha (t - t_k)} V(mu_t) <= V(mu_{t_k})`
/// (cumulative per-step budget), and the end-to-end monotonicity check on
/// the glued trajectory.
#[derive(Debug, Clone)]
pub struct ViabilityReport {
    pub pieces: Vec<DecayReport>,
    pub piece_excess_max: f64,
    pub pieces_pass: bool,
    pub glued_max_uptick: f64,
    pub glued_tol_step: f64,
    pub glued_pass: bool,
    pub trajectory: TrajectoryRecord,
}

/// Splits `[0, T]` into `n` equal pieces, reruns the decay independently on
/// each piece restarting from the previous endpoint, and verifies both the
/// per-piece restart inequality and end-to-end monotonicity of
/// `e^{alpha t} V`. The step count `round(T/dt)` must be divisible by `n`
/// so the piece grids glue exactly.
pub fn viability_glue(
    spec: &LyapunovSpec,
    field: &FieldSpec,
    mu0: &DiscreteMeasure,
    t_total: f64,
    dt: f64,
    n: usize,
    selection: Option<&Selection>,
) -> Result<ViabilityReport> {
    if n == 0 {
        return Err(Error::InvalidParameter { name: "subdivisions", reason: "must be at least 1".to_string() });
    }
    let steps_total = step_count(t_total, dt)?;
    if steps_total % n != 0 {
        return Err(Error::InvalidParameter {
            name: "subdivisions",
            reason: format!("{n} does not divide the {steps_total}-step grid"),
        });
    }
    let piece_steps = steps_total / n;
    let alpha = spec.rate_alpha();

    let mut pieces = Vec::with_capacity(n);
    let mut current = mu0.clone();
    let mut piece_excess_max = f64::NEG_INFINITY;
    for k in 0..n {
        let report = decay_run_steps(spec, field, &current, selection, dt, piece_steps, (k * piece_steps) as u64)?;
        current = report.trajectory.terminal().clone();
        // Restart inequality against the piece's own start, with a budget
        // that accumulates one step tolerance per step taken.
        let t0 = report.times[0];
        let v0 = report.v_values[0];
        for (j, (&t, &v)) in report.times.iter().zip(&report.v_values).enumerate().skip(1) {
            let lhs = (alpha * (t - t0)).exp() * v;
            let excess = lhs - v0 - (j as f64) * report.tol_step;
            piece_excess_max = piece_excess_max.max(excess);
        }
        pieces.push(report);
    }
    let pieces_pass = piece_excess_max <= 0.0;

    // Glue the piece trajectories (dropping each piece's duplicated initial
    // node) and re-audit monotonicity end to end.
    let first = &pieces[0].trajectory;
    let mut glued = TrajectoryRecord {
        dt,
        start_step: 0,
        times: first.times.clone(),
        measures: first.measures.clone(),
        velocities: first.velocities.clone(),
        selection_name: first.selection_name.clone(),
        diagnostics: first.diagnostics.clone(),
    };
    for piece in &pieces[1..] {
        let tr = &piece.trajectory;
        glued.times.extend_from_slice(&tr.times[1..]);
        glued.measures.extend_from_slice(&tr.measures[1..]);
        glued.velocities.extend_from_slice(&tr.velocities);
        glued.diagnostics.extend_from_slice(&tr.diagnostics);
    }
    let mut v_values = Vec::with_capacity(glued.times.len());
    for m in &glued.measures {
        v_values.push(eval_v(spec, m)?);
    }
    let s_values: Vec<f64> = glued.times.iter().zip(&v_values).map(|(&t, &v)| (alpha * t).exp() * v).collect();
    let glued_max_uptick = s_values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let glued_tol_step = step_tolerance(alpha, dt, &v_values, glued.max_speed());
    let glued_pass = glued_max_uptick <= glued_tol_step;

    Ok(ViabilityReport {
        pieces,
        piece_excess_max,
        pieces_pass,
        glued_max_uptick,
        glued_tol_step,
        glued_pass,
        trajectory: glued,
    })
}

/// A decay run augmented with the distance-to-target series.
#[derive(Debug, Clone)]
pub struct ReachabilityReport {
    pub decay: DecayReport,
    pub w2_to_target: Vec<f64>,
    pub terminal_w2: f64,
}

/// Runs the decay experiment and additionally samples `W_2(mu_t, target)`
/// at every node. The decay report's `rate_fit` is the fitted exponential
/// rate of `V`.
pub fn reachability_run(
    spec: &LyapunovSpec,
    field: &FieldSpec,
    mu0: &DiscreteMeasure,
    target: &DiscreteMeasure,
    t_total: f64,
    dt: f64,
    selection: Option<&Selection>,
) -> Result<ReachabilityReport> {
    let decay = decay_run(spec, field, mu0, t_total, dt, selection)?;
    let mut w2_to_target = Vec::with_capacity(decay.trajectory.measures.len());
    for m in &decay.trajectory.measures {
        w2_to_target.push(solve_ot(m, target)?.w2());
    }
    let terminal_w2 = *w2_to_target.last().expect("trajectory has at least one node");
    Ok(ReachabilityReport { decay, w2_to_target, terminal_w2 })
}
