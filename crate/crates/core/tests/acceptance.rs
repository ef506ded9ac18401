//! Acceptance suite: nine end-to-end criteria, one per test, each printing
//! a single `[PASS]`/`[FAIL]` line (visible with `--nocapture`) and
//! asserting both the numeric criterion and its runtime limit. Tolerances
//! are pinned here, independent of the library's internal constants.

use std::sync::Arc;
use std::time::Instant;

use reachcert::dynamics::{
    apriori_bounds, integrate_steps, FieldSpec, Selection, TrajectoryRecord,
};
use reachcert::hamiltonian::hok_residual;
use reachcert::lyapunov::{decay_run, eval_v, hji_residual, viability_glue, LyapunovSpec};
use reachcert::mayer::{dpp_check, comparison_check, solve_mayer, MayerProblem, TerminalCostFn};
use reachcert::measure::DiscreteMeasure;
use reachcert::sampling;
use reachcert::scenario::{analytic_reference, build_scenario, RefValue, ScenarioParams};
use reachcert::transport::{brute_force_uniform_cost, solve_ot};

struct Criterion {
    index: usize,
    label: &'static str,
    limit_s: f64,
    start: Instant,
}

impl Criterion {
    fn begin(index: usize, label: &'static str, limit_s: f64) -> Self {
        Self { index, label, limit_s, start: Instant::now() }
    }

    fn finish(self, pass: bool, detail: &str) {
        let elapsed = self.start.elapsed().as_secs_f64();
        let in_time = elapsed < self.limit_s;
        let verdict = if pass && in_time { "PASS" } else { "FAIL" };
        println!(
            "[{verdict}] criterion {} - {}: {detail} ({elapsed:.2}s, limit {}s)",
            self.index, self.label, self.limit_s
        );
        assert!(pass, "criterion {} failed: {detail}", self.index);
        assert!(in_time, "criterion {} exceeded {}s: took {elapsed:.2}s", self.index, self.limit_s);
    }
}

fn canonical_pair() -> DiscreteMeasure {
    DiscreteMeasure::uniform(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap()
}

fn radial_linear_selection(alpha: f64) -> Selection {
    Selection::analytic(
        "radial-linear",
        Arc::new(move |_t, _i, x: &[f64], _nu: &DiscreteMeasure| x.iter().map(|c| -alpha * c).collect()),
    )
}

fn rotation_with_damping(k: f64) -> FieldSpec {
    FieldSpec::linear(
        vec![vec![0.0, 1.0], vec![-1.0, 0.0]],
        vec![vec![-k, 0.0], vec![0.0, -k]],
        k,
    )
    .unwrap()
}

/// Exact node-by-node, atom-by-atom bit equality of two measure sequences.
fn measures_identical(a: &[DiscreteMeasure], b: &[DiscreteMeasure]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(m1, m2)| m1.points() == m2.points() && m1.weights() == m2.weights())
}

// ======================================================================
// 1. Optimal-coupling oracle equivalence
// ======================================================================

#[test]
fn criterion_1_ot_oracle_equivalence() {
    const PAIRS: usize = 200;
    const TOL: f64 = 1e-9;
    let c = Criterion::begin(1, "exact coupling matches permutation oracle", 10.0);

    let mut max_gap = 0.0_f64;
    for k in 0..PAIRS {
        let mut rng = sampling::derived_rng(0xACC1, k as u64);
        let n = 1 + k % 6;
        let d = 1 + k % 3;
        let a = sampling::uniform_cloud(&mut rng, n, d, 3.0);
        let b = sampling::uniform_cloud(&mut rng, n, d, 3.0);
        let solver = solve_ot(&a, &b).unwrap().cost();
        let oracle = brute_force_uniform_cost(&a, &b).unwrap();
        max_gap = max_gap.max((solver - oracle).abs());
    }

    c.finish(max_gap <= TOL, &format!("max |solver - oracle| = {max_gap:.3e} over {PAIRS} pairs, tol {TOL:.0e}"));
}

// ======================================================================
// 2. Radial-scenario decay reproduction
// ======================================================================

#[test]
fn criterion_2_radial_decay_reproduction() {
    const RATIO_TOL: f64 = 1e-2;
    const DT: f64 = 1e-3;
    const T: f64 = 5.0;
    let c = Criterion::begin(2, "radial decay matches e^{-2t} with nonincreasing S", 5.0);

    let field = FieldSpec::ball(1.0).unwrap();
    let spec = LyapunovSpec::half_m2_squared(1.0).unwrap();
    let selection = radial_linear_selection(1.0);
    let report = decay_run(&spec, &field, &canonical_pair(), T, DT, Some(&selection)).unwrap();

    let v0 = report.v_values[0];
    let mut ratio_dev = 0.0_f64;
    for (j, &t) in report.times.iter().enumerate() {
        ratio_dev = ratio_dev.max(((2.0 * t).exp() * report.v_values[j] / v0 - 1.0).abs());
    }

    let pass = ratio_dev <= RATIO_TOL && report.pass;
    c.finish(
        pass,
        &format!(
            "max |e^(2t) V/V0 - 1| = {ratio_dev:.3e} (tol {RATIO_TOL:.0e}); max S uptick {:.3e} within step budget {:.3e}",
            report.max_uptick, report.tol_step
        ),
    );
}

// ======================================================================
// 3. Radial-scenario Hamilton-Jacobi certification
// ======================================================================

#[test]
fn criterion_3_radial_hji_certification() {
    const CLOUDS: usize = 100;
    const TOL: f64 = 1e-9;
    let c = Criterion::begin(3, "HJI residual nonpositive on random clouds", 1.0);

    let field = FieldSpec::ball(1.0).unwrap();
    let spec = LyapunovSpec::half_m2_squared(1.0).unwrap();
    let mut max_residual = f64::NEG_INFINITY;
    let mut evaluated = 0usize;
    for k in 0..CLOUDS {
        let mut rng = sampling::derived_rng(0xACC3, k as u64);
        let n = 1 + k % 10;
        let cloud = sampling::weighted_cloud(&mut rng, n, 2, 7.0);
        if let Some(r) = hji_residual(&spec, &field, &cloud).unwrap() {
            evaluated += 1;
            max_residual = max_residual.max(r);
        }
    }

    let pass = evaluated == CLOUDS && max_residual <= TOL;
    c.finish(pass, &format!("max residual = {max_residual:.3e} over {evaluated}/{CLOUDS} clouds, tol {TOL:.0e}"));
}

// ======================================================================
// 4. Hamiltonian doubling-of-variables modulus
// ======================================================================

#[test]
fn criterion_4_hamiltonian_modulus() {
    const PAIRS: usize = 200;
    const TOL: f64 = 1e-9;
    const LAMBDAS: [f64; 3] = [0.1, 1.0, 10.0];
    let c = Criterion::begin(4, "H-difference within 2*L*lambda*W2^2, tight on dirac pairs", 30.0);

    // The modulus is a property of map-induced displacements (equal-size
    // uniform clouds have permutation plans almost surely); barycentric
    // projections of genuinely split plans leave the property's domain.
    let fields = [FieldSpec::ball(1.0).unwrap(), rotation_with_damping(1.0)];
    let mut max_excess = f64::NEG_INFINITY;
    for (f_idx, field) in fields.iter().enumerate() {
        for k in 0..PAIRS {
            let mut rng = sampling::derived_rng(0xACC4 + f_idx as u64, k as u64);
            let n = 1 + k % 5;
            let a = sampling::uniform_cloud(&mut rng, n, 2, 2.0);
            let b = sampling::uniform_cloud(&mut rng, n, 2, 2.0);
            for lambda in LAMBDAS {
                let rep = hok_residual(field, &a, &b, lambda).unwrap();
                max_excess = max_excess.max(rep.residual - rep.bound);
            }
        }
    }

    // Tightness witness: point mass at the origin against a displaced one.
    let origin = DiscreteMeasure::uniform(vec![vec![0.0, 0.0]]).unwrap();
    let displaced = DiscreteMeasure::uniform(vec![vec![1.2, -0.7]]).unwrap();
    let mut max_tightness_gap = 0.0_f64;
    for lambda in LAMBDAS {
        let rep = hok_residual(&fields[0], &origin, &displaced, lambda).unwrap();
        max_tightness_gap = max_tightness_gap.max((rep.residual - rep.bound).abs());
    }

    let pass = max_excess <= TOL && max_tightness_gap <= TOL;
    c.finish(
        pass,
        &format!(
            "max (residual - bound) = {max_excess:.3e} over {} evaluations; dirac-pair |residual - bound| = {max_tightness_gap:.3e}, tol {TOL:.0e}",
            2 * PAIRS * LAMBDAS.len()
        ),
    );
}

// ======================================================================
// 5. A-priori moment and speed bounds
// ======================================================================

#[test]
fn criterion_5_apriori_bounds() {
    const RUNS: usize = 50;
    const SLACK: f64 = 1e-12;
    const DT: f64 = 1e-3;
    let c = Criterion::begin(5, "trajectories respect a-priori moment/speed bounds", 60.0);

    let mut min_moment_margin = f64::INFINITY;
    let mut min_speed_margin = f64::INFINITY;
    let mut pass = true;
    for k in 0..RUNS {
        let mut rng = sampling::derived_rng(0xACC5, k as u64);
        let alpha = {
            use rand::Rng;
            rng.gen_range(0.1..=1.0)
        };
        let t_total = {
            use rand::Rng;
            rng.gen_range(0.2..=1.0)
        };
        let n = 1 + k % 8;
        let mu0 = sampling::weighted_cloud(&mut rng, n, 2, 0.7);
        let field = FieldSpec::ball(alpha).unwrap();
        let steps = (t_total / DT).round() as usize;
        // Rotate through contracting, linear, and boundary-expanding
        // steering so the bounds are exercised, not just satisfied idly.
        let outward = Selection::analytic(
            "radial-outward",
            Arc::new(move |_t, _i, x: &[f64], nu: &DiscreteMeasure| {
                let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return vec![0.0; x.len()];
                }
                let speed = alpha * (norm + nu.moment2().value);
                x.iter().map(|c| speed * c / norm).collect()
            }),
        );
        let inward = Selection::MaxContraction;
        let linear = radial_linear_selection(alpha);
        let selection = match k % 3 {
            0 => &outward,
            1 => &inward,
            _ => &linear,
        };
        let traj = integrate_steps(&field, &mu0, selection, DT, steps, 0).unwrap();
        let bounds = apriori_bounds(&field, &mu0, 0.0, t_total).unwrap();

        for mnode in &traj.measures {
            let margin = bounds.moment_bound - mnode.moment2().value;
            min_moment_margin = min_moment_margin.min(margin);
            pass &= margin >= -SLACK;
        }
        for (j, v) in traj.velocities.iter().enumerate() {
            let mean_sq_speed: f64 = (0..traj.measures[j].len())
                .map(|i| {
                    traj.measures[j].weight(i) * v.vector(i).iter().map(|c| c * c).sum::<f64>()
                })
                .sum();
            let margin = bounds.d_ab - mean_sq_speed;
            min_speed_margin = min_speed_margin.min(margin);
            pass &= margin >= -SLACK;
        }
    }

    // Spot value: L = K_F = b - a = m2 = 1 gives C = e^1 (1 + 1) = 2e.
    let spot_field = FieldSpec::generic_ball(
        "spot",
        Arc::new(|x: &[f64], _: &DiscreteMeasure| vec![0.0; x.len()]),
        Arc::new(|_: &[f64], _: &DiscreteMeasure| 0.0),
        1.0,
        1.0,
    )
    .unwrap();
    let unit_atom = DiscreteMeasure::uniform(vec![vec![1.0, 0.0]]).unwrap();
    let spot = apriori_bounds(&spot_field, &unit_atom, 0.0, 1.0).unwrap().c_ab;
    let spot_gap = (spot - 2.0 * std::f64::consts::E).abs();
    pass &= spot_gap <= SLACK;

    c.finish(
        pass,
        &format!(
            "min moment margin {min_moment_margin:.3e}, min mean-square-speed margin {min_speed_margin:.3e} over {RUNS} runs; |C(1,1,1,1) - 2e| = {spot_gap:.3e}"
        ),
    );
}

// ======================================================================
// 6. Terminal-cost closed form
// ======================================================================

fn m2_squared_cost() -> TerminalCostFn {
    Arc::new(|m: &DiscreteMeasure| Ok(m.moment2().value.powi(2)))
}

fn single_atom_problem(budget: usize, seed: u64) -> MayerProblem {
    MayerProblem::new(
        FieldSpec::ball(1.0).unwrap(),
        "m2-squared",
        m2_squared_cost(),
        DiscreteMeasure::uniform(vec![vec![1.0, 0.0]]).unwrap(),
        0.0,
        0.5,
        4,
        budget,
        0.005,
        seed,
    )
    .unwrap()
}

#[test]
fn criterion_6_mayer_closed_form() {
    const REL_TOL: f64 = 5e-2;
    let c = Criterion::begin(6, "terminal-cost optimum matches e^{-2}, exact DPP structure", 60.0);

    // Budget ladder: exact monotonicity under doubling, ending at 2000.
    let budgets = [125usize, 250, 500, 1000, 2000];
    let mut values = Vec::new();
    for &budget in &budgets {
        values.push(solve_mayer(&single_atom_problem(budget, 0)).unwrap().value);
    }
    let monotone = values.windows(2).all(|w| w[1] <= w[0]);

    let closed_form = (-2.0_f64).exp();
    let value = *values.last().unwrap();
    let rel_err = (value - closed_form).abs() / closed_form;

    // Terminal consistency: an empty horizon returns the cost itself,
    // bit-for-bit.
    let cloud = sampling::weighted_cloud(&mut sampling::derived_rng(0xACC6, 9), 5, 2, 2.0);
    let empty = MayerProblem::new(
        FieldSpec::ball(1.0).unwrap(),
        "m2-squared",
        m2_squared_cost(),
        cloud.clone(),
        0.5,
        0.5,
        4,
        2000,
        0.005,
        0,
    )
    .unwrap();
    let terminal_exact = solve_mayer(&empty).unwrap().value == cloud.moment2().value.powi(2);

    let pass = rel_err <= REL_TOL && monotone && terminal_exact;
    c.finish(
        pass,
        &format!(
            "value {value:.6} vs e^-2 = {closed_form:.6} (rel err {rel_err:.3e}, tol {REL_TOL:.0e}); budget ladder {values:?} nonincreasing: {monotone}; empty-horizon exact: {terminal_exact}"
        ),
    );
}

// ======================================================================
// 7. Dynamic programming and comparison
// ======================================================================

#[test]
fn criterion_7_dpp_and_comparison() {
    const SAMPLES: usize = 20;
    let c = Criterion::begin(7, "node values nondecreasing; estimator below e^{at}V", 120.0);

    let field = FieldSpec::ball(1.0).unwrap();
    let spec = LyapunovSpec::half_m2_squared(1.0).unwrap();
    let problem = MayerProblem::new(
        field.clone(),
        "m2-squared",
        m2_squared_cost(),
        canonical_pair(),
        0.0,
        0.5,
        4,
        200,
        0.05,
        0,
    )
    .unwrap();
    let analytic = integrate_steps(&field, &canonical_pair(), &radial_linear_selection(1.0), 0.05, 10, 0).unwrap();
    let dpp = dpp_check(&problem, &analytic).unwrap();

    let mut comparison_pass = true;
    let mut worst_gap = f64::NEG_INFINITY;
    for k in 0..SAMPLES {
        let mut rng = sampling::derived_rng(0xACC7, k as u64);
        let nu = sampling::weighted_cloud(&mut rng, 1 + k % 4, 2, 1.5);
        let t = 0.05 * (k % 10) as f64;
        let report = comparison_check(&spec, &field, &nu, t, 0.5, 4, 200, 0.05, k as u64).unwrap();
        comparison_pass &= report.pass;
        worst_gap = worst_gap.max(report.u_hat - report.rhs - report.tol_dpp);
    }

    let pass = dpp.monotone_pass && comparison_pass;
    c.finish(
        pass,
        &format!(
            "max node-value decrease {:.3e} within tol_dpp {:.3e}; comparison holds at {SAMPLES} sampled states (worst slack {worst_gap:.3e})",
            dpp.max_decrease, dpp.tol_dpp
        ),
    );
}

// ======================================================================
// 8. Quantized affine-scenario structure
// ======================================================================

#[test]
fn criterion_8_quantized_affine_structure() {
    const MEAN_TOL: f64 = 1e-3;
    const NORM_TOL: f64 = 5e-3;
    const GRID_MEAN_TOL: f64 = 1e-12;
    const DT: f64 = 1e-3;
    let c = Criterion::begin(8, "mean decay, norm conservation, centered grid", 10.0);

    let scenario = build_scenario("example2", &ScenarioParams::default(), 0).unwrap();
    let traj = integrate_steps(&scenario.field, &scenario.initial, &Selection::MaxContraction, DT, 3000, 0).unwrap();

    let mut mean_rel = 0.0_f64;
    for (j, m) in traj.measures.iter().enumerate() {
        let reference = match analytic_reference(&scenario, "mean_norm", traj.times[j]).unwrap() {
            RefValue::Scalar(s) => s,
            RefValue::Measure(_) => unreachable!("mean_norm is scalar"),
        };
        let mean = m.mean();
        let measured = mean.iter().map(|c| c * c).sum::<f64>().sqrt();
        mean_rel = mean_rel.max((measured - reference).abs() / reference);
    }

    let mean0 = traj.measures[0].mean();
    let mut norm_rel = 0.0_f64;
    for m in &traj.measures {
        let mean_t = m.mean();
        for i in 0..m.len() {
            let r0: f64 = traj.measures[0]
                .point(i)
                .iter()
                .zip(&mean0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let r: f64 =
                m.point(i).iter().zip(&mean_t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            norm_rel = norm_rel.max((r - r0).abs() / r0);
        }
    }

    let grid_mean: f64 = {
        let mean = scenario.target.mean();
        mean.iter().map(|c| c * c).sum::<f64>().sqrt()
    };

    // Residual diagnostics (not asserted): the certificate is informative
    // near equilibrium only, so the values are reported, not gated.
    // Perturbing the grid atoms (weights kept) by much less than the grid
    // spacing keeps the identity assignment optimal, so the candidate is a
    // genuine map displacement.
    let mut diagnostics = Vec::new();
    let at_target = hji_residual(&scenario.lyapunov, &scenario.field, &scenario.target).unwrap();
    diagnostics.push(format!("target={:?}", at_target.map(|r| format!("{r:.3e}"))));
    for (k, scale) in [(0u64, 0.01), (1, 0.05), (2, 0.1)] {
        use rand::Rng;
        let mut rng = sampling::derived_rng(0xACC8, k);
        let points: Vec<Vec<f64>> = scenario
            .target
            .points()
            .iter()
            .map(|x| x.iter().map(|c| c + rng.gen_range(-scale..=scale)).collect())
            .collect();
        let cloud = DiscreteMeasure::new(points, scenario.target.weights().to_vec()).unwrap();
        let r = hji_residual(&scenario.lyapunov, &scenario.field, &cloud).unwrap();
        diagnostics.push(format!("shift{scale}={:?}", r.map(|v| format!("{v:.3e}"))));
    }

    let pass = mean_rel <= MEAN_TOL && norm_rel <= NORM_TOL && grid_mean <= GRID_MEAN_TOL;
    c.finish(
        pass,
        &format!(
            "mean rel err {mean_rel:.3e} (tol {MEAN_TOL:.0e}); centered-norm rel err {norm_rel:.3e} (tol {NORM_TOL:.0e}); grid mean {grid_mean:.3e} (tol {GRID_MEAN_TOL:.0e}); residual diagnostics {}",
            diagnostics.join(", ")
        ),
    );
}

// ======================================================================
// 9. Piecewise viability gluing
// ======================================================================

#[test]
fn criterion_9_viability_gluing() {
    const DT: f64 = 1e-3;
    const T: f64 = 4.0;
    let c = Criterion::begin(9, "restart inequality per piece; glue is deterministic", 10.0);

    let field = FieldSpec::ball(1.0).unwrap();
    let spec = LyapunovSpec::half_m2_squared(1.0).unwrap();
    let mu0 = canonical_pair();

    let mut pass = true;
    let mut baseline: Option<TrajectoryRecord> = None;
    let mut detail = Vec::new();
    for n in [1usize, 2, 4, 8] {
        let report = viability_glue(&spec, &field, &mu0, T, DT, n, None).unwrap();
        pass &= report.pieces_pass && report.glued_pass;
        detail.push(format!("n={n}: excess {:.3e}", report.piece_excess_max));
        match &baseline {
            None => baseline = Some(report.trajectory),
            Some(base) => {
                pass &= measures_identical(&base.measures, &report.trajectory.measures);
            }
        }
    }
    // Re-running the finest subdivision reproduces the glue bit-for-bit.
    let rerun = viability_glue(&spec, &field, &mu0, T, DT, 8, None).unwrap();
    pass &= measures_identical(&baseline.as_ref().unwrap().measures, &rerun.trajectory.measures);

    c.finish(
        pass,
        &format!("{}; glued outputs bitwise identical across n and reruns", detail.join("; ")),
    );
}

// Sanity anchor for the suite itself: the Lyapunov value the criteria
// reference is the one the scenarios construct.
#[test]
fn acceptance_value_anchor() {
    let scenario = build_scenario("example1", &ScenarioParams::default(), 0).unwrap();
    let v0 = eval_v(&scenario.lyapunov, &scenario.initial).unwrap();
    assert!((v0 - 0.5).abs() <= 1e-15);
}
