//! Exact discrete optimal transport under squared Euclidean cost.
//!
//! `solve_ot` computes an optimal coupling between two weighted point clouds
//! as a min-cost flow on the complete bipartite graph, using successive
//! shortest augmenting paths with node potentials (the dense transportation
//! analogue of the Hungarian method). The result is post-processed into a
//! forest-supported (vertex) solution with a deterministic rule, so repeated
//! solves of the same instance are bit-identical.
//!
//! A factorial brute-force oracle over permutation couplings is part of the
//! public API: it is the independent ground truth the solver is tested
//! against on equal-size uniform clouds.

use crate::measure::{dist_sq, norm_sq, DiscreteMeasure};
use crate::tol::{COST_CONSISTENCY_TOL, MAP_ROW_REL_TOL, MARGINAL_TOL, MASS_TOL, SOLVER_MASS_EPS};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

// ======================================================================
// Types
// ======================================================================

/// Discrete coupling between `source` and `target`: a dense nonnegative
/// matrix whose row sums are the source weights and column sums the target
/// weights (within [`MARGINAL_TOL`]), with its transport cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    /// Row-major, `source.len() x target.len()`.
    matrix: Vec<f64>,
    cost: f64,
    optimal: bool,
}

/// Vector field over the support of `base`: one d-vector per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    base: DiscreteMeasure,
    vectors: Vec<Vec<f64>>,
}

/// Barycentric displacement pair computed from one optimal plan:
/// `p` over the source (`x - row barycenter`), `q` over the target
/// (`y - column barycenter`). Atoms with zero weight are skipped (zero
/// vector) and recorded.
#[derive(Debug, Clone)]
pub struct PqPair {
    pub p: Displacement,
    pub q: Displacement,
    pub skipped_source: Vec<usize>,
    pub skipped_target: Vec<usize>,
    pub plan: TransportPlan,
}

/// `lambda * (barycenter - id)` over the support of the first measure, with
/// the flag telling whether the optimal plan is induced by a map (every row
/// sends its mass to a single target atom).
#[derive(Debug, Clone)]
pub struct OptimalDisplacement {
    pub displacement: Displacement,
    pub is_map: bool,
}

impl TransportPlan {
    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure {
        &self.target
    }

    /// Row-major dense matrix, `source.len() x target.len()`.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.target.len() + j]
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn optimal(&self) -> bool {
        self.optimal
    }

    pub fn w2(&self) -> f64 {
        self.cost.max(0.0).sqrt()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let m = self.target.len();
        (0..self.source.len())
            .map(|i| self.matrix[i * m..(i + 1) * m].iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let (n, m) = (self.source.len(), self.target.len());
        let mut sums = vec![0.0; m];
        for i in 0..n {
            for (j, sum) in sums.iter_mut().enumerate() {
                *sum += self.matrix[i * m + j];
            }
        }
        sums
    }

    /// Checks marginal conservation and cost consistency.
    pub fn validate(&self) -> Result<()> {
        for (i, (&got, &want)) in self.row_sums().iter().zip(self.source.weights()).enumerate() {
            if (got - want).abs() > MARGINAL_TOL {
                return Err(Error::InvalidParameter {
                    name: "plan",
                    reason: format!("row {i} sums to {got}, source weight is {want}"),
                });
            }
        }
        for (j, (&got, &want)) in self.col_sums().iter().zip(self.target.weights()).enumerate() {
            if (got - want).abs() > MARGINAL_TOL {
                return Err(Error::InvalidParameter {
                    name: "plan",
                    reason: format!("column {j} sums to {got}, target weight is {want}"),
                });
            }
        }
        let recomputed = self.recompute_cost();
        if (recomputed - self.cost).abs() > COST_CONSISTENCY_TOL {
            return Err(Error::InvalidParameter {
                name: "plan",
                reason: format!("stored cost {} vs recomputed {}", self.cost, recomputed),
            });
        }
        Ok(())
    }

    fn recompute_cost(&self) -> f64 {
        let m = self.target.len();
        let mut total = 0.0;
        for (i, x) in self.source.points().iter().enumerate() {
            for (j, y) in self.target.points().iter().enumerate() {
                let f = self.matrix[i * m + j];
                if f > 0.0 {
                    total += f * dist_sq(x, y);
                }
            }
        }
        total
    }

    /// True when every row with positive weight sends all but a
    /// [`MAP_ROW_REL_TOL`] fraction of its mass to a single target atom.
    pub fn is_map(&self) -> bool {
        let m = self.target.len();
        for i in 0..self.source.len() {
            let w = self.source.weight(i);
            if w <= 0.0 {
                continue;
            }
            let significant = self.matrix[i * m..(i + 1) * m]
                .iter()
                .filter(|&&f| f > w * MAP_ROW_REL_TOL)
                .count();
            if significant > 1 {
                return false;
            }
        }
        true
    }
}

impl Displacement {
    pub fn new(base: DiscreteMeasure, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.len() != base.len() {
            return Err(Error::SupportMismatch { displacement: vectors.len(), measure: base.len() });
        }
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != base.dim() {
                return Err(Error::DimensionMismatch { left: base.dim(), right: v.len() });
            }
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFiniteCoordinate { index });
            }
        }
        Ok(Self { base, vectors })
    }

    pub fn zero(base: DiscreteMeasure) -> Self {
        let vectors = vec![vec![0.0; base.dim()]; base.len()];
        Self { base, vectors }
    }

    /// Identity displacement p(x) = x.
    pub fn identity(base: DiscreteMeasure) -> Self {
        let vectors = base.points().to_vec();
        Self { base, vectors }
    }

    pub fn base(&self) -> &DiscreteMeasure {
        &self.base
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    /// L^2 norm under the base measure: (sum_i w_i |v_i|^2)^(1/2).
    pub fn l2_norm(&self) -> f64 {
        let sq: f64 = self
            .vectors
            .iter()
            .zip(self.base.weights())
            .map(|(v, &w)| w * norm_sq(v))
            .sum();
        sq.max(0.0).sqrt()
    }

    pub fn scale(&self, lambda: f64) -> Self {
        let vectors = self
            .vectors
            .iter()
            .map(|v| v.iter().map(|c| lambda * c).collect())
            .collect();
        Self { base: self.base.clone(), vectors }
    }
}

// ======================================================================
// Brute-force oracle
// ======================================================================

/// Ground-truth cost for equal-size uniform clouds: minimum of
/// `(1/n) * sum_i |x_i - y_sigma(i)|^2` over all n! permutations.
///
/// Exponential; intended for n <= 8. This is the independent oracle the
/// exact solver is validated against, so it deliberately shares no code
/// with it.
pub fn brute_force_uniform_cost(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure) -> Result<f64> {
    if nu1.dim() != nu2.dim() {
        return Err(Error::DimensionMismatch { left: nu1.dim(), right: nu2.dim() });
    }
    let n = nu1.len();
    if nu2.len() != n {
        return Err(Error::InvalidParameter { name: "clouds", reason: format!("sizes differ: {} vs {}", n, nu2.len()) });
    }
    for m in [nu1, nu2] {
        for &w in m.weights() {
            if (w - 1.0 / n as f64).abs() > MASS_TOL * 10.0 {
                return Err(Error::InvalidParameter { name: "clouds", reason: "oracle requires uniform weights".into() });
            }
        }
    }
    if n > 8 {
        return Err(Error::InvalidParameter { name: "clouds", reason: format!("oracle caps at n=8, got {n}") });
    }

    let mut pairwise = vec![0.0; n * n];
    for (i, x) in nu1.points().iter().enumerate() {
        for (j, y) in nu2.points().iter().enumerate() {
            pairwise[i * n + j] = dist_sq(x, y);
        }
    }

    // Heap's algorithm over target indices.
    let mut sigma: Vec<usize> = (0..n).collect();
    let mut counters = vec![0usize; n];
    let perm_cost = |sigma: &[usize]| -> f64 {
        sigma.iter().enumerate().map(|(i, &j)| pairwise[i * n + j]).sum::<f64>() / n as f64
    };
    let mut best = perm_cost(&sigma);
    let mut k = 0;
    while k < n {
        if counters[k] < k {
            if k % 2 == 0 {
                sigma.swap(0, k);
            } else {
                sigma.swap(counters[k], k);
            }
            best = best.min(perm_cost(&sigma));
            counters[k] += 1;
            k = 0;
        } else {
            counters[k] = 0;
            k += 1;
        }
    }
    Ok(best)
}

// ======================================================================
// Exact solver
// ======================================================================

/// Optimal coupling between `nu1` and `nu2` under squared Euclidean cost.
///
/// Deterministic: ties in the shortest-path search break toward lower node
/// index, and the support is reduced to a forest afterwards, so equal inputs
/// produce bit-identical plans.
pub fn solve_ot(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure) -> Result<TransportPlan> {
    if nu1.dim() != nu2.dim() {
        return Err(Error::DimensionMismatch { left: nu1.dim(), right: nu2.dim() });
    }
    let (n, m) = (nu1.len(), nu2.len());
    let mut cost = vec![0.0; n * m];
    for (i, x) in nu1.points().iter().enumerate() {
        for (j, y) in nu2.points().iter().enumerate() {
            cost[i * m + j] = dist_sq(x, y);
        }
    }

    let mut flow = vec![0.0; n * m];
    let mut supply: Vec<f64> = nu1.weights().to_vec();
    let mut demand: Vec<f64> = nu2.weights().to_vec();
    // Node layout: 0..n sources, n..n+m sinks.
    let v = n + m;
    let mut pot = vec![0.0; v];

    let max_iters = 8 * v * v + 64;
    let mut iters = 0;
    loop {
        let any_supply = supply.iter().any(|&s| s > SOLVER_MASS_EPS);
        let any_demand = demand.iter().any(|&d| d > SOLVER_MASS_EPS);
        if !any_supply || !any_demand {
            break;
        }
        iters += 1;
        if iters > max_iters {
            return Err(Error::SolverStalled { reason: format!("no convergence after {max_iters} augmentations") });
        }

        // Multi-source Dijkstra over the residual graph with reduced costs.
        let mut dist = vec![f64::INFINITY; v];
        let mut visited = vec![false; v];
        // parent[node] = (previous node, source index i, sink index j, forward?)
        let mut parent: Vec<Option<(usize, usize, usize, bool)>> = vec![None; v];
        for (i, &s) in supply.iter().enumerate() {
            if s > SOLVER_MASS_EPS {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (node, &d) in dist.iter().enumerate() {
                if !visited[node] && d < best {
                    best = d;
                    u = node;
                }
            }
            if u == usize::MAX {
                break;
            }
            visited[u] = true;
            if u < n {
                // forward arcs u -> sink j
                for j in 0..m {
                    let rc = (cost[u * m + j] + pot[u] - pot[n + j]).max(0.0);
                    let nd = dist[u] + rc;
                    if nd < dist[n + j] {
                        dist[n + j] = nd;
                        parent[n + j] = Some((u, u, j, true));
                    }
                }
            } else {
                // backward arcs sink -> source i, available where flow > 0
                let j = u - n;
                for i in 0..n {
                    if flow[i * m + j] > 0.0 {
                        let rc = (pot[u] - pot[i] - cost[i * m + j]).max(0.0);
                        let nd = dist[u] + rc;
                        if nd < dist[i] {
                            dist[i] = nd;
                            parent[i] = Some((u, i, j, false));
                        }
                    }
                }
            }
        }

        // Cheapest reachable unsaturated sink; ties break to lowest index.
        let mut t_star = usize::MAX;
        let mut t_dist = f64::INFINITY;
        for (j, &d) in demand.iter().enumerate() {
            if d > SOLVER_MASS_EPS && dist[n + j] < t_dist {
                t_dist = dist[n + j];
                t_star = n + j;
            }
        }
        if t_star == usize::MAX {
            return Err(Error::SolverStalled { reason: "no unsaturated sink reachable".into() });
        }

        for node in 0..v {
            pot[node] += dist[node].min(t_dist);
        }

        // Trace the augmenting path back to its source.
        let mut path = Vec::new();
        let mut node = t_star;
        while let Some((prev, i, j, forward)) = parent[node] {
            path.push((i, j, forward));
            node = prev;
        }
        let origin = node; // unsaturated source where the path started

        let mut theta = supply[origin].min(demand[t_star - n]);
        for &(i, j, forward) in &path {
            if !forward {
                theta = theta.min(flow[i * m + j]);
            }
        }
        if !(theta > 0.0) {
            return Err(Error::SolverStalled { reason: "zero augmentation".into() });
        }
        for &(i, j, forward) in &path {
            let f = &mut flow[i * m + j];
            if forward {
                *f += theta;
            } else if theta == *f {
                *f = 0.0; // exact zeroing keeps marginals crisp
            } else {
                *f -= theta;
            }
        }
        supply[origin] = if theta == supply[origin] { 0.0 } else { supply[origin] - theta };
        let d = &mut demand[t_star - n];
        *d = if theta == *d { 0.0 } else { *d - theta };
    }

    reduce_to_forest(&mut flow, &cost, n, m);

    let total_cost: f64 = flow
        .iter()
        .zip(&cost)
        .filter(|(&f, _)| f > 0.0)
        .map(|(&f, &c)| f * c)
        .sum();

    Ok(TransportPlan {
        source: nu1.clone(),
        target: nu2.clone(),
        matrix: flow,
        cost: total_cost,
        optimal: true,
    })
}

/// Cancels cycles in the support graph so the plan becomes a vertex of the
/// transportation polytope (forest support, at most n+m-1 arcs). At an
/// optimum every support cycle has ~zero cost per unit pushed; mass is
/// shifted in the non-increasing direction until one arc empties.
fn reduce_to_forest(flow: &mut [f64], cost: &[f64], n: usize, m: usize) {
    loop {
        match find_support_cycle(flow, n, m) {
            None => return,
            Some(cycle) => {
                // cycle: arcs (i, j, sign) alternating +1/-1 along the walk
                let delta: f64 = cycle.iter().map(|&(i, j, sign)| sign as f64 * cost[i * m + j]).sum();
                let flip = delta > 0.0; // push the direction that cannot increase cost
                let mut theta = f64::INFINITY;
                for &(i, j, sign) in &cycle {
                    let decreasing = (sign < 0) != flip;
                    if decreasing {
                        theta = theta.min(flow[i * m + j]);
                    }
                }
                for &(i, j, sign) in &cycle {
                    let decreasing = (sign < 0) != flip;
                    let f = &mut flow[i * m + j];
                    if decreasing {
                        if theta == *f {
                            *f = 0.0;
                        } else {
                            *f -= theta;
                        }
                    } else {
                        *f += theta;
                    }
                }
            }
        }
    }
}

/// Finds one cycle in the bipartite support graph, returned as alternating
/// signed arcs, or `None` if the support is a forest.
fn find_support_cycle(flow: &[f64], n: usize, m: usize) -> Option<Vec<(usize, usize, i8)>> {
    let v = n + m;
    // adjacency over support arcs; arc id = i*m+j
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); v]; // (neighbor, arc id)
    for i in 0..n {
        for j in 0..m {
            if flow[i * m + j] > 0.0 {
                adj[i].push((n + j, i * m + j));
                adj[n + j].push((i, i * m + j));
            }
        }
    }
    let mut state = vec![0u8; v]; // 0 unvisited, 1 on stack, 2 done
    let mut parent_arc = vec![usize::MAX; v];
    let mut parent_node = vec![usize::MAX; v];
    for start in 0..v {
        if state[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        state[start] = 1;
        while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
            if *idx >= adj[node].len() {
                state[node] = 2;
                stack.pop();
                continue;
            }
            let (next, arc) = adj[node][*idx];
            *idx += 1;
            if arc == parent_arc[node] {
                continue; // don't walk straight back along the tree edge
            }
            if state[next] == 1 {
                // found a cycle: walk node -> ... -> next via parents, close with `arc`
                let mut arcs = vec![arc];
                let mut cur = node;
                while cur != next {
                    arcs.push(parent_arc[cur]);
                    cur = parent_node[cur];
                }
                // Orient alternately: even-length bipartite cycle, sign by
                // whether the arc is traversed source->sink.
                let mut signed = Vec::with_capacity(arcs.len());
                let mut sign: i8 = if node < n { 1 } else { -1 };
                for a in arcs {
                    signed.push((a / m, a % m, sign));
                    sign = -sign;
                }
                return Some(signed);
            }
            if state[next] == 0 {
                state[next] = 1;
                parent_arc[next] = arc;
                parent_node[next] = node;
                stack.push((next, 0));
            }
        }
    }
    None
}

// ======================================================================
// Derived quantities
// ======================================================================

/// Wasserstein distance W2 = sqrt(optimal cost).
pub fn w2(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure) -> Result<f64> {
    Ok(solve_ot(nu1, nu2)?.w2())
}

/// Transpose: swaps the roles of source and target. Cost and optimality are
/// inherited (the cost is symmetric in the arguments).
pub fn invert_plan(plan: &TransportPlan) -> TransportPlan {
    let (n, m) = (plan.source.len(), plan.target.len());
    let mut matrix = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            matrix[j * n + i] = plan.matrix[i * m + j];
        }
    }
    TransportPlan {
        source: plan.target.clone(),
        target: plan.source.clone(),
        matrix,
        cost: plan.cost,
        optimal: plan.optimal,
    }
}

/// Barycentric displacements of one optimal plan between `nu1` and `nu2`:
/// `p(x_i) = x_i - (1/w_i) sum_j f_ij y_j` over the source and the mirrored
/// `q` over the target (computed from the same plan's columns).
pub fn displacement_pq(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure) -> Result<PqPair> {
    let plan = solve_ot(nu1, nu2)?;
    let m = nu2.len();
    let mut skipped_source = Vec::new();
    let mut p_vectors = Vec::with_capacity(nu1.len());
    for (i, x) in nu1.points().iter().enumerate() {
        let w = nu1.weight(i);
        if w <= 0.0 {
            skipped_source.push(i);
            p_vectors.push(vec![0.0; nu1.dim()]);
            continue;
        }
        let mut bary = vec![0.0; nu1.dim()];
        for (j, y) in nu2.points().iter().enumerate() {
            let f = plan.entry(i, j);
            if f > 0.0 {
                for (b, &yc) in bary.iter_mut().zip(y) {
                    *b += (f / w) * yc;
                }
            }
        }
        p_vectors.push(x.iter().zip(&bary).map(|(&xc, &bc)| xc - bc).collect());
    }
    let mut skipped_target = Vec::new();
    let mut q_vectors = Vec::with_capacity(m);
    for (j, y) in nu2.points().iter().enumerate() {
        let w = nu2.weight(j);
        if w <= 0.0 {
            skipped_target.push(j);
            q_vectors.push(vec![0.0; nu2.dim()]);
            continue;
        }
        let mut bary = vec![0.0; nu2.dim()];
        for (i, x) in nu1.points().iter().enumerate() {
            let f = plan.entry(i, j);
            if f > 0.0 {
                for (b, &xc) in bary.iter_mut().zip(x) {
                    *b += (f / w) * xc;
                }
            }
        }
        q_vectors.push(y.iter().zip(&bary).map(|(&yc, &bc)| yc - bc).collect());
    }
    Ok(PqPair {
        p: Displacement::new(nu1.clone(), p_vectors)?,
        q: Displacement::new(nu2.clone(), q_vectors)?,
        skipped_source,
        skipped_target,
        plan,
    })
}

/// Optimal displacement `p(x_i) = lambda * (row barycenter - x_i)` toward
/// `xi`, with `is_map` true when the optimal plan sends each source atom to
/// a single target atom.
pub fn optimal_displacement(nu: &DiscreteMeasure, xi: &DiscreteMeasure, lambda: f64) -> Result<OptimalDisplacement> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter { name: "lambda", reason: format!("must be positive and finite, got {lambda}") });
    }
    let pq = displacement_pq(nu, xi)?;
    // p_pq = id - barycenter, so lambda * (barycenter - id) = -lambda * p_pq.
    let displacement = pq.p.scale(-lambda);
    Ok(OptimalDisplacement { displacement, is_map: pq.plan.is_map() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use crate::tol::ORACLE_TOL;

    fn uniform(points: &[&[f64]]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    #[test]
    fn self_plan_has_zero_cost_and_diagonal_support() {
        let nu = uniform(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, 2.0]]);
        let plan = solve_ot(&nu, &nu).unwrap();
        assert!(plan.cost().abs() < 1e-15, "cost {}", plan.cost());
        plan.validate().unwrap();
        for i in 0..3 {
            assert!((plan.entry(i, i) - nu.weight(i)).abs() < 1e-12, "diagonal entry {i}");
        }
    }

    #[test]
    fn vertical_two_by_two_example() {
        // Both permutations cost 1 and 2; the vertical matching wins.
        let a = uniform(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let b = uniform(&[&[0.0, 1.0], &[1.0, 1.0]]);
        let plan = solve_ot(&a, &b).unwrap();
        assert!((plan.cost() - 1.0).abs() < 1e-12, "cost {}", plan.cost());
        assert!((w2(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let oracle = brute_force_uniform_cost(&a, &b).unwrap();
        assert!((oracle - 1.0).abs() < 1e-15, "oracle {oracle}");
    }

    #[test]
    fn transport_to_origin_costs_second_moment() {
        let nu = DiscreteMeasure::new(
            vec![vec![1.0, 2.0], vec![-0.5, 0.25], vec![3.0, -1.0]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let origin = DiscreteMeasure::dirac_origin(2);
        let plan = solve_ot(&nu, &origin).unwrap();
        let m2 = nu.moment2().value;
        assert!((plan.cost() - m2 * m2).abs() < 1e-12);
        assert!((w2(&nu, &origin).unwrap() - m2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap();
        let b = DiscreteMeasure::dirac(vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(solve_ot(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn inversion_is_an_involution() {
        let a = uniform(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let b = uniform(&[&[0.0, 1.0], &[1.0, 1.0]]);
        let plan = solve_ot(&a, &b).unwrap();
        let inv = invert_plan(&plan);
        assert!((inv.cost() - plan.cost()).abs() < 1e-15);
        inv.validate().unwrap();
        assert_eq!(invert_plan(&inv), plan);
        // hand transpose of the vertical matching
        assert!((inv.entry(0, 0) - 0.5).abs() < 1e-12);
        assert!((inv.entry(1, 1) - 0.5).abs() < 1e-12);
        assert!(inv.entry(0, 1).abs() < 1e-15);
    }

    #[test]
    fn diagonal_plan_inverts_to_itself() {
        let nu = uniform(&[&[1.0], &[2.0]]);
        let plan = solve_ot(&nu, &nu).unwrap();
        assert_eq!(invert_plan(&plan), plan);
    }

    #[test]
    fn oracle_matches_solver_on_random_uniform_clouds() {
        for seed in 0..40u64 {
            let mut rng = sampling::rng(1000 + seed);
            let n = 2 + (seed as usize % 4);
            let d = 1 + (seed as usize % 3);
            let a = sampling::uniform_cloud(&mut rng, n, d, 3.0);
            let b = sampling::uniform_cloud(&mut rng, n, d, 3.0);
            let plan = solve_ot(&a, &b).unwrap();
            plan.validate().unwrap();
            let oracle = brute_force_uniform_cost(&a, &b).unwrap();
            assert!(
                (plan.cost() - oracle).abs() <= ORACLE_TOL,
                "seed {seed}: solver {} vs oracle {}",
                plan.cost(),
                oracle
            );
        }
    }

    #[test]
    fn weighted_rectangular_instances_conserve_marginals() {
        for seed in 0..25u64 {
            let mut rng = sampling::rng(2000 + seed);
            let a = sampling::weighted_cloud(&mut rng, 2 + (seed as usize % 5), 2, 2.0);
            let b = sampling::weighted_cloud(&mut rng, 1 + (seed as usize % 6), 2, 2.0);
            let plan = solve_ot(&a, &b).unwrap();
            plan.validate().unwrap();
            assert!(plan.optimal());
        }
    }

    #[test]
    fn support_is_a_forest() {
        for seed in 0..25u64 {
            let mut rng = sampling::rng(3000 + seed);
            let a = sampling::weighted_cloud(&mut rng, 4, 2, 2.0);
            let b = sampling::weighted_cloud(&mut rng, 5, 2, 2.0);
            let plan = solve_ot(&a, &b).unwrap();
            let support = plan.matrix().iter().filter(|&&f| f > 0.0).count();
            assert!(support < a.len() + b.len(), "seed {seed}: support {support} exceeds the n+m-1 forest bound");
        }
    }

    #[test]
    fn duplicate_support_points_are_handled() {
        // two identical atoms on each side: any matching has cost 0
        let a = uniform(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let b = uniform(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let plan = solve_ot(&a, &b).unwrap();
        assert!(plan.cost().abs() < 1e-15);
        plan.validate().unwrap();
    }

    #[test]
    fn pq_vanishes_on_identical_measures() {
        let nu = uniform(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 2.0]]);
        let pq = displacement_pq(&nu, &nu).unwrap();
        assert!(pq.p.l2_norm() < 1e-12, "p norm {}", pq.p.l2_norm());
        assert!(pq.q.l2_norm() < 1e-12, "q norm {}", pq.q.l2_norm());
        assert!(pq.skipped_source.is_empty() && pq.skipped_target.is_empty());
    }

    #[test]
    fn pq_between_point_masses() {
        let origin = DiscreteMeasure::dirac_origin(2);
        let z = DiscreteMeasure::dirac(vec![3.0, -4.0]).unwrap();
        let pq = displacement_pq(&origin, &z).unwrap();
        assert_eq!(pq.p.vector(0), &[-3.0, 4.0], "p(0) = -z");
        assert_eq!(pq.q.vector(0), &[3.0, -4.0], "q(z) = z");
    }

    #[test]
    fn pq_recovers_the_unique_permutation() {
        let a = uniform(&[&[0.0, 0.0], &[10.0, 0.0]]);
        let b = uniform(&[&[0.5, 0.0], &[9.0, 1.0]]);
        let pq = displacement_pq(&a, &b).unwrap();
        assert_eq!(pq.p.vector(0), &[-0.5, 0.0]);
        assert_eq!(pq.p.vector(1), &[1.0, -1.0]);
    }

    #[test]
    fn pq_skips_zero_weight_atoms() {
        let a = DiscreteMeasure::new(vec![vec![0.0, 0.0], vec![5.0, 5.0]], vec![1.0, 0.0]).unwrap();
        let b = DiscreteMeasure::dirac(vec![1.0, 0.0]).unwrap();
        let pq = displacement_pq(&a, &b).unwrap();
        assert_eq!(pq.skipped_source, vec![1]);
        assert_eq!(pq.p.vector(1), &[0.0, 0.0], "skipped atom gets the zero vector");
    }

    #[test]
    fn pq_norm_bounded_by_w2() {
        for seed in 0..30u64 {
            let mut rng = sampling::rng(4000 + seed);
            let a = sampling::weighted_cloud(&mut rng, 3 + (seed as usize % 3), 2, 2.0);
            let b = sampling::weighted_cloud(&mut rng, 2 + (seed as usize % 4), 2, 2.0);
            let pq = displacement_pq(&a, &b).unwrap();
            let dist = pq.plan.w2();
            assert!(pq.p.l2_norm() <= dist + 1e-9, "seed {seed}: |p| {} vs W2 {}", pq.p.l2_norm(), dist);
            assert!(pq.q.l2_norm() <= dist + 1e-9, "seed {seed}: |q| {} vs W2 {}", pq.q.l2_norm(), dist);
        }
    }

    #[test]
    fn optimal_displacement_to_self_is_zero() {
        let nu = uniform(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let od = optimal_displacement(&nu, &nu, 1.0).unwrap();
        assert!(od.displacement.l2_norm() < 1e-12);
        assert!(od.is_map);
    }

    #[test]
    fn optimal_displacement_to_origin_is_contraction() {
        let nu = uniform(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let origin = DiscreteMeasure::dirac_origin(2);
        let od = optimal_displacement(&nu, &origin, 1.0).unwrap();
        assert_eq!(od.displacement.vector(0), &[-1.0, 0.0], "p(x) = -x");
        assert_eq!(od.displacement.vector(1), &[1.0, 0.0]);
        assert!(od.is_map, "all mass goes to the single origin atom");
    }

    #[test]
    fn optimal_displacement_from_dirac_splits() {
        let origin = DiscreteMeasure::dirac_origin(2);
        let nu = uniform(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        let od = optimal_displacement(&origin, &nu, 1.0).unwrap();
        assert_eq!(od.displacement.vector(0), &[0.0, 0.0], "barycenter of the split row is 0");
        assert!(!od.is_map, "one atom cannot map onto two");
    }

    #[test]
    fn optimal_displacement_rejects_bad_lambda() {
        let nu = uniform(&[&[1.0, 0.0]]);
        assert!(optimal_displacement(&nu, &nu, 0.0).is_err());
        assert!(optimal_displacement(&nu, &nu, -1.0).is_err());
    }

    #[test]
    fn oracle_rejects_nonuniform_or_mismatched_inputs() {
        let a = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.75, 0.25]).unwrap();
        let b = uniform(&[&[0.0], &[1.0]]);
        assert!(brute_force_uniform_cost(&a, &b).is_err());
        let c = uniform(&[&[0.0]]);
        assert!(brute_force_uniform_cost(&b, &c).is_err());
    }
}
