//! The set-valued Hamiltonian `H_F(nu, p) = sum_i w_i inf_{v in F(x_i, nu)}
//! <p(x_i), v>` with closed-form ball infima, the velocity realizing the
//! infimum, and the modulus-of-continuity residual used by the comparison
//! machinery.

use crate::dynamics::FieldSpec;
use crate::measure::DiscreteMeasure;
use crate::transport::{displacement_pq, Displacement};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Hamiltonian value with its per-atom infima. The weighted sum of
/// `per_point` reproduces `value` to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianValue {
    pub value: f64,
    pub per_point: Vec<f64>,
}

/// Modulus residual of one measure pair: `residual` must stay below `bound`
/// = 2 L lambda W2^2 for the supported field families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HokReport {
    pub residual: f64,
    pub bound: f64,
    pub w2: f64,
}

/// Evaluates `H_F(nu, p)`. For ball images the per-atom infimum is the
/// closed form `<p, center> - radius * |p|`; singletons reduce to a plain
/// inner product.
pub fn hamiltonian(field: &FieldSpec, nu: &DiscreteMeasure, p: &Displacement) -> Result<HamiltonianValue> {
    if p.base().len() != nu.len() {
        return Err(Error::SupportMismatch { displacement: p.base().len(), measure: nu.len() });
    }
    if p.base().dim() != nu.dim() {
        return Err(Error::DimensionMismatch { left: p.base().dim(), right: nu.dim() });
    }
    let mut per_point = Vec::with_capacity(nu.len());
    let mut value = 0.0;
    for (i, x) in nu.points().iter().enumerate() {
        let ball = field.eval(x, nu)?;
        let inf = ball.support_min(p.vector(i));
        per_point.push(inf);
        value += nu.weight(i) * inf;
    }
    Ok(HamiltonianValue { value, per_point })
}

/// The velocity realizing the per-atom infimum: for balls
/// `center - radius * p/|p|` (the center when `p = 0`), for singletons the
/// single value. Always an exact member of `F(x, nu)`.
pub fn argmin_selection(field: &FieldSpec, x: &[f64], nu: &DiscreteMeasure, p_x: &[f64]) -> Result<Vec<f64>> {
    let ball = field.eval(x, nu)?;
    Ok(ball.support_argmin(p_x))
}

/// Modulus residual between two crowd states:
/// `residual = |H_F(nu1, lambda p) - H_F(nu2, -lambda q)|` with `p, q` the
/// barycentric displacements of one optimal plan, against
/// `bound = 2 L lambda W2^2(nu1, nu2)`.
///
/// Orientation matters: the two displacements enter with opposite signs,
/// matching how a doubling-of-variables argument tests the two copies (the
/// sub-side with `+lambda p`, the super-side with `-lambda q`). Evaluating
/// both with the same sign adds a first-order term in W2 for single-valued
/// fields and no quadratic bound can hold. For ball images centered at the
/// origin the residual is insensitive to the sign, so the tightness witness
/// (point mass at the origin vs. one at z, where residual = bound exactly)
/// is unaffected.
pub fn hok_residual(field: &FieldSpec, nu1: &DiscreteMeasure, nu2: &DiscreteMeasure, lambda: f64) -> Result<HokReport> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter { name: "lambda", reason: format!("must be positive and finite, got {lambda}") });
    }
    let pq = displacement_pq(nu1, nu2)?;
    let w2 = pq.plan.w2();
    let h1 = hamiltonian(field, nu1, &pq.p.scale(lambda))?;
    let h2 = hamiltonian(field, nu2, &pq.q.scale(-lambda))?;
    let residual = (h1.value - h2.value).abs();
    let bound = 2.0 * field.lipschitz_l * lambda * w2 * w2;
    Ok(HokReport { residual, bound, w2 })
}
