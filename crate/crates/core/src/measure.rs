//! Discrete probability measures on R^d: weighted point clouds with moment
//! functionals and push-forward.
//!
//! A measure is a finite list of support points with nonnegative weights
//! summing to one. Duplicate support points are allowed and kept as distinct
//! atoms: merging them would change plan dimensions mid-trajectory, while
//! every downstream computation is indifferent to the split.

use crate::{Error, Result};
use crate::tol::MASS_TOL;
use serde::{Deserialize, Serialize};

/// Weighted point cloud. Immutable after construction; weights sum to 1
/// within [`MASS_TOL`], all coordinates finite, at least one atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dim: usize,
}

/// A moment functional value together with the order it was computed at.
/// `value >= 0`, and `value == 0` exactly when all mass sits at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentValue {
    pub value: f64,
    pub order: f64,
}

impl DiscreteMeasure {
    /// Builds a measure from raw points and weights.
    ///
    /// Weights may sum to any positive value; they are renormalized to sum 1.
    /// When the sum is already within [`MASS_TOL`] of 1 the weights are kept
    /// bit-for-bit, which makes reconstruction from a measure's own fields
    /// the identity.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySupport);
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch { points: points.len(), weights: weights.len() });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "points", reason: "zero-dimensional support point".into() });
        }
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: p.len() });
            }
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFiniteCoordinate { index });
            }
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::NegativeWeight { index, value: w });
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroTotalMass);
        }
        let weights = if (total - 1.0).abs() <= MASS_TOL {
            weights
        } else {
            weights.iter().map(|w| w / total).collect()
        };
        Ok(Self { points, weights, dim })
    }

    /// Point mass at `point`.
    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    /// Point mass at the origin of R^d.
    pub fn dirac_origin(dim: usize) -> Self {
        Self::new(vec![vec![0.0; dim]], vec![1.0]).expect("origin dirac is always valid")
    }

    /// Uniform weights over the given support.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: at least one atom
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            for (mc, &pc) in m.iter_mut().zip(p) {
                *mc += w * pc;
            }
        }
        m
    }

    /// 2-moment: (sum_i w_i |x_i|^2)^(1/2). Equals W2 distance to the origin
    /// point mass.
    pub fn moment2(&self) -> MomentValue {
        let sq: f64 = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * norm_sq(p))
            .sum();
        MomentValue { value: sq.max(0.0).sqrt(), order: 2.0 }
    }

    /// (2+eps)-moment: (sum_i w_i |x_i|^(2+eps))^(1/(2+eps)), eps > 0.
    pub fn moment2eps(&self, eps: f64) -> Result<MomentValue> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter { name: "eps", reason: format!("must be positive and finite, got {eps}") });
        }
        let order = 2.0 + eps;
        let sum: f64 = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * norm_sq(p).sqrt().powf(order))
            .sum();
        Ok(MomentValue { value: sum.max(0.0).powf(1.0 / order), order })
    }

    /// Image measure under a pointwise map. Weights are unchanged; duplicate
    /// images are kept as separate atoms.
    pub fn push_forward<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut points = Vec::with_capacity(self.len());
        for (index, p) in self.points.iter().enumerate() {
            let image = map(p);
            if image.len() != self.dim {
                return Err(Error::DimensionMismatch { left: self.dim, right: image.len() });
            }
            if !image.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFiniteCoordinate { index });
            }
            points.push(image);
        }
        Ok(Self { points, weights: self.weights.clone(), dim: self.dim })
    }

    /// Largest support-point norm, used for growth-bound scaling.
    pub fn max_point_norm(&self) -> f64 {
        self.points.iter().map(|p| norm_sq(p).sqrt()).fold(0.0, f64::max)
    }
}

/// |x|^2 for a coordinate slice.
pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum()
}

/// |x| for a coordinate slice.
pub fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

/// Euclidean distance squared between two slices of equal length.
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub mod io {
    //! Measure file formats: JSON `{"points": [[..], ..], "weights": [..]}`
    //! and CSV with columns `x1..xd,w` (header required).

    use super::DiscreteMeasure;
    use crate::{Error, Result};
    use std::io::{BufRead, BufReader, Write};
    use std::path::Path;

    #[derive(serde::Serialize, serde::Deserialize)]
    struct MeasureFile {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    }

    pub fn read_json(path: &Path) -> Result<DiscreteMeasure> {
        let file = std::fs::File::open(path)?;
        let raw: MeasureFile = serde_json::from_reader(BufReader::new(file))?;
        DiscreteMeasure::new(raw.points, raw.weights)
    }

    pub fn write_json(measure: &DiscreteMeasure, path: &Path) -> Result<()> {
        let raw = MeasureFile { points: measure.points().to_vec(), weights: measure.weights().to_vec() };
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, &raw)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<DiscreteMeasure> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedMeasureFile { reason: "empty file".into() })??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.last() != Some(&"w") || cols.len() < 2 {
            return Err(Error::MalformedMeasureFile { reason: format!("expected header x1..xd,w, got {header:?}") });
        }
        let dim = cols.len() - 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::MalformedMeasureFile {
                    reason: format!("line {}: expected {} fields, got {}", lineno + 2, dim + 1, fields.len()),
                });
            }
            let mut point = Vec::with_capacity(dim);
            for f in &fields[..dim] {
                point.push(f.parse::<f64>().map_err(|e| Error::MalformedMeasureFile {
                    reason: format!("line {}: {e}", lineno + 2),
                })?);
            }
            weights.push(fields[dim].parse::<f64>().map_err(|e| Error::MalformedMeasureFile {
                reason: format!("line {}: {e}", lineno + 2),
            })?);
            points.push(point);
        }
        DiscreteMeasure::new(points, weights)
    }

    pub fn write_csv(measure: &DiscreteMeasure, path: &Path) -> Result<()> {
        let mut out = String::new();
        let dim = measure.dim();
        for j in 1..=dim {
            out.push_str(&format!("x{j},"));
        }
        out.push_str("w\n");
        for (p, &w) in measure.points().iter().zip(measure.weights()) {
            for c in p {
                out.push_str(&format!("{c},"));
            }
            out.push_str(&format!("{w}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
