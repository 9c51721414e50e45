//! Cubic Bézier features: each channel is summarized by four control points
//! with the end points pinned to the first and last samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Series;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierFeature {
    /// `[P0, P1, P2, P3]` per channel, channels concatenated.
    pub control_points: Vec<f64>,
    pub dof: usize,
}

impl BezierFeature {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.control_points[4 * c..4 * c + 4]
    }

    pub fn as_vector(&self) -> &[f64] {
        &self.control_points
    }

    /// Evaluates the curve of channel `c` at parameter `s` in `[0, 1]`.
    pub fn eval(&self, c: usize, s: f64) -> f64 {
        let b = bernstein(s);
        self.channel(c).iter().zip(b).map(|(p, w)| p * w).sum()
    }
}

#[inline]
pub(crate) fn bernstein(s: f64) -> [f64; 4] {
    let u = 1.0 - s;
    [u * u * u, 3.0 * u * u * s, 3.0 * u * s * s, s * s * s]
}

/// Least-squares cubic Bézier fit of every channel under the uniform
/// parameterization `s = t / (frames - 1)`.
pub fn fit_cubic_bezier(t: &Series) -> Result<BezierFeature> {
    let n = t.frames();
    if n < 4 {
        return Err(Error::invalid(format!(
            "cubic Bézier fit needs at least 4 frames, got {n}"
        )));
    }
    let basis: Vec<[f64; 4]> = (0..n)
        .map(|i| bernstein(i as f64 / (n - 1) as f64))
        .collect();
    let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
    for b in &basis {
        s11 += b[1] * b[1];
        s12 += b[1] * b[2];
        s22 += b[2] * b[2];
    }
    let det = s11 * s22 - s12 * s12;

    let mut control_points = Vec::with_capacity(4 * t.dof());
    for c in 0..t.dof() {
        let p0 = t.get(0, c);
        let p3 = t.get(n - 1, c);
        let (mut r1, mut r2) = (0.0, 0.0);
        for (i, b) in basis.iter().enumerate() {
            let r = t.get(i, c) - b[0] * p0 - b[3] * p3;
            r1 += b[1] * r;
            r2 += b[2] * r;
        }
        let p1 = (s22 * r1 - s12 * r2) / det;
        let p2 = (s11 * r2 - s12 * r1) / det;
        control_points.extend([p0, p1, p2, p3]);
    }
    Ok(BezierFeature {
        control_points,
        dof: t.dof(),
    })
}

/// Euclidean distance between two feature vectors.
pub fn bezier_divergence(a: &BezierFeature, b: &BezierFeature) -> Result<f64> {
    if a.control_points.len() != b.control_points.len() {
        return Err(Error::DimensionMismatch {
            expected: a.control_points.len(),
            actual: b.control_points.len(),
        });
    }
    Ok(a.control_points
        .iter()
        .zip(&b.control_points)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Sum of squared residuals of a feature against the samples it was fit to.
pub fn bezier_residual(t: &Series, f: &BezierFeature) -> f64 {
    let n = t.frames();
    (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            (0..t.dof())
                .map(|c| (t.get(i, c) - f.eval(c, s)).powi(2))
                .sum::<f64>()
        })
        .sum()
}
