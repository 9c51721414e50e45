//! Clamped cubic B-splines with three equal spans.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Series;

pub const DEGREE: usize = 3;
pub const SPANS: usize = 3;
/// Basis functions per channel.
pub const BASIS_SIZE: usize = DEGREE + SPANS;

/// Cubic basis on `[0, domain]` with knots
/// `0,0,0,0, domain/3, 2*domain/3, domain,domain,domain,domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicBasis {
    pub domain: f64,
    pub knots: Vec<f64>,
}

impl CubicBasis {
    pub fn new(domain: f64) -> Self {
        let mut knots = vec![0.0; DEGREE + 1];
        for s in 1..SPANS {
            knots.push(domain * s as f64 / SPANS as f64);
        }
        knots.extend([domain; DEGREE + 1]);
        CubicBasis { domain, knots }
    }

    /// Basis for a series sampled at frames `0..frames`.
    pub fn for_frames(frames: usize) -> Self {
        CubicBasis::new((frames - 1) as f64)
    }

    /// Values of all basis functions at `x` (Cox-de Boor).
    pub fn eval(&self, x: f64) -> [f64; BASIS_SIZE] {
        let t = &self.knots;
        let x = x.clamp(0.0, self.domain);
        // Span index `mu` with t[mu] <= x < t[mu + 1]; the right end belongs
        // to the last non-empty span.
        let mut mu = DEGREE;
        while mu < BASIS_SIZE - 1 && x >= t[mu + 1] {
            mu += 1;
        }
        let mut n = [0.0; DEGREE + 1];
        n[0] = 1.0;
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        for j in 1..=DEGREE {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        let mut out = [0.0; BASIS_SIZE];
        for (r, v) in n.iter().enumerate() {
            out[mu - DEGREE + r] = *v;
        }
        out
    }

    /// `frames × BASIS_SIZE` design matrix on the integer frame grid.
    pub fn design(&self, frames: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(frames, BASIS_SIZE);
        for i in 0..frames {
            for (j, v) in self.eval(i as f64).iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    /// Gram matrix of the basis on `[0, domain]`, by 4-point Gauss-Legendre
    /// quadrature on each span (exact for the degree-6 products).
    pub fn gram(&self) -> DMatrix<f64> {
        const NODES: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const WEIGHTS: [f64; 4] = [
            0.347_854_845_137_453_9,
            0.652_145_154_862_546_1,
            0.652_145_154_862_546_1,
            0.347_854_845_137_453_9,
        ];
        let mut g = DMatrix::zeros(BASIS_SIZE, BASIS_SIZE);
        for s in 0..SPANS {
            let a = self.knots[DEGREE + s];
            let b = self.knots[DEGREE + s + 1];
            let half = 0.5 * (b - a);
            for (node, w) in NODES.iter().zip(WEIGHTS) {
                let v = self.eval(a + half * (node + 1.0));
                for i in 0..BASIS_SIZE {
                    for j in 0..BASIS_SIZE {
                        g[(i, j)] += w * half * v[i] * v[j];
                    }
                }
            }
        }
        g
    }
}

/// Per-channel least-squares spline coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    /// `BASIS_SIZE` coefficients per channel, channels concatenated.
    pub coefficients: Vec<f64>,
    pub dof: usize,
    pub frames: usize,
    pub basis: CubicBasis,
}

impl SplineFit {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.coefficients[c * BASIS_SIZE..(c + 1) * BASIS_SIZE]
    }

    /// Samples the fitted curves back on the frame grid.
    pub fn evaluate(&self) -> Series {
        evaluate_coefficients(&self.basis, &self.coefficients, self.dof, self.frames)
    }
}

pub(crate) fn evaluate_coefficients(
    basis: &CubicBasis,
    coefficients: &[f64],
    dof: usize,
    frames: usize,
) -> Series {
    let mut data = Vec::with_capacity(frames * dof);
    for i in 0..frames {
        let b = basis.eval(i as f64);
        for c in 0..dof {
            let coef = &coefficients[c * BASIS_SIZE..(c + 1) * BASIS_SIZE];
            data.push(coef.iter().zip(&b).map(|(x, y)| x * y).sum());
        }
    }
    Series::new(data, dof).expect("non-empty grid")
}

/// Least-squares projector `(BᵀB)⁻¹Bᵀ` for one frame count.
pub(crate) struct Projector {
    basis: CubicBasis,
    pinv: DMatrix<f64>,
    frames: usize,
}

impl Projector {
    pub fn new(frames: usize) -> Result<Self> {
        if frames < BASIS_SIZE {
            return Err(Error::invalid(format!(
                "spline fit needs at least {BASIS_SIZE} frames, got {frames}"
            )));
        }
        let basis = CubicBasis::for_frames(frames);
        let pinv = basis
            .design(frames)
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(Projector {
            basis,
            pinv,
            frames,
        })
    }

    pub fn fit(&self, t: &Series) -> Result<SplineFit> {
        if t.frames() != self.frames {
            return Err(Error::DimensionMismatch {
                expected: self.frames,
                actual: t.frames(),
            });
        }
        let mut coefficients = Vec::with_capacity(BASIS_SIZE * t.dof());
        for c in 0..t.dof() {
            for r in 0..BASIS_SIZE {
                coefficients.push(
                    (0..self.frames)
                        .map(|i| self.pinv[(r, i)] * t.get(i, c))
                        .sum(),
                );
            }
        }
        Ok(SplineFit {
            coefficients,
            dof: t.dof(),
            frames: self.frames,
            basis: self.basis.clone(),
        })
    }
}

pub fn fit_bspline(t: &Series) -> Result<SplineFit> {
    Projector::new(t.frames())?.fit(t)
}

/// Sum of squared differences between a fit and its input samples.
pub fn spline_residual(t: &Series, fit: &SplineFit) -> f64 {
    let e = fit.evaluate();
    t.as_slice()
        .iter()
        .zip(e.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum()
}
