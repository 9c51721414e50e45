//! Within-cluster variability by functional PCA on B-spline coefficients.
//!
//! Every aligned member is fit with a clamped cubic spline of three equal
//! spans per channel; principal components are taken over the resulting
//! coefficient vectors.

mod bspline;

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bspline::{fit_bspline, spline_residual, CubicBasis, SplineFit, BASIS_SIZE, DEGREE, SPANS};

use crate::divergence::normalized_dtw;
use crate::error::{Error, Result};
use crate::io::{write_csv, write_json};
use crate::model::Series;

/// Inner product used for the coefficient covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CoefficientMetric {
    /// Plain Euclidean inner product on the coefficients.
    #[default]
    Raw,
    /// L2 inner product of the represented curves (basis Gram matrix).
    Gram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaResult {
    pub mean_coefficients: Vec<f64>,
    /// Principal directions in coefficient space, by decreasing variance.
    /// Orthonormal under the chosen metric.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues over their sum; all zero when `total_variance == 0`.
    pub variance_fractions: Vec<f64>,
    pub total_variance: f64,
    /// Mean normalized DTW over member pairs.
    pub pairwise_divergence_mean: f64,
    pub members: usize,
    pub dof: usize,
    pub frames: usize,
    pub metric: CoefficientMetric,
    pub basis: CubicBasis,
}

fn block_gram(basis: &CubicBasis, dof: usize) -> DMatrix<f64> {
    let g = basis.gram();
    let p = BASIS_SIZE * dof;
    let mut out = DMatrix::zeros(p, p);
    for c in 0..dof {
        out.view_mut((c * BASIS_SIZE, c * BASIS_SIZE), (BASIS_SIZE, BASIS_SIZE))
            .copy_from(&g);
    }
    out
}

/// Symmetric square root and its inverse.
fn sqrt_and_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(m.clone());
    let root = DVector::from_iterator(e.eigenvalues.len(), e.eigenvalues.iter().map(|v| v.sqrt()));
    let inv = root.map(|v| 1.0 / v);
    let q = &e.eigenvectors;
    (
        q * DMatrix::from_diagonal(&root) * q.transpose(),
        q * DMatrix::from_diagonal(&inv) * q.transpose(),
    )
}

pub fn cluster_fpca(members: &[&Series]) -> Result<FpcaResult> {
    cluster_fpca_with(members, CoefficientMetric::Raw)
}

/// Functional PCA over members that already share one length.
pub fn cluster_fpca_with(members: &[&Series], metric: CoefficientMetric) -> Result<FpcaResult> {
    if members.len() < 2 {
        return Err(Error::invalid(format!(
            "functional PCA needs at least 2 members, got {}",
            members.len()
        )));
    }
    let frames = members[0].frames();
    let dof = members[0].dof();
    if let Some(m) = members
        .iter()
        .find(|m| m.frames() != frames || m.dof() != dof)
    {
        return Err(Error::invalid(format!(
            "members must be aligned to one shape: {frames}x{dof} vs {}x{}",
            m.frames(),
            m.dof()
        )));
    }
    let projector = bspline::Projector::new(frames)?;
    let fits: Vec<SplineFit> = members
        .iter()
        .map(|m| projector.fit(m))
        .collect::<Result<_>>()?;
    let basis = fits[0].basis.clone();
    let n = fits.len();
    let p = BASIS_SIZE * dof;

    // Accumulate offsets from the first member so that identical members
    // give an exactly zero spread.
    let first = &fits[0].coefficients;
    let mut offset = vec![0.0; p];
    for f in &fits[1..] {
        for ((o, c), c0) in offset.iter_mut().zip(&f.coefficients).zip(first) {
            *o += c - c0;
        }
    }
    let mean: Vec<f64> = first
        .iter()
        .zip(&offset)
        .map(|(c0, o)| c0 + o / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, p, |i, j| fits[i].coefficients[j] - mean[j]);
    let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);

    let whitening = match metric {
        CoefficientMetric::Raw => None,
        CoefficientMetric::Gram => {
            let (root, inv) = sqrt_and_inverse(&block_gram(&basis, dof));
            cov = &root * cov * &root;
            Some(inv)
        }
    };
    cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let v = eig.eigenvectors.column(i).into_owned();
            let v = match &whitening {
                Some(inv) => inv * v,
                None => v,
            };
            // Sign convention: largest-magnitude entry positive.
            let pivot = v
                .iter()
                .fold(0.0f64, |a, &b| if b.abs() > a.abs() { b } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            v.iter().map(|x| x * sign).collect()
        })
        .collect();
    let total_variance: f64 = eigenvalues.iter().sum();
    let variance_fractions = if total_variance > 0.0 {
        eigenvalues.iter().map(|v| v / total_variance).collect()
    } else {
        vec![0.0; p]
    };

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let divergences: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| normalized_dtw(members[i], members[j]))
        .collect::<Result<_>>()?;
    let pairwise_divergence_mean = divergences.iter().sum::<f64>() / divergences.len() as f64;

    Ok(FpcaResult {
        mean_coefficients: mean,
        components,
        eigenvalues,
        variance_fractions,
        total_variance,
        pairwise_divergence_mean,
        members: n,
        dof,
        frames,
        metric,
        basis,
    })
}

/// Smallest number of leading components whose variance fractions reach
/// `threshold`; 0 when the cluster has no variance.
pub fn components_to_cover(r: &FpcaResult, threshold: f64) -> usize {
    if r.total_variance == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, f) in r.variance_fractions.iter().enumerate() {
        acc += f;
        if acc >= threshold - 1e-12 {
            return i + 1;
        }
    }
    r.variance_fractions.len()
}

impl FpcaResult {
    /// Cumulative variance fractions.
    pub fn cumulative_fractions(&self) -> Vec<f64> {
        self.variance_fractions
            .iter()
            .scan(0.0, |acc, f| {
                *acc += f;
                Some(*acc)
            })
            .collect()
    }

    /// Component scores of a coefficient vector.
    pub fn scores(&self, coefficients: &[f64]) -> Vec<f64> {
        let centered = DVector::from_iterator(
            coefficients.len(),
            coefficients
                .iter()
                .zip(&self.mean_coefficients)
                .map(|(c, m)| c - m),
        );
        let weighted = match self.metric {
            CoefficientMetric::Raw => centered,
            CoefficientMetric::Gram => block_gram(&self.basis, self.dof) * centered,
        };
        self.components
            .iter()
            .map(|v| v.iter().zip(weighted.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Coefficients for the given component scores.
    pub fn reconstruct_coefficients(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean_coefficients.clone();
        for (s, v) in scores.iter().zip(&self.components) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += s * x;
            }
        }
        out
    }

    pub fn evaluate(&self, coefficients: &[f64]) -> Series {
        bspline::evaluate_coefficients(&self.basis, coefficients, self.dof, self.frames)
    }

    pub fn mean_curve(&self) -> Series {
        self.evaluate(&self.mean_coefficients)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Writes mean and `±alpha` curves of the first `count` components as
    /// long-form CSV: `component,curve,frame,<channels...>`.
    pub fn save_component_curves(
        &self,
        path: &Path,
        labels: &[&str],
        count: usize,
        alpha: Option<f64>,
    ) -> Result<()> {
        let mut header = vec!["component", "curve", "frame"];
        header.extend(labels);
        let mut rows = Vec::new();
        let mut push = |component: usize, curve: &str, s: &Series| {
            for (f, r) in s.rows().enumerate() {
                let mut row = vec![component.to_string(), curve.to_string(), f.to_string()];
                row.extend(r.iter().map(|v| v.to_string()));
                rows.push(row);
            }
        };
        push(0, "mean", &self.mean_curve());
        for k in 1..=count.min(self.components.len()) {
            let (plus, minus) = reconstruct_component(self, k, alpha)?;
            push(k, "plus", &plus);
            push(k, "minus", &minus);
        }
        write_csv(path, &header, rows)
    }
}

/// Curves `mean ± alpha · component[k]` (1-based `k`). `alpha` defaults to
/// the component's variance fraction.
pub fn reconstruct_component(
    r: &FpcaResult,
    k: usize,
    alpha: Option<f64>,
) -> Result<(Series, Series)> {
    if k < 1 || k > r.components.len() {
        return Err(Error::OutOfRange {
            what: "component",
            value: k,
            min: 1,
            max: r.components.len(),
        });
    }
    let alpha = alpha.unwrap_or(r.variance_fractions[k - 1]);
    let v = &r.components[k - 1];
    let plus: Vec<f64> = r
        .mean_coefficients
        .iter()
        .zip(v)
        .map(|(m, x)| m + alpha * x)
        .collect();
    let minus: Vec<f64> = r
        .mean_coefficients
        .iter()
        .zip(v)
        .map(|(m, x)| m - alpha * x)
        .collect();
    Ok((r.evaluate(&plus), r.evaluate(&minus)))
}
