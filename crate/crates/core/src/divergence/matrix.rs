use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bezier::{bezier_divergence, fit_cubic_bezier, BezierFeature};
use super::dtw::bidirectional_divergence;
use crate::error::{Error, Result};
use crate::io::{parse_f64, read_csv, read_json, write_csv, write_json};
use crate::model::{Dataset, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Measure {
    /// Bidirectional, length-normalized DTW.
    #[default]
    NormalizedDtw,
    /// Euclidean distance between cubic Bézier control-point vectors.
    BezierEuclid,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DivergenceOptions {
    pub measure: Measure,
    /// Standardize each channel by its pooled mean and deviation first.
    pub z_normalize: bool,
    /// Worker count; `None` uses the global pool, `Some(1)` runs inline.
    pub threads: Option<usize>,
}

/// Symmetric pairwise divergences with the provenance needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
    reversed: Vec<bool>,
    pub measure: Measure,
    pub z_normalized: bool,
    /// Content hash of the inputs the matrix was computed from.
    pub source_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    measure: Measure,
    z_normalized: bool,
    source_hash: Option<String>,
    ids: Vec<String>,
    reversed: Vec<Vec<bool>>,
}

impl DivergenceMatrix {
    /// Wraps a square table, checking symmetry, finiteness, non-negativity
    /// and a zero diagonal.
    pub fn from_values(ids: Vec<String>, values: Vec<Vec<f64>>, measure: Measure) -> Result<Self> {
        let k = ids.len();
        if k == 0 {
            return Err(Error::Empty("divergence matrix"));
        }
        if values.len() != k || values.iter().any(|r| r.len() != k) {
            return Err(Error::invalid(format!(
                "divergence table must be {k} x {k}"
            )));
        }
        for i in 0..k {
            if values[i][i] != 0.0 {
                return Err(Error::invalid(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..k {
                let v = values[i][j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!(
                        "entry ({i}, {j}) = {v} is not a finite non-negative value"
                    )));
                }
                if v != values[j][i] {
                    return Err(Error::invalid(format!("entry ({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(DivergenceMatrix {
            ids,
            values: values.into_iter().flatten().collect(),
            reversed: vec![false; k * k],
            measure,
            z_normalized: false,
            source_hash: None,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn reversed(&self, i: usize, j: usize) -> bool {
        self.reversed[i * self.len() + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.len())
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Writes `<stem>.csv` (square table, header = ids) and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let k = self.len();
        let mut header = vec!["id".to_string()];
        header.extend(self.ids.iter().cloned());
        write_csv(
            &dir.join(format!("{stem}.csv")),
            &header,
            (0..k).map(|i| {
                let mut row = vec![self.ids[i].clone()];
                row.extend((0..k).map(|j| self.get(i, j).to_string()));
                row
            }),
        )?;
        write_json(
            &dir.join(format!("{stem}.json")),
            &Sidecar {
                measure: self.measure,
                z_normalized: self.z_normalized,
                source_hash: self.source_hash.clone(),
                ids: self.ids.clone(),
                reversed: self.reversed.chunks(k).map(<[bool]>::to_vec).collect(),
            },
        )
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        let sidecar: Sidecar = read_json(&json_path)?;
        let (header, rows) = read_csv(&csv_path)?;
        let ids: Vec<String> = header.into_iter().skip(1).collect();
        if ids != sidecar.ids {
            return Err(Error::parse(&csv_path, "ids differ from sidecar"));
        }
        let values = rows
            .iter()
            .map(|r| r.iter().skip(1).map(|v| parse_f64(&csv_path, v)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut m = DivergenceMatrix::from_values(ids, values, sidecar.measure)
            .map_err(|e| Error::parse(&csv_path, e))?;
        m.reversed = sidecar.reversed.into_iter().flatten().collect();
        if m.reversed.len() != m.values.len() {
            return Err(Error::parse(
                &json_path,
                "reversal table has the wrong size",
            ));
        }
        m.z_normalized = sidecar.z_normalized;
        m.source_hash = sidecar.source_hash;
        Ok(m)
    }
}

/// Per-channel standardization using statistics pooled over every frame.
pub fn z_normalize(items: &[&Series]) -> Vec<Series> {
    let Some(first) = items.first() else {
        return Vec::new();
    };
    let dof = first.dof();
    let mut sum = vec![0.0; dof];
    let mut count = 0usize;
    for s in items {
        for r in s.rows() {
            for (acc, v) in sum.iter_mut().zip(r) {
                *acc += v;
            }
            count += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut var = vec![0.0; dof];
    for s in items {
        for r in s.rows() {
            for c in 0..dof {
                var[c] += (r[c] - mean[c]).powi(2);
            }
        }
    }
    let sd: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = (v / count as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    items
        .iter()
        .map(|s| {
            let rows: Vec<Vec<f64>> = s
                .rows()
                .map(|r| (0..dof).map(|c| (r[c] - mean[c]) / sd[c]).collect())
                .collect();
            Series::from_rows(&rows).expect("same shape as input")
        })
        .collect()
}

/// Pairwise divergences between named series.
pub fn divergence_matrix_of(
    ids: &[String],
    items: &[&Series],
    opts: DivergenceOptions,
) -> Result<DivergenceMatrix> {
    let k = items.len();
    if k == 0 {
        return Err(Error::Empty("divergence input"));
    }
    if ids.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: ids.len(),
        });
    }
    let normalized;
    let items: Vec<&Series> = if opts.z_normalize {
        normalized = z_normalize(items);
        normalized.iter().collect()
    } else {
        items.to_vec()
    };

    let features: Option<Vec<BezierFeature>> = match opts.measure {
        Measure::BezierEuclid => Some(
            items
                .iter()
                .zip(ids)
                .map(|(s, id)| {
                    fit_cubic_bezier(s).map_err(|e| Error::Pair {
                        left: id.clone(),
                        right: id.clone(),
                        source: Box::new(e),
                    })
                })
                .collect::<Result<_>>()?,
        ),
        Measure::NormalizedDtw => None,
    };

    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let compute = |&(i, j): &(usize, usize)| -> Result<(f64, bool)> {
        let r = match &features {
            Some(f) => bezier_divergence(&f[i], &f[j]).map(|v| (v, false)),
            None => bidirectional_divergence(items[i], items[j]),
        };
        r.map_err(|e| Error::Pair {
            left: ids[i].clone(),
            right: ids[j].clone(),
            source: Box::new(e),
        })
    };
    let results: Vec<Result<(f64, bool)>> = match opts.threads {
        Some(1) => pairs.iter().map(compute).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(|| pairs.par_iter().map(compute).collect()),
        None => pairs.par_iter().map(compute).collect(),
    };

    let mut values = vec![0.0; k * k];
    let mut reversed = vec![false; k * k];
    for (&(i, j), r) in pairs.iter().zip(results) {
        let (v, rev) = r?;
        values[i * k + j] = v;
        values[j * k + i] = v;
        reversed[i * k + j] = rev;
        reversed[j * k + i] = rev;
    }
    Ok(DivergenceMatrix {
        ids: ids.to_vec(),
        values,
        reversed,
        measure: opts.measure,
        z_normalized: opts.z_normalize,
        source_hash: None,
    })
}

/// Pairwise divergences between all segments of a dataset.
pub fn divergence_matrix(d: &Dataset, opts: DivergenceOptions) -> Result<DivergenceMatrix> {
    let items: Vec<&Series> = d.trajectories().map(|t| t.samples()).collect();
    let mut m = divergence_matrix_of(&d.ids(), &items, opts)?;
    m.source_hash = Some(crate::io::dataset_hash(d));
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::dtw::normalized_dtw;
    use crate::divergence::dtw::tests::random_series;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(k: usize) -> (Vec<String>, Vec<Series>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let series = (0..k).map(|i| random_series(&mut rng, 10 + i, 3)).collect();
        ((0..k).map(|i| format!("m{i}")).collect(), series)
    }

    #[test]
    fn singleton_is_zero() {
        let (ids, s) = sample(1);
        let m = divergence_matrix_of(&ids, &[&s[0]], DivergenceOptions::default()).unwrap();
        assert_eq!(m.rows(), vec![vec![0.0]]);
    }

    #[test]
    fn matches_pairwise_calls() {
        let (ids, s) = sample(3);
        let refs: Vec<&Series> = s.iter().collect();
        let m = divergence_matrix_of(&ids, &refs, DivergenceOptions::default()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j {
                    0.0
                } else {
                    normalized_dtw(&s[i], &s[j])
                        .unwrap()
                        .min(normalized_dtw(&s[i], &s[j].reversed()).unwrap())
                };
                assert_eq!(m.get(i, j), m.get(j, i));
                assert!((m.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parallel_and_serial_are_identical() {
        let (ids, s) = sample(9);
        let refs: Vec<&Series> = s.iter().collect();
        let serial = divergence_matrix_of(
            &ids,
            &refs,
            DivergenceOptions {
                threads: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        let parallel = divergence_matrix_of(
            &ids,
            &refs,
            DivergenceOptions {
                threads: Some(4),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn save_and_load() {
        let (ids, s) = sample(4);
        let refs: Vec<&Series> = s.iter().collect();
        let mut m = divergence_matrix_of(&ids, &refs, DivergenceOptions::default()).unwrap();
        m.source_hash = Some("abc".into());
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path(), "divergence").unwrap();
        assert_eq!(DivergenceMatrix::load(dir.path(), "divergence").unwrap(), m);
    }

    #[test]
    fn rejects_bad_tables() {
        let ids = vec!["a".to_string(), "b".to_string()];
        assert!(DivergenceMatrix::from_values(
            ids.clone(),
            vec![vec![0.0, 1.0], vec![2.0, 0.0]],
            Measure::NormalizedDtw
        )
        .is_err());
        assert!(DivergenceMatrix::from_values(
            ids.clone(),
            vec![vec![0.0, -1.0], vec![-1.0, 0.0]],
            Measure::NormalizedDtw
        )
        .is_err());
        assert!(DivergenceMatrix::from_values(
            ids,
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            Measure::NormalizedDtw
        )
        .is_ok());
    }

    #[test]
    fn bezier_measure_and_pair_errors() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let a = Series::univariate(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let b = Series::univariate(&[0.0, 1.0, 2.0]).unwrap();
        let err = divergence_matrix_of(
            &ids,
            &[&a, &b],
            DivergenceOptions {
                measure: Measure::BezierEuclid,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("(b, b)"));
    }

    #[test]
    fn z_normalization_standardizes_channels() {
        let a = Series::from_rows(&[[0.0, 10.0], [2.0, 30.0]]).unwrap();
        let z = z_normalize(&[&a]);
        assert_eq!(z[0].column(0), vec![-1.0, 1.0]);
        assert_eq!(z[0].column(1), vec![-1.0, 1.0]);
    }
}
