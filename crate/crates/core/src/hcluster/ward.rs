use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceMatrix;
use crate::error::{Error, Result};
use crate::io::{read_json, write_file, write_json};

/// How input divergences enter the Lance-Williams recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WardInput {
    /// Divergences are treated as Euclidean distances and squared first.
    #[default]
    Squared,
    /// Divergences are used as squared distances directly.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Node ids: leaves are `0..k`, merge `t` creates node `k + t`.
    pub left: usize,
    pub right: usize,
    /// Increase in within-cluster sum of squares caused by the merge.
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaf_ids: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn leaf_count(&self) -> usize {
        self.leaf_ids.len()
    }

    /// Checks the merge-list invariants.
    pub fn validate(&self) -> Result<()> {
        let k = self.leaf_count();
        if k == 0 {
            return Err(Error::Empty("dendrogram"));
        }
        if self.merges.len() != k - 1 {
            return Err(Error::invalid(format!(
                "{} leaves need {} merges, found {}",
                k,
                k - 1,
                self.merges.len()
            )));
        }
        let mut used = vec![false; 2 * k - 1];
        let mut sizes: Vec<usize> = vec![1; k];
        for (t, m) in self.merges.iter().enumerate() {
            let node = k + t;
            for child in [m.left, m.right] {
                if child >= node || used[child] {
                    return Err(Error::invalid(format!(
                        "merge {t}: node {child} is not available"
                    )));
                }
                used[child] = true;
            }
            if !(m.height.is_finite() && m.height >= 0.0) {
                return Err(Error::invalid(format!(
                    "merge {t}: invalid height {}",
                    m.height
                )));
            }
            let size = sizes[m.left] + sizes[m.right];
            if size != m.size {
                return Err(Error::invalid(format!(
                    "merge {t}: size {} should be {size}",
                    m.size
                )));
            }
            sizes.push(size);
        }
        Ok(())
    }

    /// Leaf indices under each node, for every node id.
    pub fn node_members(&self) -> Vec<Vec<usize>> {
        let k = self.leaf_count();
        let mut members: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
        for m in &self.merges {
            let mut joined = members[m.left].clone();
            joined.extend(&members[m.right]);
            joined.sort_unstable();
            members.push(joined);
        }
        members
    }

    /// Newick text with branch lengths equal to height differences.
    pub fn to_newick(&self) -> String {
        let k = self.leaf_count();
        let height = |node: usize| {
            if node < k {
                0.0
            } else {
                self.merges[node - k].height
            }
        };
        fn label(s: &str) -> String {
            s.chars()
                .map(|c| if "(),:;[] \t\n'".contains(c) { '_' } else { c })
                .collect()
        }
        fn render(d: &Dendrogram, node: usize, k: usize, height: &dyn Fn(usize) -> f64) -> String {
            if node < k {
                return label(&d.leaf_ids[node]);
            }
            let m = &d.merges[node - k];
            format!(
                "({}:{},{}:{})",
                render(d, m.left, k, height),
                m.height - height(m.left),
                render(d, m.right, k, height),
                m.height - height(m.right)
            )
        }
        if k == 1 {
            return format!("{};", label(&self.leaf_ids[0]));
        }
        format!("{};", render(self, 2 * k - 2, k, &height))
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        write_json(&dir.join(format!("{stem}.json")), self)?;
        write_file(
            &dir.join(format!("{stem}.nwk")),
            format!("{}\n", self.to_newick()),
        )
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.json"));
        let d: Dendrogram = read_json(&path)?;
        d.validate().map_err(|e| Error::parse(&path, e))?;
        Ok(d)
    }
}

pub fn ward_cluster(m: &DivergenceMatrix) -> Result<Dendrogram> {
    ward_cluster_with(m, WardInput::default())
}

/// Agglomerative clustering with Ward's criterion.
///
/// Cluster dissimilarities are kept as twice the Ward merge cost and updated
/// with the Lance-Williams recurrence, so the recorded height is
/// `SS(a ∪ b) - SS(a) - SS(b)`. Ties go to the pair with the lowest
/// smallest-leaf indices.
pub fn ward_cluster_with(m: &DivergenceMatrix, input: WardInput) -> Result<Dendrogram> {
    let k = m.len();
    if k < 2 {
        return Err(Error::invalid("Ward clustering needs at least two items"));
    }
    for i in 0..k {
        for j in 0..k {
            let v = m.get(i, j);
            if v < 0.0 || !v.is_finite() || v != m.get(j, i) {
                return Err(Error::invalid(format!(
                    "divergence ({i}, {j}) = {v} is negative, non-finite or asymmetric"
                )));
            }
        }
    }
    let mut dist: Vec<f64> = (0..k * k)
        .map(|x| {
            let v = m.get(x / k, x % k);
            match input {
                WardInput::Squared => v * v,
                WardInput::Raw => v,
            }
        })
        .collect();

    // Slot `i` holds the active cluster whose smallest leaf is `i`.
    let mut active = vec![true; k];
    let mut node: Vec<usize> = (0..k).collect();
    let mut size = vec![1usize; k];
    let mut merges = Vec::with_capacity(k - 1);

    for t in 0..k - 1 {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in 0..k {
            if !active[i] {
                continue;
            }
            for j in i + 1..k {
                if active[j] && dist[i * k + j] < best.0 {
                    best = (dist[i * k + j], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for l in 0..k {
            if !active[l] || l == i || l == j {
                continue;
            }
            let nl = size[l] as f64;
            let v = ((ni + nl) * dist[i * k + l] + (nj + nl) * dist[j * k + l] - nl * dij)
                / (ni + nj + nl);
            dist[i * k + l] = v;
            dist[l * k + i] = v;
        }
        merges.push(Merge {
            left: node[i],
            right: node[j],
            height: dij / 2.0,
            size: size[i] + size[j],
        });
        active[j] = false;
        size[i] += size[j];
        node[i] = k + t;
    }

    Ok(Dendrogram {
        leaf_ids: m.ids().to_vec(),
        merges,
    })
}

/// Flat clustering with exactly `clusters` groups, obtained by undoing the
/// last `clusters - 1` merges. Labels are numbered by smallest leaf.
pub fn cut(d: &Dendrogram, clusters: usize) -> Result<Vec<usize>> {
    let k = d.leaf_count();
    if clusters < 1 || clusters > k {
        return Err(Error::OutOfRange {
            what: "cluster count",
            value: clusters,
            min: 1,
            max: k,
        });
    }
    let mut parent: Vec<usize> = (0..2 * k - 1).collect();
    for (t, m) in d.merges.iter().take(k - clusters).enumerate() {
        parent[m.left] = k + t;
        parent[m.right] = k + t;
    }
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut label_of_root = std::collections::HashMap::new();
    (0..k)
        .map(|leaf| {
            let r = root(&mut parent, leaf);
            let next = label_of_root.len();
            Ok(*label_of_root.entry(r).or_insert(next))
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::divergence::Measure;

    pub fn euclidean_matrix(points: &[Vec<f64>]) -> DivergenceMatrix {
        let rows = points
            .iter()
            .map(|p| {
                points
                    .iter()
                    .map(|q| {
                        p.iter()
                            .zip(q)
                            .map(|(a, b)| (a - b).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect();
        DivergenceMatrix::from_values(
            (0..points.len()).map(|i| format!("p{i}")).collect(),
            rows,
            Measure::NormalizedDtw,
        )
        .unwrap()
    }

    #[test]
    fn two_leaves_merge_at_half_squared_distance() {
        let m = euclidean_matrix(&[vec![0.0], vec![3.0]]);
        let d = ward_cluster(&m).unwrap();
        // Centroid halfway: SS = 2 * 1.5^2 = 4.5.
        assert_eq!(
            d.merges,
            vec![Merge {
                left: 0,
                right: 1,
                height: 4.5,
                size: 2
            }]
        );
    }

    #[test]
    fn line_points_merge_in_pairs() {
        let m = euclidean_matrix(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]);
        let d = ward_cluster(&m).unwrap();
        let pairs: Vec<(usize, usize)> = d.merges.iter().map(|m| (m.left, m.right)).collect();
        assert_eq!(pairs, vec![(0, 1), (2, 3), (4, 5)]);
        assert_eq!(d.merges[0].height, 0.5);
        assert_eq!(d.merges[1].height, 0.5);
        // Centroids 0.5 and 10.5, two points each: 2*2/4 * 100 = 100.
        assert!((d.merges[2].height - 100.0).abs() < 1e-12);
        assert_eq!(cut(&d, 2).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(cut(&d, 1).unwrap(), vec![0; 4]);
        assert_eq!(cut(&d, 4).unwrap(), vec![0, 1, 2, 3]);
        assert!(cut(&d, 0).is_err());
        assert!(cut(&d, 5).is_err());
    }

    #[test]
    fn duplicates_merge_first_at_zero() {
        let m = euclidean_matrix(&[vec![0.0], vec![5.0], vec![5.0], vec![9.0]]);
        let d = ward_cluster(&m).unwrap();
        assert_eq!(
            (d.merges[0].left, d.merges[0].right, d.merges[0].height),
            (1, 2, 0.0)
        );
    }

    #[test]
    fn raw_mode_skips_squaring() {
        let m = euclidean_matrix(&[vec![0.0], vec![3.0]]);
        let d = ward_cluster_with(&m, WardInput::Raw).unwrap();
        assert_eq!(d.merges[0].height, 1.5);
    }

    #[test]
    fn newick_and_round_trip() {
        let m = euclidean_matrix(&[vec![0.0], vec![1.0], vec![10.0]]);
        let d = ward_cluster(&m).unwrap();
        d.validate().unwrap();
        let nwk = d.to_newick();
        assert!(nwk.starts_with("((p0:0.5,p1:0.5):"));
        assert!(nwk.ends_with(";"));
        let dir = tempfile::tempdir().unwrap();
        d.save(dir.path(), "dendrogram").unwrap();
        assert_eq!(Dendrogram::load(dir.path(), "dendrogram").unwrap(), d);
    }

    #[test]
    fn validate_rejects_reused_nodes() {
        let d = Dendrogram {
            leaf_ids: vec!["a".into(), "b".into(), "c".into()],
            merges: vec![
                Merge {
                    left: 0,
                    right: 1,
                    height: 1.0,
                    size: 2,
                },
                Merge {
                    left: 0,
                    right: 2,
                    height: 2.0,
                    size: 2,
                },
            ],
        };
        assert!(d.validate().is_err());
    }
}
