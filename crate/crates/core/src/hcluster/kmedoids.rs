use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::divergence::DivergenceMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 10;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMedoidsResult {
    /// Cluster label per item, numbered by first appearance.
    pub assignment: Vec<usize>,
    /// Medoid item index per label.
    pub medoids: Vec<usize>,
    pub objective: f64,
    /// Objective after each assignment step of the winning restart.
    pub objective_history: Vec<f64>,
    pub restart_objectives: Vec<f64>,
    pub best_restart: usize,
}

struct Run {
    medoids: Vec<usize>,
    nearest: Vec<usize>,
    objective: f64,
    history: Vec<f64>,
}

fn assign(m: &DivergenceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let n = m.len();
    let mut nearest = vec![0; n];
    let mut total = 0.0;
    for (item, slot) in nearest.iter_mut().enumerate() {
        if let Some(own) = medoids.iter().position(|&x| x == item) {
            *slot = own;
            continue;
        }
        let mut best = (f64::INFINITY, 0);
        for (c, &med) in medoids.iter().enumerate() {
            let d = m.get(item, med);
            if d < best.0 {
                best = (d, c);
            }
        }
        *slot = best.1;
        total += best.0;
    }
    (nearest, total)
}

fn run(m: &DivergenceMatrix, mut medoids: Vec<usize>) -> Run {
    let n = m.len();
    let mut history = Vec::new();
    let (mut nearest, mut objective) = assign(m, &medoids);
    history.push(objective);
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (c, med) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| nearest[i] == c).collect();
            let cost = |cand: usize| members.iter().map(|&i| m.get(cand, i)).sum::<f64>();
            let mut best = (cost(*med), *med);
            for &cand in &members {
                let v = cost(cand);
                if v < best.0 {
                    best = (v, cand);
                }
            }
            if best.1 != *med {
                *med = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let (next, obj) = assign(m, &medoids);
        nearest = next;
        objective = obj;
        history.push(objective);
    }
    Run {
        medoids,
        nearest,
        objective,
        history,
    }
}

/// PAM-style alternation between nearest-medoid assignment and medoid
/// re-selection, keeping the best of `restarts` random initializations.
///
/// Restart `r` draws its initial medoids from stream `r` of a ChaCha
/// generator seeded with `seed`, so results do not depend on scheduling.
pub fn k_medoids(
    m: &DivergenceMatrix,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<KMedoidsResult> {
    let n = m.len();
    if k < 1 || k > n {
        return Err(Error::OutOfRange {
            what: "cluster count",
            value: k,
            min: 1,
            max: n,
        });
    }
    if restarts == 0 {
        return Err(Error::invalid("k-medoids needs at least one restart"));
    }
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let init = rand::seq::index::sample(&mut rng, n, k).into_vec();
            run(m, init)
        })
        .collect();

    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.objective < runs[best].objective {
            best = r;
        }
    }
    let restart_objectives = runs.iter().map(|r| r.objective).collect();
    let winner = &runs[best];

    let mut relabel = vec![usize::MAX; k];
    let mut medoids = Vec::with_capacity(k);
    let assignment = winner
        .nearest
        .iter()
        .map(|&c| {
            if relabel[c] == usize::MAX {
                relabel[c] = medoids.len();
                medoids.push(winner.medoids[c]);
            }
            relabel[c]
        })
        .collect();

    Ok(KMedoidsResult {
        assignment,
        medoids,
        objective: winner.objective,
        objective_history: winner.history.clone(),
        restart_objectives,
        best_restart: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcluster::ward::tests::euclidean_matrix;
    use rand::Rng;

    #[test]
    fn k_equals_size_gives_zero_objective() {
        let m = euclidean_matrix(&[vec![0.0], vec![1.0], vec![4.0]]);
        let r = k_medoids(&m, 3, 10, 1).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.assignment, vec![0, 1, 2]);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        for center in [0.0, 50.0] {
            for _ in 0..10 {
                pts.push(vec![
                    center + rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]);
            }
        }
        let m = euclidean_matrix(&pts);
        let r = k_medoids(&m, 2, 10, 42).unwrap();
        assert!(r.assignment[..10].iter().all(|&c| c == 0));
        assert!(r.assignment[10..].iter().all(|&c| c == 1));
        assert!(r.restart_objectives.iter().all(|&o| r.objective <= o));
        assert!(r.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
        let m = euclidean_matrix(&pts);
        assert_eq!(
            k_medoids(&m, 4, 10, 7).unwrap(),
            k_medoids(&m, 4, 10, 7).unwrap()
        );
    }

    #[test]
    fn out_of_range() {
        let m = euclidean_matrix(&[vec![0.0], vec![1.0]]);
        assert!(k_medoids(&m, 0, 10, 1).is_err());
        assert!(k_medoids(&m, 3, 10, 1).is_err());
    }
}
